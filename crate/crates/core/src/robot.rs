//! Simulated arm, gripper and scene.
//!
//! The arm is 2.5-D: the end-effector follows straight-line segments in
//! (x, y, z) at a fixed speed, orientation never changes, and the vertical
//! motions of pick and place are scripted. Each tick has a time budget of
//! `dt` that is spent on the queued steps in order; time left over after a
//! step completes carries into the next step of the same plan, and whatever
//! remains when the plan empties is dropped.
//!
//! All coordinates are robot-frame centimetres.

use std::collections::VecDeque;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Rect};
use crate::seed::{SimRng, rng_from_seed};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    fn distance(&self, o: &Vec3) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RobotCommand {
    Move(Point2),
    Pick(Point2),
    Place(Point2),
}

impl RobotCommand {
    pub fn target(&self) -> Point2 {
        match *self {
            RobotCommand::Move(p) | RobotCommand::Pick(p) | RobotCommand::Place(p) => p,
        }
    }

    pub fn kind(&self) -> OutcomeKind {
        match self {
            RobotCommand::Move(_) => OutcomeKind::MoveDone,
            RobotCommand::Pick(_) => OutcomeKind::PickDone,
            RobotCommand::Place(_) => OutcomeKind::PlaceDone,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gripper {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Translating,
    Descending,
    Actuating,
    Ascending,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Translate(Vec3),
    Close { remaining: f64 },
    Open { remaining: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub ee: Vec3,
    pub gripper: Gripper,
    pub phase: Phase,
    pub plan: VecDeque<Step>,
    active: Option<RobotCommand>,
}

impl ArmState {
    pub fn active_command(&self) -> Option<RobotCommand> {
        self.active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub center: Point2,
    pub side: f64,
    pub attached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaceTarget {
    pub center: Point2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub block: Block,
    pub pick_point: Point2,
    pub place_target: PlaceTarget,
    /// Block center minus gripper position, fixed at grasp time.
    pub carry_offset: Option<Point2>,
}

impl Scene {
    pub fn new(pick_point: Point2, place_target: Point2, block_side: f64, target_radius: f64) -> Self {
        Scene {
            block: Block { center: pick_point, side: block_side, attached: false },
            pick_point,
            place_target: PlaceTarget { center: place_target, radius: target_radius },
            carry_offset: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    MoveDone,
    PickDone,
    PlaceDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub kind: OutcomeKind,
    /// `None` for moves.
    pub success: Option<bool>,
    pub final_ee: Point2,
    /// Gripper-to-block offset of a pick (block center minus gripper).
    pub grasp_offset: Option<Point2>,
    /// Successful grasp whose centerline falls outside the block's inscribed
    /// circle, i.e. toward a corner.
    pub marginal: bool,
    /// Block center after a release.
    pub block_final: Option<Point2>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspCheck {
    pub success: bool,
    pub marginal: bool,
    pub offset: Point2,
}

/// Gripper centerline must fall on the block footprint (∞-norm test).
pub fn grasp_check(ee_xy: Point2, scene: &Scene) -> GraspCheck {
    let offset = scene.block.center - ee_xy;
    let half = scene.block.side / 2.0;
    let success = offset.norm_inf() <= half;
    GraspCheck { success, marginal: success && offset.norm() > half, offset }
}

/// Where the block comes to rest after a release.
pub fn released_block_center(release_xy: Point2, scene: &Scene, bounce_offset: Point2) -> Point2 {
    release_xy + scene.carry_offset.unwrap_or(Point2::ORIGIN) + bounce_offset
}

/// The block lies completely inside the target circle: its circumscribed
/// circle does. Boundary inclusive.
pub fn place_check(release_xy: Point2, scene: &Scene, bounce_offset: Point2) -> bool {
    let final_center = released_block_center(release_xy, scene, bounce_offset);
    let circumradius = scene.block.side * std::f64::consts::SQRT_2 / 2.0;
    final_center.distance(scene.place_target.center) + circumradius <= scene.place_target.radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub z_hover: f64,
    pub z_grasp: f64,
    pub z_release: f64,
    pub z_surface: f64,
    /// cm/s along every segment.
    pub max_speed: f64,
    /// Seconds to close or open the gripper.
    pub actuation_time: f64,
    /// Bounce standard deviation per cm of release height.
    pub bounce_sigma_per_cm: f64,
    /// Reachable planar area (robot frame).
    pub workspace: Rect,
    pub margin: f64,
    pub home: Point2,
}

impl ArmConfig {
    pub fn with_workspace(workspace: Rect) -> Self {
        ArmConfig {
            z_hover: 15.0,
            z_grasp: 2.0,
            z_release: 2.0,
            z_surface: 0.0,
            max_speed: 25.0,
            actuation_time: 0.5,
            bounce_sigma_per_cm: 0.2,
            workspace,
            margin: 5.0,
            home: workspace.center(),
        }
    }

    pub fn bounce_sigma(&self) -> f64 {
        self.bounce_sigma_per_cm * (self.z_release - self.z_surface)
    }

    pub fn reach(&self) -> Rect {
        self.workspace.inflate(self.margin)
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        let ok = self.z_surface <= self.z_grasp
            && self.z_surface <= self.z_release
            && self.z_grasp <= self.z_hover
            && self.z_release <= self.z_hover
            && self.max_speed > 0.0
            && self.actuation_time >= 0.0
            && self.bounce_sigma_per_cm >= 0.0
            && self.margin >= 0.0
            && self.reach().contains(self.home);
        if ok { Ok(()) } else { Err(RobotError::InvalidConfig) }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobotError {
    #[error("arm is busy ({0:?})")]
    Busy(Phase),
    #[error("target ({x:.3}, {y:.3}) cm is outside the robot workspace", x = .0.x, y = .0.y)]
    OutOfWorkspace(Point2),
    #[error("dt must be positive")]
    InvalidDt,
    #[error("inconsistent arm configuration")]
    InvalidConfig,
}

#[derive(Debug, Clone)]
pub struct Robot {
    cfg: ArmConfig,
    arm: ArmState,
    scene: Scene,
    initial_scene: Scene,
    bounce_rng: SimRng,
    next_bounce: Option<Point2>,
    // results of the actuation step, reported when the plan empties
    grasp: Option<GraspCheck>,
    release: Option<(bool, Option<Point2>)>,
}

impl Robot {
    pub fn new(cfg: ArmConfig, scene: Scene, bounce_seed: u64) -> Result<Self, RobotError> {
        cfg.validate()?;
        let arm = ArmState {
            ee: Vec3::new(cfg.home.x, cfg.home.y, cfg.z_hover),
            gripper: Gripper::Open,
            phase: Phase::Idle,
            plan: VecDeque::new(),
            active: None,
        };
        Ok(Robot { cfg, arm, initial_scene: scene, scene, bounce_rng: rng_from_seed(bounce_seed), next_bounce: None, grasp: None, release: None })
    }

    pub fn config(&self) -> &ArmConfig {
        &self.cfg
    }

    pub fn arm(&self) -> &ArmState {
        &self.arm
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn is_idle(&self) -> bool {
        self.arm.phase == Phase::Idle
    }

    /// Arm to home, gripper open, scene as constructed.
    pub fn reset(&mut self) {
        self.arm.ee = Vec3::new(self.cfg.home.x, self.cfg.home.y, self.cfg.z_hover);
        self.arm.gripper = Gripper::Open;
        self.arm.phase = Phase::Idle;
        self.arm.plan.clear();
        self.arm.active = None;
        self.scene = self.initial_scene;
        self.next_bounce = None;
        self.grasp = None;
        self.release = None;
    }

    pub fn reseed_bounce(&mut self, seed: u64) {
        self.bounce_rng = rng_from_seed(seed);
    }

    /// Uses `offset` for the next release instead of drawing one.
    pub fn set_next_bounce(&mut self, offset: Point2) {
        self.next_bounce = Some(offset);
    }

    pub fn dispatch(&mut self, cmd: RobotCommand) -> Result<(), RobotError> {
        if self.arm.phase != Phase::Idle {
            return Err(RobotError::Busy(self.arm.phase));
        }
        let t = cmd.target();
        if !t.is_finite() || !self.cfg.reach().contains(t) {
            return Err(RobotError::OutOfWorkspace(t));
        }
        let c = &self.cfg;
        let above = Vec3::new(t.x, t.y, c.z_hover);
        let plan = &mut self.arm.plan;
        plan.push_back(Step::Translate(above));
        match cmd {
            RobotCommand::Move(_) => {}
            RobotCommand::Pick(_) => {
                plan.push_back(Step::Translate(Vec3::new(t.x, t.y, c.z_grasp)));
                plan.push_back(Step::Close { remaining: c.actuation_time });
                plan.push_back(Step::Translate(above));
            }
            RobotCommand::Place(_) => {
                plan.push_back(Step::Translate(Vec3::new(t.x, t.y, c.z_release)));
                plan.push_back(Step::Open { remaining: c.actuation_time });
                plan.push_back(Step::Translate(above));
            }
        }
        self.arm.active = Some(cmd);
        self.arm.phase = self.phase_of_front();
        Ok(())
    }

    fn phase_of_front(&self) -> Phase {
        match self.arm.plan.front() {
            None => Phase::Idle,
            Some(Step::Close { .. } | Step::Open { .. }) => Phase::Actuating,
            Some(Step::Translate(to)) => {
                let ee = self.arm.ee;
                if (to.x - ee.x).abs() > EPS || (to.y - ee.y).abs() > EPS {
                    Phase::Translating
                } else if to.z < ee.z {
                    Phase::Descending
                } else {
                    Phase::Ascending
                }
            }
        }
    }

    fn draw_bounce(&mut self) -> Point2 {
        if let Some(b) = self.next_bounce.take() {
            return b;
        }
        let sigma = self.cfg.bounce_sigma();
        if sigma <= 0.0 {
            return Point2::ORIGIN;
        }
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        let dx = n.sample(&mut self.bounce_rng);
        let dy = n.sample(&mut self.bounce_rng);
        Point2::new(dx, dy)
    }

    /// Advances the arm by `dt` seconds. Returns the outcome in the tick in
    /// which the plan empties.
    pub fn tick(&mut self, dt: f64) -> Result<Option<ActionOutcome>, RobotError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RobotError::InvalidDt);
        }
        let Some(cmd) = self.arm.active else {
            return Ok(None);
        };
        let mut budget = dt;

        while budget > EPS {
            let Some(step) = self.arm.plan.front_mut() else { break };
            match step {
                Step::Translate(to) => {
                    let to = *to;
                    let dist = self.arm.ee.distance(&to);
                    let needed = dist / self.cfg.max_speed;
                    if needed <= budget {
                        self.arm.ee = to;
                        budget -= needed;
                        self.arm.plan.pop_front();
                    } else {
                        let f = self.cfg.max_speed * budget / dist;
                        let ee = self.arm.ee;
                        self.arm.ee =
                            Vec3::new(ee.x + (to.x - ee.x) * f, ee.y + (to.y - ee.y) * f, ee.z + (to.z - ee.z) * f);
                        budget = 0.0;
                    }
                }
                Step::Close { remaining } | Step::Open { remaining } => {
                    if *remaining <= budget + EPS {
                        budget -= (*remaining).min(budget);
                        let closing = matches!(step, Step::Close { .. });
                        self.arm.plan.pop_front();
                        if closing {
                            let g = grasp_check(self.arm.ee.xy(), &self.scene);
                            self.arm.gripper = Gripper::Closed;
                            if g.success {
                                self.scene.block.attached = true;
                                self.scene.carry_offset = Some(g.offset);
                            }
                            self.grasp = Some(g);
                        } else {
                            self.arm.gripper = Gripper::Open;
                            if self.scene.block.attached {
                                let bounce = self.draw_bounce();
                                let release = self.arm.ee.xy();
                                let ok = place_check(release, &self.scene, bounce);
                                let fin = released_block_center(release, &self.scene, bounce);
                                self.scene.block.center = fin;
                                self.scene.block.attached = false;
                                self.scene.carry_offset = None;
                                self.release = Some((ok, Some(fin)));
                            } else {
                                self.release = Some((false, None));
                            }
                        }
                    } else {
                        *remaining -= budget;
                        budget = 0.0;
                    }
                }
            }
            if self.scene.block.attached {
                let off = self.scene.carry_offset.unwrap_or(Point2::ORIGIN);
                self.scene.block.center = self.arm.ee.xy() + off;
            }
        }
        if self.scene.block.attached {
            let off = self.scene.carry_offset.unwrap_or(Point2::ORIGIN);
            self.scene.block.center = self.arm.ee.xy() + off;
        }

        self.arm.phase = self.phase_of_front();
        if !self.arm.plan.is_empty() {
            return Ok(None);
        }
        self.arm.active = None;
        let final_ee = self.arm.ee.xy();
        let outcome = match cmd {
            RobotCommand::Move(_) => ActionOutcome {
                kind: OutcomeKind::MoveDone,
                success: None,
                final_ee,
                grasp_offset: None,
                marginal: false,
                block_final: None,
            },
            RobotCommand::Pick(_) => {
                let g = self.grasp.take().expect("pick plan closes the gripper");
                ActionOutcome {
                    kind: OutcomeKind::PickDone,
                    success: Some(g.success),
                    final_ee,
                    grasp_offset: Some(g.offset),
                    marginal: g.marginal,
                    block_final: None,
                }
            }
            RobotCommand::Place(_) => {
                let (ok, block_final) = self.release.take().expect("place plan opens the gripper");
                ActionOutcome {
                    kind: OutcomeKind::PlaceDone,
                    success: Some(ok),
                    final_ee,
                    grasp_offset: None,
                    marginal: false,
                    block_final,
                }
            }
        };
        Ok(Some(outcome))
    }
}

/// Straight-line length of the plan `cmd` starting from `ee` (cm).
pub fn plan_length(cfg: &ArmConfig, ee: Vec3, cmd: RobotCommand) -> f64 {
    let t = cmd.target();
    let above = Vec3::new(t.x, t.y, cfg.z_hover);
    let travel = ee.distance(&above);
    match cmd {
        RobotCommand::Move(_) => travel,
        RobotCommand::Pick(_) => travel + 2.0 * (cfg.z_hover - cfg.z_grasp),
        RobotCommand::Place(_) => travel + 2.0 * (cfg.z_hover - cfg.z_release),
    }
}
