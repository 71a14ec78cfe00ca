use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;
use tracing::{debug, warn};

use super::protocol::{Control, InboundMsg};
use super::snapshot::Snapshot;
use crate::fixation::{DwellConfig, DwellDetector, FixationError, GazeSample};
use crate::geometry::{
    CalibrationError, Frame, Homography, InterfaceCalibration, Point2, Rect, interface_to_robot,
};
use crate::interaction::{
    EngineState, FsmState, InteractionContext, InteractionError, MenuChoice, MenuConfig, MenuSelector,
    on_action_complete, on_choice, on_fixation,
};
use crate::robot::{ActionOutcome, ArmConfig, Robot, RobotCommand, RobotError, Scene};

/// Gap inserted when a sample arrives with a timestamp that does not advance.
const RESTAMP_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Fixation(#[from] FixationError),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error("invalid engine parameter `{0}`")]
    InvalidConfig(&'static str),
    #[error("camera-frame gaze received but no camera homography is set")]
    NoHomography,
    #[error("robot-frame gaze is not accepted")]
    UnsupportedFrame,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EngineConfig {
    pub calib: InterfaceCalibration,
    pub dwell: DwellConfig,
    pub menu: MenuConfig,
    pub arm: ArmConfig,
    /// Hz.
    pub tick_rate: f64,
    /// Block starting position and place target, robot cm.
    pub scene: Scene,
    pub bounce_seed: u64,
}

/// Workspace rectangle expressed in robot cm.
pub fn robot_workspace(ctx: &InteractionContext) -> Rect {
    let ws = ctx.workspace_px;
    Rect::spanning(interface_to_robot(&ctx.affine, ws.min), interface_to_robot(&ctx.affine, ws.max))
}

impl EngineConfig {
    /// Defaults around `calib`; the scene is empty until [`Self::with_scene`].
    pub fn new(calib: InterfaceCalibration) -> Result<Self, EngineError> {
        let ctx = InteractionContext::new(calib.clone(), MenuConfig::default())?;
        let ws = robot_workspace(&ctx);
        let c = ws.center();
        Ok(EngineConfig {
            calib,
            dwell: DwellConfig::default(),
            menu: MenuConfig::default(),
            arm: ArmConfig::with_workspace(ws),
            tick_rate: 50.0,
            scene: Scene::new(c, c, 5.0, 6.0),
            bounce_seed: 0,
        })
    }

    pub fn with_scene(mut self, scene: Scene) -> Self {
        self.scene = scene;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.calib.validate()?;
        self.dwell.validate()?;
        self.arm.validate()?;
        if !(self.tick_rate.is_finite() && self.tick_rate > 0.0) {
            return Err(EngineError::InvalidConfig("tick_rate"));
        }
        let m = &self.menu;
        if !(m.inner_radius >= 0.0 && m.outer_radius > m.inner_radius && m.select_dwell > 0.0 && m.timeout > 0.0) {
            return Err(EngineError::InvalidConfig("menu"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineEvent {
    Fixation { centroid: Point2, t: f64 },
    FixationRejected { centroid: Point2 },
    Choice { value: MenuChoice },
    ChoiceRejected { value: MenuChoice },
    MenuTimeout,
    Dispatched { command: RobotCommand },
    Outcome { outcome: ActionOutcome },
    Reset,
}

/// Owns every piece of mutable interaction and robot state. All input goes
/// through [`Engine::handle`]; time only advances in [`Engine::tick`].
#[derive(Debug)]
pub struct Engine {
    cfg: EngineConfig,
    ctx: InteractionContext,
    camera_h: Option<Homography>,
    detector: DwellDetector,
    selector: MenuSelector,
    robot: Robot,
    state: EngineState,
    ticks: u64,
    seq: u64,
    paused: bool,
    buffered: VecDeque<InboundMsg>,
    menu_opened: f64,
    last_gaze_t: Option<f64>,
    events: Vec<EngineEvent>,
    tick_event: Option<EngineEvent>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let ctx = InteractionContext::new(cfg.calib.clone(), cfg.menu)?;
        let detector = DwellDetector::new(cfg.dwell)?;
        let selector = MenuSelector::new(cfg.menu.select_dwell, cfg.dwell.sample_rate);
        let robot = Robot::new(cfg.arm.clone(), cfg.scene, cfg.bounce_seed)?;
        Ok(Engine {
            cfg,
            ctx,
            camera_h: None,
            detector,
            selector,
            robot,
            state: EngineState::initial(),
            ticks: 0,
            seq: 0,
            paused: false,
            buffered: VecDeque::new(),
            menu_opened: 0.0,
            last_gaze_t: None,
            events: Vec::new(),
            tick_event: None,
        })
    }

    /// Camera px → interface px, used for camera-frame gaze.
    pub fn set_camera_homography(&mut self, h: Option<Homography>) {
        self.camera_h = h;
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn context(&self) -> &InteractionContext {
        &self.ctx
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn robot(&self) -> &Robot {
        &self.robot
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Engine clock at the start of the next tick.
    pub fn t(&self) -> f64 {
        self.ticks as f64 / self.cfg.tick_rate
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.cfg.tick_rate
    }

    /// Idle robot and observing FSM.
    pub fn is_quiescent(&self) -> bool {
        self.robot.is_idle() && self.state.fsm == FsmState::Observation
    }

    /// Events since the last call, oldest first.
    pub fn drain_events(&mut self) -> Vec<EngineEvent> {
        std::mem::take(&mut self.events)
    }

    fn emit(&mut self, e: EngineEvent) {
        debug!(?e, t = self.t(), "engine event");
        self.events.push(e);
        self.tick_event = Some(e);
    }

    pub fn handle(&mut self, msg: InboundMsg) -> Result<(), EngineError> {
        if let InboundMsg::Control(c) = msg {
            self.control(c);
            return Ok(());
        }
        if self.paused {
            self.buffered.push_back(msg);
            return Ok(());
        }
        self.apply(msg)
    }

    fn control(&mut self, c: Control) {
        match c {
            Control::Pause => self.paused = true,
            Control::Resume => {
                self.paused = false;
                while let Some(m) = self.buffered.pop_front() {
                    if let Err(e) = self.apply(m) {
                        warn!(%e, "buffered message dropped");
                    }
                }
            }
            Control::Reset => {
                self.buffered.clear();
                self.robot.reset();
                self.state = EngineState::initial();
                self.detector.reset();
                self.selector.clear();
                self.emit(EngineEvent::Reset);
            }
        }
    }

    fn apply(&mut self, msg: InboundMsg) -> Result<(), EngineError> {
        match msg {
            InboundMsg::Gaze { t, p, frame, valid } => {
                let p = if !valid {
                    p
                } else {
                    match frame {
                        Frame::Interface => p,
                        Frame::Camera => match &self.camera_h {
                            Some(h) => match h.apply(p) {
                                Ok(q) => q,
                                Err(e) => {
                                    warn!(%e, "camera sample not mappable, treated as tracking loss");
                                    return self.gaze(GazeSample::lost(t));
                                }
                            },
                            None => return Err(EngineError::NoHomography),
                        },
                        Frame::Robot => return Err(EngineError::UnsupportedFrame),
                    }
                };
                let s = if valid { GazeSample::new(t, p) } else { GazeSample::lost(t) };
                self.gaze(s)
            }
            InboundMsg::Choice(ch) => {
                self.choose(ch);
                Ok(())
            }
            InboundMsg::Control(c) => {
                self.control(c);
                Ok(())
            }
        }
    }

    fn gaze(&mut self, mut s: GazeSample) -> Result<(), EngineError> {
        if !s.t.is_finite() {
            warn!("non-finite gaze timestamp dropped");
            return Ok(());
        }
        if let Some(prev) = self.last_gaze_t {
            if s.t <= prev {
                warn!(t = s.t, prev, "gaze timestamp re-stamped");
                s.t = prev + RESTAMP_STEP;
            }
        }
        self.last_gaze_t = Some(s.t);
        match self.state.fsm {
            FsmState::Observation => {
                let Some(ev) = self.detector.push_sample(s)? else { return Ok(()) };
                match on_fixation(&self.state, &ev, &self.ctx) {
                    Ok(next) => {
                        self.state = next;
                        self.menu_opened = self.t();
                        self.selector.clear();
                        self.emit(EngineEvent::Fixation { centroid: ev.centroid, t: ev.end_t });
                    }
                    Err(_) => {
                        self.detector.reset();
                        self.emit(EngineEvent::FixationRejected { centroid: ev.centroid });
                    }
                }
            }
            FsmState::Menu => {
                let layout = self.state.menu.expect("menu shown in S1");
                if let Some(ch) = self.selector.push(&s, &layout) {
                    self.choose(ch);
                }
            }
            // the arm is busy; gaze has no effect until it finishes
            FsmState::Move | FsmState::Pick | FsmState::Place => {}
        }
        Ok(())
    }

    fn choose(&mut self, ch: MenuChoice) {
        match on_choice(&self.state, ch, &self.ctx) {
            Ok((next, cmd)) => {
                self.emit(EngineEvent::Choice { value: ch });
                if let Some(cmd) = cmd {
                    if let Err(e) = self.robot.dispatch(cmd) {
                        warn!(%e, "command refused by the arm");
                        self.state = EngineState { holding: self.state.holding, ..EngineState::initial() };
                        self.detector.reset();
                        return;
                    }
                    self.emit(EngineEvent::Dispatched { command: cmd });
                }
                self.state = next;
                self.selector.clear();
                if self.state.fsm == FsmState::Observation {
                    self.detector.reset();
                }
            }
            Err(InteractionError::InvalidChoice { .. }) | Err(_) => {
                self.emit(EngineEvent::ChoiceRejected { value: ch });
            }
        }
    }

    /// One fixed step: menu timeout, robot motion, clock. Returns the
    /// snapshot published for this tick.
    pub fn tick(&mut self) -> Result<Snapshot, EngineError> {
        if !self.paused {
            if self.state.fsm == FsmState::Menu && self.t() - self.menu_opened >= self.cfg.menu.timeout - 1e-9 {
                self.state = EngineState { holding: self.state.holding, ..EngineState::initial() };
                self.selector.clear();
                self.detector.reset();
                self.emit(EngineEvent::MenuTimeout);
            }
            if let Some(outcome) = self.robot.tick(self.dt())? {
                match on_action_complete(&self.state, &outcome) {
                    Ok(next) => self.state = next,
                    Err(e) => {
                        warn!(%e, "outcome without a matching action state");
                        self.state = EngineState { holding: self.state.holding, ..EngineState::initial() };
                    }
                }
                self.detector.reset();
                self.selector.clear();
                self.emit(EngineEvent::Outcome { outcome });
            }
            self.ticks += 1;
        }
        self.seq += 1;
        let snap = self.snapshot();
        self.tick_event = None;
        Ok(snap)
    }

    /// Current state as a snapshot carrying the latest published `seq`.
    pub fn snapshot(&self) -> Snapshot {
        let dwell = match self.state.fsm {
            FsmState::Observation => self.detector.progress(),
            FsmState::Menu => self.selector.progress(),
            _ => 0.0,
        };
        Snapshot::capture(self.seq, self.t(), &self.state, &self.robot, dwell, self.tick_event)
    }
}
