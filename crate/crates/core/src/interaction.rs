//! Menu interaction state machine.
//!
//! ```text
//!            fixation in workspace            CH = MOVE
//!   S0 ────────────────────────────▶ S1 ─────────────────▶ A1 ─┐
//!   ▲                                │  CH = PICK (¬holding)    │
//!   │          CH = CANCEL / timeout │ ───────────────────▶ A2 ─┤ action
//!   ├────────────────────────────────┘  CH = PLACE (holding)    │ complete
//!   │                                   ───────────────────▶ A3 ─┤
//!   └────────────────────────────────────────────────────────────┘
//! ```
//!
//! The functions here are pure: they take a state and an event and return the
//! next state. The engine owns the detectors and timers that produce events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixation::{FixationEvent, GazeSample};
use crate::geometry::{
    AffineInterfaceToRobot, CalibrationError, InterfaceCalibration, Point2, Rect, build_affine,
    interface_to_robot,
};
use crate::robot::{ActionOutcome, OutcomeKind, RobotCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmState {
    #[serde(rename = "S0")]
    Observation,
    #[serde(rename = "S1")]
    Menu,
    #[serde(rename = "A1")]
    Move,
    #[serde(rename = "A2")]
    Pick,
    #[serde(rename = "A3")]
    Place,
}

impl FsmState {
    pub const ALL: [FsmState; 5] = [FsmState::Observation, FsmState::Menu, FsmState::Move, FsmState::Pick, FsmState::Place];

    pub fn code(&self) -> &'static str {
        match self {
            FsmState::Observation => "S0",
            FsmState::Menu => "S1",
            FsmState::Move => "A1",
            FsmState::Pick => "A2",
            FsmState::Place => "A3",
        }
    }

    pub fn is_action(&self) -> bool {
        matches!(self, FsmState::Move | FsmState::Pick | FsmState::Place)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MenuChoice {
    Move,
    Pick,
    Place,
    Cancel,
}

impl MenuChoice {
    pub const ALL: [MenuChoice; 4] = [MenuChoice::Move, MenuChoice::Pick, MenuChoice::Place, MenuChoice::Cancel];

    pub fn available(&self, holding: bool) -> bool {
        match self {
            MenuChoice::Pick => !holding,
            MenuChoice::Place => holding,
            MenuChoice::Move | MenuChoice::Cancel => true,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MenuChoice::Move => "move",
            MenuChoice::Pick => "pick",
            MenuChoice::Place => "place",
            MenuChoice::Cancel => "cancel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuConfig {
    /// Interface px; gaze inside this radius selects nothing.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Seconds of gaze on one option to select it.
    pub select_dwell: f64,
    /// Seconds in S1 without a selection before auto-cancel.
    pub timeout: f64,
}

impl Default for MenuConfig {
    fn default() -> Self {
        MenuConfig { inner_radius: 30.0, outer_radius: 120.0, select_dwell: 1.0, timeout: 10.0 }
    }
}

/// One option: an annular sector `[start_deg, start_deg + sweep_deg)`.
/// Angles follow `atan2(dy, dx)` in interface px (y grows downward), so
/// 270° points up on screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuOption {
    pub choice: MenuChoice,
    pub start_deg: f64,
    pub sweep_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuLayout {
    pub center: Point2,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub options: [MenuOption; 3],
}

impl MenuLayout {
    /// MOVE above the cursor, PICK/PLACE lower right, CANCEL lower left.
    pub fn around(center: Point2, holding: bool, cfg: &MenuConfig) -> Self {
        let second = if holding { MenuChoice::Place } else { MenuChoice::Pick };
        MenuLayout {
            center,
            inner_radius: cfg.inner_radius,
            outer_radius: cfg.outer_radius,
            options: [
                MenuOption { choice: MenuChoice::Move, start_deg: 210.0, sweep_deg: 120.0 },
                MenuOption { choice: second, start_deg: 330.0, sweep_deg: 120.0 },
                MenuOption { choice: MenuChoice::Cancel, start_deg: 90.0, sweep_deg: 120.0 },
            ],
        }
    }

    pub fn offers(&self, choice: MenuChoice) -> bool {
        self.options.iter().any(|o| o.choice == choice)
    }

    /// Option whose sector contains `p`, if any.
    pub fn hit(&self, p: Point2) -> Option<MenuChoice> {
        let d = p - self.center;
        let r = d.norm();
        if r < self.inner_radius || r > self.outer_radius {
            return None;
        }
        let angle = d.y.atan2(d.x).to_degrees().rem_euclid(360.0);
        self.options
            .iter()
            .find(|o| (angle - o.start_deg).rem_euclid(360.0) < o.sweep_deg)
            .map(|o| o.choice)
    }

    /// Middle of an option's sector, interface px.
    pub fn option_center(&self, choice: MenuChoice) -> Option<Point2> {
        let o = self.options.iter().find(|o| o.choice == choice)?;
        let a = (o.start_deg + o.sweep_deg / 2.0).to_radians();
        let r = (self.inner_radius + self.outer_radius) / 2.0;
        Some(self.center + Point2::new(r * a.cos(), r * a.sin()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub fsm: FsmState,
    pub holding: bool,
    /// Interface px.
    pub cursor: Option<Point2>,
    /// Robot cm.
    pub target_robot: Option<Point2>,
    pub menu: Option<MenuLayout>,
}

impl EngineState {
    pub fn initial() -> Self {
        EngineState { fsm: FsmState::Observation, holding: false, cursor: None, target_robot: None, menu: None }
    }

    /// Checks the structural invariants; returns the first violation.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.cursor.is_some() != (self.fsm != FsmState::Observation) {
            return Err("cursor present iff not observing");
        }
        if self.target_robot.is_some() != self.fsm.is_action() {
            return Err("robot target present iff acting");
        }
        if self.menu.is_some() != (self.fsm == FsmState::Menu) {
            return Err("menu shown iff in S1");
        }
        if let Some(m) = &self.menu {
            if m.offers(MenuChoice::Pick) && m.offers(MenuChoice::Place) {
                return Err("menu offers both pick and place");
            }
            if !m.offers(if self.holding { MenuChoice::Place } else { MenuChoice::Pick }) {
                return Err("menu does not match holding flag");
            }
        }
        Ok(())
    }
}

impl Default for EngineState {
    fn default() -> Self {
        Self::initial()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InteractionError {
    #[error("fixation at ({x:.1}, {y:.1}) px is outside the workspace", x = .0.x, y = .0.y)]
    OutsideWorkspace(Point2),
    #[error("choice {choice:?} is not available in {state:?} (holding = {holding})")]
    InvalidChoice { choice: MenuChoice, state: FsmState, holding: bool },
    #[error("event `{event}` does not apply in {state:?}")]
    InvalidEvent { state: FsmState, event: &'static str },
}

/// Static context shared by the transition functions.
#[derive(Debug, Clone)]
pub struct InteractionContext {
    pub calib: InterfaceCalibration,
    pub affine: AffineInterfaceToRobot,
    pub workspace_px: Rect,
    pub menu: MenuConfig,
}

impl InteractionContext {
    pub fn new(calib: InterfaceCalibration, menu: MenuConfig) -> Result<Self, CalibrationError> {
        let affine = build_affine(&calib)?;
        let workspace_px = calib.workspace_px();
        Ok(InteractionContext { calib, affine, workspace_px, menu })
    }
}

pub fn on_fixation(
    state: &EngineState,
    e: &FixationEvent,
    ctx: &InteractionContext,
) -> Result<EngineState, InteractionError> {
    if state.fsm != FsmState::Observation {
        return Err(InteractionError::InvalidEvent { state: state.fsm, event: "fixation" });
    }
    if !ctx.workspace_px.contains(e.centroid) {
        return Err(InteractionError::OutsideWorkspace(e.centroid));
    }
    Ok(EngineState {
        fsm: FsmState::Menu,
        holding: state.holding,
        cursor: Some(e.centroid),
        target_robot: None,
        menu: Some(MenuLayout::around(e.centroid, state.holding, &ctx.menu)),
    })
}

pub fn on_choice(
    state: &EngineState,
    ch: MenuChoice,
    ctx: &InteractionContext,
) -> Result<(EngineState, Option<RobotCommand>), InteractionError> {
    let invalid = || InteractionError::InvalidChoice { choice: ch, state: state.fsm, holding: state.holding };
    if state.fsm != FsmState::Menu || !ch.available(state.holding) {
        return Err(invalid());
    }
    let cursor = state.cursor.ok_or_else(invalid)?;
    if ch == MenuChoice::Cancel {
        return Ok((EngineState { holding: state.holding, ..EngineState::initial() }, None));
    }
    let target = interface_to_robot(&ctx.affine, cursor);
    let (fsm, cmd) = match ch {
        MenuChoice::Move => (FsmState::Move, RobotCommand::Move(target)),
        MenuChoice::Pick => (FsmState::Pick, RobotCommand::Pick(target)),
        MenuChoice::Place => (FsmState::Place, RobotCommand::Place(target)),
        MenuChoice::Cancel => unreachable!(),
    };
    let next = EngineState { fsm, holding: state.holding, cursor: Some(cursor), target_robot: Some(target), menu: None };
    Ok((next, Some(cmd)))
}

pub fn on_action_complete(state: &EngineState, outcome: &ActionOutcome) -> Result<EngineState, InteractionError> {
    let expected = match state.fsm {
        FsmState::Move => OutcomeKind::MoveDone,
        FsmState::Pick => OutcomeKind::PickDone,
        FsmState::Place => OutcomeKind::PlaceDone,
        _ => return Err(InteractionError::InvalidEvent { state: state.fsm, event: "action_complete" }),
    };
    if outcome.kind != expected {
        return Err(InteractionError::InvalidEvent { state: state.fsm, event: "action_complete" });
    }
    let holding = match outcome.kind {
        OutcomeKind::MoveDone => state.holding,
        OutcomeKind::PickDone => outcome.success == Some(true),
        OutcomeKind::PlaceDone => false,
    };
    Ok(EngineState { holding, ..EngineState::initial() })
}

/// Dwell on one menu option, measured the same way as fixation dwell: a run
/// of consecutive samples inside the same sector covering `select_dwell`.
#[derive(Debug, Clone)]
pub struct MenuSelector {
    select_dwell: f64,
    sample_period: f64,
    current: Option<(MenuChoice, f64, f64)>,
}

impl MenuSelector {
    pub fn new(select_dwell: f64, sample_rate: f64) -> Self {
        MenuSelector { select_dwell, sample_period: 1.0 / sample_rate, current: None }
    }

    pub fn clear(&mut self) {
        self.current = None;
    }

    pub fn progress(&self) -> f64 {
        match self.current {
            Some((_, start, last)) => ((last - start + self.sample_period) / self.select_dwell).clamp(0.0, 1.0),
            None => 0.0,
        }
    }

    pub fn push(&mut self, s: &GazeSample, layout: &MenuLayout) -> Option<MenuChoice> {
        let hit = if s.valid { layout.hit(s.p) } else { None };
        let Some(choice) = hit else {
            self.current = None;
            return None;
        };
        let start = match self.current {
            Some((c, start, _)) if c == choice => start,
            _ => s.t,
        };
        self.current = Some((choice, start, s.t));
        if s.t - start + self.sample_period + 1e-9 >= self.select_dwell {
            self.current = None;
            return Some(choice);
        }
        None
    }
}
