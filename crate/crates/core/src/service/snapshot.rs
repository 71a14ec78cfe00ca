use serde::Serialize;

use super::engine::EngineEvent;
use super::protocol::PROTOCOL_VERSION;
use crate::interaction::{EngineState, FsmState, MenuLayout};
use crate::robot::{Gripper, Phase, Robot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmSummary {
    pub ee: [f64; 3],
    pub gripper: Gripper,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SceneSummary {
    pub block: [f64; 2],
    pub attached: bool,
    /// Place target `[x, y, radius]`.
    pub target: [f64; 3],
}

/// Immutable copy of the engine state after one tick. Arm and scene
/// coordinates are robot cm, cursor and menu interface px.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub seq: u64,
    pub t: f64,
    pub fsm: FsmState,
    pub cursor: Option<[f64; 2]>,
    pub menu: Option<MenuLayout>,
    pub holding: bool,
    pub arm: ArmSummary,
    pub scene: SceneSummary,
    pub event: Option<EngineEvent>,
    /// Progress of the dwell currently accumulating, 0–1.
    pub dwell: f64,
}

impl Snapshot {
    pub(crate) fn capture(
        seq: u64,
        t: f64,
        state: &EngineState,
        robot: &Robot,
        dwell: f64,
        event: Option<EngineEvent>,
    ) -> Self {
        let arm = robot.arm();
        let scene = robot.scene();
        Snapshot {
            v: PROTOCOL_VERSION,
            kind: "snapshot",
            seq,
            t,
            fsm: state.fsm,
            cursor: state.cursor.map(|c| [c.x, c.y]),
            menu: state.menu,
            holding: state.holding,
            arm: ArmSummary { ee: [arm.ee.x, arm.ee.y, arm.ee.z], gripper: arm.gripper, phase: arm.phase },
            scene: SceneSummary {
                block: [scene.block.center.x, scene.block.center.y],
                attached: scene.block.attached,
                target: [scene.place_target.center.x, scene.place_target.center.y, scene.place_target.radius],
            },
            event,
            dwell,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}
