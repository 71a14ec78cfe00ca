//! Engine host: the fixed-rate loop that turns inbound messages into FSM and
//! robot updates and publishes a [`Snapshot`] per tick.
//!
//! Network handlers never touch the [`Engine`]. They push into an
//! [`InboundQueue`], which the loop drains at the start of every tick.

mod engine;
mod protocol;
mod snapshot;

pub use engine::{Engine, EngineConfig, EngineError, EngineEvent, robot_workspace};
pub use protocol::{BAD_MESSAGE_REPLY, Control, InboundMsg, PROTOCOL_VERSION, ProtocolError, parse_inbound};
pub use snapshot::{ArmSummary, SceneSummary, Snapshot};

use std::collections::VecDeque;
use std::sync::Mutex;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use tracing::warn;

use crate::fixation::GazeSample;
use crate::geometry::Frame;

pub const QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Queued,
    /// Queue full; the oldest queued gaze sample was discarded.
    DroppedOldestGaze,
    /// Queue full of non-gaze messages; the incoming gaze sample was discarded.
    DroppedIncoming,
}

/// Bounded multi-producer queue. Gaze samples are shed under pressure,
/// choice and control messages never are.
#[derive(Debug)]
pub struct InboundQueue {
    capacity: usize,
    inner: Mutex<VecDeque<InboundMsg>>,
}

impl Default for InboundQueue {
    fn default() -> Self {
        Self::new(QUEUE_CAPACITY)
    }
}

impl InboundQueue {
    pub fn new(capacity: usize) -> Self {
        InboundQueue { capacity: capacity.max(1), inner: Mutex::new(VecDeque::with_capacity(capacity)) }
    }

    pub fn push(&self, msg: InboundMsg) -> PushOutcome {
        let mut q = self.inner.lock().expect("queue lock");
        if q.len() < self.capacity {
            q.push_back(msg);
            return PushOutcome::Queued;
        }
        if let Some(i) = q.iter().position(InboundMsg::is_gaze) {
            q.remove(i);
            q.push_back(msg);
            PushOutcome::DroppedOldestGaze
        } else if msg.is_gaze() {
            PushOutcome::DroppedIncoming
        } else {
            q.push_back(msg);
            PushOutcome::Queued
        }
    }

    pub fn drain(&self) -> Vec<InboundMsg> {
        self.inner.lock().expect("queue lock").drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub enum Poll {
    Messages(Vec<InboundMsg>),
    Exhausted,
}

/// Where the loop gets its input each tick.
pub trait InboundSource {
    /// Messages for the tick starting at engine time `t`.
    fn poll(&mut self, t: f64, dt: f64) -> Poll;
}

impl InboundSource for &InboundQueue {
    fn poll(&mut self, _t: f64, _dt: f64) -> Poll {
        Poll::Messages(self.drain())
    }
}

/// Recorded samples, each delivered in the tick whose start is nearest to its
/// timestamp.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    frame: Frame,
    samples: VecDeque<GazeSample>,
}

impl ReplaySource {
    pub fn new(frame: Frame, samples: impl IntoIterator<Item = GazeSample>) -> Self {
        ReplaySource { frame, samples: samples.into_iter().collect() }
    }
}

impl InboundSource for ReplaySource {
    fn poll(&mut self, t: f64, dt: f64) -> Poll {
        if self.samples.is_empty() {
            return Poll::Exhausted;
        }
        let mut out = Vec::new();
        while let Some(s) = self.samples.front() {
            if s.t >= t + dt / 2.0 {
                break;
            }
            let s = self.samples.pop_front().expect("front exists");
            out.push(InboundMsg::Gaze { t: s.t, p: s.p, frame: self.frame, valid: s.valid });
        }
        Poll::Messages(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// Sleep so ticks follow the wall clock.
    RealTime,
    /// Headless: tick as fast as possible.
    Unpaced,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoopExit {
    Shutdown(Snapshot),
    /// The source ran dry and the arm finished its last action.
    SourceExhausted(Snapshot),
}

/// Runs until `shutdown` is set or the source is exhausted. `publish`
/// receives every tick's snapshot along with the events raised in it.
pub fn run_loop(
    engine: &mut Engine,
    source: &mut impl InboundSource,
    pacing: Pacing,
    shutdown: &AtomicBool,
    mut publish: impl FnMut(&Snapshot, Vec<EngineEvent>),
) -> Result<LoopExit, EngineError> {
    let dt = engine.dt();
    let start = Instant::now();
    let mut exhausted = false;
    loop {
        if shutdown.load(Ordering::Relaxed) {
            return Ok(LoopExit::Shutdown(engine.snapshot()));
        }
        if !exhausted {
            match source.poll(engine.t(), dt) {
                Poll::Messages(msgs) => {
                    for m in msgs {
                        if let Err(e) = engine.handle(m) {
                            warn!(%e, "inbound message rejected");
                        }
                    }
                }
                Poll::Exhausted => exhausted = true,
            }
        }
        if exhausted && engine.robot().is_idle() {
            return Ok(LoopExit::SourceExhausted(engine.snapshot()));
        }
        let snap = engine.tick()?;
        publish(&snap, engine.drain_events());
        if pacing == Pacing::RealTime {
            let due = start + Duration::from_secs_f64(snap.seq as f64 * dt);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{InterfaceCalibration, Point2};
    use crate::interaction::{FsmState, MenuChoice};

    fn gaze(t: f64) -> InboundMsg {
        InboundMsg::Gaze { t, p: Point2::ORIGIN, frame: Frame::Interface, valid: true }
    }

    #[test]
    fn queue_sheds_oldest_gaze_only() {
        let q = InboundQueue::new(3);
        assert_eq!(q.push(gaze(0.0)), PushOutcome::Queued);
        assert_eq!(q.push(InboundMsg::Choice(MenuChoice::Move)), PushOutcome::Queued);
        assert_eq!(q.push(gaze(1.0)), PushOutcome::Queued);
        assert_eq!(q.push(gaze(2.0)), PushOutcome::DroppedOldestGaze);
        assert_eq!(q.drain(), vec![InboundMsg::Choice(MenuChoice::Move), gaze(1.0), gaze(2.0)]);

        let q = InboundQueue::new(2);
        q.push(InboundMsg::Control(Control::Pause));
        q.push(InboundMsg::Control(Control::Resume));
        assert_eq!(q.push(gaze(0.0)), PushOutcome::DroppedIncoming);
        assert_eq!(q.push(InboundMsg::Control(Control::Reset)), PushOutcome::Queued);
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn replay_loop_ends_after_source() {
        let mut e = Engine::new(EngineConfig::new(InterfaceCalibration::reference()).unwrap()).unwrap();
        let p = e.context().workspace_px.center();
        let samples: Vec<_> = (0..100).map(|k| GazeSample::new(k as f64 / 50.0, p)).collect();
        let mut src = ReplaySource::new(Frame::Interface, samples);
        let mut fsm = Vec::new();
        let stop = AtomicBool::new(false);
        let exit = run_loop(&mut e, &mut src, Pacing::Unpaced, &stop, |s, _| fsm.push(s.fsm)).unwrap();
        assert_eq!(fsm.len(), 100);
        assert_eq!(fsm[98], FsmState::Observation);
        assert_eq!(fsm[99], FsmState::Menu);
        match exit {
            LoopExit::SourceExhausted(s) => assert_eq!(s.seq, 100),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shutdown_flag_stops_loop() {
        let mut e = Engine::new(EngineConfig::new(InterfaceCalibration::reference()).unwrap()).unwrap();
        let q = InboundQueue::default();
        let stop = AtomicBool::new(false);
        let mut n = 0;
        let exit = run_loop(&mut e, &mut &q, Pacing::Unpaced, &stop, |_, _| {
            n += 1;
            if n == 10 {
                stop.store(true, Ordering::Relaxed);
            }
        })
        .unwrap();
        assert!(matches!(exit, LoopExit::Shutdown(s) if s.seq == 10));
    }
}
