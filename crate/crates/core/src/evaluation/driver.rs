//! Runs scripted trials on a fresh engine and turns the engine's events into
//! records. Replay goes through the same event-to-record path.

use std::fmt::Write as _;

use super::records::{Experiment, PlaceFlag, TrialRecord};
use super::{EvalError, EngineSetup};
use crate::fixation::GazeSample;
use crate::gaze_sources::{GazeNoise, SyntheticCamera, TraceSegment, project_to_camera};
use crate::geometry::{Frame, Homography, Point2, robot_to_interface};
use crate::interaction::{FsmState, MenuChoice};
use crate::robot::{ActionOutcome, OutcomeKind};
use crate::service::{Engine, EngineEvent, InboundMsg};

pub(crate) const RECENTER_S: f64 = 0.6;
pub(crate) const FIXATE_TIMEOUT_S: f64 = 6.0;
pub(crate) const SELECT_TIMEOUT_S: f64 = 3.0;
pub(crate) const ACTION_TIMEOUT_S: f64 = 60.0;
pub(crate) const MAX_ATTEMPTS: u64 = 5;

/// Everything about a trial group that is not in its gaze samples.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GroupMeta {
    pub experiment: Experiment,
    pub subject: u32,
    pub rep: u32,
    pub point_id: String,
    pub target: Point2,
    pub seed: u64,
    /// Added to the realized point of a robot trial, cm.
    pub offset: Point2,
    pub discarded: bool,
    /// Camera px → interface px, when samples are in the camera frame.
    pub h: Option<Homography>,
}

impl GroupMeta {
    pub fn header(&self) -> String {
        let mut s = format!(
            "experiment={} subject={} rep={} point_id={} target={},{} seed={} offset={},{} discarded={}",
            self.experiment.as_str(),
            self.subject,
            self.rep,
            self.point_id,
            self.target.x,
            self.target.y,
            self.seed,
            self.offset.x,
            self.offset.y,
            u8::from(self.discarded),
        );
        if let Some(h) = &self.h {
            let m = h.matrix();
            let vals: Vec<String> = m.iter().flatten().map(|v| v.to_string()).collect();
            let _ = write!(s, " h={}", vals.join(","));
        }
        s
    }

    pub fn parse(header: &str) -> Result<Self, String> {
        let mut experiment = None;
        let mut subject = None;
        let mut rep = None;
        let mut point_id = None;
        let mut target = None;
        let mut seed = None;
        let mut offset = None;
        let mut discarded = None;
        let mut h = None;
        for tok in header.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| format!("token `{tok}` is not key=value"))?;
            let pair = |v: &str| -> Result<Point2, String> {
                let (a, b) = v.split_once(',').ok_or_else(|| format!("`{v}` is not x,y"))?;
                Ok(Point2::new(num(a)?, num(b)?))
            };
            match k {
                "experiment" => experiment = Some(Experiment::parse(v).ok_or_else(|| format!("unknown experiment `{v}`"))?),
                "subject" => subject = Some(v.parse().map_err(|_| format!("bad subject `{v}`"))?),
                "rep" => rep = Some(v.parse().map_err(|_| format!("bad rep `{v}`"))?),
                "point_id" => point_id = Some(v.to_string()),
                "target" => target = Some(pair(v)?),
                "seed" => seed = Some(v.parse().map_err(|_| format!("bad seed `{v}`"))?),
                "offset" => offset = Some(pair(v)?),
                "discarded" => discarded = Some(v == "1"),
                "h" => {
                    let vals = v.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
                    if vals.len() != 9 {
                        return Err("h needs 9 entries".into());
                    }
                    let m = std::array::from_fn(|i| std::array::from_fn(|j| vals[3 * i + j]));
                    h = Some(Homography::from_matrix(m).map_err(|e| e.to_string())?);
                }
                _ => {}
            }
        }
        let missing = |k: &str| format!("missing `{k}`");
        Ok(GroupMeta {
            experiment: experiment.ok_or_else(|| missing("experiment"))?,
            subject: subject.ok_or_else(|| missing("subject"))?,
            rep: rep.ok_or_else(|| missing("rep"))?,
            point_id: point_id.ok_or_else(|| missing("point_id"))?,
            target: target.ok_or_else(|| missing("target"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            offset: offset.unwrap_or(Point2::ORIGIN),
            discarded: discarded.unwrap_or(false),
            h,
        })
    }
}

fn num(s: &str) -> Result<f64, String> {
    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("bad number `{s}`"))
}

/// One engine driven tick by tick, with at most one gaze sample per tick.
pub(crate) struct Session {
    pub engine: Engine,
    camera: Option<SyntheticCamera>,
    samples: Option<Vec<GazeSample>>,
    pub events: Vec<EngineEvent>,
    mark: usize,
}

impl Session {
    pub fn new(setup: &EngineSetup, meta: &GroupMeta, camera: Option<SyntheticCamera>, record: bool) -> Result<Self, EvalError> {
        let mut engine = Engine::new(setup.engine_config(meta.seed)?)?;
        engine.set_camera_homography(meta.h);
        Ok(Session { engine, camera, samples: record.then(Vec::new), events: Vec::new(), mark: 0 })
    }

    fn rate(&self) -> f64 {
        self.engine.config().tick_rate
    }

    pub fn ticks_for(&self, seconds: f64) -> usize {
        (seconds * self.rate()).round() as usize
    }

    /// Pushes gaze at `surface` (cm) if given, then ticks. Returns the events
    /// raised in this tick.
    pub fn step(&mut self, surface: Option<Point2>) -> Result<&[EngineEvent], EvalError> {
        if let Some(p) = surface {
            let t = self.engine.t();
            let calib = &self.engine.config().calib;
            let (sample, frame) = match &self.camera {
                Some(cam) => match project_to_camera(cam, p) {
                    Ok(px) => (GazeSample::new(t, px), Frame::Camera),
                    Err(_) => (GazeSample::lost(t), Frame::Camera),
                },
                None => (GazeSample::new(t, calib.surface_to_interface(p)), Frame::Interface),
            };
            self.engine.handle(InboundMsg::Gaze { t: sample.t, p: sample.p, frame, valid: sample.valid })?;
            if let Some(v) = self.samples.as_mut() {
                v.push(sample);
            }
        }
        self.engine.tick()?;
        let start = self.events.len();
        self.events.extend(self.engine.drain_events());
        Ok(&self.events[start..])
    }

    pub fn into_segment(self, meta: &GroupMeta) -> Option<TraceSegment> {
        self.samples.map(|samples| TraceSegment { header: Some(meta.header()), samples })
    }

    /// Look at `recenter`, then at `target`, until a fixation is accepted.
    pub fn fixate(&mut self, noise: &mut GazeNoise, target: Point2, recenter: Point2) -> Result<bool, EvalError> {
        for _ in 0..self.ticks_for(RECENTER_S) {
            let p = recenter + noise.next_offset();
            if self.step(Some(p))?.iter().any(|e| matches!(e, EngineEvent::Fixation { .. })) {
                return Ok(false);
            }
        }
        for _ in 0..self.ticks_for(FIXATE_TIMEOUT_S) {
            let p = target + noise.next_offset();
            if self.step(Some(p))?.iter().any(|e| matches!(e, EngineEvent::Fixation { .. })) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Look at the sector of `choice` until the engine selects it. The action
    /// outcome may arrive in the same tick; [`Session::settle`] sees it.
    pub fn select(&mut self, noise: &mut GazeNoise, choice: MenuChoice) -> Result<bool, EvalError> {
        let calib = self.engine.config().calib.clone();
        let Some(opt) = self.engine.state().menu.and_then(|m| m.option_center(choice)) else {
            return Ok(false);
        };
        let aim = calib.interface_to_surface(opt);
        self.mark = self.events.len();
        for _ in 0..self.ticks_for(SELECT_TIMEOUT_S) {
            let p = aim + noise.next_jitter();
            let evs = self.step(Some(p))?;
            if evs.iter().any(|e| matches!(e, EngineEvent::Choice { value } if *value == choice)) {
                return Ok(true);
            }
            if self.engine.state().fsm != FsmState::Menu {
                return Ok(false);
            }
        }
        Ok(false)
    }

    /// Ticks without gaze until the running action reports.
    pub fn settle(&mut self) -> Result<Option<ActionOutcome>, EvalError> {
        let early = self.events[self.mark..].iter().find_map(|e| match e {
            EngineEvent::Outcome { outcome } => Some(*outcome),
            _ => None,
        });
        if early.is_some() {
            return Ok(early);
        }
        for _ in 0..self.ticks_for(ACTION_TIMEOUT_S) {
            for e in self.step(None)? {
                if let EngineEvent::Outcome { outcome } = e {
                    return Ok(Some(*outcome));
                }
            }
        }
        Ok(None)
    }

    /// Ticks without gaze until the engine is back in S0 with an idle arm.
    pub fn abandon(&mut self) -> Result<(), EvalError> {
        let limit = self.ticks_for(ACTION_TIMEOUT_S);
        for _ in 0..limit {
            if self.engine.is_quiescent() {
                return Ok(());
            }
            self.step(None)?;
        }
        Ok(())
    }
}

/// Record of a group from the events its engine raised.
pub(crate) fn record_from_events(
    meta: &GroupMeta,
    events: &[EngineEvent],
    setup: &EngineSetup,
) -> Result<TrialRecord, EvalError> {
    let incomplete = || EvalError::Incomplete { subject: meta.subject, point_id: meta.point_id.clone(), rep: meta.rep };
    let calib = &setup.calib;
    let affine = crate::geometry::build_affine(calib)?;
    let to_surface = |ee: Point2| calib.interface_to_surface(robot_to_interface(&affine, ee));
    let outcome = |kind: OutcomeKind| {
        events.iter().find_map(|e| match e {
            EngineEvent::Outcome { outcome } if outcome.kind == kind => Some(*outcome),
            _ => None,
        })
    };
    let mut rec = match meta.experiment {
        Experiment::Accuracy => {
            let c = events
                .iter()
                .find_map(|e| if let EngineEvent::Fixation { centroid, .. } = e { Some(*centroid) } else { None })
                .ok_or_else(incomplete)?;
            TrialRecord::new(meta.experiment, meta.subject, &meta.point_id, meta.target, calib.interface_to_surface(c))
        }
        Experiment::RobotAccuracy => {
            let o = outcome(OutcomeKind::MoveDone).ok_or_else(incomplete)?;
            TrialRecord::new(meta.experiment, meta.subject, &meta.point_id, meta.target, to_surface(o.final_ee) + meta.offset)
        }
        Experiment::PickPlace => {
            let pick = outcome(OutcomeKind::PickDone).ok_or_else(incomplete)?;
            let mut r = TrialRecord::new(meta.experiment, meta.subject, &meta.point_id, meta.target, to_surface(pick.final_ee));
            let picked = pick.success == Some(true);
            r.pick = Some(picked);
            r.place = if picked {
                PlaceFlag::Done(outcome(OutcomeKind::PlaceDone).ok_or_else(incomplete)?.success == Some(true))
            } else {
                PlaceFlag::Null
            };
            r
        }
    };
    rec.discarded = meta.discarded;
    Ok(rec)
}
