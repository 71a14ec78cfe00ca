//! Headless reproductions of the three experiments: gaze accuracy on a 3×3
//! grid, robot positioning accuracy (MOVE to each grid point), and
//! pick-and-place from point 10 to point 12.
//!
//! Every trial runs the full loop on its own [`Engine`]: synthetic gaze on
//! the surface → synthetic camera → marker homography → dwell fixation →
//! menu dwell → arm. Trial seeds are derived from `(master seed, subject,
//! point, rep)`, so results do not depend on scheduling and trials run in
//! parallel.

mod driver;
mod records;

pub use records::{
    Experiment, OVERALL_ID, PickPlaceRates, PlaceFlag, PointStats, RESULTS_HEADER, STATS_HEADER, Summary, TrialRecord,
    export_csv, import_csv, pick_place_rates, read_records, summarize, write_records, write_stats,
};

use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fixation::DwellConfig;
use crate::gaze_sources::{
    CameraPose, GazeNoise, GazeSourceError, SyntheticCamera, SyntheticGazeConfig, Trace, TraceSegment,
    estimate_camera_homography,
};
use crate::geometry::{CalibrationError, Frame, InterfaceCalibration, Point2, build_affine, interface_to_robot};
use crate::interaction::{MenuChoice, MenuConfig};
use crate::robot::{ArmConfig, Scene};
use crate::seed::{RNG_ALGORITHM, derive_seed, rng_from_seed};
use crate::service::{Engine, EngineConfig, EngineError, EngineEvent, Pacing, ReplaySource, run_loop};
use driver::{GroupMeta, MAX_ATTEMPTS, Session, record_from_events};

pub const PICK_POINT: &str = "10";
pub const PLACE_POINT: &str = "12";

// sub-stream labels under a trial seed
const GAZE_STREAM: u64 = 1;
const TOOL_STREAM: u64 = 2;
const BOUNCE_STREAM: u64 = 3;
const CORNER_STREAM: u64 = 4;
const ORDER_STREAM: u64 = 0x006f_7264_6572;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to summarize")]
    EmptyInput,
    #[error("invalid experiment parameter: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Gaze(#[from] GazeSourceError),
    #[error("subject {subject}, point {point_id}, rep {rep}: no result after {MAX_ATTEMPTS} attempts")]
    Incomplete { subject: u32, point_id: String, rep: u32 },
    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FixedPoint {
    /// Row digit then column digit; row 0 is farthest from the user.
    pub id: String,
    pub row: usize,
    pub col: usize,
    /// Surface cm.
    pub position: Point2,
}

/// 3×3 points at 1/6, 1/2 and 5/6 of the workspace on each axis.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FixedPointGrid {
    pub points: Vec<FixedPoint>,
}

impl FixedPointGrid {
    pub fn new(calib: &InterfaceCalibration) -> Self {
        let ws = calib.workspace_surface();
        let frac = [1.0 / 6.0, 0.5, 5.0 / 6.0];
        let mut points = Vec::with_capacity(9);
        for (row, fy) in frac.iter().enumerate() {
            for (col, fx) in frac.iter().enumerate() {
                points.push(FixedPoint {
                    id: format!("{row}{col}"),
                    row,
                    col,
                    position: Point2::new(ws.min.x + fx * ws.width(), ws.min.y + fy * ws.height()),
                });
            }
        }
        FixedPointGrid { points }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.points.iter().position(|p| p.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&FixedPoint> {
        self.points.iter().find(|p| p.id == id)
    }
}

/// Engine parameters shared by every trial of a run and by replay.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EngineSetup {
    pub calib: InterfaceCalibration,
    pub dwell: DwellConfig,
    pub menu: MenuConfig,
    pub tick_rate: f64,
    /// cm.
    pub block_side: f64,
    /// cm.
    pub target_radius: f64,
    /// Standard deviation of the landing offset at the default release
    /// height, cm.
    pub bounce_sigma: f64,
}

impl EngineSetup {
    pub fn new(calib: InterfaceCalibration) -> Self {
        EngineSetup {
            calib,
            dwell: DwellConfig::default(),
            menu: MenuConfig::default(),
            tick_rate: 50.0,
            block_side: 5.0,
            target_radius: 6.0,
            bounce_sigma: 0.4,
        }
    }

    /// Engine for the group with seed `group_seed`: block on point 10,
    /// target circle on point 12, robot frame.
    pub fn engine_config(&self, group_seed: u64) -> Result<EngineConfig, EvalError> {
        let grid = FixedPointGrid::new(&self.calib);
        let affine = build_affine(&self.calib)?;
        let robot_at = |id: &str| {
            let p = grid.get(id).expect("grid has 3×3 points").position;
            interface_to_robot(&affine, self.calib.surface_to_interface(p))
        };
        let mut cfg = EngineConfig::new(self.calib.clone())?;
        cfg.dwell = self.dwell;
        cfg.menu = self.menu;
        cfg.tick_rate = self.tick_rate;
        let arm: &mut ArmConfig = &mut cfg.arm;
        let drop = arm.z_release - arm.z_surface;
        if drop <= 0.0 && self.bounce_sigma > 0.0 {
            return Err(EvalError::InvalidConfig("bounce needs a release height above the surface".into()));
        }
        arm.bounce_sigma_per_cm = if drop > 0.0 { self.bounce_sigma / drop } else { 0.0 };
        cfg.scene = Scene::new(robot_at(PICK_POINT), robot_at(PLACE_POINT), self.block_side, self.target_radius);
        cfg.bounce_seed = derive_seed(group_seed, &[BOUNCE_STREAM]);
        if !(self.block_side > 0.0 && self.target_radius > 0.0 && self.bounce_sigma >= 0.0) {
            return Err(EvalError::InvalidConfig("block side, target radius and bounce must be positive".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CameraSetup {
    pub pose: CameraPose,
    pub markers: Vec<usize>,
    /// Per-axis corner detection noise, camera px.
    pub corner_noise_px: f64,
}

impl Default for CameraSetup {
    fn default() -> Self {
        CameraSetup { pose: CameraPose::default(), markers: vec![0, 1, 2, 3], corner_noise_px: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ExperimentConfig {
    pub engine: EngineSetup,
    /// Noise template; its seed is replaced per trial.
    pub gaze: SyntheticGazeConfig,
    pub subjects: u32,
    pub reps: u32,
    pub master_seed: u64,
    /// σ multiplier per subject; subjects past the end use 1.
    pub subject_sigma_scale: Vec<f64>,
    /// σ multiplier per grid row, far to near.
    pub row_sigma_scale: [f64; 3],
    /// `None` feeds interface-frame gaze straight to the engine.
    pub camera: Option<CameraSetup>,
    /// Robot experiment: rig offset added per grid column, cm.
    pub column_misalignment: [Point2; 3],
    /// Robot experiment: per-axis standard deviation of the tool mark, cm.
    pub tool_sigma: f64,
    /// Pick-and-place: leading repetitions flagged as learning phase.
    pub discard: u32,
    pub record_trace: bool,
}

impl ExperimentConfig {
    pub fn new(calib: InterfaceCalibration) -> Self {
        ExperimentConfig {
            engine: EngineSetup::new(calib),
            gaze: SyntheticGazeConfig { sigma: 1.165, jitter: Some(0.1), ..Default::default() },
            subjects: 4,
            reps: 5,
            master_seed: 0,
            subject_sigma_scale: Vec::new(),
            row_sigma_scale: [1.0; 3],
            camera: Some(CameraSetup::default()),
            column_misalignment: [Point2::ORIGIN; 3],
            tool_sigma: 0.375,
            discard: 2,
            record_trace: false,
        }
    }

    /// Pick-and-place protocol: one subject, 12 repetitions, 2 discarded.
    pub fn pick_place(calib: InterfaceCalibration) -> Self {
        ExperimentConfig { subjects: 1, reps: 12, ..Self::new(calib) }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.into()));
        self.engine.calib.validate()?;
        self.gaze.validate()?;
        if self.subjects == 0 {
            return bad("subjects must be at least 1");
        }
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.subject_sigma_scale.iter().chain(&self.row_sigma_scale).any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("sigma multipliers must be finite and non-negative");
        }
        if !(self.tool_sigma.is_finite() && self.tool_sigma >= 0.0) {
            return bad("tool_sigma must be finite and non-negative");
        }
        if self.column_misalignment.iter().any(|p| !p.is_finite()) {
            return bad("misalignment must be finite");
        }
        if let Some(c) = &self.camera {
            if c.markers.is_empty() || c.markers.iter().any(|&m| m > 3) {
                return bad("camera markers must be a nonempty subset of 0..=3");
            }
            if !(c.corner_noise_px.is_finite() && c.corner_noise_px >= 0.0) {
                return bad("corner noise must be finite and non-negative");
            }
        }
        if (self.engine.dwell.sample_rate - self.gaze.rate).abs() > 1e-9
            || (self.engine.tick_rate - self.gaze.rate).abs() > 1e-9
        {
            return bad("gaze rate, dwell sample rate and tick rate must agree");
        }
        Ok(())
    }

    fn sigma_for(&self, subject: u32, row: usize) -> f64 {
        let s = self.subject_sigma_scale.get(subject as usize).copied().unwrap_or(1.0);
        self.gaze.sigma * s * self.row_sigma_scale[row]
    }

    fn noise(&self, trial_seed: u64, attempt: u64, subject: u32, row: usize) -> Result<GazeNoise, EvalError> {
        let cfg = SyntheticGazeConfig {
            sigma: self.sigma_for(subject, row),
            seed: derive_seed(trial_seed, &[GAZE_STREAM, attempt]),
            ..self.gaze
        };
        Ok(GazeNoise::new(&cfg)?)
    }

    fn camera_for(&self, trial_seed: u64) -> Result<(Option<SyntheticCamera>, Option<crate::geometry::Homography>), EvalError> {
        let Some(c) = &self.camera else { return Ok((None, None)) };
        let cam = SyntheticCamera::looking_at(&self.engine.calib, &c.pose)?
            .with_markers(&c.markers)
            .with_corner_noise(c.corner_noise_px);
        let h = estimate_camera_homography(&cam, &self.engine.calib, derive_seed(trial_seed, &[CORNER_STREAM]))?;
        Ok((Some(cam), Some(h)))
    }
}

pub fn trial_seed(master: u64, subject: u32, point_index: usize, rep: u32) -> u64 {
    derive_seed(master, &[u64::from(subject), point_index as u64, u64::from(rep)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    /// Every emitted record, including discarded ones.
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
    pub rates: Option<PickPlaceRates>,
    pub trace: Option<Trace>,
}

impl ExperimentResult {
    pub fn scored(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| !r.discarded)
    }
}

struct Planned {
    meta: GroupMeta,
    row: usize,
}

/// Per subject, one seeded permutation of the nine points, repeated `reps`
/// times.
fn grid_schedule(cfg: &ExperimentConfig, experiment: Experiment, grid: &FixedPointGrid) -> Vec<Planned> {
    let mut out = Vec::with_capacity((cfg.subjects * cfg.reps) as usize * grid.points.len());
    for subject in 0..cfg.subjects {
        let mut order: Vec<usize> = (0..grid.points.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(cfg.master_seed, &[ORDER_STREAM, u64::from(subject)])));
        for rep in 0..cfg.reps {
            for &i in &order {
                let p = &grid.points[i];
                out.push(Planned {
                    meta: GroupMeta {
                        experiment,
                        subject,
                        rep,
                        point_id: p.id.clone(),
                        target: p.position,
                        seed: trial_seed(cfg.master_seed, subject, i, rep),
                        offset: Point2::ORIGIN,
                        discarded: false,
                        h: None,
                    },
                    row: p.row,
                });
            }
        }
    }
    out
}

fn recenter_point(calib: &InterfaceCalibration) -> Point2 {
    calib.interface_to_surface(calib.marker_centers_px[0])
}

/// Fixation on `target`, then (unless `choice` is `None`) a menu dwell and
/// the resulting action. Retries with fresh noise until it completes.
fn run_action(
    session: &mut Session,
    cfg: &ExperimentConfig,
    seed: u64,
    subject: u32,
    row: usize,
    target: Point2,
    choice: Option<MenuChoice>,
) -> Result<bool, EvalError> {
    let recenter = recenter_point(&cfg.engine.calib);
    for attempt in 0..MAX_ATTEMPTS {
        let mut noise = cfg.noise(seed, attempt, subject, row)?;
        if !session.fixate(&mut noise, target, recenter)? {
            session.abandon()?;
            continue;
        }
        let Some(choice) = choice else { return Ok(true) };
        if !session.select(&mut noise, choice)? {
            session.abandon()?;
            continue;
        }
        if session.settle()?.is_some() {
            return Ok(true);
        }
    }
    Ok(false)
}

fn run_grid_trial(
    cfg: &ExperimentConfig,
    plan: &Planned,
    grid: &FixedPointGrid,
) -> Result<(TrialRecord, Option<TraceSegment>), EvalError> {
    let mut meta = plan.meta.clone();
    let (camera, h) = cfg.camera_for(meta.seed)?;
    meta.h = h;
    let robot = meta.experiment == Experiment::RobotAccuracy;
    if robot {
        let col = grid.get(&meta.point_id).expect("scheduled from grid").col;
        let mut rng = rng_from_seed(derive_seed(meta.seed, &[TOOL_STREAM]));
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        meta.offset = cfg.column_misalignment[col] + Point2::new(nx, ny) * cfg.tool_sigma;
    }
    let mut session = Session::new(&cfg.engine, &meta, camera, cfg.record_trace)?;
    let choice = robot.then_some(MenuChoice::Move);
    if !run_action(&mut session, cfg, meta.seed, meta.subject, plan.row, meta.target, choice)? {
        return Err(EvalError::Incomplete { subject: meta.subject, point_id: meta.point_id, rep: meta.rep });
    }
    let rec = record_from_events(&meta, &session.events, &cfg.engine)?;
    Ok((rec, session.into_segment(&meta)))
}

fn finish(
    cfg: &ExperimentConfig,
    experiment: Experiment,
    results: Vec<(TrialRecord, Option<TraceSegment>)>,
) -> Result<ExperimentResult, EvalError> {
    let frame = if cfg.camera.is_some() { Frame::Camera } else { Frame::Interface };
    let mut records = Vec::with_capacity(results.len());
    let mut segments = Vec::new();
    for (r, s) in results {
        records.push(r);
        segments.extend(s);
    }
    let summary = summarize(&records)?;
    let rates = (experiment == Experiment::PickPlace).then(|| pick_place_rates(&records)).transpose()?;
    let trace = cfg.record_trace.then_some(Trace { frame, segments });
    Ok(ExperimentResult { experiment, records, summary, rates, trace })
}

fn run_grid_experiment(cfg: &ExperimentConfig, experiment: Experiment) -> Result<ExperimentResult, EvalError> {
    cfg.validate()?;
    let grid = FixedPointGrid::new(&cfg.engine.calib);
    let plan = grid_schedule(cfg, experiment, &grid);
    let results = plan.par_iter().map(|p| run_grid_trial(cfg, p, &grid)).collect::<Result<Vec<_>, _>>()?;
    finish(cfg, experiment, results)
}

/// Fixation accuracy: the cursor position after each dwell.
pub fn run_accuracy_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, EvalError> {
    run_grid_experiment(cfg, Experiment::Accuracy)
}

/// Robot accuracy: MOVE to each fixation; the realized point is the end
/// effector mapped back to the surface plus rig offsets.
pub fn run_robot_accuracy_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, EvalError> {
    run_grid_experiment(cfg, Experiment::RobotAccuracy)
}

/// Pick at point 10, then, if the grasp held, place at point 12. One record
/// per repetition; the first `discard` repetitions of each subject are
/// flagged.
pub fn run_pick_place_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, EvalError> {
    cfg.validate()?;
    if cfg.reps <= cfg.discard {
        return Err(EvalError::InvalidConfig(format!("reps ({}) must exceed discard ({})", cfg.reps, cfg.discard)));
    }
    let grid = FixedPointGrid::new(&cfg.engine.calib);
    let pick_idx = grid.index_of(PICK_POINT).expect("grid point");
    let place_idx = grid.index_of(PLACE_POINT).expect("grid point");
    let (pick, place) = (&grid.points[pick_idx], &grid.points[place_idx]);

    let plan: Vec<(u32, u32)> = (0..cfg.subjects).flat_map(|s| (0..cfg.reps).map(move |r| (s, r))).collect();
    let results = plan
        .par_iter()
        .map(|&(subject, rep)| {
            let seed = trial_seed(cfg.master_seed, subject, pick_idx, rep);
            let (camera, h) = cfg.camera_for(seed)?;
            let meta = GroupMeta {
                experiment: Experiment::PickPlace,
                subject,
                rep,
                point_id: pick.id.clone(),
                target: pick.position,
                seed,
                offset: Point2::ORIGIN,
                discarded: rep < cfg.discard,
                h,
            };
            let incomplete = || EvalError::Incomplete { subject, point_id: meta.point_id.clone(), rep };
            let mut session = Session::new(&cfg.engine, &meta, camera, cfg.record_trace)?;
            if !run_action(&mut session, cfg, seed, subject, pick.row, pick.position, Some(MenuChoice::Pick))? {
                return Err(incomplete());
            }
            if session.engine.state().holding {
                let place_seed = trial_seed(cfg.master_seed, subject, place_idx, rep);
                if !run_action(&mut session, cfg, place_seed, subject, place.row, place.position, Some(MenuChoice::Place))? {
                    return Err(incomplete());
                }
            }
            let rec = record_from_events(&meta, &session.events, &cfg.engine)?;
            Ok((rec, session.into_segment(&meta)))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    finish(cfg, Experiment::PickPlace, results)
}

/// Engine events and, for annotated segments, the record they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedSegment {
    pub header: Option<String>,
    pub events: Vec<EngineEvent>,
    pub record: Option<TrialRecord>,
}

/// Feeds each segment of `trace` through the headless service loop on a
/// fresh engine.
pub fn replay_trace(trace: &Trace, setup: &EngineSetup) -> Result<Vec<ReplayedSegment>, EvalError> {
    let mut out = Vec::with_capacity(trace.segments.len());
    for (i, seg) in trace.segments.iter().enumerate() {
        let malformed = |reason: String| EvalError::Malformed { line: 0, reason: format!("segment {}: {reason}", i + 1) };
        let meta = seg.header.as_deref().map(GroupMeta::parse).transpose().map_err(malformed)?;
        let seed = meta.as_ref().map_or(0, |m| m.seed);
        let mut engine = Engine::new(setup.engine_config(seed)?)?;
        let h = meta.as_ref().and_then(|m| m.h);
        if trace.frame == Frame::Camera && h.is_none() {
            return Err(malformed("camera-frame samples need an `h=` homography".into()));
        }
        engine.set_camera_homography(h);
        let mut source = ReplaySource::new(trace.frame, seg.samples.iter().copied());
        let mut events = Vec::new();
        let stop = std::sync::atomic::AtomicBool::new(false);
        run_loop(&mut engine, &mut source, Pacing::Unpaced, &stop, |_, evs| events.extend(evs))?;
        let record = meta.as_ref().map(|m| record_from_events(m, &events, setup)).transpose()?;
        out.push(ReplayedSegment { header: seg.header.clone(), events, record });
    }
    Ok(out)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    experiment: &'a str,
    rng: &'a str,
    master_seed: u64,
    records: usize,
    scored: usize,
    summary: &'a Summary,
    rates: Option<&'a PickPlaceRates>,
    config: &'a ExperimentConfig,
}

/// Writes `results.csv` (scored rows), `stats.csv`, `meta.json`, and when
/// present `discarded.csv` and `trace.csv` into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, result: &ExperimentResult, cfg: &ExperimentConfig) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let scored: Vec<TrialRecord> = result.scored().cloned().collect();
    export_csv(&scored, dir.join("results.csv"))?;
    if result.experiment == Experiment::PickPlace {
        let discarded: Vec<TrialRecord> = result.records.iter().filter(|r| r.discarded).cloned().collect();
        export_csv(&discarded, dir.join("discarded.csv"))?;
    }
    write_stats(std::fs::File::create(dir.join("stats.csv"))?, &result.summary)?;
    let meta = RunMeta {
        experiment: result.experiment.as_str(),
        rng: RNG_ALGORITHM,
        master_seed: cfg.master_seed,
        records: result.records.len(),
        scored: scored.len(),
        summary: &result.summary,
        rates: result.rates.as_ref(),
        config: cfg,
    };
    let mut json = serde_json::to_string_pretty(&meta).map_err(io::Error::other)?;
    json.push('\n');
    std::fs::write(dir.join("meta.json"), json)?;
    if let Some(trace) = &result.trace {
        let f = std::fs::File::create(dir.join("trace.csv"))?;
        crate::gaze_sources::write_trace(io::BufWriter::new(f), trace)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calib() -> InterfaceCalibration {
        InterfaceCalibration::reference()
    }

    fn quick(sigma: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(calib());
        c.gaze.sigma = sigma;
        c.subjects = 1;
        c.reps = 1;
        c
    }

    #[test]
    fn grid_layout() {
        let c = calib();
        let g = FixedPointGrid::new(&c);
        let ids: Vec<_> = g.points.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["00", "01", "02", "10", "11", "12", "20", "21", "22"]);
        let ws = c.workspace_surface();
        for p in &g.points {
            assert!(ws.contains(p.position));
        }
        assert!((g.get("11").unwrap().position.distance(ws.center())) < 1e-12);
        // row 2 is nearest the user: largest surface y
        assert!(g.get("20").unwrap().position.y > g.get("00").unwrap().position.y);
        assert!((g.get("01").unwrap().position.x - g.get("00").unwrap().position.x - ws.width() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_counts_and_permutation() {
        let c = ExperimentConfig::new(calib());
        let g = FixedPointGrid::new(&c.engine.calib);
        let plan = grid_schedule(&c, Experiment::Accuracy, &g);
        assert_eq!(plan.len(), 4 * 5 * 9);
        let first: Vec<_> = plan[..9].iter().map(|p| p.meta.point_id.clone()).collect();
        let second: Vec<_> = plan[9..18].iter().map(|p| p.meta.point_id.clone()).collect();
        assert_eq!(first, second);
        let mut sorted = first.clone();
        sorted.sort();
        assert_eq!(sorted, ["00", "01", "02", "10", "11", "12", "20", "21", "22"]);
        let other: Vec<_> = plan[45..54].iter().map(|p| p.meta.point_id.clone()).collect();
        assert_ne!(first, other, "subjects get different orders");
    }

    #[test]
    fn zero_noise_accuracy_is_exact() {
        let r = run_accuracy_experiment(&quick(0.0)).unwrap();
        assert_eq!(r.records.len(), 9);
        for rec in &r.records {
            assert!(rec.e_d < 1e-9, "{rec:?}");
        }
    }

    #[test]
    fn zero_noise_robot_is_exact() {
        let mut c = quick(0.0);
        c.tool_sigma = 0.0;
        let r = run_robot_accuracy_experiment(&c).unwrap();
        for rec in &r.records {
            assert!(rec.e_d < 1e-9, "{rec:?}");
        }
    }

    #[test]
    fn zero_noise_pick_place_always_succeeds() {
        let mut c = ExperimentConfig::pick_place(calib());
        c.gaze.sigma = 0.0;
        c.engine.bounce_sigma = 0.0;
        let r = run_pick_place_experiment(&c).unwrap();
        assert_eq!(r.records.len(), 12);
        assert_eq!(r.scored().count(), 10);
        let rates = r.rates.unwrap();
        assert_eq!((rates.pick_rate, rates.place_rate), (1.0, Some(1.0)));
    }

    #[test]
    fn pick_place_needs_more_reps_than_discards() {
        let mut c = ExperimentConfig::pick_place(calib());
        c.reps = 2;
        assert!(matches!(run_pick_place_experiment(&c), Err(EvalError::InvalidConfig(_))));
    }

    #[test]
    fn replay_matches_evaluation() {
        for experiment in [Experiment::Accuracy, Experiment::RobotAccuracy] {
            let mut c = quick(1.165);
            c.record_trace = true;
            c.master_seed = 11;
            let r = run_grid_experiment(&c, experiment).unwrap();
            let trace = r.trace.clone().unwrap();
            let mut buf = Vec::new();
            crate::gaze_sources::write_trace(&mut buf, &trace).unwrap();
            let back = crate::gaze_sources::read_trace(buf.as_slice()).unwrap();
            let replayed = replay_trace(&back, &c.engine).unwrap();
            let recs: Vec<_> = replayed.into_iter().map(|s| s.record.unwrap()).collect();
            assert_eq!(recs, r.records);
        }
        let mut c = ExperimentConfig::pick_place(calib());
        c.record_trace = true;
        c.camera = None;
        let r = run_pick_place_experiment(&c).unwrap();
        let replayed = replay_trace(r.trace.as_ref().unwrap(), &c.engine).unwrap();
        let recs: Vec<_> = replayed.into_iter().map(|s| s.record.unwrap()).collect();
        assert_eq!(recs, r.records);
    }

    #[test]
    fn header_roundtrip() {
        let m = GroupMeta {
            experiment: Experiment::RobotAccuracy,
            subject: 3,
            rep: 4,
            point_id: "21".into(),
            target: Point2::new(0.1 + 0.2, 1.0 / 3.0),
            seed: u64::MAX,
            offset: Point2::new(-0.3, 1e-17),
            discarded: true,
            h: Some(crate::geometry::Homography::from_matrix([[1.5, 0.1, 3.0], [0.2, 0.9, -4.0], [1e-4, 2e-5, 1.0]]).unwrap()),
        };
        assert_eq!(GroupMeta::parse(&m.header()).unwrap(), m);
        assert!(GroupMeta::parse("experiment=accuracy").is_err());
    }
}
