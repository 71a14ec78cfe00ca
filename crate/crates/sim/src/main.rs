mod server;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gazepick::evaluation::{
    EngineSetup, EvalError, ExperimentConfig, ExperimentResult, TrialRecord, export_csv, replay_trace, run_accuracy_experiment,
    run_pick_place_experiment, run_robot_accuracy_experiment, summarize, write_outputs, write_stats,
};
use gazepick::gaze_sources::{TraceError, load_trace};
use gazepick::geometry::{CalibrationError, InterfaceCalibration, Point2};
use thiserror::Error;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Error)]
enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidConfig(_) | EvalError::Calibration(_) | EvalError::Gaze(_) => CliError::Config(e.to_string()),
            EvalError::Malformed { .. } => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "sim", version, about = "Gaze-driven pick-and-place engine: experiments, replay and live host")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the live engine over WebSocket at /ws with a built-in page at /.
    Serve(ServeArgs),
    /// Run one of the headless experiments and write CSV outputs.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Feed a recorded gaze trace through the engine.
    Replay(ReplayArgs),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Fixation accuracy on the 3×3 grid.
    Accuracy(EvalArgs),
    /// Robot positioning accuracy on the 3×3 grid.
    Robot(EvalArgs),
    /// Pick at point 10, place at point 12.
    Pickplace(EvalArgs),
}

#[derive(Args, Clone)]
struct SceneArgs {
    /// Interface calibration file; the reference layout when omitted.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Block side, cm.
    #[arg(long, default_value_t = 5.0)]
    block_side: f64,
    /// Place target radius, cm.
    #[arg(long, default_value_t = 6.0)]
    target_radius: f64,
    /// Landing offset standard deviation at release height, cm.
    #[arg(long, default_value_t = 0.4)]
    bounce: f64,
}

impl SceneArgs {
    fn setup(&self) -> Result<EngineSetup, CliError> {
        let calib = match &self.calib {
            Some(p) => InterfaceCalibration::load(p)?,
            None => InterfaceCalibration::reference(),
        };
        calib.validate()?;
        let mut s = EngineSetup::new(calib);
        s.block_side = self.block_side;
        s.target_radius = self.target_radius;
        s.bounce_sigma = self.bounce;
        Ok(s)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Per-axis gaze error standard deviation on the surface, cm.
    #[arg(long, default_value_t = 1.165)]
    sigma: f64,
    /// Per-sample share of the gaze error, cm; the rest is a per-trial bias.
    #[arg(long, default_value_t = 0.1, conflicts_with = "iid")]
    jitter: f64,
    /// Draw every gaze sample independently instead.
    #[arg(long)]
    iid: bool,
    #[arg(long, default_value_t = 0.0)]
    outlier_prob: f64,
    #[arg(long)]
    subjects: Option<u32>,
    #[arg(long)]
    reps: Option<u32>,
    /// Leading pick-and-place repetitions excluded from scoring.
    #[arg(long, default_value_t = 2)]
    discard: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated σ multiplier per subject.
    #[arg(long, value_delimiter = ',')]
    subject_scale: Vec<f64>,
    /// σ multiplier per grid row, far to near.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    row_scale: Option<Vec<f64>>,
    /// Feed interface-frame gaze directly, skipping the synthetic camera.
    #[arg(long)]
    no_camera: bool,
    /// Marker ids the synthetic camera detects.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    markers: Vec<usize>,
    /// Marker corner detection noise, camera px.
    #[arg(long, default_value_t = 0.0)]
    corner_noise: f64,
    /// Robot experiment: tool mark noise per axis, cm.
    #[arg(long, default_value_t = 0.375)]
    tool_sigma: f64,
    /// Robot experiment: rig offset for one grid column as `COL:DX,DY` (cm).
    #[arg(long = "misalign")]
    misalign: Vec<String>,
    /// Also write the synthetic gaze as trace.csv.
    #[arg(long)]
    trace: bool,
}

impl EvalArgs {
    fn config(&self, pick_place: bool) -> Result<ExperimentConfig, CliError> {
        let setup = self.scene.setup()?;
        let mut cfg = if pick_place {
            ExperimentConfig::pick_place(setup.calib.clone())
        } else {
            ExperimentConfig::new(setup.calib.clone())
        };
        cfg.engine = setup;
        cfg.gaze.sigma = self.sigma;
        cfg.gaze.jitter = (!self.iid).then_some(self.jitter);
        cfg.gaze.outlier_prob = self.outlier_prob;
        if let Some(n) = self.subjects {
            cfg.subjects = n;
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        cfg.discard = self.discard;
        cfg.master_seed = self.seed;
        cfg.subject_sigma_scale = self.subject_scale.clone();
        if let Some(r) = &self.row_scale {
            cfg.row_sigma_scale = [r[0], r[1], r[2]];
        }
        cfg.camera = if self.no_camera {
            None
        } else {
            cfg.camera.map(|mut c| {
                c.markers = self.markers.clone();
                c.corner_noise_px = self.corner_noise;
                c
            })
        };
        cfg.tool_sigma = self.tool_sigma;
        for m in &self.misalign {
            let (col, d) = parse_misalign(m).ok_or_else(|| CliError::Config(format!("bad --misalign `{m}`, want COL:DX,DY")))?;
            cfg.column_misalignment[col] = d;
        }
        cfg.record_trace = self.trace;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_misalign(s: &str) -> Option<(usize, Point2)> {
    let (col, d) = s.split_once(':')?;
    let col: usize = col.trim().parse().ok().filter(|c| *c < 3)?;
    let (dx, dy) = d.split_once(',')?;
    Some((col, Point2::new(dx.trim().parse().ok()?, dy.trim().parse().ok()?)))
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scene: SceneArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Route interface-frame gaze through the synthetic camera and marker
    /// homography.
    #[arg(long)]
    camera_sim: bool,
    /// Seeds the landing offsets and camera corner noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Serve(a) => serve(a),
        Command::Eval(c) => eval(c),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn eval(cmd: EvalCommand) -> Result<(), CliError> {
    let (args, pick_place) = match &cmd {
        EvalCommand::Accuracy(a) | EvalCommand::Robot(a) => (a, false),
        EvalCommand::Pickplace(a) => (a, true),
    };
    let cfg = args.config(pick_place)?;
    let result = match cmd {
        EvalCommand::Accuracy(_) => run_accuracy_experiment(&cfg)?,
        EvalCommand::Robot(_) => run_robot_accuracy_experiment(&cfg)?,
        EvalCommand::Pickplace(_) => run_pick_place_experiment(&cfg)?,
    };
    write_outputs(&args.out, &result, &cfg)?;
    report(&result);
    Ok(())
}

fn report(r: &ExperimentResult) {
    let o = &r.summary.overall;
    println!(
        "{}: {} scored trials, e_d mean {:.3} cm, std {:.3} cm, max {:.3} cm at point {}",
        r.experiment.as_str(),
        o.n,
        o.mean,
        o.std,
        o.max,
        r.summary.argmax_point
    );
    if let Some(rates) = &r.rates {
        let place = rates.place_rate.map_or("n/a".to_string(), |p| format!("{:.1}%", 100.0 * p));
        println!("pick {:.1}% of {}, place {place} of {}", 100.0 * rates.pick_rate, rates.scored, rates.place_attempts);
    }
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let setup = a.scene.setup()?;
    let trace = load_trace(&a.trace)?;
    let segments = replay_trace(&trace, &setup)?;
    std::fs::create_dir_all(&a.out)?;
    let mut events = BufWriter::new(File::create(a.out.join("events.jsonl"))?);
    let mut records: Vec<TrialRecord> = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        for e in &seg.events {
            let line = serde_json::json!({ "segment": i, "event": e });
            writeln!(events, "{line}")?;
        }
        records.extend(seg.record.clone());
    }
    events.flush()?;
    let n_events: usize = segments.iter().map(|s| s.events.len()).sum();
    println!("replayed {} segment(s), {n_events} event(s)", segments.len());
    if !records.is_empty() {
        write_records(&a.out, &records)?;
        println!("{} trial record(s) written", records.len());
    }
    Ok(())
}

fn write_records(dir: &Path, records: &[TrialRecord]) -> Result<(), CliError> {
    let (discarded, scored): (Vec<TrialRecord>, Vec<TrialRecord>) = records.iter().cloned().partition(|r| r.discarded);
    export_csv(&scored, dir.join("results.csv"))?;
    if !discarded.is_empty() {
        export_csv(&discarded, dir.join("discarded.csv"))?;
    }
    if !scored.is_empty() {
        write_stats(File::create(dir.join("stats.csv"))?, &summarize(&scored)?)?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let setup = a.scene.setup()?;
    let opts = server::ServeOptions { bind: a.bind, setup, camera_sim: a.camera_sim, seed: a.seed };
    server::serve(opts)
}
