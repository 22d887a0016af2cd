//! Subcommand definitions and their implementations.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use loglo_core::datagen::{Dataset, DatasetMeta};
use loglo_core::metrics::MetricReport;
use loglo_core::operator::{count_params, fft_flops, load_checkpoint, param_budget};
use loglo_core::spectra::{energy_spectrum, radial_bin_map, DEFAULT_I_HIGH, DEFAULT_I_LOW};
use loglo_core::train::Trainer;
use loglo_core::{Error, Field, LogloModel, RadialSpec, Result};
use serde::Serialize;

use crate::config::{io_err, parse_config, Pde, RunConfig};

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const ROLLOUT_METRICS_CSV: &str = "rollout_metrics.csv";
pub const PEARSON_CSV: &str = "pearson_by_t.csv";
pub const SPECTRA_CSV: &str = "spectra.csv";
pub const TRAJECTORY_DIR: &str = "trajectory";
pub const BUDGET_JSON: &str = "budget.json";

/// Samples per forward pass when predicting over a whole dataset.
const CHUNK: usize = 32;

#[derive(Debug, Parser)]
#[command(name = "loglo", version, about = "Local-global neural operators on periodic PDE data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Train a model; writes checkpoints and train_log.csv.
    Train(TrainArgs),
    /// One-step and k-step metrics for a checkpoint or a prediction dataset.
    Evaluate(EvalArgs),
    /// Autoregressive rollout with per-step metrics.
    Rollout(RolloutArgs),
    /// Radially binned error (or energy) spectra as CSV.
    Spectra(SpectraArgs),
    /// Spectral parameter and FFT cost table.
    Budget(BudgetArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's `pde`.
    #[arg(long, value_parser = parse_pde)]
    pub pde: Option<Pde>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub n_t: Option<usize>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Either a checkpoint with ground-truth data, or a prediction dataset with
/// its target.
#[derive(Debug, Args)]
pub struct Source {
    #[arg(long, requires = "data", conflicts_with_all = ["pred", "target"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "target")]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    pub target: Option<PathBuf>,
    /// Time index the predictions start from.
    #[arg(long, default_value_t = 0)]
    pub t0: usize,
}

#[derive(Debug, Args)]
pub struct Bins {
    #[arg(long, default_value_t = DEFAULT_I_LOW)]
    pub i_low: usize,
    #[arg(long, default_value_t = DEFAULT_I_HIGH)]
    pub i_high: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: Source,
    /// Rollout horizon of the k-step report (presets: 1, 5, 15, 20).
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[command(flatten)]
    pub bins: Bins,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Presets: 1, 5, 15, 20.
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub t0: usize,
    #[command(flatten)]
    pub bins: Bins,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SpectrumKind {
    /// Normalised radial spectrum of the prediction error.
    Error,
    /// Radial energy spectrum of the prediction.
    Energy,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = SpectrumKind::Error)]
    pub kind: SpectrumKind,
    #[command(flatten)]
    pub bins: Bins,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub dc: u64,
    #[arg(long)]
    pub k: u64,
    #[arg(long)]
    pub l: u64,
    #[arg(long)]
    pub p: u64,
    #[arg(long, default_value_t = 2)]
    pub dim: u32,
    /// Grid for the FFT cost estimate; omitted means no FLOP rows.
    #[arg(long, requires = "ny")]
    pub nx: Option<usize>,
    #[arg(long, requires = "nx")]
    pub ny: Option<usize>,
    #[arg(long)]
    pub nz: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long)]
    pub json: bool,
    /// Also write budget.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_pde(s: &str) -> std::result::Result<Pde, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| format!("unknown pde `{s}`"))
}

/// Failure of a command: either a library error or a usage problem.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                Error::InvalidInput(_) => "invalid_input",
                Error::Shape(_) => "shape",
                Error::Config(_) => "config",
                Error::DegenerateTarget(_) => "degenerate_target",
                Error::DegenerateBaseline => "degenerate_baseline",
                Error::UnsupportedOp(_) => "unsupported_op",
                Error::Divergence { .. } => "divergence",
                Error::StepSize { .. } => "step_size",
                Error::Format { .. } => "format",
                Error::Io { .. } => "io",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::StepSize { .. } => 2,
                Error::Io { .. } => 3,
                Error::Format { .. } => 4,
                Error::Divergence { .. } => 5,
                _ => 1,
            },
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        let message = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
        serde_json::json!({ "error": self.kind(), "message": message }).to_string()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (including the program name), runs the command, and returns
/// the process exit code. Errors go to stderr as one JSON line.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.to_string().lines().next().unwrap_or("bad arguments").to_owned());
            eprintln!("{}", err.to_json_line());
            return err.exit_code();
        }
    };
    let mut stdout = std::io::stdout().lock();
    match init_threads().and_then(|_| execute(cli.command, &mut stdout)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.exit_code()
        }
    }
}

/// Sizes the global rayon pool from `LOGLO_THREADS`. A pool that already
/// exists (repeated calls in one process) is left as is.
fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("LOGLO_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("LOGLO_THREADS must be a positive integer, got `{v}`")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Generate(a) => generate(a, out),
        Command::Train(a) => train(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Rollout(a) => rollout_cmd(a, out),
        Command::Spectra(a) => spectra(a, out),
        Command::Budget(a) => budget(a, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|e| CliError::Core(io_err(Path::new("<stdout>"), e)))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = a.pde {
        if p != cfg.pde {
            cfg.pde = p;
            cfg.data.dt = None;
        }
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let d = &mut cfg.data;
    d.n_traj = a.n_traj.unwrap_or(d.n_traj);
    d.n_t = a.n_t.unwrap_or(d.n_t);
    d.nx = a.nx.unwrap_or(d.nx);
    d.ny = a.ny.unwrap_or(d.ny);
    let cfg = cfg.resolve()?;
    let ds = cfg.data.generate(cfg.pde, cfg.seed)?;
    ds.write(&a.out)?;
    let m = &ds.meta;
    say(
        out,
        format!(
            "wrote {} trajectories x {} steps of {}x{} {} to {}",
            m.n_traj,
            m.n_t,
            m.nx,
            m.ny,
            m.pde,
            a.out.display()
        ),
    )
}

/// The training corpus named by a resolved config.
pub fn load_train_data(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.train_data {
        Some(p) => Dataset::read(p),
        None => cfg.data.generate(cfg.pde, cfg.seed),
    }
}

fn train(a: TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = parse_config(&a.config)?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = a.train_data {
        cfg.train_data = Some(p);
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    let cfg = cfg.resolve()?;
    let ds = load_train_data(&cfg)?;
    let m = &ds.meta;
    if m.n_c != cfg.model.in_channels || m.n_c != cfg.model.out_channels {
        return Err(Error::Config(format!(
            "dataset has {} channels but the model maps {} -> {}",
            m.n_c, cfg.model.in_channels, cfg.model.out_channels
        ))
        .into());
    }
    cfg.model.check_grid(m.nx, m.ny)?;
    let spec = cfg.train.loss.radial_spec(m.nx, m.ny)?;
    cfg.write_resolved(&cfg.out_dir)?;

    let (x, y) = ds.one_step_pairs(0..m.n_traj)?;
    let model = LogloModel::new(cfg.model.clone(), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let stats = trainer.fit(&x, &y, &spec, Some(&cfg.out_dir))?;
    let summary = serde_json::json!({
        "epochs": trainer.epoch(),
        "pairs": x.batch(),
        "first_loss": stats.first().map(|s| s.train_loss),
        "final_loss": stats.last().map(|s| s.train_loss),
        "params": trainer.model().count_params().total,
        "out": cfg.out_dir,
    });
    say(out, summary)
}

/// Forward pass over a large batch in fixed-size chunks.
pub fn predict(model: &LogloModel, x: &Field) -> Result<Field> {
    let b = x.batch();
    let parts = (0..b)
        .step_by(CHUNK)
        .map(|s| model.forward(&x.batch_range(s, (s + CHUNK).min(b))?))
        .collect::<Result<Vec<_>>>()?;
    Field::concat_batch(&parts)
}

/// Autoregressive rollout in batch chunks. Stops at the earliest step at
/// which any chunk produced a non-finite value.
pub fn rollout_chunked(model: &LogloModel, u0: &Field, steps: usize) -> Result<(Vec<Field>, Option<usize>)> {
    let b = u0.batch();
    let mut chunks = Vec::new();
    let mut blow_up: Option<usize> = None;
    for s in (0..b).step_by(CHUNK) {
        let r = loglo_core::train::rollout(model, &u0.batch_range(s, (s + CHUNK).min(b))?, steps)?;
        if let Some(k) = r.blow_up {
            blow_up = Some(blow_up.map_or(k, |j| j.min(k)));
        }
        chunks.push(r.frames);
    }
    let done = blow_up.unwrap_or(steps);
    let frames = (0..done)
        .map(|t| Field::concat_batch(&chunks.iter().map(|c| c[t].clone()).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok((frames, blow_up))
}

/// Predicted and reference frames for steps `1..=k` after `t0`, plus the
/// step at which the rollout blew up, if it did.
struct Window {
    pred: Vec<Field>,
    target: Vec<Field>,
    blow_up: Option<usize>,
}

fn load_model(path: &Path) -> Result<LogloModel> {
    Ok(load_checkpoint(path, None)?.model)
}

fn check_window(n_t: usize, t0: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("--steps must be at least 1".into()));
    }
    if t0 + k >= n_t {
        return Err(Error::Config(format!(
            "t0 = {t0} plus {k} steps needs more than the {n_t} snapshots available"
        )));
    }
    Ok(())
}

fn window(src: &Source, k: usize) -> Result<Window> {
    match (&src.checkpoint, &src.data, &src.pred, &src.target) {
        (Some(ck), Some(data), None, None) => {
            let model = load_model(ck)?;
            let ds = Dataset::read(data)?;
            check_window(ds.meta.n_t, src.t0, k)?;
            let (u0, target) = ds.rollout_window(0..ds.meta.n_traj, src.t0, k)?;
            let (pred, blow_up) = rollout_chunked(&model, &u0, k)?;
            let target = target.into_iter().take(pred.len()).collect();
            Ok(Window { pred, target, blow_up })
        }
        (None, _, Some(p), Some(t)) => {
            let (p, t) = (Dataset::read(p)?, Dataset::read(t)?);
            let (a, b) = (&p.meta, &t.meta);
            if (a.n_traj, a.n_c, a.nx, a.ny) != (b.n_traj, b.n_c, b.nx, b.ny) {
                return Err(Error::Shape("prediction and target datasets differ in shape".into()));
            }
            check_window(a.n_t.min(b.n_t), src.t0, k)?;
            let (_, pred) = p.rollout_window(0..a.n_traj, src.t0, k)?;
            let (_, target) = t.rollout_window(0..b.n_traj, src.t0, k)?;
            Ok(Window {
                pred,
                target,
                blow_up: None,
            })
        }
        _ => Err(Error::Config("give either --checkpoint with --data, or --pred with --target".into())),
    }
}

fn bins_for(f: &Field, bins: &Bins) -> Result<RadialSpec> {
    radial_bin_map(f.nx(), f.ny(), bins.i_low, bins.i_high)
}

#[derive(Serialize)]
struct EvalOutput {
    steps: usize,
    blow_up_step: Option<usize>,
    one_step: MetricReport,
    k_step: Option<MetricReport>,
}

/// One-step and k-step reports for the evaluate command.
pub fn evaluate_reports(src: &Source, steps: usize, bins: &Bins) -> Result<(MetricReport, Option<MetricReport>, Option<usize>)> {
    let one_step = match (&src.checkpoint, &src.data) {
        (Some(ck), Some(data)) => {
            // every consecutive pair, not only the rollout start
            let model = load_model(ck)?;
            let ds = Dataset::read(data)?;
            let (x, y) = ds.one_step_pairs(0..ds.meta.n_traj)?;
            let p = predict(&model, &x)?;
            MetricReport::evaluate(&[p], &[y.clone()], &bins_for(&y, bins)?)?
        }
        _ => {
            let w = window(src, 1)?;
            MetricReport::evaluate(&w.pred, &w.target, &bins_for(&w.target[0], bins)?)?
        }
    };
    let w = window(src, steps)?;
    let k_step = match w.pred.first() {
        Some(f) => Some(MetricReport::evaluate(&w.pred, &w.target, &bins_for(f, bins)?)?),
        None => None,
    };
    Ok((one_step, k_step, w.blow_up))
}

fn evaluate(a: EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let (one_step, k_step, blow_up_step) = evaluate_reports(&a.source, a.steps, &a.bins)?;
    create_dir(&a.out)?;
    one_step.write_csv(&a.out.join(METRICS_CSV))?;
    if let Some(k) = &k_step {
        k.write_csv(&a.out.join(ROLLOUT_METRICS_CSV))?;
    }
    let res = EvalOutput {
        steps: a.steps,
        blow_up_step,
        one_step,
        k_step,
    };
    let path = a.out.join(METRICS_JSON);
    let json = serde_json::to_string_pretty(&res).expect("report serialises");
    std::fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    say(
        out,
        format!(
            "one-step nrmse {:.6e}; wrote {}",
            res.one_step.overall.nrmse,
            path.display()
        ),
    )
}

fn write_pearson(path: &Path, values: &[f64]) -> Result<()> {
    let fmt = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(fmt)?;
    w.write_record(["timestep", "pearson"]).map_err(fmt)?;
    for (t, v) in values.iter().enumerate() {
        w.serialize((t + 1, v)).map_err(fmt)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn rollout_cmd(a: RolloutArgs, out: &mut dyn Write) -> CliResult<()> {
    let src = Source {
        checkpoint: Some(a.checkpoint.clone()),
        data: Some(a.data.clone()),
        pred: None,
        target: None,
        t0: a.t0,
    };
    let w = window(&src, a.steps)?;
    create_dir(&a.out)?;

    // trajectory in dataset layout: the start frame, then every predicted step
    let truth = Dataset::read(&a.data)?;
    let tm = &truth.meta;
    let start = truth.frames(&(0..tm.n_traj).map(|j| (j, a.t0)).collect::<Vec<_>>())?;
    let frames: Vec<&Field> = std::iter::once(&start).chain(&w.pred).collect();
    let n_t = frames.len();
    let fl = tm.n_c * tm.nx * tm.ny;
    let mut data = Vec::with_capacity(tm.n_traj * n_t * fl);
    for j in 0..tm.n_traj {
        for f in &frames {
            data.extend_from_slice(&f.data()[j * fl..(j + 1) * fl]);
        }
    }
    let mut meta = DatasetMeta::new(
        &format!("rollout:{}", tm.pde),
        [tm.n_traj, n_t, tm.n_c, tm.nx, tm.ny],
        tm.dt,
        tm.lengths,
        tm.field_names.clone(),
        tm.seed,
    );
    meta.params = tm.params.clone();
    meta.params.insert("t0".into(), a.t0 as f64);
    if n_t >= 2 {
        Dataset::new(meta, data)?.write(&a.out.join(TRAJECTORY_DIR))?;
    }

    let report = match w.pred.first() {
        Some(f) => {
            let r = MetricReport::evaluate(&w.pred, &w.target, &bins_for(f, &a.bins)?)?;
            r.write_csv(&a.out.join(ROLLOUT_METRICS_CSV))?;
            write_pearson(&a.out.join(PEARSON_CSV), &r.pearson_by_t)?;
            Some(r)
        }
        None => None,
    };
    let res = serde_json::json!({
        "steps": a.steps,
        "completed_steps": w.pred.len(),
        "blow_up_step": w.blow_up,
        "rollout": report,
    });
    let path = a.out.join(METRICS_JSON);
    std::fs::write(&path, serde_json::to_string_pretty(&res).expect("serialises")).map_err(|e| io_err(&path, e))?;
    match w.blow_up {
        Some(k) => say(out, format!("rollout blew up at step {}; {} steps kept", k + 1, w.pred.len())),
        None => say(out, format!("rolled out {} steps; wrote {}", w.pred.len(), a.out.display())),
    }
}

/// Rows `(channel, timestep, radius, band, value)` of the spectra export.
pub fn spectra_rows(src: &Source, steps: usize, kind: SpectrumKind, bins: &Bins) -> Result<Vec<(usize, usize, usize, &'static str, f64)>> {
    let w = window(src, steps)?;
    let mut rows = Vec::new();
    for (t, (p, y)) in w.pred.iter().zip(&w.target).enumerate() {
        let spec = bins_for(y, bins)?;
        let ranges = spec.band_ranges()?;
        let band = |r: usize| ["low", "mid", "high"][ranges.iter().position(|&(a, b)| r >= a && r < b).unwrap_or(2)];
        let nb = spec.n_bins();
        let c = p.channels();
        let values = match kind {
            SpectrumKind::Error => loglo_core::losses::radial_error_spectrum(p, y, &spec)?,
            SpectrumKind::Energy => {
                // batch mean
                let prof = energy_spectrum(p)?;
                let mut v = vec![0.0; c * nb];
                for b in 0..prof.batch {
                    for ch in 0..c {
                        for (acc, e) in v[ch * nb..(ch + 1) * nb].iter_mut().zip(prof.row(b, ch)) {
                            *acc += e / prof.batch as f64;
                        }
                    }
                }
                v
            }
        };
        for ch in 0..c {
            for r in 0..nb {
                rows.push((ch, t + 1, r, band(r), values[ch * nb + r]));
            }
        }
    }
    Ok(rows)
}

fn spectra(a: SpectraArgs, out: &mut dyn Write) -> CliResult<()> {
    let rows = spectra_rows(&a.source, a.steps, a.kind, &a.bins)?;
    create_dir(&a.out)?;
    let path = a.out.join(SPECTRA_CSV);
    let fmt = |e: csv::Error| Error::Format {
        path: path.clone(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(fmt)?;
    w.write_record(["channel", "timestep", "radius", "band", "value"]).map_err(fmt)?;
    for r in &rows {
        w.serialize(r).map_err(fmt)?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    say(out, format!("wrote {} rows to {}", rows.len(), path.display()))
}

#[derive(Debug, Serialize)]
pub struct BudgetReport {
    pub dim: u32,
    pub d_c: u64,
    pub k: u64,
    pub l: u64,
    pub p: u64,
    pub global: u64,
    pub local: u64,
    pub local_over_global: f64,
    /// Trainable scalars of a default model at this size (complex counted twice).
    pub model_params: Option<u64>,
    pub flops: Option<loglo_core::operator::FftFlops>,
}

pub fn budget_report(a: &BudgetArgs) -> Result<BudgetReport> {
    let b = param_budget(a.dim, a.dc, a.k, a.l, a.p)?;
    let flops = match (a.nx, a.ny) {
        (Some(nx), Some(ny)) => {
            let c = a.dc as usize;
            Some(fft_flops(a.batch, c, c, nx, ny, a.nz, Some(a.p as usize)))
        }
        _ => None,
    };
    let model_params = (a.dim == 2).then(|| {
        let cfg = loglo_core::ModelConfig {
            width: a.dc as usize,
            n_layers: a.l as usize,
            global_modes: (a.k as usize, a.k as usize),
            patch_size: a.p as usize,
            ..loglo_core::ModelConfig::default()
        };
        count_params(&cfg).total as u64
    });
    Ok(BudgetReport {
        dim: a.dim,
        d_c: a.dc,
        k: a.k,
        l: a.l,
        p: a.p,
        global: b.global,
        local: b.local,
        local_over_global: b.local as f64 / b.global as f64,
        model_params,
        flops,
    })
}

/// `27040000` -> `27,040,000`.
pub fn group_thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn budget(a: BudgetArgs, out: &mut dyn Write) -> CliResult<()> {
    let r = budget_report(&a)?;
    let json = serde_json::to_string_pretty(&r).expect("serialises");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let p = dir.join(BUDGET_JSON);
        std::fs::write(&p, &json).map_err(|e| io_err(&p, e))?;
    }
    if a.json {
        return say(out, json);
    }
    let kd = if r.dim == 2 { "K^2" } else { "K^3" };
    let pd = if r.dim == 2 { "p" } else { "p^2" };
    say(out, format!("d_c={} K={} L={} p={} dim={}", r.d_c, r.k, r.l, r.p, r.dim))?;
    say(out, format!("global  d_c^2 {kd} L              {:>16}", group_thousands(r.global)))?;
    say(out, format!("local   d_c^2 {pd} (p/2+1) L      {:>16}", group_thousands(r.local)))?;
    say(out, format!("local / global                   {:>16.4}", r.local_over_global))?;
    if let Some(n) = r.model_params {
        say(out, format!("model trainable scalars          {:>16}", group_thousands(n)))?;
    }
    if let Some(f) = r.flops {
        say(out, format!("fft flops global fwd / inv       {:>16.0} / {:.0}", f.global_fwd, f.global_inv))?;
        say(out, format!("fft flops local  fwd / inv       {:>16.0} / {:.0}", f.local_fwd, f.local_inv))?;
    }
    Ok(())
}
