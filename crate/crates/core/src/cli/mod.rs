//! Command-line surface: `synth`, `train`, `eval`, `analyze` and `restore`.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 1 on
//! runtime failures. Every command locks the directory it writes to and
//! leaves a `.partial` marker there until its outputs are complete.

mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{DataSection, EvalSection, RunConfig, SynthSection, RUN_DIR_ENV};

use crate::dataio::{
    jpeg_distort, load_dataset, split_dataset, synth_tamper_dataset_with, DatasetManifest,
    DegradationSpec, Image, Mask, Role, Sample, SplitTag, MANIFEST_FILE, MIN_IMAGE_SIZE,
};
use crate::error::Error;
use crate::experiment::evaluate_samples;
use crate::inference::{sliding_window_restore, Pipeline, WindowSpec};
use crate::metrics::{analyze_separability, write_reports_csv, Situation};
use crate::nets::{
    load_checkpoint, save_checkpoint, Checkpoint, Component, LocalizationNet, Network,
    RestorationNet,
};
use crate::training::{TrainMode, Trainer};

pub const LOCK_FILE: &str = ".lock";
pub const PARTIAL_MARKER: &str = ".partial";
pub const LOCALIZER_FILE: &str = "localizer.ckpt";
pub const RESTORER_FILE: &str = "restorer.ckpt";
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Locked(PathBuf),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Locked(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Locked(p) => write!(
                f,
                "{} is locked by another command; remove {} if it is stale",
                p.display(),
                p.join(LOCK_FILE).display()
            ),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "tamperloc",
    version,
    about = "Restoration-assisted tampering localization"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic spliced corpus with a train/test manifest.
    Synth(SynthArgs),
    /// Train one of the four regimes.
    Train(TrainArgs),
    /// Score checkpoints on a test split.
    Eval(EvalArgs),
    /// Measure original/tampered feature separability.
    Analyze(AnalyzeArgs),
    /// Restore images with a trained restoration module.
    Restore(RestoreArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub train_frac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// pretrain_plain, finetune_distorted, reloc_alternate or reloc_joint.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Plain-trained localizer checkpoint; required by every mode but pretrain_plain.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// `fixed:<qf>` or `uniform:<lo>:<hi>`.
    #[arg(long)]
    pub qf: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub blocks_per_image: Option<usize>,
    #[arg(long)]
    pub lr_loc: Option<f64>,
    #[arg(long)]
    pub lr_restore: Option<f64>,
    #[arg(long)]
    pub lr_disc: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Situation tag or alias: mp-plain, mp-distorted, dp-distorted, reloc.
    #[arg(long)]
    pub situation: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub localizer: Option<PathBuf>,
    #[arg(long)]
    pub restorer: Option<PathBuf>,
    /// Restorer and localizer from separate runs: `r=<ckpt|run> l=<ckpt|run>`.
    #[arg(long, num_args = 2, value_names = ["r=PATH", "l=PATH"])]
    pub compose: Option<Vec<String>>,
    /// Comma-separated JPEG quality factors.
    #[arg(long)]
    pub qf: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, default_value = "mp-distorted")]
    pub situation: String,
    /// Pixels sampled per class.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub localizer: Option<PathBuf>,
    #[arg(long)]
    pub restorer: Option<PathBuf>,
    #[arg(long)]
    pub qf: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long)]
    pub restorer: Option<PathBuf>,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// An image file or a directory of images.
    #[arg(long)]
    pub input: PathBuf,
    /// A PNG path, or a directory when the input is a directory.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub window: WindowArgs,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Analyze(a) => cmd_analyze(&cfg, a),
        Command::Restore(a) => cmd_restore(&cfg, a),
    }
}

/// Exclusive claim on an output directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(&path, e).into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Marks a directory as holding incomplete outputs until `complete` is called.
struct Partial {
    path: PathBuf,
}

impl Partial {
    fn begin(dir: &Path, command: &str) -> CliResult<Self> {
        let path = dir.join(PARTIAL_MARKER);
        fs::write(&path, format!("{command}\n")).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path })
    }

    fn complete(self) -> CliResult<()> {
        fs::remove_file(&self.path).map_err(|e| Error::io(&self.path, e).into())
    }
}

fn parse_split(s: &str) -> CliResult<SplitTag> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn parse_qfs(s: &str) -> CliResult<Vec<u8>> {
    let qfs = s
        .split(',')
        .map(|p| match p.trim().parse::<u8>() {
            Ok(q) if (1..=100).contains(&q) => Ok(q),
            _ => Err(usage(format!(
                "bad quality factor `{p}`; expected integers in 1..=100"
            ))),
        })
        .collect::<CliResult<Vec<u8>>>()?;
    if qfs.is_empty() {
        return Err(usage("at least one quality factor is needed"));
    }
    Ok(qfs)
}

fn window_spec(cfg: &RunConfig, args: &WindowArgs) -> CliResult<WindowSpec> {
    let window = args.window.unwrap_or(cfg.window.window);
    let stride = args
        .stride
        .unwrap_or(if args.window.is_some() && args.stride.is_none() {
            window
        } else {
            cfg.window.stride
        });
    WindowSpec::new(window, stride).map_err(|e| usage(e.to_string()))
}

/// Loads a checkpoint and insists on its component; a mismatch is a usage error.
fn load_component(path: &Path, want: Component) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(usage(format!(
            "checkpoint {} does not exist",
            path.display()
        )));
    }
    let ckpt = load_checkpoint(path)?;
    if ckpt.component() != want {
        return Err(usage(format!(
            "{} holds a {} checkpoint, expected {want}",
            path.display(),
            ckpt.component()
        )));
    }
    Ok(ckpt)
}

/// A checkpoint path, or a run directory holding `file`.
fn ckpt_path(p: &Path, file: &str) -> PathBuf {
    if p.is_dir() {
        p.join(file)
    } else {
        p.to_path_buf()
    }
}

fn load_split(cfg: &RunConfig, data: Option<PathBuf>, split: &str) -> CliResult<DatasetManifest> {
    let root = cfg.resolve_data_root(data)?;
    if !root.is_dir() {
        return Err(usage(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    Ok(load_dataset(&root, parse_split(split)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

pub fn cmd_synth(cfg: &RunConfig, a: SynthArgs) -> CliResult<()> {
    let seed = cfg.resolve_seed(a.seed)?;
    let out = a
        .out
        .or_else(|| cfg.data.root.clone())
        .ok_or_else(|| usage("no output directory: pass --out"))?;
    let n = a.n.unwrap_or(cfg.synth.n);
    let size = a.size.unwrap_or(cfg.synth.size);
    let frac = a.train_frac.unwrap_or(cfg.data.train_frac);
    if n < 2 {
        return Err(usage("--n must be at least 2 so both splits are non-empty"));
    }
    if size < MIN_IMAGE_SIZE {
        return Err(usage(format!("--size must be at least {MIN_IMAGE_SIZE}")));
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(usage("--train-frac must lie in (0, 1)"));
    }

    let _lock = DirLock::acquire(&out)?;
    let partial = Partial::begin(&out, "synth")?;
    let all = synth_tamper_dataset_with(n, size, seed, &out, &cfg.synth.params)?;
    let (train, test) = split_dataset(&all, frac, seed)?;
    let mut entries = train.entries.clone();
    entries.extend(test.entries.iter().cloned());
    entries.sort_by(|x, y| x.id.cmp(&y.id));
    let index = DatasetManifest { entries, ..all };
    index.write_index(&out.join(MANIFEST_FILE))?;
    partial.complete()?;
    println!(
        "wrote {n} samples ({} train, {} test) to {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    mode: TrainMode,
    epochs: usize,
    best_epoch: Option<usize>,
    samples: usize,
    outputs: Vec<String>,
}

pub fn cmd_train(cfg: &RunConfig, a: TrainArgs) -> CliResult<()> {
    let mut tc = cfg.train.clone();
    if let Some(m) = &a.mode {
        tc.mode = m.parse().map_err(|e: Error| usage(e.to_string()))?;
    }
    if let Some(q) = &a.qf {
        tc.degradation = q
            .parse::<DegradationSpec>()
            .map_err(|e| usage(e.to_string()))?;
    }
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.batch_size = a.batch_size.unwrap_or(tc.batch_size);
    tc.block_size = a.block_size.unwrap_or(tc.block_size);
    tc.blocks_per_image = a.blocks_per_image.unwrap_or(tc.blocks_per_image);
    tc.lr_loc = a.lr_loc.unwrap_or(tc.lr_loc);
    tc.lr_restore = a.lr_restore.unwrap_or(tc.lr_restore);
    tc.lr_disc = a.lr_disc.unwrap_or(tc.lr_disc);
    tc.val_fraction = a.val_fraction.unwrap_or(tc.val_fraction);
    tc.seed = cfg.resolve_seed(a.seed)?;
    tc.validate().map_err(|e| usage(e.to_string()))?;

    let init = match (tc.mode.needs_init(), &a.init) {
        (true, None) => return Err(usage(format!(
            "mode {} starts from a plain-trained localizer (M^P): pass --init <{LOCALIZER_FILE}>",
            tc.mode
        ))),
        (true, Some(p)) => Some(load_component(
            &ckpt_path(p, LOCALIZER_FILE),
            Component::Localization,
        )?),
        (false, Some(_)) => {
            return Err(usage(
                "pretrain_plain trains from scratch and takes no --init",
            ))
        }
        (false, None) => None,
    };
    let manifest = load_split(cfg, a.data, &a.split)?;
    let run_dir = cfg.resolve_run_dir(a.run_dir)?;

    let _lock = DirLock::acquire(&run_dir)?;
    let partial = Partial::begin(&run_dir, "train")?;
    let samples = manifest.load_all()?;
    write_json(&run_dir.join("train_config.json"), &tc)?;
    let log_path = run_dir.join(EPOCH_LOG_FILE);
    let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let (mode, epochs, seed) = (tc.mode, tc.epochs, tc.seed);
    let trainer = Trainer::new(tc, &samples, init.as_ref())?;
    let outcome = trainer.run(|log| {
        let line = serde_json::to_string(log)?;
        writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
        let vals: Vec<String> = log
            .val_losses
            .iter()
            .map(|(k, v)| format!("val_{k} {v:.4}"))
            .collect();
        eprintln!("epoch {}/{epochs}: {}", log.epoch, vals.join(", "));
        Ok(())
    })?;

    let mut outputs = Vec::new();
    save_checkpoint(
        &outcome.localizer_checkpoint(seed)?,
        &run_dir.join(LOCALIZER_FILE),
    )?;
    outputs.push(LOCALIZER_FILE.to_string());
    if let Some(r) = outcome.restorer_checkpoint(seed)? {
        save_checkpoint(&r, &run_dir.join(RESTORER_FILE))?;
        outputs.push(RESTORER_FILE.to_string());
    }
    outputs.push(EPOCH_LOG_FILE.to_string());
    let summary = TrainSummary {
        mode,
        epochs,
        best_epoch: outcome.best_epoch,
        samples: samples.len(),
        outputs,
    };
    write_json(&run_dir.join("summary.json"), &summary)?;
    partial.complete()?;
    println!(
        "trained {mode} for {epochs} epochs on {} samples; best epoch {}; outputs in {}",
        samples.len(),
        summary
            .best_epoch
            .map_or_else(|| "final".to_string(), |e| e.to_string()),
        run_dir.display()
    );
    Ok(())
}

/// Checkpoints for a situation: explicit paths first, then the run directory.
fn situation_checkpoints(
    cfg: &RunConfig,
    situation: Situation,
    localizer: Option<PathBuf>,
    restorer: Option<PathBuf>,
    run_dir: Option<PathBuf>,
) -> CliResult<(Checkpoint, Option<Checkpoint>)> {
    let needs_r = situation == Situation::RelocOnDistorted;
    if !needs_r && restorer.is_some() {
        return Err(usage(format!("situation {situation} uses no restorer")));
    }
    let from_run =
        |file: &str| -> CliResult<PathBuf> { Ok(cfg.resolve_run_dir(run_dir.clone())?.join(file)) };
    let l_path = match localizer {
        Some(p) => ckpt_path(&p, LOCALIZER_FILE),
        None => from_run(LOCALIZER_FILE)?,
    };
    let l = load_component(&l_path, Component::Localization)?;
    let r = if needs_r {
        let r_path = match restorer {
            Some(p) => ckpt_path(&p, RESTORER_FILE),
            None => from_run(RESTORER_FILE)?,
        };
        Some(load_component(&r_path, Component::Restoration)?)
    } else {
        None
    };
    Ok((l, r))
}

fn parse_compose(parts: &[String]) -> CliResult<(PathBuf, PathBuf)> {
    let (mut r, mut l) = (None, None);
    for p in parts {
        match p.split_once('=') {
            Some(("r", v)) => r = Some(ckpt_path(Path::new(v), RESTORER_FILE)),
            Some(("l", v)) => l = Some(ckpt_path(Path::new(v), LOCALIZER_FILE)),
            _ => {
                return Err(usage(format!(
                    "--compose expects r=<path> l=<path>, got `{p}`"
                )))
            }
        }
    }
    match (r, l) {
        (Some(r), Some(l)) => Ok((r, l)),
        _ => Err(usage("--compose needs both r=<path> and l=<path>")),
    }
}

pub fn cmd_eval(cfg: &RunConfig, a: EvalArgs) -> CliResult<()> {
    let parsed = a
        .situation
        .as_deref()
        .map(|s| s.parse::<Situation>().map_err(|e| usage(e.to_string())))
        .transpose()?;
    let (situation, label, l_ckpt, r_ckpt) = match &a.compose {
        Some(parts) => {
            if parsed.is_some_and(|s| s != Situation::RelocOnDistorted) {
                return Err(usage(
                    "--compose evaluates restored distorted images; drop --situation",
                ));
            }
            if a.localizer.is_some() || a.restorer.is_some() {
                return Err(usage("--compose replaces --localizer and --restorer"));
            }
            let (r, l) = parse_compose(parts)?;
            let l = load_component(&l, Component::Localization)?;
            let r = load_component(&r, Component::Restoration)?;
            (Situation::RelocOnDistorted, "compose", l, Some(r))
        }
        None => {
            let situation = parsed.ok_or_else(|| usage("pass --situation or --compose"))?;
            let (l, r) =
                situation_checkpoints(cfg, situation, a.localizer, a.restorer, a.run_dir.clone())?;
            (situation, situation.slug(), l, r)
        }
    };
    let qfs: Vec<Option<u8>> = if situation.distorted_input() {
        match &a.qf {
            Some(s) => parse_qfs(s)?,
            None => parse_qfs(
                &cfg.eval
                    .qfs
                    .iter()
                    .map(u8::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            )?,
        }
        .into_iter()
        .map(Some)
        .collect()
    } else {
        vec![None]
    };
    let threshold = a.threshold.unwrap_or(cfg.eval.threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(usage("--threshold must lie in (0, 1)"));
    }
    let spec = window_spec(cfg, &a.window)?;
    let manifest = load_split(cfg, a.data, &a.split)?;
    let out = match a.out {
        Some(o) => o,
        None => cfg.resolve_run_dir(a.run_dir)?.join("eval"),
    };

    let mut pipeline = Pipeline::from_checkpoints(r_ckpt.as_ref(), &l_ckpt, spec)?;
    pipeline.threshold = threshold;
    let _lock = DirLock::acquire(&out)?;
    let partial = Partial::begin(&out, "eval")?;
    let samples = manifest.load_all()?;
    for qf in qfs {
        let report = evaluate_samples(&pipeline, &samples, situation, qf)?;
        let stem = match qf {
            Some(q) => format!("{label}_qf{q}"),
            None => label.to_string(),
        };
        report.write_json(&out.join(format!("{stem}.json")))?;
        write_reports_csv(
            std::slice::from_ref(&report),
            &out.join(format!("{stem}.csv")),
        )?;
        let at = qf.map_or_else(String::new, |q| format!(" at QF {q}"));
        println!("{label}{at}: {}", report.summary());
    }
    partial.complete()
}

#[derive(Serialize)]
struct AnalysisSummary {
    situation: Situation,
    qf: Option<u8>,
    seed: u64,
    emd: f64,
    emd_standardized: f64,
    n_original: usize,
    n_tampered: usize,
}

pub fn cmd_analyze(cfg: &RunConfig, a: AnalyzeArgs) -> CliResult<()> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let situation: Situation = a
        .situation
        .parse()
        .map_err(|e: Error| usage(e.to_string()))?;
    let qf = a.qf.or(cfg.eval.qfs.first().copied()).unwrap_or(75);
    if !(1..=100).contains(&qf) {
        return Err(usage("--qf must lie in 1..=100"));
    }
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let (l_ckpt, r_ckpt) =
        situation_checkpoints(cfg, situation, a.localizer, a.restorer, a.run_dir.clone())?;
    let manifest = load_split(cfg, a.data, &a.split)?;
    let out = match a.out {
        Some(o) => o,
        None => cfg.resolve_run_dir(a.run_dir)?.join("analysis"),
    };

    let localizer = LocalizationNet::from_checkpoint(&l_ckpt)?;
    let restorer = r_ckpt
        .as_ref()
        .map(RestorationNet::from_checkpoint)
        .transpose()?;
    let _lock = DirLock::acquire(&out)?;
    let partial = Partial::begin(&out, "analyze")?;
    let samples = manifest.load_all()?;
    let inputs = analysis_inputs(&samples, situation, qf, restorer.as_ref())?;
    let refs: Vec<(&Image, &Mask)> = inputs.iter().zip(samples.iter().map(|s| &s.mask)).collect();
    let analysis =
        analyze_separability(&localizer, &refs, a.n, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let stem = situation.slug();
    analysis.write_scatter_csv(&out.join(format!("{stem}_scatter.csv")))?;
    let summary = AnalysisSummary {
        situation,
        qf: situation.distorted_input().then_some(qf),
        seed,
        emd: analysis.emd,
        emd_standardized: analysis.emd_standardized,
        n_original: analysis.n_original,
        n_tampered: analysis.n_tampered,
    };
    write_json(&out.join(format!("{stem}_features.json")), &summary)?;
    partial.complete()?;
    println!(
        "{situation}: EMD {:.6} over {} original and {} tampered pixels",
        analysis.emd, analysis.n_original, analysis.n_tampered
    );
    Ok(())
}

fn analysis_inputs(
    samples: &[Sample],
    situation: Situation,
    qf: u8,
    restorer: Option<&RestorationNet>,
) -> CliResult<Vec<Image>> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let img = if situation.distorted_input() {
            jpeg_distort(&s.plain, qf)?
        } else {
            s.plain.clone()
        };
        out.push(match restorer {
            Some(r) => r.restore(&img)?,
            None => img,
        });
    }
    Ok(out)
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn read_any(path: &Path) -> CliResult<Image> {
    let img = image::open(path).map_err(Error::from)?.to_rgb8();
    Ok(Image::from_rgb8(&img, Role::Distorted)?)
}

pub fn cmd_restore(cfg: &RunConfig, a: RestoreArgs) -> CliResult<()> {
    let r_path = match a.restorer {
        Some(p) => ckpt_path(&p, RESTORER_FILE),
        None => cfg.resolve_run_dir(a.run_dir)?.join(RESTORER_FILE),
    };
    let ckpt = load_component(&r_path, Component::Restoration)?;
    let spec = window_spec(cfg, &a.window)?;
    if !a.input.exists() {
        return Err(usage(format!("input {} does not exist", a.input.display())));
    }
    let jobs: Vec<(PathBuf, PathBuf)> = if a.input.is_dir() {
        let listing = fs::read_dir(&a.input).map_err(|e| Error::io(&a.input, e))?;
        let mut files = Vec::new();
        for item in listing {
            let p = item.map_err(|e| Error::io(&a.input, e))?.path();
            if p.is_file() && is_image(&p) {
                files.push(p);
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(usage(format!("no images in {}", a.input.display())));
        }
        files
            .into_iter()
            .map(|p| {
                let stem = p
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                (p, a.output.join(format!("{stem}.png")))
            })
            .collect()
    } else if a.output.is_dir() {
        let stem = a
            .input
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        vec![(a.input.clone(), a.output.join(format!("{stem}.png")))]
    } else {
        vec![(a.input.clone(), a.output.clone())]
    };
    let out_dir = if a.input.is_dir() || a.output.is_dir() {
        a.output.clone()
    } else {
        a.output
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    };

    let restorer = RestorationNet::from_checkpoint(&ckpt)?;
    let _lock = DirLock::acquire(&out_dir)?;
    let partial = Partial::begin(&out_dir, "restore")?;
    for (src, dst) in &jobs {
        let img = read_any(src)?;
        sliding_window_restore(&restorer, &img, &spec)?.write_png(dst)?;
    }
    partial.complete()?;
    println!(
        "restored {} image(s) into {}",
        jobs.len(),
        out_dir.display()
    );
    Ok(())
}
