//! Command-line front end: `train`, `eval` and `dump-episode`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::classifier::Variant;
use crate::config::{self, ConfigError};
use crate::locnet::SampleMode;
use crate::model::HapticModel;
use crate::nn::{write_atomic, Checkpoint};
use crate::sim::{Simulator, Split};
use crate::trainer::{self, AdvantageMode, Parallelism, TrainConfig, TrainError, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hglance", version, about = "Haptic glance training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write metrics, checkpoints and a run manifest.
    Train(TrainArgs),
    /// Per-probe accuracy of a checkpoint on fresh scenes.
    Eval(EvalArgs),
    /// Log one episode as a scene record plus one line per probe.
    DumpEpisode(DumpArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub advantage: Option<AdvantageMode>,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub episodes: usize,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulator settings; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the policy means instead of sampling.
    #[arg(long)]
    pub mean_policy: bool,
    /// CSV destination; defaults to `eval_<split>.csv` beside the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] TrainError),
    #[error("{path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(TrainError::InvalidConfig(_)) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Per-probe accuracies of one evaluation, reported from probe 2 on.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub variant: Variant,
    /// `(probe, accuracy)` with strictly increasing probe index.
    pub rows: Vec<(usize, f64)>,
}

impl ReportTable {
    pub fn from_accuracy(variant: Variant, accuracy: &[f64]) -> Self {
        let rows = accuracy.iter().enumerate().skip(1).map(|(i, &a)| (i + 1, a)).collect();
        Self { variant, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,probe,accuracy\n");
        for (k, a) in &self.rows {
            let _ = writeln!(s, "{},{},{}", self.variant, k, a);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some("variant,probe,accuracy") {
            return Err("missing header".into());
        }
        let mut variant = None;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(format!("row {}: expected 3 fields", i + 1));
            }
            let v: Variant = f[0].parse()?;
            if variant.is_some_and(|p| p != v) {
                return Err(format!("row {}: mixed variants", i + 1));
            }
            variant = Some(v);
            let k = f[1].parse().map_err(|_| format!("row {}: bad probe", i + 1))?;
            let a = f[2].parse().map_err(|_| format!("row {}: bad accuracy", i + 1))?;
            rows.push((k, a));
        }
        Ok(Self { variant: variant.ok_or("no rows")?, rows })
    }

    /// Aligned `probe  accuracy` table for the terminal.
    pub fn render(&self) -> String {
        let mut s = format!("PCRN-{}\nprobe  accuracy\n", if self.variant == Variant::Fc { "FC" } else { "N-class" });
        for (k, a) in &self.rows {
            let _ = writeln!(s, "{k:>5}  {a:>8.3}");
        }
        s
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, HapticModel), CliError> {
    let ckpt = Checkpoint::load(path).map_err(|e| CliError::Checkpoint { path: path.into(), msg: e.to_string() })?;
    let model =
        HapticModel::from_checkpoint(&ckpt).map_err(|e| CliError::Checkpoint { path: path.into(), msg: e.to_string() })?;
    Ok((ckpt, model))
}

fn simulator(config: Option<&Path>) -> Result<Simulator, CliError> {
    Ok(Simulator::new(config::parse_config(config, &[])?.sim))
}

pub fn train_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut overrides = Vec::new();
    if let Some(v) = args.steps {
        overrides.push(("steps", v.to_string()));
    }
    if let Some(v) = args.batch {
        overrides.push(("batch", v.to_string()));
    }
    if let Some(v) = args.seed {
        overrides.push(("seed", v.to_string()));
    }
    if let Some(v) = args.variant {
        overrides.push(("variant", v.to_string()));
    }
    if let Some(v) = args.advantage {
        overrides.push(("advantage", v.to_string()));
    }
    Ok(config::parse_config(args.config.as_deref(), &overrides)?)
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = train_config(args)?;
    fs::create_dir_all(&args.out).map_err(io(&args.out))?;
    let manifest_path = args.out.join("manifest.cfg");
    let comments = vec![
        format!("hglance {}", env!("CARGO_PKG_VERSION")),
        "reload with: hglance train --config manifest.cfg".to_string(),
    ];
    write_atomic(&manifest_path, config::to_manifest(&cfg, &comments).as_bytes()).map_err(io(&manifest_path))?;
    let total = cfg.steps;
    let outputs = trainer::train(&cfg, &args.out, Parallelism::from_env(), |m| {
        if m.step % 50 == 0 || m.step == total {
            eprintln!(
                "step {:>6}  acc@{} {:.3}  reward {:.3}  clip {:.3}",
                m.step,
                m.accuracy.len(),
                m.final_accuracy(),
                m.mean_reward,
                m.clip_rate
            );
        }
    })?;
    println!("checkpoint {}", outputs.checkpoint.display());
    println!("metrics {}", outputs.metrics.display());
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<ReportTable, CliError> {
    let (ckpt, model) = load_checkpoint(&args.checkpoint)?;
    let sim = simulator(args.config.as_deref())?;
    let mode = if args.mean_policy { SampleMode::Mean } else { SampleMode::Stochastic };
    let acc = trainer::evaluate(&model, &ckpt.store, &sim, args.episodes, args.split, args.seed, mode, &Parallelism::from_env())?;
    let table = ReportTable::from_accuracy(model.spec.variant, &acc);
    let out = match &args.out {
        Some(p) => p.clone(),
        None => {
            let split = if args.split == Split::Train { "train" } else { "test" };
            args.checkpoint.with_file_name(format!("eval_{split}.csv"))
        }
    };
    write_atomic(&out, table.to_csv().as_bytes()).map_err(io(&out))?;
    print!("{}", table.render());
    Ok(table)
}

/// Scene record line followed by `k Py Ux Uy Uz X Y Z T pred truth` per probe.
pub fn episode_text(traj: &Trajectory) -> String {
    let mut s = traj.scene.record();
    s.push('\n');
    for (i, st) in traj.steps.iter().enumerate() {
        let r = st.request.to_row();
        let p = st.point.to_row();
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {} {}",
            i + 1,
            r[0],
            r[1],
            r[2],
            r[3],
            p[0],
            p[1],
            p[2],
            p[3],
            st.probs.argmax(),
            traj.truth()
        );
    }
    s
}

pub fn cmd_dump(args: &DumpArgs) -> Result<String, CliError> {
    let (ckpt, model) = load_checkpoint(&args.checkpoint)?;
    let sim = simulator(args.config.as_deref())?;
    let traj = trainer::dump_episode(&model, &ckpt.store, &sim, args.split, args.seed)?;
    let text = episode_text(&traj);
    match &args.out {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(io(p))?,
        None => print!("{text}"),
    }
    Ok(text)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::DumpEpisode(a) => cmd_dump(a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trip() {
        let t = ReportTable::from_accuracy(Variant::NClass, &[0.1, 0.25, 0.5, 0.125]);
        assert_eq!(t.rows.first(), Some(&(2, 0.25)));
        assert_eq!(t.rows.len(), 3);
        assert_eq!(ReportTable::from_csv(&t.to_csv()).unwrap(), t);
        assert!(t.render().contains("    4     0.125"));
    }

    #[test]
    fn cli_parses_subcommands() {
        let cli = Cli::try_parse_from(["hglance", "train", "--config", "a.cfg", "--steps", "20", "--variant", "nclass"])
            .unwrap();
        match cli.command {
            Command::Train(a) => {
                assert_eq!(a.steps, Some(20));
                assert_eq!(a.variant, Some(Variant::NClass));
            }
            _ => panic!(),
        }
        assert!(Cli::try_parse_from(["hglance", "eval", "--checkpoint", "m", "--split", "sideways"]).is_err());
        assert!(Cli::try_parse_from(["hglance", "dump-episode", "--checkpoint", "m", "--seed", "3"]).is_ok());
    }
}
