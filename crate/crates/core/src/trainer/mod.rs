//! Episode rollouts, the hybrid policy-gradient and cross-entropy update, and training runs.

mod metrics;
mod returns;
mod rollout;
mod update;

use std::path::{Path, PathBuf};
#[cfg(test)]
use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::Variant;
use crate::locnet::{PolicyError, SampleMode};
use crate::model::{HapticModel, ModelSpec};
use crate::nn::{write_atomic, Checkpoint, NnError, ParameterStore};
use crate::sim::{SimConfig, SimError, Simulator, Split};

pub use metrics::{MetricsLog, StepMetrics, METRICS_HEADER, PROBE_METRICS_HEADER};
pub use returns::discounted_returns;
pub use rollout::{rollout, StepRecord, Trajectory};
pub use update::{
    batch_gradient, episode_gradient, episode_loss, hybrid_update, AdvantageMode, LossWeights, Optimizer,
    UpdateConfig,
};

/// Largest supported number of probes per episode.
pub const N_MAX: usize = 10;
/// Environment variable capping the number of worker threads; `0` runs everything on the caller.
pub const THREADS_ENV: &str = "HGLANCE_THREADS";

const STREAM_TRAIN: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_DUMP: u64 = 3;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in `{entry}` at step {step}")]
    NonFiniteGradient { step: u64, entry: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub n_probes: usize,
    pub gamma: f64,
    pub lr: f64,
    pub beta: f64,
    pub sigma_min: f64,
    pub seed: u64,
    pub variant: Variant,
    pub advantage: AdvantageMode,
    pub optimizer: Optimizer,
    pub checkpoint_every: u64,
    pub d_feat: usize,
    pub d_rep: usize,
    pub d_attn: usize,
    pub d_loc: usize,
    pub sim: SimConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelSpec::default();
        Self {
            steps: 8000,
            batch: 64,
            n_probes: 10,
            gamma: 0.9,
            lr: 1e-3,
            beta: 1.0,
            sigma_min: m.sigma_min,
            seed: 0,
            variant: Variant::Fc,
            advantage: AdvantageMode::Reward,
            optimizer: Optimizer::Adam,
            checkpoint_every: 500,
            d_feat: m.d_feat,
            d_rep: m.d_rep,
            d_attn: m.d_attn,
            d_loc: m.d_loc,
            sim: SimConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} must lie in [0, 1)", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr = {} must be positive", self.lr));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be non-negative", self.beta));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < 1.0) {
            return bad(format!("sigma_min = {} must lie in (0, 1)", self.sigma_min));
        }
        if self.n_probes == 0 || self.n_probes > N_MAX {
            return bad(format!("n_probes = {} must lie in [1, {N_MAX}]", self.n_probes));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1".into());
        }
        if [self.d_feat, self.d_rep, self.d_attn, self.d_loc].contains(&0) {
            return bad("layer widths must be at least 1".into());
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            n_probes: self.n_probes,
            variant: self.variant,
            d_feat: self.d_feat,
            d_rep: self.d_rep,
            d_attn: self.d_attn,
            d_loc: self.d_loc,
            sigma_min: self.sigma_min,
        }
    }

    pub fn update_config(&self) -> UpdateConfig {
        UpdateConfig { lr: self.lr, beta: self.beta, advantage: self.advantage, optimizer: self.optimizer }
    }
}

/// Where per-episode work runs. Results are always returned in episode order.
pub enum Parallelism {
    Sequential,
    Pool(rayon::ThreadPool),
}

impl Parallelism {
    pub fn with_threads(threads: usize) -> Self {
        if threads == 0 {
            return Parallelism::Sequential;
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => Parallelism::Pool(pool),
            Err(_) => Parallelism::Sequential,
        }
    }

    /// Reads the thread cap from the environment; unset means one worker per core.
    pub fn from_env() -> Self {
        match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            Some(n) => Self::with_threads(n),
            None => Self::with_threads(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }

    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Parallelism::Sequential => (0..n).map(f).collect(),
            Parallelism::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

/// Independent generator for one episode, keyed by purpose, step and index.
pub fn episode_rng(seed: u64, tag: u64, step: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag << 60 | (step & 0xF_FFFF_FFFF) << 24 | (episode & 0xFF_FFFF));
    rng
}

/// Samples a scene from `split` and rolls out one episode with its own generator.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    model: &HapticModel,
    store: &ParameterStore,
    sim: &Simulator,
    split: Split,
    gamma: f64,
    mode: SampleMode,
    mut rng: ChaCha8Rng,
) -> Result<Trajectory, TrainError> {
    let scene = sim.sample_scene(&mut rng, split)?;
    rollout(model, store, sim, scene, model.spec.n_probes, gamma, mode, &mut rng)
}

/// Stateful training loop over a fixed configuration.
pub struct Trainer {
    cfg: TrainConfig,
    sim: Simulator,
    model: HapticModel,
    store: ParameterStore,
    par: Parallelism,
    step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, par: Parallelism) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (model, store) = HapticModel::init(cfg.model_spec(), &mut rng)?;
        let sim = Simulator::new(cfg.sim.clone());
        Ok(Self { cfg, sim, model, store, par, step: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &HapticModel {
        &self.model
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.model.checkpoint(&self.store)
    }

    /// Training-split rollouts for the next step, without updating.
    pub fn sample_batch(&self) -> Result<Vec<Trajectory>, TrainError> {
        let (model, store, sim, cfg) = (&self.model, &self.store, &self.sim, &self.cfg);
        let step = self.step;
        self.par
            .map(cfg.batch, |e| {
                let rng = episode_rng(cfg.seed, STREAM_TRAIN, step, e as u64);
                run_episode(model, store, sim, Split::Train, cfg.gamma, SampleMode::Stochastic, rng)
            })
            .into_iter()
            .collect()
    }

    /// One batch of rollouts followed by one hybrid update.
    pub fn step(&mut self) -> Result<StepMetrics, TrainError> {
        let batch = self.sample_batch()?;
        let metrics = StepMetrics::from_batch(self.step + 1, &batch);
        hybrid_update(&self.model, &mut self.store, &batch, &self.cfg.update_config(), &self.par).map_err(
            |e| match e {
                TrainError::NonFiniteGradient { entry, .. } => {
                    TrainError::NonFiniteGradient { step: self.step + 1, entry }
                }
                other => other,
            },
        )?;
        self.step += 1;
        Ok(metrics)
    }
}

/// Paths written by [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutputs {
    pub metrics: PathBuf,
    pub probe_metrics: PathBuf,
    pub checkpoint: PathBuf,
}

impl TrainOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            metrics: dir.join("metrics.csv"),
            probe_metrics: dir.join("probe_metrics.csv"),
            checkpoint: dir.join("model.ckpt"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

/// Full training run. Metrics files and the checkpoint are rewritten
/// atomically every `checkpoint_every` steps and once more at the end.
pub fn train<F>(cfg: &TrainConfig, out_dir: &Path, par: Parallelism, mut on_step: F) -> Result<TrainOutputs, TrainError>
where
    F: FnMut(&StepMetrics),
{
    let mut trainer = Trainer::new(cfg.clone(), par)?;
    let outputs = TrainOutputs::in_dir(out_dir);
    let mut log = MetricsLog::new();
    let flush = |trainer: &Trainer, log: &MetricsLog| -> Result<(), TrainError> {
        write_atomic(&outputs.metrics, log.metrics_csv().as_bytes()).map_err(io_err(&outputs.metrics))?;
        write_atomic(&outputs.probe_metrics, log.probe_csv().as_bytes()).map_err(io_err(&outputs.probe_metrics))?;
        write_atomic(&outputs.checkpoint, &trainer.checkpoint().to_bytes()).map_err(io_err(&outputs.checkpoint))?;
        Ok(())
    };
    for _ in 0..cfg.steps {
        let m = trainer.step()?;
        on_step(&m);
        log.push(m);
        if trainer.steps_done() % cfg.checkpoint_every == 0 && trainer.steps_done() < cfg.steps {
            flush(&trainer, &log)?;
        }
    }
    flush(&trainer, &log)?;
    Ok(outputs)
}

/// Per-probe accuracy (index `k - 1` for probe `k`) over `episodes` fresh scenes.
pub fn evaluate(
    model: &HapticModel,
    store: &ParameterStore,
    sim: &Simulator,
    episodes: usize,
    split: Split,
    seed: u64,
    mode: SampleMode,
    par: &Parallelism,
) -> Result<Vec<f64>, TrainError> {
    let n = model.spec.n_probes;
    if episodes == 0 {
        return Err(TrainError::InvalidConfig("episodes must be at least 1".into()));
    }
    let rewards = par.map(episodes, |e| {
        let rng = episode_rng(seed, STREAM_EVAL, 0, e as u64);
        run_episode(model, store, sim, split, 0.0, mode, rng).map(|t| t.rewards())
    });
    let mut correct = vec![0.0; n];
    for r in rewards {
        for (c, v) in correct.iter_mut().zip(r?) {
            *c += v;
        }
    }
    Ok(correct.into_iter().map(|c| c / episodes as f64).collect())
}

/// One stochastic episode for inspection, fully determined by `seed`.
pub fn dump_episode(
    model: &HapticModel,
    store: &ParameterStore,
    sim: &Simulator,
    split: Split,
    seed: u64,
) -> Result<Trajectory, TrainError> {
    run_episode(model, store, sim, split, 0.0, SampleMode::Stochastic, episode_rng(seed, STREAM_DUMP, 0, 0))
}
