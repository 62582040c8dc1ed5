use std::fmt;
use std::str::FromStr;

use crate::locnet::Component;
use crate::model::HapticModel;
use crate::nn::{adam_step, sgd_step, GradBuffer, NnError, NodeId, ParameterStore, Tape};

use super::{Parallelism, TrainError, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AdvantageMode {
    /// `A_k = r_k - b_k`.
    #[default]
    Reward,
    /// `A_k = G_k - b_k`.
    Return,
}

impl AdvantageMode {
    pub fn name(self) -> &'static str {
        match self {
            AdvantageMode::Reward => "reward",
            AdvantageMode::Return => "return",
        }
    }
}

impl fmt::Display for AdvantageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdvantageMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "reward" => Ok(AdvantageMode::Reward),
            "return" => Ok(AdvantageMode::Return),
            other => Err(format!("unknown advantage mode `{other}` (expected reward or return)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        }
    }
}

impl FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(format!("unknown optimizer `{other}` (expected adam or sgd)")),
        }
    }
}

/// Weights of the three loss terms for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub beta: f64,
    pub advantage: AdvantageMode,
    /// Per-episode scale, normally `1 / batch`.
    pub scale: f64,
}

fn target(mode: AdvantageMode, reward: f64, ret: f64) -> f64 {
    match mode {
        AdvantageMode::Reward => reward,
        AdvantageMode::Return => ret,
    }
}

/// Builds the episode loss on `tape`:
/// `sum_k [ -beta A_k sum_c log N(x_c; mu_c, sigma_c) + CE_k + 0.5 (b_k - target_k)^2 ]`, times `scale`.
///
/// `A_k` uses the baseline recorded during the rollout as a constant; the
/// baseline head sees a detached copy of the pooled representation.
pub fn episode_loss(
    tape: &mut Tape<'_>,
    model: &HapticModel,
    traj: &Trajectory,
    w: &LossWeights,
) -> Result<NodeId, NnError> {
    let n = traj.len();
    let rep = model.pcrn.mutual_representation(tape, &traj.requests(), &traj.points(), n)?;
    let mut terms = Vec::with_capacity(n * 6);
    for (i, step) in traj.steps.iter().enumerate() {
        let k = i + 1;
        let pooled = model.pooled(tape, Some(rep), k - 1)?;
        let tgt = target(w.advantage, step.reward, step.ret);
        if w.beta != 0.0 {
            let advantage = tgt - step.baseline;
            for c in Component::ALL {
                let (mu, sigma) = model.locnet.predict_params(tape, pooled, &step.policy.action, c)?;
                let lp = tape.gaussian_log_density(mu, sigma, step.policy.raw[c.index()])?;
                terms.push((lp, -w.beta * advantage * w.scale));
            }
        }
        let logits = model.classifier.logits(tape, rep, k)?;
        let ce = tape.softmax_cross_entropy(logits, traj.truth())?;
        terms.push((ce, w.scale));
        let detached = tape.input(tape.value(pooled).clone());
        let b = model.baseline.forward(tape, detached)?;
        let se = tape.squared_error(b, tgt)?;
        terms.push((se, w.scale));
    }
    tape.weighted_sum(terms)
}

/// Gradient of [`episode_loss`] with respect to every parameter.
pub fn episode_gradient(
    model: &HapticModel,
    store: &ParameterStore,
    traj: &Trajectory,
    w: &LossWeights,
) -> Result<GradBuffer, NnError> {
    let mut buf = store.grad_buffer();
    let mut tape = Tape::new(store);
    let loss = episode_loss(&mut tape, model, traj, w)?;
    tape.backward_scalar(loss, &mut buf)?;
    Ok(buf)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateConfig {
    pub lr: f64,
    pub beta: f64,
    pub advantage: AdvantageMode,
    pub optimizer: Optimizer,
}

/// Batch gradient summed in episode order, so the result does not depend on
/// how episodes were scheduled.
pub fn batch_gradient(
    model: &HapticModel,
    store: &ParameterStore,
    batch: &[Trajectory],
    beta: f64,
    advantage: AdvantageMode,
    par: &Parallelism,
) -> Result<GradBuffer, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyInput("batch_gradient"));
    }
    let w = LossWeights { beta, advantage, scale: 1.0 / batch.len() as f64 };
    let grads = par.map(batch.len(), |e| episode_gradient(model, store, &batch[e], &w));
    let mut total = store.grad_buffer();
    for g in grads {
        total.add_assign(&g?);
    }
    Ok(total)
}

/// One optimizer step on the hybrid loss of `batch`.
pub fn hybrid_update(
    model: &HapticModel,
    store: &mut ParameterStore,
    batch: &[Trajectory],
    cfg: &UpdateConfig,
    par: &Parallelism,
) -> Result<(), TrainError> {
    let grad = batch_gradient(model, store, batch, cfg.beta, cfg.advantage, par)?;
    store.zero_grads();
    store.accumulate(&grad);
    if let Some(name) = store.first_non_finite_grad() {
        return Err(TrainError::NonFiniteGradient { step: store.optimizer_steps() + 1, entry: name.to_string() });
    }
    match cfg.optimizer {
        Optimizer::Adam => adam_step(store, cfg.lr, 0.9, 0.999, 1e-8),
        Optimizer::Sgd => sgd_step(store, cfg.lr),
    }
    Ok(())
}
