use std::fmt::Write;

use crate::locnet::Component;

use super::Trajectory;

pub const METRICS_HEADER: &str =
    "step,episodes,probe,accuracy,mean_reward,mean_sigma_py,mean_sigma_ux,mean_sigma_uy,mean_sigma_uz,clip_rate";
pub const PROBE_METRICS_HEADER: &str = "step,probe,accuracy";

/// Batch statistics of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub episodes: usize,
    /// Accuracy per probe, index `k - 1` for probe `k`.
    pub accuracy: Vec<f64>,
    pub mean_reward: f64,
    pub mean_sigma: [f64; 4],
    pub mean_mu: [f64; 4],
    pub clip_rate: f64,
    /// Fraction of probes that touched the object.
    pub touch_rate: f64,
}

impl StepMetrics {
    pub fn from_batch(step: u64, batch: &[Trajectory]) -> Self {
        let n = batch.first().map_or(0, |t| t.len());
        let mut accuracy = vec![0.0; n];
        let mut sigma = [0.0; 4];
        let mut mu = [0.0; 4];
        let mut touched = 0usize;
        let mut clipped = 0usize;
        let mut reward = 0.0;
        for t in batch {
            for (k, s) in t.steps.iter().enumerate() {
                accuracy[k] += s.reward;
                reward += s.reward;
                for c in Component::ALL {
                    sigma[c.index()] += s.policy.sigma[c.index()];
                    mu[c.index()] += s.policy.mu[c.index()];
                }
                touched += usize::from(s.point.touched);
                clipped += s.policy.clipped();
            }
        }
        let b = batch.len().max(1) as f64;
        let steps = b * n.max(1) as f64;
        for a in &mut accuracy {
            *a /= b;
        }
        Self {
            step,
            episodes: batch.len(),
            accuracy,
            mean_reward: reward / steps,
            mean_sigma: sigma.map(|s| s / steps),
            mean_mu: mu.map(|m| m / steps),
            clip_rate: clipped as f64 / (4.0 * steps),
            touch_rate: touched as f64 / steps,
        }
    }

    /// Accuracy at the last probe.
    pub fn final_accuracy(&self) -> f64 {
        self.accuracy.last().copied().unwrap_or(0.0)
    }
}

/// Accumulated per-step metrics rendered as CSV.
#[derive(Clone, Debug, Default)]
pub struct MetricsLog {
    rows: Vec<StepMetrics>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, m: StepMetrics) {
        self.rows.push(m);
    }

    pub fn rows(&self) -> &[StepMetrics] {
        &self.rows
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for m in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                m.step,
                m.episodes,
                m.accuracy.len(),
                m.final_accuracy(),
                m.mean_reward,
                m.mean_sigma[0],
                m.mean_sigma[1],
                m.mean_sigma[2],
                m.mean_sigma[3],
                m.clip_rate
            );
        }
        s
    }

    pub fn probe_csv(&self) -> String {
        let mut s = String::from(PROBE_METRICS_HEADER);
        s.push('\n');
        for m in &self.rows {
            for (k, a) in m.accuracy.iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", m.step, k + 1, a);
            }
        }
        s
    }
}
