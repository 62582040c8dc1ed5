use rand::Rng;

use crate::classifier::ClassProbabilities;
use crate::locnet::{PolicyStep, SampleMode};
use crate::model::HapticModel;
use crate::nn::{ParameterStore, Tape, Tensor};
use crate::pcrn::{PointSequence, RequestSequence};
use crate::sim::{action_to_probe, CollectedPoint, ProbeRequest, Scene, Simulator};

use super::{discounted_returns, TrainError};

/// Everything recorded at one probe of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub policy: PolicyStep,
    pub request: ProbeRequest,
    pub point: CollectedPoint,
    pub probs: ClassProbabilities,
    pub reward: f64,
    pub ret: f64,
    pub baseline: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub scene: Scene,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn truth(&self) -> usize {
        self.scene.object_id
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn requests(&self) -> RequestSequence {
        let mut s = RequestSequence::new();
        for st in &self.steps {
            s.push(&st.request);
        }
        s
    }

    pub fn points(&self) -> PointSequence {
        let mut s = PointSequence::new();
        for st in &self.steps {
            s.push(&st.point);
        }
        s
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Runs `n_probes` glances on `scene` with the current parameters.
///
/// Each probe samples an action from the pooled representation of the
/// completed probes, casts it into the scene, re-embeds the grown
/// sequences and classifies.
#[allow(clippy::too_many_arguments)]
pub fn rollout<R: Rng + ?Sized>(
    model: &HapticModel,
    store: &ParameterStore,
    sim: &Simulator,
    scene: Scene,
    n_probes: usize,
    gamma: f64,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Trajectory, TrainError> {
    let mut requests = RequestSequence::new();
    let mut points = PointSequence::new();
    let mut steps = Vec::with_capacity(n_probes);
    let mut pooled_value = Tensor::zeros(&[1, model.spec.d_rep]);
    for k in 1..=n_probes {
        let mut tape = Tape::new(store);
        let pooled = tape.input(pooled_value);
        let policy = model.locnet.sample_action(&mut tape, pooled, rng, mode)?;
        let b = model.baseline.forward(&mut tape, pooled)?;
        let baseline = tape.value(b).item();
        let request = action_to_probe(policy.action)?;
        let point = sim.ray_cast(&scene, &request);
        requests.push(&request);
        points.push(&point);
        let rep = model.pcrn.mutual_representation(&mut tape, &requests, &points, k)?;
        let probs = model.classifier.classify(&mut tape, rep, k)?;
        let reward = if probs.argmax() == scene.object_id { 1.0 } else { 0.0 };
        let pooled_next = tape.mean_rows(rep, k)?;
        pooled_value = tape.value(pooled_next).clone();
        steps.push(StepRecord { policy, request, point, probs, reward, ret: 0.0, baseline });
    }
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
    for (s, g) in steps.iter_mut().zip(discounted_returns(&rewards, gamma)) {
        s.ret = g;
    }
    Ok(Trajectory { scene, steps })
}
