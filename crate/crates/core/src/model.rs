//! The full parameterized agent: representation trunk, policy, classifier and baseline.

use rand::Rng;

use crate::classifier::{Classifier, Variant};
use crate::locnet::LocationNet;
use crate::nn::{Checkpoint, Mlp2, NnError, NodeId, ParameterStore, Tape, Tensor};
use crate::pcrn::{Pcrn, PcrnConfig};

const SPEC_ENTRY: &str = "meta.model";

/// Hidden width of the baseline head.
pub const BASELINE_HIDDEN: usize = 16;

/// Architecture hyperparameters; persisted in checkpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub n_probes: usize,
    pub variant: Variant,
    pub d_feat: usize,
    pub d_rep: usize,
    pub d_attn: usize,
    pub d_loc: usize,
    pub sigma_min: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { n_probes: 10, variant: Variant::Fc, d_feat: 64, d_rep: 64, d_attn: 64, d_loc: 64, sigma_min: 0.01 }
    }
}

impl ModelSpec {
    pub fn pcrn(&self) -> PcrnConfig {
        PcrnConfig { d_feat: self.d_feat, d_rep: self.d_rep, d_attn: self.d_attn }
    }

    fn to_tensor(self) -> Tensor {
        Tensor::row_vector(vec![
            self.n_probes as f64,
            self.variant.code(),
            self.d_feat as f64,
            self.d_rep as f64,
            self.d_attn as f64,
            self.d_loc as f64,
            self.sigma_min,
        ])
    }

    fn from_tensor(t: &Tensor) -> Result<Self, NnError> {
        let d = t.data();
        if d.len() != 7 {
            return Err(NnError::Checkpoint(format!("{SPEC_ENTRY} has {} values, expected 7", d.len())));
        }
        let variant = Variant::from_code(d[1])
            .ok_or_else(|| NnError::Checkpoint(format!("unknown classifier variant code {}", d[1])))?;
        Ok(Self {
            n_probes: d[0] as usize,
            variant,
            d_feat: d[2] as usize,
            d_rep: d[3] as usize,
            d_attn: d[4] as usize,
            d_loc: d[5] as usize,
            sigma_min: d[6],
        })
    }
}

#[derive(Clone, Debug)]
pub struct HapticModel {
    pub spec: ModelSpec,
    pub pcrn: Pcrn,
    pub locnet: LocationNet,
    pub classifier: Classifier,
    pub baseline: Mlp2,
}

impl HapticModel {
    /// Fresh parameters, initialized in a fixed order from `rng`.
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<(Self, ParameterStore), NnError> {
        let mut store = ParameterStore::new();
        let pcrn = Pcrn::init(&mut store, &spec.pcrn(), rng)?;
        let locnet = LocationNet::init(&mut store, spec.d_rep, spec.d_loc, spec.sigma_min, rng)?;
        let classifier = Classifier::init(&mut store, spec.variant, spec.d_rep, spec.n_probes, rng)?;
        let baseline = Mlp2::init(&mut store, "baseline", spec.d_rep, BASELINE_HIDDEN, 1, rng)?;
        Ok((Self { spec, pcrn, locnet, classifier, baseline }, store))
    }

    pub fn bind(spec: ModelSpec, store: &ParameterStore) -> Result<Self, NnError> {
        Ok(Self {
            spec,
            pcrn: Pcrn::bind(store)?,
            locnet: LocationNet::bind(store, spec.sigma_min)?,
            classifier: Classifier::bind(store, spec.variant, spec.n_probes)?,
            baseline: Mlp2::bind(store, "baseline")?,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, NnError> {
        let t = ckpt
            .meta(SPEC_ENTRY)
            .ok_or_else(|| NnError::Checkpoint(format!("missing {SPEC_ENTRY}")))?;
        Self::bind(ModelSpec::from_tensor(t)?, &ckpt.store)
    }

    pub fn checkpoint(&self, store: &ParameterStore) -> Checkpoint {
        Checkpoint { meta: vec![(SPEC_ENTRY.to_string(), self.spec.to_tensor())], store: store.clone() }
    }

    /// Mean of the first `k` rows of `rep`, or the zero start token when `k = 0`.
    pub fn pooled(&self, tape: &mut Tape<'_>, rep: Option<NodeId>, k: usize) -> Result<NodeId, NnError> {
        match (rep, k) {
            (_, 0) | (None, _) => Ok(self.locnet.start_token(tape)),
            (Some(r), k) => tape.mean_rows(r, k),
        }
    }
}
