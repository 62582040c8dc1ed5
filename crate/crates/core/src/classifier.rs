//! Per-probe object classifiers over the mutual representation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::nn::{softmax, Mlp2, NnError, NodeId, ParameterStore, Tape};
use crate::sim::NUM_OBJECTS;

/// Hidden width of the pooled classifier head.
pub const FC_HIDDEN: usize = 32;
/// Hidden width of each per-probe classifier head.
pub const NCLASS_HIDDEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    /// Mean-pool rows `1..=k` and apply one shared head.
    #[default]
    Fc,
    /// Select row `k` with the probe mask and apply head `k`.
    NClass,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Fc => "fc",
            Variant::NClass => "nclass",
        }
    }

    pub fn code(self) -> f64 {
        match self {
            Variant::Fc => 0.0,
            Variant::NClass => 1.0,
        }
    }

    pub fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            0 => Some(Variant::Fc),
            1 => Some(Variant::NClass),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fc" | "pcrn-fc" => Ok(Variant::Fc),
            "nclass" | "n-class" | "pcrn-n-class" => Ok(Variant::NClass),
            other => Err(format!("unknown classifier variant `{other}` (expected fc or nclass)")),
        }
    }
}

/// One-hot selector over `n` probes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeMask(Vec<f64>);

impl ProbeMask {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn selected(&self) -> usize {
        self.0.iter().position(|&v| v == 1.0).expect("one-hot") + 1
    }
}

/// Mask selecting probe `k` (1-based) out of `n`.
pub fn probe_mask(n: usize, k: usize) -> Result<ProbeMask, NnError> {
    if k == 0 || k > n {
        return Err(NnError::IndexOutOfRange { index: k, len: n });
    }
    let mut m = vec![0.0; n];
    m[k - 1] = 1.0;
    Ok(ProbeMask(m))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassProbabilities(Vec<f64>);

impl ClassProbabilities {
    pub fn from_logits(logits: &[f64]) -> Self {
        Self(softmax(logits))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Most probable class; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Debug)]
pub enum Classifier {
    Fc(Mlp2),
    NClass(Vec<Mlp2>),
}

impl Classifier {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        variant: Variant,
        d_rep: usize,
        n_probes: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(match variant {
            Variant::Fc => Classifier::Fc(Mlp2::init(store, "clf.fc", d_rep, FC_HIDDEN, NUM_OBJECTS, rng)?),
            Variant::NClass => Classifier::NClass(
                (1..=n_probes)
                    .map(|k| Mlp2::init(store, &format!("clf.n.{k}"), d_rep, NCLASS_HIDDEN, NUM_OBJECTS, rng))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    pub fn bind(store: &ParameterStore, variant: Variant, n_probes: usize) -> Result<Self, NnError> {
        Ok(match variant {
            Variant::Fc => Classifier::Fc(Mlp2::bind(store, "clf.fc")?),
            Variant::NClass => Classifier::NClass(
                (1..=n_probes)
                    .map(|k| Mlp2::bind(store, &format!("clf.n.{k}")))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    pub fn variant(&self) -> Variant {
        match self {
            Classifier::Fc(_) => Variant::Fc,
            Classifier::NClass(_) => Variant::NClass,
        }
    }

    /// Class logits `[1, 4]` after probe `k` from the `[rows, d_rep]` representation `rep`.
    pub fn logits(&self, tape: &mut Tape<'_>, rep: NodeId, k: usize) -> Result<NodeId, NnError> {
        let rows = tape.value(rep).rows();
        if k == 0 || k > rows {
            return Err(NnError::IndexOutOfRange { index: k, len: rows });
        }
        match self {
            Classifier::Fc(head) => {
                let pooled = tape.mean_rows(rep, k)?;
                head.forward(tape, pooled)
            }
            Classifier::NClass(heads) => {
                let head = heads.get(k - 1).ok_or(NnError::IndexOutOfRange { index: k, len: heads.len() })?;
                let mask = probe_mask(rows, k)?;
                let row = tape.mask_rows(rep, mask.0)?;
                head.forward(tape, row)
            }
        }
    }

    pub fn classify(&self, tape: &mut Tape<'_>, rep: NodeId, k: usize) -> Result<ClassProbabilities, NnError> {
        let logits = self.logits(tape, rep, k)?;
        Ok(ClassProbabilities::from_logits(tape.value(logits).data()))
    }
}
