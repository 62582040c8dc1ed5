//! Point cloud representation network.
//!
//! Each of the request and collected-point sequences passes through its own
//! per-point context-aware block (shared per-point MLP, self-attention
//! context over the prefix of earlier probes, merge MLP). The two block
//! outputs are concatenated row-wise and fused into one embedding per probe.
//! Row `i` only ever sees probes `1..=i`.

use rand::Rng;

use crate::nn::{Activation, Linear, Mlp2, NnError, NodeId, ParamId, ParameterStore, Tape, Tensor};
use crate::sim::{CollectedPoint, ProbeRequest};

/// Width of a request row `(Py, Ux, Uy, Uz)` and a point row `(X, Y, Z, T)`.
pub const ROW_WIDTH: usize = 4;

/// Growing sequence of probe requests, one `(Py, Ux, Uy, Uz)` row per probe.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RequestSequence(Vec<[f64; 4]>);

/// Growing sequence of collected points, one `(X, Y, Z, T)` row per probe.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSequence(Vec<[f64; 4]>);

macro_rules! sequence_impl {
    ($ty:ident, $item:ty) => {
        impl $ty {
            pub fn new() -> Self {
                Self(Vec::new())
            }

            pub fn from_rows(rows: Vec<[f64; 4]>) -> Self {
                Self(rows)
            }

            pub fn push(&mut self, item: &$item) {
                self.0.push(item.to_row());
            }

            pub fn rows(&self) -> &[[f64; 4]] {
                &self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            /// First `k` rows as a `[k, 4]` tensor.
            pub fn prefix_tensor(&self, k: usize) -> Tensor {
                let data = self.0[..k].iter().flatten().copied().collect();
                Tensor::matrix(k, ROW_WIDTH, data).expect("rows are 4 wide")
            }
        }
    };
}

sequence_impl!(RequestSequence, ProbeRequest);
sequence_impl!(PointSequence, CollectedPoint);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcrnConfig {
    pub d_feat: usize,
    pub d_rep: usize,
    pub d_attn: usize,
}

impl Default for PcrnConfig {
    fn default() -> Self {
        Self { d_feat: 64, d_rep: 64, d_attn: 64 }
    }
}

/// Scoring MLP of the self-attention context. Its first layer acts on
/// `f_j ⊕ c_i` and is stored split by input block (`w_feat`, `w_ctx`).
#[derive(Clone, Copy, Debug)]
pub struct SacaAttention {
    pub w_feat: ParamId,
    pub w_ctx: ParamId,
    pub b1: ParamId,
    pub out: Linear,
}

impl SacaAttention {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        d_feat: usize,
        d_attn: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        // Glorot bound of the unsplit [2 d_feat, d_attn] layer.
        let limit = (6.0 / (2 * d_feat + d_attn) as f64).sqrt();
        let mut block = |name: &str, store: &mut ParameterStore| {
            let data = (0..d_feat * d_attn).map(|_| rng.gen_range(-limit..=limit)).collect();
            store.add(format!("{prefix}.{name}"), Tensor::matrix(d_feat, d_attn, data)?)
        };
        let w_feat = block("w_feat", store)?;
        let w_ctx = block("w_ctx", store)?;
        let b1 = store.add(format!("{prefix}.b1"), Tensor::zeros(&[d_attn]))?;
        let out = Linear::init(store, &format!("{prefix}.out"), d_attn, 1, rng)?;
        Ok(Self { w_feat, w_ctx, b1, out })
    }

    pub fn bind(store: &ParameterStore, prefix: &str) -> Result<Self, NnError> {
        Ok(Self {
            w_feat: store.id(&format!("{prefix}.w_feat"))?,
            w_ctx: store.id(&format!("{prefix}.w_ctx"))?,
            b1: store.id(&format!("{prefix}.b1"))?,
            out: Linear::bind(store, &format!("{prefix}.out"))?,
        })
    }
}

/// Shared per-point MLP applied to every row independently.
pub fn point_features(tape: &mut Tape<'_>, seq: NodeId, mlp: &Mlp2) -> Result<NodeId, NnError> {
    if tape.value(seq).rows() == 0 {
        return Err(NnError::EmptyInput("point_features"));
    }
    mlp.forward(tape, seq)
}

/// Inclusive prefix mean: row `i` averages feature rows `1..=i`.
pub fn ca_context(tape: &mut Tape<'_>, f: NodeId) -> Result<NodeId, NnError> {
    tape.prefix_mean(f)
}

/// Self-attention context: row `i` is `sum_{j<=i} softmax_j(s_ij) f_j` with
/// `s_ij = MLP_a(f_j ⊕ c_i)` and `c_i` the inclusive prefix mean at `i`.
pub fn saca_context(tape: &mut Tape<'_>, f: NodeId, attn: &SacaAttention) -> Result<NodeId, NnError> {
    let c = ca_context(tape, f)?;
    let w_feat = tape.param(attn.w_feat);
    let w_ctx = tape.param(attn.w_ctx);
    let b1 = tape.param(attn.b1);
    let from_source = tape.linear(f, w_feat, None)?;
    let from_target = tape.linear(c, w_ctx, Some(b1))?;
    let hidden = tape.pair_add(from_source, from_target)?;
    let hidden = tape.activation(hidden, Activation::Relu);
    let scores = attn.out.forward(tape, hidden)?;
    tape.causal_attend(scores, f)
}

/// Per-point context-aware representation block.
#[derive(Clone, Copy, Debug)]
pub struct P2Carb {
    pub features: Mlp2,
    pub attention: SacaAttention,
    pub merge: Mlp2,
}

impl P2Carb {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        cfg: &PcrnConfig,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let d = cfg.d_feat;
        Ok(Self {
            features: Mlp2::init(store, &format!("{prefix}.feat"), ROW_WIDTH, d, d, rng)?,
            attention: SacaAttention::init(store, &format!("{prefix}.attn"), d, cfg.d_attn, rng)?,
            merge: Mlp2::init(store, &format!("{prefix}.merge"), 2 * d, d, d, rng)?,
        })
    }

    pub fn bind(store: &ParameterStore, prefix: &str) -> Result<Self, NnError> {
        Ok(Self {
            features: Mlp2::bind(store, &format!("{prefix}.feat"))?,
            attention: SacaAttention::bind(store, &format!("{prefix}.attn"))?,
            merge: Mlp2::bind(store, &format!("{prefix}.merge"))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, seq: NodeId) -> Result<NodeId, NnError> {
        let f = point_features(tape, seq, &self.features)?;
        let ctx = saca_context(tape, f, &self.attention)?;
        let joined = tape.concat(f, ctx)?;
        self.merge.forward(tape, joined)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Pcrn {
    pub request: P2Carb,
    pub point: P2Carb,
    pub fuse: Mlp2,
}

impl Pcrn {
    pub fn init<R: Rng + ?Sized>(store: &mut ParameterStore, cfg: &PcrnConfig, rng: &mut R) -> Result<Self, NnError> {
        Ok(Self {
            request: P2Carb::init(store, "pcrn.req", cfg, rng)?,
            point: P2Carb::init(store, "pcrn.pts", cfg, rng)?,
            fuse: Mlp2::init(store, "pcrn.fuse", 2 * cfg.d_feat, cfg.d_rep, cfg.d_rep, rng)?,
        })
    }

    pub fn bind(store: &ParameterStore) -> Result<Self, NnError> {
        Ok(Self {
            request: P2Carb::bind(store, "pcrn.req")?,
            point: P2Carb::bind(store, "pcrn.pts")?,
            fuse: Mlp2::bind(store, "pcrn.fuse")?,
        })
    }

    /// Mutual representation of the first `k` probes: a `[k, d_rep]` node.
    pub fn mutual_representation(
        &self,
        tape: &mut Tape<'_>,
        requests: &RequestSequence,
        points: &PointSequence,
        k: usize,
    ) -> Result<NodeId, NnError> {
        if requests.len() != points.len() {
            return Err(NnError::ShapeMismatch {
                op: "mutual_representation",
                detail: format!("{} requests vs {} points", requests.len(), points.len()),
            });
        }
        if k == 0 {
            return Err(NnError::EmptyInput("mutual_representation"));
        }
        if k > requests.len() {
            return Err(NnError::IndexOutOfRange { index: k, len: requests.len() });
        }
        let sr = tape.input(requests.prefix_tensor(k));
        let sc = tape.input(points.prefix_tensor(k));
        let r = self.request.forward(tape, sr)?;
        let c = self.point.forward(tape, sc)?;
        let joined = tape.concat(r, c)?;
        self.fuse.forward(tape, joined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(cfg: PcrnConfig) -> (ParameterStore, Pcrn) {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pcrn = Pcrn::init(&mut store, &cfg, &mut rng).unwrap();
        (store, pcrn)
    }

    fn random_rows(n: usize, seed: u64) -> Vec<[f64; 4]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [0; 4].map(|_| rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn shared_point_mlp_is_row_independent() {
        let (store, pcrn) = setup(PcrnConfig { d_feat: 8, d_rep: 8, d_attn: 8 });
        let mut tape = Tape::new(&store);
        let rows = [[0.1, 0.2, -0.3, 0.9], [0.1, 0.2, -0.3, 0.9], [0.5, -0.5, 0.0, 0.0]];
        let x = tape.input(Tensor::from_rows(&rows).unwrap());
        let f = point_features(&mut tape, x, &pcrn.request.features).unwrap();
        let v = tape.value(f).clone();
        assert_eq!(v.row(0), v.row(1));

        let single = tape.input(Tensor::from_rows(&rows[2..]).unwrap());
        let f1 = point_features(&mut tape, single, &pcrn.request.features).unwrap();
        assert_eq!(tape.value(f1).row(0), v.row(2));

        let swapped = [rows[2], rows[0], rows[1]];
        let xs = tape.input(Tensor::from_rows(&swapped).unwrap());
        let fs = point_features(&mut tape, xs, &pcrn.request.features).unwrap();
        assert_eq!(tape.value(fs).row(0), v.row(2));
        assert_eq!(tape.value(fs).row(1), v.row(0));
    }

    #[test]
    fn ca_context_matches_direct_summation() {
        let store = ParameterStore::new();
        let mut tape = Tape::new(&store);
        let rows = random_rows(7, 3);
        let x = tape.input(Tensor::from_rows(&rows).unwrap());
        let c = ca_context(&mut tape, x).unwrap();
        for i in 0..7 {
            for d in 0..4 {
                let mut s = 0.0;
                for row in &rows[..=i] {
                    s += row[d];
                }
                assert_eq!(tape.value(c).row(i)[d], s / (i + 1) as f64);
            }
        }
    }

    #[test]
    fn saca_single_row_returns_own_feature() {
        let (store, pcrn) = setup(PcrnConfig { d_feat: 8, d_rep: 8, d_attn: 8 });
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::from_rows(&random_rows(1, 4)).unwrap());
        let f = point_features(&mut tape, x, &pcrn.point.features).unwrap();
        let s = saca_context(&mut tape, f, &pcrn.point.attention).unwrap();
        let (fv, sv) = (tape.value(f), tape.value(s));
        for (a, b) in fv.data().iter().zip(sv.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_scores_reduce_to_prefix_mean() {
        let (mut store, pcrn) = setup(PcrnConfig { d_feat: 8, d_rep: 8, d_attn: 8 });
        store.value_mut(pcrn.point.attention.out.w).fill(0.0);
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::from_rows(&random_rows(6, 5)).unwrap());
        let f = point_features(&mut tape, x, &pcrn.point.features).unwrap();
        let s = saca_context(&mut tape, f, &pcrn.point.attention).unwrap();
        let c = ca_context(&mut tape, f).unwrap();
        for (a, b) in tape.value(s).data().iter().zip(tape.value(c).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saca_target_row_ignores_order_of_earlier_rows() {
        let (store, pcrn) = setup(PcrnConfig::default());
        let rows = random_rows(5, 6);
        let mut permuted = rows.clone();
        permuted[..4].reverse();
        let eval = |rows: &[[f64; 4]]| {
            let mut tape = Tape::new(&store);
            let x = tape.input(Tensor::from_rows(rows).unwrap());
            let f = point_features(&mut tape, x, &pcrn.point.features).unwrap();
            let s = saca_context(&mut tape, f, &pcrn.point.attention).unwrap();
            tape.value(s).row(4).to_vec()
        };
        for (a, b) in eval(&rows).iter().zip(eval(&permuted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn representation_shape_and_finiteness() {
        let (store, pcrn) = setup(PcrnConfig::default());
        let sr = RequestSequence::from_rows(random_rows(10, 7));
        let sc = PointSequence::from_rows(random_rows(10, 8));
        let mut tape = Tape::new(&store);
        let rep = pcrn.mutual_representation(&mut tape, &sr, &sc, 10).unwrap();
        assert_eq!(tape.value(rep).shape(), &[10, 64]);
        assert!(tape.value(rep).is_finite());
    }

    #[test]
    fn misaligned_sequences_rejected() {
        let (store, pcrn) = setup(PcrnConfig { d_feat: 8, d_rep: 8, d_attn: 8 });
        let sr = RequestSequence::from_rows(random_rows(3, 1));
        let sc = PointSequence::from_rows(random_rows(2, 2));
        let mut tape = Tape::new(&store);
        assert!(matches!(
            pcrn.mutual_representation(&mut tape, &sr, &sc, 2),
            Err(NnError::ShapeMismatch { .. })
        ));
    }
}
