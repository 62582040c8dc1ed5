//! Central-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::{NnError, NodeId, ParamId, ParameterStore, Tape};

/// Denominator floor for relative error, so that gradients of order
/// round-off are compared absolutely.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Entry name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates whose ±h perturbation crossed a relu or floor kink.
    pub skipped_kinks: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks every parameter coordinate of a scalar function built on a tape.
pub fn grad_check<F>(f: F, store: &mut ParameterStore, h: f64) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId, NnError>,
{
    let coords = store
        .entries()
        .iter()
        .enumerate()
        .flat_map(|(i, e)| (0..e.value.len()).map(move |j| (ParamId(i), j)))
        .collect();
    check_coords(&f, store, h, coords)
}

/// Like [`grad_check`] but only `per_entry` random coordinates of each entry.
pub fn grad_check_sampled<F, R>(
    f: F,
    store: &mut ParameterStore,
    h: f64,
    per_entry: usize,
    rng: &mut R,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId, NnError>,
    R: Rng + ?Sized,
{
    let mut coords = Vec::new();
    for (i, e) in store.entries().iter().enumerate() {
        let n = e.value.len();
        for j in sample(rng, n, per_entry.min(n)).into_iter() {
            coords.push((ParamId(i), j));
        }
    }
    check_coords(&f, store, h, coords)
}

fn eval<F>(f: &F, store: &ParameterStore) -> Result<(f64, Vec<bool>), NnError>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId, NnError>,
{
    let mut tape = Tape::new(store);
    let out = f(&mut tape)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(NnError::ShapeMismatch {
            op: "grad_check",
            detail: format!("function must be scalar, got {:?}", v.shape()),
        });
    }
    Ok((v.item(), tape.kink_signature().to_vec()))
}

fn check_coords<F>(
    f: &F,
    store: &mut ParameterStore,
    h: f64,
    coords: Vec<(ParamId, usize)>,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId, NnError>,
{
    let mut buf = store.grad_buffer();
    let base_kinks = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        tape.backward_scalar(out, &mut buf)?;
        tape.kink_signature().to_vec()
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    for (id, j) in coords {
        let orig = store.value(id).data()[j];
        store.value_mut(id).data_mut()[j] = orig + h;
        let (fp, kp) = eval(f, store)?;
        store.value_mut(id).data_mut()[j] = orig - h;
        let (fm, km) = eval(f, store)?;
        store.value_mut(id).data_mut()[j] = orig;
        if kp != base_kinks || km != base_kinks {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = buf.get(id).data()[j];
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((store.entry(id).name.clone(), j));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Linear, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_matches_central_difference() {
        let mut store = ParameterStore::new();
        let w = store.add("w", Tensor::scalar(3.0)).unwrap();
        let f = |tape: &mut Tape<'_>| {
            let p = tape.param(w);
            // 0.5 (w - 0)^2 * 2 = w^2
            let se = tape.squared_error(p, 0.0)?;
            tape.weighted_sum(vec![(se, 2.0)])
        };
        let mut buf = store.grad_buffer();
        {
            let mut tape = Tape::new(&store);
            let out = f(&mut tape).unwrap();
            tape.backward_scalar(out, &mut buf).unwrap();
        }
        assert_eq!(buf.get(w).item(), 6.0);
        let h: f64 = 1e-4;
        let numeric = ((3.0 + h) * (3.0 + h) - (3.0 - h) * (3.0 - h)) / (2.0 * h);
        assert!((numeric - 6.0).abs() < 1e-9);
        let r = grad_check(f, &mut store, h).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let mut store = ParameterStore::new();
        store.add("w", Tensor::row_vector(vec![1.0, 2.0])).unwrap();
        let f = |tape: &mut Tape<'_>| {
            let c = tape.input(Tensor::scalar(4.2));
            tape.weighted_sum(vec![(c, 1.0)])
        };
        let r = grad_check(f, &mut store, 1e-5).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn linear_tanh_pool_ce_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParameterStore::new();
        // 6*16 + 16 + 16*5 + 5 = 197 parameters
        let l1 = Linear::init(&mut store, "l1", 6, 16, &mut rng).unwrap();
        let l2 = Linear::init(&mut store, "l2", 16, 5, &mut rng).unwrap();
        for e in store.entries_mut() {
            for v in e.value.data_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
        }
        let x: Vec<f64> = (0..5 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::matrix(5, 6, x).unwrap();
        let f = |tape: &mut Tape<'_>| {
            let xi = tape.input(x.clone());
            let h = l1.forward(tape, xi)?;
            let h = tape.activation(h, Activation::Tanh);
            let h = l2.forward(tape, h)?;
            let pooled = tape.mean_rows(h, 5)?;
            tape.softmax_cross_entropy(pooled, 3)
        };
        assert_eq!(store.num_values(), 197);
        let r = grad_check(f, &mut store, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        assert_eq!(r.checked, 197);
    }
}
