use hglance::classifier::{Classifier, Variant};
use hglance::locnet::{score_mu, score_sigma, Component, LocationNet};
use hglance::nn::{
    grad_check, grad_check_sampled, sigmoid, softmax_cross_entropy, Activation, Linear, ParameterStore, Tape, Tensor,
};
use hglance::pcrn::{Pcrn, PcrnConfig, PointSequence, RequestSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sequences(n: usize, rng: &mut ChaCha8Rng) -> (RequestSequence, PointSequence) {
    let mut r = Vec::new();
    let mut p = Vec::new();
    for _ in 0..n {
        r.push([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), -rng.gen_range(0.2..1.0)]);
        let t = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        p.push([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..0.0), t]);
    }
    (RequestSequence::from_rows(r), PointSequence::from_rows(p))
}

fn jitter(store: &mut ParameterStore, rng: &mut ChaCha8Rng, amount: f64) {
    let ids: Vec<_> = store.entries().iter().map(|e| e.name.clone()).collect();
    for name in ids {
        let id = store.id(&name).unwrap();
        for v in store.value_mut(id).data_mut() {
            *v += rng.gen_range(-amount..amount);
        }
    }
}

#[test]
fn linear_layer_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParameterStore::new();
    let l = Linear::init(&mut store, "l", 3, 2, &mut rng).unwrap();
    jitter(&mut store, &mut rng, 0.5);
    let x = Tensor::matrix(2, 3, vec![0.3, -0.2, 0.9, 1.1, 0.0, -0.4]).unwrap();
    let f = |tape: &mut Tape<'_>| {
        let xi = tape.input(x.clone());
        let y = l.forward(tape, xi)?;
        let y = tape.activation(y, Activation::Tanh);
        let pooled = tape.mean_rows(y, 2)?;
        tape.softmax_cross_entropy(pooled, 1)
    };
    let r = grad_check(f, &mut store, 1e-5).unwrap();
    assert_eq!(r.checked, 8);
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn sigmoid_derivative_at_zero() {
    let mut store = ParameterStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.variable(Tensor::scalar(0.0));
    let y = tape.activation(x, Activation::Sigmoid);
    assert_eq!(tape.value(y).item(), 0.5);
    let mut buf = store.grad_buffer();
    let grads = tape.backward_scalar(y, &mut buf).unwrap();
    assert_eq!(grads.get(x).unwrap().item(), 0.25);
    let h = 1e-6;
    let numeric = (sigmoid(h) - sigmoid(-h)) / (2.0 * h);
    assert!((numeric - 0.25).abs() < 1e-10);
    store = ParameterStore::new();
    assert!(store.is_empty());
}

#[test]
fn cross_entropy_gradient_is_probs_minus_one_hot() {
    let store = ParameterStore::new();
    let logits = vec![0.2, -1.3, 2.0, 0.7];
    let mut tape = Tape::new(&store);
    let z = tape.variable(Tensor::row_vector(logits.clone()));
    let loss = tape.softmax_cross_entropy(z, 2).unwrap();
    let mut buf = store.grad_buffer();
    let grads = tape.backward_scalar(loss, &mut buf).unwrap();
    let ce = softmax_cross_entropy(&logits, 2);
    let g = grads.get(z).unwrap().data().to_vec();
    // independent: softmax by hand
    let m = logits.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    for (i, gi) in g.iter().enumerate() {
        let expected = e[i] / s - if i == 2 { 1.0 } else { 0.0 };
        assert!((gi - expected).abs() < 1e-14);
        assert!((ce.grad(2)[i] - expected).abs() < 1e-14);
    }
    assert!((tape.value(loss).item() - (s.ln() + m - logits[2])).abs() < 1e-14);
}

fn composite_store(variant: Variant, seed: u64) -> (ParameterStore, Pcrn, Classifier, LocationNet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let cfg = PcrnConfig { d_feat: 6, d_rep: 6, d_attn: 5 };
    let pcrn = Pcrn::init(&mut store, &cfg, &mut rng).unwrap();
    let clf = Classifier::init(&mut store, variant, 6, 5, &mut rng).unwrap();
    let loc = LocationNet::init(&mut store, 6, 7, 0.01, &mut rng).unwrap();
    jitter(&mut store, &mut rng, 0.2);
    (store, pcrn, clf, loc)
}

#[test]
fn classifier_heads_pass_grad_check() {
    for (trial, variant) in [Variant::Fc, Variant::NClass, Variant::Fc, Variant::NClass].into_iter().enumerate() {
        let (mut store, pcrn, clf, _) = composite_store(variant, 100 + trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(trial as u64);
        let (req, pts) = random_sequences(5, &mut rng);
        let label = trial % 4;
        let f = |tape: &mut Tape<'_>| {
            let rep = pcrn.mutual_representation(tape, &req, &pts, 5)?;
            let mut terms = Vec::new();
            for k in 1..=5 {
                let logits = clf.logits(tape, rep, k)?;
                terms.push((tape.softmax_cross_entropy(logits, label)?, 1.0));
            }
            tape.weighted_sum(terms)
        };
        let r = grad_check_sampled(f, &mut store, 1e-5, 4, &mut rng).unwrap();
        assert!(r.checked > 50, "{r:?}");
        assert!(r.max_rel_error < 1e-4, "{variant:?}: {r:?}");
    }
}

#[test]
fn policy_surrogate_passes_grad_check() {
    // advantage-weighted log-density through the location heads and the trunk
    for trial in 0..4u64 {
        let (mut store, pcrn, _, loc) = composite_store(Variant::Fc, 200 + trial);
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let (req, pts) = random_sequences(4, &mut rng);
        let action: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let raw: [f64; 4] = std::array::from_fn(|i| action[i] + rng.gen_range(-0.1..0.1));
        let advantage = rng.gen_range(-1.0..1.0);
        let f = |tape: &mut Tape<'_>| {
            let rep = pcrn.mutual_representation(tape, &req, &pts, 4)?;
            let pooled = tape.mean_rows(rep, 3)?;
            let mut terms = Vec::new();
            for c in Component::ALL {
                let (mu, sigma) = loc.predict_params(tape, pooled, &action, c)?;
                terms.push((tape.gaussian_log_density(mu, sigma, raw[c.index()])?, advantage));
            }
            tape.weighted_sum(terms)
        };
        let r = grad_check_sampled(f, &mut store, 1e-5, 4, &mut rng).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}

#[test]
fn log_density_backward_uses_score_functions() {
    let store = ParameterStore::new();
    let mut tape = Tape::new(&store);
    let mu = tape.variable(Tensor::scalar(0.1));
    let sigma = tape.variable(Tensor::scalar(0.3));
    let lp = tape.gaussian_log_density(mu, sigma, 0.55).unwrap();
    let mut buf = store.grad_buffer();
    let g = tape.backward_scalar(lp, &mut buf).unwrap();
    assert!((g.get(mu).unwrap().item() - score_mu(0.55, 0.1, 0.3)).abs() < 1e-14);
    assert!((g.get(sigma).unwrap().item() - score_sigma(0.55, 0.1, 0.3)).abs() < 1e-14);
    assert!((g.get(mu).unwrap().item() - 0.45 / 0.09).abs() < 1e-12);
}
