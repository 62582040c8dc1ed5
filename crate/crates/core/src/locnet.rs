//! Location network: an autoregressive Gaussian policy over the next probe.
//!
//! The four request components are emitted in the fixed order
//! `Py -> Ux -> Uy -> Uz`. Each component has its own head that sees the
//! pooled representation of completed probes plus the already-sampled
//! components, with not-yet-sampled slots zeroed and flagged in a 0/1 mask.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::{Activation, Linear, NnError, NodeId, ParameterStore, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Component {
    Py = 0,
    Ux = 1,
    Uy = 2,
    Uz = 3,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Py, Component::Ux, Component::Uy, Component::Uz];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Py => "py",
            Component::Ux => "ux",
            Component::Uy => "uy",
            Component::Uz => "uz",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("partial action for {component:?} must fix exactly the earlier components")]
    OrderViolation { component: Component },
    #[error("sigma {sigma} below floor {sigma_min}")]
    SigmaTooSmall { sigma: f64, sigma_min: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// `d log N(x; mu, sigma) / d mu`, without range checks.
#[inline]
pub fn score_mu(x: f64, mu: f64, sigma: f64) -> f64 {
    (x - mu) / (sigma * sigma)
}

/// `d log N(x; mu, sigma) / d sigma`, without range checks.
#[inline]
pub fn score_sigma(x: f64, mu: f64, sigma: f64) -> f64 {
    let d = x - mu;
    (d * d - sigma * sigma) / (sigma * sigma * sigma)
}

/// Log-likelihood gradient with respect to the mean: `(x - mu) / sigma^2`.
pub fn xi_mu(x: f64, mu: f64, sigma: f64, sigma_min: f64) -> Result<f64, PolicyError> {
    if !(sigma >= sigma_min) {
        return Err(PolicyError::SigmaTooSmall { sigma, sigma_min });
    }
    Ok(score_mu(x, mu, sigma))
}

/// Log-likelihood gradient with respect to the spread: `((x - mu)^2 - sigma^2) / sigma^3`.
pub fn xi_sigma(x: f64, mu: f64, sigma: f64, sigma_min: f64) -> Result<f64, PolicyError> {
    if !(sigma >= sigma_min) {
        return Err(PolicyError::SigmaTooSmall { sigma, sigma_min });
    }
    Ok(score_sigma(x, mu, sigma))
}

/// Components fixed so far; `None` for components still to be sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PartialAction(pub [Option<f64>; 4]);

impl PartialAction {
    /// The first `c` components of `action`.
    pub fn before(action: &[f64; 4], c: Component) -> Self {
        let mut p = [None; 4];
        for (i, slot) in p.iter_mut().enumerate().take(c.index()) {
            *slot = Some(action[i]);
        }
        Self(p)
    }
}

/// Values of components before `c` followed by their 0/1 validity mask;
/// slots at or after `c` are zero whatever `action` holds there.
pub fn mask_action(action: &[f64; 4], c: Component) -> [f64; 8] {
    let mut out = [0.0; 8];
    for i in 0..c.index() {
        out[i] = action[i];
        out[4 + i] = 1.0;
    }
    out
}

/// Head input for component `c`: pooled representation ⊕ masked partial action ⊕ mask.
pub fn masked_input(pooled: &[f64], partial: &PartialAction, c: Component) -> Result<Vec<f64>, PolicyError> {
    let mut action = [0.0; 4];
    for (i, slot) in partial.0.iter().enumerate() {
        match (i < c.index(), slot) {
            (true, Some(v)) => action[i] = *v,
            (false, None) => {}
            _ => return Err(PolicyError::OrderViolation { component: c }),
        }
    }
    let mut out = pooled.to_vec();
    out.extend_from_slice(&mask_action(&action, c));
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct ComponentHead {
    pub fuse: Linear,
    pub mu: Linear,
    pub sigma: Linear,
}

/// Per-component Gaussian parameters and the drawn values of one probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyStep {
    pub mu: [f64; 4],
    pub sigma: [f64; 4],
    /// Unclipped draws; log-likelihood gradients are evaluated here.
    pub raw: [f64; 4],
    /// Draws clipped to `[-1, 1]`; these condition later components.
    pub action: [f64; 4],
}

impl PolicyStep {
    pub fn clipped(&self) -> usize {
        self.raw.iter().zip(&self.action).filter(|(r, a)| r != a).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// Draw from `N(mu, sigma^2)`.
    Stochastic,
    /// Take `mu` directly.
    Mean,
}

#[derive(Clone, Debug)]
pub struct LocationNet {
    pub heads: [ComponentHead; 4],
    pub sigma_min: f64,
    pub d_rep: usize,
}

impl LocationNet {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        d_rep: usize,
        d_hidden: usize,
        sigma_min: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut heads = Vec::with_capacity(4);
        for c in Component::ALL {
            let p = format!("locnet.{}", c.name());
            heads.push(ComponentHead {
                fuse: Linear::init(store, &format!("{p}.fuse"), d_rep + 8, d_hidden, rng)?,
                mu: Linear::init(store, &format!("{p}.mu"), d_hidden, 1, rng)?,
                sigma: Linear::init(store, &format!("{p}.sigma"), d_hidden, 1, rng)?,
            });
        }
        Ok(Self { heads: heads.try_into().expect("four heads"), sigma_min, d_rep })
    }

    pub fn bind(store: &ParameterStore, sigma_min: f64) -> Result<Self, NnError> {
        let mut heads = Vec::with_capacity(4);
        for c in Component::ALL {
            let p = format!("locnet.{}", c.name());
            heads.push(ComponentHead {
                fuse: Linear::bind(store, &format!("{p}.fuse"))?,
                mu: Linear::bind(store, &format!("{p}.mu"))?,
                sigma: Linear::bind(store, &format!("{p}.sigma"))?,
            });
        }
        let d_rep = store.value(heads[0].fuse.w).shape()[0] - 8;
        Ok(Self { heads: heads.try_into().expect("four heads"), sigma_min, d_rep })
    }

    /// `(mu, sigma)` nodes for component `c`; slots of `action` at or after `c` are masked.
    pub fn predict_params(
        &self,
        tape: &mut Tape<'_>,
        pooled: NodeId,
        action: &[f64; 4],
        c: Component,
    ) -> Result<(NodeId, NodeId), NnError> {
        let head = &self.heads[c.index()];
        let cond = tape.input(Tensor::row_vector(mask_action(action, c).to_vec()));
        let x = tape.concat(pooled, cond)?;
        let h = head.fuse.forward(tape, x)?;
        let h = tape.activation(h, Activation::Relu);
        let mu = head.mu.forward(tape, h)?;
        let mu = tape.activation(mu, Activation::Tanh);
        let sigma = head.sigma.forward(tape, h)?;
        let sigma = tape.activation(sigma, Activation::Sigmoid);
        let sigma = tape.floor(sigma, self.sigma_min);
        Ok((mu, sigma))
    }

    /// Samples the four components in order, each conditioned on the clipped earlier ones.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        pooled: NodeId,
        rng: &mut R,
        mode: SampleMode,
    ) -> Result<PolicyStep, NnError> {
        let mut step = PolicyStep { mu: [0.0; 4], sigma: [0.0; 4], raw: [0.0; 4], action: [0.0; 4] };
        for c in Component::ALL {
            let (mu, sigma) = self.predict_params(tape, pooled, &step.action, c)?;
            let (mu, sigma) = (tape.value(mu).item(), tape.value(sigma).item());
            let raw = match mode {
                SampleMode::Stochastic => {
                    let z: f64 = rng.sample(StandardNormal);
                    mu + sigma * z
                }
                SampleMode::Mean => mu,
            };
            let i = c.index();
            step.mu[i] = mu;
            step.sigma[i] = sigma;
            step.raw[i] = raw;
            step.action[i] = raw.clamp(-1.0, 1.0);
        }
        Ok(step)
    }

    /// Zero pooled vector used before any probe has been made.
    pub fn start_token(&self, tape: &mut Tape<'_>) -> NodeId {
        tape.input(Tensor::zeros(&[1, self.d_rep]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gaussian_log_density;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(store: &mut ParameterStore) -> LocationNet {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        LocationNet::init(store, 6, 16, 0.01, &mut rng).unwrap()
    }

    #[test]
    fn masked_input_layout() {
        let pooled = [0.5, -0.5];
        let first = masked_input(&pooled, &PartialAction::default(), Component::Py).unwrap();
        assert_eq!(first, vec![0.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let p = PartialAction([Some(0.1), Some(0.2), Some(0.3), None]);
        let last = masked_input(&pooled, &p, Component::Uz).unwrap();
        assert_eq!(&last[2..], &[0.1, 0.2, 0.3, 0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn later_component_is_an_order_violation() {
        let p = PartialAction([Some(0.1), None, Some(0.3), None]);
        assert!(matches!(
            masked_input(&[0.0], &p, Component::Ux),
            Err(PolicyError::OrderViolation { component: Component::Ux })
        ));
        let missing = PartialAction([None; 4]);
        assert!(masked_input(&[0.0], &missing, Component::Uy).is_err());
    }

    #[test]
    fn masked_slots_do_not_affect_params() {
        let mut store = ParameterStore::new();
        let net = net(&mut store);
        let mut tape = Tape::new(&store);
        let pooled = tape.input(Tensor::row_vector(vec![0.3, -0.1, 0.7, 0.0, 0.2, -0.9]));
        for c in Component::ALL {
            let a = [0.1, -0.2, 0.3, 0.4];
            let mut b = a;
            for v in b.iter_mut().skip(c.index()) {
                *v = -0.77;
            }
            let (ma, sa) = net.predict_params(&mut tape, pooled, &a, c).unwrap();
            let (mb, sb) = net.predict_params(&mut tape, pooled, &b, c).unwrap();
            assert_eq!(tape.value(ma).item().to_bits(), tape.value(mb).item().to_bits());
            assert_eq!(tape.value(sa).item().to_bits(), tape.value(sb).item().to_bits());
        }
    }

    #[test]
    fn zero_weights_give_centered_params() {
        let mut store = ParameterStore::new();
        let net = net(&mut store);
        for e in store.entries_mut() {
            e.value.fill(0.0);
        }
        let mut tape = Tape::new(&store);
        let pooled = net.start_token(&mut tape);
        for c in Component::ALL {
            let (mu, sigma) = net.predict_params(&mut tape, pooled, &[0.0; 4], c).unwrap();
            assert_eq!(tape.value(mu).item(), 0.0);
            assert_eq!(tape.value(sigma).item(), 0.5);
        }
    }

    #[test]
    fn params_stay_in_range() {
        let mut store = ParameterStore::new();
        let net = net(&mut store);
        // push the sigma heads hard negative so the floor engages
        for h in &net.heads {
            store.value_mut(h.sigma.b).fill(-50.0);
            store.value_mut(h.mu.b).fill(40.0);
        }
        let mut tape = Tape::new(&store);
        let pooled = tape.input(Tensor::row_vector(vec![1.0; 6]));
        for c in Component::ALL {
            let (mu, sigma) = net.predict_params(&mut tape, pooled, &[0.9; 4], c).unwrap();
            let (mu, sigma) = (tape.value(mu).item(), tape.value(sigma).item());
            assert!(mu > -1.0 && mu <= 1.0);
            assert_eq!(sigma, 0.01);
        }
    }

    #[test]
    fn tight_policy_stays_near_zero() {
        let mut store = ParameterStore::new();
        let net = net(&mut store);
        for h in &net.heads {
            store.value_mut(h.sigma.w).fill(0.0);
            store.value_mut(h.sigma.b).fill(-50.0);
            store.value_mut(h.mu.w).fill(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut within = 0;
        for _ in 0..1000 {
            let mut tape = Tape::new(&store);
            let pooled = net.start_token(&mut tape);
            let step = net.sample_action(&mut tape, pooled, &mut rng, SampleMode::Stochastic).unwrap();
            within += step.action.iter().filter(|a| a.abs() <= 0.05).count();
        }
        assert!(within as f64 / 4000.0 > 0.99);
    }

    #[test]
    fn first_component_sample_moments() {
        let mut store = ParameterStore::new();
        let net = net(&mut store);
        let py = net.heads[Component::Py.index()];
        store.value_mut(py.mu.w).fill(0.0);
        store.value_mut(py.sigma.w).fill(0.0);
        store.value_mut(py.mu.b).fill(0.3f64.atanh());
        store.value_mut(py.sigma.b).fill((0.2f64 / 0.8).ln());
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 10_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut tape = Tape::new(&store);
            let pooled = net.start_token(&mut tape);
            let step = net.sample_action(&mut tape, pooled, &mut rng, SampleMode::Stochastic).unwrap();
            assert!((step.mu[0] - 0.3).abs() < 1e-12 && (step.sigma[0] - 0.2).abs() < 1e-12);
            xs.push(step.raw[0]);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 0.3).abs() < 0.01, "{mean}");
        assert!((sd - 0.2).abs() < 0.01, "{sd}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut store = ParameterStore::new();
        let net = net(&mut store);
        let run = || {
            let mut tape = Tape::new(&store);
            let pooled = net.start_token(&mut tape);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            net.sample_action(&mut tape, pooled, &mut rng, SampleMode::Stochastic).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn xi_closed_forms() {
        assert_eq!(xi_mu(0.3, 0.3, 0.5, 0.01).unwrap(), 0.0);
        assert_eq!(xi_mu(0.5, 0.0, 1.0, 0.01).unwrap(), 0.5);
        assert_eq!(xi_sigma(0.2, 0.2, 0.5, 0.01).unwrap(), -2.0);
        assert!(xi_sigma(0.7, 0.2, 0.5, 0.01).unwrap().abs() < 1e-15);
        assert!(matches!(xi_mu(0.0, 0.0, 0.001, 0.01), Err(PolicyError::SigmaTooSmall { .. })));
        assert!(xi_sigma(0.0, 0.0, 0.001, 0.01).is_err());
    }

    #[test]
    fn xi_matches_numerical_log_density_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for _ in 0..1000 {
            let sigma = rng.gen_range(0.01..1.0);
            let mu = rng.gen_range(-1.0..1.0);
            let x = mu + sigma * rng.gen_range(-3.0..3.0);
            let d_mu = (gaussian_log_density(x, mu + h * sigma, sigma)
                - gaussian_log_density(x, mu - h * sigma, sigma))
                / (2.0 * h * sigma);
            let d_sigma = (gaussian_log_density(x, mu, sigma * (1.0 + h))
                - gaussian_log_density(x, mu, sigma * (1.0 - h)))
                / (2.0 * h * sigma);
            let (a_mu, a_sigma) = (xi_mu(x, mu, sigma, 0.01).unwrap(), xi_sigma(x, mu, sigma, 0.01).unwrap());
            // scale-aware: derivatives grow like 1/sigma^2
            assert!((a_mu - d_mu).abs() * sigma * sigma < 1e-7, "{a_mu} {d_mu}");
            assert!((a_sigma - d_sigma).abs() * sigma * sigma < 1e-7, "{a_sigma} {d_sigma}");
        }
    }
}
