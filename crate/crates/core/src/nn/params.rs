use std::collections::HashMap;

use rand::Rng;

use super::{NnError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Adam first moment.
    pub m: Tensor,
    /// Adam second moment.
    pub v: Tensor,
}

/// Named network weights with paired gradient and moment buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    /// Number of optimizer steps taken so far.
    pub(crate) step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId, NnError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let shape = value.shape().to_vec();
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry {
            name,
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
        });
        Ok(ParamId(id))
    }

    /// Glorot-uniform weight matrix `[fan_in, fan_out]` plus a zero bias.
    pub fn add_linear<R: Rng + ?Sized>(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<(ParamId, ParamId), NnError> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        let w = self.add(format!("{prefix}.w"), Tensor::matrix(fan_in, fan_out, data)?)?;
        let b = self.add(format!("{prefix}.b"), Tensor::zeros(&[fan_out]))?;
        Ok((w, b))
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NnError> {
        self.index
            .get(name)
            .copied()
            .map(ParamId)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer {
            grads: self
                .entries
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect(),
        }
    }

    /// Adds a buffer into the stored gradients.
    pub fn accumulate(&mut self, buf: &GradBuffer) {
        for (e, g) in self.entries.iter_mut().zip(&buf.grads) {
            e.grad.add_assign(g);
        }
    }

    /// Name of the first entry holding a non-finite gradient, if any.
    pub fn first_non_finite_grad(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| !e.grad.is_finite())
            .map(|e| e.name.as_str())
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub(crate) fn push_entry(&mut self, entry: ParamEntry) -> Result<(), NnError> {
        if self.index.contains_key(&entry.name) {
            return Err(NnError::DuplicateParam(entry.name));
        }
        self.index.insert(entry.name.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }
}

/// Gradient accumulator shaped like a [`ParameterStore`], one per episode.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    grads: Vec<Tensor>,
}

impl GradBuffer {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One Adam update over every entry, using the stored gradients.
pub fn adam_step(store: &mut ParameterStore, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    store.step += 1;
    let t = store.step as f64;
    let bc1 = 1.0 - beta1.powf(t);
    let bc2 = 1.0 - beta2.powf(t);
    for e in store.entries_mut() {
        let g = e.grad.data();
        let m = e.m.data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
        }
        let v = e.v.data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let (m, v) = (e.m.data(), e.v.data());
        for ((w, mi), vi) in e.value.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Plain gradient descent.
pub fn sgd_step(store: &mut ParameterStore, lr: f64) {
    store.step += 1;
    for e in store.entries_mut() {
        for (w, g) in e.value.data_mut().iter_mut().zip(e.grad.data()) {
            *w -= lr * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParameterStore::new();
        s.add("a", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(
            s.add("a", Tensor::scalar(2.0)),
            Err(NnError::DuplicateParam(_))
        ));
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let mut s = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, b) = s.add_linear("l", 10, 6, &mut rng).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(s.value(w).data().iter().all(|v| v.abs() <= limit));
        assert!(s.value(b).data().iter().all(|&v| v == 0.0));
        assert_eq!(s.grad(w).shape(), &[10, 6]);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut s = ParameterStore::new();
        let id = s.add("w", Tensor::row_vector(vec![0.3, -1.2])).unwrap();
        adam_step(&mut s, 0.1, 0.9, 0.999, 1e-8);
        assert_eq!(s.value(id).data(), &[0.3, -1.2]);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let mut s = ParameterStore::new();
        let id = s.add("w", Tensor::scalar(1.0)).unwrap();
        s.entries_mut()[0].grad.data_mut()[0] = 1.0;
        adam_step(&mut s, 0.1, 0.9, 0.999, 1e-8);
        let w = s.value(id).item();
        assert!((w - 0.9).abs() < 1e-6, "{w}");
        assert!((1.0 - w) <= 0.1 + 1e-12);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut s = ParameterStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            s.add_linear("l", 3, 3, &mut rng).unwrap();
            let mut grng = ChaCha8Rng::seed_from_u64(10);
            for _ in 0..100 {
                for e in s.entries_mut() {
                    for g in e.grad.data_mut() {
                        *g = grng.gen_range(-1.0..1.0);
                    }
                }
                adam_step(&mut s, 0.01, 0.9, 0.999, 1e-8);
            }
            s
        };
        let (a, b) = (run(), run());
        for (x, y) in a.entries().iter().zip(b.entries()) {
            let xb: Vec<u64> = x.value.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut s = ParameterStore::new();
        let id = s.add("w", Tensor::scalar(1.0)).unwrap();
        s.entries_mut()[0].grad.data_mut()[0] = 2.0;
        sgd_step(&mut s, 0.1);
        assert!((s.value(id).item() - 0.8).abs() < 1e-15);
    }
}
