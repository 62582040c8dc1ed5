use rand::Rng;

use super::{Activation, NnError, NodeId, ParamId, ParameterStore, Tape};

/// Affine map `x W + b` whose weights live in a [`ParameterStore`].
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let (w, b) = store.add_linear(prefix, fan_in, fan_out, rng)?;
        Ok(Self { w, b })
    }

    pub fn bind(store: &ParameterStore, prefix: &str) -> Result<Self, NnError> {
        Ok(Self {
            w: store.id(&format!("{prefix}.w"))?,
            b: store.id(&format!("{prefix}.b"))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId, NnError> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.linear(x, w, Some(b))
    }
}

/// Two fully connected layers with a relu between them.
#[derive(Clone, Copy, Debug)]
pub struct Mlp2 {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp2 {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(Self {
            l1: Linear::init(store, &format!("{prefix}.l1"), d_in, d_hidden, rng)?,
            l2: Linear::init(store, &format!("{prefix}.l2"), d_hidden, d_out, rng)?,
        })
    }

    pub fn bind(store: &ParameterStore, prefix: &str) -> Result<Self, NnError> {
        Ok(Self {
            l1: Linear::bind(store, &format!("{prefix}.l1"))?,
            l2: Linear::bind(store, &format!("{prefix}.l2"))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId, NnError> {
        let h = self.l1.forward(tape, x)?;
        let h = tape.activation(h, Activation::Relu);
        self.l2.forward(tape, h)
    }
}
