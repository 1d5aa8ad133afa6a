use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Activation applied after the last layer. Hidden layers always use ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Softmax,
}

/// Fully connected network with weights stored `[in, out]`, so a layer is
/// `y = x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub(crate) weights: Vec<ParamId>,
    pub(crate) biases: Vec<ParamId>,
    pub(crate) output: Activation,
}

/// He-uniform weights `U(±sqrt(6 / fan_in))` and zero biases.
pub(crate) fn init_layers<R: Rng>(widths: &[usize], rng: &mut R) -> Vec<(Tensor, Tensor)> {
    widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            (
                Tensor::matrix(fan_in, fan_out, data).expect("positive widths"),
                Tensor::zeros(&[fan_out]),
            )
        })
        .collect()
}

impl Mlp {
    /// Registers `layers` in `store` under `prefix.{k}.w` / `prefix.{k}.b`.
    pub(crate) fn register(
        store: &mut ParamStore,
        prefix: &str,
        layers: Vec<(Tensor, Tensor)>,
        output: Activation,
    ) -> Mlp {
        let mut weights = Vec::with_capacity(layers.len());
        let mut biases = Vec::with_capacity(layers.len());
        for (k, (w, b)) in layers.into_iter().enumerate() {
            weights.push(store.insert(format!("{prefix}.{k}.w"), w));
            biases.push(store.insert(format!("{prefix}.{k}.b"), b));
        }
        Mlp {
            weights,
            biases,
            output,
        }
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self, store: &ParamStore) -> usize {
        store.get(self.weights[0]).rows()
    }

    pub fn out_dim(&self, store: &ParamStore) -> usize {
        store.get(*self.weights.last().unwrap()).cols()
    }

    pub fn weight_ids(&self) -> &[ParamId] {
        &self.weights
    }

    pub fn bias_ids(&self) -> &[ParamId] {
        &self.biases
    }

    /// Copies of every `(weight, bias)` pair.
    pub(crate) fn layers(&self, store: &ParamStore) -> Vec<(Tensor, Tensor)> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(&w, &b)| (store.get(w).clone(), store.get(b).clone()))
            .collect()
    }

    /// Records the network applied to the `[batch, in]` input `x`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (k, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            h = g.matmul(h, wv)?;
            h = g.add_row(h, bv)?;
            if k + 1 < self.weights.len() {
                h = g.relu(h);
            }
        }
        match self.output {
            Activation::Identity => Ok(h),
            Activation::Sigmoid => Ok(g.sigmoid(h)),
            Activation::Softmax => g.softmax(h),
        }
    }

    /// Plain evaluation of a `[batch, in]` row-major input.
    pub fn eval(&self, store: &ParamStore, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let in_dim = self.in_dim(store);
        if x.len() != batch * in_dim {
            return Err(Error::DimensionMismatch {
                expected: batch * in_dim,
                actual: x.len(),
            });
        }
        let mut g = Graph::new();
        let xv = g.constant(&Tensor::matrix(batch, in_dim, x.to_vec())?);
        let y = self.forward(&mut g, store, xv)?;
        Ok(g.data(y).to_vec())
    }

    /// Frobenius norm of all weight matrices taken together.
    pub fn weight_norm(&self, store: &ParamStore) -> f64 {
        self.weights
            .iter()
            .map(|&w| store.get(w).data().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}
