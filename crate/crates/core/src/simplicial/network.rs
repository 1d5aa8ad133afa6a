use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{load_tensors, save_tensors, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerActivation {
    Relu,
    Identity,
}

/// Affine layer stored by structure: `rows[o]` lists the `(input, weight)`
/// entries of output `o`, and `bias[o]` is `None` where the construction has
/// no bias. Structural entries count as parameters even when their value is
/// zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLayer {
    pub in_dim: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub bias: Vec<Option<f64>>,
    pub activation: LayerActivation,
}

impl SparseLayer {
    pub fn out_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn param_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() + self.bias.iter().flatten().count()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| {
                let v = row.iter().map(|&(i, w)| w * x[i]).sum::<f64>() + b.unwrap_or(0.0);
                match self.activation {
                    LayerActivation::Relu => v.max(0.0),
                    LayerActivation::Identity => v,
                }
            })
            .collect()
    }
}

/// Feed-forward network of ReLU and identity layers with the parameter and
/// depth counts its construction declares. Depth counts affine layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluNetwork {
    input_dim: usize,
    layers: Vec<SparseLayer>,
    declared_param_count: usize,
    declared_depth: usize,
}

impl ReluNetwork {
    pub fn new(
        input_dim: usize,
        layers: Vec<SparseLayer>,
        declared_param_count: usize,
        declared_depth: usize,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("network input dimension must be positive"));
        }
        let mut dim = input_dim;
        for (k, l) in layers.iter().enumerate() {
            if l.in_dim != dim || l.bias.len() != l.rows.len() || l.rows.is_empty() {
                return Err(Error::invalid(format!(
                    "layer {k} does not chain: expects {} inputs, previous width {dim}",
                    l.in_dim
                )));
            }
            if l.rows
                .iter()
                .flatten()
                .any(|&(i, w)| i >= dim || !w.is_finite())
                || l.bias.iter().flatten().any(|b| !b.is_finite())
            {
                return Err(Error::invalid(format!("layer {k} has an invalid entry")));
            }
            dim = l.out_dim();
        }
        Ok(ReluNetwork {
            input_dim,
            layers,
            declared_param_count,
            declared_depth,
        })
    }

    /// The identity map, with no layers.
    pub fn identity(dim: usize) -> Result<Self> {
        ReluNetwork::new(dim, Vec::new(), 0, 0)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_dim, SparseLayer::out_dim)
    }

    pub fn layers(&self) -> &[SparseLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Structural parameter count of the stored layers.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(SparseLayer::param_count).sum()
    }

    pub fn declared_param_count(&self) -> usize {
        self.declared_param_count
    }

    pub fn declared_depth(&self) -> usize {
        self.declared_depth
    }

    /// True when the stored structure matches the declared counts.
    pub fn counts_consistent(&self) -> bool {
        self.param_count() == self.declared_param_count && self.depth() == self.declared_depth
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        // `max(0, NaN)` is 0, so a NaN would otherwise pass through silently.
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("network input must be finite"));
        }
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.apply(&h);
        }
        Ok(h)
    }

    /// Dense `(weight [in, out], bias [out], activation)` per layer, zeros
    /// outside the structure.
    pub fn dense_layers(&self) -> Vec<(Tensor, Tensor, LayerActivation)> {
        self.layers
            .iter()
            .map(|l| {
                let (i, o) = (l.in_dim, l.out_dim());
                let mut w = vec![0.0; i * o];
                for (c, row) in l.rows.iter().enumerate() {
                    for &(r, v) in row {
                        w[r * o + c] += v;
                    }
                }
                let b = l.bias.iter().map(|b| b.unwrap_or(0.0)).collect();
                (
                    Tensor::matrix(i, o, w).expect("sized"),
                    Tensor::vector(b).expect("sized"),
                    l.activation,
                )
            })
            .collect()
    }

    /// Writes the network into the tensor checkpoint container. Weights are
    /// dense `[in, out]`; structure masks and declared counts travel along so
    /// [`ReluNetwork::load`] restores an identical network.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut named: Vec<(String, Tensor)> = vec![(
            "meta".into(),
            Tensor::vector(vec![
                self.input_dim as f64,
                self.declared_param_count as f64,
                self.declared_depth as f64,
                self.layers.len() as f64,
            ])?,
        )];
        for (k, (l, (w, b, act))) in self.layers.iter().zip(self.dense_layers()).enumerate() {
            let o = l.out_dim();
            let mut wm = vec![0.0; l.in_dim * o];
            for (c, row) in l.rows.iter().enumerate() {
                for &(r, _) in row {
                    wm[r * o + c] = 1.0;
                }
            }
            let bm = l
                .bias
                .iter()
                .map(|b| if b.is_some() { 1.0 } else { 0.0 })
                .collect();
            let relu = if act == LayerActivation::Relu {
                1.0
            } else {
                0.0
            };
            named.push((format!("layer{k}.weight"), w));
            named.push((format!("layer{k}.bias"), b));
            named.push((
                format!("layer{k}.weight_mask"),
                Tensor::matrix(l.in_dim, o, wm)?,
            ));
            named.push((format!("layer{k}.bias_mask"), Tensor::vector(bm)?));
            named.push((format!("layer{k}.relu"), Tensor::scalar(relu)));
        }
        save_tensors(path, named.iter().map(|(n, t)| (n.as_str(), t)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let map: BTreeMap<String, Tensor> = load_tensors(path)?.into_iter().collect();
        let get = |name: &str| {
            map.get(name)
                .ok_or_else(|| Error::Corrupt(format!("missing tensor `{name}`")))
        };
        let meta = get("meta")?.data();
        if meta.len() != 4 {
            return Err(Error::Corrupt("meta must hold 4 entries".into()));
        }
        let as_count = |x: f64| x as usize;
        let mut layers = Vec::new();
        for k in 0..as_count(meta[3]) {
            let w = get(&format!("layer{k}.weight"))?;
            let wm = get(&format!("layer{k}.weight_mask"))?;
            let b = get(&format!("layer{k}.bias"))?;
            let bm = get(&format!("layer{k}.bias_mask"))?;
            let relu = get(&format!("layer{k}.relu"))?.data();
            if w.rank() != 2
                || wm.shape() != w.shape()
                || b.numel() != w.cols()
                || bm.numel() != w.cols()
            {
                return Err(Error::Corrupt(format!(
                    "layer {k} tensors disagree in shape"
                )));
            }
            let (i, o) = (w.rows(), w.cols());
            let rows = (0..o)
                .map(|c| {
                    (0..i)
                        .filter(|&r| wm.data()[r * o + c] != 0.0)
                        .map(|r| (r, w.data()[r * o + c]))
                        .collect()
                })
                .collect();
            let bias = (0..o)
                .map(|c| (bm.data()[c] != 0.0).then_some(b.data()[c]))
                .collect();
            let activation = if relu.first() == Some(&1.0) {
                LayerActivation::Relu
            } else {
                LayerActivation::Identity
            };
            layers.push(SparseLayer {
                in_dim: i,
                rows,
                bias,
                activation,
            });
        }
        ReluNetwork::new(
            as_count(meta[0]),
            layers,
            as_count(meta[1]),
            as_count(meta[2]),
        )
    }
}

/// Linear combination of the current layer's units.
pub(crate) type Combo = Vec<(usize, f64)>;

fn lin(terms: &[(&Combo, f64)]) -> Combo {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (c, s) in terms {
        for &(i, w) in c.iter() {
            *acc.entry(i).or_insert(0.0) += s * w;
        }
    }
    acc.into_iter().collect()
}

/// One gadget of a ReLU stage. Gadgets whose names end in `Pos` assume
/// nonnegative inputs and use fewer units.
pub(crate) enum Op {
    /// `min{a, b} = ½(ReLU(a+b) − ReLU(a−b) − ReLU(−a+b) − ReLU(−a−b))`.
    Min2(Combo, Combo),
    /// `min{a, b} = ReLU(a) − ReLU(a−b)` for `a ≥ 0`.
    MinPos(Combo, Combo),
    /// `max{a, b} = ReLU(a) + ReLU(b−a)` for `a ≥ 0`.
    MaxPos(Combo, Combo),
    /// `a = ReLU(a) − ReLU(−a)`.
    Pass(Combo),
    /// `a = ReLU(a)` for `a ≥ 0`.
    PassPos(Combo),
}

impl Op {
    /// Unit pre-activations and the output as coefficients on those units.
    fn expand(self) -> (Vec<Combo>, Vec<f64>, usize) {
        match self {
            Op::Min2(a, b) => {
                let cost = 4 * (a.len() + b.len());
                (
                    vec![
                        lin(&[(&a, 1.0), (&b, 1.0)]),
                        lin(&[(&a, 1.0), (&b, -1.0)]),
                        lin(&[(&a, -1.0), (&b, 1.0)]),
                        lin(&[(&a, -1.0), (&b, -1.0)]),
                    ],
                    vec![0.5, -0.5, -0.5, -0.5],
                    cost,
                )
            }
            Op::MinPos(a, b) => {
                let cost = 2 * a.len() + b.len();
                (
                    vec![a.clone(), lin(&[(&a, 1.0), (&b, -1.0)])],
                    vec![1.0, -1.0],
                    cost,
                )
            }
            Op::MaxPos(a, b) => {
                let cost = 2 * a.len() + b.len();
                (
                    vec![a.clone(), lin(&[(&b, 1.0), (&a, -1.0)])],
                    vec![1.0, 1.0],
                    cost,
                )
            }
            Op::Pass(a) => {
                let cost = 2 * a.len();
                (vec![a.clone(), lin(&[(&a, -1.0)])], vec![1.0, -1.0], cost)
            }
            Op::PassPos(a) => {
                let cost = a.len();
                (vec![a], vec![1.0], cost)
            }
        }
    }
}

/// Assembles a network stage by stage while tallying the declared count
/// from each gadget's formula.
pub(crate) struct NetBuilder {
    input_dim: usize,
    width: usize,
    layers: Vec<SparseLayer>,
    declared: usize,
}

impl NetBuilder {
    pub(crate) fn new(input_dim: usize) -> Self {
        NetBuilder {
            input_dim,
            width: input_dim,
            layers: Vec::new(),
            declared: 0,
        }
    }

    pub(crate) fn inputs(&self) -> Vec<Combo> {
        (0..self.input_dim).map(|i| vec![(i, 1.0)]).collect()
    }

    /// Adds an affine layer; each unit is `combo + bias`.
    pub(crate) fn affine(
        &mut self,
        units: Vec<(Combo, Option<f64>)>,
        act: LayerActivation,
    ) -> Vec<Combo> {
        self.declared += units
            .iter()
            .map(|(c, b)| c.len() + b.is_some() as usize)
            .sum::<usize>();
        let n = units.len();
        let (rows, bias) = units.into_iter().unzip();
        self.layers.push(SparseLayer {
            in_dim: self.width,
            rows,
            bias,
            activation: act,
        });
        self.width = n;
        (0..n).map(|o| vec![(o, 1.0)]).collect()
    }

    /// Adds one ReLU layer holding the units of all gadgets; returns each
    /// gadget's output as a combination of the new units.
    pub(crate) fn stage(&mut self, ops: Vec<Op>) -> Vec<Combo> {
        let mut rows = Vec::new();
        let mut outs = Vec::with_capacity(ops.len());
        for op in ops {
            let (units, coefs, cost) = op.expand();
            self.declared += cost;
            let base = rows.len();
            outs.push(
                coefs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| (base + k, c))
                    .collect(),
            );
            rows.extend(units);
        }
        let n = rows.len();
        self.layers.push(SparseLayer {
            in_dim: self.width,
            bias: vec![None; n],
            rows,
            activation: LayerActivation::Relu,
        });
        self.width = n;
        outs
    }

    pub(crate) fn finish(self) -> Result<ReluNetwork> {
        let depth = self.layers.len();
        ReluNetwork::new(self.input_dim, self.layers, self.declared, depth)
    }
}

/// Pairs up `values` with `pair` and carries an odd one with `single`.
pub(crate) fn reduce_level(
    values: Vec<Combo>,
    pair: impl Fn(Combo, Combo) -> Op,
    single: impl Fn(Combo) -> Op,
) -> Vec<Op> {
    let mut ops = Vec::with_capacity(values.len().div_ceil(2));
    let mut it = values.into_iter();
    while let Some(a) = it.next() {
        match it.next() {
            Some(b) => ops.push(pair(a, b)),
            None => ops.push(single(a)),
        }
    }
    ops
}

/// Two inputs, one output: `min{a, b}` through four ReLU units.
pub fn relu_min2() -> ReluNetwork {
    relu_min_tree(2).expect("k = 2 is valid")
}

/// Minimum of `k` inputs as a balanced tree of two-input minima; odd
/// entries are carried through a level unchanged. `k = 1` is the identity.
pub fn relu_min_tree(k: usize) -> Result<ReluNetwork> {
    if k == 0 {
        return Err(Error::invalid("a minimum needs at least one input"));
    }
    let mut b = NetBuilder::new(k);
    let mut values = b.inputs();
    if k == 1 {
        return b.finish();
    }
    while values.len() > 1 {
        let ops = reduce_level(values, Op::Min2, Op::Pass);
        values = b.stage(ops);
    }
    b.affine(
        vec![(values.pop().expect("one left"), None)],
        LayerActivation::Identity,
    );
    b.finish()
}
