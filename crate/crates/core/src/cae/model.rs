use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{CaeConfig, PredictorInput};
use super::mlp::{init_layers, Activation, Mlp};
use crate::error::{Error, Result};
use crate::manifolds::PointCloud;
use crate::tensor::{load_tensors, save_tensors, Graph, ParamStore, Tensor, Var};

/// Weight/bias pairs of one component network, input layer first.
pub type Layers = Vec<(Tensor, Tensor)>;

/// Raw weights of every component, used to build or rebuild a model.
#[derive(Clone, Debug, PartialEq)]
pub struct CaeLayers {
    pub encoder: Layers,
    pub chart_encoders: Vec<Layers>,
    pub chart_decoders: Vec<Layers>,
    pub predictor: Layers,
    pub decoder: Layers,
}

/// Per-chart reference magnitudes used by the pruning rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartReference {
    /// Frobenius norm of the chart decoder weights.
    pub decoder_norm: f64,
    /// Product of the chart encoder spectral norms.
    pub encoder_lipschitz: f64,
}

/// Chart auto-encoder: initial encoder `E`, chart encoders `E_α`, chart
/// decoders `D_α`, chart predictor `P` and final decoder `D`.
#[derive(Clone, Debug)]
pub struct CaeModel {
    pub(crate) config: CaeConfig,
    pub(crate) store: ParamStore,
    pub(crate) encoder: Mlp,
    pub(crate) chart_encoders: Vec<Mlp>,
    pub(crate) chart_decoders: Vec<Mlp>,
    pub(crate) predictor: Mlp,
    pub(crate) decoder: Mlp,
    /// Index each surviving chart had when the model was created.
    pub(crate) chart_labels: Vec<usize>,
    pub(crate) reference: Vec<ChartReference>,
    /// Persistent power-iteration vectors, per chart and encoder layer.
    pub(crate) power_u: Vec<Vec<Vec<f64>>>,
}

/// Graph handles produced by [`CaeModel::forward`].
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub batch: usize,
    /// `[B, l]`
    pub z: Var,
    /// One `[B, d]` code per chart.
    pub z_charts: Vec<Var>,
    /// One `[B, l]` chart decoder output per chart.
    pub w_charts: Vec<Var>,
    /// All chart reconstructions stacked chart-major: `[N·B, m]`.
    pub y_all: Var,
    /// `[B, N]` squared reconstruction errors.
    pub e: Var,
    /// `[B, N]` softmax of `-e`, detached.
    pub ell: Var,
    /// `[B, N]` chart probabilities.
    pub p: Var,
    /// Most probable chart per row, lowest index on ties.
    pub winner: Vec<usize>,
}

/// Plain values of a forward pass. Batched fields are row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    pub batch: usize,
    pub n_charts: usize,
    /// `[B, l]`
    pub z: Vec<f64>,
    /// Per chart, `[B, d]`.
    pub z_charts: Vec<Vec<f64>>,
    /// Per chart, `[B, l]`.
    pub w_charts: Vec<Vec<f64>>,
    /// Per chart, `[B, m]`.
    pub y_charts: Vec<Vec<f64>>,
    /// `[B, N]`
    pub e: Vec<f64>,
    /// `[B, N]`
    pub ell: Vec<f64>,
    /// `[B, N]`
    pub p: Vec<f64>,
    pub winner: Vec<usize>,
    /// `[B, m]`, the winning chart's reconstruction.
    pub y: Vec<f64>,
}

impl ForwardResult {
    fn from_vars(g: &Graph, fv: &ForwardVars, m: usize) -> ForwardResult {
        let b = fv.batch;
        let n = fv.z_charts.len();
        let y_all = g.data(fv.y_all);
        let y_charts: Vec<Vec<f64>> = (0..n)
            .map(|a| y_all[a * b * m..(a + 1) * b * m].to_vec())
            .collect();
        let mut y = Vec::with_capacity(b * m);
        for (i, &w) in fv.winner.iter().enumerate() {
            y.extend_from_slice(&y_charts[w][i * m..(i + 1) * m]);
        }
        ForwardResult {
            batch: b,
            n_charts: n,
            z: g.data(fv.z).to_vec(),
            z_charts: fv.z_charts.iter().map(|&v| g.data(v).to_vec()).collect(),
            w_charts: fv.w_charts.iter().map(|&v| g.data(v).to_vec()).collect(),
            y_charts,
            e: g.data(fv.e).to_vec(),
            ell: g.data(fv.ell).to_vec(),
            p: g.data(fv.p).to_vec(),
            winner: fv.winner.clone(),
            y,
        }
    }

    fn append(&mut self, other: ForwardResult) {
        self.batch += other.batch;
        self.z.extend(other.z);
        for (a, o) in self.z_charts.iter_mut().zip(other.z_charts) {
            a.extend(o);
        }
        for (a, o) in self.w_charts.iter_mut().zip(other.w_charts) {
            a.extend(o);
        }
        for (a, o) in self.y_charts.iter_mut().zip(other.y_charts) {
            a.extend(o);
        }
        self.e.extend(other.e);
        self.ell.extend(other.ell);
        self.p.extend(other.p);
        self.winner.extend(other.winner);
        self.y.extend(other.y);
    }

    /// Row `i` of the `[B, N]` error matrix.
    pub fn e_row(&self, i: usize) -> &[f64] {
        &self.e[i * self.n_charts..(i + 1) * self.n_charts]
    }

    pub fn p_row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n_charts..(i + 1) * self.n_charts]
    }

    pub fn ell_row(&self, i: usize) -> &[f64] {
        &self.ell[i * self.n_charts..(i + 1) * self.n_charts]
    }

    /// Smallest chart error of every row.
    pub fn min_errors(&self) -> Vec<f64> {
        (0..self.batch)
            .map(|i| self.e_row(i).iter().cloned().fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Exact largest singular value of a row-major matrix.
pub(crate) fn spectral_norm_exact(t: &Tensor) -> f64 {
    nalgebra::DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
        .singular_values()
        .max()
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    config: CaeConfig,
    chart_labels: Vec<usize>,
    reference: Vec<ChartReference>,
}

/// Path of the JSON sidecar stored next to a checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn check_layers(what: &str, layers: &Layers, widths: &[usize]) -> Result<()> {
    let ok = layers.len() + 1 == widths.len()
        && layers
            .iter()
            .zip(widths.windows(2))
            .all(|((w, b), io)| w.shape() == [io[0], io[1]] && b.shape() == [io[1]]);
    if !ok {
        let got: Vec<Vec<usize>> = layers.iter().map(|(w, _)| w.shape().to_vec()).collect();
        return Err(Error::ConfigMismatch(format!(
            "{what}: layer shapes {got:?} do not match widths {widths:?}"
        )));
    }
    Ok(())
}

impl CaeModel {
    /// Freshly initialized model; every draw comes from `seed`.
    pub fn new(config: CaeConfig, seed: u64) -> Result<CaeModel> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let n = c.n_charts;
        let layers = CaeLayers {
            encoder: init_layers(&c.widths(c.m, c.l), &mut rng),
            chart_encoders: (0..n)
                .map(|_| init_layers(&c.widths(c.l, c.d), &mut rng))
                .collect(),
            chart_decoders: (0..n)
                .map(|_| init_layers(&c.widths(c.d, c.l), &mut rng))
                .collect(),
            predictor: init_layers(&c.widths(c.predictor_in(), n), &mut rng),
            decoder: init_layers(&c.widths(c.l, c.m), &mut rng),
        };
        CaeModel::from_layers(config, layers)
    }

    /// Builds a model from explicit weights. Reference norms are recorded
    /// from these weights.
    pub fn from_layers(config: CaeConfig, layers: CaeLayers) -> Result<CaeModel> {
        config.validate()?;
        let n = config.n_charts;
        if layers.chart_encoders.len() != n || layers.chart_decoders.len() != n {
            return Err(Error::ConfigMismatch(format!(
                "{n} charts configured but {} encoders and {} decoders given",
                layers.chart_encoders.len(),
                layers.chart_decoders.len()
            )));
        }
        let mut model = Self::assemble(config, layers, (0..n).collect(), Vec::new())?;
        model.record_reference();
        Ok(model)
    }

    fn assemble(
        config: CaeConfig,
        layers: CaeLayers,
        chart_labels: Vec<usize>,
        reference: Vec<ChartReference>,
    ) -> Result<CaeModel> {
        let c = &config;
        check_layers("encoder", &layers.encoder, &c.widths(c.m, c.l))?;
        for l in &layers.chart_encoders {
            check_layers("chart encoder", l, &c.widths(c.l, c.d))?;
        }
        for l in &layers.chart_decoders {
            check_layers("chart decoder", l, &c.widths(c.d, c.l))?;
        }
        check_layers(
            "predictor",
            &layers.predictor,
            &c.widths(c.predictor_in(), c.n_charts),
        )?;
        check_layers("decoder", &layers.decoder, &c.widths(c.l, c.m))?;

        let mut store = ParamStore::new();
        let encoder = Mlp::register(&mut store, "encoder", layers.encoder, Activation::Identity);
        let chart_encoders: Vec<Mlp> = layers
            .chart_encoders
            .into_iter()
            .enumerate()
            .map(|(a, l)| {
                Mlp::register(
                    &mut store,
                    &format!("chart_encoder.{a}"),
                    l,
                    Activation::Sigmoid,
                )
            })
            .collect();
        let chart_decoders = layers
            .chart_decoders
            .into_iter()
            .enumerate()
            .map(|(a, l)| {
                Mlp::register(
                    &mut store,
                    &format!("chart_decoder.{a}"),
                    l,
                    Activation::Identity,
                )
            })
            .collect();
        let predictor = Mlp::register(
            &mut store,
            "predictor",
            layers.predictor,
            Activation::Softmax,
        );
        let decoder = Mlp::register(&mut store, "decoder", layers.decoder, Activation::Identity);
        let power_u = chart_encoders
            .iter()
            .map(|e| vec![Vec::new(); e.depth()])
            .collect();
        Ok(CaeModel {
            config,
            store,
            encoder,
            chart_encoders,
            chart_decoders,
            predictor,
            decoder,
            chart_labels,
            reference,
            power_u,
        })
    }

    pub fn layers(&self) -> CaeLayers {
        let s = &self.store;
        CaeLayers {
            encoder: self.encoder.layers(s),
            chart_encoders: self.chart_encoders.iter().map(|m| m.layers(s)).collect(),
            chart_decoders: self.chart_decoders.iter().map(|m| m.layers(s)).collect(),
            predictor: self.predictor.layers(s),
            decoder: self.decoder.layers(s),
        }
    }

    pub(crate) fn rebuild(
        config: CaeConfig,
        layers: CaeLayers,
        chart_labels: Vec<usize>,
        reference: Vec<ChartReference>,
    ) -> Result<CaeModel> {
        Self::assemble(config, layers, chart_labels, reference)
    }

    pub fn config(&self) -> &CaeConfig {
        &self.config
    }

    pub fn n_charts(&self) -> usize {
        self.config.n_charts
    }

    /// Original index of every surviving chart.
    pub fn chart_labels(&self) -> &[usize] {
        &self.chart_labels
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn chart_encoder(&self, alpha: usize) -> &Mlp {
        &self.chart_encoders[alpha]
    }

    pub fn chart_decoder(&self, alpha: usize) -> &Mlp {
        &self.chart_decoders[alpha]
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn reference(&self) -> &[ChartReference] {
        &self.reference
    }

    /// Current decoder norm and encoder Lipschitz product of every chart.
    pub fn chart_magnitudes(&self) -> Vec<ChartReference> {
        (0..self.n_charts())
            .map(|a| ChartReference {
                decoder_norm: self.chart_decoders[a].weight_norm(&self.store),
                encoder_lipschitz: self.chart_encoders[a]
                    .weights
                    .iter()
                    .map(|&w| spectral_norm_exact(self.store.get(w)))
                    .product(),
            })
            .collect()
    }

    /// Stores the current chart magnitudes as the pruning reference.
    pub fn record_reference(&mut self) {
        self.reference = self.chart_magnitudes();
    }

    pub(crate) fn check_alpha(&self, alpha: usize) -> Result<()> {
        if alpha >= self.n_charts() {
            return Err(Error::IndexOutOfRange {
                what: "charts",
                index: alpha,
                len: self.n_charts(),
            });
        }
        Ok(())
    }

    /// Records the full pipeline for a `[B, m]` batch.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<ForwardVars> {
        let c = &self.config;
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != c.m {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: shape,
                rhs: vec![0, c.m],
            });
        }
        let b = shape[0];
        let s = &self.store;
        let z = self.encoder.forward(g, s, x)?;
        let mut z_charts = Vec::with_capacity(c.n_charts);
        let mut w_charts = Vec::with_capacity(c.n_charts);
        for a in 0..c.n_charts {
            let za = self.chart_encoders[a].forward(g, s, z)?;
            let wa = self.chart_decoders[a].forward(g, s, za)?;
            z_charts.push(za);
            w_charts.push(wa);
        }
        let w_all = if c.n_charts == 1 {
            w_charts[0]
        } else {
            g.concat(&w_charts, 0)?
        };
        let y_all = self.decoder.forward(g, s, w_all)?;
        let mut cols = Vec::with_capacity(c.n_charts);
        for a in 0..c.n_charts {
            let ya = if c.n_charts == 1 {
                y_all
            } else {
                g.slice(y_all, 0, a * b, b)?
            };
            let diff = g.sub(ya, x)?;
            let sq = g.square(diff);
            let ea = g.sum_axis(sq, 1)?;
            cols.push(g.reshape(ea, &[b, 1])?);
        }
        let e = if c.n_charts == 1 {
            cols[0]
        } else {
            g.concat(&cols, 1)?
        };
        let neg_e = g.neg(e);
        let ell_graph = g.softmax(neg_e)?;
        let ell = g.detach(ell_graph);
        let pin = match c.predictor_input {
            PredictorInput::X => x,
            PredictorInput::Z => z,
            PredictorInput::ZAlphaDistances => {
                let mut feats = Vec::with_capacity(c.n_charts);
                for &za in &z_charts {
                    let centered = g.add_scalar(za, -0.5);
                    let sq = g.square(centered);
                    let dist = g.sum_axis(sq, 1)?;
                    feats.push(g.reshape(dist, &[b, 1])?);
                }
                if feats.len() == 1 {
                    feats[0]
                } else {
                    g.concat(&feats, 1)?
                }
            }
        };
        let p = self.predictor.forward(g, s, pin)?;
        let winner = g.arg_extreme(p, 1, true)?;
        Ok(ForwardVars {
            batch: b,
            z,
            z_charts,
            w_charts,
            y_all,
            e,
            ell,
            p,
            winner,
        })
    }

    /// Forward values for row-major `[batch, m]` input, processed in chunks.
    pub fn evaluate(&self, x: &[f64], batch: usize) -> Result<ForwardResult> {
        let m = self.config.m;
        if x.len() != batch * m || batch == 0 {
            return Err(Error::DimensionMismatch {
                expected: batch * m,
                actual: x.len(),
            });
        }
        const CHUNK: usize = 1024;
        let mut out: Option<ForwardResult> = None;
        for chunk in x.chunks(CHUNK * m) {
            let rows = chunk.len() / m;
            let mut g = Graph::new();
            let xv = g.constant(&Tensor::matrix(rows, m, chunk.to_vec())?);
            let fv = self.forward(&mut g, xv)?;
            let r = ForwardResult::from_vars(&g, &fv, m);
            match &mut out {
                None => out = Some(r),
                Some(acc) => acc.append(r),
            }
        }
        Ok(out.expect("batch is nonempty"))
    }

    pub fn evaluate_cloud(&self, data: &PointCloud) -> Result<ForwardResult> {
        if data.m() != self.config.m {
            return Err(Error::DimensionMismatch {
                expected: self.config.m,
                actual: data.m(),
            });
        }
        self.evaluate(data.points(), data.n())
    }

    /// `E(x)` for row-major `[batch, m]` input.
    pub fn encode(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.encoder.eval(&self.store, x, batch)
    }

    /// `E_α(E(x))`.
    pub fn encode_chart(&self, x: &[f64], batch: usize, alpha: usize) -> Result<Vec<f64>> {
        self.check_alpha(alpha)?;
        let z = self.encode(x, batch)?;
        self.chart_encoders[alpha].eval(&self.store, &z, batch)
    }

    /// `D(D_α(z))` for row-major `[batch, d]` chart coordinates.
    pub fn decode_chart(&self, z: &[f64], batch: usize, alpha: usize) -> Result<Vec<f64>> {
        self.check_alpha(alpha)?;
        let w = self.chart_decoders[alpha].eval(&self.store, z, batch)?;
        self.decoder.eval(&self.store, &w, batch)
    }

    /// Single pass `D(D_α(E_α(E(x))))`.
    pub fn reconstruct_chart(&self, x: &[f64], batch: usize, alpha: usize) -> Result<Vec<f64>> {
        let z = self.encode_chart(x, batch, alpha)?;
        self.decode_chart(&z, batch, alpha)
    }

    /// Chart transition `E_β(E(D(D_α(z))))` of one chart-α code.
    pub fn transition(&self, z_alpha: &[f64], alpha: usize, beta: usize) -> Result<Vec<f64>> {
        self.check_alpha(alpha)?;
        self.check_alpha(beta)?;
        if z_alpha.len() != self.config.d {
            return Err(Error::DimensionMismatch {
                expected: self.config.d,
                actual: z_alpha.len(),
            });
        }
        let x = self.decode_chart(z_alpha, 1, alpha)?;
        self.encode_chart(&x, 1, beta)
    }

    /// Two-pass round-trip residual through charts α then β, plus β then α.
    pub fn cycle_residual(&self, x: &[f64], alpha: usize, beta: usize) -> Result<f64> {
        if x.len() != self.config.m {
            return Err(Error::DimensionMismatch {
                expected: self.config.m,
                actual: x.len(),
            });
        }
        let norm = |y: &[f64]| {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let ab = self.reconstruct_chart(&self.reconstruct_chart(x, 1, alpha)?, 1, beta)?;
        let ba = self.reconstruct_chart(&self.reconstruct_chart(x, 1, beta)?, 1, alpha)?;
        Ok(norm(&ab) + norm(&ba))
    }

    /// Writes the parameters to `path` and the configuration to the sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_tensors(path, self.store.iter().map(|(_, n, t)| (n, t)))?;
        let side = Sidecar {
            config: self.config.clone(),
            chart_labels: self.chart_labels.clone(),
            reference: self.reference.clone(),
        };
        let sp = sidecar_path(path);
        let text = serde_json::to_string_pretty(&side)?;
        std::fs::write(&sp, text).map_err(|e| Error::io(sp, e))
    }

    /// Restores a model written by [`CaeModel::save`].
    pub fn load(path: &Path) -> Result<CaeModel> {
        let sp = sidecar_path(path);
        let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
        let side: Sidecar = serde_json::from_str(&text)?;
        side.config
            .validate()
            .map_err(|e| Error::ConfigMismatch(e.to_string()))?;
        let tensors = load_tensors(path)?;
        Self::from_named(side.config, tensors, side.chart_labels, side.reference)
    }

    fn from_named(
        config: CaeConfig,
        tensors: Vec<(String, Tensor)>,
        chart_labels: Vec<usize>,
        reference: Vec<ChartReference>,
    ) -> Result<CaeModel> {
        let n = config.n_charts;
        if chart_labels.len() != n || reference.len() != n {
            return Err(Error::ConfigMismatch(format!(
                "sidecar lists {} chart labels and {} references for {n} charts",
                chart_labels.len(),
                reference.len()
            )));
        }
        let mut map: std::collections::BTreeMap<String, Tensor> = tensors.into_iter().collect();
        let depth = config.hidden.len() + 1;
        let mut take = |prefix: &str| -> Result<Layers> {
            (0..depth)
                .map(|k| {
                    let mut get = |suffix: &str| {
                        let name = format!("{prefix}.{k}.{suffix}");
                        map.remove(&name).ok_or_else(|| {
                            Error::ConfigMismatch(format!("checkpoint lacks tensor `{name}`"))
                        })
                    };
                    Ok((get("w")?, get("b")?))
                })
                .collect()
        };
        let layers = CaeLayers {
            encoder: take("encoder")?,
            chart_encoders: (0..n)
                .map(|a| take(&format!("chart_encoder.{a}")))
                .collect::<Result<_>>()?,
            chart_decoders: (0..n)
                .map(|a| take(&format!("chart_decoder.{a}")))
                .collect::<Result<_>>()?,
            predictor: take("predictor")?,
            decoder: take("decoder")?,
        };
        if let Some(extra) = map.keys().next() {
            return Err(Error::ConfigMismatch(format!(
                "unexpected tensor `{extra}` in checkpoint"
            )));
        }
        Self::assemble(config, layers, chart_labels, reference)
    }
}
