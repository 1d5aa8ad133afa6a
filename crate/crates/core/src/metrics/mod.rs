//! Reconstruction, sampling-quality and latent-path metrics.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cae::CaeModel;
use crate::error::{Error, Result};
use crate::manifolds::PointCloud;

/// Default number of latent samples for unfaithfulness and coverage.
pub const DEFAULT_ELL: usize = 100;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A point of one chart's latent box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSample {
    pub chart: usize,
    pub coords: Vec<f64>,
}

/// How latent samples are spread over charts.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ChartAllocation {
    /// Every live chart equally likely.
    #[default]
    Uniform,
    /// Chart drawn with probability proportional to the given weights,
    /// e.g. the training usage histogram.
    Proportional(Vec<f64>),
}

/// Draws `ell` latent samples: a chart per the allocation, then coordinates
/// uniform in the open unit box.
pub fn latent_samples(
    model: &CaeModel,
    ell: usize,
    seed: u64,
    alloc: &ChartAllocation,
) -> Result<Vec<LatentSample>> {
    let n = model.n_charts();
    let d = model.config().d;
    let cumulative: Option<Vec<f64>> = match alloc {
        ChartAllocation::Uniform => None,
        ChartAllocation::Proportional(w) => {
            if w.len() != n
                || w.iter().any(|x| !(*x >= 0.0 && x.is_finite()))
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(Error::invalid(format!(
                    "allocation weights must be {n} nonnegative numbers with a positive sum"
                )));
            }
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            Some(
                w.iter()
                    .map(|x| {
                        acc += x / total;
                        acc
                    })
                    .collect(),
            )
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let open_unit = |rng: &mut ChaCha8Rng| loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    };
    Ok((0..ell)
        .map(|_| {
            let chart = match &cumulative {
                None => rng.random_range(0..n),
                Some(c) => {
                    let u: f64 = rng.random();
                    c.iter().position(|&x| u < x).unwrap_or(n - 1)
                }
            };
            let coords = (0..d).map(|_| open_unit(&mut rng)).collect();
            LatentSample { chart, coords }
        })
        .collect())
}

/// Ambient points `D(D_chart(coords))`, in sample order.
pub fn decode_latent(model: &CaeModel, samples: &[LatentSample]) -> Result<Vec<Vec<f64>>> {
    let d = model.config().d;
    if let Some(s) = samples.iter().find(|s| s.chart >= model.n_charts()) {
        return Err(Error::IndexOutOfRange {
            what: "charts",
            index: s.chart,
            len: model.n_charts(),
        });
    }
    let mut out = vec![Vec::new(); samples.len()];
    for a in 0..model.n_charts() {
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].chart == a)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let mut z = Vec::with_capacity(idx.len() * d);
        for &i in &idx {
            if samples[i].coords.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: samples[i].coords.len(),
                });
            }
            z.extend_from_slice(&samples[i].coords);
        }
        let y = model.decode_chart(&z, idx.len(), a)?;
        let m = model.config().m;
        for (k, &i) in idx.iter().enumerate() {
            out[i] = y[k * m..(k + 1) * m].to_vec();
        }
    }
    Ok(out)
}

/// Index of the nearest row of `data` and its squared distance; lowest index
/// on ties.
pub fn nearest_neighbor(data: &PointCloud, y: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, r) in data.rows().enumerate() {
        let d = dist2(r, y);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Mean squared distance `||x − y(x)||²` with `y` from the winning chart.
pub fn reconstruction_error(model: &CaeModel, test: &PointCloud) -> Result<f64> {
    if test.n() == 0 {
        return Err(Error::invalid("reconstruction error of an empty test set"));
    }
    let fr = model.evaluate_cloud(test)?;
    let m = test.m();
    let total: f64 = (0..test.n())
        .map(|i| dist2(test.row(i), &fr.y[i * m..(i + 1) * m]))
        .sum();
    Ok(total / test.n() as f64)
}

fn check_sampling(model: &CaeModel, train: &PointCloud, ell: usize) -> Result<()> {
    if ell == 0 {
        return Err(Error::invalid("at least one latent sample is required"));
    }
    if train.n() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if train.m() != model.config().m {
        return Err(Error::DimensionMismatch {
            expected: model.config().m,
            actual: train.m(),
        });
    }
    Ok(())
}

/// Nearest training index and squared distance of each decoded sample.
fn sample_neighbors(
    model: &CaeModel,
    train: &PointCloud,
    ell: usize,
    seed: u64,
    alloc: &ChartAllocation,
) -> Result<Vec<(usize, f64)>> {
    check_sampling(model, train, ell)?;
    let samples = latent_samples(model, ell, seed, alloc)?;
    let ys = decode_latent(model, &samples)?;
    Ok(ys.iter().map(|y| nearest_neighbor(train, y)).collect())
}

/// Mean over `ell` decoded latent samples of the squared distance to the
/// nearest training point.
pub fn unfaithfulness(model: &CaeModel, train: &PointCloud, ell: usize, seed: u64) -> Result<f64> {
    unfaithfulness_with(model, train, ell, seed, &ChartAllocation::Uniform)
}

pub fn unfaithfulness_with(
    model: &CaeModel,
    train: &PointCloud,
    ell: usize,
    seed: u64,
    alloc: &ChartAllocation,
) -> Result<f64> {
    let nn = sample_neighbors(model, train, ell, seed, alloc)?;
    Ok(nn.iter().map(|(_, d)| d).sum::<f64>() / ell as f64)
}

/// Fraction of decoded latent samples with distinct nearest training points.
pub fn coverage(model: &CaeModel, train: &PointCloud, ell: usize, seed: u64) -> Result<f64> {
    coverage_with(model, train, ell, seed, &ChartAllocation::Uniform)
}

pub fn coverage_with(
    model: &CaeModel,
    train: &PointCloud,
    ell: usize,
    seed: u64,
    alloc: &ChartAllocation,
) -> Result<f64> {
    let nn = sample_neighbors(model, train, ell, seed, alloc)?;
    let mut idx: Vec<usize> = nn.iter().map(|(i, _)| *i).collect();
    idx.sort_unstable();
    idx.dedup();
    Ok(idx.len() as f64 / ell as f64)
}

/// Metrics of a model on held-out data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recon_error: f64,
    pub unfaithfulness: f64,
    pub coverage: f64,
    pub ell: usize,
    pub seed: u64,
    pub charts_live: usize,
    pub n_test: usize,
    pub n_latent_samples: usize,
    /// Latent samples drawn from each chart.
    pub chart_allocation: Vec<usize>,
}

impl EvalReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Reconstruction error on `test`, unfaithfulness and coverage against
/// `train`, from one set of `ell` latent samples.
pub fn evaluate(
    model: &CaeModel,
    train: &PointCloud,
    test: &PointCloud,
    ell: usize,
    seed: u64,
) -> Result<EvalReport> {
    let alloc = ChartAllocation::Uniform;
    check_sampling(model, train, ell)?;
    let samples = latent_samples(model, ell, seed, &alloc)?;
    let ys = decode_latent(model, &samples)?;
    let nn: Vec<(usize, f64)> = ys.iter().map(|y| nearest_neighbor(train, y)).collect();
    let mut idx: Vec<usize> = nn.iter().map(|(i, _)| *i).collect();
    idx.sort_unstable();
    idx.dedup();
    let mut chart_allocation = vec![0; model.n_charts()];
    for s in &samples {
        chart_allocation[s.chart] += 1;
    }
    Ok(EvalReport {
        recon_error: reconstruction_error(model, test)?,
        unfaithfulness: nn.iter().map(|(_, d)| d).sum::<f64>() / ell as f64,
        coverage: idx.len() as f64 / ell as f64,
        ell,
        seed,
        charts_live: model.n_charts(),
        n_test: test.n(),
        n_latent_samples: ell,
        chart_allocation,
    })
}

/// Decoded straight line between two points in one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPath {
    pub chart: usize,
    /// `k` decoded points, row-major `[k, m]`.
    pub points: Vec<Vec<f64>>,
    pub length: f64,
}

impl GeodesicPath {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::invalid(format!("writing path CSV: {e}"));
        let m = self.points.first().map_or(0, |p| p.len());
        let header: Vec<String> = (0..m).map(|j| format!("x{j}")).collect();
        out.write_record(&header).map_err(csv_err)?;
        for p in &self.points {
            out.write_record(p.iter().map(|x| format!("{x:e}")))
                .map_err(csv_err)?;
        }
        out.flush()
            .map_err(|e| Error::invalid(format!("writing path CSV: {e}")))
    }
}

/// Length of the decoded image of the chart segment between the codes of
/// `a` and `b`, sampled at `k` evenly spaced points.
pub fn geodesic_path(model: &CaeModel, a: &[f64], b: &[f64], k: usize) -> Result<GeodesicPath> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "a path needs at least 2 samples, got {k}"
        )));
    }
    let m = model.config().m;
    if a.len() != m || b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: if a.len() != m { a.len() } else { b.len() },
        });
    }
    let mut ends = a.to_vec();
    ends.extend_from_slice(b);
    let fr = model.evaluate(&ends, 2)?;
    let (ca, cb) = (fr.winner[0], fr.winner[1]);
    if ca != cb {
        return Err(Error::invalid(format!(
            "endpoints lie in different charts ({ca} and {cb}); paths across charts are not supported"
        )));
    }
    let za = &fr.z_charts[ca];
    let d = model.config().d;
    let mut z = Vec::with_capacity(k * d);
    for i in 0..k {
        let t = i as f64 / (k - 1) as f64;
        z.extend((0..d).map(|j| (1.0 - t) * za[j] + t * za[d + j]));
    }
    let y = model.decode_chart(&z, k, ca)?;
    let points: Vec<Vec<f64>> = y.chunks(m).map(|r| r.to_vec()).collect();
    let length = points.windows(2).map(|w| dist2(&w[0], &w[1]).sqrt()).sum();
    Ok(GeodesicPath {
        chart: ca,
        points,
        length,
    })
}

pub fn geodesic_length(model: &CaeModel, a: &[f64], b: &[f64], k: usize) -> Result<f64> {
    Ok(geodesic_path(model, a, b, k)?.length)
}

/// Latent distance between consecutive points of an ordered sequence. Within
/// one chart this is the chart-code distance; across charts the first code
/// is carried into the second chart by the transition map.
pub fn consecutive_latent_distances(model: &CaeModel, sequence: &PointCloud) -> Result<Vec<f64>> {
    if sequence.n() < 2 {
        return Err(Error::invalid("a sequence needs at least two points"));
    }
    let fr = model.evaluate_cloud(sequence)?;
    let d = model.config().d;
    let code = |a: usize, t: usize| &fr.z_charts[a][t * d..(t + 1) * d];
    (0..sequence.n() - 1)
        .map(|t| {
            let (a, b) = (fr.winner[t], fr.winner[t + 1]);
            if a == b {
                Ok(dist2(code(a, t), code(a, t + 1)).sqrt())
            } else {
                let carried = model.transition(code(a, t), a, b)?;
                Ok(dist2(&carried, code(b, t + 1)).sqrt())
            }
        })
        .collect()
}

/// Largest over median entry; the spike statistic of a latent path.
pub fn max_median_ratio(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    v[n - 1] / median
}
