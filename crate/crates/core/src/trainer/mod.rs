//! Seed pretraining, joint mini-batch training, pruning and checkpoints.

mod config;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cae::{loss, pca_frame, CaeModel, OrientationReg, PcaFrame};
use crate::error::{Error, Result};
use crate::manifolds::{farthest_point_sampling, PointCloud};
use crate::tensor::{adam_step, AdamState, Graph, Tensor};

pub use config::TrainConfig;
pub use report::{EpochStats, PretrainReport, TrainReport};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Diameter estimate from two farthest-point sweeps; within a factor of
/// two of the true diameter and exact for points on a circle or sphere.
pub fn approx_diameter(data: &PointCloud) -> f64 {
    let far = |from: usize| {
        (0..data.n())
            .map(|i| (i, dist(data.row(from), data.row(i))))
            .fold((from, 0.0), |best, c| if c.1 > best.1 { c } else { best })
    };
    let (a, _) = far(0);
    far(a).1
}

/// Indices of the `k` points nearest to row `center`, nearest first.
fn nearest(data: &PointCloud, center: usize, k: usize) -> Vec<usize> {
    let c = data.row(center);
    let mut idx: Vec<(f64, usize)> = (0..data.n()).map(|i| (dist(c, data.row(i)), i)).collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    idx.into_iter().take(k).map(|(_, i)| i).collect()
}

fn orientation_setup(
    model: &CaeModel,
    data: &PointCloud,
    seeds: &[usize],
    k: usize,
) -> Result<(Vec<PointCloud>, Vec<PcaFrame>)> {
    let d = model.config().d;
    let mut nbs = Vec::with_capacity(seeds.len());
    let mut frames = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let nb = data.subset(&nearest(data, s, k.min(data.n())))?;
        frames.push(pca_frame(&nb, d, data.row(s))?);
        nbs.push(nb);
    }
    Ok((nbs, frames))
}

/// Centers one chart on each farthest-point seed by minimizing the summed
/// seed losses with Adam.
pub fn pretrain(
    model: &mut CaeModel,
    data: &PointCloud,
    cfg: &TrainConfig,
) -> Result<PretrainReport> {
    cfg.validate()?;
    let n = model.n_charts();
    if n > data.n() {
        return Err(Error::invalid(format!(
            "{n} charts need at least {n} points, got {}",
            data.n()
        )));
    }
    if data.m() != model.config().m {
        return Err(Error::DimensionMismatch {
            expected: model.config().m,
            actual: data.m(),
        });
    }
    let seeds = farthest_point_sampling(data, n, 0)?.indices;
    let mut warnings = Vec::new();
    let orientation = match cfg.orientation_reg {
        OrientationReg::Off => None,
        _ => match orientation_setup(model, data, &seeds, cfg.orientation_neighbors) {
            Ok(o) => Some(o),
            Err(e) => {
                warnings.push(format!("orientation term disabled: {e}"));
                None
            }
        },
    };
    let mut adam = AdamState::new(cfg.lr);
    let mut final_loss = 0.0;
    for _ in 0..cfg.pretrain_steps {
        let mut g = Graph::new();
        let mut total = g.constant(&Tensor::scalar(0.0));
        for (a, &s) in seeds.iter().enumerate() {
            let l = model.pretrain_loss(&mut g, data.row(s), a, cfg.literal_pretrain_sign)?;
            total = g.add(total, l)?;
        }
        if let Some((nbs, frames)) = &orientation {
            let o = model.orientation_regularizer(&mut g, nbs, frames, cfg.orientation_reg)?;
            let o = g.scale(o, cfg.orientation_weight);
            total = g.add(total, o)?;
        }
        final_loss = g.scalar_value(total);
        if !final_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: 0,
                batch: 0,
                checkpoint: None,
            });
        }
        g.backward_into(total, model.params_mut())?;
        adam_step(model.params_mut(), &mut adam)?;
    }

    let diameter = approx_diameter(data);
    let mut report = PretrainReport {
        seeds: seeds.clone(),
        steps: cfg.pretrain_steps,
        final_loss,
        ..Default::default()
    };
    for (a, &s) in seeds.iter().enumerate() {
        let x = data.row(s);
        let recon = dist(x, &model.reconstruct_chart(x, 1, a)?);
        let center = model
            .encode_chart(x, 1, a)?
            .iter()
            .map(|z| (z - 0.5).abs())
            .fold(0.0, f64::max);
        let prob = model.evaluate(x, 1)?.p[a];
        if recon > 0.1 * diameter {
            warnings.push(format!(
                "chart {a}: seed reconstruction {recon:.3e} exceeds 0.1 x diameter"
            ));
        }
        if center > 0.2 {
            warnings.push(format!(
                "chart {a}: seed code is {center:.3} from the box center"
            ));
        }
        if prob < 1.0 / n as f64 {
            warnings.push(format!(
                "chart {a}: seed probability {prob:.3} is below 1/{n}"
            ));
        }
        report.seed_recon.push(recon);
        report.seed_center.push(center);
        report.seed_prob.push(prob);
    }
    report.warnings = warnings;
    Ok(report)
}

/// Mini-batch Adam on the chart loss plus the weighted Lipschitz term.
///
/// On the pruning schedule, charts whose weights decayed below the threshold
/// and that win no training point are removed. The model is consumed and
/// returned.
pub fn train(
    mut model: CaeModel,
    data: &PointCloud,
    cfg: &TrainConfig,
) -> Result<(CaeModel, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = TrainReport::default();
    if cfg.epochs == 0 {
        return Ok((model, report));
    }
    if data.m() != model.config().m {
        return Err(Error::DimensionMismatch {
            expected: model.config().m,
            actual: data.m(),
        });
    }
    if cfg.batch_size > data.n() {
        return Err(Error::invalid(format!(
            "batch size {} exceeds the dataset size {}",
            cfg.batch_size,
            data.n()
        )));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.record_reference();
    let m = data.m();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut adam = AdamState::new(cfg.lr);
    let mut last_checkpoint: Option<PathBuf> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut reg_sum, mut batches) = (0.0, 0.0, 0usize);
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut xb = Vec::with_capacity(idx.len() * m);
            for &i in idx {
                xb.extend_from_slice(data.row(i));
            }
            let mut g = Graph::new();
            let x = g.constant(&Tensor::matrix(idx.len(), m, xb)?);
            let fv = model.forward(&mut g, x)?;
            let l = loss(&mut g, &fv)?;
            let r = model.lipschitz_regularizer(&mut g)?;
            let rs = g.scale(r, cfg.lipschitz_weight);
            let total = g.add(l, rs)?;
            let (lv, rv) = (g.scalar_value(l), g.scalar_value(r));
            if !(lv.is_finite() && rv.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    checkpoint: last_checkpoint,
                });
            }
            g.backward_into(total, model.params_mut())?;
            adam_step(model.params_mut(), &mut adam)?;
            loss_sum += lv;
            reg_sum += rv;
            batches += 1;
        }

        let mut fr = model.evaluate_cloud(data)?;
        let mut usage = vec![0usize; model.n_charts()];
        for &w in &fr.winner {
            usage[w] += 1;
        }
        let mut pruned = Vec::new();
        if cfg.prunes_after(epoch) {
            let (pruned_model, dead) =
                model.prune_unused_charts(cfg.prune_rel_threshold, &usage)?;
            if !dead.is_empty() {
                pruned = dead.iter().map(|&a| model.chart_labels()[a]).collect();
                usage = (0..usage.len())
                    .filter(|a| !dead.contains(a))
                    .map(|a| usage[a])
                    .collect();
                model = pruned_model;
                adam.reset();
                fr = model.evaluate_cloud(data)?;
            }
        }
        let mins = fr.min_errors();
        report.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / batches as f64,
            min_recon: mins.iter().sum::<f64>() / mins.len() as f64,
            regularizer: reg_sum / batches as f64,
            live_charts: model.n_charts(),
            usage,
            pruned,
        });

        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            let dir = cfg.checkpoint_dir.as_ref().expect("validated");
            let path = dir.join(format!("epoch_{epoch:04}.cae"));
            model.save(&path)?;
            last_checkpoint = Some(path);
        }
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Pretraining (unless `pretrain_steps` is 0) followed by [`train`].
pub fn fit(
    mut model: CaeModel,
    data: &PointCloud,
    cfg: &TrainConfig,
) -> Result<(CaeModel, TrainReport)> {
    let start = Instant::now();
    let pre = if cfg.pretrain_steps > 0 {
        Some(pretrain(&mut model, data, cfg)?)
    } else {
        None
    };
    let (model, mut report) = train(model, data, cfg)?;
    if let Some(p) = &pre {
        let mut w = p.warnings.clone();
        w.append(&mut report.warnings);
        report.warnings = w;
    }
    report.pretrain = pre;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((model, report))
}
