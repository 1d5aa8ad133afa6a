mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cae_core::cae::{CaeModel, DEFAULT_PRUNE_THRESHOLD};
use cae_core::manifolds::{sample, ManifoldKind, ManifoldSpec, PointCloud};
use cae_core::metrics::{evaluate, geodesic_path};
use cae_core::simplicial::{compile_pl, sample_bound, SimplicialComplex};
use cae_core::trainer::fit;
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "cae", version, about = "Chart auto-encoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic manifold to CSV.
    Generate {
        #[arg(long)]
        kind: ManifoldKind,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ambient dimension; the native one when omitted.
        #[arg(long)]
        ambient: Option<usize>,
        #[arg(long, default_value_t = 0)]
        embed_seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretrain and train a model from an experiment file.
    Train {
        config: PathBuf,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruction, unfaithfulness and coverage of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training set (reference for unfaithfulness and coverage).
        #[arg(long)]
        data: PathBuf,
        /// Held-out set for reconstruction; the training set when omitted.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        ell: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decoded chart segment between two ambient points.
    Geodesic {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated start point.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        from: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        to: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Polyline CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile a piecewise-linear map on a simplicial complex to a ReLU network.
    CompileSimplex {
        /// Complex JSON `{vertices, simplices}`.
        #[arg(long)]
        complex: PathBuf,
        /// Per-vertex values as CSV with columns x0..x{q-1}.
        #[arg(long)]
        values: PathBuf,
        /// Network checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Random probes compared against barycentric interpolation.
        #[arg(long, default_value_t = 10_000)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Samples needed for an ε/2-dense cover with probability 1 − ν.
    SampleBound {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        tau: f64,
        /// vol(M) / vol(unit d-ball).
        #[arg(long = "C")]
        c: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        nu: f64,
    },
    /// Per-chart decay ratios and usage of a checkpoint.
    PruneReport {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Points to count chart wins on.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PRUNE_THRESHOLD)]
        threshold: f64,
    },
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn generate(
    kind: ManifoldKind,
    n: usize,
    seed: u64,
    ambient: Option<usize>,
    embed_seed: u64,
    noise: f64,
    out: Option<&Path>,
) -> Result<()> {
    let mut spec = ManifoldSpec::new(kind).with_noise(noise);
    if let Some(m) = ambient {
        spec = spec.with_ambient(m, embed_seed);
    }
    let cloud = sample(&spec, n, seed)?;
    match out {
        Some(p) => cloud.save_csv(p)?,
        None => cloud.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn train(config: &Path, epochs: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let (train_set, test_set) = cfg.load_data()?;
    let model = CaeModel::new(cfg.cae_config(train_set.m())?, cfg.model.seed)?;
    eprintln!(
        "training {} charts on {} points in R^{}",
        model.n_charts(),
        train_set.n(),
        train_set.m()
    );
    let (model, report) = fit(model, &train_set, &cfg.train)?;
    model.save(&dir.join("model.cae"))?;
    train_set.save_csv(&dir.join("train.csv"))?;
    test_set.save_csv(&dir.join("test.csv"))?;
    report.save_csv(&dir.join("train_report.csv"))?;
    // Wall time goes to stderr so the written files are reproducible.
    let mut value = serde_json::to_value(&report)?;
    value
        .as_object_mut()
        .expect("report is an object")
        .remove("wall_time_secs");
    write_json(&value, Some(&dir.join("train_report.json")))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "final min-recon {:e} with {} charts in {:.1}s",
        report.final_min_recon().unwrap_or(f64::NAN),
        model.n_charts(),
        report.wall_time_secs
    );
    if let Some(ev) = &cfg.eval {
        let r = evaluate(&model, &train_set, &test_set, ev.ell, ev.seed)?;
        r.save_json(&dir.join("eval.json"))?;
    }
    Ok(())
}

fn eval(
    checkpoint: &Path,
    data: &Path,
    test: Option<&Path>,
    ell: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let model = CaeModel::load(checkpoint)?;
    let train = PointCloud::load_csv(data)?;
    let test = match test {
        Some(p) => PointCloud::load_csv(p)?,
        None => train.clone(),
    };
    let r = evaluate(&model, &train, &test, ell, seed)?;
    write_json(&serde_json::to_value(&r)?, out)
}

fn geodesic(
    checkpoint: &Path,
    from: &[f64],
    to: &[f64],
    k: usize,
    out: Option<&Path>,
) -> Result<()> {
    let model = CaeModel::load(checkpoint)?;
    let path = geodesic_path(&model, from, to, k)?;
    if let Some(p) = out {
        let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        path.write_csv(std::io::BufWriter::new(f))?;
    }
    write_json(
        &json!({ "chart": path.chart, "k": k, "length": path.length }),
        None,
    )
}

fn compile_simplex(
    complex: &Path,
    values: &Path,
    out: &Path,
    probes: usize,
    seed: u64,
) -> Result<()> {
    let c = SimplicialComplex::load_json(complex)?;
    let vals = PointCloud::load_csv(values)?;
    let rows: Vec<Vec<f64>> = vals.rows().map(<[f64]>::to_vec).collect();
    let compiled = compile_pl(&c, &rows)?;
    compiled.network.save(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err = 0.0f64;
    for _ in 0..probes {
        let s = rng.random_range(0..c.n_simplices());
        let mut cuts: Vec<f64> = (0..c.dim()).map(|_| rng.random::<f64>()).collect();
        cuts.extend([0.0, 1.0]);
        cuts.sort_by(f64::total_cmp);
        let xi: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        let x = c.point(s, &xi);
        let want = c.interpolate(&rows, &x).expect("probe lies in the complex");
        let got = compiled.network.eval(&x)?;
        for (a, b) in got.iter().zip(&want) {
            max_err = max_err.max((a - b).abs());
        }
    }
    let r = &compiled.report;
    let mut value = serde_json::to_value(r)?;
    let obj = value.as_object_mut().expect("report is an object");
    obj.insert("within_param_bound".into(), r.within_param_bound().into());
    obj.insert("within_depth_bound".into(), r.within_depth_bound().into());
    obj.insert("probes".into(), probes.into());
    obj.insert("max_probe_error".into(), max_err.into());
    write_json(&value, None)?;
    if !compiled.network.counts_consistent() {
        bail!("declared and structural parameter counts differ");
    }
    if max_err > 1e-9 {
        bail!("compiled network deviates from the interpolant by {max_err:e}");
    }
    Ok(())
}

fn prune_report(checkpoint: &Path, data: Option<&Path>, threshold: f64) -> Result<()> {
    let model = CaeModel::load(checkpoint)?;
    let usage = match data {
        Some(p) => {
            let cloud = PointCloud::load_csv(p)?;
            let fr = model.evaluate_cloud(&cloud)?;
            let mut u = vec![0usize; model.n_charts()];
            fr.winner.iter().for_each(|&w| u[w] += 1);
            Some(u)
        }
        None => None,
    };
    let charts: Vec<serde_json::Value> = model
        .chart_health()
        .iter()
        .enumerate()
        .map(|(a, h)| {
            let dead = h.is_dead(threshold);
            let used = usage.as_ref().map(|u| u[a]);
            json!({
                "chart": a,
                "label": model.chart_labels()[a],
                "decoder_ratio": h.decoder_ratio,
                "lipschitz_ratio": h.lipschitz_ratio,
                "decayed": dead,
                "wins": used,
                "prunable": dead && used.is_none_or(|u| u == 0),
            })
        })
        .collect();
    write_json(&json!({ "threshold": threshold, "charts": charts }), None)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            kind,
            n,
            seed,
            ambient,
            embed_seed,
            noise,
            out,
        } => generate(kind, n, seed, ambient, embed_seed, noise, out.as_deref()),
        Command::Train {
            config,
            epochs,
            out,
        } => train(&config, epochs, out),
        Command::Eval {
            checkpoint,
            data,
            test,
            ell,
            seed,
            out,
        } => eval(
            &checkpoint,
            &data,
            test.as_deref(),
            ell,
            seed,
            out.as_deref(),
        ),
        Command::Geodesic {
            checkpoint,
            from,
            to,
            k,
            out,
        } => geodesic(&checkpoint, &from, &to, k, out.as_deref()),
        Command::CompileSimplex {
            complex,
            values,
            out,
            probes,
            seed,
        } => compile_simplex(&complex, &values, &out, probes, seed),
        Command::SampleBound { d, tau, c, eps, nu } => write_json(
            &serde_json::to_value(sample_bound(d, tau, c, eps, nu)?)?,
            None,
        ),
        Command::PruneReport {
            checkpoint,
            data,
            threshold,
        } => prune_report(&checkpoint, data.as_deref(), threshold),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
