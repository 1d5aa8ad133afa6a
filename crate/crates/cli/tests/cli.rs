use std::path::Path;
use std::process::{Command, Output};

use cae_core::cae::{CaeConfig, CaeLayers, CaeModel};
use cae_core::manifolds::PointCloud;
use cae_core::simplicial::{ReluNetwork, SimplicialComplex};
use cae_core::tensor::Tensor;
use cae_core::trainer::{pretrain, TrainConfig};
use serde_json::Value;

fn cae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cae(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = cae(args);
    assert!(!out.status.success(), "{args:?} should fail");
    assert!(out.stdout.is_empty());
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn norms(cloud: &PointCloud) -> Vec<f64> {
    cloud
        .rows()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect()
}

#[test]
fn generate_circle_and_embedded_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&[
        "generate",
        "--kind",
        "circle",
        "--n",
        "1000",
        "--seed",
        "7",
        "--out",
        s(&a),
    ]);
    ok(&[
        "generate",
        "--kind",
        "circle",
        "--n",
        "1000",
        "--seed",
        "7",
        "--out",
        s(&b),
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let circle = PointCloud::load_csv(&a).unwrap();
    assert_eq!((circle.n(), circle.m()), (1000, 2));
    assert!(norms(&circle).iter().all(|r| (r - 1.0).abs() <= 1e-12));

    let sphere = dir.path().join("s.csv");
    ok(&[
        "generate",
        "--kind",
        "sphere",
        "--ambient",
        "50",
        "--embed-seed",
        "3",
        "--out",
        s(&sphere),
    ]);
    let sphere = PointCloud::load_csv(&sphere).unwrap();
    assert_eq!((sphere.n(), sphere.m()), (1000, 50));
    assert!(norms(&sphere).iter().all(|r| (r - 1.0).abs() <= 1e-9));

    let stdout = ok(&["generate", "--kind", "torus", "--n", "3"]);
    assert_eq!(stdout.lines().count(), 4);
    assert!(fail(&["generate", "--kind", "klein", "--n", "3"]).contains("klein"));
    assert!(!fail(&["generate", "--kind", "sphere", "--ambient", "2"]).is_empty());
}

#[test]
fn sample_bound_command() {
    let out: Value = serde_json::from_str(&ok(&[
        "sample-bound",
        "--d",
        "1",
        "--tau",
        "1",
        "--C",
        "3.141592653589793",
        "--eps",
        "0.4",
        "--nu",
        "0.1",
    ]))
    .unwrap();
    assert_eq!(out["n_required"], 203);
    let b1 = out["beta1"].as_f64().unwrap();
    assert!((b1 - 31.455270228880017).abs() / b1 <= 1e-10);
    let err = fail(&[
        "sample-bound",
        "--d",
        "2",
        "--tau",
        "1",
        "--C",
        "4",
        "--eps",
        "0.5",
        "--nu",
        "0.1",
    ]);
    assert!(err.contains("tau/2"), "{err}");
}

fn grid_complex(k: usize) -> SimplicialComplex {
    let idx = |i: usize, j: usize| i * (k + 1) + j;
    let mut v = Vec::new();
    for i in 0..=k {
        for j in 0..=k {
            v.push(vec![i as f64, j as f64]);
        }
    }
    let mut t = Vec::new();
    for i in 0..k {
        for j in 0..k {
            t.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            t.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    SimplicialComplex::new(v, t).unwrap()
}

#[test]
fn compile_simplex_identity_and_constants() {
    let dir = tempfile::tempdir().unwrap();
    let c = grid_complex(3);
    let cpath = dir.path().join("c.json");
    c.save_json(&cpath).unwrap();
    let values = dir.path().join("v.csv");
    let flat: Vec<f64> = c.vertices().iter().flatten().copied().collect();
    PointCloud::new(flat, 2).unwrap().save_csv(&values).unwrap();
    let net = dir.path().join("net.cae");
    let report: Value = serde_json::from_str(&ok(&[
        "compile-simplex",
        "--complex",
        s(&cpath),
        "--values",
        s(&values),
        "--out",
        s(&net),
        "--probes",
        "2000",
    ]))
    .unwrap();
    assert!(report["max_probe_error"].as_f64().unwrap() <= 1e-10);
    assert_eq!(report["within_param_bound"], true);
    assert_eq!(report["within_depth_bound"], true);
    assert_eq!(report["q"], 2);
    let loaded = ReluNetwork::load(&net).unwrap();
    assert!((loaded.eval(&[1.25, 2.5]).unwrap()[0] - 1.25).abs() <= 1e-10);

    PointCloud::new(vec![7.0; c.n_vertices()], 1)
        .unwrap()
        .save_csv(&values)
        .unwrap();
    ok(&[
        "compile-simplex",
        "--complex",
        s(&cpath),
        "--values",
        s(&values),
        "--out",
        s(&net),
    ]);
    let loaded = ReluNetwork::load(&net).unwrap();
    assert!((loaded.eval(&[0.3, 2.9]).unwrap()[0] - 7.0).abs() <= 1e-10);

    PointCloud::new(vec![7.0; 3], 1)
        .unwrap()
        .save_csv(&values)
        .unwrap();
    fail(&[
        "compile-simplex",
        "--complex",
        s(&cpath),
        "--values",
        s(&values),
        "--out",
        s(&net),
    ]);
}

const CIRCLE_CONFIG: &str = r#"
output_dir = "out"

[data]
kind = "circle"
n = 300
seed = 1

[model]
charts = 2
d = 1
preset = "custom"
hidden = [16, 16]
seed = 3

[train]
lr = 3e-3
batch_size = 32
epochs = 3
lipschitz_weight = 1e-2
pretrain_steps = 50
literal_pretrain_sign = false
orientation_reg = "off"
orientation_weight = 0.0
orientation_neighbors = 10
prune = false
prune_rel_threshold = 1e-2
prune_start = 1
prune_every = 1
seed = 5
checkpoint_every = 0

[eval]
ell = 40
seed = 2
"#;

#[test]
fn train_eval_geodesic_and_prune_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, CIRCLE_CONFIG).unwrap();
    ok(&["train", s(&cfg)]);
    let out = dir.path().join("out");
    for f in [
        "model.cae",
        "train.csv",
        "test.csv",
        "train_report.csv",
        "train_report.json",
        "eval.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    // Reruns write identical files.
    let again = dir.path().join("again");
    ok(&["train", s(&cfg), "--out", s(&again)]);
    for f in ["model.cae", "train_report.json", "eval.json"] {
        assert_eq!(
            std::fs::read(out.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("train_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 3);

    let model = out.join("model.cae");
    let data = out.join("train.csv");
    let args = [
        "eval",
        "--checkpoint",
        s(&model),
        "--data",
        s(&data),
        "--ell",
        "30",
        "--seed",
        "4",
    ];
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    let ev: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(ev["ell"], 30);
    assert!(ev["coverage"].as_f64().unwrap() > 0.0);

    let g: Value = serde_json::from_str(&ok(&[
        "geodesic",
        "--checkpoint",
        s(&model),
        "--from",
        "1,0",
        "--to",
        "1,0",
        "--k",
        "10",
    ]))
    .unwrap();
    assert!(g["length"].as_f64().unwrap() <= 1e-15);
    let poly = dir.path().join("path.csv");
    ok(&[
        "geodesic",
        "--checkpoint",
        s(&model),
        "--from",
        "1,0",
        "--to",
        "0.98,0.2",
        "--k",
        "2",
        "--out",
        s(&poly),
    ]);
    let pts = PointCloud::load_csv(&poly).unwrap();
    assert_eq!(pts.n(), 2);

    let pr: Value = serde_json::from_str(&ok(&[
        "prune-report",
        "--checkpoint",
        s(&model),
        "--data",
        s(&data),
    ]))
    .unwrap();
    let charts = pr["charts"].as_array().unwrap();
    assert_eq!(charts.len(), 2);
    let wins: u64 = charts.iter().map(|c| c["wins"].as_u64().unwrap()).sum();
    assert_eq!(wins, 300);
}

#[test]
fn zero_epochs_store_the_pretrained_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, CIRCLE_CONFIG).unwrap();
    ok(&["train", s(&cfg), "--epochs", "0"]);
    let saved = CaeModel::load(&dir.path().join("out/model.cae")).unwrap();

    let data = PointCloud::load_csv(&dir.path().join("out/train.csv")).unwrap();
    let mut model = CaeModel::new(CaeConfig::custom(2, 1, 2, vec![16, 16]).unwrap(), 3).unwrap();
    let text = CIRCLE_CONFIG.split("[train]").nth(1).unwrap();
    let train_cfg = TrainConfig::from_toml_str(text.split("[eval]").next().unwrap()).unwrap();
    pretrain(&mut model, &data, &train_cfg).unwrap();
    assert_eq!(saved.layers(), model.layers());
}

#[test]
fn missing_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, CIRCLE_CONFIG.replace("lr = 3e-3\n", "")).unwrap();
    let err = fail(&["train", s(&cfg)]);
    assert!(err.contains("`lr`"), "{err}");
    std::fs::write(
        &cfg,
        CIRCLE_CONFIG.replace(
            "kind = \"circle\"",
            "idx_images = \"nope.idx\"\nidx_labels = \"nope.idx\"",
        ),
    )
    .unwrap();
    assert!(fail(&["train", s(&cfg)]).contains("does not exist"));
}

#[test]
fn eval_of_a_fixed_point_model_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let one = |w: f64, b: f64| {
        (
            Tensor::matrix(1, 1, vec![w]).unwrap(),
            Tensor::vector(vec![b]).unwrap(),
        )
    };
    // Every input decodes to 0.5.
    let layers = CaeLayers {
        encoder: vec![one(1.0, 0.0)],
        chart_encoders: vec![vec![one(0.0, 0.0)]],
        chart_decoders: vec![vec![one(0.0, 0.5)]],
        predictor: vec![one(1.0, 0.0)],
        decoder: vec![one(1.0, 0.0)],
    };
    let model = CaeModel::from_layers(CaeConfig::custom(1, 1, 1, vec![]).unwrap(), layers).unwrap();
    let ckpt = dir.path().join("m.cae");
    model.save(&ckpt).unwrap();
    let data = dir.path().join("d.csv");
    PointCloud::new(vec![0.5; 4], 1)
        .unwrap()
        .save_csv(&data)
        .unwrap();
    let ev: Value = serde_json::from_str(&ok(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--ell",
        "3",
    ]))
    .unwrap();
    assert_eq!(ev["recon_error"], 0.0);
    assert_eq!(ev["unfaithfulness"], 0.0);
}
