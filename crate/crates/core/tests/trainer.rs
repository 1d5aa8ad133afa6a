use cae_core::cae::{CaeConfig, CaeModel, Preset};
use cae_core::manifolds::{sample, ManifoldKind, ManifoldSpec, PointCloud};
use cae_core::trainer::{approx_diameter, fit, pretrain, train, TrainConfig};
use cae_core::Error;

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        pretrain_steps: 200,
        batch_size: 32,
        ..TrainConfig::default()
    }
}

#[test]
fn single_point_pretraining_overfits() {
    let data = PointCloud::from_rows(&[[0.3, -0.7]]).unwrap();
    let mut model = CaeModel::new(CaeConfig::new(2, 1, 1, Preset::SmallCae).unwrap(), 0).unwrap();
    let rep = pretrain(&mut model, &data, &TrainConfig::default()).unwrap();
    assert_eq!(rep.seeds, vec![0]);
    assert!(rep.final_loss <= 1e-4, "{}", rep.final_loss);
}

#[test]
fn two_chart_seeds_are_antipodal_and_predicted() {
    let data = sample(&ManifoldSpec::new(ManifoldKind::Circle), 500, 3).unwrap();
    let mut model = CaeModel::new(CaeConfig::new(2, 1, 2, Preset::SmallCae).unwrap(), 1).unwrap();
    let rep = pretrain(
        &mut model,
        &data,
        &TrainConfig {
            pretrain_steps: 500,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let (a, b) = (data.row(rep.seeds[0]), data.row(rep.seeds[1]));
    let gap = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    assert!(gap >= 2.0 - 1e-2, "{gap}");
    assert!(
        rep.seed_prob.iter().all(|&p| p >= 0.5),
        "{:?}",
        rep.seed_prob
    );
    assert!(rep.seed_center.iter().all(|&c| c <= 0.2));
    assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
}

#[test]
fn zero_epochs_leave_the_model_unchanged() {
    let data = sample(&ManifoldSpec::new(ManifoldKind::Circle), 100, 0).unwrap();
    let model = CaeModel::new(CaeConfig::new(2, 1, 2, Preset::SmallCae).unwrap(), 0).unwrap();
    let (out, rep) = train(model.clone(), &data, &quick(0)).unwrap();
    assert!(rep.epochs.is_empty());
    assert_eq!(out.layers(), model.layers());
}

#[test]
fn identical_seeds_give_identical_runs() {
    let data = sample(&ManifoldSpec::new(ManifoldKind::Circle), 200, 0).unwrap();
    let run = || {
        let model = CaeModel::new(CaeConfig::new(2, 1, 3, Preset::SmallCae).unwrap(), 4).unwrap();
        fit(model, &data, &quick(3)).unwrap()
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert!(r1.same_run(&r2));
    assert_eq!(m1.layers(), m2.layers());
    let epochs: Vec<usize> = r1.epochs.iter().map(|e| e.epoch).collect();
    assert_eq!(epochs, vec![1, 2, 3]);
    for e in &r1.epochs {
        assert_eq!(e.usage.iter().sum::<usize>(), 200);
        assert_eq!(e.usage.len(), e.live_charts);
        assert!(e.loss.is_finite() && e.min_recon >= 0.0 && e.regularizer > 0.0);
    }
}

#[test]
fn training_reduces_the_reconstruction_error() {
    let data = sample(&ManifoldSpec::new(ManifoldKind::Circle), 300, 2).unwrap();
    let model = CaeModel::new(CaeConfig::new(2, 1, 2, Preset::SmallCae).unwrap(), 2).unwrap();
    let (_, rep) = fit(model, &data, &quick(8)).unwrap();
    let first = rep.epochs[0].min_recon;
    let last = rep.final_min_recon().unwrap();
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn non_finite_loss_aborts_with_the_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample(&ManifoldSpec::new(ManifoldKind::Circle), 64, 0).unwrap();
    let mut model = CaeModel::new(CaeConfig::new(2, 1, 2, Preset::SmallCae).unwrap(), 0).unwrap();
    let cfg = TrainConfig {
        checkpoint_every: 1,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..quick(2)
    };
    let (ok, rep) = train(model.clone(), &data, &cfg).unwrap();
    assert_eq!(rep.epochs.len(), 2);
    let saved = CaeModel::load(&dir.path().join("epoch_0002.cae")).unwrap();
    assert_eq!(saved.layers(), ok.layers());

    let w = model.decoder().weight_ids()[0];
    model.params_mut().get_mut(w).data_mut()[0] = f64::NAN;
    match train(model, &data, &cfg) {
        Err(Error::NonFiniteLoss {
            epoch: 1,
            checkpoint: None,
            ..
        }) => {}
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn batch_larger_than_the_data_is_rejected() {
    let data = sample(&ManifoldSpec::new(ManifoldKind::Circle), 10, 0).unwrap();
    let model = CaeModel::new(CaeConfig::new(2, 1, 2, Preset::SmallCae).unwrap(), 0).unwrap();
    assert!(train(model, &data, &quick(1)).is_err());
}

#[test]
fn report_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample(&ManifoldSpec::new(ManifoldKind::Circle), 64, 0).unwrap();
    let model = CaeModel::new(CaeConfig::new(2, 1, 2, Preset::SmallCae).unwrap(), 0).unwrap();
    let (_, rep) = fit(model, &data, &quick(2)).unwrap();
    let csv_path = dir.path().join("report.csv");
    rep.save_csv(&csv_path).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "epoch,loss,min_recon,regularizer,live_charts,usage,pruned"
    );
    assert_eq!(lines.len(), 3);
    let json_path = dir.path().join("report.json");
    rep.save_json(&json_path).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
    assert_eq!(v["epochs"].as_array().unwrap().len(), 2);
}

#[test]
fn diameter_of_a_circle() {
    let data = sample(&ManifoldSpec::new(ManifoldKind::Circle), 2000, 0).unwrap();
    let d = approx_diameter(&data);
    assert!(d <= 2.0 && d >= 2.0 - 1e-4, "{d}");
}
