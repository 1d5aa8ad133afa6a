//! Experiment files: TOML with `[data]`, `[model]`, `[train]` and optional
//! `[eval]` tables plus a top-level `output_dir`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cae_core::cae::{CaeConfig, PredictorInput, Preset};
use cae_core::manifolds::{load_idx_images, sample, ManifoldKind, ManifoldSpec, PointCloud};
use cae_core::trainer::TrainConfig;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
}

/// Either a synthetic manifold (`kind`, `n`) or IDX image files.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kind: Option<String>,
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub ambient: Option<usize>,
    #[serde(default)]
    pub embed_seed: u64,
    #[serde(default)]
    pub noise: f64,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Keep only the first this-many IDX images.
    pub subset: Option<usize>,
    /// Fraction held out for evaluation; 0 evaluates on the training set.
    #[serde(default)]
    pub test_fraction: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub charts: usize,
    pub d: usize,
    pub preset: String,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub l: Option<usize>,
    #[serde(default)]
    pub predictor_input: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub ell: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.message()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.output_dir);
        if let Some(p) = cfg.data.idx_images.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.data.idx_labels.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.train.checkpoint_dir.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let d = &self.data;
        match (&d.kind, &d.idx_images, &d.idx_labels) {
            (Some(kind), None, None) => {
                kind.parse::<ManifoldKind>()?;
                if d.n.is_none() {
                    bail!("[data] needs `n` for a synthetic manifold");
                }
            }
            (None, Some(images), Some(labels)) => {
                for p in [images, labels] {
                    if !p.is_file() {
                        bail!("[data] file {} does not exist", p.display());
                    }
                }
            }
            _ => bail!("[data] needs either `kind` or both `idx_images` and `idx_labels`"),
        }
        if !(0.0..1.0).contains(&d.test_fraction) {
            bail!("[data] test_fraction must lie in [0, 1)");
        }
        self.train.validate()?;
        Ok(())
    }

    /// Training and evaluation sets.
    pub fn load_data(&self) -> Result<(PointCloud, PointCloud)> {
        let d = &self.data;
        let cloud = if let Some(kind) = &d.kind {
            let kind: ManifoldKind = kind.parse()?;
            let mut spec = ManifoldSpec::new(kind).with_noise(d.noise);
            if let Some(m) = d.ambient {
                spec = spec.with_ambient(m, d.embed_seed);
            }
            sample(&spec, d.n.expect("validated"), d.seed)?
        } else {
            let images = d.idx_images.as_ref().expect("validated");
            let labels = d.idx_labels.as_ref().expect("validated");
            let all = load_idx_images(images, labels, d.normalize)?;
            match d.subset {
                Some(k) if k < all.n() => all.subset(&(0..k).collect::<Vec<_>>())?,
                _ => all,
            }
        };
        if d.test_fraction > 0.0 {
            Ok(cloud.split(1.0 - d.test_fraction, d.seed)?)
        } else {
            Ok((cloud.clone(), cloud))
        }
    }

    pub fn cae_config(&self, m: usize) -> Result<CaeConfig> {
        let mc = &self.model;
        let preset: Preset = mc.preset.parse()?;
        let mut cfg = match preset {
            Preset::Custom => CaeConfig::custom(m, mc.d, mc.charts, mc.hidden.clone())?,
            p => {
                if !mc.hidden.is_empty() {
                    bail!("[model] `hidden` applies only to the custom preset");
                }
                CaeConfig::new(m, mc.d, mc.charts, p)?
            }
        };
        if let Some(l) = mc.l {
            cfg = cfg.with_embed_dim(l)?;
        }
        if let Some(p) = &mc.predictor_input {
            cfg = cfg.with_predictor_input(p.parse::<PredictorInput>()?);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped(name: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs")
            .join(name)
    }

    #[test]
    fn shipped_configs_parse() {
        for name in ["circle.toml", "sphere50.toml"] {
            let cfg = ExperimentConfig::load(&shipped(name)).unwrap();
            let (train, test) = cfg.load_data().unwrap();
            assert_eq!(train.n() + test.n(), 2000, "{name}");
            cfg.cae_config(train.m()).unwrap();
        }
        // The image paths are machine specific, so only the schema is checked.
        let text = std::fs::read_to_string(shipped("mnist.toml")).unwrap();
        let cfg: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(
            (cfg.model.charts, cfg.model.d, cfg.train.epochs),
            (4, 4, 20)
        );
        cfg.cae_config(784).unwrap();
    }
}
