use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named width schedules for the component networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Two hidden layers of 100 units in every component.
    SmallCae,
    /// Four hidden layers of 100 units in every component.
    LargeCae,
    /// Caller-supplied hidden widths.
    Custom,
}

/// What the chart predictor sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorInput {
    /// The raw input point.
    #[default]
    X,
    /// The initial latent code.
    Z,
    /// Squared distance of every chart code from its chart center.
    ZAlphaDistances,
}

/// Sign convention of the optional chart-orientation term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationReg {
    #[default]
    Off,
    /// Minimize the summed inner products.
    AsWritten,
    /// Minimize the negated sum, aligning chart codes with the PCA frame.
    NegAlignment,
}

macro_rules! str_enum {
    ($ty:ty, $what:literal, $($s:literal => $v:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                    $($s => Ok($v),)+
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", $what, " `{}` (expected one of: {})"),
                        other,
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v { return f.write_str($s); })+
                unreachable!()
            }
        }
    };
}

str_enum!(Preset, "preset", "small_cae" => Preset::SmallCae, "large_cae" => Preset::LargeCae, "custom" => Preset::Custom);
str_enum!(PredictorInput, "predictor input", "x" => PredictorInput::X, "z" => PredictorInput::Z, "z_alpha_distances" => PredictorInput::ZAlphaDistances);
str_enum!(OrientationReg, "orientation mode", "off" => OrientationReg::Off, "as_written" => OrientationReg::AsWritten, "neg_alignment" => OrientationReg::NegAlignment);

/// Shape of a chart auto-encoder.
///
/// Serialized as the checkpoint sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaeConfig {
    /// Ambient dimension.
    pub m: usize,
    /// Initial latent dimension.
    pub l: usize,
    /// Chart dimension; every chart space is the open box (0,1)^d.
    pub d: usize,
    /// Number of charts.
    #[serde(rename = "N")]
    pub n_charts: usize,
    pub preset: Preset,
    pub predictor_input: PredictorInput,
    /// Hidden widths shared by every component network.
    pub hidden: Vec<usize>,
}

impl CaeConfig {
    /// Config for a preset with `l = min(2d, m)`.
    pub fn new(m: usize, d: usize, n_charts: usize, preset: Preset) -> Result<Self> {
        let hidden = match preset {
            Preset::SmallCae => vec![100, 100],
            Preset::LargeCae => vec![100; 4],
            Preset::Custom => {
                return Err(Error::invalid(
                    "the custom preset needs explicit hidden widths",
                ))
            }
        };
        let cfg = CaeConfig {
            m,
            l: (2 * d).min(m),
            d,
            n_charts,
            preset,
            predictor_input: PredictorInput::X,
            hidden,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config with explicit hidden widths and `l = min(2d, m)`.
    pub fn custom(m: usize, d: usize, n_charts: usize, hidden: Vec<usize>) -> Result<Self> {
        let cfg = CaeConfig {
            m,
            l: (2 * d).min(m),
            d,
            n_charts,
            preset: Preset::Custom,
            predictor_input: PredictorInput::X,
            hidden,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_predictor_input(mut self, input: PredictorInput) -> Self {
        self.predictor_input = input;
        self
    }

    pub fn with_embed_dim(mut self, l: usize) -> Result<Self> {
        self.l = l;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > self.l || self.l > self.m {
            return Err(Error::invalid(format!(
                "dimensions must satisfy 1 <= d <= l <= m, got d={}, l={}, m={}",
                self.d, self.l, self.m
            )));
        }
        if self.n_charts == 0 {
            return Err(Error::invalid("at least one chart is required"));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::invalid(format!(
                "hidden widths must be positive: {:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    /// Input width of the chart predictor.
    pub fn predictor_in(&self) -> usize {
        match self.predictor_input {
            PredictorInput::X => self.m,
            PredictorInput::Z => self.l,
            PredictorInput::ZAlphaDistances => self.n_charts,
        }
    }

    pub(crate) fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend_from_slice(&self.hidden);
        w.push(output);
        w
    }
}
