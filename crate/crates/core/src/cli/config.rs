//! Flat TOML run configuration. Every key is optional except `version`;
//! command-line flags override file values.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// How `[sqrt(n)]` is turned into an integer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    #[default]
    Nearest,
    Floor,
    Ceil,
}

impl Rounding {
    pub fn sqrt_k(self, n: usize) -> usize {
        let r = (n as f64).sqrt();
        let k = match self {
            Rounding::Nearest => r.round(),
            Rounding::Floor => r.floor(),
            Rounding::Ceil => r.ceil(),
        };
        (k as usize).max(1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub version: u32,
    pub seed: Option<u64>,
    pub rounding: Option<Rounding>,
    pub subset_cap: Option<usize>,
    // simulate
    pub d: Option<usize>,
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
    // train
    pub k1: Option<usize>,
    pub lambda_gp: Option<f64>,
    pub rho: Option<f64>,
    pub n_critic: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub latent_dim: Option<usize>,
    pub n_epochs: Option<usize>,
    pub hidden_g: Option<Vec<usize>>,
    pub hidden_d: Option<Vec<usize>>,
    pub search: Option<usize>,
    pub n_angles: Option<usize>,
    // sample / qqdata / evaluate
    pub k2: Option<usize>,
    pub n_star: Option<usize>,
    pub k_test: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: FileConfig =
            toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                cfg.version
            )));
        }
        if let (Some(k1), Some(k2)) = (cfg.k1, cfg.k2) {
            if k2 > k1 {
                return Err(Error::config(format!(
                    "k2 = {k2} exceeds k1 = {k1}; thresholds need k2 <= k1"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig {
                version: CONFIG_VERSION,
                ..Default::default()
            }),
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
        }
    }
}
