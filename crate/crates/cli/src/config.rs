use std::fs;
use std::path::{Path, PathBuf};

use mlcvqkd::keyrate::{KeyRateParams, OptimizerSettings, Protocol, RateKind};
use mlcvqkd::protocol::SessionConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Every parameter of every subcommand. Missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
    /// Constellation, channel, classifier and sizes for learn/predict.
    pub session: SessionConfig,
    pub simulate: SimulateConfig,
    pub evaluate: EvaluateConfig,
    pub keyrate: KeyrateConfig,
    pub optimize: OptimizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            format: OutputFormat::Csv,
            session: SessionConfig::default(),
            simulate: SimulateConfig::default(),
            evaluate: EvaluateConfig::default(),
            keyrate: KeyrateConfig::default(),
            optimize: OptimizeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub population: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { population: 10_000 }
    }
}

/// Learning-quality sweep over a `(V_m, distance)` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub modulation_variances: Vec<f64>,
    pub distances_km: Vec<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            modulation_variances: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            distances_km: vec![5.0, 10.0, 15.0, 20.0, 25.0],
        }
    }
}

fn distance_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyrateConfig {
    /// Detector, reconciliation, block and security parameters. The
    /// protocol and transmittance fields are overridden per curve point.
    pub params: KeyRateParams,
    pub protocols: Vec<Protocol>,
    pub distances_km: Vec<f64>,
    pub kind: RateKind,
}

impl Default for KeyrateConfig {
    fn default() -> Self {
        Self {
            params: KeyRateParams::default(),
            protocols: Protocol::ALL.to_vec(),
            distances_km: distance_grid(0.0, 150.0, 5.0),
            kind: RateKind::Asymptotic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub protocols: Vec<Protocol>,
    pub distances_km: Vec<f64>,
    pub settings: OptimizerSettings,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            protocols: vec![Protocol::FourState, Protocol::EightState],
            distances_km: distance_grid(10.0, 150.0, 10.0),
            settings: OptimizerSettings::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config document, reporting the key path of the first bad value.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::File(path.to_path_buf(), e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.simulate.population == 0 {
            return bad("simulate.population must be positive".into());
        }
        let finite_nonneg = |xs: &[f64]| xs.iter().all(|x| x.is_finite() && *x >= 0.0);
        for (key, xs) in [
            ("evaluate.distances_km", &self.evaluate.distances_km),
            ("keyrate.distances_km", &self.keyrate.distances_km),
            ("optimize.distances_km", &self.optimize.distances_km),
        ] {
            if !finite_nonneg(xs) {
                return bad(format!("{key} must hold finite, non-negative distances"));
            }
        }
        if !self
            .evaluate
            .modulation_variances
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            return bad("evaluate.modulation_variances must be positive".into());
        }
        Ok(())
    }
}
