//! Run configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use rcm_core::eval::YearMonth;
use rcm_core::features::FeatureConfig;
use rcm_core::geotag::ScoringConfig;
use rcm_core::rcm::{
    LinearDirection, RcmConfig, SelectionScheme, WeightingConfig, WeightingScheme,
};
use rcm_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub months: Vec<YearMonth>,
    pub schemes: Vec<SelectionScheme>,
    pub weightings: Vec<WeightingName>,
    pub paths: Paths,
    pub features: Features,
    pub weighting: Weighting,
    pub evaluate: Evaluate,
    pub geotag: ScoringConfig,
    pub synth: Option<SynthConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            months: Vec::new(),
            schemes: SelectionScheme::ALL.to_vec(),
            weightings: vec![
                WeightingName::Uniform,
                WeightingName::Linear,
                WeightingName::Exp,
            ],
            paths: Paths::default(),
            features: Features::default(),
            weighting: Weighting::default(),
            evaluate: Evaluate::default(),
            geotag: ScoringConfig::default(),
            synth: None,
        }
    }
}

/// Weighting names as written in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingName {
    Uniform,
    Linear,
    Exp,
}

impl WeightingName {
    fn scheme(self) -> WeightingScheme {
        match self {
            WeightingName::Uniform => WeightingScheme::Uniform,
            WeightingName::Linear => WeightingScheme::Linear,
            WeightingName::Exp => WeightingScheme::Exponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw telemetry read by `tag`.
    pub data: PathBuf,
    pub geofile: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: PathBuf::from("out/simulate/telemetry.csv"),
            geofile: PathBuf::from("out/simulate/synthetic_world.geojson"),
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Features {
    pub phi1: f64,
    pub phi2: f64,
}

impl Default for Features {
    fn default() -> Self {
        Features {
            phi1: FeatureConfig::DEFAULT_PHI1,
            phi2: FeatureConfig::DEFAULT_PHI2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weighting {
    pub alpha: f64,
    pub linear_direction: LinearDirection,
    pub normalize: bool,
}

impl Default for Weighting {
    fn default() -> Self {
        let w = WeightingConfig::uniform();
        Weighting {
            alpha: w.alpha,
            linear_direction: w.linear_direction,
            normalize: w.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluate {
    pub clamp_humidity: bool,
    /// Parallel splits; unset uses every core.
    pub workers: Option<usize>,
}

impl Default for Evaluate {
    fn default() -> Self {
        Evaluate {
            clamp_humidity: true,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::new("io", format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Failure::new("config", format!("{}: {}", path.display(), e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Synth settings with the top-level seed applied.
    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone().unwrap_or_default()
        }
    }

    pub fn base_weighting(&self) -> WeightingConfig {
        WeightingConfig {
            scheme: WeightingScheme::Uniform,
            alpha: self.weighting.alpha,
            linear_direction: self.weighting.linear_direction,
            normalize: self.weighting.normalize,
        }
    }

    /// Configured variants in report order.
    pub fn variants(&self) -> Vec<RcmConfig> {
        RcmConfig::variants(
            &self.base_weighting(),
            self.features.phi1,
            self.features.phi2,
        )
        .into_iter()
        .filter(|v| {
            self.schemes.contains(&v.scheme)
                && self
                    .weightings
                    .iter()
                    .any(|w| w.scheme() == v.weighting.scheme)
        })
        .collect()
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.months.is_empty() {
            return Err(Failure::new(
                "config",
                "`months` must list at least one YYYYMM month",
            ));
        }
        if self.months.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Failure::new(
                "config",
                "`months` must be strictly ascending",
            ));
        }
        if self.variants().is_empty() {
            return Err(Failure::new(
                "config",
                "no weighting/scheme variants selected",
            ));
        }
        self.base_weighting().validate()?;
        Ok(())
    }

    pub fn tagged_data(&self) -> PathBuf {
        self.paths.output.join("tag").join("telemetry.csv")
    }
}
