//! Flat key-value configuration mirroring the command-line flags.
//!
//! The file format is a flat TOML table: `key = value` lines, no nesting.
//! Every key has a default, so an empty file (or no file) is valid, and the
//! command line overrides whatever the file sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{DEFAULT_MOMENT_COUNT, DEFAULT_ORDER, DEFAULT_RADIUS_M};

/// What the uncertainty scale factor multiplies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleAppliesTo {
    /// Scale multiplies the linear size (standard deviation, half-width);
    /// variance scales by the square.
    #[default]
    Std,
    /// Scale multiplies the variance; the linear size scales by the root.
    Var,
}

impl ScaleAppliesTo {
    /// Converts a requested scale factor to the multiplier on the
    /// distribution's linear size.
    pub fn linear_multiplier(self, requested: f64) -> Result<f64> {
        if !(requested > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be positive, got {requested}"
            )));
        }
        Ok(match self {
            ScaleAppliesTo::Std => requested,
            ScaleAppliesTo::Var => requested.sqrt(),
        })
    }
}

/// Runtime configuration shared by the command-line tools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Taylor expansion order of the closest-approach maps.
    pub order: u32,
    /// Raw moments propagated (also the PDF expansion degree).
    pub moments: usize,
    /// Combined hard-body radius, meters.
    pub radius_m: f64,
    /// Base RNG seed for the sampling estimators.
    pub seed: u64,
    /// Sample count for the sampling estimators.
    pub samples: u64,
    /// Worker threads; 0 keeps the library default (one per core).
    pub threads: usize,
    /// Convention for the uncertainty scale factor.
    pub scale_applies_to: ScaleAppliesTo,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            order: DEFAULT_ORDER,
            moments: DEFAULT_MOMENT_COUNT,
            radius_m: DEFAULT_RADIUS_M,
            seed: 0,
            samples: 100_000,
            threads: 0,
            scale_applies_to: ScaleAppliesTo::Std,
        }
    }
}

impl Config {
    /// Parses a flat key-value document. Unknown keys are errors, so typos
    /// do not silently fall back to defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Reads and parses a configuration file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        Config::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Serializes back to the flat key-value format.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Converts a requested scale factor to the multiplier on the
    /// distribution's linear size, per the configured convention.
    pub fn effective_scale(&self, requested: f64) -> Result<f64> {
        self.scale_applies_to.linear_multiplier(requested)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.order, 4);
        assert_eq!(cfg.moments, 8);
        assert_eq!(cfg.radius_m, 5.0);
        assert_eq!(cfg.scale_applies_to, ScaleAppliesTo::Std);
    }

    #[test]
    fn partial_document_overrides_only_named_keys() {
        let cfg = Config::from_toml("order = 6\nscale_applies_to = \"var\"\n").unwrap();
        assert_eq!(cfg.order, 6);
        assert_eq!(cfg.scale_applies_to, ScaleAppliesTo::Var);
        assert_eq!(cfg.moments, Config::default().moments);
        assert_eq!(cfg.samples, Config::default().samples);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config {
            seed: 99,
            threads: 2,
            scale_applies_to: ScaleAppliesTo::Var,
            ..Config::default()
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        let err = Config::from_toml("oder = 6\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse(_)));
        assert!(err.to_string().contains("oder"), "got {err}");
        assert!(Config::from_toml("order = \"four\"\n").is_err());
        assert!(Config::from_toml("scale_applies_to = \"stddev\"\n").is_err());
    }

    #[test]
    fn effective_scale_follows_the_convention() {
        let mut cfg = Config::default();
        assert_eq!(cfg.effective_scale(10.0).unwrap(), 10.0);
        cfg.scale_applies_to = ScaleAppliesTo::Var;
        assert!((cfg.effective_scale(100.0).unwrap() - 10.0).abs() < 1e-15);
        assert!(cfg.effective_scale(0.0).is_err());
        assert!(cfg.effective_scale(-1.0).is_err());
    }
}
