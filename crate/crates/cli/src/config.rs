//! Experiment configuration files (TOML, unknown keys rejected).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twistorlab::harmonic_builders::Target;
use twistorlab::{Domain, C64};

use crate::CliError;

/// Configurations shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("s3_constant_twist", include_str!("../configs/s3_constant_twist.toml")),
    ("h3_strip_lightcone", include_str!("../configs/h3_strip_lightcone.toml")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pipeline: Vec<Step>,
    pub domain: DomainSpec,
    pub solution: SolutionSpec,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Energy,
    Twist,
    Dual,
    Residue,
    Lightcone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Torus {
        /// Lattice modulus τ as `[re, im]`.
        modulus: [f64; 2],
        nx: usize,
        ny: usize,
    },
    Patch {
        x_range: [f64; 2],
        y_range: [f64; 2],
        nx: usize,
        ny: usize,
    },
}

impl DomainSpec {
    pub fn build(&self) -> twistorlab::Result<Domain> {
        match *self {
            DomainSpec::Torus { modulus, nx, ny } => Domain::torus(C64::new(modulus[0], modulus[1]), nx, ny),
            DomainSpec::Patch {
                x_range,
                y_range,
                nx,
                ny,
            } => Domain::patch(x_range, y_range, nx, ny),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Constant conformal factor for constant Hopf differential.
    Constant,
    /// x-dependent solution on a strip, integrated from `u_init`.
    Strip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionSpec {
    pub target: Target,
    /// Constant Hopf differential `q` as `[re, im]`.
    pub q: [f64; 2],
    pub solver: Solver,
    /// Strip initial value; the slowest-varying value when absent.
    #[serde(default)]
    pub u_init: Option<f64>,
    #[serde(default)]
    pub du_init: f64,
    /// Strip integrator steps; `4·(nx − 1)` (at least 256) when absent.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Seeds of random λ-independent gauges applied to the built family.
    #[serde(default)]
    pub gauge_seeds: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

/// Default tolerance of every named check.
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("area_energy", 1e-4),
    ("block_identity", 1e-8),
    ("degree_integrality", 1e-6),
    ("dual_energy_relation", 1e-8),
    ("dual_so5", 1e-6),
    ("energy_imag", 1e-10),
    ("energy_sign", 1e-12),
    ("fingerprint_reality", 1e-7),
    ("frame_reality", 1e-7),
    ("flatness", 1e-8),
    ("lightcone_q", 1e-8),
    ("mean_curvature", 1e-4),
    ("metric_factor", 1e-5),
    ("residue_identity", 1e-10),
    ("so5_connection", 1e-5),
    ("sphere_normal", 1e-6),
    ("transport_path", 1e-7),
    ("twist_energy_relation", 1e-8),
    ("twist_positivity", 0.0),
    ("willmore_algebraic", 1e-10),
    ("willmore_geometric", 1e-4),
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Read a config file, or a bundled config by name when no such file exists.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            if let Some((_, text)) = BUNDLED.iter().find(|(name, _)| Path::new(name) == path) {
                return Self::from_toml(text);
            }
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (name, tol) in &self.tolerances {
            if !DEFAULT_TOLERANCES.iter().any(|(n, _)| n == name) {
                return Err(CliError::Config(format!("unknown tolerance `{name}`")));
            }
            if !(tol.is_finite() && *tol >= 0.0) {
                return Err(CliError::Config(format!(
                    "tolerance `{name}` must be finite and non-negative"
                )));
            }
        }
        self.domain.build().map_err(|e| CliError::Config(e.to_string()))?;
        let patch = matches!(self.domain, DomainSpec::Patch { .. });
        match self.solution.solver {
            Solver::Strip if !patch || self.solution.target != Target::H3 => {
                return Err(CliError::Config(
                    "the strip solver needs a patch domain and target h3".into(),
                ));
            }
            Solver::Constant if self.solution.target != Target::S3 => {
                return Err(CliError::Config("constant solutions exist only for target s3".into()));
            }
            _ => {}
        }
        let mut seen = Vec::new();
        for step in &self.pipeline {
            if seen.contains(step) {
                return Err(CliError::Config(format!("pipeline step {step:?} listed twice")));
            }
            seen.push(*step);
        }
        if self.pipeline.contains(&Step::Lightcone) && patch && self.solution.target != Target::H3 {
            return Err(CliError::Config("lightcone geometry on a patch needs target h3".into()));
        }
        Ok(())
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or_else(|| {
            DEFAULT_TOLERANCES
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| *t)
                .expect("every check has a default tolerance")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse_and_round_trip() {
        for (name, text) in BUNDLED {
            let config = ExperimentConfig::from_toml(text).unwrap();
            assert_eq!(&config.name, name);
            let again = ExperimentConfig::from_toml(&config.to_toml().unwrap()).unwrap();
            assert_eq!(config, again);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BUNDLED[0].1.replace("[solution]", "[solution]\nsolvr = \"constant\"");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
        let text = BUNDLED[0].1.replace("nx = 128", "nx = 128\nnz = 3");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn negative_and_unknown_tolerances_are_rejected() {
        let mut config = ExperimentConfig::from_toml(BUNDLED[0].1).unwrap();
        config.tolerances.insert("energy_imag".into(), -1.0);
        assert!(config.validate().is_err());
        config.tolerances.clear();
        config.tolerances.insert("energy_imaginary".into(), 1.0);
        assert!(config.validate().is_err());
    }

    #[test]
    fn solver_and_domain_must_fit() {
        let mut config = ExperimentConfig::from_toml(BUNDLED[0].1).unwrap();
        config.solution.solver = Solver::Strip;
        assert!(config.validate().is_err());
        config.solution.solver = Solver::Constant;
        config.solution.target = Target::H3;
        assert!(config.validate().is_err());
    }
}
