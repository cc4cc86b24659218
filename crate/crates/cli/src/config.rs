//! Experiment configuration: a TOML file whose every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use zrp_core::dynamics::SimulationSpec;
use zrp_core::kernel::JumpKernel;
use zrp_core::observables::TestFunction;
use zrp_core::thermo::RateFunction;
use zrp_core::trig::TrigPolynomial;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub plot: bool,
    pub simulation: SimulationSection,
    pub sweep: SweepSection,
    pub thermo_table: ThermoTableSection,
    pub pde: PdeSection,
    pub ensembles: EnsemblesSection,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: zrp_core::acceptance::DEFAULT_SEED,
            workers: None,
            out: PathBuf::from("results"),
            plot: true,
            simulation: SimulationSection::default(),
            sweep: SweepSection::default(),
            thermo_table: ThermoTableSection::default(),
            pde: PdeSection::default(),
            ensembles: EnsemblesSection::default(),
            verify: VerifySection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub dim: usize,
    pub side: usize,
    pub rate: RateFunction,
    pub kernel: JumpKernel,
    pub rho_star: f64,
    pub alpha: f64,
    pub profile: TrigPolynomial,
    pub snapshot_times: Vec<f64>,
    /// Defaults to the last snapshot time.
    pub horizon: Option<f64>,
    pub replicas: usize,
    pub test_functions: Vec<TestFunction>,
    /// Raw snapshots are written for the first this-many replicas.
    pub dump_snapshots: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            dim: 2,
            side: 64,
            rate: RateFunction::Linear,
            kernel: JumpKernel::positive_axes(2),
            rho_star: 1.0,
            alpha: 0.5,
            profile: TrigPolynomial::cosine(vec![1, -1], 1.0),
            snapshot_times: vec![0.0, 0.02, 0.05],
            horizon: None,
            replicas: 200,
            test_functions: vec![TestFunction::new("F", TrigPolynomial::cosine(vec![1, -1], 2.0))],
            dump_snapshots: 0,
        }
    }
}

impl SimulationSection {
    pub fn spec(&self, seed: u64) -> SimulationSpec {
        SimulationSpec {
            dim: self.dim,
            side: self.side,
            rate: self.rate.clone(),
            kernel: self.kernel.clone(),
            rho_star: self.rho_star,
            alpha: self.alpha,
            profile: self.profile.clone(),
            snapshot_times: self.snapshot_times.clone(),
            horizon: self
                .horizon
                .unwrap_or_else(|| self.snapshot_times.iter().copied().fold(0.0, f64::max)),
            replicas: self.replicas,
            base_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.snapshot_times.is_empty() {
            return Err(CliError::Config("simulation.snapshot_times is empty".into()));
        }
        if self.test_functions.is_empty() {
            return Err(CliError::Config("simulation.test_functions is empty".into()));
        }
        for f in &self.test_functions {
            f.poly
                .validate()
                .map_err(|e| CliError::Config(format!("test function {}: {e}", f.name)))?;
            if f.poly.dim != self.dim {
                return Err(CliError::Config(format!(
                    "test function {} has dimension {}, torus has {}",
                    f.name, f.poly.dim, self.dim
                )));
            }
        }
        self.spec(0).validate().map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sides: Vec<usize>,
    pub alphas: Vec<f64>,
    pub rates: Vec<RateFunction>,
    /// Bootstrap resamples for the convergence slope interval.
    pub resamples: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sides: vec![16, 32, 64],
            alphas: vec![0.5],
            rates: vec![RateFunction::Linear],
            resamples: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermoTableSection {
    pub rate: RateFunction,
    pub rho_min: f64,
    pub rho_max: f64,
    pub points: usize,
}

impl Default for ThermoTableSection {
    fn default() -> Self {
        ThermoTableSection {
            rate: RateFunction::Linear,
            rho_min: 0.1,
            rho_max: 5.0,
            points: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    /// Grid nodes per axis.
    pub points: usize,
    pub times: Vec<f64>,
    /// When set, the nonlinear equation is also solved from
    /// `ρ* + side^{−α} ρ₀` and reported as `side^α (ϱ − ρ*)`.
    pub side: Option<usize>,
    pub dt: Option<f64>,
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            points: 32,
            times: vec![0.0, 0.02, 0.05],
            side: Some(64),
            dt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsemblesSection {
    pub rate: RateFunction,
    pub n_grid: Vec<usize>,
    /// `j = round(density · n)`.
    pub density: f64,
    pub cutoff: f64,
    pub lsi_trials: usize,
    pub tail_fugacity: f64,
    pub tail_threshold: f64,
}

impl Default for EnsemblesSection {
    fn default() -> Self {
        EnsemblesSection {
            rate: RateFunction::Indicator,
            n_grid: vec![3, 5, 7, 9],
            density: 1.0,
            cutoff: 1.0,
            lsi_trials: 1000,
            tail_fugacity: 0.5,
            tail_threshold: 2.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Criterion ids to run; empty means all.
    pub only: Vec<u8>,
}

impl ExperimentConfig {
    /// Parses the file, also reporting whether it sets `seed` explicitly.
    pub fn load(path: Option<&Path>) -> Result<(Self, bool), CliError> {
        let Some(path) = path else {
            return Ok((Self::default(), false));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let seed_set = table.contains_key("seed");
        let config = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok((config, seed_set))
    }

    /// SHA-256 of the experiment sections (seed, output location and worker
    /// count excluded).
    pub fn hash(&self) -> String {
        let sections = serde_json::json!({
            "simulation": self.simulation,
            "sweep": self.sweep,
            "thermo_table": self.thermo_table,
            "pde": self.pde,
            "ensembles": self.ensembles,
            "verify": self.verify,
        });
        let bytes = serde_json::to_vec(&sections).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_file_parses_to_defaults() {
        let text = include_str!("../../../configs/default.toml");
        let parsed: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(parsed, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("sed = 3").is_err());
    }

    #[test]
    fn hash_ignores_seed() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_eq!(a.hash(), b.hash());
        b.simulation.side = 32;
        assert_ne!(a.hash(), b.hash());
    }
}
