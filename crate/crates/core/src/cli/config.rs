//! Run configuration files.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::certify::{beta_grid, SearchConfig};
use crate::model::json::SystemJson;
use crate::model::{PersidskiiSystem, StabilityQuery};
use crate::rnn::{augment_bias, ctrnn_to_persidskii, random_example, read_checkpoint, ExampleId};
use crate::simulate::{FalsifyConfig, InputFamily, InputSignal, IntegratorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleSource {
    pub id: u32,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_per_sign: usize,
    pub rho_grid: Vec<f64>,
    pub remark1: bool,
    pub psd_margin: f64,
    pub tol: f64,
    pub time_budget: Option<f64>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            beta_min: 1e-2,
            beta_max: 1e2,
            beta_per_sign: 25,
            rho_grid: d.rho_grid,
            remark1: d.remark1,
            psd_margin: d.psd_margin,
            tol: d.tol,
            time_budget: d.time_budget,
        }
    }
}

impl SearchSettings {
    pub fn to_search_config(&self) -> Result<SearchConfig, String> {
        if !(self.beta_min > 0.0 && self.beta_max >= self.beta_min) || self.beta_per_sign == 0 {
            return Err("search needs 0 < beta_min <= beta_max and beta_per_sign >= 1".into());
        }
        if self.rho_grid.is_empty() || self.rho_grid.iter().any(|r| !r.is_finite()) {
            return Err("search.rho_grid must be a non-empty list of finite values".into());
        }
        Ok(SearchConfig {
            beta_grid: beta_grid(self.beta_min, self.beta_max, self.beta_per_sign),
            rho_grid: self.rho_grid.clone(),
            remark1: self.remark1,
            psd_margin: self.psd_margin,
            tol: self.tol,
            time_budget: self.time_budget,
            parallel: true,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub samples: usize,
    pub seed: u64,
    pub rtol: f64,
    pub atol: f64,
    /// Fixed input for every sample; the default family is used when absent.
    pub input: Option<InputSignal>,
    /// Initial state of `simulate`; sample 0 of the annulus when absent.
    pub x0: Option<Vec<f64>>,
    pub csv_points: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        let i = IntegratorConfig::default();
        Self { samples: 1000, seed: 0, rtol: i.rtol, atol: i.atol, input: None, x0: None, csv_points: 1000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<ExampleSource>,
    pub query: StabilityQuery,
    #[serde(default)]
    pub search: SearchSettings,
    #[serde(default)]
    pub simulation: SimulationSettings,
}

/// A system ready for analysis, with what the report should say about it.
#[derive(Clone, Debug)]
pub struct LoadedSystem {
    pub system: PersidskiiSystem,
    pub source: String,
    /// Number of leading state coordinates that receive input.
    pub input_channels: Option<usize>,
    pub notes: Vec<String>,
}

pub const WEIGHT_NOTE: &str = "weights W0, W1 drawn i.i.d. uniform on [-1/sqrt(N), 1/sqrt(N)] with N = 50 (ChaCha8 stream seeded by the seed)";

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed config: {e}"))
    }

    pub fn read(path: &Path) -> Result<(Self, PathBuf), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let cfg = Self::from_json(&text)?;
        Ok((cfg, path.parent().map(Path::to_path_buf).unwrap_or_default()))
    }

    /// Resolves the single system source; checkpoint paths are relative to `base`.
    pub fn load_system(&self, base: &Path) -> Result<LoadedSystem, String> {
        let count = [self.system.is_some(), self.checkpoint.is_some(), self.example.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if count != 1 {
            return Err(format!("exactly one of system, checkpoint, example is required (found {count})"));
        }
        if let Some(s) = &self.system {
            let system = s.to_system()?;
            return Ok(LoadedSystem { system, source: "inline".into(), input_channels: None, notes: vec![] });
        }
        if let Some(p) = &self.checkpoint {
            let net = read_checkpoint(&base.join(p)).map_err(|e| e.to_string())?;
            let mut notes = net.validate().map_err(|e| e.to_string())?;
            let source = format!("checkpoint {}", p.display());
            let biased = net.b0.as_ref().map(|b| b.iter().any(|v| *v != 0.0)).unwrap_or(false);
            if biased {
                let system = augment_bias(&net).map_err(|e| e.to_string())?;
                notes.push(format!(
                    "bias augmented: state is xi = [chi; eta] in R^{} with eta(0) = 1; the annulus radii apply to the full xi, not to chi alone",
                    system.n()
                ));
                return Ok(LoadedSystem { system, source, input_channels: Some(net.n()), notes });
            }
            let system = ctrnn_to_persidskii(&net).map_err(|e| e.to_string())?;
            return Ok(LoadedSystem { system, source, input_channels: None, notes });
        }
        let ex = self.example.as_ref().expect("counted above");
        let id = ExampleId::parse(ex.id)?;
        let system = ctrnn_to_persidskii(&random_example(id, ex.seed)).map_err(|e| e.to_string())?;
        Ok(LoadedSystem {
            system,
            source: format!("example {} seed {}", ex.id, ex.seed),
            input_channels: None,
            notes: vec![WEIGHT_NOTE.into()],
        })
    }

    /// Checks the query and the fixed input against it.
    pub fn check(&self, sys: &PersidskiiSystem) -> Result<(), String> {
        self.query.validate().map_err(|e| e.to_string())?;
        if let Some(u) = &self.simulation.input {
            if u.dim() != sys.n() {
                return Err(format!("input dimension {} does not match n = {}", u.dim(), sys.n()));
            }
            u.check_bound(self.query.gamma0, self.query.horizon)?;
        }
        if let Some(x0) = &self.simulation.x0 {
            if x0.len() != sys.n() {
                return Err(format!("x0 has {} entries, expected {}", x0.len(), sys.n()));
            }
        }
        if !(self.simulation.rtol > 0.0 && self.simulation.atol > 0.0) {
            return Err("integrator tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn falsify_config(&self, input_channels: Option<usize>) -> FalsifyConfig {
        let integrator = IntegratorConfig { rtol: self.simulation.rtol, atol: self.simulation.atol, ..Default::default() };
        FalsifyConfig {
            samples: self.simulation.samples,
            seed: self.simulation.seed,
            inputs: match &self.simulation.input {
                Some(signal) => InputFamily::Fixed { signal: signal.clone() },
                None => InputFamily::Default,
            },
            input_channels,
            band: 10.0 * self.simulation.rtol.max(self.simulation.atol),
            integrator,
        }
    }

    pub fn x0(&self) -> Option<DVector<f64>> {
        self.simulation.x0.as_ref().map(|v| DVector::from_column_slice(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: &str = r#""query": {"kind": "STBNZ", "T": 1, "eps2": 1, "delta2": 2, "gamma0": 1}"#;

    #[test]
    fn exactly_one_source() {
        let none = RunConfig::from_json(&format!("{{{Q}}}")).unwrap();
        assert!(none.load_system(Path::new(".")).is_err());
        let two = RunConfig::from_json(&format!(
            r#"{{"example": {{"id": 1}}, "system": {{"A0": [[-1]], "C": [[1]]}}, {Q}}}"#
        ))
        .unwrap();
        assert!(two.load_system(Path::new(".")).is_err());
        let one = RunConfig::from_json(&format!(r#"{{"system": {{"A0": [[-1]], "C": [[1]]}}, {Q}}}"#)).unwrap();
        let l = one.load_system(Path::new(".")).unwrap();
        assert_eq!(l.system.n(), 1);
        assert_eq!(one.query.eps1, 0.0);
    }

    #[test]
    fn unknown_fields_and_bad_inputs_rejected() {
        assert!(RunConfig::from_json(&format!(r#"{{"sytem": {{}}, {Q}}}"#)).is_err());
        let cfg = RunConfig::from_json(&format!(
            r#"{{"example": {{"id": 1}}, {Q}, "simulation": {{"input": {{"kind": "constant", "value": [3, 0]}}}}}}"#
        ))
        .unwrap();
        let l = cfg.load_system(Path::new(".")).unwrap();
        assert!(cfg.check(&l.system).unwrap_err().contains("above the bound"));
    }
}
