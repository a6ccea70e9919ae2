//! TOML run configuration for the CLI. Unknown keys are rejected so typos
//! fail loudly instead of silently falling back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SchemaConfig;
use crate::dgp::DGPConfig;
use crate::error::{Error, Result};
use crate::eval::GridConfig;
use crate::transport::EstimatorSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub parallelism: usize,
    /// simulate: DGP of the synthetic source population.
    pub dgp: DGPConfig,
    /// simulate: target trial size and observed-X1 subset size.
    pub trial_size: usize,
    pub dim_x1: usize,
    /// replicate: the benchmark grid.
    pub grid: Option<GridConfig>,
    /// apply: estimators to run (defaults chosen in cmd_apply).
    pub specs: Vec<EstimatorSpec>,
    /// apply: column-role mapping for the input CSVs.
    pub schema: Option<SchemaConfig>,
    /// apply: whether source.csv already contains the trial rows (nested
    /// design, selection column set). When false, trial rows are stacked
    /// onto the source with selection label 1.
    pub trial_in_source: bool,
    /// apply: folds for the cross-fit GATE predictions.
    pub gate_folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            parallelism: 1,
            dgp: DGPConfig::default(),
            trial_size: 2000,
            dim_x1: 2,
            grid: None,
            specs: Vec::new(),
            schema: None,
            trial_in_source: true,
            gate_folds: 5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.trial_size < 1 {
            return Err(Error::InvalidConfig("trial_size must be >= 1".into()));
        }
        if self.dim_x1 < 1 || self.dim_x1 > self.dgp.dim_x1all {
            return Err(Error::InvalidConfig(format!(
                "dim_x1 must lie in 1..={}",
                self.dgp.dim_x1all
            )));
        }
        if self.parallelism < 1 {
            return Err(Error::InvalidConfig("parallelism must be >= 1".into()));
        }
        if self.gate_folds < 2 {
            return Err(Error::InvalidConfig("gate_folds must be >= 2".into()));
        }
        if let Some(grid) = &self.grid {
            grid.validate()?;
        }
        for spec in &self.specs {
            spec.validate()?;
        }
        Ok(())
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| Error::ConfigParse {
        path: path.to_path_buf(),
        message: e.to_string(), // includes line/column spans
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_config() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.parallelism, 1);
        assert_eq!(cfg.dgp.n_source, 100_000);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "not_a_key = 1\n").unwrap();
        let err = load_run_config(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not_a_key"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn nested_sections_round_trip() {
        let text = r#"
            out_dir = "results"
            parallelism = 2

            [dgp]
            n_source = 5000
            dim_x1all = 4
            dim_x2 = 2
            dim_o = 2

            [grid]
            trial_sizes = [200]
            dim_x1_values = [2]
            coef_x2_values = [0.5]
            replicates = 1
            master_seed = 3
            specs = []

            [grid.dgp]
            n_source = 5000
            dim_x1all = 4
            dim_x2 = 2
            dim_o = 2
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.grid.as_ref().unwrap().trial_sizes, vec![200]);
        // empty grid specs fail validation
        assert!(cfg.validate().is_err());
    }
}
