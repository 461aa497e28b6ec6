//! TOML configuration. Every solver, formulation and SGD knob is a key;
//! `--set section.key=value` overrides win over the file.

use std::path::Path;

use mipnet_core::formulations::HyperParams;
use mipnet_core::greedy::{GreedyOptions, WarmStart};
use mipnet_core::sgd::SgdConfig;
use mipnet_milp::{LpParams, MipParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MipConfig {
    pub rel_gap: f64,
    /// Seconds per solve; absent means unlimited.
    pub time_limit: Option<f64>,
    pub node_limit: usize,
    pub integrality_tol: f64,
    pub seed: u64,
    pub threads: usize,
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub dual_tol: f64,
    pub refactor_interval: usize,
    pub stall_threshold: usize,
    pub max_iterations: usize,
}

impl Default for MipConfig {
    fn default() -> Self {
        let (m, lp) = (MipParams::default(), LpParams::default());
        Self {
            rel_gap: m.rel_gap,
            time_limit: m.time_limit,
            node_limit: m.node_limit,
            integrality_tol: m.integrality_tol,
            seed: m.seed,
            threads: m.threads,
            pivot_tol: lp.pivot_tol,
            feas_tol: lp.feas_tol,
            dual_tol: lp.dual_tol,
            refactor_interval: lp.refactor_interval,
            stall_threshold: lp.stall_threshold,
            max_iterations: lp.max_iterations,
        }
    }
}

impl MipConfig {
    pub fn params(&self) -> MipParams {
        MipParams {
            rel_gap: self.rel_gap,
            time_limit: self.time_limit,
            node_limit: self.node_limit,
            integrality_tol: self.integrality_tol,
            seed: self.seed,
            threads: self.threads,
            prune: true,
            known_bound: None,
            lp: LpParams {
                pivot_tol: self.pivot_tol,
                feas_tol: self.feas_tol,
                dual_tol: self.dual_tol,
                refactor_interval: self.refactor_interval,
                stall_threshold: self.stall_threshold,
                max_iterations: self.max_iterations,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedyConfig {
    /// Seconds per layer solve; defaults to `mip.time_limit` split evenly.
    pub per_solve_time: Option<f64>,
    pub warm_start: bool,
    pub warm_restarts: usize,
    pub warm_epochs: usize,
    pub warm_learning_rate: f64,
    pub warm_seed: u64,
    pub known_bound: bool,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        let ws = WarmStart::default();
        Self {
            per_solve_time: None,
            warm_start: true,
            warm_restarts: ws.restarts,
            warm_epochs: ws.epochs,
            warm_learning_rate: ws.learning_rate,
            warm_seed: ws.seed,
            known_bound: true,
        }
    }
}

impl GreedyConfig {
    pub fn options(&self) -> GreedyOptions {
        GreedyOptions {
            per_solve_time: self.per_solve_time,
            warm_start: self.warm_start.then(|| WarmStart {
                restarts: self.warm_restarts,
                epochs: self.warm_epochs,
                learning_rate: self.warm_learning_rate,
                seed: self.warm_seed,
            }),
            known_bound: self.known_bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    DepthSweep,
    WidthSweep,
    Single,
}

pub const ARMS: [&str; 9] = [
    "binary_mip",
    "greedy_binary_mip",
    "greedy_binary_mip_sgd",
    "binary_sgd",
    "greedy_binary_sgd",
    "greedy_binary_sgd_sgd",
    "relu_sgd",
    "relu_greedy_sgd",
    "relu_greedy_sgd_sgd",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub arms: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_p: f64,
    pub seeds: Vec<u64>,
    pub depth_min: usize,
    pub depth_max: usize,
    pub width_min: usize,
    pub width_max: usize,
    /// Units per layer in depth sweeps and single runs.
    pub units: usize,
    /// Hidden layers in width sweeps and single runs.
    pub layers: usize,
    pub threshold: f64,
    /// Seconds per MIP solve.
    pub time_per_solve: f64,
    /// Grid cells run concurrently.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Single,
            arms: vec!["greedy_binary_mip".into()],
            n_train: 200,
            n_test: 100,
            noise_p: 0.1,
            seeds: vec![0, 1, 2],
            depth_min: 1,
            depth_max: 5,
            width_min: 1,
            width_max: 5,
            units: 5,
            layers: 3,
            threshold: 0.85,
            time_per_solve: 300.0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub hyper: HyperParams,
    pub mip: MipConfig,
    pub sgd: SgdConfig,
    pub greedy: GreedyConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let e = &self.experiment;
        if e.arms.is_empty() {
            return Err(CliError::config("experiment.arms is empty"));
        }
        if let Some(bad) = e.arms.iter().find(|a| !ARMS.contains(&a.as_str())) {
            return Err(CliError::config(format!("unknown arm `{bad}`; expected one of {}", ARMS.join(", "))));
        }
        if e.seeds.is_empty() || e.depth_min == 0 || e.depth_min > e.depth_max || e.width_min == 0 || e.width_min > e.width_max {
            return Err(CliError::config("seeds, depth and width ranges must be non-empty (minimums ≥ 1)"));
        }
        if !(e.time_per_solve > 0.0) {
            return Err(CliError::config("experiment.time_per_solve must be positive"));
        }
        if !(0.0..0.5).contains(&e.noise_p) {
            return Err(CliError::config("experiment.noise_p must lie in [0, 0.5)"));
        }
        if self.mip.time_limit.is_some_and(|t| !(t > 0.0)) {
            return Err(CliError::config("mip.time_limit must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| CliError::config(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("bad key `{key}`")));
    }
    // bare words that are not TOML literals are taken as strings
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::config(format!("`{part}` is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::load(None, &[]).unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.mip.params(), MipParams::default());
        assert_eq!(cfg.greedy.options(), GreedyOptions::default());
        let again: Config = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn overrides_win() {
        let cfg = Config::load(
            None,
            &["mip.time_limit=12.5".into(), "hyper.p=8".into(), "sgd.activation=binary_ste".into(), "experiment.arms=[\"relu_sgd\"]".into()],
        )
        .unwrap();
        assert_eq!(cfg.mip.time_limit, Some(12.5));
        assert_eq!(cfg.hyper.p, 8);
        assert_eq!(cfg.sgd.activation, mipnet_core::sgd::SgdActivation::BinarySte);
        assert_eq!(cfg.experiment.arms, vec!["relu_sgd"]);
        assert_ne!(cfg.hash(), Config::default().hash());
    }

    #[test]
    fn config_errors() {
        for bad in ["mip.bogus=1", "experiment.arms=[\"nope\"]", "novalue", "experiment.depth_min=0", "hyper.eps=\"x\""] {
            let e = Config::load(None, &[bad.to_string()]).unwrap_err();
            assert_eq!(e.code, 2, "{bad}");
        }
    }
}
