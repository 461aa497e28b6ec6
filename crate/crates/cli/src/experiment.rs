//! Arms × architectures × seeds grid on the XOR benchmark.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use mipnet_core::data::{gen_xor_split, Dataset};
use mipnet_core::formulations::{build_binary_full, Activation, ArchSpec};
use mipnet_core::greedy::{greedy_binary_with, GreedyError};
use mipnet_core::network::{evaluate, evaluate_with, extract_net};
use mipnet_core::sgd::{greedy_sgd, train_sgd, FloatNet, SgdActivation, SgdConfig, SgdError, SgdInit};
use mipnet_milp::solve_mip;
use rayon::prelude::*;

use crate::config::{Config, Mode};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub arm: String,
    pub layers: usize,
    pub units: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub objective: f64,
    pub gap: f64,
    pub wall_time: f64,
    pub status: String,
}

pub const HEADER: &str = "arm,layers,units,seed,test_accuracy,objective,gap,wall_time,status";

impl ResultRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:?},{:?},{:?},{:.3},{}",
            self.arm, self.layers, self.units, self.seed, self.test_accuracy, self.objective, self.gap, self.wall_time, self.status
        )
    }
}

pub fn cells(cfg: &Config) -> Vec<(String, usize, usize, u64)> {
    let e = &cfg.experiment;
    let shapes: Vec<(usize, usize)> = match e.mode {
        Mode::DepthSweep => (e.depth_min..=e.depth_max).map(|l| (l, e.units)).collect(),
        Mode::WidthSweep => (e.width_min..=e.width_max).map(|k| (e.layers, k)).collect(),
        Mode::Single => vec![(e.layers, e.units)],
    };
    let mut out = Vec::new();
    for arm in &e.arms {
        for &(l, k) in &shapes {
            for &seed in &e.seeds {
                out.push((arm.clone(), l, k, seed));
            }
        }
    }
    out
}

struct Outcome {
    accuracy: f64,
    objective: f64,
    gap: f64,
    status: String,
}

fn failed(status: &str) -> Outcome {
    Outcome { accuracy: f64::NAN, objective: f64::NAN, gap: f64::NAN, status: status.into() }
}

fn sgd_outcome(result: Result<(FloatNet, Vec<f64>), SgdError>, test: &Dataset) -> Outcome {
    match result {
        Ok((net, curve)) => Outcome {
            accuracy: evaluate_with(|x| net.predict(x), test).map_or(f64::NAN, |r| r.accuracy),
            objective: *curve.last().unwrap_or(&f64::NAN),
            gap: f64::NAN,
            status: "completed".into(),
        },
        Err(SgdError::Diverged { .. }) => failed("diverged"),
        Err(_) => failed("error"),
    }
}

fn run_arm(cfg: &Config, arm: &str, l: usize, k: usize, seed: u64, train: &Dataset, test: &Dataset) -> Outcome {
    let e = &cfg.experiment;
    let mut mip = cfg.mip.params();
    mip.seed = seed;
    mip.time_limit = Some(e.time_per_solve);
    let mut opts = cfg.greedy.options();
    opts.per_solve_time = Some(e.time_per_solve);
    let act = if arm.starts_with("relu") { SgdActivation::Relu } else { SgdActivation::BinarySte };
    let sgd = SgdConfig { seed, activation: act, init: SgdInit::RandomUniform, ..cfg.sgd.clone() };
    let arch = ArchSpec::new(train.d(), k, l, train.j(), Activation::Binary);
    let polish = |start: FloatNet| train_sgd(train, &arch, &SgdConfig { init: SgdInit::WarmStart(start), ..sgd.clone() });

    match arm {
        "binary_mip" => {
            let art = match build_binary_full(train, &arch, &cfg.hyper) {
                Ok(a) => a,
                Err(_) => return failed("error"),
            };
            let sol = solve_mip(&art.model, &mip);
            let status = sol.status.as_str().to_string();
            match extract_net(&sol, &art.index, &arch, &cfg.hyper) {
                Ok(net) => Outcome {
                    accuracy: evaluate(&net, test).map_or(f64::NAN, |r| r.accuracy),
                    objective: sol.objective,
                    gap: sol.gap,
                    status,
                },
                Err(_) => failed(&status),
            }
        }
        "greedy_binary_mip" | "greedy_binary_mip_sgd" => match greedy_binary_with(train, l, k, &cfg.hyper, &mip, &opts) {
            Ok((net, trace)) => {
                let last = trace.records.last().expect("one record per layer");
                let status = last.status.as_str().to_string();
                if arm == "greedy_binary_mip" {
                    Outcome {
                        accuracy: evaluate(&net, test).map_or(f64::NAN, |r| r.accuracy),
                        objective: last.objective,
                        gap: last.gap,
                        status,
                    }
                } else {
                    sgd_outcome(polish(FloatNet::from_trained(&net)), test)
                }
            }
            Err(GreedyError::NoIncumbent { .. }) => failed("no_solution_limit"),
            Err(_) => failed("error"),
        },
        "binary_sgd" | "relu_sgd" => sgd_outcome(train_sgd(train, &arch, &sgd), test),
        "greedy_binary_sgd" | "relu_greedy_sgd" => {
            let result = greedy_sgd(train, l, k, &sgd).map(|net| {
                let loss = net.loss(&train.x, &train.labels());
                (net, vec![loss])
            });
            sgd_outcome(result, test)
        }
        "greedy_binary_sgd_sgd" | "relu_greedy_sgd_sgd" => match greedy_sgd(train, l, k, &sgd) {
            Ok(net) => sgd_outcome(polish(net), test),
            Err(e) => sgd_outcome(Err(e), test),
        },
        _ => failed("unknown_arm"),
    }
}

pub fn run_cell(cfg: &Config, arm: &str, l: usize, k: usize, seed: u64) -> Result<ResultRow, CliError> {
    let e = &cfg.experiment;
    let (train, test) = gen_xor_split(e.n_train, e.n_test, seed, e.noise_p).map_err(|err| CliError::config(err.to_string()))?;
    let t = Instant::now();
    let o = run_arm(cfg, arm, l, k, seed, &train, &test);
    Ok(ResultRow {
        arm: arm.to_string(),
        layers: l,
        units: k,
        seed,
        test_accuracy: o.accuracy,
        objective: o.objective,
        gap: o.gap,
        wall_time: t.elapsed().as_secs_f64(),
        status: o.status,
    })
}

/// Runs every cell on a pool of `experiment.workers` threads; rows come
/// back in grid order.
pub fn run_grid(cfg: &Config) -> Result<Vec<ResultRow>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.experiment.workers.max(1))
        .build()
        .map_err(|e| CliError::config(e.to_string()))?;
    let cells = cells(cfg);
    pool.install(|| cells.par_iter().map(|(arm, l, k, seed)| run_cell(cfg, arm, *l, *k, *seed)).collect())
}

/// Per arm, the smallest swept size whose mean test
/// accuracy reaches the threshold.
pub fn summary(cfg: &Config, rows: &[ResultRow]) -> String {
    let e = &cfg.experiment;
    let (label, max) = match e.mode {
        Mode::DepthSweep => ("layers", e.depth_max),
        Mode::WidthSweep => ("units", e.width_max),
        Mode::Single => ("layers", e.layers),
    };
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:>10}  mean accuracy by {label}", "arm", "minimum");
    for arm in &e.arms {
        let mut by_size: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in rows.iter().filter(|r| &r.arm == arm) {
            let size = if e.mode == Mode::WidthSweep { r.units } else { r.layers };
            by_size.entry(size).or_default().push(r.test_accuracy);
        }
        let means: Vec<(usize, f64)> = by_size.iter().map(|(&k, v)| (k, v.iter().sum::<f64>() / v.len() as f64)).collect();
        let min = means.iter().find(|(_, m)| *m >= e.threshold).map_or(format!(">{max}"), |(k, _)| k.to_string());
        let detail: Vec<String> = means.iter().map(|(k, m)| format!("{k}:{m:.3}")).collect();
        let _ = writeln!(s, "{arm:<24} {min:>10}  {}", detail.join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> Config {
        let mut cfg = Config::default();
        cfg.experiment.n_train = 40;
        cfg.experiment.n_test = 20;
        cfg.experiment.seeds = vec![0];
        cfg.experiment.time_per_solve = 5.0;
        cfg.sgd.epochs = 20;
        cfg.greedy.warm_epochs = 50;
        cfg.greedy.warm_restarts = 2;
        cfg
    }

    #[test]
    fn grid_shapes() {
        let mut cfg = quick();
        cfg.experiment.mode = Mode::DepthSweep;
        cfg.experiment.depth_max = 3;
        cfg.experiment.arms = vec!["relu_sgd".into(), "binary_sgd".into()];
        cfg.experiment.seeds = vec![1, 2];
        let c = cells(&cfg);
        assert_eq!(c.len(), 2 * 3 * 2);
        assert!(c.iter().all(|(_, _, k, _)| *k == 5));
    }

    #[test]
    fn every_arm_produces_a_row() {
        let mut cfg = quick();
        cfg.experiment.layers = 1;
        cfg.experiment.units = 2;
        cfg.experiment.arms = crate::config::ARMS.iter().map(|s| s.to_string()).collect();
        let rows = run_grid(&cfg).unwrap();
        assert_eq!(rows.len(), 9);
        for r in &rows {
            assert!(r.test_accuracy.is_nan() || (0.0..=1.0).contains(&r.test_accuracy), "{r:?}");
            assert_eq!(r.csv().split(',').count(), HEADER.split(',').count());
        }
        let text = summary(&cfg, &rows);
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn rows_are_reproducible() {
        let mut cfg = quick();
        cfg.experiment.arms = vec!["relu_greedy_sgd_sgd".into()];
        cfg.experiment.layers = 2;
        let strip = |rows: Vec<ResultRow>| rows.into_iter().map(|r| ResultRow { wall_time: 0.0, ..r }.csv()).collect::<Vec<_>>();
        assert_eq!(strip(run_grid(&cfg).unwrap()), strip(run_grid(&cfg).unwrap()));
    }
}
