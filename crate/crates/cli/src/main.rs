mod config;
mod experiment;

use std::fmt;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mipnet_core::data::{gen_xor, gen_xor_split, load_csv, save_csv, Dataset};
use mipnet_core::formulations::{build_binary_full, build_output_layer, build_relu_full, Activation, ArchSpec};
use mipnet_core::greedy::{greedy_binary_with, greedy_relu_with, GreedyError};
use mipnet_core::network::{evaluate, TrainedNet};
use mipnet_core::sgd::{train_sgd, FloatNet, SgdActivation, SgdConfig, SgdError, SgdInit};
use mipnet_milp::lp_format::export_lp;
use mipnet_milp::mps::{export_mps, import_mps};
use mipnet_milp::solution::write_solution;
use mipnet_milp::{export_node_log, solve_mip};

use crate::config::Config;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        Self { code: 3, msg: msg.into() }
    }

    fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self { code: 1, msg: format!("{}: {e}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

#[derive(Parser)]
#[command(name = "mipnet", version, about = "Train small neural networks by mixed-integer programming")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set mip.time_limit=60`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Act {
    Binary,
    Relu,
}

impl From<Act> for Activation {
    fn from(a: Act) -> Self {
        match a {
            Act::Binary => Activation::Binary,
            Act::Relu => Activation::Relu,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Mps,
    Lp,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the noisy 5-bit parity benchmark.
    GenData {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a test split of this many rows.
        #[arg(long, requires = "test_out")]
        n_test: Option<usize>,
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Write the training MIP as MPS or LP. `--layers 0` builds the
    /// output-layer model.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layers: usize,
        #[arg(long, default_value_t = 1)]
        units: usize,
        #[arg(long, value_enum, default_value = "binary")]
        activation: Act,
        #[arg(long, value_enum, default_value = "mps")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an MPS model with the built-in branch and bound.
    Solve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        node_log: Option<PathBuf>,
    },
    /// Layer-wise MIP training.
    TrainGreedy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        units: usize,
        #[arg(long, value_enum, default_value = "binary")]
        activation: Act,
        #[arg(long)]
        net_out: PathBuf,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// SGD baseline, optionally warm-started from a saved net.
    TrainSgd {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        units: usize,
        #[arg(long)]
        warm_start: Option<PathBuf>,
        #[arg(long)]
        net_out: PathBuf,
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Accuracy and confusion matrix of a saved net.
    Evaluate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the arms × architectures × seeds grid.
    Experiment {
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_data(path: &Path) -> Result<Dataset, CliError> {
    load_csv(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.cmd {
        Cmd::GenData { n, seed, noise, out, n_test, test_out } => {
            let n = n.unwrap_or(cfg.experiment.n_train);
            let p = noise.unwrap_or(cfg.experiment.noise_p);
            let bad = |e: mipnet_core::data::DataError| CliError::config(e.to_string());
            match (n_test, test_out) {
                (Some(nt), Some(tp)) => {
                    let (train, test) = gen_xor_split(n, nt, seed, p).map_err(bad)?;
                    save_csv(&train, &out).map_err(|e| CliError::io(&out, e))?;
                    save_csv(&test, &tp).map_err(|e| CliError::io(&tp, e))?;
                }
                _ => {
                    let train = gen_xor(n, seed, p).map_err(bad)?;
                    save_csv(&train, &out).map_err(|e| CliError::io(&out, e))?;
                }
            }
            println!("wrote {}", out.display());
        }
        Cmd::Build { data, layers, units, activation, format, out } => {
            let ds = read_data(&data)?;
            let arch = ArchSpec::new(ds.d(), units, layers, ds.j(), activation.into());
            let art = match (layers, arch.activation) {
                (0, _) => build_output_layer(&ds, ds.j(), &cfg.hyper),
                (_, Activation::Binary) => build_binary_full(&ds, &arch, &cfg.hyper),
                (_, Activation::Relu) => build_relu_full(&ds, &arch, &cfg.hyper),
            }
            .map_err(|e| CliError::config(e.to_string()))?;
            let text = match format {
                Format::Mps => export_mps(&art.model),
                Format::Lp => export_lp(&art.model),
            };
            write(&out, &text)?;
            println!(
                "{}: {} variables ({} binary), {} constraints",
                out.display(),
                art.model.num_vars(),
                art.model.num_binaries(),
                art.model.num_constraints()
            );
        }
        Cmd::Solve { model, solution, node_log } => {
            let text = std::fs::read_to_string(&model).map_err(|e| CliError::config(format!("{}: {e}", model.display())))?;
            let m = import_mps(&text).map_err(|e| CliError::config(format!("{}: {e}", model.display())))?;
            let sol = solve_mip(&m, &cfg.mip.params());
            if let Some(p) = node_log {
                write(&p, &export_node_log(&sol))?;
            }
            println!(
                "status {} objective {:?} bound {:?} gap {:.3e} nodes {} time {:.2}s",
                sol.status.as_str(),
                sol.objective,
                sol.best_bound,
                sol.gap,
                sol.nodes,
                sol.wall_time
            );
            if !sol.has_incumbent() {
                return Err(CliError::solver(format!("no feasible solution ({})", sol.status.as_str())));
            }
            write(&solution, &write_solution(&m, &sol.incumbent))?;
        }
        Cmd::TrainGreedy { data, layers, units, activation, net_out, trace_out } => {
            let ds = read_data(&data)?;
            let opts = cfg.greedy.options();
            let mip = cfg.mip.params();
            let result = match activation {
                Act::Binary => greedy_binary_with(&ds, layers, units, &cfg.hyper, &mip, &opts),
                Act::Relu => greedy_relu_with(&ds, layers, units, &cfg.hyper, &mip, &opts),
            };
            let (net, trace) = match result {
                Ok(r) => r,
                Err(GreedyError::NoIncumbent { layer, trace }) => {
                    if let Some(p) = &trace_out {
                        write(p, &trace.to_csv())?;
                    }
                    return Err(CliError::solver(format!("layer {layer}: no feasible network within the budget")));
                }
                Err(GreedyError::Arch) => return Err(CliError::config("need --layers ≥ 1 and --units ≥ 1")),
                Err(e) => return Err(CliError::config(e.to_string())),
            };
            net.save(&net_out).map_err(|e| CliError::io(&net_out, e))?;
            if let Some(p) = &trace_out {
                write(p, &trace.to_csv())?;
            }
            print!("{}", trace.to_csv());
        }
        Cmd::TrainSgd { data, layers, units, warm_start, net_out, curve_out } => {
            let ds = read_data(&data)?;
            let mut sgd: SgdConfig = cfg.sgd.clone();
            if let Some(p) = warm_start {
                let net = TrainedNet::load(&p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                sgd.activation = net.activation.into();
                sgd.init = SgdInit::WarmStart(FloatNet::from_trained(&net));
            }
            let act = match sgd.activation {
                SgdActivation::Relu => Activation::Relu,
                SgdActivation::BinarySte => Activation::Binary,
            };
            let arch = ArchSpec::new(ds.d(), units, layers, ds.j(), act);
            let (net, curve) = match train_sgd(&ds, &arch, &sgd) {
                Ok(r) => r,
                Err(SgdError::Diverged { epoch, curve, .. }) => {
                    if let Some(p) = &curve_out {
                        write(p, &curve_csv(&curve))?;
                    }
                    return Err(CliError::solver(format!("loss diverged at epoch {epoch}")));
                }
                Err(e) => return Err(CliError::config(e.to_string())),
            };
            net.to_trained().save(&net_out).map_err(|e| CliError::io(&net_out, e))?;
            if let Some(p) = &curve_out {
                write(p, &curve_csv(&curve))?;
            }
            println!("final loss {:?}, training accuracy {}", curve.last().unwrap_or(&f64::NAN), net.accuracy(&ds));
        }
        Cmd::Evaluate { net, data } => {
            let ds = read_data(&data)?;
            let n = TrainedNet::load(&net).map_err(|e| CliError::config(format!("{}: {e}", net.display())))?;
            let r = evaluate(&n, &ds).map_err(|e| CliError::config(e.to_string()))?;
            println!("accuracy {} ({} rows)", r.accuracy, r.n);
            for (c, row) in r.confusion.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                println!("true {c}: {}", cells.join(" "));
            }
        }
        Cmd::Experiment { out } => {
            let rows = experiment::run_grid(&cfg)?;
            let fresh = !out.exists();
            let mut f = OpenOptions::new().create(true).append(true).open(&out).map_err(|e| CliError::io(&out, e))?;
            let mut block = String::new();
            if fresh {
                block.push_str(experiment::HEADER);
                block.push('\n');
            }
            block.push_str(&format!("# config_hash={}\n", cfg.hash()));
            for r in &rows {
                block.push_str(&r.csv());
                block.push('\n');
            }
            f.write_all(block.as_bytes()).map_err(|e| CliError::io(&out, e))?;
            print!("{}", experiment::summary(&cfg, &rows));
        }
    }
    Ok(())
}

fn curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, v) in curve.iter().enumerate() {
        s.push_str(&format!("{i},{v:?}\n"));
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
