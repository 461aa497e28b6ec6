use std::path::PathBuf;
use std::process::{Command, Output};

use mipnet_core::network::parity_net;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mipnet-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn mipnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mipnet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn parity_net_scores_perfectly() {
    let dir = scratch("parity");
    let data = dir.join("clean.csv");
    let net = dir.join("parity.net");
    parity_net().save(&net).unwrap();
    let o = mipnet(&["gen-data", "--n", "64", "--noise", "0", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let o = mipnet(&["evaluate", "--net", net.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("accuracy 1 (64 rows)"), "{}", stdout(&o));
}

#[test]
fn build_solve_round_trip() {
    let dir = scratch("solve");
    let data = dir.join("train.csv");
    let model = dir.join("out.mps");
    let sol = dir.join("out.sol");
    let log = dir.join("nodes.csv");
    assert!(mipnet(&["gen-data", "--n", "12", "--seed", "3", "--out", data.to_str().unwrap()]).status.success());
    let o = mipnet(&["build", "--data", data.to_str().unwrap(), "--layers", "0", "--out", model.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let o = mipnet(&[
        "solve",
        "--model",
        model.to_str().unwrap(),
        "--solution",
        sol.to_str().unwrap(),
        "--node-log",
        log.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("status optimal"), "{}", stdout(&o));
    assert!(sol.exists() && log.exists());

    let lp = dir.join("out.lp");
    let o = mipnet(&["build", "--data", data.to_str().unwrap(), "--layers", "1", "--units", "2", "--activation", "relu", "--format", "lp", "--out", lp.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
}

#[test]
fn greedy_then_sgd_then_evaluate() {
    let dir = scratch("train");
    let (train, test) = (dir.join("train.csv"), dir.join("test.csv"));
    let (net, warm, trace) = (dir.join("g.net"), dir.join("s.net"), dir.join("trace.csv"));
    let p = |p: &PathBuf| p.to_str().unwrap().to_string();
    assert!(mipnet(&["gen-data", "--n", "40", "--n-test", "20", "--out", &p(&train), "--test-out", &p(&test)]).status.success());
    let o = mipnet(&[
        "train-greedy", "--data", &p(&train), "--layers", "1", "--units", "2", "--net-out", &p(&net), "--trace-out", &p(&trace),
        "--set", "mip.time_limit=20", "--set", "greedy.warm_epochs=50",
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("layer,status,objective"));
    let o = mipnet(&[
        "train-sgd", "--data", &p(&train), "--layers", "1", "--units", "2", "--warm-start", &p(&net), "--net-out", &p(&warm),
        "--set", "sgd.epochs=30",
    ]);
    assert!(o.status.success(), "{o:?}");
    let o = mipnet(&["evaluate", "--net", &p(&warm), "--data", &p(&test)]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn experiment_appends_rows() {
    let dir = scratch("exp");
    let out = dir.join("results.csv");
    let _ = std::fs::remove_file(&out);
    let args = [
        "experiment", "--out", out.to_str().unwrap(),
        "--set", "experiment.arms=[\"relu_sgd\",\"binary_sgd\"]", "--set", "experiment.seeds=[0]",
        "--set", "experiment.n_train=30", "--set", "experiment.layers=1", "--set", "sgd.epochs=10",
    ];
    assert!(mipnet(&args).status.success());
    assert!(mipnet(&args).status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("arm,")).count(), 1);
    assert_eq!(text.lines().filter(|l| l.starts_with("# config_hash=")).count(), 2);
    assert_eq!(text.lines().filter(|l| l.starts_with("relu_sgd,")).count(), 2);
}

#[test]
fn exit_codes() {
    let o = mipnet(&["evaluate", "--net", "/nonexistent.net", "--data", "/nonexistent.csv", "--set", "mip.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = mipnet(&["evaluate", "--net", "/nonexistent.net", "--data", "/nonexistent.csv"]);
    assert_eq!(o.status.code(), Some(2));
}
