//! Layer-wise training: each hidden layer comes from a one-hidden-layer MIP
//! whose inputs are the frozen stack's outputs on the training rows.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use mipnet_milp::{solve_mip, solve_mip_with_start, MipParams, MipStatus, VarId};
use thiserror::Error;

use crate::data::Dataset;
use crate::formulations::{
    binary_start, build_binary_full, build_output_layer, build_relu_full, identical_rows_bound, Activation, ArchSpec,
    BuildArtifact, FormulationError, HyperParams,
};
use crate::network::{argmax, evaluate, extract_net, NetError, TrainedNet};
use crate::sgd::{train_sgd, SgdActivation, SgdConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRecord {
    pub layer: usize,
    pub status: MipStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub wall_time: f64,
    pub nodes: usize,
    /// Training accuracy of the stack so far, by a full forward pass.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GreedyTrace {
    pub records: Vec<GreedyRecord>,
}

impl GreedyTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,status,objective,best_bound,gap,wall_time,nodes,train_accuracy\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{:?},{:.3},{},{:?}",
                r.layer,
                r.status.as_str(),
                r.objective,
                r.best_bound,
                r.gap,
                r.wall_time,
                r.nodes,
                r.train_accuracy
            );
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("greedy training needs L ≥ 1 and K ≥ 1")]
    Arch,
    #[error("layer {layer} solve found no feasible network")]
    NoIncumbent { layer: usize, trace: GreedyTrace },
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Heuristic MIP start for binary subproblems: short straight-through SGD
/// runs propose hidden patterns and output rankings, which the solver turns
/// into feasible networks by an LP over the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub restarts: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for WarmStart {
    fn default() -> Self {
        Self { restarts: 16, epochs: 1000, learning_rate: 0.3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOptions {
    /// Seconds per layer solve. Defaults to the MIP time limit split evenly
    /// across the solves.
    pub per_solve_time: Option<f64>,
    pub warm_start: Option<WarmStart>,
    /// Pass the identical-rows lower bound to the solver (binary only).
    pub known_bound: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self { per_solve_time: None, warm_start: Some(WarmStart::default()), known_bound: true }
    }
}

fn per_solve(mip: &MipParams, opts: &GreedyOptions, solves: usize) -> MipParams {
    let time_limit = opts.per_solve_time.or(mip.time_limit.map(|t| t / solves as f64));
    MipParams { time_limit, ..mip.clone() }
}

fn record(layer: usize, sol: &mipnet_milp::MipSolution, train_accuracy: f64) -> GreedyRecord {
    GreedyRecord {
        layer,
        status: sol.status,
        objective: sol.objective,
        best_bound: sol.best_bound,
        gap: sol.gap,
        wall_time: sol.wall_time,
        nodes: sol.nodes,
        train_accuracy,
    }
}

/// Binary hidden pattern and output scores of a one-hidden-layer candidate.
struct Candidate {
    hidden: Vec<Vec<bool>>,
    scores: Vec<Vec<f64>>,
}

fn majority_scores(hidden: &[Vec<bool>], labels: &[usize], j: usize) -> Vec<Vec<f64>> {
    let mut counts: HashMap<&[bool], Vec<usize>> = HashMap::new();
    for (h, &c) in hidden.iter().zip(labels) {
        counts.entry(h.as_slice()).or_insert_with(|| vec![0; j])[c] += 1;
    }
    hidden
        .iter()
        .map(|h| {
            let c = &counts[h.as_slice()];
            let best = argmax(&c.iter().map(|&v| v as f64).collect::<Vec<_>>());
            one_hot_scores(best, j)
        })
        .collect()
}

/// Ranking with `c` on top, the rest in index order.
fn one_hot_scores(c: usize, j: usize) -> Vec<f64> {
    (0..j).map(|i| if i == c { 1.0 } else { -(i as f64) - 1.0 }).collect()
}

/// Candidates from straight-through SGD restarts, most accurate first.
fn sgd_candidates(data: &Dataset, k: usize, ws: &WarmStart) -> Vec<Candidate> {
    let arch = ArchSpec::new(data.d(), k, 1, data.j(), Activation::Binary);
    let labels = data.labels();
    let mut runs = Vec::new();
    for r in 0..ws.restarts {
        let cfg = SgdConfig {
            epochs: ws.epochs,
            learning_rate: ws.learning_rate,
            seed: ws.seed.wrapping_add(r as u64),
            activation: SgdActivation::BinarySte,
            ..SgdConfig::default()
        };
        if let Ok((net, curve)) = train_sgd(data, &arch, &cfg) {
            let loss = *curve.last().unwrap_or(&f64::INFINITY);
            runs.push((net.accuracy(data), loss, net));
        }
    }
    runs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    for (_, _, net) in runs {
        let (mut hidden, mut scores) = (Vec::new(), Vec::new());
        for x in &data.x {
            let (h, o) = net.forward(x);
            hidden.push(h[0].iter().map(|&v| v > 0.5).collect::<Vec<bool>>());
            scores.push(o);
        }
        out.push(Candidate { hidden: hidden.clone(), scores });
        out.push(Candidate { hidden: hidden.clone(), scores: majority_scores(&hidden, &labels, data.j()) });
        out.extend(unit_subsets(&hidden, &labels, data.j()));
    }
    out
}

/// Rows classified correctly when each hidden code predicts its majority.
fn majority_hits(hidden: &[Vec<bool>], labels: &[usize], j: usize) -> usize {
    let mut counts: HashMap<&[bool], Vec<usize>> = HashMap::new();
    for (h, &c) in hidden.iter().zip(labels) {
        counts.entry(h.as_slice()).or_insert_with(|| vec![0; j])[c] += 1;
    }
    counts.values().map(|c| c.iter().copied().max().unwrap_or(0)).sum()
}

/// Proper subsets of the hidden units (others switched off) that separate
/// the classes as well as all of them, fewest units first. Coarser codes
/// give the output layer an easier time placing every margin at exactly ε.
fn unit_subsets(hidden: &[Vec<bool>], labels: &[usize], j: usize) -> Vec<Candidate> {
    const MAX_SUBSETS: usize = 4;
    let k = hidden.first().map_or(0, Vec::len);
    if k == 0 || k > 12 {
        return Vec::new();
    }
    let full = majority_hits(hidden, labels, j);
    let mut masks: Vec<u32> = (1..(1u32 << k) - 1).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut out = Vec::new();
    for m in masks {
        let coarse: Vec<Vec<bool>> = hidden.iter().map(|h| (0..k).map(|u| m >> u & 1 == 1 && h[u]).collect()).collect();
        if majority_hits(&coarse, labels, j) == full {
            let scores = majority_scores(&coarse, labels, j);
            out.push(Candidate { hidden: coarse, scores });
            if out.len() == MAX_SUBSETS {
                break;
            }
        }
    }
    out
}

/// Evaluates each candidate as a fixed-binary LP and returns the best
/// feasible start, stopping early at one that attains `target`.
fn best_start(art: &BuildArtifact, candidates: &[Candidate], mip: &MipParams, target: f64) -> Option<Vec<(VarId, f64)>> {
    const MAX_PROBES: usize = 40;
    let probe = MipParams { node_limit: 0, known_bound: None, ..mip.clone() };
    let mut best: Option<(f64, Vec<(VarId, f64)>)> = None;
    let mut seen = HashSet::new();
    for c in candidates {
        let start = binary_start(art, std::slice::from_ref(&c.hidden), &c.scores);
        let key: Vec<bool> = start.iter().map(|&(_, v)| v > 0.5).collect();
        if !seen.insert(key) {
            continue;
        }
        if seen.len() > MAX_PROBES {
            break;
        }
        let sol = solve_mip_with_start(&art.model, &probe, Some(&start));
        if sol.has_incumbent() && best.as_ref().map_or(true, |(o, _)| sol.objective < *o) {
            best = Some((sol.objective, start));
            if sol.objective <= target + 1e-9 {
                break;
            }
        }
    }
    best.map(|(_, s)| s)
}

fn binary_candidates(
    data: &Dataset,
    k: usize,
    ws: &WarmStart,
    previous: Option<&[Vec<f64>]>,
) -> Vec<Candidate> {
    let labels = data.labels();
    let j = data.j();
    let mut out = Vec::new();
    // copy the inputs through unchanged and keep the previous output layer
    if let Some(prev) = previous {
        if data.d() == k {
            let hidden: Vec<Vec<bool>> = data.x.iter().map(|r| r.iter().map(|&v| v > 0.5).collect()).collect();
            let majority = majority_scores(&hidden, &labels, j);
            out.push(Candidate { hidden: hidden.clone(), scores: prev.to_vec() });
            out.push(Candidate { hidden, scores: majority });
        }
    }
    out.extend(sgd_candidates(data, k, ws));
    out.push(Candidate { hidden: vec![vec![false; k]; data.n()], scores: vec![one_hot_scores(0, j); data.n()] });
    out
}

fn stack(activation: Activation, eps: f64, layers: &[(Vec<Vec<f64>>, Vec<f64>)], out: &TrainedNet) -> Result<TrainedNet, NetError> {
    let mut w: Vec<_> = layers.iter().map(|(w, _)| w.clone()).collect();
    let mut b: Vec<_> = layers.iter().map(|(_, b)| b.clone()).collect();
    let top = out.weights.len() - 1;
    w.push(out.weights[top].clone());
    b.push(out.biases[top].clone());
    TrainedNet::new(activation, w, b, eps)
}

pub fn greedy_binary(
    data: &Dataset,
    l: usize,
    k: usize,
    params: &HyperParams,
    mip: &MipParams,
) -> Result<(TrainedNet, GreedyTrace), GreedyError> {
    greedy_binary_with(data, l, k, params, mip, &GreedyOptions::default())
}

pub fn greedy_binary_with(
    data: &Dataset,
    l: usize,
    k: usize,
    params: &HyperParams,
    mip: &MipParams,
    opts: &GreedyOptions,
) -> Result<(TrainedNet, GreedyTrace), GreedyError> {
    if l == 0 || k == 0 {
        return Err(GreedyError::Arch);
    }
    let base = per_solve(mip, opts, l);
    let mut trace = GreedyTrace::default();
    let mut kept = Vec::new();
    let mut input = data.clone();
    let mut previous: Option<Vec<Vec<f64>>> = None;
    let mut net = None;
    for layer in 0..l {
        let arch = ArchSpec::new(input.d(), k, 1, data.j(), Activation::Binary);
        let art = build_binary_full(&input, &arch, params)?;
        let mut mp = base.clone();
        let floor = identical_rows_bound(&input, params.eps);
        if opts.known_bound {
            mp.known_bound = Some(floor);
        }
        let start = opts.warm_start.as_ref().and_then(|ws| {
            let ws = WarmStart { seed: ws.seed.wrapping_add(1000 * layer as u64), ..ws.clone() };
            best_start(&art, &binary_candidates(&input, k, &ws, previous.as_deref()), &base, floor)
        });
        let sol = solve_mip_with_start(&art.model, &mp, start.as_deref());
        if !sol.has_incumbent() {
            trace.records.push(record(layer, &sol, f64::NAN));
            return Err(GreedyError::NoIncumbent { layer, trace });
        }
        let sub = extract_net(&sol, &art.index, &arch, params)?;
        kept.push((sub.weights[0].clone(), sub.biases[0].clone()));
        let stacked = stack(Activation::Binary, params.eps, &kept, &sub)?;
        trace.records.push(record(layer, &sol, evaluate(&stacked, data)?.accuracy));
        previous = Some(input.x.iter().map(|r| sub.forward(r).1).collect());
        input = input.with_features(sub.last_hidden(&input.x));
        net = Some(stacked);
    }
    Ok((net.expect("at least one layer"), trace))
}

/// ReLU variant: McCormick subproblems for every layer, then an exact
/// output-layer solve on the last hidden outputs replaces the relaxed
/// output weights.
pub fn greedy_relu(
    data: &Dataset,
    l: usize,
    k: usize,
    params: &HyperParams,
    mip: &MipParams,
) -> Result<(TrainedNet, GreedyTrace), GreedyError> {
    greedy_relu_with(data, l, k, params, mip, &GreedyOptions::default())
}

pub fn greedy_relu_with(
    data: &Dataset,
    l: usize,
    k: usize,
    params: &HyperParams,
    mip: &MipParams,
    opts: &GreedyOptions,
) -> Result<(TrainedNet, GreedyTrace), GreedyError> {
    if l == 0 || k == 0 {
        return Err(GreedyError::Arch);
    }
    let mp = per_solve(mip, opts, l + 1);
    let mut trace = GreedyTrace::default();
    let mut kept = Vec::new();
    let mut input = data.clone();
    for layer in 0..l {
        let arch = ArchSpec::new(input.d(), k, 1, data.j(), Activation::Relu);
        let art = build_relu_full(&input, &arch, params)?;
        let sol = solve_mip(&art.model, &mp);
        if !sol.has_incumbent() {
            trace.records.push(record(layer, &sol, f64::NAN));
            return Err(GreedyError::NoIncumbent { layer, trace });
        }
        let sub = extract_net(&sol, &art.index, &arch, params)?;
        kept.push((sub.weights[0].clone(), sub.biases[0].clone()));
        let stacked = stack(Activation::Relu, params.eps, &kept, &sub)?;
        trace.records.push(record(layer, &sol, evaluate(&stacked, data)?.accuracy));
        input = input.with_features(sub.last_hidden(&input.x));
    }
    let art = build_output_layer(&input, data.j(), params)?;
    let sol = solve_mip(&art.model, &mp);
    if !sol.has_incumbent() {
        trace.records.push(record(l, &sol, f64::NAN));
        return Err(GreedyError::NoIncumbent { layer: l, trace });
    }
    let out = extract_net(&sol, &art.index, &art.arch, params)?;
    let net = stack(Activation::Relu, params.eps, &kept, &out)?;
    trace.records.push(record(l, &sol, evaluate(&net, data)?.accuracy));
    Ok((net, trace))
}
