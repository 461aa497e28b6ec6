//! Branch-and-bound over the binary variables of a [`ModelIR`].
//!
//! Nodes carry the list of binaries fixed on the path from the root and the
//! parent's final simplex basis for warm starting. Selection is best-bound,
//! with a depth-first dive (rounding direction first) whenever a node
//! branches in single-threaded mode. With `threads > 1` the open nodes with
//! the best bounds are evaluated in batches on scoped threads and merged in
//! node-id order, so the result stays reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::model::{ModelIR, VarId};
use crate::simplex::{Basis, LpParams, LpProblem, LpSolution, LpStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct MipParams {
    pub rel_gap: f64,
    /// Seconds; `None` means no limit.
    pub time_limit: Option<f64>,
    pub node_limit: usize,
    pub integrality_tol: f64,
    pub seed: u64,
    pub threads: usize,
    /// Debug switch: when false, nodes are never discarded by bound.
    pub prune: bool,
    /// A valid lower bound on the optimum known in advance; it floors every
    /// node bound, so an incumbent that reaches it is proved optimal.
    pub known_bound: Option<f64>,
    pub lp: LpParams,
}

impl Default for MipParams {
    fn default() -> Self {
        Self {
            rel_gap: 1e-4,
            time_limit: None,
            node_limit: 1_000_000,
            integrality_tol: 1e-6,
            seed: 0,
            threads: 1,
            prune: true,
            known_bound: None,
            lp: LpParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    FeasibleLimit,
    Infeasible,
    NoSolutionLimit,
}

impl MipStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MipStatus::Optimal => "optimal",
            MipStatus::FeasibleLimit => "feasible_limit",
            MipStatus::Infeasible => "infeasible",
            MipStatus::NoSolutionLimit => "no_solution_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeLogEntry {
    pub node: usize,
    pub depth: usize,
    pub bound: f64,
    pub incumbent: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub status: MipStatus,
    /// Empty when no feasible point was found.
    pub incumbent: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: f64,
    pub lp_iterations: usize,
    pub log: Vec<NodeLogEntry>,
}

impl MipSolution {
    pub fn has_incumbent(&self) -> bool {
        !self.incumbent.is_empty()
    }
}

pub fn gap(objective: f64, bound: f64) -> f64 {
    if !objective.is_finite() {
        return f64::INFINITY;
    }
    if !bound.is_finite() {
        return if bound > 0.0 { 0.0 } else { f64::INFINITY };
    }
    ((objective - bound) / objective.abs().max(1.0)).max(0.0)
}

/// CSV of the per-node log.
pub fn export_node_log(solution: &MipSolution) -> String {
    let mut out = String::from("node,depth,bound,incumbent,gap\n");
    for e in &solution.log {
        let _ = writeln!(out, "{},{},{:?},{:?},{:?}", e.node, e.depth, e.bound, e.incumbent, e.gap);
    }
    out
}

pub fn solve_mip(model: &ModelIR, params: &MipParams) -> MipSolution {
    solve_mip_with_start(model, params, None)
}

/// Like [`solve_mip`], seeding the incumbent from a (possibly partial)
/// assignment. Given binaries are fixed, the LP over the rest is solved and
/// any still-fractional binaries are rounded and fixed once more.
pub fn solve_mip_with_start(model: &ModelIR, params: &MipParams, start: Option<&[(VarId, f64)]>) -> MipSolution {
    Search::new(model, params).run(start)
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    /// (index into `binaries`, value)
    fixes: Vec<(u32, bool)>,
    basis: Option<Arc<Basis>>,
}

struct Queued(Node);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap and we want the smallest bound
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.bound.total_cmp(&self.0.bound).then_with(|| other.0.id.cmp(&self.0.id))
    }
}

enum Outcome {
    Infeasible,
    /// Bound exceeded the cutoff.
    Pruned,
    Integral(LpSolution),
    Branch { var: usize, value: f64, lp: LpSolution, basis: Basis },
    /// Time ran out mid-solve; node must stay open.
    Interrupted,
    /// Simplex gave up; the node's parent bound is kept as a floor.
    Failed,
}

struct Search<'a> {
    model: &'a ModelIR,
    params: &'a MipParams,
    lp: LpProblem,
    base_lo: Vec<f64>,
    base_hi: Vec<f64>,
    binaries: Vec<usize>,
    start: Instant,
    deadline: Option<Instant>,
    incumbent: Vec<f64>,
    inc_obj: f64,
    next_id: usize,
    nodes: usize,
    lp_iterations: usize,
    lost_bound: f64,
    log: Vec<NodeLogEntry>,
    logged_bound: f64,
}

impl<'a> Search<'a> {
    fn new(model: &'a ModelIR, params: &'a MipParams) -> Self {
        let lp = LpProblem::from_model(model);
        let (lo, hi) = lp.bounds();
        let (base_lo, base_hi) = (lo.to_vec(), hi.to_vec());
        let binaries = model.vars().iter().enumerate().filter(|(_, v)| v.is_binary()).map(|(i, _)| i).collect();
        let start = Instant::now();
        let deadline = params.time_limit.map(|t| start + Duration::from_secs_f64(t.max(0.0)));
        Self {
            model,
            params,
            lp,
            base_lo,
            base_hi,
            binaries,
            start,
            deadline,
            incumbent: Vec::new(),
            inc_obj: f64::INFINITY,
            next_id: 0,
            nodes: 0,
            lp_iterations: 0,
            lost_bound: f64::INFINITY,
            log: Vec::new(),
            logged_bound: f64::NEG_INFINITY,
        }
    }

    fn bounds_for(&self, fixes: &[(u32, bool)]) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = (self.base_lo.clone(), self.base_hi.clone());
        for &(b, v) in fixes {
            let j = self.binaries[b as usize];
            let x = if v { 1.0 } else { 0.0 };
            lo[j] = x;
            hi[j] = x;
        }
        (lo, hi)
    }

    fn cutoff(&self) -> f64 {
        if !self.params.prune || !self.inc_obj.is_finite() {
            return f64::INFINITY;
        }
        self.inc_obj - self.params.rel_gap * self.inc_obj.abs().max(1.0) - 1e-9
    }

    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn evaluate(&self, node: &Node, cutoff: f64) -> (Outcome, usize) {
        if node.bound >= cutoff {
            return (Outcome::Pruned, 0);
        }
        let (lo, hi) = self.bounds_for(&node.fixes);
        let (sol, basis) = self.lp.solve(&lo, &hi, node.basis.as_deref(), &self.params.lp, self.deadline);
        let iters = sol.iterations;
        let out = match sol.status {
            LpStatus::Infeasible => Outcome::Infeasible,
            LpStatus::Limit if self.timed_out() => Outcome::Interrupted,
            LpStatus::Optimal => {
                if sol.objective >= cutoff {
                    Outcome::Pruned
                } else {
                    let tol = self.params.integrality_tol;
                    let mut pick: Option<(usize, f64, f64)> = None;
                    for (b, &j) in self.binaries.iter().enumerate() {
                        let v = sol.values[j];
                        let frac = v.min(1.0 - v);
                        if frac > tol && pick.map_or(true, |(_, _, f)| frac > f) {
                            pick = Some((b, v, frac));
                        }
                    }
                    match pick {
                        None => Outcome::Integral(sol),
                        Some((b, v, _)) => Outcome::Branch { var: b, value: v, lp: sol, basis },
                    }
                }
            }
            _ => Outcome::Failed,
        };
        (out, iters)
    }

    /// Snaps binaries, checks the original rows, and re-solves with the
    /// binaries fixed if snapping broke feasibility.
    fn try_incumbent(&mut self, values: &[f64]) -> bool {
        let mut x = values.to_vec();
        for &j in &self.binaries {
            x[j] = x[j].round().clamp(0.0, 1.0);
        }
        let feas = 1e-6;
        if self.model.max_violation(&x) > feas {
            let (mut lo, mut hi) = (self.base_lo.clone(), self.base_hi.clone());
            for &j in &self.binaries {
                lo[j] = x[j];
                hi[j] = x[j];
            }
            let (sol, _) = self.lp.solve(&lo, &hi, None, &self.params.lp, self.deadline);
            self.lp_iterations += sol.iterations;
            if sol.status != LpStatus::Optimal {
                return false;
            }
            x = sol.values;
            if self.model.max_violation(&x) > feas {
                return false;
            }
        }
        let obj = self.model.objective_value(&x);
        if obj < self.inc_obj {
            self.inc_obj = obj;
            self.incumbent = x;
            true
        } else {
            false
        }
    }

    fn seed_incumbent(&mut self, start: &[(VarId, f64)]) {
        let (mut lo, mut hi) = (self.base_lo.clone(), self.base_hi.clone());
        for &(v, x) in start {
            if self.model.var(v).is_binary() {
                let x = x.round().clamp(0.0, 1.0);
                lo[v.0] = x;
                hi[v.0] = x;
            }
        }
        for _ in 0..2 {
            let (sol, _) = self.lp.solve(&lo, &hi, None, &self.params.lp, self.deadline);
            self.lp_iterations += sol.iterations;
            if sol.status != LpStatus::Optimal {
                return;
            }
            let frac = self.binaries.iter().any(|&j| {
                let v = sol.values[j];
                v.min(1.0 - v) > self.params.integrality_tol
            });
            if !frac {
                self.try_incumbent(&sol.values);
                return;
            }
            for &j in &self.binaries {
                let x = sol.values[j].round().clamp(0.0, 1.0);
                lo[j] = x;
                hi[j] = x;
            }
        }
    }

    fn record(&mut self, node: &Node, open_bound: f64) {
        let bound = open_bound.min(self.lost_bound).min(self.inc_obj);
        self.logged_bound = self.logged_bound.max(bound);
        self.log.push(NodeLogEntry {
            node: node.id,
            depth: node.depth,
            bound: self.logged_bound,
            incumbent: self.inc_obj,
            gap: gap(self.inc_obj, self.logged_bound),
        });
    }

    fn new_child(&mut self, parent: &Node, b: usize, up: bool, bound: f64, basis: &Arc<Basis>) -> Node {
        let mut fixes = parent.fixes.clone();
        fixes.push((b as u32, up));
        self.next_id += 1;
        Node { id: self.next_id, depth: parent.depth + 1, bound, fixes, basis: Some(Arc::clone(basis)) }
    }

    fn run(mut self, start: Option<&[(VarId, f64)]>) -> MipSolution {
        if let Some(s) = start {
            self.seed_incumbent(s);
        }
        let mut heap: BinaryHeap<Queued> = BinaryHeap::new();
        let floor = self.params.known_bound.filter(|b| b.is_finite()).unwrap_or(f64::NEG_INFINITY);
        heap.push(Queued(Node { id: 0, depth: 0, bound: floor, fixes: Vec::new(), basis: None }));
        let mut dive: Option<Node> = None;
        let mut limited = false;
        let threads = self.params.threads.max(1);

        loop {
            let heap_min = heap.peek().map_or(f64::INFINITY, |q| q.0.bound);
            let open = heap_min.min(dive.as_ref().map_or(f64::INFINITY, |n| n.bound));
            if open == f64::INFINITY {
                break;
            }
            if self.inc_obj.is_finite() && gap(self.inc_obj, open.min(self.lost_bound)) <= self.params.rel_gap {
                break;
            }
            if self.nodes >= self.params.node_limit || self.timed_out() {
                limited = true;
                break;
            }

            let batch: Vec<Node> = if let Some(n) = dive.take() {
                vec![n]
            } else {
                let k = if threads > 1 { threads.min(self.params.node_limit - self.nodes) } else { 1 };
                (0..k).filter_map(|_| heap.pop().map(|q| q.0)).collect()
            };
            let cutoff = self.cutoff();
            let results: Vec<(Outcome, usize)> = if batch.len() > 1 {
                let this = &self;
                std::thread::scope(|s| {
                    let hs: Vec<_> = batch.iter().map(|n| s.spawn(move || this.evaluate(n, cutoff))).collect();
                    hs.into_iter().map(|h| h.join().expect("node worker panicked")).collect()
                })
            } else {
                batch.iter().map(|n| self.evaluate(n, cutoff)).collect()
            };

            let mut interrupted = false;
            for (node, (outcome, iters)) in batch.into_iter().zip(results) {
                self.lp_iterations += iters;
                match outcome {
                    Outcome::Interrupted => {
                        heap.push(Queued(node));
                        interrupted = true;
                        continue;
                    }
                    Outcome::Infeasible | Outcome::Pruned => {}
                    Outcome::Failed => self.lost_bound = self.lost_bound.min(node.bound),
                    Outcome::Integral(sol) => {
                        self.try_incumbent(&sol.values);
                    }
                    Outcome::Branch { var, value, lp, basis } => {
                        let basis = Arc::new(basis);
                        let bound = lp.objective.max(node.bound);
                        let up_first = value >= 0.5;
                        let first = self.new_child(&node, var, up_first, bound, &basis);
                        let second = self.new_child(&node, var, !up_first, bound, &basis);
                        heap.push(Queued(second));
                        if threads == 1 && dive.is_none() {
                            dive = Some(first);
                        } else {
                            heap.push(Queued(first));
                        }
                    }
                }
                self.nodes += 1;
                let heap_min = heap.peek().map_or(f64::INFINITY, |q| q.0.bound);
                let open = heap_min.min(dive.as_ref().map_or(f64::INFINITY, |n| n.bound));
                self.record(&node, open);
            }
            if interrupted {
                limited = true;
                break;
            }
            // a dive stops once its node can no longer beat the incumbent
            if let Some(n) = dive.take() {
                if n.bound < self.cutoff() || !self.params.prune {
                    dive = Some(n);
                }
            }
        }

        let heap_min = heap.peek().map_or(f64::INFINITY, |q| q.0.bound);
        let open = heap_min.min(dive.as_ref().map_or(f64::INFINITY, |n| n.bound));
        let mut best_bound = open.min(self.lost_bound).min(self.inc_obj).max(self.logged_bound.min(self.inc_obj));
        if !self.inc_obj.is_finite() && open == f64::INFINITY && self.lost_bound == f64::INFINITY {
            best_bound = f64::INFINITY;
        }
        let g = gap(self.inc_obj, best_bound);
        let status = match (self.inc_obj.is_finite(), limited) {
            (true, false) => MipStatus::Optimal,
            (true, true) if g <= self.params.rel_gap => MipStatus::Optimal,
            (true, true) => MipStatus::FeasibleLimit,
            (false, true) => MipStatus::NoSolutionLimit,
            (false, false) if self.lost_bound.is_finite() => MipStatus::NoSolutionLimit,
            (false, false) => MipStatus::Infeasible,
        };
        if let Some(last) = self.log.last_mut() {
            last.bound = best_bound;
            last.incumbent = self.inc_obj;
            last.gap = g;
        }
        MipSolution {
            status,
            objective: self.inc_obj,
            incumbent: self.incumbent,
            best_bound,
            gap: g,
            nodes: self.nodes,
            wall_time: self.start.elapsed().as_secs_f64(),
            lp_iterations: self.lp_iterations,
            log: self.log,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, Sense};
    use crate::simplex::solve_lp;

    fn knapsackish() -> ModelIR {
        let mut m = ModelIR::new("k");
        let a = m.add_binary("x1").unwrap();
        let b = m.add_binary("x2").unwrap();
        m.add_row("cap", LinExpr::new().with(a, 1.0).with(b, 1.0), Sense::Le, 1.5).unwrap();
        m.set_objective(vec![(a, -1.0), (b, -1.0)]).unwrap();
        m
    }

    #[test]
    fn two_binaries_under_capacity() {
        let s = solve_mip(&knapsackish(), &MipParams::default());
        assert_eq!(s.status, MipStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
        assert!(s.gap <= 1e-4);
        assert!(s.best_bound <= s.objective + 1e-9);
    }

    #[test]
    fn pure_lp_matches_simplex() {
        let mut m = ModelIR::new("lp");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_row("c", LinExpr::new().with(x, 1.0).with(y, 1.0), Sense::Le, 1.0).unwrap();
        m.set_objective(vec![(x, -2.0), (y, -1.0)]).unwrap();
        let mip = solve_mip(&m, &MipParams::default());
        let lp = solve_lp(&m, &[]);
        assert!((mip.objective - lp.objective).abs() < 1e-12);
        assert_eq!(mip.nodes, 1);
        let log = export_node_log(&mip);
        assert_eq!(log.lines().count(), 2);
        assert!(log.lines().nth(1).unwrap().starts_with("0,0,"));
    }

    #[test]
    fn infeasible_binary_model() {
        let mut m = ModelIR::new("inf");
        let a = m.add_binary("a").unwrap();
        m.add_row("c1", LinExpr::new().with(a, 2.0), Sense::Eq, 1.0).unwrap();
        let s = solve_mip(&m, &MipParams::default());
        assert_eq!(s.status, MipStatus::Infeasible);
        assert!(!s.has_incumbent());
    }

    #[test]
    fn warm_start_and_node_limit() {
        let m = knapsackish();
        let p = MipParams { node_limit: 1, ..MipParams::default() };
        let s = solve_mip_with_start(&m, &p, Some(&[(VarId(0), 0.0), (VarId(1), 1.0)]));
        assert!(s.has_incumbent());
        assert!((s.objective + 1.0).abs() < 1e-9);
        let s = solve_mip_with_start(&m, &MipParams { node_limit: 0, ..p }, None);
        assert_eq!(s.status, MipStatus::NoSolutionLimit);
    }

    #[test]
    fn known_bound_closes_search() {
        let m = knapsackish();
        let p = MipParams { node_limit: 0, known_bound: Some(-1.0), ..MipParams::default() };
        let s = solve_mip_with_start(&m, &p, Some(&[(VarId(0), 1.0), (VarId(1), 0.0)]));
        assert_eq!(s.status, MipStatus::Optimal);
        assert_eq!(s.nodes, 0);
        assert_eq!(s.best_bound, -1.0);
        let loose = solve_mip(&m, &MipParams { known_bound: Some(-5.0), ..MipParams::default() });
        assert!((loose.objective + 1.0).abs() < 1e-9);
        assert_eq!(loose.status, MipStatus::Optimal);
    }

    #[test]
    fn parallel_and_unpruned_agree() {
        let mut m = ModelIR::new("p");
        let vars: Vec<VarId> = (0..8).map(|i| m.add_binary(format!("b{i}")).unwrap()).collect();
        let w = [3.0, 4.0, 5.0, 6.0, 2.5, 3.5, 4.5, 1.5];
        let v = [4.0, 5.0, 6.5, 7.0, 3.0, 4.5, 5.0, 2.0];
        let mut e = LinExpr::new();
        for (i, &x) in vars.iter().enumerate() {
            e.add(x, w[i]);
        }
        m.add_row("cap", e, Sense::Le, 12.3).unwrap();
        m.set_objective(vars.iter().zip(v).map(|(&x, c)| (x, -c)).collect()).unwrap();
        let base = MipParams { rel_gap: 0.0, ..MipParams::default() };
        let a = solve_mip(&m, &base);
        let b = solve_mip(&m, &MipParams { threads: 4, ..base.clone() });
        let c = solve_mip(&m, &MipParams { prune: false, ..base.clone() });
        assert!((a.objective - b.objective).abs() < 1e-9);
        assert!((a.objective - c.objective).abs() < 1e-9);
        assert!(c.nodes >= a.nodes);
        let mut best = f64::INFINITY;
        for mask in 0..256u32 {
            let (mut wt, mut val) = (0.0, 0.0);
            for i in 0..8 {
                if mask >> i & 1 == 1 {
                    wt += w[i];
                    val -= v[i];
                }
            }
            if wt <= 12.3 {
                best = f64::min(best, val);
            }
        }
        assert!((a.objective - best).abs() < 1e-9);
        for pair in a.log.windows(2) {
            assert!(pair[1].bound >= pair[0].bound);
        }
        assert_eq!(a.log.last().unwrap().gap, a.gap);
    }
}
