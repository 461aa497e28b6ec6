//! Bounded-variable revised primal simplex.
//!
//! Every row gets a logical variable `s_i` with `a_i x - s_i = 0`, so the
//! constraint sense becomes a bound on `s_i` and the all-logical basis is
//! always available as a starting point. Phase 1 minimizes the sum of bound
//! violations of the basic variables (composite phase 1); phase 2 runs as
//! soon as the basis is primal feasible.
//!
//! Pricing is Dantzig with a switch to Bland's rule after a run of degenerate
//! pivots. The basis inverse is a sparse LU factorization plus a product-form
//! eta file, rebuilt every `refactor_interval` pivots.

use std::time::Instant;

use crate::lu::LuFactors;
use crate::model::{ModelIR, Sense, VarId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpParams {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub dual_tol: f64,
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before falling back to Bland's rule.
    pub stall_threshold: usize,
    pub max_iterations: usize,
}

impl Default for LpParams {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            feas_tol: 1e-7,
            dual_tol: 1e-9,
            refactor_interval: 50,
            stall_threshold: 50,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The basis could not be kept nonsingular or the final point failed
    /// verification after repeated refactorization.
    NumericalFailure,
    /// Iteration limit or deadline reached.
    Limit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic with no finite bound, held at zero.
    Free,
}

/// Simplex basis over structural and logical variables, reusable as a warm
/// start for a later solve of the same problem with different bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    status: Vec<VarStatus>,
}

/// A model compiled to column-major form, ready for repeated solves with
/// different variable bounds.
#[derive(Debug, Clone)]
pub struct LpProblem {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LpProblem {
    /// Integrality is ignored; binaries keep their `[0, 1]` box.
    pub fn from_model(model: &ModelIR) -> Self {
        let n = model.num_vars();
        let m = model.num_constraints();
        let mut counts = vec![0usize; n];
        for c in model.constraints() {
            for &(v, _) in &c.terms {
                counts[v.0] += 1;
            }
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let nnz = col_start[n];
        let mut fill = col_start.clone();
        let mut row_idx = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        for (i, c) in model.constraints().iter().enumerate() {
            for &(v, a) in &c.terms {
                let k = fill[v.0];
                row_idx[k] = i;
                vals[k] = a;
                fill[v.0] += 1;
            }
        }
        let mut lo: Vec<f64> = model.vars().iter().map(|v| v.lb).collect();
        let mut hi: Vec<f64> = model.vars().iter().map(|v| v.ub).collect();
        for c in model.constraints() {
            let (l, u) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            lo.push(l);
            hi.push(u);
        }
        Self { n, m, col_start, row_idx, vals, cost: model.objective_dense(), lo, hi }
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    /// Structural lower and upper bounds as declared in the model.
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo[..self.n], &self.hi[..self.n])
    }

    /// Solves with structural bounds `lo`/`hi` (length `num_cols`),
    /// optionally warm-started from an earlier basis.
    pub fn solve(
        &self,
        lo: &[f64],
        hi: &[f64],
        warm: Option<&Basis>,
        params: &LpParams,
        deadline: Option<Instant>,
    ) -> (LpSolution, Basis) {
        assert_eq!(lo.len(), self.n);
        assert_eq!(hi.len(), self.n);
        let mut s = Simplex::new(self, lo, hi, warm, params, deadline);
        let status = if lo.iter().zip(hi).any(|(l, u)| l > u) { LpStatus::Infeasible } else { s.run() };
        let mut values: Vec<f64> = s.x[..self.n].to_vec();
        for (j, v) in values.iter_mut().enumerate() {
            *v = v.clamp(s.lo[j], s.hi[j]);
        }
        let objective = if status == LpStatus::Optimal {
            self.cost.iter().zip(&values).map(|(c, x)| c * x).sum()
        } else {
            f64::NAN
        };
        let basis = Basis { status: s.status.clone() };
        (LpSolution { status, objective, values, iterations: s.iterations }, basis)
    }
}

/// Solves the LP relaxation of `model` with per-variable bound overrides.
pub fn solve_lp(model: &ModelIR, overrides: &[(VarId, f64, f64)]) -> LpSolution {
    solve_lp_with(model, overrides, &LpParams::default())
}

pub fn solve_lp_with(model: &ModelIR, overrides: &[(VarId, f64, f64)], params: &LpParams) -> LpSolution {
    let p = LpProblem::from_model(model);
    let (l, u) = p.bounds();
    let (mut lo, mut hi) = (l.to_vec(), u.to_vec());
    for &(v, a, b) in overrides {
        lo[v.0] = a;
        hi[v.0] = b;
    }
    p.solve(&lo, &hi, None, params, None).0
}

struct Eta {
    pos: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

struct Simplex<'a> {
    p: &'a LpProblem,
    params: &'a LpParams,
    deadline: Option<Instant>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    head: Vec<usize>,
    lu: LuFactors,
    etas: Vec<Eta>,
    iterations: usize,
    // scratch
    w_row: Vec<f64>,
    w_pos: Vec<f64>,
    y: Vec<f64>,
    alpha: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn new(
        p: &'a LpProblem,
        lo: &[f64],
        hi: &[f64],
        warm: Option<&Basis>,
        params: &'a LpParams,
        deadline: Option<Instant>,
    ) -> Self {
        let (n, m) = (p.n, p.m);
        let mut all_lo = lo.to_vec();
        all_lo.extend_from_slice(&p.lo[n..]);
        let mut all_hi = hi.to_vec();
        all_hi.extend_from_slice(&p.hi[n..]);

        let status = match warm {
            Some(b) if b.status.len() == n + m && b.status.iter().filter(|s| **s == VarStatus::Basic).count() == m => {
                b.status.clone()
            }
            _ => {
                let mut st = vec![VarStatus::AtLower; n + m];
                for s in &mut st[n..] {
                    *s = VarStatus::Basic;
                }
                st
            }
        };
        let head: Vec<usize> = (0..n + m).filter(|&j| status[j] == VarStatus::Basic).collect();
        let mut s = Self {
            p,
            params,
            deadline,
            lo: all_lo,
            hi: all_hi,
            x: vec![0.0; n + m],
            status,
            head,
            lu: LuFactors::default(),
            etas: Vec::new(),
            iterations: 0,
            w_row: vec![0.0; m],
            w_pos: vec![0.0; m],
            y: vec![0.0; m],
            alpha: vec![0.0; m],
        };
        for j in 0..n + m {
            if s.status[j] != VarStatus::Basic {
                s.place_nonbasic(j, None);
            }
        }
        s
    }

    /// Puts nonbasic `j` on a finite bound, preferring `hint` and otherwise
    /// its current status, or at zero when it has none.
    fn place_nonbasic(&mut self, j: usize, hint: Option<f64>) {
        let (l, u) = (self.lo[j], self.hi[j]);
        let want_upper = match hint {
            Some(v) => u.is_finite() && (!l.is_finite() || (v - u).abs() < (v - l).abs()),
            None => self.status[j] == VarStatus::AtUpper,
        };
        let (st, v) = if want_upper && u.is_finite() {
            (VarStatus::AtUpper, u)
        } else if l.is_finite() {
            (VarStatus::AtLower, l)
        } else if u.is_finite() {
            (VarStatus::AtUpper, u)
        } else {
            (VarStatus::Free, 0.0)
        };
        self.status[j] = st;
        self.x[j] = v;
    }

    fn column(&self, j: usize, f: &mut impl FnMut(usize, f64)) {
        if j < self.p.n {
            for k in self.p.col_start[j]..self.p.col_start[j + 1] {
                f(self.p.row_idx[k], self.p.vals[k]);
            }
        } else {
            f(j - self.p.n, -1.0);
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.p.n {
            let mut s = 0.0;
            for k in self.p.col_start[j]..self.p.col_start[j + 1] {
                s += self.p.vals[k] * y[self.p.row_idx[k]];
            }
            s
        } else {
            -y[j - self.p.n]
        }
    }

    /// Factors the current basis, swapping in logicals for any columns
    /// that turn out dependent.
    fn refactor(&mut self) -> bool {
        for _ in 0..4 {
            let cols: Vec<Vec<(usize, f64)>> = self
                .head
                .iter()
                .map(|&j| {
                    let mut c = Vec::new();
                    self.column(j, &mut |i, a| c.push((i, a)));
                    c
                })
                .collect();
            match LuFactors::factor(self.p.m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    self.etas.clear();
                    return true;
                }
                Err(sing) => {
                    for (&pos, &row) in sing.cols.iter().zip(&sing.rows) {
                        let old = self.head[pos];
                        let hint = self.x[old];
                        self.place_nonbasic(old, Some(hint));
                        let new = self.p.n + row;
                        self.head[pos] = new;
                        self.status[new] = VarStatus::Basic;
                    }
                }
            }
        }
        false
    }

    /// `B^{-1}` applied to `self.w_row`, result in `out` (by position).
    fn ftran_into(&mut self, out: &mut Vec<f64>) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.lu.ftran(&mut self.w_row, out);
        for e in &self.etas {
            let xp = out[e.pos] / e.pivot;
            if xp != 0.0 {
                for (&i, &a) in e.idx.iter().zip(&e.val) {
                    out[i] -= a * xp;
                }
            }
            out[e.pos] = xp;
        }
    }

    /// Solves `B^T y = c` with `c` in `self.w_pos`, result in `self.y`.
    fn btran(&mut self) {
        for e in self.etas.iter().rev() {
            let mut s = self.w_pos[e.pos];
            for (&i, &a) in e.idx.iter().zip(&e.val) {
                s -= a * self.w_pos[i];
            }
            self.w_pos[e.pos] = s / e.pivot;
        }
        self.lu.btran(&mut self.w_pos, &mut self.y);
    }

    fn compute_basics(&mut self) {
        self.w_row.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.p.n + self.p.m {
            if self.status[j] == VarStatus::Basic || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            let w = &mut self.w_row;
            if j < self.p.n {
                for k in self.p.col_start[j]..self.p.col_start[j + 1] {
                    w[self.p.row_idx[k]] -= self.p.vals[k] * xj;
                }
            } else {
                w[j - self.p.n] += xj;
            }
        }
        let mut xb = std::mem::take(&mut self.w_pos);
        self.ftran_into(&mut xb);
        for (i, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[i];
        }
        self.w_pos = xb;
    }

    fn violation(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] {
            self.lo[j] - v
        } else if v > self.hi[j] {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    fn out_of_time(&self) -> bool {
        self.iterations >= self.params.max_iterations
            || (self.iterations % 64 == 0 && self.deadline.is_some_and(|d| Instant::now() >= d))
    }

    fn run(&mut self) -> LpStatus {
        let (n, m) = (self.p.n, self.p.m);
        let tol = self.params.feas_tol;
        if m == 0 {
            // only bounds: each variable sits at its cheaper bound
            for j in 0..n {
                let c = self.p.cost[j];
                let target = if c > 0.0 {
                    self.lo[j]
                } else if c < 0.0 {
                    self.hi[j]
                } else {
                    self.x[j]
                };
                if !target.is_finite() {
                    return LpStatus::Unbounded;
                }
                self.x[j] = target;
            }
            return LpStatus::Optimal;
        }
        if !self.refactor() {
            return LpStatus::NumericalFailure;
        }
        self.compute_basics();

        let mut degenerate = 0usize;
        let mut bland = false;
        let mut failures = 0usize;
        let mut cb = vec![0.0; m];
        let mut alpha = std::mem::take(&mut self.alpha);

        loop {
            if self.out_of_time() {
                self.alpha = alpha;
                return LpStatus::Limit;
            }
            if self.etas.len() >= self.params.refactor_interval {
                if !self.refactor() {
                    return LpStatus::NumericalFailure;
                }
                self.compute_basics();
            }

            let phase1 = self.head.iter().any(|&j| self.violation(j) > tol);
            for (i, &j) in self.head.iter().enumerate() {
                cb[i] = if phase1 {
                    if self.x[j] < self.lo[j] - tol {
                        -1.0
                    } else if self.x[j] > self.hi[j] + tol {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.cost_of(j)
                };
            }
            self.w_pos.copy_from_slice(&cb);
            self.btran();

            // pricing
            let dtol = self.params.dual_tol;
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..n + m {
                let st = self.status[j];
                if st == VarStatus::Basic || (self.lo[j] == self.hi[j] && st != VarStatus::Free) {
                    continue;
                }
                let c = if phase1 { 0.0 } else { self.cost_of(j) };
                let d = c - self.dot_column(j, &self.y);
                let eligible = match st {
                    VarStatus::AtLower => d < -dtol,
                    VarStatus::AtUpper => d > dtol,
                    VarStatus::Free => d.abs() > dtol,
                    VarStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                match enter {
                    None => {
                        enter = Some((j, d));
                        if bland {
                            break;
                        }
                    }
                    Some((_, bd)) if d.abs() > bd.abs() => enter = Some((j, d)),
                    _ => {}
                }
            }

            let Some((q, dq)) = enter else {
                if !self.etas.is_empty() {
                    // confirm on a fresh factorization before concluding
                    if !self.refactor() {
                        return LpStatus::NumericalFailure;
                    }
                    self.compute_basics();
                    continue;
                }
                self.alpha = alpha;
                return if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal };
            };

            // alpha = B^{-1} a_q
            self.w_row.iter_mut().for_each(|v| *v = 0.0);
            {
                let w = &mut self.w_row;
                if q < n {
                    for k in self.p.col_start[q]..self.p.col_start[q + 1] {
                        w[self.p.row_idx[k]] = self.p.vals[k];
                    }
                } else {
                    w[q - n] = -1.0;
                }
            }
            self.ftran_into(&mut alpha);

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let room = if dir > 0.0 { self.hi[q] - self.x[q] } else { self.x[q] - self.lo[q] };

            // ratio test: two passes, min ratio then lowest index among
            // near-ties with a usable pivot
            let ptol = self.params.pivot_tol;
            let mut theta = f64::INFINITY;
            let ratio_of = |s: &Self, i: usize, a: f64| -> Option<(f64, bool)> {
                let j = s.head[i];
                let rate = -dir * a;
                let (xj, l, u) = (s.x[j], s.lo[j], s.hi[j]);
                if rate < 0.0 {
                    let (bound, upper) = if xj > u + tol {
                        (u, true)
                    } else if xj < l - tol || l == f64::NEG_INFINITY {
                        return None;
                    } else {
                        (l, false)
                    };
                    Some(((xj - bound).max(0.0) / -rate, upper))
                } else {
                    let (bound, upper) = if xj < l - tol {
                        (l, false)
                    } else if xj > u + tol || u == f64::INFINITY {
                        return None;
                    } else {
                        (u, true)
                    };
                    Some(((bound - xj).max(0.0) / rate, upper))
                }
            };
            for i in 0..m {
                let a = alpha[i];
                if a.abs() <= ptol {
                    continue;
                }
                if let Some((r, _)) = ratio_of(self, i, a) {
                    theta = theta.min(r);
                }
            }
            let mut leave: Option<(usize, bool)> = None;
            if theta.is_finite() {
                let slack = 1e-12 * (1.0 + theta);
                let mut amax = 0.0f64;
                for i in 0..m {
                    let a = alpha[i];
                    if a.abs() > ptol && ratio_of(self, i, a).is_some_and(|(r, _)| r <= theta + slack) {
                        amax = amax.max(a.abs());
                    }
                }
                let mut best_var = usize::MAX;
                for i in 0..m {
                    let a = alpha[i];
                    if a.abs() <= ptol || a.abs() < 1e-3 * amax {
                        continue;
                    }
                    if let Some((r, upper)) = ratio_of(self, i, a) {
                        if r <= theta + slack && self.head[i] < best_var {
                            best_var = self.head[i];
                            leave = Some((i, upper));
                        }
                    }
                }
            }

            if room.is_finite() && room <= theta {
                // bound flip
                let step = dir * room;
                for i in 0..m {
                    if alpha[i] != 0.0 {
                        let j = self.head[i];
                        self.x[j] -= step * alpha[i];
                    }
                }
                if dir > 0.0 {
                    self.x[q] = self.hi[q];
                    self.status[q] = VarStatus::AtUpper;
                } else {
                    self.x[q] = self.lo[q];
                    self.status[q] = VarStatus::AtLower;
                }
                self.iterations += 1;
                degenerate = 0;
                bland = false;
                continue;
            }

            let Some((p, upper)) = leave else {
                if !phase1 && theta == f64::INFINITY {
                    self.alpha = alpha;
                    return LpStatus::Unbounded;
                }
                failures += 1;
                if failures > 3 || !self.refactor() {
                    return LpStatus::NumericalFailure;
                }
                self.compute_basics();
                continue;
            };

            let step = dir * theta;
            for i in 0..m {
                if alpha[i] != 0.0 {
                    let j = self.head[i];
                    self.x[j] -= step * alpha[i];
                }
            }
            self.x[q] += step;
            let l = self.head[p];
            if upper {
                self.x[l] = self.hi[l];
                self.status[l] = VarStatus::AtUpper;
            } else {
                self.x[l] = self.lo[l];
                self.status[l] = VarStatus::AtLower;
            }
            self.head[p] = q;
            self.status[q] = VarStatus::Basic;

            let mut eta = Eta { pos: p, pivot: alpha[p], idx: Vec::new(), val: Vec::new() };
            for i in 0..m {
                if i != p && alpha[i].abs() > 1e-14 {
                    eta.idx.push(i);
                    eta.val.push(alpha[i]);
                }
            }
            self.etas.push(eta);
            self.iterations += 1;

            if theta * dq.abs() <= 1e-12 {
                degenerate += 1;
                if degenerate > self.params.stall_threshold {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        }
    }

    fn cost_of(&self, j: usize) -> f64 {
        if j < self.p.n {
            self.p.cost[j]
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinExpr;

    #[test]
    fn two_variable_example() {
        let mut m = ModelIR::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_row("c", LinExpr::new().with(x, 1.0).with(y, 1.0), Sense::Le, 1.0).unwrap();
        m.set_objective(vec![(x, -2.0), (y, -1.0)]).unwrap();
        let s = solve_lp(&m, &[]);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 2.0).abs() < 1e-9);
        assert!((s.values[0] - 1.0).abs() < 1e-9 && s.values[1].abs() < 1e-9);
    }

    #[test]
    fn unbounded_ray() {
        let mut m = ModelIR::new("t");
        let x = m.add_continuous("x", 0.0, f64::INFINITY).unwrap();
        m.set_objective(vec![(x, -1.0)]).unwrap();
        assert_eq!(solve_lp(&m, &[]).status, LpStatus::Unbounded);
        // same with a row present
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_row("c", LinExpr::new().with(x, 1.0).with(y, -1.0), Sense::Ge, 0.0).unwrap();
        assert_eq!(solve_lp(&m, &[]).status, LpStatus::Unbounded);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = ModelIR::new("t");
        let x = m.add_continuous("x", -10.0, 10.0).unwrap();
        m.add_row("lo", LinExpr::new().with(x, 1.0), Sense::Ge, 2.0).unwrap();
        m.add_row("hi", LinExpr::new().with(x, 1.0), Sense::Le, 1.0).unwrap();
        assert_eq!(solve_lp(&m, &[]).status, LpStatus::Infeasible);
    }

    #[test]
    fn overrides_and_equalities() {
        let mut m = ModelIR::new("t");
        let x = m.add_continuous("x", 0.0, 4.0).unwrap();
        let y = m.add_continuous("y", 0.0, 4.0).unwrap();
        m.add_row("e", LinExpr::new().with(x, 1.0).with(y, 2.0), Sense::Eq, 4.0).unwrap();
        m.set_objective(vec![(x, 1.0), (y, 1.0)]).unwrap();
        let s = solve_lp(&m, &[]);
        assert!((s.objective - 2.0).abs() < 1e-9, "{s:?}");
        let s = solve_lp(&m, &[(y, 0.0, 1.0)]);
        assert!((s.objective - 3.0).abs() < 1e-9, "{s:?}");
        assert_eq!(solve_lp(&m, &[(y, 0.0, 0.5), (x, 0.0, 1.0)]).status, LpStatus::Infeasible);
    }

    #[test]
    fn warm_start_resolves_quickly() {
        let mut m = ModelIR::new("t");
        let mut obj = Vec::new();
        let vars: Vec<VarId> = (0..6).map(|i| m.add_continuous(format!("x{i}"), 0.0, 3.0).unwrap()).collect();
        for (i, &v) in vars.iter().enumerate() {
            obj.push((v, -(i as f64 + 1.0)));
        }
        for r in 0..4 {
            let mut e = LinExpr::new();
            for (i, &v) in vars.iter().enumerate() {
                e.add(v, ((i + r) % 3 + 1) as f64);
            }
            m.add_row(format!("r{r}"), e, Sense::Le, 10.0).unwrap();
        }
        m.set_objective(obj).unwrap();
        let p = LpProblem::from_model(&m);
        let (lo, hi) = p.bounds();
        let (cold, basis) = p.solve(lo, hi, None, &LpParams::default(), None);
        assert_eq!(cold.status, LpStatus::Optimal);
        let (again, _) = p.solve(lo, hi, Some(&basis), &LpParams::default(), None);
        assert_eq!(again.iterations, 0);
        assert!((again.objective - cold.objective).abs() < 1e-9);
        let mut hi2 = hi.to_vec();
        hi2[5] = 1.0;
        let (warm, _) = p.solve(lo, &hi2, Some(&basis), &LpParams::default(), None);
        let (fresh, _) = p.solve(lo, &hi2, None, &LpParams::default(), None);
        assert_eq!(warm.status, LpStatus::Optimal);
        assert!((warm.objective - fresh.objective).abs() < 1e-9);
    }
}
