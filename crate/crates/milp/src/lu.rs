//! Sparse LU factorization of simplex bases.
//!
//! Right-looking Gaussian elimination with Markowitz pivot selection and
//! threshold partial pivoting. Singletons are taken first, so slack-heavy
//! bases factor with no fill. Rows are addressed by constraint index and
//! columns by basis position: `ftran` maps a row-indexed right-hand side to a
//! position-indexed solution and `btran` the reverse.

/// Relative threshold for accepting a pivot against its column maximum.
const THRESHOLD: f64 = 0.01;
/// Absolute floor below which an entry is never a pivot.
const ABS_PIVOT_TOL: f64 = 1e-11;
/// Columns examined by the Markowitz search before settling.
const SEARCH_COLS: usize = 4;

#[derive(Debug, Clone)]
pub(crate) struct Singular {
    /// Basis positions that could not be pivoted.
    pub cols: Vec<usize>,
    /// Rows left without a pivot; same length as `cols`.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactors {
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    diag: Vec<f64>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
}

/// Intrusive doubly linked lists bucketing items by their nonzero count.
struct CountLists {
    head: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
    count: Vec<usize>,
    linked: Vec<bool>,
}

const NIL: usize = usize::MAX;

impl CountLists {
    fn new(items: usize, max_count: usize) -> Self {
        Self {
            head: vec![NIL; max_count + 2],
            next: vec![NIL; items],
            prev: vec![NIL; items],
            count: vec![0; items],
            linked: vec![false; items],
        }
    }

    fn insert(&mut self, item: usize, count: usize) {
        let count = count.min(self.head.len() - 1);
        self.count[item] = count;
        let h = self.head[count];
        self.next[item] = h;
        self.prev[item] = NIL;
        if h != NIL {
            self.prev[h] = item;
        }
        self.head[count] = item;
        self.linked[item] = true;
    }

    fn remove(&mut self, item: usize) {
        if !self.linked[item] {
            return;
        }
        let (p, n) = (self.prev[item], self.next[item]);
        if p != NIL {
            self.next[p] = n;
        } else {
            self.head[self.count[item]] = n;
        }
        if n != NIL {
            self.prev[n] = p;
        }
        self.linked[item] = false;
    }

    fn update(&mut self, item: usize, count: usize) {
        self.remove(item);
        self.insert(item, count);
    }
}

fn find(list: &[usize], x: usize) -> Option<usize> {
    list.iter().position(|&y| y == x)
}

impl LuFactors {
    /// Factors the `m x m` matrix whose columns are `cols[pos]` as
    /// `(row, value)` lists.
    pub(crate) fn factor(m: usize, cols: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut col_rows: Vec<Vec<usize>> = Vec::with_capacity(m);
        let mut col_vals: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (j, col) in cols.iter().enumerate() {
            let mut rs = Vec::with_capacity(col.len());
            let mut vs = Vec::with_capacity(col.len());
            for &(i, v) in col {
                if v != 0.0 {
                    rs.push(i);
                    vs.push(v);
                    row_cols[i].push(j);
                }
            }
            col_rows.push(rs);
            col_vals.push(vs);
        }

        let mut col_lists = CountLists::new(m, m);
        let mut row_lists = CountLists::new(m, m);
        for j in 0..m {
            col_lists.insert(j, col_rows[j].len());
        }
        for i in 0..m {
            row_lists.insert(i, row_cols[i].len());
        }
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut dead_cols: Vec<usize> = Vec::new();
        let mut marker = vec![usize::MAX; m];

        let mut lu = LuFactors {
            l_start: vec![0],
            u_start: vec![0],
            ..Default::default()
        };

        let mut l_buf: Vec<(usize, f64)> = Vec::new();
        let mut u_buf: Vec<(usize, f64)> = Vec::new();

        while lu.piv_row.len() + dead_cols.len() < m {
            // empty columns can never be pivoted
            while col_lists.head[0] != NIL {
                let j = col_lists.head[0];
                col_lists.remove(j);
                col_done[j] = true;
                dead_cols.push(j);
            }
            if lu.piv_row.len() + dead_cols.len() >= m {
                break;
            }

            let mut choice: Option<(usize, usize)> = None;

            // column singletons
            while col_lists.head[1] != NIL {
                let c = col_lists.head[1];
                let r = col_rows[c][0];
                if col_vals[c][0].abs() > ABS_PIVOT_TOL {
                    choice = Some((r, c));
                    break;
                }
                col_lists.remove(c);
                col_done[c] = true;
                dead_cols.push(c);
            }

            // row singletons that pass the stability threshold
            if choice.is_none() {
                let mut r = row_lists.head[1];
                while r != NIL {
                    let c = row_cols[r][0];
                    let k = find(&col_rows[c], r).expect("row/col structure out of sync");
                    let v = col_vals[c][k].abs();
                    let cmax = col_vals[c].iter().fold(0.0f64, |a, b| a.max(b.abs()));
                    if v > ABS_PIVOT_TOL && v >= THRESHOLD * cmax {
                        choice = Some((r, c));
                        break;
                    }
                    r = row_lists.next[r];
                }
            }

            // Markowitz search over the sparsest columns
            if choice.is_none() {
                let mut best: Option<(usize, f64, usize, usize)> = None; // cost, |a|, r, c
                let mut examined = 0;
                'outer: for cnt in 1..col_lists.head.len() {
                    let mut c = col_lists.head[cnt];
                    while c != NIL {
                        let cmax = col_vals[c].iter().fold(0.0f64, |a, b| a.max(b.abs()));
                        for (k, &r) in col_rows[c].iter().enumerate() {
                            let v = col_vals[c][k].abs();
                            if v <= ABS_PIVOT_TOL || v < THRESHOLD * cmax {
                                continue;
                            }
                            let cost = (row_cols[r].len() - 1) * (col_rows[c].len() - 1);
                            let better = match best {
                                None => true,
                                Some((bc, bv, br, bcol)) => {
                                    cost < bc || (cost == bc && (v > bv || (v == bv && (c, r) < (bcol, br))))
                                }
                            };
                            if better {
                                best = Some((cost, v, r, c));
                            }
                        }
                        examined += 1;
                        if examined >= SEARCH_COLS && best.is_some() {
                            break 'outer;
                        }
                        c = col_lists.next[c];
                    }
                }
                match best {
                    Some((_, _, r, c)) => choice = Some((r, c)),
                    None => {
                        // every remaining entry is numerically zero
                        for c in 0..m {
                            if !col_done[c] {
                                col_done[c] = true;
                                col_lists.remove(c);
                                dead_cols.push(c);
                            }
                        }
                        break;
                    }
                }
            }

            let (r, c) = choice.expect("pivot chosen");
            let kpos = find(&col_rows[c], r).expect("pivot entry present");
            let pivot = col_vals[c][kpos];

            l_buf.clear();
            for (k, &i) in col_rows[c].iter().enumerate() {
                if i != r {
                    l_buf.push((i, col_vals[c][k] / pivot));
                }
            }
            u_buf.clear();
            for &j in &row_cols[r] {
                if j != c {
                    let k = find(&col_rows[j], r).expect("row entry present");
                    u_buf.push((j, col_vals[j][k]));
                }
            }

            // eliminate
            for &(j, u) in &u_buf {
                let k = find(&col_rows[j], r).expect("row entry present");
                col_rows[j].swap_remove(k);
                col_vals[j].swap_remove(k);
                for (k, &i) in col_rows[j].iter().enumerate() {
                    marker[i] = k;
                }
                for &(i, l) in &l_buf {
                    let delta = -l * u;
                    let k = marker[i];
                    if k != usize::MAX && col_rows[j].get(k) == Some(&i) {
                        col_vals[j][k] += delta;
                    } else {
                        marker[i] = col_rows[j].len();
                        col_rows[j].push(i);
                        col_vals[j].push(delta);
                        row_cols[i].push(j);
                    }
                }
                for &i in &col_rows[j] {
                    marker[i] = usize::MAX;
                }
                col_lists.update(j, col_rows[j].len());
            }
            for &(i, _) in &l_buf {
                if let Some(k) = find(&row_cols[i], c) {
                    row_cols[i].swap_remove(k);
                }
                row_lists.update(i, row_cols[i].len());
            }
            row_cols[r].clear();
            col_rows[c].clear();
            col_vals[c].clear();
            row_done[r] = true;
            col_done[c] = true;
            row_lists.remove(r);
            col_lists.remove(c);

            lu.piv_row.push(r);
            lu.piv_col.push(c);
            lu.diag.push(pivot);
            for &(i, l) in &l_buf {
                lu.l_idx.push(i);
                lu.l_val.push(l);
            }
            lu.l_start.push(lu.l_idx.len());
            for &(j, u) in &u_buf {
                lu.u_idx.push(j);
                lu.u_val.push(u);
            }
            lu.u_start.push(lu.u_idx.len());
        }

        if !dead_cols.is_empty() {
            let rows: Vec<usize> = (0..m).filter(|&i| !row_done[i]).collect();
            dead_cols.sort_unstable();
            debug_assert_eq!(rows.len(), dead_cols.len());
            return Err(Singular { cols: dead_cols, rows });
        }
        Ok(lu)
    }

    /// Solves `B x = b`. `w` holds `b` by row on entry and is clobbered;
    /// `x` receives the solution by basis position.
    pub(crate) fn ftran(&self, w: &mut [f64], x: &mut [f64]) {
        for k in 0..self.piv_row.len() {
            let t = w[self.piv_row[k]];
            if t != 0.0 {
                for e in self.l_start[k]..self.l_start[k + 1] {
                    w[self.l_idx[e]] -= self.l_val[e] * t;
                }
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let mut s = w[self.piv_row[k]];
            for e in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[e] * x[self.u_idx[e]];
            }
            x[self.piv_col[k]] = s / self.diag[k];
        }
    }

    /// Solves `B^T y = c`. `c` holds the right-hand side by basis position
    /// and is clobbered; `y` receives the solution by row.
    pub(crate) fn btran(&self, c: &mut [f64], y: &mut [f64]) {
        for k in 0..self.piv_row.len() {
            let z = c[self.piv_col[k]] / self.diag[k];
            y[self.piv_row[k]] = z;
            if z != 0.0 {
                for e in self.u_start[k]..self.u_start[k + 1] {
                    c[self.u_idx[e]] -= self.u_val[e] * z;
                }
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let r = self.piv_row[k];
            let mut s = y[r];
            for e in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[e] * y[self.l_idx[e]];
            }
            y[r] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_to_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|j| (0..m).filter(|&i| a[i][j] != 0.0).map(|i| (i, a[i][j])).collect())
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    #[test]
    fn solves_random_sparse_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..50 {
            let m = 1 + trial % 12;
            let mut a = vec![vec![0.0; m]; m];
            for i in 0..m {
                a[i][i] = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                for j in 0..m {
                    if i != j && rng.gen_bool(0.25) {
                        a[i][j] = rng.gen_range(-1.0..1.0);
                    }
                }
            }
            // shuffle columns so the diagonal is not where the pivots are
            let perm: Vec<usize> = (0..m).map(|j| (j + trial) % m).collect();
            let a: Vec<Vec<f64>> = a.iter().map(|row| perm.iter().map(|&j| row[j]).collect()).collect();
            let lu = match LuFactors::factor(m, &dense_to_cols(&a)) {
                Ok(lu) => lu,
                Err(_) => continue,
            };
            let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut b = matvec(&a, &xs);
            let mut x = vec![0.0; m];
            lu.ftran(&mut b, &mut x);
            for (p, q) in x.iter().zip(&xs) {
                assert!((p - q).abs() < 1e-8, "ftran mismatch {p} vs {q}");
            }
            // B^T y = c
            let ys: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let at: Vec<Vec<f64>> = (0..m).map(|j| (0..m).map(|i| a[i][j]).collect()).collect();
            let mut c = matvec(&at, &ys);
            let mut y = vec![0.0; m];
            lu.btran(&mut c, &mut y);
            for (p, q) in y.iter().zip(&ys) {
                assert!((p - q).abs() < 1e-8, "btran mismatch {p} vs {q}");
            }
        }
    }

    #[test]
    fn reports_singular_columns() {
        // second column is a multiple of the first
        let a = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]];
        let err = LuFactors::factor(3, &dense_to_cols(&a)).unwrap_err();
        assert_eq!(err.cols.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
