//! Simplex against brute-force vertex enumeration on tiny boxed LPs.

use mipnet_milp::{solve_lp, LinExpr, LpStatus, ModelIR, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Tiny {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rows: Vec<(Vec<f64>, Sense, f64)>,
    cost: Vec<f64>,
}

fn random_lp(rng: &mut ChaCha8Rng) -> Tiny {
    let n = rng.gen_range(1..=3);
    let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.5..4.0)).collect();
    let x0: Vec<f64> = (0..n).map(|j| rng.gen_range(lo[j]..hi[j])).collect();
    let m = rng.gen_range(1..=4);
    let rows = (0..m)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let act: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
            match rng.gen_range(0..5) {
                0 => (a, Sense::Eq, act),
                1 | 2 => (a, Sense::Le, act + rng.gen_range(0.0..1.0)),
                _ => (a, Sense::Ge, act - rng.gen_range(0.0..1.0)),
            }
        })
        .collect();
    let cost = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tiny { n, lo, hi, rows, cost }
}

fn to_model(t: &Tiny) -> ModelIR {
    let mut m = ModelIR::new("tiny");
    let vars: Vec<_> = (0..t.n).map(|j| m.add_continuous(format!("x{j}"), t.lo[j], t.hi[j]).unwrap()).collect();
    for (i, (a, s, b)) in t.rows.iter().enumerate() {
        let mut e = LinExpr::new();
        for j in 0..t.n {
            e.add(vars[j], a[j]);
        }
        m.add_row(format!("r{i}"), e, *s, *b).unwrap();
    }
    m.set_objective(vars.iter().zip(&t.cost).map(|(&v, &c)| (v, c)).collect()).unwrap();
    m
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum over all feasible vertices, `None` if there are none.
fn enumerate(t: &Tiny) -> Option<f64> {
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..t.n {
        let mut e = vec![0.0; t.n];
        e[j] = 1.0;
        planes.push((e.clone(), t.lo[j]));
        planes.push((e, t.hi[j]));
    }
    for (a, _, b) in &t.rows {
        planes.push((a.clone(), *b));
    }
    let k = planes.len();
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; t.n];
    fn rec(start: usize, depth: usize, idx: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if depth == idx.len() {
            f(idx);
            return;
        }
        for i in start..k {
            idx[depth] = i;
            rec(i + 1, depth + 1, idx, k, f);
        }
    }
    rec(0, 0, &mut idx, k, &mut |sel| {
        let a = sel.iter().map(|&i| planes[i].0.clone()).collect();
        let b = sel.iter().map(|&i| planes[i].1).collect();
        let Some(x) = solve_dense(a, b) else { return };
        let tol = 1e-8;
        if (0..t.n).any(|j| x[j] < t.lo[j] - tol || x[j] > t.hi[j] + tol) {
            return;
        }
        for (a, s, b) in &t.rows {
            let act: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
            let ok = match s {
                Sense::Le => act <= b + tol,
                Sense::Ge => act >= b - tol,
                Sense::Eq => (act - b).abs() <= tol,
            };
            if !ok {
                return;
            }
        }
        let obj: f64 = t.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        best = Some(best.map_or(obj, |b: f64| b.min(obj)));
    });
    best
}

#[test]
fn matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..300 {
        let t = random_lp(&mut rng);
        let model = to_model(&t);
        let sol = solve_lp(&model, &[]);
        let want = enumerate(&t).expect("constructed feasible");
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - want).abs() <= 1e-6, "{} vs {want}", sol.objective);
        assert!(model.max_violation(&sol.values) <= 1e-7);
        assert!((model.objective_value(&sol.values) - sol.objective).abs() <= 1e-6);
        let again = solve_lp(&model, &[]);
        assert_eq!(again, sol);
    }
}

#[test]
fn infeasible_tiny_lps_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let mut t = random_lp(&mut rng);
        // x_0 >= hi_0 + 1 cannot hold inside the box
        let mut a = vec![0.0; t.n];
        a[0] = 1.0;
        t.rows.push((a, Sense::Ge, t.hi[0] + 1.0));
        assert_eq!(enumerate(&t), None);
        assert_eq!(solve_lp(&to_model(&t), &[]).status, LpStatus::Infeasible);
    }
}
