//! MIP models for training networks: binary activations (big-M gates with a
//! dead zone and exact binary×continuous products), ReLU activations
//! (big-M gates plus piecewise McCormick envelopes), and the output-layer
//! model with no hidden layers. All share the linearized soft-max NLL.
//!
//! Layers are numbered 0..L−1 for hidden layers and L for the output layer.
//! Variable names follow `alpha[i][k][l]`, `beta[k][l]`, `h[n][k][l]`,
//! `hrelu[n][k][l]`, `z[n][kp][k][l]`, `omega[n]`, `r[n][j][jp]`,
//! `lambda[kp][k][l][p]`; output-layer quantities use `l = L`.

use std::collections::HashMap;
use std::fmt;

use mipnet_milp::{LinExpr, ModelError, ModelIR, Sense, VarId, VarSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Binary,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub d: usize,
    pub k: usize,
    pub l: usize,
    pub j: usize,
    pub activation: Activation,
}

impl ArchSpec {
    pub fn new(d: usize, k: usize, l: usize, j: usize, activation: Activation) -> Self {
        Self { d, k, l, j, activation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// One big-M for every disjunction. When unset, each constraint family
    /// gets the smallest constant its variable bounds allow.
    pub big_m: Option<f64>,
    pub eps: f64,
    pub alpha_lb: f64,
    pub alpha_ub: f64,
    pub beta_lb: f64,
    pub beta_ub: f64,
    /// McCormick partitions (ReLU only).
    pub p: usize,
    /// Upper bound on ReLU outputs; defaults to `fan_in * alpha_ub + beta_ub`
    /// with the widest fan-in, at least 1.
    pub hrelu_ub: Option<f64>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self { big_m: None, eps: 0.01, alpha_lb: -1.0, alpha_ub: 1.0, beta_lb: -1.0, beta_ub: 1.0, p: 4, hrelu_ub: None }
    }
}

impl HyperParams {
    pub fn alpha_max(&self) -> f64 {
        self.alpha_lb.abs().max(self.alpha_ub.abs())
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_lb.abs().max(self.beta_ub.abs())
    }

    pub fn resolved_hrelu_ub(&self, arch: &ArchSpec) -> f64 {
        self.hrelu_ub.unwrap_or_else(|| (arch.d.max(arch.k) as f64 * self.alpha_ub + self.beta_ub).max(1.0))
    }

    /// Partition `p` (1-based) of the weight range: `(α^L_p, α^U_p)`.
    pub fn partition(&self, p: usize) -> (f64, f64) {
        partition_bounds(self.alpha_lb, self.alpha_ub, self.p, p)
    }
}

pub fn partition_bounds(lo: f64, hi: f64, parts: usize, p: usize) -> (f64, f64) {
    let w = hi - lo;
    (lo + w * (p - 1) as f64 / parts as f64, lo + w * p as f64 / parts as f64)
}

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("dataset has no rows")]
    NoRows,
    #[error("invalid architecture: {0}")]
    Arch(String),
    #[error("invalid hyperparameters: {0}")]
    Params(String),
    #[error("label row {0} is not one-hot")]
    NotOneHot(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Structural role and indices of a formulation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    Alpha { i: usize, k: usize, l: usize },
    Beta { k: usize, l: usize },
    H { n: usize, k: usize, l: usize },
    HRelu { n: usize, k: usize, l: usize },
    Z { n: usize, kp: usize, k: usize, l: usize },
    Omega { n: usize },
    R { n: usize, j: usize, jp: usize },
    Lambda { kp: usize, k: usize, l: usize, p: usize },
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarKey::Alpha { i, k, l } => write!(f, "alpha[{i}][{k}][{l}]"),
            VarKey::Beta { k, l } => write!(f, "beta[{k}][{l}]"),
            VarKey::H { n, k, l } => write!(f, "h[{n}][{k}][{l}]"),
            VarKey::HRelu { n, k, l } => write!(f, "hrelu[{n}][{k}][{l}]"),
            VarKey::Z { n, kp, k, l } => write!(f, "z[{n}][{kp}][{k}][{l}]"),
            VarKey::Omega { n } => write!(f, "omega[{n}]"),
            VarKey::R { n, j, jp } => write!(f, "r[{n}][{j}][{jp}]"),
            VarKey::Lambda { kp, k, l, p } => write!(f, "lambda[{kp}][{k}][{l}][{p}]"),
        }
    }
}

impl VarKey {
    /// Inverse of `Display`.
    pub fn parse(name: &str) -> Option<VarKey> {
        let open = name.find('[')?;
        let (role, rest) = name.split_at(open);
        let mut idx = Vec::new();
        let mut s = rest;
        while !s.is_empty() {
            let inner = s.strip_prefix('[')?;
            let close = inner.find(']')?;
            let t = &inner[..close];
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) || (t.len() > 1 && t.starts_with('0')) {
                return None;
            }
            idx.push(t.parse::<usize>().ok()?);
            s = &inner[close + 1..];
        }
        Some(match (role, idx.as_slice()) {
            ("alpha", &[i, k, l]) => VarKey::Alpha { i, k, l },
            ("beta", &[k, l]) => VarKey::Beta { k, l },
            ("h", &[n, k, l]) => VarKey::H { n, k, l },
            ("hrelu", &[n, k, l]) => VarKey::HRelu { n, k, l },
            ("z", &[n, kp, k, l]) => VarKey::Z { n, kp, k, l },
            ("omega", &[n]) => VarKey::Omega { n },
            ("r", &[n, j, jp]) => VarKey::R { n, j, jp },
            ("lambda", &[kp, k, l, p]) => VarKey::Lambda { kp, k, l, p },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarIndex {
    ids: HashMap<VarKey, VarId>,
    keys: Vec<VarKey>,
}

impl VarIndex {
    pub fn get(&self, key: VarKey) -> Option<VarId> {
        self.ids.get(&key).copied()
    }

    pub fn key(&self, id: VarId) -> VarKey {
        self.keys[id.0]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    /// Rebuilds the index of a model from its variable names (e.g. after
    /// MPS import).
    pub fn from_model(model: &ModelIR) -> Option<Self> {
        let mut idx = VarIndex::default();
        for (i, v) in model.vars().iter().enumerate() {
            let key = VarKey::parse(&v.name)?;
            idx.ids.insert(key, VarId(i));
            idx.keys.push(key);
        }
        Some(idx)
    }

    pub fn count(&self, pred: impl Fn(&VarKey) -> bool) -> usize {
        self.keys.iter().filter(|k| pred(k)).count()
    }
}

/// Constants actually used by a build.
#[derive(Debug, Clone, PartialEq)]
pub struct BigMs {
    /// Gate constant per hidden layer.
    pub gate: Vec<f64>,
    /// Binary×continuous product linearization.
    pub product: f64,
    /// McCormick disjunctions.
    pub mccormick: f64,
    pub diversify: f64,
    /// |output| bound; also the box of `h[n][j][L]` and `omega[n]`.
    pub output: f64,
    pub hrelu_ub: f64,
}

#[derive(Debug, Clone)]
pub struct BuildArtifact {
    pub model: ModelIR,
    pub index: VarIndex,
    pub arch: ArchSpec,
    pub params: HyperParams,
    pub big_ms: BigMs,
}

impl BuildArtifact {
    pub fn var(&self, key: VarKey) -> VarId {
        self.index.get(key).unwrap_or_else(|| panic!("no variable {key}"))
    }
}

struct Builder {
    model: ModelIR,
    index: VarIndex,
}

impl Builder {
    fn new(name: &str) -> Self {
        Self { model: ModelIR::new(name), index: VarIndex::default() }
    }

    fn cont(&mut self, key: VarKey, lb: f64, ub: f64) -> Result<VarId, FormulationError> {
        self.add(key, VarSpec::continuous(key.to_string(), lb, ub))
    }

    fn bin(&mut self, key: VarKey) -> Result<VarId, FormulationError> {
        self.add(key, VarSpec::binary(key.to_string()))
    }

    fn add(&mut self, key: VarKey, spec: VarSpec) -> Result<VarId, FormulationError> {
        let id = self.model.add_var(spec)?;
        self.index.ids.insert(key, id);
        self.index.keys.push(key);
        Ok(id)
    }

    fn row(&mut self, name: String, e: LinExpr, sense: Sense, rhs: f64) -> Result<(), FormulationError> {
        self.model.add_row(name, e, sense, rhs)?;
        Ok(())
    }

    fn get(&self, key: VarKey) -> VarId {
        self.index.get(key).unwrap_or_else(|| panic!("no variable {key}"))
    }

    fn finish(self, arch: ArchSpec, params: HyperParams, big_ms: BigMs) -> BuildArtifact {
        BuildArtifact { model: self.model, index: self.index, arch, params, big_ms }
    }
}

fn check_params(p: &HyperParams) -> Result<(), FormulationError> {
    if !(p.eps > 0.0) {
        return Err(FormulationError::Params("eps must be positive".into()));
    }
    if !(p.alpha_lb < p.alpha_ub) || !(p.beta_lb <= p.beta_ub) {
        return Err(FormulationError::Params("inverted weight or bias bounds".into()));
    }
    if let Some(m) = p.big_m {
        if !(m > p.eps) {
            return Err(FormulationError::Params("big_m must exceed eps".into()));
        }
    }
    Ok(())
}

fn check_data(data: &Dataset, arch: &ArchSpec) -> Result<Vec<usize>, FormulationError> {
    if data.n() == 0 {
        return Err(FormulationError::NoRows);
    }
    if data.d() != arch.d || data.j() != arch.j {
        return Err(FormulationError::Arch(format!(
            "data is {}x{} → {}, architecture expects d={} J={}",
            data.n(),
            data.d(),
            data.j(),
            arch.d,
            arch.j
        )));
    }
    if arch.d == 0 || arch.j < 2 {
        return Err(FormulationError::Arch("need d ≥ 1 and J ≥ 2".into()));
    }
    labels_of(&data.y)
}

fn labels_of(y: &[Vec<f64>]) -> Result<Vec<usize>, FormulationError> {
    y.iter()
        .enumerate()
        .map(|(n, row)| {
            let ones: Vec<usize> = (0..row.len()).filter(|&j| row[j] == 1.0).collect();
            if ones.len() == 1 && row.iter().all(|&v| v == 0.0 || v == 1.0) {
                Ok(ones[0])
            } else {
                Err(FormulationError::NotOneHot(n))
            }
        })
        .collect()
}

fn max_input_l1(data: &Dataset) -> f64 {
    data.x.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Linearized NLL `Σ_n (max_j H[n][j] − H[n][y_n])`.
pub fn linearized_nll_value(h: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64, FormulationError> {
    let labels = labels_of(y)?;
    Ok(h.iter().zip(labels).map(|(row, c)| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - row[c]).sum())
}

/// Soft-max negative log likelihood, summed over rows.
pub fn softmax_nll(h: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64, FormulationError> {
    let labels = labels_of(y)?;
    Ok(h.iter()
        .zip(labels)
        .map(|(row, c)| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[c]
        })
        .sum())
}

/// Adds the max constraints `ω_n ≥ h[n][j][L]`, the pairwise
/// diversification disjunctions (fresh binaries `r[n][j][jp]`, `j < jp`,
/// with `r = 1` meaning `h_jp ≥ h_j + ε`) and the objective
/// `Σ_n (ω_n − h[n][y_n][L])`.
pub fn attach_nll_objective(
    model: &mut ModelIR,
    index: &mut VarIndex,
    y: &[Vec<f64>],
    out_layer: usize,
    eps: f64,
    m_div: f64,
) -> Result<(), FormulationError> {
    let labels = labels_of(y)?;
    let j_count = y.first().map_or(0, Vec::len);
    let mut b = Builder { model: std::mem::take(model), index: std::mem::take(index) };
    let mut obj = LinExpr::new();
    let result = (|| {
        for (n, &c) in labels.iter().enumerate() {
            let omega = b.get(VarKey::Omega { n });
            for j in 0..j_count {
                let h = b.get(VarKey::H { n, k: j, l: out_layer });
                b.row(format!("max[{n}][{j}]"), LinExpr::new().with(omega, 1.0).with(h, -1.0), Sense::Ge, 0.0)?;
            }
            for j in 0..j_count {
                for jp in j + 1..j_count {
                    let r = b.bin(VarKey::R { n, j, jp })?;
                    let hj = b.get(VarKey::H { n, k: j, l: out_layer });
                    let hjp = b.get(VarKey::H { n, k: jp, l: out_layer });
                    let diff = || LinExpr::new().with(hjp, 1.0).with(hj, -1.0);
                    b.row(format!("div_lo[{n}][{j}][{jp}]"), diff().with(r, -m_div), Sense::Le, -eps)?;
                    b.row(format!("div_hi[{n}][{j}][{jp}]"), diff().with(r, -m_div), Sense::Ge, eps - m_div)?;
                }
            }
            obj.add(omega, 1.0);
            obj.add(b.get(VarKey::H { n, k: c, l: out_layer }), -1.0);
        }
        b.model.set_objective(obj.into_terms())?;
        Ok(())
    })();
    *model = b.model;
    *index = b.index;
    result
}

fn resolve(data: &Dataset, arch: &ArchSpec, p: &HyperParams) -> BigMs {
    let (am, bm) = (p.alpha_max(), p.beta_max());
    let hu = p.resolved_hrelu_ub(arch);
    let x1 = max_input_l1(data);
    let hidden_in = match arch.activation {
        Activation::Binary => arch.k as f64,
        Activation::Relu => arch.k as f64 * hu,
    };
    let mut gate = Vec::with_capacity(arch.l);
    for l in 0..arch.l {
        let input = if l == 0 { x1 } else { hidden_in };
        gate.push(2.0 * (am * input + bm).max(p.eps));
    }
    let output = if arch.l == 0 { am * x1 + bm } else { am * hidden_in + bm };
    let mut ms = BigMs {
        gate,
        product: am,
        mccormick: 4.0 * am * hu,
        diversify: 2.0 * output + 2.0 * p.eps,
        output,
        hrelu_ub: hu,
    };
    if let Some(m) = p.big_m {
        ms.gate.iter_mut().for_each(|g| *g = m);
        ms.product = m;
        ms.mccormick = m;
        ms.diversify = m;
    }
    ms
}

fn declare_weights(b: &mut Builder, arch: &ArchSpec, p: &HyperParams) -> Result<(), FormulationError> {
    for l in 0..=arch.l {
        let fan_in = if l == 0 { arch.d } else { arch.k };
        let fan_out = if l == arch.l { arch.j } else { arch.k };
        for i in 0..fan_in {
            for k in 0..fan_out {
                b.cont(VarKey::Alpha { i, k, l }, p.alpha_lb, p.alpha_ub)?;
            }
        }
    }
    for l in 0..=arch.l {
        let fan_out = if l == arch.l { arch.j } else { arch.k };
        for k in 0..fan_out {
            b.cont(VarKey::Beta { k, l }, p.beta_lb, p.beta_ub)?;
        }
    }
    Ok(())
}

/// `Σ_i α[i][k][0] x[n][i] + β[k][0]` with data as constants.
fn layer0_preact(b: &Builder, x: &[f64], k: usize) -> LinExpr {
    let mut e = LinExpr::new();
    for (i, &xi) in x.iter().enumerate() {
        e.add(b.get(VarKey::Alpha { i, k, l: 0 }), xi);
    }
    e.add(b.get(VarKey::Beta { k, l: 0 }), 1.0);
    e
}

/// `Σ_kp z[n][kp][k][l] + β[k][l]`.
fn hidden_preact(b: &Builder, arch: &ArchSpec, n: usize, k: usize, l: usize) -> LinExpr {
    let mut e = LinExpr::new();
    for kp in 0..arch.k {
        e.add(b.get(VarKey::Z { n, kp, k, l }), 1.0);
    }
    e.add(b.get(VarKey::Beta { k, l }), 1.0);
    e
}

/// Gate `h` with dead zone: pre ≤ M h and pre ≥ ε − (M + ε)(1 − h).
fn gate_rows(b: &mut Builder, pre: &LinExpr, h: VarId, m: f64, eps: f64, tag: &str) -> Result<(), FormulationError> {
    b.row(format!("gate_lo{tag}"), pre.clone().with(h, -m), Sense::Le, 0.0)?;
    b.row(format!("gate_hi{tag}"), pre.clone().with(h, -(m + eps)), Sense::Ge, -m)?;
    Ok(())
}

/// ReLU value rows: hrelu = pre when h = 1, hrelu = 0 when h = 0.
fn relu_rows(b: &mut Builder, pre: &LinExpr, h: VarId, hr: VarId, m: f64, tag: &str) -> Result<(), FormulationError> {
    let neg_pre = |e: &LinExpr| {
        let mut out = LinExpr::new();
        for &(v, a) in e.clone().into_terms().iter() {
            out.add(v, -a);
        }
        out
    };
    b.row(format!("relu_ub{tag}"), neg_pre(pre).with(hr, 1.0).with(h, m), Sense::Le, m)?;
    b.row(format!("relu_lb{tag}"), neg_pre(pre).with(hr, 1.0).with(h, -m), Sense::Ge, -m)?;
    b.row(format!("relu_on_lo{tag}"), LinExpr::new().with(hr, 1.0).with(h, m), Sense::Ge, 0.0)?;
    b.row(format!("relu_on_hi{tag}"), LinExpr::new().with(hr, 1.0).with(h, -m), Sense::Le, 0.0)?;
    Ok(())
}

/// z = α·h for binary h (exact): four rows.
fn product_rows(b: &mut Builder, z: VarId, alpha: VarId, h: VarId, m: f64, tag: &str) -> Result<(), FormulationError> {
    b.row(format!("prod_ub{tag}"), LinExpr::new().with(z, 1.0).with(alpha, -1.0).with(h, m), Sense::Le, m)?;
    b.row(format!("prod_lb{tag}"), LinExpr::new().with(z, 1.0).with(alpha, -1.0).with(h, -m), Sense::Ge, -m)?;
    b.row(format!("prod_off_lo{tag}"), LinExpr::new().with(z, 1.0).with(h, m), Sense::Ge, 0.0)?;
    b.row(format!("prod_off_hi{tag}"), LinExpr::new().with(z, 1.0).with(h, -m), Sense::Le, 0.0)?;
    Ok(())
}

/// Piecewise McCormick for z ≈ α·hr with hr ∈ [0, hU], one λ per piece.
fn mccormick_rows(
    b: &mut Builder,
    z: VarId,
    alpha: VarId,
    hr: VarId,
    lambdas: &[VarId],
    p: &HyperParams,
    hu: f64,
    m: f64,
    tag: &str,
) -> Result<(), FormulationError> {
    for (pi, &lam) in lambdas.iter().enumerate() {
        let (al, au) = p.partition(pi + 1);
        let t = format!("{tag}[{}]", pi + 1);
        b.row(format!("mc_under1{t}"), LinExpr::new().with(z, 1.0).with(hr, -al).with(lam, -m), Sense::Ge, -m)?;
        b.row(
            format!("mc_under2{t}"),
            LinExpr::new().with(z, 1.0).with(hr, -au).with(alpha, -hu).with(lam, -m),
            Sense::Ge,
            -au * hu - m,
        )?;
        b.row(format!("mc_over1{t}"), LinExpr::new().with(z, 1.0).with(hr, -au).with(lam, m), Sense::Le, m)?;
        b.row(
            format!("mc_over2{t}"),
            LinExpr::new().with(z, 1.0).with(hr, -al).with(alpha, -hu).with(lam, m),
            Sense::Le,
            m - al * hu,
        )?;
    }
    Ok(())
}

/// One-hot λ and α confined to the chosen piece.
fn partition_rows(b: &mut Builder, alpha: VarId, lambdas: &[VarId], p: &HyperParams, tag: &str) -> Result<(), FormulationError> {
    let mut sum = LinExpr::new();
    let mut lo = LinExpr::new().with(alpha, 1.0);
    let mut hi = LinExpr::new().with(alpha, 1.0);
    for (pi, &lam) in lambdas.iter().enumerate() {
        let (al, au) = p.partition(pi + 1);
        sum.add(lam, 1.0);
        lo.add(lam, -al);
        hi.add(lam, -au);
    }
    b.row(format!("piece_one{tag}"), sum, Sense::Eq, 1.0)?;
    b.row(format!("piece_lo{tag}"), lo, Sense::Ge, 0.0)?;
    b.row(format!("piece_hi{tag}"), hi, Sense::Le, 0.0)?;
    Ok(())
}

fn output_vars(b: &mut Builder, n_rows: usize, j: usize, l: usize, bound: f64) -> Result<(), FormulationError> {
    for n in 0..n_rows {
        for jj in 0..j {
            b.cont(VarKey::H { n, k: jj, l }, -bound, bound)?;
        }
    }
    for n in 0..n_rows {
        b.cont(VarKey::Omega { n }, -bound, bound)?;
    }
    Ok(())
}

/// Binary-activation network with `arch.l ≥ 1` hidden layers.
pub fn build_binary_full(data: &Dataset, arch: &ArchSpec, params: &HyperParams) -> Result<BuildArtifact, FormulationError> {
    if arch.activation != Activation::Binary {
        return Err(FormulationError::Arch("binary builder needs binary activation".into()));
    }
    if arch.l == 0 {
        return Err(FormulationError::Arch("L = 0: use build_output_layer".into()));
    }
    if arch.k == 0 {
        return Err(FormulationError::Arch("K must be at least 1".into()));
    }
    check_params(params)?;
    check_data(data, arch)?;
    let ms = resolve(data, arch, params);
    let (n_rows, big_l, eps) = (data.n(), arch.l, params.eps);
    let mut b = Builder::new("binary_net");
    declare_weights(&mut b, arch, params)?;
    for l in 0..big_l {
        for n in 0..n_rows {
            for k in 0..arch.k {
                b.bin(VarKey::H { n, k, l })?;
            }
        }
    }
    output_vars(&mut b, n_rows, arch.j, big_l, ms.output)?;
    let (zlo, zhi) = (params.alpha_lb.min(0.0), params.alpha_ub.max(0.0));
    for l in 1..=big_l {
        let fan_out = if l == big_l { arch.j } else { arch.k };
        for n in 0..n_rows {
            for k in 0..fan_out {
                for kp in 0..arch.k {
                    b.cont(VarKey::Z { n, kp, k, l }, zlo, zhi)?;
                }
            }
        }
    }

    for n in 0..n_rows {
        for k in 0..arch.k {
            let pre = layer0_preact(&b, &data.x[n], k);
            let h = b.get(VarKey::H { n, k, l: 0 });
            gate_rows(&mut b, &pre, h, ms.gate[0], eps, &format!("[{n}][{k}][0]"))?;
        }
    }
    for l in 1..=big_l {
        let fan_out = if l == big_l { arch.j } else { arch.k };
        for n in 0..n_rows {
            for k in 0..fan_out {
                let tag = format!("[{n}][{k}][{l}]");
                if l < big_l {
                    let pre = hidden_preact(&b, arch, n, k, l);
                    let h = b.get(VarKey::H { n, k, l });
                    gate_rows(&mut b, &pre, h, ms.gate[l], eps, &tag)?;
                } else {
                    let e = hidden_preact(&b, arch, n, k, l).with(b.get(VarKey::H { n, k, l }), -1.0);
                    b.row(format!("out{tag}"), e, Sense::Eq, 0.0)?;
                }
                for kp in 0..arch.k {
                    let z = b.get(VarKey::Z { n, kp, k, l });
                    let a = b.get(VarKey::Alpha { i: kp, k, l });
                    let h = b.get(VarKey::H { n, k: kp, l: l - 1 });
                    product_rows(&mut b, z, a, h, ms.product, &format!("[{n}][{kp}][{k}][{l}]"))?;
                }
            }
        }
    }
    attach_nll_objective(&mut b.model, &mut b.index, &data.y, big_l, eps, ms.diversify)?;
    Ok(b.finish(*arch, params.clone(), ms))
}

/// ReLU network with `arch.l ≥ 1` hidden layers, products relaxed by
/// `params.p`-piece McCormick envelopes (output layer included).
pub fn build_relu_full(data: &Dataset, arch: &ArchSpec, params: &HyperParams) -> Result<BuildArtifact, FormulationError> {
    if arch.activation != Activation::Relu {
        return Err(FormulationError::Arch("ReLU builder needs relu activation".into()));
    }
    if arch.l == 0 {
        return Err(FormulationError::Arch("L = 0: use build_output_layer".into()));
    }
    if arch.k == 0 {
        return Err(FormulationError::Arch("K must be at least 1".into()));
    }
    if params.p == 0 {
        return Err(FormulationError::Params("P must be at least 1".into()));
    }
    if params.hrelu_ub.is_some_and(|u| !(u > 0.0)) {
        return Err(FormulationError::Params("hrelu_ub must be positive".into()));
    }
    check_params(params)?;
    check_data(data, arch)?;
    let ms = resolve(data, arch, params);
    let (n_rows, big_l, eps, hu) = (data.n(), arch.l, params.eps, ms.hrelu_ub);
    let mut b = Builder::new("relu_net");
    declare_weights(&mut b, arch, params)?;
    for l in 0..big_l {
        for n in 0..n_rows {
            for k in 0..arch.k {
                b.bin(VarKey::H { n, k, l })?;
            }
        }
    }
    for l in 0..big_l {
        for n in 0..n_rows {
            for k in 0..arch.k {
                b.cont(VarKey::HRelu { n, k, l }, 0.0, hu)?;
            }
        }
    }
    output_vars(&mut b, n_rows, arch.j, big_l, ms.output)?;
    let zb = params.alpha_max() * hu;
    for l in 1..=big_l {
        let fan_out = if l == big_l { arch.j } else { arch.k };
        for n in 0..n_rows {
            for k in 0..fan_out {
                for kp in 0..arch.k {
                    b.cont(VarKey::Z { n, kp, k, l }, -zb, zb)?;
                }
            }
        }
        for k in 0..fan_out {
            for kp in 0..arch.k {
                for p in 1..=params.p {
                    b.bin(VarKey::Lambda { kp, k, l, p })?;
                }
            }
        }
    }

    for n in 0..n_rows {
        for k in 0..arch.k {
            let pre = layer0_preact(&b, &data.x[n], k);
            let h = b.get(VarKey::H { n, k, l: 0 });
            let hr = b.get(VarKey::HRelu { n, k, l: 0 });
            let tag = format!("[{n}][{k}][0]");
            gate_rows(&mut b, &pre, h, ms.gate[0], eps, &tag)?;
            relu_rows(&mut b, &pre, h, hr, ms.gate[0], &tag)?;
        }
    }
    for l in 1..=big_l {
        let fan_out = if l == big_l { arch.j } else { arch.k };
        for k in 0..fan_out {
            for kp in 0..arch.k {
                let a = b.get(VarKey::Alpha { i: kp, k, l });
                let lams: Vec<VarId> = (1..=params.p).map(|p| b.get(VarKey::Lambda { kp, k, l, p })).collect();
                partition_rows(&mut b, a, &lams, params, &format!("[{kp}][{k}][{l}]"))?;
            }
        }
        for n in 0..n_rows {
            for k in 0..fan_out {
                let tag = format!("[{n}][{k}][{l}]");
                if l < big_l {
                    let pre = hidden_preact(&b, arch, n, k, l);
                    let h = b.get(VarKey::H { n, k, l });
                    let hr = b.get(VarKey::HRelu { n, k, l });
                    gate_rows(&mut b, &pre, h, ms.gate[l], eps, &tag)?;
                    relu_rows(&mut b, &pre, h, hr, ms.gate[l], &tag)?;
                } else {
                    let e = hidden_preact(&b, arch, n, k, l).with(b.get(VarKey::H { n, k, l }), -1.0);
                    b.row(format!("out{tag}"), e, Sense::Eq, 0.0)?;
                }
                for kp in 0..arch.k {
                    let z = b.get(VarKey::Z { n, kp, k, l });
                    let a = b.get(VarKey::Alpha { i: kp, k, l });
                    let hr = b.get(VarKey::HRelu { n, k: kp, l: l - 1 });
                    let lams: Vec<VarId> = (1..=params.p).map(|p| b.get(VarKey::Lambda { kp, k, l, p })).collect();
                    mccormick_rows(&mut b, z, a, hr, &lams, params, hu, ms.mccormick, &format!("[{n}][{kp}][{k}][{l}]"))?;
                }
            }
        }
    }
    attach_nll_objective(&mut b.model, &mut b.index, &data.y, big_l, eps, ms.diversify)?;
    Ok(b.finish(*arch, params.clone(), ms))
}

/// Affine output layer on the raw features (no hidden layers).
pub fn build_output_layer(data: &Dataset, j: usize, params: &HyperParams) -> Result<BuildArtifact, FormulationError> {
    let arch = ArchSpec { d: data.d(), k: 0, l: 0, j, activation: Activation::Binary };
    check_params(params)?;
    check_data(data, &arch)?;
    let ms = resolve(data, &arch, params);
    let mut b = Builder::new("output_layer");
    declare_weights(&mut b, &arch, params)?;
    output_vars(&mut b, data.n(), j, 0, ms.output)?;
    for n in 0..data.n() {
        for jj in 0..j {
            let e = layer0_preact(&b, &data.x[n], jj).with(b.get(VarKey::H { n, k: jj, l: 0 }), -1.0);
            b.row(format!("out[{n}][{jj}][0]"), e, Sense::Eq, 0.0)?;
        }
    }
    attach_nll_objective(&mut b.model, &mut b.index, &data.y, 0, params.eps, ms.diversify)?;
    Ok(b.finish(arch, params.clone(), ms))
}

/// Lower bound on the binary and output-layer objectives: rows with equal
/// features get equal outputs, so within each group of identical rows every
/// row not of the predicted class costs at least ε.
pub fn identical_rows_bound(data: &Dataset, eps: f64) -> f64 {
    let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for (x, c) in data.x.iter().zip(data.labels()) {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let g = groups.entry(key).or_insert_with(|| vec![0; data.j()]);
        g[c] += 1;
    }
    let lost: usize = groups.values().map(|g| g.iter().sum::<usize>() - g.iter().max().copied().unwrap_or(0)).sum();
    eps * lost as f64
}

/// Closed-form variable and constraint counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Census {
    pub vars: usize,
    pub binaries: usize,
    pub constraints: usize,
}

fn pairs(j: usize) -> usize {
    j * (j - 1) / 2
}

pub fn census(n: usize, arch: &ArchSpec, p: usize) -> Census {
    let (d, k, l, j) = (arch.d, arch.k, arch.l, arch.j);
    let loss_vars = n + n * j + n * pairs(j);
    let loss_rows = n * j + 2 * n * pairs(j);
    if l == 0 {
        return Census {
            vars: d * j + j + loss_vars,
            binaries: n * pairs(j),
            constraints: n * j + loss_rows,
        };
    }
    let alpha = d * k + (l - 1) * k * k + k * j;
    let beta = l * k + j;
    let z = n * (l - 1) * k * k + n * k * j;
    match arch.activation {
        Activation::Binary => Census {
            vars: alpha + beta + n * k * l + z + loss_vars,
            binaries: n * k * l + n * pairs(j),
            constraints: 2 * n * k * l + n * j + 4 * z + loss_rows,
        },
        Activation::Relu => {
            let lambda = ((l - 1) * k * k + k * j) * p;
            Census {
                vars: alpha + beta + 2 * n * k * l + z + lambda + loss_vars,
                binaries: n * k * l + lambda + n * pairs(j),
                constraints: 6 * n * k * l + n * j + 4 * z * p + 3 * ((l - 1) * k * k + k * j) + loss_rows,
            }
        }
    }
}

/// Binary hidden activations and output ranking → a full binary
/// assignment (`h` and `r`) for use as a MIP start. `hidden[l][n][k]`;
/// `scores[n]` orders the outputs (ties to the lower index).
pub fn binary_start(art: &BuildArtifact, hidden: &[Vec<Vec<bool>>], scores: &[Vec<f64>]) -> Vec<(VarId, f64)> {
    let mut out = Vec::new();
    for (l, layer) in hidden.iter().enumerate().take(art.arch.l) {
        for (n, row) in layer.iter().enumerate() {
            for (k, &on) in row.iter().enumerate() {
                if let Some(id) = art.index.get(VarKey::H { n, k, l }) {
                    out.push((id, if on { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    out.extend(ranking_start(art, scores));
    out
}

/// Diversification binaries implied by output scores.
pub fn ranking_start(art: &BuildArtifact, scores: &[Vec<f64>]) -> Vec<(VarId, f64)> {
    let mut out = Vec::new();
    for (n, s) in scores.iter().enumerate() {
        for j in 0..art.arch.j {
            for jp in j + 1..art.arch.j {
                if let Some(id) = art.index.get(VarKey::R { n, j, jp }) {
                    out.push((id, if s[jp] > s[j] { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mipnet_milp::{solve_mip, MipParams, MipStatus};

    fn tiny(n: usize, d: usize, j: usize) -> Dataset {
        let x = (0..n).map(|r| (0..d).map(|i| ((r + i) % 2) as f64).collect()).collect();
        let labels: Vec<usize> = (0..n).map(|r| r % j).collect();
        Dataset::from_labels(x, &labels, j).unwrap()
    }

    #[test]
    fn census_of_smallest_binary_model() {
        let data = tiny(2, 2, 2);
        let arch = ArchSpec::new(2, 1, 1, 2, Activation::Binary);
        let art = build_binary_full(&data, &arch, &HyperParams::default()).unwrap();
        assert_eq!(art.model.num_vars(), 21);
        assert_eq!(art.model.num_constraints(), 32);
        let c = |f: fn(&VarKey) -> bool| art.index.count(f);
        assert_eq!(c(|k| matches!(k, VarKey::Alpha { .. })), 4);
        assert_eq!(c(|k| matches!(k, VarKey::Beta { .. })), 3);
        assert_eq!(c(|k| matches!(k, VarKey::Z { .. })), 4);
        assert_eq!(c(|k| matches!(k, VarKey::R { .. })), 2);
        assert_eq!(art.model.num_binaries(), 2 * 1 * 1 + 2);
        assert_eq!(census(2, &arch, 4), Census { vars: 21, binaries: 4, constraints: 32 });
    }

    #[test]
    fn output_layer_census() {
        let data = tiny(1, 2, 2);
        let art = build_output_layer(&data, 2, &HyperParams::default()).unwrap();
        assert_eq!(art.model.num_vars(), 10);
        assert_eq!(art.model.num_constraints(), 6);
        assert_eq!(census(1, &art.arch, 0).vars, 10);
    }

    #[test]
    fn objective_coefficients() {
        let data = Dataset::from_labels(vec![vec![1.0, 0.0]], &[0], 2).unwrap();
        let art = build_output_layer(&data, 2, &HyperParams::default()).unwrap();
        let obj = art.model.objective_dense();
        assert_eq!(obj[art.var(VarKey::Omega { n: 0 }).0], 1.0);
        assert_eq!(obj[art.var(VarKey::H { n: 0, k: 0, l: 0 }).0], -1.0);
        assert_eq!(obj[art.var(VarKey::H { n: 0, k: 1, l: 0 }).0], 0.0);
    }

    #[test]
    fn nll_values() {
        let y = vec![vec![1.0, 0.0]];
        assert_eq!(linearized_nll_value(&[vec![2.0, 0.0]], &y).unwrap(), 0.0);
        assert_eq!(linearized_nll_value(&[vec![0.0, 3.0]], &y).unwrap(), 3.0);
        let t = softmax_nll(&[vec![2.0, 0.0]], &y).unwrap();
        assert!((t - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
        assert!(linearized_nll_value(&[vec![0.0, 0.0]], &[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn names_parse_back() {
        let data = tiny(3, 2, 3);
        let arch = ArchSpec::new(2, 2, 2, 3, Activation::Relu);
        let art = build_relu_full(&data, &arch, &HyperParams { p: 2, ..HyperParams::default() }).unwrap();
        for (i, v) in art.model.vars().iter().enumerate() {
            let key = VarKey::parse(&v.name).unwrap();
            assert_eq!(art.index.get(key), Some(VarId(i)));
        }
        assert_eq!(VarIndex::from_model(&art.model).unwrap(), art.index);
        assert!(VarKey::parse("alpha[01][0][0]").is_none());
        assert!(VarKey::parse("beta[0]").is_none());
    }

    #[test]
    fn partition_endpoints() {
        let p = HyperParams::default();
        let lows: Vec<f64> = (1..=4).map(|i| p.partition(i).0).collect();
        let highs: Vec<f64> = (1..=4).map(|i| p.partition(i).1).collect();
        assert_eq!(lows, vec![-1.0, -0.5, 0.0, 0.5]);
        assert_eq!(highs, vec![-0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn separable_output_layer_reaches_zero() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let data = Dataset::from_labels(x, &[0, 1, 0], 2).unwrap();
        let art = build_output_layer(&data, 2, &HyperParams::default()).unwrap();
        let s = solve_mip(&art.model, &MipParams { rel_gap: 0.0, ..MipParams::default() });
        assert_eq!(s.status, MipStatus::Optimal);
        assert!(s.objective.abs() < 1e-9);
    }

    #[test]
    fn conflicting_duplicates_cost_eps() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let data = Dataset::from_labels(x, &[0, 1], 2).unwrap();
        let p = HyperParams::default();
        let art = build_output_layer(&data, 2, &p).unwrap();
        let s = solve_mip(&art.model, &MipParams { rel_gap: 0.0, ..MipParams::default() });
        assert!((s.objective - p.eps).abs() < 1e-9, "{}", s.objective);
        assert!((identical_rows_bound(&data, p.eps) - p.eps).abs() < 1e-15);
    }

    #[test]
    fn relu_census_matches() {
        for (n, d, k, l, j, p) in [(2, 2, 1, 1, 2, 1), (3, 1, 2, 2, 3, 2), (1, 3, 2, 3, 2, 4)] {
            let data = tiny(n, d, j);
            let arch = ArchSpec::new(d, k, l, j, Activation::Relu);
            let art = build_relu_full(&data, &arch, &HyperParams { p, ..HyperParams::default() }).unwrap();
            let c = census(n, &arch, p);
            assert_eq!(art.model.num_vars(), c.vars);
            assert_eq!(art.model.num_binaries(), c.binaries);
            assert_eq!(art.model.num_constraints(), c.constraints);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = tiny(2, 2, 2);
        let relu = ArchSpec::new(2, 1, 1, 2, Activation::Relu);
        assert!(build_relu_full(&data, &relu, &HyperParams { p: 0, ..HyperParams::default() }).is_err());
        assert!(build_relu_full(&data, &relu, &HyperParams { hrelu_ub: Some(0.0), ..HyperParams::default() }).is_err());
        let bin0 = ArchSpec::new(2, 1, 0, 2, Activation::Binary);
        assert!(build_binary_full(&data, &bin0, &HyperParams::default()).is_err());
    }
}
