//! Trained networks: extraction from MIP incumbents, forward inference,
//! scoring and a plain-text file format.

use std::fmt::Write as _;
use std::path::Path;

use mipnet_milp::MipSolution;
use thiserror::Error;

use crate::data::Dataset;
use crate::formulations::{Activation, ArchSpec, HyperParams, VarIndex, VarKey};

/// Values this far outside a bound are treated as LP noise and clamped.
pub const CLAMP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("solution has no incumbent")]
    NoIncumbent,
    #[error("variable {0} missing from solution")]
    Missing(String),
    #[error("{name} = {value} outside [{lb}, {ub}]")]
    OutOfBounds { name: String, value: f64, lb: f64, ub: f64 },
    #[error("layer shapes do not chain: {0}")]
    Shape(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("net file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNet {
    pub activation: Activation,
    /// `weights[l][i][k]`: input `i` of layer `l` to unit `k`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

fn clamp(name: String, v: f64, lb: f64, ub: f64) -> Result<f64, NetError> {
    if v < lb - CLAMP_TOL || v > ub + CLAMP_TOL || v.is_nan() {
        return Err(NetError::OutOfBounds { name, value: v, lb, ub });
    }
    Ok(v.clamp(lb, ub))
}

/// Reads `alpha`/`beta` of every layer from an incumbent.
pub fn extract_net(sol: &MipSolution, index: &VarIndex, arch: &ArchSpec, params: &HyperParams) -> Result<TrainedNet, NetError> {
    if !sol.has_incumbent() {
        return Err(NetError::NoIncumbent);
    }
    let value = |key: VarKey| -> Result<f64, NetError> {
        let id = index.get(key).ok_or_else(|| NetError::Missing(key.to_string()))?;
        sol.incumbent.get(id.0).copied().ok_or_else(|| NetError::Missing(key.to_string()))
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..=arch.l {
        let fan_in = if l == 0 { arch.d } else { arch.k };
        let fan_out = if l == arch.l { arch.j } else { arch.k };
        let mut w = vec![vec![0.0; fan_out]; fan_in];
        for (i, row) in w.iter_mut().enumerate() {
            for (k, slot) in row.iter_mut().enumerate() {
                let key = VarKey::Alpha { i, k, l };
                *slot = clamp(key.to_string(), value(key)?, params.alpha_lb, params.alpha_ub)?;
            }
        }
        let mut b = vec![0.0; fan_out];
        for (k, slot) in b.iter_mut().enumerate() {
            let key = VarKey::Beta { k, l };
            *slot = clamp(key.to_string(), value(key)?, params.beta_lb, params.beta_ub)?;
        }
        weights.push(w);
        biases.push(b);
    }
    TrainedNet::new(arch.activation, weights, biases, params.eps)
}

impl TrainedNet {
    pub fn new(activation: Activation, weights: Vec<Vec<Vec<f64>>>, biases: Vec<Vec<f64>>, eps: f64) -> Result<Self, NetError> {
        let net = Self { activation, weights, biases, eps };
        net.check()?;
        Ok(net)
    }

    fn check(&self) -> Result<(), NetError> {
        if self.weights.is_empty() || self.weights.len() != self.biases.len() {
            return Err(NetError::Shape("need one bias vector per weight matrix".into()));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.is_empty() {
                return Err(NetError::Shape(format!("layer {l} has no inputs")));
            }
            if w.iter().any(|r| r.len() != b.len()) {
                return Err(NetError::Shape(format!("layer {l} rows disagree with bias length {}", b.len())));
            }
            if l > 0 && w.len() != self.biases[l - 1].len() {
                return Err(NetError::Shape(format!("layer {l} expects {} inputs, previous layer has {}", w.len(), self.biases[l - 1].len())));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.biases.last().map_or(0, Vec::len)
    }

    pub fn hidden_layers(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn width(&self) -> usize {
        if self.hidden_layers() == 0 {
            0
        } else {
            self.biases[0].len()
        }
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec::new(self.input_dim(), self.width(), self.hidden_layers(), self.output_dim(), self.activation)
    }

    fn affine(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let mut out = self.biases[l].clone();
        for (xi, row) in input.iter().zip(&self.weights[l]) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * xi;
            }
        }
        out
    }

    fn activate(&self, pre: f64) -> f64 {
        match self.activation {
            Activation::Binary => {
                if pre >= self.eps / 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu => pre.max(0.0),
        }
    }

    /// Hidden activations of every layer and the output scores.
    pub fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut hidden = Vec::with_capacity(self.hidden_layers());
        let mut cur = x.to_vec();
        for l in 0..self.hidden_layers() {
            let h: Vec<f64> = self.affine(l, &cur).into_iter().map(|p| self.activate(p)).collect();
            hidden.push(h.clone());
            cur = h;
        }
        let out = self.affine(self.hidden_layers(), &cur);
        (hidden, out)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.forward(x).1)
    }

    /// Output of the last hidden layer for each row (the input of the
    /// next greedy subproblem).
    pub fn last_hidden(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.forward(r).0.pop().unwrap_or_else(|| r.clone())).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let act = match self.activation {
            Activation::Binary => "binary",
            Activation::Relu => "relu",
        };
        let _ = writeln!(s, "mipnet-net 1");
        let _ = writeln!(s, "activation {act}");
        let _ = writeln!(s, "eps {:.16e}", self.eps);
        let _ = writeln!(s, "layers {}", self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let _ = writeln!(s, "layer {l} {} {}", w.len(), b.len());
            for row in w {
                let _ = writeln!(s, "{}", join(row));
            }
            let _ = writeln!(s, "{}", join(b));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, NetError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<&str>), NetError> {
            let (i, l) = lines.next().ok_or(NetError::Parse { line: 0, msg: format!("missing {what}") })?;
            Ok((i + 1, l.split_whitespace().collect()))
        };
        let err = |line: usize, msg: &str| NetError::Parse { line, msg: msg.to_string() };
        let (i, head) = next("header")?;
        if head != ["mipnet-net", "1"] {
            return Err(err(i, "expected `mipnet-net 1`"));
        }
        let (i, act) = next("activation")?;
        let activation = match act.as_slice() {
            ["activation", "binary"] => Activation::Binary,
            ["activation", "relu"] => Activation::Relu,
            _ => return Err(err(i, "bad activation line")),
        };
        let (i, e) = next("eps")?;
        let eps = match e.as_slice() {
            ["eps", v] => v.parse::<f64>().map_err(|_| err(i, "bad eps"))?,
            _ => return Err(err(i, "bad eps line")),
        };
        let (i, ls) = next("layers")?;
        let count = match ls.as_slice() {
            ["layers", v] => v.parse::<usize>().map_err(|_| err(i, "bad layer count"))?,
            _ => return Err(err(i, "bad layers line")),
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..count {
            let (i, hdr) = next("layer header")?;
            let (rows, cols) = match hdr.as_slice() {
                ["layer", idx, r, c] if idx.parse::<usize>().ok() == Some(l) => (
                    r.parse::<usize>().map_err(|_| err(i, "bad row count"))?,
                    c.parse::<usize>().map_err(|_| err(i, "bad column count"))?,
                ),
                _ => return Err(err(i, "bad layer header")),
            };
            let mut parse_row = |what: &str| -> Result<Vec<f64>, NetError> {
                let (i, toks) = next(what)?;
                if toks.len() != cols {
                    return Err(err(i, &format!("expected {cols} values")));
                }
                toks.iter().map(|t| t.parse::<f64>().map_err(|_| err(i, "bad number"))).collect()
            };
            let mut w = Vec::with_capacity(rows);
            for _ in 0..rows {
                w.push(parse_row("weight row")?);
            }
            biases.push(parse_row("bias row")?);
            weights.push(w);
        }
        Self::new(activation, weights, biases, eps)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(net: &TrainedNet, data: &Dataset) -> Result<EvalReport, NetError> {
    evaluate_with(|x| net.predict(x), data)
}

pub fn evaluate_with(predict: impl Fn(&[f64]) -> usize, data: &Dataset) -> Result<EvalReport, NetError> {
    if data.n() == 0 {
        return Err(NetError::EmptyDataset);
    }
    let j = data.j();
    let mut confusion = vec![vec![0; j]; j];
    let mut correct = 0;
    for (x, c) in data.x.iter().zip(data.labels()) {
        let p = predict(x).min(j - 1);
        confusion[c][p] += 1;
        correct += usize::from(p == c);
    }
    Ok(EvalReport { accuracy: correct as f64 / data.n() as f64, confusion, n: data.n() })
}

/// Hand-built 3-unit binary net that computes the parity of bits 1, 3, 5
/// exactly: unit k fires when at least k of them are set.
pub fn parity_net() -> TrainedNet {
    let mut w0 = vec![vec![0.0; 3]; 5];
    for i in [0, 2, 4] {
        w0[i] = vec![1.0; 3];
    }
    let b0 = vec![-0.5, -1.5, -2.5];
    // odd count ⇔ h1 − h2 + h3 = 1
    let w1 = vec![vec![-1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
    let b1 = vec![0.5, 0.0];
    TrainedNet::new(Activation::Binary, vec![w0, w1], vec![b0, b1], 0.01).expect("parity net shapes")
}
