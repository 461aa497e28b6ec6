//! Mini-batch SGD on the soft-max NLL with hand-written gradients: the
//! comparison baseline, and a source of warm starts for the MIP.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::formulations::{Activation, ArchSpec};
use crate::network::{argmax, TrainedNet};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgdActivation {
    Relu,
    /// Forward `1[z ≥ 0]`, backward identity on `|z| ≤ 1`.
    BinarySte,
}

impl From<Activation> for SgdActivation {
    fn from(a: Activation) -> Self {
        match a {
            Activation::Binary => SgdActivation::BinarySte,
            Activation::Relu => SgdActivation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum SgdInit {
    #[default]
    RandomUniform,
    WarmStart(FloatNet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub activation: SgdActivation,
    #[serde(skip)]
    pub init: SgdInit,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { epochs: 10_000, learning_rate: 0.1, batch_size: 32, seed: 0, activation: SgdActivation::Relu, init: SgdInit::RandomUniform }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SgdError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss diverged at epoch {epoch}")]
    Diverged { epoch: usize, net: Box<FloatNet>, curve: Vec<f64> },
}

/// Unconstrained dense net; `weights[l][i][k]` as in `TrainedNet`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatNet {
    pub activation: SgdActivation,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

struct Trace {
    /// Layer inputs: `acts[0] = x`, `acts[l]` = hidden output `l − 1`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    out: Vec<f64>,
}

impl FloatNet {
    pub fn random(arch: &ArchSpec, activation: SgdActivation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..=arch.l {
            let fan_in = if l == 0 { arch.d } else { arch.k };
            let fan_out = if l == arch.l { arch.j } else { arch.k };
            weights.push((0..fan_in).map(|_| (0..fan_out).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect());
            biases.push((0..fan_out).map(|_| rng.gen_range(-0.5..0.5)).collect());
        }
        Self { activation, weights, biases }
    }

    /// Same predictions as `net`: binary thresholds move from ε/2 to 0.
    pub fn from_trained(net: &TrainedNet) -> Self {
        let mut biases = net.biases.clone();
        let hidden = net.hidden_layers();
        if net.activation == Activation::Binary {
            for b in biases.iter_mut().take(hidden) {
                b.iter_mut().for_each(|v| *v -= net.eps / 2.0);
            }
        }
        Self { activation: net.activation.into(), weights: net.weights.clone(), biases }
    }

    /// Same predictions as `self`, as a `TrainedNet` with ε = 0 (its ε/2
    /// threshold then matches `1[z ≥ 0]`). Weights are not clamped.
    pub fn to_trained(&self) -> TrainedNet {
        let activation = match self.activation {
            SgdActivation::Relu => Activation::Relu,
            SgdActivation::BinarySte => Activation::Binary,
        };
        TrainedNet { activation, weights: self.weights.clone(), biases: self.biases.clone(), eps: 0.0 }
    }

    pub fn hidden_layers(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.biases.last().map_or(0, Vec::len)
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().zip(&self.biases).map(|(w, b)| w.len() * b.len() + b.len()).sum()
    }

    fn act(&self, z: f64) -> f64 {
        match self.activation {
            SgdActivation::Relu => z.max(0.0),
            SgdActivation::BinarySte => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn act_grad(&self, z: f64) -> f64 {
        match self.activation {
            SgdActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SgdActivation::BinarySte => {
                if z.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn affine(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let mut out = self.biases[l].clone();
        for (xi, row) in input.iter().zip(&self.weights[l]) {
            if *xi != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += w * xi;
                }
            }
        }
        out
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::new();
        for l in 0..self.hidden_layers() {
            let z = self.affine(l, &acts[l]);
            acts.push(z.iter().map(|&v| self.act(v)).collect());
            pre.push(z);
        }
        let out = self.affine(self.hidden_layers(), &acts[self.hidden_layers()]);
        Trace { acts, pre, out }
    }

    /// Hidden activations per layer and output scores.
    pub fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let t = self.trace(x);
        (t.acts.into_iter().skip(1).collect(), t.out)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.trace(x).out)
    }

    /// Mean soft-max NLL over the rows.
    pub fn loss(&self, x: &[Vec<f64>], labels: &[usize]) -> f64 {
        let total: f64 = x.iter().zip(labels).map(|(r, &c)| nll(&self.trace(r).out, c)).sum();
        total / x.len().max(1) as f64
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let labels = data.labels();
        let hits = data.x.iter().zip(&labels).filter(|(r, &c)| self.predict(r) == c).count();
        hits as f64 / data.n().max(1) as f64
    }

    fn zeros_like(&self) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        (
            self.weights.iter().map(|w| w.iter().map(|r| vec![0.0; r.len()]).collect()).collect(),
            self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        )
    }

    /// Gradient of the mean NLL over `rows`.
    pub fn gradient(&self, x: &[Vec<f64>], labels: &[usize], rows: &[usize]) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let (mut gw, mut gb) = self.zeros_like();
        let scale = 1.0 / rows.len().max(1) as f64;
        let top = self.hidden_layers();
        for &n in rows {
            let t = self.trace(&x[n]);
            let mut delta = softmax(&t.out);
            delta[labels[n]] -= 1.0;
            for l in (0..=top).rev() {
                for (i, &a) in t.acts[l].iter().enumerate() {
                    if a != 0.0 {
                        for (g, d) in gw[l][i].iter_mut().zip(&delta) {
                            *g += scale * a * d;
                        }
                    }
                }
                for (g, d) in gb[l].iter_mut().zip(&delta) {
                    *g += scale * d;
                }
                if l > 0 {
                    delta = (0..self.weights[l].len())
                        .map(|i| {
                            let back: f64 = self.weights[l][i].iter().zip(&delta).map(|(w, d)| w * d).sum();
                            back * self.act_grad(t.pre[l - 1][i])
                        })
                        .collect();
                }
            }
        }
        (gw, gb)
    }

    fn step(&mut self, gw: &[Vec<Vec<f64>>], gb: &[Vec<f64>], lr: f64) {
        for (w, g) in self.weights.iter_mut().flatten().flatten().zip(gw.iter().flatten().flatten()) {
            *w -= lr * g;
        }
        for (b, g) in self.biases.iter_mut().flatten().zip(gb.iter().flatten()) {
            *b -= lr * g;
        }
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut v: Vec<&mut f64> = self.weights.iter_mut().flatten().flatten().collect();
        v.extend(self.biases.iter_mut().flatten());
        v
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn nll(z: &[f64], c: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - z[c]
}

fn check_config(cfg: &SgdConfig) -> Result<(), SgdError> {
    if cfg.epochs == 0 {
        return Err(SgdError::Config("epochs must be at least 1".into()));
    }
    if !(cfg.learning_rate >= 0.0) || !cfg.learning_rate.is_finite() {
        return Err(SgdError::Config("learning_rate must be finite and non-negative".into()));
    }
    if cfg.batch_size == 0 {
        return Err(SgdError::Config("batch_size must be at least 1".into()));
    }
    Ok(())
}

/// Trains from `config.init`. The loss curve has `epochs + 1` entries; the
/// first is the loss before any update.
pub fn train_sgd(data: &Dataset, arch: &ArchSpec, config: &SgdConfig) -> Result<(FloatNet, Vec<f64>), SgdError> {
    check_config(config)?;
    if data.d() != arch.d || data.j() != arch.j {
        return Err(SgdError::Shape(format!("data is d={} J={}, net expects d={} J={}", data.d(), data.j(), arch.d, arch.j)));
    }
    let mut net = match &config.init {
        SgdInit::RandomUniform => FloatNet::random(arch, config.activation, config.seed),
        SgdInit::WarmStart(n) => {
            if n.input_dim() != arch.d || n.output_dim() != arch.j {
                return Err(SgdError::Shape("warm start does not fit the data".into()));
            }
            n.clone()
        }
    };
    let labels = data.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut curve = Vec::with_capacity(config.epochs + 1);
    curve.push(net.loss(&data.x, &labels));
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let (gw, gb) = net.gradient(&data.x, &labels, batch);
            net.step(&gw, &gb, config.learning_rate);
        }
        let loss = net.loss(&data.x, &labels);
        curve.push(loss);
        if !loss.is_finite() {
            return Err(SgdError::Diverged { epoch, net: Box::new(net), curve });
        }
    }
    Ok((net, curve))
}

/// Layer-wise SGD: each layer is the hidden layer of a fresh 1-hidden-layer
/// net trained on the frozen stack's outputs; the last subproblem also
/// supplies the output layer.
pub fn greedy_sgd(data: &Dataset, l: usize, k: usize, config: &SgdConfig) -> Result<FloatNet, SgdError> {
    if l == 0 || k == 0 {
        return Err(SgdError::Config("greedy training needs L ≥ 1 and K ≥ 1".into()));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut input = data.clone();
    for layer in 0..l {
        let arch = ArchSpec::new(input.d(), k, 1, data.j(), Activation::Relu);
        let cfg = SgdConfig { seed: config.seed.wrapping_add(layer as u64), init: SgdInit::RandomUniform, ..config.clone() };
        let (sub, _) = train_sgd(&input, &arch, &cfg)?;
        let hidden: Vec<Vec<f64>> = input.x.iter().map(|r| sub.forward(r).0.remove(0)).collect();
        weights.push(sub.weights[0].clone());
        biases.push(sub.biases[0].clone());
        if layer + 1 == l {
            weights.push(sub.weights[1].clone());
            biases.push(sub.biases[1].clone());
        }
        input = input.with_features(hidden);
    }
    Ok(FloatNet { activation: config.activation, weights, biases })
}

/// Largest relative difference between the analytic gradient of the mean
/// NLL on `batch` and central differences. ReLU only: the straight-through
/// surrogate is not a derivative.
pub fn gradient_check(net: &FloatNet, batch: &Dataset) -> f64 {
    assert_eq!(net.activation, SgdActivation::Relu, "gradient check needs ReLU");
    const H: f64 = 1e-5;
    let labels = batch.labels();
    let rows: Vec<usize> = (0..batch.n()).collect();
    let (gw, gb) = net.gradient(&batch.x, &labels, &rows);
    let analytic: Vec<f64> = gw.iter().flatten().flatten().chain(gb.iter().flatten()).copied().collect();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (p, a) in analytic.iter().enumerate() {
        let orig = *probe.params_mut()[p];
        *probe.params_mut()[p] = orig + H;
        let up = probe.loss(&batch.x, &labels);
        *probe.params_mut()[p] = orig - H;
        let down = probe.loss(&batch.x, &labels);
        *probe.params_mut()[p] = orig;
        let num = (up - down) / (2.0 * H);
        let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parity_net;

    fn two_points() -> Dataset {
        Dataset::from_labels(vec![vec![0.0, 1.0], vec![1.0, 0.0]], &[0, 1], 2).unwrap()
    }

    #[test]
    fn separable_pair_is_learned() {
        let cfg = SgdConfig { epochs: 500, ..SgdConfig::default() };
        let (net, curve) = train_sgd(&two_points(), &ArchSpec::new(2, 3, 1, 2, Activation::Relu), &cfg).unwrap();
        assert_eq!(net.accuracy(&two_points()), 1.0);
        assert_eq!(curve.len(), 501);
        assert!(curve[500] < curve[0]);
    }

    #[test]
    fn zero_rate_keeps_parameters() {
        let arch = ArchSpec::new(2, 2, 2, 2, Activation::Relu);
        let cfg = SgdConfig { epochs: 5, learning_rate: 0.0, seed: 3, ..SgdConfig::default() };
        let (net, _) = train_sgd(&two_points(), &arch, &cfg).unwrap();
        assert_eq!(net, FloatNet::random(&arch, SgdActivation::Relu, 3));
    }

    #[test]
    fn warm_start_reproduces_source() {
        let source = parity_net();
        let warm = FloatNet::from_trained(&source);
        let data = crate::data::xor_truth_table();
        for x in &data.x {
            assert_eq!(warm.forward(x).0, source.forward(x).0);
            assert_eq!(warm.predict(x), source.predict(x));
        }
        let cfg = SgdConfig {
            epochs: 1,
            activation: SgdActivation::BinarySte,
            init: SgdInit::WarmStart(warm.clone()),
            ..SgdConfig::default()
        };
        let (_, curve) = train_sgd(&data, &source.arch(), &cfg).unwrap();
        assert_eq!(curve[0], warm.loss(&data.x, &data.labels()));
        let back = warm.to_trained();
        for x in &data.x {
            assert_eq!(back.forward(x).0, source.forward(x).0);
        }
    }

    #[test]
    fn seeded_runs_agree() {
        let arch = ArchSpec::new(2, 2, 1, 2, Activation::Binary);
        let cfg = SgdConfig { epochs: 20, activation: SgdActivation::BinarySte, seed: 9, ..SgdConfig::default() };
        assert_eq!(train_sgd(&two_points(), &arch, &cfg).unwrap(), train_sgd(&two_points(), &arch, &cfg).unwrap());
    }

    #[test]
    fn greedy_with_one_layer_is_plain_sgd() {
        let cfg = SgdConfig { epochs: 30, seed: 4, ..SgdConfig::default() };
        let g = greedy_sgd(&two_points(), 1, 3, &cfg).unwrap();
        let (p, _) = train_sgd(&two_points(), &ArchSpec::new(2, 3, 1, 2, Activation::Relu), &cfg).unwrap();
        assert_eq!(g, p);
        let deep = greedy_sgd(&two_points(), 3, 2, &cfg).unwrap();
        assert_eq!(deep.hidden_layers(), 3);
    }

    #[test]
    fn zero_net_has_zero_hidden_gradient() {
        let net = FloatNet {
            activation: SgdActivation::Relu,
            weights: vec![vec![vec![0.0; 2]; 2], vec![vec![0.0; 2]; 2]],
            biases: vec![vec![0.0; 2], vec![0.0; 2]],
        };
        let data = Dataset::from_labels(vec![vec![0.0, 0.0]], &[1], 2).unwrap();
        let (gw, _) = net.gradient(&data.x, &data.labels(), &[0]);
        assert!(gw[0].iter().flatten().all(|&g| g == 0.0));
        assert!(gradient_check(&net, &data) <= 1e-4);
    }

    #[test]
    fn gradient_check_ignores_row_order() {
        let arch = ArchSpec::new(3, 4, 2, 3, Activation::Relu);
        let net = FloatNet::random(&arch, SgdActivation::Relu, 1);
        let x = vec![vec![0.3, -0.7, 1.1], vec![0.9, 0.2, -0.4], vec![-1.0, 0.5, 0.5]];
        let a = Dataset::from_labels(x.clone(), &[0, 2, 1], 3).unwrap();
        let b = Dataset::from_labels(x.into_iter().rev().collect(), &[1, 2, 0], 3).unwrap();
        let (ea, eb) = (gradient_check(&net, &a), gradient_check(&net, &b));
        assert!(ea <= 1e-4 && eb <= 1e-4);
        assert!((ea - eb).abs() < 1e-6);
    }

    #[test]
    fn bad_config_rejected() {
        let arch = ArchSpec::new(2, 2, 1, 2, Activation::Relu);
        for cfg in [
            SgdConfig { epochs: 0, ..SgdConfig::default() },
            SgdConfig { learning_rate: -1.0, ..SgdConfig::default() },
            SgdConfig { batch_size: 0, ..SgdConfig::default() },
        ] {
            assert!(matches!(train_sgd(&two_points(), &arch, &cfg), Err(SgdError::Config(_))));
        }
    }

    #[test]
    fn divergence_reported() {
        let arch = ArchSpec::new(2, 2, 1, 2, Activation::Relu);
        let cfg = SgdConfig { epochs: 50, learning_rate: 1e200, ..SgdConfig::default() };
        match train_sgd(&two_points(), &arch, &cfg) {
            Err(SgdError::Diverged { curve, .. }) => assert!(curve.last().unwrap().is_nan() || curve.last().unwrap().is_infinite()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
