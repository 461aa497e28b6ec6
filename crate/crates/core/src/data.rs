//! XOR parity benchmark and dataset CSV persistence.
//!
//! Random streams: all draws come from ChaCha8 seeded with `seed` and split
//! by ChaCha stream id — 0 train features, 1 train label noise, 2 test
//! features, 3 test label noise. A feature bit is the top bit of one
//! `next_u64`; a uniform is `(next_u64 >> 11) * 2^-53`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const XOR_D: usize = 5;
pub const XOR_J: usize = 2;

pub const STREAM_TRAIN_FEATURES: u64 = 0;
pub const STREAM_TRAIN_NOISE: u64 = 1;
pub const STREAM_TEST_FEATURES: u64 = 2;
pub const STREAM_TEST_NOISE: u64 = 3;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("noise_p must be in [0, 0.5), got {0}")]
    InvalidNoise(f64),
    #[error("n must be at least 1")]
    Empty,
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: label row is not one-hot")]
    NotOneHot { line: usize },
    #[error("row {row}: {msg}")]
    Shape { row: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    /// One-hot rows.
    pub y: Vec<Vec<f64>>,
    pub seed: Option<u64>,
    pub noise_p: Option<f64>,
}

fn one_hot_class(row: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (j, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(j);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Result<Self, DataError> {
        if x.is_empty() {
            return Err(DataError::Empty);
        }
        if x.len() != y.len() {
            return Err(DataError::Shape { row: x.len().min(y.len()), msg: "X and Y row counts differ".into() });
        }
        let (d, j) = (x[0].len(), y[0].len());
        for (n, (xr, yr)) in x.iter().zip(&y).enumerate() {
            if xr.len() != d || yr.len() != j {
                return Err(DataError::Shape { row: n, msg: "ragged row".into() });
            }
            if xr.iter().any(|v| !v.is_finite()) {
                return Err(DataError::Shape { row: n, msg: "non-finite feature".into() });
            }
            if one_hot_class(yr).is_none() {
                return Err(DataError::NotOneHot { line: n + 1 });
            }
        }
        Ok(Self { x, y, seed: None, noise_p: None })
    }

    /// Builds from class indices.
    pub fn from_labels(x: Vec<Vec<f64>>, labels: &[usize], classes: usize) -> Result<Self, DataError> {
        let y = labels
            .iter()
            .map(|&c| {
                let mut r = vec![0.0; classes];
                r[c] = 1.0;
                r
            })
            .collect();
        Self::new(x, y)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn d(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn j(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.y.iter().map(|r| one_hot_class(r).expect("validated one-hot")).collect()
    }

    /// Same labels, different features (greedy re-input).
    pub fn with_features(&self, x: Vec<Vec<f64>>) -> Self {
        assert_eq!(x.len(), self.n());
        Self { x, y: self.y.clone(), seed: self.seed, noise_p: self.noise_p }
    }
}

/// Clean XOR label: parity of x1, x3, x5 (1-based), odd → class 1.
pub fn parity_label(x: &[f64]) -> usize {
    let ones = [0, 2, 4].iter().filter(|&&i| x[i] >= 0.5).count();
    ones % 2
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `n` rows drawn uniformly from {0,1}^5 on the given streams, labels
/// flipped with probability `noise_p`.
pub fn gen_xor_streams(
    n: usize,
    seed: u64,
    noise_p: f64,
    feature_stream: u64,
    noise_stream: u64,
) -> Result<Dataset, DataError> {
    if !(0.0..0.5).contains(&noise_p) {
        return Err(DataError::InvalidNoise(noise_p));
    }
    if n == 0 {
        return Err(DataError::Empty);
    }
    let mut feat = ChaCha8Rng::seed_from_u64(seed);
    feat.set_stream(feature_stream);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(noise_stream);
    let mut x = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..XOR_D).map(|_| (feat.next_u64() >> 63) as f64).collect();
        let mut c = parity_label(&row);
        if uniform(&mut noise) < noise_p {
            c = 1 - c;
        }
        x.push(row);
        labels.push(c);
    }
    let mut ds = Dataset::from_labels(x, &labels, XOR_J)?;
    ds.seed = Some(seed);
    ds.noise_p = Some(noise_p);
    Ok(ds)
}

pub fn gen_xor(n: usize, seed: u64, noise_p: f64) -> Result<Dataset, DataError> {
    gen_xor_streams(n, seed, noise_p, STREAM_TRAIN_FEATURES, STREAM_TRAIN_NOISE)
}

/// Train and test splits from one seed on disjoint streams.
pub fn gen_xor_split(n_train: usize, n_test: usize, seed: u64, noise_p: f64) -> Result<(Dataset, Dataset), DataError> {
    let train = gen_xor(n_train, seed, noise_p)?;
    let test = gen_xor_streams(n_test, seed, noise_p, STREAM_TEST_FEATURES, STREAM_TEST_NOISE)?;
    Ok((train, test))
}

/// All 2^5 inputs with clean labels.
pub fn xor_truth_table() -> Dataset {
    let x: Vec<Vec<f64>> = (0..32u32).map(|m| (0..XOR_D).map(|i| f64::from((m >> i) & 1)).collect()).collect();
    let labels: Vec<usize> = x.iter().map(|r| parity_label(r)).collect();
    Dataset::from_labels(x, &labels, XOR_J).expect("valid table")
}

pub fn to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    if ds.seed.is_some() || ds.noise_p.is_some() {
        out.push('#');
        if let Some(s) = ds.seed {
            let _ = write!(out, " seed={s}");
        }
        if let Some(p) = ds.noise_p {
            let _ = write!(out, " noise_p={p}");
        }
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> =
        (1..=ds.d()).map(|i| format!("x{i}")).chain((0..ds.j()).map(|j| format!("y{j}"))).collect();
    w.write_record(&header).expect("in-memory write");
    for (xr, yr) in ds.x.iter().zip(&ds.y) {
        let rec: Vec<String> = xr.iter().chain(yr).map(|v| v.to_string()).collect();
        w.write_record(&rec).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
    out
}

pub fn from_csv(text: &str) -> Result<Dataset, DataError> {
    let (mut seed, mut noise_p) = (None, None);
    let mut body = text;
    let mut skipped = 0;
    if let Some(first) = text.lines().next() {
        if let Some(meta) = first.strip_prefix('#') {
            for tok in meta.split_whitespace() {
                match tok.split_once('=') {
                    Some(("seed", v)) => {
                        seed = Some(v.parse().map_err(|_| DataError::Malformed { line: 1, msg: format!("bad seed `{v}`") })?)
                    }
                    Some(("noise_p", v)) => {
                        noise_p =
                            Some(v.parse().map_err(|_| DataError::Malformed { line: 1, msg: format!("bad noise_p `{v}`") })?)
                    }
                    _ => {}
                }
            }
            body = &text[first.len()..];
            body = body.strip_prefix('\n').unwrap_or(body);
            skipped = 1;
        }
    }
    if body.trim().is_empty() {
        return Err(DataError::Empty);
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = rdr.headers()?.clone();
    let d = header.iter().filter(|h| h.starts_with('x')).count();
    let j = header.iter().filter(|h| h.starts_with('y')).count();
    if d == 0 || j == 0 || d + j != header.len() {
        return Err(DataError::Malformed { line: skipped + 1, msg: "header must be x1..xd,y0..".into() });
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let line = skipped + r + 2;
        let rec = rec.map_err(|e| DataError::Malformed { line, msg: e.to_string() })?;
        if rec.len() != d + j {
            return Err(DataError::Malformed { line, msg: format!("expected {} columns, got {}", d + j, rec.len()) });
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| DataError::Malformed { line, msg: format!("bad number `{s}`") }))
            .collect::<Result<_, _>>()?;
        let yr = vals[d..].to_vec();
        if one_hot_class(&yr).is_none() {
            return Err(DataError::NotOneHot { line });
        }
        x.push(vals[..d].to_vec());
        y.push(yr);
    }
    let mut ds = Dataset::new(x, y)?;
    ds.seed = seed;
    ds.noise_p = noise_p;
    Ok(ds)
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    fs::write(path, to_csv(ds))?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    from_csv(&fs::read_to_string(path)?)
}
