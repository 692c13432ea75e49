//! Community layout and the random directed graph the chains live on.
//!
//! # File format
//!
//! Environments are stored as a single JSON object:
//!
//! ```json
//! {
//!   "format": "mfgraph-environment",
//!   "version": 1,
//!   "params": {"n": 3, "r_plus": 0.5, "beta": 0.5, "lambda": 0.5, "p": 0.5},
//!   "seed": 42,
//!   "layout": {"plus_count": 2, "labels": [1, 1, -1]},
//!   "theta": {"encoding": "hex", "rows": ["05", "07", "00"]}
//! }
//! ```
//!
//! `theta.rows[i]` encodes row i of the 0/1 matrix. With `"encoding": "hex"`
//! each row is `ceil(N/8)` bytes in lowercase hex where column j sits at bit
//! `j % 8` (least significant first) of byte `j / 8`; unused high bits of the
//! last byte must be zero. With `"encoding": "bits"` each row is a string of N
//! characters `0`/`1`, column 0 first.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Community membership: `+1` for the excitatory set, `-1` otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityLayout {
    plus_count: usize,
    labels: Vec<i8>,
}

impl CommunityLayout {
    /// First `ceil(r₊ N)` indices excitatory, the rest inhibitory.
    pub fn canonical(params: &ModelParams) -> Self {
        let n = params.n();
        let k = params.plus_count();
        let labels = (0..n).map(|i| if i < k { 1 } else { -1 }).collect();
        CommunityLayout { plus_count: k, labels }
    }

    /// Same community sizes as [`canonical`](Self::canonical), positions permuted.
    pub fn shuffled(params: &ModelParams, seed: u64) -> Self {
        let mut layout = Self::canonical(params);
        let mut rng = rng_from_seed(derive_seed(seed, &[stream::SHUFFLE]));
        layout.labels.shuffle(&mut rng);
        layout
    }

    pub fn from_labels(labels: Vec<i8>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::Format { what: "layout", reason: format!("label {bad} is not +1 or -1") });
        }
        let plus_count = labels.iter().filter(|&&l| l == 1).count();
        Ok(CommunityLayout { plus_count, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
    pub fn plus_count(&self) -> usize {
        self.plus_count
    }
    pub fn minus_count(&self) -> usize {
        self.labels.len() - self.plus_count
    }
    pub fn labels(&self) -> &[i8] {
        &self.labels
    }
    #[inline]
    pub fn is_plus(&self, j: usize) -> bool {
        self.labels[j] == 1
    }
    #[inline]
    pub fn sign(&self, j: usize) -> f64 {
        self.labels[j] as f64
    }

    /// Indicator vector of the excitatory set, packed.
    pub fn plus_mask(&self) -> Vec<u64> {
        let mut words = vec![0u64; crate::bits::words_for(self.n())];
        for (j, &l) in self.labels.iter().enumerate() {
            if l == 1 {
                words[j / 64] |= 1 << (j % 64);
            }
        }
        words
    }

    fn validate(&self) -> Result<()> {
        let counted = self.labels.iter().filter(|&&l| l == 1).count();
        if counted != self.plus_count || self.labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::Format {
                what: "layout",
                reason: format!("plus_count {} does not match {} positive labels", self.plus_count, counted),
            });
        }
        Ok(())
    }
}

/// A sampled random environment: parameters, communities and the 0/1 graph θ.
///
/// `theta.get(i, j)` is θᵢⱼ, the edge through which component j influences i.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    params: ModelParams,
    layout: CommunityLayout,
    theta: BitMatrix,
    seed: u64,
}

/// Row sums Lᴺ = A1, column sums Cᴺ = 1ᵀA and Lᴺ'⁻ = A1_{P₋}.
#[derive(Debug, Clone, PartialEq)]
pub struct RowColSums {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub row_minus: Vec<f64>,
}

impl Environment {
    /// θᵢⱼ i.i.d. Bernoulli(p), drawn row by row from the seeded stream.
    pub fn sample(params: &ModelParams, layout: &CommunityLayout, seed: u64) -> Result<Self> {
        check_layout(params, layout)?;
        let n = params.n();
        let mut rng = rng_from_seed(derive_seed(seed, &[stream::ENVIRONMENT]));
        let p = params.p();
        let theta = BitMatrix::from_fn(n, n, |_, _| rng.gen_bool(p));
        Ok(Environment { params: *params, layout: layout.clone(), theta, seed })
    }

    /// Wrap a given θ (tests, file input).
    pub fn from_theta(params: &ModelParams, layout: &CommunityLayout, theta: BitMatrix, seed: u64) -> Result<Self> {
        check_layout(params, layout)?;
        if theta.rows() != params.n() || theta.cols() != params.n() {
            return Err(Error::DimensionMismatch { expected: params.n(), got: theta.rows().max(theta.cols()) });
        }
        Ok(Environment { params: *params, layout: layout.clone(), theta, seed })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn layout(&self) -> &CommunityLayout {
        &self.layout
    }
    pub fn theta(&self) -> &BitMatrix {
        &self.theta
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn n(&self) -> usize {
        self.params.n()
    }
    pub fn edge_count(&self) -> u64 {
        self.theta.count_ones()
    }

    /// Aᴺᵢⱼ = ±θᵢⱼ / N with the sign of column j's community.
    pub fn signed_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let inv = 1.0 / n as f64;
        DMatrix::from_fn(n, n, |i, j| if self.theta.get(i, j) { self.layout.sign(j) * inv } else { 0.0 })
    }

    /// Exact sums, computed from integer edge counts.
    pub fn row_col_sums(&self) -> RowColSums {
        let n = self.n();
        let nf = n as f64;
        let mut plus_in = vec![0i64; n];
        let mut minus_in = vec![0i64; n];
        let mut col = vec![0i64; n];
        for i in 0..n {
            for (j, cj) in col.iter_mut().enumerate() {
                if self.theta.get(i, j) {
                    if self.layout.is_plus(j) {
                        plus_in[i] += 1;
                        *cj += 1;
                    } else {
                        minus_in[i] += 1;
                        *cj -= 1;
                    }
                }
            }
        }
        RowColSums {
            row: plus_in.iter().zip(&minus_in).map(|(a, b)| (a - b) as f64 / nf).collect(),
            col: col.iter().map(|&c| c as f64 / nf).collect(),
            row_minus: minus_in.iter().map(|&b| -(b as f64) / nf).collect(),
        }
    }

    pub fn to_json(&self, encoding: ThetaEncoding) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EnvironmentFile::from_env(self, encoding))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: EnvironmentFile = serde_json::from_str(s)?;
        file.into_env()
    }

    pub fn write_file(&self, path: &std::path::Path, encoding: ThetaEncoding) -> Result<()> {
        std::fs::write(path, self.to_json(encoding)?)?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_layout(params: &ModelParams, layout: &CommunityLayout) -> Result<()> {
    if layout.n() != params.n() {
        return Err(Error::DimensionMismatch { expected: params.n(), got: layout.n() });
    }
    layout.validate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThetaEncoding {
    #[default]
    Hex,
    Bits,
}

pub const ENVIRONMENT_FORMAT: &str = "mfgraph-environment";

#[derive(Debug, Serialize, Deserialize)]
struct EnvironmentFile {
    format: String,
    version: u32,
    params: ModelParams,
    seed: u64,
    layout: CommunityLayout,
    theta: ThetaRows,
}

#[derive(Debug, Serialize, Deserialize)]
struct ThetaRows {
    encoding: ThetaEncoding,
    rows: Vec<String>,
}

impl EnvironmentFile {
    fn from_env(env: &Environment, encoding: ThetaEncoding) -> Self {
        let theta = &env.theta;
        let rows = (0..theta.rows())
            .map(|i| match encoding {
                ThetaEncoding::Hex => hex::encode(theta.row_bytes(i)),
                ThetaEncoding::Bits => theta.row_to_vec(i).iter().map(|&b| if b == 1 { '1' } else { '0' }).collect(),
            })
            .collect();
        EnvironmentFile {
            format: ENVIRONMENT_FORMAT.to_string(),
            version: 1,
            params: env.params,
            seed: env.seed,
            layout: env.layout.clone(),
            theta: ThetaRows { encoding, rows },
        }
    }

    fn into_env(self) -> Result<Environment> {
        let bad = |reason: String| Error::Format { what: "environment file", reason };
        if self.format != ENVIRONMENT_FORMAT || self.version != 1 {
            return Err(bad(format!("unsupported format {} v{}", self.format, self.version)));
        }
        let n = self.params.n();
        if self.theta.rows.len() != n {
            return Err(bad(format!("expected {n} theta rows, found {}", self.theta.rows.len())));
        }
        let mut theta = BitMatrix::zeros(n, n);
        for (i, row) in self.theta.rows.iter().enumerate() {
            match self.theta.encoding {
                ThetaEncoding::Hex => {
                    let bytes = hex::decode(row).map_err(|e| bad(format!("row {i}: {e}")))?;
                    if bytes.len() != n.div_ceil(8) {
                        return Err(bad(format!("row {i}: expected {} bytes", n.div_ceil(8))));
                    }
                    if !n.is_multiple_of(8) && bytes[bytes.len() - 1] >> (n % 8) != 0 {
                        return Err(bad(format!("row {i}: nonzero padding bits")));
                    }
                    theta.set_row_from_bytes(i, &bytes);
                }
                ThetaEncoding::Bits => {
                    if row.len() != n {
                        return Err(bad(format!("row {i}: expected {n} characters")));
                    }
                    for (j, ch) in row.chars().enumerate() {
                        match ch {
                            '0' => {}
                            '1' => theta.set(i, j, true),
                            other => return Err(bad(format!("row {i}: invalid character {other:?}"))),
                        }
                    }
                }
            }
        }
        Environment::from_theta(&self.params, &self.layout, theta, self.seed)
    }
}
