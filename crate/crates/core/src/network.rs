//! Cross-holding network model, validation, random generators and the
//! JSON network file format.

use std::fmt;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{DenseMatrix, DenseVector};

/// Slack allowed on asset-share row sums.
pub const ASSET_ROW_SUM_TOL: f64 = 1e-12;
/// Largest column sum of a generated cross-holding matrix.
pub const MAX_GENERATED_COLUMN_SUM: f64 = 0.99;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("company {company}: external fraction {value} is not positive")]
    NonPositiveExternalFraction { company: usize, value: f64 },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("network file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Companies `N = {0..n}` holding fractions of each other and of `m` assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct FinancialNetwork {
    /// `c[(i, j)]` is the fraction of company `j` owned by company `i`.
    pub c: DenseMatrix,
    /// `d[(i, h)]` is company `i`'s share of asset `h`.
    pub d: DenseMatrix,
    pub p: DenseVector,
    /// Failure thresholds on market value.
    pub v_lo: DenseVector,
    pub beta: f64,
}

/// One breached network invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Dimensions { detail: String },
    NonFinite { field: &'static str },
    SelfHolding { company: usize, value: f64 },
    NegativeHolding { holder: usize, held: usize, value: f64 },
    NonPositiveExternalFraction { company: usize, value: f64 },
    AssetShareOutOfRange { company: usize, asset: usize, value: f64 },
    AssetRowSumExceeded { company: usize, sum: f64 },
    NonPositivePrice { asset: usize, value: f64 },
    NegativeBeta { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimensions { detail } => write!(f, "dimension mismatch: {detail}"),
            Violation::NonFinite { field } => write!(f, "non-finite entry in {field}"),
            Violation::SelfHolding { company, value } => {
                write!(f, "self-holding at company {company} ({value})")
            }
            Violation::NegativeHolding { holder, held, value } => {
                write!(f, "negative holding of company {held} by {holder} ({value})")
            }
            Violation::NonPositiveExternalFraction { company, value } => {
                write!(f, "c_hat not positive at company {company} ({value})")
            }
            Violation::AssetShareOutOfRange { company, asset, value } => {
                write!(f, "asset share D[{company},{asset}] = {value} outside [0,1]")
            }
            Violation::AssetRowSumExceeded { company, sum } => {
                write!(f, "asset shares of company {company} sum to {sum} > 1")
            }
            Violation::NonPositivePrice { asset, value } => {
                write!(f, "price of asset {asset} is not positive ({value})")
            }
            Violation::NegativeBeta { value } => write!(f, "failure cost {value} is negative"),
        }
    }
}

impl FinancialNetwork {
    pub fn n(&self) -> usize {
        self.c.rows()
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    /// External investment vector `D p`.
    pub fn external_investment(&self) -> DenseVector {
        self.d.mul_vec(&self.p)
    }

    /// Out-degree of every company (number of companies it holds shares in).
    pub fn out_degrees(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                self.c
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|&(l, &v)| l != i && v != 0.0)
                    .count()
            })
            .collect()
    }

    /// Every invariant breach; empty iff the network is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.c.rows();
        let m = self.p.len();
        if self.c.cols() != n || self.d.rows() != n || self.d.cols() != m || self.v_lo.len() != n {
            out.push(Violation::Dimensions {
                detail: format!(
                    "C {}x{}, D {}x{}, p {}, v_lo {}",
                    self.c.rows(),
                    self.c.cols(),
                    self.d.rows(),
                    self.d.cols(),
                    m,
                    self.v_lo.len()
                ),
            });
            return out;
        }
        for (field, ok) in [
            ("C", self.c.is_finite()),
            ("D", self.d.is_finite()),
            ("p", self.p.is_finite()),
            ("v_lo", self.v_lo.is_finite()),
            ("beta", self.beta.is_finite()),
        ] {
            if !ok {
                out.push(Violation::NonFinite { field });
            }
        }
        if !out.is_empty() {
            return out;
        }
        for i in 0..n {
            for l in 0..n {
                let v = self.c[(i, l)];
                if i == l && v != 0.0 {
                    out.push(Violation::SelfHolding { company: i, value: v });
                } else if v < 0.0 {
                    out.push(Violation::NegativeHolding {
                        holder: i,
                        held: l,
                        value: v,
                    });
                }
            }
        }
        for (company, value) in external_fractions(&self.c).into_iter().enumerate() {
            if value <= 0.0 {
                out.push(Violation::NonPositiveExternalFraction { company, value });
            }
        }
        for i in 0..n {
            let mut sum = 0.0;
            for h in 0..m {
                let v = self.d[(i, h)];
                sum += v;
                if !(0.0..=1.0).contains(&v) {
                    out.push(Violation::AssetShareOutOfRange {
                        company: i,
                        asset: h,
                        value: v,
                    });
                }
            }
            if sum > 1.0 + ASSET_ROW_SUM_TOL {
                out.push(Violation::AssetRowSumExceeded { company: i, sum });
            }
        }
        for h in 0..m {
            if self.p[h] <= 0.0 {
                out.push(Violation::NonPositivePrice {
                    asset: h,
                    value: self.p[h],
                });
            }
        }
        if self.beta < 0.0 {
            out.push(Violation::NegativeBeta { value: self.beta });
        }
        out
    }
}

fn external_fractions(c: &DenseMatrix) -> Vec<f64> {
    let n = c.rows();
    (0..n)
        .map(|i| 1.0 - (0..n).filter(|&j| j != i).map(|j| c[(j, i)]).sum::<f64>())
        .collect()
}

/// Diagonal of `C_hat`: the fraction of each company held externally.
#[derive(Debug, Clone, PartialEq)]
pub struct CHat {
    pub diag: DenseVector,
}

impl CHat {
    pub fn get(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `C_hat * x`.
    pub fn apply(&self, x: &DenseVector) -> DenseVector {
        self.diag.hadamard(x)
    }

    /// `C_hat^{-1} * x`.
    pub fn apply_inv(&self, x: &DenseVector) -> DenseVector {
        DenseVector::from_fn(x.len(), |i| x[i] / self.diag[i])
    }
}

/// `c_hat_ii = 1 - sum_{j != i} c_ji`.
pub fn c_hat(net: &FinancialNetwork) -> Result<CHat, NetworkError> {
    let diag = external_fractions(&net.c);
    if let Some((company, &value)) = diag.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(NetworkError::NonPositiveExternalFraction { company, value });
    }
    Ok(CHat { diag: diag.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkKind {
    /// Each ordered pair is linked independently with `link_prob`.
    UniformRandom { link_prob: f64 },
    /// Out-degrees follow `P(k) ~ k^-exponent` on `1..n-1`.
    PowerLaw { exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkGenSpec {
    #[serde(flatten)]
    pub kind: NetworkKind,
    pub n: usize,
    /// Holding per link; defaults to `1 / (10 n)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub seed: u64,
}

impl NetworkGenSpec {
    pub fn uniform(n: usize, link_prob: f64, seed: u64) -> Self {
        Self {
            kind: NetworkKind::UniformRandom { link_prob },
            n,
            weight: None,
            seed,
        }
    }

    pub fn power_law(n: usize, exponent: f64, seed: u64) -> Self {
        Self {
            kind: NetworkKind::PowerLaw { exponent },
            n,
            weight: None,
            seed,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = Some(weight);
        self
    }

    pub fn link_weight(&self) -> f64 {
        self.weight.unwrap_or(1.0 / (10.0 * self.n as f64))
    }

    fn check(&self) -> Result<(), NetworkError> {
        let bad = |msg: String| Err(NetworkError::InvalidSpec(msg));
        if self.n == 0 {
            return bad("n must be positive".to_string());
        }
        match self.kind {
            NetworkKind::UniformRandom { link_prob } if !(0.0..=1.0).contains(&link_prob) => {
                return bad(format!("link probability {link_prob} outside [0, 1]"));
            }
            NetworkKind::PowerLaw { exponent } if exponent.is_nan() || exponent <= 1.0 => {
                return bad(format!("power-law exponent {exponent} must exceed 1"));
            }
            _ => {}
        }
        let w = self.link_weight();
        if !(0.0..1.0).contains(&w) {
            return bad(format!("link weight {w} outside [0, 1)"));
        }
        Ok(())
    }
}

/// A generated cross-holding matrix before market data is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSkeleton {
    pub c: DenseMatrix,
    /// Mean out-degree of the realized graph.
    pub mean_degree: f64,
    /// Weight actually used per link (smaller than requested when the
    /// requested weight would push a column sum to `MAX_GENERATED_COLUMN_SUM`).
    pub weight: f64,
}

impl NetworkSkeleton {
    pub fn attach(self, d: DenseMatrix, p: DenseVector, v_lo: DenseVector, beta: f64) -> FinancialNetwork {
        FinancialNetwork {
            c: self.c,
            d,
            p,
            v_lo,
            beta,
        }
    }
}

/// The seeded generator used throughout: xoshiro256++ with its state
/// expanded from the 64-bit seed by SplitMix64.
pub fn seeded_rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Draws a cross-holding matrix; deterministic in `spec.seed`.
pub fn generate(spec: &NetworkGenSpec) -> Result<NetworkSkeleton, NetworkError> {
    spec.check()?;
    let n = spec.n;
    let mut rng = seeded_rng(spec.seed);
    let mut links = vec![false; n * n];
    match spec.kind {
        NetworkKind::UniformRandom { link_prob } => {
            for i in 0..n {
                for l in 0..n {
                    if i != l && rng.random_bool(link_prob) {
                        links[i * n + l] = true;
                    }
                }
            }
        }
        NetworkKind::PowerLaw { exponent } => {
            if n > 1 {
                let weights: Vec<f64> = (1..n).map(|k| (k as f64).powf(-exponent)).collect();
                let degree_dist = WeightedIndex::new(&weights).map_err(|e| NetworkError::InvalidSpec(e.to_string()))?;
                for i in 0..n {
                    let degree = degree_dist.sample(&mut rng) + 1;
                    for t in index::sample(&mut rng, n - 1, degree) {
                        let l = if t >= i { t + 1 } else { t };
                        links[i * n + l] = true;
                    }
                }
            }
        }
    }

    let mut in_degree = vec![0usize; n];
    let mut total = 0usize;
    for i in 0..n {
        for l in 0..n {
            if links[i * n + l] {
                in_degree[l] += 1;
                total += 1;
            }
        }
    }
    let mut weight = spec.link_weight();
    let max_in = in_degree.iter().copied().max().unwrap_or(0) as f64;
    if max_in * weight >= MAX_GENERATED_COLUMN_SUM {
        weight = MAX_GENERATED_COLUMN_SUM / max_in;
    }
    let c = DenseMatrix::from_fn(n, n, |i, l| if links[i * n + l] { weight } else { 0.0 });
    Ok(NetworkSkeleton {
        c,
        mean_degree: total as f64 / n as f64,
        weight,
    })
}

#[derive(Clone, Serialize, Deserialize)]
struct NetworkFile {
    n: usize,
    m: usize,
    beta: f64,
    p: Vec<f64>,
    v_lo: Vec<f64>,
    #[serde(rename = "C")]
    c: Vec<(usize, usize, f64)>,
    #[serde(rename = "D")]
    d: Vec<(usize, usize, f64)>,
}

impl From<FinancialNetwork> for NetworkFile {
    fn from(net: FinancialNetwork) -> Self {
        Self {
            n: net.n(),
            m: net.m(),
            beta: net.beta,
            p: net.p.as_slice().to_vec(),
            v_lo: net.v_lo.as_slice().to_vec(),
            c: net.c.triplets(),
            d: net.d.triplets(),
        }
    }
}

impl TryFrom<NetworkFile> for FinancialNetwork {
    type Error = NetworkError;

    fn try_from(file: NetworkFile) -> Result<Self, NetworkError> {
        if file.p.len() != file.m || file.v_lo.len() != file.n {
            return Err(NetworkError::Format(format!(
                "p has {} entries for m = {}, v_lo has {} for n = {}",
                file.p.len(),
                file.m,
                file.v_lo.len(),
                file.n
            )));
        }
        Ok(Self {
            c: from_triplets("C", file.n, file.n, &file.c)?,
            d: from_triplets("D", file.n, file.m, &file.d)?,
            p: file.p.into(),
            v_lo: file.v_lo.into(),
            beta: file.beta,
        })
    }
}

fn from_triplets(
    name: &str,
    rows: usize,
    cols: usize,
    triplets: &[(usize, usize, f64)],
) -> Result<DenseMatrix, NetworkError> {
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut seen = std::collections::HashSet::new();
    for &(i, j, v) in triplets {
        if i >= rows || j >= cols {
            return Err(NetworkError::Format(format!(
                "{name} triplet ({i}, {j}) outside {rows}x{cols}"
            )));
        }
        if !seen.insert((i, j)) {
            return Err(NetworkError::Format(format!("{name} triplet ({i}, {j}) repeated")));
        }
        out[(i, j)] = v;
    }
    Ok(out)
}

impl FinancialNetwork {
    pub fn to_json(&self) -> Result<String, NetworkError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn write_file(&self, path: &Path) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self, NetworkError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
