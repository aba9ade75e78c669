//! Marginal transforms between data space, pseudo-observations on (0,1)^d
//! and the Gaussian latent scale.
//!
//! Pseudo-observations use the rank/(n+1) convention with average ranks for
//! ties, so training data never touches 0 or 1. Out-of-sample values are
//! mapped through a piecewise-linear empirical CDF clamped to
//! [1/(2(n+1)), 1 - 1/(2(n+1))].

use crate::error::{Error, Result};
use crate::normal::{norm_cdf, norm_quantile};

/// n x d data matrix, row-major, with per-column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Vec<f64>,
    n: usize,
    d: usize,
    column_names: Vec<String>,
}

impl DataMatrix {
    /// Build from row-major values; rejects non-finite entries with their position.
    pub fn new(values: Vec<f64>, d: usize, column_names: Vec<String>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if values.is_empty() || values.len() % d != 0 {
            return Err(Error::invalid(format!(
                "value count {} is not a positive multiple of d={d}",
                values.len()
            )));
        }
        if column_names.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: column_names.len() });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i / d, col: i % d });
            }
        }
        let n = values.len() / d;
        Ok(DataMatrix { values, n, d, column_names })
    }

    pub fn with_default_names(values: Vec<f64>, d: usize) -> Result<Self> {
        let names = (0..d).map(|i| format!("x{i}")).collect();
        Self::new(values, d, names)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.values[i * self.d + j]).collect()
    }
}

/// Pseudo-observations: n x d matrix strictly inside the unit hypercube.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObs {
    values: Vec<f64>,
    n: usize,
    d: usize,
}

impl PseudoObs {
    pub fn new(values: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || values.is_empty() || values.len() % d != 0 {
            return Err(Error::invalid("pseudo-observation matrix must be nonempty n x d"));
        }
        for (i, v) in values.iter().enumerate() {
            if !(*v > 0.0 && *v < 1.0) {
                return Err(Error::invalid(format!(
                    "pseudo-observation {v} at row {}, column {} is outside (0,1)",
                    i / d,
                    i % d
                )));
            }
        }
        let n = values.len() / d;
        Ok(PseudoObs { values, n, d })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// n x d matrix on the Gaussian latent scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    values: Vec<f64>,
    n: usize,
    d: usize,
}

impl LatentMatrix {
    pub fn new(values: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || values.is_empty() || values.len() % d != 0 {
            return Err(Error::invalid("latent matrix must be nonempty n x d"));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i / d, col: i % d });
            }
        }
        let n = values.len() / d;
        Ok(LatentMatrix { values, n, d })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One fitted marginal: the sorted training values plus the interpolation
/// nodes (distinct value, tie-averaged rank position).
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDim {
    sorted_values: Vec<f64>,
    nodes: Vec<(f64, f64)>,
    constant: bool,
}

impl MarginalDim {
    fn fit(mut column: Vec<f64>) -> Self {
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = column.len();
        let constant = column[0] == column[n - 1];
        // Collapse ties into (value, average-rank / (n+1)) nodes.
        let mut nodes = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && column[end] == column[start] {
                end += 1;
            }
            // 1-based ranks start+1 ..= end, averaged.
            let avg_rank = (start + 1 + end) as f64 / 2.0;
            nodes.push((column[start], avg_rank / (n + 1) as f64));
            start = end;
        }
        MarginalDim { sorted_values: column, nodes, constant }
    }

    /// Rebuild a marginal from stored training values (used by model
    /// deserialization). Values are re-sorted, so order need not survive
    /// the round trip.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("marginal needs at least two values"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("marginal values must be finite"));
        }
        Ok(Self::fit(values))
    }

    pub fn n(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted_values
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Empirical CDF with linear interpolation, clamped away from {0, 1}.
    pub fn cdf(&self, v: f64) -> f64 {
        let n = self.n() as f64;
        let lo = 1.0 / (2.0 * (n + 1.0));
        let hi = 1.0 - lo;
        if self.constant {
            return 0.5;
        }
        let u = match self.nodes.binary_search_by(|(x, _)| x.partial_cmp(&v).unwrap()) {
            Ok(j) => self.nodes[j].1,
            Err(0) => lo,
            Err(j) if j == self.nodes.len() => hi,
            Err(j) => {
                let (x0, u0) = self.nodes[j - 1];
                let (x1, u1) = self.nodes[j];
                u0 + (v - x0) / (x1 - x0) * (u1 - u0)
            }
        };
        u.clamp(lo, hi)
    }

    /// Inverse empirical CDF: linear interpolation between order statistics,
    /// endpoints mapping to the training min/max.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.n();
        let r = u * (n + 1) as f64;
        if r <= 1.0 {
            return self.sorted_values[0];
        }
        if r >= n as f64 {
            return self.sorted_values[n - 1];
        }
        let k = r.floor() as usize; // 1 <= k <= n-1
        let frac = r - k as f64;
        let a = self.sorted_values[k - 1];
        let b = self.sorted_values[k];
        a + frac * (b - a)
    }
}

/// Per-dimension empirical CDF / quantile machinery.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalModel {
    dims: Vec<MarginalDim>,
}

impl MarginalModel {
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn n(&self) -> usize {
        self.dims[0].n()
    }

    pub fn dims(&self) -> &[MarginalDim] {
        &self.dims
    }

    pub fn from_dims(dims: Vec<MarginalDim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("marginal model needs at least one dimension"));
        }
        Ok(MarginalModel { dims })
    }

    /// Indices of degenerate (constant) columns; these carry no copula
    /// information and map everything to 0.5.
    pub fn constant_dims(&self) -> Vec<usize> {
        self.dims
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_constant())
            .map(|(j, _)| j)
            .collect()
    }
}

/// Fit per-dimension empirical marginals; stores sorted copies of each column.
pub fn fit_marginals(data: &DataMatrix) -> Result<MarginalModel> {
    if data.n_rows() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 rows to fit marginals, got {}",
            data.n_rows()
        )));
    }
    let dims = (0..data.n_cols()).map(|j| MarginalDim::fit(data.column(j))).collect();
    Ok(MarginalModel { dims })
}

/// Map data to pseudo-observations through the fitted empirical CDFs.
pub fn to_pseudo(data: &DataMatrix, m: &MarginalModel) -> Result<PseudoObs> {
    if data.n_cols() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: data.n_cols() });
    }
    let d = data.n_cols();
    let mut out = Vec::with_capacity(data.n_rows() * d);
    for i in 0..data.n_rows() {
        let row = data.row(i);
        for j in 0..d {
            out.push(m.dims[j].cdf(row[j]));
        }
    }
    PseudoObs::new(out, d)
}

/// Entrywise standard-normal quantile of pseudo-observations.
pub fn pseudo_to_latent(u: &PseudoObs) -> LatentMatrix {
    let values = u.values().iter().map(|&p| norm_quantile(p)).collect();
    LatentMatrix::new(values, u.n_cols()).expect("quantile of (0,1) is finite")
}

/// Entrywise standard-normal CDF of latent points.
pub fn latent_to_pseudo(z: &LatentMatrix) -> PseudoObs {
    let values = z
        .values()
        .iter()
        .map(|&x| norm_cdf(x).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16))
        .collect();
    PseudoObs::new(values, z.n_cols()).expect("clamped CDF lies in (0,1)")
}

/// Map pseudo-observations back to the data scale via the inverse empirical CDF.
pub fn pseudo_to_data(u: &PseudoObs, m: &MarginalModel) -> Result<DataMatrix> {
    if u.n_cols() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: u.n_cols() });
    }
    let d = u.n_cols();
    let mut out = Vec::with_capacity(u.n_rows() * d);
    for i in 0..u.n_rows() {
        let row = u.row(i);
        for j in 0..d {
            out.push(m.dims[j].quantile(row[j]));
        }
    }
    DataMatrix::with_default_names(out, d)
}
