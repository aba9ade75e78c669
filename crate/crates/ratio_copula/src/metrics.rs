//! Evaluation metrics and synthetic data generators.
//!
//! The empirical Wasserstein-2 distance is computed exactly: a minimum-cost
//! perfect matching under squared Euclidean cost via shortest augmenting
//! paths, then the root of the mean matched squared distance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::GaussianCopula;
use crate::error::{Error, Result};
use crate::gaussian::CorrelationMatrix;
use crate::marginals::{fit_marginals, to_pseudo, DataMatrix, PseudoObs};

/// Exact empirical W2 outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Result {
    pub distance: f64,
    pub assignment_cost: f64,
    pub n_pairs: usize,
}

/// Mean log-density over the rows of a test set.
pub fn avg_loglik<F>(logpdf_fn: F, u_test: &PseudoObs) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if u_test.n_rows() == 0 {
        return Err(Error::invalid("average log-likelihood needs a nonempty test set"));
    }
    let mut total = 0.0;
    for i in 0..u_test.n_rows() {
        let v = logpdf_fn(u_test.row(i))?;
        if !v.is_finite() {
            return Err(Error::numerical(format!("non-finite log-density at row {i}")));
        }
        total += v;
    }
    Ok(total / u_test.n_rows() as f64)
}

/// Largest point-set size accepted by the exact assignment solver.
pub const W2_MAX_POINTS: usize = 5000;

/// Exact empirical Wasserstein-2 between two equal-size point sets given as
/// flat row-major arrays with d columns.
pub fn wasserstein2(a: &[f64], b: &[f64], d: usize) -> Result<W2Result> {
    if d == 0 || a.len() % d != 0 || b.len() % d != 0 {
        return Err(Error::invalid("point arrays must be row-major with d columns"));
    }
    let n = a.len() / d;
    if b.len() / d != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() / d });
    }
    if n == 0 {
        return Err(Error::invalid("point sets must be nonempty"));
    }
    if n > W2_MAX_POINTS {
        return Err(Error::invalid(format!(
            "exact assignment capped at {W2_MAX_POINTS} points, got {n}"
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("point sets must be finite"));
    }

    let cost = assignment_cost(a, b, d, n);
    let distance = (cost / n as f64).sqrt();
    Ok(W2Result { distance, assignment_cost: cost, n_pairs: n })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimum total cost of a perfect matching under squared Euclidean cost,
/// by the shortest-augmenting-path algorithm with dual potentials. Cost
/// rows are materialized lazily.
fn assignment_cost(a: &[f64], b: &[f64], d: usize, n: usize) -> f64 {
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];

    // 1-based arrays; p[j] is the row matched to column j, p[0] the row
    // currently seeking a column.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            if rows[i0 - 1].is_none() {
                let ai = &a[(i0 - 1) * d..i0 * d];
                rows[i0 - 1] =
                    Some((0..n).map(|j| sq_dist(ai, &b[j * d..(j + 1) * d])).collect());
            }
            let c_row = rows[i0 - 1].as_ref().unwrap();
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c_row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        let i = p[j] - 1;
        total += sq_dist(&a[i * d..(i + 1) * d], &b[(j - 1) * d..j * d]);
    }
    total
}

/// Kolmogorov-Smirnov statistic of a sample against Uniform(0,1).
pub fn ks_uniform_statistic(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            (x - lo).abs().max((hi - x).abs())
        })
        .fold(0.0, f64::max)
}

/// Samples from a single Gaussian copula.
pub fn gen_gaussian_copula(n: usize, sigma: &CorrelationMatrix, seed: u64) -> PseudoObs {
    GaussianCopula::new(sigma.clone()).sample(n, seed)
}

/// Equal-weight mixture of two Gaussian copulas: each draw picks a
/// component with probability 1/2 and samples its latent Gaussian.
pub fn gen_gaussian_mixture_copula(
    n: usize,
    sigma1: &CorrelationMatrix,
    sigma2: &CorrelationMatrix,
    seed: u64,
) -> Result<PseudoObs> {
    if sigma1.dim() != sigma2.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma1.dim(),
            found: sigma2.dim(),
        });
    }
    let d = sigma1.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * d);
    let mut eps = vec![0.0; d];
    for _ in 0..n {
        let sigma = if rng.gen_bool(0.5) { sigma1 } else { sigma2 };
        for e in &mut eps {
            *e = rng.sample(StandardNormal);
        }
        let chol = sigma.chol();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..=i {
                s += chol[i * d + j] * eps[j];
            }
            values.push(crate::normal::norm_cdf(s));
        }
    }
    PseudoObs::new(
        values.iter().map(|&v| v.clamp(1e-12, 1.0 - 1e-12)).collect(),
        d,
    )
}

/// Random correlation matrix: A with i.i.d. standard normal entries, A A^T,
/// rescaled to unit diagonal.
pub fn random_correlation(d: usize, seed: u64) -> Result<CorrelationMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..d * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * a[j * d + k];
            }
            m[i * d + j] = s;
        }
    }
    CorrelationMatrix::new(m, d)
}

/// A grayscale image treated as a 2D density over the unit square.
#[derive(Debug, Clone)]
pub struct ImageDensity {
    width: usize,
    height: usize,
    intensities: Vec<f64>, // row-major, normalized to sum 1
}

impl ImageDensity {
    pub fn new(width: usize, height: usize, raw: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || raw.len() != width * height {
            return Err(Error::invalid("image dimensions do not match pixel count"));
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("pixel intensities must be finite and nonnegative"));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("image must have at least one positive pixel"));
        }
        let intensities = raw.iter().map(|v| v / total).collect();
        Ok(ImageDensity { width, height, intensities })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }
}

/// Sample points "according to the light of each pixel": pixel index by
/// intensity, uniform jitter within the pixel, coordinates scaled to
/// (0,1)^2 (y increases upward, so row 0 is at the top), then the rank
/// transform to enforce uniform marginals.
pub fn gen_image_copula(img: &ImageDensity, n: usize, seed: u64) -> Result<PseudoObs> {
    if n < 2 {
        return Err(Error::invalid("need at least 2 samples for the rank transform"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cdf = Vec::with_capacity(img.intensities.len());
    let mut acc = 0.0;
    for &v in &img.intensities {
        acc += v;
        cdf.push(acc);
    }
    let mut xy = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let r: f64 = rng.gen::<f64>() * acc;
        let idx = match cdf.binary_search_by(|c| c.partial_cmp(&r).unwrap()) {
            Ok(i) => i,
            Err(i) => i.min(cdf.len() - 1),
        };
        let row = idx / img.width;
        let col = idx % img.width;
        let jx: f64 = rng.gen();
        let jy: f64 = rng.gen();
        xy.push((col as f64 + jx) / img.width as f64);
        xy.push(1.0 - (row as f64 + jy) / img.height as f64);
    }
    let data = DataMatrix::with_default_names(xy, 2)?;
    let marginals = fit_marginals(&data)?;
    to_pseudo(&data, &marginals)
}
