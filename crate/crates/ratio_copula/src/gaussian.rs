//! Dense symmetric linear algebra and multivariate-normal machinery:
//! correlation estimation, Cholesky, Jacobi eigenvalues, log-densities,
//! correlated sampling and the Gaussian-copula KL diagnostic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::marginals::LatentMatrix;
use crate::normal::LN_2PI;

const JITTER_BASE: f64 = 1e-8;
const MIN_EIGENVALUE: f64 = 1e-10;

/// Unit-diagonal positive-definite correlation matrix with its Cholesky
/// factor and ascending eigenvalues precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    sigma: Vec<f64>,
    chol: Vec<f64>,
    eigenvalues: Vec<f64>,
    d: usize,
    jittered: bool,
}

/// Exact KL of a Gaussian copula's numerator vs denominator plus the
/// eigenvalue-based upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlDiagnostic {
    pub exact_kl: f64,
    pub bound: f64,
    pub e_min: f64,
}

impl CorrelationMatrix {
    /// Build from a d x d symmetric matrix (row-major). The matrix is
    /// symmetrized, rescaled to unit diagonal, and jittered if it is not
    /// positive definite.
    pub fn new(sigma: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || sigma.len() != d * d {
            return Err(Error::invalid("correlation matrix must be d x d with d >= 1"));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("correlation matrix has non-finite entries"));
        }
        let mut s = sigma;
        // Symmetrize, tolerating tiny asymmetry from accumulation.
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (s[i * d + j] + s[j * d + i]);
                if (s[i * d + j] - s[j * d + i]).abs() > 1e-8 {
                    return Err(Error::invalid("matrix is not symmetric"));
                }
                s[i * d + j] = avg;
                s[j * d + i] = avg;
            }
        }
        for i in 0..d {
            if s[i * d + i] <= 0.0 {
                return Err(Error::invalid("matrix has non-positive diagonal"));
            }
        }
        rescale_to_correlation(&mut s, d);

        let mut jitter = JITTER_BASE;
        let mut jittered = false;
        for attempt in 0..4 {
            let eig = jacobi_eigenvalues(&s, d);
            let chol = cholesky(&s, d);
            if eig[0] > MIN_EIGENVALUE {
                if let Some(chol) = chol {
                    return Ok(CorrelationMatrix { sigma: s, chol, eigenvalues: eig, d, jittered });
                }
            }
            if attempt == 3 {
                break;
            }
            for i in 0..d {
                s[i * d + i] += jitter;
            }
            rescale_to_correlation(&mut s, d);
            jitter *= 10.0;
            jittered = true;
        }
        Err(Error::numerical("correlation matrix not positive definite after jitter"))
    }

    pub fn identity(d: usize) -> Self {
        let mut sigma = vec![0.0; d * d];
        for i in 0..d {
            sigma[i * d + i] = 1.0;
        }
        CorrelationMatrix::new(sigma, d).expect("identity is a valid correlation matrix")
    }

    /// 2 x 2 correlation matrix with off-diagonal rho.
    pub fn bivariate(rho: f64) -> Result<Self> {
        CorrelationMatrix::new(vec![1.0, rho, rho, 1.0], 2)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Lower-triangular Cholesky factor, row-major.
    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// True if positive definiteness required adding diagonal jitter.
    pub fn was_jittered(&self) -> bool {
        self.jittered
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.d).map(|i| self.chol[i * self.d + i].ln()).sum::<f64>()
    }

    /// Solve Sigma x = v through the Cholesky factor.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let y = self.forward_solve(v);
        self.backward_solve(&y)
    }

    // L y = v
    fn forward_solve(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = v[i];
            for j in 0..i {
                s -= self.chol[i * d + j] * y[j];
            }
            y[i] = s / self.chol[i * d + i];
        }
        y
    }

    // L^T x = y
    fn backward_solve(&self, y: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let mut s = y[i];
            for j in (i + 1)..d {
                s -= self.chol[j * d + i] * x[j];
            }
            x[i] = s / self.chol[i * d + i];
        }
        x
    }
}

fn rescale_to_correlation(s: &mut [f64], d: usize) {
    let scale: Vec<f64> = (0..d).map(|i| s[i * d + i].sqrt()).collect();
    for i in 0..d {
        for j in 0..d {
            s[i * d + j] /= scale[i] * scale[j];
        }
    }
    for i in 0..d {
        s[i * d + i] = 1.0;
    }
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or None if a
/// pivot goes non-positive.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Off-diagonal Frobenius norm is driven below 1e-12.
pub fn jacobi_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    if d == 1 {
        return m;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += m[i * d + j] * m[i * d + j];
            }
        }
        if (2.0 * off).sqrt() <= 1e-12 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = m[k * d + p];
                    let akq = m[k * d + q];
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = m[p * d + k];
                    let aqk = m[q * d + k];
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| m[i * d + i]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// Sample correlation matrix of latent data (covariance rescaled to unit
/// diagonal, jittered if needed).
pub fn estimate_correlation(z: &LatentMatrix) -> Result<CorrelationMatrix> {
    let n = z.n_rows();
    let d = z.n_cols();
    if n < 2 {
        return Err(Error::invalid("need at least 2 rows to estimate correlation"));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (j, &v) in z.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let row = z.row(i);
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[a * d + b] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / (n as f64 - 1.0);
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    // Zero-variance (constant) columns carry no dependence information;
    // give them an identity row so rescaling stays well defined.
    for a in 0..d {
        if cov[a * d + a] <= 0.0 {
            for b in 0..d {
                cov[a * d + b] = 0.0;
                cov[b * d + a] = 0.0;
            }
            cov[a * d + a] = 1.0;
        }
    }
    CorrelationMatrix::new(cov, d)
}

/// Log-density of the standard multivariate normal at z.
pub fn log_mvn_std(z: &[f64]) -> f64 {
    let q: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * (z.len() as f64) * LN_2PI - 0.5 * q
}

/// Log-density of N(0, Sigma) at z via the Cholesky factor.
pub fn log_mvn_corr(z: &[f64], sigma: &CorrelationMatrix) -> f64 {
    debug_assert_eq!(z.len(), sigma.dim());
    let y = sigma.forward_solve(z);
    let q: f64 = y.iter().map(|v| v * v).sum();
    -0.5 * (z.len() as f64) * LN_2PI - 0.5 * sigma.log_det() - 0.5 * q
}

/// Draw n rows from N(0, Sigma) as z = L * eps, deterministic given the seed.
pub fn sample_mvn(n: usize, sigma: &CorrelationMatrix, seed: u64) -> LatentMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_mvn_with_rng(n, sigma, &mut rng)
}

pub fn sample_mvn_with_rng<R: Rng>(n: usize, sigma: &CorrelationMatrix, rng: &mut R) -> LatentMatrix {
    let d = sigma.dim();
    let mut out = Vec::with_capacity(n * d);
    let mut eps = vec![0.0; d];
    for _ in 0..n {
        for e in &mut eps {
            *e = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..=i {
                s += sigma.chol[i * d + j] * eps[j];
            }
            out.push(s);
        }
    }
    LatentMatrix::new(out, d).expect("Gaussian draws are finite")
}

/// Exact KL of N(0, Sigma) vs N(0, I) for a unit-diagonal Sigma, with the
/// smallest-eigenvalue upper bound.
pub fn kl_gaussian_copula(sigma: &CorrelationMatrix) -> KlDiagnostic {
    let d = sigma.dim() as f64;
    let exact_kl = (-0.5 * sigma.eigenvalues.iter().map(|e| e.ln()).sum::<f64>()).max(0.0);
    let e_min = sigma.eigenvalues[0];
    let bound = (-0.5 * d * e_min.ln()).max(0.0);
    KlDiagnostic { exact_kl, bound, e_min }
}
