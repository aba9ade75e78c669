//! Closed-form reference copulas and their classifier equivalences.
//!
//! The Gaussian copula density equals a QDA log-odds between N(0, Sigma)
//! and N(0, I); the Gaussian-KDE copula equals an average of per-center
//! QDA ratios. Both identities are exact and tested to 1e-9.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian::{log_mvn_std, sample_mvn_with_rng, CorrelationMatrix};
use crate::marginals::{latent_to_pseudo, LatentMatrix, PseudoObs};
use crate::normal::{norm_quantile, LN_2PI};

/// Parametric Gaussian copula with correlation Sigma.
#[derive(Debug, Clone)]
pub struct GaussianCopula {
    sigma: CorrelationMatrix,
}

impl GaussianCopula {
    pub fn new(sigma: CorrelationMatrix) -> Self {
        GaussianCopula { sigma }
    }

    pub fn sigma(&self) -> &CorrelationMatrix {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Log copula density at one pseudo-observation row.
    pub fn logpdf_row(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.len() });
        }
        if u.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::invalid("pseudo-observations must lie strictly in (0,1)"));
        }
        let z: Vec<f64> = u.iter().map(|&v| norm_quantile(v)).collect();
        Ok(qda_log_ratio(&self.sigma, &z))
    }

    pub fn logpdf(&self, u: &PseudoObs) -> Result<Vec<f64>> {
        (0..u.n_rows()).map(|i| self.logpdf_row(u.row(i))).collect()
    }

    /// Phi applied entrywise to correlated Gaussian draws.
    pub fn sample(&self, n: usize, seed: u64) -> PseudoObs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latent = sample_mvn_with_rng(n, &self.sigma, &mut rng);
        latent_to_pseudo(&latent)
    }
}

/// log N(z;0,Sigma) - log N(z;0,I): the QDA log-odds, and by Proposition 1
/// the Gaussian copula log-density at u = Phi(z).
pub fn qda_log_ratio(sigma: &CorrelationMatrix, z: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), sigma.dim());
    let sol = sigma.solve(z);
    let zq: f64 = z.iter().map(|v| v * v).sum();
    let sq: f64 = z.iter().zip(&sol).map(|(a, b)| a * b).sum();
    -0.5 * sigma.log_det() - 0.5 * (sq - zq)
}

/// Gaussian-KDE copula: isotropic kernels of bandwidth b at latent centers.
#[derive(Debug, Clone)]
pub struct GaussianKdeCopula {
    centers: LatentMatrix,
    bandwidth: f64,
}

impl GaussianKdeCopula {
    pub fn new(centers: LatentMatrix, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::invalid("kde bandwidth must be positive"));
        }
        if centers.n_rows() == 0 {
            return Err(Error::invalid("kde needs at least one center"));
        }
        Ok(GaussianKdeCopula { centers, bandwidth })
    }

    /// Fit from latent training points with Silverman's bandwidth.
    pub fn fit(centers: LatentMatrix) -> Result<Self> {
        let b = silverman_bandwidth(centers.n_rows(), centers.n_cols());
        Self::new(centers, b)
    }

    pub fn dim(&self) -> usize {
        self.centers.n_cols()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn centers(&self) -> &LatentMatrix {
        &self.centers
    }

    /// log[(1/T_p) sum_k N(z; Z^k, b I)] - log N(z; 0, I), via log-sum-exp.
    pub fn logpdf_row(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.len() });
        }
        if u.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::invalid("pseudo-observations must lie strictly in (0,1)"));
        }
        let z: Vec<f64> = u.iter().map(|&v| norm_quantile(v)).collect();
        let t = self.centers.n_rows() as f64;
        let kernel_logs: Vec<f64> =
            (0..self.centers.n_rows()).map(|k| self.kernel_logpdf(&z, k)).collect();
        Ok(log_sum_exp(&kernel_logs) - t.ln() - log_mvn_std(&z))
    }

    pub fn logpdf(&self, u: &PseudoObs) -> Result<Vec<f64>> {
        (0..u.n_rows()).map(|i| self.logpdf_row(u.row(i))).collect()
    }

    fn kernel_logpdf(&self, z: &[f64], k: usize) -> f64 {
        let d = self.dim() as f64;
        let c = self.centers.row(k);
        let q: f64 = z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * d * LN_2PI - d * self.bandwidth.ln() - 0.5 * q / (self.bandwidth * self.bandwidth)
    }

    /// The same density written as an average of per-center QDA ratios
    /// (Proposition 2), evaluated with log-sum-exp.
    pub fn as_qda_average(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: z.len() });
        }
        let t = self.centers.n_rows() as f64;
        let ratios: Vec<f64> = (0..self.centers.n_rows())
            .map(|k| self.kernel_logpdf(z, k) - log_mvn_std(z))
            .collect();
        Ok(log_sum_exp(&ratios) - t.ln())
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Silverman's rule of thumb on the latent scale: (n(d+2)/4)^(-1/(d+4)).
pub fn silverman_bandwidth(n: usize, d: usize) -> f64 {
    (n as f64 * (d as f64 + 2.0) / 4.0).powf(-1.0 / (d as f64 + 4.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::pseudo_to_latent;
    use crate::normal::norm_cdf;
    use rand::Rng;

    #[test]
    fn identity_copula_density_is_zero() {
        let gc = GaussianCopula::new(CorrelationMatrix::identity(3));
        for u in [[0.1, 0.5, 0.9], [0.42, 0.42, 0.42]] {
            assert_eq!(gc.logpdf_row(&u).unwrap(), 0.0);
        }
    }

    #[test]
    fn gaussian_copula_origin_closed_form() {
        let gc = GaussianCopula::new(CorrelationMatrix::bivariate(0.8).unwrap());
        let v = gc.logpdf_row(&[0.5, 0.5]).unwrap();
        assert!((v - 0.5108256237659907).abs() < 1e-9);
    }

    #[test]
    fn qda_at_origin_is_half_neg_log_det() {
        let sigma = CorrelationMatrix::bivariate(0.8).unwrap();
        let v = qda_log_ratio(&sigma, &[0.0, 0.0]);
        assert!((v - 0.5108256237659907).abs() < 1e-12);
        assert_eq!(qda_log_ratio(&CorrelationMatrix::identity(4), &[1.0, -2.0, 0.5, 3.0]), 0.0);
    }

    #[test]
    fn proposition_1_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for d in [2usize, 3, 5] {
            let sigma = crate::gaussian::tests::random_correlation(d, &mut rng);
            let gc = GaussianCopula::new(sigma.clone());
            for _ in 0..100 {
                let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.5..2.5)).collect();
                let u: Vec<f64> = z.iter().map(|&x| norm_cdf(x)).collect();
                let a = gc.logpdf_row(&u).unwrap();
                let b = qda_log_ratio(&sigma, &z);
                assert!((a - b).abs() <= 1e-9, "Prop 1 violated: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sampling_correlation_and_determinism() {
        let gc = GaussianCopula::new(CorrelationMatrix::bivariate(0.8).unwrap());
        let u = gc.sample(100_000, 7);
        let z = pseudo_to_latent(&u);
        let corr = crate::gaussian::estimate_correlation(&z).unwrap();
        assert!((corr.sigma()[1] - 0.8).abs() < 0.01, "corr {}", corr.sigma()[1]);
        let u2 = gc.sample(100, 3);
        let u3 = gc.sample(100, 3);
        assert_eq!(u2.values(), u3.values());
    }

    #[test]
    fn single_center_unit_bandwidth_is_flat() {
        let kc = GaussianKdeCopula::new(LatentMatrix::new(vec![0.0, 0.0], 2).unwrap(), 1.0)
            .unwrap();
        for u in [[0.2, 0.9], [0.5, 0.5], [0.01, 0.99]] {
            assert!(kc.logpdf_row(&u).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn two_symmetric_centers_brute_force() {
        let a = 1.3;
        let kc = GaussianKdeCopula::new(LatentMatrix::new(vec![a, -a], 1).unwrap(), 1.0)
            .unwrap();
        let z = 0.0;
        // Direct summation oracle in raw densities.
        let kernel = |c: f64| (-0.5 * (z - c) * (z - c)).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let expected = (0.5 * (kernel(a) + kernel(-a))
            / ((-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()))
        .ln();
        let got = kc.logpdf_row(&[0.5]).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn proposition_2_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [1usize, 2, 5] {
            let t = rng.gen_range(1..=50);
            let centers: Vec<f64> = (0..t * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let kc = GaussianKdeCopula::new(
                LatentMatrix::new(centers, d).unwrap(),
                rng.gen_range(0.2..1.5),
            )
            .unwrap();
            for _ in 0..100 {
                let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.5..2.5)).collect();
                let u: Vec<f64> = z.iter().map(|&x| norm_cdf(x)).collect();
                let a = kc.logpdf_row(&u).unwrap();
                let b = kc.as_qda_average(&z).unwrap();
                assert!((a - b).abs() <= 1e-9, "Prop 2 violated: {a} vs {b}");
            }
        }
    }

    #[test]
    fn kde_copula_normalizes_on_grid() {
        // KDE fitted to correlated latents should integrate to about 1.
        let sigma = CorrelationMatrix::bivariate(0.6).unwrap();
        let centers = crate::gaussian::sample_mvn(200, &sigma, 1);
        let kc = GaussianKdeCopula::fit(centers).unwrap();
        let g = 101;
        let lo = 0.001;
        let w = (0.999 - lo) / g as f64;
        let mut total = 0.0;
        for i in 0..g {
            for j in 0..g {
                let u = [lo + (i as f64 + 0.5) * w, lo + (j as f64 + 0.5) * w];
                total += kc.logpdf_row(&u).unwrap().exp();
            }
        }
        total *= w * w;
        assert!((total - 1.0).abs() < 0.02, "integral {total}");
    }

    #[test]
    fn silverman_values() {
        assert!((silverman_bandwidth(1000, 2) - 1000f64.powf(-1.0 / 6.0)).abs() < 1e-15);
        assert!((silverman_bandwidth(1, 2) - 1.0).abs() < 1e-15);
        let b10 = silverman_bandwidth(10, 3);
        let b100 = silverman_bandwidth(100, 3);
        let b1000 = silverman_bandwidth(1000, 3);
        assert!(b10 > b100 && b100 > b1000);
    }
}
