//! The ratio-copula facade: fit pipeline, density evaluation on pseudo and
//! latent scales, diagnostics, and model persistence.
//!
//! A fitted copula is the trained classifier's log-ratio, optionally
//! multiplied by the analytic ratio N(z;0,Sigma)/N(z;0,I) in the guided
//! variant. Densities are always handled in log space.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use crate::classifier::{
    train, MlpSpec, ModelSpec, NoiseSource, PolyLogisticSpec, RatioModel, TrainConfig,
};
use crate::error::{Error, Result};
use crate::gaussian::{
    estimate_correlation, kl_gaussian_copula, log_mvn_corr, log_mvn_std, CorrelationMatrix,
};
use crate::marginals::{
    fit_marginals, pseudo_to_latent, to_pseudo, DataMatrix, MarginalDim, MarginalModel,
    PseudoObs,
};
use crate::normal::norm_quantile;

/// KL gap above which plain classification against N(0,I) is expected to
/// struggle; reported as a warning, never an automatic switch.
pub const KL_WARNING_NATS: f64 = 20.0;

/// A fitted ratio copula: marginals, classifier, optional Gaussian guide.
#[derive(Debug, Clone)]
pub struct RatioCopula {
    marginals: MarginalModel,
    model: RatioModel,
    guide: Option<CorrelationMatrix>,
}

/// Fit diagnostics surfaced to callers and the CLI.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub loss_trace: Vec<f64>,
    /// Monte Carlo estimate of the modeled copula's normalizing constant,
    /// E_noise[exp(modeled log-ratio)]. A correctly estimated copula is
    /// already normalized, so this sits near 1. Note this is not e^{log_z}:
    /// the learned log_z absorbs the constant term of the log-ratio (NCE is
    /// self-normalizing), so e^{log_z} alone is not the diagnostic.
    pub z_estimate: f64,
    /// The learned log-normalizer parameter itself.
    pub log_z: f64,
    pub kl_exact: f64,
    pub kl_bound: f64,
    pub guided: bool,
    pub wall_time_secs: f64,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Whether to use the Gaussian-Guided branch; `Auto` picks guided when
/// d > 4 or the exact KL of the latent correlation exceeds 2 nats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuideChoice {
    Auto,
    Plain,
    Guided,
}

/// Full fit pipeline: marginals, pseudo-observations, latent transform,
/// optional guide estimation, classifier training, diagnostics.
pub fn fit_ratio_copula(
    data: &DataMatrix,
    spec: ModelSpec,
    config: &TrainConfig,
    guide_choice: GuideChoice,
) -> Result<(RatioCopula, FitReport)> {
    let start = Instant::now();
    if data.n_cols() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            found: data.n_cols(),
        });
    }
    let mut warnings = Vec::new();
    if data.n_rows() < 2 * data.n_cols() {
        warnings.push(format!(
            "only {} rows for {} dimensions; at least 2d rows recommended",
            data.n_rows(),
            data.n_cols()
        ));
    }

    let marginals = fit_marginals(data)?;
    for j in marginals.constant_dims() {
        warnings.push(format!(
            "column {j} is constant; it carries no dependence information"
        ));
    }
    let pseudo = to_pseudo(data, &marginals)?;
    let latent = pseudo_to_latent(&pseudo);

    // Diagnostics from the data's latent correlation, reported always.
    let data_corr = estimate_correlation(&latent)?;
    let kl = kl_gaussian_copula(&data_corr);

    let guided = match guide_choice {
        GuideChoice::Plain => false,
        GuideChoice::Guided => true,
        GuideChoice::Auto => data.n_cols() > 4 || kl.exact_kl > 2.0,
    };
    if !guided && kl.bound > KL_WARNING_NATS {
        warnings.push(format!(
            "KL bound {:.1} nats exceeds the {KL_WARNING_NATS:.0}-nat threshold; \
             plain density-ratio estimation may fail, consider the guided variant",
            kl.bound
        ));
    }

    let (guide, noise_source) = if guided {
        if data_corr.was_jittered() {
            warnings.push("guide correlation required jitter to be positive definite".into());
        }
        (Some(data_corr.clone()), NoiseSource::Correlated(data_corr.clone()))
    } else {
        (None, NoiseSource::Standard(data.n_cols()))
    };

    let (model, loss_trace) = train(spec, &latent, &noise_source, config)?;
    let z_estimate = normalization_estimate(&model, &noise_source, config.seed)?;
    if !(0.8..=1.25).contains(&z_estimate) {
        warnings.push(format!(
            "z estimate {z_estimate:.4} outside [0.8, 1.25]; fit may not have converged"
        ));
    }
    if let Some(&last) = loss_trace.last() {
        if last < 0.01 {
            warnings.push(format!(
                "final loss {last:.4} below 0.01; the classifier may be overfitting"
            ));
        }
    }

    let report = FitReport {
        loss_trace,
        z_estimate,
        log_z: model.log_z(),
        kl_exact: kl.exact_kl,
        kl_bound: kl.bound,
        guided,
        wall_time_secs: start.elapsed().as_secs_f64(),
        warnings,
    };
    Ok((RatioCopula { marginals, model, guide }, report))
}

/// Monte Carlo normalization diagnostic: the mean of exp(f(z)+log_z) over
/// fresh draws from the training noise distribution, which estimates the
/// integral of the modeled copula density and is 1 for a perfect fit.
fn normalization_estimate(
    model: &RatioModel,
    noise_source: &NoiseSource,
    seed: u64,
) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // A dedicated stream keeps this independent of the training draws.
    rng.set_stream(u64::MAX);
    let noise = noise_source.sample(10_000, &mut rng);
    let mut total = 0.0;
    for i in 0..noise.n_rows() {
        total += model.forward_log_ratio(noise.row(i))?.exp();
    }
    Ok(total / noise.n_rows() as f64)
}

impl RatioCopula {
    /// Assemble from parts (used by deserialization and tests).
    pub fn from_parts(
        marginals: MarginalModel,
        model: RatioModel,
        guide: Option<CorrelationMatrix>,
    ) -> Result<Self> {
        if marginals.dim() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                found: marginals.dim(),
            });
        }
        if let Some(g) = &guide {
            if g.dim() != model.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.input_dim(),
                    found: g.dim(),
                });
            }
        }
        Ok(RatioCopula { marginals, model, guide })
    }

    pub fn dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn marginals(&self) -> &MarginalModel {
        &self.marginals
    }

    pub fn model(&self) -> &RatioModel {
        &self.model
    }

    pub fn guide(&self) -> Option<&CorrelationMatrix> {
        self.guide.as_ref()
    }

    /// Log copula density at one pseudo-observation row.
    pub fn log_copula_pdf_row(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.len() });
        }
        if u.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::invalid("pseudo-observations must lie strictly in (0,1)"));
        }
        let z: Vec<f64> = u.iter().map(|&v| norm_quantile(v)).collect();
        self.log_copula_pdf_latent(&z)
    }

    /// Log copula density evaluated directly on the latent scale.
    pub fn log_copula_pdf_latent(&self, z: &[f64]) -> Result<f64> {
        let mut v = self.model.forward_log_ratio(z)?;
        if let Some(g) = &self.guide {
            v += log_mvn_corr(z, g) - log_mvn_std(z);
        }
        if !v.is_finite() {
            return Err(Error::numerical("non-finite copula log-density"));
        }
        Ok(v)
    }

    /// Log copula density for each row of a pseudo-observation matrix.
    pub fn log_copula_pdf(&self, u: &PseudoObs) -> Result<Vec<f64>> {
        (0..u.n_rows()).map(|i| self.log_copula_pdf_row(u.row(i))).collect()
    }

    /// HMC target on the latent scale: log c(z) + log N(z;0,I) and its
    /// gradient with respect to z.
    pub fn log_target_latent(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f = self.model.forward_log_ratio(z)?;
        let mut grad = self.model.input_gradient(z)?;
        let value = match &self.guide {
            // log c + log N(z;0,I) with the standard terms cancelling:
            // guided target is f + log N(z;0,Sigma).
            Some(g) => {
                let sol = g.solve(z);
                for (gi, s) in grad.iter_mut().zip(&sol) {
                    *gi -= s;
                }
                f + log_mvn_corr(z, g)
            }
            None => {
                for (gi, zi) in grad.iter_mut().zip(z) {
                    *gi -= zi;
                }
                f + log_mvn_std(z)
            }
        };
        Ok((value, grad))
    }

    /// Midpoint-rule integral of the copula density over the truncated cube
    /// u in [0.001, 0.999]^d. Grid quadrature only, so d <= 3.
    pub fn normalization_check(&self, grid_points_per_dim: usize) -> Result<f64> {
        let d = self.dim();
        if d > 3 {
            return Err(Error::invalid("normalization check supports d <= 3 only"));
        }
        if grid_points_per_dim == 0 {
            return Err(Error::invalid("grid must have at least one point per dim"));
        }
        let lo = 0.001;
        let hi = 0.999;
        let g = grid_points_per_dim;
        let w = (hi - lo) / g as f64;
        let cell_volume = w.powi(d as i32);
        let mut total = 0.0;
        let mut idx = vec![0usize; d];
        let mut u = vec![0.0; d];
        loop {
            for j in 0..d {
                u[j] = lo + (idx[j] as f64 + 0.5) * w;
            }
            total += self.log_copula_pdf_row(&u)?.exp();
            // Odometer increment over the d-dimensional grid.
            let mut j = 0;
            loop {
                idx[j] += 1;
                if idx[j] < g {
                    break;
                }
                idx[j] = 0;
                j += 1;
                if j == d {
                    return Ok(total * cell_volume);
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        Self::read_from(&mut f)
    }

    /// Versioned little-endian binary layout: magic, version, model spec
    /// block, parameter block (log_z last), optional guide matrix, marginal
    /// sorted-value blocks.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(w, FORMAT_VERSION)?;
        match self.model.spec() {
            ModelSpec::Mlp(m) => {
                w.write_all(&[0u8])?;
                write_u32(w, m.input_dim as u32)?;
                write_u32(w, m.hidden_widths.len() as u32)?;
                for &h in &m.hidden_widths {
                    write_u32(w, h as u32)?;
                }
                write_f64(w, m.leak)?;
                for &r in &m.residual {
                    w.write_all(&[r as u8])?;
                }
            }
            ModelSpec::Poly(p) => {
                w.write_all(&[1u8])?;
                write_u32(w, p.input_dim as u32)?;
                write_u32(w, p.degree as u32)?;
                w.write_all(&[p.include_interactions as u8])?;
            }
        }
        write_u64(w, self.model.params().len() as u64)?;
        for &v in self.model.params() {
            write_f64(w, v)?;
        }
        match &self.guide {
            Some(g) => {
                w.write_all(&[1u8])?;
                write_u32(w, g.dim() as u32)?;
                for &v in g.sigma() {
                    write_f64(w, v)?;
                }
            }
            None => w.write_all(&[0u8])?,
        }
        write_u32(w, self.marginals.dim() as u32)?;
        for dim in self.marginals.dims() {
            write_u64(w, dim.n() as u64)?;
            for &v in dim.sorted_values() {
                write_f64(w, v)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("model file too short for header"))?;
        if &magic != MAGIC {
            return Err(Error::format("bad magic; not a ratio-copula model file"));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::format(format!("unsupported model format version {version}")));
        }
        let kind = read_u8(r)?;
        let spec = match kind {
            0 => {
                let input_dim = read_u32(r)? as usize;
                let n_hidden = read_u32(r)? as usize;
                if n_hidden > 1024 {
                    return Err(Error::format("implausible hidden layer count"));
                }
                let mut widths = Vec::with_capacity(n_hidden);
                for _ in 0..n_hidden {
                    widths.push(read_u32(r)? as usize);
                }
                let leak = read_f64(r)?;
                let mut residual = Vec::with_capacity(n_hidden);
                for _ in 0..n_hidden {
                    residual.push(read_u8(r)? != 0);
                }
                ModelSpec::Mlp(MlpSpec { input_dim, hidden_widths: widths, leak, residual })
            }
            1 => {
                let input_dim = read_u32(r)? as usize;
                let degree = read_u32(r)? as usize;
                let include_interactions = read_u8(r)? != 0;
                ModelSpec::Poly(PolyLogisticSpec::new(input_dim, degree, include_interactions)?)
            }
            k => return Err(Error::format(format!("unknown model kind {k}"))),
        };
        let n_params = read_u64(r)? as usize;
        let mut model = RatioModel::init(spec, 0)?;
        if n_params != model.n_params() {
            return Err(Error::format(format!(
                "parameter count {n_params} does not match spec ({})",
                model.n_params()
            )));
        }
        let mut params = vec![0.0; n_params];
        for p in &mut params {
            *p = read_f64(r)?;
        }
        model
            .set_params(&params)
            .map_err(|_| Error::format("non-finite parameters in model file"))?;
        let guide = if read_u8(r)? != 0 {
            let d = read_u32(r)? as usize;
            let mut sigma = vec![0.0; d * d];
            for v in &mut sigma {
                *v = read_f64(r)?;
            }
            Some(CorrelationMatrix::new(sigma, d).map_err(|e| Error::format(e.to_string()))?)
        } else {
            None
        };
        let d = read_u32(r)? as usize;
        let mut dims = Vec::with_capacity(d);
        for _ in 0..d {
            let n = read_u64(r)? as usize;
            if n < 2 || n > (1 << 32) {
                return Err(Error::format("implausible marginal sample count"));
            }
            let mut values = vec![0.0; n];
            for v in &mut values {
                *v = read_f64(r)?;
            }
            dims.push(MarginalDim::from_values(values).map_err(|e| Error::format(e.to_string()))?);
        }
        let marginals =
            MarginalModel::from_dims(dims).map_err(|e| Error::format(e.to_string()))?;
        RatioCopula::from_parts(marginals, model, guide)
    }
}

const MAGIC: &[u8; 8] = b"RATCOP01";
const FORMAT_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(|_| Error::format("truncated model file"))?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::format("truncated model file"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::format("truncated model file"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::format("truncated model file"))?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::latent_to_pseudo;
    use crate::marginals::LatentMatrix;

    fn independence_copula(d: usize, n: usize) -> RatioCopula {
        let data = DataMatrix::with_default_names(
            (0..n * d).map(|i| (i % n) as f64 + 0.37 * (i / n) as f64).collect(),
            d,
        )
        .unwrap();
        let marginals = fit_marginals(&data).unwrap();
        let model = RatioModel::init(ModelSpec::Mlp(MlpSpec::default_for_dim(d)), 0).unwrap();
        RatioCopula::from_parts(marginals, model, None).unwrap()
    }

    fn guided_copula(rho: f64, n: usize) -> RatioCopula {
        let mut c = independence_copula(2, n);
        c.guide = Some(CorrelationMatrix::bivariate(rho).unwrap());
        c
    }

    #[test]
    fn independence_density_is_one() {
        let c = independence_copula(2, 50);
        assert_eq!(c.log_copula_pdf_row(&[0.3, 0.9]).unwrap(), 0.0);
        assert_eq!(c.log_copula_pdf_row(&[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn guided_zero_model_matches_gaussian_copula_at_origin() {
        let c = guided_copula(0.8, 50);
        let v = c.log_copula_pdf_row(&[0.5, 0.5]).unwrap();
        // -0.5 * ln(1 - 0.64) = 0.5108256...
        assert!((v - 0.5108256237659907).abs() < 1e-9);
    }

    #[test]
    fn guided_identity_equals_plain() {
        let mut c = guided_copula(0.0, 50);
        c.guide = Some(CorrelationMatrix::identity(2));
        let plain = independence_copula(2, 50);
        for u in [[0.2, 0.7], [0.5, 0.5], [0.9, 0.1]] {
            let a = c.log_copula_pdf_row(&u).unwrap();
            let b = plain.log_copula_pdf_row(&u).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn latent_target_matches_pseudo_path() {
        let c = guided_copula(0.6, 50);
        let z = [0.7, -0.4];
        let (v, _) = c.log_target_latent(&z).unwrap();
        let u: Vec<f64> = z.iter().map(|&x| crate::normal::norm_cdf(x)).collect();
        let via_pseudo = c.log_copula_pdf_row(&u).unwrap() + log_mvn_std(&z);
        assert!((v - via_pseudo).abs() < 1e-9);
    }

    #[test]
    fn zero_model_target_is_standard_normal() {
        let c = independence_copula(2, 50);
        let z = [1.1, -0.3];
        let (v, g) = c.log_target_latent(&z).unwrap();
        assert!((v - log_mvn_std(&z)).abs() < 1e-14);
        assert!((g[0] + 1.1).abs() < 1e-14);
        assert!((g[1] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn guided_target_gradient_matches_finite_differences() {
        let c = guided_copula(0.8, 50);
        let z = vec![0.9, -1.2];
        let (_, g) = c.log_target_latent(&z).unwrap();
        for j in 0..2 {
            let h = 1e-6;
            let mut zp = z.clone();
            zp[j] += h;
            let up = c.log_target_latent(&zp).unwrap().0;
            zp[j] -= 2.0 * h;
            let down = c.log_target_latent(&zp).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            assert!((g[j] - fd).abs() < 1e-6, "gradient mismatch: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn normalization_independence() {
        let c = independence_copula(2, 50);
        let integral = c.normalization_check(201).unwrap();
        assert!((integral - 0.996).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn normalization_guided_gaussian() {
        let c = guided_copula(0.8, 50);
        let integral = c.normalization_check(201).unwrap();
        assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
    }

    #[test]
    fn normalization_rejects_high_dim() {
        let c = independence_copula(4, 50);
        assert!(c.normalization_check(10).is_err());
    }

    #[test]
    fn fit_independent_data_z_near_one() {
        let latent = crate::gaussian::sample_mvn(800, &CorrelationMatrix::identity(2), 11);
        let pseudo = latent_to_pseudo(&latent);
        let data = DataMatrix::with_default_names(pseudo.values().to_vec(), 2).unwrap();
        let cfg = TrainConfig { epochs: 60, seed: 3, ..Default::default() };
        let spec = ModelSpec::Poly(PolyLogisticSpec::new(2, 2, true).unwrap());
        let (c, report) = fit_ratio_copula(&data, spec, &cfg, GuideChoice::Plain).unwrap();
        assert!(!report.guided);
        assert!(report.z_estimate > 0.8 && report.z_estimate < 1.2, "z {}", report.z_estimate);
        assert_eq!(report.loss_trace.len(), 60);
        assert!(c.guide().is_none());
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let c = guided_copula(0.45, 30);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let c2 = RatioCopula::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(c.model.params(), c2.model.params());
        assert_eq!(c.marginals, c2.marginals);
        assert_eq!(c.guide.as_ref().unwrap().sigma(), c2.guide.as_ref().unwrap().sigma());
        let mut buf2 = Vec::new();
        c2.write_to(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn corrupted_file_is_rejected() {
        let c = independence_copula(2, 30);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert!(matches!(
            RatioCopula::read_from(&mut &buf[..20]),
            Err(Error::Format(_))
        ));
        buf[0] = b'X';
        assert!(matches!(
            RatioCopula::read_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn out_of_range_pseudo_rejected() {
        let c = independence_copula(2, 30);
        assert!(c.log_copula_pdf_row(&[0.0, 0.5]).is_err());
        assert!(c.log_copula_pdf_row(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn kl_diagnostics_grow_with_rho() {
        let mut previous = -1.0;
        for &rho in &[0.0, 0.4, 0.8] {
            let sigma = CorrelationMatrix::bivariate(rho).unwrap();
            let latent = crate::gaussian::sample_mvn(4000, &sigma, 5);
            let pseudo = latent_to_pseudo(&latent);
            let data = DataMatrix::with_default_names(pseudo.values().to_vec(), 2).unwrap();
            let cfg = TrainConfig { epochs: 3, seed: 1, ..Default::default() };
            let spec = ModelSpec::Poly(PolyLogisticSpec::new(2, 2, true).unwrap());
            let (_, report) =
                fit_ratio_copula(&data, spec, &cfg, GuideChoice::Plain).unwrap();
            assert!(report.kl_exact > previous, "kl not increasing at rho={rho}");
            assert!(report.kl_exact <= report.kl_bound + 1e-12);
            previous = report.kl_exact;
        }
    }

    #[test]
    fn normalization_check_latent_consistency() {
        // Evaluating on pseudo scale then adding log N equals the latent target.
        let c = guided_copula(0.3, 40);
        let z = LatentMatrix::new(vec![0.25, -0.8], 2).unwrap();
        let u = latent_to_pseudo(&z);
        let a = c.log_copula_pdf_row(u.row(0)).unwrap();
        let (t, _) = c.log_target_latent(z.row(0)).unwrap();
        assert!((a - (t - log_mvn_std(z.row(0)))).abs() < 1e-9);
    }
}
