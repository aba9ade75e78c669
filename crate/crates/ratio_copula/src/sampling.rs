//! Hamiltonian Monte Carlo over the latent target log c(z) + log N(z;0,I).
//!
//! The default protocol runs one independent chain per requested sample:
//! initialize from N(0,I), take 100 burn-in steps with step-size adaptation,
//! then emit the state after one further step whether or not that step was
//! accepted. A thinned single-chain mode is available as a cheaper
//! alternative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimator::RatioCopula;
use crate::marginals::{latent_to_pseudo, pseudo_to_data, DataMatrix, LatentMatrix, PseudoObs};

/// HMC tuning knobs. The mass matrix is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub burnin_iterations: usize,
    pub seed: u64,
    /// Some(k): single chain emitting every k-th post-burn-in state instead
    /// of one chain per sample.
    pub thin: Option<usize>,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            step_size: 0.1,
            leapfrog_steps: 20,
            burnin_iterations: 100,
            seed: 0,
            thin: None,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("hmc step size must be positive"));
        }
        if self.leapfrog_steps == 0 {
            return Err(Error::invalid("hmc needs at least one leapfrog step"));
        }
        if self.thin == Some(0) {
            return Err(Error::invalid("thinning interval must be >= 1"));
        }
        Ok(())
    }
}

/// Aggregate sampler diagnostics.
#[derive(Debug, Clone, Default)]
pub struct ChainStats {
    pub n_samples: usize,
    pub accepted_steps: usize,
    pub total_steps: usize,
    pub divergences: usize,
    pub warnings: Vec<String>,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.accepted_steps as f64 / self.total_steps as f64
        }
    }
}

/// Outcome of one HMC transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    Diverged,
}

/// One leapfrog trajectory plus Metropolis correction. `target` returns the
/// log-density and its gradient, or None where either is non-finite; a None
/// anywhere along the trajectory counts as a divergence and rejects the
/// proposal.
pub fn hmc_step<F, R>(
    target: &F,
    z: &mut Vec<f64>,
    step_size: f64,
    leapfrog_steps: usize,
    rng: &mut R,
) -> StepOutcome
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
    R: Rng,
{
    let d = z.len();
    let mut p: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    // The Metropolis uniform is drawn up front so the RNG stream does not
    // depend on whether the trajectory diverges.
    let u: f64 = rng.gen::<f64>();

    let (logp0, grad0) = match target(z) {
        Some(v) => v,
        None => return StepOutcome::Diverged,
    };
    let h0 = -logp0 + 0.5 * p.iter().map(|v| v * v).sum::<f64>();

    let mut q = z.clone();
    let mut grad = grad0;
    // Leapfrog: half-step momentum, full-step position, repeat.
    for _ in 0..leapfrog_steps {
        for i in 0..d {
            p[i] += 0.5 * step_size * grad[i];
        }
        for i in 0..d {
            q[i] += step_size * p[i];
        }
        let (_, g) = match target(&q) {
            Some(v) => v,
            None => return StepOutcome::Diverged,
        };
        grad = g;
        for i in 0..d {
            p[i] += 0.5 * step_size * grad[i];
        }
    }
    let logp1 = match target(&q) {
        Some((v, _)) => v,
        None => return StepOutcome::Diverged,
    };
    let h1 = -logp1 + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    if !h1.is_finite() {
        return StepOutcome::Diverged;
    }
    if u < (h0 - h1).exp() {
        *z = q;
        StepOutcome::Accepted
    } else {
        StepOutcome::Rejected
    }
}

/// Burn in one chain with step-size adaptation: every 10 steps, halve the
/// step if running acceptance < 0.5, double it if > 0.95. The adapted step
/// is frozen afterwards.
fn burn_in_chain<F, R>(
    target: &F,
    z: &mut Vec<f64>,
    cfg: &HmcConfig,
    rng: &mut R,
    stats: &mut ChainStats,
) -> f64
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
    R: Rng,
{
    let mut step_size = cfg.step_size;
    let mut accepted = 0usize;
    for it in 0..cfg.burnin_iterations {
        match hmc_step(target, z, step_size, cfg.leapfrog_steps, rng) {
            StepOutcome::Accepted => {
                accepted += 1;
                stats.accepted_steps += 1;
            }
            StepOutcome::Rejected => {}
            StepOutcome::Diverged => stats.divergences += 1,
        }
        stats.total_steps += 1;
        if (it + 1) % 10 == 0 {
            let rate = accepted as f64 / (it + 1) as f64;
            if rate < 0.5 {
                step_size *= 0.5;
            } else if rate > 0.95 {
                step_size *= 2.0;
            }
        }
    }
    step_size
}

fn copula_target(c: &RatioCopula) -> impl Fn(&[f64]) -> Option<(f64, Vec<f64>)> + '_ {
    move |z: &[f64]| match c.log_target_latent(z) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => Some((v, g)),
        _ => None,
    }
}

/// Draw n copula samples. Chains derive their RNGs from the master seed by
/// stream splitting: chain i uses ChaCha stream i+1 of the seed.
pub fn sample_copula(c: &RatioCopula, n: usize, cfg: &HmcConfig) -> Result<(PseudoObs, ChainStats)> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let d = c.dim();
    let target = copula_target(c);
    let mut stats = ChainStats::default();
    let mut out = Vec::with_capacity(n * d);

    match cfg.thin {
        None => {
            // One chain per sample (burn in, emit the state after one more step).
            let mut fully_divergent_chains = 0usize;
            for chain in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(chain as u64 + 1);
                let mut z: Vec<f64> =
                    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let before = stats.accepted_steps;
                let step_size = burn_in_chain(&target, &mut z, cfg, &mut rng, &mut stats);
                match hmc_step(&target, &mut z, step_size, cfg.leapfrog_steps, &mut rng) {
                    StepOutcome::Accepted => stats.accepted_steps += 1,
                    StepOutcome::Rejected => {}
                    StepOutcome::Diverged => stats.divergences += 1,
                }
                stats.total_steps += 1;
                if stats.accepted_steps == before {
                    fully_divergent_chains += 1;
                    if stats.warnings.len() < 10 {
                        stats.warnings.push(format!("chain {chain} accepted no proposals"));
                    }
                }
                out.extend_from_slice(&z);
            }
            if fully_divergent_chains == n {
                return Err(Error::numerical("all chains rejected every proposal"));
            }
        }
        Some(thin) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1);
            let mut z: Vec<f64> =
                (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let step_size = burn_in_chain(&target, &mut z, cfg, &mut rng, &mut stats);
            let before = stats.accepted_steps;
            for _ in 0..n {
                for _ in 0..thin {
                    match hmc_step(&target, &mut z, step_size, cfg.leapfrog_steps, &mut rng) {
                        StepOutcome::Accepted => stats.accepted_steps += 1,
                        StepOutcome::Rejected => {}
                        StepOutcome::Diverged => stats.divergences += 1,
                    }
                    stats.total_steps += 1;
                }
                out.extend_from_slice(&z);
            }
            if stats.accepted_steps == before {
                return Err(Error::numerical("thinned chain rejected every proposal"));
            }
        }
    }
    stats.n_samples = n;
    let latent = LatentMatrix::new(out, d)?;
    Ok((latent_to_pseudo(&latent), stats))
}

/// Copula samples mapped back to the data scale through the fitted inverse
/// empirical CDFs.
pub fn sample_data(c: &RatioCopula, n: usize, cfg: &HmcConfig) -> Result<(DataMatrix, ChainStats)> {
    let (u, stats) = sample_copula(c, n, cfg)?;
    let data = pseudo_to_data(&u, c.marginals())?;
    Ok((data, stats))
}
