//! Euler-Maruyama chains `Z_{k+1} = Z_k + η b̂(Z_k) + √η σ̂(Z_k) ξ_{k+1}`.

mod noise;
mod samples;

use rayon::prelude::*;
use serde::Serialize;

use crate::corrector::{CorrectorField, TransformedCoefficients};
use crate::error::{Error, Result};
use crate::model::{CaseTag, Problem};

pub use noise::{chain_seed, splitmix64, NoiseStream};
pub use samples::{Coordinates, SampleSet};

/// Side information from one coefficient evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalFlags {
    /// The corrector was evaluated outside its grid box.
    pub out_of_domain: bool,
    /// The preimage fell outside the trusted inner ball.
    pub untrusted: bool,
}

/// Drift and diffusion of the equation a chain discretizes.
pub trait Coefficients: Sync {
    fn dim(&self) -> usize;

    /// Writes `b(z)` and row-major `σ(z)`.
    fn evaluate(&self, z: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<EvalFlags>;

    /// `|Z|` beyond which a chain is declared unstable.
    fn excursion_limit(&self) -> f64;
}

impl Coefficients for TransformedCoefficients {
    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn evaluate(&self, z: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<EvalFlags> {
        TransformedCoefficients::evaluate(self, z, drift, diffusion)
    }

    fn excursion_limit(&self) -> f64 {
        10.0 * self.field.grid.radius
    }
}

/// The original coefficients `(b1 + b2, σ)`, for the naive baseline.
#[derive(Debug, Clone)]
pub struct OriginalCoefficients<'a> {
    pub problem: &'a Problem,
    pub limit: f64,
}

impl Coefficients for OriginalCoefficients<'_> {
    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn evaluate(&self, z: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<EvalFlags> {
        self.problem.drift(z, drift);
        self.problem.diffusion(z, diffusion);
        Ok(EvalFlags::default())
    }

    fn excursion_limit(&self) -> f64 {
        self.limit
    }
}

/// Position-independent coefficients.
#[derive(Debug, Clone)]
pub struct ConstantCoefficients {
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
}

impl Coefficients for ConstantCoefficients {
    fn dim(&self) -> usize {
        self.drift.len()
    }

    fn evaluate(&self, _z: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<EvalFlags> {
        drift.copy_from_slice(&self.drift);
        diffusion.copy_from_slice(&self.diffusion);
        Ok(EvalFlags::default())
    }

    fn excursion_limit(&self) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainConfig {
    pub eta: f64,
    pub k_total: u64,
    pub k_burn: u64,
    pub thin: u64,
    /// Initial state in the chain's own coordinates.
    pub z0: Vec<f64>,
    pub seed: u64,
}

impl ChainConfig {
    /// Step counts from physical times: `k_total = ceil(t_run/η)`,
    /// `k_burn = ceil(t_burn/η)`, and one retained state per 0.1 time units.
    pub fn from_times(eta: f64, t_burn: f64, t_run: f64, z0: Vec<f64>, seed: u64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 0.5) {
            return Err(Error::invalid("eta", eta, "step size must lie in (0, 0.5]"));
        }
        let cfg = ChainConfig {
            eta,
            k_total: (t_run / eta).ceil() as u64,
            k_burn: (t_burn / eta).ceil() as u64,
            thin: ((1.0 / (10.0 * eta)).floor() as u64).max(1),
            z0,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 0.5) {
            return Err(Error::invalid("eta", self.eta, "step size must lie in (0, 0.5]"));
        }
        if self.k_burn >= self.k_total {
            return Err(Error::InvalidArgument(format!(
                "burn-in ({} steps) must be shorter than the run ({} steps)",
                self.k_burn, self.k_total
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        if self.z0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial state must be finite".into()));
        }
        Ok(())
    }

    /// Number of states a chain retains.
    pub fn n_retained(&self) -> u64 {
        (self.k_total - self.k_burn) / self.thin
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ChainTelemetry {
    /// `max_k |Z_k|`.
    pub max_excursion: f64,
    pub out_of_domain_hits: u64,
    pub untrusted_hits: u64,
    pub evaluations: u64,
}

impl ChainTelemetry {
    fn merge(&mut self, other: &ChainTelemetry) {
        self.max_excursion = self.max_excursion.max(other.max_excursion);
        self.out_of_domain_hits += other.out_of_domain_hits;
        self.untrusted_hits += other.untrusted_hits;
        self.evaluations += other.evaluations;
    }
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub final_state: Vec<f64>,
    /// Retained states, flattened (`dim` values each).
    pub samples: Vec<f64>,
    pub telemetry: ChainTelemetry,
}

/// Scratch buffers for [`em_step_into`].
#[derive(Debug, Clone)]
pub struct StepBuffers {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl StepBuffers {
    pub fn new(dim: usize) -> Self {
        StepBuffers {
            drift: vec![0.0; dim],
            diffusion: vec![0.0; dim * dim],
        }
    }
}

/// One step `z + η b(z) + √η σ(z) ξ`, written to `out`.
pub fn em_step_into<C: Coefficients + ?Sized>(
    coeffs: &C,
    z: &[f64],
    eta: f64,
    xi: &[f64],
    buf: &mut StepBuffers,
    out: &mut [f64],
) -> Result<EvalFlags> {
    let d = z.len();
    let flags = coeffs.evaluate(z, &mut buf.drift, &mut buf.diffusion)?;
    let sq = eta.sqrt();
    for i in 0..d {
        let noise: f64 = (0..d).map(|j| buf.diffusion[i * d + j] * xi[j]).sum();
        out[i] = z[i] + eta * buf.drift[i] + sq * noise;
    }
    Ok(flags)
}

pub fn em_step<C: Coefficients + ?Sized>(coeffs: &C, z: &[f64], eta: f64, xi: &[f64]) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta", eta, "step size must be positive"));
    }
    if xi.len() != z.len() || z.len() != coeffs.dim() {
        return Err(Error::DimensionMismatch("state, noise and coefficients disagree".into()));
    }
    let mut out = vec![0.0; z.len()];
    em_step_into(coeffs, z, eta, xi, &mut StepBuffers::new(z.len()), &mut out)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step: 1 });
    }
    Ok(out)
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs one chain with noise from `NoiseStream::new(cfg.seed, dim)`.
pub fn run_chain<C: Coefficients + ?Sized>(coeffs: &C, cfg: &ChainConfig) -> Result<ChainResult> {
    cfg.validate()?;
    let d = coeffs.dim();
    if cfg.z0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} components, expected {d}",
            cfg.z0.len()
        )));
    }
    let limit = coeffs.excursion_limit();
    let mut noise = NoiseStream::new(cfg.seed, d);
    let mut buf = StepBuffers::new(d);
    let mut xi = vec![0.0; d];
    let mut z = cfg.z0.clone();
    let mut next = vec![0.0; d];
    let mut samples = Vec::with_capacity(cfg.n_retained() as usize * d);
    let mut tel = ChainTelemetry {
        max_excursion: norm(&z),
        ..Default::default()
    };
    for k in 1..=cfg.k_total {
        noise.fill(&mut xi);
        let flags = em_step_into(coeffs, &z, cfg.eta, &xi, &mut buf, &mut next)?;
        tel.evaluations += 1;
        tel.out_of_domain_hits += flags.out_of_domain as u64;
        tel.untrusted_hits += flags.untrusted as u64;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: k });
        }
        let r = norm(&next);
        if r > limit {
            return Err(Error::ExcursionGuard {
                step: k,
                norm: r,
                limit,
            });
        }
        tel.max_excursion = tel.max_excursion.max(r);
        std::mem::swap(&mut z, &mut next);
        if k > cfg.k_burn && (k - cfg.k_burn) % cfg.thin == 0 {
            samples.extend_from_slice(&z);
        }
    }
    Ok(ChainResult {
        final_state: z,
        samples,
        telemetry: tel,
    })
}

/// Ensemble of `n_chains` chains with seeds `chain_seed(master_seed, i)`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub samples: SampleSet,
    pub telemetry: ChainTelemetry,
}

pub fn run_ensemble<C: Coefficients + ?Sized>(
    coeffs: &C,
    base: &ChainConfig,
    n_chains: usize,
    master_seed: u64,
    problem_id: &str,
    coordinates: Coordinates,
) -> Result<Ensemble> {
    if n_chains == 0 {
        return Err(Error::InvalidArgument("n_chains must be at least 1".into()));
    }
    base.validate()?;
    let results: Vec<Result<ChainResult>> = (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let cfg = ChainConfig {
                seed: chain_seed(master_seed, i),
                ..base.clone()
            };
            run_chain(coeffs, &cfg).map_err(|e| Error::Chain {
                index: i,
                source: Box::new(e),
            })
        })
        .collect();
    let d = coeffs.dim();
    let mut data = Vec::new();
    let mut lengths = Vec::with_capacity(n_chains);
    let mut tel = ChainTelemetry::default();
    for r in results {
        let r = r?;
        lengths.push(r.samples.len() / d);
        data.extend_from_slice(&r.samples);
        tel.merge(&r.telemetry);
    }
    Ok(Ensemble {
        samples: SampleSet::new(d, data, base.eta, lengths, coordinates, master_seed, problem_id)?,
        telemetry: tel,
    })
}

/// Ensemble of the transformed scheme; samples are in transformed coordinates.
pub fn run_transformed_ensemble(
    tc: &TransformedCoefficients,
    base: &ChainConfig,
    n_chains: usize,
    master_seed: u64,
) -> Result<Ensemble> {
    let id = tc.problem.name.clone();
    run_ensemble(tc, base, n_chains, master_seed, &id, Coordinates::Transformed)
}

/// Maps every sample through `Φ⁻¹`.
pub fn pull_back(field: &CorrectorField, s: &SampleSet) -> Result<SampleSet> {
    if s.coordinates != Coordinates::Transformed {
        return Err(Error::InvalidArgument("pull_back needs transformed samples".into()));
    }
    if s.dim != field.dim() {
        return Err(Error::DimensionMismatch(format!(
            "samples have dim {}, corrector has dim {}",
            s.dim,
            field.dim()
        )));
    }
    let d = s.dim;
    let mut out = vec![0.0; s.values().len()];
    out.par_chunks_mut(d)
        .zip(s.values().par_chunks(d))
        .enumerate()
        .try_for_each(|(i, (x, y))| {
            field
                .phi_inverse_into(
                    y,
                    crate::corrector::INVERSE_TOL,
                    crate::corrector::INVERSE_MAX_ITER,
                    x,
                )
                .map(|_| ())
                .map_err(|e| Error::Sample {
                    index: i,
                    source: Box::new(e),
                })
        })?;
    let mut back = s.clone();
    back.replace_values(out, Coordinates::PulledBack)?;
    Ok(back)
}

/// Naive scheme on the original coefficients, refused for Case 1 drifts.
pub fn naive_ensemble(
    problem: &Problem,
    base: &ChainConfig,
    n_chains: usize,
    master_seed: u64,
    excursion_limit: f64,
) -> Result<Ensemble> {
    if problem.case == CaseTag::Case1 {
        return Err(Error::Case1Unsupported);
    }
    let coeffs = OriginalCoefficients {
        problem,
        limit: excursion_limit,
    };
    let id = format!("{}/naive", problem.name);
    run_ensemble(&coeffs, base, n_chains, master_seed, &id, Coordinates::PulledBack)
}

/// Single naive chain as a sample set in original coordinates.
pub fn naive_chain(problem: &Problem, cfg: &ChainConfig, excursion_limit: f64) -> Result<SampleSet> {
    if problem.case == CaseTag::Case1 {
        return Err(Error::Case1Unsupported);
    }
    let coeffs = OriginalCoefficients {
        problem,
        limit: excursion_limit,
    };
    let r = run_chain(&coeffs, cfg)?;
    let n = r.samples.len() / problem.dim;
    SampleSet::new(
        problem.dim,
        r.samples,
        cfg.eta,
        vec![n],
        Coordinates::PulledBack,
        cfg.seed,
        &format!("{}/naive", problem.name),
    )
}
