use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ReferenceConfig};
use super::fit::{fit_pinned_power, fit_rate, RateFit, RateModel, RatePoint};
use crate::corrector::{
    check_field_matches, select_lambda, CorrectorField, FittedDissipativity, TransformedCoefficients,
};
use crate::error::{Error, Result};
use crate::metrics::{
    empirical_moment, lyapunov_drift_probe, sliced_w1, w1_bootstrap_replicates, w1_exact_1d,
    w1_to_reference_1d, DriftReport, BOOTSTRAP_RESAMPLES,
};
use crate::model::{
    check_dissipativity, check_ellipticity, check_lipschitz_b2, gibbs_reference_1d, CaseTag,
    DissipativityReport, EllipticityReport, LipschitzReport, Problem, ReferenceMeasure,
    ReferenceSummary,
};
use crate::sampler::{
    chain_seed, naive_ensemble, pull_back, run_transformed_ensemble, splitmix64, ChainConfig,
    ChainTelemetry, SampleSet,
};

const ASSUMPTION_POINTS: usize = 4096;
const BOOTSTRAP_SALT: u64 = 0xb007_57a9;
const PROBE_SALT: u64 = 0x9e0b_e5a1;
const SLICE_SALT: u64 = 0x511c_ed00;

/// One CSV row. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub problem: String,
    pub case: String,
    pub eta: f64,
    pub n_samples: usize,
    /// W1 to the reference (`NaN` without one).
    pub w1: f64,
    /// 95% bootstrap half width of `w1`.
    pub w1_ci: f64,
    /// Split-half W1, the sampling-noise level.
    pub floor: f64,
    pub moment2: f64,
    pub moment6: f64,
    pub lambda: f64,
    pub sup_grad_u: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Transformed,
    Naive,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeFits {
    pub scheme: Scheme,
    pub pure_power: Option<RateFit>,
    pub power_log: Option<RateFit>,
    /// Pure power law pinned at `α/2` (Case 2 only).
    pub pinned_holder: Option<RateFit>,
    pub errors: Vec<String>,
}

impl SchemeFits {
    /// The fit drawn in the plot: the log-corrected law for Case 2's
    /// transformed scheme, the pure power law otherwise.
    pub fn primary(&self, case: CaseTag) -> Option<&RateFit> {
        match (self.scheme, case) {
            (Scheme::Transformed, CaseTag::Case2 { .. }) => self.power_log.as_ref(),
            _ => self.pure_power.as_ref(),
        }
    }
}

/// Step size against the shape of the error bound and the step size the
/// bound would ask for at the measured accuracy.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetNote {
    /// `η^{γ/2}` in Case 1, `η^{1/2} |log η|` in Case 2.
    pub bound_shape: f64,
    /// `w1^{2/γ}` in Case 1, `w1^{8/3}` in Case 2.
    pub eta_for_measured_w1: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EtaDiagnostics {
    pub eta: f64,
    pub scheme: Scheme,
    pub chain: ChainConfig,
    pub telemetry: ChainTelemetry,
    /// `E|Z|⁶` of the chain in its own coordinates.
    pub chain_moment6: f64,
    pub drift_probe: Option<DriftReport>,
    pub budget: BudgetNote,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReports {
    pub dissipativity: DissipativityReport,
    pub lipschitz_b2: LipschitzReport,
    pub ellipticity: EllipticityReport,
    pub radius: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectorSummary {
    pub lambda: f64,
    pub sup_u: f64,
    pub sup_grad_u: f64,
    pub radius: f64,
    pub n_per_axis: usize,
    pub inner_radius: f64,
    pub from_cache: bool,
    pub transformed_dissipativity: FittedDissipativity,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub problem: String,
    pub case: CaseTag,
    pub dim: usize,
    pub gamma_target: f64,
    pub master_seed: u64,
    pub eta_grid: Vec<f64>,
    pub assumptions: AssumptionReports,
    pub reference: Option<ReferenceSummary>,
    pub corrector: CorrectorSummary,
    pub rows: Vec<MetricRow>,
    pub fits: Vec<SchemeFits>,
    pub diagnostics: Vec<EtaDiagnostics>,
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    pub fn rows_for(&self, scheme: Scheme) -> impl Iterator<Item = &MetricRow> {
        let naive = scheme == Scheme::Naive;
        self.rows.iter().filter(move |r| r.problem.ends_with("/naive") == naive)
    }

    pub fn fits_for(&self, scheme: Scheme) -> Option<&SchemeFits> {
        self.fits.iter().find(|f| f.scheme == scheme)
    }
}

pub fn assumption_reports(problem: &Problem, radius: f64, seed: u64) -> Result<AssumptionReports> {
    Ok(AssumptionReports {
        dissipativity: check_dissipativity(problem, ASSUMPTION_POINTS, radius, seed)?,
        lipschitz_b2: check_lipschitz_b2(problem, ASSUMPTION_POINTS, radius, seed)?,
        ellipticity: check_ellipticity(problem, ASSUMPTION_POINTS, radius, seed)?,
        radius,
        n_points: ASSUMPTION_POINTS,
    })
}

/// Loads the cached corrector when the config names one that exists and
/// matches, otherwise runs the lambda search.
pub fn obtain_corrector(cfg: &ExperimentConfig, problem: &Problem) -> Result<(CorrectorField, bool)> {
    let grid = cfg.grid(problem.dim)?;
    if let Some(path) = cfg.corrector.cache.as_deref().filter(|p| p.exists()) {
        let field = CorrectorField::load(path)?;
        check_field_matches(&field, problem)?;
        if field.grid != grid {
            return Err(Error::Config(format!(
                "cached corrector {} was solved on a different grid",
                path.display()
            )));
        }
        if !(field.sup_grad_u <= cfg.corrector.target) {
            return Err(Error::invalid(
                "sup_grad_u",
                field.sup_grad_u,
                "cached corrector misses the gradient target",
            ));
        }
        return Ok((field, true));
    }
    let (_, field) = select_lambda(problem, &grid, cfg.corrector.target, cfg.corrector.lambda0)?;
    Ok((field, false))
}

struct Measured {
    w1: f64,
    w1_ci: f64,
    floor: f64,
    replicates: Vec<f64>,
}

fn measure(s: &SampleSet, reference: Option<&ReferenceMeasure>, seed: u64, directions: usize) -> Result<Measured> {
    let (a, b) = s.split_halves();
    let floor = if s.dim == 1 {
        w1_exact_1d(&a, &b)?.value
    } else {
        sliced_w1(&a, &b, directions, seed ^ SLICE_SALT)?.value
    };
    let Some(reference) = reference else {
        return Ok(Measured {
            w1: f64::NAN,
            w1_ci: f64::NAN,
            floor,
            replicates: Vec::new(),
        });
    };
    let w1 = w1_to_reference_1d(s, reference, None)?.value;
    let replicates = if s.len() >= 2 {
        w1_bootstrap_replicates(s, reference, seed ^ BOOTSTRAP_SALT, BOOTSTRAP_RESAMPLES)?
    } else {
        Vec::new()
    };
    let w1_ci = if replicates.is_empty() {
        f64::NAN
    } else {
        let mut sorted = replicates.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| sorted[(p * (sorted.len() - 1) as f64).round() as usize];
        0.5 * (q(0.975) - q(0.025))
    };
    Ok(Measured {
        w1,
        w1_ci,
        floor,
        replicates,
    })
}

/// Probe points on rays through the origin, alternating axis and sign, at
/// radii spread evenly over `[0, radius]`.
fn probe_points(dim: usize, n: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| {
            let r = radius * j as f64 / (n - 1) as f64;
            let mut x = vec![0.0; dim];
            x[j % dim] = if j % 2 == 0 { r } else { -r };
            x
        })
        .collect()
}

fn budget(case: CaseTag, gamma: f64, eta: f64, w1: f64) -> BudgetNote {
    let (shape, needed) = match case {
        CaseTag::Case1 => (eta.powf(gamma / 2.0), w1.powf(2.0 / gamma)),
        CaseTag::Case2 { .. } => (eta.sqrt() * eta.ln().abs(), w1.powf(8.0 / 3.0)),
    };
    BudgetNote {
        bound_shape: shape,
        eta_for_measured_w1: needed.is_finite().then_some(needed),
    }
}

fn fits_for(scheme: Scheme, case: CaseTag, points: &[RatePoint]) -> SchemeFits {
    let mut errors = Vec::new();
    let mut keep = |r: Result<RateFit>, what: &str| match r {
        Ok(f) => Some(f),
        Err(e) => {
            errors.push(format!("{what}: {e}"));
            None
        }
    };
    let pure_power = keep(fit_rate(points, RateModel::PurePower), "pure power");
    let power_log = keep(fit_rate(points, RateModel::PowerLog), "power-log");
    let pinned_holder = match case {
        CaseTag::Case2 { alpha } => keep(fit_pinned_power(points, alpha / 2.0), "pinned"),
        CaseTag::Case1 => None,
    };
    SchemeFits {
        scheme,
        pure_power,
        power_log,
        pinned_holder,
        errors,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_progress(cfg, &|_| {})
}

/// Full pipeline: assumption reports, corrector and lambda search, one
/// ensemble per step size (plus the naive baseline when requested),
/// metrics, drift probes and rate fits. Errors name the failing stage.
pub fn run_experiment_with_progress(cfg: &ExperimentConfig, progress: &dyn Fn(&str)) -> Result<ExperimentResult> {
    let problem = cfg.validate().map_err(|e| e.at_stage("config", None))?;
    let d = problem.dim;
    let grid = cfg.grid(d).map_err(|e| e.at_stage("config", None))?;
    let mut warnings = Vec::new();

    let assumptions = assumption_reports(&problem, grid.radius - 4.0f64.max(grid.radius / 3.0), cfg.master_seed)
        .map_err(|e| e.at_stage("assumptions", None))?;
    if !assumptions.dissipativity.holds() {
        warnings.push("sampled dissipativity check failed for b2".into());
    }
    if assumptions.lipschitz_b2.flagged {
        warnings.push("sampled Lipschitz estimate of b2 exceeds theta3".into());
    }
    if !assumptions.ellipticity.passed {
        warnings.push("sampled ellipticity check failed for sigma".into());
    }

    let reference = match cfg.reference {
        ReferenceConfig::Gibbs1d { r_ref, n_grid } => {
            progress("reference measure");
            Some(gibbs_reference_1d(&problem, r_ref, n_grid).map_err(|e| e.at_stage("reference", None))?)
        }
        ReferenceConfig::None => {
            warnings.push("no reference measure: w1 and rate fits are not computed".into());
            None
        }
    };

    progress("corrector");
    let (field, from_cache) = obtain_corrector(cfg, &problem).map_err(|e| e.at_stage("corrector", None))?;
    let lambda = field.lambda;
    let sup_grad_u = field.sup_grad_u;
    let sup_u = field.sup_u;
    let tc = TransformedCoefficients::new(problem.clone(), field).map_err(|e| e.at_stage("corrector", None))?;
    let transformed_dissipativity = tc
        .fit_dissipativity(tc.inner_radius, 2048, cfg.master_seed)
        .map_err(|e| e.at_stage("corrector", None))?;
    if !(transformed_dissipativity.theta1_hat > 0.0) {
        warnings.push("transformed drift shows no sampled dissipativity".into());
    }
    let z0 = tc.field.phi(&vec![0.0; d]);

    let case_label = problem.case.label().to_string();
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut transformed_points = Vec::new();
    let mut naive_points = Vec::new();
    if cfg.eta_grid.is_empty() {
        warnings.push("empty eta grid: no samples were drawn".into());
    }
    for (i, &eta) in cfg.eta_grid.iter().enumerate() {
        let seed = chain_seed(cfg.master_seed, i);
        progress(&format!("eta = {eta}: transformed scheme"));
        let stage = |s: &'static str| move |e: Error| e.at_stage(s, Some(eta));
        let chain = ChainConfig::from_times(eta, cfg.t_burn, cfg.t_run, z0.clone(), seed).map_err(stage("sampling"))?;
        let ens = run_transformed_ensemble(&tc, &chain, cfg.chains, seed).map_err(stage("sampling"))?;
        let chain_moment6 = empirical_moment(&ens.samples, 6).map_err(stage("metrics"))?;
        let back = pull_back(&tc.field, &ens.samples).map_err(stage("pull_back"))?;
        let m = measure(&back, reference.as_ref(), seed, cfg.sliced_directions).map_err(stage("metrics"))?;
        rows.push(MetricRow {
            problem: problem.name.clone(),
            case: case_label.clone(),
            eta,
            n_samples: back.len(),
            w1: m.w1,
            w1_ci: m.w1_ci,
            floor: m.floor,
            moment2: empirical_moment(&back, 2).map_err(stage("metrics"))?,
            moment6: empirical_moment(&back, 6).map_err(stage("metrics"))?,
            lambda,
            sup_grad_u,
            seed,
        });
        let probes = probe_points(d, cfg.probe.n_points, tc.inner_radius);
        let probe = lyapunov_drift_probe(&tc, &probes, eta, cfg.probe.n_draws, splitmix64(seed ^ PROBE_SALT))
            .map_err(stage("drift_probe"))?;
        if !probe.passed() {
            warnings.push(format!("eta = {eta}: drift probe reported {} violations", probe.violations));
        }
        if ens.telemetry.out_of_domain_hits > 0 {
            warnings.push(format!(
                "eta = {eta}: {} evaluations left the corrector grid",
                ens.telemetry.out_of_domain_hits
            ));
        }
        transformed_points.push(RatePoint {
            eta,
            w1: m.w1,
            floor: m.floor,
            replicates: m.replicates,
        });
        diagnostics.push(EtaDiagnostics {
            eta,
            scheme: Scheme::Transformed,
            chain: chain.clone(),
            telemetry: ens.telemetry,
            chain_moment6,
            drift_probe: Some(probe),
            budget: budget(problem.case, cfg.gamma_target, eta, m.w1),
        });

        if cfg.baseline {
            progress(&format!("eta = {eta}: naive scheme"));
            let naive_cfg = ChainConfig {
                z0: vec![0.0; d],
                ..chain
            };
            let limit = 10.0 * grid.radius;
            let ens = naive_ensemble(&problem, &naive_cfg, cfg.chains, seed, limit).map_err(stage("baseline"))?;
            let m = measure(&ens.samples, reference.as_ref(), seed, cfg.sliced_directions).map_err(stage("baseline"))?;
            let moment6 = empirical_moment(&ens.samples, 6).map_err(stage("baseline"))?;
            rows.push(MetricRow {
                problem: format!("{}/naive", problem.name),
                case: case_label.clone(),
                eta,
                n_samples: ens.samples.len(),
                w1: m.w1,
                w1_ci: m.w1_ci,
                floor: m.floor,
                moment2: empirical_moment(&ens.samples, 2).map_err(stage("baseline"))?,
                moment6,
                lambda: 0.0,
                sup_grad_u: 0.0,
                seed,
            });
            naive_points.push(RatePoint {
                eta,
                w1: m.w1,
                floor: m.floor,
                replicates: m.replicates,
            });
            diagnostics.push(EtaDiagnostics {
                eta,
                scheme: Scheme::Naive,
                chain: naive_cfg,
                telemetry: ens.telemetry,
                chain_moment6: moment6,
                drift_probe: None,
                budget: budget(problem.case, cfg.gamma_target, eta, m.w1),
            });
        }
    }

    let mut fits = Vec::new();
    if reference.is_some() && !cfg.eta_grid.is_empty() {
        progress("rate fits");
        let mut schemes = vec![(Scheme::Transformed, transformed_points)];
        if cfg.baseline {
            schemes.push((Scheme::Naive, naive_points));
        }
        for (scheme, points) in schemes {
            let f = fits_for(scheme, problem.case, &points);
            for e in &f.errors {
                warnings.push(format!("{scheme:?} fit skipped, {e}"));
            }
            fits.push(f);
        }
    }

    Ok(ExperimentResult {
        problem: problem.name.clone(),
        case: problem.case,
        dim: d,
        gamma_target: cfg.gamma_target,
        master_seed: cfg.master_seed,
        eta_grid: cfg.eta_grid.clone(),
        assumptions,
        reference: reference.as_ref().map(|r| r.summary()),
        corrector: CorrectorSummary {
            lambda,
            sup_u,
            sup_grad_u,
            radius: grid.radius,
            n_per_axis: grid.n_per_axis,
            inner_radius: tc.inner_radius,
            from_cache,
            transformed_dissipativity,
        },
        rows,
        fits,
        diagnostics,
        warnings,
    })
}
