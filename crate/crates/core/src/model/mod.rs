//! SDE problem instances `dX = (b1(X) + b2(X)) dt + sigma(X) dW`.
//!
//! `b1` is the singular part (bounded and integrable for [`CaseTag::Case1`],
//! bounded Hölder for [`CaseTag::Case2`]), `b2` is dissipative and Lipschitz,
//! `sigma` is uniformly elliptic. A [`Problem`] is built from a
//! [`ProblemSpec`], which is the structured form of a `[problem]` config
//! section.

mod checks;
mod function;
mod reference;
pub mod registry;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checks::{
    check_dissipativity, check_ellipticity, check_lipschitz_b2, DissipativityReport,
    EllipticityReport, LipschitzReport,
};
pub(crate) use checks::{outer_product, symmetric_eig_range};
pub use function::{FunctionDesc, FunctionSpec, Shape};
pub use reference::{gibbs_reference_1d, ReferenceMeasure, ReferenceSummary};

/// Regularity class of the singular drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CaseTag {
    /// `b1` bounded and integrable.
    Case1,
    /// `b1` bounded and `alpha`-Hölder.
    Case2 { alpha: f64 },
}

impl CaseTag {
    pub fn label(&self) -> &'static str {
        match self {
            CaseTag::Case1 => "case1",
            CaseTag::Case2 { .. } => "case2",
        }
    }
}

/// Structured problem description, as read from a `[problem]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub dim: usize,
    /// `"case1"` or `"case2"`.
    pub case: String,
    /// Hölder exponent, required for `case2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub lambda_sigma: f64,
    pub b1: FunctionDesc,
    pub b2: FunctionDesc,
    pub sigma: FunctionDesc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: String,
    pub dim: usize,
    pub b1: FunctionSpec,
    pub b2: FunctionSpec,
    pub sigma: FunctionSpec,
    pub case: CaseTag,
    /// Dissipativity: `<x, b2(x)> <= -theta1 |x|^2 + theta2`.
    pub theta1: f64,
    pub theta2: f64,
    /// Lipschitz constant of `b2`.
    pub theta3: f64,
    /// Ellipticity: `lambda_sigma I <= sigma sigma' <= lambda_sigma^{-1} I`.
    pub lambda_sigma: f64,
}

/// Validates a spec and builds the problem.
pub fn make_problem(spec: &ProblemSpec) -> Result<Problem> {
    if spec.dim == 0 {
        return Err(Error::invalid("dim", 0.0, "dimension must be at least 1"));
    }
    let positive = |name: &'static str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::invalid(name, v, "must be positive and finite"))
        }
    };
    let theta1 = positive("theta1", spec.theta1)?;
    let theta3 = positive("theta3", spec.theta3)?;
    if !(spec.theta2 >= 0.0 && spec.theta2.is_finite()) {
        return Err(Error::invalid("theta2", spec.theta2, "must be non-negative and finite"));
    }
    if !(spec.lambda_sigma > 0.0 && spec.lambda_sigma < 1.0) {
        return Err(Error::invalid(
            "lambda_sigma",
            spec.lambda_sigma,
            "ellipticity constant must lie in (0, 1)",
        ));
    }
    let case = match spec.case.to_ascii_lowercase().as_str() {
        "case1" => CaseTag::Case1,
        "case2" => {
            let alpha = spec
                .alpha
                .ok_or_else(|| Error::Config("case2 requires `alpha`".into()))?;
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::invalid("alpha", alpha, "Hölder exponent must lie in (0, 1)"));
            }
            CaseTag::Case2 { alpha }
        }
        other => return Err(Error::Config(format!("unknown case `{other}`"))),
    };

    let b1 = FunctionSpec::from_desc(&spec.b1, spec.dim)?;
    let b2 = FunctionSpec::from_desc(&spec.b2, spec.dim)?;
    let sigma = FunctionSpec::from_desc(&spec.sigma, spec.dim)?;
    for (name, f, want) in [
        ("b1", &b1, Shape::Vector),
        ("b2", &b2, Shape::Vector),
        ("sigma", &sigma, Shape::Matrix),
    ] {
        if f.shape() != want && !f.is_zero() {
            return Err(Error::DimensionMismatch(format!(
                "`{name}` must be {}-valued",
                if want == Shape::Vector { "vector" } else { "matrix" }
            )));
        }
    }

    Ok(Problem {
        name: spec.name.clone().unwrap_or_else(|| "custom".to_string()),
        dim: spec.dim,
        b1,
        b2,
        sigma,
        case,
        theta1,
        theta2: spec.theta2,
        theta3,
        lambda_sigma: spec.lambda_sigma,
    })
}

impl Problem {
    /// Full drift `b1(x) + b2(x)`.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.b1.add_vector(x, out);
        self.b2.add_vector(x, out);
    }

    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        self.sigma.eval_matrix(x, out);
    }

    /// Scalar diffusion coefficient for 1D constant-sigma problems.
    pub fn constant_scalar_sigma(&self) -> Option<f64> {
        if self.dim != 1 || !self.sigma.is_constant() {
            return None;
        }
        let mut s = [0.0];
        self.sigma.eval_matrix(&[0.0], &mut s);
        Some(s[0])
    }
}
