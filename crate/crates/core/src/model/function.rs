//! Closed registry of coefficient functions.
//!
//! Vector-valued kinds (drifts) write into a `d`-vector, matrix-valued kinds
//! (diffusions) into a row-major `d x d` buffer. Evaluation is total and
//! deterministic; the only non-smooth kinds are [`FunctionSpec::HolderSine`]
//! (Hölder continuous) and [`FunctionSpec::Bump`] (bounded with a jump).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a kind produces a drift vector or a diffusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector,
    Matrix,
}

/// User-facing description of a function: a kind name plus its parameters,
/// exactly as it appears in a `[problem.b1]`-style configuration table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDesc {
    pub kind: String,
    #[serde(flatten)]
    pub params: toml::Table,
}

impl FunctionDesc {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            params: toml::Table::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn zero() -> Self {
        Self::new("zero")
    }

    /// `x -> scale * x`.
    pub fn linear_scale(scale: f64) -> Self {
        Self::new("linear").with("scale", scale)
    }

    pub fn linear(matrix: &[Vec<f64>]) -> Self {
        Self::new("linear").with("matrix", matrix_value(matrix))
    }

    pub fn sine(amplitude: f64, frequency: f64) -> Self {
        Self::new("sine")
            .with("amplitude", amplitude)
            .with("frequency", frequency)
    }

    pub fn holder_sine(amplitude: f64, alpha: f64) -> Self {
        Self::new("holder_sine")
            .with("amplitude", amplitude)
            .with("alpha", alpha)
    }

    pub fn bump(height: f64, halfwidth: f64) -> Self {
        Self::new("bump")
            .with("height", height)
            .with("halfwidth", halfwidth)
    }

    pub fn constant_scale(scale: f64) -> Self {
        Self::new("constant_matrix").with("scale", scale)
    }

    pub fn constant_matrix(matrix: &[Vec<f64>]) -> Self {
        Self::new("constant_matrix").with("matrix", matrix_value(matrix))
    }

    pub fn diagonal_sine_matrix(base: f64, amplitude: f64, frequency: f64) -> Self {
        Self::new("diagonal_sine_matrix")
            .with("base", base)
            .with("amplitude", amplitude)
            .with("frequency", frequency)
    }

    pub fn composite(parts: Vec<FunctionDesc>) -> Self {
        let parts = parts
            .into_iter()
            .map(|p| toml::Value::try_from(p).expect("function description serializes"))
            .collect::<Vec<_>>();
        Self::new("composite").with("parts", toml::Value::Array(parts))
    }
}

fn matrix_value(matrix: &[Vec<f64>]) -> toml::Value {
    toml::Value::Array(
        matrix
            .iter()
            .map(|row| toml::Value::Array(row.iter().map(|&v| toml::Value::Float(v)).collect()))
            .collect(),
    )
}

/// A validated coefficient function.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionSpec {
    /// Identically zero vector field.
    Zero,
    /// `x -> A x`, with `A` stored row-major.
    Linear { dim: usize, matrix: Vec<f64> },
    /// `x -> amplitude * (sin(frequency x_1), ..., sin(frequency x_d))`.
    Sine { amplitude: f64, frequency: f64 },
    /// `x -> amplitude * (|sin x_1|^alpha, ..., |sin x_d|^alpha)`.
    HolderSine { amplitude: f64, alpha: f64 },
    /// `height * 1{|x| <= halfwidth} e_1`. In one dimension the value at a
    /// jump is the left limit, i.e. the indicator of `(-w, w]`.
    Bump { height: f64, halfwidth: f64 },
    /// Constant diffusion matrix, row-major.
    ConstantMatrix { dim: usize, matrix: Vec<f64> },
    /// `diag(base + amplitude sin(frequency x_i))`.
    DiagonalSineMatrix {
        base: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Pointwise sum of same-shaped parts.
    Composite(Vec<FunctionSpec>),
}

impl FunctionSpec {
    /// Parses a description for a problem of dimension `dim`.
    pub fn from_desc(desc: &FunctionDesc, dim: usize) -> Result<Self> {
        let p = Params {
            kind: &desc.kind,
            table: &desc.params,
        };
        let spec = match desc.kind.as_str() {
            "zero" => FunctionSpec::Zero,
            "linear" => FunctionSpec::Linear {
                dim,
                matrix: p.square_matrix(dim)?,
            },
            "sine" => FunctionSpec::Sine {
                amplitude: p.float("amplitude")?,
                frequency: p.float_or("frequency", 1.0)?,
            },
            "holder_sine" => {
                let alpha = p.float("alpha")?;
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::invalid("alpha", alpha, "Hölder exponent must lie in (0, 1]"));
                }
                FunctionSpec::HolderSine {
                    amplitude: p.float("amplitude")?,
                    alpha,
                }
            }
            "bump" => {
                let halfwidth = p.float("halfwidth")?;
                if !(halfwidth > 0.0) {
                    return Err(Error::invalid("halfwidth", halfwidth, "must be positive"));
                }
                FunctionSpec::Bump {
                    height: p.float("height")?,
                    halfwidth,
                }
            }
            "constant_matrix" => FunctionSpec::ConstantMatrix {
                dim,
                matrix: p.square_matrix(dim)?,
            },
            "diagonal_sine_matrix" => {
                let base = p.float("base")?;
                let amplitude = p.float("amplitude")?;
                if !(base - amplitude.abs() > 0.0) {
                    return Err(Error::invalid(
                        "base",
                        base,
                        "diagonal_sine_matrix needs base - |amplitude| > 0",
                    ));
                }
                FunctionSpec::DiagonalSineMatrix {
                    base,
                    amplitude,
                    frequency: p.float_or("frequency", 1.0)?,
                }
            }
            "composite" => {
                let parts = p
                    .table
                    .get("parts")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| Error::Config("composite needs an array `parts`".into()))?;
                let parts = parts
                    .iter()
                    .map(|v| {
                        let d: FunctionDesc = v
                            .clone()
                            .try_into()
                            .map_err(|e| Error::Config(format!("composite part: {e}")))?;
                        FunctionSpec::from_desc(&d, dim)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let shapes: Vec<Shape> = parts.iter().map(|p| p.shape()).collect();
                if shapes.windows(2).any(|w| w[0] != w[1]) {
                    return Err(Error::DimensionMismatch(
                        "composite mixes vector- and matrix-valued parts".into(),
                    ));
                }
                FunctionSpec::Composite(parts)
            }
            other => return Err(Error::UnknownKind(other.to_string())),
        };
        Ok(spec)
    }

    pub fn shape(&self) -> Shape {
        match self {
            FunctionSpec::ConstantMatrix { .. } | FunctionSpec::DiagonalSineMatrix { .. } => {
                Shape::Matrix
            }
            FunctionSpec::Composite(parts) => parts.first().map_or(Shape::Vector, |p| p.shape()),
            _ => Shape::Vector,
        }
    }

    /// Adds `f(x)` to `out` (length `d`).
    pub fn add_vector(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FunctionSpec::Zero => {}
            FunctionSpec::Linear { dim, matrix } => {
                for (i, o) in out.iter_mut().enumerate().take(*dim) {
                    let row = &matrix[i * dim..(i + 1) * dim];
                    *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            FunctionSpec::Sine {
                amplitude,
                frequency,
            } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += amplitude * (frequency * xi).sin();
                }
            }
            FunctionSpec::HolderSine { amplitude, alpha } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += amplitude * xi.sin().abs().powf(*alpha);
                }
            }
            FunctionSpec::Bump { height, halfwidth } => {
                let inside = if x.len() == 1 {
                    -halfwidth < x[0] && x[0] <= *halfwidth
                } else {
                    x.iter().map(|v| v * v).sum::<f64>() <= halfwidth * halfwidth
                };
                if inside {
                    out[0] += height;
                }
            }
            FunctionSpec::Composite(parts) => {
                for p in parts {
                    p.add_vector(x, out);
                }
            }
            FunctionSpec::ConstantMatrix { .. } | FunctionSpec::DiagonalSineMatrix { .. } => {
                unreachable!("matrix-valued kind evaluated as a vector")
            }
        }
    }

    /// Adds `f(x)` to the row-major `d x d` buffer `out`.
    pub fn add_matrix(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        match self {
            FunctionSpec::ConstantMatrix { matrix, .. } => {
                for (o, m) in out.iter_mut().zip(matrix) {
                    *o += m;
                }
            }
            FunctionSpec::DiagonalSineMatrix {
                base,
                amplitude,
                frequency,
            } => {
                for (i, xi) in x.iter().enumerate() {
                    out[i * d + i] += base + amplitude * (frequency * xi).sin();
                }
            }
            FunctionSpec::Composite(parts) => {
                for p in parts {
                    p.add_matrix(x, out);
                }
            }
            FunctionSpec::Zero => {}
            _ => unreachable!("vector-valued kind evaluated as a matrix"),
        }
    }

    /// Evaluates a vector-valued spec into `out`, overwriting it.
    pub fn eval_vector(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.add_vector(x, out);
    }

    /// Evaluates a matrix-valued spec into `out`, overwriting it.
    pub fn eval_matrix(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.add_matrix(x, out);
    }

    /// Jump locations of a one-dimensional evaluation, sorted.
    pub fn discontinuities_1d(&self) -> Vec<f64> {
        let mut pts = match self {
            FunctionSpec::Bump { halfwidth, .. } => vec![-halfwidth, *halfwidth],
            FunctionSpec::Composite(parts) => {
                parts.iter().flat_map(|p| p.discontinuities_1d()).collect()
            }
            _ => Vec::new(),
        };
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Whether `x` lies within distance `dist` of a declared jump set.
    pub fn near_discontinuity(&self, x: &[f64], dist: f64) -> bool {
        match self {
            FunctionSpec::Bump { halfwidth, .. } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (r - halfwidth).abs() <= dist
            }
            FunctionSpec::Composite(parts) => parts.iter().any(|p| p.near_discontinuity(x, dist)),
            _ => false,
        }
    }

    /// True when the map does not depend on `x`.
    pub fn is_constant(&self) -> bool {
        match self {
            FunctionSpec::Zero | FunctionSpec::ConstantMatrix { .. } => true,
            FunctionSpec::Composite(parts) => parts.iter().all(|p| p.is_constant()),
            _ => false,
        }
    }

    /// True for the identically zero map (including empty or all-zero sums).
    pub fn is_zero(&self) -> bool {
        match self {
            FunctionSpec::Zero => true,
            FunctionSpec::Linear { matrix, .. } | FunctionSpec::ConstantMatrix { matrix, .. } => {
                matrix.iter().all(|&v| v == 0.0)
            }
            FunctionSpec::Sine { amplitude, .. }
            | FunctionSpec::HolderSine { amplitude, .. } => *amplitude == 0.0,
            FunctionSpec::Bump { height, .. } => *height == 0.0,
            FunctionSpec::DiagonalSineMatrix { .. } => false,
            FunctionSpec::Composite(parts) => parts.iter().all(|p| p.is_zero()),
        }
    }
}

struct Params<'a> {
    kind: &'a str,
    table: &'a toml::Table,
}

impl Params<'_> {
    fn float(&self, key: &str) -> Result<f64> {
        let v = self
            .table
            .get(key)
            .ok_or_else(|| Error::Config(format!("`{}` needs parameter `{key}`", self.kind)))?;
        as_float(v).ok_or_else(|| Error::Config(format!("`{}.{key}` must be a number", self.kind)))
    }

    fn float_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.table.contains_key(key) {
            self.float(key)
        } else {
            Ok(default)
        }
    }

    /// Either `matrix = [[..], ..]` (d x d) or `scale = s` meaning `s * I`.
    fn square_matrix(&self, dim: usize) -> Result<Vec<f64>> {
        if let Some(m) = self.table.get("matrix") {
            // A bare number is accepted as a multiple of the identity.
            if let Some(s) = as_float(m) {
                return Ok(scaled_identity(s, dim));
            }
            let rows = m
                .as_array()
                .ok_or_else(|| Error::Config(format!("`{}.matrix` must be an array", self.kind)))?;
            if rows.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "`{}` matrix has {} rows, problem dim is {dim}",
                    self.kind,
                    rows.len()
                )));
            }
            let mut out = Vec::with_capacity(dim * dim);
            for row in rows {
                let row = match row.as_array() {
                    Some(r) => r.clone(),
                    None => vec![row.clone()],
                };
                if row.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "`{}` matrix row has {} entries, problem dim is {dim}",
                        self.kind,
                        row.len()
                    )));
                }
                for v in &row {
                    out.push(as_float(v).ok_or_else(|| {
                        Error::Config(format!("`{}.matrix` entries must be numbers", self.kind))
                    })?);
                }
            }
            Ok(out)
        } else {
            Ok(scaled_identity(self.float("scale")?, dim))
        }
    }
}

fn scaled_identity(s: f64, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        out[i * dim + i] = s;
    }
    out
}

fn as_float(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_eval(spec: &FunctionSpec, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        spec.eval_vector(x, &mut out);
        out
    }

    #[test]
    fn bump_uses_left_limit_in_one_dimension() {
        let b = FunctionSpec::from_desc(&FunctionDesc::bump(2.0, 0.5), 1).unwrap();
        assert_eq!(vec_eval(&b, &[0.5]), vec![2.0]);
        assert_eq!(vec_eval(&b, &[-0.5]), vec![0.0]);
        assert_eq!(vec_eval(&b, &[0.0]), vec![2.0]);
        assert_eq!(vec_eval(&b, &[0.5f64.next_up()]), vec![0.0]);
        assert_eq!(b.discontinuities_1d(), vec![-0.5, 0.5]);
    }

    #[test]
    fn bump_acts_on_first_direction_in_2d() {
        let b = FunctionSpec::from_desc(&FunctionDesc::bump(1.0, 0.5), 2).unwrap();
        assert_eq!(vec_eval(&b, &[0.3, 0.3]), vec![1.0, 0.0]);
        assert_eq!(vec_eval(&b, &[0.4, 0.4]), vec![0.0, 0.0]);
        assert!(b.near_discontinuity(&[0.5, 0.01], 0.02));
    }

    #[test]
    fn holder_sine_is_bounded_by_amplitude() {
        let f = FunctionSpec::from_desc(&FunctionDesc::holder_sine(0.5, 0.25), 2).unwrap();
        for i in 0..1000 {
            let x = [i as f64 * 0.037 - 18.0, 3.0 - i as f64 * 0.011];
            for v in vec_eval(&f, &x) {
                assert!((0.0..=0.5).contains(&v));
            }
        }
        assert_eq!(vec_eval(&f, &[std::f64::consts::FRAC_PI_2, 0.0]), vec![0.5, 0.0]);
    }

    #[test]
    fn linear_scale_and_matrix_agree() {
        let a = FunctionSpec::from_desc(&FunctionDesc::linear_scale(-1.0), 2).unwrap();
        let b = FunctionSpec::from_desc(
            &FunctionDesc::linear(&[vec![-1.0, 0.0], vec![0.0, -1.0]]),
            2,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(vec_eval(&a, &[1.5, -2.0]), vec![-1.5, 2.0]);
    }

    #[test]
    fn diagonal_sine_matrix_requires_positive_floor() {
        let err = FunctionSpec::from_desc(&FunctionDesc::diagonal_sine_matrix(0.2, 0.3, 1.0), 1);
        assert!(matches!(err, Err(Error::InvalidConstant { .. })));
        let ok = FunctionSpec::from_desc(&FunctionDesc::diagonal_sine_matrix(1.0, 0.2, 1.0), 2)
            .unwrap();
        let mut m = vec![0.0; 4];
        ok.eval_matrix(&[std::f64::consts::FRAC_PI_2, 0.0], &mut m);
        assert_eq!(m, vec![1.2, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let err = FunctionSpec::from_desc(&FunctionDesc::new("expression"), 1);
        assert!(matches!(err, Err(Error::UnknownKind(k)) if k == "expression"));
    }

    #[test]
    fn composite_sums_parts_and_rejects_mixed_shapes() {
        let desc = FunctionDesc::composite(vec![
            FunctionDesc::linear_scale(-1.0),
            FunctionDesc::sine(0.1, 1.0),
        ]);
        let f = FunctionSpec::from_desc(&desc, 1).unwrap();
        let x = 0.7;
        assert_eq!(vec_eval(&f, &[x]), vec![-x + 0.1 * x.sin()]);

        let mixed = FunctionDesc::composite(vec![
            FunctionDesc::linear_scale(-1.0),
            FunctionDesc::constant_scale(1.0),
        ]);
        assert!(matches!(
            FunctionSpec::from_desc(&mixed, 1),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matrix_with_wrong_size_is_a_dimension_mismatch() {
        let err = FunctionSpec::from_desc(&FunctionDesc::linear(&[vec![1.0, 0.0]]), 2);
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn evaluation_is_bit_deterministic() {
        let desc = FunctionDesc::composite(vec![
            FunctionDesc::holder_sine(0.5, 0.25),
            FunctionDesc::bump(1.0, 0.5),
            FunctionDesc::linear(&[vec![-1.0, 0.3], vec![0.1, -2.0]]),
        ]);
        let f = FunctionSpec::from_desc(&desc, 2).unwrap();
        let x = [0.123456789, -4.2];
        let a = vec_eval(&f, &x);
        let b = vec_eval(&f, &x);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}
