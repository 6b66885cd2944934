//! Corrector equation `½<σσ', ∇²u> - λu + b1·∇u = -b1` on `[-R, R]^d`
//! with zero Dirichlet data, and the change of variables `Φ(x) = x + u(x)`.

mod assemble;
mod solve;
mod transform;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{symmetric_eig_range, Problem};

pub use assemble::{assemble_operator, Assembled};
pub use solve::{select_lambda, solve_corrector, solve_system, DEFAULT_TARGET, MAX_DOUBLINGS};
pub use transform::{FittedDissipativity, TransformedCoefficients, INVERSE_MAX_ITER, INVERSE_TOL};

/// Tensor grid on `[-R, R]^d` with `n_per_axis` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub radius: f64,
    pub n_per_axis: usize,
}

impl Grid {
    pub fn new(dim: usize, radius: f64, n_per_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("R", radius, "grid radius must be positive"));
        }
        if n_per_axis < 33 {
            return Err(Error::InvalidArgument(format!(
                "n_per_axis must be at least 33, got {n_per_axis}"
            )));
        }
        Ok(Grid {
            dim,
            radius,
            n_per_axis,
        })
    }

    /// Default resolution: 4097 nodes in 1D, 257 per axis in 2D.
    pub fn default_for(dim: usize) -> Result<Self> {
        Grid::new(dim, 12.0, if dim == 1 { 4097 } else { 257 })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.n_per_axis - 1) as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_per_axis.pow(self.dim as u32)
    }

    /// Flat-index stride of axis `k`; axis 0 varies slowest.
    pub fn stride(&self, k: usize) -> usize {
        self.n_per_axis.pow((self.dim - 1 - k) as u32)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.spacing()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            out[k] = idx % self.n_per_axis;
            idx /= self.n_per_axis;
        }
        out
    }

    pub fn node_into(&self, multi: &[usize], x: &mut [f64]) {
        for (xk, &i) in x.iter_mut().zip(multi) {
            *xk = self.coordinate(i);
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.multi_index(idx)
            .iter()
            .any(|&i| i == 0 || i == self.n_per_axis - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryPolicy {
    ZeroDirichlet,
}

/// Solved corrector on a grid, with gradients by central differences.
///
/// Evaluation is total: points outside the grid box are projected onto it and
/// counted in [`CorrectorField::out_of_domain_hits`].
#[derive(Debug)]
pub struct CorrectorField {
    pub grid: Grid,
    pub lambda: f64,
    /// Node-major `u`, `d` values per node.
    u_values: Vec<f64>,
    /// Node-major `∇u`, row-major `d x d` per node with `[m][k] = ∂_k u^m`.
    grad_u_values: Vec<f64>,
    pub sup_u: f64,
    pub sup_grad_u: f64,
    pub boundary_policy: BoundaryPolicy,
    evaluations: AtomicU64,
    out_of_domain: AtomicU64,
}

impl Clone for CorrectorField {
    fn clone(&self) -> Self {
        CorrectorField {
            grid: self.grid,
            lambda: self.lambda,
            u_values: self.u_values.clone(),
            grad_u_values: self.grad_u_values.clone(),
            sup_u: self.sup_u,
            sup_grad_u: self.sup_grad_u,
            boundary_policy: self.boundary_policy,
            evaluations: AtomicU64::new(self.evaluations.load(Ordering::Relaxed)),
            out_of_domain: AtomicU64::new(self.out_of_domain.load(Ordering::Relaxed)),
        }
    }
}

/// Operator norm of a row-major `d x d` matrix.
pub(crate) fn operator_norm(g: &[f64], d: usize) -> f64 {
    if d == 1 {
        return g[0].abs();
    }
    let mut gtg = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            gtg[i * d + j] = (0..d).map(|k| g[k * d + i] * g[k * d + j]).sum();
        }
    }
    symmetric_eig_range(&gtg, d).1.max(0.0).sqrt()
}

const FORMAT_TAG: &str = "zvonkin-corrector v1";

impl CorrectorField {
    /// Builds a field from node values of `u`, computing `∇u` and the sup norms.
    pub fn from_values(grid: Grid, lambda: f64, u_values: Vec<f64>) -> Result<Self> {
        let d = grid.dim;
        let n = grid.n_per_axis;
        if u_values.len() != grid.n_nodes() * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                grid.n_nodes() * d,
                u_values.len()
            )));
        }
        if u_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NaNDetected("corrector values"));
        }
        let h = grid.spacing();
        let mut grad = vec![0.0; grid.n_nodes() * d * d];
        for idx in 0..grid.n_nodes() {
            let multi = grid.multi_index(idx);
            for k in 0..d {
                let s = grid.stride(k);
                let i = multi[k];
                let (lo, hi, span) = if i == 0 {
                    (idx, idx + s, h)
                } else if i == n - 1 {
                    (idx - s, idx, h)
                } else {
                    (idx - s, idx + s, 2.0 * h)
                };
                for m in 0..d {
                    grad[idx * d * d + m * d + k] = (u_values[hi * d + m] - u_values[lo * d + m]) / span;
                }
            }
        }
        let sup_u = u_values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let sup_grad_u = grad
            .chunks_exact(d * d)
            .map(|g| operator_norm(g, d))
            .fold(0.0f64, f64::max);
        Ok(CorrectorField {
            grid,
            lambda,
            u_values,
            grad_u_values: grad,
            sup_u,
            sup_grad_u,
            boundary_policy: BoundaryPolicy::ZeroDirichlet,
            evaluations: AtomicU64::new(0),
            out_of_domain: AtomicU64::new(0),
        })
    }

    /// The identically zero field.
    pub fn zero(grid: Grid, lambda: f64) -> Self {
        let len = grid.n_nodes() * grid.dim;
        CorrectorField::from_values(grid, lambda, vec![0.0; len]).expect("zero field is valid")
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u_values
    }

    pub fn grad_u_values(&self) -> &[f64] {
        &self.grad_u_values
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn out_of_domain_hits(&self) -> u64 {
        self.out_of_domain.load(Ordering::Relaxed)
    }

    pub fn reset_telemetry(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
        self.out_of_domain.store(0, Ordering::Relaxed);
    }

    /// Cell index and local coordinate along one axis, snapping to nodes so
    /// node evaluations reproduce stored values exactly.
    fn locate(&self, xk: f64) -> (usize, f64) {
        let n = self.grid.n_per_axis;
        let s = ((xk + self.grid.radius) / self.grid.spacing()).max(0.0);
        // Truncation is the floor here since s >= 0.
        let mut i = s as usize;
        let mut t = s - i as f64;
        if t > 1.0 - 1e-9 {
            i += 1;
            t = 0.0;
        } else if t < 1e-9 {
            t = 0.0;
        }
        if i > n - 2 {
            t = (t + (i - (n - 2)) as f64).min(1.0);
            i = n - 2;
        }
        (i, t)
    }

    /// Multilinear interpolation of `u` and `∇u` at `x`.
    ///
    /// Returns `true` when `x` lay outside the grid box and was projected.
    pub fn eval_into(&self, x: &[f64], u: &mut [f64], grad: &mut [f64]) -> bool {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let outside = self.interpolate(x, u, Some(grad));
        if outside {
            self.out_of_domain.fetch_add(1, Ordering::Relaxed);
        }
        outside
    }

    /// Uncounted interpolation; the gradient is skipped when `grad` is `None`.
    fn interpolate(&self, x: &[f64], u: &mut [f64], mut grad: Option<&mut [f64]>) -> bool {
        let d = self.grid.dim;
        let r = self.grid.radius;
        let outside = x.iter().any(|&v| !(v.abs() <= r));
        u.fill(0.0);
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let dd = d * d;
        match d {
            1 => {
                let (i, t) = self.locate(x[0].clamp(-r, r));
                let w = [(i, 1.0 - t), (i + 1, t)];
                for (node, wt) in w {
                    u[0] += wt * self.u_values[node];
                    if let Some(g) = grad.as_deref_mut() {
                        g[0] += wt * self.grad_u_values[node];
                    }
                }
            }
            _ => {
                let (i, s) = self.locate(x[0].clamp(-r, r));
                let (j, t) = self.locate(x[1].clamp(-r, r));
                let n = self.grid.n_per_axis;
                let corners = [
                    (i * n + j, (1.0 - s) * (1.0 - t)),
                    (i * n + j + 1, (1.0 - s) * t),
                    ((i + 1) * n + j, s * (1.0 - t)),
                    ((i + 1) * n + j + 1, s * t),
                ];
                for (node, wt) in corners {
                    for m in 0..d {
                        u[m] += wt * self.u_values[node * d + m];
                    }
                    if let Some(g) = grad.as_deref_mut() {
                        for q in 0..dd {
                            g[q] += wt * self.grad_u_values[node * dd + q];
                        }
                    }
                }
            }
        }
        outside
    }

    /// `(u(x), ∇u(x))` as owned vectors.
    pub fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.grid.dim;
        let mut u = vec![0.0; d];
        let mut g = vec![0.0; d * d];
        self.eval_into(x, &mut u, &mut g);
        (u, g)
    }

    fn eval_u(&self, x: &[f64], u: &mut [f64]) {
        let mut g = [0.0; 4];
        let d = self.grid.dim;
        self.eval_into(x, u, &mut g[..d * d]);
    }

    /// `Φ(x) = x + u(x)`.
    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; x.len()];
        self.eval_u(x, &mut u);
        x.iter().zip(&u).map(|(a, b)| a + b).collect()
    }

    /// `Φ⁻¹(y)` by the fixed point `x ← y - u(x)` from `x = y`.
    pub fn phi_inverse(&self, y: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let mut x = y.to_vec();
        self.phi_inverse_into(y, tol, max_iter, &mut x)?;
        Ok(x)
    }

    /// In-place form of [`phi_inverse`](Self::phi_inverse); `x` is overwritten.
    /// Returns the number of iterations used.
    pub fn phi_inverse_into(&self, y: &[f64], tol: f64, max_iter: usize, x: &mut [f64]) -> Result<usize> {
        let d = y.len();
        let mut u = [0.0; 2];
        x.copy_from_slice(y);
        for it in 1..=max_iter {
            self.interpolate(x, &mut u[..d], None);
            let mut step: f64 = 0.0;
            for k in 0..d {
                let next = y[k] - u[k];
                step = step.max((next - x[k]).abs());
                x[k] = next;
            }
            if step <= tol {
                return Ok(it);
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            point: y.to_vec(),
        })
    }

    /// Text table: a header with dim, R, n and lambda, then one line per node
    /// with the `d` values of `u` followed by the `d²` values of `∇u`.
    pub fn to_text(&self) -> String {
        let d = self.grid.dim;
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_TAG}");
        let _ = writeln!(s, "dim {}", d);
        let _ = writeln!(s, "R {}", self.grid.radius);
        let _ = writeln!(s, "n {}", self.grid.n_per_axis);
        let _ = writeln!(s, "lambda {}", self.lambda);
        for idx in 0..self.grid.n_nodes() {
            let vals = self.u_values[idx * d..(idx + 1) * d]
                .iter()
                .chain(&self.grad_u_values[idx * d * d..(idx + 1) * d * d]);
            let line: Vec<String> = vals.map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("corrector table: {what}"));
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_TAG) {
            return Err(bad("missing or unsupported version tag"));
        }
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let (k, v) = line.split_once(' ').ok_or_else(|| bad("malformed header"))?;
            if k != key {
                return Err(bad(&format!("expected `{key}`, found `{k}`")));
            }
            Ok(v.to_string())
        };
        let num = |s: String| s.parse::<f64>().map_err(|_| bad("bad number in header"));
        let dim = num(header("dim")?)? as usize;
        let radius = num(header("R")?)?;
        let n = num(header("n")?)? as usize;
        let lambda = num(header("lambda")?)?;
        let grid = Grid::new(dim, radius, n)?;
        let mut u = Vec::with_capacity(grid.n_nodes() * dim);
        let mut grad = Vec::with_capacity(grid.n_nodes() * dim * dim);
        let mut rows = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number in body")))
                .collect::<Result<_>>()?;
            if vals.len() != dim + dim * dim {
                return Err(bad("wrong number of values in a row"));
            }
            u.extend_from_slice(&vals[..dim]);
            grad.extend_from_slice(&vals[dim..]);
            rows += 1;
        }
        if rows != grid.n_nodes() {
            return Err(bad("wrong number of rows"));
        }
        let sup_u = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sup_grad_u = grad
            .chunks_exact(dim * dim)
            .map(|g| operator_norm(g, dim))
            .fold(0.0f64, f64::max);
        Ok(CorrectorField {
            grid,
            lambda,
            u_values: u,
            grad_u_values: grad,
            sup_u,
            sup_grad_u,
            boundary_policy: BoundaryPolicy::ZeroDirichlet,
            evaluations: AtomicU64::new(0),
            out_of_domain: AtomicU64::new(0),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CorrectorField::from_text(&text)
    }
}

/// Checks that a solved field fits a problem before it is reused from cache.
pub fn check_field_matches(field: &CorrectorField, problem: &Problem) -> Result<()> {
    if field.grid.dim != problem.dim {
        return Err(Error::DimensionMismatch(format!(
            "cached corrector has dim {}, problem has dim {}",
            field.grid.dim, problem.dim
        )));
    }
    Ok(())
}
