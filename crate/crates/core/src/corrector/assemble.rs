//! Finite-difference discretization of `½<a, D²u> - λu + b1·∇u` with
//! `a = σσ'`.

use sprs::{CsMat, TriMat};

use super::Grid;
use crate::error::{Error, Result};
use crate::model::{outer_product, Problem};

/// Discrete operator shared by every component of `u`, plus one right-hand
/// side per component.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub matrix: CsMat<f64>,
    /// `rhs[m]` holds `-b1^m` on interior nodes and zero on the boundary.
    pub rhs: Vec<Vec<f64>>,
    /// Number of interior nodes whose first-order term was upwinded.
    pub upwinded: usize,
}

pub fn assemble_operator(problem: &Problem, grid: &Grid, lambda: f64) -> Result<Assembled> {
    let d = grid.dim;
    if d > 2 || d == 0 {
        return Err(Error::UnsupportedDimension(d));
    }
    if d != problem.dim {
        return Err(Error::DimensionMismatch(format!(
            "grid has dim {d}, problem has dim {}",
            problem.dim
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", lambda, "must be positive"));
    }
    let n = grid.n_per_axis;
    let h = grid.spacing();
    let total = grid.n_nodes();
    let mut tri = TriMat::with_capacity((total, total), total * (1 + 2 * d + 4 * (d - 1)));
    let mut rhs = vec![vec![0.0; total]; d];

    let mut x = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut a = vec![0.0; d * d];
    let mut b1 = vec![0.0; d];
    let mut upwinded = 0;
    let strides: Vec<usize> = (0..d).map(|k| grid.stride(k)).collect();

    for idx in 0..total {
        let multi = grid.multi_index(idx);
        if multi.iter().any(|&i| i == 0 || i == n - 1) {
            tri.add_triplet(idx, idx, 1.0);
            continue;
        }
        grid.node_into(&multi, &mut x);
        problem.sigma.eval_matrix(&x, &mut sigma);
        outer_product(&sigma, d, &mut a)?;
        problem.b1.eval_vector(&x, &mut b1);
        let upwind = problem.b1.near_discontinuity(&x, h * (d as f64).sqrt());
        if upwind {
            upwinded += 1;
        }

        let mut diag = -lambda;
        for k in 0..d {
            let s = strides[k];
            let c2 = 0.5 * a[k * d + k] / (h * h);
            let (mut lo, mut hi) = (c2, c2);
            diag -= 2.0 * c2;
            let bk = b1[k];
            if upwind {
                if bk > 0.0 {
                    hi += bk / h;
                    diag -= bk / h;
                } else {
                    lo -= bk / h;
                    diag += bk / h;
                }
            } else {
                hi += bk / (2.0 * h);
                lo -= bk / (2.0 * h);
            }
            tri.add_triplet(idx, idx - s, lo);
            tri.add_triplet(idx, idx + s, hi);
        }
        if d == 2 {
            // Mixed derivative: a01 u_01 with the four-corner stencil.
            let c = a[1] / (4.0 * h * h);
            if c != 0.0 {
                let (s0, s1) = (strides[0], strides[1]);
                tri.add_triplet(idx, idx + s0 + s1, c);
                tri.add_triplet(idx, idx - s0 - s1, c);
                tri.add_triplet(idx, idx + s0 - s1, -c);
                tri.add_triplet(idx, idx - s0 + s1, -c);
            }
        }
        if !(diag < 0.0) {
            return Err(Error::SingularAssembly { row: idx, diagonal: diag });
        }
        tri.add_triplet(idx, idx, diag);
        for m in 0..d {
            rhs[m][idx] = -b1[m];
        }
    }
    Ok(Assembled {
        matrix: tri.to_csr(),
        rhs,
        upwinded,
    })
}
