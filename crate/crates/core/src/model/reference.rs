//! Exact stationary law of a 1D constant-diffusion problem.
//!
//! With `sigma = s` constant the invariant density is
//! `p(x) ∝ exp((2 / s^2) ∫_0^x b(t) dt)`. The potential is accumulated cell by
//! cell with Simpson's rule; cells containing a declared jump of `b1` are split
//! at the jump and the one-sided limits are used on each side.

use serde::Serialize;

use super::Problem;
use crate::error::{Error, Result};

/// One Simpson panel `[a, c]` with midpoint `m` and normalized density values.
#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    c: f64,
    pa: f64,
    pm: f64,
    pc: f64,
}

/// Tabulated 1D reference law on `[-R, R]`.
#[derive(Debug, Clone)]
pub struct ReferenceMeasure {
    radius: f64,
    /// Uniform nodes `x_i = -R + i h`.
    nodes: Vec<f64>,
    density: Vec<f64>,
    /// CDF at the nodes; linear in between.
    cdf: Vec<f64>,
    panels: Vec<Panel>,
    pub normalization_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSummary {
    pub radius: f64,
    pub n_grid: usize,
    pub mean: f64,
    pub variance: f64,
    pub normalization_error: f64,
}

fn simpson(a: f64, c: f64, fa: f64, fm: f64, fc: f64) -> f64 {
    (c - a) / 6.0 * (fa + 4.0 * fm + fc)
}

pub fn gibbs_reference_1d(problem: &Problem, r_ref: f64, n_grid: usize) -> Result<ReferenceMeasure> {
    if problem.dim != 1 {
        return Err(Error::NotOneDimensional(problem.dim));
    }
    let s = problem.constant_scalar_sigma().ok_or(Error::NonConstantSigma)?;
    if !(s.abs() > 0.0) {
        return Err(Error::NonConstantSigma);
    }
    if n_grid < 1000 {
        return Err(Error::InvalidArgument(format!("n_grid must be at least 1000, got {n_grid}")));
    }
    if !(r_ref > 0.0) {
        return Err(Error::InvalidArgument("R_ref must be positive".into()));
    }
    let scale = 2.0 / (s * s);
    let jumps: Vec<f64> = problem
        .b1
        .discontinuities_1d()
        .into_iter()
        .chain(problem.b2.discontinuities_1d())
        .filter(|&x| x > -r_ref && x < r_ref)
        .collect();

    let b = |x: f64| {
        let mut out = [0.0];
        problem.drift(&[x], &mut out);
        out[0]
    };
    // One-sided evaluation at panel ends that sit on a jump.
    let b_right_of = |x: f64| if jumps.contains(&x) { b(x.next_up()) } else { b(x) };
    let b_left_of = |x: f64| if jumps.contains(&x) { b(x.next_down()) } else { b(x) };
    let integral = |a: f64, c: f64| {
        let m = 0.5 * (a + c);
        simpson(a, c, b_right_of(a), b(m), b_left_of(c))
    };

    let h = 2.0 * r_ref / (n_grid - 1) as f64;
    let nodes: Vec<f64> = (0..n_grid).map(|i| -r_ref + i as f64 * h).collect();

    // Potential (times 2/s^2) at panel ends and midpoints, before exponentiation.
    struct Raw {
        a: f64,
        c: f64,
        la: f64,
        lm: f64,
        lc: f64,
    }
    let mut raw: Vec<Raw> = Vec::with_capacity(n_grid + jumps.len());
    let mut cell_of_panel = Vec::with_capacity(n_grid + jumps.len());
    let mut node_log = vec![0.0; n_grid];
    let mut level = 0.0;
    for i in 0..n_grid - 1 {
        let (x0, x1) = (nodes[i], nodes[i + 1]);
        let mut cuts = vec![x0];
        cuts.extend(jumps.iter().copied().filter(|&j| j > x0 && j < x1));
        cuts.push(x1);
        for w in cuts.windows(2) {
            let (a, c) = (w[0], w[1]);
            let m = 0.5 * (a + c);
            let la = level;
            let lm = la + scale * integral(a, m);
            let lc = la + scale * integral(a, c);
            raw.push(Raw { a, c, la, lm, lc });
            cell_of_panel.push(i);
            level = lc;
        }
        node_log[i + 1] = level;
    }
    let shift = raw
        .iter()
        .flat_map(|r| [r.la, r.lm, r.lc])
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::NaNDetected("reference potential"));
    }

    let mut panels: Vec<Panel> = raw
        .iter()
        .map(|r| Panel {
            a: r.a,
            c: r.c,
            pa: (r.la - shift).exp(),
            pm: (r.lm - shift).exp(),
            pc: (r.lc - shift).exp(),
        })
        .collect();
    let mut masses: Vec<f64> = panels.iter().map(|p| simpson(p.a, p.c, p.pa, p.pm, p.pc)).collect();
    let total: f64 = masses.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NaNDetected("reference normalization"));
    }
    for (p, m) in panels.iter_mut().zip(masses.iter_mut()) {
        p.pa /= total;
        p.pm /= total;
        p.pc /= total;
        *m /= total;
    }
    let density: Vec<f64> = node_log.iter().map(|l| (l - shift).exp() / total).collect();
    let max_density = density.iter().copied().fold(0.0, f64::max);
    let tail = density[0].max(density[n_grid - 1]) / max_density;
    if tail > 1e-10 {
        return Err(Error::MassLeak(tail));
    }

    let mut cdf = vec![0.0; n_grid];
    let mut acc = 0.0;
    let mut k = 0;
    for i in 0..n_grid - 1 {
        while k < masses.len() && cell_of_panel[k] == i {
            acc += masses[k];
            k += 1;
        }
        cdf[i + 1] = acc;
    }
    let normalization_error = (acc - 1.0).abs();
    // Pin the last node so the table is an exact distribution function.
    cdf[n_grid - 1] = 1.0;

    Ok(ReferenceMeasure {
        radius: r_ref,
        nodes,
        density,
        cdf,
        panels,
        normalization_error,
    })
}

impl ReferenceMeasure {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn density_table(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf_table(&self) -> &[f64] {
        &self.cdf
    }

    pub fn spacing(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.spacing();
        let n = self.nodes.len();
        let s = (x + self.radius) / h;
        let i = (s.floor().max(0.0) as usize).min(n - 2);
        (i, (x - self.nodes[i]) / h)
    }

    /// Density by linear interpolation between nodes, zero outside.
    pub fn density(&self, x: f64) -> f64 {
        if x.abs() > self.radius {
            return 0.0;
        }
        let (i, t) = self.locate(x);
        self.density[i] * (1.0 - t) + self.density[i + 1] * t
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -self.radius {
            return 0.0;
        }
        if x >= self.radius {
            return 1.0;
        }
        let (i, t) = self.locate(x);
        self.cdf[i] * (1.0 - t) + self.cdf[i + 1] * t
    }

    /// Inverse of the piecewise-linear CDF; the smallest `x` with
    /// `cdf(x) >= t`.
    pub fn quantile(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return -self.radius;
        }
        if t >= 1.0 {
            return self.radius;
        }
        let k = self.cdf.partition_point(|&c| c < t);
        if k == 0 {
            return self.nodes[0];
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if c1 > c0 { (t - c0) / (c1 - c0) } else { 0.0 };
        self.nodes[k - 1] + frac * self.spacing()
    }

    /// `∫ f dμ` by the same Simpson panels used to build the table.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.panels
            .iter()
            .map(|p| {
                let m = 0.5 * (p.a + p.c);
                simpson(p.a, p.c, f(p.a) * p.pa, f(m) * p.pm, f(p.c) * p.pc)
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    pub fn summary(&self) -> ReferenceSummary {
        ReferenceSummary {
            radius: self.radius,
            n_grid: self.nodes.len(),
            mean: self.mean(),
            variance: self.variance(),
            normalization_error: self.normalization_error,
        }
    }
}
