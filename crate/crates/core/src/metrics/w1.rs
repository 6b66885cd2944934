use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ReferenceMeasure;
use crate::qmc::Halton;
use crate::sampler::SampleSet;

pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum W1Method {
    Exact1DSampleSample,
    Exact1DSampleReference,
    Sliced,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W1Result {
    pub value: f64,
    pub method: W1Method,
    pub n1: usize,
    pub n2: usize,
    /// Percentile-bootstrap half width (95%).
    pub ci_half_width: Option<f64>,
    pub n_directions: Option<usize>,
    /// Size both sets were reduced to when their counts differed.
    pub subsampled_to: Option<usize>,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Order statistics of the larger set at strides `(i + ½) N / n`.
fn stride_subsample(sorted_large: &[f64], n: usize) -> Vec<f64> {
    let big = sorted_large.len();
    (0..n)
        .map(|i| sorted_large[(((2 * i + 1) * big) / (2 * n)).min(big - 1)])
        .collect()
}

/// `(1/n) Σ |x_(i) - y_(i)|` for two sorted slices of equal length.
pub fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn w1_scalars(a: &[f64], b: &[f64]) -> Result<(f64, Option<usize>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let (mut sa, mut sb) = (sorted(a), sorted(b));
    let mut reduced = None;
    if sa.len() != sb.len() {
        let n = sa.len().min(sb.len());
        if sa.len() > n {
            sa = stride_subsample(&sa, n);
        } else {
            sb = stride_subsample(&sb, n);
        }
        reduced = Some(n);
    }
    Ok((w1_sorted(&sa, &sb), reduced))
}

pub fn w1_exact_1d(s1: &SampleSet, s2: &SampleSet) -> Result<W1Result> {
    if s1.dim != 1 || s2.dim != 1 {
        return Err(Error::DimensionMismatch(format!(
            "exact W1 needs one-dimensional samples, got {} and {}",
            s1.dim, s2.dim
        )));
    }
    let (value, subsampled_to) = w1_scalars(s1.values(), s2.values())?;
    Ok(W1Result {
        value,
        method: W1Method::Exact1DSampleSample,
        n1: s1.len(),
        n2: s2.len(),
        ci_half_width: None,
        n_directions: None,
        subsampled_to,
    })
}

/// `∫ |c - (g0 + (g1 - g0) s)| ds` over `s ∈ [0, 1]`, times `len`.
fn abs_linear_gap(c: f64, g0: f64, g1: f64, len: f64) -> f64 {
    let (a, b) = (c - g0, c - g1);
    if a * b >= 0.0 {
        0.5 * (a.abs() + b.abs()) * len
    } else {
        // Sign change inside the interval: two triangles.
        0.5 * (a * a + b * b) / (a.abs() + b.abs()) * len
    }
}

/// Area between a weighted empirical CDF and the reference CDF. `xs` is
/// sorted; `w` holds matching non-negative weights.
fn area_to_reference(xs: &[f64], w: &[f64], total: f64, r: &ReferenceMeasure) -> f64 {
    let nodes = r.nodes();
    let cdf = r.cdf_table();
    let mut area = 0.0;
    let mut mass = 0.0;
    let mut i = 0;
    // Samples left of the table: reference CDF is zero there.
    let lo = nodes[0];
    while i < xs.len() && xs[i] < lo {
        mass += w[i] / total;
        let next = xs.get(i + 1).copied().unwrap_or(lo).min(lo);
        area += mass * (next - xs[i]);
        i += 1;
    }
    for k in 0..nodes.len() - 1 {
        let (x0, x1) = (nodes[k], nodes[k + 1]);
        let (c0, c1) = (cdf[k], cdf[k + 1]);
        let slope = (c1 - c0) / (x1 - x0);
        let mut left = x0;
        loop {
            let right = if i < xs.len() && xs[i] < x1 { xs[i] } else { x1 };
            if right > left {
                let g0 = c0 + slope * (left - x0);
                let g1 = c0 + slope * (right - x0);
                area += abs_linear_gap(mass, g0, g1, right - left);
            }
            if right == x1 && !(i < xs.len() && xs[i] < x1) {
                break;
            }
            mass += w[i] / total;
            left = right;
            i += 1;
        }
    }
    // Right of the table the reference CDF is one.
    let hi = nodes[nodes.len() - 1];
    let mut left = hi;
    while i < xs.len() {
        area += (1.0 - mass).abs() * (xs[i] - left);
        mass += w[i] / total;
        left = xs[i];
        i += 1;
    }
    area
}

/// Sorted values with their replicate ids: whole chains, or 20 contiguous
/// blocks when the set holds a single chain.
struct Grouped {
    xs: Vec<f64>,
    ids: Vec<usize>,
    n_groups: usize,
}

fn grouped_1d(s: &SampleSet) -> Result<Grouped> {
    if s.dim != 1 {
        return Err(Error::DimensionMismatch(format!(
            "reference W1 needs one-dimensional samples, got dim {}",
            s.dim
        )));
    }
    if s.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let groups: Vec<usize> = if s.n_chains() >= 2 {
        s.chain_lengths
            .iter()
            .enumerate()
            .flat_map(|(c, &l)| std::iter::repeat(c).take(l))
            .collect()
    } else {
        let n = s.len();
        let blocks = 20.min(n);
        (0..n).map(|i| i * blocks / n).collect()
    };
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.values()[a].total_cmp(&s.values()[b]));
    Ok(Grouped {
        xs: order.iter().map(|&i| s.values()[i]).collect(),
        ids: order.iter().map(|&i| groups[i]).collect(),
        n_groups,
    })
}

fn replicates(g: &Grouped, reference: &ReferenceMeasure, seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0.0; g.n_groups];
    let mut w = vec![0.0; g.xs.len()];
    let mut stats = Vec::with_capacity(count);
    for _ in 0..count {
        counts.iter_mut().for_each(|c| *c = 0.0);
        for _ in 0..g.n_groups {
            counts[rng.gen_range(0..g.n_groups)] += 1.0;
        }
        let mut total = 0.0;
        for (wi, &id) in w.iter_mut().zip(&g.ids) {
            *wi = counts[id];
            total += counts[id];
        }
        stats.push(area_to_reference(&g.xs, &w, total, reference));
    }
    stats
}

/// Reference W1 recomputed on `count` bootstrap resamples of the replicate
/// groups (chains, or blocks of a single chain), in draw order.
pub fn w1_bootstrap_replicates(
    s: &SampleSet,
    reference: &ReferenceMeasure,
    seed: u64,
    count: usize,
) -> Result<Vec<f64>> {
    let g = grouped_1d(s)?;
    if g.n_groups < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: g.n_groups,
        });
    }
    Ok(replicates(&g, reference, seed, count))
}

/// Exact `∫ |F_n - F_ref| dx`, which equals `∫_0^1 |Q_n(t) - Q_ref(t)| dt`.
///
/// With `bootstrap_seed` set, a 95% percentile half width is attached from
/// [`BOOTSTRAP_RESAMPLES`] resamples of whole chains (or of 20 contiguous
/// blocks when the set holds a single chain).
pub fn w1_to_reference_1d(
    s: &SampleSet,
    reference: &ReferenceMeasure,
    bootstrap_seed: Option<u64>,
) -> Result<W1Result> {
    let g = grouped_1d(s)?;
    let ones = vec![1.0; g.xs.len()];
    let value = area_to_reference(&g.xs, &ones, g.xs.len() as f64, reference);

    let ci_half_width = match bootstrap_seed {
        Some(seed) if g.n_groups >= 2 => {
            let mut stats = replicates(&g, reference, seed, BOOTSTRAP_RESAMPLES);
            stats.sort_by(f64::total_cmp);
            let q = |p: f64| stats[((p * (stats.len() - 1) as f64).round()) as usize];
            Some(0.5 * (q(0.975) - q(0.025)))
        }
        _ => None,
    };
    Ok(W1Result {
        value,
        method: W1Method::Exact1DSampleReference,
        n1: s.len(),
        n2: reference.nodes().len(),
        ci_half_width,
        n_directions: None,
        subsampled_to: None,
    })
}

/// Unit directions: equally spaced half-circle angles with a seeded offset
/// in 2D, normalized Halton points of the unit ball otherwise.
fn directions(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 2 {
        let offset: f64 = ChaCha8Rng::seed_from_u64(seed).gen();
        return (0..n)
            .map(|j| {
                let a = std::f64::consts::PI * (j as f64 + offset) / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    let mut h = Halton::new(dim, seed);
    let mut p = vec![0.0; dim];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        h.next_point(&mut p);
        let v: Vec<f64> = p.iter().map(|u| 2.0 * u - 1.0).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            out.push(v.iter().map(|x| x / r).collect());
        }
    }
    out
}

/// Mean of exact 1D distances between projections. A surrogate for W1 that
/// never exceeds it.
pub fn sliced_w1(s1: &SampleSet, s2: &SampleSet, n_directions: usize, seed: u64) -> Result<W1Result> {
    if s1.dim != s2.dim || s1.dim < 2 {
        return Err(Error::DimensionMismatch(format!(
            "sliced W1 needs equal dimensions of at least 2, got {} and {}",
            s1.dim, s2.dim
        )));
    }
    if n_directions < 8 {
        return Err(Error::InvalidArgument(format!(
            "n_directions must be at least 8, got {n_directions}"
        )));
    }
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let d = s1.dim;
    let project = |s: &SampleSet, th: &[f64]| -> Vec<f64> {
        s.values()
            .chunks(d)
            .map(|x| x.iter().zip(th).map(|(a, b)| a * b).sum())
            .collect()
    };
    let mut sum = 0.0;
    let mut reduced = None;
    for th in directions(d, n_directions, seed) {
        let (v, r) = w1_scalars(&project(s1, &th), &project(s2, &th))?;
        sum += v;
        reduced = r;
    }
    Ok(W1Result {
        value: sum / n_directions as f64,
        method: W1Method::Sliced,
        n1: s1.len(),
        n2: s2.len(),
        ci_half_width: None,
        n_directions: Some(n_directions),
        subsampled_to: reduced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gibbs_reference_1d, make_problem, registry};
    use crate::sampler::Coordinates;
    use proptest::prelude::*;
    use rand::Rng;

    fn s(v: &[f64]) -> SampleSet {
        SampleSet::from_scalars(v.to_vec()).unwrap()
    }

    fn brute_force(a: &[f64], b: &[f64]) -> f64 {
        fn rec(a: &[f64], b: &mut Vec<f64>, k: usize, best: &mut f64, acc: f64) {
            if k == a.len() {
                *best = best.min(acc);
                return;
            }
            for j in k..b.len() {
                b.swap(k, j);
                rec(a, b, k + 1, best, acc + (a[k] - b[k]).abs());
                b.swap(k, j);
            }
        }
        let mut best = f64::INFINITY;
        rec(a, &mut b.to_vec(), 0, &mut best, 0.0);
        best / a.len() as f64
    }

    fn ou_ref() -> ReferenceMeasure {
        gibbs_reference_1d(&make_problem(&registry::ou_1d()).unwrap(), 12.0, 24_001).unwrap()
    }

    #[test]
    fn small_cases() {
        assert_eq!(w1_exact_1d(&s(&[0.0, 2.0]), &s(&[1.0, 1.0])).unwrap().value, 1.0);
        assert_eq!(w1_exact_1d(&s(&[0.0]), &s(&[-2.5])).unwrap().value, 2.5);
        assert_eq!(w1_exact_1d(&s(&[3.0, 1.0]), &s(&[1.0, 3.0])).unwrap().value, 0.0);
        let two = SampleSet::new(2, vec![0.0; 2], 0.1, vec![1], Coordinates::PulledBack, 0, "").unwrap();
        assert!(matches!(w1_exact_1d(&two, &s(&[0.0])), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn matches_brute_force_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(1..=7);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let w = w1_exact_1d(&s(&a), &s(&b)).unwrap().value;
            assert!((w - brute_force(&a, &b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn unequal_sizes_use_stride_subsampling() {
        let r = w1_exact_1d(&s(&[0.0, 1.0, 2.0, 3.0]), &s(&[0.5, 2.5])).unwrap();
        assert_eq!(r.subsampled_to, Some(2));
        // Strides pick the 2nd and 4th order statistics: {1, 3}.
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn point_mass_at_the_center_of_a_gaussian() {
        let r = w1_to_reference_1d(&s(&[0.0; 10]), &ou_ref(), None).unwrap();
        let exact = 1.0 / std::f64::consts::PI.sqrt();
        assert!((r.value - exact).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn quantile_samples_converge_at_rate_one_over_n() {
        let reference = ou_ref();
        let w: Vec<f64> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| {
                let xs: Vec<f64> = (0..n).map(|i| reference.quantile((i as f64 + 0.5) / n as f64)).collect();
                let v = w1_to_reference_1d(&s(&xs), &reference, None).unwrap().value;
                // Each gap between neighbours contributes about a quarter of
                // gap / n when the density is locally flat; the tails add a little.
                let bound = (xs[n - 1] - xs[0]) / (4.0 * n as f64) * 1.5;
                assert!(v <= bound, "n = {n}: {v} > {bound}");
                v
            })
            .collect();
        for p in w.windows(2) {
            let ratio = p[0] / p[1];
            assert!(ratio > 7.0 && ratio < 13.0, "{w:?}");
        }
    }

    #[test]
    fn agrees_with_quantile_integral() {
        // Midpoint quadrature of ∫|Q_n - Q_ref| on a fine t grid.
        let reference = ou_ref();
        let xs = vec![-1.2, -0.3, 0.0, 0.4, 0.45, 2.0, 13.0];
        let n = xs.len();
        let m = 400_000;
        let q: f64 = (0..m)
            .map(|j| {
                let t = (j as f64 + 0.5) / m as f64;
                let qe = xs[((t * n as f64).floor() as usize).min(n - 1)];
                (qe - reference.quantile(t)).abs()
            })
            .sum::<f64>()
            / m as f64;
        let w = w1_to_reference_1d(&s(&xs), &reference, None).unwrap().value;
        assert!((w - q).abs() < 1e-4, "{w} {q}");
    }

    #[test]
    fn bootstrap_half_width_over_chains() {
        let reference = ou_ref();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..4000).map(|_| reference.quantile(rng.gen())).collect();
        let set = SampleSet::new(1, v, 0.1, vec![500; 8], Coordinates::PulledBack, 0, "").unwrap();
        let r = w1_to_reference_1d(&set, &reference, Some(3)).unwrap();
        let hw = r.ci_half_width.unwrap();
        assert!(hw > 0.0 && hw < 0.1, "{hw}");
        assert_eq!(r, w1_to_reference_1d(&set, &reference, Some(3)).unwrap());
    }

    #[test]
    fn sliced_translation_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = [0.3, -0.4];
        let shifted: Vec<f64> = base.chunks(2).flat_map(|x| [x[0] + v[0], x[1] + v[1]]).collect();
        let a = SampleSet::new(2, base, 0.1, vec![2000], Coordinates::PulledBack, 0, "").unwrap();
        let b = SampleSet::new(2, shifted, 0.1, vec![2000], Coordinates::PulledBack, 0, "").unwrap();
        let r = sliced_w1(&a, &b, 256, 4).unwrap();
        let norm = 0.5;
        assert!(r.value <= norm + 1e-12);
        assert!(r.value >= 2.0 / std::f64::consts::PI * norm * (1.0 - 1e-3), "{}", r.value);
        assert_eq!(sliced_w1(&a, &a, 16, 4).unwrap().value, 0.0);
        assert_eq!(sliced_w1(&a, &b, 16, 4).unwrap().value, sliced_w1(&b, &a, 16, 4).unwrap().value);
        assert!(sliced_w1(&a, &b, 4, 4).is_err());
    }

    #[test]
    fn sliced_in_three_dimensions_uses_unit_directions() {
        let dirs = directions(3, 50, 1);
        assert!(dirs.iter().all(|d| (d.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn metric_axioms(
            a in proptest::collection::vec(-10.0f64..10.0, 6),
            b in proptest::collection::vec(-10.0f64..10.0, 6),
            c in proptest::collection::vec(-10.0f64..10.0, 6),
        ) {
            let w = |x: &[f64], y: &[f64]| w1_exact_1d(&s(x), &s(y)).unwrap().value;
            prop_assert_eq!(w(&a, &b), w(&b, &a));
            prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-12);
            prop_assert_eq!(w(&a, &a), 0.0);
        }

        #[test]
        fn translation_bounds_against_reference(cshift in -1.0f64..1.0) {
            let reference = ou_ref();
            let n = 200;
            let base: Vec<f64> = (0..n).map(|i| reference.quantile((i as f64 + 0.5) / n as f64)).collect();
            let w0 = w1_to_reference_1d(&s(&base), &reference, None).unwrap().value;
            let moved: Vec<f64> = base.iter().map(|x| x + cshift).collect();
            let w1 = w1_to_reference_1d(&s(&moved), &reference, None).unwrap().value;
            prop_assert!(w1 <= w0 + cshift.abs() + 1e-12);
            prop_assert!(w1 >= cshift.abs() - w0 - 1e-12);
        }
    }
}
