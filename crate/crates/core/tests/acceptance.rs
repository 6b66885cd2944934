//! Acceptance suite. Prints one PASS/FAIL line per criterion and always
//! exits 0; the verdicts are the output, not the exit status.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zvonkin_em::corrector::{assemble_operator, solve_system, Grid, TransformedCoefficients};
use zvonkin_em::harness::{
    obtain_corrector, run_experiment, ExperimentConfig, ExperimentResult, ReferenceConfig, Scheme,
};
use zvonkin_em::metrics::{sliced_w1, w1_exact_1d};
use zvonkin_em::model::{make_problem, registry, FunctionDesc};
use zvonkin_em::sampler::{pull_back, run_transformed_ensemble, ChainConfig, SampleSet};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&configs_dir().join(name)).expect("config");
    cfg.corrector.cache = None;
    cfg
}

fn gibbs() -> ReferenceConfig {
    ReferenceConfig::Gibbs1d {
        r_ref: 12.0,
        n_grid: 200_001,
    }
}

fn ou_exactness() -> Verdict {
    let mut cfg = ExperimentConfig::for_preset("ou_1d");
    cfg.eta_grid = vec![1e-3];
    cfg.t_burn = 20.0;
    cfg.t_run = 2000.0;
    cfg.chains = 8;
    cfg.reference = gibbs();
    let res = run_experiment(&cfg).expect("ou run");
    let row = &res.rows[0];
    verdict(
        row.w1 <= 0.01,
        format!("W1 = {:.5} (ci {:.5}, floor {:.5}, n = {}); need <= 0.01", row.w1, row.w1_ci, row.floor, row.n_samples),
    )
}

fn manufactured_error(n: usize) -> f64 {
    let lambda = 5.0;
    let mut spec = registry::ou_1d();
    spec.b1 = FunctionDesc::sine(0.5, 1.0);
    let p = make_problem(&spec).unwrap();
    let grid = Grid::new(1, 8.0, n).unwrap();
    let asm = assemble_operator(&p, &grid, lambda).unwrap();
    let exact = |x: f64| x * (-x * x).exp();
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let x = grid.coordinate(i);
            if i == 0 || i == n - 1 {
                return exact(x);
            }
            let e = (-x * x).exp();
            let d1 = (1.0 - 2.0 * x * x) * e;
            let d2 = (4.0 * x.powi(3) - 6.0 * x) * e;
            0.5 * d2 - lambda * exact(x) + 0.5 * x.sin() * d1
        })
        .collect();
    let u = solve_system(&grid, &asm.matrix, &rhs).unwrap();
    (0..n)
        .map(|i| (u[i] - exact(grid.coordinate(i))).abs())
        .fold(0.0, f64::max)
}

fn corrector_correctness() -> Verdict {
    let errs: Vec<f64> = [1025, 2049, 4097].iter().map(|&n| manufactured_error(n)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|&o| o >= 1.9);
    let err_ok = errs[2] <= 1e-6;
    verdict(
        order_ok && err_ok,
        format!(
            "errors {:.3e} {:.3e} {:.3e}, orders {:.3} {:.3}; need order >= 1.9 and error(4097) <= 1e-6",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    )
}

fn uniform_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
        if x.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            return x;
        }
    }
}

fn diffeomorphism() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["bump_1d", "holder_1d"] {
        let cfg = ExperimentConfig::for_preset(name);
        let problem = cfg.validate().unwrap();
        let (field, _) = obtain_corrector(&cfg, &problem).expect("lambda search");
        let tc = TransformedCoefficients::new(problem, field).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = uniform_ball(&mut rng, 1, tc.inner_radius);
            let back = tc.field.phi_inverse(&tc.field.phi(&x), 1e-10, 100).unwrap();
            worst = worst.max((back[0] - x[0]).abs());
        }
        pass &= tc.field.sup_grad_u <= 0.4 && worst <= 1e-8;
        parts.push(format!(
            "{name}: lambda = {}, sup|grad u| = {:.4}, max round trip {:.1e}",
            tc.field.lambda, tc.field.sup_grad_u, worst
        ));
    }
    verdict(pass, parts.join("; "))
}

fn describe_rows(res: &ExperimentResult, scheme: Scheme) -> String {
    res.rows_for(scheme)
        .map(|r| {
            format!(
                "\n      {:<11} eta {:.5}: w1 {:.5} +- {:.5} (floor {:.5})",
                format!("{scheme:?}").to_lowercase(),
                r.eta,
                r.w1,
                r.w1_ci,
                r.floor
            )
        })
        .collect()
}

fn case1_convergence(res: &ExperimentResult) -> Verdict {
    let biased: Vec<_> = res.rows_for(Scheme::Transformed).filter(|r| r.w1 > 2.0 * r.floor).collect();
    let monotone = biased
        .windows(2)
        .all(|w| w[1].w1 - w[1].w1_ci <= w[0].w1 + w[0].w1_ci);
    let fits = res.fits_for(Scheme::Transformed);
    let fit = fits.and_then(|f| f.pure_power.as_ref());
    let fit_text = match (fit, fits) {
        (Some(f), _) => format!("exponent {:.3}, CI [{:.3}, {:.3}] width {:.3}", f.exponent, f.ci.0, f.ci.1, f.ci_width()),
        (None, Some(f)) => format!("no fit: {}", f.errors.join("; ")),
        (None, None) => "no fit".into(),
    };
    let fit_ok = fit.is_some_and(|f| (0.35..=0.65).contains(&f.exponent) && f.ci_width() <= 0.3);
    verdict(
        monotone && fit_ok,
        format!(
            "{} bias-dominated points, monotone up to CI: {monotone}; {fit_text}{}",
            biased.len(),
            describe_rows(res, Scheme::Transformed)
        ),
    )
}

fn case2_log_rate(res: &ExperimentResult) -> Verdict {
    let describe_fit = |scheme: Scheme| match res.fits_for(scheme) {
        Some(f) => {
            let pp = f.pure_power.as_ref().map(|p| format!("{:.3}", p.exponent));
            let pl = f.power_log.as_ref().map(|p| format!("{:.3}", p.exponent));
            format!(
                "pure power {}, power-log {}{}",
                pp.unwrap_or("-".into()),
                pl.unwrap_or("-".into()),
                if f.errors.is_empty() { String::new() } else { format!(" ({})", f.errors.join("; ")) }
            )
        }
        None => "no fits".into(),
    };
    let t = res.fits_for(Scheme::Transformed);
    let pl = t.and_then(|f| f.power_log.as_ref());
    let pinned = t.and_then(|f| f.pinned_holder.as_ref());
    let pass = match (pl, pinned) {
        (Some(pl), Some(pin)) => pl.exponent >= 0.35 && pl.residual_rms <= pin.residual_rms,
        _ => false,
    };
    let residuals = match (pl, pinned) {
        (Some(pl), Some(pin)) => format!("residual power-log {:.4} vs pinned 0.125 {:.4}", pl.residual_rms, pin.residual_rms),
        _ => "residuals unavailable".into(),
    };
    verdict(
        pass,
        format!(
            "transformed: {}; naive: {}; {residuals}{}{}",
            describe_fit(Scheme::Transformed),
            describe_fit(Scheme::Naive),
            describe_rows(res, Scheme::Transformed),
            describe_rows(res, Scheme::Naive)
        ),
    )
}

fn ergodicity(res: &ExperimentResult) -> Verdict {
    let diag: Vec<_> = res.diagnostics.iter().filter(|d| d.scheme == Scheme::Transformed).collect();
    let probe = diag
        .iter()
        .find(|d| (d.eta - 2f64.powi(-6)).abs() < 1e-15)
        .and_then(|d| d.drift_probe.as_ref());
    let m6: Vec<f64> = diag.iter().map(|d| d.chain_moment6).collect();
    let lo = m6.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m6.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let variation = hi / lo - 1.0;
    let (probe_ok, probe_text) = match probe {
        Some(p) => (
            p.violations == 0 && p.fitted_theta1_hat > 0.0,
            format!(
                "eta 2^-6: {} violations, theta1_hat {:.3} (se {:.3}), c3 {:.3}",
                p.violations, p.fitted_theta1_hat, p.theta1_se, p.fitted_c3
            ),
        ),
        None => (false, "no drift probe at eta 2^-6".into()),
    };
    verdict(
        probe_ok && variation < 0.25,
        format!(
            "{probe_text}; E|Z|^6 in [{lo:.3}, {hi:.3}], variation {:.1}% (need < 25%)",
            100.0 * variation
        ),
    )
}

fn brute_force_w1(x: &[f64], y: &[f64]) -> f64 {
    fn permute(k: usize, perm: &mut Vec<usize>, x: &[f64], y: &[f64], best: &mut f64) {
        if k == perm.len() {
            // Summed in ascending order of `x`, the same order as the sorted matching.
            let mut pairs: Vec<(f64, f64)> = perm.iter().enumerate().map(|(i, &j)| (x[i], y[j])).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let cost = pairs.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64;
            *best = best.min(cost);
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(k + 1, perm, x, y, best);
            perm.swap(k, i);
        }
    }
    let mut perm: Vec<usize> = (0..x.len()).collect();
    let mut best = f64::INFINITY;
    permute(0, &mut perm, x, y, &mut best);
    best
}

fn metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        // Multiples of 1/16 keep every sum exact, so equality is bitwise.
        let mut draw = || (0..n).map(|_| rng.gen_range(-160i32..=160) as f64 / 16.0).collect::<Vec<_>>();
        let (x, y) = (draw(), draw());
        let fast = w1_exact_1d(
            &SampleSet::from_scalars(x.clone()).unwrap(),
            &SampleSet::from_scalars(y.clone()).unwrap(),
        )
        .unwrap()
        .value;
        if fast != brute_force_w1(&x, &y) {
            mismatches += 1;
        }
    }
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..100 {
        let n = rng.gen_range(1..=300);
        let shift: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let sets: Vec<SampleSet> = shift
            .iter()
            .map(|m| SampleSet::from_scalars((0..n).map(|_| m + rng.gen::<f64>().powi(3)).collect()).unwrap())
            .collect();
        let w = |a: usize, b: usize| w1_exact_1d(&sets[a], &sets[b]).unwrap().value;
        worst_excess = worst_excess.max(w(0, 2) - w(0, 1) - w(1, 2));
    }
    verdict(
        mismatches == 0 && worst_excess <= 1e-12,
        format!("{mismatches}/100 matching mismatches; max triangle excess {worst_excess:.2e}"),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("det.toml");
    std::fs::write(
        &config,
        r#"eta_grid = [0.125, 0.0625, 0.03125, 0.015625]
chains = 8
t_burn = 5.0
t_run = 100.0
baseline = true

[problem]
preset = "holder_1d"

[reference]
kind = "gibbs1d"
r_ref = 12.0
n_grid = 20001
"#,
    )
    .unwrap();
    let run = |threads: &str, out: &str| {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_zvonkin-em"))
            .args(["run", "--seed", "20240601", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("ZVONKIN_THREADS", threads)
            .output()
            .expect("spawn");
        (status.status.success(), std::fs::read(out.join("w1.csv")).unwrap_or_default())
    };
    let (ok1, a) = run("1", "t1");
    let (ok8, b) = run("8", "t8");
    let rows = a.iter().filter(|&&c| c == b'\n').count().saturating_sub(1);
    verdict(
        ok1 && ok8 && !a.is_empty() && a == b,
        format!("exit ok {ok1}/{ok8}; {rows} rows; identical bytes: {}", a == b),
    )
}

fn two_dimensional() -> Verdict {
    let cfg = load_config("holder_2d.toml");
    let res = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("run failed: {e}")),
    };
    let problem = cfg.validate().unwrap();
    let (field, _) = obtain_corrector(&cfg, &problem).unwrap();
    let lambda_sigma = problem.lambda_sigma;
    let tc = TransformedCoefficients::new(problem, field).unwrap();

    let eta = cfg.eta_grid[0];
    let z0 = tc.field.phi(&[0.0, 0.0]);
    let pulled = |chains: usize, seed: u64| {
        let base = ChainConfig::from_times(eta, cfg.t_burn, 250.0, z0.clone(), 0).unwrap();
        let ens = run_transformed_ensemble(&tc, &base, chains, seed).unwrap();
        pull_back(&tc.field, &ens.samples).unwrap()
    };
    let small = sliced_w1(&pulled(4, 101), &pulled(4, 102), 64, 7).unwrap();
    let large = sliced_w1(&pulled(16, 201), &pulled(16, 202), 64, 7).unwrap();
    let ratio = large.value / small.value;

    let (lo_bound, hi_bound) = (lambda_sigma / 2.0 * 0.95, 2.0 / lambda_sigma * 1.05);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let y = uniform_ball(&mut rng, 2, tc.inner_radius);
        let s = tc.transformed_diffusion(&y).unwrap();
        let a = [
            s[0] * s[0] + s[1] * s[1],
            s[0] * s[2] + s[1] * s[3],
            s[2] * s[2] + s[3] * s[3],
        ];
        let mean = 0.5 * (a[0] + a[2]);
        let rad = (0.25 * (a[0] - a[2]).powi(2) + a[1] * a[1]).sqrt();
        lo = lo.min(mean - rad);
        hi = hi.max(mean + rad);
    }
    let eig_ok = lo >= lo_bound && hi <= hi_bound;
    verdict(
        res.rows.len() == cfg.eta_grid.len() && ratio <= 0.7 && eig_ok,
        format!(
            "{} rows; sliced W1 {:.5} -> {:.5} at 4x samples, ratio {ratio:.3}; eigenvalues in [{lo:.3}, {hi:.3}] within [{lo_bound:.3}, {hi_bound:.3}]",
            res.rows.len(),
            small.value,
            large.value
        ),
    )
}

fn main() {
    let bump = std::sync::OnceLock::new();
    let bump_run = || {
        bump.get_or_init(|| {
            let mut cfg = load_config("bump_1d.toml");
            cfg.reference = gibbs();
            run_experiment(&cfg).expect("bump run")
        })
    };
    let holder_run = || {
        let mut cfg = load_config("holder_1d.toml");
        cfg.baseline = true;
        run_experiment(&cfg).expect("holder run")
    };

    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("OU exactness", Box::new(ou_exactness)),
        ("corrector manufactured solution", Box::new(corrector_correctness)),
        ("diffeomorphism certificate", Box::new(diffeomorphism)),
        ("case 1 convergence rate", Box::new(|| case1_convergence(bump_run()))),
        ("case 2 log-rate comparison", Box::new(|| case2_log_rate(&holder_run()))),
        ("ergodicity diagnostics", Box::new(|| ergodicity(bump_run()))),
        ("metric oracles", Box::new(metric_oracles)),
        ("thread-count determinism", Box::new(determinism)),
        ("two-dimensional properties", Box::new(two_dimensional)),
    ];
    let mut passed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        passed += v.pass as usize;
        println!(
            "{} [{}] {name} ({:.1} s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
}
