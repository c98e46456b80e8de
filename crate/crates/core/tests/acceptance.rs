//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line on the
//! process stdout (bypassing the test harness capture) followed by its
//! individual checks. Checks listed in `EXPECTED_FAILURES` are allowed to
//! fail; they are asserted to fail so that the list stays accurate.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use faer::Mat;
use faer::prelude::Solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frontlab::asymptotics::{compare_rates, compare_waves, FitWindow};
use frontlab::charfn::{count_zeros_in_strip, real_roots, spectrum_regions, CharFn};
use frontlab::greens::{compute_g0, perturbed_green, solve_inhomogeneous, suggest_half_width};
use frontlab::grid::Grid;
use frontlab::model::{PhaseParams, Side};
use frontlab::spectrum::{
    assemble_linearization, classify_vs_regions, eigen_report, project_out, random_smooth_rhs, range_identity,
    range_membership, Classification, LinearizedOperator, SpectrumReport,
};
use frontlab::wave::{solve_wave, SolverConfig, WaveSolution};
use frontlab::{BuiltinModel, KernelSpec, ModelProblem};

/// `(criterion, check name prefix)` pairs that are known not to hold.
///
/// For a first-order operator (`d = 0`) the Green's function satisfies
/// `−cG₀′ + aG₀ + bJ∗G₀ = δ`, so its jump at the origin is `−1/c`; the
/// requested value `+1/c` therefore differs by `2/|c|`.
const EXPECTED_FAILURES: &[(u32, &str)] = &[(3, "jump = 1/c")];

struct Check {
    name: String,
    passed: bool,
    detail: String,
}

struct Criterion {
    id: u32,
    title: &'static str,
    checks: Vec<Check>,
    start: Instant,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            checks: Vec::new(),
            start: Instant::now(),
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn expected(&self, check: &Check) -> bool {
        EXPECTED_FAILURES
            .iter()
            .any(|(id, prefix)| *id == self.id && check.name.starts_with(prefix))
    }

    /// Adds the runtime check, prints the summary and panics on any
    /// unexpected outcome.
    fn finish(mut self, budget_s: f64) {
        let elapsed = self.start.elapsed().as_secs_f64();
        self.check(
            "runtime",
            elapsed < budget_s,
            format!("{elapsed:.1} s (budget {budget_s} s)"),
        );
        let passed = self.checks.iter().all(|c| c.passed);
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "criterion {} [{}]: {}",
            self.id,
            self.title,
            if passed { "PASS" } else { "FAIL" }
        );
        let mut unexpected = Vec::new();
        for c in &self.checks {
            let expected = self.expected(c);
            let tag = match (c.passed, expected) {
                (true, false) => "ok",
                (false, false) => "FAIL",
                (false, true) => "FAIL (expected)",
                (true, true) => "ok (expected to fail)",
            };
            let _ = writeln!(out, "    {tag:<22} {}: {}", c.name, c.detail);
            if c.passed == expected {
                unexpected.push(c.name.clone());
            }
        }
        let _ = out.flush();
        assert!(
            unexpected.is_empty(),
            "criterion {}: unexpected outcome for {unexpected:?}",
            self.id
        );
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ------------------------------------------------------------------ 1

#[test]
fn criterion_1_decay_rates() {
    let mut crit = Criterion::new(1, "tail rates match the characteristic roots");
    let window = FitWindow::new(12.0, 32.0);
    let mut worst_model_time = 0.0_f64;
    for m in BuiltinModel::ALL {
        let t = Instant::now();
        let p = m.build();
        let wave = solve_wave(&p, &SolverConfig::with_grid(40.0, 2048), None).expect("wave");
        let (_, fits) = compare_rates(&p, &wave, window).expect("rates");
        for fit in fits {
            let err = fit.relative_error.expect("prediction attached");
            crit.check(
                format!("{m} {:?} relative error < 1%", fit.side),
                err < 1e-2,
                format!(
                    "fitted {:.6}, predicted {:.6}, error {err:.2e}",
                    fit.rate,
                    fit.predicted_rate.unwrap()
                ),
            );
        }
        worst_model_time = worst_model_time.max(t.elapsed().as_secs_f64());
    }
    crit.check(
        "slowest model < 60 s",
        worst_model_time < 60.0,
        format!("{worst_model_time:.1} s"),
    );
    crit.finish(180.0);
}

// ------------------------------------------------------------------ 2

#[test]
fn criterion_2_root_structure() {
    let mut crit = Criterion::new(2, "two real roots and an empty strip between them");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..20 {
        let d = if k % 4 == 0 { 0.0 } else { rng.gen_range(0.0..2.0) };
        let c = rng.gen_range(-2.0..2.0);
        let a = rng.gen_range(-3.0..-0.2);
        let b = rng.gen_range(0.01..0.99) * -a;
        let kernel = if k % 3 == 0 {
            KernelSpec::bump(rng.gen_range(0.5..2.0)).unwrap()
        } else {
            KernelSpec::gaussian(rng.gen_range(0.5..2.0)).unwrap()
        };
        let cf = CharFn::new(d, c, a, b, kernel);
        let label = format!("d={d:.3} c={c:.3} a={a:.3} b={b:.3}");
        match real_roots(&cf) {
            Ok(r) => {
                let residual = r.residual_s.max(r.residual_u);
                crit.check(
                    format!("{label}: residual < 1e-10"),
                    residual < 1e-10,
                    format!("λs={:.6} λu={:.6} residual {residual:.1e}", r.lambda_s, r.lambda_u),
                );
                let count = count_zeros_in_strip(&cf, r.lambda_s + 1e-3, r.lambda_u - 1e-3, 50.0);
                crit.check(
                    format!("{label}: no zeros strictly between"),
                    matches!(count, Ok(0)),
                    format!("{count:?}"),
                );
            }
            Err(e) => crit.check(format!("{label}: real_roots"), false, e.to_string()),
        }
    }
    crit.finish(10.0);
}

// ------------------------------------------------------------------ 3

/// Dense matrix of `dD² − cD + a + bJ∗` on `n` periodic nodes of `[−L, L)`,
/// with Fourier differentiation matrices and a trapezoidal convolution. The
/// trapezoidal rule is only spectrally accurate for smooth kernels, so the
/// configurations below avoid the Laplace kernel.
fn dense_periodic_operator(cf: &CharFn, grid: &Grid) -> Mat<f64> {
    let n = grid.intervals;
    let period = 2.0 * grid.half_width;
    let h = grid.spacing();
    let th = 2.0 * std::f64::consts::PI / n as f64;
    let scale = 2.0 * std::f64::consts::PI / period;
    let d1 = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            scale * 0.5 * sign / (k as f64 * th / 2.0).tan()
        }
    };
    let d2 = |k: usize| -> f64 {
        if k == 0 {
            scale * scale * (-std::f64::consts::PI.powi(2) / (3.0 * th * th) - 1.0 / 6.0)
        } else {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            scale * scale * (-sign / (2.0 * (k as f64 * th / 2.0).sin().powi(2)))
        }
    };
    let periodized = |s: f64| -> f64 { (-3..=3).map(|m| cf.kernel.eval(s + period * m as f64)).sum() };
    Mat::from_fn(n, n, |i, j| {
        let k = (i + n - j) % n;
        let mut v = cf.d * d2(k) - cf.c * d1(k) + cf.b * h * periodized((i as f64 - j as f64) * h);
        if i == j {
            v += cf.a - cf.lambda.re;
        }
        v
    })
}

#[test]
fn criterion_3_greens_function() {
    let mut crit = Criterion::new(3, "Green's function solves and decays");
    let gauss = KernelSpec::gaussian(1.0).unwrap();
    let configs = [
        CharFn::new(0.0, 1.0, -1.0, 0.5, gauss.clone()),
        CharFn::new(0.0, 2.0, -2.0, 1.0, gauss.clone()),
        CharFn::new(0.0, -1.0, -1.5, 0.5, gauss.clone()),
        CharFn::new(0.0, 0.5, -1.0, 0.3, KernelSpec::bump(1.5).unwrap()),
        CharFn::new(0.0, 0.0, -2.0, 1.0, gauss.clone()),
        CharFn::new(1.0, 0.0, -1.0, 0.5, gauss.clone()),
        CharFn::new(0.5, -0.7, -2.0, 1.0, gauss.clone()),
        CharFn::new(1.0, 0.3, -1.0, 0.5, KernelSpec::gaussian(0.7).unwrap()),
        CharFn::new(2.0, 1.0, -3.0, 1.0, gauss.clone()),
        CharFn::new(0.2, 0.4, -1.0, -0.5, KernelSpec::gaussian(2.0).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for cf in &configs {
        let label = format!("d={} c={} a={} b={}", cf.d, cf.c, cf.a, cf.b);
        let half = suggest_half_width(cf).expect("half width");
        let n = ((2.0 * half / 0.025).ceil() as usize).next_power_of_two().clamp(1024, 2048);
        let gt = match compute_g0(cf, half, n) {
            Ok(gt) => gt,
            Err(e) => {
                crit.check(format!("{label}: G₀"), false, e.to_string());
                continue;
            }
        };
        let grid = gt.grid;
        let lu = dense_periodic_operator(cf, &grid).partial_piv_lu();
        let mut worst = 0.0_f64;
        for _ in 0..5 {
            let mut rhs = vec![0.0; grid.len()];
            for _ in 0..3 {
                let centre = rng.gen_range(-0.5..0.5) * half;
                let width = rng.gen_range(0.5..3.0);
                let amp = rng.gen_range(-1.0..1.0);
                for (i, v) in rhs.iter_mut().enumerate() {
                    let t = (grid.node(i) - centre) / width;
                    *v += amp * (-0.5 * t * t).exp();
                }
            }
            let fast = solve_inhomogeneous(&gt, &grid, &rhs).expect("solve");
            let b = Mat::from_fn(grid.intervals, 1, |i, _| rhs[i]);
            let x = lu.solve(&b);
            let dense: Vec<f64> = (0..grid.intervals).map(|i| x[(i, 0)]).collect();
            let lo = grid.intervals / 10;
            let hi = grid.intervals - lo;
            worst = worst.max(sup_diff(&fast[lo..hi], &dense[lo..hi]));
        }
        crit.check(
            format!("{label}: dense solve agreement < 1e-6"),
            worst < 1e-6,
            format!("{worst:.2e} (L={half:.1}, n={n})"),
        );
        let alpha = gt.alpha.unwrap_or(f64::NAN);
        crit.check(format!("{label}: α̂ > 0"), alpha > 0.0, format!("α̂ = {alpha:.4e}"));
        if cf.d == 0.0 && cf.c != 0.0 {
            // The one-sided limits need a finer grid than the solve comparison.
            let fine = compute_g0(cf, half, 16384).and_then(|t| t.jump_estimate());
            match fine {
                Ok(j) => {
                    let target = 1.0 / cf.c;
                    let note = match j.unit_reference {
                        Some(unit) if cf.c != 1.0 => format!("; unit reference {unit}"),
                        _ => String::new(),
                    };
                    crit.check(
                        format!("jump = 1/c within 1e-3 ({label})"),
                        (j.jump - target).abs() < 1e-3,
                        format!("measured {:.6}, 1/c = {target:.6}{note}", j.jump),
                    );
                    crit.check(
                        format!("{label}: jump = -1/c within 1e-3"),
                        (j.jump + target).abs() < 1e-3,
                        format!("measured {:.6}", j.jump),
                    );
                }
                Err(e) => crit.check(format!("jump = 1/c within 1e-3 ({label})"), false, e.to_string()),
            }
        }
    }
    crit.finish(30.0);
}

// ------------------------------------------------------------------ 4

#[test]
fn criterion_4_neumann_series() {
    let mut crit = Criterion::new(4, "perturbed Green's function by a convergent series");
    let gauss = KernelSpec::gaussian(1.0).unwrap();
    let configs = [
        CharFn::new(0.0, 1.0, -2.0, 1.0, gauss.clone()),
        CharFn::new(1.0, 0.5, -1.0, 0.5, gauss),
    ];
    let tol = 1e-8;
    for cf in &configs {
        let label = format!("d={} c={}", cf.d, cf.c);
        let gt = compute_g0(cf, 40.0, 1024).expect("G₀");
        let grid = gt.grid;
        let eps = 0.5 * gt.alpha.unwrap() / (4.0 * gt.constant);
        let m: Vec<f64> = grid.nodes().iter().map(|&x| eps * (0.5 + 0.5 * (x / 4.0).tanh())).collect();
        let nn: Vec<f64> = grid.nodes().iter().map(|&x| -eps * (-x * x / 50.0).exp()).collect();
        match perturbed_green(&gt, &m, &nn, tol) {
            Ok(pk) => {
                let rhs: Vec<f64> = grid.nodes().iter().map(|x| (-x * x).exp()).collect();
                let res = pk.residual(&rhs);
                crit.check(
                    format!("{label}: residual < 10·tol"),
                    res < 10.0 * tol,
                    format!("{res:.2e} with {} terms", pk.series.depth),
                );
                let worst = pk.series.ratios.iter().copied().fold(0.0, f64::max);
                crit.check(
                    format!("{label}: term ratios < 1"),
                    pk.series.ratios.iter().all(|r| *r < 1.0),
                    format!("largest {worst:.3}"),
                );
            }
            Err(e) => crit.check(format!("{label}: series"), false, e.to_string()),
        }
    }
    crit.finish(60.0);
}

// ------------------------------------------------------------------ 5, 6

struct SpectrumCase {
    model: BuiltinModel,
    op: LinearizedOperator,
    report: SpectrumReport,
    classes: Classification,
    seconds: f64,
}

fn spectrum_cases() -> &'static Vec<SpectrumCase> {
    static CASES: OnceLock<Vec<SpectrumCase>> = OnceLock::new();
    CASES.get_or_init(|| {
        BuiltinModel::ALL
            .iter()
            .map(|&model| {
                let t = Instant::now();
                let p = model.build();
                let wave = solve_wave(&p, &SolverConfig::with_grid(40.0, 1024), None).expect("wave");
                let op = assemble_linearization(&p, &wave, false).expect("operator");
                let adj = assemble_linearization(&p, &wave, true).expect("adjoint");
                let regions = spectrum_regions(&p, wave.c);
                let report = eigen_report(&op, &adj, &wave.u, regions).expect("eigen");
                let classes = classify_vs_regions(&report, &regions);
                SpectrumCase {
                    model,
                    op,
                    report,
                    classes,
                    seconds: t.elapsed().as_secs_f64(),
                }
            })
            .collect()
    })
}

#[test]
fn criterion_5_spectral_picture() {
    let mut crit = Criterion::new(5, "zero is a simple eigenvalue with positive adjoint mode");
    for case in spectrum_cases() {
        let m = case.model;
        let z = &case.report.zero_mode;
        crit.check(format!("{m}: |λ₀| < 1e-4‖op‖"), z.relative_modulus < 1e-4, format!("{:.2e}", z.relative_modulus));
        crit.check(format!("{m}: cosine > 0.999"), z.cosine > 0.999, format!("{:.8}", z.cosine));
        let pos = case.report.adjoint.positive_fraction;
        crit.check(format!("{m}: Ψ positive > 99.9%"), pos > 0.999, format!("{:.5}", pos));
        crit.check(
            format!("{m}: simplicity residual > 1e-2"),
            z.simplicity_residual > 1e-2,
            format!("{:.3e}", z.simplicity_residual),
        );
        let outside = &case.classes.strip_violations;
        crit.check(
            format!("{m}: delocalized eigenvalues inside the strip"),
            outside.is_empty(),
            format!("{} outside", outside.len()),
        );
        crit.check(
            format!("{m}: no other eigenvalue with Re λ > 1e-4‖op‖"),
            case.report.unstable.is_empty(),
            format!("{:?}", case.report.unstable),
        );
        crit.check(format!("{m}: runtime < 120 s"), case.seconds < 120.0, format!("{:.1} s", case.seconds));
    }
    crit.finish(360.0);
}

#[test]
fn criterion_6_range_identity() {
    let mut crit = Criterion::new(6, "range characterized by the adjoint mode");
    let cases = spectrum_cases();
    crit.start = Instant::now();
    for case in cases {
        let m = case.model;
        let op = &case.op;
        let psi = &case.report.adjoint.psi;
        let grid = op.meta.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|_| random_smooth_rhs(&grid, op.len(), || rng.gen::<f64>()))
            .collect();
        let identity = range_identity(psi, op, &samples).expect("range identity");
        crit.check(
            format!("{m}: Spearman > 0.95"),
            identity.spearman > 0.95,
            format!("{:.4}", identity.spearman),
        );

        let v = random_smooth_rhs(&grid, op.len(), || rng.gen::<f64>());
        let image = op.apply(&v);
        let target = random_smooth_rhs(&grid, op.len(), || rng.gen::<f64>());
        let projected = project_out(op, psi, &target, &samples[0]).expect("projection");
        for (kind, h) in [("image", image), ("projection", projected)] {
            let t = range_membership(psi, op, &h).expect("membership");
            let scale = (op.pairing(&h, &h)).sqrt();
            crit.check(
                format!("{m}: {kind} |⟨Ψ,h⟩| < 1e-6‖h‖"),
                t.inner_product.abs() < 1e-6 * scale,
                format!("{:.2e}", t.inner_product.abs() / scale),
            );
            crit.check(
                format!("{m}: {kind} residual < 1e-8"),
                t.residual < 1e-8,
                format!("{:.2e}", t.residual),
            );
        }
    }
    crit.finish(30.0);
}

// ------------------------------------------------------------------ 7

/// An initial guess `tanh((ξ − s)/w)` plus a small smooth bump, with a
/// speed guess, all drawn from `seed`.
fn seeded_guess(template: &WaveSolution, seed: u64) -> WaveSolution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = rng.gen_range(-1.0..1.0);
    let width = rng.gen_range(1.0..4.0);
    let bump = rng.gen_range(-0.05..0.05);
    let mut guess = template.clone();
    guess.u = template
        .xi()
        .iter()
        .map(|x| ((x - shift) / width).tanh() + bump * (-(x - shift).powi(2)).exp())
        .collect();
    guess.c = template.c + rng.gen_range(-0.05..0.05);
    guess
}

#[test]
fn criterion_7_uniqueness_and_rate_ordering() {
    let mut crit = Criterion::new(7, "unique front up to translation; ordered rates");
    let detuned = PhaseParams {
        epsilon: 0.1,
        detune: 0.1,
        d: 1.0,
        sigma: 1.0,
    }
    .build()
    .unwrap();
    let problems: Vec<ModelProblem> = vec![detuned, BuiltinModel::Neural.build()];
    for p in &problems {
        let template = solve_wave(p, &SolverConfig::with_grid(20.0, 400), None).expect("template");
        let mut waves = Vec::new();
        for (half, n) in [(30.0, 1200), (40.0, 1600)] {
            for seed in [71, 72] {
                let guess = seeded_guess(&template, seed);
                match solve_wave(p, &SolverConfig::with_grid(half, n), Some(&guess)) {
                    Ok(w) => waves.push(w),
                    Err(e) => crit.check(format!("{} L={half} seed {seed}", p.name()), false, e.to_string()),
                }
            }
        }
        if waves.len() == 4 {
            let r = compare_waves(&waves).expect("comparison");
            crit.check(
                format!("{} (c = {:.6}): speeds within 1e-6", p.name(), r.speeds[0]),
                r.speed_spread < 1e-6,
                format!("{:.2e}", r.speed_spread),
            );
            crit.check(
                format!("{}: aligned profiles within 1e-5", p.name()),
                r.profile_spread < 1e-5,
                format!("{:.2e} on |ξ| ≤ {}", r.profile_spread, r.window),
            );
        }
    }

    for m in BuiltinModel::ALL {
        let p = m.build();
        for side in [Side::PlusInfinity, Side::MinusInfinity] {
            let roots = |c: f64| real_roots(&CharFn::for_side(&p, c, side)).expect("roots");
            for (c1, c2) in [(-0.5, 0.5), (0.0, 0.2), (-1.0, -0.9)] {
                let (r1, r2) = (roots(c1), roots(c2));
                let ordered = r1.lambda_s < r2.lambda_s && r2.lambda_s < 0.0 && 0.0 < r1.lambda_u && r1.lambda_u < r2.lambda_u;
                crit.check(
                    format!("{m} {side:?}: ordering for c = {c1} < {c2}"),
                    ordered,
                    format!(
                        "{:.4} < {:.4} < 0 < {:.4} < {:.4}",
                        r1.lambda_s, r2.lambda_s, r1.lambda_u, r2.lambda_u
                    ),
                );
            }
        }
    }
    crit.finish(120.0);
}

// ------------------------------------------------------------------ 8

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let h = xs[1] - xs[0];
    let t = ((x - xs[0]) / h).clamp(0.0, (xs.len() - 1) as f64);
    let i = (t.floor() as usize).min(xs.len() - 2);
    let f = t - i as f64;
    ys[i] * (1.0 - f) + ys[i + 1] * f
}

#[test]
fn criterion_8_symmetric_phase_model() {
    let mut crit = Criterion::new(8, "odd-symmetric model gives an odd standing front");
    let p = BuiltinModel::Phase.build();
    let wave = solve_wave(&p, &SolverConfig::with_grid(40.0, 2048), None).expect("wave");
    crit.check("|c| < 1e-8", wave.c.abs() < 1e-8, format!("c = {:.2e}", wave.c));

    let xs = wave.xi();
    let k = wave.u.iter().position(|&u| u >= 0.0).expect("crossing");
    let crossing = if k == 0 || wave.u[k] == 0.0 {
        xs[k]
    } else {
        xs[k - 1] + (xs[k] - xs[k - 1]) * (-wave.u[k - 1]) / (wave.u[k] - wave.u[k - 1])
    };
    let h = wave.spacing();
    let reach = wave.grid.half_width - crossing.abs();
    let steps = (reach / h).floor() as usize;
    let asymmetry = (0..=steps)
        .map(|j| {
            let t = j as f64 * h;
            (interpolate(&xs, &wave.u, crossing + t) + interpolate(&xs, &wave.u, crossing - t)).abs()
        })
        .fold(0.0, f64::max);
    crit.check(
        "max|U(ξ) + U(−ξ)| < 1e-6",
        asymmetry < 1e-6,
        format!("{asymmetry:.2e} (gauge shift {crossing:.1e})"),
    );
    crit.finish(30.0);
}
