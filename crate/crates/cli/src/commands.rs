//! The pipelines behind each subcommand.
//!
//! Every command is split into `prepare`, which validates input and creates
//! the output directory, and the run itself. Failures in `prepare` leave no
//! files behind; failures while computing are recorded in the report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frontlab::asymptotics::{compare_rates, residue_amplitude, tail_table, FitWindow};
use frontlab::charfn::{spectrum_regions, CharFn};
use frontlab::greens::{compute_g0, suggest_half_width, BOUNDARY_LIMIT};
use frontlab::hypotheses::{check_hypotheses, check_speed_condition, HypothesisId, SamplingGrid, Status};
use frontlab::model::{BuiltinModel, Side};
use frontlab::modelfile::resolve_model;
use frontlab::spectrum::{
    assemble_linearization, classify_vs_regions, eigen_report, random_smooth_rhs, range_identity,
};
use frontlab::wave::{solve_wave, SolverConfig, WaveSolution};
use frontlab::{Error, KernelSpec, ModelProblem, Result};

use crate::config::{fit_window, prepare_out, solver_config, spectrum_config, FileConfig, GridFlags, RunConfig};
use crate::report::{write_json, Check, DemoReport, RatesSection, RunReport, SpectrumSection, SCHEMA_NAME, SCHEMA_VERSION};

/// Relative tail-rate error accepted per side.
pub const RATE_TOLERANCE: f64 = 0.01;
/// Number of random right-hand sides in the range identity check.
pub const RANGE_SAMPLES: usize = 20;
pub const GREENS_INTERVALS: usize = 4096;

/// Stage timer that stays silent in reproducible runs.
struct Clock {
    enabled: bool,
    laps: BTreeMap<String, f64>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            laps: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            self.laps.insert(stage.to_string(), start.elapsed().as_secs_f64());
        }
        out
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.laps)
    }
}

/// A command ready to run: validated inputs and an existing output directory.
pub struct Prepared<P> {
    run: RunConfig,
    params: P,
}

fn model_source(run: &RunConfig) -> Result<&str> {
    run.model
        .as_deref()
        .ok_or_else(|| Error::Spec("no model given (use --model or `model = ...` in the config file)".into()))
}

fn echo(report: &mut RunReport, key: &str, value: impl serde::Serialize) {
    let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
    report.config.insert(key.to_string(), v);
}

fn write_text(dir: &Path, name: &str, text: &str, report: &mut RunReport) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    report.outputs.push(name.to_string());
    Ok(())
}

/// Writes `<command>.json` into the output directory.
fn save(report: &mut RunReport, dir: &Path) -> Result<()> {
    let name = format!("{}.json", report.command);
    report.outputs.push(name.clone());
    write_json(&dir.join(name), report)
}

/// Runs `body`, folds any error into the report and saves it.
fn conclude(mut report: RunReport, dir: &Path, outcome: Result<()>) -> RunReport {
    report.finish(outcome.as_ref().err());
    if let Err(e) = save(&mut report, dir) {
        report.finish(Some(&e));
    }
    report
}

// ---------------------------------------------------------------- check

pub struct CheckParams {
    model: ModelProblem,
}

pub fn prepare_check(run: RunConfig) -> Result<Prepared<CheckParams>> {
    let model = resolve_model(model_source(&run)?)?;
    prepare_out(&run.out)?;
    Ok(Prepared {
        run,
        params: CheckParams { model },
    })
}

fn hypothesis_checks(report: &mut RunReport, hyp: &frontlab::hypotheses::HypothesisReport) {
    for h in &hyp.checks {
        if h.status == Status::Deferred {
            continue;
        }
        report.checks.push(Check {
            name: format!("hypothesis {:?}", h.id),
            value: h.witness.as_ref().map(|w| w.magnitude).unwrap_or(0.0),
            tolerance: h.tolerance,
            relation: "holds",
            passed: h.status == Status::Pass,
        });
    }
}

pub fn run_check(p: Prepared<CheckParams>) -> RunReport {
    let mut report = RunReport::new("check");
    let mut clock = Clock::new(!p.run.reproducible);
    echo(&mut report, "model", &p.run.model);
    report.model = Some(p.params.model.summary());
    let outcome = clock
        .time("hypotheses", || check_hypotheses(&p.params.model, &SamplingGrid::default()))
        .map(|hyp| {
            hypothesis_checks(&mut report, &hyp);
            report.hypotheses = Some(hyp);
        });
    report.timings = clock.finish();
    conclude(report, &p.run.out, outcome)
}

// ---------------------------------------------------------------- solve

pub struct SolveParams {
    model: ModelProblem,
    solver: SolverConfig,
    init: Option<WaveSolution>,
}

pub fn prepare_solve(run: RunConfig, file: &FileConfig, grid: GridFlags, init: Option<&Path>) -> Result<Prepared<SolveParams>> {
    let model = resolve_model(model_source(&run)?)?;
    let (solver, _) = solver_config(file, grid)?;
    let init = init.map(WaveSolution::read_text).transpose()?;
    prepare_out(&run.out)?;
    Ok(Prepared {
        run,
        params: SolveParams { model, solver, init },
    })
}

/// Hypothesis gate, solve, and the wave outputs. Returns the wave when the
/// solve succeeded.
fn solve_stage(
    run: &RunConfig,
    model: &ModelProblem,
    solver: &SolverConfig,
    init: Option<&WaveSolution>,
    report: &mut RunReport,
    clock: &mut Clock,
) -> Result<Option<WaveSolution>> {
    let mut hyp = clock.time("hypotheses", || check_hypotheses(model, &SamplingGrid::default()))?;
    if !hyp.passed() && !run.force {
        hypothesis_checks(report, &hyp);
        report.hypotheses = Some(hyp);
        return Ok(None);
    }
    let solved = clock.time("solve", || solve_wave(model, solver, init));
    let wave = match solved {
        Ok(w) => w,
        Err(Error::Convergence { trace }) => {
            write_json(&run.out.join("trace.json"), &trace)?;
            report.outputs.push("trace.json".into());
            return Err(Error::Convergence { trace });
        }
        Err(e) => return Err(e),
    };
    // The speed condition can only be judged now that c is known.
    let speed = check_speed_condition(model.d(), wave.c);
    if let Some(slot) = hyp.checks.iter_mut().find(|c| c.id == HypothesisId::H1a) {
        *slot = speed;
    }
    report.hypotheses = Some(hyp);
    report.wave = Some(wave.header());
    report.checks.push(Check::below("newton residual", wave.residual, wave.tolerance));
    report.checks.push(Check::above("minimum slope", wave.min_slope, 0.0));
    Ok(Some(wave))
}

pub fn run_solve(p: Prepared<SolveParams>) -> RunReport {
    let mut report = RunReport::new("solve");
    let mut clock = Clock::new(!p.run.reproducible);
    echo(&mut report, "model", &p.run.model);
    echo(&mut report, "solver", p.params.solver);
    echo(&mut report, "init", p.params.init.is_some());
    echo(&mut report, "force", p.run.force);
    report.model = Some(p.params.model.summary());
    let outcome = (|| {
        let Some(wave) = solve_stage(&p.run, &p.params.model, &p.params.solver, p.params.init.as_ref(), &mut report, &mut clock)? else {
            return Ok(());
        };
        wave.write_text(&p.run.out.join("wave.txt"))?;
        report.outputs.push("wave.txt".into());
        write_json(&p.run.out.join("wave.json"), &wave.header())?;
        report.outputs.push("wave.json".into());
        println!("c = {:.12e}  residual = {:.3e}  iterations = {}", wave.c, wave.residual, wave.iterations);
        Ok(())
    })();
    report.timings = clock.finish();
    conclude(report, &p.run.out, outcome)
}

// ---------------------------------------------------------------- rates

pub struct RatesParams {
    model: ModelProblem,
    solver: SolverConfig,
    window: FitWindow,
    wave: Option<WaveSolution>,
}

pub fn prepare_rates(
    run: RunConfig,
    file: &FileConfig,
    grid: GridFlags,
    window: Option<&[f64]>,
    wave: Option<&Path>,
) -> Result<Prepared<RatesParams>> {
    let model = resolve_model(model_source(&run)?)?;
    let (solver, _) = solver_config(file, grid)?;
    let wave = wave.map(WaveSolution::read_text).transpose()?;
    let half = wave.as_ref().map(|w| w.grid.half_width).unwrap_or(solver.half_width);
    let window = fit_window(file, window, half)?;
    prepare_out(&run.out)?;
    Ok(Prepared {
        run,
        params: RatesParams {
            model,
            solver,
            window,
            wave,
        },
    })
}

fn rates_stage(model: &ModelProblem, wave: &WaveSolution, window: FitWindow, out: &Path, report: &mut RunReport, clock: &mut Clock) -> Result<()> {
    let (predicted, fits) = clock.time("fit", || compare_rates(model, wave, window))?;
    let amplitudes = [Side::PlusInfinity, Side::MinusInfinity]
        .into_iter()
        .map(|s| residue_amplitude(model, wave, s))
        .collect::<Result<Vec<_>>>()?;
    for fit in &fits {
        let label = match fit.side {
            Side::PlusInfinity => "plus",
            Side::MinusInfinity => "minus",
        };
        report.checks.push(Check::above(format!("fit R² ({label})"), fit.r_squared, fit.r_squared_threshold));
        report.checks.push(Check::below(
            format!("relative rate error ({label})"),
            fit.relative_error.unwrap_or(f64::INFINITY),
            RATE_TOLERANCE,
        ));
        println!(
            "{label:>5}: fitted {:+.8}  predicted {:+.8}  relative error {:.2e}",
            fit.rate,
            fit.predicted_rate.unwrap_or(f64::NAN),
            fit.relative_error.unwrap_or(f64::NAN)
        );
    }
    write_text(out, "tail_plus.txt", &tail_table(wave, Side::PlusInfinity), report)?;
    write_text(out, "tail_minus.txt", &tail_table(wave, Side::MinusInfinity), report)?;
    report.rates = Some(RatesSection {
        window: [window.lo, window.hi],
        predicted,
        fits: fits.to_vec(),
        amplitudes,
    });
    Ok(())
}

pub fn run_rates(p: Prepared<RatesParams>) -> RunReport {
    let mut report = RunReport::new("rates");
    let mut clock = Clock::new(!p.run.reproducible);
    echo(&mut report, "model", &p.run.model);
    echo(&mut report, "window", [p.params.window.lo, p.params.window.hi]);
    echo(&mut report, "solver", p.params.solver);
    report.model = Some(p.params.model.summary());
    let outcome = (|| {
        let wave = match &p.params.wave {
            Some(w) => {
                report.wave = Some(w.header());
                w.clone()
            }
            None => match solve_stage(&p.run, &p.params.model, &p.params.solver, None, &mut report, &mut clock)? {
                Some(w) => w,
                None => return Ok(()),
            },
        };
        rates_stage(&p.params.model, &wave, p.params.window, &p.run.out, &mut report, &mut clock)
    })();
    report.timings = clock.finish();
    conclude(report, &p.run.out, outcome)
}

// ---------------------------------------------------------------- spectrum

pub struct SpectrumParams {
    model: ModelProblem,
    solver: SolverConfig,
}

pub fn prepare_spectrum(run: RunConfig, file: &FileConfig, grid: GridFlags) -> Result<Prepared<SpectrumParams>> {
    let model = resolve_model(model_source(&run)?)?;
    let (solver, grid) = spectrum_config(file, grid)?;
    if grid.len() > frontlab::spectrum::DENSE_NODE_CAP {
        return Err(Error::Size {
            requested: grid.len(),
            cap: frontlab::spectrum::DENSE_NODE_CAP,
        });
    }
    prepare_out(&run.out)?;
    Ok(Prepared {
        run,
        params: SpectrumParams { model, solver },
    })
}

fn spectrum_stage(run: &RunConfig, model: &ModelProblem, wave: &WaveSolution, report: &mut RunReport, clock: &mut Clock) -> Result<()> {
    let op = assemble_linearization(model, wave, false)?;
    let adj = assemble_linearization(model, wave, true)?;
    let regions = spectrum_regions(model, wave.c);
    let eig = clock.time("eigen", || eigen_report(&op, &adj, &wave.u, regions))?;
    let classes = classify_vs_regions(&eig, &regions);
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let samples: Vec<Vec<f64>> = (0..RANGE_SAMPLES)
        .map(|_| random_smooth_rhs(&op.meta.grid, op.len(), || rng.gen::<f64>()))
        .collect();
    let identity = clock.time("range", || range_identity(&eig.adjoint.psi, &op, &samples))?;

    let z = &eig.zero_mode;
    report.checks.extend([
        Check::below("|λ₀| / ‖op‖", z.relative_modulus, 1e-4),
        Check::above("cosine(ψ₀, U′)", z.cosine, 0.999),
        Check::above("Ψ positive fraction", eig.adjoint.positive_fraction, 0.999),
        Check::above("simplicity residual", z.simplicity_residual, 1e-2),
        Check::below("delocalized eigenvalues outside the strip", classes.strip_violations.len() as f64, 1.0),
        Check::below("eigenvalues with Re λ > 1e-4‖op‖ besides λ₀", eig.unstable.len() as f64, 1.0),
        Check::above("range test rank correlation", identity.spearman, 0.95),
    ]);
    for inj in &eig.injectivity {
        report.checks.push(Check::above(format!("σ_min(op − {}i)", inj.eta), inj.sigma_min, inj.floor));
    }
    println!(
        "λ₀ = {:.3e}{:+.3e}i  cosine = {:.8}  Ψ positive = {:.6}  simplicity residual = {:.3e}",
        z.value.re, z.value.im, z.cosine, eig.adjoint.positive_fraction, z.simplicity_residual
    );
    write_text(&run.out, "eigenvalues.csv", &eig.to_csv(Some(&classes)), report)?;
    write_text(&run.out, "modes.txt", &eig.modes_to_text(), report)?;
    report.spectrum = Some(SpectrumSection {
        report: eig,
        classification: classes,
        range_identity: identity,
    });
    Ok(())
}

pub fn run_spectrum(p: Prepared<SpectrumParams>) -> RunReport {
    let mut report = RunReport::new("spectrum");
    let mut clock = Clock::new(!p.run.reproducible);
    echo(&mut report, "model", &p.run.model);
    echo(&mut report, "solver", p.params.solver);
    echo(&mut report, "seed", p.run.seed);
    report.model = Some(p.params.model.summary());
    let outcome = (|| {
        let Some(wave) = solve_stage(&p.run, &p.params.model, &p.params.solver, None, &mut report, &mut clock)? else {
            return Ok(());
        };
        spectrum_stage(&p.run, &p.params.model, &wave, &mut report, &mut clock)
    })();
    report.timings = clock.finish();
    conclude(report, &p.run.out, outcome)
}

// ---------------------------------------------------------------- greens

/// Flags of the `greens` command; unset values fall back to the config file.
#[derive(Debug, Clone, Default)]
pub struct GreensFlags {
    pub d: Option<f64>,
    pub c: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub lambda: Option<f64>,
    pub kernel: Option<String>,
    pub half_width: Option<f64>,
    pub intervals: Option<usize>,
}

pub struct GreensParams {
    cf: CharFn,
    half_width: Option<f64>,
    intervals: usize,
}

/// `gaussian:σ`, `laplace:β`, `bump:R` or `tabulated:<file>`.
pub fn parse_kernel(text: &str) -> Result<KernelSpec> {
    let (family, arg) = text
        .split_once(':')
        .ok_or_else(|| Error::Spec(format!("kernel `{text}` should look like gaussian:1")))?;
    if family == "tabulated" {
        return KernelSpec::tabulated_from_file(Path::new(arg));
    }
    let value: f64 = arg
        .parse()
        .map_err(|_| Error::Parse(format!("kernel parameter `{arg}` is not a number")))?;
    match family {
        "gaussian" => KernelSpec::gaussian(value),
        "laplace" => KernelSpec::laplace(value),
        "bump" => KernelSpec::bump(value),
        other => Err(Error::Spec(format!("unknown kernel family `{other}`"))),
    }
}

pub fn prepare_greens(run: RunConfig, file: &FileConfig, flags: GreensFlags) -> Result<Prepared<GreensParams>> {
    let g = file.greens.clone().unwrap_or_default();
    let pick = |flag: Option<f64>, from_file: Option<f64>| flag.or(from_file);
    let d = pick(flags.d, g.d).unwrap_or(0.0);
    let c = pick(flags.c, g.c).unwrap_or(0.0);
    let a = pick(flags.a, g.a).ok_or_else(|| Error::Spec("greens needs --a".into()))?;
    let b = pick(flags.b, g.b).ok_or_else(|| Error::Spec("greens needs --b".into()))?;
    let lambda = pick(flags.lambda, g.lambda).unwrap_or(0.0);
    for (name, v) in [("d", d), ("c", c), ("a", a), ("b", b), ("lambda", lambda)] {
        if !v.is_finite() {
            return Err(Error::Spec(format!("{name} must be finite")));
        }
    }
    if d < 0.0 {
        return Err(Error::Spec(format!("d must be >= 0, got {d}")));
    }
    let kernel = parse_kernel(flags.kernel.as_deref().or(g.kernel.as_deref()).unwrap_or("gaussian:1"))?;
    let intervals = flags.intervals.or(g.intervals).unwrap_or(GREENS_INTERVALS);
    if !intervals.is_power_of_two() || intervals < 16 {
        return Err(Error::Spec(format!("n = {intervals} must be a power of two and at least 16")));
    }
    let half_width = flags.half_width.or(g.half_width);
    if let Some(l) = half_width {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Spec(format!("L must be positive, got {l}")));
        }
    }
    let cf = CharFn::new(d, c, a, b, kernel).shifted(num_complex::Complex64::new(lambda, 0.0));
    prepare_out(&run.out)?;
    Ok(Prepared {
        run,
        params: GreensParams {
            cf,
            half_width,
            intervals,
        },
    })
}

pub fn run_greens(p: Prepared<GreensParams>) -> RunReport {
    let mut report = RunReport::new("greens");
    let mut clock = Clock::new(!p.run.reproducible);
    let cf = &p.params.cf;
    echo(&mut report, "operator", [cf.d, cf.c, cf.a, cf.b, cf.lambda.re]);
    echo(&mut report, "kernel", cf.kernel.summary());
    echo(&mut report, "n", p.params.intervals);
    let outcome = (|| {
        let half = match p.params.half_width {
            Some(l) => l,
            None => suggest_half_width(cf)?,
        };
        echo(&mut report, "L", half);
        let table = clock.time("g0", || compute_g0(cf, half, p.params.intervals))?;
        let diag = table.diagnostics();
        report.checks.push(Check::above("decay rate α̂", diag.alpha.unwrap_or(0.0), 0.0));
        report.checks.push(Check::below("boundary value", diag.boundary_value, BOUNDARY_LIMIT));
        if let Some(j) = &diag.jump {
            println!("jump ({:?}) = {:.8}", j.kind, j.jump);
        }
        println!("alpha = {:.6}  boundary = {:.3e}", diag.alpha.unwrap_or(f64::NAN), diag.boundary_value);
        table.write_text(&p.run.out.join("g0.txt"))?;
        report.outputs.push("g0.txt".into());
        report.greens = Some(diag);
        Ok(())
    })();
    report.timings = clock.finish();
    conclude(report, &p.run.out, outcome)
}

// ---------------------------------------------------------------- demo

fn sub(run: &RunConfig, name: &str, model: Option<&str>) -> RunConfig {
    RunConfig {
        model: model.map(str::to_string),
        out: run.out.join(name),
        ..run.clone()
    }
}

/// Every built-in through check, solve + rates and spectrum, plus the
/// Helmholtz Green's function; one combined report.
pub fn run_demo(run: RunConfig, file: &FileConfig) -> Result<DemoReport> {
    prepare_out(&run.out)?;
    let mut clock = Clock::new(!run.reproducible);
    let mut runs = Vec::new();
    for m in BuiltinModel::ALL {
        let name = m.name();
        let start = Instant::now();
        runs.push(run_check(prepare_check(sub(&run, &format!("{name}/check"), Some(name)))?));
        runs.push(run_rates(prepare_rates(
            sub(&run, &format!("{name}/rates"), Some(name)),
            file,
            GridFlags::default(),
            None,
            None,
        )?));
        runs.push(run_spectrum(prepare_spectrum(
            sub(&run, &format!("{name}/spectrum"), Some(name)),
            file,
            GridFlags::default(),
        )?));
        if clock.enabled {
            clock.laps.insert(name.to_string(), start.elapsed().as_secs_f64());
        }
    }
    let helmholtz = GreensFlags {
        d: Some(1.0),
        c: Some(0.0),
        a: Some(-1.0),
        b: Some(0.0),
        ..GreensFlags::default()
    };
    runs.push(run_greens(prepare_greens(sub(&run, "greens", None), file, helmholtz)?));
    let exit_code = runs.iter().map(|r| r.exit_code).max().unwrap_or(0);
    let report = DemoReport {
        schema: SCHEMA_NAME,
        schema_version: SCHEMA_VERSION,
        exit_code,
        runs,
        timings: clock.finish(),
    };
    write_json(&run.out.join("demo.json"), &report)?;
    Ok(report)
}

/// Output directory used when neither the flag nor the config file sets one.
pub fn default_out() -> PathBuf {
    PathBuf::from(crate::config::DEFAULT_OUT)
}
