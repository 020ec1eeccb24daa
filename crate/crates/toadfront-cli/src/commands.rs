//! One function per subcommand. Each writes its files through a
//! [`Context`] and records them in the manifest.

use std::fs;
use std::path::PathBuf;

use toadfront::asymptotics::{
    build_expansion, compare_xi_s, default_chi_bar, default_omega_bar, moving_boundary_criticality, residual_of_s, s0_derivatives,
    CriticalityConfig as RunConfig, ProximityConfig, Truncation,
};
use toadfront::dispersion::{rel4_residual, SpectralData};
use toadfront::front::{extract_level_set, fit_bramson, harnack_ratio_field, tail_decay_rate, FitMode, FrontTrace, Tracked};
use toadfront::model::Field;
use toadfront::probes::{
    gaussian_harnack_constant, gaussian_kernel_power_bound, harnack_constant, kernel_power_bound_check, nash_check, varadhan_check,
    KernelGrid, EPS_FLOOR,
};
use toadfront::solver::{advance, snapshot_steps, ModelKind, ModelSpec};

use crate::config::{coefficient, Analysis, ExperimentConfig, Quantity};
use crate::error::CliError;
use crate::output::{num, read_snapshot, sha256_file, write_snapshot, AssertionRecord, Context, Manifest, SnapshotRecord, Table};
use crate::plot::{emit_plotdata, Recipe};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub resume: bool,
    pub strict: bool,
    /// Stop after this many snapshot dumps, leaving an interrupted run.
    pub stop_after: Option<usize>,
}

/// Checks `value ∈ band`, recording the outcome; strict mode aborts on failure.
fn check(man: &mut Manifest, opts: &RunOptions, name: &str, value: f64, band: Option<[f64; 2]>) -> Result<(), CliError> {
    let Some(band) = band else { return Ok(()) };
    let pass = value >= band[0] && value <= band[1];
    man.assertions.push(AssertionRecord { name: name.into(), value, band, pass });
    if !pass && opts.strict {
        return Err(CliError::Assertion(format!("{name} = {value} outside [{}, {}]", band[0], band[1])));
    }
    Ok(())
}

fn tracked(q: Quantity, kind: &ModelKind) -> Tracked {
    match q {
        Quantity::Rho => Tracked::Rho,
        Quantity::MaxTheta => Tracked::MaxTheta,
        Quantity::Auto if matches!(kind, ModelKind::NonlocalToads { .. }) => Tracked::Rho,
        Quantity::Auto => Tracked::MaxTheta,
    }
}

fn tracked_name(q: Tracked) -> &'static str {
    match q {
        Tracked::Rho => "rho",
        Tracked::MaxTheta => "max_theta",
    }
}

/// Times `start, start + every, …` up to `end`, snapped to whole steps.
fn schedule(start: f64, end: f64, every: f64) -> Vec<f64> {
    let n = ((end - start) / every + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * every).collect()
}

// ---------------------------------------------------------------- dispersion

pub fn dispersion(cfg: &ExperimentConfig, ctx: &Context, man: &mut Manifest) -> Result<(), CliError> {
    let profile = cfg.trait_profile()?;
    let s = match &cfg.dispersion {
        Some(d) => SpectralData::compute_with(&profile, (d.lambda_min, d.lambda_max), d.n_lambda)?,
        None => SpectralData::compute(&profile)?,
    };
    let c = &s.curve;
    let rows: Vec<Vec<String>> = (0..c.lambdas.len()).map(|k| vec![num(c.lambdas[k]), num(c.mus[k]), num(c.speeds[k])]).collect();
    let path = ctx.write_csv("dispersion.csv", &[], &["lambda", "mu", "c"], &rows)?;
    man.record_file(ctx, &path)?;

    let centers = profile.domain.centers();
    let rows: Vec<Vec<String>> = (0..centers.len())
        .map(|j| {
            [centers[j], profile.d[j], profile.a[j], s.q_star[j], s.chi[j], s.beta[j], s.weight_mu[j]].iter().map(|v| num(*v)).collect()
        })
        .collect();
    let path = ctx.write_csv("spectral.csv", &[], &["theta", "d", "a", "q_star", "chi", "beta", "weight_mu"], &rows)?;
    man.record_file(ctx, &path)?;

    let l = s.lambda_star;
    let mut summary = vec![
        ("c_star", s.c_star),
        ("lambda_star", l),
        ("mu_star", s.mu_star),
        ("d_bar", s.d_bar),
        ("c_second_deriv", s.c_second_deriv),
        ("d_bar_cross_residual", (s.d_bar - l * s.c_second_deriv / 2.0).abs() / s.d_bar),
        ("rel3_residual", s.rel3_residual),
        ("min_convexity", c.min_convexity()),
    ];
    for (k, f) in [0.5, 0.75, 1.0, 1.25, 1.5].iter().enumerate() {
        let name = ["rel4_0", "rel4_1", "rel4_2", "rel4_3", "rel4_4"][k];
        summary.push((name, rel4_residual(&profile, f * l)?));
    }
    let rows: Vec<Vec<String>> = summary.iter().map(|(k, v)| vec![k.to_string(), num(*v)]).collect();
    let path = ctx.write_csv("dispersion_summary.csv", &["rel4_k is evaluated at λ = (0.5, 0.75, 1, 1.25, 1.5)·λ*".into()], &["quantity", "value"], &rows)?;
    man.record_file(ctx, &path)?;
    for path in emit_plotdata(ctx, Recipe::Dispersion)? {
        man.record_file(ctx, &path)?;
    }
    Ok(())
}

// ------------------------------------------------------------------ simulate

fn trace_rows(trace: &FrontTrace) -> Vec<Vec<String>> {
    trace
        .times
        .iter()
        .zip(&trace.positions)
        .map(|(t, x)| vec![num(*t), num(*x), tracked_name(trace.quantity).into(), num(trace.level)])
        .collect()
}

fn log_row(f: &Field) -> Vec<String> {
    vec![num(f.t), f.step.to_string(), num(f.mass()), num(f.max_value()), num(f.x_offset)]
}

const TRACE_COLUMNS: [&str; 4] = ["t", "x_m", "quantity", "m"];
const LOG_COLUMNS: [&str; 5] = ["t", "step", "mass", "max_value", "x_offset"];

/// Rows of an earlier CSV with `t ≤ t_max`, kept verbatim.
fn rows_until(ctx: &Context, file: &str, t_max: f64) -> Result<Vec<Vec<String>>, CliError> {
    let table = Table::read(&ctx.path(file))?;
    let k = table.index("t")?;
    Ok(table.rows.into_iter().filter(|r| r[k].parse::<f64>().map(|t| t <= t_max + 1e-9).unwrap_or(false)).collect())
}

pub fn simulate(cfg: &ExperimentConfig, ctx: &Context, man: &mut Manifest, opts: &RunOptions) -> Result<bool, CliError> {
    let (model, _) = cfg.model_spec()?;
    let snaps = cfg.require(&cfg.snapshots, "snapshots")?;
    let quantity = tracked(snaps.quantity, &model.kind);
    let start = snaps.start.unwrap_or(model.t0);
    let trace_times = schedule(start, model.grid.t_end, snaps.every);
    let dump_times = schedule(start, model.grid.t_end, snaps.dump_every.unwrap_or(snaps.every));
    let dt = model.grid.dt;
    let trace_steps = snapshot_steps(&trace_times, model.t0, dt);
    let dump_steps = snapshot_steps(&dump_times, model.t0, dt);
    let mut all_steps: Vec<u64> = trace_steps.iter().chain(&dump_steps).copied().collect();
    all_steps.sort_unstable();
    all_steps.dedup();
    fs::create_dir_all(ctx.path("snapshots"))?;

    let mut field = model.initial_field()?;
    let mut trace = FrontTrace { level: snaps.level, quantity, times: vec![], positions: vec![], skipped: vec![] };
    let mut kept_trace: Vec<Vec<String>> = Vec::new();
    let mut log_rows: Vec<Vec<String>> = Vec::new();
    let mut resumed = false;

    if opts.resume {
        let previous = Manifest::load(ctx, "simulate")?;
        if let Some(prev) = previous.filter(|p| !p.snapshots.is_empty()) {
            if prev.config_hash != ctx.hash {
                return Err(CliError::Config("cannot resume: the output directory belongs to a different config".into()));
            }
            let last = prev.snapshots.last().expect("non-empty").clone();
            let path = ctx.path(&last.file);
            if sha256_file(&path)? != last.sha256 {
                return Err(toadfront::Error::ChecksumMismatch(last.file.clone()).into());
            }
            let (dumped, _, _) = read_snapshot(&path)?;
            field.values = dumped.values;
            field.t = dumped.t;
            field.step = dumped.step;
            field.x_offset = dumped.x_offset;
            kept_trace = rows_until(ctx, "trace.csv", field.t)?;
            log_rows = rows_until(ctx, "log.csv", field.t)?;
            man.snapshots = prev.snapshots;
            man.start_unix = prev.start_unix;
            resumed = true;
            eprintln!("resuming {} from t = {} (step {})", ctx.name, field.t, field.step);
        }
    }
    let resumed_step = field.step;

    let mut stepper = model.stepper()?;
    let tag = model.kind.tag();
    let mut dumps_this_run = 0usize;
    let mut interrupted = false;
    let write_progress = |trace: &FrontTrace, kept: &[Vec<String>], log_rows: &[Vec<String>], man: &mut Manifest| -> Result<(), CliError> {
        let mut rows = kept.to_vec();
        rows.extend(trace_rows(trace));
        ctx.write_csv("trace.csv", &[], &TRACE_COLUMNS, &rows)?;
        ctx.write_csv("log.csv", &[], &LOG_COLUMNS, log_rows)?;
        man.save(ctx, "running", -1)
    };
    let result = advance(&mut stepper, &mut field, model.end_step(), &all_steps, |f, _| {
        if resumed && f.step == resumed_step {
            return Ok(());
        }
        if trace_steps.binary_search(&f.step).is_ok() {
            let one = extract_level_set([f], snaps.level, quantity);
            trace.times.extend(one.times);
            trace.positions.extend(one.positions);
            log_rows.push(log_row(f));
        }
        if dump_steps.binary_search(&f.step).is_ok() {
            let file = format!("snapshots/snap_{:010}.bin", f.step);
            let path = ctx.path(&file);
            write_snapshot(&path, f, tag, &ctx.hash).map_err(|e| toadfront::Error::InvalidParameter(e.to_string()))?;
            let sha = sha256_file(&path).map_err(|e| toadfront::Error::InvalidParameter(e.to_string()))?;
            man.snapshots.push(SnapshotRecord { file, t: f.t, step: f.step, sha256: sha });
            write_progress(&trace, &kept_trace, &log_rows, man).map_err(|e| toadfront::Error::InvalidParameter(e.to_string()))?;
            dumps_this_run += 1;
            if opts.stop_after.is_some_and(|k| dumps_this_run >= k) {
                interrupted = true;
                return Err(toadfront::Error::InvalidParameter("stop requested".into()));
            }
        }
        Ok(())
    });
    if interrupted {
        man.save(ctx, "interrupted", 0)?;
        return Ok(false);
    }
    result?;

    let mut rows = kept_trace;
    rows.extend(trace_rows(&trace));
    let path = ctx.write_csv("trace.csv", &[], &TRACE_COLUMNS, &rows)?;
    man.record_file(ctx, &path)?;
    let path = ctx.write_csv("log.csv", &[], &LOG_COLUMNS, &log_rows)?;
    man.record_file(ctx, &path)?;
    if !cfg.analysis.is_empty() {
        front(cfg, ctx, man, opts)?;
    }
    Ok(true)
}

// --------------------------------------------------------------------- front

fn load_trace(ctx: &Context) -> Result<FrontTrace, CliError> {
    let table = Table::read(&ctx.path("trace.csv"))?;
    let times = table.column("t")?;
    let positions = table.column("x_m")?;
    let level = table.column("m")?.first().copied().unwrap_or(0.5);
    let q = table.index("quantity")?;
    let quantity = match table.rows.first().map(|r| r[q].as_str()) {
        Some("rho") => Tracked::Rho,
        _ => Tracked::MaxTheta,
    };
    Ok(FrontTrace { level, quantity, times, positions, skipped: vec![] })
}

/// Snapshot dumps listed in the simulate manifest with `t ∈ [lo, hi]`.
fn load_dumps(ctx: &Context, lo: f64, hi: f64) -> Result<Vec<Field>, CliError> {
    let man = Manifest::load(ctx, "simulate")?.ok_or_else(|| CliError::Config("no simulate manifest in the output directory".into()))?;
    let mut out = Vec::new();
    for rec in man.snapshots.iter().filter(|r| r.t >= lo - 1e-9 && r.t <= hi + 1e-9) {
        let path = ctx.path(&rec.file);
        if sha256_file(&path)? != rec.sha256 {
            return Err(toadfront::Error::ChecksumMismatch(rec.file.clone()).into());
        }
        out.push(read_snapshot(&path)?.0);
    }
    Ok(out)
}

pub fn front(cfg: &ExperimentConfig, ctx: &Context, man: &mut Manifest, opts: &RunOptions) -> Result<(), CliError> {
    if cfg.analysis.is_empty() {
        return Err(CliError::Config("no [[analysis]] entries".into()));
    }
    let spectral = || -> Result<SpectralData, CliError> { Ok(SpectralData::compute(&cfg.trait_profile()?)?) };
    for task in &cfg.analysis {
        match task {
            Analysis::Fit { mode, c_star, window, expect } => {
                let trace = load_trace(ctx)?;
                let mode = match mode.as_str() {
                    "free" => FitMode::FreeC,
                    "fixed" => FitMode::FixedC { c_star: match c_star { Some(c) => *c, None => spectral()?.c_star } },
                    other => return Err(CliError::Config(format!("unknown fit mode `{other}`"))),
                };
                let fit = fit_bramson(&trace, mode, (window[0], window[1]))?;
                let rows: Vec<Vec<String>> = [
                    ("c_hat", fit.c_hat),
                    ("r_hat", fit.r_hat),
                    ("x_hat", fit.x_hat),
                    ("residual_sup", fit.residual_sup),
                    ("condition", fit.condition),
                    ("orthogonality", fit.orthogonality),
                    ("window_lo", window[0]),
                    ("window_hi", window[1]),
                    ("samples", fit.samples as f64),
                ]
                .iter()
                .map(|(k, v)| vec![k.to_string(), num(*v)])
                .collect();
                let mode_name = match mode {
                    FitMode::FreeC => "free_c".to_string(),
                    FitMode::FixedC { c_star } => format!("fixed_c({})", num(c_star)),
                };
                let path = ctx.write_csv("fit.csv", &[format!("mode: {mode_name}")], &["quantity", "value"], &rows)?;
                man.record_file(ctx, &path)?;
                for path in emit_plotdata(ctx, Recipe::Delay)? {
                    man.record_file(ctx, &path)?;
                }
                check(man, opts, "fit.r_hat", fit.r_hat, *expect)?;
            }
            Analysis::Tail { t, expect } => {
                let dumps = load_dumps(ctx, t.unwrap_or(f64::NEG_INFINITY), t.unwrap_or(f64::INFINITY))?;
                let f = dumps.last().ok_or_else(|| CliError::Config("no snapshot dump for the tail analysis".into()))?;
                let lambda = tail_decay_rate(f)?;
                let ls = spectral()?.lambda_star;
                let rows = vec![vec![num(f.t), num(lambda), num(ls), num(lambda / ls)]];
                let path = ctx.write_csv("tail.csv", &[], &["t", "lambda_hat", "lambda_star", "ratio"], &rows)?;
                man.record_file(ctx, &path)?;
                check(man, opts, "tail.ratio", lambda / ls, *expect)?;
            }
            Analysis::Harnack { p, radius, t_range, expect } => {
                let dumps = load_dumps(ctx, t_range[0], t_range[1])?;
                let est = harnack_ratio_field(&dumps, *p, *radius)?;
                let rows: Vec<Vec<String>> = est.times.iter().zip(&est.per_snapshot).map(|(t, c)| vec![num(*t), num(*c)]).collect();
                let comments = vec![format!("p: {p}"), format!("radius: {radius}"), format!("c_emp: {}", num(est.c_emp))];
                let path = ctx.write_csv("harnack.csv", &comments, &["t", "c"], &rows)?;
                man.record_file(ctx, &path)?;
                check(man, opts, "harnack.c_emp", est.c_emp, *expect)?;
            }
        }
    }
    Ok(())
}

// --------------------------------------------------------------------- probes

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Harnack,
    Varadhan,
    Nash,
    KernelPower,
}

pub fn probe(cfg: &ExperimentConfig, ctx: &Context, man: &mut Manifest, which: ProbeKind) -> Result<(), CliError> {
    let pc = cfg.require(&cfg.probe, "probe")?;
    let a = coefficient(&pc.coefficient)?;
    let unit = pc.coefficient.trim() == "const 1";
    let mut written: Vec<PathBuf> = Vec::new();
    match which {
        ProbeKind::Harnack => {
            let h = cfg.require(&pc.harnack, "probe.harnack")?;
            let grid = KernelGrid::symmetric(h.half_width, h.dx)?;
            let s0 = h.s0;
            let rep = harnack_constant(&|x: f64| (-x * x / (4.0 * s0)).exp(), &*a, grid, &h.times, h.radius, h.p, (h.window[0], h.window[1]))?;
            let mut comments = vec![format!("coefficient: {}", pc.coefficient), format!("c_emp: {}", num(rep.c_emp))];
            if unit {
                let exact = h.times.iter().map(|&t| gaussian_harnack_constant(s0, t, h.radius, h.p)).fold(0.0, f64::max);
                comments.push(format!("gaussian_closed_form: {}", num(exact)));
            }
            let rows: Vec<Vec<String>> = rep
                .per_time
                .iter()
                .map(|(t, c)| vec!["harnack".into(), num(h.p), num(h.radius), num(*t), num(*c)])
                .collect();
            written.push(ctx.write_csv("probe_harnack.csv", &comments, &["probe", "p", "radius", "t", "c"], &rows)?);
            let (t, x, y) = rep.witness;
            written.push(ctx.write_text("probe_harnack_witness.txt", &format!("t {}\nx {}\ny {}\n", num(t), num(x), num(y)))?);
        }
        ProbeKind::Varadhan => {
            let v = cfg.require(&pc.varadhan, "probe.varadhan")?;
            let grid = KernelGrid::symmetric(v.half_width, v.dx)?.with_sample(v.sample[0], v.sample[1])?;
            let table = varadhan_check(&*a, &v.times, grid, (v.pair_range[0], v.pair_range[1]), EPS_FLOOR)?;
            let rows: Vec<Vec<String>> = table.rows.iter().map(|r| vec!["varadhan".into(), num(r.t), num(r.error)]).collect();
            let comments = vec![format!("coefficient: {}", pc.coefficient), format!("decreasing: {}", table.is_decreasing())];
            written.push(ctx.write_csv("probe_varadhan.csv", &comments, &["probe", "t", "error"], &rows)?);
            let body: String = table.rows.iter().map(|r| format!("t {} x {} y {}\n", num(r.t), num(r.witness.0), num(r.witness.1))).collect();
            written.push(ctx.write_text("probe_varadhan_witness.txt", &body)?);
        }
        ProbeKind::Nash => {
            let n = cfg.require(&pc.nash, "probe.nash")?;
            let reports = n.cases.iter().map(|[k, d]| nash_check(*k, *d, n.trials, cfg.seed)).collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| vec!["nash".into(), r.k.to_string(), r.d.to_string(), r.trials.to_string(), r.seed.to_string(), num(r.c_emp)])
                .collect();
            written.push(ctx.write_csv("probe_nash.csv", &[], &["probe", "k", "d", "trials", "seed", "c_emp"], &rows)?);
            let body: String = reports.iter().map(|r| format!("k {} d {} worst_trial {}\n", r.k, r.d, r.worst_trial)).collect();
            written.push(ctx.write_text("probe_nash_witness.txt", &body)?);
        }
        ProbeKind::KernelPower => {
            let k = cfg.require(&pc.kernel_power, "probe.kernel_power")?;
            let grid = KernelGrid::symmetric(k.half_width, k.dx)?;
            let rep = kernel_power_bound_check(&*a, grid, k.t0, k.radius, k.s, k.p)?;
            let mut comments = vec![format!("coefficient: {}", pc.coefficient)];
            if unit {
                comments.push(format!("gaussian_closed_form: {}", num(gaussian_kernel_power_bound(k.t0, k.radius, k.s, k.p))));
            }
            let rows = vec![vec!["kernel_power".into(), num(k.s), num(k.p), num(k.t0), num(k.radius), num(rep.c_emp)]];
            written.push(ctx.write_csv("probe_kernel_power.csv", &comments, &["probe", "s", "p", "t0", "radius", "c_emp"], &rows)?);
            written.push(ctx.write_text("probe_kernel_power_witness.txt", &format!("x {}\ny {}\n", num(rep.witness.0), num(rep.witness.1)))?);
        }
    }
    for path in written {
        man.record_file(ctx, &path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- asymptotics

pub fn asym(cfg: &ExperimentConfig, ctx: &Context, man: &mut Manifest) -> Result<(), CliError> {
    let ac = cfg.require(&cfg.asymptotics, "asymptotics")?;
    let profile = cfg.trait_profile()?;
    let sp = SpectralData::compute(&profile)?;
    let chi_bar = ac.chi_bar.unwrap_or_else(|| default_chi_bar(&sp.chi));
    let omega_bar = ac.omega_bar.unwrap_or_else(|| default_omega_bar(sp.c_star, sp.lambda_star));
    let e = build_expansion(&sp, chi_bar, omega_bar, ac.sigma)?;

    let mut rows = Vec::new();
    for tr in [Truncation::S0, Truncation::S1, Truncation::S2, Truncation::Full] {
        let rep = residual_of_s(&e, &ac.taus, tr, ac.dy)?;
        let name = format!("{tr:?}").to_lowercase();
        for k in 0..rep.taus.len() {
            let ratio = if k + 1 < rep.taus.len() { num(rep.ratios[k]) } else { String::new() };
            let gauss = if tr == Truncation::Full { num(rep.gaussian_constant[k]) } else { String::new() };
            rows.push(vec![name.clone(), num(rep.taus[k]), num(rep.sup_residual[k]), ratio, gauss]);
        }
    }
    let comments = vec![
        format!("d_bar: {}", num(e.d_bar)),
        format!("chi_bar: {}", num(e.chi_bar)),
        format!("omega_bar: {}", num(e.omega_bar)),
        format!("beta1: {}", num(e.beta1)),
        format!("beta2: {}", num(e.beta2)),
        format!("c_phi: {}", num(e.c_phi)),
        format!("solvability_residual: {}", num(e.solvability_residual)),
    ];
    let path = ctx.write_csv("residual.csv", &comments, &["truncation", "tau", "sup_residual", "ratio_to_next", "gaussian_constant"], &rows)?;
    man.record_file(ctx, &path)?;

    let centers = profile.domain.centers();
    let rows: Vec<Vec<String>> = (0..centers.len())
        .map(|j| {
            let mut r = vec![num(centers[j]), num(e.chi[j]), num(e.chi0[j]), num(e.s2_hat[j])];
            r.extend(e.s3.iter().map(|h| num(h[j])));
            r
        })
        .collect();
    let path = ctx.write_csv("expansion_theta.csv", &[], &["theta", "chi", "chi0", "s2_hat", "h1", "h2", "h3", "h4", "h5", "h6"], &rows)?;
    man.record_file(ctx, &path)?;
    let n = 400;
    let rows: Vec<Vec<String>> = (0..=n)
        .map(|k| {
            let z = e.z_max * k as f64 / n as f64;
            let s = s0_derivatives(e.d_bar, z);
            let p = e.phi1_at(z);
            vec![num(z), num(s[0]), num(s[1]), num(p[0]), num(p[1]), num(p[2])]
        })
        .collect();
    let path = ctx.write_csv("expansion_z.csv", &[], &["z", "s0", "s0_z", "phi1", "phi1_z", "phi1_zz"], &rows)?;
    man.record_file(ctx, &path)?;

    if ac.proximity {
        let trace = compare_xi_s(&e, &ProximityConfig::default())?;
        let rows: Vec<Vec<String>> = trace.taus.iter().zip(&trace.weighted_deviation).map(|(t, d)| vec![num(*t), num(*d)]).collect();
        let comments = vec![format!("max_over_min: {}", num(trace.max_over_min()))];
        let path = ctx.write_csv("proximity.csv", &comments, &["tau", "weighted_deviation"], &rows)?;
        man.record_file(ctx, &path)?;
    }
    for path in emit_plotdata(ctx, Recipe::Residual)? {
        man.record_file(ctx, &path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- criticality

pub fn criticality(cfg: &ExperimentConfig, ctx: &Context, man: &mut Manifest) -> Result<(), CliError> {
    let cc = cfg.require(&cfg.criticality, "criticality")?;
    let sp = SpectralData::compute(&cfg.trait_profile()?)?;
    let mut run = RunConfig::default();
    run.t_end = cc.t_end.unwrap_or(run.t_end);
    run.length = cc.length.unwrap_or(run.length);
    run.dx = cc.dx.unwrap_or(run.dx);
    run.dt = cc.dt.unwrap_or(run.dt);
    let units = cc.r_over_lambda.clone().unwrap_or_else(|| vec![0.0, 1.5, 3.0]);
    let shifts: Vec<f64> = units.iter().map(|u| u / sp.lambda_star).collect();
    let (mut rows, mut amp_rows) = (Vec::new(), Vec::new());
    for &t_big in &cc.t_big {
        for (u, r) in units.iter().zip(moving_boundary_criticality(&sp, &shifts, t_big, &run)?) {
            rows.push(vec![num(t_big), num(*u), num(r.r_shift), num(r.ratio), format!("{:?}", r.verdict).to_lowercase()]);
            for (t, a) in r.times.iter().zip(&r.amplitude) {
                amp_rows.push(vec![num(t_big), num(r.r_shift), num(*t), num(*a)]);
            }
        }
    }
    let path = ctx.write_csv("criticality.csv", &[], &["t_big", "r_times_lambda", "r_shift", "ratio", "verdict"], &rows)?;
    man.record_file(ctx, &path)?;
    let path = ctx.write_csv("criticality_amplitude.csv", &[], &["t_big", "r_shift", "t", "amplitude"], &amp_rows)?;
    man.record_file(ctx, &path)?;
    Ok(())
}

// --------------------------------------------------------------------- report

pub fn report(ctx: &Context, man: &mut Manifest) -> Result<(), CliError> {
    let mut lines = Vec::new();
    for recipe in [Recipe::Delay, Recipe::Dispersion, Recipe::Residual] {
        if recipe.inputs().iter().all(|f| ctx.path(f).exists()) {
            for path in emit_plotdata(ctx, recipe)? {
                lines.push(format!("plot data: {}", path.strip_prefix(&ctx.out_dir).unwrap_or(&path).display()));
                man.record_file(ctx, &path)?;
            }
        }
    }
    let mut manifests: Vec<String> = fs::read_dir(&ctx.out_dir)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.starts_with("manifest") && n.ends_with(".json"))
        .collect();
    manifests.sort();
    for name in manifests {
        let text = fs::read_to_string(ctx.path(&name))?;
        if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
            let failed = m.assertions.iter().filter(|a| !a.pass).count();
            lines.push(format!("{}: {} ({} files, {} snapshots, {failed} failed assertions)", m.command, m.status, m.files.len(), m.snapshots.len()));
        }
    }
    let path = ctx.write_text("report.txt", &(lines.join("\n") + "\n"))?;
    man.record_file(ctx, &path)?;
    Ok(())
}

pub fn model_summary(model: &ModelSpec) -> String {
    format!("{} on [{}, {}] with dx = {}, dt = {}", model.kind.tag(), model.grid.x_min, model.grid.x_max, model.grid.dx, model.grid.dt)
}
