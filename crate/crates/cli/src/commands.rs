//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use entsamp_core::analysis::{output_diagnostics, scaling_study, ScalingSetup};
use entsamp_core::channel::{log_spaced, mmse_curve, Backend, Channel, EnvelopeKind};
use entsamp_core::sampler::{self, SamplerConfig};
use entsamp_core::schedule::{
    entropy_adaptive_grid, geometric_time_grid, kl_bound, uniform_eta_grid,
    uniform_time_grid, zero_entropy_grid,
};
use entsamp_core::{BoundReport, MixtureModel, ScoreOracle, TimeGrid};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::cli::{BoundArgs, Cli, Command, Common, CurveArgs, GridArgs, SampleArgs, ScaleArgs, ScheduleArgs};
use crate::config::{BackendKind, ExperimentConfig, ModelSpec, ScheduleKind, ScheduleSpec};
use crate::error::CliError;
use crate::exec::Pool;
use crate::output::{encode_trajectory, fmt_f64, write_atomic, Table};

pub fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = Pool::new(threads).map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let ctx = Ctx { pool, json: cli.json };
    match &cli.command {
        Command::MmseCurve(a) => mmse_curve_cmd(&ctx, a),
        Command::Grid(a) => grid_cmd(&ctx, a),
        Command::Sample(a) => sample_cmd(&ctx, a),
        Command::Verify(a) => crate::verify::verify_cmd(&ctx, a),
        Command::ScaleStudy(a) => scale_cmd(&ctx, a),
        Command::Bound(a) => bound_cmd(&ctx, a),
    }
}

pub struct Ctx {
    pub pool: Pool,
    pub json: bool,
}

/// Where the primary output of a subcommand goes.
pub enum Sink {
    File(PathBuf),
    Stdout,
}

impl Ctx {
    /// Writes the table (or its JSON mirror) and prints the summary line.
    pub fn emit(
        &self,
        sink: &Sink,
        table: &Table,
        config_sha256: &str,
        seed: u64,
        report: serde_json::Value,
        summary: &str,
    ) -> Result<(), CliError> {
        let bytes = table.render(config_sha256, seed);
        if let Sink::File(path) = sink {
            write_atomic(path, &bytes)?;
        }
        let mut stdout = std::io::stdout().lock();
        let io = |e: std::io::Error| CliError::Io(format!("stdout: {e}"));
        if self.json {
            let doc = json!({
                "config_sha256": config_sha256,
                "seed": seed,
                "report": report,
                "columns": table.columns,
                "rows": table.rows,
            });
            writeln!(stdout, "{}", serde_json::to_string_pretty(&doc).expect("json")).map_err(io)?;
            eprintln!("{summary}");
        } else if let Sink::Stdout = sink {
            stdout.write_all(&bytes).map_err(io)?;
            eprintln!("{summary}");
        } else {
            writeln!(stdout, "{summary}").map_err(io)?;
        }
        Ok(())
    }
}

/// Effective config from `--config`/`--model` with `--seed` applied.
fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&common.config, &common.model) {
        (Some(c), _) => ExperimentConfig::load(c)?,
        (None, Some(_)) => ExperimentConfig::with_model(ModelSpec::default()),
        (None, None) => {
            return Err(CliError::Config(
                "a model is required: pass --config or --model".into(),
            ))
        }
    };
    if let Some(m) = &common.model {
        cfg.model = ModelSpec::load(m)?;
    }
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}

fn apply_schedule(spec: &mut ScheduleSpec, a: &ScheduleArgs) {
    if let Some(k) = a.schedule {
        spec.kind = k;
    }
    if let Some(k) = a.steps {
        spec.steps = k;
    }
    if let Some(t) = a.horizon {
        spec.horizon = t;
    }
    if let Some(d) = a.delta {
        spec.delta = d;
    }
}

fn sink(common_out: &Option<PathBuf>, cfg_outputs: Option<&Path>, name: &str) -> Sink {
    match (common_out, cfg_outputs) {
        (Some(p), _) => Sink::File(p.clone()),
        (None, Some(dir)) => Sink::File(dir.join(format!("{name}.csv"))),
        (None, None) => Sink::Stdout,
    }
}

fn setup_err(e: entsamp_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// The configured grid and, where the bound applies, its report.
pub fn build_grid(
    model: &MixtureModel,
    spec: &ScheduleSpec,
) -> Result<(TimeGrid, Result<BoundReport, String>), CliError> {
    let s = model.summary();
    let (h, r, eps) = (s.entropy_nats, s.second_moment, model.eps());
    let (t, d, k) = (spec.horizon, spec.delta, spec.steps);
    let report = || -> Result<BoundReport, String> {
        if h == 0.0 {
            zero_entropy_grid(r, t, d, eps, k, 0.0).map(|(_, b)| b).map_err(|e| e.to_string())
        } else {
            kl_bound(h, r, t, d, eps, k, 0.0).map_err(|e| e.to_string())
        }
    };
    Ok(match spec.kind {
        ScheduleKind::Hybrid => {
            let (g, b) = entropy_adaptive_grid(h, r, t, d, eps, k).map_err(setup_err)?;
            (g, Ok(b))
        }
        ScheduleKind::Uniform => (uniform_time_grid(t, d, eps, k).map_err(setup_err)?, report()),
        ScheduleKind::Geometric => (geometric_time_grid(t, d, eps, k).map_err(setup_err)?, report()),
        ScheduleKind::UniformEta => (uniform_eta_grid(t, d, eps, k).map_err(setup_err)?, report()),
    })
}

fn bound_fields(b: &BoundReport) -> Vec<(&'static str, f64)> {
    vec![
        ("entropy", b.entropy),
        ("second_moment", b.second_moment),
        ("eta_min", b.eta_min),
        ("eta_max", b.eta_max),
        ("alpha", b.alpha),
        ("ell", b.ell),
        ("L", b.big_l),
        ("h", b.h),
        ("K", b.steps as f64),
        ("min_steps", b.min_steps as f64),
        ("disc_bound", b.disc_bound),
        ("hybrid_area_bound", b.hybrid_area_bound()),
        ("kl_disc", b.kl_disc_term),
        ("kl_init", b.init_term),
        ("kl_apx", b.apx_term),
        ("kl_total", b.kl_total),
        ("pinsker_tv_bound", b.pinsker_tv_bound()),
    ]
}

/// The bound report as a `[bound_report]` block of `key = value` lines.
pub fn bound_block(b: &BoundReport) -> String {
    let mut s = String::from("[bound_report]\n");
    for (k, v) in bound_fields(b) {
        if k == "K" || k == "min_steps" {
            s.push_str(&format!("{k} = {}\n", v as usize));
        } else {
            s.push_str(&format!("{k} = {}\n", fmt_f64(v)));
        }
    }
    s.push_str(&format!("vacuous = {}\n", b.is_vacuous()));
    s
}

fn bound_json(b: &BoundReport) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for (k, v) in bound_fields(b) {
        m.insert(k.to_string(), json!(v));
    }
    m.insert("vacuous".into(), json!(b.is_vacuous()));
    serde_json::Value::Object(m)
}

fn backend_for(model: &MixtureModel, kind: BackendKind, draws: usize, seed: u64) -> Backend {
    let seed = entsamp_core::seed::derive_seed(seed, "cli_channel", 0);
    match kind {
        BackendKind::Auto => Backend::auto(model, draws, seed),
        BackendKind::Quadrature => Backend::Quadrature,
        BackendKind::MonteCarlo => Backend::MonteCarlo { draws, seed },
    }
}

fn mmse_curve_cmd(ctx: &Ctx, a: &CurveArgs) -> Result<i32, CliError> {
    let mut cfg = load(&a.common)?;
    if let Some(b) = a.backend {
        cfg.channel.backend = b;
    }
    if let Some(d) = a.draws {
        cfg.channel.draws = d;
    }
    if let Some(c) = a.cells_per_decade {
        cfg.channel.cells_per_decade = c;
    }
    if let Some(x) = a.eta_min {
        cfg.curve.eta_min = x;
    }
    if let Some(x) = a.eta_max {
        cfg.curve.eta_max = x;
    }
    if let Some(p) = a.points {
        cfg.curve.points = p;
    }
    cfg.validate()?;
    let model = cfg.model.build()?;
    let backend = backend_for(&model, cfg.channel.backend, cfg.channel.draws, cfg.run.seed);
    Channel::new(&model, backend).map_err(setup_err)?;
    let etas = log_spaced(cfg.curve.eta_min, cfg.curve.eta_max, cfg.curve.points);
    let curve = mmse_curve(&model, &etas, backend, cfg.channel.cells_per_decade, &ctx.pool)?;
    let env = curve.envelope(&model, EnvelopeKind::SecondMoment);
    let mut table = Table::new(&["eta", "mmse", "std_error", "envelope", "mutual_info", "immse_rhs"]);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..etas.len() {
        worst = worst.max(curve.values[i] - env[i]);
        table.push(vec![
            fmt_f64(etas[i]),
            fmt_f64(curve.values[i]),
            fmt_f64(curve.std_errors[i]),
            fmt_f64(env[i]),
            fmt_f64(curve.mutual_info[i].value),
            fmt_f64(curve.immse_rhs[i].value),
        ]);
    }
    let out = sink(&a.common.out, cfg.run.outputs.as_deref(), "mmse_curve");
    let summary = format!(
        "mmse-curve: {} points, backend {}, max mmse - envelope = {:.3e}",
        etas.len(),
        curve.backend,
        worst
    );
    let report = json!({ "backend": curve.backend, "max_envelope_excess": worst });
    ctx.emit(&out, &table, &cfg.sha256(), cfg.run.seed, report, &summary)?;
    Ok(0)
}

fn grid_cmd(ctx: &Ctx, a: &GridArgs) -> Result<i32, CliError> {
    let mut cfg = load(&a.common)?;
    apply_schedule(&mut cfg.schedule, &a.schedule);
    cfg.validate()?;
    let model = cfg.model.build()?;
    let (grid, report) = build_grid(&model, &cfg.schedule)?;
    let mut table = Table::new(&["k", "t", "eta", "gamma", "a"]);
    for k in 0..=grid.steps() {
        table.push(vec![
            k.to_string(),
            fmt_f64(grid.t()[k]),
            fmt_f64(grid.eta()[k]),
            fmt_f64(grid.gamma()[k]),
            if k == 0 { String::new() } else { fmt_f64(grid.a()[k - 1]) },
        ]);
    }
    let out = sink(&a.common.out, cfg.run.outputs.as_deref(), "grid");
    let summary = format!(
        "grid: {} schedule, K = {}, eta in [{}, {}]",
        cfg.schedule.kind.name(),
        grid.steps(),
        fmt_f64(grid.eta_min()),
        fmt_f64(grid.eta_max())
    );
    let json_report = match &report {
        Ok(b) => bound_json(b),
        Err(e) => json!({ "unavailable": e }),
    };
    ctx.emit(&out, &table, &cfg.sha256(), cfg.run.seed, json_report, &summary)?;
    if !ctx.json {
        let block = match &report {
            Ok(b) => bound_block(b),
            Err(e) => format!("[bound_report]\nunavailable = {e:?}\n"),
        };
        print!("{block}");
    }
    Ok(0)
}

fn sample_cmd(ctx: &Ctx, a: &SampleArgs) -> Result<i32, CliError> {
    let mut cfg = load(&a.common)?;
    apply_schedule(&mut cfg.schedule, &a.schedule);
    if let Some(n) = a.n {
        cfg.run.n_paths = n;
    }
    cfg.validate()?;
    let model = cfg.model.build()?;
    let perturbation = cfg.perturbation(&model)?;
    let oracle = ScoreOracle::perturbed(&model, perturbation).map_err(setup_err)?;
    let (grid, report) = build_grid(&model, &cfg.schedule)?;
    let traj_path = a.trajectory.clone().or_else(|| {
        cfg.run
            .trajectory
            .then(|| cfg.run.outputs.as_ref().map(|d| d.join("sample.traj")))
            .flatten()
    });
    let sc = SamplerConfig {
        n_paths: cfg.run.n_paths,
        seed: cfg.run.seed,
        record_trajectory: traj_path.is_some(),
    };
    let out = sampler::run(&grid, &oracle, &sc, &ctx.pool)?;
    let d = model.dim();
    let columns: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let mut table = Table {
        columns,
        rows: Vec::with_capacity(sc.n_paths),
    };
    for row in out.samples.iter_rows() {
        table.push(row.iter().map(|&x| fmt_f64(x)).collect());
    }
    if let (Some(path), Some(t)) = (&traj_path, &out.trajectory) {
        write_atomic(path, &encode_trajectory(t))?;
    }
    let diag = output_diagnostics(&out.samples, &model, grid.delta())?;
    let pinsker = report.as_ref().ok().map(|b| b.pinsker_tv_bound());
    let mut summary = format!(
        "sample: {} paths, K = {}, max |freq z| = {:.2}",
        sc.n_paths,
        grid.steps(),
        diag.max_freq_z()
    );
    if let Some(tv) = diag.hist_tv {
        summary.push_str(&format!(", hist_tv = {tv:.4}"));
    }
    if let Some(p) = pinsker {
        summary.push_str(&format!(", pinsker bound = {p:.4}"));
    }
    if diag.separation_warning {
        summary.push_str(" (warning: centers closer than 6 sd, assignment ambiguous)");
    }
    let report = json!({
        "steps": grid.steps(),
        "paths": sc.n_paths,
        "hist_tv": diag.hist_tv,
        "pinsker_tv_bound": pinsker,
        "separation_warning": diag.separation_warning,
        "components": diag.components.iter().map(|c| json!({
            "weight": c.weight, "count": c.count, "freq": c.freq, "freq_z": c.freq_z,
            "mean_err": c.mean_err, "var_err": c.var_err,
        })).collect::<Vec<_>>(),
    });
    let dest = sink(&a.common.out, cfg.run.outputs.as_deref(), "sample");
    ctx.emit(&dest, &table, &cfg.sha256(), cfg.run.seed, report, &summary)?;
    Ok(0)
}

fn scale_cmd(ctx: &Ctx, a: &ScaleArgs) -> Result<i32, CliError> {
    let mut cfg = load(&a.common)?;
    if let Some(t) = a.horizon {
        cfg.schedule.horizon = t;
    }
    if let Some(d) = a.delta {
        cfg.schedule.delta = d;
    }
    if let Some(k) = &a.steps {
        cfg.scale.steps = k.clone();
    }
    if let Some(d) = &a.dims {
        cfg.scale.dims = d.clone();
    }
    if let Some(n) = a.draws {
        cfg.channel.draws = n;
    }
    if let Some(q) = a.quad_points {
        cfg.channel.quad_points = q;
    }
    cfg.validate()?;
    let model = cfg.model.build()?;
    cfg.validate_scale(&model)?;
    let setup = ScalingSetup {
        horizon: cfg.schedule.horizon,
        delta: cfg.schedule.delta,
        quad_points: cfg.channel.quad_points,
        draws: cfg.channel.draws,
        seed: cfg.run.seed,
    };
    let study = scaling_study(&model, &cfg.scale.steps, &cfg.scale.dims, &setup, &ctx.pool)
        .map_err(|e| match e {
            entsamp_core::Error::TooFewSteps { .. } => setup_err(e),
            e => e.into(),
        })?;
    let mut table = Table::new(&[
        "K",
        "d",
        "e_disc_area",
        "std_error",
        "disc_bound",
        "hybrid_bound",
        "slope",
        "backend",
    ]);
    let mut violations = 0;
    for row in &study.rows {
        let slope = study
            .slopes
            .iter()
            .find(|(d, _)| *d == row.dim)
            .and_then(|(_, s)| *s);
        if row.e_disc_area.value > row.disc_bound {
            violations += 1;
        }
        table.push(vec![
            row.steps.to_string(),
            row.dim.to_string(),
            fmt_f64(row.e_disc_area.value),
            fmt_f64(row.e_disc_area.std_error),
            fmt_f64(row.disc_bound),
            fmt_f64(row.hybrid_bound),
            slope.map(fmt_f64).unwrap_or_default(),
            row.backend.to_string(),
        ]);
    }
    let slopes: Vec<String> = study
        .slopes
        .iter()
        .map(|(d, s)| format!("d={d}: {}", s.map_or("n/a".into(), |v| format!("{v:.3}"))))
        .collect();
    let summary = format!(
        "scale-study: {} rows, slopes [{}], {} rows above disc_bound",
        study.rows.len(),
        slopes.join(", "),
        violations
    );
    let report = json!({
        "slopes": study.slopes.iter().map(|(d, s)| json!({"d": d, "slope": s})).collect::<Vec<_>>(),
        "rows_above_bound": violations,
    });
    let dest = sink(&a.common.out, cfg.run.outputs.as_deref(), "scale_study");
    ctx.emit(&dest, &table, &cfg.sha256(), cfg.run.seed, report, &summary)?;
    Ok(0)
}

#[derive(Serialize)]
struct BoundInputs {
    entropy: f64,
    second_moment: f64,
    horizon: f64,
    delta: f64,
    eps: f64,
    steps: usize,
    e_apx: f64,
}

fn bound_cmd(ctx: &Ctx, a: &BoundArgs) -> Result<i32, CliError> {
    let from_model = a.common.config.is_some() || a.common.model.is_some();
    let (mut inputs, seed) = if from_model {
        let cfg = load(&a.common)?;
        cfg.validate()?;
        let s = cfg.model.build()?.summary();
        (
            BoundInputs {
                entropy: s.entropy_nats,
                second_moment: s.second_moment,
                horizon: cfg.schedule.horizon,
                delta: cfg.schedule.delta,
                eps: cfg.model.eps.unwrap_or(0.0),
                steps: cfg.schedule.steps,
                e_apx: a.e_apx,
            },
            cfg.run.seed,
        )
    } else {
        let (Some(h), Some(r)) = (a.entropy, a.second_moment) else {
            return Err(CliError::Config(
                "bound needs --H and --R, or a model via --config/--model".into(),
            ));
        };
        let d = ScheduleSpec::default();
        (
            BoundInputs {
                entropy: h,
                second_moment: r,
                horizon: d.horizon,
                delta: d.delta,
                eps: 0.0,
                steps: d.steps,
                e_apx: a.e_apx,
            },
            a.common.seed.unwrap_or(0),
        )
    };
    if let Some(h) = a.entropy {
        inputs.entropy = h;
    }
    if let Some(r) = a.second_moment {
        inputs.second_moment = r;
    }
    if let Some(t) = a.horizon {
        inputs.horizon = t;
    }
    if let Some(d) = a.delta {
        inputs.delta = d;
    }
    if let Some(e) = a.eps {
        inputs.eps = e;
    }
    if let Some(k) = a.steps {
        inputs.steps = k;
    }
    let b = if inputs.entropy == 0.0 {
        zero_entropy_grid(inputs.second_moment, inputs.horizon, inputs.delta, inputs.eps, inputs.steps, inputs.e_apx)
            .map(|(_, b)| b)
    } else {
        kl_bound(
            inputs.entropy,
            inputs.second_moment,
            inputs.horizon,
            inputs.delta,
            inputs.eps,
            inputs.steps,
            inputs.e_apx,
        )
    }
    .map_err(setup_err)?;
    let hash = hex::encode(Sha256::digest(toml::to_string(&inputs).expect("toml").as_bytes()));
    let mut table = Table::new(&["key", "value"]);
    for (k, v) in bound_fields(&b) {
        table.push(vec![k.to_string(), fmt_f64(v)]);
    }
    let summary = format!(
        "bound: K = {} (min {}), kl_total = {}, pinsker tv bound = {}{}",
        b.steps,
        b.min_steps,
        fmt_f64(b.kl_total),
        fmt_f64(b.pinsker_tv_bound()),
        if b.is_vacuous() { " (vacuous)" } else { "" }
    );
    if ctx.json {
        ctx.emit(&Sink::Stdout, &table, &hash, seed, bound_json(&b), &summary)?;
        if let Some(p) = &a.common.out {
            write_atomic(p, &table.render(&hash, seed))?;
        }
        return Ok(0);
    }
    if let Some(p) = &a.common.out {
        write_atomic(p, &table.render(&hash, seed))?;
    }
    print!("{}", bound_block(&b));
    println!("{summary}");
    Ok(0)
}
