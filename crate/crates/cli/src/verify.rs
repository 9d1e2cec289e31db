//! The invariant suite behind `entsamp verify`.

use entsamp_core::analysis::{
    approx_report, disc_area, disc_area_with, disc_pathwise, output_diagnostics, pathwise_energies,
    pinsker_check,
};
use entsamp_core::channel::{
    envelope_violation_scan, immse_check, log_spaced, Backend, Channel, EnvelopeKind,
    TwoPointChannel,
};
use entsamp_core::mixture::{grid, two_point};
use entsamp_core::sampler::{self, SamplerConfig};
use entsamp_core::schedule::{
    entropy_adaptive_grid, geometric_time_grid, grid_refine, hybrid_grid, kl_bound,
    uniform_eta_grid,
};
use entsamp_core::seed::{derive_seed, stream};
use entsamp_core::stats::standardize;
use entsamp_core::{Executor, MixtureModel, Perturbation, Result, ScoreOracle, Sequential};
use rand::Rng;
use serde_json::json;
use sha2::Digest;

use crate::cli::{Suite, VerifyArgs};
use crate::commands::{Ctx, Sink};
use crate::error::CliError;
use crate::output::{fmt_f64, Table};

/// Outcome of one check: `statistic` is compared against `threshold` in the
/// direction recorded by the check itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

fn check(name: &'static str, statistic: f64, threshold: f64, detail: String) -> Check {
    Check {
        name,
        pass: statistic <= threshold,
        statistic,
        threshold,
        detail,
    }
}

/// Sample sizes for one suite.
#[derive(Debug, Clone, Copy)]
pub struct Sizes {
    pub draws: usize,
    pub paths: usize,
    pub samples: usize,
    pub random_models: usize,
    /// Steps of the endpoint-law grid; more samples resolve more of the
    /// first-order contraction of the cluster means.
    pub endpoint_steps: usize,
}

impl Sizes {
    pub fn for_suite(suite: Suite) -> Self {
        match suite {
            Suite::Quick => Sizes {
                draws: 20_000,
                paths: 20_000,
                samples: 20_000,
                random_models: 2,
                endpoint_steps: 256,
            },
            Suite::Full => Sizes {
                draws: 100_000,
                paths: 100_000,
                samples: 200_000,
                random_models: 5,
                endpoint_steps: 1024,
            },
        }
    }
}

/// A random mixture with at most `max_j` components in at most `max_d`
/// dimensions, drawn from `stream(seed, "random_model", index)`.
pub fn random_model(seed: u64, index: u64, max_j: usize, max_d: usize) -> MixtureModel {
    let mut rng = stream(seed, "random_model", index);
    let d = rng.random_range(1..=max_d);
    let j = rng.random_range(2..=max_j);
    let eps = rng.random_range(0.0..0.5);
    let centers: Vec<f64> = (0..j * d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let raw: Vec<f64> = (0..j).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    MixtureModel::new(d, centers, raw.iter().map(|w| w / s).collect(), eps)
        .expect("random model is valid")
}

fn pm_one() -> MixtureModel {
    two_point(1, 0.0, 2.0, 0.5).expect("valid")
}

/// Runs every check of `suite`.
pub fn run_suite<E: Executor>(suite: Suite, seed: u64, exec: &E) -> Result<Vec<Check>> {
    let sz = Sizes::for_suite(suite);
    let mut out = Vec::new();
    let sub = |label: &str, i: u64| derive_seed(seed, label, i);

    // Envelope on the two-point channel, by quadrature.
    let m = pm_one();
    let alpha = 2.0 * m.entropy() / m.summary().second_moment;
    let etas = log_spaced(1e-3 * alpha, 1e3 * alpha, 50);
    let scan = envelope_violation_scan(&m, &etas, Backend::Quadrature, EnvelopeKind::SecondMoment, exec)?;
    out.push(check(
        "envelope_quadrature",
        scan.max_excess,
        0.0,
        format!("worst eta {}", fmt_f64(scan.worst_eta)),
    ));

    // Envelope on random models, by Monte Carlo.
    let mut worst = f64::NEG_INFINITY;
    for i in 0..sz.random_models {
        let rm = random_model(seed, i as u64, 16, 8);
        let a = 2.0 * rm.entropy() / rm.summary().second_moment;
        let etas = log_spaced(1e-3 * a, 1e3 * a, 25);
        let backend = Backend::MonteCarlo {
            draws: sz.draws,
            seed: sub("envelope", i as u64),
        };
        let s = envelope_violation_scan(&rm, &etas, backend, EnvelopeKind::SecondMoment, exec)?;
        worst = worst.max(s.max_standardized);
    }
    out.push(check(
        "envelope_monte_carlo",
        worst,
        3.0,
        format!("{} random models", sz.random_models),
    ));

    // I-MMSE identity.
    let mut rel = 0.0f64;
    for eta in [0.5, 1.0, 4.0] {
        let r = immse_check(&m, eta, Backend::Quadrature, 8, exec)?;
        rel = rel.max(r.abs_error / r.lhs.value);
    }
    out.push(check("immse_quadrature", rel, 1e-3, "relative gap, eta_max in {0.5, 1, 4}".into()));
    let rm = random_model(seed, 100, 8, 4);
    let backend = Backend::MonteCarlo {
        draws: sz.draws,
        seed: sub("immse", 0),
    };
    let r = immse_check(&rm, 1.0, backend, 8, exec)?;
    let se = (r.lhs.std_error.powi(2) + r.rhs.std_error.powi(2)).sqrt();
    out.push(check(
        "immse_monte_carlo",
        standardize(r.lhs.value - r.rhs.value, se).abs(),
        3.0,
        format!("I = {:.6}, half integral = {:.6}", r.lhs.value, r.rhs.value),
    ));

    // Bound arithmetic and hybrid areas.
    let q = TwoPointChannel::new(&m)?;
    let mut ratio = 0.0f64;
    for k in [32, 64, 128, 256] {
        let (g, b) = hybrid_grid(std::f64::consts::LN_2, 1.0, 100.0, 0.01, 0.0, k)?;
        if g.steps() != k {
            ratio = f64::INFINITY;
        }
        let area = disc_area_with(|e| q.mmse(e), &g, 16).total.value;
        ratio = ratio.max(area / b.disc_bound).max(area / b.hybrid_area_bound());
    }
    out.push(check(
        "hybrid_area_within_bounds",
        ratio,
        1.0,
        "largest area / bound, K in {32, 64, 128, 256}".into(),
    ));
    let b = kl_bound(std::f64::consts::LN_2, 1.0, 100.0, 0.01, 0.0, 64, 0.0)?;
    let direct = 4.0 * b.entropy / 64.0 * (2.0 + (b.eta_max / b.alpha).ln()).powi(2);
    out.push(check(
        "bound_arithmetic",
        (b.kl_disc_term - direct).abs(),
        1e-12,
        format!("kl_disc(64) = {}", fmt_f64(b.kl_disc_term)),
    ));

    // Refinement never increases the area.
    let coarse = uniform_eta_grid(100.0, 0.01, 0.0, 8)?;
    let mut prev = disc_area_with(|e| q.mmse(e), &coarse, 16).total.value;
    let mut increase = f64::NEG_INFINITY;
    for target in [9, 12, 16, 32] {
        let a = disc_area_with(|e| q.mmse(e), &grid_refine(&coarse, target)?, 16).total.value;
        increase = increase.max(a - prev);
        prev = a;
    }
    out.push(check("refinement_monotone", increase, 1e-12, "largest area increase".into()));

    // Area and pathwise energy agree.
    let mut worst_z = 0.0f64;
    let mut mart = 0.0f64;
    let two_d = grid(2, 0.2, 2, 2.0, 2)?;
    let cases: Vec<(MixtureModel, f64, f64, usize)> = match suite {
        Suite::Quick => vec![(pm_one(), 10.0, 0.75, 8)],
        Suite::Full => vec![
            (pm_one(), 10.0, 0.75, 8),
            (pm_one(), 10.0, 0.1, 4),
            (pm_one(), 10.0, 0.1, 16),
            (two_d.clone(), 10.0, 0.1, 8),
        ],
    };
    for (i, (cm, t, d, k)) in cases.iter().enumerate() {
        let g = uniform_eta_grid(*t, *d, cm.eps(), *k)?;
        let backend = Backend::auto(cm, sz.draws, sub("area_vs_path_area", i as u64));
        let ch = Channel::new(cm, backend)?;
        let area = disc_area(&ch, cm, &g, 16, exec)?.total;
        let p = disc_pathwise(cm, &g, sz.paths, 8, sub("area_vs_path_path", i as u64), exec)?;
        worst_z = worst_z.max(area.z_distance(&p.disc));
        mart = mart.max(p.martingale_max_z);
    }
    out.push(check(
        "area_equals_pathwise",
        worst_z,
        3.0,
        format!("{} grids, combined-SE distance", cases.len()),
    ));
    out.push(check("martingale_increments", mart, 3.0, "largest |mean|/SE".into()));

    // Approximation accounting with a constant bias.
    let bias = Perturbation::ConstantBias(vec![0.1]);
    let mut closed = 0.0f64;
    let mut order = f64::NEG_INFINITY;
    for eps in [0.0, 0.3] {
        let pm = two_point(1, eps, 2.0, 0.5)?;
        let o = ScoreOracle::perturbed(&pm, bias.clone())?;
        let s = pm.summary();
        let grids = [
            uniform_eta_grid(100.0, 0.01, eps, 32)?,
            geometric_time_grid(100.0, 0.01, eps, 32)?,
            hybrid_grid(s.entropy_nats, s.second_moment, 100.0, 0.01, eps, 64)?.0,
        ];
        for g in &grids {
            let r = approx_report(&o, g, 1000, sub("approx", 0), exec)?;
            closed = closed.max(r.closed_form_rel_error());
            order = order.max(r.e_apx_m.value - r.e_apx_sum.value);
        }
    }
    out.push(check("approx_closed_form", closed, 1e-6, "relative error of e_apx_sum".into()));
    out.push(check("latent_energy_order", order, 0.0, "max e_apx_M - e_apx_sum".into()));

    // Orthogonality and additivity of the pathwise decomposition.
    let o = ScoreOracle::perturbed(&m, Perturbation::ConstantBias(vec![0.2]))?;
    let g = uniform_eta_grid(10.0, 0.1, 0.0, 8)?;
    let p = pathwise_energies(&o, &g, sz.paths, 8, sub("orthogonality", 0), exec)?;
    out.push(check("orthogonality", p.cross_max_z(), 3.0, "largest per-cell |E<A,B>|/SE".into()));
    let apx = approx_report(&o, &g, 1000, sub("approx", 1), exec)?;
    out.push(check(
        "energy_additivity",
        p.excess.z_distance(&apx.e_apx_m),
        3.0,
        format!(
            "total - disc = {:.6}, e_apx_M = {:.6}",
            p.excess.value, apx.e_apx_m.value
        ),
    ));

    // Zero entropy.
    let single = MixtureModel::new(1, vec![0.7], vec![1.0], 0.1)?;
    let s = single.summary();
    let (g, _) = entropy_adaptive_grid(s.entropy_nats, s.second_moment, 100.0, 0.01, 0.1, 16)?;
    let ch = Channel::new(&single, Backend::auto(&single, sz.draws, sub("zero", 0)))?;
    let area = disc_area(&ch, &single, &g, 16, exec)?.total.value.abs();
    out.push(check("zero_entropy_area", area, 1e-12, "single component".into()));
    let run = sampler::run(
        &g,
        &ScoreOracle::exact(&single),
        &SamplerConfig {
            n_paths: sz.samples,
            seed: sub("zero_sampler", 0),
            record_trajectory: false,
        },
        exec,
    )?;
    let diag = output_diagnostics(&run.samples, &single, 0.01)?;
    out.push(check(
        "zero_entropy_moments",
        diag.max_mean_z().max(diag.max_var_z()),
        4.0,
        "mean and variance z-scores".into(),
    ));

    // Endpoint law of the sampler.
    let pm3 = two_point(1, 0.0, 6.0, 0.5)?;
    let s = pm3.summary();
    let (g, b) = hybrid_grid(s.entropy_nats, s.second_moment, 100.0, 0.01, 0.0, sz.endpoint_steps)?;
    let run = sampler::run(
        &g,
        &ScoreOracle::exact(&pm3),
        &SamplerConfig {
            n_paths: sz.samples,
            seed: sub("endpoint", 0),
            record_trajectory: false,
        },
        exec,
    )?;
    let diag = output_diagnostics(&run.samples, &pm3, 0.01)?;
    out.push(check("endpoint_frequencies", diag.max_freq_z(), 4.0, "binomial z".into()));
    out.push(check("endpoint_means", diag.max_mean_z(), 4.0, "within-cluster mean z".into()));
    let tv = diag.hist_tv.unwrap_or(f64::INFINITY);
    out.push(check("endpoint_hist_tv", tv, 0.05, "200 bins over a 6 sd box".into()));
    let pc = pinsker_check(&b, tv);
    out.push(Check {
        name: "pinsker_sanity",
        pass: pc.holds,
        statistic: pc.measured,
        threshold: pc.bound,
        detail: if pc.vacuous { "bound vacuous".into() } else { "tv <= sqrt(kl/2)".into() },
    });

    // Thread-count independence.
    let small = SamplerConfig {
        n_paths: 5000,
        seed: sub("determinism", 0),
        record_trajectory: false,
    };
    let a = sampler::run(&g, &ScoreOracle::exact(&pm3), &small, exec)?;
    let b = sampler::run(&g, &ScoreOracle::exact(&pm3), &small, &Sequential)?;
    let same = a.samples.as_slice().iter().zip(b.samples.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
    out.push(Check {
        name: "executor_determinism",
        pass: same,
        statistic: if same { 0.0 } else { 1.0 },
        threshold: 0.0,
        detail: "pool vs sequential sampler output".into(),
    });

    Ok(out)
}

pub fn verify_cmd(ctx: &Ctx, a: &VerifyArgs) -> std::result::Result<i32, CliError> {
    let checks = run_suite(a.suite, a.seed, &ctx.pool)?;
    let mut table = Table::new(&["check", "pass", "statistic", "threshold", "detail"]);
    for c in &checks {
        table.push(vec![
            c.name.to_string(),
            c.pass.to_string(),
            fmt_f64(c.statistic),
            fmt_f64(c.threshold),
            c.detail.clone(),
        ]);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let suite = match a.suite {
        Suite::Quick => "quick",
        Suite::Full => "full",
    };
    let summary = if failed.is_empty() {
        format!("verify {suite}: all {} checks passed", checks.len())
    } else {
        format!(
            "verify {suite}: {} of {} checks failed: {}",
            failed.len(),
            checks.len(),
            failed.join(", ")
        )
    };
    let hash = hex::encode(sha2::Sha256::digest(format!("verify {suite}").as_bytes()));
    let report = json!({ "suite": suite, "failed": failed });
    let sink = match &a.out {
        Some(p) => Sink::File(p.clone()),
        None => Sink::Stdout,
    };
    ctx.emit(&sink, &table, &hash, a.seed, report, &summary)?;
    Ok(if failed.is_empty() { 0 } else { 1 })
}
