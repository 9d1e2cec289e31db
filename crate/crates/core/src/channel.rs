//! The latent Gaussian channel `V = U + η^{-1/2} G`.
//!
//! `mmse(η) = E‖U − E[U|V]‖²` and `I(η) = I(U; V)` are evaluated either by
//! deterministic quadrature (1-D symmetric two-point models, where
//! `E[U|V] = a tanh(η a V)`) or by Monte Carlo with antithetic noise pairs.
//!
//! Every quantity here is a linear functional of the two curves, so the core
//! entry point is [`Channel::evaluate`]: it takes a list of `η` nodes and a
//! list of [`Functional`]s over them, and returns one [`Estimate`] per
//! functional. The Monte Carlo backend evaluates all nodes on the same draws
//! and computes each functional per draw, so standard errors account for the
//! correlation between nodes.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::exec::{batch_count, batch_range, Executor, BATCH};
use crate::math::{ceil, exp, ln, ln_1p, sech_squared, sqrt};
use crate::quadrature::GaussLegendre;
use crate::seed::{self, fill_standard_normal};
use crate::stats::{merge_all, standardize, Estimate, Moments};
use crate::{Error, MixtureModel, Result};

/// Default Monte Carlo budget per curve.
pub const DEFAULT_DRAWS: usize = 100_000;

/// Above this many components the gap matrix is not stored, so neither the
/// pairwise variance nor the shifted proposals are used.
const PAIRWISE_LIMIT: usize = 64;

/// Probability of a shifted proposal branch in the pairwise regime.
const TILT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Quadrature,
    MonteCarlo { draws: usize, seed: u64 },
}

impl Backend {
    /// Quadrature when the model supports it, Monte Carlo otherwise.
    pub fn auto(model: &MixtureModel, draws: usize, seed: u64) -> Self {
        if TwoPointChannel::new(model).is_ok() {
            Backend::Quadrature
        } else {
            Backend::MonteCarlo { draws, seed }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Quadrature => "quadrature_1d",
            Backend::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Mmse,
    MutualInfo,
}

/// `constant + Σ coeff · quantity(η_node)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Functional {
    pub constant: f64,
    pub terms: Vec<(usize, Quantity, f64)>,
}

impl Functional {
    pub fn point(node: usize, quantity: Quantity) -> Self {
        Functional {
            constant: 0.0,
            terms: vec![(node, quantity, 1.0)],
        }
    }

    fn apply(&self, mmse: &[f64], info: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(i, q, c)| match q {
                    Quantity::Mmse => c * mmse[i],
                    Quantity::MutualInfo => c * info[i],
                })
                .sum::<f64>()
    }
}

/// Closed-form channel for 1-D models with two equally weighted centers
/// `c ± a`.
///
/// With `z = η a V'` for the centered observation, conditional on `U = c + a`
/// the variable `z` is `N(ηa², ηa²)`, so
/// `mmse(η) = a² E[sech² z]` and `I(η) = log 2 − E[h(2z)]` with `h` the
/// binary entropy of log-odds. Both expectations are integrated by composite
/// Gauss–Legendre over the region where the integrand is representable.
#[derive(Debug, Clone)]
pub struct TwoPointChannel {
    half_gap: f64,
    rule: GaussLegendre,
}

impl TwoPointChannel {
    pub fn new(model: &MixtureModel) -> Result<Self> {
        let w = model.weights();
        if model.dim() != 1 || w.len() != 2 || (w[0] - w[1]).abs() > 1e-12 {
            return Err(Error::UnsupportedBackend);
        }
        let half_gap = 0.5 * (model.center(0)[0] - model.center(1)[0]).abs();
        if half_gap == 0.0 {
            return Err(Error::DuplicateCenters { first: 0, second: 1 });
        }
        Ok(TwoPointChannel {
            half_gap,
            rule: GaussLegendre::new(16),
        })
    }

    pub fn half_gap(&self) -> f64 {
        self.half_gap
    }

    /// `E[f(z)]` for `z ~ N(η a², η a²)`, restricted to `|z| ≤ 40` where `f`
    /// is assumed negligible outside.
    fn expect(&self, eta: f64, f: impl Fn(f64) -> f64) -> f64 {
        let a = self.half_gap;
        let mean = eta * a * a;
        let sd = a * sqrt(eta);
        let lo = (mean - 38.0 * sd).max(-40.0);
        let hi = (mean + 38.0 * sd).min(40.0);
        if !(lo < hi) {
            return 0.0;
        }
        let width = 0.25 * sd.min(1.0);
        let panels = ceil((hi - lo) / width).max(1.0) as usize;
        let norm = 1.0 / (sd * sqrt(2.0 * crate::math::PI));
        self.rule.integrate_composite(lo, hi, panels, |z| {
            let u = (z - mean) / sd;
            f(z) * norm * exp(-0.5 * u * u)
        })
    }

    pub fn mmse(&self, eta: f64) -> f64 {
        let a2 = self.half_gap * self.half_gap;
        (a2 * self.expect(eta, sech_squared)).clamp(0.0, a2)
    }

    pub fn mutual_information(&self, eta: f64) -> f64 {
        let h = self.expect(eta, |z| crate::math::binary_entropy_from_logit(2.0 * z));
        (crate::math::LN_2 - h).clamp(0.0, crate::math::LN_2)
    }
}

/// Monte Carlo channel estimator.
///
/// Draws come in antithetic pairs `(J, G)`, `(J, −G)`; one pair is one
/// sample. With `S_jk = ‖μ_j − μ_k‖²` and `c_k = ⟨μ_J − μ_k, G⟩`, the
/// posterior log-weights at `η` are `log π_k − η S_Jk/2 ∓ √η c_k`, so a draw
/// costs `O(J d)` once and `O(J)` per node. The per-draw estimators are the
/// posterior variance `Σ_k w_k ‖μ_k − M‖²` (for `mmse`) and
/// `H(J) − H(w)` (for `I`), whose expectations are exact.
///
/// With at most 64 components the noise is importance sampled: a draw from
/// component `J` keeps `G` with probability ½ and otherwise shifts it by
/// `−(√η/2)(μ_J − μ_k)` for a uniformly chosen `k ≠ J`, which puts the
/// observation midway to `μ_k`. Draws are reweighted by the likelihood ratio
/// against `N(0, I)`. The base noise and the branch are shared by all nodes.
#[derive(Debug, Clone)]
pub struct McChannel<'a> {
    model: &'a MixtureModel,
    pairs: usize,
    seed: u64,
    log_pi: Vec<f64>,
    gaps: Option<Vec<f64>>,
    pairwise: bool,
    entropy: f64,
}

impl<'a> McChannel<'a> {
    pub fn new(model: &'a MixtureModel, draws: usize, seed: u64) -> Result<Self> {
        if draws < 2 {
            return Err(Error::Domain("Monte Carlo channel needs at least 2 draws"));
        }
        let n = model.components();
        let gaps = (n <= PAIRWISE_LIMIT).then(|| {
            let mut s = vec![0.0; n * n];
            for j in 0..n {
                for k in 0..n {
                    s[j * n + k] = crate::math::squared_distance(model.center(j), model.center(k));
                }
            }
            s
        });
        Ok(McChannel {
            model,
            pairs: draws.div_ceil(2),
            seed,
            log_pi: crate::score::log_weights(model),
            pairwise: n <= 2 * model.dim() + 1,
            gaps,
            entropy: model.entropy(),
        })
    }

    /// Number of antithetic pairs (samples) per estimate.
    pub fn pairs(&self) -> usize {
        self.pairs
    }

    fn evaluate<E: Executor>(
        &self,
        nodes: &[f64],
        functionals: &[Functional],
        exec: &E,
    ) -> Vec<Estimate> {
        let batches = batch_count(self.pairs, BATCH);
        let partials = exec.map(batches, |b| self.batch(b, nodes, functionals));
        (0..functionals.len())
            .map(|f| merge_all(partials.iter().map(|p| &p[f])).estimate())
            .collect()
    }

    fn batch(&self, b: usize, nodes: &[f64], functionals: &[Functional]) -> Vec<Moments> {
        let model = self.model;
        let (n, d) = (model.components(), model.dim());
        let mut rng = seed::stream(self.seed, "channel", b as u64);
        let cat = model.categorical();
        let roots: Vec<f64> = nodes.iter().map(|&e| sqrt(e)).collect();
        let tilted = self.gaps.is_some() && n > 1;
        let mut g = vec![0.0; d];
        let mut c = vec![0.0; n];
        let mut gap_row = vec![0.0; n];
        let mut gram = vec![0.0; n];
        let mut shifted = vec![0.0; n];
        let mut logits = vec![0.0; n];
        let mut offset = vec![0.0; d];
        let mut mm = vec![0.0; nodes.len()];
        let mut info = vec![0.0; nodes.len()];
        let mut out = vec![Moments::default(); functionals.len()];
        for _ in batch_range(self.pairs, BATCH, b) {
            let j = cat.sample(&mut rng);
            fill_standard_normal(&mut rng, &mut g);
            let partner = if tilted {
                partner(j, n, rng.random::<f64>())
            } else {
                None
            };
            let mu_j = model.center(j);
            for k in 0..n {
                let mu_k = model.center(k);
                let mut dot = 0.0;
                for i in 0..d {
                    dot += (mu_j[i] - mu_k[i]) * g[i];
                }
                c[k] = dot;
                gap_row[k] = match &self.gaps {
                    Some(s) => s[j * n + k],
                    None => crate::math::squared_distance(mu_j, mu_k),
                };
            }
            match (partner, &self.gaps) {
                (Some(p), Some(s)) => {
                    for k in 0..n {
                        gram[k] = 0.5 * (gap_row[k] + gap_row[p] - s[k * n + p]);
                    }
                }
                _ => gram.iter_mut().for_each(|x| *x = 0.0),
            }
            for (i, (&eta, &root)) in nodes.iter().zip(&roots).enumerate() {
                let mut var = 0.0;
                let mut ent = 0.0;
                for sign in [1.0, -1.0] {
                    for k in 0..n {
                        shifted[k] = sign * c[k] - 0.5 * root * gram[k];
                        logits[k] = self.log_pi[k] - 0.5 * eta * gap_row[k] - root * shifted[k];
                    }
                    let ratio = if tilted {
                        let mut tilt = 0.0;
                        for k in (0..n).filter(|&k| k != j) {
                            tilt += exp(-0.5 * root * shifted[k] - 0.125 * eta * gap_row[k]);
                        }
                        1.0 / ((1.0 - TILT) + TILT * tilt / (n - 1) as f64)
                    } else {
                        1.0
                    };
                    let (v, h) = self.posterior_stats(&mut logits, &mut offset);
                    var += ratio * v;
                    ent += ratio * (self.entropy - h);
                }
                mm[i] = 0.5 * var;
                info[i] = 0.5 * ent;
            }
            for (m, f) in out.iter_mut().zip(functionals) {
                m.push(f.apply(&mm, &info));
            }
        }
        out
    }

    /// Posterior variance and entropy from log-weights (overwritten with the
    /// weights).
    fn posterior_stats(&self, logits: &mut [f64], offset: &mut [f64]) -> (f64, f64) {
        let (top, max) = logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (k, &l)| if l > b.1 { (k, l) } else { b });
        let mut rest = 0.0;
        let mut gap = 0.0;
        for (k, l) in logits.iter_mut().enumerate() {
            let e = if k == top { 1.0 } else { exp(*l - max) };
            if k != top && e > 0.0 {
                rest += e;
                gap += e * (max - *l);
            }
            *l = e;
        }
        let total = 1.0 + rest;
        logits.iter_mut().for_each(|l| *l /= total);
        let ent = ln_1p(rest) + gap / total;
        let w = &*logits;
        let n = w.len();
        let var = match (&self.gaps, self.pairwise) {
            (Some(s), true) => {
                let mut acc = 0.0;
                for j in 0..n {
                    if w[j] == 0.0 {
                        continue;
                    }
                    let row = &s[j * n..];
                    let mut inner = 0.0;
                    for k in j + 1..n {
                        inner += w[k] * row[k];
                    }
                    acc += w[j] * inner;
                }
                acc
            }
            _ => anchored_variance(self.model, w, offset),
        };
        (var, ent.max(0.0))
    }
}

/// `Σ w_k ‖μ_k − M‖²` as `Σ w_k ‖μ_k − μ_a‖² − ‖M − μ_a‖²` about the heaviest
/// component `a`; the subtraction costs at most `log10 J` digits.
fn anchored_variance(model: &MixtureModel, w: &[f64], offset: &mut [f64]) -> f64 {
    let a = (0..w.len()).fold(0, |best, k| if w[k] > w[best] { k } else { best });
    let mu_a = model.center(a);
    offset.iter_mut().for_each(|x| *x = 0.0);
    let mut spread = 0.0;
    for (k, &wk) in w.iter().enumerate() {
        if wk == 0.0 || k == a {
            continue;
        }
        let mut sq = 0.0;
        for ((o, &x), &y) in offset.iter_mut().zip(model.center(k)).zip(mu_a) {
            let diff = x - y;
            *o += wk * diff;
            sq += diff * diff;
        }
        spread += wk * sq;
    }
    let shift: f64 = offset.iter().map(|x| x * x).sum();
    (spread - shift).max(0.0)
}

/// Shifted branch for a draw from component `j`, or `None` for the plain one.
fn partner(j: usize, n: usize, u: f64) -> Option<usize> {
    if u < 1.0 - TILT {
        return None;
    }
    let idx = (((u - (1.0 - TILT)) / TILT * (n - 1) as f64) as usize).min(n - 2);
    Some(if idx < j { idx } else { idx + 1 })
}

/// A channel backend bound to a model.
#[derive(Debug, Clone)]
pub enum Channel<'a> {
    Quadrature(TwoPointChannel),
    MonteCarlo(McChannel<'a>),
}

impl<'a> Channel<'a> {
    pub fn new(model: &'a MixtureModel, backend: Backend) -> Result<Self> {
        match backend {
            Backend::Quadrature => Ok(Channel::Quadrature(TwoPointChannel::new(model)?)),
            Backend::MonteCarlo { draws, seed } => {
                Ok(Channel::MonteCarlo(McChannel::new(model, draws, seed)?))
            }
        }
    }

    pub fn backend_name(&self) -> &'static str {
        match self {
            Channel::Quadrature(_) => "quadrature_1d",
            Channel::MonteCarlo(_) => "monte_carlo",
        }
    }

    /// True for deterministic backends (all standard errors are zero).
    pub fn is_exact(&self) -> bool {
        matches!(self, Channel::Quadrature(_))
    }

    /// Evaluates each functional over the curves at `nodes`.
    pub fn evaluate<E: Executor>(
        &self,
        model: &MixtureModel,
        nodes: &[f64],
        functionals: &[Functional],
        exec: &E,
    ) -> Result<Vec<Estimate>> {
        if nodes.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Domain("eta must be positive and finite"));
        }
        for f in functionals {
            if f.terms.iter().any(|&(i, _, _)| i >= nodes.len()) {
                return Err(Error::Domain("functional refers to a missing node"));
            }
        }
        let wants_info = functionals
            .iter()
            .any(|f| f.terms.iter().any(|t| t.1 == Quantity::MutualInfo));
        if wants_info {
            if let Some((first, second)) = model.duplicate_centers() {
                return Err(Error::DuplicateCenters { first, second });
            }
        }
        Ok(match self {
            Channel::Quadrature(q) => {
                let mm: Vec<f64> = exec.map(nodes.len(), |i| q.mmse(nodes[i]));
                let info: Vec<f64> = if wants_info {
                    exec.map(nodes.len(), |i| q.mutual_information(nodes[i]))
                } else {
                    vec![0.0; nodes.len()]
                };
                functionals
                    .iter()
                    .map(|f| Estimate::exact(f.apply(&mm, &info)))
                    .collect()
            }
            Channel::MonteCarlo(mc) => mc.evaluate(nodes, functionals, exec),
        })
    }
}

/// `mmse(η)` with its standard error.
pub fn mmse_at<E: Executor>(
    model: &MixtureModel,
    eta: f64,
    backend: Backend,
    exec: &E,
) -> Result<Estimate> {
    let ch = Channel::new(model, backend)?;
    Ok(ch.evaluate(model, &[eta], &[Functional::point(0, Quantity::Mmse)], exec)?[0])
}

/// `I(U; U + η^{-1/2} G)` in nats, as `H(J) − E[H(posterior)]`.
pub fn mutual_information<E: Executor>(
    model: &MixtureModel,
    eta: f64,
    backend: Backend,
    exec: &E,
) -> Result<Estimate> {
    let ch = Channel::new(model, backend)?;
    Ok(ch.evaluate(model, &[eta], &[Functional::point(0, Quantity::MutualInfo)], exec)?[0])
}

/// Which second moment caps the envelope at low SNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvelopeKind {
    /// `R = E‖Z‖²`.
    #[default]
    SecondMoment,
    /// The tighter `E‖U‖²`.
    CenterSecondMoment,
}

/// `min{R, 2H/η}`.
pub fn entropy_envelope(model: &MixtureModel, eta: f64) -> f64 {
    envelope(model, eta, EnvelopeKind::SecondMoment)
}

pub fn envelope(model: &MixtureModel, eta: f64, kind: EnvelopeKind) -> f64 {
    let cap = match kind {
        EnvelopeKind::SecondMoment => crate::mixture::second_moment(model),
        EnvelopeKind::CenterSecondMoment => model.center_second_moment(),
    };
    cap.min(2.0 * model.entropy() / eta)
}

/// Nodes and weights of `∫ f(λ) dλ` over `[λ₀, b_last]`, integrated by
/// Gauss–Legendre in `log λ` on cells that never straddle a breakpoint.
/// `ends[i]` is the number of nodes whose weights make up `∫_{λ₀}^{b_i}`.
#[derive(Debug, Clone)]
pub struct LogRule {
    pub lambda0: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub ends: Vec<usize>,
}

impl LogRule {
    pub fn new(lambda0: f64, breakpoints: &[f64], cells_per_decade: usize, order: usize) -> Self {
        let rule = GaussLegendre::new(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut ends = Vec::with_capacity(breakpoints.len());
        let mut lo = lambda0;
        for &hi in breakpoints {
            if hi > lo {
                let (ulo, uhi) = (ln(lo), ln(hi));
                let decades = (uhi - ulo) / core::f64::consts::LN_10;
                let cells = ceil(decades * cells_per_decade as f64).max(1.0) as usize;
                let width = (uhi - ulo) / cells as f64;
                for c in 0..cells {
                    let a = ulo + width * c as f64;
                    let b = if c + 1 == cells { uhi } else { a + width };
                    for (u, w) in rule.on_interval(a, b) {
                        let lam = exp(u);
                        nodes.push(lam);
                        weights.push(w * lam);
                    }
                }
                lo = hi;
            }
            ends.push(nodes.len());
        }
        LogRule {
            lambda0,
            nodes,
            weights,
            ends,
        }
    }
}

/// Plateau edge `λ₀ = 10⁻⁶ α`, kept below the smallest requested `η`.
fn plateau_edge(model: &MixtureModel, smallest: f64) -> f64 {
    let r = crate::mixture::second_moment(model);
    let alpha = if r > 0.0 { 2.0 * model.entropy() / r } else { 0.0 };
    let edge = if alpha > 0.0 { 1e-6 * alpha } else { 1e-6 * smallest };
    edge.min(smallest)
}

/// Functionals `½ ∫₀^{b_i} mmse` for every breakpoint, with node indices
/// offset by `offset`.
fn immse_functionals(model: &MixtureModel, rule: &LogRule, offset: usize) -> Vec<Functional> {
    let plateau = 0.5 * rule.lambda0 * model.center_variance();
    rule.ends
        .iter()
        .map(|&end| Functional {
            constant: plateau,
            terms: (0..end)
                .map(|i| (offset + i, Quantity::Mmse, 0.5 * rule.weights[i]))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmseCurve {
    pub etas: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub mutual_info: Vec<Estimate>,
    /// `½ ∫₀^η mmse` at each `η`.
    pub immse_rhs: Vec<Estimate>,
    pub backend: &'static str,
}

impl MmseCurve {
    pub fn envelope(&self, model: &MixtureModel, kind: EnvelopeKind) -> Vec<f64> {
        self.etas.iter().map(|&e| envelope(model, e, kind)).collect()
    }
}

/// Tabulates `mmse`, `I` and `½∫mmse` on increasing `etas`.
pub fn mmse_curve<E: Executor>(
    model: &MixtureModel,
    etas: &[f64],
    backend: Backend,
    cells_per_decade: usize,
    exec: &E,
) -> Result<MmseCurve> {
    check_increasing(etas)?;
    let ch = Channel::new(model, backend)?;
    let m = etas.len();
    let rule = LogRule::new(plateau_edge(model, etas[0]), etas, cells_per_decade, 8);
    let mut nodes = etas.to_vec();
    nodes.extend_from_slice(&rule.nodes);
    let mut fs: Vec<Functional> = (0..m).map(|i| Functional::point(i, Quantity::Mmse)).collect();
    fs.extend((0..m).map(|i| Functional::point(i, Quantity::MutualInfo)));
    fs.extend(immse_functionals(model, &rule, m));
    let est = ch.evaluate(model, &nodes, &fs, exec)?;
    Ok(MmseCurve {
        etas: etas.to_vec(),
        values: est[..m].iter().map(|e| e.value).collect(),
        std_errors: est[..m].iter().map(|e| e.std_error).collect(),
        mutual_info: est[m..2 * m].to_vec(),
        immse_rhs: est[2 * m..].to_vec(),
        backend: ch.backend_name(),
    })
}

/// Tabulates `mmse` only.
pub fn mmse_values<E: Executor>(
    model: &MixtureModel,
    etas: &[f64],
    backend: Backend,
    exec: &E,
) -> Result<Vec<Estimate>> {
    let ch = Channel::new(model, backend)?;
    let fs: Vec<Functional> = (0..etas.len())
        .map(|i| Functional::point(i, Quantity::Mmse))
        .collect();
    ch.evaluate(model, etas, &fs, exec)
}

fn check_increasing(etas: &[f64]) -> Result<()> {
    if etas.is_empty() || etas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("eta grid must be non-empty and strictly increasing"));
    }
    Ok(())
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (ln(lo), ln(hi));
    let mut v: Vec<f64> = (0..n)
        .map(|i| exp(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect();
    v[0] = lo;
    v[n - 1] = hi;
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmseReport {
    pub eta_max: f64,
    /// `I(η_max)`.
    pub lhs: Estimate,
    /// `½ ∫₀^{η_max} mmse`.
    pub rhs: Estimate,
    pub abs_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Relative tolerance of the I-MMSE check for deterministic backends.
pub const IMMSE_REL_TOL: f64 = 1e-3;
/// Standard errors allowed by the Monte Carlo checks.
pub const MC_SIGMAS: f64 = 3.0;

/// Compares `I(η_max)` with `½ ∫₀^{η_max} mmse`.
pub fn immse_check<E: Executor>(
    model: &MixtureModel,
    eta_max: f64,
    backend: Backend,
    cells_per_decade: usize,
    exec: &E,
) -> Result<ImmseReport> {
    if !(eta_max > 0.0 && eta_max.is_finite()) {
        return Err(Error::Domain("eta_max must be positive and finite"));
    }
    let ch = Channel::new(model, backend)?;
    let rule = LogRule::new(plateau_edge(model, eta_max), &[eta_max], cells_per_decade, 8);
    let mut nodes = vec![eta_max];
    nodes.extend_from_slice(&rule.nodes);
    let mut fs = vec![Functional::point(0, Quantity::MutualInfo)];
    fs.extend(immse_functionals(model, &rule, 1));
    let est = ch.evaluate(model, &nodes, &fs, exec)?;
    let (lhs, rhs) = (est[0], est[1]);
    let abs_error = (lhs.value - rhs.value).abs();
    let tolerance = if ch.is_exact() {
        IMMSE_REL_TOL * lhs.value
    } else {
        MC_SIGMAS * sqrt(lhs.std_error * lhs.std_error + rhs.std_error * rhs.std_error)
    };
    Ok(ImmseReport {
        eta_max,
        lhs,
        rhs,
        abs_error,
        tolerance,
        pass: abs_error <= tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeScan {
    /// `max (mmse − envelope)/SE`; `−inf` when a deterministic curve stays
    /// strictly below the envelope everywhere.
    pub max_standardized: f64,
    /// `max (mmse − envelope)`.
    pub max_excess: f64,
    pub worst_eta: f64,
}

impl EnvelopeScan {
    pub fn pass(&self) -> bool {
        self.max_standardized <= MC_SIGMAS
    }
}

/// Worst standardized exceedance of the envelope over `etas`.
pub fn envelope_violation_scan<E: Executor>(
    model: &MixtureModel,
    etas: &[f64],
    backend: Backend,
    kind: EnvelopeKind,
    exec: &E,
) -> Result<EnvelopeScan> {
    check_increasing(etas)?;
    let values = mmse_values(model, etas, backend, exec)?;
    let mut scan = EnvelopeScan {
        max_standardized: f64::NEG_INFINITY,
        max_excess: f64::NEG_INFINITY,
        worst_eta: etas[0],
    };
    for (&eta, v) in etas.iter().zip(&values) {
        let excess = v.value - envelope(model, eta, kind);
        let z = standardize(excess, v.std_error);
        if z > scan.max_standardized || (z == scan.max_standardized && excess > scan.max_excess) {
            scan.max_standardized = z;
            scan.worst_eta = eta;
        }
        scan.max_excess = scan.max_excess.max(excess);
    }
    Ok(scan)
}
