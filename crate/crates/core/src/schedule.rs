//! Reverse-time grids and the KL bound arithmetic.
//!
//! A grid runs from `t₀ = T` down to `t_K = δ` and is kept in three
//! coordinates: time `t`, regularized SNR `η = 1/(t+ε²)` (increasing) and SNR
//! `γ = 1/t` (increasing). The entropy-adaptive grid is uniform in `η` below
//! `α = 2H/R` and geometric above it.

use alloc::format;
use alloc::vec::Vec;

use crate::math::{ceil, ln, log_plus, powf, sqrt};
use crate::{Error, Result};

/// Relative distance under which a constructed point is merged into a pinned
/// endpoint.
const PIN_MERGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t: Vec<f64>,
    eta: Vec<f64>,
    gamma: Vec<f64>,
    a: Vec<f64>,
    horizon: f64,
    delta: f64,
    eps: f64,
}

fn check_horizon(horizon: f64, delta: f64, eps: f64) -> Result<()> {
    if !(delta > 0.0 && delta < horizon && horizon.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "need 0 < delta < T, got delta = {delta}, T = {horizon}"
        )));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidGrid(format!("eps must be finite and >= 0, got {eps}")));
    }
    Ok(())
}

impl TimeGrid {
    /// Builds a grid from increasing `η` values. The first and last entries
    /// are replaced by the exact endpoints `1/(T+ε²)` and `1/(δ+ε²)`.
    pub fn from_eta(mut eta: Vec<f64>, horizon: f64, delta: f64, eps: f64) -> Result<Self> {
        check_horizon(horizon, delta, eps)?;
        if eta.len() < 2 {
            return Err(Error::InvalidGrid("a grid needs at least one step".into()));
        }
        let e2 = eps * eps;
        let k = eta.len() - 1;
        eta[0] = 1.0 / (horizon + e2);
        eta[k] = 1.0 / (delta + e2);
        if eta.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("eta must be strictly increasing".into()));
        }
        let mut t: Vec<f64> = eta.iter().map(|&e| 1.0 / e - e2).collect();
        t[0] = horizon;
        t[k] = delta;
        Self::assemble(t, eta, horizon, delta, eps)
    }

    /// Builds a grid from strictly decreasing times `T = t₀ > … > t_K = δ`.
    pub fn from_times(mut t: Vec<f64>, eps: f64) -> Result<Self> {
        if t.len() < 2 {
            return Err(Error::InvalidGrid("a grid needs at least one step".into()));
        }
        let (horizon, delta) = (t[0], t[t.len() - 1]);
        check_horizon(horizon, delta, eps)?;
        let k = t.len() - 1;
        t[0] = horizon;
        t[k] = delta;
        let e2 = eps * eps;
        let eta = t.iter().map(|&ti| 1.0 / (ti + e2)).collect();
        Self::assemble(t, eta, horizon, delta, eps)
    }

    fn assemble(t: Vec<f64>, eta: Vec<f64>, horizon: f64, delta: f64, eps: f64) -> Result<Self> {
        if t.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidGrid("times must be strictly decreasing".into()));
        }
        if eta.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("eta must be strictly increasing".into()));
        }
        let e2 = eps * eps;
        let gamma = if e2 == 0.0 {
            eta.clone()
        } else {
            t.iter().map(|&ti| 1.0 / ti).collect()
        };
        let a = t.windows(2).map(|w| (w[1] + e2) / (w[0] + e2)).collect();
        Ok(TimeGrid {
            t,
            eta,
            gamma,
            a,
            horizon,
            delta,
            eps,
        })
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.a.len()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Contraction factors `a_k = (t_k+ε²)/(t_{k−1}+ε²)`, `k = 1..=K`, stored
    /// at index `k − 1`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eta_min(&self) -> f64 {
        self.eta[0]
    }

    pub fn eta_max(&self) -> f64 {
        self.eta[self.eta.len() - 1]
    }
}

/// Equal steps in `t`.
pub fn uniform_time_grid(horizon: f64, delta: f64, eps: f64, steps: usize) -> Result<TimeGrid> {
    check_horizon(horizon, delta, eps)?;
    check_steps(steps)?;
    let h = (horizon - delta) / steps as f64;
    let t = (0..=steps).map(|k| horizon - h * k as f64).collect();
    TimeGrid::from_times(t, eps)
}

/// Equal ratios in `t + ε²`.
pub fn geometric_time_grid(horizon: f64, delta: f64, eps: f64, steps: usize) -> Result<TimeGrid> {
    check_horizon(horizon, delta, eps)?;
    check_steps(steps)?;
    let e2 = eps * eps;
    let (hi, lo) = (horizon + e2, delta + e2);
    let q = ln(lo / hi) / steps as f64;
    let t = (0..=steps)
        .map(|k| hi * crate::math::exp(q * k as f64) - e2)
        .collect();
    TimeGrid::from_times(t, eps)
}

/// Equal steps in `η`.
pub fn uniform_eta_grid(horizon: f64, delta: f64, eps: f64, steps: usize) -> Result<TimeGrid> {
    check_horizon(horizon, delta, eps)?;
    check_steps(steps)?;
    let e2 = eps * eps;
    let (lo, hi) = (1.0 / (horizon + e2), 1.0 / (delta + e2));
    let h = (hi - lo) / steps as f64;
    let eta = (0..=steps).map(|k| lo + h * k as f64).collect();
    TimeGrid::from_eta(eta, horizon, delta, eps)
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::TooFewSteps {
            steps,
            min_steps: 1,
        });
    }
    Ok(())
}

/// Bisects the largest `η`-interval (ties toward the smaller index) until
/// the grid has exactly `target` steps.
pub fn grid_refine(grid: &TimeGrid, target: usize) -> Result<TimeGrid> {
    if target < grid.steps() {
        return Err(Error::InvalidGrid(format!(
            "cannot refine {} steps down to {target}",
            grid.steps()
        )));
    }
    let eta = refine_eta(grid.eta.clone(), target);
    TimeGrid::from_eta(eta, grid.horizon, grid.delta, grid.eps)
}

fn refine_eta(mut eta: Vec<f64>, target: usize) -> Vec<f64> {
    while eta.len() - 1 < target {
        let mut best = 0;
        let mut width = eta[1] - eta[0];
        for i in 1..eta.len() - 1 {
            let w = eta[i + 1] - eta[i];
            if w > width {
                best = i;
                width = w;
            }
        }
        let mid = 0.5 * (eta[best] + eta[best + 1]);
        eta.insert(best + 1, mid);
    }
    eta
}

/// Terms of the KL bound `R/(2T) + (4H/K)(2+ℓ)² + e_apx/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub entropy: f64,
    pub second_moment: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    /// `α = 2H/R`.
    pub alpha: f64,
    /// `ℓ = log₊(η_max/α)`.
    pub ell: f64,
    /// `L = 2 + ℓ`.
    pub big_l: f64,
    /// Uniform step `h = 4αL/K`.
    pub h: f64,
    pub steps: usize,
    /// Smallest admissible `K`, `⌈4L⌉`.
    pub min_steps: usize,
    /// `(8H/K) L²`, the bound on the MMSE area.
    pub disc_bound: f64,
    pub kl_disc_term: f64,
    pub init_term: f64,
    pub apx_term: f64,
    pub kl_total: f64,
}

impl BoundReport {
    /// `√(KL/2)`, the total-variation bound from Pinsker's inequality.
    pub fn pinsker_tv_bound(&self) -> f64 {
        sqrt(0.5 * self.kl_total)
    }

    /// True when the Pinsker bound says nothing (`≥ 1`).
    pub fn is_vacuous(&self) -> bool {
        self.pinsker_tv_bound() >= 1.0
    }

    /// `h R L`, the area bound of the hybrid construction for this `h`.
    pub fn hybrid_area_bound(&self) -> f64 {
        self.h * self.second_moment * self.big_l
    }
}

/// Smallest step count admitted by the bound for `(H, R, η_max)`.
pub fn min_steps(entropy: f64, second_moment: f64, eta_max: f64) -> usize {
    let alpha = 2.0 * entropy / second_moment;
    let big_l = 2.0 + log_plus(eta_max / alpha);
    ceil(4.0 * big_l) as usize
}

fn check_bound_inputs(entropy: f64, second_moment: f64, e_apx: f64) -> Result<()> {
    if !(entropy > 0.0 && entropy.is_finite()) {
        return Err(Error::Domain(
            "the hybrid grid needs H > 0; use the zero-entropy grid for H = 0",
        ));
    }
    if !(second_moment > 0.0 && second_moment.is_finite()) {
        return Err(Error::Domain("second moment R must be positive"));
    }
    if !(e_apx >= 0.0) {
        return Err(Error::Domain("e_apx must be nonnegative"));
    }
    Ok(())
}

/// Evaluates every term of the KL bound.
pub fn kl_bound(
    entropy: f64,
    second_moment: f64,
    horizon: f64,
    delta: f64,
    eps: f64,
    steps: usize,
    e_apx: f64,
) -> Result<BoundReport> {
    check_horizon(horizon, delta, eps)?;
    check_bound_inputs(entropy, second_moment, e_apx)?;
    let e2 = eps * eps;
    let eta_min = 1.0 / (horizon + e2);
    let eta_max = 1.0 / (delta + e2);
    let alpha = 2.0 * entropy / second_moment;
    let ell = log_plus(eta_max / alpha);
    let big_l = 2.0 + ell;
    let min_steps = ceil(4.0 * big_l) as usize;
    if steps < min_steps {
        return Err(Error::TooFewSteps { steps, min_steps });
    }
    let k = steps as f64;
    let kl_disc_term = 4.0 * entropy / k * big_l * big_l;
    let init_term = second_moment / (2.0 * horizon);
    let apx_term = 0.5 * e_apx;
    Ok(BoundReport {
        entropy,
        second_moment,
        eta_min,
        eta_max,
        alpha,
        ell,
        big_l,
        h: 4.0 * alpha * big_l / k,
        steps,
        min_steps,
        disc_bound: 8.0 * entropy / k * big_l * big_l,
        kl_disc_term,
        init_term,
        apx_term,
        kl_total: init_term + kl_disc_term + apx_term,
    })
}

/// The hybrid construction before refinement, as increasing `η` values.
pub fn hybrid_eta_points(report: &BoundReport) -> Vec<f64> {
    let (lo, hi, alpha, h) = (report.eta_min, report.eta_max, report.alpha, report.h);
    let r = 1.0 + h / alpha;
    let mut eta = Vec::new();
    if hi <= alpha {
        uniform_part(&mut eta, lo, hi, h);
        return eta;
    }
    let start = if alpha <= lo {
        lo
    } else {
        uniform_part(&mut eta, lo, alpha, h);
        eta.pop();
        alpha
    };
    let q = ceil(ln(hi / start) / ln(r)).max(1.0) as i32;
    for j in 0..q {
        eta.push(start * powf(r, j as f64));
    }
    push_pinned(&mut eta, hi);
    eta
}

/// `lo + i h` for `i < M = ⌈(hi − lo)/h⌉`, then `hi`.
fn uniform_part(eta: &mut Vec<f64>, lo: f64, hi: f64, h: f64) {
    let m = ceil((hi - lo) / h).max(1.0) as usize;
    for i in 0..m {
        eta.push(lo + h * i as f64);
    }
    push_pinned(eta, hi);
}

fn push_pinned(eta: &mut Vec<f64>, end: f64) {
    while eta.len() > 1 && eta[eta.len() - 1] >= end * (1.0 - PIN_MERGE) {
        eta.pop();
    }
    eta.push(end);
}

/// The entropy-adaptive grid with exactly `K` steps and its bound report.
pub fn hybrid_grid(
    entropy: f64,
    second_moment: f64,
    horizon: f64,
    delta: f64,
    eps: f64,
    steps: usize,
) -> Result<(TimeGrid, BoundReport)> {
    let report = kl_bound(entropy, second_moment, horizon, delta, eps, steps, 0.0)?;
    let eta = hybrid_eta_points(&report);
    if eta.len() - 1 > steps {
        return Err(Error::InvalidGrid(format!(
            "hybrid construction produced {} intervals for K = {steps}",
            eta.len() - 1
        )));
    }
    let eta = refine_eta(eta, steps);
    Ok((TimeGrid::from_eta(eta, horizon, delta, eps)?, report))
}

/// Grid and report for a zero-entropy target: uniform in `η`, with a zero
/// discretization term.
pub fn zero_entropy_grid(
    second_moment: f64,
    horizon: f64,
    delta: f64,
    eps: f64,
    steps: usize,
    e_apx: f64,
) -> Result<(TimeGrid, BoundReport)> {
    let grid = uniform_eta_grid(horizon, delta, eps, steps)?;
    if !(second_moment >= 0.0) {
        return Err(Error::Domain("second moment R must be nonnegative"));
    }
    let init_term = second_moment / (2.0 * horizon);
    let apx_term = 0.5 * e_apx;
    let report = BoundReport {
        entropy: 0.0,
        second_moment,
        eta_min: grid.eta_min(),
        eta_max: grid.eta_max(),
        alpha: 0.0,
        ell: 0.0,
        big_l: 2.0,
        h: (grid.eta_max() - grid.eta_min()) / steps as f64,
        steps,
        min_steps: 1,
        disc_bound: 0.0,
        kl_disc_term: 0.0,
        init_term,
        apx_term,
        kl_total: init_term + apx_term,
    };
    Ok((grid, report))
}

/// [`hybrid_grid`] for `H > 0`, [`zero_entropy_grid`] for `H = 0`.
pub fn entropy_adaptive_grid(
    entropy: f64,
    second_moment: f64,
    horizon: f64,
    delta: f64,
    eps: f64,
    steps: usize,
) -> Result<(TimeGrid, BoundReport)> {
    if entropy == 0.0 {
        zero_entropy_grid(second_moment, horizon, delta, eps, steps, 0.0)
    } else {
        hybrid_grid(entropy, second_moment, horizon, delta, eps, steps)
    }
}

impl BoundReport {
    /// The same report with a different approximation energy.
    pub fn with_e_apx(mut self, e_apx: f64) -> Self {
        self.apx_term = 0.5 * e_apx;
        self.kl_total = self.init_term + self.kl_disc_term + self.apx_term;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::LN_2;
    use alloc::vec;

    #[test]
    fn uniform_single_step() {
        let g = uniform_time_grid(1.0, 0.5, 0.0, 1).unwrap();
        assert_eq!(g.t(), &[1.0, 0.5]);
        assert_eq!(g.a(), &[0.5]);
    }

    #[test]
    fn geometric_midpoint() {
        let eps: f64 = 0.5;
        let e2 = eps * eps;
        let g = geometric_time_grid(1.0 - e2, 0.36 - e2, eps, 2).unwrap();
        assert!((g.t()[1] + e2 - 0.6).abs() < 1e-15);
    }

    #[test]
    fn invalid_horizons() {
        assert!(uniform_time_grid(1.0, 1.0, 0.0, 4).is_err());
        assert!(uniform_time_grid(1.0, 0.0, 0.0, 4).is_err());
        assert!(uniform_time_grid(1.0, 0.5, 0.0, 0).is_err());
        assert!(TimeGrid::from_eta(vec![0.1, 0.5, 0.4, 2.0], 10.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn refine_splits_larger_gap_first() {
        let g = TimeGrid::from_eta(vec![0.1, 0.2, 1.0], 10.0, 1.0, 0.0).unwrap();
        let r = grid_refine(&g, 3).unwrap();
        assert_eq!(r.eta(), &[0.1, 0.2, 0.6, 1.0]);
        assert_eq!(grid_refine(&g, 2).unwrap(), g);
        assert!(grid_refine(&g, 1).is_err());
    }

    #[test]
    fn refine_ties_go_to_smaller_index() {
        let g = TimeGrid::from_eta(vec![0.5, 1.0, 1.5], 2.0, 1.0 / 1.5, 0.0).unwrap();
        let r = grid_refine(&g, 3).unwrap();
        assert_eq!(r.eta()[1], 0.75);
    }

    #[test]
    fn worked_bound() {
        let b = kl_bound(LN_2, 1.0, 100.0, 0.01, 0.0, 64, 0.0).unwrap();
        assert!((b.alpha - 1.386_294_361_119_890_6).abs() < 1e-15);
        assert!((b.ell - 4.278_535_926_009_81).abs() < 1e-13);
        assert_eq!(b.min_steps, 26);
        assert!((b.h - 0.543_993_684_394_753).abs() < 1e-13);
        assert!((b.kl_disc_term - 1.707_741_945_497_45).abs() < 1e-12);
        assert_eq!(b.init_term, 0.005);
        assert_eq!(b.disc_bound, 2.0 * b.kl_disc_term);
        assert_eq!(b.kl_total, b.init_term + b.kl_disc_term + b.apx_term);
        let with_apx = kl_bound(LN_2, 1.0, 100.0, 0.01, 0.0, 64, 2.0).unwrap();
        assert!((with_apx.kl_total - b.kl_total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn too_few_steps_reports_minimum() {
        match hybrid_grid(LN_2, 1.0, 100.0, 0.01, 0.0, 25) {
            Err(Error::TooFewSteps { steps: 25, min_steps: 26 }) => {}
            other => panic!("{other:?}"),
        }
        assert!(hybrid_grid(0.0, 1.0, 100.0, 0.01, 0.0, 64).is_err());
    }

    #[test]
    fn clamped_log_regime() {
        // R eta_max <= 2H
        let b = kl_bound(LN_2, 1.0, 10.0, 0.75, 0.0, 8, 0.0).unwrap();
        assert_eq!(b.ell, 0.0);
        assert_eq!(b.big_l, 2.0);
        assert!((b.kl_disc_term - 16.0 * LN_2 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn hybrid_has_exact_steps_and_endpoints() {
        let (g, b) = hybrid_grid(LN_2, 1.0, 100.0, 0.01, 0.0, 64).unwrap();
        assert_eq!(g.steps(), 64);
        assert_eq!(g.eta_min(), 0.01);
        assert_eq!(g.eta_max(), 100.0);
        let pre = hybrid_eta_points(&b);
        assert!(pre.len() - 1 <= 64 / 2 + 2);
        assert!(pre.contains(&b.alpha));
    }

    #[test]
    fn zero_entropy_grid_has_no_disc_term() {
        let (g, b) = entropy_adaptive_grid(0.0, 4.0, 10.0, 0.1, 0.0, 5).unwrap();
        assert_eq!(g.steps(), 5);
        assert_eq!(b.kl_disc_term, 0.0);
        assert_eq!(b.kl_total, 0.2);
    }
}
