//! Approximation-error accounting for a perturbed score.

use alloc::vec;
use alloc::vec::Vec;

use crate::exec::{batch_count, batch_range, Executor, BATCH};
use crate::score::{Scratch, ScoreModel, ScoreOracle};
use crate::seed::{self, fill_standard_normal};
use crate::stats::{merge_all, Estimate, Moments};
use crate::{Error, Result, TimeGrid};

/// `L_x0(γ_k) = E‖m̂ − m‖²` at each grid point and the two aggregate
/// energies built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub gamma: Vec<f64>,
    pub l_x0: Vec<Estimate>,
    /// `Σ (γ_k − γ_{k−1}) L_x0(γ_{k−1})`.
    pub e_apx_sum: Estimate,
    /// `Σ (η_k − η_{k−1}) E‖M̂ − M‖²` at `t_{k−1}`.
    pub e_apx_m: Estimate,
    /// Closed-form `t_k² ‖b(t_k)‖²`, available for every provided
    /// perturbation.
    pub l_x0_closed_form: Vec<f64>,
    pub e_apx_sum_closed_form: f64,
}

impl ApproxReport {
    /// Largest relative gap between measured and closed-form `e_apx_sum`.
    pub fn closed_form_rel_error(&self) -> f64 {
        let exact = self.e_apx_sum_closed_form;
        if exact == 0.0 {
            self.e_apx_sum.value.abs()
        } else {
            ((self.e_apx_sum.value - exact) / exact).abs()
        }
    }
}

/// `E_apx` and its latent form for `oracle` on `grid`, estimating
/// `E‖ŝ − ∇log p‖²` from `n` samples of `X_{t_k}` per grid point.
pub fn approx_report<E: Executor>(
    oracle: &ScoreOracle<'_>,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    exec: &E,
) -> Result<ApproxReport> {
    let model = oracle.model();
    if grid.eps() != model.eps() {
        return Err(Error::InvalidGrid("grid and model eps differ".into()));
    }
    if n == 0 {
        return Err(Error::Domain("approx report needs at least one sample"));
    }
    let d = model.dim();
    let e2 = model.eps_squared();
    let t = grid.t();
    let points = t.len();
    // D_k = E‖ŝ − s‖² at X_{t_k}; then L_x0 = t² D and E‖M̂ − M‖² = (t+ε²)² D.
    let score_gap: Vec<Estimate> = if oracle.is_exact() {
        vec![Estimate::exact(0.0); points]
    } else {
        let exact = ScoreOracle::exact(model);
        let cat = model.categorical();
        let tasks = points * batch_count(n, BATCH);
        let per_batch = batch_count(n, BATCH);
        let parts = exec.map(tasks, |task| -> Result<Moments> {
            let (k, b) = (task / per_batch, task % per_batch);
            let sd = crate::math::sqrt(t[k] + e2);
            let mut rng = seed::stream(seed, "approx", task as u64);
            let mut x = vec![0.0; d];
            let mut s = vec![0.0; d];
            let mut s_hat = vec![0.0; d];
            let mut scratch = Scratch::new();
            let mut m = Moments::default();
            for _ in batch_range(n, BATCH, b) {
                let j = cat.sample(&mut rng);
                fill_standard_normal(&mut rng, &mut x);
                for (xi, mu) in x.iter_mut().zip(model.center(j)) {
                    *xi = mu + sd * *xi;
                }
                exact.score_into(&x, t[k], &mut s, &mut scratch)?;
                oracle.score_into(&x, t[k], &mut s_hat, &mut scratch)?;
                m.push(crate::math::squared_distance(&s, &s_hat));
            }
            Ok(m)
        });
        let parts: Vec<Moments> = parts.into_iter().collect::<Result<_>>()?;
        parts
            .chunks(per_batch)
            .map(|c| merge_all(c.iter()).estimate())
            .collect()
    };
    let l_x0: Vec<Estimate> = score_gap
        .iter()
        .zip(t)
        .map(|(g, &tk)| scale(*g, tk * tk))
        .collect();
    let l_m: Vec<Estimate> = score_gap
        .iter()
        .zip(t)
        .map(|(g, &tk)| scale(*g, (tk + e2) * (tk + e2)))
        .collect();
    let gamma = grid.gamma();
    let eta = grid.eta();
    let e_apx_sum = weighted_sum((1..points).map(|k| (gamma[k] - gamma[k - 1], l_x0[k - 1])));
    let e_apx_m = weighted_sum((1..points).map(|k| (eta[k] - eta[k - 1], l_m[k - 1])));
    let l_x0_closed_form: Vec<f64> = t
        .iter()
        .map(|&tk| tk * tk * oracle.perturbation().bias_norm_squared(tk, d))
        .collect();
    let e_apx_sum_closed_form = (1..points)
        .map(|k| (gamma[k] - gamma[k - 1]) * l_x0_closed_form[k - 1])
        .sum();
    Ok(ApproxReport {
        gamma: gamma.to_vec(),
        l_x0,
        e_apx_sum,
        e_apx_m,
        l_x0_closed_form,
        e_apx_sum_closed_form,
    })
}

fn scale(e: Estimate, c: f64) -> Estimate {
    Estimate {
        value: c * e.value,
        std_error: c * e.std_error,
    }
}

/// `Σ wᵢ Xᵢ` for independent estimates.
fn weighted_sum<I: Iterator<Item = (f64, Estimate)>>(terms: I) -> Estimate {
    let (mut value, mut var) = (0.0, 0.0);
    for (w, e) in terms {
        value += w * e.value;
        var += w * w * e.std_error * e.std_error;
    }
    Estimate {
        value,
        std_error: crate::math::sqrt(var),
    }
}
