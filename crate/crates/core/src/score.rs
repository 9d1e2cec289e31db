//! Exact mixture posteriors and scores, and synthetic score perturbations.
//!
//! For the forward marginal `X_t = U + √(t+ε²) G` with `v = t + ε²`:
//!
//! - posterior weights `wⱼ(x) ∝ πⱼ exp(−‖x−μⱼ‖²/(2v))`,
//! - latent posterior mean `M_t(x) = Σ wⱼ μⱼ`,
//! - score `∇log p_t(x) = (M_t(x) − x)/v`,
//! - data posterior mean `m_t(x) = x + t ∇log p_t(x)`.
//!
//! A [`ScoreModel`] only has to provide the score; `M̂_t(x) = x + v ŝ_t(x)`
//! and `m̂_t(x) = x + t ŝ_t(x)` are always formed from it.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{self, ln, log_sum_exp, softmax_in_place, squared_distance};
use crate::seed;
use crate::{Error, MixtureModel, Result};

/// Reusable buffers for score evaluation.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Scratch {
    pub fn new() -> Self {
        Self::default()
    }
}

fn variance(model: &MixtureModel, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain("time must be finite and nonnegative"));
    }
    let v = t + model.eps_squared();
    if v <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(v)
}

fn check_dim(model: &MixtureModel, len: usize) -> Result<()> {
    if len != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: len,
        });
    }
    Ok(())
}

pub(crate) fn log_weights(model: &MixtureModel) -> Vec<f64> {
    model.weights().iter().map(|&w| ln(w)).collect()
}

/// Log-space posterior weights at variance `v`, written into `out`.
pub(crate) fn weights_into(
    model: &MixtureModel,
    log_pi: &[f64],
    x: &[f64],
    v: f64,
    out: &mut Vec<f64>,
) {
    out.clear();
    let scale = 0.5 / v;
    out.extend(
        model
            .centers()
            .zip(log_pi)
            .map(|(c, lp)| lp - scale * squared_distance(x, c)),
    );
    softmax_in_place(out);
}

/// `Σ wⱼ μⱼ` for the weights in `w`.
pub(crate) fn mean_into(model: &MixtureModel, w: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (c, &wj) in model.centers().zip(w) {
        if wj == 0.0 {
            continue;
        }
        for (o, cj) in out.iter_mut().zip(c) {
            *o += wj * cj;
        }
    }
}

/// Posterior weights of the components given `X_t = x`.
pub fn posterior_weights(model: &MixtureModel, x: &[f64], t: f64) -> Result<Vec<f64>> {
    check_dim(model, x.len())?;
    let v = variance(model, t)?;
    let mut w = Vec::with_capacity(model.components());
    weights_into(model, &log_weights(model), x, v, &mut w);
    Ok(w)
}

/// `M_t(x) = E[U | X_t = x]`.
pub fn latent_posterior_mean(model: &MixtureModel, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let w = posterior_weights(model, x, t)?;
    let mut out = vec![0.0; model.dim()];
    mean_into(model, &w, &mut out);
    Ok(out)
}

/// `m_t(x) = E[Z | X_t = x] = x + (t/(t+ε²)) (M_t(x) − x)`.
pub fn data_posterior_mean(model: &MixtureModel, x: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Domain("data posterior mean needs t > 0"));
    }
    let s = score(model, x, t)?;
    Ok(x.iter().zip(&s).map(|(xi, si)| xi + t * si).collect())
}

/// `∇log p_t(x) = (M_t(x) − x)/(t+ε²)`.
pub fn score(model: &MixtureModel, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let v = variance(model, t)?;
    let m = latent_posterior_mean(model, x, t)?;
    Ok(m.iter().zip(x).map(|(mi, xi)| (mi - xi) / v).collect())
}

/// `log p_t(x)` for the mixture density of `X_t`.
pub fn log_density(model: &MixtureModel, x: &[f64], t: f64) -> Result<f64> {
    check_dim(model, x.len())?;
    let v = variance(model, t)?;
    let scale = 0.5 / v;
    let terms: Vec<f64> = model
        .centers()
        .zip(model.weights())
        .map(|(c, &w)| ln(w) - scale * squared_distance(x, c))
        .collect();
    let norm = -0.5 * model.dim() as f64 * ln(2.0 * math::PI * v);
    Ok(log_sum_exp(&terms) + norm)
}

/// Synthetic error added to the exact score, `ŝ_t = ∇log p_t + b(t)`.
///
/// Both variants are state-independent, so `m̂_t − m_t = t b(t)` and
/// `L_x0(γ) = ‖b(1/γ)‖²/γ²` in closed form. The bias is evaluated at the
/// left end of each step, which is the only evaluation rule offered.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    None,
    /// The same vector `b` at every time.
    ConstantBias(Vec<f64>),
    /// `b(t) ~ N(0, amplitude² I)`, drawn once per time value from a stream
    /// keyed by `(seed, t)` and frozen thereafter.
    GaussianField { amplitude: f64, seed: u64 },
}

impl Perturbation {
    pub fn is_exact(&self) -> bool {
        match self {
            Perturbation::None => true,
            Perturbation::ConstantBias(b) => b.iter().all(|&x| x == 0.0),
            Perturbation::GaussianField { amplitude, .. } => *amplitude == 0.0,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Perturbation::None => Ok(()),
            Perturbation::ConstantBias(b) => {
                if b.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: b.len(),
                    });
                }
                if b.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidPerturbation("bias must be finite"));
                }
                Ok(())
            }
            Perturbation::GaussianField { amplitude, .. } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::InvalidPerturbation(
                        "field amplitude must be finite and nonnegative",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Writes `b(t)` into `out`; returns `false` (leaving `out` untouched)
    /// when the perturbation is `None`.
    pub fn bias_into(&self, t: f64, out: &mut [f64]) -> bool {
        match self {
            Perturbation::None => false,
            Perturbation::ConstantBias(b) => {
                out.copy_from_slice(b);
                true
            }
            Perturbation::GaussianField { amplitude, seed } => {
                let mut rng = seed::stream(*seed, "gaussian_field", t.to_bits());
                seed::fill_standard_normal(&mut rng, out);
                out.iter_mut().for_each(|x| *x *= amplitude);
                true
            }
        }
    }

    /// `‖b(t)‖²`.
    pub fn bias_norm_squared(&self, t: f64, dim: usize) -> f64 {
        let mut b = vec![0.0; dim];
        if self.bias_into(t, &mut b) {
            math::squared_norm(&b)
        } else {
            0.0
        }
    }
}

/// Anything that evaluates a (possibly learned) score `ŝ_t(x)`.
pub trait ScoreModel: Sync {
    fn dim(&self) -> usize;

    fn eps(&self) -> f64;

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64], scratch: &mut Scratch) -> Result<()>;

    /// `M̂_t(x) = x + (t+ε²) ŝ_t(x)`.
    fn latent_mean_into(
        &self,
        x: &[f64],
        t: f64,
        out: &mut [f64],
        scratch: &mut Scratch,
    ) -> Result<()> {
        self.score_into(x, t, out, scratch)?;
        let eps = self.eps();
        let v = t + eps * eps;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + v * *o;
        }
        Ok(())
    }

    /// `m̂_t(x) = x + t ŝ_t(x)`.
    fn data_mean_into(
        &self,
        x: &[f64],
        t: f64,
        out: &mut [f64],
        scratch: &mut Scratch,
    ) -> Result<()> {
        self.score_into(x, t, out, scratch)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + t * *o;
        }
        Ok(())
    }
}

/// Exact mixture score with an optional [`Perturbation`].
#[derive(Debug, Clone)]
pub struct ScoreOracle<'a> {
    model: &'a MixtureModel,
    perturbation: Perturbation,
    log_pi: Vec<f64>,
}

impl<'a> ScoreOracle<'a> {
    pub fn exact(model: &'a MixtureModel) -> Self {
        ScoreOracle {
            model,
            perturbation: Perturbation::None,
            log_pi: log_weights(model),
        }
    }

    pub fn perturbed(model: &'a MixtureModel, perturbation: Perturbation) -> Result<Self> {
        perturbation.validate(model.dim())?;
        Ok(ScoreOracle {
            model,
            perturbation,
            log_pi: log_weights(model),
        })
    }

    pub fn model(&self) -> &'a MixtureModel {
        self.model
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn is_exact(&self) -> bool {
        self.perturbation.is_exact()
    }

    /// Exact `M_t(x)`, ignoring the perturbation.
    pub fn exact_latent_mean_into(
        &self,
        x: &[f64],
        t: f64,
        out: &mut [f64],
        scratch: &mut Scratch,
    ) -> Result<()> {
        let v = variance(self.model, t)?;
        weights_into(self.model, &self.log_pi, x, v, &mut scratch.weights);
        mean_into(self.model, &scratch.weights, out);
        Ok(())
    }
}

impl ScoreModel for ScoreOracle<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eps(&self) -> f64 {
        self.model.eps()
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64], scratch: &mut Scratch) -> Result<()> {
        let v = variance(self.model, t)?;
        self.exact_latent_mean_into(x, t, out, scratch)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (*o - xi) / v;
        }
        scratch.bias.resize(out.len(), 0.0);
        if self.perturbation.bias_into(t, &mut scratch.bias) {
            for (o, b) in out.iter_mut().zip(&scratch.bias) {
                *o += b;
            }
        }
        Ok(())
    }
}

/// Hides everything but the score of the wrapped model.
#[derive(Debug, Clone)]
pub struct ScoreOnly<S>(pub S);

impl<S: ScoreModel> ScoreModel for ScoreOnly<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eps(&self) -> f64 {
        self.0.eps()
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64], scratch: &mut Scratch) -> Result<()> {
        self.0.score_into(x, t, out, scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::two_point;

    fn pm_one(eps: f64) -> MixtureModel {
        two_point(1, eps, 2.0, 0.5).unwrap()
    }

    #[test]
    fn single_component_weights() {
        let m = MixtureModel::new(2, vec![1.0, 2.0], vec![1.0], 0.0).unwrap();
        assert_eq!(posterior_weights(&m, &[5.0, -3.0], 0.7).unwrap(), vec![1.0]);
        assert_eq!(latent_posterior_mean(&m, &[5.0, -3.0], 0.7).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn symmetric_two_point_at_origin() {
        let m = pm_one(0.0);
        assert_eq!(posterior_weights(&m, &[0.0], 1.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(latent_posterior_mean(&m, &[0.0], 1.0).unwrap(), vec![0.0]);
        assert_eq!(score(&m, &[0.0], 1.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_point_weights_and_tanh_mean() {
        let m = pm_one(0.0);
        let w = posterior_weights(&m, &[1.0], 1.0).unwrap();
        // sigma = 1/(1+e^-2)
        let sigma = 0.880_797_077_977_882_4;
        assert!((w[0] - sigma).abs() < 1e-15);
        assert!((w[1] - (1.0 - sigma)).abs() < 1e-15);
        let mean = latent_posterior_mean(&m, &[1.0], 1.0).unwrap();
        assert!((mean[0] - 0.761_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn data_mean_equals_latent_mean_when_eps_zero() {
        let m = pm_one(0.0);
        for &x in &[-2.0, -0.3, 0.0, 0.8, 4.0] {
            let big = latent_posterior_mean(&m, &[x], 0.5).unwrap()[0];
            let small = data_posterior_mean(&m, &[x], 0.5).unwrap()[0];
            assert!((big - small).abs() < 1e-15);
        }
        assert!(data_posterior_mean(&m, &[0.0], 0.0).is_err());
    }

    #[test]
    fn conjugate_gaussian_data_mean() {
        let m = MixtureModel::new(2, vec![0.0, 0.0], vec![1.0], 1.0).unwrap();
        let out = data_posterior_mean(&m, &[2.0, 0.0], 1.0).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15 && out[1] == 0.0);
    }

    #[test]
    fn gaussian_score_and_density() {
        let m = MixtureModel::new(1, vec![0.0], vec![1.0], 0.0).unwrap();
        let s = score(&m, &[1.5], 3.0).unwrap();
        assert!((s[0] + 0.5).abs() < 1e-15);
        let ld = log_density(&m, &[0.0], 1.0).unwrap();
        assert!((ld + 0.5 * ln(2.0 * math::PI)).abs() < 1e-15);
    }

    #[test]
    fn discrete_target_at_time_zero_is_rejected() {
        let m = pm_one(0.0);
        assert!(matches!(posterior_weights(&m, &[0.0], 0.0), Err(Error::ZeroVariance)));
        assert!(posterior_weights(&pm_one(0.2), &[0.0], 0.0).is_ok());
    }

    #[test]
    fn weights_stay_finite_at_extreme_inputs() {
        let m = pm_one(0.0);
        for &x in &[1e6, -1e6, 3.0] {
            for &t in &[1e-12, 1e-6, 1.0] {
                let w = posterior_weights(&m, &[x], t).unwrap();
                assert!(w.iter().all(|p| p.is_finite() && *p >= 0.0));
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_bias_shifts_latent_mean() {
        let m = pm_one(0.3);
        let oracle = ScoreOracle::perturbed(&m, Perturbation::ConstantBias(vec![0.25])).unwrap();
        let mut s = Scratch::new();
        let (x, t) = ([0.4], 0.7);
        let mut hat = [0.0];
        oracle.latent_mean_into(&x, t, &mut hat, &mut s).unwrap();
        let exact = latent_posterior_mean(&m, &x, t).unwrap()[0];
        let v = t + 0.09;
        assert!((hat[0] - exact - v * 0.25).abs() < 1e-14);
        assert!(ScoreOracle::perturbed(&m, Perturbation::ConstantBias(vec![0.0; 2])).is_err());
    }

    #[test]
    fn gaussian_field_is_frozen_per_time() {
        let p = Perturbation::GaussianField {
            amplitude: 0.5,
            seed: 11,
        };
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        p.bias_into(0.25, &mut a);
        p.bias_into(0.25, &mut b);
        assert_eq!(a, b);
        p.bias_into(0.5, &mut b);
        assert_ne!(a, b);
    }
}
