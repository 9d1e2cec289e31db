//! Gaussian-mixture and discrete targets `Z = μ_J + ε G₀`.
//!
//! A [`MixtureModel`] holds finitely many centers (a countable family is
//! represented by truncation, see [`geometric_weights`]), their weights and the
//! isotropic component noise `ε`. With `ε = 0` the model is the discrete
//! distribution on the centers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math::{self, ln, shannon_entropy, squared_norm};
use crate::seed::{self, fill_standard_normal};
use crate::{Error, Matrix, Result};

/// Tolerance on the input weight sum before exact renormalization.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Upper bound on the number of components a generator may expand to.
pub const MAX_COMPONENTS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    dim: usize,
    centers: Vec<f64>,
    weights: Vec<f64>,
    eps: f64,
}

/// Information and moment summaries of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSummary {
    /// `H(J)` in nats.
    pub entropy_nats: f64,
    /// `R = E‖Z‖² = Σ πⱼ‖μⱼ‖² + ε² d`.
    pub second_moment: f64,
    /// `E‖U‖² = Σ πⱼ‖μⱼ‖²`.
    pub center_second_moment: f64,
}

impl ModelSummary {
    pub fn entropy_bits(&self) -> f64 {
        self.entropy_nats / math::LN_2
    }
}

impl MixtureModel {
    /// Builds a model from row-major `centers` (one center per `dim` values).
    ///
    /// Weights must be nonnegative and sum to one within
    /// [`WEIGHT_SUM_TOLERANCE`]; they are renormalized exactly afterwards.
    pub fn new(dim: usize, centers: Vec<f64>, weights: Vec<f64>, eps: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidModel("at least one center is required".into()));
        }
        if centers.len() != weights.len() * dim {
            return Err(Error::InvalidModel(format!(
                "{} center coordinates do not match {} weights in dimension {}",
                centers.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(bad) = centers.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "center coordinate {bad} is not finite"
            )));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidModel(format!("eps must be finite and >= 0, got {eps}")));
        }
        let weights = normalize_weights(&weights)?;
        Ok(MixtureModel {
            dim,
            centers,
            weights,
            eps,
        })
    }

    /// Builds a model from one vector per center.
    pub fn from_rows(centers: &[Vec<f64>], weights: Vec<f64>, eps: f64) -> Result<Self> {
        let dim = centers.first().map_or(0, Vec::len);
        if let Some((j, c)) = centers.iter().enumerate().find(|(_, c)| c.len() != dim) {
            return Err(Error::InvalidModel(format!(
                "center {j} has dimension {}, expected {dim}",
                c.len()
            )));
        }
        Self::new(dim, centers.concat(), weights, eps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eps_squared(&self) -> f64 {
        self.eps * self.eps
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.centers.chunks_exact(self.dim)
    }

    /// Flat row-major center coordinates.
    pub fn center_data(&self) -> &[f64] {
        &self.centers
    }

    pub fn entropy(&self) -> f64 {
        shannon_entropy(&self.weights)
    }

    /// `E‖U‖²`.
    pub fn center_second_moment(&self) -> f64 {
        self.centers()
            .zip(&self.weights)
            .map(|(c, w)| w * squared_norm(c))
            .sum()
    }

    /// `E[U]`.
    pub fn center_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (c, w) in self.centers().zip(&self.weights) {
            for (m, x) in mean.iter_mut().zip(c) {
                *m += w * x;
            }
        }
        mean
    }

    /// Prior variance `E‖U − EU‖²`, the `η → 0` limit of `mmse(η)`.
    pub fn center_variance(&self) -> f64 {
        let mean = self.center_mean();
        self.centers()
            .zip(&self.weights)
            .map(|(c, w)| w * math::squared_distance(c, &mean))
            .sum()
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            entropy_nats: self.entropy(),
            second_moment: second_moment(self),
            center_second_moment: self.center_second_moment(),
        }
    }

    /// Pads every center with zero coordinates up to dimension `dim`.
    pub fn embed(&self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dim,
            });
        }
        let mut centers = Vec::with_capacity(self.components() * dim);
        for c in self.centers() {
            centers.extend_from_slice(c);
            centers.extend(core::iter::repeat_n(0.0, dim - self.dim));
        }
        Ok(MixtureModel {
            dim,
            centers,
            weights: self.weights.clone(),
            eps: self.eps,
        })
    }

    /// Same centers and weights with a different component noise level.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.dim, self.centers.clone(), self.weights.clone(), eps)
    }

    /// A pair of components `(j, k)`, `j < k`, with identical centers.
    pub fn duplicate_centers(&self) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.components()).collect();
        let cmp = |a: &usize, b: &usize| {
            self.center(*a)
                .iter()
                .zip(self.center(*b))
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(a.cmp(b))
        };
        order.sort_unstable_by(cmp);
        order
            .windows(2)
            .find(|w| self.center(w[0]) == self.center(w[1]))
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }

    pub(crate) fn categorical(&self) -> Categorical {
        Categorical::new(&self.weights)
    }
}

fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in weights.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::NotNormalized {
            sum,
            tolerance: WEIGHT_SUM_TOLERANCE,
        });
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

/// Shannon entropy `−Σ πⱼ log πⱼ` in nats, with `0 log 0 = 0`.
pub fn entropy(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidModel("at least one weight is required".into()));
    }
    let p = normalize_weights(weights)?;
    Ok(shannon_entropy(&p))
}

/// `R = E‖Z‖² = Σ πⱼ‖μⱼ‖² + ε² d`, computed exactly.
pub fn second_moment(model: &MixtureModel) -> f64 {
    model.center_second_moment() + model.eps_squared() * model.dim as f64
}

/// Worst-case entropy `n log S` of an `n`-token code over an alphabet of `S`.
pub fn token_entropy_bound(n_tokens: usize, alphabet: usize) -> Result<f64> {
    if n_tokens == 0 || alphabet == 0 {
        return Err(Error::Domain("token count and alphabet size must be positive"));
    }
    Ok(n_tokens as f64 * ln(alphabet as f64))
}

/// Inverse-CDF sampler over component indices.
#[derive(Debug, Clone)]
pub(crate) struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    pub(crate) fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Categorical { cumulative }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u: f64 = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // u < total always, but a trailing run of zero weights must never be
        // selected
        let idx = idx.min(self.cumulative.len() - 1);
        let mut j = idx;
        while j > 0 && self.cumulative[j] == self.cumulative[j - 1] {
            j -= 1;
        }
        j
    }
}

/// Draws `n` samples of `Z` and their component labels.
pub fn sample_target(model: &MixtureModel, n: usize, seed: u64) -> Result<(Matrix, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1"));
    }
    let mut rng = seed::stream(seed, "target", 0);
    let cat = model.categorical();
    let d = model.dim();
    let mut out = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut noise = vec![0.0; d];
    for i in 0..n {
        let j = cat.sample(&mut rng);
        labels.push(j);
        fill_standard_normal(&mut rng, &mut noise);
        for ((o, c), g) in out.row_mut(i).iter_mut().zip(model.center(j)).zip(&noise) {
            *o = c + model.eps() * g;
        }
    }
    Ok((out, labels))
}

/// Draws `n` samples of the forward marginal `X_t = U + √(t+ε²) G`.
pub fn forward_marginal_sample(model: &MixtureModel, t: f64, n: usize, seed: u64) -> Result<Matrix> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain("forward time must be finite and nonnegative"));
    }
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1"));
    }
    let mut rng = seed::stream(seed, "forward", 0);
    let cat = model.categorical();
    let sd = math::sqrt(t + model.eps_squared());
    let d = model.dim();
    let mut out = Matrix::zeros(n, d);
    let mut noise = vec![0.0; d];
    for i in 0..n {
        let j = cat.sample(&mut rng);
        fill_standard_normal(&mut rng, &mut noise);
        for ((o, c), g) in out.row_mut(i).iter_mut().zip(model.center(j)).zip(&noise) {
            *o = c + sd * g;
        }
    }
    Ok(out)
}

/// Symmetric two-point model: centers `±(separation/2)·e₁` with weights
/// `(p, 1 − p)`.
pub fn two_point(dim: usize, eps: f64, separation: f64, p: f64) -> Result<MixtureModel> {
    if !(separation > 0.0) {
        return Err(Error::Domain("two-point separation must be positive"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain("two-point weight must lie in [0, 1]"));
    }
    let mut centers = vec![0.0; 2 * dim.max(1)];
    centers[0] = 0.5 * separation;
    centers[dim.max(1)] = -0.5 * separation;
    MixtureModel::new(dim, centers, vec![p, 1.0 - p], eps)
}

/// Uniform weights on a regular grid of `points_per_axis^axes` centers with
/// the given spacing, centered at the origin in the first `axes` coordinates.
pub fn grid(
    dim: usize,
    eps: f64,
    points_per_axis: usize,
    spacing: f64,
    axes: usize,
) -> Result<MixtureModel> {
    if axes == 0 || axes > dim {
        return Err(Error::Domain("grid axes must lie in 1..=dim"));
    }
    if points_per_axis == 0 {
        return Err(Error::Domain("grid needs at least one point per axis"));
    }
    let count = checked_power(points_per_axis, axes)?;
    let offset = 0.5 * (points_per_axis - 1) as f64;
    let mut centers = vec![0.0; count * dim];
    for idx in 0..count {
        let mut rem = idx;
        for a in 0..axes {
            let digit = rem % points_per_axis;
            rem /= points_per_axis;
            centers[idx * dim + a] = spacing * (digit as f64 - offset);
        }
    }
    MixtureModel::new(dim, centers, vec![1.0 / count as f64; count], eps)
}

/// Product of `n_tokens` independent tokens over `alphabet` symbols. Token
/// `i` with symbol `c` is embedded at coordinate `i` as
/// `embedding_scale · (c − (S−1)/2)`. `token_probs` defaults to uniform, in
/// which case `H(J) = n log S`.
pub fn token_product(
    dim: usize,
    eps: f64,
    n_tokens: usize,
    alphabet: usize,
    embedding_scale: f64,
    token_probs: Option<&[f64]>,
) -> Result<MixtureModel> {
    if n_tokens == 0 || alphabet == 0 {
        return Err(Error::Domain("token count and alphabet size must be positive"));
    }
    if n_tokens > dim {
        return Err(Error::Domain("token embedding needs dim >= n_tokens"));
    }
    if !(embedding_scale > 0.0) {
        return Err(Error::Domain("embedding scale must be positive"));
    }
    let marginal = match token_probs {
        Some(p) if p.len() != alphabet => {
            return Err(Error::DimensionMismatch {
                expected: alphabet,
                got: p.len(),
            })
        }
        Some(p) => normalize_weights(p)?,
        None => vec![1.0 / alphabet as f64; alphabet],
    };
    let count = checked_power(alphabet, n_tokens)?;
    let offset = 0.5 * (alphabet - 1) as f64;
    let mut centers = vec![0.0; count * dim];
    let mut weights = vec![1.0; count];
    for idx in 0..count {
        let mut rem = idx;
        for tok in 0..n_tokens {
            let sym = rem % alphabet;
            rem /= alphabet;
            centers[idx * dim + tok] = embedding_scale * (sym as f64 - offset);
            weights[idx] *= marginal[sym];
        }
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    MixtureModel::new(dim, centers, weights, eps)
}

/// Truncated geometric family `πⱼ ∝ (1−r) rʲ`, `j < count`, with centers
/// `spacing · j · e₁`. Returns the model (renormalized) and the discarded
/// tail mass `r^count` of the untruncated family.
pub fn geometric_weights(
    dim: usize,
    eps: f64,
    ratio: f64,
    count: usize,
    spacing: f64,
) -> Result<(MixtureModel, f64)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Domain("geometric ratio must lie in (0, 1)"));
    }
    if count == 0 || count > MAX_COMPONENTS {
        return Err(Error::Domain("geometric count out of range"));
    }
    if !(spacing > 0.0) {
        return Err(Error::Domain("geometric spacing must be positive"));
    }
    let raw: Vec<f64> = (0..count)
        .map(|j| (1.0 - ratio) * math::powi(ratio, j as i32))
        .collect();
    let kept: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / kept).collect();
    let mut centers = vec![0.0; count * dim];
    for j in 0..count {
        centers[j * dim] = spacing * j as f64;
    }
    let tail = math::powi(ratio, count as i32);
    Ok((MixtureModel::new(dim, centers, weights, eps)?, tail))
}

fn checked_power(base: usize, exp: usize) -> Result<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc
            .checked_mul(base)
            .filter(|&v| v <= MAX_COMPONENTS)
            .ok_or(Error::Domain("generator expands to too many components"))?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm_one(eps: f64) -> MixtureModel {
        two_point(1, eps, 2.0, 0.5).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.5, 0.5]).unwrap() - math::LN_2).abs() < 1e-15);
        assert_eq!(entropy(&[1.0]).unwrap(), 0.0);
        let oracle = -0.9 * ln(0.9) - 0.1 * ln(0.1);
        assert!((entropy(&[0.9, 0.1]).unwrap() - oracle).abs() < 1e-15);
        assert!((entropy(&[0.5, 0.0, 0.5]).unwrap() - math::LN_2).abs() < 1e-15);
    }

    #[test]
    fn entropy_rejects_invalid_weights() {
        assert!(matches!(
            entropy(&[1.2, -0.2]),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(entropy(&[0.5, 0.4]), Err(Error::NotNormalized { .. })));
        // within input tolerance: accepted and renormalized
        assert!(entropy(&[0.5, 0.5 + 5e-10]).is_ok());
    }

    #[test]
    fn weights_renormalized_exactly() {
        let m = MixtureModel::new(1, vec![0.0, 1.0, 2.0], vec![0.3333333333, 0.3333333333, 0.3333333334], 0.0)
            .unwrap();
        let s: f64 = m.weights().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(MixtureModel::new(0, vec![], vec![1.0], 0.0).is_err());
        assert!(MixtureModel::new(2, vec![0.0], vec![1.0], 0.0).is_err());
        assert!(MixtureModel::new(1, vec![0.0], vec![1.0], -0.1).is_err());
        assert!(MixtureModel::new(1, vec![], vec![], 0.0).is_err());
        assert!(MixtureModel::from_rows(&[vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn second_moment_examples() {
        let origin = MixtureModel::new(3, vec![0.0; 3], vec![1.0], 0.0).unwrap();
        assert_eq!(second_moment(&origin), 0.0);
        assert_eq!(second_moment(&pm_one(0.0)), 1.0);
        assert!((second_moment(&pm_one(0.1)) - 1.01).abs() < 1e-15);
    }

    #[test]
    fn summary_invariants() {
        let m = pm_one(0.3);
        let s = m.summary();
        assert!(s.entropy_nats <= ln(2.0) + 1e-15);
        assert!(s.center_second_moment < s.second_moment);
        let s0 = pm_one(0.0).summary();
        assert_eq!(s0.center_second_moment, s0.second_moment);
    }

    #[test]
    fn token_entropy_bound_examples() {
        assert!((token_entropy_bound(1, 2).unwrap() - math::LN_2).abs() < 1e-15);
        let titok = token_entropy_bound(32, 4096).unwrap();
        assert!((titok - 266.2).abs() < 0.05, "{titok}");
        assert!((token_entropy_bound(16, 256).unwrap() - 16.0 * ln(256.0)).abs() < 1e-12);
        assert!(token_entropy_bound(0, 4).is_err());
    }

    #[test]
    fn token_product_entropy_is_additive() {
        let marg = [0.7, 0.2, 0.1];
        let m = token_product(3, 0.0, 3, 3, 1.0, Some(&marg)).unwrap();
        let h1 = entropy(&marg).unwrap();
        assert_eq!(m.components(), 27);
        assert!((m.entropy() - 3.0 * h1).abs() < 1e-12);
        assert!(m.duplicate_centers().is_none());
        let uniform = token_product(2, 0.0, 2, 4, 0.5, None).unwrap();
        assert!((uniform.entropy() - 2.0 * ln(4.0)).abs() < 1e-12);
    }

    #[test]
    fn geometric_tail_mass() {
        let (m, tail) = geometric_weights(1, 0.0, 0.5, 10, 1.0).unwrap();
        assert_eq!(m.components(), 10);
        assert!((tail - 0.5f64.powi(10)).abs() < 1e-18);
        assert!(m.weights()[0] > m.weights()[1]);
    }

    #[test]
    fn grid_centers_are_distinct() {
        let m = grid(3, 0.1, 3, 2.0, 2).unwrap();
        assert_eq!(m.components(), 9);
        assert!(m.duplicate_centers().is_none());
        let mean = m.center_mean();
        assert!(mean.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn embedding_invariance() {
        let m = grid(2, 0.3, 2, 1.5, 2).unwrap();
        let padded = m.embed(7).unwrap();
        let (a, b) = (m.summary(), padded.summary());
        assert_eq!(a.entropy_nats, b.entropy_nats);
        assert_eq!(a.center_second_moment, b.center_second_moment);
        assert!((b.second_moment - a.second_moment - 0.09 * 5.0).abs() < 1e-12);
        assert!(m.embed(1).is_err());
    }

    #[test]
    fn sample_target_single_center_eps_zero() {
        let m = MixtureModel::new(2, vec![1.5, -2.0], vec![1.0], 0.0).unwrap();
        let (x, labels) = sample_target(&m, 50, 3).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        assert!(x.iter_rows().all(|r| r == [1.5, -2.0]));
    }

    #[test]
    fn sample_target_is_deterministic() {
        let m = pm_one(0.2);
        let a = sample_target(&m, 100, 9).unwrap();
        let b = sample_target(&m, 100, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, sample_target(&m, 100, 10).unwrap().0);
        assert!(sample_target(&m, 0, 1).is_err());
    }

    #[test]
    fn zero_weight_components_are_never_drawn() {
        let m = MixtureModel::new(1, vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], 0.0).unwrap();
        let (_, labels) = sample_target(&m, 2000, 4).unwrap();
        assert!(labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn forward_marginal_at_zero_matches_target_law_support() {
        let m = pm_one(0.0);
        let x = forward_marginal_sample(&m, 0.0, 100, 1).unwrap();
        assert!(x.iter_rows().all(|r| r[0] == 1.0 || r[0] == -1.0));
        assert_eq!(x, forward_marginal_sample(&m, 0.0, 100, 1).unwrap());
        assert!(forward_marginal_sample(&m, -1.0, 10, 1).is_err());
    }
}
