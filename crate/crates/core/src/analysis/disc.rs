//! Discretization energy: the MMSE-area form and the pathwise form.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::{Channel, Functional, Quantity};
use crate::exec::{batch_count, batch_range, Executor, BATCH};
use crate::quadrature::GaussLegendre;
use crate::score::{mean_into, weights_into, Scratch, ScoreModel, ScoreOracle};
use crate::seed;
use crate::stats::{merge_all, standardize, Estimate, Moments};
use crate::{Error, MixtureModel, Result, TimeGrid};

/// Default Gauss–Legendre nodes per grid cell.
pub const DEFAULT_QUAD_POINTS: usize = 16;

/// `Σ_k ∫_{η_{k−1}}^{η_k} (mmse(η_{k−1}) − mmse(η)) dη` with the per-cell
/// terms, which are reported as computed (Monte Carlo cells may be negative).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscArea {
    pub total: Estimate,
    pub cells: Vec<Estimate>,
}

impl DiscArea {
    pub fn negative_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.value < 0.0).count()
    }
}

/// Nodes and cell functionals for the area: node `k` is `η_k`, followed by
/// `quad_points` Gauss–Legendre nodes per cell.
fn area_functionals(grid: &TimeGrid, quad_points: usize) -> (Vec<f64>, Vec<Functional>) {
    let rule = GaussLegendre::new(quad_points);
    let eta = grid.eta();
    let k = grid.steps();
    let mut nodes = eta.to_vec();
    let mut cells = Vec::with_capacity(k + 1);
    for c in 1..=k {
        let (lo, hi) = (eta[c - 1], eta[c]);
        let mut terms = vec![(c - 1, Quantity::Mmse, hi - lo)];
        for (x, w) in rule.on_interval(lo, hi) {
            terms.push((nodes.len(), Quantity::Mmse, -w));
            nodes.push(x);
        }
        cells.push(Functional {
            constant: 0.0,
            terms,
        });
    }
    let total = Functional {
        constant: 0.0,
        terms: cells.iter().flat_map(|f| f.terms.iter().copied()).collect(),
    };
    cells.push(total);
    (nodes, cells)
}

/// MMSE area of a grid for a deterministic `mmse` evaluator.
pub fn disc_area_with<F: Fn(f64) -> f64>(mmse: F, grid: &TimeGrid, quad_points: usize) -> DiscArea {
    let rule = GaussLegendre::new(quad_points);
    let eta = grid.eta();
    let cells: Vec<Estimate> = eta
        .windows(2)
        .map(|w| {
            let left = mmse(w[0]);
            Estimate::exact(rule.integrate(w[0], w[1], |x| left - mmse(x)))
        })
        .collect();
    DiscArea {
        total: Estimate::exact(cells.iter().map(|c| c.value).sum()),
        cells,
    }
}

/// MMSE area of a grid on any channel backend.
pub fn disc_area<E: Executor>(
    channel: &Channel<'_>,
    model: &MixtureModel,
    grid: &TimeGrid,
    quad_points: usize,
    exec: &E,
) -> Result<DiscArea> {
    if quad_points == 0 {
        return Err(Error::Domain("quad_points must be positive"));
    }
    if let Channel::Quadrature(q) = channel {
        return Ok(disc_area_with(|e| q.mmse(e), grid, quad_points));
    }
    let (nodes, fs) = area_functionals(grid, quad_points);
    let mut est = channel.evaluate(model, &nodes, &fs, exec)?;
    let total = est.pop().expect("total functional");
    Ok(DiscArea { total, cells: est })
}

/// Pathwise energies along exact forward paths, per cell and in total.
///
/// `A` is the change of the exact latent mean since the left end of the
/// cell, `B` the gap between the exact and the perturbed latent mean at the
/// left end. Cell integrals are taken in `η` with Gauss–Legendre nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseReport {
    pub paths: usize,
    /// `E Σ ∫ ‖A‖² dη`.
    pub disc: Estimate,
    pub disc_cells: Vec<Estimate>,
    /// `E Σ ∫ ‖A + B‖² dη`, the full drift mismatch of the sampler.
    pub total: Estimate,
    /// `E Σ ∫ ‖B‖² dη`.
    pub apx: Estimate,
    /// `E ∫ ⟨A, B⟩ dη` per cell.
    pub cross_cells: Vec<Estimate>,
    /// Per-path `total − disc`, for comparison with an independent
    /// approximation energy.
    pub excess: Estimate,
    /// Largest `|E[M(η_k) − M(η_{k−1})]|/SE` over cells and coordinates.
    pub martingale_max_z: f64,
}

impl PathwiseReport {
    /// Largest `|E⟨A,B⟩|/SE` over cells.
    pub fn cross_max_z(&self) -> f64 {
        self.cross_cells
            .iter()
            .map(|c| standardize(c.value, c.std_error).abs())
            .fold(0.0, f64::max)
    }
}

/// `E_disc` by simulation, for the exact score.
pub fn disc_pathwise<E: Executor>(
    model: &MixtureModel,
    grid: &TimeGrid,
    n_paths: usize,
    s_subdiv: usize,
    seed: u64,
    exec: &E,
) -> Result<PathwiseReport> {
    pathwise(&ScoreOracle::exact(model), grid, n_paths, s_subdiv, seed, exec)
}

/// Pathwise energies with a perturbed oracle; `disc` is unaffected by the
/// perturbation.
pub fn pathwise_energies<E: Executor>(
    oracle: &ScoreOracle<'_>,
    grid: &TimeGrid,
    n_paths: usize,
    s_subdiv: usize,
    seed: u64,
    exec: &E,
) -> Result<PathwiseReport> {
    pathwise(oracle, grid, n_paths, s_subdiv, seed, exec)
}

struct PathAccum {
    disc: Vec<Moments>,
    cross: Vec<Moments>,
    increments: Vec<Moments>,
    disc_total: Moments,
    total: Moments,
    apx: Moments,
    excess: Moments,
}

fn pathwise<E: Executor>(
    oracle: &ScoreOracle<'_>,
    grid: &TimeGrid,
    n_paths: usize,
    s_subdiv: usize,
    seed: u64,
    exec: &E,
) -> Result<PathwiseReport> {
    let model = oracle.model();
    if grid.eps() != model.eps() {
        return Err(Error::InvalidGrid("grid and model eps differ".into()));
    }
    if n_paths < 2 || s_subdiv == 0 {
        return Err(Error::Domain("pathwise estimate needs n_paths >= 2 and s_subdiv >= 1"));
    }
    let k = grid.steps();
    let d = model.dim();
    let e2 = model.eps_squared();
    let rule = GaussLegendre::new(s_subdiv);
    // Times in decreasing order: each cell contributes its left end then its
    // interior nodes; the final grid point closes the list.
    let mut times = Vec::with_capacity(k * (s_subdiv + 1) + 1);
    let mut weights = Vec::with_capacity(k * s_subdiv);
    for c in 1..=k {
        times.push(grid.t()[c - 1]);
        let (lo, hi) = (grid.eta()[c - 1], grid.eta()[c]);
        for (x, w) in rule.on_interval(lo, hi) {
            times.push(1.0 / x - e2);
            weights.push(w);
        }
    }
    times.push(grid.t()[k]);
    if times.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidGrid("grid cells too narrow for sub-times".into()));
    }
    let ascending: Vec<f64> = times.iter().rev().copied().collect();
    let stride = s_subdiv + 1;
    let cat = model.categorical();
    let log_pi = crate::score::log_weights(model);
    let exact = oracle.is_exact();

    let parts = exec.map(batch_count(n_paths, BATCH), |b| -> Result<PathAccum> {
        let mut acc = PathAccum {
            disc: vec![Moments::default(); k],
            cross: vec![Moments::default(); k],
            increments: vec![Moments::default(); k * d],
            disc_total: Moments::default(),
            total: Moments::default(),
            apx: Moments::default(),
            excess: Moments::default(),
        };
        let m = times.len();
        let mut noise = vec![0.0; d];
        let mut states = vec![0.0; m * d];
        let mut means = vec![0.0; m * d];
        let mut w = Vec::new();
        let mut hat = vec![0.0; d];
        let mut bias = vec![0.0; d];
        let mut scratch = Scratch::new();
        for path in batch_range(n_paths, BATCH, b) {
            let mut rng = seed::stream(seed, "pathwise", path as u64);
            crate::sampler::forward_path(model, &cat, &ascending, &mut rng, &mut noise, &mut states);
            // states are stored by ascending time; row r of `times` is
            // row m-1-r of `states`.
            for r in 0..m {
                let x = &states[(m - 1 - r) * d..(m - r) * d];
                weights_into(model, &log_pi, x, times[r] + e2, &mut w);
                mean_into(model, &w, &mut means[r * d..(r + 1) * d]);
            }
            let (mut disc_sum, mut total_sum, mut apx_sum) = (0.0, 0.0, 0.0);
            for c in 0..k {
                let left = c * stride;
                let x_left = &states[(m - 1 - left) * d..(m - left) * d];
                let m_left = &means[left * d..(left + 1) * d];
                if exact {
                    hat.copy_from_slice(m_left);
                } else {
                    oracle.latent_mean_into(x_left, times[left], &mut hat, &mut scratch)?;
                }
                for i in 0..d {
                    bias[i] = m_left[i] - hat[i];
                }
                let (mut disc_c, mut cross_c, mut total_c) = (0.0, 0.0, 0.0);
                for s in 0..s_subdiv {
                    let r = left + 1 + s;
                    let wt = weights[c * s_subdiv + s];
                    let m_r = &means[r * d..(r + 1) * d];
                    let (mut aa, mut ab, mut tt) = (0.0, 0.0, 0.0);
                    for i in 0..d {
                        let a = m_r[i] - m_left[i];
                        aa += a * a;
                        ab += a * bias[i];
                        let full = m_r[i] - hat[i];
                        tt += full * full;
                    }
                    disc_c += wt * aa;
                    cross_c += wt * ab;
                    total_c += wt * tt;
                }
                let width = grid.eta()[c + 1] - grid.eta()[c];
                let bb: f64 = bias.iter().map(|x| x * x).sum();
                acc.disc[c].push(disc_c);
                acc.cross[c].push(cross_c);
                disc_sum += disc_c;
                total_sum += total_c;
                apx_sum += width * bb;
                let right = (c + 1) * stride;
                let m_right = &means[right * d..(right + 1) * d];
                for i in 0..d {
                    acc.increments[c * d + i].push(m_right[i] - m_left[i]);
                }
            }
            acc.disc_total.push(disc_sum);
            acc.total.push(total_sum);
            acc.apx.push(apx_sum);
            acc.excess.push(total_sum - disc_sum);
        }
        Ok(acc)
    });
    let parts: Vec<PathAccum> = parts.into_iter().collect::<Result<_>>()?;
    let merge_vec = |pick: &dyn Fn(&PathAccum) -> &Vec<Moments>, len: usize| -> Vec<Estimate> {
        (0..len)
            .map(|i| merge_all(parts.iter().map(|p| &pick(p)[i])).estimate())
            .collect()
    };
    let increments = merge_vec(&|p| &p.increments, k * d);
    let martingale_max_z = increments
        .iter()
        .map(|e| standardize(e.value, e.std_error).abs())
        .fold(0.0, f64::max);
    Ok(PathwiseReport {
        paths: n_paths,
        disc: merge_all(parts.iter().map(|p| &p.disc_total)).estimate(),
        disc_cells: merge_vec(&|p| &p.disc, k),
        total: merge_all(parts.iter().map(|p| &p.total)).estimate(),
        apx: merge_all(parts.iter().map(|p| &p.apx)).estimate(),
        cross_cells: merge_vec(&|p| &p.cross, k),
        excess: merge_all(parts.iter().map(|p| &p.excess)).estimate(),
        martingale_max_z,
    })
}

/// Per-cell `E∫⟨A, B⟩ dη` in units of its standard error.
pub fn orthogonality_check<E: Executor>(
    oracle: &ScoreOracle<'_>,
    grid: &TimeGrid,
    n_paths: usize,
    s_subdiv: usize,
    seed: u64,
    exec: &E,
) -> Result<Vec<f64>> {
    let report = pathwise(oracle, grid, n_paths, s_subdiv, seed, exec)?;
    Ok(report
        .cross_cells
        .iter()
        .map(|c| standardize(c.value, c.std_error))
        .collect())
}
