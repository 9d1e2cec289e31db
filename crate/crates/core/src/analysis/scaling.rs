//! MMSE area of entropy-adaptive grids across step counts and embedding
//! dimensions.

use alloc::vec::Vec;

use crate::analysis::disc::disc_area;
use crate::channel::{Backend, Channel};
use crate::math::ln;
use crate::schedule::entropy_adaptive_grid;
use crate::stats::Estimate;
use crate::{Error, Executor, MixtureModel, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub steps: usize,
    pub dim: usize,
    pub e_disc_area: Estimate,
    /// `(8H/K)(2+ℓ)²`.
    pub disc_bound: f64,
    /// `h R (2+ℓ)` for the grid's `h`.
    pub hybrid_bound: f64,
    pub backend: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log e_disc_area` against `log K`, per entry of
    /// the dimension list (`None` with fewer than two positive areas).
    pub slopes: Vec<(usize, Option<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSetup {
    pub horizon: f64,
    pub delta: f64,
    pub quad_points: usize,
    /// Monte Carlo draws per area for models without a quadrature backend.
    pub draws: usize,
    pub seed: u64,
}

/// Builds the grid for every `(K, d)` pair, with `model` padded to each `d`.
pub fn scaling_study<E: Executor>(
    model: &MixtureModel,
    steps: &[usize],
    dims: &[usize],
    setup: &ScalingSetup,
    exec: &E,
) -> Result<ScalingStudy> {
    if steps.is_empty() || dims.is_empty() {
        return Err(Error::Domain("scaling study needs at least one K and one d"));
    }
    let mut rows = Vec::with_capacity(steps.len() * dims.len());
    let mut slopes = Vec::with_capacity(dims.len());
    for (di, &d) in dims.iter().enumerate() {
        let embedded = model.embed(d)?;
        let summary = embedded.summary();
        let backend = Backend::auto(
            &embedded,
            setup.draws,
            crate::seed::derive_seed(setup.seed, "scaling", di as u64),
        );
        let channel = Channel::new(&embedded, backend)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &k in steps {
            let (grid, report) = entropy_adaptive_grid(
                summary.entropy_nats,
                summary.second_moment,
                setup.horizon,
                setup.delta,
                embedded.eps(),
                k,
            )?;
            let area = disc_area(&channel, &embedded, &grid, setup.quad_points, exec)?;
            if area.total.value > 0.0 {
                xs.push(ln(k as f64));
                ys.push(ln(area.total.value));
            }
            rows.push(ScalingRow {
                steps: k,
                dim: d,
                e_disc_area: area.total,
                disc_bound: report.disc_bound,
                hybrid_bound: report.hybrid_area_bound(),
                backend: channel.backend_name(),
            });
        }
        slopes.push((d, loglog_slope(&xs, &ys)));
    }
    Ok(ScalingStudy { rows, slopes })
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [32.0f64, 64.0, 128.0].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = [32.0f64, 64.0, 128.0].iter().map(|x| (3.0 / x).ln()).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert!(loglog_slope(&xs[..1], &ys[..1]).is_none());
    }
}
