//! Empirical checks of sampler output against the exact law `p_δ`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{normal_cdf, sqrt};
use crate::stats::standardize;
use crate::{BoundReport, Error, Matrix, MixtureModel, Result};

/// Bins per axis of the total-variation histogram.
pub const HIST_BINS: usize = 200;
/// Half-width of the histogram box and the separation warning, in units of
/// the component standard deviation.
pub const BOX_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReport {
    pub weight: f64,
    pub count: usize,
    pub freq: f64,
    /// `(freq − π)/√(π(1−π)/n)`.
    pub freq_z: f64,
    /// Empirical mean minus center, per coordinate.
    pub mean_err: Vec<f64>,
    /// Largest `|mean_err|/√(v/n_j)` over coordinates.
    pub mean_z: f64,
    /// Average per-coordinate sample variance minus `v = δ + ε²`.
    pub var_err: f64,
    pub var_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputDiagnostics {
    pub components: Vec<ComponentReport>,
    /// Histogram total variation against `p_δ` (`d ≤ 2` only).
    pub hist_tv: Option<f64>,
    pub min_separation: f64,
    /// Set when two centers are closer than `6√v`, so nearest-center
    /// assignment is unreliable.
    pub separation_warning: bool,
}

impl OutputDiagnostics {
    pub fn max_freq_z(&self) -> f64 {
        self.components.iter().map(|c| c.freq_z.abs()).fold(0.0, f64::max)
    }

    pub fn max_mean_z(&self) -> f64 {
        self.components
            .iter()
            .filter(|c| c.count > 1)
            .map(|c| c.mean_z)
            .fold(0.0, f64::max)
    }

    pub fn max_var_z(&self) -> f64 {
        self.components
            .iter()
            .filter(|c| c.count > 2)
            .map(|c| c.var_z.abs())
            .fold(0.0, f64::max)
    }
}

/// The Pinsker conversion of a bound report and its comparison with a
/// measured total variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinskerCheck {
    pub bound: f64,
    pub vacuous: bool,
    pub measured: f64,
    pub holds: bool,
}

pub fn pinsker_check(report: &BoundReport, measured_tv: f64) -> PinskerCheck {
    let bound = report.pinsker_tv_bound();
    PinskerCheck {
        bound,
        vacuous: bound >= 1.0,
        measured: measured_tv,
        holds: bound >= 1.0 || measured_tv <= bound,
    }
}

/// Compares `samples` with `p_δ` of `model`.
pub fn output_diagnostics(samples: &Matrix, model: &MixtureModel, delta: f64) -> Result<OutputDiagnostics> {
    let d = model.dim();
    if samples.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: samples.cols(),
        });
    }
    if samples.rows() == 0 {
        return Err(Error::Domain("no samples to diagnose"));
    }
    let v = delta + model.eps_squared();
    if !(v > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let n = samples.rows();
    let jn = model.components();
    let mut counts = vec![0usize; jn];
    let mut sums = vec![0.0; jn * d];
    let mut labels = Vec::with_capacity(n);
    for x in samples.iter_rows() {
        let j = nearest(model, x);
        labels.push(j);
        counts[j] += 1;
        for (s, xi) in sums[j * d..(j + 1) * d].iter_mut().zip(x) {
            *s += xi;
        }
    }
    let means: Vec<f64> = (0..jn)
        .flat_map(|j| {
            let c = counts[j].max(1) as f64;
            sums[j * d..(j + 1) * d].iter().map(move |s| s / c).collect::<Vec<_>>()
        })
        .collect();
    let mut sq = vec![0.0; jn];
    for (x, &j) in samples.iter_rows().zip(&labels) {
        let m = &means[j * d..(j + 1) * d];
        sq[j] += crate::math::squared_distance(x, m);
    }
    let components = (0..jn)
        .map(|j| {
            let pi = model.weights()[j];
            let nj = counts[j];
            let freq = nj as f64 / n as f64;
            let freq_z = standardize(freq - pi, sqrt(pi * (1.0 - pi) / n as f64));
            let mean_err: Vec<f64> = means[j * d..(j + 1) * d]
                .iter()
                .zip(model.center(j))
                .map(|(m, c)| if nj == 0 { 0.0 } else { m - c })
                .collect();
            let se_mean = sqrt(v / nj.max(1) as f64);
            let mean_z = mean_err
                .iter()
                .map(|e| standardize(*e, se_mean).abs())
                .fold(0.0, f64::max);
            let (var_err, var_z) = if nj > 1 {
                let var = sq[j] / ((nj - 1) * d) as f64;
                let se = v * sqrt(2.0 / ((nj - 1) * d) as f64);
                (var - v, standardize(var - v, se))
            } else {
                (0.0, 0.0)
            };
            ComponentReport {
                weight: pi,
                count: nj,
                freq,
                freq_z,
                mean_err,
                mean_z,
                var_err,
                var_z,
            }
        })
        .collect();
    let min_separation = min_separation(model);
    Ok(OutputDiagnostics {
        components,
        hist_tv: (d <= 2).then(|| hist_tv(samples, model, v)),
        min_separation,
        separation_warning: min_separation < BOX_SIGMAS * sqrt(v),
    })
}

fn nearest(model: &MixtureModel, x: &[f64]) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (j, c) in model.centers().enumerate() {
        let dj = crate::math::squared_distance(x, c);
        if dj < dist {
            best = j;
            dist = dj;
        }
    }
    best
}

fn min_separation(model: &MixtureModel) -> f64 {
    let n = model.components();
    let mut best = f64::INFINITY;
    for j in 0..n {
        for k in j + 1..n {
            best = best.min(sqrt(crate::math::squared_distance(model.center(j), model.center(k))));
        }
    }
    best
}

/// Total variation between the empirical histogram and the exact bin masses
/// of `Σ πⱼ N(μⱼ, v I)` on a box reaching `6√v` past the extreme centers;
/// the mass outside the box counts as one more bin.
fn hist_tv(samples: &Matrix, model: &MixtureModel, v: f64) -> f64 {
    let d = model.dim();
    let sd = sqrt(v);
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for c in model.centers() {
        for a in 0..d {
            lo[a] = lo[a].min(c[a] - BOX_SIGMAS * sd);
            hi[a] = hi[a].max(c[a] + BOX_SIGMAS * sd);
        }
    }
    let width: Vec<f64> = (0..d).map(|a| (hi[a] - lo[a]) / HIST_BINS as f64).collect();
    let edge = |a: usize, i: usize| {
        if i == HIST_BINS {
            hi[a]
        } else {
            lo[a] + width[a] * i as f64
        }
    };
    let bins = HIST_BINS.pow(d as u32);
    // per-component, per-axis bin masses
    let axis_mass: Vec<Vec<f64>> = model
        .centers()
        .flat_map(|c| {
            (0..d)
                .map(|a| {
                    (0..HIST_BINS)
                        .map(|i| {
                            normal_cdf((edge(a, i + 1) - c[a]) / sd)
                                - normal_cdf((edge(a, i) - c[a]) / sd)
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut exact = vec![0.0; bins];
    for (j, &w) in model.weights().iter().enumerate() {
        for (b, e) in exact.iter_mut().enumerate() {
            let mut p = w;
            let mut rem = b;
            for a in 0..d {
                p *= axis_mass[j * d + a][rem % HIST_BINS];
                rem /= HIST_BINS;
            }
            *e += p;
        }
    }
    let mut counts = vec![0usize; bins];
    let mut outside = 0usize;
    for x in samples.iter_rows() {
        let mut b = 0;
        let mut stride = 1;
        let mut inside = true;
        for a in 0..d {
            let pos = (x[a] - lo[a]) / width[a];
            if !(pos >= 0.0 && pos < HIST_BINS as f64) {
                inside = false;
                break;
            }
            b += (pos as usize).min(HIST_BINS - 1) * stride;
            stride *= HIST_BINS;
        }
        if inside {
            counts[b] += 1;
        } else {
            outside += 1;
        }
    }
    let n = samples.rows() as f64;
    let exact_inside: f64 = exact.iter().sum();
    let mut tv: f64 = counts
        .iter()
        .zip(&exact)
        .map(|(&c, &p)| (c as f64 / n - p).abs())
        .sum();
    tv += (outside as f64 / n - (1.0 - exact_inside).max(0.0)).abs();
    0.5 * tv
}
