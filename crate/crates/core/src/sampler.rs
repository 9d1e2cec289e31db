//! Reverse sampler with a frozen latent posterior mean.
//!
//! Starting from `Y ~ N(0, T I)`, step `k` maps
//!
//! ```text
//! Y ← a_k Y + (1 − a_k) M̂_{t_{k−1}}(Y) + √((t_k+ε²)(1 − a_k)) ξ_k
//! ```
//!
//! which is the exact solution over one step of the linear SDE whose drift
//! holds `M̂` fixed at the left end. Path `i` draws its prior sample and then
//! its `ξ_1, …, ξ_K` from stream `("sampler", i)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::exec::{batch_count, batch_range, Executor, BATCH};
use crate::math::sqrt;
use crate::mixture::Categorical;
use crate::score::{Scratch, ScoreModel};
use crate::seed::{self, fill_standard_normal};
use crate::{Error, Matrix, MixtureModel, Result, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub record_trajectory: bool,
}

/// States of every path after each step, laid out `[step][path][dim]`
/// (step 0 is the prior draw).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: usize,
    pub paths: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Trajectory {
    pub fn state(&self, step: usize, path: usize) -> &[f64] {
        let at = (step * self.paths + path) * self.dim;
        &self.data[at..at + self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOutput {
    /// Final states, distributed as `P̂_{T−δ}`.
    pub samples: Matrix,
    pub trajectory: Option<Trajectory>,
}

fn prior_row<R: Rng + ?Sized>(rng: &mut R, horizon: f64, row: &mut [f64]) {
    fill_standard_normal(rng, row);
    let sd = sqrt(horizon);
    row.iter_mut().for_each(|x| *x *= sd);
}

/// `n` independent `N(0, T I)` rows, row `i` from stream `("sampler", i)`.
pub fn init_prior(horizon: f64, dim: usize, n: usize, seed: u64) -> Result<Matrix> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain("prior variance T must be positive"));
    }
    let mut out = Matrix::zeros(n, dim);
    for i in 0..n {
        let mut rng = seed::stream(seed, "sampler", i as u64);
        prior_row(&mut rng, horizon, out.row_mut(i));
    }
    Ok(out)
}

/// `a y + (1 − a) m + √(v (1 − a)) ξ`, with `v = t_k + ε²`.
pub fn update(y: &[f64], a: f64, latent_mean: &[f64], v: f64, noise: &[f64], out: &mut [f64]) {
    let sd = sqrt(v * (1.0 - a));
    for (((o, &yi), &mi), &xi) in out.iter_mut().zip(y).zip(latent_mean).zip(noise) {
        *o = a * yi + (1.0 - a) * mi + sd * xi;
    }
}

/// Step `k` (`1 ≤ k ≤ K`) of the sampler from state `y` with the supplied
/// standard-normal `noise`.
pub fn step<S: ScoreModel + ?Sized>(
    y: &[f64],
    k: usize,
    grid: &TimeGrid,
    oracle: &S,
    noise: &[f64],
    out: &mut [f64],
    scratch: &mut Scratch,
) -> Result<()> {
    if k == 0 || k > grid.steps() {
        return Err(Error::StepOutOfRange {
            index: k,
            steps: grid.steps(),
        });
    }
    let d = oracle.dim();
    if y.len() != d || noise.len() != d || out.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len(),
        });
    }
    let e2 = grid.eps() * grid.eps();
    let mut mhat = vec![0.0; d];
    oracle.latent_mean_into(y, grid.t()[k - 1], &mut mhat, scratch)?;
    update(y, grid.a()[k - 1], &mhat, grid.t()[k] + e2, noise, out);
    Ok(())
}

fn check_pairing<S: ScoreModel + ?Sized>(grid: &TimeGrid, oracle: &S) -> Result<()> {
    if grid.eps() != oracle.eps() {
        return Err(Error::InvalidGrid(alloc::format!(
            "grid eps {} differs from model eps {}",
            grid.eps(),
            oracle.eps()
        )));
    }
    Ok(())
}

/// Runs `n_paths` independent chains through the grid.
pub fn run<S: ScoreModel + ?Sized, E: Executor>(
    grid: &TimeGrid,
    oracle: &S,
    config: &SamplerConfig,
    exec: &E,
) -> Result<SamplerOutput> {
    check_pairing(grid, oracle)?;
    if config.n_paths == 0 {
        return Err(Error::Domain("sampler needs at least one path"));
    }
    let d = oracle.dim();
    let n = config.n_paths;
    let steps = grid.steps();
    let record = config.record_trajectory;
    let parts = exec.map(batch_count(n, BATCH), |b| -> Result<(Vec<f64>, Vec<f64>)> {
        let range = batch_range(n, BATCH, b);
        let mut finals = Vec::with_capacity(range.len() * d);
        let mut states = Vec::new();
        if record {
            states.reserve(range.len() * (steps + 1) * d);
        }
        let mut y = vec![0.0; d];
        let mut next = vec![0.0; d];
        let mut mhat = vec![0.0; d];
        let mut noise = vec![0.0; d];
        let mut scratch = Scratch::new();
        let e2 = grid.eps() * grid.eps();
        for path in range {
            let mut rng = seed::stream(config.seed, "sampler", path as u64);
            prior_row(&mut rng, grid.horizon(), &mut y);
            if record {
                states.extend_from_slice(&y);
            }
            for k in 1..=steps {
                oracle.latent_mean_into(&y, grid.t()[k - 1], &mut mhat, &mut scratch)?;
                fill_standard_normal(&mut rng, &mut noise);
                update(&y, grid.a()[k - 1], &mhat, grid.t()[k] + e2, &noise, &mut next);
                core::mem::swap(&mut y, &mut next);
                if record {
                    states.extend_from_slice(&y);
                }
            }
            finals.extend_from_slice(&y);
        }
        Ok((finals, states))
    });
    let mut samples = Vec::with_capacity(n * d);
    let mut per_batch = Vec::new();
    for part in parts {
        let (f, s) = part?;
        samples.extend_from_slice(&f);
        per_batch.push(s);
    }
    let trajectory = record.then(|| {
        let mut data = vec![0.0; (steps + 1) * n * d];
        let mut path0 = 0;
        for s in &per_batch {
            let len = s.len() / ((steps + 1) * d);
            for p in 0..len {
                for k in 0..=steps {
                    let src = (p * (steps + 1) + k) * d;
                    let dst = (k * n + path0 + p) * d;
                    data[dst..dst + d].copy_from_slice(&s[src..src + d]);
                }
            }
            path0 += len;
        }
        Trajectory {
            steps: steps + 1,
            paths: n,
            dim: d,
            data,
        }
    });
    Ok(SamplerOutput {
        samples: Matrix::from_vec(n, d, samples),
        trajectory,
    })
}

/// Fills `out` (`times.len() × d`, row per time) with one path of
/// `X_t = U + ε G₀ + W_t` at strictly increasing `times`, returning the
/// component label.
pub(crate) fn forward_path<R: Rng + ?Sized>(
    model: &MixtureModel,
    cat: &Categorical,
    times: &[f64],
    rng: &mut R,
    noise: &mut [f64],
    out: &mut [f64],
) -> usize {
    let d = model.dim();
    let j = cat.sample(rng);
    let mu = model.center(j);
    let mut prev = 0.0;
    for (i, &t) in times.iter().enumerate() {
        fill_standard_normal(rng, noise);
        let (head, tail) = out.split_at_mut(i * d);
        let row = &mut tail[..d];
        if i == 0 {
            let sd = sqrt(t + model.eps_squared());
            for ((o, m), g) in row.iter_mut().zip(mu).zip(noise.iter()) {
                *o = m + sd * g;
            }
        } else {
            let sd = sqrt(t - prev);
            let last = &head[(i - 1) * d..];
            for ((o, l), g) in row.iter_mut().zip(last).zip(noise.iter()) {
                *o = l + sd * g;
            }
        }
        prev = t;
    }
    j
}

/// Exact-law reverse paths: `states[k]` holds `X_{t_k}` for every path, all
/// from one Brownian path per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePaths {
    pub labels: Vec<usize>,
    pub states: Vec<Matrix>,
}

/// Samples `n` paths of the forward process at the grid times, path `i`
/// from stream `("reference", i)`.
pub fn exact_reverse_reference<E: Executor>(
    model: &MixtureModel,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    exec: &E,
) -> Result<ReferencePaths> {
    if grid.eps() != model.eps() {
        return Err(Error::InvalidGrid("grid and model eps differ".into()));
    }
    let d = model.dim();
    let k = grid.steps();
    let times: Vec<f64> = grid.t().iter().rev().copied().collect();
    let cat = model.categorical();
    let parts = exec.map(batch_count(n, BATCH), |b| {
        let mut noise = vec![0.0; d];
        let mut buf = vec![0.0; (k + 1) * d];
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for i in batch_range(n, BATCH, b) {
            let mut rng = seed::stream(seed, "reference", i as u64);
            labels.push(forward_path(model, &cat, &times, &mut rng, &mut noise, &mut buf));
            rows.extend_from_slice(&buf);
        }
        (labels, rows)
    });
    let mut labels = Vec::with_capacity(n);
    let mut states: Vec<Matrix> = (0..=k).map(|_| Matrix::zeros(n, d)).collect();
    let mut path = 0;
    for (l, rows) in parts {
        for (p, _) in l.iter().enumerate() {
            for (slot, idx) in (0..=k).rev().enumerate() {
                let src = (p * (k + 1) + slot) * d;
                states[idx].row_mut(path + p).copy_from_slice(&rows[src..src + d]);
            }
        }
        path += l.len();
        labels.extend(l);
    }
    Ok(ReferencePaths { labels, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::two_point;
    use crate::schedule::uniform_time_grid;
    use crate::score::ScoreOracle;
    use crate::Sequential;

    #[test]
    fn unit_factor_is_identity() {
        let y = [0.3, -1.2];
        let mut out = [0.0; 2];
        update(&y, 1.0, &[5.0, 5.0], 2.0, &[1.0, -1.0], &mut out);
        assert_eq!(out, y);
    }

    #[test]
    fn step_index_is_checked() {
        let m = two_point(1, 0.0, 2.0, 0.5).unwrap();
        let g = uniform_time_grid(1.0, 0.1, 0.0, 3).unwrap();
        let o = ScoreOracle::exact(&m);
        let mut out = [0.0];
        let mut s = Scratch::new();
        assert!(step(&[0.0], 0, &g, &o, &[0.0], &mut out, &mut s).is_err());
        assert!(step(&[0.0], 4, &g, &o, &[0.0], &mut out, &mut s).is_err());
        assert!(step(&[0.0], 3, &g, &o, &[0.0], &mut out, &mut s).is_ok());
    }

    #[test]
    fn posterior_concentration_fixes_centers() {
        let m = two_point(1, 0.0, 2.0, 0.5).unwrap();
        let g = TimeGrid::from_times(vec![1e-6, 5e-7], 0.0).unwrap();
        let o = ScoreOracle::exact(&m);
        let mut out = [0.0];
        step(&[1.0], 1, &g, &o, &[0.0], &mut out, &mut Scratch::new()).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_layout_matches_finals() {
        let m = two_point(2, 0.1, 2.0, 0.5).unwrap();
        let g = uniform_time_grid(4.0, 0.1, 0.1, 5).unwrap();
        let o = ScoreOracle::exact(&m);
        let cfg = SamplerConfig {
            n_paths: 7,
            seed: 3,
            record_trajectory: true,
        };
        let out = run(&g, &o, &cfg, &Sequential).unwrap();
        let tr = out.trajectory.unwrap();
        assert_eq!(tr.steps, 6);
        for p in 0..7 {
            assert_eq!(tr.state(5, p), out.samples.row(p));
        }
        let prior = init_prior(4.0, 2, 7, 3).unwrap();
        for p in 0..7 {
            assert_eq!(tr.state(0, p), prior.row(p));
        }
    }

    #[test]
    fn eps_mismatch_is_rejected() {
        let m = two_point(1, 0.1, 2.0, 0.5).unwrap();
        let g = uniform_time_grid(4.0, 0.1, 0.0, 5).unwrap();
        let cfg = SamplerConfig {
            n_paths: 1,
            seed: 0,
            record_trajectory: false,
        };
        assert!(run(&g, &ScoreOracle::exact(&m), &cfg, &Sequential).is_err());
    }

    #[test]
    fn reference_paths_end_at_grid_times() {
        let m = two_point(1, 0.0, 2.0, 0.5).unwrap();
        let g = uniform_time_grid(2.0, 0.5, 0.0, 3).unwrap();
        let r = exact_reverse_reference(&m, &g, 10, 1, &Sequential).unwrap();
        assert_eq!(r.states.len(), 4);
        assert_eq!(r.labels.len(), 10);
        let again = exact_reverse_reference(&m, &g, 10, 1, &Sequential).unwrap();
        assert_eq!(r, again);
    }
}
