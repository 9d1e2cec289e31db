//! Streaming moments and Monte Carlo estimates.

/// Running count, mean and centered sum of squares (Welford), mergeable in a
/// fixed order.
///
/// Values are accumulated in units of a power of two that follows the
/// largest samples seen, so spreads near `1e-300` neither underflow nor
/// overflow when magnitudes vary wildly.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
    scale: f64,
}

const HEADROOM: f64 = 18_446_744_073_709_551_616.0;

fn binade(x: f64) -> f64 {
    let b = f64::from_bits(x.abs().to_bits() & 0x7ff0_0000_0000_0000);
    if b == 0.0 {
        f64::MIN_POSITIVE
    } else {
        b
    }
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        if x != 0.0 && x.is_finite() && (self.scale == 0.0 || x.abs() > self.scale * HEADROOM) {
            self.rescale(binade(x));
        }
        let y = if self.scale == 0.0 { x } else { x / self.scale };
        self.count += 1;
        let delta = y - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (y - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let mut other = *other;
        if self.scale < other.scale {
            self.rescale(other.scale);
        } else if other.scale < self.scale {
            other.rescale(self.scale);
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.count += other.count;
    }

    fn rescale(&mut self, scale: f64) {
        if self.scale != 0.0 {
            let r = self.scale / scale;
            self.mean *= r;
            self.m2 *= r * r;
        }
        self.scale = scale;
    }

    fn unit(&self) -> f64 {
        if self.scale == 0.0 {
            1.0
        } else {
            self.scale
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean * self.unit()
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            let u = self.unit();
            (self.m2 / (self.count - 1) as f64).max(0.0) * u * u
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            let v = (self.m2 / (self.count - 1) as f64).max(0.0);
            crate::math::sqrt(v / self.count as f64) * self.unit()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean(),
            std_error: self.std_error(),
        }
    }
}

/// Merges per-batch moments in index order.
pub fn merge_all<'a, I: IntoIterator<Item = &'a Moments>>(parts: I) -> Moments {
    let mut total = Moments::default();
    for p in parts {
        total.merge(p);
    }
    total
}

/// A value with its Monte Carlo standard error (zero for deterministic
/// quadrature).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub const fn exact(value: f64) -> Self {
        Estimate {
            value,
            std_error: 0.0,
        }
    }

    /// `|self − other|` in units of the combined standard error. Zero when
    /// both values agree exactly, infinite when they differ with no error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        standardize(
            self.value - other.value,
            crate::math::hypot(self.std_error, other.std_error),
        )
        .abs()
    }
}

/// `diff / se` with the conventions `0/0 = 0`, `x/0 = ±inf`.
pub fn standardize(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_single_pass() {
        let xs: [f64; 9] = [1.0, 4.0, -2.0, 3.5, 0.25, 8.0, -1.0, 2.0, 2.0];
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..4].iter().for_each(|&x| a.push(x));
        xs[4..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count(), all.count());
        assert!((a.mean() - all.mean()).abs() < 1e-14);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn tiny_samples_keep_their_spread() {
        let mut m = Moments::default();
        let mut r = Moments::default();
        for x in [1.0, 3.0, 2.0, 6.0] {
            m.push(x * 1e-250);
            r.push(x);
        }
        let (e, f) = (m.estimate(), r.estimate());
        assert!(e.std_error > 0.0);
        assert!((e.std_error / f.std_error - 1e-250).abs() < 1e-262);
        assert!((e.value / f.value - 1e-250).abs() < 1e-262);
    }

    #[test]
    fn wide_dynamic_range() {
        let mut m = Moments::default();
        for x in [1e-300, 1e-80, 3e-80, 2e-300] {
            m.push(x);
        }
        let e = m.estimate();
        assert!((e.value / 1e-80 - 1.0).abs() < 1e-12);
        assert!(e.std_error.is_finite() && e.std_error > 4e-81);
    }

    #[test]
    fn merge_across_scales() {
        let mut a = Moments::default();
        let mut b = Moments::default();
        let mut all = Moments::default();
        for x in [0.001, 0.004, 0.002] {
            a.push(x);
            all.push(x);
        }
        for x in [5.0, 7.0] {
            b.push(x);
            all.push(x);
        }
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-14);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn standardize_conventions() {
        assert_eq!(standardize(0.0, 0.0), 0.0);
        assert_eq!(standardize(1.0, 0.0), f64::INFINITY);
        assert_eq!(standardize(-1.0, 0.0), f64::NEG_INFINITY);
        assert_eq!(standardize(1.0, 2.0), 0.5);
    }
}
