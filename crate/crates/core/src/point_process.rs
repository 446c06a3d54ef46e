//! Uniform binomial and homogeneous Poisson processes on an interval.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Increasing times in `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedTimes {
    pub times: Vec<f64>,
    pub horizon: f64,
}

impl OrderedTimes {
    /// Validating constructor: the times must be strictly increasing and lie
    /// in `[0, horizon]`.
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return domain("horizon must be positive");
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("times must be strictly increasing");
        }
        if times.iter().any(|&s| !(0.0..=horizon).contains(&s)) {
            return domain("times must lie in [0, horizon]");
        }
        Ok(Self { times, horizon })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of points in `[a, b)`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let lo = self.times.partition_point(|&s| s < a);
        let hi = self.times.partition_point(|&s| s < b);
        hi - lo
    }
}

/// `n` i.i.d. uniform points on `(0, horizon)`, sorted.
pub fn sample_uniform_binomial<R: Rng + ?Sized>(n: usize, horizon: f64, rng: &mut R) -> OrderedTimes {
    let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * horizon).collect();
    times.sort_unstable_by(f64::total_cmp);
    OrderedTimes { times, horizon }
}

/// Density at `s` of the `k`-th smallest of `n` i.i.d. uniform points on
/// `(0, horizon)`: `k C(n,k) s^{k-1} (h-s)^{n-k} h^{-n}`. Zero outside the
/// open interval.
pub fn order_statistic_density(n: usize, k: usize, s: f64, horizon: f64) -> Result<f64> {
    if k == 0 || k > n {
        return domain(format!("order statistic index {k} outside 1..={n}"));
    }
    if !(horizon > 0.0) {
        return domain("horizon must be positive");
    }
    if !(s > 0.0 && s < horizon) {
        return Ok(0.0);
    }
    let u = s / horizon;
    let log = ln_choose(n, k) + (k as f64).ln() + (k - 1) as f64 * u.ln() + (n - k) as f64 * (1.0 - u).ln()
        - horizon.ln();
    Ok(log.exp())
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Arrival times of a rate-`rate` Poisson process on `[0, horizon]`, built
/// from exponential gaps.
pub fn sample_poisson_times<R: Rng + ?Sized>(rate: f64, horizon: f64, rng: &mut R) -> Result<OrderedTimes> {
    if !(rate > 0.0) || !(horizon > 0.0) {
        return domain("Poisson process needs positive rate and horizon");
    }
    let gap = Exp::new(rate).expect("positive rate");
    let mut times = Vec::new();
    let mut s = gap.sample(rng);
    while s <= horizon {
        times.push(s);
        s += gap.sample(rng);
    }
    Ok(OrderedTimes { times, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use crate::rng::stream_rng;

    #[test]
    fn empty_binomial() {
        let mut rng = stream_rng(1, 0);
        assert!(sample_uniform_binomial(0, 1.0, &mut rng).is_empty());
    }

    #[test]
    fn order_statistic_values() {
        assert_eq!(order_statistic_density(1, 1, 0.3, 1.0).unwrap(), 1.0);
        assert!((order_statistic_density(3, 2, 0.5, 1.0).unwrap() - 1.5).abs() < 1e-14);
        assert!(order_statistic_density(3, 4, 0.5, 1.0).is_err());
        assert!(order_statistic_density(3, 0, 0.5, 1.0).is_err());
        let total = adaptive_simpson(|s| order_statistic_density(5, 5, s, 2.0).unwrap(), 0.0, 2.0, 1e-13, 8);
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn order_statistic_means() {
        let n = 100_000;
        let mut rng = stream_rng(3, 0);
        let xs = sample_uniform_binomial(n, 1.0, &mut rng);
        assert!(xs.times.windows(2).all(|w| w[0] <= w[1]));
        // One draw of each order statistic; Var(U_(k)) = k(n+1-k)/((n+1)²(n+2)).
        for k in [1usize, 1000, 50_000, 99_000, n] {
            let mean = k as f64 / (n as f64 + 1.0);
            let sd = (k as f64 * (n + 1 - k) as f64).sqrt() / ((n as f64 + 1.0) * (n as f64 + 2.0).sqrt());
            assert!((xs.times[k - 1] - mean).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn poisson_count_mean() {
        let reps = 100_000u64;
        let counts: f64 = (0..reps)
            .map(|i| sample_poisson_times(4.0, 1.0, &mut stream_rng(9, i)).unwrap().len() as f64)
            .sum();
        let mean = counts / reps as f64;
        assert!((mean - 4.0).abs() < 3.0 * (4.0 / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn ordered_times_validation() {
        assert!(OrderedTimes::new(vec![0.2, 0.1], 1.0).is_err());
        assert!(OrderedTimes::new(vec![0.2, 1.5], 1.0).is_err());
        let t = OrderedTimes::new(vec![0.1, 0.2, 0.7], 1.0).unwrap();
        assert_eq!(t.count_in(0.0, 0.5), 2);
    }
}
