//! Mergeable summary statistics, Monte Carlo estimate records and the
//! distribution-distance tools used by the verification experiments.

use serde::{Deserialize, Serialize};

/// How an [`EstimateWithError`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Quadrature,
    ClosedForm,
    MonteCarlo,
}

/// A numeric result with its uncertainty.
///
/// `stderr` is the Monte Carlo standard error and is zero unless `method` is
/// [`Method::MonteCarlo`]. Quadrature results carry their requested absolute
/// tolerance in `tolerance` instead. Kernel-smoothed estimates additionally
/// report `bias_proxy`, the absolute change of the estimate when the
/// bandwidth is halved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub stderr: f64,
    pub reps: u64,
    pub method: Method,
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default)]
    pub bias_proxy: f64,
}

impl EstimateWithError {
    pub fn closed_form(value: f64) -> Self {
        Self { value, stderr: 0.0, reps: 0, method: Method::ClosedForm, tolerance: 0.0, bias_proxy: 0.0 }
    }

    pub fn quadrature(value: f64, tolerance: f64) -> Self {
        Self { value, stderr: 0.0, reps: 0, method: Method::Quadrature, tolerance, bias_proxy: 0.0 }
    }

    pub fn monte_carlo(value: f64, stderr: f64, reps: u64) -> Self {
        Self { value, stderr, reps, method: Method::MonteCarlo, tolerance: 0.0, bias_proxy: 0.0 }
    }

    /// Standard error plus bias proxy.
    pub fn combined_uncertainty(&self) -> f64 {
        self.stderr + self.bias_proxy + self.tolerance
    }

    /// Whether `other` agrees with `self` within `k` combined uncertainties
    /// (independent errors added in quadrature).
    pub fn agrees_with(&self, other: &Self, k: f64) -> bool {
        let u = self.combined_uncertainty().hypot(other.combined_uncertainty());
        (self.value - other.value).abs() <= k * u
    }

    /// Sum of independent estimates.
    pub fn add(&self, other: &Self) -> Self {
        combine(self, other, self.value + other.value, self.stderr.hypot(other.stderr))
    }

    /// Product of independent estimates (first-order error propagation).
    pub fn mul(&self, other: &Self) -> Self {
        let se = (other.value * self.stderr).hypot(self.value * other.stderr);
        let mut out = combine(self, other, self.value * other.value, se);
        out.tolerance = (other.value * self.tolerance).abs() + (self.value * other.tolerance).abs();
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            value: self.value * c,
            stderr: self.stderr * c.abs(),
            tolerance: self.tolerance * c.abs(),
            bias_proxy: self.bias_proxy * c.abs(),
            ..*self
        }
    }
}

fn combine(a: &EstimateWithError, b: &EstimateWithError, value: f64, stderr: f64) -> EstimateWithError {
    let method = match (a.method, b.method) {
        (Method::MonteCarlo, _) | (_, Method::MonteCarlo) => Method::MonteCarlo,
        (Method::Quadrature, _) | (_, Method::Quadrature) => Method::Quadrature,
        _ => Method::ClosedForm,
    };
    EstimateWithError {
        value,
        stderr: if method == Method::MonteCarlo { stderr } else { 0.0 },
        reps: a.reps.max(b.reps),
        method,
        tolerance: a.tolerance + b.tolerance,
        bias_proxy: a.bias_proxy + b.bias_proxy,
    }
}

/// Streaming count/mean/M2 record (Welford), mergeable across workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. parallel combination.
    pub fn merge(mut self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.count = n;
        self
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> EstimateWithError {
        EstimateWithError::monte_carlo(self.mean, self.stderr(), self.count)
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Empirical frequency with a binomial standard error.
pub fn binomial_estimate(hits: u64, trials: u64) -> EstimateWithError {
    if trials == 0 {
        return EstimateWithError::monte_carlo(0.0, 0.0, 0);
    }
    let p = hits as f64 / trials as f64;
    EstimateWithError::monte_carlo(p, (p * (1.0 - p) / trials as f64).sqrt(), trials)
}

/// Ratio of means `E[a]/E[b]` from paired samples with a delta-method
/// standard error that accounts for the correlation of `a` and `b`.
pub fn ratio_of_means(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(x, y), (a, b)| (x + a, y + b));
    let (ma, mb) = (ma / n, mb / n);
    if mb == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let r = ma / mb;
    let var: f64 = pairs.iter().map(|(a, b)| (a - r * b).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (r, (var / n).sqrt() / mb.abs())
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let wa: Vec<(f64, f64)> = a.iter().map(|&x| (x, 1.0)).collect();
    let wb: Vec<(f64, f64)> = b.iter().map(|&x| (x, 1.0)).collect();
    ks_weighted(&wa, &wb)
}

/// Kolmogorov–Smirnov distance between two weighted empirical laws given as
/// `(value, weight)` pairs. Weights need not be normalized.
pub fn ks_weighted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let ta: f64 = a.iter().map(|p| p.1).sum();
    let tb: f64 = b.iter().map(|p| p.1).sum();
    if ta <= 0.0 || tb <= 0.0 {
        return f64::NAN;
    }
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].0 <= x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 <= x {
            fb += b[j].1;
            j += 1;
        }
        d = d.max((fa / ta - fb / tb).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS statistic `d` for effective sample size
/// `n_eff` (for two samples `n1 n2 / (n1 + n2)`), with Stephens' small-sample
/// correction.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// Kish effective sample size of a weight vector.
pub fn effective_sample_size(weights: impl IntoIterator<Item = f64>) -> f64 {
    let (s, s2) = weights.into_iter().fold((0.0, 0.0), |(a, b), w| (a + w, b + w * w));
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Pearson chi-square statistic of observed counts against expected counts.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum()
}

/// Chi-square statistic for homogeneity of two count vectors over the same
/// cells. Returns the statistic; degrees of freedom are `cells - 1`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> f64 {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0)
        .map(|(&x, &y)| {
            let tot = (x + y) as f64;
            let ea = tot * na / n;
            let eb = tot * nb / n;
            (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb
        })
        .sum()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_unstable_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}
