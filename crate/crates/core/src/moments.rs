//! Cluster and process moment densities.
//!
//! The second-order cluster density has the one-dimensional representation
//!
//! ```text
//! q_t^2(x1, x2) = 2 ∫_0^t p_{2r}(x1 - x2) p_{t - r/2}((x1 + x2)/2) dr
//! ```
//!
//! (with `r = t - s` the time since the split), obtained from the forward
//! recursion by the Gaussian product identity
//! `p_r(a) p_r(b) = p_{2r}(a - b) p_{r/2}((a + b)/2)`. It depends on the
//! pair only through `|x1 - x2|²` and `|(x1 + x2)/2|²`, which
//! [`q2_reduced`] takes directly. Third-order densities are only available
//! as Monte Carlo estimates built from the forward and backward recursions
//! and from the uniform Brownian tree.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::{convolve_heat, dist_sq, heat_sq, log_heat_sq, norm_sq, DiscreteMeasure, Point, PointTuple};
use crate::par;
use crate::quad::{adaptive_simpson, gauss_legendre_on, sphere_rule};
use crate::stats::{EstimateWithError, RunningStats};
use crate::tree::{cluster_moment_density_mc, default_bandwidth, moment_norm};

/// Absolute tolerance targeted by the adaptive quadratures; small values
/// are resolved to this tolerance relative to their size.
pub const QUAD_TOL: f64 = 1e-8;

/// First-order cluster density `q_t^1 = p_t`.
pub fn q1(t: f64, x: &Point) -> Result<f64> {
    crate::kernels::heat_density(x, t)
}

/// `q_t^2` from the squared separation `dsq = |x1 - x2|²` and squared
/// midpoint norm `msq = |(x1 + x2)/2|²` in dimension `d`; no checks.
///
/// The time integral is taken in the variable `v` with `r = t e^{-v}`,
/// which stretches the `r → 0` end where `p_{2r}(Δ)` peaks for small
/// separations. Below `r = |Δ|²/2800` the integrand is smaller than
/// `e^{-700}` relative to its peak and the range is cut there.
pub fn q2_reduced(t: f64, d: usize, dsq: f64, msq: f64) -> f64 {
    q2_reduced_rel(t, d, dsq, msq, QUAD_TOL)
}

fn q2_reduced_rel(t: f64, d: usize, dsq: f64, msq: f64, rel: f64) -> f64 {
    let r_min = (dsq / 2800.0).max(t * 1e-14);
    let v_max = (t / r_min).ln().max(2.0);
    let f = |v: f64| {
        let r = t * (-v).exp();
        2.0 * r * (log_heat_sq(dsq, d, 2.0 * r) + log_heat_sq(msq, d, t - 0.5 * r)).exp()
    };
    let panels = ((v_max / 1.5).ceil() as usize).max(8);
    let rough = adaptive_simpson(f, 0.0, v_max, f64::INFINITY, panels);
    let tol = rel * rough.abs().min(1.0);
    if tol == 0.0 {
        return rough;
    }
    adaptive_simpson(f, 0.0, v_max, tol, panels)
}

/// Second-order cluster moment density `q_t^2(x1, x2)`.
pub fn q2_cluster(t: f64, x1: &Point, x2: &Point) -> Result<f64> {
    if !(t > 0.0) {
        return domain("q2 needs t > 0");
    }
    if x1.dim() != x2.dim() {
        return domain("points differ in dimension");
    }
    let d = x1.dim();
    let dsq = x1.dist_sq(x2);
    if dsq == 0.0 && d >= 2 {
        return domain("q2 diverges on the diagonal for d >= 2");
    }
    let msq: f64 = x1.0.iter().zip(&x2.0).map(|(a, b)| (0.5 * (a + b)).powi(2)).sum();
    Ok(q2_reduced(t, d, dsq, msq))
}

/// The defining double integral
/// `2 ∫_0^t ds ∫ du p_s(u) p_{t-s}(x1 - u) p_{t-s}(x2 - u)` evaluated
/// without the Gaussian product reduction: an adaptive time integral of a
/// tensor Gauss–Legendre spatial integral. Slow; meant as an oracle for
/// [`q2_cluster`] in `d <= 3`.
pub fn q2_unreduced(t: f64, x1: &[f64], x2: &[f64]) -> f64 {
    let d = x1.len();
    let rule = gauss_legendre_on(48, -1.0, 1.0);
    let inner = |s: f64| -> f64 {
        let r = t - s;
        // Box around the precision-weighted center of the three factors.
        let prec = 1.0 / s + 2.0 / r;
        let center: Vec<f64> = (0..d).map(|a| (x1[a] + x2[a]) / r / prec).collect();
        let half = 12.0 / prec.sqrt();
        let mut total = 0.0;
        let n = rule.len();
        let mut idx = vec![0usize; d];
        loop {
            let mut w = 1.0;
            let mut u = [0.0; 3];
            for a in 0..d {
                u[a] = center[a] + half * rule.nodes[idx[a]];
                w *= half * rule.weights[idx[a]];
            }
            let u = &u[..d];
            let log = log_heat_sq(norm_sq(u), d, s)
                + log_heat_sq(dist_sq(x1, u), d, r)
                + log_heat_sq(dist_sq(x2, u), d, r);
            total += w * log.exp();
            let mut a = 0;
            loop {
                if a == d {
                    return total;
                }
                idx[a] += 1;
                if idx[a] < n {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    };
    // s in [0, t/2] directly; s in [t/2, t] through s = t - t e^{-v},
    // which resolves the peak of p_{2(t-s)}(Δ) near s = t.
    let dsq = dist_sq(x1, x2);
    let v_max = (t / (dsq / 2800.0).max(t * 1e-12)).ln().max(1.0);
    let head = adaptive_simpson(|s: f64| 2.0 * inner(s), t * 1e-12, 0.5 * t, 1e-11, 8);
    let tail = adaptive_simpson(
        |v: f64| {
            let r = t * (-v).exp();
            2.0 * r * inner(t - r)
        },
        2f64.ln(),
        v_max,
        1e-11,
        24,
    );
    head + tail
}

/// Total mass `∫∫ q_t^2` by quadrature over `|Δ|` and `|M|` (the density
/// is radial in both), truncated at 8 standard deviations; the tolerance
/// records the Gaussian tail bound of the truncation plus the quadrature
/// target.
pub fn q2_norm_quadrature(t: f64, d: usize) -> Result<EstimateWithError> {
    if !(t > 0.0) || !(1..=3).contains(&d) {
        return domain("norm quadrature needs t > 0 and 1 <= d <= 3");
    }
    let area = sphere_area(d);
    let (rd, rm) = (8.0 * (2.0 * t).sqrt(), 8.0 * t.sqrt());
    let dm1 = d as i32 - 1;
    let inner = |rho_d: f64| -> f64 {
        let g = |rho_m: f64| rho_m.powi(dm1) * q2_reduced_rel(t, d, rho_d * rho_d, rho_m * rho_m, NORM_REL);
        rho_d.powi(dm1) * piecewise(g, &breakpoints(&[t.sqrt()], &[], rm), NORM_REL)
    };
    let value = area * area * piecewise(inner, &breakpoints(&[(2.0 * t).sqrt(), 0.05 * t.sqrt()], &[], rd), NORM_REL);
    // Δ given the split is N(0, 2r I) and M is N(0, (t - r/2) I), both
    // dominated by the r = t variances.
    let tail = 2.0 * t * (chi_tail(d, 8.0) + chi_tail(d, 8.0));
    Ok(EstimateWithError::quadrature(value, tail + 3.0 * NORM_REL * value))
}

/// Relative target of each nested pass of the norm quadrature.
const NORM_REL: f64 = 1e-7;

/// Tail `P{|Z| > k}` for a standard Gaussian vector in `R^d`, `d <= 3`.
fn chi_tail(d: usize, k: f64) -> f64 {
    let g = (-0.5 * k * k).exp();
    match d {
        1 => erfc_approx(k / std::f64::consts::SQRT_2),
        2 => g,
        _ => erfc_approx(k / std::f64::consts::SQRT_2) + (2.0 / std::f64::consts::PI).sqrt() * k * g,
    }
}

fn erfc_approx(x: f64) -> f64 {
    // Upper bound e^{-x²}/(x √π) for x > 0, enough for a tail bound.
    (-x * x).exp() / (x * std::f64::consts::PI.sqrt())
}

pub(crate) fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("d <= 3"),
    }
}

/// Sorted breakpoints on `[0, rmax]`: geometric ladders around each scale
/// and around each center location.
fn breakpoints(scales: &[f64], centers: &[f64], rmax: f64) -> Vec<f64> {
    let mut b = vec![0.0, rmax];
    for &s in scales {
        for k in -6..=4 {
            b.push(s * 2f64.powi(k));
        }
    }
    for &c in centers {
        for &s in scales {
            for k in [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
                b.push(c + k * s);
            }
        }
    }
    b.retain(|&x| x >= 0.0 && x <= rmax);
    b.sort_unstable_by(f64::total_cmp);
    b.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    b
}

/// Piecewise adaptive Simpson over consecutive breakpoints to relative
/// tolerance `rel` (after a coarse first pass to size the target).
fn piecewise(f: impl Fn(f64) -> f64, breaks: &[f64], rel: f64) -> f64 {
    let rough: f64 = breaks.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], f64::INFINITY, 2)).sum();
    let tol = (rel * rough.abs()).max(1e-300) / breaks.len() as f64;
    breaks.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], tol, 2)).sum()
}

/// `Σ_ω w_ω p_var(c - ρ ω)`: the integral of `p_var(c - ·)` over the
/// sphere of radius `ρ`, divided by `ρ^{d-1}`.
fn sphere_average(c: &[f64], rho: f64, var: f64, rule: &(Vec<Vec<f64>>, Vec<f64>)) -> f64 {
    let d = c.len();
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(w_dir, w)| {
            let r2: f64 = c.iter().zip(w_dir).map(|(ci, oi)| (ci - rho * oi).powi(2)).sum();
            w * heat_sq(r2, d, var)
        })
        .sum()
}

/// Both sides of the Markov decomposition of the second moment at split
/// time `s`: `lhs = q_{s+t}^2(x)` and
///
/// ```text
/// rhs = ∫ p_s(u) q_t^2(x1-u, x2-u) du + ∫∫ q_s^2(u1,u2) p_t(x1-u1) p_t(x2-u2) du1 du2.
/// ```
///
/// The right side is integrated numerically in space (radial quadrature in
/// the separation and midpoint coordinates with spherical averages of the
/// Gaussian factors), independently of the closed time integral used on
/// the left.
pub fn markov_split_check(s: f64, t: f64, xs: &PointTuple) -> Result<(f64, f64)> {
    if !(s > 0.0 && t > 0.0) {
        return domain("markov split needs s, t > 0");
    }
    if xs.len() != 2 || !xs.is_off_diagonal() {
        return domain("markov split needs an off-diagonal pair");
    }
    let d = xs.dim();
    if d > 3 {
        return domain("spatial quadrature implemented for d <= 3");
    }
    let (x1, x2) = (&xs.points()[0], &xs.points()[1]);
    let lhs = q2_cluster(s + t, x1, x2)?;
    let delta: Vec<f64> = x1.0.iter().zip(&x2.0).map(|(a, b)| a - b).collect();
    let mid: Vec<f64> = x1.0.iter().zip(&x2.0).map(|(a, b)| 0.5 * (a + b)).collect();
    let dsq = norm_sq(&delta);
    let (dn, mn) = (dsq.sqrt(), norm_sq(&mid).sqrt());
    let rule = sphere_rule(d, if d == 3 { 24 } else { 96 });
    let dm1 = d as i32 - 1;

    // ∫ p_s(M - w) q_t^2(Δ, w) dw in polar coordinates for w.
    let term1 = piecewise(
        |rho: f64| rho.powi(dm1) * q2_reduced_rel(t, d, dsq, rho * rho, 1e-7) * sphere_average(&mid, rho, s, &rule),
        &breakpoints(&[s.sqrt(), t.sqrt()], &[mn], mn + 12.0 * (s + t).sqrt()),
        1e-7,
    );

    // Separation/midpoint coordinates: p_t(x1-u1) p_t(x2-u2) =
    // p_{2t}(Δ - δ) p_{t/2}(M - m), unit Jacobian.
    let inner = |rho_m: f64| -> f64 {
        let g = |rho_d: f64| {
            rho_d.powi(dm1) * q2_reduced_rel(s, d, rho_d * rho_d, rho_m * rho_m, 1e-7) * sphere_average(&delta, rho_d, 2.0 * t, &rule)
        };
        let brk = breakpoints(&[s.sqrt(), (2.0 * t).sqrt()], &[dn], dn + 12.0 * (2.0 * t).sqrt());
        rho_m.powi(dm1) * sphere_average(&mid, rho_m, 0.5 * t, &rule) * piecewise(g, &brk, 1e-7)
    };
    let term2 = piecewise(inner, &breakpoints(&[s.sqrt(), (0.5 * t).sqrt()], &[mn], mn + 12.0 * (0.5 * t + s).sqrt()), 1e-7);
    Ok((lhs, term1 + term2))
}

/// `∫ q_t^2(x, y) dy` by polar quadrature in `δ = x - y`. For comparison:
/// the exact value is `2t p_t(x)`.
pub fn q2_marginal(t: f64, x: &Point) -> Result<f64> {
    let d = x.dim();
    if !(t > 0.0) || d > 3 {
        return domain("marginal needs t > 0 and d <= 3");
    }
    let rule = sphere_rule(d, if d == 3 { 24 } else { 96 });
    let dm1 = d as i32 - 1;
    let xn = x.norm_sq().sqrt();
    let g = |rho: f64| -> f64 {
        let ang: f64 = rule
            .0
            .iter()
            .zip(&rule.1)
            .map(|(om, w)| {
                let msq: f64 = x.0.iter().zip(om).map(|(xi, oi)| (xi - 0.5 * rho * oi).powi(2)).sum();
                w * q2_reduced(t, d, rho * rho, msq)
            })
            .sum();
        rho.powi(dm1) * ang
    };
    Ok(piecewise(g, &breakpoints(&[(2.0 * t).sqrt()], &[2.0 * xn], 2.0 * xn + 12.0 * (2.0 * t).sqrt()), 1e-8))
}

fn require_triple(xs: &PointTuple) -> Result<()> {
    if xs.len() != 3 {
        return domain("third-order estimators need a 3-tuple");
    }
    if !xs.is_off_diagonal() {
        return domain("tuple must be off-diagonal");
    }
    Ok(())
}

const OTHERS: [(usize, usize, usize); 3] = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// One draw of the forward-recursion estimator of `q_t^3(x)`:
///
/// ```text
/// q_t^3(x) = 2 Σ_k ∫_0^t ds ∫ du p_s(u) p_{t-s}(x_k - u) q_{t-s}^2(x_i - u, x_j - u)
/// ```
///
/// with `s ~ U(0, t)` and `u` drawn from the normalized product
/// `p_s(u) p_{t-s}(x_k - u) = p_t(x_k) N((s/t) x_k, s(t-s)/t)`.
fn q3_forward_draw<R: Rng + ?Sized>(t: f64, x: &[&[f64]; 3], rng: &mut R) -> f64 {
    let d = x[0].len();
    let mut total = 0.0;
    let mut u = [0.0f64; 3];
    for &(i, j, k) in &OTHERS {
        let s = t * rng.random::<f64>();
        let sd = (s * (t - s) / t).sqrt();
        for a in 0..d {
            u[a] = s / t * x[k][a] + sd * gaussian(rng);
        }
        let (dsq, msq) = pair_coords(x[i], x[j], &u[..d]);
        total += t * heat_sq(norm_sq(x[k]), d, t) * q2_reduced(t - s, d, dsq, msq);
    }
    2.0 * total
}

/// Squared separation and squared midpoint of `(a - u, b - u)`.
fn pair_coords(a: &[f64], b: &[f64], u: &[f64]) -> (f64, f64) {
    let mut dsq = 0.0;
    let mut msq = 0.0;
    for k in 0..a.len() {
        dsq += (a[k] - b[k]).powi(2);
        msq += (0.5 * (a[k] + b[k]) - u[k]).powi(2);
    }
    (dsq, msq)
}

/// One draw of the backward-recursion estimator:
///
/// ```text
/// q_t^3(x) = 2 Σ_{i<j} ∫_0^t ds p_{2r}(x_i - x_j) E q_s^2(U1, U2),   r = t - s,
/// ```
///
/// with `U1 ~ N((x_i + x_j)/2, r/2)` and `U2 ~ N(x_k, r)`. The split time
/// is drawn from the order-statistic density `2s/t²` and reweighted.
fn q3_backward_draw<R: Rng + ?Sized>(t: f64, x: &[&[f64]; 3], rng: &mut R) -> f64 {
    let d = x[0].len();
    let mut total = 0.0;
    let (mut u1, mut u2) = ([0.0f64; 3], [0.0f64; 3]);
    for &(i, j, k) in &OTHERS {
        let s = t * (1.0 - rng.random::<f64>()).sqrt();
        let r = t - s;
        let (sd1, sd2) = ((0.5 * r).sqrt(), r.sqrt());
        for a in 0..d {
            u1[a] = 0.5 * (x[i][a] + x[j][a]) + sd1 * gaussian(rng);
            u2[a] = x[k][a] + sd2 * gaussian(rng);
        }
        let dsq = dist_sq(&u1[..d], &u2[..d]);
        let msq: f64 = (0..d).map(|a| (0.5 * (u1[a] + u2[a])).powi(2)).sum();
        let weight = t * t / (2.0 * s);
        total += weight * heat_sq(dist_sq(x[i], x[j]), d, 2.0 * r) * q2_reduced(s, d, dsq, msq);
    }
    2.0 * total
}

fn triple_refs(xs: &PointTuple) -> [&[f64]; 3] {
    let p = xs.points();
    [p[0].coords(), p[1].coords(), p[2].coords()]
}

fn mc_estimate(seed: u64, reps: u64, draw: impl Fn(&mut crate::rng::StreamRng) -> f64 + Sync + Send) -> EstimateWithError {
    par::replicate_fold(seed, reps, RunningStats::new, |acc, _, rng| acc.push(draw(rng)), RunningStats::merge).estimate()
}

/// Forward-recursion Monte Carlo estimate of `q_t^3(xs)`.
pub fn q3_forward_mc(t: f64, xs: &PointTuple, reps: u64, seed: u64) -> Result<EstimateWithError> {
    require_triple(xs)?;
    let x = triple_refs(xs);
    Ok(mc_estimate(seed, reps, |rng| q3_forward_draw(t, &x, rng)))
}

/// Backward-recursion Monte Carlo estimate of `q_t^3(xs)`.
pub fn q3_backward_mc(t: f64, xs: &PointTuple, reps: u64, seed: u64) -> Result<EstimateWithError> {
    require_triple(xs)?;
    let x = triple_refs(xs);
    Ok(mc_estimate(seed, reps, |rng| q3_backward_draw(t, &x, rng)))
}

/// The three third-order estimators at one tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Q3Estimates {
    /// Kernel-smoothed uniform Brownian tree estimate.
    pub tree: EstimateWithError,
    /// Backward recursion.
    pub backward: EstimateWithError,
    /// Forward recursion.
    pub forward: EstimateWithError,
}

impl Q3Estimates {
    /// Whether the tree and backward estimators agree within `k` combined
    /// uncertainties.
    pub fn tree_backward_agree(&self, k: f64) -> bool {
        self.tree.agrees_with(&self.backward, k)
    }

    pub fn forward_backward_agree(&self, k: f64) -> bool {
        self.forward.agrees_with(&self.backward, k)
    }
}

/// Tree, backward and forward estimates of `q_t^3(xs)` from independent
/// streams derived from `seed`.
pub fn q3_cluster_mc(t: f64, xs: &PointTuple, reps: u64, seed: u64) -> Result<Q3Estimates> {
    require_triple(xs)?;
    let tree_reps = reps.max(1000) * 10;
    let bw = default_bandwidth(3, xs.dim(), t, tree_reps);
    Ok(Q3Estimates {
        tree: cluster_moment_density_mc(3, t, xs, tree_reps, bw, crate::rng::derive_seed(seed, 1))?,
        backward: q3_backward_mc(t, xs, reps, crate::rng::derive_seed(seed, 2))?,
        forward: q3_forward_mc(t, xs, reps, crate::rng::derive_seed(seed, 3))?,
    })
}

/// Monte Carlo estimate of `∫ q_t^3` over `(R^d)^3`: importance sampling
/// of the tuple from `N(0, 3t I)^{⊗3}` combined with a single forward
/// recursion draw per tuple.
pub fn q3_norm_mc(t: f64, d: usize, reps: u64, seed: u64) -> Result<EstimateWithError> {
    if !(t > 0.0) || !(1..=3).contains(&d) {
        return domain("norm estimate needs t > 0 and 1 <= d <= 3");
    }
    let var = 3.0 * t;
    Ok(mc_estimate(seed, reps, |rng| {
        let mut buf = [[0.0f64; 3]; 3];
        let mut log_g = 0.0;
        for p in buf.iter_mut() {
            for c in p.iter_mut().take(d) {
                *c = var.sqrt() * gaussian(rng);
            }
            log_g += log_heat_sq(norm_sq(&p[..d]), d, var);
        }
        let x = [&buf[0][..d], &buf[1][..d], &buf[2][..d]];
        q3_forward_draw(t, &x, rng) / log_g.exp()
    }))
}

/// Input of [`process_moment_density`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDensityRequest {
    pub n: usize,
    pub t: f64,
    pub d: usize,
    /// Initial measure; `None` asks for the single-cluster density `q_t^n`.
    #[serde(default)]
    pub mu: Option<DiscreteMeasure>,
    pub xs: PointTuple,
    /// Monte Carlo budget for third-order terms.
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_reps() -> u64 {
    100_000
}

/// `(μ * q_t^{|J|})(x_J)` for one block `J` of a partition. Third-order
/// blocks are forward-recursion Monte Carlo estimates.
fn block_density(mu: &DiscreteMeasure, t: f64, xs: &PointTuple, reps: u64, seed: u64) -> Result<EstimateWithError> {
    match xs.len() {
        1 => Ok(EstimateWithError::closed_form(convolve_heat(mu, t, xs)?)),
        2 => {
            let mut v = 0.0;
            for (u, m) in &mu.atoms {
                let sh = xs.shifted(u.coords());
                v += m * q2_cluster(t, &sh.points()[0], &sh.points()[1])?;
            }
            Ok(EstimateWithError::quadrature(v, QUAD_TOL * mu.total_mass()))
        }
        3 => {
            let mut acc = EstimateWithError::closed_form(0.0);
            for (a, (u, m)) in mu.atoms.iter().enumerate() {
                let e = q3_forward_mc(t, &xs.shifted(u.coords()), reps, crate::rng::derive_seed(seed, a as u64))?;
                acc = acc.add(&e.scale(*m));
            }
            Ok(acc)
        }
        n => Err(Error::UnsupportedOrder(n)),
    }
}

/// Set partitions of `0..n`, each as a list of blocks.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![Vec::new()];
    for i in 0..n {
        let mut next = Vec::new();
        for p in out {
            for b in 0..p.len() {
                let mut q: Vec<Vec<usize>> = p.clone();
                q[b].push(i);
                next.push(q);
            }
            let mut q = p.clone();
            q.push(vec![i]);
            next.push(q);
        }
        out = next;
    }
    out
}

/// Density of the `n`-th moment measure at `xs`: for an initial measure
/// `μ`, the partition sum `Σ_π Π_{J∈π} (μ * q_t^{|J|})(x_J)`; without `μ`,
/// the cluster density `q_t^n(xs)`.
pub fn process_moment_density(req: &MomentDensityRequest) -> Result<EstimateWithError> {
    let n = req.n;
    if n == 0 || n > 3 {
        return Err(Error::UnsupportedOrder(n));
    }
    if !(req.t > 0.0) {
        return domain("t must be positive");
    }
    if req.xs.len() != n || req.xs.dim() != req.d {
        return domain("xs must hold n points of dimension d");
    }
    if n > 1 && !req.xs.is_off_diagonal() {
        return domain("xs must be off-diagonal");
    }
    let origin = DiscreteMeasure { atoms: vec![(Point::origin(req.d), 1.0)] };
    let Some(mu) = &req.mu else {
        return block_density(&origin, req.t, &req.xs, req.reps, req.seed);
    };
    if mu.dim().is_some_and(|d| d != req.d) {
        return domain("measure dimension differs from d");
    }
    let mut total = EstimateWithError::closed_form(0.0);
    for (pi, partition) in set_partitions(n).into_iter().enumerate() {
        let mut term = EstimateWithError::closed_form(1.0);
        for block in &partition {
            let sub = req.xs.select(block);
            let seed = crate::rng::derive_seed(req.seed, pi as u64);
            term = term.mul(&block_density(mu, req.t, &sub, req.reps, seed)?);
        }
        total = total.add(&term);
    }
    Ok(total)
}

/// Mean, variance and third raw moment of the total mass `ξ_t(1)` for an
/// initial measure of mass `m`: `m`, `2tm`, `6t²m + 6tm² + m³`.
pub fn total_mass_moments(m: f64, t: f64) -> (f64, f64, f64) {
    (m, moment_norm(2, t) * m, moment_norm(3, t) * m + 3.0 * moment_norm(2, t) * m * m + m.powi(3))
}

/// The first-moment Campbell ratio `E[ξ_t(1) ξ_t(B)] / E[ξ_t(B)]` for the
/// ball `B = B(center, eps)`, from second-moment densities: the numerator
/// integrates `(μ * Q)(x) + μ(1) (μ * p_t)(x)` over `B`, with
/// `Q(x) = ∫ q_t^2(x, y) dy = 2t p_t(x)` (checked against [`q2_marginal`]
/// in the tests).
pub fn campbell_total_mass_ratio(mu: &DiscreteMeasure, t: f64, center: &Point, eps: f64) -> Result<f64> {
    let d = center.dim();
    if !(eps > 0.0) || d > 3 {
        return domain("need eps > 0 and d <= 3");
    }
    let radial = gauss_legendre_on(4, 0.0, eps);
    let rule = sphere_rule(d, 6);
    let mass = mu.total_mass();
    let (mut num, mut den) = (0.0, 0.0);
    for (r, wr) in radial.iter() {
        for (om, wo) in rule.0.iter().zip(&rule.1) {
            let w = wr * wo * r.powi(d as i32 - 1);
            let x: Vec<f64> = center.0.iter().zip(om).map(|(c, o)| c + r * o).collect();
            for (u, m) in &mu.atoms {
                let y = Point(x.iter().zip(&u.0).map(|(a, b)| a - b).collect());
                let p = heat_sq(y.norm_sq(), d, t);
                num += w * m * (2.0 * t * p + mass * p);
                den += w * m * p;
            }
        }
    }
    Ok(num / den)
}
