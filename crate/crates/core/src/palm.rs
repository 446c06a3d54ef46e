//! Hitting probabilities of small balls, Campbell-weighted Palm laws and
//! the local decoupling diagnostics.
//!
//! Every experiment here is a [`Scan`]: replicates of the particle system
//! simulated with [`crate::sim::simulate_local`], each scored at a ladder
//! of radii around a fixed set of centers. Only the neighbourhoods of the
//! balls (and of the boundary of the exterior region, when an exterior
//! statistic is requested) are resolved into particles.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::kernels::{convolve_heat, dist_sq, DiscreteMeasure, PointTuple};
use crate::moments::q2_reduced;
use crate::par::replicate_fold;
use crate::sim::{simulate_local, stationary_ball_mass_draws, LocalPlan, LocalWorkspace, MAX_DIM};
use crate::stats::{binomial_estimate, effective_sample_size, ks_weighted, spearman, EstimateWithError};

/// Mean of the Kolmogorov distribution: the large-sample mean of
/// `√n · D` for two samples from the same law.
const KS_NULL_MEAN: f64 = 0.868_731_160_636_24;

/// Shared replicate scoring setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub mu: DiscreteMeasure,
    pub t: f64,
    pub n_res: f64,
    pub centers: PointTuple,
    /// Ball radii; scored all at once on every replicate.
    pub eps: Vec<f64>,
    /// Radius of the balls around the centers whose union is the region
    /// `G`; the exterior statistic is the mass outside `G`.
    #[serde(default)]
    pub exterior_radius: Option<f64>,
    /// Age `h` of the clusters used by the multiplicity events.
    #[serde(default)]
    pub label_age: Option<f64>,
    pub reps: u64,
    pub seed: u64,
}

/// Everything recorded about a replicate in which all balls of the largest
/// radius were charged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub rep: u64,
    /// Particle counts, `counts[e * n + j]` for radius `e` and center `j`.
    pub counts: Vec<u32>,
    pub total: u64,
    pub exterior: u64,
    /// Per radius: one `h`-cluster charges two different balls.
    pub one_cluster_two_balls: Vec<bool>,
    /// Per radius: all balls charged and some ball charged by two
    /// `h`-clusters.
    pub one_ball_two_clusters: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub reps: u64,
    pub eps: Vec<f64>,
    pub n_centers: usize,
    /// `single_hits[e * n + j]`: replicates charging ball `j` at radius `e`.
    pub single_hits: Vec<u64>,
    /// Replicates charging every ball at radius `e`.
    pub joint_hits: Vec<u64>,
    pub one_cluster_two_balls: Vec<u64>,
    pub one_ball_two_clusters: Vec<u64>,
    /// Either multiplicity event.
    pub multiplicity: Vec<u64>,
    pub observations: Vec<Observation>,
    /// Particles generated with positions, summed over replicates.
    pub resolved_particles: u64,
}

impl ScanResult {
    fn empty(eps: &[f64], n: usize) -> Self {
        let k = eps.len();
        ScanResult {
            reps: 0,
            eps: eps.to_vec(),
            n_centers: n,
            single_hits: vec![0; k * n],
            joint_hits: vec![0; k],
            one_cluster_two_balls: vec![0; k],
            one_ball_two_clusters: vec![0; k],
            multiplicity: vec![0; k],
            observations: Vec::new(),
            resolved_particles: 0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.reps += other.reps;
        for (a, b) in self.single_hits.iter_mut().zip(&other.single_hits) {
            *a += b;
        }
        for (dst, src) in [
            (&mut self.joint_hits, &other.joint_hits),
            (&mut self.one_cluster_two_balls, &other.one_cluster_two_balls),
            (&mut self.one_ball_two_clusters, &other.one_ball_two_clusters),
            (&mut self.multiplicity, &other.multiplicity),
        ] {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
        self.observations.extend(other.observations);
        self.resolved_particles += other.resolved_particles;
        self
    }

    pub fn rung(&self, eps: f64) -> Result<usize> {
        self.eps
            .iter()
            .position(|&e| (e - eps).abs() <= 1e-12 * eps)
            .ok_or_else(|| Error::Domain(format!("radius {eps} was not scanned")))
    }

    pub fn joint(&self, e: usize) -> EstimateWithError {
        binomial_estimate(self.joint_hits[e], self.reps)
    }

    pub fn single(&self, e: usize, j: usize) -> EstimateWithError {
        binomial_estimate(self.single_hits[e * self.n_centers + j], self.reps)
    }

    /// Observations charging all balls at rung `e`.
    pub fn joint_observations(&self, e: usize) -> impl Iterator<Item = &Observation> {
        let n = self.n_centers;
        self.observations.iter().filter(move |o| o.counts[e * n..(e + 1) * n].iter().all(|&c| c > 0))
    }

    /// Fails with a budget error when rung `e` saw fewer than 10 joint hits.
    pub fn require_hits(&self, e: usize) -> Result<()> {
        let hits = self.joint_hits[e];
        if hits < 10 {
            let suggested = self.reps.saturating_mul(100) / hits.max(1);
            return Err(Error::Budget {
                message: format!("only {hits} joint hits at eps = {} in {} replicates", self.eps[e], self.reps),
                suggested_reps: suggested,
            });
        }
        Ok(())
    }
}

impl Scan {
    /// Checks the preconditions of [`Scan::run`] and of the simulator.
    pub fn validate_public(&self) -> Result<()> {
        self.validate()?;
        let mut rng = crate::rng::stream_rng(self.seed, u64::MAX);
        simulate_local(&self.mu, self.t, self.n_res, &self.plan(), &mut rng, &mut LocalWorkspace::default(), |_, _| false, |_, _| {}, |_, _| {})
            .map(|_| ())
    }

    fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return domain("t must be positive");
        }
        let n = self.centers.len();
        if n == 0 {
            return domain("at least one center is needed");
        }
        let d = self.centers.dim();
        if self.mu.dim() != Some(d) || d > MAX_DIM {
            return domain("centers and initial measure must share a dimension <= 4");
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0)) {
            return domain("radii must be positive");
        }
        if n > 1 {
            if !self.centers.is_off_diagonal() {
                return domain("centers must be distinct");
            }
            let min_dist = self.centers.diagonal_distance() * std::f64::consts::SQRT_2;
            if self.max_eps() >= 0.5 * min_dist {
                return domain("radii must be below half the smallest center distance");
            }
        }
        if let Some(r) = self.exterior_radius {
            if !(r > self.max_eps()) {
                return config("exterior radius must exceed every ball radius");
            }
        }
        if let Some(h) = self.label_age {
            if !(h > 0.0 && h < self.t) {
                return config("cluster age h must lie in (0, t)");
            }
        }
        if self.reps == 0 {
            return config("reps must be positive");
        }
        Ok(())
    }

    fn max_eps(&self) -> f64 {
        self.eps.iter().copied().fold(0.0, f64::max)
    }

    fn plan(&self) -> LocalPlan {
        let min_eps = self.eps.iter().copied().fold(f64::INFINITY, f64::min);
        let required: Vec<f64> = self.label_age.into_iter().collect();
        LocalPlan::geometric(self.t, (0.25 * min_eps).powi(2), &required)
    }

    /// Runs the replicates (in parallel when enabled; the result does not
    /// depend on the worker count).
    pub fn run(&self) -> Result<ScanResult> {
        self.validate_public()?;
        let plan = self.plan();
        let label_level = self.label_age.map(|h| plan.ages.iter().position(|&a| (a - h).abs() <= 1e-12 * self.t).expect("merged into plan"));
        let n = self.centers.len();
        let d = self.centers.dim();
        let k = self.eps.len();
        let centers: Vec<[f64; MAX_DIM]> = self
            .centers
            .points()
            .iter()
            .map(|p| {
                let mut c = [0.0; MAX_DIM];
                c[..d].copy_from_slice(p.coords());
                c
            })
            .collect();
        let eps2: Vec<f64> = self.eps.iter().map(|e| e * e).collect();
        let max_eps = self.max_eps();
        let max_slot = self.eps.iter().position(|&e| e == max_eps).expect("nonempty");
        let g = self.exterior_radius;

        let result = replicate_fold(
            self.seed,
            self.reps,
            || (ScanResult::empty(&self.eps, n), LocalWorkspace::default()),
            |(acc, ws), rep, rng| {
                let mut counts = vec![0u32; k * n];
                let mut labels: Vec<Vec<u64>> = vec![Vec::new(); k * n];
                let exterior = std::cell::Cell::new(0u64);
                let resolve = |u: &[f64], r: f64| {
                    centers.iter().any(|c| {
                        let dist = dist_sq(u, &c[..d]).sqrt();
                        dist < max_eps + r || g.is_some_and(|gr| (dist - gr).abs() < r)
                    })
                };
                let outside_g = |x: &[f64]| g.is_some_and(|gr| centers.iter().all(|c| dist_sq(x, &c[..d]) >= gr * gr));
                let summary = simulate_local(
                    &self.mu,
                    self.t,
                    self.n_res,
                    &plan,
                    rng,
                    ws,
                    resolve,
                    |u, count| {
                        if outside_g(u) {
                            exterior.set(exterior.get() + count);
                        }
                    },
                    |x, lab| {
                        if outside_g(x) {
                            exterior.set(exterior.get() + 1);
                        }
                        for (j, c) in centers.iter().enumerate() {
                            let r2 = dist_sq(x, &c[..d]);
                            if r2 >= max_eps * max_eps {
                                continue;
                            }
                            for e in 0..k {
                                if r2 < eps2[e] {
                                    counts[e * n + j] += 1;
                                    if let Some(l) = label_level {
                                        labels[e * n + j].push(lab[l]);
                                    }
                                }
                            }
                        }
                    },
                )
                .expect("validated before the run");
                acc.reps += 1;
                acc.resolved_particles += summary.resolved;
                let mut oc = vec![false; k];
                let mut ob = vec![false; k];
                for e in 0..k {
                    let row = &counts[e * n..(e + 1) * n];
                    for (j, &c) in row.iter().enumerate() {
                        acc.single_hits[e * n + j] += (c > 0) as u64;
                    }
                    let all = row.iter().all(|&c| c > 0);
                    acc.joint_hits[e] += all as u64;
                    if label_level.is_some() {
                        let sets: Vec<Vec<u64>> = labels[e * n..(e + 1) * n]
                            .iter()
                            .map(|v| {
                                let mut v = v.clone();
                                v.sort_unstable();
                                v.dedup();
                                v
                            })
                            .collect();
                        oc[e] = (0..n).any(|a| (a + 1..n).any(|b| sets[a].iter().any(|l| sets[b].binary_search(l).is_ok())));
                        ob[e] = all && sets.iter().any(|s| s.len() >= 2);
                        acc.one_cluster_two_balls[e] += oc[e] as u64;
                        acc.one_ball_two_clusters[e] += ob[e] as u64;
                        acc.multiplicity[e] += (oc[e] || ob[e]) as u64;
                    }
                }
                if counts[max_slot * n..(max_slot + 1) * n].iter().all(|&c| c > 0) {
                    acc.observations.push(Observation {
                        rep,
                        counts,
                        total: summary.particles,
                        exterior: exterior.get(),
                        one_cluster_two_balls: oc,
                        one_ball_two_clusters: ob,
                    });
                }
            },
            |(a, w), (b, _)| (a.merge(b), w),
        );
        Ok(result.0)
    }
}

/// Request for the probability that all `n` balls `B(x_j, ε)` are charged
/// at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingRequest {
    pub mu: DiscreteMeasure,
    pub t: f64,
    pub n_res: f64,
    pub centers: PointTuple,
    pub eps: f64,
    pub reps: u64,
    pub seed: u64,
}

impl HittingRequest {
    fn scan(&self, extra_eps: &[f64]) -> Scan {
        let mut eps = vec![self.eps];
        eps.extend_from_slice(extra_eps);
        Scan {
            mu: self.mu.clone(),
            t: self.t,
            n_res: self.n_res,
            centers: self.centers.clone(),
            eps,
            exterior_radius: None,
            label_age: None,
            reps: self.reps,
            seed: self.seed,
        }
    }
}

/// Empirical joint hitting probability with binomial standard error.
pub fn estimate_hitting(req: &HittingRequest) -> Result<EstimateWithError> {
    let res = req.scan(&[]).run()?;
    res.require_hits(0)?;
    Ok(res.joint(0))
}

/// `R(ε) = ε^{2-d} P̂ / (μ * p_t)(x)` for a single center.
pub fn scale_ratio(res: &ScanResult, e: usize, mu: &DiscreteMeasure, t: f64, centers: &PointTuple) -> Result<EstimateWithError> {
    let d = centers.dim() as i32;
    let density = convolve_heat(mu, t, centers)?;
    Ok(res.joint(e).scale(res.eps[e].powi(2 - d) / density))
}

/// `R(ε₁)/R(ε₂)` from two rungs of the same scan, with a delta-method
/// standard error using the nesting of the events (`ε₁ < ε₂`).
pub fn scale_stability(res: &ScanResult, e_small: usize, e_large: usize, d: usize) -> EstimateWithError {
    let (hs, hl) = (res.joint_hits[e_small] as f64, res.joint_hits[e_large] as f64);
    let (ps, pl) = (hs / res.reps as f64, hl / res.reps as f64);
    let factor = (res.eps[e_small] / res.eps[e_large]).powi(2 - d as i32);
    let value = factor * ps / pl;
    // Nested events: Cov(1_s, 1_l) = ps (1 - pl).
    let n = res.reps as f64;
    let var_log = ((1.0 - ps) / ps + (1.0 - pl) / pl - 2.0 * (1.0 - pl) / pl) / n;
    EstimateWithError::monte_carlo(value, value * var_log.max(0.0).sqrt(), res.reps)
}

/// `q_{μ,t}(x1, x2) / (q_{μ,t}(x1) q_{μ,t}(x2))`: the same ratio for the
/// moment densities of the process.
pub fn moment_ratio(mu: &DiscreteMeasure, t: f64, centers: &PointTuple) -> Result<f64> {
    if centers.len() != 2 {
        return domain("moment ratio needs two centers");
    }
    let d = centers.dim();
    let (x1, x2) = (centers.points()[0].coords(), centers.points()[1].coords());
    let mut q2 = 0.0;
    for (a, m) in &mu.atoms {
        let u = a.coords();
        let y1: Vec<f64> = x1.iter().zip(u).map(|(x, c)| x - c).collect();
        let y2: Vec<f64> = x2.iter().zip(u).map(|(x, c)| x - c).collect();
        let dsq = dist_sq(&y1, &y2);
        let mid: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 0.5 * (a + b)).collect();
        q2 += m * q2_reduced(t, d, dsq, crate::kernels::norm_sq(&mid));
    }
    let q1a = convolve_heat(mu, t, &centers.select(&[0]))?;
    let q1b = convolve_heat(mu, t, &centers.select(&[1]))?;
    Ok((q2 + q1a * q1b) / (q1a * q1b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub eps: f64,
    pub joint: EstimateWithError,
    pub marginals: [EstimateWithError; 2],
    /// `P̂_joint / (P̂_1 P̂_2)`.
    pub empirical_ratio: EstimateWithError,
    pub moment_ratio: f64,
    /// `empirical_ratio / moment_ratio`.
    pub ratio_of_ratios: EstimateWithError,
}

/// Delta-method ratio `P_J/(P_A P_B)` for indicator frequencies with
/// `J = A ∩ B`.
fn factorization_ratio(j: u64, a: u64, b: u64, n: u64) -> EstimateWithError {
    let nf = n as f64;
    let (pj, pa, pb) = (j as f64 / nf, a as f64 / nf, b as f64 / nf);
    let value = pj / (pa * pb);
    let grad = [1.0 / pj, -1.0 / pa, -1.0 / pb];
    let cov = [[pj * (1.0 - pj), pj * (1.0 - pa), pj * (1.0 - pb)], [pj * (1.0 - pa), pa * (1.0 - pa), pj - pa * pb], [
        pj * (1.0 - pb),
        pj - pa * pb,
        pb * (1.0 - pb),
    ]];
    let mut var = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            var += grad[r] * cov[r][c] * grad[c];
        }
    }
    EstimateWithError::monte_carlo(value, value * (var.max(0.0) / nf).sqrt(), n)
}

pub fn factorization_at(res: &ScanResult, e: usize, moment_ratio: f64) -> Result<Factorization> {
    if res.n_centers != 2 {
        return domain("factorization needs two centers");
    }
    res.require_hits(e)?;
    let empirical = factorization_ratio(res.joint_hits[e], res.single_hits[2 * e], res.single_hits[2 * e + 1], res.reps);
    Ok(Factorization {
        eps: res.eps[e],
        joint: res.joint(e),
        marginals: [res.single(e, 0), res.single(e, 1)],
        ratio_of_ratios: empirical.scale(1.0 / moment_ratio),
        empirical_ratio: empirical,
        moment_ratio,
    })
}

/// Joint versus marginal hitting at two centers, compared with the
/// corresponding ratio of moment densities.
pub fn joint_hitting_factorization(req: &HittingRequest) -> Result<Factorization> {
    if req.centers.len() != 2 {
        return domain("factorization needs two centers");
    }
    let ratio = moment_ratio(&req.mu, req.t, &req.centers)?;
    let res = req.scan(&[]).run()?;
    factorization_at(&res, 0, ratio)
}

/// Functionals available for Palm comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    TotalMass,
    /// Mass outside the union of the exterior-radius balls.
    ExteriorMass,
}

impl Functional {
    fn eval(self, o: &Observation, n_res: f64) -> f64 {
        match self {
            Functional::TotalMass => o.total as f64 / n_res,
            Functional::ExteriorMass => o.exterior as f64 / n_res,
        }
    }
}

/// Weighted empirical law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.values.iter().copied().zip(self.weights.iter().copied()).collect()
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(self.weights.iter().copied())
    }

    /// Weighted mean with a delta-method (ratio estimator) standard error.
    /// Replicates with zero weight count towards `reps`.
    pub fn weighted_mean(&self, reps: u64) -> EstimateWithError {
        let pairs: Vec<(f64, f64)> = self.values.iter().zip(&self.weights).map(|(v, w)| (v * w, *w)).collect();
        let n = reps as f64;
        let (sa, sb) = pairs.iter().fold((0.0, 0.0), |(x, y), (a, b)| (x + a, y + b));
        let r = sa / sb;
        let var = pairs.iter().map(|(a, b)| (a - r * b).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        EstimateWithError::monte_carlo(r, (var / n).sqrt() / (sb / n), reps)
    }
}

/// Campbell-weighted law of a functional at rung `e`: each replicate is
/// weighted by the product of its ball masses. `filter` selects the
/// replicates used (all of them by default).
pub fn campbell_weights(res: &ScanResult, e: usize, f: Functional, n_res: f64, filter: impl Fn(u64) -> bool) -> Result<WeightedSample> {
    let n = res.n_centers;
    let mut out = WeightedSample { values: Vec::new(), weights: Vec::new() };
    for o in res.joint_observations(e).filter(|o| filter(o.rep)) {
        let w: f64 = o.counts[e * n..(e + 1) * n].iter().map(|&c| c as f64 / n_res).product();
        out.values.push(f.eval(o, n_res));
        out.weights.push(w);
    }
    if out.weights.is_empty() {
        return Err(Error::Budget { message: "all Campbell weights are zero".into(), suggested_reps: res.reps.saturating_mul(10) });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampbellRequest {
    pub mu: DiscreteMeasure,
    pub t: f64,
    pub n_res: f64,
    pub centers: PointTuple,
    pub eps: f64,
    pub functional: Functional,
    #[serde(default)]
    pub exterior_radius: Option<f64>,
    pub reps: u64,
    pub seed: u64,
}

/// Campbell-weighted sample of the functional: a consistent estimate of
/// its Palm law smeared over the balls.
pub fn campbell_palm_estimate(req: &CampbellRequest) -> Result<WeightedSample> {
    if req.functional == Functional::ExteriorMass && req.exterior_radius.is_none() {
        return config("the exterior functional needs an exterior radius");
    }
    let scan = Scan {
        mu: req.mu.clone(),
        t: req.t,
        n_res: req.n_res,
        centers: req.centers.clone(),
        eps: vec![req.eps],
        exterior_radius: req.exterior_radius,
        label_age: None,
        reps: req.reps,
        seed: req.seed,
    };
    let res = scan.run()?;
    campbell_weights(&res, 0, req.functional, req.n_res, |_| true)
}

/// A KS distance with its large-sample null bias removed and a
/// standard-error proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub raw: f64,
    /// Effective two-sample size `n₁n₂/(n₁+n₂)`.
    pub n_eff: f64,
    /// `raw - E[D | same law]`, the null mean approximated by the
    /// Kolmogorov limit; may be negative.
    pub debiased: f64,
    /// `1/(2√n_eff)`, the binomial bound on the standard error of a CDF
    /// difference.
    pub stderr: f64,
}

impl Distance {
    pub fn between(a: &[(f64, f64)], b: &[(f64, f64)]) -> Self {
        let raw = ks_weighted(a, b);
        let na = effective_sample_size(a.iter().map(|p| p.1));
        let nb = effective_sample_size(b.iter().map(|p| p.1));
        let n_eff = na * nb / (na + nb);
        Distance { raw, n_eff, debiased: raw - KS_NULL_MEAN / n_eff.sqrt(), stderr: 0.5 / n_eff.sqrt() }
    }
}

/// One rung of the decoupling ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingRung {
    pub eps: f64,
    pub joint_hits: u64,
    /// |Spearman correlation| between the rescaled ball masses given a
    /// joint hit, with the Fisher standard error `1/√(n-3)`.
    pub dependence: EstimateWithError,
    /// Per center: conditional ball-mass law against the stationary-cluster
    /// law at the same radius.
    pub ball_vs_stationary: Vec<Distance>,
    /// Exterior mass given a joint hit (even replicates) against its
    /// Campbell-weighted law (odd replicates).
    pub exterior_vs_palm: Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub rungs: Vec<DecouplingRung>,
    pub stationary_clusters: usize,
}

impl DecouplingReport {
    /// The three tracked distances per rung (dependence, worst ball law,
    /// exterior law) as `(value, stderr)`.
    pub fn series(&self) -> [Vec<(f64, f64)>; 3] {
        let dep = self.rungs.iter().map(|r| (r.dependence.value, r.dependence.stderr)).collect();
        let ball = self
            .rungs
            .iter()
            .map(|r| {
                let worst = r.ball_vs_stationary.iter().max_by(|a, b| a.debiased.total_cmp(&b.debiased)).expect("n >= 1");
                (worst.debiased, worst.stderr)
            })
            .collect();
        let ext = self.rungs.iter().map(|r| (r.exterior_vs_palm.debiased, r.exterior_vs_palm.stderr)).collect();
        [dep, ball, ext]
    }
}

/// True when each value is at most the previous one plus twice the
/// combined standard error.
pub fn monotone_within_errors(series: &[(f64, f64)]) -> bool {
    series.windows(2).all(|w| w[1].0 <= w[0].0 + 2.0 * w[0].1.hypot(w[1].1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingRequest {
    pub mu: DiscreteMeasure,
    pub t: f64,
    pub n_res: f64,
    pub centers: PointTuple,
    /// Radius of the balls forming `G`; the exterior statistic is the
    /// mass in the complement.
    pub exterior_radius: f64,
    pub eps: Vec<f64>,
    pub reps: u64,
    /// Stationary clusters per rung for the reference law.
    pub stationary_clusters: usize,
    pub seed: u64,
}

pub fn decoupling_experiment(req: &DecouplingRequest) -> Result<DecouplingReport> {
    let scan = Scan {
        mu: req.mu.clone(),
        t: req.t,
        n_res: req.n_res,
        centers: req.centers.clone(),
        eps: req.eps.clone(),
        exterior_radius: Some(req.exterior_radius),
        label_age: None,
        reps: req.reps,
        seed: req.seed,
    };
    let res = scan.run()?;
    decoupling_from_scan(&res, req)
}

/// The decoupling report computed from an existing scan (which must
/// include an exterior radius).
pub fn decoupling_from_scan(res: &ScanResult, req: &DecouplingRequest) -> Result<DecouplingReport> {
    let n = res.n_centers;
    let d = req.centers.dim();
    let mut rungs = Vec::new();
    for (e, &eps) in res.eps.iter().enumerate() {
        res.require_hits(e)?;
        let scale = 1.0 / (eps * eps * req.n_res);
        let obs: Vec<&Observation> = res.joint_observations(e).collect();
        let masses: Vec<Vec<f64>> = (0..n).map(|j| obs.iter().map(|o| o.counts[e * n + j] as f64 * scale).collect()).collect();
        let dependence = if n >= 2 {
            let m = obs.len() as f64;
            EstimateWithError::monte_carlo(spearman(&masses[0], &masses[1]).abs(), 1.0 / (m - 3.0).max(1.0).sqrt(), obs.len() as u64)
        } else {
            EstimateWithError::closed_form(0.0)
        };
        let mut rng = crate::rng::stream_rng(crate::rng::derive_seed(req.seed, 0x5747), e as u64);
        let reference: Vec<(f64, f64)> = stationary_ball_mass_draws(req.t, req.n_res, d, eps, req.stationary_clusters, 1, &mut rng)?
            .into_iter()
            .flatten()
            .map(|(m, w)| (m / (eps * eps), w))
            .collect();
        let ball_vs_stationary = masses
            .iter()
            .map(|m| Distance::between(&m.iter().map(|&x| (x, 1.0)).collect::<Vec<_>>(), &reference))
            .collect();
        let conditioned: Vec<(f64, f64)> =
            obs.iter().filter(|o| o.rep % 2 == 0).map(|o| (Functional::ExteriorMass.eval(o, req.n_res), 1.0)).collect();
        let palm = campbell_weights(res, e, Functional::ExteriorMass, req.n_res, |r| r % 2 == 1)?;
        rungs.push(DecouplingRung {
            eps,
            joint_hits: res.joint_hits[e],
            dependence,
            ball_vs_stationary,
            exterior_vs_palm: Distance::between(&conditioned, &palm.pairs()),
        });
    }
    Ok(DecouplingReport { rungs, stationary_clusters: req.stationary_clusters })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityRequest {
    pub mu: DiscreteMeasure,
    pub t: f64,
    pub n_res: f64,
    pub centers: PointTuple,
    pub eps: f64,
    pub h: f64,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub one_cluster_two_balls: EstimateWithError,
    pub one_ball_two_clusters: EstimateWithError,
    /// Either event.
    pub multiplicity: EstimateWithError,
    pub joint: EstimateWithError,
    /// `multiplicity / joint` with a delta-method error (the events are
    /// not nested, so the binomial covariance is bounded by zero).
    pub ratio: EstimateWithError,
}

/// Checks `ε² < h`, and `h ≤ ε` in dimension 3 or more.
pub fn check_regime(eps: f64, h: f64, d: usize) -> Result<()> {
    if !(eps * eps < h) || (d >= 3 && h > eps) {
        return config(format!("eps = {eps}, h = {h} violates eps^2 < h <= eps"));
    }
    Ok(())
}

pub fn multiplicity_diagnostics(req: &MultiplicityRequest) -> Result<MultiplicityReport> {
    check_regime(req.eps, req.h, req.centers.dim())?;
    let scan = Scan {
        mu: req.mu.clone(),
        t: req.t,
        n_res: req.n_res,
        centers: req.centers.clone(),
        eps: vec![req.eps],
        exterior_radius: None,
        label_age: Some(req.h),
        reps: req.reps,
        seed: req.seed,
    };
    let res = scan.run()?;
    res.require_hits(0)?;
    Ok(multiplicity_from_scan(&res, 0))
}

pub fn multiplicity_from_scan(res: &ScanResult, e: usize) -> MultiplicityReport {
    let joint = res.joint(e);
    let multiplicity = binomial_estimate(res.multiplicity[e], res.reps);
    let ratio_value = multiplicity.value / joint.value;
    let rel = ((multiplicity.stderr / multiplicity.value.max(f64::MIN_POSITIVE)).powi(2) + (joint.stderr / joint.value).powi(2)).sqrt();
    MultiplicityReport {
        one_cluster_two_balls: binomial_estimate(res.one_cluster_two_balls[e], res.reps),
        one_ball_two_clusters: binomial_estimate(res.one_ball_two_clusters[e], res.reps),
        ratio: EstimateWithError::monte_carlo(ratio_value, ratio_value * rel, res.reps),
        multiplicity,
        joint,
    }
}
