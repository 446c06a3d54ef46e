//! Branching Brownian particle approximation of the DW-process.
//!
//! At resolution `N` every particle carries mass `1/N`, lives an `Exp(2N)`
//! lifetime while moving as a standard Brownian motion, and is then
//! replaced by zero or two children with probability ½ each. The branching
//! skeleton is therefore a critical birth–death process with per-capita
//! birth and death rates `λ = N`.
//!
//! The production engine samples this system exactly in law without
//! simulating individual events. A particle's family survives to time `T`
//! with probability `1/(1 + λT)`. Given survival, its time-`T` population,
//! read in planar order, has the genealogy of a coalescent point process:
//! the coalescence depths `H_1, H_2, …` between consecutive survivors are
//! i.i.d. with `P{H > h} = 1/(1 + λh)`, and the family ends at the first
//! depth `H ≥ T`. Spatial positions follow from Brownian motion indexed by
//! that tree, generated leaf by leaf from a stack of known path points (see
//! the `walk` function). The cost is linear in the number of particles
//! alive at the end, not in the number of branching events.
//!
//! [`simulate_field_event_driven`] is a direct event-by-event simulation of
//! the same particle system, used to cross-check the coalescent engine at
//! small `N`.

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::kernels::{DiscreteMeasure, Point};

/// Largest spatial dimension supported by the particle engines.
pub const MAX_DIM: usize = 4;

type Coords = [f64; MAX_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Point,
    pub mass: f64,
    pub ancestor_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FromMeasure,
    SingleCluster,
    StationaryCluster,
}

/// Ancestor labels with respect to an intermediate time `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub s: f64,
    /// Total mass `ξ_s(1)` at the checkpoint.
    pub mass: f64,
    /// For each particle of the field (same order), the index of its time-`s`
    /// ancestor.
    pub labels: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleField {
    pub particles: Vec<Particle>,
    pub t: f64,
    pub n_res: f64,
    pub d: usize,
    pub provenance: Provenance,
    #[serde(default)]
    pub checkpoint: Option<Checkpoint>,
}

impl ParticleField {
    pub fn total_mass(&self) -> f64 {
        self.particles.len() as f64 / self.n_res
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Mass carried by particles with the given ancestor label.
    pub fn restrict(&self, ancestor: u64) -> ParticleField {
        ParticleField {
            particles: self.particles.iter().filter(|p| p.ancestor_id == ancestor).cloned().collect(),
            checkpoint: None,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> ParticleField {
        ParticleField {
            particles: Vec::new(),
            t: self.t,
            n_res: self.n_res,
            d: self.d,
            provenance: self.provenance,
            checkpoint: None,
        }
    }
}

/// A surviving cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub field: ParticleField,
    pub root: Point,
    pub age: f64,
}

/// One particle alive at the final time, as reported to a sink.
#[derive(Debug, Clone, Copy)]
pub struct Leaf<'a> {
    pub pos: &'a [f64],
    /// Index of the surviving time-0 ancestor family.
    pub family: u64,
    /// Index of the time-`s` ancestor when a checkpoint is requested, the
    /// family index otherwise.
    pub label: u64,
}

/// Totals of one streamed simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunSummary {
    pub particles: u64,
    /// Time-0 ancestors with descendants at the final time.
    pub families: u64,
    /// Time-`s` ancestors with descendants at the final time.
    pub labels: u64,
    /// Particle count at the checkpoint, if one was requested.
    pub checkpoint_particles: Option<u64>,
}

/// Scratch space reused across families and replicates.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    stack: Vec<(f64, Coords)>,
    kept: Vec<Coords>,
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Coalescence depth of the critical birth–death coalescent point process:
/// `P{H > h} = 1/(1 + λh)`.
#[inline]
fn cpp_depth<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if u == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / u - 1.0) / lambda
    }
}

/// Generates the positions of a family's particles at depth 0 of a tree of
/// height `horizon` rooted at `root`.
///
/// `next_depth` yields the coalescence depth between the current and the
/// next particle, or `None` after the last one. Each particle is kept with
/// probability `keep`; kept particles are passed to `emit` with their
/// position, and skipped ones only counted. The coalescence depth between
/// consecutive kept particles is the largest depth in between, so skipping
/// is exact.
///
/// The stack holds `(depth, position)` points of the path from the root to
/// the last kept particle, with strictly decreasing depth. A new particle
/// branching at depth `h` takes its branch point from the Brownian bridge
/// between the two stack points that bracket `h`; points below `h` are no
/// longer on any future path and are discarded.
#[allow(clippy::too_many_arguments)]
fn walk<R: Rng + ?Sized>(
    root: &[f64],
    horizon: f64,
    keep: f64,
    rng: &mut R,
    ws: &mut Workspace,
    mut next_depth: impl FnMut(&mut R) -> Option<f64>,
    mut emit: impl FnMut(&[f64]),
) -> u64 {
    let d = root.len();
    let stack = &mut ws.stack;
    stack.clear();
    let mut r0 = [0.0; MAX_DIM];
    r0[..d].copy_from_slice(root);
    stack.push((horizon, r0));
    let mut count = 0u64;
    let mut pending = horizon;
    loop {
        count += 1;
        if keep >= 1.0 || rng.random::<f64>() < keep {
            let h = pending;
            let mut lo: Option<(f64, Coords)> = None;
            while stack.last().is_some_and(|e| e.0 < h) {
                lo = stack.pop();
            }
            let &(d_hi, x_hi) = stack.last().expect("root depth bounds every branch depth");
            let x_h = match lo {
                Some((d_lo, x_lo)) if d_hi > h => {
                    let span = d_hi - d_lo;
                    let f = (d_hi - h) / span;
                    let sd = ((d_hi - h) * (h - d_lo) / span).max(0.0).sqrt();
                    let mut x = [0.0; MAX_DIM];
                    for a in 0..d {
                        x[a] = x_hi[a] + f * (x_lo[a] - x_hi[a]) + sd * normal(rng);
                    }
                    stack.push((h, x));
                    x
                }
                _ => x_hi,
            };
            let sd = h.sqrt();
            let mut leaf = [0.0; MAX_DIM];
            for a in 0..d {
                leaf[a] = x_h[a] + sd * normal(rng);
            }
            stack.push((0.0, leaf));
            emit(&leaf[..d]);
            pending = 0.0;
        }
        match next_depth(rng) {
            Some(h) => pending = pending.max(h),
            None => return count,
        }
    }
}

/// One family conditioned to survive over `horizon`: the standard
/// coalescent point process, ending at the first depth `≥ horizon`.
fn survivor_family<R: Rng + ?Sized>(
    root: &[f64],
    lambda: f64,
    horizon: f64,
    keep: f64,
    rng: &mut R,
    ws: &mut Workspace,
    emit: impl FnMut(&[f64]),
) -> u64 {
    walk(
        root,
        horizon,
        keep,
        rng,
        ws,
        |r| {
            let h = cpp_depth(lambda, r);
            (h < horizon).then_some(h)
        },
        emit,
    )
}

fn validate_measure(mu: &DiscreteMeasure, t: f64, n_res: f64) -> Result<usize> {
    if !(t > 0.0) {
        return domain("simulation time must be positive");
    }
    if !(n_res >= 100.0) {
        return config(format!("resolution N must be at least 100, got {n_res}"));
    }
    let Some(d) = mu.dim() else {
        return config("initial measure has no atoms");
    };
    if d == 0 || d > MAX_DIM {
        return domain(format!("dimension must be in 1..={MAX_DIM}"));
    }
    if n_res * mu.total_mass() < 10.0 {
        return config(format!(
            "N = {n_res} resolves only {:.3} initial particles; need at least 10",
            n_res * mu.total_mass()
        ));
    }
    Ok(d)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    }
}

/// Streams one realization of the particle system started from
/// `Poisson(N μ)` particles, calling `sink` once per particle alive at time
/// `t`.
///
/// Families are processed atom by atom; an atom of mass `m` contributes
/// `Poisson(N m / (1 + N t))` surviving time-0 ancestors, the thinning of
/// the `Poisson(N m)` initial particles by their survival probability.
///
/// With `checkpoint = Some(s)`, `0 < s < t`, the families are first grown
/// to time `s`, every time-`s` particle is counted, and each one's
/// survival to `t` is decided independently with probability
/// `1/(1 + N(t - s))`; survivors seed fresh families over `[s, t]` whose
/// particles carry the time-`s` ancestor index as `label`.
pub fn simulate_streaming<R: Rng + ?Sized>(
    mu: &DiscreteMeasure,
    t: f64,
    n_res: f64,
    checkpoint: Option<f64>,
    rng: &mut R,
    ws: &mut Workspace,
    mut sink: impl FnMut(Leaf<'_>),
) -> Result<RunSummary> {
    let d = validate_measure(mu, t, n_res)?;
    let lambda = n_res;
    let mut summary = RunSummary::default();
    match checkpoint {
        Some(s) if !(s > 0.0 && s < t) && s != 0.0 => {
            return domain(format!("checkpoint {s} must lie in [0, t)"));
        }
        Some(s) if s > 0.0 => {
            let h = t - s;
            let keep = 1.0 / (1.0 + lambda * h);
            let mut at_s = 0u64;
            let mut kept = std::mem::take(&mut ws.kept);
            for (atom, m) in &mu.atoms {
                let families = poisson(lambda * m / (1.0 + lambda * s), rng);
                for _ in 0..families {
                    kept.clear();
                    at_s += survivor_family(atom.coords(), lambda, s, keep, rng, ws, |x| {
                        let mut c = [0.0; MAX_DIM];
                        c[..d].copy_from_slice(x);
                        kept.push(c);
                    });
                    if kept.is_empty() {
                        continue;
                    }
                    let family = summary.families;
                    summary.families += 1;
                    for c in kept.iter() {
                        let label = summary.labels;
                        summary.labels += 1;
                        summary.particles += survivor_family(&c[..d], lambda, h, 1.0, rng, ws, |x| {
                            sink(Leaf { pos: x, family, label })
                        });
                    }
                }
            }
            ws.kept = kept;
            summary.checkpoint_particles = Some(at_s);
        }
        _ => {
            for (atom, m) in &mu.atoms {
                let families = poisson(lambda * m / (1.0 + lambda * t), rng);
                for _ in 0..families {
                    let family = summary.families;
                    summary.families += 1;
                    summary.particles += survivor_family(atom.coords(), lambda, t, 1.0, rng, ws, |x| {
                        sink(Leaf { pos: x, family, label: family })
                    });
                }
            }
            summary.labels = summary.families;
            if checkpoint == Some(0.0) {
                // The time-0 population itself is Poisson(N μ(1)).
                summary.checkpoint_particles = Some(poisson(lambda * mu.total_mass(), rng));
            }
        }
    }
    Ok(summary)
}

/// One realization of the time-`t` field started from `μ`, with ancestor
/// ids naming the surviving time-0 ancestors.
pub fn simulate_field<R: Rng + ?Sized>(mu: &DiscreteMeasure, t: f64, n_res: f64, rng: &mut R) -> Result<ParticleField> {
    simulate_field_checkpointed(mu, t, n_res, None, rng)
}

/// As [`simulate_field`], additionally retaining time-`s` ancestor labels
/// for [`rebase_ancestors`].
pub fn simulate_field_checkpointed<R: Rng + ?Sized>(
    mu: &DiscreteMeasure,
    t: f64,
    n_res: f64,
    checkpoint: Option<f64>,
    rng: &mut R,
) -> Result<ParticleField> {
    let mut particles = Vec::new();
    let mut labels = Vec::new();
    let mass = 1.0 / n_res;
    let summary = simulate_streaming(mu, t, n_res, checkpoint, rng, &mut Workspace::default(), |leaf| {
        particles.push(Particle { position: Point(leaf.pos.to_vec()), mass, ancestor_id: leaf.family });
        labels.push(leaf.label);
    })?;
    let d = mu.dim().expect("validated");
    Ok(ParticleField {
        particles,
        t,
        n_res,
        d,
        provenance: Provenance::FromMeasure,
        checkpoint: checkpoint.map(|s| Checkpoint {
            s,
            mass: summary.checkpoint_particles.unwrap_or(0) as f64 / n_res,
            labels: if s == 0.0 { Vec::new() } else { labels },
        }),
    })
}

/// Number of distinct time-0 ancestors represented in the field.
pub fn count_surviving_ancestors(field: &ParticleField) -> Result<u64> {
    if field.provenance != Provenance::FromMeasure {
        return Err(Error::State("ancestor counting needs a field simulated from a measure".into()));
    }
    let mut ids: Vec<u64> = field.particles.iter().map(|p| p.ancestor_id).collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids.len() as u64)
}

/// Relabels every particle by its time-`s` ancestor, `s = t - h`, so that
/// restricting to a label yields an `h`-cluster. `s = 0` (that is `h = t`)
/// keeps the time-0 ancestor ids.
pub fn rebase_ancestors(field: &ParticleField, s: f64, h: f64) -> Result<ParticleField> {
    if (s + h - field.t).abs() > 1e-12 * field.t.max(1.0) {
        return domain("s + h must equal the field time");
    }
    if s == 0.0 {
        return Ok(field.clone());
    }
    let Some(cp) = field.checkpoint.as_ref().filter(|c| (c.s - s).abs() <= 1e-12 * field.t.max(1.0)) else {
        return Err(Error::State(format!("no checkpoint at s = {s}")));
    };
    let mut out = field.clone();
    for (p, &l) in out.particles.iter_mut().zip(&cp.labels) {
        p.ancestor_id = l;
    }
    Ok(out)
}

/// Event-driven simulation of the same particle system: every particle's
/// exponential lifetime, displacement and offspring are drawn explicitly.
/// The cost grows like `N² t μ(1)`, so this is only practical for small
/// `N`. With a checkpoint `s`, time-`s` ancestor labels are recorded.
pub fn simulate_field_event_driven<R: Rng + ?Sized>(
    mu: &DiscreteMeasure,
    t: f64,
    n_res: f64,
    checkpoint: Option<f64>,
    rng: &mut R,
) -> Result<ParticleField> {
    let d = validate_measure(mu, t, n_res)?;
    let rate = 2.0 * n_res;
    let mass = 1.0 / n_res;
    let s_cp = checkpoint.unwrap_or(-1.0);
    let mut particles = Vec::new();
    let mut labels = Vec::new();
    let mut at_s = 0u64;
    let mut next_label = 0u64;
    let mut next_id = 0u64;
    // (birth time, position, label at s or u64::MAX if not yet crossed)
    let mut stack: Vec<(f64, Coords, u64)> = Vec::new();
    for (atom, m) in &mu.atoms {
        let initial = poisson(n_res * m, rng);
        for _ in 0..initial {
            let id = next_id;
            next_id += 1;
            let mut c = [0.0; MAX_DIM];
            c[..d].copy_from_slice(atom.coords());
            let label0 = if s_cp == 0.0 {
                at_s += 1;
                next_label += 1;
                next_label - 1
            } else {
                u64::MAX
            };
            stack.push((0.0, c, label0));
            while let Some((born, mut x, mut label)) = stack.pop() {
                let life = -rng.random::<f64>().ln() / rate;
                let end = (born + life).min(t);
                if label == u64::MAX && born <= s_cp && s_cp < end {
                    label = next_label;
                    next_label += 1;
                    at_s += 1;
                }
                let sd = (end - born).sqrt();
                for a in x.iter_mut().take(d) {
                    *a += sd * normal(rng);
                }
                if born + life >= t {
                    particles.push(Particle { position: Point(x[..d].to_vec()), mass, ancestor_id: id });
                    labels.push(label);
                } else if rng.random::<bool>() {
                    stack.push((end, x, label));
                    stack.push((end, x, label));
                }
            }
        }
    }
    Ok(ParticleField {
        particles,
        t,
        n_res,
        d,
        provenance: Provenance::FromMeasure,
        checkpoint: checkpoint.map(|s| Checkpoint {
            s,
            mass: at_s as f64 / n_res,
            labels: if s == 0.0 { Vec::new() } else { labels },
        }),
    })
}

/// Families whose descendants are generated only where they matter.
///
/// The particles descending from one time-`(t - a)` particle with
/// descendants at time `t` all lie within `reach · √a` of it, up to a
/// Gaussian tail of order `e^{-reach²/2}` per particle. The local engine
/// walks the ancestry top-down through a ladder of ages
/// `t = a_0 > a_1 > … > a_k > 0`: at each level it asks `resolve` whether
/// a node of age `a` rooted at `u` (radius `reach · √a`) needs detail.
/// Nodes that do not are reported to `lump` with their time-`t`
/// descendant count; the others are expanded into their age-`a_{j+1}`
/// ancestors (or, below the last level, into particles).
///
/// The expansion is exact because thinning the coalescent point process
/// of rate `λ` with keep probability `1/(1 + λa)` yields the coalescent
/// point process of rate `λ/(1 + λa)`; the time-`t` population of a
/// surviving node of age `a` is `Geometric(1/(1 + λa))` on `{1, 2, …}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPlan {
    /// Strictly decreasing ages `a_1 > … > a_k`, all in `(0, t)`.
    pub ages: Vec<f64>,
    pub reach: f64,
}

impl LocalPlan {
    pub const DEFAULT_REACH: f64 = 8.0;

    /// Ages `t/8, t/64, …` down to the first one below `finest`, with the
    /// `required` ages merged in.
    pub fn geometric(t: f64, finest: f64, required: &[f64]) -> Self {
        let mut ages = Vec::new();
        let mut a = t / 8.0;
        loop {
            ages.push(a);
            if a < finest {
                break;
            }
            a /= 8.0;
        }
        ages.extend(required.iter().copied().filter(|&r| r > 0.0 && r < t));
        ages.sort_unstable_by(|x, y| y.total_cmp(x));
        ages.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * t);
        Self { ages, reach: Self::DEFAULT_REACH }
    }

    fn validate(&self, t: f64) -> Result<()> {
        if !(self.reach > 0.0) {
            return config("local plan reach must be positive");
        }
        let mut prev = t;
        for &a in &self.ages {
            if !(a > 0.0 && a < prev) {
                return config("local plan ages must decrease strictly inside (0, t)");
            }
            prev = a;
        }
        Ok(())
    }
}

/// Counts of one local run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalSummary {
    /// All particles alive at time `t`, generated or lumped.
    pub particles: u64,
    /// Particles actually generated with positions.
    pub resolved: u64,
}

#[derive(Debug, Default, Clone)]
pub struct LocalWorkspace {
    walk: Workspace,
    levels: Vec<Vec<Coords>>,
    labels: Vec<u64>,
    next_label: Vec<u64>,
}

/// Streams the time-`t` field of the particle system started from
/// `Poisson(N μ)` in the multi-level form described at [`LocalPlan`].
///
/// `leaf` receives each generated particle's position and its labels at
/// the plan's ages (`labels[j]` identifies the age-`a_{j+1}` ancestor,
/// numbered in order of appearance within the run).
#[allow(clippy::too_many_arguments)]
pub fn simulate_local<R: Rng + ?Sized>(
    mu: &DiscreteMeasure,
    t: f64,
    n_res: f64,
    plan: &LocalPlan,
    rng: &mut R,
    ws: &mut LocalWorkspace,
    mut resolve: impl FnMut(&[f64], f64) -> bool,
    mut lump: impl FnMut(&[f64], u64),
    mut leaf: impl FnMut(&[f64], &[u64]),
) -> Result<LocalSummary> {
    let d = validate_measure(mu, t, n_res)?;
    plan.validate(t)?;
    let k = plan.ages.len();
    ws.levels.resize(k + 1, Vec::new());
    ws.labels.clear();
    ws.labels.resize(k, 0);
    ws.next_label.clear();
    ws.next_label.resize(k, 0);
    let mut summary = LocalSummary::default();
    let mut env = LocalEnv { d, lambda: n_res, t, plan, resolve: &mut resolve, lump: &mut lump, leaf: &mut leaf };
    for (atom, m) in &mu.atoms {
        let families = poisson(n_res * m / (1.0 + n_res * t), rng);
        let mut root = [0.0; MAX_DIM];
        root[..d].copy_from_slice(atom.coords());
        for _ in 0..families {
            env.node(&root, 0, rng, ws, &mut summary);
        }
    }
    Ok(summary)
}

struct LocalEnv<'a, F, G, H> {
    d: usize,
    lambda: f64,
    t: f64,
    plan: &'a LocalPlan,
    resolve: &'a mut F,
    lump: &'a mut G,
    leaf: &'a mut H,
}

impl<F, G, H> LocalEnv<'_, F, G, H>
where
    F: FnMut(&[f64], f64) -> bool,
    G: FnMut(&[f64], u64),
    H: FnMut(&[f64], &[u64]),
{
    /// A surviving node at level `j`, of age `a_j` (`a_0 = t`).
    fn node<R: Rng + ?Sized>(&mut self, root: &Coords, j: usize, rng: &mut R, ws: &mut LocalWorkspace, sum: &mut LocalSummary) {
        let d = self.d;
        let age = if j == 0 { self.t } else { self.plan.ages[j - 1] };
        if !(self.resolve)(&root[..d], self.plan.reach * age.sqrt()) {
            let p = 1.0 / (1.0 + self.lambda * age);
            let count = 1 + if p >= 1.0 { 0 } else { Geometric::new(p).expect("p in (0, 1]").sample(rng) };
            sum.particles += count;
            (self.lump)(&root[..d], count);
            return;
        }
        let k = self.plan.ages.len();
        let child_age = if j < k { self.plan.ages[j] } else { 0.0 };
        let rate = self.lambda / (1.0 + self.lambda * child_age);
        let mut children = std::mem::take(&mut ws.levels[j]);
        children.clear();
        survivor_family(&root[..d], rate, age - child_age, 1.0, rng, &mut ws.walk, |x| {
            let mut c = [0.0; MAX_DIM];
            c[..d].copy_from_slice(x);
            children.push(c);
        });
        if j < k {
            for c in &children {
                ws.labels[j] = ws.next_label[j];
                ws.next_label[j] += 1;
                self.node(c, j + 1, rng, ws, sum);
            }
        } else {
            sum.particles += children.len() as u64;
            sum.resolved += children.len() as u64;
            for c in &children {
                (self.leaf)(&c[..d], &ws.labels);
            }
        }
        ws.levels[j] = children;
    }
}

/// How a cluster sample is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ClusterInit {
    /// Start from mass `m0` at the root and accept nonempty outcomes. With
    /// `λ = N m0/(1 + N t)` surviving ancestors on average, an accepted
    /// sample merges two or more clusters with probability about `λ/2`
    /// (≈ `m0/2t`), which biases the mean mass upward by the same factor.
    Lump { m0: f64 },
    /// Exactly one time-0 particle, conditioned to leave descendants: the
    /// resolution-`N` canonical cluster with no contamination.
    SingleAncestor,
}

impl ClusterInit {
    /// The default lump `m0 = 0.1 t`.
    pub fn default_for(t: f64) -> Self {
        ClusterInit::Lump { m0: 0.1 * t }
    }
}

/// Rejection limit for conditioning on survival.
pub const MAX_CONSECUTIVE_REJECTIONS: u32 = 10_000;

/// Streams one surviving cluster rooted at `root`; returns its particle
/// count. All particles belong to ancestor 0.
fn cluster_streaming<R: Rng + ?Sized>(
    root: &[f64],
    t: f64,
    n_res: f64,
    init: ClusterInit,
    rng: &mut R,
    ws: &mut Workspace,
    mut emit: impl FnMut(&[f64]),
) -> Result<u64> {
    let lambda = n_res;
    let families = match init {
        ClusterInit::SingleAncestor => 1,
        ClusterInit::Lump { m0 } => {
            if !(m0 > 0.0) {
                return domain("cluster seed mass must be positive");
            }
            let mean = lambda * m0 / (1.0 + lambda * t);
            let mut tries = 0;
            loop {
                let k = poisson(mean, rng);
                if k > 0 {
                    break k;
                }
                tries += 1;
                if tries >= MAX_CONSECUTIVE_REJECTIONS {
                    return Err(Error::Pathological(format!(
                        "{MAX_CONSECUTIVE_REJECTIONS} consecutive extinct clusters (m0 = {m0}, t = {t})"
                    )));
                }
            }
        }
    };
    let mut count = 0;
    for _ in 0..families {
        count += survivor_family(root, lambda, t, 1.0, rng, ws, &mut emit);
    }
    Ok(count)
}

/// A cluster of age `t` rooted at `root`, conditioned to be nonempty.
pub fn sample_cluster<R: Rng + ?Sized>(
    root: &Point,
    t: f64,
    n_res: f64,
    init: ClusterInit,
    rng: &mut R,
) -> Result<ClusterSample> {
    if !(t > 0.0) || !(n_res > 0.0) {
        return domain("cluster needs t > 0 and N > 0");
    }
    let d = root.dim();
    if d > MAX_DIM {
        return domain(format!("dimension must be at most {MAX_DIM}"));
    }
    let mass = 1.0 / n_res;
    let mut particles = Vec::new();
    cluster_streaming(root.coords(), t, n_res, init, rng, &mut Workspace::default(), |x| {
        particles.push(Particle { position: Point(x.to_vec()), mass, ancestor_id: 0 })
    })?;
    Ok(ClusterSample {
        field: ParticleField { particles, t, n_res, d, provenance: Provenance::SingleCluster, checkpoint: None },
        root: root.clone(),
        age: t,
    })
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn cube(center: &[f64], half: f64) -> Self {
        Self { lo: center.iter().map(|c| c - half).collect(), hi: center.iter().map(|c| c + half).collect() }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }
}

/// A stationary cluster seen through `window`: the root is uniform on the
/// window enlarged by `margin` (default `6 √t`) on every side, and the
/// sample is redrawn until the cluster charges the window.
pub fn sample_stationary_cluster<R: Rng + ?Sized>(
    window: &Window,
    t: f64,
    n_res: f64,
    init: ClusterInit,
    margin: Option<f64>,
    rng: &mut R,
) -> Result<ClusterSample> {
    let d = window.lo.len();
    if d == 0 || d > MAX_DIM || window.hi.len() != d {
        return config("window dimension must be in 1..=4 and consistent");
    }
    if window.lo.iter().zip(&window.hi).any(|(l, h)| !(h > l)) {
        return config("window must have positive extent on every axis");
    }
    let margin = margin.unwrap_or(6.0 * t.sqrt());
    if !(margin >= 0.0) || !margin.is_finite() {
        return config("window margin must be finite and nonnegative");
    }
    let mut tries = 0;
    loop {
        let root: Vec<f64> = (0..d).map(|a| rng.random_range(window.lo[a] - margin..window.hi[a] + margin)).collect();
        let sample = sample_cluster(&Point(root), t, n_res, init, rng)?;
        if sample.field.particles.iter().any(|p| window.contains(p.position.coords())) {
            let mut s = sample;
            s.field.provenance = Provenance::StationaryCluster;
            return Ok(s);
        }
        tries += 1;
        if tries >= MAX_CONSECUTIVE_REJECTIONS {
            return Err(Error::Pathological("stationary cluster never reached the window".into()));
        }
    }
}

/// Weighted draws of the ball mass `η̃_t(B_0^ε)` of a stationary
/// single-ancestor cluster, conditioned on charging the ball.
///
/// The stationary cluster has pseudo-law `∫ dx L_x(η_t)`. By translation
/// invariance, charging `B_0^ε` with root `x` is the same as `-x` lying in
/// the union of ε-balls around the particles of a cluster rooted at 0.
/// Each draw therefore takes a cluster rooted at 0 size-biased by its
/// particle count, a uniform particle `p` of it and a uniform point `v` of
/// `B(p, ε)`; with `k` particles within ε of `v`, the ball mass is `k/N`
/// and the draw carries weight `1/k`. This is exact at resolution `N`.
///
/// `probes` points are drawn per cluster; the result lists, per cluster,
/// its `(mass, weight)` pairs.
pub fn stationary_ball_mass_draws<R: Rng + ?Sized>(
    t: f64,
    n_res: f64,
    d: usize,
    eps: f64,
    clusters: usize,
    probes: usize,
    rng: &mut R,
) -> Result<Vec<Vec<(f64, f64)>>> {
    if !(t > 0.0 && n_res > 0.0 && eps > 0.0) || d == 0 || d > MAX_DIM {
        return domain("stationary ball mass needs t, N, eps > 0 and 1 <= d <= 4");
    }
    let lambda = n_res;
    let a = lambda * t / (1.0 + lambda * t);
    // Family size n has P(n) ∝ a^{n-1}; the size-biased law has n - 1 equal
    // to the sum of two independent geometric counts.
    let geo = Geometric::new(1.0 - a).map_err(|e| Error::Domain(e.to_string()))?;
    let mut ws = Workspace::default();
    let mut pos: Vec<f64> = Vec::new();
    let origin = vec![0.0; d];
    let eps2 = eps * eps;
    let mut out = Vec::with_capacity(clusters);
    for _ in 0..clusters {
        let mut gaps = geo.sample(rng) + geo.sample(rng);
        pos.clear();
        // Depths given n are i.i.d. H | H < t.
        walk(
            &origin,
            t,
            1.0,
            rng,
            &mut ws,
            |r| {
                if gaps == 0 {
                    return None;
                }
                gaps -= 1;
                let v = a * r.random::<f64>();
                Some(v / (lambda * (1.0 - v)))
            },
            |x| pos.extend_from_slice(x),
        );
        let n = pos.len() / d;
        let mut draws = Vec::with_capacity(probes);
        for _ in 0..probes {
            let p = rng.random_range(0..n);
            let v = uniform_in_ball(&pos[p * d..p * d + d], eps, rng);
            let k = pos.chunks_exact(d).filter(|q| crate::kernels::dist_sq(q, &v) < eps2).count();
            let k = k.max(1);
            draws.push((k as f64 / n_res, 1.0 / k as f64));
        }
        out.push(draws);
    }
    Ok(out)
}

fn uniform_in_ball<R: Rng + ?Sized>(center: &[f64], eps: f64, rng: &mut R) -> Vec<f64> {
    let d = center.len();
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
            return v.iter().zip(center).map(|(a, c)| c + eps * a).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn delta(d: usize, m: f64) -> DiscreteMeasure {
        DiscreteMeasure::dirac(Point::origin(d), m).unwrap()
    }

    #[test]
    fn walk_places_first_leaf_from_root() {
        let mut rng = stream_rng(1, 0);
        let mut ws = Workspace::default();
        let mut leaves = Vec::new();
        let n = walk(&[5.0, 5.0], 1e-12, 1.0, &mut rng, &mut ws, |_| None, |x| leaves.push(x.to_vec()));
        assert_eq!(n, 1);
        assert!((leaves[0][0] - 5.0).abs() < 1e-4);
    }

    #[test]
    fn walk_pair_covariance() {
        // Two leaves coalescing at depth h share the path above it:
        // Cov = T - h per axis.
        let (t, h) = (1.0, 0.3);
        let mut ws = Workspace::default();
        let reps = 40_000;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for i in 0..reps {
            let mut rng = stream_rng(2, i);
            let mut v = Vec::new();
            let mut given = Some(h);
            walk(&[0.0], t, 1.0, &mut rng, &mut ws, |_| given.take(), |x| v.push(x[0]));
            sxy += v[0] * v[1];
            sxx += v[0] * v[0];
        }
        let (cov, var) = (sxy / reps as f64, sxx / reps as f64);
        assert!((cov - (t - h)).abs() < 0.03, "{cov}");
        assert!((var - t).abs() < 0.03, "{var}");
    }

    #[test]
    fn validation_errors() {
        let mut rng = stream_rng(1, 1);
        assert!(matches!(simulate_field(&delta(2, 1.0), 1.0, 50.0, &mut rng), Err(Error::Config(_))));
        assert!(matches!(simulate_field(&delta(2, 0.001), 1.0, 1000.0, &mut rng), Err(Error::Config(_))));
        assert!(simulate_field(&delta(2, 1.0), 0.0, 1000.0, &mut rng).is_err());
    }

    #[test]
    fn rebase_requires_checkpoint() {
        let mut rng = stream_rng(3, 0);
        let f = simulate_field(&delta(2, 1.0), 1.0, 200.0, &mut rng).unwrap();
        assert!(matches!(rebase_ancestors(&f, 0.5, 0.5), Err(Error::State(_))));
        assert_eq!(rebase_ancestors(&f, 0.0, 1.0).unwrap(), f);
    }

    #[test]
    fn rebase_is_a_partition() {
        let mut rng = stream_rng(4, 0);
        let f = simulate_field_checkpointed(&delta(2, 2.0), 1.0, 300.0, Some(0.8), &mut rng).unwrap();
        let g = rebase_ancestors(&f, 0.8, 0.2).unwrap();
        let mut labels: Vec<u64> = g.particles.iter().map(|p| p.ancestor_id).collect();
        labels.sort_unstable();
        labels.dedup();
        let total: usize = labels.iter().map(|&l| g.restrict(l).particles.len()).sum();
        assert_eq!(total, f.particles.len());
    }

    #[test]
    fn lump_cluster_rejection_limit() {
        let mut rng = stream_rng(5, 0);
        let r = sample_cluster(&Point::origin(2), 1.0, 1e4, ClusterInit::Lump { m0: 1e-12 }, &mut rng);
        assert!(matches!(r, Err(Error::Pathological(_))));
    }

    #[test]
    fn stationary_cluster_hits_window() {
        let mut rng = stream_rng(6, 0);
        let w = Window::cube(&[0.0, 0.0], 1.0);
        let c = sample_stationary_cluster(&w, 0.5, 500.0, ClusterInit::SingleAncestor, None, &mut rng).unwrap();
        assert!(c.field.particles.iter().any(|p| w.contains(p.position.coords())));
        assert_eq!(c.field.provenance, Provenance::StationaryCluster);
        assert!(sample_stationary_cluster(&w, 0.5, 500.0, ClusterInit::SingleAncestor, Some(-1.0), &mut rng).is_err());
    }

    #[test]
    fn local_engine_matches_full_engine_in_mean() {
        let mu = delta(2, 1.0);
        let plan = LocalPlan::geometric(1.0, 0.01, &[]);
        let center = [0.5, 0.0];
        let radius: f64 = 0.3;
        let mut lws = LocalWorkspace::default();
        let mut ws = Workspace::default();
        let reps = 4000;
        let (mut a, mut b, mut ta, mut tb) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..reps {
            let mut rng = stream_rng(7, i);
            let mut inside = 0u64;
            let s = simulate_local(
                &mu,
                1.0,
                1000.0,
                &plan,
                &mut rng,
                &mut lws,
                |u, r| crate::kernels::dist_sq(u, &center).sqrt() < radius + r,
                |_, _| {},
                |x, _| inside += (crate::kernels::dist_sq(x, &center) < radius * radius) as u64,
            )
            .unwrap();
            a += inside as f64 / 1000.0;
            ta += s.particles as f64 / 1000.0;
            let mut rng = stream_rng(8, i);
            let mut inside = 0u64;
            let s = simulate_streaming(&mu, 1.0, 1000.0, None, &mut rng, &mut ws, |l| {
                inside += (crate::kernels::dist_sq(l.pos, &center) < radius * radius) as u64
            })
            .unwrap();
            b += inside as f64 / 1000.0;
            tb += s.particles as f64 / 1000.0;
        }
        let r = reps as f64;
        // E ξ_t(B) = ∫_B p_1 ≈ 0.0641 for the ball of radius 0.3 at distance 0.5.
        assert!((a / r - b / r).abs() < 0.02, "{} {}", a / r, b / r);
        assert!((ta / r - 1.0).abs() < 0.1 && (tb / r - 1.0).abs() < 0.1, "{} {}", ta / r, tb / r);
    }

    #[test]
    fn local_plan_validation() {
        let mu = delta(2, 1.0);
        let bad = LocalPlan { ages: vec![0.1, 0.2], reach: 8.0 };
        let mut rng = stream_rng(1, 2);
        let r = simulate_local(&mu, 1.0, 1000.0, &bad, &mut rng, &mut LocalWorkspace::default(), |_, _| true, |_, _| {}, |_, _| {});
        assert!(matches!(r, Err(Error::Config(_))));
        let p = LocalPlan::geometric(1.0, 0.001, &[0.02]);
        assert!(p.ages.windows(2).all(|w| w[0] > w[1]));
        assert!(p.ages.contains(&0.02) && *p.ages.last().unwrap() < 0.001);
    }
}
