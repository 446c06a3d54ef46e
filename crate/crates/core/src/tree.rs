//! Marked binary trees with ordered splitting ranks and the uniform marked
//! Brownian tree.
//!
//! A tree with `n` leaves marked `0..n` and splitting ranks `1..n-1` is
//! stored in backward normal form: reading ranks from the last split to the
//! first, every split merges two blocks of leaves, and each block is named
//! by its smallest mark. `merges[r - 1] = (lo, hi)` records that at rank `r`
//! the block named `lo` splits off the block named `hi` (`lo < hi`). Two
//! trees are equal iff their merge sequences are equal.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::kernels::{Point, PointTuple};
use crate::par;
use crate::point_process::{sample_uniform_binomial, OrderedTimes};
use crate::stats::{EstimateWithError, RunningStats};

/// Largest order accepted by [`enumerate_topologies`].
pub const MAX_ENUMERATION_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiscreteTreeTopology {
    pub n: usize,
    /// Merge events indexed by `rank - 1`; see the module docs.
    pub merges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Forward,
    Backward,
    Sideways,
}

impl std::str::FromStr for Construction {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            "sideways" => Ok(Self::Sideways),
            other => domain(format!("unknown construction '{other}'")),
        }
    }
}

/// `n! (n-1)! / 2^{n-1}`, the number of marked binary trees with `n` leaves
/// and distinct ordered splitting ranks.
pub fn topology_count(n: usize) -> u64 {
    (2..=n as u64).map(|k| k * (k - 1) / 2).product()
}

impl DiscreteTreeTopology {
    /// The single tree with one leaf.
    pub fn leaf() -> Self {
        Self { n: 1, merges: Vec::new() }
    }

    /// Checks that `merges` is a valid backward merge sequence.
    pub fn from_merges(n: usize, merges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 || merges.len() + 1 != n {
            return domain("a tree with n leaves has n-1 merges");
        }
        let mut alive = vec![true; n];
        for &(lo, hi) in merges.iter().rev() {
            if !(lo < hi && hi < n && alive[lo] && alive[hi]) {
                return domain("merge does not join two current block names");
            }
            alive[hi] = false;
        }
        Ok(Self { n, merges })
    }

    /// Marked, planar description: `marks[j]` is the mark of the `j`-th
    /// leaf from the left and `gaps[j]` the splitting rank of the most
    /// recent common ancestor of leaves `j` and `j + 1`. Every planar tree
    /// with distinct ranks has a unique such description.
    pub fn from_planar(gaps: &[usize], marks: &[usize]) -> Self {
        let n = marks.len();
        debug_assert_eq!(gaps.len() + 1, n);
        let mut merges = vec![(0, 0); n.saturating_sub(1)];
        // Recursive splitting of leaf intervals at the smallest gap rank.
        let mut stack = vec![(0usize, n - 1)];
        while let Some((a, b)) = stack.pop() {
            if a == b {
                continue;
            }
            let m = (a..b).min_by_key(|&j| gaps[j]).expect("nonempty interval");
            let left = *marks[a..=m].iter().min().expect("nonempty");
            let right = *marks[m + 1..=b].iter().min().expect("nonempty");
            merges[gaps[m] - 1] = (left.min(right), left.max(right));
            stack.push((a, m));
            stack.push((m + 1, b));
        }
        Self { n, merges }
    }

    /// Position of this tree in [`enumerate_topologies`] order: the merge
    /// choices read backward as mixed-radix digits, each digit indexing a
    /// pair among the current blocks sorted by name.
    pub fn id(&self) -> u64 {
        let mut blocks: Vec<usize> = (0..self.n).collect();
        let mut id = 0u64;
        for &(lo, hi) in self.merges.iter().rev() {
            let k = blocks.len();
            let i = blocks.binary_search(&lo).expect("valid merge");
            let j = blocks.binary_search(&hi).expect("valid merge");
            id = id * (k * (k - 1) / 2) as u64 + pair_index(i, j, k) as u64;
            blocks.remove(j);
        }
        id
    }

    /// Number of sibling pairs: internal vertices whose two children are
    /// both leaves.
    pub fn sibling_pairs(&self) -> usize {
        // A block name is a singleton at rank r iff no later merge kept it.
        let mut singleton = vec![true; self.n];
        let mut count = 0;
        for &(lo, hi) in self.merges.iter().rev() {
            if singleton[lo] && singleton[hi] {
                count += 1;
            }
            singleton[lo] = false;
        }
        count
    }

    /// Splitting rank of the most recent common ancestor of leaves `i` and
    /// `j` (`i != j`).
    pub fn mrca_rank(&self, i: usize, j: usize) -> usize {
        let mut name: Vec<usize> = (0..self.n).collect();
        for (r, &(lo, hi)) in self.merges.iter().enumerate().rev() {
            for v in name.iter_mut() {
                if *v == hi {
                    *v = lo;
                }
            }
            if name[i] == name[j] {
                return r + 1;
            }
        }
        unreachable!("all leaves share the root")
    }
}

fn pair_index(i: usize, j: usize, k: usize) -> usize {
    // Lexicographic index of (i, j), i < j, among pairs of 0..k.
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

fn pair_from_index(mut idx: usize, k: usize) -> (usize, usize) {
    let mut i = 0;
    while idx >= k - i - 1 {
        idx -= k - i - 1;
        i += 1;
    }
    (i, i + 1 + idx)
}

/// Every marked binary tree with `n` leaves, in id order.
pub fn enumerate_topologies(n: usize) -> Result<Vec<DiscreteTreeTopology>> {
    if !(2..=MAX_ENUMERATION_ORDER).contains(&n) {
        return domain(format!("enumeration supports 2 <= n <= {MAX_ENUMERATION_ORDER}, got {n}"));
    }
    let total = topology_count(n);
    Ok((0..total).map(|id| topology_from_id(n, id)).collect())
}

/// Inverse of [`DiscreteTreeTopology::id`].
pub fn topology_from_id(n: usize, mut id: u64) -> DiscreteTreeTopology {
    let radices: Vec<u64> = (2..=n as u64).rev().map(|k| k * (k - 1) / 2).collect();
    let mut digits = vec![0usize; radices.len()];
    for (slot, &r) in digits.iter_mut().zip(&radices).rev() {
        *slot = (id % r) as usize;
        id /= r;
    }
    let mut blocks: Vec<usize> = (0..n).collect();
    let mut merges = vec![(0, 0); n - 1];
    for (step, digit) in digits.into_iter().enumerate() {
        let k = blocks.len();
        let (i, j) = pair_from_index(digit, k);
        merges[n - 2 - step] = (blocks[i], blocks[j]);
        blocks.remove(j);
    }
    DiscreteTreeTopology { n, merges }
}

/// A uniformly distributed marked tree built by the chosen construction.
pub fn sample_topology<R: Rng + ?Sized>(n: usize, method: Construction, rng: &mut R) -> Result<DiscreteTreeTopology> {
    if n == 0 {
        return domain("a tree needs at least one leaf");
    }
    if n == 1 {
        return Ok(DiscreteTreeTopology::leaf());
    }
    Ok(match method {
        Construction::Backward => {
            let mut blocks: Vec<usize> = (0..n).collect();
            let mut merges = vec![(0, 0); n - 1];
            for rank in (1..n).rev() {
                let k = blocks.len();
                let (i, j) = pair_from_index(rng.random_range(0..k * (k - 1) / 2), k);
                merges[rank - 1] = (blocks[i], blocks[j]);
                blocks.remove(j);
            }
            DiscreteTreeTopology { n, merges }
        }
        Construction::Forward => {
            // Splitting the i-th of k planar leaves inserts an adjacency of
            // rank k between the two children.
            let mut gaps: Vec<usize> = Vec::with_capacity(n - 1);
            for rank in 1..n {
                let i = rng.random_range(0..rank);
                gaps.insert(i, rank);
            }
            DiscreteTreeTopology::from_planar(&gaps, &random_marks(n, rng))
        }
        Construction::Sideways => {
            // The k-th new branch is attached at time tau_k to the path of
            // the current rightmost leaf and drawn to its right, so tau_k is
            // the common-ancestor rank of leaves k and k + 1.
            let mut tau: Vec<usize> = (1..n).collect();
            tau.shuffle(rng);
            DiscreteTreeTopology::from_planar(&tau, &random_marks(n, rng))
        }
    })
}

fn random_marks<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut marks: Vec<usize> = (0..n).collect();
    marks.shuffle(rng);
    marks
}

/// A marked tree embedded in `[0, t] × R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedBrownianTree {
    pub topology: DiscreteTreeTopology,
    pub split_times: OrderedTimes,
    pub t: f64,
    pub root: Point,
    /// Leaf positions indexed by mark.
    pub leaf_positions: PointTuple,
}

/// Uniform marked Brownian tree with `n` leaves on `[0, t]`.
pub fn sample_brownian_tree<R: Rng + ?Sized>(n: usize, t: f64, root: &Point, rng: &mut R) -> Result<MarkedBrownianTree> {
    if n == 0 || !(t > 0.0) {
        return domain("Brownian tree needs n >= 1 and t > 0");
    }
    let topology = sample_topology(n, Construction::Backward, rng)?;
    let split_times = sample_uniform_binomial(n - 1, t, rng);
    let leaves = brownian_leaves(&topology, &split_times.times, t, root.coords(), rng);
    Ok(MarkedBrownianTree {
        topology,
        split_times,
        t,
        root: root.clone(),
        leaf_positions: PointTuple(leaves.chunks(root.dim()).map(|c| Point(c.to_vec())).collect()),
    })
}

/// Leaf positions (flattened, `n * d`, by mark) for a frozen topology and
/// split times, with Brownian displacement along every branch.
pub fn brownian_leaves<R: Rng + ?Sized>(
    topology: &DiscreteTreeTopology,
    times: &[f64],
    t: f64,
    root: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::new();
    brownian_leaves_into(topology, times, t, root, rng, &mut out, &mut Vec::new());
    out
}

fn brownian_leaves_into<R: Rng + ?Sized>(
    topology: &DiscreteTreeTopology,
    times: &[f64],
    t: f64,
    root: &[f64],
    rng: &mut R,
    pos: &mut Vec<f64>,
    last: &mut Vec<f64>,
) {
    let (n, d) = (topology.n, root.len());
    pos.clear();
    pos.resize(n * d, 0.0);
    last.clear();
    last.resize(n, 0.0);
    pos[..d].copy_from_slice(root);
    // Forward in rank order: block `lo` moves up to the split, then `hi`
    // starts from the same place.
    for (r, &(lo, hi)) in topology.merges.iter().enumerate() {
        let tau = times[r];
        let sd = (tau - last[lo]).sqrt();
        for a in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            pos[lo * d + a] += sd * z;
        }
        last[lo] = tau;
        last[hi] = tau;
        pos.copy_within(lo * d..lo * d + d, hi * d);
    }
    for leaf in 0..n {
        let sd = (t - last[leaf]).sqrt();
        for a in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            pos[leaf * d + a] += sd * z;
        }
    }
}

/// Per-axis covariance of the leaves given the topology and split times:
/// `Var = t`, `Cov(i, j)` = time of the split separating `i` and `j`.
pub fn leaf_covariance(topology: &DiscreteTreeTopology, times: &[f64], t: f64) -> Vec<Vec<f64>> {
    let n = topology.n;
    let mut c = vec![vec![t; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = times[topology.mrca_rank(i, j) - 1];
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    c
}

/// Silverman-type bandwidth for a product Gaussian kernel on `R^D`,
/// `D = n d`, with per-axis scale `√t`:
/// `(4 / (D + 2))^{1/(D+4)} √t reps^{-1/(D+4)}`.
pub fn default_bandwidth(n: usize, d: usize, t: f64, reps: u64) -> f64 {
    let dim = (n * d) as f64;
    (4.0 / (dim + 2.0)).powf(1.0 / (dim + 4.0)) * t.sqrt() * (reps as f64).powf(-1.0 / (dim + 4.0))
}

/// `n! t^{n-1}`, the total mass of the order-`n` cluster moment measure.
pub fn moment_norm(n: usize, t: f64) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>() * t.powi(n as i32 - 1)
}

/// Kernel-smoothed tree estimate of the cluster moment density `q_t^n` at
/// several tuples at once, from one set of `reps` trees rooted at the
/// origin. Each estimate carries its standard error and, as bias proxy, the
/// absolute difference from the same estimator at half the bandwidth.
pub fn cluster_moment_density_mc_many(
    n: usize,
    t: f64,
    tuples: &[PointTuple],
    reps: u64,
    bandwidth: f64,
    seed: u64,
) -> Result<Vec<EstimateWithError>> {
    if !(bandwidth > 0.0) {
        return domain("bandwidth must be positive");
    }
    if !(t > 0.0) || n == 0 {
        return domain("need n >= 1 and t > 0");
    }
    let Some(first) = tuples.first() else {
        return Ok(Vec::new());
    };
    let d = first.dim();
    for xs in tuples {
        if xs.len() != n || xs.dim() != d {
            return domain("every tuple must have n points of a common dimension");
        }
        if !xs.is_off_diagonal() {
            return domain("tuples must be off-diagonal");
        }
    }
    let targets: Vec<Vec<f64>> = tuples.iter().map(|xs| xs.points().iter().flat_map(|p| p.0.clone()).collect()).collect();
    let k = tuples.len();
    let (lk_full, lk_half) = (log_kernel_norm(n * d, bandwidth), log_kernel_norm(n * d, 0.5 * bandwidth));
    let (inv_full, inv_half) = (0.5 / (bandwidth * bandwidth), 2.0 / (bandwidth * bandwidth));
    let root = vec![0.0; d];
    let acc = par::replicate_fold(
        seed,
        reps,
        || vec![(RunningStats::new(), RunningStats::new()); k],
        |acc, _, rng| {
            let topo = sample_topology(n, Construction::Backward, rng).expect("n >= 1");
            let times = sample_uniform_binomial(n - 1, t, rng);
            let leaves = brownian_leaves(&topo, &times.times, t, &root, rng);
            for (slot, target) in acc.iter_mut().zip(&targets) {
                let r2: f64 = leaves.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
                slot.0.push((lk_full - r2 * inv_full).exp());
                slot.1.push((lk_half - r2 * inv_half).exp());
            }
        },
        |a, b| a.into_iter().zip(b).map(|(x, y)| (x.0.merge(y.0), x.1.merge(y.1))).collect(),
    );
    let norm = moment_norm(n, t);
    Ok(acc
        .into_iter()
        .map(|(full, half)| {
            let mut e = full.estimate().scale(norm);
            e.bias_proxy = (full.mean - half.mean).abs() * norm;
            e
        })
        .collect())
}

fn log_kernel_norm(dim: usize, b: f64) -> f64 {
    -0.5 * dim as f64 * (2.0 * std::f64::consts::PI * b * b).ln()
}

/// Single-tuple form of [`cluster_moment_density_mc_many`].
pub fn cluster_moment_density_mc(
    n: usize,
    t: f64,
    xs: &PointTuple,
    reps: u64,
    bandwidth: f64,
    seed: u64,
) -> Result<EstimateWithError> {
    Ok(cluster_moment_density_mc_many(n, t, std::slice::from_ref(xs), reps, bandwidth, seed)?[0])
}
