use std::collections::HashMap;

use dwlab::kernels::{gaussian_domination_factor, heat};
use dwlab::moments::{q2_cluster, q3_norm_mc};
use dwlab::point_process::sample_uniform_binomial;
use dwlab::rng::stream_rng;
use dwlab::stats::{ks_one_sample, ks_pvalue, RunningStats};
use dwlab::tree::{
    brownian_leaves, cluster_moment_density_mc, default_bandwidth, enumerate_topologies, leaf_covariance,
    sample_brownian_tree, sample_topology, topology_count, Construction, DiscreteTreeTopology,
};
use dwlab::{Point, PointTuple};
use statrs::distribution::{ContinuousCDF, Normal};

const METHODS: [Construction; 3] = [Construction::Forward, Construction::Backward, Construction::Sideways];

#[test]
fn counts_match_the_formula() {
    assert_eq!(enumerate_topologies(2).unwrap().len(), 1);
    assert_eq!(enumerate_topologies(3).unwrap().len(), 3);
    assert_eq!(enumerate_topologies(4).unwrap().len(), 18);
    assert_eq!(topology_count(5), 180);
    assert!(enumerate_topologies(1).is_err());
    assert!(enumerate_topologies(7).is_err());
}

#[test]
fn n2_is_always_the_unique_tree() {
    let only = enumerate_topologies(2).unwrap().remove(0);
    for m in METHODS {
        let mut rng = stream_rng(1, m as u64);
        for _ in 0..100 {
            assert_eq!(sample_topology(2, m, &mut rng).unwrap(), only);
        }
    }
}

#[test]
fn n3_frequencies_are_uniform() {
    let reps = 30_000;
    let sigma = (2.0f64 / 9.0).sqrt() / (reps as f64).sqrt();
    for m in METHODS {
        let mut rng = stream_rng(2, m as u64);
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for _ in 0..reps {
            *counts.entry(sample_topology(3, m, &mut rng).unwrap().id()).or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        for c in counts.values() {
            let f = *c as f64 / reps as f64;
            assert!((f - 1.0 / 3.0).abs() < 4.0 * sigma, "{m:?}: {f}");
        }
    }
}

#[test]
fn probability_does_not_depend_on_sibling_pairs() {
    let n = 5;
    let all = enumerate_topologies(n).unwrap();
    let mut per_group: HashMap<usize, usize> = HashMap::new();
    let class: HashMap<u64, usize> = all.iter().map(|tp| (tp.id(), tp.sibling_pairs())).collect();
    for tp in &all {
        *per_group.entry(tp.sibling_pairs()).or_default() += 1;
    }
    assert!(per_group.len() >= 2);
    let reps = 60_000;
    for m in METHODS {
        let mut rng = stream_rng(3, m as u64);
        let mut hits: HashMap<usize, u64> = HashMap::new();
        for _ in 0..reps {
            let id = sample_topology(n, m, &mut rng).unwrap().id();
            *hits.entry(class[&id]).or_default() += 1;
        }
        for (group, size) in &per_group {
            let p = *size as f64 / all.len() as f64;
            let f = hits.get(group).copied().unwrap_or(0) as f64 / reps as f64;
            let sd = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((f - p).abs() < 4.0 * sd, "{m:?}, {group} sibling pairs: {f} vs {p}");
        }
    }
}

#[test]
fn single_leaf_is_gaussian() {
    let reps = 100_000;
    let t = 1.3;
    let mut rng = stream_rng(4, 0);
    let mut axes: Vec<Vec<f64>> = (0..2).map(|_| Vec::with_capacity(reps)).collect();
    for _ in 0..reps {
        let tree = sample_brownian_tree(1, t, &Point::origin(2), &mut rng).unwrap();
        for (a, v) in axes.iter_mut().zip(tree.leaf_positions.points()[0].coords()) {
            a.push(*v);
        }
    }
    let normal = Normal::new(0.0, f64::sqrt(t)).unwrap();
    for a in &axes {
        let d = ks_one_sample(a, |x| normal.cdf(x));
        assert!(ks_pvalue(d, reps as f64) > 0.001);
    }
}

#[test]
fn pair_covariance_is_half_the_time() {
    let reps = 100_000;
    let t = 2.0;
    let mut rng = stream_rng(5, 0);
    let (mut prod, mut var) = (RunningStats::new(), RunningStats::new());
    for _ in 0..reps {
        let tree = sample_brownian_tree(2, t, &Point::origin(1), &mut rng).unwrap();
        let p = tree.leaf_positions.points();
        prod.push(p[0].0[0] * p[1].0[0]);
        var.push(p[0].0[0] * p[0].0[0]);
    }
    assert!((prod.mean - t / 2.0).abs() < 3.0 * prod.stderr());
    assert!((var.mean - t).abs() < 3.0 * var.stderr());
}

#[test]
fn n3_moment_measure_has_mass_six() {
    let e = q3_norm_mc(1.0, 2, 200_000, 6).unwrap();
    assert!((e.value - 6.0).abs() < 3.0 * e.stderr, "{} ± {}", e.value, e.stderr);
}

fn frozen() -> (DiscreteTreeTopology, Vec<f64>) {
    let mut rng = stream_rng(7, 0);
    let topo = sample_topology(3, Construction::Backward, &mut rng).unwrap();
    (topo, vec![0.25, 0.7])
}

#[test]
fn frozen_tree_leaves_have_the_shared_path_covariance() {
    let (topo, times) = frozen();
    let (t, d, reps) = (1.0, 2, 100_000);
    let want = leaf_covariance(&topo, &times, t);
    let mut rng = stream_rng(8, 0);
    let n = 3;
    let mut cross = vec![vec![RunningStats::new(); n * d]; n * d];
    for _ in 0..reps {
        let x = brownian_leaves(&topo, &times, t, &[0.0; 2], &mut rng);
        for i in 0..n * d {
            for j in 0..n * d {
                cross[i][j].push(x[i] * x[j]);
            }
        }
    }
    for i in 0..n * d {
        for j in 0..n * d {
            let same_axis = i % d == j % d;
            let target = if same_axis { want[i / d][j / d] } else { 0.0 };
            let s = &cross[i][j];
            assert!((s.mean - target).abs() < 4.0 * s.stderr(), "({i},{j}): {} vs {target}", s.mean);
        }
    }
}

/// `(λ_max, λ_min, det, inverse)` of a symmetric positive definite 3×3 matrix.
fn spd3(c: &[Vec<f64>]) -> (f64, f64, f64, [[f64; 3]; 3]) {
    let m = |i: usize, j: usize| c[i][j];
    let cof = |i: usize, j: usize| {
        let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
        let s: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        let minor = m(r[0], s[0]) * m(r[1], s[1]) - m(r[0], s[1]) * m(r[1], s[0]);
        if (i + j).is_multiple_of(2) { minor } else { -minor }
    };
    let det = (0..3).map(|j| m(0, j) * cof(0, j)).sum::<f64>();
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cof(j, i) / det;
        }
    }
    // Trigonometric eigenvalue formula for symmetric 3×3 matrices.
    let q = (m(0, 0) + m(1, 1) + m(2, 2)) / 3.0;
    let p1 = m(0, 1).powi(2) + m(0, 2).powi(2) + m(1, 2).powi(2);
    let p2 = (m(0, 0) - q).powi(2) + (m(1, 1) - q).powi(2) + (m(2, 2) - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = |i: usize, j: usize| (m(i, j) - if i == j { q } else { 0.0 }) / p;
    let det_b = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let phi = (det_b / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    (hi, lo, det, inv)
}

#[test]
fn conditional_density_obeys_the_norm_comparison() {
    let mut rng = stream_rng(9, 0);
    let t = 1.0;
    for _ in 0..1000 {
        let topo = sample_topology(3, Construction::Backward, &mut rng).unwrap();
        let times = sample_uniform_binomial(2, t, &mut rng).times;
        let c = leaf_covariance(&topo, &times, t);
        let (norm, lo, det, inv) = spd3(&c);
        assert!(lo > 0.0);
        let x = brownian_leaves(&topo, &times, t, &[0.0], &mut rng);
        let quad: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| x[i] * inv[i][j] * x[j]).sum();
        let density = (-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powi(3) * det).sqrt();
        let iso: f64 = x.iter().map(|&v| heat(&[v], norm)).product();
        let bound = (norm.powi(3) / det).sqrt() * iso;
        assert!(density <= bound * (1.0 + 1e-9), "{density} > {bound}");
    }
}

#[test]
fn single_point_estimates_recover_the_heat_kernel() {
    let (t, reps) = (1.0, 200_000);
    let bw = default_bandwidth(1, 2, t, reps);
    let mut rng = stream_rng(10, 0);
    use rand::Rng;
    for k in 0..10 {
        let x = Point(vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]);
        let xs = PointTuple::new(vec![x.clone()]).unwrap();
        let e = cluster_moment_density_mc(1, t, &xs, reps, bw, 100 + k).unwrap();
        let exact = heat(x.coords(), t);
        assert!((e.value - exact).abs() < 3.0 * e.combined_uncertainty(), "{} vs {exact}", e.value);
    }
}

#[test]
fn pair_estimate_matches_closed_form_and_envelope() {
    let (t, reps) = (1.0, 400_000);
    let xs = PointTuple::from_coords(&[&[0.3, 0.0], &[-0.3, 0.2]]).unwrap();
    let e = cluster_moment_density_mc(2, t, &xs, reps, default_bandwidth(2, 2, t, reps), 11).unwrap();
    let exact = q2_cluster(t, &xs.points()[0], &xs.points()[1]).unwrap();
    assert!((e.value - exact).abs() < 3.0 * e.combined_uncertainty(), "{} vs {exact}", e.value);
    assert!(e.value <= 2.0 * 16.0 * gaussian_domination_factor(&xs, t).unwrap());
}

#[test]
fn bandwidth_must_be_positive() {
    let xs = PointTuple::from_coords(&[&[0.3, 0.0]]).unwrap();
    assert!(cluster_moment_density_mc(1, 1.0, &xs, 1000, 0.0, 1).is_err());
}
