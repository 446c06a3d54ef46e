use dwlab::rng::stream_rng;
use dwlab::sim::{
    count_surviving_ancestors, rebase_ancestors, sample_cluster, sample_stationary_cluster, simulate_field,
    simulate_field_checkpointed, simulate_field_event_driven, simulate_streaming, ClusterInit, Window, Workspace,
};
use dwlab::stats::{ks_pvalue, ks_two_sample, RunningStats};
use dwlab::{DiscreteMeasure, Error, Point};
use rand_distr::{Distribution, Poisson};

fn dirac(d: usize, m: f64) -> DiscreteMeasure {
    DiscreteMeasure::dirac(Point::origin(d), m).unwrap()
}

fn two_sample_p(a: &[f64], b: &[f64]) -> f64 {
    let n_eff = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    ks_pvalue(ks_two_sample(a, b), n_eff)
}

#[test]
fn survival_probability() {
    let (reps, n_res) = (10_000, 1000.0);
    let mu = dirac(2, 1.0);
    let mut rng = stream_rng(1, 0);
    let mut ws = Workspace::default();
    let alive = (0..reps)
        .filter(|_| simulate_streaming(&mu, 1.0, n_res, None, &mut rng, &mut ws, |_| {}).unwrap().particles > 0)
        .count();
    let p = alive as f64 / reps as f64;
    let want = 1.0 - (-1.0f64).exp();
    assert!((p - want).abs() < 3.0 * (want * (1.0 - want) / reps as f64).sqrt(), "{p}");
}

#[test]
fn surviving_ancestors_are_poisson() {
    let (reps, n_res) = (10_000, 1000.0);
    let mut rng = stream_rng(2, 0);
    let mut ws = Workspace::default();
    let counts = |mu: &DiscreteMeasure, t: f64, rng: &mut _, ws: &mut Workspace| -> RunningStats {
        (0..reps).map(|_| simulate_streaming(mu, t, n_res, None, rng, ws, |_| {}).unwrap().families as f64).collect()
    };
    let base = counts(&dirac(1, 1.0), 1.0, &mut rng, &mut ws);
    assert!((base.mean - 1.0).abs() < 3.0 * base.stderr());
    assert!((base.variance() - 1.0).abs() < 3.0 * (2.0f64 / reps as f64).sqrt());
    let scaled = counts(&dirac(1, 3.0), 1.0, &mut rng, &mut ws);
    assert!((scaled.mean - 3.0).abs() < 3.0 * scaled.stderr());
    let late = counts(&dirac(1, 1.0), 10.0, &mut rng, &mut ws);
    assert!(late.mean < 0.15);
}

#[test]
fn field_bookkeeping_and_ancestor_counts() {
    let mu = DiscreteMeasure::new(vec![(Point(vec![0.0, 0.0]), 2.0), (Point(vec![3.0, 0.0]), 1.0)]).unwrap();
    let mut rng = stream_rng(3, 0);
    let field = simulate_field(&mu, 0.5, 500.0, &mut rng).unwrap();
    assert_eq!(field.total_mass(), field.particles.len() as f64 / 500.0);
    assert!(field.particles.iter().all(|p| p.mass == 1.0 / 500.0));
    let mut ids: Vec<u64> = field.particles.iter().map(|p| p.ancestor_id).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(count_surviving_ancestors(&field).unwrap(), ids.len() as u64);

    let cluster = sample_cluster(&Point::origin(2), 1.0, 500.0, ClusterInit::SingleAncestor, &mut rng).unwrap();
    assert!(matches!(count_surviving_ancestors(&cluster.field), Err(Error::State(_))));
}

#[test]
fn too_coarse_resolution_is_a_config_error() {
    let mut rng = stream_rng(4, 0);
    assert!(matches!(simulate_field(&dirac(2, 1.0), 1.0, 5.0, &mut rng), Err(Error::Config(_))));
}

#[test]
fn mean_mass_is_conserved() {
    let mu = DiscreteMeasure::new(vec![(Point(vec![0.0]), 0.7), (Point(vec![1.0]), 0.8)]).unwrap();
    let mut rng = stream_rng(5, 0);
    let mut ws = Workspace::default();
    let st: RunningStats = (0..10_000)
        .map(|_| simulate_streaming(&mu, 0.5, 1000.0, None, &mut rng, &mut ws, |_| {}).unwrap().particles as f64 / 1000.0)
        .collect();
    assert!((st.mean - 1.5).abs() < 3.0 * st.stderr());
    assert!((st.variance() - 2.0 * 0.5 * 1.5).abs() < 0.1);
}

#[test]
fn rebase_partitions_the_field() {
    let mut rng = stream_rng(6, 0);
    let field = simulate_field_checkpointed(&dirac(2, 2.0), 1.0, 1000.0, Some(0.6), &mut rng).unwrap();
    let rebased = rebase_ancestors(&field, 0.6, 0.4).unwrap();
    let mut labels: Vec<u64> = rebased.particles.iter().map(|p| p.ancestor_id).collect();
    labels.sort_unstable();
    labels.dedup();
    let total: usize = labels.iter().map(|&l| rebased.restrict(l).particles.len()).sum();
    assert_eq!(total, field.particles.len());
    assert_eq!(rebase_ancestors(&field, 0.0, 1.0).unwrap(), field);
    assert!(matches!(rebase_ancestors(&field, 0.5, 0.5), Err(Error::State(_))));
    assert!(rebase_ancestors(&field, 0.6, 0.2).is_err());
}

#[test]
fn labels_given_the_checkpoint_are_cox() {
    let (reps, n_res, s, h) = (10_000, 1000.0, 0.5, 0.5);
    let mu = dirac(1, 2.0);
    let mut rng = stream_rng(7, 0);
    let mut ws = Workspace::default();
    let st: RunningStats = (0..reps)
        .map(|_| {
            let r = simulate_streaming(&mu, s + h, n_res, Some(s), &mut rng, &mut ws, |_| {}).unwrap();
            r.labels as f64 - r.checkpoint_particles.unwrap() as f64 / (1.0 + n_res * h)
        })
        .collect();
    assert!(st.mean.abs() < 3.0 * st.stderr(), "{} ± {}", st.mean, st.stderr());
}

fn cluster_masses(init: ClusterInit, t: f64, n_res: f64, reps: usize, seed: u64) -> RunningStats {
    let mut rng = stream_rng(seed, 0);
    (0..reps)
        .map(|_| sample_cluster(&Point::origin(1), t, n_res, init, &mut rng).unwrap().field.total_mass())
        .collect()
}

#[test]
fn cluster_mean_mass_is_the_age() {
    let st = cluster_masses(ClusterInit::SingleAncestor, 2.0, 1000.0, 10_000, 8);
    assert!((st.mean - 2.0).abs() < 3.0 * st.stderr(), "{} ± {}", st.mean, st.stderr());
}

#[test]
fn lump_seed_sensitivity_is_within_the_contamination_bound() {
    let t = 2.0;
    let m0 = 0.2 * t;
    let a = cluster_masses(ClusterInit::Lump { m0 }, t, 1000.0, 10_000, 9);
    let b = cluster_masses(ClusterInit::Lump { m0: m0 / 2.0 }, t, 1000.0, 10_000, 10);
    let bound = m0 / (2.0 * t) * t;
    let se = a.stderr().hypot(b.stderr());
    assert!((a.mean - b.mean).abs() < bound + 3.0 * se);
    assert!(a.mean > b.mean - 3.0 * se);
}

#[test]
fn extinct_lump_is_pathological() {
    let mut rng = stream_rng(11, 0);
    let r = sample_cluster(&Point::origin(1), 1.0, 100.0, ClusterInit::Lump { m0: 1e-9 }, &mut rng);
    assert!(matches!(r, Err(Error::Pathological(_))));
}

#[test]
fn stationary_cluster_ball_mass_is_translation_invariant() {
    let (t, n_res, eps) = (0.25, 1000.0, 0.3);
    let window = Window::cube(&[0.0, 0.0], 1.0);
    let z = [0.5, -0.2];
    let mut rng = stream_rng(12, 0);
    let (mut at0, mut atz) = (Vec::new(), Vec::new());
    for _ in 0..4000 {
        let c = sample_stationary_cluster(&window, t, n_res, ClusterInit::SingleAncestor, None, &mut rng).unwrap();
        let mass_at = |center: &[f64]| {
            c.field.particles.iter().filter(|p| Point(center.to_vec()).dist_sq(&p.position) <= eps * eps).count() as f64
                / n_res
        };
        at0.push(mass_at(&[0.0, 0.0]));
        atz.push(mass_at(&z));
    }
    assert!(two_sample_p(&at0, &atz) > 0.001);
    assert!(matches!(
        sample_stationary_cluster(&window, t, n_res, ClusterInit::SingleAncestor, Some(-1.0), &mut rng),
        Err(Error::Config(_))
    ));
}

#[test]
fn engines_agree_in_law() {
    let (reps, n_res, t) = (3000, 100.0, 1.0);
    let mu = DiscreteMeasure::new(vec![(Point(vec![0.0, 0.0]), 1.0), (Point(vec![0.5, 0.0]), 0.5)]).unwrap();
    let summarize = |f: dwlab::sim::ParticleField| {
        let sx: f64 = f.particles.iter().map(|p| p.position.0[0]).sum::<f64>() / n_res;
        (f.total_mass(), sx)
    };
    let mut rng = stream_rng(13, 0);
    let cpp: Vec<(f64, f64)> = (0..reps).map(|_| summarize(simulate_field(&mu, t, n_res, &mut rng).unwrap())).collect();
    let mut rng = stream_rng(13, 1);
    let evd: Vec<(f64, f64)> = (0..reps)
        .map(|_| summarize(simulate_field_event_driven(&mu, t, n_res, None, &mut rng).unwrap()))
        .collect();
    let split = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v.iter().copied().unzip() };
    let ((m1, x1), (m2, x2)) = (split(&cpp), split(&evd));
    assert!(two_sample_p(&m1, &m2) > 0.001);
    assert!(two_sample_p(&x1, &x2) > 0.001);
}

#[test]
fn field_is_a_poisson_sum_of_clusters() {
    let (reps, n_res, t, m) = (5000, 1000.0, 0.5, 1.0);
    let mu = dirac(1, m);
    let mut rng = stream_rng(14, 0);
    let mut ws = Workspace::default();
    let direct: Vec<f64> = (0..reps)
        .map(|_| simulate_streaming(&mu, t, n_res, None, &mut rng, &mut ws, |_| {}).unwrap().particles as f64 / n_res)
        .collect();
    let ancestors = Poisson::new(n_res * m / (1.0 + n_res * t)).unwrap();
    let mut rng = stream_rng(14, 1);
    let assembled: Vec<f64> = (0..reps)
        .map(|_| {
            let k = ancestors.sample(&mut rng) as usize;
            (0..k)
                .map(|_| {
                    sample_cluster(&Point::origin(1), t, n_res, ClusterInit::SingleAncestor, &mut rng).unwrap().field.total_mass()
                })
                .sum()
        })
        .collect();
    assert!(two_sample_p(&direct, &assembled) > 0.001);
}
