use dwlab::point_process::{order_statistic_density, sample_poisson_times, sample_uniform_binomial, OrderedTimes};
use dwlab::quad::adaptive_simpson;
use dwlab::rng::stream_rng;
use dwlab::stats::{ks_pvalue, ks_two_sample, RunningStats};
use proptest::prelude::*;
use rand::seq::index::sample;

proptest! {
    #[test]
    fn binomial_samples_are_sorted_and_in_range(n in 0usize..50, horizon in 0.1..10.0f64, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let s = sample_uniform_binomial(n, horizon, &mut rng);
        prop_assert_eq!(s.len(), n);
        prop_assert!(s.times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.times.iter().all(|&x| x > 0.0 && x < horizon));
        prop_assert!(OrderedTimes::new(s.times.clone(), horizon).is_ok());
    }

    #[test]
    fn order_statistic_density_integrates_to_one(n in 1usize..8, k_frac in 0.0..1.0f64, horizon in 0.5..3.0f64) {
        let k = 1 + ((n as f64 * k_frac) as usize).min(n - 1);
        let total = adaptive_simpson(|s| order_statistic_density(n, k, s, horizon).unwrap(), 0.0, horizon, 1e-12, 8);
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn density_examples() {
    assert_eq!(order_statistic_density(1, 1, 0.3, 1.0).unwrap(), 1.0);
    assert!((order_statistic_density(3, 2, 0.5, 1.0).unwrap() - 1.5).abs() < 1e-12);
    let total = adaptive_simpson(|s| order_statistic_density(5, 5, s, 2.0).unwrap(), 0.0, 2.0, 1e-13, 8);
    assert!((total - 1.0).abs() < 1e-10);
    assert!(order_statistic_density(3, 0, 0.5, 1.0).is_err());
    assert!(order_statistic_density(3, 4, 0.5, 1.0).is_err());
}

#[test]
fn order_statistic_means_large_n() {
    let n = 100_000;
    let mut rng = stream_rng(7, 0);
    let s = sample_uniform_binomial(n, 1.0, &mut rng);
    let nf = n as f64;
    for k in [1, 1000, 50_000, 99_000, n] {
        let mean = k as f64 / (nf + 1.0);
        let sd = (mean * (1.0 - mean) / (nf + 2.0)).sqrt();
        assert!((s.times[k - 1] - mean).abs() < 4.0 * sd, "k = {k}");
    }
}

#[test]
fn poisson_mean_count() {
    let reps = 100_000;
    let mut rng = stream_rng(8, 0);
    let mut st = RunningStats::new();
    for _ in 0..reps {
        st.push(sample_poisson_times(2.0, 2.0, &mut rng).unwrap().len() as f64);
    }
    assert!((st.mean - 4.0).abs() < 3.0 * (4.0f64 / reps as f64).sqrt());
}

#[test]
fn poisson_times_given_count_are_binomial() {
    let mut rng = stream_rng(9, 0);
    let mut cond = Vec::new();
    while cond.len() < 20_000 {
        let p = sample_poisson_times(3.0, 1.0, &mut rng).unwrap();
        if p.len() == 3 {
            cond.push(p.times[1]);
        }
    }
    let mut rng = stream_rng(9, 1);
    let binom: Vec<f64> = (0..20_000).map(|_| sample_uniform_binomial(3, 1.0, &mut rng).times[1]).collect();
    let d = ks_two_sample(&cond, &binom);
    assert!(ks_pvalue(d, 10_000.0) > 0.001, "KS distance {d}");
}

#[test]
fn poisson_product_identity() {
    let c: f64 = 2.0;
    let reps = 200_000;
    let mut rng = stream_rng(10, 0);
    let (mut lhs, mut rhs) = (RunningStats::new(), RunningStats::new());
    for _ in 0..reps {
        let p = sample_poisson_times(c, 50.0, &mut rng).unwrap();
        let (t1, t2) = (p.times[0], p.times[1]);
        lhs.push(t1 * t2);
        rhs.push(c * t1.powi(3) / 2.0);
    }
    let target = 3.0 / (c * c);
    let se = lhs.stderr().hypot(rhs.stderr());
    assert!((lhs.mean - rhs.mean).abs() < 3.0 * se);
    assert!((lhs.mean - target).abs() < 3.0 * lhs.stderr());
}

#[test]
fn binomial_split_gives_independent_parts() {
    let (n, k, reps) = (6, 2, 20_000);
    let mut rng = stream_rng(11, 0);
    let (mut first, mut ref_first) = (Vec::new(), Vec::new());
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    for _ in 0..reps {
        let s = sample_uniform_binomial(n, 1.0, &mut rng);
        let mut pick = sample(&mut rng, n, k).into_vec();
        pick.sort_unstable();
        let chosen: Vec<f64> = pick.iter().map(|&i| s.times[i]).collect();
        let rest: Vec<f64> = (0..n).filter(|i| !pick.contains(i)).map(|i| s.times[i]).collect();
        first.push(chosen[0]);
        ref_first.push(sample_uniform_binomial(k, 1.0, &mut rng).times[0]);
        ca.push(chosen.iter().filter(|&&x| x < 0.5).count() as f64);
        cb.push(rest.iter().filter(|&&x| x >= 0.5).count() as f64);
    }
    let d = ks_two_sample(&first, &ref_first);
    assert!(ks_pvalue(d, reps as f64 / 2.0) > 0.001);
    let rho = dwlab::stats::pearson(&ca, &cb);
    assert!(rho.abs() < 4.0 / (reps as f64).sqrt(), "rho = {rho}");
}
