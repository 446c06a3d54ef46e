//! One-dimensional quadrature: adaptive Simpson and Gauss rules.

use std::f64::consts::PI;

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`. The interval is first split into `panels` pieces so that narrow
/// features are not missed by the coarsest sampling.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let tol_each = tol / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == panels { b } else { lo + h };
            let (flo, fhi) = (f(lo), f(hi));
            let m = 0.5 * (lo + hi);
            let fm = f(m);
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
            simpson_rec(&f, lo, hi, flo, fm, fhi, whole, tol_each, 48)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        left + right + diff / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// A fixed quadrature rule: nodes and weights.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre rule on `[-1, 1]` with `n` nodes (Newton iteration on the
/// Legendre recurrence).
pub fn gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule {
    let r = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    Rule {
        nodes: r.nodes.iter().map(|x| c + h * x).collect(),
        weights: r.weights.iter().map(|w| w * h).collect(),
    }
}

/// Standard-normal expectation rule: `E f(Z) ≈ Σ w_i f(z_i)` for
/// `Z ~ N(0, 1)`; weights sum to one. Built from physicists' Gauss–Hermite
/// nodes via Newton iteration on the orthonormal recurrence.
pub fn normal_rule(n: usize) -> Rule {
    let mut x_nodes = vec![0.0; n];
    let mut w_nodes = vec![0.0; n];
    let nf = n as f64;
    let pim4 = PI.powf(-0.25);
    let mut z: f64 = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x_nodes[0],
            3 => 1.91 * z - 0.91 * x_nodes[1],
            _ => 2.0 * z - x_nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-14 {
                break;
            }
        }
        x_nodes[i] = z;
        x_nodes[n - 1 - i] = -z;
        let w = 2.0 / (pp * pp);
        w_nodes[i] = w;
        w_nodes[n - 1 - i] = w;
    }
    let s = PI.sqrt();
    Rule {
        nodes: x_nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
        weights: w_nodes.iter().map(|w| w / s).collect(),
    }
}

/// Quadrature on the unit sphere `S^{d-1}` for `d` in 1..=3: unit vectors
/// and weights summing to the sphere's surface area. `n` controls the
/// resolution (angles per axis).
pub fn sphere_rule(d: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    match d {
        1 => (vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]),
        2 => (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                (vec![th.cos(), th.sin()], 2.0 * PI / n as f64)
            })
            .unzip(),
        3 => {
            let z = gauss_legendre(n);
            let mut dirs = Vec::with_capacity(2 * n * n);
            let mut w = Vec::with_capacity(2 * n * n);
            let m = 2 * n;
            for (zi, wz) in z.iter() {
                let rho = (1.0 - zi * zi).sqrt();
                for k in 0..m {
                    let ph = 2.0 * PI * k as f64 / m as f64;
                    dirs.push(vec![rho * ph.cos(), rho * ph.sin(), zi]);
                    w.push(wz * 2.0 * PI / m as f64);
                }
            }
            (dirs, w)
        }
        _ => panic!("sphere rule implemented for d <= 3"),
    }
}
