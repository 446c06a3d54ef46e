//! Heat-kernel (isotropic Gaussian) densities and their convolutions with
//! discrete measures.
//!
//! All densities are evaluated in log space and exponentiated at the end, so
//! arguments with `|x|²/2t` far beyond 700 underflow cleanly to zero instead
//! of producing `0 * inf` artifacts.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Result};

/// A position in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return domain("a point needs at least one coordinate");
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return domain("point coordinates must be finite");
        }
        Ok(Self(coords))
    }

    pub fn origin(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        dist_sq(&self.0, &other.0)
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum()
}

pub(crate) fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// An ordered `n`-tuple of points of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointTuple(pub Vec<Point>);

impl PointTuple {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let Some(first) = points.first() else {
            return domain("a point tuple needs at least one point");
        };
        let d = first.dim();
        if points.iter().any(|p| p.dim() != d) {
            return domain("all points of a tuple must share one dimension");
        }
        Ok(Self(points))
    }

    /// Convenience constructor from raw coordinate rows.
    pub fn from_coords(rows: &[&[f64]]) -> Result<Self> {
        Self::new(rows.iter().map(|r| Point::new(r.to_vec())).collect::<Result<_>>()?)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0[0].dim()
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    /// Distance to the diagonal set: `min_{i<j} |x_i - x_j| / √2`, the
    /// orthogonal distance from the tuple to the nearest subspace
    /// `{x_i = x_j}`. A single point has no diagonal, so this is `+∞`.
    pub fn diagonal_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(self.0[i].dist_sq(&self.0[j]));
            }
        }
        (best / 2.0).sqrt()
    }

    /// True iff all components are distinct.
    pub fn is_off_diagonal(&self) -> bool {
        self.diagonal_distance() > 0.0
    }

    /// Sub-tuple with the given component indices.
    pub fn select(&self, idx: &[usize]) -> PointTuple {
        PointTuple(idx.iter().map(|&i| self.0[i].clone()).collect())
    }

    /// Every component translated by `-u`.
    pub fn shifted(&self, u: &[f64]) -> PointTuple {
        PointTuple(
            self.0
                .iter()
                .map(|p| Point(p.0.iter().zip(u).map(|(a, b)| a - b).collect()))
                .collect(),
        )
    }
}

/// A finite measure with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<(Point, f64)>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<(Point, f64)>) -> Result<Self> {
        if let Some((p, _)) = atoms.first() {
            let d = p.dim();
            if atoms.iter().any(|(q, _)| q.dim() != d) {
                return domain("all atoms must share one dimension");
            }
        }
        if atoms.iter().any(|(_, m)| !(m.is_finite() && *m >= 0.0)) {
            return domain("atom masses must be finite and nonnegative");
        }
        Ok(Self { atoms })
    }

    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Point mass `mass · δ_at`.
    pub fn dirac(at: Point, mass: f64) -> Result<Self> {
        Self::new(vec![(at, mass)])
    }

    /// Lebesgue measure on the box `[lo, hi]^d` discretized into
    /// `cells_per_axis^d` atoms at the cell centers, each carrying its cell
    /// volume.
    pub fn lebesgue_box(lo: f64, hi: f64, d: usize, cells_per_axis: usize) -> Result<Self> {
        if !(hi > lo) || d == 0 || cells_per_axis == 0 {
            return domain("lebesgue box needs hi > lo, d >= 1, cells >= 1");
        }
        let h = (hi - lo) / cells_per_axis as f64;
        let vol = h.powi(d as i32);
        let total = cells_per_axis.pow(d as u32);
        let atoms = (0..total)
            .map(|mut idx| {
                let coords = (0..d)
                    .map(|_| {
                        let k = idx % cells_per_axis;
                        idx /= cells_per_axis;
                        lo + (k as f64 + 0.5) * h
                    })
                    .collect();
                (Point(coords), vol)
            })
            .collect();
        Ok(Self { atoms })
    }

    /// Default discretization of the Lebesgue measure on a window: 64 cells
    /// per axis.
    pub fn lebesgue_window(lo: f64, hi: f64, d: usize) -> Result<Self> {
        Self::lebesgue_box(lo, hi, d, 64)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, m)| m).sum()
    }

    pub fn dim(&self) -> Option<usize> {
        self.atoms.first().map(|(p, _)| p.dim())
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The measure scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { atoms: self.atoms.iter().map(|(p, m)| (p.clone(), m * c)).collect() }
    }
}

/// `ln p_t(x)` for a squared norm `r2 = |x|²` in dimension `d`; no checks.
#[inline]
pub fn log_heat_sq(r2: f64, d: usize, t: f64) -> f64 {
    -0.5 * d as f64 * (2.0 * PI * t).ln() - r2 / (2.0 * t)
}

/// `p_t(x)` from the squared norm; no checks.
#[inline]
pub fn heat_sq(r2: f64, d: usize, t: f64) -> f64 {
    log_heat_sq(r2, d, t).exp()
}

/// `p_t(x)` for raw coordinates; no checks.
#[inline]
pub fn heat(x: &[f64], t: f64) -> f64 {
    heat_sq(norm_sq(x), x.len(), t)
}

/// Density `(2πt)^{-d/2} exp(-|x|²/2t)` of the centered Gaussian law on `R^d`
/// with covariance `t·I`.
pub fn heat_density(x: &Point, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("heat density needs t > 0, got {t}"));
    }
    Ok(heat(x.coords(), t))
}

/// `Σ_u μ{u} Π_k p_t(x_k - u)`: the convolution of `μ` with the product
/// kernel `p_t^{⊗n}` at the tuple `xs`. The empty measure gives 0.
pub fn convolve_heat(mu: &DiscreteMeasure, t: f64, xs: &PointTuple) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("convolution needs t > 0, got {t}"));
    }
    if let Some(d) = mu.dim() {
        if d != xs.dim() {
            return domain("measure and tuple dimensions differ");
        }
    }
    let d = xs.dim();
    Ok(mu
        .atoms
        .iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|(u, m)| {
            let log: f64 = xs.points().iter().map(|x| log_heat_sq(x.dist_sq(u), d, t)).sum();
            m * log.exp()
        })
        .sum())
}

/// The dominating envelope `(1 ∨ t r_x^{-2})^{nd/2} Π_k p_{nt}(x_k)` for
/// order-`n` cluster moment densities, where `r_x` is the distance of the
/// tuple to the diagonal. For `n = 1` the factor is 1 and the envelope is
/// `p_t(x_1)`.
pub fn gaussian_domination_factor(xs: &PointTuple, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("envelope needs t > 0, got {t}"));
    }
    let n = xs.len();
    let d = xs.dim();
    let r = xs.diagonal_distance();
    if r == 0.0 {
        return domain("tuple lies on the diagonal");
    }
    let factor_log = if r.is_infinite() { 0.0 } else { (t / (r * r)).max(1.0).ln() };
    let nt = n as f64 * t;
    let log: f64 = xs.points().iter().map(|x| log_heat_sq(x.norm_sq(), d, nt)).sum::<f64>()
        + 0.5 * (n * d) as f64 * factor_log;
    Ok(log.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn heat_density_values() {
        let v = heat_density(&pt(&[0.0, 0.0]), 1.0).unwrap();
        assert!((v - 0.159_154_94).abs() < 1e-8);
        let v3 = heat_density(&pt(&[1.0, 0.0, 0.0]), 1.0).unwrap();
        assert!((v3 - (2.0 * PI).powf(-1.5) * (-0.5f64).exp()).abs() < 1e-15);
        assert!((v3 - 0.038_510_8).abs() < 1e-7);
        assert!(heat_density(&pt(&[0.0]), 0.0).is_err());
        assert!(heat_density(&pt(&[0.0]), -1.0).is_err());
    }

    #[test]
    fn heat_density_far_tail_underflows_to_zero() {
        let v = heat_density(&pt(&[100.0, 0.0]), 0.001).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn convolve_heat_examples() {
        let delta = DiscreteMeasure::dirac(Point::origin(2), 1.0).unwrap();
        let x = PointTuple::from_coords(&[&[0.0, 0.0]]).unwrap();
        assert!((convolve_heat(&delta, 1.0, &x).unwrap() - 0.159_154_94).abs() < 1e-8);
        let two = DiscreteMeasure::new(vec![(pt(&[1.0, 0.0]), 0.5), (pt(&[-1.0, 0.0]), 0.5)]).unwrap();
        let v = convolve_heat(&two, 1.0, &x).unwrap();
        assert!((v - (2.0 * PI).recip() * (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.096_532_4).abs() < 1e-7);
        assert_eq!(convolve_heat(&DiscreteMeasure::empty(), 1.0, &x).unwrap(), 0.0);
    }

    #[test]
    fn convolve_with_lebesgue_grid_approaches_one() {
        // ∫ p_t = 1, so a fine grid of the Lebesgue measure over a wide
        // window convolves to ≈ 1 anywhere well inside it.
        let x = PointTuple::from_coords(&[&[0.3, -0.2]]).unwrap();
        let mut errs = Vec::new();
        for cells in [8usize, 16, 64] {
            let leb = DiscreteMeasure::lebesgue_box(-8.0, 8.0, 2, cells).unwrap();
            errs.push((convolve_heat(&leb, 1.0, &x).unwrap() - 1.0).abs());
        }
        assert!(errs[2] < 1e-8, "{errs:?}");
        assert!(errs[0] > errs[2]);
    }

    #[test]
    fn domination_factor_cases() {
        let one = PointTuple::from_coords(&[&[0.5, 0.1]]).unwrap();
        let v = gaussian_domination_factor(&one, 1.0).unwrap();
        assert!((v - heat(&[0.5, 0.1], 1.0)).abs() < 1e-15);

        let pair = PointTuple::from_coords(&[&[1.0, 0.0], &[-1.0, 0.0]]).unwrap();
        assert!((pair.diagonal_distance() - 2f64.sqrt()).abs() < 1e-15);
        let v = gaussian_domination_factor(&pair, 1.0).unwrap();
        let want = heat(&[1.0, 0.0], 2.0) * heat(&[-1.0, 0.0], 2.0);
        assert!((v - want).abs() < 1e-15);

        let tight = PointTuple::from_coords(&[&[0.1, 0.0], &[-0.1, 0.0]]).unwrap();
        let r2 = tight.diagonal_distance().powi(2);
        let v = gaussian_domination_factor(&tight, 1.0).unwrap();
        let base = heat(&[0.1, 0.0], 2.0) * heat(&[-0.1, 0.0], 2.0);
        assert!((v / base - (1.0 / r2).powi(2)).abs() < 1e-9);

        let diag = PointTuple::from_coords(&[&[0.1, 0.0], &[0.1, 0.0]]).unwrap();
        assert!(gaussian_domination_factor(&diag, 1.0).is_err());
    }

    #[test]
    fn tuple_validation() {
        assert!(PointTuple::new(vec![]).is_err());
        assert!(PointTuple::from_coords(&[&[0.0], &[0.0, 1.0]]).is_err());
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(DiscreteMeasure::new(vec![(pt(&[0.0]), -1.0)]).is_err());
    }
}
