//! One-dimensional reductions for radially symmetric data.
//!
//! Flat space uses the radius r on [0, R]; the round sphere uses the polar
//! angle θ on [0, π]. Nodes are cell centred, `x_i = (i + ½) h`, so neither
//! the origin nor the poles are grid points. Ghost values reflect evenly
//! across r = 0 and both poles; on flat space the outer ghost is supplied.
//!
//! A radial symmetric tensor has one radial eigenvalue and an (n-1)-fold
//! tangential one. For `e^{-2w} g0` on the unit sphere:
//! `λ_r = w'' + ½w'² + ½`, `λ_t = w' cot θ - ½w'² + ½`.

use crate::error::{Error, Result};
use crate::quadrature::unit_sphere_area;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RadialKind {
    Flat { radius: f64 },
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub n: usize,
    pub kind: RadialKind,
    pub nodes: usize,
    pub h: f64,
}

impl RadialGrid {
    pub fn flat(n: usize, radius: f64, nodes: usize) -> Result<Self> {
        if n < 3 || nodes < 5 || !(radius > 0.0) {
            return Err(Error::Domain("radial grid needs n >= 3, 5 nodes and R > 0".into()));
        }
        Ok(Self { n, kind: RadialKind::Flat { radius }, nodes, h: radius / nodes as f64 })
    }

    pub fn sphere(n: usize, nodes: usize) -> Result<Self> {
        if n < 3 || nodes < 5 {
            return Err(Error::Domain("radial grid needs n >= 3 and 5 nodes".into()));
        }
        Ok(Self { n, kind: RadialKind::Sphere, nodes, h: std::f64::consts::PI / nodes as f64 })
    }

    pub fn coord(&self, i: isize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.nodes as isize).map(|i| self.coord(i)).collect()
    }

    /// Volume weights of the background metric (midpoint rule).
    pub fn weights(&self) -> Vec<f64> {
        let area = unit_sphere_area(self.n);
        let p = self.n as i32 - 1;
        self.coords()
            .iter()
            .map(|&x| match self.kind {
                RadialKind::Flat { .. } => area * x.powi(p) * self.h,
                RadialKind::Sphere => area * x.sin().powi(p) * self.h,
            })
            .collect()
    }

    /// First and second central differences at node i, with ghosts.
    pub fn derivs(&self, f: &[f64], outer: f64, i: usize) -> (f64, f64) {
        let m = self.nodes;
        let left = if i == 0 { f[0] } else { f[i - 1] };
        let right = if i + 1 == m {
            match self.kind {
                RadialKind::Flat { .. } => outer,
                RadialKind::Sphere => f[m - 1],
            }
        } else {
            f[i + 1]
        };
        let h = self.h;
        ((right - left) / (2.0 * h), (right - 2.0 * f[i] + left) / (h * h))
    }

    /// Radial and tangential eigenvalues of W for gauge-w data.
    pub fn spectrum_w(&self, w: &[f64], outer: f64, i: usize) -> (f64, f64) {
        let (d1, d2) = self.derivs(w, outer, i);
        let x = self.coord(i as isize);
        match self.kind {
            RadialKind::Flat { .. } => (d2 + 0.5 * d1 * d1, d1 / x - 0.5 * d1 * d1),
            RadialKind::Sphere => (d2 + 0.5 * d1 * d1 + 0.5, d1 / x.tan() - 0.5 * d1 * d1 + 0.5),
        }
    }

    /// Radial and tangential eigenvalues of V/v on flat space for gauge-v data.
    pub fn spectrum_v_over_v(&self, v: &[f64], outer: f64, i: usize) -> Result<(f64, f64)> {
        let RadialKind::Flat { .. } = self.kind else {
            return Err(Error::Domain("the v-gauge radial reduction is implemented on flat space".into()));
        };
        let nf = self.n as f64;
        let (d1, d2) = self.derivs(v, outer, i);
        let x = self.coord(i as isize);
        let q = d1 * d1 / v[i];
        let lr = -d2 + (nf - 1.0) / (nf - 2.0) * q;
        let lt = -d1 / x - q / (nf - 2.0);
        Ok((lr / v[i], lt / v[i]))
    }
}

/// σ_k of the spectrum (λ_r, λ_t, …, λ_t) with n-1 tangential copies.
pub fn radial_sigma(n: usize, k: usize, lr: f64, lt: f64) -> f64 {
    use crate::symmfunc::binomial;
    if k == 0 {
        return 1.0;
    }
    binomial(n - 1, k - 1) * lr * lt.powi(k as i32 - 1) + binomial(n - 1, k) * lt.powi(k as i32)
}

/// A radial profile in gauge w, with the outer boundary value on flat space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub grid: RadialGrid,
    pub w: Vec<f64>,
    pub outer: f64,
}

impl RadialProfile {
    /// Samples `f` at the nodes; on flat space the outer ghost is `f(R + h/2)`.
    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let w: Vec<f64> = grid.coords().iter().map(|&x| f(x)).collect();
        let outer = f(grid.coord(grid.nodes as isize));
        let p = Self { grid, w, outer };
        p.check_even(1e-3)?;
        Ok(p)
    }

    /// Rejects profiles whose slope at the origin exceeds `tol`.
    pub fn check_even(&self, tol: f64) -> Result<()> {
        if let Some(i) = self.w.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { node: i });
        }
        let h = self.grid.h;
        // Quadratic through the first three nodes, differentiated at the origin.
        let (a, b, c) = (self.w[0], self.w[1], self.w[2]);
        let slope = fit_slope_at_zero(h, a, b, c);
        if slope > tol {
            return Err(Error::Symmetry(slope));
        }
        Ok(())
    }
}

fn fit_slope_at_zero(h: f64, a: f64, b: f64, c: f64) -> f64 {
    let (x0, x1, x2) = (0.5 * h, 1.5 * h, 2.5 * h);
    let d0 = (-x1 - x2) / ((x0 - x1) * (x0 - x2));
    let d1 = (-x0 - x2) / ((x1 - x0) * (x1 - x2));
    let d2 = (-x0 - x1) / ((x2 - x0) * (x2 - x1));
    (a * d0 + b * d1 + c * d2).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::bubble;
    use crate::symmfunc::sigma_slice;

    #[test]
    fn sphere_weights_sum_to_volume() {
        let g = RadialGrid::sphere(4, 200).unwrap();
        let vol: f64 = g.weights().iter().sum();
        let exact = 8.0 * std::f64::consts::PI.powi(2) / 3.0;
        assert!((vol - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn radial_sigma_matches_full_spectrum() {
        let lam = [1.3, -0.2, -0.2, -0.2, -0.2];
        for k in 0..=5 {
            assert!((radial_sigma(5, k, 1.3, -0.2) - sigma_slice(&lam, k)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_sphere_profile_is_half() {
        let g = RadialGrid::sphere(4, 32).unwrap();
        let w = vec![0.3; 32];
        for i in [0, 10, 31] {
            let (lr, lt) = g.spectrum_w(&w, 0.0, i);
            assert_eq!((lr, lt), (0.5, 0.5));
        }
    }

    #[test]
    fn bubble_branches_coincide() {
        let n = 4;
        let g = RadialGrid::flat(n, 3.0, 192).unwrap();
        let v: Vec<f64> = g.coords().iter().map(|&r| bubble(n, 1.0, &[r])).collect();
        let outer = bubble(n, 1.0, &[g.coord(192)]);
        for i in 0..192 {
            let (lr, lt) = g.spectrum_v_over_v(&v, outer, i).unwrap();
            let want = 2.0 * v[i] * v[i];
            assert!((lr - want).abs() < 2e-3 && (lt - want).abs() < 2e-3, "{i} {lr} {lt} {want}");
        }
    }

    #[test]
    fn constant_flat_profile_is_not_admissible() {
        let g = RadialGrid::flat(4, 1.0, 16).unwrap();
        let v = vec![1.0; 16];
        let (lr, lt) = g.spectrum_v_over_v(&v, 1.0, 5).unwrap();
        assert_eq!(radial_sigma(4, 2, lr, lt), 0.0);
    }

    #[test]
    fn odd_profile_is_rejected() {
        let g = RadialGrid::sphere(4, 64).unwrap();
        assert!(RadialProfile::from_fn(g.clone(), |t| t.cos().powi(2)).is_ok());
        assert!(matches!(RadialProfile::from_fn(g, |t| t), Err(Error::Symmetry(_))));
    }
}
