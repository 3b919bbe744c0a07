//! Conformal factors in three gauges and the conformal Schouten operators.
//!
//! A conformal metric is written `g = v^{4/(n-2)} g0 = u^{-2} g0 = e^{-2w} g0`,
//! so `u = e^w = v^{-2/(n-2)}`.
//!
//! * V = -∇²v + n/(n-2) ∇v⊗∇v/v - 1/(n-2) |∇v|²/v g0 + (n-2)/2 v A0
//! * U = ∇²u - |∇u|²/(2u) g0 + u A0
//! * W = ∇²w + ∇w⊗∇w - ½|∇w|² g0 + A0
//!
//! With A_g the Schouten tensor of g, the geometric k-curvature
//! `σ_k(g^{-1} A_g)` equals `(2/(n-2))^k v^{-4k/(n-2)} σ_k(λ(V/v))`,
//! `u^k σ_k(λ(U))` and `e^{2kw} σ_k(λ(W))`, eigenvalues taken relative to g0.

use crate::error::{Error, Result};
use crate::geometry::{ChartGrid, MetricField, MetricKind, SchoutenBackground, Topology};
use crate::linalg;
use crate::symmfunc::{in_cone, sigma_all, sigma_slice};
use serde::{Deserialize, Serialize};

const MIN_FACTOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gauge {
    V,
    U,
    W,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalFactor {
    pub grid: ChartGrid,
    pub gauge: Gauge,
    pub data: Vec<f64>,
}

impl ConformalFactor {
    pub fn new(grid: ChartGrid, gauge: Gauge, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Format("factor data length does not match the grid".into()));
        }
        let f = Self { grid, gauge, data };
        f.check()?;
        Ok(f)
    }

    pub fn from_fn(grid: ChartGrid, gauge: Gauge, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let data = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self::new(grid, gauge, data)
    }

    pub fn constant(grid: ChartGrid, gauge: Gauge, c: f64) -> Result<Self> {
        let data = vec![c; grid.len()];
        Self::new(grid, gauge, data)
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    fn check(&self) -> Result<()> {
        for (node, &value) in self.data.iter().enumerate() {
            let bad = match self.gauge {
                Gauge::V | Gauge::U => !(value >= MIN_FACTOR) || !value.is_finite(),
                Gauge::W => !value.is_finite(),
            };
            if bad {
                return Err(Error::Gauge { node, value });
            }
        }
        Ok(())
    }

    /// Pointwise change of gauge; the identity when `target` equals the current gauge.
    pub fn convert(&self, target: Gauge) -> Result<Self> {
        if target == self.gauge {
            return Ok(self.clone());
        }
        let n = self.n() as f64;
        let e = 2.0 / (n - 2.0);
        let data = self
            .data
            .iter()
            .map(|&x| {
                let u = match self.gauge {
                    Gauge::V => x.powf(-e),
                    Gauge::U => x,
                    Gauge::W => x.exp(),
                };
                match target {
                    Gauge::V => u.powf(-1.0 / e),
                    Gauge::U => u,
                    Gauge::W => u.ln(),
                }
            })
            .collect();
        Self::new(self.grid.clone(), target, data)
    }

    /// Multiplies the metric by `c^{4/(n-2)}`, i.e. `v -> c v`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let v = self.convert(Gauge::V)?;
        let data = v.data.iter().map(|x| c * x).collect();
        Self::new(self.grid.clone(), Gauge::V, data)?.convert(self.gauge)
    }
}

pub fn gauge_convert(f: &ConformalFactor, target: Gauge) -> Result<ConformalFactor> {
    f.convert(target)
}

/// Pointwise operator evaluation on a chart with a fixed background.
#[derive(Debug, Clone, Copy)]
pub struct Operators<'a> {
    pub metric: &'a MetricField,
    pub bg: &'a SchoutenBackground,
}

/// Reusable buffers for node evaluations.
#[derive(Debug, Clone)]
pub struct NodeScratch {
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub mat: Vec<f64>,
    pub a: Vec<f64>,
    pub g: Vec<f64>,
    pub ginv: Vec<f64>,
}

impl NodeScratch {
    pub fn new(n: usize) -> Self {
        Self {
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
            mat: vec![0.0; n * n],
            a: vec![0.0; n * n],
            g: vec![0.0; n * n],
            ginv: vec![0.0; n * n],
        }
    }
}

impl<'a> Operators<'a> {
    pub fn new(metric: &'a MetricField, bg: &'a SchoutenBackground) -> Result<Self> {
        if metric.grid != bg.grid {
            return Err(Error::Domain("metric and Schouten background live on different grids".into()));
        }
        Ok(Self { metric, bg })
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.metric.grid
    }

    pub fn n(&self) -> usize {
        self.metric.grid.n
    }

    /// Distance from a bounded edge below which operators are not evaluated.
    pub fn margin(&self) -> usize {
        match self.grid().topology {
            Topology::Periodic => 0,
            Topology::Bounded => 1usize.max(self.bg.margin).max(self.metric.christoffel_margin()),
        }
    }

    pub fn evaluable(&self, idx: usize) -> bool {
        self.grid().is_interior(idx, self.margin())
    }

    /// Gradient and covariant Hessian of `f` at an evaluable node.
    pub fn derivatives(&self, f: &[f64], idx: usize, grad: &mut [f64], hess: &mut [f64]) -> Result<()> {
        let grid = self.grid();
        let n = grid.n;
        if !self.evaluable(idx) {
            return Err(Error::Boundary(format!("node {idx} lies in the margin")));
        }
        let sh = |i: usize, a: usize, o: isize| grid.shift(i, a, o).expect("evaluable node");
        for a in 0..n {
            grad[a] = (f[sh(idx, a, 1)] - f[sh(idx, a, -1)]) / (2.0 * grid.spacing[a]);
        }
        for a in 0..n {
            hess[a * n + a] = crate::geometry::hessian_of(grid, f, idx, a, a);
            for b in a + 1..n {
                let v = crate::geometry::hessian_of(grid, f, idx, a, b);
                hess[a * n + b] = v;
                hess[b * n + a] = v;
            }
        }
        if self.metric.kind != MetricKind::Flat {
            let gam = self.metric.christoffel_at(idx)?;
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for c in 0..n {
                        s += gam[c * n * n + a * n + b] * grad[c];
                    }
                    hess[a * n + b] -= s;
                }
            }
        }
        Ok(())
    }

    fn load_metric(&self, idx: usize, s: &mut NodeScratch) -> Result<Option<f64>> {
        let scale = self.metric.conformal_scale(idx);
        match scale {
            Some(c) => {
                let n = self.n();
                s.g.iter_mut().for_each(|x| *x = 0.0);
                s.ginv.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..n {
                    s.g[i * n + i] = c;
                    s.ginv[i * n + i] = 1.0 / c;
                }
            }
            None => {
                s.g.copy_from_slice(&self.metric.g_at(idx));
                s.ginv.copy_from_slice(&self.metric.g_inv_at(idx)?);
            }
        }
        self.bg.a_into(idx, scale, &mut s.a);
        Ok(scale)
    }

    /// The operator matrix of `kind` for gauge data `f` at node `idx`, written to `s.mat`.
    /// Returns the conformal scale of g0 at the node when the chart is conformally flat.
    pub fn node_matrix(&self, kind: Gauge, f: &[f64], idx: usize, s: &mut NodeScratch) -> Result<Option<f64>> {
        let n = self.n();
        let scale = self.load_metric(idx, s)?;
        self.derivatives(f, idx, &mut s.grad, &mut s.hess)?;
        let x = f[idx];
        let mut p2 = 0.0;
        for a in 0..n {
            for b in 0..n {
                p2 += s.ginv[a * n + b] * s.grad[a] * s.grad[b];
            }
        }
        let nf = n as f64;
        for a in 0..n {
            for b in 0..n {
                let t = a * n + b;
                let pp = s.grad[a] * s.grad[b];
                s.mat[t] = match kind {
                    Gauge::V => {
                        -s.hess[t] + nf / (nf - 2.0) * pp / x - p2 / ((nf - 2.0) * x) * s.g[t]
                            + 0.5 * (nf - 2.0) * x * s.a[t]
                    }
                    Gauge::U => s.hess[t] - p2 / (2.0 * x) * s.g[t] + x * s.a[t],
                    Gauge::W => s.hess[t] + pp - 0.5 * p2 * s.g[t] + s.a[t],
                };
            }
        }
        linalg::symmetrize(&mut s.mat, n);
        Ok(scale)
    }

    /// Eigenvalues of `mat` relative to g0 at the node, sorted descending.
    pub fn spectrum_of(&self, mat: &[f64], idx: usize, scale: Option<f64>) -> Result<Vec<f64>> {
        let n = self.n();
        match scale {
            Some(c) => Ok(linalg::sym_eigenvalues(mat, n).into_iter().map(|e| e / c).collect()),
            None => linalg::generalized_eigenvalues(mat, &self.metric.g_at(idx), n)
                .map_err(|_| Error::Geometry { node: idx }),
        }
    }

    /// σ_0..σ_kmax of the eigenvalues of `mat` relative to g0 without an eigensolve.
    pub fn sigmas_of(&self, mat: &[f64], scale: Option<f64>, ginv: &[f64], kmax: usize) -> Vec<f64> {
        let n = self.n();
        match scale {
            Some(c) => {
                let mut s = linalg::sigma_all_matrix(mat, n, kmax);
                let mut ck = 1.0;
                for v in s.iter_mut() {
                    *v /= ck;
                    ck *= c;
                }
                s
            }
            None => linalg::sigma_all_matrix(&linalg::matmul(ginv, mat, n), n, kmax),
        }
    }
}

/// A field of V, U or W matrices and their spectra relative to g0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalHessianField {
    pub grid: ChartGrid,
    pub kind: Gauge,
    /// Operator matrices, n² per node; NaN inside the margin.
    pub mat: Vec<f64>,
    /// Eigenvalues relative to g0, n per node, sorted descending.
    pub spectrum: Vec<f64>,
    /// Per-node divisor turning `spectrum` into the curvature spectrum (v for V, else 1).
    pub weight: Vec<f64>,
    pub valid: Vec<bool>,
    pub margin: usize,
}

impl ConformalHessianField {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn spectrum_at(&self, idx: usize) -> &[f64] {
        let n = self.n();
        &self.spectrum[idx * n..(idx + 1) * n]
    }

    pub fn mat_at(&self, idx: usize) -> &[f64] {
        let n = self.n();
        &self.mat[idx * n * n..(idx + 1) * n * n]
    }

    /// Eigenvalues normalized by the node weight (λ(V)/v for V fields).
    pub fn curvature_spectrum_at(&self, idx: usize) -> Vec<f64> {
        let w = self.weight[idx];
        self.spectrum_at(idx).iter().map(|x| x / w).collect()
    }
}

fn hessian_field(kind: Gauge, f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField) -> Result<ConformalHessianField> {
    if f.gauge != kind {
        return Err(Error::Domain(format!("operator needs gauge {kind:?}, factor is in {:?}", f.gauge)));
    }
    if f.grid != metric.grid {
        return Err(Error::Domain("factor and metric live on different grids".into()));
    }
    let ops = Operators::new(metric, bg)?;
    let n = f.n();
    let len = f.grid.len();
    let mut mat = vec![f64::NAN; len * n * n];
    let mut spectrum = vec![f64::NAN; len * n];
    let mut valid = vec![false; len];
    let weight = match kind {
        Gauge::V => f.data.clone(),
        _ => vec![1.0; len],
    };
    let mut s = NodeScratch::new(n);
    for idx in 0..len {
        if !ops.evaluable(idx) {
            continue;
        }
        let scale = ops.node_matrix(kind, &f.data, idx, &mut s)?;
        let ev = ops.spectrum_of(&s.mat, idx, scale)?;
        mat[idx * n * n..(idx + 1) * n * n].copy_from_slice(&s.mat);
        spectrum[idx * n..(idx + 1) * n].copy_from_slice(&ev);
        valid[idx] = true;
    }
    Ok(ConformalHessianField { grid: f.grid.clone(), kind, mat, spectrum, weight, valid, margin: ops.margin() })
}

pub fn matrix_v(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField) -> Result<ConformalHessianField> {
    hessian_field(Gauge::V, f, bg, metric)
}

pub fn matrix_u(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField) -> Result<ConformalHessianField> {
    hessian_field(Gauge::U, f, bg, metric)
}

pub fn matrix_w(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField) -> Result<ConformalHessianField> {
    hessian_field(Gauge::W, f, bg, metric)
}

/// Operator field matching the factor's own gauge.
pub fn operator_field(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField) -> Result<ConformalHessianField> {
    hessian_field(f.gauge, f, bg, metric)
}

/// Pointwise σ_k of the curvature spectrum; NaN inside the margin.
pub fn k_curvature_field(h: &ConformalHessianField, k: usize) -> Vec<f64> {
    (0..h.grid.len())
        .map(|idx| if h.valid[idx] { sigma_slice(&h.curvature_spectrum_at(idx), k) } else { f64::NAN })
        .collect()
}

/// σ_k of the Schouten tensor of the conformal metric itself, per node.
pub fn geometric_k_curvature(h: &ConformalHessianField, f: &ConformalFactor, k: usize) -> Result<Vec<f64>> {
    if f.gauge != h.kind {
        return Err(Error::Domain("factor gauge differs from the field kind".into()));
    }
    let n = h.n() as f64;
    let kf = k as f64;
    let sk = k_curvature_field(h, k);
    Ok(sk
        .iter()
        .zip(&f.data)
        .map(|(&s, &x)| match h.kind {
            Gauge::V => (2.0 / (n - 2.0)).powf(kf) * x.powf(-4.0 * kf / (n - 2.0)) * s,
            Gauge::U => x.powf(kf) * s,
            Gauge::W => (2.0 * kf * x).exp() * s,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// min over evaluated nodes of σ_j, for j = 1..k.
    pub min_sigma: Vec<f64>,
    pub worst_node: usize,
}

pub fn admissibility_of_field(h: &ConformalHessianField, k: usize, tau: f64) -> AdmissibilityReport {
    let mut min_sigma = vec![f64::INFINITY; k];
    let mut worst_node = 0;
    let mut worst = f64::INFINITY;
    for idx in 0..h.grid.len() {
        if !h.valid[idx] {
            continue;
        }
        let s = sigma_all(&h.curvature_spectrum_at(idx), k);
        for j in 1..=k {
            min_sigma[j - 1] = min_sigma[j - 1].min(s[j]);
        }
        let m = s[1..].iter().cloned().fold(f64::INFINITY, f64::min);
        if m < worst {
            worst = m;
            worst_node = idx;
        }
    }
    let admissible = min_sigma.iter().all(|&m| m > tau);
    AdmissibilityReport { admissible, min_sigma, worst_node }
}

pub fn admissibility(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize, tau: f64) -> Result<AdmissibilityReport> {
    let h = operator_field(f, bg, metric)?;
    Ok(admissibility_of_field(&h, k, tau))
}

/// Whether one curvature spectrum lies in Γ_k with margin τ.
pub fn spectrum_admissible(lam: &[f64], k: usize, tau: f64) -> bool {
    in_cone(lam, k, tau)
}

/// `v_ε(x) = (ε / (ε² + |x|²))^{(n-2)/2}`, the standard bubble on flat space.
pub fn bubble(n: usize, eps: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|t| t * t).sum();
    (eps / (eps * eps + r2)).powf((n as f64 - 2.0) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::schouten_from_metric;
    use crate::symmfunc::binomial;

    fn flat(n: usize, m: usize, hw: f64) -> (ChartGrid, MetricField, SchoutenBackground) {
        let grid = ChartGrid::centered_cube(n, m, hw).unwrap();
        let metric = MetricField::flat(grid.clone());
        let bg = schouten_from_metric(&metric).unwrap();
        (grid, metric, bg)
    }

    fn sphere(n: usize, m: usize, hw: f64) -> (ChartGrid, MetricField, SchoutenBackground) {
        let grid = ChartGrid::centered_cube(n, m, hw).unwrap();
        let metric = MetricField::round_sphere_chart(grid.clone()).unwrap();
        let bg = schouten_from_metric(&metric).unwrap();
        (grid, metric, bg)
    }

    #[test]
    fn gauge_examples() {
        let grid = ChartGrid::centered_cube(4, 5, 1.0).unwrap();
        let one = ConformalFactor::constant(grid.clone(), Gauge::V, 1.0).unwrap();
        assert!(one.convert(Gauge::U).unwrap().data.iter().all(|&x| x == 1.0));
        assert!(one.convert(Gauge::W).unwrap().data.iter().all(|&x| x == 0.0));
        let two = ConformalFactor::constant(grid.clone(), Gauge::V, 2.0).unwrap();
        let u = two.convert(Gauge::U).unwrap();
        assert!((u.data[0] - 0.5).abs() < 1e-15);
        let w = two.convert(Gauge::W).unwrap();
        assert!((w.data[0] + 2f64.ln()).abs() < 1e-15);
        assert_eq!(two.convert(Gauge::V).unwrap(), two);
        assert!(matches!(
            ConformalFactor::constant(grid, Gauge::U, -1.0),
            Err(Error::Gauge { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let grid = ChartGrid::centered_cube(3, 7, 1.0).unwrap();
        let f = ConformalFactor::from_fn(grid, Gauge::V, |x| 0.3 + x[0] * x[0] + (x[1] + x[2]).exp()).unwrap();
        for via in [Gauge::U, Gauge::W] {
            let back = f.convert(via).unwrap().convert(Gauge::V).unwrap();
            for (a, b) in back.data.iter().zip(&f.data) {
                assert!((a - b).abs() <= 1e-12 * b.abs());
            }
        }
    }

    #[test]
    fn constant_on_flat_gives_zero() {
        let (grid, metric, bg) = flat(3, 7, 1.0);
        for g in [Gauge::V, Gauge::U] {
            let f = ConformalFactor::constant(grid.clone(), g, 1.7).unwrap();
            let h = operator_field(&f, &bg, &metric).unwrap();
            let c = grid.flat_index(&[3, 3, 3]);
            assert!(h.mat_at(c).iter().all(|x| x.abs() < 1e-14));
        }
        let w = ConformalFactor::constant(grid.clone(), Gauge::W, 0.0).unwrap();
        let h = matrix_w(&w, &bg, &metric).unwrap();
        assert!(h.mat_at(grid.flat_index(&[2, 3, 4])).iter().all(|x| *x == 0.0));
        assert!(!h.valid[0]);
        let rep = admissibility(&ConformalFactor::constant(grid, Gauge::V, 1.0).unwrap(), &bg, &metric, 1, 0.0).unwrap();
        assert!(!rep.admissible);
    }

    #[test]
    fn bubble_is_umbilic() {
        for n in [3, 4, 6] {
            let mut errs = Vec::new();
            for m in [9, 17] {
                let (grid, metric, bg) = flat(n.min(4), m, 0.8);
                if n > 4 {
                    break;
                }
                let f = ConformalFactor::from_fn(grid.clone(), Gauge::V, |x| bubble(n, 1.0, x)).unwrap();
                let h = matrix_v(&f, &bg, &metric).unwrap();
                let mut e: f64 = 0.0;
                for idx in 0..grid.len() {
                    if !h.valid[idx] {
                        continue;
                    }
                    let want = (n as f64 - 2.0) * f.data[idx].powf(4.0 / (n as f64 - 2.0));
                    for l in h.curvature_spectrum_at(idx) {
                        e = e.max((l - want).abs());
                    }
                }
                errs.push(e);
            }
            if errs.len() == 2 {
                assert!(errs[0] < 0.1 && errs[0] / errs[1] > 3.0, "n={n} {errs:?}");
            }
        }
    }

    #[test]
    fn bubble_k_curvature_and_admissibility() {
        let n = 4;
        let (grid, metric, bg) = flat(n, 17, 0.8);
        let f = ConformalFactor::from_fn(grid.clone(), Gauge::V, |x| bubble(n, 1.0, x)).unwrap();
        let h = matrix_v(&f, &bg, &metric).unwrap();
        let s2 = k_curvature_field(&h, 2);
        let c = grid.flat_index(&[8, 8, 8, 8]);
        // C_{4,2} v^4 with v(0) = 1.
        assert!((s2[c] - 24.0).abs() < 0.03 * 24.0, "{}", s2[c]);
        for k in 1..=n {
            assert!(admissibility_of_field(&h, k, 0.0).admissible);
        }
    }

    #[test]
    fn sphere_chart_identity_factor() {
        let n = 4;
        let (grid, metric, bg) = sphere(n, 9, 1.0);
        let w = ConformalFactor::constant(grid.clone(), Gauge::W, 0.0).unwrap();
        let h = matrix_w(&w, &bg, &metric).unwrap();
        let c = grid.flat_index(&[4, 5, 3, 6]);
        assert!(h.spectrum_at(c).iter().all(|l| (l - 0.5).abs() < 1e-13));
        let s = k_curvature_field(&h, 2);
        assert!((s[c] - binomial(4, 2) / 4.0).abs() < 1e-12);
        assert!(admissibility_of_field(&h, 4, 0.0).admissible);
        // V with v ≡ 1: λ(V)/v = (n-2)/2 · ½.
        let v = ConformalFactor::constant(grid.clone(), Gauge::V, 1.0).unwrap();
        let hv = matrix_v(&v, &bg, &metric).unwrap();
        assert!(hv.curvature_spectrum_at(c).iter().all(|l| (l - 0.5).abs() < 1e-13));
    }

    #[test]
    fn quadratic_u_at_origin() {
        let (grid, metric, bg) = flat(3, 9, 1.0);
        let f = ConformalFactor::from_fn(grid.clone(), Gauge::U, |x| 1.0 + x.iter().map(|t| t * t).sum::<f64>() / 2.0).unwrap();
        let h = matrix_u(&f, &bg, &metric).unwrap();
        let m = h.mat_at(grid.flat_index(&[4, 4, 4]));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((m[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gauges_agree_on_geometric_curvature() {
        let n = 4;
        let (grid, metric, bg) = sphere(n, 17, 0.8);
        let w = ConformalFactor::from_fn(grid.clone(), Gauge::W, |x| 0.2 * (x[0] + 0.5 * x[1] * x[1]).sin() - 0.1 * x[3]).unwrap();
        let hw = matrix_w(&w, &bg, &metric).unwrap();
        let u = w.convert(Gauge::U).unwrap();
        let hu = matrix_u(&u, &bg, &metric).unwrap();
        let v = w.convert(Gauge::V).unwrap();
        let hv = matrix_v(&v, &bg, &metric).unwrap();
        for k in 1..=2 {
            let a = geometric_k_curvature(&hw, &w, k).unwrap();
            let b = geometric_k_curvature(&hu, &u, k).unwrap();
            let c = geometric_k_curvature(&hv, &v, k).unwrap();
            for idx in 0..grid.len() {
                if !hw.valid[idx] {
                    continue;
                }
                assert!((a[idx] - b[idx]).abs() < 0.05 * a[idx].abs().max(1.0), "k={k}");
                assert!((a[idx] - c[idx]).abs() < 0.05 * a[idx].abs().max(1.0), "k={k}");
            }
        }
    }

    #[test]
    fn axis_swap_permutes_spectra() {
        let (grid, metric, bg) = flat(3, 9, 1.0);
        let f = ConformalFactor::from_fn(grid.clone(), Gauge::W, |x| 0.3 * x[0] * x[0] + 0.1 * x[1]).unwrap();
        let g = ConformalFactor::from_fn(grid.clone(), Gauge::W, |x| 0.3 * x[1] * x[1] + 0.1 * x[0]).unwrap();
        let hf = matrix_w(&f, &bg, &metric).unwrap();
        let hg = matrix_w(&g, &bg, &metric).unwrap();
        for (i, j, k) in [(2, 3, 4), (5, 1, 6)] {
            let a = hf.spectrum_at(grid.flat_index(&[i, j, k]));
            let b = hg.spectrum_at(grid.flat_index(&[j, i, k]));
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
