//! Coordinate charts, background metrics and their Schouten tensors.

use crate::error::{Error, Result};
use crate::linalg;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Periodic,
    Bounded,
}

/// A uniform rectangular grid. Node coordinates are `origin + i * spacing`
/// per axis, stored row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartGrid {
    pub n: usize,
    pub extents: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub topology: Topology,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl ChartGrid {
    pub fn new(extents: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>, topology: Topology) -> Result<Self> {
        let n = extents.len();
        if n < 2 || spacing.len() != n || origin.len() != n {
            return Err(Error::Domain("grid axes disagree or dimension below 2".into()));
        }
        if extents.iter().any(|&e| e < 5) {
            return Err(Error::Domain("every axis needs at least 5 nodes".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Domain("spacing must be positive".into()));
        }
        let mut g = Self { n, extents, spacing, origin, topology, strides: Vec::new() };
        g.rebuild_strides();
        Ok(g)
    }

    /// Bounded cube `[-half_width, half_width]^n` with `m` nodes per axis.
    pub fn centered_cube(n: usize, m: usize, half_width: f64) -> Result<Self> {
        let h = 2.0 * half_width / (m as f64 - 1.0);
        Self::new(vec![m; n], vec![h; n], vec![-half_width; n], Topology::Bounded)
    }

    /// Periodic box `[0, length)^n` with `m` nodes per axis.
    pub fn periodic_box(n: usize, m: usize, length: f64) -> Result<Self> {
        Self::new(vec![m; n], vec![length / m as f64; n], vec![0.0; n], Topology::Periodic)
    }

    /// Recomputes cached strides, needed after deserialization.
    pub fn rebuild_strides(&mut self) {
        let mut strides = vec![1; self.n];
        for a in (0..self.n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.extents[a + 1];
        }
        self.strides = strides;
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        (0..self.n).map(|a| idx / self.strides[a] % self.extents[a]).collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        idx / self.strides[axis] % self.extents[axis]
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        (0..self.n)
            .map(|a| self.origin[a] + self.axis_index(idx, a) as f64 * self.spacing[a])
            .collect()
    }

    /// Node shifted by `offset` along `axis`; wraps on periodic grids.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let i = self.axis_index(idx, axis) as isize;
        let e = self.extents[axis] as isize;
        let j = i + offset;
        let j = match self.topology {
            Topology::Periodic => j.rem_euclid(e),
            Topology::Bounded if j < 0 || j >= e => return None,
            Topology::Bounded => j,
        };
        Some((idx as isize + (j - i) * self.strides[axis] as isize) as usize)
    }

    /// Whether every axis index lies at least `margin` nodes from the edge.
    pub fn is_interior(&self, idx: usize, margin: usize) -> bool {
        if self.topology == Topology::Periodic {
            return true;
        }
        (0..self.n).all(|a| {
            let i = self.axis_index(idx, a);
            i >= margin && i + margin < self.extents[a]
        })
    }

    pub fn refined(&self) -> Result<Self> {
        let (extents, spacing) = match self.topology {
            Topology::Bounded => (
                self.extents.iter().map(|&e| 2 * e - 1).collect(),
                self.spacing.iter().map(|h| h / 2.0).collect(),
            ),
            Topology::Periodic => (
                self.extents.iter().map(|&e| 2 * e).collect(),
                self.spacing.iter().map(|h| h / 2.0).collect(),
            ),
        };
        Self::new(extents, spacing, self.origin.clone(), self.topology)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Flat,
    RoundSphereConformal,
    Explicit,
}

/// Background metric on a chart. Analytic kinds are evaluated on demand;
/// explicit metrics keep node samples and differentiate them numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    pub grid: ChartGrid,
    pub kind: MetricKind,
    data: Vec<f64>,
}

impl MetricField {
    pub fn flat(grid: ChartGrid) -> Self {
        Self { grid, kind: MetricKind::Flat, data: Vec::new() }
    }

    /// The unit sphere through stereographic coordinates, `g = 4 (1+|x|²)^{-2} δ`.
    pub fn round_sphere_chart(grid: ChartGrid) -> Result<Self> {
        if grid.n < 3 {
            return Err(Error::Domain("sphere chart needs n >= 3".into()));
        }
        Ok(Self { grid, kind: MetricKind::RoundSphereConformal, data: Vec::new() })
    }

    pub fn explicit(grid: ChartGrid, g: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let n = grid.n;
        let mut data = Vec::with_capacity(grid.len() * n * n);
        for idx in 0..grid.len() {
            let m = g(&grid.coords(idx));
            if m.len() != n * n {
                return Err(Error::Domain("metric closure returned the wrong size".into()));
            }
            data.extend_from_slice(&m);
        }
        Self::explicit_from_data(grid, data)
    }

    pub fn explicit_from_data(grid: ChartGrid, data: Vec<f64>) -> Result<Self> {
        let n = grid.n;
        if data.len() != grid.len() * n * n {
            return Err(Error::Format("metric data length does not match the grid".into()));
        }
        for idx in 0..grid.len() {
            let m = &data[idx * n * n..(idx + 1) * n * n];
            let symmetric = (0..n).all(|i| (0..n).all(|j| m[i * n + j] == m[j * n + i]));
            if !symmetric || linalg::cholesky(m, n).is_none() {
                return Err(Error::Geometry { node: idx });
            }
        }
        Ok(Self { grid, kind: MetricKind::Explicit, data })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// For conformally flat kinds, the factor c with g = c δ at the node.
    pub fn conformal_scale(&self, idx: usize) -> Option<f64> {
        match self.kind {
            MetricKind::Flat => Some(1.0),
            MetricKind::RoundSphereConformal => Some(sphere_scale(&self.grid.coords(idx))),
            MetricKind::Explicit => None,
        }
    }

    pub fn g_at(&self, idx: usize) -> Vec<f64> {
        let n = self.n();
        match self.conformal_scale(idx) {
            Some(c) => {
                let mut m = linalg::identity(n);
                m.iter_mut().for_each(|x| *x *= c);
                m
            }
            None => self.data[idx * n * n..(idx + 1) * n * n].to_vec(),
        }
    }

    pub fn g_inv_at(&self, idx: usize) -> Result<Vec<f64>> {
        let n = self.n();
        match self.conformal_scale(idx) {
            Some(c) => {
                let mut m = linalg::identity(n);
                m.iter_mut().for_each(|x| *x /= c);
                Ok(m)
            }
            None => linalg::spd_inverse(&self.g_at(idx), n).ok_or(Error::Geometry { node: idx }),
        }
    }

    pub fn sqrt_det_at(&self, idx: usize) -> Result<f64> {
        match self.conformal_scale(idx) {
            Some(c) => Ok(c.powf(self.n() as f64 / 2.0)),
            None => linalg::spd_determinant(&self.g_at(idx), self.n())
                .map(f64::sqrt)
                .ok_or(Error::Geometry { node: idx }),
        }
    }

    /// Nodes of margin needed before Christoffel symbols are available.
    pub fn christoffel_margin(&self) -> usize {
        match self.kind {
            MetricKind::Explicit => 1,
            _ => 0,
        }
    }

    /// Γ^k_{ij} stored at `[k*n*n + i*n + j]`.
    pub fn christoffel_at(&self, idx: usize) -> Result<Vec<f64>> {
        let n = self.n();
        let mut gam = vec![0.0; n * n * n];
        match self.kind {
            MetricKind::Flat => {}
            MetricKind::RoundSphereConformal => {
                // g = e^{2φ} δ with φ = ln 2 - ln(1+|x|²).
                let x = self.grid.coords(idx);
                let r2: f64 = x.iter().map(|t| t * t).sum();
                let dphi: Vec<f64> = x.iter().map(|t| -2.0 * t / (1.0 + r2)).collect();
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut v = 0.0;
                            if i == k {
                                v += dphi[j];
                            }
                            if j == k {
                                v += dphi[i];
                            }
                            if i == j {
                                v -= dphi[k];
                            }
                            gam[k * n * n + i * n + j] = v;
                        }
                    }
                }
            }
            MetricKind::Explicit => {
                let grid = &self.grid;
                // dg[l][i][j] = ∂_l g_ij
                let mut dg = vec![0.0; n * n * n];
                for l in 0..n {
                    let (Some(p), Some(m)) = (grid.shift(idx, l, 1), grid.shift(idx, l, -1)) else {
                        return Err(Error::Boundary(format!("Christoffel stencil at node {idx}")));
                    };
                    let h2 = 2.0 * grid.spacing[l];
                    for ij in 0..n * n {
                        dg[l * n * n + ij] = (self.data[p * n * n + ij] - self.data[m * n * n + ij]) / h2;
                    }
                }
                let ginv = self.g_inv_at(idx)?;
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut v = 0.0;
                            for l in 0..n {
                                let c = dg[i * n * n + j * n + l] + dg[j * n * n + i * n + l] - dg[l * n * n + i * n + j];
                                v += ginv[k * n + l] * c;
                            }
                            gam[k * n * n + i * n + j] = 0.5 * v;
                        }
                    }
                }
            }
        }
        Ok(gam)
    }
}

fn sphere_scale(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|t| t * t).sum();
    4.0 / ((1.0 + r2) * (1.0 + r2))
}

/// Schouten tensor `A = (Ric - R g / (2(n-1))) / (n-2)` of a background metric,
/// with Ricci and scalar curvature kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoutenBackground {
    pub grid: ChartGrid,
    pub kind: MetricKind,
    /// Nodes within this distance of a bounded edge carry NaN.
    pub margin: usize,
    /// Largest |Ric_ij - Ric_ji| seen before symmetrization.
    pub asymmetry: f64,
    a: Vec<f64>,
    ricci: Vec<f64>,
    scalar: Vec<f64>,
}

impl SchoutenBackground {
    pub fn a_at(&self, idx: usize) -> Vec<f64> {
        let n = self.grid.n;
        match self.kind {
            MetricKind::Flat => vec![0.0; n * n],
            MetricKind::RoundSphereConformal => {
                let c = sphere_scale(&self.grid.coords(idx));
                let mut m = linalg::identity(n);
                m.iter_mut().for_each(|x| *x *= 0.5 * c);
                m
            }
            MetricKind::Explicit => self.a[idx * n * n..(idx + 1) * n * n].to_vec(),
        }
    }

    /// Writes A at `idx` into `out` using a precomputed conformal scale where available.
    pub fn a_into(&self, idx: usize, scale: Option<f64>, out: &mut [f64]) {
        let n = self.grid.n;
        match (self.kind, scale) {
            (MetricKind::Flat, _) => out.iter_mut().for_each(|x| *x = 0.0),
            (MetricKind::RoundSphereConformal, Some(c)) => {
                out.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..n {
                    out[i * n + i] = 0.5 * c;
                }
            }
            _ => out.copy_from_slice(&self.a_at(idx)),
        }
    }

    pub fn ricci_at(&self, idx: usize) -> Vec<f64> {
        let n = self.grid.n;
        match self.kind {
            MetricKind::Flat => vec![0.0; n * n],
            MetricKind::RoundSphereConformal => {
                let c = sphere_scale(&self.grid.coords(idx));
                let mut m = linalg::identity(n);
                m.iter_mut().for_each(|x| *x *= (n - 1) as f64 * c);
                m
            }
            MetricKind::Explicit => self.ricci[idx * n * n..(idx + 1) * n * n].to_vec(),
        }
    }

    pub fn scalar_at(&self, idx: usize) -> f64 {
        let n = self.grid.n as f64;
        match self.kind {
            MetricKind::Flat => 0.0,
            MetricKind::RoundSphereConformal => n * (n - 1.0),
            MetricKind::Explicit => self.scalar[idx],
        }
    }
}

pub fn schouten_from_metric(metric: &MetricField) -> Result<SchoutenBackground> {
    let grid = metric.grid.clone();
    let n = grid.n;
    if metric.kind != MetricKind::Explicit {
        return Ok(SchoutenBackground {
            grid,
            kind: metric.kind,
            margin: 0,
            asymmetry: 0.0,
            a: Vec::new(),
            ricci: Vec::new(),
            scalar: Vec::new(),
        });
    }
    if n < 3 {
        return Err(Error::Domain("Schouten tensor needs n >= 3".into()));
    }
    let len = grid.len();
    let nnn = n * n * n;
    let mut gam = vec![f64::NAN; len * nnn];
    for idx in 0..len {
        if grid.is_interior(idx, 1) {
            gam[idx * nnn..(idx + 1) * nnn].copy_from_slice(&metric.christoffel_at(idx)?);
        }
    }
    let mut a = vec![f64::NAN; len * n * n];
    let mut ricci = vec![f64::NAN; len * n * n];
    let mut scalar = vec![f64::NAN; len];
    let mut asymmetry: f64 = 0.0;
    // Γ^i_{ik} = ∂_k ln √det g; differentiating the log volume directly keeps Ric symmetric.
    let mut log_vol = vec![f64::NAN; len];
    for (idx, lv) in log_vol.iter_mut().enumerate() {
        *lv = metric.sqrt_det_at(idx)?.ln();
    }
    let g3 = |idx: usize, k: usize, i: usize, j: usize| gam[idx * nnn + k * n * n + i * n + j];
    for idx in 0..len {
        if !grid.is_interior(idx, 2) {
            continue;
        }
        // dgam[m][k][i][j] = ∂_m Γ^k_ij
        let mut dgam = vec![0.0; n * nnn];
        for m in 0..n {
            let p = grid.shift(idx, m, 1).expect("interior");
            let q = grid.shift(idx, m, -1).expect("interior");
            let h2 = 2.0 * grid.spacing[m];
            for t in 0..nnn {
                dgam[m * nnn + t] = (gam[p * nnn + t] - gam[q * nnn + t]) / h2;
            }
        }
        let mut ric = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                s -= hessian_of(&grid, &log_vol, idx, j, k);
                for i in 0..n {
                    s += dgam[i * nnn + i * n * n + j * n + k];
                    for m in 0..n {
                        s += g3(idx, i, i, m) * g3(idx, m, j, k) - g3(idx, i, j, m) * g3(idx, m, i, k);
                    }
                }
                ric[j * n + k] = s;
            }
        }
        for j in 0..n {
            for k in j + 1..n {
                asymmetry = asymmetry.max((ric[j * n + k] - ric[k * n + j]).abs());
            }
        }
        linalg::symmetrize(&mut ric, n);
        let g = metric.g_at(idx);
        let ginv = metric.g_inv_at(idx)?;
        let r: f64 = (0..n * n).map(|t| ginv[t] * ric[t]).sum();
        let nf = n as f64;
        for t in 0..n * n {
            a[idx * n * n + t] = (ric[t] - r / (2.0 * (nf - 1.0)) * g[t]) / (nf - 2.0);
        }
        ricci[idx * n * n..(idx + 1) * n * n].copy_from_slice(&ric);
        scalar[idx] = r;
    }
    Ok(SchoutenBackground { grid, kind: MetricKind::Explicit, margin: 2, asymmetry, a, ricci, scalar })
}

/// Second-order central difference ∂_j ∂_k f at an interior node.
pub(crate) fn hessian_of(grid: &ChartGrid, f: &[f64], idx: usize, j: usize, k: usize) -> f64 {
    let sh = |i: usize, a: usize, o: isize| grid.shift(i, a, o).expect("interior stencil");
    if j == k {
        let h = grid.spacing[j];
        (f[sh(idx, j, 1)] - 2.0 * f[idx] + f[sh(idx, j, -1)]) / (h * h)
    } else {
        let pp = f[sh(sh(idx, j, 1), k, 1)];
        let pm = f[sh(sh(idx, j, 1), k, -1)];
        let mp = f[sh(sh(idx, j, -1), k, 1)];
        let mm = f[sh(sh(idx, j, -1), k, -1)];
        (pp - pm - mp + mm) / (4.0 * grid.spacing[j] * grid.spacing[k])
    }
}

/// The diagonal three-dimensional metric `diag(1, 1 + x, 1 + y² + z²)`.
pub fn diagonal_witness_metric(x: &[f64]) -> Vec<f64> {
    vec![1.0, 0.0, 0.0, 0.0, 1.0 + x[0], 0.0, 0.0, 0.0, 1.0 + x[1] * x[1] + x[2] * x[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing() {
        let g = ChartGrid::new(vec![5, 6, 7], vec![0.1, 0.2, 0.3], vec![0.0, 1.0, 2.0], Topology::Bounded).unwrap();
        assert_eq!(g.len(), 210);
        let idx = g.flat_index(&[2, 3, 4]);
        assert_eq!(g.multi_index(idx), vec![2, 3, 4]);
        let x = g.coords(idx);
        assert!((x[0] - 0.2).abs() < 1e-15 && (x[1] - 1.6).abs() < 1e-15 && (x[2] - 3.2).abs() < 1e-15);
        assert_eq!(g.shift(g.flat_index(&[0, 0, 0]), 0, -1), None);
        let p = ChartGrid::periodic_box(2, 5, 1.0).unwrap();
        assert_eq!(p.shift(p.flat_index(&[0, 4]), 1, 1), Some(p.flat_index(&[0, 0])));
        assert!(ChartGrid::new(vec![4, 5], vec![0.1, 0.1], vec![0.0, 0.0], Topology::Bounded).is_err());
        assert!(ChartGrid::new(vec![5, 5], vec![0.0, 0.1], vec![0.0, 0.0], Topology::Bounded).is_err());
    }

    #[test]
    fn flat_schouten_vanishes() {
        let grid = ChartGrid::centered_cube(3, 7, 1.0).unwrap();
        let explicit = MetricField::explicit(grid.clone(), |_| linalg::identity(3)).unwrap();
        let bg = schouten_from_metric(&explicit).unwrap();
        let c = grid.flat_index(&[3, 3, 3]);
        assert!(bg.a_at(c).iter().all(|x| x.abs() < 1e-14));
        assert!(bg.a_at(0).iter().all(|x| x.is_nan()));
    }

    #[test]
    fn sphere_chart_origin_and_schouten() {
        let grid = ChartGrid::centered_cube(4, 9, 1.0).unwrap();
        let m = MetricField::round_sphere_chart(grid.clone()).unwrap();
        let c = grid.flat_index(&[4, 4, 4, 4]);
        let g = m.g_at(c);
        assert!((g[0] - 4.0).abs() < 1e-15 && g[1] == 0.0);
        let bg = schouten_from_metric(&m).unwrap();
        for idx in [c, 17, 1000, 4000, 6500] {
            let ev = linalg::generalized_eigenvalues(&bg.a_at(idx), &m.g_at(idx), 4).unwrap();
            assert!(ev.iter().all(|e| (e - 0.5).abs() < 1e-13));
        }
    }

    #[test]
    fn explicit_sphere_matches_closed_form() {
        // Finite-difference curvature of the stereographic metric converges to A = g/2.
        let mut errs = Vec::new();
        for m in [9, 17] {
            let grid = ChartGrid::centered_cube(3, m, 0.5).unwrap();
            let metric = MetricField::explicit(grid.clone(), |x| {
                let r2: f64 = x.iter().map(|t| t * t).sum();
                let c = 4.0 / ((1.0 + r2) * (1.0 + r2));
                vec![c, 0.0, 0.0, 0.0, c, 0.0, 0.0, 0.0, c]
            })
            .unwrap();
            let bg = schouten_from_metric(&metric).unwrap();
            assert!(bg.asymmetry < 1e-8);
            let mut e: f64 = 0.0;
            let s = (m - 1) / 8;
            for node in [[4, 4, 4], [6, 6, 4], [2, 5, 3]] {
                let idx = grid.flat_index(&node.map(|i| i * s));
                let a = bg.a_at(idx);
                let g = metric.g_at(idx);
                for t in 0..9 {
                    e = e.max((a[t] - 0.5 * g[t]).abs());
                }
                assert!((bg.scalar_at(idx) - 6.0).abs() < 0.3);
            }
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn diagonal_witness_matches_symbolic_values() {
        let oracle: [([f64; 3], [f64; 9]); 3] = [
            (
                [0.3, 0.2, 0.1],
                [
                    0.42631056367320097, 0.07326007326007326, 0.0,
                    0.07326007326007326, -0.36189604046746904, 0.0,
                    0.0, 0.0, -0.4476260918568611,
                ],
            ),
            (
                [0.1, -0.25, 0.4],
                [
                    0.45611309340570033, -0.09295408068414202, 0.0,
                    -0.09295408068414202, -0.274451675473543, 0.0,
                    0.0, 0.0, -0.5575982566884686,
                ],
            ),
            (
                [-0.2, 0.3, -0.15],
                [
                    0.7116614458401715, 0.16853932584269662, 0.0,
                    0.16853932584269662, -0.2568291566721374, 0.0,
                    0.0, 0.0, -0.791723358497191,
                ],
            ),
        ];
        let mut errs = [0.0f64; 2];
        for (level, h) in [0.05, 0.025].into_iter().enumerate() {
            for (x, want) in &oracle {
                // Small grid centred on the sample point.
                let origin: Vec<f64> = x.iter().map(|c| c - 2.0 * h).collect();
                let grid = ChartGrid::new(vec![5; 3], vec![h; 3], origin, Topology::Bounded).unwrap();
                let metric = MetricField::explicit(grid.clone(), diagonal_witness_metric).unwrap();
                let bg = schouten_from_metric(&metric).unwrap();
                let a = bg.a_at(grid.flat_index(&[2, 2, 2]));
                for t in 0..9 {
                    errs[level] = errs[level].max((a[t] - want[t]).abs());
                }
            }
        }
        assert!(errs[0] < 5e-3, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn rejects_indefinite_metric() {
        let grid = ChartGrid::centered_cube(3, 5, 1.0).unwrap();
        let r = MetricField::explicit(grid, |x| {
            vec![x[0], 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        });
        assert!(matches!(r, Err(Error::Geometry { .. })));
    }
}
