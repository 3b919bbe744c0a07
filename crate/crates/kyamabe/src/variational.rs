//! Self-adjointness of the linearized operator of
//! `F[v] = v^a σ_k(λ(V))`, `a = (1-k)(n+2)/(n-2)`, and the functional
//! `I[v] = ∫ ∫_0^1 v F[λ v] dλ` whose Euler equation it is when the
//! linearization is self-adjoint.
//!
//! With `L(φ) = F^{ij} φ_ij + F_{p_i} φ_i + F_v φ` the defect is
//! `∇_i [v² (∇_j F^{ij} - F_{p_i})]`.

use crate::conformal::{ConformalFactor, Gauge, NodeScratch, Operators};
use crate::error::{Error, Result};
use crate::functionals::QuadratureContext;
use crate::geometry::{MetricField, SchoutenBackground, Topology};
use crate::linalg::{matmul, newton_tensor, sigma_all_matrix};
use crate::quadrature::{gauss_legendre, pairwise_sum};
use serde::{Deserialize, Serialize};

/// Exponent `a` of the v prefactor.
pub fn prefactor_exponent(n: usize, k: usize) -> f64 {
    let nf = n as f64;
    (1.0 - k as f64) * (nf + 2.0) / (nf - 2.0)
}

/// `F[λ v] = λ^d F[v]` with `d = (n + 2 - 4k)/(n - 2)`.
pub fn homogeneity_degree(n: usize, k: usize) -> f64 {
    let nf = n as f64;
    (nf + 2.0 - 4.0 * k as f64) / (nf - 2.0)
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if n < 3 || k == 0 || k > n {
        return Err(Error::Domain(format!("need 1 <= k <= n and n >= 3, got n = {n}, k = {k}")));
    }
    Ok(())
}

/// Coefficients of the linearized operator; NaN outside the evaluable region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationCoeffs {
    pub n: usize,
    pub k: usize,
    /// F^{ij}, n² per node.
    pub f_ij: Vec<f64>,
    /// F_{p_i} as a vector, n per node.
    pub f_p: Vec<f64>,
    pub f_v: Vec<f64>,
    /// F[v] itself.
    pub value: Vec<f64>,
    pub margin: usize,
}

impl LinearizationCoeffs {
    pub fn valid(&self, idx: usize) -> bool {
        self.value[idx].is_finite()
    }
}

/// Analytic derivatives of `v^a σ_k(g^{-1} V)` in the slots (∇²v, ∇v, v).
/// With `B = g^{-1}V` and Newton tensor `T = T_{k-1}(B)`, `∂σ_k/∂V_ij = (T g^{-1})^{ij}`.
pub fn linearization_coeffs(v: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize) -> Result<LinearizationCoeffs> {
    let n = v.n();
    check_k(n, k)?;
    let v = v.convert(Gauge::V)?;
    let ops = Operators::new(metric, bg)?;
    let len = v.grid.len();
    let nan = f64::NAN;
    let mut out = LinearizationCoeffs {
        n,
        k,
        f_ij: vec![nan; len * n * n],
        f_p: vec![nan; len * n],
        f_v: vec![nan; len],
        value: vec![nan; len],
        margin: ops.margin(),
    };
    let nf = n as f64;
    let a = prefactor_exponent(n, k);
    let mut s = NodeScratch::new(n);
    for idx in 0..len {
        if !ops.evaluable(idx) {
            continue;
        }
        ops.node_matrix(Gauge::V, &v.data, idx, &mut s)?;
        let x = v.data[idx];
        let b = matmul(&s.ginv, &s.mat, n);
        let sig = sigma_all_matrix(&b, n, k);
        let fs = matmul(&newton_tensor(&b, n, k), &s.ginv, n);
        let va = x.powf(a);
        let mut gp = vec![0.0; n];
        let mut fsp = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                gp[i] += s.ginv[i * n + j] * s.grad[j];
                fsp[i] += fs[i * n + j] * s.grad[j];
            }
        }
        let p2: f64 = (0..n).map(|i| gp[i] * s.grad[i]).sum();
        let tr_t = (nf - k as f64 + 1.0) * sig[k - 1];
        for t in 0..n * n {
            out.f_ij[idx * n * n + t] = -va * 0.5 * (fs[t] + fs[(t % n) * n + t / n]);
        }
        for m in 0..n {
            out.f_p[idx * n + m] = va * (2.0 * nf / (nf - 2.0) * fsp[m] / x - 2.0 / (nf - 2.0) * gp[m] * tr_t / x);
        }
        let mut dv = 0.0;
        for i in 0..n {
            for j in 0..n {
                let t = i * n + j;
                let dvij = -nf / (nf - 2.0) * s.grad[i] * s.grad[j] / (x * x) + p2 / ((nf - 2.0) * x * x) * s.g[t]
                    + 0.5 * (nf - 2.0) * s.a[t];
                dv += fs[t] * dvij;
            }
        }
        out.f_v[idx] = a * x.powf(a - 1.0) * sig[k] + va * dv;
        out.value[idx] = va * sig[k];
    }
    Ok(out)
}

/// `F[v]` per node, NaN outside the evaluable region.
pub fn operator_value(v: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize) -> Result<Vec<f64>> {
    let n = v.n();
    check_k(n, k)?;
    let v = v.convert(Gauge::V)?;
    let ops = Operators::new(metric, bg)?;
    let a = prefactor_exponent(n, k);
    let mut s = NodeScratch::new(n);
    let mut out = vec![f64::NAN; v.grid.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        if !ops.evaluable(idx) {
            continue;
        }
        ops.node_matrix(Gauge::V, &v.data, idx, &mut s)?;
        let b = matmul(&s.ginv, &s.mat, n);
        *o = v.data[idx].powf(a) * sigma_all_matrix(&b, n, k)[k];
    }
    Ok(out)
}

/// `L(φ)` with the discrete covariant derivatives of φ.
pub fn apply_linearization(c: &LinearizationCoeffs, bg: &SchoutenBackground, metric: &MetricField, phi: &[f64]) -> Result<Vec<f64>> {
    let ops = Operators::new(metric, bg)?;
    let n = c.n;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    let mut out = vec![f64::NAN; phi.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        if !c.valid(idx) {
            continue;
        }
        ops.derivatives(phi, idx, &mut grad, &mut hess)?;
        let mut s = c.f_v[idx] * phi[idx];
        for i in 0..n {
            s += c.f_p[idx * n + i] * grad[i];
            for j in 0..n {
                s += c.f_ij[idx * n * n + i * n + j] * hess[i * n + j];
            }
        }
        *o = s;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectField {
    pub n: usize,
    pub k: usize,
    pub defect: Vec<f64>,
    /// Nodes closer than this to a bounded edge carry NaN.
    pub margin: usize,
    pub linf: f64,
    pub l2: f64,
    pub spacing: Vec<f64>,
}

impl DefectField {
    /// L∞ over the nodes of `grid` within `half_width` (sup-norm) of `center`.
    pub fn linf_within(&self, grid: &crate::geometry::ChartGrid, center: &[f64], half_width: f64) -> f64 {
        let mut m = 0.0f64;
        for (idx, d) in self.defect.iter().enumerate() {
            if !d.is_finite() {
                continue;
            }
            let x = grid.coords(idx);
            if x.iter().zip(center).all(|(a, b)| (a - b).abs() <= half_width + 1e-12) {
                m = m.max(d.abs());
            }
        }
        m
    }
}

/// The defect field by nested central differences in divergence form.
pub fn variational_defect(v: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize) -> Result<DefectField> {
    let c = linearization_coeffs(v, bg, metric, k)?;
    let v = v.convert(Gauge::V)?;
    let grid = &v.grid;
    let n = grid.n;
    let len = grid.len();
    let periodic = grid.topology == Topology::Periodic;
    let margin = if periodic { 0 } else { c.margin + 2 };
    if !periodic && (0..len).all(|i| !grid.is_interior(i, margin)) {
        return Err(Error::Boundary(format!("the defect needs an interior margin of {margin} nodes")));
    }
    let sq: Vec<f64> = (0..len).map(|i| metric.sqrt_det_at(i)).collect::<Result<_>>()?;
    // Y^i = v² (∇_j F^{ij} - F_{p_i})
    let inner = |i: usize| periodic || grid.is_interior(i, c.margin + 1);
    let mut y = vec![f64::NAN; len * n];
    for idx in 0..len {
        if !inner(idx) {
            continue;
        }
        let gam = metric.christoffel_at(idx)?;
        for i in 0..n {
            let mut div = 0.0;
            for j in 0..n {
                let p = grid.shift(idx, j, 1).expect("inner node");
                let m = grid.shift(idx, j, -1).expect("inner node");
                let t = i * n + j;
                div += (sq[p] * c.f_ij[p * n * n + t] - sq[m] * c.f_ij[m * n * n + t]) / (2.0 * grid.spacing[j]);
            }
            div /= sq[idx];
            for j in 0..n {
                for l in 0..n {
                    div += gam[i * n * n + j * n + l] * c.f_ij[idx * n * n + j * n + l];
                }
            }
            let x = v.data[idx];
            y[idx * n + i] = x * x * (div - c.f_p[idx * n + i]);
        }
    }
    let mut defect = vec![f64::NAN; len];
    let mut l2_terms = Vec::new();
    let mut linf = 0.0f64;
    let cell = grid.cell_volume();
    for idx in 0..len {
        if !(periodic || grid.is_interior(idx, margin)) {
            continue;
        }
        let mut d = 0.0;
        for i in 0..n {
            let p = grid.shift(idx, i, 1).expect("interior node");
            let m = grid.shift(idx, i, -1).expect("interior node");
            d += (sq[p] * y[p * n + i] - sq[m] * y[m * n + i]) / (2.0 * grid.spacing[i]);
        }
        d /= sq[idx];
        if !d.is_finite() {
            return Err(Error::NonFinite { node: idx });
        }
        defect[idx] = d;
        linf = linf.max(d.abs());
        l2_terms.push(sq[idx] * cell * d * d);
    }
    Ok(DefectField { n, k, defect, margin, linf, l2: pairwise_sum(&l2_terms).sqrt(), spacing: grid.spacing.clone() })
}

/// `(|⟨ψ, Lφ⟩ - ⟨φ, Lψ⟩|, |⟨ψ, Lφ⟩| + |⟨φ, Lψ⟩|)` in the g0-weighted node sum.
pub fn adjointness_gap(
    c: &LinearizationCoeffs,
    bg: &SchoutenBackground,
    metric: &MetricField,
    phi: &[f64],
    psi: &[f64],
) -> Result<(f64, f64)> {
    let q = QuadratureContext::new(metric, bg)?;
    let lphi = apply_linearization(c, bg, metric, phi)?;
    let lpsi = apply_linearization(c, bg, metric, psi)?;
    let a: Vec<f64> = psi.iter().zip(&lphi).map(|(x, y)| x * y).collect();
    let b: Vec<f64> = phi.iter().zip(&lpsi).map(|(x, y)| x * y).collect();
    let (a, b) = (q.integrate(&a)?, q.integrate(&b)?);
    Ok(((a - b).abs(), a.abs() + b.abs()))
}

/// `I[v] = ∫ ∫_0^1 v F[λ v] dλ` by an m-node Gauss–Legendre rule in `s`,
/// with `λ = s^{1/(d+1)}` absorbing the `λ^d` singularity at 0.
pub fn reconstruct_functional(v: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize, m: usize) -> Result<f64> {
    let n = v.n();
    check_k(n, k)?;
    let d = homogeneity_degree(n, k);
    if d <= -1.0 + 1e-12 {
        return Err(Error::Pole(format!(
            "F is homogeneous of degree {d} <= -1 for n = {n}, k = {k}; the scaling integral diverges"
        )));
    }
    if m == 0 {
        return Err(Error::Domain("quadrature order must be positive".into()));
    }
    let v = v.convert(Gauge::V)?;
    let q = QuadratureContext::new(metric, bg)?;
    let e = 1.0 / (d + 1.0);
    let (nodes, wts) = gauss_legendre(m);
    let mut total = 0.0;
    for (&s, &gw) in nodes.iter().zip(&wts) {
        let lam = s.powf(e);
        let dlam = e * s.powf(e - 1.0);
        let f = operator_value(&v.scaled(lam)?, bg, metric, k)?;
        let g: Vec<f64> = v.data.iter().zip(&f).map(|(x, y)| x * y).collect();
        total += gw * dlam * q.integrate(&g)?;
    }
    Ok(total)
}
