//! Integral functionals of a conformal factor and the sphere constants.
//!
//! Curvature integrals are written in the v normalization used throughout
//! the crate: `F_k(v) = ∫ v^{(2n-4k)/(n-2)} σ_k(λ(V/v)) dvol0`, which equals
//! `((n-2)/2)^k ∫ σ_k(g^{-1}A_g) dvol_g` for `g = v^{4/(n-2)} g0`.

use crate::conformal::{ConformalFactor, Gauge, NodeScratch, Operators};
use crate::error::{Error, Result};
use crate::geometry::{MetricField, SchoutenBackground};
use crate::quadrature::{gauss_legendre, pairwise_sum, unit_sphere_area};
use crate::radial::{radial_sigma, RadialGrid};
use crate::symmfunc::binomial;
use serde::{Deserialize, Serialize};

/// Node weights `√det g0 · Πh` on the evaluable part of a chart, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureContext {
    pub weights: Vec<f64>,
    pub margin: usize,
}

impl QuadratureContext {
    pub fn new(metric: &MetricField, bg: &SchoutenBackground) -> Result<Self> {
        let ops = Operators::new(metric, bg)?;
        let cell = metric.grid.cell_volume();
        let mut weights = vec![0.0; metric.grid.len()];
        for (idx, w) in weights.iter_mut().enumerate() {
            if ops.evaluable(idx) {
                *w = metric.sqrt_det_at(idx)? * cell;
            }
        }
        Ok(Self { weights, margin: ops.margin() })
    }

    pub fn volume(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Weighted node sum; NaN at a weighted node is reported.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        let mut terms = Vec::with_capacity(f.len());
        for (idx, (&w, &x)) in self.weights.iter().zip(f).enumerate() {
            if w == 0.0 {
                continue;
            }
            if !x.is_finite() {
                return Err(Error::NonFinite { node: idx });
            }
            terms.push(w * x);
        }
        Ok(pairwise_sum(&terms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F_k")]
    pub f_k: f64,
    pub volume: f64,
    pub min_sigma_k: f64,
    #[serde(rename = "Q_k")]
    pub q_k: f64,
}

impl EnergyRecord {
    pub const CSV_HEADER: &'static str = "t,J,F_k,volume,min_sigma_k,Q_k";

    /// One CSV row; `{:e}` prints the shortest round-trip representation.
    pub fn csv_row(&self) -> String {
        format!("{:e},{:e},{:e},{:e},{:e},{:e}", self.t, self.j, self.f_k, self.volume, self.min_sigma_k, self.q_k)
    }
}

/// Per-node geometric k-curvature and volume density `v^{2n/(n-2)}`.
struct Densities {
    kappa: Vec<f64>,
    volume: Vec<f64>,
    admissible: bool,
}

fn densities(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize) -> Result<Densities> {
    let ops = Operators::new(metric, bg)?;
    let n = f.n();
    let nf = n as f64;
    let kf = k as f64;
    let w = f.convert(Gauge::W)?;
    let len = f.grid.len();
    let mut kappa = vec![f64::NAN; len];
    let volume: Vec<f64> = w.data.iter().map(|&x| (-nf * x).exp()).collect();
    let mut admissible = true;
    let mut s = NodeScratch::new(n);
    for idx in 0..len {
        if !ops.evaluable(idx) {
            continue;
        }
        let scale = ops.node_matrix(f.gauge, &f.data, idx, &mut s)?;
        let sig = ops.sigmas_of(&s.mat, scale, &s.ginv, k);
        let x = f.data[idx];
        let weight = if f.gauge == Gauge::V { x } else { 1.0 };
        admissible &= sig[1..].iter().enumerate().all(|(j, &v)| v / weight.powi(j as i32 + 1) > 0.0);
        let sk = sig[k] / weight.powi(k as i32);
        kappa[idx] = match f.gauge {
            Gauge::V => (2.0 / (nf - 2.0)).powf(kf) * x.powf(-4.0 * kf / (nf - 2.0)) * sk,
            Gauge::U => x.powf(kf) * sk,
            Gauge::W => (2.0 * kf * x).exp() * sk,
        };
    }
    Ok(Densities { kappa, volume, admissible })
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k = {k} outside 1..={n}")));
    }
    Ok(())
}

fn curvature_integral(d: &Densities, n: usize, k: usize, q: &QuadratureContext) -> Result<f64> {
    let prod: Vec<f64> = d.kappa.iter().zip(&d.volume).map(|(a, b)| a * b).collect();
    Ok(((n as f64 - 2.0) / 2.0).powi(k as i32) * q.integrate(&prod)?)
}

/// `F_k(v) = ∫ v^{(2n - k(n+2))/(n-2)} σ_k(λ(V)) dvol0`.
pub fn functional_fk(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize, q: &QuadratureContext) -> Result<f64> {
    check_k(f.n(), k)?;
    let d = densities(f, bg, metric, k)?;
    curvature_integral(&d, f.n(), k, q)
}

/// `∫ v^{2n/(n-2)} dvol0`.
pub fn functional_volume(f: &ConformalFactor, q: &QuadratureContext) -> Result<f64> {
    let w = f.convert(Gauge::W)?;
    let nf = f.n() as f64;
    let dens: Vec<f64> = w.data.iter().map(|&x| (-nf * x).exp()).collect();
    q.integrate(&dens)
}

/// `∫ v^{p+1} dvol0`.
pub fn functional_power(f: &ConformalFactor, p: f64, q: &QuadratureContext) -> Result<f64> {
    let v = f.convert(Gauge::V)?;
    let dens: Vec<f64> = v.data.iter().map(|&x| x.powf(p + 1.0)).collect();
    q.integrate(&dens)
}

/// `J_p(v) = (n-2)/(2n-4k) F_k(v) - 1/(p+1) ∫ v^{p+1}`.
pub fn functional_jp(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize, p: f64, q: &QuadratureContext) -> Result<f64> {
    let n = f.n();
    if 2 * k == n {
        return Err(Error::Pole(format!("J_p has a pole at k = n/2 = {k}; use the E functional")));
    }
    let nf = n as f64;
    let fk = functional_fk(f, bg, metric, k, q)?;
    Ok((nf - 2.0) / (2.0 * nf - 4.0 * k as f64) * fk - functional_power(f, p, q)? / (p + 1.0))
}

/// `Q_k(v) = F_k(v) / [∫ v^{2n/(n-2)}]^{(n-2k)/n}`.
pub fn functional_qk(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize, q: &QuadratureContext) -> Result<f64> {
    let fk = functional_fk(f, bg, metric, k, q)?;
    let vol = functional_volume(f, q)?;
    quotient(fk, vol, f.n(), k)
}

pub fn quotient(fk: f64, vol: f64, n: usize, k: usize) -> Result<f64> {
    if !(vol > 0.0) {
        return Err(Error::Degenerate("volume integral vanishes".into()));
    }
    let nf = n as f64;
    Ok(fk / vol.powf((nf - 2.0 * k as f64) / nf))
}

/// `E(w) = -∫_0^1 ∫ w σ_{n/2}(λ(W_{tw})) dvol0 dt` by m-point Gauss–Legendre in t.
pub fn functional_e_half(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, q: &QuadratureContext, m: usize) -> Result<f64> {
    let n = f.n();
    if n % 2 == 1 {
        return Err(Error::Domain(format!("the E functional needs even n, got {n}")));
    }
    let k = n / 2;
    let w = f.convert(Gauge::W)?;
    let ops = Operators::new(metric, bg)?;
    let (nodes, wts) = gauss_legendre(m);
    let mut total = 0.0;
    let mut s = NodeScratch::new(n);
    let mut dens = vec![f64::NAN; w.data.len()];
    for (&t, &wt) in nodes.iter().zip(&wts) {
        let tw: Vec<f64> = w.data.iter().map(|x| t * x).collect();
        for idx in 0..tw.len() {
            if !ops.evaluable(idx) {
                continue;
            }
            let scale = ops.node_matrix(Gauge::W, &tw, idx, &mut s)?;
            dens[idx] = w.data[idx] * ops.sigmas_of(&s.mat, scale, &s.ginv, k)[k];
        }
        total += wt * q.integrate(&dens)?;
    }
    Ok(-total)
}

/// Result of maximizing `s ↦ J(s v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub s_star: f64,
    pub j_star: f64,
    /// False when J(s v) is monotone on the search interval.
    pub interior: bool,
}

/// Maximizes `a s^alpha - b s^{p+1}/(p+1)` by golden-section search on ln s ∈ [-20, 20].
pub fn maximize_scaling(a: f64, b: f64, alpha: f64, p: f64) -> ScalingReport {
    let j = |ls: f64| {
        let s = ls.exp();
        a * s.powf(alpha) - b * s.powf(p + 1.0) / (p + 1.0)
    };
    let (lo0, hi0) = (-20.0f64, 20.0f64);
    let (mut lo, mut hi) = (lo0, hi0);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (j(x1), j(x2));
    while hi - lo > 1e-10 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = j(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = j(x1);
        }
    }
    let ls = 0.5 * (lo + hi);
    let interior = ls - lo0 > 1e-6 && hi0 - ls > 1e-6;
    ScalingReport { s_star: ls.exp(), j_star: j(ls), interior }
}

/// Maximizes `s ↦ J_p(s v)`. The discrete operators are exactly homogeneous
/// in v, so `J_p(s v) = A s^{(2n-4k)/(n-2)} - B s^{p+1}/(p+1)` with A, B
/// computed once at s = 1.
pub fn sup_over_scaling(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize, p: f64, q: &QuadratureContext) -> Result<ScalingReport> {
    let n = f.n();
    if 2 * k >= n {
        return Err(Error::Pole(format!("scaling identity needs k < n/2, got k = {k}, n = {n}")));
    }
    let nf = n as f64;
    let kf = k as f64;
    let a = (nf - 2.0) / (2.0 * nf - 4.0 * kf) * functional_fk(f, bg, metric, k, q)?;
    let b = functional_power(f, p, q)?;
    Ok(maximize_scaling(a, b, (2.0 * nf - 4.0 * kf) / (nf - 2.0), p))
}

/// `[F_k]^{(n-2)/(2n-4k)} / [∫ v^{2n/(n-2)}]^{(n-2)/(2n)}` for admissible v.
pub fn sobolev_quotient(f: &ConformalFactor, bg: &SchoutenBackground, metric: &MetricField, k: usize, q: &QuadratureContext) -> Result<f64> {
    let n = f.n();
    if 2 * k >= n {
        return Err(Error::Pole(format!("Sobolev quotient needs k < n/2, got k = {k}")));
    }
    let d = densities(f, bg, metric, k)?;
    if !d.admissible {
        return Err(Error::Cone(format!("factor is not {k}-admissible")));
    }
    let fk = curvature_integral(&d, n, k, q)?;
    let vol = q.integrate(&d.volume)?;
    let nf = n as f64;
    let kf = k as f64;
    Ok(fk.powf((nf - 2.0) / (2.0 * nf - 4.0 * kf)) / vol.powf((nf - 2.0) / (2.0 * nf)))
}

/// `C_{n,k} = n! (n-2)^k / (k! (n-k)!)`, the curvature of the flat bubble.
pub fn c_nk(n: usize, k: usize) -> f64 {
    binomial(n, k) * ((n - 2) as f64).powi(k as i32)
}

/// `∫_R^∞ r^{n-1} (1+r²)^{-n} dr` from the binomial series in 1/r², R > 1.
fn bubble_tail(n: usize, radius: f64) -> f64 {
    let mut total = 0.0;
    let mut coef = 1.0; // binomial(-n, j)
    for j in 0..200 {
        let term = coef * radius.powi(-(n as i32) - 2 * j as i32) / (n + 2 * j) as f64;
        total += term;
        if term.abs() < 1e-18 * total.abs() {
            break;
        }
        coef *= -((n + j) as f64) / (j + 1) as f64;
    }
    total
}

/// `∫_{R^n} (1 + |x|²)^{-n} dx`, the volume of the unit bubble.
pub fn bubble_mass(n: usize) -> f64 {
    let radius = 4.0;
    let panels = 64;
    let (x, w) = gauss_legendre(10);
    let h = radius / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        for (xi, wi) in x.iter().zip(&w) {
            let r = (p as f64 + xi) * h;
            s += wi * h * r.powi(n as i32 - 1) * (1.0 + r * r).powi(-(n as i32));
        }
    }
    unit_sphere_area(n) * (s + bubble_tail(n, radius))
}

/// Sphere constants computed two independent ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereConstants {
    pub n: usize,
    pub k: usize,
    pub c_nk: f64,
    /// `Y_1(S^n) = n(n-2) [∫ v^{2n/(n-2)}]^{2/n}` by radial quadrature.
    pub y1: f64,
    /// `(C_{n,k}/(n(n-2))^k) Y_1^k`.
    pub composed: f64,
    /// `C_{n,k} [∫ v^{2n/(n-2)}]^{2k/n}` with the curvature integral evaluated
    /// from finite-difference curvature of the bubble on a radial grid.
    pub direct: f64,
    pub rel_diff: f64,
}

pub fn yamabe_constant_sphere(n: usize, k: usize) -> Result<SphereConstants> {
    if n < 3 || k == 0 || 2 * k > n {
        return Err(Error::Domain(format!("sphere constants need 1 <= k <= n/2, got n = {n}, k = {k}")));
    }
    let nf = n as f64;
    let c = c_nk(n, k);
    let mass = bubble_mass(n);
    let y1 = nf * (nf - 2.0) * mass.powf(2.0 / nf);
    let composed = c / (nf * (nf - 2.0)).powi(k as i32) * y1.powi(k as i32);
    let direct = bubble_quotient_radial(n, k, 4.0, 1024)?;
    Ok(SphereConstants { n, k, c_nk: c, y1, composed, direct, rel_diff: (direct - composed).abs() / composed })
}

/// `Q_k` of the unit bubble from finite differences on a radial grid over
/// [0, R], with the region beyond R added through its exact density.
pub fn bubble_quotient_radial(n: usize, k: usize, radius: f64, nodes: usize) -> Result<f64> {
    let grid = RadialGrid::flat(n, radius, nodes)?;
    let bubble = |r: f64| (1.0 + r * r).powf(-(n as f64 - 2.0) / 2.0);
    let v: Vec<f64> = grid.coords().iter().map(|&r| bubble(r)).collect();
    let outer = bubble(grid.coord(nodes as isize));
    let wts = grid.weights();
    let nf = n as f64;
    let mut fk = 0.0;
    let mut vol = 0.0;
    for i in 0..nodes {
        let (lr, lt) = grid.spectrum_v_over_v(&v, outer, i)?;
        let sk = radial_sigma(n, k, lr, lt);
        fk += wts[i] * v[i].powf((2.0 * nf - 4.0 * k as f64) / (nf - 2.0)) * sk;
        vol += wts[i] * v[i].powf(2.0 * nf / (nf - 2.0));
    }
    let tail = unit_sphere_area(n) * bubble_tail(n, radius);
    fk += c_nk(n, k) * tail;
    vol += tail;
    quotient(fk, vol, n, k)
}
