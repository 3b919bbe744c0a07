//! Two-dimensional counterexamples to interior regularity for
//! `det(D²u + |∇u|² I + A) = f` with `u = (b/2) x2² + φ(x1)`.
//!
//! With `A = diag(-b² x2², -b - b² x2²)` the equation reduces to
//! `(φ'' + φ'²) φ'² = f`, and `ψ = φ'³` solves `ψ'/3 + ψ^{4/3} = f`.
//! With `A = diag(c0 - b² x2², ε - b - b² x2²)` and f ≡ 1, `g = φ'` solves
//! `g' = 1/(ε + g²) - g² - c0`, `g(0) = 0`, whose slope at 0 is `1/ε - c0`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Real cube root raised to the fourth power, `|t|^{4/3}`.
fn pow43(t: f64) -> f64 {
    let c = t.cbrt();
    c * c * c * c
}

/// `ψ(x) = x - (9/7) x^{7/3}` for x ≥ 0, extended as an odd function.
pub fn psi(x: f64) -> f64 {
    let a = x.abs();
    let p = a - 9.0 / 7.0 * a * pow43(a);
    p * x.signum()
}

/// `ψ'(x) = 1 - 3 x^{4/3}`, even.
pub fn psi_prime(x: f64) -> f64 {
    1.0 - 3.0 * pow43(x)
}

/// `f = 1/3 - x^{4/3} + ψ^{4/3}`, even.
pub fn psi_rhs(x: f64) -> f64 {
    1.0 / 3.0 - pow43(x) + pow43(psi(x))
}

/// `(ψ(x), ψ'/3 + ψ^{4/3} - f)`. For x < 0 ψ is continued oddly and f evenly.
pub fn psi_closed_form(x: f64) -> (f64, f64) {
    let p = psi(x);
    (p, psi_prime(x) / 3.0 + pow43(p) - psi_rhs(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeTolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12 }
    }
}

/// Output of an adaptive integration. `x` holds accepted step endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSolution {
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
    /// Set when the step size underflowed or the state stopped being finite.
    pub truncated: bool,
    pub accepted: usize,
    pub rejected: usize,
}

impl OdeSolution {
    pub fn x_end(&self) -> f64 {
        *self.x.last().expect("solution has an initial point")
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus the embedded fourth-order ones.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince 5(4) from `x0` to `x1` (x1 > x0). Steps are clipped so
/// that every point of `stops` inside the interval is an output node.
pub fn dopri5(
    rhs: &dyn Fn(f64, &[f64], &mut [f64]),
    x0: f64,
    y0: &[f64],
    x1: f64,
    tol: OdeTolerance,
    stops: &[f64],
) -> Result<OdeSolution> {
    if !(x1 > x0) || !(tol.rtol > 0.0) || !(tol.atol > 0.0) {
        return Err(Error::Domain("integration needs x1 > x0 and positive tolerances".into()));
    }
    let d = y0.len();
    let mut k = vec![vec![0.0; d]; 7];
    let mut y = y0.to_vec();
    let mut x = x0;
    rhs(x, &y, &mut k[0]);
    let mut sol = OdeSolution { x: vec![x], y: vec![y.clone()], dy: vec![k[0].clone()], truncated: false, accepted: 0, rejected: 0 };
    let mut stops: Vec<f64> = stops.iter().cloned().filter(|s| *s > x0 && *s < x1).collect();
    stops.sort_by(|a, b| a.partial_cmp(b).expect("finite stops"));
    stops.push(x1);
    let mut next_stop = 0;
    let scale = |y: &[f64]| -> Vec<f64> { y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect() };
    let norm = |v: &[f64], s: &[f64]| -> f64 { (v.iter().zip(s).map(|(a, b)| (a / b).powi(2)).sum::<f64>() / d as f64).sqrt() };
    // Initial step from the size of y and y'.
    let sc = scale(&y);
    let (d0, d1) = (norm(&y, &sc), norm(&k[0], &sc));
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(x1 - x0);
    let mut stage = vec![0.0; d];
    let mut ynew = vec![0.0; d];
    while x < x1 {
        let target = stops[next_stop];
        let clipped = x + h >= target;
        let step = if clipped { target - x } else { h };
        if step <= 1e-14 * x.abs().max(1.0) {
            sol.truncated = true;
            break;
        }
        for s in 1..7 {
            for i in 0..d {
                let mut acc = y[i];
                for j in 0..s {
                    acc += step * A[s][j] * k[j][i];
                }
                stage[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            rhs(x + C[s] * step, &stage, &mut tail[0]);
            if s == 6 {
                ynew.copy_from_slice(&stage);
            }
        }
        let mut err = vec![0.0; d];
        for i in 0..d {
            err[i] = step * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
        }
        let sc: Vec<f64> = y.iter().zip(&ynew).map(|(a, b)| tol.atol + tol.rtol * a.abs().max(b.abs())).collect();
        let en = norm(&err, &sc);
        if !en.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            sol.truncated = true;
            break;
        }
        let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        if en <= 1.0 {
            x = if clipped { target } else { x + step };
            if clipped {
                next_stop += 1;
            }
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            sol.x.push(x);
            sol.y.push(y.clone());
            sol.dy.push(k[0].clone());
            sol.accepted += 1;
            if !clipped || factor < 1.0 {
                h = step * factor;
            }
        } else {
            sol.rejected += 1;
            h = step * factor.min(1.0);
        }
    }
    Ok(sol)
}

/// The right-hand side `1/(ε + g²) - g² - c0`.
pub fn g_rhs(eps: f64, c0: f64, g: f64) -> f64 {
    1.0 / (eps + g * g) - g * g - c0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GSolution {
    pub eps: f64,
    pub c0: f64,
    pub ode: OdeSolution,
    pub max_abs_gprime: f64,
}

impl GSolution {
    pub fn interval(&self) -> (f64, f64) {
        (self.ode.x[0], self.ode.x_end())
    }

    pub fn g(&self) -> Vec<f64> {
        self.ode.y.iter().map(|y| y[0]).collect()
    }

    pub fn gprime(&self) -> Vec<f64> {
        self.ode.dy.iter().map(|y| y[0]).collect()
    }
}

/// Integrates `g' = 1/(ε + g²) - g² - c0`, `g(0) = 0` over `[0, span]`.
pub fn solve_g_eps(eps: f64, c0: f64, span: f64, tol: OdeTolerance) -> Result<GSolution> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let f = move |_x: f64, y: &[f64], out: &mut [f64]| out[0] = g_rhs(eps, c0, y[0]);
    let ode = dopri5(&f, 0.0, &[0.0], span, tol, &[])?;
    let max_abs_gprime = ode.dy.iter().map(|d| d[0].abs()).fold(0.0, f64::max);
    Ok(GSolution { eps, c0, ode, max_abs_gprime })
}

/// `A = [[c0 - b² x2², 0], [0, ε - b - b² x2²]]`, row-major.
pub fn a_matrix(b: f64, c0: f64, eps: f64, x2: f64) -> [f64; 4] {
    let t = b * b * x2 * x2;
    [c0 - t, 0.0, 0.0, eps - b - t]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeSign {
    Positive,
    Negative,
    Indefinite,
}

/// Which cone the diagonal matrix A lies in at `x2`.
pub fn a_matrix_cone(b: f64, c0: f64, eps: f64, x2: f64) -> ConeSign {
    let a = a_matrix(b, c0, eps, x2);
    if a[0] > 0.0 && a[3] > 0.0 {
        ConeSign::Positive
    } else if a[0] < 0.0 && a[3] < 0.0 {
        ConeSign::Negative
    } else {
        ConeSign::Indefinite
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupRow {
    pub eps: f64,
    pub max_abs_u11: f64,
    /// max over the (x1, x2) grid of |det(D²u + |∇u|² I + A) - 1|.
    pub residual: f64,
    pub interval: (f64, f64),
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub b: f64,
    pub c0: f64,
    pub rows: Vec<BlowupRow>,
    /// max |u11| grows at every step down the ladder.
    pub monotone: bool,
}

/// Builds `u = (b/2) x2² + φ(x1)` with `φ' = g_ε` for each ε (decreasing)
/// and evaluates the two-dimensional equation on the solver nodes in x1
/// times `x2_samples` in x2.
pub fn hessian_blowup_witness(eps_ladder: &[f64], b: f64, c0: f64, span: f64, x2_samples: &[f64], tol: OdeTolerance) -> Result<BlowupReport> {
    if eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("the eps ladder must be strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let s = solve_g_eps(eps, c0, span, tol)?;
        let mut residual = 0.0f64;
        for (g, gp) in s.g().into_iter().zip(s.gprime()) {
            for &x2 in x2_samples {
                let grad2 = g * g + b * b * x2 * x2;
                let a = a_matrix(b, c0, eps, x2);
                let m11 = gp + grad2 + a[0];
                let m22 = b + grad2 + a[3];
                residual = residual.max((m11 * m22 - a[1] * a[2] - 1.0).abs());
            }
        }
        rows.push(BlowupRow { eps, max_abs_u11: s.max_abs_gprime, residual, interval: s.interval(), truncated: s.ode.truncated });
    }
    let monotone = rows.windows(2).all(|w| w[1].max_abs_u11 > w[0].max_abs_u11);
    Ok(BlowupReport { b, c0, rows, monotone })
}
