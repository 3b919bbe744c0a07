//! The monotone reparametrization μ used by the flow.
//!
//! μ(t) = ln t below `t_lo`, μ(t) = t^{1/k} above `t_hi`, and in between a
//! quintic in s = ln t matching value, first and second derivative of both
//! branches, so μ is C² everywhere.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const SWITCH_POINTS: [(f64, f64); 2] = [(0.1, 10.0), (0.05, 20.0)];

/// Quantities established by sampling when μ is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuCertificate {
    /// Smallest μ' over 10⁴ log-spaced samples in [1e-8, 1e8].
    pub min_derivative: f64,
    /// Largest jump in μ, μ', μ'' across either switch point.
    pub c2_jump: f64,
    /// μ(1e-100), to witness μ → -∞ at 0.
    pub value_near_zero: f64,
    /// Best constant in (t-s)(μ(t)-μ(s)) ≥ c0 (t-s)(t^{1/k}-s^{1/k}) on a 200×200 log grid.
    pub c0: f64,
    /// sup of t^{1-1/k} μ'(t) over [t_lo, ∞); the supremum over (0, ∞) is infinite.
    pub sup_power_derivative: f64,
    /// sup of |t μ''(t) / μ'(t)| over (0, ∞).
    pub sup_log_curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuFunction {
    pub k: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Monomial coefficients in x = (ln t - ln t_lo) / (ln t_hi - ln t_lo).
    coeffs: [f64; 6],
    pub certificate: MuCertificate,
}

impl MuFunction {
    /// Builds μ for the given k and certifies it, widening the switch points once if needed.
    pub fn build(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("mu needs k >= 1".into()));
        }
        let mut last = String::new();
        for (t_lo, t_hi) in SWITCH_POINTS {
            let mut mu = Self::with_switch_points(k, t_lo, t_hi);
            match mu.certify() {
                Ok(cert) => {
                    mu.certificate = cert;
                    return Ok(mu);
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Certification(last))
    }

    fn with_switch_points(k: usize, t_lo: f64, t_hi: f64) -> Self {
        let kf = k as f64;
        let (s0, s1) = (t_lo.ln(), t_hi.ln());
        let len = s1 - s0;
        let e1 = (s1 / kf).exp();
        // Value, first and second s-derivatives of each branch, scaled to x.
        let (y0, d0, c0) = (s0, len, 0.0);
        let (y1, d1, c1) = (e1, e1 / kf * len, e1 / (kf * kf) * len * len);
        // Quintic Hermite basis in monomial form (coefficients of x^0..x^5).
        let basis: [([f64; 6], f64); 6] = [
            ([1.0, 0.0, 0.0, -10.0, 15.0, -6.0], y0),
            ([0.0, 1.0, 0.0, -6.0, 8.0, -3.0], d0),
            ([0.0, 0.0, 0.5, -1.5, 1.5, -0.5], c0),
            ([0.0, 0.0, 0.0, 10.0, -15.0, 6.0], y1),
            ([0.0, 0.0, 0.0, -4.0, 7.0, -3.0], d1),
            ([0.0, 0.0, 0.0, 0.5, -1.0, 0.5], c1),
        ];
        let mut coeffs = [0.0; 6];
        for (b, y) in basis {
            for (c, bi) in coeffs.iter_mut().zip(b) {
                *c += y * bi;
            }
        }
        let certificate = MuCertificate {
            min_derivative: f64::NAN,
            c2_jump: f64::NAN,
            value_near_zero: f64::NAN,
            c0: f64::NAN,
            sup_power_derivative: f64::NAN,
            sup_log_curvature: f64::NAN,
        };
        Self { k, t_lo, t_hi, coeffs, certificate }
    }

    pub fn c0(&self) -> f64 {
        self.certificate.c0
    }

    /// P, dP/ds, d²P/ds² of the interpolating quintic at s = ln t.
    fn spline(&self, s: f64) -> (f64, f64, f64) {
        let len = self.t_hi.ln() - self.t_lo.ln();
        let x = (s - self.t_lo.ln()) / len;
        let c = &self.coeffs;
        let p = ((((c[5] * x + c[4]) * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0];
        let dp = (((5.0 * c[5] * x + 4.0 * c[4]) * x + 3.0 * c[3]) * x + 2.0 * c[2]) * x + c[1];
        let ddp = ((20.0 * c[5] * x + 12.0 * c[4]) * x + 6.0 * c[3]) * x + 2.0 * c[2];
        (p, dp / len, ddp / (len * len))
    }

    /// μ(t), μ'(t), μ''(t).
    pub fn eval3(&self, t: f64) -> (f64, f64, f64) {
        if !(t > 0.0) {
            return (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        }
        let kf = self.k as f64;
        if t < self.t_lo {
            (t.ln(), 1.0 / t, -1.0 / (t * t))
        } else if t >= self.t_hi {
            let r = t.powf(1.0 / kf);
            (r, r / (kf * t), r * (1.0 / kf) * (1.0 / kf - 1.0) / (t * t))
        } else {
            let (p, ps, pss) = self.spline(t.ln());
            (p, ps / t, (pss - ps) / (t * t))
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval3(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval3(t).1
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        self.eval3(t).2
    }

    fn certify(&self) -> Result<MuCertificate> {
        let kf = self.k as f64;
        let logspace = |lo: f64, hi: f64, m: usize| -> Vec<f64> {
            (0..m).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (m - 1) as f64).exp()).collect()
        };

        let samples = logspace(1e-8, 1e8, 10_000);
        let min_derivative = samples.iter().map(|&t| self.derivative(t)).fold(f64::INFINITY, f64::min);
        // Also sample the spline region densely.
        let inner = logspace(self.t_lo, self.t_hi, 10_000);
        let min_inner = inner.iter().map(|&t| self.derivative(t)).fold(f64::INFINITY, f64::min);
        if !(min_derivative > 0.0 && min_inner > 0.0) {
            return Err(Error::Certification(format!("mu' not positive (min {})", min_derivative.min(min_inner))));
        }

        let left = |t: f64| (t.ln(), 1.0 / t, -1.0 / (t * t));
        let right = |t: f64| {
            let r = t.powf(1.0 / kf);
            (r, r / (kf * t), r * (1.0 / kf) * (1.0 / kf - 1.0) / (t * t))
        };
        let spline_at = |t: f64| {
            let (p, ps, pss) = self.spline(t.ln());
            (p, ps / t, (pss - ps) / (t * t))
        };
        let jump = |a: (f64, f64, f64), b: (f64, f64, f64)| {
            (a.0 - b.0).abs().max((a.1 - b.1).abs()).max((a.2 - b.2).abs())
        };
        let c2_jump = jump(left(self.t_lo), spline_at(self.t_lo)).max(jump(right(self.t_hi), spline_at(self.t_hi)));
        if !(c2_jump < 1e-8) {
            return Err(Error::Certification(format!("switch-point jump {c2_jump:e}")));
        }

        let value_near_zero = self.eval(1e-100);
        if !(value_near_zero < -200.0) {
            return Err(Error::Certification("mu does not diverge at 0".into()));
        }

        let grid = logspace(1e-6, 1e6, 200);
        let mut c0 = f64::INFINITY;
        for (i, &t) in grid.iter().enumerate() {
            let mt = self.eval(t);
            let rt = t.powf(1.0 / kf);
            for &s in &grid[..i] {
                let ratio = (mt - self.eval(s)) / (rt - s.powf(1.0 / kf));
                c0 = c0.min(ratio);
            }
            c0 = c0.min(self.derivative(t) / (t.powf(1.0 / kf - 1.0) / kf));
        }
        if !(c0 > 0.0) {
            return Err(Error::Certification(format!("product bound constant {c0}")));
        }

        let tail = logspace(self.t_lo, 1e8, 10_000);
        let sup_power_derivative = tail
            .iter()
            .map(|&t| t.powf(1.0 - 1.0 / kf) * self.derivative(t))
            .fold(0.0, f64::max);
        let sup_log_curvature = samples
            .iter()
            .chain(&inner)
            .map(|&t| {
                let (_, d1, d2) = self.eval3(t);
                (t * d2 / d1).abs()
            })
            .fold(0.0, f64::max);
        if !(sup_power_derivative.is_finite() && sup_log_curvature.is_finite()) {
            return Err(Error::Certification("unbounded derivative ratios".into()));
        }
        Ok(MuCertificate { min_derivative, c2_jump, value_near_zero, c0, sup_power_derivative, sup_log_curvature })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_values() {
        let mu = MuFunction::build(2).unwrap();
        assert!((mu.eval(1000.0) - 31.622776601683793).abs() < 1e-12);
        assert!((mu.eval(0.01) - 0.01f64.ln()).abs() < 1e-15);
        assert!((mu.eval(0.01) + 4.605170185988091).abs() < 1e-12);
        assert_eq!(mu.eval(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn certified_for_small_k() {
        for k in 1..=4 {
            let mu = MuFunction::build(k).unwrap();
            let c = &mu.certificate;
            assert!(c.min_derivative > 0.0 && c.c0 > 0.0 && c.c2_jump < 1e-8, "k={k} {c:?}");
            assert!(c.sup_power_derivative.is_finite() && c.sup_log_curvature.is_finite());
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let mu = MuFunction::build(3).unwrap();
        for t in [0.05, 0.2, 1.0, 3.7, 9.0, 50.0] {
            let h = 1e-5 * t;
            let d1 = (mu.eval(t + h) - mu.eval(t - h)) / (2.0 * h);
            let d2 = (mu.derivative(t + h) - mu.derivative(t - h)) / (2.0 * h);
            assert!((d1 - mu.derivative(t)).abs() < 1e-6 * d1.abs().max(1.0), "t={t}");
            assert!((d2 - mu.second_derivative(t)).abs() < 1e-5 * d2.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn product_bound_holds_with_certified_constant() {
        let mu = MuFunction::build(2).unwrap();
        let c0 = mu.c0();
        for &(s, t) in &[(0.01, 0.02), (0.5, 8.0), (3.0, 3000.0), (1e-5, 1e4)] {
            let lhs = (t - s) * (mu.eval(t) - mu.eval(s));
            let rhs = c0 * (t - s) * (f64::sqrt(t) - f64::sqrt(s));
            assert!(lhs >= rhs * (1.0 - 1e-12));
        }
    }
}
