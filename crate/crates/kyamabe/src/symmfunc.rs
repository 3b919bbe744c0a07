//! Elementary symmetric polynomials of a spectrum and the Γ_k cones.
//!
//! All kernels use the product recurrence `e_j += x * e_{j-1}` instead of
//! subset enumeration, so evaluating σ_0..σ_k costs O(nk).

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// An ordered list of real eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty spectrum".into()));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite eigenvalue at position {i}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn sorted_descending(&self) -> Spectrum {
        let mut values = self.values.clone();
        values.sort_by(|a, b| b.total_cmp(a));
        Spectrum { values }
    }
}

/// σ_0..σ_kmax of `lam`; entries beyond `lam.len()` are zero.
pub fn sigma_all(lam: &[f64], kmax: usize) -> Vec<f64> {
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for (m, &x) in lam.iter().enumerate() {
        let top = kmax.min(m + 1);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// σ_k of a slice. σ_0 = 1 and σ_k = 0 for k > n.
pub fn sigma_slice(lam: &[f64], k: usize) -> f64 {
    if k > lam.len() {
        return 0.0;
    }
    sigma_all(lam, k)[k]
}

pub fn sigma(lam: &Spectrum, k: usize) -> f64 {
    sigma_slice(&lam.values, k)
}

/// σ_k of the spectrum with entry `i` (zero-based) deleted.
pub fn sigma_reduced(lam: &Spectrum, k: usize, i: usize) -> Result<f64> {
    let n = lam.n();
    if i >= n {
        return Err(Error::Domain(format!("index {i} out of range for n = {n}")));
    }
    Ok(reduced_slice(&lam.values, k, i))
}

fn reduced_slice(lam: &[f64], k: usize, skip: usize) -> f64 {
    if k + 1 > lam.len() {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (m, &x) in lam.iter().enumerate() {
        if m == skip {
            continue;
        }
        for j in (1..=k).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[k]
}

/// Gradient of σ_k: the vector (σ_{k-1;1}, …, σ_{k-1;n}).
pub fn sigma_grad(lam: &Spectrum, k: usize) -> Result<Spectrum> {
    let n = lam.n();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("gradient of sigma_{k} needs 1 <= k <= {n}")));
    }
    let values = (0..n).map(|i| reduced_slice(&lam.values, k - 1, i)).collect();
    Ok(Spectrum { values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeMembership {
    /// Largest k with σ_1..σ_k all above the margin; 0 when σ_1 fails.
    pub max_k: usize,
    /// σ_j for j = 1..n.
    pub margins: Vec<f64>,
}

pub fn cone_membership(lam: &Spectrum) -> ConeMembership {
    cone_membership_with_margin(lam, 0.0)
}

pub fn cone_membership_with_margin(lam: &Spectrum, tau: f64) -> ConeMembership {
    let n = lam.n();
    let s = sigma_all(&lam.values, n);
    let margins = s[1..].to_vec();
    let max_k = margins.iter().take_while(|&&m| m > tau).count();
    ConeMembership { max_k, margins }
}

/// Whether σ_1..σ_k of `lam` all exceed `tau`.
pub fn in_cone(lam: &[f64], k: usize, tau: f64) -> bool {
    sigma_all(lam, k)[1..].iter().all(|&s| s > tau)
}

/// σ_k / σ_l.
pub fn sigma_quotient(lam: &Spectrum, k: usize, l: usize) -> Result<f64> {
    let n = lam.n();
    if l >= k || k > n {
        return Err(Error::Domain(format!("quotient needs 0 <= l < k <= n, got k={k}, l={l}")));
    }
    let s = sigma_all(&lam.values, k);
    if s[l] == 0.0 {
        return Err(Error::Degenerate(format!("sigma_{l} vanishes")));
    }
    Ok(s[k] / s[l])
}

/// Both sides of the Newton-type lower bound on ∂(σ_k/σ_l)/∂λ_i:
/// `lhs = ∂_i(σ_k/σ_l)` and `rhs = n(k-l)/(k(n-l)) σ_{l;i} σ_{k-1;i} / σ_l²`.
pub fn newton_quotient_bound(lam: &Spectrum, k: usize, l: usize, i: usize) -> Result<(f64, f64)> {
    let n = lam.n();
    if l == 0 || l >= k || k > n {
        return Err(Error::Domain(format!("bound needs 1 <= l < k <= n, got k={k}, l={l}")));
    }
    if i >= n {
        return Err(Error::Domain(format!("index {i} out of range for n = {n}")));
    }
    if !in_cone(&lam.values, k, 0.0) {
        return Err(Error::Cone(format!("spectrum is not in Gamma_{k}")));
    }
    let s = sigma_all(&lam.values, k);
    let (sk, sl) = (s[k], s[l]);
    let dk = reduced_slice(&lam.values, k - 1, i);
    let dl = reduced_slice(&lam.values, l - 1, i);
    let sl_i = reduced_slice(&lam.values, l, i);
    let lhs = (sl * dk - sk * dl) / (sl * sl);
    let (nf, kf, lf) = (n as f64, k as f64, l as f64);
    let rhs = nf * (kf - lf) / (kf * (nf - lf)) * sl_i * dk / (sl * sl);
    Ok((lhs, rhs))
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c.round()
}

/// Draws λ uniformly from [-1, 2]^n until σ_1..σ_k are positive.
pub fn sample_cone<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    loop {
        let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        if in_cone(&lam, k, 0.0) {
            return lam;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sp(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    fn brute(lam: &[f64], k: usize) -> f64 {
        let n = lam.len();
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| lam[i]).product::<f64>())
            .sum()
    }

    #[test]
    fn sigma_small_cases() {
        assert_eq!(sigma(&sp(&[1.0, 2.0, 3.0]), 1), 6.0);
        assert_eq!(sigma(&sp(&[1.0; 4]), 2), 6.0);
        assert_eq!(sigma(&sp(&[1.0, 2.0, 3.0]), 2), 11.0);
        assert_eq!(sigma(&sp(&[1.0, 2.0, 3.0]), 0), 1.0);
        assert_eq!(sigma(&sp(&[1.0, 2.0, 3.0]), 4), 0.0);
    }

    #[test]
    fn sigma_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=12 {
            let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for k in 0..=n {
                let a = sigma_slice(&lam, k);
                let b = brute(&lam, k);
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn reduced_cases() {
        assert_eq!(sigma_reduced(&sp(&[1.0, 2.0, 3.0]), 1, 1).unwrap(), 4.0);
        assert_eq!(sigma_reduced(&sp(&[5.0, 0.0, 0.0]), 2, 0).unwrap(), 0.0);
        assert_eq!(sigma_reduced(&sp(&[1.0, 2.0, 3.0, 4.0]), 2, 3).unwrap(), 11.0);
        assert!(sigma_reduced(&sp(&[1.0, 2.0]), 1, 2).is_err());
    }

    #[test]
    fn grad_cases() {
        assert_eq!(sigma_grad(&sp(&[0.3, -2.0, 7.0]), 1).unwrap().values(), &[1.0, 1.0, 1.0]);
        assert_eq!(sigma_grad(&sp(&[1.0, 2.0, 3.0]), 2).unwrap().values(), &[5.0, 4.0, 3.0]);
        assert_eq!(sigma_grad(&sp(&[1.0, 1.0, 1.0]), 3).unwrap().values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_matches_central_difference() {
        let lam = [0.7, 1.3, -0.2, 2.1, 0.5];
        let g = sigma_grad(&sp(&lam), 3).unwrap();
        let mut errs = Vec::new();
        for h in [1e-2, 5e-3] {
            let mut e: f64 = 0.0;
            for i in 0..5 {
                let mut a = lam;
                let mut b = lam;
                a[i] += h;
                b[i] -= h;
                let fd = (sigma_slice(&a, 3) - sigma_slice(&b, 3)) / (2.0 * h);
                e = e.max((fd - g.values()[i]).abs());
            }
            errs.push(e);
        }
        // σ_k is affine in each λ_i, so the central difference is exact up to rounding.
        assert!(errs.iter().all(|&e| e < 1e-10));
    }

    #[test]
    fn cone_cases() {
        assert_eq!(cone_membership(&sp(&[1.0; 4])).max_k, 4);
        assert_eq!(cone_membership(&sp(&[-1.0; 3])).max_k, 0);
        let c = cone_membership(&sp(&[3.0, 1.0, 1.0, -1.0]));
        assert_eq!(c.max_k, 2);
        assert_eq!(&c.margins[..3], &[4.0, 2.0, -4.0]);
    }

    #[test]
    fn quotient_cases() {
        assert_eq!(sigma_quotient(&sp(&[1.0; 4]), 2, 1).unwrap(), 1.5);
        assert_eq!(sigma_quotient(&sp(&[1.0, 2.0, 3.0]), 3, 0).unwrap(), 6.0);
        assert!((sigma_quotient(&sp(&[1.0, 2.0, 3.0]), 2, 1).unwrap() - 11.0 / 6.0).abs() < 1e-15);
        assert!(matches!(
            sigma_quotient(&sp(&[1.5, -1.0, -0.5]), 2, 1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn newton_bound_cases() {
        for (lam, k, l, i) in [
            (vec![1.0; 4], 2, 1, 0),
            (vec![2.0, 1.0, 1.0], 2, 1, 2),
            (vec![1.0, 1.0], 2, 1, 0),
        ] {
            let (lhs, rhs) = newton_quotient_bound(&sp(&lam), k, l, i).unwrap();
            assert!(lhs >= rhs - 1e-15, "{lam:?}");
        }
        // Direct evaluation for (2,1,1), k=2, l=1, i=3:
        // σ_1 = 4, σ_2 = 5, ∂σ_2/∂λ_3 = 3, ∂σ_1/∂λ_3 = 1, σ_{1;3} = 3.
        let (lhs, rhs) = newton_quotient_bound(&sp(&[2.0, 1.0, 1.0]), 2, 1, 2).unwrap();
        assert!((lhs - (4.0 * 3.0 - 5.0) / 16.0).abs() < 1e-15);
        assert!((rhs - 3.0 * 1.0 / (2.0 * 2.0) * 3.0 * 3.0 / 16.0).abs() < 1e-15);
        assert!(matches!(
            newton_quotient_bound(&sp(&[1.0, -3.0, 0.5]), 2, 1, 0),
            Err(Error::Cone(_))
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(10, 5), 252.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Spectrum::new(vec![1.0, f64::NAN]).is_err());
        assert!(Spectrum::new(vec![]).is_err());
    }
}
