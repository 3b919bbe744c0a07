//! Dense kernels for the small symmetric matrices carried at each grid node.
//! Matrices are row-major slices of length n².

use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_SWEEPS: usize = 60;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted descending.
pub fn sym_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _ in 0..JACOBI_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = m[r * n + p];
                    let arq = m[r * n + q];
                    m[r * n + p] = c * arp - s * arq;
                    m[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = m[p * n + r];
                    let aqr = m[q * n + r];
                    m[p * n + r] = c * apr - s * aqr;
                    m[q * n + r] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Eigenvalues of `m` relative to the positive definite `g`, i.e. of g^{-1}m.
pub fn generalized_eigenvalues(m: &[f64], g: &[f64], n: usize) -> Result<Vec<f64>> {
    let l = cholesky(g, n).ok_or(Error::Geometry { node: 0 })?;
    // C = L^{-1} M L^{-T}
    let linv = lower_inverse(&l, n);
    let t = matmul(&linv, m, n);
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += t[i * n + k] * linv[j * n + k];
            }
            c[i * n + j] = s;
        }
    }
    symmetrize(&mut c, n);
    Ok(sym_eigenvalues(&c, n))
}

fn lower_inverse(l: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[i * n + k] * inv[k * n + col];
            }
            inv[i * n + col] = s / l[i * n + i];
        }
    }
    inv
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(g: &[f64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky(g, n)?;
    let linv = lower_inverse(&l, n);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i.max(j)..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    Some(out)
}

pub fn spd_determinant(g: &[f64], n: usize) -> Option<f64> {
    let l = cholesky(g, n)?;
    Some((0..n).map(|i| l[i * n + i] * l[i * n + i]).product())
}

pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

pub fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub fn trace(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

/// σ_0..σ_kmax of the eigenvalues of an arbitrary square matrix `b`,
/// from power traces via the Newton identities. No eigensolver needed.
pub fn sigma_all_matrix(b: &[f64], n: usize, kmax: usize) -> Vec<f64> {
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    if kmax == 0 {
        return e;
    }
    let mut p = vec![0.0; kmax + 1];
    let mut power = b.to_vec();
    p[1] = trace(&power, n);
    for j in 2..=kmax.min(n) {
        power = matmul(&power, b, n);
        p[j] = trace(&power, n);
    }
    for k in 1..=kmax.min(n) {
        let mut s = 0.0;
        for i in 1..=k {
            let term = e[k - i] * p[i];
            s += if i % 2 == 1 { term } else { -term };
        }
        e[k] = s / k as f64;
    }
    e
}

/// Newton tensor T_{k-1}(b) = Σ_j (-1)^j σ_{k-1-j}(b) b^j.
/// For any square `b`, dσ_k(b) = Σ_{ij} T_{k-1}(b)_{ji} db_{ij}.
pub fn newton_tensor(b: &[f64], n: usize, k: usize) -> Vec<f64> {
    assert!(k >= 1);
    let s = sigma_all_matrix(b, n, k - 1);
    // Horner form: T_0 = I, T_j = σ_j I - b T_{j-1}
    let mut t = identity(n);
    for j in 1..k {
        let bt = matmul(b, &t, n);
        for i in 0..n * n {
            t[i] = -bt[i];
        }
        for i in 0..n {
            t[i * n + i] += s[j];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmfunc::sigma_slice;

    fn random_sym(n: usize, seed: u64) -> Vec<f64> {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = next();
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    #[test]
    fn jacobi_diagonal_and_known() {
        let ev = sym_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((ev[0] - 3.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
        let ev = sym_eigenvalues(&[0.0; 9], 3);
        assert_eq!(ev, vec![0.0; 3]);
    }

    #[test]
    fn jacobi_preserves_invariants() {
        for n in 2..=8 {
            let a = random_sym(n, n as u64);
            let ev = sym_eigenvalues(&a, n);
            let s = sigma_all_matrix(&a, n, n);
            for k in 1..=n {
                let direct = sigma_slice(&ev, k);
                assert!((direct - s[k]).abs() < 1e-11, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn generalized_matches_inverse_product() {
        let n = 3;
        let g = [2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0];
        let m = random_sym(n, 9);
        let ev = generalized_eigenvalues(&m, &g, n).unwrap();
        let b = matmul(&spd_inverse(&g, n).unwrap(), &m, n);
        let s = sigma_all_matrix(&b, n, n);
        for k in 1..=n {
            assert!((sigma_slice(&ev, k) - s[k]).abs() < 1e-12);
        }
        assert!(generalized_eigenvalues(&m, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0], 3).is_err());
    }

    #[test]
    fn inverse_and_determinant() {
        let g = [4.0, 1.0, 1.0, 3.0];
        let inv = spd_inverse(&g, 2).unwrap();
        let p = matmul(&g, &inv, 2);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p[i * 2 + j] - want).abs() < 1e-15);
            }
        }
        assert!((spd_determinant(&g, 2).unwrap() - 11.0).abs() < 1e-13);
    }

    #[test]
    fn newton_tensor_is_the_gradient() {
        let n = 4;
        let b = random_sym(n, 17);
        for k in 1..=n {
            let t = newton_tensor(&b, n, k);
            let h = 1e-6;
            for i in 0..n {
                for j in 0..n {
                    let mut bp = b.clone();
                    let mut bm = b.clone();
                    bp[i * n + j] += h;
                    bm[i * n + j] -= h;
                    let fd = (sigma_all_matrix(&bp, n, k)[k] - sigma_all_matrix(&bm, n, k)[k]) / (2.0 * h);
                    assert!((fd - t[j * n + i]).abs() < 1e-7, "k={k} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn newton_tensor_at_degenerate_spectrum() {
        // Repeated eigenvalues: the polynomial form needs no eigenbasis.
        let t = newton_tensor(&identity(3), 3, 2);
        for i in 0..3 {
            assert!((t[i * 3 + i] - 2.0).abs() < 1e-15);
        }
    }
}
