use kyamabe::conformal::{ConformalFactor, Gauge};
use kyamabe::geometry::ChartGrid;
use kyamabe::symmfunc::{binomial, sigma_all, sigma_reduced, Spectrum};
use proptest::prelude::*;

fn brute_sigma(lam: &[f64], k: usize) -> f64 {
    let n = lam.len();
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| lam[i]).product::<f64>())
        .sum()
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2..8)
}

proptest! {
    #[test]
    fn sigma_matches_subset_sums(lam in spectrum()) {
        let s = sigma_all(&lam, lam.len());
        for (k, got) in s.iter().enumerate() {
            let want = if k == 0 { 1.0 } else { brute_sigma(&lam, k) };
            let scale = binomial(lam.len(), k) * 3f64.powi(k as i32);
            prop_assert!((got - want).abs() <= 1e-12 * scale, "k = {k}: {got} vs {want}");
        }
    }

    #[test]
    fn sigma_is_homogeneous(lam in spectrum(), c in 0.1f64..4.0) {
        let scaled: Vec<f64> = lam.iter().map(|x| c * x).collect();
        let (a, b) = (sigma_all(&lam, lam.len()), sigma_all(&scaled, lam.len()));
        for k in 0..=lam.len() {
            let scale = binomial(lam.len(), k) * (3.0 * c.max(1.0)).powi(k as i32);
            prop_assert!((b[k] - c.powi(k as i32) * a[k]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn split_identity_holds_off_the_cone(lam in spectrum(), pick in 0usize..8) {
        let n = lam.len();
        let i = pick % n;
        let sp = Spectrum::new(lam.clone()).unwrap();
        let s = sigma_all(&lam, n);
        for k in 1..=n {
            let lhs = s[k];
            let rhs = sigma_reduced(&sp, k, i).unwrap() + lam[i] * sigma_reduced(&sp, k - 1, i).unwrap();
            let scale = binomial(n, k) * 3f64.powi(k as i32);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn gauges_round_trip(a in -2.0f64..2.0, b in -1.0f64..1.0) {
        let grid = ChartGrid::centered_cube(3, 5, 1.0).unwrap();
        let w = ConformalFactor::from_fn(grid, Gauge::W, |x| a + b * x[0] * x[1]).unwrap();
        let back = w.convert(Gauge::V).unwrap().convert(Gauge::U).unwrap().convert(Gauge::W).unwrap();
        for (x, y) in w.data.iter().zip(&back.data) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
