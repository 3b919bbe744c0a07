//! Seeded property suites shared by the `verify` command and the tests.
//!
//! Every randomized case draws from its own generator seeded by
//! `case_seed(seed, group, case)`, so a failure is reproducible from the
//! reported triple alone.

use crate::conformal::{ConformalFactor, Gauge};
use crate::counterexamples::{hessian_blowup_witness, psi_closed_form, solve_g_eps, OdeTolerance};
use crate::error::Result;
use crate::flow::MuFunction;
use crate::geometry::{diagonal_witness_metric, schouten_from_metric, ChartGrid, MetricField, Topology};
use crate::symmfunc::{binomial, newton_quotient_bound, sample_cone, sigma_all, sigma_grad, sigma_reduced, Spectrum};
use crate::variational::variational_defect;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SUITES: [&str; 5] = ["symmfunc", "conformal", "flow", "variational", "counterexamples"];

/// Per-case seed; splitmix64 over the three inputs.
pub fn case_seed(seed: u64, group: u64, case: u64) -> u64 {
    let mut z = seed ^ group.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ case.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub name: String,
    pub cases: usize,
    pub passed: bool,
    /// The check's headline number, e.g. the worst residual or slack.
    pub worst: f64,
    pub detail: String,
    /// How to reproduce the first failing case.
    pub failure: Option<String>,
}

impl CheckReport {
    fn new(suite: &str, name: &str) -> Self {
        Self { suite: suite.into(), name: name.into(), cases: 0, passed: true, worst: 0.0, detail: String::new(), failure: None }
    }

    fn fail(&mut self, msg: String) {
        self.passed = false;
        if self.failure.is_none() {
            self.failure = Some(msg);
        }
    }
}

/// The (n, k) pairs of the identity suites: n ∈ {4, 6, 8, 10}, 1 ≤ k ≤ n/2.
pub fn identity_pairs() -> Vec<(usize, usize)> {
    [4, 6, 8, 10].iter().flat_map(|&n| (1..=n / 2).map(move |k| (n, k))).collect()
}

fn sorted_cone_sample(seed: u64, group: u64, case: u64, n: usize, k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, group, case));
    let mut lam = sample_cone(&mut rng, n, k);
    lam.sort_by(|a, b| b.partial_cmp(a).expect("finite sample"));
    lam
}

/// Identities and inequalities among σ_k, σ_{k;i} and σ_{k-1;i} on Γ_k.
/// Returns one report per property; `cases` random spectra per (n, k).
pub fn sigma_identity_checks(seed: u64, cases: usize) -> Vec<CheckReport> {
    let s = "symmfunc";
    let mut split = CheckReport::new(s, "split identity sigma_k = sigma_{k;i} + lambda_i sigma_{k-1;i}");
    let mut sum = CheckReport::new(s, "gradient sum = (n-k+1) sigma_{k-1}");
    let mut kth = CheckReport::new(s, "lambda_k >= 0 on Gamma_k");
    let mut order = CheckReport::new(s, "0 < sigma_{k-1;1} <= ... <= sigma_{k-1;n}");
    let mut mac = CheckReport::new(s, "sigma_{k-1} >= k/(n-k+1) C(n,k)^{1/k} sigma_k^{(k-1)/k}");
    let mut ratio = CheckReport::new(s, "sigma_{k-1;k} / sum_i sigma_{k-1;i} bounded below");
    let mut ratio_detail = Vec::new();
    for c in [&mut kth, &mut order, &mut mac, &mut ratio] {
        c.worst = f64::INFINITY;
    }
    let slack = 1e-12;
    for (pair, &(n, k)) in identity_pairs().iter().enumerate() {
        let mut min_ratio = f64::INFINITY;
        for case in 0..cases {
            let lam = sorted_cone_sample(seed, pair as u64, case as u64, n, k);
            let tag = || format!("seed {seed}, group {pair}, case {case} (n = {n}, k = {k}): {lam:?}");
            let sp = Spectrum::new(lam.clone()).expect("finite");
            let sig = sigma_all(&lam, k);
            let grad = sigma_grad(&sp, k).expect("1 <= k <= n");
            let g = grad.values();
            for i in 0..n {
                let red = sigma_reduced(&sp, k, i).expect("index in range");
                let scale = sig[k].abs() + red.abs() + (lam[i] * g[i]).abs();
                let r = (sig[k] - red - lam[i] * g[i]).abs() / scale.max(f64::MIN_POSITIVE);
                split.worst = split.worst.max(r);
                if r > 1e-12 {
                    split.fail(tag());
                }
            }
            let gsum: f64 = g.iter().sum();
            let want = (n - k + 1) as f64 * sig[k - 1];
            let r = (gsum - want).abs() / gsum.abs().max(want.abs());
            sum.worst = sum.worst.max(r);
            if r > 1e-12 {
                sum.fail(tag());
            }
            let scale = lam.iter().map(|x| x.abs()).fold(1.0, f64::max);
            kth.worst = kth.worst.min(lam[k - 1]);
            if lam[k - 1] < -slack * scale {
                kth.fail(tag());
            }
            let gscale = g.iter().map(|x| x.abs()).fold(1.0, f64::max);
            let mut step = g[0];
            for i in 1..n {
                step = step.min(g[i] - g[i - 1]);
            }
            order.worst = order.worst.min(step / gscale);
            if g[0] <= -slack * gscale || step < -slack * gscale {
                order.fail(tag());
            }
            let kf = k as f64;
            let rhs = kf / (n - k + 1) as f64 * binomial(n, k).powf(1.0 / kf) * sig[k].powf((kf - 1.0) / kf);
            let gap = (sig[k - 1] - rhs) / sig[k - 1].abs().max(1.0);
            mac.worst = mac.worst.min(gap);
            if gap < -slack {
                mac.fail(tag());
            }
            min_ratio = min_ratio.min(g[k - 1] / gsum);
            for c in [&mut split, &mut sum, &mut kth, &mut order, &mut mac] {
                c.cases += 1;
            }
        }
        ratio.cases += cases;
        ratio.worst = ratio.worst.min(min_ratio);
        if !(min_ratio > 0.0) {
            ratio.fail(format!("n = {n}, k = {k}: min ratio {min_ratio:e}"));
        }
        ratio_detail.push(format!("({n},{k}) {min_ratio:.4e}"));
    }
    ratio.detail = format!("minimum ratio per (n,k): {}", ratio_detail.join(", "));
    split.detail = format!("max relative residual {:e}", split.worst);
    sum.detail = format!("max relative residual {:e}", sum.worst);
    kth.detail = format!("min lambda_k {:e}", kth.worst);
    order.detail = format!("min normalized increment {:e}", order.worst);
    mac.detail = format!("min normalized gap {:e}", mac.worst);
    vec![split, sum, kth, order, mac, ratio]
}

/// `σ_k^{1/k}(tλ + (1-t)μ) ≥ t σ_k^{1/k}(λ) + (1-t) σ_k^{1/k}(μ) - 1e-10`.
pub fn concavity_check(seed: u64, cases: usize) -> CheckReport {
    let mut c = CheckReport::new("symmfunc", "concavity of sigma_k^{1/k} on Gamma_k");
    let pairs = identity_pairs();
    c.worst = f64::INFINITY;
    for case in 0..cases {
        let (n, k) = pairs[case % pairs.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, 100, case as u64));
        let a = sample_cone(&mut rng, n, k);
        let b = sample_cone(&mut rng, n, k);
        let t: f64 = rng.gen_range(0.0..=1.0);
        let root = |l: &[f64]| sigma_all(l, k)[k].powf(1.0 / k as f64);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let gap = root(&mid) - t * root(&a) - (1.0 - t) * root(&b);
        c.worst = c.worst.min(gap);
        c.cases += 1;
        if gap < -1e-10 {
            c.fail(format!("seed {seed}, group 100, case {case} (n = {n}, k = {k}, t = {t})"));
        }
    }
    c.detail = format!("min slack {:e}", c.worst);
    c
}

/// `∂σ_{k,l}/∂λ_i ≥ n(k-l)/(k(n-l)) σ_{l;i} σ_{k-1;i} / σ_l²` on Γ_k.
pub fn quotient_bound_check(seed: u64, cases: usize) -> CheckReport {
    let mut c = CheckReport::new("symmfunc", "quotient derivative lower bound");
    let pairs: Vec<(usize, usize)> = identity_pairs().into_iter().filter(|p| p.1 >= 2).collect();
    c.worst = f64::INFINITY;
    for case in 0..cases {
        let (n, k) = pairs[case % pairs.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, 200, case as u64));
        let lam = sample_cone(&mut rng, n, k);
        let l = rng.gen_range(1..k);
        let i = rng.gen_range(0..n);
        let (lhs, rhs) = newton_quotient_bound(&Spectrum::new(lam).expect("finite"), k, l, i).expect("sample in cone");
        let gap = (lhs - rhs) / lhs.abs().max(rhs.abs()).max(1e-300);
        c.worst = c.worst.min(gap);
        c.cases += 1;
        if gap < -1e-12 {
            c.fail(format!("seed {seed}, group 200, case {case} (n = {n}, k = {k}, l = {l}, i = {i})"));
        }
    }
    c.detail = format!("min relative gap {:e}", c.worst);
    c
}

/// Certification of μ for k = 2, 3.
pub fn mu_checks() -> Vec<CheckReport> {
    let mut out = Vec::new();
    for k in [2, 3] {
        let mut c = CheckReport::new("flow", &format!("mu certification, k = {k}"));
        c.cases = 1;
        match MuFunction::build(k) {
            Ok(mu) => {
                let cert = &mu.certificate;
                c.worst = cert.c0;
                c.detail = format!(
                    "switch ({}, {}), min mu' {:e}, C2 jump {:e}, mu(1e-100) {:.3}, c0 {:.6}, sup t^(1-1/k) mu' {:.6}, sup |t mu''/mu'| {:.6}",
                    mu.t_lo, mu.t_hi, cert.min_derivative, cert.c2_jump, cert.value_near_zero, cert.c0, cert.sup_power_derivative, cert.sup_log_curvature
                );
                let ok = cert.min_derivative > 0.0
                    && cert.c2_jump < 1e-8
                    && cert.value_near_zero < -200.0
                    && cert.c0 > 0.0
                    && cert.sup_power_derivative.is_finite()
                    && cert.sup_log_curvature.is_finite();
                if !ok {
                    c.fail(c.detail.clone());
                }
            }
            Err(e) => c.fail(e.to_string()),
        }
        out.push(c);
    }
    out
}

/// Random smooth factors converted V → U → W → V and W → V → U → W.
pub fn gauge_round_trip_check(seed: u64, cases: usize) -> Result<CheckReport> {
    let mut c = CheckReport::new("conformal", "gauge round trips");
    let grid = ChartGrid::centered_cube(4, 5, 1.0)?;
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, 300, case as u64));
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = ConformalFactor::from_fn(grid.clone(), Gauge::W, |x| {
            a[0] + a[1] * x[0] + a[2] * (x[1] * x[2]) + a[3] * (3.0 * x[3]).sin() + a[4] * x[0] * x[0] + a[5]
        })?;
        let back = w.convert(Gauge::V)?.convert(Gauge::U)?.convert(Gauge::W)?;
        let v = w.convert(Gauge::V)?;
        let v2 = v.convert(Gauge::U)?.convert(Gauge::W)?.convert(Gauge::V)?;
        for i in 0..grid.len() {
            let e1 = (back.data[i] - w.data[i]).abs() / w.data[i].abs().max(1.0);
            let e2 = (v2.data[i] - v.data[i]).abs() / v.data[i].abs();
            c.worst = c.worst.max(e1).max(e2);
        }
        c.cases += 1;
        if c.worst > 1e-12 && c.failure.is_none() {
            c.fail(format!("seed {seed}, group 300, case {case}"));
        }
    }
    c.detail = format!("max relative round-trip error {:e}", c.worst);
    Ok(c)
}

/// A smooth symmetric positive definite metric `I + amplitude · (trigonometric perturbation)`.
pub fn random_smooth_metric(seed: u64, n: usize, amplitude: f64) -> impl Fn(&[f64]) -> Vec<f64> + Clone {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = n * (n + 1) / 2;
    let coef: Vec<f64> = (0..m * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    move |x: &[f64]| {
        let mut g = vec![0.0; n * n];
        let mut t = 0;
        for i in 0..n {
            for j in i..n {
                let c = &coef[t * 4..t * 4 + 4];
                let val = amplitude
                    * (c[0] * (2.0 * x[i] + c[3]).sin() + c[1] * (1.5 * x[j] - c[3]).cos() + c[2] * (x[(i + 1) % n] + x[j]).sin());
                g[i * n + j] += val;
                if i != j {
                    g[j * n + i] += val;
                }
                t += 1;
            }
            g[i * n + i] += 1.0;
        }
        g
    }
}

/// L∞ of the defect over `[-inner, inner]^n` for a chart `[-half, half]^n` with spacing h.
pub fn defect_on_box(metric: impl Fn(&[f64]) -> Vec<f64>, v: impl Fn(&[f64]) -> f64, n: usize, k: usize, h: f64, half: f64, inner: f64) -> Result<f64> {
    let m = (2.0 * half / h).round() as usize + 1;
    let grid = ChartGrid::new(vec![m; n], vec![h; n], vec![-half; n], Topology::Bounded)?;
    let metric = MetricField::explicit(grid.clone(), metric)?;
    let bg = schouten_from_metric(&metric)?;
    let f = ConformalFactor::from_fn(grid.clone(), Gauge::V, v)?;
    let d = variational_defect(&f, &bg, &metric, k)?;
    Ok(d.linf_within(&grid, &vec![0.0; n], inner))
}

/// Small-grid versions of the defect refinement checks.
pub fn variational_checks(seed: u64) -> Result<Vec<CheckReport>> {
    let mut bianchi = CheckReport::new("variational", "k = 2 defect decreases under refinement");
    let levels = [0.05, 0.025];
    let g = random_smooth_metric(case_seed(seed, 400, 0), 3, 0.15);
    let d: Vec<f64> = levels.iter().map(|&h| defect_on_box(g.clone(), |_| 1.0, 3, 2, h, 0.25, 0.1)).collect::<Result<_>>()?;
    bianchi.cases = 1;
    bianchi.worst = d[0] / d[1];
    bianchi.detail = format!("defect {:e} -> {:e}, ratio {:.3}", d[0], d[1], d[0] / d[1]);
    if !(d[0] / d[1] >= 3.0) {
        bianchi.fail(format!("seed {seed}, group 400, case 0"));
    }
    let mut witness = CheckReport::new("variational", "k = 3 witness metric defect stays away from zero");
    let d: Vec<f64> = levels.iter().map(|&h| defect_on_box(diagonal_witness_metric, |_| 1.0, 3, 3, h, 0.25, 0.1)).collect::<Result<_>>()?;
    witness.cases = 1;
    witness.worst = d[0].min(d[1]);
    witness.detail = format!("defect {:e} -> {:e}", d[0], d[1]);
    if !(d[1] > 0.1 && d[1] > 0.5 * d[0]) {
        witness.fail(witness.detail.clone());
    }
    Ok(vec![bianchi, witness])
}

pub fn counterexample_checks() -> Result<Vec<CheckReport>> {
    let s = "counterexamples";
    let mut psi = CheckReport::new(s, "closed-form residual on [0, 0.9]");
    for i in 0..1000 {
        let x = 0.9 * i as f64 / 999.0;
        psi.worst = psi.worst.max(psi_closed_form(x).1.abs());
        psi.cases += 1;
    }
    psi.detail = format!("max |residual| {:e}", psi.worst);
    if !(psi.worst < 1e-14) {
        psi.fail(psi.detail.clone());
    }
    let mut slope = CheckReport::new(s, "g'(0) = 1/eps - c0");
    for (eps, c0) in [(1.0, 0.0), (1e-2, 0.0), (1e-4, 0.0), (0.1, 0.5), (0.1, -0.5)] {
        let sol = solve_g_eps(eps, c0, 1.0, OdeTolerance::default())?;
        slope.cases += 1;
        let d = (sol.gprime()[0] - (1.0 / eps - c0)).abs();
        slope.worst = slope.worst.max(d);
        if d != 0.0 {
            slope.fail(format!("eps = {eps}, c0 = {c0}"));
        }
    }
    slope.detail = format!("max deviation {:e}", slope.worst);
    let mut blow = CheckReport::new(s, "max |g'| grows as eps decreases");
    let r = hessian_blowup_witness(&[1e-1, 1e-2, 1e-3, 1e-4], 1.0, 0.0, 1.0, &[-0.5, 0.0, 0.5], OdeTolerance::default())?;
    blow.cases = r.rows.len();
    let factor = r.rows[3].max_abs_u11 / r.rows[1].max_abs_u11;
    blow.worst = factor;
    let res = r.rows.iter().map(|x| x.residual).fold(0.0, f64::max);
    blow.detail = format!("max|g'|(1e-4)/max|g'|(1e-2) = {factor:.4}, monotone {}, max 2-D residual {res:e}", r.monotone);
    if !(r.monotone && factor > 10.0 && res < 1e-9) {
        blow.fail(blow.detail.clone());
    }
    Ok(vec![psi, slope, blow])
}

/// Runs the named suites (all when `filter` is empty) with default case counts.
pub fn run_suites(filter: &[String], seed: u64) -> Result<Vec<CheckReport>> {
    let want = |s: &str| filter.is_empty() || filter.iter().any(|f| f == s);
    let mut out = Vec::new();
    if want("symmfunc") {
        out.extend(sigma_identity_checks(seed, 10_000));
        out.push(concavity_check(seed, 10_000));
        out.push(quotient_bound_check(seed, 10_000));
    }
    if want("conformal") {
        out.push(gauge_round_trip_check(seed, 20)?);
    }
    if want("flow") {
        out.extend(mu_checks());
    }
    if want("variational") {
        out.extend(variational_checks(seed)?);
    }
    if want("counterexamples") {
        out.extend(counterexample_checks()?);
    }
    Ok(out)
}
