//! Descent gradient flow `w_t = μ(σ_k(λ(W))) - μ(f)` with `f = κ e^{-q w}`.
//!
//! The flow decreases
//! `J(w) = ((n-2)/2)^{k+1} [C(w) - κ/(n-2k+q) ∫ e^{-(n-2k+q) w}]`, where
//! `C(w) = 1/(n-2k) ∫ e^{(2k-n) w} σ_k(W)` for k < n/2 and
//! `C(w) = -∫_0^1 ∫ w σ_k(W_{tw}) dt` for k = n/2. With
//! `κ = (2/(n-2))^k` and `q = 2k - (n-2)ε/2` this is the subcritical
//! functional `J_p` in the v normalization, `p = (n+2)/(n-2) - ε`.
//!
//! Time stepping is explicit Euler. A step is accepted only if every node
//! stays in Γ_k with margin τ and J does not increase beyond a relative
//! tolerance; otherwise dt is halved.

pub mod domain;
pub mod mu;

use crate::error::{Error, Result};
use crate::functionals::{maximize_scaling, EnergyRecord, ScalingReport};
use crate::quadrature::{gauss_legendre, pairwise_sum};
use crate::symmfunc::binomial;
pub use domain::{FlowDomain, GridDomain, RadialDomain};
pub use mu::{MuCertificate, MuFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowProblem {
    pub n: usize,
    pub k: usize,
    /// Subcriticality ε; the exponent of f is `q = 2k - (n-2)ε/2`.
    pub eps: f64,
    pub kappa: f64,
    /// Rescaling parameter a ≥ 1 of `w_t = (μ(a^k σ) - μ(a^k f)) / a`.
    pub rescale: f64,
    pub mu: MuFunction,
}

impl FlowProblem {
    pub fn new(n: usize, k: usize, eps: f64, kappa: f64) -> Result<Self> {
        if n < 3 || k == 0 || 2 * k > n {
            return Err(Error::Domain(format!("flow needs 1 <= k <= n/2, got n = {n}, k = {k}")));
        }
        let q = 2.0 * k as f64 - (n as f64 - 2.0) * eps / 2.0;
        if !(q > 0.0) || !(eps >= 0.0) || !(kappa > 0.0) {
            return Err(Error::Domain(format!("need eps >= 0, kappa > 0 and q > 0 (q = {q})")));
        }
        Ok(Self { n, k, eps, kappa, rescale: 1.0, mu: MuFunction::build(k)? })
    }

    /// κ = (2/(n-2))^k, whose stationary points are critical points of J_p.
    pub fn normalized(n: usize, k: usize, eps: f64) -> Result<Self> {
        Self::new(n, k, eps, (2.0 / (n as f64 - 2.0)).powi(k as i32))
    }

    pub fn with_rescale(mut self, a: f64) -> Result<Self> {
        if !(a >= 1.0) {
            return Err(Error::Domain("rescaling needs a >= 1".into()));
        }
        self.rescale = a;
        Ok(self)
    }

    pub fn q(&self) -> f64 {
        2.0 * self.k as f64 - (self.n as f64 - 2.0) * self.eps / 2.0
    }

    pub fn p(&self) -> f64 {
        let nf = self.n as f64;
        (nf + 2.0) / (nf - 2.0) - self.eps
    }

    pub fn f(&self, w: f64) -> f64 {
        self.kappa * (-self.q() * w).exp()
    }

    /// The rescaled μ difference driving the flow at one node.
    pub fn rate(&self, sigma: f64, f: f64) -> f64 {
        let a = self.rescale;
        if a == 1.0 {
            return self.mu.eval(sigma) - self.mu.eval(f);
        }
        let ak = a.powi(self.k as i32);
        (self.mu.eval(ak * sigma) - self.mu.eval(ak * f)) / a
    }

    /// The constant solving `σ_k(½ I) = κ e^{-q c}` on the unit sphere.
    pub fn sphere_constant_solution(&self) -> f64 {
        let s = binomial(self.n, self.k) / 2f64.powi(self.k as i32);
        -(s / self.kappa).ln() / self.q()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub dt_max: f64,
    /// Required admissibility margin on min σ_j.
    pub tau: f64,
    pub max_halvings: usize,
    pub growth_after: usize,
    pub growth: f64,
    pub j_rel_tol: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { dt: 1e-3, dt_max: 0.05, tau: 0.0, max_halvings: 30, growth_after: 5, growth: 1.5, j_rel_tol: 1e-10 }
    }
}

impl StepConfig {
    /// Caps dt at a fraction of h² so high-frequency modes stay under the
    /// explicit stability limit; the acceptance tests alone let them grow
    /// below the J tolerance.
    pub fn diffusive(h: f64) -> Self {
        let dt = 0.1 * h * h;
        Self { dt, dt_max: dt, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub max_t: f64,
    pub max_steps: usize,
    pub rhs_tol: f64,
    /// Extinction is declared once min w exceeds this level (v → 0).
    pub extinct_level: f64,
    /// Blow-up is declared once min w falls below this level.
    pub blowup_level: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self { max_t: 100.0, max_steps: 1_000_000, rhs_tol: 1e-6, extinct_level: 8.0, blowup_level: -8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    Extinct,
    InfBlowup,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub w: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub steps: usize,
    pub rejections: usize,
    pub streak: usize,
    pub history: Vec<EnergyRecord>,
}

impl FlowState {
    pub fn new(w: Vec<f64>, dt: f64) -> Self {
        Self { w, t: 0.0, dt, steps: 0, rejections: 0, streak: 0, history: Vec::new() }
    }
}

/// Everything the flow needs at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub sigma_k: Vec<f64>,
    pub f: Vec<f64>,
    /// Zero on frozen nodes; empty when the state left the cone.
    pub rhs: Vec<f64>,
    /// min over active nodes and j = 1..k of σ_j.
    pub margin: f64,
    pub rhs_inf: f64,
    /// min over nodes of (σ_k - f)(μ(σ_k) - μ(f)).
    pub min_product: f64,
    /// min over nodes of the product minus c0 (σ_k - f)(σ_k^{1/k} - f^{1/k}).
    pub min_product_excess: f64,
    pub record: EnergyRecord,
}

fn energy(domain: &dyn FlowDomain, problem: &FlowProblem, w: &[f64], sigma_k: &[f64]) -> Result<EnergyRecord> {
    let (n, k) = (problem.n, problem.k);
    let nf = n as f64;
    let kf = k as f64;
    let q = problem.q();
    let wts = domain.weights();
    let mut fk_terms = Vec::with_capacity(w.len());
    let mut vol_terms = Vec::with_capacity(w.len());
    let mut pow_terms = Vec::with_capacity(w.len());
    let mut min_sigma_k = f64::INFINITY;
    for i in 0..w.len() {
        if !domain.active(i) || wts[i] == 0.0 {
            continue;
        }
        fk_terms.push(wts[i] * ((2.0 * kf - nf) * w[i]).exp() * sigma_k[i]);
        vol_terms.push(wts[i] * (-nf * w[i]).exp());
        pow_terms.push(wts[i] * (-(nf - 2.0 * kf + q) * w[i]).exp());
        min_sigma_k = min_sigma_k.min(sigma_k[i]);
    }
    let raw_fk = pairwise_sum(&fk_terms);
    let volume = pairwise_sum(&vol_terms);
    let power = pairwise_sum(&pow_terms);
    let half = (nf - 2.0) / 2.0;
    let f_k = half.powi(k as i32) * raw_fk;
    let curv = if 2 * k == n {
        e_functional(domain, k, w)?
    } else {
        raw_fk / (nf - 2.0 * kf)
    };
    let j = half.powi(k as i32 + 1) * (curv - problem.kappa / (nf - 2.0 * kf + q) * power);
    let q_k = f_k / volume.powf((nf - 2.0 * kf) / nf);
    if !j.is_finite() {
        return Err(Error::NonFinite { node: 0 });
    }
    Ok(EnergyRecord { t: 0.0, j, f_k, volume, min_sigma_k, q_k })
}

/// `-∫_0^1 ∫ w σ_k(W_{tw}) dt`; the t-integrand has degree 2k, so k+1 Gauss nodes are exact.
fn e_functional(domain: &dyn FlowDomain, k: usize, w: &[f64]) -> Result<f64> {
    let (nodes, gw) = gauss_legendre(k + 1);
    let wts = domain.weights();
    let mut total = 0.0;
    for (&t, &g) in nodes.iter().zip(&gw) {
        let tw: Vec<f64> = w.iter().map(|x| t * x).collect();
        let sig = domain.sigmas(&tw, k)?;
        let terms: Vec<f64> = (0..w.len())
            .filter(|&i| domain.active(i) && wts[i] != 0.0)
            .map(|i| wts[i] * w[i] * sig[i * (k + 1) + k])
            .collect();
        total += g * pairwise_sum(&terms);
    }
    Ok(-total)
}

/// Evaluates σ_k, f, the flow rate, cone margin and energy at `w`.
pub fn evaluate(domain: &dyn FlowDomain, problem: &FlowProblem, w: &[f64]) -> Result<Evaluation> {
    let k = problem.k;
    let sig = domain.sigmas(w, k)?;
    let len = domain.len();
    let mut sigma_k = vec![f64::NAN; len];
    let mut f = vec![f64::NAN; len];
    let mut margin = f64::INFINITY;
    for i in 0..len {
        if !domain.active(i) {
            continue;
        }
        let s = &sig[i * (k + 1)..(i + 1) * (k + 1)];
        margin = s[1..].iter().fold(margin, |m, &x| m.min(x));
        if s.iter().any(|x| !x.is_finite()) || !w[i].is_finite() {
            return Err(Error::NonFinite { node: i });
        }
        sigma_k[i] = s[k];
        f[i] = problem.f(w[i]);
    }
    let mut rhs = Vec::new();
    let mut rhs_inf = f64::INFINITY;
    let mut min_product = f64::NAN;
    let mut min_product_excess = f64::NAN;
    if margin > 0.0 {
        rhs = vec![0.0; len];
        rhs_inf = 0.0;
        min_product = f64::INFINITY;
        min_product_excess = f64::INFINITY;
        let c0 = problem.mu.c0();
        let inv_k = 1.0 / k as f64;
        for i in 0..len {
            if !domain.active(i) {
                continue;
            }
            let (s, fi) = (sigma_k[i], f[i]);
            rhs[i] = problem.rate(s, fi);
            rhs_inf = rhs_inf.max(rhs[i].abs());
            let prod = (s - fi) * (problem.mu.eval(s) - problem.mu.eval(fi));
            min_product = min_product.min(prod);
            let lower = c0 * (s - fi) * (s.powf(inv_k) - fi.powf(inv_k));
            min_product_excess = min_product_excess.min(prod - lower);
        }
    }
    let record = energy(domain, problem, w, &sigma_k)?;
    Ok(Evaluation { sigma_k, f, rhs, margin, rhs_inf, min_product, min_product_excess, record })
}

/// The pointwise flow rate at `w`; fails if some node has left Γ_k.
pub fn flow_rhs(domain: &dyn FlowDomain, problem: &FlowProblem, w: &[f64]) -> Result<Vec<f64>> {
    let e = evaluate(domain, problem, w)?;
    if e.rhs.is_empty() {
        return Err(Error::Cone(format!("state left the cone (margin {:e})", e.margin)));
    }
    Ok(e.rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: f64,
    pub dt: f64,
    pub halvings: usize,
    /// J(after) - J(before).
    pub delta_j: f64,
    pub j_tol: f64,
    /// Admissibility margin of the accepted state.
    pub margin: f64,
    /// Pointwise product checks at the state the step started from.
    pub min_product: f64,
    pub min_product_excess: f64,
    pub rhs_inf: f64,
}

fn step_from(
    domain: &dyn FlowDomain,
    problem: &FlowProblem,
    state: &mut FlowState,
    cfg: &StepConfig,
    cur: &Evaluation,
) -> Result<(StepReport, Evaluation)> {
    if cur.rhs.is_empty() {
        return Err(Error::Cone("current state is not admissible".into()));
    }
    let j0 = cur.record.j;
    let j_tol = cfg.j_rel_tol * (1.0 + j0.abs());
    let mut dt = state.dt;
    for halvings in 0..=cfg.max_halvings {
        let trial: Vec<f64> = state.w.iter().zip(&cur.rhs).map(|(w, r)| w + dt * r).collect();
        let ok = match evaluate(domain, problem, &trial) {
            Ok(e) if e.margin > cfg.tau && !e.rhs.is_empty() && e.record.j - j0 <= j_tol => Some(e),
            Ok(_) | Err(Error::NonFinite { .. }) => None,
            Err(e) => return Err(e),
        };
        match ok {
            Some(mut next) => {
                state.w = trial;
                state.t += dt;
                state.steps += 1;
                state.streak += 1;
                state.dt = dt;
                if state.streak >= cfg.growth_after {
                    state.dt = (dt * cfg.growth).min(cfg.dt_max);
                    state.streak = 0;
                }
                next.record.t = state.t;
                state.history.push(next.record);
                let report = StepReport {
                    t: state.t,
                    dt,
                    halvings,
                    delta_j: next.record.j - j0,
                    j_tol,
                    margin: next.margin,
                    min_product: cur.min_product,
                    min_product_excess: cur.min_product_excess,
                    rhs_inf: next.rhs_inf,
                };
                return Ok((report, next));
            }
            None => {
                state.rejections += 1;
                state.streak = 0;
                dt *= 0.5;
            }
        }
    }
    Err(Error::Stall { halvings: cfg.max_halvings, t: state.t })
}

/// One accepted explicit Euler step, halving dt on rejection.
pub fn flow_step(domain: &dyn FlowDomain, problem: &FlowProblem, state: &mut FlowState, cfg: &StepConfig) -> Result<StepReport> {
    let cur = evaluate(domain, problem, &state.w)?;
    if state.history.is_empty() {
        let mut r = cur.record;
        r.t = state.t;
        state.history.push(r);
    }
    step_from(domain, problem, state, cfg, &cur).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub verdict: Verdict,
    pub steps: usize,
    pub rejections: usize,
    /// max over accepted steps of ΔJ / (1 + |J|).
    pub max_rel_delta_j: f64,
    pub min_margin: f64,
    pub min_product: f64,
    pub min_product_excess: f64,
    pub final_rhs_inf: f64,
    pub final_record: EnergyRecord,
}

/// Iterates [`flow_step`] from `state` until a verdict is reached. The
/// observer sees every accepted step.
pub fn flow_run_from(
    domain: &dyn FlowDomain,
    problem: &FlowProblem,
    state: &mut FlowState,
    stop: &StopCriteria,
    cfg: &StepConfig,
    observer: &mut dyn FnMut(&FlowState, &StepReport) -> Result<()>,
) -> Result<RunSummary> {
    let mut cur = evaluate(domain, problem, &state.w)?;
    if cur.rhs.is_empty() || cur.margin <= cfg.tau {
        return Err(Error::Cone(format!("initial data is not {}-admissible", problem.k)));
    }
    if state.history.is_empty() {
        let mut r = cur.record;
        r.t = state.t;
        state.history.push(r);
    }
    let mut summary = RunSummary {
        verdict: Verdict::Timeout,
        steps: 0,
        rejections: 0,
        max_rel_delta_j: f64::NEG_INFINITY,
        min_margin: cur.margin,
        min_product: f64::INFINITY,
        min_product_excess: f64::INFINITY,
        final_rhs_inf: cur.rhs_inf,
        final_record: cur.record,
    };
    let rejections0 = state.rejections;
    let min_active = |w: &[f64]| (0..w.len()).filter(|&i| domain.active(i)).map(|i| w[i]).fold(f64::INFINITY, f64::min);
    let verdict = loop {
        if cur.rhs_inf < stop.rhs_tol {
            break Verdict::Converged;
        }
        let m = min_active(&state.w);
        if m > stop.extinct_level {
            break Verdict::Extinct;
        }
        if m < stop.blowup_level {
            break Verdict::InfBlowup;
        }
        if state.t >= stop.max_t || state.steps >= stop.max_steps {
            break Verdict::Timeout;
        }
        let (report, next) = step_from(domain, problem, state, cfg, &cur)?;
        summary.steps += 1;
        summary.max_rel_delta_j = summary.max_rel_delta_j.max(report.delta_j / (1.0 + cur.record.j.abs()));
        summary.min_margin = summary.min_margin.min(report.margin);
        summary.min_product = summary.min_product.min(report.min_product);
        summary.min_product_excess = summary.min_product_excess.min(report.min_product_excess);
        observer(state, &report)?;
        cur = next;
    };
    summary.verdict = verdict;
    summary.rejections = state.rejections - rejections0;
    summary.final_rhs_inf = cur.rhs_inf;
    summary.final_record = *state.history.last().expect("history has the initial record");
    Ok(summary)
}

pub fn flow_run(
    domain: &dyn FlowDomain,
    problem: &FlowProblem,
    init: Vec<f64>,
    stop: &StopCriteria,
    cfg: &StepConfig,
) -> Result<(FlowState, RunSummary)> {
    if init.len() != domain.len() {
        return Err(Error::Format("initial data length does not match the domain".into()));
    }
    let mut state = FlowState::new(init, cfg.dt);
    let summary = flow_run_from(domain, problem, &mut state, stop, cfg, &mut |_, _| Ok(()))?;
    Ok((state, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingReport {
    /// Shift added to the base data in the final run.
    pub shift: f64,
    pub trials: Vec<(f64, Verdict)>,
    pub state: FlowState,
    pub summary: RunSummary,
}

/// Bisects over a uniform shift `s` of `base` until the run from `base + s`
/// converges. Larger shifts shrink the metric and end in extinction; smaller
/// ones end in blow-up, so the bracket [lo, hi] should straddle the
/// transition. Every accepted step of every run is passed to `observer`.
#[allow(clippy::too_many_arguments)]
pub fn shoot(
    domain: &dyn FlowDomain,
    problem: &FlowProblem,
    base: &[f64],
    mut lo: f64,
    mut hi: f64,
    stop: &StopCriteria,
    cfg: &StepConfig,
    max_iter: usize,
    observer: &mut dyn FnMut(&FlowState, &StepReport) -> Result<()>,
) -> Result<ShootingReport> {
    let mut trials = Vec::new();
    let mut last = None;
    for _ in 0..max_iter {
        let s = 0.5 * (lo + hi);
        let w: Vec<f64> = base.iter().enumerate().map(|(i, x)| if domain.active(i) { x + s } else { *x }).collect();
        let mut state = FlowState::new(w, cfg.dt);
        let summary = flow_run_from(domain, problem, &mut state, stop, cfg, observer)?;
        trials.push((s, summary.verdict));
        match summary.verdict {
            Verdict::Converged => return Ok(ShootingReport { shift: s, trials, state, summary }),
            Verdict::Extinct => hi = s,
            Verdict::InfBlowup => lo = s,
            Verdict::Timeout => {
                let start = state.history.first().map(|r| r.volume).unwrap_or(0.0);
                let end = summary.final_record.volume;
                if end < start {
                    hi = s;
                } else {
                    lo = s;
                }
            }
        }
        last = Some((s, state, summary));
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + s.abs()) {
            break;
        }
    }
    let (shift, state, summary) = last.ok_or(Error::Domain("no shooting iterations".into()))?;
    Ok(ShootingReport { shift, trials, state, summary })
}

/// `sup_s J(s v)` for a state, using exact homogeneity of the discrete
/// curvature term in v; requires k < n/2.
pub fn scaling_of_state(domain: &dyn FlowDomain, problem: &FlowProblem, w: &[f64]) -> Result<ScalingReport> {
    let (n, k) = (problem.n, problem.k);
    if 2 * k >= n {
        return Err(Error::Pole(format!("scaling identity needs k < n/2, got k = {k}, n = {n}")));
    }
    let nf = n as f64;
    let kf = k as f64;
    let e = evaluate(domain, problem, w)?;
    let p = problem.p();
    let a = (nf - 2.0) / (2.0 * nf - 4.0 * kf) * e.record.f_k;
    // ∫ v^{p+1} with v = e^{-(n-2)w/2}; the energy's power term carries κ,
    // which equals (2/(n-2))^k only in the normalized problem.
    let wts = domain.weights();
    let terms: Vec<f64> = (0..w.len())
        .filter(|&i| domain.active(i) && wts[i] != 0.0)
        .map(|i| wts[i] * (-(nf - 2.0) * (p + 1.0) / 2.0 * w[i]).exp())
        .collect();
    let b = pairwise_sum(&terms);
    Ok(maximize_scaling(a, b, (2.0 * nf - 4.0 * kf) / (nf - 2.0), p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleEntry {
    pub a: f64,
    pub max_grad: f64,
    pub max_hess: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleReport {
    pub entries: Vec<RescaleEntry>,
    /// max / min of the gradient sup-norms across a.
    pub grad_spread: f64,
    /// max over nodes of |rescaled rate at a = 1 - plain rate| at the initial data.
    pub identity_deviation: f64,
}

/// Runs the rescaled flow `w_t = (μ(a^k σ) - μ(a^k f))/a` for each `a` up to
/// time `horizon` and records sup-norms of ∇w and ∇²w along each run.
pub fn rescaled_flow_check(
    domain: &dyn FlowDomain,
    problem: &FlowProblem,
    init: &[f64],
    a_values: &[f64],
    horizon: f64,
    cfg: &StepConfig,
) -> Result<RescaleReport> {
    let base = flow_rhs(domain, problem, init)?;
    let one = flow_rhs(domain, &problem.clone().with_rescale(1.0)?, init)?;
    let identity_deviation = base.iter().zip(&one).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut entries = Vec::new();
    for &a in a_values {
        let pr = problem.clone().with_rescale(a)?;
        let stop = StopCriteria { max_t: horizon, ..StopCriteria::default() };
        let (g0, h0) = domain.derivative_sup(init);
        let mut gmax = g0;
        let mut hmax = h0;
        let mut state = FlowState::new(init.to_vec(), cfg.dt);
        let summary = flow_run_from(domain, &pr, &mut state, &stop, cfg, &mut |s, _| {
            let (g, h) = domain.derivative_sup(&s.w);
            gmax = gmax.max(g);
            hmax = hmax.max(h);
            Ok(())
        })?;
        entries.push(RescaleEntry { a, max_grad: gmax, max_hess: hmax, verdict: summary.verdict });
    }
    let gs: Vec<f64> = entries.iter().map(|e| e.max_grad).collect();
    let grad_spread = gs.iter().cloned().fold(0.0, f64::max) / gs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RescaleReport { entries, grad_spread, identity_deviation })
}
