use crate::config::Config;
use crate::{bad_param, display, Ctx, Failure, EXIT_OK};
use kyamabe::conformal::{admissibility, bubble, ConformalFactor, Gauge};
use kyamabe::counterexamples::{hessian_blowup_witness, psi_closed_form, OdeTolerance};
use kyamabe::functionals::{
    functional_e_half, functional_fk, functional_jp, functional_qk, functional_volume, sobolev_quotient, sup_over_scaling,
    yamabe_constant_sphere, QuadratureContext,
};
use kyamabe::geometry::{diagonal_witness_metric, schouten_from_metric, ChartGrid, MetricField, SchoutenBackground, Topology};
use kyamabe::io::field_csv;
use kyamabe::suites::{case_seed, random_smooth_metric};
use kyamabe::variational::{reconstruct_functional, variational_defect};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write;

pub fn constants(ctx: &Ctx) -> Result<u8, Failure> {
    let (n, k) = ctx.cfg.dims(4, 2, 1)?;
    let s = yamabe_constant_sphere(n, k).map_err(bad_param)?;
    println!("n = {n}, k = {k}");
    println!("C_nk     = {}", s.c_nk);
    println!("Y_1      = {}", s.y1);
    println!("direct   = {}", s.direct);
    println!("composed = {}", s.composed);
    println!("rel_diff = {:e}", s.rel_diff);
    ctx.write_json("constants.json", &s)?;
    Ok(EXIT_OK)
}

struct Background {
    grid: ChartGrid,
    metric: MetricField,
    bg: SchoutenBackground,
}

/// A chart of spacing `h`: `[-half, half]^n`, or `[0, length)^n` when periodic.
fn background(cfg: &Config, seed: u64, geometry: &str, n: usize, h: f64, half: f64) -> Result<Background, Failure> {
    let cube = || {
        let m = (2.0 * half / h).round() as usize + 1;
        ChartGrid::new(vec![m; n], vec![h; n], vec![-half; n], Topology::Bounded).map_err(bad_param)
    };
    let metric = match geometry {
        "flat-periodic" => {
            let len = cfg.positive("length", std::f64::consts::TAU)?;
            let m = (len / h).round() as usize;
            MetricField::flat(ChartGrid::periodic_box(n, m, len).map_err(bad_param)?)
        }
        "flat-chart" => MetricField::flat(cube()?),
        "sphere-chart" => MetricField::round_sphere_chart(cube()?)?,
        "metric-witness" => {
            if n != 3 {
                return Err(Failure::Config("metric-witness is three-dimensional; set n = 3".into()));
            }
            MetricField::explicit(cube()?, diagonal_witness_metric)?
        }
        "metric-random" => MetricField::explicit(cube()?, random_smooth_metric(case_seed(seed, 400, 0), n, cfg.f64("amplitude", 0.15)))?,
        other => return Err(Failure::Config(format!("{other} has no chart form here"))),
    };
    let bg = schouten_from_metric(&metric)?;
    Ok(Background { grid: metric.grid.clone(), metric, bg })
}

#[derive(Serialize)]
struct DefectLevel {
    h: f64,
    nodes: usize,
    linf_inner: f64,
    linf: f64,
    l2: f64,
    ratio: Option<f64>,
}

pub fn variational(ctx: &Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let n = cfg.usize("n", 3)?;
    let k = cfg.usize("k", 3)?;
    if n < 3 || k == 0 || k > n {
        return Err(Failure::Config(format!("need n >= 3 and 1 <= k <= n, got n = {n}, k = {k}")));
    }
    let geometry = cfg.text("geometry", "metric-witness");
    let field = cfg.text("field", "one");
    let levels = cfg.floats("levels", &[0.05, 0.025, 0.0125]);
    if levels.is_empty() || levels.iter().any(|&h| !(h > 0.0)) {
        return Err(Failure::Config("`levels` must be positive spacings".into()));
    }
    let half = cfg.positive("half_width", 0.3)?;
    let inner = cfg.positive("inner", 0.1)?;
    let v = |x: &[f64]| match field.as_str() {
        "wave" => 1.0 + 0.3 * (2.0 * x[0] + x[1 % n]).sin() + 0.2 * x[2 % n] * x[2 % n],
        _ => 1.0,
    };
    let mut rows: Vec<DefectLevel> = Vec::new();
    let mut csv = String::from("h,nodes,linf_inner,linf,l2,ratio\n");
    for (i, &h) in levels.iter().enumerate() {
        let b = background(cfg, ctx.seed, &geometry, n, h, half)?;
        let f = ConformalFactor::from_fn(b.grid.clone(), Gauge::V, v)?;
        let d = variational_defect(&f, &b.bg, &b.metric, k)?;
        let linf_inner = if b.grid.topology == Topology::Periodic { d.linf } else { d.linf_within(&b.grid, &vec![0.0; n], inner) };
        let ratio = rows.last().map(|p| p.linf_inner / linf_inner);
        let _ = writeln!(csv, "{h:e},{},{linf_inner:e},{:e},{:e},{}", b.grid.extents[0], d.linf, d.l2, ratio.map(|r| format!("{r:e}")).unwrap_or_default());
        if i == 0 {
            ctx.write("defect_field.csv", &field_csv(&b.grid, &d.defect, "defect"))?;
        }
        println!("h = {h:e}: defect sup on inner box {linf_inner:e}{}", ratio.map(|r| format!(", ratio {r:.3}")).unwrap_or_default());
        rows.push(DefectLevel { h, nodes: b.grid.extents[0], linf_inner, linf: d.linf, l2: d.l2, ratio });
    }
    let path = ctx.write("defect.csv", &csv)?;
    ctx.write_json("variational.json", &json!({ "n": n, "k": k, "geometry": geometry, "field": field, "half_width": half, "inner": inner, "seed": ctx.seed, "levels": rows }))?;
    println!("wrote {}", display(&path));
    Ok(EXIT_OK)
}

pub fn counterexample(ctx: &Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let ladder = cfg.floats("eps_ladder", &[1e-1, 1e-2, 1e-3, 1e-4]);
    let x2 = cfg.floats("x2_samples", &[-0.5, 0.0, 0.5]);
    let (b, c0) = (cfg.f64("b", 1.0), cfg.f64("c0", 0.0));
    let span = cfg.positive("span", 1.0)?;
    let r = hessian_blowup_witness(&ladder, b, c0, span, &x2, OdeTolerance::default()).map_err(bad_param)?;
    let mut csv = String::from("eps,max_abs_u11,residual,x_lo,x_hi,truncated\n");
    for row in &r.rows {
        let _ = writeln!(csv, "{:e},{:e},{:e},{:e},{:e},{}", row.eps, row.max_abs_u11, row.residual, row.interval.0, row.interval.1, row.truncated);
        println!("eps = {:e}: max |u11| = {:e}, residual {:e}", row.eps, row.max_abs_u11, row.residual);
    }
    let psi_residual = (0..=1000).map(|i| psi_closed_form(0.9 * i as f64 / 1000.0).1.abs()).fold(0.0, f64::max);
    let path = ctx.write("blowup.csv", &csv)?;
    ctx.write_json("counterexample.json", &json!({ "report": r, "psi_max_residual": psi_residual }))?;
    println!("monotone growth: {}; wrote {}", r.monotone, display(&path));
    Ok(EXIT_OK)
}

fn value(r: kyamabe::Result<f64>) -> Value {
    match r {
        Ok(x) => json!(x),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn functional(ctx: &Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let (n, k) = cfg.dims(4, 2, 1)?;
    let eps = cfg.eps(n, 0.0)?;
    let p = (n as f64 + 2.0) / (n as f64 - 2.0) - eps;
    let geometry = cfg.text("geometry", "sphere-chart");
    let factor = cfg.text("factor", "constant");
    let nodes = cfg.usize("nodes", 17)?;
    if nodes < 5 {
        return Err(Failure::Config("`nodes` must be at least 5".into()));
    }
    let half = cfg.positive("half_width", 1.0)?;
    let h = if geometry == "flat-periodic" { cfg.positive("length", std::f64::consts::TAU)? / nodes as f64 } else { 2.0 * half / (nodes - 1) as f64 };
    let b = background(cfg, ctx.seed, &geometry, n, h, half)?;
    let amp = cfg.f64("amplitude", 0.1);
    let be = cfg.positive("bubble_eps", 1.0)?;
    let g = &b.grid;
    let centre: Vec<f64> = (0..n).map(|a| g.origin[a] + 0.5 * (g.extents[a] - 1) as f64 * g.spacing[a]).collect();
    let width: Vec<f64> = (0..n).map(|a| g.extents[a] as f64 * g.spacing[a]).collect();
    let f = ConformalFactor::from_fn(g.clone(), Gauge::V, |x| match factor.as_str() {
        "bubble" => bubble(n, be, x),
        "bump" => 1.0 + amp * (0..n).map(|a| (std::f64::consts::TAU * (x[a] - centre[a]) / width[a]).cos()).product::<f64>(),
        _ => 1.0,
    })?;
    let q = QuadratureContext::new(&b.metric, &b.bg)?;
    let (metric, bg) = (&b.metric, &b.bg);
    let adm = admissibility(&f, bg, metric, k, 0.0)?;
    let e = if 2 * k == n { value(functional_e_half(&f, bg, metric, &q, cfg.usize("quad_order", k + 1)?)) } else { Value::Null };
    let sup = match sup_over_scaling(&f, bg, metric, k, p, &q) {
        Ok(s) => serde_json::to_value(s).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let out = json!({
        "n": n, "k": k, "eps": eps, "p": p, "geometry": geometry, "factor": factor, "nodes": nodes,
        "admissible": adm.admissible,
        "min_sigma": adm.min_sigma,
        "F_k": value(functional_fk(&f, bg, metric, k, &q)),
        "volume": value(functional_volume(&f, &q)),
        "Q_k": value(functional_qk(&f, bg, metric, k, &q)),
        "J_p": value(functional_jp(&f, bg, metric, k, p, &q)),
        "E": e,
        "I": value(reconstruct_functional(&f, bg, metric, k, cfg.usize("quad_order", k + 1)?)),
        "sup_over_scaling": sup,
        "sobolev_quotient": value(sobolev_quotient(&f, bg, metric, k, &q)),
    });
    for key in ["admissible", "F_k", "volume", "Q_k", "J_p", "E", "I", "sup_over_scaling", "sobolev_quotient"] {
        println!("{key:<17} {}", out[key]);
    }
    ctx.write_json("functional.json", &out)?;
    Ok(EXIT_OK)
}
