use crate::{bad_param, display, Ctx, Failure, EXIT_EXTINCT, EXIT_OK, EXIT_STALL};
use kyamabe::flow::{
    flow_run_from, shoot, FlowDomain, FlowProblem, FlowState, GridDomain, RadialDomain, RunSummary, StepConfig, StopCriteria, Verdict,
};
use kyamabe::functionals::yamabe_constant_sphere;
use kyamabe::geometry::{schouten_from_metric, ChartGrid, MetricField};
use kyamabe::io::{checkpoint, energy_csv, restore, Container};
use kyamabe::radial::RadialGrid;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Report {
    n: usize,
    k: usize,
    eps: f64,
    p: f64,
    geometry: String,
    preset: String,
    resumed_from: Option<String>,
    /// converged, extinct, inf-blowup, timeout or stall.
    verdict: String,
    t: f64,
    steps: usize,
    rejections: usize,
    constant_solution: f64,
    shift: Option<f64>,
    shooting_trials: Vec<(f64, Verdict)>,
    final_q_k: f64,
    final_j: f64,
    sphere_y_k: Option<f64>,
    q_k_rel_diff: Option<f64>,
    summary: Option<RunSummary>,
    error: Option<String>,
}

struct Setup {
    domain: Box<dyn FlowDomain>,
    base: Vec<f64>,
    h: f64,
}

fn setup(ctx: &Ctx, problem: &FlowProblem, geometry: &str, preset: &str) -> Result<Setup, Failure> {
    let cfg = &ctx.cfg;
    let n = problem.n;
    let c = problem.sphere_constant_solution();
    let amp = cfg.f64("amplitude", 0.1);
    let offset = match preset {
        "tiny-constant" => Some(0.5),
        "huge-constant" => Some(-0.5),
        _ => None,
    };
    match geometry {
        "sphere-radial" => {
            let grid = RadialGrid::sphere(n, cfg.usize("nodes", 64)?).map_err(bad_param)?;
            let base = grid.coords().iter().map(|&th| c + offset.unwrap_or(amp * th.cos().powi(2))).collect();
            let h = grid.h;
            Ok(Setup { domain: Box::new(RadialDomain::new(grid)), base, h })
        }
        "sphere-chart" => {
            let m = cfg.usize("nodes", 9)?;
            let hw = cfg.positive("half_width", 1.0)?;
            let grid = ChartGrid::centered_cube(n, m, hw).map_err(bad_param)?;
            let metric = MetricField::round_sphere_chart(grid.clone())?;
            let bg = schouten_from_metric(&metric)?;
            let base = (0..grid.len())
                .map(|i| {
                    let r2: f64 = grid.coords(i).iter().map(|x| x * x).sum();
                    c + offset.unwrap_or(amp * (-r2).exp())
                })
                .collect();
            Ok(Setup { domain: Box::new(GridDomain::new(metric, bg)?), base, h: grid.spacing[0] })
        }
        other => Err(Failure::Config(format!("flow runs on sphere-radial or sphere-chart, not {other}"))),
    }
}

fn save(ctx: &Ctx, name: &str, c: &Container) -> Result<(), Failure> {
    ctx.write(name, &c.to_json()?).map(|_| ())
}

pub fn run(ctx: &Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let (n, k) = cfg.dims(4, 2, 2)?;
    let eps = cfg.eps(n, 0.0)?;
    let problem = FlowProblem::normalized(n, k, eps).map_err(bad_param)?;
    let geometry = cfg.text("geometry", "sphere-radial");
    let preset = cfg.text("preset", "sphere-perturbed");
    let s = setup(ctx, &problem, &geometry, &preset)?;
    let domain = s.domain.as_ref();
    let c = problem.sphere_constant_solution();

    let mut step = StepConfig::diffusive(s.h);
    step.dt = cfg.positive("dt", step.dt)?;
    step.dt_max = cfg.positive("dt_max", step.dt_max)?;
    step.tau = cfg.f64("tau", step.tau);
    let stop = StopCriteria {
        max_t: cfg.positive("max_t", 100.0)?,
        max_steps: cfg.usize("max_steps", 1_000_000)?,
        rhs_tol: cfg.positive("rhs_tol", 1e-6)?,
        extinct_level: c + cfg.positive("extinct_margin", 3.0)?,
        blowup_level: c - cfg.positive("blowup_margin", 3.0)?,
    };
    let every = cfg.usize("checkpoint_every", 0)?;

    let resume = cfg.opt_text("resume");
    let mut shift = None;
    let mut trials = Vec::new();
    let mut state = match &resume {
        Some(path) => {
            let c = Container::load(Path::new(path)).map_err(bad_param)?;
            restore(&c, domain, &problem).map_err(bad_param)?
        }
        None => {
            let mut init = s.base.clone();
            if cfg.bool("shoot", preset == "sphere-perturbed") {
                let margin = cfg.positive("shoot_margin", 1.5)?;
                let trial_stop = StopCriteria { extinct_level: c + margin, blowup_level: c - margin, ..stop };
                let (lo, hi) = (cfg.f64("shoot_lo", -0.5), cfg.f64("shoot_hi", 0.5));
                if !(lo < hi) {
                    return Err(Failure::Config("need shoot_lo < shoot_hi".into()));
                }
                let iters = cfg.usize("shoot_iters", 60)?;
                let r = shoot(domain, &problem, &s.base, lo, hi, &trial_stop, &step, iters, &mut |_, _| Ok(()))?;
                for (i, x) in init.iter_mut().enumerate() {
                    if domain.active(i) {
                        *x += r.shift;
                    }
                }
                println!("shooting: shift {:e} after {} trials ({:?})", r.shift, r.trials.len(), r.summary.verdict);
                shift = Some(r.shift);
                trials = r.trials;
            }
            FlowState::new(init, step.dt)
        }
    };

    let mut io_error = None;
    let outcome = flow_run_from(domain, &problem, &mut state, &stop, &step, &mut |st, _| {
        if every > 0 && st.steps % every == 0 {
            let name = format!("checkpoints/step_{:08}.json", st.steps);
            if let Err(e) = checkpoint(domain, &problem, st).map_err(Failure::from).and_then(|c| save(ctx, &name, &c)) {
                io_error = Some(e.to_string());
                return Err(kyamabe::Error::Format(format!("writing {name} failed")));
            }
        }
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(Failure::Io(e));
    }
    let (verdict, summary, error) = match outcome {
        Ok(sm) => (serde_json::to_value(sm.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(), Some(sm), None),
        Err(e @ kyamabe::Error::Stall { .. }) => ("stall".to_string(), None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };

    let csv = ctx.write("energy.csv", &energy_csv(&state.history))?;
    save(ctx, "final_state.json", &checkpoint(domain, &problem, &state)?)?;
    let last = *state.history.last().expect("the run records the initial energy");
    let y = yamabe_constant_sphere(n, k).ok().map(|s| s.composed);
    let report = Report {
        n,
        k,
        eps,
        p: problem.p(),
        geometry,
        preset,
        resumed_from: resume,
        verdict: verdict.clone(),
        t: state.t,
        steps: state.steps,
        rejections: state.rejections,
        constant_solution: c,
        shift,
        shooting_trials: trials,
        final_q_k: last.q_k,
        final_j: last.j,
        sphere_y_k: y,
        q_k_rel_diff: y.map(|y| (last.q_k - y).abs() / y),
        summary,
        error,
    };
    let json = ctx.write_json("flow.json", &report)?;
    println!("verdict {verdict} at t = {:e} after {} steps; Q_k = {:.9}", state.t, state.steps, last.q_k);
    println!("wrote {} and {}", display(&csv), display(&json));
    Ok(match verdict.as_str() {
        "converged" => EXIT_OK,
        "extinct" => EXIT_EXTINCT,
        _ => EXIT_STALL,
    })
}
