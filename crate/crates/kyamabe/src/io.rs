//! JSON field containers, flow checkpoints and CSV writers.
//!
//! A container holds `{n, extents, spacing, topology, components, data, meta}`
//! with node-major, row-major data. Non-finite values are stored as null.

use crate::conformal::{ConformalFactor, Gauge};
use crate::error::{Error, Result};
use crate::flow::{FlowDomain, FlowProblem, FlowState};
use crate::functionals::EnergyRecord;
use crate::geometry::{ChartGrid, MetricField, MetricKind, Topology};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

pub const FORMAT: &str = "kyamabe-container";
pub const VERSION: u32 = 1;

mod nullable {
    use super::*;

    pub fn serialize<S: Serializer>(data: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<Option<f64>> = data.iter().map(|x| x.is_finite().then_some(*x)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub extents: Vec<usize>,
    pub spacing: Vec<f64>,
    pub topology: String,
    /// Values per node.
    pub components: usize,
    #[serde(with = "nullable")]
    pub data: Vec<f64>,
    pub meta: Value,
}

fn topology_name(t: Topology) -> &'static str {
    match t {
        Topology::Periodic => "periodic",
        Topology::Bounded => "bounded",
    }
}

fn parse_topology(s: &str) -> Result<Topology> {
    match s {
        "periodic" => Ok(Topology::Periodic),
        "bounded" => Ok(Topology::Bounded),
        other => Err(Error::Format(format!("unknown chart topology '{other}'"))),
    }
}

fn meta_f64s(meta: &Value, key: &str) -> Result<Vec<f64>> {
    serde_json::from_value(meta.get(key).cloned().ok_or_else(|| Error::Format(format!("missing meta.{key}")))?)
        .map_err(|e| Error::Format(format!("meta.{key}: {e}")))
}

impl Container {
    pub fn new(n: usize, extents: Vec<usize>, spacing: Vec<f64>, topology: &str, components: usize, data: Vec<f64>, meta: Value) -> Result<Self> {
        let nodes: usize = extents.iter().product();
        if data.len() != nodes * components {
            return Err(Error::Format(format!("container holds {} values, shape needs {}", data.len(), nodes * components)));
        }
        Ok(Self { format: FORMAT.into(), version: VERSION, n, extents, spacing, topology: topology.into(), components, data, meta })
    }

    fn chart(grid: &ChartGrid, components: usize, data: Vec<f64>, mut meta: Value) -> Result<Self> {
        meta["origin"] = json!(grid.origin);
        Self::new(grid.n, grid.extents.clone(), grid.spacing.clone(), topology_name(grid.topology), components, data, meta)
    }

    pub fn grid(&self) -> Result<ChartGrid> {
        ChartGrid::new(self.extents.clone(), self.spacing.clone(), meta_f64s(&self.meta, "origin")?, parse_topology(&self.topology)?)
    }

    pub fn from_metric(m: &MetricField) -> Result<Self> {
        let n = m.n();
        let kind = match m.kind {
            MetricKind::Flat => "flat",
            MetricKind::RoundSphereConformal => "round-sphere-chart",
            MetricKind::Explicit => "explicit",
        };
        let data: Vec<f64> = (0..m.grid.len()).flat_map(|i| m.g_at(i)).collect();
        Self::chart(&m.grid, n * n, data, json!({ "kind": "metric", "metric": kind }))
    }

    pub fn to_metric(&self) -> Result<MetricField> {
        self.expect_kind("metric")?;
        let grid = self.grid()?;
        match self.meta.get("metric").and_then(Value::as_str) {
            Some("flat") => Ok(MetricField::flat(grid)),
            Some("round-sphere-chart") => MetricField::round_sphere_chart(grid),
            Some("explicit") => MetricField::explicit_from_data(grid, self.data.clone()),
            other => Err(Error::Format(format!("unknown metric kind {other:?}"))),
        }
    }

    pub fn from_factor(f: &ConformalFactor) -> Result<Self> {
        let gauge = serde_json::to_value(f.gauge).map_err(|e| Error::Format(e.to_string()))?;
        Self::chart(&f.grid, 1, f.data.clone(), json!({ "kind": "factor", "gauge": gauge }))
    }

    pub fn to_factor(&self) -> Result<ConformalFactor> {
        self.expect_kind("factor")?;
        let gauge: Gauge = serde_json::from_value(self.meta["gauge"].clone()).map_err(|e| Error::Format(e.to_string()))?;
        ConformalFactor::new(self.grid()?, gauge, self.data.clone())
    }

    /// A scalar field on a chart, e.g. a defect or curvature field.
    pub fn from_scalar_field(grid: &ChartGrid, values: &[f64], name: &str) -> Result<Self> {
        Self::chart(grid, 1, values.to_vec(), json!({ "kind": "scalar", "name": name }))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Format(format!("not a {FORMAT} v{VERSION} file")));
        }
        match self.meta.get("kind").and_then(Value::as_str) {
            Some(k) if k == kind => Ok(()),
            other => Err(Error::Format(format!("expected a {kind} container, found {other:?}"))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// A flow checkpoint: the state vector as data, everything else in meta.
pub fn checkpoint(domain: &dyn FlowDomain, problem: &FlowProblem, state: &FlowState) -> Result<Container> {
    let (extents, spacing, topology) = domain.shape();
    let meta = json!({
        "kind": "flow-state",
        "problem": { "n": problem.n, "k": problem.k, "eps": problem.eps, "kappa": problem.kappa, "rescale": problem.rescale },
        "t": state.t,
        "dt": state.dt,
        "steps": state.steps,
        "rejections": state.rejections,
        "streak": state.streak,
        "history": state.history,
    });
    Container::new(domain.n(), extents, spacing, &topology, 1, state.w.clone(), meta)
}

/// Restores a checkpoint, checking that it was written for this domain and problem.
pub fn restore(c: &Container, domain: &dyn FlowDomain, problem: &FlowProblem) -> Result<FlowState> {
    c.expect_kind("flow-state")?;
    let (extents, spacing, topology) = domain.shape();
    if c.extents != extents || c.spacing != spacing || c.topology != topology || c.n != domain.n() {
        return Err(Error::Format("checkpoint shape does not match the flow domain".into()));
    }
    let p = &c.meta["problem"];
    let same = p["n"].as_u64() == Some(problem.n as u64)
        && p["k"].as_u64() == Some(problem.k as u64)
        && p["eps"].as_f64() == Some(problem.eps)
        && p["kappa"].as_f64() == Some(problem.kappa)
        && p["rescale"].as_f64() == Some(problem.rescale);
    if !same {
        return Err(Error::Format("checkpoint was written for a different flow problem".into()));
    }
    let field = |k: &str| c.meta.get(k).cloned().ok_or_else(|| Error::Format(format!("missing meta.{k}")));
    let parse = |k: &str| -> Result<Value> { field(k) };
    let num = |k: &str| parse(k)?.as_f64().ok_or_else(|| Error::Format(format!("meta.{k} is not a number")));
    let int = |k: &str| parse(k)?.as_u64().map(|x| x as usize).ok_or_else(|| Error::Format(format!("meta.{k} is not an integer")));
    let history: Vec<EnergyRecord> = serde_json::from_value(field("history")?).map_err(|e| Error::Format(e.to_string()))?;
    if c.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format("checkpoint state has non-finite entries".into()));
    }
    Ok(FlowState {
        w: c.data.clone(),
        t: num("t")?,
        dt: num("dt")?,
        steps: int("steps")?,
        rejections: int("rejections")?,
        streak: int("streak")?,
        history,
    })
}

/// Energy history as CSV with the standard header.
pub fn energy_csv(records: &[EnergyRecord]) -> String {
    let mut s = String::from(EnergyRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Rows `index,x_0,...,x_{n-1},value`.
pub fn field_csv(grid: &ChartGrid, values: &[f64], name: &str) -> String {
    let mut s = String::from("index");
    for a in 0..grid.n {
        let _ = write!(s, ",x{a}");
    }
    let _ = writeln!(s, ",{name}");
    for (i, v) in values.iter().enumerate() {
        let _ = write!(s, "{i}");
        for x in grid.coords(i) {
            let _ = write!(s, ",{x:e}");
        }
        let _ = writeln!(s, ",{v:e}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{flow_step, RadialDomain, StepConfig};
    use crate::geometry::diagonal_witness_metric;
    use crate::radial::RadialGrid;

    #[test]
    fn metric_and_factor_round_trip() {
        let grid = ChartGrid::centered_cube(3, 5, 0.3).unwrap();
        let m = MetricField::explicit(grid.clone(), diagonal_witness_metric).unwrap();
        let c = Container::from_metric(&m).unwrap();
        let back = Container::from_json(&c.to_json().unwrap()).unwrap().to_metric().unwrap();
        assert_eq!(back, m);
        let s = MetricField::round_sphere_chart(grid.clone()).unwrap();
        assert_eq!(Container::from_metric(&s).unwrap().to_metric().unwrap().kind, MetricKind::RoundSphereConformal);
        let f = ConformalFactor::from_fn(grid.clone(), Gauge::W, |x| 0.1 * x[0] + 1.0 / 3.0).unwrap();
        let back = Container::from_json(&Container::from_factor(&f).unwrap().to_json().unwrap()).unwrap().to_factor().unwrap();
        assert_eq!(back, f);
        assert!(Container::from_factor(&f).unwrap().to_metric().is_err());
    }

    #[test]
    fn nan_survives_as_null() {
        let grid = ChartGrid::centered_cube(2, 5, 1.0).unwrap();
        let mut v = vec![1.0; 25];
        v[4] = f64::NAN;
        let c = Container::from_scalar_field(&grid, &v, "defect").unwrap();
        let j = c.to_json().unwrap();
        assert!(j.contains("null"));
        assert!(Container::from_json(&j).unwrap().data[4].is_nan());
    }

    #[test]
    fn checkpoint_restores_exactly() {
        let d = RadialDomain::new(RadialGrid::sphere(4, 16).unwrap());
        let p = FlowProblem::normalized(4, 2, 0.0).unwrap();
        let c0 = p.sphere_constant_solution();
        let w: Vec<f64> = d.grid.coords().iter().map(|t| c0 + 0.1 * t.cos().powi(2)).collect();
        let mut st = FlowState::new(w, 1e-3);
        for _ in 0..7 {
            flow_step(&d, &p, &mut st, &StepConfig::default()).unwrap();
        }
        let j = checkpoint(&d, &p, &st).unwrap().to_json().unwrap();
        let back = restore(&Container::from_json(&j).unwrap(), &d, &p).unwrap();
        assert_eq!(back, st);
        let other = FlowProblem::normalized(4, 2, 0.1).unwrap();
        assert!(restore(&Container::from_json(&j).unwrap(), &d, &other).is_err());
    }

    #[test]
    fn csv_shapes() {
        let r = EnergyRecord { t: 0.5, j: -1.0, f_k: 2.0, volume: 3.0, min_sigma_k: 0.25, q_k: 1.0 / 3.0 };
        let s = energy_csv(&[r]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,J,F_k,volume,min_sigma_k,Q_k");
        let q: f64 = lines[1].split(',').nth(5).unwrap().parse().unwrap();
        assert_eq!(q, 1.0 / 3.0);
        let grid = ChartGrid::centered_cube(2, 5, 1.0).unwrap();
        let f = field_csv(&grid, &[0.0; 25], "v");
        assert_eq!(f.lines().next().unwrap(), "index,x0,x1,v");
        assert_eq!(f.lines().count(), 26);
    }
}
