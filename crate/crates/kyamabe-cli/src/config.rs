//! Flat `key = value` experiment files with a typed schema.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma separated.
//! Unknown keys, duplicates and ill-typed values are rejected.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Text,
    Choice(&'static [&'static str]),
    Floats,
    Texts,
}

pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

const GEOMETRIES: &[&str] = &["flat-periodic", "flat-chart", "sphere-chart", "sphere-radial", "metric-witness", "metric-random"];

pub const SCHEMA: &[Key] = &[
    Key { name: "n", kind: Kind::Int, help: "dimension" },
    Key { name: "k", kind: Kind::Int, help: "curvature order" },
    Key { name: "eps", kind: Kind::Float, help: "subcriticality; exclusive with p" },
    Key { name: "p", kind: Kind::Float, help: "power (n+2)/(n-2) - eps; exclusive with eps" },
    Key { name: "geometry", kind: Kind::Choice(GEOMETRIES), help: "background preset" },
    Key { name: "nodes", kind: Kind::Int, help: "nodes per axis (radial: polar nodes)" },
    Key { name: "half_width", kind: Kind::Float, help: "chart half width" },
    Key { name: "length", kind: Kind::Float, help: "periodic box length" },
    Key { name: "preset", kind: Kind::Choice(&["sphere-perturbed", "tiny-constant", "huge-constant"]), help: "flow initial data" },
    Key { name: "factor", kind: Kind::Choice(&["constant", "bubble", "bump"]), help: "conformal factor for functional" },
    Key { name: "field", kind: Kind::Choice(&["one", "wave"]), help: "conformal factor for variational" },
    Key { name: "amplitude", kind: Kind::Float, help: "perturbation amplitude" },
    Key { name: "bubble_eps", kind: Kind::Float, help: "bubble concentration" },
    Key { name: "shoot", kind: Kind::Bool, help: "bisect a uniform shift before the flow run" },
    Key { name: "shoot_lo", kind: Kind::Float, help: "shooting bracket, low end" },
    Key { name: "shoot_hi", kind: Kind::Float, help: "shooting bracket, high end" },
    Key { name: "shoot_iters", kind: Kind::Int, help: "shooting iteration cap" },
    Key { name: "shoot_margin", kind: Kind::Float, help: "extinction/blow-up distance during shooting" },
    Key { name: "max_t", kind: Kind::Float, help: "flow time cap" },
    Key { name: "max_steps", kind: Kind::Int, help: "total accepted step cap" },
    Key { name: "rhs_tol", kind: Kind::Float, help: "convergence threshold on |w_t|" },
    Key { name: "extinct_margin", kind: Kind::Float, help: "extinction once min w exceeds the constant solution by this" },
    Key { name: "blowup_margin", kind: Kind::Float, help: "blow-up once min w falls this far below the constant solution" },
    Key { name: "dt", kind: Kind::Float, help: "initial time step" },
    Key { name: "dt_max", kind: Kind::Float, help: "time step cap" },
    Key { name: "tau", kind: Kind::Float, help: "admissibility margin" },
    Key { name: "checkpoint_every", kind: Kind::Int, help: "checkpoint period in steps, 0 disables" },
    Key { name: "resume", kind: Kind::Text, help: "checkpoint to resume from" },
    Key { name: "suite", kind: Kind::Texts, help: "verify suites" },
    Key { name: "seed", kind: Kind::Int, help: "seed for randomized suites and metrics" },
    Key { name: "threads", kind: Kind::Int, help: "worker cap" },
    Key { name: "out", kind: Kind::Text, help: "output directory" },
    Key { name: "levels", kind: Kind::Floats, help: "grid spacings for refinement studies" },
    Key { name: "inner", kind: Kind::Float, help: "half width of the norm box" },
    Key { name: "b", kind: Kind::Float, help: "x2 curvature of the blow-up witness" },
    Key { name: "c0", kind: Kind::Float, help: "constant in the blow-up ODE" },
    Key { name: "span", kind: Kind::Float, help: "x1 half interval of the blow-up ODE" },
    Key { name: "eps_ladder", kind: Kind::Floats, help: "decreasing eps values" },
    Key { name: "x2_samples", kind: Kind::Floats, help: "x2 nodes for the residual" },
    Key { name: "quad_order", kind: Kind::Int, help: "Gauss-Legendre order in t" },
];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Floats(Vec<f64>),
    Texts(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(ConfigError(msg.into()))
}

fn lookup(name: &str) -> Res<&'static Key> {
    SCHEMA.iter().find(|k| k.name == name).ok_or_else(|| {
        let known: Vec<String> = SCHEMA.iter().map(|k| format!("  {:<17}{}", k.name, k.help)).collect();
        ConfigError(format!("unknown key `{name}`; known keys:\n{}", known.join("\n")))
    })
}

fn parse_value(key: &Key, raw: &str) -> Res<Value> {
    let raw = raw.trim();
    let bad = || ConfigError(format!("`{}` expects {:?}, got `{raw}`", key.name, key.kind));
    let float = |s: &str| s.trim().parse::<f64>().ok().filter(|x| x.is_finite());
    Ok(match key.kind {
        Kind::Int => Value::Int(raw.parse().map_err(|_| bad())?),
        Kind::Float => Value::Float(float(raw).ok_or_else(bad)?),
        Kind::Bool => Value::Bool(match raw {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            _ => return Err(bad()),
        }),
        Kind::Text => {
            if raw.is_empty() {
                return Err(bad());
            }
            Value::Text(raw.to_string())
        }
        Kind::Choice(opts) => {
            if !opts.contains(&raw) {
                return err(format!("`{}` must be one of {}, got `{raw}`", key.name, opts.join(", ")));
            }
            Value::Text(raw.to_string())
        }
        Kind::Floats => Value::Floats(raw.split(',').map(|s| float(s).ok_or_else(bad)).collect::<Res<_>>()?),
        Kind::Texts => Value::Texts(raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, Value>,
}

impl Config {
    pub fn parse(text: &str) -> Res<Self> {
        let mut c = Config::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, raw)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", no + 1));
            };
            let key = lookup(key.trim()).map_err(|e| ConfigError(format!("line {}: {}", no + 1, e.0)))?;
            if c.values.contains_key(key.name) {
                return err(format!("line {}: duplicate key `{}`", no + 1, key.name));
            }
            let v = parse_value(key, raw).map_err(|e| ConfigError(format!("line {}: {}", no + 1, e.0)))?;
            c.values.insert(key.name, v);
        }
        Ok(c)
    }

    /// Overrides one key from a `key=value` string.
    pub fn set_raw(&mut self, assignment: &str) -> Res<()> {
        let Some((key, raw)) = assignment.split_once('=') else {
            return err(format!("expected key=value, got `{assignment}`"));
        };
        let key = lookup(key.trim())?;
        let v = parse_value(key, raw)?;
        self.values.insert(key.name, v);
        Ok(())
    }

    pub fn set(&mut self, name: &str, v: Value) -> Res<()> {
        let key = lookup(name)?;
        self.values.insert(key.name, v);
        Ok(())
    }

    pub fn has(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    fn get(&self, name: &str) -> Option<&Value> {
        debug_assert!(lookup(name).is_ok(), "key {name} missing from the schema");
        self.values.get(name)
    }

    pub fn usize(&self, name: &str, default: usize) -> Res<usize> {
        match self.get(name) {
            None => Ok(default),
            Some(Value::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => err(format!("`{name}` must be a non-negative integer, got {v:?}")),
        }
    }

    pub fn u64(&self, name: &str, default: u64) -> Res<u64> {
        self.usize(name, default as usize).map(|x| x as u64)
    }

    pub fn f64(&self, name: &str, default: f64) -> f64 {
        match self.get(name) {
            Some(Value::Float(x)) => *x,
            _ => default,
        }
    }

    pub fn positive(&self, name: &str, default: f64) -> Res<f64> {
        let x = self.f64(name, default);
        if x > 0.0 {
            Ok(x)
        } else {
            err(format!("`{name}` must be positive, got {x}"))
        }
    }

    pub fn bool(&self, name: &str, default: bool) -> bool {
        match self.get(name) {
            Some(Value::Bool(b)) => *b,
            _ => default,
        }
    }

    pub fn text(&self, name: &str, default: &str) -> String {
        match self.get(name) {
            Some(Value::Text(s)) => s.clone(),
            _ => default.to_string(),
        }
    }

    pub fn opt_text(&self, name: &str) -> Option<String> {
        match self.get(name) {
            Some(Value::Text(s)) => Some(s.clone()),
            _ => None,
        }
    }

    pub fn floats(&self, name: &str, default: &[f64]) -> Vec<f64> {
        match self.get(name) {
            Some(Value::Floats(v)) => v.clone(),
            _ => default.to_vec(),
        }
    }

    pub fn texts(&self, name: &str) -> Vec<String> {
        match self.get(name) {
            Some(Value::Texts(v)) => v.clone(),
            _ => Vec::new(),
        }
    }

    /// ε from either `eps` or `p`, defaulting to `default`.
    pub fn eps(&self, n: usize, default: f64) -> Res<f64> {
        let crit = (n as f64 + 2.0) / (n as f64 - 2.0);
        match (self.get("eps"), self.get("p")) {
            (Some(_), Some(_)) => err("set at most one of `eps` and `p`"),
            (_, Some(Value::Float(p))) => Ok(crit - p),
            (Some(Value::Float(e)), _) => Ok(*e),
            _ => Ok(default),
        }
    }

    /// Resolved (n, k) with `kmin <= k <= n/2`.
    pub fn dims(&self, n: usize, k: usize, kmin: usize) -> Res<(usize, usize)> {
        let n = self.usize("n", n)?;
        let k = self.usize("k", k)?;
        if n < 3 {
            return err(format!("`n` must be at least 3, got {n}"));
        }
        if k < kmin || 2 * k > n {
            return err(format!("need {kmin} <= k <= n/2, got n = {n}, k = {k}"));
        }
        Ok((n, k))
    }
}
