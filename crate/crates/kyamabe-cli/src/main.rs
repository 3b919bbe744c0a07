//! `kyamabe`: reproducible experiments over the k-Yamabe library.
//!
//! Exit codes: 0 ok, 1 runtime error, 2 verification failure, 3 flow stall
//! (or no convergence), 4 extinction, 5 config error.

mod config;
mod experiments;
mod flow;
mod verify;

use clap::{Parser, Subcommand};
use config::{Config, ConfigError, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_VERIFY: u8 = 2;
pub const EXIT_STALL: u8 = 3;
pub const EXIT_EXTINCT: u8 = 4;
pub const EXIT_CONFIG: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "kyamabe", version, about = "Numerical experiments for the k-Yamabe problem")]
struct Cli {
    /// Flat key = value experiment file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker cap; all computation currently runs on one thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a config key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the seeded property suites; writes verify.xml and verify.json.
    Verify {
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
    },
    /// Run the curvature flow; writes energy.csv, checkpoints and flow.json.
    Flow {
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
        #[arg(long, value_name = "STEPS")]
        checkpoint_every: Option<usize>,
    },
    /// Sphere constants C_{n,k} and Y_k(S^n) computed two ways.
    Constants {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Variational defect under grid refinement.
    Variational,
    /// Hessian blow-up table for the two-dimensional counterexample.
    Counterexample,
    /// Functionals of a preset conformal factor.
    Functional,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Lib(kyamabe::Error),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Lib(kyamabe::Error::Stall { .. }) => EXIT_STALL,
            Failure::Lib(_) | Failure::Io(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<kyamabe::Error> for Failure {
    fn from(e: kyamabe::Error) -> Self {
        Failure::Lib(e)
    }
}

/// Library errors caused by user parameters count as config errors.
pub fn bad_param(e: kyamabe::Error) -> Failure {
    Failure::Config(e.to_string())
}

pub struct Ctx {
    pub cfg: Config,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl Ctx {
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        }
        fs::write(&path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Result<PathBuf, Failure> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    for s in &cli.set {
        cfg.set_raw(s)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", Value::Int(s as i64))?;
    }
    if let Some(t) = cli.threads {
        cfg.set("threads", Value::Int(t as i64))?;
    }
    if let Some(o) = &cli.out {
        cfg.set("out", Value::Text(o.display().to_string()))?;
    }
    match &cli.cmd {
        Cmd::Verify { suite } if !suite.is_empty() => cfg.set("suite", Value::Texts(suite.clone()))?,
        Cmd::Flow { resume, checkpoint_every } => {
            if let Some(r) = resume {
                cfg.set("resume", Value::Text(r.display().to_string()))?;
            }
            if let Some(c) = checkpoint_every {
                cfg.set("checkpoint_every", Value::Int(*c as i64))?;
            }
        }
        Cmd::Constants { n, k } => {
            if let Some(n) = n {
                cfg.set("n", Value::Int(*n as i64))?;
            }
            if let Some(k) = k {
                cfg.set("k", Value::Int(*k as i64))?;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let cfg = load_config(&cli)?;
    let threads = cfg.usize("threads", 1)?;
    if threads == 0 {
        return Err(Failure::Config("`threads` must be at least 1".into()));
    }
    let ctx = Ctx { seed: cfg.u64("seed", 0)?, out: PathBuf::from(cfg.text("out", "out")), threads, cfg };
    match cli.cmd {
        Cmd::Verify { .. } => verify::run(&ctx),
        Cmd::Flow { .. } => flow::run(&ctx),
        Cmd::Constants { .. } => experiments::constants(&ctx),
        Cmd::Variational => experiments::variational(&ctx),
        Cmd::Counterexample => experiments::counterexample(&ctx),
        Cmd::Functional => experiments::functional(&ctx),
    }
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("kyamabe: {f}");
            ExitCode::from(f.code())
        }
    }
}
