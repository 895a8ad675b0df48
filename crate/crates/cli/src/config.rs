use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fracpme::diffusion::BoundaryCondition;
use fracpme::volterra::{Method, StartRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Front,
    Order,
    M0,
    Fd,
    Bench,
    Profile,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Front => "front",
            Command::Order => "order",
            Command::M0 => "m0",
            Command::Fd => "fd",
            Command::Bench => "bench",
            Command::Profile => "profile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    /// Self-similar porous-medium kernel for the chosen boundary condition.
    #[default]
    Diffusion,
    /// `(z-s)^γ`, whose solution is a known constant.
    Power,
    /// `√(z-s)/(1+sin²s)`.
    SqrtSine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BcArg {
    Dirichlet,
    Neumann,
    Robin,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Trapezoid,
    Rectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartArg {
    Limit,
    FiniteStep,
}

/// Finite-difference settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdSettings {
    pub dt: f64,
    pub dx: f64,
    pub t_final: f64,
    pub x_max: f64,
    pub theta: f64,
    pub zero_threshold: f64,
    /// Export every k-th time level; 0 exports only the final one.
    pub snapshot_every: usize,
}

impl Default for FdSettings {
    fn default() -> Self {
        FdSettings {
            dt: 1e-3,
            dx: 5e-3,
            t_final: 1.0,
            x_max: 3.0,
            theta: 1.0,
            zero_threshold: 1e-10,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub tolerances: Vec<f64>,
    pub budget_seconds: f64,
    pub dx_over_dt: f64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            tolerances: vec![2e-2, 1e-2, 5e-3, 1e-7, 1e-8, 1e-9],
            budget_seconds: 60.0,
            dx_over_dt: 5.0,
        }
    }
}

/// Everything needed to reproduce one run. Saved configurations carry the
/// timestamp they were stamped with, so replaying one reproduces its output
/// byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub m: Vec<f64>,
    #[serde(default)]
    pub bc: Vec<BoundaryCondition>,
    #[serde(default)]
    pub n_steps: usize,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub start: StartRule,
    #[serde(default)]
    pub kernel: KernelChoice,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default)]
    pub points: usize,
    #[serde(default)]
    pub fd: FdSettings,
    #[serde(default)]
    pub bench: BenchSettings,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub timestamp: Option<String>,
}

fn default_method() -> Method {
    Method::Trapezoid
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let (alpha, m, n_steps) = match command {
            Command::Order => (vec![0.3, 0.5, 0.7], vec![1.0, 3.0, 7.0], 100),
            Command::M0 => (vec![0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.01], vec![], 0),
            Command::Fd | Command::Bench => (vec![0.999], vec![2.0], 0),
            _ => (vec![0.5], vec![2.0], 100),
        };
        RunConfig {
            command,
            alpha,
            m,
            bc: vec![BoundaryCondition::Dirichlet],
            n_steps,
            method: Method::Trapezoid,
            start: StartRule::default(),
            kernel: KernelChoice::default(),
            gamma: vec![0.5],
            t: vec![1.0],
            points: 101,
            fd: FdSettings::default(),
            bench: BenchSettings::default(),
            output_path: None,
            format: Format::Csv,
            timestamp: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let alpha_max = if self.command == Command::M0 { 0.99 } else { 1.0 };
        let uses_alpha = !(matches!(self.command, Command::Solve | Command::Order) && self.kernel != KernelChoice::Diffusion);
        if uses_alpha {
            if self.alpha.is_empty() {
                return bad("at least one alpha is required".into());
            }
            if let Some(a) = self.alpha.iter().find(|&&a| !(a > 0.0 && a <= alpha_max)) {
                return bad(format!("alpha = {a} outside (0, {alpha_max}]"));
            }
        }
        if self.command != Command::M0 {
            if self.m.is_empty() {
                return bad("at least one m is required".into());
            }
            if let Some(m) = self.m.iter().find(|&&m| !(m > 0.0) || !m.is_finite()) {
                return bad(format!("m = {m} must be positive"));
            }
        }
        if self.bc.is_empty() {
            return bad("at least one boundary condition is required".into());
        }
        if matches!(self.command, Command::Solve | Command::Front | Command::Profile) && self.n_steps < 4 {
            return bad(format!("n_steps = {} must be at least 4", self.n_steps));
        }
        if self.command == Command::Order && (self.n_steps < 10 || self.n_steps % 2 != 0) {
            return bad(format!("order base n_steps = {} must be even and at least 10", self.n_steps));
        }
        if self.kernel == KernelChoice::Power {
            if self.gamma.is_empty() {
                return bad("power kernel needs at least one gamma".into());
            }
            if let Some(g) = self.gamma.iter().find(|&&g| !(g >= 0.0) || !g.is_finite()) {
                return bad(format!("gamma = {g} must be nonnegative"));
            }
        }
        if self.command == Command::Profile {
            if self.points < 2 {
                return bad("profile needs at least 2 points".into());
            }
            if self.t.is_empty() || self.t.iter().any(|&t| !(t > 0.0)) {
                return bad("profile times must be positive".into());
            }
        }
        if self.command == Command::Bench && self.bench.tolerances.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("bench tolerances must be strictly decreasing".into());
        }
        Ok(())
    }
}

/// Flags shared by every subcommand; each overrides the loaded or default configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Fractional order(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Nonlinearity exponent(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub bc: Option<BcArg>,
    /// Grid steps (base N for `order`).
    #[arg(long = "n")]
    pub n_steps: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Where the first grid value is evaluated.
    #[arg(long, value_enum)]
    pub start: Option<StartArg>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelChoice>,
    /// Power-kernel exponent(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// ISO 8601 timestamp for the output header instead of the current time.
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProfileArgs {
    /// Time(s) at which to sample u(x, t), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    /// Samples per profile.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FdArgs {
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub dx: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Implicit weight; 1 is fully implicit.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub zero_threshold: Option<f64>,
    /// Export every k-th time level; 0 exports only the final one.
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BenchArgs {
    /// Strictly decreasing front tolerances, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tolerances: Option<Vec<f64>>,
    /// Wall-clock budget per method, seconds.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub dx_over_dt: Option<f64>,
}

impl CommonArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.alpha {
            cfg.alpha = v.clone();
        }
        if let Some(v) = &self.m {
            cfg.m = v.clone();
        }
        if let Some(bc) = self.bc {
            cfg.bc = match bc {
                BcArg::Dirichlet => vec![BoundaryCondition::Dirichlet],
                BcArg::Neumann => vec![BoundaryCondition::Neumann],
                BcArg::Robin => vec![BoundaryCondition::Robin],
                BcArg::All => BoundaryCondition::ALL.to_vec(),
            };
        }
        if let Some(n) = self.n_steps {
            cfg.n_steps = n;
        }
        if let Some(method) = self.method {
            cfg.method = match method {
                MethodArg::Trapezoid => Method::Trapezoid,
                MethodArg::Rectangle => Method::Rectangle,
            };
        }
        if let Some(start) = self.start {
            cfg.start = match start {
                StartArg::Limit => StartRule::Limit,
                StartArg::FiniteStep => StartRule::FiniteStep,
            };
        }
        if let Some(k) = self.kernel {
            cfg.kernel = k;
        }
        if let Some(g) = &self.gamma {
            cfg.gamma = g.clone();
        }
        if let Some(o) = &self.output {
            cfg.output_path = Some(o.clone());
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        if let Some(t) = &self.timestamp {
            cfg.timestamp = Some(t.clone());
        }
    }
}

impl ProfileArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = &self.t {
            cfg.t = t.clone();
        }
        if let Some(p) = self.points {
            cfg.points = p;
        }
    }
}

impl FdArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let fd = &mut cfg.fd;
        let pairs = [
            (self.dt, &mut fd.dt),
            (self.dx, &mut fd.dx),
            (self.t_final, &mut fd.t_final),
            (self.x_max, &mut fd.x_max),
            (self.theta, &mut fd.theta),
            (self.zero_threshold, &mut fd.zero_threshold),
        ];
        for (arg, slot) in pairs {
            if let Some(v) = arg {
                *slot = v;
            }
        }
        if let Some(k) = self.snapshot_every {
            fd.snapshot_every = k;
        }
    }
}

impl BenchArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = &self.tolerances {
            cfg.bench.tolerances = t.clone();
        }
        if let Some(b) = self.budget {
            cfg.bench.budget_seconds = b;
        }
        if let Some(r) = self.dx_over_dt {
            cfg.bench.dx_over_dt = r;
        }
    }
}
