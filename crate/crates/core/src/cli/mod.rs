//! The `kornlab` command-line front end.
//!
//! Every subcommand reads an optional flat JSON config (`--config`), lets
//! flags override it, validates the result and writes a JSON report that
//! embeds the resolved config and the library version.
//!
//! Exit codes: 0 success, 2 invalid input, 3 degenerate quotient
//! (zero distance or rigid field), 4 solver failure or failed self-test.

mod selftest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridfield::{io as fieldio, GridError, PeriodicGrid};
use crate::kornfem::{
    self, BoundaryCondition, BuiltinDomain, EigenMethod, KornError, KornOptions, MeshError, TriMesh,
};
use crate::mat2kit::Rotation;
use crate::rigidity::{self, AlphaProfile, RigidityError, ZeroMode};
use crate::shells::{self, FourierProfile, ShellError, ShellSpec};

pub use selftest::{run_selftest, Check, SelftestConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "KORNLAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Solver(String),
    #[error("self-test failed: {failed} failing properties")]
    SelftestFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Solver(_) | CliError::SelftestFailed { .. } => 4,
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::CurlResidualTooLarge { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Invalid(format!("invalid mesh: {e}"))
    }
}

impl From<KornError> for CliError {
    fn from(e: KornError) -> Self {
        match e {
            KornError::Mesh(m) => m.into(),
            KornError::EmptySpace => CliError::Invalid(e.to_string()),
            KornError::InfiniteQuotient => CliError::Degenerate(e.to_string()),
            KornError::SingularB { .. } | KornError::DeflationMismatch { .. } | KornError::CgNotConverged { .. } => {
                CliError::Solver(e.to_string())
            }
        }
    }
}

impl From<RigidityError> for CliError {
    fn from(e: RigidityError) -> Self {
        match e {
            RigidityError::Grid(g) => g.into(),
            RigidityError::ZeroDistance { .. } => CliError::Degenerate(e.to_string()),
            RigidityError::DegenerateFarField => CliError::Degenerate(e.to_string()),
            RigidityError::NotCompactlySupported { .. } => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ShellError> for CliError {
    fn from(e: ShellError) -> Self {
        match e {
            ShellError::InfiniteQuotient => CliError::Degenerate(e.to_string()),
            ShellError::Mesh(m) => m.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "kornlab", version, about = "Korn and rigidity constants: FEM estimates, extremal fields, shell blow-up")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Korn constant of a mesh or a builtin domain over a refinement sweep.
    Korn(KornArgs),
    /// Synthesize the extremal field of the rigidity estimate.
    Rigidity(RigidityArgs),
    /// Korn quotient blow-up on thin shells; CSV table plus JSON summary.
    Shell(ShellArgs),
    /// Run the invariant suites of every module.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct KornArgs {
    /// Flat JSON config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// square, disk, annulus or shell.
    #[arg(long)]
    pub domain: Option<String>,
    /// Mesh file (JSON); replaces --domain, no sweep.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Number of refinements after the coarsest level with free dofs.
    #[arg(long)]
    pub refine: Option<usize>,
    /// tangential or dirichlet.
    #[arg(long)]
    pub bc: Option<String>,
    /// Eigensolver tolerance on the top Ritz value.
    #[arg(long)]
    pub tol: Option<f64>,
    /// auto, dense or lanczos.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RigidityArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid points per axis.
    #[arg(long)]
    pub n: Option<usize>,
    /// Box side; the box is [−L/2, L/2)².
    #[arg(long = "length", short = 'L')]
    pub length: Option<f64>,
    /// Angle field file; its header fixes n and L.
    #[arg(long)]
    pub alpha_file: Option<PathBuf>,
    /// Bump amplitude (radians).
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Far-field rotation angle of R₀ (radians).
    #[arg(long)]
    pub r0: Option<f64>,
    /// isometric or drop.
    #[arg(long)]
    pub zero_mode: Option<String>,
    /// Save the gradient field (4 components) to this field file.
    #[arg(long)]
    pub save_gradient: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ShellArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Profile g(θ), e.g. "0.2+0.05*cos(3t)", or coefficient JSON.
    #[arg(long)]
    pub profile: Option<String>,
    /// Comma-separated, strictly decreasing thicknesses.
    #[arg(long)]
    pub h_list: Option<String>,
    #[arg(long)]
    pub angular_resolution: Option<usize>,
    #[arg(long)]
    pub radial_layers: Option<usize>,
    /// CSV table path; stdout if omitted.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary path; stdout when the CSV goes to a file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random matrices in the matrix-kit suite.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Use the determinant constant 2 in place of 1/2 (fault injection).
    #[arg(long)]
    pub break_det_constant: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KornConfig {
    pub domain: String,
    pub mesh: Option<PathBuf>,
    pub refine: usize,
    pub bc: BoundaryCondition,
    pub tol: f64,
    pub method: EigenMethod,
    pub seed: u64,
    pub report: Option<PathBuf>,
}

impl Default for KornConfig {
    fn default() -> Self {
        let o = KornOptions::default();
        KornConfig {
            domain: "square".into(),
            mesh: None,
            refine: 5,
            bc: BoundaryCondition::Tangential,
            tol: o.lanczos.tol,
            method: o.method,
            seed: o.seed,
            report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigidityConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub alpha_file: Option<PathBuf>,
    pub profile: AlphaProfile,
    pub r0: f64,
    pub zero_mode: ZeroMode,
    pub save_gradient: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RigidityConfig {
    fn default() -> Self {
        RigidityConfig {
            n: 512,
            length: 20.0,
            alpha_file: None,
            profile: AlphaProfile::default(),
            r0: 0.0,
            zero_mode: ZeroMode::default(),
            save_gradient: None,
            report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellConfig {
    pub profile: FourierProfile,
    pub h_list: Vec<f64>,
    pub angular_resolution: usize,
    pub radial_layers: usize,
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for ShellConfig {
    fn default() -> Self {
        let s = ShellSpec::default();
        ShellConfig {
            profile: s.profile,
            h_list: vec![0.1, 0.05, 0.025, 0.0125],
            angular_resolution: s.angular_resolution,
            radial_layers: s.radial_layers,
            csv: None,
            report: None,
        }
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
}

/// Parses a snake_case enum name through its serde representation.
fn parse_name<T: DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| CliError::Invalid(format!("unknown {what} {s:?}")))
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{what} must be positive and finite, got {v}")))
    }
}

impl KornArgs {
    pub fn resolve(&self) -> Result<KornConfig> {
        let mut c: KornConfig = load_config(self.config.as_deref())?;
        if let Some(d) = &self.domain {
            c.domain = d.clone();
        }
        if self.mesh.is_some() {
            c.mesh = self.mesh.clone();
        }
        if let Some(r) = self.refine {
            c.refine = r;
        }
        if let Some(b) = &self.bc {
            c.bc = parse_name("boundary condition", b)?;
        }
        if let Some(t) = self.tol {
            c.tol = t;
        }
        if let Some(m) = &self.method {
            c.method = parse_name("method", m)?;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.report.is_some() {
            c.report = self.report.clone();
        }
        positive("tol", c.tol)?;
        builtin_domain(&c.domain)?;
        Ok(c)
    }
}

pub fn builtin_domain(name: &str) -> Result<BuiltinDomain> {
    match name.to_ascii_lowercase().as_str() {
        "square" => Ok(BuiltinDomain::Square),
        "disk" => Ok(BuiltinDomain::unit_disk()),
        "annulus" => Ok(BuiltinDomain::Annulus { inner: 0.5, outer: 1.0 }),
        "shell" => Ok(BuiltinDomain::Shell(ShellSpec {
            angular_resolution: 64,
            radial_layers: 2,
            ..ShellSpec::default()
        })),
        other => Err(CliError::Invalid(format!(
            "unknown domain {other:?} (expected square, disk, annulus or shell)"
        ))),
    }
}

impl RigidityArgs {
    pub fn resolve(&self) -> Result<RigidityConfig> {
        let mut c: RigidityConfig = load_config(self.config.as_deref())?;
        if let Some(n) = self.n {
            c.n = n;
        }
        if let Some(l) = self.length {
            c.length = l;
        }
        if self.alpha_file.is_some() {
            c.alpha_file = self.alpha_file.clone();
        }
        let AlphaProfile::GaussianBump {
            amplitude,
            width,
            center,
        } = c.profile;
        c.profile = AlphaProfile::GaussianBump {
            amplitude: self.amplitude.unwrap_or(amplitude),
            width: self.width.unwrap_or(width),
            center,
        };
        if let Some(r) = self.r0 {
            c.r0 = r;
        }
        if let Some(z) = &self.zero_mode {
            c.zero_mode = parse_name("zero mode", z)?;
        }
        if self.save_gradient.is_some() {
            c.save_gradient = self.save_gradient.clone();
        }
        if self.report.is_some() {
            c.report = self.report.clone();
        }
        if !c.r0.is_finite() {
            return Err(CliError::Invalid("r0 must be finite".into()));
        }
        let AlphaProfile::GaussianBump { amplitude, width, .. } = c.profile;
        positive("width", width)?;
        if !amplitude.is_finite() {
            return Err(CliError::Invalid("amplitude must be finite".into()));
        }
        if c.alpha_file.is_none() {
            PeriodicGrid::new(c.n, c.length)?;
        }
        Ok(c)
    }
}

pub fn parse_h_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Invalid(format!("h list entry {t:?} is not a number")))
        })
        .collect()
}

impl ShellArgs {
    pub fn resolve(&self) -> Result<ShellConfig> {
        let mut c: ShellConfig = load_config(self.config.as_deref())?;
        if let Some(p) = &self.profile {
            c.profile = if p.trim_start().starts_with('{') {
                serde_json::from_str(p).map_err(|e| CliError::Invalid(format!("profile JSON: {e}")))?
            } else {
                FourierProfile::parse(p)?
            };
        }
        if let Some(h) = &self.h_list {
            c.h_list = parse_h_list(h)?;
        }
        if let Some(a) = self.angular_resolution {
            c.angular_resolution = a;
        }
        if let Some(r) = self.radial_layers {
            c.radial_layers = r;
        }
        if self.csv.is_some() {
            c.csv = self.csv.clone();
        }
        if self.report.is_some() {
            c.report = self.report.clone();
        }
        for &h in &c.h_list {
            positive("h", h)?;
        }
        Ok(c)
    }
}

/// Common envelope of every JSON report.
#[derive(Debug, Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub timestamp: String,
    pub config: C,
    pub notes: Vec<String>,
    pub result: R,
}

impl<C: Serialize, R: Serialize> Report<C, R> {
    pub fn new(command: &'static str, config: C, notes: Vec<String>, result: R) -> Self {
        Report {
            tool: "kornlab",
            version: VERSION,
            command,
            timestamp: chrono::Utc::now().to_rfc3339(),
            config,
            notes,
            result,
        }
    }
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Solver(format!("serializing report: {e}")))?;
    match path {
        Some(p) => fs::write(p, text + "\n").map_err(|e| CliError::Invalid(format!("writing {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum KornResult {
    Sweep(kornfem::KornSweep),
    Single(kornfem::KornEstimate),
}

pub fn cmd_korn(c: &KornConfig) -> Result<(KornResult, Vec<String>)> {
    let mut opts = KornOptions {
        method: c.method,
        seed: c.seed,
        ..KornOptions::default()
    };
    opts.lanczos.tol = c.tol;
    let mut notes = Vec::new();
    let result = if let Some(path) = &c.mesh {
        let mesh = TriMesh::load(path)?;
        KornResult::Single(kornfem::korn_constant_with(&mesh, c.bc, &opts)?)
    } else {
        let domain = builtin_domain(&c.domain)?;
        let first = first_nonempty_level(&domain, c.bc)?;
        notes.push(format!("levels {first}..={} ({} refinements)", first + c.refine, c.refine));
        KornResult::Sweep(kornfem::korn_sweep(&domain, first, first + c.refine, c.bc, &opts)?)
    };
    let estimates: Vec<&kornfem::KornEstimate> = match &result {
        KornResult::Sweep(s) => s.levels.iter().map(|l| &l.estimate).collect(),
        KornResult::Single(e) => vec![e],
    };
    if let Some(e) = estimates.last() {
        if let Some(center) = e.l_omega.center() {
            notes.push(format!(
                "rotational symmetry about ({:.6}, {:.6}); {}",
                center[0],
                center[1],
                if e.deflated {
                    "the rotation was deflated from the pencil (L_Omega nontrivial)"
                } else {
                    "no deflation needed for this boundary condition"
                }
            ));
        }
    }
    if let KornResult::Sweep(s) = &result {
        if !s.monotone {
            notes.push("kappa_sq sequence is not monotone within the eigensolver tolerance".into());
        }
    }
    if estimates.iter().any(|e| !e.converged) {
        notes.push("eigensolver stopped at its iteration cap on some level".into());
    }
    Ok((result, notes))
}

fn first_nonempty_level(domain: &BuiltinDomain, bc: BoundaryCondition) -> Result<usize> {
    for level in 0..4 {
        let mesh = domain.mesh(level)?;
        if kornfem::DofMap::new(&kornfem::constraints_for(&mesh, bc)).len() > 0 {
            return Ok(level);
        }
    }
    Err(KornError::EmptySpace.into())
}

pub fn cmd_rigidity(c: &RigidityConfig) -> Result<rigidity::ExtremalReport> {
    let alpha = match &c.alpha_file {
        Some(path) => fieldio::load(path)?.into_scalar()?,
        None => c.profile.sample(PeriodicGrid::new(c.n, c.length)?),
    };
    let ext = rigidity::synthesize_extremal_with(&alpha, Rotation::new(c.r0), c.zero_mode)?;
    if let Some(path) = &c.save_gradient {
        let data = fieldio::FieldData {
            grid: ext.gradient.grid,
            components: ext.gradient.comps.to_vec(),
        };
        fieldio::save(&data, path)?;
    }
    Ok(ext.report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellSummary {
    pub slope: Option<f64>,
    pub grad_over_sqrt_h: Vec<f64>,
    pub grad_over_sqrt_h_spread: f64,
    pub symgrad_over_h32: Vec<f64>,
    pub table: shells::BlowupTable,
}

pub fn cmd_shell(c: &ShellConfig) -> Result<ShellSummary> {
    let template = ShellSpec {
        profile: c.profile.clone(),
        h: c.h_list.first().copied().unwrap_or(0.1),
        angular_resolution: c.angular_resolution,
        radial_layers: c.radial_layers,
    };
    let table = shells::blowup_experiment(&template, &c.h_list)?;
    let g = table.grad_over_sqrt_h();
    Ok(ShellSummary {
        slope: table.slope,
        grad_over_sqrt_h_spread: shells::spread(&g),
        grad_over_sqrt_h: g,
        symgrad_over_h32: table.symgrad_over_h32(),
        table,
    })
}

/// Caps the global rayon pool at `KORNLAB_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Korn(a) => {
            let c = a.resolve()?;
            let (result, notes) = cmd_korn(&c)?;
            emit(&Report::new("korn", &c, notes, result), c.report.as_deref())
        }
        Command::Rigidity(a) => {
            let c = a.resolve()?;
            let r = cmd_rigidity(&c)?;
            eprintln!("ratio {:.12}  ‖g‖/‖f‖ {:.12}  theta {:.9}", r.ratio, r.g_norm / r.f_norm, r.optimal_theta);
            emit(&Report::new("rigidity", &c, Vec::new(), r), c.report.as_deref())
        }
        Command::Shell(a) => {
            let c = a.resolve()?;
            let s = cmd_shell(&c)?;
            let mut notes = Vec::new();
            if s.slope.is_none() {
                notes.push("slope needs at least two rows".into());
            }
            let report = Report::new("shell", &c, notes, &s);
            match &c.csv {
                Some(path) => {
                    let file = fs::File::create(path)
                        .map_err(|e| CliError::Invalid(format!("writing {}: {e}", path.display())))?;
                    s.table.write_csv(file)?;
                    emit(&report, c.report.as_deref())
                }
                None => {
                    let stdout = std::io::stdout();
                    s.table.write_csv(stdout.lock())?;
                    match &c.report {
                        Some(p) => emit(&report, Some(p)),
                        None => Ok(()),
                    }
                }
            }
        }
        Command::Selftest(a) => {
            let mut c: SelftestConfig = load_config(a.config.as_deref())?;
            if let Some(s) = a.seed {
                c.seed = s;
            }
            if let Some(n) = a.samples {
                c.samples = n;
            }
            c.break_det_constant |= a.break_det_constant;
            if a.report.is_some() {
                c.report = a.report.clone();
            }
            let checks = run_selftest(&c);
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for ch in &checks {
                let _ = writeln!(out, "{}", ch.line());
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            let _ = writeln!(out, "{} of {} properties passed", checks.len() - failed, checks.len());
            if let Some(p) = &c.report {
                emit(&Report::new("selftest", &c, Vec::new(), &checks), Some(p))?;
            }
            if failed > 0 {
                Err(CliError::SelftestFailed { failed })
            } else {
                Ok(())
            }
        }
    }
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kornlab: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests;
