//! Command-line front end: spec-file ingestion, command dispatch and
//! report emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::barrier::{
    build_annulus_profile, build_subsolution_p, build_supersolution, build_supersolution_bounded,
    build_supersolution_gradient, Barrier, BarrierKind, BarrierSummary, GluedSubsolution, DEFAULT_GLUING_RATE,
};
use crate::error::{Error, Result};
use crate::heisenberg::{radial_field, Geometry, RadialKind};
use crate::ko::{decide_ko, decide_ko_hat, KoVerdict, Verdict};
use crate::profile::{Constants, ProblemSpec, Profile, Rhs, Tolerances};
use crate::validate::{validate_base, validate_gradient_case, validate_homogeneity, StructuralReport};
use crate::verify::{
    fullspace_residual, geometry_checks, radial_residual, weak_residual, Bump, FullspaceOptions, GeometryReport,
    Region, ResidualGrid, Sign, WeakMethod, WEAK_MAX_N,
};

pub const REPORT_FILE: &str = "report.json";
pub const BARRIER_CSV: &str = "barrier.csv";
pub const RESIDUALS_CSV: &str = "residuals.csv";
pub const FULLSPACE_CSV: &str = "residuals_fullspace.csv";
pub const REPORT_DIR_ENV: &str = "KO_REPORT_DIR";

pub const RADIAL_POINTS: usize = 1000;
pub const FULLSPACE_POINTS: usize = 200;
pub const GEOMETRY_TRIALS: usize = 200;
pub const WEAK_QUAD_N: usize = 32;
pub const JUNCTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Heisenberg,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub kind: GeometryKind,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
pub enum RhsFile {
    Product { f: String, l: String },
    Difference { f: String, h: String, g: String },
}

/// The JSON problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub geometry: GeometryFile,
    pub phi: String,
    pub rhs: RhsFile,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

impl SpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn geometry(&self) -> Geometry {
        match self.geometry.kind {
            GeometryKind::Heisenberg => Geometry::Heisenberg { m: self.geometry.m },
            GeometryKind::Euclidean => Geometry::Euclidean { m: self.geometry.m },
        }
    }

    pub fn to_problem(&self) -> Result<ProblemSpec> {
        let geometry = self.geometry();
        geometry.check()?;
        let rhs = match &self.rhs {
            RhsFile::Product { f, l } => Rhs::GradientProduct { f: Profile::parse(f)?, l: Profile::parse(l)? },
            RhsFile::Difference { f, h, g } => {
                Rhs::GradientDifference { f: Profile::parse(f)?, h: Profile::parse(h)?, g: Profile::parse(g)? }
            }
        };
        let spec = ProblemSpec::new(geometry, Profile::parse(&self.phi)?, rhs, self.constants)?;
        Ok(spec.with_tolerances(self.tolerances.unwrap_or_default()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "kobarrier", version, about = "Keller-Osserman barriers on the Heisenberg group")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Seed for every sampled point set.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write barrier.csv and residual CSVs into this directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub emit_csv: Option<PathBuf>,
    /// Directory for report.json (default: $KO_REPORT_DIR, else the current directory).
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    pub tol_rel: Option<f64>,
    /// Finite-difference step.
    #[arg(long, global = true)]
    pub fd_step: Option<f64>,
    /// Validator grid size.
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    /// Iteration budget for the sigma searches.
    #[arg(long, global = true)]
    pub sigma_budget: Option<usize>,
    /// Treat the spec's geometry as Euclidean space of the same m.
    #[arg(long, global = true)]
    pub euclidean: bool,
    /// Record wall-clock time per phase (makes the report non-reproducible).
    #[arg(long, global = true)]
    pub timings: bool,
    /// Rows in barrier.csv.
    #[arg(long, global = true, default_value_t = 200)]
    pub samples: usize,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            seed: 0,
            emit_csv: None,
            out_dir: None,
            tol_rel: None,
            fd_step: None,
            grid_n: None,
            sigma_budget: None,
            euclidean: false,
            timings: false,
            samples: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierChoice {
    /// Gradient variant for difference-form specs, otherwise the
    /// supersolution when the KO condition does not fail and the glued
    /// subsolution when it does.
    Auto,
    Super,
    Bounded,
    Gradient,
    Sub,
    Annulus,
}

#[derive(Debug, Clone, Args)]
pub struct BarrierArgs {
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.2)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 2.0)]
    pub t1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub btilde: f64,
    /// Ceiling of the bounded variant.
    #[arg(long, default_value_t = 10.0)]
    pub ceiling: f64,
    /// Fixed eps for the subsolution (chosen automatically when absent).
    #[arg(long)]
    pub sub_eps: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GLUING_RATE)]
    pub gluing_rate: f64,
    /// Outer radius R of the annulus [R/2, R].
    #[arg(long, default_value_t = 2.0)]
    pub radius: f64,
    /// Value on the inner sphere.
    #[arg(long, default_value_t = 0.0)]
    pub inner_value: f64,
    /// Value on the outer sphere.
    #[arg(long, default_value_t = 1.0)]
    pub outer_value: f64,
}

impl Default for BarrierArgs {
    fn default() -> Self {
        BarrierArgs {
            eps: 0.1,
            eta: 0.2,
            t0: 1.0,
            t1: 2.0,
            btilde: 1.0,
            ceiling: 10.0,
            sub_eps: None,
            gluing_rate: DEFAULT_GLUING_RATE,
            radius: 2.0,
            inner_value: 0.0,
            outer_value: 1.0,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structural hypotheses.
    Validate { spec: PathBuf },
    /// Decide the Keller-Osserman condition(s).
    Ko { spec: PathBuf },
    /// Blow-up supersolution with its radial certificate.
    BuildSuper {
        spec: PathBuf,
        #[command(flatten)]
        args: BarrierArgs,
    },
    /// Supersolution that stops at a ceiling.
    BuildSuperBounded {
        spec: PathBuf,
        #[command(flatten)]
        args: BarrierArgs,
    },
    /// Supersolution for the difference form f - h g.
    BuildSuperGradient {
        spec: PathBuf,
        #[command(flatten)]
        args: BarrierArgs,
    },
    /// Glued subsolution for p-Laplacian specs failing the KO condition.
    BuildSub {
        spec: PathBuf,
        #[command(flatten)]
        args: BarrierArgs,
    },
    /// Phi-harmonic profile on an annulus.
    Annulus {
        spec: PathBuf,
        #[command(flatten)]
        args: BarrierArgs,
    },
    /// Build a barrier and certify it radially, pointwise on the group and
    /// (for the subsolution) weakly across the seam.
    Verify {
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = BarrierChoice::Auto)]
        barrier: BarrierChoice,
        #[command(flatten)]
        args: BarrierArgs,
    },
    /// Structural identities of H^m.
    Geometry {
        /// Take m from this spec.
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = GEOMETRY_TRIALS)]
        trials: usize,
    },
    /// Validation, KO decision, automatic barrier, certificates and
    /// geometry checks in one report.
    FullReport {
        spec: PathBuf,
        #[command(flatten)]
        args: BarrierArgs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Ko { .. } => "ko",
            Command::BuildSuper { .. } => "build-super",
            Command::BuildSuperBounded { .. } => "build-super-bounded",
            Command::BuildSuperGradient { .. } => "build-super-gradient",
            Command::BuildSub { .. } => "build-sub",
            Command::Annulus { .. } => "annulus",
            Command::Verify { .. } => "verify",
            Command::Geometry { .. } => "geometry",
            Command::FullReport { .. } => "full-report",
        }
    }

    pub fn spec_path(&self) -> Option<&Path> {
        match self {
            Command::Validate { spec }
            | Command::Ko { spec }
            | Command::BuildSuper { spec, .. }
            | Command::BuildSuperBounded { spec, .. }
            | Command::BuildSuperGradient { spec, .. }
            | Command::BuildSub { spec, .. }
            | Command::Annulus { spec, .. }
            | Command::Verify { spec, .. }
            | Command::FullReport { spec, .. } => Some(spec),
            Command::Geometry { spec, .. } => spec.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
            Status::Error => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CertificateDetail {
    Residual {
        sign: Sign,
        points: usize,
        skipped: usize,
        worst_location: Option<Vec<f64>>,
        slack_rel: f64,
        seed: Option<u64>,
    },
    Weak {
        value: f64,
        error_estimate: f64,
        flux_term: f64,
        source_term: f64,
        n: usize,
        method: WeakMethod,
        bump: Bump,
    },
    Junction {
        value_mismatch: f64,
        derivative_mismatch: f64,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub name: String,
    pub pass: bool,
    pub worst: f64,
    pub detail: CertificateDetail,
}

impl Certificate {
    fn residual(name: &str, grid: &ResidualGrid) -> Self {
        Certificate {
            name: name.into(),
            pass: grid.pass,
            worst: grid.worst,
            detail: CertificateDetail::Residual {
                sign: grid.sign,
                points: grid.points.len(),
                skipped: grid.skipped,
                worst_location: grid.worst_location.clone(),
                slack_rel: grid.slack_rel,
                seed: grid.seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

/// Echo of the spec as it was run, after flag overrides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecEcho {
    pub file: SpecFile,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub status: Status,
    pub error: Option<String>,
    pub spec: Option<SpecEcho>,
    pub structural: Option<StructuralReport>,
    pub ko: Vec<KoVerdict>,
    pub barriers: Vec<BarrierSummary>,
    pub certificates: Vec<Certificate>,
    pub geometry: Option<GeometryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<Timing>>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64) -> Self {
        RunReport {
            tool: "kobarrier".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            status: Status::Pass,
            error: None,
            spec: None,
            structural: None,
            ko: Vec::new(),
            barriers: Vec::new(),
            certificates: Vec::new(),
            geometry: None,
            timings: None,
        }
    }

    /// Failed certificates or hypotheses give `Fail`, otherwise any
    /// inconclusive verdict gives `Inconclusive`.
    fn settle(&mut self) {
        if self.error.is_some() {
            self.status = Status::Error;
            return;
        }
        let failed = self.certificates.iter().any(|c| !c.pass)
            || self.structural.as_ref().is_some_and(|s| s.any_fail())
            || self.geometry.as_ref().is_some_and(|g| !g.pass);
        let inconclusive = self.structural.as_ref().is_some_and(|s| s.any_inconclusive())
            || self.ko.iter().any(|k| k.verdict == Verdict::Inconclusive);
        self.status = if failed {
            Status::Fail
        } else if inconclusive {
            Status::Inconclusive
        } else {
            Status::Pass
        };
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Sampled data kept out of the JSON report.
#[derive(Default)]
pub struct Artifacts {
    pub barrier_samples: Option<Vec<[f64; 4]>>,
    pub radial: Option<ResidualGrid>,
    pub fullspace: Option<ResidualGrid>,
}

/// Writes `report.json` into `dir`.
pub fn emit(report: &RunReport, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(REPORT_FILE);
    fs::write(&path, report.to_json()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn coord_names(n: usize) -> Vec<String> {
    if n == 1 {
        return vec!["t".into()];
    }
    let m = n / 2;
    if n % 2 == 1 {
        let mut v: Vec<String> = (1..=m).map(|j| format!("x{j}")).collect();
        v.extend((1..=m).map(|j| format!("y{j}")));
        v.push("t".into());
        v
    } else {
        (1..=n).map(|j| format!("x{j}")).collect()
    }
}

fn residual_csv(grid: &ResidualGrid, dim: usize) -> String {
    let mut out = coord_names(dim).join(",");
    out.push_str(",residual\n");
    for p in &grid.points {
        for c in &p.location {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{}", p.residual);
    }
    out
}

/// Writes the CSV artifacts present in `artifacts` into `dir`.
pub fn emit_csv(artifacts: &Artifacts, geometry: Option<Geometry>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    };
    if let Some(rows) = &artifacts.barrier_samples {
        let mut body = String::from("t,alpha,alpha_prime,alpha_second\n");
        for [t, a, d, dd] in rows {
            let _ = writeln!(body, "{t},{a},{d},{dd}");
        }
        put(BARRIER_CSV, body)?;
    }
    if let Some(g) = &artifacts.radial {
        put(RESIDUALS_CSV, residual_csv(g, 1))?;
    }
    if let (Some(g), Some(geo)) = (&artifacts.fullspace, geometry) {
        put(FULLSPACE_CSV, residual_csv(g, geo.dim()))?;
    }
    Ok(written)
}

struct Clock {
    enabled: bool,
    laps: Vec<Timing>,
}

impl Clock {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            self.laps.push(Timing { phase: phase.into(), seconds: start.elapsed().as_secs_f64() });
        }
        out
    }
}

enum Built {
    Plain(Barrier),
    Sub(GluedSubsolution),
}

impl Built {
    fn barrier(&self) -> &Barrier {
        match self {
            Built::Plain(b) => b,
            Built::Sub(s) => s.barrier(),
        }
    }

    fn summary(&self) -> BarrierSummary {
        match self {
            Built::Plain(b) => b.summary(),
            Built::Sub(s) => s.summary(),
        }
    }
}

fn apply_flags(mut file: SpecFile, flags: &Flags) -> SpecFile {
    if flags.euclidean {
        file.geometry.kind = GeometryKind::Euclidean;
    }
    let mut tol = file.tolerances.unwrap_or_default();
    if let Some(v) = flags.tol_rel {
        tol.quad_rel = v;
    }
    if let Some(v) = flags.fd_step {
        tol.fd_step = v;
    }
    if let Some(v) = flags.grid_n {
        tol.grid_n = v;
    }
    if let Some(v) = flags.sigma_budget {
        tol.sigma_budget_super = v;
        tol.sigma_budget_sub = v;
    }
    file.tolerances = Some(tol);
    file
}

fn check_flags(flags: &Flags) -> Result<()> {
    let positive = |name: &str, v: Option<f64>| match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::Invalid(format!("--{name} must be positive, got {x}"))),
        _ => Ok(()),
    };
    positive("tol-rel", flags.tol_rel)?;
    positive("fd-step", flags.fd_step)?;
    if flags.grid_n.is_some_and(|n| n < 2) {
        return Err(Error::Invalid("--grid-n must be at least 2".into()));
    }
    Ok(())
}

fn validate_all(spec: &ProblemSpec) -> Result<StructuralReport> {
    let mut report = validate_base(spec)?;
    match validate_homogeneity(spec) {
        Ok(r) => report = report.merge(r),
        Err(Error::Missing(_)) => {}
        Err(e) => return Err(e),
    }
    if spec.rhs.h().is_some() || spec.constants.b1.is_some() {
        match validate_gradient_case(spec) {
            Ok(r) => report = report.merge(r),
            Err(Error::Missing(_) | Error::Invalid(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

fn validate_structure(spec: &ProblemSpec) -> Result<StructuralReport> {
    match &spec.rhs {
        // The base hypotheses are stated for the product form.
        Rhs::GradientDifference { .. } => validate_gradient_case(spec),
        Rhs::GradientProduct { .. } => validate_all(spec),
    }
}

fn ko_verdicts(spec: &ProblemSpec) -> Result<Vec<KoVerdict>> {
    let mut out = vec![decide_ko(spec)];
    if spec.rhs.h().is_some() {
        out.push(decide_ko_hat(spec)?);
    }
    Ok(out)
}

fn resolve_choice(spec: &ProblemSpec, choice: BarrierChoice, ko: &[KoVerdict]) -> BarrierChoice {
    if choice != BarrierChoice::Auto {
        return choice;
    }
    if spec.rhs.h().is_some() {
        return BarrierChoice::Gradient;
    }
    match ko.first().map(|k| k.verdict) {
        Some(Verdict::Fails) => BarrierChoice::Sub,
        _ => BarrierChoice::Super,
    }
}

fn build(spec: &ProblemSpec, choice: BarrierChoice, a: &BarrierArgs) -> Result<Built> {
    Ok(match choice {
        BarrierChoice::Auto => unreachable!("resolved before building"),
        BarrierChoice::Super => Built::Plain(build_supersolution(spec, a.eps, a.eta, a.t0, a.t1, a.btilde)?),
        BarrierChoice::Bounded => {
            Built::Plain(build_supersolution_bounded(spec, a.eps, a.eta, a.t0, a.t1, a.btilde, a.ceiling)?)
        }
        BarrierChoice::Gradient => Built::Plain(build_supersolution_gradient(spec, a.eps, a.eta, a.t0, a.t1)?),
        BarrierChoice::Sub => Built::Sub(build_subsolution_p(spec, a.sub_eps, a.gluing_rate)?),
        BarrierChoice::Annulus => Built::Plain(build_annulus_profile(spec, a.radius, a.inner_value, a.outer_value)?),
    })
}

fn radial_kind(geometry: Geometry, sub: bool) -> RadialKind {
    match (geometry, sub) {
        (Geometry::Euclidean { .. }, _) => RadialKind::EuclideanRadial,
        (_, true) => RadialKind::StationaryRadial,
        (_, false) => RadialKind::GaugeRadial,
    }
}

fn radial_certificate(built: &Built, spec: &ProblemSpec, art: &mut Artifacts) -> Result<Certificate> {
    let b = built.barrier();
    let sign = if matches!(built, Built::Sub(_)) { Sign::SubGE } else { Sign::SuperLE };
    let grid = radial_residual(b, spec, sign, &b.audit_grid(RADIAL_POINTS))?;
    let cert = Certificate::residual("radial", &grid);
    art.radial = Some(grid);
    Ok(cert)
}

/// Pointwise and weak certificates on the group itself.
fn group_certificates(built: &Built, spec: &ProblemSpec, seed: u64, art: &mut Artifacts) -> Result<Vec<Certificate>> {
    let geometry = spec.geometry;
    let step = spec.tolerances.fd_step;
    let mut out = Vec::new();
    match built {
        Built::Plain(b) => {
            if b.kind() == BarrierKind::AnnulusHarmonic {
                // Equality holds only for the radial ODE; nothing to check on the group.
                return Ok(out);
            }
            let (t0, t_end) = (b.t0(), b.t_end());
            let region =
                Region { radius: (t0 + 0.05 * (t_end - t0), t0 + 0.9 * (t_end - t0)), height: 0.0, seam: None };
            let opts =
                FullspaceOptions { n_points: FULLSPACE_POINTS, step, ..FullspaceOptions::new(Sign::SuperLE, seed) };
            let grid = fullspace_residual(b, radial_kind(geometry, false), spec, &region, &opts)?;
            out.push(Certificate::residual("fullspace", &grid));
            art.fullspace = Some(grid);
        }
        Built::Sub(s) => {
            let ts = s.t_sigma;
            let region = Region { radius: (0.05 * ts, 20.0 * ts.max(1.0)), height: 2.0, seam: Some(ts) };
            let opts =
                FullspaceOptions { n_points: FULLSPACE_POINTS, step, ..FullspaceOptions::new(Sign::SubGE, seed) };
            let kind = radial_kind(geometry, true);
            let grid = fullspace_residual(s, kind, spec, &region, &opts)?;
            out.push(Certificate::residual("fullspace", &grid));
            art.fullspace = Some(grid);

            let (dv, dd) = s.junction_mismatch()?;
            out.push(Certificate {
                name: "junction".into(),
                pass: dv.abs() <= JUNCTION_TOL && dd.abs() <= JUNCTION_TOL,
                worst: dv.abs().max(dd.abs()),
                detail: CertificateDetail::Junction {
                    value_mismatch: dv,
                    derivative_mismatch: dd,
                    tolerance: JUNCTION_TOL,
                },
            });

            let mut center = vec![0.0; geometry.dim()];
            center[0] = ts;
            let bump = Bump { center, radius: 0.5 * ts };
            let u = radial_field(geometry, s, None, kind);
            let w = match weak_residual(spec, &u, &bump, WEAK_QUAD_N, seed) {
                Err(Error::Quadrature(_)) => weak_residual(spec, &u, &bump, WEAK_MAX_N, seed)?,
                r => r?,
            };
            out.push(Certificate {
                name: "weak_seam".into(),
                pass: w.value >= -w.error_estimate,
                worst: w.value,
                detail: CertificateDetail::Weak {
                    value: w.value,
                    error_estimate: w.error_estimate,
                    flux_term: w.flux_term,
                    source_term: w.source_term,
                    n: w.n,
                    method: w.method,
                    bump,
                },
            });
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn build_and_certify(
    spec: &ProblemSpec,
    choice: BarrierChoice,
    args: &BarrierArgs,
    on_group: bool,
    seed: u64,
    samples: usize,
    report: &mut RunReport,
    art: &mut Artifacts,
    clock: &mut Clock,
) -> Result<()> {
    let built = clock.time("build", || build(spec, choice, args))?;
    report.barriers.push(built.summary());
    art.barrier_samples = Some(built.barrier().sample(samples)?);
    let radial = clock.time("radial", || radial_certificate(&built, spec, art))?;
    report.certificates.push(radial);
    if on_group {
        let more = clock.time("group", || group_certificates(&built, spec, seed, art))?;
        report.certificates.extend(more);
    }
    Ok(())
}

fn execute(
    command: &Command,
    flags: &Flags,
    file: Option<Result<SpecFile>>,
    report: &mut RunReport,
    art: &mut Artifacts,
    clock: &mut Clock,
) -> Result<Option<Geometry>> {
    check_flags(flags)?;
    let spec = match file {
        Some(file) => {
            let file = apply_flags(file?, flags);
            let spec = file.to_problem()?;
            report.spec = Some(SpecEcho { tolerances: spec.tolerances, file });
            Some(spec)
        }
        None => None,
    };
    let need = || spec.as_ref().ok_or_else(|| Error::Missing("spec file".into()));
    let (seed, samples) = (flags.seed, flags.samples);
    match command {
        Command::Validate { .. } => {
            report.structural = Some(clock.time("validate", || validate_structure(need()?))?);
        }
        Command::Ko { .. } => {
            report.ko = clock.time("ko", || ko_verdicts(need()?))?;
        }
        Command::BuildSuper { args, .. } => {
            build_and_certify(need()?, BarrierChoice::Super, args, false, seed, samples, report, art, clock)?
        }
        Command::BuildSuperBounded { args, .. } => {
            build_and_certify(need()?, BarrierChoice::Bounded, args, false, seed, samples, report, art, clock)?
        }
        Command::BuildSuperGradient { args, .. } => {
            build_and_certify(need()?, BarrierChoice::Gradient, args, false, seed, samples, report, art, clock)?
        }
        Command::BuildSub { args, .. } => {
            build_and_certify(need()?, BarrierChoice::Sub, args, false, seed, samples, report, art, clock)?
        }
        Command::Annulus { args, .. } => {
            build_and_certify(need()?, BarrierChoice::Annulus, args, false, seed, samples, report, art, clock)?
        }
        Command::Verify { barrier, args, .. } => {
            let spec = need()?;
            let ko = if *barrier == BarrierChoice::Auto { clock.time("ko", || ko_verdicts(spec))? } else { Vec::new() };
            let choice = resolve_choice(spec, *barrier, &ko);
            build_and_certify(spec, choice, args, true, seed, samples, report, art, clock)?;
        }
        Command::Geometry { m, trials, .. } => {
            let m = match &spec {
                Some(s) => match s.geometry {
                    Geometry::Heisenberg { m } => m,
                    Geometry::Euclidean { .. } => {
                        return Err(Error::Invalid("geometry checks need a Heisenberg geometry".into()))
                    }
                },
                None => *m,
            };
            report.geometry = Some(clock.time("geometry", || geometry_checks(m, *trials, seed))?);
        }
        Command::FullReport { args, .. } => {
            let spec = need()?;
            report.structural = Some(clock.time("validate", || validate_structure(spec))?);
            report.ko = clock.time("ko", || ko_verdicts(spec))?;
            let choice = resolve_choice(spec, BarrierChoice::Auto, &report.ko);
            build_and_certify(spec, choice, args, true, seed, samples, report, art, clock)?;
            if let Geometry::Heisenberg { m } = spec.geometry {
                report.geometry = Some(clock.time("geometry", || geometry_checks(m, GEOMETRY_TRIALS, seed))?);
            }
        }
    }
    Ok(spec.map(|s| s.geometry))
}

fn report_dir(flags: &Flags) -> PathBuf {
    flags
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(REPORT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Runs `command` on an already loaded spec file and returns the settled
/// report, the sampled artifacts and the geometry they live in. Nothing is
/// written.
pub fn build_report(
    command: &Command,
    flags: &Flags,
    file: Option<Result<SpecFile>>,
) -> (RunReport, Artifacts, Option<Geometry>) {
    let mut report = RunReport::new(command.name(), flags.seed);
    let mut art = Artifacts::default();
    let mut clock = Clock { enabled: flags.timings, laps: Vec::new() };
    let geometry = match execute(command, flags, file, &mut report, &mut art, &mut clock) {
        Ok(g) => g,
        Err(e) => {
            report.error = Some(e.to_string());
            report.spec.as_ref().map(|s| s.file.geometry())
        }
    };
    if clock.enabled {
        report.timings = Some(clock.laps);
    }
    report.settle();
    (report, art, geometry)
}

/// Runs one command, writes its artifacts and returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let file = cli.command.spec_path().map(SpecFile::read);
    let (report, art, geometry) = build_report(&cli.command, &cli.flags, file);
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    let dir = report_dir(&cli.flags);
    match emit(&report, &dir) {
        Ok(path) => eprintln!("{}: {:?}, report at {}", report.command, report.status, path.display()),
        Err(e) => {
            eprintln!("error: {e}");
            return Status::Error.exit_code();
        }
    }
    if let Some(dir) = &cli.flags.emit_csv {
        if let Err(e) = emit_csv(&art, geometry, dir) {
            eprintln!("error: {e}");
            return Status::Error.exit_code();
        }
    }
    report.status.exit_code()
}

/// Parses `args` (including the program name) and runs; usage errors exit
/// with 3, help and version with 0.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { Status::Error.exit_code() } else { 0 };
            let _ = e.print();
            code
        }
    }
}
