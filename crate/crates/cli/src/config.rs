//! Experiment configuration: TOML text in, a fully built [`Experiment`] out.
//!
//! Every expression is parsed and every referenced file is read while the
//! configuration is built, so a run never starts on a half-valid config.

use serde::Deserialize;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aobstacle::discretization::DataBounds;
use aobstacle::nfunction::{MonotoneCubic, VariableExponent};
use aobstacle::solver::{Method, SolverOptions};
use aobstacle::{Grid2D, NFunction, NFunctionSpec, ObstacleProblem, ScalarField};

use crate::expr::Expr;

/// Names bound inside field expressions, in evaluation order.
pub const FIELD_VARS: [&str; 2] = ["x", "y"];
/// N-function helpers callable from field expressions.
pub const FIELD_FUNCS: [&str; 3] = ["a", "ainv", "atilde"];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line and column in the config text, when known.
    pub position: Option<(usize, usize)>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((l, c)) => write!(f, "line {l}, column {c}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |k| offset - k - 1) + 1;
    (line, col)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Seg<'a> {
    Key(&'a str),
    Index(usize),
}

/// Byte span of the value at `path` in `text`.
fn locate(text: &str, path: &[Seg]) -> Option<std::ops::Range<usize>> {
    use toml::de::{DeTable, DeValue};
    let root = DeTable::parse(text).ok()?;
    let mut span = root.span();
    let mut cur: Option<&DeValue> = None;
    let mut table = Some(root.get_ref());
    for seg in path {
        let next = match (seg, table, cur) {
            (Seg::Key(k), Some(t), _) => {
                t.iter().find(|(key, _)| key.get_ref() == k).map(|(_, v)| v)
            }
            (Seg::Index(i), _, Some(DeValue::Array(a))) => a.get(*i),
            _ => None,
        }?;
        span = next.span();
        cur = Some(next.get_ref());
        table = match next.get_ref() {
            DeValue::Table(t) => Some(t),
            _ => None,
        };
    }
    Some(span)
}

/// Where a config value lives, for error positions.
#[derive(Debug, Clone)]
struct At(Vec<String>);

impl At {
    fn new(path: &[&str]) -> Self {
        Self(path.iter().map(|s| s.to_string()).collect())
    }

    fn child(&self, key: impl Into<String>) -> Self {
        let mut v = self.0.clone();
        v.push(key.into());
        Self(v)
    }

    fn segs(&self) -> Vec<Seg<'_>> {
        self.0
            .iter()
            .map(|s| match s.parse::<usize>() {
                Ok(i) => Seg::Index(i),
                Err(_) => Seg::Key(s),
            })
            .collect()
    }

    fn dotted(&self) -> String {
        self.0.join(".")
    }
}

struct Ctx<'a> {
    text: &'a str,
    dir: &'a Path,
}

impl Ctx<'_> {
    fn error(&self, at: &At, message: impl Into<String>) -> ConfigError {
        let position = locate(self.text, &at.segs()).map(|r| line_col(self.text, r.start));
        ConfigError {
            position,
            message: format!("{}: {}", at.dotted(), message.into()),
        }
    }

    /// Parses an expression stored as a TOML string; positions point into it.
    fn expr(&self, at: &At, src: &str, vars: &[&str], funcs: &[&str]) -> Result<Expr, ConfigError> {
        Expr::parse(src, vars, funcs).map_err(|e| {
            let position = locate(self.text, &at.segs()).map(|r| {
                let raw = &self.text[r.clone()];
                let quote = if raw.starts_with("\"\"\"") || raw.starts_with("'''") {
                    3
                } else {
                    1
                };
                line_col(self.text, r.start + quote + e.offset)
            });
            ConfigError {
                position,
                message: format!("{}: {} in expression \"{src}\"", at.dotted(), e.message),
            }
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    #[serde(default)]
    seed: u64,
    output: Option<String>,
    #[serde(default)]
    plots: bool,
    nfunction: RawNFunction,
    grid: RawGrid,
    fields: RawFields,
    bounds: Option<DataBounds>,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    checks: Vec<RawCheck>,
    #[serde(default)]
    analytics: Vec<RawAnalytic>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum RawNFunction {
    Power {
        p: f64,
    },
    LogPower {
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
    PiecewisePower {
        alpha: f64,
        beta: f64,
        t0: f64,
        c1: f64,
        c2: f64,
        c3: f64,
    },
    Tabulated {
        points: Vec<(f64, f64)>,
    },
    /// Expressions in `t`.
    VariableExponent {
        p: String,
        dp: Option<String>,
    },
    Regularized {
        eps: f64,
        base: Box<RawNFunction>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: usize,
    ny: Option<usize>,
    lx: Option<f64>,
    ly: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum FieldValue {
    Number(f64),
    Expr(String),
    File { file: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFields {
    f: FieldValue,
    psi: FieldValue,
    g: FieldValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodName {
    ProjectedDescent,
    ActiveSet,
    Penalty,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSolver {
    method: MethodName,
    methods: Option<Vec<MethodName>>,
    compare_methods: bool,
    /// Starting penalty for the penalty method.
    eps: f64,
    tol_residual: f64,
    max_iter: usize,
    newton_damping: f64,
    inner_tol: f64,
    jacobian_eps: Option<f64>,
}

impl Default for RawSolver {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            method: MethodName::ProjectedDescent,
            methods: None,
            compare_methods: false,
            eps: 1e-2,
            tol_residual: d.tol_residual,
            max_iter: d.max_iter,
            newton_damping: d.newton_damping,
            inner_tol: d.inner_tol,
            jacobian_eps: d.jacobian_eps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawCheck {
    LewyStampacchia {},
    SemilinearForm {},
    L1Contraction {
        f2: Option<FieldValue>,
        random_pairs: Option<usize>,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    CoincidenceStabilityL1 {
        f2: FieldValue,
        lambda: f64,
        omega: Option<String>,
    },
    CoincidenceStabilityLinfty {
        f2: Option<FieldValue>,
        psi2: Option<FieldValue>,
        g2: Option<FieldValue>,
        omega: Option<String>,
        omega_prime: Option<String>,
    },
    PenaltySandwich {
        #[serde(default = "default_sandwich_eps")]
        eps: Vec<f64>,
    },
}

fn default_amplitude() -> f64 {
    0.5
}

fn default_sandwich_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}

fn default_dyadic() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawAnalytic {
    Growth {
        #[serde(default = "default_dyadic")]
        n_dyadic: usize,
        x0: Option<[f64; 2]>,
    },
    Hausdorff {
        radii: Vec<f64>,
        deltas_h: Vec<usize>,
        x0: Option<[f64; 2]>,
    },
    DegenerateSet {
        r: f64,
        deltas_h: Vec<usize>,
        x0: Option<[f64; 2]>,
        t_star: Option<f64>,
    },
    SecondDerivative {
        r: f64,
        x0: Option<[f64; 2]>,
    },
    PenaltyGap {
        eps: f64,
    },
    Entropy {
        singular: String,
        levels: Vec<f64>,
        exponent: f64,
    },
    ManufacturedError {
        exact: String,
    },
    Toolbox {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_pairs")]
        pairs: usize,
    },
}

fn default_samples() -> usize {
    1000
}

fn default_pairs() -> usize {
    10_000
}

#[derive(Debug, Clone)]
pub enum Check {
    LewyStampacchia,
    SemilinearForm,
    L1Contraction {
        others: Vec<ObstacleProblem>,
    },
    CoincidenceStabilityL1 {
        other: ObstacleProblem,
        lambda: f64,
        omega: Vec<bool>,
    },
    CoincidenceStabilityLinfty {
        other: ObstacleProblem,
        omega: Vec<bool>,
        omega_prime: Vec<bool>,
    },
    PenaltySandwich {
        eps: Vec<f64>,
    },
}

impl Check {
    pub fn kind(&self) -> &'static str {
        match self {
            Check::LewyStampacchia => "lewy_stampacchia",
            Check::SemilinearForm => "semilinear_form",
            Check::L1Contraction { .. } => "l1_contraction",
            Check::CoincidenceStabilityL1 { .. } => "coincidence_stability_l1",
            Check::CoincidenceStabilityLinfty { .. } => "coincidence_stability_linfty",
            Check::PenaltySandwich { .. } => "penalty_sandwich",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Analytic {
    Growth {
        n_dyadic: usize,
        x0: Option<[f64; 2]>,
    },
    Hausdorff {
        radii: Vec<f64>,
        deltas: Vec<f64>,
        x0: Option<[f64; 2]>,
    },
    DegenerateSet {
        r: f64,
        deltas: Vec<f64>,
        x0: Option<[f64; 2]>,
        t_star: Option<f64>,
    },
    SecondDerivative {
        r: f64,
        x0: Option<[f64; 2]>,
    },
    PenaltyGap {
        eps: f64,
    },
    Entropy {
        singular: ScalarField,
        levels: Vec<f64>,
        exponent: f64,
    },
    ManufacturedError {
        exact: ScalarField,
    },
    Toolbox {
        samples: usize,
        pairs: usize,
    },
}

impl Analytic {
    pub fn kind(&self) -> &'static str {
        match self {
            Analytic::Growth { .. } => "growth",
            Analytic::Hausdorff { .. } => "hausdorff",
            Analytic::DegenerateSet { .. } => "degenerate_set",
            Analytic::SecondDerivative { .. } => "second_derivative",
            Analytic::PenaltyGap { .. } => "penalty_gap",
            Analytic::Entropy { .. } => "entropy",
            Analytic::ManufacturedError { .. } => "manufactured_error",
            Analytic::Toolbox { .. } => "toolbox",
        }
    }
}

/// A validated, fully built experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub seed: u64,
    pub output: Option<String>,
    pub plots: bool,
    pub problem: ObstacleProblem,
    /// One entry unless methods are compared.
    pub solvers: Vec<SolverOptions>,
    pub checks: Vec<Check>,
    pub analytics: Vec<Analytic>,
}

impl Experiment {
    pub fn grid(&self) -> &Grid2D {
        self.problem.grid()
    }

    pub fn nf(&self) -> &NFunction {
        self.problem.nf()
    }
}

/// Reads and builds the config at `path`; relative file references resolve
/// against its directory, and the default name is the file stem.
pub fn load(path: &Path, seed: Option<u64>) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        position: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment");
    parse(&text, &dir, stem, seed)
}

/// Builds an experiment from config text; `seed` overrides the configured one.
pub fn parse(
    text: &str,
    dir: &Path,
    default_name: &str,
    seed: Option<u64>,
) -> Result<Experiment, ConfigError> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        position: e.span().map(|s| line_col(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    if let Some(s) = seed {
        raw.seed = s;
    }
    let ctx = Ctx { text, dir };
    build(&ctx, raw, default_name)
}

fn build(ctx: &Ctx, raw: RawConfig, default_name: &str) -> Result<Experiment, ConfigError> {
    if let Some(out) = &raw.output {
        crate::output::check_relative(out).map_err(|m| ctx.error(&At::new(&["output"]), m))?;
    }
    let nf_at = At::new(&["nfunction"]);
    let spec = nfunction_spec(ctx, &nf_at, &raw.nfunction)?;
    let nf = NFunction::new(spec).map_err(|e| ctx.error(&nf_at, e.to_string()))?;

    let grid_at = At::new(&["grid"]);
    let nx = raw.grid.nx;
    let ny = raw.grid.ny.unwrap_or(nx);
    let lx = raw.grid.lx.unwrap_or(1.0);
    let ly = raw.grid.ly.unwrap_or(if nx > 1 {
        lx * (ny - 1) as f64 / (nx - 1) as f64
    } else {
        lx
    });
    let grid = Grid2D::new(nx, ny, lx, ly).map_err(|e| ctx.error(&grid_at, e.to_string()))?;

    let fields_at = At::new(&["fields"]);
    let f = field(ctx, &fields_at.child("f"), &raw.fields.f, grid, &nf)?;
    let psi = field(ctx, &fields_at.child("psi"), &raw.fields.psi, grid, &nf)?;
    let g = field(ctx, &fields_at.child("g"), &raw.fields.g, grid, &nf)?;
    let mut problem = ObstacleProblem::new(nf.clone(), f.clone(), psi.clone(), g.clone())
        .map_err(|e| ctx.error(&fields_at, e.to_string()))?;
    if let Some(b) = raw.bounds {
        problem = problem
            .with_bounds(b)
            .map_err(|e| ctx.error(&At::new(&["bounds"]), e.to_string()))?;
    }

    let solvers = solvers(ctx, &raw.solver)?;

    let mut checks = Vec::new();
    for (k, c) in raw.checks.iter().enumerate() {
        let at = At::new(&["checks"]).child(k.to_string());
        checks.push(check(ctx, &at, c, &problem, raw.seed)?);
    }
    let mut analytics = Vec::new();
    for (k, a) in raw.analytics.iter().enumerate() {
        let at = At::new(&["analytics"]).child(k.to_string());
        analytics.push(analytic(ctx, &at, a, &problem)?);
    }
    Ok(Experiment {
        name: raw.name.unwrap_or_else(|| default_name.to_string()),
        seed: raw.seed,
        output: raw.output,
        plots: raw.plots,
        problem,
        solvers,
        checks,
        analytics,
    })
}

fn nfunction_spec(ctx: &Ctx, at: &At, raw: &RawNFunction) -> Result<NFunctionSpec, ConfigError> {
    Ok(match raw {
        RawNFunction::Power { p } => NFunctionSpec::PowerLaw { p: *p },
        RawNFunction::LogPower { alpha, beta, gamma } => NFunctionSpec::LogPower {
            alpha: *alpha,
            beta: *beta,
            gamma: *gamma,
        },
        RawNFunction::PiecewisePower {
            alpha,
            beta,
            t0,
            c1,
            c2,
            c3,
        } => NFunctionSpec::PiecewisePower {
            alpha: *alpha,
            beta: *beta,
            t0: *t0,
            c1: *c1,
            c2: *c2,
            c3: *c3,
        },
        RawNFunction::Tabulated { points } => NFunctionSpec::Tabulated(
            MonotoneCubic::new(points)
                .map_err(|e| ctx.error(&at.child("points"), e.to_string()))?,
        ),
        RawNFunction::VariableExponent { p, dp } => {
            let pe = Arc::new(ctx.expr(&at.child("p"), p, &["t"], &[])?);
            let dp_fn: aobstacle::nfunction::ScalarFn = match dp {
                Some(src) => {
                    let de = Arc::new(ctx.expr(&at.child("dp"), src, &["t"], &[])?);
                    Arc::new(move |t| de.eval(&[t], &[]))
                }
                None => {
                    let pe = Arc::clone(&pe);
                    Arc::new(move |t: f64| {
                        let d = 1e-6 * t.max(1e-3);
                        (pe.eval(&[t + d], &[]) - pe.eval(&[(t - d).max(0.0)], &[]))
                            / (t + d - (t - d).max(0.0))
                    })
                }
            };
            let label = format!("p(t)={p}");
            let p_fn = Arc::clone(&pe);
            NFunctionSpec::VariableExponent(VariableExponent::new(
                label,
                Arc::new(move |t| p_fn.eval(&[t], &[])),
                dp_fn,
            ))
        }
        RawNFunction::Regularized { eps, base } => NFunctionSpec::Regularized {
            base: Box::new(nfunction_spec(ctx, &at.child("base"), base)?),
            eps: *eps,
        },
    })
}

fn eval_expr(e: &Expr, grid: Grid2D, nf: &NFunction) -> ScalarField {
    let a = |t: f64| nf.a(t);
    let ainv = |s: f64| nf.a_inv(s);
    let atilde = |t: f64| nf.complementary(t);
    ScalarField::from_fn(grid, |x, y| e.eval(&[x, y], &[&a, &ainv, &atilde]))
}

fn field(
    ctx: &Ctx,
    at: &At,
    v: &FieldValue,
    grid: Grid2D,
    nf: &NFunction,
) -> Result<ScalarField, ConfigError> {
    let out = match v {
        FieldValue::Number(c) => ScalarField::constant(grid, *c),
        FieldValue::Expr(src) => {
            let e = ctx.expr(at, src, &FIELD_VARS, &FIELD_FUNCS)?;
            eval_expr(&e, grid, nf)
        }
        FieldValue::File { file } => {
            let path = ctx.dir.join(file);
            let fh = std::fs::File::open(&path)
                .map_err(|e| ctx.error(at, format!("cannot open {}: {e}", path.display())))?;
            let binary = path.extension().is_some_and(|x| x == "bin");
            let read = if binary {
                aobstacle::io::read_field_binary(grid, std::io::BufReader::new(fh))
            } else {
                aobstacle::io::read_field_csv(grid, std::io::BufReader::new(fh))
            };
            read.map_err(|e| ctx.error(at, format!("{}: {e}", path.display())))?
        }
    };
    if !out.is_finite() {
        return Err(ctx.error(at, "field has non-finite values"));
    }
    Ok(out)
}

fn region(
    ctx: &Ctx,
    at: &At,
    src: Option<&str>,
    problem: &ObstacleProblem,
) -> Result<Vec<bool>, ConfigError> {
    let Some(src) = src else {
        return Ok(vec![true; problem.grid().len()]);
    };
    let e = ctx.expr(at, src, &FIELD_VARS, &FIELD_FUNCS)?;
    Ok(eval_expr(&e, *problem.grid(), problem.nf())
        .values()
        .iter()
        .map(|&v| v != 0.0)
        .collect())
}

fn solvers(ctx: &Ctx, raw: &RawSolver) -> Result<Vec<SolverOptions>, ConfigError> {
    let at = At::new(&["solver"]);
    let names = match &raw.methods {
        Some(list) if list.is_empty() => {
            return Err(ctx.error(&at.child("methods"), "method list is empty"))
        }
        Some(list) if list.len() > 1 && !raw.compare_methods => {
            return Err(ctx.error(
                &at.child("methods"),
                "several methods need compare_methods = true",
            ))
        }
        Some(list) => list.clone(),
        None if raw.compare_methods => vec![
            MethodName::ProjectedDescent,
            MethodName::ActiveSet,
            MethodName::Penalty,
        ],
        None => vec![raw.method],
    };
    let mut out = Vec::new();
    for name in names {
        let method = match name {
            MethodName::ProjectedDescent => Method::ProjectedDescent,
            MethodName::ActiveSet => Method::ActiveSet,
            MethodName::Penalty => Method::Penalty { eps: raw.eps },
        };
        let opts = SolverOptions {
            method,
            tol_residual: raw.tol_residual,
            max_iter: raw.max_iter,
            newton_damping: raw.newton_damping,
            inner_tol: raw.inner_tol,
            jacobian_eps: raw.jacobian_eps,
        };
        if !(opts.tol_residual > 0.0
            && opts.max_iter > 0
            && opts.newton_damping > 0.0
            && opts.newton_damping <= 1.0)
        {
            return Err(ctx.error(
                &at,
                "need tol_residual > 0, max_iter >= 1 and newton_damping in (0, 1]",
            ));
        }
        if name == MethodName::Penalty && !(raw.eps > 0.0) {
            return Err(ctx.error(&at.child("eps"), "penalty eps must be positive"));
        }
        out.push(opts);
    }
    Ok(out)
}

fn second(
    ctx: &Ctx,
    at: &At,
    problem: &ObstacleProblem,
    f2: Option<&FieldValue>,
    psi2: Option<&FieldValue>,
    g2: Option<&FieldValue>,
) -> Result<ObstacleProblem, ConfigError> {
    let (grid, nf) = (*problem.grid(), problem.nf());
    let pick = |key: &str, v: Option<&FieldValue>, base: &ScalarField| match v {
        Some(v) => field(ctx, &at.child(key), v, grid, nf),
        None => Ok(base.clone()),
    };
    let f = pick("f2", f2, problem.f())?;
    let psi = pick("psi2", psi2, problem.psi())?;
    let g = pick("g2", g2, problem.g())?;
    ObstacleProblem::new(nf.clone(), f, psi, g).map_err(|e| ctx.error(at, e.to_string()))
}

fn check(
    ctx: &Ctx,
    at: &At,
    raw: &RawCheck,
    problem: &ObstacleProblem,
    seed: u64,
) -> Result<Check, ConfigError> {
    Ok(match raw {
        RawCheck::LewyStampacchia {} => Check::LewyStampacchia,
        RawCheck::SemilinearForm {} => Check::SemilinearForm,
        RawCheck::L1Contraction {
            f2,
            random_pairs,
            amplitude,
        } => {
            let others = match (f2, random_pairs) {
                (Some(v), None) => vec![second(ctx, at, problem, Some(v), None, None)?],
                (None, Some(n)) if *n > 0 => random_sources(problem, *n, *amplitude, seed)
                    .into_iter()
                    .map(|f| {
                        problem
                            .with_source(f)
                            .map_err(|e| ctx.error(at, e.to_string()))
                    })
                    .collect::<Result<_, _>>()?,
                _ => return Err(ctx.error(at, "give exactly one of f2 or random_pairs (>= 1)")),
            };
            Check::L1Contraction { others }
        }
        RawCheck::CoincidenceStabilityL1 { f2, lambda, omega } => {
            if !(*lambda > 0.0) {
                return Err(ctx.error(&at.child("lambda"), "lambda must be positive"));
            }
            Check::CoincidenceStabilityL1 {
                other: second(ctx, at, problem, Some(f2), None, None)?,
                lambda: *lambda,
                omega: region(ctx, &at.child("omega"), omega.as_deref(), problem)?,
            }
        }
        RawCheck::CoincidenceStabilityLinfty {
            f2,
            psi2,
            g2,
            omega,
            omega_prime,
        } => Check::CoincidenceStabilityLinfty {
            other: second(ctx, at, problem, f2.as_ref(), psi2.as_ref(), g2.as_ref())?,
            omega: region(ctx, &at.child("omega"), omega.as_deref(), problem)?,
            omega_prime: region(
                ctx,
                &at.child("omega_prime"),
                omega_prime.as_deref(),
                problem,
            )?,
        },
        RawCheck::PenaltySandwich { eps } => {
            if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
                return Err(ctx.error(&at.child("eps"), "need a non-empty list of positive eps"));
            }
            Check::PenaltySandwich { eps: eps.clone() }
        }
    })
}

/// Sources `f + amplitude · s · sin(a x + b y + c)` with random `s ∈ [0, 1]`,
/// wave numbers and phase, drawn from `seed`.
pub fn random_sources(
    problem: &ObstacleProblem,
    n: usize,
    amplitude: f64,
    seed: u64,
) -> Vec<ScalarField> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let f = problem.f();
    let g = *problem.grid();
    (0..n)
        .map(|_| {
            let s: f64 = rng.gen_range(0.0..1.0);
            let (a, b, c): (f64, f64, f64) = (
                rng.gen_range(1.0..4.0),
                rng.gen_range(1.0..4.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            );
            let mut out = f.clone();
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let v = f.at(i, j) + amplitude * s * (a * g.x(i) + b * g.y(j) + c).sin();
                    out.set(i, j, v);
                }
            }
            out
        })
        .collect()
}

fn deltas(ctx: &Ctx, at: &At, grid: &Grid2D, multiples: &[usize]) -> Result<Vec<f64>, ConfigError> {
    if multiples.is_empty() || multiples.contains(&0) {
        return Err(ctx.error(at, "need a non-empty list of positive multiples of h"));
    }
    Ok(multiples.iter().map(|&m| m as f64 * grid.h()).collect())
}

fn analytic(
    ctx: &Ctx,
    at: &At,
    raw: &RawAnalytic,
    problem: &ObstacleProblem,
) -> Result<Analytic, ConfigError> {
    let grid = *problem.grid();
    Ok(match raw {
        RawAnalytic::Growth { n_dyadic, x0 } => {
            if *n_dyadic < 2 {
                return Err(ctx.error(&at.child("n_dyadic"), "need at least 2 dyadic radii"));
            }
            Analytic::Growth {
                n_dyadic: *n_dyadic,
                x0: *x0,
            }
        }
        RawAnalytic::Hausdorff {
            radii,
            deltas_h,
            x0,
        } => {
            if radii.is_empty() {
                return Err(ctx.error(&at.child("radii"), "need at least one radius"));
            }
            Analytic::Hausdorff {
                radii: radii.clone(),
                deltas: deltas(ctx, &at.child("deltas_h"), &grid, deltas_h)?,
                x0: *x0,
            }
        }
        RawAnalytic::DegenerateSet {
            r,
            deltas_h,
            x0,
            t_star,
        } => Analytic::DegenerateSet {
            r: *r,
            deltas: deltas(ctx, &at.child("deltas_h"), &grid, deltas_h)?,
            x0: *x0,
            t_star: *t_star,
        },
        RawAnalytic::SecondDerivative { r, x0 } => Analytic::SecondDerivative { r: *r, x0: *x0 },
        RawAnalytic::PenaltyGap { eps } => {
            if !(*eps > 0.0) {
                return Err(ctx.error(&at.child("eps"), "penalty eps must be positive"));
            }
            Analytic::PenaltyGap { eps: *eps }
        }
        RawAnalytic::Entropy {
            singular,
            levels,
            exponent,
        } => {
            let e = ctx.expr(&at.child("singular"), singular, &FIELD_VARS, &FIELD_FUNCS)?;
            if levels.len() < 2 {
                return Err(ctx.error(&at.child("levels"), "need at least two truncation levels"));
            }
            Analytic::Entropy {
                singular: eval_expr(&e, grid, problem.nf()),
                levels: levels.clone(),
                exponent: *exponent,
            }
        }
        RawAnalytic::ManufacturedError { exact } => {
            let e = ctx.expr(&at.child("exact"), exact, &FIELD_VARS, &FIELD_FUNCS)?;
            Analytic::ManufacturedError {
                exact: eval_expr(&e, grid, problem.nf()),
            }
        }
        RawAnalytic::Toolbox { samples, pairs } => {
            if *samples == 0 || *pairs == 0 {
                return Err(ctx.error(at, "samples and pairs must be positive"));
            }
            Analytic::Toolbox {
                samples: *samples,
                pairs: *pairs,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3

[nfunction]
family = "power"
p = 2.0

[grid]
nx = 17

[fields]
f = 1
psi = "0"
g = "atilde(max(x - 0.5, 0))"
"#;

    fn parse_str(text: &str) -> Result<Experiment, ConfigError> {
        parse(text, Path::new("."), "t", None)
    }

    #[test]
    fn minimal_config_builds() {
        let e = parse_str(BASE).unwrap();
        assert_eq!(e.name, "t");
        assert_eq!(e.seed, 3);
        assert_eq!(e.grid().nx(), 17);
        assert_eq!(e.grid().ny(), 17);
        assert_eq!(e.solvers.len(), 1);
        let g = e.problem.g();
        assert!((g.at(16, 3) - 0.125).abs() < 1e-15);
        assert_eq!(e.problem.f().at(3, 3), 1.0);
    }

    #[test]
    fn malformed_expression_reports_its_column() {
        let text = BASE.replace("f = 1", "f = \"x +\"");
        let err = parse_str(&text).unwrap_err();
        let line = text.lines().position(|l| l.starts_with("f =")).unwrap() + 1;
        // `f = "x +"`: the expression starts at column 6 and ends at column 9.
        assert_eq!(err.position, Some((line, 9)), "{err}");
        assert!(err.message.contains("fields.f"));
    }

    #[test]
    fn toml_errors_carry_positions() {
        let err = parse_str("seed = \n").unwrap_err();
        assert_eq!(err.position.map(|p| p.0), Some(1));
        let err = parse_str(&format!("{BASE}\nunknown = 1\n")).unwrap_err();
        assert!(err.position.is_some(), "{err}");
    }

    #[test]
    fn several_methods_need_the_compare_flag() {
        let text = format!("{BASE}\n[solver]\nmethods = [\"active_set\", \"penalty\"]\n");
        assert!(parse_str(&text)
            .unwrap_err()
            .message
            .contains("compare_methods"));
        let text = format!("{BASE}\n[solver]\ncompare_methods = true\n");
        assert_eq!(parse_str(&text).unwrap().solvers.len(), 3);
    }

    #[test]
    fn missing_files_are_config_errors() {
        let text = BASE.replace("f = 1", "f = { file = \"nope.csv\" }");
        let err = parse_str(&text).unwrap_err();
        assert!(err.message.contains("nope.csv"));
        assert!(err.position.is_some());
    }

    #[test]
    fn checks_and_analytics_build() {
        let text = format!(
            "{BASE}
[[checks]]
kind = \"l1_contraction\"
random_pairs = 3

[[checks]]
kind = \"coincidence_stability_l1\"
f2 = 1.1
lambda = 1.0
omega = \"min(y >= 0.25, y <= 0.75)\"

[[analytics]]
kind = \"hausdorff\"
radii = [0.25]
deltas_h = [1, 2]
"
        );
        let e = parse_str(&text).unwrap();
        match &e.checks[0] {
            Check::L1Contraction { others } => assert_eq!(others.len(), 3),
            c => panic!("{c:?}"),
        }
        match &e.checks[1] {
            Check::CoincidenceStabilityL1 { omega, .. } => {
                assert_eq!(omega.iter().filter(|&&b| b).count(), 9 * 17)
            }
            c => panic!("{c:?}"),
        }
        match &e.analytics[0] {
            Analytic::Hausdorff { deltas, .. } => assert_eq!(deltas, &[1.0 / 16.0, 2.0 / 16.0]),
            a => panic!("{a:?}"),
        }
    }

    #[test]
    fn random_sources_follow_the_seed() {
        let e = parse_str(BASE).unwrap();
        let a = random_sources(&e.problem, 2, 0.5, 9);
        let b = random_sources(&e.problem, 2, 0.5, 9);
        let c = random_sources(&e.problem, 2, 0.5, 10);
        assert_eq!(a[1].values(), b[1].values());
        assert_ne!(a[1].values(), c[1].values());
    }

    #[test]
    fn variable_exponent_and_regularized_families() {
        let text = BASE.replace(
            "family = \"power\"\np = 2.0",
            "family = \"regularized\"\neps = 1e-4\nbase = { family = \"variable_exponent\", p = \"2 + 0.5 * t / (1 + t)\" }",
        );
        let e = parse_str(&text).unwrap();
        assert!(
            e.nf().describe().contains("2 + 0.5"),
            "{}",
            e.nf().describe()
        );
        let bad = BASE.replace("p = 2.0", "p = 0.5");
        assert!(parse_str(&bad).unwrap_err().position.is_some());
    }

    #[test]
    fn output_must_stay_relative() {
        let text = format!("output = \"../escape\"\n{BASE}");
        assert!(parse_str(&text).unwrap_err().message.contains("output"));
    }
}
