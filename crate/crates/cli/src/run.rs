//! One experiment end to end: solve, verify, analyse, persist.

use serde::Serialize;
use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use aobstacle::freeboundary::{
    coincidence_set, growth_fit_gradient, growth_fit_solution, hausdorff_box_estimate,
    measure_degenerate_set, second_derivative_energy, CoincidenceMask, FreeBoundaryCells,
    GrowthFit,
};
use aobstacle::nfunction::toolbox::{measure_toolbox_inequalities, monotonicity_scan};
use aobstacle::solver::{
    entropy_convergence_experiment, solve, solve_penalty, SolveResult, SolverOptions,
};
use aobstacle::verify::{
    check_coincidence_stability_l1, check_coincidence_stability_linfty, check_l1_contraction,
    check_lewy_stampacchia, check_penalty_sandwich, check_semilinear_form, tally,
    write_reports_csv, Status, Tally, VerificationReport,
};
use aobstacle::{Error, Grid2D, ObstacleProblem, ScalarField};

use crate::config::{Analytic, Check, Experiment};
use crate::output::{num, OutputDir};
use crate::plot::{line_plot, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Skip analytics and field dumps.
    pub checks_only: bool,
    /// Write PNG plots (also enabled by the config's `plots` key).
    pub plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
    NotConverged,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSummary {
    pub nfunction: String,
    pub a0: f64,
    pub a1: f64,
    pub grid: Grid2D,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub method: String,
    pub options: SolverOptions,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub energy: f64,
    pub contact_nodes: usize,
    pub contact_tol: f64,
    pub residual_history: Vec<f64>,
}

impl SolverSummary {
    fn new(r: &SolveResult, options: SolverOptions) -> Self {
        Self {
            method: r.method.clone(),
            options,
            converged: r.converged,
            iterations: r.iterations,
            final_residual: r.final_residual,
            energy: r.energy,
            contact_nodes: r.contact_mask.iter().filter(|&&c| c).count(),
            contact_tol: r.contact_tol,
            residual_history: r.residual_history.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticRecord {
    pub kind: String,
    pub result: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub started_unix_s: u64,
    pub elapsed_s: f64,
}

/// Contents of `run.json`. Everything except `timing` is a deterministic
/// function of the config and seed.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub seed: u64,
    pub status: RunStatus,
    pub exit_code: i32,
    pub problem: ProblemSummary,
    pub solvers: Vec<SolverSummary>,
    pub checks: Vec<VerificationReport>,
    pub tally: Tally,
    pub analytics: Vec<AnalyticRecord>,
    pub metrics: BTreeMap<String, f64>,
    pub errors: Vec<String>,
    pub files: Vec<String>,
    pub timing: Timing,
}

enum Failure {
    NotConverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } => Failure::NotConverged(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(format!("i/o: {e}"))
    }
}

struct Run<'a> {
    exp: &'a Experiment,
    out: &'a OutputDir,
    plots: bool,
    metrics: BTreeMap<String, f64>,
    files: Vec<String>,
    errors: Vec<String>,
    not_converged: bool,
    /// Per-kind counter for unique artifact names.
    seen: BTreeMap<&'static str, usize>,
}

impl Run<'_> {
    fn record_failure(&mut self, what: &str, f: Failure) {
        match f {
            Failure::NotConverged(m) => {
                self.not_converged = true;
                self.errors.push(format!("{what}: {m}"));
            }
            Failure::Other(m) => self.errors.push(format!("{what}: {m}")),
        }
    }

    fn tag(&mut self, kind: &'static str) -> String {
        let n = self.seen.entry(kind).or_insert(0);
        *n += 1;
        if *n == 1 {
            kind.to_string()
        } else {
            format!("{kind}_{n}")
        }
    }

    fn metric(&mut self, tag: &str, name: &str, v: f64) {
        self.metrics.insert(format!("{tag}.{name}"), v);
    }

    fn table(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
        self.out.write_table(rel, header, rows)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn field(&mut self, rel: &str, f: &ScalarField) -> Result<(), Failure> {
        aobstacle::io::write_field_csv(f, self.out.writer(rel)?)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn plot(&mut self, rel: &str, series: &[Series]) -> Result<(), Failure> {
        if !self.plots {
            return Ok(());
        }
        line_plot(&self.out.path(rel)?, series, true).map_err(Failure::Other)?;
        self.files.push(rel.to_string());
        Ok(())
    }
}

fn solve_with(problem: &ObstacleProblem, opts: &SolverOptions) -> Result<SolveResult, Failure> {
    let r = solve(problem, opts)?;
    if !r.converged {
        return Err(Failure::NotConverged(format!(
            "{} did not converge",
            r.method
        )));
    }
    Ok(r)
}

fn default_x0(res: &SolveResult, given: Option<[f64; 2]>) -> Result<[f64; 2], Failure> {
    if let Some(x) = given {
        return Ok(x);
    }
    let g = *res.u.grid();
    let mask = CoincidenceMask::from_values(g, res.contact_mask.clone())?;
    let (i, j) = mask
        .free_boundary_node()
        .ok_or_else(|| Failure::Other("the solution has no free boundary".into()))?;
    Ok([g.x(i), g.y(j)])
}

fn run_check(
    run: &mut Run,
    c: &Check,
    res: &SolveResult,
    opts: &SolverOptions,
) -> Result<Vec<VerificationReport>, Failure> {
    let p = &run.exp.problem;
    Ok(match c {
        Check::LewyStampacchia => vec![check_lewy_stampacchia(res, p)?],
        Check::SemilinearForm => vec![check_semilinear_form(res, p)?],
        Check::L1Contraction { others } => {
            let mut out = Vec::new();
            for (k, other) in others.iter().enumerate() {
                let r2 = solve_with(other, opts)?;
                let mut rep = check_l1_contraction(res, p, &r2, other)?;
                if others.len() > 1 {
                    rep.notes
                        .push(format!("pair {} of {}", k + 1, others.len()));
                }
                out.push(rep);
            }
            out
        }
        Check::CoincidenceStabilityL1 {
            other,
            lambda,
            omega,
        } => {
            let r2 = solve_with(other, opts)?;
            vec![check_coincidence_stability_l1(
                res, p, &r2, other, *lambda, omega,
            )?]
        }
        Check::CoincidenceStabilityLinfty {
            other,
            omega,
            omega_prime,
        } => {
            let r2 = solve_with(other, opts)?;
            vec![check_coincidence_stability_linfty(
                res,
                p,
                &r2,
                other,
                omega,
                omega_prime,
            )?]
        }
        Check::PenaltySandwich { eps } => {
            let mut runs = Vec::new();
            for &e in eps {
                runs.push((e, solve_penalty(p, e, opts)?));
            }
            let rep = check_penalty_sandwich(res, p, &runs)?;
            let rows: Vec<Vec<String>> = runs
                .iter()
                .map(|(e, r)| Ok(vec![num(*e), num(r.u.max_abs_diff(&res.u)?)]))
                .collect::<Result<_, Error>>()?;
            let tag = run.tag("penalty_sandwich");
            run.table(&format!("{tag}.csv"), &["eps", "linf_gap"], &rows)?;
            vec![rep]
        }
    })
}

fn growth_rows(name: &str, fit: &GrowthFit) -> Vec<Vec<String>> {
    fit.radii
        .iter()
        .zip(&fit.sup_values)
        .zip(&fit.reference)
        .map(|((r, s), rf)| {
            vec![
                name.to_string(),
                num(*r),
                num(*s),
                num(*rf),
                num(fit.fitted_c),
                num(fit.fitted_exponent),
            ]
        })
        .collect()
}

fn fit_series(fit: &GrowthFit) -> [Series; 2] {
    [
        Series {
            points: fit
                .radii
                .iter()
                .copied()
                .zip(fit.sup_values.iter().copied())
                .collect(),
            dashed: false,
        },
        Series {
            points: fit
                .radii
                .iter()
                .zip(&fit.reference)
                .map(|(&r, &v)| (r, fit.fitted_c * v))
                .collect(),
            dashed: true,
        },
    ]
}

/// Largest distance from a free-boundary cell of either mask to the nearest
/// one of the other (infinite when exactly one is empty).
pub fn free_boundary_distance(a: &CoincidenceMask, b: &CoincidenceMask) -> f64 {
    let ca: Vec<[f64; 2]> = FreeBoundaryCells::from_mask(a)
        .cells()
        .iter()
        .map(|&(i, j)| a.grid().cell_center(i, j))
        .collect();
    let cb: Vec<[f64; 2]> = FreeBoundaryCells::from_mask(b)
        .cells()
        .iter()
        .map(|&(i, j)| b.grid().cell_center(i, j))
        .collect();
    if ca.is_empty() && cb.is_empty() {
        return 0.0;
    }
    if ca.is_empty() || cb.is_empty() {
        return f64::INFINITY;
    }
    let one_way = |from: &[[f64; 2]], to: &[[f64; 2]]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
    };
    one_way(&ca, &cb).max(one_way(&cb, &ca))
}

fn run_analytic(
    run: &mut Run,
    a: &Analytic,
    res: &SolveResult,
    opts: &SolverOptions,
) -> Result<serde_json::Value, Failure> {
    let p = &run.exp.problem;
    let nf = p.nf();
    let tag = run.tag(a.kind());
    Ok(match a {
        Analytic::Growth { n_dyadic, x0 } => {
            let x0 = default_x0(res, *x0)?;
            let mask = CoincidenceMask::from_values(*p.grid(), res.contact_mask.clone())?;
            let fb = FreeBoundaryCells::from_mask(&mask);
            let sol = growth_fit_solution(&res.u, &fb, x0, nf, *n_dyadic)?;
            let grad = growth_fit_gradient(&res.u, &fb, x0, nf, *n_dyadic)?;
            run.metric(&tag, "solution_exponent", sol.fitted_exponent);
            run.metric(&tag, "solution_c", sol.fitted_c);
            run.metric(&tag, "gradient_exponent", grad.fitted_exponent);
            run.metric(&tag, "gradient_c", grad.fitted_c);
            let mut rows = growth_rows("solution", &sol);
            rows.extend(growth_rows("gradient", &grad));
            run.table(
                &format!("{tag}_fit.csv"),
                &[
                    "quantity",
                    "r",
                    "sup",
                    "reference",
                    "fitted_c",
                    "fitted_exponent",
                ],
                &rows,
            )?;
            let mut series: Vec<Series> = fit_series(&sol).into();
            series.extend(fit_series(&grad));
            run.plot(&format!("plots/{tag}_fit.png"), &series)?;
            serde_json::json!({ "x0": x0, "solution": json(&sol), "gradient": json(&grad) })
        }
        Analytic::Hausdorff { radii, deltas, x0 } => {
            let x0 = default_x0(res, *x0)?;
            let mask = CoincidenceMask::from_values(*p.grid(), res.contact_mask.clone())?;
            let fb = FreeBoundaryCells::from_mask(&mask);
            let est = hausdorff_box_estimate(&fb, x0, radii, deltas)?;
            run.metric(&tag, "max_ratio", est.fitted_c);
            run.metric(
                &tag,
                "max_spread",
                est.spread.iter().map(|s| s.1).fold(1.0, f64::max),
            );
            let rows: Vec<Vec<String>> = est
                .entries
                .iter()
                .map(|e| {
                    vec![
                        num(e.r),
                        num(e.delta),
                        e.count.to_string(),
                        num(e.estimate),
                        num(e.ratio),
                    ]
                })
                .collect();
            run.table(
                &format!("{tag}_box_count.csv"),
                &["r", "delta", "count", "estimate", "ratio"],
                &rows,
            )?;
            let series: Vec<Series> = radii
                .iter()
                .map(|&r| Series {
                    points: est
                        .entries
                        .iter()
                        .filter(|e| e.r == r)
                        .map(|e| (e.delta, e.estimate))
                        .collect(),
                    dashed: false,
                })
                .collect();
            run.plot(&format!("plots/{tag}_box_count.png"), &series)?;
            serde_json::json!({ "x0": x0, "estimate": json(&est) })
        }
        Analytic::DegenerateSet {
            r,
            deltas,
            x0,
            t_star,
        } => {
            let x0 = default_x0(res, *x0)?;
            let rep = measure_degenerate_set(&res.u, nf, x0, *r, deltas, res.contact_tol, *t_star)?;
            let ratios = rep.entries.iter().map(|e| e.ratio);
            run.metric(
                &tag,
                "min_ratio",
                ratios.clone().fold(f64::INFINITY, f64::min),
            );
            run.metric(&tag, "max_ratio", ratios.fold(f64::NEG_INFINITY, f64::max));
            let rows: Vec<Vec<String>> = rep
                .entries
                .iter()
                .map(|e| vec![num(e.delta), num(e.threshold), num(e.measure), num(e.ratio)])
                .collect();
            run.table(
                &format!("{tag}.csv"),
                &["delta", "threshold", "measure", "ratio"],
                &rows,
            )?;
            serde_json::json!({ "x0": x0, "report": json(&rep) })
        }
        Analytic::SecondDerivative { r, x0 } => {
            let x0 = default_x0(res, *x0)?;
            let e = second_derivative_energy(&res.u, nf, x0, *r)?;
            run.metric(&tag, "energy", e);
            serde_json::json!({ "x0": x0, "r": r, "energy": e })
        }
        Analytic::PenaltyGap { eps } => {
            let pen = solve_penalty(p, *eps, opts)?;
            let gap = pen.u.max_abs_diff(&res.u)?;
            run.metric(&tag, "linf", gap);
            serde_json::json!({ "eps": eps, "linf": gap, "iterations": pen.iterations })
        }
        Analytic::Entropy {
            singular,
            levels,
            exponent,
        } => {
            let rep = entropy_convergence_experiment(p, singular, levels, *exponent, opts)?;
            run.metric(&tag, "min_distance_ratio", rep.min_distance_ratio);
            run.metric(
                &tag,
                "distances_decreasing",
                f64::from(u8::from(rep.distances_decreasing)),
            );
            run.metric(
                &tag,
                "chi_decreasing",
                f64::from(u8::from(rep.chi_decreasing)),
            );
            let rows: Vec<Vec<String>> = rep
                .levels
                .iter()
                .map(|l| {
                    vec![
                        num(l.level),
                        num(l.source_l1),
                        l.distance_to_previous.map(num).unwrap_or_default(),
                        num(l.chi_distance),
                        l.iterations.to_string(),
                    ]
                })
                .collect();
            run.table(
                &format!("{tag}.csv"),
                &[
                    "level",
                    "source_l1",
                    "distance_to_previous",
                    "chi_distance",
                    "iterations",
                ],
                &rows,
            )?;
            json(&rep)
        }
        Analytic::ManufacturedError { exact } => {
            let linf = res.u.max_abs_diff(exact)?;
            let computed = CoincidenceMask::from_values(*p.grid(), res.contact_mask.clone())?;
            let reference = coincidence_set(exact, p.psi(), 0.0)?;
            let d = free_boundary_distance(&computed, &reference);
            let h = p.grid().h();
            run.metric(&tag, "linf_error", linf);
            run.metric(&tag, "fb_distance", d);
            run.metric(&tag, "fb_distance_h", d / h);
            serde_json::json!({ "linf_error": linf, "fb_distance": d, "fb_distance_h": d / h })
        }
        Analytic::Toolbox { samples, pairs } => {
            let seed = run.exp.seed;
            let rep = measure_toolbox_inequalities(nf, *samples, seed)?;
            let scan = monotonicity_scan(nf, *pairs, seed);
            run.metric(&tag, "max_violation", rep.max_violation);
            run.metric(&tag, "min_relative_pairing", scan.min_relative_pairing);
            let rows: Vec<Vec<String>> = rep
                .inequalities
                .iter()
                .map(|s| {
                    vec![
                        s.name.clone(),
                        num(s.max_violation),
                        num(s.worst_s),
                        num(s.worst_t),
                    ]
                })
                .collect();
            run.table(
                &format!("{tag}.csv"),
                &["inequality", "max_violation", "worst_s", "worst_t"],
                &rows,
            )?;
            serde_json::json!({ "inequalities": json(&rep), "monotonicity": json(&scan) })
        }
    })
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Runs `exp`, writing every artifact into `out`, and returns the record that
/// was saved as `run.json`.
pub fn run_experiment(
    exp: &Experiment,
    out: &OutputDir,
    opts: RunOptions,
) -> std::io::Result<RunRecord> {
    let started = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let p = &exp.problem;
    let mut run = Run {
        exp,
        out,
        plots: opts.plots || exp.plots,
        metrics: BTreeMap::new(),
        files: Vec::new(),
        errors: Vec::new(),
        not_converged: false,
        seen: BTreeMap::new(),
    };
    let mut solvers = Vec::new();
    let mut results = Vec::new();
    for o in &exp.solvers {
        match solve(p, o) {
            Ok(r) => {
                solvers.push(SolverSummary::new(&r, *o));
                if !r.converged {
                    run.not_converged = true;
                    run.errors.push(format!("{} did not converge", r.method));
                }
                results.push(r);
            }
            Err(e) => run.record_failure(o.method.name(), e.into()),
        }
    }
    let mut checks = Vec::new();
    let mut analytics = Vec::new();
    if !run.not_converged && run.errors.is_empty() {
        let res = &results[0];
        let opts0 = exp.solvers[0];
        for r in results.iter().skip(1) {
            if let Ok(d) = r.u.max_abs_diff(&res.u) {
                run.metrics
                    .insert(format!("compare.{}.linf_diff", r.method), d);
            }
        }
        for c in &exp.checks {
            match run_check(&mut run, c, res, &opts0) {
                Ok(reps) => checks.extend(reps),
                Err(f) => run.record_failure(c.kind(), f),
            }
        }
        if !opts.checks_only {
            for a in &exp.analytics {
                match run_analytic(&mut run, a, res, &opts0) {
                    Ok(v) => analytics.push(AnalyticRecord {
                        kind: a.kind().to_string(),
                        result: v,
                    }),
                    Err(f) => run.record_failure(a.kind(), f),
                }
            }
            let mut dump = |rel: &str, f: &ScalarField| {
                if let Err(e) = run.field(rel, f) {
                    run.record_failure(rel, e);
                }
            };
            let contact = ScalarField::from_values(
                *p.grid(),
                res.contact_mask
                    .iter()
                    .map(|&c| if c { 1.0 } else { 0.0 })
                    .collect(),
            )
            .expect("mask matches the grid");
            dump("fields/u.csv", &res.u);
            dump("fields/xi.csv", &res.xi);
            dump("fields/contact.csv", &contact);
            for r in results.iter().skip(1) {
                dump(&format!("fields/u_{}.csv", r.method), &r.u);
            }
        }
    }
    let t = tally(&checks);
    let (status, exit_code) = if run.not_converged {
        (RunStatus::NotConverged, EXIT_NOT_CONVERGED)
    } else if !run.errors.is_empty() {
        (RunStatus::Error, EXIT_CHECK_FAILED)
    } else if t.fail > 0 {
        (RunStatus::Fail, EXIT_CHECK_FAILED)
    } else {
        (RunStatus::Pass, EXIT_OK)
    };
    if !checks.is_empty() {
        write_reports_csv(&checks, out.writer("checks.csv")?).map_err(std::io::Error::other)?;
        run.files.push("checks.csv".into());
    }
    if !run.metrics.is_empty() {
        let rows: Vec<Vec<String>> = run
            .metrics
            .iter()
            .map(|(k, v)| vec![k.clone(), num(*v)])
            .collect();
        out.write_table("metrics.csv", &["metric", "value"], &rows)?;
        run.files.push("metrics.csv".into());
    }
    run.files.push("run.json".into());
    let record = RunRecord {
        name: exp.name.clone(),
        seed: exp.seed,
        status,
        exit_code,
        problem: ProblemSummary {
            nfunction: p.nf().describe(),
            a0: p.nf().a0(),
            a1: p.nf().a1(),
            grid: *p.grid(),
            scale: p.scale(),
        },
        solvers,
        checks,
        tally: t,
        analytics,
        metrics: run.metrics,
        errors: run.errors,
        files: run.files,
        timing: Timing {
            started_unix_s,
            elapsed_s: started.elapsed().as_secs_f64(),
        },
    };
    let mut text = serde_json::to_string_pretty(&record).map_err(std::io::Error::other)?;
    text.push('\n');
    out.write_bytes("run.json", text.as_bytes())?;
    Ok(record)
}

/// One line per check, as printed by the CLI.
pub fn check_lines(record: &RunRecord) -> Vec<String> {
    record
        .checks
        .iter()
        .map(|c| {
            let status = match c.status() {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::HypothesisFailed => "INFO",
            };
            let note = if c.notes.is_empty() {
                String::new()
            } else {
                format!(" ({})", c.notes.join("; "))
            };
            format!(
                "{status} {} violation={:e} tolerance={:e}{note}",
                c.check_name, c.violation, c.tolerance
            )
        })
        .collect()
}
