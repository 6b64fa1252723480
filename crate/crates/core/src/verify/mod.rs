//! Measurable checks of the main estimates over one or two solve results.
//!
//! Sets are node masks and measures are node counts times `h²`. Set-measure
//! checks absorb one layer of free-boundary cells, where the discrete
//! interface is ambiguous.

use serde::Serialize;
use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use crate::discretization::ObstacleProblem;
use crate::error::{domain, Error, Result};
use crate::freeboundary::{CoincidenceMask, FreeBoundaryCells};
use crate::grid::{Grid2D, ScalarField};
use crate::solver::SolveResult;

/// Relative slack on the right-hand side of the L¹ contraction.
pub const CONTRACTION_REL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub measured_lhs: f64,
    pub measured_rhs: f64,
    /// `<= tolerance` means pass.
    pub violation: f64,
    pub tolerance: f64,
    pub constants: BTreeMap<String, f64>,
    pub pass: bool,
    /// The hypotheses of the estimate do not hold for these inputs; the
    /// report is informational and counts neither as pass nor as fail.
    pub hypothesis_failed: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    HypothesisFailed,
}

impl VerificationReport {
    fn new(name: &str, lhs: f64, rhs: f64, violation: f64, tolerance: f64) -> Self {
        Self {
            check_name: name.to_string(),
            measured_lhs: lhs,
            measured_rhs: rhs,
            violation,
            tolerance,
            constants: BTreeMap::new(),
            pass: violation <= tolerance,
            hypothesis_failed: false,
            notes: Vec::new(),
        }
    }

    fn constant(mut self, name: &str, v: f64) -> Self {
        self.constants.insert(name.to_string(), v);
        self
    }

    fn hypothesis(mut self, failed: bool, note: impl Into<String>) -> Self {
        if failed {
            self.hypothesis_failed = true;
            self.notes.push(note.into());
        }
        self
    }

    pub fn status(&self) -> Status {
        if self.hypothesis_failed {
            Status::HypothesisFailed
        } else if self.pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub hypothesis_failed: usize,
}

pub fn tally(reports: &[VerificationReport]) -> Tally {
    let mut t = Tally::default();
    for r in reports {
        match r.status() {
            Status::Pass => t.pass += 1,
            Status::Fail => t.fail += 1,
            Status::HypothesisFailed => t.hypothesis_failed += 1,
        }
    }
    t
}

/// One row per report: name, status, lhs, rhs, violation, tolerance.
pub fn write_reports_csv<W: Write>(reports: &[VerificationReport], out: W) -> Result<()> {
    let err = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "status", "lhs", "rhs", "violation", "tolerance"])
        .map_err(err)?;
    for r in reports {
        let status = match r.status() {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::HypothesisFailed => "hypothesis_failed",
        };
        w.write_record(&[
            r.check_name.clone(),
            status.to_string(),
            format!("{:e}", r.measured_lhs),
            format!("{:e}", r.measured_rhs),
            format!("{:e}", r.violation),
            format!("{:e}", r.tolerance),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn check_result(res: &SolveResult, p: &ObstacleProblem) -> Result<()> {
    res.u.grid().check_same(p.grid())?;
    if !res.converged {
        return domain(format!("{} result did not converge", res.method));
    }
    Ok(())
}

fn check_operator(p1: &ObstacleProblem, p2: &ObstacleProblem) -> Result<()> {
    p1.grid().check_same(p2.grid())?;
    if p1.nf().describe() != p2.nf().describe() {
        return Err(Error::Mismatch("problems use different N-functions".into()));
    }
    Ok(())
}

/// Same grid, obstacle, boundary data and N-function.
fn check_pair(p1: &ObstacleProblem, p2: &ObstacleProblem) -> Result<()> {
    check_operator(p1, p2)?;
    if p1.psi().max_abs_diff(p2.psi())? != 0.0 {
        return Err(Error::Mismatch("problems use different obstacles".into()));
    }
    if p1.g().max_abs_diff(p2.g())? != 0.0 {
        return Err(Error::Mismatch(
            "problems use different boundary data".into(),
        ));
    }
    Ok(())
}

fn mask(res: &SolveResult) -> Result<CoincidenceMask> {
    CoincidenceMask::from_values(*res.u.grid(), res.contact_mask.clone())
}

fn interior(g: &Grid2D) -> impl Iterator<Item = (usize, usize)> + '_ {
    (1..g.ny() - 1).flat_map(move |j| (1..g.nx() - 1).map(move |i| (i, j)))
}

fn is_zero(f: &ScalarField) -> bool {
    f.values().iter().all(|&v| v == 0.0)
}

/// Nodes that are corners of a free-boundary cell.
fn interface_nodes(m: &CoincidenceMask) -> Vec<bool> {
    let g = *m.grid();
    let mut out = vec![false; g.len()];
    for &(ci, cj) in FreeBoundaryCells::from_mask(m).cells() {
        for (i, j) in [(ci, cj), (ci + 1, cj), (ci, cj + 1), (ci + 1, cj + 1)] {
            out[g.idx(i, j)] = true;
        }
    }
    out
}

/// `f - (f - Δ_A psi)⁺ <= Δ_A u <= f` at interior nodes, with tolerance
/// `10 tol scale` (the result's contact threshold). The largest violation
/// away from the free-boundary cells is reported as a constant: for
/// `p != 2` the discrete operator has no comparison principle, and the lower
/// bound can fail at contact nodes next to the interface.
pub fn check_lewy_stampacchia(
    res: &SolveResult,
    problem: &ObstacleProblem,
) -> Result<VerificationReport> {
    check_result(res, problem)?;
    let g = *problem.grid();
    let lap_psi = problem.obstacle_laplacian();
    let f = problem.f();
    let interface = interface_nodes(&mask(res)?);
    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut away = f64::NEG_INFINITY;
    for (i, j) in interior(&g) {
        let au = res.xi.at(i, j) + f.at(i, j);
        let fi = f.at(i, j);
        let up = au - fi;
        let lo = fi - (fi - lap_psi.at(i, j)).max(0.0) - au;
        upper = upper.max(up);
        lower = lower.max(lo);
        if !interface[g.idx(i, j)] {
            away = away.max(up.max(lo));
        }
    }
    let violation = upper.max(lower);
    Ok(
        VerificationReport::new("lewy_stampacchia", upper, lower, violation, res.contact_tol)
            .constant("upper_excess", upper)
            .constant("lower_excess", lower)
            .constant("violation_off_interface", away),
    )
}

/// `Σ|ξ₁ - ξ₂| h² <= Σ|f₁ - f₂| h²` over interior nodes.
pub fn check_l1_contraction(
    res1: &SolveResult,
    p1: &ObstacleProblem,
    res2: &SolveResult,
    p2: &ObstacleProblem,
) -> Result<VerificationReport> {
    check_pair(p1, p2)?;
    check_result(res1, p1)?;
    check_result(res2, p2)?;
    let g = *p1.grid();
    let h2 = g.h() * g.h();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (i, j) in interior(&g) {
        lhs += (res1.xi.at(i, j) - res2.xi.at(i, j)).abs() * h2;
        rhs += (p1.f().at(i, j) - p2.f().at(i, j)).abs() * h2;
    }
    let tol = res1.contact_tol.max(res2.contact_tol);
    Ok(VerificationReport::new(
        "l1_contraction",
        lhs,
        rhs,
        lhs - rhs * (1.0 + CONTRACTION_REL),
        tol,
    ))
}

/// Measure of the free-boundary cells of either mask with a corner in
/// `omega`, used as interface slack.
fn interface_slack(m1: &CoincidenceMask, m2: &CoincidenceMask, omega: &[bool]) -> f64 {
    let g = *m1.grid();
    let cells: HashSet<(usize, usize)> = FreeBoundaryCells::from_mask(m1)
        .cells()
        .iter()
        .chain(FreeBoundaryCells::from_mask(m2).cells())
        .copied()
        .filter(|&(ci, cj)| {
            [(ci, cj), (ci + 1, cj), (ci, cj + 1), (ci + 1, cj + 1)]
                .iter()
                .any(|&(i, j)| omega[g.idx(i, j)])
        })
        .collect();
    cells.len() as f64 * g.h() * g.h()
}

fn check_omega(g: &Grid2D, omega: &[bool]) -> Result<()> {
    if omega.len() != g.len() {
        return Err(Error::Mismatch(format!(
            "region mask has {} entries, grid has {}",
            omega.len(),
            g.len()
        )));
    }
    Ok(())
}

/// `|(I₁ ÷ I₂) ∩ ω| <= (1/λ) Σ|f₁ - f₂| h²` plus one layer of interface
/// cells. Needs `Δ_A psi - f_i <= -λ` on `ω`; otherwise the report is marked
/// hypothesis-failed.
pub fn check_coincidence_stability_l1(
    res1: &SolveResult,
    p1: &ObstacleProblem,
    res2: &SolveResult,
    p2: &ObstacleProblem,
    lambda: f64,
    omega: &[bool],
) -> Result<VerificationReport> {
    if !(lambda > 0.0) {
        return domain(format!(
            "non-degeneracy constant must be positive, got {lambda}"
        ));
    }
    check_pair(p1, p2)?;
    check_result(res1, p1)?;
    check_result(res2, p2)?;
    let g = *p1.grid();
    check_omega(&g, omega)?;
    let h2 = g.h() * g.h();
    let lap_psi = p1.obstacle_laplacian();
    let mut worst = f64::NEG_INFINITY;
    for (i, j) in interior(&g) {
        if omega[g.idx(i, j)] {
            for p in [p1, p2] {
                worst = worst.max(lap_psi.at(i, j) - p.f().at(i, j));
            }
        }
    }
    let (m1, m2) = (mask(res1)?, mask(res2)?);
    let lhs = m1.symmetric_difference(&m2, Some(omega))? as f64 * h2;
    let df: f64 = interior(&g)
        .map(|(i, j)| (p1.f().at(i, j) - p2.f().at(i, j)).abs() * h2)
        .sum();
    let rhs = df / lambda;
    let slack = interface_slack(&m1, &m2, omega);
    Ok(
        VerificationReport::new("coincidence_stability_l1", lhs, rhs, lhs - rhs, slack)
            .constant("lambda", lambda)
            .constant("max_nondegeneracy", worst)
            .hypothesis(
                worst > -lambda,
                format!("Δ_A psi - f reaches {worst:e} > -λ on ω"),
            ),
    )
}

/// Euclidean distance from every node to the nearest node outside `set`
/// (infinite when `set` is everything).
fn distance_to_complement(g: &Grid2D, set: &[bool]) -> Vec<f64> {
    let outside: Vec<(f64, f64)> = (0..g.len())
        .filter(|&k| !set[k])
        .map(|k| {
            let (i, j) = g.ij(k);
            (g.x(i), g.y(j))
        })
        .collect();
    (0..g.len())
        .map(|k| {
            if !set[k] {
                return 0.0;
            }
            let (i, j) = g.ij(k);
            let (x, y) = (g.x(i), g.y(j));
            outside
                .iter()
                .map(|&(a, b)| (a - x).hypot(b - y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Compares `|(I(u₁) ÷ I(u₂)) ∩ ω'|` with `ε = Ã⁻¹(‖u₁ - u₂‖∞,ω)`, reporting
/// the ratio as the fitted constant `C`, and checks the set sandwich
/// `(I(u₂) ∩ ω')_(-Cε) ⊂ I(u₁) ∩ ω' ⊂ {u₂ - psi <= Ã(ε)}`. The erosion
/// radius carries one cell of slack. Pass means no node violates either
/// inclusion. The two problems may differ in every datum but the operator.
/// Hypotheses: `psi = 0` and `f > 0` on `ω` for both problems.
pub fn check_coincidence_stability_linfty(
    res1: &SolveResult,
    p1: &ObstacleProblem,
    res2: &SolveResult,
    p2: &ObstacleProblem,
    omega: &[bool],
    omega_prime: &[bool],
) -> Result<VerificationReport> {
    check_operator(p1, p2)?;
    check_result(res1, p1)?;
    check_result(res2, p2)?;
    let g = *p1.grid();
    check_omega(&g, omega)?;
    check_omega(&g, omega_prime)?;
    let h = g.h();
    let nf = p1.nf();
    let (m1, m2) = (mask(res1)?, mask(res2)?);
    let lhs = m1.symmetric_difference(&m2, Some(omega_prime))? as f64 * h * h;
    let (u1, u2) = (res1.u.values(), res2.u.values());
    let sup = (0..g.len())
        .filter(|&k| omega[k])
        .map(|k| (u1[k] - u2[k]).abs())
        .fold(0.0, f64::max);
    if sup == 0.0 && lhs > 0.0 {
        return domain(
            "equal solutions on ω with different contact masks: inconsistent contact tolerances",
        );
    }
    let eps = nf.eval_complementary_inv(sup)?;
    let fitted_c = if lhs == 0.0 { 0.0 } else { lhs / eps };

    let radius = fitted_c * eps + h;
    let dist = distance_to_complement(&g, m2.values());
    let level = sup + res1.contact_tol.max(res2.contact_tol);
    let psi2 = p2.psi().values();
    let mut eroded_outside = 0usize;
    let mut above_level = 0usize;
    for k in (0..g.len()).filter(|&k| omega_prime[k]) {
        if m2.values()[k] && dist[k] > radius && !m1.values()[k] {
            eroded_outside += 1;
        }
        if m1.values()[k] && u2[k] - psi2[k] > level {
            above_level += 1;
        }
    }
    let violations = (eroded_outside + above_level) as f64;

    let positive_source = [p1, p2].iter().all(|p| {
        interior(&g).all(|(i, j)| {
            let k = g.idx(i, j);
            !omega[k] || p.f().values()[k] > 0.0
        })
    });
    let zero_obstacle = is_zero(p1.psi()) && is_zero(p2.psi());
    Ok(
        VerificationReport::new("coincidence_stability_linfty", lhs, eps, violations, 0.0)
            .constant("fitted_c", fitted_c)
            .constant("sup_difference", sup)
            .constant("erosion_radius", radius)
            .constant("eroded_outside", eroded_outside as f64)
            .constant("above_level", above_level as f64)
            .hypothesis(!zero_obstacle, "obstacle is not zero")
            .hypothesis(!positive_source, "source is not positive on ω"),
    )
}

/// `Δ_A u - (Δ_A psi - f) χ_contact - f` in discrete L¹ over interior nodes
/// not touching a free-boundary cell. Informational unless `psi = 0`.
pub fn check_semilinear_form(
    res: &SolveResult,
    problem: &ObstacleProblem,
) -> Result<VerificationReport> {
    check_result(res, problem)?;
    let g = *problem.grid();
    let h2 = g.h() * g.h();
    let m = mask(res)?;
    let excluded = interface_nodes(&m);
    let lap_psi = problem.obstacle_laplacian();
    let f = problem.f();
    let mut l1 = 0.0;
    for (i, j) in interior(&g) {
        let k = g.idx(i, j);
        if excluded[k] {
            continue;
        }
        let chi = if m.values()[k] { 1.0 } else { 0.0 };
        l1 += (res.xi.at(i, j) - (lap_psi.at(i, j) - f.at(i, j)) * chi).abs() * h2;
    }
    Ok(
        VerificationReport::new("semilinear_form", l1, 0.0, l1, res.contact_tol).hypothesis(
            !is_zero(problem.psi()),
            "obstacle is not zero; the identity may fail on a set of positive measure",
        ),
    )
}

/// Penalized solutions bracket the constrained one:
/// `u_eps - eps <= u <= u_eps` at every node, up to the contact threshold, and
/// `‖u_eps - u‖∞` shrinks with `eps`. Each run is `(eps, u_eps)`; the runs are
/// sorted by decreasing `eps` before the monotonicity test, whose largest
/// increase counts as violation.
pub fn check_penalty_sandwich(
    res: &SolveResult,
    problem: &ObstacleProblem,
    runs: &[(f64, SolveResult)],
) -> Result<VerificationReport> {
    check_result(res, problem)?;
    if runs.is_empty() {
        return domain("penalty sandwich needs at least one penalized run");
    }
    let mut sorted: Vec<&(f64, SolveResult)> = runs.iter().collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut pointwise = f64::NEG_INFINITY;
    let mut gaps = Vec::with_capacity(sorted.len());
    for (eps, pen) in sorted.iter().map(|r| (r.0, &r.1)) {
        if !(eps > 0.0) {
            return domain(format!("penalty eps must be positive, got {eps}"));
        }
        res.u.grid().check_same(pen.u.grid())?;
        for (&ue, &u) in pen.u.values().iter().zip(res.u.values()) {
            pointwise = pointwise.max(u - ue).max(ue - eps - u);
        }
        gaps.push((eps, pen.u.max_abs_diff(&res.u)?));
    }
    let increase = gaps
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(0.0f64, f64::max);
    let violation = pointwise.max(increase);
    let mut rep = VerificationReport::new(
        "penalty_sandwich",
        pointwise,
        increase,
        violation,
        res.contact_tol,
    )
    .constant("pointwise_excess", pointwise)
    .constant("gap_increase", increase);
    for (eps, gap) in gaps {
        rep = rep.constant(&format!("gap_eps_{eps:e}"), gap);
    }
    Ok(rep)
}
