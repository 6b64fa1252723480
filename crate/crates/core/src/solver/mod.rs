//! Discrete obstacle-problem solvers.
//!
//! All methods minimize the same discrete energy (see [`crate::discretization`])
//! over `{v >= psi, v = g on the boundary}`:
//!
//! * [`Method::ProjectedDescent`]: projected Newton with an Armijo search along
//!   the projection arc; iterates stay feasible and the energy never increases.
//! * [`Method::ActiveSet`]: primal-dual active set; nodes in the active set are
//!   pinned to the obstacle and the rest solve the free equation by damped Newton.
//! * [`Method::Penalty`]: the penalized equation
//!   `-Δ_A u = -f + h (1 - θ_eps(u - psi))` with `h = (f - Δ_A psi)⁺`, solved by
//!   semismooth Newton and driven to the constrained limit by continuation in eps.
//!
//! Newton steps use the Jacobian of the regularized density `a_eps` so that
//! degenerate and singular densities give finite, positive definite systems.

mod active_set;
mod entropy;
mod penalty;
mod projected;

pub use entropy::{entropy_convergence_experiment, EntropyLevel, EntropyReport};

use serde::{Deserialize, Serialize};

use crate::discretization::{
    add_energy_gradient, assemble_hessian, gradient_energy, node_energy_gradient, ObstacleProblem,
    Unknowns,
};
use crate::error::{domain, Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::linalg::{BandedSpd, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    ProjectedDescent,
    /// Penalization started at `eps` and continued towards the constrained limit.
    Penalty {
        eps: f64,
    },
    ActiveSet,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ProjectedDescent => "projected_descent",
            Method::Penalty { .. } => "penalty",
            Method::ActiveSet => "active_set",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub method: Method,
    /// Residual tolerance, relative to [`ObstacleProblem::scale`].
    pub tol_residual: f64,
    pub max_iter: usize,
    /// Initial Newton step length in (0, 1].
    pub newton_damping: f64,
    /// Inner Newton tolerance for the active-set and penalty solves, relative to the scale.
    pub inner_tol: f64,
    /// Overrides [`default_jacobian_eps`].
    pub jacobian_eps: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::ProjectedDescent,
            tol_residual: 1e-8,
            max_iter: 500,
            newton_damping: 1.0,
            inner_tol: 1e-8,
            jacobian_eps: None,
        }
    }
}

impl SolverOptions {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) || self.max_iter == 0 {
            return domain("solver needs tol_residual > 0 and max_iter >= 1");
        }
        if !(self.newton_damping > 0.0 && self.newton_damping <= 1.0) {
            return domain("newton_damping must lie in (0, 1]");
        }
        if let Method::Penalty { eps } = self.method {
            if !(eps > 0.0) {
                return domain("penalty eps must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub method: String,
    pub u: ScalarField,
    /// `Δ_A u - f` at interior nodes, 0 on the boundary.
    pub xi: ScalarField,
    pub contact_mask: Vec<bool>,
    pub contact_tol: f64,
    pub scale: f64,
    pub energy: f64,
    pub iterations: usize,
    /// Normalized residuals, one per iteration.
    pub residual_history: Vec<f64>,
    /// Energy (or penalized energy) after each accepted step.
    pub energy_history: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
}

/// Contact threshold `10 tol scale`.
pub fn contact_tol(problem: &ObstacleProblem, tol_residual: f64) -> f64 {
    10.0 * tol_residual * problem.scale()
}

/// Solves the discrete obstacle problem with the configured method.
pub fn solve(problem: &ObstacleProblem, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    nested(problem, &|p: &ObstacleProblem, start| match opts.method {
        Method::ProjectedDescent => projected::solve(p, opts, start),
        Method::ActiveSet => active_set::solve(p, opts, start),
        Method::Penalty { eps } => penalty::solve_continuation(p, eps, opts, start),
    })
}

/// Solves the penalized problem at a single `eps` and returns `u_eps` without
/// projecting it onto the constraint set. The residual history records the
/// penalized-equation residual.
pub fn solve_penalty(
    problem: &ObstacleProblem,
    eps: f64,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    if !(eps > 0.0) {
        return domain(format!("penalty eps must be positive, got {eps}"));
    }
    opts.validate()?;
    nested(problem, &|p: &ObstacleProblem, start| {
        penalty::solve_fixed(p, eps, opts, start)
    })
}

/// Grids coarser than this are solved from [`initial_iterate`] directly.
const COARSEST: usize = 17;

/// Nested iteration: when both grid dimensions can be halved, the same solve
/// runs on the coarse grid first and its bilinear interpolation becomes the
/// starting iterate. Coarse failures fall back to [`initial_iterate`].
fn nested(
    problem: &ObstacleProblem,
    run: &dyn Fn(&ObstacleProblem, ScalarField) -> Result<SolveResult>,
) -> Result<SolveResult> {
    let start = coarsen(problem)
        .and_then(|coarse| nested(&coarse, run).ok())
        .map(|r| prolong(problem, &r.u))
        .unwrap_or_else(|| initial_iterate(problem));
    run(problem, start)
}

fn coarsen(problem: &ObstacleProblem) -> Option<ObstacleProblem> {
    let g = problem.grid();
    let (nx, ny) = (g.nx(), g.ny());
    if (nx - 1) % 2 != 0 || (ny - 1) % 2 != 0 || nx.min(ny) < 2 * COARSEST - 1 {
        return None;
    }
    let cg = Grid2D::new(nx / 2 + 1, ny / 2 + 1, g.lx(), g.ly()).ok()?;
    let inject = |f: &ScalarField| {
        let mut out = ScalarField::zeros(cg);
        for j in 0..cg.ny() {
            for i in 0..cg.nx() {
                out.set(i, j, f.at(2 * i, 2 * j));
            }
        }
        out
    };
    ObstacleProblem::new(
        problem.nf().clone(),
        inject(problem.f()),
        inject(problem.psi()),
        inject(problem.g()),
    )
    .ok()
}

/// Bilinear interpolation of a coarse solution, lifted onto the obstacle and
/// with the exact boundary data.
fn prolong(problem: &ObstacleProblem, coarse: &ScalarField) -> ScalarField {
    let g = *problem.grid();
    let mut u = ScalarField::zeros(g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let v = if g.is_boundary(i, j) {
                problem.g().at(i, j)
            } else {
                let (ci, cj) = (i / 2, j / 2);
                let (ci1, cj1) = (ci + i % 2, cj + j % 2);
                let v = 0.25
                    * (coarse.at(ci, cj)
                        + coarse.at(ci1, cj)
                        + coarse.at(ci, cj1)
                        + coarse.at(ci1, cj1));
                v.max(problem.psi().at(i, j))
            };
            u.set(i, j, v);
        }
    }
    u
}

/// Max over interior nodes of `|ξ|` off contact and `max(ξ, 0)` on contact.
pub fn complementarity_residual(
    problem: &ObstacleProblem,
    u: &ScalarField,
    contact_tol: f64,
) -> Result<f64> {
    problem.grid().check_same(u.grid())?;
    let ws = Workspace::new(problem, &SolverOptions::default());
    let grad = ws.gradient(u);
    Ok(ws.residual(u, &grad, contact_tol))
}

/// `max(g-harmonic smoothing, psi)`: 20 Jacobi sweeps of the 5-point average
/// starting from the boundary mean.
pub fn initial_iterate(problem: &ObstacleProblem) -> ScalarField {
    let grid = *problem.grid();
    let g = problem.g();
    let mut bsum = 0.0;
    let mut bcount = 0usize;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if grid.is_boundary(i, j) {
                bsum += g.at(i, j);
                bcount += 1;
            }
        }
    }
    let mean = bsum / bcount as f64;
    let mut u = ScalarField::from_fn(grid, |_, _| mean);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if grid.is_boundary(i, j) {
                u.set(i, j, g.at(i, j));
            }
        }
    }
    for _ in 0..20 {
        let prev = u.clone();
        for j in 1..grid.ny() - 1 {
            for i in 1..grid.nx() - 1 {
                let v = 0.25
                    * (prev.at(i - 1, j)
                        + prev.at(i + 1, j)
                        + prev.at(i, j - 1)
                        + prev.at(i, j + 1));
                u.set(i, j, v);
            }
        }
    }
    let psi = problem.psi();
    for j in 1..grid.ny() - 1 {
        for i in 1..grid.nx() - 1 {
            u.set(i, j, u.at(i, j).max(psi.at(i, j)));
        }
    }
    u
}

/// `min(h², a⁻¹(h)², t_tol²)`, where `t_tol = a⁻¹(tol scale h)` is the gradient
/// whose flux moves `ξ` by the residual tolerance. Singular densities need the
/// Jacobian to resolve gradients down to that level.
pub fn default_jacobian_eps(problem: &ObstacleProblem, tol_residual: f64) -> f64 {
    let h = problem.grid().h();
    let nf = problem.nf();
    let mut eps = h * h;
    for s in [h, tol_residual * problem.scale() * h] {
        let t = nf.a_inv(s);
        if t.is_finite() && t > 0.0 {
            eps = eps.min(t * t);
        }
    }
    eps.max(f64::MIN_POSITIVE)
}

/// Shared state for one solve: unknown numbering, source weights and the
/// Jacobian regularization.
pub(crate) struct Workspace<'a> {
    pub problem: &'a ObstacleProblem,
    pub grid: Grid2D,
    pub unk: Unknowns,
    /// `psi` per unknown.
    pub lower: Vec<f64>,
    /// `w f h²` per node.
    src: Vec<f64>,
    pub jac_eps: f64,
    pub scale: f64,
}

impl<'a> Workspace<'a> {
    pub fn new(problem: &'a ObstacleProblem, opts: &SolverOptions) -> Self {
        let grid = *problem.grid();
        let unk = Unknowns::new(&grid);
        let lower = unk
            .nodes
            .iter()
            .map(|&n| problem.psi().values()[n])
            .collect();
        let h2 = grid.h() * grid.h();
        let mut src = vec![0.0; grid.len()];
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                src[grid.idx(i, j)] = grid.node_weight(i, j) * problem.f().at(i, j) * h2;
            }
        }
        let jac_eps = opts
            .jacobian_eps
            .unwrap_or_else(|| default_jacobian_eps(problem, opts.tol_residual));
        Self {
            problem,
            grid,
            unk,
            lower,
            src,
            jac_eps,
            scale: problem.scale(),
        }
    }

    pub fn n(&self) -> usize {
        self.unk.len()
    }

    /// Energy and the magnitude of its summands (for round-off judgements).
    pub fn energy(&self, u: &ScalarField) -> (f64, f64) {
        let eg = gradient_energy(self.problem.nf(), u);
        let mut s = CompensatedSum::default();
        let mut mag = eg.abs();
        for (a, b) in self.src.iter().zip(u.values()) {
            s.add(a * b);
            mag += (a * b).abs();
        }
        (eg + s.value(), mag)
    }

    /// `∂E/∂u` per unknown.
    pub fn gradient(&self, u: &ScalarField) -> Vec<f64> {
        let mut d = vec![0.0; self.grid.len()];
        add_energy_gradient(self.problem.nf(), u, &mut d);
        self.unk.nodes.iter().map(|&n| d[n] + self.src[n]).collect()
    }

    pub fn hessian(&self, u: &ScalarField, fixed: &[bool], diag: Option<&[f64]>) -> BandedSpd {
        assemble_hessian(self.problem.nf(), u, self.jac_eps, &self.unk, fixed, diag)
    }

    pub fn h2(&self) -> f64 {
        self.grid.h() * self.grid.h()
    }

    /// Minimizes the energy over the value of unknown `k` alone, keeping it at
    /// or above the obstacle; `extra(v)` is added to the derivative. The
    /// derivative is nondecreasing in `v`, so bisection finds the minimizer
    /// even where `A` is singular and Newton's local model is useless.
    pub fn relax(&self, u: &mut ScalarField, k: usize, extra: &dyn Fn(f64) -> f64) {
        let n = self.unk.nodes[k];
        let (i, j) = self.grid.ij(n);
        let nf = self.problem.nf();
        let deriv =
            |u: &ScalarField, v: f64| node_energy_gradient(nf, u, i, j, v) + self.src[n] + extra(v);
        let lo0 = self.lower[k];
        if deriv(u, lo0) >= 0.0 {
            u.values_mut()[n] = lo0;
            return;
        }
        let (mut lo, mut hi) = (lo0, u.values()[n].max(lo0));
        let mut step = self.grid.h() * self.grid.h();
        while deriv(u, hi) < 0.0 {
            lo = hi;
            hi += step;
            step *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if deriv(u, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = if deriv(u, hi).abs() < deriv(u, lo).abs() {
            hi
        } else {
            lo
        };
        u.values_mut()[n] = v;
    }

    /// `ξ = -grad / h²` per unknown.
    pub fn xi_unknowns(&self, grad: &[f64]) -> Vec<f64> {
        let inv = 1.0 / self.h2();
        grad.iter().map(|g| -g * inv).collect()
    }

    pub fn residual(&self, u: &ScalarField, grad: &[f64], contact_tol: f64) -> f64 {
        let inv = 1.0 / self.h2();
        let mut r = 0.0_f64;
        for (k, &n) in self.unk.nodes.iter().enumerate() {
            let xi = -grad[k] * inv;
            let gap = u.values()[n] - self.lower[k];
            r = r.max(if gap <= contact_tol {
                xi.max(0.0)
            } else {
                xi.abs()
            });
        }
        r
    }

    pub fn with_unknowns(&self, u: &ScalarField, vals: &[f64]) -> ScalarField {
        let mut out = u.clone();
        let v = out.values_mut();
        for (k, &n) in self.unk.nodes.iter().enumerate() {
            v[n] = vals[k];
        }
        out
    }

    pub fn unknowns_of(&self, u: &ScalarField) -> Vec<f64> {
        self.unk.nodes.iter().map(|&n| u.values()[n]).collect()
    }

    pub fn finish(
        &self,
        method: &str,
        u: ScalarField,
        contact_tol: f64,
        iterations: usize,
        residual_history: Vec<f64>,
        energy_history: Vec<f64>,
        converged: bool,
    ) -> SolveResult {
        let grad = self.gradient(&u);
        let xi_k = self.xi_unknowns(&grad);
        let mut xi = ScalarField::zeros(self.grid);
        for (k, &n) in self.unk.nodes.iter().enumerate() {
            xi.values_mut()[n] = xi_k[k];
        }
        let contact_mask = u
            .values()
            .iter()
            .zip(self.problem.psi().values())
            .map(|(a, b)| a - b <= contact_tol)
            .collect();
        let final_residual = self.residual(&u, &grad, contact_tol) / self.scale;
        let (energy, _) = self.energy(&u);
        SolveResult {
            method: method.to_string(),
            u,
            xi,
            contact_mask,
            contact_tol,
            scale: self.scale,
            energy,
            iterations,
            residual_history,
            energy_history,
            final_residual,
            converged,
        }
    }
}

/// Relative size of energy changes that are indistinguishable from round-off.
pub(crate) const ENERGY_NOISE: f64 = 1e-13;

pub(crate) fn not_converged(method: &str, iterations: usize, history: Vec<f64>) -> Error {
    Error::NotConverged {
        method: method.to_string(),
        iterations,
        last_residual: history.last().copied().unwrap_or(f64::NAN),
        residual_history: history,
    }
}

/// Backtracking Armijo search along `u + α d`, optionally projected onto
/// `max(·, lower)`. Returns the accepted iterate, its energy and `α`.
/// Once the predicted decrease drops below the round-off level of the energy,
/// candidates are ranked by the directional derivative at the candidate
/// instead: a step is accepted if it does not overshoot the line minimum by
/// more than half the initial slope.
#[allow(clippy::too_many_arguments)]
/// One Gauss-Seidel pass of exact single-node minimization over the unknowns
/// whose residual exceeds `target`; `extra(k, v)` is added to the derivative
/// at unknown `k`. Used when the line search cannot make
/// progress: near flat contact regions a singular `A` makes the energy too
/// stiff for any Newton model, but each node on its own is a monotone scalar
/// equation.
pub(crate) fn relax_offenders(
    ws: &Workspace,
    field: &ScalarField,
    grad: &[f64],
    ctol: f64,
    target: f64,
    extra: &dyn Fn(usize, f64) -> f64,
) -> ScalarField {
    let inv = 1.0 / ws.h2();
    let mut u = field.clone();
    for k in 0..ws.n() {
        let xi = -grad[k] * inv;
        let gap = field.values()[ws.unk.nodes[k]] - ws.lower[k];
        let r = if gap <= ctol { xi.max(0.0) } else { xi.abs() };
        if r > target {
            ws.relax(&mut u, k, &|v| extra(k, v));
        }
    }
    u
}

pub(crate) fn armijo<E, G>(
    ws: &Workspace,
    energy: E,
    gradient: G,
    x: &[f64],
    e0: f64,
    grad: &[f64],
    d: &[f64],
    project: bool,
    alpha0: f64,
) -> Option<(Vec<f64>, f64, f64)>
where
    E: Fn(&[f64]) -> (f64, f64),
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut alpha = alpha0;
    let mut noisy = false;
    for attempt in 0..60 {
        let cand: Vec<f64> = (0..x.len())
            .map(|k| {
                let v = x[k] + alpha * d[k];
                if project {
                    v.max(ws.lower[k])
                } else {
                    v
                }
            })
            .collect();
        let slope: f64 = (0..x.len()).map(|k| grad[k] * (cand[k] - x[k])).sum();
        let (e, mag) = energy(&cand);
        if attempt == 0 && slope <= 0.0 && -slope <= ENERGY_NOISE * mag {
            noisy = true;
        }
        if cand.iter().zip(x).all(|(a, b)| a == b) {
            return None;
        }
        if noisy {
            let gc = gradient(&cand);
            let end: f64 = (0..x.len()).map(|k| gc[k] * (cand[k] - x[k])).sum();
            if slope <= 0.0 && end <= -0.5 * slope {
                return Some((cand, e, alpha));
            }
        } else if e <= e0 + 1e-4 * slope.min(0.0) && slope <= 0.0 {
            return Some((cand, e, alpha));
        }
        alpha *= 0.5;
    }
    None
}
