use super::{
    armijo, contact_tol, not_converged, SolveResult, SolverOptions, Workspace, ENERGY_NOISE,
};
use crate::discretization::ObstacleProblem;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linalg::CompensatedSum;

const NAME: &str = "penalty";
/// Gaps below `SNAP * scale` are round-off and are set to zero after each step.
const SNAP: f64 = 64.0 * f64::EPSILON;

/// Antiderivative of `-(1 - θ(s))` with `θ(s) = min(s/eps, 1)`, so that
/// adding `Σ h² defect Φ(u - psi)` to the energy yields the penalized equation.
/// Below the obstacle `θ` continues linearly instead of vanishing. The
/// discrete solution never goes below `psi` (comparison with the obstacle), so
/// this leaves it unchanged, but it removes the flat directions the energy has
/// there when `f = Δ_A psi` and `A` degenerates at zero gradient.
#[inline]
fn phi(s: f64, eps: f64) -> f64 {
    if s < eps {
        -s + 0.5 * s * s / eps
    } else {
        -0.5 * eps
    }
}

#[inline]
fn dphi(s: f64, eps: f64) -> f64 {
    -(1.0 - (s / eps).min(1.0))
}

struct Penalized<'w, 'p> {
    ws: &'w Workspace<'p>,
    /// `h² (f - Δ_A psi)⁺` per unknown.
    weight: Vec<f64>,
    eps: f64,
}

impl Penalized<'_, '_> {
    fn energy(&self, template: &ScalarField, x: &[f64]) -> (f64, f64) {
        let (e, mag) = self.ws.energy(&self.ws.with_unknowns(template, x));
        let mut s = CompensatedSum::default();
        let mut m = mag;
        for k in 0..x.len() {
            let v = self.weight[k] * phi(x[k] - self.ws.lower[k], self.eps);
            s.add(v);
            m += v.abs();
        }
        (e + s.value(), m)
    }

    fn gradient(&self, field: &ScalarField, x: &[f64]) -> Vec<f64> {
        let mut g = self.ws.gradient(field);
        for k in 0..x.len() {
            g[k] += self.weight[k] * dphi(x[k] - self.ws.lower[k], self.eps);
        }
        g
    }

    fn curvature(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let s = x[k] - self.ws.lower[k];
                if s < self.eps {
                    self.weight[k] / self.eps
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Semismooth Newton on the penalized energy, starting from `x`, until
/// `done(x, penalized residual)` or `max_iter` steps. Returns the unknowns,
/// iteration count, residual history and whether `done` was reached.
///
/// Unknowns within round-off of the obstacle are put on it after every step.
/// Linear solves leave O(1e-16) noise in flat contact regions, and for
/// singular densities that noise alone produces residuals far above tolerance.
fn newton(
    pen: &Penalized,
    template: &ScalarField,
    mut x: Vec<f64>,
    done: &dyn Fn(&[f64], f64) -> bool,
    max_iter: usize,
    energies: &mut Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize, Vec<f64>, bool)> {
    let ws = pen.ws;
    let n = ws.n();
    let fixed = vec![false; n];
    let snap = SNAP * ws.scale;
    let residual = |x: &[f64]| {
        let field = ws.with_unknowns(template, x);
        let grad = pen.gradient(&field, x);
        let r = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs())) / ws.h2();
        (field, grad, r)
    };
    let mut history = Vec::new();
    let (mut e, _) = pen.energy(template, &x);
    for it in 0..max_iter {
        let (field, grad, res) = residual(&x);
        history.push(res / ws.scale);
        if done(&x, res) {
            return Ok((x, it, history, true));
        }
        let diag = pen.curvature(&x);
        let mut hess = ws.hessian(&field, &fixed, Some(&diag));
        hess.factor()?;
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let d = hess.solve(&rhs);
        let step = armijo(
            ws,
            |c| pen.energy(template, c),
            |c| pen.gradient(&ws.with_unknowns(template, c), c),
            &x,
            e,
            &grad,
            &d,
            false,
            opts.newton_damping,
        );
        let mut cand = match step {
            Some((cand, _, _)) => cand,
            None => {
                let cand: Vec<f64> = (0..n).map(|k| x[k] + d[k]).collect();
                let (ec, mag) = pen.energy(template, &cand);
                if ec - e <= ENERGY_NOISE * mag && residual(&cand).2 < res {
                    cand
                } else {
                    return Err(not_converged(NAME, it + 1, history));
                }
            }
        };
        for k in 0..n {
            if (cand[k] - ws.lower[k]).abs() <= snap {
                cand[k] = ws.lower[k];
            }
        }
        x = cand;
        e = pen.energy(template, &x).0;
        energies.push(e);
    }
    let res = residual(&x).2;
    history.push(res / ws.scale);
    let ok = done(&x, res);
    Ok((x, max_iter, history, ok))
}

fn weights(ws: &Workspace) -> Vec<f64> {
    let defect = ws.problem.obstacle_defect();
    let h2 = ws.h2();
    ws.unk
        .nodes
        .iter()
        .map(|&n| h2 * defect.values()[n])
        .collect()
}

/// Penalized solve at a single `eps`; `u_eps` is returned as is.
pub(super) fn solve_fixed(
    problem: &ObstacleProblem,
    eps: f64,
    opts: &SolverOptions,
    start: ScalarField,
) -> Result<SolveResult> {
    let ws = Workspace::new(problem, opts);
    let pen = Penalized {
        ws: &ws,
        weight: weights(&ws),
        eps,
    };
    let x0 = ws.unknowns_of(&start);
    let target = opts.inner_tol.min(opts.tol_residual) * ws.scale;
    let mut energies = Vec::new();
    let (x, iters, history, ok) = newton(
        &pen,
        &start,
        x0,
        &|_, r| r <= target,
        opts.max_iter,
        &mut energies,
        opts,
    )?;
    if !ok {
        return Err(not_converged(NAME, iters, history));
    }
    let field = ws.with_unknowns(&start, &x);
    let ctol = contact_tol(problem, opts.tol_residual);
    Ok(ws.finish(NAME, field, ctol, iters, history, energies, true))
}

/// Newton steps allowed per intermediate continuation level; those levels
/// only supply starting points.
const LEVEL_ITER: usize = 30;

/// Continuation `eps, eps/10, ...` down to the contact threshold, warm-starting
/// each level. Intermediate levels are solved to `max(tol, eps/eps0) scale`.
/// On the last level every node in the penalization band counts as contact,
/// where the penalized equation already gives `ξ <= 0`, so Newton runs until
/// the projected iterate meets the complementarity tolerance.
pub(super) fn solve_continuation(
    problem: &ObstacleProblem,
    eps0: f64,
    opts: &SolverOptions,
    start: ScalarField,
) -> Result<SolveResult> {
    let ws = Workspace::new(problem, opts);
    let weight = weights(&ws);
    let mut x = ws.unknowns_of(&start);
    let target = opts.tol_residual * ws.scale;
    let ctol = contact_tol(problem, opts.tol_residual);
    let eps0 = eps0.max(ctol);
    let mut eps = eps0;
    let mut history = Vec::new();
    let mut energies = Vec::new();
    let mut iterations = 0usize;
    let project = |x: &[f64]| -> Vec<f64> { (0..ws.n()).map(|k| x[k].max(ws.lower[k])).collect() };
    let vi_residual = |x: &[f64]| {
        let field = ws.with_unknowns(&start, &project(x));
        ws.residual(&field, &ws.gradient(&field), ctol)
    };
    loop {
        let last = eps <= ctol;
        let pen = Penalized {
            ws: &ws,
            weight: weight.clone(),
            eps,
        };
        let level_tol = target.max(eps / eps0 * ws.scale);
        let done = |x: &[f64], r: f64| {
            if last {
                vi_residual(x) <= target
            } else {
                r <= level_tol
            }
        };
        let max_iter = if last { opts.max_iter } else { LEVEL_ITER };
        let (xn, it, h, ok) = newton(&pen, &start, x, &done, max_iter, &mut energies, opts)
            .map_err(|e| match e {
                Error::NotConverged {
                    iterations: it,
                    residual_history: h,
                    ..
                } => {
                    let mut all = history.clone();
                    all.extend(h);
                    not_converged(NAME, iterations + it, all)
                }
                other => other,
            })?;
        x = xn;
        iterations += it;
        history.extend(h);
        if last {
            if !ok {
                return Err(not_converged(NAME, iterations, history));
            }
            break;
        }
        eps = (eps * 0.1).max(ctol);
    }
    let field = ws.with_unknowns(&start, &project(&x));
    Ok(ws.finish(NAME, field, ctol, iterations, history, energies, true))
}
