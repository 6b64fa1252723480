use super::{
    armijo, contact_tol, not_converged, relax_offenders, SolveResult, SolverOptions, Workspace,
    ENERGY_NOISE,
};
use crate::discretization::ObstacleProblem;
use crate::error::Result;
use crate::grid::ScalarField;

const NAME: &str = "projected_descent";

/// Projected Newton: nodes at the obstacle with an outward-pointing gradient
/// are held on the obstacle, Newton runs on the rest, and the step is
/// projected back onto `u >= psi` inside an Armijo search.
pub(super) fn solve(
    problem: &ObstacleProblem,
    opts: &SolverOptions,
    start: ScalarField,
) -> Result<SolveResult> {
    let ws = Workspace::new(problem, opts);
    let ctol = contact_tol(problem, opts.tol_residual);
    let target = opts.tol_residual * ws.scale;
    let template = start;
    let mut x = ws.unknowns_of(&template);
    let energy = |x: &[f64]| ws.energy(&ws.with_unknowns(&template, x));
    let (mut e, _) = energy(&x);
    let mut history = Vec::new();
    let mut energies = vec![e];

    for it in 0..opts.max_iter {
        let field = ws.with_unknowns(&template, &x);
        let grad = ws.gradient(&field);
        let res = ws.residual(&field, &grad, ctol);
        history.push(res / ws.scale);
        if res <= target {
            return Ok(ws.finish(NAME, field, ctol, it, history, energies, true));
        }
        let binding: Vec<bool> = (0..ws.n())
            .map(|k| x[k] - ws.lower[k] <= ctol && grad[k] > 0.0)
            .collect();
        let mut hess = ws.hessian(&field, &binding, None);
        hess.factor()?;
        let rhs: Vec<f64> = (0..ws.n())
            .map(|k| {
                if binding[k] {
                    ws.lower[k] - x[k]
                } else {
                    -grad[k]
                }
            })
            .collect();
        let d = hess.solve(&rhs);
        match armijo(
            &ws,
            energy,
            |c| ws.gradient(&ws.with_unknowns(&template, c)),
            &x,
            e,
            &grad,
            &d,
            true,
            opts.newton_damping,
        ) {
            Some((cand, ec, _)) => {
                x = cand;
                e = ec;
            }
            None => {
                // Near convergence the energy decrease drops below round-off; accept
                // the full step if it is energy-neutral and reduces the residual.
                let cand: Vec<f64> = (0..ws.n())
                    .map(|k| (x[k] + d[k]).max(ws.lower[k]))
                    .collect();
                let (ec, mag) = energy(&cand);
                let cfield = ws.with_unknowns(&template, &cand);
                let cres = ws.residual(&cfield, &ws.gradient(&cfield), ctol);
                if ec - e <= ENERGY_NOISE * mag && cres < res {
                    x = cand;
                    e = ec;
                } else {
                    let relaxed = relax_offenders(&ws, &field, &grad, ctol, target, &|_, _| 0.0);
                    let moved = ws.unknowns_of(&relaxed);
                    if moved == x {
                        return Err(not_converged(NAME, it + 1, history));
                    }
                    x = moved;
                    e = energy(&x).0;
                }
            }
        }
        energies.push(e);
    }
    let field = ws.with_unknowns(&template, &x);
    let grad = ws.gradient(&field);
    let res = ws.residual(&field, &grad, ctol);
    history.push(res / ws.scale);
    if res <= target {
        return Ok(ws.finish(NAME, field, ctol, opts.max_iter, history, energies, true));
    }
    Err(not_converged(NAME, opts.max_iter, history))
}
