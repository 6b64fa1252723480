use super::{
    armijo, contact_tol, not_converged, SolveResult, SolverOptions, Workspace, ENERGY_NOISE,
};
use crate::discretization::ObstacleProblem;
use crate::error::Result;
use crate::grid::ScalarField;

const NAME: &str = "active_set";
const MAX_INNER: usize = 200;

/// Primal-dual active set. With the active set pinned to the obstacle the
/// inactive nodes minimize the energy by damped Newton (inexactly while the
/// set is still moving); then nodes with a nonpositive multiplier leave the
/// set and inactive nodes below the obstacle enter it.
pub(super) fn solve(
    problem: &ObstacleProblem,
    opts: &SolverOptions,
    start: ScalarField,
) -> Result<SolveResult> {
    let ws = Workspace::new(problem, opts);
    let ctol = contact_tol(problem, opts.tol_residual);
    let target = opts.tol_residual * ws.scale;
    let template = start;
    let energy = |x: &[f64]| ws.energy(&ws.with_unknowns(&template, x));
    let mut x = ws.unknowns_of(&template);
    let mut active: Vec<bool> = {
        let grad = ws.gradient(&template);
        (0..ws.n())
            .map(|k| x[k] <= ws.lower[k] && grad[k] > 0.0)
            .collect()
    };
    let mut history = Vec::new();
    let mut energies = Vec::new();
    let mut newton_steps = 0usize;
    let mut outer_res = f64::INFINITY;

    for _outer in 0..opts.max_iter {
        for k in 0..ws.n() {
            if active[k] {
                x[k] = ws.lower[k];
            }
        }
        let inner_target = (0.5 * target).max(1e-2 * outer_res.min(1e300));
        let (mut e, _) = energy(&x);
        for _ in 0..MAX_INNER {
            let field = ws.with_unknowns(&template, &x);
            let grad = ws.gradient(&field);
            let inner_res = (0..ws.n())
                .filter(|&k| !active[k])
                .fold(0.0_f64, |m, k| m.max(grad[k].abs()))
                / ws.h2();
            if inner_res <= inner_target {
                break;
            }
            let mut hess = ws.hessian(&field, &active, None);
            hess.factor()?;
            let rhs: Vec<f64> = (0..ws.n())
                .map(|k| if active[k] { 0.0 } else { -grad[k] })
                .collect();
            let d = hess.solve(&rhs);
            newton_steps += 1;
            match armijo(
                &ws,
                energy,
                |c| ws.gradient(&ws.with_unknowns(&template, c)),
                &x,
                e,
                &grad,
                &d,
                false,
                opts.newton_damping,
            ) {
                Some((cand, ec, _)) => {
                    x = cand;
                    e = ec;
                }
                None => {
                    let cand: Vec<f64> = (0..ws.n()).map(|k| x[k] + d[k]).collect();
                    let (ec, mag) = energy(&cand);
                    if ec - e <= ENERGY_NOISE * mag {
                        x = cand;
                        e = ec;
                    } else {
                        break;
                    }
                }
            }
            energies.push(e);
            if newton_steps > opts.max_iter * 10 {
                return Err(not_converged(NAME, newton_steps, history));
            }
        }

        let field = ws.with_unknowns(&template, &x);
        let grad = ws.gradient(&field);
        let res = ws.residual(&field, &grad, ctol);
        let below = (0..ws.n()).any(|k| !active[k] && x[k] < ws.lower[k] - ctol);
        history.push(if below { f64::INFINITY } else { res / ws.scale });
        outer_res = res;

        let next: Vec<bool> = (0..ws.n())
            .map(|k| {
                if active[k] {
                    grad[k] > 0.0
                } else {
                    x[k] < ws.lower[k]
                }
            })
            .collect();
        if next == active && res <= target {
            let clipped: Vec<f64> = (0..ws.n()).map(|k| x[k].max(ws.lower[k])).collect();
            let field = ws.with_unknowns(&template, &clipped);
            return Ok(ws.finish(NAME, field, ctol, newton_steps, history, energies, true));
        }
        active = next;
    }
    Err(not_converged(NAME, newton_steps, history))
}
