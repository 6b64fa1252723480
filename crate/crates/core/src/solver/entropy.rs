use serde::Serialize;

use super::{solve, SolveResult, SolverOptions};
use crate::discretization::{truncate, ObstacleProblem};
use crate::error::{domain, Result};
use crate::grid::ScalarField;

#[derive(Debug, Clone, Serialize)]
pub struct EntropyLevel {
    pub level: f64,
    /// `Σ |T_n f| h²` over interior nodes.
    pub source_l1: f64,
    /// Discrete `W^{1,p}` distance to the previous level (absent for the first).
    pub distance_to_previous: Option<f64>,
    /// `Σ |χ_n - χ| h²` against the contact set of the untruncated source.
    pub chi_distance: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub exponent: f64,
    /// Exponents must stay below `(N/(N-1)) a0` with `N = 2`.
    pub exponent_bound: f64,
    pub levels: Vec<EntropyLevel>,
    pub distances_decreasing: bool,
    pub chi_decreasing: bool,
    /// Smallest ratio between consecutive distances.
    pub min_distance_ratio: f64,
}

/// Discrete `W^{1,p}` norm of `u - v`: `(Σ_T (h²/4)|∇w|^p + Σ w_i |w|^p h²)^(1/p)`.
pub fn w1p_distance(u: &ScalarField, v: &ScalarField, p: f64) -> Result<f64> {
    let w = u.zip_map(v, |a, b| a - b)?;
    let g = *w.grid();
    let h = g.h();
    let mut s = 0.0;
    for cj in 0..g.ny() - 1 {
        for ci in 0..g.nx() - 1 {
            let c = [
                w.at(ci, cj),
                w.at(ci + 1, cj),
                w.at(ci, cj + 1),
                w.at(ci + 1, cj + 1),
            ];
            let (db, dt) = ((c[1] - c[0]) / h, (c[3] - c[2]) / h);
            let (dl, dr) = ((c[2] - c[0]) / h, (c[3] - c[1]) / h);
            for (gx, gy) in [(db, dl), (dt, dr), (db, dr), (dt, dl)] {
                s += 0.25 * h * h * gx.hypot(gy).powf(p);
            }
        }
    }
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            s += g.node_weight(i, j) * w.at(i, j).abs().powf(p) * h * h;
        }
    }
    Ok(s.powf(1.0 / p))
}

fn chi_distance(a: &SolveResult, b: &SolveResult) -> f64 {
    let g = a.u.grid();
    let mut count = 0usize;
    for j in 1..g.ny() - 1 {
        for i in 1..g.nx() - 1 {
            let k = g.idx(i, j);
            if a.contact_mask[k] != b.contact_mask[k] {
                count += 1;
            }
        }
    }
    count as f64 * g.h() * g.h()
}

/// Solves the template problem with sources `T_n(f_singular)` for each level
/// and measures how the solutions and contact sets settle as `n` grows.
pub fn entropy_convergence_experiment(
    template: &ObstacleProblem,
    f_singular: &ScalarField,
    levels: &[f64],
    exponent: f64,
    opts: &SolverOptions,
) -> Result<EntropyReport> {
    if levels.is_empty() || levels.iter().any(|&l| !(l > 0.0)) {
        return domain("truncation levels must be positive and nonempty");
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return domain("truncation levels must be increasing");
    }
    let bound = 2.0 * template.nf().a0();
    if !(exponent > 1.0 && exponent < bound) {
        return domain(format!(
            "W^(1,p) exponent {exponent} must lie in (1, {bound})"
        ));
    }
    let reference = solve(&template.with_source(f_singular.clone())?, opts)?;
    let mut results = Vec::with_capacity(levels.len());
    for &n in levels {
        let fn_ = truncate(f_singular, n)?;
        let l1 = fn_.interior_l1();
        let res = solve(&template.with_source(fn_)?, opts)?;
        results.push((n, l1, res));
    }
    let mut out = Vec::with_capacity(levels.len());
    for k in 0..results.len() {
        let (n, l1, ref res) = results[k];
        let distance_to_previous = if k == 0 {
            None
        } else {
            Some(w1p_distance(&res.u, &results[k - 1].2.u, exponent)?)
        };
        out.push(EntropyLevel {
            level: n,
            source_l1: l1,
            distance_to_previous,
            chi_distance: chi_distance(res, &reference),
            iterations: res.iterations,
        });
    }
    let dists: Vec<f64> = out.iter().filter_map(|l| l.distance_to_previous).collect();
    let distances_decreasing = dists.windows(2).all(|w| w[1] <= w[0]);
    let min_distance_ratio = dists
        .windows(2)
        .map(|w| {
            if w[1] == 0.0 {
                f64::INFINITY
            } else {
                w[0] / w[1]
            }
        })
        .fold(f64::INFINITY, f64::min);
    let chi: Vec<f64> = out.iter().map(|l| l.chi_distance).collect();
    let chi_decreasing = chi.windows(2).all(|w| w[1] <= w[0]);
    Ok(EntropyReport {
        exponent,
        exponent_bound: bound,
        levels: out,
        distances_decreasing,
        chi_decreasing,
        min_distance_ratio,
    })
}
