//! Discrete A-Laplacian, energy and truncation operators.
//!
//! The scheme is variational. Each grid cell is split into four right
//! triangles (both diagonal triangulations, each weighted by one half), and
//! the gradient energy is the exact integral of `A(|∇u|)` for the piecewise
//! linear interpolants:
//!
//! ```text
//! E(u) = Σ_T (h²/4) A(|G_T u|)
//! ```
//!
//! With the face differences `D_b, D_t` (bottom/top, along x) and `D_l, D_r`
//! (left/right, along y) of a cell, the four triangle gradients are
//! `(D_b, D_l)`, `(D_t, D_r)`, `(D_b, D_r)` and `(D_t, D_l)`. The discrete
//! operator is `Δ_A u = -(1/h²) ∂E/∂u` at interior nodes. For `a(t) = t` this
//! is the 5-point Laplacian, affine fields are exact, and summation by parts
//! holds exactly.

mod problem;

pub use problem::{DataBounds, ObstacleProblem};

use crate::error::{domain, Result};
use crate::grid::{Grid2D, ScalarField, VectorField};
use crate::linalg::{BandedSpd, CompensatedSum};
use crate::nfunction::NFunction;

/// Triangle gradient stencils as corner indices `(x+, x-, y+, y-)`, with cell
/// corners ordered `(0,0), (1,0), (0,1), (1,1)`.
const TRIANGLES: [[usize; 4]; 4] = [[1, 0, 2, 0], [3, 2, 3, 1], [1, 0, 3, 1], [3, 2, 2, 0]];

#[inline]
fn corners(u: &[f64], grid: &Grid2D, ci: usize, cj: usize) -> ([f64; 4], [usize; 4]) {
    let k00 = grid.idx(ci, cj);
    let k = [k00, k00 + 1, k00 + grid.nx(), k00 + grid.nx() + 1];
    ([u[k[0]], u[k[1]], u[k[2]], u[k[3]]], k)
}

#[inline]
fn tri_gradient(c: &[f64; 4], t: &[usize; 4], inv_h: f64) -> [f64; 2] {
    [(c[t[0]] - c[t[1]]) * inv_h, (c[t[2]] - c[t[3]]) * inv_h]
}

/// Cell-centred gradient: the average of the two face differences per axis.
/// Exact for affine fields.
pub fn gradient(u: &ScalarField) -> VectorField {
    let g = *u.grid();
    let inv_h = 1.0 / g.h();
    let mut out = Vec::with_capacity(g.cell_count());
    for cj in 0..g.ny() - 1 {
        for ci in 0..g.nx() - 1 {
            let (c, _) = corners(u.values(), &g, ci, cj);
            out.push([
                0.5 * ((c[1] - c[0]) + (c[3] - c[2])) * inv_h,
                0.5 * ((c[2] - c[0]) + (c[3] - c[1])) * inv_h,
            ]);
        }
    }
    VectorField::from_values(g, out).expect("cell count matches")
}

/// `Σ_T (h²/4) A(|G_T u|)`, compensated.
pub fn gradient_energy(nf: &NFunction, u: &ScalarField) -> f64 {
    let g = *u.grid();
    let inv_h = 1.0 / g.h();
    let w = 0.25 * g.h() * g.h();
    let mut sum = CompensatedSum::default();
    for cj in 0..g.ny() - 1 {
        for ci in 0..g.nx() - 1 {
            let (c, _) = corners(u.values(), &g, ci, cj);
            for t in &TRIANGLES {
                let gt = tri_gradient(&c, t, inv_h);
                sum.add(w * nf.primitive(gt[0].hypot(gt[1])));
            }
        }
    }
    sum.value()
}

/// `Σ_nodes w f u h²` with trapezoid weights `w`.
pub fn source_energy(u: &ScalarField, f: &ScalarField) -> Result<f64> {
    let g = *u.grid();
    g.check_same(f.grid())?;
    let mut sum = CompensatedSum::default();
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            sum.add(g.node_weight(i, j) * f.at(i, j) * u.at(i, j));
        }
    }
    Ok(sum.value() * g.h() * g.h())
}

/// Discrete energy `J(u) = ∫ A(|∇u|) + ∫ f u`.
pub fn energy(nf: &NFunction, u: &ScalarField, f: &ScalarField) -> Result<f64> {
    Ok(gradient_energy(nf, u) + source_energy(u, f)?)
}

/// Adds `∂E/∂u` of the gradient energy to `out` for every node.
pub(crate) fn add_energy_gradient(nf: &NFunction, u: &ScalarField, out: &mut [f64]) {
    let g = *u.grid();
    let inv_h = 1.0 / g.h();
    let w = 0.25 * g.h();
    for cj in 0..g.ny() - 1 {
        for ci in 0..g.nx() - 1 {
            let (c, k) = corners(u.values(), &g, ci, cj);
            for t in &TRIANGLES {
                let q = nf.a_gradient(tri_gradient(&c, t, inv_h));
                out[k[t[0]]] += w * q[0];
                out[k[t[1]]] -= w * q[0];
                out[k[t[2]]] += w * q[1];
                out[k[t[3]]] -= w * q[1];
            }
        }
    }
}

/// `∂E/∂u` of the gradient energy at interior node `(i, j)` when its value
/// is replaced by `v`.
pub(crate) fn node_energy_gradient(
    nf: &NFunction,
    u: &ScalarField,
    i: usize,
    j: usize,
    v: f64,
) -> f64 {
    let g = *u.grid();
    let inv_h = 1.0 / g.h();
    let w = 0.25 * g.h();
    let me = g.idx(i, j);
    let mut out = 0.0;
    for (ci, cj) in [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)] {
        let (mut c, k) = corners(u.values(), &g, ci, cj);
        let slot = k.iter().position(|&n| n == me).expect("node is a corner");
        c[slot] = v;
        for t in &TRIANGLES {
            let q = nf.a_gradient(tri_gradient(&c, t, inv_h));
            out += w * (q[0] * sign(t[0], t[1], slot) + q[1] * sign(t[2], t[3], slot));
        }
    }
    out
}

#[inline]
fn sign(plus: usize, minus: usize, slot: usize) -> f64 {
    (if plus == slot { 1.0 } else { 0.0 }) - (if minus == slot { 1.0 } else { 0.0 })
}

/// Discrete `div(a(|∇u|) ∇u / |∇u|)` at interior nodes; boundary nodes hold 0.
pub fn a_laplacian(nf: &NFunction, u: &ScalarField) -> ScalarField {
    let g = *u.grid();
    let mut d = vec![0.0; g.len()];
    add_energy_gradient(nf, u, &mut d);
    let inv_h2 = 1.0 / (g.h() * g.h());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let k = g.idx(i, j);
            d[k] = if g.is_boundary(i, j) {
                0.0
            } else {
                -d[k] * inv_h2
            };
        }
    }
    ScalarField::from_values(g, d).expect("length matches")
}

/// Pointwise `T_s(v) = max(-s, min(s, v))`.
pub fn truncate(u: &ScalarField, s: f64) -> Result<ScalarField> {
    if !(s > 0.0) {
        return domain(format!("truncation level must be positive, got {s}"));
    }
    Ok(u.map(|v| v.clamp(-s, s)))
}

/// `(T_eps(t))⁺ = clamp(t, 0, eps)`.
pub fn penalty_activation(t: f64, eps: f64) -> f64 {
    t.clamp(0.0, eps)
}

/// Interior nodes numbered row-major; the Hessian of the triangle energy then
/// has half-bandwidth `nx - 1` (interior row length plus one).
#[derive(Debug, Clone)]
pub(crate) struct Unknowns {
    pub map: Vec<usize>,
    pub nodes: Vec<usize>,
    pub bw: usize,
}

pub(crate) const NOT_UNKNOWN: usize = usize::MAX;

impl Unknowns {
    pub fn new(g: &Grid2D) -> Self {
        let mut map = vec![NOT_UNKNOWN; g.len()];
        let mut nodes = Vec::with_capacity(g.interior_count());
        for j in 1..g.ny() - 1 {
            for i in 1..g.nx() - 1 {
                map[g.idx(i, j)] = nodes.len();
                nodes.push(g.idx(i, j));
            }
        }
        Self {
            map,
            nodes,
            bw: g.nx() - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// Hessian of the gradient energy linearized with the regularized density
/// `a_eps`, restricted to unknowns. Unknowns flagged in `fixed` get identity
/// rows; `diag` is added to the diagonal of the remaining ones.
pub(crate) fn assemble_hessian(
    nf: &NFunction,
    u: &ScalarField,
    eps: f64,
    unk: &Unknowns,
    fixed: &[bool],
    diag: Option<&[f64]>,
) -> BandedSpd {
    let g = *u.grid();
    let inv_h = 1.0 / g.h();
    let mut hess = BandedSpd::zeros(unk.len(), unk.bw);
    for cj in 0..g.ny() - 1 {
        for ci in 0..g.nx() - 1 {
            let (c, k) = corners(u.values(), &g, ci, cj);
            let ids = [unk.map[k[0]], unk.map[k[1]], unk.map[k[2]], unk.map[k[3]]];
            let active = |a: usize| ids[a] != NOT_UNKNOWN && !fixed[ids[a]];
            if !(0..4).any(active) {
                continue;
            }
            for t in &TRIANGLES {
                let gt = tri_gradient(&c, t, inv_h);
                let norm = gt[0].hypot(gt[1]);
                let (kappa, da) = nf.regularized_tangent(norm, eps);
                let (m00, m01, m11) = if norm > 0.0 {
                    let (nx, ny) = (gt[0] / norm, gt[1] / norm);
                    let d = da - kappa;
                    (kappa + d * nx * nx, d * nx * ny, kappa + d * ny * ny)
                } else {
                    (kappa, 0.0, kappa)
                };
                let mut sx = [0.0; 4];
                let mut sy = [0.0; 4];
                sx[t[0]] += 1.0;
                sx[t[1]] -= 1.0;
                sy[t[2]] += 1.0;
                sy[t[3]] -= 1.0;
                for a in 0..4 {
                    if !active(a) {
                        continue;
                    }
                    for b in 0..4 {
                        if !active(b) || ids[b] > ids[a] {
                            continue;
                        }
                        let v = 0.25
                            * (m00 * sx[a] * sx[b]
                                + m01 * (sx[a] * sy[b] + sy[a] * sx[b])
                                + m11 * sy[a] * sy[b]);
                        if v != 0.0 {
                            hess.add(ids[a], ids[b], v);
                        }
                    }
                }
            }
        }
    }
    for (n, &f) in fixed.iter().enumerate() {
        if f {
            hess.add(n, n, 1.0);
        } else if let Some(d) = diag {
            hess.add(n, n, d[n]);
        }
    }
    hess
}

#[cfg(test)]
mod tests;
