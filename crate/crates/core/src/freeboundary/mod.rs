//! Coincidence set, free boundary and the measurements made on them: box
//! counting, growth fits, the measure of the degenerate-gradient set and the
//! second-derivative energy.
//!
//! Balls are discretized by membership of nodes (or cell centres)
//! `|c - x0| <= r`, ties within `1e-12` included.

use serde::Serialize;
use std::collections::HashSet;

use crate::discretization::gradient;
use crate::error::{domain, Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::nfunction::{NFunction, GRADIENT_FLOOR};

/// Largest radii dropped from exponent fits by default.
pub const DEFAULT_DROP_LARGEST: usize = 2;

const TIE: f64 = 1e-12;

#[inline]
fn in_ball(p: [f64; 2], x0: [f64; 2], r: f64) -> bool {
    (p[0] - x0[0]).hypot(p[1] - x0[1]) <= r * (1.0 + TIE) + TIE
}

/// Nodes where `u - psi <= contact_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMask {
    grid: Grid2D,
    contact: Vec<bool>,
}

impl CoincidenceMask {
    pub fn from_values(grid: Grid2D, contact: Vec<bool>) -> Result<Self> {
        if contact.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "mask has {} entries, grid has {}",
                contact.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, contact })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[bool] {
        &self.contact
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> bool {
        self.contact[self.grid.idx(i, j)]
    }

    pub fn count(&self) -> usize {
        self.contact.iter().filter(|&&c| c).count()
    }

    /// Number of nodes where the masks differ, restricted to `omega` if given.
    pub fn symmetric_difference(
        &self,
        other: &CoincidenceMask,
        omega: Option<&[bool]>,
    ) -> Result<usize> {
        self.grid.check_same(&other.grid)?;
        if let Some(w) = omega {
            if w.len() != self.contact.len() {
                return Err(Error::Mismatch("omega mask does not match the grid".into()));
            }
        }
        Ok((0..self.contact.len())
            .filter(|&k| self.contact[k] != other.contact[k] && omega.is_none_or(|w| w[k]))
            .count())
    }

    /// Contact node with a non-contact 4-neighbour nearest the domain centre;
    /// ties go to the lowest node index.
    pub fn free_boundary_node(&self) -> Option<(usize, usize)> {
        let g = self.grid;
        let centre = [0.5 * g.lx(), 0.5 * g.ly()];
        let mut best: Option<((usize, usize), f64)> = None;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                if !self.at(i, j) {
                    continue;
                }
                let mut nb = Vec::with_capacity(4);
                if i > 0 {
                    nb.push((i - 1, j));
                }
                if i + 1 < g.nx() {
                    nb.push((i + 1, j));
                }
                if j > 0 {
                    nb.push((i, j - 1));
                }
                if j + 1 < g.ny() {
                    nb.push((i, j + 1));
                }
                if nb.iter().all(|&(a, b)| self.at(a, b)) {
                    continue;
                }
                let d = (g.x(i) - centre[0]).hypot(g.y(j) - centre[1]);
                if best.is_none_or(|(_, bd)| d < bd - TIE) {
                    best = Some(((i, j), d));
                }
            }
        }
        best.map(|(n, _)| n)
    }
}

pub fn coincidence_set(
    u: &ScalarField,
    psi: &ScalarField,
    contact_tol: f64,
) -> Result<CoincidenceMask> {
    u.grid().check_same(psi.grid())?;
    if !(contact_tol >= 0.0) {
        return domain(format!(
            "contact tolerance must be nonnegative, got {contact_tol}"
        ));
    }
    let contact = u
        .values()
        .iter()
        .zip(psi.values())
        .map(|(a, b)| a - b <= contact_tol)
        .collect();
    Ok(CoincidenceMask {
        grid: *u.grid(),
        contact,
    })
}

/// Cells with at least one contact and one non-contact corner.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeBoundaryCells {
    grid: Grid2D,
    cells: Vec<(usize, usize)>,
}

impl FreeBoundaryCells {
    pub fn from_mask(mask: &CoincidenceMask) -> Self {
        let g = mask.grid;
        let mut cells = Vec::new();
        for cj in 0..g.ny() - 1 {
            for ci in 0..g.nx() - 1 {
                let c = [
                    mask.at(ci, cj),
                    mask.at(ci + 1, cj),
                    mask.at(ci, cj + 1),
                    mask.at(ci + 1, cj + 1),
                ];
                if c.iter().any(|&v| v) && c.iter().any(|&v| !v) {
                    cells.push((ci, cj));
                }
            }
        }
        Self { grid: g, cells }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Centre of the free-boundary cell nearest the domain centre, ties to
    /// the lowest cell index.
    pub fn nearest_to_centre(&self) -> Option<[f64; 2]> {
        let g = self.grid;
        let centre = [0.5 * g.lx(), 0.5 * g.ly()];
        let mut best: Option<([f64; 2], f64)> = None;
        for &(ci, cj) in &self.cells {
            let c = g.cell_center(ci, cj);
            let d = (c[0] - centre[0]).hypot(c[1] - centre[1]);
            if best.is_none_or(|(_, bd)| d < bd - TIE) {
                best = Some((c, d));
            }
        }
        best.map(|(c, _)| c)
    }

    /// Whether `x` lies within one cell diagonal of a free-boundary cell centre.
    pub fn touches(&self, x: [f64; 2]) -> bool {
        let reach = self.grid.h() * std::f64::consts::SQRT_2;
        self.cells
            .iter()
            .any(|&(ci, cj)| in_ball(self.grid.cell_center(ci, cj), x, reach))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxCount {
    pub r: f64,
    pub delta: f64,
    pub count: usize,
    /// `count · δ^(N-1)`.
    pub estimate: f64,
    /// `estimate / r^(N-1)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HausdorffEstimate {
    pub entries: Vec<BoxCount>,
    /// Largest `estimate / r` over all entries.
    pub fitted_c: f64,
    /// Per radius, max/min of the estimate across δ (1 when all are zero).
    pub spread: Vec<(f64, f64)>,
}

/// Covers the free-boundary cells with centres in `B_r(x0)` by δ-boxes
/// anchored at the origin. δ must be a whole number of cells and `r >= 2δ`.
pub fn hausdorff_box_estimate(
    fb: &FreeBoundaryCells,
    x0: [f64; 2],
    radii: &[f64],
    deltas: &[f64],
) -> Result<HausdorffEstimate> {
    let g = fb.grid;
    let h = g.h();
    let mut entries = Vec::new();
    let mut spread = Vec::new();
    for &r in radii {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for &delta in deltas {
            if delta < h * (1.0 - 1e-9) {
                return Err(Error::Resolution(format!(
                    "box size {delta} is below the grid spacing {h}"
                )));
            }
            let m = (delta / h).round();
            if ((delta / h) - m).abs() > 1e-9 * m {
                return domain(format!("box size {delta} is not a multiple of h = {h}"));
            }
            if r < 2.0 * delta * (1.0 - 1e-12) {
                return domain(format!(
                    "radius {r} must be at least twice the box size {delta}"
                ));
            }
            let m = m as usize;
            let boxes: HashSet<(usize, usize)> = fb
                .cells
                .iter()
                .filter(|&&(ci, cj)| in_ball(g.cell_center(ci, cj), x0, r))
                .map(|&(ci, cj)| (ci / m, cj / m))
                .collect();
            let estimate = boxes.len() as f64 * delta;
            lo = lo.min(estimate);
            hi = hi.max(estimate);
            entries.push(BoxCount {
                r,
                delta,
                count: boxes.len(),
                estimate,
                ratio: estimate / r,
            });
        }
        spread.push((r, if hi == 0.0 { 1.0 } else { hi / lo }));
    }
    let fitted_c = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(HausdorffEstimate {
        entries,
        fitted_c,
        spread,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthFit {
    /// Dyadic radii, strictly decreasing by factor 2.
    pub radii: Vec<f64>,
    pub sup_values: Vec<f64>,
    /// `Ã(r)` for the solution fit, `a⁻¹(r)` for the gradient fit.
    pub reference: Vec<f64>,
    /// `exp(mean(log S - log ref))` over the fitted radii.
    pub fitted_c: f64,
    /// Least-squares slope of `log S` against `log r`.
    pub fitted_exponent: f64,
    pub dropped: usize,
}

impl GrowthFit {
    /// Refits after dropping the `drop_largest` largest radii.
    pub fn refit(&self, drop_largest: usize) -> Result<GrowthFit> {
        let (c, e) = fit(&self.radii, &self.sup_values, &self.reference, drop_largest)?;
        Ok(GrowthFit {
            fitted_c: c,
            fitted_exponent: e,
            dropped: drop_largest,
            ..self.clone()
        })
    }

    /// Whether the sup decreases (weakly) with the radius.
    pub fn monotone(&self) -> bool {
        self.sup_values.windows(2).all(|w| w[1] <= w[0])
    }
}

fn fit(radii: &[f64], values: &[f64], reference: &[f64], drop: usize) -> Result<(f64, f64)> {
    if radii.len() < drop + 2 {
        return domain(format!(
            "need at least two radii after dropping {drop}, have {}",
            radii.len()
        ));
    }
    let pts: Vec<(f64, f64, f64)> = (drop..radii.len())
        .map(|k| (radii[k], values[k], reference[k]))
        .collect();
    if pts.iter().any(|&(_, s, q)| !(s > 0.0) || !(q > 0.0)) {
        return domain("growth fit needs positive sup values; is x0 on the free boundary?");
    }
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let c = (pts.iter().map(|p| p.1.ln() - p.2.ln()).sum::<f64>() / n).exp();
    Ok((c, sxy / sxx))
}

/// Dyadic radii `r_max 2^-j`, `j = 0..=n_dyadic`, with `r_max` the largest
/// power of two not exceeding the distance from `x0` to the boundary.
fn dyadic_radii(g: &Grid2D, x0: [f64; 2], n_dyadic: usize) -> Result<Vec<f64>> {
    let dist = x0[0].min(g.lx() - x0[0]).min(x0[1]).min(g.ly() - x0[1]);
    if !(dist > 0.0) {
        return domain("x0 must lie inside the domain");
    }
    let r_max = 2f64.powi(dist.log2().floor() as i32);
    let radii: Vec<f64> = (0..=n_dyadic)
        .map(|j| r_max / 2f64.powi(j as i32))
        .collect();
    let smallest = *radii.last().expect("nonempty");
    if smallest < g.h() * (1.0 - 1e-12) {
        return Err(Error::Resolution(format!(
            "smallest radius {smallest} is below the grid spacing {}",
            g.h()
        )));
    }
    Ok(radii)
}

fn check_on_boundary(fb: &FreeBoundaryCells, x0: [f64; 2]) -> Result<()> {
    if !fb.touches(x0) {
        return domain(format!(
            "x0 = ({}, {}) is not on the free boundary",
            x0[0], x0[1]
        ));
    }
    Ok(())
}

/// `S(r) = sup_{B_r(x0)} u` on dyadic radii, fitted against `Ã(r)`.
pub fn growth_fit_solution(
    u: &ScalarField,
    fb: &FreeBoundaryCells,
    x0: [f64; 2],
    nf: &NFunction,
    n_dyadic: usize,
) -> Result<GrowthFit> {
    let g = *u.grid();
    g.check_same(fb.grid())?;
    check_on_boundary(fb, x0)?;
    let radii = dyadic_radii(&g, x0, n_dyadic)?;
    let sup_values: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let mut s = f64::NEG_INFINITY;
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    if in_ball([g.x(i), g.y(j)], x0, r) {
                        s = s.max(u.at(i, j));
                    }
                }
            }
            s.max(0.0)
        })
        .collect();
    let reference: Vec<f64> = radii.iter().map(|&r| nf.complementary(r)).collect();
    let (fitted_c, fitted_exponent) = fit(&radii, &sup_values, &reference, DEFAULT_DROP_LARGEST)?;
    Ok(GrowthFit {
        radii,
        sup_values,
        reference,
        fitted_c,
        fitted_exponent,
        dropped: DEFAULT_DROP_LARGEST,
    })
}

/// Nodal gradient magnitude: central differences inside, one-sided on the
/// boundary.
fn nodal_gradient_norm(u: &ScalarField, i: usize, j: usize) -> f64 {
    let g = u.grid();
    let d = |lo: (usize, usize), hi: (usize, usize), steps: usize| {
        (u.at(hi.0, hi.1) - u.at(lo.0, lo.1)) / (steps as f64 * g.h())
    };
    let (il, ih) = (i.saturating_sub(1), (i + 1).min(g.nx() - 1));
    let (jl, jh) = (j.saturating_sub(1), (j + 1).min(g.ny() - 1));
    let gx = d((il, j), (ih, j), ih - il);
    let gy = d((i, jl), (i, jh), jh - jl);
    gx.hypot(gy)
}

/// `sup_{B_r(x0)} |∇u|` over nodal central-difference gradients, fitted
/// against `a⁻¹(r)`. Nodes at distance exactly `r` count, so the sup is not
/// biased towards the interior of the ball.
pub fn growth_fit_gradient(
    u: &ScalarField,
    fb: &FreeBoundaryCells,
    x0: [f64; 2],
    nf: &NFunction,
    n_dyadic: usize,
) -> Result<GrowthFit> {
    let g = *u.grid();
    g.check_same(fb.grid())?;
    check_on_boundary(fb, x0)?;
    let radii = dyadic_radii(&g, x0, n_dyadic)?;
    let sup_values: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let mut s = 0.0_f64;
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    if in_ball([g.x(i), g.y(j)], x0, r) {
                        s = s.max(nodal_gradient_norm(u, i, j));
                    }
                }
            }
            s
        })
        .collect();
    let reference: Vec<f64> = radii.iter().map(|&r| nf.a_inv(r)).collect();
    let (fitted_c, fitted_exponent) = fit(&radii, &sup_values, &reference, DEFAULT_DROP_LARGEST)?;
    Ok(GrowthFit {
        radii,
        sup_values,
        reference,
        fitted_c,
        fitted_exponent,
        dropped: DEFAULT_DROP_LARGEST,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerateMeasure {
    pub delta: f64,
    /// Gradient threshold `a⁻¹(δ)`.
    pub threshold: f64,
    pub measure: f64,
    /// `measure / (δ r^(N-1))`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerateReport {
    pub r: f64,
    pub entries: Vec<DegenerateMeasure>,
    /// Largest ratio over δ.
    pub fitted_c: f64,
    /// Some δ is at or above `a(t*/2)` for the declared `t*`.
    pub hypothesis_warning: bool,
}

/// Measure of `{|∇u| < a⁻¹(δ)} ∩ B_r(x0) ∩ {u > contact_tol}` over cells
/// (cell value = corner average) for each δ.
pub fn measure_degenerate_set(
    u: &ScalarField,
    nf: &NFunction,
    x0: [f64; 2],
    r: f64,
    deltas: &[f64],
    contact_tol: f64,
    t_star: Option<f64>,
) -> Result<DegenerateReport> {
    let g = *u.grid();
    if !(r > 0.0) {
        return domain("radius must be positive");
    }
    let dist = x0[0].min(g.lx() - x0[0]).min(x0[1]).min(g.ly() - x0[1]);
    if 2.0 * r > dist * (1.0 + TIE) {
        return domain(format!("B_2r(x0) with r = {r} leaves the domain"));
    }
    if deltas.iter().any(|&d| !(d > 0.0)) {
        return domain("δ values must be positive");
    }
    let hypothesis_warning = t_star.is_some_and(|t| deltas.iter().any(|&d| d >= nf.a(0.5 * t)));
    let grad = gradient(u);
    let h2 = g.h() * g.h();
    let mut cells = Vec::new();
    for cj in 0..g.ny() - 1 {
        for ci in 0..g.nx() - 1 {
            if !in_ball(g.cell_center(ci, cj), x0, r) {
                continue;
            }
            let avg =
                0.25 * (u.at(ci, cj) + u.at(ci + 1, cj) + u.at(ci, cj + 1) + u.at(ci + 1, cj + 1));
            if avg > contact_tol {
                let v = grad.at(ci, cj);
                cells.push(v[0].hypot(v[1]));
            }
        }
    }
    let entries: Vec<DegenerateMeasure> = deltas
        .iter()
        .map(|&delta| {
            let threshold = nf.a_inv(delta);
            let measure = cells.iter().filter(|&&t| t < threshold).count() as f64 * h2;
            DegenerateMeasure {
                delta,
                threshold,
                measure,
                ratio: measure / (delta * r),
            }
        })
        .collect();
    let fitted_c = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(DegenerateReport {
        r,
        entries,
        fitted_c,
        hypothesis_warning,
    })
}

/// `(1/|B_r|) Σ_{B_r, ∇u ≠ 0} [a(|∇u|)/|∇u| · |D²u|]² h²` with centred
/// differences at nodes (nodes next to the boundary are not used, `|D²u|` is
/// the Frobenius norm) and `|B_r|` the node count times `h²`.
pub fn second_derivative_energy(
    u: &ScalarField,
    nf: &NFunction,
    x0: [f64; 2],
    r: f64,
) -> Result<f64> {
    let g = *u.grid();
    let h = g.h();
    if !(r > 0.0) {
        return domain("radius must be positive");
    }
    let dist = x0[0].min(g.lx() - x0[0]).min(x0[1]).min(g.ly() - x0[1]);
    if r > dist - 2.0 * h + TIE {
        return domain(format!("B_r(x0) with r = {r} reaches the boundary layer"));
    }
    let floor = GRADIENT_FLOOR * u.max_abs().max(1.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in 2..g.ny() - 2 {
        for i in 2..g.nx() - 2 {
            if !in_ball([g.x(i), g.y(j)], x0, r) {
                continue;
            }
            count += 1;
            let gx = (u.at(i + 1, j) - u.at(i - 1, j)) / (2.0 * h);
            let gy = (u.at(i, j + 1) - u.at(i, j - 1)) / (2.0 * h);
            let t = gx.hypot(gy);
            if t <= floor {
                continue;
            }
            let uxx = (u.at(i + 1, j) - 2.0 * u.at(i, j) + u.at(i - 1, j)) / (h * h);
            let uyy = (u.at(i, j + 1) - 2.0 * u.at(i, j) + u.at(i, j - 1)) / (h * h);
            let uxy = (u.at(i + 1, j + 1) - u.at(i + 1, j - 1) - u.at(i - 1, j + 1)
                + u.at(i - 1, j - 1))
                / (4.0 * h * h);
            let d2 = (uxx * uxx + uyy * uyy + 2.0 * uxy * uxy).sqrt();
            let v = nf.a(t) / t * d2;
            sum += v * v;
        }
    }
    if count == 0 {
        return Err(Error::Resolution(format!(
            "B_r(x0) with r = {r} contains no nodes"
        )));
    }
    Ok(sum / count as f64)
}
