use serde::{Deserialize, Serialize};

use super::a_laplacian;
use crate::error::{domain, Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::nfunction::NFunction;

/// Optional a-priori bounds on the data: `lambda0 <= f <= lambda1` and `|u| <= m0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DataBounds {
    pub lambda0: Option<f64>,
    pub lambda1: Option<f64>,
    pub m0: Option<f64>,
}

/// One instance: minimize `∫ A(|∇v|) + ∫ f v` over `v >= psi` with `v = g` on the boundary.
#[derive(Debug, Clone)]
pub struct ObstacleProblem {
    nf: NFunction,
    f: ScalarField,
    psi: ScalarField,
    g: ScalarField,
    bounds: DataBounds,
}

impl ObstacleProblem {
    /// Fails with [`Error::Infeasible`] when `psi > g` somewhere on the boundary.
    pub fn new(nf: NFunction, f: ScalarField, psi: ScalarField, g: ScalarField) -> Result<Self> {
        let grid = *f.grid();
        grid.check_same(psi.grid())?;
        grid.check_same(g.grid())?;
        for (name, field) in [("f", &f), ("psi", &psi), ("g", &g)] {
            if !field.is_finite() {
                return domain(format!("{name} has non-finite values"));
            }
        }
        let tol = 1e-12 * (1.0 + g.boundary_max_abs());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                if grid.is_boundary(i, j) && psi.at(i, j) > g.at(i, j) + tol {
                    return Err(Error::Infeasible(format!(
                        "obstacle exceeds boundary data at node ({i}, {j}): {} > {}",
                        psi.at(i, j),
                        g.at(i, j)
                    )));
                }
            }
        }
        Ok(Self {
            nf,
            f,
            psi,
            g,
            bounds: DataBounds::default(),
        })
    }

    /// Attaches data bounds, checking `lambda0 <= f <= lambda1` at interior nodes.
    pub fn with_bounds(mut self, bounds: DataBounds) -> Result<Self> {
        let grid = *self.grid();
        for j in 1..grid.ny() - 1 {
            for i in 1..grid.nx() - 1 {
                let v = self.f.at(i, j);
                if bounds.lambda0.is_some_and(|l| v < l) || bounds.lambda1.is_some_and(|l| v > l) {
                    return domain(format!("f = {v} at ({i}, {j}) violates the stated bounds"));
                }
            }
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid2D {
        self.f.grid()
    }

    pub fn nf(&self) -> &NFunction {
        &self.nf
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn psi(&self) -> &ScalarField {
        &self.psi
    }

    pub fn g(&self) -> &ScalarField {
        &self.g
    }

    pub fn bounds(&self) -> &DataBounds {
        &self.bounds
    }

    /// Same obstacle and boundary data with a different source.
    pub fn with_source(&self, f: ScalarField) -> Result<Self> {
        self.grid().check_same(f.grid())?;
        let mut p = self.clone();
        p.f = f;
        p.bounds = DataBounds::default();
        Ok(p)
    }

    /// Residual normalization `Σ_int |f| h² + max_∂ |g|`, floored at the
    /// smallest positive normal so tolerances never collapse to 0.
    pub fn scale(&self) -> f64 {
        (self.f.interior_l1() + self.g.boundary_max_abs()).max(f64::MIN_POSITIVE)
    }

    /// Discrete `Δ_A psi`.
    pub fn obstacle_laplacian(&self) -> ScalarField {
        a_laplacian(&self.nf, &self.psi)
    }

    /// `(f - Δ_A psi)⁺` at interior nodes, 0 on the boundary.
    pub fn obstacle_defect(&self) -> ScalarField {
        let lap = self.obstacle_laplacian();
        let grid = *self.grid();
        let mut out = ScalarField::zeros(grid);
        for j in 1..grid.ny() - 1 {
            for i in 1..grid.nx() - 1 {
                out.set(i, j, (self.f.at(i, j) - lap.at(i, j)).max(0.0));
            }
        }
        out
    }
}
