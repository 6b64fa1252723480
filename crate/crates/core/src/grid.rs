//! Uniform rectangular node grids and the fields that live on them.
//!
//! Node `(i, j)` sits at `(i h, j h)` for `0 <= i < nx`, `0 <= j < ny`; node
//! counts include the boundary layer. Values are stored row-major with `j` outer.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    h: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return domain(format!(
                "grid needs at least 3 nodes per axis, got {nx}x{ny}"
            ));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return domain("grid side lengths must be positive and finite");
        }
        let hx = lx / (nx - 1) as f64;
        let hy = ly / (ny - 1) as f64;
        if (hx - hy).abs() > 1e-12 * lx {
            return domain(format!("grid spacing must be uniform: hx={hx}, hy={hy}"));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            h: hx,
        })
    }

    /// `n x n` nodes on the unit square.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn interior_count(&self) -> usize {
        (self.nx - 2) * (self.ny - 2)
    }

    pub fn cell_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    /// Cells are indexed by their lower-left node.
    #[inline]
    pub fn cell_idx(&self, ci: usize, cj: usize) -> usize {
        cj * (self.nx - 1) + ci
    }

    #[inline]
    pub fn cell_center(&self, ci: usize, cj: usize) -> [f64; 2] {
        [(ci as f64 + 0.5) * self.h, (cj as f64 + 0.5) * self.h]
    }

    /// Trapezoid weight of a node: 1 inside, 1/2 on edges, 1/4 at corners.
    #[inline]
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
        wx * wy
    }

    pub fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self != other {
            return Err(Error::Mismatch(format!(
                "grids differ: {}x{} on {}x{} vs {}x{} on {}x{}",
                self.nx, self.ny, self.lx, self.ly, other.nx, other.ny, other.lx, other.ly
            )));
        }
        Ok(())
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn<F: FnMut(f64, f64) -> f64>(grid: Grid2D, mut f: F) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn boundary_max_abs(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0_f64;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                if g.is_boundary(i, j) {
                    m = m.max(self.at(i, j).abs());
                }
            }
        }
        m
    }

    /// `Σ |v| h²` over interior nodes.
    pub fn interior_l1(&self) -> f64 {
        let g = &self.grid;
        let mut s = 0.0;
        for j in 1..g.ny() - 1 {
            for i in 1..g.nx() - 1 {
                s += self.at(i, j).abs();
            }
        }
        s * g.h() * g.h()
    }

    /// `max |self - other|` over all nodes.
    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// One 2-vector per grid cell, located at the cell centre.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid2D,
    values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn from_values(grid: Grid2D, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Mismatch(format!(
                "vector field has {} cells, grid has {}",
                values.len(),
                grid.cell_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    #[inline]
    pub fn at(&self, ci: usize, cj: usize) -> [f64; 2] {
        self.values[self.grid.cell_idx(ci, cj)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = Grid2D::new(5, 3, 2.0, 1.0).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.len(), 15);
        assert_eq!(g.idx(4, 2), 14);
        assert_eq!(g.ij(7), (2, 1));
        assert_eq!(g.interior_count(), 3);
        assert!(g.is_boundary(0, 1) && !g.is_boundary(2, 1));
        assert_eq!(g.cell_center(1, 0), [0.75, 0.25]);
        assert!(Grid2D::new(5, 5, 2.0, 1.0).is_err());
        assert!(Grid2D::new(2, 5, 1.0, 1.0).is_err());
    }

    #[test]
    fn trapezoid_weights_integrate_constants() {
        let g = Grid2D::new(9, 5, 2.0, 1.0).unwrap();
        let mut s = 0.0;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                s += g.node_weight(i, j);
            }
        }
        assert!((s * g.h() * g.h() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn field_construction() {
        let g = Grid2D::unit(3).unwrap();
        let u = ScalarField::from_fn(g, |x, y| x + 10.0 * y);
        assert_eq!(u.at(2, 1), 6.0);
        assert!(ScalarField::from_values(g, vec![0.0; 4]).is_err());
        let v = ScalarField::constant(g, 1.0);
        assert_eq!(u.max_abs_diff(&v).unwrap(), 10.0);
        let other = ScalarField::zeros(Grid2D::unit(4).unwrap());
        assert!(u.max_abs_diff(&other).is_err());
    }
}
