//! Spatial discretization: an axis-aligned cube of cells (periodic or
//! no-flux), its degenerate one-cell "homogeneous" form, and the tensor
//! layout of the full polymer field.

use crate::length::LengthGrid;
use crate::linalg::Vec3;
use crate::sphere::SphereGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    NoFlux,
}

/// Uniform cube grid of `n^3` cells with centers `(i + 1/2) h`.
///
/// `n = 1` is the homogeneous mode: a single cell of unit volume carrying no
/// spatial transport.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    pub n: usize,
    pub length: f64,
    pub h: f64,
    pub boundary: Boundary,
}

impl SpatialGrid {
    pub fn cube(n: usize, length: f64, boundary: Boundary) -> Self {
        assert!(n >= 1 && length > 0.0);
        SpatialGrid {
            n,
            length,
            h: length / n as f64,
            boundary,
        }
    }

    pub fn homogeneous() -> Self {
        SpatialGrid::cube(1, 1.0, Boundary::NoFlux)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.n == 1
    }

    pub fn n_cells(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn center(&self, cell: usize) -> Vec3 {
        let n = self.n;
        let k = cell % n;
        let j = (cell / n) % n;
        let i = cell / (n * n);
        [
            (i as f64 + 0.5) * self.h,
            (j as f64 + 0.5) * self.h,
            (k as f64 + 0.5) * self.h,
        ]
    }

    pub fn centers(&self) -> Vec<Vec3> {
        (0..self.n_cells()).map(|c| self.center(c)).collect()
    }

    /// Quadrature weights (cell volumes).
    pub fn weights(&self) -> Vec<f64> {
        vec![self.cell_volume(); self.n_cells()]
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(3)
    }

    /// Trilinear interpolation of a per-cell field at a point. Periodic wrap
    /// or clamp to the boundary cells according to the boundary kind. Values
    /// are convex combinations of cell values, so global bounds are kept.
    pub fn interpolate(&self, field: &[f64], p: Vec3) -> f64 {
        debug_assert_eq!(field.len(), self.n_cells());
        if self.n == 1 {
            return field[0];
        }
        let n = self.n as isize;
        let mut base = [0isize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let q = p[a] / self.h - 0.5;
            let f = q.floor();
            base[a] = f as isize;
            frac[a] = q - f;
        }
        let wrap = |i: isize| -> usize {
            match self.boundary {
                Boundary::Periodic => (((i % n) + n) % n) as usize,
                Boundary::NoFlux => i.clamp(0, n - 1) as usize,
            }
        };
        let mut acc = 0.0;
        for di in 0..2 {
            for dj in 0..2 {
                for dk in 0..2 {
                    let w = (if di == 0 { 1.0 - frac[0] } else { frac[0] })
                        * (if dj == 0 { 1.0 - frac[1] } else { frac[1] })
                        * (if dk == 0 { 1.0 - frac[2] } else { frac[2] });
                    let cell = self.idx(
                        wrap(base[0] + di as isize),
                        wrap(base[1] + dj as isize),
                        wrap(base[2] + dk as isize),
                    );
                    acc += w * field[cell];
                }
            }
        }
        acc
    }
}

/// The full discretization bundle shared by the solver stages.
#[derive(Debug, Clone)]
pub struct Grids {
    pub length: LengthGrid,
    pub sphere: SphereGrid,
    pub space: SpatialGrid,
}

impl Grids {
    pub fn n_r(&self) -> usize {
        self.length.n_r
    }

    pub fn n_eta(&self) -> usize {
        self.sphere.len()
    }

    pub fn n_y(&self) -> usize {
        self.space.n_cells()
    }

    /// Total polymer field length, layout `[y][eta][r]`.
    pub fn field_len(&self) -> usize {
        self.n_y() * self.n_eta() * self.n_r()
    }

    pub fn idx(&self, iy: usize, e: usize, j: usize) -> usize {
        (iy * self.n_eta() + e) * self.n_r() + j
    }

    /// Range of the `(r, eta)` block of one spatial node.
    pub fn block(&self, iy: usize) -> std::ops::Range<usize> {
        let b = self.n_eta() * self.n_r();
        iy * b..(iy + 1) * b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_exact_on_cell_linear_fields() {
        let g = SpatialGrid::cube(8, 2.0, Boundary::Periodic);
        // field linear in y1 between adjacent centers
        let f: Vec<f64> = (0..g.n_cells()).map(|c| g.center(c)[0]).collect();
        let p = [0.9, 1.1, 0.3];
        let v = g.interpolate(&f, p);
        assert!((v - 0.9).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_convex() {
        let g = SpatialGrid::cube(4, 1.0, Boundary::Periodic);
        let f: Vec<f64> = (0..g.n_cells()).map(|c| (c as f64 * 0.7).sin()).collect();
        let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for p in [[0.01, 0.99, 0.5], [0.42, 0.13, 0.77], [0.0, 0.0, 0.0]] {
            let v = g.interpolate(&f, p);
            assert!(v >= lo - 1e-14 && v <= hi + 1e-14);
        }
    }

    #[test]
    fn homogeneous_grid_degenerates() {
        let g = SpatialGrid::homogeneous();
        assert_eq!(g.n_cells(), 1);
        assert_eq!(g.weights(), vec![1.0]);
        assert_eq!(g.interpolate(&[5.0], [0.3, 0.9, 0.1]), 5.0);
    }
}
