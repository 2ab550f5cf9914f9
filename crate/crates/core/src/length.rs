//! Discretization of the length axis `r in (0, r_max]` carrying the
//! exponential weight `a(r) = exp(alpha r)`, the weighted norms, the tail and
//! total integral maps and the upwind length-derivative.
//!
//! Full tensor fields use the layout `[y][eta][r]` with `r` fastest, so every
//! `(y, eta)` column is one contiguous slice of length `n_r`; the column
//! operations here chunk fields that way.

use crate::params::AWeight;
use crate::sphere::SphereGrid;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LengthError {
    #[error("field has not decayed at r_max: |psi(r_max)| = {tail:.3e} > 1e-10 * max|psi| = {threshold:.3e}")]
    TruncationTail { tail: f64, threshold: f64 },
}

/// Uniform grid on `[0, r_max]` with `r_0 = 0`, trapezoid quadrature weights
/// and the exponential weight tabulated per node.
#[derive(Debug, Clone)]
pub struct LengthGrid {
    pub n_r: usize,
    pub r_max: f64,
    pub dr: f64,
    pub alpha: f64,
    pub nodes: Vec<f64>,
    /// Trapezoid weights: `dr/2` at the ends, `dr` inside.
    pub weights: Vec<f64>,
    /// `a(r_j) = exp(alpha r_j)`.
    pub exp_weights: Vec<f64>,
}

impl LengthGrid {
    pub fn new(n_r: usize, r_max: f64, alpha: f64) -> Self {
        assert!(n_r >= 3 && r_max > 0.0 && alpha > 0.0);
        let dr = r_max / (n_r - 1) as f64;
        let nodes: Vec<f64> = (0..n_r).map(|j| j as f64 * dr).collect();
        let mut weights = vec![dr; n_r];
        weights[0] = 0.5 * dr;
        weights[n_r - 1] = 0.5 * dr;
        let exp_weights = nodes.iter().map(|&r| (alpha * r).exp()).collect();
        LengthGrid {
            n_r,
            r_max,
            dr,
            alpha,
            nodes,
            weights,
            exp_weights,
        }
    }

    /// Deviation of the grid quadrature of `exp(-2 alpha r)` from its exact
    /// integral; reported by `validate` as a resolution metric.
    pub fn exp_quadrature_deviation(&self) -> f64 {
        let q: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&r, &w)| w * (-2.0 * self.alpha * r).exp())
            .sum();
        let exact = (1.0 - (-2.0 * self.alpha * self.r_max).exp()) / (2.0 * self.alpha);
        (q - exact).abs()
    }

    /// Plain quadrature of one `r`-column.
    pub fn integrate(&self, column: &[f64]) -> f64 {
        column.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// First moment `int r v dr` of one column.
    pub fn first_moment(&self, column: &[f64]) -> f64 {
        column
            .iter()
            .zip(self.weights.iter().zip(&self.nodes))
            .map(|(v, (w, r))| v * w * r)
            .sum()
    }

    /// Tail integrals `int_{r_j}^{r_max} v dr'` for every node of one column,
    /// by one backward cumulative trapezoid pass.
    pub fn tail_profile(&self, column: &[f64], out: &mut [f64]) {
        let n = self.n_r;
        debug_assert_eq!(column.len(), n);
        debug_assert_eq!(out.len(), n);
        out[n - 1] = 0.0;
        for j in (0..n - 1).rev() {
            out[j] = out[j + 1] + 0.5 * self.dr * (column[j] + column[j + 1]);
        }
    }

    /// Checked tail integral at one node; errors when the field has not
    /// decayed at the truncation boundary.
    pub fn tail_integral(&self, column: &[f64], j: usize) -> Result<f64, LengthError> {
        self.check_decay(column)?;
        let mut out = vec![0.0; self.n_r];
        self.tail_profile(column, &mut out);
        Ok(out[j])
    }

    pub fn check_decay(&self, column: &[f64]) -> Result<(), LengthError> {
        let max = column.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tail = column[self.n_r - 1].abs();
        let threshold = 1e-10 * max;
        if max > 0.0 && tail > threshold {
            return Err(LengthError::TruncationTail { tail, threshold });
        }
        Ok(())
    }

    /// Backward-difference length derivative with the inflow value `v(0) = 0`:
    /// `out[j] = (v_j - v_{j-1}) / dr` with the node-0 value replaced by the
    /// boundary value; `out[0] = 0` (Dirichlet row).
    pub fn upwind_dr(&self, column: &[f64], out: &mut [f64]) {
        let n = self.n_r;
        out[0] = 0.0;
        if n > 1 {
            out[1] = column[1] / self.dr;
        }
        for j in 2..n {
            out[j] = (column[j] - column[j - 1]) / self.dr;
        }
    }
}

/// Which weighted norm to measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormSpace {
    /// `int f^2 dq dy`, `dq = exp(alpha r) dr deta`.
    L2Alpha,
    /// `int (A(r) |grad_eta f|^2 + (1+r) f^2) dq dy`.
    V,
    /// V plus `int |d_r f|^2 dq dy`.
    V1,
}

/// Squared weighted norm of a full `[y][eta][r]` field.
pub fn weighted_norm_sq(
    values: &[f64],
    which: NormSpace,
    length: &LengthGrid,
    sphere: &SphereGrid,
    y_weights: &[f64],
    a_weight: &AWeight,
) -> f64 {
    let n_r = length.n_r;
    let n_eta = sphere.len();
    assert_eq!(values.len(), n_r * n_eta * y_weights.len());
    let mut total = 0.0;

    for (iy, &wy) in y_weights.iter().enumerate() {
        let block = &values[iy * n_eta * n_r..(iy + 1) * n_eta * n_r];
        // mass-type terms, column by column
        for (e, column) in block.chunks_exact(n_r).enumerate() {
            let we = sphere.weights[e];
            for (j, &v) in column.iter().enumerate() {
                let wq = length.weights[j] * length.exp_weights[j];
                let mass_weight = match which {
                    NormSpace::L2Alpha => 1.0,
                    NormSpace::V | NormSpace::V1 => 1.0 + length.nodes[j],
                };
                total += wy * we * wq * mass_weight * v * v;
            }
        }
        if which == NormSpace::V || which == NormSpace::V1 {
            // sphere-gradient term, slice by slice over r
            let mut slice = vec![0.0; n_eta];
            for j in 0..n_r {
                for e in 0..n_eta {
                    slice[e] = block[e * n_r + j];
                }
                let grad = sphere.surface_gradient(&slice);
                let wq = length.weights[j] * length.exp_weights[j];
                let a = a_weight.eval(length.nodes[j]);
                for (e, gv) in grad.iter().enumerate() {
                    let g2 = gv[0] * gv[0] + gv[1] * gv[1] + gv[2] * gv[2];
                    total += wy * sphere.weights[e] * wq * a * g2;
                }
            }
        }
        if which == NormSpace::V1 {
            for (e, column) in block.chunks_exact(n_r).enumerate() {
                let we = sphere.weights[e];
                for j in 0..n_r {
                    let d = if j == 0 {
                        (column[1] - column[0]) / length.dr
                    } else if j == n_r - 1 {
                        (column[j] - column[j - 1]) / length.dr
                    } else {
                        (column[j + 1] - column[j - 1]) / (2.0 * length.dr)
                    };
                    let wq = length.weights[j] * length.exp_weights[j];
                    total += wy * we * wq * d * d;
                }
            }
        }
    }
    total
}

/// Total integral `int psi dr deta` per spatial node (the monomer sink map).
pub fn total_integral(
    values: &[f64],
    length: &LengthGrid,
    sphere: &SphereGrid,
    n_y: usize,
) -> Vec<f64> {
    let n_r = length.n_r;
    let n_eta = sphere.len();
    assert_eq!(values.len(), n_r * n_eta * n_y);
    let mut out = vec![0.0; n_y];
    for iy in 0..n_y {
        let block = &values[iy * n_eta * n_r..(iy + 1) * n_eta * n_r];
        let mut acc = 0.0;
        for (e, column) in block.chunks_exact(n_r).enumerate() {
            acc += sphere.weights[e] * length.integrate(column);
        }
        out[iy] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_shape_invariants() {
        let g = LengthGrid::new(257, 23.0, 1.0);
        assert_eq!(g.nodes[0], 0.0);
        assert_eq!(*g.nodes.last().unwrap(), 23.0);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        let total: f64 = g.weights.iter().sum();
        assert!((total - 23.0).abs() < 1e-12);
    }

    #[test]
    fn exp_quadrature_deviation_resolved_grid() {
        // Trapezoid error scales as dr^2 alpha / 6; a resolved grid meets 1e-6.
        let g = LengthGrid::new(16385, 23.0, 1.0);
        assert!(g.exp_quadrature_deviation() < 1e-6);
        // and the error estimate itself is honest on the coarse grid
        let g = LengthGrid::new(257, 23.0, 1.0);
        let dev = g.exp_quadrature_deviation();
        let estimate = g.dr * g.dr * g.alpha / 6.0;
        assert!(dev < 1.1 * estimate && dev > 0.5 * estimate);
    }

    #[test]
    fn tail_integral_examples() {
        let g = LengthGrid::new(2001, 25.0, 1.0);
        let zero = vec![0.0; g.n_r];
        assert_eq!(g.tail_integral(&zero, 0).unwrap(), 0.0);

        let psi: Vec<f64> = g.nodes.iter().map(|&r| (-r).exp()).collect();
        let lam0 = g.tail_integral(&psi, 0).unwrap();
        let exact = 1.0 - (-g.r_max).exp();
        assert!((lam0 - exact).abs() < 1e-4, "got {lam0}, exact {exact}");

        // nonincreasing for nonnegative integrands
        let mut tail = vec![0.0; g.n_r];
        g.tail_profile(&psi, &mut tail);
        assert!(tail.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn tail_integral_rejects_undecayed_field() {
        let g = LengthGrid::new(101, 5.0, 1.0);
        let psi: Vec<f64> = g.nodes.iter().map(|&r| (-r).exp()).collect();
        match g.tail_integral(&psi, 0) {
            Err(LengthError::TruncationTail { .. }) => {}
            other => panic!("expected TruncationTail, got {other:?}"),
        }
    }

    #[test]
    fn upwind_examples() {
        let g = LengthGrid::new(65, 4.0, 1.0);
        let mut out = vec![0.0; g.n_r];

        let linear = g.nodes.clone();
        g.upwind_dr(&linear, &mut out);
        for &d in &out[1..] {
            assert!((d - 1.0).abs() < 1e-13, "exact on linear fields");
        }

        let c = 3.0;
        let constant = vec![c; g.n_r];
        g.upwind_dr(&constant, &mut out);
        assert!((out[1] - c / g.dr).abs() < 1e-12);
        for &d in &out[2..] {
            assert!(d.abs() < 1e-13);
        }

        let zero = vec![0.0; g.n_r];
        g.upwind_dr(&zero, &mut out);
        assert!(out.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn tail_moments_match_direct_quadrature() {
        // Lambda2(0) equals the zeroth moment and int Lambda2 dr equals the
        // first moment, both checked against independent direct quadrature.
        let g = LengthGrid::new(801, 30.0, 1.0);
        let psi: Vec<f64> = g.nodes.iter().map(|&r| r * (-1.3 * r).exp()).collect();
        let mut tail = vec![0.0; g.n_r];
        g.tail_profile(&psi, &mut tail);
        let zeroth = g.integrate(&psi);
        assert!((tail[0] - zeroth).abs() < 1e-8);
        let first = g.first_moment(&psi);
        let int_tail = g.integrate(&tail);
        assert!((int_tail - first).abs() < 1e-8 * first.max(1.0));
    }

    fn norm_fixture() -> (LengthGrid, SphereGrid) {
        (LengthGrid::new(1601, 25.0, 1.0), SphereGrid::new(6, 12))
    }

    #[test]
    fn weighted_norm_examples() {
        let (lg, sg) = norm_fixture();
        let n = lg.n_r * sg.len();
        let zero = vec![0.0; n];
        let a = AWeight::Unit;
        assert_eq!(
            weighted_norm_sq(&zero, NormSpace::L2Alpha, &lg, &sg, &[1.0], &a),
            0.0
        );

        // f = exp(-alpha r), eta/y independent on a unit-volume domain:
        // ||f||^2_{L2a} = |S2| (1 - exp(-alpha r_max)) / alpha
        let mut f = vec![0.0; n];
        for e in 0..sg.len() {
            for j in 0..lg.n_r {
                f[e * lg.n_r + j] = (-lg.alpha * lg.nodes[j]).exp();
            }
        }
        let got = weighted_norm_sq(&f, NormSpace::L2Alpha, &lg, &sg, &[1.0], &a);
        let exact = 4.0 * std::f64::consts::PI * (1.0 - (-lg.alpha * lg.r_max).exp()) / lg.alpha;
        assert!((got - exact).abs() < 1e-3 * exact, "got {got}, exact {exact}");

        let v = weighted_norm_sq(&f, NormSpace::V, &lg, &sg, &[1.0], &a);
        assert!(v >= got, "V-norm dominates the L2_alpha norm");
        let v1 = weighted_norm_sq(&f, NormSpace::V1, &lg, &sg, &[1.0], &a);
        assert!(v1 >= v);
    }

    #[test]
    fn embedding_into_weighted_l1_holds_numerically() {
        // int |psi| r^t dr deta dy <= C(alpha, t) ||psi||_{L2alpha} with the
        // discrete Cauchy-Schwarz constant, for t = 0 and 1.
        let (lg, sg) = norm_fixture();
        let n = lg.n_r * sg.len();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = AWeight::Unit;
        for _ in 0..5 {
            let (b, c): (f64, f64) = (rng.gen(), rng.gen());
            let f: Vec<f64> = (0..n)
                .map(|i| {
                    let j = i % lg.n_r;
                    let r = lg.nodes[j];
                    (1.0 + b) * (-(0.6 + c) * r).exp() * (1.0 + 0.3 * (3.0 * r).sin())
                })
                .collect();
            for theta in [0.0, 1.0] {
                let mut l1 = 0.0;
                let mut c_sq = 0.0;
                for (e, column) in f.chunks_exact(lg.n_r).enumerate() {
                    for (j, &v) in column.iter().enumerate() {
                        let r = lg.nodes[j];
                        let w = lg.weights[j];
                        l1 += sg.weights[e] * w * v.abs() * r.powf(theta);
                        c_sq += sg.weights[e]
                            * w
                            * r.powf(2.0 * theta)
                            * (-lg.alpha * r).exp();
                    }
                }
                let l2 = weighted_norm_sq(&f, NormSpace::L2Alpha, &lg, &sg, &[1.0], &a).sqrt();
                assert!(l1 <= c_sq.sqrt() * l2 * (1.0 + 1e-12));
            }
        }
    }
}
