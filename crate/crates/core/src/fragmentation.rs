//! The scission operator: loss `-g r psi` plus gain `2 g int_r^inf psi dr'`.
//!
//! Under the linear breakage rate `beta = g r'` and the uniform kernel
//! `kappa = 1/r'` the kernel cancels inside the gain integral, so the gain is
//! a single backward cumulative sum per `(eta, y)` column - `O(n_r)`, no 2D
//! quadrature. A general tabulated-kernel path is kept behind the kernel
//! abstraction for other closures.
//!
//! With trapezoid column quadrature the discrete operator inherits both
//! continuum moment identities up to the (enforced) truncation tail:
//! `int r F[psi] dr = 0` (mass neutrality) and
//! `int F[psi] dr = g int r psi dr` (count production).

use crate::length::LengthGrid;
use crate::params::FragmentationKernel;

/// Loss and gain parts of the operator on a full `[y][eta][r]` field.
#[derive(Debug, Clone)]
pub struct FragmentationTerms {
    pub loss: Vec<f64>,
    pub gain: Vec<f64>,
}

impl FragmentationTerms {
    pub fn total(&self) -> Vec<f64> {
        self.loss
            .iter()
            .zip(&self.gain)
            .map(|(l, g)| l + g)
            .collect()
    }
}

/// Computes both parts of `F psi`; `g_field` holds one scission intensity per
/// `(y, eta)` column, matching the column order of the field layout.
pub fn fragmentation_terms(
    psi: &[f64],
    g_field: &[f64],
    length: &LengthGrid,
) -> FragmentationTerms {
    let n_r = length.n_r;
    assert_eq!(psi.len(), g_field.len() * n_r);
    let mut loss = vec![0.0; psi.len()];
    let mut gain = vec![0.0; psi.len()];
    let mut tail = vec![0.0; n_r];
    for (c, column) in psi.chunks_exact(n_r).enumerate() {
        let g = g_field[c];
        length.tail_profile(column, &mut tail);
        let base = c * n_r;
        for j in 0..n_r {
            loss[base + j] = -g * length.nodes[j] * column[j];
            gain[base + j] = 2.0 * g * tail[j];
        }
    }
    FragmentationTerms { loss, gain }
}

/// `F psi` assembled in one pass.
pub fn apply_fragmentation(psi: &[f64], g_field: &[f64], length: &LengthGrid) -> Vec<f64> {
    fragmentation_terms(psi, g_field, length).total()
}

/// Gain term for a general tabulated kernel on one column:
/// `2 int_r^inf g r' kappa(r, r') psi(r') dr'` by tail trapezoid quadrature.
/// For the uniform-split closure this reproduces the cumulative-sum path.
pub fn gain_with_kernel(
    column: &[f64],
    kernel: &FragmentationKernel,
    g: f64,
    length: &LengthGrid,
) -> Vec<f64> {
    let n_r = length.n_r;
    let dr = length.dr;
    let mut out = vec![0.0; n_r];
    for j in 0..n_r {
        // the kernel support is open at fragment size 0; use the limit value
        let r_target = length.nodes[j].max(f64::MIN_POSITIVE);
        let mut acc = 0.0;
        for k in j..n_r - 1 {
            let f0 = length.nodes[k] * kernel.kappa(r_target, length.nodes[k]) * column[k];
            let f1 =
                length.nodes[k + 1] * kernel.kappa(r_target, length.nodes[k + 1]) * column[k + 1];
            acc += 0.5 * dr * (f0 + f1);
        }
        out[j] = 2.0 * g * acc;
    }
    out
}
