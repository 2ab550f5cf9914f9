//! Discrete unit-sphere machinery: grid, quadrature, tangential operators and
//! the projected flow drift.
//!
//! The grid is latitude-longitude with Gauss-Legendre colatitudes (nodes of
//! `cos(theta)` in (-1,1), so no node sits on a pole) and a uniform periodic
//! azimuth. Quadrature is Gauss in theta and trapezoid (midpoint) in phi,
//! which integrates spherical harmonics up to high degree exactly. Finite
//! differences in theta use the non-uniform 3-point stencil with across-pole
//! closure: crossing a pole lands on the antipodal longitude, `f(-t, p) =
//! f(t, p + pi)`, so `n_phi` must be even.
//!
//! Two sets of cell measures coexist:
//! - `quad` weights (Gauss-Legendre): used for every integral and norm;
//! - `fv` band measures (`sin(theta) * dtheta * dphi` with midpoint faces):
//!   used to scale the conservative flux-form operators so that the assembled
//!   diffusion block is exactly symmetric and has exact zero row sums.

use crate::linalg::{self, Mat3, Vec3};

/// Gauss-Legendre nodes (ascending, in (-1,1)) and weights on [-1,1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Initial guess (Tricomi) then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[n - 1 - i] = x; // descending guesses -> ascending storage
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub n_theta: usize,
    pub n_phi: usize,
    /// Colatitudes, ascending in (0, pi).
    pub theta: Vec<f64>,
    /// Azimuths `k * dphi`, `dphi = 2 pi / n_phi`.
    pub phi: Vec<f64>,
    pub dphi: f64,
    /// Unit vectors per node, layout `idx = i_theta * n_phi + i_phi`.
    pub nodes: Vec<Vec3>,
    /// Quadrature weights per node (Gauss x trapezoid), sum = 4 pi.
    pub weights: Vec<f64>,
    /// Conservative cell measures per node (band midpoint faces).
    pub fv_measure: Vec<f64>,
    /// Band interface colatitudes, length `n_theta + 1`, from 0 to pi.
    pub theta_faces: Vec<f64>,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        assert!(n_theta >= 2, "need at least two latitude bands");
        assert!(n_phi >= 4 && n_phi % 2 == 0, "n_phi must be even and >= 4");
        let (x, wx) = gauss_legendre(n_theta);
        // x ascending = cos(theta) ascending = theta descending; flip.
        let theta: Vec<f64> = x.iter().rev().map(|&c| c.acos()).collect();
        let w_theta: Vec<f64> = wx.iter().rev().copied().collect();
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|k| k as f64 * dphi).collect();

        let mut theta_faces = Vec::with_capacity(n_theta + 1);
        theta_faces.push(0.0);
        for i in 0..n_theta - 1 {
            theta_faces.push(0.5 * (theta[i] + theta[i + 1]));
        }
        theta_faces.push(std::f64::consts::PI);

        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let mut fv_measure = Vec::with_capacity(n_theta * n_phi);
        for i in 0..n_theta {
            let (st, ct) = (theta[i].sin(), theta[i].cos());
            // exact band integral of sin(theta); keeps the flux-form
            // operators consistent through the pole bands
            let band_cos = theta_faces[i].cos() - theta_faces[i + 1].cos();
            for k in 0..n_phi {
                let (sp, cp) = (phi[k].sin(), phi[k].cos());
                nodes.push([st * cp, st * sp, ct]);
                weights.push(w_theta[i] * dphi);
                fv_measure.push(band_cos * dphi);
            }
        }
        SphereGrid {
            n_theta,
            n_phi,
            theta,
            phi,
            dphi,
            nodes,
            weights,
            fv_measure,
            theta_faces,
        }
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn idx(&self, i_theta: usize, i_phi: usize) -> usize {
        i_theta * self.n_phi + i_phi
    }

    pub fn e_theta(&self, i_theta: usize, i_phi: usize) -> Vec3 {
        let (st, ct) = (self.theta[i_theta].sin(), self.theta[i_theta].cos());
        let (sp, cp) = (self.phi[i_phi].sin(), self.phi[i_phi].cos());
        [ct * cp, ct * sp, -st]
    }

    pub fn e_phi(&self, i_phi: usize) -> Vec3 {
        let (sp, cp) = (self.phi[i_phi].sin(), self.phi[i_phi].cos());
        [-sp, cp, 0.0]
    }

    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// Node index reached when crossing the nearest pole from band `i_theta`:
    /// same band, antipodal longitude.
    fn across_pole(&self, i_theta: usize, i_phi: usize) -> usize {
        self.idx(i_theta, (i_phi + self.n_phi / 2) % self.n_phi)
    }

    /// d/dtheta of a per-band scalar sequence at interior and pole-adjacent
    /// bands, given the values and a closure producing the across-pole value.
    fn theta_derivative(
        &self,
        i: usize,
        value: impl Fn(usize) -> f64,
        pole_value: f64,
    ) -> f64 {
        let n = self.n_theta;
        let t = &self.theta;
        if i == 0 {
            // virtual node at -theta_0 with the across-pole value
            deriv3(-t[0], t[0], t[1], pole_value, value(0), value(1))
        } else if i == n - 1 {
            let virt = 2.0 * std::f64::consts::PI - t[n - 1];
            deriv3(t[n - 2], t[n - 1], virt, value(n - 2), value(n - 1), pole_value)
        } else {
            deriv3(t[i - 1], t[i], t[i + 1], value(i - 1), value(i), value(i + 1))
        }
    }

    /// Tangential gradient of a scalar field, one 3-vector per node.
    ///
    /// Second-order accurate on smooth fields; the result is orthogonal to
    /// the node direction by construction.
    pub fn surface_gradient(&self, field: &[f64]) -> Vec<Vec3> {
        assert_eq!(field.len(), self.len());
        let mut out = vec![linalg::ZERO_VEC3; self.len()];
        for i in 0..self.n_theta {
            let st = self.theta[i].sin();
            for k in 0..self.n_phi {
                let id = self.idx(i, k);
                let df_dtheta = self.theta_derivative(
                    i,
                    |ii| field[self.idx(ii, k)],
                    field[self.across_pole(i, k)],
                );
                let kp = (k + 1) % self.n_phi;
                let km = (k + self.n_phi - 1) % self.n_phi;
                let df_dphi = (field[self.idx(i, kp)] - field[self.idx(i, km)]) / (2.0 * self.dphi);
                let et = self.e_theta(i, k);
                let ep = self.e_phi(k);
                out[id] = linalg::axpy(df_dtheta, et, linalg::scale(df_dphi / st, ep));
            }
        }
        out
    }

    /// Tangential divergence of a tangent vector field (3-vector per node).
    pub fn surface_divergence(&self, vfield: &[Vec3]) -> Vec<f64> {
        assert_eq!(vfield.len(), self.len());
        // h = sin(theta) * F_theta extends evenly across the poles (with the
        // antipodal longitude shift), F_phi needs no pole closure.
        let mut h = vec![0.0; self.len()];
        let mut fphi = vec![0.0; self.len()];
        for i in 0..self.n_theta {
            let st = self.theta[i].sin();
            for k in 0..self.n_phi {
                let id = self.idx(i, k);
                h[id] = st * linalg::dot(vfield[id], self.e_theta(i, k));
                fphi[id] = linalg::dot(vfield[id], self.e_phi(k));
            }
        }
        let mut out = vec![0.0; self.len()];
        for i in 0..self.n_theta {
            let st = self.theta[i].sin();
            for k in 0..self.n_phi {
                let id = self.idx(i, k);
                let dh = self.theta_derivative(i, |ii| h[self.idx(ii, k)], h[self.across_pole(i, k)]);
                let kp = (k + 1) % self.n_phi;
                let km = (k + self.n_phi - 1) % self.n_phi;
                let dfp = (fphi[self.idx(i, kp)] - fphi[self.idx(i, km)]) / (2.0 * self.dphi);
                out[id] = (dh + dfp) / st;
            }
        }
        out
    }

    /// Conservative diffusion stiffness: rows of the symmetric matrix `S` with
    /// `(S f)_i = sum_faces c_f (f_i - f_nbr)`, face conductances from the
    /// midpoint-face geometry. `f^T S f` is the discrete Dirichlet energy.
    /// Row sums vanish identically and all off-diagonal entries are `-c_f < 0`.
    pub fn fv_stiffness(&self) -> Vec<Vec<(usize, f64)>> {
        let n = self.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(5); n];
        let add = |rows: &mut Vec<Vec<(usize, f64)>>, a: usize, b: usize, c: f64| {
            rows[a].push((a, c));
            rows[a].push((b, -c));
            rows[b].push((b, c));
            rows[b].push((a, -c));
        };
        // theta faces between bands i and i+1 (pole faces carry sin = 0)
        for i in 0..self.n_theta - 1 {
            let sf = self.theta_faces[i + 1].sin();
            let dist = self.theta[i + 1] - self.theta[i];
            let c = sf * self.dphi / dist;
            for k in 0..self.n_phi {
                add(&mut rows, self.idx(i, k), self.idx(i + 1, k), c);
            }
        }
        // phi faces within each band; conductance chosen so the strong form
        // reproduces the metric term 1/sin^2(theta) exactly
        for i in 0..self.n_theta {
            let band_cos = self.theta_faces[i].cos() - self.theta_faces[i + 1].cos();
            let st = self.theta[i].sin();
            let c = band_cos / (st * st * self.dphi);
            for k in 0..self.n_phi {
                let kp = (k + 1) % self.n_phi;
                add(&mut rows, self.idx(i, k), self.idx(i, kp), c);
            }
        }
        compress(rows)
    }

    /// Conservative centered flux divergence of the drift `V(eta) = P(M eta)`,
    /// scaled to strong form by the fv cell measures:
    /// `(D psi)_i ~ div_eta(V psi)(eta_i)`. Returns the rows and the largest
    /// face drift conductance ratio `|v_n| * face / (2 * diffusion conductance)`
    /// (the cell Peclet number deciding the M-matrix property).
    pub fn drift_divergence_rows(&self, m: &Mat3) -> (Vec<Vec<(usize, f64)>>, f64) {
        let n = self.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(5); n];
        let mut max_peclet = 0.0f64;
        // theta faces
        for i in 0..self.n_theta - 1 {
            let tf = self.theta_faces[i + 1];
            let sf = tf.sin();
            let dist = self.theta[i + 1] - self.theta[i];
            let diff_c = sf * self.dphi / dist;
            for k in 0..self.n_phi {
                let eta_f = unit_from_angles(tf, self.phi[k]);
                let et_f = [
                    tf.cos() * self.phi[k].cos(),
                    tf.cos() * self.phi[k].sin(),
                    -tf.sin(),
                ];
                let vn = linalg::dot(projected_drift(m, eta_f), et_f);
                let flux_c = vn * sf * self.dphi; // per unit psi at the face
                let (a, b) = (self.idx(i, k), self.idx(i + 1, k));
                // centered face value: (psi_a + psi_b)/2, flux positive towards +theta
                rows[a].push((a, 0.5 * flux_c));
                rows[a].push((b, 0.5 * flux_c));
                rows[b].push((a, -0.5 * flux_c));
                rows[b].push((b, -0.5 * flux_c));
                max_peclet = max_peclet.max(0.5 * flux_c.abs() / diff_c);
            }
        }
        // phi faces; effective face length band_cos/sin(theta) matches the
        // stiffness conductances and the cell measures
        for i in 0..self.n_theta {
            let band_cos = self.theta_faces[i].cos() - self.theta_faces[i + 1].cos();
            let st = self.theta[i].sin();
            let face_len = band_cos / st;
            let diff_c = band_cos / (st * st * self.dphi);
            for k in 0..self.n_phi {
                let kp = (k + 1) % self.n_phi;
                let phi_f = self.phi[k] + 0.5 * self.dphi;
                let eta_f = unit_from_angles(self.theta[i], phi_f);
                let ep_f = [-phi_f.sin(), phi_f.cos(), 0.0];
                let vn = linalg::dot(projected_drift(m, eta_f), ep_f);
                let flux_c = vn * face_len;
                let (a, b) = (self.idx(i, k), self.idx(i, kp));
                rows[a].push((a, 0.5 * flux_c));
                rows[a].push((b, 0.5 * flux_c));
                rows[b].push((a, -0.5 * flux_c));
                rows[b].push((b, -0.5 * flux_c));
                max_peclet = max_peclet.max(0.5 * flux_c.abs() / diff_c);
            }
        }
        let mut rows = compress(rows);
        for (i, row) in rows.iter_mut().enumerate() {
            let inv_m = 1.0 / self.fv_measure[i];
            for e in row.iter_mut() {
                e.1 *= inv_m;
            }
        }
        (rows, max_peclet)
    }
}

fn unit_from_angles(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = (theta.sin(), theta.cos());
    [st * phi.cos(), st * phi.sin(), ct]
}

fn compress(rows: Vec<Vec<(usize, f64)>>) -> Vec<Vec<(usize, f64)>> {
    rows.into_iter()
        .map(|mut row| {
            row.sort_by_key(|e| e.0);
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, v) in row {
                match out.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => out.push((j, v)),
                }
            }
            out
        })
        .collect()
}

/// Three-point first derivative at `b` on the non-uniform stencil `a < b < c`.
fn deriv3(a: f64, b: f64, c: f64, fa: f64, fb: f64, fc: f64) -> f64 {
    fa * (b - c) / ((a - b) * (a - c))
        + fb * (2.0 * b - a - c) / ((b - a) * (b - c))
        + fc * (b - a) / ((c - a) * (c - b))
}

/// Projection of `z` onto the tangent plane at `eta`: `z - (z . eta) eta`.
pub fn project_tangent(z: Vec3, eta: Vec3) -> Vec3 {
    linalg::axpy(-linalg::dot(z, eta), eta, z)
}

/// The orientation drift `P_{eta-perp}(grad_u eta)` carried by the flow.
pub fn projected_drift(grad_u: &Mat3, eta: Vec3) -> Vec3 {
    project_tangent(linalg::matvec(grad_u, eta), eta)
}

/// Closed form of the tangential divergence of the projected drift:
/// `div_eta P(M eta) = tr(M) - 3 eta.(M eta)` (orthonormal completion of the
/// spherical-frame identity, valid at the poles too).
pub fn divergence_of_projected_drift(m: &Mat3, eta: Vec3) -> f64 {
    linalg::trace(m) - 3.0 * linalg::quadratic_form(m, eta)
}
