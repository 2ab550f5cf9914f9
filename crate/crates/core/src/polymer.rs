//! One implicit step for the polymer density: the per-spatial-node
//! `(r, eta)` solve of the semi-discrete variational problem.
//!
//! The only spatial coupling of the step is the semi-Lagrangian pullback of
//! the previous state, so each spatial node carries an independent sparse
//! system over the `(eta, r)` block:
//!
//!   `psi/dt  + tau0 phi^{n-1} D_r^- psi  + g r psi`
//!   `+ A(r) [ -D1 lap_eta psi + div_eta(P(grad_u eta) psi) ]`
//!   `+ eps * (weighted d_rr) psi`
//!   `= psi^{n-1}(z_n(y))/dt + 2 g Lambda2[psi^{n-1}]`
//!
//! with Dirichlet zero rows at `r = 0` (inflow) and `r = r_max` (truncation).
//! The length transport is upwind rather than the central weak form to keep
//! the whole matrix an M-matrix: diffusion and the epsilon term contribute
//! negative off-diagonals, the centered drift stays dominated whenever the
//! cell Peclet number `|drift| h / (2 D1 A)` is below one (recorded on the
//! operator), and positivity of the step then holds to solver tolerance.

use crate::flow::{pullback_tensor, FlowError, FlowMap, VelocityField};
use crate::ledger::{LedgerError, StabilityLedger};
use crate::params::{evaluate_g, ModelParams};
use crate::solver::{bicgstab, Csr, SolverError};
use crate::space::Grids;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolymerError {
    #[error(transparent)]
    TimestepTooLarge(#[from] LedgerError),
    #[error("monomer input to the polymer step has negative values (min = {min:.3e})")]
    NegativeMonomerInput { min: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Discretized polymer density over the `[y][eta][r]` tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolymerField {
    pub values: Vec<f64>,
}

impl PolymerField {
    pub fn zeros(grids: &Grids) -> Self {
        PolymerField {
            values: vec![0.0; grids.field_len()],
        }
    }

    /// Builds a field from a closure of `(r, eta, y)`, enforcing the inflow
    /// boundary value `psi(r = 0) = 0`.
    pub fn from_fn(
        grids: &Grids,
        f: impl Fn(f64, crate::linalg::Vec3, crate::linalg::Vec3) -> f64,
    ) -> Self {
        let mut values = vec![0.0; grids.field_len()];
        for iy in 0..grids.n_y() {
            let y = grids.space.center(iy);
            for (e, &eta) in grids.sphere.nodes.iter().enumerate() {
                for (j, &r) in grids.length.nodes.iter().enumerate() {
                    values[grids.idx(iy, e, j)] = if j == 0 { 0.0 } else { f(r, eta, y) };
                }
            }
        }
        PolymerField { values }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(||negative part||, ||psi||)` in the plain quadrature L2 norm.
    pub fn negative_part_norms(&self, grids: &Grids) -> (f64, f64) {
        let n_r = grids.n_r();
        let wy = grids.space.cell_volume();
        let mut neg = 0.0;
        let mut tot = 0.0;
        for (c, column) in self.values.chunks_exact(n_r).enumerate() {
            let e = c % grids.n_eta();
            let we = grids.sphere.weights[e] * wy;
            for (j, &v) in column.iter().enumerate() {
                let w = we * grids.length.weights[j];
                tot += w * v * v;
                if v < 0.0 {
                    neg += w * v * v;
                }
            }
        }
        (neg.sqrt(), tot.sqrt())
    }

    /// Largest violation of `psi <= c * exp(-alpha r)` over the grid
    /// (negative when the envelope holds with margin).
    pub fn envelope_violation(&self, c: f64, alpha: f64, grids: &Grids) -> f64 {
        let n_r = grids.n_r();
        let mut worst = f64::NEG_INFINITY;
        for column in self.values.chunks_exact(n_r) {
            for (j, &v) in column.iter().enumerate() {
                let bound = c * (-alpha * grids.length.nodes[j]).exp();
                worst = worst.max(v - bound);
            }
        }
        worst
    }

    pub fn boundary_is_zero(&self, grids: &Grids) -> bool {
        self.values
            .chunks_exact(grids.n_r())
            .all(|col| col[0] == 0.0)
    }
}

/// The assembled step operator: everything needed to materialize the sparse
/// block of any spatial node, plus the solvability certificates.
#[derive(Debug, Clone)]
pub struct StepOperator {
    pub dt: f64,
    pub eps: f64,
    pub step_index: usize,
    phi_prev: Vec<f64>,
    /// Scission intensity per `(y, eta)`, layout `iy * n_eta + e`.
    pub g_field: Vec<f64>,
    a_of_r: Vec<f64>,
    stiffness: Vec<Vec<(usize, f64)>>,
    drift: Vec<Vec<Vec<(usize, f64)>>>,
    /// max face Peclet number `|v_n| h / (2 D1)`; below 1 the matrix is an
    /// M-matrix and positivity is exact up to solver tolerance.
    pub max_cell_peclet: f64,
    /// smallest sampled Rayleigh quotient of the weighted bilinear form.
    pub coercivity_witness: f64,
    /// `(1/dt - k3/2) (1 - 1e-6)`, the bound the witness must clear.
    pub coercivity_floor: f64,
}

/// Weight of the solve-side inner product `dq dy` per `(eta, r)` entry:
/// fv sphere measure times the weighted length quadrature.
fn solve_weights(grids: &Grids) -> Vec<f64> {
    let n_r = grids.n_r();
    let mut w = vec![0.0; grids.n_eta() * n_r];
    for e in 0..grids.n_eta() {
        for j in 0..n_r {
            w[e * n_r + j] = grids.sphere.fv_measure[e]
                * grids.length.weights[j]
                * grids.length.exp_weights[j];
        }
    }
    w
}

pub fn assemble_polymer_operator(
    params: &ModelParams,
    grids: &Grids,
    flow: &VelocityField,
    t_now: f64,
    phi_prev: &[f64],
    dt: f64,
    eps: f64,
    ledger: &StabilityLedger,
    step_index: usize,
) -> Result<StepOperator, PolymerError> {
    ledger.precheck()?;
    let min_phi = phi_prev.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_phi < -1e-12 * phi_prev.iter().cloned().fold(1.0, f64::max) {
        return Err(PolymerError::NegativeMonomerInput { min: min_phi });
    }

    let n_eta = grids.n_eta();
    let mut g_field = vec![0.0; grids.n_y() * n_eta];
    let mut drift = Vec::with_capacity(grids.n_y());
    let mut max_peclet = 0.0f64;
    for iy in 0..grids.n_y() {
        let y = grids.space.center(iy);
        let grad = flow.grad(t_now, y);
        let u = flow.eval(t_now, y);
        for (e, &eta) in grids.sphere.nodes.iter().enumerate() {
            g_field[iy * n_eta + e] = evaluate_g(params, &grad, u, eta);
        }
        let (rows, pe) = grids.sphere.drift_divergence_rows(&grad);
        max_peclet = max_peclet.max(pe / params.d1);
        drift.push(rows);
    }

    let a_of_r = grids
        .length
        .nodes
        .iter()
        .map(|&r| params.a_weight.eval(r))
        .collect();

    let mut op = StepOperator {
        dt,
        eps,
        step_index,
        phi_prev: phi_prev.to_vec(),
        g_field,
        a_of_r,
        stiffness: grids.sphere.fv_stiffness(),
        drift,
        max_cell_peclet: max_peclet,
        coercivity_witness: f64::INFINITY,
        coercivity_floor: (1.0 / dt - ledger.k3 / 2.0) * (1.0 - 1e-6),
    };
    op.coercivity_witness = op.sample_coercivity(grids, params, 32);
    Ok(op)
}

impl StepOperator {
    /// Materializes the sparse block of spatial node `iy` (strong form,
    /// row-scaled; Dirichlet identity rows at both length boundaries).
    pub fn block_matrix(&self, grids: &Grids, params: &ModelParams, iy: usize) -> Csr {
        let n_r = grids.n_r();
        let n_eta = grids.n_eta();
        let n = n_r * n_eta;
        let dr = grids.length.dr;
        let phi = self.phi_prev[iy];
        let transport = params.tau0 * phi / dr;
        // weighted epsilon diffusion: a_{j+1/2}/a_j and a_{j-1/2}/a_j
        let q = (0.5 * params.alpha * dr).exp();
        let eps_up = self.eps * q / (dr * dr);
        let eps_dn = self.eps / (q * dr * dr);
        let drift_rows = &self.drift[iy];

        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(10); n];
        for e in 0..n_eta {
            let g = self.g_field[iy * n_eta + e];
            for j in 0..n_r {
                let k = e * n_r + j;
                if j == 0 || j == n_r - 1 {
                    rows[k].push((k, 1.0));
                    continue;
                }
                let r = grids.length.nodes[j];
                let a_j = self.a_of_r[j];
                let mut diag = 1.0 / self.dt + transport + g * r + eps_up + eps_dn;
                rows[k].push((k - 1, -transport - eps_dn));
                rows[k].push((k + 1, -eps_up));
                // sphere diffusion: D1 A(r) * S / m_fv
                let inv_m = 1.0 / grids.sphere.fv_measure[e];
                for &(e2, s) in &self.stiffness[e] {
                    let c = params.d1 * a_j * s * inv_m;
                    if e2 == e {
                        diag += c;
                    } else {
                        rows[k].push((e2 * n_r + j, c));
                    }
                }
                // drift divergence (already strong form), scaled by A(r)
                for &(e2, d) in &drift_rows[e] {
                    let c = a_j * d;
                    if e2 == e {
                        diag += c;
                    } else {
                        rows[k].push((e2 * n_r + j, c));
                    }
                }
                rows[k].push((k, diag));
            }
        }
        Csr::from_rows(rows)
    }

    /// Smallest Rayleigh quotient `a_eps(v, v) / ||v||^2_dq` over seeded random
    /// fields on the first spatial block (boundary entries zeroed to stay in
    /// the solution space).
    pub fn sample_coercivity(&self, grids: &Grids, params: &ModelParams, samples: usize) -> f64 {
        let a = self.block_matrix(grids, params, 0);
        let w = solve_weights(grids);
        let n = a.n;
        let n_r = grids.n_r();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut min_q = f64::INFINITY;
        let mut av = vec![0.0; n];
        for _ in 0..samples {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            for e in 0..grids.n_eta() {
                v[e * n_r] = 0.0;
                v[e * n_r + n_r - 1] = 0.0;
            }
            a.matvec(&v, &mut av);
            let num: f64 = av.iter().zip(&v).zip(&w).map(|((a, b), w)| w * a * b).sum();
            let den: f64 = v.iter().zip(&w).map(|(b, w)| w * b * b).sum();
            if den > 0.0 {
                min_q = min_q.min(num / den);
            }
        }
        min_q
    }
}

/// Right-hand side of the step: pulled-back previous state over `dt` plus the
/// fragmentation gain of the previous state, zero on the Dirichlet rows.
pub struct PolymerRhs {
    pub rhs: Vec<f64>,
    /// `psi^{n-1}(z_n(y))`, kept for the energy budget.
    pub pulled_prev: Vec<f64>,
}

pub fn polymer_rhs(
    psi_prev: &PolymerField,
    map: &FlowMap,
    g_field: &[f64],
    grids: &Grids,
    dt: f64,
) -> Result<PolymerRhs, FlowError> {
    let n_r = grids.n_r();
    let pulled = pullback_tensor(&psi_prev.values, grids, map)?;
    let mut rhs = vec![0.0; pulled.len()];
    let mut tail = vec![0.0; n_r];
    for (c, column) in psi_prev.values.chunks_exact(n_r).enumerate() {
        let g = g_field[c];
        grids.length.tail_profile(column, &mut tail);
        let base = c * n_r;
        for j in 1..n_r - 1 {
            rhs[base + j] = pulled[base + j] / dt + 2.0 * g * tail[j];
        }
    }
    Ok(PolymerRhs {
        rhs,
        pulled_prev: pulled,
    })
}

/// Convergence report of one step's solves.
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub max_iterations: usize,
    pub total_iterations: usize,
    pub min_value: f64,
    /// `||[psi]_-|| / ||psi||`; reported, never clipped.
    pub negative_part_rel: f64,
}

pub fn solve_polymer_step(
    op: &StepOperator,
    rhs: &PolymerRhs,
    grids: &Grids,
    params: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<(PolymerField, SolveReport), PolymerError> {
    let block = grids.n_eta() * grids.n_r();
    let mut values = vec![0.0; rhs.rhs.len()];
    let mut report = SolveReport {
        min_value: f64::INFINITY,
        ..Default::default()
    };
    for iy in 0..grids.n_y() {
        let a = op.block_matrix(grids, params, iy);
        let b = &rhs.rhs[iy * block..(iy + 1) * block];
        // warm start near the solution: dt * rhs is the pure-mass inverse
        let x0: Vec<f64> = b.iter().map(|v| v * op.dt).collect();
        let (x, iters) = bicgstab(&a, b, Some(&x0), tol, max_iter)?;
        report.max_iterations = report.max_iterations.max(iters);
        report.total_iterations += iters;
        values[iy * block..(iy + 1) * block].copy_from_slice(&x);
    }
    let field = PolymerField { values };
    let (neg, tot) = field.negative_part_norms(grids);
    report.min_value = field.min_value();
    report.negative_part_rel = if tot > 0.0 { neg / tot } else { 0.0 };
    Ok((field, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowMap;
    use crate::length::LengthGrid;
    use crate::params::{load_params, AWeight, FragmentationKernel, GClosure};
    use crate::space::SpatialGrid;
    use crate::sphere::SphereGrid;

    fn small_grids() -> Grids {
        Grids {
            length: LengthGrid::new(33, 23.0, 1.0),
            sphere: SphereGrid::new(6, 8),
            space: SpatialGrid::homogeneous(),
        }
    }

    fn baseline_params() -> ModelParams {
        load_params(
            r#"
            [params]
            tau0 = 0.3
            alpha = 1.0
            d1 = 1.0
            d2 = 1.0
            t_final = 1.0
            [params.g]
            form = "constant"
            g0 = 1.0
        "#,
        )
        .unwrap()
    }

    /// Params with every coupling off (g = 0 bypasses validation on purpose).
    fn all_off_params() -> ModelParams {
        ModelParams {
            tau0: 0.0,
            alpha: 1.0,
            d1: 1.0,
            d2: 1.0,
            a_weight: AWeight::Unit,
            g_rate: GClosure::Constant { g0: 0.0 },
            kernel: FragmentationKernel::UniformSplit,
            rho0: None,
            t_final: 1.0,
        }
    }

    fn ledger_for(params: &ModelParams, grids: &Grids, dt: f64) -> StabilityLedger {
        StabilityLedger::build(params, &VelocityField::Zero, grids, 1.0, 1.0, dt, 100).unwrap()
    }

    #[test]
    fn mass_plus_diffusion_kills_eta_constants() {
        let grids = small_grids();
        let params = all_off_params();
        let dt = 0.01;
        let ledger = ledger_for(&params, &grids, dt);
        let phi = vec![0.0];
        let op = assemble_polymer_operator(
            &params,
            &grids,
            &VelocityField::Zero,
            0.0,
            &phi,
            dt,
            0.0,
            &ledger,
            0,
        )
        .unwrap();
        let a = op.block_matrix(&grids, &params, 0);
        // eta-constant (zero at r-boundaries): operator returns field / dt
        let n_r = grids.n_r();
        let mut v = vec![0.0; a.n];
        for e in 0..grids.n_eta() {
            for j in 1..n_r - 1 {
                v[e * n_r + j] = 2.5;
            }
        }
        let mut out = vec![0.0; a.n];
        a.matvec(&v, &mut out);
        for e in 0..grids.n_eta() {
            for j in 2..n_r - 2 {
                let k = e * n_r + j;
                assert!(
                    (out[k] - v[k] / dt).abs() < 1e-10 * (v[k] / dt),
                    "row {k}: {} vs {}",
                    out[k],
                    v[k] / dt
                );
            }
        }
    }

    #[test]
    fn diffusion_block_symmetric_psd_in_weighted_inner_product() {
        let grids = small_grids();
        let params = all_off_params();
        let dt = 0.05;
        let ledger = ledger_for(&params, &grids, dt);
        let phi = vec![0.0];
        let op = assemble_polymer_operator(
            &params,
            &grids,
            &VelocityField::Zero,
            0.0,
            &phi,
            dt,
            0.0,
            &ledger,
            0,
        )
        .unwrap();
        let a = op.block_matrix(&grids, &params, 0);
        let w = solve_weights(&grids);
        // dense weighted matrix minus its mass part; boundary rows excluded
        let n = a.n;
        let n_r = grids.n_r();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                dense[i][a.cols[k]] = a.vals[k] * w[i];
            }
            dense[i][i] -= w[i] / dt;
        }
        let interior =
            |k: usize| -> bool { k % n_r != 0 && k % n_r != n_r - 1 };
        let mut max_asym = 0.0f64;
        let mut scale = 0.0f64;
        for i in (0..n).filter(|&i| interior(i)) {
            for j in (0..n).filter(|&j| interior(j)) {
                max_asym = max_asym.max((dense[i][j] - dense[j][i]).abs());
                scale = scale.max(dense[i][j].abs());
            }
        }
        assert!(max_asym <= 1e-10 * scale, "asymmetry {max_asym}, scale {scale}");
        // PSD on random interior fields
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..8 {
            let v: Vec<f64> = (0..n)
                .map(|k| if interior(k) { rng.gen::<f64>() - 0.5 } else { 0.0 })
                .collect();
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    quad += v[i] * dense[i][j] * v[j];
                }
            }
            assert!(quad >= -1e-10);
        }
    }

    #[test]
    fn oversized_timestep_rejected() {
        let grids = small_grids();
        let params = baseline_params();
        // dt chosen so k2 * dt >= 1
        let dt = 10.0;
        let ledger =
            StabilityLedger::build(&params, &VelocityField::Zero, &grids, 1.0, 1.0, dt, 10)
                .unwrap();
        let phi = vec![1.0];
        let res = assemble_polymer_operator(
            &params,
            &grids,
            &VelocityField::Zero,
            0.0,
            &phi,
            dt,
            0.0,
            &ledger,
            0,
        );
        assert!(matches!(res, Err(PolymerError::TimestepTooLarge(_))));
    }

    #[test]
    fn negative_monomer_rejected() {
        let grids = small_grids();
        let params = baseline_params();
        let dt = 1e-3;
        let ledger = ledger_for(&params, &grids, dt);
        let phi = vec![-0.5];
        let res = assemble_polymer_operator(
            &params,
            &grids,
            &VelocityField::Zero,
            0.0,
            &phi,
            dt,
            0.0,
            &ledger,
            0,
        );
        assert!(matches!(res, Err(PolymerError::NegativeMonomerInput { .. })));
    }

    #[test]
    fn rhs_examples() {
        let grids = small_grids();
        let dt = 0.01;
        let nodes = grids.space.centers();
        let map = FlowMap::identity(0, &nodes);
        let n_eta = grids.n_eta();
        let g_field = vec![1.0; n_eta];

        let zero = PolymerField::zeros(&grids);
        let rhs = polymer_rhs(&zero, &map, &g_field, &grids, dt).unwrap();
        assert!(rhs.rhs.iter().all(|&v| v == 0.0));

        // g = 0, identity map: rhs = psi_prev / dt on interior rows
        let psi = PolymerField::from_fn(&grids, |r, _, _| (-r).exp());
        let rhs = polymer_rhs(&psi, &map, &vec![0.0; n_eta], &grids, dt).unwrap();
        let n_r = grids.n_r();
        for e in 0..n_eta {
            for j in 1..n_r - 1 {
                let k = e * n_r + j;
                assert!((rhs.rhs[k] - psi.values[k] / dt).abs() < 1e-12);
            }
        }

        // g = 1, psi = exp(-r): rhs ~ exp(-r)/dt + 2 exp(-r)
        let rhs = polymer_rhs(&psi, &map, &g_field, &grids, dt).unwrap();
        for e in 0..n_eta {
            for j in 1..n_r - 1 {
                let r = grids.length.nodes[j];
                let expect = (-r).exp() / dt + 2.0 * (-r).exp();
                let k = e * n_r + j;
                // trapezoid tail error dominates the tolerance here
                assert!(
                    (rhs.rhs[k] - expect).abs() < 0.2,
                    "row {k}: {} vs {}",
                    rhs.rhs[k],
                    expect
                );
            }
        }
    }

    #[test]
    fn solve_examples_zero_and_pure_mass() {
        let grids = small_grids();
        let params = all_off_params();
        let dt = 0.02;
        let ledger = ledger_for(&params, &grids, dt);
        let mut op = assemble_polymer_operator(
            &params,
            &grids,
            &VelocityField::Zero,
            0.0,
            &vec![0.0],
            dt,
            0.0,
            &ledger,
            0,
        )
        .unwrap();
        // rhs = 0 -> psi = 0
        let zero_rhs = PolymerRhs {
            rhs: vec![0.0; grids.field_len()],
            pulled_prev: vec![0.0; grids.field_len()],
        };
        let (psi, _) = solve_polymer_step(&op, &zero_rhs, &grids, &params, 1e-12, 200).unwrap();
        assert!(psi.values.iter().all(|&v| v == 0.0));

        // pure mass (turn off the diffusion too): psi = dt * rhs
        op.stiffness = vec![Vec::new(); grids.n_eta()];
        let n_r = grids.n_r();
        let mut rhs = vec![0.0; grids.field_len()];
        for e in 0..grids.n_eta() {
            for j in 1..n_r - 1 {
                rhs[e * n_r + j] = (j as f64 * 0.37).sin().abs();
            }
        }
        let rhs = PolymerRhs {
            pulled_prev: rhs.clone(),
            rhs,
        };
        let (psi, _) = solve_polymer_step(&op, &rhs, &grids, &params, 1e-13, 400).unwrap();
        for (v, b) in psi.values.iter().zip(&rhs.rhs) {
            assert!((v - dt * b).abs() < 1e-10);
        }
    }

    #[test]
    fn manufactured_solution_recovered() {
        let grids = small_grids();
        let params = baseline_params();
        let dt = 0.01;
        let shear = [[0.0, 0.8, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let flow = VelocityField::HomogeneousLinear { grad: shear };
        let ledger =
            StabilityLedger::build(&params, &flow, &grids, 1.0, 1.0, dt, 100).unwrap();
        let op = assemble_polymer_operator(
            &params, &grids, &flow, 0.0, &[0.7], dt, 1e-4, &ledger, 0,
        )
        .unwrap();
        let a = op.block_matrix(&grids, &params, 0);
        // smooth field, zero at the r-boundaries
        let n_r = grids.n_r();
        let mut star = vec![0.0; a.n];
        for (e, eta) in grids.sphere.nodes.iter().enumerate() {
            for j in 1..n_r - 1 {
                let r = grids.length.nodes[j];
                star[e * n_r + j] = r * (-r).exp() * (1.0 + 0.5 * eta[0] * eta[2]);
            }
        }
        let mut b = vec![0.0; a.n];
        a.matvec(&star, &mut b);
        let tol = 1e-10;
        let rhs = PolymerRhs {
            rhs: b,
            pulled_prev: vec![0.0; a.n],
        };
        let (psi, _) = solve_polymer_step(&op, &rhs, &grids, &params, tol, 2000).unwrap();
        let err: f64 = psi
            .values
            .iter()
            .zip(&star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = star.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            err <= 10.0 * tol * norm,
            "manufactured recovery error {err} vs norm {norm}"
        );
    }

    #[test]
    fn single_step_positivity_and_envelope_under_shear() {
        let grids = Grids {
            length: LengthGrid::new(65, 23.0, 1.0),
            sphere: SphereGrid::new(6, 12),
            space: SpatialGrid::homogeneous(),
        };
        let params = baseline_params();
        let dt = 5e-3;
        let shear = [[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let flow = VelocityField::HomogeneousLinear { grad: shear };
        let mut ledger =
            StabilityLedger::build(&params, &flow, &grids, 1.0, 0.5, dt, 10).unwrap();
        // psi0 = 0.5 r exp(-2r) <= C0 exp(-alpha r) with C0 = 0.5 sup r e^{-r}
        let psi0 = PolymerField::from_fn(&grids, |r, eta, _| {
            0.25 * r * (-2.0 * r).exp() * (1.0 + 0.3 * eta[0] * eta[0])
        });
        let c0 = {
            let mut c = 0.0f64;
            for (col, _) in psi0.values.chunks_exact(grids.n_r()).zip(0..) {
                for (j, &v) in col.iter().enumerate() {
                    c = c.max(v * (params.alpha * grids.length.nodes[j]).exp());
                }
            }
            c
        };
        ledger.c0 = c0;
        ledger.c_n = c0;
        let op = assemble_polymer_operator(
            &params, &grids, &flow, 0.0, &[1.0], dt, grids.length.dr * grids.length.dr,
            &ledger, 0,
        )
        .unwrap();
        assert!(op.max_cell_peclet < 1.0, "config must sit in the M-matrix regime");
        assert!(op.coercivity_witness >= op.coercivity_floor);
        let nodes = grids.space.centers();
        let map = FlowMap::identity(0, &nodes);
        let rhs = polymer_rhs(&psi0, &map, &op.g_field, &grids, dt).unwrap();
        let (psi1, report) = solve_polymer_step(&op, &rhs, &grids, &params, 1e-12, 2000).unwrap();
        assert!(
            report.negative_part_rel <= 1e-10,
            "negative part {}",
            report.negative_part_rel
        );
        ledger.advance().unwrap();
        let viol = psi1.envelope_violation(ledger.c_n, params.alpha, &grids);
        assert!(viol <= 1e-8, "envelope violation {viol}");
    }

    #[test]
    fn epsilon_robustness_first_order() {
        let grids = small_grids();
        let params = baseline_params();
        let dt = 0.01;
        let ledger = ledger_for(&params, &grids, dt);
        let psi0 = PolymerField::from_fn(&grids, |r, _, _| r * (-1.5 * r).exp());
        let nodes = grids.space.centers();
        let map = FlowMap::identity(0, &nodes);
        let solve_with_eps = |eps: f64| -> Vec<f64> {
            let op = assemble_polymer_operator(
                &params,
                &grids,
                &VelocityField::Zero,
                0.0,
                &[1.0],
                dt,
                eps,
                &ledger,
                0,
            )
            .unwrap();
            let rhs = polymer_rhs(&psi0, &map, &op.g_field, &grids, dt).unwrap();
            solve_polymer_step(&op, &rhs, &grids, &params, 1e-13, 4000)
                .unwrap()
                .0
                .values
        };
        let base = solve_with_eps(0.0);
        let diff = |eps: f64| -> f64 {
            solve_with_eps(eps)
                .iter()
                .zip(&base)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let (d1, d2) = (diff(1e-3), diff(5e-4));
        assert!(d1 > 0.0 && d2 > 0.0);
        let ratio = d1 / d2;
        assert!(
            (1.5..=2.5).contains(&ratio),
            "O(eps) sensitivity expected, ratio {ratio} ({d1}, {d2})"
        );
    }
}
