//! Conserved and monitored quantities, computed by an independent quadrature
//! pass over snapshots of the state (never through solver internals), plus
//! the discrete energy budgets of the scheme and the CSV schema they are
//! reported in.

use crate::ledger::StabilityLedger;
use crate::length::{weighted_norm_sq, NormSpace};
use crate::linalg::{self, Mat3};
use crate::monomer::{gradient_energy, MonomerField};
use crate::params::{AWeight, ModelParams};
use crate::polymer::PolymerField;
use crate::space::Grids;

pub const CSV_VERSION: u32 = 1;

pub const CSV_COLUMNS: &str = "step,t,total_mass,monomer_total,polymer_mass,polymer_count,\
envelope_margin,psi_negative_rel,phi_min,phi_max,\
stress_xx,stress_yy,stress_zz,stress_xy,stress_xz,stress_yz,stress_min_eig,\
psi_budget_lhs,psi_budget_rhs,phi_budget_lhs,phi_budget_rhs,\
map_det_dev,map_roundtrip,coercivity_witness,solver_iterations";

/// Versioned CSV header; `config_hash` ties every output file to the run
/// configuration so mixed-provenance comparisons can be rejected.
pub fn csv_header(config_hash: u64) -> String {
    format!(
        "# fibrilflow diagnostics csv v{CSV_VERSION}\n# config_hash={config_hash:016x}\n# length truncation: homogeneous dirichlet at r_max\n{CSV_COLUMNS}\n"
    )
}

#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub total_mass: f64,
    pub monomer_total: f64,
    pub polymer_mass: f64,
    pub polymer_count: f64,
    /// `min over the grid of C_n exp(-alpha r) - psi`; nonnegative while the
    /// envelope holds.
    pub envelope_margin: f64,
    pub psi_negative_rel: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    /// Domain-averaged stress `(1/|Omega|) int r^2 (eta x eta) psi`.
    pub stress: Mat3,
    pub stress_min_eig: f64,
    pub psi_budget_lhs: f64,
    pub psi_budget_rhs: f64,
    pub phi_budget_lhs: f64,
    pub phi_budget_rhs: f64,
    pub map_det_dev: f64,
    pub map_roundtrip: f64,
    pub coercivity_witness: f64,
    pub solver_iterations: usize,
}

impl DiagnosticsRecord {
    pub fn to_csv_row(&self) -> String {
        let s = &self.stress;
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            self.step,
            self.t,
            self.total_mass,
            self.monomer_total,
            self.polymer_mass,
            self.polymer_count,
            self.envelope_margin,
            self.psi_negative_rel,
            self.phi_min,
            self.phi_max,
            s[0][0],
            s[1][1],
            s[2][2],
            s[0][1],
            s[0][2],
            s[1][2],
            self.stress_min_eig,
            self.psi_budget_lhs,
            self.psi_budget_rhs,
            self.phi_budget_lhs,
            self.phi_budget_rhs,
            self.map_det_dev,
            self.map_roundtrip,
            self.coercivity_witness,
            self.solver_iterations
        )
    }
}

/// Per-step metrics handed over by the stepping loop.
#[derive(Debug, Clone, Default)]
pub struct StepMetrics {
    pub map_det_dev: f64,
    pub map_roundtrip: f64,
    pub solver_iterations: usize,
    pub psi_negative_rel: f64,
    pub coercivity_witness: f64,
}

/// Running accumulators of the discrete energy estimates.
#[derive(Debug, Clone)]
pub struct BudgetTracker {
    pub psi0_l2a_sq: f64,
    pub phi0_l2_sq: f64,
    pub max_psi_sq: f64,
    pub dirichlet_sum: f64,
    pub rpsi_sum: f64,
    pub incr_sum: f64,
    pub max_phi_sq: f64,
    pub phi_incr_sum: f64,
    pub phi_grad_sum: f64,
}

/// `int A(r) |grad_eta psi|^2 dq dy` by the node-centered sphere gradient.
pub fn sphere_dirichlet_energy(values: &[f64], grids: &Grids, a_weight: &AWeight) -> f64 {
    let n_r = grids.n_r();
    let n_eta = grids.n_eta();
    let wy = grids.space.cell_volume();
    let mut total = 0.0;
    let mut slice = vec![0.0; n_eta];
    for iy in 0..grids.n_y() {
        let block = &values[grids.block(iy)];
        for j in 0..n_r {
            for e in 0..n_eta {
                slice[e] = block[e * n_r + j];
            }
            let grad = grids.sphere.surface_gradient(&slice);
            let w = grids.length.weights[j]
                * grids.length.exp_weights[j]
                * a_weight.eval(grids.length.nodes[j]);
            for (e, gv) in grad.iter().enumerate() {
                total += wy * grids.sphere.weights[e] * w * linalg::dot(*gv, *gv);
            }
        }
    }
    total
}

/// `int r psi^2 dq dy`.
pub fn r_weighted_l2alpha_sq(values: &[f64], grids: &Grids) -> f64 {
    let n_r = grids.n_r();
    let wy = grids.space.cell_volume();
    let mut total = 0.0;
    for (c, column) in values.chunks_exact(n_r).enumerate() {
        let e = c % grids.n_eta();
        let we = grids.sphere.weights[e] * wy;
        for (j, &v) in column.iter().enumerate() {
            total += we
                * grids.length.weights[j]
                * grids.length.exp_weights[j]
                * grids.length.nodes[j]
                * v
                * v;
        }
    }
    total
}

pub fn psi_l2alpha_sq(values: &[f64], grids: &Grids) -> f64 {
    let y_weights = grids.space.weights();
    weighted_norm_sq(
        values,
        NormSpace::L2Alpha,
        &grids.length,
        &grids.sphere,
        &y_weights,
        &AWeight::Unit,
    )
}

pub fn phi_l2_sq(values: &[f64], grids: &Grids) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>() * grids.space.cell_volume()
}

impl BudgetTracker {
    pub fn new(psi0: &PolymerField, phi0: &MonomerField, grids: &Grids) -> Self {
        let psi0_sq = psi_l2alpha_sq(&psi0.values, grids);
        let phi0_sq = phi_l2_sq(&phi0.values, grids);
        BudgetTracker {
            psi0_l2a_sq: psi0_sq,
            phi0_l2_sq: phi0_sq,
            max_psi_sq: psi0_sq,
            dirichlet_sum: 0.0,
            rpsi_sum: 0.0,
            incr_sum: 0.0,
            max_phi_sq: phi0_sq,
            phi_incr_sum: 0.0,
            phi_grad_sum: 0.0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn after_step(
        &mut self,
        psi_new: &PolymerField,
        pulled_prev: &[f64],
        phi_new: &MonomerField,
        phi_prev: &MonomerField,
        grids: &Grids,
        a_weight: &AWeight,
    ) {
        self.max_psi_sq = self.max_psi_sq.max(psi_l2alpha_sq(&psi_new.values, grids));
        self.dirichlet_sum += sphere_dirichlet_energy(&psi_new.values, grids, a_weight);
        self.rpsi_sum += r_weighted_l2alpha_sq(&psi_new.values, grids);
        let incr: Vec<f64> = psi_new
            .values
            .iter()
            .zip(pulled_prev)
            .map(|(a, b)| a - b)
            .collect();
        self.incr_sum += psi_l2alpha_sq(&incr, grids);

        self.max_phi_sq = self.max_phi_sq.max(phi_l2_sq(&phi_new.values, grids));
        let phi_incr: Vec<f64> = phi_new
            .values
            .iter()
            .zip(&phi_prev.values)
            .map(|(a, b)| a - b)
            .collect();
        self.phi_incr_sum += phi_l2_sq(&phi_incr, grids);
        self.phi_grad_sum += gradient_energy(&phi_new.values, &grids.space);
    }

    pub fn psi_budget_lhs(&self, d1: f64, g_lo: f64, dt: f64) -> f64 {
        self.max_psi_sq
            + d1 * dt * self.dirichlet_sum
            + 2.0 * g_lo * dt * self.rpsi_sum
            + self.incr_sum
    }

    pub fn psi_budget_rhs(&self, k3: f64, t_total: f64) -> f64 {
        4.0 * (k3 * t_total).exp() * self.psi0_l2a_sq
    }

    pub fn phi_budget_lhs(&self, d2: f64, dt: f64) -> f64 {
        self.max_phi_sq + self.phi_incr_sum + 2.0 * d2 * dt * self.phi_grad_sum
    }

    pub fn phi_budget_rhs(&self) -> f64 {
        2.0 * self.phi0_l2_sq
    }
}

/// All monitored quantities of one snapshot, by independent quadrature.
#[allow(clippy::too_many_arguments)]
pub fn compute_diagnostics(
    step: usize,
    t: f64,
    psi: &PolymerField,
    phi: &MonomerField,
    grids: &Grids,
    params: &ModelParams,
    ledger: &StabilityLedger,
    tracker: &BudgetTracker,
    metrics: &StepMetrics,
) -> DiagnosticsRecord {
    let n_r = grids.n_r();
    let wy = grids.space.cell_volume();
    let mut polymer_mass = 0.0;
    let mut polymer_count = 0.0;
    let mut stress = linalg::ZERO_MAT3;
    for (c, column) in psi.values.chunks_exact(n_r).enumerate() {
        let e = c % grids.n_eta();
        let eta = grids.sphere.nodes[e];
        let we = grids.sphere.weights[e] * wy;
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (j, &v) in column.iter().enumerate() {
            let w = grids.length.weights[j];
            let r = grids.length.nodes[j];
            m0 += w * v;
            m1 += w * r * v;
            m2 += w * r * r * v;
        }
        polymer_count += we * m0;
        polymer_mass += we * m1;
        for a in 0..3 {
            for b in 0..3 {
                stress[a][b] += we * m2 * eta[a] * eta[b];
            }
        }
    }
    let inv_vol = 1.0 / grids.space.volume();
    for row in stress.iter_mut() {
        for v in row.iter_mut() {
            *v *= inv_vol;
        }
    }
    let monomer_total = phi.total(&grids.space);
    let (neg, tot) = psi.negative_part_norms(grids);
    let t_total = ledger.dt * ledger.n_steps as f64;
    DiagnosticsRecord {
        step,
        t,
        total_mass: monomer_total + polymer_mass,
        monomer_total,
        polymer_mass,
        polymer_count,
        envelope_margin: -psi.envelope_violation(ledger.c_n, params.alpha, grids),
        psi_negative_rel: if tot > 0.0 { neg / tot } else { 0.0 },
        phi_min: phi.min(),
        phi_max: phi.max(),
        stress,
        stress_min_eig: linalg::sym_eigenvalues(&stress)[0],
        psi_budget_lhs: tracker.psi_budget_lhs(params.d1, ledger.g_lo, ledger.dt),
        psi_budget_rhs: tracker.psi_budget_rhs(ledger.k3, t_total),
        phi_budget_lhs: tracker.phi_budget_lhs(params.d2, ledger.dt),
        phi_budget_rhs: tracker.phi_budget_rhs(),
        map_det_dev: metrics.map_det_dev,
        map_roundtrip: metrics.map_roundtrip,
        coercivity_witness: metrics.coercivity_witness,
        solver_iterations: metrics.solver_iterations,
    }
}
