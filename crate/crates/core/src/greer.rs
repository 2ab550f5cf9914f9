//! Independent 1D solver for the zero-flow reduction: the averaged polymer
//! length density `f(t, r)` coupled to a scalar monomer concentration.
//!
//!   `d_t f + tau0 phi(t) d_r f + g0 r f = 2 g_lo int_r^inf f dr'`,  `f(0) = 0`
//!   `d_phi/dt = -tau0 phi int f dr`
//!
//! Discretized with the same ingredients as the full solver (backward Euler,
//! upwind in r, cumulative-sum gain, Dirichlet truncation) but assembled as a
//! separate code path: the implicit bidiagonal system is solved by a direct
//! forward sweep, no shared operator assembly and no Krylov iteration, so
//! agreement with the degenerate full solver is a genuine oracle test.

use crate::config::ResolvedConfig;
use crate::length::LengthGrid;
use crate::simulation::{SimError, Simulation};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GreerError {
    #[error("timestep too large for the reduced system: k2*dt = {k2_dt:.4}, k3*dt = {k3_dt:.4}")]
    TimestepTooLarge { k2_dt: f64, k3_dt: f64 },
    #[error("configuration is not the degenerate reduction: {0}")]
    ConfigurationNotDegenerate(String),
    #[error(transparent)]
    Simulation(#[from] Box<SimError>),
}

#[derive(Debug, Clone)]
pub struct GreerState {
    pub f: Vec<f64>,
    pub phi: f64,
    pub t: f64,
}

/// The reduced solver with its own step-size guard (the ledger constants
/// specialized to zero flow: `C_P = C_D = 0`).
#[derive(Debug, Clone)]
pub struct GreerSolver {
    pub length: LengthGrid,
    pub tau0: f64,
    pub g0: f64,
    pub g_lo: f64,
    pub dt: f64,
    pub k2: f64,
    pub k3: f64,
}

impl GreerSolver {
    pub fn new(
        length: LengthGrid,
        tau0: f64,
        g0: f64,
        g_lo: f64,
        phi0_inf: f64,
        c0: f64,
        dt: f64,
        n_steps: usize,
    ) -> Result<Self, GreerError> {
        if (g0 - g_lo).abs() > 1e-14 * g0.max(1.0) {
            return Err(GreerError::ConfigurationNotDegenerate(format!(
                "the reduction requires g0 = g_lo (loss and gain share the constant rate); got g0 = {g0}, g_lo = {g_lo}"
            )));
        }
        let alpha = length.alpha;
        let t_total = dt * n_steps as f64;
        let k1 = 2.0 * g0 / alpha;
        let k2 = alpha * tau0 * phi0_inf;
        let c_inf = 2.0 * c0 * ((k1 + k2) * t_total).exp();
        let k3 = k2
            + 4.0 * g0 * alpha.powf(-1.5) * c_inf * (4.0 * std::f64::consts::PI).sqrt();
        let solver = GreerSolver {
            length,
            tau0,
            g0,
            g_lo,
            dt,
            k2,
            k3,
        };
        let (k2_dt, k3_dt) = (solver.k2 * dt, solver.k3 * dt);
        if k2_dt >= 1.0 || k3_dt >= 1.0 {
            return Err(GreerError::TimestepTooLarge { k2_dt, k3_dt });
        }
        Ok(solver)
    }

    /// One backward-Euler step: implicit in `f` (forward sweep of the lower
    /// bidiagonal system); the monomer update consumes the previous `f`.
    pub fn step(&self, state: &GreerState) -> GreerState {
        let n = self.length.n_r;
        let dr = self.length.dr;
        let dt = self.dt;
        // gain from the previous state: backward cumulative trapezoid
        let mut tail = vec![0.0; n];
        for j in (0..n - 1).rev() {
            tail[j] = tail[j + 1] + 0.5 * dr * (state.f[j] + state.f[j + 1]);
        }
        // monomer sink uses the previous f as well: trapezoid of f dr
        let mut count = 0.0;
        for j in 0..n - 1 {
            count += 0.5 * dr * (state.f[j] + state.f[j + 1]);
        }
        let transport = self.tau0 * state.phi / dr;
        let mut f = vec![0.0; n];
        for j in 1..n - 1 {
            let r = self.length.nodes[j];
            let num = state.f[j] / dt + 2.0 * self.g_lo * tail[j] + transport * f[j - 1];
            let den = 1.0 / dt + transport + self.g0 * r;
            f[j] = num / den;
        }
        let phi = state.phi / (1.0 + dt * self.tau0 * count);
        GreerState {
            f,
            phi,
            t: state.t + dt,
        }
    }

    /// `phi + int r f dr`, the conserved mass of the reduction.
    pub fn total_mass(&self, state: &GreerState) -> f64 {
        state.phi + self.length.first_moment(&state.f)
    }
}

/// Runs the degenerate full solver and the reference side by side on the
/// grids of `cfg`, returning the per-step L2 discrepancy of the averaged
/// polymer density.
pub fn compare_with_full(cfg: &ResolvedConfig) -> Result<Vec<f64>, GreerError> {
    use crate::flow::VelocityField;
    use crate::params::GClosure;

    if cfg.flow != VelocityField::Zero {
        return Err(GreerError::ConfigurationNotDegenerate(
            "flow must be zero".into(),
        ));
    }
    if !cfg.grids.space.is_homogeneous() {
        return Err(GreerError::ConfigurationNotDegenerate(
            "spatial grid must be homogeneous".into(),
        ));
    }
    let g0 = match cfg.params.g_rate {
        GClosure::Constant { g0 } => g0,
        _ => {
            return Err(GreerError::ConfigurationNotDegenerate(
                "scission closure must be constant".into(),
            ))
        }
    };
    // eta-uniform initial data: every column of psi0 identical
    let n_r = cfg.grids.n_r();
    let first = &cfg.psi0.values[0..n_r];
    for column in cfg.psi0.values.chunks_exact(n_r) {
        for (a, b) in column.iter().zip(first) {
            if (a - b).abs() > 1e-14 * b.abs().max(1.0) {
                return Err(GreerError::ConfigurationNotDegenerate(
                    "initial polymer data must be uniform in orientation".into(),
                ));
            }
        }
    }

    let mut sim = Simulation::new(cfg.clone()).map_err(Box::new)?;
    let reference = GreerSolver::new(
        cfg.grids.length.clone(),
        cfg.params.tau0,
        g0,
        cfg.params.g_rate.g_lo(),
        cfg.phi0.max(),
        cfg.c0,
        cfg.dt,
        cfg.n_steps,
    )?;
    // f = (1/|Omega|) int psi deta dy; with the uniform-eta degenerate data
    // f0 has the 4 pi of the sphere folded in.
    let sphere_w = cfg.grids.sphere.weights.clone();
    let average_full = |sim: &Simulation| -> Vec<f64> {
        let psi = &sim.state.psi.values;
        let mut f = vec![0.0; n_r];
        for (c, column) in psi.chunks_exact(n_r).enumerate() {
            let e = c % cfg.grids.n_eta();
            for (j, &v) in column.iter().enumerate() {
                f[j] += sphere_w[e] * v * cfg.grids.space.cell_volume();
            }
        }
        let inv_vol = 1.0 / cfg.grids.space.volume();
        f.iter_mut().for_each(|v| *v *= inv_vol);
        f
    };

    let mut ref_state = GreerState {
        f: average_full(&sim),
        phi: cfg.phi0.values[0],
        t: 0.0,
    };
    let mut discrepancies = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        sim.step().map_err(Box::new)?;
        ref_state = reference.step(&ref_state);
        let f_full = average_full(&sim);
        let mut err_sq = 0.0;
        for (j, (a, b)) in f_full.iter().zip(&ref_state.f).enumerate() {
            err_sq += cfg.grids.length.weights[j] * (a - b) * (a - b);
        }
        discrepancies.push(err_sq.sqrt());
    }
    Ok(discrepancies)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> LengthGrid {
        LengthGrid::new(257, 23.0, 1.0)
    }

    #[test]
    fn zero_state_is_absorbing() {
        let g = grid();
        let solver = GreerSolver::new(g.clone(), 0.3, 1.0, 1.0, 1.0, 1.0, 1e-3, 100).unwrap();
        let state = GreerState {
            f: vec![0.0; g.n_r],
            phi: 0.7,
            t: 0.0,
        };
        let next = solver.step(&state);
        assert!(next.f.iter().all(|&v| v == 0.0));
        assert_eq!(next.phi, 0.7);
    }

    #[test]
    fn count_production_rate_at_t0() {
        // tau0 = 0, g0 = 1, f0 = exp(-r): d/dt int f dr at t = 0 equals
        // int r f dr = 1, checked by forward difference within 5%.
        let g = grid();
        let dt = 1e-3;
        let solver = GreerSolver::new(g.clone(), 0.0, 1.0, 1.0, 1.0, 1.0, dt, 10).unwrap();
        let f0: Vec<f64> = g.nodes.iter().map(|&r| (-r).exp()).collect();
        let state = GreerState {
            f: f0.clone(),
            phi: 1.0,
            t: 0.0,
        };
        let next = solver.step(&state);
        let n0 = g.integrate(&f0);
        let n1 = g.integrate(&next.f);
        let rate = (n1 - n0) / dt;
        let expect = g.first_moment(&f0);
        assert!(
            (rate - expect).abs() <= 0.05 * expect.abs(),
            "rate {rate}, expected {expect}"
        );
    }

    #[test]
    fn mass_invariant_over_unit_horizon() {
        let g = grid();
        let dt = 1e-3;
        let n_steps = 1000;
        let solver = GreerSolver::new(g.clone(), 0.3, 1.0, 1.0, 1.0, 1.0, dt, n_steps).unwrap();
        let mut state = GreerState {
            f: g.nodes.iter().map(|&r| r * (-2.0 * r).exp()).collect(),
            phi: 1.0,
            t: 0.0,
        };
        let m0 = solver.total_mass(&state);
        let mut worst = 0.0f64;
        for _ in 0..n_steps {
            state = solver.step(&state);
            worst = worst.max((solver.total_mass(&state) - m0).abs() / m0);
        }
        assert!(worst <= 1e-3, "relative mass drift {worst}");
        assert!(state.f.iter().all(|&v| v >= 0.0));
        assert!(state.phi >= 0.0);
    }

    #[test]
    fn mismatched_rates_rejected() {
        let g = grid();
        match GreerSolver::new(g, 0.3, 1.0, 0.8, 1.0, 1.0, 1e-3, 10) {
            Err(GreerError::ConfigurationNotDegenerate(_)) => {}
            other => panic!("expected ConfigurationNotDegenerate, got {other:?}"),
        }
    }

    #[test]
    fn oversized_step_rejected() {
        let g = grid();
        match GreerSolver::new(g, 5.0, 1.0, 1.0, 10.0, 1.0, 0.5, 4) {
            Err(GreerError::TimestepTooLarge { .. }) => {}
            other => panic!("expected TimestepTooLarge, got {other:?}"),
        }
    }
}
