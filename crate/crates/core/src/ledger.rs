//! Step-size guards and envelope bookkeeping.
//!
//! The per-step solvability and bounds of the scheme hold only under explicit
//! smallness conditions on `dt`, with constants built from the model bounds
//! and two measured suprema of the orientation drift. The ledger computes
//! everything at startup, refuses to run when `k2 dt >= 1` or `k3 dt >= 1`,
//! and advances the envelope constant
//! `C_n = C_{n-1} (1 + k1 dt) / (1 - k2 dt)` every step, checking it against
//! its horizon bound `C_inf = 2 C_0 exp((k1 + k2) T)`.

use crate::flow::VelocityField;
use crate::params::{try_evaluate_g, ModelParams, ParamsError};
use crate::space::Grids;
use crate::sphere;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("timestep too large: k2*dt = {k2_dt:.4}, k3*dt = {k3_dt:.4} (both must be < 1)")]
    TimestepTooLarge { k2_dt: f64, k3_dt: f64 },
    #[error("envelope constant C_n = {c_n:.4e} exceeded its bound C_inf = {c_inf:.4e} at step {step}")]
    EnvelopeOverflow { c_n: f64, c_inf: f64, step: usize },
    #[error(transparent)]
    Params(#[from] ParamsError),
}

#[derive(Debug, Clone)]
pub struct StabilityLedger {
    /// `2 g_hi / alpha`: gain-side growth rate of the envelope.
    pub k1: f64,
    /// `alpha tau0 ||phi0||_inf + C_D C_A`: loss of the envelope supersolution.
    pub k2: f64,
    /// coercivity/energy budget constant.
    pub k3: f64,
    pub c0: f64,
    pub c_n: f64,
    pub c_inf: f64,
    /// measured sup of `|P(grad_u eta)|` over the flow envelope.
    pub c_p: f64,
    /// measured sup of `|div_eta P(grad_u eta)|`.
    pub c_d: f64,
    pub g_lo: f64,
    pub g_hi: f64,
    pub phi0_inf: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub step: usize,
}

impl StabilityLedger {
    /// Builds the ledger, sampling the drift bounds and validating the
    /// scission closure over the `(y, eta)` product grid.
    pub fn build(
        params: &ModelParams,
        flow: &VelocityField,
        grids: &Grids,
        phi0_inf: f64,
        c0: f64,
        dt: f64,
        n_steps: usize,
    ) -> Result<Self, LedgerError> {
        let mut c_p = 0.0f64;
        let mut c_d = 0.0f64;
        let centers = grids.space.centers();
        for &y in &centers {
            let grad = flow.grad(0.0, y);
            let u = flow.eval(0.0, y);
            for &eta in &grids.sphere.nodes {
                let drift = sphere::projected_drift(&grad, eta);
                c_p = c_p.max(crate::linalg::norm(drift));
                c_d = c_d.max(sphere::divergence_of_projected_drift(&grad, eta).abs());
                try_evaluate_g(params, &grad, u, eta)?;
            }
        }
        let c_a = params.a_weight.c_a();
        let alpha = params.alpha;
        let g_hi = params.g_rate.g_hi();
        let t_total = dt * n_steps as f64;
        let k1 = 2.0 * g_hi / alpha;
        let k2 = alpha * params.tau0 * phi0_inf + c_d * c_a;
        let c_inf = 2.0 * c0 * ((k1 + k2) * t_total).exp();
        let omega_vol = grids.space.volume();
        let sphere_area = 4.0 * std::f64::consts::PI;
        let k3 = alpha * params.tau0 * phi0_inf
            + c_p * c_p * c_a / params.d1
            + 4.0 * g_hi * alpha.powf(-1.5) * c_inf * (omega_vol * sphere_area).sqrt();
        Ok(StabilityLedger {
            k1,
            k2,
            k3,
            c0,
            c_n: c0,
            c_inf,
            c_p,
            c_d,
            g_lo: params.g_rate.g_lo(),
            g_hi,
            phi0_inf,
            dt,
            n_steps,
            step: 0,
        })
    }

    /// The "dt small enough" gate; must pass before any step runs.
    pub fn precheck(&self) -> Result<(), LedgerError> {
        let (k2_dt, k3_dt) = (self.k2 * self.dt, self.k3 * self.dt);
        if k2_dt >= 1.0 || k3_dt >= 1.0 {
            return Err(LedgerError::TimestepTooLarge { k2_dt, k3_dt });
        }
        Ok(())
    }

    pub fn growth_factor(&self) -> f64 {
        (1.0 + self.k1 * self.dt) / (1.0 - self.k2 * self.dt)
    }

    /// Closed form `C_n = C_0 ((1 + k1 dt)/(1 - k2 dt))^n`.
    pub fn envelope_constant_at(&self, n: usize) -> f64 {
        self.c0 * self.growth_factor().powi(n as i32)
    }

    /// Advances the envelope recursion by one step.
    pub fn advance(&mut self) -> Result<(), LedgerError> {
        self.c_n *= self.growth_factor();
        self.step += 1;
        if self.c_n > self.c_inf * (1.0 + 1e-12) {
            return Err(LedgerError::EnvelopeOverflow {
                c_n: self.c_n,
                c_inf: self.c_inf,
                step: self.step,
            });
        }
        Ok(())
    }
}
