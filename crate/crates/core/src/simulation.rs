//! The outer time loop: alternate polymer and monomer steps on the shared
//! step grid, maintain the stability ledger and energy budgets, emit
//! diagnostics at the configured cadence.
//!
//! The step ordering is fixed by the scheme: the polymer solve consumes
//! `phi^{n-1}` (not `phi^n`) and the monomer solve consumes `psi^{n-1}`
//! (not `psi^n`), so the sink is computed before the polymer state is
//! replaced.

use crate::config::ResolvedConfig;
use crate::diagnostics::{compute_diagnostics, BudgetTracker, DiagnosticsRecord, StepMetrics};
use crate::flow::{compute_flow_map, FlowError, FlowMap, VelocityField};
use crate::ledger::{LedgerError, StabilityLedger};
use crate::length::total_integral;
use crate::linalg::Vec3;
use crate::monomer::{assemble_monomer_operator, solve_monomer_step, MonomerError, MonomerField};
use crate::polymer::{
    assemble_polymer_operator, polymer_rhs, solve_polymer_step, PolymerError, PolymerField,
};
use crate::space::Grids;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("invariant breach: {name} at step {step}, magnitude {magnitude:.3e}")]
    InvariantBreach {
        name: &'static str,
        step: usize,
        magnitude: f64,
    },
    #[error(transparent)]
    Polymer(#[from] PolymerError),
    #[error(transparent)]
    Monomer(#[from] MonomerError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl SimError {
    /// Process exit code contract: 2 for rejected configs and invariant
    /// breaches, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Ledger(_) | SimError::InvariantBreach { .. } => 2,
            SimError::Polymer(PolymerError::Solver(_)) | SimError::Monomer(MonomerError::Solver(_)) => 3,
            SimError::Polymer(PolymerError::TimestepTooLarge(_)) => 2,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub step: usize,
    pub t: f64,
    pub psi: PolymerField,
    pub phi: MonomerField,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub steps_completed: usize,
    pub initial_mass: f64,
    pub max_mass_drift_rel: f64,
    pub max_negative_rel: f64,
    pub min_envelope_margin: f64,
    pub warnings: Vec<String>,
}

pub struct Simulation {
    pub cfg: ResolvedConfig,
    pub ledger: StabilityLedger,
    pub state: SimulationState,
    pub tracker: BudgetTracker,
    pub rho_target: f64,
    nodes: Vec<Vec3>,
    last_metrics: StepMetrics,
}

/// `psi0 <= c0 exp(-alpha r)` check with the witness location of the worst
/// violation.
pub struct EnvelopeReport {
    pub pass: bool,
    pub max_violation: f64,
    pub witness: (usize, usize, usize),
}

pub fn check_initial_envelope(
    psi0: &PolymerField,
    c0: f64,
    alpha: f64,
    grids: &Grids,
) -> EnvelopeReport {
    let n_r = grids.n_r();
    let n_eta = grids.n_eta();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = (0, 0, 0);
    for (c, column) in psi0.values.chunks_exact(n_r).enumerate() {
        for (j, &v) in column.iter().enumerate() {
            let excess = v - c0 * (-alpha * grids.length.nodes[j]).exp();
            if excess > worst {
                worst = excess;
                witness = (c / n_eta, c % n_eta, j);
            }
        }
    }
    EnvelopeReport {
        pass: worst <= 1e-12 * c0.max(1.0),
        max_violation: worst,
        witness,
    }
}

impl Simulation {
    pub fn new(cfg: ResolvedConfig) -> Result<Self, SimError> {
        cfg.flow.validate_domain(&cfg.grids.space)?;
        let min_psi0 = cfg.psi0.min_value();
        if min_psi0 < 0.0 {
            return Err(SimError::InvariantBreach {
                name: "initial polymer density must be nonnegative",
                step: 0,
                magnitude: min_psi0,
            });
        }
        let env = check_initial_envelope(&cfg.psi0, cfg.c0, cfg.params.alpha, &cfg.grids);
        if !env.pass {
            return Err(SimError::InvariantBreach {
                name: "initial envelope psi0 <= C0 exp(-alpha r)",
                step: 0,
                magnitude: env.max_violation,
            });
        }
        let phi0_inf = cfg.phi0.max();
        if cfg.phi0.min() < 0.0 {
            return Err(SimError::InvariantBreach {
                name: "initial monomer concentration must be nonnegative",
                step: 0,
                magnitude: cfg.phi0.min(),
            });
        }
        let ledger = StabilityLedger::build(
            &cfg.params,
            &cfg.flow,
            &cfg.grids,
            phi0_inf,
            cfg.c0,
            cfg.dt,
            cfg.n_steps,
        )?;
        ledger.precheck()?;
        let tracker = BudgetTracker::new(&cfg.psi0, &cfg.phi0, &cfg.grids);
        let nodes = cfg.grids.space.centers();
        let rho_target = cfg.params.rho0.unwrap_or_else(|| {
            measured_mass(&cfg.psi0, &cfg.phi0, &cfg.grids)
        });
        let state = SimulationState {
            step: 0,
            t: 0.0,
            psi: cfg.psi0.clone(),
            phi: cfg.phi0.clone(),
        };
        Ok(Simulation {
            cfg,
            ledger,
            state,
            tracker,
            rho_target,
            nodes,
            last_metrics: StepMetrics::default(),
        })
    }

    fn flow_map(&self, t_prev: f64, t_now: f64) -> Result<FlowMap, FlowError> {
        match self.cfg.flow {
            VelocityField::Zero | VelocityField::HomogeneousLinear { .. } => {
                Ok(FlowMap::identity(self.state.step, &self.nodes))
            }
            _ => compute_flow_map(
                &self.cfg.flow,
                t_prev,
                t_now,
                &self.nodes,
                self.cfg.grids.space.h,
                self.cfg.ode_tol,
            ),
        }
    }

    /// Advances one step; both solves consume only `n-1` data.
    pub fn step(&mut self) -> Result<(), SimError> {
        let cfg = &self.cfg;
        let dt = cfg.dt;
        let t_now = (self.state.step + 1) as f64 * dt;
        let map = self.flow_map(self.state.t, t_now)?;

        // polymerization sink from the previous polymer state
        let sink: Vec<f64> = total_integral(
            &self.state.psi.values,
            &cfg.grids.length,
            &cfg.grids.sphere,
            cfg.grids.n_y(),
        )
        .iter()
        .map(|v| cfg.params.tau0 * v)
        .collect();

        let op = assemble_polymer_operator(
            &cfg.params,
            &cfg.grids,
            &cfg.flow,
            t_now,
            &self.state.phi.values,
            dt,
            cfg.eps,
            &self.ledger,
            self.state.step,
        )?;
        let rhs = polymer_rhs(&self.state.psi, &map, &op.g_field, &cfg.grids, dt)
            .map_err(PolymerError::Flow)?;
        let (psi_new, report) =
            solve_polymer_step(&op, &rhs, &cfg.grids, &cfg.params, cfg.solver_tol, cfg.max_iter)?;

        let mop = assemble_monomer_operator(
            cfg.params.d2,
            &cfg.grids.space,
            &cfg.flow,
            t_now,
            &sink,
            dt,
        )?;
        let (phi_new, phi_iters) =
            solve_monomer_step(&mop, &self.state.phi, cfg.solver_tol, cfg.max_iter)?;

        self.ledger.advance()?;
        self.tracker.after_step(
            &psi_new,
            &rhs.pulled_prev,
            &phi_new,
            &self.state.phi,
            &cfg.grids,
            &cfg.params.a_weight,
        );
        self.last_metrics = StepMetrics {
            map_det_dev: map.max_det_deviation,
            map_roundtrip: map.max_roundtrip,
            solver_iterations: report.total_iterations + phi_iters,
            psi_negative_rel: report.negative_part_rel,
            coercivity_witness: op.coercivity_witness,
        };
        self.state = SimulationState {
            step: self.state.step + 1,
            t: t_now,
            psi: psi_new,
            phi: phi_new,
        };
        Ok(())
    }

    pub fn diagnostics(&self) -> DiagnosticsRecord {
        compute_diagnostics(
            self.state.step,
            self.state.t,
            &self.state.psi,
            &self.state.phi,
            &self.cfg.grids,
            &self.cfg.params,
            &self.ledger,
            &self.tracker,
            &self.last_metrics,
        )
    }

    fn check_invariants(&self, rec: &DiagnosticsRecord, summary: &mut RunSummary) -> Result<(), SimError> {
        let step = self.state.step;
        let phi0_inf = self.ledger.phi0_inf;
        let mut breach = |name: &'static str, magnitude: f64, bad: bool| -> Result<(), SimError> {
            if bad {
                if self.cfg.strict {
                    return Err(SimError::InvariantBreach {
                        name,
                        step,
                        magnitude,
                    });
                }
                summary
                    .warnings
                    .push(format!("step {step}: {name} ({magnitude:.3e})"));
            }
            Ok(())
        };
        breach(
            "polymer positivity ||psi_-|| <= 1e-10 ||psi||",
            rec.psi_negative_rel,
            rec.psi_negative_rel > 1e-10,
        )?;
        breach(
            "polymer envelope psi <= C_n exp(-alpha r)",
            -rec.envelope_margin,
            rec.envelope_margin < -1e-8,
        )?;
        breach(
            "monomer lower bound",
            rec.phi_min,
            rec.phi_min < -1e-12,
        )?;
        breach(
            "monomer maximum principle",
            rec.phi_max - phi0_inf,
            rec.phi_max > phi0_inf + 1e-12,
        )?;
        breach(
            "polymer energy budget",
            rec.psi_budget_lhs - rec.psi_budget_rhs,
            rec.psi_budget_lhs > rec.psi_budget_rhs,
        )?;
        breach(
            "monomer energy budget",
            rec.phi_budget_lhs - rec.phi_budget_rhs,
            rec.phi_budget_lhs > rec.phi_budget_rhs,
        )?;
        Ok(())
    }

    /// Runs all steps, invoking the sink at the configured cadence (and at
    /// step 0 and the final step).
    pub fn run(
        &mut self,
        mut on_record: impl FnMut(&DiagnosticsRecord),
    ) -> Result<RunSummary, SimError> {
        let mut summary = RunSummary {
            initial_mass: self.rho_target,
            min_envelope_margin: f64::INFINITY,
            ..Default::default()
        };
        let rec = self.diagnostics();
        on_record(&rec);
        for _ in 0..self.cfg.n_steps {
            self.step()?;
            let last = self.state.step == self.cfg.n_steps;
            let emit = self.state.step % self.cfg.out_cadence == 0 || last;
            let check = self.state.step % self.cfg.check_cadence == 0 || last;
            if emit || check {
                let rec = self.diagnostics();
                if check {
                    summary.max_mass_drift_rel = summary.max_mass_drift_rel.max(
                        (rec.total_mass - self.rho_target).abs()
                            / self.rho_target.abs().max(1e-300),
                    );
                    summary.max_negative_rel = summary.max_negative_rel.max(rec.psi_negative_rel);
                    summary.min_envelope_margin =
                        summary.min_envelope_margin.min(rec.envelope_margin);
                    self.check_invariants(&rec, &mut summary)?;
                }
                if emit {
                    on_record(&rec);
                }
            }
        }
        summary.steps_completed = self.state.step;
        Ok(summary)
    }
}

pub fn measured_mass(psi: &PolymerField, phi: &MonomerField, grids: &Grids) -> f64 {
    let n_r = grids.n_r();
    let wy = grids.space.cell_volume();
    let mut polymer = 0.0;
    for (c, column) in psi.values.chunks_exact(n_r).enumerate() {
        let e = c % grids.n_eta();
        polymer += grids.sphere.weights[e] * wy * grids.length.first_moment(column);
    }
    phi.total(&grids.space) + polymer
}
