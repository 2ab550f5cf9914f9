//! Run configuration: one self-contained TOML file per run, resolved into
//! validated grids, fields and solver settings. A 64-bit FNV-1a hash of the
//! raw config text is embedded in every output artifact so files from
//! different configurations are never compared silently.

use crate::flow::VelocityField;
use crate::length::LengthGrid;
use crate::linalg;
use crate::monomer::MonomerField;
use crate::params::{classify_toml_error, ModelParams, ParamsError, ParamsSection};
use crate::polymer::PolymerField;
use crate::space::{Boundary, Grids, SpatialGrid};
use crate::sphere::SphereGrid;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub fn fnv1a64(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    params: ParamsSection,
    grid: GridSection,
    flow: FlowSection,
    time: TimeSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
    initial: InitialSection,
    #[serde(default)]
    checks: ChecksSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n_r: usize,
    r_max: f64,
    n_theta: usize,
    n_phi: usize,
    spatial: Option<SpatialSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpatialSection {
    n: usize,
    length: f64,
    boundary: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FlowSection {
    Zero,
    PeriodicShear { gamma_dot: f64, k: u32 },
    TaylorGreen { amplitude: f64 },
    HomogeneousShear { gamma_dot: f64 },
    HomogeneousLinear { grad: [[f64; 3]; 3] },
    RigidRotation { omega: [f64; 3] },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    dt: f64,
    n_steps: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    tol: Option<f64>,
    eps: Option<f64>,
    max_iter: Option<usize>,
    ode_tol: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    cadence: Option<usize>,
    snapshot_every: Option<usize>,
    dir: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    psi: PsiInit,
    phi: PhiInit,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PsiInit {
    /// amplitude of `psi0 = c0 r exp(-beta r) (1 + anisotropy (eta.axis)^2)`
    c0: f64,
    beta: f64,
    anisotropy: Option<f64>,
    axis: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhiInit {
    mean: f64,
    /// `phi0 = mean (1 + modulation cos(2 pi y1 / L))`
    modulation: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ChecksSection {
    cadence: Option<usize>,
    strict: Option<bool>,
}

/// Everything a run needs, validated and materialized.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub params: ModelParams,
    pub grids: Grids,
    pub flow: VelocityField,
    pub dt: f64,
    pub n_steps: usize,
    pub eps: f64,
    pub solver_tol: f64,
    pub max_iter: usize,
    pub ode_tol: f64,
    pub out_cadence: usize,
    pub check_cadence: usize,
    pub snapshot_every: usize,
    pub out_dir: String,
    pub psi0: PolymerField,
    pub phi0: MonomerField,
    pub c0: f64,
    pub strict: bool,
    pub config_hash: u64,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Params(classify_toml_error(e)))
}

pub fn resolve_config(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let cfg = parse_config(text)?;
    let params = cfg.params.build()?;

    if params.alpha * cfg.grid.r_max < 23.0 {
        return Err(ConfigError::Invalid(format!(
            "alpha * r_max = {:.3} < 23: the exponential tail would not be negligible at truncation",
            params.alpha * cfg.grid.r_max
        )));
    }
    let length = LengthGrid::new(cfg.grid.n_r, cfg.grid.r_max, params.alpha);
    params.validate_a_weight_on(&length.nodes)?;
    if let crate::params::FragmentationKernel::Tabulated { r_nodes, .. } = &params.kernel {
        let nodes = r_nodes.clone();
        params.kernel.validate_normalization(&nodes)?;
    }
    let sphere = SphereGrid::new(cfg.grid.n_theta, cfg.grid.n_phi);
    let space = match &cfg.grid.spatial {
        None => SpatialGrid::homogeneous(),
        Some(s) => {
            let boundary = match s.boundary.as_deref() {
                None | Some("periodic") => Boundary::Periodic,
                Some("noflux") => Boundary::NoFlux,
                Some(other) => {
                    return Err(ConfigError::Invalid(format!(
                        "unknown boundary kind {other:?} (expected \"periodic\" or \"noflux\")"
                    )))
                }
            };
            SpatialGrid::cube(s.n, s.length, boundary)
        }
    };
    let grids = Grids {
        length,
        sphere,
        space,
    };

    let flow = match cfg.flow {
        FlowSection::Zero => VelocityField::Zero,
        FlowSection::PeriodicShear { gamma_dot, k } => {
            if grids.space.is_homogeneous() {
                return Err(ConfigError::Invalid(
                    "periodic_shear needs a resolved spatial grid".into(),
                ));
            }
            VelocityField::PeriodicShear {
                gamma_dot,
                k,
                length: grids.space.length,
            }
        }
        FlowSection::TaylorGreen { amplitude } => {
            if grids.space.is_homogeneous() {
                return Err(ConfigError::Invalid(
                    "taylor_green needs a resolved spatial grid".into(),
                ));
            }
            VelocityField::TaylorGreen {
                amplitude,
                length: grids.space.length,
            }
        }
        FlowSection::HomogeneousShear { gamma_dot } => {
            let mut grad = linalg::ZERO_MAT3;
            grad[0][1] = gamma_dot;
            VelocityField::HomogeneousLinear { grad }
        }
        FlowSection::HomogeneousLinear { grad } => VelocityField::HomogeneousLinear { grad },
        FlowSection::RigidRotation { omega } => VelocityField::RigidRotation {
            omega,
            center: [grids.space.length / 2.0; 3],
        },
    };

    let dt = cfg.time.dt;
    if !(dt > 0.0) {
        return Err(ConfigError::Invalid("dt must be positive".into()));
    }
    let n_steps = cfg
        .time
        .n_steps
        .unwrap_or_else(|| (params.t_final / dt).round().max(1.0) as usize);

    // initial polymer density
    let psi = &cfg.initial.psi;
    if psi.c0 < 0.0 {
        return Err(ConfigError::Invalid("initial psi amplitude must be >= 0".into()));
    }
    if psi.c0 > 0.0 && psi.beta <= params.alpha {
        return Err(ConfigError::Invalid(format!(
            "initial psi decay beta = {} must exceed alpha = {} for the envelope to exist",
            psi.beta, params.alpha
        )));
    }
    let aniso = psi.anisotropy.unwrap_or(0.0);
    if aniso <= -1.0 {
        return Err(ConfigError::Invalid(
            "psi anisotropy must be > -1 to keep the density nonnegative".into(),
        ));
    }
    let axis = psi.axis.unwrap_or([1.0, 0.0, 0.0]);
    let axis_norm = linalg::norm(axis);
    if axis_norm == 0.0 {
        return Err(ConfigError::Invalid("psi anisotropy axis must be nonzero".into()));
    }
    let axis = linalg::scale(1.0 / axis_norm, axis);
    let (c0_amp, beta) = (psi.c0, psi.beta);
    let psi0 = PolymerField::from_fn(&grids, |r, eta, _| {
        let d = linalg::dot(eta, axis);
        c0_amp * r * (-beta * r).exp() * (1.0 + aniso * d * d)
    });
    // measured envelope constant: sup psi0 * exp(alpha r) over the grid
    let mut c0 = 0.0f64;
    for column in psi0.values.chunks_exact(grids.n_r()) {
        for (j, &v) in column.iter().enumerate() {
            c0 = c0.max(v * grids.length.exp_weights[j]);
        }
    }
    if c0 == 0.0 {
        c0 = 1.0; // empty initial state: any positive constant is an envelope
    }

    let phi = &cfg.initial.phi;
    let modulation = phi.modulation.unwrap_or(0.0);
    if phi.mean < 0.0 || modulation.abs() > 1.0 {
        return Err(ConfigError::Invalid(
            "initial phi must be nonnegative: mean >= 0 and |modulation| <= 1".into(),
        ));
    }
    if grids.space.is_homogeneous() && modulation != 0.0 {
        return Err(ConfigError::Invalid(
            "phi modulation needs a resolved spatial grid".into(),
        ));
    }
    let cube_len = grids.space.length;
    let mean = phi.mean;
    let phi0 = MonomerField::from_fn(&grids.space, |y| {
        mean * (1.0 + modulation * (2.0 * std::f64::consts::PI * y[0] / cube_len).cos())
    });

    let dr = grids.length.dr;
    Ok(ResolvedConfig {
        params,
        grids,
        flow,
        dt,
        n_steps,
        eps: cfg.solver.eps.unwrap_or(dr * dr),
        solver_tol: cfg.solver.tol.unwrap_or(1e-10),
        max_iter: cfg.solver.max_iter.unwrap_or(600),
        ode_tol: cfg.solver.ode_tol.unwrap_or(1e-8),
        out_cadence: cfg.output.cadence.unwrap_or(1).max(1),
        check_cadence: cfg.checks.cadence.unwrap_or(1).max(1),
        snapshot_every: cfg.output.snapshot_every.unwrap_or(0),
        out_dir: cfg.output.dir.unwrap_or_else(|| "out".into()),
        psi0,
        phi0,
        c0,
        strict: cfg.checks.strict.unwrap_or(true),
        config_hash: fnv1a64(text),
    })
}

/// Human-readable resolved summary with the physical units of every
/// quantity, for the `describe` subcommand.
pub fn describe(cfg: &ResolvedConfig) -> String {
    let p = &cfg.params;
    let g = &cfg.grids;
    let mut s = String::new();
    s.push_str("# resolved configuration (units: L = length, T = time, c = concentration)\n");
    s.push_str(&format!("config_hash = {:016x}\n\n", cfg.config_hash));
    s.push_str("[params]\n");
    s.push_str(&format!("tau0 = {}        # 1/(c*T), lengthening rate per monomer concentration\n", p.tau0));
    s.push_str(&format!("alpha = {}       # 1/L, exponential weight exponent of the working norms\n", p.alpha));
    s.push_str(&format!("d1 = {}          # 1/T, rotational diffusion on the sphere\n", p.d1));
    s.push_str(&format!("d2 = {}          # L^2/T, monomer spatial diffusion\n", p.d2));
    s.push_str(&format!("g in [{}, {}]    # 1/(L*T), scission intensity bounds\n", p.g_rate.g_lo(), p.g_rate.g_hi()));
    s.push_str(&format!("a_weight = {:?}  # dimensionless rotational mobility weight, C_A = {}\n", p.a_weight, p.a_weight.c_a()));
    s.push_str(&format!("t_final = {}     # T, horizon\n", p.t_final));
    s.push_str("\n[grids]\n");
    s.push_str(&format!(
        "r: {} nodes on [0, {}] (L), dr = {:.4e}, weighted-quadrature deviation = {:.3e}\n",
        g.length.n_r,
        g.length.r_max,
        g.length.dr,
        g.length.exp_quadrature_deviation()
    ));
    s.push_str(&format!(
        "sphere: {} x {} Gauss-Legendre x uniform nodes, quadrature sums to {:.12}\n",
        g.sphere.n_theta,
        g.sphere.n_phi,
        g.sphere.weights.iter().sum::<f64>()
    ));
    s.push_str(&format!(
        "space: {}  # {}\n",
        if g.space.is_homogeneous() {
            "homogeneous (single cell, unit volume)".to_string()
        } else {
            format!(
                "{0}^3 cells, cube edge {1} (L), {2:?} boundary",
                g.space.n, g.space.length, g.space.boundary
            )
        },
        "polymer length axis truncated with a homogeneous dirichlet row at r_max"
    ));
    s.push_str("\n[flow]\n");
    s.push_str(&format!("kind = {}\n", cfg.flow.kind_name()));
    s.push_str("\n[time]\n");
    s.push_str(&format!(
        "dt = {} (T), n_steps = {}, horizon covered = {} (T)\n",
        cfg.dt,
        cfg.n_steps,
        cfg.dt * cfg.n_steps as f64
    ));
    s.push_str("\n[solver]\n");
    s.push_str(&format!(
        "tol = {:e}, eps = {:e} (length-regularization), max_iter = {}, ode_tol = {:e}\n",
        cfg.solver_tol, cfg.eps, cfg.max_iter, cfg.ode_tol
    ));
    s.push_str("\n[initial]\n");
    s.push_str(&format!(
        "envelope constant C0 = {:.6e} (measured sup psi0 * exp(alpha r))\n",
        cfg.c0
    ));
    s.push_str(&format!(
        "phi0 in [{:.6e}, {:.6e}] (c)\n",
        cfg.phi0.min(),
        cfg.phi0.max()
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [params]
        tau0 = 0.3
        alpha = 1.0
        d1 = 1.0
        d2 = 1.0
        t_final = 0.1

        [params.g]
        form = "constant"
        g0 = 1.0

        [grid]
        n_r = 65
        r_max = 23.0
        n_theta = 4
        n_phi = 8

        [flow]
        kind = "zero"

        [time]
        dt = 0.01

        [initial.psi]
        c0 = 1.0
        beta = 2.0

        [initial.phi]
        mean = 1.0
    "#;

    #[test]
    fn resolves_baseline() {
        let cfg = resolve_config(BASE).unwrap();
        assert_eq!(cfg.n_steps, 10);
        assert!(cfg.grids.space.is_homogeneous());
        assert_eq!(cfg.flow, VelocityField::Zero);
        assert!(cfg.c0 > 0.0);
        assert!(cfg.psi0.boundary_is_zero(&cfg.grids));
        // eps defaults to dr^2
        assert!((cfg.eps - cfg.grids.length.dr.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn truncation_cross_check_enforced() {
        let bad = BASE.replace("r_max = 23.0", "r_max = 10.0");
        match resolve_config(&bad) {
            Err(ConfigError::Invalid(msg)) => assert!(msg.contains("alpha * r_max")),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn beta_must_exceed_alpha() {
        let bad = BASE.replace("beta = 2.0", "beta = 1.0");
        assert!(matches!(resolve_config(&bad), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hash_changes_with_text() {
        let a = fnv1a64(BASE);
        let b = fnv1a64(&BASE.replace("0.3", "0.30001"));
        assert_ne!(a, b);
        assert_eq!(a, fnv1a64(BASE));
    }

    #[test]
    fn describe_mentions_units_and_truncation() {
        let cfg = resolve_config(BASE).unwrap();
        let text = describe(&cfg);
        assert!(text.contains("1/(c*T)"));
        assert!(text.contains("L^2/T"));
        assert!(text.contains("dirichlet row at r_max"));
        assert!(text.contains("config_hash"));
    }

    #[test]
    fn spatial_section_builds_cube() {
        let text = BASE.replace(
            "[flow]",
            "[grid.spatial]\nn = 4\nlength = 1.0\n\n[flow]",
        );
        let cfg = resolve_config(&text).unwrap();
        assert_eq!(cfg.grids.space.n, 4);
        assert_eq!(cfg.grids.space.boundary, Boundary::Periodic);
    }
}
