//! Constitutive constants and closures, with their standing assumptions
//! validated at load time.
//!
//! Units used throughout: length `L`, time `T`, concentration `c` (monomer
//! count per volume). `tau0` is 1/(c*T), `alpha` is 1/L, `d1` is 1/T, `d2` is
//! L^2/T, scission intensities are 1/(L*T).

use crate::linalg::{self, Mat3, Vec3};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("non-positive coefficient: {name} = {value} (must be {requirement})")]
    NonPositiveCoefficient {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("kernel normalization failure: max |int kappa dr - 1| = {deviation:.3e} at r' = {at_rprime}")]
    KernelNormalizationFailure { deviation: f64, at_rprime: f64 },
    #[error("scission rate left its declared bounds: g = {value} outside [{lo}, {hi}]")]
    BoundViolation { value: f64, lo: f64, hi: f64 },
    #[error("config parse error: {0}")]
    Parse(String),
}

/// Length-weight `A(r)` multiplying the orientation operator.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum AWeight {
    /// `A = 1`.
    Unit,
    /// `A(r) = 1/(1+r)^3`; rotational mobility decays with rod length.
    InverseCubic,
}

impl AWeight {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            AWeight::Unit => 1.0,
            AWeight::InverseCubic => 1.0 / (1.0 + r).powi(3),
        }
    }

    /// Essential supremum `C_A` over `r >= 0`.
    pub fn c_a(&self) -> f64 {
        1.0
    }
}

/// Scission intensity closure `g(grad_u, u, eta)`.
///
/// The model only requires continuity and two-sided positive bounds, so the
/// functional form is a modelling choice; three closures are shipped. All are
/// bounded on bounded flows and the constant one covers the zero-flow
/// reduction.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum GClosure {
    /// `g = g0` regardless of the flow.
    Constant { g0: f64 },
    /// `g = g_lo + coeff * ||sigma + sigma^T||_F` (affine in the strain rate).
    Strain { g_lo: f64, coeff: f64, g_hi: f64 },
    /// `g = g_lo + coeff * |eta . (sigma + sigma^T) eta|` (orientation-weighted).
    Oriented { g_lo: f64, coeff: f64, g_hi: f64 },
}

impl GClosure {
    pub fn g_lo(&self) -> f64 {
        match *self {
            GClosure::Constant { g0 } => g0,
            GClosure::Strain { g_lo, .. } | GClosure::Oriented { g_lo, .. } => g_lo,
        }
    }

    /// Declared upper bound; for the non-constant closures this is validated
    /// against samples of the actual flow envelope at simulation startup.
    pub fn g_hi(&self) -> f64 {
        match *self {
            GClosure::Constant { g0 } => g0,
            GClosure::Strain { g_hi, .. } | GClosure::Oriented { g_hi, .. } => g_hi,
        }
    }

    fn eval_raw(&self, grad_u: &Mat3, _u: Vec3, eta: Vec3) -> f64 {
        match *self {
            GClosure::Constant { g0 } => g0,
            GClosure::Strain { g_lo, coeff, .. } => {
                g_lo + coeff * linalg::sym_part_frobenius(grad_u)
            }
            GClosure::Oriented { g_lo, coeff, .. } => {
                let sym = sym_part(grad_u);
                g_lo + coeff * linalg::quadratic_form(&sym, eta).abs()
            }
        }
    }
}

fn sym_part(m: &Mat3) -> Mat3 {
    let mut s = linalg::ZERO_MAT3;
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = m[i][j] + m[j][i];
        }
    }
    s
}

/// Fragment-size redistribution kernel `kappa(r, r')`.
#[derive(Debug, Clone, PartialEq)]
pub enum FragmentationKernel {
    /// `kappa = 1/r'` for `0 < r <= r'`, zero otherwise: a polymer of length
    /// `r'` breaks uniformly over fragment lengths.
    UniformSplit,
    /// Values `values[k][j] = kappa(r_j, r_k)` tabulated on a shared grid.
    Tabulated { r_nodes: Vec<f64>, values: Vec<Vec<f64>> },
}

impl FragmentationKernel {
    pub fn kappa(&self, r: f64, rprime: f64) -> f64 {
        match self {
            FragmentationKernel::UniformSplit => {
                if r > 0.0 && r <= rprime {
                    1.0 / rprime
                } else {
                    0.0
                }
            }
            FragmentationKernel::Tabulated { r_nodes, values } => {
                let j = nearest_index(r_nodes, r);
                let k = nearest_index(r_nodes, rprime);
                values[k][j]
            }
        }
    }

    /// Checks `int_0^{r'} kappa(r, r') dr = 1` by trapezoid quadrature on the
    /// given grid, for every interior `r' > 0`.
    pub fn validate_normalization(&self, r_nodes: &[f64]) -> Result<(), ParamsError> {
        let mut worst = 0.0f64;
        let mut worst_at = 0.0;
        for (k, &rp) in r_nodes.iter().enumerate().skip(1) {
            let mut integral = 0.0;
            for j in 0..k {
                let (r0, r1) = (r_nodes[j], r_nodes[j + 1]);
                // kappa(0, r') is a removable endpoint: integrate the trapezoid
                // with the r -> 0+ limit value.
                let f0 = self.kappa(if j == 0 { f64::MIN_POSITIVE } else { r0 }, rp);
                let f1 = self.kappa(r1, rp);
                integral += 0.5 * (f0 + f1) * (r1 - r0);
            }
            let dev = (integral - 1.0).abs();
            if dev > worst {
                worst = dev;
                worst_at = rp;
            }
        }
        if worst > 1e-12 {
            return Err(ParamsError::KernelNormalizationFailure {
                deviation: worst,
                at_rprime: worst_at,
            });
        }
        Ok(())
    }
}

fn nearest_index(nodes: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &n) in nodes.iter().enumerate() {
        let d = (n - x).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// All constitutive constants of the model. Immutable after load; shareable.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Polymerization rate coefficient (lengthening speed is `tau0 * phi`).
    pub tau0: f64,
    /// Exponential weight exponent of the working norms, `alpha > 0`.
    pub alpha: f64,
    /// Rotational diffusion on the sphere, `D1 > 0`.
    pub d1: f64,
    /// Monomer spatial diffusion, `D2 > 0`.
    pub d2: f64,
    pub a_weight: AWeight,
    pub g_rate: GClosure,
    pub kernel: FragmentationKernel,
    /// Conserved total monomer-equivalent mass; measured from the initial
    /// data when not prescribed.
    pub rho0: Option<f64>,
    /// Time horizon `T`.
    pub t_final: f64,
}

#[derive(Debug, Deserialize)]
struct ParamsFile {
    params: ParamsSection,
}

#[derive(Debug, Deserialize)]
pub(crate) struct ParamsSection {
    tau0: f64,
    alpha: f64,
    d1: f64,
    d2: f64,
    rho0: Option<f64>,
    t_final: f64,
    a_weight: Option<AWeight>,
    g: GClosure,
    kernel: Option<TabulatedKernelSection>,
}

#[derive(Debug, Deserialize)]
struct TabulatedKernelSection {
    r_nodes: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl ParamsSection {
    pub(crate) fn build(self) -> Result<ModelParams, ParamsError> {
        let kernel = match self.kernel {
            None => FragmentationKernel::UniformSplit,
            Some(t) => FragmentationKernel::Tabulated {
                r_nodes: t.r_nodes,
                values: t.values,
            },
        };
        let params = ModelParams {
            tau0: self.tau0,
            alpha: self.alpha,
            d1: self.d1,
            d2: self.d2,
            a_weight: self.a_weight.unwrap_or(AWeight::Unit),
            g_rate: self.g,
            kernel,
            rho0: self.rho0,
            t_final: self.t_final,
        };
        params.validate()?;
        Ok(params)
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive: [(&str, f64); 4] = [
            ("alpha", self.alpha),
            ("d1", self.d1),
            ("d2", self.d2),
            ("t_final", self.t_final),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(ParamsError::NonPositiveCoefficient {
                    name: match name {
                        "alpha" => "alpha",
                        "d1" => "d1",
                        "d2" => "d2",
                        _ => "t_final",
                    },
                    value,
                    requirement: "> 0",
                });
            }
        }
        if !(self.tau0 >= 0.0) {
            return Err(ParamsError::NonPositiveCoefficient {
                name: "tau0",
                value: self.tau0,
                requirement: ">= 0",
            });
        }
        let (lo, hi) = (self.g_rate.g_lo(), self.g_rate.g_hi());
        if !(lo > 0.0) {
            return Err(ParamsError::NonPositiveCoefficient {
                name: "g_lo",
                value: lo,
                requirement: "> 0",
            });
        }
        if hi < lo {
            return Err(ParamsError::BoundViolation {
                value: hi,
                lo,
                hi,
            });
        }
        if let GClosure::Strain { coeff, .. } | GClosure::Oriented { coeff, .. } = self.g_rate {
            if coeff < 0.0 {
                return Err(ParamsError::NonPositiveCoefficient {
                    name: "g coeff",
                    value: coeff,
                    requirement: ">= 0",
                });
            }
        }
        Ok(())
    }

    /// Checks `A(r) in [0, C_A]` on the given length grid.
    pub fn validate_a_weight_on(&self, r_nodes: &[f64]) -> Result<(), ParamsError> {
        let c_a = self.a_weight.c_a();
        for &r in r_nodes {
            let a = self.a_weight.eval(r);
            if !(0.0..=c_a + 1e-15).contains(&a) {
                return Err(ParamsError::NonPositiveCoefficient {
                    name: "a_weight",
                    value: a,
                    requirement: "in [0, C_A]",
                });
            }
        }
        Ok(())
    }
}

/// Parses and validates the `[params]` table of a run config.
pub fn load_params(config_text: &str) -> Result<ModelParams, ParamsError> {
    let file: ParamsFile = toml::from_str(config_text).map_err(classify_toml_error)?;
    let params = file.params.build()?;
    if let FragmentationKernel::Tabulated { r_nodes, .. } = &params.kernel {
        let nodes = r_nodes.clone();
        params.kernel.validate_normalization(&nodes)?;
    }
    Ok(params)
}

pub(crate) fn classify_toml_error(e: toml::de::Error) -> ParamsError {
    let msg = e.to_string();
    if msg.contains("missing field") {
        ParamsError::MissingField(msg.lines().next().unwrap_or(&msg).to_string())
    } else {
        ParamsError::Parse(msg)
    }
}

/// The scission intensity at one flow state and orientation.
///
/// Deterministic; bound-checked by `debug_assert` here and by envelope
/// sampling at simulation startup.
pub fn evaluate_g(params: &ModelParams, grad_u: &Mat3, u: Vec3, eta: Vec3) -> f64 {
    debug_assert!((linalg::norm(eta) - 1.0).abs() < 1e-12, "eta must be unit");
    let g = params.g_rate.eval_raw(grad_u, u, eta);
    debug_assert!(
        g >= params.g_rate.g_lo() - 1e-12 && g <= params.g_rate.g_hi() + 1e-12,
        "g = {g} escaped [{}, {}]",
        params.g_rate.g_lo(),
        params.g_rate.g_hi()
    );
    g
}

/// Bound-checked variant used by validation passes.
pub fn try_evaluate_g(
    params: &ModelParams,
    grad_u: &Mat3,
    u: Vec3,
    eta: Vec3,
) -> Result<f64, ParamsError> {
    let g = params.g_rate.eval_raw(grad_u, u, eta);
    let (lo, hi) = (params.g_rate.g_lo(), params.g_rate.g_hi());
    if g < lo - 1e-12 || g > hi + 1e-12 {
        return Err(ParamsError::BoundViolation { value: g, lo, hi });
    }
    Ok(g)
}
