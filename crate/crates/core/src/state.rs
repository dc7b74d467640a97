//! Physical parameters, scheme configuration, the discrete state and the
//! per-step invariant ledger.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::ns::ConvectionForm;
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysParams {
    /// Dielectric coefficient ε in −εΔψ = p − n.
    pub epsilon: f64,
    /// Coupling κ of the electric body force.
    pub kappa: f64,
    /// Ion diffusivity D.
    pub diffusion: f64,
    /// Kinematic viscosity.
    pub viscosity: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            epsilon: 1.0,
            kappa: 1.0,
            diffusion: 1.0,
            viscosity: 1.0,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("kappa", self.kappa),
            ("diffusion", self.diffusion),
            ("viscosity", self.viscosity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "physics.{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub n_modes: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Step-1 Newton tolerance, scaled by 1 + ‖(pᵐ, nᵐ)‖.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Relative tolerance of the inexact Newton (GMRES) linear solves.
    pub newton_linear_tol: f64,
    pub gmres_restart: usize,
    /// Step-2 BiCGStab relative tolerance and iteration budget.
    pub krylov_tol: f64,
    pub krylov_max_iter: usize,
    pub dealias: bool,
    pub convection: ConvectionForm,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            n_modes: 64,
            dt: 1e-3,
            t_final: 1e-2,
            newton_tol: 1e-8,
            newton_max_iter: 50,
            newton_linear_tol: 1e-4,
            gmres_restart: 100,
            krylov_tol: 1e-12,
            krylov_max_iter: 200,
            dealias: false,
            convection: ConvectionForm::default(),
            snapshot_times: Vec::new(),
            output_dir: PathBuf::from("output"),
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        Grid::new(self.n_modes)
            .map_err(|_| Error::InvalidConfig(format!("grid.n_modes must be even and >= 4, got {}", self.n_modes)))?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("time.dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return bad(format!(
                "time.t_final must be >= dt, got {} (dt = {})",
                self.t_final, self.dt
            ));
        }
        for (name, v) in [
            ("solver.newton_tol", self.newton_tol),
            ("solver.newton_linear_tol", self.newton_linear_tol),
            ("solver.krylov_tol", self.krylov_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.newton_max_iter == 0 || self.krylov_max_iter == 0 || self.gmres_restart == 0 {
            return bad("iteration budgets must be positive".into());
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return bad(format!("snapshot time {t} must be non-negative"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_modes)
    }

    /// Number of steps to reach `t_final`, rounding up partial steps.
    pub fn n_steps(&self) -> usize {
        self.n_steps_from(0.0)
    }

    /// Number of steps from `t0` to `t_final`; zero once `t_final` is reached.
    pub fn n_steps_from(&self, t0: f64) -> usize {
        let ratio = ((self.t_final - t0) / self.dt).max(0.0);
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

/// Full discrete state at time index m.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step_index: usize,
    pub time: f64,
    pub p: ScalarField,
    pub n: ScalarField,
    /// Electric potential, zero mean.
    pub psi: ScalarField,
    /// μ = ln p + ψ
    pub mu: ScalarField,
    /// ν = ln n − ψ
    pub nu: ScalarField,
    /// Velocity after projection.
    pub u: VectorField,
    /// Intermediate velocity from the last convection–diffusion solve.
    pub u_tilde: VectorField,
    /// Modified pressure, zero mean.
    pub phi: ScalarField,
}

impl SimState {
    pub fn grid(&self) -> Grid {
        self.p.grid()
    }

    /// Bitwise equality of the persistent fields (everything except `u_tilde`).
    pub fn bitwise_eq(&self, other: &SimState) -> bool {
        self.step_index == other.step_index
            && self.time.to_bits() == other.time.to_bits()
            && self.p.bitwise_eq(&other.p)
            && self.n.bitwise_eq(&other.n)
            && self.psi.bitwise_eq(&other.psi)
            && self.mu.bitwise_eq(&other.mu)
            && self.nu.bitwise_eq(&other.nu)
            && self.u.bitwise_eq(&other.u)
            && self.phi.bitwise_eq(&other.phi)
    }
}

/// Parts of the modified discrete energy
/// `κ(E(p) + E(n) + field) + kinetic + pressure_aug`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// ⟨p(ln p − 1), 1⟩
    pub entropy_p: f64,
    /// ⟨n(ln n − 1), 1⟩
    pub entropy_n: f64,
    /// (ε/2)⟨−Δψ, ψ⟩, the electrostatic energy.
    pub field: f64,
    /// ½‖u‖²
    pub kinetic: f64,
    /// (Δt²/2)‖∇φ‖²
    pub pressure_aug: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn weighted_total(&self, kappa: f64) -> f64 {
        kappa * (self.entropy_p + self.entropy_n + self.field) + self.kinetic + self.pressure_aug
    }
}

pub fn mass(f: &ScalarField) -> f64 {
    f.integral()
}

pub fn entropy(f: &ScalarField) -> Result<f64> {
    check_positive(f)?;
    Ok(f.grid().weight() * f.values().iter().map(|&v| v * (v.ln() - 1.0)).sum::<f64>())
}

pub(crate) fn check_positive(f: &ScalarField) -> Result<()> {
    let min = f.min();
    if !(min > 0.0) {
        return Err(Error::NonPositiveConcentration { min });
    }
    Ok(())
}

pub fn total_energy(
    spectral: &Spectral,
    state: &SimState,
    params: &PhysParams,
    dt: f64,
) -> Result<EnergyBreakdown> {
    let entropy_p = entropy(&state.p)?;
    let entropy_n = entropy(&state.n)?;
    let field =
        0.5 * params.epsilon * spectral.inner_product(&-&spectral.laplacian(&state.psi), &state.psi);
    let kinetic = 0.5 * spectral.vector_inner_product(&state.u, &state.u);
    let gphi = spectral.grad(&state.phi);
    let pressure_aug = 0.5 * dt * dt * spectral.vector_inner_product(&gphi, &gphi);
    let mut e = EnergyBreakdown {
        entropy_p,
        entropy_n,
        field,
        kinetic,
        pressure_aug,
        total: 0.0,
    };
    e.total = e.weighted_total(params.kappa);
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub mass_p: f64,
    pub mass_n: f64,
    pub min_p: f64,
    pub min_n: f64,
    pub max_p: f64,
    pub max_n: f64,
    pub energy: EnergyBreakdown,
    pub newton_iters: usize,
    pub krylov_iters_step2: usize,
    /// The projection is a direct spectral solve, so this stays 0.
    pub cg_iters_projection: usize,
    pub residual_step1: f64,
    pub residual_step2: f64,
    pub wall_time_s: f64,
}
