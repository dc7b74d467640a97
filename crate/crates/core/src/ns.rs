//! Steps 2–3: implicit convection–diffusion for the intermediate velocity,
//! then pressure-correction projection.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::{ScalarField, VectorField};
use crate::krylov::{self, KrylovStats};
use crate::spectral::Spectral;
use crate::state::PhysParams;

/// How the convective term (u·∇)w is discretised on the collocation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvectionForm {
    /// (u·∇)w as written.
    Advective,
    /// ½[(u·∇)w + ∇·(u w)]; equal to the advective form for solenoidal u and
    /// exactly skew-adjoint in the discrete inner product.
    #[default]
    SkewSymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityResult {
    pub u_tilde: VectorField,
    pub u_new: VectorField,
    pub phi_new: ScalarField,
    pub krylov_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySettings {
    pub tol: f64,
    pub max_iter: usize,
    pub convection: ConvectionForm,
}

impl Default for VelocitySettings {
    fn default() -> Self {
        VelocitySettings {
            tol: 1e-12,
            max_iter: 200,
            convection: ConvectionForm::default(),
        }
    }
}

/// −κ (pᵐ ∇μ + nᵐ ∇ν)
pub fn ion_forcing(
    spectral: &Spectral,
    p_m: &ScalarField,
    n_m: &ScalarField,
    mu_new: &ScalarField,
    nu_new: &ScalarField,
    kappa: f64,
) -> VectorField {
    let gmu = spectral.grad(mu_new);
    let gnu = spectral.grad(nu_new);
    let component = |a: &ScalarField, b: &ScalarField| {
        let mut c = spectral.product(p_m, a);
        c.axpy(1.0, &spectral.product(n_m, b));
        c.scaled(-kappa)
    };
    VectorField {
        x: component(&gmu.x, &gnu.x),
        y: component(&gmu.y, &gnu.y),
    }
}

/// Convective derivative of the scalar `w` by the velocity `u`.
pub fn convection(spectral: &Spectral, form: ConvectionForm, u: &VectorField, w: &ScalarField) -> ScalarField {
    let gw = spectral.grad(w);
    let mut adv = spectral.product(&u.x, &gw.x);
    adv.axpy(1.0, &spectral.product(&u.y, &gw.y));
    match form {
        ConvectionForm::Advective => adv,
        ConvectionForm::SkewSymmetric => {
            let flux = VectorField {
                x: spectral.product(&u.x, w),
                y: spectral.product(&u.y, w),
            };
            let mut out = spectral.div(&flux);
            out.axpy(1.0, &adv);
            out.scaled(0.5)
        }
    }
}

/// Applies `w/Δt + (u·∇)w − ν Δw` to one velocity component.
pub fn velocity_operator(
    spectral: &Spectral,
    form: ConvectionForm,
    u_m: &VectorField,
    viscosity: f64,
    dt: f64,
    w: &ScalarField,
) -> ScalarField {
    let mut out = w.scaled(1.0 / dt);
    out.axpy(1.0, &convection(spectral, form, u_m, w));
    out.axpy(-viscosity, &spectral.laplacian(w));
    out
}

/// Solves `(ũ − uᵐ)/Δt + (uᵐ·∇)ũ − ν Δũ + ∇φᵐ = forcing + extra_source`.
pub fn solve_velocity(
    spectral: &Spectral,
    u_m: &VectorField,
    phi_m: &ScalarField,
    forcing: &VectorField,
    extra_source: Option<&VectorField>,
    params: &PhysParams,
    dt: f64,
    settings: &VelocitySettings,
) -> Result<(VectorField, KrylovStats)> {
    let grid = u_m.grid();
    let gphi = spectral.grad(phi_m);
    let mut total = KrylovStats::default();
    let mut solve_component = |um: &ScalarField, gp: &ScalarField, f: &ScalarField, src: Option<&ScalarField>| {
        let mut rhs = um.scaled(1.0 / dt);
        rhs.axpy(-1.0, gp);
        rhs.axpy(1.0, f);
        if let Some(s) = src {
            rhs.axpy(1.0, s);
        }
        let mut x = um.values().to_vec();
        let stats = krylov::bicgstab(
            |v, out| {
                let w = ScalarField::from_values_unchecked(grid, v.to_vec());
                let aw = velocity_operator(spectral, settings.convection, u_m, params.viscosity, dt, &w);
                out.copy_from_slice(aw.values());
            },
            |v, out| {
                let r = ScalarField::from_values_unchecked(grid, v.to_vec());
                out.copy_from_slice(spectral.solve_helmholtz(1.0 / dt, params.viscosity, &r).values());
            },
            rhs.values(),
            &mut x,
            settings.tol,
            settings.max_iter,
        )?;
        total.iterations += stats.iterations;
        total.residual = total.residual.max(stats.residual);
        Ok::<_, crate::error::Error>(ScalarField::from_values_unchecked(grid, x))
    };
    let x = solve_component(&u_m.x, &gphi.x, &forcing.x, extra_source.map(|s| &s.x))?;
    let y = solve_component(&u_m.y, &gphi.y, &forcing.y, extra_source.map(|s| &s.y))?;
    Ok((VectorField { x, y }, total))
}

/// Pressure correction: solve `Δ(φⁿᵉʷ − φᵐ) = ∇·ũ / Δt` with zero mean and
/// set `u = ũ − Δt ∇(φⁿᵉʷ − φᵐ)`. The Laplacian here is `div ∘ grad`, so the
/// returned velocity is exactly divergence-free for the spectral `div`.
pub fn project_velocity(
    spectral: &Spectral,
    u_tilde: &VectorField,
    phi_m: &ScalarField,
    dt: f64,
) -> (VectorField, ScalarField) {
    let d = spectral.div(u_tilde);
    let dphi = spectral.inv_neg_div_grad(&d.scaled(-1.0 / dt));
    let g = spectral.grad(&dphi);
    let mut u_new = u_tilde.clone();
    u_new.axpy(-dt, &g);
    let mut phi_new = phi_m + &dphi;
    phi_new.remove_mean();
    (u_new, phi_new)
}
