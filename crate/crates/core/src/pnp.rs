//! Step 1: the coupled, positivity-preserving ion solve.
//!
//! Given (pᵐ, nᵐ, uᵐ) find positive (p, n) with
//!
//! ```text
//! (p − pᵐ)/Δt + ∇·(pᵐuᵐ) = D ∇·(M_p ∇(ln p + ψ))
//! (n − nᵐ)/Δt + ∇·(nᵐuᵐ) = D ∇·(M_n ∇(ln n − ψ))
//! −εΔψ = p − n
//! ```
//!
//! with frozen mobilities `M_p = pᵐ(1 + 2(κ/D)Δt pᵐ)`. The system is solved by
//! Newton–Krylov on the collocation residual with a fraction-to-boundary rule
//! and Armijo backtracking. The convex functional whose minimiser is the
//! solution is available through [`Step1Problem::functional`] as an
//! independent certificate.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::krylov;
use crate::spectral::Spectral;
use crate::state::{check_positive, entropy, mass, PhysParams, SchemeConfig, SimState};

/// Fraction-to-boundary parameter: an iterate may lose at most 90% of its value in one step.
pub const FRACTION_TO_BOUNDARY: f64 = 0.9;
/// Loosest inexact-Newton forcing term.
pub const LINEAR_TOL_MAX: f64 = 1e-1;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Concentrations below this are treated as degenerate input.
const DEGENERATE_MIN: f64 = 1e-14;

pub fn compute_psi(
    spectral: &Spectral,
    p: &ScalarField,
    n: &ScalarField,
    epsilon: f64,
) -> Result<ScalarField> {
    let charge = (p - n).scaled(1.0 / epsilon);
    spectral.inv_laplacian_zero_mean(&charge)
}

pub fn chemical_potentials(
    p: &ScalarField,
    n: &ScalarField,
    psi: &ScalarField,
) -> Result<(ScalarField, ScalarField)> {
    check_positive(p)?;
    check_positive(n)?;
    let mu = p.zip_map(psi, |a, s| a.ln() + s);
    let nu = n.zip_map(psi, |a, s| a.ln() - s);
    Ok((mu, nu))
}

/// `f (1 + 2(κ/D) Δt f)`, the frozen mobility of Step 1.
pub fn mobility(f: &ScalarField, dt: f64, kappa: f64, diffusion: f64) -> Result<ScalarField> {
    check_positive(f)?;
    let c = 2.0 * kappa / diffusion * dt;
    Ok(f.map(|v| v * (1.0 + c * v)))
}

/// Solver knobs for [`solve_step1`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step1Settings {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Tightest relative tolerance of the GMRES solves.
    pub linear_tol: f64,
    /// Loosest relative tolerance; the forcing term shrinks from here with the
    /// squared residual reduction (Eisenstat–Walker). Equal to `linear_tol`
    /// for a fixed tolerance.
    pub linear_tol_max: f64,
    pub gmres_restart: usize,
    /// Evaluate the convex functional at the initial guess and the solution.
    pub certify: bool,
    /// Relative tolerance of the inner `L_M` solves used by the functional.
    pub certify_tol: f64,
}

impl Default for Step1Settings {
    fn default() -> Self {
        Step1Settings::from(&SchemeConfig::default())
    }
}

impl From<&SchemeConfig> for Step1Settings {
    fn from(cfg: &SchemeConfig) -> Self {
        Step1Settings {
            newton_tol: cfg.newton_tol,
            newton_max_iter: cfg.newton_max_iter,
            linear_tol: cfg.newton_linear_tol,
            linear_tol_max: cfg.newton_linear_tol.max(LINEAR_TOL_MAX),
            gmres_restart: cfg.gmres_restart,
            certify: false,
            certify_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step1Result {
    pub p_new: ScalarField,
    pub n_new: ScalarField,
    pub psi_new: ScalarField,
    pub mu_new: ScalarField,
    pub nu_new: ScalarField,
    pub newton_iters: usize,
    pub linear_iters: usize,
    /// Discrete L² norm of the collocation residual at the returned solution.
    pub final_residual: f64,
    /// Functional at the initial guess and at the solution (NaN unless certified).
    pub j_initial: f64,
    pub j_final: f64,
}

/// Frozen data of one Step-1 solve.
pub struct Step1Problem<'a> {
    spectral: &'a Spectral,
    params: PhysParams,
    dt: f64,
    p_old: &'a ScalarField,
    n_old: &'a ScalarField,
    mob_p: ScalarField,
    mob_n: ScalarField,
    /// ∇·(pᵐuᵐ) − f_p
    drift_p: ScalarField,
    /// ∇·(nᵐuᵐ) − f_n
    drift_n: ScalarField,
}

impl<'a> Step1Problem<'a> {
    /// `sources` are optional forcing terms (f_p, f_n) added to the right-hand sides.
    pub fn new(
        spectral: &'a Spectral,
        prev: &'a SimState,
        params: &PhysParams,
        dt: f64,
        sources: Option<(&ScalarField, &ScalarField)>,
    ) -> Result<Self> {
        let mob_p = mobility(&prev.p, dt, params.kappa, params.diffusion)?;
        let mob_n = mobility(&prev.n, dt, params.kappa, params.diffusion)?;
        let transport = |c: &ScalarField, u: &VectorField| {
            spectral.div(&VectorField {
                x: spectral.product(c, &u.x),
                y: spectral.product(c, &u.y),
            })
        };
        let mut drift_p = transport(&prev.p, &prev.u);
        let mut drift_n = transport(&prev.n, &prev.u);
        if let Some((fp, fn_)) = sources {
            drift_p.axpy(-1.0, fp);
            drift_n.axpy(-1.0, fn_);
        }
        Ok(Step1Problem {
            spectral,
            params: *params,
            dt,
            p_old: &prev.p,
            n_old: &prev.n,
            mob_p,
            mob_n,
            drift_p,
            drift_n,
        })
    }

    pub fn mobilities(&self) -> (&ScalarField, &ScalarField) {
        (&self.mob_p, &self.mob_n)
    }

    fn psi_pinned(&self, p: &ScalarField, n: &ScalarField) -> ScalarField {
        self.spectral
            .inv_laplacian_pinned(&(p - n).scaled(1.0 / self.params.epsilon))
    }

    fn residual_with_psi(
        &self,
        p: &ScalarField,
        n: &ScalarField,
        psi: &ScalarField,
    ) -> Result<(ScalarField, ScalarField)> {
        let (mu, nu) = chemical_potentials(p, n, psi)?;
        let s = self.spectral;
        let d = self.params.diffusion;
        let inv_dt = 1.0 / self.dt;
        let (lp, ln) = s.apply_lm_pair(&self.mob_p, &mu, &self.mob_n, &nu);
        let mut r_p = (p - self.p_old).scaled(inv_dt);
        r_p.axpy(1.0, &self.drift_p);
        r_p.axpy(d, &lp);
        let mut r_n = (n - self.n_old).scaled(inv_dt);
        r_n.axpy(1.0, &self.drift_n);
        r_n.axpy(d, &ln);
        Ok((r_p, r_n))
    }

    /// Strong-form collocation residual (r_p, r_n). Candidates must carry zero net charge.
    pub fn residual(&self, p: &ScalarField, n: &ScalarField) -> Result<(ScalarField, ScalarField)> {
        let psi = compute_psi(self.spectral, p, n, self.params.epsilon)?;
        self.residual_with_psi(p, n, &psi)
    }

    /// Directional derivative of the residual at (p, n) along (dp, dn).
    pub fn jacobian_apply(
        &self,
        p: &ScalarField,
        n: &ScalarField,
        dp: &ScalarField,
        dn: &ScalarField,
    ) -> (ScalarField, ScalarField) {
        let s = self.spectral;
        let d = self.params.diffusion;
        let inv_dt = 1.0 / self.dt;
        let dpsi = self.psi_pinned(dp, dn);
        let dmu = &dp.zip_map(p, |a, b| a / b) + &dpsi;
        let dnu = &dn.zip_map(n, |a, b| a / b) - &dpsi;
        let (lp, ln) = s.apply_lm_pair(&self.mob_p, &dmu, &self.mob_n, &dnu);
        let mut jp = dp.scaled(inv_dt);
        jp.axpy(d, &lp);
        let mut jn = dn.scaled(inv_dt);
        jn.axpy(d, &ln);
        (jp, jn)
    }

    fn pair_norm(&self, a: &ScalarField, b: &ScalarField) -> f64 {
        (self.spectral.inner_product(a, a) + self.spectral.inner_product(b, b)).sqrt()
    }

    /// The convex functional
    ///
    /// ```text
    /// J(p, n) = 1/(2DΔt) (‖p − pᵐ‖²_{L⁻¹_{M_p}} + ‖n − nᵐ‖²_{L⁻¹_{M_n}})
    ///         + (1/D)(⟨L⁻¹_{M_p} T_p, p⟩ + ⟨L⁻¹_{M_n} T_n, n⟩)
    ///         + E(p) + E(n) + (1/2ε) ⟨p − n, (−Δ)⁻¹(p − n)⟩
    /// ```
    ///
    /// where `T = ∇·(cᵐuᵐ) − f` is the explicit drift. Its stationarity
    /// condition on the mass-constrained set is exactly the residual equation.
    pub fn functional(&self, p: &ScalarField, n: &ScalarField, tol: f64) -> Result<f64> {
        check_positive(p)?;
        check_positive(n)?;
        let s = self.spectral;
        let d = self.params.diffusion;
        let mut quad = 0.0;
        let mut drift = 0.0;
        for (cand, old, mob, t) in [
            (p, self.p_old, &self.mob_p, &self.drift_p),
            (n, self.n_old, &self.mob_n, &self.drift_n),
        ] {
            let (m_old, m_new) = (mass(old), mass(cand));
            if (m_new - m_old).abs() > 1e-10 * m_old.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::MassMismatch {
                    expected: m_old,
                    actual: m_new,
                });
            }
            let mut diff = cand - old;
            diff.remove_mean();
            if diff.max_abs() > 0.0 {
                let w = s.solve_lm(mob, &diff, tol)?;
                quad += s.inner_product(&diff, &w);
            }
            if t.max_abs() > 0.0 {
                let w = s.solve_lm(mob, t, tol)?;
                drift += s.inner_product(&w, cand);
            }
        }
        let charge = p - n;
        let electro = 0.5 / self.params.epsilon
            * s.inner_product(&charge, &s.inv_laplacian_zero_mean(&charge)?);
        Ok(quad / (2.0 * d * self.dt) + drift / d + entropy(p)? + entropy(n)? + electro)
    }
}

/// Residual of the Step-1 equations at the candidate pair.
pub fn step1_residual(
    spectral: &Spectral,
    prev: &SimState,
    cand_p: &ScalarField,
    cand_n: &ScalarField,
    params: &PhysParams,
    dt: f64,
) -> Result<(ScalarField, ScalarField)> {
    check_positive(cand_p)?;
    check_positive(cand_n)?;
    Step1Problem::new(spectral, prev, params, dt, None)?.residual(cand_p, cand_n)
}

pub fn functional_j(
    spectral: &Spectral,
    prev: &SimState,
    cand_p: &ScalarField,
    cand_n: &ScalarField,
    params: &PhysParams,
    dt: f64,
) -> Result<f64> {
    Step1Problem::new(spectral, prev, params, dt, None)?.functional(cand_p, cand_n, 1e-12)
}

fn split(grid: crate::field::Grid, v: &[f64]) -> (ScalarField, ScalarField) {
    let len = grid.len();
    (
        ScalarField::from_values_unchecked(grid, v[..len].to_vec()),
        ScalarField::from_values_unchecked(grid, v[len..].to_vec()),
    )
}

fn join(a: &ScalarField, b: &ScalarField, out: &mut [f64]) {
    let len = a.values().len();
    out[..len].copy_from_slice(a.values());
    out[len..].copy_from_slice(b.values());
}

/// Largest step in (0, 1] that keeps every point above (1 − τ) of its current value.
pub fn fraction_to_boundary(x: &ScalarField, dx: &ScalarField) -> f64 {
    x.values()
        .iter()
        .zip(dx.values())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| FRACTION_TO_BOUNDARY * v / -d)
        .fold(1.0, f64::min)
}

fn forcing_term(settings: &Step1Settings, rnorm: f64, rnorm_prev: Option<f64>, target: f64) -> f64 {
    let hi = settings.linear_tol_max.max(settings.linear_tol);
    let eta = match rnorm_prev {
        None => hi,
        Some(prev) => 0.9 * (rnorm / prev).powi(2),
    };
    // never ask for more than the Newton target needs
    let floor = (0.5 * target / rnorm).min(hi);
    eta.clamp(settings.linear_tol, hi).max(floor)
}

/// Runs the Newton–Krylov solve of Step 1 starting from the previous state.
pub fn solve_step1(
    spectral: &Spectral,
    prev: &SimState,
    params: &PhysParams,
    dt: f64,
    settings: &Step1Settings,
    sources: Option<(&ScalarField, &ScalarField)>,
) -> Result<Step1Result> {
    for f in [&prev.p, &prev.n] {
        let min = f.min();
        if !(min >= DEGENERATE_MIN) {
            return Err(Error::NonPositiveConcentration { min });
        }
    }
    let problem = Step1Problem::new(spectral, prev, params, dt, sources)?;
    let grid = prev.grid();
    let mut p = prev.p.clone();
    let mut n = prev.n.clone();
    let mut psi = problem.psi_pinned(&p, &n);
    let (mut r_p, mut r_n) = problem.residual_with_psi(&p, &n, &psi)?;
    let mut rnorm = problem.pair_norm(&r_p, &r_n);
    let target = settings.newton_tol * (1.0 + problem.pair_norm(&prev.p, &prev.n));

    let j_initial = if settings.certify {
        problem.functional(&p, &n, settings.certify_tol)?
    } else {
        f64::NAN
    };

    let mut iters = 0;
    let mut linear_iters = 0;
    let mut rnorm_prev: Option<f64> = None;
    let mut rhs = vec![0.0; 2 * grid.len()];
    while rnorm > target {
        if iters >= settings.newton_max_iter {
            return Err(Error::NoConvergence {
                iterations: iters,
                residual: rnorm,
            });
        }
        join(&r_p, &r_n, &mut rhs);
        rhs.iter_mut().for_each(|v| *v = -*v);

        // effective diffusivities D·M/c for the constant-coefficient preconditioner
        // effective diffusivities D·M/c for the constant-coefficient preconditioner
        let cbar_p = params.diffusion * problem.mob_p.zip_map(&p, |m, c| m / c).mean();
        let cbar_n = params.diffusion * problem.mob_n.zip_map(&n, |m, c| m / c).mean();

        let mut delta = vec![0.0; 2 * grid.len()];
        let solve = krylov::gmres(
            |v, out| {
                let (dp, dn) = split(grid, v);
                let (jp, jn) = problem.jacobian_apply(&p, &n, &dp, &dn);
                join(&jp, &jn, out);
            },
            |v, out| {
                let (a, b) = split(grid, v);
                let (a, b) = spectral.solve_helmholtz_pair(1.0 / dt, cbar_p, cbar_n, &a, &b);
                join(&a, &b, out);
            },
            &rhs,
            &mut delta,
            forcing_term(settings, rnorm, rnorm_prev, target),
            settings.gmres_restart,
            20 * settings.gmres_restart,
        );
        match solve {
            Ok(stats) => linear_iters += stats.iterations,
            // inexact Newton: keep the partial solve and let the line search judge it
            Err(Error::NoConvergence { iterations, .. }) => linear_iters += iterations,
            Err(e) => return Err(e),
        }
        let (dp, dn) = split(grid, &delta);

        let mut alpha = fraction_to_boundary(&p, &dp).min(fraction_to_boundary(&n, &dn));
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut p_try = p.clone();
            p_try.axpy(alpha, &dp);
            let mut n_try = n.clone();
            n_try.axpy(alpha, &dn);
            let psi_try = problem.psi_pinned(&p_try, &n_try);
            let (rp_try, rn_try) = problem.residual_with_psi(&p_try, &n_try, &psi_try)?;
            let rnorm_try = problem.pair_norm(&rp_try, &rn_try);
            if rnorm_try <= (1.0 - ARMIJO_C1 * alpha) * rnorm {
                rnorm_prev = Some(rnorm);
                p = p_try;
                n = n_try;
                psi = psi_try;
                r_p = rp_try;
                r_n = rn_try;
                rnorm = rnorm_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        iters += 1;
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: iters,
                residual: rnorm,
            });
        }
    }

    let (mu, nu) = chemical_potentials(&p, &n, &psi)?;
    let j_final = if settings.certify {
        problem.functional(&p, &n, settings.certify_tol)?
    } else {
        f64::NAN
    };
    Ok(Step1Result {
        p_new: p,
        n_new: n,
        psi_new: psi,
        mu_new: mu,
        nu_new: nu,
        newton_iters: iters,
        linear_iters,
        final_residual: rnorm,
        j_initial,
        j_final,
    })
}
