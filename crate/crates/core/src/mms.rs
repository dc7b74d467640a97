//! Manufactured solution on the periodic square and the temporal
//! convergence study built on it.
//!
//! Exact fields (C = cos x cos y, s = sin t, c = cos t):
//!
//! ```text
//! p = 1.1 + C s        n = 1.1 − C c        P = C s
//! ψ = C (s + c) / (2ε)
//! u = (sin²x sin 2y · s, −sin 2x sin²y · β(t))
//! ```
//!
//! with β = sin t for the solenoidal variant and β = cos t otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::integrator::{Forcing, Integrator, Sources};
use crate::par::Execution;
use crate::state::{PhysParams, SchemeConfig, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmsVariant {
    /// Second velocity component carries sin t, so ∇·u = 0.
    #[default]
    DivergenceFree,
    /// Second velocity component carries cos t; ∇·u = sin 2x sin 2y (sin t − cos t).
    PaperExact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsCase {
    pub params: PhysParams,
    pub variant: MmsVariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactFields {
    pub p: ScalarField,
    pub n: ScalarField,
    pub u: VectorField,
    pub pressure: ScalarField,
    pub psi: ScalarField,
}

fn harmonic(x: f64, y: f64) -> f64 {
    x.cos() * y.cos()
}

fn harmonic_grad(x: f64, y: f64) -> (f64, f64) {
    (-x.sin() * y.cos(), -x.cos() * y.sin())
}

impl MmsCase {
    pub fn new(params: PhysParams, variant: MmsVariant) -> Self {
        MmsCase { params, variant }
    }

    fn beta(&self, t: f64) -> (f64, f64) {
        match self.variant {
            MmsVariant::DivergenceFree => (t.sin(), t.cos()),
            MmsVariant::PaperExact => (t.cos(), -t.sin()),
        }
    }

    /// Amplitude of ψ: ψ = a(t) cos x cos y.
    fn psi_amplitude(&self, t: f64) -> f64 {
        (t.sin() + t.cos()) / (2.0 * self.params.epsilon)
    }

    pub fn p(&self, x: f64, y: f64, t: f64) -> f64 {
        1.1 + harmonic(x, y) * t.sin()
    }

    pub fn n(&self, x: f64, y: f64, t: f64) -> f64 {
        1.1 - harmonic(x, y) * t.cos()
    }

    pub fn psi(&self, x: f64, y: f64, t: f64) -> f64 {
        harmonic(x, y) * self.psi_amplitude(t)
    }

    pub fn pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        harmonic(x, y) * t.sin()
    }

    /// Modified pressure P − κ(p + n) with its mean removed.
    pub fn modified_pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        harmonic(x, y) * (t.sin() - self.params.kappa * (t.sin() - t.cos()))
    }

    /// ∇·u = (sin t − β) sin 2x sin 2y
    pub fn div_u(&self, x: f64, y: f64, t: f64) -> f64 {
        let (b, _) = self.beta(t);
        (t.sin() - b) * (2.0 * x).sin() * (2.0 * y).sin()
    }

    pub fn u(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let (b, _) = self.beta(t);
        let w1 = x.sin().powi(2) * (2.0 * y).sin();
        let w2 = -(2.0 * x).sin() * y.sin().powi(2);
        (t.sin() * w1, b * w2)
    }

    pub fn f_p(&self, x: f64, y: f64, t: f64) -> f64 {
        let (s, c) = (t.sin(), t.cos());
        let cc = harmonic(x, y);
        let (gx, gy) = harmonic_grad(x, y);
        let g2 = gx * gx + gy * gy;
        let a = self.psi_amplitude(t);
        let p = self.p(x, y, t);
        let (ux, uy) = self.u(x, y, t);
        // ∇·(p u)
        let advection = s * (ux * gx + uy * gy) + p * self.div_u(x, y, t);
        // ∇·(∇p + p∇ψ)
        let flux_div = -2.0 * s * cc + a * (s * g2 - 2.0 * p * cc);
        cc * c + advection - self.params.diffusion * flux_div
    }

    pub fn f_n(&self, x: f64, y: f64, t: f64) -> f64 {
        let (s, c) = (t.sin(), t.cos());
        let cc = harmonic(x, y);
        let (gx, gy) = harmonic_grad(x, y);
        let g2 = gx * gx + gy * gy;
        let a = self.psi_amplitude(t);
        let n = self.n(x, y, t);
        let (ux, uy) = self.u(x, y, t);
        let advection = -c * (ux * gx + uy * gy) + n * self.div_u(x, y, t);
        // ∇·(∇n − n∇ψ)
        let flux_div = 2.0 * c * cc + a * (c * g2 + 2.0 * n * cc);
        cc * s + advection - self.params.diffusion * flux_div
    }

    pub fn f_u(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let (s, c) = (t.sin(), t.cos());
        let (b, db) = self.beta(t);
        let (sx, cx, s2x, c2x) = (x.sin(), x.cos(), (2.0 * x).sin(), (2.0 * x).cos());
        let (sy, cy, s2y, c2y) = (y.sin(), y.cos(), (2.0 * y).sin(), (2.0 * y).cos());
        let w1 = sx * sx * s2y;
        let w2 = -s2x * sy * sy;
        let (w1x, w1y) = (s2x * s2y, 2.0 * sx * sx * c2y);
        let (w2x, w2y) = (-2.0 * c2x * sy * sy, -s2x * s2y);
        let lap_w1 = -2.0 * s2y + 4.0 * c2x * s2y;
        let lap_w2 = 2.0 * s2x - 4.0 * s2x * c2y;
        let (ux, uy) = (s * w1, b * w2);
        let cc = cx * cy;
        let (gx, gy) = harmonic_grad(x, y);
        let nu = self.params.viscosity;
        // κ (p − n) ∇ψ, with p − n = C (s + c) and ∇ψ = a ∇C
        let body = self.params.kappa * cc * (s + c) * self.psi_amplitude(t);
        let fx = c * w1 + ux * s * w1x + uy * s * w1y - nu * s * lap_w1 + s * gx + body * gx;
        let fy = db * w2 + ux * b * w2x + uy * b * w2y - nu * b * lap_w2 + s * gy + body * gy;
        (fx, fy)
    }

    pub fn exact_state(&self, t: f64, grid: Grid) -> ExactFields {
        ExactFields {
            p: ScalarField::from_fn(grid, |x, y| self.p(x, y, t)),
            n: ScalarField::from_fn(grid, |x, y| self.n(x, y, t)),
            u: VectorField::from_fn(grid, |x, y| self.u(x, y, t)),
            pressure: ScalarField::from_fn(grid, |x, y| self.pressure(x, y, t)),
            psi: ScalarField::from_fn(grid, |x, y| self.psi(x, y, t)),
        }
    }

    /// Sampled forcing (f_p, f_n, f_u) at time `t`.
    pub fn forcing(&self, t: f64, grid: Grid) -> Sources {
        Sources {
            f_p: ScalarField::from_fn(grid, |x, y| self.f_p(x, y, t)),
            f_n: ScalarField::from_fn(grid, |x, y| self.f_n(x, y, t)),
            f_u: VectorField::from_fn(grid, |x, y| self.f_u(x, y, t)),
        }
    }

    /// Discrete state built from the exact fields at time `t`, including the
    /// modified pressure.
    pub fn initial_state(&self, integrator: &Integrator, t: f64) -> Result<SimState> {
        let g = integrator.grid();
        let exact = self.exact_state(t, g);
        let phi = ScalarField::from_fn(g, |x, y| self.modified_pressure(x, y, t));
        let mut state = integrator.initialize(exact.p, exact.n, exact.u, Some(phi))?;
        state.time = t;
        Ok(state)
    }

    /// L² errors of (p, n, u, ψ) against the exact fields at `state.time`.
    pub fn errors(&self, state: &SimState) -> Result<[f64; 4]> {
        let exact = self.exact_state(state.time, state.grid());
        Ok([
            l2_error(&state.p, &exact.p)?,
            l2_error(&state.n, &exact.n)?,
            l2_error_vector(&state.u, &exact.u)?,
            l2_error(&state.psi, &exact.psi)?,
        ])
    }
}

impl Forcing for MmsCase {
    fn evaluate(&self, t: f64, grid: Grid) -> Sources {
        self.forcing(t, grid)
    }
}

/// Discrete L² distance between two fields on the same grid.
pub fn l2_error(numeric: &ScalarField, exact: &ScalarField) -> Result<f64> {
    numeric.grid().check(&exact.grid())?;
    let sum: f64 = numeric
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum * numeric.grid().weight()).sqrt())
}

pub fn l2_error_vector(numeric: &VectorField, exact: &VectorField) -> Result<f64> {
    let ex = l2_error(&numeric.x, &exact.x)?;
    let ey = l2_error(&numeric.y, &exact.y)?;
    Ok(ex.hypot(ey))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub err_p: f64,
    pub err_n: f64,
    pub err_u: f64,
    pub err_psi: f64,
    pub order_p: Option<f64>,
    pub order_n: Option<f64>,
    pub order_u: Option<f64>,
    pub order_psi: Option<f64>,
}

impl ConvergenceRow {
    pub fn errors(&self) -> [f64; 4] {
        [self.err_p, self.err_n, self.err_u, self.err_psi]
    }

    pub fn orders(&self) -> Option<[f64; 4]> {
        Some([self.order_p?, self.order_n?, self.order_u?, self.order_psi?])
    }
}

/// Observed order between consecutive refinements.
pub fn observed_order(dt_coarse: f64, err_coarse: f64, dt_fine: f64, err_fine: f64) -> f64 {
    (err_coarse / err_fine).ln() / (dt_coarse / dt_fine).ln()
}

/// Runs the forced scheme to `base.t_final` once per entry of `dt_list`
/// (independent runs, parallel under `exec`) and tabulates errors and orders.
/// All other settings come from `base`.
pub fn convergence_study(
    case: &MmsCase,
    base: &SchemeConfig,
    dt_list: &[f64],
    exec: Execution,
) -> Result<Vec<ConvergenceRow>> {
    if dt_list.is_empty() {
        return Err(Error::InvalidConfig("convergence dt_list is empty".into()));
    }
    if dt_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidConfig("convergence dt_list must be strictly decreasing".into()));
    }
    for &dt in dt_list {
        let ratio = base.t_final / dt;
        if !(dt > 0.0) || (ratio - ratio.round()).abs() > 1e-12 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "t_final {} is not a multiple of dt {dt}",
                base.t_final
            )));
        }
    }
    let errors = exec.map(dt_list, |&dt| -> Result<[f64; 4]> {
        let cfg = SchemeConfig {
            dt,
            snapshot_times: Vec::new(),
            ..base.clone()
        };
        // the runs themselves are the unit of parallelism
        let integ = Integrator::with_execution(case.params, cfg.clone(), Execution::Sequential)?;
        let mut state = case.initial_state(&integ, 0.0)?;
        for _ in 0..cfg.n_steps() {
            state = integ.advance(&state, Some(case))?.0;
        }
        case.errors(&state)
    });
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(dt_list.len());
    for (&dt, e) in dt_list.iter().zip(errors) {
        let e = e?;
        let orders = rows.last().map(|prev| {
            let pe = prev.errors();
            [0, 1, 2, 3].map(|k| observed_order(prev.dt, pe[k], dt, e[k]))
        });
        rows.push(ConvergenceRow {
            dt,
            err_p: e[0],
            err_n: e[1],
            err_u: e[2],
            err_psi: e[3],
            order_p: orders.map(|o| o[0]),
            order_n: orders.map(|o| o[1]),
            order_u: orders.map(|o| o[2]),
            order_psi: orders.map(|o| o[3]),
        });
    }
    Ok(rows)
}
