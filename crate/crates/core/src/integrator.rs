//! Time march: initial projection, the three-stage step and the run loop.

use std::path::PathBuf;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::ns::{self, VelocitySettings};
use crate::par::Execution;
use crate::pnp::{self, Step1Settings};
use crate::spectral::Spectral;
use crate::state::{check_positive, mass, total_energy, PhysParams, SchemeConfig, SimState, StepDiagnostics};

/// Relative net-charge tolerance accepted by [`Integrator::initialize`].
pub const NET_CHARGE_TOLERANCE: f64 = 1e-8;

/// External source terms (f_p, f_n, f_u), as used by manufactured solutions.
pub trait Forcing: Sync {
    fn evaluate(&self, t: f64, grid: Grid) -> Sources;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    pub f_p: ScalarField,
    pub f_n: ScalarField,
    pub f_u: VectorField,
}

/// Receives per-step output while a run progresses.
pub trait RunObserver {
    fn on_step(&mut self, _diag: &StepDiagnostics) -> Result<()> {
        Ok(())
    }

    /// Called when a scheduled snapshot time is reached; returns where it was stored.
    fn on_snapshot(&mut self, _index: usize, _state: &SimState) -> Result<Option<PathBuf>> {
        Ok(None)
    }
}

impl RunObserver for () {}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    SolverFailure { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub requested_time: f64,
    pub time: f64,
    pub step: usize,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: SchemeConfig,
    pub params: PhysParams,
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<SnapshotEntry>,
    pub termination: Termination,
    pub final_state: SimState,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }
}

/// Owns the operators and settings of one simulation.
#[derive(Debug, Clone)]
pub struct Integrator {
    spectral: Spectral,
    params: PhysParams,
    config: SchemeConfig,
    step1: Step1Settings,
    velocity: VelocitySettings,
}

impl Integrator {
    pub fn new(params: PhysParams, config: SchemeConfig) -> Result<Self> {
        Self::with_execution(params, config, Execution::default())
    }

    pub fn with_execution(params: PhysParams, config: SchemeConfig, exec: Execution) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        let spectral = Spectral::with_options(config.grid()?, exec, config.dealias);
        let step1 = Step1Settings::from(&config);
        let velocity = VelocitySettings {
            tol: config.krylov_tol,
            max_iter: config.krylov_max_iter,
            convection: config.convection,
        };
        Ok(Integrator {
            spectral,
            params,
            config,
            step1,
            velocity,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn grid(&self) -> Grid {
        self.spectral.grid()
    }

    pub fn step1_settings_mut(&mut self) -> &mut Step1Settings {
        &mut self.step1
    }

    pub fn velocity_settings_mut(&mut self) -> &mut VelocitySettings {
        &mut self.velocity
    }

    /// Builds the initial state from sampled fields: ψ⁰, μ⁰, ν⁰ from the
    /// concentrations, u projected onto divergence-free fields, φ⁰ given or 0.
    pub fn initialize(
        &self,
        p_in: ScalarField,
        n_in: ScalarField,
        u_in: VectorField,
        phi_in: Option<ScalarField>,
    ) -> Result<SimState> {
        let grid = self.grid();
        for f in [&p_in, &n_in, &u_in.x, &u_in.y] {
            grid.check(&f.grid())?;
        }
        check_positive(&p_in)?;
        check_positive(&n_in)?;
        let charge = mass(&p_in) - mass(&n_in);
        let tol = NET_CHARGE_TOLERANCE * mass(&p_in);
        if charge.abs() > tol {
            return Err(Error::NetChargeNonzero { charge, tol });
        }
        let psi = self
            .spectral
            .inv_laplacian_pinned(&(&p_in - &n_in).scaled(1.0 / self.params.epsilon));
        let (mu, nu) = pnp::chemical_potentials(&p_in, &n_in, &psi)?;
        let (u, _) = ns::project_velocity(&self.spectral, &u_in, &ScalarField::zeros(grid), 1.0);
        let mut phi = phi_in.unwrap_or_else(|| ScalarField::zeros(grid));
        grid.check(&phi.grid())?;
        phi.remove_mean();
        Ok(SimState {
            step_index: 0,
            time: 0.0,
            p: p_in,
            n: n_in,
            psi,
            mu,
            nu,
            u_tilde: u.clone(),
            u,
            phi,
        })
    }

    /// Samples analytic initial data on the grid, then calls [`Integrator::initialize`].
    pub fn initialize_from_fn(
        &self,
        p: impl Fn(f64, f64) -> f64,
        n: impl Fn(f64, f64) -> f64,
        u: impl Fn(f64, f64) -> (f64, f64),
        phi: Option<&dyn Fn(f64, f64) -> f64>,
    ) -> Result<SimState> {
        let g = self.grid();
        self.initialize(
            ScalarField::from_fn(g, p),
            ScalarField::from_fn(g, n),
            VectorField::from_fn(g, u),
            phi.map(|f| ScalarField::from_fn(g, f)),
        )
    }

    pub fn diagnostics(&self, state: &SimState) -> Result<StepDiagnostics> {
        Ok(StepDiagnostics {
            step: state.step_index,
            time: state.time,
            mass_p: mass(&state.p),
            mass_n: mass(&state.n),
            min_p: state.p.min(),
            min_n: state.n.min(),
            max_p: state.p.max(),
            max_n: state.n.max(),
            energy: total_energy(&self.spectral, state, &self.params, self.config.dt)?,
            ..Default::default()
        })
    }

    /// One full step: ion solve, convection–diffusion, projection.
    pub fn advance(
        &self,
        state: &SimState,
        forcing: Option<&dyn Forcing>,
    ) -> Result<(SimState, StepDiagnostics)> {
        let step = state.step_index + 1;
        self.advance_inner(state, forcing).map_err(|e| e.at_step(step))
    }

    fn advance_inner(
        &self,
        state: &SimState,
        forcing: Option<&dyn Forcing>,
    ) -> Result<(SimState, StepDiagnostics)> {
        let started = Instant::now();
        let s = &self.spectral;
        let dt = self.config.dt;
        let step = state.step_index + 1;
        let time = state.time + dt;
        let sources = forcing.map(|f| f.evaluate(time, self.grid()));

        let ions = pnp::solve_step1(
            s,
            state,
            &self.params,
            dt,
            &self.step1,
            sources.as_ref().map(|src| (&src.f_p, &src.f_n)),
        )?;
        let body = ns::ion_forcing(s, &state.p, &state.n, &ions.mu_new, &ions.nu_new, self.params.kappa);
        let (u_tilde, vstats) = ns::solve_velocity(
            s,
            &state.u,
            &state.phi,
            &body,
            sources.as_ref().map(|src| &src.f_u),
            &self.params,
            dt,
            &self.velocity,
        )?;
        let (u, phi) = ns::project_velocity(s, &u_tilde, &state.phi, dt);

        let next = SimState {
            step_index: step,
            time,
            p: ions.p_new,
            n: ions.n_new,
            psi: ions.psi_new,
            mu: ions.mu_new,
            nu: ions.nu_new,
            u,
            u_tilde,
            phi,
        };
        let mut diag = self.diagnostics(&next)?;
        diag.newton_iters = ions.newton_iters;
        diag.residual_step1 = ions.final_residual;
        diag.krylov_iters_step2 = vstats.iterations;
        diag.residual_step2 = vstats.residual;
        diag.wall_time_s = started.elapsed().as_secs_f64();
        Ok((next, diag))
    }

    /// Marches from `initial` to `t_final`, streaming diagnostics and
    /// snapshots to `observer`. Solver failures end the run early and are
    /// reported in [`RunRecord::termination`]; observer errors are returned.
    pub fn run(
        &self,
        initial: SimState,
        forcing: Option<&dyn Forcing>,
        observer: &mut dyn RunObserver,
    ) -> Result<RunRecord> {
        let dt = self.config.dt;
        let mut schedule = self.config.snapshot_times.clone();
        schedule.sort_by(f64::total_cmp);
        let mut pending = schedule.into_iter().peekable();
        let mut snapshots = Vec::new();
        let mut take_snapshots = |state: &SimState, observer: &mut dyn RunObserver| -> Result<()> {
            let mut due = Vec::new();
            while let Some(&t) = pending.peek() {
                if state.time >= t - 1e-9 * dt {
                    due.push(t);
                    pending.next();
                } else {
                    break;
                }
            }
            if !due.is_empty() {
                let path = observer.on_snapshot(snapshots.len(), state)?;
                for t in due {
                    snapshots.push(SnapshotEntry {
                        requested_time: t,
                        time: state.time,
                        step: state.step_index,
                        path: path.clone(),
                    });
                }
            }
            Ok(())
        };

        let mut state = initial;
        take_snapshots(&state, observer)?;
        let mut diagnostics = Vec::new();
        let mut termination = Termination::Completed;
        for _ in 0..self.config.n_steps_from(state.time) {
            match self.advance(&state, forcing) {
                Ok((next, diag)) => {
                    observer.on_step(&diag)?;
                    diagnostics.push(diag);
                    state = next;
                    take_snapshots(&state, observer)?;
                }
                Err(e) => {
                    termination = Termination::SolverFailure {
                        step: state.step_index + 1,
                        message: e.to_string(),
                    };
                    break;
                }
            }
        }
        Ok(RunRecord {
            config: self.config.clone(),
            params: self.params,
            diagnostics,
            snapshots,
            termination,
            final_state: state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, dt: f64, t_final: f64) -> SchemeConfig {
        SchemeConfig {
            n_modes: n,
            dt,
            t_final,
            ..SchemeConfig::default()
        }
    }

    #[test]
    fn initialize_rejects_net_charge() {
        let integ = Integrator::new(PhysParams::default(), config(8, 0.1, 0.3)).unwrap();
        let err = integ
            .initialize_from_fn(|_, _| 1.0, |_, _| 1.1, |_, _| (0.0, 0.0), None)
            .unwrap_err();
        assert!(matches!(err, Error::NetChargeNonzero { .. }));
        let err = integ
            .initialize_from_fn(|x, _| x.cos(), |x, _| x.cos(), |_, _| (0.0, 0.0), None)
            .unwrap_err();
        assert!(matches!(err, Error::NonPositiveConcentration { .. }));
    }

    #[test]
    fn initialize_projects_velocity() {
        let integ = Integrator::new(PhysParams::default(), config(16, 0.1, 0.3)).unwrap();
        let st = integ
            .initialize_from_fn(|_, _| 1.0, |_, _| 1.0, |x, _| (x.cos(), 0.0), None)
            .unwrap();
        assert!(st.u.max_abs() < 1e-14);
        assert!(st.psi.max_abs() == 0.0);
    }

    #[test]
    fn uniform_run_has_identical_rows() {
        let integ = Integrator::new(PhysParams::default(), config(8, 0.1, 0.3)).unwrap();
        let st = integ
            .initialize_from_fn(|_, _| 1.0, |_, _| 1.0, |_, _| (0.0, 0.0), None)
            .unwrap();
        let rec = integ.run(st, None, &mut ()).unwrap();
        assert!(rec.completed());
        assert_eq!(rec.diagnostics.len(), 3);
        let first = &rec.diagnostics[0];
        for d in &rec.diagnostics {
            assert_eq!(d.mass_p, first.mass_p);
            assert_eq!(d.energy.total, first.energy.total);
        }
    }

    #[test]
    fn snapshots_taken_at_first_step_past_request() {
        struct Count(Vec<usize>);
        impl RunObserver for Count {
            fn on_snapshot(&mut self, _i: usize, s: &SimState) -> Result<Option<PathBuf>> {
                self.0.push(s.step_index);
                Ok(None)
            }
        }
        let mut cfg = config(8, 0.1, 0.5);
        cfg.snapshot_times = vec![0.25, 0.0, 0.3, 0.31];
        let integ = Integrator::new(PhysParams::default(), cfg).unwrap();
        let st = integ
            .initialize_from_fn(|_, _| 1.0, |_, _| 1.0, |_, _| (0.0, 0.0), None)
            .unwrap();
        let mut obs = Count(Vec::new());
        let rec = integ.run(st, None, &mut obs).unwrap();
        assert_eq!(obs.0, vec![0, 3, 4]);
        let steps: Vec<usize> = rec.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 3, 3, 4]);
    }
}
