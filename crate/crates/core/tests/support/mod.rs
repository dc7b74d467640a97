//! Independent oracles and samplers shared by the integration tests and the
//! acceptance harness. Nothing here calls the transforms under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pnpns_core::integrator::Integrator;
use pnpns_core::ns::project_velocity;
use pnpns_core::pnp::{solve_step1, Step1Problem, Step1Settings};
use pnpns_core::state::mass;
use pnpns_core::{Grid, PhysParams, ScalarField, SchemeConfig, SimState, Spectral, VectorField};
use rand::Rng;

/// Amplitude-normalised coefficient `(1/N²) Σ f(x_i, y_j) e^{−i(k x_i + l y_j)}`
/// by the O(N⁴) sum, in the solver's storage order (row index ↔ x wavenumber).
pub fn direct_dft(f: &ScalarField) -> Vec<Complex64> {
    let n = f.grid().n();
    let wave = |i: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    let h = 2.0 * PI / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for a in 0..n {
        for b in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let phase = -(wave(a) * i as f64 + wave(b) * j as f64) * h;
                    acc += f.at(i, j) * Complex64::from_polar(1.0, phase);
                }
            }
            out[a * n + b] = acc / (n * n) as f64;
        }
    }
    out
}

/// Periodic Fourier differentiation matrix for even N:
/// D_ij = ½(−1)^{i−j} cot((x_i − x_j)/2), zero diagonal.
pub fn diff_matrix_1d(n: usize) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * d * h).tan()
        }
    })
}

/// (∂x, ∂y) on row-major N×N data, with x along the row index.
pub fn diff_matrices_2d(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = diff_matrix_1d(n);
    let eye = DMatrix::<f64>::identity(n, n);
    (d.kronecker(&eye), eye.kronecker(&d))
}

/// Dense weak-form matrix of `L_M`: A_kl = ⟨M ∂e_k, ∂e_l⟩ summed over both
/// directions, divided by the quadrature weight so that `A f` is the nodal field.
pub fn dense_lm(mobility: &ScalarField) -> DMatrix<f64> {
    let n = mobility.grid().n();
    let (dx, dy) = diff_matrices_2d(n);
    let m = DMatrix::from_diagonal(&DVector::from_column_slice(mobility.values()));
    dx.transpose() * &m * &dx + dy.transpose() * &m * &dy
}

pub fn to_dvector(f: &ScalarField) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

/// Largest entrywise difference relative to the largest entry of `reference`.
pub fn rel_diff(a: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(reference).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale.max(f64::MIN_POSITIVE)
}

pub fn random_field(grid: Grid, rng: &mut impl Rng, lo: f64, hi: f64) -> ScalarField {
    ScalarField::from_values(grid, (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Smooth-ish random field: a few low Fourier modes with random amplitudes.
pub fn random_smooth(grid: Grid, rng: &mut impl Rng, amp: f64) -> ScalarField {
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-2..=2) as f64,
                rng.gen_range(-2..=2) as f64,
                rng.gen_range(-amp..amp),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    ScalarField::from_fn(grid, |x, y| modes.iter().map(|(k, l, a, ph)| a * (k * x + l * y + ph).cos()).sum())
}

/// Positive random concentration rescaled to total mass `target`.
pub fn positive_with_mass(grid: Grid, rng: &mut impl Rng, target: f64) -> ScalarField {
    let f = random_field(grid, rng, 0.2, 2.0);
    f.scaled(target / mass(&f))
}

/// Removes the mean and the three Nyquist checkerboards (−1)^i, (−1)^j,
/// (−1)^{i+j}, leaving a field in the range of `L_M`.
pub fn project_to_range(f: &ScalarField) -> ScalarField {
    let g = f.grid();
    let n = g.n();
    let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
    let mut out = f.clone();
    let patterns: [&dyn Fn(usize, usize) -> f64; 4] =
        [&|_, _| 1.0, &|i, _| sign(i), &|_, j| sign(j), &|i, j| sign(i + j)];
    for pat in patterns {
        let c = ScalarField::from_fn_index(g, pat);
        let coef = c.values().iter().zip(out.values()).map(|(a, b)| a * b).sum::<f64>() / (n * n) as f64;
        out.axpy(-coef, &c);
    }
    out
}

/// `base + δ` with δ random in the range of `L_M`, scaled so the result keeps
/// at least half of `base` pointwise. These are exactly the candidates on
/// which the Step-1 functional is finite.
pub fn admissible_candidate(base: &ScalarField, rng: &mut impl Rng) -> ScalarField {
    let delta = project_to_range(&random_field(base.grid(), rng, -1.0, 1.0));
    let t = base
        .values()
        .iter()
        .zip(delta.values())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&b, &d)| 0.5 * b / -d)
        .fold(1.0, f64::min);
    let mut out = base.clone();
    out.axpy(t * rng.gen_range(0.1..1.0), &delta);
    out
}

pub struct Trial {
    pub params: PhysParams,
    pub dt: f64,
    pub integrator: Integrator,
    pub state: SimState,
}

/// Random admissible state on N=8: positive, electroneutral, solenoidal velocity.
pub fn random_trial(rng: &mut impl Rng) -> Trial {
    let params = PhysParams {
        epsilon: rng.gen_range(0.2..2.0),
        kappa: [0.5, 1.0, 10.0, 100.0][rng.gen_range(0..4)],
        diffusion: rng.gen_range(0.5..2.0),
        viscosity: rng.gen_range(0.5..2.0),
    };
    let dt = 10f64.powf(rng.gen_range(-3.0..-1.0));
    let config = SchemeConfig {
        n_modes: 8,
        dt,
        t_final: dt,
        ..SchemeConfig::default()
    };
    let integrator = Integrator::new(params, config).unwrap();
    let g = integrator.grid();
    let p = random_field(g, rng, 0.1, 2.0);
    let n = positive_with_mass(g, rng, mass(&p));
    let u = VectorField::new(random_field(g, rng, -1.0, 1.0), random_field(g, rng, -1.0, 1.0)).unwrap();
    let state = integrator.initialize(p, n, u, None).unwrap();
    Trial {
        params,
        dt,
        integrator,
        state,
    }
}

/// Measured quantities of one Step-1 solve and one projection.
#[derive(Debug, Clone, Copy)]
pub struct InvariantReport {
    pub mass_drift_p: f64,
    pub mass_drift_n: f64,
    pub min_p: f64,
    pub min_n: f64,
    /// J(solution) − J(initial guess), should be ≤ 0.
    pub j_decrease: f64,
    /// J(midpoint) − ½(J(a) + J(b)), should be ≤ 0.
    pub convexity_gap: f64,
    pub divergence: f64,
    pub idempotence: f64,
    pub pythagoras: f64,
}

pub fn check_invariants(trial: &Trial, rng: &mut impl Rng) -> InvariantReport {
    let Trial {
        params,
        dt,
        integrator,
        state,
    } = trial;
    let s = integrator.spectral();
    let g = integrator.grid();
    let settings = Step1Settings {
        certify: true,
        ..Step1Settings::default()
    };
    let res = solve_step1(s, state, params, *dt, &settings, None).unwrap();
    let (m_p, m_n) = (mass(&state.p), mass(&state.n));

    let problem = Step1Problem::new(s, state, params, *dt, None).unwrap();
    let pa = admissible_candidate(&state.p, rng);
    let na = admissible_candidate(&state.n, rng);
    let pb = admissible_candidate(&state.p, rng);
    let nb = admissible_candidate(&state.n, rng);
    let mid = |a: &ScalarField, b: &ScalarField| (a + b).scaled(0.5);
    let ja = problem.functional(&pa, &na, 1e-13).unwrap();
    let jb = problem.functional(&pb, &nb, 1e-13).unwrap();
    let jm = problem.functional(&mid(&pa, &pb), &mid(&na, &nb), 1e-13).unwrap();

    let raw = VectorField::new(random_field(g, rng, -1.0, 1.0), random_field(g, rng, -1.0, 1.0)).unwrap();
    let phi0 = random_field(g, rng, -1.0, 1.0);
    let (u, phi) = project_velocity(s, &raw, &phi0, *dt);
    let (u2, _) = project_velocity(s, &u, &phi, *dt);
    let grad_part = s.grad(&(&phi - &phi0));
    let lhs = s.vector_inner_product(&raw, &raw);
    let rhs = s.vector_inner_product(&u, &u) + dt * dt * s.vector_inner_product(&grad_part, &grad_part);
    let vel_scale = raw.max_abs();

    InvariantReport {
        mass_drift_p: (mass(&res.p_new) - m_p).abs() / m_p,
        mass_drift_n: (mass(&res.n_new) - m_n).abs() / m_n,
        min_p: res.p_new.min(),
        min_n: res.n_new.min(),
        j_decrease: res.j_final - res.j_initial,
        convexity_gap: jm - 0.5 * (ja + jb),
        divergence: s.div(&u).max_abs() / vel_scale,
        idempotence: (&u2 - &u).max_abs() / vel_scale,
        pythagoras: (lhs - rhs).abs() / lhs,
    }
}

/// Fourth-order central difference of `f` at `x` with step `h`.
pub fn d4(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// `Spectral` for an `N×N` grid.
pub fn spectral(n: usize) -> Spectral {
    Spectral::new(Grid::new(n).unwrap())
}
