//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Positional arguments select criteria (`cargo test --test
//! acceptance -- 1 6`); `PNPNS_THREADS` caps the worker pool.

mod support;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use pnpns_core::integrator::{Integrator, RunObserver};
use pnpns_core::io::{self, InitialCondition, RunConfigFile};
use pnpns_core::mms::{convergence_study, MmsCase, MmsVariant};
use pnpns_core::par::with_thread_cap;
use pnpns_core::pnp::Step1Problem;
use pnpns_core::{Execution, PhysParams, ScalarField, SchemeConfig, StepDiagnostics, VectorField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
            notes: Vec::new(),
        }
    }
}

const TABLE1_DT: f64 = 1e-2;
/// Published errors at Δt = 1e-2 in the order (p, n, u, ψ).
const TABLE1_FIRST_ROW: [f64; 4] = [1.01e-2, 4.24e-3, 6.33e-4, 1.21e-2];
const NAMES: [&str; 4] = ["p", "n", "u", "psi"];

fn criterion_convergence() -> Outcome {
    let dt_list = [1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4, 3.125e-4];
    let base = SchemeConfig {
        n_modes: 64,
        dt: dt_list[0],
        t_final: 0.5,
        ..SchemeConfig::default()
    };
    let case = MmsCase::new(PhysParams::default(), MmsVariant::DivergenceFree);
    let rows = convergence_study(&case, &base, &dt_list, Execution::default()).unwrap();
    let mut pass = true;
    let mut worst = (1.0f64, "");
    for row in &rows[rows.len() - 3..] {
        for (name, order) in NAMES.iter().zip(row.orders().unwrap()) {
            if !(0.9..=1.1).contains(&order) {
                pass = false;
            }
            if (order - 1.0).abs() >= (worst.0 - 1.0).abs() {
                worst = (order, name);
            }
        }
    }
    let mut out = Outcome::new(
        pass,
        format!(
            "orders over the last three halvings in [0.9, 1.1]; furthest from 1 is {} = {:.3}",
            worst.1, worst.0
        ),
    );
    out.notes.extend(io::convergence_table(&rows).lines().map(str::to_owned));
    assert_eq!(rows[0].dt, TABLE1_DT);
    let ratios: Vec<String> = NAMES
        .iter()
        .zip(rows[0].errors())
        .zip(TABLE1_FIRST_ROW)
        .map(|((name, ours), theirs)| {
            let r = (ours / theirs).max(theirs / ours);
            let verdict = if r <= 5.0 { "within 5x" } else { "outside 5x" };
            format!("{name} {r:.1}x {verdict}")
        })
        .collect();
    out.notes.push(format!("soft magnitude check against the published first row: {}", ratios.join(", ")));
    out
}

struct Progress {
    every: usize,
    started: Instant,
}

impl RunObserver for Progress {
    fn on_step(&mut self, d: &StepDiagnostics) -> pnpns_core::Result<()> {
        if d.step % self.every == 0 {
            eprintln!(
                "    step {:>5}  t = {:.4e}  energy {:.12e}  newton {}  ({:.0} s)",
                d.step,
                d.time,
                d.energy.total,
                d.newton_iters,
                self.started.elapsed().as_secs_f64()
            );
        }
        Ok(())
    }
}

fn criterion_property() -> Outcome {
    let cfg = RunConfigFile::from_json(
        r#"{"physics": {"epsilon": 1, "kappa": 10000, "diffusion": 1, "viscosity": 1},
            "grid": {"n_modes": 64},
            "time": {"dt": 1e-4, "t_final": 0.1, "snapshot_times": [0.005, 0.025, 0.05, 0.075, 0.1]},
            "initial": {"preset": "blobs_5_2"}}"#,
    )
    .unwrap();
    assert_eq!(cfg.initial, InitialCondition::Blobs {});
    let integ = Integrator::with_execution(cfg.physics, cfg.scheme_config(), Execution::default()).unwrap();
    let (state, _) = io::initial_state(&cfg, &integ).unwrap();
    let initial = integ.diagnostics(&state).unwrap();
    let mut obs = Progress {
        every: 100,
        started: Instant::now(),
    };
    let record = integ.run(state, None, &mut obs).unwrap();
    if let Some(msg) = io::failure_message(&record) {
        return Outcome::new(false, msg);
    }
    let rows = &record.diagnostics;
    let drift = |f: fn(&StepDiagnostics) -> f64| {
        rows.iter()
            .map(|d| (f(d) - f(&initial)).abs() / f(&initial))
            .fold(0.0, f64::max)
    };
    let (drift_p, drift_n) = (drift(|d| d.mass_p), drift(|d| d.mass_n));
    let min_conc = rows.iter().map(|d| d.min_p.min(d.min_n)).fold(f64::INFINITY, f64::min);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut prev = initial.energy.total;
    for d in rows {
        worst_rise = worst_rise.max((d.energy.total - prev) / prev.abs());
        prev = d.energy.total;
    }
    let snaps: Vec<String> = record.snapshots.iter().map(|s| format!("{:.3}", s.time)).collect();
    let pass = rows.len() == 1000
        && drift_p <= 1e-10
        && drift_n <= 1e-10
        && min_conc > 0.0
        && worst_rise <= 1e-10
        && record.snapshots.len() == 5;
    let mut out = Outcome::new(
        pass,
        format!(
            "{} steps; mass drift p {drift_p:.1e}, n {drift_n:.1e}; min concentration {min_conc:.3e}; \
             largest relative energy rise {worst_rise:.1e}",
            rows.len()
        ),
    );
    out.notes.push(format!(
        "energy {:.10e} -> {:.10e}; snapshots at t = {}",
        initial.energy.total,
        prev,
        snaps.join(", ")
    ));
    out
}

fn criterion_invariants() -> Outcome {
    let trials = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [f64::NEG_INFINITY; 6];
    let mut min_conc = f64::INFINITY;
    for _ in 0..trials {
        let trial = random_trial(&mut rng);
        let r = check_invariants(&trial, &mut rng);
        let vals = [
            r.mass_drift_p.max(r.mass_drift_n),
            r.j_decrease,
            r.convexity_gap,
            r.divergence,
            r.idempotence,
            r.pythagoras,
        ];
        for (w, v) in worst.iter_mut().zip(vals) {
            *w = w.max(v);
        }
        min_conc = min_conc.min(r.min_p.min(r.min_n));
    }
    let [mass_d, j_dec, conv, div, idem, pyth] = worst;
    let pass = mass_d <= 1e-11
        && min_conc > 0.0
        && j_dec <= 1e-10
        && conv <= 1e-10
        && div <= 1e-11
        && idem <= 1e-11
        && pyth <= 1e-10;
    Outcome::new(
        pass,
        format!(
            "{trials} trials on N=8; mass {mass_d:.1e}, min conc {min_conc:.2e}, J(sol)-J(init) <= {j_dec:.1e}, \
             convexity gap <= {conv:.1e}, div {div:.1e}, idempotence {idem:.1e}, Pythagoras {pyth:.1e}"
        ),
    )
}

fn criterion_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = spectral(8);
    let g = s.grid();

    let mut dft_err = 0.0f64;
    for _ in 0..20 {
        let f = random_field(g, &mut rng, -1.0, 1.0);
        let fast = s.transform(&f).unwrap();
        for (a, b) in fast.data().iter().zip(direct_dft(&f)) {
            dft_err = dft_err.max((a - b).norm());
        }
    }

    let mut lm_err = 0.0f64;
    let mut solve_err = 0.0f64;
    for _ in 0..20 {
        let m = random_field(g, &mut rng, 0.1, 3.0);
        let a = dense_lm(&m);
        let f = random_field(g, &mut rng, -1.0, 1.0);
        lm_err = lm_err.max(rel_diff(s.apply_lm(&m, &f).unwrap().values(), (&a * to_dvector(&f)).as_slice()));
        let rhs = project_to_range(&f);
        let fast = s.solve_lm(&m, &rhs, 1e-14).unwrap();
        let dense = a.pseudo_inverse(1e-10).unwrap() * to_dvector(&rhs);
        solve_err = solve_err.max(rel_diff(fast.values(), dense.as_slice()));
    }

    let mut jac_err = 0.0f64;
    for _ in 0..20 {
        let trial = random_trial(&mut rng);
        let sp = trial.integrator.spectral();
        let problem = Step1Problem::new(sp, &trial.state, &trial.params, trial.dt, None).unwrap();
        let p = admissible_candidate(&trial.state.p, &mut rng);
        let n = admissible_candidate(&trial.state.n, &mut rng);
        let dp = project_to_range(&random_field(g, &mut rng, -1.0, 1.0));
        let dn = project_to_range(&random_field(g, &mut rng, -1.0, 1.0));
        let h = 1e-5;
        let shifted = |c: &ScalarField, d: &ScalarField, t: f64| {
            let mut out = c.clone();
            out.axpy(t, d);
            out
        };
        let (pp, np) = problem.residual(&shifted(&p, &dp, h), &shifted(&n, &dn, h)).unwrap();
        let (pm, nm) = problem.residual(&shifted(&p, &dp, -h), &shifted(&n, &dn, -h)).unwrap();
        let fd: Vec<f64> = (&pp - &pm)
            .values()
            .iter()
            .chain((&np - &nm).values())
            .map(|v| v * 0.5 / h)
            .collect();
        let (jp, jn) = problem.jacobian_apply(&p, &n, &dp, &dn);
        let an: Vec<f64> = jp.values().iter().chain(jn.values()).copied().collect();
        jac_err = jac_err.max(rel_diff(&an, &fd));
    }

    let pass = dft_err <= 1e-12 && lm_err <= 1e-9 && solve_err <= 1e-9 && jac_err <= 1e-6;
    Outcome::new(
        pass,
        format!(
            "N=8; transform vs direct DFT {dft_err:.1e}, apply_LM vs dense {lm_err:.1e}, \
             solve_LM vs dense {solve_err:.1e}, Jacobian vs central differences {jac_err:.1e}"
        ),
    )
}

fn criterion_steady_state() -> Outcome {
    let params = PhysParams {
        kappa: 10.0,
        ..PhysParams::default()
    };
    let config = SchemeConfig {
        n_modes: 32,
        dt: 1e-3,
        t_final: 0.1,
        ..SchemeConfig::default()
    };
    let integ = Integrator::new(params, config).unwrap();
    let state = integ
        .initialize_from_fn(|_, _| 1.3, |_, _| 1.3, |_, _| (0.0, 0.0), None)
        .unwrap();
    let e0 = integ.diagnostics(&state).unwrap().energy.total;
    let record = integ.run(state.clone(), None, &mut ()).unwrap();
    let last = &record.final_state;
    let diff = |a: &ScalarField, b: &ScalarField| (a - b).max_abs();
    let vdiff = |a: &VectorField, b: &VectorField| (a - b).max_abs();
    let field_change = [
        diff(&last.p, &state.p),
        diff(&last.n, &state.n),
        diff(&last.psi, &state.psi),
        diff(&last.phi, &state.phi),
        vdiff(&last.u, &state.u),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let energy_change = record
        .diagnostics
        .iter()
        .map(|d| (d.energy.total - e0).abs() / e0.abs())
        .fold(0.0, f64::max);
    let pass = record.diagnostics.len() == 100 && field_change <= 1e-11 && energy_change <= 1e-12;
    Outcome::new(
        pass,
        format!(
            "{} steps; largest field change {field_change:.1e}, relative energy change {energy_change:.1e}",
            record.diagnostics.len()
        ),
    )
}

fn criterion_one_step() -> Outcome {
    let case = MmsCase::new(PhysParams::default(), MmsVariant::DivergenceFree);
    let dts = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let errors: Vec<[f64; 4]> = dts
        .iter()
        .map(|&dt| {
            let config = SchemeConfig {
                n_modes: 64,
                dt,
                t_final: dt,
                ..SchemeConfig::default()
            };
            let integ = Integrator::new(case.params, config).unwrap();
            let start = case.initial_state(&integ, 0.0).unwrap();
            let (next, _) = integ.advance(&start, Some(&case)).unwrap();
            case.errors(&next).unwrap()
        })
        .collect();
    let ratios: Vec<[f64; 4]> = errors
        .windows(2)
        .map(|w| std::array::from_fn(|k| w[0][k] / w[1][k]))
        .collect();
    let column = |k: usize| ratios.iter().map(|r| r[k]).collect::<Vec<f64>>();
    // p, n and ψ carry the second-order local error; u is at least that accurate
    let second_order = [0, 1, 3].iter().all(|&k| column(k).iter().all(|r| (r - 4.0).abs() <= 0.4));
    let u_ok = column(2).iter().all(|&r| r >= 3.6);
    let fmt = |v: &[f64]| v.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ");
    let detail = format!(
        "ratios under halving: p {}; n {}; psi {}",
        fmt(&column(0)),
        fmt(&column(1)),
        fmt(&column(3))
    );
    let mut out = Outcome::new(second_order && u_ok, detail);
    out.notes.push(format!("u ratios {} (local error above second order)", fmt(&column(2))));
    out
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let threads = std::env::var("PNPNS_THREADS").ok().and_then(|t| t.parse().ok());
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("convergence orders", criterion_convergence),
        ("property experiment", criterion_property),
        ("step invariants", criterion_invariants),
        ("oracle equivalence", criterion_oracles),
        ("uniform steady state", criterion_steady_state),
        ("one-step consistency", criterion_one_step),
    ];
    let mut failures = 0;
    with_thread_cap(threads, || {
        for (idx, (name, run)) in criteria.iter().enumerate() {
            let number = idx + 1;
            if !selected.is_empty() && !selected.contains(&number) {
                continue;
            }
            let started = Instant::now();
            let outcome = panic::catch_unwind(AssertUnwindSafe(run))
                .unwrap_or_else(|e| {
                    let msg = e
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default();
                    Outcome::new(false, format!("panicked: {msg}"))
                });
            let verdict = if outcome.pass { "PASS" } else { "FAIL" };
            println!(
                "criterion {number} ({name}): {verdict} [{:.1} s] {}",
                started.elapsed().as_secs_f64(),
                outcome.detail
            );
            for note in &outcome.notes {
                println!("    {note}");
            }
            if !outcome.pass {
                failures += 1;
            }
        }
    });
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
