//! Run configuration files, CSV output, binary snapshots and the
//! `run` / `convergence` / `inspect` commands built on them.
//!
//! Relative paths inside a configuration file resolve against the directory
//! that contains the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::integrator::{Integrator, RunObserver, RunRecord, Termination};
use crate::mms::{convergence_study, ConvergenceRow, MmsCase, MmsVariant};
use crate::ns::ConvectionForm;
use crate::par::Execution;
use crate::pnp::chemical_potentials;
use crate::state::{mass, total_energy, PhysParams, SchemeConfig, SimState, StepDiagnostics};

/// Blob centres and radius of the two-ion property experiment.
pub const BLOB_CENTER_P: f64 = 0.8 * std::f64::consts::PI;
pub const BLOB_CENTER_N: f64 = 1.2 * std::f64::consts::PI;
pub const BLOB_RADIUS: f64 = 0.2 * std::f64::consts::PI;

/// `1 + 1e-6 − tanh(2((x − c)² + (y − c)² − r²))`
pub fn blob(x: f64, y: f64, center: f64) -> f64 {
    let r2 = (x - center).powi(2) + (y - center).powi(2);
    1.0 + 1e-6 - (2.0 * (r2 - BLOB_RADIUS * BLOB_RADIUS)).tanh()
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub newton_linear_tol: f64,
    pub gmres_restart: usize,
    pub krylov_tol: f64,
    pub krylov_max_iter: usize,
    pub dealias: bool,
    pub convection: ConvectionForm,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SchemeConfig::default();
        SolverSection {
            newton_tol: d.newton_tol,
            newton_max_iter: d.newton_max_iter,
            newton_linear_tol: d.newton_linear_tol,
            gmres_restart: d.gmres_restart,
            krylov_tol: d.krylov_tol,
            krylov_max_iter: d.krylov_max_iter,
            dealias: d.dealias,
            convection: d.convection,
        }
    }
}

fn default_concentration() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// p = n = `concentration`, u = 0.
    Uniform {
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
    /// Two tanh blobs of opposite charge at rest.
    #[serde(rename = "blobs_5_2")]
    Blobs {},
    /// Manufactured solution at t = 0; the run adds its forcing.
    Mms {
        #[serde(default)]
        variant: MmsVariant,
    },
    FromSnapshot { path: PathBuf },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Uniform { concentration: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub diagnostics_csv: String,
    pub convergence_csv: String,
    pub plot_csv: String,
    pub snapshot_prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("output"),
            diagnostics_csv: "diagnostics.csv".into(),
            convergence_csv: "convergence.csv".into(),
            plot_csv: "plot_data.csv".into(),
            snapshot_prefix: "snapshot".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub dt_list: Vec<f64>,
    #[serde(default)]
    pub variant: MmsVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub physics: PhysParams,
    pub grid: GridSection,
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
    /// Directory of the file this was loaded from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfigFile {
    /// Parses and validates; nothing is written.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfigFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(cfg)
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            n_modes: self.grid.n_modes,
            dt: self.time.dt,
            t_final: self.time.t_final,
            newton_tol: self.solver.newton_tol,
            newton_max_iter: self.solver.newton_max_iter,
            newton_linear_tol: self.solver.newton_linear_tol,
            gmres_restart: self.solver.gmres_restart,
            krylov_tol: self.solver.krylov_tol,
            krylov_max_iter: self.solver.krylov_max_iter,
            dealias: self.solver.dealias,
            convection: self.solver.convection,
            snapshot_times: self.time.snapshot_times.clone(),
            output_dir: self.output_dir(),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.scheme_config().validate()?;
        if let InitialCondition::Uniform { concentration } = self.initial {
            if !(concentration > 0.0 && concentration.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "initial.concentration must be positive, got {concentration}"
                )));
            }
        }
        for name in [
            &self.output.diagnostics_csv,
            &self.output.convergence_csv,
            &self.output.plot_csv,
            &self.output.snapshot_prefix,
        ] {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(Error::InvalidConfig(format!(
                    "output file name {name:?} must be a plain, non-empty file name"
                )));
            }
        }
        if let Some(conv) = &self.convergence {
            check_dt_list(&conv.dt_list, self.time.t_final)?;
        }
        Ok(())
    }
}

fn check_dt_list(dt_list: &[f64], t_final: f64) -> Result<()> {
    if dt_list.is_empty() {
        return Err(Error::InvalidConfig("convergence.dt_list is empty".into()));
    }
    if dt_list.iter().any(|dt| !(*dt > 0.0 && dt.is_finite())) {
        return Err(Error::InvalidConfig("convergence.dt_list entries must be positive".into()));
    }
    if dt_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidConfig("convergence.dt_list must be strictly decreasing".into()));
    }
    for &dt in dt_list {
        let ratio = t_final / dt;
        if (ratio - ratio.round()).abs() > 1e-12 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "time.t_final {t_final} is not a multiple of dt {dt}"
            )));
        }
    }
    Ok(())
}

/// Builds the starting state for `cfg.initial`, plus the manufactured case
/// whose forcing must drive the run, if any.
pub fn initial_state(cfg: &RunConfigFile, integ: &Integrator) -> Result<(SimState, Option<MmsCase>)> {
    let zero = |_: f64, _: f64| (0.0, 0.0);
    match &cfg.initial {
        InitialCondition::Uniform { concentration } => {
            let c = *concentration;
            Ok((integ.initialize_from_fn(|_, _| c, |_, _| c, zero, None)?, None))
        }
        InitialCondition::Blobs {} => Ok((
            integ.initialize_from_fn(
                |x, y| blob(x, y, BLOB_CENTER_P),
                |x, y| blob(x, y, BLOB_CENTER_N),
                zero,
                None,
            )?,
            None,
        )),
        InitialCondition::Mms { variant } => {
            let case = MmsCase::new(cfg.physics, *variant);
            Ok((case.initial_state(integ, 0.0)?, Some(case)))
        }
        InitialCondition::FromSnapshot { path } => {
            let snap = read_snapshot_for_grid(&cfg.resolve(path), integ.grid())?;
            Ok((snap.state, None))
        }
    }
}

// ---------------------------------------------------------------------------
// files

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// 17 significant digits: enough to round-trip any double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const DIAGNOSTICS_HEADER: &str = "step,time,mass_p,mass_n,min_p,min_n,max_p,max_n,\
energy_total,energy_entropy_p,energy_entropy_n,energy_field,energy_kinetic,energy_pressure_aug,\
newton_iters,residual_step1,krylov_iters_step2,residual_step2";

pub fn diagnostics_row(d: &StepDiagnostics) -> String {
    let e = &d.energy;
    let floats = [
        d.time,
        d.mass_p,
        d.mass_n,
        d.min_p,
        d.min_n,
        d.max_p,
        d.max_n,
        e.total,
        e.entropy_p,
        e.entropy_n,
        e.field,
        e.kinetic,
        e.pressure_aug,
    ]
    .map(fmt_f64)
    .join(",");
    format!(
        "{},{floats},{},{},{},{}",
        d.step,
        d.newton_iters,
        fmt_f64(d.residual_step1),
        d.krylov_iters_step2,
        fmt_f64(d.residual_step2)
    )
}

pub fn diagnostics_csv(rows: &[StepDiagnostics]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for d in rows {
        out.push_str(&diagnostics_row(d));
        out.push('\n');
    }
    out
}

pub const CONVERGENCE_HEADER: &str =
    "dt,err_p,order_p,err_n,order_n,err_u,order_u,err_psi,order_psi";

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let opt = |o: Option<f64>| o.map(fmt_f64).unwrap_or_default();
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.dt),
            fmt_f64(r.err_p),
            opt(r.order_p),
            fmt_f64(r.err_n),
            opt(r.order_n),
            fmt_f64(r.err_u),
            opt(r.order_u),
            fmt_f64(r.err_psi),
            opt(r.order_psi)
        );
    }
    out
}

/// Human-readable table of a convergence study.
pub fn convergence_table(rows: &[ConvergenceRow]) -> String {
    let opt = |o: Option<f64>| o.map(|v| format!("{v:6.2}")).unwrap_or_else(|| "    --".into());
    let mut out = format!(
        "{:>10} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6}\n",
        "dt", "err_p", "order", "err_n", "order", "err_u", "order", "err_psi", "order"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>10.3e} {:>10.3e} {} {:>10.3e} {} {:>10.3e} {} {:>10.3e} {}",
            r.dt,
            r.err_p,
            opt(r.order_p),
            r.err_n,
            opt(r.order_n),
            r.err_u,
            opt(r.order_u),
            r.err_psi,
            opt(r.order_psi)
        );
    }
    out
}

pub const PLOT_HEADER: &str = "time,i,j,x,y,p_minus_n,u_x,u_y";

/// Grid samples of p − n and u for plotting; one block per snapshot.
pub fn plot_rows(state: &SimState, out: &mut String) {
    let g = state.grid();
    let n = g.n();
    for k in 0..g.len() {
        let (x, y) = g.point(k);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(state.time),
            k / n,
            k % n,
            fmt_f64(x),
            fmt_f64(y),
            fmt_f64(state.p.values()[k] - state.n.values()[k]),
            fmt_f64(state.u.x.values()[k]),
            fmt_f64(state.u.y.values()[k])
        );
    }
}

// ---------------------------------------------------------------------------
// snapshots

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"PNPNSSNP";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 64;
pub const SNAPSHOT_FIELDS: [&str; 6] = ["p", "n", "psi", "phi", "u_x", "u_y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub n_modes: usize,
    pub step_index: usize,
    pub time: f64,
    pub dt: Option<f64>,
    pub params: Option<PhysParams>,
    pub fields: Vec<String>,
    pub byte_order: String,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    /// μ and ν are recomputed from (p, n, ψ); `u_tilde` is set to `u`.
    pub state: SimState,
}

/// Encodes a state: 64-byte header, JSON metadata, then six fields as
/// little-endian f64 in row-major order.
pub fn encode_snapshot(state: &SimState, dt: Option<f64>, params: Option<&PhysParams>) -> Result<Vec<u8>> {
    let n = state.grid().n();
    let meta = SnapshotMeta {
        n_modes: n,
        step_index: state.step_index,
        time: state.time,
        dt,
        params: params.copied(),
        fields: SNAPSHOT_FIELDS.iter().map(|s| s.to_string()).collect(),
        byte_order: "little".into(),
    };
    let meta_bytes = serde_json::to_vec(&meta)?;
    let fields = [&state.p, &state.n, &state.psi, &state.phi, &state.u.x, &state.u.y];
    let payload_len = fields.len() * n * n * 8;

    let mut out = Vec::with_capacity(SNAPSHOT_HEADER_LEN + meta_bytes.len() + payload_len);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(state.step_index as u64).to_le_bytes());
    out.extend_from_slice(&state.time.to_bits().to_le_bytes());
    out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&(payload_len as u64).to_le_bytes());
    out.resize(SNAPSHOT_HEADER_LEN, 0);
    out.extend_from_slice(&meta_bytes);
    for f in fields {
        for v in f.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_snapshot(path: &Path, state: &SimState, dt: Option<f64>, params: Option<&PhysParams>) -> Result<()> {
    write_atomic(path, &encode_snapshot(state, dt, params)?)
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8 bytes"))
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < SNAPSHOT_HEADER_LEN {
        return Err(Error::Truncated {
            expected: SNAPSHOT_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[0..8] != SNAPSHOT_MAGIC {
        return Err(Error::CorruptHeader("bad magic".into()));
    }
    let version = le_u32(&bytes[8..12]);
    if version != SNAPSHOT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let n = le_u32(&bytes[12..16]) as usize;
    let step_index = le_u64(&bytes[16..24]) as usize;
    let time = f64::from_bits(le_u64(&bytes[24..32]));
    let meta_len = le_u64(&bytes[32..40]) as usize;
    let payload_len = le_u64(&bytes[40..48]) as usize;
    if bytes[48..64].iter().any(|&b| b != 0) {
        return Err(Error::CorruptHeader("reserved bytes are not zero".into()));
    }
    let grid = Grid::new(n).map_err(|_| Error::CorruptHeader(format!("invalid grid size {n}")))?;
    let expected_payload = SNAPSHOT_FIELDS.len() * n * n * 8;
    if payload_len != expected_payload {
        return Err(Error::CorruptHeader(format!(
            "payload length {payload_len} does not match N={n}"
        )));
    }
    let total = SNAPSHOT_HEADER_LEN
        .checked_add(meta_len)
        .and_then(|v| v.checked_add(payload_len))
        .ok_or_else(|| Error::CorruptHeader("section lengths overflow".into()))?;
    if bytes.len() < total {
        return Err(Error::Truncated {
            expected: total,
            found: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(Error::CorruptHeader(format!(
            "{} trailing bytes after payload",
            bytes.len() - total
        )));
    }
    let meta: SnapshotMeta = serde_json::from_slice(&bytes[SNAPSHOT_HEADER_LEN..SNAPSHOT_HEADER_LEN + meta_len])
        .map_err(|e| Error::CorruptHeader(format!("metadata: {e}")))?;
    if meta.n_modes != n || meta.step_index != step_index || meta.time.to_bits() != time.to_bits() {
        return Err(Error::CorruptHeader("metadata disagrees with header".into()));
    }
    if meta.fields != SNAPSHOT_FIELDS {
        return Err(Error::CorruptHeader(format!("unexpected field list {:?}", meta.fields)));
    }
    let payload = &bytes[SNAPSHOT_HEADER_LEN + meta_len..];
    let mut fields = payload.chunks_exact(n * n * 8).map(|chunk| {
        let values = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        ScalarField::from_values(grid, values)
    });
    let mut next = || fields.next().expect("six fields");
    let p = next()?;
    let nn = next()?;
    let psi = next()?;
    let phi = next()?;
    let ux = next()?;
    let u = VectorField::new(ux, next()?)?;
    let (mu, nu) = chemical_potentials(&p, &nn, &psi)?;
    Ok(Snapshot {
        meta,
        state: SimState {
            step_index,
            time,
            p,
            n: nn,
            psi,
            mu,
            nu,
            u_tilde: u.clone(),
            u,
            phi,
        },
    })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}

/// Reads a snapshot and rejects it unless it was written on `grid`.
pub fn read_snapshot_for_grid(path: &Path, grid: Grid) -> Result<Snapshot> {
    let snap = read_snapshot(path)?;
    if snap.meta.n_modes != grid.n() {
        return Err(Error::RejectedGrid {
            expected: grid.n(),
            found: snap.meta.n_modes,
        });
    }
    Ok(snap)
}

/// One-paragraph description of a snapshot, as printed by `inspect`.
pub fn describe_snapshot(snap: &Snapshot) -> Result<String> {
    let s = &snap.state;
    let mut out = String::new();
    let _ = writeln!(out, "grid        N = {}", snap.meta.n_modes);
    let _ = writeln!(out, "step        {}", s.step_index);
    let _ = writeln!(out, "time        {}", fmt_f64(s.time));
    let _ = writeln!(out, "mass p      {}", fmt_f64(mass(&s.p)));
    let _ = writeln!(out, "mass n      {}", fmt_f64(mass(&s.n)));
    let _ = writeln!(out, "p range     [{}, {}]", fmt_f64(s.p.min()), fmt_f64(s.p.max()));
    let _ = writeln!(out, "n range     [{}, {}]", fmt_f64(s.n.min()), fmt_f64(s.n.max()));
    let _ = writeln!(out, "max |u|     {}", fmt_f64(s.u.max_abs()));
    if let (Some(dt), Some(params)) = (snap.meta.dt, snap.meta.params) {
        let spectral = crate::spectral::Spectral::new(s.grid());
        let e = total_energy(&spectral, s, &params, dt)?;
        let _ = writeln!(out, "energy      {}", fmt_f64(e.total));
        let _ = writeln!(out, "params      {}", serde_json::to_string(&params)?);
        let _ = writeln!(out, "dt          {}", fmt_f64(dt));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// commands

/// Streams diagnostics and writes snapshots while a run progresses.
struct FileObserver<'a> {
    cfg: &'a RunConfigFile,
    dir: PathBuf,
    plot: String,
}

impl RunObserver for FileObserver<'_> {
    fn on_snapshot(&mut self, index: usize, state: &SimState) -> Result<Option<PathBuf>> {
        let name = format!("{}_{index:03}.bin", self.cfg.output.snapshot_prefix);
        let path = self.dir.join(name);
        write_snapshot(&path, state, Some(self.cfg.time.dt), Some(&self.cfg.physics))?;
        plot_rows(state, &mut self.plot);
        Ok(Some(path))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub diagnostics_path: PathBuf,
    pub plot_path: Option<PathBuf>,
}

/// Executes a configured run and writes its outputs. A solver failure still
/// writes the diagnostics gathered so far; check `record.termination`.
pub fn run_config(cfg: &RunConfigFile, exec: Execution) -> Result<RunOutcome> {
    let integ = Integrator::with_execution(cfg.physics, cfg.scheme_config(), exec)?;
    let (state, case) = initial_state(cfg, &integ)?;
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut observer = FileObserver {
        cfg,
        dir: dir.clone(),
        plot: format!("{PLOT_HEADER}\n"),
    };
    let record = integ.run(
        state,
        case.as_ref().map(|c| c as &dyn crate::integrator::Forcing),
        &mut observer,
    )?;
    let diagnostics_path = dir.join(&cfg.output.diagnostics_csv);
    write_atomic(&diagnostics_path, diagnostics_csv(&record.diagnostics).as_bytes())?;
    let plot_path = if record.snapshots.is_empty() {
        None
    } else {
        let p = dir.join(&cfg.output.plot_csv);
        write_atomic(&p, observer.plot.as_bytes())?;
        Some(p)
    };
    Ok(RunOutcome {
        record,
        diagnostics_path,
        plot_path,
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceOutcome {
    pub rows: Vec<ConvergenceRow>,
    pub csv_path: PathBuf,
}

/// Runs the manufactured-solution study described by `cfg.convergence`.
pub fn convergence_config(cfg: &RunConfigFile, exec: Execution) -> Result<ConvergenceOutcome> {
    let conv = cfg
        .convergence
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("missing `convergence` section with dt_list".into()))?;
    let case = MmsCase::new(cfg.physics, conv.variant);
    let rows = convergence_study(&case, &cfg.scheme_config(), &conv.dt_list, exec)?;
    let dir = cfg.output_dir();
    let csv_path = dir.join(&cfg.output.convergence_csv);
    write_atomic(&csv_path, convergence_csv(&rows).as_bytes())?;
    Ok(ConvergenceOutcome { rows, csv_path })
}

/// Whether a run record ended in a solver failure, with its message.
pub fn failure_message(record: &RunRecord) -> Option<String> {
    match &record.termination {
        Termination::Completed => None,
        Termination::SolverFailure { step, message } => Some(format!("solver failure at step {step}: {message}")),
    }
}
