//! Time loop driver shared by the CLI and the acceptance suite.

use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::elastodyn::{LbmSolver, SetupError, StepError};
use crate::lattice::NodeClass;
use crate::oracle::OracleSolver;
use crate::output::{self, ProbeSample, SnapshotFields};
use crate::scenario::{Resolved, Scenario};
use crate::sweep::Execution;
use crate::Vec2;

/// Radius, in lattice spacings, of the neighbourhood over which the local
/// consistency error at a probe is taken.
pub const PROBE_ERROR_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Lbm,
    Oracle,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Lbm => "lbm",
            SolverKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    #[default]
    Lbm,
    Oracle,
    Both,
}

impl SolverChoice {
    pub fn kinds(self) -> &'static [SolverKind] {
        match self {
            SolverChoice::Lbm => &[SolverKind::Lbm],
            SolverChoice::Oracle => &[SolverKind::Oracle],
            SolverChoice::Both => &[SolverKind::Lbm, SolverKind::Oracle],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub solver: SolverChoice,
    /// Overrides the scenario's synchronization period.
    pub sync: Option<u64>,
    /// Output directory; nothing is written when absent.
    pub out: Option<PathBuf>,
    /// Snapshot times added to the scenario's own.
    pub snapshot_at: Vec<f64>,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted { step: u64, time: f64, message: String },
}

/// Everything recorded while one solver ran.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub kind: SolverKind,
    pub dt: f64,
    pub steps: u64,
    pub t_end: f64,
    pub wall: Duration,
    pub status: RunStatus,
    /// One series per probe, in scenario order.
    pub probes: Vec<Vec<ProbeSample>>,
    /// LBM only: local consistency error at each probe, sampled with `probes`
    /// before any synchronization in that step.
    pub probe_error: Vec<Vec<f64>>,
    /// LBM only: `(t, max e)` every `error_every` steps, before synchronization.
    pub error_monitor: Vec<(f64, f64)>,
    pub snapshots: Vec<f64>,
}

impl SolverRun {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn probe_series(&self, resolved: &Resolved, name: &str) -> Option<&[ProbeSample]> {
        let i = resolved.probes.iter().position(|p| p.name == name)?;
        Some(&self.probes[i])
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub runs: Vec<SolverRun>,
}

impl RunReport {
    pub fn get(&self, kind: SolverKind) -> Option<&SolverRun> {
        self.runs.iter().find(|r| r.kind == kind)
    }

    pub fn aborted(&self) -> bool {
        self.runs.iter().any(|r| !r.completed())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error("writing output: {0}")]
    Io(#[from] io::Error),
}

/// Material nodes within [`PROBE_ERROR_RADIUS`] spacings of each probe.
fn probe_neighbourhoods(resolved: &Resolved) -> Vec<Vec<usize>> {
    let l = &resolved.problem.lattice;
    let r = PROBE_ERROR_RADIUS * l.spacing() * (1.0 + 1e-9);
    resolved
        .probes
        .iter()
        .map(|p| {
            l.material_nodes()
                .into_iter()
                .filter(|&k| {
                    let x = l.position(k);
                    (x[0] - p.position[0]).hypot(x[1] - p.position[1]) <= r
                })
                .collect()
        })
        .collect()
}

struct Recorder<'r> {
    resolved: &'r Resolved,
    out: Option<&'r Path>,
    snapshot_at: Vec<f64>,
    next_snapshot: usize,
    run: SolverRun,
}

impl<'r> Recorder<'r> {
    fn new(resolved: &'r Resolved, opts: &'r RunOptions, kind: SolverKind, dt: f64) -> Self {
        let mut snapshot_at: Vec<f64> = resolved
            .scenario
            .output
            .snapshot_at
            .iter()
            .chain(&opts.snapshot_at)
            .copied()
            .filter(|t| *t <= resolved.scenario.t_final + 0.5 * dt)
            .collect();
        snapshot_at.sort_by(f64::total_cmp);
        snapshot_at.dedup();
        let n = resolved.probes.len();
        Self {
            resolved,
            out: opts.out.as_deref(),
            snapshot_at,
            next_snapshot: 0,
            run: SolverRun {
                kind,
                dt,
                steps: 0,
                t_end: 0.0,
                wall: Duration::ZERO,
                status: RunStatus::Completed,
                probes: vec![Vec::new(); n],
                probe_error: if kind == SolverKind::Lbm { vec![Vec::new(); n] } else { Vec::new() },
                error_monitor: Vec::new(),
                snapshots: Vec::new(),
            },
        }
    }

    fn sample(&mut self, t: f64, u: &[Vec2]) {
        for (series, p) in self.run.probes.iter_mut().zip(&self.resolved.probes) {
            series.push(ProbeSample { t, u: u[p.node] });
        }
    }

    fn snapshot_due(&self, t: f64) -> bool {
        self.snapshot_at
            .get(self.next_snapshot)
            .is_some_and(|&ts| t >= ts - 0.5 * self.run.dt)
    }

    fn snapshot(&mut self, fields: SnapshotFields) -> io::Result<()> {
        while self.snapshot_due(fields.t) {
            self.next_snapshot += 1;
        }
        self.run.snapshots.push(fields.t);
        if let Some(dir) = self.out {
            let stem = dir.join(format!("{}_t{:.4}", self.run.kind.name(), fields.t));
            output::write_snapshot(&fields, &self.resolved.problem.lattice, &stem)?;
        }
        Ok(())
    }

    fn abort(&mut self, e: &StepError) {
        let (step, time) = match *e {
            StepError::NonFinite { step, time, .. } => (step, time),
        };
        self.run.status = RunStatus::Aborted {
            step,
            time,
            message: e.to_string(),
        };
    }
}

fn run_lbm(resolved: &Resolved, opts: &RunOptions, sync: u64) -> Result<SolverRun, RunError> {
    let sc = &resolved.scenario;
    let solver = LbmSolver::new(&resolved.problem, sc.a0_phi, sync)?.with_execution(opts.exec);
    let mut rec = Recorder::new(resolved, opts, SolverKind::Lbm, solver.dt());
    let hoods = probe_neighbourhoods(resolved);
    let mut s = solver.initialize_at_rest()?;
    let start = Instant::now();
    let n_steps = (sc.t_final / solver.dt() - 1e-9).ceil() as u64;
    let record_errors = |rec: &mut Recorder, s: &crate::elastodyn::SolverState| {
        for (series, hood) in rec.run.probe_error.iter_mut().zip(&hoods) {
            series.push(hood.iter().map(|&k| solver.consistency_error_at(s, k)).fold(0.0, f64::max));
        }
    };
    rec.sample(0.0, &s.kin.u);
    record_errors(&mut rec, &s);
    loop {
        if rec.snapshot_due(s.kin.t) {
            let (phi, psi) = (s.phi_values.clone(), s.psi_values.clone());
            let e = solver.consistency_error(&s);
            rec.snapshot(SnapshotFields { t: s.kin.t, u: &s.kin.u, phi: &phi, psi: &psi, error: Some(&e) })?;
        }
        if s.step >= n_steps {
            break;
        }
        if let Err(e) = solver.advance(&mut s) {
            log::warn!("lbm aborted: {e}");
            rec.abort(&e);
            break;
        }
        // Errors are sampled before synchronization would clear them.
        if s.step % sc.output.probe_every == 0 {
            rec.sample(s.kin.t, &s.kin.u);
            record_errors(&mut rec, &s);
        }
        if sc.output.error_every > 0 && s.step % sc.output.error_every == 0 {
            let e = solver.consistency_error(&s).into_iter().fold(0.0, f64::max);
            rec.run.error_monitor.push((s.kin.t, e));
        }
        solver.synchronize_if_due(&mut s);
    }
    rec.run.wall = start.elapsed();
    rec.run.steps = s.step;
    rec.run.t_end = s.kin.t;
    Ok(rec.run)
}

fn run_oracle(resolved: &Resolved, opts: &RunOptions) -> Result<SolverRun, RunError> {
    let sc = &resolved.scenario;
    let p = &resolved.problem;
    let solver = OracleSolver::new(p)?.with_execution(opts.exec);
    let mut rec = Recorder::new(resolved, opts, SolverKind::Oracle, solver.dt());
    let mut s = solver.initialize_at_rest()?;
    let start = Instant::now();
    let n_steps = (sc.t_final / solver.dt() - 1e-9).ceil() as u64;
    rec.sample(0.0, &s.kin.u);
    loop {
        if rec.snapshot_due(s.kin.t) {
            let (phi, psi) = p.dilatation_rotation(&s.kin.u);
            rec.snapshot(SnapshotFields { t: s.kin.t, u: &s.kin.u, phi: &phi, psi: &psi, error: None })?;
        }
        if s.step >= n_steps {
            break;
        }
        if let Err(e) = solver.step(&mut s) {
            log::warn!("oracle aborted: {e}");
            rec.abort(&e);
            break;
        }
        if s.step % sc.output.probe_every == 0 {
            rec.sample(s.kin.t, &s.kin.u);
        }
    }
    rec.run.wall = start.elapsed();
    rec.run.steps = s.step;
    rec.run.t_end = s.kin.t;
    Ok(rec.run)
}

/// Runs the requested solvers to `t_final` and writes outputs when
/// `opts.out` is set. A numerical abort is reported in the run status, not
/// as an error.
pub fn run(resolved: &Resolved, opts: &RunOptions) -> Result<RunReport, RunError> {
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
    }
    let sync = opts.sync.unwrap_or(resolved.scenario.sync);
    let mut runs = Vec::new();
    for &kind in opts.solver.kinds() {
        log::info!("running {} on {}", kind.name(), resolved.problem.lattice.summary());
        let r = match kind {
            SolverKind::Lbm => run_lbm(resolved, opts, sync)?,
            SolverKind::Oracle => run_oracle(resolved, opts)?,
        };
        log::info!("{} finished: {} steps, {:?}", kind.name(), r.steps, r.status);
        if let Some(dir) = &opts.out {
            write_run_files(resolved, &r, dir)?;
        }
        runs.push(r);
    }
    let report = RunReport { runs };
    if let Some(dir) = &opts.out {
        let m = Manifest::new(resolved, sync, &report);
        std::fs::write(dir.join("manifest.toml"), m.to_toml())?;
    }
    Ok(report)
}

fn write_run_files(resolved: &Resolved, r: &SolverRun, dir: &Path) -> io::Result<()> {
    for (p, series) in resolved.probes.iter().zip(&r.probes) {
        output::write_probe_series(series, &dir.join(format!("{}_{}.csv", r.kind.name(), p.name)))?;
    }
    if !r.error_monitor.is_empty() {
        let mut s = String::from("t,e_max\n");
        for (t, e) in &r.error_monitor {
            s.push_str(&format!("{t:e},{e:e}\n"));
        }
        std::fs::write(dir.join(format!("{}_consistency.csv", r.kind.name())), s)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ProbeEntry {
    name: String,
    requested: Vec2,
    node: [usize; 2],
    position: Vec2,
}

#[derive(Debug, Serialize)]
struct Derived {
    spacing: f64,
    nx: usize,
    ny: usize,
    interior_nodes: usize,
    second_row_nodes: usize,
    boundary_nodes: usize,
    outside_nodes: usize,
    c_d: f64,
    c_s: f64,
    lambda: f64,
    rho: f64,
    a0_phi: f64,
    a_phi: f64,
    a0_psi: f64,
    a_psi: f64,
    dt_lbm: f64,
    courant_lbm: f64,
    sync: u64,
}

#[derive(Debug, Serialize)]
struct RunEntry {
    solver: SolverKind,
    dt: f64,
    steps: u64,
    t_end: f64,
    wall_seconds: f64,
    status: RunStatus,
    snapshots: Vec<f64>,
}

/// Resolved inputs, derived parameters and run outcomes.
#[derive(Debug, Serialize)]
pub struct Manifest {
    scenario: Scenario,
    derived: Derived,
    probes: Vec<ProbeEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    runs: Vec<RunEntry>,
}

impl Manifest {
    pub fn new(resolved: &Resolved, sync: u64, report: &RunReport) -> Self {
        let l = &resolved.problem.lattice;
        let m = &resolved.problem.material;
        let (pp, ps) = (&resolved.phi_params, &resolved.psi_params);
        let mut scenario = resolved.scenario.clone();
        scenario.sync = sync;
        Self {
            scenario,
            derived: Derived {
                spacing: l.spacing(),
                nx: l.nx(),
                ny: l.ny(),
                interior_nodes: l.count(NodeClass::Interior),
                second_row_nodes: l.count(NodeClass::SecondRow),
                boundary_nodes: l.count(NodeClass::Boundary),
                outside_nodes: l.count(NodeClass::Outside),
                c_d: m.c_d(),
                c_s: m.c_s(),
                lambda: m.lambda,
                rho: m.rho,
                a0_phi: pp.a0,
                a_phi: pp.a,
                a0_psi: ps.a0,
                a_psi: ps.a,
                dt_lbm: pp.dt,
                courant_lbm: m.c_d() * pp.dt / l.spacing(),
                sync,
            },
            probes: resolved
                .probes
                .iter()
                .map(|p| {
                    let (i, j) = l.coords(p.node);
                    ProbeEntry { name: p.name.clone(), requested: p.requested, node: [i, j], position: p.position }
                })
                .collect(),
            runs: report
                .runs
                .iter()
                .map(|r| RunEntry {
                    solver: r.kind,
                    dt: r.dt,
                    steps: r.steps,
                    t_end: r.t_end,
                    wall_seconds: r.wall.as_secs_f64(),
                    status: r.status.clone(),
                    snapshots: r.snapshots.clone(),
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest always serializes")
    }
}

/// Human-readable summary of a resolved scenario.
pub fn describe(resolved: &Resolved) -> String {
    let m = Manifest::new(resolved, resolved.scenario.sync, &RunReport { runs: Vec::new() });
    m.to_toml()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    fn small(name: &str) -> Resolved {
        let mut s = preset(name).unwrap();
        s.nodes = 21;
        s.t_final = 0.05;
        s.output.snapshot_at = vec![0.0, 0.05];
        s.build().unwrap()
    }

    #[test]
    fn both_solvers_write_outputs() {
        let r = small("tension");
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { solver: SolverChoice::Both, out: Some(dir.path().to_path_buf()), ..Default::default() };
        let report = run(&r, &opts).unwrap();
        assert!(!report.aborted());
        for kind in ["lbm", "oracle"] {
            let series = output::read_probe_series(&dir.path().join(format!("{kind}_P.csv"))).unwrap();
            assert_eq!(series[0].t, 0.0);
            assert!(series.last().unwrap().t >= 0.05 - 1e-12);
            assert!(dir.path().join(format!("{kind}_t0.0000.vtk")).exists());
        }
        let manifest: toml::Table = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap().parse().unwrap();
        let derived = manifest["derived"].as_table().unwrap();
        for key in ["a_phi", "a_psi", "dt_lbm", "nx", "interior_nodes"] {
            assert!(derived.contains_key(key), "{key}");
        }
        assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn lbm_records_probe_errors_every_sample() {
        let r = small("hole");
        let report = run(&r, &RunOptions::default()).unwrap();
        let lbm = report.get(SolverKind::Lbm).unwrap();
        assert_eq!(lbm.probe_error.len(), 2);
        assert_eq!(lbm.probe_error[1].len(), lbm.probes[1].len());
        assert_eq!(lbm.snapshots.len(), 2);
    }
}
