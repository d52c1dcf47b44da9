//! Explicit time stepping for `u_t = lap(u) - div(u grad v) + f(u)` with
//! adaptive CFL control, positivity repair, and blow-up detection.

use crate::config::SimConfig;
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::elliptic::SignalSolver;
use crate::error::{KsError, Result};
use crate::grid::{self, ScalarField};
use crate::sources::{self, SourceSpec};
use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

/// Denominator guard in the source CFL rate `|f(u)| / (u + EPS0)`.
pub const EPS0: f64 = 1e-30;

/// Safety factors and bounds for the adaptive time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflParams {
    /// Diffusion safety factor on the explicit stability limit `h^2/4`.
    pub c_diff: f64,
    /// Advection safety factor on the donor-cell limit `h / max|grad v|`.
    pub c_adv: f64,
    /// Cap on the relative source change per step.
    pub c_src: f64,
    /// Below this the run is declared numerically collapsed.
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for CflParams {
    fn default() -> Self {
        CflParams {
            c_diff: 0.2,
            c_adv: 0.4,
            c_src: 0.1,
            dt_min: 1e-12,
            dt_max: 1e-2,
        }
    }
}

impl CflParams {
    pub fn validate(&self) -> Result<()> {
        let all_pos = self.c_diff > 0.0
            && self.c_adv > 0.0
            && self.c_src > 0.0
            && self.dt_min > 0.0
            && self.dt_max > 0.0;
        if !all_pos {
            return Err(KsError::InvalidArgument(
                "all CFL parameters must be positive".into(),
            ));
        }
        if self.dt_min >= self.dt_max {
            return Err(KsError::InvalidArgument(format!(
                "dt_min {} must be below dt_max {}",
                self.dt_min, self.dt_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    None,
    LinfThreshold,
    DtCollapse,
}

impl VerdictKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictKind::None => "none",
            VerdictKind::LinfThreshold => "linf_threshold",
            VerdictKind::DtCollapse => "dt_collapse",
        }
    }
}

/// Outcome of a run: `kind = None` exactly when the time horizon was reached.
#[derive(Debug, Clone, Copy)]
pub struct BlowUpVerdict {
    pub kind: VerdictKind,
    pub t_detect: f64,
    pub linf_at_detect: f64,
}

/// Simulation state. `v` is the last elliptic solve.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub step_index: u64,
}

impl SimState {
    /// Initial state at `t = 0`; solves the signal equation once for `u0`.
    pub fn new(u0: ScalarField, solver: &mut SignalSolver) -> Result<Self> {
        Self::at_time(u0, 0.0, solver)
    }

    /// Initial state at a given time (snapshot restart).
    pub fn at_time(u0: ScalarField, t: f64, solver: &mut SignalSolver) -> Result<Self> {
        let v = solver.solve(&u0)?;
        Ok(SimState {
            t,
            u: u0,
            v,
            step_index: 0,
        })
    }
}

/// Result of the CFL computation: either an admissible step size or a
/// collapse signal carrying the inadmissible value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtDecision {
    Step(f64),
    Collapse(f64),
}

/// Evaluate `f(u)` over a whole field.
pub fn source_field(source: &SourceSpec, u: &ScalarField) -> Result<Vec<f64>> {
    if source.is_none() {
        return Ok(vec![0.0; u.spec.len()]);
    }
    u.values()
        .iter()
        .map(|&x| sources::source_eval(source, x))
        .collect()
}

fn max_source_rate(u: &[f64], f: &[f64]) -> f64 {
    u.iter()
        .zip(f)
        .map(|(&x, &fx)| (fx / (x + EPS0)).abs())
        .fold(0.0f64, f64::max)
}

fn dt_from_limits(state: &SimState, cfl: &CflParams, src_rate: f64) -> f64 {
    let h = state.u.spec.hx().min(state.u.spec.hy());
    let mut dt = (cfl.c_diff * h * h / 4.0).min(cfl.dt_max);
    let grad = grid::max_face_gradient(&state.v);
    if grad > 0.0 {
        dt = dt.min(cfl.c_adv * h / grad);
    }
    if src_rate > 0.0 {
        dt = dt.min(cfl.c_src / src_rate);
    }
    dt
}

/// Adaptive step size
/// `min(c_diff h^2/4, c_adv h / max|grad v|, c_src / max|f(u)/(u+eps)|, dt_max)`.
/// Returns a collapse signal instead of a value below `dt_min`.
pub fn compute_dt(state: &SimState, cfl: &CflParams, source: &SourceSpec) -> Result<DtDecision> {
    let f = source_field(source, &state.u)?;
    let rate = max_source_rate(state.u.values(), &f);
    let dt = dt_from_limits(state, cfl, rate);
    Ok(if dt < cfl.dt_min {
        DtDecision::Collapse(dt)
    } else {
        DtDecision::Step(dt)
    })
}

/// One explicit Euler update. Solves the signal equation for the current
/// `u`, forms `lap(u) - div(u grad v) + f(u)`, and advances by `dt`.
/// Round-off negatives above `-1e-13 ||u||_inf` are clamped to zero;
/// anything below that is a scheme failure (CFL violation upstream).
pub fn step(
    state: &SimState,
    dt: f64,
    source: &SourceSpec,
    solver: &mut SignalSolver,
) -> Result<SimState> {
    let f = source_field(source, &state.u)?;
    step_with_source_field(state, dt, &f, solver)
}

fn step_with_source_field(
    state: &SimState,
    dt: f64,
    f: &[f64],
    solver: &mut SignalSolver,
) -> Result<SimState> {
    let v = solver.solve(&state.u)?;
    let lap = grid::laplacian(&state.u);
    let div = grid::chemotactic_divergence(&state.u, &v)?;
    let linf = grid::norm(&state.u, f64::INFINITY)?;
    let clamp_floor = -1e-13 * linf;

    let mut values = Vec::with_capacity(state.u.spec.len());
    for (((&u0, &l), &d), &fx) in state
        .u
        .values()
        .iter()
        .zip(lap.values())
        .zip(div.values())
        .zip(f)
    {
        let mut un = u0 + dt * (l - d + fx);
        if un < 0.0 {
            if un > clamp_floor {
                un = 0.0;
            } else {
                return Err(KsError::SchemeFailure {
                    t: state.t,
                    reason: format!(
                        "negative value {un:e} below round-off floor {clamp_floor:e}"
                    ),
                });
            }
        }
        if !un.is_finite() {
            return Err(KsError::SchemeFailure {
                t: state.t,
                reason: format!("non-finite value {un}"),
            });
        }
        values.push(un);
    }
    Ok(SimState {
        t: state.t + dt,
        u: ScalarField::from_values(state.u.spec, values)?,
        v,
        step_index: state.step_index + 1,
    })
}

/// Full trajectory of a run.
#[derive(Debug)]
pub struct RunResult {
    pub records: Vec<DiagnosticsRecord>,
    pub verdict: BlowUpVerdict,
    pub final_state: SimState,
    pub snapshot_paths: Vec<PathBuf>,
}

/// Run a configured experiment until the time horizon or a blow-up verdict.
///
/// Emits a diagnostics record every `record_every` steps (plus the initial
/// and final states) and, when `snapshot_every > 0`, writes KSFIELD
/// snapshots under `<out_dir>/snapshots/`. Deterministic for a fixed config.
pub fn run(config: &SimConfig) -> Result<RunResult> {
    config.validate()?;
    let mut solver = SignalSolver::new(config.grid, config.ell)?;
    let (u0, t0) = config.initial_field()?;
    let linf0 = grid::norm(&u0, f64::INFINITY)?;
    let threshold = config.linf_blowup_factor * linf0;
    let mut state = SimState::at_time(u0, t0, &mut solver)?;

    let snapshot_dir = if config.snapshot_every > 0 {
        let dir = config.out_dir.join("snapshots");
        fs::create_dir_all(&dir)?;
        Some(dir)
    } else {
        None
    };
    let mut snapshot_paths = Vec::new();
    let write_snap = |state: &SimState, paths: &mut Vec<PathBuf>| -> Result<()> {
        if let Some(dir) = &snapshot_dir {
            let path = dir.join(format!("snapshot_{:08}.ks", state.step_index));
            let mut w = BufWriter::new(fs::File::create(&path)?);
            grid::write_snapshot(&mut w, &state.u, state.t)?;
            paths.push(path);
        }
        Ok(())
    };

    let mut records = vec![diagnostics::record(&state, 0.0)];
    write_snap(&state, &mut snapshot_paths)?;

    let mut verdict = None;
    let mut last_recorded = 0u64;
    while state.t < config.t_end {
        let f = source_field(&config.source, &state.u)?;
        let rate = max_source_rate(state.u.values(), &f);
        let dt_raw = dt_from_limits(&state, &config.cfl, rate);
        if dt_raw < config.cfl.dt_min {
            verdict = Some(BlowUpVerdict {
                kind: VerdictKind::DtCollapse,
                t_detect: state.t,
                linf_at_detect: grid::norm(&state.u, f64::INFINITY)?,
            });
            break;
        }
        // Land exactly on the horizon; a short final sliver is not a collapse.
        let dt = dt_raw.min(config.t_end - state.t);
        state = step_with_source_field(&state, dt, &f, &mut solver)?;

        let record_due = state.step_index % config.record_every as u64 == 0;
        let snapshot_due =
            config.snapshot_every > 0 && state.step_index % config.snapshot_every as u64 == 0;
        let linf = grid::norm(&state.u, f64::INFINITY)?;
        if linf > threshold {
            verdict = Some(BlowUpVerdict {
                kind: VerdictKind::LinfThreshold,
                t_detect: state.t,
                linf_at_detect: linf,
            });
            records.push(diagnostics::record(&state, dt));
            last_recorded = state.step_index;
            write_snap(&state, &mut snapshot_paths)?;
            break;
        }
        if record_due {
            records.push(diagnostics::record(&state, dt));
            last_recorded = state.step_index;
        }
        if snapshot_due {
            write_snap(&state, &mut snapshot_paths)?;
        }
        if state.t >= config.t_end {
            if !record_due {
                records.push(diagnostics::record(&state, dt));
                last_recorded = state.step_index;
            }
            if config.snapshot_every > 0 && !snapshot_due {
                write_snap(&state, &mut snapshot_paths)?;
            }
        }
    }
    let _ = last_recorded;

    let verdict = verdict.unwrap_or(BlowUpVerdict {
        kind: VerdictKind::None,
        t_detect: state.t,
        linf_at_detect: grid::norm(&state.u, f64::INFINITY)?,
    });
    Ok(RunResult {
        records,
        verdict,
        final_state: state,
        snapshot_paths,
    })
}
