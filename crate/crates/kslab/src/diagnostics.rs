//! Per-step monitored functionals and boundedness assessment over a run.
//!
//! The headline quantity is `y(t) = integral of u ln(ln(u+e))`, whose
//! boundedness is what the damped system is expected to deliver; `dissip`
//! is the matching dissipation integrand `u^2 ln(ln(u+e)) / ln(u+e)`.

use crate::error::{KsError, Result};
use crate::grid;
use crate::sources::{g_lnln, ln_shift};
use crate::stepper::SimState;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub linf: f64,
    pub l2: f64,
    pub y_lnln: f64,
    pub dissip: f64,
    pub g_integral: f64,
}

pub const CSV_HEADER: &str = "step,t,dt,mass,linf,l2,y_lnln,dissip,g_integral";

/// Compute a record with the default weight `G = g_lnln` (so `g_integral`
/// coincides with `y_lnln` to round-off).
pub fn record(state: &SimState, dt: f64) -> DiagnosticsRecord {
    record_with_g(state, dt, g_lnln)
}

/// Compute a record with a caller-chosen superlinear weight `g` (increasing,
/// `g(0) >= 0`) for the `g_integral` column.
pub fn record_with_g(state: &SimState, dt: f64, g: impl Fn(f64) -> f64) -> DiagnosticsRecord {
    let u = &state.u;
    let area = u.spec.cell_area();
    let mass = grid::integrate(u);
    let linf = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l2 = (grid::kahan_sum(u.values().iter().map(|v| v * v)) * area).sqrt();
    let y_lnln = grid::kahan_sum(u.values().iter().map(|&v| v * ln_shift(v).ln())) * area;
    let dissip = grid::kahan_sum(u.values().iter().map(|&v| {
        let l = ln_shift(v);
        v * v * l.ln() / l
    })) * area;
    let g_integral = grid::kahan_sum(u.values().iter().map(|&v| g(v))) * area;
    DiagnosticsRecord {
        step: state.step_index,
        t: state.t,
        dt,
        mass,
        linf,
        l2,
        y_lnln,
        dissip,
        g_integral,
    }
}

/// Serialize records to the CSV schema, 17 significant digits per value.
pub fn write_csv(w: &mut impl Write, records: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step, r.t, r.dt, r.mass, r.linf, r.l2, r.y_lnln, r.dissip, r.g_integral
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKey {
    Mass,
    Linf,
    L2,
    YLnln,
    Dissip,
    GIntegral,
}

impl DiagnosticKey {
    pub const ALL: [DiagnosticKey; 6] = [
        DiagnosticKey::Mass,
        DiagnosticKey::Linf,
        DiagnosticKey::L2,
        DiagnosticKey::YLnln,
        DiagnosticKey::Dissip,
        DiagnosticKey::GIntegral,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DiagnosticKey::Mass => "mass",
            DiagnosticKey::Linf => "linf",
            DiagnosticKey::L2 => "l2",
            DiagnosticKey::YLnln => "y_lnln",
            DiagnosticKey::Dissip => "dissip",
            DiagnosticKey::GIntegral => "g_integral",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| KsError::InvalidArgument(format!("unknown diagnostic key '{s}'")))
    }

    pub fn get(&self, r: &DiagnosticsRecord) -> f64 {
        match self {
            DiagnosticKey::Mass => r.mass,
            DiagnosticKey::Linf => r.linf,
            DiagnosticKey::L2 => r.l2,
            DiagnosticKey::YLnln => r.y_lnln,
            DiagnosticKey::Dissip => r.dissip,
            DiagnosticKey::GIntegral => r.g_integral,
        }
    }
}

/// Running sup of each diagnostic column (for the summary cross-check).
pub fn column_sups(records: &[DiagnosticsRecord]) -> Vec<(DiagnosticKey, f64)> {
    DiagnosticKey::ALL
        .iter()
        .map(|&k| {
            (
                k,
                records.iter().map(|r| k.get(r)).fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect()
}

/// Verdict of [`assess_boundedness`].
#[derive(Debug, Clone, Copy)]
pub struct BoundednessReport {
    pub sup: f64,
    pub t_sup: f64,
    /// Least-squares slope of the trailing window, per unit time.
    pub tail_slope: f64,
    /// True when the projected rise over the tail window is at most 1% of
    /// the sup (or the slope is nonpositive).
    pub bounded: bool,
}

/// Assess whether a diagnostic stayed bounded: the running sup plus the
/// least-squares slope of the trailing `tail_fraction` of the records.
pub fn assess_boundedness(
    history: &[DiagnosticsRecord],
    key: DiagnosticKey,
    tail_fraction: f64,
) -> Result<BoundednessReport> {
    if history.len() < 10 {
        return Err(KsError::InvalidArgument(format!(
            "need at least 10 records, got {}",
            history.len()
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(KsError::InvalidArgument(format!(
            "tail_fraction must be in (0,1), got {tail_fraction}"
        )));
    }
    let (mut sup, mut t_sup) = (f64::NEG_INFINITY, 0.0);
    for r in history {
        let v = key.get(r);
        if v > sup {
            sup = v;
            t_sup = r.t;
        }
    }
    let tail_len = ((history.len() as f64 * tail_fraction).ceil() as usize).max(2);
    let tail = &history[history.len() - tail_len..];
    let n = tail.len() as f64;
    let mean_t = tail.iter().map(|r| r.t).sum::<f64>() / n;
    let mean_v = tail.iter().map(|r| key.get(r)).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for r in tail {
        let dt = r.t - mean_t;
        num += dt * (key.get(r) - mean_v);
        den += dt * dt;
    }
    let tail_slope = if den > 0.0 { num / den } else { 0.0 };
    let window = tail.last().unwrap().t - tail.first().unwrap().t;
    let projected_rise = tail_slope * window;
    let bounded = projected_rise <= 0.01 * sup.abs().max(1e-300);
    Ok(BoundednessReport {
        sup,
        t_sup,
        tail_slope,
        bounded,
    })
}

/// Descriptive monitor of the damping balance along a trajectory.
///
/// Fits a constant `c_fit` on the first half of the records so that the
/// discrete `y' + y <= -(mu/2) dissip + c_fit` holds there, then counts how
/// often the second half exceeds that budget by more than 5%. Logged in run
/// summaries; never gates acceptance (the underlying constants are
/// existential).
#[derive(Debug, Clone, Copy)]
pub struct DissipationMonitor {
    pub c_fit: f64,
    pub checked: usize,
    pub violations: usize,
}

pub fn monitor_dissipation(history: &[DiagnosticsRecord], mu: f64) -> Option<DissipationMonitor> {
    if history.len() < 6 {
        return None;
    }
    let budget: Vec<(f64, f64)> = history
        .windows(2)
        .filter(|w| w[1].t > w[0].t)
        .map(|w| {
            let dy = (w[1].y_lnln - w[0].y_lnln) / (w[1].t - w[0].t);
            (w[1].t, dy + w[1].y_lnln + 0.5 * mu * w[1].dissip)
        })
        .collect();
    if budget.len() < 4 {
        return None;
    }
    let half = budget.len() / 2;
    let c_fit = budget[..half]
        .iter()
        .map(|&(_, b)| b)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 0.05 * c_fit.abs().max(1e-12);
    let violations = budget[half..]
        .iter()
        .filter(|&&(_, b)| b > c_fit + slack)
        .count();
    Some(DissipationMonitor {
        c_fit,
        checked: budget.len() - half,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{EllipticSolveParams, SignalSolver};
    use crate::grid::{GridSpec, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_for(u: ScalarField) -> SimState {
        let mut solver = SignalSolver::new(u.spec, EllipticSolveParams::default()).unwrap();
        SimState::new(u, &mut solver).unwrap()
    }

    #[test]
    fn zero_field_zero_record() {
        let spec = GridSpec::new(16, 16, 1.0, 1.0).unwrap();
        let r = record(&state_for(ScalarField::zeros(spec)), 0.0);
        assert_eq!(r.mass, 0.0);
        assert_eq!(r.linf, 0.0);
        assert_eq!(r.l2, 0.0);
        assert_eq!(r.y_lnln, 0.0);
        assert_eq!(r.dissip, 0.0);
        assert_eq!(r.g_integral, 0.0);
    }

    #[test]
    fn closed_form_y_for_special_constant() {
        // u = e^e - e on the unit square: ln(ln(u+e)) = 1, so y = u.
        let spec = GridSpec::new(32, 32, 1.0, 1.0).unwrap();
        let c = std::f64::consts::E.powf(std::f64::consts::E) - std::f64::consts::E;
        let r = record(&state_for(ScalarField::constant(spec, c)), 0.0);
        assert!((r.y_lnln - c).abs() < 1e-10 * c);
    }

    #[test]
    fn y_matches_g_integral_for_default_g() {
        let spec = GridSpec::new(24, 24, 2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = ScalarField::from_fn(spec, |_, _| rng.gen_range(0.0..50.0));
        let r = record(&state_for(u), 0.0);
        assert_eq!(r.y_lnln.to_bits(), r.g_integral.to_bits());
    }

    #[test]
    fn y_bounded_by_mass_times_lnln_linf() {
        let spec = GridSpec::new(24, 24, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let u = ScalarField::from_fn(spec, |_, _| rng.gen_range(0.0..1e4));
        let r = record(&state_for(u), 0.0);
        assert!(r.y_lnln <= r.mass * ln_shift(r.linf).ln() * (1.0 + 1e-12));
        assert!(r.dissip >= 0.0);
    }

    #[test]
    fn doubling_u_increases_y() {
        let spec = GridSpec::new(16, 16, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let u = ScalarField::from_fn(spec, |_, _| rng.gen_range(0.1..10.0));
        let r1 = record(&state_for(u.clone()), 0.0);
        let r2 = record(&state_for(u.scale(2.0)), 0.0);
        assert!(r2.y_lnln > r1.y_lnln);
    }

    fn synthetic_history(values: &[f64]) -> Vec<DiagnosticsRecord> {
        values
            .iter()
            .enumerate()
            .map(|(k, &v)| DiagnosticsRecord {
                step: k as u64,
                t: k as f64 * 0.1,
                dt: 0.1,
                mass: v,
                linf: v,
                l2: v,
                y_lnln: v,
                dissip: v,
                g_integral: v,
            })
            .collect()
    }

    #[test]
    fn boundedness_constant_history() {
        let h = synthetic_history(&[2.5; 20]);
        let rep = assess_boundedness(&h, DiagnosticKey::YLnln, 0.5).unwrap();
        assert_eq!(rep.sup, 2.5);
        assert_eq!(rep.tail_slope, 0.0);
        assert!(rep.bounded);
    }

    #[test]
    fn boundedness_geometric_growth_flagged() {
        let vals: Vec<f64> = (0..30).map(|k| 1.05f64.powi(k)).collect();
        let h = synthetic_history(&vals);
        let rep = assess_boundedness(&h, DiagnosticKey::YLnln, 0.4).unwrap();
        assert!(rep.tail_slope > 0.0);
        assert!(!rep.bounded);
    }

    #[test]
    fn boundedness_requires_enough_records() {
        let h = synthetic_history(&[1.0; 5]);
        assert!(assess_boundedness(&h, DiagnosticKey::Mass, 0.5).is_err());
        let h = synthetic_history(&[1.0; 20]);
        assert!(assess_boundedness(&h, DiagnosticKey::Mass, 1.5).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let h = synthetic_history(&[1.0, 2.0]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &h).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.count(), 2);
        assert!(text.contains("1.0000000000000000e0"));
    }
}
