//! Run orchestration and file output: preset execution, refinement studies,
//! and the on-disk artifact layout (config echo, diagnostics CSV, summary).

use crate::config::SimConfig;
use crate::diagnostics::{self, DiagnosticKey};
use crate::error::Result;
use crate::grid::{self, ScalarField};
use crate::presets;
use crate::stepper::{self, RunResult, VerdictKind};
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

/// Everything a preset run leaves behind.
pub struct PresetArtifacts {
    pub config: SimConfig,
    pub result: RunResult,
    pub dir: PathBuf,
}

/// Flat `key = value` summary derived entirely from the records, so a rerun
/// of the same config produces byte-identical output (wall time goes to the
/// caller's log, never into the file).
pub fn summary_text(label: &str, config: &SimConfig, result: &RunResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment = {label}");
    let _ = writeln!(s, "grid = {}x{}", config.grid.nx, config.grid.ny);
    let _ = writeln!(s, "t_end = {}", config.t_end);
    let _ = writeln!(s, "verdict = {}", result.verdict.kind.as_str());
    let _ = writeln!(s, "t_detect = {:.17e}", result.verdict.t_detect);
    let _ = writeln!(s, "linf_at_detect = {:.17e}", result.verdict.linf_at_detect);
    let _ = writeln!(s, "steps = {}", result.final_state.step_index);
    let _ = writeln!(s, "records = {}", result.records.len());
    for (key, sup) in diagnostics::column_sups(&result.records) {
        let _ = writeln!(s, "sup_{} = {:.17e}", key.as_str(), sup);
    }
    if let Some(monitor) = diagnostics::monitor_dissipation(&result.records, config.source.mu) {
        let _ = writeln!(s, "dissipation_budget_c_fit = {:.17e}", monitor.c_fit);
        let _ = writeln!(s, "dissipation_budget_checked = {}", monitor.checked);
        let _ = writeln!(s, "dissipation_budget_violations = {}", monitor.violations);
    }
    s
}

/// Write the standard artifact set for a finished run.
pub fn write_run_artifacts(
    dir: &Path,
    label: &str,
    document: Option<&str>,
    config: &SimConfig,
    result: &RunResult,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(doc) = document {
        fs::write(dir.join("config.txt"), doc)?;
    }
    let mut csv = BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?);
    diagnostics::write_csv(&mut csv, &result.records)?;
    fs::write(dir.join("summary.txt"), summary_text(label, config, result))?;
    Ok(())
}

/// Materialize a preset (plus overrides), run it, and write CSV, snapshots,
/// and summary under its `out_dir`.
pub fn run_preset(
    name: &str,
    overrides: &[(String, String)],
    out_root: Option<&Path>,
) -> Result<PresetArtifacts> {
    let (mut config, document) = presets::materialize(name, overrides)?;
    if let Some(root) = out_root {
        config.out_dir = root.to_path_buf();
    }
    let dir = config.out_dir.clone();
    let result = stepper::run(&config)?;
    write_run_artifacts(&dir, name, Some(&document), &config, &result)?;
    Ok(PresetArtifacts {
        config,
        result,
        dir,
    })
}

/// One level of a refinement study.
#[derive(Debug, Clone, Copy)]
pub struct RefinementLevel {
    pub nx: usize,
    pub ny: usize,
    pub sup_y_lnln: f64,
    pub verdict: VerdictKind,
    pub t_detect: f64,
    /// L2 distance of the final field to the finest level, both restricted
    /// to the base grid; only for levels that reached the horizon.
    pub err_vs_finest: Option<f64>,
    /// Observed order against the next level, where errors exist.
    pub order: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RefinementTable {
    pub levels: Vec<RefinementLevel>,
}

impl RefinementTable {
    pub fn render(&self) -> String {
        let mut s = String::from("nx,ny,sup_y_lnln,verdict,t_detect,err_vs_finest,order\n");
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{},{},{:.10e},{},{:.10e},{},{}",
                l.nx,
                l.ny,
                l.sup_y_lnln,
                l.verdict.as_str(),
                l.t_detect,
                l.err_vs_finest.map_or("-".into(), |e| format!("{e:.10e}")),
                l.order.map_or("-".into(), |o| format!("{o:.3}")),
            );
        }
        s
    }
}

/// Rerun a config at dyadically refined grids and report per-level sup of
/// the log-log functional, the verdict, and self-convergence of the final
/// field against the finest level.
pub fn refinement_study(config: &SimConfig, levels: usize) -> Result<RefinementTable> {
    if levels < 2 {
        return Err(crate::error::KsError::InvalidArgument(
            "refinement study needs at least 2 levels".into(),
        ));
    }
    let base = config.grid;
    let mut runs: Vec<(usize, RunResult)> = Vec::new();
    for k in 0..levels {
        let factor = 1usize << k;
        let mut level_config = config.clone();
        level_config.grid = grid::GridSpec::new(
            base.nx * factor,
            base.ny * factor,
            base.lx,
            base.ly,
        )?;
        level_config.snapshot_every = 0;
        // Snapshot restarts cannot be resampled across resolutions.
        if matches!(level_config.init, crate::config::InitSpec::Snapshot { .. }) && k > 0 {
            return Err(crate::error::KsError::Config(
                "refinement studies require analytic initial data, not snapshots".into(),
            ));
        }
        let result = stepper::run(&level_config)?;
        runs.push((factor, result));
    }

    // Restrict every final field to the base grid.
    let restricted: Vec<ScalarField> = runs
        .iter()
        .map(|(factor, r)| grid::restrict(&r.final_state.u, *factor))
        .collect::<Result<_>>()?;
    let finest_reached = runs.last().unwrap().1.verdict.kind == VerdictKind::None;
    let finest = restricted.last().unwrap();

    let mut errs: Vec<Option<f64>> = Vec::new();
    for (idx, (_, run)) in runs.iter().enumerate() {
        if idx + 1 == runs.len() {
            errs.push(None);
            continue;
        }
        if finest_reached && run.verdict.kind == VerdictKind::None {
            let diff = restricted[idx].axpy(-1.0, finest);
            errs.push(Some(grid::norm(&diff, 2.0)?));
        } else {
            errs.push(None);
        }
    }

    let mut table = Vec::new();
    for (idx, (factor, run)) in runs.iter().enumerate() {
        let sup_y = run
            .records
            .iter()
            .map(|r| r.y_lnln)
            .fold(f64::NEG_INFINITY, f64::max);
        let order = match (errs[idx], errs.get(idx + 1).copied().flatten()) {
            (Some(coarse), Some(fine)) if fine > 0.0 => Some((coarse / fine).log2()),
            _ => None,
        };
        table.push(RefinementLevel {
            nx: base.nx * factor,
            ny: base.ny * factor,
            sup_y_lnln: sup_y,
            verdict: run.verdict.kind,
            t_detect: run.verdict.t_detect,
            err_vs_finest: errs[idx],
            order,
        });
    }
    Ok(RefinementTable { levels: table })
}

/// Sup of one diagnostic column over a run's records.
pub fn sup_of(result: &RunResult, key: DiagnosticKey) -> f64 {
    result
        .records
        .iter()
        .map(|r| key.get(r))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn tiny_config(dir: &Path) -> SimConfig {
        let doc = format!(
            "grid.nx = 32\ngrid.ny = 32\ngrid.lx = 2\ngrid.ly = 2\nt_end = 0.02\n\
             init.kind = gaussian_bump\ninit.sigma = 0.4\ninit.mass = 4\n\
             record_every = 20\nout_dir = {}\n",
            dir.display()
        );
        parse_config(&doc).unwrap()
    }

    #[test]
    fn summary_sups_match_csv_columns() {
        let tmp = tempfile::tempdir().unwrap();
        let config = tiny_config(tmp.path());
        let result = stepper::run(&config).unwrap();
        let summary = summary_text("test", &config, &result);
        for (key, sup) in diagnostics::column_sups(&result.records) {
            let line = format!("sup_{} = {:.17e}", key.as_str(), sup);
            assert!(summary.contains(&line), "missing {line}");
        }
    }

    #[test]
    fn run_artifacts_written_and_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let out_a = tmp.path().join("a");
        let out_b = tmp.path().join("b");
        let overrides = vec![
            ("grid.nx".to_string(), "64".to_string()),
            ("grid.ny".to_string(), "64".to_string()),
            ("t_end".to_string(), "0.01".to_string()),
            ("record_every".to_string(), "10".to_string()),
        ];
        let a = run_preset("subcritical", &overrides, Some(&out_a)).unwrap();
        let _b = run_preset("subcritical", &overrides, Some(&out_b)).unwrap();
        assert_eq!(a.result.verdict.kind, VerdictKind::None);
        for file in ["diagnostics.csv", "summary.txt", "config.txt"] {
            let ca = fs::read(out_a.join(file)).unwrap();
            let cb = fs::read(out_b.join(file)).unwrap();
            assert_eq!(ca, cb, "{file} differs between identical runs");
        }
    }

    #[test]
    fn refinement_study_self_convergence() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = tiny_config(tmp.path());
        config.t_end = 0.01;
        let table = refinement_study(&config, 3).unwrap();
        assert_eq!(table.levels.len(), 3);
        assert_eq!(table.levels[0].nx, 32);
        assert_eq!(table.levels[2].nx, 128);
        let e0 = table.levels[0].err_vs_finest.unwrap();
        let e1 = table.levels[1].err_vs_finest.unwrap();
        assert!(e1 < e0, "no contraction: {e0} -> {e1}");
        assert!(table.levels[0].order.unwrap() > 0.9);
        let rendered = table.render();
        assert!(rendered.lines().count() == 4);
    }
}
