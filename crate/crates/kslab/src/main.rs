//! Thin command-line front end; all the work lives in the library.

use clap::{Args, Parser, Subcommand};
use kslab::config::{self, SimConfig};
use kslab::corpus::CorpusSpec;
use kslab::error::KsError;
use kslab::grid::{self, GridSpec};
use kslab::inequality;
use kslab::sources::g_lnln;
use kslab::{experiment, stepper};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "kslab", about = "Chemotaxis blow-up laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment from a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset scenario.
    Preset {
        /// subcritical | supercritical_blowup | sublogistic_p1 | logistic_control
        name: String,
        /// Config overrides, e.g. --set grid.nx=128 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inequality lab probes.
    Lab {
        #[command(subcommand)]
        probe: LabProbe,
    },
    /// Rerun a config at dyadically refined grids.
    Refine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LabCommon {
    #[arg(long = "corpus-seed", default_value_t = 1)]
    corpus_seed: u64,
    /// Cells per side of the lab grid.
    #[arg(long, default_value_t = 128)]
    grid: usize,
    #[arg(long, default_value = "runs/lab")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LabProbe {
    /// Empirical interpolation-constant estimate over a corpus.
    Gn {
        #[command(flatten)]
        common: LabCommon,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Calibrate-then-verify protocol for the truncation inequality.
    Trunc {
        #[command(flatten)]
        common: LabCommon,
        #[arg(long = "calibration-count", default_value_t = 100)]
        calibration_count: usize,
        #[arg(long = "verify-count", default_value_t = 100)]
        verify_count: usize,
    },
    /// Tail-mass probe over KSFIELD snapshots of a finished run.
    Equi {
        #[command(flatten)]
        common: LabCommon,
        /// Directory containing snapshot_*.ks files.
        #[arg(long)]
        snapshots: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome = match cli.command {
        Command::Simulate { config, out } => simulate(&config, out.as_deref()),
        Command::Preset { name, set, out } => preset(&name, &set, out.as_deref()),
        Command::Lab { probe } => lab(probe),
        Command::Refine {
            config,
            levels,
            out,
        } => refine(&config, levels, out.as_deref()),
    };
    match outcome {
        Ok(()) => {
            eprintln!("done in {:.2}s", started.elapsed().as_secs_f64());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn load_config(path: &Path) -> Result<SimConfig, KsError> {
    let text = fs::read_to_string(path)
        .map_err(|e| KsError::Config(format!("cannot read {}: {e}", path.display())))?;
    let (config, notices) = config::parse_config_with_notices(&text)?;
    for n in notices {
        eprintln!("notice: {n}");
    }
    Ok(config)
}

fn simulate(path: &Path, out: Option<&Path>) -> Result<(), KsError> {
    let mut config = load_config(path)?;
    if let Some(dir) = out {
        config.out_dir = dir.to_path_buf();
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "simulate".into());
    let result = stepper::run(&config)?;
    experiment::write_run_artifacts(
        &config.out_dir.clone(),
        &label,
        Some(&config.serialize()),
        &config,
        &result,
    )?;
    println!(
        "verdict = {} at t = {:.6} (linf {:.6e}); artifacts in {}",
        result.verdict.kind.as_str(),
        result.verdict.t_detect,
        result.verdict.linf_at_detect,
        config.out_dir.display()
    );
    Ok(())
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, String)>, KsError> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| KsError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))
        })
        .collect()
}

fn preset(name: &str, set: &[String], out: Option<&Path>) -> Result<(), KsError> {
    let overrides = parse_overrides(set)?;
    let artifacts = experiment::run_preset(name, &overrides, out)?;
    println!(
        "{name}: verdict = {} at t = {:.6} (linf {:.6e}); artifacts in {}",
        artifacts.result.verdict.kind.as_str(),
        artifacts.result.verdict.t_detect,
        artifacts.result.verdict.linf_at_detect,
        artifacts.dir.display()
    );
    Ok(())
}

fn lab_grid(cells: usize) -> Result<GridSpec, KsError> {
    GridSpec::new(cells, cells, 2.0, 2.0)
}

fn lab(probe: LabProbe) -> Result<(), KsError> {
    match probe {
        LabProbe::Gn { common, count } => {
            let spec = lab_grid(common.grid)?;
            let corpus = CorpusSpec::mixed(count, common.corpus_seed);
            let fields = kslab::corpus::generate(&corpus, spec)?;
            // The instance behind the q+1 power estimate: p=3, q=1, r=2, s=1.
            let (p, q, r, s) = (3.0, 1.0, 2.0, 1.0);
            fs::create_dir_all(&common.out)?;
            let mut w = BufWriter::new(fs::File::create(common.out.join("gn_report.csv"))?);
            use std::io::Write as _;
            writeln!(w, "field_id,ratio")?;
            let mut best = 0.0f64;
            for (idx, f) in fields.iter().enumerate() {
                let ratio =
                    inequality::estimate_gn_constant_on(std::slice::from_ref(f), p, q, r, s)
                        .unwrap_or(0.0);
                writeln!(w, "{idx},{ratio:.10e}")?;
                best = best.max(ratio);
            }
            println!(
                "empirical interpolation constant over {count} fields at {0}x{0}: {best:.6e}",
                common.grid
            );
            Ok(())
        }
        LabProbe::Trunc {
            common,
            calibration_count,
            verify_count,
        } => {
            let spec = lab_grid(common.grid)?;
            let train = kslab::corpus::generate(
                &CorpusSpec::mixed(calibration_count, common.corpus_seed),
                spec,
            )?;
            let verify = kslab::corpus::generate(
                &CorpusSpec::mixed(verify_count, common.corpus_seed + 1000),
                spec,
            )?;
            fs::create_dir_all(&common.out)?;
            let mut reports = Vec::new();
            let mut violations = 0usize;
            for q in [2.0, 3.0] {
                let cal = inequality::calibrate_truncation(&train, q)?;
                eprintln!("q={q}: c_cal={:.4e}, C_cal={:.4e}", cal.c_cal, cal.big_c_cal);
                for eps in [0.1, 1.0] {
                    for (idx, w) in verify.iter().enumerate() {
                        let rep = inequality::check_truncation_inequality(w, q, eps, g_lnln, cal)?;
                        if !rep.holds {
                            violations += 1;
                        }
                        reports.push((idx, rep));
                    }
                }
            }
            let mut w = BufWriter::new(fs::File::create(common.out.join("truncation_report.csv"))?);
            inequality::write_truncation_csv(&mut w, &reports)?;
            println!(
                "truncation check: {} trials, {violations} violations",
                reports.len()
            );
            if violations > 0 {
                return Err(KsError::SchemeFailure {
                    t: f64::NAN,
                    reason: format!("{violations} truncation-inequality violations"),
                });
            }
            Ok(())
        }
        LabProbe::Equi { common, snapshots } => {
            let mut paths: Vec<PathBuf> = fs::read_dir(&snapshots)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map_or(false, |x| x == "ks"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(KsError::Config(format!(
                    "no .ks snapshots found in {}",
                    snapshots.display()
                )));
            }
            let mut fields = Vec::with_capacity(paths.len());
            for p in &paths {
                let mut r = std::io::BufReader::new(fs::File::open(p)?);
                let (field, _t) = grid::read_snapshot(&mut r)?;
                fields.push(field);
            }
            let cutoffs = [10.0, 100.0, 1e3, 1e4];
            let table = inequality::equi_integrability_probe(&fields, g_lnln, &cutoffs)?;
            fs::create_dir_all(&common.out)?;
            use std::io::Write as _;
            let mut w = BufWriter::new(fs::File::create(common.out.join("equi_report.csv"))?);
            writeln!(w, "cutoff,tail_sup,cheby_bound")?;
            println!(
                "sup int G(u) = {:.6e} over {} snapshots",
                table.g_sup,
                fields.len()
            );
            for row in &table.rows {
                writeln!(
                    w,
                    "{},{:.10e},{:.10e}",
                    row.cutoff, row.tail_sup, row.cheby_bound
                )?;
                println!(
                    "K = {:>8}: tail sup = {:.6e} (bound {:.6e})",
                    row.cutoff, row.tail_sup, row.cheby_bound
                );
            }
            Ok(())
        }
    }
}

fn refine(path: &Path, levels: usize, out: Option<&Path>) -> Result<(), KsError> {
    let config = load_config(path)?;
    let table = experiment::refinement_study(&config, levels)?;
    let rendered = table.render();
    print!("{rendered}");
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out_dir.clone());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("refinement.csv"), rendered)?;
    Ok(())
}
