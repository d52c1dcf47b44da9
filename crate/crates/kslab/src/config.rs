//! Experiment configuration: a flat, line-oriented `key = value` format
//! with `#` comments and dotted key names (`grid.nx`, `cfl.c_diff`, ...).
//!
//! Unknown keys are rejected so typos cannot silently fall back to
//! defaults. Later lines win, which is also how preset overrides are
//! applied. `serialize` emits the canonical full document; parsing it back
//! reproduces the config exactly.

use crate::elliptic::EllipticSolveParams;
use crate::error::{KsError, Result};
use crate::grid::{self, GridSpec, ScalarField};
use crate::sources::{SourceKind, SourceSpec};
use crate::stepper::CflParams;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

/// Initial data menu.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// `exp(-(|x - x0|^2) / sigma^2)` renormalized so the discrete mass is
    /// exactly `mass`.
    GaussianBump {
        x0: f64,
        y0: f64,
        sigma: f64,
        mass: f64,
    },
    /// `base + amp cos(kx pi x / lx) cos(ky pi y / ly)`.
    ConstantPlusCosine { base: f64, amp: f64, kx: f64, ky: f64 },
    /// Restart from a KSFIELD snapshot (resumes at the stored time).
    Snapshot { path: PathBuf },
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub t_end: f64,
    pub cfl: CflParams,
    pub source: SourceSpec,
    pub init: InitSpec,
    pub ell: EllipticSolveParams,
    pub record_every: usize,
    pub snapshot_every: usize,
    pub linf_blowup_factor: f64,
    pub out_dir: PathBuf,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(KsError::Config(format!(
                "t_end must be positive and finite, got {}",
                self.t_end
            )));
        }
        self.cfl.validate().map_err(config_err)?;
        self.source.validate().map_err(config_err)?;
        self.ell.validate().map_err(config_err)?;
        if self.record_every == 0 {
            return Err(KsError::Config("record_every must be >= 1".into()));
        }
        if !(self.linf_blowup_factor > 1.0) {
            return Err(KsError::Config(format!(
                "linf_blowup_factor must exceed 1, got {}",
                self.linf_blowup_factor
            )));
        }
        match &self.init {
            InitSpec::GaussianBump { sigma, mass, .. } => {
                if !(*sigma > 0.0) {
                    return Err(KsError::Config(format!(
                        "init.sigma must be positive, got {sigma}"
                    )));
                }
                if !(*mass > 0.0) {
                    return Err(KsError::Config(format!(
                        "init.mass must be positive, got {mass}"
                    )));
                }
            }
            InitSpec::ConstantPlusCosine { base, amp, .. } => {
                if base + amp < 0.0 || base - amp < 0.0 {
                    return Err(KsError::Config(format!(
                        "initial data must be nonnegative: base {base} with amplitude {amp} dips below zero"
                    )));
                }
                if *base == 0.0 && *amp == 0.0 {
                    return Err(KsError::Config(
                        "initial data must not be identically zero".into(),
                    ));
                }
            }
            InitSpec::Snapshot { .. } => {}
        }
        Ok(())
    }

    /// Materialize the initial field and its starting time.
    pub fn initial_field(&self) -> Result<(ScalarField, f64)> {
        self.validate()?;
        match &self.init {
            InitSpec::GaussianBump {
                x0,
                y0,
                sigma,
                mass,
            } => {
                let s2 = sigma * sigma;
                let raw = ScalarField::from_fn(self.grid, |x, y| {
                    (-((x - x0).powi(2) + (y - y0).powi(2)) / s2).exp()
                });
                let q = grid::integrate(&raw);
                if !(q > 0.0) {
                    return Err(KsError::Config(
                        "gaussian bump underflowed to zero on this grid".into(),
                    ));
                }
                Ok((raw.scale(mass / q), 0.0))
            }
            InitSpec::ConstantPlusCosine { base, amp, kx, ky } => {
                let pi = std::f64::consts::PI;
                let (lx, ly) = (self.grid.lx, self.grid.ly);
                let u = ScalarField::from_fn(self.grid, |x, y| {
                    base + amp * (kx * pi * x / lx).cos() * (ky * pi * y / ly).cos()
                });
                if u.values().iter().any(|&v| v < 0.0) {
                    return Err(KsError::Config(
                        "initial data must be nonnegative on the grid".into(),
                    ));
                }
                Ok((u, 0.0))
            }
            InitSpec::Snapshot { path } => {
                let mut r = BufReader::new(fs::File::open(path)?);
                let (u, t) = grid::read_snapshot(&mut r)?;
                if u.spec != self.grid {
                    return Err(KsError::Config(format!(
                        "snapshot grid {}x{} does not match configured grid {}x{}",
                        u.spec.nx, u.spec.ny, self.grid.nx, self.grid.ny
                    )));
                }
                if u.values().iter().any(|&v| v < 0.0) {
                    return Err(KsError::Config("snapshot contains negative values".into()));
                }
                Ok((u, t))
            }
        }
    }

    /// Canonical full-document serialization; reparses to an identical config.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid.nx = {}", self.grid.nx);
        let _ = writeln!(s, "grid.ny = {}", self.grid.ny);
        let _ = writeln!(s, "grid.lx = {}", self.grid.lx);
        let _ = writeln!(s, "grid.ly = {}", self.grid.ly);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let _ = writeln!(s, "cfl.c_diff = {}", self.cfl.c_diff);
        let _ = writeln!(s, "cfl.c_adv = {}", self.cfl.c_adv);
        let _ = writeln!(s, "cfl.c_src = {}", self.cfl.c_src);
        let _ = writeln!(s, "cfl.dt_min = {}", self.cfl.dt_min);
        let _ = writeln!(s, "cfl.dt_max = {}", self.cfl.dt_max);
        let kind = match self.source.kind {
            SourceKind::None => "none",
            SourceKind::Logistic => "logistic",
            SourceKind::Sublogistic => "sublogistic",
        };
        let _ = writeln!(s, "source.kind = {kind}");
        let _ = writeln!(s, "source.r = {}", self.source.r);
        let _ = writeln!(s, "source.mu = {}", self.source.mu);
        let _ = writeln!(s, "source.p = {}", self.source.p);
        match &self.init {
            InitSpec::GaussianBump {
                x0,
                y0,
                sigma,
                mass,
            } => {
                let _ = writeln!(s, "init.kind = gaussian_bump");
                let _ = writeln!(s, "init.x0 = {x0}");
                let _ = writeln!(s, "init.y0 = {y0}");
                let _ = writeln!(s, "init.sigma = {sigma}");
                let _ = writeln!(s, "init.mass = {mass}");
            }
            InitSpec::ConstantPlusCosine { base, amp, kx, ky } => {
                let _ = writeln!(s, "init.kind = constant_plus_cosine");
                let _ = writeln!(s, "init.base = {base}");
                let _ = writeln!(s, "init.amp = {amp}");
                let _ = writeln!(s, "init.kx = {kx}");
                let _ = writeln!(s, "init.ky = {ky}");
            }
            InitSpec::Snapshot { path } => {
                let _ = writeln!(s, "init.kind = snapshot");
                let _ = writeln!(s, "init.path = {}", path.display());
            }
        }
        let _ = writeln!(s, "ell.tol = {}", self.ell.tol);
        let _ = writeln!(
            s,
            "ell.max_iter = {}",
            self.ell.max_iter.unwrap_or(10 * (self.grid.nx + self.grid.ny))
        );
        let _ = writeln!(s, "record_every = {}", self.record_every);
        let _ = writeln!(s, "snapshot_every = {}", self.snapshot_every);
        let _ = writeln!(s, "linf_blowup_factor = {}", self.linf_blowup_factor);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }
}

fn config_err(e: KsError) -> KsError {
    KsError::Config(e.to_string())
}

const KNOWN_KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "t_end",
    "cfl.c_diff",
    "cfl.c_adv",
    "cfl.c_src",
    "cfl.dt_min",
    "cfl.dt_max",
    "source.kind",
    "source.r",
    "source.mu",
    "source.p",
    "init.kind",
    "init.x0",
    "init.y0",
    "init.sigma",
    "init.mass",
    "init.base",
    "init.amp",
    "init.kx",
    "init.ky",
    "init.path",
    "ell.tol",
    "ell.max_iter",
    "record_every",
    "snapshot_every",
    "linf_blowup_factor",
    "out_dir",
    "v0",
];

struct KeyMap(BTreeMap<String, String>);

impl KeyMap {
    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<f64>().map(Some).map_err(|_| {
                KsError::Config(format!("malformed number for '{key}': {v:?}"))
            }),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn f64_required(&self, key: &str) -> Result<f64> {
        self.f64(key)?
            .ok_or_else(|| KsError::Config(format!("missing required key '{key}'")))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<usize>().map(Some).map_err(|_| {
                KsError::Config(format!("malformed count for '{key}': {v:?}"))
            }),
        }
    }

    fn usize_required(&self, key: &str) -> Result<usize> {
        self.usize(key)?
            .ok_or_else(|| KsError::Config(format!("missing required key '{key}'")))
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }
}

/// Parse a config document, also returning human-readable notices (for
/// keys that are accepted but deliberately ignored, like `v0`).
pub fn parse_config_with_notices(text: &str) -> Result<(SimConfig, Vec<String>)> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(idx) => &raw[..idx],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            KsError::Config(format!("line {}: expected 'key = value', got {raw:?}", lineno + 1))
        })?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(KsError::Config(format!(
                "line {}: unknown key '{key}'",
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    let map = KeyMap(map);

    let mut notices = Vec::new();
    if map.str("v0").is_some() {
        notices.push(
            "key 'v0' accepted and ignored: the signal is slaved to u by the elliptic equation"
                .to_string(),
        );
    }

    let nx = map.usize_required("grid.nx")?;
    let ny = map.usize_required("grid.ny")?;
    let lx = map.f64_required("grid.lx")?;
    let ly = map.f64_required("grid.ly")?;
    let grid = GridSpec::new(nx, ny, lx, ly).map_err(config_err)?;

    let defaults = CflParams::default();
    let cfl = CflParams {
        c_diff: map.f64_or("cfl.c_diff", defaults.c_diff)?,
        c_adv: map.f64_or("cfl.c_adv", defaults.c_adv)?,
        c_src: map.f64_or("cfl.c_src", defaults.c_src)?,
        dt_min: map.f64_or("cfl.dt_min", defaults.dt_min)?,
        dt_max: map.f64_or("cfl.dt_max", defaults.dt_max)?,
    };

    let kind = match map.str("source.kind").unwrap_or("none") {
        "none" => SourceKind::None,
        "logistic" => SourceKind::Logistic,
        "sublogistic" => SourceKind::Sublogistic,
        other => {
            return Err(KsError::Config(format!(
                "source.kind must be one of none|logistic|sublogistic, got '{other}'"
            )))
        }
    };
    let source = SourceSpec {
        kind,
        r: map.f64_or("source.r", 0.0)?,
        mu: map.f64_or("source.mu", 0.0)?,
        p: map.f64_or("source.p", 1.0)?,
    };

    let init = match map.str("init.kind") {
        None => return Err(KsError::Config("missing required key 'init.kind'".into())),
        Some("gaussian_bump") => InitSpec::GaussianBump {
            x0: map.f64_or("init.x0", lx / 2.0)?,
            y0: map.f64_or("init.y0", ly / 2.0)?,
            sigma: map.f64_required("init.sigma")?,
            mass: map.f64_required("init.mass")?,
        },
        Some("constant_plus_cosine") => InitSpec::ConstantPlusCosine {
            base: map.f64_required("init.base")?,
            amp: map.f64_or("init.amp", 0.0)?,
            kx: map.f64_or("init.kx", 1.0)?,
            ky: map.f64_or("init.ky", 1.0)?,
        },
        Some("snapshot") => InitSpec::Snapshot {
            path: PathBuf::from(map.str("init.path").ok_or_else(|| {
                KsError::Config("missing required key 'init.path'".into())
            })?),
        },
        Some(other) => {
            return Err(KsError::Config(format!(
                "init.kind must be one of gaussian_bump|constant_plus_cosine|snapshot, got '{other}'"
            )))
        }
    };

    let ell = EllipticSolveParams {
        tol: map.f64_or("ell.tol", 1e-10)?,
        max_iter: Some(
            map.usize("ell.max_iter")?
                .unwrap_or(10 * (grid.nx + grid.ny)),
        ),
    };

    let config = SimConfig {
        grid,
        t_end: map.f64_required("t_end")?,
        cfl,
        source,
        init,
        ell,
        record_every: map.usize("record_every")?.unwrap_or(100),
        snapshot_every: map.usize("snapshot_every")?.unwrap_or(0),
        linf_blowup_factor: map.f64_or("linf_blowup_factor", 1e6)?,
        out_dir: PathBuf::from(map.str("out_dir").unwrap_or("kslab_out")),
    };
    config.validate()?;
    Ok((config, notices))
}

/// Parse a config document, discarding notices.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    parse_config_with_notices(text).map(|(c, _)| c)
}
