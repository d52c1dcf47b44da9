//! Deterministic corpora of grid functions for the inequality lab.
//!
//! Fields are defined in physical coordinates and sampled onto the target
//! grid, so the same `CorpusSpec` rendered at two resolutions produces
//! discretizations of the same functions. Generation is keyed by
//! `(seed, field index)`, independent of `count`.

use crate::error::{KsError, Result};
use crate::grid::{GridSpec, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    GaussianBumps,
    RandomSmooth,
    Plateaus,
    Spikes,
}

/// Near-singular spike amplitudes are capped here to keep `ln ln` and power
/// integrals inside double precision.
pub const SPIKE_AMPLITUDE_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub count: usize,
    pub kinds: Vec<CorpusKind>,
    pub seed: u64,
    pub amp_lo: f64,
    pub amp_hi: f64,
}

impl CorpusSpec {
    /// The default mix: all four kinds, amplitudes spanning `[1, 100]`.
    pub fn mixed(count: usize, seed: u64) -> Self {
        CorpusSpec {
            count,
            kinds: vec![
                CorpusKind::GaussianBumps,
                CorpusKind::RandomSmooth,
                CorpusKind::Plateaus,
                CorpusKind::Spikes,
            ],
            seed,
            amp_lo: 1.0,
            amp_hi: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(KsError::InvalidArgument("corpus count must be >= 1".into()));
        }
        if self.kinds.is_empty() {
            return Err(KsError::InvalidArgument("corpus needs at least one kind".into()));
        }
        if !(self.amp_lo > 0.0 && self.amp_hi >= self.amp_lo) {
            return Err(KsError::InvalidArgument(format!(
                "bad amplitude range [{}, {}]",
                self.amp_lo, self.amp_hi
            )));
        }
        Ok(())
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn gaussian_bumps(rng: &mut impl Rng, spec: GridSpec, amp_lo: f64, amp_hi: f64) -> ScalarField {
    let n_bumps = rng.gen_range(1..=3);
    let mut bumps = Vec::new();
    for _ in 0..n_bumps {
        let x0 = rng.gen_range(0.15 * spec.lx..0.85 * spec.lx);
        let y0 = rng.gen_range(0.15 * spec.ly..0.85 * spec.ly);
        let sigma = rng.gen_range(0.05..0.25) * spec.lx.min(spec.ly);
        let amp = log_uniform(rng, amp_lo, amp_hi);
        bumps.push((x0, y0, sigma * sigma, amp));
    }
    ScalarField::from_fn(spec, |x, y| {
        bumps
            .iter()
            .map(|&(x0, y0, s2, a)| a * (-((x - x0).powi(2) + (y - y0).powi(2)) / s2).exp())
            .sum()
    })
}

fn random_smooth(rng: &mut impl Rng, spec: GridSpec, amp_lo: f64, amp_hi: f64) -> ScalarField {
    // Low-mode cosine series with coefficients damped so the field stays
    // strictly positive without clipping.
    const MODES: usize = 5;
    let amp = log_uniform(rng, amp_lo, amp_hi);
    let mut coeffs = [[0.0f64; MODES + 1]; MODES + 1];
    let mut weight_sum = 0.0;
    for m in 0..=MODES {
        for n in 0..=MODES {
            if m == 0 && n == 0 {
                continue;
            }
            let damp = 1.0 / (1.0 + (m * m + n * n) as f64);
            coeffs[m][n] = rng.gen_range(-1.0..1.0) * damp;
            weight_sum += damp;
        }
    }
    let pi = std::f64::consts::PI;
    ScalarField::from_fn(spec, |x, y| {
        let mut series = 0.0;
        for m in 0..=MODES {
            for n in 0..=MODES {
                if m == 0 && n == 0 {
                    continue;
                }
                series += coeffs[m][n]
                    * (m as f64 * pi * x / spec.lx).cos()
                    * (n as f64 * pi * y / spec.ly).cos();
            }
        }
        // |series| <= weight_sum, so the shift keeps the field positive.
        amp * (1.1 + series / weight_sum)
    })
}

fn plateaus(rng: &mut impl Rng, spec: GridSpec, amp_lo: f64, amp_hi: f64) -> ScalarField {
    let amp = log_uniform(rng, amp_lo, amp_hi);
    let x0 = rng.gen_range(0.3 * spec.lx..0.7 * spec.lx);
    let y0 = rng.gen_range(0.3 * spec.ly..0.7 * spec.ly);
    let radius = rng.gen_range(0.1..0.3) * spec.lx.min(spec.ly);
    let edge = rng.gen_range(0.05..0.15) * spec.lx.min(spec.ly);
    ScalarField::from_fn(spec, |x, y| {
        let r = ((x - x0).powi(2) + (y - y0).powi(2)).sqrt();
        let s = ((radius + edge - r) / edge).clamp(0.0, 1.0);
        amp * s * s * (3.0 - 2.0 * s)
    })
}

fn spikes(rng: &mut impl Rng, spec: GridSpec, _amp_lo: f64, amp_hi: f64) -> ScalarField {
    // Tall algebraic spikes, steep but still resolved at 128 cells per side.
    let amp = log_uniform(rng, amp_hi.min(SPIKE_AMPLITUDE_CAP), SPIKE_AMPLITUDE_CAP);
    let x0 = rng.gen_range(0.25 * spec.lx..0.75 * spec.lx);
    let y0 = rng.gen_range(0.25 * spec.ly..0.75 * spec.ly);
    let core = rng.gen_range(0.015..0.04) * spec.lx.min(spec.ly);
    let gamma = rng.gen_range(1.0..2.0);
    let c2 = core * core;
    ScalarField::from_fn(spec, |x, y| {
        let r2 = (x - x0).powi(2) + (y - y0).powi(2);
        amp * (c2 / (r2 + c2)).powf(gamma)
    })
}

/// Generate the corpus on a grid. Field `k` uses kind `kinds[k % len]` and
/// an RNG stream derived from `(seed, k)`.
pub fn generate(corpus: &CorpusSpec, grid: GridSpec) -> Result<Vec<ScalarField>> {
    corpus.validate()?;
    let mut fields = Vec::with_capacity(corpus.count);
    for k in 0..corpus.count {
        let mut rng = ChaCha8Rng::seed_from_u64(corpus.seed);
        rng.set_stream(k as u64 + 1);
        let kind = corpus.kinds[k % corpus.kinds.len()];
        let field = match kind {
            CorpusKind::GaussianBumps => gaussian_bumps(&mut rng, grid, corpus.amp_lo, corpus.amp_hi),
            CorpusKind::RandomSmooth => random_smooth(&mut rng, grid, corpus.amp_lo, corpus.amp_hi),
            CorpusKind::Plateaus => plateaus(&mut rng, grid, corpus.amp_lo, corpus.amp_hi),
            CorpusKind::Spikes => spikes(&mut rng, grid, corpus.amp_lo, corpus.amp_hi),
        };
        fields.push(field);
    }
    Ok(fields)
}
