//! Screened Poisson solve for the chemical signal: `(-lap + I) v = u` with
//! homogeneous Neumann boundaries.
//!
//! The mirror-ghost five-point Laplacian is diagonalized exactly by the
//! DCT-II basis `cos(pi k (2i+1) / (2 nx))`, so the solve is a forward
//! cosine transform, a pointwise division by `1 + lam_x(k) + lam_y(l)`, and
//! an inverse transform. The residual contract
//! `||(-lap + I) v - u||_2 <= tol * ||u||_2` is checked after every solve.

use crate::error::{KsError, Result};
use crate::grid::{self, GridSpec, ScalarField};
use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};
use std::sync::Arc;

/// Tolerance and iteration cap for the signal solve.
///
/// The transform backend is direct, so `max_iter` only participates in
/// validation; it is kept because the residual contract allows iterative
/// backends as well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticSolveParams {
    /// Relative residual tolerance, in `(0, 1e-4]`.
    pub tol: f64,
    /// Iteration cap for iterative backends; `None` derives `10 * (nx + ny)`.
    pub max_iter: Option<usize>,
}

impl Default for EllipticSolveParams {
    fn default() -> Self {
        EllipticSolveParams {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl EllipticSolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(KsError::InvalidArgument(format!(
                "elliptic tol must be in (0, 1e-4], got {}",
                self.tol
            )));
        }
        if self.max_iter == Some(0) {
            return Err(KsError::InvalidArgument("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_iter_for(&self, spec: GridSpec) -> usize {
        self.max_iter.unwrap_or(10 * (spec.nx + spec.ny))
    }
}

/// Cached transform plans and buffers for one grid.
pub struct SignalSolver {
    spec: GridSpec,
    params: EllipticSolveParams,
    dct2_x: Arc<dyn TransformType2And3<f64>>,
    dct3_x: Arc<dyn TransformType2And3<f64>>,
    dct2_y: Arc<dyn TransformType2And3<f64>>,
    dct3_y: Arc<dyn TransformType2And3<f64>>,
    /// `1 / (1 + lam_x(k) + lam_y(l))` in transposed (x-mode outer) layout.
    inv_symbol: Vec<f64>,
    work: Vec<f64>,
    transposed: Vec<f64>,
}

impl SignalSolver {
    pub fn new(spec: GridSpec, params: EllipticSolveParams) -> Result<Self> {
        params.validate()?;
        let mut planner = DctPlanner::new();
        let dct2_x = planner.plan_dct2(spec.nx);
        let dct3_x = planner.plan_dct3(spec.nx);
        let dct2_y = planner.plan_dct2(spec.ny);
        let dct3_y = planner.plan_dct3(spec.ny);

        let lam = |k: usize, n: usize, h: f64| {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s / (h * h)
        };
        let mut inv_symbol = Vec::with_capacity(spec.len());
        for k in 0..spec.nx {
            let lx = lam(k, spec.nx, spec.hx());
            for l in 0..spec.ny {
                inv_symbol.push(1.0 / (1.0 + lx + lam(l, spec.ny, spec.hy())));
            }
        }
        Ok(SignalSolver {
            spec,
            params,
            dct2_x,
            dct3_x,
            dct2_y,
            dct3_y,
            inv_symbol,
            work: vec![0.0; spec.len()],
            transposed: vec![0.0; spec.len()],
        })
    }

    pub fn params(&self) -> EllipticSolveParams {
        self.params
    }

    /// Solve `(-lap + I) v = u` and verify the residual contract.
    pub fn solve(&mut self, u: &ScalarField) -> Result<ScalarField> {
        if u.spec != self.spec {
            return Err(KsError::GridMismatch(format!(
                "solver built for {}x{}, field is {}x{}",
                self.spec.nx, self.spec.ny, u.spec.nx, u.spec.ny
            )));
        }
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        self.work.copy_from_slice(u.values());

        // Forward DCT-II along x (rows are contiguous).
        let dct2_x = &self.dct2_x;
        self.work.par_chunks_mut(nx).for_each_init(
            || vec![0.0; dct2_x.get_scratch_len()],
            |scratch, row| dct2_x.process_dct2_with_scratch(row, scratch),
        );
        transpose(&self.work, &mut self.transposed, nx, ny);
        // Forward DCT-II along y, then apply the inverse symbol.
        let dct2_y = &self.dct2_y;
        let symbol = &self.inv_symbol;
        self.transposed
            .par_chunks_mut(ny)
            .enumerate()
            .for_each_init(
                || vec![0.0; dct2_y.get_scratch_len()],
                |scratch, (k, col)| {
                    dct2_y.process_dct2_with_scratch(col, scratch);
                    let sym = &symbol[k * ny..(k + 1) * ny];
                    for (c, s) in col.iter_mut().zip(sym) {
                        *c *= s;
                    }
                },
            );
        // Inverse transforms: DCT-III along y, transpose back, DCT-III along x.
        let dct3_y = &self.dct3_y;
        self.transposed.par_chunks_mut(ny).for_each_init(
            || vec![0.0; dct3_y.get_scratch_len()],
            |scratch, col| dct3_y.process_dct3_with_scratch(col, scratch),
        );
        transpose(&self.transposed, &mut self.work, ny, nx);
        let dct3_x = &self.dct3_x;
        let scale = 4.0 / (nx as f64 * ny as f64);
        self.work.par_chunks_mut(nx).for_each_init(
            || vec![0.0; dct3_x.get_scratch_len()],
            |scratch, row| {
                dct3_x.process_dct3_with_scratch(row, scratch);
                for v in row.iter_mut() {
                    *v *= scale;
                }
            },
        );

        let v = ScalarField::from_values(self.spec, self.work.clone())?;

        // Residual audit against the module's own Laplacian.
        let lap_v = grid::laplacian(&v);
        let res_sq = grid::kahan_sum(
            v.values()
                .iter()
                .zip(lap_v.values())
                .zip(u.values())
                .map(|((vv, lv), uu)| {
                    let r = -lv + vv - uu;
                    r * r
                }),
        );
        let u_sq = grid::kahan_sum(u.values().iter().map(|x| x * x));
        let residual = (res_sq * self.spec.cell_area()).sqrt();
        let bound = self.params.tol * (u_sq * self.spec.cell_area()).sqrt();
        if residual > bound && u_sq > 0.0 {
            return Err(KsError::EllipticResidual {
                residual: residual / (u_sq * self.spec.cell_area()).sqrt(),
                tol: self.params.tol,
            });
        }
        Ok(v)
    }
}

fn transpose(src: &[f64], dst: &mut [f64], row_len: usize, n_rows: usize) {
    // src is n_rows x row_len, dst becomes row_len x n_rows.
    for j in 0..n_rows {
        let row = &src[j * row_len..(j + 1) * row_len];
        for (i, &v) in row.iter().enumerate() {
            dst[i * n_rows + j] = v;
        }
    }
}

/// One-shot convenience wrapper around [`SignalSolver`].
pub fn solve_signal(u: &ScalarField, params: EllipticSolveParams) -> Result<ScalarField> {
    SignalSolver::new(u.spec, params)?.solve(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integrate, norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn params_validation() {
        assert!(EllipticSolveParams::default().validate().is_ok());
        assert!(EllipticSolveParams {
            tol: 0.0,
            max_iter: None
        }
        .validate()
        .is_err());
        assert!(EllipticSolveParams {
            tol: 1e-3,
            max_iter: None
        }
        .validate()
        .is_err());
    }

    #[test]
    fn constant_is_fixed_point() {
        let spec = GridSpec::new(32, 24, 2.0, 1.0).unwrap();
        let u = ScalarField::constant(spec, 5.5);
        let v = solve_signal(&u, EllipticSolveParams::default()).unwrap();
        for x in v.values() {
            assert!((x - 5.5).abs() < 1e-11, "got {x}");
        }
    }

    fn manufactured_error(n: usize) -> f64 {
        let spec = GridSpec::new(n, n, 1.0, 1.0).unwrap();
        let pi = std::f64::consts::PI;
        let (kx, ky) = (pi / spec.lx, 2.0 * pi / spec.ly);
        let v_exact = ScalarField::from_fn(spec, |x, y| (kx * x).cos() * (ky * y).cos());
        // u = v* - lap v* = (1 + kx^2 + ky^2) v*
        let u = v_exact.scale(1.0 + kx * kx + ky * ky);
        let v = solve_signal(&u, EllipticSolveParams::default()).unwrap();
        let diff = v.axpy(-1.0, &v_exact);
        norm(&diff, 2.0).unwrap()
    }

    #[test]
    fn manufactured_solution_second_order() {
        let e64 = manufactured_error(64);
        let e128 = manufactured_error(128);
        let e256 = manufactured_error(256);
        let o1 = (e64 / e128).log2();
        let o2 = (e128 / e256).log2();
        assert!(o1 >= 1.9, "order {o1}");
        assert!(o2 >= 1.9, "order {o2}");
    }

    #[test]
    fn solve_is_linear() {
        let spec = GridSpec::new(48, 48, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u1 = ScalarField::from_fn(spec, |_, _| rng.gen_range(0.0..2.0));
        let u2 = ScalarField::from_fn(spec, |_, _| rng.gen_range(-1.0..1.0));
        let params = EllipticSolveParams::default();
        let (a, b) = (2.0, -0.7);
        let lhs = solve_signal(&u1.scale(a).axpy(b, &u2), params).unwrap();
        let rhs = solve_signal(&u1, params)
            .unwrap()
            .scale(a)
            .axpy(b, &solve_signal(&u2, params).unwrap());
        let err = norm(&lhs.axpy(-1.0, &rhs), 2.0).unwrap();
        let scale = norm(&rhs, 2.0).unwrap().max(1.0);
        assert!(err <= 10.0 * params.tol * scale, "linearity error {err}");
    }

    #[test]
    fn discrete_maximum_principle_and_mass() {
        let spec = GridSpec::new(40, 40, 2.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = ScalarField::from_fn(spec, |_, _| rng.gen_range(0.5..3.5));
        let params = EllipticSolveParams::default();
        let v = solve_signal(&u, params).unwrap();
        let (umin, umax) = u
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        let slack = 10.0 * params.tol * norm(&u, f64::INFINITY).unwrap();
        for &x in v.values() {
            assert!(x >= umin - slack && x <= umax + slack);
        }
        // Integrating the equation kills the Laplacian under Neumann.
        let scale = integrate(&u).abs().max(1.0);
        assert!((integrate(&v) - integrate(&u)).abs() <= 10.0 * params.tol * scale);
    }

    #[test]
    fn nonnegative_input_nonnegative_output() {
        let spec = GridSpec::new(64, 64, 2.0, 2.0).unwrap();
        let u = ScalarField::from_fn(spec, |x, y| {
            (-(x - 1.0) * (x - 1.0) / 0.02 - (y - 1.0) * (y - 1.0) / 0.02).exp() * 100.0
        });
        let params = EllipticSolveParams::default();
        let v = solve_signal(&u, params).unwrap();
        let floor = -10.0 * params.tol * norm(&u, f64::INFINITY).unwrap();
        assert!(v.values().iter().all(|&x| x >= floor));
    }
}
