//! Conjugate-gradient solvers used by the flow and the Newton polish. Fields
//! are treated as real vectors with the inner product `Re <a, b>`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{det_sum, ComplexField};
use crate::scalar::Real;

pub(crate) const INNER_MAX_ITER: usize = 500;

/// `Re <a, b>` without the cell-area factor.
fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    det_sum(a.len(), |k| a[k].re * b[k].re + a[k].im * b[k].im)
}

/// Solves `(1 - dt Lap) x = b` on interior nodes.
pub(crate) fn solve_shifted_laplacian<T: Real>(b: &ComplexField<T>, dt: T, rel_tol: T) -> Result<(ComplexField<T>, usize)> {
    let grid = *b.grid();
    let n = grid.n();
    let zero = Complex::new(T::zero(), T::zero());
    let off = dt / grid.cell_area();
    let center = T::one() + T::of(4.0) * off;
    let apply = |src: &[Complex<T>], dst: &mut [Complex<T>]| {
        dst.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            if j == 0 || j + 1 == n {
                row.iter_mut().for_each(|z| *z = zero);
                return;
            }
            row[0] = zero;
            row[n - 1] = zero;
            for i in 1..n - 1 {
                let k = j * n + i;
                row[i] = src[k] * center - (src[k + 1] + src[k - 1] + src[k + n] + src[k - n]) * off;
            }
        });
    };
    let mut x = vec![zero; grid.len()];
    let mut r = b.values().to_vec();
    let b_norm = dot(&r, &r).sqrt();
    if b_norm == T::zero() {
        return Ok((ComplexField::from_values_unchecked(grid, x), 0));
    }
    let mut d = r.clone();
    let mut ad = vec![zero; grid.len()];
    let mut rr = b_norm * b_norm;
    let target = rel_tol * b_norm;
    let mut iterations = INNER_MAX_ITER;
    for it in 0..INNER_MAX_ITER {
        if rr.sqrt() <= target {
            iterations = it;
            break;
        }
        apply(&d, &mut ad);
        let alpha = rr / dot(&d, &ad);
        x.par_iter_mut().zip(d.par_iter()).for_each(|(xk, dk)| *xk = *xk + *dk * alpha);
        r.par_iter_mut().zip(ad.par_iter()).for_each(|(rk, ak)| *rk = *rk - *ak * alpha);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        d.par_iter_mut().zip(r.par_iter()).for_each(|(dk, rk)| *dk = *rk + *dk * beta);
        rr = rr_new;
    }
    if rr.sqrt() <= target {
        Ok((ComplexField::from_values_unchecked(grid, x), iterations))
    } else {
        Err(Error::InnerSolverStalled)
    }
}

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct TruncatedCg<T: Real> {
    pub step: ComplexField<T>,
    pub iterations: usize,
    pub negative_curvature: bool,
}

/// Truncated CG for `A s = b` with `A` self-adjoint under `Re <.,.>`. Stops at
/// the relative tolerance, at the iteration cap, or on non-positive
/// curvature (returning the last iterate, or `b` itself if none).
pub(crate) fn truncated_cg<T: Real, A>(apply: A, b: &ComplexField<T>, rel_tol: T, max_iter: usize) -> TruncatedCg<T>
where
    A: Fn(&ComplexField<T>) -> ComplexField<T>,
{
    let mut x = ComplexField::zeros(*b.grid());
    let mut r = b.clone();
    let mut d = r.clone();
    let mut rr = r.real_inner(&r);
    let target = rel_tol * rr.sqrt();
    for it in 0..max_iter {
        if rr.sqrt() <= target {
            return TruncatedCg {
                step: x,
                iterations: it,
                negative_curvature: false,
            };
        }
        let ad = apply(&d);
        let curv = d.real_inner(&ad);
        if !(curv > T::zero()) {
            let step = if it == 0 { b.clone() } else { x };
            return TruncatedCg {
                step,
                iterations: it,
                negative_curvature: true,
            };
        }
        let alpha = rr / curv;
        x = x.axpy(Complex::new(alpha, T::zero()), &d);
        r = r.axpy(Complex::new(-alpha, T::zero()), &ad);
        let rr_new = r.real_inner(&r);
        d = r.axpy(Complex::new(rr_new / rr, T::zero()), &d);
        rr = rr_new;
    }
    TruncatedCg {
        step: x,
        iterations: max_iter,
        negative_curvature: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{laplacian, GridSpec};

    #[test]
    fn shifted_laplacian_inverse() {
        let grid = GridSpec::<f64>::new(5.0, 64).unwrap();
        let x_true = ComplexField::from_fn(grid, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Complex::new((-r2).exp(), x[0] * (-r2 / 2.0).exp())
        });
        let dt = 0.3;
        let b = x_true.axpy(Complex::new(-dt, 0.0), &laplacian(&x_true));
        let (x, iters) = solve_shifted_laplacian(&b, dt, 1e-12).unwrap();
        assert!(iters > 0);
        assert!(x.sub(&x_true).l2_norm() < 1e-10);
    }

    #[test]
    fn truncated_cg_flags_indefinite_operators() {
        let grid = GridSpec::<f64>::new(5.0, 32).unwrap();
        let b = ComplexField::from_fn(grid, |x| Complex::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0));
        let out = truncated_cg(|d: &ComplexField<f64>| d.scale(Complex::new(-1.0, 0.0)), &b, 1e-8, 50);
        assert!(out.negative_curvature);
        assert_eq!(out.iterations, 0);
        let out = truncated_cg(|d: &ComplexField<f64>| d.scale(Complex::new(2.0, 0.0)), &b, 1e-8, 50);
        assert!(!out.negative_curvature);
        assert!(out.step.sub(&b.scale(Complex::new(0.5, 0.0))).l2_norm() < 1e-12);
    }
}
