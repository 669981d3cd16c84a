//! GP energy, multiplier and Euler-Lagrange residual on a grid.
//!
//! The kinetic part is the Dirichlet form of the five-point Laplacian and the
//! rotation uses the centered angular derivative `K`, so with
//! `H = -Lap + V + i Omega K` the energy is `<u, H u> - interaction` and the
//! discrete EL operator is exactly its constrained gradient.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    angular_derivative, det_sum, dirichlet_energy, gradient, laplacian, pow_abs, ComplexField, RealField,
};
use crate::potentials::{sample_potential, Potential};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub kinetic: T,
    pub potential: T,
    /// `2 rho^(p-1) / (p+1) int |u|^(p+1)`
    pub interaction: T,
    /// `Omega int x^perp . (iu, grad u)`
    pub momentum: T,
    pub total: T,
}

impl<T: Real> EnergyBreakdown<T> {
    fn from_parts(kinetic: T, potential: T, interaction: T, momentum: T) -> Result<Self> {
        let total = kinetic + potential - interaction - momentum;
        let b = EnergyBreakdown {
            kinetic,
            potential,
            interaction,
            momentum,
            total,
        };
        if [kinetic, potential, interaction, momentum, total].iter().all(|x| x.is_finite()) {
            Ok(b)
        } else {
            Err(Error::NonFiniteEnergy)
        }
    }

    /// Magnitude of the individual parts; used as the round-off scale when
    /// comparing totals.
    pub fn scale(&self) -> T {
        self.kinetic.abs() + self.potential.abs() + self.interaction.abs() + self.momentum.abs()
    }
}

/// One line of the energy CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub rho: f64,
    pub omega: f64,
    pub p: f64,
    pub energy: EnergyBreakdown<f64>,
    pub mu: f64,
    pub residual: f64,
}

impl EnergyRow {
    pub const HEADER: &'static str = "rho,Omega,p,kinetic,potential,interaction,momentum,total,mu,residual";

    pub fn to_csv(&self) -> String {
        let e = &self.energy;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.rho, self.omega, self.p, e.kinetic, e.potential, e.interaction, e.momentum, e.total, self.mu, self.residual
        )
    }
}

pub(crate) fn check_exponent<T: Real>(p: T) -> Result<()> {
    if p > T::one() && p < T::of(3.0) {
        Ok(())
    } else {
        Err(Error::ExponentOutOfRange(p.as_f64()))
    }
}

/// The discretized functional: sampled potential plus physical parameters.
#[derive(Debug, Clone)]
pub struct GpProblem<T: Real> {
    v: RealField<T>,
    omega: T,
    rho: T,
    p: T,
    coupling: T,
}

impl<T: Real> GpProblem<T> {
    pub fn new(v: RealField<T>, omega: T, rho: T, p: T) -> Result<Self> {
        check_exponent(p)?;
        if !(rho > T::zero()) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        if !(omega >= T::zero()) || !omega.is_finite() {
            return Err(Error::InvalidParameter(format!("Omega must be nonnegative, got {omega}")));
        }
        Ok(GpProblem {
            v,
            omega,
            rho,
            p,
            coupling: rho.powf(p - T::one()),
        })
    }

    pub fn from_potential<P: Potential<T> + ?Sized>(
        grid: crate::grid::GridSpec<T>,
        v: &P,
        omega: T,
        rho: T,
        p: T,
    ) -> Result<Self> {
        Self::new(sample_potential(v, grid), omega, rho, p)
    }

    #[inline]
    pub fn potential(&self) -> &RealField<T> {
        &self.v
    }
    #[inline]
    pub fn omega(&self) -> T {
        self.omega
    }
    #[inline]
    pub fn rho(&self) -> T {
        self.rho
    }
    #[inline]
    pub fn p(&self) -> T {
        self.p
    }
    /// `rho^(p-1)`
    #[inline]
    pub fn coupling(&self) -> T {
        self.coupling
    }

    fn check_grid(&self, u: &ComplexField<T>) -> Result<()> {
        if u.grid().matches(self.v.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `int |u|^(p+1)`
    pub fn power_integral(&self, u: &ComplexField<T>) -> T {
        let q = self.p + T::one();
        let vals = u.values();
        det_sum(vals.len(), |k| pow_abs(vals[k].norm(), q)) * u.grid().cell_area()
    }

    pub fn energy(&self, u: &ComplexField<T>) -> Result<EnergyBreakdown<T>> {
        self.check_grid(u)?;
        let area = u.grid().cell_area();
        let vals = u.values();
        let v = self.v.values();
        let kinetic = dirichlet_energy(u);
        let potential = det_sum(vals.len(), |k| v[k] * vals[k].norm_sqr()) * area;
        let interaction = T::of(2.0) * self.coupling / (self.p + T::one()) * self.power_integral(u);
        let momentum = if self.omega == T::zero() {
            T::zero()
        } else {
            self.omega * u.inner(&angular_derivative(u)).im
        };
        EnergyBreakdown::from_parts(kinetic, potential, interaction, momentum)
    }

    /// `mu = E - (p-1)/(p+1) rho^(p-1) int |u|^(p+1)`.
    pub fn multiplier(&self, u: &ComplexField<T>, total: T) -> T {
        total - (self.p - T::one()) / (self.p + T::one()) * self.coupling * self.power_integral(u)
    }

    /// `H u = -Lap u + V u + i Omega K u`.
    pub fn apply_linear(&self, u: &ComplexField<T>) -> ComplexField<T> {
        let lap = laplacian(u);
        let rot = (self.omega != T::zero()).then(|| angular_derivative(u));
        let v = self.v.values();
        let src = u.values();
        let l = lap.values();
        let i_omega = Complex::new(T::zero(), self.omega);
        let mut out = vec![Complex::new(T::zero(), T::zero()); src.len()];
        out.par_iter_mut().enumerate().for_each(|(k, o)| {
            let mut z = src[k] * v[k] - l[k];
            if let Some(r) = &rot {
                z = z + r.values()[k] * i_omega;
            }
            *o = z;
        });
        let mut f = ComplexField::from_values_unchecked(*u.grid(), out);
        zero_ring(&mut f);
        f
    }

    /// `rho^(p-1) |u|^(p-1) u`
    pub fn nonlinearity(&self, u: &ComplexField<T>) -> ComplexField<T> {
        let g = self.coupling;
        let q = self.p - T::one();
        u.map(|z| z * (g * pow_abs(z.norm(), q)))
    }

    /// EL operator `H u - mu u - rho^(p-1) |u|^(p-1) u`.
    pub fn el_operator(&self, u: &ComplexField<T>, mu: T) -> ComplexField<T> {
        let hu = self.apply_linear(u);
        let g = self.coupling;
        let q = self.p - T::one();
        let src = u.values();
        let mut out = hu.into_values();
        out.par_iter_mut().enumerate().for_each(|(k, o)| {
            let z = src[k];
            *o = *o - z * (mu + g * pow_abs(z.norm(), q));
        });
        let mut f = ComplexField::from_values_unchecked(*u.grid(), out);
        zero_ring(&mut f);
        f
    }

    /// `||EL(u)||_2 / ||Lap u||_2`.
    pub fn el_residual(&self, u: &ComplexField<T>, mu: T) -> Result<T> {
        self.check_grid(u)?;
        let r = self.el_operator(u, mu).l2_norm();
        let scale = laplacian(u).l2_norm();
        if scale > T::zero() {
            Ok(r / scale)
        } else {
            Ok(r)
        }
    }
}

fn zero_ring<T: Real>(f: &mut ComplexField<T>) {
    let grid = *f.grid();
    let n = grid.n();
    let zero = Complex::new(T::zero(), T::zero());
    let vals = f.values_mut();
    for i in 0..n {
        vals[i] = zero;
        vals[(n - 1) * n + i] = zero;
        vals[i * n] = zero;
        vals[i * n + n - 1] = zero;
    }
}

pub fn gp_energy<T: Real, P: Potential<T> + ?Sized>(
    u: &ComplexField<T>,
    v: &P,
    omega: T,
    rho: T,
    p: T,
) -> Result<EnergyBreakdown<T>> {
    GpProblem::from_potential(*u.grid(), v, omega, rho, p)?.energy(u)
}

/// `int |grad v|^2 - 2 rho^(p-1)/(p+1) int |v|^(p+1)`.
pub fn hat_energy<T: Real>(v: &RealField<T>, rho: T, p: T) -> Result<T> {
    check_exponent(p)?;
    let u = v.to_complex();
    let q = p + T::one();
    let vals = u.values();
    let power = det_sum(vals.len(), |k| pow_abs(vals[k].norm(), q)) * u.grid().cell_area();
    Ok(dirichlet_energy(&u) - T::of(2.0) * rho.powf(p - T::one()) / q * power)
}

pub fn lagrange_multiplier<T: Real>(u: &ComplexField<T>, energy_total: T, rho: T, p: T) -> T {
    let q = p + T::one();
    let vals = u.values();
    let power = det_sum(vals.len(), |k| pow_abs(vals[k].norm(), q)) * u.grid().cell_area();
    energy_total - (p - T::one()) / q * rho.powf(p - T::one()) * power
}

pub fn el_residual<T: Real, P: Potential<T> + ?Sized>(
    u: &ComplexField<T>,
    mu: T,
    v: &P,
    omega: T,
    rho: T,
    p: T,
) -> Result<T> {
    GpProblem::from_potential(*u.grid(), v, omega, rho, p)?.el_residual(u, mu)
}

#[derive(Debug, Clone)]
pub struct DiamagneticCheck<T> {
    /// Largest nodewise error of
    /// `|grad u|^2 - Omega x^perp.(iu, grad u) + Omega^2/4 |x|^2 |u|^2 = |(grad - iA) u|^2`.
    pub max_identity_error: T,
    /// Largest nodewise excess of `|grad |u||^2` over `|(grad - iA) u|^2`.
    pub max_violation: T,
    /// `|(grad - iA) u|^2 - |grad |u||^2` per node.
    pub gap: RealField<T>,
}

/// Nodewise diamagnetic identity and inequality with `A = Omega x^perp / 2`,
/// all gradients centered.
pub fn diamagnetic_check<T: Real>(u: &ComplexField<T>, omega: T) -> DiamagneticCheck<T> {
    let grid = *u.grid();
    let (g1, g2) = gradient(u);
    let modulus = u.modulus().to_complex();
    let (m1, m2) = gradient(&modulus);
    let half = omega / T::of(2.0);
    let vals = u.values();
    let mut identity_err = T::zero();
    let mut violation = T::zero();
    let mut gap = vec![T::zero(); grid.len()];
    for k in 0..grid.len() {
        let (i, j) = grid.node(k);
        if grid.is_boundary(i, j) {
            continue;
        }
        let x = grid.point(i, j);
        let a = [-x[1] * half, x[0] * half];
        let z = vals[k];
        let d = [g1.values()[k], g2.values()[k]];
        let grad_sq = d[0].norm_sqr() + d[1].norm_sqr();
        // (iu, grad u) = Im(conj(u) grad u)
        let current = [(z.conj() * d[0]).im, (z.conj() * d[1]).im];
        let lhs = grad_sq - omega * (-x[1] * current[0] + x[0] * current[1])
            + omega * omega / T::of(4.0) * (x[0] * x[0] + x[1] * x[1]) * z.norm_sqr();
        let iz = Complex::new(T::zero(), T::one()) * z;
        let cov = [d[0] - iz * a[0], d[1] - iz * a[1]];
        let rhs = cov[0].norm_sqr() + cov[1].norm_sqr();
        let scale = grad_sq + (a[0] * a[0] + a[1] * a[1]) * z.norm_sqr() + T::min_positive_value();
        identity_err = identity_err.max((lhs - rhs).abs() / scale);
        let abs_grad = m1.values()[k].re * m1.values()[k].re + m2.values()[k].re * m2.values()[k].re;
        gap[k] = rhs - abs_grad;
        violation = violation.max(abs_grad - rhs);
    }
    DiamagneticCheck {
        max_identity_error: identity_err,
        max_violation: violation,
        gap: RealField::from_values(grid, gap).unwrap_or_else(|_| RealField::zeros(grid)),
    }
}
