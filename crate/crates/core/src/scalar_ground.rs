//! Positive radial ground state of `-Lap w + w - w^p = 0` in the plane.
//!
//! The radial ODE `w'' + w'/r - w + w^p = 0`, `w'(0) = 0`, is integrated
//! with fixed-step RK4 and the central value `w(0)` is found by bisection
//! between trajectories that cross zero (central value too large) and
//! trajectories that turn upward while still positive (too small). Double
//! precision loses the decaying branch after a dozen decay lengths, so the
//! far tail is replaced by the decaying solution `K0` of the linearized
//! equation, matched where both bracketing trajectories still agree.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dirichlet_energy, integrate, GridSpec, RealField};
use crate::scalar::{Point, Real};

/// Truncation radius and radial step for the shooting integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions<T> {
    pub r_max: T,
    pub step: T,
}

impl<T: Real> ShootingOptions<T> {
    /// Default truncation for exponent `p`: radius 24, widened as `p -> 1`
    /// where the profile approaches the Gaussian `e^{1 - (p-1) r^2/4}`;
    /// 20000 radial steps.
    pub fn for_exponent(p: T) -> Self {
        let gaussian_reach = T::of(1.5) * (T::of(80.0) / (p - T::one())).sqrt();
        let r_max = T::of(24.0).max(gaussian_reach);
        ShootingOptions {
            r_max,
            step: r_max / T::of(20000.0),
        }
    }
}

/// Sampled radial profile `w(r_k)`, `r_k = k h`, with its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile<T> {
    pub p: T,
    pub r_max: T,
    pub h: T,
    pub values: Vec<T>,
    pub derivatives: Vec<T>,
    /// `w(0)`.
    pub w0: T,
    /// `||w||_2^2 = 2 pi int w^2 r dr`.
    pub a_star: T,
    /// Radius beyond which the linearized `K0` tail is used.
    pub r_match: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// Crossed zero: central value too large.
    Overshoot,
    /// Turned upward while positive: central value too small.
    Undershoot,
    /// Reached `r_max` positive and decreasing.
    Undecided,
}

struct Trajectory<T> {
    w: Vec<T>,
    dw: Vec<T>,
    outcome: Shot,
}

#[inline]
fn signed_pow<T: Real>(w: T, p: T) -> T {
    if w > T::zero() {
        w.powf(p)
    } else if w < T::zero() {
        -(-w).powf(p)
    } else {
        T::zero()
    }
}

/// Integrates the radial IVP from `w(0) = w0`. When `record` is false only
/// the classification is kept.
fn shoot<T: Real>(p: T, w0: T, opts: &ShootingOptions<T>, record: bool) -> Trajectory<T> {
    let h = opts.step;
    let steps = (opts.r_max / h).round().to_usize().unwrap();
    let rhs = |r: T, w: T, v: T| -> (T, T) { (v, -v / r + w - signed_pow(w, p)) };

    let mut w_rec = Vec::new();
    let mut dw_rec = Vec::new();
    if record {
        w_rec.reserve(steps + 1);
        dw_rec.reserve(steps + 1);
        w_rec.push(w0);
        dw_rec.push(T::zero());
    }
    // series start: w = w0 + (w0 - w0^p) r^2/4
    let curv = w0 - signed_pow(w0, p);
    let mut w = w0 + curv * h * h / T::of(4.0);
    let mut v = curv * h / T::of(2.0);
    let half = T::of(0.5);
    let sixth = T::one() / T::of(6.0);
    let two = T::of(2.0);
    let mut outcome = Shot::Undecided;
    for k in 1..=steps {
        if record {
            w_rec.push(w);
            dw_rec.push(v);
        }
        if w <= T::zero() {
            outcome = Shot::Overshoot;
            break;
        }
        if v > T::zero() {
            outcome = Shot::Undershoot;
            break;
        }
        if k == steps {
            break;
        }
        let r = T::from_usize(k).unwrap() * h;
        let (k1w, k1v) = rhs(r, w, v);
        let (k2w, k2v) = rhs(r + half * h, w + half * h * k1w, v + half * h * k1v);
        let (k3w, k3v) = rhs(r + half * h, w + half * h * k2w, v + half * h * k2v);
        let (k4w, k4v) = rhs(r + h, w + h * k3w, v + h * k3v);
        w = w + h * sixth * (k1w + two * k2w + two * k3w + k4w);
        v = v + h * sixth * (k1v + two * k2v + two * k3v + k4v);
        if !w.is_finite() || !v.is_finite() {
            outcome = Shot::Overshoot;
            break;
        }
    }
    Trajectory {
        w: w_rec,
        dw: dw_rec,
        outcome,
    }
}

/// Exponentially scaled modified Bessel functions `e^r K0(r)`, `e^r K1(r)`
/// from `K_nu(r) = int_0^inf exp(-r cosh t) cosh(nu t) dt` (trapezoid rule,
/// spectrally accurate for this integrand).
pub(crate) fn scaled_bessel_k01<T: Real>(r: T) -> (T, T) {
    let dt = T::of(0.02);
    let t_end = (T::one() + T::of(45.0) / r).acosh();
    let m = (t_end / dt).ceil().to_usize().unwrap().max(8);
    let mut k0 = T::of(0.5);
    let mut k1 = T::of(0.5);
    for j in 1..=m {
        let t = T::from_usize(j).unwrap() * dt;
        let e = (-r * (t.cosh() - T::one())).exp();
        k0 = k0 + e;
        k1 = k1 + e * t.cosh();
    }
    (k0 * dt, k1 * dt)
}

/// Trapezoid rule for `2 pi int f(r) r dr` on the profile nodes.
fn radial_integral<T: Real, F: Fn(usize) -> T>(h: T, len: usize, f: F) -> T {
    let mut s = T::zero();
    for k in 1..len {
        let r = T::from_usize(k).unwrap() * h;
        let weight = if k + 1 == len { T::of(0.5) } else { T::one() };
        s = s + weight * f(k) * r;
    }
    T::of(2.0) * T::PI() * h * s
}

fn check_exponent<T: Real>(p: T) -> Result<()> {
    // p = 3 (the mass-critical Townes profile) is accepted here as a reference case.
    if !(p > T::one() && p <= T::of(3.0)) {
        return Err(Error::ExponentOutOfRange(p.as_f64()));
    }
    Ok(())
}

/// Solves for the ground state with default radius and step.
pub fn solve_w<T: Real>(p: T, tol: T) -> Result<RadialProfile<T>> {
    check_exponent(p)?;
    solve_w_with(p, tol, &ShootingOptions::for_exponent(p))
}

pub fn solve_w_with<T: Real>(p: T, tol: T, opts: &ShootingOptions<T>) -> Result<RadialProfile<T>> {
    check_exponent(p)?;
    if !(tol > T::zero()) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must be positive")));
    }
    if !(opts.step > T::zero()) || opts.step > T::of(1e-3) * opts.r_max {
        return Err(Error::InvalidParameter(format!(
            "radial step {} must lie in (0, 1e-3 r_max]",
            opts.step
        )));
    }

    let (lo, hi) = bracket(p, opts)?;
    let (lo, hi, _) = bisect(p, lo, hi, opts);

    let under = shoot(p, lo, opts, true);
    let over = shoot(p, hi, opts, true);
    let w0 = T::of(0.5) * (lo + hi);
    build_profile(p, w0, opts, &under, &over, tol)
}

/// Bisection on the central value until the bracket is below `1e-12 w0`
/// (or the float resolution). Returns the final bracket and the step count.
fn bisect<T: Real>(p: T, mut lo: T, mut hi: T, opts: &ShootingOptions<T>) -> (T, T, usize) {
    let floor = T::of(4.0) * T::epsilon();
    let mut steps = 0;
    loop {
        let width = hi - lo;
        if width <= T::of(1e-12) * hi || width <= floor * hi {
            break;
        }
        let mid = lo + T::of(0.5) * width;
        if mid <= lo || mid >= hi {
            break;
        }
        steps += 1;
        match shoot(p, mid, opts, false).outcome {
            Shot::Overshoot => hi = mid,
            Shot::Undershoot => lo = mid,
            Shot::Undecided => return (mid, mid, steps),
        }
    }
    (lo, hi, steps)
}

/// Brackets the central value in `[1e-3, 1e3]`: an undershooting value below
/// an overshooting one.
fn bracket<T: Real>(p: T, opts: &ShootingOptions<T>) -> Result<(T, T)> {
    let factor = T::of(1.25);
    let mut prev: Option<(T, Shot)> = None;
    let mut w0 = T::of(1e-3);
    while w0 <= T::of(1e3) {
        let shot = shoot(p, w0, opts, false).outcome;
        if let Some((prev_w0, prev_shot)) = prev {
            if prev_shot != Shot::Overshoot && shot == Shot::Overshoot {
                return Ok((prev_w0, w0));
            }
        }
        prev = Some((w0, shot));
        w0 = w0 * factor;
    }
    Err(Error::NoBracket)
}

fn build_profile<T: Real>(
    p: T,
    w0: T,
    opts: &ShootingOptions<T>,
    under: &Trajectory<T>,
    over: &Trajectory<T>,
    tol: T,
) -> Result<RadialProfile<T>> {
    let h = opts.step;
    let steps = (opts.r_max / h).round().to_usize().unwrap();
    let common = under.w.len().min(over.w.len());
    // last node where the bracketing trajectories agree and are usable
    let mut matched = 0;
    for k in 1..common {
        let (a, b) = (under.w[k], over.w[k]);
        let avg = T::of(0.5) * (a + b);
        if !(a > T::zero() && b > T::zero()) || (a - b).abs() > T::of(1e-6) * avg {
            break;
        }
        if under.dw[k] >= T::zero() || over.dw[k] >= T::zero() {
            break;
        }
        matched = k;
    }
    // back off a little so the match sits on the clean part of the branch,
    // unless the trajectories agree all the way out
    let matched = if common == steps + 1 && matched + 1 >= common {
        common - 1
    } else {
        matched.saturating_sub(matched / 50)
    };
    if matched < 10 {
        return Err(Error::ShootingFailed("bracketing trajectories never agree".into()));
    }

    let mut values = Vec::with_capacity(steps + 1);
    let mut derivatives = Vec::with_capacity(steps + 1);
    for k in 0..=matched {
        values.push(T::of(0.5) * (under.w[k] + over.w[k]));
        derivatives.push(T::of(0.5) * (under.dw[k] + over.dw[k]));
    }
    let r_match = T::from_usize(matched).unwrap() * h;
    let w_match = values[matched];
    let (k0_match, _) = scaled_bessel_k01(r_match);
    for k in matched + 1..=steps {
        let r = T::from_usize(k).unwrap() * h;
        let (k0, k1) = scaled_bessel_k01(r);
        let decay = (r_match - r).exp();
        values.push(w_match * decay * k0 / k0_match);
        derivatives.push(-w_match * decay * k1 / k0_match);
    }

    if values.windows(2).any(|s| !(s[1] < s[0])) || values.iter().any(|v| !(*v > T::zero())) {
        return Err(Error::ShootingFailed("profile is not positive and decreasing".into()));
    }

    let a_star = radial_integral(h, values.len(), |k| values[k] * values[k]);
    let profile = RadialProfile {
        p,
        r_max: T::from_usize(steps).unwrap() * h,
        h,
        values,
        derivatives,
        w0,
        a_star,
        r_match,
    };
    let res = identities_residual(&profile);
    if res.r1 > tol || res.r2 > tol {
        return Err(Error::ShootingFailed(format!(
            "identity residuals ({}, {}) exceed tol {}",
            res.r1, res.r2, tol
        )));
    }
    Ok(profile)
}

impl<T: Real> RadialProfile<T> {
    /// `w(r)` by linear interpolation; zero beyond `r_max`.
    pub fn eval(&self, r: T) -> T {
        let r = r.abs();
        if r >= self.r_max {
            return T::zero();
        }
        let s = r / self.h;
        let k = s.floor().to_usize().unwrap().min(self.values.len() - 2);
        let t = s - T::from_usize(k).unwrap();
        self.values[k] * (T::one() - t) + self.values[k + 1] * t
    }

    /// `w'(r)` by linear interpolation; zero beyond `r_max`.
    pub fn eval_derivative(&self, r: T) -> T {
        let r = r.abs();
        if r >= self.r_max {
            return T::zero();
        }
        let s = r / self.h;
        let k = s.floor().to_usize().unwrap().min(self.values.len() - 2);
        let t = s - T::from_usize(k).unwrap();
        self.derivatives[k] * (T::one() - t) + self.derivatives[k + 1] * t
    }

    pub fn radii(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.values.len()).map(move |k| T::from_usize(k).unwrap() * self.h)
    }

    /// `int |grad w|^2` over the plane.
    pub fn kinetic(&self) -> T {
        radial_integral(self.h, self.values.len(), |k| self.derivatives[k] * self.derivatives[k])
    }

    /// `int w^q` over the plane.
    pub fn power_integral(&self, q: T) -> T {
        radial_integral(self.h, self.values.len(), |k| self.values[k].powf(q))
    }

    /// `int |x|^2 w^2` over the plane.
    pub fn second_moment(&self) -> T {
        radial_integral(self.h, self.values.len(), |k| {
            let r = T::from_usize(k).unwrap() * self.h;
            r * r * self.values[k] * self.values[k]
        })
    }

    /// Near `p = 1` the profile widens like `(p - 1)^(-1/2)` and needs very
    /// large domains.
    pub fn is_stiff(&self) -> bool {
        self.p - T::one() < T::of(1e-2)
    }

    /// Radius where `w` drops to half its central value.
    pub fn half_width(&self) -> T {
        let half = T::of(0.5) * self.w0;
        let k = self.values.iter().position(|&v| v < half).unwrap_or(self.values.len() - 1);
        if k == 0 {
            return T::zero();
        }
        let (a, b) = (self.values[k - 1], self.values[k]);
        (T::from_usize(k - 1).unwrap() + (a - half) / (a - b)) * self.h
    }

    /// Writes `r,w` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "r,w")?;
        for (r, w) in self.radii().zip(self.values.iter()) {
            writeln!(out, "{:.6},{:.17e}", r.as_f64(), w.as_f64())?;
        }
        Ok(())
    }

    pub fn summary(&self) -> ProfileSummary {
        let res = identities_residual(self);
        ProfileSummary {
            p: self.p.as_f64(),
            w0: self.w0.as_f64(),
            a_star: self.a_star.as_f64(),
            r1: res.r1.as_f64(),
            r2: res.r2.as_f64(),
        }
    }
}

/// JSON summary of a solved profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub p: f64,
    pub w0: f64,
    pub a_star: f64,
    pub r1: f64,
    pub r2: f64,
}

/// Relative residuals of the virial and Pohozaev identities
/// `int |grad w|^2 = (p-1)/(p+1) int w^(p+1) = (p-1)/2 int w^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual<T> {
    pub r1: T,
    pub r2: T,
}

pub fn identities_residual<T: Real>(profile: &RadialProfile<T>) -> IdentityResidual<T> {
    let p = profile.p;
    let kin = profile.kinetic();
    let pot = profile.power_integral(p + T::one());
    let mass = radial_integral(profile.h, profile.values.len(), |k| profile.values[k] * profile.values[k]);
    let r1 = (kin - (p - T::one()) / (p + T::one()) * pot).abs() / kin;
    let r2 = (kin - (p - T::one()) / T::of(2.0) * mass).abs() / kin;
    IdentityResidual { r1, r2 }
}

/// Sharp Gagliardo-Nirenberg constant and the equality check at `u = w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnConstant<T> {
    /// `((p+1)/2) (2/(p-1))^((p-1)/2) / ||w||_2^(p-1)`.
    pub constant: T,
    /// `||w||_{p+1}^{p+1} / (C ||grad w||^(p-1) ||w||^2)`; one at equality.
    pub equality_ratio: T,
}

impl<T: Real> GnConstant<T> {
    pub fn equality_holds(&self) -> bool {
        (self.equality_ratio - T::one()).abs() < T::of(1e-3)
    }
}

pub fn gn_constant<T: Real>(profile: &RadialProfile<T>) -> GnConstant<T> {
    let p = profile.p;
    let one = T::one();
    let two = T::of(2.0);
    let e = (p - one) / two;
    let constant = ((p + one) / two) * (two / (p - one)).powf(e) / profile.a_star.powf(e);
    let lhs = profile.power_integral(p + one);
    let rhs = constant * profile.kinetic().powf(e) * profile.a_star;
    GnConstant {
        constant,
        equality_ratio: lhs / rhs,
    }
}

/// Ratio `||u||_{p+1}^{p+1} / (C ||grad u||_2^(p-1) ||u||_2^2)` of a real
/// grid function; at most one when the inequality holds.
pub fn gn_ratio<T: Real>(u: &RealField<T>, p: T, constant: T) -> T {
    let one = T::one();
    let uc = u.to_complex();
    let kin = dirichlet_energy(&uc);
    let mass = integrate(&u.map(|v| v * v));
    let lq = integrate(&u.map(|v| v.abs().powf(p + one)));
    lq / (constant * kin.powf((p - one) / T::of(2.0)) * mass)
}

/// Grid samples of `w(scale |x - center|)`.
#[derive(Debug, Clone)]
pub struct GridSample<T> {
    pub field: RealField<T>,
    /// The profile is still above `1e-6 w0` on the grid boundary.
    pub truncated: bool,
}

pub fn sample_to_grid<T: Real>(
    profile: &RadialProfile<T>,
    grid: GridSpec<T>,
    center: Point<T>,
    scale: T,
) -> Result<GridSample<T>> {
    if !(scale > T::zero()) {
        return Err(Error::InvalidParameter(format!("scale = {scale} must be positive")));
    }
    let field = RealField::from_fn(grid, |x| {
        let dx = x[0] - center[0];
        let dy = x[1] - center[1];
        profile.eval(scale * (dx * dx + dy * dy).sqrt())
    });
    let n = grid.n();
    let edge = T::of(1e-6) * profile.w0;
    let truncated = (0..n).any(|k| {
        field.at(k, 0) > edge || field.at(k, n - 1) > edge || field.at(0, k) > edge || field.at(n - 1, k) > edge
    });
    Ok(GridSample { field, truncated })
}
