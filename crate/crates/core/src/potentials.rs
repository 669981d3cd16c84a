//! Trapping potentials, the rotating-frame effective potential
//! `V_Omega = V - Omega^2 |x|^2 / 4`, the critical speed and the
//! concentration functional `H(y) = int h(x + y) w(x)^2 dx`.

use crate::error::{Error, Result};
use crate::grid::{det_sum, GridSpec, RealField};
use crate::scalar::{norm2, Point, Real};
use crate::scalar_ground::RadialProfile;

/// Anything that can be evaluated pointwise as a potential.
pub trait Potential<T: Real>: Sync {
    fn value(&self, x: Point<T>) -> T;

    fn sample(&self, grid: GridSpec<T>) -> RealField<T>
    where
        Self: Sized,
    {
        RealField::from_fn(grid, |x| self.value(x))
    }
}

/// Samples any (possibly unsized) potential on a grid.
pub fn sample_potential<T: Real, P: Potential<T> + ?Sized>(v: &P, grid: GridSpec<T>) -> RealField<T> {
    RealField::from_fn(grid, |x| v.value(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind<T> {
    /// `a |x|^2`
    Harmonic { a: T },
    /// `a1 x1^2 + a2 x2^2`
    Anisotropic { a1: T, a2: T },
    /// `(c1 x1^2 + c2 x2^2)^(s/2) + quad |x|^2 + quartic |x|^4`; the first
    /// term is the homogeneous core of degree `s`.
    HomogeneousPlus { c1: T, c2: T, s: T, quad: T, quartic: T },
    /// `a |x - center|^2`, an off-center trap (not homogeneous).
    ShiftedHarmonic { a: T, center: Point<T> },
}

/// Declarative trapping potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec<T> {
    kind: PotentialKind<T>,
}

const STAR_DIRECTIONS: usize = 16;

fn star<T: Real>(k: usize, count: usize) -> Point<T> {
    let theta = T::of(2.0) * T::PI() * T::from_usize(k).unwrap() / T::from_usize(count).unwrap();
    [theta.cos(), theta.sin()]
}

impl<T: Real> PotentialSpec<T> {
    /// Builds and validates a potential: `V >= 0` on a sampling star and all
    /// coefficients finite.
    pub fn new(kind: PotentialKind<T>) -> Result<Self> {
        let spec = PotentialSpec { kind };
        let coeffs: Vec<T> = match kind {
            PotentialKind::Harmonic { a } => vec![a],
            PotentialKind::Anisotropic { a1, a2 } => vec![a1, a2],
            PotentialKind::HomogeneousPlus { c1, c2, s, quad, quartic } => {
                if !(s > T::zero()) {
                    return Err(Error::InvalidPotential(format!("homogeneity degree s = {s} must be positive")));
                }
                if c1 < T::zero() || c2 < T::zero() {
                    return Err(Error::InvalidPotential("V(x) >= 0 violated: core coefficients must be nonnegative".into()));
                }
                vec![c1, c2, s, quad, quartic]
            }
            PotentialKind::ShiftedHarmonic { a, center } => vec![a, center[0], center[1]],
        };
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPotential("coefficients must be finite".into()));
        }
        for k in 0..STAR_DIRECTIONS {
            let dir = star::<T>(k, STAR_DIRECTIONS);
            for r in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
                let x = [dir[0] * T::of(r), dir[1] * T::of(r)];
                let v = spec.value(x);
                if !(v >= T::zero()) {
                    return Err(Error::InvalidPotential(format!(
                        "V(x) >= 0 violated at ({}, {}): V = {}",
                        x[0], x[1], v
                    )));
                }
            }
        }
        Ok(spec)
    }

    pub fn harmonic(a: T) -> Result<Self> {
        Self::new(PotentialKind::Harmonic { a })
    }

    pub fn anisotropic(a1: T, a2: T) -> Result<Self> {
        Self::new(PotentialKind::Anisotropic { a1, a2 })
    }

    /// Builds a potential from a kind name, coefficient list and optional
    /// degree, as written in run configurations.
    pub fn from_parts(kind: &str, coeffs: &[T], s: Option<T>) -> Result<Self> {
        let need = |n: usize| -> Result<()> {
            if coeffs.len() != n {
                Err(Error::InvalidPotential(format!(
                    "kind '{kind}' takes {n} coefficients, got {}",
                    coeffs.len()
                )))
            } else {
                Ok(())
            }
        };
        let kind = match kind {
            "harmonic" => {
                need(1)?;
                PotentialKind::Harmonic { a: coeffs[0] }
            }
            "anisotropic" => {
                need(2)?;
                PotentialKind::Anisotropic { a1: coeffs[0], a2: coeffs[1] }
            }
            "homogeneous_plus" => {
                need(4)?;
                let s = s.ok_or_else(|| Error::InvalidPotential("kind 'homogeneous_plus' requires s".into()))?;
                PotentialKind::HomogeneousPlus {
                    c1: coeffs[0],
                    c2: coeffs[1],
                    s,
                    quad: coeffs[2],
                    quartic: coeffs[3],
                }
            }
            "shifted_harmonic" => {
                need(3)?;
                PotentialKind::ShiftedHarmonic {
                    a: coeffs[0],
                    center: [coeffs[1], coeffs[2]],
                }
            }
            other => return Err(Error::InvalidPotential(format!("unknown potential kind '{other}'"))),
        };
        let spec = Self::new(kind)?;
        if let (Some(s), Some(d)) = (s, spec.declared_degree()) {
            if (s - d).abs() > T::of(1e-12) {
                spec.check_homogeneity(s)?;
            }
        }
        Ok(spec)
    }

    #[inline]
    pub fn kind(&self) -> &PotentialKind<T> {
        &self.kind
    }

    /// Degree `s` when the whole potential is homogeneous.
    pub fn declared_degree(&self) -> Option<T> {
        match self.kind {
            PotentialKind::Harmonic { .. } | PotentialKind::Anisotropic { .. } => Some(T::of(2.0)),
            PotentialKind::HomogeneousPlus { s, quad, quartic, .. } => {
                if quad == T::zero() && quartic == T::zero() {
                    Some(s)
                } else {
                    None
                }
            }
            PotentialKind::ShiftedHarmonic { .. } => None,
        }
    }

    /// Checks `h(t x) = t^s h(x)` for `t in {0.5, 2, 3}` on a 16-direction
    /// star at 1e-10 relative accuracy.
    pub fn check_homogeneity(&self, s: T) -> Result<()> {
        for k in 0..STAR_DIRECTIONS {
            let dir = star::<T>(k, STAR_DIRECTIONS);
            for r in [0.3, 1.0, 1.7] {
                let x = [dir[0] * T::of(r), dir[1] * T::of(r)];
                let hx = self.value(x);
                for t in [0.5, 2.0, 3.0] {
                    let t = T::of(t);
                    let lhs = self.value([x[0] * t, x[1] * t]);
                    let rhs = t.powf(s) * hx;
                    let scale = lhs.abs().max(rhs.abs()).max(T::min_positive_value());
                    if (lhs - rhs).abs() > T::of(1e-10) * scale {
                        return Err(Error::InvalidPotential(format!(
                            "not homogeneous of degree {s}: h({t} x) != {t}^{s} h(x) at x = ({}, {})",
                            x[0], x[1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Homogeneous core `h` of `V_Omega` near the origin (the leading term of
    /// `V - Omega^2 |x|^2 / 4`).
    pub fn effective_core(&self, omega: T) -> Result<PotentialSpec<T>> {
        let shift = omega * omega / T::of(4.0);
        let core = match self.kind {
            PotentialKind::Harmonic { a } => PotentialKind::Harmonic { a: a - shift },
            PotentialKind::Anisotropic { a1, a2 } => PotentialKind::Anisotropic {
                a1: a1 - shift,
                a2: a2 - shift,
            },
            PotentialKind::HomogeneousPlus { c1, c2, s, quad, .. } => {
                if s < T::of(2.0) {
                    PotentialKind::HomogeneousPlus {
                        c1,
                        c2,
                        s,
                        quad: T::zero(),
                        quartic: T::zero(),
                    }
                } else if s == T::of(2.0) {
                    PotentialKind::Anisotropic {
                        a1: c1 + quad - shift,
                        a2: c2 + quad - shift,
                    }
                } else {
                    return Err(Error::InvalidPotential(format!(
                        "core degree s = {s} > 2: the rotation term dominates near the origin"
                    )));
                }
            }
            PotentialKind::ShiftedHarmonic { .. } => {
                return Err(Error::InvalidPotential(
                    "V_Omega must vanish only at the origin; an off-center trap has no homogeneous core there".into(),
                ))
            }
        };
        PotentialSpec::new(core).map_err(|e| match e {
            Error::InvalidPotential(msg) => Error::InvalidPotential(format!("V_Omega >= 0 violated (Omega >= Omega*?): {msg}")),
            other => other,
        })
    }

    /// Samples `|V_Omega(x) - h(x)| / |x|^s` on rings of radius 1e-1, 1e-2
    /// and 1e-3; an `o(|x|^s)` remainder shows a decreasing sequence.
    pub fn core_remainder(&self, omega: T) -> Result<[T; 3]> {
        let core = self.effective_core(omega)?;
        let s = core.declared_degree().unwrap_or(T::of(2.0));
        let eff = EffectivePotential::new(*self, omega);
        let mut out = [T::zero(); 3];
        for (slot, r) in out.iter_mut().zip([1e-1, 1e-2, 1e-3]) {
            let r = T::of(r);
            let mut worst = T::zero();
            for k in 0..STAR_DIRECTIONS {
                let d = star::<T>(k, STAR_DIRECTIONS);
                let x = [d[0] * r, d[1] * r];
                worst = worst.max((eff.value(x) - core.value(x)).abs() / r.powf(s));
            }
            *slot = worst;
        }
        Ok(out)
    }
}

impl<T: Real> Potential<T> for PotentialSpec<T> {
    fn value(&self, x: Point<T>) -> T {
        let r2 = x[0] * x[0] + x[1] * x[1];
        match self.kind {
            PotentialKind::Harmonic { a } => a * r2,
            PotentialKind::Anisotropic { a1, a2 } => a1 * x[0] * x[0] + a2 * x[1] * x[1],
            PotentialKind::HomogeneousPlus { c1, c2, s, quad, quartic } => {
                let q = c1 * x[0] * x[0] + c2 * x[1] * x[1];
                let core = if q > T::zero() { q.powf(s / T::of(2.0)) } else { T::zero() };
                core + quad * r2 + quartic * r2 * r2
            }
            PotentialKind::ShiftedHarmonic { a, center } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                a * (dx * dx + dy * dy)
            }
        }
    }
}

/// `V_Omega(x) = V(x) - Omega^2 |x|^2 / 4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivePotential<T> {
    pub base: PotentialSpec<T>,
    pub omega: T,
}

impl<T: Real> EffectivePotential<T> {
    pub fn new(base: PotentialSpec<T>, omega: T) -> Self {
        EffectivePotential { base, omega }
    }
}

impl<T: Real> Potential<T> for EffectivePotential<T> {
    fn value(&self, x: Point<T>) -> T {
        self.base.value(x) - self.omega * self.omega * (x[0] * x[0] + x[1] * x[1]) / T::of(4.0)
    }
}

/// `eps^2 V(eps x)`: the potential seen in blow-up coordinates
/// `v(x) = eps u(eps x)`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledPotential<'a, T, P: ?Sized> {
    pub base: &'a P,
    pub eps: T,
}

impl<'a, T: Real, P: Potential<T> + ?Sized> Potential<T> for ScaledPotential<'a, T, P> {
    fn value(&self, x: Point<T>) -> T {
        self.eps * self.eps * self.base.value([self.eps * x[0], self.eps * x[1]])
    }
}

/// The zero potential.
#[derive(Debug, Clone, Copy, Default)]
pub struct Free;

impl<T: Real> Potential<T> for Free {
    fn value(&self, _x: Point<T>) -> T {
        T::zero()
    }
}

/// Critical rotation speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaStar<T> {
    pub value: T,
    /// Obtained from directional sampling rather than a closed form.
    pub estimated: bool,
}

const OMEGA_SAMPLE_RADIUS: f64 = 64.0;
const OMEGA_SAMPLE_DIRECTIONS: usize = 256;

/// `sup { Omega : V - Omega^2 |x|^2 / 4 -> infinity }`.
pub fn omega_star<T: Real>(v: &PotentialSpec<T>) -> Result<OmegaStar<T>> {
    let two = T::of(2.0);
    let exact = |c: T| -> Result<OmegaStar<T>> {
        if c > T::zero() {
            Ok(OmegaStar {
                value: two * c.sqrt(),
                estimated: false,
            })
        } else {
            Err(Error::SubQuadraticGrowth)
        }
    };
    match *v.kind() {
        PotentialKind::Harmonic { a } => exact(a),
        PotentialKind::Anisotropic { a1, a2 } => exact(a1.min(a2)),
        PotentialKind::ShiftedHarmonic { a, .. } => exact(a),
        PotentialKind::HomogeneousPlus { .. } => {
            let growth = |radius: f64| -> T {
                let r = T::of(radius);
                (0..OMEGA_SAMPLE_DIRECTIONS)
                    .map(|k| {
                        let d = star::<T>(k, OMEGA_SAMPLE_DIRECTIONS);
                        v.value([d[0] * r, d[1] * r]) / (r * r)
                    })
                    .fold(T::infinity(), |m, c| m.min(c))
            };
            let c1 = growth(OMEGA_SAMPLE_RADIUS);
            let c2 = growth(2.0 * OMEGA_SAMPLE_RADIUS);
            let c3 = growth(4.0 * OMEGA_SAMPLE_RADIUS);
            if c3 > T::of(2.0) * c1 {
                // super-quadratic along every ray: no finite critical speed
                return Ok(OmegaStar {
                    value: T::infinity(),
                    estimated: true,
                });
            }
            // Aitken extrapolation of V / R^2 along R = 64, 128, 256
            let (d1, d2) = (c2 - c1, c3 - c2);
            let curvature = d2 - d1;
            let limit = if curvature.abs() > T::of(1e-14) * c1.abs().max(T::one()) {
                c3 - d2 * d2 / curvature
            } else {
                c3
            };
            if !(limit > T::of(1e-3) * c1) || !(c1 > T::zero()) {
                return Err(Error::SubQuadraticGrowth);
            }
            let value = T::of(2.0) * limit.sqrt();
            Ok(OmegaStar { value, estimated: true })
        }
    }
}

/// Quadrature of `H(y) = int h(x + y) w(x - c)^2 dx` on a fixed grid.
pub struct HFunctional<'a, T: Real> {
    h: &'a PotentialSpec<T>,
    density: RealField<T>,
    /// `grad (w^2)` at the grid nodes.
    density_grad: [Vec<T>; 2],
}

impl<'a, T: Real> HFunctional<'a, T> {
    /// Uses a grid of half-width `max(12, r_max)` and spacing close to 0.1.
    pub fn new(h: &'a PotentialSpec<T>, profile: &RadialProfile<T>) -> Result<Self> {
        Self::with_center(h, profile, [T::zero(), T::zero()])
    }

    /// Weight `w(x - center)^2` instead of `w(x)^2`.
    pub fn with_center(h: &'a PotentialSpec<T>, profile: &RadialProfile<T>, center: Point<T>) -> Result<Self> {
        let half_width = T::of(12.0).max(profile.r_max) + norm2(center);
        let n = (T::of(2.0) * half_width / T::of(0.1)).ceil().to_usize().unwrap() + 1;
        let grid = GridSpec::new(half_width, n)?;
        Self::on_grid(h, profile, center, grid)
    }

    pub fn on_grid(h: &'a PotentialSpec<T>, profile: &RadialProfile<T>, center: Point<T>, grid: GridSpec<T>) -> Result<Self> {
        let density = RealField::from_fn(grid, |x| {
            let r = norm2([x[0] - center[0], x[1] - center[1]]);
            let w = profile.eval(r);
            w * w
        });
        let mut g1 = vec![T::zero(); grid.len()];
        let mut g2 = vec![T::zero(); grid.len()];
        for k in 0..grid.len() {
            let (i, j) = grid.node(k);
            let x = grid.point(i, j);
            let d = [x[0] - center[0], x[1] - center[1]];
            let r = norm2(d);
            if r > T::zero() {
                // d(w^2)/dx_l = 2 w w'(r) x_l / r
                let f = T::of(2.0) * profile.eval(r) * profile.eval_derivative(r) / r;
                g1[k] = f * d[0];
                g2[k] = f * d[1];
            }
        }
        Ok(HFunctional {
            h,
            density,
            density_grad: [g1, g2],
        })
    }

    pub fn grid(&self) -> &GridSpec<T> {
        self.density.grid()
    }

    pub fn eval(&self, y: Point<T>) -> T {
        let grid = *self.density.grid();
        let dens = self.density.values();
        det_sum(dens.len(), |k| {
            let (i, j) = grid.node(k);
            let x = grid.point(i, j);
            self.h.value([x[0] + y[0], x[1] + y[1]]) * dens[k]
        }) * grid.cell_area()
    }

    fn gradient(&self, y: Point<T>) -> Point<T> {
        let step = T::of(1e-5);
        let mut g = [T::zero(); 2];
        for (d, slot) in g.iter_mut().enumerate() {
            let mut a = y;
            let mut b = y;
            a[d] = a[d] + step;
            b[d] = b[d] - step;
            *slot = (self.eval(a) - self.eval(b)) / (T::of(2.0) * step);
        }
        g
    }

    fn hessian(&self, y: Point<T>) -> [[T; 2]; 2] {
        let step = T::of(1e-3);
        let mut hess = [[T::zero(); 2]; 2];
        for (d, row) in hess.iter_mut().enumerate() {
            let mut a = y;
            let mut b = y;
            a[d] = a[d] + step;
            b[d] = b[d] - step;
            let (ga, gb) = (self.gradient(a), self.gradient(b));
            for e in 0..2 {
                row[e] = (ga[e] - gb[e]) / (T::of(2.0) * step);
            }
        }
        hess
    }

    /// `int d_j h(x + y) d_l (w^2)(x) dx`, `d_j h` by centered differences
    /// with step `1e-4 (1 + |x|)`.
    pub fn nondegeneracy_matrix(&self, y: Point<T>) -> [[T; 2]; 2] {
        let grid = *self.density.grid();
        let mut m = [[T::zero(); 2]; 2];
        for (jdx, row) in m.iter_mut().enumerate() {
            for (l, entry) in row.iter_mut().enumerate() {
                let dl = &self.density_grad[l];
                *entry = det_sum(grid.len(), |k| {
                    let (i, jj) = grid.node(k);
                    let x = grid.point(i, jj);
                    let z = [x[0] + y[0], x[1] + y[1]];
                    let step = T::of(1e-4) * (T::one() + norm2(z));
                    let mut a = z;
                    let mut b = z;
                    a[jdx] = a[jdx] + step;
                    b[jdx] = b[jdx] - step;
                    let dh = (self.h.value(a) - self.h.value(b)) / (T::of(2.0) * step);
                    dh * dl[k]
                }) * grid.cell_area();
            }
        }
        m
    }
}

/// Value of `H(y) = int h(x + y) w(x)^2 dx`.
pub fn h_functional<T: Real>(h: &PotentialSpec<T>, profile: &RadialProfile<T>, y: Point<T>) -> Result<T> {
    Ok(HFunctional::new(h, profile)?.eval(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HMinimum<T> {
    pub y0: Point<T>,
    pub value: T,
    /// Finite-difference gradient norm at `y0`.
    pub gradient_norm: T,
}

/// Minimizes `H` from a 3x3 grid of starts in `[-2, 2]^2` (Nelder-Mead,
/// then a Newton polish on finite differences).
pub fn minimize_h<T: Real>(h: &PotentialSpec<T>, profile: &RadialProfile<T>) -> Result<HMinimum<T>> {
    let functional = HFunctional::new(h, profile)?;
    minimize_h_functional(&functional)
}

pub fn minimize_h_functional<T: Real>(functional: &HFunctional<'_, T>) -> Result<HMinimum<T>> {
    let h = functional.h;
    if let Some(s) = h.declared_degree() {
        h.check_homogeneity(s)?;
    } else {
        // run the star test at degree 2 so the error names the violated invariant
        h.check_homogeneity(T::of(2.0))?;
    }
    let f = |y: Point<T>| functional.eval(y);
    let mut results: Vec<(Point<T>, T)> = Vec::with_capacity(9);
    for a in [-2.0, 0.0, 2.0] {
        for b in [-2.0, 0.0, 2.0] {
            let y = nelder_mead(&f, [T::of(a), T::of(b)], T::of(0.5), T::of(1e-10), 2000);
            results.push((y, f(y)));
        }
    }
    for (ia, a) in results.iter().enumerate() {
        for b in results.iter().skip(ia + 1) {
            let dist = norm2([a.0[0] - b.0[0], a.0[1] - b.0[1]]);
            let scale = a.1.abs().max(b.1.abs()).max(T::one());
            if dist > T::of(1e-3) && (a.1 - b.1).abs() <= T::of(1e-8) * scale {
                return Err(Error::MinimumNotUnique);
            }
        }
    }
    let (mut y, mut value) = results
        .iter()
        .copied()
        .fold(results[0], |best, cur| if cur.1 < best.1 { cur } else { best });

    // Newton polish
    for _ in 0..5 {
        let g = functional.gradient(y);
        if norm2(g) < T::of(1e-9) {
            break;
        }
        let hs = functional.hessian(y);
        let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
        if !(det.abs() > T::zero()) {
            break;
        }
        let step = [
            (hs[1][1] * g[0] - hs[0][1] * g[1]) / det,
            (-hs[1][0] * g[0] + hs[0][0] * g[1]) / det,
        ];
        let cand = [y[0] - step[0], y[1] - step[1]];
        // near the minimum the change in H is below roundoff, so compare gradients
        if norm2(functional.gradient(cand)) < norm2(g) {
            y = cand;
            value = f(cand);
        } else {
            break;
        }
    }
    let gradient_norm = norm2(functional.gradient(y));
    Ok(HMinimum { y0: y, value, gradient_norm })
}

/// Plain Nelder-Mead in two dimensions.
pub(crate) fn nelder_mead<T: Real, F: Fn(Point<T>) -> T>(f: &F, start: Point<T>, size: T, tol: T, max_iter: usize) -> Point<T> {
    let mut simplex = [
        (start, f(start)),
        ([start[0] + size, start[1]], f([start[0] + size, start[1]])),
        ([start[0], start[1] + size], f([start[0], start[1] + size])),
    ];
    let half = T::of(0.5);
    let two = T::of(2.0);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = (0..2)
            .map(|d| {
                let lo = simplex.iter().map(|v| v.0[d]).fold(T::infinity(), T::min);
                let hi = simplex.iter().map(|v| v.0[d]).fold(T::neg_infinity(), T::max);
                hi - lo
            })
            .fold(T::zero(), T::max);
        if spread < tol {
            break;
        }
        let (best, mid, worst) = (simplex[0], simplex[1], simplex[2]);
        let centroid = [half * (best.0[0] + mid.0[0]), half * (best.0[1] + mid.0[1])];
        let along = |t: T| [centroid[0] + t * (worst.0[0] - centroid[0]), centroid[1] + t * (worst.0[1] - centroid[1])];
        let refl = along(-T::one());
        let fr = f(refl);
        if fr < best.1 {
            let exp = along(-two);
            let fe = f(exp);
            simplex[2] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < mid.1 {
            simplex[2] = (refl, fr);
        } else {
            let (cand, fc) = if fr < worst.1 {
                let c = along(-half);
                (c, f(c))
            } else {
                let c = along(half);
                (c, f(c))
            };
            if fc < worst.1.min(fr) {
                simplex[2] = (cand, fc);
            } else {
                // shrink towards the best vertex
                for v in simplex.iter_mut().skip(1) {
                    let p = [best.0[0] + half * (v.0[0] - best.0[0]), best.0[1] + half * (v.0[1] - best.0[1])];
                    *v = (p, f(p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex[0].0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nondegeneracy<T> {
    pub matrix: [[T; 2]; 2],
    pub det: T,
    /// `|det| < 1e-8 ||matrix||_F^2`.
    pub degenerate: bool,
}

pub fn nondegeneracy<T: Real>(h: &PotentialSpec<T>, profile: &RadialProfile<T>, y0: Point<T>) -> Result<Nondegeneracy<T>> {
    let functional = HFunctional::new(h, profile)?;
    Ok(nondegeneracy_of(&functional, y0))
}

pub fn nondegeneracy_of<T: Real>(functional: &HFunctional<'_, T>, y0: Point<T>) -> Nondegeneracy<T> {
    let matrix = functional.nondegeneracy_matrix(y0);
    let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
    let frob2 = matrix.iter().flatten().fold(T::zero(), |s, &m| s + m * m);
    let degenerate = !(det.abs() >= T::of(1e-8) * frob2) || frob2 == T::zero();
    Nondegeneracy { matrix, det, degenerate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_ground::solve_w;
    use std::sync::OnceLock;

    fn w2() -> &'static RadialProfile<f64> {
        static W: OnceLock<RadialProfile<f64>> = OnceLock::new();
        W.get_or_init(|| solve_w(2.0, 1e-4).unwrap())
    }

    #[test]
    fn pointwise_values() {
        let v = PotentialSpec::harmonic(1.0f64).unwrap();
        assert_eq!(v.value([1.0, 1.0]), 2.0);
        let eff = EffectivePotential::new(v, 2.0);
        for x in [[0.3, -1.0], [5.0, 2.0], [0.0, 0.0]] {
            assert!(eff.value(x).abs() < 1e-14);
        }
        let an = PotentialSpec::anisotropic(1.0, 4.0).unwrap();
        assert_eq!(an.value([0.0, 1.0]), 4.0);
        let scaled = ScaledPotential { base: &v, eps: 0.1 };
        assert!((scaled.value([2.0, 0.0]) - 0.01 * 0.04).abs() < 1e-16);
    }

    #[test]
    fn critical_speeds() {
        assert_eq!(omega_star(&PotentialSpec::harmonic(1.0).unwrap()).unwrap().value, 2.0);
        assert_eq!(omega_star(&PotentialSpec::anisotropic(1.0, 4.0).unwrap()).unwrap().value, 2.0);
        let w = omega_star(&PotentialSpec::harmonic(3.0).unwrap()).unwrap();
        assert!((w.value - 2.0 * 3f64.sqrt()).abs() < 1e-15 && !w.estimated);

        let sampled = PotentialSpec::new(PotentialKind::HomogeneousPlus { c1: 1.0, c2: 2.0, s: 1.5, quad: 0.5, quartic: 0.0 }).unwrap();
        let est = omega_star(&sampled).unwrap();
        assert!(est.estimated);
        // V / R^2 = 0.5 + R^{-1/2} along the softest ray
        assert!((est.value - 2.0 * 0.5f64.sqrt()).abs() < 1e-3, "{}", est.value);

        let sub = PotentialSpec::new(PotentialKind::HomogeneousPlus { c1: 1.0, c2: 1.0, s: 1.5, quad: 0.0, quartic: 0.0 }).unwrap();
        assert!(matches!(omega_star(&sub), Err(Error::SubQuadraticGrowth)));
        let quartic = PotentialSpec::new(PotentialKind::HomogeneousPlus { c1: 1.0f64, c2: 1.0, s: 2.0, quad: 0.0, quartic: 1.0 }).unwrap();
        assert!(omega_star(&quartic).unwrap().value.is_infinite());
    }

    #[test]
    fn validation_names_the_invariant() {
        let err = PotentialSpec::harmonic(-1.0).unwrap_err().to_string();
        assert!(err.contains("V(x) >= 0"), "{err}");
        let err = PotentialSpec::<f64>::from_parts("harmonic", &[1.0, 2.0], None).unwrap_err().to_string();
        assert!(err.contains("1 coefficients"), "{err}");
        assert!(PotentialSpec::<f64>::from_parts("bowl", &[1.0], None).is_err());
        let err = PotentialSpec::<f64>::from_parts("harmonic", &[1.0], Some(1.5)).unwrap_err().to_string();
        assert!(err.contains("homogeneous"), "{err}");
        let ok = PotentialSpec::<f64>::from_parts("homogeneous_plus", &[1.0, 2.0, 0.0, 0.0], Some(1.5)).unwrap();
        assert_eq!(ok.declared_degree(), Some(1.5));
    }

    #[test]
    fn homogeneity_star_test() {
        let h = PotentialSpec::new(PotentialKind::HomogeneousPlus { c1: 1.0, c2: 3.0, s: 1.5, quad: 0.0, quartic: 0.0 }).unwrap();
        h.check_homogeneity(1.5).unwrap();
        assert!(h.check_homogeneity(2.0).is_err());
        let shifted = PotentialSpec::new(PotentialKind::ShiftedHarmonic { a: 1.0, center: [0.5, 0.0] }).unwrap();
        assert!(shifted.check_homogeneity(2.0).is_err());
    }

    #[test]
    fn omega_monotonicity_and_confinement() {
        let v = PotentialSpec::anisotropic(1.0, 2.5).unwrap();
        for k in 0..16 {
            let d = star::<f64>(k, 16);
            let x = [1.7 * d[0], 1.7 * d[1]];
            let mut prev = f64::INFINITY;
            for om in [0.0, 0.5, 1.0, 1.5, 1.9] {
                let val = EffectivePotential::new(v, om).value(x);
                assert!(val <= prev);
                prev = val;
            }
        }
        let harm = PotentialSpec::harmonic(1.0).unwrap();
        let eff = EffectivePotential::new(harm, 1.5);
        for k in 0..16 {
            let d = star::<f64>(k, 16);
            for r in [10.0, 20.0, 40.0] {
                let ratio = eff.value([r * d[0], r * d[1]]) / (r * r);
                assert!((ratio - (1.0 - 1.5 * 1.5 / 4.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn effective_core_and_remainder() {
        let v = PotentialSpec::harmonic(1.0).unwrap();
        let core = v.effective_core(1.0).unwrap();
        assert_eq!(*core.kind(), PotentialKind::Harmonic { a: 0.75 });
        assert!(v.effective_core(3.0).is_err());
        let rem = v.core_remainder(1.0).unwrap();
        assert!(rem.iter().all(|r| *r < 1e-12));

        let mixed = PotentialSpec::new(PotentialKind::HomogeneousPlus { c1: 1.0, c2: 2.0, s: 1.5, quad: 1.0, quartic: 0.0 }).unwrap();
        let rem = mixed.core_remainder(1.0).unwrap();
        assert!(rem[0] > rem[1] && rem[1] > rem[2], "{rem:?}");
    }

    #[test]
    fn h_of_harmonic_core() {
        let w = w2();
        let h = PotentialSpec::harmonic(1.0).unwrap();
        let hf = HFunctional::new(&h, w).unwrap();
        let h0 = hf.eval([0.0, 0.0]);
        // radial quadrature oracle: int |x|^2 w^2 = 2 pi int r^3 w^2 dr
        assert!((h0 / w.second_moment() - 1.0).abs() < 1e-4, "{h0} vs {}", w.second_moment());
        for y in [[0.5, 0.0], [1.0, -2.0], [-0.3, 0.7]] {
            let expected = h0 + (y[0] * y[0] + y[1] * y[1]) * w.a_star;
            let got = hf.eval(y);
            assert!((got / expected - 1.0).abs() < 1e-4, "{got} vs {expected}");
        }
        let zero = PotentialSpec::harmonic(0.0).unwrap();
        assert_eq!(h_functional(&zero, w, [0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn minimizers_of_h() {
        let w = w2();
        for h in [PotentialSpec::harmonic(1.0).unwrap(), PotentialSpec::anisotropic(1.0, 2.0).unwrap()] {
            let m = minimize_h(&h, w).unwrap();
            assert!(norm2(m.y0) < 1e-6, "{:?}", m.y0);
            assert!(m.gradient_norm < 1e-6, "{}", m.gradient_norm);
        }
        let shifted = PotentialSpec::new(PotentialKind::ShiftedHarmonic { a: 1.0, center: [0.5, 0.0] }).unwrap();
        assert!(matches!(minimize_h(&shifted, w), Err(Error::InvalidPotential(_))));
        let zero = PotentialSpec::harmonic(0.0).unwrap();
        assert!(matches!(minimize_h(&zero, w), Err(Error::MinimumNotUnique)));
    }

    #[test]
    fn translated_weight_shifts_minimizer() {
        let w = w2();
        let h = PotentialSpec::anisotropic(1.0, 2.0).unwrap();
        let c = [0.4, -0.25];
        let hf = HFunctional::with_center(&h, w, c).unwrap();
        let m = minimize_h_functional(&hf).unwrap();
        assert!((m.y0[0] + c[0]).abs() < 1e-5 && (m.y0[1] + c[1]).abs() < 1e-5, "{:?}", m.y0);
    }

    #[test]
    fn nondegeneracy_matrices() {
        let w = w2();
        let h = PotentialSpec::harmonic(1.0).unwrap();
        let nd = nondegeneracy(&h, w, [0.0, 0.0]).unwrap();
        let target = -2.0 * w.a_star;
        assert!((nd.matrix[0][0] / target - 1.0).abs() < 1e-3);
        assert!((nd.matrix[1][1] / target - 1.0).abs() < 1e-3);
        assert!(nd.matrix[0][1].abs() < 1e-6 * w.a_star);
        assert!((nd.det / (4.0 * w.a_star * w.a_star) - 1.0).abs() < 2e-3);
        assert!(!nd.degenerate);

        let an = PotentialSpec::anisotropic(1.0, 2.0).unwrap();
        let nd = nondegeneracy(&an, w, [0.0, 0.0]).unwrap();
        assert!(nd.matrix[0][1].abs() < 1e-6 * w.a_star);
        assert!((nd.matrix[1][1] / nd.matrix[0][0] - 2.0).abs() < 1e-3);
        assert!(!nd.degenerate);

        let zero = PotentialSpec::harmonic(0.0).unwrap();
        let nd = nondegeneracy(&zero, w, [0.0, 0.0]).unwrap();
        assert_eq!(nd.det, 0.0);
        assert!(nd.degenerate);
    }
}
