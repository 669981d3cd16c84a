//! Uniform square grids, complex/real grid functions, finite-difference
//! operators and rectangle-rule quadrature.
//!
//! The domain is `[-L, L]^2` sampled at `n` points per axis, spacing
//! `h = 2L / (n - 1)`, node `(i, j)` at `(-L + i h, -L + j h)`. Storage is
//! row-major with `x1` the fastest index. Complex fields carry homogeneous
//! Dirichlet data: the outermost ring of nodes is always zero.

use std::io::{Read, Write};

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{Point, Real};

const CHUNK: usize = 4096;

/// Sum of `f(k)` for `k in 0..len`, reduced in fixed-size chunks so the
/// result does not depend on the number of worker threads.
pub(crate) fn det_sum<T, F>(len: usize, f: F) -> T
where
    T: Real,
    F: Fn(usize) -> T + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            (lo..hi).fold(T::zero(), |acc, k| acc + f(k))
        })
        .collect();
    partial.into_iter().fold(T::zero(), |a, b| a + b)
}

/// Geometry of a uniform grid on `[-L, L]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    half_width: T,
    n: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(half_width: T, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidGrid(format!("n = {n} < 16")));
        }
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!("half-width {half_width} must be positive")));
        }
        Ok(GridSpec { half_width, n })
    }

    #[inline]
    pub fn half_width(&self) -> T {
        self.half_width
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes, `n^2`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `2L / (n - 1)`.
    #[inline]
    pub fn spacing(&self) -> T {
        T::of(2.0) * self.half_width / T::from_usize(self.n - 1).unwrap()
    }

    /// Area element of the rectangle rule.
    #[inline]
    pub fn cell_area(&self) -> T {
        let h = self.spacing();
        h * h
    }

    #[inline]
    pub fn coord(&self, i: usize) -> T {
        -self.half_width + T::from_usize(i).unwrap() * self.spacing()
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Point<T> {
        [self.coord(i), self.coord(j)]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn node(&self, k: usize) -> (usize, usize) {
        (k % self.n, k / self.n)
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.n || j + 1 == self.n
    }

    /// Same node set as `other` (up to round-off in the half-width).
    pub fn matches(&self, other: &GridSpec<T>) -> bool {
        self.n == other.n
            && (self.half_width - other.half_width).abs()
                <= T::of(1e-12) * self.half_width.abs().max(T::one())
    }

    /// Fractional grid index of a coordinate.
    #[inline]
    pub(crate) fn fractional_index(&self, x: T) -> T {
        (x + self.half_width) / self.spacing()
    }
}

/// Complex grid function with zero boundary ring.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T> {
    grid: GridSpec<T>,
    values: Vec<Complex<T>>,
}

/// Real grid function (potentials, moduli, densities).
#[derive(Debug, Clone, PartialEq)]
pub struct RealField<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> ComplexField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        ComplexField {
            grid,
            values: vec![Complex::new(T::zero(), T::zero()); grid.len()],
        }
    }

    /// Samples `f` at interior nodes; the boundary ring is set to zero.
    pub fn from_fn<F>(grid: GridSpec<T>, f: F) -> Self
    where
        F: Fn(Point<T>) -> Complex<T> + Sync,
    {
        let n = grid.n();
        let mut values = vec![Complex::new(T::zero(), T::zero()); grid.len()];
        values.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                if !grid.is_boundary(i, j) {
                    *v = f(grid.point(i, j));
                }
            }
        });
        ComplexField { grid, values }
    }

    /// Wraps raw node values. The boundary ring is zeroed; non-finite values
    /// are rejected.
    pub fn from_values(grid: GridSpec<T>, mut values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("field has non-finite values".into()));
        }
        zero_ring(&grid, &mut values);
        Ok(ComplexField { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: GridSpec<T>, values: Vec<Complex<T>>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ComplexField { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    #[inline]
    pub(crate) fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex<T> {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(Complex<T>) -> Complex<T> + Sync,
    {
        ComplexField {
            grid: self.grid,
            values: self.values.par_iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        self.map(|z| z * s)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: Complex<T>, other: &Self) -> Self {
        debug_assert!(self.grid.matches(&other.grid));
        ComplexField {
            grid: self.grid,
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&x, &y)| x + a * y)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(Complex::new(-T::one(), T::zero()), other)
    }

    /// `<self, other> = h^2 sum conj(self) other`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        debug_assert!(self.grid.matches(&other.grid));
        let a = &self.values;
        let b = &other.values;
        let re = det_sum(a.len(), |k| a[k].re * b[k].re + a[k].im * b[k].im);
        let im = det_sum(a.len(), |k| a[k].re * b[k].im - a[k].im * b[k].re);
        Complex::new(re, im) * self.grid.cell_area()
    }

    /// Real inner product `Re <self, other>`.
    pub fn real_inner(&self, other: &Self) -> T {
        let a = &self.values;
        let b = &other.values;
        det_sum(a.len(), |k| a[k].re * b[k].re + a[k].im * b[k].im) * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> T {
        self.real_inner(self).sqrt()
    }

    pub fn sup_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn modulus(&self) -> RealField<T> {
        RealField {
            grid: self.grid,
            values: self.values.par_iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn density(&self) -> RealField<T> {
        RealField {
            grid: self.grid,
            values: self.values.par_iter().map(|z| z.norm_sqr()).collect(),
        }
    }

    pub fn real_part(&self) -> RealField<T> {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|z| z.re).collect(),
        }
    }

    pub fn imag_part(&self) -> RealField<T> {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|z| z.im).collect(),
        }
    }

    /// Bilinear interpolation at an arbitrary point; zero outside the grid.
    pub fn interpolate(&self, x: Point<T>) -> Complex<T> {
        let n = self.grid.n();
        let fx = self.grid.fractional_index(x[0]);
        let fy = self.grid.fractional_index(x[1]);
        let last = T::from_usize(n - 1).unwrap();
        if !(fx >= T::zero() && fy >= T::zero() && fx <= last && fy <= last) {
            return Complex::new(T::zero(), T::zero());
        }
        let i0 = fx.floor().to_usize().unwrap().min(n - 2);
        let j0 = fy.floor().to_usize().unwrap().min(n - 2);
        let tx = fx - T::from_usize(i0).unwrap();
        let ty = fy - T::from_usize(j0).unwrap();
        let one = T::one();
        self.at(i0, j0) * ((one - tx) * (one - ty))
            + self.at(i0 + 1, j0) * (tx * (one - ty))
            + self.at(i0, j0 + 1) * ((one - tx) * ty)
            + self.at(i0 + 1, j0 + 1) * (tx * ty)
    }
}

fn zero_ring<T: Real, V: Copy + num_traits::Zero>(grid: &GridSpec<T>, values: &mut [V]) {
    let n = grid.n();
    for k in 0..n {
        values[grid.index(k, 0)] = V::zero();
        values[grid.index(k, n - 1)] = V::zero();
        values[grid.index(0, k)] = V::zero();
        values[grid.index(n - 1, k)] = V::zero();
    }
}

impl<T: Real> RealField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        RealField {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    /// Samples `f` at every node, boundary included.
    pub fn from_fn<F>(grid: GridSpec<T>, f: F) -> Self
    where
        F: Fn(Point<T>) -> T + Sync,
    {
        let n = grid.n();
        let mut values = vec![T::zero(); grid.len()];
        values.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(grid.point(i, j));
            }
        });
        RealField { grid, values }
    }

    pub fn from_values(grid: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field has non-finite values".into()));
        }
        Ok(RealField { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.grid.index(i, j)]
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(T) -> T + Sync,
    {
        RealField {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    /// Lifts to a complex field (boundary ring zeroed).
    pub fn to_complex(&self) -> ComplexField<T> {
        let mut values: Vec<Complex<T>> =
            self.values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        zero_ring(&self.grid, &mut values);
        ComplexField {
            grid: self.grid,
            values,
        }
    }
}

/// Five-point Laplacian; boundary nodes are set to zero.
pub fn laplacian<T: Real>(f: &ComplexField<T>) -> ComplexField<T> {
    let grid = *f.grid();
    let n = grid.n();
    let inv_h2 = T::one() / grid.cell_area();
    let src = f.values();
    let four = T::of(4.0);
    let mut out = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        if j == 0 || j + 1 == n {
            return;
        }
        for i in 1..n - 1 {
            let k = j * n + i;
            row[i] = (src[k + 1] + src[k - 1] + src[k + n] + src[k - n] - src[k] * four) * inv_h2;
        }
    });
    ComplexField::from_values_unchecked(grid, out)
}

/// Angular derivative `x^perp . grad f = -x2 d1 f + x1 d2 f` with centered
/// differences. As a real matrix it is antisymmetric on Dirichlet fields.
pub fn angular_derivative<T: Real>(f: &ComplexField<T>) -> ComplexField<T> {
    let grid = *f.grid();
    let n = grid.n();
    let inv_2h = T::one() / (T::of(2.0) * grid.spacing());
    let src = f.values();
    let mut out = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        if j == 0 || j + 1 == n {
            return;
        }
        let y = grid.coord(j);
        for i in 1..n - 1 {
            let x = grid.coord(i);
            let k = j * n + i;
            let d1 = (src[k + 1] - src[k - 1]) * inv_2h;
            let d2 = (src[k + n] - src[k - n]) * inv_2h;
            row[i] = d2 * x - d1 * y;
        }
    });
    ComplexField::from_values_unchecked(grid, out)
}

/// Rotation term `i Omega (x^perp . grad f)`.
pub fn rotation_term<T: Real>(f: &ComplexField<T>, omega: T) -> ComplexField<T> {
    let i_omega = Complex::new(T::zero(), omega);
    let mut d = angular_derivative(f);
    d.values_mut().par_iter_mut().for_each(|z| *z = *z * i_omega);
    d
}

/// Centered gradient `(d1 f, d2 f)`; boundary nodes are zero.
pub fn gradient<T: Real>(f: &ComplexField<T>) -> (ComplexField<T>, ComplexField<T>) {
    let grid = *f.grid();
    let n = grid.n();
    let inv_2h = T::one() / (T::of(2.0) * grid.spacing());
    let src = f.values();
    let zero = Complex::new(T::zero(), T::zero());
    let mut g1 = vec![zero; grid.len()];
    let mut g2 = vec![zero; grid.len()];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let k = j * n + i;
            g1[k] = (src[k + 1] - src[k - 1]) * inv_2h;
            g2[k] = (src[k + n] - src[k - n]) * inv_2h;
        }
    }
    (
        ComplexField::from_values_unchecked(grid, g1),
        ComplexField::from_values_unchecked(grid, g2),
    )
}

/// Discrete Dirichlet form `<f, -Lap f>`, i.e. the sum of squared forward
/// differences. This is the kinetic energy consistent with [`laplacian`].
pub fn dirichlet_energy<T: Real>(f: &ComplexField<T>) -> T {
    let grid = *f.grid();
    let n = grid.n();
    let src = f.values();
    // h^2 * (1/h^2) sum |forward difference|^2
    det_sum(grid.len(), |k| {
        let (i, j) = grid.node(k);
        let mut s = T::zero();
        if i + 1 < n {
            s = s + (src[k + 1] - src[k]).norm_sqr();
        }
        if j + 1 < n {
            s = s + (src[k + n] - src[k]).norm_sqr();
        }
        s
    })
}

/// Rectangle rule `h^2 sum f`.
pub fn integrate<T: Real>(f: &RealField<T>) -> T {
    let v = f.values();
    det_sum(v.len(), |k| v[k]) * f.grid().cell_area()
}

/// L2, L^q and H1 norms of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms<T> {
    pub l2: T,
    /// `(int |f|^q)^(1/q)` for the requested `q`.
    pub lq: T,
    /// `(int |grad f|^2 + |f|^2)^(1/2)` with the centered gradient.
    pub h1: T,
}

pub fn norms<T: Real>(f: &ComplexField<T>, q: T) -> Result<Norms<T>> {
    if !(q >= T::one()) {
        return Err(Error::InvalidParameter(format!("norm exponent q = {q} < 1")));
    }
    let area = f.grid().cell_area();
    let v = f.values();
    let l2sq = det_sum(v.len(), |k| v[k].norm_sqr()) * area;
    let lq_int = det_sum(v.len(), |k| pow_abs(v[k].norm(), q)) * area;
    let (g1, g2) = gradient(f);
    let (a, b) = (g1.values(), g2.values());
    let grad_sq = det_sum(v.len(), |k| a[k].norm_sqr() + b[k].norm_sqr()) * area;
    Ok(Norms {
        l2: l2sq.sqrt(),
        lq: if lq_int > T::zero() { lq_int.powf(T::one() / q) } else { T::zero() },
        h1: (grad_sq + l2sq).sqrt(),
    })
}

/// `|r|^q` evaluated as `exp(q log r)`, zero below `1e-30`.
#[inline]
pub(crate) fn pow_abs<T: Real>(r: T, q: T) -> T {
    if r < T::of(1e-30) {
        T::zero()
    } else {
        (q * r.ln()).exp()
    }
}

pub fn normalize<T: Real>(f: &ComplexField<T>) -> Result<ComplexField<T>> {
    let norm = f.l2_norm();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::ZeroField);
    }
    Ok(f.scale(Complex::new(T::one() / norm, T::zero())))
}

const COMPLEX_MAGIC: &[u8; 4] = b"RGS1";
const REAL_MAGIC: &[u8; 4] = b"RGR1";

fn write_header<W: Write, T: Real>(w: &mut W, magic: &[u8; 4], grid: &GridSpec<T>) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&(grid.n() as u64).to_le_bytes())?;
    w.write_all(&grid.half_width().as_f64().to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read, T: Real>(r: &mut R, magic: &[u8; 4]) -> Result<GridSpec<T>> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::BadDump(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    let n = read_u64(r)? as usize;
    let half_width = read_f64(r)?;
    GridSpec::new(T::of(half_width), n)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Writes an `RGS1` dump: magic, `u64 n`, `f64 L`, then `n^2` (re, im) pairs.
pub fn write_complex_field<W: Write, T: Real>(w: &mut W, f: &ComplexField<T>) -> Result<()> {
    write_header(w, COMPLEX_MAGIC, f.grid())?;
    let mut buf = Vec::with_capacity(16 * f.values().len());
    for z in f.values() {
        buf.extend_from_slice(&z.re.as_f64().to_le_bytes());
        buf.extend_from_slice(&z.im.as_f64().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_complex_field<R: Read, T: Real>(r: &mut R) -> Result<ComplexField<T>> {
    let grid: GridSpec<T> = read_header(r, COMPLEX_MAGIC)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        values.push(Complex::new(T::of(re), T::of(im)));
    }
    ComplexField::from_values(grid, values)
}

/// Writes an `RGR1` dump: magic, `u64 n`, `f64 L`, then `n^2` f64 values.
pub fn write_real_field<W: Write, T: Real>(w: &mut W, f: &RealField<T>) -> Result<()> {
    write_header(w, REAL_MAGIC, f.grid())?;
    let mut buf = Vec::with_capacity(8 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_real_field<R: Read, T: Real>(r: &mut R) -> Result<RealField<T>> {
    let grid: GridSpec<T> = read_header(r, REAL_MAGIC)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(T::of(read_f64(r)?));
    }
    RealField::from_values(grid, values)
}
