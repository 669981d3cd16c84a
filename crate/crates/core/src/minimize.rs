//! Normalized gradient flow for the constrained minimization, a Newton
//! polish on the mass sphere, phase alignment and the nonexistence probe.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{check_exponent, EnergyBreakdown, GpProblem};
use crate::error::{Error, Result};
use crate::grid::{det_sum, normalize, pow_abs, ComplexField, GridSpec};
use crate::linalg::{solve_shifted_laplacian, truncated_cg, INNER_MAX_ITER};
use crate::potentials::Potential;
use crate::scalar::{norm2, Point, Real};
use crate::scalar_ground::{solve_w, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind<T> {
    /// `exp(-|x|^2 / 2)`
    Gaussian,
    /// `eps^-1 w(x / eps) / sqrt(a*)`
    RescaledW { eps: T },
    /// Gaussian times `e^{i phi}`.
    Vortex,
    /// Gaussian times `1 + 0.1 noise`, complex noise uniform in the unit square.
    Random { seed: u64 },
}

impl<T: Real> InitKind<T> {
    pub fn label(&self) -> String {
        match self {
            InitKind::Gaussian => "gaussian".into(),
            InitKind::RescaledW { eps } => format!("rescaled_w({eps})"),
            InitKind::Vortex => "vortex".into(),
            InitKind::Random { seed } => format!("random({seed})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig<T> {
    pub grid: GridSpec<T>,
    /// Largest pseudo-time step; the flow also caps it by the explicit
    /// stability bound.
    pub dt: T,
    pub max_iter: usize,
    /// Relative energy change over the stagnation window.
    pub tol_energy: T,
    pub tol_residual: T,
    pub init: InitKind<T>,
    /// Factor applied to `dt` when a step raises the energy.
    pub backtrack: T,
    /// Polish with projected Newton once the flow residual is small.
    pub newton: bool,
}

const STAGNATION_WINDOW: usize = 50;
const GROWTH_INTERVAL: usize = 20;
const GROWTH_FACTOR: f64 = 1.2;
const NEWTON_SWITCH: f64 = 1e-3;
const NEWTON_TARGET: f64 = 1e-13;
const UNBOUNDED_ENERGY: f64 = -1e12;
const OUTER_BAND: f64 = 0.8;
const OUTER_MASS_LIMIT: f64 = 0.1;

impl<T: Real> SolveConfig<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        SolveConfig {
            grid,
            dt: T::of(0.5),
            max_iter: 20_000,
            tol_energy: T::of(1e-10),
            tol_residual: T::of(1e-5),
            init: InitKind::Gaussian,
            backtrack: T::of(0.5),
            newton: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.tol_energy > T::zero()) || !(self.tol_residual > T::zero()) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if !(self.backtrack > T::zero() && self.backtrack < T::one()) {
            return Err(Error::InvalidParameter(format!("backtrack factor must lie in (0, 1), got {}", self.backtrack)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry<T> {
    pub energy: T,
    pub residual: T,
}

#[derive(Debug, Clone)]
pub struct GroundState<T: Real> {
    pub u: ComplexField<T>,
    pub energy: EnergyBreakdown<T>,
    pub mu: T,
    pub residual: T,
    /// Flow steps attempted (including rejected ones) plus Newton steps.
    pub iterations: usize,
    pub converged: bool,
    /// One entry per accepted iterate, starting with the initial guess.
    pub history: Vec<HistoryEntry<T>>,
    pub newton_steps: usize,
    pub init: InitKind<T>,
}

impl<T: Real> GroundState<T> {
    /// Accepted energies never rise by more than the summation round-off
    /// `8 eps sqrt(N)` times the energy scale.
    pub fn history_nonincreasing(&self) -> bool {
        let slack = roundoff_slack(&self.energy, self.u.grid().len());
        self.history.windows(2).all(|w| w[1].energy <= w[0].energy + slack)
    }
}

/// Round-off allowance for comparing two energies summed over `len` nodes.
pub(crate) fn roundoff_slack<T: Real>(e: &EnergyBreakdown<T>, len: usize) -> T {
    T::of(8.0) * T::epsilon() * T::from_usize(len).unwrap().sqrt() * e.scale()
}

pub fn initial_guess<T: Real>(kind: InitKind<T>, grid: GridSpec<T>, profile: Option<&RadialProfile<T>>) -> Result<ComplexField<T>> {
    let gauss = |x: Point<T>| (-(x[0] * x[0] + x[1] * x[1]) / T::of(2.0)).exp();
    let f = match kind {
        InitKind::Gaussian => ComplexField::from_fn(grid, |x| Complex::new(gauss(x), T::zero())),
        InitKind::Vortex => ComplexField::from_fn(grid, |x| Complex::from_polar(gauss(x), x[1].atan2(x[0]))),
        InitKind::RescaledW { eps } => {
            let w = profile.ok_or_else(|| Error::InvalidParameter("rescaled_w start needs the scalar profile".into()))?;
            if !(eps > T::zero()) {
                return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
            }
            let amp = T::one() / (eps * w.a_star.sqrt());
            ComplexField::from_fn(grid, |x| Complex::new(amp * w.eval(norm2(x) / eps), T::zero()))
        }
        InitKind::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tenth = T::of(0.1);
            let values = (0..grid.len())
                .map(|k| {
                    let (i, j) = grid.node(k);
                    let g = gauss(grid.point(i, j));
                    let noise = Complex::new(T::of(rng.gen_range(-1.0..1.0)), T::of(rng.gen_range(-1.0..1.0)));
                    (Complex::new(T::one(), T::zero()) + noise * tenth) * g
                })
                .collect();
            ComplexField::from_values(grid, values)?
        }
    };
    normalize(&f)
}

/// Largest step the explicit terms tolerate:
/// `1 / (max V + Omega L / h + max rho^(p-1) |u|^(p-1))`.
fn stability_cap<T: Real>(problem: &GpProblem<T>, u: &ComplexField<T>) -> T {
    let grid = u.grid();
    let q = problem.p() - T::one();
    let peak = u.values().iter().fold(T::zero(), |m, z| m.max(z.norm()));
    let bound = problem.potential().max().max(T::zero())
        + problem.omega() * grid.half_width() / grid.spacing()
        + problem.coupling() * pow_abs(peak, q);
    if bound > T::zero() {
        T::one() / bound
    } else {
        T::infinity()
    }
}

fn flow_update<T: Real>(problem: &GpProblem<T>, u: &ComplexField<T>, mu: T, dt: T) -> Result<ComplexField<T>> {
    // (1 - dt Lap) u* = u + dt [mu u - V u - i Omega K u + g |u|^(p-1) u]
    // written as a correction: (1 - dt Lap)(u* - u) = -dt EL(u)
    let g = problem.el_operator(u, mu);
    let (c, _) = solve_shifted_laplacian(&g.scale(Complex::new(-dt, T::zero())), dt, T::of(1e-5))?;
    normalize(&u.axpy(Complex::new(T::one(), T::zero()), &c))
}

/// One semi-implicit step with the current multiplier estimate, followed by
/// renormalization.
pub fn flow_step<T: Real, P: Potential<T> + ?Sized>(
    u: &ComplexField<T>,
    v: &P,
    omega: T,
    rho: T,
    p: T,
    dt: T,
) -> Result<ComplexField<T>> {
    let problem = GpProblem::from_potential(*u.grid(), v, omega, rho, p)?;
    flow_step_with(&problem, u, dt)
}

pub fn flow_step_with<T: Real>(problem: &GpProblem<T>, u: &ComplexField<T>, dt: T) -> Result<ComplexField<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let e = problem.energy(u)?;
    let mu = problem.multiplier(u, e.total);
    flow_update(problem, u, mu, dt)
}

fn outer_mass<T: Real>(u: &ComplexField<T>) -> T {
    let grid = *u.grid();
    let cut = T::of(OUTER_BAND) * grid.half_width();
    let vals = u.values();
    det_sum(vals.len(), |k| {
        let (i, j) = grid.node(k);
        let x = grid.point(i, j);
        if x[0].abs() > cut || x[1].abs() > cut {
            vals[k].norm_sqr()
        } else {
            T::zero()
        }
    }) * grid.cell_area()
}

struct Iterate<T: Real> {
    u: ComplexField<T>,
    energy: EnergyBreakdown<T>,
    mu: T,
    residual: T,
}

impl<T: Real> Iterate<T> {
    fn new(problem: &GpProblem<T>, u: ComplexField<T>) -> Result<Self> {
        let energy = problem.energy(&u)?;
        let mu = problem.multiplier(&u, energy.total);
        let residual = problem.el_residual(&u, mu)?;
        Ok(Iterate { u, energy, mu, residual })
    }

    fn entry(&self) -> HistoryEntry<T> {
        HistoryEntry {
            energy: self.energy.total,
            residual: self.residual,
        }
    }
}

pub fn solve_ground_state<T: Real, P: Potential<T> + ?Sized>(
    config: &SolveConfig<T>,
    v: &P,
    omega: T,
    rho: T,
    p: T,
) -> Result<GroundState<T>> {
    config.validate()?;
    check_exponent(p)?;
    let problem = GpProblem::from_potential(config.grid, v, omega, rho, p)?;
    let profile = match config.init {
        InitKind::RescaledW { .. } => Some(solve_w(p, T::of(1e-6))?),
        _ => None,
    };
    let u0 = initial_guess(config.init, config.grid, profile.as_ref())?;
    solve_from(config, &problem, u0)
}

/// Runs the flow (and Newton polish) from a given start.
pub fn solve_from<T: Real>(config: &SolveConfig<T>, problem: &GpProblem<T>, u0: ComplexField<T>) -> Result<GroundState<T>> {
    config.validate()?;
    if !u0.grid().matches(&config.grid) {
        return Err(Error::GridMismatch);
    }
    let mut it = Iterate::new(problem, normalize(&u0)?)?;
    let mut history = vec![it.entry()];
    let mut dt = config.dt;
    let mut accepted_run = 0usize;
    let mut iterations = 0usize;
    let mut newton_steps = 0usize;
    let mut next_newton = 0usize;
    let mut converged = false;
    let len = config.grid.len();

    while iterations < config.max_iter {
        if it.energy.total < T::of(UNBOUNDED_ENERGY) || outer_mass(&it.u) > T::of(OUTER_MASS_LIMIT) {
            return Err(Error::EnergyUnbounded);
        }
        if it.residual < config.tol_residual && stagnated(&history, config.tol_energy) {
            converged = true;
            break;
        }
        if config.newton && it.residual < T::of(NEWTON_SWITCH) && it.residual > T::of(NEWTON_TARGET) && iterations >= next_newton {
            let steps = newton_polish(problem, &mut it, &mut history, config.max_iter - iterations)?;
            newton_steps += steps;
            iterations += steps;
            next_newton = iterations + STAGNATION_WINDOW;
            continue;
        }

        iterations += 1;
        let step = dt.min(stability_cap(problem, &it.u));
        let cand = Iterate::new(problem, flow_update(problem, &it.u, it.mu, step)?)?;
        if cand.energy.total > it.energy.total + roundoff_slack(&it.energy, len) {
            dt = step * config.backtrack;
            accepted_run = 0;
            if dt < T::of(1e-14) {
                break;
            }
            continue;
        }
        it = cand;
        history.push(it.entry());
        accepted_run += 1;
        if accepted_run >= GROWTH_INTERVAL {
            dt = (dt * T::of(GROWTH_FACTOR)).min(config.dt);
            accepted_run = 0;
        }
    }
    if !converged && it.residual < config.tol_residual && stagnated(&history, config.tol_energy) {
        converged = true;
    }
    Ok(GroundState {
        u: it.u,
        energy: it.energy,
        mu: it.mu,
        residual: it.residual,
        iterations,
        converged,
        history,
        newton_steps,
        init: config.init,
    })
}

fn stagnated<T: Real>(history: &[HistoryEntry<T>], tol: T) -> bool {
    if history.len() <= STAGNATION_WINDOW {
        return false;
    }
    let last = history[history.len() - 1].energy;
    let first = history[history.len() - 1 - STAGNATION_WINDOW].energy;
    (last - first).abs() <= tol * last.abs().max(T::min_positive_value())
}

/// Removes the components along `u` and `i u`.
fn project<T: Real>(u: &ComplexField<T>, iu: &ComplexField<T>, x: &ComplexField<T>) -> ComplexField<T> {
    let a = u.real_inner(x);
    let b = iu.real_inner(x);
    x.axpy(Complex::new(-a, T::zero()), u).axpy(Complex::new(-b, T::zero()), iu)
}

/// Riemannian Newton on the unit sphere modulo the phase, solved by truncated
/// CG and globalized by a backtracking line search on the energy.
fn newton_polish<T: Real>(
    problem: &GpProblem<T>,
    it: &mut Iterate<T>,
    history: &mut Vec<HistoryEntry<T>>,
    budget: usize,
) -> Result<usize> {
    let len = it.u.grid().len();
    let mut steps = 0;
    let mut stalls = 0;
    while steps < budget.min(40) && it.residual > T::of(NEWTON_TARGET) {
        let u = it.u.clone();
        let iu = u.scale(Complex::new(T::zero(), T::one()));
        let g = problem.coupling();
        let q = problem.p() - T::one();
        // per-node weights of the linearized nonlinearity
        let weights: Vec<(T, Complex<T>)> = u
            .values()
            .par_iter()
            .map(|z| {
                let a = z.norm();
                let w = g * pow_abs(a, q);
                let dir = if a > T::of(1e-30) { z / a } else { Complex::new(T::zero(), T::zero()) };
                (w, dir)
            })
            .collect();
        let mu = it.mu;
        let jacobian = |d: &ComplexField<T>| {
            let pd = project(&u, &iu, d);
            let hd = problem.apply_linear(&pd);
            let src = pd.values();
            let out: Vec<Complex<T>> = hd
                .values()
                .par_iter()
                .enumerate()
                .map(|(k, &h)| {
                    let (w, dir) = weights[k];
                    let along = (dir.conj() * src[k]).re;
                    h - src[k] * (mu + w) - dir * (q * w * along)
                })
                .collect();
            project(&u, &iu, &ComplexField::from_values_unchecked(*u.grid(), out))
        };
        let grad = project(&u, &iu, &problem.el_operator(&u, mu));
        let forcing = T::of(0.1).min(it.residual.sqrt());
        let cg = truncated_cg(jacobian, &grad.scale(Complex::new(-T::one(), T::zero())), forcing, INNER_MAX_ITER);

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..12 {
            let cand = Iterate::new(problem, normalize(&u.axpy(Complex::new(t, T::zero()), &cg.step))?)?;
            if cand.energy.total <= it.energy.total + roundoff_slack(&it.energy, len) {
                accepted = Some(cand);
                break;
            }
            t = t * T::of(0.5);
        }
        let Some(cand) = accepted else { break };
        steps += 1;
        if cand.residual > T::of(0.9) * it.residual {
            stalls += 1;
        } else {
            stalls = 0;
        }
        *it = cand;
        history.push(it.entry());
        if stalls >= 3 {
            break;
        }
    }
    Ok(steps)
}

#[derive(Debug, Clone)]
pub struct PhaseAlignment<T: Real> {
    pub theta: T,
    pub aligned: ComplexField<T>,
    pub distance: T,
    /// `<u, ref>` vanished and `theta` was set to 0.
    pub gauge_undetermined: bool,
}

/// `theta = arg int ref conj(u)`, the constant phase minimizing
/// `|| e^{i theta} u - ref ||_2`.
pub fn phase_align<T: Real>(u: &ComplexField<T>, reference: &ComplexField<T>) -> Result<PhaseAlignment<T>> {
    if !u.grid().matches(reference.grid()) {
        return Err(Error::GridMismatch);
    }
    let rn = reference.l2_norm();
    if !(rn > T::zero()) {
        return Err(Error::ZeroField);
    }
    let c = u.inner(reference);
    let undetermined = !(c.norm() > T::of(1e-12) * u.l2_norm() * rn);
    let theta = if undetermined { T::zero() } else { c.arg() };
    let aligned = u.scale(Complex::from_polar(T::one(), theta));
    let distance = aligned.sub(reference).l2_norm();
    Ok(PhaseAlignment {
        theta,
        aligned,
        distance,
        gauge_undetermined: undetermined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow<T> {
    pub tau: T,
    pub center: Point<T>,
    pub energy: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTable<T> {
    pub rows: Vec<ProbeRow<T>>,
    /// `V_Omega` takes negative values on the grid; without them the trial
    /// states are centered at the origin and the table is inconclusive.
    pub unbounded_direction: bool,
}

impl<T: Real> ProbeTable<T> {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].energy < w[0].energy)
    }
}

const PROBE_DIRECTIONS: usize = 64;
const CUTOFF_INNER: f64 = 1.0;
const CUTOFF_OUTER: f64 = 2.0;

/// Smooth cutoff equal to 1 on `r <= 1` and 0 on `r >= 2`.
fn cutoff<T: Real>(r: T) -> T {
    let f = |t: T| if t > T::zero() { (-T::one() / t).exp() } else { T::zero() };
    let a = f(T::of(CUTOFF_OUTER) - r);
    let b = f(r - T::of(CUTOFF_INNER));
    if a + b > T::zero() {
        a / (a + b)
    } else {
        T::zero()
    }
}

/// Energies of the trial states `w_tau` (profile at scale `1/tau`, cut off,
/// gauged by `e^{i Omega x . x_tau^perp / 2}` and centered where
/// `V_Omega <= -(p-1) tau^2`).
pub fn nonexistence_probe<T: Real, P: Potential<T> + ?Sized>(
    grid: GridSpec<T>,
    v: &P,
    omega: T,
    rho: T,
    p: T,
    profile: &RadialProfile<T>,
    taus: &[T],
) -> Result<ProbeTable<T>> {
    check_exponent(p)?;
    if let Some(bad) = taus.iter().find(|t| !(**t > T::zero())) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {bad}")));
    }
    let problem = GpProblem::from_potential(grid, v, omega, rho, p)?;
    let v_omega = |x: Point<T>| v.value(x) - omega * omega * (x[0] * x[0] + x[1] * x[1]) / T::of(4.0);
    let reach = grid.half_width() - T::of(CUTOFF_OUTER) - T::of(2.0) * grid.spacing();
    if !(reach > T::zero()) {
        return Err(Error::GridTooSmall);
    }
    let mut best: Option<(T, Point<T>)> = None;
    for k in 0..PROBE_DIRECTIONS {
        let th = T::of(2.0) * T::PI() * T::from_usize(k).unwrap() / T::from_usize(PROBE_DIRECTIONS).unwrap();
        let d = [th.cos(), th.sin()];
        let val = v_omega([d[0] * reach, d[1] * reach]);
        if best.map_or(true, |(b, _)| val < b) {
            best = Some((val, d));
        }
    }
    let (lowest, dir) = best.unwrap();
    let unbounded_direction = lowest < T::zero();
    let step = grid.spacing() / T::of(4.0);
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let center = if unbounded_direction {
            let level = -(p - T::one()) * tau * tau;
            let mut r = T::zero();
            loop {
                if r > reach {
                    return Err(Error::GridTooSmall);
                }
                if v_omega([dir[0] * r, dir[1] * r]) <= level {
                    break [dir[0] * r, dir[1] * r];
                }
                r = r + step;
            }
        } else {
            [T::zero(), T::zero()]
        };
        let perp = [-center[1], center[0]];
        let f = ComplexField::from_fn(grid, |x| {
            let dx = [x[0] - center[0], x[1] - center[1]];
            let r = norm2(dx);
            let amp = profile.eval(tau * r) * cutoff(r);
            let phase = omega * (x[0] * perp[0] + x[1] * perp[1]) / T::of(2.0);
            Complex::from_polar(amp, phase)
        });
        let u = normalize(&f)?;
        let energy = problem.energy(&u)?.total;
        rows.push(ProbeRow { tau, center, energy });
    }
    Ok(ProbeTable {
        rows,
        unbounded_direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::gp_energy;
    use crate::potentials::PotentialSpec;
    use std::sync::OnceLock;

    fn w2() -> &'static RadialProfile<f64> {
        static W: OnceLock<RadialProfile<f64>> = OnceLock::new();
        W.get_or_init(|| solve_w(2.0, 1e-6).unwrap())
    }

    /// Lowest eigenvalue of `-Lap + |x|^2` on the same grid by inverse
    /// power iteration with a CG inner solve.
    fn discrete_oscillator_ground(grid: GridSpec<f64>) -> f64 {
        let v = PotentialSpec::harmonic(1.0).unwrap();
        let problem = GpProblem::from_potential(grid, &v, 0.0, 1e-12, 2.0).unwrap();
        let mut x = initial_guess(InitKind::Gaussian, grid, None).unwrap();
        let mut lambda = 0.0;
        for _ in 0..30 {
            let op = |d: &ComplexField<f64>| problem.apply_linear(d);
            let y = truncated_cg(op, &x, 1e-12, 2000).step;
            x = normalize(&y).unwrap();
            lambda = x.real_inner(&problem.apply_linear(&x));
        }
        lambda
    }

    #[test]
    fn initial_guesses_are_normalized_and_reproducible() {
        let grid = GridSpec::<f64>::new(8.0, 96).unwrap();
        for kind in [InitKind::Gaussian, InitKind::Vortex, InitKind::Random { seed: 5 }, InitKind::RescaledW { eps: 0.5 }] {
            let u = initial_guess(kind, grid, Some(w2())).unwrap();
            assert!((u.l2_norm() - 1.0).abs() < 1e-10);
        }
        let a = initial_guess(InitKind::Random { seed: 9 }, grid, None).unwrap();
        let b = initial_guess(InitKind::Random { seed: 9 }, grid, None).unwrap();
        assert_eq!(a.values(), b.values());
        let c = initial_guess(InitKind::Random { seed: 10 }, grid, None).unwrap();
        assert_ne!(a.values(), c.values());
        assert!(initial_guess::<f64>(InitKind::RescaledW { eps: 0.5 }, grid, None).is_err());
    }

    #[test]
    fn rescaled_start_matches_hat_infimum() {
        let w = w2();
        let rho = 40.0 * w.a_star.sqrt();
        let eps = 1.0 / 40.0;
        let grid = GridSpec::<f64>::new(0.5, 512).unwrap();
        let u = initial_guess(InitKind::RescaledW { eps }, grid, Some(w)).unwrap();
        let e = crate::energy::hat_energy(&u.modulus(), rho, 2.0).unwrap();
        let target = -0.5 / (eps * eps);
        assert!((e / target - 1.0).abs() < 0.02, "{e} vs {target}");
    }

    #[test]
    fn flow_preserves_reality_without_rotation() {
        let grid = GridSpec::<f64>::new(6.0, 64).unwrap();
        let v = PotentialSpec::anisotropic(1.0, 2.0).unwrap();
        let u = initial_guess(InitKind::Gaussian, grid, None).unwrap();
        let next = flow_step(&u, &v, 0.0, 2.0, 2.0, 0.01).unwrap();
        assert!(next.imag_part().values().iter().all(|x| x.abs() < 1e-12));
        assert!((next.l2_norm() - 1.0).abs() < 1e-12);
        let e0 = gp_energy(&u, &v, 0.0, 2.0, 2.0).unwrap().total;
        let e1 = gp_energy(&next, &v, 0.0, 2.0, 2.0).unwrap().total;
        assert!(e1 < e0);
        assert!(flow_step(&u, &v, 0.0, 2.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn linear_limit_recovers_oscillator_energy() {
        let grid = GridSpec::<f64>::new(8.0, 96).unwrap();
        let v = PotentialSpec::harmonic(1.0).unwrap();
        let mut cfg = SolveConfig::new(grid);
        cfg.max_iter = 5000;
        let gs = solve_ground_state(&cfg, &v, 0.0, 1e-6, 2.0).unwrap();
        assert!(gs.converged, "residual {}", gs.residual);
        assert!((gs.energy.total - 2.0).abs() < 0.04, "{}", gs.energy.total);
        assert!((gs.mu - 2.0).abs() < 0.04, "{}", gs.mu);
        let lambda = discrete_oscillator_ground(grid);
        assert!((gs.mu - lambda).abs() < 1e-6, "{} vs {lambda}", gs.mu);
        assert!((gs.u.l2_norm() - 1.0).abs() < 1e-10);
        assert!(gs.history_nonincreasing());

        // a converged state is a fixed point of the flow
        let next = flow_step(&gs.u, &v, 0.0, 1e-6, 2.0, 0.01).unwrap();
        assert!(next.sub(&gs.u).l2_norm() < 1e-8);
    }

    #[test]
    fn supercritical_rotation_is_detected() {
        let grid = GridSpec::<f64>::new(8.0, 64).unwrap();
        let v = PotentialSpec::harmonic(1.0).unwrap();
        let mut cfg = SolveConfig::new(grid);
        cfg.max_iter = 20_000;
        let err = solve_ground_state(&cfg, &v, 3.0, 1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::EnergyUnbounded), "{err}");
        assert!(err.to_string().contains("energy unbounded"));
    }

    #[test]
    fn rotating_trap_and_gauge_equivariance() {
        let grid = GridSpec::<f64>::new(6.0, 64).unwrap();
        let v = PotentialSpec::harmonic(1.0).unwrap();
        let mut cfg = SolveConfig::new(grid);
        cfg.tol_residual = 1e-7;
        let base = solve_ground_state(&cfg, &v, 1.0, 3.0, 2.0).unwrap();
        assert!(base.converged);
        let problem = GpProblem::from_potential(grid, &v, 1.0, 3.0, 2.0).unwrap();
        let u0 = initial_guess(InitKind::Gaussian, grid, None).unwrap().scale(Complex::from_polar(1.0, 1.1));
        let turned = solve_from(&cfg, &problem, u0).unwrap();
        let al = phase_align(&turned.u, &base.u).unwrap();
        assert!(al.distance < 10.0 * cfg.tol_residual, "{}", al.distance);
        assert!(base.history_nonincreasing());
    }

    #[test]
    fn phase_alignment() {
        let grid = GridSpec::<f64>::new(5.0, 48).unwrap();
        let r = initial_guess(InitKind::Gaussian, grid, None).unwrap();
        let u = r.scale(Complex::from_polar(1.0, 0.7));
        let al = phase_align(&u, &r).unwrap();
        assert!((al.theta + 0.7).abs() < 1e-12);
        assert!(al.distance < 1e-12);

        let neg = r.scale(Complex::new(-1.0, 0.0));
        let al = phase_align(&neg, &r).unwrap();
        assert!((al.theta.abs() - std::f64::consts::PI).abs() < 1e-12);

        let v = initial_guess(InitKind::Random { seed: 2 }, grid, None).unwrap();
        let al = phase_align(&v, &r).unwrap();
        let proj = al.aligned.imag_part().values().iter().zip(r.real_part().values()).map(|(a, b)| a * b).sum::<f64>();
        assert!(proj.abs() * grid.cell_area() < 1e-10);

        let vortex = initial_guess(InitKind::Vortex, grid, None).unwrap();
        let al = phase_align(&vortex, &r).unwrap();
        assert!(al.gauge_undetermined && al.theta == 0.0);
        assert!(phase_align(&r, &ComplexField::zeros(grid)).is_err());
    }

    #[test]
    fn probe_energies_fall_above_critical_speed() {
        let w = w2();
        let grid = GridSpec::<f64>::new(12.0, 512).unwrap();
        let v = PotentialSpec::harmonic(1.0).unwrap();
        let table = nonexistence_probe(grid, &v, 3.0, 2.0, 2.0, w, &[1.0, 2.0, 4.0]).unwrap();
        assert!(table.unbounded_direction);
        assert!(table.strictly_decreasing(), "{:?}", table.rows);

        let below = nonexistence_probe(grid, &v, 1.0, 2.0, 2.0, w, &[1.0, 2.0]).unwrap();
        assert!(!below.unbounded_direction);
        assert!(below.rows.iter().all(|r| r.center == [0.0, 0.0]));

        assert!(nonexistence_probe(grid, &v, 3.0, 2.0, 2.0, w, &[0.0]).is_err());
        let small = GridSpec::<f64>::new(4.0, 128).unwrap();
        assert!(matches!(
            nonexistence_probe(small, &v, 3.0, 2.0, 2.0, w, &[8.0]),
            Err(Error::GridTooSmall)
        ));
    }

    #[test]
    fn config_validation() {
        let grid = GridSpec::<f64>::new(4.0, 32).unwrap();
        let mut cfg = SolveConfig::<f64>::new(grid);
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolveConfig::<f64>::new(grid);
        cfg.backtrack = 1.5;
        assert!(cfg.validate().is_err());
    }
}
