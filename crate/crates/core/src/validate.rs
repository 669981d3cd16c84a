//! Deterministic invariant suite behind `rgs validate`.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asymptotics::{
    blowup_report, epsilon_rho, grid_hat_energy, hat_i_of_rho, solve_rescaled, to_physical, HatReference,
};
use crate::energy::{diamagnetic_check, gp_energy, hat_energy, GpProblem};
use crate::error::Result;
use crate::grid::{angular_derivative, integrate, laplacian, normalize, ComplexField, GridSpec, RealField};
use crate::minimize::{flow_step_with, initial_guess, phase_align, solve_from, InitKind, SolveConfig};
use crate::potentials::{minimize_h_functional, EffectivePotential, HFunctional, Potential, PotentialKind, PotentialSpec};
use crate::scalar_ground::{identities_residual, solve_w, solve_w_with, RadialProfile, ShootingOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(module: &'static str, name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult { module, name, passed, detail }
    }

    fn failed(module: &'static str, name: &'static str, err: crate::Error) -> Self {
        CheckResult::new(module, name, false, format!("error: {err}"))
    }
}

/// Fixed-width table, one row per check.
pub fn format_table(results: &[CheckResult]) -> String {
    let mut out = format!("{:<14} {:<40} {:<6} {}\n", "module", "invariant", "result", "detail");
    for r in results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{:<14} {:<40} {:<6} {}\n", r.module, r.name, verdict, r.detail));
    }
    out
}

fn wrap(module: &'static str, name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult::new(module, name, passed, detail),
        Err(e) => CheckResult::failed(module, name, e),
    }
}

/// Smooth complex field vanishing on the boundary, random coefficients.
fn random_field(grid: GridSpec<f64>, rng: &mut ChaCha8Rng) -> ComplexField<f64> {
    let bumps: Vec<(f64, f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(0.5..1.5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let l = grid.half_width();
    ComplexField::from_fn(grid, |x| {
        let window = ((l * l - x[0] * x[0]) * (l * l - x[1] * x[1])).max(0.0) / (l * l * l * l);
        bumps.iter().fold(Complex::new(0.0, 0.0), |acc, &(cx, cy, s, re, im)| {
            let g = (-((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / (s * s)).exp();
            acc + Complex::new(re, im) * g * window
        })
    })
}

fn grid_checks(seed: u64, out: &mut Vec<CheckResult>) {
    const M: &str = "core_grid";
    let grid = GridSpec::new(4.0, 64).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_field(grid, &mut rng);
    let g = random_field(grid, &mut rng);

    let a = laplacian(&f).real_inner(&g);
    let b = f.real_inner(&laplacian(&g));
    let rel = (a - b).abs() / a.abs().max(b.abs());
    out.push(CheckResult::new(M, "laplacian symmetry", rel <= 1e-10, format!("rel {rel:.1e}")));

    let dens = f.density().to_complex();
    let div = angular_derivative(&dens).values().iter().map(|z| z.re).sum::<f64>() * grid.cell_area();
    let scale = integrate(&f.density());
    let ik = angular_derivative(&f).scale(Complex::new(0.0, 1.0));
    let m = f.inner(&ik);
    let ok = div.abs() <= 1e-3 * scale && m.im.abs() <= 1e-12 * m.norm().max(1e-300);
    out.push(CheckResult::new(
        M,
        "rotation field divergence-free",
        ok,
        format!("int {:.1e}, Im momentum {:.1e}", div.abs() / scale, m.im.abs()),
    ));

    let p = f.density();
    let q = g.density();
    let (s, t): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    out.push(wrap(M, "integrate linear and monotone", || {
        let comb = RealField::from_values(grid, p.values().iter().zip(q.values()).map(|(a, b)| s * a + t * b).collect())?;
        let lin = (integrate(&comb) - s * integrate(&p) - t * integrate(&q)).abs();
        let mono = integrate(&p) >= 0.0 && integrate(&p.map(|v| v + 1e-3)) > integrate(&p);
        Ok((lin <= 1e-12 * (integrate(&p) + integrate(&q)) && mono, format!("linearity {lin:.1e}")))
    }));

    out.push(wrap(M, "normalize idempotent, degree 0", || {
        let n1 = normalize(&f)?;
        let n2 = normalize(&n1)?;
        let n3 = normalize(&f.scale(Complex::new(3.7, 0.0)))?;
        let d = n2.sub(&n1).sup_norm().max(n3.sub(&n1).sup_norm());
        Ok((d <= 1e-14, format!("max diff {d:.1e}")))
    }));
}

fn scalar_checks(out: &mut Vec<CheckResult>, w2: &RadialProfile<f64>) {
    const M: &str = "scalar_ground";
    for (name, p) in [("identities p=1.5", 1.5), ("identities p=2", 2.0), ("identities p=2.5", 2.5)] {
        out.push(wrap(M, name, || {
            let w = if p == 2.0 { w2.clone() } else { solve_w(p, 1e-6)? };
            let r = identities_residual(&w);
            Ok((r.r1 < 1e-4 && r.r2 < 1e-4, format!("r1 {:.1e}, r2 {:.1e}", r.r1, r.r2)))
        }));
    }
    out.push(wrap(M, "refinement changes a* < 1e-4", || {
        let opts = ShootingOptions::for_exponent(2.0f64);
        let fine = ShootingOptions {
            r_max: opts.r_max,
            step: opts.step / 2.0,
        };
        let a = solve_w_with(2.0, 1e-6, &opts)?.a_star;
        let b = solve_w_with(2.0, 1e-6, &fine)?.a_star;
        let rel = (a - b).abs() / b;
        Ok((rel < 1e-4, format!("rel {rel:.1e}")))
    }));
    let f = |r: f64| w2.eval(r).ln() + r + 0.5 * r.ln();
    let (a, b) = (w2.r_max / 2.0, 0.9 * w2.r_max);
    let slope = (f(b) - f(a)) / (b - a);
    out.push(CheckResult::new(M, "exponential tail", slope.abs() < 1e-2, format!("slope {slope:.1e}")));
}

fn potential_checks(out: &mut Vec<CheckResult>, w2: &RadialProfile<f64>) {
    const M: &str = "potentials";
    out.push(wrap(M, "homogeneity of declared degree", || {
        let specs = [
            (PotentialSpec::harmonic(1.0)?, 2.0),
            (PotentialSpec::anisotropic(1.0, 4.0)?, 2.0),
            (
                PotentialSpec::new(PotentialKind::HomogeneousPlus {
                    c1: 1.0,
                    c2: 2.0,
                    s: 1.5,
                    quad: 0.0,
                    quartic: 0.0,
                })?,
                1.5,
            ),
        ];
        for (v, s) in &specs {
            v.check_homogeneity(*s)?;
        }
        Ok((true, format!("{} potentials", specs.len())))
    }));
    out.push(wrap(M, "V_Omega nonincreasing in Omega", || {
        let v = PotentialSpec::anisotropic(1.0, 3.0)?;
        let mut worst = f64::NEG_INFINITY;
        for k in 0..16 {
            let th = k as f64 * std::f64::consts::PI / 8.0;
            for r in [0.3, 1.0, 4.0] {
                let x = [r * th.cos(), r * th.sin()];
                let mut prev = f64::INFINITY;
                for om in [0.0, 0.5, 1.0, 1.5, 2.5] {
                    let val = EffectivePotential::new(v.clone(), om).value(x);
                    worst = worst.max(val - prev);
                    prev = val;
                }
            }
        }
        Ok((worst <= 0.0, format!("max increase {worst:.1e}")))
    }));
    out.push(wrap(M, "confining below critical speed", || {
        let v = EffectivePotential::new(PotentialSpec::harmonic(1.0)?, 1.5);
        let mut lo = f64::INFINITY;
        let mut spread = 0.0f64;
        for k in 0..16 {
            let th = k as f64 * std::f64::consts::PI / 8.0;
            let ratios: Vec<f64> = [10.0, 20.0, 40.0]
                .iter()
                .map(|r| v.value([r * th.cos(), r * th.sin()]) / (r * r))
                .collect();
            lo = lo.min(ratios[2]);
            spread = spread.max((ratios[2] - ratios[0]).abs());
        }
        Ok((lo > 0.0 && spread < 1e-12, format!("min ratio {lo:.4}")))
    }));
    out.push(wrap(M, "H translation consistency", || {
        let h = PotentialSpec::harmonic(0.75)?;
        let grid = GridSpec::new(12.0, 241)?;
        let shift = [1.0, -0.5];
        let base = minimize_h_functional(&HFunctional::on_grid(&h, w2, [0.0, 0.0], grid)?)?.y0;
        let moved = minimize_h_functional(&HFunctional::on_grid(&h, w2, shift, grid)?)?.y0;
        let err = ((moved[0] - base[0] + shift[0]).powi(2) + (moved[1] - base[1] + shift[1]).powi(2)).sqrt();
        Ok((err < grid.spacing(), format!("offset error {err:.1e}")))
    }));
}

fn energy_checks(seed: u64, out: &mut Vec<CheckResult>) {
    const M: &str = "energy";
    let grid = GridSpec::new(4.0, 64).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let u = normalize(&random_field(grid, &mut rng)).expect("nonzero field");
    let v = PotentialSpec::harmonic(1.0).expect("valid potential");
    let (omega, rho, p) = (0.8, 2.0, 2.0);
    let theta = rng.gen_range(0.0..6.0);
    let phase = Complex::from_polar(1.0, theta);

    out.push(wrap(M, "phase gauge invariance", || {
        let a = gp_energy(&u, &v, omega, rho, p)?.total;
        let b = gp_energy(&u.scale(phase), &v, omega, rho, p)?.total;
        let rel = (a - b).abs() / a.abs();
        Ok((rel < 1e-12, format!("rel {rel:.1e}")))
    }));
    out.push(wrap(M, "momentum flips under conjugation", || {
        let a = gp_energy(&u, &v, omega, rho, p)?.momentum;
        let b = gp_energy(&u.conj(), &v, omega, rho, p)?.momentum;
        let err = (a + b).abs();
        Ok((err < 1e-12 * a.abs().max(1e-12) + 1e-14, format!("m {a:.3e}, sum {err:.1e}")))
    }));
    out.push(wrap(M, "real reduction to hat energy", || {
        let r = normalize(&u.modulus().to_complex())?;
        let full = gp_energy(&r, &v, 0.0, rho, p)?.total;
        let pot = integrate(&RealField::from_values(
            grid,
            v.sample(grid).values().iter().zip(r.values()).map(|(a, z)| a * z.norm_sqr()).collect(),
        )?);
        let hat = hat_energy(&r.real_part(), rho, p)?;
        let err = (full - hat - pot).abs();
        Ok((err < 1e-12 * full.abs(), format!("diff {err:.1e}")))
    }));
    out.push(wrap(M, "EL residual gauge invariance", || {
        let prob = GpProblem::from_potential(grid, &v, omega, rho, p)?;
        let e = prob.energy(&u)?.total;
        let mu = prob.multiplier(&u, e);
        let a = prob.el_residual(&u, mu)?;
        let b = prob.el_residual(&u.scale(phase), mu)?;
        let rel = (a - b).abs() / a;
        Ok((rel < 1e-12, format!("rel {rel:.1e}")))
    }));
}

fn minimize_checks(seed: u64, out: &mut Vec<CheckResult>) {
    const M: &str = "minimize";
    let grid = GridSpec::new(6.0, 64).expect("valid grid");
    let v = PotentialSpec::harmonic(1.0).expect("valid potential");
    let (omega, rho, p) = (1.0, 3.0, 2.0);
    let mut cfg = SolveConfig::new(grid);
    cfg.init = InitKind::Random { seed };
    let problem = match GpProblem::from_potential(grid, &v, omega, rho, p) {
        Ok(pr) => pr,
        Err(e) => {
            out.push(CheckResult::failed(M, "setup", e));
            return;
        }
    };
    let base = initial_guess(cfg.init, grid, None).and_then(|u0| solve_from(&cfg, &problem, u0));
    let base = match base {
        Ok(b) => b,
        Err(e) => {
            out.push(CheckResult::failed(M, "baseline solve", e));
            return;
        }
    };

    out.push(wrap(M, "gauge equivariance", || {
        let u0 = initial_guess(cfg.init, grid, None)?.scale(Complex::from_polar(1.0, 1.1));
        let other = solve_from(&cfg, &problem, u0)?;
        let al = phase_align(&other.u, &base.u)?;
        let d = al.aligned.sub(&base.u).sup_norm();
        Ok((d <= 10.0 * cfg.tol_residual, format!("sup dist {d:.1e}")))
    }));
    out.push(wrap(M, "constraint preservation", || {
        let mut u: ComplexField<f64> = initial_guess(InitKind::Random { seed }, grid, None)?;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            u = flow_step_with(&problem, &u, 0.05)?;
            worst = worst.max((u.l2_norm() - 1.0).abs());
        }
        Ok((worst <= 1e-10, format!("max |norm - 1| {worst:.1e}")))
    }));
    out.push(CheckResult::new(
        M,
        "accepted-step monotonicity",
        base.history_nonincreasing(),
        format!("{} accepted iterates", base.history.len()),
    ));
    out.push(wrap(M, "diamagnetic lower bound", || {
        let modulus = base.u.modulus();
        let hat = hat_energy(&modulus, rho, p)?;
        let veff = EffectivePotential::new(v.clone(), omega).sample(grid);
        let pot = integrate(&RealField::from_values(
            grid,
            veff.values().iter().zip(modulus.values()).map(|(a, m)| a * m * m).collect(),
        )?);
        let check = diamagnetic_check(&base.u, omega);
        let tol = 10.0 * grid.spacing() * grid.spacing();
        let gap = base.energy.total - hat - pot;
        Ok((gap >= -tol && check.max_violation <= tol, format!("gap {gap:.3e}")))
    }));
}

fn asymptotics_checks(out: &mut Vec<CheckResult>, w2: &RadialProfile<f64>) {
    const M: &str = "asymptotics";
    let a = w2.a_star;
    out.push(wrap(M, "eps decreasing, eps^2 I_hat identity", || {
        let rhos = [1.0, 2.0, 5.0, 10.0, 40.0, 1e3];
        let mut prev = f64::INFINITY;
        let mut ok = true;
        let mut worst = 0.0f64;
        for &m in &rhos {
            let e = epsilon_rho(m * a.sqrt(), a, 2.0)?;
            ok &= e < prev;
            prev = e;
            worst = worst.max((e * e * hat_i_of_rho(m * a.sqrt(), a, 2.0)? + 0.5).abs());
        }
        Ok((ok && worst < 1e-12 && prev < 1e-2, format!("identity err {worst:.1e}")))
    }));

    let v = PotentialSpec::harmonic(1.0).expect("valid potential");
    let rho = 10.0 * a.sqrt();
    let run = |n: usize| -> Result<(crate::asymptotics::BlowupReport<f64>, f64)> {
        let grid = GridSpec::new(7.0, n)?;
        let mut cfg = SolveConfig::new(grid);
        cfg.init = InitKind::RescaledW { eps: 1.0 };
        let gs = solve_rescaled(&cfg, &v, 1.0, rho, 2.0, w2)?;
        let hat = HatReference::Grid {
            rescaled_energy: grid_hat_energy(&cfg, w2)?,
        };
        let rep = blowup_report(&gs, w2, 1.0, rho, 2.0, hat)?;
        // round-off of the converged energies
        let tol = 1e-8 * rep.i.abs();
        Ok((rep, tol))
    };
    match run(128) {
        Ok((rep, tol)) => {
            out.push(CheckResult::new(M, "gap >= -quadrature tolerance", rep.gap >= -tol, format!("gap {:.3e}, tol {tol:.1e}", rep.gap)));
            out.push(CheckResult::new(
                M,
                "rescaled mass",
                (rep.rescaled_mass - 1.0).abs() < 1e-3,
                format!("||w_rho|| {:.6}", rep.rescaled_mass),
            ));
            out.push(CheckResult::new(
                M,
                "gauge orthogonality",
                rep.gauge_orthogonality < 1e-8,
                format!("{:.1e}", rep.gauge_orthogonality),
            ));
            out.push(wrap(M, "z/eps stable under refinement", || {
                let (fine, _) = run(255)?;
                let d = ((fine.z_over_eps[0] - rep.z_over_eps[0]).powi(2) + (fine.z_over_eps[1] - rep.z_over_eps[1]).powi(2)).sqrt();
                Ok((d < 0.1, format!("shift {d:.1e}")))
            }));
        }
        Err(e) => out.push(CheckResult::failed(M, "rescaled solve", e)),
    }
    // keep the physical conversion in the suite: energies scale by eps^-2
    out.push(wrap(M, "rescaled energy map", || {
        let grid = GridSpec::new(6.0, 48)?;
        let eps = 0.5f64;
        let u: ComplexField<f64> = initial_guess(InitKind::Gaussian, grid, None)?;
        let prob = GpProblem::from_potential(grid, &crate::potentials::Free, 0.0, 2.0, 2.0)?;
        let e = prob.energy(&u)?;
        let gs = crate::minimize::GroundState {
            u,
            energy: e,
            mu: 0.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
            history: Vec::new(),
            newton_steps: 0,
            init: InitKind::Gaussian,
        };
        let phys = to_physical(&gs, eps)?;
        let direct = gp_energy(&phys.u, &crate::potentials::Free, 0.0, 2.0 / eps, 2.0)?.total;
        let rel = (direct - phys.energy.total).abs() / direct.abs();
        Ok((rel < 1e-10, format!("rel {rel:.1e}")))
    }));
}

/// Runs every check. Results depend only on `seed`.
pub fn run_validation(seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    grid_checks(seed, &mut out);
    let w2 = match solve_w(2.0, 1e-6) {
        Ok(w) => w,
        Err(e) => {
            out.push(CheckResult::failed("scalar_ground", "solve_w p=2", e));
            return out;
        }
    };
    scalar_checks(&mut out, &w2);
    potential_checks(&mut out, &w2);
    energy_checks(seed, &mut out);
    minimize_checks(seed, &mut out);
    asymptotics_checks(&mut out, &w2);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_formatting() {
        let rows = vec![
            CheckResult::new("m", "a", true, "x".into()),
            CheckResult::new("m", "b", false, "y".into()),
        ];
        let t = format_table(&rows);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("PASS") && t.contains("FAIL"));
    }

    #[test]
    fn fast_sections_pass() {
        let mut out = Vec::new();
        grid_checks(11, &mut out);
        energy_checks(11, &mut out);
        for r in &out {
            assert!(r.passed, "{r:?}");
        }
    }
}
