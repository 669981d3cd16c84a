//! Subcommand implementations. Each writes its outputs plus a manifest.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rgs_core::asymptotics::{
    blowup_report, blowup_sweep, concentration_track, epsilon_rho, solve_rescaled, uniqueness_probe, BlowupReport,
};
use rgs_core::energy::{EnergyRow, GpProblem};
use rgs_core::grid::write_complex_field;
use rgs_core::minimize::{initial_guess, nonexistence_probe, solve_from, GroundState, InitKind, SolveConfig};
use rgs_core::potentials::{minimize_h, nondegeneracy, omega_star, PotentialKind};
use rgs_core::scalar_ground::{solve_w as core_solve_w, RadialProfile};
use rgs_core::validate::{format_table, run_validation};
use rgs_core::{Error, Potential};
use serde_json::json;

use crate::config::{ConfigError, Loaded};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    Invariant(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Solver(m) | CliError::Invariant(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidGrid(_)
            | Error::ExponentOutOfRange(_)
            | Error::InvalidParameter(_)
            | Error::InvalidPotential(_)
            | Error::SubQuadraticGrowth
            | Error::GridTooSmall
            | Error::UnderResolved(_) => CliError::Config(e.to_string()),
            Error::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

type Res<T> = std::result::Result<T, CliError>;

pub struct Ctx {
    threads: usize,
    seed: Option<u64>,
    started: Instant,
}

impl Ctx {
    pub fn new(threads: usize, seed: Option<u64>) -> Self {
        Ctx {
            threads,
            seed,
            started: Instant::now(),
        }
    }

    fn manifest(&self, path: &Path, command: &str, config: Option<&Loaded>, extra: serde_json::Value, outputs: &[String]) -> Res<()> {
        let m = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "args": std::env::args().collect::<Vec<_>>(),
            "threads": self.threads,
            "seed": self.seed,
            "config_source": config.map(|c| c.source.clone()),
            "config": config.map(|c| serde_json::to_value(&c.config).unwrap_or(serde_json::Value::Null)),
            "resolved": extra,
            "outputs": outputs,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }
}

fn create_dir(dir: &Path) -> Res<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn writer(path: &Path) -> Res<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn profile(p: f64) -> Res<RadialProfile<f64>> {
    Ok(core_solve_w(p, 1e-6)?)
}

fn rho_scale(loaded: &Loaded, w: &RadialProfile<f64>) -> f64 {
    if loaded.config.physics.rho_in_sqrt_a_star {
        w.a_star.sqrt()
    } else {
        1.0
    }
}

/// Solver settings with the `--seed` override and the default `rescaled_w`
/// scale for the given `rho`.
fn solver_for(ctx: &Ctx, loaded: &Loaded, rho: f64, w: &RadialProfile<f64>) -> Res<SolveConfig<f64>> {
    let p = loaded.config.physics.p;
    let eps = if loaded.config.grid.rescaled { 1.0 } else { epsilon_rho(rho, w.a_star, p)? };
    let mut cfg = loaded.solve_config(eps)?;
    if let (InitKind::Random { .. }, Some(seed)) = (cfg.init, ctx.seed) {
        cfg.init = InitKind::Random { seed };
    }
    Ok(cfg)
}

fn ground_state(cfg: &SolveConfig<f64>, loaded: &Loaded, v: &Potential, omega: f64, rho: f64, w: &RadialProfile<f64>) -> Res<GroundState<f64>> {
    let p = loaded.config.physics.p;
    if loaded.config.grid.rescaled {
        Ok(solve_rescaled(cfg, v, omega, rho, p, w)?)
    } else {
        let problem = GpProblem::from_potential(cfg.grid, v, omega, rho, p)?;
        let u0 = initial_guess(cfg.init, cfg.grid, Some(w))?;
        Ok(solve_from(cfg, &problem, u0)?)
    }
}

fn energy_row(gs: &GroundState<f64>, omega: f64, rho: f64, p: f64) -> EnergyRow {
    EnergyRow {
        rho,
        omega,
        p,
        energy: gs.energy,
        mu: gs.mu,
        residual: gs.residual,
    }
}

fn write_state(dir: &Path, gs: &GroundState<f64>) -> Res<Vec<String>> {
    let mut f = writer(&dir.join("ground_state.rgs"))?;
    write_complex_field(&mut f, &gs.u)?;
    f.flush()?;
    let mut h = writer(&dir.join("history.csv"))?;
    writeln!(h, "step,energy,residual")?;
    for (k, e) in gs.history.iter().enumerate() {
        writeln!(h, "{k},{:e},{:e}", e.energy, e.residual)?;
    }
    h.flush()?;
    Ok(vec!["ground_state.rgs".into(), "history.csv".into()])
}

pub fn solve_w(ctx: &Ctx, p: f64, out: &Path, tol: f64) -> Res<()> {
    if !(p > 1.0 && p < 3.0) {
        return Err(CliError::Config(format!("p out of range (1,3): {p}")));
    }
    create_dir(out)?;
    let w = core_solve_w(p, tol).map_err(|e| match e {
        Error::ExponentOutOfRange(_) | Error::InvalidParameter(_) => CliError::from(e),
        other => CliError::Solver(format!("shooting failed: {other}")),
    })?;
    if w.is_stiff() {
        eprintln!("warning: p = {p} is close to 1; the profile is wide (r_max = {:.0}) and the shooting is stiff", w.r_max);
    }
    let mut f = writer(&out.join("profile.csv"))?;
    w.write_csv(&mut f)?;
    f.flush()?;
    let summary = w.summary();
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(out.join("summary.json"), text)?;
    println!("p = {p}: w0 = {:.10}, a* = {:.10}, r1 = {:.2e}, r2 = {:.2e}", summary.w0, summary.a_star, summary.r1, summary.r2);
    ctx.manifest(
        &out.join("manifest.json"),
        "solve-w",
        None,
        json!({ "p": p, "tol": tol }),
        &["profile.csv".into(), "summary.json".into()],
    )?;
    if summary.r1 < 1e-4 && summary.r2 < 1e-4 {
        Ok(())
    } else {
        Err(CliError::Solver(format!("identity residuals r1 = {:.2e}, r2 = {:.2e} exceed 1e-4", summary.r1, summary.r2)))
    }
}

pub fn solve(ctx: &Ctx, config: &Path, out: &Path) -> Res<()> {
    let loaded = Loaded::from_path(config)?;
    let p = loaded.config.physics.p;
    let omega = loaded.omega()?;
    let w = profile(p)?;
    let rho = loaded.single_rho()? * rho_scale(&loaded, &w);
    let v = loaded.potential()?;
    let cfg = solver_for(ctx, &loaded, rho, &w)?;
    create_dir(out)?;
    let gs = ground_state(&cfg, &loaded, &v, omega, rho, &w)?;
    let mut outputs = write_state(out, &gs)?;
    let row = energy_row(&gs, omega, rho, p);
    fs::write(out.join("energy.csv"), format!("{}\n{}\n", EnergyRow::HEADER, row.to_csv()))?;
    outputs.push("energy.csv".into());
    println!("{}\n{}", EnergyRow::HEADER, row.to_csv());
    println!(
        "converged = {}, iterations = {}, newton steps = {}",
        gs.converged, gs.iterations, gs.newton_steps
    );
    ctx.manifest(
        &out.join("manifest.json"),
        "solve",
        Some(&loaded),
        json!({ "rho": rho, "Omega": omega, "p": p, "init": cfg.init.label(), "converged": gs.converged }),
        &outputs,
    )?;
    if gs.converged {
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "not converged after {} iterations (residual {:.2e})",
            gs.iterations, gs.residual
        )))
    }
}

pub fn sweep(ctx: &Ctx, config: &Path, out: &Path, rhos: Option<Vec<f64>>) -> Res<()> {
    let loaded = Loaded::from_path(config)?;
    let p = loaded.config.physics.p;
    let w = profile(p)?;
    let rho_list: Vec<f64> = match rhos {
        Some(r) => r.iter().map(|m| m * w.a_star.sqrt()).collect(),
        None => loaded.rho_values().iter().map(|r| r * rho_scale(&loaded, &w)).collect(),
    };
    if rho_list.is_empty() {
        return Err(loaded.missing("physics", "rho_list", "rho or rho_list is required").into());
    }
    if let Some(r) = rho_list.iter().find(|r| !(**r > 0.0)) {
        return Err(CliError::Config(format!("rho must be > 0, got {r}")));
    }
    let omegas = loaded.omega_values();
    let v = loaded.potential()?;
    let jobs: Vec<(f64, f64)> = rho_list.iter().flat_map(|&r| omegas.iter().map(move |&o| (r, o))).collect();
    create_dir(out)?;
    let results: Vec<Res<GroundState<f64>>> = jobs
        .par_iter()
        .map(|&(rho, omega)| {
            let cfg = solver_for(ctx, &loaded, rho, &w)?;
            ground_state(&cfg, &loaded, &v, omega, rho, &w)
        })
        .collect();
    let mut csv = format!("{},converged,iterations\n", EnergyRow::HEADER);
    let mut outputs = vec!["energies.csv".to_string()];
    let mut failures = Vec::new();
    for (k, ((rho, omega), res)) in jobs.iter().zip(results).enumerate() {
        let name = format!("run_{k:03}");
        match res {
            Ok(gs) => {
                let dir = out.join(&name);
                create_dir(&dir)?;
                outputs.extend(write_state(&dir, &gs)?.into_iter().map(|f| format!("{name}/{f}")));
                csv.push_str(&format!("{},{},{}\n", energy_row(&gs, *omega, *rho, p).to_csv(), gs.converged, gs.iterations));
                if !gs.converged {
                    failures.push(format!("{name} (rho = {rho}, Omega = {omega}): not converged"));
                }
            }
            Err(e) => {
                csv.push_str(&format!("{rho},{omega},{p},,,,,,,,false,\n"));
                failures.push(format!("{name} (rho = {rho}, Omega = {omega}): {e}"));
            }
        }
    }
    fs::write(out.join("energies.csv"), &csv)?;
    print!("{csv}");
    ctx.manifest(
        &out.join("manifest.json"),
        "sweep",
        Some(&loaded),
        json!({ "runs": jobs.iter().map(|(r, o)| json!({"rho": r, "Omega": o})).collect::<Vec<_>>(), "failures": failures }),
        &outputs,
    )?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(failures.join("; ")))
    }
}

pub fn asymptotics(ctx: &Ctx, config: &Path, out: &Path, rhos: Option<Vec<f64>>) -> Res<()> {
    let loaded = Loaded::from_path(config)?;
    let p = loaded.config.physics.p;
    let omega = loaded.omega()?;
    let w = profile(p)?;
    let rho_list: Vec<f64> = match rhos {
        Some(r) => r.iter().map(|m| m * w.a_star.sqrt()).collect(),
        None => loaded.rho_values().iter().map(|r| r * rho_scale(&loaded, &w)).collect(),
    };
    if rho_list.is_empty() {
        return Err(loaded.missing("physics", "rho_list", "rho_list (or --rhos) is required").into());
    }
    if let Some(r) = rho_list.iter().find(|r| !(**r > 0.0)) {
        return Err(CliError::Config(format!("rho must be > 0, got {r}")));
    }
    let v = loaded.potential()?;
    let grid_ref = loaded.config.asymptotics.hat_reference.as_deref() != Some("continuum");
    let reports: Vec<BlowupReport<f64>> = if loaded.config.grid.rescaled {
        let cfg = solver_for(ctx, &loaded, rho_list[0], &w)?;
        blowup_sweep(&cfg, &v, omega, &rho_list, p, &w, grid_ref)?
    } else {
        if grid_ref && loaded.config.asymptotics.hat_reference.is_some() {
            eprintln!("note: the grid hat reference needs a rescaled grid; using the continuum formula");
        }
        rho_list
            .par_iter()
            .map(|&rho| {
                let cfg = solver_for(ctx, &loaded, rho, &w)?;
                let gs = ground_state(&cfg, &loaded, &v, omega, rho, &w)?;
                Ok(blowup_report(&gs, &w, omega, rho, p, rgs_core::asymptotics::HatReference::Continuum)?)
            })
            .collect::<Res<Vec<_>>>()?
    };
    if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut csv = format!("{}\n", BlowupReport::<f64>::HEADER);
    for r in &reports {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    fs::write(out, &csv)?;
    print!("{csv}");
    let mut sorted = reports.clone();
    sorted.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    let track = v
        .effective_core(omega)
        .map_err(CliError::from)
        .and_then(|h| concentration_track(&sorted, &h, &w).map_err(CliError::from));
    let track_json = match &track {
        Ok(t) => {
            println!(
                "z/eps at largest rho = ({:.3e}, {:.3e}), y0 = ({:.3e}, {:.3e}), |diff| = {:.3e}",
                t.y0_est[0], t.y0_est[1], t.y0_ref[0], t.y0_ref[1], t.err
            );
            json!({ "y0_est": t.y0_est, "y0_ref": t.y0_ref, "err": t.err })
        }
        Err(e) => {
            println!("concentration track unavailable: {e}");
            json!({ "unavailable": e.to_string() })
        }
    };
    let manifest = manifest_path(out);
    ctx.manifest(
        &manifest,
        "asymptotics",
        Some(&loaded),
        json!({ "rhos": rho_list, "Omega": omega, "p": p, "concentration": track_json }),
        &[out.display().to_string()],
    )?;
    let bad: Vec<String> = reports.iter().filter(|r| !r.converged).map(|r| format!("rho = {}", r.rho)).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(format!("not converged: {}", bad.join(", "))))
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn nonexistence(ctx: &Ctx, config: &Path, out: &Path) -> Res<()> {
    let loaded = Loaded::from_path(config)?;
    if loaded.config.grid.rescaled {
        return Err(loaded.missing("grid", "rescaled", "the probe runs on a physical grid; set rescaled = false").into());
    }
    let p = loaded.config.physics.p;
    let omega = loaded.omega()?;
    let w = profile(p)?;
    let rho = loaded.single_rho()? * rho_scale(&loaded, &w);
    let v = loaded.potential()?;
    let grid = loaded.grid()?;
    let taus = loaded.config.probe.taus.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
    let table = nonexistence_probe(grid, &v, omega, rho, p, &w, &taus)?;
    create_dir(out)?;
    let mut csv = String::from("tau,center_1,center_2,energy\n");
    for r in &table.rows {
        csv.push_str(&format!("{},{:e},{:e},{:e}\n", r.tau, r.center[0], r.center[1], r.energy));
    }
    fs::write(out.join("probe.csv"), &csv)?;
    print!("{csv}");
    if table.unbounded_direction {
        println!("strictly decreasing: {}", table.strictly_decreasing());
    } else {
        println!("V_Omega >= 0 on the grid: trial states centered at the origin, no conclusion");
    }
    ctx.manifest(
        &out.join("manifest.json"),
        "nonexistence",
        Some(&loaded),
        json!({ "rho": rho, "Omega": omega, "p": p, "taus": taus, "unbounded_direction": table.unbounded_direction,
                "strictly_decreasing": table.strictly_decreasing() }),
        &["probe.csv".into()],
    )
}

pub fn check_potential(ctx: &Ctx, config: &Path, out: Option<&Path>) -> Res<()> {
    let loaded = Loaded::from_path(config)?;
    let p = loaded.config.physics.p;
    let omega = loaded.omega()?;
    let v = loaded.potential()?;
    let w = profile(p)?;
    let mut report = serde_json::Map::new();
    report.insert("kind".into(), json!(format!("{:?}", v.kind())));
    match omega_star(&v) {
        Ok(s) => {
            println!("Omega* = {}{}", s.value, if s.estimated { " (estimated)" } else { "" });
            report.insert("omega_star".into(), json!({ "value": s.value, "estimated": s.estimated }));
        }
        Err(e) => {
            println!("Omega*: {e}");
            report.insert("omega_star".into(), json!({ "error": e.to_string() }));
        }
    }
    match v.effective_core(omega) {
        Ok(h) => {
            let core = format!("{:?}", h.kind());
            println!("homogeneous core of V_Omega at Omega = {omega}: {core}");
            let y0 = minimize_h(&h, &w)?;
            println!("y0 = ({:.6e}, {:.6e}), H(y0) = {:.10}", y0.y0[0], y0.y0[1], y0.value);
            let nd = nondegeneracy(&h, &w, y0.y0)?;
            let m = nd.matrix;
            println!("non-degeneracy matrix = [[{:.8}, {:.8}], [{:.8}, {:.8}]]", m[0][0], m[0][1], m[1][0], m[1][1]);
            println!("det = {:.8}, degenerate = {}", nd.det, nd.degenerate);
            if let PotentialKind::HomogeneousPlus { .. } = v.kind() {
                let rem = v.core_remainder(omega)?;
                println!("core remainder ratios at r = 1e-1, 1e-2, 1e-3: {:.3e}, {:.3e}, {:.3e}", rem[0], rem[1], rem[2]);
                report.insert("core_remainder".into(), json!(rem));
            }
            report.insert("core".into(), json!(core));
            report.insert("y0".into(), json!(y0.y0));
            report.insert("h_min".into(), json!(y0.value));
            report.insert("nondegeneracy".into(), json!({ "matrix": m, "det": nd.det, "degenerate": nd.degenerate }));
        }
        Err(e) => {
            println!("homogeneous core unavailable at Omega = {omega}: {e}");
            report.insert("core".into(), json!({ "error": e.to_string() }));
        }
    }
    report.insert("a_star".into(), json!(w.a_star));
    if let Some(dir) = out {
        create_dir(dir)?;
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(dir.join("potential.json"), text)?;
        ctx.manifest(&dir.join("manifest.json"), "check-potential", Some(&loaded), json!({ "Omega": omega, "p": p }), &["potential.json".into()])?;
    }
    Ok(())
}

pub fn uniqueness(ctx: &Ctx, config: &Path, out: &Path, starts: Option<usize>) -> Res<()> {
    let loaded = Loaded::from_path(config)?;
    if !loaded.config.grid.rescaled {
        return Err(loaded.missing("grid", "rescaled", "multi-start probe solves in rescaled coordinates; set rescaled = true").into());
    }
    let p = loaded.config.physics.p;
    let omega = loaded.omega()?;
    let w = profile(p)?;
    let rho = loaded.single_rho()? * rho_scale(&loaded, &w);
    let v = loaded.potential()?;
    let cfg = solver_for(ctx, &loaded, rho, &w)?;
    let n = starts.or(loaded.config.asymptotics.starts).unwrap_or(5);
    let seed = ctx.seed.or(loaded.config.solver.seed).unwrap_or(0);
    let rep = uniqueness_probe(&cfg, &v, omega, rho, p, &w, n, seed)?;
    create_dir(out)?;
    let mut csv = String::from("init,energy,residual,converged,kept,error\n");
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for r in &rep.runs {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.init,
            opt(r.energy),
            opt(r.residual),
            r.converged,
            r.kept,
            r.error.clone().unwrap_or_default().replace(',', ";")
        ));
    }
    fs::write(out.join("uniqueness.csv"), &csv)?;
    print!("{csv}");
    println!("max pairwise distance = {:.3e} (conclusive: {})", rep.max_pair_dist, rep.conclusive);
    ctx.manifest(
        &out.join("manifest.json"),
        "uniqueness",
        Some(&loaded),
        json!({ "rho": rho, "Omega": omega, "p": p, "starts": n, "seed": seed, "max_pair_dist": rep.max_pair_dist, "conclusive": rep.conclusive }),
        &["uniqueness.csv".into()],
    )
}

pub fn validate(ctx: &Ctx, out: Option<&Path>) -> Res<()> {
    let seed = ctx.seed.unwrap_or(0);
    let results = run_validation(seed);
    let table = format_table(&results);
    print!("{table}");
    if let Some(dir) = out {
        create_dir(dir)?;
        fs::write(dir.join("validate.txt"), &table)?;
        ctx.manifest(&dir.join("manifest.json"), "validate", None, json!({ "seed": seed }), &["validate.txt".into()])?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("{failed} invariant check(s) failed")))
    }
}
