//! Run configuration: a TOML file with `[physics]`, `[grid]`, `[potential]`,
//! `[solver]` and optional `[probe]` / `[asymptotics]` sections.

use std::fmt;
use std::path::Path;

use rgs_core::minimize::{InitKind, SolveConfig};
use rgs_core::{Grid, Potential};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physics: Physics,
    pub grid: GridSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub asymptotics: AsymptoticsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub p: f64,
    #[serde(rename = "Omega", alias = "omega")]
    pub omega: Option<f64>,
    /// Sweep values of `Omega`; `cmd_sweep` uses them instead of `Omega`.
    #[serde(rename = "Omega_list", alias = "omega_list")]
    pub omega_list: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub rho_list: Option<Vec<f64>>,
    /// `rho` values are multiples of `sqrt(a*)`.
    #[serde(default)]
    pub rho_in_sqrt_a_star: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub n: usize,
    /// Solve for `v(x) = eps u(eps x)`; `half_width` is then in blow-up units.
    #[serde(default)]
    pub rescaled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: String,
    pub coeffs: Vec<f64>,
    pub s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol_energy: Option<f64>,
    pub tol_residual: Option<f64>,
    /// `gaussian`, `rescaled_w`, `vortex` or `random`.
    pub init: Option<String>,
    /// Scale of the `rescaled_w` start; defaults to 1 on rescaled grids and
    /// to `eps_rho` otherwise.
    pub init_eps: Option<f64>,
    pub seed: Option<u64>,
    pub backtrack: Option<f64>,
    pub newton: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub taus: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsSection {
    /// `grid` (default) or `continuum`.
    pub hat_reference: Option<String>,
    pub starts: Option<usize>,
}

/// A configuration problem, located at a key and line when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, self.line) {
            (Some(k), Some(l)) => write!(f, "config error at key '{k}' (line {l}): {}", self.message),
            (Some(k), None) => write!(f, "config error at key '{k}': {}", self.message),
            (None, Some(l)) => write!(f, "config error (line {l}): {}", self.message),
            (None, None) => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `key = ...` inside `[section]`, if present.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

#[derive(Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub source: String,
}

impl Loaded {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: None,
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_str(&source)
    }

    pub fn from_str(source: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(source).map_err(|e| {
            let message = e.message().to_string();
            let key = message
                .split('`')
                .nth(1)
                .map(str::to_string);
            ConfigError {
                key,
                line: e.span().map(|s| line_of(source, s.start)),
                message,
            }
        })?;
        let loaded = Loaded {
            config,
            source: source.to_string(),
        };
        loaded.check()?;
        Ok(loaded)
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            key: Some(format!("{section}.{key}")),
            line: locate(&self.source, section, key).or_else(|| locate(&self.source, section, "")),
            message: message.into(),
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        let ph = &c.physics;
        if !(ph.p > 1.0 && ph.p < 3.0) {
            return Err(self.err("physics", "p", format!("p out of range (1,3): {}", ph.p)));
        }
        let omegas: Vec<f64> = ph.omega.iter().copied().chain(ph.omega_list.iter().flatten().copied()).collect();
        if omegas.is_empty() {
            return Err(self.err("physics", "Omega", "Omega is required (no default)"));
        }
        if let Some(o) = omegas.iter().find(|o| !(**o >= 0.0) || !o.is_finite()) {
            return Err(self.err("physics", if ph.omega == Some(*o) { "Omega" } else { "Omega_list" }, format!("Omega must be >= 0, got {o}")));
        }
        if let Some(r) = ph.rho.iter().chain(ph.rho_list.iter().flatten()).find(|r| !(**r > 0.0) || !r.is_finite()) {
            let key = if ph.rho == Some(*r) { "rho" } else { "rho_list" };
            return Err(self.err("physics", key, format!("rho must be > 0, got {r}")));
        }
        if c.grid.n < 16 {
            return Err(self.err("grid", "n", format!("n = {} < 16", c.grid.n)));
        }
        if !(c.grid.half_width > 0.0) || !c.grid.half_width.is_finite() {
            return Err(self.err("grid", "half_width", format!("half_width must be positive, got {}", c.grid.half_width)));
        }
        self.potential()?;
        self.solve_config(1.0)?;
        if let Some(t) = c.probe.taus.iter().flatten().find(|t| !(**t > 0.0)) {
            return Err(self.err("probe", "taus", format!("tau must be > 0, got {t}")));
        }
        if let Some(h) = &c.asymptotics.hat_reference {
            if h != "grid" && h != "continuum" {
                return Err(self.err("asymptotics", "hat_reference", format!("expected 'grid' or 'continuum', got '{h}'")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.config.grid.half_width, self.config.grid.n).map_err(|e| self.err("grid", "n", e.to_string()))
    }

    pub fn potential(&self) -> Result<Potential, ConfigError> {
        let p = &self.config.potential;
        Potential::from_parts(&p.kind, &p.coeffs, p.s).map_err(|e| {
            let key = match &e {
                rgs_core::Error::InvalidPotential(m) if m.contains("coefficients") => "coeffs",
                rgs_core::Error::InvalidPotential(m) if m.contains("requires s") => "s",
                rgs_core::Error::InvalidPotential(m) if m.contains("kind") => "kind",
                _ => "coeffs",
            };
            self.err("potential", key, e.to_string())
        })
    }

    /// Solver settings; `init_eps` fills the `rescaled_w` scale when the
    /// config does not give one.
    pub fn solve_config(&self, init_eps: f64) -> Result<SolveConfig<f64>, ConfigError> {
        let s = &self.config.solver;
        let mut cfg = SolveConfig::new(self.grid()?);
        if let Some(v) = s.dt {
            cfg.dt = v;
        }
        if let Some(v) = s.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = s.tol_energy {
            cfg.tol_energy = v;
        }
        if let Some(v) = s.tol_residual {
            cfg.tol_residual = v;
        }
        if let Some(v) = s.backtrack {
            cfg.backtrack = v;
        }
        if let Some(v) = s.newton {
            cfg.newton = v;
        }
        cfg.init = match s.init.as_deref() {
            None | Some("gaussian") => InitKind::Gaussian,
            Some("rescaled_w") => InitKind::RescaledW {
                eps: s.init_eps.unwrap_or(init_eps),
            },
            Some("vortex") => InitKind::Vortex,
            Some("random") => InitKind::Random { seed: s.seed.unwrap_or(0) },
            Some(other) => {
                return Err(self.err(
                    "solver",
                    "init",
                    format!("unknown init '{other}', expected gaussian | rescaled_w | vortex | random"),
                ))
            }
        };
        cfg.validate().map_err(|e| {
            let m = e.to_string();
            let key = if m.contains("dt") {
                "dt"
            } else if m.contains("backtrack") {
                "backtrack"
            } else {
                "tol_residual"
            };
            self.err("solver", key, m)
        })?;
        Ok(cfg)
    }

    /// `Omega` for single runs.
    pub fn omega(&self) -> Result<f64, ConfigError> {
        let ph = &self.config.physics;
        ph.omega
            .or_else(|| ph.omega_list.as_ref().and_then(|l| l.first().copied()))
            .ok_or_else(|| self.err("physics", "Omega", "Omega is required"))
    }

    pub fn omega_values(&self) -> Vec<f64> {
        let ph = &self.config.physics;
        match &ph.omega_list {
            Some(l) if !l.is_empty() => l.clone(),
            _ => ph.omega.into_iter().collect(),
        }
    }

    /// `rho` values as written (before any `sqrt(a*)` scaling).
    pub fn rho_values(&self) -> Vec<f64> {
        let ph = &self.config.physics;
        match &ph.rho_list {
            Some(l) if !l.is_empty() => l.clone(),
            _ => ph.rho.into_iter().collect(),
        }
    }

    pub fn single_rho(&self) -> Result<f64, ConfigError> {
        self.config
            .physics
            .rho
            .or_else(|| self.config.physics.rho_list.as_ref().and_then(|l| l.first().copied()))
            .ok_or_else(|| self.err("physics", "rho", "rho is required (no default)"))
    }

    pub fn missing(&self, section: &str, key: &str, message: &str) -> ConfigError {
        self.err(section, key, message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[physics]
p = 2.0
Omega = 1.0
rho = 40.0
rho_in_sqrt_a_star = true

[grid]
half_width = 12.0
n = 256
rescaled = true

[potential]
kind = "harmonic"
coeffs = [1.0]

[solver]
init = "rescaled_w"
"#;

    #[test]
    fn parses_a_complete_config() {
        let l = Loaded::from_str(GOOD).unwrap();
        assert_eq!(l.config.physics.p, 2.0);
        assert_eq!(l.omega().unwrap(), 1.0);
        assert_eq!(l.rho_values(), vec![40.0]);
        let cfg = l.solve_config(1.0).unwrap();
        assert_eq!(cfg.init, InitKind::RescaledW { eps: 1.0 });
        assert_eq!(cfg.grid.n(), 256);
    }

    #[test]
    fn errors_name_key_and_line() {
        let bad = GOOD.replace("p = 2.0", "p = 3.5");
        let e = Loaded::from_str(&bad).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("physics.p"));
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().contains("p out of range (1,3)"));

        let bad = GOOD.replace("n = 256", "n = \"many\"");
        let e = Loaded::from_str(&bad).unwrap_err();
        assert_eq!(e.line, Some(10));
        assert!(e.to_string().contains("line 10"), "{e}");

        let bad = GOOD.replace("rho = 40.0", "rh0 = 40.0");
        let e = Loaded::from_str(&bad).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("rh0"));
        assert_eq!(e.line, Some(5));

        let bad = GOOD.replace("coeffs = [1.0]", "coeffs = [1.0, 2.0]");
        let e = Loaded::from_str(&bad).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("potential.coeffs"));
        assert_eq!(e.line, Some(15));

        let bad = GOOD.replace("Omega = 1.0\n", "");
        let e = Loaded::from_str(&bad).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("physics.Omega"));

        let bad = GOOD.replace("init = \"rescaled_w\"", "init = \"spiral\"");
        let e = Loaded::from_str(&bad).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("solver.init"));
        assert_eq!(e.line, Some(18));
    }

    #[test]
    fn potential_invariant_is_named() {
        let bad = GOOD.replace("coeffs = [1.0]", "coeffs = [-1.0]");
        let e = Loaded::from_str(&bad).unwrap_err();
        assert!(e.to_string().contains("V(x) >= 0"), "{e}");
    }
}
