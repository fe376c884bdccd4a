//! Scenario files: TOML with a fixed schema, validated before any solve.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use actuator_core::catalog::{self, WORST_CASE};
use actuator_core::optimize::OptimizeConfig;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Position,
    Design,
    WorstCase,
    Scan,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Constant(f64),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Discretization {
    Fem1d {
        n: usize,
        sigma: SigmaSpec,
    },
    Spectral2d {
        n_modes: usize,
        sigma: f64,
        grid: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionSection {
    /// Initial interval `[lo, hi]`.
    pub interval: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub width: f64,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    /// Also run one uninitialized solve at the last α of the schedule.
    #[serde(default)]
    pub cold_start: bool,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub problem: Problem,
    pub discretization: Discretization,
    #[serde(default)]
    pub initial_condition: Option<String>,
    pub gamma: f64,
    pub c: f64,
    /// Shorthand for `optimizer.alpha_schedule`; wins when both are given.
    #[serde(default)]
    pub alpha_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub optimizer: OptimizeConfig,
    #[serde(default)]
    pub position: Option<PositionSection>,
    #[serde(default)]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Scenario::parse(&source, path)
    }

    pub fn parse(source: &str, path: &Path) -> Result<Scenario, CliError> {
        let mut scenario: Scenario = toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start.min(source.len())].lines().count().max(1))
                .unwrap_or(1);
            CliError::Schema {
                path: path.to_path_buf(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        scenario.validate().map_err(|(table, key, message)| CliError::Schema {
            path: path.to_path_buf(),
            line: locate(source, table, key),
            message: format!("`{}`: {message}", qualified(table, key)),
        })?;
        if let Some(schedule) = scenario.alpha_schedule.take() {
            scenario.optimizer.alpha_schedule = schedule;
        }
        Ok(scenario)
    }

    /// Initial condition name; `worst_case` for the J₂ problem.
    pub fn objective_name(&self) -> &str {
        match self.problem {
            Problem::WorstCase => WORST_CASE,
            _ => self.initial_condition.as_deref().unwrap_or(WORST_CASE),
        }
    }

    fn validate(&self) -> Result<(), (Option<&'static str>, &'static str, String)> {
        let top = |key, msg: String| Err((None, key, msg));
        if !(self.gamma > 0.0) {
            return top("gamma", format!("must be positive, got {}", self.gamma));
        }
        if !(self.c > 0.0) {
            return top("c", format!("must be positive, got {}", self.c));
        }
        let dim = match &self.discretization {
            Discretization::Fem1d { n, sigma } => {
                if *n < 2 {
                    return Err((Some("discretization"), "n", format!("need at least 2 elements, got {n}")));
                }
                match sigma {
                    SigmaSpec::Constant(s) if !(*s > 0.0) => {
                        return Err((Some("discretization"), "sigma", format!("must be positive, got {s}")));
                    }
                    SigmaSpec::Named(name) if catalog::diffusion_profile(name).is_none() => {
                        return Err((Some("discretization"), "sigma", format!("unknown diffusion profile `{name}`")));
                    }
                    _ => {}
                }
                1
            }
            Discretization::Spectral2d { n_modes, sigma, grid } => {
                if *n_modes == 0 {
                    return Err((Some("discretization"), "n_modes", "must be at least 1".into()));
                }
                if !(*sigma > 0.0) {
                    return Err((Some("discretization"), "sigma", format!("must be positive, got {sigma}")));
                }
                if *grid < 2 {
                    return Err((Some("discretization"), "grid", format!("must be at least 2, got {grid}")));
                }
                2
            }
        };
        match (self.problem, self.initial_condition.as_deref()) {
            (Problem::WorstCase, Some(name)) if name != WORST_CASE => {
                return top("initial_condition", format!("worst_case problems take no initial condition, got `{name}`"));
            }
            (Problem::WorstCase, _) => {}
            (_, None) => return top("initial_condition", "required for this problem".into()),
            (Problem::Design, Some(WORST_CASE)) => {}
            (_, Some(WORST_CASE)) => {
                return top("initial_condition", "`worst_case` is only valid for design problems".into());
            }
            (_, Some(name)) => match catalog::initial_condition(name) {
                None => return top("initial_condition", format!("unknown catalog entry `{name}`")),
                Some(ic) if ic.dim != dim => {
                    return top("initial_condition", format!("`{name}` is {}D, discretization is {dim}D", ic.dim));
                }
                _ => {}
            },
        }
        let mut optimizer = self.optimizer.clone();
        if let Some(schedule) = &self.alpha_schedule {
            optimizer.alpha_schedule = schedule.clone();
        }
        if let Err(actuator_core::Error::InvalidParameter { name, reason }) = optimizer.validate() {
            let (table, key) = match name {
                "quad" => (Some("optimizer.quad"), "dt"),
                "alpha_schedule" if self.alpha_schedule.is_some() => (None, "alpha_schedule"),
                other => (Some("optimizer"), other),
            };
            return Err((table, key, reason));
        }
        match self.problem {
            Problem::Position => {
                if dim != 1 {
                    return top("problem", "position problems need the fem1d discretization".into());
                }
                let Some(p) = &self.position else {
                    return top("problem", "position problems need a [position] table".into());
                };
                let [lo, hi] = p.interval;
                if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                    return Err((Some("position"), "interval", format!("need 0 <= lo < hi <= 1, got [{lo}, {hi}]")));
                }
            }
            Problem::Scan => {
                if dim != 1 {
                    return top("problem", "scan problems need the fem1d discretization".into());
                }
                let Some(s) = &self.scan else {
                    return top("problem", "scan problems need a [scan] table".into());
                };
                if !(s.width > 0.0 && s.width < 1.0) {
                    return Err((Some("scan"), "width", format!("must lie in (0, 1), got {}", s.width)));
                }
                if !(s.step > 0.0) {
                    return Err((Some("scan"), "step", format!("must be positive, got {}", s.step)));
                }
                if !(s.start - 0.5 * s.width > 0.0) {
                    return Err((Some("scan"), "start", "first interval leaves (0, 1)".into()));
                }
                if !(s.stop + 0.5 * s.width < 1.0 && s.stop >= s.start) {
                    return Err((Some("scan"), "stop", "need start <= stop and the last interval inside (0, 1)".into()));
                }
            }
            Problem::Design | Problem::WorstCase => {
                if optimizer.alpha_schedule.is_empty() {
                    return Err((None, "alpha_schedule", "must not be empty".into()));
                }
            }
        }
        if let Some(sim) = &self.simulation {
            if !(sim.dt > 0.0 && sim.horizon >= sim.dt) {
                return Err((Some("simulation"), "dt", format!("need 0 < dt <= horizon, got dt = {}", sim.dt)));
            }
        }
        Ok(())
    }
}

fn qualified(table: Option<&str>, key: &str) -> String {
    match table {
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    }
}

/// 1-based line of `key` inside `[table]` (or the top level), falling back
/// to the table header and then to line 1.
fn locate(source: &str, table: Option<&str>, key: &str) -> usize {
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if Some(name.as_str()) == table {
                header_line = Some(i + 1);
            }
            current = Some(name);
            continue;
        }
        if current.as_deref() != table {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim() == key {
                return i + 1;
            }
        }
    }
    header_line.unwrap_or(1)
}
