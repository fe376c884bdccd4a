//! Dispatches a validated scenario and writes its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use actuator_core::catalog::{self, WORST_CASE};
use actuator_core::discretization::{assemble_fem_1d, assemble_spectral_2d, project_initial_condition};
use actuator_core::geometry::{ActuatorShape, Interval};
use actuator_core::lqr::{simulate_closed_loop, LqrModel, SimulationOptions};
use actuator_core::optimize::{
    continuation, default_levelset, levelset_design, position_descent, position_scan, AlphaRow, Objective, RunRecord,
    RunResult, ScanResult,
};
use actuator_core::output::sig6;
use actuator_core::sensitivity::topological_field;

use crate::error::CliError;
use crate::scenario::{Discretization, Problem, Scenario, SigmaSpec};

#[derive(Serialize)]
struct RunJson<'a> {
    problem: Problem,
    initial_condition: &'a str,
    gamma: f64,
    c: f64,
    record: &'a RunRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    cold_start: Option<&'a RunRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct ScanJson<'a> {
    problem: Problem,
    initial_condition: &'a str,
    width: f64,
    scan: &'a ScanResult,
}

/// Output directory: `OUTPUT_DIR`, then `output_dir`, then `<stem>_out`
/// next to the working directory.
pub fn output_dir(scenario: &Scenario, config: &Path) -> PathBuf {
    if let Some(dir) = std::env::var_os("OUTPUT_DIR").filter(|d| !d.is_empty()) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = &scenario.output_dir {
        return dir.clone();
    }
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    PathBuf::from(format!("{stem}_out"))
}

fn build_model(scenario: &Scenario) -> Result<(LqrModel, Option<DVector<f64>>), CliError> {
    let sys = match &scenario.discretization {
        Discretization::Fem1d { n, sigma } => match sigma {
            SigmaSpec::Constant(s) => {
                let s = *s;
                assemble_fem_1d(*n, move |_| s)?
            }
            SigmaSpec::Named(name) => {
                let profile = catalog::diffusion_profile(name).expect("validated");
                assemble_fem_1d(*n, |x| profile.eval(x))?
            }
        },
        Discretization::Spectral2d { n_modes, sigma, grid } => assemble_spectral_2d(*n_modes, *sigma, *grid)?,
    };
    let f = match scenario.objective_name() {
        WORST_CASE => None,
        name => {
            let ic = catalog::initial_condition(name).expect("validated");
            Some(project_initial_condition(ic.as_fn(), &sys)?)
        }
    };
    Ok((LqrModel::new(sys, scenario.gamma)?, f))
}

struct Writer {
    dir: PathBuf,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Writer, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io { path: dir.clone(), source: e })?;
        Ok(Writer { dir })
    }

    fn put(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io { path, source: e })
    }
}

/// Runs the scenario and writes artifacts into `dir`.
pub fn run(scenario: &Scenario, dir: PathBuf) -> Result<(), CliError> {
    let out = Writer::new(dir)?;
    let (model, f) = build_model(scenario)?;
    let name = scenario.objective_name();

    if scenario.problem == Problem::Scan {
        let scan = scenario.scan.as_ref().expect("validated");
        let centers = scan_centers(scan.start, scan.stop, scan.step);
        let f = f.expect("scan needs a fixed initial condition");
        let result = position_scan(&f, &model, scan.width, &centers)?;
        out.put("centers.csv", &result.to_csv())?;
        let json = ScanJson {
            problem: scenario.problem,
            initial_condition: name,
            width: scan.width,
            scan: &result,
        };
        out.put("run.json", &serde_json::to_string_pretty(&json)?)?;
        return Ok(());
    }

    let cfg = &scenario.optimizer;
    let objective = match &f {
        Some(f) => Objective::Fixed(f.clone()),
        None => Objective::WorstCase,
    };
    let basis = &model.system().basis;
    let result: RunResult = match scenario.problem {
        Problem::Position => {
            let [lo, hi] = scenario.position.as_ref().expect("validated").interval;
            let shape0 = ActuatorShape::Intervals(vec![Interval::new(lo, hi)]);
            position_descent(&shape0, f.as_ref().expect("validated"), &model, cfg)
        }
        Problem::Design | Problem::WorstCase => continuation(&default_levelset(basis), &objective, &model, scenario.c, cfg),
        Problem::Scan => unreachable!(),
    };

    let record = match result {
        Ok(record) => record,
        Err(failure) => {
            write_record(&out, scenario, name, &failure.partial, None, Some(failure.error.to_string()))?;
            return Err(CliError::Run(Box::new(failure)));
        }
    };

    let cold = if scenario.design.cold_start && scenario.problem != Problem::Position {
        let alpha = *cfg.alpha_schedule.last().expect("validated");
        match levelset_design(&default_levelset(basis), &objective, &model, alpha, scenario.c, cfg) {
            Ok(run) => Some(run),
            Err(failure) => {
                write_record(&out, scenario, name, &record, Some(&failure.partial), Some(failure.error.to_string()))?;
                return Err(CliError::Run(Box::new(failure)));
            }
        }
    } else {
        None
    };
    write_record(&out, scenario, name, &record, cold.as_ref(), None)?;

    // The objective's initial state at the final shape.
    let f_final = match &f {
        Some(f) => f.clone(),
        None => {
            let cl = model.closed_loop(&record.final_shape)?;
            model.worst_case(&cl).representatives[0].clone()
        }
    };
    if let Some(levelset) = &record.final_levelset {
        let alpha = record.per_alpha.last().map_or(0.0, |r| r.alpha);
        let field = topological_field(&record.final_shape, &f_final, &model, alpha, scenario.c, &cfg.quad)?;
        out.put("g_final.csv", &actuator_core::geometry::grid_csv(levelset, "g", &field.g))?;
    }
    if let Some(sim) = &scenario.simulation {
        let cl = model.closed_loop(&record.final_shape)?;
        let opts = SimulationOptions {
            horizon: sim.horizon,
            dt: sim.dt,
            state_stride: 0,
        };
        let traj = simulate_closed_loop(&model, &cl, &f_final, &opts)?;
        out.put("closed_loop.csv", &traj.to_csv())?;
    }
    Ok(())
}

fn write_record(
    out: &Writer,
    scenario: &Scenario,
    name: &str,
    record: &RunRecord,
    cold: Option<&RunRecord>,
    error: Option<String>,
) -> Result<(), CliError> {
    let json = RunJson {
        problem: scenario.problem,
        initial_condition: name,
        gamma: scenario.gamma,
        c: scenario.c,
        record,
        cold_start: cold,
        error,
    };
    out.put("run.json", &serde_json::to_string_pretty(&json)?)?;
    out.put("history.csv", &record.history_csv())?;
    for (k, row) in record.per_alpha.iter().enumerate() {
        out.put(&format!("levelset_alpha_{k}.csv"), &row.levelset.to_csv())?;
    }
    if let Some(levelset) = &record.final_levelset {
        out.put("levelset_final.csv", &levelset.to_csv())?;
    }
    out.put("table.md", &table(record, cold))?;
    Ok(())
}

fn row(out: &mut String, label: &str, report: &actuator_core::lqr::CostReport, iterations: usize) {
    let _ = writeln!(
        out,
        "| {label} | {} | {} | {} ({}) | {iterations} |",
        sig6(report.total),
        sig6(report.lq_part),
        sig6(report.penalty_part),
        sig6(report.size)
    );
}

/// Markdown table with one row per α stage, plus `α*` for a cold start.
pub fn table(record: &RunRecord, cold: Option<&RunRecord>) -> String {
    let mut out = String::from("| α | 𝒥 | 𝒥^LQ | 𝒥^α (size) | iterations |\n|---|---|---|---|---|\n");
    if record.per_alpha.is_empty() {
        row(&mut out, "0", &record.final_report, record.final_report.iterations);
    }
    for AlphaRow {
        alpha,
        report,
        iterations,
        ..
    } in &record.per_alpha
    {
        row(&mut out, &sig6(*alpha), report, *iterations);
    }
    if let Some(cold) = cold {
        let alpha = cold.iterates.first().map_or(0.0, |it| it.alpha);
        row(&mut out, &format!("{}*", sig6(alpha)), &cold.final_report, cold.final_report.iterations);
    }
    out
}

/// `start, start + step, …` up to `stop`, computed by index so the grid
/// does not drift.
pub fn scan_centers(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}
