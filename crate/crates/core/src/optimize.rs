//! Actuator positioning, level-set design and the α-continuation loop.

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::BasisDescriptor;
use crate::error::{Error, Result};
use crate::geometry::{
    measure, reinitialize, shape_from_levelset, symmetric_difference_measure, translate, ActuatorShape,
    Interval, LevelSetField,
};
use crate::lqr::{ClosedLoop, CostReport, LqrModel};
use crate::output::sig6;
use crate::sensitivity::{adjoint_moment, field_from_moment, gradient_from_moment, Quadrature, SensitivityField};

/// Steps below this size end a run.
pub const BETA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub beta0: f64,
    pub beta_shrink: f64,
    pub eps_stop: f64,
    pub max_iters: usize,
    /// Loop iterations, accepted or rejected, between reinitializations.
    pub reinit_period: usize,
    pub alpha_schedule: Vec<f64>,
    pub quad: Quadrature,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            beta0: 0.05,
            beta_shrink: 0.5,
            eps_stop: 1e-7,
            max_iters: 1000,
            reinit_period: 50,
            alpha_schedule: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            quad: Quadrature::default(),
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.beta0 > 0.0) {
            return bad("beta0", format!("must be positive, got {}", self.beta0));
        }
        if !(self.beta_shrink > 0.0 && self.beta_shrink < 1.0) {
            return bad("beta_shrink", format!("must lie in (0, 1), got {}", self.beta_shrink));
        }
        if !(self.eps_stop > 0.0) {
            return bad("eps_stop", format!("must be positive, got {}", self.eps_stop));
        }
        if self.max_iters == 0 {
            return bad("max_iters", "must be at least 1".into());
        }
        if self.reinit_period == 0 {
            return bad("reinit_period", "must be at least 1".into());
        }
        if self.alpha_schedule.iter().any(|a| !(*a >= 0.0)) {
            return bad("alpha_schedule", "entries must be non-negative".into());
        }
        if self.alpha_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("alpha_schedule", "must be strictly increasing".into());
        }
        if !(self.quad.dt > 0.0 && self.quad.horizon >= self.quad.dt) {
            return bad("quad", format!("need 0 < dt <= T, got dt = {}, T = {}", self.quad.dt, self.quad.horizon));
        }
        Ok(())
    }
}

/// Which initial condition the design is optimized for.
#[derive(Clone, Debug)]
pub enum Objective {
    /// `J₁` for a fixed initial state.
    Fixed(DVector<f64>),
    /// `J₂`: the worst `H¹₀`-normalized initial state, recomputed per shape.
    WorstCase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `|b| < ε` or the accepted shape change fell below `ε`.
    Converged,
    StepUnderflow,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub iter: usize,
    pub alpha: f64,
    pub beta: f64,
    pub accepted: bool,
    pub report: CostReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub report: CostReport,
    pub iterations: usize,
    pub stop: StopReason,
    pub shape: ActuatorShape,
    pub levelset: LevelSetField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iterates: Vec<Iterate>,
    pub final_shape: ActuatorShape,
    pub final_report: CostReport,
    pub final_levelset: Option<LevelSetField>,
    pub per_alpha: Vec<AlphaRow>,
    pub stop: StopReason,
}

impl RunRecord {
    /// CSV with header `iter,beta,accepted,total,lq,penalty,size,alpha`.
    /// Rejected rows carry the cost of the rejected candidate.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iter,beta,accepted,total,lq,penalty,size,alpha\n");
        for it in &self.iterates {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                it.iter,
                sig6(it.beta),
                u8::from(it.accepted),
                sig6(it.report.total),
                sig6(it.report.lq_part),
                sig6(it.report.penalty_part),
                sig6(it.report.size),
                sig6(it.alpha)
            );
        }
        out
    }

    /// Whether every accepted iterate strictly lowered the tracked cost
    /// within its α stage.
    pub fn accepted_costs_decrease(&self) -> bool {
        let mut last: Option<(f64, f64)> = None;
        for it in &self.iterates {
            match last {
                Some((alpha, cost)) if alpha == it.alpha => {
                    if it.accepted {
                        if !(it.report.total < cost) {
                            return false;
                        }
                        last = Some((alpha, it.report.total));
                    }
                }
                _ => last = Some((it.alpha, it.report.total)),
            }
        }
        true
    }
}

/// An optimization that failed midway, with everything recorded so far.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<RunRecord>,
}

pub type RunResult = std::result::Result<RunRecord, RunFailure>;

/// Cost of one shape together with the data needed for its sensitivities.
struct Evaluation {
    report: CostReport,
    cl: ClosedLoop,
    f: DVector<f64>,
}

fn evaluate(shape: &ActuatorShape, objective: &Objective, model: &LqrModel, alpha: f64, c: f64) -> Result<Evaluation> {
    let cl = model.closed_loop(shape)?;
    let (lq, f) = match objective {
        Objective::Fixed(f) => (cl.lq_cost(model, f), f.clone()),
        Objective::WorstCase => {
            let set = model.worst_case(&cl);
            (set.lambda_max, set.representatives[0].clone())
        }
    };
    Ok(Evaluation {
        report: CostReport::new(lq, measure(shape), alpha, c),
        cl,
        f,
    })
}

fn sensitivity(eval: &Evaluation, model: &LqrModel, alpha: f64, c: f64, quad: &Quadrature) -> Result<SensitivityField> {
    let q = adjoint_moment(model, &eval.cl, &eval.f, quad)?;
    Ok(field_from_moment(&q, &model.system().basis, eval.report.size, alpha, c))
}

fn fail(error: Error, iterates: Vec<Iterate>, shape: ActuatorShape, report: CostReport, levelset: Option<LevelSetField>) -> RunFailure {
    RunFailure {
        error,
        partial: Box::new(RunRecord {
            iterates,
            final_shape: shape,
            final_report: report,
            final_levelset: levelset,
            per_alpha: Vec::new(),
            stop: StopReason::MaxIterations,
        }),
    }
}

/// Gradient descent over rigid translations of `shape0`.
///
/// The volume penalty is translation invariant, so only `J₁^LQ` is tracked.
pub fn position_descent(shape0: &ActuatorShape, f: &DVector<f64>, model: &LqrModel, cfg: &OptimizeConfig) -> RunResult {
    let size = measure(shape0);
    let objective = Objective::Fixed(f.clone());
    let empty = CostReport::new(0.0, size, 0.0, size);
    let mut iterates = Vec::new();
    let mut shape = shape0.clone();
    macro_rules! tryrun {
        ($e:expr, $report:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => return Err(fail(e, iterates, shape, $report, None)),
            }
        };
    }
    tryrun!(cfg.validate(), empty.clone());
    let mut current = tryrun!(evaluate(&shape, &objective, model, 0.0, size), empty.clone());
    let basis = &model.system().basis;
    let moment = tryrun!(adjoint_moment(model, &current.cl, f, &cfg.quad), current.report.clone());
    let mut grad = gradient_from_moment(&shape, &moment, basis);
    let mut beta = cfg.beta0;
    iterates.push(Iterate {
        iter: 0,
        alpha: 0.0,
        beta,
        accepted: true,
        report: current.report.clone(),
    });
    let mut stop = StopReason::MaxIterations;
    for iter in 1..=cfg.max_iters {
        if grad.norm() < cfg.eps_stop {
            stop = StopReason::Converged;
            break;
        }
        if beta < BETA_FLOOR {
            stop = StopReason::StepUnderflow;
            break;
        }
        let step: Vec<f64> = grad.b.iter().map(|v| beta * v).collect();
        let candidate = translate(&shape, &step).shape;
        let eval = tryrun!(evaluate(&candidate, &objective, model, 0.0, size), current.report.clone());
        let accepted = eval.report.total < current.report.total;
        let report = eval.report.clone();
        if accepted {
            shape = candidate;
            current = eval;
            let moment = tryrun!(adjoint_moment(model, &current.cl, f, &cfg.quad), current.report.clone());
            grad = gradient_from_moment(&shape, &moment, basis);
        } else {
            beta *= cfg.beta_shrink;
        }
        iterates.push(Iterate {
            iter,
            alpha: 0.0,
            beta,
            accepted,
            report,
        });
    }
    let mut final_report = current.report;
    final_report.iterations = iterates.len() - 1;
    Ok(RunRecord {
        iterates,
        final_shape: shape,
        final_report,
        final_levelset: None,
        per_alpha: Vec::new(),
        stop,
    })
}

/// Level-set iteration `ψ ← (1−β)ψ + β g/‖g‖` with accept/shrink steps.
pub fn levelset_design(
    psi0: &LevelSetField,
    objective: &Objective,
    model: &LqrModel,
    alpha: f64,
    c: f64,
    cfg: &OptimizeConfig,
) -> RunResult {
    let basis = &model.system().basis;
    let mut psi = psi0.clone();
    let mut shape = shape_from_levelset(&psi);
    let mut iterates = Vec::new();
    let zero = CostReport::new(0.0, measure(&shape), alpha, c);
    macro_rules! tryrun {
        ($e:expr, $report:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => return Err(fail(e, iterates, shape, $report, Some(psi))),
            }
        };
    }
    tryrun!(cfg.validate(), zero.clone());
    if psi.values().len() != basis.grid_points().len() {
        tryrun!(
            Err(Error::GridMismatch(format!(
                "level set has {} values, basis grid has {}",
                psi.values().len(),
                basis.grid_points().len()
            ))),
            zero.clone()
        );
    }
    let weights = basis.grid_weights();
    let mut current = tryrun!(evaluate(&shape, objective, model, alpha, c), zero.clone());
    let mut field = tryrun!(sensitivity(&current, model, alpha, c, &cfg.quad), current.report.clone());
    let mut beta = cfg.beta0;
    iterates.push(Iterate {
        iter: 0,
        alpha,
        beta,
        accepted: true,
        report: current.report.clone(),
    });
    let mut stop = StopReason::MaxIterations;
    for iter in 1..=cfg.max_iters {
        if beta < BETA_FLOOR {
            stop = StopReason::StepUnderflow;
            break;
        }
        let norm = weighted_norm(&field.g, &weights);
        if norm == 0.0 {
            tryrun!(Err(Error::DegenerateSensitivity), current.report.clone());
        }
        let values: Vec<f64> = psi
            .values()
            .iter()
            .zip(&field.g)
            .map(|(p, g)| (1.0 - beta) * p + beta * g / norm)
            .collect();
        let cand_psi = psi.with_values(values);
        let cand_shape = shape_from_levelset(&cand_psi);
        let eval = tryrun!(evaluate(&cand_shape, objective, model, alpha, c), current.report.clone());
        let accepted = eval.report.total < current.report.total;
        let report = eval.report.clone();
        let mut converged = false;
        if accepted {
            let change = tryrun!(symmetric_difference_measure(&cand_shape, &shape), current.report.clone());
            converged = change < cfg.eps_stop;
            psi = cand_psi;
            shape = cand_shape;
            current = eval;
            field = tryrun!(sensitivity(&current, model, alpha, c, &cfg.quad), current.report.clone());
        } else {
            beta *= cfg.beta_shrink;
        }
        iterates.push(Iterate {
            iter,
            alpha,
            beta,
            accepted,
            report,
        });
        if converged {
            stop = StopReason::Converged;
            break;
        }
        if iter % cfg.reinit_period == 0 {
            let reinit = reinitialize(&psi).field;
            let reshaped = shape_from_levelset(&reinit);
            let moved = tryrun!(symmetric_difference_measure(&reshaped, &shape), current.report.clone());
            if moved == 0.0 {
                psi = reinit;
            } else {
                // Sub-cell components can shift under reinitialization; keep
                // the redistanced field only if it does not cost more.
                let eval = tryrun!(evaluate(&reshaped, objective, model, alpha, c), current.report.clone());
                if eval.report.total <= current.report.total {
                    psi = reinit;
                    shape = reshaped;
                    current = eval;
                    field = tryrun!(sensitivity(&current, model, alpha, c, &cfg.quad), current.report.clone());
                }
            }
        }
    }
    let mut final_report = current.report;
    final_report.iterations = iterates.len() - 1;
    Ok(RunRecord {
        iterates,
        final_shape: shape,
        final_report,
        final_levelset: Some(psi),
        per_alpha: Vec::new(),
        stop,
    })
}

fn weighted_norm(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
}

/// Runs [`levelset_design`] once per α, each stage warm-started from the
/// reinitialized final level set of the previous one.
pub fn continuation(psi0: &LevelSetField, objective: &Objective, model: &LqrModel, c: f64, cfg: &OptimizeConfig) -> RunResult {
    let size0 = measure(&shape_from_levelset(psi0));
    if cfg.alpha_schedule.is_empty() {
        return Err(RunFailure {
            error: Error::InvalidParameter {
                name: "alpha_schedule",
                reason: "must not be empty".into(),
            },
            partial: Box::new(RunRecord {
                iterates: Vec::new(),
                final_shape: shape_from_levelset(psi0),
                final_report: CostReport::new(0.0, size0, 0.0, c),
                final_levelset: Some(psi0.clone()),
                per_alpha: Vec::new(),
                stop: StopReason::MaxIterations,
            }),
        });
    }
    let mut psi = psi0.clone();
    let mut iterates = Vec::new();
    let mut rows: Vec<AlphaRow> = Vec::new();
    let mut last: Option<RunRecord> = None;
    for (stage, &alpha) in cfg.alpha_schedule.iter().enumerate() {
        if stage > 0 {
            psi = reinitialize(&psi).field;
        }
        match levelset_design(&psi, objective, model, alpha, c, cfg) {
            Ok(run) => {
                let levelset = run.final_levelset.clone().expect("level-set runs keep their field");
                rows.push(AlphaRow {
                    alpha,
                    report: run.final_report.clone(),
                    iterations: run.final_report.iterations,
                    stop: run.stop,
                    shape: run.final_shape.clone(),
                    levelset: levelset.clone(),
                });
                iterates.extend(run.iterates.iter().cloned());
                psi = levelset;
                last = Some(run);
            }
            Err(mut failure) => {
                let mut partial_iterates = iterates;
                partial_iterates.append(&mut failure.partial.iterates);
                failure.partial.iterates = partial_iterates;
                failure.partial.per_alpha = rows;
                return Err(failure);
            }
        }
    }
    let last = last.expect("schedule is non-empty");
    Ok(RunRecord {
        iterates,
        final_shape: last.final_shape,
        final_report: last.final_report,
        final_levelset: last.final_levelset,
        per_alpha: rows,
        stop: last.stop,
    })
}

/// [`continuation`] for `J₂`.
pub fn worst_case_design(psi0: &LevelSetField, model: &LqrModel, c: f64, cfg: &OptimizeConfig) -> RunResult {
    continuation(psi0, &Objective::WorstCase, model, c, cfg)
}

/// `J₁^LQ` of intervals of the given width centered at each entry of `centers`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<(f64, f64)>,
    pub argmin: (f64, f64),
}

impl ScanResult {
    /// CSV with header `center,cost` followed by an `argmin` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("center,cost\n");
        for (x, j) in &self.points {
            let _ = writeln!(out, "{},{}", sig6(*x), sig6(*j));
        }
        let _ = writeln!(out, "argmin,{},{}", sig6(self.argmin.0), sig6(self.argmin.1));
        out
    }
}

pub fn position_scan(f: &DVector<f64>, model: &LqrModel, width: f64, centers: &[f64]) -> Result<ScanResult> {
    if centers.is_empty() {
        return Err(Error::InvalidParameter {
            name: "centers",
            reason: "must not be empty".into(),
        });
    }
    if let Some(&x) = centers.iter().find(|&&x| !(x - 0.5 * width > 0.0 && x + 0.5 * width < 1.0)) {
        return Err(Error::InvalidParameter {
            name: "centers",
            reason: format!("interval of width {width} at {x} leaves (0, 1)"),
        });
    }
    let points = centers
        .par_iter()
        .map(|&x| {
            let shape = ActuatorShape::Intervals(vec![Interval::new(x - 0.5 * width, x + 0.5 * width)]);
            let cl = model.closed_loop(&shape)?;
            Ok((x, cl.lq_cost(model, f)))
        })
        .collect::<Result<Vec<_>>>()?;
    let argmin = points
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, p| if p.1 < best.1 { p } else { best });
    Ok(ScanResult { points, argmin })
}

/// Largest violation of `g ≤ 0` on `ω` and `g ≥ 0` outside, over grid nodes
/// whose level-set value is not exactly zero.
pub fn stationarity_gap(field: &SensitivityField, psi: &LevelSetField) -> f64 {
    field
        .g
        .iter()
        .zip(psi.values())
        .map(|(&g, &p)| {
            if p < 0.0 {
                g.max(0.0)
            } else if p > 0.0 {
                (-g).max(0.0)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Starting level set `ψ₀`: the signed distance to `(0.25, 0.75)` in 1D and
/// to the centered disk of radius 0.35 in 2D.
pub fn default_levelset(basis: &BasisDescriptor) -> LevelSetField {
    let layout = basis.levelset_field(vec![0.0; basis.grid_points().len()]);
    match basis.dim() {
        1 => layout.sample(|p| (p[0] - 0.5).abs() - 0.25),
        _ => layout.sample(|p| ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() - 0.35),
    }
}

/// Center of a single-interval shape.
pub fn interval_center(shape: &ActuatorShape) -> Option<f64> {
    match shape {
        ActuatorShape::Intervals(iv) if iv.len() == 1 => Some(iv[0].center()),
        _ => None,
    }
}
