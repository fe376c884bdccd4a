//! Closed-loop cost evaluation for a given actuator.
//!
//! [`LqrModel`] diagonalizes the pencil `(S, M)` once: with `S V = M V Λ` and
//! `Vᵀ M V = I`, the modal coordinates `w = Vᵀ M y` turn the state equation
//! into `ẇ = −Λ w + b u` with `b = Vᵀ B̂`, and the running cost `yᵀ M y` into
//! `wᵀ w`. Every actuator then only changes the input column `b`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretization::{actuator_load, SystemMatrices};
use crate::error::{Error, Result};
use crate::geometry::{measure, ActuatorShape};
use crate::output::sig6;
use crate::riccati::{generalized_symmetric_eig, solve_are_modal, ModalRiccati, RiccatiSolution};

/// Relative gap below which eigenvalues count as tied with `λ_max`.
pub const EIGEN_MULTIPLICITY_TOL: f64 = 1e-8;

/// Growth factor of `‖y‖` that aborts a simulation.
const BLOWUP_FACTOR: f64 = 1e6;

/// Cost of one actuator: `total = lq_part + α(|ω| − c)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total: f64,
    pub lq_part: f64,
    pub penalty_part: f64,
    pub size: f64,
    pub iterations: usize,
}

impl CostReport {
    pub fn new(lq_part: f64, size: f64, alpha: f64, c: f64) -> Self {
        let penalty_part = alpha * (size - c).powi(2);
        CostReport {
            total: lq_part + penalty_part,
            lq_part,
            penalty_part,
            size,
            iterations: 0,
        }
    }
}

/// The semi-discrete plant together with its modal decomposition.
#[derive(Clone, Debug)]
pub struct LqrModel {
    sys: SystemMatrices,
    gamma: f64,
    lambda: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl LqrModel {
    pub fn new(sys: SystemMatrices, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be positive, got {gamma}"),
            });
        }
        let eig = generalized_symmetric_eig(&sys.stiffness, &sys.mass)?;
        if eig.values.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::NotPositiveDefinite("stiffness matrix"));
        }
        Ok(LqrModel {
            sys,
            gamma,
            lambda: eig.values,
            vectors: eig.vectors,
        })
    }

    pub fn system(&self) -> &SystemMatrices {
        &self.sys
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Open-loop decay rates `Λ`.
    pub fn rates(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// `M`-orthonormal eigenvectors `V` as columns.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// `w = Vᵀ M y`.
    pub fn to_modal(&self, y: &DVector<f64>) -> DVector<f64> {
        self.vectors.tr_mul(&(&self.sys.mass * y))
    }

    /// `y = V w`.
    pub fn from_modal(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.vectors * w
    }

    /// Assembles the input column for `shape` and solves the Riccati equation.
    pub fn closed_loop(&self, shape: &ActuatorShape) -> Result<ClosedLoop> {
        let load = actuator_load(shape, &self.sys.basis)?;
        self.closed_loop_from_load(load)
    }

    pub fn closed_loop_from_load(&self, load: DVector<f64>) -> Result<ClosedLoop> {
        if load.len() != self.sys.n() {
            return Err(Error::Dimension(format!(
                "load has {} entries, system has {} dofs",
                load.len(),
                self.sys.n()
            )));
        }
        let b = self.vectors.tr_mul(&load);
        let riccati = solve_are_modal(&self.lambda, &b, self.gamma)?;
        Ok(ClosedLoop { load, b, riccati })
    }

    /// The system with no actuator at all (`u ≡ 0`).
    pub fn uncontrolled(&self) -> Result<ClosedLoop> {
        self.closed_loop_from_load(DVector::zeros(self.sys.n()))
    }

    /// `Π = M V P Vᵀ M`, the Riccati solution in nodal coordinates.
    pub fn dense_riccati(&self, cl: &ClosedLoop) -> RiccatiSolution {
        let mv = &self.sys.mass * &self.vectors;
        let pi = &mv * &cl.riccati.p * mv.transpose();
        RiccatiSolution {
            pi: (&pi + pi.transpose()) * 0.5,
            residual_norm: cl.riccati.residual_norm,
            iterations: cl.riccati.iterations,
        }
    }

    /// Input column `B = M⁻¹ B̂` in nodal coordinates.
    pub fn input_column(&self, cl: &ClosedLoop) -> DVector<f64> {
        &self.vectors * &cl.b
    }

    /// Largest generalized eigenpairs of `(Π, S)` computed in modal form,
    /// where the pencil becomes `(P, Λ)`.
    pub fn worst_case(&self, cl: &ClosedLoop) -> WorstCaseSet {
        let n = self.lambda.len();
        let scale = self.lambda.map(|l| 1.0 / l.sqrt());
        let c = DMatrix::from_fn(n, n, |i, j| scale[i] * cl.riccati.p[(i, j)] * scale[j]);
        let eig = ((&c + c.transpose()) * 0.5).symmetric_eigen();
        let lambda_max = eig.eigenvalues.max();
        let mut representatives = Vec::new();
        for (i, &v) in eig.eigenvalues.iter().enumerate() {
            if v >= lambda_max - EIGEN_MULTIPLICITY_TOL * lambda_max.abs() {
                let w = eig.eigenvectors.column(i).component_mul(&scale);
                let f = self.from_modal(&w);
                representatives.push(-&f);
                representatives.push(f);
            }
        }
        // deterministic sign: first representative has positive largest entry
        representatives.sort_by(|a, b| sign_key(b).partial_cmp(&sign_key(a)).unwrap());
        WorstCaseSet {
            lambda_max,
            representatives,
        }
    }
}

fn sign_key(v: &DVector<f64>) -> f64 {
    let i = v.iamax();
    v[i]
}

/// Riccati data for one actuator.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    /// `B̂_j = ∫_ω φ_j`.
    pub load: DVector<f64>,
    /// Modal input column `Vᵀ B̂`.
    pub b: DVector<f64>,
    pub riccati: ModalRiccati,
}

impl ClosedLoop {
    /// `fᵀ Π f` for nodal coefficients `f`.
    pub fn lq_cost(&self, model: &LqrModel, f: &DVector<f64>) -> f64 {
        let w = model.to_modal(f);
        w.dot(&(&self.riccati.p * &w))
    }

    /// Optimal feedback `u = −kᵀ w` in modal coordinates.
    pub fn control(&self, w: &DVector<f64>) -> f64 {
        -self.riccati.gain.dot(w)
    }
}

/// `fᵀ Π f`.
pub fn lq_cost(pi: &RiccatiSolution, f: &DVector<f64>) -> f64 {
    f.dot(&(&pi.pi * f))
}

/// `p = 2 Π y`, the costate of the value function `yᵀ Π y`.
pub fn adjoint_at(pi: &RiccatiSolution, y: &DVector<f64>) -> DVector<f64> {
    &pi.pi * y * 2.0
}

/// Assembles `B(ω)`, solves the Riccati equation and reports `J₁`.
pub fn total_cost(
    shape: &ActuatorShape,
    f: &DVector<f64>,
    alpha: f64,
    c: f64,
    model: &LqrModel,
) -> Result<CostReport> {
    let cl = model.closed_loop(shape)?;
    Ok(CostReport::new(cl.lq_cost(model, f), measure(shape), alpha, c))
}

/// Maximizers of `fᵀΠf` over `fᵀSf = 1`.
#[derive(Clone, Debug)]
pub struct WorstCaseSet {
    pub lambda_max: f64,
    /// `S`-normalized eigenvectors for `λ_max`, each with its negation.
    pub representatives: Vec<DVector<f64>>,
}

/// Largest generalized eigenvalue of `(Π, S)` by the dense route.
pub fn worst_case_initial(pi: &RiccatiSolution, s: &DMatrix<f64>) -> Result<WorstCaseSet> {
    let eig = generalized_symmetric_eig(&pi.pi, s)?;
    let lambda_max = eig.values[0];
    let mut representatives = Vec::new();
    for (i, &v) in eig.values.iter().enumerate() {
        if v < lambda_max - EIGEN_MULTIPLICITY_TOL * lambda_max.abs() {
            break;
        }
        let f = eig.vectors.column(i).into_owned();
        representatives.push(-&f);
        representatives.push(f);
    }
    representatives.sort_by(|a, b| sign_key(b).partial_cmp(&sign_key(a)).unwrap());
    Ok(WorstCaseSet {
        lambda_max,
        representatives,
    })
}

/// Integration settings for [`simulate_closed_loop`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub horizon: f64,
    /// Spacing of the recorded time grid.
    pub dt: f64,
    /// Keep every `state_stride`-th state vector (0 keeps none).
    pub state_stride: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            horizon: 1000.0,
            dt: 0.01,
            state_stride: 0,
        }
    }
}

/// Recorded closed-loop trajectory.
#[derive(Clone, Debug)]
pub struct ClosedLoopTrajectory {
    pub times: Vec<f64>,
    /// `‖y(t)‖²_M` on `times`.
    pub energy: Vec<f64>,
    /// `u(t)` on `times`.
    pub controls: Vec<f64>,
    /// Nodal coefficient vectors at `state_times`.
    pub states: Vec<DVector<f64>>,
    pub state_times: Vec<f64>,
    /// `∫ ‖y‖²_M + γ u² dt`, trapezoidal on the internal step grid.
    pub running_cost: f64,
    /// `∫ u(t) w(t) dt` in modal coordinates, same quadrature.
    pub control_moment: DVector<f64>,
    /// Internal RK4 steps per recorded interval.
    pub substeps: usize,
}

impl ClosedLoopTrajectory {
    /// CSV with header `t,energy,u`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,energy,u\n");
        for ((t, e), u) in self.times.iter().zip(&self.energy).zip(&self.controls) {
            let _ = writeln!(out, "{},{},{}", sig6(*t), sig6(*e), sig6(*u));
        }
        out
    }
}

/// RK4 integration of `ẇ = −Λw − b kᵀw` from `y(0) = f`.
///
/// Each recorded interval `dt` is split into the smallest number of equal
/// RK4 substeps that keeps `h·ρ ≤ 2`, with `ρ` a bound on the spectral
/// radius of the closed-loop generator, so stiff spectra stay stable.
pub fn simulate_closed_loop(
    model: &LqrModel,
    cl: &ClosedLoop,
    f: &DVector<f64>,
    opts: &SimulationOptions,
) -> Result<ClosedLoopTrajectory> {
    if !(opts.dt > 0.0) || !(opts.horizon >= opts.dt) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("need 0 < dt <= T, got dt = {}, T = {}", opts.dt, opts.horizon),
        });
    }
    let lambda = model.rates();
    let b = &cl.b;
    let k = &cl.riccati.gain;
    let gamma = model.gamma();
    let n = lambda.len();

    let rho = lambda.max() + b.norm() * k.norm();
    let substeps = ((opts.dt * rho / 2.0).ceil() as usize).max(1);
    let h = opts.dt / substeps as f64;
    let steps = (opts.horizon / opts.dt).round() as usize;

    let rhs = |w: &DVector<f64>, out: &mut DVector<f64>| {
        let u = -k.dot(w);
        for i in 0..n {
            out[i] = -lambda[i] * w[i] + b[i] * u;
        }
    };

    let mut w = model.to_modal(f);
    let start_norm = w.norm();
    let limit = BLOWUP_FACTOR * start_norm;
    let mut k1 = DVector::zeros(n);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    let mut tmp = DVector::zeros(n);

    let mut traj = ClosedLoopTrajectory {
        times: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        states: Vec::new(),
        state_times: Vec::new(),
        running_cost: 0.0,
        control_moment: DVector::zeros(n),
        substeps,
    };
    let record = |traj: &mut ClosedLoopTrajectory, step: usize, w: &DVector<f64>| {
        let t = step as f64 * opts.dt;
        let u = -k.dot(w);
        traj.times.push(t);
        traj.energy.push(w.norm_squared());
        traj.controls.push(u);
        if opts.state_stride > 0 && step.is_multiple_of(opts.state_stride) {
            traj.states.push(model.from_modal(w));
            traj.state_times.push(t);
        }
    };
    record(&mut traj, 0, &w);

    let mut u_prev = -k.dot(&w);
    let mut run_prev = w.norm_squared() + gamma * u_prev * u_prev;
    for step in 1..=steps {
        for _ in 0..substeps {
            let w_prev = w.clone();
            rhs(&w, &mut k1);
            tmp.copy_from(&w);
            tmp.axpy(0.5 * h, &k1, 1.0);
            rhs(&tmp, &mut k2);
            tmp.copy_from(&w);
            tmp.axpy(0.5 * h, &k2, 1.0);
            rhs(&tmp, &mut k3);
            tmp.copy_from(&w);
            tmp.axpy(h, &k3, 1.0);
            rhs(&tmp, &mut k4);
            w.axpy(h / 6.0, &k1, 1.0);
            w.axpy(h / 3.0, &k2, 1.0);
            w.axpy(h / 3.0, &k3, 1.0);
            w.axpy(h / 6.0, &k4, 1.0);

            let u = -k.dot(&w);
            let run = w.norm_squared() + gamma * u * u;
            traj.running_cost += 0.5 * h * (run_prev + run);
            traj.control_moment.axpy(0.5 * h * u_prev, &w_prev, 1.0);
            traj.control_moment.axpy(0.5 * h * u, &w, 1.0);
            u_prev = u;
            run_prev = run;
        }
        let norm = w.norm();
        if !norm.is_finite() || (start_norm > 0.0 && norm > limit) {
            return Err(Error::Unstable {
                time: step as f64 * opts.dt,
            });
        }
        record(&mut traj, step, &w);
    }
    Ok(traj)
}
