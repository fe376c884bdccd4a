//! Acceptance report: one PASS/FAIL line per criterion, then the regression
//! notes for Tests 4 and 6. Exits non-zero if any line failed.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use actuator_core::catalog::{diffusion_profile, initial_condition};
use actuator_core::discretization::{assemble_fem_1d, assemble_spectral_2d, project_initial_condition};
use actuator_core::geometry::{grid_components, measure, reinitialize, ActuatorShape, GridMask, Interval, LevelSetField};
use actuator_core::lqr::{lq_cost, simulate_closed_loop, LqrModel, SimulationOptions};
use actuator_core::optimize::{
    continuation, default_levelset, interval_center, levelset_design, position_descent, position_scan,
    worst_case_design, Objective, OptimizeConfig, RunRecord,
};
use actuator_core::riccati::solve_are;
use actuator_core::sensitivity::{fd_shape_oracle, fd_topo_oracle, shape_gradient, topological_field, Quadrature};

const GAMMA: f64 = 1e-3;
const C: f64 = 0.2;
const N: usize = 200;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Report {
    failures: Vec<String>,
    runs: Vec<(String, RunRecord)>,
}

impl Report {
    fn check(&mut self, label: &str, limit: Duration, body: impl FnOnce(&mut Vec<(String, RunRecord)>) -> Verdict) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| body(&mut self.runs)));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass, v.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let in_time = elapsed <= limit;
        let pass = pass && in_time;
        let time_note = if in_time {
            String::new()
        } else {
            format!(" [over the {:.0} s limit]", limit.as_secs_f64())
        };
        println!(
            "{label}: {} ({:.1} s) {detail}{time_note}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        if !pass {
            self.failures.push(label.to_string());
        }
    }
}

fn model_1d(sigma: impl Fn(f64) -> f64) -> LqrModel {
    LqrModel::new(assemble_fem_1d(N, sigma).unwrap(), GAMMA).unwrap()
}

fn initial(model: &LqrModel, name: &str) -> DVector<f64> {
    project_initial_condition(initial_condition(name).unwrap().as_fn(), model.system()).unwrap()
}

fn interval(lo: f64, hi: f64) -> ActuatorShape {
    ActuatorShape::Intervals(vec![Interval::new(lo, hi)])
}

/// Two intervals mirrored about `x = 1/2` up to `tol`.
fn mirrored_pair(shape: &ActuatorShape, tol: f64) -> bool {
    match shape {
        ActuatorShape::Intervals(iv) if iv.len() == 2 => {
            (iv[0].lo - (1.0 - iv[1].hi)).abs() <= tol && (iv[0].hi - (1.0 - iv[1].lo)).abs() <= tol
        }
        _ => false,
    }
}

fn describe(shape: &ActuatorShape) -> String {
    match shape {
        ActuatorShape::Intervals(iv) => iv
            .iter()
            .map(|i| format!("[{:.4}, {:.4}]", i.lo, i.hi))
            .collect::<Vec<_>>()
            .join(" ∪ "),
        ActuatorShape::Grid(m) => format!("{} cells", m.count()),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

struct XorShift(u64);

impl XorShift {
    fn uniform(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }
}

fn criterion_1() -> Verdict {
    let one = |v| DMatrix::from_element(1, 1, v);
    let scalar = solve_are(&one(-1.0), &DVector::from_element(1, 1.0), &one(1.0), 1.0).unwrap();
    let scalar_err = (scalar.pi[(0, 0)] - (2f64.sqrt() - 1.0)).abs();

    let mut rng = XorShift(0x9e37_79b9_7f4a_7c15);
    let mut worst = 0.0f64;
    let mut worst_asym = 0.0f64;
    let mut unstable = 0;
    for k in 0..50 {
        let n = 1 + k % 16;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.symmetric());
        let shift = raw.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let a = raw - DMatrix::identity(n, n) * (shift + 0.1 + rng.uniform());
        let b = DVector::from_fn(n, |_, _| rng.symmetric());
        let l = DMatrix::from_fn(n, n, |_, _| rng.symmetric());
        let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let gamma = 10f64.powf(2.0 * rng.symmetric());
        let pi = solve_are(&a, &b, &q, gamma).unwrap().pi;
        // Residual evaluated here, not by the solver.
        let pb = &pi * &b;
        let res = a.transpose() * &pi + &pi * &a - &pb * pb.transpose() / gamma + &q;
        let asym = (&pi - pi.transpose()).norm() / pi.norm();
        worst = worst.max(res.norm() / q.norm());
        worst_asym = worst_asym.max(asym);
        let acl = &a - &b * pb.transpose() / gamma;
        if acl.complex_eigenvalues().iter().any(|z| z.re >= 0.0) {
            unstable += 1;
        }
    }
    verdict(
        scalar_err <= 1e-10 && worst <= 1e-9 && worst_asym <= 1e-12 && unstable == 0,
        format!(
            "scalar |π − (√2−1)| = {scalar_err:.1e}; over 50 systems: worst ‖residual‖/‖Q‖ {worst:.1e}, asymmetry {worst_asym:.1e}, unstable closed loops {unstable}"
        ),
    )
}

fn criterion_2() -> Verdict {
    let model = model_1d(|_| 0.01);
    let f = initial(&model, "test1");
    let cl = model.closed_loop(&interval(0.4, 0.6)).unwrap();
    let pi = model.dense_riccati(&cl);
    let expected = lq_cost(&pi, &f);
    let traj = simulate_closed_loop(&model, &cl, &f, &SimulationOptions::default()).unwrap();
    let err = rel(traj.running_cost, expected);
    verdict(
        err <= 0.01,
        format!(
            "simulated {:.6e} vs fᵀΠf {expected:.6e}, relative {err:.1e} ({} substeps)",
            traj.running_cost, traj.substeps
        ),
    )
}

fn criterion_3() -> Verdict {
    let model = model_1d(|_| 0.01);
    let quad = Quadrature::default();
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for name in ["test1", "test2"] {
        let f = initial(&model, name);
        let shape = interval(0.7, 0.9);
        let b = shape_gradient(&shape, &f, &model, &quad).unwrap().b[0];
        // The oracle returns dJ/dx; b points downhill.
        let fd = -fd_shape_oracle(&shape, &f, &model, 0.0, C, 1e-3).unwrap()[0];
        let err = rel(b, fd);
        worst = worst.max(err);
        notes.push(format!("{name}: b = {b:.5e}, FD {fd:.5e}, rel {err:.1e}"));
    }
    let f = initial(&model, "test1");
    let sym = shape_gradient(&interval(0.4, 0.6), &f, &model, &quad).unwrap().b[0].abs();
    verdict(
        worst <= 0.05 && sym <= 1e-6,
        format!("{}; symmetric |b| = {sym:.1e}", notes.join("; ")),
    )
}

/// Insertion quotients approximate `g` outside `ω`; removal quotients
/// approximate `−g` inside.
fn criterion_4() -> Verdict {
    let model = model_1d(|_| 0.01);
    let f = initial(&model, "test1");
    let shape = interval(0.4, 0.6);
    let h = 1.0 / N as f64;
    let (alpha, eps) = (0.0, 4.0 * h);
    let quad = Quadrature::default();
    let field = topological_field(&shape, &f, &model, alpha, C, &quad).unwrap();
    // Nodes where the ball stays inside Ω and clear of ∂ω.
    let eligible: Vec<usize> = (1..N)
        .filter(|&i| {
            let x = i as f64 * h;
            x > eps && x < 1.0 - eps && (x - 0.4).abs() > eps + h && (x - 0.6).abs() > eps + h
        })
        .collect();
    let mut rng = XorShift(0x2545_f491_4f6c_dd1d);
    let mut nodes = Vec::new();
    while nodes.len() < 20 {
        let i = eligible[(rng.uniform() * eligible.len() as f64) as usize];
        if !nodes.contains(&i) {
            nodes.push(i);
        }
    }
    nodes.sort_unstable();
    let mut worst = (0.0f64, 0.0);
    let mut worst_outside: f64 = 0.0;
    let mut worst_extrapolated: f64 = 0.0;
    for &i in &nodes {
        let x = i as f64 * h;
        let inside = shape.contains(&[x]);
        let expected = if inside { -field.g[i] } else { field.g[i] };
        let q1 = fd_topo_oracle(&shape, &f, &model, &[x], eps, alpha, C).unwrap();
        let q2 = fd_topo_oracle(&shape, &f, &model, &[x], 2.0 * eps, alpha, C).unwrap();
        let err = rel(q1, expected);
        if err > worst.0 {
            worst = (err, x);
        }
        if !inside {
            worst_outside = worst_outside.max(err);
        }
        worst_extrapolated = worst_extrapolated.max(rel(2.0 * q1 - q2, expected));
    }
    let flipped = topological_field(&shape, &(-&f), &model, alpha, C, &quad).unwrap();
    let parity = field
        .g
        .iter()
        .zip(&flipped.g)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    verdict(
        worst.0 <= 0.10 && parity <= 1e-10,
        format!(
            "ε = 4 cells, 20 random nodes: max relative error {:.3} at x = {:.3}, {worst_outside:.3} over insertion nodes (two-ε Richardson value, not scored: {worst_extrapolated:.3}); parity {parity:.1e}",
            worst.0, worst.1
        ),
    )
}

fn criterion_5(runs: &mut Vec<(String, RunRecord)>) -> Verdict {
    let model = model_1d(|_| 0.01);
    let cfg = OptimizeConfig::default();
    let start = interval(0.7, 0.9);

    let f1 = initial(&model, "test1");
    let run1 = position_descent(&start, &f1, &model, &cfg).unwrap();
    let x1 = interval_center(&run1.final_shape).unwrap();
    let centers: Vec<f64> = (0..=156).map(|k| 0.11 + 0.005 * k as f64).collect();
    let scan1 = position_scan(&f1, &model, 0.2, &centers).unwrap();
    let ok1 = (x1 - 0.5).abs() <= 1.0 / N as f64 && (scan1.argmin.0 - x1).abs() <= 1.0 / N as f64;
    runs.push(("test1 position".into(), run1));

    let f2 = initial(&model, "test2");
    let run2 = position_descent(&start, &f2, &model, &cfg).unwrap();
    let x2 = interval_center(&run2.final_shape).unwrap();
    let scan2 = position_scan(&f2, &model, 0.2, &centers).unwrap();
    let ok2 = (x2 - 0.2).abs() <= 0.05;
    runs.push(("test2 position".into(), run2));

    verdict(
        ok1 && ok2,
        format!(
            "Test 1 center {x1:.4}, scan argmin {:.4}; Test 2 center {x2:.4} (target 0.2 ± 0.05), scan argmin {:.4}",
            scan1.argmin.0, scan2.argmin.0
        ),
    )
}

fn criterion_6(runs: &mut Vec<(String, RunRecord)>) -> Verdict {
    let model = model_1d(|_| 0.01);
    let f = initial(&model, "test3");
    let cfg = OptimizeConfig::default();
    let psi0 = default_levelset(&model.system().basis);
    let objective = Objective::Fixed(f);
    let run = continuation(&psi0, &objective, &model, C, &cfg).unwrap();
    let cold = levelset_design(&psi0, &objective, &model, 1e3, C, &cfg).unwrap();
    let r = &run.final_report;
    let ratio = cold.final_report.total / r.total;
    let two_sym = mirrored_pair(&run.final_shape, 2.0 / N as f64);
    let size_ok = (r.size - 0.21).abs() <= 0.02;
    let lq_ok = rel(r.lq_part, 2.46e-2) <= 0.2;
    let detail = format!(
        "shape {} (mirrored pair: {two_sym}), size {:.4}, 𝒥^LQ {:.4e}; cold start total {:.4e}, ratio {ratio:.2} (need ≥ 10)",
        describe(&run.final_shape),
        r.size,
        r.lq_part,
        cold.final_report.total
    );
    runs.push(("test3 continuation".into(), run));
    runs.push(("test3 cold start".into(), cold));
    verdict(two_sym && size_ok && lq_ok && ratio >= 10.0, detail)
}

fn criterion_7(runs: &mut Vec<(String, RunRecord)>) -> Verdict {
    let model = model_1d(|_| 0.01);
    let cfg = OptimizeConfig {
        alpha_schedule: vec![0.1, 1.0, 10.0],
        ..OptimizeConfig::default()
    };
    let run = worst_case_design(&default_levelset(&model.system().basis), &model, C, &cfg).unwrap();
    let row = run.per_alpha.iter().find(|r| r.alpha == 10.0).unwrap();
    let lambda = row.report.lq_part;
    let two_sym = mirrored_pair(&row.shape, 2.0 / N as f64);
    let pass = rel(lambda, 0.342) <= 0.15 && (row.report.size - 0.19).abs() <= 0.02 && two_sym;
    let detail = format!(
        "at α = 10: λ_max {lambda:.4} (target 0.342 ± 15%), size {:.4}, shape {} (mirrored pair: {two_sym})",
        row.report.size,
        describe(&row.shape)
    );
    runs.push(("test5 worst case".into(), run));
    verdict(pass, detail)
}

fn criterion_8(runs: &mut Vec<(String, RunRecord)>) -> Verdict {
    let grid = 64;
    let model = LqrModel::new(assemble_spectral_2d(49, 0.01, grid).unwrap(), GAMMA).unwrap();
    let f = initial(&model, "test7");
    let cfg = OptimizeConfig {
        alpha_schedule: vec![0.1, 1.0, 10.0, 100.0],
        ..OptimizeConfig::default()
    };
    let run = continuation(&default_levelset(&model.system().basis), &Objective::Fixed(f.clone()), &model, 0.04, &cfg).unwrap();
    let components = match &run.final_shape {
        ActuatorShape::Grid(mask) => grid_components(mask).len(),
        _ => 0,
    };
    let size = measure(&run.final_shape);
    let disk = ActuatorShape::Grid(GridMask::disk(grid, [0.5, 0.5], (size / PI).sqrt()));
    let opts = SimulationOptions {
        horizon: 20.0,
        dt: 0.1,
        state_stride: 0,
    };
    let trace = |shape: Option<&ActuatorShape>| {
        let cl = match shape {
            Some(s) => model.closed_loop(s).unwrap(),
            None => model.uncontrolled().unwrap(),
        };
        simulate_closed_loop(&model, &cl, &f, &opts).unwrap()
    };
    let opt = trace(Some(&run.final_shape));
    let centered = trace(Some(&disk));
    let none = trace(None);
    let running = |t: &actuator_core::lqr::ClosedLoopTrajectory, i: usize| t.energy[i] + GAMMA * t.controls[i].powi(2);
    // Running cost from t = 1 on; at t = 0 the optimized actuator pays its
    // larger initial control effort.
    let faster = (10..opt.times.len()).all(|i| running(&opt, i) < running(&centered, i) && running(&opt, i) < running(&none, i));
    let cheaper = opt.running_cost < centered.running_cost && opt.running_cost < none.running_cost;
    let detail = format!(
        "{components} components, size {size:.4} (disk {:.4}); cost over [0, 20]: optimized {:.4e}, centered disk {:.4e}, uncontrolled {:.4e}; running cost lower on all of [1, 20]: {faster}",
        measure(&disk),
        opt.running_cost,
        centered.running_cost,
        none.running_cost
    );
    runs.push(("test7 2D continuation".into(), run));
    verdict(components == 2 && faster && cheaper, detail)
}

/// Analytic interface, sampled level set and the exact signed distance.
fn reinit_case(field: &LevelSetField, dist: impl Fn(&[f64]) -> f64, skip: impl Fn(&[f64]) -> bool) -> (f64, f64, f64) {
    let out = reinitialize(field).field;
    let (m, psi) = match &out {
        LevelSetField::Grid2d { m, psi } => (*m, psi.clone()),
        LevelSetField::Nodes1d { .. } => unreachable!(),
    };
    let h = 1.0 / m as f64;
    let at = |ix: usize, iy: usize| psi[iy * m + ix];
    let pt = |ix: usize, iy: usize| [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for iy in 1..m - 1 {
        for ix in 1..m - 1 {
            let p = pt(ix, iy);
            if dist(&p).abs() < 3.0 * h || skip(&p) {
                continue;
            }
            let gx = (at(ix + 1, iy) - at(ix - 1, iy)) / (2.0 * h);
            let gy = (at(ix, iy + 1) - at(ix, iy - 1)) / (2.0 * h);
            let g = gx.hypot(gy);
            lo = lo.min(g);
            hi = hi.max(g);
        }
    }
    // Zero crossings along lattice edges, located by linear interpolation.
    let mut moved = 0.0f64;
    for iy in 0..m {
        for ix in 0..m {
            for (jx, jy) in [(ix + 1, iy), (ix, iy + 1)] {
                if jx >= m || jy >= m {
                    continue;
                }
                let (a, b) = (at(ix, iy), at(jx, jy));
                if (a < 0.0) == (b < 0.0) {
                    continue;
                }
                let t = a / (a - b);
                let (p, q) = (pt(ix, iy), pt(jx, jy));
                let x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
                moved = moved.max(dist(&x).abs() / h);
            }
        }
    }
    (lo, hi, moved)
}

fn criterion_9(runs: &[(String, RunRecord)]) -> Verdict {
    let m = 80;
    let layout = LevelSetField::Grid2d {
        m,
        psi: vec![0.0; m * m],
    };
    // Deliberately not distance functions: steep, tilted or quadratic.
    let (nx, ny, off) = (0.6, 0.8, 0.4137);
    let line = layout.sample(|p| 3.0 * (nx * p[0] + ny * p[1] - off));
    let line_dist = |p: &[f64]| nx * p[0] + ny * p[1] - off;
    let (cx, cy, r) = (0.47, 0.52, 0.2713);
    let circle = layout.sample(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2) - r * r);
    let circle_dist = |p: &[f64]| (p[0] - cx).hypot(p[1] - cy) - r;
    let h = 1.0 / m as f64;
    let (l_lo, l_hi, l_move) = reinit_case(&line, line_dist, |_| false);
    let (c_lo, c_hi, c_move) = reinit_case(&circle, circle_dist, |p| (p[0] - cx).hypot(p[1] - cy) < 3.0 * h);

    let monotone: Vec<&str> = runs
        .iter()
        .filter(|(_, run)| !run.accepted_costs_decrease())
        .map(|(name, _)| name.as_str())
        .collect();
    let in_band = |lo: f64, hi: f64| lo >= 0.9 && hi <= 1.1;
    verdict(
        in_band(l_lo, l_hi) && in_band(c_lo, c_hi) && l_move < 1.0 && c_move < 1.0 && monotone.is_empty() && !runs.is_empty(),
        format!(
            "line |∇ψ| ∈ [{l_lo:.3}, {l_hi:.3}], zero set moved {l_move:.2} cells; circle |∇ψ| ∈ [{c_lo:.3}, {c_hi:.3}], moved {c_move:.2} cells; accepted costs decrease on {}/{} recorded runs{}",
            runs.len() - monotone.len(),
            runs.len(),
            if monotone.is_empty() { String::new() } else { format!(" (violations: {})", monotone.join(", ")) }
        ),
    )
}

fn regression(
    runs: &mut Vec<(String, RunRecord)>,
    name: &str,
    model: &LqrModel,
    objective: Objective,
    target_lq: f64,
    target_size: f64,
) -> Verdict {
    let cfg = OptimizeConfig {
        alpha_schedule: vec![0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0],
        ..OptimizeConfig::default()
    };
    let run = continuation(&default_levelset(&model.system().basis), &objective, model, C, &cfg).unwrap();
    let r = run.final_report.clone();
    let detail = format!(
        "final α: 𝒥^LQ {:.4e} (target {target_lq} ± 20%), size {:.4} (target {target_size} ± 0.02), shape {}",
        r.lq_part,
        r.size,
        describe(&run.final_shape)
    );
    runs.push((name.to_string(), run));
    verdict(rel(r.lq_part, target_lq) <= 0.2 && (r.size - target_size).abs() <= 0.02, detail)
}

fn main() {
    let mut report = Report {
        failures: Vec::new(),
        runs: Vec::new(),
    };
    let secs = Duration::from_secs;
    report.check("criterion 1", secs(1), |_| criterion_1());
    report.check("criterion 2", secs(30), |_| criterion_2());
    report.check("criterion 3", secs(120), |_| criterion_3());
    report.check("criterion 4", secs(300), |_| criterion_4());
    report.check("criterion 5", secs(600), criterion_5);
    report.check("criterion 6", secs(900), criterion_6);
    report.check("criterion 7", secs(1200), criterion_7);
    report.check("criterion 8", secs(1800), criterion_8);
    report.check("note test 4", secs(900), |runs| {
        let model = model_1d(|_| 0.01);
        let f = initial(&model, "test4");
        regression(runs, "test4 continuation", &model, Objective::Fixed(f), 0.209, 0.195)
    });
    report.check("note test 6", secs(900), |runs| {
        let sigma = diffusion_profile("test6_sigma").unwrap();
        let model = model_1d(|x| sigma.eval(x));
        regression(runs, "test6 worst case", &model, Objective::WorstCase, 0.998, 0.195)
    });
    report.check("criterion 9", secs(60), |runs| criterion_9(runs));

    if report.failures.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", report.failures.len(), report.failures.join(", "));
        std::process::exit(1);
    }
}
