//! Named initial conditions and diffusion profiles used by the experiments.

use std::f64::consts::PI;
use std::fmt::Write as _;

/// Initial condition `y₀(x)` or `y₀(x, y)`.
#[derive(Clone, Copy, Debug)]
pub struct InitialCondition {
    pub name: &'static str,
    pub formula: &'static str,
    pub dim: usize,
    eval: fn(&[f64]) -> f64,
}

impl InitialCondition {
    pub fn eval(&self, p: &[f64]) -> f64 {
        (self.eval)(p)
    }

    pub fn as_fn(&self) -> impl Fn(&[f64]) -> f64 + '_ {
        move |p| (self.eval)(p)
    }
}

/// Diffusion coefficient `σ(x)` for the 1D problem.
#[derive(Clone, Copy, Debug)]
pub struct DiffusionProfile {
    pub name: &'static str,
    pub formula: &'static str,
    eval: fn(f64) -> f64,
}

impl DiffusionProfile {
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

/// Reserved initial-condition name selecting the worst-case objective.
pub const WORST_CASE: &str = "worst_case";

fn test1(p: &[f64]) -> f64 {
    (PI * p[0]).sin()
}

fn test2(p: &[f64]) -> f64 {
    let x = p[0];
    100.0 * (x - 0.7).abs().powi(4) + x * (x - 1.0)
}

fn test3(p: &[f64]) -> f64 {
    (3.0 * PI * p[0]).sin().max(0.0).powi(2)
}

fn test4(p: &[f64]) -> f64 {
    if p[0] < 2.0 / 3.0 {
        (3.0 * PI * p[0]).sin().powi(2)
    } else {
        0.0
    }
}

fn test7(p: &[f64]) -> f64 {
    let (x, y) = (p[0], p[1]);
    (4.0 * PI * (x - 0.125)).sin().max(0.0).powi(3) * (PI * y).sin().powi(3)
}

fn constant_sigma(_: f64) -> f64 {
    0.01
}

fn test6_sigma(x: f64) -> f64 {
    let bump = if x < 0.5 { 1.0 - (9.0 * PI * x).sin().max(0.0) } else { 0.0 };
    bump + 1e-3
}

pub const INITIAL_CONDITIONS: &[InitialCondition] = &[
    InitialCondition {
        name: "test1",
        formula: "sin(πx)",
        dim: 1,
        eval: test1,
    },
    InitialCondition {
        name: "test2",
        formula: "100|x−0.7|⁴ + x(x−1)",
        dim: 1,
        eval: test2,
    },
    InitialCondition {
        name: "test3",
        formula: "max(sin(3πx), 0)²",
        dim: 1,
        eval: test3,
    },
    InitialCondition {
        name: "test4",
        formula: "sin(3πx)²·1_{x<2/3}",
        dim: 1,
        eval: test4,
    },
    InitialCondition {
        name: "test7",
        formula: "max(sin(4π(x−1/8)), 0)³·sin(πy)³",
        dim: 2,
        eval: test7,
    },
];

pub const DIFFUSION_PROFILES: &[DiffusionProfile] = &[
    DiffusionProfile {
        name: "constant",
        formula: "0.01",
        eval: constant_sigma,
    },
    DiffusionProfile {
        name: "test6_sigma",
        formula: "(1−max(sin 9πx,0))·1_{x<0.5} + 1e-3",
        eval: test6_sigma,
    },
];

pub fn initial_condition(name: &str) -> Option<&'static InitialCondition> {
    INITIAL_CONDITIONS.iter().find(|c| c.name == name)
}

pub fn diffusion_profile(name: &str) -> Option<&'static DiffusionProfile> {
    DIFFUSION_PROFILES.iter().find(|c| c.name == name)
}

pub fn list_catalog() -> String {
    let mut out = String::from("initial conditions:\n");
    for c in INITIAL_CONDITIONS {
        let _ = writeln!(out, "  {}: {}  ({}D)", c.name, c.formula, c.dim);
    }
    let _ = writeln!(out, "  {WORST_CASE}: leading eigenvector of (Π, S), recomputed per shape");
    out.push_str("diffusion profiles:\n");
    for d in DIFFUSION_PROFILES {
        let _ = writeln!(out, "  {}: {}", d.name, d.formula);
    }
    out
}
