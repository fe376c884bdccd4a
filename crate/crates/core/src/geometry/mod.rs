//! Actuator shapes and the level-set fields that describe them.
//!
//! A 1D actuator is a finite union of closed intervals in `[0,1]`; a 2D actuator
//! is a boolean mask over the cells of the evaluation lattice. Level-set values
//! live on mesh nodes in 1D and on cell centers in 2D, and the actuator is
//! always the strict negative set `{ψ < 0}`.

mod eikonal;

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::sig6;

pub use eikonal::upwind_gradient_norm;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}] is reversed");
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Cell indicator on an `m × m` lattice, stored row-major (`iy * m + ix`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMask {
    pub m: usize,
    pub cells: Vec<bool>,
}

impl GridMask {
    pub fn empty(m: usize) -> Self {
        GridMask {
            m,
            cells: vec![false; m * m],
        }
    }

    pub fn full(m: usize) -> Self {
        GridMask {
            m,
            cells: vec![true; m * m],
        }
    }

    /// Cells whose centers lie strictly within `radius` of `center`.
    pub fn disk(m: usize, center: [f64; 2], radius: f64) -> Self {
        let mut mask = GridMask::empty(m);
        for iy in 0..m {
            for ix in 0..m {
                let dx = (ix as f64 + 0.5) / m as f64 - center[0];
                let dy = (iy as f64 + 0.5) / m as f64 - center[1];
                mask.cells[iy * m + ix] = dx * dx + dy * dy < radius * radius;
            }
        }
        mask
    }

    pub fn cell_area(&self) -> f64 {
        1.0 / (self.m * self.m) as f64
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.m + ix]
    }
}

/// The actuator region `ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActuatorShape {
    Intervals(Vec<Interval>),
    Grid(GridMask),
}

impl ActuatorShape {
    /// Builds a 1D shape, sorting and merging overlapping or touching pieces.
    pub fn from_intervals(intervals: impl IntoIterator<Item = Interval>) -> Self {
        ActuatorShape::Intervals(normalize(intervals.into_iter().collect()))
    }

    pub fn is_empty(&self) -> bool {
        measure(self) == 0.0
    }

    /// Number of connected components (4-connectivity in 2D).
    pub fn components(&self) -> usize {
        match self {
            ActuatorShape::Intervals(iv) => iv.len(),
            ActuatorShape::Grid(mask) => grid_components(mask).len(),
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        match self {
            ActuatorShape::Intervals(iv) => iv.iter().any(|i| i.lo <= point[0] && point[0] <= i.hi),
            ActuatorShape::Grid(mask) => {
                let cell = |v: f64| ((v * mask.m as f64).floor() as usize).min(mask.m - 1);
                mask.get(cell(point[0]), cell(point[1]))
            }
        }
    }

    /// Adds (`insert = true`) or removes the ball of radius `eps` around `center`.
    /// In 1D the ball is the interval `[c − ε, c + ε]`; in 2D it is the set of
    /// cells whose centers lie within `eps`.
    pub fn with_ball(&self, center: &[f64], eps: f64, insert: bool) -> ActuatorShape {
        match self {
            ActuatorShape::Intervals(iv) => {
                let ball = [Interval::new((center[0] - eps).max(0.0), (center[0] + eps).min(1.0))];
                if insert {
                    ActuatorShape::Intervals(union(iv, &ball))
                } else {
                    ActuatorShape::Intervals(difference(iv, &ball))
                }
            }
            ActuatorShape::Grid(mask) => {
                let ball = GridMask::disk(mask.m, [center[0], center[1]], eps);
                let cells = mask
                    .cells
                    .iter()
                    .zip(&ball.cells)
                    .map(|(&c, &b)| if b { insert } else { c })
                    .collect();
                ActuatorShape::Grid(GridMask { m: mask.m, cells })
            }
        }
    }
}

/// `|ω|`: total length in 1D, cell area times cell count in 2D.
pub fn measure(shape: &ActuatorShape) -> f64 {
    match shape {
        ActuatorShape::Intervals(iv) => iv.iter().map(Interval::len).sum(),
        ActuatorShape::Grid(mask) => mask.count() as f64 * mask.cell_area(),
    }
}

/// Nodal level-set values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LevelSetField {
    /// Values at the (strictly increasing) mesh nodes, boundary included.
    Nodes1d { nodes: Vec<f64>, psi: Vec<f64> },
    /// Values at the centers of an `m × m` cell lattice, row-major.
    Grid2d { m: usize, psi: Vec<f64> },
}

impl LevelSetField {
    pub fn values(&self) -> &[f64] {
        match self {
            LevelSetField::Nodes1d { psi, .. } | LevelSetField::Grid2d { psi, .. } => psi,
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        match self {
            LevelSetField::Nodes1d { psi, .. } | LevelSetField::Grid2d { psi, .. } => psi,
        }
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> LevelSetField {
        assert_eq!(values.len(), self.values().len());
        match self {
            LevelSetField::Nodes1d { nodes, .. } => LevelSetField::Nodes1d {
                nodes: nodes.clone(),
                psi: values,
            },
            LevelSetField::Grid2d { m, .. } => LevelSetField::Grid2d { m: *m, psi: values },
        }
    }

    /// Samples `f` on the layout of `self`.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> LevelSetField {
        let values = match self {
            LevelSetField::Nodes1d { nodes, .. } => nodes.iter().map(|&x| f(&[x])).collect(),
            LevelSetField::Grid2d { m, .. } => (0..m * m)
                .map(|idx| {
                    let x = (idx % m) as f64 + 0.5;
                    let y = (idx / m) as f64 + 0.5;
                    f(&[x / *m as f64, y / *m as f64])
                })
                .collect(),
        };
        self.with_values(values)
    }

    /// CSV with header `x,psi` (1D) or `x,y,psi` (2D).
    pub fn to_csv(&self) -> String {
        grid_csv(self, "psi", self.values())
    }
}

/// Writes `values` on the layout of `layout` as CSV with the given column name.
pub fn grid_csv(layout: &LevelSetField, column: &str, values: &[f64]) -> String {
    let mut out = String::new();
    match layout {
        LevelSetField::Nodes1d { nodes, .. } => {
            let _ = writeln!(out, "x,{column}");
            for (x, v) in nodes.iter().zip(values) {
                let _ = writeln!(out, "{},{}", sig6(*x), sig6(*v));
            }
        }
        LevelSetField::Grid2d { m, .. } => {
            let _ = writeln!(out, "x,y,{column}");
            for (idx, v) in values.iter().enumerate() {
                let x = ((idx % m) as f64 + 0.5) / *m as f64;
                let y = ((idx / m) as f64 + 0.5) / *m as f64;
                let _ = writeln!(out, "{},{},{}", sig6(x), sig6(y), sig6(*v));
            }
        }
    }
    out
}

/// `ω = {ψ < 0}`; in 1D interface points come from linear interpolation.
pub fn shape_from_levelset(field: &LevelSetField) -> ActuatorShape {
    match field {
        LevelSetField::Nodes1d { nodes, psi } => {
            let mut intervals = Vec::new();
            let mut start: Option<f64> = if psi[0] < 0.0 { Some(nodes[0]) } else { None };
            for i in 0..psi.len() - 1 {
                let (a, b) = (psi[i], psi[i + 1]);
                match (a < 0.0, b < 0.0) {
                    (false, true) => start = Some(crossing(nodes[i], nodes[i + 1], a, b)),
                    (true, false) => {
                        let end = crossing(nodes[i], nodes[i + 1], a, b);
                        if let Some(s) = start.take() {
                            intervals.push(Interval::new(s, end));
                        }
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                intervals.push(Interval::new(s, nodes[nodes.len() - 1]));
            }
            ActuatorShape::Intervals(normalize(intervals))
        }
        LevelSetField::Grid2d { m, psi } => ActuatorShape::Grid(GridMask {
            m: *m,
            cells: psi.iter().map(|&v| v < 0.0).collect(),
        }),
    }
}

fn crossing(xa: f64, xb: f64, a: f64, b: f64) -> f64 {
    xa + a / (a - b) * (xb - xa)
}

/// Result of [`reinitialize`].
#[derive(Clone, Debug)]
pub struct Reinitialized {
    pub field: LevelSetField,
    /// Set when `ψ` had constant sign and was returned unchanged.
    pub passthrough: bool,
}

/// Replaces `ψ` by the signed distance to its zero level set (negative inside).
pub fn reinitialize(field: &LevelSetField) -> Reinitialized {
    let psi = field.values();
    let any_neg = psi.iter().any(|&v| v < 0.0);
    let any_nonneg = psi.iter().any(|&v| v >= 0.0);
    if !(any_neg && any_nonneg) {
        return Reinitialized {
            field: field.clone(),
            passthrough: true,
        };
    }
    let values = match field {
        LevelSetField::Nodes1d { nodes, psi } => eikonal::signed_distance_1d(nodes, psi),
        LevelSetField::Grid2d { m, psi } => eikonal::signed_distance_2d(*m, psi),
    };
    Reinitialized {
        field: field.with_values(values),
        passthrough: false,
    }
}

/// `|a Δ b|`.
pub fn symmetric_difference_measure(a: &ActuatorShape, b: &ActuatorShape) -> Result<f64> {
    match (a, b) {
        (ActuatorShape::Intervals(x), ActuatorShape::Intervals(y)) => {
            let common: f64 = intersection(x, y).iter().map(Interval::len).sum();
            Ok((measure(a) + measure(b) - 2.0 * common).max(0.0))
        }
        (ActuatorShape::Grid(x), ActuatorShape::Grid(y)) => {
            if x.m != y.m {
                return Err(Error::GridMismatch(format!("{} vs {} cells per axis", x.m, y.m)));
            }
            let differ = x.cells.iter().zip(&y.cells).filter(|(p, q)| p != q).count();
            Ok(differ as f64 * x.cell_area())
        }
        _ => Err(Error::GridMismatch("shapes of different dimension".into())),
    }
}

/// Result of [`translate`].
#[derive(Clone, Debug)]
pub struct Translated {
    pub shape: ActuatorShape,
    /// The displacement was shortened to keep the shape inside the domain.
    pub clamped: bool,
}

/// Rigid translation `x ↦ x + v`, shortened so the shape stays in the domain.
/// In 2D the displacement is rounded to whole cells.
pub fn translate(shape: &ActuatorShape, v: &[f64]) -> Translated {
    match shape {
        ActuatorShape::Intervals(iv) => {
            if iv.is_empty() {
                return Translated {
                    shape: shape.clone(),
                    clamped: false,
                };
            }
            let lo = iv.iter().map(|i| i.lo).fold(f64::INFINITY, f64::min);
            let hi = iv.iter().map(|i| i.hi).fold(f64::NEG_INFINITY, f64::max);
            let shift = v[0].clamp(-lo, 1.0 - hi);
            Translated {
                shape: ActuatorShape::Intervals(
                    iv.iter().map(|i| Interval::new(i.lo + shift, i.hi + shift)).collect(),
                ),
                clamped: shift != v[0],
            }
        }
        ActuatorShape::Grid(mask) => {
            let m = mask.m as i64;
            let mut bbox = [m, -1, m, -1];
            for iy in 0..mask.m {
                for ix in 0..mask.m {
                    if mask.get(ix, iy) {
                        bbox[0] = bbox[0].min(ix as i64);
                        bbox[1] = bbox[1].max(ix as i64);
                        bbox[2] = bbox[2].min(iy as i64);
                        bbox[3] = bbox[3].max(iy as i64);
                    }
                }
            }
            if bbox[1] < 0 {
                return Translated {
                    shape: shape.clone(),
                    clamped: false,
                };
            }
            let want = [(v[0] * m as f64).round() as i64, (v[1] * m as f64).round() as i64];
            let sx = want[0].clamp(-bbox[0], m - 1 - bbox[1]);
            let sy = want[1].clamp(-bbox[2], m - 1 - bbox[3]);
            let mut out = GridMask::empty(mask.m);
            for iy in 0..m {
                for ix in 0..m {
                    if mask.get(ix as usize, iy as usize) {
                        out.cells[((iy + sy) * m + ix + sx) as usize] = true;
                    }
                }
            }
            Translated {
                shape: ActuatorShape::Grid(out),
                clamped: sx != want[0] || sy != want[1],
            }
        }
    }
}

/// Sorts and merges overlapping or touching intervals, dropping empty ones.
pub fn normalize(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.retain(|i| i.hi > i.lo);
    intervals.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

pub fn union(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    normalize(a.iter().chain(b).copied().collect())
}

pub fn intersection(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let lo = a[i].lo.max(b[j].lo);
        let hi = a[i].hi.min(b[j].hi);
        if hi > lo {
            out.push(Interval::new(lo, hi));
        }
        if a[i].hi < b[j].hi {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

pub fn difference(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    let mut out = Vec::new();
    for iv in a {
        let mut pieces = vec![*iv];
        for cut in b {
            pieces = pieces
                .into_iter()
                .flat_map(|p| {
                    let mut keep = Vec::with_capacity(2);
                    if cut.hi <= p.lo || cut.lo >= p.hi {
                        keep.push(p);
                    } else {
                        if cut.lo > p.lo {
                            keep.push(Interval::new(p.lo, cut.lo));
                        }
                        if cut.hi < p.hi {
                            keep.push(Interval::new(cut.hi, p.hi));
                        }
                    }
                    keep
                })
                .collect();
        }
        out.extend(pieces);
    }
    normalize(out)
}

/// Connected components of a mask, each as a list of cell indices.
pub fn grid_components(mask: &GridMask) -> Vec<Vec<usize>> {
    let m = mask.m;
    let mut seen = vec![false; m * m];
    let mut comps = Vec::new();
    for start in 0..m * m {
        if !mask.cells[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(idx) = queue.pop_front() {
            comp.push(idx);
            let (ix, iy) = (idx % m, idx / m);
            let mut push = |n: usize| {
                if mask.cells[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if ix > 0 {
                push(idx - 1);
            }
            if ix + 1 < m {
                push(idx + 1);
            }
            if iy > 0 {
                push(idx - m);
            }
            if iy + 1 < m {
                push(idx + m);
            }
        }
        comps.push(comp);
    }
    comps
}
