//! Field containers and the quadrature-weighted norms.

use crate::error::{Error, Result};
use crate::grid::{GradNeighbor, Grid, Layout};

/// Common view over the three field kinds: a list of layout-tagged arrays.
pub trait Field: Clone + std::fmt::Debug {
    fn components(&self) -> Vec<(Layout, &[f64])>;
    fn components_mut(&mut self) -> Vec<(Layout, &mut [f64])>;
    fn zeros(g: &Grid) -> Self;

    /// `a * self + b * other`, componentwise.
    fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let mut out = self.clone();
        for ((_, dst), (_, src)) in out.components_mut().into_iter().zip(other.components()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = a * *d + b * s;
            }
        }
        out
    }

    fn sub(&self, other: &Self) -> Self {
        self.combine(1.0, other, -1.0)
    }

    fn add(&self, other: &Self) -> Self {
        self.combine(1.0, other, 1.0)
    }

    fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for (_, dst) in out.components_mut() {
            dst.iter_mut().for_each(|d| *d *= a);
        }
        out
    }

    fn max_abs(&self) -> f64 {
        self.components()
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    fn is_finite(&self) -> bool {
        self.components()
            .iter()
            .all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    fn check(&self, g: &Grid) -> Result<()> {
        for (layout, v) in self.components() {
            g.check_len(layout, v.len())?;
        }
        Ok(())
    }
}

/// Face-centred vector: `x` on x-faces, `y` on y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    pub values: Vec<f64>,
}

impl Field for VectorField {
    fn components(&self) -> Vec<(Layout, &[f64])> {
        vec![(Layout::XFace, &self.x), (Layout::YFace, &self.y)]
    }
    fn components_mut(&mut self) -> Vec<(Layout, &mut [f64])> {
        vec![(Layout::XFace, &mut self.x), (Layout::YFace, &mut self.y)]
    }
    fn zeros(g: &Grid) -> Self {
        Self {
            x: vec![0.0; g.len(Layout::XFace)],
            y: vec![0.0; g.len(Layout::YFace)],
        }
    }
}

impl Field for CellField {
    fn components(&self) -> Vec<(Layout, &[f64])> {
        vec![(Layout::Cell, &self.values)]
    }
    fn components_mut(&mut self) -> Vec<(Layout, &mut [f64])> {
        vec![(Layout::Cell, &mut self.values)]
    }
    fn zeros(g: &Grid) -> Self {
        Self {
            values: vec![0.0; g.len(Layout::Cell)],
        }
    }
}

impl Field for NodeField {
    fn components(&self) -> Vec<(Layout, &[f64])> {
        vec![(Layout::Node, &self.values)]
    }
    fn components_mut(&mut self) -> Vec<(Layout, &mut [f64])> {
        vec![(Layout::Node, &mut self.values)]
    }
    fn zeros(g: &Grid) -> Self {
        Self {
            values: vec![0.0; g.len(Layout::Node)],
        }
    }
}

fn sample_layout(g: &Grid, layout: Layout, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (ni, nj) = g.dims(layout);
    let mut out = Vec::with_capacity(ni * nj);
    for j in 0..nj {
        for i in 0..ni {
            let (x, y) = g.position(layout, i, j);
            out.push(f(x, y));
        }
    }
    out
}

impl VectorField {
    pub fn new(g: &Grid, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let v = Self { x, y };
        v.check(g)?;
        Ok(v)
    }

    /// Point samples of `f` at face midpoints, boundary faces included.
    pub fn sample(g: &Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        Self {
            x: sample_layout(g, Layout::XFace, |x, y| f(x, y)[0]),
            y: sample_layout(g, Layout::YFace, |x, y| f(x, y)[1]),
        }
    }

    /// Like [`VectorField::sample`] but with the normal boundary faces zeroed.
    pub fn sample_interior(g: &Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut v = Self::sample(g, f);
        v.zero_boundary(g);
        v
    }

    pub fn zero_boundary(&mut self, g: &Grid) {
        for (layout, vals) in self.components_mut() {
            for (k, v) in vals.iter_mut().enumerate() {
                let (i, j) = g.coords(layout, k);
                if g.is_fixed(layout, i, j) {
                    *v = 0.0;
                }
            }
        }
    }

    /// Largest magnitude on the normal boundary faces.
    pub fn boundary_max(&self, g: &Grid) -> f64 {
        let mut m = 0.0_f64;
        for (layout, vals) in self.components() {
            for (k, v) in vals.iter().enumerate() {
                let (i, j) = g.coords(layout, k);
                if g.is_fixed(layout, i, j) {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    /// Interior face values packed as `[x-faces, y-faces]`.
    pub fn pack_free(&self, g: &Grid) -> Vec<f64> {
        let mut out = vec![0.0; g.n_free_faces()];
        for (layout, vals) in self.components() {
            for (k, v) in vals.iter().enumerate() {
                let (i, j) = g.coords(layout, k);
                if let Some(p) = g.free_face(layout, i, j) {
                    out[p] = *v;
                }
            }
        }
        out
    }

    pub fn from_free(g: &Grid, packed: &[f64]) -> Self {
        let mut out = Self::zeros(g);
        for (layout, vals) in out.components_mut() {
            for (k, v) in vals.iter_mut().enumerate() {
                let (i, j) = g.coords(layout, k);
                if let Some(p) = g.free_face(layout, i, j) {
                    *v = packed[p];
                }
            }
        }
        out
    }

    /// Both components concatenated as `[x-faces, y-faces]`.
    pub fn flat(&self) -> Vec<f64> {
        self.x.iter().chain(self.y.iter()).copied().collect()
    }
}

impl CellField {
    pub fn from_vec(g: &Grid, values: Vec<f64>) -> Result<Self> {
        g.check_len(Layout::Cell, values.len())?;
        Ok(Self { values })
    }

    pub fn sample(g: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: sample_layout(g, Layout::Cell, f),
        }
    }

    /// Cell average (all cells carry the same weight).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }
}

impl NodeField {
    pub fn from_vec(g: &Grid, values: Vec<f64>) -> Result<Self> {
        g.check_len(Layout::Node, values.len())?;
        Ok(Self { values })
    }

    pub fn sample(g: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: sample_layout(g, Layout::Node, f),
        }
    }
}

fn weighted_dot(g: &Grid, layout: Layout, a: &[f64], b: &[f64]) -> f64 {
    let (ni, nj) = g.dims(layout);
    let mut s = 0.0;
    for j in 0..nj {
        for i in 0..ni {
            let k = j * ni + i;
            s += g.weight(layout, i, j) * a[k] * b[k];
        }
    }
    s
}

pub fn inner<F: Field>(g: &Grid, f: &F, h: &F) -> Result<f64> {
    f.check(g)?;
    h.check(g)?;
    Ok(f.components()
        .iter()
        .zip(h.components())
        .map(|((layout, a), (_, b))| weighted_dot(g, *layout, a, b))
        .sum())
}

pub fn l2_norm_sq<F: Field>(g: &Grid, f: &F) -> f64 {
    f.components()
        .iter()
        .map(|(layout, a)| weighted_dot(g, *layout, a, a))
        .sum()
}

pub fn l2_norm<F: Field>(g: &Grid, f: &F) -> f64 {
    l2_norm_sq(g, f).sqrt()
}

pub(crate) fn h1_component_sq(g: &Grid, layout: Layout, f: &[f64]) -> f64 {
    g.grad_edges(layout)
        .iter()
        .map(|e| {
            let d = match e.b {
                GradNeighbor::Point(b) => f[b] - f[e.a],
                GradNeighbor::Ghost => -2.0 * f[e.a],
            } / e.spacing;
            e.weight * d * d
        })
        .sum()
}

pub fn h1_seminorm_sq<F: Field>(g: &Grid, f: &F) -> f64 {
    f.components()
        .iter()
        .map(|(layout, a)| h1_component_sq(g, *layout, a))
        .sum()
}

pub fn h1_seminorm<F: Field>(g: &Grid, f: &F) -> f64 {
    h1_seminorm_sq(g, f).sqrt()
}

pub fn alpha_norm_sq(g: &Grid, v: &VectorField, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    Ok(l2_norm_sq(g, v) + alpha * h1_seminorm_sq(g, v))
}

/// `(|v|^2 + alpha |v|_1^2)^(1/2)`.
pub fn alpha_norm(g: &Grid, v: &VectorField, alpha: f64) -> Result<f64> {
    alpha_norm_sq(g, v, alpha).map(f64::sqrt)
}
