//! Staggered rectangular mesh on `[0, lx] x [0, ly]`.
//!
//! Storage layouts (all row-major, `j` slowest):
//! - x-faces `(i, j)` at `(i hx, (j + 1/2) hy)`, `i in 0..=nx`, `j in 0..ny`
//! - y-faces `(i, j)` at `((i + 1/2) hx, j hy)`, `i in 0..nx`, `j in 0..=ny`
//! - cells `(i, j)` at `((i + 1/2) hx, (j + 1/2) hy)`
//! - nodes `(i, j)` at `(i hx, j hy)`, `i in 0..=nx`, `j in 0..=ny`

mod matrices;
mod ops;
mod stencil;

pub use stencil::{ConvEdge, GradEdge, GradNeighbor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    XFace,
    YFace,
    Cell,
    Node,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::XFace => "x-face",
            Layout::YFace => "y-face",
            Layout::Cell => "cell",
            Layout::Node => "node",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    /// Unit square with `n x n` cells.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Index extents `(ni, nj)` of a layout.
    pub fn dims(&self, layout: Layout) -> (usize, usize) {
        match layout {
            Layout::XFace => (self.nx + 1, self.ny),
            Layout::YFace => (self.nx, self.ny + 1),
            Layout::Cell => (self.nx, self.ny),
            Layout::Node => (self.nx + 1, self.ny + 1),
        }
    }

    pub fn len(&self, layout: Layout) -> usize {
        let (a, b) = self.dims(layout);
        a * b
    }

    #[inline]
    pub fn index(&self, layout: Layout, i: usize, j: usize) -> usize {
        let (ni, _) = self.dims(layout);
        j * ni + i
    }

    /// Inverse of [`Grid::index`].
    pub fn coords(&self, layout: Layout, idx: usize) -> (usize, usize) {
        let (ni, _) = self.dims(layout);
        (idx % ni, idx / ni)
    }

    pub fn position(&self, layout: Layout, i: usize, j: usize) -> (f64, f64) {
        let (fi, fj) = (i as f64, j as f64);
        match layout {
            Layout::XFace => (fi * self.hx, (fj + 0.5) * self.hy),
            Layout::YFace => ((fi + 0.5) * self.hx, fj * self.hy),
            Layout::Cell => ((fi + 0.5) * self.hx, (fj + 0.5) * self.hy),
            Layout::Node => (fi * self.hx, fj * self.hy),
        }
    }

    /// Quadrature weight of one storage point.
    pub fn weight(&self, layout: Layout, i: usize, j: usize) -> f64 {
        let a = self.hx * self.hy;
        match layout {
            Layout::Cell => a,
            Layout::XFace => {
                if i == 0 || i == self.nx {
                    0.5 * a
                } else {
                    a
                }
            }
            Layout::YFace => {
                if j == 0 || j == self.ny {
                    0.5 * a
                } else {
                    a
                }
            }
            Layout::Node => {
                let ei = i == 0 || i == self.nx;
                let ej = j == 0 || j == self.ny;
                match (ei, ej) {
                    (true, true) => 0.25 * a,
                    (true, false) | (false, true) => 0.5 * a,
                    (false, false) => a,
                }
            }
        }
    }

    pub fn weights(&self, layout: Layout) -> Vec<f64> {
        let (ni, nj) = self.dims(layout);
        let mut w = Vec::with_capacity(ni * nj);
        for j in 0..nj {
            for i in 0..ni {
                w.push(self.weight(layout, i, j));
            }
        }
        w
    }

    /// Whether a storage point carries a homogeneous Dirichlet value.
    /// Normal boundary faces and boundary nodes are fixed; cells never are.
    pub fn is_fixed(&self, layout: Layout, i: usize, j: usize) -> bool {
        match layout {
            Layout::XFace => i == 0 || i == self.nx,
            Layout::YFace => j == 0 || j == self.ny,
            Layout::Cell => false,
            Layout::Node => i == 0 || i == self.nx || j == 0 || j == self.ny,
        }
    }

    /// Number of interior x-faces plus interior y-faces: the velocity unknowns.
    pub fn n_free_faces(&self) -> usize {
        self.n_free_x() + self.nx * (self.ny - 1)
    }

    pub(crate) fn n_free_x(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    /// Position of face `(i, j)` in the packed interior-face vector, if interior.
    pub fn free_face(&self, layout: Layout, i: usize, j: usize) -> Option<usize> {
        match layout {
            Layout::XFace if i > 0 && i < self.nx => Some(j * (self.nx - 1) + i - 1),
            Layout::YFace if j > 0 && j < self.ny => {
                Some(self.n_free_x() + (j - 1) * self.nx + i)
            }
            _ => None,
        }
    }

    /// Bounding box measure `lx * ly`.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub(crate) fn check_len(&self, layout: Layout, found: usize) -> Result<()> {
        let expected = self.len(layout);
        if expected == found {
            Ok(())
        } else {
            Err(Error::LayoutMismatch { expected, found })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacings() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        assert_eq!((g.hx(), g.hy()), (0.25, 0.25));
        let g = Grid::new(2, 8, 1.0, 2.0).unwrap();
        assert_eq!((g.hx(), g.hy()), (0.5, 0.25));
        assert!(Grid::new(1, 4, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 0.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 1.0, -2.0).is_err());
    }

    #[test]
    fn index_maps_are_bijective() {
        let g = Grid::new(5, 3, 1.0, 1.0).unwrap();
        for layout in [Layout::XFace, Layout::YFace, Layout::Cell, Layout::Node] {
            let (ni, nj) = g.dims(layout);
            let mut seen = vec![false; g.len(layout)];
            for j in 0..nj {
                for i in 0..ni {
                    let k = g.index(layout, i, j);
                    assert!(!seen[k]);
                    seen[k] = true;
                    assert_eq!(g.coords(layout, k), (i, j));
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn free_faces_are_packed_densely() {
        let g = Grid::new(4, 3, 1.0, 1.0).unwrap();
        let mut seen = vec![false; g.n_free_faces()];
        for layout in [Layout::XFace, Layout::YFace] {
            let (ni, nj) = g.dims(layout);
            for j in 0..nj {
                for i in 0..ni {
                    match g.free_face(layout, i, j) {
                        Some(k) => {
                            assert!(!g.is_fixed(layout, i, j));
                            assert!(!seen[k]);
                            seen[k] = true;
                        }
                        None => assert!(g.is_fixed(layout, i, j)),
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn weights_integrate_the_domain() {
        let g = Grid::new(7, 5, 2.0, 1.5).unwrap();
        for layout in [Layout::XFace, Layout::YFace, Layout::Cell, Layout::Node] {
            let total: f64 = g.weights(layout).iter().sum();
            assert!((total - 3.0).abs() < 1e-13, "{layout:?}: {total}");
        }
    }
}
