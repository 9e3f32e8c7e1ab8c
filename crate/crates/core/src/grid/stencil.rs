//! Edge lists shared by the Laplacian, the H1 seminorm and the skew convection.
//!
//! A gradient edge is one difference quotient `(f_b - f_a) / spacing` with a
//! quadrature weight; the seminorm is the weighted sum of squares and the
//! Laplacian is minus its variational derivative, so `-<lap f, f> = |f|_1^2`
//! holds by construction. Ghost edges reflect across a wall (`f_ghost = -f_a`).
//!
//! A convection edge joins two storage points through a dual face and carries
//! the velocity flux through it as a linear combination of face values.

use super::{Grid, Layout};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradNeighbor {
    Point(usize),
    Ghost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradEdge {
    pub a: usize,
    pub b: GradNeighbor,
    pub weight: f64,
    pub spacing: f64,
}

/// Flux from `a` to `b`: `sum(coeff * u[face])`, with faces indexed in the
/// concatenated storage `[x-faces, y-faces]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvEdge {
    pub a: usize,
    pub b: usize,
    pub flux: [(usize, f64); 2],
}

impl Grid {
    pub fn grad_edges(&self, layout: Layout) -> Vec<GradEdge> {
        let (nx, ny, hx, hy) = (self.nx, self.ny, self.hx, self.hy);
        let area = hx * hy;
        let (ni, nj) = self.dims(layout);
        let mut out = Vec::with_capacity(2 * ni * nj + 2 * (ni + nj));
        let fixed = |i: usize, j: usize| self.is_fixed(layout, i, j);
        let idx = |i: usize, j: usize| self.index(layout, i, j);
        let mut push = |a: usize, b: GradNeighbor, weight: f64, spacing: f64| {
            out.push(GradEdge {
                a,
                b,
                weight,
                spacing,
            })
        };

        // Neighbours along each axis.
        for j in 0..nj {
            for i in 0..ni.saturating_sub(1) {
                if fixed(i, j) && fixed(i + 1, j) {
                    continue;
                }
                push(idx(i, j), GradNeighbor::Point(idx(i + 1, j)), area, hx);
            }
        }
        for j in 0..nj.saturating_sub(1) {
            for i in 0..ni {
                if fixed(i, j) && fixed(i, j + 1) {
                    continue;
                }
                push(idx(i, j), GradNeighbor::Point(idx(i, j + 1)), area, hy);
            }
        }

        // Reflections across walls that cut through a half cell.
        let ghost_x = matches!(layout, Layout::Cell | Layout::YFace);
        let ghost_y = matches!(layout, Layout::Cell | Layout::XFace);
        if ghost_x {
            for j in 0..nj {
                for i in [0, nx - 1] {
                    if !fixed(i, j) {
                        push(idx(i, j), GradNeighbor::Ghost, 0.5 * area, hx);
                    }
                }
            }
        }
        if ghost_y {
            for j in [0, ny - 1] {
                for i in 0..ni {
                    if !fixed(i, j) {
                        push(idx(i, j), GradNeighbor::Ghost, 0.5 * area, hy);
                    }
                }
            }
        }
        out
    }

    pub fn conv_edges(&self, layout: Layout) -> Vec<ConvEdge> {
        let (nx, ny, hx, hy) = (self.nx, self.ny, self.hx, self.hy);
        let off = self.len(Layout::XFace);
        let ux = |i: usize, j: usize| self.index(Layout::XFace, i, j);
        let uy = |i: usize, j: usize| off + self.index(Layout::YFace, i, j);
        let idx = |i: usize, j: usize| self.index(layout, i, j);
        let mut out = Vec::new();
        let mut push = |a: usize, b: usize, flux: [(usize, f64); 2]| {
            out.push(ConvEdge { a, b, flux })
        };
        match layout {
            Layout::Cell => {
                for j in 0..ny {
                    for i in 0..nx - 1 {
                        let f = ux(i + 1, j);
                        push(idx(i, j), idx(i + 1, j), [(f, hy), (f, 0.0)]);
                    }
                }
                for j in 0..ny - 1 {
                    for i in 0..nx {
                        let f = uy(i, j + 1);
                        push(idx(i, j), idx(i, j + 1), [(f, hx), (f, 0.0)]);
                    }
                }
            }
            Layout::Node => {
                // Each cell contributes half of every dual face it contains.
                for j in 0..ny {
                    for i in 0..nx {
                        let fx = [(ux(i, j), 0.25 * hy), (ux(i + 1, j), 0.25 * hy)];
                        push(idx(i, j), idx(i + 1, j), fx);
                        push(idx(i, j + 1), idx(i + 1, j + 1), fx);
                        let fy = [(uy(i, j), 0.25 * hx), (uy(i, j + 1), 0.25 * hx)];
                        push(idx(i, j), idx(i, j + 1), fy);
                        push(idx(i + 1, j), idx(i + 1, j + 1), fy);
                    }
                }
            }
            Layout::XFace => {
                for j in 0..ny {
                    for i in 1..nx - 1 {
                        let fx = [(ux(i, j), 0.5 * hy), (ux(i + 1, j), 0.5 * hy)];
                        push(idx(i, j), idx(i + 1, j), fx);
                    }
                }
                for j in 0..ny - 1 {
                    for i in 1..nx {
                        let fy = [(uy(i - 1, j + 1), 0.5 * hx), (uy(i, j + 1), 0.5 * hx)];
                        push(idx(i, j), idx(i, j + 1), fy);
                    }
                }
            }
            Layout::YFace => {
                for j in 1..ny - 1 {
                    for i in 0..nx {
                        let fy = [(uy(i, j), 0.5 * hx), (uy(i, j + 1), 0.5 * hx)];
                        push(idx(i, j), idx(i, j + 1), fy);
                    }
                }
                for j in 1..ny {
                    for i in 0..nx - 1 {
                        let fx = [(ux(i + 1, j - 1), 0.5 * hy), (ux(i + 1, j), 0.5 * hy)];
                        push(idx(i, j), idx(i + 1, j), fx);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Sum of fluxes leaving each point for a velocity with exactly zero cell
    // divergence must vanish: the dual cells inherit conservation.
    #[test]
    fn dual_divergence_vanishes_for_curl_fields() {
        let g = Grid::new(6, 5, 1.2, 0.9).unwrap();
        let z: Vec<f64> = (0..g.len(Layout::Node))
            .map(|k| {
                let (i, j) = g.coords(Layout::Node, k);
                if g.is_fixed(Layout::Node, i, j) {
                    0.0
                } else {
                    ((k * 7919) % 13) as f64 / 13.0 - 0.4
                }
            })
            .collect();
        let u = g
            .curl_scal(&crate::fields::NodeField::from_vec(&g, z).unwrap())
            .unwrap();
        let flat: Vec<f64> = u.x.iter().chain(u.y.iter()).copied().collect();
        for layout in [Layout::Cell, Layout::Node, Layout::XFace, Layout::YFace] {
            let mut net = vec![0.0; g.len(layout)];
            for e in g.conv_edges(layout) {
                let phi: f64 = e.flux.iter().map(|&(c, w)| w * flat[c]).sum();
                net[e.a] += phi;
                net[e.b] -= phi;
            }
            let (ni, nj) = g.dims(layout);
            for j in 0..nj {
                for i in 0..ni {
                    // Points next to a fixed face lose the edge towards it; the
                    // missing flux multiplies a zero value, so only free points
                    // away from fixed neighbours are checked.
                    let near_fixed = match layout {
                        Layout::XFace => i <= 1 || i + 1 >= g.nx(),
                        Layout::YFace => j <= 1 || j + 1 >= g.ny(),
                        _ => false,
                    };
                    if near_fixed {
                        continue;
                    }
                    let v = net[g.index(layout, i, j)];
                    assert!(v.abs() < 1e-13, "{layout:?} ({i},{j}): {v}");
                }
            }
        }
    }
}
