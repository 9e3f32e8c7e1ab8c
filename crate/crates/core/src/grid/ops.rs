//! Discrete differential operators acting on fields.

use super::{GradNeighbor, Grid, Layout};
use crate::error::Result;
use crate::fields::{CellField, Field, NodeField, VectorField};

impl Grid {
    /// Cell-centred divergence using every face, boundary faces included.
    pub fn div(&self, v: &VectorField) -> Result<CellField> {
        v.check(self)?;
        let (nx, ny) = (self.nx, self.ny);
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let ddx = (v.x[self.index(Layout::XFace, i + 1, j)]
                    - v.x[self.index(Layout::XFace, i, j)])
                    / self.hx;
                let ddy = (v.y[self.index(Layout::YFace, i, j + 1)]
                    - v.y[self.index(Layout::YFace, i, j)])
                    / self.hy;
                out[j * nx + i] = ddx + ddy;
            }
        }
        Ok(CellField { values: out })
    }

    /// Face gradient of a cell field; zero on the normal boundary faces.
    pub fn grad(&self, q: &CellField) -> Result<VectorField> {
        q.check(self)?;
        let (nx, ny) = (self.nx, self.ny);
        let c = |i: usize, j: usize| q.values[j * nx + i];
        let mut v = VectorField::zeros(self);
        for j in 0..ny {
            for i in 1..nx {
                v.x[self.index(Layout::XFace, i, j)] = (c(i, j) - c(i - 1, j)) / self.hx;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                v.y[self.index(Layout::YFace, i, j)] = (c(i, j) - c(i, j - 1)) / self.hy;
            }
        }
        Ok(v)
    }

    /// Scalar curl `d vy/dx - d vx/dy` at interior nodes; boundary nodes hold 0.
    pub fn curl_vec(&self, v: &VectorField) -> Result<NodeField> {
        v.check(self)?;
        let mut z = NodeField::zeros(self);
        for j in 1..self.ny {
            for i in 1..self.nx {
                let dvy = (v.y[self.index(Layout::YFace, i, j)]
                    - v.y[self.index(Layout::YFace, i - 1, j)])
                    / self.hx;
                let dvx = (v.x[self.index(Layout::XFace, i, j)]
                    - v.x[self.index(Layout::XFace, i, j - 1)])
                    / self.hy;
                z.values[self.index(Layout::Node, i, j)] = dvy - dvx;
            }
        }
        Ok(z)
    }

    /// Rotated gradient `(dz/dy, -dz/dx)` on every face.
    pub fn curl_scal(&self, z: &NodeField) -> Result<VectorField> {
        z.check(self)?;
        let n = |i: usize, j: usize| z.values[self.index(Layout::Node, i, j)];
        let mut v = VectorField::zeros(self);
        for j in 0..self.ny {
            for i in 0..=self.nx {
                v.x[self.index(Layout::XFace, i, j)] = (n(i, j + 1) - n(i, j)) / self.hy;
            }
        }
        for j in 0..=self.ny {
            for i in 0..self.nx {
                v.y[self.index(Layout::YFace, i, j)] = -(n(i + 1, j) - n(i, j)) / self.hx;
            }
        }
        Ok(v)
    }

    pub(crate) fn laplacian_component(&self, layout: Layout, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for e in self.grad_edges(layout) {
            let s = e.weight / (e.spacing * e.spacing);
            match e.b {
                GradNeighbor::Point(b) => {
                    let flow = s * (f[b] - f[e.a]);
                    out[e.a] += flow;
                    out[b] -= flow;
                }
                GradNeighbor::Ghost => out[e.a] -= 4.0 * s * f[e.a],
            }
        }
        let (ni, nj) = self.dims(layout);
        for j in 0..nj {
            for i in 0..ni {
                let k = j * ni + i;
                out[k] = if self.is_fixed(layout, i, j) {
                    0.0
                } else {
                    out[k] / self.weight(layout, i, j)
                };
            }
        }
        out
    }

    /// Five-point Laplacian per component, homogeneous Dirichlet walls.
    pub fn laplacian<F: Field>(&self, f: &F) -> Result<F> {
        f.check(self)?;
        let mut out = f.clone();
        for (layout, dst) in out.components_mut() {
            let lap = self.laplacian_component(layout, dst);
            dst.copy_from_slice(&lap);
        }
        Ok(out)
    }

    pub(crate) fn convect_component(&self, layout: Layout, u: &[f64], f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for e in self.conv_edges(layout) {
            let phi = 0.5 * (e.flux[0].1 * u[e.flux[0].0] + e.flux[1].1 * u[e.flux[1].0]);
            out[e.a] += phi * f[e.b];
            out[e.b] -= phi * f[e.a];
        }
        let (ni, nj) = self.dims(layout);
        for j in 0..nj {
            for i in 0..ni {
                out[j * ni + i] /= self.weight(layout, i, j);
            }
        }
        out
    }

    /// Skew-symmetric `u . grad f` on the native layout of each component of `f`.
    pub fn convect<F: Field>(&self, u: &VectorField, f: &F) -> Result<F> {
        u.check(self)?;
        f.check(self)?;
        let flat = u.flat();
        let mut out = f.clone();
        for (layout, dst) in out.components_mut() {
            let c = self.convect_component(layout, &flat, dst);
            dst.copy_from_slice(&c);
        }
        Ok(out)
    }

    /// Velocity averaged to interior nodes; wall nodes are left at zero.
    pub(crate) fn node_velocity(&self, u: &VectorField) -> (Vec<f64>, Vec<f64>) {
        let n = self.len(Layout::Node);
        let (mut ux, mut uy) = (vec![0.0; n], vec![0.0; n]);
        for j in 1..self.ny {
            for i in 1..self.nx {
                let k = self.index(Layout::Node, i, j);
                ux[k] = 0.5
                    * (u.x[self.index(Layout::XFace, i, j - 1)] + u.x[self.index(Layout::XFace, i, j)]);
                uy[k] = 0.5
                    * (u.y[self.index(Layout::YFace, i - 1, j)] + u.y[self.index(Layout::YFace, i, j)]);
            }
        }
        (ux, uy)
    }

    /// `z e3 x u = z (-u_y, u_x)`, assembled through node averages so that
    /// `<z x u, u> = 0` for every `z` and `u`.
    pub fn cross(&self, z: &NodeField, u: &VectorField) -> Result<VectorField> {
        z.check(self)?;
        u.check(self)?;
        let (ux, uy) = self.node_velocity(u);
        let node = |i: usize, j: usize| self.index(Layout::Node, i, j);
        let interior = |i: usize, j: usize| i > 0 && i < self.nx && j > 0 && j < self.ny;
        let mut out = VectorField::zeros(self);
        for j in 0..self.ny {
            for i in 1..self.nx {
                let mut s = 0.0;
                for jj in [j, j + 1] {
                    if interior(i, jj) {
                        let k = node(i, jj);
                        s -= z.values[k] * uy[k];
                    }
                }
                out.x[self.index(Layout::XFace, i, j)] = 0.5 * s;
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                let mut s = 0.0;
                for ii in [i, i + 1] {
                    if interior(ii, j) {
                        let k = node(ii, j);
                        s += z.values[k] * ux[k];
                    }
                }
                out.y[self.index(Layout::YFace, i, j)] = 0.5 * s;
            }
        }
        Ok(out)
    }
}
