//! Sparse assembly of the operators on packed unknowns.
//!
//! Velocity-like unknowns are the interior faces packed by
//! [`Grid::free_face`]; node and cell unknowns use full storage order.

use super::{GradNeighbor, Grid, Layout};
use crate::fields::{NodeField, VectorField};
use crate::linsolve::CsrMatrix;

impl Grid {
    /// Interior-face position of a concatenated `[x-faces, y-faces]` index.
    pub(crate) fn flat_to_free(&self, flat: usize) -> Option<usize> {
        let off = self.len(Layout::XFace);
        let (layout, k) = if flat < off {
            (Layout::XFace, flat)
        } else {
            (Layout::YFace, flat - off)
        };
        let (i, j) = self.coords(layout, k);
        self.free_face(layout, i, j)
    }

    fn free_of(&self, layout: Layout, k: usize) -> Option<usize> {
        match layout {
            Layout::XFace | Layout::YFace => {
                let (i, j) = self.coords(layout, k);
                self.free_face(layout, i, j)
            }
            _ => Some(k),
        }
    }

    fn laplacian_trips(&self, layout: Layout, keep: impl Fn(usize) -> Option<usize>, t: &mut Vec<(usize, usize, f64)>) {
        let w = self.weights(layout);
        for e in self.grad_edges(layout) {
            let s = e.weight / (e.spacing * e.spacing);
            match e.b {
                GradNeighbor::Point(b) => {
                    let (pa, pb) = (keep(e.a), keep(b));
                    if let Some(ra) = pa {
                        t.push((ra, ra, -s / w[e.a]));
                        if let Some(rb) = pb {
                            t.push((ra, rb, s / w[e.a]));
                        }
                    }
                    if let Some(rb) = pb {
                        t.push((rb, rb, -s / w[b]));
                        if let Some(ra) = pa {
                            t.push((rb, ra, s / w[b]));
                        }
                    }
                }
                GradNeighbor::Ghost => {
                    if let Some(ra) = keep(e.a) {
                        t.push((ra, ra, -4.0 * s / w[e.a]));
                    }
                }
            }
        }
    }

    /// Vector Laplacian on interior faces.
    pub fn face_laplacian_matrix(&self) -> CsrMatrix {
        let n = self.n_free_faces();
        let mut t = Vec::new();
        for layout in [Layout::XFace, Layout::YFace] {
            self.laplacian_trips(layout, |k| self.free_of(layout, k), &mut t);
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    /// Dirichlet Laplacian of a scalar layout restricted to its free points.
    /// Returns the matrix and the storage index of each unknown.
    pub fn scalar_laplacian_matrix(&self, layout: Layout) -> (CsrMatrix, Vec<usize>) {
        let mut map = vec![None; self.len(layout)];
        let mut dofs = Vec::new();
        for (k, m) in map.iter_mut().enumerate() {
            let (i, j) = self.coords(layout, k);
            if !self.is_fixed(layout, i, j) {
                *m = Some(dofs.len());
                dofs.push(k);
            }
        }
        let mut t = Vec::new();
        self.laplacian_trips(layout, |k| map[k], &mut t);
        (CsrMatrix::from_triplets(dofs.len(), dofs.len(), &t), dofs)
    }

    /// Divergence from interior faces to cells.
    pub fn div_matrix(&self) -> CsrMatrix {
        let (nx, ny) = (self.nx, self.ny);
        let mut t = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let r = j * nx + i;
                let faces = [
                    (Layout::XFace, i + 1, j, 1.0 / self.hx),
                    (Layout::XFace, i, j, -1.0 / self.hx),
                    (Layout::YFace, i, j + 1, 1.0 / self.hy),
                    (Layout::YFace, i, j, -1.0 / self.hy),
                ];
                for (layout, fi, fj, v) in faces {
                    if let Some(c) = self.free_face(layout, fi, fj) {
                        t.push((r, c, v));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(nx * ny, self.n_free_faces(), &t)
    }

    /// `div grad` on cells with the natural (no-flux) wall condition.
    pub fn cell_poisson_matrix(&self) -> CsrMatrix {
        let d = self.div_matrix();
        let dt = d.transpose();
        let n = self.len(Layout::Cell);
        let mut t = Vec::new();
        for r in 0..n {
            for (f, a) in d.row(r) {
                for (c, b) in dt.row(f) {
                    t.push((r, c, -a * b));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn convect_trips(
        &self,
        layout: Layout,
        flat_u: &[f64],
        keep: impl Fn(usize) -> Option<usize>,
        t: &mut Vec<(usize, usize, f64)>,
    ) {
        let w = self.weights(layout);
        for e in self.conv_edges(layout) {
            let phi = 0.5 * (e.flux[0].1 * flat_u[e.flux[0].0] + e.flux[1].1 * flat_u[e.flux[1].0]);
            if let (Some(ra), Some(rb)) = (keep(e.a), keep(e.b)) {
                t.push((ra, rb, phi / w[e.a]));
                t.push((rb, ra, -phi / w[e.b]));
            }
        }
    }

    /// `f -> convect(u, f)` on interior faces.
    pub fn face_convect_matrix(&self, u: &VectorField) -> CsrMatrix {
        let flat = u.flat();
        let n = self.n_free_faces();
        let mut t = Vec::new();
        for layout in [Layout::XFace, Layout::YFace] {
            self.convect_trips(layout, &flat, |k| self.free_of(layout, k), &mut t);
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    /// `v -> convect(v, f)` on interior faces, i.e. linear in the velocity.
    pub fn face_convect_velocity_matrix(&self, f: &VectorField) -> CsrMatrix {
        let n = self.n_free_faces();
        let mut t = Vec::new();
        for (layout, vals) in [(Layout::XFace, &f.x), (Layout::YFace, &f.y)] {
            let w = self.weights(layout);
            for e in self.conv_edges(layout) {
                let (Some(ra), Some(rb)) = (self.free_of(layout, e.a), self.free_of(layout, e.b)) else {
                    continue;
                };
                for &(c, coeff) in &e.flux {
                    if coeff == 0.0 {
                        continue;
                    }
                    if let Some(col) = self.flat_to_free(c) {
                        t.push((ra, col, 0.5 * coeff * vals[e.b] / w[e.a]));
                        t.push((rb, col, -0.5 * coeff * vals[e.a] / w[e.b]));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    /// `z -> convect(u, z)` on all nodes.
    pub fn node_convect_matrix(&self, u: &VectorField) -> CsrMatrix {
        let flat = u.flat();
        let n = self.len(Layout::Node);
        let mut t = Vec::new();
        self.convect_trips(Layout::Node, &flat, Some, &mut t);
        CsrMatrix::from_triplets(n, n, &t)
    }

    /// `u -> cross(z, u)` on interior faces.
    pub fn cross_matrix(&self, z: &NodeField) -> CsrMatrix {
        let n = self.n_free_faces();
        let mut t = Vec::new();
        let interior = |i: usize, j: usize| i > 0 && i < self.nx && j > 0 && j < self.ny;
        let zn = |i: usize, j: usize| z.values[self.index(Layout::Node, i, j)];
        // Node average of u_y at (i, j) uses y-faces (i-1, j) and (i, j).
        for j in 0..self.ny {
            for i in 1..self.nx {
                let row = self.free_face(Layout::XFace, i, j).unwrap();
                for jj in [j, j + 1] {
                    if !interior(i, jj) {
                        continue;
                    }
                    let c = -0.25 * zn(i, jj);
                    for ii in [i - 1, i] {
                        let col = self.free_face(Layout::YFace, ii, jj).unwrap();
                        t.push((row, col, c));
                    }
                }
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                let row = self.free_face(Layout::YFace, i, j).unwrap();
                for ii in [i, i + 1] {
                    if !interior(ii, j) {
                        continue;
                    }
                    let c = 0.25 * zn(ii, j);
                    for jj in [j - 1, j] {
                        let col = self.free_face(Layout::XFace, ii, jj).unwrap();
                        t.push((row, col, c));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::CellField;

    fn wiggle(g: &Grid, layout: Layout, seed: f64) -> Vec<f64> {
        (0..g.len(layout))
            .map(|k| ((k as f64 + 1.0) * seed).sin())
            .collect()
    }

    fn wiggle_v(g: &Grid, seed: f64) -> VectorField {
        let mut v = VectorField {
            x: wiggle(g, Layout::XFace, seed),
            y: wiggle(g, Layout::YFace, seed * 1.7),
        };
        v.zero_boundary(g);
        v
    }

    fn close(a: &[f64], b: &[f64]) {
        let scale = a.iter().chain(b).fold(1.0_f64, |m, v| m.max(v.abs()));
        for (p, q) in a.iter().zip(b) {
            assert!((p - q).abs() <= 1e-12 * scale, "{p} vs {q}");
        }
    }

    #[test]
    fn matrices_match_operators() {
        let g = Grid::new(7, 5, 1.0, 0.6).unwrap();
        let u = g
            .curl_scal(&NodeField {
                values: wiggle(&g, Layout::Node, 0.31)
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let (i, j) = g.coords(Layout::Node, k);
                        if g.is_fixed(Layout::Node, i, j) {
                            0.0
                        } else {
                            *v
                        }
                    })
                    .collect(),
            })
            .unwrap();
        let f = wiggle_v(&g, 0.77);
        let fp = f.pack_free(&g);

        close(&g.face_laplacian_matrix().matvec(&fp), &g.laplacian(&f).unwrap().pack_free(&g));
        close(&g.div_matrix().matvec(&fp), &g.div(&f).unwrap().values);
        close(
            &g.face_convect_matrix(&u).matvec(&fp),
            &g.convect(&u, &f).unwrap().pack_free(&g),
        );
        close(
            &g.face_convect_velocity_matrix(&f).matvec(&u.pack_free(&g)),
            &g.convect(&u, &f).unwrap().pack_free(&g),
        );
        let z = NodeField {
            values: wiggle(&g, Layout::Node, 0.53),
        };
        close(&g.node_convect_matrix(&u).matvec(&z.values), &g.convect(&u, &z).unwrap().values);
        close(&g.cross_matrix(&z).matvec(&fp), &g.cross(&z, &f).unwrap().pack_free(&g));

        let q = CellField {
            values: wiggle(&g, Layout::Cell, 0.41),
        };
        let dg = g.div(&g.grad(&q).unwrap()).unwrap();
        close(&g.cell_poisson_matrix().matvec(&q.values), &dg.values);

        let (lc, dofs) = g.scalar_laplacian_matrix(Layout::Cell);
        assert_eq!(dofs.len(), g.len(Layout::Cell));
        close(&lc.matvec(&q.values), &g.laplacian(&q).unwrap().values);
    }
}
