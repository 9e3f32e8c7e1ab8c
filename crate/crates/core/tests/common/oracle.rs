//! Dense, self-contained staggered-grid MHD step in rotational form: no
//! vorticity unknown, the rotation term uses the curl of the old velocity.
//! Shares nothing with the library beyond the storage layout of face fields.

use nalgebra::{DMatrix, DVector};

pub struct Mac {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl Mac {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self {
            nx,
            ny,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        }
    }

    fn nxf(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    pub fn nv(&self) -> usize {
        self.nxf() + self.nx * (self.ny - 1)
    }

    fn nc(&self) -> usize {
        self.nx * self.ny
    }

    fn xi(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i - 1
    }

    fn yi(&self, i: usize, j: usize) -> usize {
        self.nxf() + (j - 1) * self.nx + i
    }

    /// x-component at face `(i, j)`, zero on walls and outside.
    fn ux(&self, v: &[f64], i: isize, j: isize) -> f64 {
        if i <= 0 || i >= self.nx as isize || j < 0 || j >= self.ny as isize {
            0.0
        } else {
            v[self.xi(i as usize, j as usize)]
        }
    }

    fn uy(&self, v: &[f64], i: isize, j: isize) -> f64 {
        if j <= 0 || j >= self.ny as isize || i < 0 || i >= self.nx as isize {
            0.0
        } else {
            v[self.yi(i as usize, j as usize)]
        }
    }

    /// Packs interior faces from full row-major storage (`x`: `(nx+1) x ny`,
    /// `y`: `nx x (ny+1)`).
    pub fn pack(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.nv()];
        for j in 0..self.ny {
            for i in 1..self.nx {
                v[self.xi(i, j)] = x[j * (self.nx + 1) + i];
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                v[self.yi(i, j)] = y[j * self.nx + i];
            }
        }
        v
    }

    pub fn lap(&self, v: &[f64]) -> Vec<f64> {
        let (hx2, hy2) = (self.hx * self.hx, self.hy * self.hy);
        let mut out = vec![0.0; self.nv()];
        for j in 0..self.ny as isize {
            for i in 1..self.nx as isize {
                let c = self.ux(v, i, j);
                let up = if j + 1 < self.ny as isize { self.ux(v, i, j + 1) } else { -c };
                let down = if j > 0 { self.ux(v, i, j - 1) } else { -c };
                out[self.xi(i as usize, j as usize)] = (self.ux(v, i + 1, j) - 2.0 * c + self.ux(v, i - 1, j)) / hx2
                    + (up - 2.0 * c + down) / hy2;
            }
        }
        for j in 1..self.ny as isize {
            for i in 0..self.nx as isize {
                let c = self.uy(v, i, j);
                let right = if i + 1 < self.nx as isize { self.uy(v, i + 1, j) } else { -c };
                let left = if i > 0 { self.uy(v, i - 1, j) } else { -c };
                out[self.yi(i as usize, j as usize)] = (right - 2.0 * c + left) / hx2
                    + (self.uy(v, i, j + 1) - 2.0 * c + self.uy(v, i, j - 1)) / hy2;
            }
        }
        out
    }

    pub fn div(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nc()];
        for j in 0..self.ny as isize {
            for i in 0..self.nx as isize {
                out[j as usize * self.nx + i as usize] = (self.ux(v, i + 1, j) - self.ux(v, i, j)) / self.hx
                    + (self.uy(v, i, j + 1) - self.uy(v, i, j)) / self.hy;
            }
        }
        out
    }

    pub fn grad(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nv()];
        for j in 0..self.ny {
            for i in 1..self.nx {
                out[self.xi(i, j)] = (q[j * self.nx + i] - q[j * self.nx + i - 1]) / self.hx;
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                out[self.yi(i, j)] = (q[j * self.nx + i] - q[(j - 1) * self.nx + i]) / self.hy;
            }
        }
        out
    }

    /// Vorticity at interior nodes, `(nx+1) x (ny+1)` storage, zero on walls.
    pub fn curl(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; (self.nx + 1) * (self.ny + 1)];
        for j in 1..self.ny as isize {
            for i in 1..self.nx as isize {
                out[j as usize * (self.nx + 1) + i as usize] = (self.uy(v, i, j) - self.uy(v, i - 1, j)) / self.hx
                    - (self.ux(v, i, j) - self.ux(v, i, j - 1)) / self.hy;
            }
        }
        out
    }

    /// Skew-symmetric `(a . grad) f`: half the central flux difference.
    pub fn conv(&self, a: &[f64], f: &[f64]) -> Vec<f64> {
        let (hx, hy) = (self.hx, self.hy);
        let s = 0.5 / (hx * hy);
        let mut out = vec![0.0; self.nv()];
        for j in 0..self.ny as isize {
            for i in 1..self.nx as isize {
                let fe = hy * 0.5 * (self.ux(a, i, j) + self.ux(a, i + 1, j));
                let fw = hy * 0.5 * (self.ux(a, i - 1, j) + self.ux(a, i, j));
                let fno = hx * 0.5 * (self.uy(a, i - 1, j + 1) + self.uy(a, i, j + 1));
                let fs = hx * 0.5 * (self.uy(a, i - 1, j) + self.uy(a, i, j));
                out[self.xi(i as usize, j as usize)] = s
                    * (fe * self.ux(f, i + 1, j) - fw * self.ux(f, i - 1, j) + fno * self.ux(f, i, j + 1)
                        - fs * self.ux(f, i, j - 1));
            }
        }
        for j in 1..self.ny as isize {
            for i in 0..self.nx as isize {
                let fno = hx * 0.5 * (self.uy(a, i, j) + self.uy(a, i, j + 1));
                let fs = hx * 0.5 * (self.uy(a, i, j - 1) + self.uy(a, i, j));
                let fe = hy * 0.5 * (self.ux(a, i + 1, j - 1) + self.ux(a, i + 1, j));
                let fw = hy * 0.5 * (self.ux(a, i, j - 1) + self.ux(a, i, j));
                out[self.yi(i as usize, j as usize)] = s
                    * (fe * self.uy(f, i + 1, j) - fw * self.uy(f, i - 1, j) + fno * self.uy(f, i, j + 1)
                        - fs * self.uy(f, i, j - 1));
            }
        }
        out
    }

    /// `w x v` for a nodal scalar `w`, through node-averaged velocities.
    pub fn rot(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        let nn = self.nx + 1;
        let interior = |i: isize, j: isize| i > 0 && i < self.nx as isize && j > 0 && j < self.ny as isize;
        let py = |i: isize, j: isize| {
            if interior(i, j) {
                w[j as usize * nn + i as usize] * 0.5 * (self.uy(v, i - 1, j) + self.uy(v, i, j))
            } else {
                0.0
            }
        };
        let px = |i: isize, j: isize| {
            if interior(i, j) {
                w[j as usize * nn + i as usize] * 0.5 * (self.ux(v, i, j - 1) + self.ux(v, i, j))
            } else {
                0.0
            }
        };
        let mut out = vec![0.0; self.nv()];
        for j in 0..self.ny as isize {
            for i in 1..self.nx as isize {
                out[self.xi(i as usize, j as usize)] = -0.5 * (py(i, j) + py(i, j + 1));
            }
        }
        for j in 1..self.ny as isize {
            for i in 0..self.nx as isize {
                out[self.yi(i as usize, j as usize)] = 0.5 * (px(i, j) + px(i + 1, j));
            }
        }
        out
    }

    /// Dense matrix of a linear map on interior faces.
    fn dense(&self, op: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
        let n = self.nv();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            let col = op(&e);
            for r in 0..n {
                m[(r, c)] = col[r];
            }
            e[c] = 0.0;
        }
        m
    }

    /// Solves `[A G 0; D 0 1; 0 1^T 0] [v; q; l] = [rhs; 0; 0]` for `v`.
    fn saddle(&self, a: &DMatrix<f64>, rhs: &[f64]) -> Vec<f64> {
        let (nv, nc) = (self.nv(), self.nc());
        let n = nv + nc + 1;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (nv, nv)).copy_from(a);
        let mut q = vec![0.0; nc];
        for c in 0..nc {
            q[c] = 1.0;
            let g = self.grad(&q);
            for r in 0..nv {
                m[(r, nv + c)] = g[r];
            }
            q[c] = 0.0;
            m[(nv + c, n - 1)] = 1.0;
            m[(n - 1, nv + c)] = 1.0;
        }
        let mut e = vec![0.0; nv];
        for c in 0..nv {
            e[c] = 1.0;
            let d = self.div(&e);
            for r in 0..nc {
                m[(nv + r, c)] = d[r];
            }
            e[c] = 0.0;
        }
        let mut b = DVector::zeros(n);
        for (i, v) in rhs.iter().enumerate() {
            b[i] = *v;
        }
        let x = m.lu().solve(&b).expect("saddle system is nonsingular");
        x.as_slice()[..nv].to_vec()
    }

    /// One coupled backward-Euler step with Picard sweeps to `tol`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        u_old: &[f64],
        h_old: &[f64],
        f: &[f64],
        nu: f64,
        mu_sigma: f64,
        k: f64,
        tol: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let w = self.curl(u_old);
        let a_mom = self.dense(|v| {
            let l = self.lap(v);
            let r = self.rot(&w, v);
            (0..v.len()).map(|i| v[i] / k - nu * l[i] + r[i]).collect()
        });
        let (mut u, mut h) = (u_old.to_vec(), h_old.to_vec());
        for _ in 0..200 {
            let b = self.conv(&h, &h);
            let rhs: Vec<f64> = (0..u.len()).map(|i| u_old[i] / k + f[i] + b[i]).collect();
            let u_new = self.saddle(&a_mom, &rhs);
            let a_ind = self.dense(|v| {
                let l = self.lap(v);
                let adv = self.conv(&u_new, v);
                let st = self.conv(v, &u_new);
                (0..v.len()).map(|i| v[i] / k - l[i] / mu_sigma + adv[i] - st[i]).collect()
            });
            let rhs: Vec<f64> = h_old.iter().map(|v| v / k).collect();
            let h_new = self.saddle(&a_ind, &rhs);
            let du = u_new.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dh = h_new.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = u_new.iter().chain(&h_new).map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            u = u_new;
            h = h_new;
            if du + dh <= tol * scale {
                break;
            }
        }
        (u, h)
    }
}
