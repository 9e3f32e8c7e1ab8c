//! The three implicit solves of one time step (momentum, induction, vorticity
//! transport), the steady transport problem, and the discrete Leray projector.

use crate::error::{Error, Result};
use crate::fields::{CellField, Field, NodeField, VectorField};
use crate::grid::{Grid, Layout};
use crate::linsolve::{
    gmres, norm2, CsrMatrix, LuFactor, Method, SaddleSolution, SaddleSolver, SolverConfig,
};

/// Physical constants and numerical controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub alpha: f64,
    pub nu: f64,
    pub mu_sigma: f64,
    pub k: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Relative residual target for every linear solve.
    pub linsolve_tol: f64,
}

impl Params {
    pub fn new(alpha: f64, nu: f64, k: f64) -> Result<Self> {
        let p = Self {
            alpha,
            nu,
            mu_sigma: 1.0,
            k,
            picard_tol: 1e-9,
            picard_max: 50,
            linsolve_tol: 1e-12,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_mu_sigma(mut self, mu_sigma: f64) -> Result<Self> {
        self.mu_sigma = mu_sigma;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must satisfy alpha >= 0");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu must satisfy nu > 0");
        }
        if !(self.mu_sigma > 0.0 && self.mu_sigma.is_finite()) {
            return bad("mu_sigma must satisfy mu_sigma > 0");
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad("time step must satisfy k > 0");
        }
        if !(self.picard_tol > 0.0) || self.picard_max == 0 {
            return bad("picard_tol must be positive and picard_max at least 1");
        }
        if !(self.linsolve_tol > 0.0 && self.linsolve_tol < 1.0) {
            return bad("linsolve_tol must lie in (0, 1)");
        }
        Ok(())
    }

    pub(crate) fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            rel_tol: self.linsolve_tol,
            abs_tol: 1e-15,
            max_iter: None,
            method: Method::NonsymKrylov,
        }
    }
}

/// Linear-solve diagnostics of one subproblem.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub target: f64,
    /// `max |div|` of the returned field (0 for the transport solve).
    pub max_div: f64,
}

impl SolveStats {
    fn from_saddle(s: &SaddleSolution) -> Self {
        Self {
            iterations: s.iterations,
            residual: s.residual,
            target: s.target,
            max_div: s.constraint,
        }
    }
}

fn check_saddle(s: &SaddleSolution) -> Result<()> {
    if s.converged {
        Ok(())
    } else {
        Err(Error::NotConverged {
            iterations: s.iterations,
            residual: s.residual,
            target: s.target,
        })
    }
}

/// Everything about one time step that does not change between steps: the
/// grid operators and the factored symmetric parts of both saddle systems.
#[derive(Debug, Clone)]
pub struct StepOperators {
    grid: Grid,
    prm: Params,
    lap: CsrMatrix,
    momentum: SaddleSolver,
    induction: SaddleSolver,
}

impl StepOperators {
    pub fn new(g: &Grid, prm: &Params) -> Result<Self> {
        prm.validate()?;
        let lap = g.face_laplacian_matrix();
        let div = g.div_matrix();
        let id = CsrMatrix::identity(g.n_free_faces());
        let a_mom = id.add_scaled(1.0, &lap, -(prm.alpha + prm.nu * prm.k));
        let a_ind = id.add_scaled(1.0, &lap, -prm.k / prm.mu_sigma);
        Ok(Self {
            grid: g.clone(),
            prm: *prm,
            momentum: SaddleSolver::new(&a_mom, &div)?,
            induction: SaddleSolver::new(&a_ind, &div)?,
            lap,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &Params {
        &self.prm
    }

    /// Momentum step with lagged `z` and the current magnetic iterate.
    /// Returns the velocity, the total pressure (mean free) and diagnostics.
    pub fn momentum(
        &self,
        u_old: &VectorField,
        z_lag: &NodeField,
        h_iter: &VectorField,
        f_avg: &VectorField,
    ) -> Result<(VectorField, CellField, SolveStats)> {
        let g = &self.grid;
        let Params { alpha, k, .. } = self.prm;
        let lorentz = g.convect(h_iter, h_iter)?;
        let un = u_old.pack_free(g);
        let lap_un = self.lap.matvec(&un);
        let fp = f_avg.pack_free(g);
        let lp = lorentz.pack_free(g);
        let rhs: Vec<f64> = (0..un.len())
            .map(|i| un[i] - alpha * lap_un[i] + k * (fp[i] + lp[i]))
            .collect();
        z_lag.check(g)?;
        let extra = if z_lag.max_abs() == 0.0 {
            None
        } else {
            Some(g.cross_matrix(z_lag).scaled(k))
        };
        let sol = self
            .momentum
            .solve(extra.as_ref(), &rhs, &self.prm.solver_config())?;
        check_saddle(&sol)?;
        Ok(self.unpack(&sol))
    }

    /// Induction step with the current velocity iterate and an optional
    /// divergence-free source `g_avg` (zero in the physical model).
    pub fn induction(
        &self,
        h_old: &VectorField,
        u_iter: &VectorField,
        g_avg: Option<&VectorField>,
    ) -> Result<(VectorField, CellField, SolveStats)> {
        let g = &self.grid;
        let k = self.prm.k;
        let mut rhs = h_old.pack_free(g);
        if let Some(src) = g_avg {
            rhs.iter_mut()
                .zip(src.pack_free(g))
                .for_each(|(r, s)| *r += k * s);
        }
        let extra = if u_iter.max_abs() == 0.0 {
            None
        } else {
            let adv = g.face_convect_matrix(u_iter);
            let stretch = g.face_convect_velocity_matrix(u_iter);
            Some(adv.add_scaled(k, &stretch, -k))
        };
        let sol = self
            .induction
            .solve(extra.as_ref(), &rhs, &self.prm.solver_config())?;
        check_saddle(&sol)?;
        Ok(self.unpack(&sol))
    }

    fn unpack(&self, sol: &SaddleSolution) -> (VectorField, CellField, SolveStats) {
        let g = &self.grid;
        let v = VectorField::from_free(g, &sol.x);
        // The block uses div^T = -grad, and rows were scaled by k.
        let s = -1.0 / self.prm.k;
        let q = CellField {
            values: sol.q.iter().map(|x| s * x).collect(),
        };
        (v, q, SolveStats::from_saddle(sol))
    }

    /// Vorticity transport:
    /// `(alpha/k + nu) z + alpha convect(u, z) = (alpha/k) z_old + nu curl u
    ///   + alpha curl f + alpha curl convect(h, h)`.
    pub fn transport(
        &self,
        z_old: &NodeField,
        u_new: &VectorField,
        h_new: &VectorField,
        f_avg: &VectorField,
    ) -> Result<(NodeField, SolveStats)> {
        let g = &self.grid;
        let Params { alpha, nu, k, .. } = self.prm;
        let curl_u = g.curl_vec(u_new)?;
        if alpha == 0.0 {
            return Ok((curl_u, SolveStats::default()));
        }
        let curl_f = g.curl_vec(f_avg)?;
        let curl_b = g.curl_vec(&g.convect(h_new, h_new)?)?;
        let d = alpha + nu * k;
        let rhs: Vec<f64> = (0..z_old.values.len())
            .map(|i| {
                (alpha * z_old.values[i]
                    + nu * k * curl_u.values[i]
                    + alpha * k * (curl_f.values[i] + curl_b.values[i]))
                    / d
            })
            .collect();
        let (values, stats) = identity_plus_skew(g, u_new, alpha * k / d, &rhs, &self.prm.solver_config())?;
        Ok((NodeField { values }, stats))
    }
}

/// Solves `(I + gamma convect(u, .)) z = rhs` on nodes. Krylov first (cheap
/// when `gamma |u| / h` is small), sparse LU when that stalls or when asked.
fn identity_plus_skew(
    g: &Grid,
    u: &VectorField,
    gamma: f64,
    rhs: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = g.len(Layout::Node);
    let m = CsrMatrix::identity(n).add_scaled(1.0, &g.node_convect_matrix(u), gamma);
    let target = cfg.target(norm2(rhs));
    let apply = |x: &[f64], y: &mut [f64]| m.matvec_into(x, y);
    let (mut x, mut iterations) = if cfg.method == Method::DirectLu {
        (LuFactor::new(&m)?.solve(rhs), 1)
    } else {
        gmres(&apply, None, rhs, None, target, cfg.max_iter.unwrap_or(120), 60)
    };
    let resid = |x: &[f64]| {
        let ax = m.matvec(x);
        norm2(&ax.iter().zip(rhs).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    let mut r = resid(&x);
    if r > target && cfg.method != Method::DirectLu {
        x = LuFactor::new(&m)?.solve(rhs);
        iterations += 1;
        r = resid(&x);
    }
    if r > target {
        return Err(Error::NotConverged {
            iterations,
            residual: r,
            target,
        });
    }
    Ok((
        x,
        SolveStats {
            iterations,
            residual: r,
            target,
            max_div: 0.0,
        },
    ))
}

pub fn solve_momentum(
    g: &Grid,
    u_old: &VectorField,
    z_lag: &NodeField,
    h_iter: &VectorField,
    f_avg: &VectorField,
    prm: &Params,
) -> Result<(VectorField, CellField)> {
    let (u, p, _) = StepOperators::new(g, prm)?.momentum(u_old, z_lag, h_iter, f_avg)?;
    Ok((u, p))
}

pub fn solve_induction(
    g: &Grid,
    h_old: &VectorField,
    u_iter: &VectorField,
    prm: &Params,
) -> Result<(VectorField, CellField)> {
    let (h, w, _) = StepOperators::new(g, prm)?.induction(h_old, u_iter, None)?;
    Ok((h, w))
}

pub fn solve_transport(
    g: &Grid,
    z_old: &NodeField,
    u_new: &VectorField,
    h_new: &VectorField,
    f_avg: &VectorField,
    prm: &Params,
) -> Result<NodeField> {
    let (z, _) = StepOperators::new(g, prm)?.transport(z_old, u_new, h_new, f_avg)?;
    Ok(z)
}

/// Steady transport `z + gamma convect(u, z) = f`.
pub fn steady_transport(
    g: &Grid,
    u: &VectorField,
    gamma: f64,
    f: &NodeField,
    cfg: &SolverConfig,
) -> Result<NodeField> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    u.check(g)?;
    f.check(g)?;
    if u.max_abs() == 0.0 {
        return Ok(f.clone());
    }
    let (values, _) = identity_plus_skew(g, u, gamma, &f.values, cfg)?;
    Ok(NodeField { values })
}

/// Discrete Leray projection: `v - grad phi` with `div grad phi = div v`.
#[derive(Debug, Clone)]
pub struct LerayProjector {
    grid: Grid,
    poisson: LuFactor,
}

impl LerayProjector {
    pub fn new(g: &Grid) -> Result<Self> {
        let full = g.cell_poisson_matrix();
        let n = full.nrows();
        // Pin the first cell to remove the constant nullspace.
        let t: Vec<_> = full
            .triplets()
            .filter(|&(r, c, _)| r > 0 && c > 0)
            .map(|(r, c, v)| (r - 1, c - 1, v))
            .collect();
        let pinned = CsrMatrix::from_triplets(n - 1, n - 1, &t);
        Ok(Self {
            grid: g.clone(),
            poisson: LuFactor::new(&pinned)?,
        })
    }

    /// Projects the interior part of `v`; boundary normal faces are dropped.
    pub fn project(&self, v: &VectorField) -> Result<VectorField> {
        let g = &self.grid;
        let mut w = v.clone();
        w.zero_boundary(g);
        let d = g.div(&w)?;
        let mut phi = vec![0.0];
        phi.extend(self.poisson.solve(&d.values[1..]));
        let gp = g.grad(&CellField { values: phi })?;
        Ok(w.sub(&gp))
    }
}
