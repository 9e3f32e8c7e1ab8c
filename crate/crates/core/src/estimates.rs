//! Energy ledger, discrete energy identity audit and the a priori bound checks,
//! with computable constants (Poincare, inf-sup) standing in for generic ones.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::fields::{alpha_norm_sq, h1_seminorm_sq, inner, l2_norm, l2_norm_sq, Field, VectorField};
use crate::grid::{Grid, Layout};
use crate::linsolve::{dot, norm2, LuFactor};
use crate::subproblems::{LerayProjector, Params};
use crate::timestepper::{State, StepForcing};

/// Running sums of per-step entries (prefix sums over steps `1..=n`).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Totals {
    pub diff_u_alpha_sq: f64,
    pub diff_h_sq: f64,
    pub diff_z_sq: f64,
    pub seminorm_u_sq: f64,
    pub seminorm_h_sq: f64,
    pub seminorm_du_sq: f64,
    pub work_f: f64,
    pub work_g: f64,
    pub norm_p_sq: f64,
    pub norm_omega_sq: f64,
    pub norm_f_sq: f64,
    pub norm_g_sq: f64,
    pub curl_f_sq: f64,
    pub identity_residual: f64,
}

impl Totals {
    fn accumulate(&self, r: &LedgerRow) -> Self {
        Self {
            diff_u_alpha_sq: self.diff_u_alpha_sq + r.diff_u_alpha_sq,
            diff_h_sq: self.diff_h_sq + r.diff_h_sq,
            diff_z_sq: self.diff_z_sq + r.diff_z_sq,
            seminorm_u_sq: self.seminorm_u_sq + r.seminorm_u_sq,
            seminorm_h_sq: self.seminorm_h_sq + r.seminorm_h_sq,
            seminorm_du_sq: self.seminorm_du_sq + r.seminorm_du_sq,
            work_f: self.work_f + r.work_f,
            work_g: self.work_g + r.work_g,
            norm_p_sq: self.norm_p_sq + r.norm_p_sq,
            norm_omega_sq: self.norm_omega_sq + r.norm_omega_sq,
            norm_f_sq: self.norm_f_sq + r.norm_f_sq,
            norm_g_sq: self.norm_g_sq + r.norm_g_sq,
            curl_f_sq: self.curl_f_sq + r.curl_f_sq,
            identity_residual: self.identity_residual + r.identity_residual,
        }
    }
}

/// Everything recorded at one time level. Difference and work entries refer
/// to the step that produced this level and are zero for the initial record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    pub norm_u_alpha_sq: f64,
    pub norm_h_sq: f64,
    pub norm_z_sq: f64,
    pub seminorm_u_sq: f64,
    pub seminorm_h_sq: f64,
    pub diff_u_alpha_sq: f64,
    pub diff_h_sq: f64,
    pub diff_z_sq: f64,
    pub seminorm_du_sq: f64,
    /// `2k (f, u)`.
    pub work_f: f64,
    /// `2k (g, h)` for a manufactured induction source; 0 otherwise.
    pub work_g: f64,
    pub norm_p_sq: f64,
    pub norm_omega_sq: f64,
    /// L2 norm of the Leray projection of `-lap h`.
    pub norm_ah: f64,
    /// `|h . grad h|_1`.
    pub grad_lorentz: f64,
    pub norm_f_sq: f64,
    pub norm_g_sq: f64,
    pub curl_f_sq: f64,
    /// `|h . grad h|^2`.
    pub lorentz_sq: f64,
    /// `|u . grad h|^2`.
    pub adv_h_sq: f64,
    /// `|h . grad u|^2`.
    pub stretch_sq: f64,
    /// `|z_old x u|^2`.
    pub cross_sq: f64,
    pub identity_residual: f64,
    /// Largest magnitude among the identity's terms.
    pub identity_scale: f64,
    pub picard_iters: usize,
    pub max_div_u: f64,
    pub max_div_h: f64,
    /// Running sup of `|z^i|^2`, `i <= n`.
    pub sup_z_sq: f64,
    pub totals: Totals,
}

#[derive(Debug, Clone)]
pub struct EnergyLedger {
    grid: Grid,
    prm: Params,
    projector: LerayProjector,
    rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    /// Ledger holding the initial record of `s0`.
    pub fn new(g: &Grid, prm: &Params, s0: &State) -> Result<Self> {
        let mut led = Self {
            grid: g.clone(),
            prm: *prm,
            projector: LerayProjector::new(g)?,
            rows: Vec::new(),
        };
        let mut row = led.level_row(s0)?;
        row.sup_z_sq = row.norm_z_sq;
        led.rows.push(row);
        Ok(led)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &Params {
        &self.prm
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn last(&self) -> &LedgerRow {
        self.rows.last().expect("ledger always holds the initial record")
    }

    /// Quantities that depend on one time level only.
    fn level_row(&self, s: &State) -> Result<LedgerRow> {
        let g = &self.grid;
        let lorentz = g.convect(&s.h, &s.h)?;
        let ah = self.projector.project(&g.laplacian(&s.h)?.scaled(-1.0))?;
        Ok(LedgerRow {
            step: s.n,
            t: s.t,
            norm_u_alpha_sq: alpha_norm_sq(g, &s.u, self.prm.alpha)?,
            norm_h_sq: l2_norm_sq(g, &s.h),
            norm_z_sq: l2_norm_sq(g, &s.z),
            seminorm_u_sq: h1_seminorm_sq(g, &s.u),
            seminorm_h_sq: h1_seminorm_sq(g, &s.h),
            norm_p_sq: l2_norm_sq(g, &s.p),
            norm_omega_sq: l2_norm_sq(g, &s.omega),
            norm_ah: l2_norm(g, &ah),
            grad_lorentz: h1_seminorm_sq(g, &lorentz).sqrt(),
            lorentz_sq: l2_norm_sq(g, &lorentz),
            max_div_u: g.div(&s.u)?.max_abs(),
            max_div_h: g.div(&s.h)?.max_abs(),
            ..LedgerRow::default()
        })
    }

    /// Appends the record of `s_new`, produced from `s_old` by one step.
    pub fn record_step(
        &mut self,
        s_old: &State,
        s_new: &State,
        frc: &StepForcing,
        picard_iters: usize,
    ) -> Result<()> {
        let g = self.grid.clone();
        let Params {
            alpha, nu, mu_sigma, k, ..
        } = self.prm;
        let prev = *self.last();
        let mut r = self.level_row(s_new)?;
        let du = s_new.u.sub(&s_old.u);
        let dh = s_new.h.sub(&s_old.h);
        r.diff_u_alpha_sq = alpha_norm_sq(&g, &du, alpha)?;
        r.diff_h_sq = l2_norm_sq(&g, &dh);
        r.diff_z_sq = l2_norm_sq(&g, &s_new.z.sub(&s_old.z));
        r.seminorm_du_sq = h1_seminorm_sq(&g, &du);
        r.work_f = 2.0 * k * inner(&g, &frc.f, &s_new.u)?;
        r.norm_f_sq = l2_norm_sq(&g, &frc.f);
        r.curl_f_sq = l2_norm_sq(&g, &g.curl_vec(&frc.f)?);
        if let Some(src) = &frc.g {
            r.work_g = 2.0 * k * inner(&g, src, &s_new.h)?;
            r.norm_g_sq = l2_norm_sq(&g, src);
        }
        r.adv_h_sq = l2_norm_sq(&g, &g.convect(&s_new.u, &s_new.h)?);
        r.stretch_sq = l2_norm_sq(&g, &g.convect(&s_new.h, &s_new.u)?);
        r.cross_sq = l2_norm_sq(&g, &g.cross(&s_old.z, &s_new.u)?);
        r.picard_iters = picard_iters;

        let u_old = alpha_norm_sq(&g, &s_old.u, alpha)?;
        let h_old = l2_norm_sq(&g, &s_old.h);
        let terms = [
            r.norm_u_alpha_sq,
            -u_old,
            r.diff_u_alpha_sq,
            2.0 * k * nu * r.seminorm_u_sq,
            r.norm_h_sq,
            -h_old,
            r.diff_h_sq,
            2.0 * k / mu_sigma * r.seminorm_h_sq,
            -r.work_f,
            -r.work_g,
        ];
        r.identity_residual = terms.iter().sum();
        r.identity_scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        r.sup_z_sq = prev.sup_z_sq.max(r.norm_z_sq);
        r.totals = prev.totals.accumulate(&r);
        self.rows.push(r);
        Ok(())
    }

    /// `C_Z = sup_n |z^n|^2` over the recorded levels.
    pub fn c_z(&self) -> f64 {
        self.last().sup_z_sq
    }

    /// Largest `|r^n| / scale^n` over all steps.
    pub fn worst_identity_ratio(&self) -> f64 {
        self.rows
            .iter()
            .skip(1)
            .map(|r| {
                if r.identity_scale == 0.0 {
                    0.0
                } else {
                    r.identity_residual.abs() / r.identity_scale
                }
            })
            .fold(0.0, f64::max)
    }

    fn tolerance(&self) -> f64 {
        10.0 * self.prm.picard_tol.max(self.prm.linsolve_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Pass,
    /// Margin smaller than ten times the solver tolerance, either sign.
    Inconclusive,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEntry {
    pub step: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub status: BoundStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    /// Which recorded quantities replace the generic constants.
    pub surrogate: String,
    pub applicable: bool,
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    fn build(
        name: &'static str,
        surrogate: String,
        led: &EnergyLedger,
        mut sides: impl FnMut(&LedgerRow) -> (f64, f64),
    ) -> Self {
        let tol = led.tolerance();
        let entries = led
            .rows
            .iter()
            .map(|r| {
                let (lhs, rhs) = sides(r);
                let margin = rhs - lhs;
                let band = tol * lhs.abs().max(rhs.abs());
                let status = if margin.abs() <= band {
                    BoundStatus::Inconclusive
                } else if margin > 0.0 {
                    BoundStatus::Pass
                } else {
                    BoundStatus::Fail
                };
                BoundEntry {
                    step: r.step,
                    lhs,
                    rhs,
                    margin,
                    status,
                }
            })
            .collect();
        Self {
            name,
            surrogate,
            applicable: true,
            entries,
        }
    }

    /// No entry violates the bound beyond the tolerance band.
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status != BoundStatus::Fail)
    }

    pub fn count(&self, status: BoundStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn min_margin(&self) -> f64 {
        self.entries.iter().map(|e| e.margin).fold(f64::INFINITY, f64::min)
    }
}

impl std::fmt::Display for BoundReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if !self.applicable {
            return write!(f, "{}: not applicable ({})", self.name, self.surrogate);
        }
        write!(
            f,
            "{}: {} ({} pass, {} inconclusive, {} fail; min margin {:.3e}) [{}]",
            self.name,
            if self.passed() { "ok" } else { "VIOLATED" },
            self.count(BoundStatus::Pass),
            self.count(BoundStatus::Inconclusive),
            self.count(BoundStatus::Fail),
            self.min_margin(),
            self.surrogate
        )
    }
}

fn energy_rhs(led: &EnergyLedger, r: &LedgerRow, p_const: f64) -> f64 {
    let Params { nu, mu_sigma, k, .. } = led.prm;
    let first = led.rows[0];
    let p2 = p_const * p_const;
    p2 / (2.0 * nu) * k * r.totals.norm_f_sq
        + mu_sigma * p2 / 2.0 * k * r.totals.norm_g_sq
        + first.norm_u_alpha_sq
        + first.norm_h_sq
}

/// `|u^n|_a^2 + sum |u^i - u^{i-1}|_a^2 <= P^2/(2 nu) sum k |f^i|^2 + |u0|_a^2 + |h0|^2`.
pub fn check_bound_u(led: &EnergyLedger, p_const: f64) -> BoundReport {
    BoundReport::build(
        "velocity energy",
        format!("discrete Poincare constant {p_const:.6} for C; forcing as step averages"),
        led,
        |r| {
            (
                r.norm_u_alpha_sq + r.totals.diff_u_alpha_sq,
                energy_rhs(led, r, p_const),
            )
        },
    )
}

/// Same right side as [`check_bound_u`], magnetic left side.
pub fn check_bound_h(led: &EnergyLedger, p_const: f64) -> BoundReport {
    BoundReport::build(
        "magnetic energy",
        format!("discrete Poincare constant {p_const:.6} for C; forcing as step averages"),
        led,
        |r| (r.norm_h_sq + r.totals.diff_h_sq, energy_rhs(led, r, p_const)),
    )
}

/// `|z^n|^2 + sum |dz|^2 <= |z0|^2 + (k nu / alpha) sum |u^i|_1^2
///   + (2 alpha k / nu) sum |curl f^i|^2 + (2 alpha / nu) t^n sup |h.grad h|_1^2`.
pub fn check_bound_z(led: &EnergyLedger) -> BoundReport {
    let Params { alpha, nu, k, .. } = led.prm;
    if alpha == 0.0 {
        return BoundReport {
            name: "vorticity",
            surrogate: "alpha = 0: z is the plain curl of u".into(),
            applicable: false,
            entries: Vec::new(),
        };
    }
    let z0 = led.rows[0].norm_z_sq;
    let mut sup_b = 0.0_f64;
    BoundReport::build(
        "vorticity",
        "running sup of |h.grad h|_1 for the generic constant".into(),
        led,
        |r| {
            if r.step > 0 {
                sup_b = sup_b.max(r.grad_lorentz * r.grad_lorentz);
            }
            let rhs = z0
                + k * nu / alpha * r.totals.seminorm_u_sq
                + 2.0 * alpha * k / nu * r.totals.curl_f_sq
                + 2.0 * alpha / nu * r.t * sup_b;
            (r.norm_z_sq + r.totals.diff_z_sq, rhs)
        },
    )
}

/// `sum k (|p^i|^2 + |omega^i|^2)` against the residual of each equation
/// measured in the discrete dual norm and divided by the inf-sup constant.
pub fn check_bound_pressure(led: &EnergyLedger, p_const: f64, beta: f64) -> BoundReport {
    let Params {
        alpha, nu, mu_sigma, k, ..
    } = led.prm;
    let p2 = p_const * p_const;
    let b2 = beta * beta;
    let (mut d_mom, mut d_ind) = (0.0_f64, 0.0_f64);
    BoundReport::build(
        "pressure",
        format!(
            "inf-sup constant {beta:.6}, Poincare constant {p_const:.6}; running sups of \
             |h.grad h|^2 + |z x u|^2 and |u.grad h|^2 + |h.grad u|^2"
        ),
        led,
        |r| {
            if r.step > 0 {
                d_mom = d_mom.max(r.lorentz_sq).max(r.cross_sq);
                d_ind = d_ind.max(r.adv_h_sq).max(r.stretch_sq);
            }
            let tt = &r.totals;
            let mom = 6.0 / b2
                * (p2 * k * tt.norm_f_sq
                    + p2 * tt.diff_u_alpha_sq_l2(alpha) / k
                    + alpha * alpha * tt.seminorm_du_sq / k
                    + nu * nu * k * tt.seminorm_u_sq
                    + 2.0 * p2 * r.t * d_mom);
            let ind = 5.0 / b2
                * (p2 * k * tt.norm_g_sq
                    + p2 * tt.diff_h_sq / k
                    + k * tt.seminorm_h_sq / (mu_sigma * mu_sigma)
                    + 2.0 * p2 * r.t * d_ind);
            (k * (tt.norm_p_sq + tt.norm_omega_sq), mom + ind)
        },
    )
}

impl Totals {
    /// `sum |du|^2` recovered from the alpha-norm and seminorm sums.
    fn diff_u_alpha_sq_l2(&self, alpha: f64) -> f64 {
        (self.diff_u_alpha_sq - alpha * self.seminorm_du_sq).max(0.0)
    }
}

/// `1 / sqrt(lambda_min)` of the Dirichlet Laplacian (cell layout) by inverse
/// power iteration with Rayleigh quotients.
pub fn poincare_constant(g: &Grid) -> Result<f64> {
    smallest_laplacian_eigenvalue(g).map(|l| 1.0 / l.sqrt())
}

pub fn smallest_laplacian_eigenvalue(g: &Grid) -> Result<f64> {
    let (lap, _) = g.scalar_laplacian_matrix(Layout::Cell);
    let a = lap.scaled(-1.0);
    let lu = LuFactor::new(&a)?;
    let mut x = vec![1.0; a.nrows()];
    let mut lambda = f64::INFINITY;
    for _ in 0..2000 {
        let nx = norm2(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let ray = dot(&x, &a.matvec(&x));
        if (ray - lambda).abs() <= 1e-14 * ray {
            return Ok(ray);
        }
        lambda = ray;
        x = lu.solve(&x);
    }
    Err(Error::NotConverged {
        iterations: 2000,
        residual: lambda,
        target: 1e-14,
    })
}

/// Smallest nonzero singular value of the divergence from `(faces, |.|_1)` to
/// `(cells, L2)`, restricted to mean-free pressures: the square root of the
/// smallest eigenvalue of `D (-lap)^-1 D^T` on mean-free vectors (Lanczos with
/// full reorthogonalization).
pub fn inf_sup_constant(g: &Grid) -> Result<f64> {
    let d = g.div_matrix();
    let dt = d.transpose();
    let lu = LuFactor::new(&g.face_laplacian_matrix().scaled(-1.0))?;
    let n = d.nrows();
    let apply = |q: &[f64]| d.matvec(&lu.solve(&dt.matvec(q)));
    let remove_mean = |v: &mut [f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= m);
    };

    let cap = (n - 1).min(400);
    // Deterministic start with components along every mode.
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5).collect();
    remove_mean(&mut v);
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis = vec![v];
    let (mut diag, mut off) = (Vec::new(), Vec::new());
    let mut last = f64::INFINITY;
    for m in 1..=cap {
        let mut w = apply(&basis[m - 1]);
        diag.push(dot(&w, &basis[m - 1]));
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            remove_mean(&mut w);
        }
        let beta = norm2(&w);
        let done = m == cap || beta <= 1e-12 * diag[0].abs();
        if m % 10 == 0 || done {
            let t = Mat::<f64>::from_fn(m, m, |i, j| {
                if i == j {
                    diag[i]
                } else if i + 1 == j {
                    off[i]
                } else if j + 1 == i {
                    off[j]
                } else {
                    0.0
                }
            });
            let eig = t
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Singular(format!("tridiagonal eigensolve: {e:?}")))?;
            let theta = eig.S().column_vector()[0];
            let tail = eig.U()[(m - 1, 0)].abs() * beta;
            if done || (tail <= 1e-7 * theta && (theta - last).abs() <= 1e-10 * theta) {
                return Ok(theta.max(0.0).sqrt());
            }
            last = theta;
        }
        off.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
    unreachable!("loop returns at the cap")
}

/// The Hilbert-space identity `2(a - b, a) = |a|^2 - |b|^2 + |a - b|^2`,
/// returned as `(lhs, rhs)` so callers can compare them.
pub fn hilbert_identity<F: Field>(g: &Grid, a: &F, b: &F) -> Result<(f64, f64)> {
    let d = a.sub(b);
    let lhs = 2.0 * inner(g, &d, a)?;
    let rhs = l2_norm_sq(g, a) - l2_norm_sq(g, b) + l2_norm_sq(g, &d);
    Ok((lhs, rhs))
}

/// `|curl v|^2 + |div v|^2` and `|v|_1^2` for a field with zero normal walls.
pub fn curl_div_split(g: &Grid, v: &VectorField) -> Result<(f64, f64)> {
    let c = l2_norm_sq(g, &g.curl_vec(v)?);
    let d = l2_norm_sq(g, &g.div(v)?);
    Ok((c + d, h1_seminorm_sq(g, v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CellField, NodeField};
    use crate::timestepper::{run, Forcing, NoSinks};
    use std::f64::consts::PI;

    #[test]
    fn poincare_matches_closed_form() {
        let g = Grid::unit(4).unwrap();
        let l = smallest_laplacian_eigenvalue(&g).unwrap();
        let want = 128.0 * (PI / 8.0).sin().powi(2);
        assert!((l - want).abs() < 1e-10 * want, "{l} vs {want}");
        assert!((want - 18.745).abs() < 1e-3);
        let g = Grid::new(40, 20, 2.0, 1.0).unwrap();
        let l = smallest_laplacian_eigenvalue(&g).unwrap();
        let h: f64 = 0.05;
        let want = 2.0 * (4.0 / (h * h)) * (PI * h / 4.0).sin().powi(2) * 0.5
            + (4.0 / (h * h)) * (PI * h / 2.0).sin().powi(2);
        assert!((l - want).abs() < 1e-9 * want, "{l} vs {want}");
    }

    #[test]
    fn inf_sup_is_positive_and_bounded() {
        let b = inf_sup_constant(&Grid::unit(8).unwrap()).unwrap();
        assert!(b > 0.2 && b <= 1.0, "{b}");
    }

    #[test]
    fn curl_div_split_is_exact_on_walls() {
        let g = Grid::new(9, 7, 1.0, 0.8).unwrap();
        let v = VectorField::sample_interior(&g, |x, y| [(3.0 * x + y).sin(), (x * y * 5.0).cos()]);
        let (cd, h1) = curl_div_split(&g, &v).unwrap();
        assert!(cd <= h1 * (1.0 + 1e-12), "{cd} {h1}");
    }

    #[test]
    fn hilbert_identity_holds() {
        let g = Grid::new(5, 6, 1.0, 1.0).unwrap();
        let a = CellField::sample(&g, |x, y| x.exp() - y);
        let b = CellField::sample(&g, |x, y| (x * y).sin());
        let (l, r) = hilbert_identity(&g, &a, &b).unwrap();
        assert!((l - r).abs() < 1e-14 * l.abs().max(1.0));
    }

    #[test]
    fn zero_run_ledger_is_zero() {
        let g = Grid::unit(6).unwrap();
        let prm = Params::new(0.2, 1.0, 0.1).unwrap();
        let z = VectorField::zeros(&g);
        let led = run(&g, &prm, &Forcing::none(), &z, &z, 2, &mut NoSinks).unwrap();
        assert_eq!(led.rows().len(), 3);
        for r in led.rows() {
            assert_eq!(r.norm_u_alpha_sq + r.norm_h_sq + r.norm_z_sq + r.identity_residual, 0.0);
        }
        let p = poincare_constant(&g).unwrap();
        assert!(check_bound_u(&led, p).passed());
        assert!(check_bound_z(&led).passed());
        assert!(check_bound_pressure(&led, p, 0.5).passed());
        let _ = NodeField::zeros(&g);
    }
}
