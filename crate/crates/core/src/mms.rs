//! Manufactured solutions on the unit square and time/space convergence studies.
//!
//! Both stream functions are `A * tau(t) * q(x) q(y)` with `q(s) = s^2 (1 - s)^2`,
//! so every derivative the forcing needs is a polynomial evaluated in closed form.

use std::fmt::Write as _;
use std::path::Path;

use crate::cli::RunConfig;
use crate::error::{Error, Result};
use crate::fields::{alpha_norm, l2_norm, Field, NodeField, VectorField};
use crate::grid::Grid;
use crate::subproblems::Params;
use crate::timestepper::{initialize, run_from, Forcing, NoSinks, State};

/// `d^n/ds^n [s^2 (1 - s)^2]`.
fn q(n: usize, s: f64) -> f64 {
    match n {
        0 => s * s * (1.0 - s) * (1.0 - s),
        1 => 2.0 * s - 6.0 * s * s + 4.0 * s * s * s,
        2 => 2.0 - 12.0 * s + 12.0 * s * s,
        3 => -12.0 + 24.0 * s,
        4 => 24.0,
        _ => 0.0,
    }
}

/// `d^a/dx^a d^b/dy^b [q(x) q(y)]`.
fn bump(a: usize, b: usize, x: f64, y: f64) -> f64 {
    q(a, x) * q(b, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Sin,
    Cos,
}

impl Phase {
    fn value(self, t: f64) -> f64 {
        match self {
            Phase::Sin => t.sin(),
            Phase::Cos => t.cos(),
        }
    }

    fn rate(self, t: f64) -> f64 {
        match self {
            Phase::Sin => t.cos(),
            Phase::Cos => -t.sin(),
        }
    }
}

/// One solenoidal field `curl psi` with `psi = amp * tau(t) * q(x) q(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Stream {
    amp: f64,
    phase: Phase,
}

/// Spatial parts, without the `amp * tau(t)` factor.
impl Stream {
    fn scale(&self, t: f64) -> f64 {
        self.amp * self.phase.value(t)
    }

    fn rate(&self, t: f64) -> f64 {
        self.amp * self.phase.rate(t)
    }

    fn vel(x: f64, y: f64) -> [f64; 2] {
        [bump(0, 1, x, y), -bump(1, 0, x, y)]
    }

    fn lap_vel(x: f64, y: f64) -> [f64; 2] {
        [
            bump(2, 1, x, y) + bump(0, 3, x, y),
            -(bump(3, 0, x, y) + bump(1, 2, x, y)),
        ]
    }

    /// Velocity gradient `[[dx vx, dy vx], [dx vy, dy vy]]`.
    fn grad_vel(x: f64, y: f64) -> [[f64; 2]; 2] {
        [
            [bump(1, 1, x, y), bump(0, 2, x, y)],
            [-bump(2, 0, x, y), -bump(1, 1, x, y)],
        ]
    }

    /// `curl v = -lap psi`.
    fn curl(x: f64, y: f64) -> f64 {
        -(bump(2, 0, x, y) + bump(0, 2, x, y))
    }

    fn bilap(x: f64, y: f64) -> f64 {
        bump(4, 0, x, y) + 2.0 * bump(2, 2, x, y) + bump(0, 4, x, y)
    }
}

/// `(a . grad) b` for two stream-function fields at one point.
fn advect(a: [f64; 2], grad_b: [[f64; 2]; 2]) -> [f64; 2] {
    [
        a[0] * grad_b[0][0] + a[1] * grad_b[0][1],
        a[0] * grad_b[1][0] + a[1] * grad_b[1][1],
    ]
}

/// Closed-form velocity `A_u sin t curl(qq)`, magnetic field
/// `A_h cos t curl(qq)` and total pressure `A_u sin t cos(pi x) cos(pi y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticCase {
    u: Stream,
    h: Stream,
}

pub fn polynomial_case(amplitude_u: f64, amplitude_h: f64) -> AnalyticCase {
    AnalyticCase {
        u: Stream {
            amp: amplitude_u,
            phase: Phase::Sin,
        },
        h: Stream {
            amp: amplitude_h,
            phase: Phase::Cos,
        },
    }
}

impl AnalyticCase {
    pub fn amplitude_u(&self) -> f64 {
        self.u.amp
    }

    pub fn amplitude_h(&self) -> f64 {
        self.h.amp
    }

    pub fn stream_u(&self, x: f64, y: f64, t: f64) -> f64 {
        self.u.scale(t) * bump(0, 0, x, y)
    }

    pub fn stream_h(&self, x: f64, y: f64, t: f64) -> f64 {
        self.h.scale(t) * bump(0, 0, x, y)
    }

    pub fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let s = self.u.scale(t);
        Stream::vel(x, y).map(|v| s * v)
    }

    pub fn magnetic(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let s = self.h.scale(t);
        Stream::vel(x, y).map(|v| s * v)
    }

    /// `curl(u - alpha lap u)`.
    pub fn vorticity(&self, x: f64, y: f64, t: f64, alpha: f64) -> f64 {
        self.u.scale(t) * (Stream::curl(x, y) + alpha * Stream::bilap(x, y))
    }

    pub fn pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        let pi = std::f64::consts::PI;
        self.u.scale(t) * (pi * x).cos() * (pi * y).cos()
    }

    fn pressure_grad(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let pi = std::f64::consts::PI;
        let s = self.u.scale(t);
        [
            -s * pi * (pi * x).sin() * (pi * y).cos(),
            -s * pi * (pi * x).cos() * (pi * y).sin(),
        ]
    }

    /// Momentum forcing `d/dt(u - alpha lap u) - nu lap u + z x u + grad P - (h . grad) h`.
    pub fn momentum_forcing(&self, x: f64, y: f64, t: f64, alpha: f64, nu: f64) -> [f64; 2] {
        let (su, du, sh) = (self.u.scale(t), self.u.rate(t), self.h.scale(t));
        let v = Stream::vel(x, y);
        let lv = Stream::lap_vel(x, y);
        let z = self.vorticity(x, y, t, alpha);
        let u = [su * v[0], su * v[1]];
        let hh = advect(v, Stream::grad_vel(x, y));
        let gp = self.pressure_grad(x, y, t);
        [0, 1].map(|c| {
            let cross = if c == 0 { -z * u[1] } else { z * u[0] };
            du * (v[c] - alpha * lv[c]) - nu * su * lv[c] + cross + gp[c] - sh * sh * hh[c]
        })
    }

    /// Induction residual `dh/dt - lap h / mu_sigma + (u . grad) h - (h . grad) u`,
    /// divergence free because each term is the curl of something.
    pub fn induction_source(&self, x: f64, y: f64, t: f64, mu_sigma: f64) -> [f64; 2] {
        let (su, sh, dh) = (self.u.scale(t), self.h.scale(t), self.h.rate(t));
        let v = Stream::vel(x, y);
        let lv = Stream::lap_vel(x, y);
        let gv = Stream::grad_vel(x, y);
        let uh = advect(v.map(|w| su * w), gv).map(|w| sh * w);
        let hu = advect(v.map(|w| sh * w), gv).map(|w| su * w);
        [0, 1].map(|c| dh * v[c] - sh * lv[c] / mu_sigma + uh[c] - hu[c])
    }

    /// Discrete velocity `curl_scal` of the sampled stream function: exactly
    /// solenoidal with zero wall faces.
    pub fn sample_u(&self, g: &Grid, t: f64) -> Result<VectorField> {
        g.curl_scal(&NodeField::sample(g, |x, y| self.stream_u(x, y, t)))
    }

    pub fn sample_h(&self, g: &Grid, t: f64) -> Result<VectorField> {
        g.curl_scal(&NodeField::sample(g, |x, y| self.stream_h(x, y, t)))
    }

    pub fn description(&self) -> String {
        format!(
            "polynomial stream functions, amplitude_u = {}, amplitude_h = {}; \
             the induction residual is divergence free and enters as a secondary source, \
             so the exact magnetic multiplier is zero",
            self.u.amp, self.h.amp
        )
    }
}

/// Forcing making the analytic fields an exact solution for `prm`.
pub fn forcing_for(case: &AnalyticCase, prm: &Params) -> Forcing {
    let (alpha, nu, ms) = (prm.alpha, prm.nu, prm.mu_sigma);
    let c = *case;
    let mut frc = Forcing::new(move |x, y, t| c.momentum_forcing(x, y, t, alpha, nu));
    if c.h.amp != 0.0 {
        frc = frc.with_induction(move |x, y, t| c.induction_source(x, y, t, ms));
    }
    frc
}

/// `(|u - u_exact|_alpha, |h - h_exact|)` at the state's time.
pub fn errors(case: &AnalyticCase, g: &Grid, s: &State, alpha: f64) -> Result<(f64, f64)> {
    let eu = alpha_norm(g, &s.u.sub(&case.sample_u(g, s.t)?), alpha)?;
    let eh = l2_norm(g, &s.h.sub(&case.sample_h(g, s.t)?));
    Ok((eu, eh))
}

/// Runs the manufactured case for `cfg` and returns the final state.
pub fn run_case(case: &AnalyticCase, cfg: &RunConfig) -> Result<(Grid, State)> {
    let g = cfg.grid()?;
    if (g.lx() - 1.0).abs() > 1e-12 || (g.ly() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "the manufactured case lives on the unit square (lx = ly = 1)".into(),
        ));
    }
    let prm = cfg.params()?;
    let s0 = initialize(&g, &case.sample_u(&g, 0.0)?, &case.sample_h(&g, 0.0)?, &prm)?;
    let (_, s) = run_from(&g, &prm, &forcing_for(case, &prm), s0, cfg.n_steps()?, &mut NoSinks)?;
    Ok((g, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Time,
    Space,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Axis::Time),
            "space" => Ok(Axis::Space),
            _ => Err(Error::InvalidParameter(format!("axis must be time or space, got {s:?}"))),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Time => "time",
            Axis::Space => "space",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EocRow {
    pub level: usize,
    pub h: f64,
    pub k: f64,
    pub err_u_alpha: f64,
    pub err_h: f64,
    /// Observed order against the previous level; `None` on the first level
    /// or when an error sits at the round-off floor.
    pub eoc_u: Option<f64>,
    pub eoc_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EocTable {
    pub axis: Axis,
    pub rows: Vec<EocRow>,
    /// Set when a level failed; `rows` then holds the completed levels.
    pub aborted: Option<String>,
}

/// Errors below this are treated as exact.
const ERROR_FLOOR: f64 = 1e-13;

fn order(prev: f64, cur: f64) -> Option<f64> {
    (prev > ERROR_FLOOR && cur > ERROR_FLOOR).then(|| (prev / cur).log2())
}

impl EocTable {
    fn push(&mut self, h: f64, k: f64, eu: f64, eh: f64) {
        let prev = self.rows.last().copied();
        self.rows.push(EocRow {
            level: self.rows.len(),
            h,
            k,
            err_u_alpha: eu,
            err_h: eh,
            eoc_u: prev.and_then(|p| order(p.err_u_alpha, eu)),
            eoc_h: prev.and_then(|p| order(p.err_h, eh)),
        });
    }

    /// Every determinate order lies in `[lo, hi]`, and there is at least one.
    pub fn in_window(&self, lo: f64, hi: f64) -> bool {
        let orders: Vec<f64> = self.rows.iter().flat_map(|r| [r.eoc_u, r.eoc_h]).flatten().collect();
        self.aborted.is_none() && !orders.is_empty() && orders.iter().all(|e| (lo..=hi).contains(e))
    }

    /// Errors decrease level to level in both columns, allowing one
    /// non-decreasing pair in each.
    pub fn monotone(&self) -> bool {
        let ok = |col: fn(&EocRow) -> f64| {
            let v: Vec<f64> = self.rows.iter().map(col).filter(|e| *e > ERROR_FLOOR).collect();
            let ups = v.windows(2).filter(|w| w[1] >= w[0]).count();
            v.len() < 2 || (ups <= 1 && v.last() < v.first())
        };
        ok(|r| r.err_u_alpha) && ok(|r| r.err_h)
    }

    /// Errors strictly decrease at every level.
    pub fn strictly_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].err_u_alpha < w[0].err_u_alpha && w[1].err_h < w[0].err_h)
    }

    pub fn to_csv(&self) -> String {
        let fmt = |e: Option<f64>| e.map_or("indeterminate".to_string(), |v| format!("{v:.16e}"));
        let mut s = String::from("level,h,k,err_u_alpha,err_h,eoc_u,eoc_h\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                r.level,
                r.h,
                r.k,
                r.err_u_alpha,
                r.err_h,
                fmt(r.eoc_u),
                fmt(r.eoc_h)
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Refines `base` `levels - 1` times along `axis` (halving `dt`, or doubling
/// `nx` and `ny`) and tabulates the final-time errors of the manufactured case.
pub fn convergence_study(axis: Axis, levels: usize, base: &RunConfig) -> Result<EocTable> {
    if levels < 3 {
        return Err(Error::InvalidParameter(format!("a study needs at least 3 levels, got {levels}")));
    }
    let case = polynomial_case(base.amplitude_u, base.amplitude_h);
    let mut table = EocTable {
        axis,
        rows: Vec::new(),
        aborted: None,
    };
    for level in 0..levels {
        let mut cfg = base.clone();
        let f = 1usize << level;
        match axis {
            Axis::Time => cfg.dt = base.dt / f as f64,
            Axis::Space => {
                cfg.nx = base.nx * f;
                cfg.ny = base.ny * f;
            }
        }
        let outcome = run_case(&case, &cfg).and_then(|(g, s)| {
            let (eu, eh) = errors(&case, &g, &s, cfg.alpha)?;
            Ok((g.hx().max(g.hy()), eu, eh))
        });
        match outcome {
            Ok((h, eu, eh)) => table.push(h, cfg.dt, eu, eh),
            Err(e) => {
                table.aborted = Some(format!("level {level}: {e}"));
                break;
            }
        }
    }
    Ok(table)
}
