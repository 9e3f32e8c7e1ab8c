//! Forcing averages, initial data, the Picard-coupled step and whole runs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimates::EnergyLedger;
use crate::fields::{alpha_norm, l2_norm, CellField, Field, NodeField, VectorField};
use crate::grid::Grid;
use crate::subproblems::{LerayProjector, Params, SolveStats, StepOperators};

pub type ForceFn = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

/// Body force `f(x, y, t)`, plus an optional source in the induction equation
/// (used only by manufactured solutions).
#[derive(Clone, Default)]
pub struct Forcing {
    momentum: Option<ForceFn>,
    induction: Option<ForceFn>,
    /// Declared continuity in time; informational.
    pub smooth_in_time: bool,
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forcing")
            .field("momentum", &self.momentum.is_some())
            .field("induction", &self.induction.is_some())
            .field("smooth_in_time", &self.smooth_in_time)
            .finish()
    }
}

impl Forcing {
    pub fn none() -> Self {
        Self {
            momentum: None,
            induction: None,
            smooth_in_time: true,
        }
    }

    pub fn new(f: impl Fn(f64, f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self {
            momentum: Some(Arc::new(f)),
            induction: None,
            smooth_in_time: true,
        }
    }

    pub fn with_induction(mut self, g: impl Fn(f64, f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.induction = Some(Arc::new(g));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.momentum.is_none() && self.induction.is_none()
    }

    pub fn has_induction(&self) -> bool {
        self.induction.is_some()
    }

    /// Forcing averages over `[t_{n-1}, t_n]`.
    pub fn sample_step(&self, n: usize, k: f64, g: &Grid) -> StepForcing {
        StepForcing {
            f: match &self.momentum {
                Some(f) => time_average(f.as_ref(), n, k, g),
                None => VectorField::zeros(g),
            },
            g: self.induction.as_ref().map(|s| time_average(s.as_ref(), n, k, g)),
        }
    }
}

/// Averaged forcing of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepForcing {
    pub f: VectorField,
    pub g: Option<VectorField>,
}

impl StepForcing {
    pub fn zeros(g: &Grid) -> Self {
        Self {
            f: VectorField::zeros(g),
            g: None,
        }
    }
}

fn time_average(f: &(dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync), n: usize, k: f64, g: &Grid) -> VectorField {
    let mid = (n as f64 - 0.5) * k;
    let d = 0.5 * k * (0.6f64).sqrt();
    let nodes = [(mid - d, 5.0 / 18.0), (mid, 8.0 / 18.0), (mid + d, 5.0 / 18.0)];
    let mut acc = VectorField::zeros(g);
    for (t, w) in nodes {
        let s = VectorField::sample(g, |x, y| f(x, y, t));
        acc = acc.combine(1.0, &s, w);
    }
    acc
}

/// `(1/k) * integral of f over [t_{n-1}, t_n]`, sampled on faces (3-point Gauss).
pub fn average_forcing(frc: &Forcing, n: usize, k: f64, g: &Grid) -> Result<VectorField> {
    if n == 0 || !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "forcing average needs n >= 1 and k > 0, got n = {n}, k = {k}"
        )));
    }
    Ok(frc.sample_step(n, k, g).f)
}

/// Solution at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: VectorField,
    pub h: VectorField,
    pub z: NodeField,
    pub p: CellField,
    pub omega: CellField,
    pub t: f64,
    pub n: usize,
}

impl State {
    pub fn zeros(g: &Grid) -> Self {
        Self {
            u: VectorField::zeros(g),
            h: VectorField::zeros(g),
            z: NodeField::zeros(g),
            p: CellField::zeros(g),
            omega: CellField::zeros(g),
            t: 0.0,
            n: 0,
        }
    }
}

/// Relative divergence above which initial data are projected.
const SOLENOIDAL_TOL: f64 = 1e-10;

fn make_solenoidal(g: &Grid, v: &VectorField, proj: &mut Option<LerayProjector>) -> Result<VectorField> {
    let scale = v.max_abs() / g.hx().min(g.hy());
    let div = g.div(v)?.max_abs();
    if v.boundary_max(g) == 0.0 && div <= SOLENOIDAL_TOL * scale.max(1.0) {
        return Ok(v.clone());
    }
    if proj.is_none() {
        *proj = Some(LerayProjector::new(g)?);
    }
    let w = proj.as_ref().unwrap().project(v)?;
    let left = g.div(&w)?.max_abs();
    if left > SOLENOIDAL_TOL * scale.max(1.0) {
        return Err(Error::NotSolenoidal(left));
    }
    Ok(w)
}

/// Initial state with `z = curl(u0 - alpha lap u0)`. Data that are not
/// discretely solenoidal (or not zero on the walls) are projected first.
pub fn initialize(g: &Grid, u0: &VectorField, h0: &VectorField, prm: &Params) -> Result<State> {
    prm.validate()?;
    u0.check(g)?;
    h0.check(g)?;
    let mut proj = None;
    let u = make_solenoidal(g, u0, &mut proj)?;
    let h = make_solenoidal(g, h0, &mut proj)?;
    let w = u.combine(1.0, &g.laplacian(&u)?, -prm.alpha);
    let z = g.curl_vec(&w)?;
    Ok(State {
        u,
        h,
        z,
        p: CellField::zeros(g),
        omega: CellField::zeros(g),
        t: 0.0,
        n: 0,
    })
}

/// Diagnostics of one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub picard_iters: usize,
    pub picard_residual: f64,
    pub residual_history: Vec<f64>,
    /// Last three fixed-point residuals were nonincreasing.
    pub picard_monotone: bool,
    pub momentum: SolveStats,
    pub induction: SolveStats,
    pub transport: SolveStats,
    pub max_div_u: f64,
    pub max_div_h: f64,
}

/// Reusable stepping context: operators factored once per run.
#[derive(Debug, Clone)]
pub struct Stepper {
    ops: StepOperators,
}

impl Stepper {
    pub fn new(g: &Grid, prm: &Params) -> Result<Self> {
        Ok(Self {
            ops: StepOperators::new(g, prm)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.ops.grid()
    }

    pub fn params(&self) -> &Params {
        self.ops.params()
    }

    /// Advances with pre-averaged forcing. On failure the input is untouched.
    pub fn advance(&self, s: &State, frc: &StepForcing) -> Result<(State, StepReport)> {
        let g = self.ops.grid().clone();
        let prm = *self.ops.params();
        let step = s.n + 1;
        let wrap = |e: Error| match e {
            Error::PicardDiverged { .. } => e,
            other => Error::Step {
                step,
                source: Box::new(other),
            },
        };

        let mut u_it = s.u.clone();
        let mut h_it = s.h.clone();
        let mut history = Vec::new();
        let mut last = None;
        for _ in 0..prm.picard_max {
            let (u, p, ms) = self.ops.momentum(&s.u, &s.z, &h_it, &frc.f).map_err(wrap)?;
            let (h, w, is) = self.ops.induction(&s.h, &u, frc.g.as_ref()).map_err(wrap)?;
            let du = alpha_norm(&g, &u.sub(&u_it), prm.alpha)?;
            let dh = l2_norm(&g, &h.sub(&h_it));
            history.push(du + dh);
            u_it = u;
            h_it = h;
            last = Some((p, w, ms, is));
            if du + dh < prm.picard_tol {
                break;
            }
        }
        let res = *history.last().unwrap_or(&f64::INFINITY);
        if !(res < prm.picard_tol) {
            return Err(Error::PicardDiverged {
                step,
                iterations: history.len(),
                residual: res,
            });
        }
        let (p, omega, ms, is) = last.unwrap();
        let (z, ts) = self.ops.transport(&s.z, &u_it, &h_it, &frc.f).map_err(wrap)?;
        let tail = &history[history.len().saturating_sub(3)..];
        let report = StepReport {
            step,
            picard_iters: history.len(),
            picard_residual: res,
            picard_monotone: tail.windows(2).all(|w| w[1] <= w[0]),
            residual_history: history,
            momentum: ms,
            induction: is,
            transport: ts,
            max_div_u: g.div(&u_it)?.max_abs(),
            max_div_h: g.div(&h_it)?.max_abs(),
        };
        Ok((
            State {
                u: u_it,
                h: h_it,
                z,
                p,
                omega,
                t: step as f64 * prm.k,
                n: step,
            },
            report,
        ))
    }
}

/// One step of the scheme (builds the operators; prefer [`Stepper`] in loops).
pub fn step(g: &Grid, s: &State, frc: &Forcing, prm: &Params) -> Result<(State, StepReport)> {
    let stepper = Stepper::new(g, prm)?;
    stepper.advance(s, &frc.sample_step(s.n + 1, prm.k, g))
}

/// Receives snapshots during a run.
pub trait OutputSinks {
    fn on_state(&mut self, _state: &State) -> Result<()> {
        Ok(())
    }
    fn on_report(&mut self, _report: &StepReport) -> Result<()> {
        Ok(())
    }
}

/// Sink that discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoSinks;

impl OutputSinks for NoSinks {}

/// Initializes from `(u0, h0)` and advances `n_steps` steps.
pub fn run(
    g: &Grid,
    prm: &Params,
    frc: &Forcing,
    u0: &VectorField,
    h0: &VectorField,
    n_steps: usize,
    sinks: &mut dyn OutputSinks,
) -> Result<EnergyLedger> {
    let s0 = initialize(g, u0, h0, prm)?;
    run_from(g, prm, frc, s0, n_steps, sinks).map(|(led, _)| led)
}

/// Advances a given state `n_steps` steps; returns the ledger and final state.
pub fn run_from(
    g: &Grid,
    prm: &Params,
    frc: &Forcing,
    s0: State,
    n_steps: usize,
    sinks: &mut dyn OutputSinks,
) -> Result<(EnergyLedger, State)> {
    let stepper = Stepper::new(g, prm)?;
    let mut led = EnergyLedger::new(g, prm, &s0)?;
    sinks.on_state(&s0)?;
    let mut s = s0;
    for _ in 0..n_steps {
        let sample = frc.sample_step(s.n + 1, prm.k, g);
        let (next, report) = stepper.advance(&s, &sample)?;
        led.record_step(&s, &next, &sample, report.picard_iters)?;
        sinks.on_report(&report)?;
        sinks.on_state(&next)?;
        s = next;
    }
    Ok((led, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_average_is_exact_for_low_degree() {
        let g = Grid::unit(4).unwrap();
        let c = Forcing::new(|x, _, _| [x, 2.0]);
        let f = average_forcing(&c, 3, 0.1, &g).unwrap();
        assert_eq!(f, VectorField::sample(&g, |x, _| [x, 2.0]).combine(1.0, &VectorField::zeros(&g), 0.0));
        let lin = Forcing::new(|x, y, t| [t * x, t * y]);
        let f = average_forcing(&lin, 2, 0.1, &g).unwrap();
        let want = VectorField::sample(&g, |x, y| [0.15 * x, 0.15 * y]);
        assert!(f.sub(&want).max_abs() < 1e-15);
        let s = Forcing::new(|_, _, t| [t.sin(), 0.0]);
        let f = average_forcing(&s, 1, 0.1, &g).unwrap();
        let want = (1.0 - 0.1f64.cos()) / 0.1;
        assert!((f.x[0] - want).abs() < 1e-9);
        assert!(average_forcing(&s, 0, 0.1, &g).is_err());
    }

    #[test]
    fn initialize_builds_z_from_velocity() {
        let g = Grid::unit(16).unwrap();
        let prm = Params::new(0.3, 1.0, 0.01).unwrap();
        let psi = NodeField::sample(&g, |x, y| (x * (1.0 - x) * y * (1.0 - y)).powi(2));
        let u0 = g.curl_scal(&psi).unwrap();
        let s = initialize(&g, &u0, &VectorField::zeros(&g), &prm).unwrap();
        assert_eq!(s.u, u0);
        let lap = g.laplacian(&u0).unwrap();
        let manual = g.curl_vec(&u0.combine(1.0, &lap, -0.3)).unwrap();
        assert_eq!(s.z, manual);
        let z0 = initialize(&g, &u0, &VectorField::zeros(&g), &Params::new(0.0, 1.0, 0.01).unwrap())
            .unwrap()
            .z;
        assert_eq!(z0, g.curl_vec(&u0).unwrap());
    }

    #[test]
    fn initialize_projects_rough_data() {
        let g = Grid::unit(12).unwrap();
        let prm = Params::new(0.1, 1.0, 0.01).unwrap();
        let u0 = VectorField::sample(&g, |x, y| [x + y, x * y]);
        let s = initialize(&g, &u0, &VectorField::zeros(&g), &prm).unwrap();
        assert!(g.div(&s.u).unwrap().max_abs() < 1e-10);
        assert_eq!(s.u.boundary_max(&g), 0.0);
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let g = Grid::unit(6).unwrap();
        let prm = Params::new(0.5, 1.0, 0.1).unwrap();
        let mut s = State::zeros(&g);
        for _ in 0..3 {
            let (next, rep) = step(&g, &s, &Forcing::none(), &prm).unwrap();
            assert_eq!(next.u.max_abs() + next.h.max_abs() + next.z.max_abs(), 0.0);
            assert!(rep.picard_iters >= 1);
            s = next;
        }
        assert_eq!(s.n, 3);
        assert!((s.t - 0.3).abs() < 1e-15);
    }
    fn coupled_start(g: &Grid, prm: &Params) -> State {
        let psi = NodeField::sample(g, |x, y| (x * (1.0 - x) * y * (1.0 - y)).powi(2) * 40.0);
        let u0 = g.curl_scal(&psi).unwrap();
        let h0 = g.curl_scal(&NodeField::sample(g, |x, y| (x * (1.0 - x) * y * (1.0 - y) * x).powi(2) * 60.0)).unwrap();
        initialize(g, &u0, &h0, prm).unwrap()
    }

    #[test]
    fn picard_residuals_contract() {
        let g = Grid::unit(10).unwrap();
        let prm = Params::new(0.1, 0.1, 0.05).unwrap();
        let s0 = coupled_start(&g, &prm);
        let (_, rep) = step(&g, &s0, &Forcing::none(), &prm).unwrap();
        assert!(rep.picard_iters >= 3, "{:?}", rep.residual_history);
        assert!(rep.picard_monotone);
        assert!(rep.residual_history.windows(2).all(|w| w[1] < w[0]));
        assert!(rep.picard_residual < prm.picard_tol);
        assert!(rep.max_div_u < 1e-10 && rep.max_div_h < 1e-10);
    }

    #[test]
    fn picard_cap_is_an_error() {
        let g = Grid::unit(8).unwrap();
        let prm = Params {
            picard_max: 1,
            ..Params::new(0.1, 0.1, 0.05).unwrap()
        };
        let s0 = coupled_start(&g, &prm);
        match step(&g, &s0, &Forcing::none(), &prm) {
            Err(Error::PicardDiverged { step, iterations, .. }) => assert_eq!((step, iterations), (1, 1)),
            other => panic!("{other:?}"),
        }
    }
}
