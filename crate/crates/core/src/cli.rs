//! Batch front end: configuration files, runs with CSV ledger and field
//! dumps, the verification suite and convergence studies.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimates::{
    check_bound_h, check_bound_pressure, check_bound_u, check_bound_z, inf_sup_constant, poincare_constant,
    smallest_laplacian_eigenvalue, BoundReport, EnergyLedger, LedgerRow,
};
use crate::fields::{alpha_norm, inner, l2_norm, CellField, Field, NodeField, VectorField};
use crate::grid::{Grid, Layout};
use crate::mms::{convergence_study, errors, forcing_for, polynomial_case, Axis, EocTable};
use crate::subproblems::{steady_transport, Params};
use crate::linsolve::SolverConfig;
use crate::timestepper::{initialize, run_from, Forcing, OutputSinks, State};

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "G2MHD_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Manufactured solution with its forcing.
    Mms,
    /// Unforced decay from seeded random solenoidal data.
    Decay,
    /// Unforced run from a field dump (`initial_fields`), or from rest.
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: Case,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub alpha: f64,
    pub nu: f64,
    pub mu_sigma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub linsolve_tol: f64,
    pub output_dir: PathBuf,
    /// Field-dump cadence in steps; 0 disables dumps.
    pub dump_every: usize,
    pub seed: u64,
    pub amplitude_u: f64,
    pub amplitude_h: f64,
    /// Alpha-norm of the decay case's initial velocity.
    pub u0_norm: f64,
    /// L2 norm of the decay case's initial magnetic field.
    pub h0_norm: f64,
    pub initial_fields: Option<PathBuf>,
    /// Number of levels in a convergence study.
    pub levels: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: Case::Decay,
            nx: 32,
            ny: 32,
            lx: 1.0,
            ly: 1.0,
            alpha: 0.1,
            nu: 1.0,
            mu_sigma: 1.0,
            dt: 0.01,
            t_final: 0.1,
            picard_tol: 1e-9,
            picard_max: 50,
            linsolve_tol: 1e-12,
            output_dir: PathBuf::from("output"),
            dump_every: 0,
            seed: 0,
            amplitude_u: 1.0,
            amplitude_h: 1.0,
            u0_norm: 1.0,
            h0_norm: 1.0,
            initial_fields: None,
            levels: 4,
        }
    }
}

const REQUIRED: [&str; 7] = ["case", "nx", "ny", "dt", "t_final", "alpha", "nu"];

impl RunConfig {
    /// Offending key and message for the first violated invariant.
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let fail = |key: &'static str, msg: &str| Err((key, msg.to_string()));
        if self.nx < 2 {
            return fail("nx", "nx must be at least 2");
        }
        if self.ny < 2 {
            return fail("ny", "ny must be at least 2");
        }
        if !(self.lx > 0.0 && self.lx.is_finite()) {
            return fail("lx", "lx must be positive");
        }
        if !(self.ly > 0.0 && self.ly.is_finite()) {
            return fail("ly", "ly must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha", "alpha must satisfy alpha >= 0");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return fail("nu", "nu must satisfy nu > 0");
        }
        if !(self.mu_sigma > 0.0 && self.mu_sigma.is_finite()) {
            return fail("mu_sigma", "mu_sigma must satisfy mu_sigma > 0");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail("dt", "dt must be positive");
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return fail("t_final", "t_final must be positive");
        }
        let n = (self.t_final / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return fail(
                "t_final",
                &format!(
                    "t_final / dt = {} is not an integer number of steps",
                    self.t_final / self.dt
                ),
            );
        }
        if !(self.picard_tol > 0.0) {
            return fail("picard_tol", "picard_tol must be positive");
        }
        if self.picard_max == 0 {
            return fail("picard_max", "picard_max must be at least 1");
        }
        if !(self.linsolve_tol > 0.0 && self.linsolve_tol < 1.0) {
            return fail("linsolve_tol", "linsolve_tol must lie in (0, 1)");
        }
        if self.case == Case::Mms && (self.lx != 1.0 || self.ly != 1.0) {
            return fail("case", "the mms case requires lx = ly = 1");
        }
        if !(self.u0_norm >= 0.0 && self.h0_norm >= 0.0) {
            return fail("u0_norm", "initial norms must be nonnegative");
        }
        if self.levels < 3 {
            return fail("levels", "levels must be at least 3");
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(_, msg)| Error::InvalidParameter(msg))
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn params(&self) -> Result<Params> {
        let p = Params {
            alpha: self.alpha,
            nu: self.nu,
            mu_sigma: self.mu_sigma,
            k: self.dt,
            picard_tol: self.picard_tol,
            picard_max: self.picard_max,
            linsolve_tol: self.linsolve_tol,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_steps(&self) -> Result<usize> {
        self.validate()?;
        Ok((self.t_final / self.dt).round() as usize)
    }

    /// `output_dir`, unless the environment overrides it.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: HashMap<&'static str, usize> = HashMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Config { line, msg };
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {body:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: malformed number {v:?}")));
        let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: malformed integer {v:?}")));
        let known: &'static str = match key {
            "case" => {
                cfg.case = match value {
                    "mms" => Case::Mms,
                    "decay" => Case::Decay,
                    "custom" => Case::Custom,
                    _ => return Err(err(format!("case must be mms, decay or custom, got {value:?}"))),
                };
                "case"
            }
            "nx" => {
                cfg.nx = int(value)?;
                "nx"
            }
            "ny" => {
                cfg.ny = int(value)?;
                "ny"
            }
            "lx" => {
                cfg.lx = num(value)?;
                "lx"
            }
            "ly" => {
                cfg.ly = num(value)?;
                "ly"
            }
            "alpha" => {
                cfg.alpha = num(value)?;
                "alpha"
            }
            "nu" => {
                cfg.nu = num(value)?;
                "nu"
            }
            "mu_sigma" => {
                cfg.mu_sigma = num(value)?;
                "mu_sigma"
            }
            "dt" => {
                cfg.dt = num(value)?;
                "dt"
            }
            "t_final" => {
                cfg.t_final = num(value)?;
                "t_final"
            }
            "picard_tol" => {
                cfg.picard_tol = num(value)?;
                "picard_tol"
            }
            "picard_max" => {
                cfg.picard_max = int(value)?;
                "picard_max"
            }
            "linsolve_tol" => {
                cfg.linsolve_tol = num(value)?;
                "linsolve_tol"
            }
            "output_dir" => {
                cfg.output_dir = PathBuf::from(value);
                "output_dir"
            }
            "dump_every" => {
                cfg.dump_every = int(value)?;
                "dump_every"
            }
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| err(format!("seed: malformed integer {value:?}")))?;
                "seed"
            }
            "amplitude_u" => {
                cfg.amplitude_u = num(value)?;
                "amplitude_u"
            }
            "amplitude_h" => {
                cfg.amplitude_h = num(value)?;
                "amplitude_h"
            }
            "u0_norm" => {
                cfg.u0_norm = num(value)?;
                "u0_norm"
            }
            "h0_norm" => {
                cfg.h0_norm = num(value)?;
                "h0_norm"
            }
            "initial_fields" => {
                cfg.initial_fields = Some(PathBuf::from(value));
                "initial_fields"
            }
            "levels" => {
                cfg.levels = int(value)?;
                "levels"
            }
            _ => return Err(err(format!("unknown key {key:?}"))),
        };
        if let Some(first) = seen.insert(known, line) {
            return Err(err(format!("{key} already set on line {first}")));
        }
    }
    let last = text.lines().count();
    for key in REQUIRED {
        if !seen.contains_key(key) {
            return Err(Error::Config {
                line: last,
                msg: format!("missing required key {key}"),
            });
        }
    }
    cfg.check().map_err(|(key, msg)| Error::Config {
        line: seen.get(key).copied().unwrap_or(last),
        msg,
    })?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub const LEDGER_HEADER: &str = "step,t,norm_u_alpha_sq,norm_h_sq,norm_z_sq,seminorm_u_sq,seminorm_h_sq,\
diff_u_alpha_sq,diff_h_sq,diff_z_sq,work_f,norm_p_sq,norm_omega_sq,norm_Ah,identity_residual,\
picard_iters,max_div_u,max_div_h";

pub fn ledger_csv(led: &EnergyLedger) -> String {
    let mut s = String::with_capacity(320 * (led.rows().len() + 1));
    s.push_str(LEDGER_HEADER);
    s.push('\n');
    for r in led.rows() {
        let _ = write!(s, "{},{:.16e}", r.step, r.t);
        for v in [
            r.norm_u_alpha_sq,
            r.norm_h_sq,
            r.norm_z_sq,
            r.seminorm_u_sq,
            r.seminorm_h_sq,
            r.diff_u_alpha_sq,
            r.diff_h_sq,
            r.diff_z_sq,
            r.work_f,
            r.norm_p_sq,
            r.norm_omega_sq,
            r.norm_ah,
            r.identity_residual,
        ] {
            let _ = write!(s, ",{v:.16e}");
        }
        let _ = writeln!(s, ",{},{:.16e},{:.16e}", r.picard_iters, r.max_div_u, r.max_div_h);
    }
    s
}

pub fn write_ledger(led: &EnergyLedger, path: &Path) -> Result<()> {
    std::fs::write(path, ledger_csv(led))?;
    Ok(())
}

/// Parses a ledger CSV back; columns absent from the file stay zero.
pub fn parse_ledger(text: &str) -> Result<Vec<LedgerRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(LEDGER_HEADER) {
        return Err(Error::Format("ledger header does not match".into()));
    }
    lines
        .enumerate()
        .map(|(no, line)| {
            let bad = || Error::Format(format!("ledger row {}: malformed", no + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 18 {
                return Err(bad());
            }
            let f = |i: usize| cols[i].parse::<f64>().map_err(|_| bad());
            Ok(LedgerRow {
                step: cols[0].parse().map_err(|_| bad())?,
                t: f(1)?,
                norm_u_alpha_sq: f(2)?,
                norm_h_sq: f(3)?,
                norm_z_sq: f(4)?,
                seminorm_u_sq: f(5)?,
                seminorm_h_sq: f(6)?,
                diff_u_alpha_sq: f(7)?,
                diff_h_sq: f(8)?,
                diff_z_sq: f(9)?,
                work_f: f(10)?,
                norm_p_sq: f(11)?,
                norm_omega_sq: f(12)?,
                norm_ah: f(13)?,
                identity_residual: f(14)?,
                picard_iters: cols[15].parse().map_err(|_| bad())?,
                max_div_u: f(16)?,
                max_div_h: f(17)?,
                ..LedgerRow::default()
            })
        })
        .collect()
}

const FIELD_MAGIC: &str = "# g2mhd fields";

fn write_section(s: &mut String, label: &str, ni: usize, nj: usize, values: &[f64]) {
    let _ = writeln!(s, "{label} {ni} {nj}");
    for row in values.chunks(ni) {
        let mut first = true;
        for v in row {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
}

pub fn fields_text(s: &State, g: &Grid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FIELD_MAGIC}");
    let _ = writeln!(out, "nx {}", g.nx());
    let _ = writeln!(out, "ny {}", g.ny());
    let _ = writeln!(out, "lx {:.16e}", g.lx());
    let _ = writeln!(out, "ly {:.16e}", g.ly());
    let _ = writeln!(out, "t {:.16e}", s.t);
    let _ = writeln!(out, "n {}", s.n);
    let sections: [(&str, Layout, &[f64]); 7] = [
        ("u_x", Layout::XFace, &s.u.x),
        ("u_y", Layout::YFace, &s.u.y),
        ("h_x", Layout::XFace, &s.h.x),
        ("h_y", Layout::YFace, &s.h.y),
        ("p", Layout::Cell, &s.p.values),
        ("omega", Layout::Cell, &s.omega.values),
        ("z", Layout::Node, &s.z.values),
    ];
    for (label, layout, values) in sections {
        let (ni, nj) = g.dims(layout);
        write_section(&mut out, label, ni, nj, values);
    }
    out
}

pub fn write_fields(s: &State, g: &Grid, path: &Path) -> Result<()> {
    std::fs::write(path, fields_text(s, g))?;
    Ok(())
}

pub fn parse_fields(text: &str) -> Result<(Grid, State)> {
    let bad = |m: String| Error::Format(format!("field dump: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some(FIELD_MAGIC) {
        return Err(bad("missing header".into()));
    }
    let mut header = |key: &str| -> Result<String> {
        let l = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(bad(format!("expected {key}, got {l:?}"))),
        }
    };
    let int = |v: String| v.parse::<usize>().map_err(|_| bad(format!("malformed integer {v:?}")));
    let num = |v: String| v.parse::<f64>().map_err(|_| bad(format!("malformed number {v:?}")));
    let nx = int(header("nx")?)?;
    let ny = int(header("ny")?)?;
    let lx = num(header("lx")?)?;
    let ly = num(header("ly")?)?;
    let t = num(header("t")?)?;
    let n = int(header("n")?)?;
    let g = Grid::new(nx, ny, lx, ly)?;
    let mut section = |label: &str, layout: Layout| -> Result<Vec<f64>> {
        let (ni, nj) = g.dims(layout);
        let head = lines.next().ok_or_else(|| bad(format!("missing section {label}")))?;
        if head != format!("{label} {ni} {nj}") {
            return Err(bad(format!("expected section `{label} {ni} {nj}`, got {head:?}")));
        }
        let mut v = Vec::with_capacity(ni * nj);
        for _ in 0..nj {
            let row = lines.next().ok_or_else(|| bad(format!("{label}: truncated")))?;
            for tok in row.split_whitespace() {
                v.push(tok.parse::<f64>().map_err(|_| bad(format!("{label}: malformed {tok:?}")))?);
            }
        }
        if v.len() != ni * nj {
            return Err(bad(format!("{label}: expected {} values, found {}", ni * nj, v.len())));
        }
        Ok(v)
    };
    let u = VectorField {
        x: section("u_x", Layout::XFace)?,
        y: section("u_y", Layout::YFace)?,
    };
    let h = VectorField {
        x: section("h_x", Layout::XFace)?,
        y: section("h_y", Layout::YFace)?,
    };
    let p = CellField {
        values: section("p", Layout::Cell)?,
    };
    let omega = CellField {
        values: section("omega", Layout::Cell)?,
    };
    let z = NodeField {
        values: section("z", Layout::Node)?,
    };
    Ok((
        g,
        State {
            u,
            h,
            z,
            p,
            omega,
            t,
            n,
        },
    ))
}

pub fn read_fields(path: &Path) -> Result<(Grid, State)> {
    parse_fields(&std::fs::read_to_string(path)?)
}

/// `curl_scal` of a seeded random interior-node stream function.
pub fn random_solenoidal(g: &Grid, rng: &mut ChaCha8Rng) -> Result<VectorField> {
    let mut psi = NodeField::zeros(g);
    for (k, v) in psi.values.iter_mut().enumerate() {
        let (i, j) = g.coords(Layout::Node, k);
        let r: f64 = rng.gen_range(-1.0..1.0);
        if !g.is_fixed(Layout::Node, i, j) {
            *v = r;
        }
    }
    g.curl_scal(&psi)
}

fn normalized(v: VectorField, norm: f64, target: f64) -> VectorField {
    if norm > 0.0 {
        v.scaled(target / norm)
    } else {
        v
    }
}

/// Initial state and forcing of the configured case.
pub fn setup(cfg: &RunConfig) -> Result<(Grid, Params, State, Forcing)> {
    cfg.validate()?;
    let g = cfg.grid()?;
    let prm = cfg.params()?;
    let (u0, h0, frc) = match cfg.case {
        Case::Mms => {
            let case = polynomial_case(cfg.amplitude_u, cfg.amplitude_h);
            (case.sample_u(&g, 0.0)?, case.sample_h(&g, 0.0)?, forcing_for(&case, &prm))
        }
        Case::Decay => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let u = random_solenoidal(&g, &mut rng)?;
            let h = random_solenoidal(&g, &mut rng)?;
            let nu = alpha_norm(&g, &u, prm.alpha)?;
            let nh = l2_norm(&g, &h);
            (normalized(u, nu, cfg.u0_norm), normalized(h, nh, cfg.h0_norm), Forcing::none())
        }
        Case::Custom => match &cfg.initial_fields {
            Some(path) => {
                let (gf, s) = read_fields(path)?;
                if gf != g {
                    return Err(Error::InvalidParameter(format!(
                        "{} holds a {}x{} grid, the config asks for {}x{}",
                        path.display(),
                        gf.nx(),
                        gf.ny(),
                        g.nx(),
                        g.ny()
                    )));
                }
                (s.u, s.h, Forcing::none())
            }
            None => (VectorField::zeros(&g), VectorField::zeros(&g), Forcing::none()),
        },
    };
    let s0 = initialize(&g, &u0, &h0, &prm)?;
    Ok((g, prm, s0, frc))
}

struct DumpSink<'a> {
    grid: &'a Grid,
    dir: &'a Path,
    every: usize,
}

impl OutputSinks for DumpSink<'_> {
    fn on_state(&mut self, s: &State) -> Result<()> {
        if self.every > 0 && s.n.is_multiple_of(self.every) {
            write_fields(s, self.grid, &self.dir.join(format!("fields_{:06}.txt", s.n)))?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub grid: Grid,
    pub ledger: EnergyLedger,
    pub final_state: State,
    pub bounds: Vec<BoundReport>,
    /// Final-time errors of the manufactured case.
    pub mms_errors: Option<(f64, f64)>,
}

/// Bound reports for a finished run.
pub fn bound_reports(led: &EnergyLedger) -> Result<Vec<BoundReport>> {
    let g = led.grid();
    let p = poincare_constant(g)?;
    let beta = inf_sup_constant(g)?;
    Ok(vec![
        check_bound_u(led, p),
        check_bound_h(led, p),
        check_bound_z(led),
        check_bound_pressure(led, p, beta),
    ])
}

/// Runs `cfg`, writing `ledger.csv` and any field dumps into `out_dir`.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let (g, prm, s0, frc) = setup(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut sink = DumpSink {
        grid: &g,
        dir: out_dir,
        every: cfg.dump_every,
    };
    let (ledger, final_state) = run_from(&g, &prm, &frc, s0, cfg.n_steps()?, &mut sink)?;
    write_ledger(&ledger, &out_dir.join("ledger.csv"))?;
    let bounds = bound_reports(&ledger)?;
    let mms_errors = match cfg.case {
        Case::Mms => Some(errors(
            &polynomial_case(cfg.amplitude_u, cfg.amplitude_h),
            &g,
            &final_state,
            prm.alpha,
        )?),
        _ => None,
    };
    Ok(RunOutcome {
        grid: g,
        ledger,
        final_state,
        bounds,
        mms_errors,
    })
}

/// One line of the verification suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.tol
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<44} {:>11.3e}  (tol {:.0e})  {}",
            self.name,
            self.value,
            self.tol,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

/// Operator identities, transport stability and the spectral constants on
/// an `n x n` unit grid.
pub fn verify_suite(n: usize, seed: u64) -> Result<Vec<Check>> {
    let g = Grid::unit(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: &str, value: f64, tol: f64| {
        out.push(Check {
            name: name.to_string(),
            value,
            tol,
        })
    };
    let trials = 10;
    let (mut dc, mut cg, mut adj, mut skew, mut cross, mut stab, mut lap) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut zero_exact = true;
    for _ in 0..trials {
        let psi = NodeField {
            values: (0..g.len(Layout::Node)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        dc = dc.max(g.div(&g.curl_scal(&psi)?)?.max_abs());
        let q = CellField {
            values: (0..g.len(Layout::Cell)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let gq = g.grad(&q)?;
        let scale = gq.max_abs() / g.hx().min(g.hy());
        cg = cg.max(g.curl_vec(&gq)?.max_abs() / scale);
        let mut v = VectorField {
            x: (0..g.len(Layout::XFace)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            y: (0..g.len(Layout::YFace)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        v.zero_boundary(&g);
        let a = inner(&g, &gq, &v)?;
        let b = inner(&g, &q, &g.div(&v)?)?;
        adj = adj.max((a + b).abs() / (l2_norm(&g, &gq) * l2_norm(&g, &v)));

        let u = random_solenoidal(&g, &mut rng)?;
        let z = NodeField {
            values: (0..g.len(Layout::Node)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let th = NodeField {
            values: (0..g.len(Layout::Node)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let s = inner(&g, &g.convect(&u, &z)?, &th)? + inner(&g, &g.convect(&u, &th)?, &z)?;
        let umax = u.max_abs() / g.hx().min(g.hy());
        skew = skew.max(s.abs() / (umax * l2_norm(&g, &z) * l2_norm(&g, &th)));
        let c = inner(&g, &g.cross(&z, &u)?, &u)?;
        cross = cross.max(c.abs() / (z.max_abs() * l2_norm(&g, &u).powi(2)));
        let lu = inner(&g, &g.laplacian(&v)?, &v)? + crate::fields::h1_seminorm_sq(&g, &v);
        lap = lap.max(lu.abs() / crate::fields::h1_seminorm_sq(&g, &v));

        let gamma = 10f64.powf(rng.gen_range(-2.0..2.0));
        let f = NodeField {
            values: (0..g.len(Layout::Node)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let zt = steady_transport(&g, &u.scaled(10.0), gamma, &f, &SolverConfig::default())?;
        stab = stab.max(l2_norm(&g, &zt) / l2_norm(&g, &f) - 1.0);
        zero_exact &= steady_transport(&g, &VectorField::zeros(&g), gamma, &f, &SolverConfig::default())? == f;
    }
    push("max |div curl_scal psi|", dc, 1e-13 * (n as f64).powi(2));
    push("max |curl_vec grad q| (relative)", cg, 1e-13);
    push("grad/div adjointness (relative)", adj, 1e-13);
    push("skew convection (relative)", skew, 1e-13);
    push("cross term orthogonality (relative)", cross, 1e-13);
    push("laplacian energy identity (relative)", lap, 1e-12);
    push("transport |z|/|f| - 1", stab, 1e-10);
    push("transport with u = 0 returns f", if zero_exact { 0.0 } else { 1.0 }, 0.0);

    let pi = std::f64::consts::PI;
    let lambda = smallest_laplacian_eigenvalue(&g)?;
    let want = (4.0 / (g.hx() * g.hx())) * (pi * g.hx() / 2.0).sin().powi(2)
        + (4.0 / (g.hy() * g.hy())) * (pi * g.hy() / 2.0).sin().powi(2);
    push("poincare eigenvalue vs closed form", (lambda - want).abs() / want, 1e-8);
    let beta = inf_sup_constant(&g)?;
    push("inf-sup constant (must be in (0, 1])", if beta > 0.0 && beta <= 1.0 + 1e-12 { 0.0 } else { 1.0 }, 0.0);
    out.push(Check {
        name: format!("  beta = {beta:.6}, lambda_min = {lambda:.6}"),
        value: 0.0,
        tol: 0.0,
    });
    Ok(out)
}

#[derive(Parser, Debug)]
#[command(name = "g2mhd", about = "Grade-two MHD solver on a staggered grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a configuration; writes ledger.csv and field dumps to the output directory.
    Run { config: PathBuf },
    /// Operator identity, transport and spectral-constant checks.
    Verify {
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convergence study of the manufactured case along one axis.
    Eoc { axis: String, config: PathBuf },
}

/// Accepted EOC range per axis.
pub fn eoc_window(axis: Axis) -> (f64, f64) {
    match axis {
        Axis::Time => (0.8, 1.2),
        Axis::Space => (1.7, 2.3),
    }
}

fn print_table(t: &EocTable) {
    print!("{}", t.to_csv());
    if let Some(a) = &t.aborted {
        eprintln!("study aborted at {a}");
    }
}

fn cmd_run(path: &Path) -> Result<bool> {
    let cfg = read_config(path)?;
    let dir = cfg.resolved_output_dir();
    let out = execute(&cfg, &dir)?;
    let last = out.ledger.last();
    println!(
        "{} steps on {}x{}, t = {:.6}; ledger written to {}",
        last.step,
        out.grid.nx(),
        out.grid.ny(),
        last.t,
        dir.join("ledger.csv").display()
    );
    println!("worst identity residual ratio {:.3e}", out.ledger.worst_identity_ratio());
    if let Some((eu, eh)) = out.mms_errors {
        println!("final errors: |u - u_exact|_alpha = {eu:.6e}, |h - h_exact| = {eh:.6e}");
    }
    let mut ok = true;
    for b in &out.bounds {
        println!("{b}");
        ok &= b.passed();
    }
    Ok(ok)
}

fn cmd_verify(n: usize, seed: u64) -> Result<bool> {
    let checks = verify_suite(n, seed)?;
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(Check::passed))
}

fn cmd_eoc(axis: &str, path: &Path) -> Result<bool> {
    let axis: Axis = axis.parse()?;
    let cfg = read_config(path)?;
    let table = convergence_study(axis, cfg.levels, &cfg)?;
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir)?;
    table.write_csv(&dir.join(format!("eoc_{}.csv", axis.name())))?;
    print_table(&table);
    let (lo, hi) = eoc_window(axis);
    let ok = table.in_window(lo, hi) && table.monotone();
    println!(
        "{} EOC window [{lo}, {hi}]: {}",
        axis.name(),
        if ok { "ok" } else { "FAIL" }
    );
    Ok(ok)
}

/// Entry point; returns the process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Verify { n, seed } => cmd_verify(*n, *seed),
        Command::Eoc { axis, config } => cmd_eoc(axis, config),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: one or more checks failed");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "case = decay\nnx = 32\nny = 32\ndt = 0.01\nt_final = 0.1\nalpha = 0.1\nnu = 1.0";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.case, Case::Decay);
        assert_eq!((c.nx, c.ny), (32, 32));
        assert_eq!(c.picard_max, 50);
        assert_eq!(c.n_steps().unwrap(), 10);
    }

    #[test]
    fn config_errors_carry_lines() {
        let text = "case = decay\nnx = 8\nny = 8\nalpha = 0.1\nnu = 1\ndt = 0.3\nt_final = 1.0";
        match parse_config(text) {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 7);
                assert!(msg.contains("integer number of steps"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("alpha = 0.1", "alpha = -1");
        match parse_config(&text) {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 6);
                assert!(msg.contains("alpha >= 0"));
            }
            other => panic!("{other:?}"),
        }
        let text = format!("{MINIMAL}\n# fine\nbogus = 3");
        assert!(matches!(parse_config(&text), Err(Error::Config { line: 9, .. })));
        let text = MINIMAL.replace("nx = 32", "nx = 3x");
        assert!(matches!(parse_config(&text), Err(Error::Config { line: 2, .. })));
        assert!(matches!(
            parse_config("case = decay"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn fields_round_trip_bitwise() {
        let g = Grid::new(5, 4, 1.0, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = State::zeros(&g);
        s.u = random_solenoidal(&g, &mut rng).unwrap().scaled(1.0 / 3.0);
        s.h = s.u.scaled(-7.1e-300);
        s.p = CellField::sample(&g, |x, y| (x * 1e5).exp() - y);
        s.z.values[3] = -0.0;
        s.t = 0.1 + 0.2;
        s.n = 3;
        let (g2, s2) = parse_fields(&fields_text(&s, &g)).unwrap();
        assert_eq!(g2, g);
        for (a, b) in s.u.x.iter().chain(&s.h.y).chain(&s.p.values).chain(&s.z.values).zip(
            s2.u.x.iter().chain(&s2.h.y).chain(&s2.p.values).chain(&s2.z.values),
        ) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(s2, s);
    }

    #[test]
    fn usage_errors_are_nonzero() {
        assert_ne!(main(["g2mhd"]), 0);
        assert_ne!(main(["g2mhd", "eoc"]), 0);
        assert_ne!(main(["g2mhd", "run", "/nonexistent/config"]), 0);
    }
}
