//! Sparse matrices, Krylov iterations, sparse LU and the constrained
//! (saddle-point) solve used by every implicit step.

use std::fmt;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triples; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, trips: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in trips {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut cols = vec![0usize; trips.len()];
        let mut vals = vec![0.0; trips.len()];
        let mut next = counts.clone();
        for &(r, c, v) in trips {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(trips.len());
        let mut values = Vec::with_capacity(trips.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *out = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= a);
        m
    }

    /// `a * self + b * other`.
    pub fn add_scaled(&self, a: f64, other: &CsrMatrix, b: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let t: Vec<_> = self
            .triplets()
            .map(|(r, c, v)| (r, c, a * v))
            .chain(other.triplets().map(|(r, c, v)| (r, c, b * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Singular(format!("matrix assembly: {e:?}")))
    }
}

type ApplyFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum Form {
    Explicit(CsrMatrix),
    MatrixFree(ApplyFn),
}

/// Square linear operator, either stored or given by an apply callback.
#[derive(Clone)]
pub struct SparseOperator {
    n: usize,
    form: Form,
    symmetric: bool,
}

impl fmt::Debug for SparseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.form {
            Form::Explicit(ref m) => format!("explicit, nnz {}", m.nnz()),
            Form::MatrixFree(_) => "matrix-free".to_string(),
        };
        write!(f, "SparseOperator(n = {}, {kind}, symmetric = {})", self.n, self.symmetric)
    }
}

impl SparseOperator {
    pub fn explicit(m: CsrMatrix, symmetric: bool) -> Result<Self> {
        if m.nrows != m.ncols {
            return Err(Error::DimensionMismatch {
                op: m.nrows,
                vec: m.ncols,
            });
        }
        Ok(Self {
            n: m.nrows,
            form: Form::Explicit(m),
            symmetric,
        })
    }

    pub fn matrix_free(
        n: usize,
        symmetric: bool,
        apply: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            form: Form::MatrixFree(Arc::new(apply)),
            symmetric,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn matrix(&self) -> Option<&CsrMatrix> {
        match &self.form {
            Form::Explicit(m) => Some(m),
            Form::MatrixFree(_) => None,
        }
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match &self.form {
            Form::Explicit(m) => m.matvec_into(x, y),
            Form::MatrixFree(f) => f(x, y),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DirectLu,
    Cg,
    NonsymKrylov,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `None` means `10 * n`.
    pub max_iter: Option<usize>,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_iter: None,
            method: Method::DirectLu,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn target(&self, rhs_norm: f64) -> f64 {
        (self.rel_tol * rhs_norm).max(self.abs_tol)
    }

    fn iter_cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n.max(1))
    }
}

/// Solution vector plus an honest account of how it was obtained.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `|op x - rhs|_2`, recomputed from the returned `x`.
    pub residual: f64,
    pub target: f64,
    pub converged: bool,
}

impl Solution {
    pub fn into_result(self) -> Result<Vec<f64>> {
        if self.converged {
            Ok(self.x)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
                target: self.target,
            })
        }
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(op: &dyn Fn(&[f64], &mut [f64]), x: &[f64], rhs: &[f64]) -> f64 {
    let mut r = vec![0.0; rhs.len()];
    op(x, &mut r);
    r.iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Sparse LU factorization of a square matrix.
#[derive(Clone)]
pub struct LuFactor {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl fmt::Debug for LuFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LuFactor(n = {})", self.n)
    }
}

impl LuFactor {
    pub fn new(m: &CsrMatrix) -> Result<Self> {
        if m.nrows != m.ncols {
            return Err(Error::DimensionMismatch {
                op: m.nrows,
                vec: m.ncols,
            });
        }
        let lu = m
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Singular(format!("{e:?}")))?;
        Ok(Self { n: m.nrows, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Solves `op x = rhs`.
pub fn solve(op: &SparseOperator, rhs: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    if rhs.len() != op.n {
        return Err(Error::DimensionMismatch {
            op: op.n,
            vec: rhs.len(),
        });
    }
    let target = cfg.target(norm2(rhs));
    let apply = |x: &[f64], y: &mut [f64]| op.apply_into(x, y);
    let (x, iterations) = match cfg.method {
        Method::DirectLu => {
            let m = op.matrix().ok_or_else(|| {
                Error::InvalidParameter("direct LU needs an explicit matrix".into())
            })?;
            let x = LuFactor::new(m)?.solve(rhs);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular("non-finite LU solution".into()));
            }
            (x, 1)
        }
        Method::Cg => {
            let (x, it, _) = cg(&apply, rhs, target, cfg.iter_cap(op.n), |_| {});
            (x, it)
        }
        Method::NonsymKrylov => {
            let (x, it) = gmres(&apply, None, rhs, None, target, cfg.iter_cap(op.n), 60);
            (x, it)
        }
    };
    let res = residual(&apply, &x, rhs);
    Ok(Solution {
        x,
        iterations,
        residual: res,
        target,
        converged: res <= target,
    })
}

/// Conjugate gradients that also return every iterate, for convergence
/// diagnostics on small systems.
pub fn cg_traced(op: &SparseOperator, rhs: &[f64], cfg: &SolverConfig) -> Result<(Solution, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if !op.is_symmetric() {
        return Err(Error::InvalidParameter("conjugate gradients need a symmetric operator".into()));
    }
    if rhs.len() != op.n {
        return Err(Error::DimensionMismatch {
            op: op.n,
            vec: rhs.len(),
        });
    }
    let target = cfg.target(norm2(rhs));
    let apply = |x: &[f64], y: &mut [f64]| op.apply_into(x, y);
    let mut trace = Vec::new();
    let (x, iterations, _) = cg(&apply, rhs, target, cfg.iter_cap(op.n), |x| trace.push(x.to_vec()));
    let res = residual(&apply, &x, rhs);
    Ok((
        Solution {
            x,
            iterations,
            residual: res,
            target,
            converged: res <= target,
        },
        trace,
    ))
}

/// Conjugate gradients from a zero start. `observe` sees every iterate.
pub(crate) fn cg(
    apply: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    target: f64,
    max_iter: usize,
    mut observe: impl FnMut(&[f64]),
) -> (Vec<f64>, usize, bool) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return (x, 0, true);
    }
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return (x, it, false);
        }
        let a = rr / pap;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        observe(&x);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return (x, it, true);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    (x, max_iter, false)
}

type Precond<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

/// Restarted GMRES with optional right preconditioning. Restarts until the
/// recomputed residual meets `target` or `max_iter` inner steps are spent.
pub(crate) fn gmres(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: Option<&Precond<'_>>,
    b: &[f64],
    x0: Option<Vec<f64>>,
    target: f64,
    max_iter: usize,
    restart: usize,
) -> (Vec<f64>, usize) {
    let n = b.len();
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    let mut total = 0;
    let mut tmp = vec![0.0; n];
    let m = restart.max(1);
    loop {
        apply(&x, &mut tmp);
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta <= target || total >= max_iter {
            return (x, total);
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let (mut cs, mut sn) = (Vec::<f64>::new(), Vec::<f64>::new());
        let mut g = vec![beta];
        let mut k = 0;
        while k < m && total < max_iter {
            let z = match precond {
                Some(p) => p(&basis[k]),
                None => basis[k].clone(),
            };
            let mut w = vec![0.0; n];
            apply(&z, &mut w);
            zs.push(z);
            let mut h = vec![0.0; k + 2];
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i] += c;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let hn = norm2(&w);
            h[k + 1] = hn;
            for i in 0..k {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let d = h[k].hypot(h[k + 1]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (h[k] / d, h[k + 1] / d) };
            cs.push(c);
            sn.push(s);
            h[k] = d;
            h[k + 1] = 0.0;
            g.push(-s * g[k]);
            g[k] *= c;
            hess.push(h);
            total += 1;
            k += 1;
            if g[k].abs() <= 0.5 * target || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // Back substitution on the rotated Hessenberg matrix.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hess[j][i] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&zs[j]).for_each(|(xi, zi)| *xi += yj * zi);
        }
    }
}

/// Solution of a constrained system `[A B^T; B 0] (x, q) = (rhs, 0)`.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub x: Vec<f64>,
    /// Multiplier with zero mean.
    pub q: Vec<f64>,
    pub iterations: usize,
    /// Euclidean residual of the full block system, recomputed.
    pub residual: f64,
    pub target: f64,
    pub converged: bool,
    /// `max |B x|`.
    pub constraint: f64,
}

/// Block system with the multiplier nullspace (constants) removed by pinning
/// the first multiplier; the frozen part `a0` is factored once and reused as a
/// preconditioner when a perturbation is added.
#[derive(Debug, Clone)]
pub struct SaddleSolver {
    nv: usize,
    nq: usize,
    a0: CsrMatrix,
    b: CsrMatrix,
    frozen: LuFactor,
}

fn assemble_saddle(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let (nv, nq) = (a.nrows, b.nrows);
    let mut t: Vec<_> = a.triplets().collect();
    for (r, c, v) in b.triplets() {
        if r == 0 {
            continue;
        }
        t.push((nv + r - 1, c, v));
        t.push((c, nv + r - 1, v));
    }
    CsrMatrix::from_triplets(nv + nq - 1, nv + nq - 1, &t)
}

impl SaddleSolver {
    pub fn new(a0: &CsrMatrix, b: &CsrMatrix) -> Result<Self> {
        if a0.nrows != a0.ncols || b.ncols != a0.nrows || b.nrows < 1 {
            return Err(Error::DimensionMismatch {
                op: a0.nrows,
                vec: b.ncols,
            });
        }
        let frozen = LuFactor::new(&assemble_saddle(a0, b))?;
        Ok(Self {
            nv: a0.nrows,
            nq: b.nrows,
            a0: a0.clone(),
            b: b.clone(),
            frozen,
        })
    }

    pub fn nv(&self) -> usize {
        self.nv
    }
    pub fn nq(&self) -> usize {
        self.nq
    }

    fn block_apply(&self, extra: Option<&CsrMatrix>, y: &[f64], out: &mut [f64]) {
        let (nv, nq) = (self.nv, self.nq);
        let (x, q) = y.split_at(nv);
        self.a0.matvec_into(x, &mut out[..nv]);
        if let Some(e) = extra {
            let ex = e.matvec(x);
            out[..nv].iter_mut().zip(ex).for_each(|(o, v)| *o += v);
        }
        for r in 1..nq {
            let mut s = 0.0;
            for (c, v) in self.b.row(r) {
                s += v * x[c];
                out[c] += v * q[r - 1];
            }
            out[nv + r - 1] = s;
        }
    }

    /// Solves with `A = a0 + extra`.
    pub fn solve(
        &self,
        extra: Option<&CsrMatrix>,
        rhs_v: &[f64],
        cfg: &SolverConfig,
    ) -> Result<SaddleSolution> {
        cfg.validate()?;
        if rhs_v.len() != self.nv {
            return Err(Error::DimensionMismatch {
                op: self.nv,
                vec: rhs_v.len(),
            });
        }
        let dim = self.nv + self.nq - 1;
        let mut rhs = rhs_v.to_vec();
        rhs.resize(dim, 0.0);
        let target = cfg.target(norm2(&rhs));
        let apply = |y: &[f64], out: &mut [f64]| self.block_apply(extra, y, out);

        let (mut y, mut iterations) = match extra {
            None => (self.frozen.solve(&rhs), 1),
            Some(_) if cfg.method == Method::DirectLu => {
                let full = self.a0.add_scaled(1.0, extra.unwrap(), 1.0);
                (LuFactor::new(&assemble_saddle(&full, &self.b))?.solve(&rhs), 1)
            }
            Some(_) => {
                let pc = |v: &[f64]| self.frozen.solve(v);
                let cap = cfg.max_iter.unwrap_or(300);
                gmres(&apply, Some(&pc), &rhs, None, target, cap, 60)
            }
        };
        let mut res = residual(&apply, &y, &rhs);
        if let (true, Some(e)) = (res > target && cfg.method != Method::DirectLu, extra) {
            // Preconditioned iteration stalled: factor the full system.
            let full = self.a0.add_scaled(1.0, e, 1.0);
            y = LuFactor::new(&assemble_saddle(&full, &self.b))?.solve(&rhs);
            iterations += 1;
            res = residual(&apply, &y, &rhs);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite saddle solution".into()));
        }
        let x = y[..self.nv].to_vec();
        let mut q = Vec::with_capacity(self.nq);
        q.push(0.0);
        q.extend_from_slice(&y[self.nv..]);
        let mean = q.iter().sum::<f64>() / self.nq as f64;
        q.iter_mut().for_each(|v| *v -= mean);
        let constraint = self.b.matvec(&x).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(SaddleSolution {
            x,
            q,
            iterations,
            residual: res,
            target,
            converged: res <= target,
            constraint,
        })
    }
}

/// One-shot constrained solve `a x + b^T q = rhs_v`, `b x = 0`.
pub fn solve_saddle(
    a_op: &SparseOperator,
    b_div: &CsrMatrix,
    rhs_v: &[f64],
    cfg: &SolverConfig,
) -> Result<SaddleSolution> {
    let a = a_op
        .matrix()
        .ok_or_else(|| Error::InvalidParameter("saddle solve needs an explicit block".into()))?;
    SaddleSolver::new(a, b_div)?.solve(None, rhs_v, cfg)
}
