//! Krylov solvers on CSR matrices with Jacobi preconditioning.

use rayon::prelude::*;
use sprs::CsMat;

use crate::error::{ForgeError, Result};

/// Rows below this count are multiplied serially.
const PAR_ROWS: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ConjugateGradient,
    BiCgStab,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::ConjugateGradient => "cg",
            Method::BiCgStab => "bicgstab",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub method: Method,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    /// `None` selects `20·√dof`, at least 100.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: None }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> SolveOptions {
        SolveOptions { tol, max_iter: None }
    }

    fn cap(&self, dof: usize) -> usize {
        self.max_iter.unwrap_or_else(|| ((20.0 * (dof as f64).sqrt()) as usize).max(100))
    }
}

/// `y = A x`; rows are independent so the parallel path is deterministic.
pub fn matvec(a: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    let ip = a.indptr();
    let ip = ip.raw_storage();
    let idx = a.indices();
    let val = a.data();
    let row = |r: usize| -> f64 {
        let mut s = 0.0;
        for k in ip[r]..ip[r + 1] {
            s += val[k] * x[idx[k]];
        }
        s
    };
    if y.len() >= PAR_ROWS {
        y.par_iter_mut().enumerate().for_each(|(r, yr)| *yr = row(r));
    } else {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = row(r);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn diagonal(a: &CsMat<f64>) -> Vec<f64> {
    let mut d = vec![0.0; a.rows()];
    for (r, row) in a.outer_iterator().enumerate() {
        for (c, v) in row.iter() {
            if c == r {
                d[r] += *v;
            }
        }
    }
    d
}

pub fn max_abs(a: &CsMat<f64>) -> f64 {
    a.data().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Largest `|A_ij − A_ji|` relative to `max |A|`.
pub fn symmetry_defect(a: &CsMat<f64>) -> f64 {
    let t: CsMat<f64> = a.transpose_view().to_csr();
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (r, row) in a.outer_iterator().enumerate() {
        let trow = t.outer_view(r).expect("square matrix");
        let mut tv: Vec<(usize, f64)> = trow.iter().map(|(c, v)| (c, *v)).collect();
        tv.sort_by_key(|e| e.0);
        for (c, v) in row.iter() {
            let w = tv.binary_search_by_key(&c, |e| e.0).map(|k| tv[k].1).unwrap_or(0.0);
            worst = worst.max((v - w).abs());
        }
        for (c, w) in &tv {
            if row.get(*c).is_none() {
                worst = worst.max(w.abs());
            }
        }
    }
    worst / scale
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive (semi)definite `A`.
///
/// Returns a singular-operator error when a search direction has vanishing
/// curvature, and a non-convergence error carrying the best iterate.
pub fn conjugate_gradient(
    a: &CsMat<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: SolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let n = b.len();
    let cap = opts.cap(n);
    let diag = diagonal(a);
    let inv_d: Vec<f64> = diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let bnorm = norm(b);
    let report = |it, res, ok| LinearSolveReport {
        iterations: it,
        residual: res,
        method: Method::ConjugateGradient,
        converged: ok,
    };
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], report(0, 0.0, true)));
    }
    let mut r = vec![0.0; n];
    matvec(a, &x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = norm(&r) / bnorm;
    if res <= opts.tol {
        return Ok((x, report(0, res, true)));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let scale = max_abs(a);
    for it in 1..=cap {
        matvec(a, &p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 1e-14 * scale * dot(&p, &p) {
            return Err(ForgeError::Singular(format!(
                "vanishing curvature p·Ap = {pap:.3e} at CG iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bnorm;
        if res <= opts.tol {
            return Ok((x, report(it, res, true)));
        }
        for i in 0..n {
            z[i] = r[i] * inv_d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(ForgeError::LinearSolve { iterations: cap, residual: res, best: x })
}

/// Jacobi-preconditioned BiCGSTAB for general square `A`.
pub fn bicgstab(
    a: &CsMat<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: SolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let n = b.len();
    let cap = opts.cap(n);
    let diag = diagonal(a);
    let inv_d: Vec<f64> = diag.iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let bnorm = norm(b);
    let report = |it, res, ok| LinearSolveReport {
        iterations: it,
        residual: res,
        method: Method::BiCgStab,
        converged: ok,
    };
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], report(0, 0.0, true)));
    }
    let mut r = vec![0.0; n];
    matvec(a, &x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let mut res = norm(&r) / bnorm;
    if res <= opts.tol {
        return Ok((x, report(0, res, true)));
    }
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zs = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=cap {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < f64::MIN_POSITIVE {
            return Err(ForgeError::Singular(format!("BiCGSTAB breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_d[i];
        }
        matvec(a, &y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= opts.tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            res = norm(&s) / bnorm;
            return Ok((x, report(it, res, true)));
        }
        for i in 0..n {
            zs[i] = s[i] * inv_d[i];
        }
        matvec(a, &zs, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zs[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if res <= opts.tol {
            return Ok((x, report(it, res, true)));
        }
        if omega == 0.0 {
            return Err(ForgeError::Singular(format!("BiCGSTAB stagnation at iteration {it}")));
        }
    }
    Err(ForgeError::LinearSolve { iterations: cap, residual: res, best: x })
}
