//! Lichnerowicz equation `Δφ = h(φ)` by shifted monotone Picard iteration.
//!
//! `h(φ) = A_R φ − A_K φ^{−(3n−2)/(n−2)} + A_τ φ^{(n+2)/(n−2)} − A_ε1 φ^{(n+2)/(n−2)}
//!        − A_ε2 φ^{−3} − A_ε3 φ^{(n−6)/(n−2)}`.

use std::io::Write;

use num_rational::Rational64;

use crate::conformal_data::{rpow, to_f64, ConformalConstants, ConformalData};
use crate::error::{ForgeError, Result};
use crate::geometry::Domain;
use crate::operators::{DiscreteOperator, ShiftedSystem, SolveOptions};

pub const A_FLOOR: f64 = 1e-8;
pub const SHIFT_SAFETY: f64 = 1.1;

/// One term `sign · coef(x) · φ^power` of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub name: &'static str,
    pub coef: Vec<f64>,
    pub power: Rational64,
    pub sign: f64,
}

impl Term {
    fn active(&self) -> bool {
        self.coef.iter().any(|c| *c != 0.0)
    }
}

/// The six named terms of `h` built from curvature, data and `|K̃|²`.
pub fn data_terms(k: &ConformalConstants, r: &[f64], data: &ConformalData, k_tilde_sq: &[f64]) -> Vec<Term> {
    let (cn, bn) = (k.cn(), k.bn());
    let crit = k.critical();
    vec![
        Term { name: "A_R", coef: r.iter().map(|v| cn * v).collect(), power: Rational64::from_integer(1), sign: 1.0 },
        Term { name: "A_K", coef: k_tilde_sq.iter().map(|v| cn * v).collect(), power: k.k_power(), sign: -1.0 },
        Term { name: "A_tau", coef: data.tau.iter().map(|t| bn * t * t).collect(), power: crit, sign: 1.0 },
        Term { name: "A_eps1", coef: data.eps1.iter().map(|e| 2.0 * cn * e).collect(), power: crit, sign: -1.0 },
        Term {
            name: "A_eps2",
            coef: data.eps2.iter().map(|e| 2.0 * cn * e).collect(),
            power: Rational64::from_integer(-3),
            sign: -1.0,
        },
        Term { name: "A_eps3", coef: data.eps3.iter().map(|e| 2.0 * cn * e).collect(), power: k.eps3_power(), sign: -1.0 },
    ]
}

/// `h(p, φ) = Σ sign · coef[p] · φ^power`.
pub fn eval_terms(terms: &[Term], p: usize, phi: f64) -> f64 {
    terms.iter().filter(|t| t.coef[p] != 0.0).map(|t| t.sign * t.coef[p] * rpow(phi, t.power)).sum()
}

#[derive(Debug, Clone)]
pub struct LichnerowiczProblem<'a> {
    pub op: &'a DiscreteOperator,
    pub domain: Domain,
    pub terms: Vec<Term>,
    /// Values used on fixed nodes.
    pub boundary: Vec<f64>,
}

impl<'a> LichnerowiczProblem<'a> {
    /// Coefficients from scalar curvature `r`, data and `|K̃|²`.
    pub fn from_data(
        op: &'a DiscreteOperator,
        domain: Domain,
        k: &ConformalConstants,
        r: &[f64],
        data: &ConformalData,
        k_tilde_sq: &[f64],
        boundary: Vec<f64>,
    ) -> Self {
        LichnerowiczProblem { op, domain, terms: data_terms(k, r, data, k_tilde_sq), boundary }
    }

    /// Generic two-term or custom problem.
    pub fn from_terms(op: &'a DiscreteOperator, domain: Domain, terms: Vec<Term>, boundary: Vec<f64>) -> Self {
        LichnerowiczProblem { op, domain, terms, boundary }
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn set_coefficient(&mut self, name: &str, coef: Vec<f64>) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.name == name) {
            t.coef = coef;
        }
    }

    pub fn h_at(&self, p: usize, phi: f64) -> f64 {
        eval_terms(&self.terms, p, phi)
    }

    pub fn dh_at(&self, p: usize, phi: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.coef[p] != 0.0)
            .map(|t| t.sign * t.coef[p] * to_f64(t.power) * rpow(phi, t.power - 1))
            .sum()
    }

    pub fn h(&self, phi: &[f64]) -> Vec<f64> {
        phi.iter().enumerate().map(|(p, f)| self.h_at(p, *f)).collect()
    }

    /// `H(φ) = Δφ − h(φ)` at every node; meaningless on fixed nodes.
    pub fn residual(&self, phi: &[f64]) -> Vec<f64> {
        self.op.apply(phi).iter().enumerate().map(|(p, l)| l - self.h_at(p, phi[p])).collect()
    }

    /// True when some term with a negative exponent has a nonzero coefficient.
    pub fn singular_at_zero(&self) -> bool {
        self.terms.iter().any(|t| t.power < Rational64::from_integer(0) && t.active())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftMode {
    /// One bracket `[l, m]` for every node.
    Global,
    /// Node-wise bracket `[φ₋(x), φ₊(x)]`.
    Local,
}

/// `a(x) = 1.1 Σ |A_t(x)| |p_t| max(l^{p_t−1}, m^{p_t−1})`, at least `A_FLOOR`.
pub fn shift_coefficient(problem: &LichnerowiczProblem, l: &[f64], m: &[f64]) -> Vec<f64> {
    (0..problem.len())
        .map(|p| {
            let s: f64 = problem
                .terms
                .iter()
                .filter(|t| t.coef[p] != 0.0 && t.power != Rational64::from_integer(0))
                .map(|t| {
                    let e = t.power - 1;
                    t.coef[p].abs() * to_f64(t.power).abs() * pow0(l[p], e).max(rpow(m[p], e))
                })
                .sum();
            (SHIFT_SAFETY * s).max(A_FLOOR)
        })
        .collect()
}

/// `x^e` extended to `x = 0` by its limit.
fn pow0(x: f64, e: Rational64) -> f64 {
    if x > 0.0 {
        rpow(x, e)
    } else if e < Rational64::from_integer(0) {
        f64::INFINITY
    } else if e == Rational64::from_integer(0) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub enum Start {
    Lower,
    Mid,
    Upper,
    Given(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub linear_tol: f64,
    pub start: Start,
    pub shift: ShiftMode,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { tol: 1e-10, max_iter: 1000, linear_tol: 1e-12, start: Start::Lower, shift: ShiftMode::Global }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardTrace {
    pub sup_diff: Vec<f64>,
    pub bracket_violation: Vec<f64>,
    /// Largest `φ_k − φ_{k+1}` over free nodes, per iterate; non-positive for a monotone rise.
    pub max_decrease: Vec<f64>,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.sup_diff.len()
    }

    /// Ratio of the last two sup-differences.
    pub fn contraction(&self) -> Option<f64> {
        let k = self.sup_diff.len();
        (k >= 2 && self.sup_diff[k - 2] > 0.0).then(|| self.sup_diff[k - 1] / self.sup_diff[k - 2])
    }

    /// CSV rows `iterate,sup_diff,bracket_violation`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iterate,sup_diff,bracket_violation")?;
        for (i, (d, b)) in self.sup_diff.iter().zip(&self.bracket_violation).enumerate() {
            writeln!(w, "{},{d:.17e},{b:.17e}", i + 1)?;
        }
        Ok(())
    }
}

/// Shifted Picard iteration `(Δ − a) φ_{k+1} = h(φ_k) − a φ_k` between `lower` and `upper`.
pub fn picard_solve(
    problem: &LichnerowiczProblem,
    lower: &[f64],
    upper: &[f64],
    opts: &PicardOptions,
) -> Result<(Vec<f64>, PicardTrace)> {
    let len = problem.len();
    let free = problem.domain.free_nodes();
    if free.is_empty() {
        return Err(ForgeError::Domain("no free nodes".into()));
    }
    let l = free.iter().map(|&p| lower[p]).fold(f64::INFINITY, f64::min);
    let m = free.iter().map(|&p| upper[p]).fold(f64::NEG_INFINITY, f64::max);
    let eps_mp = 1e-8 * m;
    if l < 0.0 || (l == 0.0 && problem.singular_at_zero()) || !(l <= m) {
        return Err(ForgeError::Domain(format!("invalid bracket [{l:.6e}, {m:.6e}]")));
    }
    for p in 0..len {
        if lower[p] > upper[p] + eps_mp {
            return Err(ForgeError::Domain(format!("lower barrier exceeds upper at node {p}")));
        }
        if !problem.domain.is_free(p) {
            let u = problem.boundary[p];
            if u < lower[p] - eps_mp || u > upper[p] + eps_mp {
                return Err(ForgeError::Domain(format!(
                    "boundary value {u:.6e} outside [{:.6e}, {:.6e}] at node {p}",
                    lower[p], upper[p]
                )));
            }
        }
    }
    let a = match opts.shift {
        ShiftMode::Global => {
            let (lv, mv) = (vec![l; len], vec![m; len]);
            shift_coefficient(problem, &lv, &mv)
        }
        ShiftMode::Local => shift_coefficient(problem, lower, upper),
    };
    let system = ShiftedSystem::new(problem.op, &problem.domain, Some(&a));
    let mut phi: Vec<f64> = match &opts.start {
        Start::Lower => lower.to_vec(),
        Start::Upper => upper.to_vec(),
        Start::Mid => lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect(),
        Start::Given(g) => g.clone(),
    };
    for p in 0..len {
        if !problem.domain.is_free(p) {
            phi[p] = problem.boundary[p];
        }
    }
    let lin = SolveOptions::with_tol(opts.linear_tol);
    let mut trace = PicardTrace::default();
    for it in 1..=opts.max_iter {
        let rhs: Vec<f64> = (0..len)
            .map(|p| if problem.domain.is_free(p) { problem.h_at(p, phi[p]) - a[p] * phi[p] } else { 0.0 })
            .collect();
        let (next, _) = system.solve(&rhs, &problem.boundary, Some(&phi), lin)?;
        let mut diff: f64 = 0.0;
        let mut decrease = f64::NEG_INFINITY;
        let mut worst = (0usize, 0.0f64);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in &free {
            diff = diff.max((next[p] - phi[p]).abs());
            decrease = decrease.max(phi[p] - next[p]);
            let ex = (lower[p] - next[p]).max(next[p] - upper[p]);
            if ex > worst.1 {
                worst = (p, ex);
            }
            lo = lo.min(next[p]);
            hi = hi.max(next[p]);
        }
        trace.sup_diff.push(diff);
        trace.bracket_violation.push(0.0f64.max(l - lo).max(hi - m));
        trace.max_decrease.push(decrease);
        if worst.1 > eps_mp {
            return Err(ForgeError::Bracketing { node: worst.0, iterate: it, excess: worst.1 });
        }
        if !next.iter().all(|v| v.is_finite()) {
            return Err(ForgeError::NonConvergence {
                iterations: it,
                last_diff: diff,
                context: "non-finite iterate".into(),
            });
        }
        phi = next;
        if diff <= opts.tol {
            return Ok((phi, trace));
        }
    }
    Err(ForgeError::NonConvergence {
        iterations: opts.max_iter,
        last_diff: trace.sup_diff.last().copied().unwrap_or(f64::NAN),
        context: "Picard iteration".into(),
    })
}

/// Positive root of `h(φ) = 0` for constant coefficients, by bisection on `[lo, hi]`.
pub fn constant_root(problem: &LichnerowiczProblem, p: usize, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (flo, fhi) = (problem.h_at(p, lo), problem.h_at(p, hi));
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if problem.h_at(p, mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
