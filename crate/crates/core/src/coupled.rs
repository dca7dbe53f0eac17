//! Outer alternation between the momentum and Lichnerowicz solves.

use num_rational::Rational64;

use crate::barriers::BarrierPair;
use crate::conformal_data::{electric_field, em_sources_at, rpow, ConformalConstants, ConformalData};
use crate::error::{ForgeError, Result};
use crate::geometry::{CurvaturePack, Domain, Exhaustion, MetricField};
use crate::lichnerowicz::{picard_solve, LichnerowiczProblem, PicardOptions, PicardTrace, ShiftMode, Start, Term};
use crate::momentum::{momentum_rhs, MomentumSolver};
use crate::operators::{DiscreteOperator, LinearSolveReport, ShiftedSystem, SolveOptions};
use crate::verification::Forcing;

/// Immutable inputs shared by every outer iteration.
pub struct CoupledContext<'a> {
    pub metric: &'a MetricField,
    pub curv: &'a CurvaturePack,
    pub lap: &'a DiscreteOperator,
    pub ckl: &'a DiscreteOperator,
    pub data: &'a ConformalData,
    pub k: ConformalConstants,
    /// λ₁ of `-Δ_conf` on the momentum domain; arms the a posteriori momentum bound.
    pub lambda1: Option<f64>,
    /// Manufactured-solution sources appended to each equation.
    pub forcing: Option<&'a Forcing>,
}

#[derive(Debug, Clone)]
pub struct CoupledOptions {
    pub tol: f64,
    pub max_outer: usize,
    /// Inner Picard tolerance is `inner_ratio · tol`.
    pub inner_ratio: f64,
    pub max_picard: usize,
    pub linear_tol: f64,
    pub shift: ShiftMode,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions { tol: 1e-8, max_outer: 100, inner_ratio: 0.1, max_picard: 2000, linear_tol: 1e-12, shift: ShiftMode::Global }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Compact,
    Exhaustion,
    Electromagnetic,
}

#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub level: usize,
    pub phi: Vec<f64>,
    pub x: Vec<f64>,
    pub f: Option<Vec<f64>>,
    /// Inner Picard traces, one per outer iterate.
    pub picard: Vec<PicardTrace>,
    pub momentum: Option<LinearSolveReport>,
    /// `‖Δφ‖_∞ + ‖ΔX‖_∞ (+ ‖Δf‖_∞)` per outer iterate.
    pub outer: Vec<f64>,
    /// `sup |H(φ)|` with the final `X`, over free nodes.
    pub lichnerowicz_residual: f64,
    /// `‖X‖_{L²}` per outer iterate.
    pub x_norms: Vec<f64>,
}

impl LevelRecord {
    /// Largest ratio `r_{j+1}/r_j` from iterate `from` on (1-based), if defined.
    pub fn contraction_after(&self, from: usize) -> Option<f64> {
        let r = &self.outer;
        (from..r.len())
            .filter(|&j| j >= 1 && r[j - 1] > 0.0)
            .map(|j| r[j] / r[j - 1])
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SolveSession {
    pub mode: Mode,
    pub levels: Vec<LevelRecord>,
    /// `d_k = ‖φ^{(k+1)} − φ^{(k)}‖_{∞,Ω₁}`.
    pub cauchy: Vec<f64>,
}

impl SolveSession {
    pub fn last(&self) -> &LevelRecord {
        self.levels.last().expect("session has a level")
    }
}

struct LevelSpec<'b> {
    level: usize,
    /// Free nodes of the Lichnerowicz solve.
    lich_domain: Domain,
    /// Free nodes of the momentum (and potential) solve.
    mom_domain: &'b Domain,
    /// Boundary values for φ on non-free nodes.
    boundary: Vec<f64>,
    /// Values of φ fed to the momentum solve outside `lich_domain`.
    extension: Option<Vec<f64>>,
    start: Vec<f64>,
    inner_start: Start,
    em: bool,
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn midpoint(pair: &BarrierPair) -> Vec<f64> {
    pair.lower.iter().zip(&pair.upper).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// Replaces `ε₂, ε₃, ω₂` by their values from `Ẽ = df + V`.
pub fn em_update(metric: &MetricField, base: &ConformalData, f: &[f64]) -> ConformalData {
    let em = base.em.as_ref().expect("em pack present");
    let n = base.n;
    let nn = n * n;
    let e = electric_field(metric, f, &em.v);
    let mut out = base.clone();
    for p in 0..f.len() {
        let (e2, e3, w2) = em_sources_at(metric, p, &e[p * n..(p + 1) * n], &em.f_tilde[p * nn..(p + 1) * nn]);
        out.eps2[p] = e2;
        out.eps3[p] = e3;
        out.omega2[p * n..(p + 1) * n].copy_from_slice(&w2);
    }
    out
}

fn solve_level(ctx: &CoupledContext, pair: &BarrierPair, spec: LevelSpec, opts: &CoupledOptions) -> Result<LevelRecord> {
    let n = ctx.metric.n();
    let len = ctx.metric.chart().len();
    let solver = MomentumSolver::new(ctx.metric, ctx.ckl, spec.mom_domain, ctx.lambda1)?;
    let potential = spec.em.then(|| ShiftedSystem::new(ctx.lap, spec.mom_domain, None));
    let inner = PicardOptions {
        tol: opts.inner_ratio * opts.tol,
        max_iter: opts.max_picard,
        linear_tol: opts.linear_tol,
        start: spec.inner_start.clone(),
        shift: opts.shift,
    };
    let mut phi = spec.start;
    let mut x = vec![0.0; len * n];
    let mut f: Option<Vec<f64>> = spec.em.then(|| ctx.data.bc_w.clone());
    let mut rec = LevelRecord {
        level: spec.level,
        phi: phi.clone(),
        x: x.clone(),
        f: f.clone(),
        picard: Vec::new(),
        momentum: None,
        outer: Vec::new(),
        lichnerowicz_residual: f64::NAN,
        x_norms: Vec::new(),
    };
    let mut last_problem_residual = f64::NAN;
    for _ in 0..opts.max_outer {
        let phi_m: Vec<f64> = match &spec.extension {
            Some(ext) => (0..len).map(|p| if spec.lich_domain.is_free(p) { phi[p] } else { ext[p] }).collect(),
            None => phi.clone(),
        };
        let mut change = 0.0;
        let data_j = match (&potential, &mut f) {
            (Some(sys), Some(f_prev)) => {
                let em = ctx.data.em.as_ref().ok_or_else(|| ForgeError::Config("em mode without em pack".into()))?;
                let mut rhs: Vec<f64> = (0..len).map(|p| em.q_tilde[p] * rpow(phi_m[p], ctx.k.dtau_power())).collect();
                if let Some(sf) = ctx.forcing.and_then(|fc| fc.f.as_ref()) {
                    rhs.iter_mut().zip(sf).for_each(|(r, s)| *r += s);
                }
                let (f_new, _) = sys.solve(&rhs, &ctx.data.bc_w, Some(f_prev), SolveOptions::with_tol(opts.linear_tol))?;
                change += sup_diff(&f_new, f_prev);
                *f_prev = f_new;
                Some(em_update(ctx.metric, ctx.data, f_prev))
            }
            _ => None,
        };
        let data = data_j.as_ref().unwrap_or(ctx.data);
        let mut rhs = momentum_rhs(&phi_m, data, &ctx.k)?;
        if let Some(fc) = ctx.forcing {
            rhs.iter_mut().zip(&fc.x).for_each(|(r, s)| *r += s);
        }
        let mom = solver.solve_rhs(&rhs, &data.bc_v, Some(&x), opts.linear_tol)?;
        let k2 = mom.k_tilde_sq(ctx.metric, &data.u);
        let mut problem = LichnerowiczProblem::from_data(
            ctx.lap,
            spec.lich_domain.clone(),
            &ctx.k,
            &ctx.curv.scalar,
            data,
            &k2,
            spec.boundary.clone(),
        );
        if let Some(fc) = ctx.forcing {
            problem.terms.push(Term { name: "forcing", coef: fc.phi.clone(), power: Rational64::from_integer(0), sign: 1.0 });
        }
        let (phi_new, trace) = picard_solve(&problem, &pair.lower, &pair.upper, &inner)?;
        change += sup_diff(&phi_new, &phi) + sup_diff(&mom.x, &x);
        let res = problem.residual(&phi_new);
        last_problem_residual = spec.lich_domain.free_nodes().iter().map(|&p| res[p].abs()).fold(0.0, f64::max);
        phi = phi_new;
        x = mom.x.clone();
        rec.picard.push(trace);
        rec.momentum = Some(mom.report.clone());
        rec.outer.push(change);
        rec.x_norms.push(mom.x_l2);
        if change <= opts.tol {
            rec.phi = phi;
            rec.x = x;
            rec.f = f;
            rec.lichnerowicz_residual = last_problem_residual;
            return Ok(rec);
        }
    }
    Err(ForgeError::NonConvergence {
        iterations: opts.max_outer,
        last_diff: rec.outer.last().copied().unwrap_or(f64::NAN),
        context: format!("outer coupled iteration (lichnerowicz residual {last_problem_residual:.3e})"),
    })
}

/// Fixed compact domain; inner Picard solves start from `φ₋`.
pub fn solve_coupled_compact(ctx: &CoupledContext, domain: &Domain, pair: &BarrierPair, opts: &CoupledOptions) -> Result<SolveSession> {
    let rec = solve_level(ctx, pair, compact_spec(ctx, domain, pair, false), opts)?;
    Ok(SolveSession { mode: Mode::Compact, levels: vec![rec], cauchy: Vec::new() })
}

/// Triangular order per outer iterate: `f` given `φ`, then `X`, then `φ`.
pub fn solve_coupled_em(ctx: &CoupledContext, domain: &Domain, pair: &BarrierPair, opts: &CoupledOptions) -> Result<SolveSession> {
    if ctx.data.em.is_none() {
        return Err(ForgeError::Config("electromagnetic solve requires an em pack".into()));
    }
    let rec = solve_level(ctx, pair, compact_spec(ctx, domain, pair, true), opts)?;
    Ok(SolveSession { mode: Mode::Electromagnetic, levels: vec![rec], cauchy: Vec::new() })
}

fn compact_spec<'b>(ctx: &CoupledContext, domain: &'b Domain, pair: &BarrierPair, em: bool) -> LevelSpec<'b> {
    let mut start = pair.lower.clone();
    for (p, s) in start.iter_mut().enumerate() {
        if !domain.is_free(p) {
            *s = ctx.data.bc_u[p];
        }
    }
    LevelSpec {
        level: 0,
        lich_domain: domain.clone(),
        mom_domain: domain,
        boundary: ctx.data.bc_u.clone(),
        extension: None,
        start,
        inner_start: Start::Lower,
        em,
    }
}

/// Level-by-level solves on `Ω₁ ⊂⊂ … ⊂⊂ Ω_K`.
///
/// φ is fixed to `(φ₊+φ₋)/2` off `Ω_k` except on the chart boundary, which keeps `bc_u`;
/// momentum is solved on the whole chart with φ extended by the same midpoint.
pub fn solve_coupled_exhaustion(
    ctx: &CoupledContext,
    ex: &Exhaustion,
    pair: Option<&BarrierPair>,
    opts: &CoupledOptions,
) -> Result<SolveSession> {
    let pair = pair.ok_or_else(|| ForgeError::Config("exhaustion solve requires barriers".into()))?;
    let chart = ex.chart();
    let full = Domain::interior(chart);
    let mid = midpoint(pair);
    let inner_mask = ex.interior_compact();
    let mut levels: Vec<LevelRecord> = Vec::new();
    let mut cauchy = Vec::new();
    for k in 1..=ex.levels() {
        let dom = ex.domain(k);
        let boundary: Vec<f64> =
            (0..chart.len()).map(|p| if chart.on_boundary(p) { ctx.data.bc_u[p] } else { mid[p] }).collect();
        let spec = LevelSpec {
            level: k,
            lich_domain: dom.clone(),
            mom_domain: &full,
            boundary: boundary.clone(),
            extension: Some(boundary.clone()),
            start: (0..chart.len()).map(|p| if dom.is_free(p) { mid[p] } else { boundary[p] }).collect(),
            inner_start: Start::Mid,
            em: false,
        };
        let rec = solve_level(ctx, pair, spec, opts).map_err(|e| ForgeError::Level { level: k, source: Box::new(e) })?;
        if let Some(prev) = levels.last() {
            let d = (0..chart.len())
                .filter(|&p| inner_mask[p])
                .map(|p| (rec.phi[p] - prev.phi[p]).abs())
                .fold(0.0, f64::max);
            cauchy.push(d);
        }
        levels.push(rec);
    }
    Ok(SolveSession { mode: Mode::Exhaustion, levels, cauchy })
}
