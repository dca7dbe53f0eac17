//! Physical initial data from a conformal solve, constraint residuals, manufactured solutions.

use crate::conformal_data::{em_sources_at, rpow, ConformalConstants, ConformalData};
use crate::coupled::em_update;
use crate::error::{ForgeError, Result};
use crate::expr::Expr;
use crate::geometry::{curvature, BoundaryKind, CurvaturePack, GridChart, MetricField, MetricGenerator};
use crate::lichnerowicz::{data_terms, eval_terms};
use crate::momentum::{k_tilde_sq, momentum_rhs};
use crate::operators::conformal_killing_operator;

/// Reconstructed `(g, K)` with optional electric field.
#[derive(Debug, Clone)]
pub struct InitialDataSet {
    pub phi: Vec<f64>,
    /// Background metric `γ`.
    pub gamma: MetricField,
    /// `g = φ^{4/(n−2)} γ`.
    pub g: MetricField,
    /// `K_ij`, `n²` per node.
    pub k: Vec<f64>,
    /// Potential `f` when the solve carried one.
    pub f: Option<Vec<f64>>,
    /// Physical electric covector `φ^{−2}(df + V)`.
    pub e: Option<Vec<f64>>,
    /// `sup |tr_g K − τ|`.
    pub trace_defect: f64,
}

/// Builds `g` and `K = φ^{−2}(£_conf X + U) + (τ/n) g`.
pub fn reconstruct(
    gamma: &MetricField,
    phi: &[f64],
    x: &[f64],
    f: Option<&[f64]>,
    data: &ConformalData,
    k: &ConformalConstants,
) -> Result<InitialDataSet> {
    if let Some(p) = phi.iter().position(|v| !(*v > 0.0)) {
        return Err(ForgeError::Domain(format!("phi = {} not positive at node {p}", phi[p])));
    }
    let n = gamma.n();
    let nn = n * n;
    let chart = gamma.chart();
    let len = chart.len();
    let mut g = vec![0.0; len * nn];
    for p in 0..len {
        let w = rpow(phi[p], k.metric_power());
        for (o, c) in g[p * nn..(p + 1) * nn].iter_mut().zip(gamma.g(p)) {
            *o = w * c;
        }
    }
    let g = MetricField::from_components(chart, n, MetricGenerator::Explicit, g)?;
    let lie = conformal_killing_operator(gamma, x);
    let mut kt = vec![0.0; len * nn];
    let mut trace_defect: f64 = 0.0;
    for p in 0..len {
        let s = phi[p].powi(-2);
        let gp = g.g(p);
        let tp = data.tau[p] / n as f64;
        for c in 0..nn {
            kt[p * nn + c] = s * (lie[p * nn + c] + data.u[p * nn + c]) + tp * gp[c];
        }
        trace_defect = trace_defect.max((g.trace(p, &kt[p * nn..(p + 1) * nn]) - data.tau[p]).abs());
    }
    let e = match (f, data.em.as_ref()) {
        (Some(f), Some(em)) => {
            let mut e = crate::conformal_data::electric_field(gamma, f, &em.v);
            for p in 0..len {
                let s = phi[p].powi(-2);
                e[p * n..(p + 1) * n].iter_mut().for_each(|v| *v *= s);
            }
            Some(e)
        }
        _ => None,
    };
    Ok(InitialDataSet { phi: phi.to_vec(), gamma: gamma.clone(), g, k: kt, f: f.map(<[f64]>::to_vec), e, trace_defect })
}

/// Covector `(div T)_j = g^{ik} ∇_i T_kj` of a symmetric 2-tensor, by second-order differences.
pub fn tensor_divergence(metric: &MetricField, christoffel: &[f64], t: &[f64]) -> Vec<f64> {
    let chart = metric.chart();
    let d = chart.dim();
    let n = metric.n();
    let nn = n * n;
    let n3 = nn * n;
    let dt: Vec<Vec<f64>> = (0..d).map(|a| chart.partial(t, nn, a)).collect();
    let mut out = vec![0.0; chart.len() * n];
    for p in 0..chart.len() {
        let gi = metric.inv(p);
        let tp = &t[p * nn..(p + 1) * nn];
        let gm = &christoffel[p * n3..(p + 1) * n3];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for kk in 0..n {
                    let w = gi[i * n + kk];
                    if w == 0.0 {
                        continue;
                    }
                    let mut cov = if i < d { dt[i][p * nn + kk * n + j] } else { 0.0 };
                    for l in 0..n {
                        cov -= gm[l * nn + i * n + kk] * tp[l * n + j] + gm[l * nn + i * n + j] * tp[kk * n + l];
                    }
                    s += w * cov;
                }
            }
            out[p * n + j] = s;
        }
    }
    out
}

/// `div_g E` for a covector field `E`.
fn covector_divergence(metric: &MetricField, e: &[f64]) -> Vec<f64> {
    let chart = metric.chart();
    let n = metric.n();
    let len = chart.len();
    let mut out = vec![0.0; len];
    for a in 0..chart.dim() {
        let w: Vec<f64> = (0..len).map(|p| metric.sqrt_det(p) * metric.raise(p, &e[p * n..(p + 1) * n])[a]).collect();
        let dw = chart.partial(&w, 1, a);
        for p in 0..len {
            out[p] += dw[p] / metric.sqrt_det(p);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// `R_g + τ² − |K|²_g − 2ε − 2Λ`.
    pub hamiltonian: Vec<f64>,
    /// `div_g K − dτ − J`, covector per node.
    pub momentum: Vec<f64>,
    /// `div_g E − q̃`.
    pub electromagnetic: Option<Vec<f64>>,
    pub ham: Norms,
    pub mom: Norms,
    pub em: Option<Norms>,
    pub trace_defect: f64,
    /// Nodes entering the norms.
    pub region: Vec<bool>,
}

/// Nodes at distance at least `frac · extent` from every Dirichlet face.
pub fn inner_region(chart: &GridChart, frac: f64) -> Vec<bool> {
    let lo = chart.coords(0);
    (0..chart.len())
        .map(|p| {
            let x = chart.coords(p);
            (0..chart.dim()).all(|a| {
                if chart.kind(a) == BoundaryKind::Periodic {
                    return true;
                }
                let m = frac * chart.extent(a) - 1e-12;
                x[a] - lo[a] >= m && lo[a] + chart.extent(a) - x[a] >= m
            })
        })
        .collect()
}

fn norms(metric: &MetricField, region: &[bool], pointwise: impl Fn(usize) -> f64) -> Norms {
    let mass = metric.mass();
    let (mut l2, mut linf) = (0.0, 0.0_f64);
    for (p, _) in region.iter().enumerate().filter(|(_, r)| **r) {
        let v = pointwise(p);
        l2 += mass[p] * v * v;
        linf = linf.max(v.abs());
    }
    Norms { l2: l2.sqrt(), linf }
}

/// Constraint residuals of `ids` with the curvature of `g` rebuilt from its components.
///
/// `lambda` is an additive cosmological constant. `region` selects the nodes entering
/// the norms; `None` uses every node.
pub fn constraint_residuals(
    ids: &InitialDataSet,
    data: &ConformalData,
    k: &ConformalConstants,
    lambda: f64,
    region: Option<&[bool]>,
) -> ResidualReport {
    let g = &ids.g;
    let n = g.n();
    let nn = n * n;
    let len = g.chart().len();
    let effective;
    let data = match (&ids.f, data.em.is_some()) {
        (Some(f), true) => {
            effective = em_update(&ids.gamma, data, f);
            &effective
        }
        _ => data,
    };
    let curv = curvature(g);
    let jp = rpow_pair(k);
    let mut ham = vec![0.0; len];
    for p in 0..len {
        let phi = ids.phi[p];
        let eps = data.eps1[p] + data.eps2[p] * rpow(phi, jp.eps2) + data.eps3[p] * rpow(phi, jp.eps3);
        let kk = g.norm2_tensor(p, &ids.k[p * nn..(p + 1) * nn]);
        ham[p] = curv.scalar[p] + data.tau[p] * data.tau[p] - kk - 2.0 * eps - 2.0 * lambda;
    }
    let mut mom = tensor_divergence(g, &curv.christoffel, &ids.k);
    for p in 0..len {
        let phi = ids.phi[p];
        let (a, b) = (rpow(phi, jp.omega1), rpow(phi, jp.omega2));
        for i in 0..n {
            let c = p * n + i;
            mom[c] -= data.dtau[c] + data.omega1[c] * a - data.omega2[c] * b;
        }
    }
    let electromagnetic = match (&ids.e, data.em.as_ref()) {
        (Some(e), Some(em)) => {
            let mut div = covector_divergence(g, e);
            div.iter_mut().zip(&em.q_tilde).for_each(|(d, q)| *d -= q);
            Some(div)
        }
        _ => None,
    };
    let all = vec![true; len];
    let region = region.map(<[bool]>::to_vec).unwrap_or(all);
    let ham_n = norms(g, &region, |p| ham[p]);
    let mom_n = norms(g, &region, |p| g.dot_covec(p, &mom[p * n..(p + 1) * n], &mom[p * n..(p + 1) * n]).sqrt());
    let em_n = electromagnetic.as_ref().map(|r| norms(g, &region, |p| r[p]));
    ResidualReport {
        hamiltonian: ham,
        momentum: mom,
        electromagnetic,
        ham: ham_n,
        mom: mom_n,
        em: em_n,
        trace_defect: ids.trace_defect,
        region,
    }
}

/// Exponents of the physical sources: `ε = ε₁ + ε₂ φ^{eps2} + ε₃ φ^{eps3}`,
/// `J = ω₁ φ^{omega1} − ω₂ φ^{omega2}`.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalExponents {
    pub eps2: num_rational::Rational64,
    pub eps3: num_rational::Rational64,
    pub omega1: num_rational::Rational64,
    pub omega2: num_rational::Rational64,
}

fn rpow_pair(k: &ConformalConstants) -> PhysicalExponents {
    physical_exponents(k.dim())
}

pub fn physical_exponents(n: usize) -> PhysicalExponents {
    use num_rational::Rational64;
    let (n, m) = (n as i64, n as i64 - 2);
    PhysicalExponents {
        eps2: Rational64::new(-4 * (n - 1), m),
        eps3: Rational64::new(-8, m),
        omega1: Rational64::new(2, m),
        omega2: Rational64::new(-2 * n, m),
    }
}

/// Observed order `ln(e_c/e_f) / ln(h_c/h_f)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

/// Smooth targets `φ*`, `X*` (vector components) and optional `f*`.
#[derive(Debug, Clone)]
pub struct MmsTargets {
    pub phi: Expr,
    pub x: Vec<Expr>,
    pub f: Option<Expr>,
}

/// Nodal target values.
#[derive(Debug, Clone)]
pub struct MmsSample {
    pub phi: Vec<f64>,
    pub x: Vec<f64>,
    pub f: Option<Vec<f64>>,
}

impl MmsTargets {
    pub fn sample(&self, chart: &GridChart) -> MmsSample {
        let x = (0..chart.len()).flat_map(|p| self.x.iter().map(move |e| e.eval(&chart.coords(p)))).collect();
        MmsSample { phi: chart.eval(&self.phi), x, f: self.f.as_ref().map(|e| chart.eval(e)) }
    }

    /// Copies the target values into the Dirichlet data.
    pub fn impose_boundary(&self, chart: &GridChart, data: &mut ConformalData) {
        let s = self.sample(chart);
        data.bc_u = s.phi;
        data.bc_v = s.x;
        if let Some(f) = s.f {
            data.bc_w = f;
        }
    }
}

/// Sources appended to the Lichnerowicz, momentum and potential equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub phi: Vec<f64>,
    /// Covector per node.
    pub x: Vec<f64>,
    pub f: Option<Vec<f64>>,
}

struct Jet {
    grad: Vec<Expr>,
    hess: Vec<Expr>,
}

impl Jet {
    fn new(e: &Expr, d: usize) -> Jet {
        let grad: Vec<Expr> = (0..d).map(|a| e.diff(a)).collect();
        let hess = (0..d * d).map(|c| grad[c / d].diff(c % d)).collect();
        Jet { grad, hess }
    }
}

/// `Δ_γ u = γ^{ij}(∂_i∂_j u − Γ^k_ij ∂_k u)` with exact derivatives of `u`.
fn laplacian_exact(metric: &MetricField, curv: &CurvaturePack, jet: &Jet, p: usize) -> f64 {
    let chart = metric.chart();
    let d = chart.dim();
    let n = metric.n();
    let x = chart.coords(p);
    let grad: Vec<f64> = jet.grad.iter().map(|e| e.eval(&x)).collect();
    let gi = metric.inv(p);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = gi[i * n + j];
            if w == 0.0 {
                continue;
            }
            let mut v = if i < d && j < d { jet.hess[i * d + j].eval(&x) } else { 0.0 };
            for (kk, gk) in grad.iter().enumerate() {
                v -= curv.gamma(p, kk, i, j) * gk;
            }
            s += w * v;
        }
    }
    s
}

/// Forcings `s` with `Δφ* = h(φ*) + s_φ`, `Δ_conf X* = RHS(φ*) + s_X` and
/// `Δf* = q̃ φ*^{2n/(n−2)} + s_f`.
///
/// Derivatives of the targets are exact; `Δ_conf X*` differentiates the exact
/// `£_conf X*` once on the grid, so the forcing carries an `O(h²)` truncation.
pub fn mms_forcing(
    metric: &MetricField,
    curv: &CurvaturePack,
    data: &ConformalData,
    k: &ConformalConstants,
    targets: &MmsTargets,
) -> Result<Forcing> {
    let chart = metric.chart();
    let d = chart.dim();
    let n = metric.n();
    let nn = n * n;
    let len = chart.len();
    if targets.x.len() != n {
        return Err(ForgeError::Config(format!("X* needs {n} components, got {}", targets.x.len())));
    }
    if targets.f.is_some() && data.em.is_none() {
        return Err(ForgeError::Config("f* given without electromagnetic data".into()));
    }
    let s = targets.sample(chart);
    if let Some(p) = s.phi.iter().position(|v| !(*v > 0.0)) {
        return Err(ForgeError::Domain(format!("phi* not positive at node {p}")));
    }
    let phi_jet = Jet::new(&targets.phi, d);
    let x_grad: Vec<Vec<Expr>> = targets.x.iter().map(|e| (0..d).map(|a| e.diff(a)).collect()).collect();

    // Exact £_conf X* at nodes.
    let mut lie = vec![0.0; len * nn];
    for p in 0..len {
        let q = chart.coords(p);
        let g = metric.g(p);
        let gi = metric.inv(p);
        let xp = &s.x[p * n..(p + 1) * n];
        let grad = |a: usize, kk: usize| if a < d { x_grad[kk][a].eval(&q) } else { 0.0 };
        let mut div = 0.0;
        for kk in 0..d {
            let dlog = 0.5 * metric.dg(p, kk).iter().zip(gi).map(|(a, b)| a * b).sum::<f64>();
            div += grad(kk, kk) + xp[kk] * dlog;
        }
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for kk in 0..n {
                    if kk < d {
                        v += xp[kk] * metric.dg(p, kk)[i * n + j];
                    }
                    v += g[kk * n + j] * grad(i, kk) + g[i * n + kk] * grad(j, kk);
                }
                lie[p * nn + i * n + j] = v - 2.0 / n as f64 * div * g[i * n + j];
            }
        }
    }

    // Sources evaluated with the exact electric field when f* is present.
    let effective;
    let data = match (&targets.f, data.em.as_ref()) {
        (Some(fe), Some(em)) => {
            let grad: Vec<Expr> = (0..d).map(|a| fe.diff(a)).collect();
            let mut out = data.clone();
            for p in 0..len {
                let q = chart.coords(p);
                let e: Vec<f64> =
                    (0..n).map(|i| if i < d { grad[i].eval(&q) } else { 0.0 } + em.v[p * n + i]).collect();
                let (e2, e3, w2) = em_sources_at(metric, p, &e, &em.f_tilde[p * nn..(p + 1) * nn]);
                out.eps2[p] = e2;
                out.eps3[p] = e3;
                out.omega2[p * n..(p + 1) * n].copy_from_slice(&w2);
            }
            effective = out;
            &effective
        }
        _ => data,
    };

    let k2 = k_tilde_sq(metric, &lie, &data.u);
    let terms = data_terms(k, &curv.scalar, data, &k2);
    let phi_f = (0..len).map(|p| laplacian_exact(metric, curv, &phi_jet, p) - eval_terms(&terms, p, s.phi[p])).collect();

    let mut x_f = tensor_divergence(metric, &curv.christoffel, &lie);
    let rhs = momentum_rhs(&s.phi, data, k)?;
    x_f.iter_mut().zip(&rhs).for_each(|(a, r)| *a -= r);

    let f_f = match (&targets.f, data.em.as_ref()) {
        (Some(fe), Some(em)) => {
            let jet = Jet::new(fe, d);
            Some(
                (0..len)
                    .map(|p| laplacian_exact(metric, curv, &jet, p) - em.q_tilde[p] * rpow(s.phi[p], k.dtau_power()))
                    .collect(),
            )
        }
        _ => None,
    };
    Ok(Forcing { phi: phi_f, x: x_f, f: f_f })
}

/// Errors of one member run of a study.
#[derive(Debug, Clone)]
pub struct StudyRun {
    /// Representative mesh width.
    pub h: f64,
    pub errors: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct OrderRow {
    pub field: String,
    pub errors: Vec<f64>,
    /// Order between consecutive resolutions.
    pub orders: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OrderTable {
    pub resolutions: Vec<usize>,
    pub spacing: Vec<f64>,
    pub rows: Vec<OrderRow>,
}

impl OrderTable {
    pub fn row(&self, field: &str) -> Option<&OrderRow> {
        self.rows.iter().find(|r| r.field == field)
    }

    /// `field,res,h,error,order` lines; the first order of each field is empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("field,nodes,h,error,order\n");
        for r in &self.rows {
            for (i, e) in r.errors.iter().enumerate() {
                let o = if i == 0 { String::new() } else { format!("{:.17e}", r.orders[i - 1]) };
                s.push_str(&format!("{},{},{:.17e},{:.17e},{}\n", r.field, self.resolutions[i], self.spacing[i], e, o));
            }
        }
        s
    }
}

/// Runs `run` at every resolution and tabulates observed orders per field.
pub fn convergence_study<F>(resolutions: &[usize], mut run: F) -> Result<OrderTable>
where
    F: FnMut(usize) -> Result<StudyRun>,
{
    if resolutions.len() < 2 {
        return Err(ForgeError::Config("convergence study needs at least two resolutions".into()));
    }
    let mut sorted = resolutions.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != resolutions.len() {
        return Err(ForgeError::Config("convergence study resolutions must be distinct".into()));
    }
    let runs = resolutions.iter().map(|&r| run(r)).collect::<Result<Vec<_>>>()?;
    let fields: Vec<String> = runs[0].errors.iter().map(|(f, _)| f.clone()).collect();
    let mut rows = Vec::with_capacity(fields.len());
    for (fi, field) in fields.iter().enumerate() {
        let errors: Vec<f64> = runs
            .iter()
            .map(|r| {
                r.errors.get(fi).filter(|(f, _)| f == field).map(|(_, e)| *e).ok_or_else(|| {
                    ForgeError::Config(format!("run at h = {} does not report field {field}", r.h))
                })
            })
            .collect::<Result<_>>()?;
        let orders = (1..runs.len()).map(|i| observed_order(errors[i - 1], errors[i], runs[i - 1].h, runs[i].h)).collect();
        rows.push(OrderRow { field: field.clone(), errors, orders });
    }
    Ok(OrderTable { resolutions: resolutions.to_vec(), spacing: runs.iter().map(|r| r.h).collect(), rows })
}
