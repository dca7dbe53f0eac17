//! Global sub/supersolutions, their certification, and the hypothesis report.

use num_rational::Rational64;

use crate::conformal_data::{rpow, to_f64, ConformalConstants, ConformalData};
use crate::error::{ForgeError, Result};
use crate::geometry::{CurvaturePack, Domain, Exhaustion, MetricField};
use crate::lichnerowicz::{picard_solve, LichnerowiczProblem, PicardOptions, Start, Term};
use crate::operators::{DiscreteOperator, ShiftedSystem, SolveOptions};
use crate::regularity::bootstrap_exponents;
use crate::spectral::{lowest_eigenpair, zero_set, SpectralOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    LinearNonvacuum,
    Yamabe(YamabeChoice),
}

impl Route {
    pub fn tag(self) -> &'static str {
        match self {
            Route::LinearNonvacuum => "linear_nonvacuum",
            Route::Yamabe(YamabeChoice::RTau) => "yamabe_r_tau",
            Route::Yamabe(YamabeChoice::Eps3Tau) => "yamabe_eps3_tau",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YamabeChoice {
    /// `Δu = c_n R u + c_n r_n τ² u^σ`.
    RTau,
    /// `Δu = −2c_n ε₃ u + c_n r_n τ² u^σ`; needs `R ≤ 0`.
    Eps3Tau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertMode {
    WorstCase,
    Posteriori,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `max H(φ₊)` over free nodes; must be `≤ 0`.
    pub super_margin: f64,
    /// `min H(φ₋)` over free nodes; must be `≥ 0`.
    pub sub_margin: f64,
    /// Largest `|K̃|²` used.
    pub k_bound: f64,
    /// Scalar `M_bound` of the worst-case mode (0 in a posteriori mode).
    pub m_bound: f64,
    pub mode: CertMode,
    pub route: Route,
    pub tol: f64,
}

impl Certificate {
    pub fn certified(&self) -> bool {
        self.super_margin <= self.tol && self.sub_margin >= -self.tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierPair {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `min φ₋` over free nodes.
    pub l: f64,
    /// `max φ₊` over free nodes.
    pub m: f64,
    /// `sup v` of the supersolution solve.
    pub c: f64,
    pub route: Route,
    pub certificate: Option<Certificate>,
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Boundary value `c₊` of `v`.
    pub c_plus: f64,
    /// Boundary value `c₋` of `u` in the non-vacuum route.
    pub c_minus: f64,
    /// Boundary value `u₀` of the auxiliary Yamabe-type problem.
    pub u0: f64,
    pub linear_tol: f64,
    pub picard_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions { c_plus: 0.0, c_minus: 0.0, u0: 1.0, linear_tol: 1e-12, picard_tol: 1e-10 }
    }
}

fn fixed_values(domain: &Domain, c: f64) -> Vec<f64> {
    domain.mask().iter().map(|f| if *f { 0.0 } else { c }).collect()
}

/// Solves `(Δ − a) w = −Λ` on `domain` with `w = c` on fixed nodes.
pub fn linear_barrier(lap: &DiscreteOperator, domain: &Domain, a: &[f64], lambda: &[f64], c: f64, tol: f64) -> Result<Vec<f64>> {
    let sys = ShiftedSystem::new(lap, domain, Some(a));
    let rhs: Vec<f64> = lambda.iter().map(|v| -v).collect();
    Ok(sys.solve(&rhs, &fixed_values(domain, c), None, SolveOptions::with_tol(tol))?.0)
}

/// `a = c_n R + b_n τ²`.
pub fn barrier_shift(k: &ConformalConstants, r: &[f64], data: &ConformalData) -> Vec<f64> {
    r.iter().zip(&data.tau).map(|(r, t)| k.cn() * r + k.bn() * t * t).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supersolution {
    pub phi: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    /// `sup v`.
    pub c: f64,
}

/// `φ₊ = 1 + v` with `(Δ − a) v = −a`, `v = c₊` on fixed nodes.
pub fn build_supersolution(
    lap: &DiscreteOperator,
    curv: &CurvaturePack,
    data: &ConformalData,
    k: &ConformalConstants,
    domain: &Domain,
    opts: &BarrierOptions,
) -> Result<Supersolution> {
    let a = barrier_shift(k, &curv.scalar, data);
    if let Some(p) = domain.free_nodes().into_iter().find(|&p| !(a[p] > 0.0)) {
        return Err(ForgeError::Hypothesis(format!(
            "a = c_n R + b_n tau^2 = {:.6e} is not positive at node {p}",
            a[p]
        )));
    }
    let v = linear_barrier(lap, domain, &a, &a, opts.c_plus, opts.linear_tol)?;
    let c = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Supersolution { phi: v.iter().map(|x| 1.0 + x).collect(), v, a, c })
}

/// `Λ₋ = ½(ε₂+ε₃)` for `n ≤ 6`, `½ε₂` for `n > 6`.
pub fn lambda_minus(data: &ConformalData, n: usize) -> Vec<f64> {
    if n <= 6 {
        data.eps2.iter().zip(&data.eps3).map(|(a, b)| 0.5 * (a + b)).collect()
    } else {
        data.eps2.iter().map(|a| 0.5 * a).collect()
    }
}

/// Source bounding `H(φ₋)` from below: `2c_n(ε₂+ε₃)` for `n ≤ 6`, `2c_n ε₂` otherwise.
fn sign_source(data: &ConformalData, k: &ConformalConstants) -> Vec<f64> {
    let cn = k.cn();
    if k.dim() <= 6 {
        data.eps2.iter().zip(&data.eps3).map(|(a, b)| 2.0 * cn * (a + b)).collect()
    } else {
        data.eps2.iter().map(|a| 2.0 * cn * a).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsolution {
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
    pub alpha: f64,
}

/// `φ₋ = α u` with `(Δ − a) u = −Λ₋`, `u = c₋` on fixed nodes.
pub fn build_subsolution_nonvacuum(
    lap: &DiscreteOperator,
    a: &[f64],
    data: &ConformalData,
    k: &ConformalConstants,
    domain: &Domain,
    opts: &BarrierOptions,
) -> Result<Subsolution> {
    let lam = lambda_minus(data, k.dim());
    let free = domain.free_nodes();
    if let Some(&p) = free.iter().find(|&&p| !(lam[p] > 0.0)) {
        let which = if k.dim() <= 6 { "eps2 + eps3" } else { "eps2" };
        return Err(ForgeError::Vacuum(format!(
            "{which} vanishes at node {p}; use the yamabe subsolution route"
        )));
    }
    let u = linear_barrier(lap, domain, a, &lam, opts.c_minus, opts.linear_tol)?;
    let sup_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let src = sign_source(data, k);
    let ratio = free.iter().map(|&p| src[p] / lam[p]).fold(f64::INFINITY, f64::min);
    let alpha = 0.99 * (1.0 / sup_u).min(ratio);
    if let Some(&p) = free.iter().find(|&&p| !(u[p] > 0.0)) {
        return Err(ForgeError::Route(format!("auxiliary solution not positive at node {p}")));
    }
    Ok(Subsolution { phi: u.iter().map(|x| alpha * x).collect(), u, alpha })
}

/// Constant barriers `(u_lo, u_hi)` of `Δu = −a u + b u^σ` with boundary value `u0`.
pub fn yamabe_constant_barriers(a: &[f64], b: &[f64], sigma: Rational64, domain: &Domain, u0: f64) -> Result<(f64, f64)> {
    let e = 1.0 / (to_f64(sigma) - 1.0);
    let mut hi = u0;
    let mut lo = u0;
    for p in domain.free_nodes() {
        if b[p] > 0.0 {
            hi = hi.max((a[p].max(0.0) / b[p]).powf(e));
            lo = if a[p] > 0.0 { lo.min((a[p] / b[p]).powf(e)) } else { 0.0 };
        } else if a[p] > 0.0 {
            return Err(ForgeError::Route(format!(
                "a = {:.6e} > 0 where tau = 0 at node {p}: no constant supersolution",
                a[p]
            )));
        } else if a[p] < 0.0 {
            lo = 0.0;
        }
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct YamabeSubsolution {
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
    pub kappa: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub lambda_b0: Option<f64>,
    pub lambda_m: Option<f64>,
}

/// Maximal solution `u` of the Yamabe-type auxiliary equation, then `φ₋ = κ u`.
#[allow(clippy::too_many_arguments)]
pub fn build_subsolution_yamabe(
    lap: &DiscreteOperator,
    curv: &CurvaturePack,
    data: &ConformalData,
    k: &ConformalConstants,
    domain: &Domain,
    choice: YamabeChoice,
    opts: &BarrierOptions,
    spectral: SpectralOptions,
) -> Result<YamabeSubsolution> {
    let free = domain.free_nodes();
    let cn = k.cn();
    if free.iter().all(|&p| data.tau[p].abs() < 1e-10) {
        return Err(ForgeError::Hypothesis(
            "tau vanishes on every free node: B0 is the whole domain".into(),
        ));
    }
    let a: Vec<f64> = match choice {
        YamabeChoice::RTau => curv.scalar.iter().map(|r| -cn * r).collect(),
        YamabeChoice::Eps3Tau => {
            if let Some(&p) = free.iter().find(|&&p| curv.scalar[p] > 1e-10) {
                return Err(ForgeError::Hypothesis(format!(
                    "eps3_tau route needs R <= 0; R = {:.6e} at node {p}",
                    curv.scalar[p]
                )));
            }
            data.eps3.iter().map(|e| 2.0 * cn * e).collect()
        }
    };
    let b: Vec<f64> = data.tau.iter().map(|t| k.bn() * t * t).collect();
    let sigma = k.critical();
    let (mut lambda_b0, mut lambda_m) = (None, None);
    if opts.u0 == 0.0 {
        let pot: Vec<f64> = a.iter().map(|v| -v).collect();
        let b0 = zero_set(&data.tau, domain, 1e-10);
        let lb0 = lowest_eigenpair(lap, &b0, Some(&pot), "schrodinger_b0", spectral)?.lambda;
        let lm = lowest_eigenpair(lap, domain, Some(&pot), "schrodinger_m", spectral)?.lambda;
        lambda_b0 = Some(lb0);
        lambda_m = Some(lm);
        if !(lb0 > 0.0 && lm < 0.0) {
            return Err(ForgeError::Hypothesis(format!(
                "spectral signs fail: lambda1(B0) = {lb0:.6e} (needs > 0), lambda1(M) = {lm:.6e} (needs < 0)"
            )));
        }
    }
    let (u_lo, u_hi) = yamabe_constant_barriers(&a, &b, sigma, domain, opts.u0)?;
    let terms = vec![
        Term { name: "aux_a", coef: a, power: Rational64::from_integer(1), sign: -1.0 },
        Term { name: "aux_b", coef: b, power: sigma, sign: 1.0 },
    ];
    let boundary = fixed_values(domain, opts.u0);
    let problem = LichnerowiczProblem::from_terms(lap, domain.clone(), terms, boundary);
    let len = problem.len();
    let popts = PicardOptions { tol: opts.picard_tol, start: Start::Upper, ..Default::default() };
    let (u, _) = picard_solve(&problem, &vec![u_lo; len], &vec![u_hi; len], &popts)?;
    if let Some(&p) = free.iter().find(|&&p| !(u[p] > 0.0)) {
        return Err(ForgeError::Route(format!("auxiliary solution vanishes at node {p}")));
    }
    let sup_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kappa = 0.99 * 1f64.min(1.0 / sup_u);
    Ok(YamabeSubsolution { phi: u.iter().map(|x| kappa * x).collect(), u, kappa, u_lo, u_hi, lambda_b0, lambda_m })
}

/// Builds `φ₊` and then `φ₋` along `route`, checking `0 < φ₋ ≤ φ₊` on free nodes.
#[allow(clippy::too_many_arguments)]
pub fn build_barriers(
    lap: &DiscreteOperator,
    curv: &CurvaturePack,
    data: &ConformalData,
    k: &ConformalConstants,
    domain: &Domain,
    route: Route,
    opts: &BarrierOptions,
    spectral: SpectralOptions,
) -> Result<BarrierPair> {
    let sup = build_supersolution(lap, curv, data, k, domain, opts)?;
    let lower = match route {
        Route::LinearNonvacuum => build_subsolution_nonvacuum(lap, &sup.a, data, k, domain, opts)?.phi,
        Route::Yamabe(choice) => build_subsolution_yamabe(lap, curv, data, k, domain, choice, opts, spectral)?.phi,
    };
    let free = domain.free_nodes();
    for &p in &free {
        if !(lower[p] > 0.0) {
            return Err(ForgeError::Route(format!("subsolution not positive at node {p}")));
        }
        if lower[p] > sup.phi[p] {
            return Err(ForgeError::Route(format!("subsolution exceeds supersolution at node {p}")));
        }
    }
    let l = free.iter().map(|&p| lower[p]).fold(f64::INFINITY, f64::min);
    let m = free.iter().map(|&p| sup.phi[p]).fold(f64::NEG_INFINITY, f64::max);
    Ok(BarrierPair { lower, upper: sup.phi, l, m, c: sup.c, route, certificate: None })
}

/// `‖V‖_{L^q}` of a covector field over all nodes, with `|V|_γ` and the lumped mass.
pub fn covector_norm(metric: &MetricField, v: &[f64], q: f64) -> f64 {
    let n = metric.n();
    let mass = metric.mass();
    let s: f64 = (0..mass.len())
        .map(|p| {
            let w = &v[p * n..(p + 1) * n];
            mass[p] * metric.dot_covec(p, w, w).sqrt().powf(q)
        })
        .sum();
    s.powf(1.0 / q)
}

/// `max(‖V‖_{L²}, ‖V‖_{L^p})`.
pub fn interpolated_norm(metric: &MetricField, v: &[f64], p: f64) -> f64 {
    covector_norm(metric, v, 2.0).max(covector_norm(metric, v, p))
}

#[derive(Debug, Clone, Copy)]
pub struct CertOptions {
    /// Calibration constant of the pointwise `|£Y|²` bound.
    pub c_cert: f64,
    /// Integrability exponent `p`; `None` selects `2n`.
    pub p: Option<f64>,
    pub tol: f64,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions { c_cert: 1.0, p: None, tol: 1e-6 }
    }
}

/// `M_bound = (C/λ₁)[N_∇τ (1+c)^{2n/(n−2)} + N_ω1 (1+c)^{2(n+1)/(n−2)} + N_ω2]`,
/// `N = (j_max + 2) max(‖·‖_{L²}, ‖·‖_{L^p})`.
pub fn worst_case_m_bound(
    metric: &MetricField,
    data: &ConformalData,
    k: &ConformalConstants,
    lambda1: f64,
    c: f64,
    opts: &CertOptions,
) -> f64 {
    let p = opts.p.unwrap_or(2.0 * k.dim() as f64);
    let jmax = bootstrap_exponents(k.dim()).j_max as f64;
    let norm = |v: &[f64]| (jmax + 2.0) * interpolated_norm(metric, v, p);
    let m = 1.0 + c;
    opts.c_cert / lambda1
        * (norm(&data.dtau) * rpow(m, k.dtau_power()) + norm(&data.omega1) * rpow(m, k.omega1_power()) + norm(&data.omega2))
}

/// Evaluates `H(φ₊)` and `H(φ₋)`.
///
/// Worst case: `|K̃|² ≤ 2(M_bound + |U|²)` for `φ₊` and `|K̃|² = 0` for `φ₋`.
/// A posteriori: the supplied `|K̃(X)|²` for both.
#[allow(clippy::too_many_arguments)]
pub fn certify_barriers(
    pair: &BarrierPair,
    lap: &DiscreteOperator,
    metric: &MetricField,
    curv: &CurvaturePack,
    data: &ConformalData,
    k: &ConformalConstants,
    domain: &Domain,
    lambda1: Option<f64>,
    k_tilde_sq: Option<&[f64]>,
    opts: &CertOptions,
) -> Result<Certificate> {
    let len = pair.upper.len();
    let nn = k.dim() * k.dim();
    let (mode, m_bound, k_super, k_sub) = match k_tilde_sq {
        Some(kt) => (CertMode::Posteriori, 0.0, kt.to_vec(), kt.to_vec()),
        None => {
            let l1 = lambda1.filter(|l| *l > 0.0).ok_or_else(|| {
                ForgeError::Spectral("worst-case certification needs lambda1_conf > 0".into())
            })?;
            let mb = worst_case_m_bound(metric, data, k, l1, pair.c, opts);
            let ks = (0..len).map(|p| 2.0 * (mb + metric.norm2_tensor(p, &data.u[p * nn..(p + 1) * nn]))).collect();
            (CertMode::WorstCase, mb, ks, vec![0.0; len])
        }
    };
    let zero = vec![0.0; len];
    let sup_problem = LichnerowiczProblem::from_data(lap, domain.clone(), k, &curv.scalar, data, &k_super, zero.clone());
    let sub_problem = LichnerowiczProblem::from_data(lap, domain.clone(), k, &curv.scalar, data, &k_sub, zero);
    let hs = sup_problem.residual(&pair.upper);
    let hl = sub_problem.residual(&pair.lower);
    let free = domain.free_nodes();
    Ok(Certificate {
        super_margin: free.iter().map(|&p| hs[p]).fold(f64::NEG_INFINITY, f64::max),
        sub_margin: free.iter().map(|&p| hl[p]).fold(f64::INFINITY, f64::min),
        k_bound: free.iter().map(|&p| k_super[p]).fold(0.0, f64::max),
        m_bound,
        mode,
        route: pair.route,
        tol: opts.tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub a0: f64,
    pub a0_node: usize,
    pub lambda1_conf: Option<f64>,
    /// `ε₂+ε₃ > 0` (`n ≤ 6`) or `ε₂ > 0` (`n > 6`) on every free node.
    pub eps_positive: bool,
    pub smallness_lhs: Vec<f64>,
    pub min_c: f64,
    /// Free nodes with `τ = 0`, where no finite `C` exists.
    pub tau_zero_nodes: Vec<usize>,
    pub ricci_min: f64,
    pub ricci_h2: f64,
    pub r_min: f64,
    /// `min |τ|` off the innermost exhaustion level.
    pub tau_far_min: Option<f64>,
    pub lambda_b0: Option<f64>,
    pub lambda_m: Option<f64>,
}

impl HypothesisReport {
    /// `λ₁^{Δ−c_nR}(B₀) > 0` and `λ₁^{Δ−c_nR}(M) < 0`, when both were estimated.
    pub fn yamabe_spectral_ok(&self) -> Option<bool> {
        Some(self.lambda_b0? > 0.0 && self.lambda_m? < 0.0)
    }

    pub fn tau_far_ok(&self) -> Option<bool> {
        self.tau_far_min.map(|b| b > 0.0)
    }
}

/// Node-wise `|R| + N_∇τ + N_ω1 + N_ω2 + |U| + ε₁ + ε₂ + ε₃`, `N = max(‖·‖_{L²}, ‖·‖_{L^p})`.
pub fn smallness_lhs(metric: &MetricField, curv: &CurvaturePack, data: &ConformalData, p: f64) -> Vec<f64> {
    let nn = data.n * data.n;
    let norms = interpolated_norm(metric, &data.dtau, p)
        + interpolated_norm(metric, &data.omega1, p)
        + interpolated_norm(metric, &data.omega2, p);
    (0..metric.chart().len())
        .map(|q| {
            curv.scalar[q].abs()
                + norms
                + metric.norm2_tensor(q, &data.u[q * nn..(q + 1) * nn]).sqrt()
                + data.eps1[q]
                + data.eps2[q]
                + data.eps3[q]
        })
        .collect()
}

/// `(min C, τ = 0 nodes)` for `LHS ≤ C τ²` over `nodes`.
pub fn min_smallness_constant(lhs: &[f64], tau: &[f64], nodes: &[usize]) -> (f64, Vec<usize>) {
    let mut c: f64 = 0.0;
    let mut zeros = Vec::new();
    for &p in nodes {
        if tau[p].abs() < 1e-10 {
            zeros.push(p);
            c = f64::INFINITY;
        } else {
            c = c.max(lhs[p] / (tau[p] * tau[p]));
        }
    }
    (c, zeros)
}

#[allow(clippy::too_many_arguments)]
pub fn check_hypotheses(
    lap: &DiscreteOperator,
    metric: &MetricField,
    curv: &CurvaturePack,
    data: &ConformalData,
    k: &ConformalConstants,
    domain: &Domain,
    exhaustion: Option<&Exhaustion>,
    lambda1_conf: Option<f64>,
    spectral: Option<SpectralOptions>,
) -> Result<HypothesisReport> {
    let free = domain.free_nodes();
    let a = barrier_shift(k, &curv.scalar, data);
    let (a0_node, a0) = free
        .iter()
        .map(|&p| (p, a[p]))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let lam = lambda_minus(data, k.dim());
    let lhs = smallness_lhs(metric, curv, data, 2.0 * k.dim() as f64);
    let (min_c, tau_zero_nodes) = min_smallness_constant(&lhs, &data.tau, &free);
    let tau_far_min = exhaustion.map(|ex| {
        let inner = ex.interior_compact();
        free.iter()
            .filter(|&&p| !inner[p])
            .map(|&p| data.tau[p].abs())
            .fold(f64::INFINITY, f64::min)
    });
    let (mut lambda_b0, mut lambda_m) = (None, None);
    if let Some(sp) = spectral {
        let pot: Vec<f64> = curv.scalar.iter().map(|r| k.cn() * r).collect();
        lambda_b0 = Some(lowest_eigenpair(lap, &zero_set(&data.tau, domain, 1e-10), Some(&pot), "schrodinger_b0", sp)?.lambda);
        lambda_m = Some(lowest_eigenpair(lap, domain, Some(&pot), "schrodinger_m", sp)?.lambda);
    }
    Ok(HypothesisReport {
        a0,
        a0_node,
        lambda1_conf,
        eps_positive: free.iter().all(|&p| lam[p] > 0.0),
        smallness_lhs: lhs,
        min_c,
        tau_zero_nodes,
        ricci_min: curv.ricci_min,
        ricci_h2: curv.ricci_h2,
        r_min: free.iter().map(|&p| curv.scalar[p]).fold(f64::INFINITY, f64::min),
        tau_far_min,
        lambda_b0,
        lambda_m,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau0: f64,
    pub min_c: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Smallest sampled `τ₀` with `min C ≤ C_target`.
    pub threshold: Option<f64>,
    /// `min C` nonincreasing along the samples.
    pub monotone: bool,
}

/// Tabulates `min C` for `τ = τ₀ + τ̃` with `τ₀` on `steps` equispaced points of `[lo, hi]`.
///
/// `lhs` is the smallness left-hand side, which does not depend on `τ₀`.
pub fn sweep_tau0(lhs: &[f64], tau_tilde: &[f64], nodes: &[usize], range: (f64, f64), steps: usize, c_target: f64) -> Result<SweepReport> {
    let (lo, hi) = range;
    if steps == 0 || !(lo > 0.0) || !(hi >= lo) {
        return Err(ForgeError::Config(format!("empty tau0 range [{lo}, {hi}] with {steps} steps")));
    }
    let rows: Vec<SweepRow> = (0..steps)
        .map(|i| {
            let tau0 = if steps == 1 { lo } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 };
            let tau: Vec<f64> = tau_tilde.iter().map(|t| tau0 + t).collect();
            let (min_c, _) = min_smallness_constant(lhs, &tau, nodes);
            SweepRow { tau0, min_c, pass: min_c <= c_target }
        })
        .collect();
    let threshold = rows.iter().find(|r| r.pass).map(|r| r.tau0);
    let monotone = rows.windows(2).all(|w| w[1].min_c <= w[0].min_c);
    Ok(SweepReport { rows, threshold, monotone })
}
