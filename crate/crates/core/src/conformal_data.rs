//! Free conformal data, dimensional constants and charged-fluid sources.

use num_rational::Rational64;

use crate::error::{ForgeError, Result};
use crate::expr::Expr;
use crate::geometry::{christoffel_from, MetricField};

/// Dimensional constants of the conformal system, kept as exact rationals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConformalConstants {
    pub n: i64,
    /// `a_n = 4(n-1)/(n-2)`.
    pub a_n: Rational64,
    /// `c_n = 1/a_n`: divides the `a_n Δφ` form into the unit-Laplacian form.
    pub c_n: Rational64,
    /// `b_n = c_n (n-1)/n`: the τ² coefficient after that division.
    pub b_n: Rational64,
    /// `r_n = (n-1)/n`, so that `c_n r_n = b_n`.
    pub r_n: Rational64,
}

impl ConformalConstants {
    pub fn new(n: usize) -> Result<ConformalConstants> {
        if n < 3 {
            return Err(ForgeError::Config(format!("symbolic dimension {n} < 3")));
        }
        let n = n as i64;
        let a_n = Rational64::new(4 * (n - 1), n - 2);
        let c_n = Rational64::new(n - 2, 4 * (n - 1));
        let r_n = Rational64::new(n - 1, n);
        Ok(ConformalConstants { n, a_n, c_n, b_n: c_n * r_n, r_n })
    }

    pub fn dim(&self) -> usize {
        self.n as usize
    }

    pub fn cn(&self) -> f64 {
        to_f64(self.c_n)
    }

    pub fn bn(&self) -> f64 {
        to_f64(self.b_n)
    }

    pub fn rn(&self) -> f64 {
        to_f64(self.r_n)
    }

    pub fn an(&self) -> f64 {
        to_f64(self.a_n)
    }

    fn ratio(&self, num: i64) -> Rational64 {
        Rational64::new(num, self.n - 2)
    }

    /// `(n+2)/(n-2)`.
    pub fn critical(&self) -> Rational64 {
        self.ratio(self.n + 2)
    }

    /// `-(3n-2)/(n-2)`.
    pub fn k_power(&self) -> Rational64 {
        self.ratio(-(3 * self.n - 2))
    }

    /// `(n-6)/(n-2)`.
    pub fn eps3_power(&self) -> Rational64 {
        self.ratio(self.n - 6)
    }

    /// `2n/(n-2)`.
    pub fn dtau_power(&self) -> Rational64 {
        self.ratio(2 * self.n)
    }

    /// `2(n+1)/(n-2)`.
    pub fn omega1_power(&self) -> Rational64 {
        self.ratio(2 * (self.n + 1))
    }

    /// `4/(n-2)`.
    pub fn metric_power(&self) -> Rational64 {
        self.ratio(4)
    }
}

pub fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `x^r`; integral exponents use repeated multiplication so `x^0 = 1` exactly.
pub fn rpow(x: f64, r: Rational64) -> f64 {
    if *r.denom() == 1 {
        x.powi(*r.numer() as i32)
    } else {
        x.powf(to_f64(r))
    }
}

/// Electromagnetic part of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct EmPack {
    /// `F̃_ij` at `p·n² + i·n + j`, antisymmetric.
    pub f_tilde: Vec<f64>,
    pub q_tilde: Vec<f64>,
    /// Covector `V` at `p·n + i`.
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformalData {
    pub n: usize,
    pub tau: Vec<f64>,
    /// Covector `dτ`, always computed from `tau`.
    pub dtau: Vec<f64>,
    /// Symmetric `U_ij` at `p·n² + i·n + j`.
    pub u: Vec<f64>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub eps3: Vec<f64>,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub em: Option<EmPack>,
    /// Dirichlet data for φ, X (vector) and f.
    pub bc_u: Vec<f64>,
    pub bc_v: Vec<f64>,
    pub bc_w: Vec<f64>,
    pub trace_residual: f64,
    pub div_residual: f64,
    pub non_tt: bool,
}

/// Expression form of the data; `None` entries read as zero.
#[derive(Debug, Clone, Default)]
pub struct DataExprs {
    pub tau: Option<Expr>,
    /// Row-major `n × n`.
    pub u: Option<Vec<Expr>>,
    pub eps1: Option<Expr>,
    pub eps2: Option<Expr>,
    pub eps3: Option<Expr>,
    pub omega1: Option<Vec<Expr>>,
    pub omega2: Option<Vec<Expr>>,
    pub em: Option<EmExprs>,
    pub bc_u: Option<Expr>,
    pub bc_v: Option<Vec<Expr>>,
    pub bc_w: Option<Expr>,
}

#[derive(Debug, Clone, Default)]
pub struct EmExprs {
    /// Row-major `n × n`; only the strict upper triangle is read.
    pub f: Option<Vec<Expr>>,
    pub q: Option<Expr>,
    pub v: Option<Vec<Expr>>,
}

#[derive(Debug, Clone, Copy)]
pub struct DataOptions {
    pub tt_tol: f64,
    pub trace_cap: f64,
    pub u_min: f64,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions { tt_tol: 1e-8, trace_cap: 1e6, u_min: 1e-12 }
    }
}

fn eval_opt(metric: &MetricField, e: &Option<Expr>, default: f64) -> Vec<f64> {
    match e {
        Some(e) => metric.chart().eval(e),
        None => vec![default; metric.chart().len()],
    }
}

fn eval_list(metric: &MetricField, es: &Option<Vec<Expr>>, ncomp: usize, what: &str) -> Result<Vec<f64>> {
    let len = metric.chart().len();
    let mut out = vec![0.0; len * ncomp];
    if let Some(es) = es {
        if es.len() != ncomp {
            return Err(ForgeError::Config(format!("{what}: expected {ncomp} components, got {}", es.len())));
        }
        for p in 0..len {
            let x = metric.chart().coords(p);
            for (c, e) in es.iter().enumerate() {
                out[p * ncomp + c] = e.eval(&x);
            }
        }
    }
    Ok(out)
}

/// Gradient covector of a scalar field.
pub fn gradient(metric: &MetricField, f: &[f64]) -> Vec<f64> {
    let chart = metric.chart();
    let n = metric.n();
    let mut out = vec![0.0; chart.len() * n];
    for a in 0..chart.dim() {
        let da = chart.partial(f, 1, a);
        for p in 0..chart.len() {
            out[p * n + a] = da[p];
        }
    }
    out
}

pub fn assemble_data(metric: &MetricField, exprs: &DataExprs, opts: DataOptions) -> Result<ConformalData> {
    let chart = metric.chart();
    let n = metric.n();
    let nn = n * n;
    let len = chart.len();
    let tau = eval_opt(metric, &exprs.tau, 0.0);
    let dtau = gradient(metric, &tau);
    let u = eval_list(metric, &exprs.u, nn, "U")?;
    for p in 0..len {
        for i in 0..n {
            for j in 0..i {
                if u[p * nn + i * n + j] != u[p * nn + j * n + i] {
                    return Err(ForgeError::Data(format!("U not symmetric at node {p}")));
                }
            }
        }
    }
    let eps1 = eval_opt(metric, &exprs.eps1, 0.0);
    let eps2 = eval_opt(metric, &exprs.eps2, 0.0);
    let eps3 = eval_opt(metric, &exprs.eps3, 0.0);
    for (name, f) in [("eps1", &eps1), ("eps2", &eps2), ("eps3", &eps3)] {
        if let Some(p) = f.iter().position(|v| !(*v >= 0.0)) {
            return Err(ForgeError::Data(format!("{name} = {} < 0 at node {p}", f[p])));
        }
    }
    let omega1 = eval_list(metric, &exprs.omega1, n, "omega1")?;
    let omega2 = eval_list(metric, &exprs.omega2, n, "omega2")?;
    let em = match &exprs.em {
        None => None,
        Some(e) => {
            let mut f = vec![0.0; len * nn];
            if let Some(fs) = &e.f {
                if fs.len() != nn {
                    return Err(ForgeError::Config(format!("em.F: expected {nn} components")));
                }
                for p in 0..len {
                    let x = chart.coords(p);
                    for i in 0..n {
                        for j in i + 1..n {
                            let v = fs[i * n + j].eval(&x);
                            f[p * nn + i * n + j] = v;
                            f[p * nn + j * n + i] = -v;
                        }
                    }
                }
            }
            Some(EmPack {
                f_tilde: f,
                q_tilde: eval_opt(metric, &e.q, 0.0),
                v: eval_list(metric, &e.v, n, "em.V")?,
            })
        }
    };
    let bc_u = eval_opt(metric, &exprs.bc_u, 1.0);
    for p in 0..len {
        if chart.on_boundary(p) && !(bc_u[p] >= opts.u_min) {
            return Err(ForgeError::Data(format!(
                "boundary value u = {} below u_min = {} at node {p}",
                bc_u[p], opts.u_min
            )));
        }
    }
    let bc_v = eval_list(metric, &exprs.bc_v, n, "bc.v")?;
    let bc_w = eval_opt(metric, &exprs.bc_w, 0.0);
    let (trace_residual, div_residual) = tt_residuals(metric, &u);
    if trace_residual > opts.trace_cap {
        return Err(ForgeError::Data(format!(
            "trace residual {trace_residual:.3e} above cap {:.3e}",
            opts.trace_cap
        )));
    }
    let non_tt = trace_residual > opts.tt_tol || div_residual > opts.tt_tol;
    Ok(ConformalData {
        n,
        tau,
        dtau,
        u,
        eps1,
        eps2,
        eps3,
        omega1,
        omega2,
        em,
        bc_u,
        bc_v,
        bc_w,
        trace_residual,
        div_residual,
        non_tt,
    })
}

/// Sup norms of `tr_γ U` and of `div_γ U` (the latter over non-boundary nodes).
pub fn tt_residuals(metric: &MetricField, u: &[f64]) -> (f64, f64) {
    let chart = metric.chart();
    let n = metric.n();
    let nn = n * n;
    let d = chart.dim();
    let trace = (0..chart.len())
        .map(|p| metric.trace(p, &u[p * nn..(p + 1) * nn]).abs())
        .fold(0.0, f64::max);
    if u.iter().all(|v| *v == 0.0) {
        return (trace, 0.0);
    }
    let gam = christoffel_from(chart, n, &all_inv(metric), metric.dg_field());
    let du: Vec<Vec<f64>> = (0..d).map(|a| chart.partial(u, nn, a)).collect();
    let n3 = nn * n;
    let mut div: f64 = 0.0;
    for p in 0..chart.len() {
        if chart.on_boundary(p) {
            continue;
        }
        let gi = metric.inv(p);
        let up = &u[p * nn..(p + 1) * nn];
        let g = &gam[p * n3..(p + 1) * n3];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..n {
                    // ∇_i U_kj = ∂_i U_kj − Γ^l_ik U_lj − Γ^l_ij U_kl
                    let mut cov = if i < d { du[i][p * nn + k * n + j] } else { 0.0 };
                    for l in 0..n {
                        cov -= g[l * nn + i * n + k] * up[l * n + j] + g[l * nn + i * n + j] * up[k * n + l];
                    }
                    s += gi[i * n + k] * cov;
                }
            }
            div = div.max(s.abs());
        }
    }
    (trace, div)
}

fn all_inv(metric: &MetricField) -> Vec<f64> {
    (0..metric.chart().len()).flat_map(|p| metric.inv(p).to_vec()).collect()
}

/// Removes the γ-trace: `U' = U − (tr_γ U / n) γ`. No transverse projection.
pub fn tt_project(u: &[f64], metric: &MetricField) -> Vec<f64> {
    let n = metric.n();
    let nn = n * n;
    let mut out = u.to_vec();
    for p in 0..metric.chart().len() {
        let tr = metric.trace(p, &u[p * nn..(p + 1) * nn]) / n as f64;
        let g = metric.g(p);
        for c in 0..nn {
            out[p * nn + c] -= tr * g[c];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidInputs {
    pub mu: Vec<f64>,
    /// Vector `ũ^i` at `p·n + i`.
    pub velocity: Vec<f64>,
    pub q: Vec<f64>,
    /// Scalar potential `f`.
    pub f: Vec<f64>,
    /// Covector `ϑ`.
    pub v: Vec<f64>,
    /// Antisymmetric `F̃_ij`.
    pub f_tilde: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidSources {
    pub eps1: Vec<f64>,
    pub omega1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub eps3: Vec<f64>,
    pub omega2: Vec<f64>,
    pub q_tilde: Vec<f64>,
}

/// `Ẽ = df + ϑ` as a covector field.
pub fn electric_field(metric: &MetricField, f: &[f64], v: &[f64]) -> Vec<f64> {
    let mut e = gradient(metric, f);
    for (ei, vi) in e.iter_mut().zip(v) {
        *ei += vi;
    }
    e
}

/// `ε₂ = ½|Ẽ|²`, `ε₃ = ¼|F̃|²`, `ω₂_k = F̃_ik Ẽ^i` at one node.
pub fn em_sources_at(metric: &MetricField, p: usize, e: &[f64], f_tilde: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = metric.n();
    let eps2 = 0.5 * metric.dot_covec(p, e, e);
    let eps3 = 0.25 * metric.norm2_tensor(p, f_tilde);
    let eu = metric.raise(p, e);
    let omega2 = (0..n).map(|k| (0..n).map(|i| f_tilde[i * n + k] * eu[i]).sum()).collect();
    (eps2, eps3, omega2)
}

pub fn sources_from_fluid(inputs: &FluidInputs, metric: &MetricField) -> Result<FluidSources> {
    let n = metric.n();
    let nn = n * n;
    let len = metric.chart().len();
    if let Some(p) = inputs.mu.iter().position(|m| !(*m >= 0.0)) {
        return Err(ForgeError::Data(format!("mu < 0 at node {p}")));
    }
    for p in 0..len {
        let f = &inputs.f_tilde[p * nn..(p + 1) * nn];
        for i in 0..n {
            for j in 0..=i {
                if f[i * n + j] != -f[j * n + i] {
                    return Err(ForgeError::Data(format!("F not antisymmetric at node {p}")));
                }
            }
        }
    }
    let e = electric_field(metric, &inputs.f, &inputs.v);
    let mut out = FluidSources {
        eps1: vec![0.0; len],
        omega1: vec![0.0; len * n],
        eps2: vec![0.0; len],
        eps3: vec![0.0; len],
        omega2: vec![0.0; len * n],
        q_tilde: vec![0.0; len],
    };
    for p in 0..len {
        let u = &inputs.velocity[p * n..(p + 1) * n];
        let u2 = metric.dot_vec(p, u, u);
        let lorentz = (1.0 + u2).sqrt();
        let mu = inputs.mu[p];
        out.eps1[p] = mu * (1.0 + u2);
        let ul = metric.lower(p, u);
        for k in 0..n {
            out.omega1[p * n + k] = mu * lorentz * ul[k];
        }
        let (e2, e3, w2) = em_sources_at(metric, p, &e[p * n..(p + 1) * n], &inputs.f_tilde[p * nn..(p + 1) * nn]);
        out.eps2[p] = e2;
        out.eps3[p] = e3;
        out.omega2[p * n..(p + 1) * n].copy_from_slice(&w2);
        out.q_tilde[p] = inputs.q[p] * lorentz;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_chart, metric_from_generator, BoundaryKind, MetricGenerator};

    fn flat(n: usize) -> MetricField {
        let c = build_chart(3, &[1.0; 3], &[5; 3], &[BoundaryKind::Dirichlet; 3]).unwrap();
        metric_from_generator(&c, MetricGenerator::Flat, n).unwrap()
    }

    #[test]
    fn constants_are_exact() {
        for n in 3..20 {
            let k = ConformalConstants::new(n).unwrap();
            assert_eq!(k.a_n * k.c_n, Rational64::from_integer(1));
            assert_eq!(k.b_n, k.c_n * k.r_n);
        }
        let k = ConformalConstants::new(3).unwrap();
        assert_eq!(k.c_n, Rational64::new(1, 8));
        assert_eq!(k.b_n, Rational64::new(1, 12));
        assert_eq!(k.k_power(), Rational64::from_integer(-7));
        assert_eq!(k.critical(), Rational64::from_integer(5));
        assert_eq!(k.eps3_power(), Rational64::from_integer(-3));
        assert!(ConformalConstants::new(2).is_err());
        let k6 = ConformalConstants::new(6).unwrap();
        assert_eq!(rpow(0.3, k6.eps3_power()), 1.0);
    }

    #[test]
    fn cmc_vacuum_has_zero_dtau() {
        let m = flat(3);
        let exprs = DataExprs { tau: Some(Expr::parse("1").unwrap()), ..Default::default() };
        let d = assemble_data(&m, &exprs, DataOptions::default()).unwrap();
        assert!(d.dtau.iter().all(|v| *v == 0.0));
        assert!(!d.non_tt);
    }

    #[test]
    fn dtau_only_along_x() {
        let m = flat(3);
        let exprs = DataExprs { tau: Some(Expr::parse("1+0.1*tanh(x)").unwrap()), ..Default::default() };
        let d = assemble_data(&m, &exprs, DataOptions::default()).unwrap();
        for p in 0..m.chart().len() {
            assert!(d.dtau[p * 3] > 0.0);
            assert!(d.dtau[p * 3 + 1].abs() < 1e-12);
            assert!(d.dtau[p * 3 + 2].abs() < 1e-12);
        }
    }

    #[test]
    fn non_traceless_u_is_flagged() {
        let m = flat(3);
        let u = ["1", "0", "0", "0", "2", "0", "0", "0", "3"].iter().map(|s| Expr::parse(s).unwrap()).collect();
        let exprs = DataExprs { u: Some(u), ..Default::default() };
        let d = assemble_data(&m, &exprs, DataOptions::default()).unwrap();
        assert!(d.non_tt);
        assert_eq!(d.trace_residual, 6.0);
    }

    #[test]
    fn negative_energy_density_is_rejected() {
        let m = flat(3);
        let exprs = DataExprs { eps2: Some(Expr::parse("x-0.5").unwrap()), ..Default::default() };
        assert!(matches!(assemble_data(&m, &exprs, DataOptions::default()), Err(ForgeError::Data(_))));
    }

    #[test]
    fn tt_project_examples() {
        let m = flat(3);
        let len = m.chart().len();
        let g: Vec<f64> = (0..len).flat_map(|p| m.g(p).to_vec()).collect();
        assert!(tt_project(&g, &m).iter().all(|v| v.abs() < 1e-15));
        let diag: Vec<f64> = (0..len).flat_map(|_| [1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]).collect();
        let out = tt_project(&diag, &m);
        assert_eq!(&out[..9], &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(tt_project(&out, &m), out);
    }

    fn fluid(m: &MetricField) -> FluidInputs {
        let len = m.chart().len();
        FluidInputs {
            mu: vec![0.0; len],
            velocity: vec![0.0; len * 3],
            q: vec![0.0; len],
            f: vec![0.0; len],
            v: vec![0.0; len * 3],
            f_tilde: vec![0.0; len * 9],
        }
    }

    #[test]
    fn fluid_rest_frame() {
        let m = flat(3);
        let mut inp = fluid(&m);
        inp.mu.iter_mut().for_each(|v| *v = 1.0);
        let s = sources_from_fluid(&inp, &m).unwrap();
        assert!(s.eps1.iter().all(|v| *v == 1.0));
        assert!(s.omega1.iter().chain(&s.eps2).chain(&s.eps3).chain(&s.omega2).chain(&s.q_tilde).all(|v| *v == 0.0));
    }

    #[test]
    fn fluid_electric_energy() {
        let m = flat(3);
        let mut inp = fluid(&m);
        for p in 0..m.chart().len() {
            inp.v[p * 3] = 2.0;
        }
        let s = sources_from_fluid(&inp, &m).unwrap();
        assert!(s.eps2.iter().all(|v| *v == 2.0));
    }

    #[test]
    fn fluid_moving_dust_matches_scalar_evaluation() {
        let m = flat(3);
        let mut inp = fluid(&m);
        let u = [1.0, 1.0, 1.0];
        for p in 0..m.chart().len() {
            inp.mu[p] = 2.0;
            inp.velocity[p * 3..p * 3 + 3].copy_from_slice(&u);
        }
        let s = sources_from_fluid(&inp, &m).unwrap();
        // |ũ|² = 3: ε₁ = 2·4 = 8, ω₁ = 2·2·ũ, |ω₁| = 4√3.
        let norm = (s.omega1[0].powi(2) + s.omega1[1].powi(2) + s.omega1[2].powi(2)).sqrt();
        assert_eq!(s.eps1[0], 8.0);
        assert!((norm - 4.0 * 3f64.sqrt()).abs() < 1e-14);
    }
}
