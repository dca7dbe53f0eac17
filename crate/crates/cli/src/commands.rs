//! Subcommand bodies. Each returns `Ok` on exit code 0.

use std::fmt::Write as _;
use std::path::Path;

use constraint_forge::barriers::{
    build_barriers, certify_barriers, check_hypotheses, smallness_lhs, sweep_tau0, BarrierPair, CertMode, Certificate,
    HypothesisReport, Route,
};
use constraint_forge::conformal_data::{assemble_data, ConformalConstants, ConformalData, DataOptions};
use constraint_forge::coupled::{
    em_update, solve_coupled_compact, solve_coupled_em, solve_coupled_exhaustion, CoupledContext, CoupledOptions, Mode,
    SolveSession,
};
use constraint_forge::geometry::{build_exhaustion, curvature, CurvaturePack, Domain, Exhaustion, MetricField};
use constraint_forge::lichnerowicz::LichnerowiczProblem;
use constraint_forge::momentum::k_tilde_sq;
use constraint_forge::operators::{
    assemble_conformal_killing_laplacian, assemble_laplace_beltrami, conformal_killing_operator, DiscreteOperator,
};
use constraint_forge::regularity::bootstrap_exponents;
use constraint_forge::spectral::{lambda1_conf, lambda1_schrodinger, SpectralEstimate};
use constraint_forge::verification::{
    constraint_residuals, convergence_study, inner_region, mms_forcing, reconstruct, ResidualReport, StudyRun,
};
use constraint_forge::{ForgeError, Result};

use crate::config::RunConfig;
use crate::output::{field_csv, num, read_field, sha256_hex, Report, Sink};

/// Residual norms skip this fraction of each Dirichlet axis at both ends.
pub const REGION_FRAC: f64 = 0.25;

/// Assembled inputs for one resolution.
pub struct Setup {
    pub metric: MetricField,
    pub curv: CurvaturePack,
    pub lap: DiscreteOperator,
    pub ckl: DiscreteOperator,
    pub data: ConformalData,
    pub k: ConformalConstants,
}

impl Setup {
    pub fn new(cfg: &RunConfig, nodes: Option<usize>) -> Result<Setup> {
        let metric = cfg.metric(nodes)?;
        let data = assemble_data(&metric, &cfg.data_exprs()?, DataOptions::default())?;
        let k = ConformalConstants::new(metric.n())?;
        Ok(Setup {
            curv: curvature(&metric),
            lap: assemble_laplace_beltrami(&metric),
            ckl: assemble_conformal_killing_laplacian(&metric),
            metric,
            data,
            k,
        })
    }

    fn ctx(&self, lambda1: Option<f64>) -> CoupledContext<'_> {
        CoupledContext {
            metric: &self.metric,
            curv: &self.curv,
            lap: &self.lap,
            ckl: &self.ckl,
            data: &self.data,
            k: self.k,
            lambda1,
            forcing: None,
        }
    }

    fn domain(&self) -> Domain {
        Domain::interior(self.metric.chart())
    }

    /// Data seen by the final iterate: the em pack replaces `ε₂, ε₃, ω₂`.
    fn effective_data(&self, f: Option<&[f64]>) -> ConformalData {
        match (f, self.data.em.is_some()) {
            (Some(f), true) => em_update(&self.metric, &self.data, f),
            _ => self.data.clone(),
        }
    }

    fn lambda1(&self, cfg: &RunConfig) -> Result<Option<f64>> {
        if self.metric.chart().all_periodic() {
            return Ok(None);
        }
        Ok(Some(lambda1_conf(&self.metric, &self.domain(), cfg.spectral_options())?.lambda))
    }

    fn barriers(&self, cfg: &RunConfig) -> Result<BarrierPair> {
        build_barriers(
            &self.lap,
            &self.curv,
            &self.data,
            &self.k,
            &self.domain(),
            cfg.route(),
            &cfg.barrier_options(),
            cfg.spectral_options(),
        )
    }

    fn residuals(&self, phi: &[f64], x: &[f64], f: Option<&[f64]>) -> Result<(f64, ResidualReport)> {
        let ids = reconstruct(&self.metric, phi, x, f, &self.data, &self.k)?;
        let region = inner_region(self.metric.chart(), REGION_FRAC);
        Ok((ids.trace_defect, constraint_residuals(&ids, &self.data, &self.k, 0.0, Some(&region))))
    }
}

/// Manifest: tool version, config digest, seed and every tolerance.
pub fn manifest(command: &str, cfg: &RunConfig, config_bytes: &[u8]) -> String {
    let s = &cfg.solver;
    let mut r = Report::new();
    r.text("command", command)
        .text("version", env!("CARGO_PKG_VERSION"))
        .text("config_sha256", sha256_hex(config_bytes))
        .text("seed", cfg.seed)
        .num("linear_tol", s.linear_tol)
        .num("picard_tol", s.picard_tol)
        .num("outer_tol", s.outer_tol)
        .text("max_outer", s.max_outer)
        .text("max_picard", s.max_picard)
        .num("spectral_tol", cfg.spectral.tol)
        .text("spectral_max_iter", cfg.spectral.max_iter)
        .num("cert_tol", cfg.barriers.cert_tol)
        .num("residual_region_fraction", REGION_FRAC);
    r.render()
}

fn coupled_options(cfg: &RunConfig) -> CoupledOptions {
    let s = &cfg.solver;
    CoupledOptions {
        tol: s.outer_tol,
        max_outer: s.max_outer,
        inner_ratio: s.picard_tol / s.outer_tol,
        max_picard: s.max_picard,
        linear_tol: s.linear_tol,
        shift: cfg.shift(),
    }
}

fn mode_tag(mode: Mode) -> &'static str {
    match mode {
        Mode::Compact => "compact",
        Mode::Exhaustion => "exhaustion",
        Mode::Electromagnetic => "electromagnetic",
    }
}

fn exhaustion(cfg: &RunConfig, s: &Setup) -> Result<Option<Exhaustion>> {
    cfg.exhaustion.as_ref().map(|e| build_exhaustion(s.metric.chart(), e.levels, e.shrink)).transpose()
}

fn certificate_report(r: &mut Report, c: &Certificate) {
    r.text("certificate.mode", if c.mode == CertMode::Posteriori { "posteriori" } else { "worst_case" })
        .text("certificate.route", c.route.tag())
        .num("certificate.super_margin", c.super_margin)
        .num("certificate.sub_margin", c.sub_margin)
        .num("certificate.k_bound", c.k_bound)
        .num("certificate.m_bound", c.m_bound)
        .num("certificate.tol", c.tol)
        .text("certificate.certified", c.certified());
}

fn hypothesis_report(r: &mut Report, h: &HypothesisReport) {
    r.num("hypotheses.a0", h.a0)
        .text("hypotheses.a0_node", h.a0_node)
        .opt("hypotheses.lambda1_conf", h.lambda1_conf)
        .text("hypotheses.eps_positive", h.eps_positive)
        .num("hypotheses.min_c", h.min_c)
        .text("hypotheses.tau_zero_nodes", h.tau_zero_nodes.len())
        .num("hypotheses.ricci_min", h.ricci_min)
        .num("hypotheses.ricci_h2", h.ricci_h2)
        .num("hypotheses.r_min", h.r_min)
        .opt("hypotheses.tau_far_min", h.tau_far_min)
        .opt("hypotheses.lambda_b0", h.lambda_b0)
        .opt("hypotheses.lambda_m", h.lambda_m);
}

fn residual_report(r: &mut Report, trace_defect: f64, res: &ResidualReport) {
    r.num("residual.hamiltonian_l2", res.ham.l2)
        .num("residual.hamiltonian_linf", res.ham.linf)
        .num("residual.momentum_l2", res.mom.l2)
        .num("residual.momentum_linf", res.mom.linf);
    if let Some(em) = &res.em {
        r.num("residual.electromagnetic_l2", em.l2).num("residual.electromagnetic_linf", em.linf);
    }
    r.num("residual.trace_defect", trace_defect);
}

fn uncertified(c: &Certificate) -> ForgeError {
    ForgeError::Hypothesis(format!(
        "barrier certificate failed: max H(phi+) = {:.3e}, min H(phi-) = {:.3e}",
        c.super_margin, c.sub_margin
    ))
}

pub fn solve(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let s = Setup::new(cfg, None)?;
    let chart = s.metric.chart();
    let n = s.metric.n();
    let dom = s.domain();
    let ex = exhaustion(cfg, &s)?;
    let lambda1 = s.lambda1(cfg)?;
    let hyp = check_hypotheses(&s.lap, &s.metric, &s.curv, &s.data, &s.k, &dom, ex.as_ref(), lambda1, None)?;
    let pair = s.barriers(cfg)?;
    let ctx = s.ctx(lambda1);
    let opts = coupled_options(cfg);
    let session: SolveSession = match &ex {
        Some(ex) => solve_coupled_exhaustion(&ctx, ex, Some(&pair), &opts)?,
        None if s.data.em.is_some() => solve_coupled_em(&ctx, &dom, &pair, &opts)?,
        None => solve_coupled_compact(&ctx, &dom, &pair, &opts)?,
    };
    let rec = session.last();
    let data = s.effective_data(rec.f.as_deref());
    let k2 = k_tilde_sq(&s.metric, &conformal_killing_operator(&s.metric, &rec.x), &data.u);
    let cert = certify_barriers(&pair, &s.lap, &s.metric, &s.curv, &data, &s.k, &dom, lambda1, Some(&k2), &cfg.cert_options())?;
    let (trace_defect, res) = s.residuals(&rec.phi, &rec.x, rec.f.as_deref())?;

    sink.write("phi.csv", &field_csv(chart, "phi", &rec.phi, 1))?;
    sink.write("x.csv", &field_csv(chart, "x", &rec.x, n))?;
    if let Some(f) = &rec.f {
        sink.write("f.csv", &field_csv(chart, "f", f, 1))?;
    }
    sink.write("phi_lower.csv", &field_csv(chart, "phi_lower", &pair.lower, 1))?;
    sink.write("phi_upper.csv", &field_csv(chart, "phi_upper", &pair.upper, 1))?;
    let mut outer = String::from("level,iterate,change,x_l2,picard_iterations\n");
    for l in &session.levels {
        for (j, (c, xn)) in l.outer.iter().zip(&l.x_norms).enumerate() {
            writeln!(outer, "{},{},{},{},{}", l.level, j + 1, num(*c), num(*xn), l.picard[j].iterations()).unwrap();
        }
    }
    sink.write("outer.csv", &outer)?;

    let mut r = Report::new();
    r.text("mode", mode_tag(session.mode))
        .text("route", pair.route.tag())
        .text("levels", session.levels.len())
        .text("outer_iterations", rec.outer.len())
        .num("final_change", rec.outer.last().copied().unwrap_or(f64::NAN))
        .num("lichnerowicz_residual", rec.lichnerowicz_residual)
        .num("phi_min", rec.phi.iter().copied().fold(f64::INFINITY, f64::min))
        .num("phi_max", rec.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .num("x_l2", rec.x_norms.last().copied().unwrap_or(0.0))
        .num("barrier_l", pair.l)
        .num("barrier_m", pair.m)
        .opt("lambda1_conf", lambda1);
    for (j, d) in session.cauchy.iter().enumerate() {
        r.num(format!("cauchy.{}", j + 1), *d);
    }
    residual_report(&mut r, trace_defect, &res);
    certificate_report(&mut r, &cert);
    sink.write("summary.txt", &r.render())?;
    let mut h = Report::new();
    hypothesis_report(&mut h, &hyp);
    sink.write("hypotheses.txt", &h.render())?;
    print!("{}", r.render());
    if cert.certified() {
        Ok(())
    } else {
        Err(uncertified(&cert))
    }
}

pub fn certify(cfg: &RunConfig, sink: &Sink, dump: Option<&Path>) -> Result<()> {
    let s = Setup::new(cfg, None)?;
    let chart = s.metric.chart();
    let n = s.metric.n();
    let nn = n * n;
    let dom = s.domain();
    let ex = exhaustion(cfg, &s)?;
    let lambda1 = s.lambda1(cfg)?;
    let spectral = matches!(cfg.route(), Route::Yamabe(_)).then(|| cfg.spectral_options());
    let hyp = check_hypotheses(&s.lap, &s.metric, &s.curv, &s.data, &s.k, &dom, ex.as_ref(), lambda1, spectral)?;
    let pair = s.barriers(cfg)?;
    let (data, k2) = match dump {
        Some(dir) => {
            let x = read_field(&dir.join("x.csv"), chart, n)?;
            let f = if s.data.em.is_some() { Some(read_field(&dir.join("f.csv"), chart, 1)?) } else { None };
            let data = s.effective_data(f.as_deref());
            let k2 = k_tilde_sq(&s.metric, &conformal_killing_operator(&s.metric, &x), &data.u);
            (data, Some(k2))
        }
        None => (s.data.clone(), None),
    };
    let cert =
        certify_barriers(&pair, &s.lap, &s.metric, &s.curv, &data, &s.k, &dom, lambda1, k2.as_deref(), &cfg.cert_options())?;
    let len = chart.len();
    let (k_super, k_sub) = match k2 {
        Some(k2) => (k2.clone(), k2),
        None => (
            (0..len).map(|p| 2.0 * (cert.m_bound + s.metric.norm2_tensor(p, &data.u[p * nn..(p + 1) * nn]))).collect(),
            vec![0.0; len],
        ),
    };
    let zero = vec![0.0; len];
    let margin = |kt: &[f64], phi: &[f64]| {
        let mut h = LichnerowiczProblem::from_data(&s.lap, dom.clone(), &s.k, &s.curv.scalar, &data, kt, zero.clone()).residual(phi);
        h.iter_mut().enumerate().filter(|(p, _)| !dom.is_free(*p)).for_each(|(_, v)| *v = 0.0);
        h
    };
    sink.write("margin_super.csv", &field_csv(chart, "h_phi_upper", &margin(&k_super, &pair.upper), 1))?;
    sink.write("margin_sub.csv", &field_csv(chart, "h_phi_lower", &margin(&k_sub, &pair.lower), 1))?;
    let mut r = Report::new();
    certificate_report(&mut r, &cert);
    hypothesis_report(&mut r, &hyp);
    sink.write("certificate.txt", &r.render())?;
    print!("{}", r.render());
    if cert.certified() {
        Ok(())
    } else {
        Err(uncertified(&cert))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EigenOperator {
    /// `−Δ_conf` on vector fields.
    Conf,
    /// `−Δ + c_n R` on functions.
    Schrodinger,
}

pub fn eigen(cfg: &RunConfig, sink: &Sink, op: EigenOperator) -> Result<()> {
    let metric = cfg.metric(None)?;
    let dom = Domain::interior(metric.chart());
    let e: SpectralEstimate = match op {
        EigenOperator::Conf => lambda1_conf(&metric, &dom, cfg.spectral_options())?,
        EigenOperator::Schrodinger => {
            let k = ConformalConstants::new(metric.n())?;
            let pot: Vec<f64> = curvature(&metric).scalar.iter().map(|r| k.cn() * r).collect();
            lambda1_schrodinger(&metric, &pot, &dom, cfg.spectral_options())?
        }
    };
    let mut r = Report::new();
    r.text("operator", e.tag).num("lambda", e.lambda).num("residual", e.residual).text("iterations", e.iterations);
    sink.write("eigen.txt", &r.render())?;
    print!("{}", r.render());
    Ok(())
}

pub fn verify(cfg: &RunConfig, sink: &Sink, dump: &Path) -> Result<()> {
    let s = Setup::new(cfg, None)?;
    let chart = s.metric.chart();
    let phi = read_field(&dump.join("phi.csv"), chart, 1)?;
    let x = read_field(&dump.join("x.csv"), chart, s.metric.n())?;
    let f = if s.data.em.is_some() { Some(read_field(&dump.join("f.csv"), chart, 1)?) } else { None };
    let (trace_defect, res) = s.residuals(&phi, &x, f.as_deref())?;
    let mut r = Report::new();
    residual_report(&mut r, trace_defect, &res);
    sink.write("verify.txt", &r.render())?;
    sink.write("hamiltonian_residual.csv", &field_csv(chart, "hamiltonian", &res.hamiltonian, 1))?;
    sink.write("momentum_residual.csv", &field_csv(chart, "momentum", &res.momentum, s.metric.n()))?;
    print!("{}", r.render());
    Ok(())
}

pub fn mms(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let m = cfg.mms.as_ref().ok_or_else(|| ForgeError::Config("mms needs an [mms] section".into()))?;
    let targets = cfg.mms_targets(m)?;
    let table = convergence_study(&m.resolutions, |nodes| {
        let mut s = Setup::new(cfg, Some(nodes))?;
        let chart = s.metric.chart();
        targets.impose_boundary(chart, &mut s.data);
        let exact = targets.sample(chart);
        let forcing = mms_forcing(&s.metric, &s.curv, &s.data, &s.k, &targets)?;
        let (lo, hi) = exact.phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let (lower, upper) = (m.lower.unwrap_or(0.8 * lo), m.upper.unwrap_or(1.25 * hi));
        let pair = BarrierPair {
            lower: vec![lower; chart.len()],
            upper: vec![upper; chart.len()],
            l: lower,
            m: upper,
            c: upper - 1.0,
            route: cfg.route(),
            certificate: None,
        };
        let mut ctx = s.ctx(None);
        ctx.forcing = Some(&forcing);
        let dom = s.domain();
        let opts = coupled_options(cfg);
        let session = if exact.f.is_some() {
            solve_coupled_em(&ctx, &dom, &pair, &opts)?
        } else {
            solve_coupled_compact(&ctx, &dom, &pair, &opts)?
        };
        let rec = session.last();
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let mut errors = vec![("phi".to_string(), sup(&rec.phi, &exact.phi)), ("x".to_string(), sup(&rec.x, &exact.x))];
        if let (Some(f), Some(fe)) = (&rec.f, &exact.f) {
            errors.push(("f".to_string(), sup(f, fe)));
        }
        Ok(StudyRun { h: chart.spacing(0), errors })
    })?;
    sink.write("mms_orders.csv", &table.to_csv())?;
    let mut r = Report::new();
    for row in &table.rows {
        for (j, o) in row.orders.iter().enumerate() {
            r.num(format!("order.{}.{}", row.field, j + 1), *o);
        }
        r.num(format!("error.{}.finest", row.field), row.errors.last().copied().unwrap_or(f64::NAN));
    }
    sink.write("mms.txt", &r.render())?;
    print!("{}", r.render());
    Ok(())
}

pub fn sweep(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| ForgeError::Config("sweep-tau0 needs a [sweep] section".into()))?;
    let s = Setup::new(cfg, None)?;
    let p = cfg.barriers.p.unwrap_or(2.0 * s.metric.n() as f64);
    let lhs = smallness_lhs(&s.metric, &s.curv, &s.data, p);
    let rep = sweep_tau0(&lhs, &s.data.tau, &s.domain().free_nodes(), (sw.lo, sw.hi), sw.steps, sw.c_target)?;
    let mut csv = String::from("tau0,min_c,pass\n");
    for row in &rep.rows {
        writeln!(csv, "{},{},{}", num(row.tau0), num(row.min_c), row.pass).unwrap();
    }
    sink.write("sweep.csv", &csv)?;
    let mut r = Report::new();
    r.opt("threshold", rep.threshold).text("monotone", rep.monotone).text("samples", rep.rows.len());
    sink.write("sweep.txt", &r.render())?;
    print!("{}", r.render());
    Ok(())
}

/// `"2 3 6, j_max=2"` for `n = 12`.
pub fn bootstrap(n: usize) -> Result<String> {
    if n < 3 {
        return Err(ForgeError::Config(format!("dimension {n} below 3")));
    }
    let l = bootstrap_exponents(n);
    Ok(format!("{}, j_max={}", l.render(), l.j_max))
}
