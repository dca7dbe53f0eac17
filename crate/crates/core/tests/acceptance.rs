//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Every criterion writes its numeric results as an artifact file; the suite runs
//! twice with the same seed and criterion 11 compares the two artifact trees byte for byte.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use num_rational::Rational64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use constraint_forge::barriers::{
    build_barriers, certify_barriers, linear_barrier, BarrierOptions, BarrierPair, CertOptions, Certificate, Route,
};
use constraint_forge::conformal_data::{assemble_data, ConformalConstants, ConformalData, DataExprs, DataOptions};
use constraint_forge::coupled::{
    solve_coupled_compact, solve_coupled_exhaustion, CoupledContext, CoupledOptions, SolveSession,
};
use constraint_forge::expr::Expr;
use constraint_forge::geometry::{
    build_chart, build_exhaustion, curvature, BoundaryKind, CurvaturePack, Domain, MetricField, MetricGenerator,
    metric_from_generator,
};
use constraint_forge::lichnerowicz::{picard_solve, LichnerowiczProblem, PicardOptions, PicardTrace, Term};
use constraint_forge::momentum;
use constraint_forge::operators::{
    assemble_conformal_killing_laplacian, assemble_laplace_beltrami, conformal_killing_energy,
    conformal_killing_operator, DiscreteOperator, ShiftedSystem, SolveOptions,
};
use constraint_forge::regularity::{bootstrap_exponents, hs_feasible};
use constraint_forge::spectral::{lambda1_conf, lambda1_schrodinger, SpectralOptions};
use constraint_forge::verification::{
    constraint_residuals, inner_region, mms_forcing, observed_order, reconstruct, MmsTargets,
};

const SEED: u64 = 20_240_917;
const EPS_MP: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Outcome {
        Outcome { pass, detail }
    }

    fn error(e: impl std::fmt::Display) -> Outcome {
        Outcome { pass: false, detail: format!("error: {e}") }
    }
}

/// State shared between criteria: Picard traces for monotonicity and converged solves for certification.
#[derive(Default)]
struct Shared {
    traces: Vec<(String, PicardTrace)>,
    certificates: Vec<(String, Certificate)>,
}

struct Suite<'d> {
    dir: &'d Path,
    shared: Shared,
}

impl Suite<'_> {
    fn artifact(&self, name: &str, body: &str) {
        std::fs::write(self.dir.join(name), body).expect("artifact written");
    }
}

fn e17(v: f64) -> String {
    format!("{v:.17e}")
}

fn box2(nodes: usize) -> MetricField {
    let c = build_chart(2, &[1.0; 2], &[nodes; 2], &[BoundaryKind::Dirichlet; 2]).unwrap();
    metric_from_generator(&c, MetricGenerator::Flat, 3).unwrap()
}

fn sup_err(a: &[f64], b: &[f64], mask: impl Fn(usize) -> bool, ncomp: usize) -> f64 {
    (0..a.len()).filter(|c| mask(c / ncomp)).map(|c| (a[c] - b[c]).abs()).fold(0.0, f64::max)
}

// 1 ───────────────────────────────────────────────────────────────────────────

fn criterion_1(s: &mut Suite) -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut csv = String::from("nodes,h,error\n");
    for nodes in [17, 33, 65] {
        let c = build_chart(3, &[1.0; 3], &[nodes; 3], &[BoundaryKind::Periodic; 3]).unwrap();
        let m = metric_from_generator(&c, MetricGenerator::Flat, 3).unwrap();
        let op = assemble_laplace_beltrami(&m);
        let exact = c.eval(&Expr::parse("sin(2*pi*x)*sin(2*pi*y)*cos(2*pi*z)").unwrap());
        let k2 = 12.0 * std::f64::consts::PI.powi(2);
        let rhs: Vec<f64> = exact.iter().map(|u| -(k2 + 1.0) * u).collect();
        let ones = vec![1.0; c.len()];
        let sys = ShiftedSystem::new(&op, &Domain::interior(&c), Some(&ones));
        let u = match sys.solve(&rhs, &vec![0.0; c.len()], None, SolveOptions::with_tol(1e-12)) {
            Ok((u, _)) => u,
            Err(e) => return Outcome::error(e),
        };
        let err = sup_err(&u, &exact, |_| true, 1);
        writeln!(csv, "{nodes},{},{}", e17(c.spacing(0)), e17(err)).unwrap();
        rows.push((c.spacing(0), err));
    }
    s.artifact("c01_laplace_mms.csv", &csv);
    let orders: Vec<f64> = rows.windows(2).map(|w| observed_order(w[0].1, w[1].1, w[0].0, w[1].0)).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = orders.iter().all(|o| (1.7..=2.3).contains(o)) && secs < 30.0;
    Outcome::new(pass, format!("orders {:.3} {:.3}, {secs:.1} s", orders[0], orders[1]))
}

// 2 ───────────────────────────────────────────────────────────────────────────

fn criterion_2(s: &mut Suite) -> Outcome {
    let c = build_chart(3, &[1.0; 3], &[7; 3], &[BoundaryKind::Dirichlet; 3]).unwrap();
    let psi = Expr::parse("1+0.1*x*y+0.05*sin(pi*z)").unwrap();
    let m = metric_from_generator(&c, MetricGenerator::ConformallyFlat(psi), 3).unwrap();
    let op = assemble_conformal_killing_laplacian(&m);
    let sym = op.symmetry_defect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut worst_identity: f64 = 0.0;
    let mut csv = String::from("field,energy,identity_defect\n");
    for t in 0..20 {
        let x: Vec<f64> = (0..c.len() * 3)
            .map(|i| if c.on_boundary(i / 3) { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let q = conformal_killing_energy(&m, &x);
        let defect = (0.5 * q + op.pair(&x, &op.apply(&x))).abs();
        let rel = defect / (q + 1.0);
        worst_identity = worst_identity.max(rel);
        writeln!(csv, "{t},{},{}", e17(q), e17(defect)).unwrap();
    }
    // Translations and the dilation are conformal Killing for the flat metric.
    let flat = metric_from_generator(&c, MetricGenerator::Flat, 3).unwrap();
    let flat_op = assemble_conformal_killing_laplacian(&flat);
    let fields: Vec<Vec<f64>> = vec![
        (0..c.len()).flat_map(|_| [1.0, 0.0, 0.0]).collect(),
        (0..c.len()).flat_map(|_| [0.0, 0.0, 1.0]).collect(),
        (0..c.len())
            .flat_map(|p| {
                let q = c.coords(p);
                [q[0] - 0.5, q[1] - 0.5, q[2] - 0.5]
            })
            .collect(),
    ];
    let mut kernel: f64 = 0.0;
    for x in &fields {
        let lie = conformal_killing_operator(&flat, x);
        kernel = kernel.max(lie.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
        let ax = flat_op.apply(x);
        for p in (0..c.len()).filter(|p| !c.on_boundary(*p)) {
            kernel = kernel.max(ax[p * 3..p * 3 + 3].iter().fold(0.0, |a: f64, v| a.max(v.abs())));
        }
    }
    writeln!(csv, "symmetry,{},{}", e17(sym), e17(kernel)).unwrap();
    s.artifact("c02_ckl_structure.csv", &csv);
    let pass = sym <= 1e-10 && worst_identity <= 1e-8 && kernel <= 1e-8;
    Outcome::new(pass, format!("symmetry {sym:.2e}, identity {worst_identity:.2e}, kernel {kernel:.2e}"))
}

// 3 ───────────────────────────────────────────────────────────────────────────

/// Smallest eigenvalue of the free block of `S + B·diag(V)` against `B`, densely.
fn dense_lambda1(op: &DiscreteOperator, domain: &Domain, potential: Option<&[f64]>) -> f64 {
    let map = op.dof_map(domain);
    let nf = map.free.len();
    let k = op.ncomp();
    let dense_s = op.stiffness.to_dense();
    let mut s = DMatrix::zeros(nf, nf);
    let mut b = DMatrix::zeros(nf, nf);
    for (i, &gi) in map.free.iter().enumerate() {
        for (j, &gj) in map.free.iter().enumerate() {
            s[(i, j)] = dense_s[[gi, gj]];
            let (pi, pj) = (gi / k, gj / k);
            if pi == pj {
                let bij = if k == 1 { op.mass[pi] } else { op.mass_blocks[pi * k * k + (gi % k) * k + gj % k] };
                b[(i, j)] = bij;
                if let Some(v) = potential {
                    s[(i, j)] += bij * v[pi];
                }
            }
        }
    }
    let l = b.cholesky().expect("SPD mass").l();
    let li = l.try_inverse().expect("invertible factor");
    let c = &li * s * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    SymmetricEigen::new(c).eigenvalues.min()
}

fn criterion_3(s: &mut Suite) -> Outcome {
    let c = build_chart(3, &[1.0; 3], &[7; 3], &[BoundaryKind::Dirichlet; 3]).unwrap();
    let psi = Expr::parse("1+0.2*x*y*z+0.1*sin(pi*x)").unwrap();
    let m = metric_from_generator(&c, MetricGenerator::ConformallyFlat(psi), 3).unwrap();
    let dom = Domain::interior(&c);
    let opts = SpectralOptions { tol: 1e-10, max_iter: 5000, seed: SEED };
    let k = ConformalConstants::new(3).unwrap();
    let curv = curvature(&m);
    let pot: Vec<f64> = curv.scalar.iter().map(|r| k.cn() * r).collect();
    let conf = lambda1_conf(&m, &dom, opts);
    let schr = lambda1_schrodinger(&m, &pot, &dom, opts);
    let (conf, schr) = match (conf, schr) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
    };
    let dc = dense_lambda1(&assemble_conformal_killing_laplacian(&m), &dom, None);
    let ds = dense_lambda1(&assemble_laplace_beltrami(&m), &dom, Some(&pot));
    let rel_c = (conf.lambda - dc).abs() / dc.abs();
    let rel_s = (schr.lambda - ds).abs() / ds.abs();

    let big = build_chart(3, &[1.0; 3], &[33; 3], &[BoundaryKind::Dirichlet; 3]).unwrap();
    let flat = metric_from_generator(&big, MetricGenerator::Flat, 3).unwrap();
    let box_l = match lambda1_schrodinger(&flat, &vec![0.0; big.len()], &Domain::interior(&big), opts) {
        Ok(e) => e.lambda,
        Err(e) => return Outcome::error(e),
    };
    let exact = 3.0 * std::f64::consts::PI.powi(2);
    let rel_box = (box_l - exact).abs() / exact;
    let mut csv = String::from("problem,inverse_iteration,oracle\n");
    writeln!(csv, "conf,{},{}", e17(conf.lambda), e17(dc)).unwrap();
    writeln!(csv, "schrodinger,{},{}", e17(schr.lambda), e17(ds)).unwrap();
    writeln!(csv, "flat_box,{},{}", e17(box_l), e17(exact)).unwrap();
    s.artifact("c03_spectral.csv", &csv);
    let pass = rel_c <= 1e-8 && rel_s <= 1e-8 && rel_box <= 0.05;
    Outcome::new(pass, format!("conf {rel_c:.1e}, schrodinger {rel_s:.1e}, flat box {rel_box:.2e}"))
}

// 4 ───────────────────────────────────────────────────────────────────────────

fn bisect(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_4(s: &mut Suite) -> Outcome {
    let c = build_chart(2, &[1.0; 2], &[8; 2], &[BoundaryKind::Periodic; 2]).unwrap();
    let m = metric_from_generator(&c, MetricGenerator::Flat, 3).unwrap();
    let op = assemble_laplace_beltrami(&m);
    let k = ConformalConstants::new(3).unwrap();
    let dom = Domain::interior(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 4);
    let mut worst: f64 = 0.0;
    let mut csv = String::from("case,a_tau,a_k,a_eps2,a_eps3,root,picard\n");
    for case in 0..10 {
        let a_tau = rng.random_range(0.05..1.0);
        let a_k = rng.random_range(0.0..0.5);
        let a_e2 = rng.random_range(0.05..0.5);
        let a_e3 = rng.random_range(0.0..0.3);
        let coef = |v: f64| vec![v; c.len()];
        let terms = vec![
            Term { name: "A_tau", coef: coef(a_tau), power: k.critical(), sign: 1.0 },
            Term { name: "A_K", coef: coef(a_k), power: k.k_power(), sign: -1.0 },
            Term { name: "A_eps2", coef: coef(a_e2), power: Rational64::from_integer(-3), sign: -1.0 },
            Term { name: "A_eps3", coef: coef(a_e3), power: k.eps3_power(), sign: -1.0 },
        ];
        let h = |x: f64| a_tau * x.powi(5) - a_k * x.powi(-7) - a_e2 * x.powi(-3) - a_e3 * x.powi(-3);
        let root = bisect(h, 1e-3, 1e3);
        let problem = LichnerowiczProblem::from_terms(&op, dom.clone(), terms, vec![1.0; c.len()]);
        let (lo, hi) = (vec![0.8 * root; c.len()], vec![1.25 * root; c.len()]);
        let (phi, trace) = match picard_solve(&problem, &lo, &hi, &PicardOptions::default()) {
            Ok(r) => r,
            Err(e) => return Outcome::error(format!("case {case}: {e}")),
        };
        let err = phi.iter().map(|v| (v - root).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        writeln!(csv, "{case},{},{},{},{},{},{}", e17(a_tau), e17(a_k), e17(a_e2), e17(a_e3), e17(root), e17(phi[0]))
            .unwrap();
        let eps = EPS_MP * 1.25 * root;
        if trace.bracket_violation.iter().any(|b| *b > eps) {
            return Outcome::new(false, format!("case {case}: bracket violated"));
        }
        s.shared.traces.push((format!("constant case {case}"), trace));
    }
    s.artifact("c04_constant_roots.csv", &csv);
    Outcome::new(worst <= 1e-7, format!("max |phi - root| = {worst:.2e}"))
}

// 6 ───────────────────────────────────────────────────────────────────────────

struct Problem {
    metric: MetricField,
    curv: CurvaturePack,
    lap: DiscreteOperator,
    ckl: DiscreteOperator,
    data: ConformalData,
    k: ConformalConstants,
}

impl Problem {
    fn new(metric: MetricField, exprs: DataExprs) -> Problem {
        let curv = curvature(&metric);
        let lap = assemble_laplace_beltrami(&metric);
        let ckl = assemble_conformal_killing_laplacian(&metric);
        let data = assemble_data(&metric, &exprs, DataOptions::default()).unwrap();
        let k = ConformalConstants::new(metric.n()).unwrap();
        Problem { metric, curv, lap, ckl, data, k }
    }
}

fn constant_pair(len: usize, lo: f64, hi: f64) -> BarrierPair {
    BarrierPair {
        lower: vec![lo; len],
        upper: vec![hi; len],
        l: lo,
        m: hi,
        c: hi - 1.0,
        route: Route::LinearNonvacuum,
        certificate: None,
    }
}

fn mms_targets() -> MmsTargets {
    MmsTargets {
        phi: Expr::parse("1+0.1*sin(pi*x)*sin(pi*y)").unwrap(),
        x: vec![
            Expr::parse("0.05*sin(pi*x)*sin(2*pi*y)").unwrap(),
            Expr::parse("0.05*sin(2*pi*x)*sin(pi*y)").unwrap(),
            Expr::constant(0.0),
        ],
        f: None,
    }
}

fn mms_data() -> DataExprs {
    DataExprs {
        tau: Some(Expr::parse("1+0.2*x").unwrap()),
        eps2: Some(Expr::constant(0.1)),
        ..Default::default()
    }
}

fn criterion_6(s: &mut Suite) -> Outcome {
    let start = Instant::now();
    let targets = mms_targets();
    let mut errs = Vec::new();
    let mut rho: f64 = 0.0;
    let mut csv = String::from("nodes,phi_error,x_error,outer_iterations\n");
    for nodes in [17, 33] {
        let mut pb = Problem::new(box2(nodes), mms_data());
        targets.impose_boundary(pb.metric.chart(), &mut pb.data);
        let forcing = match mms_forcing(&pb.metric, &pb.curv, &pb.data, &pb.k, &targets) {
            Ok(f) => f,
            Err(e) => return Outcome::error(e),
        };
        let ctx = CoupledContext {
            metric: &pb.metric,
            curv: &pb.curv,
            lap: &pb.lap,
            ckl: &pb.ckl,
            data: &pb.data,
            k: pb.k,
            lambda1: None,
            forcing: Some(&forcing),
        };
        let chart = pb.metric.chart();
        let dom = Domain::interior(chart);
        let pair = constant_pair(chart.len(), 0.7, 1.5);
        let opts = CoupledOptions { tol: 1e-11, ..Default::default() };
        let session = match solve_coupled_compact(&ctx, &dom, &pair, &opts) {
            Ok(r) => r,
            Err(e) => return Outcome::error(format!("{nodes} nodes: {e}")),
        };
        let rec = session.last();
        let exact = targets.sample(chart);
        let ep = sup_err(&rec.phi, &exact.phi, |_| true, 1);
        let ex = sup_err(&rec.x, &exact.x, |_| true, 3);
        writeln!(csv, "{nodes},{},{},{}", e17(ep), e17(ex), rec.outer.len()).unwrap();
        errs.push((chart.spacing(0), ep, ex));
        rho = rho.max(rec.contraction_after(3).unwrap_or(0.0));
        for (j, t) in rec.picard.iter().enumerate() {
            s.shared.traces.push((format!("coupled mms {nodes} outer {j}"), t.clone()));
        }
    }
    s.artifact("c06_coupled_mms.csv", &csv);
    let op = observed_order(errs[0].1, errs[1].1, errs[0].0, errs[1].0);
    let ox = observed_order(errs[0].2, errs[1].2, errs[0].0, errs[1].0);
    let secs = start.elapsed().as_secs_f64();
    let pass = (1.7..=2.3).contains(&op) && (1.7..=2.3).contains(&ox) && rho < 0.9 && secs < 120.0;
    Outcome::new(pass, format!("orders phi {op:.3}, X {ox:.3}; rho {rho:.2e}; {secs:.1} s"))
}

// 7 ───────────────────────────────────────────────────────────────────────────

fn perturbed_cmc() -> DataExprs {
    DataExprs {
        tau: Some(Expr::parse("1+0.1*sin(pi*x)*sin(pi*y)").unwrap()),
        eps2: Some(Expr::parse("0.2+0.05*x").unwrap()),
        ..Default::default()
    }
}

/// Converged compact solve with barriers from the non-vacuum route.
fn converged(pb: &Problem, s: &mut Suite, label: &str) -> Result<(SolveSession, BarrierPair), String> {
    let chart = pb.metric.chart();
    let dom = Domain::interior(chart);
    let bopts = BarrierOptions { c_minus: 0.5, ..Default::default() };
    let pair = build_barriers(&pb.lap, &pb.curv, &pb.data, &pb.k, &dom, Route::LinearNonvacuum, &bopts, SpectralOptions::default())
        .map_err(|e| e.to_string())?;
    let ctx = CoupledContext {
        metric: &pb.metric,
        curv: &pb.curv,
        lap: &pb.lap,
        ckl: &pb.ckl,
        data: &pb.data,
        k: pb.k,
        lambda1: None,
        forcing: None,
    };
    let opts = CoupledOptions { tol: 1e-11, ..Default::default() };
    let session = solve_coupled_compact(&ctx, &dom, &pair, &opts).map_err(|e| e.to_string())?;
    let rec = session.last();
    for (j, t) in rec.picard.iter().enumerate() {
        s.shared.traces.push((format!("{label} outer {j}"), t.clone()));
    }
    let k2 = k_tilde_sq(pb, &rec.x);
    let cert = certify_barriers(&pair, &pb.lap, &pb.metric, &pb.curv, &pb.data, &pb.k, &dom, None, Some(&k2), &CertOptions::default())
        .map_err(|e| e.to_string())?;
    s.shared.certificates.push((label.to_string(), cert));
    Ok((session, pair))
}

fn k_tilde_sq(pb: &Problem, x: &[f64]) -> Vec<f64> {
    momentum::k_tilde_sq(&pb.metric, &conformal_killing_operator(&pb.metric, x), &pb.data.u)
}

fn criterion_7(s: &mut Suite) -> Outcome {
    let mut ham = Vec::new();
    let mut mom = Vec::new();
    let mut csv = String::from("nodes,ham_linf,mom_linf,ham_l2,mom_l2,trace_defect\n");
    for nodes in [17, 33, 65] {
        let pb = Problem::new(box2(nodes), perturbed_cmc());
        let (session, _) = match converged(&pb, s, &format!("cmc-perturbed {nodes}")) {
            Ok(r) => r,
            Err(e) => return Outcome::error(format!("{nodes} nodes: {e}")),
        };
        let rec = session.last();
        let ids = match reconstruct(&pb.metric, &rec.phi, &rec.x, None, &pb.data, &pb.k) {
            Ok(i) => i,
            Err(e) => return Outcome::error(e),
        };
        let region = inner_region(pb.metric.chart(), 0.25);
        let r = constraint_residuals(&ids, &pb.data, &pb.k, 0.0, Some(&region));
        writeln!(
            csv,
            "{nodes},{},{},{},{},{}",
            e17(r.ham.linf),
            e17(r.mom.linf),
            e17(r.ham.l2),
            e17(r.mom.l2),
            e17(r.trace_defect)
        )
        .unwrap();
        ham.push(r.ham.linf);
        mom.push(r.mom.linf);
    }
    // Trivial flat vacuum.
    let pb = Problem::new(box2(17), DataExprs::default());
    let len = pb.metric.chart().len();
    let ids = reconstruct(&pb.metric, &vec![1.0; len], &vec![0.0; len * 3], None, &pb.data, &pb.k).unwrap();
    let vac = constraint_residuals(&ids, &pb.data, &pb.k, 0.0, None);
    let vac_max = vac.ham.linf.max(vac.mom.linf);
    writeln!(csv, "vacuum,{},{},,,", e17(vac.ham.linf), e17(vac.mom.linf)).unwrap();
    s.artifact("c07_constraint_residuals.csv", &csv);
    let ratios: Vec<f64> = (0..2).flat_map(|i| [ham[i] / ham[i + 1], mom[i] / mom[i + 1]]).collect();
    let pass = ratios.iter().all(|r| *r >= 3.0) && vac_max <= 1e-10;
    Outcome::new(
        pass,
        format!(
            "ham ratios {:.2} {:.2}, mom ratios {:.2} {:.2}, vacuum {vac_max:.1e}",
            ratios[0], ratios[2], ratios[1], ratios[3]
        ),
    )
}

// 9 ───────────────────────────────────────────────────────────────────────────

fn criterion_9(s: &mut Suite) -> Outcome {
    let homogeneous = DataExprs {
        tau: Some(Expr::constant(1.0)),
        eps2: Some(Expr::constant(0.2)),
        ..Default::default()
    };
    // The linearized decay length is about 1.4, so the chart must be several lengths wide.
    let c = build_chart(2, &[20.0; 2], &[65; 2], &[BoundaryKind::Dirichlet; 2]).unwrap();
    let pb = Problem::new(metric_from_generator(&c, MetricGenerator::Flat, 3).unwrap(), homogeneous);
    let chart = pb.metric.chart();
    let ex = match build_exhaustion(chart, 3, 0.3) {
        Ok(e) => e,
        Err(e) => return Outcome::error(e),
    };
    let dom = Domain::interior(chart);
    let bopts = BarrierOptions { c_minus: 0.5, ..Default::default() };
    let pair = match build_barriers(&pb.lap, &pb.curv, &pb.data, &pb.k, &dom, Route::LinearNonvacuum, &bopts, SpectralOptions::default()) {
        Ok(p) => p,
        Err(e) => return Outcome::error(e),
    };
    let ctx = CoupledContext {
        metric: &pb.metric,
        curv: &pb.curv,
        lap: &pb.lap,
        ckl: &pb.ckl,
        data: &pb.data,
        k: pb.k,
        lambda1: None,
        forcing: None,
    };
    let session = match solve_coupled_exhaustion(&ctx, &ex, Some(&pair), &CoupledOptions { tol: 1e-11, ..Default::default() }) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    for rec in &session.levels {
        let k2 = k_tilde_sq(&pb, &rec.x);
        match certify_barriers(&pair, &pb.lap, &pb.metric, &pb.curv, &pb.data, &pb.k, &ex.domain(rec.level), None, Some(&k2), &CertOptions::default()) {
            Ok(c) => s.shared.certificates.push((format!("exhaustion level {}", rec.level), c)),
            Err(e) => return Outcome::error(e),
        }
    }
    let d = &session.cauchy;
    let mut csv = String::from("k,d_k\n");
    for (i, v) in d.iter().enumerate() {
        writeln!(csv, "{},{}", i + 1, e17(*v)).unwrap();
    }
    s.artifact("c09_exhaustion.csv", &csv);
    let pass = d.len() == 2 && d.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(pass, format!("d_k = {}", d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")))
}

// 8 ───────────────────────────────────────────────────────────────────────────

fn criterion_8(s: &mut Suite) -> Outcome {
    let m = box2(17);
    let c = m.chart().clone();
    let op = assemble_laplace_beltrami(&m);
    let dom = Domain::interior(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 8);
    let mut cap_excess = f64::NEG_INFINITY;
    let mut cmp_excess = f64::NEG_INFINITY;
    let mut csv = String::from("config,sup_v,cap,max_u_minus_v\n");
    for cfg in 0..10 {
        let (a0, a1) = (rng.random_range(0.1..2.0), rng.random_range(0.0..1.0));
        let (l0, l1) = (rng.random_range(0.0..3.0), rng.random_range(0.0..1.0));
        let cplus = rng.random_range(0.0..2.0);
        let phase = rng.random_range(0.0..6.0);
        let a: Vec<f64> = (0..c.len()).map(|p| a0 + a1 * (3.0 * c.coords(p)[0] + phase).sin().powi(2)).collect();
        let lam: Vec<f64> = (0..c.len()).map(|p| l0 + l1 * (2.0 * c.coords(p)[1] - phase).cos().abs()).collect();
        let v = match linear_barrier(&op, &dom, &a, &lam, cplus, 1e-13) {
            Ok(v) => v,
            Err(e) => return Outcome::error(e),
        };
        let cap = dom.free_nodes().iter().map(|&p| lam[p] / a[p]).fold(0.0, f64::max).max(cplus);
        let sup_v = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        cap_excess = cap_excess.max(sup_v - cap);
        let lam_minus: Vec<f64> = lam.iter().map(|l| 0.5 * l).collect();
        let u = linear_barrier(&op, &dom, &a, &lam_minus, 0.5 * cplus, 1e-13).unwrap();
        let d = u.iter().zip(&v).map(|(u, v)| u - v).fold(f64::NEG_INFINITY, f64::max);
        cmp_excess = cmp_excess.max(d);
        writeln!(csv, "{cfg},{},{},{}", e17(sup_v), e17(cap), e17(d)).unwrap();
    }
    let mut worst_super = f64::NEG_INFINITY;
    let mut worst_sub = f64::INFINITY;
    for (label, cert) in &s.shared.certificates {
        writeln!(csv, "{label},{},{},", e17(cert.super_margin), e17(cert.sub_margin)).unwrap();
        worst_super = worst_super.max(cert.super_margin);
        worst_sub = worst_sub.min(cert.sub_margin);
    }
    s.artifact("c08_barriers.csv", &csv);
    let pass = cap_excess <= 1e-8
        && cmp_excess <= 1e-10
        && !s.shared.certificates.is_empty()
        && worst_super <= 1e-6
        && worst_sub >= -1e-6;
    Outcome::new(
        pass,
        format!(
            "cap excess {cap_excess:.1e}, u - v {cmp_excess:.1e}, H(phi+) <= {worst_super:.2e}, H(phi-) >= {worst_sub:.2e} over {} solves",
            s.shared.certificates.len()
        ),
    )
}

// 5 ───────────────────────────────────────────────────────────────────────────

fn criterion_5(s: &mut Suite) -> Outcome {
    let traces = &s.shared.traces;
    let mut worst_decrease = f64::NEG_INFINITY;
    let mut worst_rho: f64 = 0.0;
    let mut csv = String::from("problem,iterations,max_decrease,rho\n");
    for (label, t) in traces {
        let dec = t.max_decrease.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rho = t.contraction().unwrap_or(0.0);
        worst_decrease = worst_decrease.max(dec);
        worst_rho = worst_rho.max(rho);
        writeln!(csv, "{label},{},{},{}", t.iterations(), e17(dec), e17(rho)).unwrap();
    }
    s.artifact("c05_monotone.csv", &csv);
    let pass = !traces.is_empty() && worst_decrease <= EPS_MP && worst_rho < 1.0;
    Outcome::new(pass, format!("{} traces, max decrease {worst_decrease:.1e}, max rho {worst_rho:.3}", traces.len()))
}

// 10 ──────────────────────────────────────────────────────────────────────────

fn criterion_10(s: &mut Suite) -> Outcome {
    let mut pass = true;
    let mut csv = String::from("n,ladder,j_max\n");
    for n in 3..=14usize {
        // Oracle: 1/p_j = 1/2 − 2j/n while p_{j−1} < n/2.
        let mut expected = vec![Rational64::from_integer(2)];
        let mut j = 1;
        while *expected.last().unwrap() < Rational64::new(n as i64, 2) {
            expected.push((Rational64::new(1, 2) - Rational64::new(2 * j, n as i64)).recip());
            j += 1;
        }
        let got = bootstrap_exponents(n);
        pass &= got.p == expected && got.j_max == expected.len() - 1;
        writeln!(csv, "{n},{},{}", got.render(), got.j_max).unwrap();
    }
    for n in 3..=16usize {
        let s_ok = Rational64::new(n as i64, 2) + Rational64::new(3, 2);
        pass &= hs_feasible(n, s_ok).dimension == (n < 13);
        let edge = Rational64::new(n as i64, 2) + 1;
        pass &= !hs_feasible(n, edge).index && hs_feasible(n, edge + Rational64::new(1, 1000)).index;
    }
    s.artifact("c10_ladders.csv", &csv);
    Outcome::new(pass, "n = 3..14 ladders, gates at n = 13 and s = n/2 + 1".into())
}

// Suite ───────────────────────────────────────────────────────────────────────

type Criterion = fn(&mut Suite) -> Outcome;

/// Run order differs from numbering: 5 and 8 consume solves recorded by 4, 6, 7 and 9.
const ORDER: [(usize, &str, Criterion); 10] = [
    (1, "operator accuracy", criterion_1),
    (2, "CKL structure", criterion_2),
    (3, "spectral oracle", criterion_3),
    (4, "constant-coefficient root", criterion_4),
    (6, "coupled MMS", criterion_6),
    (7, "constraint residuals", criterion_7),
    (9, "exhaustion stability", criterion_9),
    (8, "barrier lemmas", criterion_8),
    (5, "monotone iteration", criterion_5),
    (10, "index calculators", criterion_10),
];

fn run_suite(dir: &Path) -> Vec<(usize, &'static str, Outcome)> {
    let mut suite = Suite { dir, shared: Shared::default() };
    let mut out: Vec<_> = ORDER.iter().map(|(i, name, f)| (*i, *name, f(&mut suite))).collect();
    out.sort_by_key(|r| r.0);
    out
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .expect("artifact dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("artifact"))
        })
        .collect();
    files.sort();
    files
}

fn main() {
    // Honour `cargo test -- --list` and name filters without running the suite.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }
    let first = tempfile::tempdir().expect("tempdir");
    let second = tempfile::tempdir().expect("tempdir");
    let results = run_suite(first.path());
    let mut failed = 0;
    for (i, name, o) in &results {
        println!("criterion {i:>2} {:<28} {}  {}", name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    let _ = run_suite(second.path());
    let (a, b) = (tree(first.path()), tree(second.path()));
    let identical = !a.is_empty() && a == b;
    println!(
        "criterion 11 {:<28} {}  {} artifact files compared",
        "determinism",
        if identical { "PASS" } else { "FAIL" },
        a.len()
    );
    failed += usize::from(!identical);
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 11 criteria passed");
}
