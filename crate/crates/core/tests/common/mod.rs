#![allow(dead_code)]

use constraint_forge::barriers::{BarrierPair, Route};
use constraint_forge::conformal_data::{assemble_data, ConformalConstants, ConformalData, DataExprs, DataOptions};
use constraint_forge::coupled::CoupledContext;
use constraint_forge::expr::Expr;
use constraint_forge::geometry::{
    build_chart, curvature, metric_from_generator, BoundaryKind, CurvaturePack, MetricField, MetricGenerator,
};
use constraint_forge::operators::{assemble_conformal_killing_laplacian, assemble_laplace_beltrami, DiscreteOperator};

pub fn expr(s: &str) -> Expr {
    Expr::parse(s).expect("valid expression")
}

pub fn flat_box(dim: usize, nodes: usize, n: usize) -> MetricField {
    let c = build_chart(dim, &vec![1.0; dim], &vec![nodes; dim], &vec![BoundaryKind::Dirichlet; dim]).unwrap();
    metric_from_generator(&c, MetricGenerator::Flat, n).unwrap()
}

pub fn curved_box(dim: usize, nodes: usize, psi: &str) -> MetricField {
    let c = build_chart(dim, &vec![1.0; dim], &vec![nodes; dim], &vec![BoundaryKind::Dirichlet; dim]).unwrap();
    metric_from_generator(&c, MetricGenerator::ConformallyFlat(expr(psi)), 3).unwrap()
}

/// Everything a coupled solve needs, owned.
pub struct Fixture {
    pub metric: MetricField,
    pub curv: CurvaturePack,
    pub lap: DiscreteOperator,
    pub ckl: DiscreteOperator,
    pub data: ConformalData,
    pub k: ConformalConstants,
}

impl Fixture {
    pub fn new(metric: MetricField, exprs: &DataExprs) -> Fixture {
        let curv = curvature(&metric);
        let lap = assemble_laplace_beltrami(&metric);
        let ckl = assemble_conformal_killing_laplacian(&metric);
        let data = assemble_data(&metric, exprs, DataOptions::default()).unwrap();
        let k = ConformalConstants::new(metric.n()).unwrap();
        Fixture { metric, curv, lap, ckl, data, k }
    }

    pub fn ctx(&self) -> CoupledContext<'_> {
        CoupledContext {
            metric: &self.metric,
            curv: &self.curv,
            lap: &self.lap,
            ckl: &self.ckl,
            data: &self.data,
            k: self.k,
            lambda1: None,
            forcing: None,
        }
    }
}

pub fn constant_pair(len: usize, lo: f64, hi: f64) -> BarrierPair {
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

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
