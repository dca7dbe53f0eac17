//! Momentum constraint `Δ_conf X = RHS(φ)` for the longitudinal field `X`.

use crate::conformal_data::{rpow, ConformalConstants, ConformalData};
use crate::error::{ForgeError, Result};
use crate::geometry::{Domain, MetricField};
use crate::operators::{
    assemble_conformal_killing_laplacian, conformal_killing_operator, DiscreteOperator, LinearSolveReport,
    ShiftedSystem, SolveOptions,
};

/// Covector `r_n dτ φ^{2n/(n−2)} + ω₁ φ^{2(n+1)/(n−2)} − ω₂`.
pub fn momentum_rhs(phi: &[f64], data: &ConformalData, k: &ConformalConstants) -> Result<Vec<f64>> {
    let n = data.n;
    if let Some(p) = phi.iter().position(|v| !(*v > 0.0)) {
        return Err(ForgeError::Domain(format!("phi = {} not positive at node {p}", phi[p])));
    }
    let rn = k.rn();
    let mut out = vec![0.0; phi.len() * n];
    for (p, &f) in phi.iter().enumerate() {
        let pt = rpow(f, k.dtau_power());
        let pw = rpow(f, k.omega1_power());
        for i in 0..n {
            let c = p * n + i;
            out[c] = rn * data.dtau[c] * pt + data.omega1[c] * pw - data.omega2[c];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSolution {
    pub x: Vec<f64>,
    /// `£_conf X`, `n²` per node.
    pub lie: Vec<f64>,
    pub x_l2: f64,
    pub lie_l2: f64,
    pub rhs_l2: f64,
    pub report: LinearSolveReport,
    /// `‖RHS‖/λ₁` when λ₁ was supplied and the boundary data vanish.
    pub bound: Option<f64>,
}

impl MomentumSolution {
    /// `|K̃|² = |£X + U|²_γ` per node.
    pub fn k_tilde_sq(&self, metric: &MetricField, u: &[f64]) -> Vec<f64> {
        k_tilde_sq(metric, &self.lie, u)
    }
}

/// `|L + U|²_γ` per node for tensors stored `n²` per node.
pub fn k_tilde_sq(metric: &MetricField, lie: &[f64], u: &[f64]) -> Vec<f64> {
    let nn = metric.n() * metric.n();
    (0..metric.chart().len())
        .map(|p| {
            let t: Vec<f64> = (0..nn).map(|c| lie[p * nn + c] + u[p * nn + c]).collect();
            metric.norm2_tensor(p, &t)
        })
        .collect()
}

/// Reusable CKL solve on a fixed domain.
pub struct MomentumSolver<'a> {
    metric: &'a MetricField,
    op: &'a DiscreteOperator,
    system: ShiftedSystem<'a>,
    domain: Domain,
    lambda1: Option<f64>,
}

impl<'a> MomentumSolver<'a> {
    /// `lambda1` is the λ₁ of `-Δ_conf` on `domain`, if known; it arms the a posteriori bound.
    pub fn new(metric: &'a MetricField, op: &'a DiscreteOperator, domain: &Domain, lambda1: Option<f64>) -> Result<Self> {
        if metric.chart().all_periodic() {
            return Err(ForgeError::Spectral("conformal Killing Laplacian is singular on a periodic chart".into()));
        }
        if let Some(l) = lambda1 {
            if !(l > 0.0) {
                return Err(ForgeError::Spectral(format!("lambda1_conf = {l:.3e} is not positive")));
            }
        }
        let system = ShiftedSystem::new(op, domain, None);
        Ok(MomentumSolver { metric, op, system, domain: domain.clone(), lambda1 })
    }

    pub fn operator(&self) -> &DiscreteOperator {
        self.op
    }

    /// Solves `Δ_conf X = rhs` with `X = v` off the domain.
    pub fn solve_rhs(&self, rhs: &[f64], v: &[f64], guess: Option<&[f64]>, tol: f64) -> Result<MomentumSolution> {
        let n = self.metric.n();
        let (x, report) = self.system.solve(rhs, v, guess, SolveOptions::with_tol(tol))?;
        let lie = conformal_killing_operator(self.metric, &x);
        let mass = &self.op.mass;
        let x_l2 = self.op.inner(&x, &x).sqrt();
        let mut rhs2 = 0.0;
        let mut lie2 = 0.0;
        for p in 0..mass.len() {
            lie2 += mass[p] * self.metric.norm2_tensor(p, &lie[p * n * n..(p + 1) * n * n]);
            if self.domain.is_free(p) {
                let r = &rhs[p * n..(p + 1) * n];
                rhs2 += mass[p] * self.metric.dot_covec(p, r, r);
            }
        }
        let rhs_l2 = rhs2.sqrt();
        let homogeneous = (0..mass.len()).all(|p| self.domain.is_free(p) || v[p * n..(p + 1) * n].iter().all(|c| *c == 0.0));
        let bound = match (self.lambda1, homogeneous) {
            (Some(l), true) => {
                let b = rhs_l2 / l;
                if x_l2 > b * (1.0 + 1e-6) {
                    return Err(ForgeError::Spectral(format!(
                        "a posteriori bound violated: |X| = {x_l2:.6e} > |RHS|/lambda1 = {b:.6e}"
                    )));
                }
                Some(b)
            }
            _ => None,
        };
        Ok(MomentumSolution { x, lie, x_l2, lie_l2: lie2.sqrt(), rhs_l2, report, bound })
    }

    pub fn solve(
        &self,
        phi: &[f64],
        data: &ConformalData,
        k: &ConformalConstants,
        guess: Option<&[f64]>,
        tol: f64,
    ) -> Result<MomentumSolution> {
        let rhs = momentum_rhs(phi, data, k)?;
        self.solve_rhs(&rhs, &data.bc_v, guess, tol)
    }
}

/// One-shot momentum solve on `domain` with boundary values `v`.
pub fn solve_momentum(
    metric: &MetricField,
    phi: &[f64],
    data: &ConformalData,
    k: &ConformalConstants,
    domain: &Domain,
    lambda1: Option<f64>,
    tol: f64,
) -> Result<MomentumSolution> {
    let op = assemble_conformal_killing_laplacian(metric);
    MomentumSolver::new(metric, &op, domain, lambda1)?.solve(phi, data, k, None, tol)
}
