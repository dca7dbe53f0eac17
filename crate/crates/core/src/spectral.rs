//! Smallest Dirichlet eigenvalues by inverse iteration.
//!
//! Both problems are generalized: `S x = λ B x` with `B` the lumped mass
//! (`M` for scalars, `M ⊗ γ` for vector fields). The reported residual is
//! `‖S x − λ B x‖₂ / ‖B x‖₂`.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprs::CsMat;

use crate::error::{ForgeError, Result};
use crate::geometry::{Domain, MetricField};
use crate::operators::linear::{self, SolveOptions};
use crate::operators::{assemble_conformal_killing_laplacian, assemble_laplace_beltrami, DiscreteOperator, DofMap};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub tag: &'static str,
    /// Eigenvector over all dofs, zero on fixed dofs, unit `B`-norm. Empty for the `+∞` sentinel.
    pub vector: Vec<f64>,
}

impl SpectralEstimate {
    fn infinite(tag: &'static str) -> SpectralEstimate {
        SpectralEstimate { lambda: f64::INFINITY, residual: 0.0, iterations: 0, tag, vector: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Stop once `residual / |λ| ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { tol: 1e-8, max_iter: 2000, seed: 0x5eed }
    }
}

/// `λ₁` of `-Δ_conf` with zero data off `domain`.
pub fn lambda1_conf(metric: &MetricField, domain: &Domain, opts: SpectralOptions) -> Result<SpectralEstimate> {
    if metric.chart().all_periodic() {
        return Err(ForgeError::Spectral("periodic chart: constant fields are conformal Killing".into()));
    }
    let op = assemble_conformal_killing_laplacian(metric);
    lowest_eigenpair(&op, domain, None, "conformal_killing_laplacian", opts)
}

/// `λ₁` of `-Δ + V` with zero data off `domain`. An empty domain yields `+∞`.
pub fn lambda1_schrodinger(
    metric: &MetricField,
    potential: &[f64],
    domain: &Domain,
    opts: SpectralOptions,
) -> Result<SpectralEstimate> {
    let op = assemble_laplace_beltrami(metric);
    lowest_eigenpair(&op, domain, Some(potential), "schrodinger", opts)
}

/// Inverse iteration on `S + B·diag(V)` restricted to `domain`.
///
/// The iteration runs on the shifted pencil `S + B·diag(V − σ)`,
/// `σ = min(0, min V)`, which is positive definite whenever fixed dofs exist.
pub fn lowest_eigenpair(
    op: &DiscreteOperator,
    domain: &Domain,
    potential: Option<&[f64]>,
    tag: &'static str,
    opts: SpectralOptions,
) -> Result<SpectralEstimate> {
    let map = op.dof_map(domain);
    let nf = map.free.len();
    if nf == 0 {
        return Ok(SpectralEstimate::infinite(tag));
    }
    let k = op.ncomp();
    let nodes: Vec<usize> = map.free.iter().step_by(k).map(|g| g / k).collect();
    let sigma = potential.map_or(0.0, |v| nodes.iter().map(|&p| v[p]).fold(0.0, f64::min));
    let shifted: Option<Vec<f64>> = potential.map(|v| v.iter().map(|x| x - sigma).collect());
    let a = op.restricted(&map, shifted.as_deref());
    let b = restricted_mass(op, &map);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..nf).map(|_| rng.random_range(0.5..1.5)).collect();
    normalize(&b, &mut x);
    let inner = SolveOptions { tol: 1e-13, max_iter: Some(20 * nf.max(50)) };
    let mut bx = vec![0.0; nf];
    let mut ax = vec![0.0; nf];
    for it in 1..=opts.max_iter {
        linear::matvec(&b, &x, &mut bx);
        let y = match linear::conjugate_gradient(&a, &bx, None, inner) {
            Ok((y, _)) => y,
            Err(ForgeError::LinearSolve { best, .. }) => best,
            Err(ForgeError::Singular(msg)) => {
                return Err(ForgeError::Spectral(format!("{tag}: pencil is singular ({msg})")))
            }
            Err(e) => return Err(e),
        };
        x = y;
        normalize(&b, &mut x);
        linear::matvec(&a, &x, &mut ax);
        linear::matvec(&b, &x, &mut bx);
        let mu = linear::dot(&x, &ax);
        let res: f64 = ax.iter().zip(&bx).map(|(p, q)| (p - mu * q).powi(2)).sum::<f64>().sqrt()
            / linear::dot(&bx, &bx).sqrt();
        let lambda = mu + sigma;
        if res <= opts.tol * lambda.abs().max(f64::MIN_POSITIVE) {
            let mut full = vec![0.0; op.dof()];
            map.scatter(&x, &mut full);
            return Ok(SpectralEstimate { lambda, residual: res, iterations: it, tag, vector: full });
        }
    }
    Err(ForgeError::Spectral(format!("{tag}: inverse iteration did not converge in {} iterations", opts.max_iter)))
}

fn restricted_mass(op: &DiscreteOperator, map: &DofMap) -> CsMat<f64> {
    let zero = DiscreteOperator {
        stiffness: CsMat::zero((op.dof(), op.dof())),
        mass: op.mass.clone(),
        mass_blocks: op.mass_blocks.clone(),
        block: op.block,
        boundary: op.boundary,
        symmetric: true,
    };
    zero.restricted(map, Some(&vec![1.0; op.mass.len()]))
}

fn normalize(b: &CsMat<f64>, x: &mut [f64]) {
    let mut bx = vec![0.0; x.len()];
    linear::matvec(b, x, &mut bx);
    let s = linear::dot(x, &bx).sqrt();
    x.iter_mut().for_each(|v| *v /= s);
}

/// `B₀ = {|τ| < tol}` restricted to `domain`.
pub fn zero_set(tau: &[f64], domain: &Domain, tol: f64) -> Domain {
    Domain::from_mask(domain.mask().iter().zip(tau).map(|(f, t)| *f && t.abs() < tol).collect())
}
