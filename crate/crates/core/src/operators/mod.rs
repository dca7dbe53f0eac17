//! Discrete Laplace–Beltrami and conformal Killing operators and their linear solves.
//!
//! Operators are stored as symmetric stiffness matrices `S` over all grid
//! degrees of freedom together with a lumped mass: the discrete operator is
//! `-M⁻¹ S` (scalar) or `-(M ⊗ γ)⁻¹ S` (vector). Rows of Dirichlet boundary
//! nodes are never used; unknowns are selected by a [`Domain`].

pub mod linear;

use std::io::Write;

use nalgebra::DMatrix;
use sprs::{CsMat, TriMat};

pub use linear::{LinearSolveReport, Method, SolveOptions};

use crate::error::{ForgeError, Result};
use crate::geometry::{BoundaryKind, Domain, GridChart, MetricField, MAX_GRID_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Scalar,
    Vector(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Periodic,
    Dirichlet,
    Mixed,
}

fn boundary_tag(chart: &GridChart) -> BoundaryTag {
    if chart.all_periodic() {
        BoundaryTag::Periodic
    } else if chart.all_dirichlet() {
        BoundaryTag::Dirichlet
    } else {
        BoundaryTag::Mixed
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub stiffness: CsMat<f64>,
    /// Lumped mass `√γ Π h` per node.
    pub mass: Vec<f64>,
    /// `M_p γ_p` blocks (vector operators only), `n²` per node.
    pub mass_blocks: Vec<f64>,
    pub block: BlockKind,
    pub boundary: BoundaryTag,
    pub symmetric: bool,
}

impl DiscreteOperator {
    pub fn dof(&self) -> usize {
        self.stiffness.rows()
    }

    pub fn ncomp(&self) -> usize {
        match self.block {
            BlockKind::Scalar => 1,
            BlockKind::Vector(n) => n,
        }
    }

    /// `S x`.
    pub fn stiffness_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        linear::matvec(&self.stiffness, x, &mut y);
        y
    }

    /// Scalar operator: `Δu = -M⁻¹ S u`. Vector operator: covector components of
    /// `Δ_conf X`, i.e. `-M⁻¹ S X`. Rows of Dirichlet boundary nodes are meaningless.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let k = self.ncomp();
        let mut y = self.stiffness_apply(x);
        for (i, v) in y.iter_mut().enumerate() {
            *v = -*v / self.mass[i / k];
        }
        y
    }

    /// Mass inner product `xᵀ B y` (`B = M` or `M ⊗ γ`).
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.block {
            BlockKind::Scalar => x.iter().zip(y).zip(&self.mass).map(|((a, b), m)| a * b * m).sum(),
            BlockKind::Vector(n) => {
                let mut s = 0.0;
                for p in 0..self.mass.len() {
                    let blk = &self.mass_blocks[p * n * n..(p + 1) * n * n];
                    for i in 0..n {
                        for j in 0..n {
                            s += x[p * n + i] * blk[i * n + j] * y[p * n + j];
                        }
                    }
                }
                s
            }
        }
    }

    /// Natural pairing `Σ_p M_p x_c y_c` of a field with a covector such as `apply(x)`.
    pub fn pair(&self, x: &[f64], y: &[f64]) -> f64 {
        let k = self.ncomp();
        x.iter().zip(y).enumerate().map(|(c, (a, b))| a * b * self.mass[c / k]).sum()
    }

    /// Applies `B` to `x`.
    pub fn mass_apply(&self, x: &[f64]) -> Vec<f64> {
        match self.block {
            BlockKind::Scalar => x.iter().zip(&self.mass).map(|(a, m)| a * m).collect(),
            BlockKind::Vector(n) => {
                let mut y = vec![0.0; x.len()];
                for p in 0..self.mass.len() {
                    let blk = &self.mass_blocks[p * n * n..(p + 1) * n * n];
                    for i in 0..n {
                        y[p * n + i] = (0..n).map(|j| blk[i * n + j] * x[p * n + j]).sum();
                    }
                }
                y
            }
        }
    }

    pub fn symmetry_defect(&self) -> f64 {
        linear::symmetry_defect(&self.stiffness)
    }

    /// Coordinate triplets `row col value`, one per line, row-major.
    pub fn dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (r, row) in self.stiffness.outer_iterator().enumerate() {
            for (c, v) in row.iter() {
                writeln!(w, "{r} {c} {v:.17e}")?;
            }
        }
        Ok(())
    }

    /// Free-degree-of-freedom map for a node domain.
    pub fn dof_map(&self, domain: &Domain) -> DofMap {
        DofMap::new(domain, self.ncomp())
    }

    /// `S_ff + diag(B_ff·shift)` restricted to free dofs; `shift` is per node.
    pub fn restricted(&self, map: &DofMap, shift: Option<&[f64]>) -> CsMat<f64> {
        let k = self.ncomp();
        let nf = map.free.len();
        let mut t = TriMat::new((nf, nf));
        for (fi, &g) in map.free.iter().enumerate() {
            let row = self.stiffness.outer_view(g).expect("row exists");
            for (c, v) in row.iter() {
                if let Some(fj) = map.local[c] {
                    t.add_triplet(fi, fj, *v);
                }
            }
            if let Some(a) = shift {
                let p = g / k;
                match self.block {
                    BlockKind::Scalar => t.add_triplet(fi, fi, self.mass[p] * a[p]),
                    BlockKind::Vector(n) => {
                        let i = g % k;
                        for j in 0..n {
                            let fj = map.local[p * n + j].expect("all components of a free node are free");
                            t.add_triplet(fi, fj, self.mass_blocks[p * n * n + i * n + j] * a[p]);
                        }
                    }
                }
            }
        }
        t.to_csr()
    }

    /// `-(S_fb · x_b)` for fixed values stored in the full vector `x`.
    pub fn boundary_coupling(&self, map: &DofMap, x: &[f64]) -> Vec<f64> {
        map.free
            .iter()
            .map(|&g| {
                let row = self.stiffness.outer_view(g).expect("row exists");
                -row.iter().filter(|(c, _)| map.local[*c].is_none()).map(|(c, v)| v * x[c]).sum::<f64>()
            })
            .collect()
    }
}

/// Free degrees of freedom of a domain, in increasing global order.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub free: Vec<usize>,
    pub local: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(domain: &Domain, ncomp: usize) -> DofMap {
        let nodes = domain.mask().len();
        let mut free = Vec::new();
        let mut local = vec![None; nodes * ncomp];
        for p in 0..nodes {
            if domain.is_free(p) {
                for c in 0..ncomp {
                    local[p * ncomp + c] = Some(free.len());
                    free.push(p * ncomp + c);
                }
            }
        }
        DofMap { free, local }
    }

    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&g| x[g]).collect()
    }

    pub fn scatter(&self, xf: &[f64], x: &mut [f64]) {
        for (v, &g) in xf.iter().zip(&self.free) {
            x[g] = *v;
        }
    }
}

/// Conservative flux-form `Δ_γ u = (1/√γ) ∂_i(√γ γ^{ij} ∂_j u)`.
///
/// Diagonal fluxes use arithmetic half-node averages of `√γ γ^{ii}`; cross
/// terms use centred mixed differences. The stiffness is symmetric, and an
/// M-matrix whenever `γ` is diagonal.
pub fn assemble_laplace_beltrami(metric: &MetricField) -> DiscreteOperator {
    let chart = metric.chart();
    let d = chart.dim();
    let n = metric.n();
    let len = chart.len();
    let vol = chart.cell_volume();
    let coef = |p: usize, i: usize, j: usize| metric.sqrt_det(p) * metric.inv(p)[i * n + j];
    let mut t = TriMat::with_capacity((len, len), len * (1 + 2 * d + 4 * d * (d - 1)));
    for p in 0..len {
        if chart.on_boundary(p) {
            continue;
        }
        for i in 0..d {
            let hi = chart.spacing(i);
            let w = vol / (hi * hi);
            let pp = chart.step(p, i, 1).expect("interior node");
            let pm = chart.step(p, i, -1).expect("interior node");
            let cp = 0.5 * (coef(p, i, i) + coef(pp, i, i));
            let cm = 0.5 * (coef(p, i, i) + coef(pm, i, i));
            t.add_triplet(p, p, w * (cp + cm));
            t.add_triplet(p, pp, -w * cp);
            t.add_triplet(p, pm, -w * cm);
            for j in 0..d {
                if j == i {
                    continue;
                }
                let w = vol / (4.0 * hi * chart.spacing(j));
                for (side, q) in [(1.0, pp), (-1.0, pm)] {
                    let c = side * coef(q, i, j);
                    if c == 0.0 {
                        continue;
                    }
                    let qp = chart.step(q, j, 1).expect("interior neighbour");
                    let qm = chart.step(q, j, -1).expect("interior neighbour");
                    t.add_triplet(p, qp, -w * c);
                    t.add_triplet(p, qm, w * c);
                }
            }
        }
    }
    DiscreteOperator {
        stiffness: t.to_csr(),
        mass: metric.mass(),
        mass_blocks: Vec::new(),
        block: BlockKind::Scalar,
        boundary: boundary_tag(chart),
        symmetric: true,
    }
}

const GAUSS: f64 = 0.211_324_865_405_187_1; // ½ − 1/(2√3)

/// Gauss-point data shared by the variational conformal Killing assembly and its energy.
struct GaussPoint {
    shape: Vec<f64>,
    /// `∂_a N_c` at `c·d + a`.
    dshape: Vec<f64>,
    weight: f64,
}

fn gauss_points(chart: &GridChart) -> Vec<GaussPoint> {
    let d = chart.dim();
    let corners = 1usize << d;
    let mut out = Vec::with_capacity(corners);
    for gbits in 0..corners {
        let xi: Vec<f64> = (0..d).map(|a| if gbits >> a & 1 == 1 { 1.0 - GAUSS } else { GAUSS }).collect();
        let mut shape = vec![0.0; corners];
        let mut dshape = vec![0.0; corners * d];
        for c in 0..corners {
            let f = |a: usize| if c >> a & 1 == 1 { xi[a] } else { 1.0 - xi[a] };
            shape[c] = (0..d).map(f).product();
            for a in 0..d {
                let s = if c >> a & 1 == 1 { 1.0 } else { -1.0 };
                let rest: f64 = (0..d).filter(|b| *b != a).map(f).product();
                dshape[c * d + a] = s * rest / chart.spacing(a);
            }
        }
        out.push(GaussPoint { shape, dshape, weight: chart.cell_volume() / corners as f64 });
    }
    out
}

/// Metric quantities interpolated to one Gauss point.
struct PointMetric {
    g: Vec<f64>,
    inv: Vec<f64>,
    sqrt_det: f64,
    /// `∂_a γ_ij` at `a·n² + ij`.
    dg: Vec<f64>,
    /// `∂_a ln √γ`.
    dlog: Vec<f64>,
}

fn point_metric(metric: &MetricField, corners: &[usize], gp: &GaussPoint) -> PointMetric {
    let n = metric.n();
    let d = metric.chart().dim();
    let nn = n * n;
    let mut g = vec![0.0; nn];
    let mut dg = vec![0.0; d * nn];
    for (c, &p) in corners.iter().enumerate() {
        let w = gp.shape[c];
        for (gi, v) in g.iter_mut().zip(metric.g(p)) {
            *gi += w * v;
        }
        for a in 0..d {
            for (k, v) in metric.dg(p, a).iter().enumerate() {
                dg[a * nn + k] += w * v;
            }
        }
    }
    let m = DMatrix::from_row_slice(n, n, &g);
    let chol = m.cholesky().expect("interpolated metric stays SPD");
    let sqrt_det = (0..n).map(|i| chol.l()[(i, i)]).product();
    let mi = chol.inverse();
    let mut inv = vec![0.0; nn];
    for i in 0..n {
        for j in 0..n {
            inv[i * n + j] = if i <= j { mi[(i, j)] } else { mi[(j, i)] };
        }
    }
    let dlog = (0..d)
        .map(|a| 0.5 * (0..nn).map(|k| inv[k] * dg[a * nn + k]).sum::<f64>())
        .collect();
    PointMetric { g, inv, sqrt_det, dg, dlog }
}

/// `£_conf` of the local basis field `X^m = N_c` at a Gauss point, as an `n × n` matrix.
fn basis_conformal_killing(pm: &PointMetric, n: usize, d: usize, shape: f64, dshape: &[f64], m: usize) -> Vec<f64> {
    let nn = n * n;
    let mut l = vec![0.0; nn];
    // div X = ∂_m N + N ∂_m ln√γ (only grid directions carry derivatives).
    let div = if m < d { dshape[m] + shape * pm.dlog[m] } else { 0.0 };
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            if m < d {
                v += shape * pm.dg[m * nn + i * n + j];
            }
            if i < d {
                v += pm.g[m * n + j] * dshape[i];
            }
            if j < d {
                v += pm.g[i * n + m] * dshape[j];
            }
            v -= 2.0 / n as f64 * div * pm.g[i * n + j];
            l[i * n + j] = v;
        }
    }
    l
}

fn raise_both(inv: &[f64], l: &[f64], n: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for b in 0..n {
            tmp[i * n + b] = (0..n).map(|a| inv[i * n + a] * l[a * n + b]).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|b| tmp[i * n + b] * inv[b * n + j]).sum();
        }
    }
    out
}

/// Variational conformal Killing Laplacian.
///
/// With `Q(X, Y) = Σ_cells Σ_gauss w √γ ⟨£_conf X, £_conf Y⟩_γ` on the Q1
/// interpolant, the stiffness is `S = ½ Q` and `Δ_conf = -(M ⊗ γ)⁻¹ S`.
/// Hence `⟨X, Δ_conf X⟩ = -½ Q(X, X)` holds identically.
pub fn assemble_conformal_killing_laplacian(metric: &MetricField) -> DiscreteOperator {
    let chart = metric.chart();
    let d = chart.dim();
    let n = metric.n();
    let len = chart.len();
    let corners_n = 1usize << d;
    let ldof = corners_n * n;
    let gps = gauss_points(chart);
    let origins = chart.cell_origins();
    let mut t = TriMat::with_capacity((len * n, len * n), origins.len() * ldof * ldof);
    let mut local = vec![0.0; ldof * ldof];
    for origin in &origins {
        let corners = chart.cell_corners(origin);
        local.iter_mut().for_each(|v| *v = 0.0);
        for gp in &gps {
            let pm = point_metric(metric, &corners, gp);
            let ls: Vec<Vec<f64>> = (0..ldof)
                .map(|alpha| {
                    let (c, m) = (alpha / n, alpha % n);
                    basis_conformal_killing(&pm, n, d, gp.shape[c], &gp.dshape[c * d..(c + 1) * d], m)
                })
                .collect();
            let raised: Vec<Vec<f64>> = ls.iter().map(|l| raise_both(&pm.inv, l, n)).collect();
            let w = 0.5 * gp.weight * pm.sqrt_det;
            for a in 0..ldof {
                for b in a..ldof {
                    let v: f64 = raised[a].iter().zip(&ls[b]).map(|(x, y)| x * y).sum();
                    local[a * ldof + b] += w * v;
                }
            }
        }
        for a in 0..ldof {
            let ga = corners[a / n] * n + a % n;
            for b in a..ldof {
                let gb = corners[b / n] * n + b % n;
                let v = local[a * ldof + b];
                t.add_triplet(ga, gb, v);
                if a != b {
                    t.add_triplet(gb, ga, v);
                }
            }
        }
    }
    let mass = metric.mass();
    let mut mass_blocks = vec![0.0; len * n * n];
    for p in 0..len {
        for (k, v) in metric.g(p).iter().enumerate() {
            mass_blocks[p * n * n + k] = mass[p] * v;
        }
    }
    DiscreteOperator {
        stiffness: t.to_csr(),
        mass,
        mass_blocks,
        block: BlockKind::Vector(n),
        boundary: boundary_tag(chart),
        symmetric: true,
    }
}

/// `Q(X, X) = Σ w √γ |£_conf X|²_γ` evaluated directly at the Gauss points.
pub fn conformal_killing_energy(metric: &MetricField, x: &[f64]) -> f64 {
    let chart = metric.chart();
    let d = chart.dim();
    let n = metric.n();
    let gps = gauss_points(chart);
    let mut total = 0.0;
    for origin in chart.cell_origins() {
        let corners = chart.cell_corners(&origin);
        for gp in &gps {
            let pm = point_metric(metric, &corners, gp);
            let mut l = vec![0.0; n * n];
            for (c, &p) in corners.iter().enumerate() {
                for m in 0..n {
                    let xv = x[p * n + m];
                    if xv == 0.0 {
                        continue;
                    }
                    let lb = basis_conformal_killing(&pm, n, d, gp.shape[c], &gp.dshape[c * d..(c + 1) * d], m);
                    for (li, v) in l.iter_mut().zip(&lb) {
                        *li += xv * v;
                    }
                }
            }
            let r = raise_both(&pm.inv, &l, n);
            total += gp.weight * pm.sqrt_det * r.iter().zip(&l).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    total
}

/// Node-wise `£_conf X = £_X γ − (2/n)(div X) γ` by second-order differences.
///
/// Output is `n²` per node; `tr_γ` of each node vanishes to roundoff.
pub fn conformal_killing_operator(metric: &MetricField, x: &[f64]) -> Vec<f64> {
    let chart = metric.chart();
    let d = chart.dim();
    let n = metric.n();
    let nn = n * n;
    let dx: Vec<Vec<f64>> = (0..d).map(|a| chart.partial(x, n, a)).collect();
    let mut out = vec![0.0; chart.len() * nn];
    for p in 0..chart.len() {
        let g = metric.g(p);
        let gi = metric.inv(p);
        let xp = &x[p * n..(p + 1) * n];
        let grad = |a: usize, k: usize| if a < d { dx[a][p * n + k] } else { 0.0 };
        let mut div = 0.0;
        for k in 0..d {
            let dlog = 0.5 * metric.dg(p, k).iter().zip(gi).map(|(a, b)| a * b).sum::<f64>();
            div += grad(k, k) + xp[k] * dlog;
        }
        let l = &mut out[p * nn..(p + 1) * nn];
        for i in 0..n {
            for j in i..n {
                let mut v = 0.0;
                for k in 0..n {
                    if k < d {
                        v += xp[k] * metric.dg(p, k)[i * n + j];
                    }
                    v += g[k * n + j] * grad(i, k) + g[i * n + k] * grad(j, k);
                }
                v -= 2.0 / n as f64 * div * g[i * n + j];
                l[i * n + j] = v;
                l[j * n + i] = v;
            }
        }
    }
    out
}

/// `div_γ X = (1/√γ) ∂_k(√γ X^k)` by second-order differences.
pub fn divergence(metric: &MetricField, x: &[f64]) -> Vec<f64> {
    let chart = metric.chart();
    let n = metric.n();
    let len = chart.len();
    let mut out = vec![0.0; len];
    for a in 0..chart.dim() {
        let w: Vec<f64> = (0..len).map(|p| metric.sqrt_det(p) * x[p * n + a]).collect();
        let dw = chart.partial(&w, 1, a);
        for p in 0..len {
            out[p] += dw[p] / metric.sqrt_det(p);
        }
    }
    out
}

pub use crate::conformal_data::gradient;

/// Cached restriction of `S + B·diag(a)` to a domain, for repeated solves.
#[derive(Debug, Clone)]
pub struct ShiftedSystem<'a> {
    op: &'a DiscreteOperator,
    map: DofMap,
    matrix: CsMat<f64>,
    singular: bool,
}

impl<'a> ShiftedSystem<'a> {
    /// Prepares `(Δ − a)` on `domain`. A fully periodic scalar operator with `a ≡ 0` is flagged singular.
    pub fn new(op: &'a DiscreteOperator, domain: &Domain, shift: Option<&[f64]>) -> ShiftedSystem<'a> {
        let map = op.dof_map(domain);
        let matrix = op.restricted(&map, shift);
        let has_fixed = map.free.len() < op.dof();
        let zero_shift = shift.is_none_or(|a| a.iter().all(|v| *v == 0.0));
        ShiftedSystem { op, map, matrix, singular: !has_fixed && zero_shift }
    }

    pub fn map(&self) -> &DofMap {
        &self.map
    }

    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    /// Solves `(Δ − a) x = r` (scalar) or `Δ_conf X − a X = r` (covector `r`)
    /// on free dofs; fixed dofs of the result are copied from `fixed`.
    pub fn solve(&self, r: &[f64], fixed: &[f64], guess: Option<&[f64]>, opts: SolveOptions) -> Result<(Vec<f64>, LinearSolveReport)> {
        let k = self.op.ncomp();
        let coupling = self.op.boundary_coupling(&self.map, fixed);
        let b: Vec<f64> = self
            .map
            .free
            .iter()
            .zip(&coupling)
            .map(|(&g, c)| -self.op.mass[g / k] * r[g] + c)
            .collect();
        if self.singular {
            let s: f64 = b.iter().sum();
            let scale: f64 = b.iter().map(|v| v.abs()).sum();
            if s.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(ForgeError::Singular(format!(
                    "compatibility violated: weighted rhs mean {s:.3e} on a closed domain with zero shift"
                )));
            }
        }
        let x0 = guess.map(|g| self.map.gather(g));
        let (xf, rep) = if self.op.symmetric {
            linear::conjugate_gradient(&self.matrix, &b, x0.as_deref(), opts)?
        } else {
            linear::bicgstab(&self.matrix, &b, x0.as_deref(), opts)?
        };
        let mut x = fixed.to_vec();
        self.map.scatter(&xf, &mut x);
        Ok((x, rep))
    }
}

/// One-shot `solve_linear` on the interior domain of the operator's chart.
pub fn solve_linear(
    op: &DiscreteOperator,
    chart: &GridChart,
    rhs: &[f64],
    fixed: &[f64],
    opts: SolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    if rhs.len() != op.dof() || fixed.len() != op.dof() {
        return Err(ForgeError::Config("rhs dimension does not match operator".into()));
    }
    ShiftedSystem::new(op, &Domain::interior(chart), None).solve(rhs, fixed, None, opts)
}

/// True when `chart` has a Dirichlet axis, i.e. fixed nodes exist.
pub fn has_boundary(chart: &GridChart) -> bool {
    (0..chart.dim()).any(|a| chart.kind(a) == BoundaryKind::Dirichlet)
}

/// Unit Q1 shape check used by tests: values sum to one at each Gauss point.
#[doc(hidden)]
pub fn gauss_partition_defect(chart: &GridChart) -> f64 {
    gauss_points(chart)
        .iter()
        .map(|g| (g.shape.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

#[allow(dead_code)]
const _: usize = MAX_GRID_DIM;
