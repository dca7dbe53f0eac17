//! Structured single-chart grids, metric fields, curvature and exhaustion boxes.
//!
//! Node ordering is row-major with axis 0 slowest. The manifold dimension `n`
//! may exceed the grid dimension `d`; fields are then independent of the
//! trailing `n - d` coordinates and every coordinate derivative along them
//! vanishes. Tensor components are always stored with the full `n`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ForgeError, Result};
use crate::expr::Expr;

pub const MAX_GRID_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridChart {
    dim: usize,
    extents: [f64; MAX_GRID_DIM],
    nodes: [usize; MAX_GRID_DIM],
    kinds: [BoundaryKind; MAX_GRID_DIM],
    spacing: [f64; MAX_GRID_DIM],
    strides: [usize; MAX_GRID_DIM],
    len: usize,
}

/// Builds a chart. Spacing is `L/(N-1)` on Dirichlet axes and `L/N` on periodic ones.
pub fn build_chart(
    dim: usize,
    extents: &[f64],
    nodes: &[usize],
    kinds: &[BoundaryKind],
) -> Result<GridChart> {
    if !(2..=MAX_GRID_DIM).contains(&dim) {
        return Err(ForgeError::Config(format!("grid dimension {dim} outside 2..=3")));
    }
    if extents.len() != dim || nodes.len() != dim || kinds.len() != dim {
        return Err(ForgeError::Config(format!(
            "per-axis lists must have length {dim} (got {}, {}, {})",
            extents.len(),
            nodes.len(),
            kinds.len()
        )));
    }
    let mut c = GridChart {
        dim,
        extents: [1.0; MAX_GRID_DIM],
        nodes: [1; MAX_GRID_DIM],
        kinds: [BoundaryKind::Periodic; MAX_GRID_DIM],
        spacing: [1.0; MAX_GRID_DIM],
        strides: [0; MAX_GRID_DIM],
        len: 1,
    };
    for a in 0..dim {
        if nodes[a] < 3 {
            return Err(ForgeError::Config(format!("axis {a}: {} nodes, need at least 3", nodes[a])));
        }
        if !(extents[a] > 0.0 && extents[a].is_finite()) {
            return Err(ForgeError::Config(format!("axis {a}: extent {} must be positive", extents[a])));
        }
        c.extents[a] = extents[a];
        c.nodes[a] = nodes[a];
        c.kinds[a] = kinds[a];
        c.spacing[a] = match kinds[a] {
            BoundaryKind::Dirichlet => extents[a] / (nodes[a] - 1) as f64,
            BoundaryKind::Periodic => extents[a] / nodes[a] as f64,
        };
    }
    let mut stride = 1;
    for a in (0..dim).rev() {
        c.strides[a] = stride;
        stride *= nodes[a];
    }
    c.len = stride;
    Ok(c)
}

impl GridChart {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nodes(&self, axis: usize) -> usize {
        self.nodes[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extents[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn kind(&self, axis: usize) -> BoundaryKind {
        self.kinds[axis]
    }

    pub fn all_dirichlet(&self) -> bool {
        self.kinds[..self.dim].iter().all(|k| *k == BoundaryKind::Dirichlet)
    }

    pub fn all_periodic(&self) -> bool {
        self.kinds[..self.dim].iter().all(|k| *k == BoundaryKind::Periodic)
    }

    /// Product of the spacings.
    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn multi(&self, p: usize) -> [usize; MAX_GRID_DIM] {
        let mut m = [0; MAX_GRID_DIM];
        let mut r = p;
        for a in 0..self.dim {
            m[a] = r / self.strides[a];
            r %= self.strides[a];
        }
        m
    }

    pub fn index(&self, m: &[usize; MAX_GRID_DIM]) -> usize {
        (0..self.dim).map(|a| m[a] * self.strides[a]).sum()
    }

    pub fn coords(&self, p: usize) -> [f64; MAX_GRID_DIM] {
        let m = self.multi(p);
        let mut x = [0.0; MAX_GRID_DIM];
        for a in 0..self.dim {
            x[a] = m[a] as f64 * self.spacing[a];
        }
        x
    }

    pub fn center(&self) -> [f64; MAX_GRID_DIM] {
        let mut c = [0.0; MAX_GRID_DIM];
        for a in 0..self.dim {
            c[a] = 0.5 * self.extents[a];
        }
        c
    }

    /// Neighbour `off` steps along `axis`; wraps on periodic axes, `None` past a Dirichlet end.
    pub fn step(&self, p: usize, axis: usize, off: isize) -> Option<usize> {
        let n = self.nodes[axis] as isize;
        let i = ((p / self.strides[axis]) % self.nodes[axis]) as isize;
        let j = i + off;
        let j = match self.kinds[axis] {
            BoundaryKind::Periodic => j.rem_euclid(n),
            BoundaryKind::Dirichlet if (0..n).contains(&j) => j,
            BoundaryKind::Dirichlet => return None,
        };
        Some((p as isize + (j - i) * self.strides[axis] as isize) as usize)
    }

    pub fn on_boundary(&self, p: usize) -> bool {
        let m = self.multi(p);
        (0..self.dim).any(|a| {
            self.kinds[a] == BoundaryKind::Dirichlet && (m[a] == 0 || m[a] + 1 == self.nodes[a])
        })
    }

    /// Number of cells along `axis` (periodic axes close up).
    pub fn cells(&self, axis: usize) -> usize {
        match self.kinds[axis] {
            BoundaryKind::Periodic => self.nodes[axis],
            BoundaryKind::Dirichlet => self.nodes[axis] - 1,
        }
    }

    /// Corner node indices of the cell with lower corner `origin`, ordered by the bit pattern of the offset.
    pub fn cell_corners(&self, origin: &[usize; MAX_GRID_DIM]) -> Vec<usize> {
        let base = self.index(origin);
        (0..1usize << self.dim)
            .map(|bits| {
                let mut p = base;
                for a in 0..self.dim {
                    if bits >> a & 1 == 1 {
                        p = self.step(p, a, 1).expect("cell corner inside grid");
                    }
                }
                p
            })
            .collect()
    }

    /// All cell origins in row-major order.
    pub fn cell_origins(&self) -> Vec<[usize; MAX_GRID_DIM]> {
        let counts: Vec<usize> = (0..self.dim).map(|a| self.cells(a)).collect();
        let total: usize = counts.iter().product();
        (0..total)
            .map(|mut r| {
                let mut m = [0; MAX_GRID_DIM];
                for a in (0..self.dim).rev() {
                    m[a] = r % counts[a];
                    r /= counts[a];
                }
                m
            })
            .collect()
    }

    pub fn eval(&self, e: &Expr) -> Vec<f64> {
        (0..self.len).map(|p| e.eval(&self.coords(p))).collect()
    }

    /// Second-order first derivative of a field with `ncomp` interleaved components.
    ///
    /// Central differences inside and on periodic axes, one-sided three-point
    /// stencils at Dirichlet ends.
    pub fn partial(&self, field: &[f64], ncomp: usize, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; field.len()];
        if axis >= self.dim {
            return out;
        }
        let h = self.spacing[axis];
        for p in 0..self.len {
            let (w, nb): ([f64; 3], [usize; 3]) = match (self.step(p, axis, -1), self.step(p, axis, 1)) {
                (Some(m), Some(q)) => ([-0.5, 0.0, 0.5], [m, p, q]),
                (None, Some(q)) => {
                    let q2 = self.step(p, axis, 2).expect("3 nodes per axis");
                    ([-1.5, 2.0, -0.5], [p, q, q2])
                }
                (Some(m), None) => {
                    let m2 = self.step(p, axis, -2).expect("3 nodes per axis");
                    ([0.5, -2.0, 1.5], [m2, m, p])
                }
                (None, None) => unreachable!("axis has at least 3 nodes"),
            };
            for c in 0..ncomp {
                let v = w[0] * field[nb[0] * ncomp + c]
                    + w[1] * field[nb[1] * ncomp + c]
                    + w[2] * field[nb[2] * ncomp + c];
                out[p * ncomp + c] = v / h;
            }
        }
        out
    }

    /// Euclidean coordinate distance from the chart centre.
    pub fn radius(&self, p: usize) -> f64 {
        let x = self.coords(p);
        let c = self.center();
        (0..self.dim).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Set of nodes carrying unknowns; every other node holds fixed (Dirichlet) data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    free: Vec<bool>,
}

impl Domain {
    /// Non-boundary nodes of the chart (every node when fully periodic).
    pub fn interior(chart: &GridChart) -> Domain {
        Domain { free: (0..chart.len()).map(|p| !chart.on_boundary(p)).collect() }
    }

    pub fn from_mask(free: Vec<bool>) -> Domain {
        Domain { free }
    }

    pub fn is_free(&self, p: usize) -> bool {
        self.free[p]
    }

    pub fn mask(&self) -> &[bool] {
        &self.free
    }

    pub fn count(&self) -> usize {
        self.free.iter().filter(|f| **f).count()
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.free.len()).filter(|p| self.free[*p]).collect()
    }

    pub fn is_subset_of(&self, other: &Domain) -> bool {
        self.free.iter().zip(&other.free).all(|(a, b)| !a || *b)
    }
}

/// Nested centred boxes `Ω_1 ⊂⊂ … ⊂⊂ Ω_K = full box`.
#[derive(Debug, Clone)]
pub struct Exhaustion {
    chart: GridChart,
    boxes: Vec<([usize; MAX_GRID_DIM], [usize; MAX_GRID_DIM])>,
}

/// Level `k` (1-based) spans the fraction `1 - (K - k)·shrink` of each axis about the centre.
pub fn build_exhaustion(chart: &GridChart, levels: usize, shrink: f64) -> Result<Exhaustion> {
    if !chart.all_dirichlet() {
        return Err(ForgeError::Config("exhaustion needs Dirichlet boundaries on every axis".into()));
    }
    if levels == 0 {
        return Err(ForgeError::Config("exhaustion needs at least one level".into()));
    }
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(ForgeError::Config(format!("shrink factor {shrink} outside (0, 1)")));
    }
    let d = chart.dim();
    let mut boxes = Vec::with_capacity(levels);
    for k in 1..=levels {
        let frac = 1.0 - (levels - k) as f64 * shrink;
        if frac <= 0.0 {
            return Err(ForgeError::Config(format!("level {k} collapses (fraction {frac})")));
        }
        let mut lo = [0; MAX_GRID_DIM];
        let mut hi = [0; MAX_GRID_DIM];
        for a in 0..d {
            let last = (chart.nodes(a) - 1) as f64;
            let c = 0.5 * last;
            lo[a] = (c - 0.5 * frac * last).round().max(0.0) as usize;
            hi[a] = ((c + 0.5 * frac * last).round() as usize).min(chart.nodes(a) - 1);
            if hi[a] < lo[a] + 2 {
                return Err(ForgeError::Config(format!(
                    "level {k} collapses to fewer than 3 nodes on axis {a}"
                )));
            }
        }
        boxes.push((lo, hi));
    }
    for k in 1..levels {
        let (lo0, hi0) = boxes[k - 1];
        let (lo1, hi1) = boxes[k];
        if (0..d).any(|a| lo0[a] <= lo1[a] || hi0[a] >= hi1[a]) {
            return Err(ForgeError::Config(format!(
                "levels {k} and {} are not strictly nested at this resolution",
                k + 1
            )));
        }
    }
    Ok(Exhaustion { chart: chart.clone(), boxes })
}

impl Exhaustion {
    pub fn levels(&self) -> usize {
        self.boxes.len()
    }

    pub fn chart(&self) -> &GridChart {
        &self.chart
    }

    /// Index bounds of level `k` (1-based), inclusive.
    pub fn bounds(&self, k: usize) -> ([usize; MAX_GRID_DIM], [usize; MAX_GRID_DIM]) {
        self.boxes[k - 1]
    }

    /// Closed box mask of level `k`.
    pub fn mask(&self, k: usize) -> Vec<bool> {
        let (lo, hi) = self.boxes[k - 1];
        let d = self.chart.dim();
        (0..self.chart.len())
            .map(|p| {
                let m = self.chart.multi(p);
                (0..d).all(|a| m[a] >= lo[a] && m[a] <= hi[a])
            })
            .collect()
    }

    /// Unknowns of level `k`: the open box.
    pub fn domain(&self, k: usize) -> Domain {
        let (lo, hi) = self.boxes[k - 1];
        let d = self.chart.dim();
        Domain::from_mask(
            (0..self.chart.len())
                .map(|p| {
                    let m = self.chart.multi(p);
                    (0..d).all(|a| m[a] > lo[a] && m[a] < hi[a])
                })
                .collect(),
        )
    }

    /// The monitoring compact `Ω_1` (closed).
    pub fn interior_compact(&self) -> Vec<bool> {
        self.mask(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricGenerator {
    Flat,
    /// `γ = ψ^{4/(n-2)} δ`.
    ConformallyFlat(Expr),
    /// Row-major `d × d` block of expressions; trailing directions stay Euclidean.
    Custom(Vec<Expr>),
    /// Components supplied node by node.
    Explicit,
}

impl MetricGenerator {
    pub fn tag(&self) -> &'static str {
        match self {
            MetricGenerator::Flat => "flat",
            MetricGenerator::ConformallyFlat(_) => "conformally_flat",
            MetricGenerator::Custom(_) => "custom",
            MetricGenerator::Explicit => "explicit",
        }
    }
}

/// Node-wise SPD metric with cached inverse, `√γ` and first coordinate derivatives.
#[derive(Debug, Clone)]
pub struct MetricField {
    chart: GridChart,
    n: usize,
    generator: MetricGenerator,
    g: Vec<f64>,
    inv: Vec<f64>,
    sqrt_det: Vec<f64>,
    /// `∂_a γ_ij` at `(p·d + a)·n² + i·n + j`.
    dg: Vec<f64>,
}

pub fn metric_from_generator(chart: &GridChart, generator: MetricGenerator, n: usize) -> Result<MetricField> {
    let d = chart.dim();
    if n < d {
        return Err(ForgeError::Config(format!("manifold dimension {n} below grid dimension {d}")));
    }
    if matches!(generator, MetricGenerator::ConformallyFlat(_)) && n < 3 {
        return Err(ForgeError::Config("conformally flat generator needs n >= 3".into()));
    }
    if let MetricGenerator::Custom(ref es) = generator {
        if es.len() != d * d {
            return Err(ForgeError::Config(format!("custom metric needs {} expressions", d * d)));
        }
    }
    let nn = n * n;
    let len = chart.len();
    let mut g = vec![0.0; len * nn];
    for p in 0..len {
        let x = chart.coords(p);
        let gp = &mut g[p * nn..(p + 1) * nn];
        for i in 0..n {
            gp[i * n + i] = 1.0;
        }
        match &generator {
            MetricGenerator::Flat | MetricGenerator::Explicit => {}
            MetricGenerator::ConformallyFlat(psi) => {
                let w = psi.eval(&x).powf(4.0 / (n as f64 - 2.0));
                for i in 0..n {
                    gp[i * n + i] = w;
                }
            }
            MetricGenerator::Custom(es) => {
                for i in 0..d {
                    for j in 0..d {
                        gp[i * n + j] = es[i * d + j].eval(&x);
                    }
                }
                for i in 0..d {
                    for j in 0..i {
                        if gp[i * n + j] != gp[j * n + i] {
                            return Err(ForgeError::Metric {
                                node: p,
                                msg: format!("component ({i},{j}) differs from ({j},{i})"),
                            });
                        }
                    }
                }
            }
        }
    }
    MetricField::from_components(chart, n, generator, g)
}

impl MetricField {
    /// Wraps explicit node-wise components, validating symmetry and definiteness.
    pub fn from_components(chart: &GridChart, n: usize, generator: MetricGenerator, g: Vec<f64>) -> Result<MetricField> {
        let nn = n * n;
        let len = chart.len();
        if g.len() != len * nn {
            return Err(ForgeError::Config("metric component count mismatch".into()));
        }
        let mut inv = vec![0.0; len * nn];
        let mut sqrt_det = vec![0.0; len];
        for p in 0..len {
            let gp = &g[p * nn..(p + 1) * nn];
            if gp.iter().any(|v| !v.is_finite()) {
                return Err(ForgeError::Metric { node: p, msg: "non-finite component".into() });
            }
            let m = DMatrix::from_row_slice(n, n, gp);
            if m != m.transpose() {
                return Err(ForgeError::Metric { node: p, msg: "not symmetric".into() });
            }
            let chol = m.clone().cholesky().ok_or_else(|| ForgeError::Metric {
                node: p,
                msg: "not positive definite".into(),
            })?;
            let l = chol.l();
            sqrt_det[p] = (0..n).map(|i| l[(i, i)]).product();
            let mi = chol.inverse();
            let ip = &mut inv[p * nn..(p + 1) * nn];
            for i in 0..n {
                for j in 0..n {
                    // Exact symmetry of the stored inverse.
                    ip[i * n + j] = if i <= j { mi[(i, j)] } else { mi[(j, i)] };
                }
            }
        }
        let d = chart.dim();
        let mut dg = vec![0.0; len * d * nn];
        for a in 0..d {
            let da = chart.partial(&g, nn, a);
            for p in 0..len {
                dg[(p * d + a) * nn..(p * d + a + 1) * nn].copy_from_slice(&da[p * nn..(p + 1) * nn]);
            }
        }
        Ok(MetricField { chart: chart.clone(), n, generator, g, inv, sqrt_det, dg })
    }

    pub fn chart(&self) -> &GridChart {
        &self.chart
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generator(&self) -> &MetricGenerator {
        &self.generator
    }

    pub fn g(&self, p: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.g[p * nn..(p + 1) * nn]
    }

    pub fn inv(&self, p: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.inv[p * nn..(p + 1) * nn]
    }

    pub fn sqrt_det(&self, p: usize) -> f64 {
        self.sqrt_det[p]
    }

    pub fn sqrt_det_field(&self) -> &[f64] {
        &self.sqrt_det
    }

    pub fn components(&self) -> &[f64] {
        &self.g
    }

    /// `∂_a γ_ij` at node `p` (zero for `a ≥ d`).
    pub fn dg(&self, p: usize, a: usize) -> &[f64] {
        let nn = self.n * self.n;
        let d = self.chart.dim();
        &self.dg[(p * d + a) * nn..(p * d + a + 1) * nn]
    }

    pub fn dg_field(&self) -> &[f64] {
        &self.dg
    }

    /// Lumped mass `√γ · Π h`.
    pub fn mass(&self) -> Vec<f64> {
        let v = self.chart.cell_volume();
        self.sqrt_det.iter().map(|s| s * v).collect()
    }

    /// The metric `c·γ`.
    pub fn scaled(&self, c: f64) -> MetricField {
        let g = self.g.iter().map(|v| v * c).collect();
        MetricField::from_components(&self.chart, self.n, MetricGenerator::Explicit, g)
            .expect("positive multiple of an SPD metric")
    }

    /// `γ(u, v)` for vectors at node `p`.
    pub fn dot_vec(&self, p: usize, u: &[f64], v: &[f64]) -> f64 {
        quad(self.g(p), u, v, self.n)
    }

    /// `γ^{-1}(α, β)` for covectors at node `p`.
    pub fn dot_covec(&self, p: usize, a: &[f64], b: &[f64]) -> f64 {
        quad(self.inv(p), a, b, self.n)
    }

    /// `|T|²_γ = γ^{ia} γ^{jb} T_ij T_ab` for a covariant 2-tensor at node `p`.
    pub fn norm2_tensor(&self, p: usize, t: &[f64]) -> f64 {
        let n = self.n;
        let gi = self.inv(p);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut r = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        r += gi[i * n + a] * gi[j * n + b] * t[a * n + b];
                    }
                }
                s += r * t[i * n + j];
            }
        }
        s
    }

    /// `γ^{ij} T_ij`.
    pub fn trace(&self, p: usize, t: &[f64]) -> f64 {
        self.inv(p).iter().zip(t).map(|(a, b)| a * b).sum()
    }

    /// Lowers a vector to a covector at node `p`.
    pub fn lower(&self, p: usize, v: &[f64]) -> Vec<f64> {
        mat_vec(self.g(p), v, self.n)
    }

    /// Raises a covector at node `p`.
    pub fn raise(&self, p: usize, a: &[f64]) -> Vec<f64> {
        mat_vec(self.inv(p), a, self.n)
    }

    /// Largest relative defect of `γ^{ij} γ_jk = δ^i_k` over nodes.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for p in 0..self.chart.len() {
            let g = self.g(p);
            let gi = self.inv(p);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                * gi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                for k in 0..n {
                    let s: f64 = (0..n).map(|j| gi[i * n + j] * g[j * n + k]).sum();
                    let e = if i == k { 1.0 } else { 0.0 };
                    worst = worst.max((s - e).abs() / scale.max(1.0));
                }
            }
        }
        worst
    }

    /// Smallest eigenvalue of γ over all nodes.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.n;
        (0..self.chart.len())
            .map(|p| {
                let m = DMatrix::from_row_slice(n, n, self.g(p));
                SymmetricEigen::new(m).eigenvalues.min()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn quad(m: &[f64], u: &[f64], v: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += m[i * n + j] * u[i] * v[j];
        }
    }
    s
}

fn mat_vec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect()
}

#[derive(Debug, Clone)]
pub struct CurvaturePack {
    n: usize,
    /// `Γ^k_ij` at `p·n³ + k·n² + i·n + j`.
    pub christoffel: Vec<f64>,
    /// `Ric_ij` at `p·n² + i·n + j`.
    pub ricci: Vec<f64>,
    pub scalar: Vec<f64>,
    /// Minimum over nodes of the smallest eigenvalue of `Ric` relative to `γ`.
    pub ricci_min: f64,
    /// Smallest `H² ≥ 0` with `Ric ≥ -(n-1) H² (1 + r²) γ` at every node.
    pub ricci_h2: f64,
}

impl CurvaturePack {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self, p: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.christoffel[p * n * n * n + k * n * n + i * n + j]
    }
}

/// Christoffel symbols of the given metric components.
pub fn christoffel_from(chart: &GridChart, n: usize, inv: &[f64], dg: &[f64]) -> Vec<f64> {
    let d = chart.dim();
    let nn = n * n;
    let n3 = nn * n;
    let mut out = vec![0.0; chart.len() * n3];
    let mut lowered = vec![0.0; n3];
    for p in 0..chart.len() {
        let dgp = |a: usize, i: usize, j: usize| -> f64 {
            if a < d {
                dg[(p * d + a) * nn + i * n + j]
            } else {
                0.0
            }
        };
        // Γ_{l ij} = ½(∂_i γ_jl + ∂_j γ_il − ∂_l γ_ij)
        for l in 0..n {
            for i in 0..n {
                for j in i..n {
                    let v = 0.5 * (dgp(i, j, l) + dgp(j, i, l) - dgp(l, i, j));
                    lowered[l * nn + i * n + j] = v;
                    lowered[l * nn + j * n + i] = v;
                }
            }
        }
        let gi = &inv[p * nn..(p + 1) * nn];
        let gp = &mut out[p * n3..(p + 1) * n3];
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let v: f64 = (0..n).map(|l| gi[k * n + l] * lowered[l * nn + i * n + j]).sum();
                    gp[k * nn + i * n + j] = v;
                    gp[k * nn + j * n + i] = v;
                }
            }
        }
    }
    out
}

/// Ricci tensor from Christoffel symbols by finite differences.
pub fn ricci_from(chart: &GridChart, n: usize, christoffel: &[f64]) -> Vec<f64> {
    let d = chart.dim();
    let nn = n * n;
    let n3 = nn * n;
    let dgam: Vec<Vec<f64>> = (0..d).map(|a| chart.partial(christoffel, n3, a)).collect();
    let mut ric = vec![0.0; chart.len() * nn];
    for p in 0..chart.len() {
        let gm = &christoffel[p * n3..(p + 1) * n3];
        let ga = |k: usize, i: usize, j: usize| gm[k * nn + i * n + j];
        let dga = |a: usize, k: usize, i: usize, j: usize| -> f64 {
            if a < d {
                dgam[a][p * n3 + k * nn + i * n + j]
            } else {
                0.0
            }
        };
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += dga(k, k, i, j) - dga(j, k, i, k);
                    for l in 0..n {
                        s += ga(k, k, l) * ga(l, i, j) - ga(k, j, l) * ga(l, i, k);
                    }
                }
                ric[p * nn + i * n + j] = s;
            }
        }
        for i in 0..n {
            for j in 0..i {
                // Symmetrize: the two orderings differ only by truncation error.
                let v = 0.5 * (ric[p * nn + i * n + j] + ric[p * nn + j * n + i]);
                ric[p * nn + i * n + j] = v;
                ric[p * nn + j * n + i] = v;
            }
        }
    }
    ric
}

/// Christoffel symbols, Ricci tensor and scalar curvature of the metric.
pub fn curvature(metric: &MetricField) -> CurvaturePack {
    let chart = metric.chart();
    let n = metric.n();
    let nn = n * n;
    let christoffel = christoffel_from(chart, n, &metric.inv, &metric.dg);
    let ricci = ricci_from(chart, n, &christoffel);
    let mut scalar = vec![0.0; chart.len()];
    let mut ricci_min = f64::INFINITY;
    let mut ricci_h2: f64 = 0.0;
    for p in 0..chart.len() {
        let r = &ricci[p * nn..(p + 1) * nn];
        scalar[p] = metric.trace(p, r);
        let lam = relative_min_eigenvalue(metric.g(p), r, n);
        ricci_min = ricci_min.min(lam);
        let rad = chart.radius(p);
        ricci_h2 = ricci_h2.max((-lam).max(0.0) / ((n as f64 - 1.0) * (1.0 + rad * rad)));
    }
    CurvaturePack { n, christoffel, ricci, scalar, ricci_min, ricci_h2 }
}

/// Smallest eigenvalue of the pencil `(T, G)` with `G` SPD.
pub fn relative_min_eigenvalue(g: &[f64], t: &[f64], n: usize) -> f64 {
    let gm = DMatrix::from_row_slice(n, n, g);
    let tm = DMatrix::from_row_slice(n, n, t);
    let l = gm.cholesky().expect("SPD metric").l();
    let li = l.try_inverse().expect("triangular factor invertible");
    let s = &li * tm * li.transpose();
    let s = 0.5 * (&s + s.transpose());
    SymmetricEigen::new(s).eigenvalues.min()
}
