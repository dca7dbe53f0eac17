//! TOML run configuration and its conversion into solver inputs.

use constraint_forge::barriers::{BarrierOptions, CertOptions, Route, YamabeChoice};
use constraint_forge::conformal_data::{DataExprs, EmExprs};
use constraint_forge::expr::Expr;
use constraint_forge::geometry::{build_chart, metric_from_generator, BoundaryKind, GridChart, MetricField, MetricGenerator};
use constraint_forge::lichnerowicz::ShiftMode;
use constraint_forge::spectral::SpectralOptions;
use constraint_forge::verification::MmsTargets;
use constraint_forge::{ForgeError, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub chart: ChartConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub barriers: BarrierConfig,
    pub exhaustion: Option<ExhaustionConfig>,
    #[serde(default)]
    pub spectral: SpectralConfig,
    pub mms: Option<MmsConfig>,
    pub sweep: Option<SweepConfig>,
    /// Seed of the randomized start vectors; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub dim: usize,
    pub extent: Vec<f64>,
    pub nodes: Vec<usize>,
    pub boundary: Vec<Boundary>,
    /// Manifold dimension `n ≥ d`.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum MetricConfig {
    #[default]
    Flat,
    ConformallyFlat { psi: String },
    Custom { components: Vec<String> },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub tau: Option<String>,
    pub u: Option<Vec<String>>,
    pub eps1: Option<String>,
    pub eps2: Option<String>,
    pub eps3: Option<String>,
    pub omega1: Option<Vec<String>>,
    pub omega2: Option<Vec<String>>,
    pub bc_u: Option<String>,
    pub bc_v: Option<Vec<String>>,
    pub bc_w: Option<String>,
    pub em: Option<EmConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    pub f: Option<Vec<String>>,
    pub q: Option<String>,
    pub v: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub linear_tol: f64,
    pub picard_tol: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_picard: usize,
    pub shift: Shift,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { linear_tol: 1e-12, picard_tol: 1e-10, outer_tol: 1e-8, max_outer: 100, max_picard: 2000, shift: Shift::Global }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Shift {
    Global,
    Local,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierConfig {
    pub route: RouteName,
    pub c_plus: f64,
    pub c_minus: f64,
    pub u0: f64,
    pub c_cert: f64,
    /// Integrability exponent; `2n` when absent.
    pub p: Option<f64>,
    pub cert_tol: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        let b = BarrierOptions::default();
        let c = CertOptions::default();
        BarrierConfig {
            route: RouteName::LinearNonvacuum,
            c_plus: b.c_plus,
            c_minus: b.c_minus,
            u0: b.u0,
            c_cert: c.c_cert,
            p: None,
            cert_tol: c.tol,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RouteName {
    LinearNonvacuum,
    YamabeRTau,
    YamabeEps3Tau,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExhaustionConfig {
    pub levels: usize,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
}

fn default_shrink() -> f64 {
    0.2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        let s = SpectralOptions::default();
        SpectralConfig { tol: s.tol, max_iter: s.max_iter }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsConfig {
    pub phi: String,
    pub x: Vec<String>,
    pub f: Option<String>,
    pub resolutions: Vec<usize>,
    /// Constant bracket; defaults to `[0.8 min φ*, 1.25 max φ*]`.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub c_target: f64,
}

fn parse(s: &str) -> Result<Expr> {
    Ok(Expr::parse(s)?)
}

fn parse_opt(s: &Option<String>) -> Result<Option<Expr>> {
    s.as_deref().map(parse).transpose()
}

fn parse_vec(v: &Option<Vec<String>>) -> Result<Option<Vec<Expr>>> {
    v.as_ref().map(|v| v.iter().map(|s| parse(s)).collect()).transpose()
}

fn tol_ok(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(ForgeError::Config(format!("{name} = {v} outside (0, 1)")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Tolerances in `(0, 1)` and every expression parses.
    pub fn validate(&self) -> Result<()> {
        let s = &self.solver;
        for (name, v) in [
            ("solver.linear_tol", s.linear_tol),
            ("solver.picard_tol", s.picard_tol),
            ("solver.outer_tol", s.outer_tol),
            ("spectral.tol", self.spectral.tol),
            ("barriers.cert_tol", self.barriers.cert_tol),
        ] {
            tol_ok(name, v)?;
        }
        self.data_exprs()?;
        self.generator()?;
        if let Some(m) = &self.mms {
            self.mms_targets(m)?;
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<MetricGenerator> {
        Ok(match &self.metric {
            MetricConfig::Flat => MetricGenerator::Flat,
            MetricConfig::ConformallyFlat { psi } => MetricGenerator::ConformallyFlat(parse(psi)?),
            MetricConfig::Custom { components } => {
                MetricGenerator::Custom(components.iter().map(|s| parse(s)).collect::<Result<_>>()?)
            }
        })
    }

    pub fn data_exprs(&self) -> Result<DataExprs> {
        let d = &self.data;
        let em = match &d.em {
            Some(e) => Some(EmExprs { f: parse_vec(&e.f)?, q: parse_opt(&e.q)?, v: parse_vec(&e.v)? }),
            None => None,
        };
        Ok(DataExprs {
            tau: parse_opt(&d.tau)?,
            u: parse_vec(&d.u)?,
            eps1: parse_opt(&d.eps1)?,
            eps2: parse_opt(&d.eps2)?,
            eps3: parse_opt(&d.eps3)?,
            omega1: parse_vec(&d.omega1)?,
            omega2: parse_vec(&d.omega2)?,
            em,
            bc_u: parse_opt(&d.bc_u)?,
            bc_v: parse_vec(&d.bc_v)?,
            bc_w: parse_opt(&d.bc_w)?,
        })
    }

    pub fn mms_targets(&self, m: &MmsConfig) -> Result<MmsTargets> {
        Ok(MmsTargets {
            phi: parse(&m.phi)?,
            x: m.x.iter().map(|s| parse(s)).collect::<Result<_>>()?,
            f: parse_opt(&m.f)?,
        })
    }

    /// Chart with `nodes` per axis in place of the configured counts when given.
    pub fn chart(&self, nodes: Option<usize>) -> Result<GridChart> {
        let c = &self.chart;
        let kinds: Vec<BoundaryKind> = c
            .boundary
            .iter()
            .map(|b| match b {
                Boundary::Dirichlet => BoundaryKind::Dirichlet,
                Boundary::Periodic => BoundaryKind::Periodic,
            })
            .collect();
        let counts = match nodes {
            Some(k) => vec![k; c.dim],
            None => c.nodes.clone(),
        };
        build_chart(c.dim, &c.extent, &counts, &kinds)
    }

    pub fn metric(&self, nodes: Option<usize>) -> Result<MetricField> {
        metric_from_generator(&self.chart(nodes)?, self.generator()?, self.chart.n)
    }

    pub fn route(&self) -> Route {
        match self.barriers.route {
            RouteName::LinearNonvacuum => Route::LinearNonvacuum,
            RouteName::YamabeRTau => Route::Yamabe(YamabeChoice::RTau),
            RouteName::YamabeEps3Tau => Route::Yamabe(YamabeChoice::Eps3Tau),
        }
    }

    pub fn barrier_options(&self) -> BarrierOptions {
        let b = &self.barriers;
        BarrierOptions {
            c_plus: b.c_plus,
            c_minus: b.c_minus,
            u0: b.u0,
            linear_tol: self.solver.linear_tol,
            picard_tol: self.solver.picard_tol,
        }
    }

    pub fn cert_options(&self) -> CertOptions {
        CertOptions { c_cert: self.barriers.c_cert, p: self.barriers.p, tol: self.barriers.cert_tol }
    }

    pub fn spectral_options(&self) -> SpectralOptions {
        SpectralOptions { tol: self.spectral.tol, max_iter: self.spectral.max_iter, seed: self.seed }
    }

    pub fn shift(&self) -> ShiftMode {
        match self.solver.shift {
            Shift::Global => ShiftMode::Global,
            Shift::Local => ShiftMode::Local,
        }
    }
}
