//! Artifact formats: CSV field dumps, `key = value` reports, run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use constraint_forge::geometry::GridChart;
use constraint_forge::{ForgeError, Result};
use sha2::{Digest, Sha256};

/// Full-precision float text; identical bits give identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:.17e}")
}

/// Header `dim`, `nodes`, `spacing`, `field`, `components`, then one row per node.
pub fn field_csv(chart: &GridChart, name: &str, values: &[f64], ncomp: usize) -> String {
    let d = chart.dim();
    let mut s = String::new();
    writeln!(s, "dim,{d}").unwrap();
    let nodes: Vec<String> = (0..d).map(|a| chart.nodes(a).to_string()).collect();
    writeln!(s, "nodes,{}", nodes.join(",")).unwrap();
    let spacing: Vec<String> = (0..d).map(|a| num(chart.spacing(a))).collect();
    writeln!(s, "spacing,{}", spacing.join(",")).unwrap();
    writeln!(s, "field,{name}").unwrap();
    writeln!(s, "components,{ncomp}").unwrap();
    for row in values.chunks(ncomp) {
        let r: Vec<String> = row.iter().map(|v| num(*v)).collect();
        writeln!(s, "{}", r.join(",")).unwrap();
    }
    s
}

/// Parses a dump written by [`field_csv`] and checks it against `chart`.
pub fn read_field(path: &Path, chart: &GridChart, ncomp: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| ForgeError::Config(format!("{}: {e}", path.display())))?;
    let bad = |msg: &str| ForgeError::Config(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<Vec<String>> {
        let line = lines.next().ok_or_else(|| bad("truncated header"))?;
        let mut parts = line.split(',');
        if parts.next() != Some(key) {
            return Err(bad(&format!("expected `{key}` header line")));
        }
        Ok(parts.map(str::to_string).collect())
    };
    let d = chart.dim();
    let dim = header("dim")?;
    let nodes = header("nodes")?;
    header("spacing")?;
    header("field")?;
    let comps = header("components")?;
    let expect_nodes: Vec<String> = (0..d).map(|a| chart.nodes(a).to_string()).collect();
    if dim != [d.to_string()] || nodes != expect_nodes || comps != [ncomp.to_string()] {
        return Err(bad("grid or component count does not match the configuration"));
    }
    let mut out = Vec::with_capacity(chart.len() * ncomp);
    for line in lines.filter(|l| !l.is_empty()) {
        for tok in line.split(',') {
            out.push(tok.trim().parse::<f64>().map_err(|e| bad(&format!("bad value `{tok}`: {e}")))?);
        }
    }
    if out.len() != chart.len() * ncomp {
        return Err(bad(&format!("expected {} values, found {}", chart.len() * ncomp, out.len())));
    }
    Ok(out)
}

/// Ordered `key = value` lines.
#[derive(Debug, Default, Clone)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Report {
        Report::default()
    }

    pub fn text(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Report {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) -> &mut Report {
        self.text(key, num(value))
    }

    pub fn opt(&mut self, key: impl Into<String>, value: Option<f64>) -> &mut Report {
        match value {
            Some(v) => self.num(key, v),
            None => self.text(key, "none"),
        }
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory; every write goes through it.
pub struct Sink {
    dir: PathBuf,
}

impl Sink {
    pub fn create(dir: &Path) -> Result<Sink> {
        fs::create_dir_all(dir)?;
        Ok(Sink { dir: dir.to_path_buf() })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
