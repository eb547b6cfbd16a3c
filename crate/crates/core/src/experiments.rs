//! Batch experiments: a flat `key = value` config grammar, execution of the
//! named experiments, self-describing run records and long-format tables.
//!
//! Grammar: one `key = value` per line, `#` starts a comment, lists are comma
//! separated. Keys not given fall back to the defaults of the experiment.
//!
//! ```text
//! experiment = risk-table
//! model.p = 3
//! model.vx = 1
//! model.vy = 1
//! prior.1.kind = uniform
//! prior.2.kind = power
//! prior.2.b = 1
//! mu.radii = 0, 1, 2, 4
//! budget.n = 20000
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admissibility::{
    admissibility_report, truncate_dominate, AdmissibilityReport, FlatnessBudget, ReportOptions, Route,
};
use crate::density::DensityEstimate;
use crate::error::{Error, Result};
use crate::estimators::PredictiveProcedure;
use crate::marginals::MarginalEvaluator;
use crate::mc::{McSettings, RiskEstimate};
use crate::model::{ModelConfig, Point};
use crate::priors::PriorFamilySpec;
use crate::risk::{average_risk_gap, kl_risk, verify_bridge, BlythGap, BridgeBudget, BridgeReport, DEFAULT_NODES};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = concat!("predkl ", env!("CARGO_PKG_VERSION"));
/// Replaces the directory of every output path, keeping the file name.
pub const OUTPUT_DIR_ENV: &str = "PREDKL_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RiskTable,
    VerifyBridge,
    DominanceScan,
    BlythRun,
    CheckAdmissibility,
    TruncationDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::RiskTable,
        ExperimentKind::VerifyBridge,
        ExperimentKind::DominanceScan,
        ExperimentKind::BlythRun,
        ExperimentKind::CheckAdmissibility,
        ExperimentKind::TruncationDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RiskTable => "risk-table",
            ExperimentKind::VerifyBridge => "verify-bridge",
            ExperimentKind::DominanceScan => "dominance-scan",
            ExperimentKind::BlythRun => "blyth-run",
            ExperimentKind::CheckAdmissibility => "check-admissibility",
            ExperimentKind::TruncationDemo => "truncation-demo",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

/// Radii along one direction (`e_1` unless given).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuGrid {
    pub radii: Vec<f64>,
    pub direction: Option<Vec<f64>>,
}

impl MuGrid {
    pub fn points(&self, p: usize) -> Result<Vec<Point>> {
        let dir = match &self.direction {
            None => Point::on_axis(p, 1.0).0,
            Some(d) => {
                crate::error::check_dim(p, d.len())?;
                let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                if !(n > 0.0 && n.is_finite()) {
                    return Err(Error::invalid("mu.direction", "must be a finite non-zero vector"));
                }
                d.iter().map(|x| x / n).collect()
            }
        };
        Ok(self.radii.iter().map(|&r| Point(dir.iter().map(|d| r * d).collect())).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Draws per estimate (per side for identity checks).
    pub n: usize,
    /// Gauss-Legendre nodes in the variance integral.
    pub nodes: usize,
    /// Inner draws of the flatness estimate; 0 skips it.
    pub flatness_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSetup {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    pub priors: Vec<PriorFamilySpec>,
    pub mu_grid: MuGrid,
    pub budget: Budget,
    pub seed: u64,
    pub workers: usize,
    pub output: OutputSpec,
    /// Truncation indices for `blyth-run`.
    pub blyth_n: Vec<u32>,
    /// Dimensions for `check-admissibility`.
    pub dims: Vec<usize>,
    pub truncation: TruncationSetup,
}

impl ExperimentConfig {
    /// Defaults reproduce the reference runs of each experiment.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut c = ExperimentConfig {
            experiment: kind,
            model: ModelConfig { p: 3, vx: 1.0, vy: 1.0 },
            priors: vec![PriorFamilySpec::Uniform, PriorFamilySpec::Harmonic],
            mu_grid: MuGrid { radii: vec![0.0, 1.0, 2.0, 4.0], direction: None },
            budget: Budget { n: 20_000, nodes: DEFAULT_NODES, flatness_n: 0 },
            seed: 20_240_601,
            workers: 1,
            output: OutputSpec { path: None, format: OutputFormat::Json },
            blyth_n: vec![2, 8, 32],
            dims: vec![1, 2, 3],
            truncation: TruncationSetup {
                edges: vec![0.0, 0.5, 1.0],
                values: vec![1.5, 0.5],
                mu: vec![0.0, 0.25, 0.5, 1.0],
            },
        };
        match kind {
            ExperimentKind::RiskTable => {}
            ExperimentKind::VerifyBridge => {
                c.model.p = 1;
                c.priors = vec![PriorFamilySpec::Gaussian { tau2: 1.0 }];
                c.mu_grid.radii = vec![0.0];
            }
            ExperimentKind::DominanceScan => {
                c.mu_grid.radii = vec![0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0];
                c.output.format = OutputFormat::Csv;
            }
            ExperimentKind::BlythRun => {
                c.model.p = 1;
                c.priors = vec![PriorFamilySpec::Uniform];
                c.budget.n = 50_000;
                c.output.format = OutputFormat::Csv;
            }
            ExperimentKind::CheckAdmissibility => {
                c.priors = vec![PriorFamilySpec::Uniform];
            }
            ExperimentKind::TruncationDemo => {
                // C = (2 pi v_y)^(-1/2) = 1
                c.model = ModelConfig { p: 1, vx: 1.0, vy: 1.0 / (2.0 * std::f64::consts::PI) };
                c.priors = Vec::new();
            }
        }
        c
    }

    /// Experiment-specific preconditions.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::Config { line: 0, field: field.into(), message };
        self.model.validate().map_err(|e| bad("model", e.to_string()))?;
        if self.budget.n == 0 {
            return Err(bad("budget.n", "must be positive".into()));
        }
        if self.budget.nodes < 4 {
            return Err(bad("budget.nodes", "at least 4 nodes are needed".into()));
        }
        if self.workers == 0 {
            return Err(bad("workers", "must be positive".into()));
        }
        let needs_priors = self.experiment != ExperimentKind::TruncationDemo;
        if needs_priors && self.priors.is_empty() {
            return Err(bad("prior", "at least one prior is required".into()));
        }
        if self.experiment != ExperimentKind::CheckAdmissibility {
            for (i, spec) in self.priors.iter().enumerate() {
                spec.build(self.model.p).map_err(|e| bad(&format!("prior.{}", i + 1), e.to_string()))?;
            }
        }
        if let Some(d) = &self.mu_grid.direction {
            if d.len() != self.model.p {
                return Err(bad("mu.direction", format!("has {} entries, model.p = {}", d.len(), self.model.p)));
            }
        }
        if self.mu_grid.radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(bad("mu.radii", "radii must be finite and non-negative".into()));
        }
        match self.experiment {
            ExperimentKind::RiskTable | ExperimentKind::VerifyBridge | ExperimentKind::DominanceScan => {
                if self.mu_grid.radii.is_empty() {
                    return Err(bad("mu.radii", "empty grid".into()));
                }
                self.mu_grid.points(self.model.p).map_err(|e| bad("mu.direction", e.to_string()))?;
            }
            ExperimentKind::BlythRun => {
                if self.model.p > 2 {
                    return Err(bad("model.p", format!("blyth-run requires p <= 2, got {}", self.model.p)));
                }
                if self.blyth_n.is_empty() || self.blyth_n.contains(&0) {
                    return Err(bad("blyth.n", "needs positive truncation indices".into()));
                }
            }
            ExperimentKind::CheckAdmissibility => {
                if self.dims.is_empty() || self.dims.contains(&0) {
                    return Err(bad("dims", "needs positive dimensions".into()));
                }
            }
            ExperimentKind::TruncationDemo => {
                if self.model.p != 1 {
                    return Err(bad("model.p", "truncation-demo is one-dimensional".into()));
                }
                let t = &self.truncation;
                DensityEstimate::piecewise(t.edges.clone(), t.values.clone())
                    .map_err(|e| bad("truncation.values", e.to_string()))?;
                if t.mu.iter().any(|m| !m.is_finite()) {
                    return Err(bad("truncation.mu", "must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Canonical text in the config grammar; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "model.p = {}", self.model.p);
        let _ = writeln!(s, "model.vx = {:?}", self.model.vx);
        let _ = writeln!(s, "model.vy = {:?}", self.model.vy);
        for (i, spec) in self.priors.iter().enumerate() {
            write_prior(&mut s, &format!("prior.{}", i + 1), spec);
        }
        let _ = writeln!(s, "mu.radii = {}", list(&self.mu_grid.radii));
        if let Some(d) = &self.mu_grid.direction {
            let _ = writeln!(s, "mu.direction = {}", list(d));
        }
        let _ = writeln!(s, "budget.n = {}", self.budget.n);
        let _ = writeln!(s, "budget.nodes = {}", self.budget.nodes);
        let _ = writeln!(s, "budget.flatness_n = {}", self.budget.flatness_n);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "workers = {}", self.workers);
        if let Some(p) = &self.output.path {
            let _ = writeln!(s, "output.path = {}", p.display());
        }
        let _ = writeln!(s, "output.format = {}", self.output.format.extension());
        let _ = writeln!(
            s,
            "blyth.n = {}",
            self.blyth_n.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(s, "dims = {}", self.dims.iter().map(usize::to_string).collect::<Vec<_>>().join(", "));
        let _ = writeln!(s, "truncation.edges = {}", list(&self.truncation.edges));
        let _ = writeln!(s, "truncation.values = {}", list(&self.truncation.values));
        let _ = writeln!(s, "truncation.mu = {}", list(&self.truncation.mu));
        s
    }
}

fn write_prior(s: &mut String, key: &str, spec: &PriorFamilySpec) {
    match spec {
        PriorFamilySpec::Uniform => {
            let _ = writeln!(s, "{key}.kind = uniform");
        }
        PriorFamilySpec::Harmonic => {
            let _ = writeln!(s, "{key}.kind = harmonic");
        }
        PriorFamilySpec::Power { b } => {
            let _ = writeln!(s, "{key}.kind = power\n{key}.b = {b:?}");
        }
        PriorFamilySpec::Gaussian { tau2 } => {
            let _ = writeln!(s, "{key}.kind = gaussian\n{key}.tau2 = {tau2:?}");
        }
        PriorFamilySpec::Blyth { base, n } => {
            let _ = writeln!(s, "{key}.kind = blyth\n{key}.n = {n}");
            let mut inner = String::new();
            write_prior(&mut inner, "base", base);
            // `base.kind = x` -> `{key}.base = x`, parameters keep their suffix
            for line in inner.lines() {
                let line = line.replacen("base.kind", "base", 1);
                let _ = writeln!(s, "{key}.{line}");
            }
        }
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn cfg_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config { line, field: field.into(), message: message.into() }
}

fn parse_scalar<T: FromStr>(key: &str, e: &Entry) -> Result<T>
where
    T::Err: fmt::Display,
{
    e.value.parse::<T>().map_err(|err| cfg_err(e.line, key, format!("cannot parse `{}`: {err}", e.value)))
}

fn parse_list<T: FromStr>(key: &str, e: &Entry) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let body = e.value.trim().trim_start_matches('[').trim_end_matches(']');
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    body.split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<T>().map_err(|err| cfg_err(e.line, key, format!("cannot parse list item `{item}`: {err}")))
        })
        .collect()
}

const KEYS: &[&str] = &[
    "experiment",
    "model.p",
    "model.vx",
    "model.vy",
    "mu.radii",
    "mu.direction",
    "budget.n",
    "budget.nodes",
    "budget.flatness_n",
    "seed",
    "workers",
    "output.path",
    "output.format",
    "blyth.n",
    "dims",
    "truncation.edges",
    "truncation.values",
    "truncation.mu",
];

const PRIOR_FIELDS: &[&str] = &["kind", "b", "tau2", "n", "base", "base.b", "base.tau2"];

/// Parse a config. `fallback` supplies the experiment when the text has no
/// `experiment` key; if both are present they must agree.
pub fn parse_config(text: &str, fallback: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(cfg_err(line, "", format!("expected `key = value`, found `{content}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(cfg_err(line, "", "empty key"));
        }
        let known = KEYS.contains(&key)
            || key.strip_prefix("prior.").and_then(|rest| rest.split_once('.')).is_some_and(|(idx, field)| {
                idx.parse::<usize>().is_ok_and(|i| i >= 1) && PRIOR_FIELDS.contains(&field)
            });
        if !known {
            return Err(cfg_err(line, key, "unknown key"));
        }
        if value.is_empty() {
            return Err(cfg_err(line, key, "missing value"));
        }
        if let Some(prev) = entries.get(key) {
            return Err(cfg_err(line, key, format!("duplicate key (first set on line {})", prev.line)));
        }
        entries.insert(key.to_string(), Entry { line, value: value.to_string() });
    }

    let kind = match (entries.get("experiment"), fallback) {
        (Some(e), fb) => {
            let k: ExperimentKind = parse_scalar("experiment", e)?;
            if let Some(fb) = fb.filter(|fb| *fb != k) {
                return Err(cfg_err(e.line, "experiment", format!("config is for `{k}` but `{fb}` was requested")));
            }
            k
        }
        (None, Some(fb)) => fb,
        (None, None) => return Err(cfg_err(0, "experiment", "no experiment named")),
    };
    let mut c = ExperimentConfig::default_for(kind);

    let get = |k: &str| entries.get(k);
    if let Some(e) = get("model.p") {
        c.model.p = parse_scalar("model.p", e)?;
    }
    if let Some(e) = get("model.vx") {
        c.model.vx = parse_scalar("model.vx", e)?;
    }
    if let Some(e) = get("model.vy") {
        c.model.vy = parse_scalar("model.vy", e)?;
    }
    if let Err(err) = c.model.validate() {
        let line = ["model.vy", "model.vx", "model.p"].iter().find_map(|k| get(k)).map_or(0, |e| e.line);
        return Err(cfg_err(line, "model", err.to_string()));
    }
    if let Some(e) = get("mu.radii") {
        c.mu_grid.radii = parse_list("mu.radii", e)?;
        if c.mu_grid.radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(cfg_err(e.line, "mu.radii", "radii must be finite and non-negative"));
        }
    }
    if let Some(e) = get("mu.direction") {
        let d: Vec<f64> = parse_list("mu.direction", e)?;
        if d.len() != c.model.p {
            return Err(cfg_err(e.line, "mu.direction", format!("has {} entries, model.p = {}", d.len(), c.model.p)));
        }
        c.mu_grid.direction = Some(d);
    }
    if let Some(e) = get("budget.n") {
        c.budget.n = parse_scalar("budget.n", e)?;
        if c.budget.n == 0 {
            return Err(cfg_err(e.line, "budget.n", "must be positive"));
        }
    }
    if let Some(e) = get("budget.nodes") {
        c.budget.nodes = parse_scalar("budget.nodes", e)?;
        if c.budget.nodes < 4 {
            return Err(cfg_err(e.line, "budget.nodes", "at least 4 nodes are needed"));
        }
    }
    if let Some(e) = get("budget.flatness_n") {
        c.budget.flatness_n = parse_scalar("budget.flatness_n", e)?;
    }
    if let Some(e) = get("seed") {
        c.seed = parse_scalar("seed", e)?;
    }
    if let Some(e) = get("workers") {
        c.workers = parse_scalar("workers", e)?;
        if c.workers == 0 {
            return Err(cfg_err(e.line, "workers", "must be positive"));
        }
    }
    if let Some(e) = get("output.path") {
        c.output.path = Some(PathBuf::from(&e.value));
    }
    if let Some(e) = get("output.format") {
        c.output.format = parse_scalar("output.format", e)?;
    }
    if let Some(e) = get("blyth.n") {
        c.blyth_n = parse_list("blyth.n", e)?;
    }
    if let Some(e) = get("dims") {
        c.dims = parse_list("dims", e)?;
    }
    if let Some(e) = get("truncation.edges") {
        c.truncation.edges = parse_list("truncation.edges", e)?;
    }
    if let Some(e) = get("truncation.values") {
        c.truncation.values = parse_list("truncation.values", e)?;
    }
    if let Some(e) = get("truncation.mu") {
        c.truncation.mu = parse_list("truncation.mu", e)?;
    }

    // prior.N.*, N = 1..K with no gaps
    let mut indices: BTreeMap<usize, usize> = BTreeMap::new();
    for (key, e) in &entries {
        if let Some(rest) = key.strip_prefix("prior.") {
            let idx: usize = rest.split('.').next().and_then(|s| s.parse().ok()).unwrap_or(0);
            let first = indices.entry(idx).or_insert(e.line);
            *first = (*first).min(e.line);
        }
    }
    if !indices.is_empty() {
        let mut priors = Vec::new();
        for (pos, (&idx, &line)) in indices.iter().enumerate() {
            if idx != pos + 1 {
                return Err(cfg_err(line, &format!("prior.{idx}"), format!("prior indices must run 1..K; missing prior.{}", pos + 1)));
            }
            priors.push(parse_prior(&entries, &format!("prior.{idx}"), line)?);
        }
        c.priors = priors;
    }
    if c.experiment != ExperimentKind::CheckAdmissibility {
        for (i, spec) in c.priors.iter().enumerate() {
            if let Err(err) = spec.build(c.model.p) {
                let field = format!("prior.{}.kind", i + 1);
                let line = entries.get(&field).map_or(0, |e| e.line);
                return Err(cfg_err(line, &field, err.to_string()));
            }
        }
    }
    c.validate()?;
    Ok(c)
}

fn parse_prior(entries: &BTreeMap<String, Entry>, prefix: &str, first_line: usize) -> Result<PriorFamilySpec> {
    let field = |f: &str| format!("{prefix}.{f}");
    let kind_key = field("kind");
    let Some(kind) = entries.get(&kind_key) else {
        return Err(cfg_err(first_line, &kind_key, "missing prior kind"));
    };
    let param = |name: &str, kind_line: usize| -> Result<f64> {
        let key = field(name);
        match entries.get(&key) {
            Some(e) => parse_scalar(&key, e),
            None => Err(cfg_err(kind_line, &key, "missing parameter")),
        }
    };
    let family = |name: &str, line: usize, sub: &str| -> Result<PriorFamilySpec> {
        let sub_key = |p: &str| if sub.is_empty() { p.to_string() } else { format!("{sub}.{p}") };
        match name {
            "uniform" => Ok(PriorFamilySpec::Uniform),
            "harmonic" => Ok(PriorFamilySpec::Harmonic),
            "power" => Ok(PriorFamilySpec::Power { b: param(&sub_key("b"), line)? }),
            "gaussian" => Ok(PriorFamilySpec::Gaussian { tau2: param(&sub_key("tau2"), line)? }),
            other => Err(cfg_err(
                line,
                &if sub.is_empty() { kind_key.clone() } else { field(sub) },
                format!("unknown prior kind `{other}` (uniform, power, harmonic, gaussian, blyth)"),
            )),
        }
    };
    let spec = if kind.value == "blyth" {
        let n_key = field("n");
        let n: u32 = match entries.get(&n_key) {
            Some(e) => parse_scalar(&n_key, e)?,
            None => return Err(cfg_err(kind.line, &n_key, "missing parameter")),
        };
        let base = match entries.get(&field("base")) {
            Some(e) => family(&e.value, e.line, "base")?,
            None => PriorFamilySpec::Uniform,
        };
        PriorFamilySpec::Blyth { base: Box::new(base), n }
    } else {
        family(&kind.value, kind.line, "")?
    };
    // reject parameters the kind does not use
    let used: &[&str] = match &spec {
        PriorFamilySpec::Uniform | PriorFamilySpec::Harmonic => &["kind"],
        PriorFamilySpec::Power { .. } => &["kind", "b"],
        PriorFamilySpec::Gaussian { .. } => &["kind", "tau2"],
        PriorFamilySpec::Blyth { base, .. } => match **base {
            PriorFamilySpec::Power { .. } => &["kind", "n", "base", "base.b"],
            PriorFamilySpec::Gaussian { .. } => &["kind", "n", "base", "base.tau2"],
            _ => &["kind", "n", "base"],
        },
    };
    for f in PRIOR_FIELDS {
        if let Some(e) = entries.get(&field(f)) {
            if !used.contains(f) {
                return Err(cfg_err(e.line, &field(f), format!("not used by prior kind `{}`", kind.value)));
            }
        }
    }
    Ok(spec)
}

/// Read and parse a config file.
pub fn load_config(path: &Path, fallback: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?, fallback)
}

/// Final-truncation summary of a truncation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSummary {
    pub lift: f64,
    pub bound: f64,
    pub region: Vec<(f64, f64)>,
    pub mass: f64,
    pub sup: f64,
    pub g: DensityEstimate,
    pub warning: Option<String>,
}

/// One result cell. Non-finite quantities are stored as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "kebab-case")]
pub enum Cell {
    Risk { series: String, mu_norm: f64, estimate: RiskEstimate },
    Bridge { prior: String, mu_norm: f64, report: BridgeReport },
    BlythGap { prior: String, gap: BlythGap },
    Admissibility { report: AdmissibilityReport },
    Truncation { summary: TruncationSummary },
    LossGap { mu: f64, gap: f64, loss_g0: Option<f64>, loss_g: Option<f64> },
    Failure { series: String, x: Option<f64>, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    CheckFailed,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 2,
            Status::Error => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub artifact_version: String,
    pub config: ExperimentConfig,
    pub status: Status,
    pub checks: Vec<Check>,
    pub cells: Vec<Cell>,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(format!("serialising record: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Io(format!("reading record: {e}")))?;
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(s) if s == SCHEMA_VERSION as u64 => {}
            other => return Err(Error::Io(format!("unsupported schema_version {other:?}, expected {SCHEMA_VERSION}"))),
        }
        serde_json::from_value(v).map_err(|e| Error::Io(format!("reading record: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| matches!(c, Cell::Failure { .. }))
    }
}

struct Collector {
    cells: Vec<Cell>,
    checks: Vec<Check>,
}

impl Collector {
    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    fn fail(&mut self, series: impl Into<String>, x: Option<f64>, err: impl fmt::Display) {
        self.cells.push(Cell::Failure { series: series.into(), x, message: err.to_string() });
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Execute the experiment. Numerical failures become `Failure` cells and an
/// `Error` status; only invalid configs return `Err`.
pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let mut out = Collector { cells: Vec::new(), checks: Vec::new() };
    let mc = McSettings::new(config.seed, config.workers).derive_str(config.experiment.name());
    match config.experiment {
        ExperimentKind::RiskTable => risk_series(config, &mc, false, &mut out)?,
        ExperimentKind::DominanceScan => risk_series(config, &mc, true, &mut out)?,
        ExperimentKind::VerifyBridge => bridge_cells(config, &mc, &mut out)?,
        ExperimentKind::BlythRun => blyth_cells(config, &mc, &mut out)?,
        ExperimentKind::CheckAdmissibility => admissibility_cells(config, &mut out),
        ExperimentKind::TruncationDemo => truncation_cells(config, &mut out),
    }
    let status = if out.cells.iter().any(|c| matches!(c, Cell::Failure { .. })) {
        Status::Error
    } else if out.checks.iter().all(|c| c.pass) {
        Status::Pass
    } else {
        Status::CheckFailed
    };
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.into(),
        config: config.clone(),
        status,
        checks: out.checks,
        cells: out.cells,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Whether the Bayes rule of `spec` is known to dominate the plug-in rule:
/// the flat prior, and `r^-b` with `0 <= b <= p - 2` (superharmonic).
fn dominates_plugin(spec: &PriorFamilySpec, p: usize) -> bool {
    match spec {
        PriorFamilySpec::Uniform => true,
        PriorFamilySpec::Harmonic => p >= 3,
        PriorFamilySpec::Power { b } => *b >= 0.0 && *b <= p as f64 - 2.0,
        _ => false,
    }
}

/// Bayes KL risks per prior and radius; every series at one radius shares
/// its stream, so columns are paired. With `plugin`, the plug-in rule is
/// added as the reference series.
fn risk_series(config: &ExperimentConfig, mc: &McSettings, plugin: bool, out: &mut Collector) -> Result<()> {
    let model = &config.model;
    let points = config.mu_grid.points(model.p)?;
    let mut series: Vec<(String, Option<PriorFamilySpec>, PredictiveProcedure)> = Vec::new();
    if plugin {
        series.push(("plug-in".into(), None, PredictiveProcedure::PlugInMle));
    }
    for spec in &config.priors {
        series.push((spec.label(), Some(spec.clone()), PredictiveProcedure::bayes(spec.build(model.p)?)));
    }
    for (i, mu) in points.iter().enumerate() {
        let r = config.mu_grid.radii[i];
        let stream = mc.derive_str(&format!("radius-{i}"));
        let mut row: Vec<Option<RiskEstimate>> = Vec::new();
        for (label, _, proc) in &series {
            match kl_risk(model, mu, proc, config.budget.n, &stream) {
                Ok(est) => {
                    out.cells.push(Cell::Risk { series: label.clone(), mu_norm: r, estimate: est.clone() });
                    row.push(Some(est));
                }
                Err(e) => {
                    out.fail(label.clone(), Some(r), e);
                    row.push(None);
                }
            }
        }
        let Some(Some(reference)) = row.first().cloned() else { continue };
        let ref_label = &series[0].0;
        for (k, (label, spec, _)) in series.iter().enumerate().skip(1) {
            let Some(est) = &row[k] else { continue };
            if plugin && !spec.as_ref().is_some_and(|s| dominates_plugin(s, model.p)) {
                continue;
            }
            let slack = 2.0 * (est.std_error + reference.std_error);
            out.check(
                format!("{label} <= {ref_label} at |mu| = {r}"),
                est.value <= reference.value + slack,
                format!("{:.6} vs {:.6} (slack {:.2e})", est.value, reference.value, slack),
            );
        }
    }
    Ok(())
}

fn bridge_cells(config: &ExperimentConfig, mc: &McSettings, out: &mut Collector) -> Result<()> {
    let model = &config.model;
    let points = config.mu_grid.points(model.p)?;
    let budget = BridgeBudget { n_per_side: config.budget.n, nodes: config.budget.nodes };
    for spec in &config.priors {
        let ev = MarginalEvaluator::new(spec.build(model.p)?);
        let label = spec.label();
        for (i, mu) in points.iter().enumerate() {
            let r = config.mu_grid.radii[i];
            let report = verify_bridge(model, mu, &ev, budget, &mc.derive_str(&format!("{label}/radius-{i}")));
            if report.lhs.is_none() || report.rhs.is_none() {
                out.fail(label.clone(), Some(r), report.diagnosis.clone().unwrap_or_default());
            }
            out.check(
                format!("bridge {label} at |mu| = {r}"),
                report.pass,
                match (&report.discrepancy, &report.tolerance) {
                    (Some(d), Some(t)) => format!("|lhs - rhs| = {d:.3e}, tolerance {t:.3e}"),
                    _ => report.diagnosis.clone().unwrap_or_default(),
                },
            );
            out.cells.push(Cell::Bridge { prior: label.clone(), mu_norm: r, report });
        }
    }
    Ok(())
}

fn blyth_cells(config: &ExperimentConfig, mc: &McSettings, out: &mut Collector) -> Result<()> {
    let model = &config.model;
    let budget = BridgeBudget { n_per_side: config.budget.n, nodes: config.budget.nodes };
    for spec in &config.priors {
        let base = spec.build(model.p)?;
        let label = spec.label();
        // one stream per base: gaps at different n are paired
        let stream = mc.derive_str(&label);
        let mut gaps: Vec<BlythGap> = Vec::new();
        for &n in &config.blyth_n {
            match average_risk_gap(model, &base, n, budget, &stream) {
                Ok(g) => {
                    gaps.push(g.clone());
                    out.cells.push(Cell::BlythGap { prior: label.clone(), gap: g });
                }
                Err(e) => out.fail(label.clone(), Some(n as f64), e),
            }
        }
        for g in &gaps {
            let e = &g.estimate;
            out.check(
                format!("{label}: gap(n={}) >= -2 SE", g.n),
                e.value >= -2.0 * e.std_error,
                format!("{:.6} (SE {:.2e})", e.value, e.std_error),
            );
        }
        for w in gaps.windows(2) {
            let (a, b) = (&w[0].estimate, &w[1].estimate);
            let slack = 2.0 * (a.std_error + b.std_error);
            out.check(
                format!("{label}: gap(n={}) <= gap(n={}) + 2 SE", w[1].n, w[0].n),
                b.value <= a.value + slack,
                format!("{:.6} vs {:.6} (slack {:.2e})", b.value, a.value, slack),
            );
        }
        if let (Some(first), Some(last)) = (gaps.first(), gaps.last()) {
            if gaps.len() >= 2 {
                out.check(
                    format!("{label}: gap(n={}) < gap(n={}) / 2", last.n, first.n),
                    last.estimate.value < first.estimate.value / 2.0,
                    format!("{:.6} vs {:.6}", last.estimate.value, first.estimate.value),
                );
            }
        }
    }
    Ok(())
}

fn admissibility_cells(config: &ExperimentConfig, out: &mut Collector) {
    let flatness = (config.budget.flatness_n > 0)
        .then(|| FlatnessBudget { n_inner: config.budget.flatness_n, ..FlatnessBudget::default() });
    let opts = ReportOptions { flatness, seed: config.seed, workers: config.workers };
    for spec in &config.priors {
        for &p in &config.dims {
            let model = ModelConfig { p, ..config.model };
            let prior = match spec.build(p) {
                Ok(prior) => prior,
                Err(e) => {
                    out.fail(spec.label(), Some(p as f64), e);
                    continue;
                }
            };
            let report = admissibility_report(&prior, &model, &opts);
            if *spec == PriorFamilySpec::Uniform {
                // the flat-prior rule is admissible exactly when p <= 2
                let admissible = report.route != Route::None;
                out.check(
                    format!("uniform route at p = {p}"),
                    admissible == (p <= 2),
                    format!("route {:?}", report.route),
                );
            }
            out.cells.push(Cell::Admissibility { report });
        }
    }
}

fn truncation_cells(config: &ExperimentConfig, out: &mut Collector) {
    let t = &config.truncation;
    let g0 = match DensityEstimate::piecewise(t.edges.clone(), t.values.clone()) {
        Ok(g0) => g0,
        Err(e) => return out.fail("g0", None, e),
    };
    let trunc = match truncate_dominate(&g0, &config.model) {
        Ok(tr) => tr,
        Err(e) => return out.fail("truncation", None, e),
    };
    let sup = trunc.sup();
    let bound = trunc.bound;
    out.check("lift c > 1", trunc.lift > 1.0, format!("c = {}", trunc.lift));
    out.check("g integrates to 1", (trunc.mass - 1.0).abs() <= 1e-9, format!("mass = {}", trunc.mass));
    out.check("sup g <= C", sup <= bound * (1.0 + 1e-12), format!("sup = {sup}, C = {bound}"));
    out.cells.push(Cell::Truncation {
        summary: TruncationSummary {
            lift: trunc.lift,
            bound,
            region: trunc.region.clone(),
            mass: trunc.mass,
            sup,
            g: trunc.g.clone(),
            warning: trunc.warning.clone(),
        },
    });
    for &mu in &t.mu {
        match trunc.loss_gap(mu) {
            Ok(lg) if lg.gap.is_finite() => {
                out.check(format!("loss gap at mu = {mu} > 1e-6"), lg.gap > 1e-6, format!("gap = {:.6e}", lg.gap));
                out.cells.push(Cell::LossGap { mu, gap: lg.gap, loss_g0: finite(lg.loss_g0), loss_g: finite(lg.loss_g) });
            }
            Ok(lg) => out.fail("loss-gap", Some(mu), format!("non-finite gap {}", lg.gap)),
            Err(e) => out.fail("loss-gap", Some(mu), e),
        }
    }
}

/// Outcome of re-executing a record.
#[derive(Debug, Clone, PartialEq)]
pub struct RerunReport {
    pub identical: bool,
    /// Indices of cells whose numbers differ (or that are missing).
    pub mismatched_cells: Vec<usize>,
    pub fresh: RunRecord,
}

/// Re-run the embedded config (same seed, same worker count) and compare
/// every cell bit for bit.
pub fn rerun(record: &RunRecord) -> Result<RerunReport> {
    let fresh = run(&record.config)?;
    let n = record.cells.len().max(fresh.cells.len());
    let mismatched_cells: Vec<usize> = (0..n)
        .filter(|&i| match (record.cells.get(i), fresh.cells.get(i)) {
            (Some(a), Some(b)) => !cells_identical(a, b),
            _ => true,
        })
        .collect();
    let identical = mismatched_cells.is_empty() && record.checks == fresh.checks && record.status == fresh.status;
    Ok(RerunReport { identical, mismatched_cells, fresh })
}

/// Bit-level equality through the serialised form (shortest round-trip
/// floats, so equal text means equal bits).
fn cells_identical(a: &Cell, b: &Cell) -> bool {
    match (serde_json::to_string(a), serde_json::to_string(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `prior, mu_norm, risk, se`
    Risk,
    /// `prior, mu_norm, side, value, error`
    Bridge,
    /// `prior, n, gap, se`
    Blyth,
    /// `prior, p, condition, verdict, value`
    Admissibility,
    /// `mu, gap, loss_g0, loss_g`
    Truncation,
}

impl PlotKind {
    pub const NAMES: [&'static str; 5] = ["risk", "bridge", "blyth", "admissibility", "truncation"];

    pub fn default_for(kind: ExperimentKind) -> PlotKind {
        match kind {
            ExperimentKind::RiskTable | ExperimentKind::DominanceScan => PlotKind::Risk,
            ExperimentKind::VerifyBridge => PlotKind::Bridge,
            ExperimentKind::BlythRun => PlotKind::Blyth,
            ExperimentKind::CheckAdmissibility => PlotKind::Admissibility,
            ExperimentKind::TruncationDemo => PlotKind::Truncation,
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "risk" => Ok(PlotKind::Risk),
            "bridge" => Ok(PlotKind::Bridge),
            "blyth" => Ok(PlotKind::Blyth),
            "admissibility" => Ok(PlotKind::Admissibility),
            "truncation" => Ok(PlotKind::Truncation),
            _ => Err(Error::invalid("kind", format!("unknown plot kind `{s}` (one of {})", PlotKind::NAMES.join(", ")))),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Long-format CSV (RFC 4180 quoting, shortest round-trip floats).
pub fn emit_plotdata(record: &RunRecord, kind: &str) -> Result<String> {
    let kind: PlotKind = kind.parse()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut rows = 0usize;
    match kind {
        PlotKind::Risk => {
            w.write_record(["prior", "mu_norm", "risk", "se"]).map_err(io)?;
            for c in &record.cells {
                if let Cell::Risk { series, mu_norm, estimate } = c {
                    w.write_record([series.clone(), num(*mu_norm), num(estimate.value), num(estimate.std_error)])
                        .map_err(io)?;
                    rows += 1;
                }
            }
        }
        PlotKind::Bridge => {
            w.write_record(["prior", "mu_norm", "side", "value", "error"]).map_err(io)?;
            for c in &record.cells {
                if let Cell::Bridge { prior, mu_norm, report } = c {
                    if let Some(l) = &report.lhs {
                        w.write_record([prior.clone(), num(*mu_norm), "lhs".into(), num(l.value), num(l.std_error)])
                            .map_err(io)?;
                        rows += 1;
                    }
                    if let Some(r) = &report.rhs {
                        w.write_record([prior.clone(), num(*mu_norm), "rhs".into(), num(r.value), num(r.error_bound)])
                            .map_err(io)?;
                        rows += 1;
                    }
                }
            }
        }
        PlotKind::Blyth => {
            w.write_record(["prior", "n", "gap", "se"]).map_err(io)?;
            for c in &record.cells {
                if let Cell::BlythGap { prior, gap } = c {
                    w.write_record([prior.clone(), gap.n.to_string(), num(gap.estimate.value), num(gap.estimate.std_error)])
                        .map_err(io)?;
                    rows += 1;
                }
            }
        }
        PlotKind::Admissibility => {
            w.write_record(["prior", "p", "condition", "verdict", "value"]).map_err(io)?;
            for c in &record.cells {
                if let Cell::Admissibility { report } = c {
                    let label = report.prior.label();
                    let mut conds = vec![&report.growth, &report.gradient, &report.decay, &report.strict_decay];
                    conds.extend(report.flatness.iter());
                    for v in conds {
                        let cond = serde_json::to_value(v.condition).ok().and_then(|s| s.as_str().map(String::from));
                        let verdict = serde_json::to_value(v.verdict).ok().and_then(|s| s.as_str().map(String::from));
                        w.write_record([
                            label.clone(),
                            report.p.to_string(),
                            cond.unwrap_or_default(),
                            verdict.unwrap_or_default(),
                            opt(v.value),
                        ])
                        .map_err(io)?;
                        rows += 1;
                    }
                    let route = serde_json::to_value(report.route).ok().and_then(|s| s.as_str().map(String::from));
                    w.write_record([label, report.p.to_string(), "route".into(), route.unwrap_or_default(), String::new()])
                        .map_err(io)?;
                    rows += 1;
                }
            }
        }
        PlotKind::Truncation => {
            w.write_record(["mu", "gap", "loss_g0", "loss_g"]).map_err(io)?;
            for c in &record.cells {
                if let Cell::LossGap { mu, gap, loss_g0, loss_g } = c {
                    w.write_record([num(*mu), num(*gap), opt(*loss_g0), opt(*loss_g)]).map_err(io)?;
                    rows += 1;
                }
            }
        }
    }
    if rows == 0 {
        return Err(Error::invalid("kind", format!("record of `{}` has no {kind:?} series", record.config.experiment)));
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Where a run's primary output goes. `dir_override` (normally the
/// environment variable) replaces only the directory.
pub fn resolve_output(config: &ExperimentConfig, dir_override: Option<&Path>) -> PathBuf {
    let path = config
        .output
        .path
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(format!("{}.{}", config.experiment, config.output.format.extension())));
    match dir_override {
        Some(dir) => dir.join(path.file_name().map(PathBuf::from).unwrap_or(path)),
        None => path,
    }
}

/// Write the record (JSON) or its default table plus a `.record.json`
/// sidecar (CSV). Returns the files written.
pub fn write_outputs(record: &RunRecord, dir_override: Option<&Path>) -> Result<Vec<PathBuf>> {
    let path = resolve_output(&record.config, dir_override);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let json = record.to_json()?;
    match record.config.output.format {
        OutputFormat::Json => {
            std::fs::write(&path, json)?;
            Ok(vec![path])
        }
        OutputFormat::Csv => {
            let kind = PlotKind::default_for(record.config.experiment);
            let name = PlotKind::NAMES[kind as usize];
            let mut written = Vec::new();
            // a failed run may have no rows; the record is still written
            if let Ok(table) = emit_plotdata(record, name) {
                std::fs::write(&path, table)?;
                written.push(path.clone());
            }
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let sidecar = path.with_file_name(format!("{stem}.record.json"));
            std::fs::write(&sidecar, json)?;
            written.push(sidecar);
            Ok(written)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::default_for(kind);
        c.budget.n = 4096;
        c
    }

    #[test]
    fn parses_documented_example() {
        let text = "\
experiment = risk-table   # comment
model.p = 3
model.vx = 1
model.vy = 1
prior.1.kind = uniform
prior.2.kind = power
prior.2.b = 1
mu.radii = 0, 1, 2, 4
budget.n = 20000
seed = 7
";
        let c = parse_config(text, None).unwrap();
        assert_eq!(c.experiment, ExperimentKind::RiskTable);
        assert_eq!(c.priors, vec![PriorFamilySpec::Uniform, PriorFamilySpec::Power { b: 1.0 }]);
        assert_eq!(c.mu_grid.radii, vec![0.0, 1.0, 2.0, 4.0]);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn canonical_text_round_trips() {
        for kind in ExperimentKind::ALL {
            let mut c = ExperimentConfig::default_for(kind);
            if kind == ExperimentKind::CheckAdmissibility {
                c.priors.push(PriorFamilySpec::Blyth { base: Box::new(PriorFamilySpec::Power { b: 0.5 }), n: 4 });
                c.priors.push(PriorFamilySpec::Gaussian { tau2: 0.3 });
            }
            c.output.path = Some(PathBuf::from("out/x.json"));
            let back = parse_config(&c.to_text(), None).unwrap();
            assert_eq!(back, c, "{kind}");
        }
    }

    #[test]
    fn diagnostics_carry_line_and_field() {
        let cases = [
            ("experiment = risk-table\nmodel.p = three\n", 2, "model.p"),
            ("experiment = risk-table\nfoo = 1\n", 2, "foo"),
            ("experiment = risk-table\nmodel.p 3\n", 2, ""),
            ("experiment = risk-table\nseed = 1\nseed = 2\n", 3, "seed"),
            ("experiment = risk-table\nprior.1.kind = cauchy\n", 2, "prior.1.kind"),
            ("experiment = risk-table\nprior.1.kind = power\n", 2, "prior.1.b"),
            ("experiment = risk-table\nprior.1.kind = uniform\nprior.1.tau2 = 2\n", 3, "prior.1.tau2"),
            ("experiment = risk-table\nprior.2.kind = uniform\n", 2, "prior.2"),
            ("experiment = blyth-run\nmodel.p = 3\n", 0, "model.p"),
            ("experiment = risk-table\nmodel.p = 1\nprior.1.kind = harmonic\n", 3, "prior.1.kind"),
            ("experiment = risk-table\nmodel.vx = -1\n", 2, "model"),
            ("experiment = risk-table\nmu.direction = 1, 0\n", 2, "mu.direction"),
        ];
        for (text, line, field) in cases {
            match parse_config(text, None) {
                Err(Error::Config { line: l, field: f, .. }) => {
                    assert_eq!((l, f.as_str()), (line, field), "{text}");
                }
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(parse_config("model.p = 4\n", Some(ExperimentKind::RiskTable)).is_ok());
        assert!(matches!(
            parse_config("experiment = blyth-run\n", Some(ExperimentKind::RiskTable)),
            Err(Error::Config { line: 1, .. })
        ));
    }

    #[test]
    fn record_json_round_trip_is_lossless() {
        for kind in [ExperimentKind::RiskTable, ExperimentKind::TruncationDemo] {
            let mut c = small(kind);
            c.mu_grid.radii = vec![0.0, 1.5];
            let rec = run(&c).unwrap();
            let back = RunRecord::from_json(&rec.to_json().unwrap()).unwrap();
            assert_eq!(back, rec);
        }
    }

    #[test]
    fn schema_version_is_checked() {
        let rec = run(&small(ExperimentKind::TruncationDemo)).unwrap();
        let text = rec.to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(RunRecord::from_json(&text).is_err());
    }

    #[test]
    fn rerun_is_bit_exact_and_worker_independent() {
        let mut c = small(ExperimentKind::DominanceScan);
        c.mu_grid.radii = vec![0.0, 2.0];
        c.budget.n = 5000;
        let rec = run(&c).unwrap();
        let again = rerun(&rec).unwrap();
        assert!(again.identical, "{:?}", again.mismatched_cells);
        c.workers = 4;
        let par = run(&c).unwrap();
        assert_eq!(
            serde_json::to_string(&par.cells).unwrap(),
            serde_json::to_string(&rec.cells).unwrap()
        );
    }

    #[test]
    fn rerun_detects_tampering() {
        let mut rec = run(&small(ExperimentKind::TruncationDemo)).unwrap();
        if let Some(Cell::LossGap { gap, .. }) = rec.cells.iter_mut().find(|c| matches!(c, Cell::LossGap { .. })) {
            *gap = f64::from_bits(gap.to_bits() + 1);
        }
        let r = rerun(&rec).unwrap();
        assert!(!r.identical);
        assert_eq!(r.mismatched_cells.len(), 1);
    }

    #[test]
    fn truncation_demo_passes() {
        let rec = run(&ExperimentConfig::default_for(ExperimentKind::TruncationDemo)).unwrap();
        assert_eq!(rec.status, Status::Pass, "{:#?}", rec.checks);
        let Some(Cell::Truncation { summary }) = rec.cells.first() else { panic!() };
        assert!((summary.lift - 2.0).abs() < 1e-12);
        assert_eq!(rec.cells.len(), 5);
    }

    #[test]
    fn check_admissibility_uniform_routes() {
        let mut c = ExperimentConfig::default_for(ExperimentKind::CheckAdmissibility);
        c.budget.flatness_n = 0;
        let rec = run(&c).unwrap();
        assert_eq!(rec.status, Status::Pass, "{:#?}", rec.checks);
        let routes: Vec<Route> = rec
            .cells
            .iter()
            .filter_map(|c| match c {
                Cell::Admissibility { report } => Some(report.route),
                _ => None,
            })
            .collect();
        assert_eq!(routes.len(), 3);
        assert_ne!(routes[0], Route::None);
        assert_ne!(routes[1], Route::None);
        assert_eq!(routes[2], Route::None);
    }

    #[test]
    fn numerical_failures_land_in_the_record() {
        let mut c = ExperimentConfig::default_for(ExperimentKind::CheckAdmissibility);
        c.priors = vec![PriorFamilySpec::Harmonic];
        c.dims = vec![1, 3];
        let rec = run(&c).unwrap();
        assert_eq!(rec.status, Status::Error);
        assert_eq!(rec.failures().count(), 1);
        assert_eq!(rec.status.exit_code(), 1);
    }

    #[test]
    fn plotdata_columns_and_reload() {
        let mut c = small(ExperimentKind::DominanceScan);
        c.mu_grid.radii = vec![0.0, 1.0];
        let rec = run(&c).unwrap();
        let table = emit_plotdata(&rec, "risk").unwrap();
        let mut rdr = csv::Reader::from_reader(table.as_bytes());
        assert_eq!(rdr.headers().unwrap(), vec!["prior", "mu_norm", "risk", "se"]);
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        let risks: Vec<&RiskEstimate> = rec
            .cells
            .iter()
            .filter_map(|c| match c {
                Cell::Risk { estimate, .. } => Some(estimate),
                _ => None,
            })
            .collect();
        assert_eq!(rows.len(), risks.len());
        for (row, est) in rows.iter().zip(risks) {
            let v: f64 = row[2].parse().unwrap();
            assert!(((v - est.value) / est.value).abs() < 1e-12);
        }
        assert!(emit_plotdata(&rec, "histogram").is_err());
        assert!(emit_plotdata(&rec, "blyth").is_err());
    }

    #[test]
    fn output_dir_override_keeps_file_name() {
        let mut c = ExperimentConfig::default_for(ExperimentKind::RiskTable);
        c.output.path = Some(PathBuf::from("a/b/table.json"));
        assert_eq!(resolve_output(&c, None), PathBuf::from("a/b/table.json"));
        assert_eq!(resolve_output(&c, Some(Path::new("/tmp/x"))), PathBuf::from("/tmp/x/table.json"));
        c.output.path = None;
        assert_eq!(resolve_output(&c, None), PathBuf::from("results/risk-table.json"));
    }

    #[test]
    fn csv_output_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let rec = run(&small(ExperimentKind::TruncationDemo)).unwrap();
        let mut rec_csv = rec.clone();
        rec_csv.config.output.format = OutputFormat::Csv;
        rec_csv.config.output.path = Some(PathBuf::from("t.csv"));
        let files = write_outputs(&rec_csv, Some(dir.path())).unwrap();
        assert_eq!(files, vec![dir.path().join("t.csv"), dir.path().join("t.record.json")]);
        let back = RunRecord::load(&files[1]).unwrap();
        assert_eq!(back, rec_csv);
    }
}
