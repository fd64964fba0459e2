//! Experiment configuration: a TOML file, or the `config` object of a run
//! manifest.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::montecarlo::McConfig;
use crate::norms::SpaceGrid;
use crate::random_measure::{
    uniform_edges, BernoulliCell, BernoulliModel, PoissonModel, RandomMeasureModel,
};
use crate::regimes::OptimizerConfig;

use super::families::{FamilyConfig, KNOWN_FAMILIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pq_list: Vec<[f64; 2]>,
    pub model: ModelConfig,
    pub space_grid: SpaceGridConfig,
    pub families: Vec<FamilyConfig>,
    #[serde(default)]
    pub suites: SuitesConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub bands: BandsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `poisson` or `bernoulli`.
    pub kind: String,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_edges: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<BernoulliCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceGridConfig {
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

pub const SUITES: [&str; 5] = ["ratios", "hilbert", "bdg", "davis", "lemma"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuitesConfig {
    pub ratios: bool,
    pub hilbert: bool,
    /// Exponents for the Hilbert-space inequalities.
    pub hilbert_p: Vec<f64>,
    pub bdg: bool,
    pub davis: bool,
    /// Realizations per family and `q` for the big-jump check.
    pub davis_realizations: usize,
    pub lemma: bool,
    /// Random instances per deterministic norm inequality.
    pub lemma_instances: usize,
    pub lemma_seed: u64,
}

impl Default for SuitesConfig {
    fn default() -> Self {
        SuitesConfig {
            ratios: true,
            hilbert: false,
            hilbert_p: vec![1.25, 1.5, 2.0, 3.0, 4.0],
            bdg: false,
            davis: false,
            davis_realizations: 10_000,
            lemma: false,
            lemma_instances: 10_000,
            lemma_seed: 0,
        }
    }
}

impl SuitesConfig {
    /// Keeps only the named suites enabled.
    pub fn restrict(&mut self, names: &[String]) {
        let on = |s: &str| names.iter().any(|n| n == s);
        self.ratios = on("ratios");
        self.hilbert = on("hilbert");
        self.bdg = on("bdg");
        self.davis = on("davis");
        self.lemma = on("lemma");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandsConfig {
    /// Allowed range of `lhs / rhs` in the ratio suite.
    pub ratio: [f64; 2],
    /// Largest allowed max/min ratio across families at fixed `(p, q)`.
    pub spread: f64,
    /// Upper bound on the Hilbert-space moment ratios.
    pub hilbert: f64,
    /// Allowed range of both bracket ratios.
    pub bdg: [f64; 2],
}

impl Default for BandsConfig {
    fn default() -> Self {
        BandsConfig {
            ratio: [1.0 / 64.0, 64.0],
            spread: 64.0,
            hilbert: 64.0,
            bdg: [1.0 / 64.0, 64.0],
        }
    }
}

/// One violation, located by its config key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn diag(key: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    /// The file does not parse into the config schema.
    Syntax(Diagnostic),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "{e}"),
            LoadError::Syntax(d) => write!(f, "{d}"),
        }
    }
}

impl std::error::Error for LoadError {}

/// Reads a TOML config, or a JSON run manifest whose `config` member holds
/// the resolved configuration.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    parse_config(&text, path.extension().is_some_and(|e| e == "json"))
}

pub fn parse_config(text: &str, json: bool) -> Result<ExperimentConfig, LoadError> {
    if json || text.trim_start().starts_with('{') {
        let mut v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| LoadError::Syntax(diag("manifest", e.to_string())))?;
        let cfg = v
            .get_mut("config")
            .map(serde_json::Value::take)
            .ok_or_else(|| LoadError::Syntax(diag("config", "manifest has no `config` member")))?;
        serde_json::from_value(cfg).map_err(|e| LoadError::Syntax(diag("config", e.to_string())))
    } else {
        toml::from_str(text).map_err(|e| {
            let key = toml_key(&e, text).unwrap_or_else(|| "config".into());
            LoadError::Syntax(diag(key, e.message().to_string()))
        })
    }
}

/// Best-effort name of the offending key from a TOML error: the field named
/// in the message, else the dotted key on the line the error points at.
fn toml_key(e: &toml::de::Error, text: &str) -> Option<String> {
    let msg = e.message();
    for marker in ["missing field `", "unknown field `"] {
        if let Some(i) = msg.find(marker) {
            let rest = &msg[i + marker.len()..];
            return rest.find('`').map(|j| rest[..j].to_string());
        }
    }
    let at = e.span()?.start.min(text.len());
    let line_start = text[..at].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split_once('=')?.0.trim().trim_matches('"');
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim());
    Some(match table {
        Some(t) if !t.is_empty() => format!("{t}.{key}"),
        _ => key.to_string(),
    })
}

pub fn check_exponent(key: String, p: f64, out: &mut Vec<Diagnostic>) {
    if !(p.is_finite() && p > 1.0) {
        out.push(diag(key, format!("exponent must lie in (1, ∞), got {p}")));
    }
}

impl ExperimentConfig {
    /// Every semantic violation; empty means the config can run.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.pq_list.is_empty() {
            out.push(diag("pq_list", "must list at least one (p, q) pair"));
        }
        for (i, [p, q]) in self.pq_list.iter().enumerate() {
            check_exponent(format!("pq_list[{i}].p"), *p, &mut out);
            check_exponent(format!("pq_list[{i}].q"), *q, &mut out);
        }
        let model = match self.model.build() {
            Ok(m) => Some(m),
            Err(mut d) => {
                out.append(&mut d);
                None
            }
        };
        let grid = match self.space_grid.build() {
            Ok(g) => Some(g),
            Err(d) => {
                out.push(d);
                None
            }
        };
        if self.families.is_empty() {
            out.push(diag("families", "must define at least one integrand family"));
        }
        let mut names: Vec<&str> = Vec::new();
        for (i, f) in self.families.iter().enumerate() {
            if names.contains(&f.name.as_str()) {
                out.push(diag(format!("families[{i}].name"), format!("duplicate family name `{}`", f.name)));
            }
            names.push(&f.name);
            if !KNOWN_FAMILIES.contains(&f.kind.as_str()) {
                out.push(diag(
                    format!("families[{i}].kind"),
                    format!("unknown family `{}`; known families: {}", f.kind, KNOWN_FAMILIES.join(", ")),
                ));
            } else if let (Some(m), Some(g)) = (&model, &grid) {
                out.extend(f.check(i, m, g));
            }
        }
        if self.suites.hilbert {
            for (i, p) in self.suites.hilbert_p.iter().enumerate() {
                check_exponent(format!("suites.hilbert_p[{i}]"), *p, &mut out);
            }
        }
        if self.suites.davis && self.suites.davis_realizations == 0 {
            out.push(diag("suites.davis_realizations", "must be positive"));
        }
        if self.suites.lemma && self.suites.lemma_instances == 0 {
            out.push(diag("suites.lemma_instances", "must be positive"));
        }
        if self.mc.replicas < 2 {
            out.push(diag("mc.replicas", format!("need at least 2 replicas, got {}", self.mc.replicas)));
        }
        if !(self.optimizer.tol > 0.0 && self.optimizer.tol < 1.0) {
            out.push(diag("optimizer.tol", format!("must lie in (0, 1), got {}", self.optimizer.tol)));
        }
        if self.optimizer.max_iter == 0 {
            out.push(diag("optimizer.max_iter", "must be positive"));
        }
        for (key, [lo, hi]) in [("bands.ratio", self.bands.ratio), ("bands.bdg", self.bands.bdg)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                out.push(diag(key, format!("need 0 < lo ≤ hi < ∞, got [{lo}, {hi}]")));
            }
        }
        for (key, v) in [("bands.spread", self.bands.spread), ("bands.hilbert", self.bands.hilbert)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(diag(key, format!("must be positive and finite, got {v}")));
            }
        }
        out
    }

    pub fn pq_pairs(&self) -> Vec<(f64, f64)> {
        self.pq_list.iter().map(|[p, q]| (*p, *q)).collect()
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<RandomMeasureModel, Vec<Diagnostic>> {
        let mut out = Vec::new();
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            out.push(diag("model.horizon", format!("must be positive and finite, got {}", self.horizon)));
        }
        let model = match self.kind.as_str() {
            "poisson" => {
                let marks = self.marks.unwrap_or(1);
                let edges = match (&self.time_edges, self.time_cells) {
                    (Some(e), None) => e.clone(),
                    (None, Some(k)) if k > 0 => uniform_edges(self.horizon, k),
                    (None, None) => uniform_edges(self.horizon, 1),
                    (None, Some(_)) => {
                        out.push(diag("model.time_cells", "must be positive"));
                        vec![]
                    }
                    (Some(_), Some(_)) => {
                        out.push(diag("model.time_edges", "give either time_edges or time_cells, not both"));
                        vec![]
                    }
                };
                let n = edges.len().saturating_sub(1) * marks;
                let rates = match (&self.rates, self.rate) {
                    (Some(r), None) => r.clone(),
                    (None, Some(r)) => vec![r; n],
                    (None, None) => vec![1.0; n],
                    (Some(_), Some(_)) => {
                        out.push(diag("model.rates", "give either rates or rate, not both"));
                        vec![]
                    }
                };
                if let Some(i) = rates.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
                    out.push(diag(format!("model.rates[{i}]"), "rates must be nonnegative and finite"));
                }
                if self.cells.is_some() {
                    out.push(diag("model.cells", "only used by the bernoulli model"));
                }
                if !out.is_empty() {
                    return Err(out);
                }
                PoissonModel::new(edges, marks, rates)
                    .map(RandomMeasureModel::from)
                    .map_err(|e| vec![diag("model", e.to_string())])?
            }
            "bernoulli" => {
                let Some(cells) = &self.cells else {
                    out.push(diag("model.cells", "the bernoulli model needs a cell list"));
                    return Err(out);
                };
                for key in [
                    ("time_cells", self.time_cells.is_some()),
                    ("time_edges", self.time_edges.is_some()),
                    ("marks", self.marks.is_some()),
                    ("rate", self.rate.is_some()),
                    ("rates", self.rates.is_some()),
                ] {
                    if key.1 {
                        out.push(diag(format!("model.{}", key.0), "only used by the poisson model"));
                    }
                }
                if !out.is_empty() {
                    return Err(out);
                }
                BernoulliModel::new(self.horizon, cells.clone())
                    .map(RandomMeasureModel::from)
                    .map_err(|e| vec![diag("model.cells", e.to_string())])?
            }
            other => {
                out.push(diag("model.kind", format!("unknown model `{other}`; known models: poisson, bernoulli")));
                return Err(out);
            }
        };
        Ok(model)
    }
}

impl SpaceGridConfig {
    pub fn build(&self) -> Result<SpaceGrid, Diagnostic> {
        if let Some(i) = self.weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(diag(
                format!("space_grid.weights[{i}]"),
                format!("weights must be positive and finite, got {}", self.weights[i]),
            ));
        }
        let labels = self
            .labels
            .clone()
            .unwrap_or_else(|| (0..self.weights.len()).map(|i| format!("x{i}")).collect());
        SpaceGrid::with_labels(labels, self.weights.clone()).map_err(|e| diag("space_grid", e.to_string()))
    }
}
