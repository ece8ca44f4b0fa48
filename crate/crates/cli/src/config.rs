//! Run configuration read from a flat `key = value` file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mrtensor_core::ingest::{AttackDirection, FieldGeometry};
use mrtensor_core::{BetaRule, SolverConfig};
use serde::Deserialize;

/// Every key is optional; missing keys fall back to the library defaults.
#[derive(Debug, Default, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub events: Option<String>,
    pub tensor: Option<String>,
    pub model: Option<String>,
    pub out_dir: Option<String>,

    pub scales: Option<usize>,
    pub field_length: Option<f64>,
    pub field_width: Option<f64>,
    /// `left_to_right` or `right_to_left`.
    pub attack_direction: Option<String>,

    pub n_terms: Option<usize>,
    pub rank: Option<usize>,
    /// `per_positive` (β = beta · J) or `fixed`.
    pub beta_rule: Option<String>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub inner_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub seed: Option<u64>,
    pub em_memory_cap: Option<usize>,

    pub top_k: Option<usize>,
    pub render_scales: Option<Vec<usize>>,
    pub svg_edges: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        if config.scales == Some(0) {
            bail!("scales must be at least 1");
        }
        Ok(config)
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn geometry(&self) -> Result<FieldGeometry> {
        let base = FieldGeometry::default();
        let direction = match self.attack_direction.as_deref() {
            None | Some("left_to_right") => AttackDirection::LeftToRight,
            Some("right_to_left") => AttackDirection::RightToLeft,
            Some(other) => bail!("unknown attack_direction `{other}`"),
        };
        Ok(FieldGeometry::new(
            self.field_length.unwrap_or(base.length),
            self.field_width.unwrap_or(base.width),
            direction,
        )?)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let beta = match (self.beta_rule.as_deref(), self.beta) {
            (None, None) => d.beta,
            (None | Some("per_positive"), Some(c)) => BetaRule::PerPositive(c),
            (Some("per_positive"), None) => BetaRule::PerPositive(0.001),
            (Some("fixed"), Some(b)) => BetaRule::Fixed(b),
            (Some("fixed"), None) => bail!("beta_rule = \"fixed\" needs a beta value"),
            (Some(other), _) => bail!("unknown beta_rule `{other}`"),
        };
        let config = SolverConfig {
            n_terms: self.n_terms.unwrap_or(d.n_terms),
            rank: self.rank.unwrap_or(d.rank),
            beta,
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            max_inner: self.max_inner.unwrap_or(d.max_inner),
            inner_tol: self.inner_tol.unwrap_or(d.inner_tol),
            outer_tol: self.outer_tol.unwrap_or(d.outer_tol),
            seed: self.seed.unwrap_or(d.seed),
            em_memory_cap: self.em_memory_cap.unwrap_or(d.em_memory_cap),
        };
        config.validate()?;
        Ok(config)
    }
}
