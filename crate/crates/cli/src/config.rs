use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use groundplan::eval::{EmptyConvention, GoalStage, PlannerChoice};
use groundplan::goal::LlmConfig;
use groundplan::planner::SearchConfig;
use groundplan::scene::DEFAULT_THETA_MATCH;

/// Settings read from `--config`. Every field is optional in the file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub theta_match: f64,
    /// Detection noise for `genbench`.
    pub sigma: f64,
    /// Unset fields keep the command's own defaults.
    pub search: Option<SearchConfig>,
    pub planner: PlannerChoice,
    pub empty_convention: EmptyConvention,
    pub goal: GoalStage,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            theta_match: DEFAULT_THETA_MATCH,
            sigma: 0.0,
            search: None,
            planner: PlannerChoice::Search,
            empty_convention: EmptyConvention::One,
            goal: GoalStage::Structured,
            out_dir: PathBuf::from("out"),
            seed: 0,
            jobs: None,
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Endpoint settings with an empty URL and model, filled from flags.
pub fn default_llm() -> LlmConfig {
    serde_json::from_value(serde_json::json!({"base_url": "", "model": ""}))
        .expect("defaults deserialize")
}
