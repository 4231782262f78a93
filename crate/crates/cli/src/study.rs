//! TOML study configs: the keys of `MCStudyConfig` plus an optional `model`.
//!
//! ```toml
//! model = "proportion"
//! schemes = ["tille", "midzuno-pips", "systematic"]
//! n = 40
//! reps = 1000
//! seed = 2004
//! ```

use anyhow::{bail, Context, Result};
use ce_survey::mc::MCStudyConfig;
use ce_survey::model::ModelKind;

#[derive(Debug)]
pub struct StudyFile {
    pub model: ModelKind,
    pub config: MCStudyConfig,
    /// Whether the file set `seed` itself.
    pub has_seed: bool,
}

pub fn parse(text: &str) -> Result<StudyFile> {
    let mut table: toml::Table = toml::from_str(text).context("parsing study config")?;
    let model = match table.remove("model") {
        None => ModelKind::Proportion,
        Some(toml::Value::String(s)) => s.parse()?,
        Some(other) => bail!("`model` must be a string, got {other}"),
    };
    let has_seed = table.contains_key("seed");
    let config: MCStudyConfig = table.try_into().context("study config")?;
    Ok(StudyFile { model, config, has_seed })
}
