//! Key-value run configuration (TOML). A config file may set everything;
//! command-line flags override file values field by field.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::LabError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub method: Option<String>,
    pub correction: Option<String>,
    /// Either `"ladder:<start>,<count>"`, a comma list string, or an array.
    pub steps: Option<StepsSpec>,
    pub norms: Option<String>,
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
    /// `csv` or `pretty`.
    pub format: Option<String>,
    /// `method:tau` reference override.
    pub reference: Option<String>,
    pub parallel: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    /// Paper-scale grid and reference step instead of desk scale.
    pub full_scale: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StepsSpec {
    Text(String),
    List(Vec<f64>),
}

pub fn load(path: &Path) -> Result<FileConfig, LabError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| LabError::BadConfig(format!("{}: {e}", path.display())))
}

/// Parse a steps specification: `ladder:<start>,<count>` (halving ladder) or
/// an explicit comma list.
pub fn parse_steps_text(s: &str) -> Result<Vec<f64>, LabError> {
    if let Some(rest) = s.strip_prefix("ladder:") {
        let (start, count) = rest
            .split_once(',')
            .ok_or_else(|| LabError::BadConfig(format!("bad ladder spec `{s}`")))?;
        let start: f64 = start
            .trim()
            .parse()
            .map_err(|_| LabError::BadConfig(format!("bad ladder start in `{s}`")))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| LabError::BadConfig(format!("bad ladder count in `{s}`")))?;
        if !(start > 0.0) || count < 2 {
            return Err(LabError::BadConfig(format!(
                "ladder needs a positive start and count ≥ 2, got `{s}`"
            )));
        }
        Ok((0..count).map(|i| start / (1u64 << i) as f64).collect())
    } else {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| LabError::BadConfig(format!("bad step value `{t}`")))
            })
            .collect()
    }
}

pub fn parse_steps(spec: &StepsSpec) -> Result<Vec<f64>, LabError> {
    match spec {
        StepsSpec::Text(s) => parse_steps_text(s),
        StepsSpec::List(v) => Ok(v.clone()),
    }
}

/// Parse a `method:tau` reference override.
pub fn parse_reference(s: &str) -> Result<(String, f64), LabError> {
    let (method, tau) = s
        .rsplit_once(':')
        .ok_or_else(|| LabError::BadConfig(format!("reference must be `method:tau`, got `{s}`")))?;
    let tau: f64 = tau
        .parse()
        .map_err(|_| LabError::BadConfig(format!("bad reference step in `{s}`")))?;
    if !(tau > 0.0) {
        return Err(LabError::BadConfig(format!("reference step must be positive in `{s}`")));
    }
    Ok((method.to_string(), tau))
}
