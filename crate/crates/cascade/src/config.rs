//! Layered configuration: command-line flags override `CASCADE_*`
//! environment variables (handled by clap), which override a TOML file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const DEFAULT_CONFIG_FILE: &str = "cascade.toml";

/// Settings that may come from the config file. Every field is optional;
/// absent fields fall back to built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub labels: Option<Vec<PathBuf>>,
    pub cheatsheet: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub workers: Option<usize>,
    pub ordered: Option<bool>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub classifier: Option<String>,
    pub classifier_timeout_secs: Option<u64>,
    pub min_confidence: Option<f64>,
    pub trace_budget_secs: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

impl FileConfig {
    pub fn parse(path: &Path, text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Loads an explicitly named file (which must exist), or
    /// `cascade.toml` in the working directory if present.
    pub fn load(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let path = match explicit {
            Some(p) => p.to_owned(),
            None => {
                let p = PathBuf::from(DEFAULT_CONFIG_FILE);
                if !p.is_file() {
                    return Ok(FileConfig::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        Self::parse(&path, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys_and_rejects_unknown_ones() {
        let c = FileConfig::parse(Path::new("c.toml"), "workers = 4\nlambda = 0.5\nlabels = [\"a.csv\"]\n").unwrap();
        assert_eq!(c.workers, Some(4));
        assert_eq!(c.lambda, Some(0.5));
        assert_eq!(c.labels, Some(vec![PathBuf::from("a.csv")]));
        let err = FileConfig::parse(Path::new("c.toml"), "wrokers = 4").unwrap_err();
        assert!(err.to_string().contains("c.toml"));
    }

    #[test]
    fn explicit_missing_file_is_an_error() {
        assert!(matches!(
            FileConfig::load(Some(Path::new("/nonexistent/cascade.toml"))),
            Err(ConfigError::Io { .. })
        ));
    }
}
