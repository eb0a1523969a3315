//! TOML configuration files.
//!
//! Every section is optional; absent keys take their defaults.
//!
//! ```toml
//! [sim]
//! family = "bernoulli_logit"
//! n = 100000
//!
//! [run]
//! strategy = "pasa"
//! k = 10
//! q = 10
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CsvSchema, SimSpec};
use crate::error::{PasaError, Result};
use crate::executor::RunConfig;
use crate::report::{BenchConfig, SelectionConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateSection {
    pub reps: Option<usize>,
    pub base_seed: Option<u64>,
    pub level: Option<f64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub sim: Option<SimSpec>,
    pub run: Option<RunConfig>,
    pub replicate: ReplicateSection,
    pub schema: Option<CsvSchema>,
    pub select: Option<SelectionConfig>,
    pub bench: Option<BenchConfig>,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| PasaError::Config(e.to_string()))?;
        let cfg: Self = toml::from_str(text).map_err(|e| PasaError::Config(e.to_string()))?;
        let known = toml::Table::try_from(&cfg).map_err(|e| PasaError::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&raw, &known, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(PasaError::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PasaError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Keys of `raw` that do not survive a parse and re-serialize.
fn unknown_keys(raw: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (key, value) in raw {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (value, known.get(key)) {
            (_, None) => out.push(path),
            (toml::Value::Table(r), Some(toml::Value::Table(k))) => unknown_keys(r, k, &path, out),
            (toml::Value::Array(r), Some(toml::Value::Array(k))) => {
                for (i, (rv, kv)) in r.iter().zip(k).enumerate() {
                    if let (toml::Value::Table(rt), toml::Value::Table(kt)) = (rv, kv) {
                        unknown_keys(rt, kt, &format!("{path}[{i}]"), out);
                    }
                }
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::Strategy;
    use crate::glm::GlmFamily;

    #[test]
    fn unknown_nested_keys_rejected() {
        let err = FileConfig::from_toml("[run]\nk = 3\nkk = 4\n").unwrap_err();
        assert!(err.to_string().contains("run.kk"), "{err}");
        assert!(FileConfig::from_toml("[sim]\nn = 10\nbogus = true\n").is_err());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg = FileConfig::from_toml(
            r#"
            [sim]
            family = "bernoulli_logit"
            n = 5000

            [run]
            strategy = "mapreduce"
            k = 4
            update_max_iter = 7

            [replicate]
            reps = 20
            "#,
        )
        .unwrap();
        let sim = cfg.sim.unwrap();
        assert_eq!(sim.family, GlmFamily::BernoulliLogit);
        assert_eq!(sim.n, 5000);
        assert_eq!(sim.p, 5);
        let run = cfg.run.unwrap();
        assert_eq!(run.strategy, Strategy::Mapreduce);
        assert_eq!(run.q, 10);
        assert_eq!(run.stream.solver.update_max_iter, 7);
        assert_eq!(run.stream.solver.max_iter, 50);
        assert_eq!(cfg.replicate.reps, Some(20));
    }

    #[test]
    fn unknown_section_is_a_config_error() {
        assert!(matches!(FileConfig::from_toml("[nope]\nx = 1"), Err(PasaError::Config(_))));
    }

    #[test]
    fn empty_file_is_valid() {
        assert_eq!(FileConfig::from_toml("").unwrap(), FileConfig::default());
    }
}
