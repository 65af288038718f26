//! Plain-text key=value configuration files. Flags always override file
//! values; unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{CliError, CliResult};

pub struct FileConfig {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl FileConfig {
    pub fn empty() -> Self {
        Self { values: BTreeMap::new() }
    }

    /// Loads a config file. Lines are `key = value`; blank lines and
    /// lines starting with `#` are ignored; `-` and `_` in keys are
    /// interchangeable. Later entries override earlier ones.
    pub fn load(path: Option<&Path>, known_keys: &[&str]) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::empty());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    i + 1
                )));
            };
            let key = normalize(key);
            if !known_keys.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}:{}: unknown key '{key}' (known keys: {})",
                    path.display(),
                    i + 1,
                    known_keys.join(", ")
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Parses a value from the file; a malformed value is a usage error.
    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::Usage(format!("config key '{key}': cannot parse '{raw}': {e}"))
            }),
        }
    }
}

/// Flag value if given, else config-file value, else none.
pub fn merge<T: FromStr>(flag: Option<T>, file: &FileConfig, key: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_cfg(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_and_merges() {
        let f = write_cfg("# comment\nalpha = 0.05\nburn-in = 250\n\nseed=9\n");
        let cfg = FileConfig::load(Some(f.path()), &["alpha", "burn_in", "seed"]).unwrap();
        assert_eq!(cfg.get::<f64>("alpha").unwrap(), Some(0.05));
        assert_eq!(cfg.get::<usize>("burn_in").unwrap(), Some(250));
        assert_eq!(merge(Some(1u64), &cfg, "seed").unwrap(), Some(1));
        assert_eq!(merge(None::<u64>, &cfg, "seed").unwrap(), Some(9));
        assert_eq!(merge(None::<f64>, &cfg, "nope").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        let f = write_cfg("whatever = 1\n");
        assert!(matches!(
            FileConfig::load(Some(f.path()), &["alpha"]),
            Err(CliError::Usage(_))
        ));
        let f = write_cfg("no equals sign\n");
        assert!(matches!(
            FileConfig::load(Some(f.path()), &["alpha"]),
            Err(CliError::Usage(_))
        ));
        let f = write_cfg("alpha = not-a-number\n");
        let cfg = FileConfig::load(Some(f.path()), &["alpha"]).unwrap();
        assert!(matches!(cfg.get::<f64>("alpha"), Err(CliError::Usage(_))));
    }

    #[test]
    fn missing_path_gives_empty_config() {
        let cfg = FileConfig::load(None, &["alpha"]).unwrap();
        assert_eq!(cfg.get::<f64>("alpha").unwrap(), None);
    }
}
