//! Plain-text `key=value` configuration files, flag-over-file resolution,
//! and the config hash stamped into every artifact sidecar.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ese_core::error::{Error, Result};

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "ESE_OUT_DIR";

/// Parsed `key=value` file. Lines starting with `#` and blank lines are
/// ignored; whitespace around keys and values is trimmed.
#[derive(Debug, Default)]
pub struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::empty());
        };
        let body = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut map = BTreeMap::new();
        for (lineno, raw) in body.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidConfig(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    lineno + 1
                )));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Error::InvalidConfig(format!("config key '{key}': cannot parse '{raw}': {e}"))
            }),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => parse_list(raw, key).map(Some),
        }
    }
}

/// Flag wins over the config file, which wins over the default.
pub fn pick<T>(flag: Option<T>, file: Result<Option<T>>, default: T) -> Result<T> {
    Ok(flag.or(file?).unwrap_or(default))
}

pub fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::InvalidConfig(format!("{what}: cannot parse '{s}': {e}")))
        })
        .collect()
}

/// Output directory: `--out` flag first, then `ESE_OUT_DIR`. Created if
/// missing.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = maybe_out_dir(flag).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "no output directory: pass --out or set {OUT_DIR_ENV}"
        ))
    })?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn maybe_out_dir(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hash of the resolved tunables (plus the seed) for one command. Paths are
/// deliberately excluded so the hash is stable across working directories;
/// artifact identity comes from content, the hash records the knobs.
pub fn config_hash(command: &str, entries: &[(&str, String)]) -> String {
    let mut sorted: Vec<&(&str, String)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut canonical = command.to_string();
    for (key, value) in sorted {
        canonical.push('\n');
        canonical.push_str(key);
        canonical.push('=');
        canonical.push_str(value);
    }
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}
