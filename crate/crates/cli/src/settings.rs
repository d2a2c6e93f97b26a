//! Layered settings: command-line flag, then config file, then default.
//! Every resolved value is recorded so it can be written back out as a
//! config file that reproduces the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Flat `key = value` text. Blank lines and `#` comments are ignored; dashes
/// in keys are read as underscores.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", no + 1))?;
        map.insert(normalize(k.trim()), v.trim().to_string());
    }
    Ok(map)
}

pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_key_values(&text).with_context(|| format!("parsing {}", path.display()))
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            resolved: Vec::new(),
        }
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        Ok(Self::new(match path {
            Some(p) => read_key_values(p)?,
            None => BTreeMap::new(),
        }))
    }

    /// Adds keys that are used only where neither a flag nor the config file
    /// gives a value.
    pub fn with_fallback(&mut self, extra: BTreeMap<String, String>) {
        for (k, v) in extra {
            self.file.entry(k).or_insert(v);
        }
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(text.parse::<T>().map_err(|e| anyhow!("config key {key}: {e}"))?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        if flag.is_none() && !self.file.contains_key(key) {
            self.resolved.push((key.to_string(), default.to_string()));
            return Ok(default);
        }
        Ok(self.opt(key, flag)?.expect("value present"))
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => bail!("missing required setting --{}", key.replace('_', "-")),
        }
    }

    /// Records a derived value that has no flag of its own.
    pub fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        let file = parse_key_values("# comment\nkappa = 0.5\nm0=12\n\nmin-leaf = 4\n").unwrap();
        let mut s = Settings::new(file);
        assert_eq!(s.get("kappa", Some(0.9), 1.0).unwrap(), 0.9);
        assert_eq!(s.get("m0", None, 20usize).unwrap(), 12);
        assert_eq!(s.get("min_leaf", None, 8usize).unwrap(), 4);
        assert_eq!(s.get("seed", None, 7u64).unwrap(), 7);
        assert_eq!(s.opt::<f64>("q0", None).unwrap(), None);
        assert!(s.require::<f64>("theta_sq", None).is_err());
        assert_eq!(s.render(), "kappa = 0.9\nm0 = 12\nmin_leaf = 4\nseed = 7\n");
    }

    #[test]
    fn rendered_settings_parse_back() {
        let mut s = Settings::default();
        s.get("sigma", None, 0.15f64).unwrap();
        s.record("scenario", "s1");
        let back = parse_key_values(&s.render()).unwrap();
        assert_eq!(back["sigma"], "0.15");
        assert_eq!(back["scenario"], "s1");
    }

    #[test]
    fn fallback_does_not_override_file() {
        let mut s = Settings::new(parse_key_values("q0 = 3").unwrap());
        s.with_fallback(parse_key_values("q0 = 4\ntheta_sq = 0.02").unwrap());
        assert_eq!(s.opt::<f64>("q0", None).unwrap(), Some(3.0));
        assert_eq!(s.opt::<f64>("theta_sq", None).unwrap(), Some(0.02));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(parse_key_values("kappa 0.5").is_err());
        let mut s = Settings::new(parse_key_values("kappa = x").unwrap());
        assert!(s.get("kappa", None, 1.0f64).is_err());
    }
}
