//! `key = value` run configuration with layered resolution:
//! command-line flags over the config file over built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("missing required setting '{0}'")]
    Missing(String),
    #[error("invalid value '{value}' for '{key}': {detail}")]
    Invalid { key: String, value: String, detail: String },
    #[error("cannot read config {path}: {detail}")]
    Read { path: String, detail: String },
}

pub type Settings = BTreeMap<String, String>;

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse(text: &str) -> Result<Settings, ConfigError> {
    let mut out = Settings::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |detail: &str| ConfigError::Parse { line: n + 1, detail: detail.to_string() };
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(err("malformed key"));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(err(&format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Settings, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    parse(&text)
}

/// A key accepted by a subcommand, with its default if it has one.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
}

pub const fn key(name: &'static str, default: &'static str) -> Key {
    Key { name, default: Some(default) }
}

pub const fn optional(name: &'static str) -> Key {
    Key { name, default: None }
}

/// Fully resolved settings for one subcommand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub command: String,
    pub values: Settings,
}

/// Layers `flags` over `file` over the defaults in `keys`. Keys in the file
/// that the command does not accept are rejected.
pub fn resolve(command: &str, keys: &[Key], file: Option<Settings>, flags: Settings) -> Result<RunConfig, ConfigError> {
    let mut values = Settings::new();
    for k in keys {
        if let Some(d) = k.default {
            values.insert(k.name.to_string(), d.to_string());
        }
    }
    for (k, v) in file.into_iter().flatten().chain(flags) {
        if !keys.iter().any(|key| key.name == k) {
            return Err(ConfigError::UnknownKey(k));
        }
        values.insert(k, v);
    }
    Ok(RunConfig { command: command.to_string(), values })
}

impl RunConfig {
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get_opt(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn get_opt<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Invalid {
                    key: key.to_string(),
                    value: v.to_string(),
                    detail: e.to_string(),
                })
            })
            .transpose()
    }

    /// Comma-separated list.
    pub fn get_list<T>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.raw(key).ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        raw.split(',')
            .map(|part| {
                part.trim().parse().map_err(|e: T::Err| ConfigError::Invalid {
                    key: key.to_string(),
                    value: raw.to_string(),
                    detail: e.to_string(),
                })
            })
            .collect()
    }

    /// Text form with a version header; parsing it and resolving again
    /// reproduces the same text.
    pub fn render(&self) -> String {
        let mut out = format!("# fakesent {VERSION} {}\n", self.command);
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Writes the rendered config to `<output>.conf`.
    pub fn write_beside(&self, output: &Path) -> std::io::Result<()> {
        let mut name = output.as_os_str().to_owned();
        name.push(".conf");
        std::fs::write(Path::new(&name), self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[Key] = &[key("epochs", "15"), key("batch", "64"), key("lr", "0.1"), optional("seed")];

    fn flags(pairs: &[(&str, &str)]) -> Settings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_without_file_or_flags() {
        let cfg = resolve("train", KEYS, None, Settings::new()).unwrap();
        assert_eq!(cfg.get::<usize>("epochs").unwrap(), 15);
        assert_eq!(cfg.get::<usize>("batch").unwrap(), 64);
        assert_eq!(cfg.get_opt::<u64>("seed").unwrap(), None);
    }

    #[test]
    fn flags_override_file() {
        let file = parse("lr = 0.05\nepochs=3\n").unwrap();
        let cfg = resolve("train", KEYS, Some(file), flags(&[("lr", "0.2")])).unwrap();
        assert_eq!(cfg.get::<f64>("lr").unwrap(), 0.2);
        assert_eq!(cfg.get::<usize>("epochs").unwrap(), 3);
    }

    #[test]
    fn rendered_config_is_a_fixed_point() {
        let cfg = resolve("train", KEYS, None, flags(&[("seed", "9"), ("lr", "0.3")])).unwrap();
        let text = cfg.render();
        let again = resolve("train", KEYS, Some(parse(&text).unwrap()), Settings::new()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.render(), text);
        assert!(text.starts_with(&format!("# fakesent {VERSION} train\n")));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse("just words"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse("a = 1\n# c\na = 2"), Err(ConfigError::Parse { line: 3, .. })));
        assert!(matches!(parse(" = 1"), Err(ConfigError::Parse { .. })));
        assert_eq!(
            resolve("train", KEYS, Some(parse("colour = red").unwrap()), Settings::new()),
            Err(ConfigError::UnknownKey("colour".into()))
        );
    }

    #[test]
    fn typed_access() {
        let cfg = resolve("x", KEYS, None, flags(&[("lr", "fast")])).unwrap();
        assert!(matches!(cfg.get::<f64>("lr"), Err(ConfigError::Invalid { .. })));
        assert_eq!(cfg.get::<u64>("seed"), Err(ConfigError::Missing("seed".into())));
        let cfg = resolve("x", &[key("mlp", "1024, 512")], None, Settings::new()).unwrap();
        assert_eq!(cfg.get_list::<usize>("mlp").unwrap(), vec![1024, 512]);
    }
}
