//! JSON run configs with dotted-key overrides.
//!
//! Precedence is flags over file over defaults. Relative paths in the file
//! resolve against the file's directory; relative paths given as flags
//! resolve against the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

pub trait RunConfig: Serialize + DeserializeOwned + Default {
    /// Makes every relative path absolute against `base`.
    fn resolve_paths(&mut self, base: &Path);
}

pub fn resolve_path(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        let joined = base.join(&*p);
        *p = std::path::absolute(&joined).unwrap_or(joined);
    }
}

pub fn resolve_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        resolve_path(base, p);
    }
}

/// Splits `--key value` / `--key=value` pairs. Keys may be dotted.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(key) = a.strip_prefix("--") else {
            return Err(CliError::Usage(format!("unexpected argument {a:?}; overrides look like --key value")));
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(CliError::Usage(format!("malformed override key {key:?}")));
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Bare words become strings; anything that parses as JSON is taken as JSON.
fn parse_value(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("cannot set {key}: {} is not an object", parts[..i].join("."))))?;
        let slot = obj.get_mut(*part).ok_or_else(|| CliError::Config(format!("unknown key {key}")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    unreachable!("split always yields at least one part")
}

fn decode<T: DeserializeOwned>(v: Value, origin: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

pub fn parse_config_bytes<T: RunConfig>(bytes: &[u8]) -> Result<T> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| CliError::Config(e.to_string()))?;
    if !v.is_object() {
        return Err(CliError::Config("config must be a JSON object".into()));
    }
    decode(v, "config")
}

pub fn load<T: RunConfig>(file: Option<&Path>, overrides: &[(String, String)]) -> Result<T> {
    let cwd = std::env::current_dir().map_err(CliError::io("."))?;
    let mut cfg: T = match file {
        Some(path) => {
            let bytes = fs::read(path).map_err(CliError::io(path))?;
            let mut c: T = parse_config_bytes(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            c.resolve_paths(&cwd.join(dir));
            c
        }
        None => T::default(),
    };
    if !overrides.is_empty() {
        let mut v = serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        for (k, raw) in overrides {
            set_dotted(&mut v, k, parse_value(raw))?;
        }
        cfg = decode(v, "overrides")?;
    }
    cfg.resolve_paths(&cwd);
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields, default)]
    struct Inner {
        lr: f64,
        steps: usize,
    }

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields, default)]
    struct Demo {
        name: String,
        path: Option<PathBuf>,
        train: Inner,
    }

    impl RunConfig for Demo {
        fn resolve_paths(&mut self, base: &Path) {
            resolve_opt(base, &mut self.path);
        }
    }

    fn ov(pairs: &[&str]) -> Vec<(String, String)> {
        parse_overrides(&pairs.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        fs::write(&f, r#"{"name": "a", "train": {"lr": 0.5}}"#).unwrap();
        let c: Demo = load(Some(&f), &ov(&["--train.lr", "0.001"])).unwrap();
        assert_eq!(c.train.lr, 0.001);
        assert_eq!(c.train.steps, 0);
        assert_eq!(c.name, "a");
        let c: Demo = load(Some(&f), &ov(&["--name=b"])).unwrap();
        assert_eq!(c.name, "b");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        fs::write(&f, r#"{"nmae": "a"}"#).unwrap();
        assert!(matches!(load::<Demo>(Some(&f), &[]), Err(CliError::Config(_))));
        assert!(matches!(load::<Demo>(None, &ov(&["--train.lrr", "1"])), Err(CliError::Config(_))));
        assert!(matches!(load::<Demo>(None, &ov(&["--name.x", "1"])), Err(CliError::Config(_))));
        assert!(parse_overrides(&["oops".to_string()]).is_err());
        assert!(parse_overrides(&["--dangling".to_string()]).is_err());
    }

    #[test]
    fn file_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        fs::write(&f, r#"{"path": "data/x.jsonl"}"#).unwrap();
        let c: Demo = load(Some(&f), &[]).unwrap();
        assert_eq!(c.path.unwrap(), dir.path().join("data/x.jsonl"));
    }
}
