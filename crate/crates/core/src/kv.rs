//! Flat `key = value` text files used for manifests, run configs and reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed key-value file. Remembers the line each key came from so that
/// conversion errors can point at it.
#[derive(Clone, Debug)]
pub struct KvFile {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvFile {
    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(&path, i + 1, format!("expected 'key = value', got '{line}'")));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(&path, i + 1, "empty key"));
            }
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::parse(&path, i + 1, format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { path, entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::parse(&self.path, *line, format!("bad value for '{key}': {e}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::parse(&self.path, 0, format!("missing key '{key}'")))
    }
}

/// Ordered writer for key-value files.
#[derive(Clone, Debug, Default)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.out.push_str("# ");
        self.out.push_str(text);
        self.out.push('\n');
        self
    }

    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.out.push_str(&format!("{key} = {value}\n"));
        self
    }

    pub fn finish(&self) -> String {
        self.out.clone()
    }
}

/// Parses `on/off`, `true/false`, `yes/no`, `1/0`.
pub fn parse_switch(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got '{s}'")),
    }
}

pub fn switch(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_lookup() {
        let kv = KvFile::parse("# c\na = 1\n\nname = loop_1km\n", "m.txt").unwrap();
        assert_eq!(kv.require::<u32>("a").unwrap(), 1);
        assert_eq!(kv.get_str("name"), Some("loop_1km"));
        assert!(kv.get::<u32>("missing").unwrap().is_none());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = KvFile::parse("a = 1\nbroken\n", "m.txt").unwrap_err();
        assert!(err.to_string().contains("m.txt:2"), "{err}");
        let kv = KvFile::parse("a = 1\nb = x\n", "m.txt").unwrap();
        let err = kv.require::<f64>("b").unwrap_err();
        assert!(err.to_string().contains("m.txt:2"), "{err}");
        assert!(KvFile::parse("a = 1\na = 2\n", "m.txt").is_err());
    }

    #[test]
    fn switches() {
        assert_eq!(parse_switch("On"), Ok(true));
        assert_eq!(parse_switch("off"), Ok(false));
        assert!(parse_switch("maybe").is_err());
    }
}
