//! Line-oriented `key = value` configuration text.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may not repeat.
//! The same format is echoed, behind `# `, at the top of every artifact a
//! run writes.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Pairs = Vec<(String, String)>;

/// Parses config text. `origin` only labels error messages.
pub fn parse_key_values(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected 'key = value'", origin.display(), n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("{}:{}: empty key", origin.display(), n + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("{}:{}: duplicate key '{k}'", origin.display(), n + 1)));
        }
    }
    Ok(out)
}

/// Reads and parses a config file.
pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_key_values(&text, path)
}

/// Renders pairs back into config text.
pub fn format_key_values(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Renders pairs as `# key = value` echo lines.
pub fn echo_lines(pairs: &[(String, String)], comment: &str) -> String {
    pairs.iter().map(|(k, v)| format!("{comment} {k} = {v}\n")).collect()
}

/// Parses `map[key]` if present.
pub fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| Error::Config(format!("bad value '{v}' for {key}: {e}")))
        })
        .transpose()
}

/// Overwrites `slot` with `map[key]` if present.
pub fn set<T: FromStr>(map: &BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: Display,
{
    if let Some(v) = get(map, key)? {
        *slot = v;
    }
    Ok(())
}

/// Parses whitespace-separated numbers of a fixed count.
pub fn get_array<const N: usize>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<[f64; N]>> {
    let Some(v) = map.get(key) else { return Ok(None) };
    let parts: Vec<f64> = v
        .split_whitespace()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad value '{v}' for {key}: {e}")))?;
    <[f64; N]>::try_from(parts)
        .map(Some)
        .map_err(|_| Error::Config(format!("{key} needs {N} numbers, got '{v}'")))
}

/// Rejects keys outside `known`. Keys under any of `prefixes` are left for
/// another parser.
pub fn reject_unknown(map: &BTreeMap<String, String>, known: &[&str], prefixes: &[&str]) -> Result<()> {
    for k in map.keys() {
        if !known.contains(&k.as_str()) && !prefixes.iter().any(|p| k.starts_with(p)) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
    }
    Ok(())
}

/// Entries under `prefix`, with the prefix stripped.
pub fn section(map: &BTreeMap<String, String>, prefix: &str) -> BTreeMap<String, String> {
    map.iter()
        .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
        .collect()
}
