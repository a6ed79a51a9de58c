//! Plain-text formats: CSV tables, key-value reports and INI-style configs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Number formatting used in every CSV: 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Writes a header row followed by numeric rows.
pub fn write_csv<W: Write>(
    mut out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Ordered `key = value` record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueReport {
    entries: Vec<(String, String)>,
}

impl KeyValueReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn push_num(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_num(value));
    }

    pub fn push_bool(&mut self, key: impl Into<String>, value: bool) {
        self.push(key, if value { "true" } else { "false" });
    }

    pub fn extend_prefixed(&mut self, prefix: &str, other: &KeyValueReport) {
        for (k, v) in &other.entries {
            self.push(format!("{prefix}.{k}"), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Header line and value line of a one-row CSV.
    pub fn to_csv_row(&self) -> (String, String) {
        let keys: Vec<&str> = self.entries.iter().map(|(k, _)| k.as_str()).collect();
        let vals: Vec<&str> = self.entries.iter().map(|(_, v)| v.as_str()).collect();
        (keys.join(","), vals.join(","))
    }
}

/// Flat INI file: `[section]` headers, `key = value` lines, `#`/`;` comments.
/// Keys outside any section live in section `""`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IniConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl IniConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = IniConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    Error::Config(format!("line {}: unterminated section header", lineno + 1))
                })?;
                section = name.trim().to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            cfg.sections
                .entry(section.clone())
                .or_default()
                .insert(key.to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse '{v}'"))),
        }
    }

    pub fn section(&self, section: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(section)
    }
}

/// Comma-separated list of numbers, e.g. `4,8,16`.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Config(format!("bad list entry '{t}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn ini_sections_and_comments() {
        let cfg = IniConfig::parse(
            "seed = 3\n# note\n[mc]\nsamples = 100\n; x\n[density]\nfamily = beta\n",
        )
        .unwrap();
        assert_eq!(cfg.get("", "seed"), Some("3"));
        assert_eq!(cfg.get_parsed::<usize>("mc", "samples").unwrap(), Some(100));
        assert_eq!(cfg.get("density", "family"), Some("beta"));
        assert!(cfg.get_parsed::<usize>("density", "family").is_err());
        assert!(IniConfig::parse("[open\n").is_err());
        assert!(IniConfig::parse("novalue\n").is_err());
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list::<usize>("4, 8,16").unwrap(), vec![4, 8, 16]);
        assert!(parse_list::<usize>("4,x").is_err());
    }

    #[test]
    fn report_text_and_row() {
        let mut r = KeyValueReport::new();
        r.push("name", "demo");
        r.push_num("value", 0.5);
        assert_eq!(r.to_text(), "name = demo\nvalue = 5.0000000000000000e-1\n");
        assert_eq!(r.to_csv_row().0, "name,value");
    }
}
