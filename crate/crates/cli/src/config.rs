//! Layered settings: command-line flags over an INI file over defaults,
//! plus the record of effective settings echoed with every run.

use std::collections::hash_map::RandomState;
use std::hash::BuildHasher;
use std::path::Path;
use std::str::FromStr;

use stein_diffusion::io::{IniConfig, KeyValueReport};
use stein_diffusion::{Error, Result};

pub struct Settings {
    ini: IniConfig,
    record: Vec<(String, Vec<(String, String)>)>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let ini = match path {
            Some(p) => {
                IniConfig::load(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => IniConfig::default(),
        };
        Ok(Self {
            ini,
            record: Vec::new(),
        })
    }

    /// Flag value, else the config entry, else nothing. Whatever is found is
    /// recorded.
    pub fn opt<T: FromStr + ToString>(
        &mut self,
        flag: Option<T>,
        section: &str,
        key: &str,
    ) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.ini.get_parsed(section, key)?,
        };
        if let Some(v) = &v {
            self.set(section, key, v.to_string());
        }
        Ok(v)
    }

    pub fn get<T: FromStr + ToString>(
        &mut self,
        flag: Option<T>,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T> {
        let v = self.opt(flag, section, key)?.unwrap_or(default);
        self.set(section, key, v.to_string());
        Ok(v)
    }

    /// Comma-separated list setting.
    pub fn list<T: FromStr + ToString>(
        &mut self,
        flag: Option<Vec<T>>,
        section: &str,
        key: &str,
    ) -> Result<Option<Vec<T>>> {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.ini.get(section, key) {
                Some(s) => Some(stein_diffusion::io::parse_list(s)?),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.set(
                section,
                key,
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        Ok(v)
    }

    /// The configured seed, or a fresh one. Either way it is recorded.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let fresh = RandomState::new().hash_one(std::time::SystemTime::now());
        self.get(flag, "run", "seed", fresh)
    }

    pub fn set(&mut self, section: &str, key: &str, value: String) {
        let idx = match self.record.iter().position(|(s, _)| s == section) {
            Some(i) => i,
            None => {
                self.record.push((section.to_string(), Vec::new()));
                self.record.len() - 1
            }
        };
        let entries = &mut self.record[idx].1;
        match entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => entries.push((key.to_string(), value)),
        }
    }

    /// Effective settings followed by the results, all in INI form, so the
    /// output of a run can be fed back through `--config`.
    pub fn render(&self, result: &KeyValueReport) -> String {
        let mut s = String::new();
        for (section, entries) in &self.record {
            s.push_str(&format!("[{section}]\n"));
            for (k, v) in entries {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s.push_str("[result]\n");
        s.push_str(&result.to_text());
        s
    }
}
