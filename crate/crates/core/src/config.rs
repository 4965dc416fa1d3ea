//! Plain-text configuration format.
//!
//! ```text
//! # comments run to end of line
//! w0 = 32, 64, 128      # lists are comma separated
//! n = 30
//! payload = 8184        # any FrameTimings field name
//!
//! [partner_map]         # or [connectivity]
//! 0 1 1
//! 1 0 0
//! 1 0 0
//! ```
//!
//! Keys are global; other `[section]` headers only group keys visually.
//! A matrix block runs until the next header or end of file. Later
//! assignments of the same key override earlier ones.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::params::FrameTimings;
use crate::partner::{validate_partner_map, PartnerMap};
use crate::{Error, Result};

/// Section names whose body is a 0/1 matrix.
pub const MATRIX_SECTIONS: [&str; 2] = ["partner_map", "connectivity"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    matrices: BTreeMap<String, Vec<Vec<u32>>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut matrix: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: line_no, msg };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header".into()))?
                    .trim()
                    .to_ascii_lowercase();
                if MATRIX_SECTIONS.contains(&name.as_str()) {
                    cfg.matrices.insert(name.clone(), Vec::new());
                    matrix = Some(name);
                } else {
                    matrix = None;
                }
                continue;
            }
            if let Some(name) = &matrix {
                let row = line
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<u32>()
                            .map_err(|_| err(format!("matrix entry '{tok}' is not an integer")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                cfg.matrices
                    .get_mut(name)
                    .expect("section exists")
                    .push(row);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim().to_ascii_lowercase().replace('-', "_");
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            cfg.values.insert(key, value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Parses a scalar value.
    pub fn scalar<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| Error::Parse {
                    line: 0,
                    msg: format!("bad value '{v}' for '{key}'"),
                })
            })
            .transpose()
    }

    /// Parses a comma-separated list. Empty items are rejected.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }

    pub fn matrix(&self, section: &str) -> Option<&[Vec<u32>]> {
        self.matrices.get(section).map(Vec::as_slice)
    }

    pub fn set_matrix(&mut self, section: &str, rows: Vec<Vec<u32>>) {
        self.matrices.insert(section.to_string(), rows);
    }

    pub fn partner_map(&self, section: &str) -> Result<Option<PartnerMap>> {
        self.matrix(section).map(validate_partner_map).transpose()
    }

    /// Overrides every timing field present in the file.
    pub fn apply_timings(&self, timings: &mut FrameTimings) -> Result<()> {
        for field in FrameTimings::FIELDS {
            if let Some(v) = self.scalar::<u64>(field)? {
                timings.set(field, v);
            }
        }
        Ok(())
    }

    /// Renders the file back in canonical form: keys sorted, then matrices.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (name, rows) in &self.matrices {
            out.push_str(&format!("\n[{name}]\n"));
            for row in rows {
                let cells: Vec<String> = row.iter().map(u32::to_string).collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<T>().map_err(|_| Error::Parse {
                line: 0,
                msg: format!("bad list item '{item}' for '{key}'"),
            })
        })
        .collect()
}

/// Timings with every field written out.
pub fn timings_to_config(timings: &FrameTimings) -> ConfigFile {
    let mut cfg = ConfigFile::default();
    for field in FrameTimings::FIELDS {
        cfg.set(field, timings.get(field).expect("known field").to_string());
    }
    cfg
}
