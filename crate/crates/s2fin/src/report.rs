//! Plain-text `key = value` reports, one key per line.

use std::collections::BTreeMap;
use std::fmt::Write;

use s2fin_core::metrics::Metrics;

use crate::error::{Error, Result};

/// Ordered key/value lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    /// `oa`, `aa`, `kappa` and `per_class_acc[k]` for one-based class `k`;
    /// classes without reference pixels read `absent`.
    pub fn metrics(&mut self, prefix: &str, m: &Metrics) -> &mut Self {
        self.push(format!("{prefix}oa"), m.oa);
        self.push(format!("{prefix}aa"), m.aa);
        self.push(format!("{prefix}kappa"), m.kappa);
        for (k, acc) in m.per_class.iter().enumerate() {
            let v = acc.map_or_else(|| "absent".to_string(), |a| a.to_string());
            self.push(format!("{prefix}per_class_acc[{}]", k + 1), v);
        }
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {v}").expect("string write");
        }
        s
    }
}

/// Parses a rendered report; later duplicates win.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::format("report", format!("line {}: expected `key = value`", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
