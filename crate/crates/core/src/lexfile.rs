//! Section-headed plain-text word lists shared by the lexicon loaders.
//!
//! ```text
//! # comment
//! [section]
//! field<TAB>field
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Entry {
    pub section: String,
    pub line: usize,
    pub fields: Vec<String>,
}

pub(crate) fn read(path: &Path) -> Result<Vec<Entry>> {
    let content = fs::read_to_string(path)?;
    parse(&content, path)
}

pub(crate) fn parse(content: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut section: Option<String> = None;
    let mut entries = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_lowercase());
            continue;
        }
        let Some(sec) = &section else {
            return Err(Error::parse(path, i + 1, "entry before any [section] header"));
        };
        let fields = line
            .split('\t')
            .map(|f| f.trim().to_lowercase())
            .filter(|f| !f.is_empty())
            .collect();
        entries.push(Entry {
            section: sec.clone(),
            line: i + 1,
            fields,
        });
    }
    Ok(entries)
}

pub(crate) fn expect_fields(entry: &Entry, n: usize, path: &Path) -> Result<()> {
    if entry.fields.len() == n {
        Ok(())
    } else {
        Err(Error::parse(
            path,
            entry.line,
            format!(
                "section [{}] expects {n} tab-separated field(s), found {}",
                entry.section,
                entry.fields.len()
            ),
        ))
    }
}
