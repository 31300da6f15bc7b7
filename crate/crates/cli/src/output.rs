//! CSV tables preceded by a `#` metadata block.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Writes the metadata block, the header and the rows.
    pub fn write<W: Write>(&self, meta: &Meta, mut out: W) -> std::io::Result<()> {
        meta.write(&mut out)?;
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }

    pub fn write_file(&self, meta: &Meta, path: &Path) -> Result<()> {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        self.write(meta, BufWriter::new(file))
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

/// What produced a file: tool version, command, configuration hash and seed,
/// followed by the full configuration.
#[derive(Clone, Debug)]
pub struct Meta {
    pub command: String,
    pub config: ExperimentConfig,
}

impl Meta {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Meta {
            command: command.to_string(),
            config: config.clone(),
        }
    }

    fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# bridgelearn {VERSION}")?;
        writeln!(out, "# command = {}", self.command)?;
        writeln!(out, "# config_hash = {}", self.config.hash())?;
        writeln!(out, "# seed = {}", self.config.seed)?;
        for line in self.config.to_text().lines() {
            writeln!(out, "# config: {line}")?;
        }
        Ok(())
    }
}

/// `dir/stem_suffix.csv` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

/// Rows of a CSV file written by [`Table::write`], without the metadata
/// block; the header comes first.
pub fn read_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}
