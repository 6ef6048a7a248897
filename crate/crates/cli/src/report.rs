//! CSV emission. Every float is written with 17 significant digits so that
//! files round-trip exactly and identical runs give identical bytes.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Text(s) => escape(s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut text = header.iter().map(|h| escape(h.as_ref())).collect::<Vec<_>>().join(",");
        text.push('\n');
        Self {
            columns: header.len(),
            text,
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.columns, "row width does not match the header");
        let line = cells.iter().map(Cell::render).collect::<Vec<_>>().join(",");
        self.text.push_str(&line);
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Writes report files into one directory and records their digests.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<OutputFile>,
}

impl Outputs {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, csv: &Csv) -> std::io::Result<()> {
        let bytes = csv.as_str().as_bytes();
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile {
            file: name.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }
}
