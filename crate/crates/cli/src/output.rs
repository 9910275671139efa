use anyhow::{Context, Result};
use cusplab::report::format_float;
use std::path::Path;

pub enum Cell {
    Float(f64),
    Int(usize),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// One named CSV series: a header row and data rows in emission order.
pub struct Series {
    pub file: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Series {
    pub fn new(file: &'static str, header: &[&'static str]) -> Self {
        Self { file, header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_header(file: &'static str, header: Vec<String>) -> Self {
        Self { file, header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(self.file);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}
