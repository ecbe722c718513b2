//! Named-column tables and their CSV form.
//!
//! Reals are written as `{:.16e}` (17 significant digits, exact round trip).
//! Comment lines start with `#`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Real(f64),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => format!("{x:.16e}"),
            Cell::Empty => String::new(),
        }
    }

    fn short(&self) -> String {
        match self {
            Cell::Real(x) if *x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) => format!("{x:.4e}"),
            Cell::Real(x) => format!("{x:.6}"),
            Cell::Empty => "-".into(),
            other => other.csv(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem of the CSV.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Print a summary line per row when the table is emitted.
    pub echo: bool,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            echo: true,
        }
    }

    pub fn quiet(mut self) -> Self {
        self.echo = false;
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&Cell> {
        self.column(column).and_then(|j| self.rows.get(row).map(|r| &r[j]))
    }

    pub fn real(&self, row: usize, column: &str) -> Option<f64> {
        match self.cell(row, column)? {
            Cell::Real(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn int(&self, row: usize, column: &str) -> Option<i64> {
        match self.cell(row, column)? {
            Cell::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn text(&self, row: usize, column: &str) -> Option<&str> {
        match self.cell(row, column)? {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Indices of rows whose `column` holds the text `value`.
    pub fn rows_where(&self, column: &str, value: &str) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| self.text(i, column) == Some(value)).collect()
    }

    pub fn summary(&self, row: usize) -> String {
        let mut line = format!("{}:", self.name);
        for (c, v) in self.columns.iter().zip(&self.rows[row]) {
            if c == "seed_list_hash" || c == "fingerprint" {
                continue;
            }
            let _ = write!(line, " {c}={}", v.short());
        }
        line
    }

    /// CSV text with `header` lines written as `# ` comments first.
    pub fn to_csv(&self, header: &[String]) -> Result<String> {
        let mut out = String::new();
        for line in header {
            let _ = writeln!(out, "# {line}");
        }
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        let body = w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))?;
        out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path, header: &[String]) -> Result<()> {
        std::fs::write(path, self.to_csv(header)?).map_err(|e| CliError::io(path, e))
    }
}

/// A CSV file read back as strings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCsv {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawCsv {
    pub fn parse(text: &str) -> Result<Self> {
        let comments =
            text.lines().filter_map(|l| l.strip_prefix('#')).map(|l| l.trim_start().to_string()).collect();
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { comments, columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }

    pub fn get(&self, row: usize, column: &str) -> Option<&str> {
        let j = self.columns.iter().position(|c| c == column)?;
        self.rows.get(row).map(|r| r[j].as_str())
    }

    /// Data lines only, comments stripped.
    pub fn body(text: &str) -> String {
        text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
    }
}
