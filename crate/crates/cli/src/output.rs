//! CSV tables with a config-hash header line.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Num(v.unwrap_or(f64::NAN))
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // Shortest round-trip representation: deterministic and exact.
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// A named CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(file: &str, columns: &[&str]) -> Self {
        Table {
            file: file.to_owned(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row and returns its index.
    pub fn push(&mut self, row: Vec<Cell>) -> usize {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.file);
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn render(&self, config_hash: &str) -> String {
        let mut out = format!("# config_hash={config_hash}\n");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// A CSV file read back for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub config_hash: Option<String>,
    columns: HashMap<String, usize>,
    pub rows: Vec<Vec<String>>,
}

impl CsvData {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config_hash = None;
        let mut lines = text.lines().filter(|l| !l.is_empty()).peekable();
        while let Some(line) = lines.peek() {
            let Some(comment) = line.strip_prefix('#') else {
                break;
            };
            if let Some(h) = comment.trim().strip_prefix("config_hash=") {
                config_hash = Some(h.to_owned());
            }
            lines.next();
        }
        let header = lines.next().ok_or_else(|| anyhow!("missing header"))?;
        let columns: HashMap<String, usize> = header
            .split(',')
            .enumerate()
            .map(|(i, c)| (c.to_owned(), i))
            .collect();
        let rows: Vec<Vec<String>> = lines
            .map(|l| l.split(',').map(str::to_owned).collect())
            .collect();
        if let Some(bad) = rows.iter().position(|r| r.len() != columns.len()) {
            bail!(
                "row {bad} has {} fields, header has {}",
                rows[bad].len(),
                columns.len()
            );
        }
        Ok(CsvData {
            config_hash,
            columns,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        CsvData::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn text(&self, row: usize, column: &str) -> Result<&str> {
        let c = *self
            .columns
            .get(column)
            .ok_or_else(|| anyhow!("no column `{column}`"))?;
        let r = self.rows.get(row).ok_or_else(|| anyhow!("no row {row}"))?;
        Ok(&r[c])
    }

    pub fn value(&self, row: usize, column: &str) -> Result<f64> {
        let s = self.text(row, column)?;
        s.parse()
            .with_context(|| format!("row {row}, column `{column}`: `{s}` is not a number"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse() {
        let mut t = Table::new("t.csv", &["n", "e", "mode"]);
        t.push(vec![3u32.into(), 0.1.into(), "strict".into()]);
        t.push(vec![4u32.into(), Cell::from(None::<f64>), "x".into()]);
        let text = t.render("abc");
        assert_eq!(text, "# config_hash=abc\nn,e,mode\n3,0.1,strict\n4,NaN,x\n");
        let data = CsvData::parse(&text).unwrap();
        assert_eq!(data.config_hash.as_deref(), Some("abc"));
        assert_eq!(data.value(0, "e").unwrap(), 0.1);
        assert!(data.value(1, "e").unwrap().is_nan());
        assert_eq!(data.text(0, "mode").unwrap(), "strict");
        assert!(data.value(0, "mode").is_err());
        assert!(data.value(5, "e").is_err());
        assert!(CsvData::parse("# c\na,b\n1\n").is_err());
    }

    #[test]
    fn floats_round_trip() {
        for v in [7.04e-4, 1.0 / 3.0, std::f64::consts::FRAC_1_SQRT_2, 1e-300] {
            assert_eq!(Cell::Num(v).render().parse::<f64>().unwrap(), v);
        }
    }
}
