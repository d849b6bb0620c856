//! Run manifests, acceptance verdicts and verification.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::output::CsvData;

pub const MANIFEST_FILE: &str = "manifest.json";

/// What a verdict checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// `|observed - expected| <= tolerance`, or `<= tolerance |expected|`
    /// when `relative`.
    Near {
        expected: f64,
        tolerance: f64,
        relative: bool,
    },
    AtMost {
        bound: f64,
    },
    /// Every row in `rows` is at most `bound`.
    AllAtMost {
        bound: f64,
    },
    /// Strictly decreasing over `rows`.
    Decreasing,
    Text {
        expected: String,
    },
}

/// One pinned expectation on a cell or column range of an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub file: String,
    pub column: String,
    /// First row (0-based, after the header).
    pub row: usize,
    /// One past the last row for range checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_end: Option<usize>,
    pub check: Check,
    #[serde(default)]
    pub observed: String,
    #[serde(default)]
    pub pass: bool,
}

impl Verdict {
    pub fn near(
        name: &str,
        file: &str,
        column: &str,
        row: usize,
        expected: f64,
        tolerance: f64,
    ) -> Self {
        Self::cell(
            name,
            file,
            column,
            row,
            Check::Near {
                expected,
                tolerance,
                relative: false,
            },
        )
    }

    pub fn near_rel(
        name: &str,
        file: &str,
        column: &str,
        row: usize,
        expected: f64,
        tolerance: f64,
    ) -> Self {
        Self::cell(
            name,
            file,
            column,
            row,
            Check::Near {
                expected,
                tolerance,
                relative: true,
            },
        )
    }

    pub fn at_most(name: &str, file: &str, column: &str, row: usize, bound: f64) -> Self {
        Self::cell(name, file, column, row, Check::AtMost { bound })
    }

    pub fn text(name: &str, file: &str, column: &str, row: usize, expected: &str) -> Self {
        Self::cell(
            name,
            file,
            column,
            row,
            Check::Text {
                expected: expected.to_owned(),
            },
        )
    }

    pub fn range(
        name: &str,
        file: &str,
        column: &str,
        rows: std::ops::Range<usize>,
        check: Check,
    ) -> Self {
        Verdict {
            row_end: Some(rows.end),
            ..Self::cell(name, file, column, rows.start, check)
        }
    }

    fn cell(name: &str, file: &str, column: &str, row: usize, check: Check) -> Self {
        Verdict {
            name: name.to_owned(),
            file: file.to_owned(),
            column: column.to_owned(),
            row,
            row_end: None,
            check,
            observed: String::new(),
            pass: false,
        }
    }

    /// Evaluates against `data`, returning `(pass, observed)`.
    pub fn evaluate(&self, data: &CsvData) -> Result<(bool, String)> {
        let end = self.row_end.unwrap_or(self.row + 1);
        Ok(match &self.check {
            Check::Near {
                expected,
                tolerance,
                relative,
            } => {
                let v = data.value(self.row, &self.column)?;
                let allowed = if *relative {
                    tolerance * expected.abs()
                } else {
                    *tolerance
                };
                ((v - expected).abs() <= allowed, v.to_string())
            }
            Check::AtMost { bound } => {
                let v = data.value(self.row, &self.column)?;
                (v <= *bound, v.to_string())
            }
            Check::AllAtMost { bound } => {
                let mut max = f64::NEG_INFINITY;
                for r in self.row..end {
                    max = max.max(data.value(r, &self.column)?);
                }
                (max <= *bound, format!("max {max}"))
            }
            Check::Decreasing => {
                let mut ok = true;
                let mut prev = f64::INFINITY;
                for r in self.row..end {
                    let v = data.value(r, &self.column)?;
                    ok &= v < prev;
                    prev = v;
                }
                (ok, format!("rows {}..{end}", self.row))
            }
            Check::Text { expected } => {
                let v = data.text(self.row, &self.column)?;
                (v == expected, v.to_owned())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub workers: usize,
    pub outputs: Vec<OutputFile>,
    pub wall_clock_seconds: f64,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl RunManifest {
    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Evaluates every verdict against the files in `dir`.
pub fn evaluate_verdicts(dir: &Path, verdicts: &mut [Verdict]) -> Result<()> {
    for v in verdicts.iter_mut() {
        let data = CsvData::read(&dir.join(&v.file))?;
        let (pass, observed) = v
            .evaluate(&data)
            .with_context(|| format!("verdict `{}` on {}", v.name, v.file))?;
        v.pass = pass;
        v.observed = observed;
    }
    Ok(())
}

/// Outcome of re-checking a manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub lines: Vec<String>,
    pub failures: usize,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, ok: bool, line: String) {
        if !ok {
            self.failures += 1;
        }
        self.lines
            .push(format!("{} {line}", if ok { "PASS" } else { "FAIL" }));
    }
}

/// Recomputes checksums and re-evaluates verdicts for the manifest at
/// `path`. Verdicts are re-derived from the CSV files, not trusted from the
/// manifest.
pub fn verify(path: &Path) -> Result<VerifyReport> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing manifest {}", path.display()))?;
    let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut report = VerifyReport::default();
    let mut readable = Vec::new();
    for out in &manifest.outputs {
        match sha256_file(&dir.join(&out.file)) {
            Ok(sum) => {
                let ok = sum == out.sha256;
                report.record(ok, format!("checksum {}", out.file));
                readable.push(out.file.clone());
            }
            Err(e) => report.record(false, format!("checksum {}: {e:#}", out.file)),
        }
    }
    for v in &manifest.verdicts {
        if !readable.contains(&v.file) {
            report.record(false, format!("{} ({}): output missing", v.name, v.file));
            continue;
        }
        let result = CsvData::read(&dir.join(&v.file)).and_then(|data| v.evaluate(&data));
        match result {
            Ok((ok, observed)) => {
                report.record(ok, format!("{} ({}): observed {observed}", v.name, v.file))
            }
            Err(e) => report.record(false, format!("{} ({}): {e:#}", v.name, v.file)),
        }
    }
    Ok(report)
}
