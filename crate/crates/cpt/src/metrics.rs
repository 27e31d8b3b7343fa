//! Continual-learning metrics over the T×T accuracy matrix.
//!
//! `R[i][j]` is the accuracy on task `j` after training through task `i`.
//! End-of-training metrics (avg_acc, bwt, fwt) read the final row, diagonal,
//! and superdiagonal; the "overall" variants average over every timestep via
//! triangle sums.

use std::fmt;

use crate::error::{CptError, Result};

/// Scale of the stored accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    /// Accuracies in [0, 100]. Required for `rem` and `cl_score`.
    Percent,
    /// Accuracies in [0, 1].
    Fraction,
}

impl Unit {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "percent" => Ok(Unit::Percent),
            "fraction" => Ok(Unit::Fraction),
            other => Err(CptError::Parse(format!("unknown unit `{other}`"))),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Percent => f.write_str("percent"),
            Unit::Fraction => f.write_str("fraction"),
        }
    }
}

/// Reference entry used by `overall_bwt` when comparing a revisited task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BwtConvention {
    /// Compare `R[i][j]` against `R[j][i]` as printed in the source tables.
    #[default]
    PaperLiteral,
    /// Compare against the diagonal `R[j][j]` (the cited original metric).
    DiagonalReference,
}

impl BwtConvention {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "paper_literal" => Ok(BwtConvention::PaperLiteral),
            "diagonal" | "diagonal_reference" => Ok(BwtConvention::DiagonalReference),
            other => Err(CptError::Parse(format!(
                "unknown bwt convention `{other}` (expected paper-literal|diagonal)"
            ))),
        }
    }
}

impl fmt::Display for BwtConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BwtConvention::PaperLiteral => f.write_str("paper_literal"),
            BwtConvention::DiagonalReference => f.write_str("diagonal"),
        }
    }
}

/// T×T accuracy matrix with an optional random-init baseline vector b.
///
/// The lower triangle (i >= j) must be populated; the strict upper triangle
/// holds unseen-task probes and may be absent when forward-transfer
/// evaluation is disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultMatrix {
    t: usize,
    unit: Unit,
    cells: Vec<Option<f64>>,
    baselines: Option<Vec<f64>>,
}

impl ResultMatrix {
    pub fn new(t: usize, unit: Unit) -> Self {
        ResultMatrix {
            t,
            unit,
            cells: vec![None; t * t],
            baselines: None,
        }
    }

    /// Build from fully dense rows (tests and fixtures).
    pub fn from_rows(rows: &[Vec<f64>], unit: Unit) -> Result<Self> {
        let t = rows.len();
        let mut m = ResultMatrix::new(t, unit);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(CptError::InvalidInput(format!(
                    "row {i} has {} entries, expected {t}",
                    row.len()
                )));
            }
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        Ok(m)
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.cells[i * self.t + j] = Some(v);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i * self.t + j]
    }

    fn require(&self, i: usize, j: usize) -> Result<f64> {
        self.get(i, j).ok_or_else(|| {
            CptError::InvalidInput(format!("matrix entry R[{i}][{j}] is not populated"))
        })
    }

    pub fn set_baselines(&mut self, b: Vec<f64>) -> Result<()> {
        if b.len() != self.t {
            return Err(CptError::InvalidInput(format!(
                "baseline vector has {} entries, expected {}",
                b.len(),
                self.t
            )));
        }
        self.baselines = Some(b);
        Ok(())
    }

    pub fn baselines(&self) -> Option<&[f64]> {
        self.baselines.as_deref()
    }

    /// Average accuracy: mean of the final row.
    pub fn avg_acc(&self) -> Result<f64> {
        let last = self.t - 1;
        let mut sum = 0.0;
        for j in 0..self.t {
            sum += self.require(last, j)?;
        }
        Ok(sum / self.t as f64)
    }

    /// Backward transfer: mean of `R[T-1][i] - R[i][i]` over earlier tasks.
    pub fn bwt(&self) -> Result<f64> {
        if self.t < 2 {
            return Err(CptError::InvalidInput("bwt needs at least 2 tasks".into()));
        }
        let last = self.t - 1;
        let mut sum = 0.0;
        for i in 0..last {
            sum += self.require(last, i)? - self.require(i, i)?;
        }
        Ok(sum / (self.t - 1) as f64)
    }

    /// Forward transfer: mean of `R[i-1][i] - b[i]` over later tasks, using
    /// the stored random-init baselines.
    pub fn fwt(&self) -> Result<f64> {
        if self.t < 2 {
            return Err(CptError::InvalidInput("fwt needs at least 2 tasks".into()));
        }
        let b = self
            .baselines
            .as_ref()
            .ok_or_else(|| CptError::InvalidInput("fwt needs the baseline vector b".into()))?;
        let mut sum = 0.0;
        for (i, bi) in b.iter().enumerate().skip(1) {
            sum += self.require(i - 1, i)? - bi;
        }
        Ok(sum / (self.t - 1) as f64)
    }

    /// Overall accuracy: mean over the lower triangle including the diagonal.
    pub fn overall_acc(&self) -> Result<f64> {
        let mut sum = 0.0;
        for i in 0..self.t {
            for j in 0..=i {
                sum += self.require(i, j)?;
            }
        }
        Ok(sum / (self.t * (self.t + 1) / 2) as f64)
    }

    /// Overall backward transfer over every timestep.
    pub fn overall_bwt(&self, convention: BwtConvention) -> Result<f64> {
        if self.t < 2 {
            return Err(CptError::InvalidInput(
                "overall_bwt needs at least 2 tasks".into(),
            ));
        }
        let mut sum = 0.0;
        for i in 1..self.t {
            for j in 0..i {
                let reference = match convention {
                    BwtConvention::PaperLiteral => self.require(j, i)?,
                    BwtConvention::DiagonalReference => self.require(j, j)?,
                };
                sum += self.require(i, j)? - reference;
            }
        }
        Ok(sum / (self.t * (self.t - 1) / 2) as f64)
    }

    /// Overall forward transfer: mean over the strict upper triangle.
    pub fn overall_fwt(&self) -> Result<f64> {
        if self.t < 2 {
            return Err(CptError::InvalidInput(
                "overall_fwt needs at least 2 tasks".into(),
            ));
        }
        let mut sum = 0.0;
        for i in 0..self.t {
            for j in (i + 1)..self.t {
                sum += self.require(i, j)?;
            }
        }
        Ok(sum / (self.t * (self.t - 1) / 2) as f64)
    }

    /// Plain-text grid: header with T and unit, one comma-separated row per
    /// training stage (`-` for absent cells), optional trailing baseline line.
    pub fn to_text(&self) -> String {
        let mut out = format!("T={} unit={}\n", self.t, self.unit);
        for i in 0..self.t {
            let row: Vec<String> = (0..self.t)
                .map(|j| match self.get(i, j) {
                    Some(v) => format!("{v}"),
                    None => "-".to_string(),
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        if let Some(b) = &self.baselines {
            let vals: Vec<String> = b.iter().map(|v| format!("{v}")).collect();
            out.push_str(&format!("b={}\n", vals.join(",")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| CptError::Parse("empty matrix file".into()))?;
        let mut t = None;
        let mut unit = None;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("T=") {
                t = Some(v.parse::<usize>().map_err(|e| {
                    CptError::Parse(format!("bad T in matrix header: {e}"))
                })?);
            } else if let Some(v) = tok.strip_prefix("unit=") {
                unit = Some(Unit::parse(v)?);
            }
        }
        let t = t.ok_or_else(|| CptError::Parse("matrix header missing T=".into()))?;
        let unit = unit.ok_or_else(|| CptError::Parse("matrix header missing unit=".into()))?;
        if t == 0 {
            return Err(CptError::Parse("matrix T must be positive".into()));
        }
        let mut m = ResultMatrix::new(t, unit);
        for i in 0..t {
            let line = lines
                .next()
                .ok_or_else(|| CptError::Parse(format!("matrix row {i} missing")))?;
            if let Some(b) = line.strip_prefix("b=") {
                return Err(CptError::Parse(format!(
                    "baseline line before all {t} rows: b={b}"
                )));
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != t {
                return Err(CptError::Parse(format!(
                    "matrix row {i} has {} fields, expected {t}",
                    fields.len()
                )));
            }
            for (j, field) in fields.iter().enumerate() {
                let field = field.trim();
                if field != "-" {
                    let v: f64 = field.parse().map_err(|e| {
                        CptError::Parse(format!("bad value at R[{i}][{j}]: {e}"))
                    })?;
                    m.set(i, j, v);
                }
            }
        }
        if let Some(line) = lines.next() {
            let b = line
                .strip_prefix("b=")
                .ok_or_else(|| CptError::Parse(format!("unexpected trailing line: {line}")))?;
            let vals = parse_baseline_values(b)?;
            m.set_baselines(vals)?;
        }
        Ok(m)
    }
}

/// Parse a comma- or line-separated list of baseline accuracies.
pub fn parse_baseline_values(text: &str) -> Result<Vec<f64>> {
    text.split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CptError::Parse(format!("bad baseline value `{s}`: {e}")))
        })
        .collect()
}

/// Remembering score `100 - |min(bwt, 0)|`. Inputs must be on the 0-100 scale.
pub fn rem(overall_bwt: f64) -> f64 {
    100.0 - overall_bwt.min(0.0).abs()
}

/// Weighted average of metric values; weights default to equal and must sum
/// to 1. Inputs must be on the 0-100 scale.
pub fn cl_score(values: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if values.is_empty() {
        return Err(CptError::InvalidInput("cl_score over no values".into()));
    }
    match weights {
        None => Ok(values.iter().sum::<f64>() / values.len() as f64),
        Some(w) => {
            if w.len() != values.len() {
                return Err(CptError::InvalidInput(format!(
                    "{} weights for {} values",
                    w.len(),
                    values.len()
                )));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(CptError::InvalidInput(format!(
                    "weights sum to {total}, expected 1"
                )));
            }
            Ok(values.iter().zip(w).map(|(v, w)| v * w).sum())
        }
    }
}
