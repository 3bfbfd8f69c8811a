//! Stratified aggregation, condition matrices, hallucination transitions and
//! table emission (CSV, JSON Lines, Markdown).
//!
//! Everything here is deterministic: groups and rows come out in a fixed
//! order and numbers are printed at fixed precision, so identical inputs give
//! byte-identical reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{pool_decomposition, ErrorDecomposition};
use crate::corpus::ScoredSample;
use crate::promptgen::ConditionId;
use crate::stats::{percentile, PairedComparison};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown stratification key `{0}` (expected etiology, severity_bin, category, model or condition)")]
    UnknownKey(String),
    #[error("unknown report format `{0}` (expected csv, jsonl or markdown)")]
    UnknownFormat(String),
    #[error("no results to tabulate")]
    EmptyInput,
    #[error("duplicate result for model `{model}`, condition `{condition}`")]
    DuplicateCell { model: String, condition: String },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ReportError>;

// ---------------------------------------------------------------------------
// Stratification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyKey {
    Etiology,
    SeverityBin,
    Category,
    Model,
    Condition,
}

impl FromStr for StratifyKey {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "etiology" => StratifyKey::Etiology,
            "severity_bin" | "severity" => StratifyKey::SeverityBin,
            "category" => StratifyKey::Category,
            "model" => StratifyKey::Model,
            "condition" => StratifyKey::Condition,
            _ => return Err(ReportError::UnknownKey(s.to_string())),
        })
    }
}

/// How a continuous mean severity maps to the three bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinMode {
    /// mild `[1, 2]`, moderate `(2, 4]`, severe `(4, 7]`.
    #[default]
    Range,
    /// Round half up to an integer level, then 1-2 / 3-4 / 5-7.
    Rounded,
}

impl FromStr for BinMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "range" => Ok(BinMode::Range),
            "rounded" => Ok(BinMode::Rounded),
            other => Err(format!("unknown bin mode `{other}` (expected range or rounded)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SeverityBin {
    Mild,
    Moderate,
    Severe,
}

impl SeverityBin {
    pub fn as_str(self) -> &'static str {
        match self {
            SeverityBin::Mild => "mild",
            SeverityBin::Moderate => "moderate",
            SeverityBin::Severe => "severe",
        }
    }
}

/// `None` outside the 1-7 rating scale.
pub fn severity_bin(mean_severity: f64, mode: BinMode) -> Option<SeverityBin> {
    if !(1.0..=7.0).contains(&mean_severity) {
        return None;
    }
    let x = match mode {
        BinMode::Range => mean_severity,
        BinMode::Rounded => (mean_severity + 0.5).floor(),
    };
    Some(if x <= 2.0 {
        SeverityBin::Mild
    } else if x <= 4.0 {
        SeverityBin::Moderate
    } else {
        SeverityBin::Severe
    })
}

/// Label given to samples that lack the attribute being stratified on.
pub const UNRATED: &str = "unrated";

#[derive(Debug, Clone)]
pub struct Stratum<'a> {
    pub label: String,
    pub samples: Vec<&'a ScoredSample>,
}

/// Sort key keeping enum-valued groups in declaration order, conditions in
/// canonical order, everything else lexical, and `unrated` last.
fn group_rank(key: StratifyKey, s: &ScoredSample, mode: BinMode) -> (u8, usize, String) {
    match key {
        StratifyKey::Etiology => match s.etiology {
            Some(e) => (0, e as usize, e.as_str().into()),
            None => (1, 0, UNRATED.into()),
        },
        StratifyKey::SeverityBin => match s.mean_severity.and_then(|m| severity_bin(m, mode)) {
            Some(b) => (0, b as usize, b.as_str().into()),
            None => (1, 0, UNRATED.into()),
        },
        StratifyKey::Category => (0, s.category as usize, s.category.as_str().into()),
        StratifyKey::Model => (0, 0, s.model_id.clone()),
        StratifyKey::Condition => condition_rank(&s.condition_id),
    }
}

fn condition_rank(id: &str) -> (u8, usize, String) {
    match id.parse::<ConditionId>() {
        Ok(c) => (0, c as usize, id.to_string()),
        Err(_) => (1, 0, id.to_string()),
    }
}

/// Partitions `samples` by `key`; groups keep input order internally.
pub fn stratify<'a>(samples: &'a [ScoredSample], key: StratifyKey, mode: BinMode) -> Vec<Stratum<'a>> {
    let mut groups: BTreeMap<(u8, usize, String), Vec<&'a ScoredSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(group_rank(key, s, mode)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|((_, _, label), samples)| Stratum { label, samples })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub n: usize,
    pub wer: f64,
    pub cer: f64,
    /// Mean over samples that carry a SemScore; `None` if none do.
    pub semscore: Option<f64>,
    pub hallucination_pct: f64,
    pub p90_length_ratio: f64,
    pub decomposition: Option<ErrorDecomposition>,
}

pub fn summarize(samples: &[&ScoredSample]) -> Result<GroupSummary> {
    if samples.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let n = samples.len() as f64;
    let mean = |f: &dyn Fn(&ScoredSample) -> f64| samples.iter().map(|s| f(s)).sum::<f64>() / n;
    let sem: Vec<f64> = samples.iter().filter_map(|s| s.score.semscore).collect();
    let ratios: Vec<f64> = samples.iter().map(|s| s.score.length_ratio).collect();
    Ok(GroupSummary {
        n: samples.len(),
        wer: mean(&|s| s.score.wer),
        cer: mean(&|s| s.score.cer),
        semscore: (!sem.is_empty()).then(|| sem.iter().sum::<f64>() / sem.len() as f64),
        hallucination_pct: 100.0 * samples.iter().filter(|s| s.score.hallucinated).count() as f64 / n,
        p90_length_ratio: percentile(&ratios, 90.0).expect("nonempty, finite"),
        decomposition: pool_decomposition(samples.iter().map(|s| &s.score)).ok(),
    })
}

// ---------------------------------------------------------------------------
// Hallucination transitions

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transitions {
    pub n: usize,
    pub fixed: usize,
    pub induced: usize,
    pub unchanged: usize,
    pub fixed_pct: f64,
    pub induced_pct: f64,
    pub unchanged_pct: f64,
}

/// Counts flags that turn off (fixed) or on (induced) between matched runs.
pub fn hallucination_transitions(base: &[bool], treat: &[bool]) -> Result<Transitions> {
    if base.len() != treat.len() {
        return Err(ReportError::LengthMismatch(base.len(), treat.len()));
    }
    let n = base.len();
    let fixed = base.iter().zip(treat).filter(|(b, t)| **b && !**t).count();
    let induced = base.iter().zip(treat).filter(|(b, t)| !**b && **t).count();
    let unchanged = n - fixed - induced;
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    Ok(Transitions {
        n,
        fixed,
        induced,
        unchanged,
        fixed_pct: pct(fixed),
        induced_pct: pct(induced),
        unchanged_pct: pct(unchanged),
    })
}

// ---------------------------------------------------------------------------
// Condition matrix

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Wer,
    Cer,
    #[serde(rename = "semscore")]
    SemScore,
}

impl Metric {
    pub fn lower_is_better(self) -> bool {
        !matches!(self, Metric::SemScore)
    }

    fn value(self, s: &ScoredSample) -> Option<f64> {
        match self {
            Metric::Wer => Some(s.score.wer),
            Metric::Cer => Some(s.score.cer),
            Metric::SemScore => s.score.semscore,
        }
    }

    fn cell(self, v: f64) -> CellValue {
        match self {
            Metric::Wer | Metric::Cer => CellValue::Rate(v),
            Metric::SemScore => CellValue::Sem(v),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "wer" => Ok(Metric::Wer),
            "cer" => Ok(Metric::Cer),
            "semscore" => Ok(Metric::SemScore),
            other => Err(format!("unknown metric `{other}` (expected wer, cer or semscore)")),
        }
    }
}

/// Mean metric per (model, condition) run, in sorted order. Samples without
/// the metric (SemScore not computed) are skipped.
pub fn run_means(samples: &[ScoredSample], metric: Metric) -> Vec<(String, String, f64)> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for s in samples {
        if let Some(v) = metric.value(s) {
            let e = acc.entry((s.model_id.clone(), s.condition_id.clone())).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|((m, c), (sum, k))| (m, c, sum / k as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMatrix {
    pub metric: Metric,
    /// Condition ids, canonical prompt order first, then any others lexically.
    pub rows: Vec<String>,
    /// Model ids, sorted.
    pub cols: Vec<String>,
    cells: BTreeMap<(String, String), f64>,
    best: BTreeMap<String, String>,
}

impl ConditionMatrix {
    pub fn get(&self, condition: &str, model: &str) -> Option<f64> {
        self.cells.get(&(condition.to_string(), model.to_string())).copied()
    }

    /// Best condition for `model`.
    pub fn best(&self, model: &str) -> Option<&str> {
        self.best.get(model).map(String::as_str)
    }

    pub fn is_best(&self, condition: &str, model: &str) -> bool {
        self.best(model) == Some(condition)
    }

    pub fn to_table(&self) -> Table {
        let mut columns = vec!["condition".to_string()];
        columns.extend(self.cols.iter().cloned());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![Cell::text(r)];
                for c in &self.cols {
                    row.push(match self.get(r, c) {
                        Some(v) => Cell {
                            value: self.metric.cell(v),
                            best: self.is_best(r, c),
                        },
                        None => Cell::missing(),
                    });
                }
                row
            })
            .collect();
        Table { columns, rows }
    }
}

/// Builds the condition x model matrix and flags the best cell per model.
/// Ties go to the condition that comes first in canonical order.
pub fn condition_matrix<I, M, C>(results: I, metric: Metric) -> Result<ConditionMatrix>
where
    I: IntoIterator<Item = (M, C, f64)>,
    M: Into<String>,
    C: Into<String>,
{
    let mut cells = BTreeMap::new();
    let mut rows = BTreeSet::new();
    let mut cols = BTreeSet::new();
    for (m, c, v) in results {
        let (model, condition) = (m.into(), c.into());
        rows.insert(condition_rank(&condition));
        cols.insert(model.clone());
        if cells.insert((condition.clone(), model.clone()), v).is_some() {
            return Err(ReportError::DuplicateCell { model, condition });
        }
    }
    if cells.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let rows: Vec<String> = rows.into_iter().map(|(_, _, id)| id).collect();
    let cols: Vec<String> = cols.into_iter().collect();
    let mut best = BTreeMap::new();
    for c in &cols {
        let mut winner: Option<(&String, f64)> = None;
        for r in &rows {
            if let Some(&v) = cells.get(&(r.clone(), c.clone())) {
                let better = match winner {
                    None => true,
                    Some((_, w)) if metric.lower_is_better() => v < w,
                    Some((_, w)) => v > w,
                };
                if better {
                    winner = Some((r, v));
                }
            }
        }
        if let Some((r, _)) = winner {
            best.insert(c.clone(), r.clone());
        }
    }
    Ok(ConditionMatrix {
        metric,
        rows,
        cols,
        cells,
        best,
    })
}

// ---------------------------------------------------------------------------
// Tables

#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Text(String),
    Count(usize),
    /// WER/CER and error-rate components, 4 decimals.
    Rate(f64),
    /// SemScore, 1 decimal.
    Sem(f64),
    /// Percentage, 1 decimal.
    Pct(f64),
    /// Effect sizes and other plain statistics, 3 decimals.
    Stat(f64),
    /// p-values: 4 decimals, scientific below 1e-4.
    P(f64),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub value: CellValue,
    pub best: bool,
}

impl Cell {
    pub fn new(value: CellValue) -> Self {
        Cell { value, best: false }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::new(CellValue::Text(s.into()))
    }

    pub fn missing() -> Self {
        Cell::new(CellValue::Missing)
    }

    fn opt(v: Option<f64>, f: fn(f64) -> CellValue) -> Self {
        Cell::new(v.map_or(CellValue::Missing, f))
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Text(s) => f.write_str(s),
            CellValue::Count(n) => write!(f, "{n}"),
            CellValue::Rate(v) => write!(f, "{v:.4}"),
            CellValue::Sem(v) | CellValue::Pct(v) => write!(f, "{v:.1}"),
            CellValue::Stat(v) => write!(f, "{v:.3}"),
            CellValue::P(v) if *v != 0.0 && *v < 1e-4 => write!(f, "{v:.2e}"),
            CellValue::P(v) => write!(f, "{v:.4}"),
            CellValue::Missing => f.write_str("—"),
        }
    }
}

impl CellValue {
    fn to_json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            CellValue::Text(s) => Value::String(s.clone()),
            CellValue::Count(n) => Value::from(*n),
            CellValue::Missing => Value::Null,
            // round-trip through the fixed-precision text for stability
            other => other
                .to_string()
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(Value::Null, Value::Number),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Jsonl,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" => Ok(ReportFormat::Jsonl),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Jsonl => "jsonl",
            ReportFormat::Markdown => "md",
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_field(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

/// Writes `table` in `format`. An empty table still gets its header
/// (CSV, Markdown); JSON Lines has no header so it comes out empty.
pub fn emit_report<W: Write>(table: &Table, format: ReportFormat, mut w: W) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let header: Vec<String> = table.columns.iter().map(|c| csv_field(c)).collect();
            writeln!(w, "{}", header.join(","))?;
            for row in &table.rows {
                let cells: Vec<String> = row
                    .iter()
                    .map(|c| match c.value {
                        CellValue::Missing => String::new(),
                        ref v => csv_field(&v.to_string()),
                    })
                    .collect();
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        ReportFormat::Jsonl => {
            for row in &table.rows {
                let mut obj = serde_json::Map::new();
                for (name, cell) in table.columns.iter().zip(row) {
                    obj.insert(name.clone(), cell.value.to_json());
                }
                let best: Vec<&String> = table
                    .columns
                    .iter()
                    .zip(row)
                    .filter(|(_, c)| c.best)
                    .map(|(n, _)| n)
                    .collect();
                if !best.is_empty() {
                    obj.insert("best".into(), serde_json::json!(best));
                }
                writeln!(w, "{}", serde_json::Value::Object(obj))?;
            }
        }
        ReportFormat::Markdown => {
            let header: Vec<String> = table.columns.iter().map(|c| md_field(c)).collect();
            writeln!(w, "| {} |", header.join(" | "))?;
            let sep: Vec<&str> = table
                .columns
                .iter()
                .enumerate()
                .map(|(i, _)| if i == 0 { "---" } else { "---:" })
                .collect();
            writeln!(w, "|{}|", sep.join("|"))?;
            for row in &table.rows {
                let cells: Vec<String> = row
                    .iter()
                    .map(|c| {
                        let s = md_field(&c.value.to_string());
                        if c.best {
                            format!("**{s}**")
                        } else {
                            s
                        }
                    })
                    .collect();
                writeln!(w, "| {} |", cells.join(" | "))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_report_to_path(table: &Table, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    emit_report(table, format, io::BufWriter::new(file))
}

// ---------------------------------------------------------------------------
// Table builders

pub fn summary_table(key: StratifyKey, strata: &[Stratum<'_>]) -> Result<Table> {
    let key_name = serde_json::to_value(key)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    let columns = [
        key_name.as_str(),
        "n",
        "wer",
        "cer",
        "semscore",
        "hallucination_pct",
        "p90_length_ratio",
        "sub_rate",
        "del_rate",
        "ins_rate",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::with_capacity(strata.len());
    for s in strata {
        let g = summarize(&s.samples)?;
        let d = g.decomposition;
        rows.push(vec![
            Cell::text(&s.label),
            Cell::new(CellValue::Count(g.n)),
            Cell::new(CellValue::Rate(g.wer)),
            Cell::new(CellValue::Rate(g.cer)),
            Cell::opt(g.semscore, CellValue::Sem),
            Cell::new(CellValue::Pct(g.hallucination_pct)),
            Cell::new(CellValue::Stat(g.p90_length_ratio)),
            Cell::opt(d.map(|d| d.sub_rate), CellValue::Rate),
            Cell::opt(d.map(|d| d.del_rate), CellValue::Rate),
            Cell::opt(d.map(|d| d.ins_rate), CellValue::Rate),
        ]);
    }
    Ok(Table { columns, rows })
}

pub fn comparison_table(comparisons: &[(String, PairedComparison)]) -> Table {
    let columns = [
        "comparison",
        "n",
        "delta",
        "cohen_d",
        "effect",
        "p",
        "p_fdr",
        "degraded_pct",
        "ci95_lo",
        "ci95_hi",
    ]
    .map(String::from)
    .to_vec();
    let rows = comparisons
        .iter()
        .map(|(label, c)| {
            vec![
                Cell::text(label),
                Cell::new(CellValue::Count(c.n)),
                Cell::new(CellValue::Rate(c.delta_mean)),
                Cell::opt(c.cohen_d, CellValue::Stat),
                c.effect_label.map_or(Cell::missing(), |e| Cell::text(e.as_str())),
                Cell::new(CellValue::P(c.p_raw)),
                Cell::opt(c.p_adjusted, CellValue::P),
                Cell::new(CellValue::Pct(c.degraded_pct)),
                Cell::opt(c.ci95.map(|x| x.0), CellValue::Rate),
                Cell::opt(c.ci95.map(|x| x.1), CellValue::Rate),
            ]
        })
        .collect();
    Table { columns, rows }
}

pub fn transitions_table(rows: &[(String, Transitions)]) -> Table {
    let columns = ["comparison", "n", "fixed_pct", "induced_pct", "unchanged_pct"]
        .map(String::from)
        .to_vec();
    let rows = rows
        .iter()
        .map(|(label, t)| {
            vec![
                Cell::text(label),
                Cell::new(CellValue::Count(t.n)),
                Cell::new(CellValue::Pct(t.fixed_pct)),
                Cell::new(CellValue::Pct(t.induced_pct)),
                Cell::new(CellValue::Pct(t.unchanged_pct)),
            ]
        })
        .collect();
    Table { columns, rows }
}
