//! Metric records and the method-by-case comparison table.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, LabError, LabResult};

/// One evaluated (method, case, horizon) cell group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: String,
    pub case: String,
    /// Checkpoint file the numbers came from, or `-` for baselines.
    pub checkpoint: String,
    pub horizon: usize,
    /// Mean Euclidean pixel distance.
    pub l2: f64,
    /// Mean squared pixel distance.
    pub mse: f64,
    pub angular: Option<f64>,
    pub ln_perplexity: Option<f64>,
}

pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
}

pub fn metrics_from_csv(text: &str, path: &Path) -> LabResult<Vec<MetricsRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| format_err(path, e.to_string())))
        .collect()
}

pub fn read_metrics(path: &Path) -> LabResult<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    metrics_from_csv(&text, path)
}

/// One row per method; columns per case × horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

#[derive(Clone, Copy, PartialEq)]
enum Quantity {
    L2,
    Angular,
    Perplexity,
}

impl Quantity {
    fn label(self) -> &'static str {
        match self {
            Quantity::L2 => "L2",
            Quantity::Angular => "angular",
            Quantity::Perplexity => "ln-ppl",
        }
    }

    fn pick(self, r: &MetricsRecord) -> Option<f64> {
        match self {
            Quantity::L2 => Some(r.l2),
            Quantity::Angular => r.angular,
            Quantity::Perplexity => r.ln_perplexity,
        }
    }
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    items.filter(|s| seen.insert(*s)).map(str::to_string).collect()
}

/// Pivots records into a table. Angular and perplexity columns appear only
/// when at least one method reports them; missing cells are `None`.
pub fn build_table(records: &[MetricsRecord]) -> LabResult<ComparisonTable> {
    if records.is_empty() {
        return Err(LabError::Mismatch("report needs at least one metrics row".into()));
    }
    let mut keys = HashSet::new();
    for r in records {
        if !keys.insert((&r.method, &r.case, r.horizon)) {
            return Err(LabError::Mismatch(format!(
                "duplicate row for method {} on case {} at horizon {}",
                r.method, r.case, r.horizon
            )));
        }
    }
    let methods = first_seen(records.iter().map(|r| r.method.as_str()));
    let cases = first_seen(records.iter().map(|r| r.case.as_str()));
    let mut horizons: Vec<usize> = records.iter().map(|r| r.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut quantities = vec![Quantity::L2];
    for q in [Quantity::Angular, Quantity::Perplexity] {
        if records.iter().any(|r| q.pick(r).is_some()) {
            quantities.push(q);
        }
    }
    let mut columns = Vec::new();
    let mut slots = Vec::new();
    for q in &quantities {
        for case in &cases {
            for &h in &horizons {
                columns.push(format!("{case} {}@{h}", q.label()));
                slots.push((*q, case.as_str(), h));
            }
        }
    }
    let rows = methods
        .iter()
        .map(|m| {
            let cells = slots
                .iter()
                .map(|&(q, case, h)| {
                    records.iter().find(|r| &r.method == m && r.case == case && r.horizon == h).and_then(|r| q.pick(r))
                })
                .collect();
            (m.clone(), cells)
        })
        .collect();
    Ok(ComparisonTable { columns, rows })
}

const MISSING: &str = "-";

impl ComparisonTable {
    /// CSV with exact (round-trip) number formatting and `-` for missing cells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory csv write");
        for (method, cells) in &self.rows {
            let mut rec = vec![method.clone()];
            rec.extend(cells.iter().map(|c| c.map_or_else(|| MISSING.to_string(), |v| v.to_string())));
            w.write_record(&rec).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> LabResult<Self> {
        let bad = |d: String| LabError::Mismatch(format!("table csv: {d}"));
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut records = reader.records();
        let header = records.next().ok_or_else(|| bad("empty".into()))?.map_err(|e| bad(e.to_string()))?;
        if header.get(0) != Some("method") {
            return Err(bad("first column must be `method`".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != columns.len() + 1 {
                return Err(bad(format!("row has {} cells, header has {}", rec.len(), columns.len() + 1)));
            }
            let cells = rec
                .iter()
                .skip(1)
                .map(|c| if c == MISSING { Ok(None) } else { c.parse().map(Some).map_err(|_| bad(format!("bad number {c:?}"))) })
                .collect::<LabResult<Vec<_>>>()?;
            rows.push((rec[0].to_string(), cells));
        }
        Ok(Self { columns, rows })
    }

    /// Column-aligned text with three decimals.
    pub fn to_text(&self) -> String {
        let mut grid = vec![std::iter::once("method".to_string()).chain(self.columns.iter().cloned()).collect::<Vec<_>>()];
        for (m, cells) in &self.rows {
            grid.push(
                std::iter::once(m.clone())
                    .chain(cells.iter().map(|c| c.map_or_else(|| MISSING.to_string(), |v| format!("{v:.3}"))))
                    .collect(),
            );
        }
        let widths: Vec<usize> =
            (0..grid[0].len()).map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, &w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                out.push_str(&rule.join("-|-"));
                out.push('\n');
            }
        }
        out
    }
}
