//! Income records and rank-based empirical CCDFs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-empty set of non-negative incomes with optional survey weights.
#[derive(Debug, Clone, PartialEq)]
pub struct IncomeSample {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
    source: String,
}

impl IncomeSample {
    pub fn new(values: Vec<f64>, weights: Option<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("income sample is empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Data(format!("income {bad} is not a finite non-negative value")));
        }
        if let Some(w) = &weights {
            if w.len() != values.len() {
                return Err(Error::Data(format!("{} weights for {} incomes", w.len(), values.len())));
            }
            if let Some(bad) = w.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                return Err(Error::Data(format!("weight {bad} is not positive")));
            }
        }
        Ok(Self {
            values,
            weights,
            source: source.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        match &self.weights {
            Some(w) => w.iter().sum(),
            None => self.values.len() as f64,
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Every value multiplied by `factor` (weights kept).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.values.iter().map(|v| v * factor).collect(),
            self.weights.clone(),
            self.source.clone(),
        )
    }

    /// Records picked by index, e.g. a bootstrap resample.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let values = indices.iter().map(|&i| self.values[i]).collect();
        let weights = self.weights.as_ref().map(|w| indices.iter().map(|&i| w[i]).collect());
        Self::new(values, weights, self.source.clone())
    }

    /// Writes a one-column CSV with header `income` (plus `weight` when weighted).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        match &self.weights {
            None => {
                writeln!(out, "income").map_err(io)?;
                for v in &self.values {
                    writeln!(out, "{v}").map_err(io)?;
                }
            }
            Some(w) => {
                writeln!(out, "income,weight").map_err(io)?;
                for (v, w) in self.values.iter().zip(w) {
                    writeln!(out, "{v},{w}").map_err(io)?;
                }
            }
        }
        out.flush().map_err(io)
    }
}

/// Column selector for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl Column {
    /// Parses `"3"` as an index and anything else as a header name.
    pub fn parse(spec: &str) -> Self {
        spec.parse::<usize>()
            .map(Column::Index)
            .unwrap_or_else(|_| Column::Name(spec.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvFormat {
    pub income: Column,
    pub weight: Option<Column>,
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self {
            income: Column::Name("income".into()),
            weight: None,
            has_header: true,
            delimiter: b',',
        }
    }
}

/// Why a row was left out of a loaded sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRow {
    /// 1-based line number in the file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedIncomes {
    pub sample: IncomeSample,
    pub rejected: Vec<RejectedRow>,
}

fn resolve(column: &Column, headers: Option<&csv::StringRecord>, path: &Path) -> Result<usize> {
    match column {
        Column::Index(i) => Ok(*i),
        Column::Name(name) => headers
            .and_then(|h| h.iter().position(|c| c.trim() == name))
            .ok_or_else(|| Error::parse(path, format!("column `{name}` not found in header"))),
    }
}

/// Reads incomes from a CSV file. Negative or non-numeric incomes are rejected
/// row by row and listed in the result.
pub fn load_incomes(path: &Path, format: &CsvFormat) -> Result<LoadedIncomes> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(format.has_header)
        .delimiter(format.delimiter)
        .flexible(true)
        .from_reader(file);
    let headers = if format.has_header {
        Some(reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone())
    } else {
        None
    };
    let income_col = resolve(&format.income, headers.as_ref(), path)?;
    let weight_col = format
        .weight
        .as_ref()
        .map(|c| resolve(c, headers.as_ref(), path))
        .transpose()?;

    let mut values = Vec::new();
    let mut weights = Vec::new();
    let mut rejected = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let Some(raw) = record.get(income_col) else {
            return Err(Error::parse(path, format!("line {line}: no column {income_col}")));
        };
        let income = match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            Ok(v) => {
                rejected.push(RejectedRow {
                    line,
                    reason: format!("income {v} is negative or not finite"),
                });
                continue;
            }
            Err(_) => {
                rejected.push(RejectedRow {
                    line,
                    reason: format!("income `{}` is not a number", raw.trim()),
                });
                continue;
            }
        };
        if let Some(wc) = weight_col {
            let Some(raw) = record.get(wc) else {
                return Err(Error::parse(path, format!("line {line}: no column {wc}")));
            };
            match raw.trim().parse::<f64>() {
                Ok(w) if w.is_finite() && w > 0.0 => weights.push(w),
                _ => {
                    rejected.push(RejectedRow {
                        line,
                        reason: format!("weight `{}` is not a positive number", raw.trim()),
                    });
                    continue;
                }
            }
        }
        values.push(income);
    }
    if values.is_empty() {
        return Err(Error::parse(path, "no valid income rows"));
    }
    let weights = weight_col.map(|_| weights);
    let sample = IncomeSample::new(values, weights, path.display().to_string())?;
    Ok(LoadedIncomes { sample, rejected })
}

/// Step-function survival curve: strictly increasing incomes, strictly
/// decreasing probabilities in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCcdf {
    incomes: Vec<f64>,
    probs: Vec<f64>,
    /// Records (or weight) at or above each point: the rank behind `probs`.
    counts: Vec<f64>,
    n_effective: f64,
}

impl EmpiricalCcdf {
    /// Counts are taken as `p (n_effective + 1)`, the Weibull rank.
    pub fn new(incomes: Vec<f64>, probs: Vec<f64>, n_effective: f64) -> Result<Self> {
        let counts = probs.iter().map(|p| p * (n_effective + 1.0)).collect();
        Self::with_counts(incomes, probs, counts, n_effective)
    }

    pub fn with_counts(incomes: Vec<f64>, probs: Vec<f64>, counts: Vec<f64>, n_effective: f64) -> Result<Self> {
        if counts.len() != probs.len() || !counts.iter().all(|c| *c > 0.0) {
            return Err(Error::Data("counts must be positive, one per point".into()));
        }
        if incomes.is_empty() || incomes.len() != probs.len() {
            return Err(Error::Data("empirical CCDF needs matching, non-empty columns".into()));
        }
        if !incomes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Data("incomes must be strictly increasing".into()));
        }
        if !probs.windows(2).all(|w| w[0] > w[1]) || !probs.iter().all(|p| *p > 0.0 && *p < 1.0) {
            return Err(Error::Data(
                "probabilities must be strictly decreasing in (0, 1)".into(),
            ));
        }
        if !(n_effective > 0.0) {
            return Err(Error::Data("effective size must be positive".into()));
        }
        Ok(Self {
            incomes,
            probs,
            counts,
            n_effective,
        })
    }

    pub fn incomes(&self) -> &[f64] {
        &self.incomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn n_effective(&self) -> f64 {
        self.n_effective
    }

    pub fn len(&self) -> usize {
        self.incomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incomes.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.incomes.iter().copied().zip(self.probs.iter().copied())
    }

    /// Decades of income spanned by the positive incomes.
    pub fn decades(&self) -> f64 {
        let lo = self.incomes.iter().copied().find(|m| *m > 0.0);
        match lo {
            Some(lo) => (self.incomes[self.incomes.len() - 1] / lo).log10(),
            None => 0.0,
        }
    }

    /// Step-function value `P(X > m)` of the curve (1 below the first point).
    pub fn survival_at(&self, m: f64) -> f64 {
        let k = self.incomes.partition_point(|&x| x <= m);
        if k == 0 {
            1.0
        } else {
            self.probs[k - 1]
        }
    }

    /// Two-column TSV `income<TAB>survival`, shortest round-trip decimals.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "income\tccdf").map_err(io)?;
        for (m, p) in self.points() {
            writeln!(out, "{m}\t{p}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Weibull plotting positions: the r-th largest of N values gets `r/(N+1)`.
/// Tied values collapse to one point at the largest tied rank; with weights,
/// `r` is the cumulative weight from the top and `N` the total weight.
pub fn rank_ccdf(sample: &IncomeSample) -> EmpiricalCcdf {
    let (incomes, probs, counts) = rank_points(sample);
    EmpiricalCcdf {
        incomes,
        probs,
        counts,
        n_effective: sample.total_weight(),
    }
}

fn rank_points(sample: &IncomeSample) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let values = sample.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let weight = |i: usize| sample.weights().map_or(1.0, |w| w[i]);
    let denom = sample.total_weight() + 1.0;

    let mut incomes = Vec::new();
    let mut probs = Vec::new();
    let mut counts = Vec::new();
    let mut rank = 0.0;
    let mut j = 0;
    while j < order.len() {
        let v = values[order[j]];
        while j < order.len() && values[order[j]] == v {
            rank += weight(order[j]);
            j += 1;
        }
        incomes.push(v);
        probs.push(rank / denom);
        counts.push(rank);
    }
    incomes.reverse();
    probs.reverse();
    counts.reverse();
    (incomes, probs, counts)
}

/// What happened when a rich list was merged into a survey curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeReport {
    pub survey_points: usize,
    pub tail_points: usize,
    /// Survey points dropped to keep the merged curve strictly monotone.
    pub removed_survey_points: usize,
    /// Set when the rich list does not lie entirely above the survey.
    pub overlap: bool,
}

/// Places the `K` richest of a population of size `P` at survival `r/(P+1)` on
/// top of the survey's own rank CCDF. Survey points that would break strict
/// monotonicity against the tail are removed and counted.
pub fn augment_tail(
    survey: &IncomeSample,
    rich_list: Option<&IncomeSample>,
    population: f64,
) -> Result<(EmpiricalCcdf, MergeReport)> {
    if !(population >= survey.total_weight()) {
        return Err(Error::Data(format!(
            "population {population} is smaller than the survey ({})",
            survey.total_weight()
        )));
    }
    let body = rank_ccdf(survey);
    let Some(rich) = rich_list else {
        let report = MergeReport {
            survey_points: body.len(),
            tail_points: 0,
            removed_survey_points: 0,
            overlap: false,
        };
        return Ok((body, report));
    };

    let denom = population + 1.0;
    // descending: rank r -> r/(P+1), ties at the largest tied rank
    let mut tail_points: Vec<(f64, f64)> = Vec::with_capacity(rich.len());
    let mut rank = 0usize;
    let mut sorted = rich.values().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        while i < sorted.len() && sorted[i] == v {
            rank += 1;
            i += 1;
        }
        tail_points.push((v, rank as f64));
    }
    tail_points.reverse();
    let (tail_min_income, tail_max_rank) = tail_points[0];
    let tail_max_prob = tail_max_rank / denom;
    let overlap = survey.max() >= tail_min_income;

    let size = body.len() + tail_points.len();
    let mut incomes = Vec::with_capacity(size);
    let mut probs = Vec::with_capacity(size);
    let mut counts = Vec::with_capacity(size);
    let mut removed = 0;
    for ((m, p), c) in body.points().zip(body.counts()) {
        if m < tail_min_income && p > tail_max_prob {
            incomes.push(m);
            probs.push(p);
            counts.push(*c);
        } else {
            removed += 1;
        }
    }
    if removed > 0 {
        log::info!("tail merge removed {removed} survey points above the rich-list boundary");
    }
    for (m, r) in &tail_points {
        incomes.push(*m);
        probs.push(r / denom);
        counts.push(*r);
    }
    let report = MergeReport {
        survey_points: body.len() - removed,
        tail_points: tail_points.len(),
        removed_survey_points: removed,
        overlap,
    };
    Ok((EmpiricalCcdf::with_counts(incomes, probs, counts, population)?, report))
}

/// Keeps at most `points_per_decade` points per decade of income: the first
/// (lowest-income) point of each bin `floor(log10(m) * points_per_decade)`.
/// Non-positive incomes have no log bin and are dropped.
pub fn log_downsample(ccdf: &EmpiricalCcdf, points_per_decade: usize) -> Result<EmpiricalCcdf> {
    if points_per_decade == 0 {
        return Err(Error::Domain("points_per_decade must be at least 1".into()));
    }
    let ppd = points_per_decade as f64;
    let mut incomes = Vec::new();
    let mut probs = Vec::new();
    let mut counts = Vec::new();
    let mut last_bin = None;
    for ((m, p), c) in ccdf.points().zip(&ccdf.counts).filter(|((m, _), _)| *m > 0.0) {
        let bin = (m.log10() * ppd).floor() as i64;
        if last_bin != Some(bin) {
            incomes.push(m);
            probs.push(p);
            counts.push(*c);
            last_bin = Some(bin);
        }
    }
    if incomes.is_empty() {
        return Err(Error::Data("no positive incomes to downsample".into()));
    }
    Ok(EmpiricalCcdf {
        incomes,
        probs,
        counts,
        n_effective: ccdf.n_effective,
    })
}
