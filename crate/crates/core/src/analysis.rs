//! Social-class metrics and crisis indicators derived from fitted parameters.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EyfModel, EyfParams};

pub const DEFAULT_WARNING_THRESHOLD: f64 = 0.08;
pub const DEFAULT_CRISIS_TOLERANCE: f64 = 0.15;

/// One fitted year, as stored in series files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearEntry {
    pub year: i32,
    pub region: String,
    pub params: EyfParams,
}

/// Fitted parameters of one region over strictly increasing years.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearSeries {
    region: String,
    entries: Vec<YearEntry>,
}

impl YearSeries {
    pub fn new(entries: Vec<YearEntry>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::Data("year series is empty".into()));
        };
        let region = first.region.clone();
        for e in &entries {
            if e.region != region {
                return Err(Error::Data(format!(
                    "series mixes regions `{region}` and `{}`",
                    e.region
                )));
            }
            e.params
                .validate()
                .map_err(|err| Error::Data(format!("{region} {}: {err}", e.year)))?;
        }
        if let Some(w) = entries.windows(2).find(|w| w[1].year <= w[0].year) {
            return Err(Error::Data(format!(
                "years must be strictly increasing ({} after {})",
                w[1].year, w[0].year
            )));
        }
        Ok(Self { region, entries })
    }

    /// Groups entries by region, in order of first appearance.
    pub fn split_by_region(entries: Vec<YearEntry>) -> Result<Vec<Self>> {
        let mut groups: Vec<Vec<YearEntry>> = Vec::new();
        for e in entries {
            match groups.iter_mut().find(|g| g[0].region == e.region) {
                Some(g) => g.push(e),
                None => groups.push(vec![e]),
            }
        }
        if groups.is_empty() {
            return Err(Error::Data("year series is empty".into()));
        }
        groups.into_iter().map(Self::new).collect()
    }

    /// Reads a JSON array of `{year, region, params}`; one series per region.
    pub fn load(path: &Path) -> Result<Vec<Self>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<YearEntry> = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        Self::split_by_region(entries)
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn entries(&self) -> &[YearEntry] {
        &self.entries
    }

    pub fn get(&self, year: i32) -> Option<&EyfParams> {
        self.entries.iter().find(|e| e.year == year).map(|e| &e.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub low_range: (f64, f64),
    pub medium_range: (f64, f64),
    /// `m1 - m0`
    pub medium_width: f64,
    /// `log10(m1 / m0)`
    pub medium_decades: f64,
    /// Share of the population in the medium class, `CCDF(m0) - CCDF(m1)`.
    pub ccdf_drop: f64,
    /// `alpha1 / alpha`
    pub exponent_ratio: f64,
}

pub fn class_metrics(model: &EyfModel) -> Result<ClassMetrics> {
    let p = model.params();
    Ok(ClassMetrics {
        low_range: (0.0, p.m0),
        medium_range: (p.m0, p.m1),
        medium_width: p.m1 - p.m0,
        medium_decades: (p.m1 / p.m0).log10(),
        ccdf_drop: model.ccdf(p.m0)? - model.ccdf(p.m1)?,
        exponent_ratio: p.alpha1 / p.alpha,
    })
}

/// Year whose `m0` rose by at least the threshold over the year before.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EarlyWarning {
    pub year: i32,
    pub previous_m0: f64,
    pub m0: f64,
    pub change: f64,
}

/// Relative change of `m0` from year `y - 1` to `y`, for every consecutive pair.
fn m0_changes(series: &YearSeries) -> Vec<EarlyWarning> {
    series
        .entries
        .windows(2)
        .filter(|w| w[1].year == w[0].year + 1)
        .map(|w| EarlyWarning {
            year: w[1].year,
            previous_m0: w[0].params.m0,
            m0: w[1].params.m0,
            change: (w[1].params.m0 - w[0].params.m0) / w[0].params.m0,
        })
        .collect()
}

/// Years where `m0` jumped by at least `threshold` (relative) over the
/// previous calendar year. Gaps in the series are not bridged.
pub fn early_warning(series: &YearSeries, threshold: f64) -> Vec<EarlyWarning> {
    m0_changes(series)
        .into_iter()
        .filter(|w| w.change >= threshold)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrisisSignal {
    /// `|alpha - alpha1| / alpha`
    pub gap: f64,
    pub flagged: bool,
}

/// Flags parameters whose high-income exponent has come within `tolerance`
/// of the medium-class one.
pub fn crisis_indicator(params: &EyfParams, tolerance: f64) -> CrisisSignal {
    let gap = (params.alpha - params.alpha1).abs() / params.alpha;
    CrisisSignal {
        gap,
        flagged: gap <= tolerance,
    }
}

/// Region `a` against region `b` in one year; every ratio is `a / b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionComparison {
    pub year: i32,
    pub region_a: String,
    pub region_b: String,
    pub slope_ratio: f64,
    pub ccdf_drop_ratio: f64,
    pub medium_width_ratio: f64,
    pub medium_decades_ratio: f64,
    /// `m1(year - 1) / m1(year)` of region a, when the previous year is present.
    pub m1_factor_a: Option<f64>,
    pub m1_factor_b: Option<f64>,
}

pub fn compare_regions(a: &YearSeries, b: &YearSeries, year: i32) -> Result<RegionComparison> {
    fn lookup(s: &YearSeries, year: i32) -> Result<&EyfParams> {
        s.get(year)
            .ok_or_else(|| Error::Data(format!("year {year} missing from {} series", s.region)))
    }
    let (pa, pb) = (lookup(a, year)?, lookup(b, year)?);
    let ma = class_metrics(&EyfModel::new(pa.clone())?)?;
    let mb = class_metrics(&EyfModel::new(pb.clone())?)?;
    let factor = |s: &YearSeries, p: &EyfParams| s.get(year - 1).map(|prev| prev.m1 / p.m1);
    Ok(RegionComparison {
        year,
        region_a: a.region.clone(),
        region_b: b.region.clone(),
        slope_ratio: pa.alpha / pb.alpha,
        ccdf_drop_ratio: ma.ccdf_drop / mb.ccdf_drop,
        medium_width_ratio: ma.medium_width / mb.medium_width,
        medium_decades_ratio: ma.medium_decades / mb.medium_decades,
        m1_factor_a: factor(a, pa),
        m1_factor_b: factor(b, pb),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearReport {
    pub year: i32,
    pub params: EyfParams,
    pub metrics: ClassMetrics,
    pub crisis: CrisisSignal,
    /// Relative change of `m0` over the previous year, if that year is present.
    pub m0_change: Option<f64>,
    pub early_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub region: String,
    pub years: Vec<YearReport>,
    pub early_warnings: Vec<i32>,
    pub crises: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub warning_threshold: f64,
    pub crisis_tolerance: f64,
    pub series: Vec<SeriesReport>,
    /// Present for every year shared by the first two series.
    pub comparisons: Vec<RegionComparison>,
}

pub fn analyze(series: &[YearSeries], warning_threshold: f64, crisis_tolerance: f64) -> Result<AnalysisReport> {
    let mut reports = Vec::with_capacity(series.len());
    for s in series {
        let changes = m0_changes(s);
        let mut years = Vec::with_capacity(s.entries.len());
        for e in &s.entries {
            let m0_change = changes.iter().find(|c| c.year == e.year).map(|c| c.change);
            years.push(YearReport {
                year: e.year,
                params: e.params.clone(),
                metrics: class_metrics(&EyfModel::new(e.params.clone())?)?,
                crisis: crisis_indicator(&e.params, crisis_tolerance),
                m0_change,
                early_warning: m0_change.is_some_and(|c| c >= warning_threshold),
            });
        }
        reports.push(SeriesReport {
            region: s.region.clone(),
            early_warnings: years.iter().filter(|y| y.early_warning).map(|y| y.year).collect(),
            crises: years.iter().filter(|y| y.crisis.flagged).map(|y| y.year).collect(),
            years,
        });
    }
    let mut comparisons = Vec::new();
    if let [a, b, ..] = series {
        for e in &a.entries {
            if b.get(e.year).is_some() {
                comparisons.push(compare_regions(a, b, e.year)?);
            }
        }
    }
    Ok(AnalysisReport {
        warning_threshold,
        crisis_tolerance,
        series: reports,
        comparisons,
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

impl AnalysisReport {
    /// Plain-text tables, one per series plus one for the comparisons.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "early warning: m0 rise >= {:.1}%   crisis: |alpha - alpha1|/alpha <= {:.1}%",
            100.0 * self.warning_threshold,
            100.0 * self.crisis_tolerance
        );
        for s in &self.series {
            let _ = writeln!(out, "\n{}", s.region);
            let _ = writeln!(
                out,
                "{:>6} {:>10} {:>10} {:>10} {:>7} {:>7} {:>10} {:>8} {:>9} {:>8} {:>8}  flags",
                "year", "m0", "m1", "T", "alpha", "alpha1", "width", "decades", "ccdf_drop", "dm0", "gap"
            );
            for y in &s.years {
                let mut flags = Vec::new();
                if y.early_warning {
                    flags.push("warning");
                }
                if y.crisis.flagged {
                    flags.push("crisis");
                }
                let _ = writeln!(
                    out,
                    "{:>6} {:>10.0} {:>10.0} {:>10.0} {:>7.3} {:>7.3} {:>10.0} {:>8.3} {:>9.5} {:>8} {:>8.3}  {}",
                    y.year,
                    y.params.m0,
                    y.params.m1,
                    y.params.t,
                    y.params.alpha,
                    y.params.alpha1,
                    y.metrics.medium_width,
                    y.metrics.medium_decades,
                    y.metrics.ccdf_drop,
                    opt(y.m0_change, 3),
                    y.crisis.gap,
                    flags.join(",")
                );
            }
        }
        if let Some(first) = self.comparisons.first() {
            let _ = writeln!(out, "\n{} / {}", first.region_a, first.region_b);
            let _ = writeln!(
                out,
                "{:>6} {:>8} {:>10} {:>8} {:>8} {:>9} {:>9}",
                "year", "slope", "ccdf_drop", "width", "decades", "m1 fac a", "m1 fac b"
            );
            for c in &self.comparisons {
                let _ = writeln!(
                    out,
                    "{:>6} {:>8.3} {:>10.3} {:>8.3} {:>8.3} {:>9} {:>9}",
                    c.year,
                    c.slope_ratio,
                    c.ccdf_drop_ratio,
                    c.medium_width_ratio,
                    c.medium_decades_ratio,
                    opt(c.m1_factor_a, 3),
                    opt(c.m1_factor_b, 3)
                );
            }
        }
        out
    }
}
