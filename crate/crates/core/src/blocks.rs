//! Raw series ingestion and block-maxima extraction.
//!
//! A [`RawSeries`] is split into blocks by a [`BlockRule`] (calendar year,
//! calendar month or a fixed number of consecutive observations) and each
//! non-empty block contributes one record to a [`BlockSeries`]. Records
//! carry group tags (`series`, `year`, `month` or `block`) that the
//! random-location models group on.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, Month, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Tag holding the series label of a record.
pub const SERIES_TAG: &str = "series";
pub const YEAR_TAG: &str = "year";
pub const MONTH_TAG: &str = "month";
pub const BLOCK_TAG: &str = "block";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub date: NaiveDate,
    pub value: f64,
}

/// One labelled time series with strictly increasing dates and finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    label: String,
    observations: Vec<Observation>,
}

impl RawSeries {
    pub fn new(label: impl Into<String>, observations: Vec<Observation>) -> Result<Self> {
        let label = label.into();
        for (i, obs) in observations.iter().enumerate() {
            if !obs.value.is_finite() {
                return Err(Error::InvalidSeries(format!(
                    "series '{label}': non-finite value at {}",
                    obs.date
                )));
            }
            if i > 0 && observations[i - 1].date >= obs.date {
                return Err(Error::InvalidSeries(format!(
                    "series '{label}': dates not strictly increasing at {}",
                    obs.date
                )));
            }
        }
        Ok(Self {
            label,
            observations,
        })
    }

    /// Convenience constructor from `(date, value)` pairs.
    pub fn from_pairs(label: impl Into<String>, pairs: &[(NaiveDate, f64)]) -> Result<Self> {
        Self::new(
            label,
            pairs
                .iter()
                .map(|&(date, value)| Observation { date, value })
                .collect(),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    fn negated(&self) -> Self {
        Self {
            label: self.label.clone(),
            observations: self
                .observations
                .iter()
                .map(|o| Observation {
                    date: o.date,
                    value: -o.value,
                })
                .collect(),
        }
    }

    /// Simple daily percent changes `100 (p_t / p_{t-1} - 1)`, dated at `t`.
    ///
    /// This assumes the input holds price levels; the first observation is
    /// consumed.
    pub fn percent_changes(&self) -> Result<Self> {
        let obs = self
            .observations
            .windows(2)
            .map(|w| {
                if w[0].value == 0.0 {
                    return Err(Error::InvalidSeries(format!(
                        "series '{}': zero price at {}",
                        self.label, w[0].date
                    )));
                }
                Ok(Observation {
                    date: w[1].date,
                    value: 100.0 * (w[1].value / w[0].value - 1.0),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.label.clone(), obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockRule {
    Year,
    Month,
    FixedSize(usize),
}

impl FromStr for BlockRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "year" => Ok(BlockRule::Year),
            "month" => Ok(BlockRule::Month),
            _ => match s.strip_prefix("size:").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => Ok(BlockRule::FixedSize(n)),
                _ => Err(Error::Domain(format!(
                    "unknown block rule '{s}' (expected year, month or size:N with N > 0)"
                ))),
            },
        }
    }
}

impl fmt::Display for BlockRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockRule::Year => f.write_str("year"),
            BlockRule::Month => f.write_str("month"),
            BlockRule::FixedSize(n) => write!(f, "size:{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    #[default]
    Max,
    Min,
}

impl FromStr for ExtremumKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(ExtremumKind::Max),
            "min" => Ok(ExtremumKind::Min),
            _ => Err(Error::Domain(format!(
                "unknown extremum kind '{s}' (expected max or min)"
            ))),
        }
    }
}

impl fmt::Display for ExtremumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtremumKind::Max => "max",
            ExtremumKind::Min => "min",
        })
    }
}

impl ExtremumKind {
    /// Column name used for the extremum in block CSV files.
    pub fn column_name(self) -> &'static str {
        match self {
            ExtremumKind::Max => "maximum",
            ExtremumKind::Min => "minimum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    /// The block extremum (a maximum, or a minimum for [`ExtremumKind::Min`]).
    pub value: f64,
    pub label: String,
    pub tags: BTreeMap<String, String>,
}

/// Extracted block extrema. All records carry the same set of tag names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSeries {
    records: Vec<BlockRecord>,
    kind: ExtremumKind,
}

impl BlockSeries {
    pub fn new(records: Vec<BlockRecord>, kind: ExtremumKind) -> Result<Self> {
        if let Some(first) = records.first() {
            for r in &records {
                if !r.value.is_finite() {
                    return Err(Error::InvalidSeries(format!(
                        "block '{}' has a non-finite value",
                        r.label
                    )));
                }
                if !r.tags.keys().eq(first.tags.keys()) {
                    return Err(Error::InvalidSeries(format!(
                        "block '{}' has tag names {:?}, expected {:?}",
                        r.label,
                        r.tags.keys().collect::<Vec<_>>(),
                        first.tags.keys().collect::<Vec<_>>()
                    )));
                }
            }
        }
        Ok(Self { records, kind })
    }

    /// Untagged series from bare values, labelled by position.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &value)| BlockRecord {
                    value,
                    label: (i + 1).to_string(),
                    tags: BTreeMap::new(),
                })
                .collect(),
            ExtremumKind::Max,
        )
    }

    pub fn records(&self) -> &[BlockRecord] {
        &self.records
    }

    pub fn kind(&self) -> ExtremumKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    pub fn tag_names(&self) -> Vec<String> {
        self.records
            .first()
            .map(|r| r.tags.keys().cloned().collect())
            .unwrap_or_default()
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.records.first().is_some_and(|r| r.tags.contains_key(tag))
    }

    /// Concatenate several series of the same kind and tag layout.
    pub fn concat(parts: impl IntoIterator<Item = BlockSeries>) -> Result<Self> {
        let mut kind = None;
        let mut records = Vec::new();
        for part in parts {
            if *kind.get_or_insert(part.kind) != part.kind {
                return Err(Error::InvalidSeries(
                    "cannot combine maxima and minima".into(),
                ));
            }
            records.extend(part.records);
        }
        Self::new(records, kind.unwrap_or_default())
    }

    /// Records whose labels are not in `labels`.
    fn without_labels(&self, labels: &[(String, String)]) -> Self {
        let records = self
            .records
            .iter()
            .filter(|r| {
                let series = r.tags.get(SERIES_TAG).cloned().unwrap_or_default();
                !labels.iter().any(|(s, l)| *s == series && *l == r.label)
            })
            .cloned()
            .collect();
        Self {
            records,
            kind: self.kind,
        }
    }

    /// Percentage of extrema at or below `value`, unrounded.
    pub fn empirical_percentile(&self, value: f64) -> f64 {
        empirical_percentile(value, &self.values())
    }

    /// Empirical `p`-quantile of the extrema (linear interpolation between
    /// order statistics).
    pub fn empirical_quantile(&self, p: f64) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyInput("block series has no records".into()));
        }
        Ok(stats::quantile(&self.values(), p))
    }
}

/// Percentage of `data` at or below `value`, unrounded.
pub fn empirical_percentile(value: f64, data: &[f64]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let at_or_below = data.iter().filter(|&&x| x <= value).count();
    100.0 * at_or_below as f64 / data.len() as f64
}

/// Bookkeeping returned alongside the extracted blocks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockTally {
    /// Calendar blocks inside the observed date range that had no data.
    pub empty_skipped: usize,
    /// `(series, block label)` of first/last blocks that do not cover the
    /// whole period (retained unless dropped).
    pub partial_blocks: Vec<(String, String)>,
    /// Number of partial blocks removed by [`Extraction::drop_partial`].
    pub partial_dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub blocks: BlockSeries,
    pub tally: BlockTally,
}

impl Extraction {
    /// Remove the blocks flagged as partial.
    pub fn drop_partial(mut self) -> Self {
        let before = self.blocks.len();
        self.blocks = self.blocks.without_labels(&self.tally.partial_blocks);
        self.tally.partial_dropped += before - self.blocks.len();
        self
    }
}

/// Days of slack allowed between a calendar period boundary and the first
/// or last observation before the block counts as partial.
const YEAR_SLACK_DAYS: i64 = 31;
const MONTH_SLACK_DAYS: i64 = 5;

struct Block<'a> {
    label: String,
    tags: BTreeMap<String, String>,
    obs: &'a [Observation],
    period: Option<(NaiveDate, NaiveDate)>,
}

fn month_name(month: u32) -> String {
    Month::try_from(month as u8)
        .map(|m| m.name().to_string())
        .unwrap_or_else(|_| month.to_string())
}

fn month_bounds(year: i32, month: u32) -> (NaiveDate, NaiveDate) {
    let start = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month start");
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .expect("valid month start");
    (start, next.pred_opt().expect("date in range"))
}

fn calendar_key(rule: BlockRule, date: NaiveDate) -> (i32, u32) {
    match rule {
        BlockRule::Month => (date.year(), date.month()),
        _ => (date.year(), 0),
    }
}

fn partition<'a>(series: &'a RawSeries, rule: BlockRule) -> (Vec<Block<'a>>, usize) {
    let obs = series.observations();
    let mut blocks = Vec::new();
    let base_tags = || {
        let mut t = BTreeMap::new();
        t.insert(SERIES_TAG.to_string(), series.label().to_string());
        t
    };

    if let BlockRule::FixedSize(n) = rule {
        for (i, chunk) in obs.chunks(n).enumerate() {
            let mut tags = base_tags();
            tags.insert(BLOCK_TAG.to_string(), (i + 1).to_string());
            tags.insert(YEAR_TAG.to_string(), chunk[0].date.year().to_string());
            blocks.push(Block {
                label: format!("block-{:04}", i + 1),
                tags,
                obs: chunk,
                period: None,
            });
        }
        return (blocks, 0);
    }

    let mut empty = 0;
    let mut start = 0;
    let mut prev_key: Option<(i32, u32)> = None;
    while start < obs.len() {
        let key = calendar_key(rule, obs[start].date);
        let end = start
            + obs[start..]
                .iter()
                .take_while(|o| calendar_key(rule, o.date) == key)
                .count();
        if let Some((py, pm)) = prev_key {
            empty += match rule {
                BlockRule::Month => {
                    let months = |y: i32, m: u32| y as i64 * 12 + m as i64;
                    (months(key.0, key.1) - months(py, pm) - 1) as usize
                }
                _ => (key.0 - py - 1) as usize,
            };
        }
        prev_key = Some(key);

        let (year, month) = key;
        let mut tags = base_tags();
        tags.insert(YEAR_TAG.to_string(), year.to_string());
        let (label, period) = if rule == BlockRule::Month {
            tags.insert(MONTH_TAG.to_string(), month_name(month));
            (format!("{year}-{month:02}"), month_bounds(year, month))
        } else {
            let first = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
            let last = NaiveDate::from_ymd_opt(year, 12, 31).expect("valid year");
            (year.to_string(), (first, last))
        };
        blocks.push(Block {
            label,
            tags,
            obs: &obs[start..end],
            period: Some(period),
        });
        start = end;
    }
    (blocks, empty)
}

fn is_partial(block: &Block<'_>, rule: BlockRule) -> bool {
    match (rule, block.period) {
        (BlockRule::FixedSize(n), _) => block.obs.len() < n,
        (_, Some((start, end))) => {
            let slack = if rule == BlockRule::Month {
                MONTH_SLACK_DAYS
            } else {
                YEAR_SLACK_DAYS
            };
            let first = block.obs[0].date;
            let last = block.obs[block.obs.len() - 1].date;
            (first - start).num_days() > slack || (end - last).num_days() > slack
        }
        _ => false,
    }
}

/// Split `series` into blocks and keep one extremum per non-empty block.
///
/// Minima are obtained by negating the series, extracting maxima and
/// negating back.
pub fn extract_block_maxima(
    series: &RawSeries,
    rule: BlockRule,
    kind: ExtremumKind,
) -> Result<Extraction> {
    if series.is_empty() {
        return Err(Error::EmptyInput(format!(
            "series '{}' has no observations",
            series.label()
        )));
    }
    if kind == ExtremumKind::Min {
        let mut out = extract_block_maxima(&series.negated(), rule, ExtremumKind::Max)?;
        for r in &mut out.blocks.records {
            r.value = -r.value;
        }
        out.blocks.kind = ExtremumKind::Min;
        return Ok(out);
    }

    let (blocks, empty_skipped) = partition(series, rule);
    let mut tally = BlockTally {
        empty_skipped,
        ..Default::default()
    };
    let last = blocks.len() - 1;
    let mut records = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.into_iter().enumerate() {
        if (i == 0 || i == last) && is_partial(&block, rule) {
            tally
                .partial_blocks
                .push((series.label().to_string(), block.label.clone()));
        }
        let value = block
            .obs
            .iter()
            .map(|o| o.value)
            .fold(f64::NEG_INFINITY, f64::max);
        records.push(BlockRecord {
            value,
            label: block.label,
            tags: block.tags,
        });
    }
    Ok(Extraction {
        blocks: BlockSeries::new(records, ExtremumKind::Max)?,
        tally,
    })
}

/// Extract every series with the same rule and stack the results.
pub fn extract_all(series: &[RawSeries], rule: BlockRule, kind: ExtremumKind) -> Result<Extraction> {
    if series.is_empty() {
        return Err(Error::EmptyInput("no series supplied".into()));
    }
    let mut tally = BlockTally::default();
    let mut parts = Vec::with_capacity(series.len());
    for s in series {
        let ex = extract_block_maxima(s, rule, kind)?;
        tally.empty_skipped += ex.tally.empty_skipped;
        tally.partial_blocks.extend(ex.tally.partial_blocks);
        parts.push(ex.blocks);
    }
    Ok(Extraction {
        blocks: BlockSeries::concat(parts)?,
        tally,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: f64,
    /// `None` when the group has a single record.
    pub sd: Option<f64>,
}

impl GroupStats {
    fn of(values: &[f64]) -> Self {
        Self {
            count: values.len(),
            mean: stats::mean(values),
            sd: stats::sample_sd(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub tag: Option<String>,
    pub groups: Vec<(String, GroupStats)>,
    pub overall: GroupStats,
}

/// Count, mean and sample sd of the extrema per value of `tag` (in order of
/// first appearance) and overall.
pub fn summarize(bs: &BlockSeries, tag: Option<&str>) -> Result<BlockSummary> {
    if bs.is_empty() {
        return Err(Error::EmptyInput("block series has no records".into()));
    }
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    if let Some(tag) = tag {
        if !bs.has_tag(tag) {
            return Err(Error::Model(format!("tag '{tag}' not present in data")));
        }
        for r in bs.records() {
            let key = &r.tags[tag];
            match groups.iter_mut().find(|(k, _)| k == key) {
                Some((_, v)) => v.push(r.value),
                None => groups.push((key.clone(), vec![r.value])),
            }
        }
    }
    Ok(BlockSummary {
        tag: tag.map(str::to_string),
        groups: groups
            .into_iter()
            .map(|(k, v)| (k, GroupStats::of(&v)))
            .collect(),
        overall: GroupStats::of(&bs.values()),
    })
}

impl fmt::Display for BlockSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = self.tag.as_deref().unwrap_or("group");
        writeln!(f, "{:<16} {:>6} {:>10} {:>20}", head, "Blocks", "Mean", "Standard Deviation")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, g: &GroupStats| {
            let sd = g.sd.map_or_else(|| "NA".to_string(), |s| format!("{s:.2}"));
            writeln!(f, "{:<16} {:>6} {:>10.2} {:>20}", name, g.count, g.mean, sd)
        };
        for (name, g) in &self.groups {
            row(f, name, g)?;
        }
        row(f, "all", &self.overall)
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn parse_date(field: &str, line: u64) -> Result<NaiveDate> {
    let day = field
        .trim()
        .split(['T', ' '])
        .next()
        .unwrap_or_default();
    NaiveDate::parse_from_str(day, "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        message: format!("invalid date '{field}': {e}"),
    })
}

fn parse_value(field: &str, line: u64) -> Result<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("invalid value '{field}'"),
        }),
    }
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Read `date,value` or `series,date,value` CSV into one [`RawSeries`] per
/// series label (single-series files get the label `default_label`).
pub fn read_series_csv<R: Read>(reader: R, default_label: &str) -> Result<Vec<RawSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let multi = match cols.as_slice() {
        ["date", "value"] => false,
        ["series", "date", "value"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header 'date,value' or 'series,date,value', found '{}'",
                    cols.join(",")
                ),
            })
        }
    };

    let mut by_label: Vec<(String, Vec<Observation>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record_line(&rec);
        let (label, date, value) = if multi {
            (rec[0].to_string(), &rec[1], &rec[2])
        } else {
            (default_label.to_string(), &rec[0], &rec[1])
        };
        let obs = Observation {
            date: parse_date(date, line)?,
            value: parse_value(value, line)?,
        };
        let idx = match by_label.iter().position(|(l, _)| *l == label) {
            Some(i) => i,
            None => {
                by_label.push((label, Vec::new()));
                by_label.len() - 1
            }
        };
        let (label, list) = &mut by_label[idx];
        if let Some(prev) = list.last() {
            if prev.date >= obs.date {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "series '{label}': date {} does not follow {}",
                        obs.date, prev.date
                    ),
                });
            }
        }
        list.push(obs);
    }
    if by_label.is_empty() {
        return Err(Error::EmptyInput("input has no data rows".into()));
    }
    by_label
        .into_iter()
        .map(|(label, obs)| RawSeries::new(label, obs))
        .collect()
}

/// Write `block,<tags...>,maximum` (or `minimum`) rows.
pub fn write_block_csv<W: Write>(bs: &BlockSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let tags = bs.tag_names();
    let mut header = vec!["block".to_string()];
    header.extend(tags.iter().cloned());
    header.push(bs.kind().column_name().to_string());
    w.write_record(&header)?;
    for r in bs.records() {
        let mut row = vec![r.label.clone()];
        row.extend(tags.iter().map(|t| r.tags[t].clone()));
        row.push(r.value.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<block csv>", e))?;
    Ok(())
}

/// Read the format produced by [`write_block_csv`].
pub fn read_block_csv<R: Read>(reader: R) -> Result<BlockSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n = headers.len();
    let kind = match headers.get(n.saturating_sub(1)) {
        Some("maximum") => ExtremumKind::Max,
        Some("minimum") => ExtremumKind::Min,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header 'block,<tags...>,maximum' (or minimum)".into(),
            })
        }
    };
    if n < 2 || &headers[0] != "block" {
        return Err(Error::Parse {
            line: 1,
            message: "first column must be 'block'".into(),
        });
    }
    let tag_names: Vec<String> = headers.iter().skip(1).take(n - 2).map(String::from).collect();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record_line(&rec);
        let tags = tag_names
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), rec[i + 1].to_string()))
            .collect();
        records.push(BlockRecord {
            value: parse_value(&rec[n - 1], line)?,
            label: rec[0].to_string(),
            tags,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("block file has no data rows".into()));
    }
    BlockSeries::new(records, kind)
}
