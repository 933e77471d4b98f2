//! Log cleaning, the per-cell violation summary and tester feedback.
//!
//! A *cell* is one (function, relation) pair, addressed as `function.MR`.

use std::collections::HashSet;
use std::fmt::Write as _;

use indexmap::IndexMap;
use num_traits::{One, Zero};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ExecutionRecord;
use crate::mr::{MrSpec, Value, Verdict};
use crate::ratio::{render_exact, render_percent, Ratio};
use crate::tdg::sampling_rng;

pub const DEFAULT_SAMPLE_SIZE: usize = 3;

pub fn default_atypical_threshold() -> Ratio {
    Ratio::new(1, 10)
}

pub fn cell_key(function: &str, mr: &str) -> String {
    format!("{function}.{mr}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanLog {
    pub mr_ids: Vec<String>,
    pub records: Vec<ExecutionRecord>,
    pub dropped_duplicates: usize,
    pub dropped_inconsistent: usize,
    /// Rows missing an outcome for some relation.
    pub dropped_incomplete: usize,
}

impl CleanLog {
    /// Functions in order of first appearance.
    pub fn functions(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.function.as_str()))
            .map(|r| r.function.clone())
            .collect()
    }
}

/// Drops duplicate (id, function) rows keeping the first, rows with missing
/// relation outcomes, and rows whose verdicts do not follow from their
/// stored outputs.
pub fn preprocess(log: Vec<ExecutionRecord>, mrs: &[MrSpec]) -> Result<CleanLog> {
    let mut seen = HashSet::new();
    let mut clean = CleanLog {
        mr_ids: mrs.iter().map(|m| m.id.clone()).collect(),
        records: Vec::with_capacity(log.len()),
        dropped_duplicates: 0,
        dropped_inconsistent: 0,
        dropped_incomplete: 0,
    };
    for record in log {
        if !seen.insert((record.id, record.function.clone())) {
            clean.dropped_duplicates += 1;
        } else if !mrs.iter().all(|m| record.outcome(&m.id).is_some()) {
            clean.dropped_incomplete += 1;
        } else if !record.rederives(mrs) {
            clean.dropped_inconsistent += 1;
        } else {
            clean.records.push(record);
        }
    }
    if clean.records.is_empty() {
        return Err(Error::EmptyAfterCleaning);
    }
    Ok(clean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub a: Value,
    pub b: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSummary {
    pub function: String,
    pub mr: String,
    pub total: u64,
    pub violated: u64,
    pub sample_violating: Vec<Sample>,
    pub sample_not_violating: Vec<Sample>,
}

impl CellSummary {
    pub fn key(&self) -> String {
        cell_key(&self.function, &self.mr)
    }

    pub fn not_violated(&self) -> u64 {
        self.total - self.violated
    }

    pub fn violated_pct(&self) -> Ratio {
        Ratio::new(self.violated, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictSummary {
    pub cells: Vec<CellSummary>,
}

impl VerdictSummary {
    pub fn cell(&self, function: &str, mr: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.function == function && c.mr == mr)
    }
}

fn pick(rows: &[&ExecutionRecord], size: usize, rng: &mut impl rand::Rng) -> Vec<Sample> {
    let mut chosen: Vec<usize> = index::sample(rng, rows.len(), size.min(rows.len())).into_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| Sample { id: rows[i].id, a: rows[i].a, b: rows[i].b }).collect()
}

/// Exact per-cell counts plus up to `sample_size` random example inputs per
/// verdict, drawn from the campaign seed's sampling stream.
pub fn summarize(clean: &CleanLog, sample_size: usize, seed: u64) -> VerdictSummary {
    let mut rng = sampling_rng(seed);
    let mut cells = Vec::new();
    for function in clean.functions() {
        let rows: Vec<&ExecutionRecord> = clean.records.iter().filter(|r| r.function == function).collect();
        for mr in &clean.mr_ids {
            let (violating, not_violating): (Vec<&ExecutionRecord>, Vec<&ExecutionRecord>) =
                rows.iter().partition(|r| r.verdict(mr) == Some(Verdict::Violated));
            cells.push(CellSummary {
                function: function.clone(),
                mr: mr.clone(),
                total: rows.len() as u64,
                violated: violating.len() as u64,
                sample_violating: pick(&violating, sample_size, &mut rng),
                sample_not_violating: pick(&not_violating, sample_size, &mut rng),
            });
        }
    }
    VerdictSummary { cells }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellReport {
    total: u64,
    violated: u64,
    not_violated: u64,
    violated_ratio: String,
    violated_pct: String,
    sample_violating: Vec<Sample>,
    sample_not_violating: Vec<Sample>,
}

/// The machine-readable summary document, keyed by function then relation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryReport {
    pub campaign: String,
    functions: IndexMap<String, IndexMap<String, CellReport>>,
}

impl SummaryReport {
    pub fn new(summary: &VerdictSummary, campaign: &str) -> Self {
        let mut functions: IndexMap<String, IndexMap<String, CellReport>> = IndexMap::new();
        for c in &summary.cells {
            functions.entry(c.function.clone()).or_default().insert(
                c.mr.clone(),
                CellReport {
                    total: c.total,
                    violated: c.violated,
                    not_violated: c.not_violated(),
                    violated_ratio: render_exact(c.violated_pct()),
                    violated_pct: render_percent(c.violated_pct()),
                    sample_violating: c.sample_violating.clone(),
                    sample_not_violating: c.sample_not_violating.clone(),
                },
            );
        }
        SummaryReport { campaign: campaign.to_string(), functions }
    }

    pub fn summary(&self) -> Result<VerdictSummary> {
        let mut cells = Vec::new();
        for (function, mrs) in &self.functions {
            for (mr, c) in mrs {
                if c.violated > c.total || c.violated + c.not_violated != c.total || c.total == 0 {
                    return Err(Error::Config(format!("inconsistent counts in summary cell {}", cell_key(function, mr))));
                }
                cells.push(CellSummary {
                    function: function.clone(),
                    mr: mr.clone(),
                    total: c.total,
                    violated: c.violated,
                    sample_violating: c.sample_violating.clone(),
                    sample_not_violating: c.sample_not_violating.clone(),
                });
            }
        }
        Ok(VerdictSummary { cells })
    }
}

/// Fixed-width percentage table, one row per function.
pub fn render_table(summary: &VerdictSummary) -> String {
    let mut functions: Vec<&str> = Vec::new();
    let mut mrs: Vec<&str> = Vec::new();
    for c in &summary.cells {
        if !functions.contains(&c.function.as_str()) {
            functions.push(&c.function);
        }
        if !mrs.contains(&c.mr.as_str()) {
            mrs.push(&c.mr);
        }
    }
    let mut out = format!("{:<10}", "violated");
    for mr in &mrs {
        let _ = write!(out, "{mr:>9}");
    }
    out.push('\n');
    for f in functions {
        let _ = write!(out, "{f:<10}");
        for mr in &mrs {
            let cell = summary.cell(f, mr).map(|c| render_percent(c.violated_pct())).unwrap_or_else(|| "-".into());
            let _ = write!(out, "{cell:>9}");
        }
        out.push('\n');
    }
    out
}

/// Per-cell CSV for external plotting.
pub fn render_csv(summary: &VerdictSummary) -> String {
    let mut out = String::from("function,mr,total,violated,not_violated,violated_pct\n");
    for c in &summary.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.function,
            c.mr,
            c.total,
            c.violated,
            c.not_violated(),
            crate::ratio::render(c.violated_pct(), 3)
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    FullMatch,
    NoMatch,
    Mixed,
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IncludeAs {
    PositiveTest,
    NegativeTest,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackDecision {
    pub function: String,
    pub mr: String,
    pub classification: Classification,
    pub include_as: Option<IncludeAs>,
    pub violated: u64,
    pub total: u64,
    /// Violated or not violated only rarely; worth a manual look.
    pub atypical: bool,
}

impl FeedbackDecision {
    pub fn key(&self) -> String {
        cell_key(&self.function, &self.mr)
    }

    pub fn violated_pct(&self) -> Ratio {
        Ratio::new(self.violated, self.total)
    }
}

pub fn classify(summary: &VerdictSummary, atypical_threshold: Ratio) -> Vec<FeedbackDecision> {
    summary
        .cells
        .iter()
        .map(|c| {
            let pct = c.violated_pct();
            let (classification, include_as) = if pct.is_one() {
                (Classification::NoMatch, Some(IncludeAs::NegativeTest))
            } else if pct.is_zero() {
                (Classification::FullMatch, Some(IncludeAs::PositiveTest))
            } else {
                (Classification::Mixed, None)
            };
            let atypical = classification == Classification::Mixed
                && (pct <= atypical_threshold || pct >= Ratio::one() - atypical_threshold);
            FeedbackDecision {
                function: c.function.clone(),
                mr: c.mr.clone(),
                classification,
                include_as,
                violated: c.violated,
                total: c.total,
                atypical,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_as: Option<IncludeAs>,
}

/// Tester overrides keyed by `function.MR`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionsDocument(pub IndexMap<String, Override>);

impl DecisionsDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedDecisions(e.to_string()))
    }
}

pub fn apply_feedback(defaults: &[FeedbackDecision], overrides: &DecisionsDocument) -> Result<Vec<FeedbackDecision>> {
    let mut decisions = defaults.to_vec();
    for (key, ov) in &overrides.0 {
        let d = decisions.iter_mut().find(|d| d.key() == *key).ok_or_else(|| Error::UnknownCell(key.clone()))?;
        let invalid = |reason: &str| Error::InvalidDecision { cell: key.clone(), reason: reason.to_string() };
        if let Some(c) = ov.classification {
            let pct = d.violated_pct();
            match c {
                Classification::FullMatch if !pct.is_zero() => return Err(invalid("FullMatch requires 0% violations")),
                Classification::NoMatch if !pct.is_one() => return Err(invalid("NoMatch requires 100% violations")),
                Classification::Mixed if pct.is_zero() || pct.is_one() => {
                    return Err(invalid("Mixed requires both verdicts to occur"))
                }
                _ => {}
            }
            d.classification = c;
        }
        if let Some(inc) = ov.include_as {
            match (d.classification, inc) {
                (Classification::FullMatch, IncludeAs::NegativeTest) => {
                    return Err(invalid("a cell that never violates cannot be a negative test"))
                }
                (Classification::NoMatch, IncludeAs::PositiveTest) => {
                    return Err(invalid("a cell that always violates cannot be a positive test"))
                }
                _ => {}
            }
            d.include_as = Some(inc);
        }
    }
    Ok(decisions)
}

/// The decision file written by review and read by mining.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionSet {
    pub campaign: String,
    pub decisions: Vec<FeedbackDecision>,
}

/// The first cell marked as a fault, if any. Such a campaign must not
/// proceed to suite generation.
pub fn blocking_fault(decisions: &[FeedbackDecision]) -> Option<String> {
    decisions.iter().find(|d| d.classification == Classification::Fault).map(FeedbackDecision::key)
}
