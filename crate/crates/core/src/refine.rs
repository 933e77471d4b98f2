//! From clean log to classified rules: categorical encoding, per-cell
//! mining, and merging mined rules with tester decisions.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::analyser::{blocking_fault, cell_key, Classification, CleanLog, FeedbackDecision, IncludeAs};
use crate::arm::{apriori_frequent, derive_rules, lift_from, sort_rules, AssociationRule, Item, Itemset, Transaction};
use crate::error::{Error, Result};
use crate::harness::ExecutionRecord;
use crate::mr::{Value, Verdict};
use crate::ratio::{check_threshold, parse_ratio, render, Ratio};

pub const FUNC_KEY: &str = "func";
pub const REL_KEY: &str = "rel";
pub const A_ZERO_KEY: &str = "a_zero";
pub const B_ZERO_KEY: &str = "b_zero";
pub const BOTH_ZERO_KEY: &str = "both_zero";

/// Which input characteristics become items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    /// `rel` = `lt` | `eq` | `gt` comparing a with b.
    pub pair_relation: bool,
    /// `a_zero`, `b_zero`, `both_zero` = `true` | `false`.
    pub zero_flags: bool,
}

impl Default for FeatureEncoder {
    fn default() -> Self {
        FeatureEncoder { pair_relation: true, zero_flags: true }
    }
}

impl FeatureEncoder {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn features(&self, a: Value, b: Value) -> Itemset {
        let mut s = Itemset::new();
        if self.pair_relation {
            let rel = match a.cmp(&b) {
                std::cmp::Ordering::Less => "lt",
                std::cmp::Ordering::Equal => "eq",
                std::cmp::Ordering::Greater => "gt",
            };
            s = s.with(REL_KEY, rel);
        }
        if self.zero_flags {
            let (az, bz) = (a.get() == 0, b.get() == 0);
            s = s
                .with(A_ZERO_KEY, &az.to_string())
                .with(B_ZERO_KEY, &bz.to_string())
                .with(BOTH_ZERO_KEY, &(az && bz).to_string());
        }
        s
    }

    pub fn transaction(&self, record: &ExecutionRecord, mr: &str) -> Option<Transaction> {
        let verdict = record.verdict(mr)?;
        let items = self
            .features(record.a, record.b)
            .with(FUNC_KEY, &func_token(&record.function))
            .with(mr, verdict.token());
        Some(Transaction::new(items))
    }
}

/// Function names appear upper-cased in items, e.g. `func=SUB`.
pub fn func_token(function: &str) -> String {
    function.to_uppercase()
}

/// Whether an input pair satisfies every feature item of `condition`.
/// The `func` item is ignored; unknown keys are an error.
pub fn satisfies(condition: &Itemset, a: Value, b: Value) -> Result<bool> {
    let features = FeatureEncoder::all().features(a, b);
    for item in condition.items() {
        if item.key == FUNC_KEY {
            continue;
        }
        match features.get(&item.key) {
            Some(v) => {
                if v != item.value {
                    return Ok(false);
                }
            }
            None => return Err(Error::Config(format!("unknown feature {item} in rule condition"))),
        }
    }
    Ok(true)
}

/// One transaction per record carrying an outcome for `mr`.
pub fn encode(clean: &CleanLog, mr: &str, encoder: &FeatureEncoder) -> Vec<Transaction> {
    clean.records.iter().filter_map(|r| encoder.transaction(r, mr)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningParams {
    pub min_support: Ratio,
    pub min_confidence: Ratio,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams { min_support: Ratio::new(1, 5), min_confidence: Ratio::one() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinedRule {
    pub function: String,
    pub mr: String,
    pub rule: AssociationRule,
}

fn cover(db: &[Transaction], lhs: &Itemset) -> Vec<usize> {
    db.iter().enumerate().filter(|(_, t)| lhs.is_subset(&t.items)).map(|(i, _)| i).collect()
}

fn is_sorted_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.by_ref().any(|y| y == x))
}

/// Rules for the rare verdict of an atypical cell. The support threshold is
/// applied within the transactions carrying that verdict, so a verdict seen
/// in 1% of the data can still yield a rule; reported support and confidence
/// are over the whole cell.
fn rare_verdict_rules(db: &[Transaction], mr: &str, verdict: Verdict, params: &MiningParams) -> Result<Vec<AssociationRule>> {
    let rhs = Itemset::new().with(mr, verdict.token());
    let class_db: Vec<Transaction> = db.iter().filter(|t| rhs.is_subset(&t.items)).cloned().collect();
    if class_db.is_empty() {
        return Ok(Vec::new());
    }
    let n = db.len() as u64;
    let class_support = Ratio::new(class_db.len() as u64, n);
    let frequent = apriori_frequent(&class_db, params.min_support)?;
    let mut rules = Vec::new();
    for (set, count) in frequent.levels.range(2..).flat_map(|(_, v)| v) {
        let lhs = set.without(mr);
        if lhs.len() + 1 != set.len() {
            continue;
        }
        let lhs_count = cover(db, &lhs).len() as u64;
        let confidence = Ratio::new(*count, lhs_count);
        if confidence < params.min_confidence {
            continue;
        }
        rules.push(AssociationRule {
            lhs,
            rhs: rhs.clone(),
            support: Ratio::new(*count, n),
            confidence,
            lift: lift_from(confidence, class_support)?,
        });
    }
    Ok(rules)
}

/// Keeps rules naming the function, then drops every rule whose matching
/// inputs are contained in those of an at-least-as-confident rule with the
/// same consequent (ties go to the shorter, then smaller, antecedent).
fn prune(db: &[Transaction], rules: Vec<AssociationRule>) -> Vec<AssociationRule> {
    let mut rules: Vec<AssociationRule> = rules.into_iter().filter(|r| r.lhs.get(FUNC_KEY).is_some()).collect();
    rules.sort_by(|a, b| (&a.lhs, &a.rhs).cmp(&(&b.lhs, &b.rhs)));
    rules.dedup_by(|a, b| a.lhs == b.lhs && a.rhs == b.rhs);
    let covers: Vec<Vec<usize>> = rules.iter().map(|r| cover(db, &r.lhs)).collect();
    let dominated = |i: usize| {
        (0..rules.len()).any(|j| {
            if i == j || rules[i].rhs != rules[j].rhs || rules[j].confidence < rules[i].confidence {
                return false;
            }
            if !is_sorted_subset(&covers[i], &covers[j]) {
                return false;
            }
            covers[i].len() < covers[j].len()
                || (rules[j].lhs.len(), &rules[j].lhs) < (rules[i].lhs.len(), &rules[i].lhs)
        })
    };
    let keep: Vec<bool> = (0..rules.len()).map(|i| !dominated(i)).collect();
    let mut out: Vec<AssociationRule> = rules.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect();
    sort_rules(&mut out);
    out
}

/// Mines every Mixed cell in its own transaction database, restricted to
/// that function's records, with the cell's verdict as the only consequent.
pub fn mine_all(
    clean: &CleanLog,
    decisions: &[FeedbackDecision],
    encoder: &FeatureEncoder,
    params: &MiningParams,
) -> Result<Vec<MinedRule>> {
    check_threshold(params.min_support)?;
    check_threshold(params.min_confidence)?;
    let mut mined = Vec::new();
    for d in decisions.iter().filter(|d| d.classification == Classification::Mixed) {
        let db: Vec<Transaction> = clean
            .records
            .iter()
            .filter(|r| r.function == d.function)
            .filter_map(|r| encoder.transaction(r, &d.mr))
            .collect();
        if db.is_empty() {
            continue;
        }
        let rhs_keys: BTreeSet<String> = [d.mr.clone()].into();
        let mut rules = derive_rules(&apriori_frequent(&db, params.min_support)?, params.min_confidence, &rhs_keys)?;
        if d.atypical {
            let rare = if 2 * d.violated < d.total { Verdict::Violated } else { Verdict::NotViolated };
            rules.extend(rare_verdict_rules(&db, &d.mr, rare, params)?);
        }
        mined.extend(prune(&db, rules).into_iter().map(|rule| MinedRule { function: d.function.clone(), mr: d.mr.clone(), rule }));
    }
    Ok(mined)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    PositiveTest,
    NegativeTest,
}

impl Polarity {
    pub fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::NotViolated => Polarity::PositiveTest,
            Verdict::Violated => Polarity::NegativeTest,
        }
    }

    pub fn verdict(self) -> Verdict {
        match self {
            Polarity::PositiveTest => Verdict::NotViolated,
            Polarity::NegativeTest => Verdict::Violated,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Polarity::PositiveTest => Polarity::NegativeTest,
            Polarity::NegativeTest => Polarity::PositiveTest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Mined {
        #[serde(with = "crate::ratio::exact")]
        support: Ratio,
        #[serde(with = "crate::ratio::exact")]
        confidence: Ratio,
        #[serde(with = "crate::ratio::exact")]
        lift: Ratio,
    },
    TesterFeedback,
}

impl Provenance {
    fn strength(&self) -> (u8, Ratio, Ratio, Ratio) {
        match *self {
            Provenance::TesterFeedback => (1, Ratio::one(), Ratio::one(), Ratio::one()),
            Provenance::Mined { support, confidence, lift } => (0, confidence, support, lift),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedRule {
    pub function: String,
    pub mr: String,
    /// Feature and function items the inputs must match.
    pub condition: Itemset,
    /// Inputs matching any of these are left out.
    pub exclusions: Vec<Itemset>,
    pub polarity: Polarity,
    pub provenance: Provenance,
    /// Mined below confidence 1; not asserted by default.
    pub advisory: bool,
}

impl RefinedRule {
    pub fn cell(&self) -> String {
        cell_key(&self.function, &self.mr)
    }

    pub fn matches(&self, a: Value, b: Value) -> Result<bool> {
        if !satisfies(&self.condition, a, b)? {
            return Ok(false);
        }
        for ex in &self.exclusions {
            if satisfies(ex, a, b)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `func=SUB & rel=lt unless both_zero=true`.
    pub fn render_condition(&self) -> String {
        let mut s = self.condition.render();
        for ex in &self.exclusions {
            let _ = write!(s, " unless {}", ex.render());
        }
        s
    }

    fn sort_key(&self) -> (&str, &str, Polarity, &Itemset, &Vec<Itemset>) {
        (&self.function, &self.mr, self.polarity, &self.condition, &self.exclusions)
    }
}

/// Merges tester decisions with mined rules. Whole-cell matches become
/// unconditional rules; a Mixed cell the tester includes becomes a rule
/// guarded by the opposite-verdict conditions mined for it.
pub fn finalize_rules(mined: &[MinedRule], decisions: &[FeedbackDecision]) -> Result<Vec<RefinedRule>> {
    if let Some(cell) = blocking_fault(decisions) {
        return Err(Error::Blocked(cell));
    }
    let excluded: BTreeSet<String> =
        decisions.iter().filter(|d| d.include_as == Some(IncludeAs::Exclude)).map(FeedbackDecision::key).collect();
    let known: BTreeSet<String> = decisions.iter().map(FeedbackDecision::key).collect();

    let mut rules = Vec::new();
    for m in mined {
        let key = cell_key(&m.function, &m.mr);
        if excluded.contains(&key) {
            continue;
        }
        if !known.contains(&key) {
            return Err(Error::UnknownCell(key));
        }
        let verdict = m.rule.rhs.get(&m.mr).and_then(Verdict::from_token).ok_or_else(|| {
            Error::Config(format!("mined rule for {key} has consequent {}", m.rule.rhs))
        })?;
        rules.push(RefinedRule {
            function: m.function.clone(),
            mr: m.mr.clone(),
            condition: m.rule.lhs.clone(),
            exclusions: Vec::new(),
            polarity: Polarity::from_verdict(verdict),
            provenance: Provenance::Mined { support: m.rule.support, confidence: m.rule.confidence, lift: m.rule.lift },
            advisory: m.rule.confidence < Ratio::one(),
        });
    }

    for d in decisions {
        let polarity = match d.include_as {
            Some(IncludeAs::PositiveTest) => Polarity::PositiveTest,
            Some(IncludeAs::NegativeTest) => Polarity::NegativeTest,
            Some(IncludeAs::Exclude) | None => continue,
        };
        let mut exclusions: Vec<Itemset> = if d.classification == Classification::Mixed {
            rules
                .iter()
                .filter(|r| r.function == d.function && r.mr == d.mr && r.polarity == polarity.opposite() && !r.advisory)
                .map(|r| r.condition.without(FUNC_KEY))
                .collect()
        } else {
            Vec::new()
        };
        exclusions.sort();
        exclusions.dedup();
        rules.push(RefinedRule {
            function: d.function.clone(),
            mr: d.mr.clone(),
            condition: Itemset::new().with(FUNC_KEY, &func_token(&d.function)),
            exclusions,
            polarity,
            provenance: Provenance::TesterFeedback,
            advisory: false,
        });
    }

    rules.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| b.provenance.strength().cmp(&a.provenance.strength())));
    rules.dedup_by(|later, kept| later.sort_key() == kept.sort_key());
    Ok(rules)
}

pub const RULES_HEADER: &str = "# lhs | rhs | support | confidence | lift | provenance";

/// Line-oriented rule file: a campaign comment, a column comment, then one
/// rule per line with metrics rounded half-to-even to 3 decimals.
pub fn render_rules(rules: &[RefinedRule], campaign: &str) -> String {
    let mut out = format!("# campaign {campaign}\n{RULES_HEADER}\n");
    for r in rules {
        let rhs = Itemset::new().with(&r.mr, r.polarity.verdict().token());
        let (metrics, provenance) = match &r.provenance {
            Provenance::Mined { support, confidence, lift } => (
                format!("{} | {} | {}", render(*support, 3), render(*confidence, 3), render(*lift, 3)),
                if r.advisory { "mined-advisory" } else { "mined" },
            ),
            Provenance::TesterFeedback => ("- | - | -".to_string(), "feedback"),
        };
        let _ = writeln!(out, "{} | {} | {} | {}", r.render_condition(), rhs.render(), metrics, provenance);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RulesFile {
    pub campaign: Option<String>,
    pub rules: Vec<RefinedRule>,
}

/// Parses a rule file. `functions` resolves `func=ADD` back to `add`.
pub fn parse_rules(text: &str, functions: &[String], path: &Path) -> Result<RulesFile> {
    let by_token: HashMap<String, &String> = functions.iter().map(|f| (func_token(f), f)).collect();
    let mut campaign = None;
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |m: &str| Error::format(path, line_no, m.to_string());
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix("# campaign ") {
            campaign = Some(c.trim().to_string());
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('|').map(str::trim).collect();
        let [lhs, rhs, sup, conf, lift, provenance] = cols[..] else {
            return Err(err("expected 6 columns"));
        };
        let mut parts = lhs.split(" unless ");
        let condition = Itemset::parse(parts.next().unwrap_or("")).ok_or_else(|| err("bad condition"))?;
        let exclusions = parts.map(|p| Itemset::parse(p).ok_or_else(|| err("bad exclusion"))).collect::<Result<Vec<_>>>()?;
        let token = condition.get(FUNC_KEY).ok_or_else(|| err("condition lacks func item"))?;
        let function = by_token.get(token).ok_or_else(|| err(&format!("unknown function {token}")))?.to_string();
        let rhs = Itemset::parse(rhs).filter(|r| r.len() == 1).ok_or_else(|| err("bad consequent"))?;
        let Item { key: mr, value } = rhs.items().next().expect("one item");
        let verdict = Verdict::from_token(&value).ok_or_else(|| err("bad verdict"))?;
        let (provenance, advisory) = match provenance {
            "feedback" => (Provenance::TesterFeedback, false),
            "mined" | "mined-advisory" => {
                let metric = |s: &str| parse_ratio(s).ok_or_else(|| err("bad metric"));
                (
                    Provenance::Mined { support: metric(sup)?, confidence: metric(conf)?, lift: metric(lift)? },
                    provenance == "mined-advisory",
                )
            }
            _ => return Err(err("provenance must be mined, mined-advisory or feedback")),
        };
        rules.push(RefinedRule { function, mr, condition, exclusions, polarity: Polarity::from_verdict(verdict), provenance, advisory });
    }
    Ok(RulesFile { campaign, rules })
}
