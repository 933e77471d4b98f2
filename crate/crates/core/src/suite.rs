//! Regression suite generation from refined rules.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{execute_sut, SutAdapter};
use crate::mr::{check_mr, transform_inputs, MrSpec, OutputRelation, Transformation, Value, Verdict};
use crate::refine::{Polarity, Provenance, RefinedRule};
use crate::tdg::TestDatum;

pub const DEFAULT_CASES_PER_RULE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPair {
    pub a: Value,
    pub b: Value,
}

/// What a test asserts: the relation's predicate on source and follow-up
/// outputs, expected to hold for positive tests and fail for negative ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCheck {
    pub transformation: Transformation,
    pub relation: OutputRelation,
    pub holds: bool,
    pub assertion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub function: String,
    pub mr: String,
    pub polarity: Polarity,
    pub input_condition: String,
    pub rule: RefinedRule,
    pub concrete_inputs: Vec<InputPair>,
    /// Inputs were synthesised because no corpus input matched.
    pub synthetic: bool,
    pub expected_check: ExpectedCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignRef {
    pub manifest_hash: String,
    pub seed: u64,
    pub k: Option<Value>,
    pub min_support: Option<String>,
    pub min_confidence: Option<String>,
    pub selection_policy: String,
    pub cases_per_rule: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSuiteManifest {
    pub suite_id: String,
    pub campaign: CampaignRef,
    pub tests: Vec<TestCase>,
}

impl TestSuiteManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("suite serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn assertion(function: &str, t: Transformation, rel: OutputRelation, holds: bool) -> String {
    let followup = t.describe();
    let inner = format!("{function}(a, b) {} {function}{followup}", rel.operator());
    if holds {
        inner
    } else {
        format!("!({inner})")
    }
}

fn slug(rule: &RefinedRule) -> String {
    let mut parts = vec![rule.function.clone(), rule.mr.clone(), match rule.polarity {
        Polarity::PositiveTest => "positive".to_string(),
        Polarity::NegativeTest => "negative".to_string(),
    }];
    for item in rule.condition.items().filter(|i| i.key != crate::refine::FUNC_KEY) {
        parts.push(format!("{}_{}", item.key, item.value));
    }
    for ex in &rule.exclusions {
        parts.push("unless".into());
        parts.extend(ex.items().map(|i| format!("{}_{}", i.key, i.value)));
    }
    parts.join("_")
}

/// Candidate boundary inputs inside `[lo, hi]`: the ends, the midpoint,
/// zero and their neighbours.
fn synthetic_candidates(lo: i64, hi: i64) -> Vec<InputPair> {
    let mid = lo + (hi - lo) / 2;
    let mut values: Vec<i64> = [lo, hi, mid, 0, mid.saturating_sub(1), mid.saturating_add(1), lo.saturating_add(1), hi.saturating_sub(1), 1, -1]
        .into_iter()
        .filter(|v| (lo..=hi).contains(v))
        .collect();
    values.sort_unstable();
    values.dedup();
    values.sort_by_key(|v| ((*v as i128) - mid as i128).abs());
    let mut pairs = Vec::new();
    for &a in &values {
        for &b in &values {
            pairs.push(InputPair { a: Value(a), b: Value(b) });
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSuite {
    pub manifest: TestSuiteManifest,
    pub warnings: Vec<String>,
}

/// One test per non-advisory rule (all rules when `include_advisory`),
/// backed by up to `per_rule_cases` corpus inputs satisfying its condition.
pub fn generate_suite(
    rules: &[RefinedRule],
    mrs: &[MrSpec],
    corpus: &[TestDatum],
    per_rule_cases: usize,
    include_advisory: bool,
    campaign: CampaignRef,
) -> Result<GeneratedSuite> {
    if rules.is_empty() {
        return Err(Error::Config("no rules to generate a suite from".into()));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lo = corpus.iter().map(|d| d.a.min(d.b)).min().expect("non-empty").get();
    let hi = corpus.iter().map(|d| d.a.max(d.b)).max().expect("non-empty").get();

    let mut warnings = Vec::new();
    let mut names = HashSet::new();
    let mut tests = Vec::new();
    for rule in rules.iter().filter(|r| include_advisory || !r.advisory) {
        let mr = mrs
            .iter()
            .find(|m| m.id == rule.mr)
            .ok_or_else(|| Error::Config(format!("rule references unknown relation {}", rule.mr)))?;

        let mut seen = HashSet::new();
        let mut matching = Vec::new();
        for d in corpus {
            if rule.matches(d.a, d.b)? && seen.insert((d.a, d.b)) {
                matching.push(InputPair { a: d.a, b: d.b });
            }
        }
        let synthetic = matching.is_empty();
        if synthetic {
            let candidates: Vec<InputPair> = synthetic_candidates(lo, hi)
                .into_iter()
                .filter(|p| rule.matches(p.a, p.b).unwrap_or(false))
                .collect();
            if candidates.is_empty() {
                return Err(Error::Unsatisfiable(rule.render_condition()));
            }
            warnings.push(format!(
                "rule {} for {} matches no corpus input; using synthetic boundary inputs",
                rule.render_condition(),
                rule.cell()
            ));
            matching = candidates;
        }
        matching.truncate(per_rule_cases);

        let holds = rule.polarity == Polarity::PositiveTest;
        let mut name = slug(rule);
        let mut n = 2;
        while !names.insert(name.clone()) {
            name = format!("{}_{n}", slug(rule));
            n += 1;
        }
        tests.push(TestCase {
            name,
            function: rule.function.clone(),
            mr: rule.mr.clone(),
            polarity: rule.polarity,
            input_condition: rule.render_condition(),
            rule: rule.clone(),
            concrete_inputs: matching,
            synthetic,
            expected_check: ExpectedCheck {
                transformation: mr.transformation,
                relation: mr.expected,
                holds,
                assertion: assertion(&rule.function, mr.transformation, mr.expected, holds),
            },
        });
    }

    let digest = Sha256::digest(serde_json::to_vec(&(&campaign, &tests)).expect("suite serializes"));
    let suite_id = format!("suite-{}", hex::encode(&digest[..6]));
    Ok(GeneratedSuite { manifest: TestSuiteManifest { suite_id, campaign, tests }, warnings })
}

/// Runs one test input against `adapter`; true when the outcome matches the
/// test's expectation.
pub fn check_case(test: &TestCase, adapter: &SutAdapter, input: InputPair) -> Result<bool> {
    let check = &test.expected_check;
    let source = execute_sut(adapter, &test.function, 0, input.a, input.b)?;
    let (ta, tb) = transform_inputs(check.transformation, input.a, input.b)
        .ok_or_else(|| Error::Overflow { mr: test.mr.clone(), id: 0 })?;
    let followup = execute_sut(adapter, &test.function, 0, ta, tb)?;
    let holds = check_mr(check.relation, source, followup) == Verdict::NotViolated;
    Ok(holds == check.holds)
}

/// Plain-text assertion pseudocode for the whole suite.
pub fn render_text(suite: &TestSuiteManifest) -> String {
    let mut out = format!("# {} (campaign {})\n", suite.suite_id, suite.campaign.manifest_hash);
    for t in &suite.tests {
        let origin = match &t.rule.provenance {
            Provenance::TesterFeedback => "tester feedback".to_string(),
            Provenance::Mined { support, confidence, lift } => format!(
                "mined, support {}, confidence {}, lift {}",
                crate::ratio::render(*support, 3),
                crate::ratio::render(*confidence, 3),
                crate::ratio::render(*lift, 3)
            ),
        };
        let _ = writeln!(out, "\ntest {}:  # given {} ({origin})", t.name, t.input_condition);
        let inputs: Vec<String> = t.concrete_inputs.iter().map(|p| format!("({}, {})", p.a, p.b)).collect();
        let _ = writeln!(out, "    for (a, b) in [{}]:", inputs.join(", "));
        let _ = writeln!(out, "        assert {}", t.expected_check.assertion);
    }
    out
}
