//! Metamorphic relations: input transformations, expected output relations
//! and the checker predicate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// An operand or output of the system under test. Integer valued, so the
/// checker never has to decide on a tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Value(pub i64);

impl Value {
    pub fn get(self) -> i64 {
        self.0
    }

    pub fn checked_add(self, rhs: Value) -> Option<Value> {
        self.0.checked_add(rhs.0).map(Value)
    }

    pub fn checked_sub(self, rhs: Value) -> Option<Value> {
        self.0.checked_sub(rhs.0).map(Value)
    }

    pub fn checked_mul(self, rhs: Value) -> Option<Value> {
        self.0.checked_mul(rhs.0).map(Value)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Value {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(Value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k")]
pub enum Transformation {
    Permute,
    MultiplyEachByK(Value),
    AddKToEach(Value),
    SubtractKFromEach(Value),
}

impl Transformation {
    pub fn constant(&self) -> Option<Value> {
        match *self {
            Transformation::Permute => None,
            Transformation::MultiplyEachByK(k)
            | Transformation::AddKToEach(k)
            | Transformation::SubtractKFromEach(k) => Some(k),
        }
    }

    fn validate(&self, mr: &str) -> Result<()> {
        let bad = |k: Value, reason| Error::InvalidConstant { mr: mr.to_string(), k: k.0, reason };
        match *self {
            Transformation::Permute => Ok(()),
            Transformation::MultiplyEachByK(k) if k.0 <= 1 => Err(bad(k, "multiplier must be > 1")),
            Transformation::AddKToEach(k) | Transformation::SubtractKFromEach(k) if k.0 <= 0 => {
                Err(bad(k, "constant must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Follow-up inputs as a pseudocode pair, e.g. `(a + 5, b + 5)`.
    pub fn describe(&self) -> String {
        match *self {
            Transformation::Permute => "(b, a)".to_string(),
            Transformation::MultiplyEachByK(k) => format!("(a * {k}, b * {k})"),
            Transformation::AddKToEach(k) => format!("(a + {k}, b + {k})"),
            Transformation::SubtractKFromEach(k) => format!("(a - {k}, b - {k})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputRelation {
    RemainEqual,
    Increase,
}

impl OutputRelation {
    pub fn operator(self) -> &'static str {
        match self {
            OutputRelation::RemainEqual => "==",
            OutputRelation::Increase => "<",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    NotViolated,
    Violated,
}

impl Verdict {
    /// Short code used in log files.
    pub fn code(self) -> &'static str {
        match self {
            Verdict::NotViolated => "NV",
            Verdict::Violated => "V",
        }
    }

    pub fn from_code(code: &str) -> Option<Verdict> {
        match code {
            "NV" => Some(Verdict::NotViolated),
            "V" => Some(Verdict::Violated),
            _ => None,
        }
    }

    /// Token used for the verdict item in mining transactions.
    pub fn token(self) -> &'static str {
        match self {
            Verdict::NotViolated => "NotViolated",
            Verdict::Violated => "Violated",
        }
    }

    pub fn from_token(token: &str) -> Option<Verdict> {
        match token {
            "NotViolated" => Some(Verdict::NotViolated),
            "Violated" => Some(Verdict::Violated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrSpec {
    pub id: String,
    pub transformation: Transformation,
    pub expected: OutputRelation,
    #[serde(default)]
    pub description: String,
}

/// Applies `t` to the source pair. `None` on overflow.
pub fn transform_inputs(t: Transformation, a: Value, b: Value) -> Option<(Value, Value)> {
    match t {
        Transformation::Permute => Some((b, a)),
        Transformation::MultiplyEachByK(k) => Some((a.checked_mul(k)?, b.checked_mul(k)?)),
        Transformation::AddKToEach(k) => Some((a.checked_add(k)?, b.checked_add(k)?)),
        Transformation::SubtractKFromEach(k) => Some((a.checked_sub(k)?, b.checked_sub(k)?)),
    }
}

/// Like [`transform_inputs`], reporting overflow against the relation and input.
pub fn transform_for(mr: &MrSpec, id: u64, a: Value, b: Value) -> Result<(Value, Value)> {
    transform_inputs(mr.transformation, a, b).ok_or_else(|| Error::Overflow { mr: mr.id.clone(), id })
}

pub fn check_mr(expected: OutputRelation, source_out: Value, followup_out: Value) -> Verdict {
    let holds = match expected {
        OutputRelation::RemainEqual => source_out == followup_out,
        OutputRelation::Increase => source_out < followup_out,
    };
    if holds {
        Verdict::NotViolated
    } else {
        Verdict::Violated
    }
}

/// The four arithmetic relations of the calculator example, sharing one `k`.
pub fn default_mr_set(k: Value) -> Result<Vec<MrSpec>> {
    let set = vec![
        MrSpec {
            id: "MR1".into(),
            transformation: Transformation::Permute,
            expected: OutputRelation::RemainEqual,
            description: "Permute the inputs".into(),
        },
        MrSpec {
            id: "MR2".into(),
            transformation: Transformation::MultiplyEachByK(k),
            expected: OutputRelation::Increase,
            description: "Multiply each operand by a constant k > 1".into(),
        },
        MrSpec {
            id: "MR3".into(),
            transformation: Transformation::AddKToEach(k),
            expected: OutputRelation::RemainEqual,
            description: "Add a positive constant k to each operand".into(),
        },
        MrSpec {
            id: "MR4".into(),
            transformation: Transformation::SubtractKFromEach(k),
            expected: OutputRelation::RemainEqual,
            description: "Subtract a positive constant k from each operand".into(),
        },
    ];
    validate_mr_set(&set)?;
    Ok(set)
}

pub fn validate_mr_set(set: &[MrSpec]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptyMrSet);
    }
    let mut seen = HashSet::new();
    for mr in set {
        if mr.id.is_empty() || mr.id.contains([',', '|', '=', '.', ' ']) {
            return Err(Error::Config(format!("invalid relation id {:?}", mr.id)));
        }
        if !seen.insert(mr.id.as_str()) {
            return Err(Error::DuplicateMrId(mr.id.clone()));
        }
        mr.transformation.validate(&mr.id)?;
    }
    Ok(())
}

/// Stable digest of a relation set, recorded in the campaign manifest.
pub fn mr_set_hash(set: &[MrSpec]) -> String {
    let json = serde_json::to_vec(set).expect("relation set serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformationKind {
    Permute,
    MultiplyEachByK,
    AddKToEach,
    SubtractKFromEach,
}

/// One entry of a relation set document. `k` falls back to the campaign
/// constant when omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrEntry {
    pub id: String,
    pub transformation: TransformationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Value>,
    pub expected: OutputRelation,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrSetDocument {
    pub relations: Vec<MrEntry>,
}

impl MrSetDocument {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self, campaign_k: Value) -> Result<Vec<MrSpec>> {
        let set: Vec<MrSpec> = self
            .relations
            .iter()
            .map(|e| {
                let k = e.k.unwrap_or(campaign_k);
                let transformation = match e.transformation {
                    TransformationKind::Permute => Transformation::Permute,
                    TransformationKind::MultiplyEachByK => Transformation::MultiplyEachByK(k),
                    TransformationKind::AddKToEach => Transformation::AddKToEach(k),
                    TransformationKind::SubtractKFromEach => Transformation::SubtractKFromEach(k),
                };
                MrSpec {
                    id: e.id.clone(),
                    transformation,
                    expected: e.expected,
                    description: e.description.clone(),
                }
            })
            .collect();
        validate_mr_set(&set)?;
        Ok(set)
    }
}
