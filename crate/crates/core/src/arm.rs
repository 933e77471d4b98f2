//! Apriori frequent itemsets and single-consequent association rules, with
//! exact rational support, confidence and lift.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratio::{check_threshold, render, Ratio};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Item {
    pub key: String,
    pub value: String,
}

impl Item {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Item { key: key.into(), value: value.into() }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.key, self.value)
    }
}

/// A set of items holding at most one value per key.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Itemset(BTreeMap<String, String>);

impl Itemset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an itemset, rejecting two values for the same key.
    pub fn try_from_items<I: IntoIterator<Item = Item>>(items: I) -> Option<Self> {
        let mut set = Itemset::new();
        for item in items {
            if !set.insert(item) {
                return None;
            }
        }
        Some(set)
    }

    /// Inserts `item`; false when its key already holds a different value.
    pub fn insert(&mut self, item: Item) -> bool {
        match self.0.get(&item.key) {
            Some(v) => *v == item.value,
            None => {
                self.0.insert(item.key, item.value);
                true
            }
        }
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        assert!(self.insert(Item::new(key, value)), "key {key} already set");
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn contains_item(&self, item: &Item) -> bool {
        self.get(&item.key) == Some(item.value.as_str())
    }

    pub fn is_subset(&self, other: &Itemset) -> bool {
        self.0.iter().all(|(k, v)| other.0.get(k) == Some(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = Item> + '_ {
        self.0.iter().map(|(k, v)| Item::new(k.clone(), v.clone()))
    }

    pub fn without(&self, key: &str) -> Itemset {
        let mut map = self.0.clone();
        map.remove(key);
        Itemset(map)
    }

    pub fn union(&self, other: &Itemset) -> Option<Itemset> {
        Itemset::try_from_items(self.items().chain(other.items()))
    }

    pub fn is_disjoint(&self, other: &Itemset) -> bool {
        !self.items().any(|i| other.contains_item(&i))
    }

    /// `key=value & key=value`, keys in order; the empty set renders as `{}`.
    pub fn render(&self) -> String {
        if self.is_empty() {
            return "{}".to_string();
        }
        self.items().map(|i| i.to_string()).collect::<Vec<_>>().join(" & ")
    }

    /// Inverse of [`Itemset::render`].
    pub fn parse(text: &str) -> Option<Itemset> {
        let text = text.trim();
        if text == "{}" {
            return Some(Itemset::new());
        }
        Itemset::try_from_items(
            text.split('&')
                .map(|part| {
                    let (k, v) = part.trim().split_once('=')?;
                    let (k, v) = (k.trim(), v.trim());
                    (!k.is_empty() && !v.is_empty()).then(|| Item::new(k, v))
                })
                .collect::<Option<Vec<_>>>()?,
        )
    }
}

impl fmt::Display for Itemset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub items: Itemset,
}

impl Transaction {
    pub fn new(items: Itemset) -> Self {
        Transaction { items }
    }
}

fn count(db: &[Transaction], s: &Itemset) -> u64 {
    db.iter().filter(|t| s.is_subset(&t.items)).count() as u64
}

pub fn support(db: &[Transaction], s: &Itemset) -> Result<Ratio> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    Ok(Ratio::new(count(db, s), db.len() as u64))
}

pub fn confidence(db: &[Transaction], x: &Itemset, y: &Itemset) -> Result<Ratio> {
    let cx = count(db, x);
    if cx == 0 {
        return Err(Error::UndefinedConfidence);
    }
    let xy = x.union(y).map(|s| count(db, &s)).unwrap_or(0);
    Ok(Ratio::new(xy, cx))
}

pub fn lift(db: &[Transaction], x: &Itemset, y: &Itemset) -> Result<Ratio> {
    let sy = support(db, y)?;
    let conf = confidence(db, x, y)?;
    lift_from(conf, sy)
}

/// `confidence / support(consequent)`.
pub fn lift_from(confidence: Ratio, consequent_support: Ratio) -> Result<Ratio> {
    if consequent_support.is_zero() {
        return Err(Error::UndefinedLift);
    }
    Ok(confidence / consequent_support)
}

/// All itemsets meeting the support threshold, by size, with their counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequentItemsets {
    pub transactions: u64,
    pub levels: BTreeMap<usize, Vec<(Itemset, u64)>>,
}

impl FrequentItemsets {
    pub fn count_of(&self, s: &Itemset) -> Option<u64> {
        self.levels.get(&s.len())?.iter().find(|(i, _)| i == s).map(|(_, c)| *c)
    }

    pub fn support_of(&self, s: &Itemset) -> Option<Ratio> {
        self.count_of(s).map(|c| Ratio::new(c, self.transactions))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Itemset, Ratio)> {
        let n = self.transactions;
        self.levels.values().flatten().map(move |(s, c)| (s, Ratio::new(*c, n)))
    }

    pub fn len(&self) -> usize {
        self.levels.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn is_sorted_subset(small: &[u32], big: &[u32]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.by_ref().any(|y| y == x))
}

/// Level-wise Apriori: size-(n+1) candidates are joined from size-n frequent
/// sets sharing an (n-1)-prefix, pruned by downward closure, then counted.
pub fn apriori_frequent(db: &[Transaction], min_support: Ratio) -> Result<FrequentItemsets> {
    check_threshold(min_support)?;
    let n = db.len() as u64;
    let mut levels = BTreeMap::new();
    if n == 0 {
        return Ok(FrequentItemsets { transactions: 0, levels });
    }

    let vocabulary: Vec<Item> =
        db.iter().flat_map(|t| t.items.items()).collect::<BTreeSet<_>>().into_iter().collect();
    let index: HashMap<&Item, u32> = vocabulary.iter().enumerate().map(|(i, it)| (it, i as u32)).collect();
    let encoded: Vec<Vec<u32>> = db
        .iter()
        .map(|t| {
            let mut v: Vec<u32> = t.items.items().map(|i| index[&i]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    let frequent = |c: u64| Ratio::new(c, n) >= min_support;

    let mut singles = vec![0u64; vocabulary.len()];
    for t in &encoded {
        for &i in t {
            singles[i as usize] += 1;
        }
    }
    let mut current: Vec<(Vec<u32>, u64)> = singles
        .iter()
        .enumerate()
        .filter(|(_, &c)| frequent(c))
        .map(|(i, &c)| (vec![i as u32], c))
        .collect();

    let decode = |ids: &[u32]| Itemset::try_from_items(ids.iter().map(|&i| vocabulary[i as usize].clone())).expect("distinct keys");
    let mut size = 1;
    while !current.is_empty() {
        levels.insert(size, current.iter().map(|(ids, c)| (decode(ids), *c)).collect::<Vec<_>>());

        let known: HashSet<&[u32]> = current.iter().map(|(ids, _)| ids.as_slice()).collect();
        let mut candidates = Vec::new();
        for (i, (left, _)) in current.iter().enumerate() {
            for (right, _) in &current[i + 1..] {
                if left[..size - 1] != right[..size - 1] {
                    break;
                }
                let (x, y) = (left[size - 1], right[size - 1]);
                if vocabulary[x as usize].key == vocabulary[y as usize].key {
                    continue;
                }
                let mut cand = left.clone();
                cand.push(y);
                let closed = (0..cand.len()).all(|drop| {
                    let sub: Vec<u32> = cand.iter().enumerate().filter(|(j, _)| *j != drop).map(|(_, &v)| v).collect();
                    known.contains(sub.as_slice())
                });
                if closed {
                    candidates.push(cand);
                }
            }
        }
        current = candidates
            .into_par_iter()
            .map(|cand| {
                let c = encoded.iter().filter(|t| is_sorted_subset(&cand, t)).count() as u64;
                (cand, c)
            })
            .filter(|(_, c)| frequent(*c))
            .collect();
        size += 1;
    }
    Ok(FrequentItemsets { transactions: n, levels })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub lhs: Itemset,
    pub rhs: Itemset,
    #[serde(with = "crate::ratio::exact")]
    pub support: Ratio,
    #[serde(with = "crate::ratio::exact")]
    pub confidence: Ratio,
    #[serde(with = "crate::ratio::exact")]
    pub lift: Ratio,
}

impl AssociationRule {
    /// `lhs | rhs | support | confidence | lift`, metrics to 3 decimals.
    pub fn render_line(&self) -> String {
        format!(
            "{} | {} | {} | {} | {}",
            self.lhs.render(),
            self.rhs.render(),
            render(self.support, 3),
            render(self.confidence, 3),
            render(self.lift, 3)
        )
    }
}

/// Canonical rule order: support descending, then antecedent, then consequent.
pub fn sort_rules(rules: &mut [AssociationRule]) {
    rules.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.lhs.cmp(&b.lhs)).then_with(|| a.rhs.cmp(&b.rhs)));
}

/// Every rule `X -> {i}` with `X ∪ {i}` frequent, `X` non-empty, the key of
/// `i` in `rhs_keys`, and confidence at least `min_confidence`.
pub fn derive_rules(frequent: &FrequentItemsets, min_confidence: Ratio, rhs_keys: &BTreeSet<String>) -> Result<Vec<AssociationRule>> {
    check_threshold(min_confidence)?;
    let n = frequent.transactions;
    let mut rules = Vec::new();
    for (set, count) in frequent.levels.range(2..).flat_map(|(_, v)| v) {
        for rhs_item in set.items().filter(|i| rhs_keys.contains(&i.key)) {
            let lhs = set.without(&rhs_item.key);
            let rhs = Itemset::new().with(&rhs_item.key, &rhs_item.value);
            let lhs_count = frequent.count_of(&lhs).expect("subsets of frequent sets are frequent");
            let rhs_count = frequent.count_of(&rhs).expect("subsets of frequent sets are frequent");
            let confidence = Ratio::new(*count, lhs_count);
            if confidence < min_confidence {
                continue;
            }
            rules.push(AssociationRule {
                lhs,
                rhs,
                support: Ratio::new(*count, n),
                confidence,
                lift: lift_from(confidence, Ratio::new(rhs_count, n))?,
            });
        }
    }
    sort_rules(&mut rules);
    Ok(rules)
}
