//! Executes source and follow-up inputs against the system under test and
//! records one verdict per relation.

use std::io::{Read, Write};
use std::path::Path;
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mr::{check_mr, transform_for, MrSpec, Value, Verdict};
use crate::tdg::TestDatum;

pub const CALCULATOR_FUNCTIONS: [&str; 3] = ["add", "sub", "mul"];

const PARTIAL_MARKER: &str = "# PARTIAL:";

/// Where outputs come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SutAdapter {
    /// `add`, `sub` and `mul` on two integers.
    BuiltinCalculator,
    /// One process per execution: `program [args..] <function> <a> <b>`,
    /// one decimal number on stdout, exit status 0.
    ExternalCommand { template: String, program: String, args: Vec<String>, functions: Vec<String> },
}

impl SutAdapter {
    pub fn external(template: &str, functions: Vec<String>) -> Result<Self> {
        let mut words = template.split_whitespace().map(str::to_string);
        let program = words.next().ok_or_else(|| Error::Config("empty command template".into()))?;
        if functions.is_empty() {
            return Err(Error::Config("external adapter needs at least one function".into()));
        }
        Ok(SutAdapter::ExternalCommand { template: template.to_string(), program, args: words.collect(), functions })
    }

    /// Parses `builtin:calculator` or `cmd:<template>`.
    pub fn parse(descriptor: &str, functions: Option<Vec<String>>) -> Result<Self> {
        if descriptor == "builtin:calculator" {
            return Ok(SutAdapter::BuiltinCalculator);
        }
        if let Some(template) = descriptor.strip_prefix("cmd:") {
            let functions = functions
                .unwrap_or_else(|| CALCULATOR_FUNCTIONS.iter().map(|s| s.to_string()).collect());
            return Self::external(template, functions);
        }
        Err(Error::Config(format!("unknown adapter {descriptor:?}; use builtin:calculator or cmd:<template>")))
    }

    pub fn descriptor(&self) -> String {
        match self {
            SutAdapter::BuiltinCalculator => "builtin:calculator".to_string(),
            SutAdapter::ExternalCommand { template, .. } => format!("cmd:{template}"),
        }
    }

    pub fn functions(&self) -> Vec<String> {
        match self {
            SutAdapter::BuiltinCalculator => CALCULATOR_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            SutAdapter::ExternalCommand { functions, .. } => functions.clone(),
        }
    }
}

pub fn execute_sut(adapter: &SutAdapter, function: &str, id: u64, a: Value, b: Value) -> Result<Value> {
    let unknown = || Error::UnknownFunction { function: function.to_string(), id };
    match adapter {
        SutAdapter::BuiltinCalculator => {
            let out = match function {
                "add" => a.checked_add(b),
                "sub" => a.checked_sub(b),
                "mul" => a.checked_mul(b),
                _ => return Err(unknown()),
            };
            out.ok_or_else(|| Error::SutOverflow { function: function.to_string(), id })
        }
        SutAdapter::ExternalCommand { program, args, functions, .. } => {
            if !functions.iter().any(|f| f == function) {
                return Err(unknown());
            }
            let output = Command::new(program)
                .args(args)
                .arg(function)
                .arg(a.to_string())
                .arg(b.to_string())
                .output()
                .map_err(|source| Error::SutSpawn { function: function.to_string(), id, source })?;
            if !output.status.success() {
                return Err(Error::SutExit {
                    function: function.to_string(),
                    id,
                    status: output.status.to_string(),
                    stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
                });
            }
            let stdout = String::from_utf8_lossy(&output.stdout);
            stdout.trim().parse::<Value>().map_err(|_| Error::SutOutput {
                function: function.to_string(),
                id,
                output: stdout.into_owned(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrOutcome {
    pub mr: String,
    pub followup_out: Value,
    pub verdict: Verdict,
}

/// One log row: a source execution and its follow-ups, one per relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub id: u64,
    pub a: Value,
    pub b: Value,
    pub function: String,
    pub source_out: Value,
    pub outcomes: Vec<MrOutcome>,
}

impl ExecutionRecord {
    pub fn outcome(&self, mr: &str) -> Option<&MrOutcome> {
        self.outcomes.iter().find(|o| o.mr == mr)
    }

    pub fn verdict(&self, mr: &str) -> Option<Verdict> {
        self.outcome(mr).map(|o| o.verdict)
    }

    /// Whether every relation has an outcome and every stored verdict
    /// follows from the stored outputs.
    pub fn rederives(&self, mrs: &[MrSpec]) -> bool {
        self.outcomes.len() == mrs.len()
            && mrs.iter().all(|m| {
                self.outcome(&m.id)
                    .is_some_and(|o| o.verdict == check_mr(m.expected, self.source_out, o.followup_out))
            })
    }
}

fn execute_one(datum: &TestDatum, function: &str, mrs: &[MrSpec], adapter: &SutAdapter) -> Result<ExecutionRecord> {
    let source_out = execute_sut(adapter, function, datum.id, datum.a, datum.b)?;
    let outcomes = mrs
        .iter()
        .map(|mr| {
            let (ta, tb) = transform_for(mr, datum.id, datum.a, datum.b)?;
            let followup_out = execute_sut(adapter, function, datum.id, ta, tb)?;
            Ok(MrOutcome { mr: mr.id.clone(), followup_out, verdict: check_mr(mr.expected, source_out, followup_out) })
        })
        .collect::<Result<_>>()?;
    Ok(ExecutionRecord { id: datum.id, a: datum.a, b: datum.b, function: function.to_string(), source_out, outcomes })
}

/// Runs every function on every datum. `jobs == 0` uses one worker per
/// logical CPU; the resulting log is ordered by (id, function position)
/// whatever the worker count.
pub fn run_campaign(corpus: &[TestDatum], mrs: &[MrSpec], adapter: &SutAdapter, jobs: usize) -> Result<Vec<ExecutionRecord>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    crate::mr::validate_mr_set(mrs)?;
    let functions = adapter.functions();
    let work: Vec<(&TestDatum, &str)> =
        corpus.iter().flat_map(|d| functions.iter().map(move |f| (d, f.as_str()))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<ExecutionRecord>> =
        pool.install(|| work.par_iter().map(|(d, f)| execute_one(d, f, mrs, adapter)).collect());

    let mut records = Vec::with_capacity(results.len());
    for result in results {
        match result {
            Ok(r) => records.push(r),
            Err(source) => return Err(Error::CampaignAborted { partial: records, source: Box::new(source) }),
        }
    }
    Ok(records)
}

pub fn log_header(mr_ids: &[String]) -> Vec<String> {
    let mut header: Vec<String> = ["id", "a", "b", "function", "source_out"].iter().map(|s| s.to_string()).collect();
    for mr in mr_ids {
        header.push(format!("{mr}_followup_out"));
        header.push(format!("{mr}_verdict"));
    }
    header
}

/// Writes the log. A `partial` reason appends a marker line so a truncated
/// campaign is never mistaken for a complete one.
pub fn write_log<W: Write>(out: W, mr_ids: &[String], records: &[ExecutionRecord], partial: Option<&str>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(log_header(mr_ids))?;
    for r in records {
        let mut row = vec![r.id.to_string(), r.a.to_string(), r.b.to_string(), r.function.clone(), r.source_out.to_string()];
        for mr in mr_ids {
            match r.outcome(mr) {
                Some(o) => {
                    row.push(o.followup_out.to_string());
                    row.push(o.verdict.code().to_string());
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut inner = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    if let Some(reason) = partial {
        writeln!(inner, "{PARTIAL_MARKER} {}", reason.replace('\n', " "))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFile {
    pub mr_ids: Vec<String>,
    pub records: Vec<ExecutionRecord>,
    /// Rows whose id, operands, function or source output were missing or unreadable.
    pub malformed_rows: usize,
    pub partial: Option<String>,
}

/// Reads a log. Rows with a missing or unreadable relation column keep the
/// other outcomes; cleaning decides what to do with them.
pub fn read_log<R: Read>(mut input: R, path: &Path) -> Result<LogFile> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let partial = text
        .lines()
        .find_map(|l| l.strip_prefix(PARTIAL_MARKER))
        .map(|s| s.trim().to_string());

    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 5 || headers[..5] != ["id", "a", "b", "function", "source_out"] || !(headers.len() - 5).is_multiple_of(2) {
        return Err(Error::format(path, 1, "expected header id,a,b,function,source_out,<MR>_followup_out,<MR>_verdict,..."));
    }
    let mut mr_ids = Vec::new();
    for pair in headers[5..].chunks(2) {
        let mr = pair[0]
            .strip_suffix("_followup_out")
            .filter(|mr| pair[1].strip_suffix("_verdict") == Some(*mr))
            .ok_or_else(|| Error::format(path, 1, format!("bad relation columns {} {}", pair[0], pair[1])))?;
        mr_ids.push(mr.to_string());
    }

    let mut records = Vec::new();
    let mut malformed_rows = 0;
    for row in r.records() {
        let row = row?;
        let field = |j: usize| row.get(j).unwrap_or("").trim();
        let core = (|| {
            Some((
                field(0).parse::<u64>().ok()?,
                field(1).parse::<Value>().ok()?,
                field(2).parse::<Value>().ok()?,
                Some(field(3)).filter(|f| !f.is_empty())?.to_string(),
                field(4).parse::<Value>().ok()?,
            ))
        })();
        let Some((id, a, b, function, source_out)) = core else {
            malformed_rows += 1;
            continue;
        };
        let outcomes = mr_ids
            .iter()
            .enumerate()
            .filter_map(|(i, mr)| {
                let followup_out = field(5 + 2 * i).parse::<Value>().ok()?;
                let verdict = Verdict::from_code(field(6 + 2 * i))?;
                Some(MrOutcome { mr: mr.clone(), followup_out, verdict })
            })
            .collect();
        records.push(ExecutionRecord { id, a, b, function, source_out, outcomes });
    }
    Ok(LogFile { mr_ids, records, malformed_rows, partial })
}

pub fn load_log(path: &Path) -> Result<LogFile> {
    read_log(std::fs::File::open(path)?, path)
}
