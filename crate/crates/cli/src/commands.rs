use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mrrefine::analyser::{
    apply_feedback, blocking_fault, classify, default_atypical_threshold, preprocess, render_csv, render_table, summarize,
    Classification, DecisionSet, DecisionsDocument, SummaryReport,
};
use mrrefine::harness::{load_log, run_campaign, write_log, SutAdapter};
use mrrefine::manifest::CampaignManifest;
use mrrefine::mr::{default_mr_set, mr_set_hash, MrSetDocument, MrSpec, Value};
use mrrefine::ratio::{parse_ratio, parse_threshold, render_exact, render_percent, Ratio};
use mrrefine::refine::{finalize_rules, mine_all, parse_rules, render_rules, FeatureEncoder, MiningParams};
use mrrefine::suite::{generate_suite, render_text, CampaignRef};
use mrrefine::tdg::{draw_constant_k, generate, load_corpus, write_corpus, FuzzConfig, FuzzMode};
use mrrefine::Error;

use crate::{AnalyzeArgs, FuzzArgs, GenSuiteArgs, MineArgs, Mode, ReviewArgs, RunArgs};

const K_RANGE: (i64, i64) = (2, 9);

pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Blocked(_)) => 3,
        Some(err) if err.is_sut_failure() => 2,
        _ => 1,
    }
}

fn load_or_new(path: &Path) -> Result<CampaignManifest> {
    if path.exists() {
        CampaignManifest::load(path).with_context(|| format!("reading manifest {}", path.display()))
    } else {
        Ok(CampaignManifest::new(0))
    }
}

fn load_existing(path: &Path) -> Result<CampaignManifest> {
    CampaignManifest::load(path).with_context(|| format!("reading manifest {} (run the earlier stages first)", path.display()))
}

fn save_manifest(manifest: &CampaignManifest, path: &Path) -> Result<()> {
    fs::write(path, manifest.to_json()).with_context(|| format!("writing {}", path.display()))
}

fn write_artifact(manifest: &mut CampaignManifest, name: &str, path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    manifest.record_artifact(name, bytes);
    Ok(())
}

fn campaign_mrs(manifest: &CampaignManifest) -> Result<Vec<MrSpec>> {
    manifest.mrs.clone().context("manifest has no relation set; run `mrrefine run` first")
}

fn manifest_ratio(value: &Option<String>, default: Ratio) -> Result<Ratio> {
    match value {
        Some(text) => Ok(parse_threshold(text)?),
        None => Ok(default),
    }
}

pub fn fuzz(manifest_path: &Path, args: &FuzzArgs) -> Result<()> {
    let mode = match args.mode {
        Mode::Random => FuzzMode::Random,
        Mode::Exhaustive => FuzzMode::Exhaustive,
    };
    let config = FuzzConfig {
        count: args.count,
        domain_min: Value(args.min),
        domain_max: Value(args.max),
        seed: args.seed,
        mode,
        ..FuzzConfig::default()
    };
    let corpus = generate(&config)?;
    let mut bytes = Vec::new();
    write_corpus(&mut bytes, &corpus)?;

    let mut manifest = CampaignManifest::new(args.seed);
    manifest.mode = Some(mode);
    manifest.count = (mode == FuzzMode::Random).then_some(args.count);
    manifest.domain_min = Some(config.domain_min);
    manifest.domain_max = Some(config.domain_max);
    write_artifact(&mut manifest, "corpus", &args.out, &bytes)?;
    save_manifest(&manifest, manifest_path)?;
    println!("wrote {} pairs to {}", corpus.len(), args.out.display());
    Ok(())
}

pub fn run(manifest_path: &Path, args: &RunArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus).with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let mut manifest = load_or_new(manifest_path)?;
    let k = match args.k {
        Some(k) => Value(k),
        None => draw_constant_k(manifest.seed, Value(K_RANGE.0), Value(K_RANGE.1))?,
    };
    let mrs = if args.mrs == "default" {
        default_mr_set(k)?
    } else {
        let text = fs::read_to_string(&args.mrs).with_context(|| format!("reading relation set {}", args.mrs))?;
        MrSetDocument::parse(&text)?.resolve(k)?
    };
    let adapter = SutAdapter::parse(&args.sut, args.functions.clone())?;
    let mr_ids: Vec<String> = mrs.iter().map(|m| m.id.clone()).collect();

    manifest.k = Some(k);
    manifest.mr_set_hash = Some(mr_set_hash(&mrs));
    manifest.mrs = Some(mrs.clone());
    manifest.sut = Some(adapter.descriptor());
    manifest.functions = Some(adapter.functions());
    manifest.blocked = None;

    match run_campaign(&corpus, &mrs, &adapter, args.jobs) {
        Ok(records) => {
            let mut bytes = Vec::new();
            write_log(&mut bytes, &mr_ids, &records, None)?;
            write_artifact(&mut manifest, "log", &args.out, &bytes)?;
            save_manifest(&manifest, manifest_path)?;
            println!("k = {k}; wrote {} records to {}", records.len(), args.out.display());
            Ok(())
        }
        Err(Error::CampaignAborted { partial, source }) => {
            let mut bytes = Vec::new();
            write_log(&mut bytes, &mr_ids, &partial, Some(&source.to_string()))?;
            write_artifact(&mut manifest, "log", &args.out, &bytes)?;
            save_manifest(&manifest, manifest_path)?;
            eprintln!("partial log with {} records written to {}", partial.len(), args.out.display());
            Err(Error::CampaignAborted { partial, source }.into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn analyze(manifest_path: &Path, args: &AnalyzeArgs) -> Result<()> {
    let mut manifest = load_existing(manifest_path)?;
    let mrs = campaign_mrs(&manifest)?;
    let min_support = parse_threshold(&args.min_support)?;
    let min_confidence = parse_threshold(&args.min_confidence)?;
    let atypical = parse_ratio(&args.atypical)
        .filter(|r| *r < Ratio::new(1, 2))
        .with_context(|| format!("atypical threshold {:?} must be a ratio below 0.5", args.atypical))?;

    let log = load_log(&args.log).with_context(|| format!("reading log {}", args.log.display()))?;
    if let Some(reason) = log.partial {
        return Err(Error::PartialLog(reason).into());
    }
    let clean = preprocess(log.records, &mrs)?;
    let summary = summarize(&clean, args.samples, manifest.seed);

    manifest.min_support = Some(render_exact(min_support));
    manifest.min_confidence = Some(render_exact(min_confidence));
    manifest.atypical_threshold = Some(render_exact(atypical));
    manifest.sample_size = Some(args.samples);
    let report = SummaryReport::new(&summary, &manifest.hash());
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_artifact(&mut manifest, "summary", &args.report, json.as_bytes())?;
    if let Some(csv) = &args.csv {
        write_artifact(&mut manifest, "summary_csv", csv, render_csv(&summary).as_bytes())?;
    }
    save_manifest(&manifest, manifest_path)?;

    println!(
        "{} records kept; dropped {} duplicate, {} inconsistent, {} incomplete, {} malformed",
        clean.records.len(),
        clean.dropped_duplicates,
        clean.dropped_inconsistent,
        clean.dropped_incomplete,
        log.malformed_rows
    );
    print!("{}", render_table(&summary));
    Ok(())
}

pub fn review(manifest_path: &Path, args: &ReviewArgs) -> Result<()> {
    let mut manifest = load_existing(manifest_path)?;
    let text = fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let report: SummaryReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.report.display()))?;
    let summary = report.summary()?;
    let atypical = manifest_ratio(&manifest.atypical_threshold, default_atypical_threshold())?;

    let defaults = classify(&summary, atypical);
    let overrides = match &args.decisions {
        Some(path) => DecisionsDocument::parse(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => DecisionsDocument::default(),
    };
    let decisions = apply_feedback(&defaults, &overrides)?;
    manifest.blocked = blocking_fault(&decisions);

    let set = DecisionSet { campaign: manifest.hash(), decisions };
    let mut json = serde_json::to_string_pretty(&set)?;
    json.push('\n');
    write_artifact(&mut manifest, "decisions", &args.out, json.as_bytes())?;
    save_manifest(&manifest, manifest_path)?;

    print!("{}", render_table(&summary));
    println!();
    for d in &set.decisions {
        let include = d.include_as.map(|i| format!("{i:?}")).unwrap_or_else(|| "-> mining".into());
        let flag = if d.atypical { "  (atypical, inspect samples)" } else { "" };
        println!("{:<12} {:>7}  {:<10} {include}{flag}", d.key(), render_percent(d.violated_pct()), format!("{:?}", d.classification));
    }
    if let Some(cell) = &manifest.blocked {
        eprintln!("campaign blocked: {cell} is marked as a fault; fix the SUT and repeat phase I");
    }
    Ok(())
}

pub fn mine(manifest_path: &Path, args: &MineArgs) -> Result<()> {
    let mut manifest = load_existing(manifest_path)?;
    let mrs = campaign_mrs(&manifest)?;
    let log = load_log(&args.log).with_context(|| format!("reading log {}", args.log.display()))?;
    if let Some(reason) = log.partial {
        return Err(Error::PartialLog(reason).into());
    }
    let clean = preprocess(log.records, &mrs)?;

    let decisions = match &args.decisions {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let set: DecisionSet = serde_json::from_str(&text).map_err(|e| Error::MalformedDecisions(e.to_string()))?;
            set.decisions
        }
        None => {
            let atypical = manifest_ratio(&manifest.atypical_threshold, default_atypical_threshold())?;
            classify(&summarize(&clean, 0, manifest.seed), atypical)
        }
    };
    if let Some(cell) = blocking_fault(&decisions) {
        manifest.blocked = Some(cell.clone());
        save_manifest(&manifest, manifest_path)?;
        return Err(Error::Blocked(cell).into());
    }

    let defaults = MiningParams::default();
    let params = MiningParams {
        min_support: match &args.min_support {
            Some(s) => parse_threshold(s)?,
            None => manifest_ratio(&manifest.min_support, defaults.min_support)?,
        },
        min_confidence: match &args.min_confidence {
            Some(s) => parse_threshold(s)?,
            None => manifest_ratio(&manifest.min_confidence, defaults.min_confidence)?,
        },
    };
    let encoder = FeatureEncoder { pair_relation: !args.no_pair_relation, zero_flags: !args.no_zero_flags };
    let mined = mine_all(&clean, &decisions, &encoder, &params)?;
    let rules = finalize_rules(&mined, &decisions)?;

    manifest.min_support = Some(render_exact(params.min_support));
    manifest.min_confidence = Some(render_exact(params.min_confidence));
    manifest.encoder = Some(
        [(encoder.pair_relation, "rel"), (encoder.zero_flags, "zero_flags")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, name)| *name)
            .collect::<Vec<_>>()
            .join(","),
    );
    let text = render_rules(&rules, &manifest.hash());
    write_artifact(&mut manifest, "rules", &args.out, text.as_bytes())?;
    save_manifest(&manifest, manifest_path)?;

    let mixed = decisions.iter().filter(|d| d.classification == Classification::Mixed).count();
    println!("mined {} rules from {mixed} mixed cells; {} final rules written to {}", mined.len(), rules.len(), args.out.display());
    print!("{}", text.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}

pub fn gen_suite(manifest_path: &Path, args: &GenSuiteArgs) -> Result<()> {
    let mut manifest = load_existing(manifest_path)?;
    if let Some(cell) = &manifest.blocked {
        return Err(Error::Blocked(cell.clone()).into());
    }
    let mrs = campaign_mrs(&manifest)?;
    let functions = manifest.functions.clone().context("manifest has no function list; run `mrrefine run` first")?;
    let text = fs::read_to_string(&args.rules).with_context(|| format!("reading {}", args.rules.display()))?;
    let rules = parse_rules(&text, &functions, &args.rules)?;
    if rules.campaign.as_deref() != Some(manifest.hash().as_str()) {
        eprintln!("warning: {} was produced under a different campaign configuration", args.rules.display());
    }
    if rules.rules.is_empty() {
        bail!("{} holds no rules", args.rules.display());
    }
    let corpus = load_corpus(&args.corpus).with_context(|| format!("reading corpus {}", args.corpus.display()))?;

    let campaign = CampaignRef {
        manifest_hash: manifest.hash(),
        seed: manifest.seed,
        k: manifest.k,
        min_support: manifest.min_support.clone(),
        min_confidence: manifest.min_confidence.clone(),
        selection_policy: manifest.selection_policy.clone(),
        cases_per_rule: args.cases_per_rule,
    };
    let suite = generate_suite(&rules.rules, &mrs, &corpus, args.cases_per_rule, args.include_advisory, campaign)?;
    for w in &suite.warnings {
        eprintln!("warning: {w}");
    }
    write_artifact(&mut manifest, "suite", &args.out, suite.manifest.to_json().as_bytes())?;
    if let Some(path) = &args.text {
        write_artifact(&mut manifest, "suite_text", path, render_text(&suite.manifest).as_bytes())?;
    }
    save_manifest(&manifest, manifest_path)?;
    println!("{}: {} tests written to {}", suite.manifest.suite_id, suite.manifest.tests.len(), args.out.display());
    Ok(())
}
