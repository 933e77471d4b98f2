use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Refine metamorphic relations: fuzz, run, analyze, review, mine, gen-suite.
#[derive(Debug, Parser)]
#[command(name = "mrrefine", version)]
struct Cli {
    /// Campaign manifest shared by all stages.
    #[arg(long, global = true, env = "MRREFINE_MANIFEST", default_value = "campaign.json")]
    manifest: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the test-data corpus and start a new campaign manifest.
    Fuzz(FuzzArgs),
    /// Execute the corpus and every relation's follow-ups against the SUT.
    Run(RunArgs),
    /// Clean the log and write the per-cell violation summary.
    Analyze(AnalyzeArgs),
    /// Print the summary and merge tester decisions into a decision set.
    Review(ReviewArgs),
    /// Mine rules for mixed cells and merge them with the decisions.
    Mine(MineArgs),
    /// Emit the regression suite manifest from a rule file.
    GenSuite(GenSuiteArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Random,
    Exhaustive,
}

#[derive(Debug, Args)]
struct FuzzArgs {
    /// Number of pairs in random mode.
    #[arg(long, env = "MRREFINE_COUNT", default_value_t = 100)]
    count: u64,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    min: i64,
    #[arg(long, default_value_t = 9, allow_negative_numbers = true)]
    max: i64,
    #[arg(long, env = "MRREFINE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Random)]
    mode: Mode,
    #[arg(long, default_value = "corpus.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `builtin:calculator` or `cmd:<program and leading args>`.
    #[arg(long, env = "MRREFINE_SUT", default_value = "builtin:calculator")]
    sut: String,
    /// Functions an external SUT exposes.
    #[arg(long, value_delimiter = ',')]
    functions: Option<Vec<String>>,
    /// Shared relation constant; drawn from the campaign seed in [2, 9] when omitted.
    #[arg(long, allow_negative_numbers = true)]
    k: Option<i64>,
    /// Relation set document, or `default` for the four arithmetic relations.
    #[arg(long, default_value = "default")]
    mrs: String,
    /// Worker threads (and concurrent SUT processes); 0 means one per CPU.
    #[arg(long, env = "MRREFINE_JOBS", default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "log.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    log: PathBuf,
    /// Recorded for the mining stage.
    #[arg(long, env = "MRREFINE_MIN_SUPPORT", default_value = "0.2")]
    min_support: String,
    /// Recorded for the mining stage.
    #[arg(long, env = "MRREFINE_MIN_CONFIDENCE", default_value = "1.0")]
    min_confidence: String,
    /// Cells violated (or not) at most this often are flagged atypical.
    #[arg(long, default_value = "0.1")]
    atypical: String,
    /// Random example inputs per cell and verdict.
    #[arg(long, default_value_t = mrrefine::analyser::DEFAULT_SAMPLE_SIZE)]
    samples: usize,
    #[arg(long, default_value = "summary.json")]
    report: PathBuf,
    /// Also write per-cell CSV for plotting.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReviewArgs {
    #[arg(long, default_value = "summary.json")]
    report: PathBuf,
    /// Tester overrides, `{"function.MR": {"classification": .., "include_as": ..}}`.
    #[arg(long)]
    decisions: Option<PathBuf>,
    #[arg(long, default_value = "decisions.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MineArgs {
    #[arg(long)]
    log: PathBuf,
    /// Decision set written by `review`; defaults come from the log otherwise.
    #[arg(long)]
    decisions: Option<PathBuf>,
    #[arg(long)]
    min_support: Option<String>,
    #[arg(long)]
    min_confidence: Option<String>,
    /// Leave out the a_zero/b_zero/both_zero features.
    #[arg(long)]
    no_zero_flags: bool,
    /// Leave out the lt/eq/gt pair relation feature.
    #[arg(long)]
    no_pair_relation: bool,
    #[arg(long, default_value = "rules.txt")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenSuiteArgs {
    #[arg(long, default_value = "rules.txt")]
    rules: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "suite.json")]
    out: PathBuf,
    #[arg(long, env = "MRREFINE_CASES_PER_RULE", default_value_t = mrrefine::suite::DEFAULT_CASES_PER_RULE)]
    cases_per_rule: usize,
    /// Also assert rules mined below confidence 1.
    #[arg(long)]
    include_advisory: bool,
    /// Plain-text rendering of the suite.
    #[arg(long)]
    text: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Fuzz(args) => commands::fuzz(&cli.manifest, args),
        Command::Run(args) => commands::run(&cli.manifest, args),
        Command::Analyze(args) => commands::analyze(&cli.manifest, args),
        Command::Review(args) => commands::review(&cli.manifest, args),
        Command::Mine(args) => commands::mine(&cli.manifest, args),
        Command::GenSuite(args) => commands::gen_suite(&cli.manifest, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
