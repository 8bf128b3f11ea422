//! The `crowdlocate` command. Every subcommand writes its result to the
//! writer passed to [`run`], which keeps them testable without a process.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdlocate_core::aggregation::{
    aggregate, cut_time_analysis, cut_time_csv, min_replication_sweep, sweep_csv, threshold_sweep,
    AggregationConfig, GroundTruth, LineScope, Mechanism,
};
use crowdlocate_core::analysis::extract_elements;
use crowdlocate_core::answers::Dataset;
use crowdlocate_core::corpus::{load_corpus, Corpus};
use crowdlocate_core::filters::{
    apply_filter, builtin, builtin_filters, subcrowd_report, subcrowd_table, FilterContext, FilterSpec, SUMMARY_ROWS,
};
use crowdlocate_core::orchestrator::events::{parse_log, to_jsonl};
use crowdlocate_core::orchestrator::{compose_hits, EventStore, Experiment, ExperimentConfig};
use crowdlocate_core::questions::generate_all;
use crowdlocate_core::simulator::{run_experiment, AnswerModel, PopulationModel};
use crowdlocate_server::{Service, SystemClock, ADMIN_TOKEN_ENV};

#[derive(Debug, Parser)]
#[command(name = "crowdlocate", version, about = "Locate faults with crowd answers to microtask questions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the code elements of every case as CSV.
    Elements {
        /// Corpus JSON file; the bundled reference corpus when omitted.
        corpus: Option<PathBuf>,
        #[arg(long = "case")]
        case_id: Option<String>,
    },
    /// List the generated questions as CSV.
    Questions { corpus: Option<PathBuf> },
    /// Compose HITs or inspect a running experiment.
    Hits {
        #[command(subcommand)]
        command: HitsCommand,
    },
    /// Run a simulated crowd experiment and write its data set.
    Simulate(SimulateArgs),
    /// Aggregate answers into fault predictions.
    Aggregate(AggregateArgs),
    /// Metrics across thresholds, replication levels or cut times, as CSV.
    Sweep(SweepArgs),
    /// Aggregate a subcrowd selected by a filter.
    Filter(FilterArgs),
    /// Write the default simulation models as editable JSON files.
    Presets {
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a live experiment over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum HitsCommand {
    /// Print the HIT composition as CSV.
    Compose {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        experiment: ExperimentArgs,
    },
    /// Replay an event log and print the experiment's progress as JSON.
    Status {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Directory holding the event log.
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Distinct workers per question.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub hit_size: usize,
    #[arg(long, default_value_t = 8)]
    pub max_hits_per_worker: usize,
    /// HIT timeout in minutes.
    #[arg(long, default_value_t = 120)]
    pub timeout_minutes: u64,
    /// Open extra HITs rather than group adjacent questions.
    #[arg(long)]
    pub split_on_conflict: bool,
}

impl ExperimentArgs {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            replication: self.k,
            hit_size: self.hit_size,
            max_hits_per_worker: self.max_hits_per_worker,
            hit_timeout: Duration::from_secs(self.timeout_minutes * 60),
            split_on_conflict: self.split_on_conflict,
            ..ExperimentConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Answer model preset: table28, perfect or coin.
    #[arg(long, default_value = "table28")]
    pub acc_preset: String,
    /// Answer model JSON file; overrides --acc-preset.
    #[arg(long)]
    pub answer_model: Option<PathBuf>,
    /// Population model JSON file.
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Let workers quit or abandon HITs.
    #[arg(long)]
    pub dropout: bool,
    /// Output directory for answers.csv, workers.csv and the event log.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory with answers.csv and workers.csv.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MechanismArgs {
    #[arg(long, default_value = "AM3")]
    pub mechanism: String,
    /// Threshold; the mechanism's preferred value when omitted.
    #[arg(long)]
    pub n: Option<usize>,
}

impl MechanismArgs {
    fn config(&self) -> Result<AggregationConfig> {
        let m: Mechanism = self.mechanism.parse()?;
        Ok(self.n.map_or_else(|| AggregationConfig::preferred(m), |n| AggregationConfig::new(m, n)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mechanism: MechanismArgs,
    /// Use only the first `a` answers of each question.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Filter expression or builtin filter name applied first.
    #[arg(long)]
    pub filter: Option<String>,
    /// Score lines of every case, not only those whose fault was located.
    #[arg(long)]
    pub all_cases: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    /// Confusion counts for every threshold n.
    Threshold,
    /// Fewest answers per question that locate each fault.
    Replication,
    /// Metrics at the instants each answer level was reached.
    CutTime,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mechanism: MechanismArgs,
    #[arg(long, value_enum, default_value_t = SweepKind::Threshold)]
    pub kind: SweepKind,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mechanism: MechanismArgs,
    #[arg(long, conflicts_with_all = ["builtin", "summary"])]
    pub spec: Option<String>,
    #[arg(long, conflicts_with = "summary")]
    pub builtin: Option<String>,
    /// Compare the standard subcrowds in one table.
    #[arg(long)]
    pub summary: bool,
    /// List the builtin filters and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Event log directory. Without it the experiment lives in memory only.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, env = ADMIN_TOKEN_ENV, hide_env_values = true)]
    pub admin_token: Option<String>,
}

fn corpus(path: Option<&Path>) -> Result<Corpus> {
    match path {
        Some(p) => load_corpus(p).with_context(|| format!("loading corpus {}", p.display())),
        None => Ok(Corpus::reference()),
    }
}

fn load_dataset(args: &DataArgs) -> Result<(Corpus, Dataset, GroundTruth)> {
    let corpus = corpus(args.corpus.as_deref())?;
    let sets = generate_all(&corpus)?;
    let truth = GroundTruth::new(&corpus, &sets)?;
    let dataset =
        Dataset::load(&args.data, sets).with_context(|| format!("loading data set from {}", args.data.display()))?;
    Ok((corpus, dataset, truth))
}

/// A builtin filter name or a filter expression.
fn resolve_filter(text: &str) -> Result<(String, FilterSpec)> {
    match builtin(text) {
        Some(b) => Ok((b.label.to_string(), b.spec()?)),
        None => Ok((text.to_string(), FilterSpec::parse(text)?)),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Elements { corpus: path, case_id } => {
            let corpus = corpus(path.as_deref())?;
            let mut wtr = csv::Writer::from_writer(out);
            wtr.write_record(["element_id", "case_id", "kind", "name", "min_line", "max_line", "span"])?;
            let mut matched = false;
            for case in corpus.cases.iter().filter(|c| case_id.iter().all(|id| *id == c.case_id)) {
                matched = true;
                for e in extract_elements(case)? {
                    let span: Vec<String> = e.span.iter().map(|l| l.to_string()).collect();
                    wtr.write_record([
                        e.element_id.clone(),
                        case.case_id.clone(),
                        e.kind.as_str().to_string(),
                        e.name.clone(),
                        e.min_line().to_string(),
                        e.max_line().to_string(),
                        span.join(" "),
                    ])?;
                }
            }
            wtr.flush()?;
            if !matched {
                bail!("no case {} in the corpus", case_id.unwrap_or_default());
            }
        }
        Command::Questions { corpus: path } => {
            let corpus = corpus(path.as_deref())?;
            let mut wtr = csv::Writer::from_writer(out);
            wtr.write_record([
                "question_id",
                "case_id",
                "kind",
                "name",
                "min_line",
                "max_line",
                "covered_line_count",
                "covers_fault",
            ])?;
            for q in generate_all(&corpus)?.iter().flat_map(|qs| &qs.questions) {
                wtr.write_record([
                    q.question_id.clone(),
                    q.case_id.clone(),
                    q.kind().as_str().to_string(),
                    q.element.name.clone(),
                    q.min_line().to_string(),
                    q.max_line().to_string(),
                    q.covered_lines.len().to_string(),
                    q.covers_fault.to_string(),
                ])?;
            }
            wtr.flush()?;
        }
        Command::Hits { command } => hits(command, out)?,
        Command::Simulate(args) => simulate(args, out)?,
        Command::Aggregate(args) => {
            let (_, dataset, truth) = load_dataset(&args.data)?;
            let cfg = args.mechanism.config()?;
            let answers = match &args.filter {
                Some(f) => {
                    let (_, spec) = resolve_filter(f)?;
                    apply_filter(&FilterContext::new(&dataset), &spec)
                }
                None => dataset.answers.clone(),
            };
            let scope = if args.all_cases {
                LineScope::AllCases
            } else {
                LineScope::LocatedCases
            };
            let report = aggregate(&truth, &answers, cfg, args.limit, scope)?;
            match args.format {
                OutputFormat::Text => {
                    write!(out, "{}", report.render_text())?;
                    writeln!(out)?;
                    write!(out, "{}", report.outcomes_csv())?;
                }
                OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
            }
        }
        Command::Sweep(args) => {
            let (_, dataset, truth) = load_dataset(&args.data)?;
            match args.kind {
                SweepKind::Threshold => {
                    let m: Mechanism = args.mechanism.mechanism.parse()?;
                    write!(out, "{}", sweep_csv(&threshold_sweep(&truth, &dataset.answers, m)?))?;
                }
                SweepKind::Replication => {
                    let r = min_replication_sweep(&truth, &dataset.answers, args.mechanism.config()?)?;
                    writeln!(out, "case_id,minimum,lines_to_inspect")?;
                    for c in &r.per_case {
                        writeln!(
                            out,
                            "{},{},{}",
                            c.case_id,
                            c.minimum.map_or(String::new(), |m| m.to_string()),
                            c.lines.as_ref().map_or(String::new(), |l| l.lines_to_inspect().to_string())
                        )?;
                    }
                }
                SweepKind::CutTime => {
                    let k = dataset
                        .answers
                        .iter()
                        .fold(std::collections::HashMap::<&str, usize>::new(), |mut m, a| {
                            *m.entry(a.question_id.as_str()).or_default() += 1;
                            m
                        })
                        .into_values()
                        .max()
                        .unwrap_or(0);
                    let rows = cut_time_analysis(&truth, &dataset.answers, args.mechanism.config()?, k, None)?;
                    write!(out, "{}", cut_time_csv(&rows))?;
                }
            }
        }
        Command::Filter(args) => filter(args, out)?,
        Command::Presets { out: dir } => {
            fs::create_dir_all(&dir)?;
            let write = |name: &str, value: String| fs::write(dir.join(name), value + "\n");
            write("population.json", serde_json::to_string_pretty(&PopulationModel::default())?)?;
            write(
                "population_dropout.json",
                serde_json::to_string_pretty(&PopulationModel::default().with_dropout())?,
            )?;
            for preset in ["table28", "perfect", "coin"] {
                let model = AnswerModel::preset(preset).expect("known preset");
                write(&format!("answers_{preset}.json"), serde_json::to_string_pretty(&model)?)?;
            }
            writeln!(out, "wrote model presets to {}", dir.display())?;
        }
        Command::Serve(args) => serve(args)?,
    }
    Ok(())
}

fn hits(command: HitsCommand, out: &mut impl Write) -> Result<()> {
    match command {
        HitsCommand::Compose { corpus: path, experiment } => {
            let corpus = corpus(path.as_deref())?;
            let cfg = experiment.config();
            cfg.validate()?;
            let sets = generate_all(&corpus)?;
            let hits = compose_hits(&sets, &cfg, experiment.seed)?;
            writeln!(out, "hit_id,case_id,questions,question_ids,adjacency_violations")?;
            for h in &hits {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    h.hit_id,
                    h.case_id,
                    h.question_ids.len(),
                    h.question_ids.join(" "),
                    h.adjacency_violations
                )?;
            }
        }
        HitsCommand::Status { corpus: path, store } => {
            let corpus = corpus(path.as_deref())?;
            let file = store.join(EventStore::FILE_NAME);
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let (records, report) = parse_log(&text);
            if let Some(line) = report.corrupt_line {
                eprintln!(
                    "warning: log unreadable from line {line}: {}",
                    report.message.as_deref().unwrap_or("")
                );
            }
            let exp = Experiment::replay(&corpus, &records)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&exp.progress())?)?;
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs, out: &mut impl Write) -> Result<()> {
    let corpus = corpus(args.corpus.as_deref())?;
    let model = match &args.answer_model {
        Some(p) => read_json::<AnswerModel>(p)?,
        None => AnswerModel::preset(&args.acc_preset)
            .with_context(|| format!("unknown preset `{}` (table28, perfect or coin)", args.acc_preset))?,
    };
    let mut population = match &args.population {
        Some(p) => read_json::<PopulationModel>(p)?,
        None => PopulationModel::default(),
    };
    if args.dropout && population.dropout.is_none() {
        population = population.with_dropout();
    }
    let run = run_experiment(&corpus, args.experiment.config(), &population, &model, args.experiment.seed)?;
    let dataset = run.dataset();
    dataset.save(&args.out)?;
    fs::write(args.out.join(EventStore::FILE_NAME), to_jsonl(run.experiment.records())?)?;
    let s = &run.stats;
    writeln!(out, "answers: {}", dataset.answers.len())?;
    writeln!(out, "workers qualified: {} of {} arrivals", s.qualified, s.arrivals)?;
    writeln!(out, "assignments: {} (quit {}, abandoned {})", s.assignments, s.quits, s.abandoned)?;
    writeln!(
        out,
        "duration: {:.1} h",
        (s.finished_at - s.started_at).num_seconds() as f64 / 3600.0
    )?;
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(())
}

fn filter(args: FilterArgs, out: &mut impl Write) -> Result<()> {
    if args.list {
        writeln!(out, "name,label,expression")?;
        for f in builtin_filters() {
            writeln!(out, "{},\"{}\",\"{}\"", f.name, f.label, f.expr)?;
        }
        return Ok(());
    }
    let (_, dataset, truth) = load_dataset(&args.data)?;
    let ctx = FilterContext::new(&dataset);
    let cfg = args.mechanism.config()?;
    if args.summary {
        let rows = SUMMARY_ROWS
            .iter()
            .map(|name| {
                let f = builtin(name).expect("summary rows are builtins");
                Ok(subcrowd_report(&ctx, &truth, f.label, &f.spec()?, cfg)?)
            })
            .collect::<Result<Vec<_>>>()?;
        write!(out, "{}", subcrowd_table(&rows))?;
        return Ok(());
    }
    let text = match (&args.spec, &args.builtin) {
        (Some(s), _) => s.clone(),
        (None, Some(b)) => {
            if builtin(b).is_none() {
                bail!("unknown builtin filter `{b}`; see --list");
            }
            b.clone()
        }
        (None, None) => bail!("give --spec, --builtin, --summary or --list"),
    };
    let (label, spec) = resolve_filter(&text)?;
    let r = subcrowd_report(&ctx, &truth, &label, &spec, cfg)?;
    write!(out, "{}", subcrowd_table(std::slice::from_ref(&r)))?;
    writeln!(out)?;
    write!(out, "{}", r.report.render_text())?;
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let corpus = corpus(args.corpus.as_deref())?;
    let clock = Arc::new(SystemClock);
    let cfg = args.experiment.config();
    let seed = args.experiment.seed;
    if args.admin_token.is_none() {
        eprintln!("warning: {ADMIN_TOKEN_ENV} is not set; admin endpoints are disabled");
    }
    let service = match &args.store {
        Some(dir) => Service::open(dir, corpus, cfg, seed, clock, args.admin_token)?,
        None => Service::in_memory(corpus, cfg, seed, clock, args.admin_token)?,
    };
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("invalid --host or --port")?;
    tokio::runtime::Runtime::new()?.block_on(crowdlocate_server::serve(Arc::new(service), addr))?;
    Ok(())
}
