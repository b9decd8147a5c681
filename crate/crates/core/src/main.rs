use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use qbbn::experiment::{compile, run_experiment, train_universe, Experiment, CHAIN_LENGTH};
use qbbn::inference::{trace_csv, Schedule, Session, CONVERGENCE_TOLERANCE};
use qbbn::oracle::{exact_marginals, oracle_rows};
use qbbn::record::KnowledgeBaseRecord;
use qbbn::store::{self, GRAPH_PREFIX, STORE_ENV};
use qbbn::universe::Universe;
use qbbn::{Error, Proposition, TrainConfig};

#[derive(Parser)]
#[command(name = "qbbn", version, about = "Quantified boolean Bayesian network engine")]
struct Cli {
    /// TOML or JSON file with `[train]` and `[infer]` defaults; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate worlds, fit the OR weights and write a KB file.
    Train(TrainArgs),
    /// Run belief propagation on a KB and write the trace.
    Infer(InferArgs),
    /// Run one of the named scenarios end to end.
    Experiment(ExperimentArgs),
    /// Print the query graph as JSON.
    Inspect(InspectArgs),
    /// Exact marginals by enumeration, as an iteration-0 trace.
    Oracle(OracleArgs),
    /// Dump generated worlds, one JSON object per line.
    Dataset(DatasetArgs),
    /// Save a KB to the configured store and read it back.
    StoreCheck(StoreCheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum UniverseName {
    Dating,
    Chain,
}

#[derive(Args)]
struct UniverseArgs {
    universe: UniverseName,
    /// Chain length N (chain universe only).
    #[arg(long, default_value_t = CHAIN_LENGTH)]
    length: usize,
}

impl UniverseArgs {
    fn universe(&self) -> Result<Universe, Error> {
        match self.universe {
            UniverseName::Dating => Ok(Universe::Dating),
            UniverseName::Chain if self.length >= 1 => Ok(Universe::Chain(self.length)),
            UniverseName::Chain => Err(Error::Usage("chain length must be at least 1".into())),
        }
    }
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    examples: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Average the SGD iterates.
    #[arg(long)]
    averaged: bool,
}

impl TrainFlags {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        c.example_count = self.examples.unwrap_or(c.example_count);
        c.learning_rate = self.rate.unwrap_or(c.learning_rate);
        c.seed = self.seed.unwrap_or(c.seed);
        c.epochs = self.epochs.unwrap_or(c.epochs);
        c.averaged |= self.averaged;
        c
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    universe: UniverseArgs,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    kb: PathBuf,
    /// Canonical key; repeatable. Defaults to the KB's stored targets.
    #[arg(long)]
    target: Vec<String>,
    /// `key=0` or `key=1`; repeatable.
    #[arg(long)]
    evidence: Vec<String>,
    /// Use the KB's analytic factors instead of its learned weights.
    #[arg(long)]
    analytic: bool,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    iterations: Option<usize>,
    /// Stop early once no marginal moves by more than 1e-7.
    #[arg(long)]
    until_converged: bool,
    #[arg(long)]
    schedule: Option<Schedule>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    name: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    schedule: Option<Schedule>,
    /// Skip training and use the analytic factors.
    #[arg(long)]
    analytic: bool,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    target: Vec<String>,
    /// Also save the dump under `graph:<name>` in the store.
    #[arg(long)]
    store: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(flatten)]
    universe: UniverseArgs,
    #[arg(long)]
    examples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StoreCheckArgs {
    #[arg(long)]
    kb: PathBuf,
    /// Overrides the store endpoint from the environment and config.
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct Config {
    train: TrainConfig,
    infer: InferConfig,
    store: Option<String>,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InferConfig {
    iterations: usize,
    schedule: Schedule,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            iterations: 10,
            schedule: Schedule::Flood,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Error> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => emit(text),
    }
}

/// Writes to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) -> Result<(), Error> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => r.map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    qbbn::record::RecordError::Io {
        path: path.display().to_string(),
        source,
    }
    .into()
}

fn parse_evidence(items: &[String]) -> Result<Vec<(String, bool)>, Error> {
    items
        .iter()
        .map(|item| {
            let (key, value) = item
                .rsplit_once('=')
                .ok_or_else(|| Error::Usage(format!("evidence {item:?} is not key=0|1")))?;
            match value {
                "0" => Ok((key.to_string(), false)),
                "1" => Ok((key.to_string(), true)),
                _ => Err(Error::Usage(format!("evidence {item:?} is not key=0|1"))),
            }
        })
        .collect()
}

/// Build the session for a query: targets plus every evidence proposition.
fn open_query(q: &QueryArgs, schedule: Schedule) -> Result<(KnowledgeBaseRecord, Session), Error> {
    let record = KnowledgeBaseRecord::load(&q.kb)?;
    let evidence = parse_evidence(&q.evidence)?;
    let mut targets: Vec<Proposition> = if q.target.is_empty() {
        record.targets.clone()
    } else {
        q.target.iter().map(|t| t.parse()).collect::<Result<_, _>>()?
    };
    if targets.is_empty() {
        return Err(Error::Usage("no --target given and the KB stores none".into()));
    }
    // group keys cannot be targets; they must already be in the closure
    targets.extend(evidence.iter().filter_map(|(k, _)| k.parse::<Proposition>().ok()));
    let params = if q.analytic {
        record.analytic()?
    } else {
        record.learned()
    };
    let network = compile(&record, &params, &targets)?;
    let mut session = Session::with_schedule(network, schedule)?;
    for (key, value) in evidence {
        session.set_evidence_key(&key, value)?;
    }
    Ok((record, session))
}

fn print_marginals(session: &Session) -> Result<(), Error> {
    let mut text = String::new();
    for node in session.network().graph().nodes() {
        text += &format!("{:.9}\t{}\n", session.marginal(node.id)?, node.key);
    }
    emit(&text)
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => {
            let u = a.universe.universe()?;
            let tc = a.flags.apply(config.train);
            let (record, nll) = train_universe(u, &tc)?;
            record.save(&a.out)?;
            emit(&format!("mean_nll {nll:.9}\n"))?;
        }
        Command::Infer(a) => {
            let schedule = a.schedule.unwrap_or(config.infer.schedule);
            let (_, mut session) = open_query(&a.query, schedule)?;
            let k = a.iterations.unwrap_or(config.infer.iterations);
            if a.until_converged {
                match session.run_until_converged(k, CONVERGENCE_TOLERANCE)? {
                    Some(n) => eprintln!("converged after {n} iterations"),
                    None => eprintln!("not converged after {k} iterations"),
                }
            } else {
                session.run(k)?;
            }
            if let Some(path) = &a.trace {
                std::fs::write(path, session.trace_csv()).map_err(|e| io_error(path, e))?;
            }
            print_marginals(&session)?;
        }
        Command::Experiment(a) => {
            let e: Experiment = a.name.parse()?;
            let tc = a.flags.apply(config.train);
            let (record, _) = if a.analytic {
                train_universe(e.universe(), &TrainConfig { example_count: 0, ..tc })?
            } else {
                train_universe(e.universe(), &tc)?
            };
            let params = if a.analytic {
                record.analytic()?
            } else {
                record.learned()
            };
            let k = a.iterations.unwrap_or(e.default_iterations());
            let schedule = a.schedule.unwrap_or(config.infer.schedule);
            let outcome = run_experiment(e, &record, &params, k, schedule)?;
            std::fs::create_dir_all(&a.out_dir).map_err(|err| io_error(&a.out_dir, err))?;
            let path = a.out_dir.join(format!("{}.csv", e.name()));
            std::fs::write(&path, outcome.csv()).map_err(|err| io_error(&path, err))?;
            emit(&format!("{}\n", path.display()))?;
            print_marginals(&outcome.session)?;
        }
        Command::Inspect(a) => {
            let record = KnowledgeBaseRecord::load(&a.kb)?;
            let targets: Vec<Proposition> = if a.target.is_empty() {
                record.targets.clone()
            } else {
                a.target.iter().map(|t| t.parse()).collect::<Result<_, _>>()?
            };
            let graph = qbbn::build_graph_multi(&record.knowledge_base()?, &targets)?;
            let dump = serde_json::to_string_pretty(&graph.dump()).expect("graph dump serializes") + "\n";
            if a.store {
                let endpoint = store_endpoint(None, &config);
                let mut s = store::open_store(&endpoint)?;
                s.set(&format!("{GRAPH_PREFIX}{}", record.name), &dump)?;
            }
            emit(&dump)?;
        }
        Command::Oracle(a) => {
            let (_, session) = open_query(&a.query, Schedule::Flood)?;
            let network = session.network();
            let evidence: BTreeMap<_, _> = session.evidence().collect();
            let m = exact_marginals(network, &evidence)?;
            write_out(a.out.as_deref(), &trace_csv(network, &oracle_rows(&m)))?;
        }
        Command::Dataset(a) => {
            let u = a.universe.universe()?;
            let count = a.examples.unwrap_or(config.train.example_count);
            let seed = a.seed.unwrap_or(config.train.seed);
            let text: String = u.worlds(count, seed).iter().map(|w| w.to_line() + "\n").collect();
            write_out(a.out.as_deref(), &text)?;
        }
        Command::StoreCheck(a) => {
            let record = KnowledgeBaseRecord::load(&a.kb)?;
            let endpoint = store_endpoint(a.endpoint, &config);
            let mut s = store::open_store(&endpoint)?;
            store::kv_store_roundtrip(s.as_mut(), &record)?;
            emit(&format!("ok {endpoint}\n"))?;
        }
    }
    Ok(())
}

fn store_endpoint(flag: Option<String>, config: &Config) -> String {
    flag.or_else(|| std::env::var(STORE_ENV).ok())
        .or_else(|| config.store.clone())
        .unwrap_or_else(|| "memory".to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
