//! `prooftutor` command line.
//!
//! Exit codes: 0 success, 1 validation or domain error, 2 I/O or backend
//! error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use prooftutor::corpus::synthetic::{generate, SyntheticSpec};
use prooftutor::corpus::{load_records, save_records, summarize};
use prooftutor::kg::KgExport;
use prooftutor::metrics::report::build_report;
use prooftutor::metrics::default_bucket_edges;
use prooftutor::pipeline::{run_batch, PipelineJob, RecordStatus};
use prooftutor::{
    parse, Corpus, CorpusError, CorpusProblem, Derivation, Formula, KgBounds, KnowledgeGraph, PipelineKind,
    ProofProblem, ProofState, Role, RuleId,
};

use crate::config::HarnessConfig;
use crate::server::{serve, AppState};

#[derive(Debug)]
pub enum CliError {
    /// Bad input or a domain failure.
    Invalid(String),
    /// Unreadable files, unreachable or unauthorized backends.
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "prooftutor", version, about = "Proof-state knowledge graphs, step checking and tutoring runs")]
pub struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct BoundsArgs {
    /// Cap on non-goal states per graph.
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Depth bound; a problem's own bound in the corpus wins.
    #[arg(long)]
    pub max_intermediates: Option<usize>,
}

impl BoundsArgs {
    fn apply(&self, mut b: KgBounds) -> KgBounds {
        if let Some(n) = self.max_nodes {
            b.max_nodes = n;
        }
        if let Some(n) = self.max_intermediates {
            b.max_intermediates = n;
        }
        b
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build and save one knowledge graph per corpus problem.
    BuildKg {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only this problem.
        #[arg(long)]
        problem: Option<String>,
        #[command(flatten)]
        bounds: BoundsArgs,
    },
    /// Classify one proposed step.
    Classify {
        /// Corpus directory; use with --problem, or give --premise and --conclusion.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        problem: Option<String>,
        /// A corpus state to start from instead of the root.
        #[arg(long)]
        state: Option<String>,
        #[arg(long)]
        premise: Vec<String>,
        #[arg(long)]
        conclusion: Option<String>,
        /// Practice level recorded for an ad hoc problem.
        #[arg(long, default_value_t = 2)]
        level: u8,
        /// Earlier step as "STATEMENT / RULE / PARENT; PARENT".
        #[arg(long)]
        intermediate: Vec<String>,
        #[arg(long)]
        step: String,
        #[arg(long)]
        rule: String,
        /// Parent statements, separated by ';'.
        #[arg(long, default_value = "")]
        parents: String,
        #[command(flatten)]
        bounds: BoundsArgs,
    },
    /// Run feedback pipelines over corpus states and write dialogue records.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory of saved graphs; missing ones are built.
        #[arg(long)]
        kg_dir: Option<PathBuf>,
        /// Comma-separated: tutor, teacher, judge, teacher-judge.
        #[arg(long, default_value = "tutor,teacher,judge")]
        kinds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        concurrency: Option<usize>,
        /// Only the first N states.
        #[arg(long)]
        limit: Option<usize>,
        #[command(flatten)]
        bounds: BoundsArgs,
    },
    /// Summarize dialogue records into accuracy tables.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Complexity bucket edges, comma-separated.
        #[arg(long)]
        edges: Option<String>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the tutoring HTTP API.
    Serve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[command(flatten)]
        bounds: BoundsArgs,
    },
    /// Write the seeded synthetic corpus.
    GenerateCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-level counts and mean statement counts of a corpus.
    Summarize {
        #[arg(long)]
        corpus: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::Invalid(m) | CliError::Io(m)) = &e;
            let _ = writeln!(err, "error: {m}");
            e.code()
        }
    }
}

fn config(path: &Option<PathBuf>) -> Result<HarnessConfig, CliError> {
    match path {
        None => Ok(HarnessConfig::default()),
        Some(p) if !p.exists() => Err(io(format!("{}: no such file", p.display()))),
        Some(p) => HarnessConfig::load(p).map_err(CliError::Invalid),
    }
}

fn kg_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn load_kg(path: &Path) -> Result<KnowledgeGraph, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io(format!("{}: {e}", path.display())))?;
    let doc: KgExport = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    KnowledgeGraph::from_export(doc).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = config(&cli.config)?;
    match cli.command {
        Command::BuildKg { corpus, out: dir, problem, bounds } => {
            let corpus = Corpus::load(&corpus)?;
            let bounds = bounds.apply(cfg.bounds);
            std::fs::create_dir_all(&dir).map_err(|e| io(format!("{}: {e}", dir.display())))?;
            let selected: Vec<&CorpusProblem> = match &problem {
                Some(id) => vec![corpus.problem(id).ok_or_else(|| invalid(format!("no problem {id:?}")))?],
                None => corpus.problems.iter().collect(),
            };
            writeln!(out, "problem\tnodes\tedges\ttruncated\troot_distance\tseconds").map_err(io)?;
            for p in selected {
                let t = Instant::now();
                let kg = p.build_kg(bounds);
                let secs = t.elapsed().as_secs_f64();
                let path = kg_path(&dir, &p.problem.id);
                let text = serde_json::to_string(&kg.export()).map_err(invalid)?;
                std::fs::write(&path, text).map_err(|e| io(format!("{}: {e}", path.display())))?;
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{secs:.2}",
                    p.problem.id,
                    kg.node_count(),
                    kg.edge_count(),
                    kg.truncated(),
                    kg.root_distance().map_or("unreachable".to_string(), |d| d.to_string()),
                )
                .map_err(io)?;
            }
            Ok(())
        }
        Command::Classify {
            corpus,
            problem,
            state,
            premise,
            conclusion,
            level,
            intermediate,
            step,
            rule,
            parents,
            bounds,
        } => {
            let bounds = bounds.apply(cfg.bounds);
            let (entry, base) = match (&corpus, &problem) {
                (Some(dir), Some(id)) => {
                    let c = Corpus::load(dir)?;
                    let p = c.problem(id).ok_or_else(|| invalid(format!("no problem {id:?}")))?.clone();
                    let base = match &state {
                        Some(sid) => {
                            let s = c.state(sid).ok_or_else(|| invalid(format!("no state {sid:?}")))?;
                            if s.state.problem().id != *id {
                                return Err(invalid(format!("state {sid} belongs to problem {}", s.state.problem().id)));
                            }
                            s.state.intermediates().to_vec()
                        }
                        None => Vec::new(),
                    };
                    (p, base)
                }
                (None, None) => {
                    let conclusion = conclusion.ok_or_else(|| invalid("--conclusion is required without --corpus"))?;
                    let premises = premise.iter().map(|t| formula(t)).collect::<Result<Vec<_>, _>>()?;
                    let p = ProofProblem::new("cli", premises, formula(&conclusion)?, level).map_err(invalid)?;
                    (CorpusProblem::new(p), Vec::new())
                }
                _ => return Err(invalid("--corpus and --problem go together")),
            };
            let mut steps = base;
            for text in &intermediate {
                steps.push(derivation_arg(text)?);
            }
            let state = ProofState::new(entry.problem.clone(), steps, &entry.config()).map_err(invalid)?;
            let kg = entry.build_kg(bounds);
            let step = formula(&step)?;
            let rule: RuleId = rule.parse().map_err(|_| invalid(format!("unknown rule {rule:?}")))?;
            let parents = split_formulas(&parents)?;
            let c = kg.classify_step(&state, &step, rule, &parents).map_err(invalid)?;
            writeln!(out, "{c}").map_err(io)?;
            if kg.truncated() {
                writeln!(err, "note: the graph was truncated at {} states", kg.node_count()).map_err(io)?;
            }
            Ok(())
        }
        Command::Run {
            corpus,
            kg_dir,
            kinds,
            out: path,
            concurrency,
            limit,
            bounds,
        } => {
            let kinds = kinds
                .split(',')
                .map(|k| PipelineKind::parse(k).ok_or_else(|| invalid(format!("unknown pipeline kind {k:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            // Credentials are checked before any state is touched.
            let backends = cfg.backend.backends().map_err(io)?;
            let corpus = Corpus::load(&corpus)?;
            let bounds = bounds.apply(cfg.bounds);
            let states: Vec<_> = corpus.states.iter().take(limit.unwrap_or(usize::MAX)).collect();
            let mut graphs: BTreeMap<String, Arc<KnowledgeGraph>> = BTreeMap::new();
            for s in &states {
                let id = &s.state.problem().id;
                if graphs.contains_key(id) {
                    continue;
                }
                let saved = kg_dir.as_ref().map(|d| kg_path(d, id)).filter(|p| p.exists());
                let kg = match saved {
                    Some(p) => load_kg(&p)?,
                    None => corpus.problem(id).expect("validated corpus").build_kg(bounds),
                };
                graphs.insert(id.clone(), Arc::new(kg));
            }
            let jobs: Vec<PipelineJob> = states
                .iter()
                .map(|s| PipelineJob {
                    state_id: s.id.clone(),
                    state: s.state.clone(),
                    kg: graphs[&s.state.problem().id].clone(),
                })
                .collect();
            let records = run_batch(&jobs, &kinds, &backends, concurrency.unwrap_or(cfg.concurrency).max(1));
            save_records(&records, &path)?;
            let failed = records.iter().filter(|r| !r.is_complete()).count();
            let review = records.iter().filter(|r| r.needs_review).count();
            let retries: usize = records.iter().map(|r| r.retries).sum();
            writeln!(
                out,
                "{} records ({} states x {} kinds), {failed} failed, {review} flagged for review, {retries} retries -> {}",
                records.len(),
                jobs.len(),
                kinds.len(),
                path.display()
            )
            .map_err(io)?;
            for r in &records {
                if let RecordStatus::Failed { stage, error } = &r.status {
                    writeln!(err, "{} {}: {stage}: {error}", r.state_id, r.pipeline.label()).map_err(io)?;
                }
            }
            Ok(())
        }
        Command::Report { records, format, edges, out: dest } => {
            let edges = match edges {
                Some(text) => text
                    .split(',')
                    .map(|e| e.trim().parse::<f64>().map_err(|_| invalid(format!("bad edge {e:?}"))))
                    .collect::<Result<Vec<_>, _>>()?,
                None => default_bucket_edges(),
            };
            let mut by_model: BTreeMap<String, Vec<_>> = BTreeMap::new();
            let mut skipped = 0;
            for path in &records {
                for r in load_records(path)? {
                    let model = r.backend_ids.get(&Role::Student).cloned().unwrap_or_else(|| "unknown".into());
                    match r.to_result() {
                        Some(res) => by_model.entry(model).or_default().push(res),
                        None => skipped += 1,
                    }
                }
            }
            let report = build_report(&by_model, &edges, &cfg.complexity).map_err(invalid)?;
            let text = match format {
                Format::Csv => format!("{}\n{}", report.to_csv(), report.buckets_csv()),
                Format::Json => report.to_json() + "\n",
            };
            match dest {
                Some(p) => std::fs::write(&p, text).map_err(|e| io(format!("{}: {e}", p.display())))?,
                None => out.write_all(text.as_bytes()).map_err(io)?,
            }
            if skipped > 0 {
                writeln!(err, "{skipped} failed records left out").map_err(io)?;
            }
            Ok(())
        }
        Command::Serve { corpus, addr, bounds } => {
            let corpus = Corpus::load(&corpus)?;
            let app = Arc::new(AppState::new(
                &corpus,
                bounds.apply(cfg.bounds),
                Duration::from_secs(cfg.session_ttl_secs),
            ));
            let rt = tokio::runtime::Runtime::new().map_err(io)?;
            rt.block_on(serve(app, &addr)).map_err(io)
        }
        Command::GenerateCorpus { out: dir, seed } => {
            let mut spec = SyntheticSpec::default();
            if let Some(s) = seed {
                spec.seed = s;
            }
            let corpus = generate(&spec).map_err(invalid)?;
            corpus.save(&dir)?;
            writeln!(
                out,
                "{} problems, {} states -> {}",
                corpus.problems.len(),
                corpus.states.len(),
                dir.display()
            )
            .map_err(io)?;
            Ok(())
        }
        Command::Summarize { corpus } => {
            let corpus = Corpus::load(&corpus)?;
            write!(out, "{}", summarize(&corpus)).map_err(io)?;
            Ok(())
        }
    }
}

fn formula(text: &str) -> Result<Formula, CliError> {
    parse(text).map_err(|e| invalid(format!("cannot parse {text:?}: {e}")))
}

fn split_formulas(text: &str) -> Result<Vec<Formula>, CliError> {
    text.split(';').map(str::trim).filter(|t| !t.is_empty()).map(formula).collect()
}

fn derivation_arg(text: &str) -> Result<Derivation, CliError> {
    let parts: Vec<&str> = text.split('/').map(str::trim).collect();
    let [statement, rule, parents] = parts[..] else {
        return Err(invalid(format!("--intermediate {text:?}: expected STATEMENT / RULE / PARENTS")));
    };
    let rule: RuleId = rule.parse().map_err(|_| invalid(format!("unknown rule {rule:?}")))?;
    Ok(Derivation::new(formula(statement)?, rule, split_formulas(parents)?))
}
