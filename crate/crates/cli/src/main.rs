//! `kgforge`: extract, induce, build, index, retrieve and evaluate.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kgforge::eval::Condition;
use kgforge::retrieval::{Method, Personalization};
use kgforge::GraphVariant;

/// Errors that pick their own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Upstream(String),
    #[error("{0}")]
    Data(String),
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_UPSTREAM: u8 = 2;
pub const EXIT_DATA: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "kgforge", about = "Knowledge-graph construction and graph retrieval", disable_version_flag = true)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Base URL of an OpenAI-compatible server.
    #[arg(long, global = true)]
    pub gateway_url: Option<String>,
    /// Answer model calls offline from the bundled rule table.
    #[arg(long, global = true)]
    pub mock: bool,
    /// Print version information as JSON and exit.
    #[arg(long)]
    pub version: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract triples from a JSON-lines corpus into a run directory.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        run: PathBuf,
    },
    /// Assemble the extracted batches into a graph.
    BuildGraph {
        #[arg(long)]
        run: PathBuf,
    },
    /// Induce concepts for the run's graph and attach them.
    Induce {
        #[arg(long)]
        run: PathBuf,
        /// Process slice `slice` of `slices`.
        #[arg(long)]
        slice: Option<usize>,
        #[arg(long)]
        slices: Option<usize>,
        /// Only this many randomly chosen batches of the slice.
        #[arg(long)]
        sample_batches: Option<usize>,
    },
    /// Embed nodes, edges and passages into vector indexes.
    Index {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<GraphVariant>,
    },
    /// Answer questions against the run's graph.
    Retrieve(RetrieveArgs),
    /// Compute evaluation metrics.
    Eval {
        #[command(subcommand)]
        suite: EvalSuite,
    },
    /// Node and edge counts of a graph.
    Stats {
        #[arg(long, conflicts_with = "graph")]
        run: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        /// Also run the conformance checks; exits 3 on violations.
        #[arg(long)]
        check: bool,
    },
    /// Print the effective configuration.
    Config {
        /// Print only the configuration hash.
        #[arg(long)]
        hash: bool,
    },
}

#[derive(Args, Debug)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_parser = parse_method, default_value = "ppr")]
    pub method: Method,
    #[arg(long, required_unless_present = "questions", conflicts_with = "questions")]
    pub question: Option<String>,
    /// JSON-lines file of `{"id", "question"}` objects.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Write JSON lines here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub initial_nodes: Option<usize>,
    #[arg(long)]
    pub top_n_edges: Option<usize>,
    #[arg(long)]
    pub weight_adjust: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, value_parser = parse_personalization)]
    pub personalization: Option<Personalization>,
    #[arg(long)]
    pub source_nodes: Option<usize>,
    #[arg(long)]
    pub sampling_area: Option<usize>,
    #[arg(long)]
    pub restart: Option<f64>,
    #[arg(long)]
    pub top_nodes: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum EvalSuite {
    /// EM, F1, PR@2 and PR@5 over a JSON-lines QA file.
    Qa {
        #[arg(long)]
        input: PathBuf,
        /// Retrieval output to join by id for predictions and passages.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Balanced accuracy and F1 over FELM-style segment labels.
    Felm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Generate questions from passages and answer them under a context condition.
    Mcq {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_parser = parse_condition, default_value = "passage")]
        condition: Condition,
        /// Use only the first N passages.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// BS-R and BS-C of induced concepts against gold types.
    Schema {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        concepts: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: kgforge::Error| e.to_string())
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse().map_err(|e: kgforge::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<GraphVariant, String> {
    match s {
        "entity" => Ok(GraphVariant::Entity),
        "entity-event" => Ok(GraphVariant::EntityEvent),
        "full" => Ok(GraphVariant::Full),
        _ => Err(format!("unknown graph variant {s:?} (entity, entity-event, full)")),
    }
}

fn parse_personalization(s: &str) -> Result<Personalization, String> {
    match s {
        "edges" => Ok(Personalization::Edges),
        "ner" => Ok(Personalization::Ner),
        _ => Err(format!("unknown personalization {s:?} (edges, ner)")),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<CliError>() {
        return match e {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Upstream(_) => EXIT_UPSTREAM,
            CliError::Data(_) => EXIT_DATA,
        };
    }
    if let Some(e) = err.downcast_ref::<kgforge::Error>() {
        use kgforge::Error as E;
        return match e {
            E::Config(_) | E::Io { .. } | E::NotFound(_) => EXIT_USAGE,
            E::Gateway(_) => EXIT_UPSTREAM,
            _ => EXIT_DATA,
        };
    }
    if err.downcast_ref::<kgforge::GatewayError>().is_some() {
        return EXIT_UPSTREAM;
    }
    if err.downcast_ref::<serde_json::Error>().is_some() {
        return EXIT_DATA;
    }
    EXIT_USAGE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
