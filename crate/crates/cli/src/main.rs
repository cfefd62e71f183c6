//! `specfix`: command-line surface for the specification-repair engine.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specfix_core::orchestrator::ReasoningStrategy;
use specfix_core::pipeline::TestAdapterConfig;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "specfix", version, about = "Specification-centric automated program repair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum StrategyArg {
    None,
    Minir,
    Maxr,
}

impl From<StrategyArg> for ReasoningStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::None => ReasoningStrategy::None,
            StrategyArg::Minir => ReasoningStrategy::MiniR,
            StrategyArg::Maxr => ReasoningStrategy::MaxR,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum AdapterArg {
    Scripted,
    Command,
}

/// Flags that override keys of the config document.
#[derive(Args)]
struct Overrides {
    /// Path to a JSON or TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Replay script: a JSON reply list, or a directory of <bug_id>.json.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    adapter: Option<AdapterArg>,
    /// Scripted adapter report file (with --adapter scripted).
    #[arg(long)]
    adapter_path: Option<PathBuf>,
    /// Command adapter program (with --adapter command).
    #[arg(long)]
    adapter_cmd: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    example_store: Option<PathBuf>,
    /// Allow minir/maxr without an example store.
    #[arg(long)]
    no_retrieval: bool,
    #[arg(long)]
    parallelism: Option<usize>,
}

impl Overrides {
    fn apply(&self) -> Result<RunConfig, String> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.strategy {
            c.strategy = s.into();
        }
        if let Some(n) = self.max_attempts {
            c.budget.max_attempts = n;
        }
        if let Some(n) = self.max_rounds {
            c.budget.max_feedback_rounds = n;
        }
        if let Some(p) = &self.replay {
            c.replay = Some(p.clone());
        }
        if let Some(kind) = self.adapter {
            c.adapter = Some(match kind {
                AdapterArg::Scripted => TestAdapterConfig::Scripted {
                    path: self
                        .adapter_path
                        .clone()
                        .ok_or("--adapter scripted requires --adapter-path")?,
                },
                AdapterArg::Command => TestAdapterConfig::Command {
                    program: self
                        .adapter_cmd
                        .clone()
                        .ok_or("--adapter command requires --adapter-cmd")?,
                    args: Vec::new(),
                    timeout_secs: specfix_core::pipeline::DEFAULT_ADAPTER_TIMEOUT_SECS,
                },
            });
        } else if let Some(path) = &self.adapter_path {
            c.adapter = Some(TestAdapterConfig::Scripted { path: path.clone() });
        }
        if let Some(dir) = &self.output_dir {
            c.output_dir = dir.clone();
        }
        if let Some(store) = &self.example_store {
            c.example_store = Some(store.clone());
        }
        if self.no_retrieval {
            c.no_retrieval = true;
        }
        if let Some(n) = self.parallelism {
            c.parallelism = n;
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Repair one bug end to end.
    Repair {
        /// Bug manifest (JSON).
        bug: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a whole corpus and emit the benchmark report.
    Evaluate {
        /// Corpus manifest: {"bugs": [paths...]}.
        corpus: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build an example store from a JSON array of repair triples.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transformation phase only; prints the flawed specification.
    Transform {
        bug: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Analysis tooling.
    Tool {
        #[command(subcommand)]
        command: ToolCommand,
    },
    /// Aggregate existing result directories into a report.
    Report {
        /// One or more result directories (each containing sessions/).
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Corpus manifest for project/scenario context.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Correctness annotation file (JSON: bug id -> bool).
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ToolCommand {
    /// Invoke one registered analysis tool with JSON args.
    Run {
        name: String,
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, default_value = "{}")]
        args: String,
    },
}

fn fail(message: String) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Repair { bug, overrides } => {
            let config = match overrides.apply() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match run::cmd_repair(&config, &bug) {
                Ok(session) => {
                    println!("{}", run::summarize(&session));
                    ExitCode::from(run::exit_code(&session) as u8)
                }
                Err(e) => fail(e.to_string()),
            }
        }
        Command::Evaluate { corpus, overrides } => {
            let config = match overrides.apply() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match report::cmd_evaluate(&config, &corpus) {
                Ok(bench) => {
                    print!("{}", report::render_text(&bench));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.to_string()),
            }
        }
        Command::Ingest { input, out } => match run::cmd_ingest(&input, &out) {
            Ok(n) => {
                println!("ingested {n} example(s) into {}", out.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.to_string()),
        },
        Command::Transform { bug, overrides } => {
            let config = match overrides.apply() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match run::cmd_transform(&config, &bug) {
                Ok(json) => {
                    println!("{json}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.to_string()),
            }
        }
        Command::Tool {
            command: ToolCommand::Run {
                name,
                workspace,
                args,
            },
        } => match run::cmd_tool_run(&workspace, &name, &args) {
            Ok(json) => {
                println!("{json}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.to_string()),
        },
        Command::Report {
            results,
            out,
            corpus,
            annotations,
        } => {
            let sessions: Vec<_> = match results
                .iter()
                .map(|d| report::load_sessions(d))
                .collect::<Result<Vec<_>, _>>()
            {
                Ok(s) => s.into_iter().flatten().collect(),
                Err(e) => return fail(e.to_string()),
            };
            let bugs = match &corpus {
                Some(path) => {
                    let paths = match report::load_corpus(path) {
                        Ok(p) => p,
                        Err(e) => return fail(e.to_string()),
                    };
                    match paths.iter().map(|p| run::load_bug(p)).collect() {
                        Ok(b) => b,
                        Err(e) => return fail(format!("{e}")),
                    }
                }
                None => Vec::new(),
            };
            let ann = match &annotations {
                Some(path) => match report::load_annotations(path) {
                    Ok(a) => Some(a),
                    Err(e) => return fail(e.to_string()),
                },
                None => None,
            };
            let mut bench = match report::build_report(&bugs, &sessions, ann.as_ref()) {
                Ok(b) => b,
                Err(e) => return fail(e.to_string()),
            };
            if results.len() > 1 {
                bench.overlap = match report::overlap_report(&results) {
                    Ok(o) => Some(o),
                    Err(e) => return fail(e.to_string()),
                };
            }
            if let Err(e) = report::write_report(&bench, &out) {
                return fail(e.to_string());
            }
            print!("{}", report::render_text(&bench));
            ExitCode::SUCCESS
        }
    }
}
