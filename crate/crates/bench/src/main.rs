use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strata_bench::report::render_markdown;
use strata_bench::{
    build_db, build_kb, builtin_task, replay, run_benchmark, BenchError, BenchmarkConfig, BenchmarkReport, EmbedderKind,
    LlmKind, SimKind, Workbench,
};
use strata_core::memory::MemoryStore;

#[derive(Parser)]
#[command(name = "strata", version, about = "Closed-loop op-amp design agents and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark task once.
    Run {
        #[arg(long)]
        task: u32,
        #[arg(long, default_value_t = 0)]
        trial: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Run the benchmark and write runs/report.{json,md}.
    Bench {
        /// Comma-separated task numbers.
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<u32>>,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        persist_memory: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Build the topology index.
    Db {
        #[command(subcommand)]
        action: BuildAction,
    },
    /// Build the knowledge index.
    Kb {
        #[command(subcommand)]
        action: BuildAction,
    },
    /// Print a stored report as a table.
    Report {
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Replay the walk-through fixtures end to end. `--fixtures` defaults to
    /// `<data>/fixtures/walkthrough`.
    Replay {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum BuildAction {
    Build {
        /// Corpus or document directory.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Flags shared by the run-style commands. Each one overrides the config file.
#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<u32>,
    #[arg(long)]
    disable_em: bool,
    #[arg(long)]
    disable_io: bool,
    #[arg(long)]
    disable_knowledge: bool,
    #[arg(long, value_enum)]
    llm: Option<LlmKind>,
    #[arg(long, value_enum)]
    sim: Option<SimKind>,
    #[arg(long, value_enum)]
    embedder: Option<EmbedderKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    topology_index: Option<PathBuf>,
    #[arg(long)]
    knowledge_index: Option<PathBuf>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Optimizer evaluations after the initial design.
    #[arg(long)]
    bo_iterations: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<BenchmarkConfig, BenchError> {
        let mut c = match &self.config {
            Some(path) => BenchmarkConfig::load(path)?,
            None => BenchmarkConfig::default(),
        };
        if let Some(v) = self.max_iterations {
            c.max_iterations = v;
        }
        c.ablations.disable_em |= self.disable_em;
        c.ablations.disable_io |= self.disable_io;
        c.ablations.disable_knowledge |= self.disable_knowledge;
        if let Some(v) = self.llm {
            c.llm = v;
        }
        if let Some(v) = self.sim {
            c.sim = v;
        }
        if let Some(v) = self.embedder {
            c.embedder = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.data {
            c.data_dir = v.clone();
        }
        if let Some(v) = &self.out {
            c.out_dir = v.clone();
        }
        if let Some(v) = &self.topology_index {
            c.topology_index = Some(v.clone());
        }
        if let Some(v) = &self.knowledge_index {
            c.knowledge_index = Some(v.clone());
        }
        if let Some(v) = &self.fixtures {
            c.fixtures = Some(v.clone());
        }
        if let Some(v) = self.bo_iterations {
            c.bo.n_iterations = v;
        }
        Ok(c)
    }
}

fn execute(command: Command) -> Result<ExitCode, BenchError> {
    match command {
        Command::Run { task, trial, common } => {
            let config = common.resolve()?;
            let spec = builtin_task(task).ok_or_else(|| BenchError::Config(format!("unknown task {task}")))?;
            let bench = Workbench::new(&config)?;
            let mut memory = MemoryStore::in_memory()
                .with_layers(!config.ablations.disable_em, !config.ablations.disable_io);
            let result = bench.run_task(&config, &spec, &mut memory, trial, config.seed)?;
            println!(
                "{} {} after {} iteration(s) on {}",
                spec.task_id(),
                if result.passed { "PASS" } else { "FAIL" },
                result.iterations_used,
                result.topology_id.as_deref().unwrap_or("no topology")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { tasks, trials, k, persist_memory, common } => {
            let mut config = common.resolve()?;
            if let Some(v) = tasks {
                config.tasks = v;
            }
            if let Some(v) = trials {
                config.trials = v;
            }
            if let Some(v) = k {
                config.k = v;
            }
            config.persist_memory |= persist_memory;
            let report = run_benchmark(&config)?;
            print!("{}", render_markdown(&report));
            Ok(if report.failed_trials() > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Db { action: BuildAction::Build { input, output, common } } => {
            let config = common.resolve()?;
            let input = input.unwrap_or_else(|| config.data_dir.join("topologies"));
            let output = output.unwrap_or_else(|| config.out_dir.join("topologies.idx"));
            let db = build_db(&config, &input, &output)?;
            println!("indexed {} topologies into {}", db.len(), output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Kb { action: BuildAction::Build { input, output, common } } => {
            let config = common.resolve()?;
            let input = input.unwrap_or_else(|| config.data_dir.join("docs"));
            let output = output.unwrap_or_else(|| config.out_dir.join("knowledge.idx"));
            let kb = build_kb(&config, &input, &output)?;
            println!("indexed {} chunks into {}", kb.chunks.len(), output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { out } => {
            print!("{}", render_markdown(&BenchmarkReport::load(&out)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { common } => {
            let config = common.resolve()?;
            let fixtures = config.fixtures.clone().unwrap_or_else(|| config.data_dir.join("fixtures/walkthrough"));
            let result = replay(&config, &fixtures)?;
            if result.passed {
                println!("PASS after {} iterations", result.iterations_used);
                Ok(ExitCode::SUCCESS)
            } else {
                println!("FAIL after {} iterations", result.iterations_used);
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
