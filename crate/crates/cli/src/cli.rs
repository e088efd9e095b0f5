use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::harness::{
    run_appendix_a, run_check_bound, run_estimate, run_exact, run_hessian, run_multi_agent, run_sweep, thread_pool,
    EstimateConfig,
};
use crate::model_file::parse_model;
use crate::records::{write_results, write_sweep, Format};

#[derive(Debug, Parser)]
#[command(name = "pg-lab", version, about = "Exact and simulated average-reward policy gradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    #[arg(long)]
    pub steps: usize,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    /// Fill the wall_s column. Timings make the output nondeterministic.
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl RunArgs {
    fn config(&self) -> EstimateConfig {
        EstimateConfig { timing: self.timing, ..EstimateConfig::new(self.beta, self.steps, self.seeds.clone()) }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average reward, exact and discounted gradients, bias angle and bound.
    Exact {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.9")]
        beta: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Seeded estimator runs against the exact target.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// Use the truncated trace of this length instead of discounting.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        baseline: Option<f64>,
    },
    /// Bias angle and estimator variance across discount factors.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Both sides of the bias bound, with the spectral constants.
    CheckBound {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.99")]
        beta: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// The two-state example where fitting values by TD(1) picks the worse control.
    AppendixA {
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,0.99")]
        alpha: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Second-derivative estimates for softmax chains.
    Hessian {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Independent agents on one POMDP.
    MultiAgent {
        #[command(flatten)]
        run: RunArgs,
        /// Controls per agent; their product must equal the model's k_controls.
        #[arg(long, value_delimiter = ',', required = true)]
        agent_controls: Vec<usize>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        theta: Option<Vec<f64>>,
    },
}

fn open_output(output: &OutputArgs) -> CliResult<Box<dyn Write>> {
    match &output.out {
        Some(path) => {
            let f = File::create(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn emit(records: &[crate::records::ResultRecord], output: &OutputArgs) -> CliResult<()> {
    write_results(open_output(output)?, records, output.format)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Exact { model, beta, output } => emit(&run_exact(&parse_model(&model)?, &beta)?, &output),
        Command::Estimate { run, window, baseline } => {
            let spec = parse_model(&run.model)?;
            let cfg = EstimateConfig { window, baseline, ..run.config() };
            emit(&run_estimate(&spec, &cfg, &thread_pool()?)?, &run.output)
        }
        Command::Sweep { model, beta, steps, seeds, output } => {
            let spec = parse_model(&model)?;
            let rows = run_sweep(&spec, &beta, steps, &seeds, &thread_pool()?)?;
            write_sweep(open_output(&output)?, &rows, output.format)
        }
        Command::CheckBound { model, beta, output } => emit(&run_check_bound(&parse_model(&model)?, &beta)?, &output),
        Command::AppendixA { alpha, output } => emit(&run_appendix_a(&alpha)?, &output),
        Command::Hessian { run } => {
            let spec = parse_model(&run.model)?;
            emit(&run_hessian(&spec, &run.config(), &thread_pool()?)?, &run.output)
        }
        Command::MultiAgent { run, agent_controls, theta } => {
            let spec = parse_model(&run.model)?;
            let records = run_multi_agent(&spec, &agent_controls, theta.as_deref(), &run.config(), &thread_pool()?)?;
            emit(&records, &run.output)
        }
    }
}
