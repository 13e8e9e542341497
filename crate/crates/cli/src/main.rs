//! `dtc`: prepare flow tables, rank features, train and evaluate single
//! stages or the full three-stage classifier, and emit comparison tables.

mod commands;
mod config;
mod error;
mod outputs;
mod prepared;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dtc_core::data::ImputeStrategy;
use dtc_core::eval::ReportFormat;
use dtc_core::pipeline::Routing;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dtc", version, about = "Multistage darknet traffic classifier", long_about = None)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run config; flags take precedence over its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, required by every command that trains, splits or generates
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory [default: dtc-out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Format of comparison tables [default: csv]
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads: a positive count or "auto"
    #[arg(long, global = true, value_name = "N|auto", default_value = "auto", value_parser = parse_threads)]
    threads: Threads,
}

#[derive(Debug, Clone, Copy)]
enum Threads {
    Auto,
    Count(usize),
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Threads::Count(n)),
        _ => Err(format!("expected a positive integer or \"auto\", got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Text,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Text => ReportFormat::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ImputeArg {
    Median,
    Drop,
}

impl From<ImputeArg> for ImputeStrategy {
    fn from(a: ImputeArg) -> Self {
        match a {
            ImputeArg::Median => ImputeStrategy::MedianPerFeature,
            ImputeArg::Drop => ImputeStrategy::DropRow,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoutingArg {
    Independent,
    Cascade,
}

impl From<RoutingArg> for Routing {
    fn from(r: RoutingArg) -> Self {
        match r {
            RoutingArg::Independent => Routing::Independent,
            RoutingArg::Cascade => Routing::Cascade,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the seeded synthetic three-stage dataset
    Synth {
        #[arg(long, default_value_t = 5000)]
        rows: usize,
        /// Class mean shift of informative columns, in standard deviations
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        /// File name inside the output directory
        #[arg(long, default_value = "synth.csv")]
        name: String,
    },
    /// Clean a raw flow CSV into a prepared table plus manifest
    Prep {
        /// Raw flow CSV
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        /// Schema JSON (falls back to the config's `schema`)
        #[arg(long, value_name = "PATH")]
        schema: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "median")]
        impute: ImputeArg,
        /// Also write a stratified train/test split with this test share
        #[arg(long, value_name = "FRACTION")]
        test_fraction: Option<f64>,
    },
    /// Score and rank features for one stage
    Rank {
        /// Prepared CSV (falls back to the config's `data`)
        #[arg(long, value_name = "CSV")]
        data: Option<PathBuf>,
        #[arg(long, default_value = "stage1")]
        stage: String,
        /// info_gain, fisher, chi_square or all
        #[arg(long, default_value = "all")]
        method: String,
        /// Equal-frequency bins for info_gain and chi_square
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Train one stage model
    Train {
        /// Prepared CSV (falls back to the config's `data`)
        #[arg(long, value_name = "CSV")]
        data: Option<PathBuf>,
        #[arg(long, default_value = "stage1")]
        stage: String,
        /// Learner kind, overriding the config's stage spec [default: decision_tree]
        #[arg(long)]
        learner: Option<String>,
    },
    /// Evaluate a stage model on a prepared CSV
    Eval {
        /// Model file written by `train`
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Prepared CSV (falls back to the config's `test_data`, then `data`)
        #[arg(long, value_name = "CSV")]
        data: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation of one stage
    Cv {
        /// Prepared CSV (falls back to the config's `data`)
        #[arg(long, value_name = "CSV")]
        data: Option<PathBuf>,
        #[arg(long, default_value = "stage1")]
        stage: String,
        /// Learner kind [default: the config's, else decision_tree]
        #[arg(long)]
        learner: Option<String>,
        /// Number of folds [default: the config's `folds`, else 5]
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Train or evaluate the three-stage pipeline
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Train every configured learner at every stage and tabulate test metrics
    Report {
        /// Training CSV (falls back to the config's `data`)
        #[arg(long, value_name = "CSV")]
        train: Option<PathBuf>,
        /// Test CSV; without one, a stratified hold-out of the training CSV is used
        #[arg(long, value_name = "CSV")]
        test: Option<PathBuf>,
        /// Stages to include [default: every stage labelled in the data]
        #[arg(long, value_delimiter = ',')]
        stages: Vec<String>,
        /// Learner kinds [default: the config's `learners`, else all six]
        #[arg(long, value_delimiter = ',')]
        learners: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
enum PipelineCommand {
    /// Train all three stages
    Train {
        /// Prepared CSV (falls back to the config's `data`)
        #[arg(long, value_name = "CSV")]
        data: Option<PathBuf>,
        /// Prediction routing [default: the config's, else cascade]
        #[arg(long, value_enum)]
        routing: Option<RoutingArg>,
        /// Stage-1 class that sends a row on to stages 2 and 3 [default: Malicious]
        #[arg(long)]
        gate: Option<String>,
    },
    /// Evaluate a trained pipeline stage by stage and count cascade paths
    Eval {
        /// Pipeline file written by `pipeline train`
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Prepared CSV (falls back to the config's `test_data`, then `data`)
        #[arg(long, value_name = "CSV")]
        data: Option<PathBuf>,
        /// Override the stored routing mode
        #[arg(long, value_enum)]
        routing: Option<RoutingArg>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Threads::Count(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Context::new(
        cli.global.config.as_deref(),
        cli.global.seed,
        cli.global.out,
        cli.global.format.map(Into::into),
    )?;
    match cli.command {
        Command::Synth { rows, separation, name } => commands::synth(&ctx, rows, separation, &name),
        Command::Prep {
            input,
            schema,
            impute,
            test_fraction,
        } => commands::prep(&ctx, &input, schema, impute.into(), test_fraction),
        Command::Rank {
            data,
            stage,
            method,
            bins,
        } => commands::rank(&ctx, data, &stage, &method, bins),
        Command::Train { data, stage, learner } => commands::train(&ctx, data, &stage, learner.as_deref()),
        Command::Eval { model, data } => commands::eval(&ctx, &model, data),
        Command::Cv {
            data,
            stage,
            learner,
            folds,
        } => commands::cv(&ctx, data, &stage, learner.as_deref(), folds),
        Command::Pipeline { command } => match command {
            PipelineCommand::Train { data, routing, gate } => {
                commands::pipeline_train(&ctx, data, routing.map(Into::into), gate)
            }
            PipelineCommand::Eval { model, data, routing } => {
                commands::pipeline_eval(&ctx, &model, data, routing.map(Into::into))
            }
        },
        Command::Report {
            train,
            test,
            stages,
            learners,
        } => commands::report(&ctx, train, test, &stages, &learners),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage mistakes are config errors; --help and --version are not errors
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dtc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn thread_flag_parsing() {
        assert!(matches!(parse_threads("auto"), Ok(Threads::Auto)));
        assert!(matches!(parse_threads("4"), Ok(Threads::Count(4))));
        assert!(parse_threads("0").is_err());
    }
}
