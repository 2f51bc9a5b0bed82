use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod dot;
mod inspect;
mod launch;

/// Build, inspect and run tensor stream pipelines.
#[derive(Debug, Parser)]
#[command(name = "nnpipe", version, about)]
struct Cli {
    /// Default log filter when RUST_LOG is unset (error, warn, info, debug, trace).
    #[arg(long, global = true, env = "NNPIPE_LOG", default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, validate and run a pipeline description.
    Launch(LaunchOptions),
    /// List element kinds, or describe one kind.
    Inspect {
        kind: Option<String>,
    },
    /// Write the validated topology of a description as DOT.
    Graph {
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(required = true, num_args = 1.., allow_hyphen_values = true)]
        description: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct LaunchOptions {
    /// Stop once every sink has received this many frames.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub frames: Option<u64>,
    /// Print element counters every S seconds.
    #[arg(long, value_name = "S", value_parser = positive_seconds)]
    pub stats: Option<f64>,
    /// Log at debug level and print the final summary even without --stats.
    #[arg(short, long)]
    pub verbose: bool,
    /// Also write the validated topology as DOT to PATH.
    #[arg(long, value_name = "PATH")]
    pub dump_graph: Option<PathBuf>,
    /// Pipeline description; several arguments are joined with spaces.
    #[arg(required = true, num_args = 1.., allow_hyphen_values = true)]
    pub description: Vec<String>,
}

fn positive_seconds(raw: &str) -> Result<f64, String> {
    match raw.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{raw}' is not a positive number of seconds")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { launch::EXIT_INVALID } else { launch::EXIT_OK });
        }
    };
    let level = match &cli.command {
        Command::Launch(o) if o.verbose => "debug",
        _ => cli.log_level.as_str(),
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match cli.command {
        Command::Launch(options) => launch::run(&options),
        Command::Inspect { kind } => inspect::run(kind.as_deref()),
        Command::Graph { output, description } => dot::run(&description.join(" "), output.as_deref()),
    };
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_interval_must_be_positive() {
        assert_eq!(positive_seconds("0.5"), Ok(0.5));
        assert!(positive_seconds("0").is_err());
        assert!(positive_seconds("inf").is_err());
        assert!(positive_seconds("x").is_err());
    }

    #[test]
    fn launch_options_parse() {
        let cli = Cli::try_parse_from(["nnpipe", "launch", "--frames", "5", "--dump-graph", "g.dot", "queue", "!", "tee"])
            .unwrap();
        let Command::Launch(o) = cli.command else { panic!("not launch") };
        assert_eq!(o.frames, Some(5));
        assert_eq!(o.description.join(" "), "queue ! tee");
        assert_eq!(o.dump_graph.as_deref(), Some(std::path::Path::new("g.dot")));
    }
}
