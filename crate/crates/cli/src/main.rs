mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "qnlearn",
    version,
    about = "Learn closed queuing-network models from queue-length traces and query them"
)]
pub struct Cli {
    /// Service URL. Without it an in-process server is started.
    #[arg(long, global = true)]
    pub server: Option<String>,

    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory that receives output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone, Copy)]
pub struct GridArgs {
    /// Sampling step.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,

    /// Number of grid points, including t = 0.
    #[arg(short = 'H', long = "points")]
    pub points: Option<usize>,

    /// Horizon; the grid then has T / dt + 1 points.
    #[arg(short = 'T', long = "horizon")]
    pub horizon: Option<f64>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate synthetic traces from a model and write a dataset.
    Generate {
        /// Ground-truth model JSON.
        #[arg(long, required_unless_present = "random_stations")]
        model: Option<PathBuf>,
        /// Draw a random benchmark network with this many stations instead.
        #[arg(long, conflicts_with = "model")]
        random_stations: Option<usize>,
        /// Generation settings JSON (traces, x0_range, replications, dt, H or T).
        #[arg(long)]
        config: PathBuf,
    },
    /// Average stochastic simulations from one initial population.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Initial queue lengths, comma separated.
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 1)]
        replications: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Fit routing probabilities and service rates to a dataset.
    Train {
        /// Dataset manifest or the directory holding it.
        #[arg(long)]
        dataset: PathBuf,
        /// Training settings JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Server counts overriding the manifest, comma separated.
        #[arg(long)]
        servers: Option<String>,
    },
    /// Fluid prediction from an initial state.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x0: String,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Prediction under changed servers, routing or population.
    Whatif {
        #[arg(long)]
        model: PathBuf,
        /// Scenario JSON: {"x0": [...], "overrides": {"s": .., "P": .., "k": ..}}.
        #[arg(long)]
        scenario: PathBuf,
        /// Measured trace CSV to score the prediction against.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Score a model against measured traces.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Dataset manifest or directory.
        #[arg(long, required_unless_present = "traces")]
        dataset: Option<PathBuf>,
        /// Individual trace CSVs.
        #[arg(long, num_args = 1.., conflicts_with = "dataset")]
        traces: Vec<PathBuf>,
    },
    /// Re-express a model with prescribed self-loop probabilities.
    TransformSelfloop {
        /// Model JSON; its routing may contain self loops.
        #[arg(long)]
        model: PathBuf,
        /// Target self-loop probabilities, comma separated, each in [0, 1).
        #[arg(long)]
        pi: String,
    },
    /// Steady-state bottleneck, optionally relieved by adding servers.
    Bottleneck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Servers added per round until the bottleneck moves.
        #[arg(long)]
        server_step: Option<u32>,
    },
    /// Learn random networks and score what-if predictions.
    Benchmark {
        /// Benchmark settings JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Build a dataset from externally measured trace CSVs.
    Ingest {
        /// Server counts of the measured system, comma separated.
        #[arg(long)]
        servers: String,
        /// Expected number of rows per trace.
        #[arg(short = 'H', long = "points")]
        points: Option<usize>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
