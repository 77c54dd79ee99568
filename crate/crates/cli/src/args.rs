use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "fedxfer",
    version,
    about = "Two-party federated transfer learning for intrusion detection",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its schema.
    GenData(GenDataArgs),
    /// Split a dataset into the two party views.
    Split(RunArgs),
    /// Train both parties in one process and score B's evaluation rows.
    TrainFtl(TrainArgs),
    /// Run the autoencoder + 2-means baseline on B's view.
    TrainUdl(RunArgs),
    /// Party A over TCP: listen, train, then answer prediction requests.
    ServeA(ServeAArgs),
    /// Party B over TCP: dial, train, then score the evaluation rows.
    ServeB(ServeBArgs),
    /// Repeated seeded runs of both methods with significance numbers.
    Experiment(ExperimentArgs),
    /// Re-render a report.json as CSV and a plain-text table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Case {
    #[value(name = "CASE1", alias = "case1")]
    Case1,
    #[value(name = "CASE2", alias = "case2")]
    Case2,
}

impl Case {
    /// `(labeled, unlabeled)` sample counts.
    pub fn sizes(self) -> (usize, usize) {
        match self {
            Case::Case1 => (9577, 2000),
            Case::Case2 => (47893, 10000),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory; nothing is written anywhere else.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with defaults; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Built-in synthetic preset (weak-target, easy, no-signal).
    #[arg(long, conflicts_with_all = ["data", "schema"])]
    pub synthetic: Option<String>,
    /// CSV file to load; needs --schema.
    #[arg(long, requires = "schema")]
    pub data: Option<PathBuf>,
    /// Bundled schema name (kdd, nsl_kdd, unsw_nb15, n_baiot) or a JSON path.
    #[arg(long)]
    pub schema: Option<String>,
    /// Labeled/unlabeled sample counts of a standard experiment scale.
    #[arg(long, value_enum, conflicts_with_all = ["labeled", "unlabeled"])]
    pub case: Option<Case>,
    #[arg(long)]
    pub labeled: Option<usize>,
    #[arg(long)]
    pub unlabeled: Option<usize>,
    /// Shared fraction of the smaller party.
    #[arg(long)]
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// squared_distance or negative_inner_product.
    #[arg(long)]
    pub alignment: Option<String>,
    /// Also send raw gradient frames every iteration.
    #[arg(long)]
    pub faithful_exchange: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "weak-target")]
    pub synthetic: String,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeAArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Address to listen on, e.g. 127.0.0.1:9000.
    #[arg(long)]
    pub listen: String,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ServeBArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Address of party A.
    #[arg(long)]
    pub peer: String,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Comma-separated subset of FTL,UDL.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// A report.json written by `experiment`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
