mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::TrainFlags;

#[derive(Debug, Parser)]
#[command(name = "relkit", version, about = "Relation decoders: tensor-network compression, cross-evaluation and baselines")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the addition/subtraction dataset as JSON.
    GenData(GenDataArgs),
    /// Generate a synthetic embedding store and its dataset.
    GenStore(GenStoreArgs),
    /// Train one tensor-network model.
    Train(TrainArgs),
    /// Train every configuration of a grid and tabulate parameter counts against faithfulness.
    Grid(GridArgs),
    /// Score a trained model on every relation of a dataset.
    Eval(EvalArgs),
    /// Score every relation's decoder on every relation's samples.
    CrossEval(CrossEvalArgs),
    /// Finite-difference Jacobian decoders on a synthetic teacher.
    Jacobian(JacobianArgs),
    /// Copy a store with relation or entity vectors replaced by random draws.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataKind {
    Math,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "math")]
    pub kind: DataKind,
    #[arg(long, default_value_t = 200)]
    pub number_max: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StoreKind {
    Mathramp,
    Orthogonal,
    Shared,
}

/// `2x3` is two groups of three relations; `1,2,3` lists group sizes.
pub fn parse_groups(s: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("invalid group layout `{s}` (expected e.g. 2x3 or 3,3)");
    let groups: Vec<usize> = if let Some((n, k)) = s.split_once('x') {
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        vec![k; n]
    } else {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if groups.is_empty() || groups.contains(&0) {
        return Err(bad());
    }
    Ok(groups)
}

pub fn parse_xyz(s: &str) -> Result<(usize, usize, usize), String> {
    let v: Vec<usize> = s.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>().map_err(|_| format!("invalid x,y,z `{s}`"))?;
    match v[..] {
        [x, y, z] => Ok((x, y, z)),
        _ => Err(format!("expected three comma-separated sizes, got `{s}`")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    #[arg(long, value_enum)]
    pub kind: StoreKind,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Entity jitter; defaults to 0 for mathramp and 0.1 for shared.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Orthogonal: number of relations.
    #[arg(long, default_value_t = 8)]
    pub relations: usize,
    /// Orthogonal: samples per relation.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Shared: group layout such as `2x3`.
    #[arg(long, value_parser = parse_groups, default_value = "2x3")]
    pub groups: std::vec::Vec<usize>,
    /// Shared: object classes per group.
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    /// Shared: subjects per class.
    #[arg(long, default_value_t = 4)]
    pub per_class: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenStoreArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset JSON path; defaults to the store path with a `.json` extension.
    #[arg(long)]
    pub data_out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    None,
    Relation,
    Sample,
}

#[derive(Debug, Clone, Args)]
pub struct DataFlags {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub split: SplitKind,
    /// Share of relations (or samples) kept for training.
    #[arg(long, default_value_t = 0.75)]
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArchFlag {
    Simple,
    Triangle,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long, value_enum)]
    pub arch: Option<ArchFlag>,
    #[arg(long)]
    pub ds: Option<usize>,
    #[arg(long)]
    pub dr: Option<usize>,
    #[arg(long = "do")]
    pub dobj: Option<usize>,
    /// Triangle core sizes `x,y,z`.
    #[arg(long, value_parser = parse_xyz)]
    pub xyz: Option<(usize, usize, usize)>,
    #[arg(long)]
    pub embedder: bool,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Per-relation faithfulness CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbedderChoice {
    Off,
    On,
    Both,
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|p| p.trim().parse().map_err(|_| format!("invalid list `{s}`"))).collect()
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataFlags,
    /// Architectures to search; defaults to both.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub kinds: Vec<ArchFlag>,
    #[arg(long, value_parser = parse_list, default_value = "2,4,6,8,30,100")]
    pub dr: std::vec::Vec<usize>,
    /// Values used for both d_s' and d_o'.
    #[arg(long, value_parser = parse_list, default_value = "10,50,100,300")]
    pub dso: std::vec::Vec<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub embedder: EmbedderChoice,
    #[arg(long, value_parser = parse_xyz, default_value = "50,50,50")]
    pub xyz: (usize, usize, usize),
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also fit per-relation low-rank decoders at these ranks.
    #[arg(long, value_parser = parse_list)]
    pub low_rank: Option<std::vec::Vec<usize>>,
    #[arg(long, requires = "low_rank")]
    pub low_rank_out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitKind {
    Full,
    LowRank,
}

#[derive(Debug, Args)]
pub struct CrossEvalArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Decoders materialized from a trained model.
    #[arg(long, conflicts_with = "fit", required_unless_present = "fit")]
    pub model: Option<PathBuf>,
    /// Fit one decoder per relation instead.
    #[arg(long, value_enum)]
    pub fit: Option<FitKind>,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Order the heatmap by average-linkage clustering of the rows.
    #[arg(long)]
    pub cluster: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JacobianArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    #[arg(long, default_value_t = 8)]
    pub n_examples: usize,
    #[arg(long, default_value_t = relkit::baselines::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Randomize {
    Relations,
    Entities,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_enum)]
    pub randomize: Randomize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::GenStore(a) => commands::gen_store(a),
        Command::Train(a) => commands::train(a),
        Command::Grid(a) => commands::grid(a),
        Command::Eval(a) => commands::eval(a),
        Command::CrossEval(a) => commands::cross_eval(a),
        Command::Jacobian(a) => commands::jacobian(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
