use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clustercount::agent::{AgentKind, ClusterMode};
use clustercount::envsim::{ObsMode, RewardRegime};
use clustercount::error::Error;
use clustercount::harness::{self, EncoderKind, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "clustercount",
    version,
    about = "Cluster-based pseudo-count exploration experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment for every configured seed.
    Run(Overrides),
    /// Sweep the similarity threshold.
    AblateKappa {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated thresholds.
        #[arg(long, value_delimiter = ',', required = true)]
        kappas: Vec<f64>,
        /// Replay this embedding trace at each threshold instead of running.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Paired runs with and without episodic clustering.
    AblateEpisodic(Overrides),
    /// Recompute rewards and the table from a recorded embedding trace.
    ReplayTrace {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        no_episodic_clustering: bool,
    },
    /// Print a table snapshot as text.
    DumpTable {
        #[arg(long)]
        table: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    total_steps: Option<usize>,
    /// Output directory; defaults to `$CLUSTERCOUNT_OUTPUT_ROOT/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    encoder: Option<EncoderArg>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    encoder_seed: Option<u64>,
    #[arg(long)]
    embedding_trace: Option<PathBuf>,
    #[arg(long)]
    dump_gmm: bool,
    #[arg(long)]
    step_stream: bool,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    ir_scale: Option<f64>,
    #[arg(long)]
    no_episodic_clustering: bool,
    #[arg(long)]
    oracle_mode: bool,
    #[arg(long, value_enum)]
    env: Option<EnvArg>,
    #[arg(long)]
    noisy_tv: bool,
    #[arg(long)]
    maze_seed: Option<u64>,
    #[arg(long)]
    rooms: Option<usize>,
    /// Agent steps per episode.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_enum)]
    agent: Option<AgentArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EncoderArg {
    Random,
    Identity,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EnvArg {
    Maze,
    Tabular,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AgentArg {
    Random,
    Qlearning,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RegimeArg {
    SparseExtrinsic,
    IntrinsicOnly,
}

fn load(path: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), ExperimentConfig::load)
}

impl Overrides {
    fn apply(&self) -> Result<ExperimentConfig, Error> {
        let mut c = load(self.config.as_ref())?;
        if let Some(s) = &self.seeds {
            c.seeds = s.clone();
        }
        if let Some(v) = self.total_steps {
            c.total_steps = v;
        }
        if let Some(v) = &self.out {
            c.output_dir = Some(v.clone());
        }
        if let Some(v) = self.encoder {
            c.encoder.kind = match v {
                EncoderArg::Random => EncoderKind::Random,
                EncoderArg::Identity => EncoderKind::Identity,
            };
        }
        if let Some(v) = self.embed_dim {
            c.encoder.embed_dim = v;
        }
        if let Some(v) = self.encoder_seed {
            c.encoder.seed = Some(v);
        }
        if let Some(v) = &self.embedding_trace {
            c.output.embedding_trace = Some(v.clone());
        }
        c.output.dump_gmm |= self.dump_gmm;
        c.output.step_stream |= self.step_stream;
        if let Some(v) = self.kappa {
            c.kappa = v;
        }
        if let Some(v) = self.ir_scale {
            c.ir_scale = v;
        }
        if self.no_episodic_clustering {
            c.clustering.mode = ClusterMode::Passthrough;
        }
        c.oracle_mode |= self.oracle_mode;
        if let Some(v) = self.env {
            c.env.kind = match v {
                EnvArg::Maze => ObsMode::Maze,
                EnvArg::Tabular => ObsMode::Tabular,
            };
        }
        c.env.noisy_tv |= self.noisy_tv;
        if let Some(v) = self.maze_seed {
            c.env.maze_seed = Some(v);
        }
        if let Some(v) = self.rooms {
            c.env.maze.rooms = v;
        }
        if let Some(v) = self.horizon {
            c.env.maze.episode_length = v
                .checked_mul(c.env.maze.frame_skip)
                .ok_or_else(|| Error::InvalidArgument(format!("horizon {v} too large")))?;
        }
        if let Some(v) = self.agent {
            c.agent.kind = match v {
                AgentArg::Random => AgentKind::Random,
                AgentArg::Qlearning => AgentKind::Qlearning,
            };
        }
        if let Some(v) = self.alpha {
            c.agent.alpha = v;
        }
        if let Some(v) = self.gamma {
            c.agent.gamma = v;
        }
        if let Some(v) = self.epsilon {
            c.agent.epsilon = v;
        }
        if let Some(v) = self.regime {
            c.regime = match v {
                RegimeArg::SparseExtrinsic => RewardRegime::SparseExtrinsic,
                RegimeArg::IntrinsicOnly => RewardRegime::IntrinsicOnly,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn print_runs(runs: &[harness::RunSummary]) {
    for r in runs {
        println!(
            "seed {} steps {} episodes {} unique_visits {} table_size {} goals {}",
            r.seed, r.steps, r.episodes, r.unique_visits, r.table_size, r.goals
        );
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(o) => {
            let c = o.apply()?;
            print_runs(&harness::run(&c)?);
            println!("output {}", c.output_dir().display());
        }
        Command::AblateKappa {
            overrides,
            kappas,
            corpus,
        } => {
            let c = overrides.apply()?;
            if let Some(bad) = kappas.iter().find(|k| !(0.0..=1.0).contains(*k)) {
                return Err(Error::InvalidArgument(format!(
                    "kappa must lie in [0, 1], got {bad}"
                )));
            }
            for r in harness::ablate_kappa(&c, &kappas, corpus.as_deref())? {
                print!(
                    "kappa {} table_size_median {}",
                    r.kappa, r.table_size.median
                );
                if let Some(v) = r.unique_visits {
                    print!(" unique_visits_median {}", v.median);
                }
                println!();
            }
        }
        Command::AblateEpisodic(o) => {
            let c = o.apply()?;
            for r in harness::ablate_episodic(&c)? {
                println!(
                    "seed {} variant {} table_size {} unique_visits {}",
                    r.seed,
                    r.variant.name(),
                    r.table_size,
                    r.unique_visits
                );
            }
        }
        Command::ReplayTrace {
            trace,
            out,
            config,
            kappa,
            no_episodic_clustering,
        } => {
            let mut c = load(config.as_ref())?;
            if let Some(k) = kappa {
                c.kappa = k;
            }
            if no_episodic_clustering {
                c.clustering.mode = ClusterMode::Passthrough;
            }
            c.validate()?;
            let (rewards, table) = harness::replay(&trace, &c.clustering, c.kappa, &out)?;
            println!("episodes {} table_size {}", rewards.len(), table.len());
        }
        Command::DumpTable { table } => print!("{}", harness::dump_table(&table)?),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::InvalidArgument(_) => 2,
        Error::Io { .. } => 3,
        Error::Parse { .. } | Error::Data(_) => 4,
        Error::Numerical(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
