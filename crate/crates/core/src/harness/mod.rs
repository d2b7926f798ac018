//! Experiment orchestration: seeded runs, ablation sweeps and trace replay.
//!
//! Output layout of a run directory:
//!
//! ```text
//! config.resolved.toml     fully resolved configuration
//! metrics_seed<S>.csv      one row per evaluation point
//! steps_seed<S>.jsonl      per-step stream (optional)
//! gmm_seed<S>.txt          per-episode mixture dumps (optional)
//! table_seed<S>.bin        final global cluster table
//! summary.csv              one row per seed plus mean/min/max rows
//! ```
//!
//! Seeds fan out to components with [`crate::rng::derive_seed`]: the agent,
//! noise frames, maze layout and encoder each use their own stream.

mod config;

pub use config::{
    EncoderConfig, EncoderKind, EnvConfig, ExperimentConfig, OutputConfig, DEFAULT_OUTPUT_ROOT,
    OUTPUT_ROOT_ENV,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{
    intrinsic_rewards, run_episode, Agent, AgentConfig, ClusterConfig, ClusterMode, EpisodeOptions,
    StepRecord,
};
use crate::embedding::trace::{read_trace, write_trace, EmbeddingTrace, TraceEpisode};
use crate::envsim::{generate, MazeEnv, VisitationCounter};
use crate::error::{Error, Result};
use crate::pseudocount::{
    table_restore, table_snapshot, GlobalClusterTable, RewardTrace, DEFAULT_KAPPA,
};
use crate::rng::{derive_seed, Stream};

pub const METRICS_HEADER: [&str; 8] = [
    "episode",
    "step",
    "episode_steps",
    "extrinsic_return",
    "mean_intrinsic",
    "unique_visits",
    "table_size",
    "episodic_clusters",
];
pub const REWARDS_HEADER: [&str; 6] = [
    "episode",
    "step",
    "intrinsic",
    "pseudo_count",
    "global_index",
    "episodic_label",
];

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_seed{seed}.csv"))
}

pub fn table_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("table_seed{seed}.bin"))
}

pub fn steps_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("steps_seed{seed}.jsonl"))
}

pub fn gmm_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("gmm_seed{seed}.txt"))
}

/// Live rewards recorded alongside an embedding trace.
pub fn live_rewards_path(trace: &Path) -> PathBuf {
    trace.with_extension("rewards.csv")
}

/// Final state of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: usize,
    pub episodes: usize,
    pub unique_visits: usize,
    pub table_size: usize,
    pub goals: usize,
    pub extrinsic_return: f64,
}

/// Mean, median, min and max of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Stat {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, e.into())
}

fn write_reward_rows<W: Write>(
    w: &mut csv::Writer<W>,
    path: &Path,
    episode: usize,
    rewards: &RewardTrace,
) -> Result<()> {
    for t in 0..rewards.len() {
        w.write_record(&[
            episode.to_string(),
            (t + 1).to_string(),
            rewards.intrinsic[t].to_string(),
            rewards.pseudo_counts[t].to_string(),
            rewards.global_index[t].to_string(),
            rewards.episodic_label[t].to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StepLine<'a> {
    episode: usize,
    step: usize,
    t: usize,
    #[serde(flatten)]
    record: &'a StepRecord,
}

/// Runs every seed of the experiment and writes the run directory.
pub fn run(config: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    let config = config.resolved();
    config.validate()?;
    let dir = config.output_dir();
    create_dir(&dir)?;
    let resolved = dir.join("config.resolved.toml");
    std::fs::write(&resolved, config.to_toml()?).map_err(|e| Error::io(&resolved, e))?;

    let summaries = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&config, seed, &dir))
        .collect::<Result<Vec<_>>>()?;
    write_summary(&dir.join("summary.csv"), &summaries)?;
    Ok(summaries)
}

fn write_summary(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "seed",
        "steps",
        "episodes",
        "unique_visits",
        "table_size",
        "goals",
        "extrinsic_return",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(&[
            r.seed.to_string(),
            r.steps.to_string(),
            r.episodes.to_string(),
            r.unique_visits.to_string(),
            r.table_size.to_string(),
            r.goals.to_string(),
            r.extrinsic_return.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    let column = |f: fn(&RunSummary) -> f64| Stat::of(&rows.iter().map(f).collect::<Vec<_>>());
    let stats = [
        column(|r| r.steps as f64),
        column(|r| r.episodes as f64),
        column(|r| r.unique_visits as f64),
        column(|r| r.table_size as f64),
        column(|r| r.goals as f64),
        column(|r| r.extrinsic_return),
    ];
    for (label, pick) in [("mean", 0), ("min", 1), ("max", 2)] {
        let mut record = vec![label.to_string()];
        for s in stats.iter().flatten() {
            let v = [s.mean, s.min, s.max][pick];
            record.push(v.to_string());
        }
        if record.len() > 1 {
            w.write_record(&record).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One seeded run; writes its metrics, optional streams and table snapshot into `dir`.
pub fn run_seed(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunSummary> {
    let spec = generate(config.maze_seed(seed), &config.env.maze)?;
    let mut env = MazeEnv::new(
        spec,
        config.env.kind,
        config.env.noisy_tv,
        derive_seed(seed, Stream::Noise),
    );
    let encoder = config.build_encoder(seed, env.observation_shape())?;
    let mut agent = Agent::new(AgentConfig {
        seed: derive_seed(seed, Stream::Agent),
        ..config.agent.clone()
    })?;
    let mut table = GlobalClusterTable::new(config.kappa)?;
    let mut visits = VisitationCounter::new(config.env.visit_quantum);

    let m_path = metrics_path(dir, seed);
    let mut metrics = csv_writer(&m_path)?;
    let mut header: Vec<&str> = METRICS_HEADER.to_vec();
    if config.output.wall_clock {
        header.push("wall_clock_s");
    }
    metrics
        .write_record(&header)
        .map_err(|e| csv_error(&m_path, e))?;

    let s_path = steps_path(dir, seed);
    let mut step_stream = config
        .output
        .step_stream
        .then(|| create_file(&s_path))
        .transpose()?;
    let g_path = gmm_path(dir, seed);
    let mut gmm_dump = config
        .output
        .dump_gmm
        .then(|| create_file(&g_path))
        .transpose()?;
    let trace_path = config.output.embedding_trace.clone();
    let live_path = trace_path.as_deref().map(live_rewards_path);
    let mut live_rewards = match &live_path {
        Some(p) => {
            let mut w = csv_writer(p)?;
            w.write_record(REWARDS_HEADER)
                .map_err(|e| csv_error(p, e))?;
            Some(w)
        }
        None => None,
    };
    let mut recorded = Vec::new();

    let started = Instant::now();
    let mut options = EpisodeOptions {
        clustering: config.clustering.clone(),
        ir_scale: config.ir_scale,
        regime: config.regime,
        max_steps: None,
    };
    let mut summary = RunSummary {
        seed,
        steps: 0,
        episodes: 0,
        unique_visits: 0,
        table_size: 0,
        goals: 0,
        extrinsic_return: 0.0,
    };
    while summary.steps < config.total_steps {
        options.max_steps = Some(config.total_steps - summary.steps);
        let trace = run_episode(&mut env, &mut agent, &encoder, &mut table, &options)?;
        summary.episodes += 1;
        let first_step = summary.steps;
        summary.steps += trace.len();
        summary.goals += usize::from(trace.reached_goal);
        summary.extrinsic_return += trace.extrinsic_return();
        for s in &trace.steps {
            visits.record_visit(s.x, s.y);
        }

        if let Some(w) = step_stream.as_mut() {
            for (i, record) in trace.steps.iter().enumerate() {
                let line = StepLine {
                    episode: summary.episodes,
                    step: first_step + i + 1,
                    t: i + 1,
                    record,
                };
                serde_json::to_writer(&mut *w, &line).map_err(|e| Error::io(&s_path, e.into()))?;
                w.write_all(b"\n").map_err(|e| Error::io(&s_path, e))?;
            }
        }
        if let (Some(w), Some(model)) = (gmm_dump.as_mut(), trace.gmm.as_ref()) {
            writeln!(w, "episode {}", summary.episodes)
                .and_then(|_| w.write_all(model.dump_text().as_bytes()))
                .map_err(|e| Error::io(&g_path, e))?;
        }
        if let (Some(w), Some(p)) = (live_rewards.as_mut(), live_path.as_deref()) {
            write_reward_rows(w, p, summary.episodes, &trace.rewards)?;
        }
        if trace_path.is_some() {
            recorded.push(TraceEpisode {
                positions: Some(
                    trace
                        .steps
                        .iter()
                        .map(|s| (s.x as f32, s.y as f32))
                        .collect(),
                ),
                embeddings: trace.embeddings.clone(),
            });
        }

        let last = summary.steps >= config.total_steps || trace.is_empty();
        if summary.episodes.is_multiple_of(config.eval_every) || last {
            let mut row = vec![
                summary.episodes.to_string(),
                summary.steps.to_string(),
                trace.len().to_string(),
                trace.extrinsic_return().to_string(),
                trace.mean_intrinsic().to_string(),
                visits.unique_visits().to_string(),
                table.len().to_string(),
                trace.n_episodic_clusters.to_string(),
            ];
            if config.output.wall_clock {
                row.push(format!("{:.3}", started.elapsed().as_secs_f64()));
            }
            metrics
                .write_record(&row)
                .map_err(|e| csv_error(&m_path, e))?;
        }
        if trace.is_empty() {
            break;
        }
    }
    metrics.flush().map_err(|e| Error::io(&m_path, e))?;
    if let Some(mut w) = step_stream {
        w.flush().map_err(|e| Error::io(&s_path, e))?;
    }
    if let Some(mut w) = gmm_dump {
        w.flush().map_err(|e| Error::io(&g_path, e))?;
    }
    if let (Some(mut w), Some(p)) = (live_rewards, live_path.as_deref()) {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    if let Some(path) = &trace_path {
        write_trace(
            &EmbeddingTrace {
                dim: encoder.embed_dim(),
                episodes: recorded,
            },
            path,
        )?;
    }
    table_snapshot(&table, table_path(dir, seed))?;

    summary.unique_visits = visits.unique_visits();
    summary.table_size = table.len();
    Ok(summary)
}

/// Clusters and scores every episode of a trace against a fresh table.
pub fn replay_trace(
    trace: &EmbeddingTrace,
    clustering: &ClusterConfig,
    kappa: f64,
) -> Result<(Vec<RewardTrace>, GlobalClusterTable)> {
    let mut table = GlobalClusterTable::new(kappa)?;
    let rewards = trace
        .episodes
        .iter()
        .map(|ep| intrinsic_rewards(clustering, &mut table, &ep.embeddings).map(|(r, _, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok((rewards, table))
}

/// File-level replay: writes `rewards.csv` and `table.bin` into `out_dir`.
pub fn replay(
    trace_path: &Path,
    clustering: &ClusterConfig,
    kappa: f64,
    out_dir: &Path,
) -> Result<(Vec<RewardTrace>, GlobalClusterTable)> {
    let trace = read_trace(trace_path)?;
    let (rewards, table) = replay_trace(&trace, clustering, kappa)?;
    create_dir(out_dir)?;
    let path = out_dir.join("rewards.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(REWARDS_HEADER)
        .map_err(|e| csv_error(&path, e))?;
    for (i, r) in rewards.iter().enumerate() {
        write_reward_rows(&mut w, &path, i + 1, r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    table_snapshot(&table, out_dir.join("table.bin"))?;
    Ok((rewards, table))
}

/// One row of a kappa sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaRow {
    pub kappa: f64,
    pub runs: usize,
    pub table_size: Stat,
    /// Absent when the sweep replays a recorded corpus.
    pub unique_visits: Option<Stat>,
}

fn kappa_label(kappa: f64) -> String {
    format!("kappa_{kappa}")
}

/// Runs the experiment once per kappa, or replays `corpus` at each kappa when given.
/// Writes `ablate_kappa.csv` into the experiment's output directory.
pub fn ablate_kappa(
    config: &ExperimentConfig,
    kappas: &[f64],
    corpus: Option<&Path>,
) -> Result<Vec<KappaRow>> {
    if kappas.is_empty() {
        return Err(Error::Usage("ablate-kappa needs at least one kappa".into()));
    }
    let base = config.resolved();
    base.validate()?;
    let dir = base.output_dir();
    create_dir(&dir)?;
    let trace = corpus.map(read_trace).transpose()?;
    let mut rows = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let row = match &trace {
            Some(trace) => {
                let (_, table) = replay_trace(trace, &base.clustering, kappa)?;
                let k = table.len() as f64;
                KappaRow {
                    kappa,
                    runs: 1,
                    table_size: Stat {
                        mean: k,
                        median: k,
                        min: k,
                        max: k,
                    },
                    unique_visits: None,
                }
            }
            None => {
                let cfg = ExperimentConfig {
                    kappa,
                    output_dir: Some(dir.join(kappa_label(kappa))),
                    ..base.clone()
                };
                let runs = run(&cfg)?;
                let k: Vec<f64> = runs.iter().map(|r| r.table_size as f64).collect();
                let v: Vec<f64> = runs.iter().map(|r| r.unique_visits as f64).collect();
                KappaRow {
                    kappa,
                    runs: runs.len(),
                    table_size: Stat::of(&k).expect("at least one seed"),
                    unique_visits: Stat::of(&v),
                }
            }
        };
        rows.push(row);
    }
    let path = dir.join("ablate_kappa.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "kappa",
        "runs",
        "table_size_mean",
        "table_size_median",
        "table_size_min",
        "table_size_max",
        "visits_mean",
        "visits_median",
        "visits_min",
        "visits_max",
    ])
    .map_err(|e| csv_error(&path, e))?;
    for r in &rows {
        let k = r.table_size;
        let mut record = vec![
            r.kappa.to_string(),
            r.runs.to_string(),
            k.mean.to_string(),
            k.median.to_string(),
            k.min.to_string(),
            k.max.to_string(),
        ];
        match r.unique_visits {
            Some(v) => record.extend([v.mean, v.median, v.min, v.max].map(|x| x.to_string())),
            None => record.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&record).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodicVariant {
    Episodic,
    NoEpisodic,
}

impl EpisodicVariant {
    pub fn name(self) -> &'static str {
        match self {
            EpisodicVariant::Episodic => "episodic",
            EpisodicVariant::NoEpisodic => "no-episodic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicRow {
    pub seed: u64,
    pub variant: EpisodicVariant,
    pub table_size: usize,
    pub unique_visits: usize,
}

/// Paired runs that differ only in mixture versus per-step passthrough
/// clustering. Writes `ablate_episodic.csv` with two rows per seed.
pub fn ablate_episodic(config: &ExperimentConfig) -> Result<Vec<EpisodicRow>> {
    let base = config.resolved();
    base.validate()?;
    let dir = base.output_dir();
    create_dir(&dir)?;
    let mut per_variant = Vec::new();
    for (variant, mode) in [
        (EpisodicVariant::Episodic, ClusterMode::Gmm),
        (EpisodicVariant::NoEpisodic, ClusterMode::Passthrough),
    ] {
        let cfg = ExperimentConfig {
            clustering: ClusterConfig {
                mode,
                ..base.clustering.clone()
            },
            output_dir: Some(dir.join(variant.name())),
            ..base.clone()
        };
        per_variant.push((variant, run(&cfg)?));
    }
    let mut rows = Vec::new();
    for &seed in &base.seeds {
        for (variant, runs) in &per_variant {
            let r = runs
                .iter()
                .find(|r| r.seed == seed)
                .expect("every seed ran");
            rows.push(EpisodicRow {
                seed,
                variant: *variant,
                table_size: r.table_size,
                unique_visits: r.unique_visits,
            });
        }
    }
    let path = dir.join("ablate_episodic.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["seed", "variant", "table_size", "unique_visits"])
        .map_err(|e| csv_error(&path, e))?;
    for r in &rows {
        w.write_record(&[
            r.seed.to_string(),
            r.variant.name().to_string(),
            r.table_size.to_string(),
            r.unique_visits.to_string(),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Human-readable listing of a table snapshot.
pub fn dump_table(path: &Path) -> Result<String> {
    let table = table_restore(path, DEFAULT_KAPPA)?;
    let mut out = format!(
        "entries {} dim {} total_count {}\n",
        table.len(),
        table.dim().unwrap_or(0),
        table.total_count()
    );
    for (k, e) in table.entries().iter().enumerate() {
        out.push_str(&format!("entry {k} count {} center", e.count));
        for v in &e.center {
            out.push_str(&format!(" {v}"));
        }
        out.push('\n');
    }
    Ok(out)
}
