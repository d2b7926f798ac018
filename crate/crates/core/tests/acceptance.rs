//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; exits non-zero when any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use clustercount::agent::{
    cluster_episode, run_episode, Agent, AgentConfig, AgentKind, ClusterConfig, EpisodeOptions,
};
use clustercount::embedding::{EmbeddingVector, Encoder};
use clustercount::envsim::{generate, MazeConfig, MazeEnv, ObsMode, RewardRegime};
use clustercount::gmm::{fit, GmmConfig};
use clustercount::harness::{self, ExperimentConfig, RunSummary, Stat};
use clustercount::pseudocount::GlobalClusterTable;

type Outcome = Result<(bool, String), String>;

/// Box-Muller standard normal.
fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn median(runs: &[RunSummary], f: fn(&RunSummary) -> usize) -> f64 {
    Stat::of(&runs.iter().map(|r| f(r) as f64).collect::<Vec<_>>()).map_or(0.0, |s| s.median)
}

fn visits(r: &RunSummary) -> usize {
    r.unique_visits
}

fn table_size(r: &RunSummary) -> usize {
    r.table_size
}

/// Intrinsic-only exploration runs on the default 9-room maze.
fn exploration_config(dir: &Path, seeds: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        name: "acceptance".into(),
        seeds: (1..=seeds as u64).collect(),
        total_steps: 100_000,
        regime: RewardRegime::IntrinsicOnly,
        output_dir: Some(dir.to_path_buf()),
        ..ExperimentConfig::default()
    };
    c.encoder.embed_dim = 16;
    c
}

fn with_dir(c: &ExperimentConfig, dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: Some(dir.to_path_buf()),
        ..c.clone()
    }
}

fn criterion_1() -> Outcome {
    let config = MazeConfig {
        rooms: 2,
        room_size: 2,
        episode_length: 200,
        ..MazeConfig::default()
    };
    let mut env = MazeEnv::new(
        generate(11, &config).map_err(err)?,
        ObsMode::Tabular,
        false,
        0,
    );
    let encoder = Encoder::Identity {
        input_shape: env.observation_shape(),
    };
    let mut agent = Agent::new(AgentConfig {
        kind: AgentKind::Random,
        seed: 3,
        ..AgentConfig::default()
    })
    .map_err(err)?;
    let mut table = GlobalClusterTable::new(0.99).map_err(err)?;
    let options = EpisodeOptions {
        clustering: ClusterConfig::passthrough(),
        ..EpisodeOptions::default()
    };
    let mut oracle: HashMap<usize, u64> = HashMap::new();
    let (mut steps, mut worst, mut rho_ok) = (0usize, 0.0f64, true);
    for _ in 0..50 {
        let trace =
            run_episode(&mut env, &mut agent, &encoder, &mut table, &options).map_err(err)?;
        for s in &trace.steps {
            let n = oracle.entry(s.state_key).or_default();
            *n += 1;
            rho_ok &= s.pseudo_count == *n;
            worst = worst.max((s.intrinsic - 1.0 / (*n as f64).sqrt()).abs());
            steps += 1;
        }
    }
    let pass = env.n_states() <= 64 && rho_ok && worst <= 1e-12 && table.len() == oracle.len();
    Ok((
        pass,
        format!(
            "{} states, {steps} steps, integer counts exact: {rho_ok}, max reward error {worst:.1e}",
            env.n_states()
        ),
    ))
}

fn criterion_2() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let mut sequences = 0;
    for _ in 0..5 {
        let kappa = rng.gen_range(0.0..=1.0);
        let mut table = GlobalClusterTable::new(kappa).map_err(err)?;
        let mut processed = 0u64;
        let centres: Vec<Vec<f32>> = (0..6)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        for _ in 0..100 {
            let len = rng.gen_range(1..=60);
            let emb: Vec<EmbeddingVector> = (0..len)
                .map(|_| {
                    let c = &centres[rng.gen_range(0..centres.len())];
                    EmbeddingVector(
                        c.iter()
                            .map(|v| v + 0.05 * normal(&mut rng) as f32)
                            .collect(),
                    )
                })
                .collect();
            let (clustering, _) = cluster_episode(&ClusterConfig::default(), &emb).map_err(err)?;
            table.process_episode(&clustering).map_err(err)?;
            processed += len as u64;
        }
        if table.total_count() != processed {
            return Ok((
                false,
                format!(
                    "kappa {kappa:.3}: table counts {} != {processed} embeddings",
                    table.total_count()
                ),
            ));
        }
        sequences += 1;
    }
    Ok((
        true,
        format!("{sequences} fuzzed sequences of 100 episodes, counts equal embeddings processed"),
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let d = 8;
    let offsets = [-2.0, 2.0];
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for (k, &o) in offsets.iter().enumerate() {
        for _ in 0..200 {
            data.push(EmbeddingVector(
                (0..d)
                    .map(|_| (o + 0.3 * normal(&mut rng)) as f32)
                    .collect(),
            ));
            truth.push(k);
        }
    }
    let sample_means: Vec<Vec<f64>> = (0..2)
        .map(|k| {
            let rows: Vec<&EmbeddingVector> = data
                .iter()
                .zip(&truth)
                .filter(|(_, &t)| t == k)
                .map(|(e, _)| e)
                .collect();
            (0..d)
                .map(|j| rows.iter().map(|e| e.0[j] as f64).sum::<f64>() / rows.len() as f64)
                .collect()
        })
        .collect();
    let model = fit(&GmmConfig::with_components(2), &data).map_err(err)?;
    let mut worst_mean = 0.0f64;
    for m in &sample_means {
        let nearest = model
            .means
            .iter()
            .map(|mu| {
                mu.iter()
                    .zip(m)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        worst_mean = worst_mean.max(nearest);
    }

    let mut worst_drop = 0.0f64;
    for i in 0..100 {
        let n = rng.gen_range(20..120);
        let d = rng.gen_range(1..6);
        let m = rng.gen_range(1..5);
        let spread = rng.gen_range(0.1..3.0);
        let data: Vec<EmbeddingVector> = (0..n)
            .map(|_| {
                EmbeddingVector(
                    (0..d)
                        .map(|_| (spread * normal(&mut rng)) as f32 + rng.gen_range(0..3) as f32)
                        .collect(),
                )
            })
            .collect();
        let config = GmmConfig {
            n_components: m,
            seed: i,
            ..GmmConfig::default()
        };
        let model = fit(&config, &data).map_err(err)?;
        for w in model.log_likelihood_history.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    Ok((
        worst_mean <= 0.05 && worst_drop <= 1e-7,
        format!("max mean error {worst_mean:.2e}, largest log-likelihood drop over 100 fits {worst_drop:.1e}"),
    ))
}

fn criterion_4(root: &Path, q: &[RunSummary]) -> Outcome {
    let corpus = root.join("corpus.bin");
    let mut rec = exploration_config(&root.join("c4_record"), 1);
    rec.agent.kind = AgentKind::Random;
    rec.total_steps = 20 * rec.env.maze.horizon();
    rec.output.embedding_trace = Some(corpus.clone());
    harness::run(&rec).map_err(err)?;
    let sweep = exploration_config(&root.join("c4_sweep"), 1);
    let kappas = [0.3, 0.5, 0.8, 0.9];
    let rows = harness::ablate_kappa(&sweep, &kappas, Some(&corpus)).map_err(err)?;
    let k: Vec<f64> = rows.iter().map(|r| r.table_size.median).collect();
    let increasing = k.windows(2).all(|w| w[0] < w[1]);

    let mut half = exploration_config(&root.join("c4_kappa05"), 5);
    half.kappa = 0.5;
    let at_half = median(&harness::run(&half).map_err(err)?, visits);
    let at_default = median(q, visits);
    let rel = (at_half - at_default).abs() / at_default;
    Ok((
        increasing && rel <= 0.2,
        format!(
            "corpus K over kappa {kappas:?} = {k:?}; median visits kappa 0.5 {at_half} vs 0.8 {at_default} ({:+.1}%)",
            100.0 * (at_half - at_default) / at_default
        ),
    ))
}

fn criterion_5(root: &Path) -> Outcome {
    let c = exploration_config(&root.join("c5"), 3);
    let rows = harness::ablate_episodic(&c).map_err(err)?;
    let pick = |variant: harness::EpisodicVariant, f: fn(&harness::EpisodicRow) -> usize| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| f(r) as f64)
            .collect();
        Stat::of(&v).map_or(0.0, |s| s.median)
    };
    use harness::EpisodicVariant::{Episodic, NoEpisodic};
    let (k_ep, k_no) = (
        pick(Episodic, |r| r.table_size),
        pick(NoEpisodic, |r| r.table_size),
    );
    let (v_ep, v_no) = (
        pick(Episodic, |r| r.unique_visits),
        pick(NoEpisodic, |r| r.unique_visits),
    );
    let ratio = k_no / k_ep;
    Ok((
        ratio >= 2.0 && v_ep >= v_no,
        format!("median K no-episodic {k_no} / episodic {k_ep} = {ratio:.2}x (need 2x); median visits episodic {v_ep} vs no-episodic {v_no}"),
    ))
}

/// Returns the outcome plus the clean Q runs, which criteria 4 and 7 reuse.
fn criterion_6(root: &Path) -> Result<(Outcome, Vec<RunSummary>), String> {
    let base = exploration_config(&root.join("c6"), 5);
    let mut random_cfg = with_dir(&base, &root.join("c6_random"));
    random_cfg.agent.kind = AgentKind::Random;
    let random = harness::run(&random_cfg).map_err(err)?;
    let q = harness::run(&with_dir(&base, &root.join("c6_q"))).map_err(err)?;
    let control = ExperimentConfig {
        ir_scale: 0.0,
        ..with_dir(&base, &root.join("c6_control"))
    };
    let control = harness::run(&control).map_err(err)?;
    let (r, v, c) = (
        median(&random, visits),
        median(&q, visits),
        median(&control, visits),
    );
    let ratio = v / r;
    let outcome = Ok((
        ratio >= 1.5,
        format!(
            "median unique visits Q {v} vs random {r} = {ratio:.2}x (need 1.5x); intrinsic-off control {c} ({:.2}x)",
            c / r
        ),
    ));
    Ok((outcome, q))
}

fn criterion_7(root: &Path, clean: &[RunSummary]) -> Outcome {
    let mut c = exploration_config(&root.join("c7"), 5);
    c.env.noisy_tv = true;
    let noisy = harness::run(&c).map_err(err)?;
    let (v_clean, v_noisy) = (median(clean, visits), median(&noisy, visits));
    let change = (v_noisy - v_clean).abs() / v_clean;
    Ok((
        change < 0.25,
        format!(
            "median unique visits noisy {v_noisy} vs clean {v_clean} ({:+.1}%); median K noisy {} vs clean {}",
            100.0 * (v_noisy - v_clean) / v_clean,
            median(&noisy, table_size),
            median(clean, table_size)
        ),
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_clustercount"))
        .args(args)
        .output()
        .map_err(err)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn criterion_8(root: &Path) -> Outcome {
    let (a, b) = (root.join("c8_a"), root.join("c8_b"));
    for dir in [&a, &b] {
        cli(&[
            "run",
            "--seeds",
            "1,2",
            "--total-steps",
            "2000",
            "--out",
            dir.to_str().unwrap(),
        ])?;
    }
    let mut compared = 0;
    for seed in [1, 2] {
        let x = std::fs::read(harness::metrics_path(&a, seed)).map_err(err)?;
        let y = std::fs::read(harness::metrics_path(&b, seed)).map_err(err)?;
        if x != y {
            return Ok((false, format!("metrics for seed {seed} differ")));
        }
        compared += x.len();
    }
    Ok((
        true,
        format!("2 seeds x 2000 steps, {compared} metric bytes identical"),
    ))
}

fn criterion_9(root: &Path) -> Outcome {
    let trace = root.join("c9_trace.bin");
    let replay_dir = root.join("c9_replay");
    cli(&[
        "run",
        "--seeds",
        "4",
        "--total-steps",
        "2000",
        "--embedding-trace",
        trace.to_str().unwrap(),
        "--out",
        root.join("c9_live").to_str().unwrap(),
    ])?;
    cli(&[
        "replay-trace",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        replay_dir.to_str().unwrap(),
    ])?;
    let parse = |p: &Path| -> Result<Vec<u64>, String> {
        let mut r = csv::Reader::from_path(p).map_err(err)?;
        r.records()
            .map(|rec| {
                let rec = rec.map_err(err)?;
                rec[2].parse::<f64>().map(f64::to_bits).map_err(err)
            })
            .collect()
    };
    let live = parse(&harness::live_rewards_path(&trace))?;
    let replayed = parse(&replay_dir.join("rewards.csv"))?;
    Ok((
        !live.is_empty() && live == replayed,
        format!(
            "{} live rewards, {} replayed, bit-identical: {}",
            live.len(),
            replayed.len(),
            live == replayed
        ),
    ))
}

fn report(n: usize, limit: Duration, started: Instant, outcome: Outcome) -> bool {
    let elapsed = started.elapsed();
    let (pass, detail) = match outcome {
        Ok((pass, detail)) => (pass, detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = elapsed <= limit;
    let ok = pass && in_time;
    println!(
        "criterion {n}: {} | {detail} | {:.1}s (limit {}s){}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { " over time" }
    );
    ok
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();
    let secs = Duration::from_secs;
    let mut results = Vec::new();

    let t = Instant::now();
    results.push(report(1, secs(5), t, criterion_1()));
    let t = Instant::now();
    results.push(report(2, secs(10), t, criterion_2()));
    let t = Instant::now();
    results.push(report(3, secs(30), t, criterion_3()));

    let t = Instant::now();
    let clean = match criterion_6(root) {
        Ok((outcome, q)) => {
            results.push(report(6, secs(15 * 60), t, outcome));
            Some(q)
        }
        Err(e) => {
            results.push(report(6, secs(15 * 60), t, Err(e)));
            None
        }
    };
    // Criteria 7 and 4 compare against the clean kappa 0.8 runs of criterion 6.
    let t = Instant::now();
    let outcome = clean.as_deref().map_or_else(
        || Err("criterion 6 runs failed".into()),
        |q| criterion_7(root, q),
    );
    results.push(report(7, secs(15 * 60), t, outcome));
    let t = Instant::now();
    let outcome = clean.as_deref().map_or_else(
        || Err("criterion 6 runs failed".into()),
        |q| criterion_4(root, q),
    );
    results.push(report(4, secs(5 * 60), t, outcome));
    let t = Instant::now();
    results.push(report(5, secs(10 * 60), t, criterion_5(root)));
    let t = Instant::now();
    results.push(report(8, secs(2 * 60), t, criterion_8(root)));
    let t = Instant::now();
    results.push(report(9, secs(60), t, criterion_9(root)));

    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
