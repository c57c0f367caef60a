use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lwail_core::envs::{GridMaze, Mu0};
use lwail_core::icvf::train_icvf;
use lwail_core::oracle::{euclidean_cost, goal_value_iteration, state_occupancy, wasserstein_lp};
use lwail_core::pipeline::{
    self, evaluate, load_datasets, load_embedder, need, pretrain_inputs, ExperimentConfig, Pretrained, RewardSource,
    CONFIG_FILE, CRITIC_FILE, EXPERT_FILE, ICVF_FILE, RANDOM_FILE,
};
use lwail_core::reporting::{export_embeddings, report_file_name, Fixture};
use lwail_core::{LwailError, Result};

const POLICY_FILE: &str = "policy.ckpt";

#[derive(Parser)]
#[command(name = "lwail", about = "Latent-Wasserstein imitation from a single state-only demonstration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory holding stage outputs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Random-policy and expert datasets.
    GenData(Common),
    /// ICVF pre-training on the saved random dataset.
    TrainIcvf(Common),
    /// Critic pre-training against the untrained policy.
    PretrainCritic {
        #[command(flatten)]
        common: Common,
        /// Also write per-pair critic output and reward as CSV.
        #[arg(long)]
        dump_pairs: bool,
    },
    /// Online loop; pseudo-reward from saved stages, or the environment
    /// reward when `reward = ground_truth`.
    Imitate(Common),
    /// Evaluates the saved policy.
    Evaluate(Common),
    /// Exact occupancy on the grid maze and transport plans of the fixture suite.
    Oracle(Common),
    /// Frozen embedding of every random-dataset state.
    ExportEmbeddings(Common),
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &c.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| LwailError::Config(format!("expected KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare(c: &Common) -> Result<ExperimentConfig> {
    let cfg = load_config(c)?;
    std::fs::create_dir_all(&c.out)?;
    std::fs::write(c.out.join(CONFIG_FILE), cfg.dump())?;
    Ok(cfg)
}

fn gen_data(c: &Common) -> Result<()> {
    let cfg = prepare(c)?;
    let random = pipeline::random_dataset(&cfg)?;
    let expert = pipeline::expert_dataset(&cfg)?;
    random.save(&c.out.join(RANDOM_FILE))?;
    expert.save(&c.out.join(EXPERT_FILE))?;
    println!("{} random transitions, {} expert trajectories", random.num_pairs(), expert.trajectories().len());
    Ok(())
}

fn train_icvf_stage(c: &Common) -> Result<()> {
    let cfg = prepare(c)?;
    let (random, _) = load_datasets(&c.out)?;
    let model = train_icvf(&random, &cfg.icvf(), cfg.icvf_steps, cfg.seed ^ 0x1c7f)?;
    model.save(&c.out.join(ICVF_FILE))?;
    println!("icvf trained for {} steps, checksum {:016x}", cfg.icvf_steps, model.checksum());
    Ok(())
}

fn pretrain_critic_stage(c: &Common, dump_pairs: bool) -> Result<()> {
    let cfg = prepare(c)?;
    let (random, expert) = load_datasets(&c.out)?;
    let (_, embedder) = load_embedder(&c.out, &cfg, &random)?;
    let critic = pipeline::pretrain_critic(&cfg, &embedder, &expert)?;
    critic.save(&c.out.join(CRITIC_FILE))?;
    let (e, l) = pretrain_inputs(&cfg, &embedder, &expert)?;
    println!("critic pre-trained, dual gap {:.6}", critic.dual_gap(&e, &l)?);
    if dump_pairs {
        let mut csv = String::from("side,f,reward\n");
        for (side, x) in [("expert", &e), ("learner", &l)] {
            for f in critic.values(x)? {
                csv.push_str(&format!("{side},{f},{}\n", lwail_core::critic::reward_from_output(f)));
            }
        }
        std::fs::write(c.out.join("critic_pairs.csv"), csv)?;
    }
    Ok(())
}

fn imitate(c: &Common) -> Result<()> {
    let cfg = prepare(c)?;
    let (agent, metrics) = match cfg.reward {
        RewardSource::Pseudo => pipeline::run_imitation(&cfg, &Pretrained::load(&c.out, &cfg)?)?,
        RewardSource::GroundTruth => pipeline::run_ground_truth(&cfg)?,
    };
    agent.save_policy(&c.out.join(POLICY_FILE))?;
    let path = c.out.join(report_file_name("metrics", cfg.hash(), cfg.seed, "csv"));
    metrics.write_csv(&path)?;
    if let Some(row) = metrics.rows.last() {
        println!("step {}: success {:.2}, mean return {:.2}", row.step, row.success, row.mean_return);
    }
    println!("metrics written to {}", path.display());
    Ok(())
}

fn evaluate_stage(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let mut agent = pipeline::initial_agent(&cfg)?;
    agent.load_policy(&need(&c.out, POLICY_FILE)?)?;
    let ev = evaluate(&agent, &cfg, cfg.eval_episodes, cfg.seed)?;
    println!("success {:.3}, mean return {:.3} over {} episodes", ev.success, ev.mean_return, cfg.eval_episodes);
    Ok(())
}

fn oracle(c: &Common) -> Result<()> {
    let cfg = prepare(c)?;
    let mut grid = GridMaze::umaze();
    grid.gamma = cfg.gamma;
    let mdp = grid.to_tabular(Mu0::Start);
    let free = grid.layout().free_cells();
    let z = free.iter().position(|&cell| cell == grid.layout().goal()).expect("goal is free");
    let (_, pi) = goal_value_iteration(&mdp, z, 1e-12)?;
    let mut csv = String::from("index,value\n");
    for (i, d) in state_occupancy(&mdp, &pi)?.iter().enumerate() {
        csv.push_str(&format!("{i},{d}\n"));
    }
    std::fs::write(c.out.join("occupancy.csv"), csv)?;
    for f in Fixture::suite() {
        let plan = wasserstein_lp(&f.p, &f.q, &euclidean_cost(&f.xp, &f.xq))?;
        let mut csv = String::from("i,j,mass\n");
        for i in 0..plan.rows {
            for j in 0..plan.cols {
                if plan.mass(i, j) > 0.0 {
                    csv.push_str(&format!("{i},{j},{}\n", plan.mass(i, j)));
                }
            }
        }
        std::fs::write(c.out.join(format!("transport_{}.csv", f.id)), csv)?;
        println!("{}: W1 = {:.9}", f.id, plan.value);
    }
    Ok(())
}

fn export(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let (random, _) = load_datasets(&c.out)?;
    let (_, embedder) = load_embedder(&c.out, &cfg, &random)?;
    let path = c.out.join("embeddings.csv");
    let n = export_embeddings(&embedder, &random, None, &path)?;
    println!("{n} embedded states written to {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::TrainIcvf(c) => train_icvf_stage(c),
        Command::PretrainCritic { common, dump_pairs } => pretrain_critic_stage(common, *dump_pairs),
        Command::Imitate(c) => imitate(c),
        Command::Evaluate(c) => evaluate_stage(c),
        Command::Oracle(c) => oracle(c),
        Command::ExportEmbeddings(c) => export(c),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

