use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use flowalloc::harness::{
    evaluate_policy, monte_carlo, run_streams, write_aggregate_csv, write_metrics_csv, Algo, EvalContext,
    ExperimentConfig, MetricsRecorder, MetricsRow, Phase,
};
use flowalloc::learners::{pds_vi_train, q_learning_train, PdsOptions, QOptions, StepSchedule};
use flowalloc::model::{AllocationMatrix, StateIndexer};
use flowalloc::oracle::{
    read_policy_csv, read_table_csv, solve, write_policy_csv, write_table_csv, SolveMode, TableKind, ValueTable,
};
use flowalloc::{Mdp, ModelConfig};

#[derive(Parser)]
#[command(
    name = "flowalloc",
    version,
    about = "Flow allocation across UPFs: exact DP, PDS value iteration and Q-learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the size of the state space.
    Enumerate(EnumerateArgs),
    /// Solve the model exactly and write V* (and the post-decision table).
    Dp(DpArgs),
    /// Train one learner for one seeded run.
    Train(TrainArgs),
    /// Run a frozen policy and report its running cost.
    Evaluate(EvaluateArgs),
    /// Monte Carlo comparison of both learners.
    Compare(CompareArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model TOML; the built-in reference instance when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<ModelConfig> {
        match &self.config {
            Some(p) => ModelConfig::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(ModelConfig::reference()),
        }
    }
}

#[derive(Args)]
struct StepArgs {
    /// Step-size exponent: alpha_n = (offset + n)^-exponent.
    #[arg(long, default_value_t = 0.7)]
    step_exponent: f64,
    #[arg(long, default_value_t = 1.0)]
    step_offset: f64,
}

impl StepArgs {
    fn schedule(&self) -> Result<StepSchedule> {
        StepSchedule::new(self.step_exponent, self.step_offset).map_err(anyhow::Error::msg)
    }
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct DpArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// `pds` (fast) or `direct`.
    #[arg(long, default_value = "pds")]
    mode: SolveMode,
    #[arg(long, default_value = "vstar.csv")]
    out: PathBuf,
    /// Also write the optimal policy.
    #[arg(long)]
    policy_out: Option<PathBuf>,
}

#[derive(Args)]
struct VstarArgs {
    /// V* CSV from `dp`; solved on the fly when omitted.
    #[arg(long)]
    vstar: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

impl VstarArgs {
    fn load(&self, mdp: &Mdp, hash: &str) -> Result<ValueTable> {
        match &self.vstar {
            Some(p) => Ok(ValueTable {
                values: read_table_csv(p, hash, TableKind::State)?,
            }),
            None => {
                let t = Instant::now();
                let sol = solve(mdp, self.tol, SolveMode::Pds);
                eprintln!("solved V* in {:.1?} ({} sweeps)", t.elapsed(), sol.sweeps);
                Ok(sol.value)
            }
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    algo: Algo,
    #[arg(long, default_value_t = 3_500_000)]
    slots: u64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    run_id: u64,
    #[command(flatten)]
    vstar: VstarArgs,
    #[arg(long, default_value_t = 1000)]
    snapshot_every: u64,
    #[arg(long, default_value = "metrics.csv")]
    metrics_out: PathBuf,
    #[arg(long)]
    policy_out: Option<PathBuf>,
    /// Starting allocation, rows separated by `;`, e.g. `0,0;1,0;0,0;0,0;0,0`.
    #[arg(long)]
    init_alloc: Option<String>,
    /// Exploration probability for PDS-VI (0 = greedy).
    #[arg(long, default_value_t = 0.0)]
    pds_epsilon: f64,
    #[command(flatten)]
    step: StepArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    slots: u64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    run_id: u64,
    /// Label written in the `algo` column.
    #[arg(long, default_value = "pds-vi")]
    algo: Algo,
    #[arg(long, default_value_t = 1000)]
    snapshot_every: u64,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 20)]
    runs: u64,
    /// Run the 1000-run reproduction (overrides --runs).
    #[arg(long)]
    full_fidelity: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 3_500_000)]
    train_slots: u64,
    #[arg(long, default_value_t = 1_000_000)]
    eval_slots: u64,
    #[arg(long, default_value_t = 1000)]
    snapshot_every: u64,
    #[command(flatten)]
    vstar: VstarArgs,
    #[command(flatten)]
    step: StepArgs,
}

fn parse_alloc(s: &str, cfg: &ModelConfig) -> Result<AllocationMatrix> {
    let rows: Vec<Vec<u32>> = s
        .split(';')
        .map(|r| r.split(',').map(|c| c.trim().parse::<u32>()).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()
        .context("allocation must be `;`-separated rows of `,`-separated counts")?;
    if rows.len() != cfg.upfs || rows.iter().any(|r| r.len() != cfg.flow_types) {
        bail!("allocation must have {} rows of {} counts", cfg.upfs, cfg.flow_types);
    }
    let mut alloc = AllocationMatrix::for_config(cfg);
    for (k, row) in rows.iter().enumerate() {
        alloc.row_mut(k).copy_from_slice(row);
    }
    cfg.check_feasible(&alloc)?;
    Ok(alloc)
}

fn pds_sibling(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("vstar");
    out.with_file_name(format!("{stem}_pds.csv"))
}

fn cmd_enumerate(args: &EnumerateArgs) -> Result<()> {
    let cfg = args.model.load()?;
    let idx = StateIndexer::enumerate(&cfg)?;
    println!("upfs={} flow_types={}", cfg.upfs, cfg.flow_types);
    println!("vectors_per_upf={:?}", idx.radices());
    println!("allocations={}", idx.total_allocs());
    println!("states={}", idx.total_states());
    println!("estimate={}", StateIndexer::cardinality_estimate(&cfg));
    println!("config_hash={}", cfg.hash());
    Ok(())
}

fn cmd_dp(args: &DpArgs) -> Result<()> {
    let cfg = args.model.load()?;
    let hash = cfg.hash();
    let mdp = Mdp::new(cfg)?;
    let t = Instant::now();
    let sol = solve(&mdp, args.tol, args.mode);
    eprintln!(
        "{} states, {} sweeps, residual {:e}, {:.1?}",
        mdp.num_states(),
        sol.sweeps,
        sol.residual,
        t.elapsed()
    );
    write_table_csv(&args.out, &hash, TableKind::State, &sol.value.values)?;
    write_table_csv(pds_sibling(&args.out), &hash, TableKind::Alloc, &sol.pds_value.values)?;
    if let Some(p) = &args.policy_out {
        write_policy_csv(p, &hash, &sol.policy)?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.model.load()?;
    let hash = cfg.hash();
    let initial_alloc = match &args.init_alloc {
        Some(s) => Some(parse_alloc(s, &cfg)?),
        None => None,
    };
    let mdp = Mdp::new(cfg)?;
    let initial_alloc = match initial_alloc {
        Some(a) => mdp.indexer().alloc_index(&a)?,
        None => 0,
    };
    let vstar = args.vstar.load(&mdp, &hash)?;
    let schedule = args.step.schedule()?;
    let (rng, _) = run_streams(args.seed, args.run_id);
    let mut rec = MetricsRecorder::new(&mdp, args.run_id, args.algo, &vstar, args.snapshot_every, args.slots);
    let t = Instant::now();
    let policy = match args.algo {
        Algo::PdsVi => {
            let opts = PdsOptions {
                schedule,
                epsilon: args.pds_epsilon,
                initial_alloc,
            };
            pds_vi_train(&mdp, &opts, args.slots, rng, &mut rec).policy
        }
        Algo::QLearning => {
            let opts = QOptions {
                schedule,
                initial_alloc,
                ..QOptions::for_training(args.slots)
            };
            q_learning_train(&mdp, &opts, args.slots, rng, &mut rec).policy
        }
    };
    let rows = rec.into_rows();
    if let Some(last) = rows.last() {
        eprintln!(
            "{} slots in {:.1?}: rbe {:.4}, avg cost {:.3}, blocked {}",
            args.slots,
            t.elapsed(),
            last.rbe,
            last.avg_cost,
            last.blocked_cumulative
        );
    }
    write_metrics_csv(&args.metrics_out, &hash, &rows)?;
    if let Some(p) = &args.policy_out {
        write_policy_csv(p, &hash, &policy)?;
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = args.model.load()?;
    let hash = cfg.hash();
    let mdp = Mdp::new(cfg)?;
    let policy = read_policy_csv(&args.policy, &hash)?;
    if !policy.is_admissible(&mdp) {
        bail!("policy has an infeasible action or wrong length");
    }
    let (_, rng) = run_streams(args.seed, args.run_id);
    let rows: Vec<MetricsRow> = evaluate_policy(
        &mdp,
        &policy,
        args.slots,
        rng,
        EvalContext {
            run_id: args.run_id,
            algo: args.algo,
            iteration_offset: 0,
            rbe: f64::NAN,
            snapshot_every: args.snapshot_every,
        },
    );
    if let Some(last) = rows.last() {
        println!("avg_cost={} blocked={}", last.avg_cost, last.blocked_cumulative);
    }
    if let Some(p) = &args.metrics_out {
        write_metrics_csv(p, &hash, &rows)?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let cfg = args.model.load()?;
    let hash = cfg.hash();
    let mdp = Mdp::new(cfg.clone())?;
    let vstar = args.vstar.load(&mdp, &hash)?;
    let schedule = args.step.schedule()?;
    let base = if args.full_fidelity {
        ExperimentConfig::full_fidelity(cfg)
    } else {
        ExperimentConfig {
            runs: args.runs,
            ..ExperimentConfig::desk(cfg)
        }
    };
    let exp = ExperimentConfig {
        train_slots: args.train_slots,
        eval_slots: args.eval_slots,
        base_seed: args.seed,
        snapshot_every: args.snapshot_every,
        oracle_tol: args.vstar.tol,
        workers: args.workers,
        pds: PdsOptions {
            schedule,
            ..PdsOptions::default()
        },
        q_schedule: schedule,
        ..base
    };
    let t = Instant::now();
    let res = monte_carlo(&mdp, &vstar, &exp);
    eprintln!("{} runs per algorithm in {:.1?}", exp.runs, t.elapsed());

    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_metrics_csv(args.out_dir.join("metrics.csv"), &hash, &res.rows)?;
    write_aggregate_csv(args.out_dir.join("aggregate.csv"), &hash, &res.aggregate)?;
    if args.vstar.vstar.is_none() {
        write_table_csv(args.out_dir.join("vstar.csv"), &hash, TableKind::State, &vstar.values)?;
    }

    for algo in &exp.algos {
        for phase in [Phase::Train, Phase::Eval] {
            if let Some(r) = res.series(*algo, phase).last() {
                println!(
                    "{algo} {phase} iteration={} rbe={:.4}±{:.4} avg_cost={:.3}±{:.3} blocked={:.2}±{:.2}",
                    r.iteration,
                    r.rbe_mean,
                    r.rbe_stderr,
                    r.avg_cost_mean,
                    r.avg_cost_stderr,
                    r.blocked_mean,
                    r.blocked_stderr
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Dp(a) => cmd_dp(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
