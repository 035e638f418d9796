use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::ModelConfig;
use crate::env::{Environment, RngStream};
use crate::learners::{pds_vi_train, q_learning_train, PdsOptions, QOptions, StepSchedule, ValueView};
use crate::mdp::Mdp;
use crate::oracle::{Policy, ValueTable};

use super::metrics::{Algo, MetricsRecorder, MetricsRow, Phase};

/// Everything a Monte Carlo comparison needs besides the model and `V*`.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train_slots: u64,
    pub eval_slots: u64,
    pub runs: u64,
    pub base_seed: u64,
    pub snapshot_every: u64,
    pub algos: Vec<Algo>,
    pub oracle_tol: f64,
    pub workers: usize,
    pub pds: PdsOptions,
    pub q_schedule: StepSchedule,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 20 runs of 3.5M training and 1M evaluation slots.
    pub fn desk(model: ModelConfig) -> Self {
        Self {
            model,
            train_slots: 3_500_000,
            eval_slots: 1_000_000,
            runs: 20,
            base_seed: 2024,
            snapshot_every: 1000,
            algos: vec![Algo::PdsVi, Algo::QLearning],
            oracle_tol: 1e-9,
            workers: 0,
            pds: PdsOptions::default(),
            q_schedule: StepSchedule::default(),
        }
    }

    /// Full reproduction scale: 1000 runs.
    pub fn full_fidelity(model: ModelConfig) -> Self {
        Self {
            runs: 1000,
            ..Self::desk(model)
        }
    }

    pub fn q_options(&self) -> QOptions {
        QOptions {
            schedule: self.q_schedule,
            ..QOptions::for_training(self.train_slots)
        }
    }
}

/// Seeds of one run: training and evaluation streams.
pub fn run_streams(base_seed: u64, run_id: u64) -> (RngStream, RngStream) {
    let train = RngStream::for_run(base_seed, run_id);
    let eval = train.derive(2);
    (train, eval)
}

/// Labels attached to evaluation rows.
#[derive(Clone, Copy, Debug)]
pub struct EvalContext {
    pub run_id: u64,
    pub algo: Algo,
    /// Added to the 1-based evaluation slot to form the row's iteration.
    pub iteration_offset: u64,
    /// Reported in every row; the frozen policy's values do not change.
    pub rbe: f64,
    pub snapshot_every: u64,
}

/// Runs the environment under a fixed policy, starting from the empty
/// system. Rows carry the evaluation-phase running mean cost and blocked count.
pub fn evaluate_policy(mdp: &Mdp, policy: &Policy, slots: u64, rng: RngStream, ctx: EvalContext) -> Vec<MetricsRow> {
    assert_eq!(policy.actions.len(), mdp.num_states(), "policy must be total");
    let mut env = Environment::new(mdp, rng);
    let mut post = env.reset_index();
    let (mut cost_sum, mut blocked) = (0.0, 0u64);
    let mut rows = Vec::new();
    for slot in 1..=slots {
        let out = env.step_indexed(post);
        let state = mdp.state_index(out.next_alloc, out.arrival);
        let action = policy.actions[state];
        post = mdp
            .post_alloc(out.next_alloc, out.arrival, action)
            .expect("policy action is feasible");
        cost_sum += mdp.cost(out.next_alloc);
        blocked += u64::from(out.arrival > 0 && action.is_block());
        if slot.is_multiple_of(ctx.snapshot_every) || slot == slots {
            rows.push(MetricsRow {
                run_id: ctx.run_id,
                algo: ctx.algo,
                phase: Phase::Eval,
                iteration: ctx.iteration_offset + slot,
                rbe: ctx.rbe,
                avg_cost: cost_sum / slot as f64,
                blocked_cumulative: blocked,
            });
        }
    }
    rows
}

/// Output of one seeded run of one algorithm.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub run_id: u64,
    pub algo: Algo,
    pub rows: Vec<MetricsRow>,
    pub policy: Policy,
}

pub fn run_single(mdp: &Mdp, vstar: &ValueTable, exp: &ExperimentConfig, algo: Algo, run_id: u64) -> RunResult {
    let (train_rng, eval_rng) = run_streams(exp.base_seed, run_id);
    let mut rec = MetricsRecorder::new(mdp, run_id, algo, vstar, exp.snapshot_every, exp.train_slots);
    let (policy, final_rbe) = match algo {
        Algo::PdsVi => {
            let t = pds_vi_train(mdp, &exp.pds, exp.train_slots, train_rng, &mut rec);
            let rbe = final_rbe(&rec, mdp, &t.learner, vstar);
            (t.policy, rbe)
        }
        Algo::QLearning => {
            let t = q_learning_train(mdp, &exp.q_options(), exp.train_slots, train_rng, &mut rec);
            let rbe = final_rbe(&rec, mdp, &t.learner, vstar);
            (t.policy, rbe)
        }
    };
    let mut rows = rec.into_rows();
    rows.extend(evaluate_policy(
        mdp,
        &policy,
        exp.eval_slots,
        eval_rng,
        EvalContext {
            run_id,
            algo,
            iteration_offset: exp.train_slots,
            rbe: final_rbe,
            snapshot_every: exp.snapshot_every,
        },
    ));
    RunResult {
        run_id,
        algo,
        rows,
        policy,
    }
}

fn final_rbe(rec: &MetricsRecorder<'_>, mdp: &Mdp, learner: &dyn ValueView, vstar: &ValueTable) -> f64 {
    // Nothing visited means no training happened; the metric is reported as 0.
    rec.visits().rbe_of(mdp, learner, vstar).unwrap_or(0.0)
}

/// Mean and standard error per `(algo, phase, iteration)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub algo: Algo,
    pub phase: Phase,
    pub iteration: u64,
    pub runs: usize,
    pub rbe_mean: f64,
    pub rbe_stderr: f64,
    pub avg_cost_mean: f64,
    pub avg_cost_stderr: f64,
    pub blocked_mean: f64,
    pub blocked_stderr: f64,
}

/// `(mean, standard error)` with the unbiased variance; stderr is 0 for one sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates rows; input order does not affect the output.
pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.algo, r.phase, r.iteration, r.run_id));
    let mut groups: BTreeMap<(Algo, Phase, u64), Vec<&MetricsRow>> = BTreeMap::new();
    for r in sorted {
        groups.entry((r.algo, r.phase, r.iteration)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((algo, phase, iteration), g)| {
            let col = |f: fn(&MetricsRow) -> f64| mean_stderr(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (rbe_mean, rbe_stderr) = col(|r| r.rbe);
            let (avg_cost_mean, avg_cost_stderr) = col(|r| r.avg_cost);
            let (blocked_mean, blocked_stderr) = col(|r| r.blocked_cumulative as f64);
            AggregateRow {
                algo,
                phase,
                iteration,
                runs: g.len(),
                rbe_mean,
                rbe_stderr,
                avg_cost_mean,
                avg_cost_stderr,
                blocked_mean,
                blocked_stderr,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// Sorted by `(algo, run_id, phase, iteration)`.
    pub rows: Vec<MetricsRow>,
    pub aggregate: Vec<AggregateRow>,
    /// Learned policy per `(algo, run_id)`.
    pub policies: Vec<(Algo, u64, Policy)>,
}

impl ExperimentResult {
    pub fn aggregate_at(&self, algo: Algo, phase: Phase, iteration: u64) -> Option<&AggregateRow> {
        self.aggregate
            .iter()
            .find(|r| r.algo == algo && r.phase == phase && r.iteration == iteration)
    }

    pub fn series(&self, algo: Algo, phase: Phase) -> impl Iterator<Item = &AggregateRow> {
        self.aggregate
            .iter()
            .filter(move |r| r.algo == algo && r.phase == phase)
    }
}

/// Independent seeded runs of every algorithm, executed on `workers` threads
/// (0 = all cores).
pub fn monte_carlo(mdp: &Mdp, vstar: &ValueTable, exp: &ExperimentConfig) -> ExperimentResult {
    assert!(exp.runs >= 1, "need at least one run");
    let jobs: Vec<(Algo, u64)> = exp
        .algos
        .iter()
        .flat_map(|&a| (0..exp.runs).map(move |r| (a, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.workers)
        .build()
        .expect("thread pool");
    let mut results: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(algo, run)| run_single(mdp, vstar, exp, algo, run))
            .collect()
    });
    results.sort_by_key(|r| (r.algo, r.run_id));

    let rows: Vec<MetricsRow> = results.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let aggregate = aggregate(&rows);
    let policies = results.into_iter().map(|r| (r.algo, r.run_id, r.policy)).collect();
    ExperimentResult {
        rows,
        aggregate,
        policies,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(run_id: u64, iteration: u64, rbe: f64) -> MetricsRow {
        MetricsRow {
            run_id,
            algo: Algo::PdsVi,
            phase: Phase::Train,
            iteration,
            rbe,
            avg_cost: 10.0 + rbe,
            blocked_cumulative: run_id,
        }
    }

    #[test]
    fn mean_stderr_values() {
        assert_eq!(mean_stderr(&[4.0]), (4.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn aggregate_is_order_independent() {
        let rows = vec![row(0, 10, 0.5), row(1, 10, 0.25), row(2, 10, 0.125), row(0, 20, 0.1)];
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(aggregate(&rows), aggregate(&rev));
        let a = aggregate(&rows);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].runs, 3);
        assert!((a[0].rbe_mean - 0.875 / 3.0).abs() < 1e-15);
        assert_eq!(a[0].blocked_mean, 1.0);
        assert_eq!(a[1].rbe_stderr, 0.0);
    }
}
