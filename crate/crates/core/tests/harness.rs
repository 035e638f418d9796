mod common;

use std::process::Command;

use flowalloc::harness::{
    aggregate, evaluate_policy, metrics_csv_body, monte_carlo, run_single, run_streams, Algo, EvalContext,
    ExperimentConfig, MetricsRow, Phase, AGGREGATE_COLUMNS, METRICS_COLUMNS,
};
use flowalloc::oracle::{solve, SolveMode};

use common::{small, small_config};

fn small_experiment() -> ExperimentConfig {
    ExperimentConfig {
        train_slots: 20_000,
        eval_slots: 10_000,
        runs: 4,
        snapshot_every: 2_500,
        ..ExperimentConfig::desk(small_config())
    }
}

#[test]
fn single_run_aggregate_is_the_run() {
    let mdp = small();
    let vstar = solve(&mdp, 1e-10, SolveMode::Pds).value;
    let exp = ExperimentConfig {
        runs: 1,
        ..small_experiment()
    };
    let res = monte_carlo(&mdp, &vstar, &exp);
    for algo in [Algo::PdsVi, Algo::QLearning] {
        let single = run_single(&mdp, &vstar, &exp, algo, 0);
        for row in &single.rows {
            let a = res.aggregate_at(algo, row.phase, row.iteration).unwrap();
            assert_eq!(a.runs, 1);
            assert_eq!(a.rbe_mean, row.rbe);
            assert_eq!(a.avg_cost_mean, row.avg_cost);
            assert_eq!(a.blocked_mean, row.blocked_cumulative as f64);
            assert_eq!((a.rbe_stderr, a.avg_cost_stderr, a.blocked_stderr), (0.0, 0.0, 0.0));
        }
    }
}

#[test]
fn aggregate_means_recompute_from_rows() {
    let mdp = small();
    let vstar = solve(&mdp, 1e-10, SolveMode::Pds).value;
    let exp = small_experiment();
    let res = monte_carlo(&mdp, &vstar, &exp);
    let rows_at = |algo, phase, it| -> Vec<&MetricsRow> {
        res.rows
            .iter()
            .filter(|r| r.algo == algo && r.phase == phase && r.iteration == it)
            .collect()
    };
    for a in &res.aggregate {
        let g = rows_at(a.algo, a.phase, a.iteration);
        assert_eq!(g.len(), exp.runs as usize);
        let n = g.len() as f64;
        let mean = g.iter().map(|r| r.avg_cost).sum::<f64>() / n;
        let var = g.iter().map(|r| (r.avg_cost - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((a.avg_cost_mean - mean).abs() < 1e-12 * mean);
        assert!((a.avg_cost_stderr - (var / n).sqrt()).abs() < 1e-9);
    }
    let train_its: Vec<u64> = res.series(Algo::PdsVi, Phase::Train).map(|a| a.iteration).collect();
    assert_eq!(
        train_its,
        vec![2_500, 5_000, 7_500, 10_000, 12_500, 15_000, 17_500, 20_000]
    );
    let last_eval = res.series(Algo::QLearning, Phase::Eval).last().unwrap();
    assert_eq!(last_eval.iteration, 30_000);
}

#[test]
fn runs_are_deterministic_and_worker_count_does_not_matter() {
    let mdp = small();
    let vstar = solve(&mdp, 1e-10, SolveMode::Pds).value;
    let one = monte_carlo(
        &mdp,
        &vstar,
        &ExperimentConfig {
            workers: 1,
            ..small_experiment()
        },
    );
    let many = monte_carlo(
        &mdp,
        &vstar,
        &ExperimentConfig {
            workers: 4,
            ..small_experiment()
        },
    );
    assert_eq!(metrics_csv_body(&one.rows), metrics_csv_body(&many.rows));
    assert_eq!(one.aggregate, many.aggregate);
    let mut shuffled = one.rows.clone();
    shuffled.reverse();
    assert_eq!(aggregate(&shuffled), one.aggregate);
}

#[test]
fn optimal_policy_beats_learned_policies_on_common_seeds() {
    let mdp = small();
    let sol = solve(&mdp, 1e-10, SolveMode::Pds);
    let exp = ExperimentConfig {
        eval_slots: 200_000,
        ..small_experiment()
    };
    let res = monte_carlo(&mdp, &sol.value, &exp);
    let eval = |policy, run| {
        let ctx = EvalContext {
            run_id: run,
            algo: Algo::PdsVi,
            iteration_offset: 0,
            rbe: 0.0,
            snapshot_every: exp.eval_slots,
        };
        evaluate_policy(&mdp, policy, exp.eval_slots, run_streams(exp.base_seed, run).1, ctx)
            .last()
            .unwrap()
            .avg_cost
    };
    let optimal: f64 = (0..exp.runs).map(|r| eval(&sol.policy, r)).sum::<f64>() / exp.runs as f64;
    for algo in [Algo::PdsVi, Algo::QLearning] {
        let learned: f64 = res
            .policies
            .iter()
            .filter(|(a, _, _)| *a == algo)
            .map(|(_, run, p)| eval(p, *run))
            .sum::<f64>()
            / exp.runs as f64;
        assert!(optimal <= learned, "{algo}: {optimal} > {learned}");
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowalloc"))
}

fn configs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cli_outputs_are_byte_identical_across_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("small.toml");
    let vstar = dir.path().join("vstar.csv");
    run_ok(bin().args(["dp", "--config"]).arg(&cfg).arg("--out").arg(&vstar));
    assert!(dir.path().join("vstar_pds.csv").exists());

    let train = |name: &str, seed: &str| {
        let m = dir.path().join(format!("{name}.csv"));
        let p = dir.path().join(format!("{name}_policy.csv"));
        run_ok(
            bin()
                .args([
                    "train",
                    "--algo",
                    "pds-vi",
                    "--slots",
                    "30000",
                    "--snapshot-every",
                    "1000",
                    "--seed",
                    seed,
                ])
                .arg("--config")
                .arg(&cfg)
                .arg("--vstar")
                .arg(&vstar)
                .arg("--metrics-out")
                .arg(&m)
                .arg("--policy-out")
                .arg(&p),
        );
        (std::fs::read(m).unwrap(), std::fs::read(p).unwrap())
    };
    let a = train("a", "7");
    let b = train("b", "7");
    let c = train("c", "8");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);

    let text = String::from_utf8(a.0).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), METRICS_COLUMNS);
    assert_eq!(lines.count(), 30);

    let policy = dir.path().join("a_policy.csv");
    let ev = run_ok(
        bin()
            .args(["evaluate", "--slots", "5000", "--config"])
            .arg(&cfg)
            .arg("--policy")
            .arg(&policy),
    );
    assert!(ev.starts_with("avg_cost="));

    let compare = |out: &str| {
        let d = dir.path().join(out);
        run_ok(
            bin()
                .args([
                    "compare",
                    "--runs",
                    "2",
                    "--train-slots",
                    "5000",
                    "--eval-slots",
                    "2000",
                ])
                .args(["--snapshot-every", "1000", "--config"])
                .arg(&cfg)
                .arg("--vstar")
                .arg(&vstar)
                .arg("--out-dir")
                .arg(&d),
        );
        (
            std::fs::read(d.join("metrics.csv")).unwrap(),
            std::fs::read(d.join("aggregate.csv")).unwrap(),
        )
    };
    let x = compare("x");
    assert_eq!(x, compare("y"));
    let agg = String::from_utf8(x.1).unwrap();
    assert_eq!(agg.lines().nth(1).unwrap(), AGGREGATE_COLUMNS);
}

#[test]
fn cli_rejects_mismatched_tables_and_oversized_instances() {
    let dir = tempfile::tempdir().unwrap();
    let vstar = dir.path().join("vstar.csv");
    run_ok(
        bin()
            .args(["dp", "--config"])
            .arg(configs_dir().join("tiny.toml"))
            .arg("--out")
            .arg(&vstar),
    );
    let out = bin()
        .args(["train", "--algo", "q-learning", "--slots", "10", "--config"])
        .arg(configs_dir().join("small.toml"))
        .arg("--vstar")
        .arg(&vstar)
        .arg("--metrics-out")
        .arg(dir.path().join("m.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));

    let big = dir.path().join("big.toml");
    let mut cfg = flowalloc::ModelConfig::reference();
    cfg.capacity = vec![1000.0; 5];
    std::fs::write(&big, cfg.to_toml_string()).unwrap();
    let out = bin()
        .args(["dp", "--config"])
        .arg(&big)
        .arg("--out")
        .arg(dir.path().join("v.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn enumerate_reports_reference_cardinality() {
    let out = run_ok(bin().arg("enumerate"));
    assert!(out.contains("allocations=32768"));
    assert!(out.contains("states=98304"));
}
