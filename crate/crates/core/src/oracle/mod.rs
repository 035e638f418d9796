//! Model-based ground truth: value iteration on the full kernel and on the
//! post-decision-state factorization, conversions between the two value
//! functions, and greedy policy extraction.

pub(crate) mod persist;

use rayon::prelude::*;

use crate::mdp::Mdp;
use crate::model::Action;

pub use persist::{read_policy_csv, read_table_csv, write_policy_csv, write_table_csv, TableKind};

/// Value per state index.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
}

/// Value per post-decision allocation index (independent of the arrival).
#[derive(Clone, Debug, PartialEq)]
pub struct PdsValueTable {
    pub values: Vec<f64>,
}

/// Action per state index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub actions: Vec<Action>,
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "tables differ in length");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl ValueTable {
    pub fn zeros(mdp: &Mdp) -> Self {
        Self {
            values: vec![0.0; mdp.num_states()],
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        sup_distance(&self.values, &other.values)
    }
}

impl PdsValueTable {
    pub fn zeros(mdp: &Mdp) -> Self {
        Self {
            values: vec![0.0; mdp.num_allocs()],
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        sup_distance(&self.values, &other.values)
    }
}

impl Policy {
    /// Checks that every action is feasible and admission is never refused
    /// while some UPF has room.
    pub fn is_admissible(&self, mdp: &Mdp) -> bool {
        self.actions.len() == mdp.num_states()
            && self.actions.iter().enumerate().all(|(s, &a)| {
                let (alloc, f) = mdp.split_state(s);
                mdp.moves(alloc, f).iter().any(|&(m, _)| m == a)
            })
    }
}

/// `sum_{n', f'} P(n' | post) P(f') V(n', f')`, enumerating every successor.
fn expected_next_value(mdp: &Mdp, post: usize, v: &[f64]) -> f64 {
    let arrivals = mdp.arrival_probs();
    let mut acc = 0.0;
    mdp.for_each_departure(post, |next, pu| {
        for (f, &pf) in arrivals.iter().enumerate() {
            if pf > 0.0 {
                acc += pu * pf * v[mdp.state_index(next, f)];
            }
        }
    });
    acc
}

/// One synchronous sweep of `V(s) <- xi(s) + min_a gamma * E[V(s') | s, a]`.
pub fn bellman_backup_direct(mdp: &Mdp, v: &ValueTable) -> ValueTable {
    let gamma = mdp.discount();
    let values = (0..mdp.num_states())
        .into_par_iter()
        .map(|s| {
            let (alloc, f) = mdp.split_state(s);
            let best = mdp
                .moves(alloc, f)
                .iter()
                .map(|&(_, post)| expected_next_value(mdp, post, &v.values))
                .fold(f64::INFINITY, f64::min);
            mdp.cost(alloc) + gamma * best
        })
        .collect();
    ValueTable { values }
}

/// `E_{f'} [ min_{a'} xi(n) + gamma * V~(n + a') ]` for every allocation `n`.
fn arrival_averaged_min(mdp: &Mdp, vt: &PdsValueTable) -> Vec<f64> {
    let gamma = mdp.discount();
    let arrivals = mdp.arrival_probs();
    (0..mdp.num_allocs())
        .into_par_iter()
        .map(|n| {
            let cost = mdp.cost(n);
            arrivals
                .iter()
                .enumerate()
                .filter(|(_, &pf)| pf > 0.0)
                .map(|(f, &pf)| pf * (cost + gamma * mdp.greedy(n, f, &vt.values).2))
                .sum()
        })
        .collect()
}

/// One synchronous sweep of the post-decision Bellman operator:
/// `V~(n) <- E_u E_{f'} min_{a'} [ xi(n - u) + gamma * V~(n - u + a') ]`.
///
/// The inner minimum is computed once per `(allocation, f')` pair, averaged
/// over arrivals, then pushed through the departure expectation axis by axis.
pub fn pds_bellman_backup(mdp: &Mdp, vt: &PdsValueTable) -> PdsValueTable {
    let mut values = arrival_averaged_min(mdp, vt);
    mdp.expect_departures_in_place(&mut values, &mut Vec::new());
    PdsValueTable { values }
}

/// `V(s) = min_a [ xi(s) + gamma * V~(n + a) ]`.
pub fn value_from_pds(mdp: &Mdp, vt: &PdsValueTable) -> ValueTable {
    let gamma = mdp.discount();
    let values = (0..mdp.num_states())
        .into_par_iter()
        .map(|s| {
            let (alloc, f) = mdp.split_state(s);
            mdp.cost(alloc) + gamma * mdp.greedy(alloc, f, &vt.values).2
        })
        .collect();
    ValueTable { values }
}

/// `V~(n) = sum_{u, f'} P(u | n) P(f') V(n - u, f')`.
pub fn pds_from_value(mdp: &Mdp, v: &ValueTable) -> PdsValueTable {
    let values = (0..mdp.num_allocs())
        .into_par_iter()
        .map(|n| expected_next_value(mdp, n, &v.values))
        .collect();
    PdsValueTable { values }
}

/// Greedy policy against a post-decision value table, lowest action on ties.
pub fn greedy_policy(mdp: &Mdp, vt: &PdsValueTable) -> Policy {
    let actions = (0..mdp.num_states())
        .into_par_iter()
        .map(|s| {
            let (alloc, f) = mdp.split_state(s);
            mdp.greedy(alloc, f, &vt.values).0
        })
        .collect();
    Policy { actions }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    Direct,
    Pds,
}

impl std::str::FromStr for SolveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Self::Direct),
            "pds" => Ok(Self::Pds),
            other => Err(format!("unknown mode `{other}` (direct|pds)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub value: ValueTable,
    pub pds_value: PdsValueTable,
    pub policy: Policy,
    pub sweeps: usize,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
}

/// Sweep count after which a `gamma`-contraction starting with first-step
/// change `first_change` has changed by at most `tol` per sweep.
pub fn sweep_bound(gamma: f64, tol: f64, first_change: f64) -> usize {
    if first_change <= tol {
        return 1;
    }
    ((tol / first_change).ln() / gamma.ln()).ceil() as usize + 1
}

/// Value iteration from zero until the sup-norm change is at most `tol`.
pub fn solve(mdp: &Mdp, tol: f64, mode: SolveMode) -> Solution {
    assert!(tol > 0.0, "tolerance must be positive");
    match mode {
        SolveMode::Direct => {
            let mut v = ValueTable::zeros(mdp);
            let mut sweeps = 0;
            let residual = loop {
                let next = bellman_backup_direct(mdp, &v);
                let change = next.sup_distance(&v);
                v = next;
                sweeps += 1;
                if change <= tol {
                    break change;
                }
            };
            let pds_value = pds_from_value(mdp, &v);
            let policy = greedy_policy(mdp, &pds_value);
            Solution {
                value: v,
                pds_value,
                policy,
                sweeps,
                residual,
            }
        }
        SolveMode::Pds => {
            let mut vt = PdsValueTable::zeros(mdp);
            let mut sweeps = 0;
            let residual = loop {
                let next = pds_bellman_backup(mdp, &vt);
                let change = next.sup_distance(&vt);
                vt = next;
                sweeps += 1;
                if change <= tol {
                    break change;
                }
            };
            let value = value_from_pds(mdp, &vt);
            let policy = greedy_policy(mdp, &vt);
            Solution {
                value,
                pds_value: vt,
                policy,
                sweeps,
                residual,
            }
        }
    }
}
