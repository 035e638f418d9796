//! Exact definition of the flow-allocation MDP: allocation matrices,
//! feasibility, stage cost, actions and the transition kernel.
//!
//! Everything here works on explicit matrices and is meant to be read
//! against the model. Solvers and learners use the precomputed index view
//! in [`crate::mdp`] instead.

mod indexer;
mod kernel;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use indexer::{StateIndexer, DEFAULT_STATE_CAP};
pub use kernel::{
    departure_distribution_upf, transition_distribution, DepartureMatrix, DepartureRow, TransitionDistribution,
};

use crate::config::ModelConfig;
use crate::error::{Error, Result};

/// `counts[k][m]`: number of type-`m` flows served by UPF `k` (both 0-based).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AllocationMatrix {
    upfs: usize,
    flow_types: usize,
    counts: Vec<u32>,
}

impl AllocationMatrix {
    pub fn zeros(upfs: usize, flow_types: usize) -> Self {
        Self {
            upfs,
            flow_types,
            counts: vec![0; upfs * flow_types],
        }
    }

    pub fn from_rows<R: AsRef<[u32]>>(rows: &[R]) -> Self {
        let flow_types = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(
            rows.iter().all(|r| r.as_ref().len() == flow_types),
            "ragged allocation rows"
        );
        Self {
            upfs: rows.len(),
            flow_types,
            counts: rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect(),
        }
    }

    pub fn for_config(cfg: &ModelConfig) -> Self {
        Self::zeros(cfg.upfs, cfg.flow_types)
    }

    pub fn upfs(&self) -> usize {
        self.upfs
    }

    pub fn flow_types(&self) -> usize {
        self.flow_types
    }

    pub fn get(&self, k: usize, m: usize) -> u32 {
        self.counts[k * self.flow_types + m]
    }

    pub fn set(&mut self, k: usize, m: usize, value: u32) {
        self.counts[k * self.flow_types + m] = value;
    }

    pub fn row(&self, k: usize) -> &[u32] {
        &self.counts[k * self.flow_types..(k + 1) * self.flow_types]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [u32] {
        &mut self.counts[k * self.flow_types..(k + 1) * self.flow_types]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.counts.chunks(self.flow_types.max(1)).take(self.upfs)
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Number of nonzero entries.
    pub fn nonzeros(&self) -> usize {
        self.counts.iter().filter(|&&c| c != 0).count()
    }

    fn check_shape(&self, cfg: &ModelConfig) -> Result<()> {
        if self.upfs != cfg.upfs || self.flow_types != cfg.flow_types {
            return Err(Error::Shape {
                rows: self.upfs,
                cols: self.flow_types,
                k: cfg.upfs,
                m: cfg.flow_types,
            });
        }
        Ok(())
    }
}

impl fmt::Display for AllocationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, row) in self.rows().enumerate() {
            if k > 0 {
                f.write_str(";")?;
            }
            for (m, c) in row.iter().enumerate() {
                if m > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

/// Pre-decision state `(n, f)`; `arrival == 0` means no flow arrived.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SystemState {
    pub alloc: AllocationMatrix,
    pub arrival: usize,
}

/// State right after the allocation decision, before departures and the next arrival.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PostDecisionState {
    pub alloc: AllocationMatrix,
    pub arrival: usize,
}

/// Allocation target: 0 blocks the flow, `k >= 1` sends it to UPF `k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action(pub usize);

impl Action {
    pub const BLOCK: Action = Action(0);

    pub fn is_block(self) -> bool {
        self.0 == 0
    }

    /// 0-based UPF index, `None` when blocking.
    pub fn upf(self) -> Option<usize> {
        self.0.checked_sub(1)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl ModelConfig {
    /// Total average rate UPF `k` (0-based) must support.
    pub fn load_rate(&self, alloc: &AllocationMatrix, k: usize) -> Result<f64> {
        alloc.check_shape(self)?;
        if k >= self.upfs {
            return Err(Error::IndexOutOfRange {
                index: k,
                bound: self.upfs,
            });
        }
        Ok(row_load(alloc.row(k), &self.mean_rate))
    }

    /// First UPF whose load is not strictly below capacity.
    pub fn check_feasible(&self, alloc: &AllocationMatrix) -> Result<()> {
        alloc.check_shape(self)?;
        for (k, row) in alloc.rows().enumerate() {
            let load = row_load(row, &self.mean_rate);
            if load >= self.capacity[k] {
                return Err(Error::Infeasible {
                    upf: k,
                    load,
                    capacity: self.capacity[k],
                });
            }
        }
        Ok(())
    }

    /// Power plus delay cost of an allocation. Independent of the arrival.
    pub fn stage_cost(&self, alloc: &AllocationMatrix) -> Result<f64> {
        self.check_feasible(alloc)?;
        Ok(alloc
            .rows()
            .enumerate()
            .map(|(k, row)| {
                upf_cost(
                    row_load(row, &self.mean_rate),
                    self.capacity[k],
                    self.unit_power_cost[k],
                )
            })
            .sum())
    }

    fn check_state(&self, alloc: &AllocationMatrix, arrival: usize) -> Result<()> {
        self.check_feasible(alloc)?;
        if arrival > self.flow_types {
            return Err(Error::IndexOutOfRange {
                index: arrival,
                bound: self.flow_types + 1,
            });
        }
        Ok(())
    }

    /// Feasible actions in ascending order. Admission is forced: blocking is
    /// only available when no UPF can host the arrival, or nothing arrived.
    pub fn feasible_actions(&self, s: &SystemState) -> Result<Vec<Action>> {
        self.check_state(&s.alloc, s.arrival)?;
        if s.arrival == 0 {
            return Ok(vec![Action::BLOCK]);
        }
        let extra = self.mean_rate[s.arrival - 1];
        let admit: Vec<Action> = (0..self.upfs)
            .filter(|&k| self.capacity[k] > row_load(s.alloc.row(k), &self.mean_rate) + extra)
            .map(|k| Action(k + 1))
            .collect();
        Ok(if admit.is_empty() { vec![Action::BLOCK] } else { admit })
    }

    /// Applies `a` to `s`, yielding the post-decision state `(n + a, f)`.
    pub fn apply_action(&self, s: &SystemState, a: Action) -> Result<PostDecisionState> {
        if !self.feasible_actions(s)?.contains(&a) {
            return Err(Error::InfeasibleAction { action: a.0 });
        }
        let mut alloc = s.alloc.clone();
        if let (Some(k), Some(m)) = (a.upf(), s.arrival.checked_sub(1)) {
            alloc.set(k, m, alloc.get(k, m) + 1);
        }
        Ok(PostDecisionState {
            alloc,
            arrival: s.arrival,
        })
    }
}

/// 0/1 indicator of action `a` for arrival `f`: a single 1 at
/// `(a - 1, f - 1)` when both are nonzero, otherwise all zeros.
pub fn action_matrix(a: Action, f: usize, cfg: &ModelConfig) -> AllocationMatrix {
    let mut out = AllocationMatrix::for_config(cfg);
    if let (Some(k), Some(m)) = (a.upf(), f.checked_sub(1)) {
        if k < cfg.upfs && m < cfg.flow_types {
            out.set(k, m, 1);
        }
    }
    out
}

pub(crate) fn row_load(row: &[u32], mean_rate: &[f64]) -> f64 {
    row.iter().zip(mean_rate).map(|(&n, &r)| f64::from(n) * r).sum()
}

pub(crate) fn upf_cost(load: f64, capacity: f64, unit_cost: f64) -> f64 {
    unit_cost * load + capacity / (capacity - load)
}
