//! Precomputed index-level view of the model.
//!
//! Allocations are addressed by their dense index from [`StateIndexer`]; per-UPF
//! lookup tables turn "add a flow", "remove a flow" and "departure outcomes"
//! into digit arithmetic on that index.

use smallvec::SmallVec;

use crate::config::ModelConfig;
use crate::error::Result;
use crate::model::{row_load, upf_cost, Action, AllocationMatrix, PostDecisionState, StateIndexer, SystemState};

const NO_DIGIT: u32 = u32::MAX;

/// Feasible moves from one state: `(action, post-decision allocation index)`.
pub type Moves = SmallVec<[(Action, usize); 8]>;

/// One way a single UPF row can change at the end of a slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowDeparture {
    /// 0-based type of the departing flow, `None` if nobody leaves.
    pub flow_type: Option<usize>,
    pub prob: f64,
    /// Signed change of the allocation index.
    pub index_delta: isize,
}

#[derive(Clone, Debug)]
struct UpfTables {
    /// `add[digit * M + m]`: digit after admitting a type-`m` flow.
    add: Vec<u32>,
    /// Outcomes per digit; the stay outcome comes first.
    departures: Vec<Vec<RowDeparture>>,
    /// Flow count per type, `counts[digit * M + m]`.
    counts: Vec<u32>,
    totals: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct Mdp {
    cfg: ModelConfig,
    indexer: StateIndexer,
    upf: Vec<UpfTables>,
    alloc_cost: Vec<f64>,
    arrival: Vec<f64>,
}

impl Mdp {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let indexer = StateIndexer::enumerate(&cfg)?;
        Ok(Self::with_indexer(cfg, indexer))
    }

    pub fn with_indexer(cfg: ModelConfig, indexer: StateIndexer) -> Self {
        let m = cfg.flow_types;
        let mut upf = Vec::with_capacity(cfg.upfs);
        for k in 0..cfg.upfs {
            let rows = indexer.upf_vectors(k);
            let stride = indexer.strides()[k] as isize;
            let mut add = vec![NO_DIGIT; rows.len() * m];
            let mut departures = Vec::with_capacity(rows.len());
            let mut counts = Vec::with_capacity(rows.len() * m);
            let mut totals = Vec::with_capacity(rows.len());
            let mut scratch = vec![0u32; m];
            for (d, row) in rows.iter().enumerate() {
                counts.extend_from_slice(row);
                let total: u32 = row.iter().sum();
                totals.push(total);
                for t in 0..m {
                    scratch.copy_from_slice(row);
                    scratch[t] += 1;
                    if let Some(nd) = indexer.digit_of_row(k, &scratch) {
                        add[d * m + t] = nd as u32;
                    }
                }
                let q = cfg.departure_prob[k];
                let mut outs = Vec::with_capacity(m + 1);
                if total == 0 {
                    outs.push(RowDeparture {
                        flow_type: None,
                        prob: 1.0,
                        index_delta: 0,
                    });
                } else {
                    outs.push(RowDeparture {
                        flow_type: None,
                        prob: 1.0 - q,
                        index_delta: 0,
                    });
                    for t in 0..m {
                        if row[t] == 0 {
                            continue;
                        }
                        scratch.copy_from_slice(row);
                        scratch[t] -= 1;
                        let nd = indexer
                            .digit_of_row(k, &scratch)
                            .expect("feasible rows are closed under removal");
                        outs.push(RowDeparture {
                            flow_type: Some(t),
                            prob: q * f64::from(row[t]) / f64::from(total),
                            index_delta: (nd as isize - d as isize) * stride,
                        });
                    }
                }
                departures.push(outs);
            }
            upf.push(UpfTables {
                add,
                departures,
                counts,
                totals,
            });
        }

        let row_cost: Vec<Vec<f64>> = (0..cfg.upfs)
            .map(|k| {
                indexer
                    .upf_vectors(k)
                    .iter()
                    .map(|row| upf_cost(row_load(row, &cfg.mean_rate), cfg.capacity[k], cfg.unit_power_cost[k]))
                    .collect()
            })
            .collect();
        let alloc_cost = (0..indexer.total_allocs())
            .map(|a| (0..cfg.upfs).map(|k| row_cost[k][indexer.digit(a, k)]).sum())
            .collect();
        let arrival = cfg.arrival_distribution().into_iter().map(|(_, p)| p).collect();

        Self {
            cfg,
            indexer,
            upf,
            alloc_cost,
            arrival,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn indexer(&self) -> &StateIndexer {
        &self.indexer
    }

    pub fn upfs(&self) -> usize {
        self.cfg.upfs
    }

    pub fn flow_types(&self) -> usize {
        self.cfg.flow_types
    }

    pub fn discount(&self) -> f64 {
        self.cfg.discount
    }

    pub fn num_allocs(&self) -> usize {
        self.indexer.total_allocs()
    }

    pub fn num_states(&self) -> usize {
        self.indexer.total_states()
    }

    pub fn state_index(&self, alloc: usize, arrival: usize) -> usize {
        arrival * self.num_allocs() + alloc
    }

    /// `(allocation index, arrival)` of a state index.
    pub fn split_state(&self, state: usize) -> (usize, usize) {
        (state % self.num_allocs(), state / self.num_allocs())
    }

    pub fn digit(&self, alloc: usize, k: usize) -> usize {
        self.indexer.digit(alloc, k)
    }

    /// Stage cost of an allocation index.
    pub fn cost(&self, alloc: usize) -> f64 {
        self.alloc_cost[alloc]
    }

    pub fn costs(&self) -> &[f64] {
        &self.alloc_cost
    }

    /// `P(f')` for `f' = 0..=M`.
    pub fn arrival_probs(&self) -> &[f64] {
        &self.arrival
    }

    pub fn upf_flow_count(&self, alloc: usize, k: usize) -> u32 {
        self.upf[k].totals[self.digit(alloc, k)]
    }

    /// Type counts of UPF `k`'s row.
    pub fn upf_row(&self, alloc: usize, k: usize) -> &[u32] {
        let m = self.cfg.flow_types;
        let d = self.digit(alloc, k);
        &self.upf[k].counts[d * m..(d + 1) * m]
    }

    pub fn departure_outcomes(&self, alloc: usize, k: usize) -> &[RowDeparture] {
        &self.upf[k].departures[self.digit(alloc, k)]
    }

    /// Allocation index after removing one type-`m` flow from UPF `k`.
    pub fn remove_flow(&self, alloc: usize, k: usize, m: usize) -> Option<usize> {
        self.departure_outcomes(alloc, k)
            .iter()
            .find(|o| o.flow_type == Some(m))
            .map(|o| (alloc as isize + o.index_delta) as usize)
    }

    /// Allocation index after placing a type-`m` flow (0-based) on UPF `k`, if it fits.
    pub fn add_flow(&self, alloc: usize, k: usize, m: usize) -> Option<usize> {
        let d = self.digit(alloc, k);
        let nd = self.upf[k].add[d * self.cfg.flow_types + m];
        (nd != NO_DIGIT).then(|| {
            let stride = self.indexer.strides()[k];
            alloc - d * stride + nd as usize * stride
        })
    }

    /// Feasible actions and their post-decision allocations, ascending by action.
    pub fn moves(&self, alloc: usize, arrival: usize) -> Moves {
        let mut out = Moves::new();
        if let Some(m) = arrival.checked_sub(1) {
            for k in 0..self.cfg.upfs {
                if let Some(next) = self.add_flow(alloc, k, m) {
                    out.push((Action(k + 1), next));
                }
            }
        }
        if out.is_empty() {
            out.push((Action::BLOCK, alloc));
        }
        out
    }

    /// Post-decision allocation of a feasible action, `None` otherwise.
    pub fn post_alloc(&self, alloc: usize, arrival: usize, action: Action) -> Option<usize> {
        self.moves(alloc, arrival)
            .into_iter()
            .find(|&(a, _)| a == action)
            .map(|(_, next)| next)
    }

    /// `argmin_a table[post(a)]` with the lowest action winning ties.
    pub fn greedy(&self, alloc: usize, arrival: usize, table: &[f64]) -> (Action, usize, f64) {
        let moves = self.moves(alloc, arrival);
        let (mut best_a, mut best_next) = moves[0];
        let mut best = table[best_next];
        for &(a, next) in &moves[1..] {
            if table[next] < best {
                best = table[next];
                best_a = a;
                best_next = next;
            }
        }
        (best_a, best_next, best)
    }

    /// Visits every post-departure allocation reachable from `alloc` with its
    /// probability (product over UPFs of the row departure laws).
    pub fn for_each_departure(&self, alloc: usize, mut visit: impl FnMut(usize, f64)) {
        fn rec(mdp: &Mdp, k: usize, idx: usize, p: f64, origin: usize, visit: &mut dyn FnMut(usize, f64)) {
            if k == mdp.cfg.upfs {
                visit(idx, p);
                return;
            }
            for o in mdp.departure_outcomes(origin, k) {
                if o.prob > 0.0 {
                    rec(
                        mdp,
                        k + 1,
                        (idx as isize + o.index_delta) as usize,
                        p * o.prob,
                        origin,
                        visit,
                    );
                }
            }
        }
        rec(self, 0, alloc, 1.0, alloc, &mut visit);
    }

    /// Replaces `values[n]` with `E_u[values[n - u]]`, the expectation over one
    /// slot of departures from post-decision allocation `n`.
    ///
    /// Departures are independent across UPFs and each only moves its own
    /// digit, so the expectation is applied one UPF axis at a time.
    pub fn expect_departures_in_place(&self, values: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        scratch.resize(values.len(), 0.0);
        for k in 0..self.cfg.upfs {
            for (idx, out) in scratch.iter_mut().enumerate() {
                *out = self
                    .departure_outcomes(idx, k)
                    .iter()
                    .map(|o| o.prob * values[(idx as isize + o.index_delta) as usize])
                    .sum();
            }
            std::mem::swap(values, scratch);
        }
    }

    pub fn system_state(&self, state: usize) -> SystemState {
        self.indexer.state_from_index(state).expect("state index in range")
    }

    pub fn post_decision_state(&self, alloc: usize, arrival: usize) -> PostDecisionState {
        PostDecisionState {
            alloc: self.allocation(alloc),
            arrival,
        }
    }

    pub fn allocation(&self, alloc: usize) -> AllocationMatrix {
        self.indexer.alloc_from_index(alloc).expect("allocation index in range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::transition_distribution;

    fn small() -> ModelConfig {
        ModelConfig {
            upfs: 2,
            flow_types: 2,
            mean_rate: vec![1.0, 2.0],
            capacity: vec![3.0, 4.0],
            unit_power_cost: vec![1.0, 0.5],
            arrival_prob: 0.6,
            type_prob: vec![0.5, 0.5],
            departure_prob: vec![0.4, 0.3],
            discount: 0.9,
        }
    }

    #[test]
    fn costs_match_explicit_model() {
        let mdp = Mdp::new(ModelConfig::reference()).unwrap();
        for a in (0..mdp.num_allocs()).step_by(97) {
            let alloc = mdp.allocation(a);
            let want = mdp.config().stage_cost(&alloc).unwrap();
            assert!((mdp.cost(a) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn moves_match_feasible_actions() {
        let mdp = Mdp::new(small()).unwrap();
        let cfg = mdp.config().clone();
        for s in 0..mdp.num_states() {
            let (a, f) = mdp.split_state(s);
            let st = mdp.system_state(s);
            let want = cfg.feasible_actions(&st).unwrap();
            let moves = mdp.moves(a, f);
            let got: Vec<Action> = moves.iter().map(|m| m.0).collect();
            assert_eq!(got, want);
            for (act, next) in moves {
                let pds = cfg.apply_action(&st, act).unwrap();
                assert_eq!(mdp.allocation(next), pds.alloc);
            }
        }
    }

    #[test]
    fn departure_enumeration_matches_kernel() {
        let mdp = Mdp::new(small()).unwrap();
        let cfg = mdp.config().clone();
        for s in 0..mdp.num_states() {
            let (a, f) = mdp.split_state(s);
            let st = mdp.system_state(s);
            for (act, post) in mdp.moves(a, f) {
                let want = transition_distribution(&st, act, &cfg).unwrap();
                let mut got = 0usize;
                mdp.for_each_departure(post, |next, pu| {
                    for (f2, &pf) in mdp.arrival_probs().iter().enumerate() {
                        let target = mdp.system_state(mdp.state_index(next, f2));
                        assert!((want.prob_of(&target) - pu * pf).abs() < 1e-12);
                        got += 1;
                    }
                });
                assert_eq!(got, want.entries.len());
            }
        }
    }

    #[test]
    fn axis_expectation_matches_enumeration() {
        let mdp = Mdp::new(ModelConfig::reference()).unwrap();
        let values: Vec<f64> = (0..mdp.num_allocs()).map(|i| ((i * 7919) % 1013) as f64).collect();
        let mut fast = values.clone();
        mdp.expect_departures_in_place(&mut fast, &mut Vec::new());
        for a in (0..mdp.num_allocs()).step_by(53) {
            let mut slow = 0.0;
            mdp.for_each_departure(a, |n, p| slow += p * values[n]);
            assert!((fast[a] - slow).abs() < 1e-9, "{a}: {} vs {slow}", fast[a]);
        }
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let mdp = Mdp::new(ModelConfig::reference()).unwrap();
        let zeros = vec![0.0; mdp.num_allocs()];
        let (a, _, _) = mdp.greedy(0, 2, &zeros);
        assert_eq!(a, Action(1));
        let (a, next, _) = mdp.greedy(0, 0, &zeros);
        assert_eq!((a, next), (Action::BLOCK, 0));
    }
}
