use crate::env::{Environment, RngStream, SlotOutcome};
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::model::{Action, PostDecisionState};
use crate::oracle::{PdsValueTable, Policy};

use super::{maybe_snapshot, SlotRecord, StepSchedule, TrainObserver, Trained, ValueView};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdsOptions {
    pub schedule: StepSchedule,
    /// Probability of acting uniformly at random instead of greedily. Zero
    /// reproduces the purely greedy algorithm.
    pub epsilon: f64,
    /// Allocation index of the starting post-decision state (0 = empty).
    pub initial_alloc: usize,
}

impl Default for PdsOptions {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            epsilon: 0.0,
            initial_alloc: 0,
        }
    }
}

/// Post-decision value iteration by stochastic approximation.
///
/// The table is keyed by allocation only, so one write updates the value of
/// every post-decision state sharing that allocation, whatever the arrival.
#[derive(Clone, Debug)]
pub struct PdsLearner {
    table: PdsValueTable,
    visits: Vec<u64>,
    current_alloc: usize,
    current_arrival: usize,
    schedule: StepSchedule,
}

impl PdsLearner {
    pub fn new(mdp: &Mdp, schedule: StepSchedule) -> Self {
        Self {
            table: PdsValueTable::zeros(mdp),
            visits: vec![0; mdp.num_allocs()],
            current_alloc: 0,
            current_arrival: 0,
            schedule,
        }
    }

    pub fn table(&self) -> &PdsValueTable {
        &self.table
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    /// Current post-decision `(allocation index, arrival)`.
    pub fn current(&self) -> (usize, usize) {
        (self.current_alloc, self.current_arrival)
    }

    pub fn current_state(&self, mdp: &Mdp) -> PostDecisionState {
        mdp.post_decision_state(self.current_alloc, self.current_arrival)
    }

    pub fn set_current(&mut self, alloc: usize, arrival: usize) {
        self.current_alloc = alloc;
        self.current_arrival = arrival;
    }

    /// Updates the current post-decision entry towards the sampled target
    /// `min_a' xi(n') + gamma * V~(n' + a')` and returns the minimizer with
    /// its post-decision allocation. Does not move `current`.
    pub fn update(&mut self, mdp: &Mdp, next_alloc: usize, arrival: usize) -> (Action, usize) {
        let (action, post, best) = mdp.greedy(next_alloc, arrival, &self.table.values);
        let target = mdp.cost(next_alloc) + mdp.discount() * best;
        let entry = self.current_alloc;
        let alpha = self.schedule.alpha(self.visits[entry]);
        let v = &mut self.table.values[entry];
        *v += alpha * (target - *v);
        self.visits[entry] += 1;
        (action, post)
    }

    /// One greedy step on indices: update, then move to `(n' + a', f')`.
    pub fn step_indexed(&mut self, mdp: &Mdp, next_alloc: usize, arrival: usize) -> Action {
        let (action, post) = self.update(mdp, next_alloc, arrival);
        self.set_current(post, arrival);
        action
    }

    /// One greedy step on an outcome sampled from the current post-decision state.
    pub fn step(&mut self, mdp: &Mdp, outcome: &SlotOutcome) -> Result<Action> {
        let current = mdp.allocation(self.current_alloc);
        let expected = outcome
            .departures
            .subtract_from(&current)
            .ok_or(Error::OutcomeMismatch)?;
        if expected != outcome.next_state.alloc || outcome.next_state.arrival != outcome.next_arrival {
            return Err(Error::OutcomeMismatch);
        }
        let next = mdp.indexer().alloc_index(&expected)?;
        Ok(self.step_indexed(mdp, next, outcome.next_arrival))
    }

    /// Greedy policy against the current table.
    pub fn greedy_action(&self, mdp: &Mdp, state: usize) -> Action {
        let (alloc, f) = mdp.split_state(state);
        mdp.greedy(alloc, f, &self.table.values).0
    }
}

impl ValueView for PdsLearner {
    fn value_at(&self, mdp: &Mdp, state: usize) -> f64 {
        let (alloc, f) = mdp.split_state(state);
        mdp.cost(alloc) + mdp.discount() * mdp.greedy(alloc, f, &self.table.values).2
    }
}

/// Runs the online algorithm for `slots` slots from the empty system.
///
/// The returned policy holds the last action taken in each visited state and
/// the greedy action elsewhere.
pub fn pds_vi_train<O: TrainObserver + ?Sized>(
    mdp: &Mdp,
    opts: &PdsOptions,
    slots: u64,
    rng: RngStream,
    observer: &mut O,
) -> Trained<PdsLearner> {
    let mut explore = (opts.epsilon > 0.0).then(|| rng.derive(1));
    let mut env = Environment::new(mdp, rng);
    let mut learner = PdsLearner::new(mdp, opts.schedule);
    learner.set_current(opts.initial_alloc, 0);
    let mut last_action: Vec<Option<Action>> = vec![None; mdp.num_states()];

    for slot in 1..=slots {
        let out = env.step_indexed(learner.current_alloc);
        let (next_alloc, arrival) = (out.next_alloc, out.arrival);
        let state = mdp.state_index(next_alloc, arrival);
        let (mut action, mut post) = learner.update(mdp, next_alloc, arrival);
        if let Some(rng) = explore.as_mut() {
            if rng.uniform() < opts.epsilon {
                let moves = mdp.moves(next_alloc, arrival);
                (action, post) = moves[rng.below(moves.len())];
            }
        }
        learner.set_current(post, arrival);
        last_action[state] = Some(action);
        observer.on_slot(&SlotRecord {
            slot,
            state,
            action,
            cost: mdp.cost(next_alloc),
            blocked: arrival > 0 && action.is_block(),
        });
        maybe_snapshot(observer, slot, mdp, &learner);
    }

    let actions = last_action
        .iter()
        .enumerate()
        .map(|(s, a)| a.unwrap_or_else(|| learner.greedy_action(mdp, s)))
        .collect();
    Trained {
        learner,
        policy: Policy { actions },
    }
}
