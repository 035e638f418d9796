use crate::env::{Environment, RngStream};
use crate::mdp::Mdp;
use crate::model::Action;
use crate::oracle::Policy;

use super::{maybe_snapshot, EpsilonSchedule, SlotRecord, StepSchedule, TrainObserver, Trained, ValueView};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QOptions {
    pub schedule: StepSchedule,
    pub epsilon: EpsilonSchedule,
    /// Allocation index of the starting post-decision state (0 = empty).
    pub initial_alloc: usize,
}

impl QOptions {
    pub fn for_training(slots: u64) -> Self {
        Self {
            schedule: StepSchedule::default(),
            epsilon: EpsilonSchedule::for_training(slots),
            initial_alloc: 0,
        }
    }
}

/// Tabular Q-learning over feasible `(state, action)` pairs only.
///
/// Entries of state `s` live in `offsets[s]..offsets[s + 1]`, ordered by action.
#[derive(Clone, Debug)]
pub struct QLearner {
    offsets: Vec<u32>,
    actions: Vec<Action>,
    posts: Vec<u32>,
    q: Vec<f64>,
    visits: Vec<u32>,
    schedule: StepSchedule,
}

impl QLearner {
    pub fn new(mdp: &Mdp, schedule: StepSchedule) -> Self {
        let mut offsets = Vec::with_capacity(mdp.num_states() + 1);
        let mut actions = Vec::new();
        let mut posts = Vec::new();
        offsets.push(0);
        for s in 0..mdp.num_states() {
            let (alloc, f) = mdp.split_state(s);
            for (a, post) in mdp.moves(alloc, f) {
                actions.push(a);
                posts.push(post as u32);
            }
            offsets.push(actions.len() as u32);
        }
        let n = actions.len();
        Self {
            offsets,
            actions,
            posts,
            q: vec![0.0; n],
            visits: vec![0; n],
            schedule,
        }
    }

    /// Number of materialized `(state, action)` entries.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    fn range(&self, state: usize) -> std::ops::Range<usize> {
        self.offsets[state] as usize..self.offsets[state + 1] as usize
    }

    /// `(action, Q)` pairs of a state, ascending by action.
    pub fn entries(&self, state: usize) -> impl Iterator<Item = (Action, f64)> + '_ {
        self.range(state).map(|i| (self.actions[i], self.q[i]))
    }

    pub fn q_value(&self, state: usize, action: Action) -> Option<f64> {
        self.entries(state).find(|&(a, _)| a == action).map(|(_, q)| q)
    }

    pub fn visit_count(&self, state: usize, action: Action) -> Option<u32> {
        self.range(state)
            .find(|&i| self.actions[i] == action)
            .map(|i| self.visits[i])
    }

    /// Entry index of the smallest Q, lowest action on ties.
    fn argmin(&self, state: usize) -> usize {
        let r = self.range(state);
        let mut best = r.start;
        for i in r.start + 1..r.end {
            if self.q[i] < self.q[best] {
                best = i;
            }
        }
        best
    }

    pub fn min_q(&self, state: usize) -> f64 {
        self.q[self.argmin(state)]
    }

    pub fn greedy_action(&self, state: usize) -> Action {
        self.actions[self.argmin(state)]
    }

    /// Epsilon-greedy choice; returns the entry index.
    fn select_entry(&self, state: usize, epsilon: f64, rng: &mut RngStream) -> usize {
        let r = self.range(state);
        if epsilon > 0.0 && rng.uniform() < epsilon {
            r.start + rng.below(r.len())
        } else {
            self.argmin(state)
        }
    }

    /// Epsilon-greedy action: uniform over the feasible set with probability
    /// `epsilon`, otherwise the lowest-Q action.
    pub fn q_select(&self, state: usize, epsilon: f64, rng: &mut RngStream) -> Action {
        self.actions[self.select_entry(state, epsilon, rng)]
    }

    fn update_entry(&mut self, mdp: &Mdp, state: usize, entry: usize, next_state: usize) {
        let (alloc, _) = mdp.split_state(state);
        let target = mdp.cost(alloc) + mdp.discount() * self.min_q(next_state);
        let alpha = self.schedule.alpha(u64::from(self.visits[entry]));
        self.q[entry] += alpha * (target - self.q[entry]);
        self.visits[entry] += 1;
    }

    /// `Q(s,a) += alpha * (xi(s) + gamma * min_a'' Q(s', a'') - Q(s,a))`.
    ///
    /// Panics if `action` is not feasible in `state`.
    pub fn q_update(&mut self, mdp: &Mdp, state: usize, action: Action, next_state: usize) {
        let entry = self
            .range(state)
            .find(|&i| self.actions[i] == action)
            .expect("action feasible in state");
        self.update_entry(mdp, state, entry, next_state);
    }

    pub fn greedy_policy(&self) -> Policy {
        Policy {
            actions: (0..self.offsets.len() - 1).map(|s| self.greedy_action(s)).collect(),
        }
    }
}

impl ValueView for QLearner {
    fn value_at(&self, _mdp: &Mdp, state: usize) -> f64 {
        self.min_q(state)
    }
}

/// Epsilon-greedy Q-learning from the empty system. The returned policy is
/// greedy in the final table.
pub fn q_learning_train<O: TrainObserver + ?Sized>(
    mdp: &Mdp,
    opts: &QOptions,
    slots: u64,
    rng: RngStream,
    observer: &mut O,
) -> Trained<QLearner> {
    let mut explore = rng.derive(1);
    let mut env = Environment::new(mdp, rng);
    let mut learner = QLearner::new(mdp, opts.schedule);

    let first = env.step_indexed(opts.initial_alloc);
    let mut state = mdp.state_index(first.next_alloc, first.arrival);
    for slot in 1..=slots {
        let eps = opts.epsilon.at(slot - 1);
        let entry = learner.select_entry(state, eps, &mut explore);
        let action = learner.actions[entry];
        let out = env.step_indexed(learner.posts[entry] as usize);
        let next_state = mdp.state_index(out.next_alloc, out.arrival);
        learner.update_entry(mdp, state, entry, next_state);

        let (alloc, f) = mdp.split_state(state);
        observer.on_slot(&SlotRecord {
            slot,
            state,
            action,
            cost: mdp.cost(alloc),
            blocked: f > 0 && action.is_block(),
        });
        maybe_snapshot(observer, slot, mdp, &learner);
        state = next_state;
    }

    let policy = learner.greedy_policy();
    Trained { learner, policy }
}
