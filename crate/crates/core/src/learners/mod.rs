//! Model-free learners driven only by simulated slots.

mod pds;
mod qlearning;
mod schedule;

pub use pds::{pds_vi_train, PdsLearner, PdsOptions};
pub use qlearning::{q_learning_train, QLearner, QOptions};
pub use schedule::{EpsilonSchedule, StepSchedule};

use crate::mdp::Mdp;
use crate::model::Action;
use crate::oracle::{Policy, ValueTable};

/// What happened in one training or evaluation slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotRecord {
    /// 1-based slot number.
    pub slot: u64,
    /// Pre-decision state index.
    pub state: usize,
    pub action: Action,
    /// Stage cost of `state`.
    pub cost: f64,
    /// An arrival was present and turned away.
    pub blocked: bool,
}

/// Anything that can report a per-state value estimate.
pub trait ValueView: Sync {
    fn value_at(&self, mdp: &Mdp, state: usize) -> f64;

    fn derived_value(&self, mdp: &Mdp) -> ValueTable {
        ValueTable {
            values: (0..mdp.num_states()).map(|s| self.value_at(mdp, s)).collect(),
        }
    }
}

/// Receives every slot and, at its own cadence, a view of the learner.
pub trait TrainObserver {
    fn on_slot(&mut self, rec: &SlotRecord);

    fn snapshot_every(&self) -> Option<u64> {
        None
    }

    fn on_snapshot(&mut self, _slot: u64, _mdp: &Mdp, _learner: &dyn ValueView) {}
}

impl TrainObserver for () {
    fn on_slot(&mut self, _rec: &SlotRecord) {}
}

/// In-memory record of a whole run, with full derived-value snapshots.
#[derive(Clone, Debug, Default)]
pub struct TrainTrace {
    pub records: Vec<SlotRecord>,
    pub snapshots: Vec<(u64, ValueTable)>,
    snapshot_every: Option<u64>,
}

impl TrainTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_snapshots(every: u64) -> Self {
        Self {
            snapshot_every: Some(every),
            ..Self::default()
        }
    }
}

impl TrainObserver for TrainTrace {
    fn on_slot(&mut self, rec: &SlotRecord) {
        self.records.push(*rec);
    }

    fn snapshot_every(&self) -> Option<u64> {
        self.snapshot_every
    }

    fn on_snapshot(&mut self, slot: u64, mdp: &Mdp, learner: &dyn ValueView) {
        self.snapshots.push((slot, learner.derived_value(mdp)));
    }
}

/// Output of a training run.
#[derive(Clone, Debug)]
pub struct Trained<L> {
    pub learner: L,
    pub policy: Policy,
}

pub(crate) fn maybe_snapshot<O: TrainObserver + ?Sized>(
    observer: &mut O,
    slot: u64,
    mdp: &Mdp,
    learner: &dyn ValueView,
) {
    if let Some(every) = observer.snapshot_every() {
        if every > 0 && slot.is_multiple_of(every) {
            observer.on_snapshot(slot, mdp, learner);
        }
    }
}
