use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::learners::{SlotRecord, TrainObserver, TrainTrace, ValueView};
use crate::mdp::Mdp;
use crate::oracle::ValueTable;

/// Visit-weighted relative error `sum w|V - V*| / sum w|V*|`.
pub fn rbe(v: &ValueTable, vstar: &ValueTable, w: &VisitCounts) -> Result<f64> {
    assert_eq!(v.values.len(), vstar.values.len(), "tables differ in length");
    assert_eq!(w.counts.len(), vstar.values.len(), "weights differ in length");
    let (mut num, mut den) = (0.0, 0.0);
    for ((&x, &y), &c) in v.values.iter().zip(&vstar.values).zip(&w.counts) {
        if c > 0 {
            let c = c as f64;
            num += c * (x - y).abs();
            den += c * y.abs();
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("RBE needs a visited state with nonzero value"));
    }
    Ok(num / den)
}

/// Mean recorded stage cost over the first `upto` slots.
pub fn time_average_cost(trace: &TrainTrace, upto: usize) -> Result<f64> {
    if upto == 0 {
        return Err(Error::UndefinedMetric("time average over zero slots"));
    }
    let records = trace.records.get(..upto).ok_or(Error::IndexOutOfRange {
        index: upto,
        bound: trace.records.len() + 1,
    })?;
    Ok(records.iter().map(|r| r.cost).sum::<f64>() / upto as f64)
}

/// Running count of blocked arrivals, one entry per slot.
pub fn blocked_series(trace: &TrainTrace) -> Vec<u64> {
    trace
        .records
        .iter()
        .scan(0u64, |acc, r| {
            *acc += u64::from(r.blocked);
            Some(*acc)
        })
        .collect()
}

/// Pre-decision state visit counts `w_s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisitCounts {
    pub counts: Vec<u64>,
    /// Visited states in order of first visit.
    visited: Vec<usize>,
}

impl VisitCounts {
    pub fn new(states: usize) -> Self {
        Self {
            counts: vec![0; states],
            visited: Vec::new(),
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let visited = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(s, _)| s)
            .collect();
        Self { counts, visited }
    }

    pub fn record(&mut self, state: usize) {
        if self.counts[state] == 0 {
            self.visited.push(state);
        }
        self.counts[state] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn visited(&self) -> &[usize] {
        &self.visited
    }

    /// RBE of a learner's derived values, touching only visited states.
    pub fn rbe_of(&self, mdp: &Mdp, learner: &dyn ValueView, vstar: &ValueTable) -> Result<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for &s in &self.visited {
            let c = self.counts[s] as f64;
            let target = vstar.values[s];
            num += c * (learner.value_at(mdp, s) - target).abs();
            den += c * target.abs();
        }
        if den == 0.0 {
            return Err(Error::UndefinedMetric("RBE needs a visited state with nonzero value"));
        }
        Ok(num / den)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algo {
    PdsVi,
    QLearning,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::PdsVi => "pds-vi",
            Algo::QLearning => "q-learning",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pds-vi" => Ok(Algo::PdsVi),
            "q-learning" => Ok(Algo::QLearning),
            other => Err(format!("unknown algorithm `{other}` (pds-vi|q-learning)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One snapshot of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub run_id: u64,
    pub algo: Algo,
    pub phase: Phase,
    pub iteration: u64,
    pub rbe: f64,
    pub avg_cost: f64,
    pub blocked_cumulative: u64,
}

/// Streams training metrics: visit counts, running cost and blocking, and
/// an RBE row at every snapshot and at the final slot.
pub struct MetricsRecorder<'a> {
    run_id: u64,
    algo: Algo,
    vstar: &'a ValueTable,
    snapshot_every: u64,
    total_slots: u64,
    visits: VisitCounts,
    cost_sum: f64,
    blocked: u64,
    slots: u64,
    rows: Vec<MetricsRow>,
}

impl<'a> MetricsRecorder<'a> {
    pub fn new(
        mdp: &Mdp,
        run_id: u64,
        algo: Algo,
        vstar: &'a ValueTable,
        snapshot_every: u64,
        total_slots: u64,
    ) -> Self {
        assert!(snapshot_every > 0, "snapshot cadence must be positive");
        Self {
            run_id,
            algo,
            vstar,
            snapshot_every,
            total_slots,
            visits: VisitCounts::new(mdp.num_states()),
            cost_sum: 0.0,
            blocked: 0,
            slots: 0,
            rows: Vec::new(),
        }
    }

    pub fn visits(&self) -> &VisitCounts {
        &self.visits
    }

    pub fn blocked(&self) -> u64 {
        self.blocked
    }

    pub fn into_rows(self) -> Vec<MetricsRow> {
        self.rows
    }
}

impl TrainObserver for MetricsRecorder<'_> {
    fn on_slot(&mut self, rec: &SlotRecord) {
        self.visits.record(rec.state);
        self.cost_sum += rec.cost;
        self.blocked += u64::from(rec.blocked);
        self.slots = rec.slot;
    }

    fn snapshot_every(&self) -> Option<u64> {
        Some(1)
    }

    fn on_snapshot(&mut self, slot: u64, mdp: &Mdp, learner: &dyn ValueView) {
        if !slot.is_multiple_of(self.snapshot_every) && slot != self.total_slots {
            return;
        }
        let rbe = self
            .visits
            .rbe_of(mdp, learner, self.vstar)
            .expect("stage costs are positive, so V* is nonzero");
        self.rows.push(MetricsRow {
            run_id: self.run_id,
            algo: self.algo,
            phase: Phase::Train,
            iteration: slot,
            rbe,
            avg_cost: self.cost_sum / slot as f64,
            blocked_cumulative: self.blocked,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Action;

    fn table(v: &[f64]) -> ValueTable {
        ValueTable { values: v.to_vec() }
    }

    #[test]
    fn rbe_examples() {
        let vstar = table(&[1.0, 2.0, 4.0]);
        let w = VisitCounts::from_counts(vec![1, 1, 2]);
        assert_eq!(rbe(&vstar, &vstar, &w).unwrap(), 0.0);
        assert_eq!(rbe(&table(&[2.0, 4.0, 8.0]), &vstar, &w).unwrap(), 1.0);
        let r = rbe(&table(&[1.0, 3.0, 4.0]), &vstar, &w).unwrap();
        assert!((r - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn rbe_ignores_unvisited_and_rejects_zero_weights() {
        let vstar = table(&[1.0, 2.0]);
        let w = VisitCounts::from_counts(vec![3, 0]);
        assert_eq!(rbe(&table(&[1.0, 100.0]), &vstar, &w).unwrap(), 0.0);
        let none = VisitCounts::from_counts(vec![0, 0]);
        assert!(matches!(rbe(&vstar, &vstar, &none), Err(Error::UndefinedMetric(_))));
    }

    fn trace_of(costs: &[f64], blocked: &[bool]) -> TrainTrace {
        let mut t = TrainTrace::new();
        for (i, (&c, &b)) in costs.iter().zip(blocked).enumerate() {
            t.on_slot(&SlotRecord {
                slot: i as u64 + 1,
                state: 0,
                action: Action::BLOCK,
                cost: c,
                blocked: b,
            });
        }
        t
    }

    #[test]
    fn time_average_examples() {
        let t = trace_of(&[5.0, 7.0], &[false, false]);
        assert_eq!(time_average_cost(&t, 2).unwrap(), 6.0);
        assert_eq!(time_average_cost(&t, 1).unwrap(), 5.0);
        assert!(time_average_cost(&t, 0).is_err());
        assert!(time_average_cost(&t, 3).is_err());
        let c = trace_of(&[3.25; 10], &[false; 10]);
        assert_eq!(time_average_cost(&c, 10).unwrap(), 3.25);
    }

    #[test]
    fn blocked_series_is_cumulative() {
        let t = trace_of(&[1.0; 5], &[false, true, true, false, true]);
        assert_eq!(blocked_series(&t), vec![0, 1, 2, 2, 3]);
    }

    #[test]
    fn algo_names_round_trip() {
        for a in [Algo::PdsVi, Algo::QLearning] {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
        }
        assert!("sarsa".parse::<Algo>().is_err());
    }
}
