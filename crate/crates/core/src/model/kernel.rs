use std::collections::BTreeMap;

use crate::config::ModelConfig;
use crate::error::Result;

use super::{Action, AllocationMatrix, SystemState};

/// One row of a departure matrix: `Some(m)` is the canonical vector `e_m`
/// (0-based type), `None` the zero row.
pub type DepartureRow = Option<usize>;

/// At most one departing flow per UPF.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DepartureMatrix {
    pub rows: Vec<DepartureRow>,
    flow_types: usize,
}

impl DepartureMatrix {
    pub fn none(upfs: usize, flow_types: usize) -> Self {
        Self {
            rows: vec![None; upfs],
            flow_types,
        }
    }

    pub fn new(rows: Vec<DepartureRow>, flow_types: usize) -> Self {
        assert!(rows.iter().flatten().all(|&m| m < flow_types));
        Self { rows, flow_types }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(Option::is_none)
    }

    pub fn to_matrix(&self) -> AllocationMatrix {
        let mut out = AllocationMatrix::zeros(self.rows.len(), self.flow_types);
        for (k, row) in self.rows.iter().enumerate() {
            if let Some(m) = row {
                out.set(k, *m, 1);
            }
        }
        out
    }

    /// `alloc - u`, or `None` if a departure removes an absent flow.
    pub fn subtract_from(&self, alloc: &AllocationMatrix) -> Option<AllocationMatrix> {
        let mut out = alloc.clone();
        for (k, row) in self.rows.iter().enumerate() {
            if let Some(m) = *row {
                let c = out.get(k, m).checked_sub(1)?;
                out.set(k, m, c);
            }
        }
        Some(out)
    }
}

/// Departure law of one UPF given its post-decision row: with probability `q`
/// one of the present flows, chosen uniformly, leaves.
pub fn departure_distribution_upf(post_row: &[u32], q: f64) -> Vec<(DepartureRow, f64)> {
    let total: u32 = post_row.iter().sum();
    if total == 0 {
        return vec![(None, 1.0)];
    }
    let mut out = Vec::with_capacity(post_row.len() + 1);
    out.push((None, 1.0 - q));
    for (m, &n) in post_row.iter().enumerate() {
        if n > 0 {
            out.push((Some(m), q * f64::from(n) / f64::from(total)));
        }
    }
    out
}

/// Next-state distribution with duplicate successors merged.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionDistribution {
    pub entries: Vec<(SystemState, f64)>,
}

impl TransitionDistribution {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn prob_of(&self, s: &SystemState) -> f64 {
        self.entries.iter().find(|(t, _)| t == s).map_or(0.0, |(_, p)| *p)
    }
}

/// `P(. | s, a)`: the action moves the allocation deterministically, then
/// every UPF draws its departure independently and a new arrival is drawn.
pub fn transition_distribution(s: &SystemState, a: Action, cfg: &ModelConfig) -> Result<TransitionDistribution> {
    let post = cfg.apply_action(s, a)?;
    let per_upf: Vec<Vec<(DepartureRow, f64)>> = post
        .alloc
        .rows()
        .zip(&cfg.departure_prob)
        .map(|(row, &q)| departure_distribution_upf(row, q))
        .collect();

    // Cartesian product over UPFs.
    let mut departures: Vec<(Vec<DepartureRow>, f64)> = vec![(Vec::new(), 1.0)];
    for options in &per_upf {
        departures = departures
            .into_iter()
            .flat_map(|(rows, p)| {
                options.iter().filter(|(_, pk)| *pk > 0.0).map(move |&(r, pk)| {
                    let mut rows = rows.clone();
                    rows.push(r);
                    (rows, p * pk)
                })
            })
            .collect();
    }

    let arrivals = cfg.arrival_distribution();
    let mut merged: BTreeMap<SystemState, f64> = BTreeMap::new();
    for (rows, pu) in departures {
        let u = DepartureMatrix::new(rows, cfg.flow_types);
        let next_alloc = u
            .subtract_from(&post.alloc)
            .expect("departures only remove present flows");
        for &(f, pf) in &arrivals {
            if pf > 0.0 {
                *merged
                    .entry(SystemState {
                        alloc: next_alloc.clone(),
                        arrival: f,
                    })
                    .or_insert(0.0) += pu * pf;
            }
        }
    }
    Ok(TransitionDistribution {
        entries: merged.into_iter().collect(),
    })
}
