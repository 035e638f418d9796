//! Seeded slot simulator: departures from the post-decision allocation, then
//! the next arrival.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::mdp::Mdp;
use crate::model::{AllocationMatrix, DepartureMatrix, PostDecisionState, SystemState};

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-run seed: `mix(base_seed, run_id)`.
pub fn mix_seed(base_seed: u64, run_id: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ run_id.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Counter-based ChaCha stream. Same seed and call sequence, same output.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_run(base_seed: u64, run_id: u64) -> Self {
        Self::new(mix_seed(base_seed, run_id))
    }

    /// Independent side stream (e.g. exploration) derived from this seed.
    pub fn derive(&self, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        Self { seed: self.seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

/// One realized slot, typed.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotOutcome {
    pub departures: DepartureMatrix,
    pub next_arrival: usize,
    pub next_state: SystemState,
}

/// One realized slot on allocation indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexedOutcome {
    pub post_alloc: usize,
    pub next_alloc: usize,
    pub arrival: usize,
}

pub struct Environment<'a> {
    mdp: &'a Mdp,
    rng: RngStream,
}

/// Empty allocation, no pending arrival.
pub fn reset(cfg: &ModelConfig) -> PostDecisionState {
    PostDecisionState {
        alloc: AllocationMatrix::for_config(cfg),
        arrival: 0,
    }
}

impl<'a> Environment<'a> {
    pub fn new(mdp: &'a Mdp, rng: RngStream) -> Self {
        Self { mdp, rng }
    }

    pub fn mdp(&self) -> &'a Mdp {
        self.mdp
    }

    /// Index of the empty allocation.
    pub fn reset_index(&self) -> usize {
        0
    }

    // UPFs ascending; a departure event costs one uniform, the departing
    // flow one more, mapped to a type through cumulative counts.
    fn draw_departure(&mut self, alloc: usize, k: usize) -> Option<usize> {
        let total = self.mdp.upf_flow_count(alloc, k);
        if total == 0 {
            return None;
        }
        let q = self.mdp.config().departure_prob[k];
        if self.rng.uniform() >= q {
            return None;
        }
        let pick = (self.rng.uniform() * f64::from(total)) as u32;
        let pick = pick.min(total - 1);
        let mut acc = 0;
        for (m, &n) in self.mdp.upf_row(alloc, k).iter().enumerate() {
            acc += n;
            if pick < acc {
                return Some(m);
            }
        }
        unreachable!("pick below total flow count")
    }

    /// Departed type per UPF, as drawn from post-decision allocation `alloc`.
    pub fn sample_departure_rows(&mut self, alloc: usize) -> Vec<Option<usize>> {
        (0..self.mdp.upfs()).map(|k| self.draw_departure(alloc, k)).collect()
    }

    pub fn sample_arrival(&mut self) -> usize {
        let u = self.rng.uniform();
        let probs = self.mdp.arrival_probs();
        let mut acc = 0.0;
        for (f, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return f;
            }
        }
        // Rounding left `acc` just below 1: take the last type with mass.
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Hot-path slot: same draws as [`Environment::step`].
    pub fn step_indexed(&mut self, post_alloc: usize) -> IndexedOutcome {
        let mut next = post_alloc;
        for k in 0..self.mdp.upfs() {
            if let Some(m) = self.draw_departure(post_alloc, k) {
                next = self.mdp.remove_flow(next, k, m).expect("departing flow is present");
            }
        }
        IndexedOutcome {
            post_alloc,
            next_alloc: next,
            arrival: self.sample_arrival(),
        }
    }

    pub fn sample_departures(&mut self, pds: &PostDecisionState) -> DepartureMatrix {
        let alloc = self
            .mdp
            .indexer()
            .alloc_index(&pds.alloc)
            .expect("post-decision state is feasible");
        DepartureMatrix::new(self.sample_departure_rows(alloc), self.mdp.flow_types())
    }

    pub fn step(&mut self, pds: &PostDecisionState) -> SlotOutcome {
        let departures = self.sample_departures(pds);
        let next_arrival = self.sample_arrival();
        let alloc = departures
            .subtract_from(&pds.alloc)
            .expect("departures only remove present flows");
        SlotOutcome {
            departures,
            next_arrival,
            next_state: SystemState {
                alloc,
                arrival: next_arrival,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn reset_is_empty_and_costs_k() {
        let cfg = ModelConfig::reference();
        let pds = reset(&cfg);
        assert!(pds.alloc.is_zero());
        assert_eq!(pds.arrival, 0);
        assert_eq!(cfg.stage_cost(&pds.alloc).unwrap(), 5.0);
    }

    #[test]
    fn empty_without_arrivals_stays_empty() {
        let mut cfg = ModelConfig::reference();
        cfg.arrival_prob = 0.0;
        let mdp = Mdp::new(cfg.clone()).unwrap();
        let mut env = Environment::new(&mdp, RngStream::new(3));
        for _ in 0..100 {
            let out = env.step(&reset(&cfg));
            assert!(out.departures.is_zero());
            assert!(out.next_state.alloc.is_zero());
            assert_eq!(out.next_arrival, 0);
        }
    }

    #[test]
    fn no_departures_when_q_zero() {
        let mut cfg = small();
        cfg.departure_prob = vec![0.0, 0.0];
        let mdp = Mdp::new(cfg).unwrap();
        let mut env = Environment::new(&mdp, RngStream::new(9));
        let pds = mdp.post_decision_state(mdp.num_allocs() - 1, 0);
        for _ in 0..1000 {
            assert!(env.sample_departures(&pds).is_zero());
        }
    }

    #[test]
    fn deterministic_arrivals() {
        let mut cfg = small();
        cfg.arrival_prob = 1.0;
        cfg.type_prob = vec![0.0, 1.0];
        let mdp = Mdp::new(cfg).unwrap();
        let mut env = Environment::new(&mdp, RngStream::new(1));
        assert!((0..1000).all(|_| env.sample_arrival() == 2));
    }

    #[test]
    fn typed_and_indexed_steps_agree() {
        let mdp = Mdp::new(small()).unwrap();
        let mut a = Environment::new(&mdp, RngStream::new(77));
        let mut b = Environment::new(&mdp, RngStream::new(77));
        for alloc in (0..mdp.num_allocs()).cycle().take(500) {
            let typed = a.step(&mdp.post_decision_state(alloc, 0));
            let fast = b.step_indexed(alloc);
            assert_eq!(typed.next_arrival, fast.arrival);
            assert_eq!(typed.next_state.alloc, mdp.allocation(fast.next_alloc));
        }
    }

    #[test]
    fn seeds_reproduce_and_runs_differ() {
        let mdp = Mdp::new(small()).unwrap();
        let draw = |rng: RngStream| {
            let mut env = Environment::new(&mdp, rng);
            (0..50)
                .map(|_| env.step_indexed(mdp.num_allocs() - 1))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(RngStream::new(5)), draw(RngStream::new(5)));
        assert_ne!(draw(RngStream::for_run(5, 0)), draw(RngStream::for_run(5, 1)));
        assert_ne!(mix_seed(5, 0), mix_seed(5, 1));
    }
}
