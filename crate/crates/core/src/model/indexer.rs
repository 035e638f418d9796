use crate::config::ModelConfig;
use crate::error::{Error, Result};

use super::{row_load, AllocationMatrix, SystemState};

/// Largest state space `enumerate` accepts unless told otherwise.
pub const DEFAULT_STATE_CAP: u128 = 100_000_000;

/// Dense bijection between feasible states and `0..total_states`.
///
/// Each UPF contributes one mixed-radix digit: the position of its row in the
/// lexicographically sorted list of feasible rows. UPF 0 is the most
/// significant allocation digit and the arrival type sits above all of them:
/// `state = f * total_allocs + alloc`.
#[derive(Clone, Debug)]
pub struct StateIndexer {
    flow_types: usize,
    per_upf_vectors: Vec<Vec<Vec<u32>>>,
    radices: Vec<usize>,
    strides: Vec<usize>,
    total_allocs: usize,
    total_states: usize,
}

/// All rows `n` with `sum_m n_m * rate_m < capacity`, in lexicographic order.
fn feasible_rows(rates: &[f64], capacity: f64) -> Vec<Vec<u32>> {
    fn walk(rates: &[f64], capacity: f64, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let m = prefix.len();
        if m == rates.len() {
            out.push(prefix.clone());
            return;
        }
        let mut n = 0u32;
        loop {
            prefix.push(n);
            let load = row_load(prefix, rates);
            if load < capacity {
                walk(rates, capacity, prefix, out);
                prefix.pop();
                n += 1;
            } else {
                prefix.pop();
                break;
            }
        }
    }
    let mut out = Vec::new();
    walk(rates, capacity, &mut Vec::with_capacity(rates.len()), &mut out);
    out
}

impl StateIndexer {
    pub fn enumerate(cfg: &ModelConfig) -> Result<Self> {
        Self::enumerate_with_cap(cfg, DEFAULT_STATE_CAP)
    }

    pub fn enumerate_with_cap(cfg: &ModelConfig, cap: u128) -> Result<Self> {
        cfg.validate()?;
        let per_upf_vectors: Vec<Vec<Vec<u32>>> =
            cfg.capacity.iter().map(|&c| feasible_rows(&cfg.mean_rate, c)).collect();
        let radices: Vec<usize> = per_upf_vectors.iter().map(Vec::len).collect();

        let allocs: u128 = radices.iter().map(|&r| r as u128).product();
        let states = allocs * (cfg.flow_types as u128 + 1);
        if states > cap {
            return Err(Error::InstanceTooLarge { states, cap });
        }

        let mut strides = vec![1usize; radices.len()];
        for k in (0..radices.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * radices[k + 1];
        }
        Ok(Self {
            flow_types: cfg.flow_types,
            per_upf_vectors,
            radices,
            strides,
            total_allocs: allocs as usize,
            total_states: states as usize,
        })
    }

    pub fn total_states(&self) -> usize {
        self.total_states
    }

    pub fn total_allocs(&self) -> usize {
        self.total_allocs
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn upfs(&self) -> usize {
        self.radices.len()
    }

    pub fn flow_types(&self) -> usize {
        self.flow_types
    }

    /// Feasible rows of UPF `k`, lexicographically sorted.
    pub fn upf_vectors(&self, k: usize) -> &[Vec<u32>] {
        &self.per_upf_vectors[k]
    }

    /// Position of `row` among UPF `k`'s feasible rows.
    pub fn digit_of_row(&self, k: usize, row: &[u32]) -> Option<usize> {
        self.per_upf_vectors[k].binary_search_by(|v| v.as_slice().cmp(row)).ok()
    }

    pub fn digit(&self, alloc_index: usize, k: usize) -> usize {
        (alloc_index / self.strides[k]) % self.radices[k]
    }

    pub fn alloc_index(&self, alloc: &AllocationMatrix) -> Result<usize> {
        if alloc.upfs() != self.upfs() || alloc.flow_types() != self.flow_types {
            return Err(Error::Shape {
                rows: alloc.upfs(),
                cols: alloc.flow_types(),
                k: self.upfs(),
                m: self.flow_types,
            });
        }
        let mut idx = 0;
        for (k, row) in alloc.rows().enumerate() {
            let digit = self.digit_of_row(k, row).ok_or(Error::Infeasible {
                upf: k,
                load: f64::NAN,
                capacity: f64::NAN,
            })?;
            idx += digit * self.strides[k];
        }
        Ok(idx)
    }

    pub fn alloc_from_index(&self, alloc_index: usize) -> Result<AllocationMatrix> {
        if alloc_index >= self.total_allocs {
            return Err(Error::IndexOutOfRange {
                index: alloc_index,
                bound: self.total_allocs,
            });
        }
        let rows: Vec<&[u32]> = (0..self.upfs())
            .map(|k| self.per_upf_vectors[k][self.digit(alloc_index, k)].as_slice())
            .collect();
        Ok(AllocationMatrix::from_rows(&rows))
    }

    pub fn index_of(&self, s: &SystemState) -> Result<usize> {
        if s.arrival > self.flow_types {
            return Err(Error::IndexOutOfRange {
                index: s.arrival,
                bound: self.flow_types + 1,
            });
        }
        Ok(s.arrival * self.total_allocs + self.alloc_index(&s.alloc)?)
    }

    pub fn state_from_index(&self, index: usize) -> Result<SystemState> {
        if index >= self.total_states {
            return Err(Error::IndexOutOfRange {
                index,
                bound: self.total_states,
            });
        }
        Ok(SystemState {
            alloc: self.alloc_from_index(index % self.total_allocs)?,
            arrival: index / self.total_allocs,
        })
    }

    /// `(M+1) * prod_k floor(C_k / R_1)^M`, the growth estimate for the state count.
    ///
    /// Only a true upper bound when every `C_k / R_1` is an integer; use
    /// [`StateIndexer::box_bound`] for a bound that always holds.
    pub fn cardinality_estimate(cfg: &ModelConfig) -> f64 {
        let per_upf = cfg
            .capacity
            .iter()
            .map(|&c| (c / cfg.mean_rate[0]).floor().powi(cfg.flow_types as i32))
            .product::<f64>();
        (cfg.flow_types as f64 + 1.0) * per_upf
    }

    /// `(M+1) * prod_k ceil(C_k / R_1)^M`: each count lies in `0..ceil(C_k/R_m)`.
    pub fn box_bound(cfg: &ModelConfig) -> f64 {
        let per_upf = cfg
            .capacity
            .iter()
            .map(|&c| (c / cfg.mean_rate[0]).ceil().powi(cfg.flow_types as i32))
            .product::<f64>();
        (cfg.flow_types as f64 + 1.0) * per_upf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_config(k: usize, capacity: f64) -> ModelConfig {
        ModelConfig {
            upfs: k,
            flow_types: 1,
            mean_rate: vec![1.0],
            capacity: vec![capacity; k],
            unit_power_cost: vec![1.0; k],
            arrival_prob: 0.5,
            type_prob: vec![1.0],
            departure_prob: vec![0.5; k],
            discount: 0.9,
        }
    }

    #[test]
    fn reference_instance_cardinality() {
        let cfg = ModelConfig::reference();
        let ix = StateIndexer::enumerate(&cfg).unwrap();
        assert_eq!(ix.radices(), &[8; 5]);
        assert_eq!(ix.total_allocs(), 32_768);
        assert_eq!(ix.total_states(), 98_304);
        assert_eq!(
            ix.upf_vectors(0),
            &[
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![2, 0],
                vec![2, 1],
                vec![3, 0]
            ]
        );
        assert!(ix.total_states() as f64 <= StateIndexer::cardinality_estimate(&cfg));
    }

    #[test]
    fn tiny_instance_brute_force() {
        let cfg = unit_config(1, 2.0);
        let ix = StateIndexer::enumerate(&cfg).unwrap();
        assert_eq!(ix.upf_vectors(0), &[vec![0], vec![1]]);
        assert_eq!(ix.total_states(), 4);
    }

    #[test]
    fn cap_is_enforced() {
        let cfg = ModelConfig::reference();
        let err = StateIndexer::enumerate_with_cap(&cfg, 1000).unwrap_err();
        assert!(matches!(
            err,
            Error::InstanceTooLarge {
                states: 98_304,
                cap: 1000
            }
        ));
    }

    #[test]
    fn estimate_can_undercount_fractional_ratio() {
        // Rows {0, 1, 2} are feasible under capacity 2.5 but floor(2.5) = 2.
        let cfg = unit_config(1, 2.5);
        let ix = StateIndexer::enumerate(&cfg).unwrap();
        assert_eq!(ix.total_states(), 6);
        assert_eq!(StateIndexer::cardinality_estimate(&cfg), 4.0);
        assert!(ix.total_states() as f64 <= StateIndexer::box_bound(&cfg));
    }

    #[test]
    fn round_trip_small() {
        let cfg = ModelConfig {
            upfs: 2,
            flow_types: 2,
            mean_rate: vec![1.0, 2.0],
            capacity: vec![3.0, 4.0],
            unit_power_cost: vec![1.0, 1.0],
            arrival_prob: 0.5,
            type_prob: vec![0.5, 0.5],
            departure_prob: vec![0.5, 0.5],
            discount: 0.9,
        };
        let ix = StateIndexer::enumerate(&cfg).unwrap();
        for i in 0..ix.total_states() {
            let s = ix.state_from_index(i).unwrap();
            cfg.check_feasible(&s.alloc).unwrap();
            assert_eq!(ix.index_of(&s).unwrap(), i);
        }
        assert!(ix.state_from_index(ix.total_states()).is_err());
    }
}
