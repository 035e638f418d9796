#![allow(dead_code)]

use std::collections::BTreeMap;

use flowalloc::model::departure_distribution_upf;
use flowalloc::{Mdp, ModelConfig};

/// K=2, M=2, C=(3,4), R=(1,2).
pub fn small_config() -> ModelConfig {
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

/// K=1, M=1, C=2.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        upfs: 1,
        flow_types: 1,
        mean_rate: vec![1.0],
        capacity: vec![2.0],
        unit_power_cost: vec![1.0],
        arrival_prob: 0.5,
        type_prob: vec![1.0],
        departure_prob: vec![0.5],
        discount: 0.9,
    }
}

pub fn small() -> Mdp {
    Mdp::new(small_config()).unwrap()
}

pub fn tiny() -> Mdp {
    Mdp::new(tiny_config()).unwrap()
}

pub fn reference() -> Mdp {
    Mdp::new(ModelConfig::reference()).unwrap()
}

pub fn rel_sup_error(got: &[f64], want: &[f64]) -> f64 {
    let num = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let den = want.iter().map(|v| v.abs()).fold(0.0, f64::max);
    num / den
}

/// Next-row law of UPF `k` written on the pre-decision row: the untouched
/// UPF loses one present flow with probability `q`; the UPF receiving a
/// type-`t` arrival either keeps it, loses it again, or swaps it for an
/// older flow of another type.
pub fn literal_upf_law(pre: &[u32], q: f64, admitted: Option<usize>) -> BTreeMap<Vec<u32>, f64> {
    let mut out = BTreeMap::new();
    let total: u32 = pre.iter().sum();
    match admitted {
        None if total == 0 => {
            out.insert(pre.to_vec(), 1.0);
        }
        None => {
            *out.entry(pre.to_vec()).or_insert(0.0) += 1.0 - q;
            for (m, &n) in pre.iter().enumerate() {
                if n > 0 {
                    let mut r = pre.to_vec();
                    r[m] -= 1;
                    *out.entry(r).or_insert(0.0) += q * f64::from(n) / f64::from(total);
                }
            }
        }
        Some(t) => {
            let denom = f64::from(total + 1);
            let mut plus = pre.to_vec();
            plus[t] += 1;
            *out.entry(plus.clone()).or_insert(0.0) += 1.0 - q;
            *out.entry(pre.to_vec()).or_insert(0.0) += q * f64::from(pre[t] + 1) / denom;
            for (m, &n) in pre.iter().enumerate() {
                if m != t && n > 0 {
                    let mut r = plus.clone();
                    r[m] -= 1;
                    *out.entry(r).or_insert(0.0) += q * f64::from(n) / denom;
                }
            }
        }
    }
    out
}

pub fn post_decision_upf_law(post: &[u32], q: f64) -> BTreeMap<Vec<u32>, f64> {
    let mut out = BTreeMap::new();
    for (u, p) in departure_distribution_upf(post, q) {
        let mut r = post.to_vec();
        if let Some(m) = u {
            r[m] -= 1;
        }
        *out.entry(r).or_insert(0.0) += p;
    }
    out
}
