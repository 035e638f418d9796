//! Problem constants and their TOML representation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ConfigError, Error};

const PROB_SUM_TOL: f64 = 1e-12;

/// All constants of the flow-allocation MDP.
///
/// UPF and flow-type indices are 0-based in every accessor; the 1-based
/// codes only appear in [`crate::model::Action`] targets and arrival types,
/// where 0 is reserved for "block" and "no arrival".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "K")]
    pub upfs: usize,
    #[serde(rename = "M")]
    pub flow_types: usize,
    /// Average rate requirement per flow type, strictly increasing.
    pub mean_rate: Vec<f64>,
    /// Maximum supported rate per UPF.
    pub capacity: Vec<f64>,
    /// Power cost per unit of rate, per UPF.
    pub unit_power_cost: Vec<f64>,
    /// Probability that a flow arrives in a slot.
    pub arrival_prob: f64,
    /// Type distribution of an arriving flow.
    pub type_prob: Vec<f64>,
    /// Probability that one flow leaves a non-empty UPF at the end of a slot.
    pub departure_prob: Vec<f64>,
    pub discount: f64,
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

fn check_len(key: &'static str, v: &[f64], want: usize, dim: &str) -> Result<(), ConfigError> {
    if v.len() != want {
        return Err(invalid(
            key,
            format!("expected {want} entries ({dim}), got {}", v.len()),
        ));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(invalid(key, format!("non-finite entry {x}")));
    }
    Ok(())
}

fn check_prob(key: &'static str, p: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(key, format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

impl ModelConfig {
    /// Five UPFs, two flow types: the reference experiment instance.
    pub fn reference() -> Self {
        Self {
            upfs: 5,
            flow_types: 2,
            mean_rate: vec![30.0, 35.0],
            capacity: vec![100.0; 5],
            unit_power_cost: vec![5.0, 4.0, 3.0, 2.0, 1.0],
            arrival_prob: 0.7,
            type_prob: vec![0.6, 0.4],
            departure_prob: vec![0.3; 5],
            discount: 0.96,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, Error> {
        let cfg: ModelConfig = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every invariant, naming the offending key on failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.upfs == 0 {
            return Err(invalid("K", "need at least one UPF"));
        }
        if self.flow_types == 0 {
            return Err(invalid("M", "need at least one flow type"));
        }
        let (k, m) = (self.upfs, self.flow_types);
        check_len("mean_rate", &self.mean_rate, m, "M")?;
        check_len("capacity", &self.capacity, k, "K")?;
        check_len("unit_power_cost", &self.unit_power_cost, k, "K")?;
        check_len("type_prob", &self.type_prob, m, "M")?;
        check_len("departure_prob", &self.departure_prob, k, "K")?;

        if self.mean_rate[0] <= 0.0 {
            return Err(invalid("mean_rate", "rates must be positive"));
        }
        if self.mean_rate.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("mean_rate", "rates must be strictly increasing"));
        }
        if let Some(c) = self.capacity.iter().find(|&&c| c <= self.mean_rate[0]) {
            return Err(invalid(
                "capacity",
                format!("capacity {c} cannot host even the smallest flow"),
            ));
        }
        if self.unit_power_cost.iter().any(|&c| c < 0.0) {
            return Err(invalid("unit_power_cost", "costs must be nonnegative"));
        }
        check_prob("arrival_prob", self.arrival_prob)?;
        for &b in &self.type_prob {
            check_prob("type_prob", b)?;
        }
        let total: f64 = self.type_prob.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid("type_prob", format!("sums to {total}, expected 1")));
        }
        for &q in &self.departure_prob {
            check_prob("departure_prob", q)?;
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(invalid("discount", format!("{} outside (0, 1)", self.discount)));
        }
        Ok(())
    }

    /// Short stable fingerprint written into every CSV header.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Bernoulli arrival law over `0..=M` (0 = no arrival).
    pub fn arrival_distribution(&self) -> Vec<(usize, f64)> {
        std::iter::once((0, 1.0 - self.arrival_prob))
            .chain(
                self.type_prob
                    .iter()
                    .enumerate()
                    .map(|(m, &b)| (m + 1, self.arrival_prob * b)),
            )
            .collect()
    }
}
