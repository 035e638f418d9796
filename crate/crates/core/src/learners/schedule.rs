use serde::{Deserialize, Serialize};

/// Per-entry step size `alpha_n = 1 / (offset + n)^exponent`, where `n` is the
/// number of earlier updates of that entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    exponent: f64,
    offset: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            exponent: 0.7,
            offset: 1.0,
        }
    }
}

impl StepSchedule {
    /// `exponent` in `(0.5, 1]` keeps `sum alpha = inf` and `sum alpha^2 < inf`.
    pub fn new(exponent: f64, offset: f64) -> Result<Self, String> {
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(format!("step exponent {exponent} outside (0.5, 1]"));
        }
        if offset.is_nan() || offset < 1.0 {
            return Err(format!("step offset {offset} below 1"));
        }
        Ok(Self { exponent, offset })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn alpha(&self, visits: u64) -> f64 {
        (self.offset + visits as f64).powf(-self.exponent)
    }
}

/// Linear decay from `start` to `end` over the first `decay_slots` slots, then flat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_slots: u64,
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self {
            start: eps,
            end: eps,
            decay_slots: 0,
        }
    }

    /// 1.0 down to 0.01 over the first 20% of `total_slots`.
    pub fn for_training(total_slots: u64) -> Self {
        Self {
            start: 1.0,
            end: 0.01,
            decay_slots: total_slots / 5,
        }
    }

    /// Exploration rate at 0-based slot `t`.
    pub fn at(&self, t: u64) -> f64 {
        if t >= self.decay_slots {
            return self.end;
        }
        let frac = t as f64 / self.decay_slots as f64;
        self.start + (self.end - self.start) * frac
    }
}
