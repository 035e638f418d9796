//! Flow allocation over heterogeneous user-plane functions as a discounted
//! MDP: exact model and kernel, a seeded slot simulator, a dynamic-programming
//! oracle, post-decision-state value iteration and a Q-learning baseline,
//! plus the Monte Carlo harness that compares them.

pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod learners;
pub mod mdp;
pub mod model;
pub mod oracle;

pub use config::ModelConfig;
pub use error::{ConfigError, Error, Result};
pub use mdp::Mdp;
