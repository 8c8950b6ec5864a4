//! Value augmented sampling over small token MDPs.
//!
//! A frozen base policy's next-token distribution is tilted by
//! `exp(β·V(s ⊕ x))`, where `V` is a value estimator of that same base policy
//! trained from its own samples with TD(λ). Exact enumeration oracles
//! ([`oracle`]) back every approximate component with ground truth.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decode;
pub mod error;
pub mod eval;
pub mod mdp;
pub mod oracle;
pub mod seed;
pub mod suite;
pub mod value;

pub use error::{Result, VasError};
pub use mdp::{EpisodeConfig, Policy, RewardFn, RewardSpec, State, TokenId, Trajectory, Vocab};
