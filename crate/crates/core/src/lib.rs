//! Private two-party approximate heavy hitters.
//!
//! Alice holds `a`, Bob holds `b`, both integer vectors in `[-M, M]^N`. The
//! protocol in [`protocol`] outputs at most `B` terms of `c = a + b` whose
//! Euclidean error is within `(1 + ε)` of the best `B`-term summary, while
//! revealing nothing beyond the exact top-`B` summary and `‖c‖₂`.
//!
//! Cryptographic building blocks (generic two-party computation, private
//! sample sum, private norm estimation) are modelled as ideal functionalities
//! in [`mpc`] and [`norm`] with deterministic cost accounting. The
//! [`privacy`] module contains the simulator and the statistical tests that
//! check it against real executions.

pub mod error;
pub mod extensions;
pub mod model;
pub mod mpc;
pub mod norm;
pub mod privacy;
pub mod protocol;
pub mod qualified;
pub mod seed;
pub mod sketch;
pub mod vector_io;

pub use error::{Error, Result};
pub use model::{
    compare_terms, decreasing_rearrangement, residual, support, top_b, ProtocolParams, Rational,
    Representation, Term, TermVector,
};
pub use norm::{NormEstimate, NormMode};
pub use protocol::{run_pehh, run_pehh_with_error, PehhOutput};
pub use seed::Seed;
