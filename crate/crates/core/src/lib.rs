//! Bell inequalities tailored to graph states: construction, classical and
//! quantum bounds, sum-of-squares certificates, self-testing and robustness.
//!
//! Parties are 0-indexed throughout the API. Qubit `q` of an `n`-qubit state
//! is bit `n - 1 - q` of the basis index, so party 0 is the most significant bit.

pub mod bounds;
pub mod certificates;
pub mod error;
pub mod graphs;
pub mod inequalities;
pub mod linalg;
pub mod pauli_states;
pub mod robustness;
pub mod selftesting;

pub use error::{Error, Result};
pub use graphs::{Builtin, Graph};
pub use inequalities::{BellExpression, Family, Setting, Term};
pub use pauli_states::StateVector;
