//! Group-sparse recovery with a nonconvex `l_{p,q}` penalty and an `l_r` fidelity term,
//! solved by iterative support shrinking with proximal linearization and a scaled ADMM
//! inner solver.

pub mod admm;
pub mod datagen;
pub mod error;
pub mod io;
pub mod issapl;
pub mod model;
pub mod oracle;
pub mod prox;
pub mod subdiff;

pub use error::{Error, Result};
pub use issapl::{solve, RunRecord, SolverConfig};
pub use model::{Exponent, GroupPartition, GroupedVector, ProblemSpec, SupportSet};
