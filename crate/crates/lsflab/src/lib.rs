//! Numerical laboratory for the mean-convex level set flow.
//!
//! The pipeline: generate a closed mean-convex initial surface as a signed
//! distance field ([`shapes`]), compute its arrival time function by
//! parabolic level-set evolution and/or epsilon-elliptic regularization
//! ([`solver`]), extract and classify the singular set ([`singular`]),
//! measure noncollapsing / area-ratio / entropy / two-convexity quantities
//! ([`metrics`]), and run baseline-vs-perturbed stability experiments
//! ([`stability`]). Fields travel as LSF1 binary files, reports as JSON
//! ([`io`]).

pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod minmax;
pub mod shapes;
pub mod singular;
pub mod solver;
pub mod stability;

pub use error::{LsfError, Result};
