//! Piecewise Laplace mechanism for one-dimensional statistics.
//!
//! Builds upper and lower envelopes of a function over datasets within
//! growing neighbor distance, samples from the piecewise Laplace mechanism and
//! the inverse sensitivity baseline, and checks privacy claims numerically.

pub mod approx;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod mechanisms;
pub mod scores;
pub mod verify;

pub use envelope::{
    build_bounded_sum_envelope, build_median_envelope, inverse_index, smooth_shift, Distance,
    EnvelopeTable, Interval, NeighborModel, OutputRange, Sign,
};
pub use error::{Error, Result};
pub use mechanisms::{Mechanism, MechanismKind, MechanismSpec, RandomStream, UniformSource};
pub use scores::{q_approx, q_laplace_reduction, q_plm, Score};
