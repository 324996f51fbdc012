//! Reusable query substructures: 3-sided range reporting, weighted interval
//! stabbing with priority via partial persistence, online sorted range
//! reporting, predecessor dictionaries, and rank/select bit vectors.
//!
//! Every structure here is immutable after build and is verified against a
//! naive oracle on randomized instances.

mod bitvec;
mod osrr;
mod rankdict;
mod stabbing;
mod threesided;

pub use bitvec::BitVec;
pub use osrr::{OnlineSortedRange, OsrrStream};
pub use rankdict::RankDict;
pub use stabbing::{PersistentStabbing, StabStream};
pub use threesided::ThreeSided;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeomError {
    #[error("select out of range: {i} > {ones}")]
    SelectOutOfRange { i: u32, ones: u32 },
    #[error("invalid range [{lo}, {hi}] for length {len}")]
    InvalidRange { lo: usize, hi: usize, len: usize },
}
