//! Brute-force oracles, randomized verification sweeps, and corpus
//! generation. Everything here stays independent of the index query paths it
//! checks.

pub mod gen;
pub mod oracle;
pub mod verify;
