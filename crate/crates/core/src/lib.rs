//! Memory high-water mark analysis of fork-join programs from serial traces.
//!
//! A trace recorded on one worker is turned into a series-parallel
//! decomposition whose strands carry allocation summaries. From it the crate
//! computes, for a processor bound `p`, the largest memory footprint any
//! `p`-processor schedule can reach (exactly, or as a threshold test in
//! constant space per open frame), plus brute-force references for small
//! inputs.

pub mod approx;
pub mod bench;
pub mod error;
pub mod exact;
pub mod mem;
pub mod oracle;
pub mod report;
pub mod spdag;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
pub use mem::{Mem, ThresholdQuery};
