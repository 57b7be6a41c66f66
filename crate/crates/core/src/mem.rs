//! Byte quantities with an absorbing negative-infinity sentinel, and the
//! exact-arithmetic threshold used by the approximate analyses.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// A signed byte count, or `NegInf` for "no antichain of this shape exists".
///
/// `NegInf` is the minimum under `Ord` and absorbs addition. Finite sums are
/// checked; overflow is reported as [`Error::Overflow`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub enum Mem {
    #[default]
    NegInf,
    Bytes(i64),
}

pub use Mem::{Bytes, NegInf};

impl Mem {
    pub const ZERO: Mem = Mem::Bytes(0);

    pub fn is_finite(self) -> bool {
        matches!(self, Mem::Bytes(_))
    }

    pub fn finite(self) -> Option<i64> {
        match self {
            Mem::Bytes(v) => Some(v),
            Mem::NegInf => None,
        }
    }

    /// Sum of two values; `NegInf` if either side is.
    pub fn plus(self, other: Mem) -> Result<Mem> {
        match (self, other) {
            (Mem::Bytes(a), Mem::Bytes(b)) => {
                a.checked_add(b).map(Mem::Bytes).ok_or(Error::Overflow)
            }
            _ => Ok(Mem::NegInf),
        }
    }

    pub fn add_bytes(self, b: i64) -> Result<Mem> {
        self.plus(Mem::Bytes(b))
    }

    /// The value with `NegInf` read as zero.
    pub fn or_zero(self) -> i64 {
        self.finite().unwrap_or(0)
    }
}

impl PartialOrd for Mem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Mem {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Mem::NegInf, Mem::NegInf) => Ordering::Equal,
            (Mem::NegInf, _) => Ordering::Less,
            (_, Mem::NegInf) => Ordering::Greater,
            (Mem::Bytes(a), Mem::Bytes(b)) => a.cmp(b),
        }
    }
}

impl From<i64> for Mem {
    fn from(v: i64) -> Self {
        Mem::Bytes(v)
    }
}

impl fmt::Display for Mem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mem::NegInf => f.write_str("-inf"),
            Mem::Bytes(v) => write!(f, "{v}"),
        }
    }
}

pub(crate) fn checked_add(a: i64, b: i64) -> Result<i64> {
    a.checked_add(b).ok_or(Error::Overflow)
}

/// A threshold query `(M, p)`.
///
/// Comparisons against `M / 2p` are done in 128-bit integers as `2·p·x` vs
/// `M`, never by division.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ThresholdQuery {
    memory: u64,
    procs: u64,
}

impl ThresholdQuery {
    pub fn new(memory: u64, procs: u64) -> Result<Self> {
        if procs == 0 {
            return Err(Error::InvalidArgument("processor count must be at least 1".into()));
        }
        if memory > i64::MAX as u64 {
            return Err(Error::Overflow);
        }
        Ok(Self { memory, procs })
    }

    /// The memory threshold `M` in bytes.
    pub fn memory(&self) -> u64 {
        self.memory
    }

    pub fn procs(&self) -> u64 {
        self.procs
    }

    fn scaled(&self, x: i64) -> i128 {
        2 * self.procs as i128 * x as i128
    }

    /// `x > M / 2p`.
    pub fn exceeds_gate(&self, x: i64) -> bool {
        self.scaled(x) > self.memory as i128
    }

    /// `x > M / 2p`, with `NegInf` never exceeding.
    pub fn mem_exceeds_gate(&self, x: Mem) -> bool {
        x.finite().is_some_and(|v| self.exceeds_gate(v))
    }

    /// `x ≤ base + M / 2p`.
    pub fn within_gate_of(&self, x: i64, base: i64) -> bool {
        self.scaled(x) - self.scaled(base) <= self.memory as i128
    }

    /// `x ≥ base + M / 2p`.
    pub fn reaches_gate_over(&self, x: i64, base: i64) -> bool {
        self.scaled(x) - self.scaled(base) >= self.memory as i128
    }

    /// `h > M / 2`.
    pub fn exceeds_half(&self, h: i64) -> bool {
        2 * h as i128 > self.memory as i128
    }
}
