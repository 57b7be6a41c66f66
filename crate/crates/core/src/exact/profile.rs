use crate::error::{Error, Result};
use crate::mem::{checked_add, Mem};

/// Best water mark of a component for each antichain size.
///
/// `R[0] = max(0, t)`; `R[i]` for `1 <= i <= s` is the best water mark over
/// antichains of exactly `i` edges; larger sizes are infeasible. Only the
/// finite prefix `R[0..=s]` is stored, so the trailing `-inf` tail costs
/// nothing and its length is the `s` cursor.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CapacityProfile {
    p: usize,
    t: i64,
    r: Vec<i64>,
}

/// Work counter shared by all profile operations: one unit per cell read
/// or written.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CellCounter {
    pub cells: u64,
}

impl CellCounter {
    fn add(&mut self, n: usize) {
        self.cells += n as u64;
    }
}

impl CapacityProfile {
    /// Profile of a component with no edges.
    pub fn neutral(p: usize) -> Self {
        Self { p, t: 0, r: vec![0] }
    }

    pub fn leaf(p: usize, t: i64, m: i64) -> Self {
        debug_assert!(p >= 1);
        Self { p, t, r: vec![t.max(0), m] }
    }

    /// Build from explicit values `R[0..=s]`, all finite.
    pub fn from_values(p: usize, t: i64, r: Vec<i64>) -> Result<Self> {
        if r.is_empty() || r.len() > p + 1 || r[0] != t.max(0) {
            return Err(Error::InvalidArgument("profile needs R[0] = max(0, t) and at most p + 1 cells".into()));
        }
        Ok(Self { p, t, r })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn total(&self) -> i64 {
        self.t
    }

    /// Largest feasible antichain size, capped at `p`.
    pub fn s(&self) -> usize {
        self.r.len() - 1
    }

    pub fn get(&self, i: usize) -> Mem {
        self.r.get(i).map_or(Mem::NegInf, |&v| Mem::Bytes(v))
    }

    /// Finite cells `R[0..=s]`.
    pub fn values(&self) -> &[i64] {
        &self.r
    }

    /// All `p + 1` cells with the infeasible tail spelled out.
    pub fn to_array(&self) -> Vec<Mem> {
        (0..=self.p).map(|i| self.get(i)).collect()
    }

    /// `H[q] = max(R[1..=q])` for `q = 1..=p`; sizes beyond `s` repeat `H[s]`.
    pub fn hwm(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.p);
        let mut run = if self.s() == 0 { self.r[0] } else { i64::MIN };
        for q in 1..=self.p {
            if let Some(&v) = self.r.get(q) {
                run = run.max(v);
            }
            out.push(run);
        }
        out
    }

    fn check_p(&self, other: &Self) -> Result<()> {
        if self.p != other.p {
            return Err(Error::ProcessorMismatch(self.p, other.p));
        }
        Ok(())
    }
}

/// `first` followed by `second`.
pub fn combine_series(first: &CapacityProfile, second: &CapacityProfile, work: &mut CellCounter) -> Result<CapacityProfile> {
    first.check_p(second)?;
    let t = checked_add(first.t, second.t)?;
    let s = first.s().max(second.s());
    let mut r = Vec::with_capacity(s + 1);
    r.push(t.max(0));
    for i in 1..=s {
        let shifted = match second.r.get(i) {
            Some(&v) => Some(checked_add(first.t, v)?),
            None => None,
        };
        let v = match (first.r.get(i), shifted) {
            (Some(&a), Some(b)) => a.max(b),
            (Some(&a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("i <= max(s1, s2)"),
        };
        r.push(v);
    }
    work.add(s + 1);
    Ok(CapacityProfile { p: first.p, t, r })
}

/// `left` and `right` in parallel: a bounded max-plus convolution over the
/// finite cells only.
pub fn combine_parallel(left: &CapacityProfile, right: &CapacityProfile, work: &mut CellCounter) -> Result<CapacityProfile> {
    left.check_p(right)?;
    let p = left.p;
    let t = checked_add(left.t, right.t)?;
    let s = (left.s() + right.s()).min(p);
    let mut r = vec![i64::MIN; s + 1];
    r[0] = t.max(0);
    let mut visits = 0usize;
    for (j, &a) in left.r.iter().enumerate() {
        for (k, &b) in right.r.iter().enumerate().take(p + 1 - j) {
            if j + k == 0 {
                continue;
            }
            let v = checked_add(a, b)?;
            if v > r[j + k] {
                r[j + k] = v;
            }
            visits += 1;
        }
    }
    work.add(visits + s + 1);
    Ok(CapacityProfile { p, t, r })
}
