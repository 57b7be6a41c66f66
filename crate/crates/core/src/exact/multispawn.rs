use super::{CapacityProfile, CellCounter};
use crate::error::{Error, Result};
use crate::mem::checked_add;
use crate::spdag::Role;

/// Running state while the children of one multi-spawn group arrive.
///
/// With `l` children seen, `suspended[i]` is the best water mark of an
/// `i`-edge antichain lying only in spawned children, counted as if every
/// later continuation joined it as a companion; `ignored[i]` is the best
/// `i`-edge water mark counting no such tail; `partialchain[i]` is the
/// best prefix contribution of the children seen so far to an `i`-edge
/// antichain that continues in later children. Each vector stores only its
/// finite cells: `suspended`/`ignored` start at size 1, `partialchain` at 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiSpawnExactState {
    p: usize,
    suspended: Vec<i64>,
    ignored: Vec<i64>,
    partialchain: Vec<i64>,
    total_a: i64,
    total_b: i64,
    next: Role,
}

fn at(v: &[i64], i: usize) -> Option<i64> {
    v.get(i).copied()
}

fn max_into(v: &mut Vec<i64>, i: usize, x: i64) {
    if i >= v.len() {
        v.resize(i + 1, i64::MIN);
    }
    v[i] = v[i].max(x);
}

impl MultiSpawnExactState {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            suspended: Vec::new(),
            ignored: Vec::new(),
            partialchain: vec![0],
            total_a: 0,
            total_b: 0,
            next: Role::A,
        }
    }

    pub fn suspended(&self, size: usize) -> Option<i64> {
        size.checked_sub(1).and_then(|k| at(&self.suspended, k))
    }

    pub fn ignored(&self, size: usize) -> Option<i64> {
        size.checked_sub(1).and_then(|k| at(&self.ignored, k))
    }

    pub fn partialchain(&self, size: usize) -> Option<i64> {
        at(&self.partialchain, size)
    }

    /// Largest finite index of `partialchain`.
    pub fn hi(&self) -> usize {
        self.partialchain.len() - 1
    }

    /// Cells currently held.
    pub fn cells(&self) -> usize {
        self.suspended.len() + self.ignored.len() + self.partialchain.len() + 3
    }

    fn expect(&mut self, role: Role, p: usize) -> Result<()> {
        if self.next != role {
            return Err(Error::Protocol(format!("multi-spawn expected a {:?} child", self.next)));
        }
        if self.p != p {
            return Err(Error::ProcessorMismatch(self.p, p));
        }
        self.next = match role {
            Role::A => Role::B,
            Role::B => Role::A,
        };
        Ok(())
    }

    /// `partialchain ⊕ R[1..]`, a max-plus convolution restricted to
    /// sizes `1..=p`; entry `k` holds size `k + 1`.
    fn extend(&self, r: &CapacityProfile, work: &mut CellCounter) -> Result<Vec<i64>> {
        let mut out = Vec::new();
        let mut visits = 0;
        for (j, &pc) in self.partialchain.iter().enumerate() {
            for (i, &v) in r.values().iter().enumerate().skip(1) {
                if i + j > self.p {
                    break;
                }
                max_into(&mut out, i + j - 1, checked_add(pc, v)?);
                visits += 1;
            }
        }
        work.cells += visits as u64;
        Ok(out)
    }

    /// Absorb the next continuation `a`.
    pub fn update_a(&mut self, r: &CapacityProfile, work: &mut CellCounter) -> Result<()> {
        self.expect(Role::A, r.p())?;
        let t = r.total();
        let conv = self.extend(r, work)?;
        for s in &mut self.suspended {
            *s = checked_add(*s, t)?;
        }
        for (k, v) in conv.into_iter().enumerate() {
            max_into(&mut self.ignored, k, v);
        }
        for c in &mut self.partialchain {
            *c = checked_add(*c, t)?;
        }
        self.total_a = checked_add(self.total_a, t)?;
        work.cells += (self.suspended.len() + self.ignored.len() + self.partialchain.len()) as u64;
        Ok(())
    }

    /// Absorb the next spawned child `b`.
    pub fn update_b(&mut self, r: &CapacityProfile, work: &mut CellCounter) -> Result<()> {
        self.expect(Role::B, r.p())?;
        let t = r.total();
        let conv = self.extend(r, work)?;
        let len = self.suspended.len().max(conv.len());
        let mut suspended = Vec::with_capacity(len);
        for k in 0..len {
            let kept = match at(&self.suspended, k) {
                Some(s) => Some(checked_add(s, t)?),
                None => None,
            };
            suspended.push(kept.into_iter().chain(at(&conv, k)).max().expect("finite cell"));
        }
        self.suspended = suspended;
        for (k, &v) in conv.iter().enumerate() {
            max_into(&mut self.ignored, k, v);
        }
        let r0 = r.values()[0];
        let len = self.partialchain.len().max(conv.len() + 1);
        let mut pc = Vec::with_capacity(len);
        for i in 0..len {
            let kept = match at(&self.partialchain, i) {
                Some(c) => Some(checked_add(c, r0)?),
                None => None,
            };
            let grown = i.checked_sub(1).and_then(|k| at(&conv, k));
            pc.push(kept.into_iter().chain(grown).max().expect("finite cell"));
        }
        self.partialchain = pc;
        self.total_b = checked_add(self.total_b, t)?;
        work.cells += (self.suspended.len() + self.ignored.len() + self.partialchain.len()) as u64;
        Ok(())
    }

    /// Profile of the whole group; the last child must have been an `a`.
    pub fn finalize(self, work: &mut CellCounter) -> Result<CapacityProfile> {
        if self.next != Role::B {
            return Err(Error::Protocol("multi-spawn must end with a continuation".into()));
        }
        let t = checked_add(self.total_a, self.total_b)?;
        let len = self.suspended.len().max(self.ignored.len());
        let mut r = Vec::with_capacity(len + 1);
        r.push(t.max(0));
        for k in 0..len {
            r.push(at(&self.suspended, k).into_iter().chain(at(&self.ignored, k)).max().expect("finite cell"));
        }
        work.cells += r.len() as u64;
        CapacityProfile::from_values(self.p, t, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(t: i64, m: i64) -> CapacityProfile {
        CapacityProfile::leaf(4, t, m)
    }

    #[test]
    fn fresh_state_after_neutral_a0() {
        let mut w = CellCounter::default();
        let mut s = MultiSpawnExactState::new(4);
        s.update_a(&leaf(0, 0), &mut w).unwrap();
        assert_eq!(s.ignored(1), Some(0));
        assert_eq!(s.partialchain(0), Some(0));
        assert_eq!(s.partialchain(1), None);
        s.update_b(&leaf(2, 3), &mut w).unwrap();
        assert_eq!((s.suspended(1), s.ignored(1)), (Some(3), Some(3)));
        assert_eq!((s.partialchain(0), s.partialchain(1)), (Some(2), Some(3)));
    }

    #[test]
    fn a_update_hand_trace() {
        let mut w = CellCounter::default();
        let mut s = MultiSpawnExactState::new(4);
        s.update_a(&leaf(0, 0), &mut w).unwrap();
        s.update_b(&leaf(2, 3), &mut w).unwrap();
        s.update_a(&leaf(-1, 1), &mut w).unwrap();
        assert_eq!(s.suspended(1), Some(2));
        assert_eq!((s.ignored(1), s.ignored(2)), (Some(3), Some(4)));
        assert_eq!((s.partialchain(0), s.partialchain(1)), (Some(1), Some(2)));
        let r = s.finalize(&mut w).unwrap();
        assert_eq!(r.values(), [1, 3, 4]);
    }

    #[test]
    fn lone_continuation() {
        let mut w = CellCounter::default();
        let mut s = MultiSpawnExactState::new(4);
        s.update_a(&leaf(-2, 5), &mut w).unwrap();
        assert_eq!(s.finalize(&mut w).unwrap(), leaf(-2, 5));
    }

    #[test]
    fn role_order_enforced() {
        let mut w = CellCounter::default();
        let mut s = MultiSpawnExactState::new(4);
        assert!(s.update_b(&leaf(1, 1), &mut w).is_err());
        let mut s = MultiSpawnExactState::new(4);
        s.update_a(&leaf(1, 1), &mut w).unwrap();
        s.update_b(&leaf(1, 1), &mut w).unwrap();
        assert!(s.clone().finalize(&mut w).is_err());
        assert!(s.update_b(&leaf(1, 1), &mut w).is_err());
    }

    #[test]
    fn negative_b_total_keeps_partialchain_floor() {
        let mut w = CellCounter::default();
        let mut s = MultiSpawnExactState::new(4);
        s.update_a(&leaf(3, 3), &mut w).unwrap();
        s.update_b(&leaf(-2, 1), &mut w).unwrap();
        assert_eq!(s.partialchain(0), Some(3));
    }
}
