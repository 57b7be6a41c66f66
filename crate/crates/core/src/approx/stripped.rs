use super::{classify_b_component, natural_peak, ActiveRule, ApproxComponentState, BClass};
use crate::error::{Error, Result};
use crate::mem::{checked_add, Mem, ThresholdQuery};
use crate::spdag::Role;

/// Constant-size running state of one multi-spawn group for the threshold
/// test.
///
/// "Suspend-end" values assume every component after the last spawned child
/// holding antichain edges joins as a companion; "ignore-end" values assume
/// none does. `robustunfinished` carries the natural contributions up to the
/// last naturally active child, `robustunfinishedtail` those after it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct StrippedOnlineState {
    pub multirobustsuspendend: Mem,
    pub multirobustignoreend: Mem,
    pub singlesuspendend: Mem,
    pub singleignoreend: Mem,
    pub robustunfinished: Mem,
    pub robustunfinishedtail: i64,
    pub edgetotal: i64,
    pub emptytail: i64,
    next: Role,
}

impl Default for StrippedOnlineState {
    fn default() -> Self {
        Self::new()
    }
}

impl StrippedOnlineState {
    pub fn new() -> Self {
        Self {
            multirobustsuspendend: Mem::NegInf,
            multirobustignoreend: Mem::NegInf,
            singlesuspendend: Mem::NegInf,
            singleignoreend: Mem::NegInf,
            robustunfinished: Mem::NegInf,
            robustunfinishedtail: 0,
            edgetotal: 0,
            emptytail: 0,
            next: Role::A,
        }
    }

    fn expect(&mut self, role: Role) -> Result<()> {
        if self.next != role {
            return Err(Error::Protocol(format!("multi-spawn expected a {:?} child", self.next)));
        }
        self.next = match role {
            Role::A => Role::B,
            Role::B => Role::A,
        };
        Ok(())
    }

    /// Best ignore-end water mark of a multi-edge antichain that takes the
    /// carried prefix plus edges from `c`.
    fn extend(&self, c: &ApproxComponentState, q: &ThresholdQuery) -> Result<Mem> {
        let tail = self.robustunfinishedtail;
        let ru = self.robustunfinished;
        let mut best = Mem::NegInf;
        if ru.is_finite() && q.mem_exceeds_gate(c.maxchain.add_bytes(tail)?) {
            best = best.max(ru.add_bytes(tail)?.plus(c.maxchain)?);
        }
        if c.maxrobust.is_finite() {
            let base = if ru.is_finite() { ru.add_bytes(tail)? } else { Mem::Bytes(tail) };
            best = best.max(base.plus(c.maxrobust)?);
        }
        Ok(best)
    }

    /// Absorb the next continuation `a`.
    pub fn update_a(&mut self, a: &ApproxComponentState, q: &ThresholdQuery) -> Result<()> {
        self.expect(Role::A)?;
        let x = self.extend(a, q)?;
        self.multirobustignoreend = self.multirobustignoreend.max(x);
        let t = a.memtotal;
        self.multirobustsuspendend = self.multirobustsuspendend.add_bytes(t)?;
        self.singlesuspendend = self.singlesuspendend.add_bytes(t)?;
        self.singleignoreend = self.singleignoreend.max(a.maxchain.add_bytes(self.emptytail)?);
        self.robustunfinishedtail = checked_add(self.robustunfinishedtail, t)?;
        self.edgetotal = checked_add(self.edgetotal, t)?;
        self.emptytail = checked_add(self.emptytail, t)?;
        Ok(())
    }

    /// Absorb the next spawned child `b`.
    pub fn update_b(&mut self, b: &ApproxComponentState, q: &ThresholdQuery, rule: ActiveRule) -> Result<()> {
        self.expect(Role::B)?;
        let t = b.memtotal;
        let single = b.maxchain.add_bytes(self.emptytail)?;
        self.singlesuspendend = self.singlesuspendend.add_bytes(t)?.max(single);
        self.singleignoreend = self.singleignoreend.max(single);
        self.edgetotal = checked_add(self.edgetotal, t)?;
        self.emptytail = checked_add(self.emptytail, t.max(0))?;

        let x = self.extend(b, q)?;
        self.multirobustsuspendend = self.multirobustsuspendend.add_bytes(t)?.max(x);
        self.multirobustignoreend = self.multirobustignoreend.max(x);

        match classify_b_component(natural_peak(b, q), t, q, rule) {
            BClass::NaturalCompanion(t) => {
                self.robustunfinishedtail = checked_add(self.robustunfinishedtail, t)?;
            }
            BClass::NaturallyDormant => {}
            BClass::NaturallyActive(m) => {
                let carried = self.robustunfinished.or_zero();
                let sum = checked_add(checked_add(carried, self.robustunfinishedtail)?, m)?;
                self.robustunfinished = Mem::Bytes(sum);
                self.robustunfinishedtail = 0;
            }
        }
        Ok(())
    }

    /// Summary of the whole group; the last child must have been an `a`.
    pub fn finalize(self) -> Result<ApproxComponentState> {
        if self.next != Role::B {
            return Err(Error::Protocol("multi-spawn must end with a continuation".into()));
        }
        Ok(ApproxComponentState {
            memtotal: self.edgetotal,
            maxchain: self.singlesuspendend.max(self.singleignoreend),
            maxrobust: self.multirobustsuspendend.max(self.multirobustignoreend),
        })
    }
}
