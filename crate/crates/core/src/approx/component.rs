use crate::error::Result;
use crate::mem::{checked_add, Mem, ThresholdQuery};

/// Constant-size summary of a component for the threshold test.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ApproxComponentState {
    /// Sum of edge totals.
    pub memtotal: i64,
    /// Best single-edge water mark; `-inf` only for a component with no edges.
    pub maxchain: Mem,
    /// Best water mark over qualifying antichains of two or more edges.
    pub maxrobust: Mem,
}

impl ApproxComponentState {
    pub fn leaf(t: i64, m: i64) -> Self {
        Self { memtotal: t, maxchain: Mem::Bytes(m), maxrobust: Mem::NegInf }
    }

    /// A component with no edges.
    pub fn empty() -> Self {
        Self { memtotal: 0, maxchain: Mem::NegInf, maxrobust: Mem::NegInf }
    }

    /// `maxchain` if it clears the gate, else `-inf`.
    pub fn gated_chain(&self, q: &ThresholdQuery) -> Mem {
        if q.mem_exceeds_gate(self.maxchain) {
            self.maxchain
        } else {
            Mem::NegInf
        }
    }

    /// Best qualifying water mark with the empty antichain scoring 0.
    pub fn h(&self, q: &ThresholdQuery) -> i64 {
        self.gated_chain(q).max(self.maxrobust).or_zero().max(0)
    }
}

/// `first` followed by `second`.
pub fn approx_series(first: &ApproxComponentState, second: &ApproxComponentState) -> Result<ApproxComponentState> {
    Ok(ApproxComponentState {
        memtotal: checked_add(first.memtotal, second.memtotal)?,
        maxchain: first.maxchain.max(second.maxchain.add_bytes(first.memtotal)?),
        maxrobust: first.maxrobust.max(second.maxrobust.add_bytes(first.memtotal)?),
    })
}

/// `left` and `right` in parallel under the query's gate.
pub fn approx_parallel(
    left: &ApproxComponentState,
    right: &ApproxComponentState,
    q: &ThresholdQuery,
) -> Result<ApproxComponentState> {
    let memtotal = checked_add(left.memtotal, right.memtotal)?;
    let maxchain = left
        .maxchain
        .add_bytes(right.memtotal.max(0))?
        .max(right.maxchain.add_bytes(left.memtotal.max(0))?);
    let (g1, g2) = (left.gated_chain(q), right.gated_chain(q));
    // Best contribution of one side when the other holds a multi-edge set:
    // several edges, one edge, or none (as a companion or not).
    let side = |g: Mem, c: &ApproxComponentState| g.max(c.maxrobust).max(Mem::Bytes(c.memtotal.max(0)));
    let maxrobust = g1
        .plus(g2)?
        .max(side(g1, left).plus(right.maxrobust)?)
        .max(side(g2, right).plus(left.maxrobust)?);
    Ok(ApproxComponentState { memtotal, maxchain, maxrobust })
}

/// Role a spawned component plays in a best multi-edge antichain that
/// continues past it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BClass {
    /// Contributes its total as a suspended companion.
    NaturalCompanion(i64),
    /// Contributes nothing.
    NaturallyDormant,
    /// Contributes its own best qualifying antichain.
    NaturallyActive(i64),
}

/// How an exact tie between the companion and active tests is resolved.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum ActiveRule {
    /// Active when `m >= max(0, t) + M/2p`, checked last so it wins ties.
    AtLeast,
    /// Active only when `m > max(0, t) + M/2p`. Agrees with the stripped
    /// predicate at the boundary.
    #[default]
    Strict,
}

/// Best qualifying water mark inside a spawned component, floored at 0.
pub fn natural_peak(b: &ApproxComponentState, q: &ThresholdQuery) -> i64 {
    b.maxrobust.max(b.gated_chain(q)).or_zero()
}

pub fn classify_b_component(m: i64, t: i64, q: &ThresholdQuery, rule: ActiveRule) -> BClass {
    let active = match rule {
        ActiveRule::AtLeast => q.reaches_gate_over(m, t.max(0)),
        ActiveRule::Strict => !q.within_gate_of(m, t.max(0)),
    };
    if active {
        BClass::NaturallyActive(m)
    } else if t > 0 {
        BClass::NaturalCompanion(t)
    } else {
        BClass::NaturallyDormant
    }
}
