use std::collections::BTreeMap;

use crate::error::Result;
use crate::mem::checked_add;

/// Per-site byte attribution of a strand.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct SiteBreakdown {
    /// Net bytes per site over the whole strand; sums to `t`.
    pub net: BTreeMap<String, i64>,
    /// Net bytes per site over the prefix that first reaches `m`; sums to `m`.
    pub at_peak: BTreeMap<String, i64>,
}

/// Memory summary of one strand (an edge of the computation DAG).
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct StrandSummary {
    /// Edge total: allocated minus freed.
    pub t: i64,
    /// Edge maximum: the largest running total over all prefixes, the empty
    /// prefix included, so `m >= max(0, t)`.
    pub m: i64,
    pub sites: Option<SiteBreakdown>,
}

impl StrandSummary {
    pub fn new(t: i64, m: i64) -> Self {
        debug_assert!(m >= 0 && m >= t, "edge maximum must dominate 0 and the total");
        Self { t, m, sites: None }
    }

    pub fn empty() -> Self {
        Self::default()
    }
}

/// Incremental builder for a [`StrandSummary`].
#[derive(Clone, Debug, Default)]
pub struct StrandAccumulator {
    t: i64,
    m: i64,
    events: usize,
    sites: Option<(BTreeMap<String, i64>, BTreeMap<String, i64>)>,
}

impl StrandAccumulator {
    pub fn new(track_sites: bool) -> Self {
        Self {
            sites: track_sites.then(Default::default),
            ..Default::default()
        }
    }

    pub fn push(&mut self, delta: i64, loc: Option<&str>) -> Result<()> {
        self.t = checked_add(self.t, delta)?;
        self.events += 1;
        if let Some((net, peak)) = &mut self.sites {
            if let Some(loc) = loc {
                let slot = net.entry(loc.to_owned()).or_insert(0);
                *slot = checked_add(*slot, delta)?;
            }
            if self.t > self.m {
                peak.clone_from(net);
            }
        }
        self.m = self.m.max(self.t);
        Ok(())
    }

    /// Number of memory events pushed since the last reset.
    pub fn len(&self) -> usize {
        self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events == 0
    }

    /// Return the summary and reset for the next strand.
    pub fn take(&mut self) -> StrandSummary {
        let sites = self.sites.as_mut().map(|(net, peak)| {
            let mut b = SiteBreakdown { net: std::mem::take(net), at_peak: std::mem::take(peak) };
            b.net.retain(|_, v| *v != 0);
            b.at_peak.retain(|_, v| *v != 0);
            b
        });
        let out = StrandSummary { t: self.t, m: self.m, sites };
        self.t = 0;
        self.m = 0;
        self.events = 0;
        out
    }
}

/// Summarize a strand from its signed alloc (+) / free (−) sizes.
pub fn strand_accumulate<I: IntoIterator<Item = i64>>(deltas: I) -> Result<StrandSummary> {
    let mut acc = StrandAccumulator::new(false);
    for d in deltas {
        acc.push(d, None)?;
    }
    Ok(acc.take())
}
