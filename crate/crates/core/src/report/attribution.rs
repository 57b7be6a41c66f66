use std::collections::BTreeMap;

use log::warn;

use super::{SourceMap, UNKNOWN_SITE};
use crate::error::{Error, Result};
use crate::exact::{combine_parallel, combine_series, CapacityProfile, CellCounter};
use crate::mem::checked_add;
use crate::spdag::{NodeId, SpNode, SpTree};

/// One antichain reaching `H[size]` together with the edges whose totals
/// it counts. Edges are serial leaf indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub size: usize,
    pub water_mark: i64,
    /// The antichain itself; each contributes its edge maximum.
    pub edges: Vec<usize>,
    /// Predecessors and companion members; each contributes its total.
    pub counted: Vec<usize>,
}

/// Buffered profiles of every node of the desugared tree.
struct Traceback {
    tree: SpTree,
    profiles: Vec<CapacityProfile>,
    serial: Vec<usize>,
    leaf_ids: Vec<NodeId>,
}

impl Traceback {
    fn new(tree: &SpTree, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("p must be at least 1".into()));
        }
        let tree = tree.desugar();
        let mut work = CellCounter::default();
        let mut profiles: Vec<CapacityProfile> = Vec::with_capacity(tree.len());
        for node in tree.nodes() {
            let r = match node {
                SpNode::Leaf(s) => CapacityProfile::leaf(p, s.t, s.m),
                SpNode::Series([a, b]) => combine_series(&profiles[*a], &profiles[*b], &mut work)?,
                SpNode::Parallel([a, b]) => combine_parallel(&profiles[*a], &profiles[*b], &mut work)?,
                SpNode::MultiSpawn(_) => unreachable!("desugared"),
            };
            profiles.push(r);
        }
        let leaf_ids = tree.leaves();
        let mut serial = vec![usize::MAX; tree.len()];
        for (i, &id) in leaf_ids.iter().enumerate() {
            serial[id] = i;
        }
        Ok(Self { tree, profiles, serial, leaf_ids })
    }

    fn value(&self, id: NodeId, k: usize) -> Option<i64> {
        self.profiles[id].values().get(k).copied()
    }

    /// Leaves under `id`, all counted with their totals.
    fn all_leaves(&self, id: NodeId, out: &mut Vec<usize>) {
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match self.tree.node(n) {
                SpNode::Leaf(_) => out.push(self.serial[n]),
                other => stack.extend(other.children()),
            }
        }
    }

    /// Realize `R[k]` of the root. Ties go to the left or earlier child.
    fn witness(&self, k: usize) -> Witness {
        let mut edges = Vec::new();
        let mut counted = Vec::new();
        let mut stack = vec![(self.tree.root(), k)];
        while let Some((id, k)) = stack.pop() {
            if k == 0 {
                // A fully executed component, kept only when its total is positive.
                if self.profiles[id].total() > 0 {
                    self.all_leaves(id, &mut counted);
                }
                continue;
            }
            match self.tree.node(id) {
                SpNode::Leaf(_) => edges.push(self.serial[id]),
                SpNode::Series([a, b]) => {
                    let here = self.value(*a, k);
                    let later = self.value(*b, k).map(|v| v + self.profiles[*a].total());
                    if here.is_some() && here >= later {
                        stack.push((*a, k));
                    } else {
                        self.all_leaves(*a, &mut counted);
                        stack.push((*b, k));
                    }
                }
                SpNode::Parallel([a, b]) => {
                    let mut best: Option<(i64, usize)> = None;
                    for j in (0..=k).rev() {
                        if let (Some(x), Some(y)) = (self.value(*a, j), self.value(*b, k - j)) {
                            if best.is_none_or(|(v, _)| x + y > v) {
                                best = Some((x + y, j));
                            }
                        }
                    }
                    let (_, j) = best.expect("feasible split");
                    stack.push((*b, k - j));
                    stack.push((*a, j));
                }
                SpNode::MultiSpawn(_) => unreachable!("desugared"),
            }
        }
        edges.sort_unstable();
        counted.sort_unstable();
        let water_mark = self.value(self.tree.root(), k).expect("feasible size");
        Witness { size: k, water_mark, edges, counted }
    }

    /// Witness for `H[q]`: the smallest size reaching the prefix maximum.
    fn hwm_witness(&self, q: usize) -> Witness {
        let r = self.profiles[self.tree.root()].values();
        let top = q.min(r.len() - 1);
        let best = (1..=top).map(|k| r[k]).max().expect("at least one edge");
        let k = (1..=top).find(|&k| r[k] == best).expect("maximum attained");
        self.witness(k)
    }

    fn leaf(&self, i: usize) -> &crate::spdag::StrandSummary {
        match self.tree.node(self.leaf_ids[i]) {
            SpNode::Leaf(s) => s,
            _ => unreachable!("leaf id"),
        }
    }
}

/// Witnesses for `H[1..=p]`.
pub fn hwm_witnesses(tree: &SpTree, p: usize) -> Result<Vec<Witness>> {
    let tb = Traceback::new(tree, p)?;
    Ok((1..=p).map(|q| tb.hwm_witness(q)).collect())
}

fn credit(into: &mut BTreeMap<String, i64>, from: &BTreeMap<String, i64>) -> Result<i64> {
    let mut sum = 0i64;
    for (loc, &v) in from {
        let slot = into.entry(loc.clone()).or_insert(0);
        *slot = checked_add(*slot, v)?;
        sum = checked_add(sum, v)?;
    }
    Ok(sum)
}

/// Source maps for every processor count up to `p`, one witness each. Edge maxima are split
/// by the sites live at the strand's peak, totals by each site's net
/// bytes; frees are credited to the site they name. Bytes from events
/// without a site land on [`UNKNOWN_SITE`].
pub fn source_maps(tree: &SpTree, p: usize) -> Result<Vec<SourceMap>> {
    let tb = Traceback::new(tree, p)?;
    let has_sites = tb.leaf_ids.iter().any(|&id| match tb.tree.node(id) {
        SpNode::Leaf(s) => s.sites.as_ref().is_some_and(|b| !b.net.is_empty() || !b.at_peak.is_empty()),
        _ => false,
    });
    if !has_sites {
        warn!("trace carries no allocation sites; source maps are empty");
    }
    let mut maps = Vec::with_capacity(p);
    for q in 1..=p {
        let w = tb.hwm_witness(q);
        let mut by_site = BTreeMap::new();
        if has_sites {
            let mut unknown = 0i64;
            let empty = BTreeMap::new();
            for &e in &w.edges {
                let s = tb.leaf(e);
                let sites = s.sites.as_ref().map_or(&empty, |b| &b.at_peak);
                unknown = checked_add(unknown, s.m - credit(&mut by_site, sites)?)?;
            }
            for &e in &w.counted {
                let s = tb.leaf(e);
                let sites = s.sites.as_ref().map_or(&empty, |b| &b.net);
                unknown = checked_add(unknown, s.t - credit(&mut by_site, sites)?)?;
            }
            if unknown != 0 {
                by_site.insert(UNKNOWN_SITE.to_owned(), unknown);
            }
        }
        maps.push(SourceMap::from_sites(q, w.water_mark, by_site));
    }
    Ok(maps)
}
