use std::fmt;

use super::StrandSummary;
use crate::error::{Error, Result};

/// Index of a node inside an [`SpTree`] arena.
pub type NodeId = usize;

/// Position of a child inside a multi-spawn group.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Role {
    /// Continuation strand of the spawning frame (`a0`, `a1`, ...).
    A,
    /// Spawned child subcomputation (`b1`, `b2`, ...).
    B,
}

impl Role {
    /// Role of the `i`-th child of a multi-spawn group.
    pub fn of_index(i: usize) -> Role {
        if i.is_multiple_of(2) {
            Role::A
        } else {
            Role::B
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SpNode {
    Leaf(StrandSummary),
    Series([NodeId; 2]),
    Parallel([NodeId; 2]),
    /// Children `[a0, b1, a1, ..., bk, ak]`: each `b_i` runs in parallel with
    /// everything after it up to the closing sync.
    MultiSpawn(Vec<NodeId>),
}

impl SpNode {
    pub fn children(&self) -> &[NodeId] {
        match self {
            SpNode::Leaf(_) => &[],
            SpNode::Series(c) | SpNode::Parallel(c) => c,
            SpNode::MultiSpawn(c) => c,
        }
    }
}

/// A node with its children already evaluated, as seen by [`SpTree::fold`].
pub enum NodeView<'a, T> {
    Leaf(&'a StrandSummary),
    Series(T, T),
    Parallel(T, T),
    MultiSpawn(Vec<T>),
}

/// Arena-backed decomposition tree.
///
/// Children always precede their parent in the arena and the root is the
/// last node, so index order is a valid bottom-up evaluation order. This
/// keeps every traversal iterative regardless of nesting depth.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SpTree {
    nodes: Vec<SpNode>,
}

impl SpTree {
    pub fn leaf(t: i64, m: i64) -> SpTree {
        SpTree { nodes: vec![SpNode::Leaf(StrandSummary::new(t, m))] }
    }

    pub fn from_summary(s: StrandSummary) -> SpTree {
        SpTree { nodes: vec![SpNode::Leaf(s)] }
    }

    pub fn series(first: SpTree, second: SpTree) -> SpTree {
        Self::graft(vec![first, second], |ids| SpNode::Series([ids[0], ids[1]]))
    }

    pub fn parallel(left: SpTree, right: SpTree) -> SpTree {
        Self::graft(vec![left, right], |ids| SpNode::Parallel([ids[0], ids[1]]))
    }

    /// Panics unless `parts` has odd length.
    pub fn multi_spawn(parts: Vec<SpTree>) -> SpTree {
        assert!(parts.len() % 2 == 1, "multi-spawn needs [a0, b1, a1, ..., bk, ak]");
        Self::graft(parts, SpNode::MultiSpawn)
    }

    fn graft(parts: Vec<SpTree>, make: impl FnOnce(Vec<NodeId>) -> SpNode) -> SpTree {
        let mut nodes = Vec::with_capacity(parts.iter().map(|p| p.nodes.len()).sum::<usize>() + 1);
        let mut roots = Vec::with_capacity(parts.len());
        for part in parts {
            let offset = nodes.len();
            nodes.extend(part.nodes.into_iter().map(|n| shift(n, offset)));
            roots.push(nodes.len() - 1);
        }
        nodes.push(make(roots));
        SpTree { nodes }
    }

    pub fn root(&self) -> NodeId {
        self.nodes.len() - 1
    }

    pub fn node(&self, id: NodeId) -> &SpNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[SpNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, SpNode::Leaf(_))).count()
    }

    /// Leaves in serial (left-to-right) order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                SpNode::Leaf(_) => out.push(id),
                n => stack.extend(n.children().iter().rev()),
            }
        }
        out
    }

    pub fn summary(&self, id: NodeId) -> Option<&StrandSummary> {
        match &self.nodes[id] {
            SpNode::Leaf(s) => Some(s),
            _ => None,
        }
    }

    /// Height of the tree in nodes, with a multi-spawn counted as one level.
    pub fn height(&self) -> usize {
        self.fold::<usize, std::convert::Infallible>(|_, v| {
            Ok(match v {
                NodeView::Leaf(_) => 1,
                NodeView::Series(a, b) | NodeView::Parallel(a, b) => 1 + a.max(b),
                NodeView::MultiSpawn(c) => 1 + c.into_iter().max().unwrap_or(0),
            })
        })
        .unwrap_or_else(|e| match e {})
    }

    /// Sum of edge totals over the whole tree.
    pub fn total(&self) -> Result<i64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                SpNode::Leaf(s) => Some(s.t),
                _ => None,
            })
            .try_fold(0i64, crate::mem::checked_add)
    }

    pub fn has_multi_spawn(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n, SpNode::MultiSpawn(_)))
    }

    /// Bottom-up evaluation; each node sees the values of its children.
    pub fn fold<T, E>(&self, mut visit: impl FnMut(NodeId, NodeView<'_, T>) -> Result<T, E>) -> Result<T, E> {
        let mut values: Vec<Option<T>> = Vec::with_capacity(self.nodes.len());
        values.resize_with(self.nodes.len(), || None);
        for (id, node) in self.nodes.iter().enumerate() {
            let mut take = |c: NodeId| values[c].take().expect("child evaluated once");
            let view = match node {
                SpNode::Leaf(s) => NodeView::Leaf(s),
                SpNode::Series([a, b]) => NodeView::Series(take(*a), take(*b)),
                SpNode::Parallel([a, b]) => NodeView::Parallel(take(*a), take(*b)),
                SpNode::MultiSpawn(c) => NodeView::MultiSpawn(c.iter().map(|&c| take(c)).collect()),
            };
            values[id] = Some(visit(id, view)?);
        }
        Ok(values.pop().flatten().expect("root evaluated"))
    }

    /// Rewrite multi-spawn groups into binary nodes, right to left:
    /// `[a0, b1, a1, ..., bk, ak]` becomes
    /// `Series(a0, Parallel(b1, Series(a1, ... Parallel(bk, ak))))`.
    /// Leaves keep their relative order.
    pub fn desugar(&self) -> SpTree {
        let mut out = SpTreeBuilder::default();
        let mut map = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let id = match node {
                SpNode::Leaf(s) => out.leaf(s.clone()),
                SpNode::Series([a, b]) => out.series(map[*a], map[*b]),
                SpNode::Parallel([a, b]) => out.parallel(map[*a], map[*b]),
                SpNode::MultiSpawn(c) => {
                    let mut acc = map[c[c.len() - 1]];
                    for i in (1..c.len()).step_by(2).rev() {
                        acc = out.parallel(map[c[i]], acc);
                        acc = out.series(map[c[i - 1]], acc);
                    }
                    acc
                }
            };
            map.push(id);
        }
        out.nodes.truncate(map[self.root()] + 1);
        SpTree { nodes: out.nodes }
    }
}

fn shift(node: SpNode, by: usize) -> SpNode {
    match node {
        SpNode::Leaf(s) => SpNode::Leaf(s),
        SpNode::Series([a, b]) => SpNode::Series([a + by, b + by]),
        SpNode::Parallel([a, b]) => SpNode::Parallel([a + by, b + by]),
        SpNode::MultiSpawn(c) => SpNode::MultiSpawn(c.into_iter().map(|c| c + by).collect()),
    }
}

/// Incremental arena construction with a structural check at the end.
#[derive(Default, Debug)]
pub struct SpTreeBuilder {
    nodes: Vec<SpNode>,
}

impl SpTreeBuilder {
    pub fn with_capacity(n: usize) -> Self {
        Self { nodes: Vec::with_capacity(n) }
    }

    fn push(&mut self, node: SpNode) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, s: StrandSummary) -> NodeId {
        self.push(SpNode::Leaf(s))
    }

    pub fn series(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(SpNode::Series([a, b]))
    }

    pub fn parallel(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(SpNode::Parallel([a, b]))
    }

    pub fn multi_spawn(&mut self, children: Vec<NodeId>) -> NodeId {
        self.push(SpNode::MultiSpawn(children))
    }

    /// Check that `root` is the last node and every other node is used
    /// exactly once by a later node.
    pub fn finish(self, root: NodeId) -> Result<SpTree> {
        let n = self.nodes.len();
        if n == 0 || root + 1 != n {
            return Err(Error::InvalidArgument("root must be the last node".into()));
        }
        let mut used = vec![false; n];
        for (id, node) in self.nodes.iter().enumerate() {
            if let SpNode::MultiSpawn(c) = node {
                if c.len() % 2 == 0 {
                    return Err(Error::InvalidArgument(format!("multi-spawn {id} has even arity")));
                }
            }
            for &c in node.children() {
                if c >= id || std::mem::replace(&mut used[c], true) {
                    return Err(Error::InvalidArgument(format!("node {c} misplaced or shared")));
                }
            }
        }
        if used[..root].iter().any(|u| !u) {
            return Err(Error::InvalidArgument("unreachable node".into()));
        }
        Ok(SpTree { nodes: self.nodes })
    }
}

impl fmt::Display for SpTree {
    /// Compact prefix notation: `S(..)`, `P(..)`, `M(..)`, leaves as `t/m`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = self
            .fold::<String, std::convert::Infallible>(|_, v| {
                Ok(match v {
                    NodeView::Leaf(s) => format!("{}/{}", s.t, s.m),
                    NodeView::Series(a, b) => format!("S({a}, {b})"),
                    NodeView::Parallel(a, b) => format!("P({a}, {b})"),
                    NodeView::MultiSpawn(c) => format!("M({})", c.join(", ")),
                })
            })
            .unwrap_or_else(|e| match e {});
        f.write_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(t: i64, m: i64) -> SpTree {
        SpTree::leaf(t, m)
    }

    #[test]
    fn desugar_is_right_nested() {
        let ms = SpTree::multi_spawn(vec![l(0, 0), l(1, 1), l(2, 2), l(3, 3), l(4, 4)]);
        let d = ms.desugar();
        assert_eq!(d.to_string(), "S(0/0, P(1/1, S(2/2, P(3/3, 4/4))))");
        assert!(!d.has_multi_spawn());
        assert_eq!(SpTree::multi_spawn(vec![l(7, 7)]).desugar().to_string(), "7/7");
    }

    #[test]
    fn leaves_in_serial_order() {
        let t = SpTree::series(SpTree::parallel(l(1, 1), l(2, 2)), SpTree::multi_spawn(vec![l(3, 3), l(4, 4), l(5, 5)]));
        let ts: Vec<i64> = t.leaves().iter().map(|&id| t.summary(id).unwrap().t).collect();
        assert_eq!(ts, [1, 2, 3, 4, 5]);
        assert_eq!(t.leaf_count(), 5);
        assert_eq!(t.total().unwrap(), 15);
        assert_eq!(t.height(), 3);
    }

    #[test]
    fn builder_rejects_bad_arenas() {
        let mut b = SpTreeBuilder::default();
        let x = b.leaf(StrandSummary::empty());
        b.series(x, x);
        assert!(b.finish(1).is_err());

        let mut b = SpTreeBuilder::default();
        let x = b.leaf(StrandSummary::empty());
        let _y = b.leaf(StrandSummary::empty());
        let z = b.leaf(StrandSummary::empty());
        let r = b.series(x, z);
        assert!(b.finish(r).is_err());

        let mut b = SpTreeBuilder::default();
        let x = b.leaf(StrandSummary::empty());
        let y = b.leaf(StrandSummary::empty());
        let r = b.multi_spawn(vec![x, y]);
        assert!(b.finish(r).is_err());
    }

    #[test]
    fn deep_tree_folds_without_recursion() {
        let mut b = SpTreeBuilder::default();
        let mut acc = b.leaf(StrandSummary::new(1, 1));
        for _ in 0..200_000 {
            let l = b.leaf(StrandSummary::new(1, 1));
            acc = b.series(acc, l);
        }
        let t = b.finish(acc).unwrap();
        assert_eq!(t.total().unwrap(), 200_001);
        assert_eq!(t.height(), 200_001);
        assert_eq!(t.desugar().len(), t.len());
    }
}
