//! Serial fork-join execution traces with memory events.
//!
//! A trace is the event stream of a one-worker, child-first execution:
//! `Begin`, then a mix of structural events (`Spawn`, `SpawnEnd`, `Sync`)
//! and memory events (`Alloc`, `Free`), then `End`.

mod format;
mod generate;
mod validate;

pub use format::{parse_trace, parse_trace_with, write_trace, EventReader, ParseOptions, Parsed};
pub use generate::{gen_memory_explosion, gen_random_sp, RandomSpConfig, SpawnShape, MEMORY_EXPLOSION_LOC};
pub use validate::{validate_trace, Diagnostic};

use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum TraceEvent {
    Begin,
    End,
    Spawn,
    SpawnEnd,
    Sync,
    Alloc { size: u64, loc: Option<String> },
    /// `loc` names the allocation site of the block being released.
    Free { size: u64, loc: Option<String> },
}

impl TraceEvent {
    pub fn alloc(size: u64) -> Self {
        TraceEvent::Alloc { size, loc: None }
    }

    pub fn free(size: u64) -> Self {
        TraceEvent::Free { size, loc: None }
    }

    pub fn alloc_at(size: u64, loc: impl Into<String>) -> Self {
        TraceEvent::Alloc { size, loc: Some(loc.into()) }
    }

    pub fn free_at(size: u64, loc: impl Into<String>) -> Self {
        TraceEvent::Free { size, loc: Some(loc.into()) }
    }

    /// Wire name of the event kind.
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Begin => "begin",
            TraceEvent::End => "end",
            TraceEvent::Spawn => "spawn",
            TraceEvent::SpawnEnd => "spawn_end",
            TraceEvent::Sync => "sync",
            TraceEvent::Alloc { .. } => "alloc",
            TraceEvent::Free { .. } => "free",
        }
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, TraceEvent::Alloc { .. } | TraceEvent::Free { .. })
    }

    /// Signed byte delta of a memory event, `None` for structural events or
    /// sizes that do not fit in `i64`.
    pub fn delta(&self) -> Option<i64> {
        match self {
            TraceEvent::Alloc { size, .. } => i64::try_from(*size).ok(),
            TraceEvent::Free { size, .. } => i64::try_from(*size).ok().map(|s| -s),
            _ => None,
        }
    }

    pub fn loc(&self) -> Option<&str> {
        match self {
            TraceEvent::Alloc { loc, .. } | TraceEvent::Free { loc, .. } => loc.as_deref(),
            _ => None,
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Begin => f.write_str("Begin"),
            TraceEvent::End => f.write_str("End"),
            TraceEvent::Spawn => f.write_str("Spawn"),
            TraceEvent::SpawnEnd => f.write_str("SpawnEnd"),
            TraceEvent::Sync => f.write_str("Sync"),
            TraceEvent::Alloc { size, .. } => write!(f, "Alloc {size}"),
            TraceEvent::Free { size, .. } => write!(f, "Free {size}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct TraceMeta {
    pub name: Option<String>,
    pub seed: Option<u64>,
}

impl TraceMeta {
    pub fn is_empty(&self) -> bool {
        self.name.is_none() && self.seed.is_none()
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct TraceEventSeq {
    pub events: Vec<TraceEvent>,
    pub meta: TraceMeta,
}

impl TraceEventSeq {
    pub fn new(events: Vec<TraceEvent>) -> Self {
        Self { events, meta: TraceMeta::default() }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.meta.name = Some(name.into());
        self
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceEvent> {
        self.events.iter()
    }

    /// Count events of the given wire kind.
    pub fn count_kind(&self, kind: &str) -> usize {
        self.events.iter().filter(|e| e.kind() == kind).count()
    }

    /// Net bytes allocated minus freed over the whole trace.
    pub fn net_bytes(&self) -> i64 {
        self.events.iter().filter_map(TraceEvent::delta).sum()
    }

    /// Maximum spawn nesting depth (the root frame counts as 1).
    pub fn max_depth(&self) -> usize {
        let mut depth = 0usize;
        let mut max = 0;
        for e in &self.events {
            match e {
                TraceEvent::Begin | TraceEvent::Spawn => {
                    depth += 1;
                    max = max.max(depth);
                }
                TraceEvent::End | TraceEvent::SpawnEnd => depth = depth.saturating_sub(1),
                _ => {}
            }
        }
        max
    }
}

impl From<Vec<TraceEvent>> for TraceEventSeq {
    fn from(events: Vec<TraceEvent>) -> Self {
        Self::new(events)
    }
}

impl<'a> IntoIterator for &'a TraceEventSeq {
    type Item = &'a TraceEvent;
    type IntoIter = std::slice::Iter<'a, TraceEvent>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}
