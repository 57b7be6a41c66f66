use std::fmt;

use super::{TraceEvent, TraceEventSeq};

/// A structural or accounting violation, positioned by 0-based event index.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Diagnostic {
    Empty,
    MissingBegin,
    MissingEnd,
    OutsideFrame { index: usize },
    NestedBegin { index: usize },
    SpawnEndWithoutSpawn { index: usize },
    UnclosedSpawn { index: usize, open: usize },
    SizeOutOfRange { index: usize },
    NegativePrefix { index: usize },
    PrefixOverflow { index: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Empty => f.write_str("trace must contain Begin/End"),
            Diagnostic::MissingBegin => f.write_str("first event must be Begin"),
            Diagnostic::MissingEnd => f.write_str("trace does not end with End"),
            Diagnostic::OutsideFrame { index } => {
                write!(f, "event {index} lies outside Begin/End")
            }
            Diagnostic::NestedBegin { index } => write!(f, "nested Begin at event {index}"),
            Diagnostic::SpawnEndWithoutSpawn { index } => {
                write!(f, "SpawnEnd without Spawn at event {index}")
            }
            Diagnostic::UnclosedSpawn { index, open } => {
                write!(f, "End at event {index} with {open} unclosed Spawn(s)")
            }
            Diagnostic::SizeOutOfRange { index } => {
                write!(f, "size at event {index} exceeds the signed 64-bit range")
            }
            Diagnostic::NegativePrefix { index } => {
                write!(f, "serial prefix-sum negative at event {index}")
            }
            Diagnostic::PrefixOverflow { index } => {
                write!(f, "serial prefix-sum overflows at event {index}")
            }
        }
    }
}

/// Check bracket structure and the serial-prefix non-negativity condition.
///
/// Every serial prefix of the execution is a downset of the computation DAG,
/// so a negative prefix sum proves the trace frees memory it never
/// allocated. The converse does not hold; full downset checking is left to
/// the oracle on small instances.
pub fn validate_trace(trace: &TraceEventSeq) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if trace.events.is_empty() {
        diags.push(Diagnostic::Empty);
        return diags;
    }

    let mut started = false;
    let mut ended = false;
    // Number of open frames, root included.
    let mut depth = 0usize;
    let mut prefix: i64 = 0;
    let mut prefix_negative = false;

    for (index, event) in trace.events.iter().enumerate() {
        if ended {
            diags.push(Diagnostic::OutsideFrame { index });
            continue;
        }
        if !started {
            if *event == TraceEvent::Begin {
                started = true;
                depth = 1;
            } else {
                if index == 0 {
                    diags.push(Diagnostic::MissingBegin);
                }
                diags.push(Diagnostic::OutsideFrame { index });
            }
            continue;
        }
        match event {
            TraceEvent::Begin => diags.push(Diagnostic::NestedBegin { index }),
            TraceEvent::Spawn => depth += 1,
            TraceEvent::SpawnEnd => {
                if depth <= 1 {
                    diags.push(Diagnostic::SpawnEndWithoutSpawn { index });
                } else {
                    depth -= 1;
                }
            }
            TraceEvent::Sync => {}
            TraceEvent::End => {
                if depth > 1 {
                    diags.push(Diagnostic::UnclosedSpawn { index, open: depth - 1 });
                }
                ended = true;
            }
            TraceEvent::Alloc { .. } | TraceEvent::Free { .. } => {
                let Some(delta) = event.delta() else {
                    diags.push(Diagnostic::SizeOutOfRange { index });
                    continue;
                };
                match prefix.checked_add(delta) {
                    Some(v) => prefix = v,
                    None => {
                        diags.push(Diagnostic::PrefixOverflow { index });
                        continue;
                    }
                }
                if prefix < 0 && !prefix_negative {
                    diags.push(Diagnostic::NegativePrefix { index });
                }
                prefix_negative = prefix < 0;
            }
        }
    }

    if !started && !diags.contains(&Diagnostic::MissingBegin) {
        diags.push(Diagnostic::MissingBegin);
    }
    if started && !ended {
        diags.push(Diagnostic::MissingEnd);
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::gen_memory_explosion;
    use TraceEvent::*;

    fn check(events: Vec<TraceEvent>) -> Vec<String> {
        validate_trace(&events.into()).iter().map(ToString::to_string).collect()
    }

    #[test]
    fn memory_explosion_is_clean() {
        assert!(validate_trace(&gen_memory_explosion(4).unwrap()).is_empty());
    }

    #[test]
    fn spawn_end_without_spawn() {
        let d = check(vec![Begin, SpawnEnd, End]);
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("SpawnEnd without Spawn"), "{d:?}");
    }

    #[test]
    fn negative_prefix() {
        let d = check(vec![Begin, TraceEvent::free(5), End]);
        assert_eq!(d, vec!["serial prefix-sum negative at event 1"]);
    }

    #[test]
    fn empty_and_unbracketed() {
        assert_eq!(check(vec![]), vec!["trace must contain Begin/End"]);
        let d = validate_trace(&vec![TraceEvent::alloc(1), Begin, End].into());
        assert!(d.contains(&Diagnostic::MissingBegin));
        assert!(d.contains(&Diagnostic::OutsideFrame { index: 0 }));
        let d = validate_trace(&vec![Begin, End, Sync].into());
        assert_eq!(d, vec![Diagnostic::OutsideFrame { index: 2 }]);
        let d = validate_trace(&vec![Begin, Spawn, End].into());
        assert_eq!(d, vec![Diagnostic::UnclosedSpawn { index: 2, open: 1 }]);
        let d = validate_trace(&vec![Begin, Spawn].into());
        assert_eq!(d, vec![Diagnostic::MissingEnd]);
    }

    #[test]
    fn sync_without_children_is_legal() {
        assert!(check(vec![Begin, Sync, Sync, End]).is_empty());
    }

    #[test]
    fn oversized_alloc() {
        let d = validate_trace(&vec![Begin, TraceEvent::alloc(u64::MAX), End].into());
        assert_eq!(d, vec![Diagnostic::SizeOutOfRange { index: 1 }]);
    }
}
