//! JSON Lines trace format.
//!
//! One object per line: `{"k":"begin"}`, `{"k":"end"}`, `{"k":"spawn"}`,
//! `{"k":"spawn_end"}`, `{"k":"sync"}`, `{"k":"alloc","size":N,"loc":"f:l"}`,
//! `{"k":"free","size":N,"loc":"f:l"}`. `loc` is optional. The first line
//! may instead be a metadata record `{"meta":{"name":...,"seed":...}}`.

use std::io::{BufRead, Write};

use serde_json::{Map, Value};

use super::{validate_trace, TraceEvent, TraceEventSeq, TraceMeta};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Reject unknown keys instead of warning about them.
    pub strict: bool,
}

#[derive(Debug)]
pub struct Parsed {
    pub trace: TraceEventSeq,
    pub warnings: Vec<String>,
}

/// Parse a whole trace, ignoring unknown keys (each one is logged).
pub fn parse_trace<R: BufRead>(input: R) -> Result<TraceEventSeq> {
    let parsed = parse_trace_with(input, ParseOptions::default())?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed.trace)
}

pub fn parse_trace_with<R: BufRead>(input: R, opts: ParseOptions) -> Result<Parsed> {
    let mut reader = EventReader::new(input, opts);
    let mut events = Vec::new();
    for event in reader.by_ref() {
        events.push(event?);
    }
    Ok(Parsed {
        trace: TraceEventSeq { events, meta: reader.meta.clone() },
        warnings: std::mem::take(&mut reader.warnings),
    })
}

/// Streaming line-by-line event decoder.
pub struct EventReader<R> {
    input: R,
    opts: ParseOptions,
    line_no: usize,
    buf: String,
    meta: TraceMeta,
    warnings: Vec<String>,
    failed: bool,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(input: R, opts: ParseOptions) -> Self {
        Self {
            input,
            opts,
            line_no: 0,
            buf: String::new(),
            meta: TraceMeta::default(),
            warnings: Vec::new(),
            failed: false,
        }
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line_no, message: message.into() }
    }

    fn unknown_key(&mut self, key: &str) -> Result<()> {
        if self.opts.strict {
            return Err(self.err(format!("unknown key \"{key}\"")));
        }
        self.warnings.push(format!("line {}: ignoring unknown key \"{key}\"", self.line_no));
        Ok(())
    }

    fn parse_meta(&mut self, value: &Value) -> Result<()> {
        let Value::Object(fields) = value else {
            return Err(self.err("meta must be an object"));
        };
        for (key, v) in fields {
            match key.as_str() {
                "name" => {
                    let name = v.as_str().ok_or_else(|| self.err("meta name must be a string"))?;
                    self.meta.name = Some(name.to_owned());
                }
                "seed" => {
                    let seed = v.as_u64().ok_or_else(|| self.err("meta seed must be an unsigned integer"))?;
                    self.meta.seed = Some(seed);
                }
                other => self.unknown_key(&format!("meta.{other}"))?,
            }
        }
        Ok(())
    }

    fn decode(&mut self, obj: Map<String, Value>) -> Result<TraceEvent> {
        let kind = match obj.get("k") {
            Some(Value::String(k)) => k.clone(),
            Some(_) => return Err(self.err("\"k\" must be a string")),
            None => return Err(self.err("missing \"k\"")),
        };
        let memory = matches!(kind.as_str(), "alloc" | "free");
        let mut size = None;
        let mut loc = None;
        for (key, v) in &obj {
            match key.as_str() {
                "k" => {}
                "size" if memory => size = Some(self.decode_size(v)?),
                "loc" if memory => match v {
                    Value::String(s) => loc = Some(s.clone()),
                    _ => return Err(self.err("loc must be a string")),
                },
                "size" | "loc" => {
                    return Err(self.err(format!("{kind} carries no {key}")));
                }
                other => self.unknown_key(other)?,
            }
        }
        let event = match kind.as_str() {
            "begin" => TraceEvent::Begin,
            "end" => TraceEvent::End,
            "spawn" => TraceEvent::Spawn,
            "spawn_end" => TraceEvent::SpawnEnd,
            "sync" => TraceEvent::Sync,
            "alloc" => TraceEvent::Alloc {
                size: size.ok_or_else(|| self.err("alloc missing size"))?,
                loc,
            },
            "free" => TraceEvent::Free {
                size: size.ok_or_else(|| self.err("free missing size"))?,
                loc,
            },
            other => return Err(self.err(format!("unknown kind \"{other}\""))),
        };
        Ok(event)
    }

    fn decode_size(&self, v: &Value) -> Result<u64> {
        match v {
            Value::Number(n) => {
                if let Some(s) = n.as_u64() {
                    Ok(s)
                } else if n.as_i64().is_some_and(|s| s < 0) || n.as_f64().is_some_and(|s| s < 0.0) {
                    Err(self.err("negative size"))
                } else {
                    Err(self.err("size must be an unsigned integer"))
                }
            }
            _ => Err(self.err("size must be an unsigned integer")),
        }
    }

    fn next_event(&mut self) -> Option<Result<TraceEvent>> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let value: Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(e) => return Some(Err(self.err(format!("malformed JSON: {e}")))),
            };
            let Value::Object(obj) = value else {
                return Some(Err(self.err("expected a JSON object")));
            };
            if !obj.contains_key("k") && obj.contains_key("meta") {
                if self.line_no != 1 {
                    return Some(Err(self.err("metadata record allowed only on the first line")));
                }
                if let Err(e) = self.parse_meta(&obj["meta"]) {
                    return Some(Err(e));
                }
                for key in obj.keys().filter(|k| *k != "meta").cloned().collect::<Vec<_>>() {
                    if let Err(e) = self.unknown_key(&key) {
                        return Some(Err(e));
                    }
                }
                continue;
            }
            return Some(self.decode(obj));
        }
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<TraceEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_event();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

fn encode(event: &TraceEvent) -> String {
    let kind = event.kind();
    match event {
        TraceEvent::Alloc { size, loc } | TraceEvent::Free { size, loc } => match loc {
            Some(loc) => {
                let loc = Value::String(loc.clone());
                format!("{{\"k\":\"{kind}\",\"size\":{size},\"loc\":{loc}}}")
            }
            None => format!("{{\"k\":\"{kind}\",\"size\":{size}}}"),
        },
        _ => format!("{{\"k\":\"{kind}\"}}"),
    }
}

/// Write a validated trace as JSON Lines.
pub fn write_trace<W: Write>(trace: &TraceEventSeq, mut out: W) -> Result<()> {
    let diags = validate_trace(trace);
    if !diags.is_empty() {
        return Err(Error::InvalidTrace(diags));
    }
    if !trace.meta.is_empty() {
        let mut meta = Map::new();
        if let Some(name) = &trace.meta.name {
            meta.insert("name".into(), Value::String(name.clone()));
        }
        if let Some(seed) = trace.meta.seed {
            meta.insert("seed".into(), Value::from(seed));
        }
        let mut record = Map::new();
        record.insert("meta".into(), Value::Object(meta));
        writeln!(out, "{}", Value::Object(record))?;
    }
    for event in &trace.events {
        writeln!(out, "{}", encode(event))?;
    }
    out.flush()?;
    Ok(())
}
