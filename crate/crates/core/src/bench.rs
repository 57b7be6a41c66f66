//! Work and space counters of the streaming analyses across processor
//! counts.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::approx::approx_online;
use crate::error::{Error, Result};
use crate::exact::exact_online;
use crate::mem::ThresholdQuery;
use crate::trace::TraceEventSeq;

/// Largest accepted `cells / (strands * p)` for the exact analysis.
pub const EXACT_WORK_CONSTANT: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub p: usize,
    pub exact_cells: u64,
    pub exact_peak_cells: usize,
    pub exact_secs: f64,
    pub approx_ops: u64,
    pub approx_peak_cells: usize,
    pub approx_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub name: String,
    pub events: usize,
    pub strands: usize,
    pub max_depth: usize,
    pub threshold: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Largest over smallest threshold-test operation count.
    pub fn approx_ratio(&self) -> f64 {
        let ops = self.rows.iter().map(|r| r.approx_ops);
        let (lo, hi) = (ops.clone().min().unwrap_or(0), ops.max().unwrap_or(0));
        if lo == 0 {
            return if hi == 0 { 1.0 } else { f64::INFINITY };
        }
        hi as f64 / lo as f64
    }

    /// `cells / (strands * p)` for one row.
    pub fn exact_constant(&self, row: &BenchRow) -> f64 {
        row.exact_cells as f64 / (self.strands.max(1) * row.p) as f64
    }

    /// Smallest `c` with `cells <= c * strands * p` on every row.
    pub fn fitted_constant(&self) -> f64 {
        self.rows.iter().map(|r| self.exact_constant(r)).fold(0.0, f64::max)
    }

    /// Failed scaling checks, empty when all hold.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.approx_ratio() != 1.0 {
            out.push(format!("threshold-test work varies with p (ratio {:.3})", self.approx_ratio()));
        }
        let c = self.fitted_constant();
        if c > EXACT_WORK_CONSTANT {
            out.push(format!("exact work constant {c:.3} exceeds {EXACT_WORK_CONSTANT}"));
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{}: {} events, {} strands, depth {}, M = {}\n",
            self.name, self.events, self.strands, self.max_depth, self.threshold
        );
        let _ = writeln!(
            out,
            "{:>6} {:>14} {:>10} {:>10} {:>12} {:>10} {:>10} {:>8}",
            "p", "exact cells", "peak", "secs", "approx ops", "peak", "secs", "c"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>6} {:>14} {:>10} {:>10.4} {:>12} {:>10} {:>10.4} {:>8.3}",
                r.p,
                r.exact_cells,
                r.exact_peak_cells,
                r.exact_secs,
                r.approx_ops,
                r.approx_peak_cells,
                r.approx_secs,
                self.exact_constant(r)
            );
        }
        let _ = writeln!(out, "approx ratio {:.2}, fitted c {:.3}", self.approx_ratio(), self.fitted_constant());
        out
    }
}

/// Run both streaming analyses once per `p`.
pub fn bench_trace(trace: &TraceEventSeq, name: &str, ps: &[usize], threshold: u64) -> Result<BenchReport> {
    if ps.is_empty() {
        return Err(Error::InvalidArgument("need at least one processor count".into()));
    }
    let mut rows = Vec::with_capacity(ps.len());
    let mut fold = None;
    for &p in ps {
        let start = Instant::now();
        let exact = exact_online(trace, p)?;
        let exact_secs = start.elapsed().as_secs_f64();
        let q = ThresholdQuery::new(threshold, p as u64)?;
        let start = Instant::now();
        let approx = approx_online(trace, &q)?;
        let approx_secs = start.elapsed().as_secs_f64();
        fold = Some(exact.fold);
        rows.push(BenchRow {
            p,
            exact_cells: exact.result.work.cells,
            exact_peak_cells: exact.stream.peak_cells,
            exact_secs,
            approx_ops: approx.outcome.ops,
            approx_peak_cells: approx.stream.peak_cells,
            approx_secs,
        });
    }
    let fold = fold.expect("nonempty");
    Ok(BenchReport {
        name: name.to_owned(),
        events: fold.events,
        strands: fold.strands,
        max_depth: fold.max_depth,
        threshold,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{gen_memory_explosion, RandomSpConfig};

    #[test]
    fn memory_explosion_scaling() {
        let t = gen_memory_explosion(2000).unwrap();
        let r = bench_trace(&t, "me", &[32, 4096], 1000).unwrap();
        assert_eq!(r.approx_ratio(), 1.0);
        assert!(r.failures().is_empty(), "{:?}", r.failures());
    }

    #[test]
    fn random_trace_constant() {
        let t = RandomSpConfig::new(7, 8, 4, 64).with_max_strands(3000).generate();
        let r = bench_trace(&t, "random", &[32, 64, 128], 500).unwrap();
        assert!(r.failures().is_empty(), "{}", r.render());
        let c32 = r.exact_constant(&r.rows[0]);
        assert!(r.rows.iter().all(|row| r.exact_constant(row) <= c32 + 1e-9), "{}", r.render());
    }

    #[test]
    fn table_is_aligned() {
        let t = gen_memory_explosion(5).unwrap();
        let text = bench_trace(&t, "me", &[1, 2], 3).unwrap().render();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[1].len(), lines[2].len());
        assert_eq!(lines[2].len(), lines[3].len());
    }
}
