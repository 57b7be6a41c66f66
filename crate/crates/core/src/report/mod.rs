//! Human and machine readable reports: high-water mark tables, per-site
//! source maps and differential reports between processor counts.

mod attribution;

pub use attribution::{hwm_witnesses, source_maps, Witness};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Site that collects bytes from events recorded without a location.
pub const UNKNOWN_SITE: &str = "(unknown)";

/// Bytes per unit in differential reports.
pub const MIB: f64 = 1024.0 * 1024.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLine {
    pub loc: String,
    pub bytes: i64,
}

/// Per-site breakdown of one witness reaching `H[p]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMap {
    pub p: usize,
    pub total: i64,
    /// Descending by bytes, then by site; zero rows are left out.
    pub lines: Vec<SourceLine>,
}

fn sorted_lines(by_site: BTreeMap<String, i64>) -> Vec<SourceLine> {
    let mut lines: Vec<_> =
        by_site.into_iter().filter(|&(_, b)| b != 0).map(|(loc, bytes)| SourceLine { loc, bytes }).collect();
    lines.sort_by(|a, b| b.bytes.cmp(&a.bytes).then_with(|| a.loc.cmp(&b.loc)));
    lines
}

impl SourceMap {
    pub fn from_sites(p: usize, total: i64, by_site: BTreeMap<String, i64>) -> Self {
        Self { p, total, lines: sorted_lines(by_site) }
    }

    /// Sum over all rows; equals `total` whenever the trace names sites.
    pub fn attributed(&self) -> i64 {
        self.lines.iter().map(|l| l.bytes).sum()
    }

    fn get(&self, loc: &str) -> i64 {
        self.lines.iter().find(|l| l.loc == loc).map_or(0, |l| l.bytes)
    }
}

/// Site-by-site change of the source map between two processor counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub p_from: usize,
    pub p_to: usize,
    pub total_from: i64,
    pub total_to: i64,
    /// Descending by delta; unchanged sites are left out.
    pub deltas: Vec<SourceLine>,
}

impl DiffReport {
    pub fn net(&self) -> i64 {
        self.deltas.iter().map(|l| l.bytes).sum()
    }
}

pub fn diff_report(from: &SourceMap, to: &SourceMap) -> DiffReport {
    let mut by_site: BTreeMap<String, i64> = BTreeMap::new();
    for l in &to.lines {
        by_site.insert(l.loc.clone(), l.bytes - from.get(&l.loc));
    }
    for l in &from.lines {
        by_site.entry(l.loc.clone()).or_insert(-l.bytes);
    }
    DiffReport {
        p_from: from.p,
        p_to: to.p,
        total_from: from.total,
        total_to: to.total,
        deltas: sorted_lines(by_site),
    }
}

/// `H[q]` table on one line: `H[1]=3 H[2]=3`.
pub fn render_hwm_table(hwm: &[i64]) -> String {
    let cells: Vec<String> = hwm.iter().enumerate().map(|(i, h)| format!("H[{}]={}", i + 1, h)).collect();
    cells.join(" ")
}

/// Verbose listing, one block per processor count.
pub fn render_source_maps(maps: &[SourceMap]) -> String {
    let mut out = String::new();
    for m in maps {
        let _ = writeln!(out, "Memory high-water mark for p = {} : {} bytes", m.p, m.total);
        let _ = writeln!(out, "Source map for p = {}:", m.p);
        for l in &m.lines {
            let _ = writeln!(out, "  [{}]: {} bytes", l.loc, l.bytes);
        }
    }
    out
}

/// Differential listing in MiB with two decimals.
pub fn render_diff(d: &DiffReport) -> String {
    let mut out = format!("Differential MHWM for p = {} -> p = {}\n", d.p_from, d.p_to);
    for l in &d.deltas {
        let _ = writeln!(out, "  [{}]:{:>9.2} MB", l.loc, l.bytes as f64 / MIB);
    }
    out
}

/// Machine readable result of an exact analysis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactReport {
    pub mode: String,
    pub p: usize,
    /// `hwm[q - 1] = H[q]`.
    pub hwm: Vec<i64>,
    pub strands: usize,
    pub events: usize,
    pub max_depth: usize,
    pub work_cells: u64,
    pub peak_cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_maps: Option<Vec<SourceMap>>,
}

/// Machine readable result of a threshold test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub mode: String,
    pub p: u64,
    pub threshold: u64,
    /// 1: `H_p > M/2` is guaranteed; 0: `H_p <= M` is guaranteed.
    pub answer: u8,
    pub h: i64,
    /// `h - M/2`; positive exactly when the answer is 1.
    pub margin: f64,
    pub strands: usize,
    pub events: usize,
    pub max_depth: usize,
    pub ops: u64,
    pub peak_cells: usize,
}

impl ApproxReport {
    pub fn render_text(&self) -> String {
        format!(
            "answer={} h={} margin={} (M={} p={})",
            self.answer, self.h, self.margin, self.threshold, self.p
        )
    }
}
