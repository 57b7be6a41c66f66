//! Randomized campaign that cross-checks the analyses against the
//! brute-force oracle and shrinks any counterexample it finds.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::approx::{approx_offline, approx_online};
use crate::error::{Error, Result};
use crate::exact::{combine_parallel, combine_series, exact_grouped, exact_offline, exact_online, CapacityProfile, CellCounter};
use crate::mem::ThresholdQuery;
use crate::oracle::{Flavor, Oracle, DEFAULT_CAP};
use crate::spdag::{build_spdag, NodeView, SpTree};
use crate::trace::{validate_trace, write_trace, RandomSpConfig, SpawnShape, TraceEvent, TraceEventSeq};

/// Deliberate defect injected into the exact analysis, to show that the
/// campaign catches it.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Series combination forgets the total of its first part.
    DropSeriesTotal,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, PartialOrd, Ord)]
pub enum Check {
    /// Offline, grouped and streamed exact results equal the oracle.
    ExactAgreement,
    /// Answer 0 implies `H_p <= M`; answer 1 implies `H_p > M/2`.
    ThresholdContract,
    /// Offline threshold test reports the robust oracle's value.
    RobustOracle,
    /// Streamed threshold test never reports less than the stripped oracle.
    StrippedBound,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::ExactAgreement => "exact-agreement",
            Check::ThresholdContract => "threshold-contract",
            Check::RobustOracle => "robust-oracle",
            Check::StrippedBound => "stripped-bound",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    pub seed: u64,
    pub traces: usize,
    pub max_strands: usize,
    pub max_p: usize,
    /// Evenly spaced thresholds per `(trace, p)` over `0..=2 H_inf`, on top of
    /// the boundary values around `H_p` and `2 H_p`.
    pub thresholds: usize,
    pub mutation: Mutation,
    /// Shrink counterexamples before reporting them.
    pub shrink: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self { seed: 0, traces: 1000, max_strands: 16, max_p: 4, thresholds: 6, mutation: Mutation::None, shrink: true }
    }
}

#[derive(Clone, Debug)]
pub struct Violation {
    pub seed: u64,
    pub check: Check,
    pub detail: String,
    /// Smallest failing trace found.
    pub trace: TraceEventSeq,
}

#[derive(Clone, Debug, Default)]
pub struct CampaignReport {
    pub traces: usize,
    pub checks: u64,
    pub violations: Vec<Violation>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        format!("{} traces, {} checks, {} violations", self.traces, self.checks, self.violations.len())
    }

    /// Write each counterexample as a replayable trace file.
    pub fn write_counterexamples(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for v in &self.violations {
            let path = dir.join(format!("counterexample-{}-{}.jsonl", v.check, v.seed));
            write_trace(&v.trace, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Trace `i` of the campaign corpus.
pub fn corpus_trace(seed: u64, max_strands: usize) -> TraceEventSeq {
    let shape = [SpawnShape::Flat, SpawnShape::Balanced, SpawnShape::Mixed][(seed % 3) as usize];
    RandomSpConfig::new(seed, 5, 4, 64).with_max_strands(max_strands).with_shape(shape).generate()
}

fn mutated_offline(tree: &SpTree, p: usize) -> Result<Vec<i64>> {
    let mut work = CellCounter::default();
    let desugared = tree.desugar();
    let r = desugared.fold(|_, v| match v {
        NodeView::Leaf(s) => Ok(CapacityProfile::leaf(p, s.t, s.m)),
        NodeView::Series(a, b) => {
            let mut r = a.values().to_vec();
            r[0] = 0;
            let forgetful = CapacityProfile::from_values(p, 0, r)?;
            combine_series(&forgetful, &b, &mut work)
        }
        NodeView::Parallel(a, b) => combine_parallel(&a, &b, &mut work),
        NodeView::MultiSpawn(_) => unreachable!("desugared"),
    })?;
    Ok(r.hwm())
}

/// Threshold samples for one `(trace, p)`.
fn thresholds(h_p: i64, h_inf: i64, n: usize) -> Vec<u64> {
    let top = 2 * h_inf.max(1) as u64;
    let mut out: Vec<u64> = (0..n).map(|j| top * j as u64 / (n.max(2) - 1) as u64).collect();
    for v in [h_p - 1, h_p, 2 * h_p - 1, 2 * h_p] {
        if v >= 0 {
            out.push(v as u64);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Run every check on one trace; `only` restricts to a single check.
fn check_trace(trace: &TraceEventSeq, cfg: &CampaignConfig, only: Option<Check>, count: &mut u64) -> Result<Vec<(Check, String)>> {
    let wants = |c: Check| only.is_none_or(|o| o == c);
    let tree = build_spdag(trace)?;
    let oracle = Oracle::new(&tree)?;
    let p_max = cfg.max_p;
    let brute = oracle.hwm(p_max)?;
    let mut found = Vec::new();

    if wants(Check::ExactAgreement) {
        *count += 1;
        let offline = match cfg.mutation {
            Mutation::None => exact_offline(&tree, p_max)?.hwm,
            Mutation::DropSeriesTotal => mutated_offline(&tree, p_max)?,
        };
        let grouped = exact_grouped(&tree, p_max)?.hwm;
        let online = exact_online(trace, p_max)?.result.hwm;
        if offline != brute || grouped != brute || online != brute {
            found.push((
                Check::ExactAgreement,
                format!("oracle {brute:?}, offline {offline:?}, grouped {grouped:?}, online {online:?}"),
            ));
        }
    }

    let approx_checks = [Check::ThresholdContract, Check::RobustOracle, Check::StrippedBound];
    if !approx_checks.iter().any(|&c| wants(c)) {
        return Ok(found);
    }
    let h_inf = *oracle.hwm(oracle.leaf_count())?.last().expect("p >= 1");
    'outer: for p in 1..=p_max {
        let h_p = brute[p - 1];
        for m in thresholds(h_p, h_inf, cfg.thresholds) {
            let q = ThresholdQuery::new(m, p as u64)?;
            let off = approx_offline(&tree, &q)?;
            let on = approx_online(trace, &q)?.outcome;
            if wants(Check::ThresholdContract) {
                *count += 2;
                for (name, ans) in [("offline", off.answer), ("online", on.answer)] {
                    let ok = if ans { 2 * h_p as i128 > m as i128 } else { h_p as i128 <= m as i128 };
                    if !ok {
                        found.push((Check::ThresholdContract, format!("{name} answered {} with H_{p} = {h_p}, M = {m}", ans as u8)));
                        break 'outer;
                    }
                }
            }
            if wants(Check::RobustOracle) {
                *count += 1;
                let want = oracle.robust_hwm(&q, Flavor::Robust, None)?;
                if off.h != want {
                    found.push((Check::RobustOracle, format!("offline h {} vs oracle {want} at M = {m}, p = {p}", off.h)));
                    break 'outer;
                }
            }
            if wants(Check::StrippedBound) {
                *count += 1;
                let want = oracle.robust_hwm(&q, Flavor::Stripped, None)?;
                if on.h < want {
                    found.push((Check::StrippedBound, format!("online h {} below oracle {want} at M = {m}, p = {p}", on.h)));
                    break 'outer;
                }
            }
        }
    }
    Ok(found)
}

/// Events `i..=j` form one removable unit: a single non-bracket event, or
/// a whole spawned child.
fn removable_units(events: &[TraceEvent]) -> Vec<(usize, usize)> {
    let mut units = Vec::new();
    let mut open = Vec::new();
    for (i, e) in events.iter().enumerate() {
        match e {
            TraceEvent::Begin | TraceEvent::End => {}
            TraceEvent::Spawn => open.push(i),
            TraceEvent::SpawnEnd => {
                if let Some(s) = open.pop() {
                    units.push((s, i));
                }
            }
            _ => units.push((i, i)),
        }
    }
    // Larger cuts first.
    units.sort_by_key(|&(i, j)| std::cmp::Reverse(j - i));
    units
}

/// Greedily delete events while `fails` keeps holding and the trace stays
/// valid.
pub fn shrink(trace: &TraceEventSeq, mut fails: impl FnMut(&TraceEventSeq) -> bool) -> TraceEventSeq {
    let mut best = trace.clone();
    loop {
        let mut progressed = false;
        for (i, j) in removable_units(&best.events) {
            let mut events = best.events.clone();
            events.drain(i..=j);
            let candidate = TraceEventSeq { events, meta: best.meta.clone() };
            if validate_trace(&candidate).is_empty() && fails(&candidate) {
                best = candidate;
                progressed = true;
                break;
            }
        }
        if !progressed {
            return best;
        }
    }
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport> {
    if cfg.max_strands > DEFAULT_CAP {
        return Err(Error::InvalidArgument(format!(
            "max strands {} exceeds the oracle cap of {DEFAULT_CAP}",
            cfg.max_strands
        )));
    }
    if cfg.max_p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    let mut report = CampaignReport { traces: cfg.traces, ..Default::default() };
    for i in 0..cfg.traces {
        let seed = cfg.seed.wrapping_add(i as u64);
        let trace = corpus_trace(seed, cfg.max_strands);
        for (check, detail) in check_trace(&trace, cfg, None, &mut report.checks)? {
            let trace = if cfg.shrink {
                let mut scratch = 0;
                shrink(&trace, |t| check_trace(t, cfg, Some(check), &mut scratch).is_ok_and(|v| !v.is_empty()))
            } else {
                trace.clone()
            };
            let detail = match check_trace(&trace, cfg, Some(check), &mut 0)?.pop() {
                Some((_, d)) => d,
                None => detail,
            };
            log::info!("seed {seed}: {check}: {detail}");
            report.violations.push(Violation { seed, check, detail, trace });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(traces: usize, mutation: Mutation) -> CampaignConfig {
        CampaignConfig { traces, max_strands: 10, max_p: 3, thresholds: 4, mutation, ..Default::default() }
    }

    #[test]
    fn clean_corpus_passes() {
        let r = run_campaign(&small(40, Mutation::None)).unwrap();
        assert!(r.passed(), "{:?}", r.violations);
        assert!(r.checks > 40);
    }

    #[test]
    fn injected_mutation_is_caught_and_shrunk() {
        let r = run_campaign(&small(40, Mutation::DropSeriesTotal)).unwrap();
        assert!(!r.passed());
        let v = &r.violations[0];
        assert_eq!(v.check, Check::ExactAgreement);
        let original = corpus_trace(v.seed, 10);
        assert!(v.trace.len() <= original.len());
        // The shrunk trace is locally minimal: removing any further unit fixes it.
        for (i, j) in removable_units(&v.trace.events) {
            let mut events = v.trace.events.clone();
            events.drain(i..=j);
            let t = TraceEventSeq::new(events);
            if validate_trace(&t).is_empty() {
                assert!(check_trace(&t, &small(1, Mutation::DropSeriesTotal), Some(Check::ExactAgreement), &mut 0)
                    .unwrap()
                    .is_empty());
            }
        }
    }

    #[test]
    fn counterexamples_are_replayable() {
        let r = run_campaign(&small(10, Mutation::DropSeriesTotal)).unwrap();
        let dir = std::env::temp_dir().join(format!("spmem-verify-{}", std::process::id()));
        let paths = r.write_counterexamples(&dir).unwrap();
        assert_eq!(paths.len(), r.violations.len());
        let back = crate::trace::parse_trace(std::io::BufReader::new(std::fs::File::open(&paths[0]).unwrap())).unwrap();
        assert_eq!(back.events, r.violations[0].trace.events);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn cap_is_enforced() {
        let cfg = CampaignConfig { max_strands: 30, ..Default::default() };
        assert!(matches!(run_campaign(&cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn threshold_samples_cover_boundaries() {
        let t = thresholds(5, 9, 4);
        assert_eq!(t, [0, 4, 5, 6, 9, 10, 12, 18]);
    }
}
