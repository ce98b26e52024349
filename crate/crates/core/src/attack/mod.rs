//! Oracle-guided key search.
//!
//! Three strategies share one report type:
//!
//! * [`direct_traversal`]: key inputs set straight from I/O, one candidate per cycle.
//! * [`separate_traversal`]: per-module search, legal only when the netlist declares
//!   separately configurable domains with disjoint output cones.
//! * [`iis_traversal`]: keys reachable only as snapshots of the key-generating core
//!   under random instruction streams.
//!
//! Every strategy works on [`LockedNetlist::attacker_view`] of its input, so the
//! correct key is never in reach of the search.

mod iis;
mod oracle;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitVector;
use crate::locking::{Cell, LockError, LockedNetlist};

pub use iis::{
    correct_frequency, curve_selection, fit_log_linear, hitting_time, iis_traversal,
    traversal_curve, CoreModel, CurveConfig, CurveRow, CurveSummary, FrequencyRow, IisConfig,
    KeySource, LogLinearFit, ToyCoreSource, TraversalCurve, UniformSource,
};
pub use oracle::{Distinguisher, Oracle, ProbeSet, EXHAUSTIVE_INPUTS, FIXED_PROBES, RANDOM_PROBES};

/// Widest key that explicit enumeration accepts.
pub const MAX_ENUMERATED_KEY_BITS: usize = 24;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("partition cannot be isolated: {0}")]
    PartitionNotIsolable(String),
    #[error("key of {0} bits is too wide to enumerate (max {MAX_ENUMERATED_KEY_BITS})")]
    KeyTooWide(usize),
    #[error("oracle needs a locked netlist with its correct key")]
    NoOracleKey,
    #[error("oracle has {oracle} inputs/{oracle_out} outputs but the netlist has {locked}/{locked_out}")]
    InterfaceMismatch {
        oracle: usize,
        oracle_out: usize,
        locked: usize,
        locked_out: usize,
    },
    #[error("candidate order entry has width {actual}, expected {expected}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("node selection has {selection} bits but the netlist has {key} key bits")]
    SelectionWidth { selection: usize, key: usize },
    #[error(transparent)]
    Lock(#[from] LockError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// A device ran out of writes; the chip is permanently broken.
    EnduranceExhausted,
    MaxCyclesExceeded,
    /// Every candidate was rejected.
    SpaceExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub strategy: String,
    pub seed: Option<u64>,
    pub key_width: usize,
    /// Non-rCore clock cycles (one per candidate for the direct strategies).
    pub total_cycles: u64,
    /// Completed key-configuration events.
    pub key_attempts: u64,
    /// Writes per rGate, indexed by key bit.
    pub writes_consumed: Vec<u64>,
    pub success: bool,
    pub outcome: Outcome,
    pub recovered_key: Option<BitVector>,
    /// Configuration event that hit the endurance limit.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_at_attempt: Option<u64>,
    pub worst_case_attempts: Option<u64>,
    pub oracle_queries: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_ms: Option<f64>,
}

impl AttackReport {
    fn new(strategy: &str, seed: Option<u64>, key_width: usize) -> Self {
        AttackReport {
            strategy: strategy.to_string(),
            seed,
            key_width,
            total_cycles: 0,
            key_attempts: 0,
            writes_consumed: vec![0; key_width],
            success: false,
            outcome: Outcome::SpaceExhausted,
            recovered_key: None,
            failed_at_attempt: None,
            worst_case_attempts: None,
            oracle_queries: 0,
            wall_time_ms: None,
        }
    }

    fn finish(mut self, device: &LockedNetlist, oracle: &Oracle, queries_before: u64, t0: Instant) -> Self {
        self.writes_consumed = device.write_counts();
        self.oracle_queries = oracle.queries() - queries_before;
        self.wall_time_ms = Some(t0.elapsed().as_secs_f64() * 1e3);
        self.success = self.outcome == Outcome::Success;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Order in which candidate keys (or per-group assignments) are tried.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CandidateOrder {
    /// Seeded uniform permutation.
    Seeded(u64),
    /// Counting order, key bit 0 least significant.
    Ascending,
    /// Listed keys first (projected onto each group), then the rest ascending.
    Explicit(Vec<BitVector>),
}

impl CandidateOrder {
    fn seed(&self) -> Option<u64> {
        match self {
            CandidateOrder::Seeded(s) => Some(*s),
            _ => None,
        }
    }

    /// Assignments to `bits` (a subset of the key), each packed with `bits[j]` at bit j.
    fn sequence(&self, bits: &[usize], key_width: usize, salt: u64) -> Result<Vec<u64>, AttackError> {
        let n = bits.len();
        if n > MAX_ENUMERATED_KEY_BITS {
            return Err(AttackError::KeyTooWide(n));
        }
        let total = 1u64 << n;
        match self {
            CandidateOrder::Ascending => Ok((0..total).collect()),
            CandidateOrder::Seeded(seed) => {
                let mut v: Vec<u64> = (0..total).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                v.shuffle(&mut rng);
                Ok(v)
            }
            CandidateOrder::Explicit(keys) => {
                let mut used = vec![false; total as usize];
                let mut out = Vec::with_capacity(total as usize);
                for key in keys {
                    if key.width() != key_width {
                        return Err(AttackError::WidthMismatch {
                            expected: key_width,
                            actual: key.width(),
                        });
                    }
                    let v = bits
                        .iter()
                        .enumerate()
                        .fold(0u64, |acc, (j, &b)| acc | ((key.get(b) as u64) << j));
                    if !std::mem::replace(&mut used[v as usize], true) {
                        out.push(v);
                    }
                }
                out.extend((0..total).filter(|&v| !used[v as usize]));
                Ok(out)
            }
        }
    }
}

fn check_interface(locked: &LockedNetlist, oracle: &Oracle) -> Result<(), AttackError> {
    if locked.inputs().len() != oracle.input_count() || locked.outputs().len() != oracle.output_count() {
        return Err(AttackError::InterfaceMismatch {
            oracle: oracle.input_count(),
            oracle_out: oracle.output_count(),
            locked: locked.inputs().len(),
            locked_out: locked.outputs().len(),
        });
    }
    Ok(())
}

/// Candidate search over explicit assignments to one group of key bits.
///
/// Returns `Ok(Some(assignment))` on a match, `Ok(None)` if the group was exhausted,
/// `Err(())` when a write failed (report already updated).
fn search_group(
    device: &mut LockedNetlist,
    dist: &Distinguisher,
    bits: &[usize],
    sequence: &[u64],
    report: &mut AttackReport,
) -> Result<Option<u64>, ()> {
    let mut scratch = Vec::new();
    let mut values = vec![false; bits.len()];
    for &cand in sequence {
        for (j, v) in values.iter_mut().enumerate() {
            *v = (cand >> j) & 1 == 1;
        }
        report.total_cycles += 1;
        if device.write_bits(bits, &values).is_err() {
            report.outcome = Outcome::EnduranceExhausted;
            report.failed_at_attempt = Some(report.key_attempts + 1);
            return Err(());
        }
        report.key_attempts += 1;
        if dist
            .device_matches(device, &mut scratch)
            .expect("devices are alive after a successful write")
        {
            return Ok(Some(cand));
        }
    }
    Ok(None)
}

/// Baseline: the attacker drives the key inputs directly and tries one candidate per
/// cycle until the chip is indistinguishable from the oracle.
pub fn direct_traversal(
    locked: &LockedNetlist,
    oracle: &Oracle,
    order: &CandidateOrder,
    probe_seed: u64,
) -> Result<AttackReport, AttackError> {
    let t0 = Instant::now();
    check_interface(locked, oracle)?;
    let mut device = locked.attacker_view();
    let k = device.key_width();
    let all: Vec<usize> = (0..k).collect();
    let sequence = order.sequence(&all, k, 0)?;
    let q0 = oracle.queries();
    let dist = Distinguisher::new(oracle, ProbeSet::new(device.inputs().len(), probe_seed));
    let mut report = AttackReport::new("direct", order.seed(), k);
    report.worst_case_attempts = Some(1 << k);
    if let Ok(found) = search_group(&mut device, &dist, &all, &sequence, &mut report) {
        if let Some(v) = found {
            report.outcome = Outcome::Success;
            report.recovered_key = Some(BitVector::from_u64(v, k));
        }
    }
    Ok(report.finish(&device, oracle, q0, t0))
}

/// Primary outputs reachable from the rGates of each key-bit group.
fn output_cones(locked: &LockedNetlist, groups: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); locked.net_count()];
    for (ci, cell) in locked.cells().iter().enumerate() {
        let ins: Vec<_> = match cell {
            Cell::Gate(g) => g.inputs.clone(),
            Cell::RGate { rgate, .. } => rgate.f_inputs.iter().chain(&rgate.g_inputs).copied().collect(),
        };
        for i in ins {
            fanout[i.index()].push(ci);
        }
    }
    let key_cell: Vec<usize> = locked
        .cells()
        .iter()
        .enumerate()
        .filter_map(|(ci, c)| match c {
            Cell::RGate { key_index, .. } => Some((*key_index, ci)),
            _ => None,
        })
        .fold(vec![0; locked.key_width()], |mut v, (k, ci)| {
            v[k] = ci;
            v
        });
    groups
        .iter()
        .map(|group| {
            let mut reached = vec![false; locked.net_count()];
            let mut stack: Vec<usize> = group.iter().map(|&k| key_cell[k]).collect();
            while let Some(ci) = stack.pop() {
                let out = locked.cells()[ci].output().index();
                if !std::mem::replace(&mut reached[out], true) {
                    stack.extend(&fanout[out]);
                }
            }
            locked.outputs().iter().map(|o| reached[o.index()]).collect()
        })
        .collect()
}

/// Per-module search. `group_sizes` must match the netlist's declared domains in
/// order; a netlist whose rGates are all configured from one snapshot has no
/// domains and is rejected.
pub fn separate_traversal(
    locked: &LockedNetlist,
    oracle: &Oracle,
    group_sizes: &[usize],
    order: &CandidateOrder,
    probe_seed: u64,
) -> Result<AttackReport, AttackError> {
    let t0 = Instant::now();
    check_interface(locked, oracle)?;
    let domains = locked.domains().ok_or_else(|| {
        AttackError::PartitionNotIsolable(
            "all rGates are reconfigured together from one key snapshot".into(),
        )
    })?;
    let sizes: Vec<usize> = domains.iter().map(Vec::len).collect();
    if sizes != group_sizes {
        return Err(AttackError::PartitionNotIsolable(format!(
            "requested groups {group_sizes:?} but the configurable domains have sizes {sizes:?}"
        )));
    }
    let groups = domains.to_vec();
    let cones = output_cones(locked, &groups);
    for a in 0..cones.len() {
        for b in a + 1..cones.len() {
            if cones[a].iter().zip(&cones[b]).any(|(x, y)| *x && *y) {
                return Err(AttackError::PartitionNotIsolable(format!(
                    "domains {a} and {b} reach a common primary output"
                )));
            }
        }
    }

    let mut device = locked.attacker_view();
    let k = device.key_width();
    let q0 = oracle.queries();
    let full = Distinguisher::new(oracle, ProbeSet::new(device.inputs().len(), probe_seed));
    let mut report = AttackReport::new("separate", order.seed(), k);
    report.worst_case_attempts = Some(groups.iter().map(|g| 1u64 << g.len()).sum());
    let mut key = BitVector::zeros(k);
    report.outcome = Outcome::Success;
    for (gi, (bits, cone)) in groups.iter().zip(cones).enumerate() {
        let sequence = order.sequence(bits, k, gi as u64 + 1)?;
        let dist = full.restricted(cone);
        match search_group(&mut device, &dist, bits, &sequence, &mut report) {
            Ok(Some(v)) => {
                for (j, &b) in bits.iter().enumerate() {
                    key.set(b, (v >> j) & 1 == 1);
                }
            }
            Ok(None) => {
                report.outcome = Outcome::SpaceExhausted;
                break;
            }
            Err(()) => break,
        }
    }
    if report.outcome == Outcome::Success {
        report.recovered_key = Some(key);
    }
    Ok(report.finish(&device, oracle, q0, t0))
}
