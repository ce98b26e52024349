//! Attacks that can only reach keys through the key-generating core.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::keycore::{CpuState, Instruction, NodeSelection};
use crate::locking::{lock_netlist, LockPolicy, LockedNetlist};
use crate::netlist::Netlist;

use super::oracle::{Distinguisher, Oracle, ProbeSet};
use super::{check_interface, direct_traversal, AttackError, AttackReport, CandidateOrder, Outcome};

/// Something that produces one key snapshot per clock cycle.
pub trait KeySource {
    fn width(&self) -> usize;
    /// Advance one cycle and return the snapshot, key bit `i` at bit `i`.
    fn next_key(&mut self) -> u64;
}

/// The toy core fed a fresh uniformly random instruction every cycle.
pub struct ToyCoreSource {
    state: CpuState,
    sel: NodeSelection,
    rng: ChaCha8Rng,
}

impl ToyCoreSource {
    pub fn new(sel: NodeSelection, seed: u64) -> Self {
        assert!(sel.width() <= 64, "snapshots are packed into 64 bits");
        ToyCoreSource {
            state: CpuState::reset(),
            sel,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn state(&self) -> &CpuState {
        &self.state
    }
}

impl KeySource for ToyCoreSource {
    fn width(&self) -> usize {
        self.sel.width()
    }

    #[inline]
    fn next_key(&mut self) -> u64 {
        let instr = Instruction::random(&mut self.rng);
        self.state.step(&instr);
        self.sel.extract_u64(&self.state)
    }
}

/// Null model: every cycle lands on a uniformly random state.
pub struct UniformSource {
    width: usize,
    rng: ChaCha8Rng,
}

impl UniformSource {
    pub fn new(width: usize, seed: u64) -> Self {
        assert!(width <= 64);
        UniformSource {
            width,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl KeySource for UniformSource {
    fn width(&self) -> usize {
        self.width
    }

    fn next_key(&mut self) -> u64 {
        self.rng.random::<u64>() & super::oracle::lane_mask(self.width as u32)
    }
}

#[derive(Clone, Debug)]
pub struct IisConfig {
    pub max_cycles: u64,
    /// Overrides the devices' write budget (`u64::MAX` for unlimited endurance).
    pub endurance_budget: Option<u64>,
    pub probe_seed: u64,
    /// Recorded in the report.
    pub seed: Option<u64>,
}

impl Default for IisConfig {
    fn default() -> Self {
        IisConfig {
            max_cycles: 1_000_000,
            endurance_budget: None,
            probe_seed: 0,
            seed: None,
        }
    }
}

/// Run the key source cycle by cycle. Each new snapshot is written to every rGate at
/// once and the chip is compared against the oracle; an unchanged snapshot costs a
/// cycle but no write.
pub fn iis_traversal(
    locked: &LockedNetlist,
    oracle: &Oracle,
    source: &mut dyn KeySource,
    cfg: &IisConfig,
) -> Result<AttackReport, AttackError> {
    let t0 = Instant::now();
    check_interface(locked, oracle)?;
    let mut device = locked.attacker_view();
    let k = device.key_width();
    if source.width() != k {
        return Err(AttackError::SelectionWidth {
            selection: source.width(),
            key: k,
        });
    }
    if let Some(b) = cfg.endurance_budget {
        device.set_endurance_budget(b);
    }
    let q0 = oracle.queries();
    let dist = Distinguisher::new(oracle, ProbeSet::new(device.inputs().len(), cfg.probe_seed));
    let mut report = AttackReport::new("iis", cfg.seed, k);
    report.outcome = Outcome::MaxCyclesExceeded;
    let mut scratch = Vec::new();

    if k == 0 {
        if dist.device_matches(&device, &mut scratch)? {
            report.outcome = Outcome::Success;
            report.recovered_key = Some(BitVector::zeros(0));
        } else {
            report.outcome = Outcome::SpaceExhausted;
        }
        return Ok(report.finish(&device, oracle, q0, t0));
    }

    // Verdicts are a pure function of the key, so repeats are answered from memory.
    let mut dense: Vec<u8> = if k <= super::MAX_ENUMERATED_KEY_BITS {
        vec![0; 1 << k]
    } else {
        Vec::new()
    };
    let mut sparse: HashMap<u64, bool> = HashMap::new();
    let all: Vec<usize> = (0..k).collect();
    let mut bits = vec![false; k];
    let mut last = None;

    while report.total_cycles < cfg.max_cycles {
        let key = source.next_key();
        report.total_cycles += 1;
        if last == Some(key) {
            continue;
        }
        last = Some(key);
        for (j, b) in bits.iter_mut().enumerate() {
            *b = (key >> j) & 1 == 1;
        }
        if device.write_bits(&all, &bits).is_err() {
            report.outcome = Outcome::EnduranceExhausted;
            report.failed_at_attempt = Some(report.key_attempts + 1);
            break;
        }
        report.key_attempts += 1;
        let mut verdict = || dist.key_matches(&device, &BitVector::from_bits(bits.clone()), &mut scratch);
        let pass = if dense.is_empty() {
            *sparse.entry(key).or_insert_with(verdict)
        } else {
            let slot = &mut dense[key as usize];
            if *slot == 0 {
                *slot = 1 + verdict() as u8;
            }
            *slot == 2
        };
        if pass {
            report.outcome = Outcome::Success;
            report.recovered_key = Some(BitVector::from_u64(key, k));
            break;
        }
    }
    Ok(report.finish(&device, oracle, q0, t0))
}

/// Cycles until `source` first emits `target`, or `None` within `max_cycles`.
pub fn hitting_time(source: &mut dyn KeySource, target: u64, max_cycles: u64) -> Option<u64> {
    (1..=max_cycles).find(|_| source.next_key() == target)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub k: usize,
    pub hits: u64,
    pub cycles: u64,
    pub frequency: f64,
    /// Frequency relative to the smallest K measured.
    pub normalized: f64,
}

/// Fraction of cycles whose first `k` snapshot bits equal the first `k` target bits,
/// measured on one trajectory for every `k` in `k_values`.
pub fn correct_frequency(
    source: &mut dyn KeySource,
    target: u64,
    k_values: &[usize],
    cycles: u64,
) -> Vec<FrequencyRow> {
    let masks: Vec<u64> = k_values
        .iter()
        .map(|&k| super::oracle::lane_mask(k as u32))
        .collect();
    let mut hits = vec![0u64; k_values.len()];
    for _ in 0..cycles {
        let diff = source.next_key() ^ target;
        for (h, m) in hits.iter_mut().zip(&masks) {
            *h += (diff & m == 0) as u64;
        }
    }
    let base = k_values
        .iter()
        .zip(&hits)
        .min_by_key(|(k, _)| **k)
        .map(|(_, &h)| h as f64 / cycles as f64)
        .unwrap_or(1.0);
    k_values
        .iter()
        .zip(hits)
        .map(|(&k, h)| {
            let frequency = h as f64 / cycles as f64;
            FrequencyRow {
                k,
                hits: h,
                cycles,
                frequency,
                normalized: if base > 0.0 { frequency / base } else { 0.0 },
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreModel {
    /// Random instructions on the toy core, seeded-uniform register-bit selection.
    ToyCore,
    /// Uniformly random snapshot every cycle.
    Uniform,
}

#[derive(Clone, Debug)]
pub struct CurveConfig {
    pub k_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub max_cycles: u64,
    pub core: CoreModel,
}

/// One (K, seed) cell: IIS cycles and the direct-traversal attempts on the same lock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub cycles: u64,
    pub attempts: u64,
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub k: usize,
    pub trials: usize,
    pub censored: usize,
    pub mean_cycles: f64,
    pub mean_attempts: f64,
    /// mean cycles / mean direct attempts.
    pub ratio: f64,
    /// mean cycles / 2^K.
    pub ratio_vs_2k: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

impl LogLinearFit {
    pub fn predict(&self, k: f64) -> f64 {
        (self.intercept + self.slope * k).exp()
    }
}

/// Least squares of `ln y` on `x`.
pub fn fit_log_linear(points: &[(f64, f64)]) -> LogLinearFit {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if sxx > 0.0 && syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    LogLinearFit {
        intercept: my - slope * mx,
        slope,
        r_squared,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalCurve {
    pub rows: Vec<CurveRow>,
    pub summary: Vec<CurveSummary>,
    pub fit: LogLinearFit,
}

impl TraversalCurve {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).expect("in-memory CSV");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("ASCII")
    }

    pub fn summary_for(&self, k: usize) -> Option<&CurveSummary> {
        self.summary.iter().find(|s| s.k == k)
    }
}

fn selection_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ (k as u64)
}

/// Node selection used for a (K, seed) curve cell.
pub fn curve_selection(k: usize, seed: u64) -> NodeSelection {
    let mut rng = ChaCha8Rng::seed_from_u64(selection_seed(seed, k));
    NodeSelection::random_register_bits(k, &mut rng).expect("K fits in the register file")
}

fn curve_cell(netlist: &Netlist, k: usize, seed: u64, cfg: &CurveConfig) -> Result<CurveRow, AttackError> {
    let locked: LockedNetlist = lock_netlist(netlist, &LockPolicy::new(k, seed))?;
    let oracle = Oracle::from_locked(&locked)?;
    let direct = direct_traversal(&locked, &oracle, &CandidateOrder::Seeded(seed), seed)?;
    let iis_cfg = IisConfig {
        max_cycles: cfg.max_cycles,
        endurance_budget: Some(u64::MAX),
        probe_seed: seed,
        seed: Some(seed),
    };
    let report = match cfg.core {
        CoreModel::ToyCore => {
            let mut src = ToyCoreSource::new(curve_selection(k, seed), seed);
            iis_traversal(&locked, &oracle, &mut src, &iis_cfg)?
        }
        CoreModel::Uniform => {
            let mut src = UniformSource::new(k, seed);
            iis_traversal(&locked, &oracle, &mut src, &iis_cfg)?
        }
    };
    Ok(CurveRow {
        k,
        seed,
        cycles: report.total_cycles,
        attempts: direct.key_attempts,
        censored: !report.success,
    })
}

/// IIS cost against K: every (K, seed) cell locks `netlist` with that seed, runs the
/// direct baseline and the IIS attack (endurance unlimited), and the per-K means are
/// fitted with `ln(cycles) = a + b K`. Censored cells contribute `max_cycles`.
pub fn traversal_curve(netlist: &Netlist, cfg: &CurveConfig) -> Result<TraversalCurve, AttackError> {
    let cells: Vec<(usize, u64)> = cfg
        .k_values
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(k, seed)| curve_cell(netlist, k, seed, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let summary: Vec<CurveSummary> = cfg
        .k_values
        .iter()
        .map(|&k| {
            let cell: Vec<&CurveRow> = rows.iter().filter(|r| r.k == k).collect();
            let n = cell.len().max(1) as f64;
            let mean_cycles = cell.iter().map(|r| r.cycles as f64).sum::<f64>() / n;
            let mean_attempts = cell.iter().map(|r| r.attempts as f64).sum::<f64>() / n;
            CurveSummary {
                k,
                trials: cell.len(),
                censored: cell.iter().filter(|r| r.censored).count(),
                mean_cycles,
                mean_attempts,
                ratio: mean_cycles / mean_attempts.max(1.0),
                ratio_vs_2k: mean_cycles / (k as f64).exp2(),
            }
        })
        .collect();
    let fit = fit_log_linear(
        &summary
            .iter()
            .map(|s| (s.k as f64, s.mean_cycles.max(1.0)))
            .collect::<Vec<_>>(),
    );
    Ok(TraversalCurve { rows, summary, fit })
}
