//! Output corruption under wrong keys.
//!
//! A (wrong key, input) pair is an error when at least one primary output differs
//! from the original design. The Hamming-distance ratio divides the number of wrong
//! output bits by the primary-output count. The correct key is never sampled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::ProbeSet;
use crate::bits::BitVector;
use crate::locking::{lock_netlist, LockError, LockPolicy, LockedNetlist};
use crate::netlist::Netlist;
use crate::stats::{self, Correlation};

use super::MetricsError;

/// Exhaustive enumeration is used automatically when 2^K * 2^n is at most this.
pub const EXHAUSTIVE_PAIR_LIMIT: u64 = 1 << 22;

#[derive(Clone, Debug, PartialEq)]
pub enum KeyPolicy {
    /// Uniformly random wrong keys.
    Random(usize),
    /// Every wrong key.
    All,
    /// A fixed list; must not contain the correct key.
    Explicit(Vec<BitVector>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputPolicy {
    Random(usize),
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    pub keys: KeyPolicy,
    pub inputs: InputPolicy,
    pub seed: u64,
    /// Switch to full enumeration when the pair space is small enough.
    pub auto_exhaustive: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            keys: KeyPolicy::Random(1000),
            inputs: InputPolicy::Random(1000),
            seed: 0,
            auto_exhaustive: true,
        }
    }
}

impl SamplingConfig {
    /// Pure Monte Carlo with the given counts.
    pub fn monte_carlo(keys: usize, inputs: usize, seed: u64) -> Self {
        SamplingConfig {
            keys: KeyPolicy::Random(keys),
            inputs: InputPolicy::Random(inputs),
            seed,
            auto_exhaustive: false,
        }
    }

    pub fn exhaustive() -> Self {
        SamplingConfig {
            keys: KeyPolicy::All,
            inputs: InputPolicy::All,
            seed: 0,
            auto_exhaustive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationMetrics {
    pub error_rate: f64,
    pub avg_hd_ratio: f64,
    pub key_samples: u64,
    pub input_samples: u64,
    /// Errors counted over this many (key, input) pairs.
    pub pairs: u64,
    pub exhaustive: bool,
}

impl ObfuscationMetrics {
    fn empty(exhaustive: bool) -> Self {
        ObfuscationMetrics {
            error_rate: 0.0,
            avg_hd_ratio: 0.0,
            key_samples: 0,
            input_samples: 0,
            pairs: 0,
            exhaustive,
        }
    }
}

fn wrong_keys(cfg: &SamplingConfig, correct: &BitVector, rng: &mut ChaCha8Rng) -> Result<Vec<BitVector>, MetricsError> {
    let k = correct.width();
    match &cfg.keys {
        KeyPolicy::Explicit(keys) => {
            if let Some(bad) = keys.iter().find(|key| key.width() != k) {
                return Err(MetricsError::WidthMismatch {
                    expected: k,
                    actual: bad.width(),
                });
            }
            if keys.contains(correct) {
                return Err(MetricsError::KeyNotStripped);
            }
            Ok(keys.clone())
        }
        KeyPolicy::All => {
            assert!(k <= 24, "enumerating all keys is limited to 24 bits");
            let c = correct.to_u64();
            Ok((0..1u64 << k)
                .filter(|&v| v != c)
                .map(|v| BitVector::from_u64(v, k))
                .collect())
        }
        KeyPolicy::Random(count) => Ok((0..*count)
            .map(|_| loop {
                let key = BitVector::random(k, rng);
                if &key != correct {
                    break key;
                }
            })
            .collect()),
    }
}

fn pair_space_is_small(k: usize, n: usize) -> bool {
    k + n <= EXHAUSTIVE_PAIR_LIMIT.trailing_zeros() as usize
}

/// Error rate and mean HD/fanout of `locked` under wrong keys, against `original`.
pub fn error_rate(
    original: &Netlist,
    locked: &LockedNetlist,
    cfg: &SamplingConfig,
) -> Result<ObfuscationMetrics, MetricsError> {
    let correct = locked.correct_key().ok_or(MetricsError::MissingKey)?;
    let n = original.inputs().len();
    if n != locked.inputs().len() || original.outputs().len() != locked.outputs().len() {
        return Err(MetricsError::InterfaceMismatch);
    }
    let k = locked.key_width();
    let auto = cfg.auto_exhaustive && pair_space_is_small(k, n);
    let (key_policy, input_policy) = if auto {
        (KeyPolicy::All, InputPolicy::All)
    } else {
        (cfg.keys.clone(), cfg.inputs)
    };
    let exhaustive = key_policy == KeyPolicy::All && input_policy == InputPolicy::All;
    if k == 0 {
        return Ok(ObfuscationMetrics::empty(true));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keys = wrong_keys(
        &SamplingConfig {
            keys: key_policy,
            ..cfg.clone()
        },
        correct,
        &mut rng,
    )?;
    let probes = match input_policy {
        InputPolicy::All => ProbeSet::exhaustive(n),
        InputPolicy::Random(count) => {
            let patterns: Vec<BitVector> = (0..count).map(|_| BitVector::random(n, &mut rng)).collect();
            ProbeSet::from_patterns(n, &patterns)
        }
    };
    let golden: Vec<Vec<u64>> = probes
        .blocks()
        .map(|(words, _)| original.eval_outputs_packed(words, &mut Vec::new()))
        .collect();
    let outputs = original.outputs().len() as u64;

    let (errors, hd) = keys
        .par_iter()
        .map_init(Vec::new, |scratch, key| {
            let mut errors = 0u64;
            let mut hd = 0u64;
            for ((words, mask), want) in probes.blocks().zip(&golden) {
                let got = locked.eval_outputs_with_key(key, words, scratch);
                let mut any = 0u64;
                for (g, w) in got.iter().zip(want) {
                    let d = (g ^ w) & mask;
                    any |= d;
                    hd += d.count_ones() as u64;
                }
                errors += any.count_ones() as u64;
            }
            (errors, hd)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let inputs = probes.pattern_count();
    let pairs = keys.len() as u64 * inputs;
    if pairs == 0 {
        return Ok(ObfuscationMetrics::empty(exhaustive));
    }
    Ok(ObfuscationMetrics {
        error_rate: errors as f64 / pairs as f64,
        avg_hd_ratio: hd as f64 / (pairs * outputs) as f64,
        key_samples: keys.len() as u64,
        input_samples: inputs,
        pairs,
        exhaustive,
    })
}

/// One sweep cell. Skipped cells (netlist cannot take K rGates) have no metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub module: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub error_rate: Option<f64>,
    pub hd_ratio: Option<f64>,
    pub samples: u64,
    pub exhaustive: bool,
}

impl SweepRow {
    pub fn skipped(&self) -> bool {
        self.error_rate.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub module: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub cells: usize,
    pub mean_error_rate: f64,
    pub stderr_error_rate: f64,
    pub mean_hd_ratio: f64,
    pub stderr_hd_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).expect("in-memory CSV");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("ASCII")
    }

    pub fn extend(&mut self, other: SweepTable) {
        self.rows.extend(other.rows);
    }

    /// Mean and standard error per (module, K) over non-skipped seeds.
    pub fn aggregates(&self) -> Vec<SweepAggregate> {
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|(m, k)| *m == r.module && *k == r.k) {
                keys.push((r.module.clone(), r.k));
            }
        }
        keys.into_iter()
            .filter_map(|(module, k)| {
                let cell: Vec<&SweepRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.module == module && r.k == k && !r.skipped())
                    .collect();
                if cell.is_empty() {
                    return None;
                }
                let er: Vec<f64> = cell.iter().filter_map(|r| r.error_rate).collect();
                let hd: Vec<f64> = cell.iter().filter_map(|r| r.hd_ratio).collect();
                Some(SweepAggregate {
                    module,
                    k,
                    cells: cell.len(),
                    mean_error_rate: stats::mean(&er),
                    stderr_error_rate: stats::std_err(&er),
                    mean_hd_ratio: stats::mean(&hd),
                    stderr_hd_ratio: stats::std_err(&hd),
                })
            })
            .collect()
    }

    /// Spearman correlation of K with the per-K mean error rate and mean HD ratio
    /// for one module.
    pub fn trend(&self, module: &str) -> (Correlation, Correlation) {
        let agg: Vec<SweepAggregate> = self.aggregates().into_iter().filter(|a| a.module == module).collect();
        let ks: Vec<f64> = agg.iter().map(|a| a.k as f64).collect();
        let er: Vec<f64> = agg.iter().map(|a| a.mean_error_rate).collect();
        let hd: Vec<f64> = agg.iter().map(|a| a.mean_hd_ratio).collect();
        (stats::spearman(&ks, &er), stats::spearman(&ks, &hd))
    }
}

fn sweep_cell(
    netlist: &Netlist,
    module: &str,
    k: usize,
    seed: u64,
    sampling: &SamplingConfig,
) -> Result<SweepRow, MetricsError> {
    let mut row = SweepRow {
        module: module.to_string(),
        k,
        seed,
        error_rate: None,
        hd_ratio: None,
        samples: 0,
        exhaustive: false,
    };
    let locked = match lock_netlist(netlist, &LockPolicy::new(k, seed)) {
        Ok(l) => l,
        Err(LockError::NotEnoughEligibleGates { .. } | LockError::NoValidGChoice { .. }) => return Ok(row),
        Err(e) => panic!("locking a validated netlist failed: {e}"),
    };
    let cfg = SamplingConfig {
        seed: sampling.seed ^ seed.rotate_left(17) ^ ((k as u64) << 48),
        ..sampling.clone()
    };
    let m = error_rate(netlist, &locked, &cfg)?;
    row.error_rate = Some(m.error_rate);
    row.hd_ratio = Some(m.avg_hd_ratio);
    row.samples = m.pairs;
    row.exhaustive = m.exhaustive;
    Ok(row)
}

/// Lock `netlist` at every (K, seed) and measure it. Rows come out ordered by K then
/// seed, independent of thread count.
pub fn metrics_sweep(
    netlist: &Netlist,
    module: &str,
    k_list: &[usize],
    seeds: &[u64],
    sampling: &SamplingConfig,
) -> Result<SweepTable, MetricsError> {
    let cells: Vec<(usize, u64)> = k_list
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(k, seed)| sweep_cell(netlist, module, k, seed, sampling))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;

    fn c17() -> Netlist {
        parse_bench(include_str!("../../../../data/iscas85/c17.bench")).unwrap()
    }

    #[test]
    fn k_zero_is_all_zero_and_exhaustive() {
        let n = c17();
        let locked = lock_netlist(&n, &LockPolicy::new(0, 1)).unwrap();
        let m = error_rate(&n, &locked, &SamplingConfig::default()).unwrap();
        assert_eq!((m.error_rate, m.avg_hd_ratio, m.exhaustive), (0.0, 0.0, true));
    }

    #[test]
    fn refuses_correct_key_as_wrong() {
        let n = c17();
        let locked = lock_netlist(&n, &LockPolicy::new(2, 3)).unwrap();
        let cfg = SamplingConfig {
            keys: KeyPolicy::Explicit(vec![locked.correct_key().unwrap().clone()]),
            inputs: InputPolicy::All,
            seed: 0,
            auto_exhaustive: false,
        };
        assert_eq!(error_rate(&n, &locked, &cfg), Err(MetricsError::KeyNotStripped));
    }

    #[test]
    fn small_space_goes_exhaustive() {
        let n = c17();
        let locked = lock_netlist(&n, &LockPolicy::new(2, 3)).unwrap();
        let m = error_rate(&n, &locked, &SamplingConfig::default()).unwrap();
        assert!(m.exhaustive);
        assert_eq!(m.pairs, 3 * 32);
    }

    #[test]
    fn zero_k_sweep_row() {
        let t = metrics_sweep(&c17(), "c17", &[0], &[1, 2], &SamplingConfig::default()).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.error_rate == Some(0.0) && r.hd_ratio == Some(0.0)));
        let t = metrics_sweep(&c17(), "c17", &[9], &[1], &SamplingConfig::default()).unwrap();
        assert!(t.rows[0].skipped());
        assert!(t.to_csv().starts_with("module,K,seed,error_rate,hd_ratio,samples,exhaustive\n"));
    }
}
