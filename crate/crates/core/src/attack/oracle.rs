//! The unlocked chip as a black box, and the output-comparison test used to decide
//! whether a candidate key is functionally correct.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVector;
use crate::locking::{LockError, LockedNetlist};
use crate::netlist::Netlist;

use super::AttackError;

/// Inputs up to this width are compared exhaustively.
pub const EXHAUSTIVE_INPUTS: usize = 16;
pub const FIXED_PROBES: usize = 64;
pub const RANDOM_PROBES: usize = 256;
const FIXED_PROBE_SEED: u64 = 0x0b5e_55ed;

/// Query-only access to a correctly configured chip.
pub struct Oracle {
    netlist: Netlist,
    queries: AtomicU64,
}

impl Oracle {
    /// Build from a locked netlist that still carries its correct key.
    pub fn from_locked(locked: &LockedNetlist) -> Result<Oracle, AttackError> {
        let key = locked.correct_key().ok_or(AttackError::NoOracleKey)?;
        Self::from_key(locked, key)
    }

    pub fn from_key(locked: &LockedNetlist, key: &BitVector) -> Result<Oracle, AttackError> {
        Ok(Oracle::from_netlist(locked.configured_netlist(key)?))
    }

    /// Any functionally equivalent unlocked netlist (e.g. the original design).
    pub fn from_netlist(netlist: Netlist) -> Oracle {
        Oracle {
            netlist,
            queries: AtomicU64::new(0),
        }
    }

    pub fn input_count(&self) -> usize {
        self.netlist.inputs().len()
    }

    pub fn output_count(&self) -> usize {
        self.netlist.outputs().len()
    }

    pub fn query(&self, inputs: &BitVector) -> Result<BitVector, AttackError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(self.netlist.evaluate(inputs).map_err(LockError::from)?)
    }

    /// 64 queries at once, one per bit lane.
    pub fn query_packed(&self, inputs: &[u64], lanes: u32) -> Vec<u64> {
        self.queries.fetch_add(lanes as u64, Ordering::Relaxed);
        self.netlist.eval_outputs_packed(inputs, &mut Vec::new())
    }

    /// Input patterns submitted so far.
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

/// Input patterns packed into 64-lane blocks.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    blocks: Vec<Vec<u64>>,
    masks: Vec<u64>,
    exhaustive: bool,
}

impl ProbeSet {
    /// All patterns for `n <= 16` inputs, otherwise 64 fixed probes plus 256 seeded
    /// random vectors.
    pub fn new(n: usize, seed: u64) -> ProbeSet {
        if n <= EXHAUSTIVE_INPUTS {
            return Self::exhaustive(n);
        }
        let mut fixed_rng = ChaCha8Rng::seed_from_u64(FIXED_PROBE_SEED);
        let mut patterns = vec![BitVector::zeros(n), BitVector::zeros(n).inverted()];
        for i in 0..n {
            if patterns.len() + 2 > FIXED_PROBES {
                break;
            }
            let mut one = BitVector::zeros(n);
            one.set(i, true);
            patterns.push(one.inverted());
            patterns.push(one);
        }
        while patterns.len() < FIXED_PROBES {
            patterns.push(BitVector::random(n, &mut fixed_rng));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..RANDOM_PROBES {
            patterns.push(BitVector::random(n, &mut rng));
        }
        Self::from_patterns(n, &patterns)
    }

    pub fn exhaustive(n: usize) -> ProbeSet {
        assert!(n <= 30, "exhaustive probe sets are for small input counts");
        let total = 1u64 << n;
        let mut blocks = Vec::new();
        let mut masks = Vec::new();
        let mut base = 0u64;
        while base < total {
            let lanes = (total - base).min(64);
            let words = (0..n)
                .map(|i| {
                    (0..lanes).fold(0u64, |w, l| w | ((((base + l) >> i) & 1) << l))
                })
                .collect();
            blocks.push(words);
            masks.push(lane_mask(lanes as u32));
            base += 64;
        }
        ProbeSet {
            blocks,
            masks,
            exhaustive: true,
        }
    }

    pub fn from_patterns(n: usize, patterns: &[BitVector]) -> ProbeSet {
        let mut blocks = Vec::new();
        let mut masks = Vec::new();
        for chunk in patterns.chunks(64) {
            let mut words = vec![0u64; n];
            for (lane, p) in chunk.iter().enumerate() {
                for (i, w) in words.iter_mut().enumerate() {
                    *w |= (p.get(i) as u64) << lane;
                }
            }
            blocks.push(words);
            masks.push(lane_mask(chunk.len() as u32));
        }
        ProbeSet {
            blocks,
            masks,
            exhaustive: false,
        }
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn pattern_count(&self) -> u64 {
        self.masks.iter().map(|m| m.count_ones() as u64).sum()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&[u64], u64)> {
        self.blocks.iter().map(Vec::as_slice).zip(self.masks.iter().copied())
    }
}

pub(crate) fn lane_mask(lanes: u32) -> u64 {
    if lanes >= 64 {
        u64::MAX
    } else {
        (1u64 << lanes) - 1
    }
}

/// Oracle responses to a probe set, recorded once per attack.
pub struct Distinguisher {
    probes: ProbeSet,
    expected: Vec<Vec<u64>>,
    /// Which primary outputs take part in the comparison.
    observed: Vec<bool>,
}

impl Distinguisher {
    pub fn new(oracle: &Oracle, probes: ProbeSet) -> Distinguisher {
        let expected = probes
            .blocks()
            .map(|(words, mask)| oracle.query_packed(words, mask.count_ones()))
            .collect();
        Distinguisher {
            observed: vec![true; oracle.output_count()],
            probes,
            expected,
        }
    }

    /// Restrict the comparison to a subset of outputs (an isolated sub-module).
    pub fn restricted(&self, observed: Vec<bool>) -> Distinguisher {
        Distinguisher {
            probes: self.probes.clone(),
            expected: self.expected.clone(),
            observed,
        }
    }

    fn agrees(&self, mut eval: impl FnMut(&[u64]) -> Vec<u64>) -> bool {
        self.probes
            .blocks()
            .zip(&self.expected)
            .all(|((words, mask), want)| {
                let got = eval(words);
                got.iter()
                    .zip(want)
                    .zip(&self.observed)
                    .all(|((g, w), &obs)| !obs || (g ^ w) & mask == 0)
            })
    }

    /// Compare the chip in its current device configuration against the oracle.
    pub fn device_matches(&self, locked: &LockedNetlist, scratch: &mut Vec<u64>) -> Result<bool, LockError> {
        let mut err = None;
        let ok = self.agrees(|words| match locked.eval_outputs_packed(words, scratch) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                Vec::new()
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(ok),
        }
    }

    /// Same comparison with `key` loaded functionally (no device writes).
    pub fn key_matches(&self, locked: &LockedNetlist, key: &BitVector, scratch: &mut Vec<u64>) -> bool {
        self.agrees(|words| locked.eval_outputs_with_key(key, words, scratch))
    }

    pub fn probes(&self) -> &ProbeSet {
        &self.probes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_covers_every_pattern_once() {
        let p = ProbeSet::exhaustive(3);
        assert_eq!(p.pattern_count(), 8);
        let (words, mask) = p.blocks().next().unwrap();
        assert_eq!(mask, 0xFF);
        let mut seen: Vec<u64> = (0..8)
            .map(|l| (0..3).fold(0, |v, i| v | (((words[i] >> l) & 1) << i)))
            .collect();
        seen.sort();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn wide_circuits_use_probe_plus_random() {
        let p = ProbeSet::new(36, 1);
        assert!(!p.is_exhaustive());
        assert_eq!(p.pattern_count(), (FIXED_PROBES + RANDOM_PROBES) as u64);
        assert_eq!(ProbeSet::exhaustive(10).pattern_count(), 1024);
    }
}
