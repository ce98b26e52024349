//! Behavioural model of the FeFET reconfigurable gate.
//!
//! An rGate has an F cone and a G cone and computes one of two functions,
//! selected by the polarization of its FeFETs:
//!
//! | kind  | LVT (key bit 1) | HVT (key bit 0) |
//! |-------|-----------------|-----------------|
//! | Type1 | `(F)'`          | `(F·G)'`        |
//! | Type2 | `(F)'`          | `(F+G)'`        |
//!
//! F and G are AND-reductions of their nets for type 1 (series pull-down) and
//! OR-reductions for type 2 (parallel pull-down). State changes only through
//! [`RGate::reconfigure`], and every reconfiguration is charged one write against
//! the device's endurance budget whether or not the polarization flips.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::NetId;

/// Writes a FeFET survives before failing; the low end of the reported range.
pub const DEFAULT_ENDURANCE: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RGateKind {
    /// `{F' / (F·G)'}`
    Type1,
    /// `{F' / (F+G)'}`
    Type2,
}

impl RGateKind {
    pub fn number(self) -> u8 {
        match self {
            RGateKind::Type1 => 1,
            RGateKind::Type2 => 2,
        }
    }

    #[inline]
    fn reduce(self, words: impl Iterator<Item = u64>) -> u64 {
        match self {
            RGateKind::Type1 => words.fold(!0, |a, b| a & b),
            RGateKind::Type2 => words.fold(0, |a, b| a | b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    /// Low threshold voltage: G branch shorted/opened away, gate computes `F'`.
    Lvt,
    /// High threshold voltage: G branch active, gate computes the composite.
    Hvt,
}

impl Polarization {
    /// Key bit 1 writes LVT, key bit 0 writes HVT.
    pub fn from_key_bit(bit: bool) -> Self {
        if bit {
            Polarization::Lvt
        } else {
            Polarization::Hvt
        }
    }

    pub fn key_bit(self) -> bool {
        self == Polarization::Lvt
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RGateError {
    #[error("device failed after {writes} writes (endurance budget {budget})")]
    DeviceFailed { writes: u64, budget: u64 },
    #[error("expected {expected} F bits and {expected_g} G bits, got {actual} and {actual_g}")]
    WidthMismatch {
        expected: usize,
        expected_g: usize,
        actual: usize,
        actual_g: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RGate {
    pub kind: RGateKind,
    pub f_inputs: Vec<NetId>,
    pub g_inputs: Vec<NetId>,
    state: Polarization,
    write_count: u64,
    endurance_budget: u64,
    failed: bool,
}

impl RGate {
    /// A fresh, never-written gate. Unprogrammed devices are taken to sit in HVT.
    pub fn new(kind: RGateKind, f_inputs: Vec<NetId>, g_inputs: Vec<NetId>) -> Self {
        assert!(!f_inputs.is_empty(), "rGate needs a non-empty F cone");
        assert!(!g_inputs.is_empty(), "rGate needs a non-empty G cone");
        RGate {
            kind,
            f_inputs,
            g_inputs,
            state: Polarization::Hvt,
            write_count: 0,
            endurance_budget: DEFAULT_ENDURANCE,
            failed: false,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.set_endurance_budget(budget);
        self
    }

    pub fn set_endurance_budget(&mut self, budget: u64) {
        assert!(budget > 0, "endurance budget must be positive");
        self.endurance_budget = budget;
    }

    /// Test hook: pretend the device has already absorbed `writes` writes.
    pub fn with_write_count(mut self, writes: u64) -> Self {
        self.write_count = writes;
        self
    }

    pub fn state(&self) -> Polarization {
        self.state
    }

    pub fn write_count(&self) -> u64 {
        self.write_count
    }

    pub fn endurance_budget(&self) -> u64 {
        self.endurance_budget
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    /// Remaining writes before failure.
    pub fn writes_left(&self) -> u64 {
        if self.failed {
            0
        } else {
            self.endurance_budget.saturating_sub(self.write_count)
        }
    }

    fn failure(&self) -> RGateError {
        RGateError::DeviceFailed {
            writes: self.write_count,
            budget: self.endurance_budget,
        }
    }

    /// Reconfiguring mode: raise V_dd and write `key_bit` into the FeFETs.
    pub fn reconfigure(&mut self, key_bit: bool) -> Result<(), RGateError> {
        if self.failed || self.write_count >= self.endurance_budget {
            self.failed = true;
            return Err(self.failure());
        }
        self.write_count += 1;
        self.state = Polarization::from_key_bit(key_bit);
        Ok(())
    }

    /// Computing mode on single bits.
    pub fn eval(&self, f_bits: &[bool], g_bits: &[bool]) -> Result<bool, RGateError> {
        if f_bits.len() != self.f_inputs.len() || g_bits.len() != self.g_inputs.len() {
            return Err(RGateError::WidthMismatch {
                expected: self.f_inputs.len(),
                expected_g: self.g_inputs.len(),
                actual: f_bits.len(),
                actual_g: g_bits.len(),
            });
        }
        let w = |b: &bool| if *b { !0u64 } else { 0 };
        let out = self.eval_word(f_bits.iter().map(w), g_bits.iter().map(w))?;
        Ok(out & 1 == 1)
    }

    /// Computing mode on 64 packed patterns.
    #[inline]
    pub fn eval_word(
        &self,
        f: impl Iterator<Item = u64>,
        g: impl Iterator<Item = u64>,
    ) -> Result<u64, RGateError> {
        if self.failed {
            return Err(self.failure());
        }
        Ok(eval_function(self.kind, self.state, f, g))
    }
}

/// The rGate function for a given kind and polarization, independent of any device.
#[inline]
pub fn eval_function(
    kind: RGateKind,
    state: Polarization,
    f: impl Iterator<Item = u64>,
    g: impl Iterator<Item = u64>,
) -> u64 {
    let fw = kind.reduce(f);
    match state {
        Polarization::Lvt => !fw,
        Polarization::Hvt => {
            let gw = kind.reduce(g);
            match kind {
                RGateKind::Type1 => !(fw & gw),
                RGateKind::Type2 => !(fw | gw),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gate(kind: RGateKind, nf: usize, ng: usize) -> RGate {
        RGate::new(
            kind,
            (0..nf as u32).map(NetId).collect(),
            (nf as u32..(nf + ng) as u32).map(NetId).collect(),
        )
    }

    #[test]
    fn type1_b_prime_or_ab_prime() {
        // F = {B}, G = {A}
        let mut g = gate(RGateKind::Type1, 1, 1);
        g.reconfigure(true).unwrap();
        assert!(!g.eval(&[true], &[false]).unwrap());
        g.reconfigure(false).unwrap();
        assert!(!g.eval(&[true], &[true]).unwrap());
        assert!(g.eval(&[true], &[false]).unwrap());
    }

    #[test]
    fn type2_hvt_is_nor() {
        let mut g = gate(RGateKind::Type2, 1, 1);
        g.reconfigure(false).unwrap();
        assert!(g.eval(&[false], &[false]).unwrap());
        assert!(!g.eval(&[false], &[true]).unwrap());
    }

    #[test]
    fn reconfigure_table() {
        let mut g = gate(RGateKind::Type1, 1, 1);
        assert_eq!(g.state(), Polarization::Hvt);
        g.reconfigure(true).unwrap();
        assert_eq!((g.state(), g.write_count()), (Polarization::Lvt, 1));
        let mut g = gate(RGateKind::Type1, 1, 1);
        g.reconfigure(true).unwrap();
        let mut h = g.clone().with_write_count(0);
        h.reconfigure(false).unwrap();
        assert_eq!((h.state(), h.write_count()), (Polarization::Hvt, 1));
    }

    #[test]
    fn budget_boundary() {
        let mut g = gate(RGateKind::Type2, 2, 1).with_write_count(DEFAULT_ENDURANCE);
        assert_eq!(
            g.reconfigure(true),
            Err(RGateError::DeviceFailed {
                writes: DEFAULT_ENDURANCE,
                budget: DEFAULT_ENDURANCE
            })
        );
        assert!(g.is_failed());
        assert!(g.eval(&[true, true], &[true]).is_err());
    }

    #[test]
    fn exactly_budget_writes_succeed() {
        let mut g = gate(RGateKind::Type1, 1, 1).with_budget(3);
        for _ in 0..3 {
            g.reconfigure(true).unwrap();
        }
        assert!(g.reconfigure(true).is_err());
        assert_eq!(g.write_count(), 3);
    }

    #[test]
    fn width_checked() {
        let g = gate(RGateKind::Type1, 2, 1);
        assert!(matches!(
            g.eval(&[true], &[true]),
            Err(RGateError::WidthMismatch { .. })
        ));
    }
}
