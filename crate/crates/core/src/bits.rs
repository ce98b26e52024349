use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed-width vector of bits. Text form is one `0`/`1` character per bit,
/// bit 0 first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector(Vec<bool>);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid bit character {ch:?} at position {pos}")]
pub struct ParseBitsError {
    pub pos: usize,
    pub ch: char,
}

impl BitVector {
    pub fn zeros(width: usize) -> Self {
        BitVector(vec![false; width])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        BitVector(bits)
    }

    /// Low `width` bits of `value`; bit `i` of the vector is bit `i` of the integer.
    pub fn from_u64(value: u64, width: usize) -> Self {
        assert!(width <= 64, "width {width} does not fit in u64");
        BitVector((0..width).map(|i| (value >> i) & 1 == 1).collect())
    }

    /// Inverse of [`BitVector::from_u64`]. Panics above 64 bits.
    pub fn to_u64(&self) -> u64 {
        assert!(self.0.len() <= 64, "width {} does not fit in u64", self.0.len());
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    pub fn random<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        BitVector((0..width).map(|_| rng.random::<bool>()).collect())
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn inverted(&self) -> Self {
        BitVector(self.0.iter().map(|b| !b).collect())
    }

    /// Number of differing positions. Widths must agree.
    pub fn hamming(&self, other: &BitVector) -> usize {
        assert_eq!(self.width(), other.width(), "hamming distance of unequal widths");
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl FromStr for BitVector {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .chars()
            .enumerate()
            .map(|(pos, ch)| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(ParseBitsError { pos, ch }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitVector)
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl From<Vec<bool>> for BitVector {
    fn from(bits: Vec<bool>) -> Self {
        BitVector(bits)
    }
}

impl FromIterator<bool> for BitVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitVector(iter.into_iter().collect())
    }
}

impl Serialize for BitVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_is_bit_zero_first() {
        let v: BitVector = "00001001".parse().unwrap();
        assert_eq!(v.width(), 8);
        assert!(v.get(4) && v.get(7));
        assert_eq!(v.to_string(), "00001001");
        assert_eq!(v.to_u64(), 0b1001_0000);
    }

    #[test]
    fn rejects_bad_chars() {
        assert_eq!(
            "01x".parse::<BitVector>(),
            Err(ParseBitsError { pos: 2, ch: 'x' })
        );
    }

    #[test]
    fn u64_round_trip() {
        for v in [0u64, 1, 0b1011, 0xdead_beef] {
            assert_eq!(BitVector::from_u64(v, 40).to_u64(), v);
        }
    }
}
