//! Traversal-cost model and obfuscation metrics.

mod obfuscation;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use obfuscation::{
    error_rate, metrics_sweep, InputPolicy, KeyPolicy, ObfuscationMetrics, SamplingConfig,
    SweepAggregate, SweepRow, SweepTable, EXHAUSTIVE_PAIR_LIMIT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("p and N have different lengths ({p} vs {n})")]
    LengthMismatch { p: usize, n: usize },
    #[error("p[{index}] = {value} is outside (0, 1]")]
    BadProbability { index: usize, value: f64 },
    #[error("N[{index}] = {value} is below 1")]
    BadPeriod { index: usize, value: f64 },
    #[error("the correct key is among the keys to be sampled as wrong")]
    KeyNotStripped,
    #[error("error rate needs the locked netlist's correct key")]
    MissingKey,
    #[error("locked netlist and original differ in interface")]
    InterfaceMismatch,
    #[error("key of width {actual} where {expected} was expected")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("invalid model JSON: {0}")]
    Json(String),
}

/// Per-bit success probabilities `p` and mean modification periods `N` (in cycles).
/// Bits are independent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct TraversalModel {
    p: Vec<f64>,
    #[serde(rename = "N")]
    n: Vec<f64>,
}

#[derive(Deserialize)]
struct RawModel {
    p: Vec<f64>,
    #[serde(rename = "N")]
    n: Vec<f64>,
}

impl TryFrom<RawModel> for TraversalModel {
    type Error = MetricsError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        TraversalModel::new(raw.p, raw.n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modifications {
    /// Expected modifications until bit i is right: 1 / p_i.
    pub e_mu: Vec<f64>,
    /// Expected modifications until all bits are right at once.
    pub e_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleEstimate {
    pub t_m: f64,
    /// (min_i E(mu_i) N_i)^m.
    pub lower_bound: f64,
}

impl TraversalModel {
    pub fn new(p: Vec<f64>, n: Vec<f64>) -> Result<Self, MetricsError> {
        if p.len() != n.len() {
            return Err(MetricsError::LengthMismatch { p: p.len(), n: n.len() });
        }
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v <= 1.0)) {
            return Err(MetricsError::BadProbability { index, value });
        }
        if let Some((index, &value)) = n.iter().enumerate().find(|(_, &v)| !(v >= 1.0)) {
            return Err(MetricsError::BadPeriod { index, value });
        }
        Ok(TraversalModel { p, n })
    }

    /// All periods 1.
    pub fn with_unit_periods(p: Vec<f64>) -> Result<Self, MetricsError> {
        let n = vec![1.0; p.len()];
        Self::new(p, n)
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        serde_json::from_str(text).map_err(|e| MetricsError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn bits(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn periods(&self) -> &[f64] {
        &self.n
    }

    pub fn expected_modifications(&self) -> Modifications {
        let e_mu: Vec<f64> = self.p.iter().map(|p| 1.0 / p).collect();
        let e_m = e_mu.iter().product();
        Modifications { e_mu, e_m }
    }

    /// An empty model costs one cycle (empty product).
    pub fn expected_cycles(&self) -> CycleEstimate {
        let per_bit: Vec<f64> = self.p.iter().zip(&self.n).map(|(p, n)| n / p).collect();
        let t_m = per_bit.iter().product();
        let min = per_bit.iter().copied().fold(f64::INFINITY, f64::min);
        let lower_bound = if per_bit.is_empty() {
            1.0
        } else {
            min.powi(per_bit.len() as i32)
        };
        CycleEstimate { t_m, lower_bound }
    }

    /// Mean number of rounds until every bit succeeds in the same round, each bit an
    /// independent Bernoulli(p_i) per round.
    pub fn monte_carlo_modifications(&self, trials: u64, seed: u64) -> f64 {
        const CHUNKS: u64 = 64;
        let total: u64 = (0..CHUNKS)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c << 32));
                let share = trials / CHUNKS + u64::from(c < trials % CHUNKS);
                let mut rounds = 0u64;
                for _ in 0..share {
                    loop {
                        rounds += 1;
                        if self.p.iter().all(|&p| rng.random::<f64>() < p) {
                            break;
                        }
                    }
                }
                rounds
            })
            .sum();
        total as f64 / trials as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_bits_cost_one() {
        let m = TraversalModel::with_unit_periods(vec![1.0; 3]).unwrap();
        assert_eq!(m.expected_modifications().e_m, 1.0);
    }

    #[test]
    fn fair_coin() {
        let m = TraversalModel::with_unit_periods(vec![0.5]).unwrap();
        let e = m.expected_modifications();
        assert_eq!((e.e_mu, e.e_m), (vec![2.0], 2.0));
    }

    #[test]
    fn cycles_and_bound() {
        let m = TraversalModel::new(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        assert_eq!(m.expected_cycles(), CycleEstimate { t_m: 4.0, lower_bound: 4.0 });
        let m = TraversalModel::new(vec![0.5, 0.25], vec![1.0, 2.0]).unwrap();
        assert_eq!(m.expected_cycles(), CycleEstimate { t_m: 16.0, lower_bound: 4.0 });
        let empty = TraversalModel::new(vec![], vec![]).unwrap();
        assert_eq!(empty.expected_cycles().t_m, 1.0);
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(matches!(
            TraversalModel::new(vec![0.0], vec![1.0]),
            Err(MetricsError::BadProbability { index: 0, .. })
        ));
        assert!(TraversalModel::new(vec![0.5], vec![0.5]).is_err());
        assert!(TraversalModel::new(vec![0.5], vec![]).is_err());
        assert!(TraversalModel::from_json(r#"{"p": [1.5], "N": [1]}"#).is_err());
        let m = TraversalModel::from_json(r#"{"p": [0.5, 0.25], "N": [1, 2]}"#).unwrap();
        assert_eq!(TraversalModel::from_json(&m.to_json()).unwrap(), m);
    }
}
