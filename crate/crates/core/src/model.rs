//! Pairwise-comparison models.
//!
//! Items are indexed from 0 internally. A [`Pair`] `(i, j)` always has
//! `i < j`, and an [`Outcome`] records whether the first (smaller-index) item
//! won. The Bradley-Terry-Luce model lives behind [`ComparisonModel`] so that
//! other antisymmetric links can be dropped in without touching the solvers.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latent item scores. `scores[0]` is pinned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    scores: Vec<f64>,
}

impl ModelParams {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least 2 items, got {}",
                scores.len()
            )));
        }
        if scores[0] != 0.0 {
            return Err(Error::InvalidParams(format!(
                "score of item 1 must be exactly 0, got {}",
                scores[0]
            )));
        }
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "score of item {} is not finite",
                pos + 1
            )));
        }
        Ok(Self { scores })
    }

    /// Builds parameters from the free coordinates `theta_2, ..., theta_K`.
    pub fn from_free(free: &[f64]) -> Result<Self> {
        let mut scores = Vec::with_capacity(free.len() + 1);
        scores.push(0.0);
        scores.extend_from_slice(free);
        Self::new(scores)
    }

    /// Caller guarantees finiteness; used on solver output.
    pub(crate) fn from_free_unchecked(free: &[f64]) -> Self {
        let mut scores = Vec::with_capacity(free.len() + 1);
        scores.push(0.0);
        scores.extend_from_slice(free);
        debug_assert!(scores.iter().all(|s| s.is_finite()));
        Self { scores }
    }

    pub fn zeros(num_items: usize) -> Self {
        Self {
            scores: vec![0.0; num_items.max(2)],
        }
    }

    pub fn num_items(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn free(&self) -> &[f64] {
        &self.scores[1..]
    }

    pub fn score(&self, item: usize) -> f64 {
        self.scores[item]
    }

    /// `theta_i - theta_j` for the pair.
    pub fn diff(&self, pair: Pair) -> f64 {
        self.scores[pair.i] - self.scores[pair.j]
    }
}

/// An unordered pair of items stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    i: usize,
    j: usize,
}

impl Pair {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i >= j {
            return Err(Error::InvalidParams(format!(
                "pair ({i}, {j}) must satisfy i < j"
            )));
        }
        Ok(Self { i, j })
    }

    pub fn first(&self) -> usize {
        self.i
    }

    pub fn second(&self) -> usize {
        self.j
    }

    /// Lexicographic position among all `i < j` pairs of `num_items` items.
    pub fn index(&self, num_items: usize) -> usize {
        let i = self.i;
        i * (2 * num_items - i - 1) / 2 + (self.j - i - 1)
    }

    pub fn from_index(index: usize, num_items: usize) -> Self {
        let mut rest = index;
        for i in 0..num_items - 1 {
            let row = num_items - i - 1;
            if rest < row {
                return Self { i, j: i + 1 + rest };
            }
            rest -= row;
        }
        panic!("pair index {index} out of range for {num_items} items");
    }

    /// All pairs of `num_items` items in canonical order.
    pub fn all(num_items: usize) -> impl Iterator<Item = Pair> {
        (0..num_items).flat_map(move |i| (i + 1..num_items).map(move |j| Pair { i, j }))
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i + 1, self.j + 1)
    }
}

/// Number of unordered pairs, K(K-1)/2.
pub fn num_pairs(num_items: usize) -> usize {
    num_items * (num_items - 1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// The smaller-index item of the pair won (value 1).
    FirstWins,
    /// The larger-index item won (value 0).
    SecondWins,
}

impl Outcome {
    pub fn value(self) -> u8 {
        match self {
            Outcome::FirstWins => 1,
            Outcome::SecondWins => 0,
        }
    }

    pub fn from_value(value: u8) -> Result<Self> {
        match value {
            1 => Ok(Outcome::FirstWins),
            0 => Ok(Outcome::SecondWins),
            v => Err(Error::InvalidParams(format!("outcome must be 0 or 1, got {v}"))),
        }
    }
}

/// A pairwise model whose win probability depends only on the score
/// difference `d = theta_i - theta_j`, with `F(-d) = 1 - F(d)`.
pub trait ComparisonModel: Send + Sync {
    /// `F(d)`: probability that the first item wins.
    fn win_probability_diff(&self, diff: f64) -> f64;

    /// `ln F(d)`.
    fn log_win_diff(&self, diff: f64) -> f64 {
        self.win_probability_diff(diff).ln()
    }

    /// `F'(d) / F(d)`, the derivative of `ln F(d)`.
    fn d_log_win_diff(&self, diff: f64) -> f64;

    fn win_probability(&self, params: &ModelParams, pair: Pair) -> f64 {
        self.win_probability_diff(params.diff(pair))
    }

    fn log_pmf(&self, params: &ModelParams, pair: Pair, outcome: Outcome) -> f64 {
        let d = params.diff(pair);
        match outcome {
            Outcome::FirstWins => self.log_win_diff(d),
            Outcome::SecondWins => self.log_win_diff(-d),
        }
    }

    /// KL divergence between the outcome distributions of `params` and `alt`
    /// on one pair.
    fn pair_kl(&self, params: &ModelParams, alt: &ModelParams, pair: Pair) -> f64 {
        self.kl_diff(params.diff(pair), alt.diff(pair))
    }

    /// Bernoulli KL from `F(alt_diff)` to `F(diff)`, evaluated in log space.
    fn kl_diff(&self, diff: f64, alt_diff: f64) -> f64 {
        if diff == alt_diff {
            return 0.0;
        }
        let p = self.win_probability_diff(diff);
        let kl = p * (self.log_win_diff(diff) - self.log_win_diff(alt_diff))
            + (1.0 - p) * (self.log_win_diff(-diff) - self.log_win_diff(-alt_diff));
        kl.max(0.0)
    }

    fn sample_outcome<R: Rng + ?Sized>(&self, params: &ModelParams, pair: Pair, rng: &mut R) -> Outcome
    where
        Self: Sized,
    {
        let p = self.win_probability(params, pair);
        if rng.random::<f64>() < p {
            Outcome::FirstWins
        } else {
            Outcome::SecondWins
        }
    }
}

/// Bradley-Terry-Luce: `F(d) = 1 / (1 + exp(-d))`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Btl;

impl ComparisonModel for Btl {
    #[inline]
    fn win_probability_diff(&self, diff: f64) -> f64 {
        logistic(diff)
    }

    #[inline]
    fn log_win_diff(&self, diff: f64) -> f64 {
        log_logistic(diff)
    }

    #[inline]
    fn d_log_win_diff(&self, diff: f64) -> f64 {
        logistic(-diff)
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 / (1 + exp(-x)))` without cancellation at either tail.
#[inline]
pub fn log_logistic(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Bernoulli KL divergence `p ln(p/q) + (1-p) ln((1-p)/(1-q))`.
///
/// `q` is clamped into `[1e-12, 1 - 1e-12]` only when it has underflowed to
/// the boundary.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    const FLOOR: f64 = 1e-12;
    let q = if q <= 0.0 {
        FLOOR
    } else if q >= 1.0 {
        1.0 - FLOOR
    } else {
        q
    };
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    kl.max(0.0)
}
