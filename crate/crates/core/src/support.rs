//! Prior support geometry: rank permutations, convex rank regions and the
//! uniform prior.
//!
//! A support is the sup-norm box `|theta_i| <= kappa` (i >= 2) intersected
//! with a minimum pairwise separation `delta`. Fixing a permutation turns the
//! separation constraints into a chain of linear inequalities, so every rank
//! region is a convex polytope. With item 1 pinned at zero the chain splits
//! into the items ranked above item 1 and those ranked below it; after a
//! shift each half is a monotone sequence with a common box bound, which
//! makes Euclidean projection a clipped isotonic regression.

use std::fmt;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Pair};

/// Largest number of items for which rank regions are enumerated (8! regions).
pub const MAX_ITEMS: usize = 8;

const MAX_REJECTIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportSpec {
    kappa: f64,
    delta: f64,
    misspecified: bool,
}

impl SupportSpec {
    /// Box `[-kappa, kappa]` with pairwise separation `delta`.
    pub fn new(kappa: f64, delta: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidSupport(format!("kappa must be positive, got {kappa}")));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidSupport(format!(
                "delta must be nonnegative, got {delta}"
            )));
        }
        Ok(Self {
            kappa,
            delta,
            misspecified: false,
        })
    }

    /// Box-only support used when the true support is unknown.
    pub fn box_only(bound: f64) -> Result<Self> {
        let mut spec = Self::new(bound, 0.0)?;
        spec.misspecified = true;
        Ok(spec)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Separation actually enforced (zero for the box-only form).
    pub fn delta(&self) -> f64 {
        if self.misspecified {
            0.0
        } else {
            self.delta
        }
    }

    pub fn is_misspecified(&self) -> bool {
        self.misspecified
    }

    /// Checks that every rank region of `num_items` items has a nonempty
    /// interior. Item 1 sits at 0, so when it is ranked first the other
    /// `K - 1` items need `(K - 1) * delta < kappa` of room below it.
    pub fn validate(&self, num_items: usize) -> Result<()> {
        if num_items < 2 {
            return Err(Error::InvalidSupport(format!(
                "need at least 2 items, got {num_items}"
            )));
        }
        let span = (num_items - 1) as f64 * self.delta();
        if span >= self.kappa {
            return Err(Error::InvalidSupport(format!(
                "delta = {} is too large for kappa = {} with {} items: need (K-1)*delta < kappa",
                self.delta, self.kappa, num_items
            )));
        }
        Ok(())
    }

    /// Exact membership test.
    pub fn contains(&self, params: &ModelParams) -> bool {
        self.contains_within(params, 0.0)
    }

    pub fn contains_within(&self, params: &ModelParams, tol: f64) -> bool {
        self.violation(params, tol).is_none()
    }

    /// Describes the first violated constraint, if any.
    pub fn violation(&self, params: &ModelParams, tol: f64) -> Option<String> {
        let s = params.scores();
        for (i, &v) in s.iter().enumerate().skip(1) {
            if v.abs() > self.kappa + tol {
                return Some(format!(
                    "|theta_{}| = {} exceeds kappa = {}",
                    i + 1,
                    v.abs(),
                    self.kappa
                ));
            }
        }
        let delta = self.delta();
        if delta > 0.0 {
            for (i, j) in (0..s.len()).tuple_combinations() {
                let gap = (s[i] - s[j]).abs();
                if gap < delta - tol {
                    return Some(format!(
                        "|theta_{} - theta_{}| = {} is below delta = {}",
                        i + 1,
                        j + 1,
                        gap,
                        delta
                    ));
                }
            }
        }
        None
    }
}

/// `order()[k]` is the item holding rank `k + 1` (rank 1 = highest score).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RankPermutation {
    order: Vec<usize>,
}

impl RankPermutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &item in &order {
            if item >= order.len() || seen[item] {
                return Err(Error::InvalidParams(format!(
                    "{order:?} is not a permutation of 0..{}",
                    order.len()
                )));
            }
            seen[item] = true;
        }
        Ok(Self { order })
    }

    /// From 1-based item labels.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidParams("item labels start at 1".into()));
        }
        Self::new(labels.iter().map(|l| l - 1).collect())
    }

    pub fn identity(num_items: usize) -> Self {
        Self {
            order: (0..num_items).collect(),
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn labels(&self) -> Vec<usize> {
        self.order.iter().map(|i| i + 1).collect()
    }

    pub fn num_items(&self) -> usize {
        self.order.len()
    }

    /// `positions()[item]` is the 0-based rank of `item`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (rank, &item) in self.order.iter().enumerate() {
            pos[item] = rank;
        }
        pos
    }

    /// `R_{i,j}`: whether item `a` is ranked ahead of item `b`.
    pub fn prefers(&self, a: usize, b: usize) -> bool {
        let pa = self.order.iter().position(|&x| x == a);
        let pb = self.order.iter().position(|&x| x == b);
        pa < pb
    }

    /// Pairwise decisions `R_{i,j}` for all pairs in canonical order.
    pub fn decisions(&self) -> Vec<bool> {
        let pos = self.positions();
        Pair::all(self.order.len())
            .map(|p| pos[p.first()] < pos[p.second()])
            .collect()
    }

    pub fn reversed(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Self { order }
    }
}

impl fmt::Display for RankPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.labels().iter().join(","))
    }
}

/// Items sorted by descending score; ties go to the smaller index.
pub fn rank_of(params: &ModelParams) -> RankPermutation {
    let s = params.scores();
    let mut order: Vec<usize> = (0..s.len()).collect();
    // stable sort keeps index order among ties
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    RankPermutation { order }
}

/// Which item of a pair is required to score at least as high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    FirstLarger,
    SecondLarger,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::FirstLarger => Direction::SecondLarger,
            Direction::SecondLarger => Direction::FirstLarger,
        }
    }
}

/// The convex piece of the support on which the rank is a fixed permutation.
///
/// Points are given in free coordinates: `x[i - 1] = theta_i` for `i >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankRegion {
    perm: RankPermutation,
    kappa: f64,
    delta: f64,
    /// Rank position of item 1 (index 0).
    anchor: usize,
}

impl RankRegion {
    pub fn new(spec: &SupportSpec, perm: RankPermutation) -> Self {
        let anchor = perm.order.iter().position(|&i| i == 0).expect("item 0 present");
        Self {
            perm,
            kappa: spec.kappa(),
            delta: spec.delta(),
            anchor,
        }
    }

    pub fn permutation(&self) -> &RankPermutation {
        &self.perm
    }

    pub fn num_items(&self) -> usize {
        self.perm.num_items()
    }

    pub fn dim(&self) -> usize {
        self.perm.num_items() - 1
    }

    /// The region's constraints as `a . x <= b` rows over free coordinates.
    pub fn linear_constraints(&self) -> Vec<(Vec<f64>, f64)> {
        let dim = self.dim();
        let mut rows = Vec::new();
        for w in self.perm.order.windows(2) {
            // theta_hi - theta_lo >= delta  <=>  theta_lo - theta_hi <= -delta
            let (hi, lo) = (w[0], w[1]);
            let mut a = vec![0.0; dim];
            if lo > 0 {
                a[lo - 1] += 1.0;
            }
            if hi > 0 {
                a[hi - 1] -= 1.0;
            }
            rows.push((a, -self.delta));
        }
        for d in 0..dim {
            let mut up = vec![0.0; dim];
            up[d] = 1.0;
            rows.push((up, self.kappa));
            let mut down = vec![0.0; dim];
            down[d] = -1.0;
            rows.push((down, self.kappa));
        }
        rows
    }

    pub fn contains(&self, free: &[f64], tol: f64) -> bool {
        let score = |item: usize| if item == 0 { 0.0 } else { free[item - 1] };
        if free.iter().any(|v| v.abs() > self.kappa + tol) {
            return false;
        }
        self.perm
            .order
            .windows(2)
            .all(|w| score(w[0]) - score(w[1]) >= self.delta - tol)
    }

    /// Euclidean projection onto the region, in place.
    pub fn project(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        let order = &self.perm.order;
        let k = order.len();
        let m = self.anchor;
        let delta = self.delta;
        let mut buf = [0.0f64; MAX_ITEMS];

        // above item 1: y_p = x_p - (m - p) delta, nonincreasing in [0, kappa - m delta]
        if m > 0 {
            for p in 0..m {
                buf[p] = x[order[p] - 1] - (m - p) as f64 * delta;
            }
            isotonic_nonincreasing(&mut buf[..m]);
            let hi = (self.kappa - m as f64 * delta).max(0.0);
            for p in 0..m {
                x[order[p] - 1] = buf[p].clamp(0.0, hi) + (m - p) as f64 * delta;
            }
        }
        // below item 1: y_p = x_p + (p - m) delta, nonincreasing in [-(kappa - (k-1-m) delta), 0]
        let below = k - 1 - m;
        if below > 0 {
            for (slot, p) in (m + 1..k).enumerate() {
                buf[slot] = x[order[p] - 1] + (p - m) as f64 * delta;
            }
            isotonic_nonincreasing(&mut buf[..below]);
            let lo = -(self.kappa - below as f64 * delta).max(0.0);
            for (slot, p) in (m + 1..k).enumerate() {
                x[order[p] - 1] = buf[slot].clamp(lo, 0.0) - (p - m) as f64 * delta;
            }
        }
    }

    /// A deterministic interior point: items evenly spaced on each side of
    /// item 1, with spacing halfway between `delta` and the widest feasible
    /// spacing.
    pub fn center(&self) -> Vec<f64> {
        let order = &self.perm.order;
        let k = order.len();
        let m = self.anchor;
        let below = k - 1 - m;
        let mut x = vec![0.0; k - 1];
        if m > 0 {
            let gap = 0.5 * (self.delta + self.kappa / m as f64);
            for p in 0..m {
                x[order[p] - 1] = (m - p) as f64 * gap;
            }
        }
        if below > 0 {
            let gap = 0.5 * (self.delta + self.kappa / below as f64);
            for p in m + 1..k {
                x[order[p] - 1] = -((p - m) as f64) * gap;
            }
        }
        x
    }

    /// Whether this region lies in the half-space selected by `direction`.
    pub fn satisfies(&self, pair: Pair, direction: Direction) -> bool {
        let first_ahead = self.perm.prefers(pair.first(), pair.second());
        match direction {
            Direction::FirstLarger => first_ahead,
            Direction::SecondLarger => !first_ahead,
        }
    }
}

/// Pool-adjacent-violators fit of a nonincreasing sequence, in place.
fn isotonic_nonincreasing(y: &mut [f64]) {
    let n = y.len();
    if n < 2 {
        return;
    }
    let mut sum = [0.0f64; MAX_ITEMS];
    let mut count = [0usize; MAX_ITEMS];
    let mut blocks = 0;
    for &v in y.iter() {
        sum[blocks] = v;
        count[blocks] = 1;
        blocks += 1;
        while blocks > 1
            && sum[blocks - 2] / (count[blocks - 2] as f64)
                < sum[blocks - 1] / (count[blocks - 1] as f64)
        {
            sum[blocks - 2] += sum[blocks - 1];
            count[blocks - 2] += count[blocks - 1];
            blocks -= 1;
        }
    }
    let mut idx = 0;
    for b in 0..blocks {
        let mean = sum[b] / count[b] as f64;
        for v in &mut y[idx..idx + count[b]] {
            *v = mean;
        }
        idx += count[b];
    }
}

/// All `K!` rank regions in lexicographic permutation order.
pub fn enumerate_regions(spec: &SupportSpec, num_items: usize) -> Result<Vec<RankRegion>> {
    if num_items > MAX_ITEMS {
        return Err(Error::Capacity {
            max: MAX_ITEMS,
            got: num_items,
        });
    }
    spec.validate(num_items)?;
    Ok((0..num_items)
        .permutations(num_items)
        .map(|order| RankRegion::new(spec, RankPermutation { order }))
        .collect())
}

/// Regions whose permutation ranks the `direction` item of `pair` higher.
/// Their union is `W_{i,j}` (or `W_{j,i}`).
pub fn half_space_regions(
    spec: &SupportSpec,
    num_items: usize,
    pair: Pair,
    direction: Direction,
) -> Result<Vec<RankRegion>> {
    Ok(enumerate_regions(spec, num_items)?
        .into_iter()
        .filter(|r| r.satisfies(pair, direction))
        .collect())
}

/// The enumerated rank regions of one support, with per-pair half-space
/// membership. Computed once per experiment and shared read-only.
#[derive(Debug, Clone)]
pub struct RegionSet {
    spec: SupportSpec,
    num_items: usize,
    regions: Vec<RankRegion>,
    /// `first_larger[pair][region]`: region ranks the pair's first item higher.
    first_larger: Vec<Vec<bool>>,
}

impl RegionSet {
    pub fn new(spec: &SupportSpec, num_items: usize) -> Result<Self> {
        let regions = enumerate_regions(spec, num_items)?;
        let first_larger = Pair::all(num_items)
            .map(|pair| {
                regions
                    .iter()
                    .map(|r| r.satisfies(pair, Direction::FirstLarger))
                    .collect()
            })
            .collect();
        Ok(Self {
            spec: *spec,
            num_items,
            regions,
            first_larger,
        })
    }

    pub fn spec(&self) -> &SupportSpec {
        &self.spec
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn regions(&self) -> &[RankRegion] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Whether region `region` lies in the `direction` half-space of the pair
    /// with canonical index `pair_index`.
    pub fn in_half_space(&self, pair_index: usize, region: usize, direction: Direction) -> bool {
        let first = self.first_larger[pair_index][region];
        match direction {
            Direction::FirstLarger => first,
            Direction::SecondLarger => !first,
        }
    }

    /// Index of the region holding `perm`.
    pub fn position(&self, perm: &RankPermutation) -> Option<usize> {
        self.regions.iter().position(|r| r.permutation() == perm)
    }
}

/// Uniform draw from the support by rejection from the bounding box.
pub fn sample_uniform<R: Rng + ?Sized>(
    spec: &SupportSpec,
    num_items: usize,
    rng: &mut R,
) -> Result<ModelParams> {
    spec.validate(num_items)?;
    let kappa = spec.kappa();
    let mut free = vec![0.0; num_items - 1];
    for _ in 0..MAX_REJECTIONS {
        for v in free.iter_mut() {
            *v = rng.random_range(-kappa..=kappa);
        }
        let params = ModelParams::from_free_unchecked(&free);
        if spec.contains(&params) {
            return Ok(params);
        }
    }
    Err(Error::SamplingExhausted {
        attempts: MAX_REJECTIONS,
    })
}

/// Projection of `point` onto `region` (returns a new vector).
pub fn project_to_region(region: &RankRegion, point: &[f64]) -> Vec<f64> {
    let mut x = point.to_vec();
    region.project(&mut x);
    x
}
