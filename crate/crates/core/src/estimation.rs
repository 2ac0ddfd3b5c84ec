//! Likelihood, constrained MLE, GLR statistics and Wald statistics.
//!
//! Every supremum of the log-likelihood over the support (or a half-space of
//! it) is taken as a maximum over rank regions. One sweep that maximizes the
//! concave log-likelihood inside each region yields the MLE and all GLR
//! statistics at once.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{num_pairs, ComparisonModel, ModelParams, Outcome, Pair};
use crate::optim::{minimize, PgOptions};
use crate::support::{Direction, RegionSet, SupportSpec};

/// Sufficient statistics of observed outcomes: `wins(i, j)` counts how often
/// item `i` beat item `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonHistory {
    num_items: usize,
    wins: Vec<u64>,
    total: u64,
}

impl ComparisonHistory {
    pub fn new(num_items: usize) -> Self {
        Self {
            num_items,
            wins: vec![0; num_items * num_items],
            total: 0,
        }
    }

    /// From a square win-count matrix with a zero diagonal.
    pub fn from_wins(wins: &[Vec<u64>]) -> Result<Self> {
        let k = wins.len();
        let mut history = Self::new(k);
        for (i, row) in wins.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidParams(format!(
                    "win matrix row {} has {} entries, expected {k}",
                    i + 1,
                    row.len()
                )));
            }
            if row[i] != 0 {
                return Err(Error::InvalidParams(format!(
                    "win matrix diagonal entry {} is nonzero",
                    i + 1
                )));
            }
            for (j, &w) in row.iter().enumerate() {
                history.wins[i * k + j] = w;
                history.total += w;
            }
        }
        Ok(history)
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn record(&mut self, pair: Pair, outcome: Outcome) {
        let (winner, loser) = match outcome {
            Outcome::FirstWins => (pair.first(), pair.second()),
            Outcome::SecondWins => (pair.second(), pair.first()),
        };
        self.wins[winner * self.num_items + loser] += 1;
        self.total += 1;
    }

    pub fn wins(&self, winner: usize, loser: usize) -> u64 {
        self.wins[winner * self.num_items + loser]
    }

    /// `(wins of first, wins of second)` for the pair.
    pub fn pair_counts(&self, pair: Pair) -> (u64, u64) {
        (
            self.wins(pair.first(), pair.second()),
            self.wins(pair.second(), pair.first()),
        )
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Compared pairs as `(i, j, wins_i, wins_j)`.
    fn active_pairs(&self) -> Vec<(usize, usize, f64, f64)> {
        Pair::all(self.num_items)
            .filter_map(|p| {
                let (a, b) = self.pair_counts(p);
                (a + b > 0).then(|| (p.first(), p.second(), a as f64, b as f64))
            })
            .collect()
    }
}

/// `l_n(theta)` from the sufficient statistics.
pub fn log_likelihood<M: ComparisonModel>(
    model: &M,
    history: &ComparisonHistory,
    params: &ModelParams,
) -> f64 {
    Pair::all(history.num_items())
        .map(|p| {
            let (a, b) = history.pair_counts(p);
            let mut l = 0.0;
            if a > 0 {
                l += a as f64 * model.log_pmf(params, p, Outcome::FirstWins);
            }
            if b > 0 {
                l += b as f64 * model.log_pmf(params, p, Outcome::SecondWins);
            }
            l
        })
        .sum()
}

/// Negative log-likelihood over free coordinates and its gradient.
fn neg_log_likelihood<M: ComparisonModel>(
    model: &M,
    active: &[(usize, usize, f64, f64)],
    x: &[f64],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let score = |item: usize| if item == 0 { 0.0 } else { x[item - 1] };
    let mut value = 0.0;
    for &(i, j, a, b) in active {
        let d = score(i) - score(j);
        let mut ddiff = 0.0;
        if a > 0.0 {
            value -= a * model.log_win_diff(d);
            ddiff -= a * model.d_log_win_diff(d);
        }
        if b > 0.0 {
            value -= b * model.log_win_diff(-d);
            ddiff += b * model.d_log_win_diff(-d);
        }
        if i > 0 {
            grad[i - 1] += ddiff;
        }
        if j > 0 {
            grad[j - 1] -= ddiff;
        }
    }
    value
}

fn is_better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + 1e-12 * incumbent.abs().max(1.0)
}

/// Per-region maxima of the log-likelihood.
#[derive(Debug, Clone)]
pub struct LikelihoodFit {
    set: Arc<RegionSet>,
    values: Vec<f64>,
    points: Vec<f64>,
    best: usize,
}

impl LikelihoodFit {
    fn dim(&self) -> usize {
        self.set.num_items() - 1
    }

    pub fn regions(&self) -> &RegionSet {
        &self.set
    }

    /// Constrained maximum of `l_n` in region `r`.
    pub fn region_value(&self, r: usize) -> f64 {
        self.values[r]
    }

    pub fn region_argmax(&self, r: usize) -> &[f64] {
        let d = self.dim();
        &self.points[r * d..(r + 1) * d]
    }

    /// Index of the region holding the MLE (first in lexicographic order on ties).
    pub fn best_region(&self) -> usize {
        self.best
    }

    pub fn mle(&self) -> ModelParams {
        ModelParams::from_free_unchecked(self.region_argmax(self.best))
    }

    pub fn max_value(&self) -> f64 {
        self.values[self.best]
    }

    /// `sup` of `l_n` over the half-space `W_{i,j}` (or `W_{j,i}`); returns the
    /// value and the region attaining it.
    pub fn sup_over_halfspace(&self, pair: Pair, direction: Direction) -> (f64, usize) {
        let pi = pair.index(self.set.num_items());
        let mut best: Option<(f64, usize)> = None;
        for r in 0..self.values.len() {
            if !self.set.in_half_space(pi, r, direction) {
                continue;
            }
            let v = self.values[r];
            match best {
                Some((bv, _)) if !is_better(v, bv) => {}
                _ => best = Some((v, r)),
            }
        }
        best.expect("both half-spaces hold at least one region")
    }

    pub fn glr_table(&self) -> GlrTable {
        let entries = Pair::all(self.set.num_items())
            .map(|pair| {
                let (sup_first, _) = self.sup_over_halfspace(pair, Direction::FirstLarger);
                let (sup_second, _) = self.sup_over_halfspace(pair, Direction::SecondLarger);
                GlrEntry {
                    pair,
                    sup_first,
                    sup_second,
                    statistic: (sup_first - sup_second).abs(),
                }
            })
            .collect();
        GlrTable { entries }
    }
}

/// Region-by-region likelihood maximizer that keeps warm starts between calls.
#[derive(Debug, Clone)]
pub struct MleSolver {
    set: Arc<RegionSet>,
    points: Vec<f64>,
    steps: Vec<f64>,
    opts: PgOptions,
}

impl MleSolver {
    pub fn new(set: Arc<RegionSet>) -> Self {
        let points = set.regions().iter().flat_map(|r| r.center()).collect();
        let steps = vec![1.0; set.len()];
        Self {
            set,
            points,
            steps,
            opts: PgOptions::default(),
        }
    }

    pub fn with_options(mut self, opts: PgOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn regions(&self) -> &Arc<RegionSet> {
        &self.set
    }

    /// Maximizes `l_n` in every region, starting from the previous maxima.
    pub fn fit<M: ComparisonModel>(&mut self, model: &M, history: &ComparisonHistory) -> LikelihoodFit {
        let active = history.active_pairs();
        let dim = self.set.num_items() - 1;
        let mut values = Vec::with_capacity(self.set.len());
        let mut best = 0;
        for (r, region) in self.set.regions().iter().enumerate() {
            let x = &mut self.points[r * dim..(r + 1) * dim];
            let out = minimize(
                |x, g| neg_log_likelihood(model, &active, x, g),
                region,
                x,
                &mut self.steps[r],
                self.opts,
            );
            let value = -out.value;
            if r > 0 && is_better(value, values[best]) {
                best = r;
            }
            values.push(value);
        }
        LikelihoodFit {
            set: Arc::clone(&self.set),
            values,
            points: self.points.clone(),
            best,
        }
    }
}

/// Cold-start fit over all regions of `spec`.
pub fn fit_regions<M: ComparisonModel>(
    model: &M,
    history: &ComparisonHistory,
    spec: &SupportSpec,
) -> Result<LikelihoodFit> {
    let set = Arc::new(RegionSet::new(spec, history.num_items())?);
    Ok(MleSolver::new(set).fit(model, history))
}

/// Maximum-likelihood estimate over the support.
pub fn mle<M: ComparisonModel>(
    model: &M,
    history: &ComparisonHistory,
    spec: &SupportSpec,
) -> Result<ModelParams> {
    Ok(fit_regions(model, history, spec)?.mle())
}

/// `sup` of `l_n` over `W_{i,j}` (`FirstLarger`) or `W_{j,i}`, with a maximizer.
pub fn sup_over_halfspace<M: ComparisonModel>(
    model: &M,
    history: &ComparisonHistory,
    spec: &SupportSpec,
    pair: Pair,
    direction: Direction,
) -> Result<(f64, ModelParams)> {
    let fit = fit_regions(model, history, spec)?;
    let (value, r) = fit.sup_over_halfspace(pair, direction);
    Ok((value, ModelParams::from_free_unchecked(fit.region_argmax(r))))
}

pub fn glr_table<M: ComparisonModel>(
    model: &M,
    history: &ComparisonHistory,
    spec: &SupportSpec,
) -> Result<GlrTable> {
    Ok(fit_regions(model, history, spec)?.glr_table())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlrEntry {
    pub pair: Pair,
    /// `sup` over `W_{i,j}` (first item at least as large).
    pub sup_first: f64,
    /// `sup` over `W_{j,i}`.
    pub sup_second: f64,
    pub statistic: f64,
}

/// GLR statistics for every pair in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrTable {
    entries: Vec<GlrEntry>,
}

impl GlrTable {
    pub fn from_entries(entries: Vec<GlrEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[GlrEntry] {
        &self.entries
    }

    pub fn statistics(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.statistic).collect()
    }

    pub fn min_statistic(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.statistic)
            .fold(f64::INFINITY, f64::min)
    }

    /// `ln sum exp(-GLR_ij)`, the log of the T1 stopping sum.
    pub fn t1_log_sum(&self) -> f64 {
        let lo = self.min_statistic();
        let s: f64 = self.entries.iter().map(|e| (lo - e.statistic).exp()).sum();
        -lo + s.ln()
    }
}

/// Wald statistics `Z_ij = (theta_i - theta_j) / se` for every pair, with the
/// standard error from the inverse Fisher information over `theta_2..theta_K`.
///
/// For BTL the information `sum n_ij p(1-p) (e_i - e_j)(e_i - e_j)^T` does
/// not depend on the outcomes, so observed and expected information agree.
pub fn wald_statistics<M: ComparisonModel>(
    model: &M,
    history: &ComparisonHistory,
    estimate: &ModelParams,
) -> Result<Vec<f64>> {
    let k = history.num_items();
    if history.is_empty() || !is_connected(history) {
        return Err(Error::Underdetermined);
    }
    let dim = k - 1;
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    for pair in Pair::all(k) {
        let (a, b) = history.pair_counts(pair);
        let n = (a + b) as f64;
        if n == 0.0 {
            continue;
        }
        let d = estimate.diff(pair);
        let p = model.win_probability_diff(d);
        let dp = p * model.d_log_win_diff(d);
        let w = n * dp * dp / (p * (1.0 - p));
        let (i, j) = (pair.first(), pair.second());
        if i > 0 {
            info[(i - 1, i - 1)] += w;
        }
        if j > 0 {
            info[(j - 1, j - 1)] += w;
        }
        if i > 0 && j > 0 {
            info[(i - 1, j - 1)] -= w;
            info[(j - 1, i - 1)] -= w;
        }
    }
    let cov = info.cholesky().ok_or(Error::Underdetermined)?.inverse();
    let mut z = Vec::with_capacity(num_pairs(k));
    for pair in Pair::all(k) {
        let (i, j) = (pair.first(), pair.second());
        let var = match (i, j) {
            (0, j) => cov[(j - 1, j - 1)],
            (i, j) => cov[(i - 1, i - 1)] + cov[(j - 1, j - 1)] - 2.0 * cov[(i - 1, j - 1)],
        };
        if !(var.is_finite() && var > 0.0) {
            return Err(Error::Underdetermined);
        }
        z.push(estimate.diff(pair) / var.sqrt());
    }
    Ok(z)
}

fn is_connected(history: &ComparisonHistory) -> bool {
    let k = history.num_items();
    let mut seen = vec![false; k];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..k {
            if !seen[v] && history.wins(u, v) + history.wins(v, u) > 0 {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Btl;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> SupportSpec {
        SupportSpec::new(2.0, 0.4).unwrap()
    }

    fn seven_three() -> ComparisonHistory {
        ComparisonHistory::from_wins(&[vec![0, 7], vec![3, 0]]).unwrap()
    }

    fn p12() -> Pair {
        Pair::new(0, 1).unwrap()
    }

    /// Exhaustive 1-D grid maximization over `[lo, hi]`, for K = 2.
    fn grid_max_k2(history: &ComparisonHistory, lo: f64, hi: f64, step: f64) -> (f64, f64) {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n)
            .map(|t| {
                let x = lo + (hi - lo) * t as f64 / n as f64;
                let l = log_likelihood(&Btl, history, &ModelParams::from_free(&[x]).unwrap());
                (l, x)
            })
            .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a })
    }

    #[test]
    fn history_bookkeeping() {
        let mut h = ComparisonHistory::new(3);
        let p = Pair::new(1, 2).unwrap();
        h.record(p, Outcome::FirstWins);
        h.record(p, Outcome::SecondWins);
        h.record(p, Outcome::FirstWins);
        assert_eq!(h.pair_counts(p), (2, 1));
        assert_eq!(h.total(), 3);
        assert!(ComparisonHistory::from_wins(&[vec![1, 0], vec![0, 0]]).is_err());
    }

    #[test]
    fn log_likelihood_examples() {
        let empty = ComparisonHistory::new(3);
        assert_eq!(log_likelihood(&Btl, &empty, &ModelParams::zeros(3)), 0.0);
        let th = ModelParams::from_free(&[(3.0f64 / 7.0).ln()]).unwrap();
        let l = log_likelihood(&Btl, &seven_three(), &th);
        let expected = 7.0 * 0.7f64.ln() + 3.0 * 0.3f64.ln();
        assert!((l - expected).abs() < 1e-12);
        assert!((l + 6.1086).abs() < 1e-4);
    }

    #[test]
    fn log_likelihood_matches_streaming_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k = rng.random_range(2..=5);
            let free: Vec<f64> = (0..k - 1).map(|_| rng.random_range(-3.0..3.0)).collect();
            let th = ModelParams::from_free(&free).unwrap();
            let mut h = ComparisonHistory::new(k);
            let mut streaming = 0.0;
            for _ in 0..rng.random_range(0..60) {
                let pair = Pair::from_index(rng.random_range(0..num_pairs(k)), k);
                let outcome = if rng.random_bool(0.5) {
                    Outcome::FirstWins
                } else {
                    Outcome::SecondWins
                };
                streaming += Btl.log_pmf(&th, pair, outcome);
                h.record(pair, outcome);
            }
            assert!((log_likelihood(&Btl, &h, &th) - streaming).abs() < 1e-10);
        }
    }

    #[test]
    fn mle_interior_k2() {
        let est = mle(&Btl, &seven_three(), &spec()).unwrap();
        let (_, grid_x) = grid_max_k2(&seven_three(), -2.0, -0.4, 1e-4);
        assert!((est.free()[0] - (3.0f64 / 7.0).ln()).abs() < 1e-6);
        assert!((est.free()[0] - grid_x).abs() < 2e-4);
    }

    #[test]
    fn mle_boundary_tie_picks_first_region() {
        let h = ComparisonHistory::from_wins(&[vec![0, 5], vec![5, 0]]).unwrap();
        let est = mle(&Btl, &h, &spec()).unwrap();
        assert!((est.free()[0] + 0.4).abs() < 1e-9, "{:?}", est);
    }

    #[test]
    fn mle_empty_history_is_first_region_center() {
        let set = RegionSet::new(&spec(), 3).unwrap();
        let est = mle(&Btl, &ComparisonHistory::new(3), &spec()).unwrap();
        assert_eq!(est.free(), &set.regions()[0].center()[..]);
    }

    #[test]
    fn halfspace_sup_k2() {
        let (v, arg) =
            sup_over_halfspace(&Btl, &seven_three(), &spec(), p12(), Direction::SecondLarger).unwrap();
        assert!((arg.free()[0] - 0.4).abs() < 1e-9);
        let expected = 7.0 * logistic_at(-0.4).ln() + 3.0 * logistic_at(0.4).ln();
        assert!((v - expected).abs() < 1e-9);
        assert!((v + 7.9301).abs() < 1e-4);
        let (grid_v, _) = grid_max_k2(&seven_three(), 0.4, 2.0, 1e-4);
        assert!((v - grid_v).abs() < 1e-9);

        let (own, _) =
            sup_over_halfspace(&Btl, &seven_three(), &spec(), p12(), Direction::FirstLarger).unwrap();
        let at_mle = log_likelihood(&Btl, &seven_three(), &mle(&Btl, &seven_three(), &spec()).unwrap());
        assert!((own - at_mle).abs() < 1e-12);
    }

    fn logistic_at(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn glr_examples() {
        let table = glr_table(&Btl, &seven_three(), &spec()).unwrap();
        assert!((table.min_statistic() - 1.8215).abs() < 1e-4);
        let empty = glr_table(&Btl, &ComparisonHistory::new(3), &spec()).unwrap();
        assert!(empty.statistics().iter().all(|&g| g == 0.0));

        let sym = ComparisonHistory::from_wins(&[vec![0, 4, 2], vec![4, 0, 3], vec![2, 3, 0]]).unwrap();
        let boxed = SupportSpec::new(2.0, 0.0).unwrap();
        let table = glr_table(&Btl, &sym, &boxed).unwrap();
        assert!(table.statistics().iter().all(|&g| g < 1e-8), "{:?}", table);
    }

    #[test]
    fn t1_log_sum_is_log_sum_exp() {
        let table = GlrTable {
            entries: [1.0, 2.0, 400.0]
                .iter()
                .enumerate()
                .map(|(i, &g)| GlrEntry {
                    pair: Pair::from_index(i, 3),
                    sup_first: 0.0,
                    sup_second: -g,
                    statistic: g,
                })
                .collect(),
        };
        let direct = ((-1.0f64).exp() + (-2.0f64).exp() + (-400.0f64).exp()).ln();
        assert!((table.t1_log_sum() - direct).abs() < 1e-12);
        let far = GlrTable {
            entries: vec![GlrEntry {
                pair: p12(),
                sup_first: 0.0,
                sup_second: -2000.0,
                statistic: 2000.0,
            }],
        };
        assert_eq!(far.t1_log_sum(), -2000.0);
    }

    #[test]
    fn wald_examples() {
        let h = seven_three();
        let est = mle(&Btl, &h, &spec()).unwrap();
        let z = wald_statistics(&Btl, &h, &est).unwrap();
        // info = 10 * 0.21, se = 1/sqrt(2.1); Z_12 = (theta_1 - theta_2) / se
        let expected = -(3.0f64 / 7.0).ln() * 2.1f64.sqrt();
        assert!((z[0] - expected).abs() < 1e-6);
        assert!((z[0].abs() - 1.2278).abs() < 1e-4);

        let h4 = ComparisonHistory::from_wins(&[vec![0, 28], vec![12, 0]]).unwrap();
        let est4 = mle(&Btl, &h4, &spec()).unwrap();
        let z4 = wald_statistics(&Btl, &h4, &est4).unwrap();
        assert!((z4[0] / z[0] - 2.0).abs() < 1e-6);

        let mut partial = ComparisonHistory::new(3);
        partial.record(p12(), Outcome::FirstWins);
        partial.record(p12(), Outcome::SecondWins);
        assert!(matches!(
            wald_statistics(&Btl, &partial, &ModelParams::zeros(3)),
            Err(Error::Underdetermined)
        ));
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let set = Arc::new(RegionSet::new(&spec(), 3).unwrap());
        let truth = ModelParams::from_free(&[1.0, -1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut warm = MleSolver::new(Arc::clone(&set));
        let mut h = ComparisonHistory::new(3);
        for step in 0..120 {
            let pair = Pair::from_index(rng.random_range(0..3), 3);
            h.record(pair, Btl.sample_outcome(&truth, pair, &mut rng));
            let fit = warm.fit(&Btl, &h);
            if step % 20 == 19 {
                let cold = MleSolver::new(Arc::clone(&set)).fit(&Btl, &h);
                for r in 0..set.len() {
                    assert!((fit.region_value(r) - cold.region_value(r)).abs() < 1e-6);
                }
                let diff = fit
                    .mle()
                    .free()
                    .iter()
                    .zip(cold.mle().free())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-6, "{diff}");
            }
        }
    }

    #[test]
    fn region_optimum_is_start_independent() {
        let set = RegionSet::new(&spec(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let mut h = ComparisonHistory::new(3);
            for _ in 0..rng.random_range(1..40) {
                let pair = Pair::from_index(rng.random_range(0..3), 3);
                let o = if rng.random_bool(0.6) {
                    Outcome::FirstWins
                } else {
                    Outcome::SecondWins
                };
                h.record(pair, o);
            }
            let active = h.active_pairs();
            for region in set.regions() {
                let values: Vec<f64> = (0..5)
                    .map(|_| {
                        let mut x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
                        let mut step = 1.0;
                        -minimize(
                            |x, g| neg_log_likelihood(&Btl, &active, x, g),
                            region,
                            &mut x,
                            &mut step,
                            PgOptions::default(),
                        )
                        .value
                    })
                    .collect();
                let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - values.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(spread < 1e-7, "{values:?}");
            }
        }
    }

    #[test]
    fn consistency_under_uniform_sampling() {
        // In two free dimensions the chance that the n = 2000 error beats the
        // n = 200 error is only about 0.92, so the check runs with K = 4.
        let k4 = SupportSpec::new(4.0, 0.2).unwrap();
        let set = Arc::new(RegionSet::new(&k4, 4).unwrap());
        let truth = ModelParams::from_free(&[1.2, -0.9, 2.4]).unwrap();
        let err = |p: &ModelParams| {
            p.free()
                .iter()
                .zip(truth.free())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut improved = 0;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut h = ComparisonHistory::new(4);
            let mut early = 0.0;
            for n in 1..=2000 {
                let pair = Pair::from_index(rng.random_range(0..6), 4);
                h.record(pair, Btl.sample_outcome(&truth, pair, &mut rng));
                if n == 200 {
                    early = err(&MleSolver::new(Arc::clone(&set)).fit(&Btl, &h).mle());
                }
            }
            let late = err(&MleSolver::new(Arc::clone(&set)).fit(&Btl, &h).mle());
            if late < early {
                improved += 1;
            }
        }
        assert!(improved >= 190, "{improved}/200");
    }

    fn arb_history() -> impl Strategy<Value = ComparisonHistory> {
        proptest::collection::vec(0u64..6, 9).prop_map(|w| {
            let mut m = vec![vec![0u64; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        m[i][j] = w[i * 3 + j];
                    }
                }
            }
            ComparisonHistory::from_wins(&m).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn halfspace_sups_are_dominated_by_the_mle(h in arb_history()) {
            let fit = fit_regions(&Btl, &h, &spec()).unwrap();
            let top = fit.max_value();
            let at_mle = log_likelihood(&Btl, &h, &fit.mle());
            prop_assert!((top - at_mle).abs() < 1e-9);
            prop_assert!(spec().contains_within(&fit.mle(), 1e-9));
            for e in fit.glr_table().entries() {
                prop_assert!(e.sup_first <= top + 1e-9);
                prop_assert!(e.sup_second <= top + 1e-9);
                prop_assert!((e.sup_first.max(e.sup_second) - top).abs() < 1e-9);
                prop_assert!(e.statistic >= 0.0);
            }
        }
    }
}
