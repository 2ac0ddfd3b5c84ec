//! The max-min selection design `D(theta)` and its maximizer `lambda*(theta)`.
//!
//! The outer problem over the simplex is solved by entropic mirror descent.
//! The inner problem, the least distinguishable parameter with a different
//! rank, is a convex minimization inside each rank region other than the
//! region of `theta`, solved by projected gradient descent with warm starts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{num_pairs, ComparisonModel, ModelParams, Pair};
use crate::optim::{minimize, PgOptions};
use crate::support::{rank_of, RegionSet, SupportSpec};

/// Weights below this are raised before each multiplicative update.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Below this `D(theta)` is treated as zero.
pub const INDISTINGUISHABLE: f64 = 1e-10;

/// A probability vector over the canonical pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDistribution {
    weights: Vec<f64>,
}

impl SelectionDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParams("empty selection distribution".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParams(format!(
                "selection weights must be finite and nonnegative: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "selection weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(num_pairs: usize) -> Self {
        Self {
            weights: vec![1.0 / num_pairs as f64; num_pairs],
        }
    }

    pub fn point_mass(num_pairs: usize, index: usize) -> Self {
        let mut weights = vec![0.0; num_pairs];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of mirror-descent iterations `m`.
    pub iters: usize,
    /// Step constant: `eta_t = c0 / sqrt(t)`.
    pub c0: f64,
    /// Settings of the projected-gradient inner solves.
    pub inner: PgOptions,
}

impl SolverConfig {
    /// Accuracy-oriented settings for one-off solves.
    pub fn standalone() -> Self {
        Self {
            iters: 2000,
            c0: 1.0,
            inner: PgOptions::default(),
        }
    }

    /// Settings used at every step of the sequential policy.
    pub fn sequential() -> Self {
        Self {
            iters: 400,
            c0: 1.0,
            inner: PgOptions {
                tol: 1e-6,
                ..PgOptions::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::config("solver.iters", "must be at least 1"));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(Error::config("solver.c0", "must be positive"));
        }
        if !(self.inner.tol.is_finite() && self.inner.tol > 0.0) {
            return Err(Error::config("solver.inner.tol", "must be positive"));
        }
        if self.inner.max_iter == 0 {
            return Err(Error::config("solver.inner.max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::standalone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    /// Averaged iterate.
    pub lambda: SelectionDistribution,
    /// Inner-minimum value at `lambda`: the estimate of `D(theta)`.
    pub value: f64,
    /// Certified bound `upper - lower` on the suboptimality of the best
    /// iterate, from the averaged supergradients.
    pub gap: f64,
    pub iterations: usize,
    /// Inner minimizer at `lambda`.
    pub confuser: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerMin {
    pub value: f64,
    /// Index into the region set.
    pub region: usize,
    pub argmin: ModelParams,
}

/// Exponentiated-gradient step `lambda_ij <- lambda_ij exp(-eta g_ij) / C`.
pub fn multiplicative_update(lambda: &[f64], subgradient: &[f64], eta: f64) -> Vec<f64> {
    let mut next = lambda.to_vec();
    multiplicative_update_in_place(&mut next, subgradient, eta);
    next
}

fn multiplicative_update_in_place(lambda: &mut [f64], subgradient: &[f64], eta: f64) {
    // shift exponents by their max so nothing overflows
    let shift = subgradient
        .iter()
        .map(|g| -eta * g)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, g) in lambda.iter_mut().zip(subgradient) {
        *w = w.max(WEIGHT_FLOOR) * (-eta * g - shift).exp();
        total += *w;
    }
    for w in lambda.iter_mut() {
        *w /= total;
    }
}

/// Inner and outer solver for one `theta`, keeping per-region warm starts.
///
/// The policy keeps one of these per trial and calls [`DesignSolver::retarget`]
/// as the MLE moves.
#[derive(Debug, Clone)]
pub struct DesignSolver<M> {
    model: M,
    set: Arc<RegionSet>,
    theta: ModelParams,
    /// `(i, j, p, ln F(d), ln F(-d))` per canonical pair.
    pairs: Vec<(usize, usize, f64, f64, f64)>,
    alternatives: Vec<usize>,
    points: Vec<f64>,
    steps: Vec<f64>,
    inner_opts: PgOptions,
}

impl<M: ComparisonModel + Clone> DesignSolver<M> {
    pub fn new(model: M, set: Arc<RegionSet>, theta: &ModelParams) -> Self {
        let points = set.regions().iter().flat_map(|r| r.center()).collect();
        let steps = vec![1.0; set.len()];
        let mut solver = Self {
            model,
            set,
            theta: theta.clone(),
            pairs: Vec::new(),
            alternatives: Vec::new(),
            points,
            steps,
            inner_opts: PgOptions::default(),
        };
        solver.retarget(theta);
        solver
    }

    pub fn with_inner_options(mut self, opts: PgOptions) -> Self {
        self.inner_opts = opts;
        self
    }

    pub fn theta(&self) -> &ModelParams {
        &self.theta
    }

    /// Switches to a new `theta`, keeping warm starts.
    pub fn retarget(&mut self, theta: &ModelParams) {
        let k = self.set.num_items();
        assert_eq!(theta.num_items(), k, "theta has the wrong number of items");
        self.theta = theta.clone();
        self.pairs = Pair::all(k)
            .map(|pair| {
                let d = theta.diff(pair);
                (
                    pair.first(),
                    pair.second(),
                    self.model.win_probability_diff(d),
                    self.model.log_win_diff(d),
                    self.model.log_win_diff(-d),
                )
            })
            .collect();
        let own = rank_of(theta);
        self.alternatives = (0..self.set.len())
            .filter(|&r| self.set.regions()[r].permutation() != &own)
            .collect();
    }

    fn region_point(&self, r: usize) -> &[f64] {
        let d = self.set.num_items() - 1;
        &self.points[r * d..(r + 1) * d]
    }

    /// Per-pair KL divergences `D^{ij}(theta || alt)` at free coordinates `x`.
    fn kl_vector(&self, x: &[f64], out: &mut [f64]) {
        let score = |item: usize| if item == 0 { 0.0 } else { x[item - 1] };
        for (o, &(i, j, p, lw, ll)) in out.iter_mut().zip(&self.pairs) {
            let a = score(i) - score(j);
            let kl = p * (lw - self.model.log_win_diff(a)) + (1.0 - p) * (ll - self.model.log_win_diff(-a));
            *o = kl.max(0.0);
        }
    }

    /// Minimizes `sum lambda_ij D^{ij}(theta || alt)` over alternatives with a
    /// different rank. Ties between regions go to the earlier region.
    pub fn inner_min(&mut self, lambda: &[f64]) -> InnerMin {
        let (value, region) = self.inner_value(lambda);
        InnerMin {
            value,
            region,
            argmin: ModelParams::from_free_unchecked(self.region_point(region)),
        }
    }

    fn inner_value(&mut self, lambda: &[f64]) -> (f64, usize) {
        self.inner_value_pruned(lambda, None)
    }

    /// Inner minimum over the alternatives. With `bounds`, region `r` is
    /// skipped when `bounds[r]` (a lower bound on its minimum) already exceeds
    /// the best value found, and solved regions refresh their bound.
    fn inner_value_pruned(&mut self, lambda: &[f64], mut bounds: Option<&mut [f64]>) -> (f64, usize) {
        let dim = self.set.num_items() - 1;
        let model = &self.model;
        let pairs = &self.pairs;
        let mut best: Option<(f64, usize)> = None;
        for &r in &self.alternatives {
            if let (Some(b), Some((bv, _))) = (bounds.as_deref(), best) {
                if b[r] * (1.0 - 1e-9) > bv + 1e-14 {
                    continue;
                }
            }
            let region = &self.set.regions()[r];
            let x = &mut self.points[r * dim..(r + 1) * dim];
            let out = minimize(
                |x, grad| weighted_kl(model, pairs, lambda, x, grad),
                region,
                x,
                &mut self.steps[r],
                self.inner_opts,
            );
            if let Some(b) = bounds.as_deref_mut() {
                b[r] = out.value.max(0.0);
            }
            match best {
                Some((bv, _)) if out.value >= bv - 1e-15 => {}
                _ => best = Some((out.value, r)),
            }
        }
        let (value, region) = best.expect("at least one alternative region");
        (value.max(0.0), region)
    }

    /// Mirror descent from `start` (uniform when `None`).
    pub fn solve(&mut self, cfg: &SolverConfig, start: Option<&SelectionDistribution>) -> DesignSolution {
        let n = num_pairs(self.set.num_items());
        let mut lambda = match start {
            Some(s) if s.len() == n => s.weights().to_vec(),
            _ => vec![1.0 / n as f64; n],
        };
        let mut avg = vec![0.0; n];
        let mut avg_sub = vec![0.0; n];
        let mut sub = vec![0.0; n];
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        let iters = cfg.iters.max(1);
        let mut bounds = vec![0.0; self.set.len()];
        let mut previous = vec![0.0; n];

        for t in 1..=iters {
            let (value, region) = self.inner_value_pruned(&lambda, Some(&mut bounds));
            lower = lower.max(value);
            let point = self.region_point(region).to_vec();
            self.kl_vector(&point, &mut sub);
            upper = upper.min(sub.iter().cloned().fold(0.0, f64::max));
            for (a, s) in avg_sub.iter_mut().zip(&sub) {
                *a += s;
            }
            // g = -KL, so the update multiplies by exp(eta * KL)
            let eta = cfg.c0 / (t as f64).sqrt();
            for s in sub.iter_mut() {
                *s = -*s;
            }
            previous.copy_from_slice(&lambda);
            multiplicative_update_in_place(&mut lambda, &sub, eta);
            // sum lambda' KL >= min(lambda'/lambda) sum lambda KL pointwise
            let ratio = lambda
                .iter()
                .zip(&previous)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&w1, &w0)| w1 / w0)
                .fold(f64::INFINITY, f64::min);
            for b in bounds.iter_mut() {
                *b *= ratio;
            }
            for (a, w) in avg.iter_mut().zip(&lambda) {
                *a += w;
            }
        }
        for a in avg.iter_mut() {
            *a /= iters as f64;
        }
        let total: f64 = avg.iter().sum();
        for a in avg.iter_mut() {
            *a /= total;
        }
        let averaged_upper = avg_sub.iter().map(|s| s / iters as f64).fold(0.0, f64::max);
        upper = upper.min(averaged_upper);

        let final_min = self.inner_min(&avg);
        lower = lower.max(final_min.value);
        DesignSolution {
            lambda: SelectionDistribution { weights: avg },
            value: final_min.value,
            gap: (upper - lower).max(0.0),
            iterations: iters,
            confuser: final_min.argmin,
        }
    }
}

fn weighted_kl<M: ComparisonModel>(
    model: &M,
    pairs: &[(usize, usize, f64, f64, f64)],
    lambda: &[f64],
    x: &[f64],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let score = |item: usize| if item == 0 { 0.0 } else { x[item - 1] };
    let mut value = 0.0;
    for (&(i, j, p, lw, ll), &w) in pairs.iter().zip(lambda) {
        if w == 0.0 {
            continue;
        }
        let a = score(i) - score(j);
        value += w * (p * (lw - model.log_win_diff(a)) + (1.0 - p) * (ll - model.log_win_diff(-a)));
        let d = w * (-p * model.d_log_win_diff(a) + (1.0 - p) * model.d_log_win_diff(-a));
        if i > 0 {
            grad[i - 1] += d;
        }
        if j > 0 {
            grad[j - 1] -= d;
        }
    }
    value
}

fn check_theta(theta: &ModelParams, spec: &SupportSpec) -> Result<()> {
    match spec.violation(theta, 1e-6) {
        Some(msg) => Err(Error::InvalidParams(format!("theta outside the support: {msg}"))),
        None => Ok(()),
    }
}

/// Inner minimization at a fixed `lambda`: returns the minimizer and value.
pub fn inner_min<M: ComparisonModel + Clone>(
    model: &M,
    theta: &ModelParams,
    lambda: &SelectionDistribution,
    spec: &SupportSpec,
) -> Result<(ModelParams, f64)> {
    check_theta(theta, spec)?;
    let set = Arc::new(RegionSet::new(spec, theta.num_items())?);
    let mut solver = DesignSolver::new(model.clone(), set, theta);
    let out = solver.inner_min(lambda.weights());
    Ok((out.argmin, out.value))
}

pub fn mirror_descent<M: ComparisonModel + Clone>(
    model: &M,
    theta: &ModelParams,
    spec: &SupportSpec,
    cfg: &SolverConfig,
) -> Result<DesignSolution> {
    check_theta(theta, spec)?;
    cfg.validate()?;
    let set = Arc::new(RegionSet::new(spec, theta.num_items())?);
    let mut solver = DesignSolver::new(model.clone(), set, theta).with_inner_options(cfg.inner);
    Ok(solver.solve(cfg, None))
}

/// `D(theta)`.
pub fn d_value<M: ComparisonModel + Clone>(
    model: &M,
    theta: &ModelParams,
    spec: &SupportSpec,
    cfg: &SolverConfig,
) -> Result<f64> {
    Ok(mirror_descent(model, theta, spec, cfg)?.value)
}

/// `|ln c| / D` with the indistinguishability guard.
pub fn t_c_from_d(c: f64, d: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParams(format!("cost must lie in (0, 1), got {c}")));
    }
    if !(d > INDISTINGUISHABLE) {
        return Err(Error::Indistinguishable { value: d });
    }
    Ok(c.ln().abs() / d)
}

/// `t_c(theta) = |ln c| / D(theta)`.
pub fn t_c<M: ComparisonModel + Clone>(
    model: &M,
    theta: &ModelParams,
    c: f64,
    spec: &SupportSpec,
    cfg: &SolverConfig,
) -> Result<f64> {
    t_c_from_d(c, d_value(model, theta, spec, cfg)?)
}
