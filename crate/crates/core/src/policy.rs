//! The sequential ranking policy: pair selection, stopping and the final
//! decision, plus single-trial execution.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::designsolver::{DesignSolver, SelectionDistribution, SolverConfig};
use crate::error::{Error, Result};
use crate::estimation::{wald_statistics, ComparisonHistory, GlrTable, LikelihoodFit, MleSolver};
use crate::model::{num_pairs, ComparisonModel, ModelParams, Outcome, Pair};
use crate::support::{rank_of, RankPermutation, RegionSet, SupportSpec};

/// Default hard cap on the number of comparisons in one trial.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

/// Stopping threshold `h(c) = |ln c| (1 + |ln c|^-alpha)`.
pub fn h_of_c(c: f64, alpha: f64) -> f64 {
    let l = c.ln().abs();
    l * (1.0 + l.powf(-alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Optimal,
    Uniform,
    Wald,
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Selection::Optimal => "optimal",
            Selection::Uniform => "uniform",
            Selection::Wald => "wald",
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "optimal" => Ok(Selection::Optimal),
            "uniform" | "random" => Ok(Selection::Uniform),
            "wald" => Ok(Selection::Wald),
            _ => Err(Error::config("selection", format!("unknown selection rule {s:?}"))),
        }
    }
}

/// Written as `T1`, `T2` or `fixed(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Stopping {
    T1,
    T2,
    Fixed(u64),
}

impl Stopping {
    pub fn fixed_length(self) -> Option<u64> {
        match self {
            Stopping::Fixed(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Stopping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stopping::T1 => f.write_str("T1"),
            Stopping::T2 => f.write_str("T2"),
            Stopping::Fixed(n) => write!(f, "fixed({n})"),
        }
    }
}

impl FromStr for Stopping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_uppercase().as_str() {
            "T1" => return Ok(Stopping::T1),
            "T2" => return Ok(Stopping::T2),
            _ => {}
        }
        let inner = t
            .strip_prefix("fixed(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::config("stopping", format!("expected T1, T2 or fixed(N), got {s:?}")))?;
        let n: u64 = inner
            .trim()
            .parse()
            .map_err(|_| Error::config("stopping", format!("bad fixed length in {s:?}")))?;
        Ok(Stopping::Fixed(n))
    }
}

impl TryFrom<String> for Stopping {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Stopping> for String {
    fn from(s: Stopping) -> String {
        s.to_string()
    }
}

/// Exploration probability of the epsilon-greedy rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ExploreProb {
    /// `min(0.25, |ln c|^(-1/4))`.
    #[default]
    Auto,
    Fixed(f64),
}

impl ExploreProb {
    pub fn resolve(self, c: f64) -> f64 {
        match self {
            ExploreProb::Auto => c.ln().abs().powf(-0.25).min(0.25),
            ExploreProb::Fixed(p) => p,
        }
    }
}

impl Serialize for ExploreProb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExploreProb::Auto => s.serialize_str("auto"),
            ExploreProb::Fixed(p) => s.serialize_f64(*p),
        }
    }
}

impl<'de> Deserialize<'de> for ExploreProb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(ExploreProb::Fixed(p)),
            Raw::Str(s) if s.eq_ignore_ascii_case("auto") => Ok(ExploreProb::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a probability or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub c: f64,
    pub alpha: f64,
    pub explore_p: ExploreProb,
    pub selection: Selection,
    pub stopping: Stopping,
    pub solver: SolverConfig,
    pub max_steps: u64,
    /// Skip the design solve on exploration steps.
    pub lazy_explore: bool,
}

impl PolicyConfig {
    pub fn new(c: f64, selection: Selection, stopping: Stopping) -> Self {
        Self {
            c,
            alpha: 0.5,
            explore_p: ExploreProb::Auto,
            selection,
            stopping,
            solver: SolverConfig::sequential(),
            max_steps: DEFAULT_MAX_STEPS,
            lazy_explore: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sequential = matches!(self.stopping, Stopping::T1 | Stopping::T2);
        if sequential || self.explore_p == ExploreProb::Auto && self.selection == Selection::Optimal {
            if !(self.c > 0.0 && self.c < 1.0) {
                return Err(Error::config("c", format!("must lie in (0, 1), got {}", self.c)));
            }
        } else if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::config("c", format!("must be nonnegative, got {}", self.c)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if let ExploreProb::Fixed(p) = self.explore_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config("explore_p", format!("must lie in (0, 1], got {p}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if self.stopping == Stopping::Fixed(0) {
            return Err(Error::config("stopping", "fixed length must be at least 1"));
        }
        if self.selection == Selection::Wald && sequential {
            return Err(Error::config("stopping", "the wald rule runs with fixed(N) stopping only"));
        }
        self.solver.validate()
    }

    pub fn threshold(&self) -> f64 {
        h_of_c(self.c, self.alpha)
    }

    pub fn explore_probability(&self) -> f64 {
        self.explore_p.resolve(self.c)
    }
}

/// State carried between steps of one trial.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub history: ComparisonHistory,
    pub step: u64,
    pub mle: ModelParams,
    /// Design weights at `mle`; only kept for the optimal rule.
    pub lambda: Option<SelectionDistribution>,
}

impl PolicyState {
    pub fn new(num_items: usize) -> Self {
        Self {
            history: ComparisonHistory::new(num_items),
            step: 0,
            mle: ModelParams::zeros(num_items),
            lambda: None,
        }
    }
}

/// `p / |A| + (1 - p) lambda`.
pub fn mixed_distribution(lambda: &[f64], p: f64) -> Vec<f64> {
    let floor = p / lambda.len() as f64;
    lambda.iter().map(|w| floor + (1.0 - p) * w).collect()
}

fn uniform_pair<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Pair {
    Pair::from_index(rng.random_range(0..num_pairs(k)), k)
}

fn draw_from<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    match WeightedIndex::new(weights) {
        Ok(dist) => dist.sample(rng),
        Err(_) => rng.random_range(0..weights.len()),
    }
}

/// Draws the next pair according to the configured selection rule.
pub fn select_pair<M: ComparisonModel, R: Rng + ?Sized>(
    model: &M,
    state: &PolicyState,
    config: &PolicyConfig,
    rng: &mut R,
) -> Pair {
    let k = state.history.num_items();
    match config.selection {
        Selection::Uniform => uniform_pair(k, rng),
        Selection::Optimal => {
            let p = config.explore_probability();
            let explore = rng.random::<f64>() < p;
            match (&state.lambda, explore) {
                (Some(lambda), false) => Pair::from_index(draw_from(lambda.weights(), rng), k),
                _ => uniform_pair(k, rng),
            }
        }
        Selection::Wald => match wald_statistics(model, &state.history, &state.mle) {
            Ok(z) => {
                let lo = z.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                let tied: Vec<usize> = (0..z.len()).filter(|&i| z[i].abs() == lo).collect();
                Pair::from_index(tied[rng.random_range(0..tied.len())], k)
            }
            Err(_) => uniform_pair(k, rng),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Rule,
    Truncated,
}

/// Evaluates the stopping rule after `step` comparisons.
///
/// `glr` is only consulted by the T1 and T2 rules and may be `None` otherwise.
pub fn stop_reason(step: u64, config: &PolicyConfig, glr: Option<&GlrTable>) -> Option<StopReason> {
    let rule = match config.stopping {
        Stopping::Fixed(n) => step >= n,
        Stopping::T1 | Stopping::T2 if step <= 1 => false,
        Stopping::T1 => glr.is_some_and(|g| g.t1_log_sum() <= -config.threshold()),
        Stopping::T2 => glr.is_some_and(|g| g.min_statistic() >= config.threshold()),
    };
    if rule {
        Some(StopReason::Rule)
    } else if step >= config.max_steps {
        Some(StopReason::Truncated)
    } else {
        None
    }
}

pub fn should_stop(state: &PolicyState, config: &PolicyConfig, glr: Option<&GlrTable>) -> bool {
    stop_reason(state.step, config, glr).is_some()
}

pub fn final_decision(state: &PolicyState) -> RankPermutation {
    rank_of(&state.mle)
}

/// Number of pairs ordered differently by `decision` and `truth`. Tied pairs
/// in `truth` never count.
pub fn kendall_loss(decision: &RankPermutation, truth: &ModelParams) -> u32 {
    let k = truth.num_items();
    Pair::all(k)
        .filter(|&pair| {
            let d = truth.diff(pair);
            let first = decision.prefers(pair.first(), pair.second());
            (d > 0.0 && !first) || (d < 0.0 && first)
        })
        .count() as u32
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// 1-based item labels.
    pub pair: [usize; 2],
    pub outcome: u8,
    pub min_glr: f64,
    pub t1_log_sum: f64,
    pub mle: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub stopping_time: u64,
    pub decision: RankPermutation,
    pub kendall_loss: u32,
    pub realized_risk: f64,
    pub truncated: bool,
    pub trajectory: Option<Vec<StepRecord>>,
}

/// What an observer sees after each comparison.
#[derive(Debug)]
pub struct StepView<'a> {
    pub step: u64,
    pub pair: Pair,
    pub outcome: Outcome,
    /// Probabilities the pair was drawn from, when the rule has them.
    pub distribution: Option<&'a [f64]>,
    pub fit: Option<&'a LikelihoodFit>,
    pub glr: Option<&'a GlrTable>,
}

/// Shared read-only data for running many trials under one policy support.
#[derive(Debug, Clone)]
pub struct PolicyContext<M> {
    model: M,
    set: Arc<RegionSet>,
}

impl<M: ComparisonModel + Clone> PolicyContext<M> {
    pub fn new(model: M, spec: &SupportSpec, num_items: usize) -> Result<Self> {
        Ok(Self {
            model,
            set: Arc::new(RegionSet::new(spec, num_items)?),
        })
    }

    pub fn from_regions(model: M, set: Arc<RegionSet>) -> Self {
        Self { model, set }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn regions(&self) -> &Arc<RegionSet> {
        &self.set
    }

    pub fn num_items(&self) -> usize {
        self.set.num_items()
    }

    /// Runs one trial against `truth`.
    pub fn run(&self, truth: &ModelParams, config: &PolicyConfig, seed: u64) -> Result<TrialResult> {
        self.run_inner(truth, config, seed, false, |_| {})
    }

    /// Runs one trial and records the per-step trajectory.
    pub fn run_traced(&self, truth: &ModelParams, config: &PolicyConfig, seed: u64) -> Result<TrialResult> {
        let mut log = Vec::new();
        let mut result = self.run_observed(truth, config, seed, |v| {
            let glr = v.glr.expect("traced runs fit every step");
            log.push(StepRecord {
                step: v.step,
                pair: [v.pair.first() + 1, v.pair.second() + 1],
                outcome: v.outcome.value(),
                min_glr: glr.min_statistic(),
                t1_log_sum: glr.t1_log_sum(),
                mle: v.fit.expect("traced runs fit every step").mle().scores().to_vec(),
            });
        })?;
        result.trajectory = Some(log);
        Ok(result)
    }

    /// Runs one trial, calling `observe` after every comparison. The
    /// likelihood is refit at every step so the view always carries a fit.
    pub fn run_observed<F>(
        &self,
        truth: &ModelParams,
        config: &PolicyConfig,
        seed: u64,
        observe: F,
    ) -> Result<TrialResult>
    where
        F: FnMut(&StepView<'_>),
    {
        self.run_inner(truth, config, seed, true, observe)
    }

    // Selection draws and outcomes use separate streams of a ChaCha8
    // generator seeded with `seed`.
    fn run_inner<F>(
        &self,
        truth: &ModelParams,
        config: &PolicyConfig,
        seed: u64,
        fit_always: bool,
        mut observe: F,
    ) -> Result<TrialResult>
    where
        F: FnMut(&StepView<'_>),
    {
        config.validate()?;
        let k = self.num_items();
        if truth.num_items() != k {
            return Err(Error::InvalidParams(format!(
                "truth has {} items, the policy expects {k}",
                truth.num_items()
            )));
        }
        let mut select_rng = ChaCha8Rng::seed_from_u64(seed);
        select_rng.set_stream(0);
        let mut outcome_rng = ChaCha8Rng::seed_from_u64(seed);
        outcome_rng.set_stream(1);

        let model = &self.model;
        let p = config.explore_probability();
        let m = num_pairs(k);
        let fit_each_step = fit_always
            || !matches!(config.stopping, Stopping::Fixed(_))
            || config.selection != Selection::Uniform;

        let mut state = PolicyState::new(k);
        let mut mle_solver = MleSolver::new(Arc::clone(&self.set));
        let mut design: Option<DesignSolver<M>> = None;
        let mut fit: Option<LikelihoodFit> = None;
        let mut mixed: Vec<f64> = Vec::new();

        let reason = loop {
            let pair = if state.step == 0 {
                uniform_pair(k, &mut select_rng)
            } else {
                match config.selection {
                    Selection::Optimal => {
                        let explore = select_rng.random::<f64>() < p;
                        if !(explore && config.lazy_explore) {
                            let solver = design.get_or_insert_with(|| {
                                DesignSolver::new(model.clone(), Arc::clone(&self.set), &state.mle)
                                    .with_inner_options(config.solver.inner)
                            });
                            solver.retarget(&state.mle);
                            let sol = solver.solve(&config.solver, state.lambda.as_ref());
                            state.lambda = Some(sol.lambda);
                        }
                        if let Some(lambda) = &state.lambda {
                            mixed = mixed_distribution(lambda.weights(), p);
                        } else {
                            mixed = vec![1.0 / m as f64; m];
                        }
                        match (&state.lambda, explore) {
                            (Some(lambda), false) => {
                                Pair::from_index(draw_from(lambda.weights(), &mut select_rng), k)
                            }
                            _ => uniform_pair(k, &mut select_rng),
                        }
                    }
                    _ => select_pair(model, &state, config, &mut select_rng),
                }
            };
            let outcome = model.sample_outcome(truth, pair, &mut outcome_rng);
            state.history.record(pair, outcome);
            state.step += 1;

            let glr = if fit_each_step {
                let f = mle_solver.fit(model, &state.history);
                state.mle = f.mle();
                let g = f.glr_table();
                fit = Some(f);
                Some(g)
            } else {
                None
            };
            let distribution = match (state.step, config.selection) {
                (1, _) => None,
                (_, Selection::Optimal) => Some(mixed.as_slice()),
                _ => None,
            };
            observe(&StepView {
                step: state.step,
                pair,
                outcome,
                distribution,
                fit: fit.as_ref(),
                glr: glr.as_ref(),
            });
            if let Some(reason) = stop_reason(state.step, config, glr.as_ref()) {
                break reason;
            }
        };
        if !fit_each_step {
            state.mle = mle_solver.fit(model, &state.history).mle();
        }
        let decision = final_decision(&state);
        let kendall = kendall_loss(&decision, truth);
        Ok(TrialResult {
            stopping_time: state.step,
            realized_risk: kendall as f64 + config.c * state.step as f64,
            decision,
            kendall_loss: kendall,
            truncated: reason == StopReason::Truncated,
            trajectory: None,
        })
    }
}

/// Runs one trial of the policy assuming support `spec`.
pub fn run_trial<M: ComparisonModel + Clone>(
    model: &M,
    truth: &ModelParams,
    spec: &SupportSpec,
    config: &PolicyConfig,
    seed: u64,
) -> Result<TrialResult> {
    PolicyContext::new(model.clone(), spec, truth.num_items())?.run(truth, config, seed)
}
