//! TOML run configuration and its resolution into core types.

use std::path::Path;

use serde::{Deserialize, Serialize};

use seqrank_core::designsolver::SolverConfig;
use seqrank_core::policy::{ExploreProb, PolicyConfig, Selection, Stopping, DEFAULT_MAX_STEPS};
use seqrank_core::simulation::{parse_cost, ExperimentSpec, PolicySpec, StudyKind};
use seqrank_core::support::SupportSpec;
use seqrank_core::PgOptions;

use crate::error::CliError;

/// A cost written either as a number or as text such as `"2^-10"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostValue {
    Number(f64),
    Text(String),
}

impl CostValue {
    pub fn resolve(&self, field: &str) -> Result<f64, CliError> {
        let c = match self {
            CostValue::Number(c) => *c,
            CostValue::Text(t) => parse_cost(t).map_err(|e| CliError::validation(field, e.to_string()))?,
        };
        if !(c > 0.0 && c < 1.0) {
            return Err(CliError::validation(field, format!("cost must lie in (0, 1), got {c}")));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSection {
    pub kappa: Option<f64>,
    pub delta: Option<f64>,
    /// Box-only support `|theta_i| <= box_bound` with no separation.
    pub box_bound: Option<f64>,
}

impl SupportSection {
    fn resolve(&self, field: &str, default: SupportSpec) -> Result<SupportSpec, CliError> {
        let spec = match (self.box_bound, self.kappa, self.delta) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(CliError::validation(field, "give either box_bound or kappa/delta, not both"));
            }
            (Some(m), None, None) => SupportSpec::box_only(m),
            (None, None, None) => return Ok(default),
            (None, kappa, delta) => SupportSpec::new(
                kappa.unwrap_or(default.kappa()),
                delta.unwrap_or(default.delta()),
            ),
        };
        spec.map_err(|e| CliError::validation(field, e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub iters: Option<usize>,
    pub c0: Option<f64>,
    pub inner_tol: Option<f64>,
    pub inner_max_iter: Option<usize>,
}

impl SolverSection {
    fn resolve(&self, field: &str, base: SolverConfig) -> Result<SolverConfig, CliError> {
        let cfg = SolverConfig {
            iters: self.iters.unwrap_or(base.iters),
            c0: self.c0.unwrap_or(base.c0),
            inner: PgOptions {
                tol: self.inner_tol.unwrap_or(base.inner.tol),
                max_iter: self.inner_max_iter.unwrap_or(base.inner.max_iter),
            },
        };
        cfg.validate().map_err(|e| CliError::nested(field, e))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub alpha: Option<f64>,
    pub explore_p: Option<ExploreProb>,
    pub max_steps: Option<u64>,
    pub lazy_explore: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub selection: Selection,
    pub stopping: Stopping,
}

/// Settings for `single-trial`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSection {
    pub selection: Option<Selection>,
    pub stopping: Option<Stopping>,
    pub c: Option<CostValue>,
    /// Free coordinates `theta_2..theta_K`; drawn from the prior when absent.
    pub theta: Option<Vec<f64>>,
}

/// Settings for `solve-design`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub study: Option<String>,
    pub num_items: Option<usize>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub costs: Option<Vec<CostValue>>,
    pub tc_samples: Option<usize>,
    pub threads: Option<usize>,
    pub policies: Option<Vec<PolicyEntry>>,
    pub baselines: Option<Vec<Selection>>,
    pub fixed_lengths: Option<Vec<u64>>,
    #[serde(default)]
    pub support: SupportSection,
    #[serde(default)]
    pub policy_support: SupportSection,
    #[serde(default)]
    pub policy: PolicySection,
    /// Per-step design solver.
    #[serde(default)]
    pub solver: SolverSection,
    /// Standalone design solver (`E t_c`, `solve-design`).
    #[serde(default)]
    pub design_solver: SolverSection,
    #[serde(default)]
    pub trial: TrialSection,
    #[serde(default)]
    pub design: DesignSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(e.to_string().trim_end().to_string()))
    }

    pub fn num_items(&self) -> Result<usize, CliError> {
        let k = self.num_items.unwrap_or(3);
        if k < 2 {
            return Err(CliError::validation("num_items", format!("must be at least 2, got {k}")));
        }
        Ok(k)
    }

    pub fn support_true(&self) -> Result<SupportSpec, CliError> {
        let default = SupportSpec::new(2.0, 0.4).expect("valid default support");
        let spec = self.support.resolve("support", default)?;
        spec.validate(self.num_items()?)
            .map_err(|e| CliError::validation("support", e.to_string()))?;
        Ok(spec)
    }

    pub fn support_policy(&self) -> Result<SupportSpec, CliError> {
        let truth = self.support_true()?;
        let spec = self.policy_support.resolve("policy_support", truth)?;
        spec.validate(self.num_items()?)
            .map_err(|e| CliError::validation("policy_support", e.to_string()))?;
        Ok(spec)
    }

    pub fn costs(&self) -> Result<Option<Vec<f64>>, CliError> {
        self.costs
            .as_ref()
            .map(|list| {
                list.iter()
                    .enumerate()
                    .map(|(i, c)| c.resolve(&format!("costs[{i}]")))
                    .collect()
            })
            .transpose()
    }

    pub fn sequential_solver(&self) -> Result<SolverConfig, CliError> {
        self.solver.resolve("solver", SolverConfig::sequential())
    }

    pub fn standalone_solver(&self) -> Result<SolverConfig, CliError> {
        self.design_solver.resolve("design_solver", SolverConfig::standalone())
    }

    /// Shared trial settings with `c`, `selection` and `stopping` filled in.
    pub fn policy_config(&self, c: f64, selection: Selection, stopping: Stopping) -> Result<PolicyConfig, CliError> {
        let mut cfg = PolicyConfig::new(c, selection, stopping);
        cfg.alpha = self.policy.alpha.unwrap_or(cfg.alpha);
        cfg.explore_p = self.policy.explore_p.unwrap_or(cfg.explore_p);
        cfg.max_steps = self.policy.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
        cfg.lazy_explore = self.policy.lazy_explore.unwrap_or(false);
        cfg.solver = self.sequential_solver()?;
        cfg.validate().map_err(|e| CliError::nested("policy", e))?;
        Ok(cfg)
    }

    /// Resolves a study configuration.
    pub fn experiment(&self, kind: StudyKind, default_study: &str) -> Result<ExperimentSpec, CliError> {
        let k = self.num_items()?;
        let mut spec = ExperimentSpec::new(
            self.study.clone().unwrap_or_else(|| default_study.to_string()),
            kind,
            k,
            self.support_true()?,
        );
        spec.support_policy = self.support_policy()?;
        spec.costs = match self.costs()? {
            Some(c) => c,
            None => match kind {
                StudyKind::Ratio => vec![2f64.powi(-5), 2f64.powi(-10), 2f64.powi(-15)],
                StudyKind::Dominance => vec![2f64.powi(-10)],
            },
        };
        spec.reps = self.reps.unwrap_or(spec.reps);
        spec.seed = self.seed.unwrap_or(0);
        spec.tc_samples = self.tc_samples.unwrap_or(spec.tc_samples);
        if let Some(list) = &self.policies {
            spec.policies = list
                .iter()
                .map(|p| PolicySpec {
                    selection: p.selection,
                    stopping: p.stopping,
                })
                .collect();
        }
        spec.baselines = match &self.baselines {
            Some(b) => b.clone(),
            None if kind == StudyKind::Dominance => vec![Selection::Wald, Selection::Uniform],
            None => Vec::new(),
        };
        spec.fixed_lengths = self.fixed_lengths.clone().unwrap_or_default();
        let first = spec.costs.first().copied().unwrap_or(0.5);
        spec.policy = self.policy_config(first, Selection::Optimal, Stopping::T2)?;
        spec.tc_solver = self.standalone_solver()?;
        Ok(spec)
    }
}
