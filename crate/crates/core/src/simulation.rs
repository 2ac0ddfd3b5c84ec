//! Monte Carlo harness: prior sampling, batched seeded trials, aggregation
//! to one row per (policy, cost or length) cell, and CSV output.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designsolver::{DesignSolver, SolverConfig, INDISTINGUISHABLE};
use crate::error::{Error, Result};
use crate::model::{Btl, ModelParams};
use crate::policy::{h_of_c, PolicyConfig, PolicyContext, Selection, Stopping, TrialResult};
use crate::support::{sample_uniform, RegionSet, SupportSpec};

/// Column order of the study CSV.
pub const CSV_HEADER: [&str; 18] = [
    "study",
    "policy",
    "selection",
    "stopping",
    "c",
    "h_c",
    "fixed_N",
    "reps",
    "mean_kendall",
    "se_kendall",
    "mean_T",
    "se_T",
    "mean_risk",
    "se_risk",
    "e_tc_hat",
    "se_e_tc",
    "ratio",
    "truncated",
];

/// Parses a cost written as a decimal (`0.001`, `1e-3`) or a power (`2^-10`).
pub fn parse_cost(text: &str) -> Result<f64> {
    let t = text.trim();
    let bad = || Error::config("c", format!("cannot parse cost {text:?}"));
    let value = match t.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| bad())?;
            let exp: f64 = exp.trim().parse().map_err(|_| bad())?;
            base.powf(exp)
        }
        None => t.parse().map_err(|_| bad())?,
    };
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::config("c", format!("cost {text:?} must lie in (0, 1)")));
    }
    Ok(value)
}

/// Formats like C's `%.{digits}g`; non-finite values give an empty cell.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for repetition `rep` of cell `cell`.
pub fn derive_seed(master: u64, cell: &str, rep: u64) -> u64 {
    mix(mix(mix(master) ^ fnv1a(cell)) ^ rep)
}

/// A proposed policy evaluated at every cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub selection: Selection,
    pub stopping: Stopping,
}

impl PolicySpec {
    pub fn id(&self) -> String {
        match self.stopping {
            Stopping::Fixed(_) => format!("{}-fixed", self.selection),
            s => format!("{}-{s}", self.selection),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    /// Risk ratios against the theoretical lower bound.
    Ratio,
    /// Kendall loss against fixed-length baselines.
    Dominance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Label written to the `study` column.
    pub study: String,
    pub kind: StudyKind,
    pub num_items: usize,
    /// Support the truths are drawn from.
    pub support_true: SupportSpec,
    /// Support the policy assumes.
    pub support_policy: SupportSpec,
    pub costs: Vec<f64>,
    pub reps: usize,
    pub policies: Vec<PolicySpec>,
    /// Fixed-length rules run against every proposed cell at its rounded mean
    /// stopping time.
    pub baselines: Vec<Selection>,
    /// Extra fixed lengths run for every baseline, costed at the first cost.
    pub fixed_lengths: Vec<u64>,
    pub tc_samples: usize,
    pub seed: u64,
    /// Shared settings of every trial; `c`, `selection` and `stopping` are
    /// overwritten per cell.
    pub policy: PolicyConfig,
    /// Solver used for `D(theta)` when estimating `E t_c`.
    pub tc_solver: SolverConfig,
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(study: impl Into<String>, kind: StudyKind, num_items: usize, support: SupportSpec) -> Self {
        Self {
            study: study.into(),
            kind,
            num_items,
            support_true: support,
            support_policy: support,
            costs: Vec::new(),
            reps: 300,
            policies: vec![
                PolicySpec {
                    selection: Selection::Optimal,
                    stopping: Stopping::T1,
                },
                PolicySpec {
                    selection: Selection::Optimal,
                    stopping: Stopping::T2,
                },
            ],
            baselines: Vec::new(),
            fixed_lengths: Vec::new(),
            tc_samples: 200,
            seed: 0,
            policy: PolicyConfig::new(0.5, Selection::Optimal, Stopping::T2),
            tc_solver: SolverConfig::standalone(),
            output_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.support_true
            .validate(self.num_items)
            .map_err(|e| Error::config("support_true", e.to_string()))?;
        self.support_policy
            .validate(self.num_items)
            .map_err(|e| Error::config("support_policy", e.to_string()))?;
        if self.reps == 0 {
            return Err(Error::config("reps", "must be at least 1"));
        }
        if self.costs.is_empty() {
            return Err(Error::config("costs", "at least one cost is required"));
        }
        for (i, &c) in self.costs.iter().enumerate() {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::config(format!("costs[{i}]"), format!("must lie in (0, 1), got {c}")));
            }
        }
        if self.costs.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::config("costs", "must be strictly decreasing"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "at least one policy is required"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            let mut cfg = self.policy.clone();
            cfg.c = self.costs[0];
            cfg.selection = p.selection;
            cfg.stopping = p.stopping;
            cfg.validate().map_err(|e| prefix(e, &format!("policies[{i}]")))?;
        }
        if self.fixed_lengths.contains(&0) {
            return Err(Error::config("fixed_lengths", "lengths must be at least 1"));
        }
        if self.kind == StudyKind::Ratio && self.tc_samples == 0 {
            return Err(Error::config("tc_samples", "must be at least 1"));
        }
        self.tc_solver
            .validate()
            .map_err(|e| prefix(e, "tc_solver"))?;
        self.policy.validate().map_err(|e| prefix(e, "policy"))
    }
}

fn prefix(err: Error, path: &str) -> Error {
    match err {
        Error::InvalidConfig { field, message } => Error::InvalidConfig {
            field: format!("{path}.{field}"),
            message,
        },
        other => Error::config(path, other.to_string()),
    }
}

/// Monte Carlo estimate of `E t_c(Theta)` at one cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcEstimate {
    pub c: f64,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Fewer than two draws: the standard error is reported as 0.
    pub degenerate: bool,
}

/// `1 / D(theta)` for `tc_samples` prior draws shared by every cost.
pub fn inverse_d_draws(spec: &ExperimentSpec) -> Result<Vec<f64>> {
    let set = Arc::new(RegionSet::new(&spec.support_true, spec.num_items)?);
    (0..spec.tc_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "prior-tc", i));
            let theta = sample_uniform(&spec.support_true, spec.num_items, &mut rng)?;
            let mut solver = DesignSolver::new(Btl, Arc::clone(&set), &theta)
                .with_inner_options(spec.tc_solver.inner);
            let d = solver.solve(&spec.tc_solver, None).value;
            if !(d > INDISTINGUISHABLE) {
                return Err(Error::Indistinguishable { value: d });
            }
            Ok(1.0 / d)
        })
        .collect()
}

/// `E t_c = |ln c| E[1/D]` at every cost, on shared draws.
pub fn estimate_e_tc(spec: &ExperimentSpec, costs: &[f64]) -> Result<Vec<TcEstimate>> {
    let inv = inverse_d_draws(spec)?;
    let (mean, se) = mean_se(&inv);
    Ok(costs
        .iter()
        .map(|&c| {
            let l = c.ln().abs();
            TcEstimate {
                c,
                mean: l * mean,
                stderr: l * se,
                samples: inv.len(),
                degenerate: inv.len() < 2,
            }
        })
        .collect())
}

/// Sample mean and standard error of the mean (0 for fewer than two values).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub study: String,
    pub policy: String,
    pub selection: Selection,
    pub stopping: String,
    pub c: f64,
    /// Threshold `h(c)`; `None` for fixed-length rules.
    pub h_c: Option<f64>,
    pub fixed_n: Option<u64>,
    pub reps: usize,
    pub mean_kendall: f64,
    pub se_kendall: f64,
    pub mean_t: f64,
    pub se_t: f64,
    pub mean_risk: f64,
    pub se_risk: f64,
    pub e_tc_hat: Option<f64>,
    pub se_e_tc: Option<f64>,
    pub ratio: Option<f64>,
    pub truncated: usize,
}

impl AggregateRow {
    /// Standard error of `ratio` with `E t_c` treated as fixed.
    pub fn se_ratio(&self) -> Option<f64> {
        self.e_tc_hat.map(|e| self.se_risk / (self.c * e))
    }

    fn from_trials(cell: &Cell, study: &str, c: f64, trials: &[TrialResult]) -> Self {
        let loss: Vec<f64> = trials.iter().map(|t| t.kendall_loss as f64).collect();
        let time: Vec<f64> = trials.iter().map(|t| t.stopping_time as f64).collect();
        let risk: Vec<f64> = trials.iter().map(|t| t.realized_risk).collect();
        let (mean_kendall, se_kendall) = mean_se(&loss);
        let (mean_t, se_t) = mean_se(&time);
        let (mean_risk, se_risk) = mean_se(&risk);
        Self {
            study: study.to_string(),
            policy: cell.policy.id(),
            selection: cell.policy.selection,
            stopping: match cell.policy.stopping {
                Stopping::Fixed(_) => "fixed".into(),
                s => s.to_string(),
            },
            c,
            h_c: None,
            fixed_n: cell.policy.stopping.fixed_length(),
            reps: trials.len(),
            mean_kendall,
            se_kendall,
            mean_t,
            se_t,
            mean_risk,
            se_risk,
            e_tc_hat: None,
            se_e_tc: None,
            ratio: None,
            truncated: trials.iter().filter(|t| t.truncated).count(),
        }
    }

    /// CSV cells in [`CSV_HEADER`] order.
    pub fn csv_record(&self) -> Vec<String> {
        let f = |x: f64| format_sig(x, 9);
        let o = |x: Option<f64>| x.map(f).unwrap_or_default();
        vec![
            self.study.clone(),
            self.policy.clone(),
            self.selection.to_string(),
            self.stopping.clone(),
            f(self.c),
            o(self.h_c),
            self.fixed_n.map(|n| n.to_string()).unwrap_or_default(),
            self.reps.to_string(),
            f(self.mean_kendall),
            f(self.se_kendall),
            f(self.mean_t),
            f(self.se_t),
            f(self.mean_risk),
            f(self.se_risk),
            o(self.e_tc_hat),
            o(self.se_e_tc),
            o(self.ratio),
            self.truncated.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub rows: Vec<AggregateRow>,
    /// Empty unless the study reports risk ratios.
    pub e_tc: Vec<TcEstimate>,
}

#[derive(Debug, Clone)]
struct Cell {
    id: String,
    policy: PolicySpec,
    c: f64,
}

/// Uniform prior draw from `support` determined by `seed`.
pub fn draw_truth(support: &SupportSpec, num_items: usize, seed: u64) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_uniform(support, num_items, &mut rng)
}

/// Truth for repetition `rep`, shared by every cell of a study.
pub fn truth_for_rep(spec: &ExperimentSpec, rep: u64) -> Result<ModelParams> {
    draw_truth(&spec.support_true, spec.num_items, derive_seed(spec.seed, "truth", rep))
}

fn run_cells(
    spec: &ExperimentSpec,
    ctx: &PolicyContext<Btl>,
    truths: &[ModelParams],
    cells: &[Cell],
) -> Result<Vec<Vec<TrialResult>>> {
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.reps).map(move |r| (c, r)))
        .collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(ci, rep)| {
            let cell = &cells[ci];
            let mut cfg = spec.policy.clone();
            cfg.c = cell.c;
            cfg.selection = cell.policy.selection;
            cfg.stopping = cell.policy.stopping;
            ctx.run(&truths[rep], &cfg, derive_seed(spec.seed, &cell.id, rep as u64))
        })
        .collect::<Result<_>>()?;
    let mut grouped: Vec<Vec<TrialResult>> = vec![Vec::with_capacity(spec.reps); cells.len()];
    for ((ci, _), r) in jobs.into_iter().zip(results) {
        grouped[ci].push(r);
    }
    Ok(grouped)
}

fn cell_id(study: &str, policy: &PolicySpec, c: f64) -> String {
    format!("{study}/{}/{}/c={c:e}", policy.selection, policy.stopping)
}

/// Runs every cell of the study, writes the CSV when `output_path` is set,
/// and returns the rows in a fixed order: proposed policies by cost, then
/// baselines.
pub fn run_study(spec: &ExperimentSpec) -> Result<StudyOutput> {
    spec.validate()?;
    let truths: Vec<ModelParams> = (0..spec.reps as u64)
        .map(|r| truth_for_rep(spec, r))
        .collect::<Result<_>>()?;
    let ctx = PolicyContext::new(Btl, &spec.support_policy, spec.num_items)?;

    let mut cells = Vec::new();
    for policy in &spec.policies {
        for &c in &spec.costs {
            cells.push(Cell {
                id: cell_id(&spec.study, policy, c),
                policy: *policy,
                c,
            });
        }
    }
    let grouped = run_cells(spec, &ctx, &truths, &cells)?;
    let mut rows: Vec<AggregateRow> = cells
        .iter()
        .zip(&grouped)
        .map(|(cell, trials)| {
            let mut row = AggregateRow::from_trials(cell, &spec.study, cell.c, trials);
            if matches!(cell.policy.stopping, Stopping::T1 | Stopping::T2) {
                row.h_c = Some(h_of_c(cell.c, spec.policy.alpha));
            }
            row
        })
        .collect();

    let mut e_tc = Vec::new();
    if spec.kind == StudyKind::Ratio {
        e_tc = estimate_e_tc(spec, &spec.costs)?;
        for row in rows.iter_mut() {
            if let Some(est) = e_tc.iter().find(|e| e.c == row.c) {
                row.e_tc_hat = Some(est.mean);
                row.se_e_tc = Some(est.stderr);
                row.ratio = Some(row.mean_risk / (row.c * est.mean));
            }
        }
    }

    if !spec.baselines.is_empty() {
        let mut base_cells = Vec::new();
        let mut seen = Vec::new();
        let mut add = |selection: Selection, n: u64, c: f64| {
            if seen.contains(&(selection, n, c.to_bits())) {
                return;
            }
            seen.push((selection, n, c.to_bits()));
            let policy = PolicySpec {
                selection,
                stopping: Stopping::Fixed(n),
            };
            base_cells.push(Cell {
                id: cell_id(&spec.study, &policy, c),
                policy,
                c,
            });
        };
        for &selection in &spec.baselines {
            for row in rows.iter().filter(|r| r.h_c.is_some()) {
                add(selection, (row.mean_t.round() as u64).max(1), row.c);
            }
            for &n in &spec.fixed_lengths {
                add(selection, n, spec.costs[0]);
            }
        }
        let grouped = run_cells(spec, &ctx, &truths, &base_cells)?;
        rows.extend(
            base_cells
                .iter()
                .zip(&grouped)
                .map(|(cell, trials)| AggregateRow::from_trials(cell, &spec.study, cell.c, trials)),
        );
    }

    if let Some(path) = &spec.output_path {
        write_rows_csv(path, &rows)?;
    }
    Ok(StudyOutput { rows, e_tc })
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = create(path)?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header).map_err(io)?;
    for r in records {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_rows_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_csv(path, &CSV_HEADER, rows.iter().map(AggregateRow::csv_record))
}

/// Ratio against `|ln c|`, one series per policy.
pub fn write_ratio_plot_data(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let f = |x: f64| format_sig(x, 9);
    write_csv(
        path,
        &["policy", "abs_log_c", "ratio", "se_ratio"],
        rows.iter().filter_map(|r| {
            let ratio = r.ratio?;
            Some(vec![
                r.policy.clone(),
                f(r.c.ln().abs()),
                f(ratio),
                r.se_ratio().map(f).unwrap_or_default(),
            ])
        }),
    )
}

/// Mean Kendall loss against mean sample size, one series per policy.
pub fn write_kendall_plot_data(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let f = |x: f64| format_sig(x, 9);
    write_csv(
        path,
        &["policy", "mean_T", "mean_kendall", "se_kendall", "se_T"],
        rows.iter().map(|r| {
            vec![
                r.policy.clone(),
                f(r.mean_t),
                f(r.mean_kendall),
                f(r.se_kendall),
                f(r.se_t),
            ]
        }),
    )
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = create(path)?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
