use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use seqrank_core::designsolver::{t_c_from_d, DesignSolver, SolverConfig};
use seqrank_core::model::{Btl, ModelParams};
use seqrank_core::policy::{PolicyConfig, PolicyContext, Selection, Stopping};
use seqrank_core::simulation::{
    derive_seed, draw_truth, estimate_e_tc, format_sig, parse_cost, run_study, write_kendall_plot_data,
    write_ratio_plot_data, write_text, ExperimentSpec, StudyKind,
};
use seqrank_core::support::{RegionSet, SupportSpec};

use crate::config::FileConfig;
use crate::error::CliError;
use crate::{manifest, GlobalArgs};

pub struct Context {
    pub global: GlobalArgs,
    pub file: FileConfig,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Free coordinates `theta_2,...,theta_K` (`theta_1 = 0`).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Mirror descent iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Step-size constant.
    #[arg(long)]
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrialArgs {
    /// Free coordinates of the truth; drawn from the prior when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// `optimal`, `uniform` or `wald`.
    #[arg(long)]
    pub selection: Option<Selection>,
    /// `T1`, `T2` or `fixed(N)`.
    #[arg(long)]
    pub stopping: Option<Stopping>,
}

impl Context {
    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.global.out.clone().unwrap_or_else(|| PathBuf::from("results"));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    /// Costs from `--c-list`, else from the configuration.
    fn costs(&self) -> Result<Option<Vec<f64>>, CliError> {
        match &self.global.c_list {
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, t)| parse_cost(t).map_err(|e| CliError::nested(&format!("--c-list[{i}]"), e)))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            None => self.file.costs(),
        }
    }

    fn experiment(&self, kind: StudyKind, default_study: &str) -> Result<ExperimentSpec, CliError> {
        let mut spec = self.file.experiment(kind, default_study)?;
        if let Some(c) = self.costs()? {
            spec.costs = c;
            spec.policy.c = spec.costs.first().copied().unwrap_or(spec.policy.c);
        }
        if let Some(r) = self.global.reps {
            spec.reps = r;
        }
        if let Some(s) = self.global.seed {
            spec.seed = s;
        }
        spec.validate().map_err(|e| CliError::nested("config", e))?;
        Ok(spec)
    }
}

fn theta_from_free(free: &[f64], spec: &SupportSpec, num_items: usize, field: &str) -> Result<ModelParams, CliError> {
    if free.len() + 1 != num_items {
        return Err(CliError::validation(
            field,
            format!("expected {} free coordinates for num_items = {num_items}, got {}", num_items - 1, free.len()),
        ));
    }
    let theta = ModelParams::from_free(free).map_err(|e| CliError::validation(field, e))?;
    if let Some(msg) = spec.violation(&theta, 1e-9) {
        return Err(CliError::validation(field, format!("outside the support: {msg}")));
    }
    Ok(theta)
}

fn run_study_command(ctx: &Context, kind: StudyKind, name: &str) -> Result<(), CliError> {
    let mut spec = ctx.experiment(kind, name)?;
    let dir = ctx.out_dir()?;
    let csv = dir.join(format!("{}.csv", spec.study));
    spec.output_path = Some(csv.clone());
    let out = run_study(&spec)?;
    manifest::write(&csv, name, &ctx.global, &spec)?;
    let plot = match kind {
        StudyKind::Ratio => {
            let p = dir.join(format!("{}_ratio_plot.csv", spec.study));
            write_ratio_plot_data(&p, &out.rows)?;
            p
        }
        StudyKind::Dominance => {
            let p = dir.join(format!("{}_kendall_plot.csv", spec.study));
            write_kendall_plot_data(&p, &out.rows)?;
            p
        }
    };
    manifest::write(&plot, name, &ctx.global, &spec)?;
    let truncated: usize = out.rows.iter().map(|r| r.truncated).sum();
    println!("wrote {} rows to {}", out.rows.len(), csv.display());
    if truncated > 0 {
        eprintln!("warning: {truncated} trials hit the step limit");
    }
    Ok(())
}

pub fn study1(ctx: &Context) -> Result<(), CliError> {
    run_study_command(ctx, StudyKind::Ratio, "study1")
}

pub fn study2(ctx: &Context) -> Result<(), CliError> {
    run_study_command(ctx, StudyKind::Dominance, "study2")
}

#[derive(Debug, Serialize)]
struct DesignReport {
    theta: Vec<f64>,
    d: f64,
    gap: f64,
    iterations: usize,
    lambda: Vec<f64>,
    pairs: Vec<String>,
    confuser: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    costs: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    t_c: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct DesignConfig<'a> {
    num_items: usize,
    theta: &'a [f64],
    support: SupportSpec,
    solver: &'a SolverConfig,
}

fn sig_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sig(x)).collect()
}

/// Rounds to 9 significant digits so reports are stable across platforms.
fn sig(x: f64) -> f64 {
    format_sig(x, 9).parse().unwrap_or(x)
}

pub fn solve_design(ctx: &Context, args: &DesignArgs) -> Result<(), CliError> {
    let file = &ctx.file;
    let free = args
        .theta
        .clone()
        .or_else(|| file.design.theta.clone())
        .ok_or_else(|| CliError::validation("theta", "give --theta or [design] theta"))?;
    let k = match file.num_items {
        Some(k) => k,
        None => free.len() + 1,
    };
    let support = FileConfig {
        num_items: Some(k),
        ..file.clone()
    }
    .support_policy()?;
    let theta = theta_from_free(&free, &support, k, "theta")?;
    let mut solver_cfg = file.standalone_solver()?;
    solver_cfg.iters = args.iters.unwrap_or(solver_cfg.iters);
    solver_cfg.c0 = args.c0.unwrap_or(solver_cfg.c0);
    solver_cfg.validate().map_err(|e| CliError::nested("design_solver", e))?;

    let set = std::sync::Arc::new(RegionSet::new(&support, k)?);
    let mut solver = DesignSolver::new(Btl, set, &theta).with_inner_options(solver_cfg.inner);
    let sol = solver.solve(&solver_cfg, None);
    let costs = ctx.costs()?.unwrap_or_default();
    let t_c = costs
        .iter()
        .map(|&c| t_c_from_d(c, sol.value).map(sig))
        .collect::<Result<Vec<_>, _>>()?;
    let pairs = seqrank_core::model::Pair::all(k)
        .map(|p| format!("{}-{}", p.first() + 1, p.second() + 1))
        .collect();
    let report = DesignReport {
        theta: sig_vec(theta.scores()),
        d: sig(sol.value),
        gap: sig(sol.gap),
        iterations: sol.iterations,
        lambda: sig_vec(sol.lambda.weights()),
        pairs,
        confuser: sig_vec(sol.confuser.scores()),
        costs: sig_vec(&costs),
        t_c,
    };
    let text = toml::to_string(&report).map_err(|e| CliError::Runtime(format!("report: {e}")))?;
    print!("{text}");
    if ctx.global.out.is_some() {
        let path = ctx.out_dir()?.join("design.toml");
        write_text(&path, &text)?;
        let cfg = DesignConfig {
            num_items: k,
            theta: &free,
            support,
            solver: &solver_cfg,
        };
        manifest::write(&path, "solve-design", &ctx.global, &cfg)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrialConfig<'a> {
    num_items: usize,
    seed: u64,
    theta: &'a [f64],
    support_true: SupportSpec,
    support_policy: SupportSpec,
    policy: &'a PolicyConfig,
}

#[derive(Debug, Serialize)]
struct TrialSummary {
    theta: Vec<f64>,
    stopping_time: u64,
    decision: Vec<usize>,
    kendall_loss: u32,
    realized_risk: f64,
    truncated: bool,
    threshold: f64,
}

pub fn single_trial(ctx: &Context, args: &TrialArgs) -> Result<(), CliError> {
    let file = &ctx.file;
    let k = file.num_items()?;
    let support_true = file.support_true()?;
    let support_policy = file.support_policy()?;
    let seed = ctx.global.seed.or(file.seed).unwrap_or(0);
    let theta = match args.theta.clone().or_else(|| file.trial.theta.clone()) {
        Some(free) => theta_from_free(&free, &support_true, k, "theta")?,
        None => draw_truth(&support_true, k, derive_seed(seed, "truth", 0))?,
    };
    let c = match ctx.costs()? {
        Some(list) => list[0],
        None => match &file.trial.c {
            Some(c) => c.resolve("trial.c")?,
            None => 2f64.powi(-10),
        },
    };
    let selection = args.selection.or(file.trial.selection).unwrap_or(Selection::Optimal);
    let stopping = args.stopping.or(file.trial.stopping).unwrap_or(Stopping::T2);
    let policy = file.policy_config(c, selection, stopping)?;

    let context = PolicyContext::new(Btl, &support_policy, k)?;
    let result = context.run_traced(&theta, &policy, derive_seed(seed, "single-trial", 0))?;
    let dir = ctx.out_dir()?;
    let mut log = String::new();
    for record in result.trajectory.as_deref().unwrap_or_default() {
        let line = serde_json::to_string(record).map_err(|e| CliError::Runtime(format!("trajectory: {e}")))?;
        let _ = writeln!(log, "{line}");
    }
    let cfg = TrialConfig {
        num_items: k,
        seed,
        theta: theta.free(),
        support_true,
        support_policy,
        policy: &policy,
    };
    let traj = dir.join("trajectory.jsonl");
    write_text(&traj, &log)?;
    manifest::write(&traj, "single-trial", &ctx.global, &cfg)?;

    let summary = TrialSummary {
        theta: theta.scores().to_vec(),
        stopping_time: result.stopping_time,
        decision: result.decision.labels(),
        kendall_loss: result.kendall_loss,
        realized_risk: result.realized_risk,
        truncated: result.truncated,
        threshold: policy.threshold(),
    };
    let mut text =
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(format!("summary: {e}")))?;
    text.push('\n');
    let path = dir.join("trial_summary.json");
    write_text(&path, &text)?;
    manifest::write(&path, "single-trial", &ctx.global, &cfg)?;
    println!(
        "stopped at step {} with ranking {} (Kendall loss {})",
        result.stopping_time, result.decision, result.kendall_loss
    );
    Ok(())
}

pub fn estimate_tc(ctx: &Context) -> Result<(), CliError> {
    let mut spec = ctx.experiment(StudyKind::Ratio, "estimate-tc")?;
    if let Some(n) = ctx.global.reps {
        spec.tc_samples = n;
    }
    if spec.tc_samples == 0 {
        return Err(CliError::validation("tc_samples", "must be at least 1"));
    }
    let estimates = estimate_e_tc(&spec, &spec.costs)?;
    let mut text = String::from("c,e_tc_hat,se_e_tc,samples\n");
    for e in &estimates {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            format_sig(e.c, 9),
            format_sig(e.mean, 9),
            format_sig(e.stderr, 9),
            e.samples
        );
        if e.degenerate {
            eprintln!("warning: a single prior draw gives no standard error");
        }
    }
    let path: PathBuf = ctx.out_dir()?.join("e_tc.csv");
    write_text(&path, &text)?;
    #[derive(Serialize)]
    struct TcConfig<'a> {
        num_items: usize,
        support: SupportSpec,
        costs: &'a [f64],
        tc_samples: usize,
        seed: u64,
        solver: &'a SolverConfig,
    }
    let cfg = TcConfig {
        num_items: spec.num_items,
        support: spec.support_true,
        costs: &spec.costs,
        tc_samples: spec.tc_samples,
        seed: spec.seed,
        solver: &spec.tc_solver,
    };
    manifest::write(&path, "estimate-tc", &ctx.global, &cfg)?;
    print!("{text}");
    Ok(())
}
