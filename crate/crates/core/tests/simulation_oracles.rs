mod common;

use seqrank_core::policy::{Selection, Stopping};
use seqrank_core::simulation::{estimate_e_tc, run_study, ExperimentSpec, PolicySpec, StudyKind};
use seqrank_core::support::SupportSpec;

/// `D(theta_2)` for two items: nearest-alternative KL by dense grid over the opposite interval.
fn d_two_items(theta2: f64) -> f64 {
    let p = common::sigmoid(-theta2);
    let n = 4000;
    (0..=n)
        .map(|i| {
            let alt = 0.4 + 1.6 * i as f64 / n as f64;
            let alt = if theta2 < 0.0 { alt } else { -alt };
            common::bernoulli_kl(p, common::sigmoid(-alt))
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn e_tc_matches_quadrature_for_two_items() {
    let mut spec = ExperimentSpec::new("q", StudyKind::Ratio, 2, SupportSpec::new(2.0, 0.4).unwrap());
    spec.costs = vec![2f64.powi(-10)];
    spec.tc_samples = 400;
    spec.seed = 31;
    spec.tc_solver.iters = 200;
    let est = estimate_e_tc(&spec, &spec.costs).unwrap()[0];

    let n = 2000;
    let h = 1.6 / n as f64;
    let mean_inv_d: f64 = (0..n)
        .map(|i| {
            let t = 0.4 + (i as f64 + 0.5) * h;
            (1.0 / d_two_items(t) + 1.0 / d_two_items(-t)) * h
        })
        .sum::<f64>()
        / 3.2;
    let want = 10.0 * 2f64.ln() * mean_inv_d;
    assert!(
        (est.mean - want).abs() <= 3.0 * est.stderr,
        "estimate {} ± {}, quadrature {want}",
        est.mean,
        est.stderr
    );
}

fn one_cell_spec(path: &std::path::Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new("det", StudyKind::Ratio, 3, SupportSpec::new(2.0, 0.4).unwrap());
    spec.costs = vec![2f64.powi(-4)];
    spec.reps = 1;
    spec.tc_samples = 5;
    spec.seed = 99;
    spec.policies = vec![PolicySpec {
        selection: Selection::Optimal,
        stopping: Stopping::T2,
    }];
    spec.output_path = Some(path.to_path_buf());
    spec
}

#[test]
fn study_csv_bytes_repeat() {
    let dir = std::env::temp_dir().join(format!("seqrank-det-{}", std::process::id()));
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    run_study(&one_cell_spec(&a)).unwrap();
    run_study(&one_cell_spec(&b)).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn uniform_fixed_baseline_has_exact_length() {
    let mut spec = ExperimentSpec::new("fixed", StudyKind::Dominance, 3, SupportSpec::new(2.0, 0.4).unwrap());
    spec.costs = vec![2f64.powi(-3)];
    spec.reps = 6;
    spec.seed = 5;
    spec.policies = vec![PolicySpec {
        selection: Selection::Uniform,
        stopping: Stopping::Fixed(100),
    }];
    let out = run_study(&spec).unwrap();
    let row = &out.rows[0];
    assert_eq!(row.fixed_n, Some(100));
    assert_eq!(row.mean_t, 100.0);
    assert_eq!(row.se_t, 0.0);
    assert_eq!(row.truncated, 0);
}
