//! Projected gradient descent over a rank region with backtracking.

use serde::{Deserialize, Serialize};

use crate::support::{RankRegion, MAX_ITEMS};

const MAX_DIM: usize = MAX_ITEMS - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgOptions {
    /// Stop once the unit-step projected gradient `|x - P(x - grad)|` is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PgOutcome {
    pub value: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    pub iterations: usize,
}

/// Minimizes `eval` over `region` starting from `x` (projected first).
///
/// `eval(x, grad)` returns the objective and writes its gradient. `step`
/// carries the last accepted step length between calls for warm starts.
///
/// Convergence uses the gradient mapping of the first trial step each
/// iteration: `|x - P(x - s g)|` is nondecreasing in `s` and
/// `|x - P(x - s g)| / s` is nonincreasing, so either bound certifies the
/// unit-step criterion without an extra projection. Two consecutive
/// accepted steps without a decrease beyond round-off also end the search.
pub(crate) fn minimize<F>(
    mut eval: F,
    region: &RankRegion,
    x: &mut [f64],
    step: &mut f64,
    opts: PgOptions,
) -> PgOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    debug_assert!(n <= MAX_DIM);
    let mut g = [0.0f64; MAX_DIM];
    let mut y = [0.0f64; MAX_DIM];
    let mut gy = [0.0f64; MAX_DIM];

    region.project(x);
    let mut f = eval(x, &mut g[..n]);
    let mut s = if step.is_finite() && *step > 0.0 { *step } else { 1.0 };

    let mut iterations = 0;
    let mut stalls = 0;
    'outer: while iterations < opts.max_iter {
        let mut first_trial = true;
        loop {
            for d in 0..n {
                y[d] = x[d] - s * g[d];
            }
            region.project(&mut y[..n]);
            let mut dd = 0.0;
            let mut lin = 0.0;
            for d in 0..n {
                let diff = y[d] - x[d];
                dd += diff * diff;
                lin += g[d] * diff;
            }
            let dist = dd.sqrt();
            if first_trial {
                let certified = if s >= 1.0 { dist } else { dist / s };
                if certified < opts.tol {
                    break 'outer;
                }
                first_trial = false;
            }
            if dd == 0.0 {
                break 'outer;
            }
            let fy = eval(&y[..n], &mut gy[..n]);
            let slack = 1e-14 * f.abs().max(1.0);
            if fy <= f + lin + dd / (2.0 * s) + slack {
                // accepted steps that no longer decrease f are round-off noise
                if f - fy <= slack {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                x.copy_from_slice(&y[..n]);
                g[..n].copy_from_slice(&gy[..n]);
                f = fy;
                s *= 2.0;
                if stalls >= 2 {
                    iterations += 1;
                    break 'outer;
                }
                break;
            }
            s *= 0.5;
            if s < 1e-30 {
                break 'outer;
            }
        }
        iterations += 1;
    }
    *step = s;
    PgOutcome {
        value: f,
        iterations,
    }
}
