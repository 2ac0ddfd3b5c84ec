//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

/// Scores with item 0 pinned at zero.
pub fn scores(free: &[f64]) -> Vec<f64> {
    std::iter::once(0.0).chain(free.iter().copied()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    kl
}

pub fn pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// Per-pair KL between the comparison laws of `theta` and `alt` (full score vectors).
pub fn kl_vector(theta: &[f64], alt: &[f64]) -> Vec<f64> {
    pairs(theta.len())
        .into_iter()
        .map(|(i, j)| bernoulli_kl(sigmoid(theta[i] - theta[j]), sigmoid(alt[i] - alt[j])))
        .collect()
}

pub fn in_support(s: &[f64], kappa: f64, delta: f64, tol: f64) -> bool {
    s.iter().all(|v| v.abs() <= kappa + tol)
        && pairs(s.len())
            .into_iter()
            .all(|(i, j)| (s[i] - s[j]).abs() >= delta - tol)
}

/// Items from best to worst, ties by index.
pub fn order(s: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// `sum wins[i][j] ln sigmoid(s_i - s_j)`.
pub fn log_likelihood(wins: &[Vec<u64>], s: &[f64]) -> f64 {
    let k = s.len();
    let mut l = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j && wins[i][j] > 0 {
                l += wins[i][j] as f64 * sigmoid(s[i] - s[j]).ln();
            }
        }
    }
    l
}

/// Free-coordinate grid over `[-kappa, kappa]^2` with spacing `step`.
pub fn grid_2d(kappa: f64, step: f64) -> Vec<[f64; 2]> {
    let n = (2.0 * kappa / step).round() as i64;
    let mut out = Vec::with_capacity(((n + 1) * (n + 1)) as usize);
    for a in 0..=n {
        for b in 0..=n {
            out.push([-kappa + a as f64 * step, -kappa + b as f64 * step]);
        }
    }
    out
}

/// Points of the 3-simplex with coordinates on a `1/m` lattice.
pub fn simplex_grid_3(m: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for a in 0..=m {
        for b in 0..=(m - a) {
            let c = m - a - b;
            out.push([a as f64 / m as f64, b as f64 / m as f64, c as f64 / m as f64]);
        }
    }
    out
}

/// Brute-force `max_lambda min_alt sum lambda KL` for K=3 over a simplex
/// grid of spacing `1/m` and an alternative grid of spacing `step`.
pub fn brute_force_design(theta_free: &[f64], kappa: f64, delta: f64, step: f64, m: usize) -> (f64, [f64; 3]) {
    let theta = scores(theta_free);
    let own = order(&theta);
    let alts: Vec<Vec<f64>> = grid_2d(kappa, step)
        .into_iter()
        .map(|p| scores(&p))
        .filter(|s| in_support(s, kappa, delta, 1e-9) && order(s) != own)
        .map(|s| kl_vector(&theta, &s))
        .collect();
    let mut best = (f64::NEG_INFINITY, [0.0; 3]);
    for lambda in simplex_grid_3(m) {
        let inner = alts
            .iter()
            .map(|kl| lambda[0] * kl[0] + lambda[1] * kl[1] + lambda[2] * kl[2])
            .fold(f64::INFINITY, f64::min);
        if inner > best.0 {
            best = (inner, lambda);
        }
    }
    best
}
