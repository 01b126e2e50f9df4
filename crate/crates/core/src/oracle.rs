//! Independent checks for the Bayesian fit: maximum-likelihood estimation of
//! the fixed-location model and synthetic random-location panels with known
//! truth.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blocks::{BlockRecord, BlockSeries, ExtremumKind};
use crate::error::{Error, Result};
use crate::gev::{log_pdf_raw, GevParams, EULER_GAMMA};
use crate::rng::stream_rng;
use crate::stats;

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

pub const MIN_MLE_SIZE: usize = 10;

/// Tag naming the group of a simulated record.
pub const GROUP_TAG: &str = "group";

// ---------------------------------------------------------------------------
// Nelder–Mead
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Derivative-free minimisation by the Nelder–Mead simplex method with the
/// standard coefficients (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2). `steps[i]` sets the initial simplex edge along axis `i`.
///
/// Converges when both the spread of function values and the largest
/// vertex distance from the best vertex fall below `tol`.
pub fn nelder_mead<F>(f: F, start: &[f64], steps: &[f64], tol: f64, max_iter: usize) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += steps[i];
        let v = eval(&x);
        simplex.push((x, v));
    }

    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = if best.is_finite() { (worst - best).abs() } else { f64::INFINITY };
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= tol && size <= tol.sqrt() {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst_x = simplex[n].0.clone();
        let reflected = combine(&centroid, &worst_x, -1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst_x, -2.0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < simplex[n].1 {
                let c = combine(&centroid, &reflected, 0.5);
                let v = eval(&c);
                (c, v)
            } else {
                let c = combine(&centroid, &worst_x, 0.5);
                let v = eval(&c);
                (c, v)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x = combine(&best_x, &vertex.0, 0.5);
                    let v = eval(&x);
                    *vertex = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    SimplexResult {
        x,
        value,
        iterations,
        converged,
    }
}

// ---------------------------------------------------------------------------
// Maximum likelihood
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldInterval {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

impl WaldInterval {
    fn new(estimate: f64, variance: f64) -> Self {
        let se = variance.max(0.0).sqrt();
        Self {
            estimate,
            se,
            lower: estimate - Z_975 * se,
            upper: estimate + Z_975 * se,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamIntervals {
    pub mu: WaldInterval,
    pub sigma: WaldInterval,
    pub eps: WaldInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub params: GevParams,
    pub n: usize,
    pub log_likelihood_at_max: f64,
    /// Inverse observed information in `(mu, sigma, eps)` order.
    pub covariance: [[f64; 3]; 3],
    pub ci95: ParamIntervals,
    pub converged: bool,
    /// Shape at or beyond -1 (unbounded likelihood) or collapsed scale.
    pub at_boundary: bool,
}

fn neg_log_likelihood(values: &[f64], mu: f64, sigma: f64, eps: f64) -> f64 {
    let mut ll = 0.0;
    for &x in values {
        ll += log_pdf_raw(mu, sigma, eps, x);
        if ll == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
    }
    -ll
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    if !det.is_finite() || det == 0.0 {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cof[j][i] / det;
        }
    }
    Some(inv)
}

/// Positive definiteness via leading principal minors.
fn positive_definite(m: &[[f64; 3]; 3]) -> bool {
    let d1 = m[0][0];
    let d2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let d3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    d1 > 0.0 && d2 > 0.0 && d3 > 0.0 && d3.is_finite()
}

/// Central finite-difference Hessian of `f` at `x` with per-axis steps `h`.
fn hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64; 3], h: &[f64; 3]) -> [[f64; 3]; 3] {
    let at = |di: [f64; 3]| f(&[x[0] + di[0], x[1] + di[1], x[2] + di[2]]);
    let f0 = at([0.0; 3]);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = h[i];
        let mut me = [0.0; 3];
        me[i] = -h[i];
        out[i][i] = (at(e) - 2.0 * f0 + at(me)) / (h[i] * h[i]);
        for j in (i + 1)..3 {
            let shift = |si: f64, sj: f64| {
                let mut d = [0.0; 3];
                d[i] = si * h[i];
                d[j] = sj * h[j];
                at(d)
            };
            let v = (shift(1.0, 1.0) - shift(1.0, -1.0) - shift(-1.0, 1.0) + shift(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Maximum-likelihood fit of the fixed-location GEV to the block maxima.
pub fn mle_fit(bs: &BlockSeries) -> Result<MleFit> {
    mle_fit_values(&bs.values())
}

/// Maximise the GEV log-likelihood by Nelder–Mead on `(mu, log sigma, eps)`
/// from a Gumbel moment start and two shape perturbations, then estimate
/// the covariance from a finite-difference Hessian in `(mu, sigma, eps)`.
pub fn mle_fit_values(values: &[f64]) -> Result<MleFit> {
    if values.len() < MIN_MLE_SIZE {
        return Err(Error::Domain(format!(
            "maximum likelihood needs at least {MIN_MLE_SIZE} maxima, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSeries("maxima must be finite".into()));
    }
    let mean = stats::mean(values);
    let sd = stats::sample_sd(values).unwrap_or(0.0);
    let sd = if sd > 0.0 { sd } else { (mean.abs() * 1e-6).max(1e-8) };
    let sigma0 = sd * 6f64.sqrt() / std::f64::consts::PI;
    let mu0 = mean - EULER_GAMMA * sigma0;

    let objective = |theta: &[f64]| neg_log_likelihood(values, theta[0], theta[1].exp(), theta[2]);
    let steps = [0.2 * sigma0, 0.2, 0.1];
    let tol = 1e-10;

    let mut best: Option<SimplexResult> = None;
    for eps0 in [0.0, -0.1, 0.1] {
        let mut start = vec![mu0, sigma0.ln(), eps0];
        // Infeasible Weibull/Fréchet starts are moved toward Gumbel.
        for _ in 0..20 {
            if objective(&start).is_finite() {
                break;
            }
            start[2] *= 0.5;
        }
        let mut res = nelder_mead(objective, &start, &steps, tol, 5_000);
        // Restart from the optimum to escape a collapsed simplex.
        for _ in 0..3 {
            let again = nelder_mead(objective, &res.x, &steps, tol, 5_000);
            let settled = (again.value - res.value).abs() <= 1e-8;
            res = SimplexResult {
                converged: again.converged && settled,
                ..again
            };
            if res.converged {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| res.value < b.value) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Initialization(
            "no start gives a finite likelihood".into(),
        ));
    }

    let mu = best.x[0];
    let sigma = best.x[1].exp();
    let eps = best.x[2];
    let params = GevParams::new(mu, sigma, eps).map_err(|_| {
        Error::Initialization(format!("optimizer left the parameter domain (sigma={sigma})"))
    })?;

    let at_boundary = eps <= -0.95 || sigma <= 1e-6 * sd;
    let x = [mu, sigma, eps];
    let h = [1e-4 * sigma, 1e-4 * sigma, 1e-4];
    let hess = hessian(
        |p| {
            if p[1] <= 0.0 {
                f64::INFINITY
            } else {
                neg_log_likelihood(values, p[0], p[1], p[2])
            }
        },
        &x,
        &h,
    );
    let pd = positive_definite(&hess);
    let covariance = invert3(&hess).unwrap_or([[f64::NAN; 3]; 3]);
    let finite = covariance.iter().flatten().all(|v| v.is_finite());
    let converged = best.converged && pd && finite && !at_boundary;

    Ok(MleFit {
        params,
        n: values.len(),
        log_likelihood_at_max: -best.value,
        covariance,
        ci95: ParamIntervals {
            mu: WaldInterval::new(mu, covariance[0][0]),
            sigma: WaldInterval::new(sigma, covariance[1][1]),
            eps: WaldInterval::new(eps, covariance[2][2]),
        },
        converged,
        at_boundary,
    })
}

impl MleFit {
    /// Delta-method Wald interval for the return level `R^k`.
    pub fn return_level_ci(&self, k: f64) -> Result<WaldInterval> {
        let p = self.params;
        let rl = |mu: f64, sigma: f64, eps: f64| GevParams::new(mu, sigma, eps)?.return_level(k);
        let estimate = p.return_level(k)?;
        let hs = 1e-6 * p.sigma();
        let he = 1e-6;
        let grad = [
            1.0,
            (rl(p.mu(), p.sigma() + hs, p.eps())? - rl(p.mu(), p.sigma() - hs, p.eps())?) / (2.0 * hs),
            (rl(p.mu(), p.sigma(), p.eps() + he)? - rl(p.mu(), p.sigma(), p.eps() - he)?) / (2.0 * he),
        ];
        let mut var = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                var += grad[i] * self.covariance[i][j] * grad[j];
            }
        }
        Ok(WaldInterval::new(estimate, var))
    }

    pub fn log_likelihood_at(&self, values: &[f64], params: &GevParams) -> f64 {
        -neg_log_likelihood(values, params.mu(), params.sigma(), params.eps())
    }
}

// ---------------------------------------------------------------------------
// Synthetic panels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub mu: f64,
    pub sigma: f64,
    pub eps: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPanel {
    pub data: BlockSeries,
    pub truth: SimulationTruth,
    /// Realised group effects, one per group.
    pub deltas: Vec<f64>,
    pub groups: usize,
    pub per_group: usize,
    pub seed: u64,
}

/// Draw `groups` effects `delta_g ~ N(0, tau^2)`, then `per_group` maxima
/// from `GEV(mu + delta_g, sigma, eps)` for each group, all from stream 0
/// of `seed`. Records are tagged `group = g01, g02, ...`.
pub fn simulate_panel(
    truth: SimulationTruth,
    groups: usize,
    per_group: usize,
    seed: u64,
) -> Result<SyntheticPanel> {
    if groups == 0 || per_group == 0 {
        return Err(Error::Domain("groups and per_group must be at least 1".into()));
    }
    if !(truth.tau.is_finite() && truth.tau >= 0.0) {
        return Err(Error::Domain(format!("tau must be >= 0, got {}", truth.tau)));
    }
    GevParams::new(truth.mu, truth.sigma, truth.eps)?;

    let mut rng = stream_rng(seed, 0);
    let deltas: Vec<f64> = (0..groups)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            truth.tau * z
        })
        .collect();
    let width = groups.to_string().len().max(2);
    let mut records = Vec::with_capacity(groups * per_group);
    for (g, delta) in deltas.iter().enumerate() {
        let params = GevParams::new(truth.mu + delta, truth.sigma, truth.eps)?;
        let group = format!("g{:0width$}", g + 1);
        for (i, value) in params.sample(per_group, &mut rng).into_iter().enumerate() {
            records.push(BlockRecord {
                value,
                label: format!("{group}-{}", i + 1),
                tags: BTreeMap::from([(GROUP_TAG.to_string(), group.clone())]),
            });
        }
    }
    Ok(SyntheticPanel {
        data: BlockSeries::new(records, ExtremumKind::Max)?,
        truth,
        deltas,
        groups,
        per_group,
        seed,
    })
}
