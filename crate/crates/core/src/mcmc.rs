//! Adaptive random-walk Metropolis-within-Gibbs sampling.
//!
//! Each iteration updates, in order, the scalar blocks `mu`, `log_sigma`,
//! `eps` and, for random-location models, `tau` (on the log scale), every
//! `delta_g`, and a joint `shift` move `(mu + c, delta_g - c)` that leaves
//! the likelihood invariant and lets the chain move along the `mu`/`delta`
//! ridge quickly. Proposal scales are tuned by a Robbins–Monro rule on the
//! log scale during burn-in and frozen afterwards.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{random_effects_log_density, ModelSpec, ParamState};
use crate::rng::{stream_rng, StreamRng};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub adapt_window: usize,
    pub target_accept: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 4_000,
            thin: 5,
            seed: 1,
            chains: 1,
            adapt_window: 50,
            target_accept: 0.44,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.adapt_window == 0 {
            return Err(Error::Config("adapt_window must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        Ok(())
    }

    /// Number of draws kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Scalar Gaussian random-walk proposal with Robbins–Monro scale adaptation.
#[derive(Debug, Clone)]
pub struct ScalarProposal {
    log_scale: f64,
    window_accepted: usize,
    window_proposed: usize,
    accepted: usize,
    proposed: usize,
    batches: usize,
}

impl ScalarProposal {
    pub fn new(scale: f64) -> Self {
        Self {
            log_scale: scale.ln(),
            window_accepted: 0,
            window_proposed: 0,
            accepted: 0,
            proposed: 0,
            batches: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn propose<R: Rng + ?Sized>(&self, current: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        current + self.scale() * z
    }

    pub fn record(&mut self, accepted: bool) {
        self.window_proposed += 1;
        self.proposed += 1;
        if accepted {
            self.window_accepted += 1;
            self.accepted += 1;
        }
    }

    /// Move the log scale toward the target acceptance with gain `2/sqrt(b)`
    /// for the `b`-th adaptation batch.
    pub fn adapt(&mut self, target: f64) {
        if self.window_proposed > 0 {
            self.batches += 1;
            let rate = self.window_accepted as f64 / self.window_proposed as f64;
            let gain = 2.0 / (self.batches as f64).sqrt();
            self.log_scale = (self.log_scale + gain * (rate - target)).clamp(-30.0, 30.0);
        }
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    fn reset_counts(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Retained posterior draws, stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub parameter_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    /// `(block name, post-burn-in acceptance rate)`.
    pub acceptance_rates: Vec<(String, f64)>,
    pub seed_used: u64,
    /// Proposal scales when burn-in ended and when the chain finished.
    pub scales_at_burn_in_end: Vec<(String, f64)>,
    pub scales_at_end: Vec<(String, f64)>,
}

impl ChainDraws {
    /// Draws without sampler metadata, e.g. read back from CSV.
    pub fn from_columns(parameter_names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if parameter_names.len() != columns.len() {
            return Err(Error::Summary(format!(
                "{} names for {} columns",
                parameter_names.len(),
                columns.len()
            )));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Summary("columns have unequal lengths".into()));
            }
        }
        Ok(Self {
            parameter_names,
            columns,
            acceptance_rates: Vec::new(),
            seed_used: 0,
            scales_at_burn_in_end: Vec::new(),
            scales_at_end: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.parameter_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Mutable access for transformations such as location shifts.
    pub fn column_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        let i = self.parameter_names.iter().position(|n| n == name)?;
        Some(&mut self.columns[i])
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Group labels of the `delta[...]` columns.
    pub fn group_labels(&self) -> Vec<String> {
        self.parameter_names
            .iter()
            .filter_map(|n| delta_label(n).map(str::to_string))
            .collect()
    }

    /// One column per parameter, one row per retained draw. Values use the
    /// shortest round-trip representation, so reading back is exact.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.parameter_names)?;
        for i in 0..self.len() {
            w.write_record(self.columns.iter().map(|c| c[i].to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<chain csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid number '{field}'"),
                })?;
                col.push(v);
            }
        }
        Self::from_columns(names, columns)
    }
}

pub fn delta_column(label: &str) -> String {
    format!("delta[{label}]")
}

fn delta_label(name: &str) -> Option<&str> {
    name.strip_prefix("delta[")?.strip_suffix(']')
}

struct Sampler<'a> {
    spec: &'a ModelSpec,
    state: ParamState,
    group_ll: Vec<f64>,
    ll: f64,
    proposals: Vec<ScalarProposal>,
    names: Vec<String>,
}

const MU: usize = 0;
const LOG_SIGMA: usize = 1;
const EPS: usize = 2;
const TAU: usize = 3;
const SHIFT: usize = 4;
const FIRST_DELTA: usize = 5;

impl<'a> Sampler<'a> {
    fn new(spec: &'a ModelSpec) -> Result<Self> {
        let values = spec.values();
        let mean = stats::mean(values);
        let sd = stats::sample_sd(values)
            .filter(|s| *s > 0.0)
            .unwrap_or_else(|| (mean.abs() * 1e-3).max(1e-3));
        let n = values.len() as f64;

        let random = spec.is_random();
        let n_groups = spec.n_groups();
        let tau0 = if random {
            let gm = spec.group_means();
            stats::sample_sd(&gm)
                .map(|s| 0.5 * s)
                .filter(|t| *t > 0.0)
                .unwrap_or(0.1 * sd)
        } else {
            0.0
        };
        let mut state = ParamState {
            mu: mean,
            log_sigma: sd.ln(),
            eps: 0.1,
            tau: tau0,
            deltas: vec![0.0; n_groups],
        };

        let mut ok = false;
        for _ in 0..=20 {
            if crate::model::log_posterior(spec, &state)?.is_finite() {
                ok = true;
                break;
            }
            state.eps *= 0.5;
        }
        if !ok {
            return Err(Error::Initialization(format!(
                "no finite log-posterior at mu={}, sigma={}, eps shrunk to {} after 20 retries",
                state.mu,
                state.sigma(),
                state.eps
            )));
        }

        let mut names = vec![
            "mu".to_string(),
            "log_sigma".to_string(),
            "eps".to_string(),
            "tau".to_string(),
            "shift".to_string(),
        ];
        let mut proposals = vec![
            ScalarProposal::new(2.4 * sd / n.sqrt()),
            ScalarProposal::new(0.1),
            ScalarProposal::new(0.05),
            ScalarProposal::new(0.3),
            ScalarProposal::new(tau0.max(1e-3 * sd)),
        ];
        for (g, label) in spec.group_labels().iter().enumerate() {
            names.push(delta_column(label));
            let n_g = spec.members()[g].len() as f64;
            proposals.push(ScalarProposal::new(2.4 * sd / n_g.sqrt()));
        }

        let mut sampler = Self {
            spec,
            state,
            group_ll: Vec::new(),
            ll: 0.0,
            proposals,
            names,
        };
        sampler.group_ll = sampler.all_group_ll(
            sampler.state.mu,
            sampler.state.sigma(),
            sampler.state.eps,
            &sampler.state.deltas,
        );
        sampler.ll = sampler.group_ll.iter().sum();
        Ok(sampler)
    }

    fn active_blocks(&self) -> Vec<usize> {
        if self.spec.is_random() {
            let mut b = vec![MU, LOG_SIGMA, EPS, TAU];
            b.extend(FIRST_DELTA..FIRST_DELTA + self.spec.n_groups());
            b.push(SHIFT);
            b
        } else {
            vec![MU, LOG_SIGMA, EPS]
        }
    }

    fn all_group_ll(&self, mu: f64, sigma: f64, eps: f64, deltas: &[f64]) -> Vec<f64> {
        let groups = self.spec.members().len();
        (0..groups)
            .map(|g| {
                let loc = if deltas.is_empty() { mu } else { mu + deltas[g] };
                self.spec.group_log_likelihood(g, loc, sigma, eps)
            })
            .collect()
    }

    fn step_global<R: Rng + ?Sized>(&mut self, block: usize, rng: &mut R) {
        let priors = self.spec.priors();
        let st = &self.state;
        let (current, prior) = match block {
            MU => (st.mu, priors.mu),
            LOG_SIGMA => (st.log_sigma, priors.log_sigma),
            _ => (st.eps, priors.eps),
        };
        let proposed = self.proposals[block].propose(current, rng);
        let d_prior = prior.log_density(proposed) - prior.log_density(current);
        let (mu, log_sigma, eps) = match block {
            MU => (proposed, st.log_sigma, st.eps),
            LOG_SIGMA => (st.mu, proposed, st.eps),
            _ => (st.mu, st.log_sigma, proposed),
        };
        let new_group_ll = self.all_group_ll(mu, log_sigma.exp(), eps, &st.deltas);
        let new_ll: f64 = new_group_ll.iter().sum();
        let ok = accept(new_ll - self.ll + d_prior, rng);
        if ok {
            match block {
                MU => self.state.mu = proposed,
                LOG_SIGMA => self.state.log_sigma = proposed,
                _ => self.state.eps = proposed,
            }
            self.group_ll = new_group_ll;
            self.ll = new_ll;
        }
        self.proposals[block].record(ok);
    }

    /// Update on `log tau`; the `+ log tau` terms are the Jacobian.
    fn step_tau<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let prior = self.spec.priors().tau;
        let target = |tau: f64, deltas: &[f64]| {
            prior.log_density(tau) + random_effects_log_density(tau, deltas) + tau.ln()
        };
        let log_tau = self.state.tau.ln();
        let proposed = self.proposals[TAU].propose(log_tau, rng).exp();
        let ratio = target(proposed, &self.state.deltas) - target(self.state.tau, &self.state.deltas);
        let ok = proposed > 0.0 && proposed.is_finite() && accept(ratio, rng);
        if ok {
            self.state.tau = proposed;
        }
        self.proposals[TAU].record(ok);
    }

    fn step_delta<R: Rng + ?Sized>(&mut self, g: usize, rng: &mut R) {
        let block = FIRST_DELTA + g;
        let current = self.state.deltas[g];
        let proposed = self.proposals[block].propose(current, rng);
        let tau = self.state.tau;
        let d_prior = (current * current - proposed * proposed) / (2.0 * tau * tau);
        let new_ll = self.spec.group_log_likelihood(
            g,
            self.state.mu + proposed,
            self.state.sigma(),
            self.state.eps,
        );
        let ok = accept(new_ll - self.group_ll[g] + d_prior, rng);
        if ok {
            self.state.deltas[g] = proposed;
            self.ll += new_ll - self.group_ll[g];
            self.group_ll[g] = new_ll;
        }
        self.proposals[block].record(ok);
    }

    fn step_shift<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let c = self.proposals[SHIFT].propose(0.0, rng);
        let st = &self.state;
        let mu = st.mu + c;
        let deltas: Vec<f64> = st.deltas.iter().map(|d| d - c).collect();
        let priors = self.spec.priors();
        let d_prior = priors.mu.log_density(mu) - priors.mu.log_density(st.mu)
            + random_effects_log_density(st.tau, &deltas)
            - random_effects_log_density(st.tau, &st.deltas);
        let new_group_ll = self.all_group_ll(mu, st.sigma(), st.eps, &deltas);
        let new_ll: f64 = new_group_ll.iter().sum();
        let ok = accept(new_ll - self.ll + d_prior, rng);
        if ok {
            self.state.mu = mu;
            self.state.deltas = deltas;
            self.group_ll = new_group_ll;
            self.ll = new_ll;
        }
        self.proposals[SHIFT].record(ok);
    }

    fn sweep<R: Rng + ?Sized>(&mut self, blocks: &[usize], rng: &mut R) {
        for &b in blocks {
            match b {
                MU | LOG_SIGMA | EPS => self.step_global(b, rng),
                TAU => self.step_tau(rng),
                SHIFT => self.step_shift(rng),
                _ => self.step_delta(b - FIRST_DELTA, rng),
            }
        }
    }

    fn scales(&self, blocks: &[usize]) -> Vec<(String, f64)> {
        blocks
            .iter()
            .map(|&b| (self.names[b].clone(), self.proposals[b].scale()))
            .collect()
    }
}

fn output_names(spec: &ModelSpec) -> Vec<String> {
    let mut names: Vec<String> = ["mu", "sigma", "eps"].iter().map(|s| s.to_string()).collect();
    if spec.is_random() {
        names.push("tau".into());
        names.push("tau2".into());
        names.extend(spec.group_labels().iter().map(|l| delta_column(l)));
    }
    names
}

/// Run one chain seeded from `config.seed` (stream 0).
pub fn run_chain(spec: &ModelSpec, config: &McmcConfig) -> Result<ChainDraws> {
    let mut rng = stream_rng(config.seed, 0);
    run_chain_with_rng(spec, config, &mut rng)
}

/// Run `config.chains` independent chains concurrently; chain `c` uses
/// stream `c` of `config.seed`.
pub fn run_chains(spec: &ModelSpec, config: &McmcConfig) -> Result<Vec<ChainDraws>> {
    config.validate()?;
    (0..config.chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(config.seed, c);
            run_chain_with_rng(spec, config, &mut rng)
        })
        .collect()
}

pub fn run_chain_with_rng(
    spec: &ModelSpec,
    config: &McmcConfig,
    rng: &mut StreamRng,
) -> Result<ChainDraws> {
    config.validate()?;
    let mut sampler = Sampler::new(spec)?;
    let blocks = sampler.active_blocks();
    let names = output_names(spec);
    let mut columns = vec![Vec::with_capacity(config.retained()); names.len()];
    let mut scales_at_burn_in_end = Vec::new();

    for t in 0..config.iterations {
        sampler.sweep(&blocks, rng);
        if t < config.burn_in {
            if (t + 1) % config.adapt_window == 0 {
                for &b in &blocks {
                    sampler.proposals[b].adapt(config.target_accept);
                }
            }
            if t + 1 == config.burn_in {
                scales_at_burn_in_end = sampler.scales(&blocks);
                for &b in &blocks {
                    sampler.proposals[b].reset_counts();
                }
            }
            continue;
        }
        if (t - config.burn_in + 1).is_multiple_of(config.thin) {
            let st = &sampler.state;
            columns[0].push(st.mu);
            columns[1].push(st.sigma());
            columns[2].push(st.eps);
            if spec.is_random() {
                columns[3].push(st.tau);
                columns[4].push(st.tau * st.tau);
                for (g, d) in st.deltas.iter().enumerate() {
                    columns[5 + g].push(*d);
                }
            }
        }
    }
    if config.burn_in == 0 {
        scales_at_burn_in_end = sampler.scales(&blocks);
    }

    Ok(ChainDraws {
        parameter_names: names,
        columns,
        acceptance_rates: blocks
            .iter()
            .map(|&b| (sampler.names[b].clone(), sampler.proposals[b].acceptance_rate()))
            .collect(),
        seed_used: config.seed,
        scales_at_burn_in_end,
        scales_at_end: sampler.scales(&blocks),
    })
}

/// Adaptive random-walk Metropolis on a one-dimensional log density, with
/// the same adaptation, burn-in and thinning rules as [`run_chain`].
pub fn run_univariate<F, R>(
    log_target: F,
    init: f64,
    initial_scale: f64,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    config.validate()?;
    let mut x = init;
    let mut lp = log_target(x);
    if !lp.is_finite() {
        return Err(Error::Initialization(format!(
            "log target is not finite at the initial value {init}"
        )));
    }
    let mut proposal = ScalarProposal::new(initial_scale);
    let mut out = Vec::with_capacity(config.retained());
    for t in 0..config.iterations {
        let y = proposal.propose(x, rng);
        let lp_y = log_target(y);
        let ok = accept(lp_y - lp, rng);
        if ok {
            x = y;
            lp = lp_y;
        }
        proposal.record(ok);
        if t < config.burn_in {
            if (t + 1) % config.adapt_window == 0 {
                proposal.adapt(config.target_accept);
            }
        } else if (t - config.burn_in + 1).is_multiple_of(config.thin) {
            out.push(x);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Summaries and diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower95: f64,
    pub upper95: f64,
    /// `None` for zero-variance draws.
    pub ess: Option<f64>,
}

impl ParameterSummary {
    /// Mean, sd, equal-tail 95% interval and ESS of one sequence of draws.
    pub fn of(name: impl Into<String>, draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Summary("no draws".into()));
        }
        if draws.iter().any(|d| !d.is_finite()) {
            return Err(Error::Summary("draws contain non-finite values".into()));
        }
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            name: name.into(),
            mean: stats::mean(draws),
            sd: stats::sample_sd(draws).unwrap_or(0.0),
            lower95: stats::quantile_sorted(&sorted, 0.025),
            upper95: stats::quantile_sorted(&sorted, 0.975),
            ess: stats::effective_sample_size(draws),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParameterSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

pub const MIN_SUMMARY_DRAWS: usize = 10;

pub fn summarize(draws: &ChainDraws) -> Result<PosteriorSummary> {
    if draws.len() < MIN_SUMMARY_DRAWS {
        return Err(Error::Summary(format!(
            "need at least {MIN_SUMMARY_DRAWS} retained draws, have {}",
            draws.len()
        )));
    }
    let parameters = draws
        .parameter_names
        .iter()
        .zip(draws.columns())
        .map(|(name, col)| ParameterSummary::of(name.clone(), col))
        .collect::<Result<_>>()?;
    Ok(PosteriorSummary { parameters })
}

impl fmt::Display for PosteriorSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:>10} {:>10} {:>12} {:>12} {:>9}",
            "Parameter", "Estimate", "Std.Dev.", "95% Lower", "95% Upper", "ESS"
        )?;
        for p in &self.parameters {
            let ess = p.ess.map_or_else(|| "NA".to_string(), |e| format!("{e:.0}"));
            writeln!(
                f,
                "{:<20} {:>10.2} {:>10.2} {:>12.2} {:>12.2} {:>9}",
                p.name, p.mean, p.sd, p.lower95, p.upper95, ess
            )?;
        }
        Ok(())
    }
}

/// Geweke |z| above this is reported as a convergence warning.
pub const GEWEKE_WARN: f64 = 3.0;
pub const MIN_DIAGNOSTIC_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub ess: Option<f64>,
    pub geweke_z: Option<f64>,
    pub degenerate: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub retained: usize,
    pub seed: u64,
    pub acceptance_rates: Vec<(String, f64)>,
    pub parameters: Vec<ParameterDiagnostics>,
    pub warnings: Vec<String>,
}

/// Geweke z-score comparing the first 10% with the last 50% of a chain,
/// each mean's variance estimated as `var / ESS`.
pub fn geweke_z(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    let a = &xs[..n / 10];
    let b = &xs[n - n / 2..];
    let part = |s: &[f64]| -> Option<(f64, f64)> {
        let ess = stats::effective_sample_size(s)?;
        let var = stats::sample_sd(s)?.powi(2);
        Some((stats::mean(s), var / ess))
    };
    let (ma, va) = part(a)?;
    let (mb, vb) = part(b)?;
    Some((ma - mb) / (va + vb).sqrt())
}

pub fn diagnostics(draws: &ChainDraws) -> DiagnosticReport {
    let mut warnings = Vec::new();
    let n = draws.len();
    let enough = n >= MIN_DIAGNOSTIC_DRAWS;
    if !enough {
        warnings.push(format!(
            "only {n} retained draws; Geweke diagnostics need at least {MIN_DIAGNOSTIC_DRAWS}"
        ));
    }
    let parameters = draws
        .parameter_names
        .iter()
        .zip(draws.columns())
        .map(|(name, col)| {
            let degenerate = stats::sample_sd(col).is_none_or(|s| s == 0.0);
            let ess = stats::effective_sample_size(col);
            let geweke = if enough && !degenerate { geweke_z(col) } else { None };
            let flagged = degenerate || geweke.is_some_and(|z| z.abs() > GEWEKE_WARN);
            if degenerate {
                warnings.push(format!("{name}: degenerate chain (zero variance)"));
            } else if let Some(z) = geweke.filter(|z| z.abs() > GEWEKE_WARN) {
                warnings.push(format!("{name}: Geweke z = {z:.2} exceeds {GEWEKE_WARN}"));
            }
            ParameterDiagnostics {
                name: name.clone(),
                ess,
                geweke_z: geweke,
                degenerate,
                flagged,
            }
        })
        .collect();
    DiagnosticReport {
        retained: n,
        seed: draws.seed_used,
        acceptance_rates: draws.acceptance_rates.clone(),
        parameters,
        warnings,
    }
}
