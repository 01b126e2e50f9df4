//! Fixed- and random-location GEV models.
//!
//! In random mode every record `i` belonging to group `g(i)` is modelled as
//! `x_i ~ GEV(mu + delta_g, sigma, eps)` with `delta_g ~ N(0, tau^2)`; the
//! scale and shape are pooled across groups. Fixed mode is the special case
//! `delta = 0`.
//!
//! The parameter vector is `(mu, log sigma, eps)` plus `tau` and the latent
//! `delta_g` in random mode. Priors are expressed on those coordinates, so
//! [`log_prior`] is a density over `log sigma` and over `tau` itself.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::blocks::BlockSeries;
use crate::error::{Error, Result};
use crate::gev::log_pdf_raw;
use crate::stats;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "group_tag")]
pub enum LocationMode {
    Fixed,
    Random(String),
}

impl LocationMode {
    pub fn group_tag(&self) -> Option<&str> {
        match self {
            LocationMode::Fixed => None,
            LocationMode::Random(tag) => Some(tag),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub sd: f64,
}

impl NormalPrior {
    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -LN_SQRT_2PI - self.sd.ln() - 0.5 * z * z
    }
}

/// Half-normal on `[0, inf)` with the given scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfNormalPrior {
    pub scale: f64,
}

impl HalfNormalPrior {
    pub fn log_density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = x / self.scale;
        2f64.ln() - LN_SQRT_2PI - self.scale.ln() - 0.5 * z * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu: NormalPrior,
    pub log_sigma: NormalPrior,
    pub eps: NormalPrior,
    /// Only used in random mode.
    pub tau: HalfNormalPrior,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let scales = [
            ("mu sd", self.mu.sd),
            ("log_sigma sd", self.log_sigma.sd),
            ("eps sd", self.eps.sd),
            ("tau scale", self.tau.scale),
        ];
        for (name, v) in scales {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Model(format!("prior {name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("mu mean", self.mu.mean),
            ("log_sigma mean", self.log_sigma.mean),
            ("eps mean", self.eps.mean),
        ] {
            if !v.is_finite() {
                return Err(Error::Model(format!("prior {name} must be finite")));
            }
        }
        Ok(())
    }

    /// Diffuse data-scaled defaults:
    /// `mu ~ N(mean, (10 sd)^2)`, `log sigma ~ N(log sd, 10^2)`,
    /// `eps ~ N(0, 1)`, `tau ~ HalfNormal(2 sd(group means))`.
    ///
    /// `group_means` may be empty (fixed mode); the tau scale then falls back
    /// to twice the sample sd.
    pub fn diffuse(values: &[f64], group_means: &[f64]) -> Self {
        let mean = stats::mean(values);
        let sd = positive_scale(stats::sample_sd(values), mean);
        let tau_scale = 2.0 * positive_scale(stats::sample_sd(group_means), sd);
        PriorSpec {
            mu: NormalPrior {
                mean,
                sd: 10.0 * sd,
            },
            log_sigma: NormalPrior {
                mean: sd.ln(),
                sd: 10.0,
            },
            eps: NormalPrior { mean: 0.0, sd: 1.0 },
            tau: HalfNormalPrior { scale: tau_scale },
        }
    }
}

/// `sd` if usable, otherwise a small positive fallback on the scale of `reference`.
fn positive_scale(sd: Option<f64>, reference: f64) -> f64 {
    match sd {
        Some(s) if s > 0.0 && s.is_finite() => s,
        _ => (reference.abs() * 1e-3).max(1e-3),
    }
}

/// A point in parameter space. `deltas[g]` belongs to `spec.group_labels()[g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub mu: f64,
    pub log_sigma: f64,
    pub eps: f64,
    pub tau: f64,
    pub deltas: Vec<f64>,
}

impl ParamState {
    pub fn fixed(mu: f64, log_sigma: f64, eps: f64) -> Self {
        Self {
            mu,
            log_sigma,
            eps,
            tau: 0.0,
            deltas: Vec::new(),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    mode: LocationMode,
    priors: PriorSpec,
    data: BlockSeries,
    values: Vec<f64>,
    group_of: Vec<usize>,
    group_labels: Vec<String>,
    members: Vec<Vec<usize>>,
    likelihood_enabled: bool,
}

impl ModelSpec {
    /// Build a model with diffuse default priors (see [`PriorSpec::diffuse`]).
    pub fn new(data: BlockSeries, mode: LocationMode) -> Result<Self> {
        Self::with_priors(data, mode, None)
    }

    pub fn fixed(data: BlockSeries) -> Result<Self> {
        Self::new(data, LocationMode::Fixed)
    }

    pub fn random(data: BlockSeries, group_tag: impl Into<String>) -> Result<Self> {
        Self::new(data, LocationMode::Random(group_tag.into()))
    }

    pub fn with_priors(
        data: BlockSeries,
        mode: LocationMode,
        priors: Option<PriorSpec>,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyInput("model data has no records".into()));
        }
        let values = data.values();
        let mut group_labels: Vec<String> = Vec::new();
        let mut group_of = Vec::with_capacity(values.len());
        if let LocationMode::Random(tag) = &mode {
            if !data.has_tag(tag) {
                return Err(Error::Model(format!(
                    "group tag '{tag}' not present in data (available: {})",
                    data.tag_names().join(", ")
                )));
            }
            for r in data.records() {
                let label = &r.tags[tag];
                let g = match group_labels.iter().position(|l| l == label) {
                    Some(g) => g,
                    None => {
                        group_labels.push(label.clone());
                        group_labels.len() - 1
                    }
                };
                group_of.push(g);
            }
            if group_labels.len() < 2 {
                return Err(Error::Model(format!(
                    "random location on '{tag}' needs at least 2 groups, found {}",
                    group_labels.len()
                )));
            }
        } else {
            group_of.resize(values.len(), 0);
        }
        let n_groups = group_labels.len().max(1);
        let mut members = vec![Vec::new(); n_groups];
        for (i, &g) in group_of.iter().enumerate() {
            members[g].push(i);
        }

        let priors = match priors {
            Some(p) => p,
            None => {
                let group_means: Vec<f64> = if group_labels.is_empty() {
                    Vec::new()
                } else {
                    members
                        .iter()
                        .map(|m| stats::mean(&m.iter().map(|&i| values[i]).collect::<Vec<_>>()))
                        .collect()
                };
                PriorSpec::diffuse(&values, &group_means)
            }
        };
        priors.validate()?;

        Ok(Self {
            mode,
            priors,
            data,
            values,
            group_of,
            group_labels,
            members,
            likelihood_enabled: true,
        })
    }

    /// Same model with the likelihood switched off, leaving the prior as the
    /// target. Used to validate the sampler against known prior moments.
    pub fn prior_only(mut self) -> Self {
        self.likelihood_enabled = false;
        self
    }

    pub fn mode(&self) -> &LocationMode {
        &self.mode
    }

    pub fn is_random(&self) -> bool {
        matches!(self.mode, LocationMode::Random(_))
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    pub fn data(&self) -> &BlockSeries {
        &self.data
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Distinct group labels in order of first appearance; empty in fixed mode.
    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn likelihood_enabled(&self) -> bool {
        self.likelihood_enabled
    }

    /// Record indices of each group (one group holding everything in fixed mode).
    pub(crate) fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Sample mean of the records of each group.
    pub fn group_means(&self) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| stats::mean(&m.iter().map(|&i| self.values[i]).collect::<Vec<_>>()))
            .collect()
    }

    fn check_dims(&self, state: &ParamState) -> Result<()> {
        if state.deltas.len() != self.n_groups() {
            return Err(Error::Model(format!(
                "state has {} random effects, model has {} groups",
                state.deltas.len(),
                self.n_groups()
            )));
        }
        Ok(())
    }

    /// Log-likelihood of the records of group `g` at location `mu_g`.
    #[inline]
    pub(crate) fn group_log_likelihood(&self, g: usize, mu_g: f64, sigma: f64, eps: f64) -> f64 {
        if !self.likelihood_enabled {
            return 0.0;
        }
        let mut ll = 0.0;
        for &i in &self.members[g] {
            ll += log_pdf_raw(mu_g, sigma, eps, self.values[i]);
            if ll == f64::NEG_INFINITY {
                break;
            }
        }
        ll
    }
}

/// `sum_i log h(x_i; mu + delta_g(i), sigma, eps)`, summed in record order.
pub fn log_likelihood(spec: &ModelSpec, state: &ParamState) -> Result<f64> {
    spec.check_dims(state)?;
    if !spec.likelihood_enabled {
        return Ok(0.0);
    }
    let sigma = state.sigma();
    let mut ll = 0.0;
    for (i, &x) in spec.values.iter().enumerate() {
        let loc = match spec.mode {
            LocationMode::Fixed => state.mu,
            LocationMode::Random(_) => state.mu + state.deltas[spec.group_of[i]],
        };
        ll += log_pdf_raw(loc, sigma, state.eps, x);
    }
    Ok(ll)
}

/// Log of the `N(0, tau^2)` density of every random effect, summed.
pub(crate) fn random_effects_log_density(tau: f64, deltas: &[f64]) -> f64 {
    if !(tau.is_finite() && tau > 0.0) {
        return f64::NEG_INFINITY;
    }
    let norm = -LN_SQRT_2PI - tau.ln();
    deltas
        .iter()
        .map(|d| {
            let z = d / tau;
            norm - 0.5 * z * z
        })
        .sum()
}

/// Prior log-density over `(mu, log sigma, eps)` and, in random mode,
/// `tau` and the random effects.
pub fn log_prior(spec: &ModelSpec, state: &ParamState) -> Result<f64> {
    spec.check_dims(state)?;
    let p = &spec.priors;
    let mut lp = p.mu.log_density(state.mu)
        + p.log_sigma.log_density(state.log_sigma)
        + p.eps.log_density(state.eps);
    if spec.is_random() {
        if state.tau < 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        lp += p.tau.log_density(state.tau) + random_effects_log_density(state.tau, &state.deltas);
    }
    Ok(lp)
}

pub fn log_posterior(spec: &ModelSpec, state: &ParamState) -> Result<f64> {
    let lp = log_prior(spec, state)?;
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(lp + log_likelihood(spec, state)?)
}

/// Closed-form `log N(x; m, s^2)`, exposed for oracle comparisons.
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * ((x - mean) / sd).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{BlockRecord, ExtremumKind};
    use crate::gev::GevParams;
    use std::collections::BTreeMap;

    fn grouped(values: &[(f64, &str)]) -> BlockSeries {
        BlockSeries::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &(value, g))| BlockRecord {
                    value,
                    label: i.to_string(),
                    tags: BTreeMap::from([("grp".to_string(), g.to_string())]),
                })
                .collect(),
            ExtremumKind::Max,
        )
        .unwrap()
    }

    fn five() -> BlockSeries {
        grouped(&[(1.0, "a"), (2.5, "b"), (0.3, "a"), (4.0, "c"), (1.7, "b")])
    }

    #[test]
    fn single_record_fixed_likelihood() {
        let spec = ModelSpec::fixed(BlockSeries::from_values(&[0.0]).unwrap()).unwrap();
        let ll = log_likelihood(&spec, &ParamState::fixed(0.0, 0.0, 0.0)).unwrap();
        assert!((ll + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_effects_reduce_to_fixed_exactly() {
        let fixed = ModelSpec::fixed(five()).unwrap();
        let random = ModelSpec::random(five(), "grp").unwrap();
        let mut st = ParamState::fixed(1.2, 0.3, 0.15);
        let ll_fixed = log_likelihood(&fixed, &st).unwrap();
        st.tau = 1.0;
        st.deltas = vec![0.0; 3];
        assert_eq!(log_likelihood(&random, &st).unwrap(), ll_fixed);
    }

    #[test]
    fn likelihood_is_sum_of_independent_terms() {
        let spec = ModelSpec::random(five(), "grp").unwrap();
        assert_eq!(spec.group_labels(), ["a", "b", "c"]);
        let st = ParamState {
            mu: 1.1,
            log_sigma: 0.2,
            eps: 0.1,
            tau: 0.7,
            deltas: vec![-0.2, 0.4, 0.9],
        };
        let oracle: f64 = [(1.0, 0), (2.5, 1), (0.3, 0), (4.0, 2), (1.7, 1)]
            .iter()
            .map(|&(x, g)| {
                GevParams::new(st.mu + st.deltas[g], st.sigma(), st.eps)
                    .unwrap()
                    .log_pdf(x)
            })
            .sum();
        assert!((log_likelihood(&spec, &st).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let spec = ModelSpec::random(five(), "grp").unwrap();
        let st = ParamState::fixed(0.0, 0.0, 0.0);
        assert!(matches!(log_likelihood(&spec, &st), Err(Error::Model(_))));
        assert!(log_prior(&spec, &st).is_err());
    }

    #[test]
    fn missing_tag_and_single_group_rejected() {
        let err = ModelSpec::random(five(), "month").unwrap_err();
        assert!(err.to_string().contains("month"));
        let one = grouped(&[(1.0, "a"), (2.0, "a")]);
        assert!(ModelSpec::random(one, "grp").is_err());
    }

    #[test]
    fn prior_at_means_is_closed_form() {
        let spec = ModelSpec::fixed(five()).unwrap();
        let p = *spec.priors();
        let st = ParamState::fixed(p.mu.mean, p.log_sigma.mean, p.eps.mean);
        let expected = -3.0 * LN_SQRT_2PI - p.mu.sd.ln() - p.log_sigma.sd.ln() - p.eps.sd.ln();
        assert!((log_prior(&spec, &st).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn prior_matches_per_density_oracle() {
        let spec = ModelSpec::random(five(), "grp").unwrap();
        let p = *spec.priors();
        let st = ParamState {
            mu: 0.4,
            log_sigma: -0.3,
            eps: 0.25,
            tau: 1.3,
            deltas: vec![0.5, -1.0, 0.1],
        };
        let half_normal = (2.0 / (PI * p.tau.scale * p.tau.scale)).sqrt().ln()
            - st.tau * st.tau / (2.0 * p.tau.scale * p.tau.scale);
        let oracle = normal_log_density(st.mu, p.mu.mean, p.mu.sd)
            + normal_log_density(st.log_sigma, p.log_sigma.mean, p.log_sigma.sd)
            + normal_log_density(st.eps, p.eps.mean, p.eps.sd)
            + half_normal
            + st.deltas.iter().map(|&d| normal_log_density(d, 0.0, st.tau)).sum::<f64>();
        assert!((log_prior(&spec, &st).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn degenerate_tau() {
        let spec = ModelSpec::random(five(), "grp").unwrap();
        let mut st = ParamState {
            mu: 1.0,
            log_sigma: 0.0,
            eps: 0.1,
            tau: -0.5,
            deltas: vec![0.1, 0.0, 0.0],
        };
        assert_eq!(log_prior(&spec, &st).unwrap(), f64::NEG_INFINITY);
        st.tau = 1e-200;
        assert_eq!(log_prior(&spec, &st).unwrap(), f64::NEG_INFINITY);
        st.tau = 0.0;
        assert_eq!(log_posterior(&spec, &st).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn posterior_propagates_infinite_likelihood() {
        let spec = ModelSpec::fixed(five()).unwrap();
        // eps = -1 with sigma = 1 puts the upper endpoint at mu + 1 = 1.5 < 4.0
        let st = ParamState::fixed(0.5, 0.0, -1.0);
        assert_eq!(log_likelihood(&spec, &st).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_posterior(&spec, &st).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_only_disables_likelihood() {
        let spec = ModelSpec::fixed(five()).unwrap().prior_only();
        let st = ParamState::fixed(0.5, 0.0, -1.0);
        assert_eq!(log_likelihood(&spec, &st).unwrap(), 0.0);
        assert!(log_posterior(&spec, &st).unwrap().is_finite());
    }
}
