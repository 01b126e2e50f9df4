//! Return-level posteriors and percentile-annotated reports.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::blocks::BlockSeries;
use crate::error::{Error, Result};
use crate::gev::GevParams;
use crate::mcmc::{delta_column, ChainDraws, ParameterSummary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "scope", content = "group")]
pub enum Scope {
    /// `delta = 0`: the overall return level of the model.
    Population,
    /// Location `mu + delta_g` of one group.
    Group(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Population => f.write_str("population"),
            Scope::Group(g) => write!(f, "group:{g}"),
        }
    }
}

/// `R^k` evaluated at every retained draw.
pub fn return_level_posterior(draws: &ChainDraws, k: f64, scope: &Scope) -> Result<Vec<f64>> {
    let col = |name: &str| {
        draws
            .column(name)
            .ok_or_else(|| Error::Report(format!("draws have no '{name}' column")))
    };
    let mu = col("mu")?;
    let sigma = col("sigma")?;
    let eps = col("eps")?;
    let delta = match scope {
        Scope::Population => None,
        Scope::Group(g) => Some(col(&delta_column(g))?),
    };
    (0..draws.len())
        .map(|i| {
            let loc = match delta {
                Some(d) => mu[i] + d[i],
                None => mu[i],
            };
            GevParams::new(loc, sigma[i], eps[i])?.return_level(k)
        })
        .collect()
}

/// Empirical percentiles (unrounded) of the reported bounds in the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileAnnotations {
    pub lower: f64,
    pub estimate: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelReport {
    pub k: f64,
    pub scope: Scope,
    /// Posterior mean of the per-draw return levels.
    pub estimate: f64,
    pub sd: f64,
    pub lower95: f64,
    pub upper95: f64,
    pub percentile_of: PercentileAnnotations,
    pub n_blocks: usize,
    /// Set when `k` exceeds ten times the number of observed blocks.
    pub extrapolation_warning: bool,
}

pub fn build_report(
    rk_draws: &[f64],
    bs: &BlockSeries,
    k: f64,
    scope: Scope,
) -> Result<ReturnLevelReport> {
    if rk_draws.is_empty() {
        return Err(Error::Report("no return-level draws".into()));
    }
    if bs.is_empty() {
        return Err(Error::Report("no observed block maxima".into()));
    }
    let s = ParameterSummary::of("rk", rk_draws)?;
    let data = bs.values();
    let pct = |v: f64| crate::blocks::empirical_percentile(v, &data);
    Ok(ReturnLevelReport {
        k,
        scope,
        estimate: s.mean,
        sd: s.sd,
        lower95: s.lower95,
        upper95: s.upper95,
        percentile_of: PercentileAnnotations {
            lower: pct(s.lower95),
            estimate: pct(s.mean),
            upper: pct(s.upper95),
        },
        n_blocks: bs.len(),
        extrapolation_warning: k > 10.0 * bs.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCheck {
    pub covered: bool,
    pub target_percentile: f64,
    /// Empirical `target_percentile` quantile of the block maxima.
    pub target_value: f64,
    pub narrative: String,
}

/// Whether the empirical `target_percentile` of the maxima lies inside the
/// report's 95% interval.
pub fn coverage_check(
    report: &ReturnLevelReport,
    bs: &BlockSeries,
    target_percentile: f64,
) -> Result<CoverageCheck> {
    if !(0.0..=100.0).contains(&target_percentile) {
        return Err(Error::Domain(format!(
            "target percentile must lie in [0, 100], got {target_percentile}"
        )));
    }
    let value = bs.empirical_quantile(target_percentile / 100.0)?;
    Ok(coverage_of_value(report, value, target_percentile))
}

/// As [`coverage_check`] with an externally supplied target value.
pub fn coverage_of_value(report: &ReturnLevelReport, value: f64, target_percentile: f64) -> CoverageCheck {
    let covered = report.lower95 <= value && value <= report.upper95;
    let narrative = format!(
        "{}th percentile of the maxima ({value:.2}) is {} the 95% interval of R^{} ({:.2}, {:.2})",
        fmt_num(target_percentile),
        if covered { "within" } else { "outside" },
        fmt_num(report.k),
        report.lower95,
        report.upper95,
    );
    CoverageCheck {
        covered,
        target_percentile,
        target_value: value,
        narrative,
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        x.to_string()
    }
}

/// Aligned text table with two-decimal values and integer percentiles.
pub fn format_table(reports: &[ReturnLevelReport]) -> String {
    let mut out = format!(
        "{:<20} {:>6} {:>16} {:>12} {:>16} {:>16}\n",
        "Scope", "k", "95% Lower Bound", "Estimate", "Std. Deviation", "95% Upper Bound"
    );
    for r in reports {
        let annotated = |v: f64, p: f64| format!("{v:.2} {:.0}%", p.round());
        out.push_str(&format!(
            "{:<20} {:>6} {:>16} {:>12} {:>16.2} {:>16}{}\n",
            r.scope.to_string(),
            fmt_num(r.k),
            annotated(r.lower95, r.percentile_of.lower),
            annotated(r.estimate, r.percentile_of.estimate),
            r.sd,
            annotated(r.upper95, r.percentile_of.upper),
            if r.extrapolation_warning { "  (extrapolated)" } else { "" },
        ));
    }
    out.push_str("Percentages: share of observed block maxima at or below the value.\n");
    out
}
