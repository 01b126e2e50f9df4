//! Generalized Extreme Value distribution.
//!
//! With location `mu`, scale `sigma > 0` and shape `eps`, the cdf is
//!
//! ```text
//! H(x) = exp(-(1 + eps (x - mu) / sigma)^(-1/eps))   eps != 0
//! H(x) = exp(-exp(-(x - mu) / sigma))                 eps == 0
//! ```
//!
//! `eps < 0` gives the Weibull type with a finite upper endpoint
//! `mu - sigma / eps`, `eps > 0` the Fréchet type with a finite lower
//! endpoint, and `eps == 0` the unbounded Gumbel type. Shapes with
//! `|eps| < GUMBEL_TOL` are evaluated on the Gumbel branch.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shapes closer to zero than this use the Gumbel formulas.
pub const GUMBEL_TOL: f64 = 1e-9;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    /// `eps < 0`, bounded above.
    Weibull,
    /// `eps == 0`.
    Gumbel,
    /// `eps > 0`, heavy upper tail.
    Frechet,
}

/// Interval of positive density. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub lower: f64,
    pub upper: f64,
}

impl SupportInterval {
    /// Open-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

/// A validated GEV parameter triple.
///
/// Construction through [`GevParams::new`] guarantees finite fields and
/// `sigma > 0`, so the distribution functions themselves are infallible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct GevParams {
    mu: f64,
    sigma: f64,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    mu: f64,
    sigma: f64,
    eps: f64,
}

impl TryFrom<RawParams> for GevParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        GevParams::new(raw.mu, raw.sigma, raw.eps)
    }
}

impl From<GevParams> for RawParams {
    fn from(p: GevParams) -> Self {
        RawParams {
            mu: p.mu,
            sigma: p.sigma,
            eps: p.eps,
        }
    }
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, eps: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && eps.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "parameters must be finite (mu={mu}, sigma={sigma}, eps={eps})"
            )));
        }
        if sigma <= 0.0 {
            return Err(Error::ParameterDomain(format!(
                "scale must be positive, got sigma={sigma}"
            )));
        }
        Ok(Self { mu, sigma, eps })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Same distribution shifted to location `mu`.
    pub fn with_location(&self, mu: f64) -> Result<Self> {
        Self::new(mu, self.sigma, self.eps)
    }

    fn is_gumbel(&self) -> bool {
        self.eps.abs() < GUMBEL_TOL
    }

    pub fn shape_kind(&self) -> ShapeKind {
        if self.is_gumbel() {
            ShapeKind::Gumbel
        } else if self.eps < 0.0 {
            ShapeKind::Weibull
        } else {
            ShapeKind::Frechet
        }
    }

    pub fn support(&self) -> SupportInterval {
        if self.is_gumbel() {
            return SupportInterval {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            };
        }
        let endpoint = self.mu - self.sigma / self.eps;
        if self.eps < 0.0 {
            SupportInterval {
                lower: f64::NEG_INFINITY,
                upper: endpoint,
            }
        } else {
            SupportInterval {
                lower: endpoint,
                upper: f64::INFINITY,
            }
        }
    }

    /// Distribution function. Outside the support this is exactly 0 or 1.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        if self.is_gumbel() {
            return (-(-z).exp()).exp();
        }
        let ez = self.eps * z;
        if ez <= -1.0 {
            // t = 1 + eps z <= 0: below the lower endpoint (eps > 0) or
            // above the upper endpoint (eps < 0).
            return if self.eps > 0.0 { 0.0 } else { 1.0 };
        }
        (-(-ez.ln_1p() / self.eps).exp()).exp()
    }

    /// Log density; `-inf` outside the open support.
    pub fn log_pdf(&self, x: f64) -> f64 {
        log_pdf_raw(self.mu, self.sigma, self.eps, x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Inverse cdf for `p` in the open unit interval.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "probability must lie in (0, 1), got {p}"
            )));
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        // y = -log p > 0
        let log_y = (-p.ln()).ln();
        if self.is_gumbel() {
            self.mu - self.sigma * log_y
        } else {
            // mu - (sigma/eps) [1 - y^(-eps)] written with expm1 for accuracy
            // at small |eps|.
            self.mu + self.sigma * (-self.eps * log_y).exp_m1() / self.eps
        }
    }

    /// Return level `R^k = H^{-1}(1 - 1/k)`: the level exceeded by a block
    /// maximum with probability `1/k`.
    pub fn return_level(&self, k: f64) -> Result<f64> {
        if !(k.is_finite() && k > 1.0) {
            return Err(Error::Domain(format!(
                "return period k must be a finite value > 1, got {k}"
            )));
        }
        // -log(1 - 1/k) via ln_1p keeps precision for large k.
        let y = -(-1.0 / k).ln_1p();
        let log_y = y.ln();
        Ok(if self.is_gumbel() {
            self.mu - self.sigma * log_y
        } else {
            self.mu + self.sigma * (-self.eps * log_y).exp_m1() / self.eps
        })
    }

    /// Mean of the distribution. Infinite for `eps >= 1`.
    pub fn mean(&self) -> f64 {
        if self.is_gumbel() {
            return self.mu + self.sigma * EULER_GAMMA;
        }
        if self.eps >= 1.0 {
            return f64::INFINITY;
        }
        let gamma = statrs::function::gamma::ln_gamma(1.0 - self.eps).exp();
        self.mu + self.sigma * (gamma - 1.0) / self.eps
    }

    /// `n` independent draws by inverse transform of open-interval uniforms.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                self.quantile_unchecked(u)
            })
            .collect()
    }
}

/// Log density without parameter validation. Invalid scales give `-inf`.
#[inline]
pub(crate) fn log_pdf_raw(mu: f64, sigma: f64, eps: f64, x: f64) -> f64 {
    if !(sigma.is_finite() && sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x - mu) / sigma;
    if eps.abs() < GUMBEL_TOL {
        return -sigma.ln() - z - (-z).exp();
    }
    let ez = eps * z;
    if ez <= -1.0 {
        return f64::NEG_INFINITY;
    }
    let log_t = ez.ln_1p();
    -sigma.ln() - (1.0 + 1.0 / eps) * log_t - (-log_t / eps).exp()
}
