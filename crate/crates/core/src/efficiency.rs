//! Packet-success efficiency functions and the optimal target SINR.
//!
//! An efficiency function `f(γ)` gives the probability that a symbol sent
//! at SINR `γ` is received correctly. The bits/joule utility of a single
//! carrier is proportional to `f(γ)/γ` at fixed interference, which peaks
//! where `f(γ) = γ·f'(γ)`. That peak is [`GammaStar`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower end of the root bracket. The equation always has the trivial root
/// `γ = 0`, so the bracket starts strictly above it.
pub const BRACKET_LO: f64 = 1e-6;
pub const BRACKET_HI: f64 = 1e3;
/// Absolute tolerance on `f(γ) - γ·f'(γ)` at the returned root.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// S-shaped efficiency function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EfficiencyFunction {
    /// `f(γ) = (1 - e^(-γ))^M`.
    ExponentialPower { m: u32 },
}

impl EfficiencyFunction {
    pub fn exponential_power(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("shape parameter M must be >= 1".into()));
        }
        Ok(EfficiencyFunction::ExponentialPower { m })
    }

    pub fn shape(&self) -> u32 {
        match *self {
            EfficiencyFunction::ExponentialPower { m } => m,
        }
    }

    /// `f(γ)`.
    pub fn eval(&self, gamma: f64) -> Result<f64> {
        check_gamma(gamma)?;
        Ok(self.value(gamma))
    }

    /// `f'(γ)`, analytic.
    pub fn deriv(&self, gamma: f64) -> Result<f64> {
        check_gamma(gamma)?;
        Ok(self.slope(gamma))
    }

    /// Unchecked `f(γ)` for `γ >= 0`; the hot path of utility evaluation.
    pub(crate) fn value(&self, gamma: f64) -> f64 {
        match *self {
            EfficiencyFunction::ExponentialPower { m } => {
                success_prob(gamma).powi(m as i32)
            }
        }
    }

    pub(crate) fn slope(&self, gamma: f64) -> f64 {
        match *self {
            EfficiencyFunction::ExponentialPower { m } => {
                m as f64 * success_prob(gamma).powi(m as i32 - 1) * (-gamma).exp()
            }
        }
    }

    /// Sign of `f(γ) - γ·f'(γ)` for `γ > 0`, computed in log space so that
    /// large `M` does not underflow both terms to zero near the origin.
    fn balance_sign(&self, gamma: f64) -> f64 {
        match *self {
            EfficiencyFunction::ExponentialPower { m } => {
                // f / (γ f') = (1 - e^-γ) / (γ M e^-γ) = (e^γ - 1) / (γ M)
                let log_ratio = gamma.exp_m1().ln() - gamma.ln() - (m as f64).ln();
                log_ratio.signum()
            }
        }
    }

    /// Solves `f(γ) = γ·f'(γ)` for its unique positive root by bisection.
    pub fn gamma_star(&self) -> Result<GammaStar> {
        let m = self.shape();
        if m < 2 {
            return Err(Error::NoPositiveRoot { m });
        }
        let (mut lo, mut hi) = (BRACKET_LO, BRACKET_HI);
        if self.balance_sign(lo) >= 0.0 || self.balance_sign(hi) <= 0.0 {
            return Err(Error::BracketFailure { lo, hi });
        }
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.balance_sign(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let residual_at = |g: f64| self.value(g) - g * self.slope(g);
        let (value, residual) = [lo, hi]
            .into_iter()
            .map(|g| (g, residual_at(g)))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("two candidates");
        debug_assert!(residual.abs() <= RESIDUAL_TOL, "residual {residual}");
        Ok(GammaStar { value, residual })
    }
}

/// `1 - e^(-γ)` without cancellation near zero.
fn success_prob(gamma: f64) -> f64 {
    -(-gamma).exp_m1()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "gamma",
            value: gamma,
        })
    }
}

/// The bits/joule-optimal SINR, common to every user and carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaStar {
    pub value: f64,
    /// `f(γ*) - γ*·f'(γ*)` at the returned value.
    pub residual: f64,
}
