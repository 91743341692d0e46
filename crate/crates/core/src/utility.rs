//! Additively separable utilities `f(x, c) = alpha * phi1(x) + beta * phi2(c)`
//! where `x` is the one-period portfolio return and `c` the turnover cost
//! fraction paid at rebalancing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Utility family with its shape parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityKind {
    /// `phi1 = ln(1 + x)`, `phi2 = ln(1 - c)`.
    Log,
    /// `phi1 = (1 + x)^delta`, `phi2 = (1 - c)^delta` with `delta` in (0, 1).
    Power { delta: f64 },
    /// `phi1 = (1 + x)^(1 - theta) / (1 - theta)` and likewise for `phi2`,
    /// with `theta > 1`.
    Crra { theta: f64 },
}

/// A validated separable utility. Immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UtilitySpec", into = "UtilitySpec")]
pub struct SeparableUtility {
    kind: UtilityKind,
    alpha: f64,
    beta: f64,
}

const VALIDATION_SAMPLES: usize = 64;

impl SeparableUtility {
    pub fn new(kind: UtilityKind, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "alpha and beta must be positive, got alpha={alpha}, beta={beta}"
            )));
        }
        match kind {
            UtilityKind::Log => {}
            UtilityKind::Power { delta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::Domain(format!("power exponent must lie in (0, 1), got {delta}")));
                }
            }
            UtilityKind::Crra { theta } => {
                if !(theta > 1.0 && theta.is_finite()) {
                    return Err(Error::Domain(format!("risk aversion must exceed 1, got {theta}")));
                }
            }
        }
        let u = Self { kind, alpha, beta };
        u.validate_shape()?;
        Ok(u)
    }

    /// Log utility with unit weights, `f(x, c) = ln((1 + x)(1 - c))`.
    pub fn log() -> Self {
        Self::new(UtilityKind::Log, 1.0, 1.0).expect("log utility is valid")
    }

    pub fn power(delta: f64) -> Result<Self> {
        Self::new(UtilityKind::Power { delta }, 1.0, 1.0)
    }

    pub fn crra(theta: f64) -> Result<Self> {
        Self::new(UtilityKind::Crra { theta }, 1.0, 1.0)
    }

    pub fn kind(&self) -> UtilityKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_log(&self) -> bool {
        matches!(self.kind, UtilityKind::Log)
    }

    // Sampled check that phi1 is strictly increasing and strictly concave and
    // phi2 is strictly decreasing and concave.
    fn validate_shape(&self) -> Result<()> {
        let xs: Vec<f64> = (0..VALIDATION_SAMPLES)
            .map(|k| -0.9 + 2.9 * k as f64 / (VALIDATION_SAMPLES - 1) as f64)
            .collect();
        let cs: Vec<f64> = (0..VALIDATION_SAMPLES)
            .map(|k| 0.95 * k as f64 / (VALIDATION_SAMPLES - 1) as f64)
            .collect();
        let v1: Vec<f64> = xs.iter().map(|&x| self.phi1_unchecked(x)).collect();
        let v2: Vec<f64> = cs.iter().map(|&c| self.phi2_unchecked(c)).collect();
        if v1.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("phi1 is not strictly increasing".into()));
        }
        if v2.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Domain("phi2 is not strictly decreasing".into()));
        }
        // Equal spacing: concavity means second differences are non-positive.
        if v1.windows(3).any(|w| w[2] - 2.0 * w[1] + w[0] >= 0.0) {
            return Err(Error::Domain("phi1 is not strictly concave".into()));
        }
        if v2.windows(3).any(|w| w[2] - 2.0 * w[1] + w[0] > 1e-12 * w[1].abs().max(1.0)) {
            return Err(Error::Domain("phi2 is not concave".into()));
        }
        Ok(())
    }

    pub(crate) fn phi1_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            UtilityKind::Log => x.ln_1p(),
            UtilityKind::Power { delta } => (1.0 + x).powf(delta),
            UtilityKind::Crra { theta } => (1.0 + x).powf(1.0 - theta) / (1.0 - theta),
        }
    }

    pub(crate) fn phi2_unchecked(&self, c: f64) -> f64 {
        match self.kind {
            UtilityKind::Log => (-c).ln_1p(),
            UtilityKind::Power { delta } => (1.0 - c).powf(delta),
            UtilityKind::Crra { theta } => (1.0 - c).powf(1.0 - theta) / (1.0 - theta),
        }
    }

    pub(crate) fn phi1_prime_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            UtilityKind::Log => 1.0 / (1.0 + x),
            UtilityKind::Power { delta } => delta * (1.0 + x).powf(delta - 1.0),
            UtilityKind::Crra { theta } => (1.0 + x).powf(-theta),
        }
    }

    pub(crate) fn phi2_prime_unchecked(&self, c: f64) -> f64 {
        match self.kind {
            UtilityKind::Log => -1.0 / (1.0 - c),
            UtilityKind::Power { delta } => -delta * (1.0 - c).powf(delta - 1.0),
            UtilityKind::Crra { theta } => -(1.0 - c).powf(-theta),
        }
    }

    pub fn phi1(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.phi1_unchecked(x))
    }

    pub fn phi2(&self, c: f64) -> Result<f64> {
        check_c(c)?;
        Ok(self.phi2_unchecked(c))
    }

    pub fn phi1_prime(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.phi1_prime_unchecked(x))
    }

    pub fn phi2_prime(&self, c: f64) -> Result<f64> {
        check_c(c)?;
        Ok(self.phi2_prime_unchecked(c))
    }

    /// `alpha * phi1(x) + beta * phi2(c)`.
    pub fn eval_f(&self, x: f64, c: f64) -> Result<f64> {
        check_x(x)?;
        check_c(c)?;
        Ok(self.eval_f_unchecked(x, c))
    }

    pub(crate) fn eval_f_unchecked(&self, x: f64, c: f64) -> f64 {
        self.alpha * self.phi1_unchecked(x) + self.beta * self.phi2_unchecked(c)
    }
}

pub(crate) fn check_x(x: f64) -> Result<()> {
    if x > -1.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("return {x} must be finite and exceed -1")))
    }
}

pub(crate) fn check_c(c: f64) -> Result<()> {
    if (0.0..1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::Domain(format!("cost fraction {c} must lie in [0, 1)")))
    }
}

/// JSON form: `{"kind":"log","alpha":1.0,"beta":1.0}`, with `delta` for the
/// power family and `theta` for CRRA.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub kind: String,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<UtilitySpec> for SeparableUtility {
    type Error = Error;

    fn try_from(spec: UtilitySpec) -> Result<Self> {
        let kind = match spec.kind.as_str() {
            "log" => UtilityKind::Log,
            "power" => UtilityKind::Power {
                delta: spec
                    .delta
                    .ok_or_else(|| Error::Config("power utility needs \"delta\"".into()))?,
            },
            "crra" => UtilityKind::Crra {
                theta: spec
                    .theta
                    .ok_or_else(|| Error::Config("crra utility needs \"theta\"".into()))?,
            },
            other => return Err(Error::Config(format!("unknown utility kind {other:?}"))),
        };
        SeparableUtility::new(kind, spec.alpha, spec.beta)
    }
}

impl From<SeparableUtility> for UtilitySpec {
    fn from(u: SeparableUtility) -> Self {
        let (kind, delta, theta) = match u.kind {
            UtilityKind::Log => ("log", None, None),
            UtilityKind::Power { delta } => ("power", Some(delta), None),
            UtilityKind::Crra { theta } => ("crra", None, Some(theta)),
        };
        UtilitySpec {
            kind: kind.to_string(),
            alpha: u.alpha,
            beta: u.beta,
            delta,
            theta,
        }
    }
}
