use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The constitutive pair `(φ, β = φ⁻¹)` of `∂ₜu + (-Δ)^{1/2} φ(u) = 0`.
///
/// Power mode extends `φ` and `β` oddly to negative arguments so that Newton
/// iterates may cross zero; its `β′` is singular (m > 1) or vanishing (m < 1)
/// at the origin, so only the logarithmic and linear modes are expected to run
/// from data with compact support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `φ(s) = log(1+s)`, `β(w) = e^w - 1`.
    #[default]
    Log1p,
    /// `φ(s) = s^m`, `β(w) = w^{1/m}`.
    Power { m: f64 },
    /// `φ(s) = s`.
    Linear,
}

impl Nonlinearity {
    pub fn power(m: f64) -> Result<Self> {
        let nl = Nonlinearity::Power { m };
        nl.validate()?;
        Ok(nl)
    }

    pub fn validate(&self) -> Result<()> {
        if let Nonlinearity::Power { m } = *self {
            if !(m.is_finite() && m > 0.0) {
                return Err(invalid(
                    "m",
                    format!("power exponent must be positive, got {m}"),
                ));
            }
        }
        Ok(())
    }

    pub fn phi(&self, s: f64) -> f64 {
        match *self {
            Nonlinearity::Log1p => s.ln_1p(),
            Nonlinearity::Power { m } => s.signum() * s.abs().powf(m),
            Nonlinearity::Linear => s,
        }
    }

    pub fn dphi(&self, s: f64) -> f64 {
        match *self {
            Nonlinearity::Log1p => 1.0 / (1.0 + s),
            Nonlinearity::Power { m } => m * s.abs().powf(m - 1.0),
            Nonlinearity::Linear => 1.0,
        }
    }

    pub fn beta(&self, w: f64) -> f64 {
        match *self {
            Nonlinearity::Log1p => w.exp_m1(),
            Nonlinearity::Power { m } => w.signum() * w.abs().powf(1.0 / m),
            Nonlinearity::Linear => w,
        }
    }

    pub fn dbeta(&self, w: f64) -> f64 {
        match *self {
            Nonlinearity::Log1p => w.exp(),
            Nonlinearity::Power { m } => {
                // Keep the Jacobian finite and positive at w = 0.
                let a = w.abs().max(1e-300);
                ((1.0 / m) * a.powf(1.0 / m - 1.0)).clamp(1e-12, 1e12)
            }
            Nonlinearity::Linear => 1.0,
        }
    }

    /// Convex primitive `B` with `B′ = β`. For `Log1p` this is `e^w - w`, so
    /// that `B(0) = 1` and the resolvent functional of the zero field is `2L`.
    pub fn beta_primitive(&self, w: f64) -> f64 {
        match *self {
            Nonlinearity::Log1p => w.exp() - w,
            Nonlinearity::Power { m } => m / (m + 1.0) * w.abs().powf(1.0 + 1.0 / m),
            Nonlinearity::Linear => 0.5 * w * w,
        }
    }

    /// `max φ′` over the given samples (the explicit stability bound uses it).
    pub fn max_slope(&self, u: &[f64]) -> f64 {
        u.iter().map(|&s| self.dphi(s)).fold(0.0, f64::max)
    }
}
