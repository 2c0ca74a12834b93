use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Material constants of the asymmetric Bingham law.
///
/// Derived constants (`kappa`, `q`, `tau_hat`) are computed on
/// construction and never read from serialized input. Density is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct FluidParams {
    mu1: f64,
    mu2: f64,
    nu: f64,
    p: f64,
    tau_star: f64,
    eps_reg: f64,
    kappa: f64,
    q: f64,
    tau_hat: f64,
}

/// Wire form. `nu` may be omitted, in which case it defaults to `kappa`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    mu1: f64,
    mu2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    p: f64,
    tau_star: f64,
    eps_reg: f64,
}

impl TryFrom<RawParams> for FluidParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        let nu = match raw.nu {
            Some(nu) => nu,
            None => 2.0 * raw.mu1 / raw.mu2,
        };
        FluidParams::new(raw.mu1, raw.mu2, nu, raw.p, raw.tau_star, raw.eps_reg)
    }
}

impl From<FluidParams> for RawParams {
    fn from(f: FluidParams) -> Self {
        RawParams {
            mu1: f.mu1,
            mu2: f.mu2,
            nu: Some(f.nu),
            p: f.p,
            tau_star: f.tau_star,
            eps_reg: f.eps_reg,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")))
    }
}

impl FluidParams {
    pub fn new(mu1: f64, mu2: f64, nu: f64, p: f64, tau_star: f64, eps_reg: f64) -> Result<Self> {
        positive("mu1", mu1)?;
        positive("mu2", mu2)?;
        positive("nu", nu)?;
        positive("eps_reg", eps_reg)?;
        if !(p.is_finite() && p >= 2.0) {
            return Err(Error::InvalidParams(format!("p must be >= 2, got {p}")));
        }
        if !(tau_star.is_finite() && tau_star >= 0.0) {
            return Err(Error::InvalidParams(format!("tau_star must be >= 0, got {tau_star}")));
        }
        let kappa = 2.0 * mu1 / mu2;
        let q = p / (p - 1.0);
        let tau_hat = tau_star / 1.0_f64.max(nu.powf(2.0 / p));
        Ok(FluidParams { mu1, mu2, nu, p, tau_star, eps_reg, kappa, q, tau_hat })
    }

    /// Parameters with `nu` tied to `kappa = 2 mu1 / mu2`.
    pub fn with_default_nu(mu1: f64, mu2: f64, p: f64, tau_star: f64, eps_reg: f64) -> Result<Self> {
        Self::new(mu1, mu2, 2.0 * mu1 / mu2, p, tau_star, eps_reg)
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }
    pub fn mu2(&self) -> f64 {
        self.mu2
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }
    pub fn eps_reg(&self) -> f64 {
        self.eps_reg
    }
    /// `2 mu1 / mu2`, the antisymmetric weight of the legacy law.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    /// Conjugate exponent `p / (p - 1)`.
    pub fn q(&self) -> f64 {
        self.q
    }
    /// Rescaled yield stress `tau_star / max(1, nu^(2/p))`.
    pub fn tau_hat(&self) -> f64 {
        self.tau_hat
    }
    /// `max(1, nu^(2/p))`, radius of the ball containing the normalized plug set.
    pub fn outer_radius(&self) -> f64 {
        1.0_f64.max(self.nu.powf(2.0 / self.p))
    }

    pub fn with_eps(&self, eps_reg: f64) -> Result<Self> {
        Self::new(self.mu1, self.mu2, self.nu, self.p, self.tau_star, eps_reg)
    }

    pub fn with_tau_star(&self, tau_star: f64) -> Result<Self> {
        Self::new(self.mu1, self.mu2, self.nu, self.p, tau_star, self.eps_reg)
    }

    pub fn with_nu_p(&self, nu: f64, p: f64) -> Result<Self> {
        Self::new(self.mu1, self.mu2, nu, p, self.tau_star, self.eps_reg)
    }
}

impl Default for FluidParams {
    fn default() -> Self {
        FluidParams::new(1.0, 2.0, 1.0, 2.0, 1.0, 1e-4).expect("default parameters are valid")
    }
}
