//! Ornstein-Uhlenbeck correlation kernels for relaxation and dephasing noise.
//!
//! All rates are in units of the qubit frequency. Kernels are zero-temperature
//! OU forms and therefore real-valued; the composite kernel is the relaxation
//! kernel dressed by the dephasing phase average.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Coupling strength and inverse memory time of one OU noise source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub coupling: f64,
    pub inverse_memory: f64,
}

impl OUParams {
    pub fn new(coupling: f64, inverse_memory: f64) -> Result<Self> {
        let p = Self { coupling, inverse_memory };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling >= 0.0) || !self.coupling.is_finite() {
            return Err(Error::Parameter(format!("coupling strength must be >= 0, got {}", self.coupling)));
        }
        if !(self.inverse_memory > 0.0) || !self.inverse_memory.is_finite() {
            return Err(Error::Parameter(format!(
                "inverse memory time must be finite and > 0, got {}",
                self.inverse_memory
            )));
        }
        Ok(())
    }

    /// (Gamma gamma / 2) exp(-gamma |tau|)
    #[inline]
    pub fn correlation<T: Real>(&self, tau: T) -> T {
        let g = T::lit(self.coupling);
        let inv = T::lit(self.inverse_memory);
        g * inv * T::lit(0.5) * (-inv * tau.abs()).exp()
    }
}

/// Which noise processes act on the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    /// Non-Markovian relaxation only.
    R,
    /// Dephasing only.
    D,
    /// Relaxation mixed with dephasing.
    C,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::R, Scenario::D, Scenario::C];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::R => "R",
            Scenario::D => "D",
            Scenario::C => "C",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "R" | "r" => Ok(Scenario::R),
            "D" | "d" => Ok(Scenario::D),
            "C" | "c" => Ok(Scenario::C),
            other => Err(Error::Config(format!("unknown scenario '{other}' (expected R, D or C)"))),
        }
    }
}

/// How dephasing noise couples to the two qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DephasingTopology {
    /// One field coupled to sigma_z^A + sigma_z^B.
    Collective,
    /// Separate, uncorrelated fields on each qubit.
    Independent,
}

impl fmt::Display for DephasingTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DephasingTopology::Collective => "collective",
            DephasingTopology::Independent => "independent",
        })
    }
}

impl FromStr for DephasingTopology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "collective" => Ok(DephasingTopology::Collective),
            "independent" => Ok(DephasingTopology::Independent),
            other => Err(Error::Config(format!(
                "unknown dephasing topology '{other}' (expected collective or independent)"
            ))),
        }
    }
}

/// Full noise description for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub relaxation: OUParams,
    /// `inverse_memory` is ignored while `dephasing_markovian` is set.
    pub dephasing: OUParams,
    pub dephasing_markovian: bool,
    pub scenario: Scenario,
    pub dephasing_topology: DephasingTopology,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        self.relaxation.validate()?;
        if !(self.dephasing.coupling >= 0.0) || !self.dephasing.coupling.is_finite() {
            return Err(Error::Parameter(format!(
                "dephasing coupling must be >= 0, got {}",
                self.dephasing.coupling
            )));
        }
        if !self.dephasing_markovian {
            self.dephasing.validate()?;
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            relaxation: OUParams { coupling: 1.0, inverse_memory: 0.1 },
            dephasing: OUParams { coupling: 1.0, inverse_memory: 1.0 },
            dephasing_markovian: true,
            scenario: Scenario::C,
            dephasing_topology: DephasingTopology::Independent,
        }
    }
}

/// Dephasing correlation alpha(tau).
pub fn alpha<T: Real>(params: &OUParams, tau: T) -> T {
    params.correlation(tau)
}

/// Relaxation correlation beta(tau).
pub fn beta<T: Real>(params: &OUParams, tau: T) -> T {
    params.correlation(tau)
}

/// Relaxation kernel dressed by OU dephasing with finite memory.
pub fn composite_kernel<T: Real>(config: &NoiseConfig, tau: T) -> Result<T> {
    if config.scenario != Scenario::C {
        return Err(Error::Contract(format!(
            "composite kernel requested for scenario {}",
            config.scenario
        )));
    }
    if !(config.dephasing.inverse_memory > 0.0) {
        return Err(Error::Parameter(format!(
            "dephasing inverse memory must be > 0, got {}",
            config.dephasing.inverse_memory
        )));
    }
    Ok(dressed_relaxation(&config.relaxation, &config.dephasing, tau))
}

fn dressed_relaxation<T: Real>(relaxation: &OUParams, dephasing: &OUParams, tau: T) -> T {
    let tau = tau.abs();
    let base = relaxation.correlation(tau);
    if dephasing.coupling == 0.0 {
        return base;
    }
    let inv = T::lit(dephasing.inverse_memory);
    // tau + (e^{-gamma tau} - 1)/gamma without cancellation at small gamma tau
    let bracket = tau + (-inv * tau).exp_m1() / inv;
    base * (-T::lit(0.5 * dephasing.coupling) * bracket).exp()
}

/// OU parameters of the composite kernel in the Markovian-dephasing limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveOu {
    /// rescaled coupling r * Gamma_beta
    pub coupling: f64,
    /// gamma_beta + Gamma_alpha / 2
    pub inverse_memory: f64,
    /// gamma_beta / effective inverse memory
    pub ratio: f64,
}

impl EffectiveOu {
    pub fn as_ou(&self) -> OUParams {
        OUParams { coupling: self.coupling, inverse_memory: self.inverse_memory }
    }
}

pub fn markov_limit_params(config: &NoiseConfig) -> Result<EffectiveOu> {
    if !config.dephasing_markovian {
        return Err(Error::Contract(
            "Markov-limit parameters need Markovian dephasing".into(),
        ));
    }
    let inverse_memory = config.relaxation.inverse_memory + config.dephasing.coupling / 2.0;
    let ratio = config.relaxation.inverse_memory / inverse_memory;
    Ok(EffectiveOu { coupling: ratio * config.relaxation.coupling, inverse_memory, ratio })
}

/// Kind tag of an evaluable correlation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Alpha,
    Beta,
    Composite,
    EffectiveOu,
}

/// Evaluable stationary correlation function K(t - s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationKernel {
    Alpha(OUParams),
    Beta(OUParams),
    Composite { relaxation: OUParams, dephasing: OUParams },
    EffectiveOu(OUParams),
}

impl CorrelationKernel {
    /// Kernel driving the relaxation channel of `config`.
    ///
    /// Scenario R uses beta; scenario C uses the effective OU kernel when the
    /// dephasing is Markovian and the dressed kernel otherwise.
    pub fn relaxation_kernel(config: &NoiseConfig) -> Result<Self> {
        config.validate()?;
        match config.scenario {
            Scenario::R => Ok(CorrelationKernel::Beta(config.relaxation)),
            Scenario::C if config.dephasing_markovian => {
                Ok(CorrelationKernel::EffectiveOu(markov_limit_params(config)?.as_ou()))
            }
            Scenario::C => Ok(CorrelationKernel::Composite {
                relaxation: config.relaxation,
                dephasing: config.dephasing,
            }),
            Scenario::D => Err(Error::Contract("scenario D has no relaxation kernel".into())),
        }
    }

    /// Scenario C kernel using the general dressed form even for Markovian
    /// dephasing (with the configured finite dephasing memory).
    pub fn general_composite(config: &NoiseConfig) -> Result<Self> {
        config.validate()?;
        config.dephasing.validate()?;
        Ok(CorrelationKernel::Composite { relaxation: config.relaxation, dephasing: config.dephasing })
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            CorrelationKernel::Alpha(_) => KernelKind::Alpha,
            CorrelationKernel::Beta(_) => KernelKind::Beta,
            CorrelationKernel::Composite { .. } => KernelKind::Composite,
            CorrelationKernel::EffectiveOu(_) => KernelKind::EffectiveOu,
        }
    }

    #[inline]
    pub fn eval<T: Real>(&self, tau: T) -> T {
        match self {
            CorrelationKernel::Alpha(p) | CorrelationKernel::Beta(p) | CorrelationKernel::EffectiveOu(p) => {
                p.correlation(tau)
            }
            CorrelationKernel::Composite { relaxation, dephasing } => dressed_relaxation(relaxation, dephasing, tau),
        }
    }

    /// True when the kernel vanishes identically.
    pub fn is_zero(&self) -> bool {
        match self {
            CorrelationKernel::Alpha(p) | CorrelationKernel::Beta(p) | CorrelationKernel::EffectiveOu(p) => {
                p.coupling == 0.0
            }
            CorrelationKernel::Composite { relaxation, .. } => relaxation.coupling == 0.0,
        }
    }
}
