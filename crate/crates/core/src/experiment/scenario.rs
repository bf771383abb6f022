//! Single-scenario pipeline: coefficients, propagation, protocol metrics.

use std::fmt;

use crate::coefficients::{evolve_with_kernel, CoefficientField};
use crate::error::{Error, Result};
use crate::master::{dephasing_trajectory, propagate_qsd, StateTrajectory};
use crate::noise::{CorrelationKernel, NoiseConfig, Scenario};
use crate::protocols::{average_fidelity, average_fidelity_over_outcomes, dense_coding_capacity, EncodingSet};

use super::spec::{KernelChoice, ScenarioSpec};

/// Parameters echoed into every CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterEcho {
    pub gamma_beta: f64,
    pub big_gamma_alpha: f64,
    pub big_gamma_beta: f64,
    pub gamma_alpha: f64,
}

impl ParameterEcho {
    pub fn of(noise: &NoiseConfig) -> Self {
        Self {
            gamma_beta: noise.relaxation.inverse_memory,
            big_gamma_alpha: noise.dephasing.coupling,
            big_gamma_beta: noise.relaxation.coupling,
            gamma_alpha: noise.dephasing.inverse_memory,
        }
    }

    /// Echo of a spec; scenario R carries no dephasing, so Gamma_alpha is 0.
    pub fn for_spec(spec: &ScenarioSpec) -> Self {
        let mut echo = Self::of(&spec.noise);
        if spec.scenario() == Scenario::R {
            echo.big_gamma_alpha = 0.0;
        }
        echo
    }
}

/// Metric curves of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub scenario: Scenario,
    pub params: ParameterEcho,
    pub times: Vec<f64>,
    pub chi: Option<Vec<f64>>,
    pub avg_fidelity: Option<Vec<f64>>,
    pub trace_dev: Vec<f64>,
    pub min_eig: Vec<f64>,
}

impl MetricSeries {
    /// Series with no rows and the echo of `spec`.
    pub fn empty(spec: &ScenarioSpec, capacity: usize) -> Self {
        Self {
            scenario: spec.scenario(),
            params: ParameterEcho::for_spec(spec),
            times: Vec::with_capacity(capacity),
            chi: spec.metrics.capacity.then(|| Vec::with_capacity(capacity)),
            avg_fidelity: spec.metrics.avg_fidelity.then(|| Vec::with_capacity(capacity)),
            trace_dev: Vec::with_capacity(capacity),
            min_eig: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_trace_deviation(&self) -> f64 {
        self.trace_dev.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Value of `series` at the grid node nearest to `t`.
    pub fn at_time(series: &[f64], times: &[f64], t: f64) -> Option<f64> {
        let i = times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        series.get(i).copied()
    }
}

/// Failed run: the rows computed before the error, and the error.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub partial: MetricSeries,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario {} failed after {} rows: {}", self.partial.scenario, self.partial.len(), self.error)
    }
}

impl std::error::Error for RunFailure {}

/// Coefficients (R and C only) and the state trajectory of one spec.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub field: Option<CoefficientField<f64>>,
    pub trajectory: StateTrajectory<f64>,
}

/// Relaxation kernel used by `spec` (None for scenario D).
pub fn scenario_kernel(spec: &ScenarioSpec) -> Result<Option<CorrelationKernel>> {
    match (spec.scenario(), spec.kernel) {
        (Scenario::D, _) => Ok(None),
        (Scenario::C, KernelChoice::General) => Ok(Some(CorrelationKernel::general_composite(&spec.noise)?)),
        _ => Ok(Some(CorrelationKernel::relaxation_kernel(&spec.noise)?)),
    }
}

/// Runs the dynamics of `spec` without protocol metrics.
pub fn simulate(spec: &ScenarioSpec) -> Result<Simulation> {
    spec.validate()?;
    let rho0 = spec.initial_state.density()?;
    match scenario_kernel(spec)? {
        None => {
            let trajectory =
                dephasing_trajectory(&rho0, spec.noise.dephasing.coupling, spec.noise.dephasing_topology, &spec.grid)?;
            Ok(Simulation { field: None, trajectory })
        }
        Some(kernel) => {
            let field = evolve_with_kernel::<f64>(kernel, &spec.system, &spec.grid)?;
            let trajectory = propagate_qsd(&rho0, &field, &spec.system, &spec.grid)?;
            Ok(Simulation { field: Some(field), trajectory })
        }
    }
}

/// Protocol metrics along an existing trajectory.
pub fn metrics_for(spec: &ScenarioSpec, trajectory: &StateTrajectory<f64>) -> Result<MetricSeries, RunFailure> {
    let mut out = MetricSeries::empty(spec, trajectory.len());
    let encoding = EncodingSet::<f64>::uniform();
    let m = spec.outcome_index();
    for (i, (&t, d)) in trajectory.times().iter().zip(trajectory.diagnostics()).enumerate() {
        let row = || -> Result<(Option<f64>, Option<f64>)> {
            let rho = trajectory.state(i)?;
            let chi = spec.metrics.capacity.then(|| dense_coding_capacity(&rho, &encoding)).transpose()?;
            let fid = if !spec.metrics.avg_fidelity {
                None
            } else if spec.average_over_m {
                Some(average_fidelity_over_outcomes(&rho, spec.fidelity_method)?)
            } else {
                Some(average_fidelity(&rho, m, spec.fidelity_method)?)
            };
            Ok((chi, fid))
        };
        match row() {
            Ok((chi, fid)) => {
                out.times.push(t);
                if let (Some(v), Some(x)) = (out.chi.as_mut(), chi) {
                    v.push(x);
                }
                if let (Some(v), Some(x)) = (out.avg_fidelity.as_mut(), fid) {
                    v.push(x);
                }
                out.trace_dev.push(d.trace_deviation);
                out.min_eig.push(d.min_eigenvalue);
            }
            Err(error) => return Err(RunFailure { partial: out, error }),
        }
    }
    Ok(out)
}

/// Full pipeline for one spec.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<MetricSeries, RunFailure> {
    match simulate(spec) {
        Ok(sim) => metrics_for(spec, &sim.trajectory),
        Err(error) => Err(RunFailure { partial: MetricSeries::empty(spec, 0), error }),
    }
}
