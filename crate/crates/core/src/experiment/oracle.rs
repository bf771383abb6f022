//! Markov-limit comparison and kernel tabulation.

use std::io::Write;

use crate::coefficients::GridSpec;
use crate::error::{Error, Result};
use crate::format::sig;
use crate::linalg::trace_distance;
use crate::master::lindblad_reference;
use crate::noise::{markov_limit_params, CorrelationKernel, NoiseConfig, Scenario};

use super::scenario::simulate;
use super::spec::{KernelChoice, ScenarioSpec};

/// Trace distance between the composite run and its collective Lindblad limit.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovComparison {
    /// Lindblad rate: the effective OU coupling.
    pub rate: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

impl MarkovComparison {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,trace_distance")?;
        for (t, d) in self.times.iter().zip(&self.distances) {
            writeln!(w, "{},{}", sig(*t), sig(*d))?;
        }
        Ok(())
    }
}

/// Runs scenario C of `spec` (effective kernel) against the collective
/// Lindblad equation with the effective coupling as rate.
pub fn markov_comparison(spec: &ScenarioSpec) -> Result<MarkovComparison> {
    let mut spec = spec.with_scenario(Scenario::C);
    spec.kernel = KernelChoice::Effective;
    if !spec.noise.dephasing_markovian {
        return Err(Error::Config("markov-check needs dephasing_markovian = true".into()));
    }
    let rate = markov_limit_params(&spec.noise)?.coupling;
    let sim = simulate(&spec)?;
    let reference = lindblad_reference(&spec.initial_state.density()?, &spec.system, rate, true, &spec.grid)?;
    let distances = sim
        .trajectory
        .matrices()
        .iter()
        .zip(reference.matrices())
        .map(|(a, b)| trace_distance(a, b))
        .collect::<Result<Vec<f64>>>()?;
    Ok(MarkovComparison { rate, times: sim.trajectory.times().to_vec(), distances })
}

pub const KERNEL_HEADER: &str = "tau,alpha,beta,G,G_eff";

/// Tabulates alpha, beta, the dressed kernel G and its effective OU form.
/// G is left empty when the dephasing memory is not finite and positive.
pub fn write_kernel_table<W: Write>(noise: &NoiseConfig, grid: &GridSpec, w: &mut W) -> Result<()> {
    let steps = grid.steps()?;
    let c = NoiseConfig { scenario: Scenario::C, ..*noise };
    let alpha = CorrelationKernel::Alpha(noise.dephasing);
    let beta = CorrelationKernel::Beta(noise.relaxation);
    let general = CorrelationKernel::general_composite(&NoiseConfig { dephasing_markovian: false, ..c }).ok();
    let effective = CorrelationKernel::relaxation_kernel(&NoiseConfig { dephasing_markovian: true, ..c })?;
    writeln!(w, "{KERNEL_HEADER}")?;
    for i in 0..=steps {
        let tau = grid.time(i);
        writeln!(
            w,
            "{},{},{},{},{}",
            sig(tau),
            sig(alpha.eval(tau)),
            sig(beta.eval(tau)),
            general.map(|g| sig(g.eval(tau))).unwrap_or_default(),
            sig(effective.eval(tau))
        )?;
    }
    Ok(())
}
