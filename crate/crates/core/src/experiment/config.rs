//! Flat key-value configuration file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

use super::spec::{MConvention, MetricSet, ScenarioSpec};

/// A string or a list of strings (`metrics = "capacity"` or `["capacity", "avg_fidelity"]`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn items(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect(),
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// `m_convention = "auto"` or an integer.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum IndexOrName {
    Index(i64),
    Name(String),
}

/// Sweep axes.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub gamma_beta: Option<Vec<f64>>,
    #[serde(rename = "Gamma_alpha")]
    pub big_gamma_alpha: Option<Vec<f64>>,
    pub scenario: Option<OneOrMany>,
}

/// Every key is optional; unset keys keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "Gamma_alpha")]
    pub big_gamma_alpha: Option<f64>,
    pub gamma_alpha: Option<f64>,
    #[serde(rename = "Gamma_beta")]
    pub big_gamma_beta: Option<f64>,
    pub gamma_beta: Option<f64>,
    pub dephasing_markovian: Option<bool>,
    pub scenario: Option<String>,
    pub dephasing_topology: Option<String>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub initial_state: Option<String>,
    pub metrics: Option<OneOrMany>,
    pub m_convention: Option<IndexOrName>,
    pub s1_stride: Option<usize>,
    pub output_dir: Option<PathBuf>,
    #[serde(rename = "omega_A")]
    pub omega_a: Option<f64>,
    #[serde(rename = "omega_B")]
    pub omega_b: Option<f64>,
    pub composite_kernel: Option<String>,
    pub average_over_m: Option<bool>,
    pub fidelity_method: Option<String>,
    pub sweep: Option<SweepAxes>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Values of `other` replace values of `self` where set.
    pub fn overlay(self, other: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            big_gamma_alpha, gamma_alpha, big_gamma_beta, gamma_beta, dephasing_markovian, scenario,
            dephasing_topology, dt, t_max, initial_state, metrics, m_convention, s1_stride, output_dir,
            omega_a, omega_b, composite_kernel, average_over_m, fidelity_method, sweep
        )
    }

    /// Applies the set keys to `base`.
    pub fn apply(&self, base: &ScenarioSpec) -> Result<ScenarioSpec> {
        let mut s = base.clone();
        if let Some(v) = self.big_gamma_alpha {
            s.noise.dephasing.coupling = v;
        }
        if let Some(v) = self.gamma_alpha {
            s.noise.dephasing.inverse_memory = v;
        }
        if let Some(v) = self.big_gamma_beta {
            s.noise.relaxation.coupling = v;
        }
        if let Some(v) = self.gamma_beta {
            s.noise.relaxation.inverse_memory = v;
        }
        if let Some(v) = self.dephasing_markovian {
            s.noise.dephasing_markovian = v;
        }
        if let Some(v) = &self.scenario {
            s.noise.scenario = v.parse()?;
        }
        if let Some(v) = &self.dephasing_topology {
            s.noise.dephasing_topology = v.parse()?;
        }
        if let Some(v) = self.dt {
            s.grid.dt = v;
        }
        if let Some(v) = self.t_max {
            s.grid.t_max = v;
        }
        if let Some(v) = self.s1_stride {
            s.grid.s1_stride = v;
        }
        if let Some(v) = &self.initial_state {
            s.initial_state = v.parse()?;
        }
        if let Some(v) = &self.metrics {
            s.metrics = MetricSet::parse_list(&v.items())?;
        }
        if let Some(v) = &self.m_convention {
            s.m_convention = match v {
                IndexOrName::Index(i) => i.to_string().parse()?,
                IndexOrName::Name(n) => n.parse::<MConvention>()?,
            };
        }
        if let Some(v) = self.omega_a {
            s.system.omega_a = v;
        }
        if let Some(v) = self.omega_b {
            s.system.omega_b = v;
        }
        if let Some(v) = &self.composite_kernel {
            s.kernel = v.parse()?;
        }
        if let Some(v) = self.average_over_m {
            s.average_over_m = v;
        }
        if let Some(v) = &self.fidelity_method {
            s.fidelity_method = v.parse()?;
        }
        Ok(s)
    }

    /// Spec from defaults plus the set keys, validated.
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        let s = self.apply(&ScenarioSpec::default())?;
        s.validate()?;
        Ok(s)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::spec::{InitialState, KernelChoice};
    use crate::noise::{DephasingTopology, Scenario};

    const FULL: &str = r#"
Gamma_alpha = 2.0
gamma_alpha = 5.0
Gamma_beta = 1.0
gamma_beta = 0.3
dephasing_markovian = true
scenario = "C"
dephasing_topology = "collective"
dt = 0.005
t_max = 4.0
initial_state = "bell_phi_plus"
metrics = ["capacity"]
m_convention = 2
s1_stride = 4
output_dir = "out"
composite_kernel = "general"

[sweep]
gamma_beta = [0.1, 2.0]
Gamma_alpha = [1, 2, 4]
scenario = "R,D,C"
"#;

    #[test]
    fn parses_every_key() {
        let c = ConfigFile::parse(FULL).unwrap();
        let s = c.resolve().unwrap();
        assert_eq!(s.noise.dephasing.coupling, 2.0);
        assert_eq!(s.noise.dephasing.inverse_memory, 5.0);
        assert_eq!(s.noise.relaxation.inverse_memory, 0.3);
        assert_eq!(s.noise.scenario, Scenario::C);
        assert_eq!(s.noise.dephasing_topology, DephasingTopology::Collective);
        assert_eq!((s.grid.dt, s.grid.t_max, s.grid.s1_stride), (0.005, 4.0, 4));
        assert_eq!(s.initial_state, InitialState::BellPhiPlus);
        assert!(s.metrics.capacity && !s.metrics.avg_fidelity);
        assert_eq!(s.m_convention, MConvention::Fixed(2));
        assert_eq!(s.kernel, KernelChoice::General);
        assert_eq!(c.output_dir(), PathBuf::from("out"));
        let axes = c.sweep.unwrap();
        assert_eq!(axes.big_gamma_alpha.unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(axes.scenario.unwrap().items(), vec!["R", "D", "C"]);
    }

    #[test]
    fn empty_file_gives_defaults() {
        let s = ConfigFile::parse("").unwrap().resolve().unwrap();
        assert_eq!(s, ScenarioSpec::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(ConfigFile::parse("gamma = 1.0"), Err(Error::Config(_))));
        assert!(ConfigFile::parse("scenario = \"X\"").unwrap().resolve().is_err());
        assert!(ConfigFile::parse("m_convention = \"sometimes\"").unwrap().resolve().is_err());
        assert!(ConfigFile::parse("dt = \"small\"").is_err());
    }

    #[test]
    fn overlay_prefers_later_values() {
        let a = ConfigFile::parse("dt = 0.01\nt_max = 2.0").unwrap();
        let b = ConfigFile::parse("dt = 0.02").unwrap();
        let c = a.overlay(b);
        assert_eq!((c.dt, c.t_max), (Some(0.02), Some(2.0)));
    }
}
