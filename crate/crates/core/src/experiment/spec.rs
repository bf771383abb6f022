//! Scenario description: noise, system, grid, initial state and metrics.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex;

use crate::coefficients::GridSpec;
use crate::error::{Error, Result};
use crate::linalg::{basis_ket, ComplexMatrix, DensityMatrix};
use crate::noise::{NoiseConfig, Scenario};
use crate::protocols::{BellBasis, FidelityMethod};
use crate::system::SystemParams;

/// Channel state at t = 0.
#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub enum InitialState {
    /// (|01> + |10>)/sqrt2
    #[default]
    BellPsiPlus,
    /// (|00> + |11>)/sqrt2
    BellPhiPlus,
    /// |b_A b_B>
    Computational(u8, u8),
    /// 4x4 matrix read from a text file
    MatrixFile(PathBuf),
}


impl InitialState {
    pub fn density(&self) -> Result<DensityMatrix<f64>> {
        match self {
            InitialState::BellPsiPlus => Ok(BellBasis::state(1)),
            InitialState::BellPhiPlus => Ok(BellBasis::state(0)),
            InitialState::Computational(a, b) => DensityMatrix::from_ket(&basis_ket((2 * a + b) as usize)),
            InitialState::MatrixFile(path) => DensityMatrix::new(read_matrix_file(path)?),
        }
    }

    /// Bell index of the state, when it is one.
    pub fn bell_index(&self) -> Option<usize> {
        match self {
            InitialState::BellPsiPlus => Some(1),
            InitialState::BellPhiPlus => Some(0),
            _ => None,
        }
    }
}

impl FromStr for InitialState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "bell_psi_plus" | "psi_plus" => return Ok(InitialState::BellPsiPlus),
            "bell_phi_plus" | "phi_plus" => return Ok(InitialState::BellPhiPlus),
            _ => {}
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(InitialState::MatrixFile(PathBuf::from(path)));
        }
        let bits = s.strip_prefix("computational:").unwrap_or(s);
        let bits = bits.trim_start_matches('|').trim_end_matches('>');
        let b: Vec<u8> = bits.bytes().collect();
        if b.len() == 2 && b.iter().all(|c| *c == b'0' || *c == b'1') {
            return Ok(InitialState::Computational(b[0] - b'0', b[1] - b'0'));
        }
        Err(Error::Config(format!(
            "unknown initial_state '{s}' (expected bell_psi_plus, bell_phi_plus, |ab>, or file:<path>)"
        )))
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::BellPsiPlus => f.write_str("bell_psi_plus"),
            InitialState::BellPhiPlus => f.write_str("bell_phi_plus"),
            InitialState::Computational(a, b) => write!(f, "|{a}{b}>"),
            InitialState::MatrixFile(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Reads four rows of four complex entries (`0.5`, `0.5+0.1i`, ...).
/// Entries are separated by whitespace or commas; `#` starts a comment.
pub fn read_matrix_file(path: &Path) -> Result<ComplexMatrix<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read initial state {}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_matrix(text: &str) -> std::result::Result<ComplexMatrix<f64>, String> {
    let mut entries = Vec::with_capacity(16);
    let mut rows = 0;
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect();
        if row.len() != 4 {
            return Err(format!("row {} has {} entries, expected 4", rows + 1, row.len()));
        }
        for tok in row {
            let z = Complex::<f64>::from_str(tok).map_err(|_| format!("cannot parse '{tok}' as a complex number"))?;
            entries.push(z);
        }
        rows += 1;
    }
    if rows != 4 {
        return Err(format!("expected 4 rows, found {rows}"));
    }
    ComplexMatrix::from_row_major(4, &entries).map_err(|e| e.to_string())
}

/// Which figures of merit are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub capacity: bool,
    pub avg_fidelity: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        Self { capacity: true, avg_fidelity: true }
    }
}

impl MetricSet {
    pub fn parse_list<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let mut set = MetricSet { capacity: false, avg_fidelity: false };
        for item in items {
            match item.as_ref().trim() {
                "capacity" | "chi" => set.capacity = true,
                "avg_fidelity" | "fidelity" => set.avg_fidelity = true,
                other => return Err(Error::Config(format!("unknown metric '{other}'"))),
            }
        }
        if !set.capacity && !set.avg_fidelity {
            return Err(Error::Config("metrics list is empty".into()));
        }
        Ok(set)
    }

    /// File-name tag.
    pub fn tag(&self) -> &'static str {
        match (self.capacity, self.avg_fidelity) {
            (true, true) => "capacity-fidelity",
            (true, false) => "capacity",
            _ => "fidelity",
        }
    }
}

/// Bell outcome index used for the teleportation fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MConvention {
    /// Match the initial Bell index (0 for non-Bell initial states).
    #[default]
    Auto,
    Fixed(usize),
}

impl MConvention {
    pub fn resolve(&self, initial: &InitialState) -> usize {
        match self {
            MConvention::Auto => initial.bell_index().unwrap_or(0),
            MConvention::Fixed(m) => *m,
        }
    }
}

impl FromStr for MConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(MConvention::Auto),
            other => match other.parse::<usize>() {
                Ok(m) if m < 4 => Ok(MConvention::Fixed(m)),
                _ => Err(Error::Config(format!("m_convention must be 'auto' or 0..3, got '{other}'"))),
            },
        }
    }
}

impl fmt::Display for MConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MConvention::Auto => f.write_str("auto"),
            MConvention::Fixed(m) => write!(f, "{m}"),
        }
    }
}

/// Relaxation kernel used for scenario C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelChoice {
    /// OU kernel with the Markov-limit effective parameters
    #[default]
    Effective,
    /// dressed kernel with finite dephasing memory
    General,
}

impl FromStr for KernelChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "effective" => Ok(KernelChoice::Effective),
            "general" => Ok(KernelChoice::General),
            other => Err(Error::Config(format!("composite_kernel must be effective|general, got '{other}'"))),
        }
    }
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub noise: NoiseConfig,
    pub system: SystemParams,
    pub grid: GridSpec,
    pub initial_state: InitialState,
    pub metrics: MetricSet,
    pub m_convention: MConvention,
    /// Report sum_m p_m F^m instead of a single outcome.
    pub average_over_m: bool,
    pub kernel: KernelChoice,
    pub fidelity_method: FidelityMethod,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            system: SystemParams::default(),
            grid: GridSpec::default(),
            initial_state: InitialState::default(),
            metrics: MetricSet::default(),
            m_convention: MConvention::Auto,
            average_over_m: false,
            kernel: KernelChoice::Effective,
            fidelity_method: FidelityMethod::ClosedForm,
        }
    }
}

impl ScenarioSpec {
    pub fn scenario(&self) -> Scenario {
        self.noise.scenario
    }

    pub fn with_scenario(&self, scenario: Scenario) -> Self {
        let mut s = self.clone();
        s.noise.scenario = scenario;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.system.validate()?;
        self.grid.steps()?;
        if self.noise.scenario == Scenario::D && !self.noise.dephasing_markovian {
            return Err(Error::Config("scenario D requires dephasing_markovian = true".into()));
        }
        if self.noise.scenario == Scenario::C && self.kernel == KernelChoice::General {
            self.noise.dephasing.validate()?;
        }
        Ok(())
    }

    pub fn outcome_index(&self) -> usize {
        self.m_convention.resolve(&self.initial_state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_initial_states() {
        assert_eq!("bell_psi_plus".parse::<InitialState>().unwrap(), InitialState::BellPsiPlus);
        assert_eq!("|10>".parse::<InitialState>().unwrap(), InitialState::Computational(1, 0));
        assert_eq!("computational:01".parse::<InitialState>().unwrap(), InitialState::Computational(0, 1));
        assert!(matches!("file:/tmp/x".parse::<InitialState>().unwrap(), InitialState::MatrixFile(_)));
        assert!("|2>".parse::<InitialState>().is_err());
        let rho = InitialState::Computational(1, 0).density().unwrap();
        assert_eq!(rho.population(2), 1.0);
    }

    #[test]
    fn parses_matrix_text() {
        let text = "# maximally mixed\n0.25 0 0 0\n0, 0.25, 0, 0\n0 0 0.25 0\n0 0 0 0.25\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(m, ComplexMatrix::identity(4).scale_re(0.25));
        let z = parse_matrix("0.5 0 0 0.5i\n0 0 0 0\n0 0 0 0\n-0.5i 0 0 0.5\n").unwrap();
        assert_eq!(z.get(0, 3), Complex::new(0.0, 0.5));
        assert!(parse_matrix("1 0 0\n").is_err());
        assert!(parse_matrix("1 0 0 x\n0 0 0 0\n0 0 0 0\n0 0 0 0\n").is_err());
    }

    #[test]
    fn metric_lists_and_tags() {
        assert_eq!(MetricSet::parse_list(&["capacity"]).unwrap().tag(), "capacity");
        assert_eq!(MetricSet::parse_list(&["avg_fidelity", "capacity"]).unwrap().tag(), "capacity-fidelity");
        assert!(MetricSet::parse_list::<&str>(&[]).is_err());
        assert!(MetricSet::parse_list(&["entropy"]).is_err());
    }

    #[test]
    fn m_convention_follows_initial_bell_index() {
        assert_eq!(MConvention::Auto.resolve(&InitialState::BellPsiPlus), 1);
        assert_eq!(MConvention::Auto.resolve(&InitialState::BellPhiPlus), 0);
        assert_eq!(MConvention::Auto.resolve(&InitialState::Computational(0, 0)), 0);
        assert_eq!("2".parse::<MConvention>().unwrap(), MConvention::Fixed(2));
        assert!("4".parse::<MConvention>().is_err());
    }

    #[test]
    fn dephasing_scenario_needs_markovian_dephasing() {
        let mut spec = ScenarioSpec::default().with_scenario(Scenario::D);
        assert!(spec.validate().is_ok());
        spec.noise.dephasing_markovian = false;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
