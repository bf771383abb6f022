//! Invariant suite behind the `validate` subcommand.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::{evolve_coefficients, residual_breakdown, CoefficientField, GridSpec};
use crate::error::{Error, Result};
use crate::format::sig_digits;
use crate::linalg::{basis_ket, hermitian_eigenvalues_with, spectrum_entropy, ComplexMatrix, DensityMatrix, JacobiOptions};
use crate::master::dephasing_channel;
use crate::noise::{CorrelationKernel, DephasingTopology, NoiseConfig, OUParams, Scenario};
use crate::protocols::{
    average_fidelity, dense_coding_capacity, werner_state, BellBasis, EncodingSet, FidelityMethod,
};
use crate::system::SystemParams;

use super::scenario::{run_scenario, simulate};
use super::spec::ScenarioSpec;

/// Seed of every random draw in the suite.
pub const VALIDATION_SEED: u64 = 0x005e_ed0f_c0de;
/// Random channel states in the closed-form vs quadrature check.
pub const QUADRATURE_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(Error::Config(format!("validation level must be fast|full, got '{other}'"))),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Fast => "fast",
            Level::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub level: Level,
    /// Eigensolver settings used by the entropy checks.
    pub jacobi: JacobiOptions,
    /// Overrides the base step of the level.
    pub dt: Option<f64>,
}

impl ValidateOptions {
    pub fn new(level: Level) -> Self {
        Self { level, jacobi: JacobiOptions::default(), dt: None }
    }

    /// Base grid: coarse for fast, acceptance-grade for full.
    pub fn grid(&self) -> GridSpec {
        let (dt, t_max, s1_stride) = match self.level {
            Level::Fast => (0.02, 2.0, 1),
            Level::Full => (0.01, 10.0, 2),
        };
        GridSpec { dt: self.dt.unwrap_or(dt), t_max, s1_stride }
    }

    /// Short grid of the convergence ladder.
    pub fn ladder_grid(&self) -> GridSpec {
        GridSpec { t_max: 2.0, s1_stride: 1, ..self.grid() }
    }
}

/// One invariant with its measured value.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}::{}: {}", self.module, self.name, self.measured)
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub level: Level,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "validate {}: {} checks, {} failed, {:.1} s",
            self.level,
            self.checks.len(),
            failed,
            self.seconds
        )
    }
}

fn e(x: f64) -> String {
    sig_digits(x, 4)
}

fn check(module: &'static str, name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, measured)) => Check { module, name, passed, measured },
        Err(err) => Check { module, name, passed: false, measured: format!("error: {err}") },
    }
}

/// Runs every invariant; failures are report content, never errors.
pub fn validate(opts: &ValidateOptions) -> ValidationReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
    let mut checks = vec![
        check("linalg", "entropy_random_spectra", entropy_random_spectra(&mut rng, opts.jacobi)),
        check("linalg", "entropy_werner", entropy_werner(opts.jacobi)),
        check("noise", "kernel_reduction", kernel_reduction()),
        check("noise", "markov_limit_kernel", markov_limit_kernel()),
        check("coefficients", "exchange_symmetry", exchange_symmetry(&opts.ladder_grid())),
    ];
    match convergence_ladder(&opts.ladder_grid()) {
        Ok(ladder) => {
            checks.push(check("coefficients", "grid_convergence", Ok(ladder.order_check())));
            checks.push(check("coefficients", "coefficient_residual", Ok(ladder.residual_check())));
        }
        Err(err) => {
            for name in ["grid_convergence", "coefficient_residual"] {
                checks.push(check("coefficients", name, Err(err.clone())));
            }
        }
    }
    checks.push(check("master", "trajectory_hygiene", trajectory_hygiene(opts)));
    checks.push(check("master", "reduction_c_to_r", reduction(&opts.grid())));
    checks.push(check("master", "ground_state_stationary", ground_state_stationary(&opts.ladder_grid())));
    checks.push(check("master", "dephasing_closed_form", dephasing_closed_form()));
    checks.push(check("protocols", "bell_anchors", bell_anchors()));
    checks.push(check("protocols", "closed_form_vs_quadrature", quadrature_agreement(&mut rng)));
    checks.push(check("protocols", "werner_monotonicity", werner_monotonicity()));
    checks.push(check("protocols", "decayed_channel_fidelity", decayed_channel_fidelity()));
    ValidationReport { level: opts.level, checks, seconds: start.elapsed().as_secs_f64() }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Complex<f64> {
    Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Columns of a random unitary (Gram-Schmidt on random vectors).
fn random_unitary(rng: &mut ChaCha8Rng) -> [[Complex<f64>; 4]; 4] {
    let mut cols = [[Complex::new(0.0, 0.0); 4]; 4];
    for k in 0..4 {
        let mut v: [Complex<f64>; 4] = std::array::from_fn(|_| random_unit(rng));
        for q in cols.iter().take(k) {
            let overlap: Complex<f64> = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= overlap * qi;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        cols[k] = v.map(|z| z / norm);
    }
    cols
}

fn random_spectrum(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let w: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

fn rotated(spectrum: &[f64; 4], u: &[[Complex<f64>; 4]; 4]) -> ComplexMatrix<f64> {
    let mut m = ComplexMatrix::zeros(4);
    for (l, col) in spectrum.iter().zip(u) {
        m += ComplexMatrix::outer(col).expect("4-vector").scale_re(*l);
    }
    (m + m.adjoint()).scale_re(0.5)
}

fn exact_entropy(spectrum: &[f64]) -> f64 {
    spectrum.iter().filter(|l| **l > 0.0).map(|l| -l * l.log2()).sum()
}

fn entropy_random_spectra(rng: &mut ChaCha8Rng, jacobi: JacobiOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let spectrum = random_spectrum(rng);
        let m = rotated(&spectrum, &random_unitary(rng));
        let s = spectrum_entropy(&hermitian_eigenvalues_with(&m, jacobi)?, 1e-6)?;
        worst = worst.max((s - exact_entropy(&spectrum)).abs());
    }
    Ok((worst <= 1e-9, format!("max |S - S_exact| = {} over 50 rotated spectra (<= 1e-9)", e(worst))))
}

fn entropy_werner(jacobi: JacobiOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for i in 0..=10 {
        let p = i as f64 / 10.0;
        for k in 0..4 {
            let w = werner_state(p, k)?;
            let s = spectrum_entropy(&hermitian_eigenvalues_with(w.matrix(), jacobi)?, 1e-6)?;
            let q = (1.0 - p) / 4.0;
            worst = worst.max((s - exact_entropy(&[p + q, q, q, q])).abs());
        }
    }
    Ok((worst <= 1e-9, format!("max |S - S_exact| = {} over 44 Werner states (<= 1e-9)", e(worst))))
}

fn kernel_reduction() -> Result<(bool, String)> {
    let mut noise = NoiseConfig::default();
    noise.dephasing.coupling = 0.0;
    let c = CorrelationKernel::relaxation_kernel(&noise)?;
    let g = CorrelationKernel::general_composite(&noise)?;
    let beta = CorrelationKernel::Beta(noise.relaxation);
    let worst = (0..=1000)
        .map(|i| {
            let tau = i as f64 * 0.01;
            (c.eval(tau) - beta.eval(tau)).abs().max((g.eval(tau) - beta.eval(tau)).abs())
        })
        .fold(0.0, f64::max);
    Ok((worst <= 1e-15, format!("max |G - beta| at Gamma_alpha = 0: {} (<= 1e-15)", e(worst))))
}

fn markov_limit_kernel() -> Result<(bool, String)> {
    let noise = NoiseConfig {
        dephasing: OUParams { coupling: 1.0, inverse_memory: 1e4 },
        dephasing_markovian: false,
        scenario: Scenario::C,
        ..NoiseConfig::default()
    };
    let general = CorrelationKernel::relaxation_kernel(&noise)?;
    let effective = CorrelationKernel::relaxation_kernel(&NoiseConfig { dephasing_markovian: true, ..noise })?;
    let scale = effective.eval(0.0);
    let worst = (0..=1000)
        .map(|i| (general.eval(i as f64 * 0.01) - effective.eval(i as f64 * 0.01)).abs())
        .fold(0.0, f64::max);
    let rel = worst / scale;
    Ok((rel <= 1e-3, format!("max |G - G_eff| / G(0) at gamma_alpha = 1e4: {} (<= 1e-3)", e(rel))))
}

fn exchange_symmetry(grid: &GridSpec) -> Result<(bool, String)> {
    let noise = NoiseConfig::default();
    let field: CoefficientField<f64> = evolve_coefficients(&noise, &SystemParams::default(), grid)?;
    let mut worst: f64 = 0.0;
    for i in 0..=field.steps() {
        for j in 0..=i {
            worst = worst.max((field.f(1, i, j) - field.f(2, i, j)).norm());
            worst = worst.max((field.f(3, i, j) - field.f(4, i, j)).norm());
        }
    }
    Ok((worst <= 1e-10, format!("max |f1 - f2|, |f3 - f4| = {} (<= 1e-10)", e(worst))))
}

struct Ladder {
    dts: [f64; 3],
    residuals: [f64; 3],
}

impl Ladder {
    fn orders(&self) -> [f64; 2] {
        [(self.residuals[0] / self.residuals[1]).log2(), (self.residuals[1] / self.residuals[2]).log2()]
    }

    fn order_check(&self) -> (bool, String) {
        let o = self.orders();
        let ok = o.iter().all(|p| (1.7..=2.3).contains(p));
        (
            ok,
            format!(
                "residual order {} (dt {} -> {}), {} (-> {}) in [1.7, 2.3]",
                e(o[0]),
                e(self.dts[0]),
                e(self.dts[1]),
                e(o[1]),
                e(self.dts[2])
            ),
        )
    }

    fn residual_check(&self) -> (bool, String) {
        let r = self.residuals;
        (
            r[2] <= 1e-4,
            format!("residual {} / {} / {} at dt {} / {} / {} (finest <= 1e-4)", e(r[0]), e(r[1]), e(r[2]), e(self.dts[0]), e(self.dts[1]), e(self.dts[2])),
        )
    }
}

/// Residuals of scenario R at dt, dt/2, dt/4.
fn convergence_ladder(grid: &GridSpec) -> Result<Ladder> {
    let noise = NoiseConfig { scenario: Scenario::R, ..NoiseConfig::default() };
    let system = SystemParams::default();
    let mut g = *grid;
    let mut dts = [0.0; 3];
    let mut residuals = [0.0; 3];
    for k in 0..3 {
        let field: CoefficientField<f64> = evolve_coefficients(&noise, &system, &g)?;
        dts[k] = g.dt;
        residuals[k] = residual_breakdown(&field, &noise, &system)?.max();
        g = GridSpec { dt: g.dt / 2.0, ..g };
    }
    Ok(Ladder { dts, residuals })
}

fn trajectory_hygiene(opts: &ValidateOptions) -> Result<(bool, String)> {
    let gammas: &[f64] = match opts.level {
        Level::Fast => &[0.1],
        Level::Full => &[0.1, 2.0],
    };
    let (mut trace, mut herm, mut min_eig) = (0.0_f64, 0.0_f64, f64::INFINITY);
    let mut runs = 0;
    for &gb in gammas {
        for sc in Scenario::ALL {
            let mut spec = ScenarioSpec::default().with_scenario(sc);
            spec.grid = opts.grid();
            spec.noise.relaxation.inverse_memory = gb;
            let sim = simulate(&spec)?;
            trace = trace.max(sim.trajectory.max_trace_deviation());
            herm = herm.max(sim.trajectory.max_hermiticity_defect());
            min_eig = min_eig.min(sim.trajectory.min_eigenvalue());
            runs += 1;
        }
    }
    let ok = trace <= 1e-6 && herm <= 1e-8 && min_eig >= -1e-5;
    Ok((
        ok,
        format!(
            "{runs} trajectories: trace dev {} (<= 1e-6), hermiticity {} (<= 1e-8), min eig {} (>= -1e-5)",
            e(trace),
            e(herm),
            e(min_eig)
        ),
    ))
}

fn reduction(grid: &GridSpec) -> Result<(bool, String)> {
    let mut c = ScenarioSpec::default().with_scenario(Scenario::C);
    c.grid = GridSpec { t_max: grid.t_max.min(2.0), ..*grid };
    c.noise.dephasing.coupling = 0.0;
    let r = c.with_scenario(Scenario::R);
    let (mc, mr) = (run_scenario(&c).map_err(|f| f.error)?, run_scenario(&r).map_err(|f| f.error)?);
    let diff = |a: &Option<Vec<f64>>, b: &Option<Vec<f64>>| -> f64 {
        match (a, b) {
            (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
            _ => f64::INFINITY,
        }
    };
    let worst = diff(&mc.chi, &mr.chi).max(diff(&mc.avg_fidelity, &mr.avg_fidelity));
    Ok((worst <= 1e-12, format!("max |C(Gamma_alpha = 0) - R| = {} (<= 1e-12)", e(worst))))
}

fn ground_state_stationary(grid: &GridSpec) -> Result<(bool, String)> {
    let mut spec = ScenarioSpec::default();
    spec.grid = *grid;
    spec.initial_state = super::spec::InitialState::Computational(0, 0);
    let sim = simulate(&spec)?;
    let target = DensityMatrix::<f64>::from_ket(&basis_ket(0))?;
    let worst = sim.trajectory.matrices().iter().map(|m| (*m - *target.matrix()).max_abs()).fold(0.0, f64::max);
    Ok((worst <= 1e-12, format!("max |rho_t - |00><00|| = {} (<= 1e-12)", e(worst))))
}

fn dephasing_closed_form() -> Result<(bool, String)> {
    let rho = BellBasis::state::<f64>(1);
    let mut worst: f64 = 0.0;
    for (ga, t) in [(1.0, 0.5), (2.0, 1.0), (4.0, 3.0)] {
        let out = dephasing_channel(&rho, ga, DephasingTopology::Independent, t)?;
        worst = worst.max((out.matrix().get(1, 2).re - 0.5 * (-ga * t).exp()).abs());
        worst = worst.max((out.population(1) - 0.5).abs());
    }
    Ok((worst <= 1e-14, format!("max deviation from 0.5 exp(-Gamma_alpha t) = {} (<= 1e-14)", e(worst))))
}

fn bell_anchors() -> Result<(bool, String)> {
    let enc = EncodingSet::uniform();
    let mut worst: f64 = 0.0;
    for k in 0..4 {
        let rho = BellBasis::state::<f64>(k);
        worst = worst.max((dense_coding_capacity(&rho, &enc)? - 2.0).abs());
        worst = worst.max((average_fidelity(&rho, k, FidelityMethod::ClosedForm)? - 1.0).abs());
    }
    Ok((worst <= 1e-9, format!("max |chi - 2|, |F - 1| over Bell channels = {} (<= 1e-9)", e(worst))))
}

fn quadrature_agreement(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..QUADRATURE_SAMPLES {
        let rho = DensityMatrix::new(rotated(&random_spectrum(rng), &random_unitary(rng)))?;
        let m = rng.gen_range(0..4);
        let a = average_fidelity(&rho, m, FidelityMethod::ClosedForm)?;
        let b = average_fidelity(&rho, m, FidelityMethod::Quadrature)?;
        worst = worst.max((a - b).abs());
    }
    Ok((
        worst <= 1e-9,
        format!("max |closed form - quadrature| = {} over {QUADRATURE_SAMPLES} states (<= 1e-9)", e(worst)),
    ))
}

fn werner_monotonicity() -> Result<(bool, String)> {
    let enc = EncodingSet::uniform();
    let mut last = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut min_step = f64::INFINITY;
    for i in 0..=50 {
        let w = werner_state(i as f64 / 50.0, 1)?;
        let now = (dense_coding_capacity(&w, &enc)?, average_fidelity(&w, 1, FidelityMethod::ClosedForm)?);
        if i > 0 {
            min_step = min_step.min(now.0 - last.0).min(now.1 - last.1);
        }
        last = now;
    }
    Ok((min_step > 0.0, format!("min increment of chi, F over p in [0, 1] = {} (> 0)", e(min_step))))
}

fn decayed_channel_fidelity() -> Result<(bool, String)> {
    let rho = DensityMatrix::<f64>::from_ket(&basis_ket(0))?;
    let f = average_fidelity(&rho, 0, FidelityMethod::Quadrature)?;
    let d = (f - 2.0 / 3.0).abs();
    Ok((d <= 1e-10, format!("F(|00><00|, m = 0) = {} (2/3 +- 1e-10)", sig_digits(f, 12))))
}
