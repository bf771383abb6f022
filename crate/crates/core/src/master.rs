//! Density-matrix propagation.
//!
//! The closure equation is
//! `d rho/dt = -i[H, rho] + [L, rho Ō0^dagger] - [L^dagger, Ō0 rho]`
//! with `L = sigma_-^A + sigma_-^B` and `Ō0(t)` from the coefficient field.
//! Reference channels: RK4 Lindblad (collective or independent lowering) and
//! closed-form Markovian dephasing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;


use crate::coefficients::{obar_operator, CoefficientField, GridSpec};
use crate::error::{Error, Result};
use crate::format::sig;
use crate::linalg::{anticommutator, commutator, hermitian_eigenvalues, ComplexMatrix, DensityMatrix, Hygiene};
use crate::noise::DephasingTopology;
use crate::scalar::{Real, C};
use crate::system::{SystemParams, TwoQubitOps};

/// Trace drift at which propagation is aborted.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-4;

/// Population of |11> above which the zeroth-order closure is flagged.
pub const DOUBLE_EXCITATION_WARNING: f64 = 1e-12;

/// Hygiene measurements of one stored state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDiagnostics<T> {
    pub trace_deviation: T,
    pub min_eigenvalue: T,
    pub hermiticity_defect: T,
}

impl<T: Real> StateDiagnostics<T> {
    pub fn measure(rho: &ComplexMatrix<T>) -> Result<Self> {
        let hermiticity_defect = rho.hermiticity_defect();
        let hermitian = (*rho + rho.adjoint()).scale_re(T::lit(0.5));
        let ev = hermitian_eigenvalues(&hermitian)?;
        Ok(Self {
            trace_deviation: (rho.trace().re - T::one()).abs(),
            min_eigenvalue: ev[0],
            hermiticity_defect,
        })
    }
}

/// States on the time grid with per-time diagnostics.
#[derive(Debug, Clone)]
pub struct StateTrajectory<T: Real> {
    times: Vec<T>,
    states: Vec<ComplexMatrix<T>>,
    diagnostics: Vec<StateDiagnostics<T>>,
}

impl<T: Real> StateTrajectory<T> {
    fn with_capacity(n: usize) -> Self {
        Self { times: Vec::with_capacity(n), states: Vec::with_capacity(n), diagnostics: Vec::with_capacity(n) }
    }

    fn push(&mut self, t: T, rho: ComplexMatrix<T>) -> Result<()> {
        if rho.entries().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Integrator { t: t.to_f64_lossy(), reason: "non-finite density matrix".into() });
        }
        let d = StateDiagnostics::measure(&rho)?;
        if d.trace_deviation > T::lit(TRACE_DRIFT_LIMIT) {
            return Err(Error::Integrator {
                t: t.to_f64_lossy(),
                reason: format!("trace drift {:e} exceeds {TRACE_DRIFT_LIMIT:e}", d.trace_deviation.to_f64_lossy()),
            });
        }
        self.times.push(t);
        self.states.push(rho);
        self.diagnostics.push(d);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn matrices(&self) -> &[ComplexMatrix<T>] {
        &self.states
    }

    pub fn diagnostics(&self) -> &[StateDiagnostics<T>] {
        &self.diagnostics
    }

    /// State `i` validated against the propagated-state hygiene bounds.
    pub fn state(&self, i: usize) -> Result<DensityMatrix<T>> {
        DensityMatrix::with_hygiene(self.states[i], Hygiene::PROPAGATED).map_err(|e| Error::Integrator {
            t: self.times[i].to_f64_lossy(),
            reason: e.to_string(),
        })
    }

    pub fn max_trace_deviation(&self) -> T {
        self.diagnostics.iter().map(|d| d.trace_deviation).fold(T::zero(), T::max)
    }

    pub fn min_eigenvalue(&self) -> T {
        self.diagnostics.iter().map(|d| d.min_eigenvalue).fold(T::infinity(), T::min)
    }

    pub fn max_hermiticity_defect(&self) -> T {
        self.diagnostics.iter().map(|d| d.hermiticity_defect).fold(T::zero(), T::max)
    }

    /// CSV: `t`, re/im of the 16 entries row-major, `trace_dev`, `min_eig`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        for r in 0..4 {
            for c in 0..4 {
                header.push(format!("re_{r}{c}"));
                header.push(format!("im_{r}{c}"));
            }
        }
        header.push("trace_dev".into());
        header.push("min_eig".into());
        writeln!(w, "{}", header.join(","))?;
        for ((t, rho), d) in self.times.iter().zip(&self.states).zip(&self.diagnostics) {
            let mut row = Vec::with_capacity(35);
            row.push(sig(t.to_f64_lossy()));
            for z in rho.entries() {
                row.push(sig(z.re.to_f64_lossy()));
                row.push(sig(z.im.to_f64_lossy()));
            }
            row.push(sig(d.trace_deviation.to_f64_lossy()));
            row.push(sig(d.min_eigenvalue.to_f64_lossy()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Classical RK4 on the uniform grid. `rhs(h, rho)` receives the stage time
/// in half-steps (`2i`, `2i + 1`, `2i + 2`).
fn rk4<T: Real>(
    rho0: &ComplexMatrix<T>,
    grid: &GridSpec,
    rhs: impl Fn(usize, &ComplexMatrix<T>) -> ComplexMatrix<T>,
) -> Result<StateTrajectory<T>> {
    let steps = grid.steps()?;
    let dt = T::lit(grid.dt);
    let half = dt * T::lit(0.5);
    let sixth = dt / T::lit(6.0);
    let mut out = StateTrajectory::with_capacity(steps + 1);
    let mut rho = *rho0;
    out.push(T::zero(), rho)?;
    for i in 0..steps {
        let h = 2 * i;
        let k1 = rhs(h, &rho);
        let k2 = rhs(h + 1, &(rho + k1.scale_re(half)));
        let k3 = rhs(h + 1, &(rho + k2.scale_re(half)));
        let k4 = rhs(h + 2, &(rho + k3.scale_re(dt)));
        rho += (k1 + (k2 + k3).scale_re(T::lit(2.0)) + k4).scale_re(sixth);
        out.push(T::lit(grid.time(i + 1)), rho)?;
    }
    Ok(out)
}

fn warn_double_excitation<T: Real>(rho0: &DensityMatrix<T>) {
    let p11 = rho0.population(3).to_f64_lossy();
    if p11 > DOUBLE_EXCITATION_WARNING {
        log::warn!(
            "initial |11> population {p11:e} exceeds {DOUBLE_EXCITATION_WARNING:e}; \
             the zeroth-order closure drops the sigma_-^A sigma_-^B contribution"
        );
    }
}

/// Propagates `rho0` under the closure equation driven by `field`.
pub fn propagate_qsd<T: Real>(
    rho0: &DensityMatrix<T>,
    field: &CoefficientField<T>,
    system: &SystemParams,
    grid: &GridSpec,
) -> Result<StateTrajectory<T>> {
    system.validate()?;
    let steps = grid.steps()?;
    if field.steps() != steps || field.grid().dt != grid.dt {
        return Err(Error::Contract(format!(
            "coefficient field grid (dt = {}, N = {}) does not match propagation grid (dt = {}, N = {steps})",
            field.grid().dt,
            field.steps(),
            grid.dt
        )));
    }
    warn_double_excitation(rho0);

    let ops = TwoQubitOps::<T>::new();
    let h = ops.hamiltonian(system);
    let l = ops.collective;
    let l_dag = l.adjoint();
    let nodes: Vec<ComplexMatrix<T>> = (0..=steps).map(|i| obar_operator(field, i)).collect::<Result<_>>()?;
    let obar = |half_steps: usize| -> ComplexMatrix<T> {
        let i = half_steps / 2;
        if half_steps.is_multiple_of(2) {
            nodes[i]
        } else {
            (nodes[i] + nodes[i + 1]).scale_re(T::lit(0.5))
        }
    };
    let minus_i = -C::<T>::i();
    rk4(rho0.matrix(), grid, |hs, rho| {
        let o = obar(hs);
        commutator(&h, rho).scale(minus_i) + commutator(&l, &(*rho * o.adjoint())) - commutator(&l_dag, &(o * *rho))
    })
}

/// Lindblad propagation with lowering dissipators of the given rate.
///
/// `collective`: single jump operator `sigma_-^A + sigma_-^B`; otherwise one
/// `sigma_-` per qubit.
pub fn lindblad_reference<T: Real>(
    rho0: &DensityMatrix<T>,
    system: &SystemParams,
    rate: f64,
    collective: bool,
    grid: &GridSpec,
) -> Result<StateTrajectory<T>> {
    system.validate()?;
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::Parameter(format!("Lindblad rate must be >= 0, got {rate}")));
    }
    let ops = TwoQubitOps::<T>::new();
    let h = ops.hamiltonian(system);
    let jumps: Vec<ComplexMatrix<T>> = if collective { vec![ops.collective] } else { vec![ops.lower_a, ops.lower_b] };
    let terms: Vec<(ComplexMatrix<T>, ComplexMatrix<T>, ComplexMatrix<T>)> =
        jumps.iter().map(|j| (*j, j.adjoint(), j.adjoint() * *j)).collect();
    let gamma = T::lit(rate);
    let half = T::lit(0.5);
    let minus_i = -C::<T>::i();
    rk4(rho0.matrix(), grid, |_, rho| {
        let mut d = commutator(&h, rho).scale(minus_i);
        for (j, j_dag, n) in &terms {
            d += (*j * *rho * *j_dag - anticommutator(n, rho).scale_re(half)).scale_re(gamma);
        }
        d
    })
}

/// Sum of sigma_z eigenvalues (-1 for |0>, +1 for |1>) of basis state `k`.
fn total_z(k: usize) -> i32 {
    let bit = |b: usize| if b == 1 { 1 } else { -1 };
    bit(k >> 1) + bit(k & 1)
}

/// Damping factor applied to coherence `(j, k)` after time `t`.
pub fn dephasing_factor(gamma_alpha: f64, topology: DephasingTopology, t: f64, j: usize, k: usize) -> f64 {
    match topology {
        DephasingTopology::Independent => {
            let d = ((j ^ k) as u32).count_ones() as f64;
            (-gamma_alpha * t * d / 2.0).exp()
        }
        DephasingTopology::Collective => {
            let dz = (total_z(j) - total_z(k)) as f64;
            (-gamma_alpha * t * dz * dz / 8.0).exp()
        }
    }
}

/// Closed-form Markovian dephasing of `rho0` after time `t`.
pub fn dephasing_channel<T: Real>(
    rho0: &DensityMatrix<T>,
    gamma_alpha: f64,
    topology: DephasingTopology,
    t: f64,
) -> Result<DensityMatrix<T>> {
    DensityMatrix::with_hygiene(dephased_matrix(rho0.matrix(), gamma_alpha, topology, t), Hygiene::PROPAGATED)
}

fn dephased_matrix<T: Real>(
    rho: &ComplexMatrix<T>,
    gamma_alpha: f64,
    topology: DephasingTopology,
    t: f64,
) -> ComplexMatrix<T> {
    let mut out = *rho;
    for j in 0..4 {
        for k in 0..4 {
            if j != k {
                out.set(j, k, rho.get(j, k) * T::lit(dephasing_factor(gamma_alpha, topology, t, j, k)));
            }
        }
    }
    out
}

/// Dephasing channel sampled on the grid.
pub fn dephasing_trajectory<T: Real>(
    rho0: &DensityMatrix<T>,
    gamma_alpha: f64,
    topology: DephasingTopology,
    grid: &GridSpec,
) -> Result<StateTrajectory<T>> {
    if !(gamma_alpha >= 0.0) || !gamma_alpha.is_finite() {
        return Err(Error::Parameter(format!("dephasing rate must be >= 0, got {gamma_alpha}")));
    }
    let steps = grid.steps()?;
    let mut out = StateTrajectory::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = grid.time(i);
        out.push(T::lit(t), dephased_matrix(rho0.matrix(), gamma_alpha, topology, t))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;
    use crate::coefficients::evolve_coefficients;
    use crate::linalg::{basis_ket, trace_distance};
    use crate::noise::{markov_limit_params, NoiseConfig, OUParams, Scenario};

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn psi_plus() -> DensityMatrix<f64> {
        DensityMatrix::from_ket(&[C::zero(), C::new(S, 0.0), C::new(S, 0.0), C::zero()]).unwrap()
    }

    fn singlet() -> DensityMatrix<f64> {
        DensityMatrix::from_ket(&[C::zero(), C::new(S, 0.0), C::new(-S, 0.0), C::zero()]).unwrap()
    }

    fn noise_r(coupling: f64, inverse_memory: f64) -> NoiseConfig {
        NoiseConfig {
            relaxation: OUParams { coupling, inverse_memory },
            dephasing: OUParams { coupling: 0.0, inverse_memory: 1.0 },
            scenario: Scenario::R,
            ..NoiseConfig::default()
        }
    }

    fn qsd(noise: &NoiseConfig, rho0: &DensityMatrix<f64>, grid: &GridSpec) -> StateTrajectory<f64> {
        let system = SystemParams::default();
        let field = evolve_coefficients(noise, &system, grid).unwrap();
        propagate_qsd(rho0, &field, &system, grid).unwrap()
    }

    #[test]
    fn ground_state_is_stationary() {
        let grid = GridSpec::new(0.02, 4.0, 1).unwrap();
        let rho0 = DensityMatrix::from_ket(&basis_ket(0)).unwrap();
        let traj = qsd(&noise_r(1.0, 0.1), &rho0, &grid);
        for m in traj.matrices() {
            assert!((*m - *rho0.matrix()).max_abs() < 1e-14);
        }
    }

    #[test]
    fn zero_coupling_is_unitary_and_diagonal_states_freeze() {
        let grid = GridSpec::new(0.02, 2.0, 1).unwrap();
        let rho0 = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.1, 0.2, 0.3, 0.4]).unwrap()).unwrap();
        let traj = qsd(&noise_r(0.0, 0.1), &rho0, &grid);
        for m in traj.matrices() {
            assert!((*m - *rho0.matrix()).max_abs() < 1e-14);
        }
    }

    fn max_distance(a: &StateTrajectory<f64>, b: &StateTrajectory<f64>) -> f64 {
        a.matrices().iter().zip(b.matrices()).map(|(x, y)| trace_distance(x, y).unwrap()).fold(0.0, f64::max)
    }

    #[test]
    fn near_markov_relaxation_converges_to_lindblad() {
        // the kernel integral switches on over 1/gamma, so the gap to the
        // memoryless limit is an initial slip of order 2 Gamma / gamma
        let rho0 = psi_plus();
        let system = SystemParams::default();
        let gap = |gamma: f64, dt: f64, stride: usize| {
            let grid = GridSpec::new(dt, 2.0, stride).unwrap();
            let traj = qsd(&noise_r(1.0, gamma), &rho0, &grid);
            max_distance(&traj, &lindblad_reference(&rho0, &system, 1.0, true, &grid).unwrap())
        };
        let g50 = gap(50.0, 0.005, 4);
        let g100 = gap(100.0, 0.005, 4);
        let g200 = gap(200.0, 0.0025, 8);
        assert!((0.6 * 2.0 / 50.0..=2.0 / 50.0).contains(&g50), "{g50}");
        assert!((g50 / g100 - 2.0).abs() < 0.2 && (g100 / g200 - 2.0).abs() < 0.2, "{g50} {g100} {g200}");
        assert!(g200 <= 1e-2);
    }

    fn excitation(traj: &StateTrajectory<f64>) -> Vec<f64> {
        let n = TwoQubitOps::<f64>::new().excitation_number();
        traj.matrices().iter().map(|m| (*m * n).trace().re).collect()
    }

    #[test]
    fn hygiene_and_excitation_monotonicity() {
        let grid = GridSpec::new(0.01, 10.0, 2).unwrap();
        for noise in [noise_r(1.0, 2.0), NoiseConfig::default()] {
            let traj = qsd(&noise, &psi_plus(), &grid);
            assert!(traj.max_trace_deviation() <= 1e-6);
            assert!(traj.max_hermiticity_defect() <= 1e-8);
            assert!(traj.min_eigenvalue() >= -1e-5);
            for w in excitation(&traj).windows(2) {
                assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn long_memory_backflow_needs_negative_decay_rate() {
        let grid = GridSpec::new(0.01, 10.0, 2).unwrap();
        let system = SystemParams::default();
        let noise = noise_r(1.0, 0.1);
        let field = evolve_coefficients(&noise, &system, &grid).unwrap();
        let traj = propagate_qsd(&psi_plus(), &field, &system, &grid).unwrap();
        assert!(traj.max_trace_deviation() <= 1e-6);
        assert!(traj.min_eigenvalue() >= -1e-5);
        let exc = excitation(&traj);
        let mut revivals = 0;
        for i in 0..exc.len() - 1 {
            if exc[i + 1] > exc[i] {
                revivals += 1;
                // <00|Ō0|Psi+> = sqrt(2) (F1 - F3) when F1 = F2, F3 = F4
                let rate = (field.integrated(1, i) - field.integrated(3, i)).re
                    .min((field.integrated(1, i + 1) - field.integrated(3, i + 1)).re);
                assert!(rate < 0.0, "revival at t = {} with Re(F1 - F3) = {rate}", grid.time(i));
            }
        }
        assert!(revivals > 0);
    }

    #[test]
    fn exchange_symmetric_states_stay_symmetric() {
        let grid = GridSpec::new(0.02, 4.0, 1).unwrap();
        let ops = TwoQubitOps::<f64>::new();
        let traj = qsd(&NoiseConfig::default(), &psi_plus(), &grid);
        for m in traj.matrices() {
            assert!(commutator(m, &ops.swap).max_abs() <= 1e-8);
        }
    }

    #[test]
    fn lindblad_without_rate_is_unitary() {
        let grid = GridSpec::new(0.05, 2.0, 1).unwrap();
        let traj = lindblad_reference(&psi_plus(), &SystemParams::default(), 0.0, true, &grid).unwrap();
        // (|01> + |10>) is degenerate under H for equal frequencies
        for m in traj.matrices() {
            assert!((*m - *psi_plus().matrix()).max_abs() < 1e-12);
        }
    }

    #[test]
    fn singlet_is_dark_under_collective_decay() {
        let grid = GridSpec::new(0.05, 5.0, 1).unwrap();
        let traj = lindblad_reference(&singlet(), &SystemParams::default(), 1.0, true, &grid).unwrap();
        for m in traj.matrices() {
            assert!((*m - *singlet().matrix()).max_abs() < 1e-12);
        }
        let l = TwoQubitOps::<f64>::new().collective;
        let ket = [C::zero(), C::new(S, 0.0), C::new(-S, 0.0), C::zero()];
        assert!(l.apply(&ket).iter().all(|z| z.norm() < 1e-16));
    }

    #[test]
    fn collective_cascade_from_double_excitation() {
        let rho0 = DensityMatrix::<f64>::from_ket(&basis_ket(3)).unwrap();
        let system = SystemParams::default();
        let coarse = lindblad_reference(&rho0, &system, 1.0, true, &GridSpec::new(0.02, 4.0, 1).unwrap()).unwrap();
        let fine = lindblad_reference(&rho0, &system, 1.0, true, &GridSpec::new(0.01, 4.0, 1).unwrap()).unwrap();
        // |11> -> Psi+ at rate 2, Psi+ -> |00> at rate 2
        let t = 4.0f64;
        let p11 = (-2.0 * t).exp();
        let p00 = 1.0 - (-2.0 * t).exp() - 2.0 * t * (-2.0 * t).exp();
        let last = fine.matrices().last().unwrap();
        assert!((last.get(3, 3).re - p11).abs() < 1e-8);
        assert!((last.get(0, 0).re - p00).abs() < 1e-8);
        for (a, b) in coarse.matrices().iter().zip(fine.matrices().iter().step_by(2)) {
            assert!((*a - *b).max_abs() < 1e-6);
        }
        assert!(fine.max_trace_deviation() < 1e-12);
    }

    #[test]
    fn independent_lindblad_decays_each_qubit() {
        let rho0 = DensityMatrix::<f64>::from_ket(&basis_ket(3)).unwrap();
        let grid = GridSpec::new(0.01, 1.0, 1).unwrap();
        let traj = lindblad_reference(&rho0, &SystemParams::default(), 0.5, false, &grid).unwrap();
        let p = (-0.5f64).exp();
        let last = traj.matrices().last().unwrap();
        assert!((last.get(3, 3).re - p * p).abs() < 1e-9);
        assert!((last.get(1, 1).re - p * (1.0 - p)).abs() < 1e-9);
    }

    #[test]
    fn dephasing_channel_examples() {
        let rho0 = psi_plus();
        let same = dephasing_channel(&rho0, 1.0, DephasingTopology::Independent, 0.0).unwrap();
        assert_eq!(same.matrix(), rho0.matrix());
        let collective = dephasing_channel(&rho0, 3.0, DephasingTopology::Collective, 7.0).unwrap();
        assert_eq!(collective.matrix(), rho0.matrix());
        let independent = dephasing_channel(&rho0, 1.0, DephasingTopology::Independent, 1.0).unwrap();
        assert!((independent.matrix().get(1, 2).re - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((independent.matrix().get(1, 1).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn collective_dephasing_damps_phi_coherence() {
        assert!((dephasing_factor(1.0, DephasingTopology::Collective, 1.0, 0, 3) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((dephasing_factor(1.0, DephasingTopology::Collective, 1.0, 0, 1) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((dephasing_factor(1.0, DephasingTopology::Independent, 1.0, 0, 3) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let system = SystemParams::default();
        let field = evolve_coefficients::<f64>(&noise_r(1.0, 0.1), &system, &GridSpec::new(0.1, 1.0, 1).unwrap())
            .unwrap();
        let other = GridSpec::new(0.05, 1.0, 1).unwrap();
        assert!(matches!(propagate_qsd(&psi_plus(), &field, &system, &other), Err(Error::Contract(_))));
    }

    #[test]
    fn trace_drift_aborts() {
        let grid = GridSpec::new(0.1, 1.0, 1).unwrap();
        let bad = ComplexMatrix::from_real_diagonal(&[1.001, 0.0, 0.0, 0.0]).unwrap();
        match rk4(&bad, &grid, |_, _| ComplexMatrix::zeros(4)) {
            Err(Error::Integrator { t, .. }) => assert_eq!(t, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn composite_markov_gap_is_initial_slip() {
        let noise = NoiseConfig {
            relaxation: OUParams { coupling: 1.0, inverse_memory: 50.0 },
            dephasing: OUParams { coupling: 1.0, inverse_memory: 1.0 },
            ..NoiseConfig::default()
        };
        let grid = GridSpec::new(0.01, 4.0, 2).unwrap();
        let traj = qsd(&noise, &psi_plus(), &grid);
        let eff = markov_limit_params(&noise).unwrap();
        let reference = lindblad_reference(&psi_plus(), &SystemParams::default(), eff.coupling, true, &grid).unwrap();
        let gap = max_distance(&traj, &reference);
        let slip = 2.0 * eff.coupling / eff.inverse_memory;
        assert!((0.6 * slip..=slip).contains(&gap), "gap {gap}, slip {slip}");
    }

    #[test]
    fn trajectory_csv_layout() {
        let grid = GridSpec::new(0.5, 1.0, 1).unwrap();
        let traj = dephasing_trajectory(&psi_plus(), 1.0, DephasingTopology::Independent, &grid).unwrap();
        let mut buf = Vec::new();
        traj.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].split(',').count(), 35);
        assert!(lines[0].starts_with("t,re_00,im_00,re_01"));
        assert!(lines[0].ends_with("trace_dev,min_eig"));
        assert!(lines[1].starts_with("0,0,0,0,0,0,0,0,0,0,0,0.5,0,0.5,0"));
        assert!(!text.contains('\r'));
    }
}
