//! Dense-coding capacity and teleportation fidelity of a two-qubit channel.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigenvalues, on_qubit, pauli, spectrum_entropy, von_neumann_entropy, ComplexMatrix, DensityMatrix,
    Qubit,
};
use crate::scalar::{Real, C};

/// Local unitaries applied by the sender to qubit A, with their probabilities.
#[derive(Debug, Clone, Copy)]
pub struct EncodingSet<T: Real> {
    /// I, sigma_x, sigma_z, sigma_x sigma_z, lifted to the pair
    unitaries: [ComplexMatrix<T>; 4],
    probabilities: [T; 4],
}

impl<T: Real> EncodingSet<T> {
    pub fn uniform() -> Self {
        Self::with_probabilities([T::lit(0.25); 4]).expect("uniform weights are valid")
    }

    pub fn with_probabilities(probabilities: [T; 4]) -> Result<Self> {
        if probabilities.iter().any(|p| !(*p >= T::zero())) {
            return Err(Error::Parameter("encoding probabilities must be >= 0".into()));
        }
        let total: T = probabilities.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-12) {
            return Err(Error::Parameter(format!("encoding probabilities sum to {total}, not 1")));
        }
        let x = pauli::x::<T>();
        let z = pauli::z::<T>();
        let local = [pauli::identity(), x, z, x * z];
        let unitaries = local.map(|u| on_qubit(&u, Qubit::A).expect("2x2 operand"));
        Ok(Self { unitaries, probabilities })
    }

    pub fn unitaries(&self) -> &[ComplexMatrix<T>; 4] {
        &self.unitaries
    }

    pub fn probabilities(&self) -> &[T; 4] {
        &self.probabilities
    }

    /// sum_i p_i U_i rho U_i^dagger
    pub fn average(&self, rho: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        let mut out = ComplexMatrix::zeros(4);
        for (u, p) in self.unitaries.iter().zip(&self.probabilities) {
            out += (*u * *rho * u.adjoint()).scale_re(*p);
        }
        out
    }
}

impl<T: Real> Default for EncodingSet<T> {
    fn default() -> Self {
        Self::uniform()
    }
}

/// The four Bell states.
///
/// Index 0: (|00> + |11>)/sqrt2, 1: (|01> + |10>)/sqrt2,
/// 2: (|01> - |10>)/sqrt2, 3: (|00> - |11>)/sqrt2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BellBasis;

impl BellBasis {
    pub fn ket<T: Real>(index: usize) -> [C<T>; 4] {
        let s = T::lit(FRAC_1_SQRT_2);
        let (z, p, m) = (C::zero(), C::new(s, T::zero()), C::new(-s, T::zero()));
        match index {
            0 => [p, z, z, p],
            1 => [z, p, p, z],
            2 => [z, p, m, z],
            3 => [p, z, z, m],
            _ => panic!("Bell index {index} out of range 0..4"),
        }
    }

    pub fn projector<T: Real>(index: usize) -> ComplexMatrix<T> {
        ComplexMatrix::outer(&Self::ket::<T>(index)).expect("4-dimensional ket")
    }

    pub fn state<T: Real>(index: usize) -> DensityMatrix<T> {
        DensityMatrix::new(Self::projector(index)).expect("Bell projector is a state")
    }

    /// Correction sigma^k: I, sigma_x, sigma_y, sigma_z.
    pub fn correction<T: Real>(k: usize) -> ComplexMatrix<T> {
        pauli::indexed(k)
    }

    /// Index combination k (+) m as bitwise XOR of the 2-bit labels.
    pub fn combine(k: usize, m: usize) -> usize {
        assert!(k < 4 && m < 4, "Bell indices must be < 4");
        k ^ m
    }
}

/// Werner state p |Psi^k><Psi^k| + (1 - p) I/4.
pub fn werner_state<T: Real>(p: T, bell_index: usize) -> Result<DensityMatrix<T>> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::Parameter(format!("Werner weight must lie in [0, 1], got {p}")));
    }
    let m = BellBasis::projector::<T>(bell_index).scale_re(p) + ComplexMatrix::identity(4).scale_re((T::one() - p) * T::lit(0.25));
    DensityMatrix::new(m)
}

/// Input state cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub theta: f64,
    pub phi: f64,
}

impl BlochState {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::Parameter(format!("theta must lie in [0, pi], got {theta}")));
        }
        if !(0.0..2.0 * PI).contains(&phi) {
            return Err(Error::Parameter(format!("phi must lie in [0, 2pi), got {phi}")));
        }
        Ok(Self { theta, phi })
    }

    pub fn ket<T: Real>(&self) -> [C<T>; 2] {
        let half = T::lit(self.theta / 2.0);
        [
            C::new(half.cos(), T::zero()),
            Complex::from_polar(half.sin(), T::lit(self.phi)),
        ]
    }

    pub fn density<T: Real>(&self) -> ComplexMatrix<T> {
        ComplexMatrix::outer(&self.ket::<T>()).expect("2-dimensional ket")
    }
}

/// Holevo quantity S(rho_bar) - S(rho) in bits.
pub fn dense_coding_capacity<T: Real>(rho: &DensityMatrix<T>, enc: &EncodingSet<T>) -> Result<T> {
    let avg = enc.average(rho.matrix());
    let hermitian = (avg + avg.adjoint()).scale_re(T::lit(0.5));
    let s_avg = spectrum_entropy(&hermitian_eigenvalues(&hermitian)?, rho.positivity_tolerance())?;
    Ok(s_avg - von_neumann_entropy(rho)?)
}

/// Overlaps <Psi^k|rho|Psi^k> for k = 0..3.
pub fn bell_probabilities<T: Real>(rho: &DensityMatrix<T>) -> [T; 4] {
    std::array::from_fn(|k| {
        let ket = BellBasis::ket::<T>(k);
        rho.matrix().sandwich(&ket, &ket).re
    })
}

/// rho_out^m = sum_k p_{k xor m} sigma^k rho_in sigma^k.
pub fn teleport_output<T: Real>(rho_channel: &DensityMatrix<T>, psi_in: &BlochState, m: usize) -> Result<ComplexMatrix<T>> {
    check_outcome(m)?;
    let p = bell_probabilities(rho_channel);
    let rho_in = psi_in.density::<T>();
    let mut out = ComplexMatrix::zeros(2);
    for (k, _) in p.iter().enumerate() {
        let s = BellBasis::correction::<T>(k);
        out += (s * rho_in * s.adjoint()).scale_re(p[BellBasis::combine(k, m)]);
    }
    Ok(out)
}

fn check_outcome(m: usize) -> Result<()> {
    if m < 4 {
        Ok(())
    } else {
        Err(Error::Contract(format!("Bell outcome index {m} out of range 0..4")))
    }
}

/// How the Bloch-sphere average is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMethod {
    #[default]
    ClosedForm,
    Quadrature,
}

impl FromStr for FidelityMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "closed-form" => Ok(Self::ClosedForm),
            "quadrature" => Ok(Self::Quadrature),
            other => Err(Error::Parameter(format!("unknown fidelity method '{other}'"))),
        }
    }
}

/// Gauss-Legendre points in cos(theta).
pub const POLAR_NODES: usize = 32;
/// Uniform points in phi.
pub const AZIMUTHAL_NODES: usize = 64;

/// Bloch-sphere average of <psi|rho_out^m|psi>.
///
/// The closed form is (1 + 2 p_m)/3: the k = 0 term keeps the input, the
/// three Pauli flips each average to 1/3 over the sphere.
pub fn average_fidelity<T: Real>(rho_channel: &DensityMatrix<T>, m: usize, method: FidelityMethod) -> Result<T> {
    check_outcome(m)?;
    match method {
        FidelityMethod::ClosedForm => {
            let p = bell_probabilities(rho_channel);
            Ok((T::one() + T::lit(2.0) * p[m]) / T::lit(3.0))
        }
        FidelityMethod::Quadrature => quadrature_fidelity(rho_channel, m),
    }
}

/// Outcome-probability-weighted mean sum_m p_m F^m.
pub fn average_fidelity_over_outcomes<T: Real>(rho_channel: &DensityMatrix<T>, method: FidelityMethod) -> Result<T> {
    let p = bell_probabilities(rho_channel);
    let mut acc = T::zero();
    for (m, pm) in p.iter().enumerate() {
        acc = acc + *pm * average_fidelity(rho_channel, m, method)?;
    }
    Ok(acc)
}

fn quadrature_fidelity<T: Real>(rho_channel: &DensityMatrix<T>, m: usize) -> Result<T> {
    let p = bell_probabilities(rho_channel);
    let corrections: [ComplexMatrix<T>; 4] = std::array::from_fn(BellBasis::correction::<T>);
    let (nodes, weights) = gauss_legendre(POLAR_NODES);
    let mut total = T::zero();
    for (x, w) in nodes.iter().zip(weights) {
        let theta = x.clamp(-1.0, 1.0).acos();
        let mut ring = T::zero();
        for j in 0..AZIMUTHAL_NODES {
            let phi = 2.0 * PI * j as f64 / AZIMUTHAL_NODES as f64;
            let ket = BlochState { theta, phi }.ket::<T>();
            let mut f = T::zero();
            for (k, s) in corrections.iter().enumerate() {
                let flipped = s.apply(&ket);
                let overlap: C<T> = ket.iter().zip(&flipped).map(|(a, b)| a.conj() * b).fold(C::zero(), |acc, z| acc + z);
                f = f + p[BellBasis::combine(k, m)] * overlap.norm_sqr();
            }
            ring = ring + f;
        }
        total = total + T::lit(w) * ring / T::lit(AZIMUTHAL_NODES as f64);
    }
    // (1/4pi) int dphi dcos = (1/2) sum_i w_i <f>_phi
    Ok(total * T::lit(0.5))
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == POLAR_NODES {
        static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
        return CACHE.get_or_init(|| compute_gauss_legendre(POLAR_NODES)).clone();
    }
    compute_gauss_legendre(n)
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
