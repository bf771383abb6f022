//! Two-qubit system Hamiltonian and coupling operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{on_qubit, pauli, ComplexMatrix, Qubit};
use crate::scalar::Real;

/// Qubit transition frequencies in units of the reference frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_a: f64,
    pub omega_b: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self { omega_a: 1.0, omega_b: 1.0 }
    }
}

impl SystemParams {
    pub fn new(omega_a: f64, omega_b: f64) -> Result<Self> {
        let p = Self { omega_a, omega_b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("omega_A", self.omega_a), ("omega_B", self.omega_b)] {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite and > 0, got {w}")));
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.omega_a == self.omega_b
    }
}

/// The fixed operator set of the model, lifted to the pair.
#[derive(Debug, Clone, Copy)]
pub struct TwoQubitOps<T: Real> {
    /// sigma_-^A
    pub lower_a: ComplexMatrix<T>,
    /// sigma_-^B
    pub lower_b: ComplexMatrix<T>,
    pub z_a: ComplexMatrix<T>,
    pub z_b: ComplexMatrix<T>,
    /// L = sigma_-^A + sigma_-^B
    pub collective: ComplexMatrix<T>,
    /// sigma_z^A sigma_-^B
    pub z_a_lower_b: ComplexMatrix<T>,
    /// sigma_-^A sigma_z^B
    pub lower_a_z_b: ComplexMatrix<T>,
    /// qubit exchange |ab> -> |ba>
    pub swap: ComplexMatrix<T>,
}

impl<T: Real> TwoQubitOps<T> {
    pub fn new() -> Self {
        let lower = pauli::lowering::<T>();
        let z = pauli::z::<T>();
        let lower_a = on_qubit(&lower, Qubit::A).expect("2x2 operand");
        let lower_b = on_qubit(&lower, Qubit::B).expect("2x2 operand");
        let z_a = on_qubit(&z, Qubit::A).expect("2x2 operand");
        let z_b = on_qubit(&z, Qubit::B).expect("2x2 operand");
        let mut swap = ComplexMatrix::zeros(4);
        for (from, to) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            swap.set(to, from, num_traits::One::one());
        }
        Self {
            lower_a,
            lower_b,
            z_a,
            z_b,
            collective: lower_a + lower_b,
            z_a_lower_b: z_a * lower_b,
            lower_a_z_b: lower_a * z_b,
            swap,
        }
    }

    /// H = (omega_A sigma_z^A + omega_B sigma_z^B) / 2
    pub fn hamiltonian(&self, system: &SystemParams) -> ComplexMatrix<T> {
        (self.z_a.scale_re(T::lit(system.omega_a)) + self.z_b.scale_re(T::lit(system.omega_b)))
            .scale_re(T::lit(0.5))
    }

    /// sigma_+^A sigma_-^A + sigma_+^B sigma_-^B
    pub fn excitation_number(&self) -> ComplexMatrix<T> {
        self.lower_a.adjoint() * self.lower_a + self.lower_b.adjoint() * self.lower_b
    }
}

impl<T: Real> Default for TwoQubitOps<T> {
    fn default() -> Self {
        Self::new()
    }
}
