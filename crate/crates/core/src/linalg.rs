//! Dense complex operators of dimension 2 and 4.
//!
//! Two-qubit operators use the fixed basis |00>, |01>, |10>, |11> with qubit A
//! as the left tensor factor. Every routine here is allocation-free: matrices
//! are small `Copy` values backed by a 16-slot array.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Real, C};

/// Which qubit of the pair an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Qubit {
    A,
    B,
}

/// Square complex matrix of dimension 2 or 4, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct ComplexMatrix<T: Real> {
    dim: usize,
    data: [C<T>; 16],
}

impl<T: Real> fmt::Debug for ComplexMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self.get(r, c);
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 4 {
        Ok(())
    } else {
        Err(Error::Contract(format!("matrix dimension must be 2 or 4, got {dim}")))
    }
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 4, "matrix dimension must be 2 or 4, got {dim}");
        Self { dim, data: [C::zero(); 16] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, C::one());
        }
        m
    }

    /// Builds a matrix from `dim * dim` row-major entries.
    pub fn from_row_major(dim: usize, entries: &[C<T>]) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::Contract(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let mut m = Self::zeros(dim);
        m.data[..dim * dim].copy_from_slice(entries);
        Ok(m)
    }

    pub fn from_real_diagonal(diag: &[T]) -> Result<Self> {
        check_dim(diag.len())?;
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, Complex::new(d, T::zero()));
        }
        Ok(m)
    }

    /// |v><v| for a (not necessarily normalized) vector of length 2 or 4.
    pub fn outer(v: &[C<T>]) -> Result<Self> {
        Self::outer2(v, v)
    }

    /// |u><v|.
    pub fn outer2(u: &[C<T>], v: &[C<T>]) -> Result<Self> {
        check_dim(u.len())?;
        if u.len() != v.len() {
            return Err(Error::Contract("outer product of vectors with different lengths".into()));
        }
        let dim = u.len();
        let mut m = Self::zeros(dim);
        for r in 0..dim {
            for c in 0..dim {
                m.set(r, c, u[r] * v[c].conj());
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C<T> {
        debug_assert!(r < self.dim && c < self.dim);
        self.data[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C<T>) {
        debug_assert!(r < self.dim && c < self.dim);
        self.data[r * self.dim + c] = v;
    }

    /// Row-major view of the active entries.
    pub fn entries(&self) -> &[C<T>] {
        &self.data[..self.dim * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                m.set(c, r, self.get(r, c).conj());
            }
        }
        m
    }

    pub fn trace(&self) -> C<T> {
        (0..self.dim).map(|i| self.get(i, i)).fold(C::zero(), |a, b| a + b)
    }

    pub fn scale(&self, k: C<T>) -> Self {
        let mut m = *self;
        m.data[..self.dim * self.dim].iter_mut().for_each(|z| *z = *z * k);
        m
    }

    pub fn scale_re(&self, k: T) -> Self {
        self.scale(Complex::new(k, T::zero()))
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> T {
        self.entries().iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// max |M - M^dagger| entry-wise.
    pub fn hermiticity_defect(&self) -> T {
        (*self - self.adjoint()).max_abs()
    }

    pub fn frobenius_norm(&self) -> T {
        self.entries().iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.dim, "vector length does not match matrix dimension");
        (0..self.dim)
            .map(|r| (0..self.dim).fold(C::zero(), |acc, c| acc + self.get(r, c) * v[c]))
            .collect()
    }

    /// <u| M |v>.
    pub fn sandwich(&self, u: &[C<T>], v: &[C<T>]) -> C<T> {
        let mv = self.apply(v);
        u.iter().zip(&mv).fold(C::zero(), |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermiticity_defect() <= tol
    }
}

impl<T: Real> Add for ComplexMatrix<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix addition");
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a = *a + *b;
        }
        self
    }
}

impl<T: Real> AddAssign for ComplexMatrix<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> Sub for ComplexMatrix<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix subtraction");
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a = *a - *b;
        }
        self
    }
}

impl<T: Real> Neg for ComplexMatrix<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale_re(-T::one())
    }
}

impl<T: Real> Mul for ComplexMatrix<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix product");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a.is_zero() {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] = out.data[r * n + c] + a * rhs.data[k * n + c];
                }
            }
        }
        out
    }
}

impl<T: Real> Mul<C<T>> for ComplexMatrix<T> {
    type Output = Self;
    fn mul(self, k: C<T>) -> Self {
        self.scale(k)
    }
}

/// Kronecker product of two single-qubit operators.
pub fn tensor_product<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    if a.dim != 2 || b.dim != 2 {
        return Err(Error::Contract(format!(
            "tensor_product expects two 2x2 operators, got {}x{} and {}x{}",
            a.dim, a.dim, b.dim, b.dim
        )));
    }
    let mut m = ComplexMatrix::zeros(4);
    for ar in 0..2 {
        for ac in 0..2 {
            let x = a.get(ar, ac);
            for br in 0..2 {
                for bc in 0..2 {
                    m.set(2 * ar + br, 2 * ac + bc, x * b.get(br, bc));
                }
            }
        }
    }
    Ok(m)
}

/// [A, B] = AB - BA.
pub fn commutator<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    *a * *b - *b * *a
}

/// {A, B} = AB + BA.
pub fn anticommutator<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    *a * *b + *b * *a
}

/// Single-qubit operators.
///
/// |0> is the ground state and |1> the excited state, so sigma_- = |0><1|
/// drains excitation and sigma_z = |1><1| - |0><0|. The set satisfies
/// sigma_+- = (sigma_x +- i sigma_y)/2 and [sigma_+, sigma_-] = sigma_z; it is
/// the textbook representation with the two basis labels exchanged.
pub mod pauli {
    use super::*;
    use crate::scalar::{ci, cr};

    pub fn identity<T: Real>() -> ComplexMatrix<T> {
        ComplexMatrix::identity(2)
    }

    pub fn x<T: Real>() -> ComplexMatrix<T> {
        ComplexMatrix::from_row_major(2, &[C::zero(), C::one(), C::one(), C::zero()]).unwrap()
    }

    pub fn y<T: Real>() -> ComplexMatrix<T> {
        ComplexMatrix::from_row_major(2, &[C::zero(), ci(1.0), ci(-1.0), C::zero()]).unwrap()
    }

    /// |1><1| - |0><0|: the excited state |1> has eigenvalue +1.
    pub fn z<T: Real>() -> ComplexMatrix<T> {
        ComplexMatrix::from_row_major(2, &[cr(-1.0), C::zero(), C::zero(), C::one()]).unwrap()
    }

    /// sigma_+ = (sigma_x + i sigma_y)/2 = |1><0|.
    pub fn raising<T: Real>() -> ComplexMatrix<T> {
        ComplexMatrix::from_row_major(2, &[C::zero(), C::zero(), C::one(), C::zero()]).unwrap()
    }

    /// sigma_- = |0><1|.
    pub fn lowering<T: Real>() -> ComplexMatrix<T> {
        ComplexMatrix::from_row_major(2, &[C::zero(), C::one(), C::zero(), C::zero()]).unwrap()
    }

    /// Pauli operator indexed 0..3 as I, X, Y, Z.
    pub fn indexed<T: Real>(k: usize) -> ComplexMatrix<T> {
        match k {
            0 => identity(),
            1 => x(),
            2 => y(),
            3 => z(),
            _ => panic!("Pauli index {k} out of range 0..4"),
        }
    }
}

/// Lifts a single-qubit operator onto qubit A or B of the pair.
pub fn on_qubit<T: Real>(op: &ComplexMatrix<T>, which: Qubit) -> Result<ComplexMatrix<T>> {
    let id = ComplexMatrix::identity(2);
    match which {
        Qubit::A => tensor_product(op, &id),
        Qubit::B => tensor_product(&id, op),
    }
}

/// Computational basis ket |b_A b_B> of the pair.
pub fn basis_ket<T: Real>(index: usize) -> [C<T>; 4] {
    assert!(index < 4, "basis index {index} out of range");
    let mut v = [C::zero(); 4];
    v[index] = C::one();
    v
}

/// Controls for the cyclic Jacobi eigensolver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiOptions {
    /// Convergence threshold on the off-diagonal Frobenius norm.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        Self { tolerance: 1e-13, max_sweeps: 100 }
    }
}

const EIG_HERMITIAN_TOL: f64 = 1e-10;

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues<T: Real>(m: &ComplexMatrix<T>) -> Result<Vec<T>> {
    hermitian_eigenvalues_with(m, JacobiOptions::default())
}

pub fn hermitian_eigenvalues_with<T: Real>(m: &ComplexMatrix<T>, opts: JacobiOptions) -> Result<Vec<T>> {
    let herm_tol = T::lit(EIG_HERMITIAN_TOL).max(T::epsilon() * T::lit(64.0)) * T::one().max(m.max_abs());
    let defect = m.hermiticity_defect();
    if !(defect <= herm_tol) {
        return Err(Error::Contract(format!(
            "hermitian_eigenvalues needs a Hermitian matrix (defect {:e})",
            defect.to_f64_lossy()
        )));
    }
    let n = m.dim();
    // symmetrize so the rotations act on an exactly Hermitian matrix
    let mut a = (*m + m.adjoint()).scale_re(T::lit(0.5));
    let scale = T::one().max(a.frobenius_norm());
    let tol = T::lit(opts.tolerance).max(T::epsilon() * T::lit(16.0)) * scale;

    let off_norm = |a: &ComplexMatrix<T>| -> T {
        let mut s = T::zero();
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    s = s + a.get(p, q).norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == opts.max_sweeps {
            return Err(Error::Numerical(format!(
                "Jacobi eigensolver did not converge after {} sweeps (off-diagonal norm {:e})",
                opts.max_sweeps,
                off_norm(&a).to_f64_lossy()
            )));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                jacobi_rotate(&mut a, p, q);
            }
        }
        sweeps += 1;
        converged = off_norm(&a) <= tol;
    }

    let mut eig: Vec<T> = (0..n).map(|i| a.get(i, i).re).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(eig)
}

/// Zeroes entry (p, q) with a unitary similarity J^dagger A J.
fn jacobi_rotate<T: Real>(a: &mut ComplexMatrix<T>, p: usize, q: usize) {
    let apq = a.get(p, q);
    let mag = apq.norm();
    if mag == T::zero() {
        return;
    }
    let n = a.dim();
    let phase = apq / mag; // e^{i phi}
    let app = a.get(p, p).re;
    let aqq = a.get(q, q).re;
    let theta = (aqq - app) / (T::lit(2.0) * mag);
    let t = if theta >= T::zero() {
        T::one() / (theta + (theta * theta + T::one()).sqrt())
    } else {
        -T::one() / (-theta + (theta * theta + T::one()).sqrt())
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    let cc = Complex::new(c, T::zero());
    let sc = Complex::new(s, T::zero());
    let phase_conj = phase.conj();

    // A <- A J
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, cc * akp - sc * phase_conj * akq);
        a.set(k, q, sc * akp + cc * phase_conj * akq);
    }
    // A <- J^dagger A
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, cc * apk - sc * phase * aqk);
        a.set(q, k, sc * apk + cc * phase * aqk);
    }
    a.set(p, q, C::zero());
    a.set(q, p, C::zero());
    let dp = a.get(p, p).re;
    let dq = a.get(q, q).re;
    a.set(p, p, Complex::new(dp, T::zero()));
    a.set(q, q, Complex::new(dq, T::zero()));
}

/// Tolerances applied when a [`DensityMatrix`] is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hygiene {
    pub hermiticity: f64,
    pub trace: f64,
    pub positivity: f64,
}

impl Hygiene {
    /// Bounds for states prepared directly (initial states, test fixtures).
    pub const CONSTRUCTION: Hygiene = Hygiene { hermiticity: 1e-12, trace: 1e-8, positivity: 1e-6 };
    /// Looser bounds for states produced by time integration.
    pub const PROPAGATED: Hygiene = Hygiene { hermiticity: 1e-8, trace: 1e-6, positivity: 1e-5 };
}

/// Validated two-qubit density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix<T: Real> {
    matrix: ComplexMatrix<T>,
    eigenvalues: [T; 4],
    trace_tolerance: T,
    positivity_tolerance: T,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(matrix: ComplexMatrix<T>) -> Result<Self> {
        Self::with_hygiene(matrix, Hygiene::CONSTRUCTION)
    }

    /// Accepts integrator output within the propagated-state bounds.
    pub fn propagated(matrix: ComplexMatrix<T>) -> Result<Self> {
        Self::with_hygiene(matrix, Hygiene::PROPAGATED)
    }

    pub fn with_hygiene(matrix: ComplexMatrix<T>, hygiene: Hygiene) -> Result<Self> {
        if matrix.dim() != 4 {
            return Err(Error::Contract(format!("density matrix must be 4x4, got {0}x{0}", matrix.dim())));
        }
        let herm_tol = T::lit(hygiene.hermiticity).max(T::epsilon() * T::lit(64.0));
        let defect = matrix.hermiticity_defect();
        if !(defect <= herm_tol) {
            return Err(Error::Contract(format!(
                "density matrix not Hermitian (defect {:e})",
                defect.to_f64_lossy()
            )));
        }
        let trace_tolerance = T::lit(hygiene.trace).max(T::epsilon() * T::lit(64.0));
        let tr = matrix.trace().re;
        if !((tr - T::one()).abs() <= trace_tolerance) {
            return Err(Error::Contract(format!("density matrix trace {} differs from 1", tr)));
        }
        let positivity_tolerance = T::lit(hygiene.positivity);
        let ev = hermitian_eigenvalues(&matrix)?;
        if ev[0] < -positivity_tolerance {
            return Err(Error::Positivity {
                eigenvalue: ev[0].to_f64_lossy(),
                tolerance: positivity_tolerance.to_f64_lossy(),
            });
        }
        Ok(Self {
            matrix,
            eigenvalues: [ev[0], ev[1], ev[2], ev[3]],
            trace_tolerance,
            positivity_tolerance,
        })
    }

    /// Pure state from a (normalizable) ket.
    pub fn from_ket(ket: &[C<T>; 4]) -> Result<Self> {
        let norm = ket.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(Error::Contract("zero ket".into()));
        }
        let v: Vec<C<T>> = ket.iter().map(|z| *z / norm).collect();
        Self::new(ComplexMatrix::outer(&v)?)
    }

    pub fn maximally_mixed() -> Self {
        Self::new(ComplexMatrix::identity(4).scale_re(T::lit(0.25))).expect("I/4 is a state")
    }

    #[inline]
    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    /// Ascending spectrum computed at construction.
    pub fn eigenvalues(&self) -> &[T; 4] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn trace_tolerance(&self) -> T {
        self.trace_tolerance
    }

    pub fn positivity_tolerance(&self) -> T {
        self.positivity_tolerance
    }

    pub fn population(&self, basis_index: usize) -> T {
        self.matrix.get(basis_index, basis_index).re
    }
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy<T: Real>(rho: &DensityMatrix<T>) -> Result<T> {
    spectrum_entropy(rho.eigenvalues(), rho.positivity_tolerance())
}

/// -sum l log2 l over a spectrum, with 0 log 0 = 0 and clamping inside `tol`.
pub(crate) fn spectrum_entropy<T: Real>(eigenvalues: &[T], tol: T) -> Result<T> {
    let mut s = T::zero();
    for &l in eigenvalues {
        if l < -tol {
            return Err(Error::Positivity { eigenvalue: l.to_f64_lossy(), tolerance: tol.to_f64_lossy() });
        }
        let l = l.max(T::zero()).min(T::one());
        if l > T::zero() {
            s = s - l * l.log2();
        }
    }
    Ok(s)
}

/// Reduced state of one qubit.
pub fn partial_trace<T: Real>(rho: &DensityMatrix<T>, keep: Qubit) -> ComplexMatrix<T> {
    let m = rho.matrix();
    let mut out = ComplexMatrix::zeros(2);
    for r in 0..2 {
        for c in 0..2 {
            let mut acc = C::zero();
            for k in 0..2 {
                acc = acc
                    + match keep {
                        Qubit::A => m.get(2 * r + k, 2 * c + k),
                        Qubit::B => m.get(2 * k + r, 2 * k + c),
                    };
            }
            out.set(r, c, acc);
        }
    }
    out
}

/// Trace distance 1/2 ||A - B||_1 between two Hermitian operators.
pub fn trace_distance<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<T> {
    let ev = hermitian_eigenvalues(&(*a - *b))?;
    Ok(ev.iter().map(|l| l.abs()).sum::<T>() * T::lit(0.5))
}
