//! O-operator coefficients on growing triangular time grids.
//!
//! The zeroth-order operator is
//! `O0(t,s) = f1 sigma_-^A + f2 sigma_-^B + f3 sigma_z^A sigma_-^B + f4 sigma_-^A sigma_z^B`
//! and the first-order part is `f5(t,s,s1) 2 sigma_-^A sigma_-^B`. The
//! coefficients obey a nonlinear Volterra-type system in `t`: every right-hand
//! side depends on the kernel-weighted integrals `Fj(t) = int_0^t G(t-s) fj(t,s) ds`.
//!
//! Integration advances all `s` (and `s1`) slices jointly with classical RK4.
//! At a stage time `tau` inside `[t_i, t_{i+1}]` the integrals are the
//! composite trapezoid over the stored nodes `s_0..s_i` plus one trapezoid
//! panel over `[t_i, tau]` closed by the boundary value on the diagonal
//! `s = tau`. At node times this is exactly the composite trapezoid rule.
//! New diagonal nodes are assigned, never integrated.
//!
//! Storage: `f1..f4` and `F1..F4` for every node, `F5` on `(t_i, s1_k)`, and
//! the last three `f5` time slices (the full `f5` history is `O(N^3)`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::noise::{CorrelationKernel, NoiseConfig, Scenario};
use crate::scalar::{Real, C};
use crate::system::{SystemParams, TwoQubitOps};

/// Magnitude at which a coefficient is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

const DUMP_MAGIC: &[u8; 4] = b"QSDF";
const DUMP_VERSION: u32 = 1;

/// Uniform time grid shared by the coefficient solver and the propagator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub t_max: f64,
    /// Coarsening factor of the `s1` axis of `f5`.
    pub s1_stride: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dt: 0.01, t_max: 10.0, s1_stride: 1 }
    }
}

impl GridSpec {
    pub fn new(dt: f64, t_max: f64, s1_stride: usize) -> Result<Self> {
        let g = Self { dt, t_max, s1_stride };
        g.steps()?;
        Ok(g)
    }

    /// Number of steps `N` with `N * dt = t_max`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Parameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::Parameter(format!("t_max must be > 0, got {}", self.t_max)));
        }
        if self.s1_stride == 0 {
            return Err(Error::Parameter("s1_stride must be >= 1".into()));
        }
        let n = (self.t_max / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_max).abs() > 1e-9 * self.t_max.max(1.0) {
            return Err(Error::Parameter(format!(
                "t_max = {} is not an integer multiple of dt = {}",
                self.t_max, self.dt
            )));
        }
        Ok(n as usize)
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        Ok((0..=self.steps()?).map(|i| self.time(i)).collect())
    }

    /// Grid with half the step (and the same stride in time units).
    pub fn refined(&self) -> Self {
        Self { dt: self.dt / 2.0, t_max: self.t_max, s1_stride: self.s1_stride * 2 }
    }
}

/// One stored `f5` time slice: values `f5(t_i, s_j, s1_k)` for `j <= i` and the
/// stored `s1` columns, column-major.
#[derive(Debug, Clone)]
pub struct F5Slice<T: Real> {
    pub t_index: usize,
    pub columns: usize,
    values: Vec<C<T>>,
}

impl<T: Real> F5Slice<T> {
    /// `f5(t_i, s_j, s1 = stored column k)`.
    pub fn get(&self, j: usize, k: usize) -> C<T> {
        assert!(j <= self.t_index && k < self.columns, "f5 slice index out of range");
        self.values[k * (self.t_index + 1) + j]
    }
}

/// Discretized O-operator coefficients and their kernel integrals.
#[derive(Debug, Clone)]
pub struct CoefficientField<T: Real> {
    grid: GridSpec,
    steps: usize,
    kernel: CorrelationKernel,
    system: SystemParams,
    f: [Vec<C<T>>; 4],
    integrated: [Vec<C<T>>; 4],
    f5_integrated: Vec<C<T>>,
    f5_offsets: Vec<usize>,
    f5_recent: Vec<F5Slice<T>>,
}

#[inline]
fn tri(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

#[inline]
fn stored_columns(level: usize, stride: usize) -> usize {
    level / stride + 1
}

impl<T: Real> CoefficientField<T> {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn kernel(&self) -> &CorrelationKernel {
        &self.kernel
    }

    pub fn system(&self) -> &SystemParams {
        &self.system
    }

    /// `f_c(t_i, s_j)` for component `c` in 1..=4.
    pub fn f(&self, component: usize, i: usize, j: usize) -> C<T> {
        assert!((1..=4).contains(&component), "component {component} not in 1..=4");
        assert!(j <= i && i <= self.steps, "node ({i}, {j}) outside the grid");
        self.f[component - 1][tri(i, j)]
    }

    /// `F_c(t_i)` for component `c` in 1..=4.
    pub fn integrated(&self, component: usize, i: usize) -> C<T> {
        assert!((1..=4).contains(&component), "component {component} not in 1..=4");
        self.integrated[component - 1][i]
    }

    /// The whole `F_c` series.
    pub fn integrated_series(&self, component: usize) -> &[C<T>] {
        assert!((1..=4).contains(&component), "component {component} not in 1..=4");
        &self.integrated[component - 1]
    }

    /// `F5(t_i, s1 = t_m)` for `m <= i`, interpolating between stored columns.
    pub fn f5_integrated(&self, i: usize, m: usize) -> C<T> {
        assert!(m <= i && i <= self.steps, "F5 index ({i}, {m}) outside the grid");
        let stride = self.grid.s1_stride;
        let row = &self.f5_integrated[self.f5_offsets[i]..self.f5_offsets[i + 1]];
        let diagonal = self.f5_diagonal(i);
        interpolate_columns(row, stride, m, T::lit(m as f64), T::lit(i as f64), diagonal)
    }

    /// Stored-column values of `F5(t_i, .)`.
    pub fn f5_integrated_columns(&self, i: usize) -> &[C<T>] {
        &self.f5_integrated[self.f5_offsets[i]..self.f5_offsets[i + 1]]
    }

    /// `F5(t, s1 = t) = -i (F3 + F4)(t)`, implied by the `s1 = t` boundary data.
    fn f5_diagonal(&self, i: usize) -> C<T> {
        -C::<T>::i() * (self.integrated[2][i] + self.integrated[3][i])
    }

    /// Last (up to three) `f5` time slices, oldest first.
    pub fn f5_recent(&self) -> &[F5Slice<T>] {
        &self.f5_recent
    }

    /// `[F1, F2, F3, F4]` at a node.
    pub fn integrated_at(&self, i: usize) -> [C<T>; 4] {
        [self.integrated[0][i], self.integrated[1][i], self.integrated[2][i], self.integrated[3][i]]
    }

    /// `[F1..F4]` at an arbitrary time, linear between nodes.
    pub fn integrated_at_time(&self, t: T) -> [C<T>; 4] {
        let dt = T::lit(self.grid.dt);
        let x = (t / dt).max(T::zero());
        let lo = x.floor().to_usize().unwrap_or(0).min(self.steps);
        if lo == self.steps {
            return self.integrated_at(lo);
        }
        let w = x - T::lit(lo as f64);
        let a = self.integrated_at(lo);
        let b = self.integrated_at(lo + 1);
        [0, 1, 2, 3].map(|c| a[c] + (b[c] - a[c]) * w)
    }

    /// Ō0 at an arbitrary time with linearly interpolated coefficients.
    pub fn obar_at_time(&self, t: T, ops: &TwoQubitOps<T>) -> ComplexMatrix<T> {
        obar_from_coefficients(&self.integrated_at_time(t), ops)
    }
}

fn obar_from_coefficients<T: Real>(big_f: &[C<T>; 4], ops: &TwoQubitOps<T>) -> ComplexMatrix<T> {
    ops.lower_a.scale(big_f[0])
        + ops.lower_b.scale(big_f[1])
        + ops.z_a_lower_b.scale(big_f[2])
        + ops.lower_a_z_b.scale(big_f[3])
}

/// `Ō0(t_i) = F1 sigma_-^A + F2 sigma_-^B + F3 sigma_z^A sigma_-^B + F4 sigma_-^A sigma_z^B`.
pub fn obar_operator<T: Real>(field: &CoefficientField<T>, t_index: usize) -> Result<ComplexMatrix<T>> {
    if t_index > field.steps {
        return Err(Error::Contract(format!(
            "time index {t_index} outside grid of {} steps",
            field.steps
        )));
    }
    Ok(obar_from_coefficients(&field.integrated_at(t_index), &TwoQubitOps::new()))
}

/// Linear interpolation of `F5(tau, s1 = position m)` from the stored columns,
/// closing the last interval with the diagonal value at `s1 = tau`.
/// Positions are in units of `dt`.
#[inline]
fn interpolate_columns<T: Real>(columns: &[C<T>], stride: usize, m: usize, pos: T, tau: T, diagonal: C<T>) -> C<T> {
    let k_lo = m / stride;
    let m_lo = k_lo * stride;
    if m == m_lo {
        return columns[k_lo];
    }
    let lo = columns[k_lo];
    let (hi, span) = if k_lo + 1 < columns.len() {
        (columns[k_lo + 1], T::lit(stride as f64))
    } else {
        (diagonal, tau - T::lit(m_lo as f64))
    };
    let w = (pos - T::lit(m_lo as f64)) / span;
    lo + (hi - lo) * w
}

/// RK4 stage position inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Start,
    Half,
    End,
}

impl Stage {
    fn fraction(self) -> f64 {
        match self {
            Stage::Start => 0.0,
            Stage::Half => 0.5,
            Stage::End => 1.0,
        }
    }
}

/// Kernel samples at the lags the quadrature needs.
struct LagTables<T> {
    /// G(n dt)
    node: Vec<T>,
    /// G((n + 1/2) dt)
    half: Vec<T>,
    dt: T,
}

impl<T: Real> LagTables<T> {
    fn new(kernel: &CorrelationKernel, dt: f64, steps: usize) -> Self {
        let node = (0..=steps + 1).map(|n| kernel.eval(T::lit(n as f64 * dt))).collect();
        let half = (0..=steps + 1).map(|n| kernel.eval(T::lit((n as f64 + 0.5) * dt))).collect();
        Self { node, half, dt: T::lit(dt) }
    }

    /// `int_0^tau G(tau - s) g(s) ds` with `tau = t_level + stage * dt`,
    /// given `g` on nodes `0..=level` and the diagonal value `g(tau)`.
    #[inline]
    fn integrate(&self, values: &[C<T>], level: usize, stage: Stage, diagonal: C<T>) -> C<T> {
        let (table, offset) = match stage {
            Stage::Start => (&self.node, 0),
            Stage::Half => (&self.half, 0),
            Stage::End => (&self.node, 1),
        };
        let mut acc = C::zero();
        if level > 0 {
            let half_dt = self.dt * T::lit(0.5);
            acc = values[0] * (table[offset + level] * half_dt) + values[level] * (table[offset] * half_dt);
            let mut interior = C::zero();
            for (l, v) in values.iter().enumerate().take(level).skip(1) {
                interior = interior + *v * table[offset + level - l];
            }
            acc = acc + interior * self.dt;
        }
        if stage != Stage::Start {
            let h = self.dt * T::lit(stage.fraction());
            acc = acc + (values[level] * table[offset] + diagonal * self.node[0]) * (h * T::lit(0.5));
        }
        acc
    }
}

/// Dense working state of one time level.
#[derive(Clone)]
struct State<T> {
    /// f1..f4, indexed by s node
    f: [Vec<C<T>>; 4],
    /// f5, column-major with a fixed row capacity
    f5: Vec<C<T>>,
}

impl<T: Real> State<T> {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            f: std::array::from_fn(|_| vec![C::zero(); rows]),
            f5: vec![C::zero(); rows * cols],
        }
    }
}

/// Time-only quantities of one right-hand-side evaluation.
struct StageIntegrals<T> {
    big_f: [C<T>; 4],
    f5_columns: Vec<C<T>>,
}

struct Solver<'a, T: Real> {
    lags: LagTables<T>,
    system: &'a SystemParams,
    stride: usize,
    rows: usize,
    parallel_threshold: usize,
}

impl<'a, T: Real> Solver<'a, T> {
    fn integrals(&self, y: &State<T>, level: usize, stage: Stage) -> StageIntegrals<T> {
        let n = level + 1;
        let boundary = [C::<T>::new(T::one(), T::zero()), C::new(T::one(), T::zero()), C::zero(), C::zero()];
        let big_f = std::array::from_fn(|c| self.lags.integrate(&y.f[c][..n], level, stage, boundary[c]));
        let cols = stored_columns(level, self.stride);
        let rows = self.rows;
        let integrate_col = |col: &[C<T>]| self.lags.integrate(&col[..n], level, stage, C::zero());
        let f5_columns = if cols * n >= self.parallel_threshold {
            y.f5[..cols * rows].par_chunks(rows).map(integrate_col).collect()
        } else {
            y.f5[..cols * rows].chunks(rows).map(integrate_col).collect()
        };
        StageIntegrals { big_f, f5_columns }
    }

    /// Writes d/dt of the active region into `out`; returns the integrals used.
    fn rhs(&self, y: &State<T>, level: usize, stage: Stage, out: &mut State<T>) -> StageIntegrals<T> {
        let ints = self.integrals(y, level, stage);
        let [f1i, f2i, f3i, f4i] = ints.big_f;
        let i = C::<T>::i();
        let wa = i * T::lit(self.system.omega_a);
        let wb = i * T::lit(self.system.omega_b);
        let n = level + 1;
        let tau = T::lit(level as f64 + stage.fraction());
        let diagonal = -i * (f3i + f4i);

        let pa = wa + f1i + f3i;
        let pb = wb + f2i + f4i;
        for j in 0..n {
            let (a1, a2, a3, a4) = (y.f[0][j], y.f[1][j], y.f[2][j], y.f[3][j]);
            let f5s = interpolate_columns(&ints.f5_columns, self.stride, j, T::lit(j as f64), tau, diagonal);
            let src = i * f5s;
            out.f[0][j] = pa * a1 + (f4i - f1i) * a3 + (f3i + f4i) * a4 - src;
            out.f[1][j] = pb * a2 + (f4i + f3i) * a3 + (f3i - f2i) * a4 - src;
            out.f[2][j] = pb * a3 + (f3i + f4i) * a2 + (f3i - f2i) * a1 - src;
            out.f[3][j] = pa * a4 + (f3i + f4i) * a1 + (f4i - f1i) * a2 - src;
        }

        // d/dt f5 = (2i wA + 2i wB + F1 + F2 + F3 + F4) f5 + F5(t, s1) (f1 + f2 - f3 - f4)
        let p5 = (wa + wb) * T::lit(2.0) + f1i + f2i + f3i + f4i;
        let source: Vec<C<T>> = (0..n).map(|j| y.f[0][j] + y.f[1][j] - y.f[2][j] - y.f[3][j]).collect();
        let cols = ints.f5_columns.len();
        let rows = self.rows;
        let update = |(k, (dst, src)): (usize, (&mut [C<T>], &[C<T>]))| {
            let big = ints.f5_columns[k];
            for j in 0..n {
                dst[j] = p5 * src[j] + big * source[j];
            }
        };
        let out_cols = &mut out.f5[..cols * rows];
        let in_cols = &y.f5[..cols * rows];
        if cols * n >= self.parallel_threshold {
            out_cols.par_chunks_mut(rows).zip(in_cols.par_chunks(rows)).enumerate().for_each(update);
        } else {
            out_cols.chunks_mut(rows).zip(in_cols.chunks(rows)).enumerate().for_each(update);
        }
        ints
    }
}

/// `dst = base + h * k` over the active region.
fn axpy<T: Real>(dst: &mut State<T>, base: &State<T>, h: T, k: &State<T>, n: usize, cols: usize, rows: usize) {
    for c in 0..4 {
        for j in 0..n {
            dst.f[c][j] = base.f[c][j] + k.f[c][j] * h;
        }
    }
    for col in 0..cols {
        let r = col * rows;
        for j in 0..n {
            dst.f5[r + j] = base.f5[r + j] + k.f5[r + j] * h;
        }
    }
}

/// `acc += w * k` over the active region.
fn accumulate<T: Real>(acc: &mut State<T>, w: T, k: &State<T>, n: usize, cols: usize, rows: usize) {
    for c in 0..4 {
        for j in 0..n {
            acc.f[c][j] = acc.f[c][j] + k.f[c][j] * w;
        }
    }
    for col in 0..cols {
        let r = col * rows;
        for j in 0..n {
            acc.f5[r + j] = acc.f5[r + j] + k.f5[r + j] * w;
        }
    }
}

/// Integrates the coefficient system for the relaxation kernel of `noise`.
pub fn evolve_coefficients<T: Real>(
    noise: &NoiseConfig,
    system: &SystemParams,
    grid: &GridSpec,
) -> Result<CoefficientField<T>> {
    if noise.scenario == Scenario::D {
        return Err(Error::Contract("coefficient evolution needs scenario R or C".into()));
    }
    let kernel = CorrelationKernel::relaxation_kernel(noise)?;
    evolve_with_kernel(kernel, system, grid)
}

/// Integrates the coefficient system for an explicit kernel.
pub fn evolve_with_kernel<T: Real>(
    kernel: CorrelationKernel,
    system: &SystemParams,
    grid: &GridSpec,
) -> Result<CoefficientField<T>> {
    system.validate()?;
    let steps = grid.steps()?;
    let stride = grid.s1_stride;
    let rows = steps + 1;
    let max_cols = stored_columns(steps, stride);
    let solver = Solver {
        lags: LagTables::new(&kernel, grid.dt, steps),
        system,
        stride,
        rows,
        parallel_threshold: 1 << 14,
    };
    let dt = T::lit(grid.dt);

    let mut y = State::<T>::zeros(rows, max_cols);
    y.f[0][0] = C::new(T::one(), T::zero());
    y.f[1][0] = C::new(T::one(), T::zero());
    let mut tmp = State::zeros(rows, max_cols);
    let mut k = State::zeros(rows, max_cols);
    let mut acc = State::zeros(rows, max_cols);

    let total_nodes = rows * (rows + 1) / 2;
    let mut field = CoefficientField {
        grid: *grid,
        steps,
        kernel,
        system: *system,
        f: std::array::from_fn(|_| Vec::with_capacity(total_nodes)),
        integrated: std::array::from_fn(|_| Vec::with_capacity(rows)),
        f5_integrated: Vec::new(),
        f5_offsets: vec![0],
        f5_recent: Vec::with_capacity(3),
    };
    record_level(&mut field, &solver, &y, 0);

    let half = dt * T::lit(0.5);
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    for level in 0..steps {
        let n = level + 1;
        let cols = stored_columns(level, stride);

        solver.rhs(&y, level, Stage::Start, &mut k);
        zero_active(&mut acc, n, cols, rows);
        accumulate(&mut acc, T::one(), &k, n, cols, rows);
        axpy(&mut tmp, &y, half, &k, n, cols, rows);

        solver.rhs(&tmp, level, Stage::Half, &mut k);
        accumulate(&mut acc, two, &k, n, cols, rows);
        axpy(&mut tmp, &y, half, &k, n, cols, rows);

        solver.rhs(&tmp, level, Stage::Half, &mut k);
        accumulate(&mut acc, two, &k, n, cols, rows);
        axpy(&mut tmp, &y, dt, &k, n, cols, rows);

        solver.rhs(&tmp, level, Stage::End, &mut k);
        accumulate(&mut acc, T::one(), &k, n, cols, rows);
        accumulate(&mut y, sixth, &acc, n, cols, rows);

        let new_level = level + 1;
        check_divergence(&y, grid, new_level, n, cols, rows, stride)?;

        // boundary data on the new diagonal s = t_{new}
        y.f[0][new_level] = C::new(T::one(), T::zero());
        y.f[1][new_level] = C::new(T::one(), T::zero());
        y.f[2][new_level] = C::zero();
        y.f[3][new_level] = C::zero();
        for col in 0..cols {
            y.f5[col * rows + new_level] = C::zero();
        }
        // new s1 = t_{new} column
        if new_level % stride == 0 {
            let col = new_level / stride;
            for j in 0..=new_level {
                y.f5[col * rows + j] = -C::<T>::i() * (y.f[2][j] + y.f[3][j]);
            }
        }
        record_level(&mut field, &solver, &y, new_level);
    }
    Ok(field)
}

fn zero_active<T: Real>(s: &mut State<T>, n: usize, cols: usize, rows: usize) {
    for c in 0..4 {
        s.f[c][..n].iter_mut().for_each(|z| *z = C::zero());
    }
    for col in 0..cols {
        s.f5[col * rows..col * rows + n].iter_mut().for_each(|z| *z = C::zero());
    }
}

fn check_divergence<T: Real>(
    y: &State<T>,
    grid: &GridSpec,
    level: usize,
    n: usize,
    cols: usize,
    rows: usize,
    stride: usize,
) -> Result<()> {
    let limit = T::lit(DIVERGENCE_LIMIT);
    let t = grid.time(level);
    for c in 0..4 {
        for j in 0..n {
            let mag = y.f[c][j].norm();
            if !mag.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite f{} at t = {t}, s = {}",
                    c + 1,
                    grid.time(j)
                )));
            }
            if mag > limit {
                return Err(Error::Divergence {
                    component: c + 1,
                    magnitude: mag.to_f64_lossy(),
                    t,
                    s: grid.time(j),
                    s1: None,
                });
            }
        }
    }
    for col in 0..cols {
        for j in 0..n {
            let mag = y.f5[col * rows + j].norm();
            let s1 = grid.time(col * stride);
            if !mag.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite f5 at t = {t}, s = {}, s1 = {s1}",
                    grid.time(j)
                )));
            }
            if mag > limit {
                return Err(Error::Divergence {
                    component: 5,
                    magnitude: mag.to_f64_lossy(),
                    t,
                    s: grid.time(j),
                    s1: Some(s1),
                });
            }
        }
    }
    Ok(())
}

fn record_level<T: Real>(field: &mut CoefficientField<T>, solver: &Solver<'_, T>, y: &State<T>, level: usize) {
    let n = level + 1;
    for c in 0..4 {
        field.f[c].extend_from_slice(&y.f[c][..n]);
    }
    let ints = solver.integrals(y, level, Stage::Start);
    for c in 0..4 {
        field.integrated[c].push(ints.big_f[c]);
    }
    field.f5_integrated.extend_from_slice(&ints.f5_columns);
    field.f5_offsets.push(field.f5_integrated.len());

    let cols = ints.f5_columns.len();
    let rows = solver.rows;
    let mut values = Vec::with_capacity(cols * n);
    for col in 0..cols {
        values.extend_from_slice(&y.f5[col * rows..col * rows + n]);
    }
    if field.f5_recent.len() == 3 {
        field.f5_recent.remove(0);
    }
    field.f5_recent.push(F5Slice { t_index: level, columns: cols, values });
}

/// Right-hand sides of the f1..f4 equations at one node.
fn f_rhs<T: Real>(system: &SystemParams, big_f: &[C<T>; 4], f: [C<T>; 4], f5s: C<T>) -> [C<T>; 4] {
    let i = C::<T>::i();
    let [f1i, f2i, f3i, f4i] = *big_f;
    let pa = i * T::lit(system.omega_a) + f1i + f3i;
    let pb = i * T::lit(system.omega_b) + f2i + f4i;
    let [a1, a2, a3, a4] = f;
    let src = i * f5s;
    [
        pa * a1 + (f4i - f1i) * a3 + (f3i + f4i) * a4 - src,
        pb * a2 + (f4i + f3i) * a3 + (f3i - f2i) * a4 - src,
        pb * a3 + (f3i + f4i) * a2 + (f3i - f2i) * a1 - src,
        pa * a4 + (f3i + f4i) * a1 + (f4i - f1i) * a2 - src,
    ]
}

/// Largest centered-difference residual of the coefficient equations over
/// interior nodes.
///
/// The kernel integrals are rebuilt from the stored `f` values with the kernel
/// of `noise`, so the check is independent of the integrator's bookkeeping.
/// The `f5` equation is checked on the last interior time level (the only one
/// with stored neighbours).
pub fn coefficient_residual<T: Real>(
    field: &CoefficientField<T>,
    noise: &NoiseConfig,
    system: &SystemParams,
) -> Result<T> {
    Ok(residual_breakdown(field, noise, system)?.max())
}

/// Residual split by equation group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualBreakdown<T> {
    pub f1_to_f4: T,
    pub f5: T,
}

impl<T: Real> ResidualBreakdown<T> {
    pub fn max(&self) -> T {
        self.f1_to_f4.max(self.f5)
    }
}

pub fn residual_breakdown<T: Real>(
    field: &CoefficientField<T>,
    noise: &NoiseConfig,
    system: &SystemParams,
) -> Result<ResidualBreakdown<T>> {
    let kernel = CorrelationKernel::relaxation_kernel(noise)?;
    Ok(residual_with_kernel(field, &kernel, system))
}

pub fn residual_with_kernel<T: Real>(
    field: &CoefficientField<T>,
    kernel: &CorrelationKernel,
    system: &SystemParams,
) -> ResidualBreakdown<T> {
    let steps = field.steps;
    let grid = field.grid;
    let dt = T::lit(grid.dt);
    let lags = LagTables::new(kernel, grid.dt, steps);
    let node_values = |c: usize, i: usize| -> Vec<C<T>> { (0..=i).map(|j| field.f(c, i, j)).collect() };
    let big_f_at = |i: usize| -> [C<T>; 4] {
        std::array::from_fn(|c| lags.integrate(&node_values(c + 1, i), i, Stage::Start, C::zero()))
    };

    let inv_2dt = T::one() / (T::lit(2.0) * dt);
    let mut worst = T::zero();
    for i in 1..steps {
        let big_f = big_f_at(i);
        let columns = field.f5_integrated_columns(i);
        let diagonal = -C::<T>::i() * (big_f[2] + big_f[3]);
        for j in 0..i {
            let f = std::array::from_fn(|c| field.f(c + 1, i, j));
            let f5s = interpolate_columns(columns, grid.s1_stride, j, T::lit(j as f64), T::lit(i as f64), diagonal);
            let rhs = f_rhs(system, &big_f, f, f5s);
            for c in 0..4 {
                let lhs = (field.f(c + 1, i + 1, j) - field.f(c + 1, i - 1, j)) * inv_2dt;
                worst = worst.max((lhs - rhs[c]).norm());
            }
        }
    }

    let f1_to_f4 = worst;
    worst = T::zero();
    if let [prev, mid, next] = field.f5_recent.as_slice() {
        let i = mid.t_index;
        let big_f = big_f_at(i);
        let p5 = C::<T>::i() * T::lit(2.0 * (system.omega_a + system.omega_b)) + big_f[0] + big_f[1] + big_f[2] + big_f[3];
        for k in 0..prev.columns {
            let column: Vec<C<T>> = (0..=i).map(|j| mid.get(j, k)).collect();
            let big5 = lags.integrate(&column, i, Stage::Start, C::zero());
            for j in 0..=prev.t_index {
                let source = field.f(1, i, j) + field.f(2, i, j) - field.f(3, i, j) - field.f(4, i, j);
                let rhs = p5 * mid.get(j, k) + big5 * source;
                let lhs = (next.get(j, k) - prev.get(j, k)) * inv_2dt;
                worst = worst.max((lhs - rhs).norm());
            }
        }
    }
    ResidualBreakdown { f1_to_f4, f5: worst }
}

/// Writes the `QSDF` debug dump: magic, version (u32), N (u64), dt (f64),
/// then the F1..F4 series, each as N+1 interleaved (re, im) f64 pairs. All
/// little-endian.
pub fn write_coefficient_dump<T: Real>(field: &CoefficientField<T>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&(field.steps as u64).to_le_bytes())?;
    w.write_all(&field.grid.dt.to_le_bytes())?;
    for series in &field.integrated {
        for z in series {
            w.write_all(&z.re.to_f64_lossy().to_le_bytes())?;
            w.write_all(&z.im.to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Contents of a `QSDF` dump.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDump {
    pub version: u32,
    pub steps: usize,
    pub dt: f64,
    pub series: [Vec<Complex<f64>>; 4],
}

pub fn read_coefficient_dump(path: &Path) -> Result<CoefficientDump> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Io(format!("{} is not a QSDF dump", path.display())));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != DUMP_VERSION {
        return Err(Error::Io(format!("unsupported QSDF version {version}")));
    }
    r.read_exact(&mut b8)?;
    let steps = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let dt = f64::from_le_bytes(b8);
    let mut read_f64 = |r: &mut BufReader<File>| -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let mut series: [Vec<Complex<f64>>; 4] = Default::default();
    for s in series.iter_mut() {
        for _ in 0..=steps {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            s.push(Complex::new(re, im));
        }
    }
    Ok(CoefficientDump { version, steps, dt, series })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::basis_ket;
    use crate::noise::{DephasingTopology, OUParams};

    fn relaxation_only(coupling: f64, inverse_memory: f64) -> NoiseConfig {
        NoiseConfig {
            relaxation: OUParams { coupling, inverse_memory },
            dephasing: OUParams { coupling: 0.0, inverse_memory: 1.0 },
            dephasing_markovian: true,
            scenario: Scenario::R,
            dephasing_topology: DephasingTopology::Independent,
        }
    }

    fn run(noise: &NoiseConfig, dt: f64, t_max: f64, stride: usize) -> CoefficientField<f64> {
        let grid = GridSpec::new(dt, t_max, stride).unwrap();
        evolve_coefficients(noise, &SystemParams::default(), &grid).unwrap()
    }

    #[test]
    fn grid_rejects_incommensurate_and_degenerate() {
        assert!(GridSpec::new(0.03, 1.0, 1).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
        assert!(GridSpec::new(0.01, 1.0, 0).is_err());
        assert_eq!(GridSpec::new(0.01, 10.0, 1).unwrap().steps().unwrap(), 1000);
    }

    #[test]
    fn integrals_vanish_at_start() {
        let field = run(&relaxation_only(1.0, 0.1), 0.01, 0.1, 1);
        for c in 1..=4 {
            assert_eq!(field.integrated(c, 0), C::zero());
        }
        assert_eq!(field.f5_integrated(0, 0), C::zero());
        assert_eq!(obar_operator(&field, 0).unwrap(), ComplexMatrix::zeros(4));
        assert!(obar_operator(&field, 11).is_err());
    }

    #[test]
    fn first_step_integral_matches_leading_order() {
        let dt = 0.01;
        let field = run(&relaxation_only(1.0, 0.1), dt, 0.05, 1);
        let f1 = field.integrated(1, 1);
        let expected = 0.05 * dt;
        assert!((f1.re - expected).abs() <= 0.2 * expected, "F1(dt) = {f1}");
    }

    #[test]
    fn diagonal_nodes_hold_boundary_data_exactly() {
        let noise = NoiseConfig { scenario: Scenario::C, ..NoiseConfig::default() };
        let field = run(&noise, 0.02, 1.0, 1);
        let one = C::new(1.0, 0.0);
        for i in 0..=field.steps() {
            assert_eq!(field.f(1, i, i), one);
            assert_eq!(field.f(2, i, i), one);
            assert_eq!(field.f(3, i, i), C::zero());
            assert_eq!(field.f(4, i, i), C::zero());
        }
        for slice in field.f5_recent() {
            let i = slice.t_index;
            for k in 0..slice.columns {
                assert_eq!(slice.get(i, k), C::zero());
            }
        }
        let last = field.f5_recent().last().unwrap();
        let i = last.t_index;
        for j in 0..=i {
            let expected = -C::<f64>::i() * (field.f(3, i, j) + field.f(4, i, j));
            assert_eq!(last.get(j, last.columns - 1), expected);
        }
    }

    #[test]
    fn exchange_symmetry_for_equal_frequencies() {
        for (noise, stride) in [
            (relaxation_only(1.0, 0.1), 1),
            (NoiseConfig { scenario: Scenario::C, ..NoiseConfig::default() }, 2),
        ] {
            let field = run(&noise, 0.02, 2.0, stride);
            for i in 0..=field.steps() {
                for j in 0..=i {
                    assert!((field.f(1, i, j) - field.f(2, i, j)).norm() <= 1e-10);
                    assert!((field.f(3, i, j) - field.f(4, i, j)).norm() <= 1e-10);
                }
                assert!((field.integrated(1, i) - field.integrated(2, i)).norm() <= 1e-10);
                assert!((field.integrated(3, i) - field.integrated(4, i)).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn zero_coupling_gives_identically_zero_integrals() {
        let field = run(&relaxation_only(0.0, 0.1), 0.02, 1.0, 1);
        for c in 1..=4 {
            assert!(field.integrated_series(c).iter().all(|z| *z == C::zero()));
        }
    }

    #[test]
    fn free_evolution_is_a_pure_phase() {
        let field = run(&relaxation_only(0.0, 0.1), 0.01, 1.0, 1);
        let dt = 0.01;
        for i in 0..=field.steps() {
            for j in 0..=i {
                let exact = C::new(0.0, (i - j) as f64 * dt).exp();
                assert!((field.f(1, i, j) - exact).norm() < 1e-9);
                assert!(field.f(3, i, j).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn composite_without_dephasing_reproduces_relaxation() {
        let r = relaxation_only(1.0, 0.1);
        let c = NoiseConfig { scenario: Scenario::C, ..r };
        let fr = run(&r, 0.02, 2.0, 1);
        let fc = run(&c, 0.02, 2.0, 1);
        for i in 0..=fr.steps() {
            for j in 0..=i {
                for comp in 1..=4 {
                    assert!((fr.f(comp, i, j) - fc.f(comp, i, j)).norm() <= 1e-12);
                }
            }
            for m in 0..=i {
                assert!((fr.f5_integrated(i, m) - fc.f5_integrated(i, m)).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn refinement_order_is_two() {
        let noise = relaxation_only(1.0, 0.1);
        let f = |dt: f64| run(&noise, dt, 2.0, 1).integrated_series(1).last().copied().unwrap();
        let (a, b, c) = (f(0.04), f(0.02), f(0.01));
        let order = ((a - b).norm() / (b - c).norm()).log2();
        assert!((1.7..=2.3).contains(&order), "order {order}");
    }

    #[test]
    fn strided_s1_axis_stays_close() {
        let noise = NoiseConfig { scenario: Scenario::C, ..NoiseConfig::default() };
        let full = run(&noise, 0.02, 2.0, 1);
        let coarse = run(&noise, 0.02, 2.0, 2);
        for i in 0..=full.steps() {
            for c in 1..=4 {
                assert!((full.integrated(c, i) - coarse.integrated(c, i)).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn manufactured_residual_is_centered_difference_truncation() {
        // with G = 0 the only residual is the centered-difference error of
        // exp(i w t): w^3 dt^2 / 6 to leading order
        let noise = relaxation_only(0.0, 0.1);
        let system = SystemParams::default();
        let coarse = run(&noise, 0.01, 1.0, 1);
        let r = coefficient_residual(&coarse, &noise, &system).unwrap();
        let predicted = 1.0 - (0.01f64).sin() / 0.01;
        assert!((r - predicted).abs() <= 1e-3 * predicted, "{r} vs {predicted}");
        let fine = run(&noise, 0.002, 1.0, 1);
        assert!(coefficient_residual(&fine, &noise, &system).unwrap() <= 1e-6);
    }

    #[test]
    fn residual_is_second_order() {
        let noise = relaxation_only(1.0, 0.1);
        let system = SystemParams::default();
        let r1 = residual_breakdown(&run(&noise, 0.02, 2.0, 1), &noise, &system).unwrap();
        let r2 = residual_breakdown(&run(&noise, 0.01, 2.0, 1), &noise, &system).unwrap();
        assert!(r2.f1_to_f4 <= 1e-4, "{r2:?}");
        for (a, b) in [(r1.f1_to_f4, r2.f1_to_f4), (r1.f5, r2.f5), (r1.max(), r2.max())] {
            let ratio = a / b;
            assert!((ratio - 4.0).abs() <= 0.3 * 4.0, "ratio {ratio}");
        }
    }

    #[test]
    fn f5_residual_is_dominated_by_its_fast_phase() {
        // the f5 phase rotates at 2(wA + wB), so its centered-difference
        // truncation is about (2(wA + wB))^3 dt^2 / 6 |f5|
        let noise = relaxation_only(1.0, 0.1);
        let system = SystemParams::default();
        let field = run(&noise, 0.005, 2.0, 1);
        let r = residual_breakdown(&field, &noise, &system).unwrap();
        let last = &field.f5_recent()[1];
        let peak = (0..=last.t_index)
            .flat_map(|j| (0..last.columns).map(move |k| (j, k)))
            .map(|(j, k)| last.get(j, k).norm())
            .fold(0.0, f64::max);
        let bound = 64.0 * 0.005f64.powi(2) / 6.0 * peak;
        assert!(r.f5 <= 1.5 * bound && r.f5 >= 0.2 * bound, "{} vs {bound}", r.f5);
        assert!(r.max() <= 1e-4);
    }

    #[test]
    fn residual_rejects_dephasing_only_scenario() {
        let noise = relaxation_only(1.0, 0.1);
        let field = run(&noise, 0.1, 1.0, 1);
        let d = NoiseConfig { scenario: Scenario::D, ..noise };
        assert!(coefficient_residual(&field, &d, &SystemParams::default()).is_err());
        assert!(evolve_coefficients::<f64>(&d, &SystemParams::default(), &GridSpec::default()).is_err());
    }

    #[test]
    fn obar_matches_symbolic_expansion() {
        let big_f = [C::new(0.3, 0.1), C::new(-0.2, 0.5), C::new(0.7, -0.4), C::new(0.05, 0.9)];
        let [f1, f2, f3, f4] = big_f;
        // basis |ab> with index 2a + b; sigma_z |0> = -|0>, sigma_z |1> = |1>
        let mut oracle = ComplexMatrix::<f64>::zeros(4);
        oracle.set(0, 1, f2 - f3);
        oracle.set(0, 2, f1 - f4);
        oracle.set(1, 3, f1 + f4);
        oracle.set(2, 3, f2 + f3);
        let o = obar_from_coefficients(&big_f, &TwoQubitOps::new());
        assert!((o - oracle).max_abs() < 1e-15);
        for r in 0..4 {
            for c in 0..=r {
                assert_eq!(o.get(r, c), C::zero());
            }
        }
    }

    #[test]
    fn symmetric_obar_annihilates_ground_state() {
        let c = C::new(0.4, -0.2);
        let o = obar_from_coefficients(&[c, c, C::zero(), C::zero()], &TwoQubitOps::<f64>::new());
        assert!(o.apply(&basis_ket(0)).iter().all(|z| z.norm() == 0.0));
        let ops = TwoQubitOps::<f64>::new();
        assert_eq!(o, ops.collective.scale(c));
    }

    #[test]
    fn interpolated_integrals_hit_nodes() {
        let field = run(&relaxation_only(1.0, 0.1), 0.1, 1.0, 1);
        let at = field.integrated_at_time(0.3 + 1e-12);
        assert!((at[0] - field.integrated(1, 3)).norm() < 1e-9);
        let mid = field.integrated_at_time(0.35);
        let avg = (field.integrated(1, 3) + field.integrated(1, 4)) * 0.5;
        assert!((mid[0] - avg).norm() < 1e-12);
    }

    #[test]
    fn divergence_reports_offending_node() {
        let grid = GridSpec::new(0.1, 1.0, 1).unwrap();
        let mut state = State::<f64>::zeros(11, 11);
        state.f[2][1] = C::new(2e6, 0.0);
        match check_divergence(&state, &grid, 3, 4, 4, 11, 1) {
            Err(Error::Divergence { component, t, s, s1, .. }) => {
                assert_eq!(component, 3);
                assert!((t - 0.3).abs() < 1e-12 && (s - 0.1).abs() < 1e-12);
                assert_eq!(s1, None);
            }
            other => panic!("unexpected {other:?}"),
        }
        state.f[2][1] = C::new(f64::NAN, 0.0);
        assert!(matches!(check_divergence(&state, &grid, 3, 4, 4, 11, 1), Err(Error::Numerical(_))));
    }

    #[test]
    fn dump_round_trips() {
        let field = run(&relaxation_only(1.0, 0.1), 0.1, 1.0, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.qsdf");
        write_coefficient_dump(&field, &path).unwrap();
        let dump = read_coefficient_dump(&path).unwrap();
        assert_eq!(dump.steps, 10);
        assert_eq!(dump.dt, 0.1);
        for c in 0..4 {
            assert_eq!(dump.series[c].as_slice(), field.integrated_series(c + 1));
        }
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"QSDF");
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 4 * 11 * 16);
    }

    #[test]
    fn single_precision_tracks_double() {
        let noise = relaxation_only(1.0, 0.1);
        let grid = GridSpec::new(0.02, 1.0, 1).unwrap();
        let f64_field = evolve_coefficients::<f64>(&noise, &SystemParams::default(), &grid).unwrap();
        let f32_field = evolve_coefficients::<f32>(&noise, &SystemParams::default(), &grid).unwrap();
        let a = f64_field.integrated(1, 50);
        let b = f32_field.integrated(1, 50);
        assert!((a.re - b.re as f64).abs() < 1e-5 && (a.im - b.im as f64).abs() < 1e-5);
    }
}
