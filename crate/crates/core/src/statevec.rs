//! Dense complex statevector engine.
//!
//! A [`StateVector`] is a flat amplitude vector over an ordered list of
//! registers. Register 0 is the most significant digit of the flat index, so
//! for dims `[2, 2, d]` the amplitude of `|b⟩|a⟩|x⟩` lives at `b*2*d + a*d + x`.
//! The protocol keeps ancilla registers in front of the data register.
//!
//! Values are immutable: every operation returns a new state.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type C64 = Complex64;

type Dims = SmallVec<[usize; 4]>;
// Inline capacity covers every reduced-mode state (ancilla ⊗ answer ⊗ 2-dim data).
type Amps = SmallVec<[C64; 8]>;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_DIM: usize = 1 << 20;
/// Environment variable overriding [`SimConfig::max_dim`].
pub const MAX_DIM_ENV: &str = "QREUSE_MAX_DIM";

/// Per-trial random stream.
pub type TrialRng = ChaCha8Rng;

/// Returns the generator for trial `trial_index` of an experiment seeded with
/// `master_seed`. Streams are independent of scheduling order.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Master seed for sub-experiment `index`, e.g. one point of a grid.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    trial_rng(master_seed, index).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub tolerance: f64,
    pub max_dim: usize,
    /// Reject operators that do not preserve the norm of the state they act on.
    pub strict: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { tolerance: DEFAULT_TOLERANCE, max_dim: DEFAULT_MAX_DIM, strict: true }
    }
}

impl SimConfig {
    /// Defaults with `QREUSE_MAX_DIM` applied when it parses as a positive integer.
    pub fn from_env() -> Self {
        let mut cfg = SimConfig::default();
        if let Some(max) =
            std::env::var(MAX_DIM_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&v| v > 0)
        {
            cfg.max_dim = max;
        }
        cfg
    }

    /// Process-wide configuration, read from the environment once.
    pub fn global() -> &'static SimConfig {
        static GLOBAL: OnceLock<SimConfig> = OnceLock::new();
        GLOBAL.get_or_init(SimConfig::from_env)
    }
}

fn strides(dims: &[usize]) -> Dims {
    let mut strides: Dims = smallvec::smallvec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

/// Flat offsets of every combination of `registers` (first listed register
/// most significant).
fn register_offsets(dims: &[usize], strides: &[usize], registers: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &r in registers {
        let mut next = Vec::with_capacity(offsets.len() * dims[r]);
        for &base in &offsets {
            for digit in 0..dims[r] {
                next.push(base + digit * strides[r]);
            }
        }
        offsets = next;
    }
    offsets
}

fn stride_of(dims: &[usize], register: usize) -> usize {
    dims[register + 1..].iter().product()
}

fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    entries: Vec<C64>,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("operator with zero dimension".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!("{} entries for a {rows}x{cols} operator", entries.len())));
        }
        if entries.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
            return Err(Error::InvalidState("non-finite operator entry".into()));
        }
        Ok(DenseOperator { rows, cols, entries })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        DenseOperator { rows, cols, entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, dim, |r, c| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |r, c| if r == c { diag[r] } else { C64::new(0.0, 0.0) })
    }

    pub fn sigma_x() -> Self {
        Self::from_fn(2, 2, |r, c| if r != c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// Outer product `|ket⟩⟨bra|`.
    pub fn outer(ket: &[C64], bra: &[C64]) -> Self {
        Self::from_fn(ket.len(), bra.len(), |r, c| ket[r] * bra[c].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.cols + col]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &DenseOperator) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose {}x{} with {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self::from_fn(self.rows, rhs.cols, |r, c| (0..self.cols).map(|k| self.get(r, k) * rhs.get(k, c)).sum()))
    }

    pub fn add(&self, rhs: &DenseOperator) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::DimensionMismatch("operator sum of different shapes".into()));
        }
        Ok(Self::from_fn(self.rows, self.cols, |r, c| self.get(r, c) + rhs.get(r, c)))
    }

    pub fn scale(&self, factor: C64) -> Self {
        DenseOperator { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|e| e * factor).collect() }
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &DenseOperator) -> Self {
        Self::from_fn(self.rows * rhs.rows, self.cols * rhs.cols, |r, c| {
            self.get(r / rhs.rows, c / rhs.cols) * rhs.get(r % rhs.rows, c % rhs.cols)
        })
    }

    /// Largest entrywise deviation from another operator of the same shape.
    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `U†U = 1` within `tol`, entrywise.
    pub fn is_unitary(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let gram = self.adjoint().compose(self).expect("square");
        gram.max_abs_diff(&Self::identity(self.cols)) <= tol
    }

    /// Matrix-vector product. Zero entries are skipped and real entries scale
    /// componentwise, so an identity operator reproduces its input bit for bit.
    pub fn mul_vec(&self, input: &[C64]) -> Vec<C64> {
        self.mul_into(input).into_vec()
    }

    fn mul_into(&self, input: &[C64]) -> Amps {
        assert_eq!(input.len(), self.cols, "operator/vector dimension mismatch");
        let mut out = Amps::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = &self.entries[r * self.cols..(r + 1) * self.cols];
            let mut acc: Option<C64> = None;
            for (e, x) in row.iter().zip(input) {
                if e.re == 0.0 && e.im == 0.0 {
                    continue;
                }
                let term = if e.im == 0.0 { x.scale(e.re) } else { e * x };
                acc = Some(match acc {
                    Some(a) => a + term,
                    None => term,
                });
            }
            out.push(acc.unwrap_or_default());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dims: Dims,
    amps: Amps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementResult {
    pub outcome: usize,
    /// Born weight of the observed branch before renormalization.
    pub probability: f64,
    pub post_state: StateVector,
}

impl StateVector {
    /// Builds a state from normalized amplitudes.
    pub fn new(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let state = Self::unchecked(dims, amps)?;
        let norm = state.norm();
        let tol = SimConfig::global().tolerance;
        if (norm - 1.0).abs() > tol {
            return Err(Error::InvalidState(format!("norm {norm} is not 1")));
        }
        Ok(state)
    }

    /// Builds a state from arbitrary nonzero amplitudes, rescaling them to unit norm.
    pub fn normalized(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        Self::unchecked(dims, amps)?.renormalized()
    }

    fn renormalized(mut self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector cannot be normalized".into()));
        }
        for a in &mut self.amps {
            *a /= norm;
        }
        Ok(self)
    }

    /// Real nonnegative amplitudes given as Born weights, `amp_i = sqrt(w_i)`.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let amps = weights.iter().map(|w| C64::new(w.max(0.0).sqrt(), 0.0)).collect();
        Self::normalized(vec![weights.len()], amps)
    }

    fn unchecked(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::DimensionMismatch(format!("invalid register dims {dims:?}")));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::Capacity { requested: usize::MAX, max: SimConfig::global().max_dim })?;
        if total != amps.len() {
            return Err(Error::DimensionMismatch(format!("{} amplitudes for dims {dims:?}", amps.len())));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        Ok(StateVector { dims: Dims::from_vec(dims), amps: Amps::from_vec(amps) })
    }

    /// Computational basis state `|index⟩` of a single register.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::DimensionMismatch(format!("basis index {index} >= dim {dim}")));
        }
        let mut amps: Amps = smallvec::smallvec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Ok(StateVector { dims: smallvec::smallvec![dim], amps })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn num_registers(&self) -> usize {
        self.dims.len()
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    fn check_register(&self, register: usize) -> Result<()> {
        if register >= self.dims.len() {
            return Err(Error::RegisterOutOfRange { index: register, count: self.dims.len() });
        }
        Ok(())
    }

    /// `self ⊗ other` with the global dimension cap.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        self.tensor_with(other, SimConfig::global())
    }

    pub fn tensor_with(&self, other: &StateVector, cfg: &SimConfig) -> Result<StateVector> {
        let requested =
            self.len().checked_mul(other.len()).ok_or(Error::Capacity { requested: usize::MAX, max: cfg.max_dim })?;
        if requested > cfg.max_dim {
            return Err(Error::Capacity { requested, max: cfg.max_dim });
        }
        let mut amps = Amps::with_capacity(requested);
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(StateVector { dims, amps })
    }

    /// Applies `op` to `targets` (in the listed order) and the identity elsewhere.
    pub fn apply(&self, op: &DenseOperator, targets: &[usize]) -> Result<StateVector> {
        self.apply_with(op, targets, SimConfig::global())
    }

    pub fn apply_with(&self, op: &DenseOperator, targets: &[usize], cfg: &SimConfig) -> Result<StateVector> {
        for &t in targets {
            self.check_register(t)?;
        }
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].contains(t) {
                return Err(Error::DimensionMismatch(format!("register {t} targeted twice")));
            }
        }
        let target_dim: usize = targets.iter().map(|&t| self.dims[t]).product();
        if !op.is_square() || op.rows() != target_dim {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} operator on registers {targets:?} of total dimension {target_dim}",
                op.rows(),
                op.cols()
            )));
        }

        let amps = if targets.iter().copied().eq(0..self.dims.len()) {
            op.mul_into(&self.amps)
        } else {
            self.apply_general(op, targets, target_dim)
        };

        let norm = norm_sqr(&amps).sqrt();
        if cfg.strict && (norm - 1.0).abs() > cfg.tolerance {
            return Err(Error::NonIsometry { norm });
        }
        Ok(StateVector { dims: self.dims.clone(), amps })
    }

    fn apply_general(&self, op: &DenseOperator, targets: &[usize], target_dim: usize) -> Amps {
        let strides = strides(&self.dims);
        let rest: Vec<usize> = (0..self.dims.len()).filter(|r| !targets.contains(r)).collect();
        let target_offsets = register_offsets(&self.dims, &strides, targets);
        let rest_offsets = register_offsets(&self.dims, &strides, &rest);

        let mut amps: Amps = smallvec::smallvec![C64::new(0.0, 0.0); self.amps.len()];
        let mut block = vec![C64::new(0.0, 0.0); target_dim];
        for &base in &rest_offsets {
            for (slot, &off) in block.iter_mut().zip(&target_offsets) {
                *slot = self.amps[base + off];
            }
            let out = op.mul_into(&block);
            for (value, &off) in out.into_iter().zip(&target_offsets) {
                amps[base + off] = value;
            }
        }
        amps
    }

    /// Marginal outcome distribution of one register.
    pub fn born_probabilities(&self, register: usize) -> Result<Vec<f64>> {
        self.check_register(register)?;
        Ok(self.marginal(register).into_vec())
    }

    fn marginal(&self, register: usize) -> SmallVec<[f64; 4]> {
        let dim = self.dims[register];
        let stride = stride_of(&self.dims, register);
        let mut probs = smallvec::smallvec![0.0; dim];
        for (i, a) in self.amps.iter().enumerate() {
            probs[(i / stride) % dim] += a.norm_sqr();
        }
        probs
    }

    /// Unnormalized projection of `register` onto `outcome`, with its Born weight.
    fn project(&self, register: usize, outcome: usize) -> (f64, Amps) {
        let dim = self.dims[register];
        let stride = stride_of(&self.dims, register);
        let amps: Amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, &a)| if (i / stride) % dim == outcome { a } else { C64::new(0.0, 0.0) })
            .collect();
        (norm_sqr(&amps), amps)
    }

    /// Collapses `register` onto `outcome` without sampling.
    pub fn postselect(&self, register: usize, outcome: usize) -> Result<MeasurementResult> {
        self.check_register(register)?;
        if outcome >= self.dims[register] {
            return Err(Error::DimensionMismatch(format!(
                "outcome {outcome} on a register of dimension {}",
                self.dims[register]
            )));
        }
        let (weight, amps) = self.project(register, outcome);
        if weight == 0.0 {
            return Err(Error::InvalidState(format!("outcome {outcome} of register {register} has zero probability")));
        }
        let post_state = StateVector { dims: self.dims.clone(), amps }.renormalized()?;
        Ok(MeasurementResult { outcome, probability: weight, post_state })
    }

    /// Projective computational-basis measurement of `register`.
    pub fn measure<R: Rng + ?Sized>(&self, register: usize, rng: &mut R) -> Result<MeasurementResult> {
        self.check_register(register)?;
        let probs = self.marginal(register);
        let total: f64 = probs.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::InvalidState("all-zero marginal".into()));
        }
        let u = rng.random::<f64>() * total;
        let mut cumulative = 0.0;
        let mut chosen = None;
        for (k, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            cumulative += p;
            chosen = Some(k);
            if u < cumulative {
                break;
            }
        }
        // `chosen` is the last nonzero outcome when rounding leaves u >= cumulative.
        self.postselect(register, chosen.expect("nonzero total"))
    }

    /// Conditions `fixed` registers on the given basis values and drops them,
    /// returning the normalized state of the remaining registers.
    pub fn slice(&self, fixed: &[(usize, usize)]) -> Result<StateVector> {
        for &(r, v) in fixed {
            self.check_register(r)?;
            if v >= self.dims[r] {
                return Err(Error::DimensionMismatch(format!("value {v} on register {r}")));
            }
        }
        let keep: Dims = (0..self.dims.len()).filter(|r| !fixed.iter().any(|&(f, _)| f == *r)).collect();
        if keep.is_empty() {
            return Err(Error::DimensionMismatch("slice would drop every register".into()));
        }
        let strides = strides(&self.dims);
        let base: usize = fixed.iter().map(|&(r, v)| v * strides[r]).sum();
        let amps = if keep.iter().copied().eq(fixed.len()..self.dims.len()) {
            // Fixed registers form a prefix: the slice is contiguous.
            Amps::from_slice(&self.amps[base..base + strides[fixed.len() - 1]])
        } else {
            let offsets = register_offsets(&self.dims, &strides, &keep);
            offsets.iter().map(|&off| self.amps[base + off]).collect()
        };
        let dims = keep.iter().map(|&r| self.dims[r]).collect();
        StateVector { dims, amps }.renormalized()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "inner product of dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|⟨a|b⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn qubit(a: f64, b: f64) -> StateVector {
        StateVector::new(vec![2], vec![c(a), c(b)]).unwrap()
    }

    #[test]
    fn tensor_of_basis_states() {
        let s = StateVector::basis(2, 0).unwrap().tensor(&StateVector::basis(2, 0).unwrap()).unwrap();
        assert_eq!(s.dims(), &[2, 2]);
        assert_eq!(s.amps()[0], c(1.0));
        assert!(s.amps()[1..].iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn tensor_plus_zero() {
        let h = 0.5f64.sqrt();
        let s = qubit(h, h).tensor(&StateVector::basis(2, 0).unwrap()).unwrap();
        let expect = [h, 0.0, h, 0.0];
        for (a, e) in s.amps().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn tensor_data_then_answer() {
        let data = qubit(0.7f64.sqrt(), 0.3f64.sqrt());
        let s = data.tensor(&StateVector::basis(2, 0).unwrap()).unwrap();
        let expect = [0.7f64.sqrt(), 0.0, 0.3f64.sqrt(), 0.0];
        for (a, e) in s.amps().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tensor_capacity_error() {
        let cfg = SimConfig { max_dim: 8, ..SimConfig::default() };
        let a = StateVector::basis(4, 0).unwrap();
        assert_eq!(a.tensor_with(&a, &cfg), Err(Error::Capacity { requested: 16, max: 8 }));
    }

    #[test]
    fn sigma_x_flips() {
        let s = StateVector::basis(2, 0).unwrap().apply(&DenseOperator::sigma_x(), &[0]).unwrap();
        assert_eq!(s, StateVector::basis(2, 1).unwrap());
    }

    #[test]
    fn phase_gate_pi() {
        let h = 0.5f64.sqrt();
        let phase = DenseOperator::diagonal(&[c(1.0), C64::from_polar(1.0, std::f64::consts::PI)]);
        let s = qubit(h, h).apply(&phase, &[0]).unwrap();
        assert_abs_diff_eq!(s.amps()[0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps()[1].re, -h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps()[1].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn apply_on_second_register_only() {
        // |1⟩|0⟩ with X on register 1 → |1⟩|1⟩
        let s = StateVector::basis(2, 1).unwrap().tensor(&StateVector::basis(2, 0).unwrap()).unwrap();
        let s = s.apply(&DenseOperator::sigma_x(), &[1]).unwrap();
        assert_eq!(s.amps()[3], c(1.0));
    }

    #[test]
    fn apply_respects_target_order() {
        // CNOT with control = first listed target.
        let cnot = DenseOperator::from_fn(4, 4, |r, col| {
            let map = [0, 1, 3, 2];
            if map[col] == r {
                c(1.0)
            } else {
                c(0.0)
            }
        });
        let s = StateVector::basis(2, 0).unwrap().tensor(&StateVector::basis(2, 1).unwrap()).unwrap();
        // control is register 1 (value 1), target register 0 → |1⟩|1⟩
        let out = s.apply(&cnot, &[1, 0]).unwrap();
        assert_eq!(out.amps()[3], c(1.0));
        // control is register 0 (value 0) → unchanged
        let out = s.apply(&cnot, &[0, 1]).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn apply_rejects_mismatch_and_non_isometry() {
        let s = StateVector::basis(2, 0).unwrap();
        assert!(matches!(s.apply(&DenseOperator::identity(3), &[0]), Err(Error::DimensionMismatch(_))));
        let shrink = DenseOperator::diagonal(&[c(0.5), c(1.0)]);
        assert!(matches!(s.apply(&shrink, &[0]), Err(Error::NonIsometry { .. })));
        let lax = SimConfig { strict: false, ..SimConfig::default() };
        assert!(s.apply_with(&shrink, &[0], &lax).is_ok());
        assert!(matches!(s.apply(&shrink, &[1]), Err(Error::RegisterOutOfRange { .. })));
    }

    #[test]
    fn born_probabilities_examples() {
        assert_eq!(StateVector::basis(2, 0).unwrap().born_probabilities(0).unwrap(), vec![1.0, 0.0]);
        let p = qubit(0.6f64.sqrt(), 0.4f64.sqrt()).born_probabilities(0).unwrap();
        assert_abs_diff_eq!(p[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn measure_certain_outcome() {
        let mut rng = trial_rng(1, 0);
        let m = StateVector::basis(2, 1).unwrap().measure(0, &mut rng).unwrap();
        assert_eq!(m.outcome, 1);
        assert_eq!(m.probability, 1.0);
    }

    #[test]
    fn measure_is_reproducible() {
        let h = 0.5f64.sqrt();
        let s = qubit(h, h);
        let run = |seed| {
            let mut rng = trial_rng(seed, 3);
            (0..64).map(|_| s.measure(0, &mut rng).unwrap().outcome).collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn measure_frequency_matches_born_rule() {
        let s = qubit(0.6f64.sqrt(), 0.4f64.sqrt());
        let mut rng = trial_rng(2024, 0);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| s.measure(0, &mut rng).unwrap().outcome == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.6).abs() < 0.002, "frequency {freq}");
    }

    #[test]
    fn measure_collapses_and_renormalizes() {
        let h = 0.5f64.sqrt();
        let bell = StateVector::new(vec![2, 2], vec![c(h), c(0.0), c(0.0), c(h)]).unwrap();
        let m = bell.postselect(0, 1).unwrap();
        assert_abs_diff_eq!(m.probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.post_state.amps()[3].re, 1.0, epsilon = 1e-15);
        assert!(bell.postselect(0, 1).unwrap().post_state.born_probabilities(1).unwrap()[1] == 1.0);
    }

    #[test]
    fn postselect_zero_branch_fails() {
        let s = StateVector::basis(2, 0).unwrap();
        assert!(matches!(s.postselect(0, 1), Err(Error::InvalidState(_))));
    }

    #[test]
    fn slice_drops_fixed_registers() {
        let data = qubit(0.8f64.sqrt(), 0.2f64.sqrt());
        let s = StateVector::basis(2, 1).unwrap().tensor(&data).unwrap();
        let back = s.slice(&[(0, 1)]).unwrap();
        assert_abs_diff_eq!(back.fidelity(&data).unwrap(), 1.0, epsilon = 1e-15);
        assert!(s.slice(&[(0, 0)]).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let x = qubit(0.3f64.sqrt(), 0.7f64.sqrt());
        assert_abs_diff_eq!(x.fidelity(&x).unwrap(), 1.0, epsilon = 1e-15);
        let zero = StateVector::basis(2, 0).unwrap();
        let one = StateVector::basis(2, 1).unwrap();
        assert_eq!(zero.fidelity(&one).unwrap(), 0.0);
        assert!(zero.fidelity(&StateVector::basis(3, 0).unwrap()).is_err());
    }

    #[test]
    fn constructors_validate() {
        assert!(StateVector::new(vec![2], vec![c(1.0), c(1.0)]).is_err());
        assert!(StateVector::new(vec![3], vec![c(1.0), c(0.0)]).is_err());
        assert!(StateVector::new(vec![2], vec![c(f64::NAN), c(0.0)]).is_err());
        assert!(StateVector::normalized(vec![2], vec![c(0.0), c(0.0)]).is_err());
    }

    #[test]
    fn kron_and_compose() {
        let x = DenseOperator::sigma_x();
        let xx = x.kron(&x);
        assert!(xx.compose(&xx).unwrap().max_abs_diff(&DenseOperator::identity(4)) == 0.0);
        assert!(xx.is_unitary(1e-12));
        assert!(!DenseOperator::diagonal(&[c(1.0), c(0.5)]).is_unitary(1e-12));
    }
}
