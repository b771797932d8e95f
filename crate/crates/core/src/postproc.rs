//! Post-processing of the oracle output: the answer measurement `M_α`, the
//! recovery unitary `Û_{m_α}` and the ancilla measurement `M_β`.
//!
//! The recovery unitary acts on `ancilla β ⊗ data` as
//!
//! ```text
//! Û_m = (cosΘ (σ_x^{m⊕1} ⊗ 1) + i(−1)^{m⊕1} sinΘ C)(1 ⊗ R(Θ))
//! C    = 1 ⊗ |X₀⟩⟨X₀| + σ_x ⊗ |X₁⟩⟨X₁|
//! R(Θ) = |X₀⟩⟨X₀| + e^{iΘ} |X₁⟩⟨X₁|
//! ```
//!
//! Every factor is block diagonal in the class states, so
//! `Û_m = Σ_s V_s ⊗ |X_s⟩⟨X_s|` with a 2×2 unitary `V_s` per class, plus the
//! identity on the complement of span{|X₀⟩, |X₁⟩} in the full register.

use num_complex::Complex64;
use rand::Rng;

use crate::dataset::{DataRegister, Partition};
use crate::error::{Error, Result};
use crate::oracle::OracleConfig;
use crate::statevec::{DenseOperator, StateVector, C64};

pub const ANCILLA_REGISTER: usize = 0;
pub const DATA_REGISTER: usize = 1;

/// Conditional updates of the data register given the answer outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausPair {
    pub a0: DenseOperator,
    pub a1: DenseOperator,
}

impl KrausPair {
    pub fn get(&self, m_alpha: u8) -> &DenseOperator {
        if m_alpha == 0 {
            &self.a0
        } else {
            &self.a1
        }
    }

    /// Largest entrywise deviation of `A₀†A₀ + A₁†A₁` from the identity.
    pub fn completeness_error(&self) -> f64 {
        let sum = self
            .a0
            .adjoint()
            .compose(&self.a0)
            .and_then(|g0| g0.add(&self.a1.adjoint().compose(&self.a1)?))
            .expect("square operators of equal size");
        sum.max_abs_diff(&DenseOperator::identity(self.a0.rows()))
    }
}

/// `A_m = Σ_i √λ_{±} |i⟩⟨i|`, with `λ₊` on indices labelled `m`. On the
/// reduced register this is `√λ₊|X_m⟩⟨X_m| + √λ₋|X_{m⊕1}⟩⟨X_{m⊕1}|`.
pub fn kraus_pair(cfg: &OracleConfig, register: &DataRegister) -> KrausPair {
    let plus = cfg.lambda_plus.sqrt();
    let minus = cfg.lambda_minus.sqrt();
    let build = |m: u8| {
        let diag: Vec<C64> =
            register.labels().iter().map(|&l| C64::new(if l == m { plus } else { minus }, 0.0)).collect();
        DenseOperator::diagonal(&diag)
    };
    KrausPair { a0: build(0), a1: build(1) }
}

/// `P₀ = (1 + (ξ₀−ξ₁)L)/2`, `P₁ = (1 − (ξ₀−ξ₁)L)/2`.
pub fn alpha_probabilities(cfg: &OracleConfig, part: &Partition) -> (f64, f64) {
    let bias = (part.xi0 - part.xi1) * cfg.reliability;
    ((1.0 + bias) / 2.0, (1.0 - bias) / 2.0)
}

/// `(Q_{β=α}, Q_{β≠α}) = (ξ_m L / P_m, λ₋ / P_m)` for the optimal recovery;
/// `None` when `P_m = 0`.
pub fn consistency_probabilities(cfg: &OracleConfig, part: &Partition, m_alpha: u8) -> Option<(f64, f64)> {
    let (p0, p1) = alpha_probabilities(cfg, part);
    let p = if m_alpha == 0 { p0 } else { p1 };
    if p <= 0.0 {
        return None;
    }
    Some((part.xi(m_alpha) * cfg.reliability / p, cfg.lambda_minus / p))
}

/// Probability that `M_β` reports `m_α ⊕ 1` after `Û_{m_α}` with an arbitrary
/// angle `theta`. At the optimal angle this is `λ₋ / P_m`.
pub fn flip_probability(cfg: &OracleConfig, part: &Partition, m_alpha: u8, theta: f64) -> Option<f64> {
    let (p0, p1) = alpha_probabilities(cfg, part);
    let c2 = theta.cos().powi(2);
    let (lp, lm) = (cfg.lambda_plus, cfg.lambda_minus);
    let (num, p) =
        if m_alpha == 0 { (part.xi0 * lp * c2 + part.xi1 * lm, p0) } else { (part.xi0 * lm + part.xi1 * lp * c2, p1) };
    (p > 0.0).then(|| num / p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaResult {
    pub m_alpha: u8,
    pub probability: f64,
    /// Data register after the answer measurement.
    pub phi: StateVector,
}

/// Measures the answer register of the oracle output `[answer, data]`.
pub fn measure_alpha<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> Result<AlphaResult> {
    if state.num_registers() != 2 || state.dims()[0] != 2 {
        return Err(Error::Precondition(format!(
            "answer measurement expects [answer(2), data] registers, got {:?}",
            state.dims()
        )));
    }
    let m = state.measure(0, rng)?;
    let phi = m.post_state.slice(&[(0, m.outcome)])?;
    Ok(AlphaResult { m_alpha: m.outcome as u8, probability: m.probability, phi })
}

/// `Θ = arccos √(λ₋/λ₊)`, in `[0, π/2]`.
pub fn optimal_theta(cfg: &OracleConfig) -> f64 {
    (cfg.lambda_minus / cfg.lambda_plus).sqrt().clamp(0.0, 1.0).acos()
}

/// The 2×2 ancilla block `V_s` of `Û_m` for class `s`.
fn class_block(m_alpha: u8, class: u8, theta: f64) -> [[C64; 2]; 2] {
    let flip_ancilla = m_alpha == 0; // σ_x^{m⊕1}
    let sign = if m_alpha == 0 { -1.0 } else { 1.0 }; // (−1)^{m⊕1}
    let cos = C64::new(theta.cos(), 0.0);
    let isin = C64::new(0.0, sign * theta.sin());
    let zero = C64::new(0.0, 0.0);
    let pauli = |flip: bool, r: usize, c: usize| -> C64 {
        if (r != c) == flip {
            C64::new(1.0, 0.0)
        } else {
            zero
        }
    };
    let phase = if class == 1 { Complex64::from_polar(1.0, theta) } else { C64::new(1.0, 0.0) };
    let mut block = [[zero; 2]; 2];
    for (r, row) in block.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            *entry = (cos * pauli(flip_ancilla, r, c) + isin * pauli(class == 1, r, c)) * phase;
        }
    }
    block
}

/// `Û_{m_α}` on `ancilla β ⊗ data` (dimension `2·dim`).
pub fn build_recovery(m_alpha: u8, theta: f64, register: &DataRegister) -> DenseOperator {
    let d = register.dim();
    let blocks = [class_block(m_alpha, 0, theta), class_block(m_alpha, 1, theta)];
    let x = [register.class_state(0), register.class_state(1)];
    DenseOperator::from_fn(2 * d, 2 * d, |row, col| {
        let (b_out, i) = (row / d, row % d);
        let (b_in, j) = (col / d, col % d);
        let mut value = C64::new(0.0, 0.0);
        let mut span = 0.0;
        for s in 0..2 {
            let proj = x[s][i] * x[s][j];
            if proj != 0.0 {
                value += blocks[s][b_out][b_in] * proj;
                span += proj;
            }
        }
        // Identity on the complement of the class span.
        let complement = if i == j { 1.0 } else { 0.0 } - span;
        if b_out == b_in && complement != 0.0 {
            value += C64::new(complement, 0.0);
        }
        value
    })
}

/// The angle and both recovery unitaries of one oracle configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoverySetup {
    pub theta: f64,
    pub u0: DenseOperator,
    pub u1: DenseOperator,
}

impl RecoverySetup {
    pub fn optimal(cfg: &OracleConfig, register: &DataRegister) -> Self {
        Self::with_theta(optimal_theta(cfg), register)
    }

    pub fn with_theta(theta: f64, register: &DataRegister) -> Self {
        RecoverySetup { theta, u0: build_recovery(0, theta, register), u1: build_recovery(1, theta, register) }
    }

    pub fn get(&self, m_alpha: u8) -> &DenseOperator {
        if m_alpha == 0 {
            &self.u0
        } else {
            &self.u1
        }
    }
}

/// `|0_β⟩ ⊗ Û_{m_α}`-ready input.
pub fn with_fresh_ancilla(phi: &StateVector) -> Result<StateVector> {
    StateVector::basis(2, 0)?.tensor(phi)
}

/// Applies `Û_{m_α}` to `|0_β⟩|φ⟩`.
pub fn apply_recovery(phi: &StateVector, setup: &RecoverySetup, m_alpha: u8) -> Result<StateVector> {
    with_fresh_ancilla(phi)?.apply(setup.get(m_alpha), &[ANCILLA_REGISTER, DATA_REGISTER])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaKind {
    /// The answer was certified; the data register holds `|X_τ⟩`.
    ExtractedAnswer(u8),
    /// The data register holds `|ψ₀⟩` again.
    RecoveredInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaResult {
    pub m_beta: u8,
    pub consistent: bool,
    pub probability: f64,
    /// Data register after the ancilla measurement.
    pub post: StateVector,
    pub kind: BetaKind,
}

/// Measures the ancilla of `Û_{m_α}|0_β⟩|φ⟩` and classifies the outcome by
/// the consistency rule `m_β = m_α`.
pub fn measure_beta<R: Rng + ?Sized>(state: &StateVector, m_alpha: u8, rng: &mut R) -> Result<BetaResult> {
    if m_alpha > 1 {
        return Err(Error::Precondition(format!("m_alpha = {m_alpha} is not a bit")));
    }
    if state.num_registers() != 2 || state.dims()[ANCILLA_REGISTER] != 2 {
        return Err(Error::Precondition(format!(
            "ancilla measurement expects [ancilla(2), data] registers, got {:?}",
            state.dims()
        )));
    }
    let m = state.measure(ANCILLA_REGISTER, rng)?;
    let post = m.post_state.slice(&[(ANCILLA_REGISTER, m.outcome)])?;
    let m_beta = m.outcome as u8;
    let consistent = m_beta == m_alpha;
    let kind = if consistent { BetaKind::ExtractedAnswer(m_alpha) } else { BetaKind::RecoveredInput };
    Ok(BetaResult { m_beta, consistent, probability: m.probability, post, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ConceptDataset, Mode};
    use crate::oracle::{apply_oracle, build_oracle, with_fresh_answer, OracleCounter};
    use crate::statevec::trial_rng;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn setup(xi0: f64, l: f64) -> (OracleConfig, Partition, DataRegister) {
        let part = Partition::from_xi0(xi0).unwrap();
        let reg = DataRegister::reduced(&part);
        (OracleConfig::new(l).unwrap(), part, reg)
    }

    /// Direct construction from Kronecker products, independent of the
    /// block decomposition used by `build_recovery`.
    fn literal_recovery(m: u8, theta: f64) -> DenseOperator {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let id2 = DenseOperator::identity(2);
        let sx = DenseOperator::sigma_x();
        let p0 = DenseOperator::diagonal(&[one, zero]);
        let p1 = DenseOperator::diagonal(&[zero, one]);
        let c = id2.kron(&p0).add(&sx.kron(&p1)).unwrap();
        let r = DenseOperator::diagonal(&[one, C64::from_polar(1.0, theta)]);
        let flip = if m == 0 { sx.clone() } else { id2.clone() };
        let sign = if m == 0 { -1.0 } else { 1.0 };
        let first = flip.kron(&id2).scale(C64::new(theta.cos(), 0.0));
        let second = c.scale(C64::new(0.0, sign * theta.sin()));
        first.add(&second).unwrap().compose(&id2.kron(&r)).unwrap()
    }

    fn oracle_output(cfg: &OracleConfig, reg: &DataRegister) -> StateVector {
        let op = build_oracle(cfg, reg);
        apply_oracle(&with_fresh_answer(&reg.reference_state()).unwrap(), &op, &mut OracleCounter::default()).unwrap()
    }

    #[test]
    fn kraus_examples() {
        let reg = DataRegister::reduced(&Partition::from_xi0(0.5).unwrap());
        let k = kraus_pair(&OracleConfig::new(1.0).unwrap(), &reg);
        assert_eq!(k.a0, DenseOperator::diagonal(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]));
        assert_eq!(k.a1, DenseOperator::diagonal(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]));

        let k = kraus_pair(&OracleConfig::new(0.0).unwrap(), &reg);
        let h = C64::new(0.5f64.sqrt(), 0.0);
        assert_eq!(k.a0, DenseOperator::diagonal(&[h, h]));
        assert_eq!(k.a0, k.a1);

        let k = kraus_pair(&OracleConfig::new(0.5).unwrap(), &reg);
        assert_abs_diff_eq!(k.a0.get(0, 0).re, 0.75f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.a0.get(1, 1).re, 0.25f64.sqrt(), epsilon = 1e-15);
        assert!(k.completeness_error() < 1e-12);
    }

    #[test]
    fn alpha_probability_examples() {
        let (cfg, part, _) = setup(0.5, 0.9);
        assert_eq!(alpha_probabilities(&cfg, &part), (0.5, 0.5));
        let (cfg, part, _) = setup(0.7, 0.5);
        let (p0, p1) = alpha_probabilities(&cfg, &part);
        assert_abs_diff_eq!(p0, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(p1, 0.4, epsilon = 1e-12);
        // ξ₀ − ξ₁ = −1 at L = 1: P₀ reaches λ₋ = 0.
        let (cfg, part, _) = setup(0.0, 1.0);
        assert_eq!(alpha_probabilities(&cfg, &part), (0.0, 1.0));
        assert_eq!(alpha_probabilities(&cfg, &part).0, cfg.lambda_minus);
    }

    #[test]
    fn measure_alpha_post_states() {
        let (cfg, _, reg) = setup(0.7, 0.5);
        let out = oracle_output(&cfg, &reg);
        let a = out.postselect(0, 0).unwrap();
        let phi = a.post_state.slice(&[(0, 0)]).unwrap();
        assert_abs_diff_eq!(phi.amps()[0].re, 0.875f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(phi.amps()[1].re, 0.125f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(phi.amps()[0].re, 0.93541, epsilon = 1e-5);

        let mut rng = trial_rng(5, 0);
        let r = measure_alpha(&out, &mut rng).unwrap();
        let expected = if r.m_alpha == 0 { 0.6 } else { 0.4 };
        assert_abs_diff_eq!(r.probability, expected, epsilon = 1e-12);
    }

    #[test]
    fn measure_alpha_limits() {
        let mut rng = trial_rng(9, 0);
        let (cfg, _, reg) = setup(0.7, 1.0);
        let out = oracle_output(&cfg, &reg);
        for _ in 0..20 {
            let r = measure_alpha(&out, &mut rng).unwrap();
            let x = reg.class_state_vector(r.m_alpha).unwrap();
            assert_abs_diff_eq!(r.phi.fidelity(&x).unwrap(), 1.0, epsilon = 1e-15);
        }
        let (cfg, _, reg) = setup(0.7, 0.0);
        let out = oracle_output(&cfg, &reg);
        for _ in 0..20 {
            let r = measure_alpha(&out, &mut rng).unwrap();
            assert_abs_diff_eq!(r.phi.fidelity(&reg.reference_state()).unwrap(), 1.0, epsilon = 1e-15);
        }
        assert!(measure_alpha(&reg.reference_state(), &mut rng).is_err());
    }

    #[test]
    fn theta_examples() {
        assert_abs_diff_eq!(optimal_theta(&OracleConfig::new(1.0).unwrap()), FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(optimal_theta(&OracleConfig::new(0.0).unwrap()), 0.0);
        let t = optimal_theta(&OracleConfig::new(0.5).unwrap());
        assert_abs_diff_eq!(t, (1.0 / 3.0f64.sqrt()).acos(), epsilon = 1e-15);
        assert_abs_diff_eq!(t, 0.955317, epsilon = 1e-6);
    }

    #[test]
    fn recovery_matches_literal_construction() {
        let reg = DataRegister::reduced(&Partition::from_xi0(0.4).unwrap());
        for theta in [0.0, 0.1, 0.5, 1.0, FRAC_PI_2] {
            for m in 0..2 {
                let u = build_recovery(m, theta, &reg);
                assert!(u.max_abs_diff(&literal_recovery(m, theta)) < 1e-14, "m={m} theta={theta}");
                assert!(u.is_unitary(1e-10));
            }
        }
    }

    #[test]
    fn recovery_at_zero_angle_flips_ancilla() {
        let reg = DataRegister::reduced(&Partition::from_xi0(0.5).unwrap());
        let u = build_recovery(0, 0.0, &reg);
        let expected = DenseOperator::sigma_x().kron(&DenseOperator::identity(2));
        assert!(u.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn full_register_recovery_is_unitary() {
        let ds = ConceptDataset::new(vec![0, 1, 1, 0, 1], vec![0.1, 0.3, 0.2, 0.15, 0.25]).unwrap();
        let reg = DataRegister::new(&ds, Mode::Full);
        for theta in [0.0, 0.7, FRAC_PI_2] {
            for m in 0..2 {
                assert!(build_recovery(m, theta, &reg).is_unitary(1e-10));
            }
        }
        // Empty class: the block reduces to the populated class plus identity.
        let ds = ConceptDataset::new(vec![0, 0, 0], vec![0.2, 0.3, 0.5]).unwrap();
        let reg = DataRegister::new(&ds, Mode::Full);
        assert!(build_recovery(1, 0.4, &reg).is_unitary(1e-10));
    }

    #[test]
    fn recovery_branch_weights() {
        let (cfg, _, reg) = setup(0.7, 0.5);
        let setup = RecoverySetup::optimal(&cfg, &reg);
        let phi0 = oracle_output(&cfg, &reg).postselect(0, 0).unwrap().post_state.slice(&[(0, 0)]).unwrap();
        let out = apply_recovery(&phi0, &setup, 0).unwrap();
        let p = out.born_probabilities(ANCILLA_REGISTER).unwrap();
        assert_abs_diff_eq!(p[1], 0.25 / 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0], 0.35 / 0.6, epsilon = 1e-12);
    }

    #[test]
    fn consistency_examples() {
        let (cfg, part, _) = setup(0.7, 0.5);
        let (qc, qi) = consistency_probabilities(&cfg, &part, 0).unwrap();
        assert_abs_diff_eq!(qc, 0.35 / 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(qc, 0.58333, epsilon = 1e-5);
        assert_abs_diff_eq!(qi, 0.41667, epsilon = 1e-5);

        let (cfg, part, _) = setup(0.3, 1.0);
        for m in 0..2 {
            let (qc, qi) = consistency_probabilities(&cfg, &part, m).unwrap();
            assert_abs_diff_eq!(qc, 1.0, epsilon = 1e-12);
            assert_eq!(qi, 0.0);
        }
        let (cfg, part, _) = setup(0.3, 0.0);
        for m in 0..2 {
            let (qc, qi) = consistency_probabilities(&cfg, &part, m).unwrap();
            assert_eq!(qc, 0.0);
            assert_abs_diff_eq!(qi, 1.0, epsilon = 1e-12);
        }
        let (cfg, part, _) = setup(0.0, 1.0);
        assert!(consistency_probabilities(&cfg, &part, 0).is_none());
    }

    #[test]
    fn measure_beta_outcomes() {
        let (cfg, _, reg) = setup(0.7, 0.5);
        let setup = RecoverySetup::optimal(&cfg, &reg);
        let out = oracle_output(&cfg, &reg);
        let psi0 = reg.reference_state();
        let mut rng = trial_rng(77, 0);
        let mut seen = [false; 2];
        for _ in 0..200 {
            let a = measure_alpha(&out, &mut rng).unwrap();
            let state = apply_recovery(&a.phi, &setup, a.m_alpha).unwrap();
            let b = measure_beta(&state, a.m_alpha, &mut rng).unwrap();
            assert_eq!(b.consistent, b.m_beta == a.m_alpha);
            match b.kind {
                BetaKind::ExtractedAnswer(tau) => {
                    assert_eq!(tau, a.m_alpha);
                    let x = reg.class_state_vector(tau).unwrap();
                    assert_abs_diff_eq!(b.post.fidelity(&x).unwrap(), 1.0, epsilon = 1e-10);
                }
                BetaKind::RecoveredInput => {
                    assert_abs_diff_eq!(b.post.fidelity(&psi0).unwrap(), 1.0, epsilon = 1e-10);
                }
            }
            seen[usize::from(b.consistent)] = true;
        }
        assert!(seen[0] && seen[1]);
        assert!(measure_beta(&out, 2, &mut rng).is_err());
        assert!(measure_beta(&psi0, 0, &mut rng).is_err());
    }

    #[test]
    fn flip_probability_at_optimum() {
        let (cfg, part, _) = setup(0.7, 0.5);
        let theta = optimal_theta(&cfg);
        for m in 0..2 {
            let q = flip_probability(&cfg, &part, m, theta).unwrap();
            let (_, qi) = consistency_probabilities(&cfg, &part, m).unwrap();
            assert_abs_diff_eq!(q, qi, epsilon = 1e-12);
        }
    }
}
