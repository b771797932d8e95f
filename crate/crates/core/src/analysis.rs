//! Reusability bound `R ≤ 1 − L`, the mean-reuse formulas, and an adversarial
//! search over random recovery unitaries.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataRegister, Partition};
use crate::error::{Error, Result};
use crate::oracle::{lambdas, OracleConfig};
use crate::postproc::{alpha_probabilities, kraus_pair, KrausPair, RecoverySetup};
use crate::statevec::{trial_rng, DenseOperator, TrialRng, C64};

/// Slack allowed above `1 − L` before a candidate counts as a violation.
pub const BOUND_SLACK: f64 = 1e-9;
/// A recovery branch is conclusive when `R_b A_m` is this close to a multiple of the identity.
pub const CONCLUSIVE_TOLERANCE: f64 = 1e-9;

/// `1 − L`.
pub fn tradeoff_bound(reliability: f64) -> Result<f64> {
    lambdas(reliability)?;
    Ok(1.0 - reliability)
}

/// `n̄ = Σ_{n≥0} n Rⁿ = R/(1−R)²`, the average reuse number as a series.
///
/// This is not the mean of the normalized geometric law `Rⁿ(1−R)`, which is
/// [`geometric_mean_reuse`].
pub fn paper_mean_reuse(r: f64) -> Result<f64> {
    if r == 1.0 {
        return Err(Error::Divergence);
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Domain { name: "reusability", value: r, range: "[0, 1)" });
    }
    Ok(r / ((1.0 - r) * (1.0 - r)))
}

/// `L⁻¹(L⁻¹ − 1)`, the value of [`paper_mean_reuse`] at `R = 1 − L`.
pub fn mean_reuse_bound(reliability: f64) -> Result<f64> {
    if !(reliability > 0.0 && reliability <= 1.0) {
        return Err(Error::Domain { name: "reliability", value: reliability, range: "(0, 1]" });
    }
    let inv = 1.0 / reliability;
    Ok(inv * (inv - 1.0))
}

/// `R/(1−R)`: expected number of reuses before success when each cycle
/// recycles with probability `R`.
pub fn geometric_mean_reuse(r: f64) -> Result<f64> {
    if r == 1.0 {
        return Err(Error::Divergence);
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Domain { name: "reusability", value: r, range: "[0, 1)" });
    }
    Ok(r / (1.0 - r))
}

/// Haar-random unitary: QR of a complex Gaussian matrix with the phases of
/// `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DenseOperator {
    let gaussian =
        DMatrix::<C64>::from_fn(dim, dim, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let (q, r) = gaussian.qr().unpack();
    DenseOperator::from_fn(dim, dim, |i, j| {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        q[(i, j)] * phase
    })
}

/// Recovery weight of one answer outcome under a candidate unitary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffWitness {
    pub m_alpha: u8,
    /// `η = P_m · |⟨ψ₀|R̂|φ_m⟩|²` over the conclusive ancilla branch, 0 when none is conclusive.
    pub eta: f64,
    /// `P_m`.
    pub p: f64,
    /// `η / P_m`, the probability of conclusively recovering `|ψ₀⟩` from `|φ_m⟩`.
    pub ratio: f64,
    /// Ancilla outcome of the conclusive branch.
    pub branch: Option<u8>,
    /// Largest raw overlap `|⟨ψ₀|R̂_b|φ_m⟩|²` over both branches. Not bounded:
    /// a non-conclusive branch may overlap strongly with `|ψ₀⟩`.
    pub overlap: f64,
}

impl TradeoffWitness {
    pub fn satisfies_bounds(&self, lambda_minus: f64) -> bool {
        let ratio_ok = self.p == 0.0 || self.ratio <= lambda_minus / self.p + 1e-10;
        (0.0..=lambda_minus + 1e-10).contains(&self.eta) && ratio_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub reliability: f64,
    pub xi0: f64,
    pub witnesses: [TradeoffWitness; 2],
    /// `Σ_m P_m · (conclusive recovery probability)`.
    pub r_candidate: f64,
    pub bound: f64,
}

impl CandidateEvaluation {
    pub fn violates(&self) -> bool {
        self.r_candidate > self.bound + BOUND_SLACK
    }
}

/// The 2×2 block `⟨b|_β U |0⟩_β` acting on the reduced data register.
fn branch_operator(u: &DenseOperator, b: usize) -> [[C64; 2]; 2] {
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = u.get(b * 2 + i, j);
        }
    }
    out
}

/// Weight `|s|²` when `R_b A_m = s·1`, i.e. the branch returns every input
/// superposition unchanged up to the factor `s`.
fn conclusive_weight(rb: &[[C64; 2]; 2], a: &DenseOperator) -> Option<f64> {
    let m = |i: usize, j: usize| rb[i][0] * a.get(0, j) + rb[i][1] * a.get(1, j);
    let (m00, m01, m10, m11) = (m(0, 0), m(0, 1), m(1, 0), m(1, 1));
    let proportional = m01.norm() <= CONCLUSIVE_TOLERANCE
        && m10.norm() <= CONCLUSIVE_TOLERANCE
        && (m00 - m11).norm() <= CONCLUSIVE_TOLERANCE;
    proportional.then(|| ((m00 + m11) / 2.0).norm_sqr())
}

/// Scores candidate recovery unitaries `[U₀, U₁]` on `ancilla ⊗ reduced data`.
pub fn evaluate_candidate(
    cfg: &OracleConfig,
    part: &Partition,
    candidates: [&DenseOperator; 2],
) -> Result<CandidateEvaluation> {
    for u in candidates {
        if u.rows() != 4 || u.cols() != 4 {
            return Err(Error::DimensionMismatch("recovery candidates must be 4x4".into()));
        }
    }
    let kraus: KrausPair = kraus_pair(cfg, &DataRegister::reduced(part));
    let (p0, p1) = alpha_probabilities(cfg, part);
    let psi0 = [part.xi0.sqrt(), part.xi1.sqrt()];
    let mut witnesses = [TradeoffWitness { m_alpha: 0, eta: 0.0, p: 0.0, ratio: 0.0, branch: None, overlap: 0.0 }; 2];
    for m in 0..2u8 {
        let p = if m == 0 { p0 } else { p1 };
        let a = kraus.get(m);
        // A_m|ψ₀⟩ = √P_m |φ_m⟩
        let a_psi = [a.get(0, 0) * psi0[0], a.get(1, 1) * psi0[1]];
        let mut best: Option<(u8, f64)> = None;
        let mut overlap: f64 = 0.0;
        for b in 0..2u8 {
            let rb = branch_operator(candidates[usize::from(m)], usize::from(b));
            if p > 0.0 {
                let out = [
                    (rb[0][0] * a_psi[0] + rb[0][1] * a_psi[1]) / p.sqrt(),
                    (rb[1][0] * a_psi[0] + rb[1][1] * a_psi[1]) / p.sqrt(),
                ];
                overlap = overlap.max((out[0] * psi0[0] + out[1] * psi0[1]).norm_sqr());
            }
            if let Some(eta) = conclusive_weight(&rb, a) {
                if best.is_none_or(|(_, e)| eta > e) {
                    best = Some((b, eta));
                }
            }
        }
        let eta = best.map_or(0.0, |(_, e)| e);
        witnesses[usize::from(m)] = TradeoffWitness {
            m_alpha: m,
            eta,
            p,
            ratio: if p > 0.0 { eta / p } else { 0.0 },
            branch: best.map(|(b, _)| b),
            overlap,
        };
    }
    // Σ_m P_m · (η_m / P_m); an unobservable outcome contributes nothing.
    let r_candidate = witnesses.iter().filter(|w| w.p > 0.0).map(|w| w.eta).sum();
    Ok(CandidateEvaluation {
        reliability: cfg.reliability,
        xi0: part.xi0,
        witnesses,
        r_candidate,
        bound: 1.0 - cfg.reliability,
    })
}

/// The optimal recovery unitaries scored as a candidate.
pub fn evaluate_optimal(cfg: &OracleConfig, part: &Partition) -> Result<CandidateEvaluation> {
    let setup = RecoverySetup::optimal(cfg, &DataRegister::reduced(part));
    evaluate_candidate(cfg, part, [&setup.u0, &setup.u1])
}

/// Scores `n_samples` pairs of Haar-random recovery unitaries.
pub fn adversarial_bound_sweep<R: Rng + ?Sized>(
    cfg: &OracleConfig,
    part: &Partition,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<CandidateEvaluation>> {
    if n_samples == 0 {
        return Err(Error::Precondition("n_samples must be at least 1".into()));
    }
    (0..n_samples)
        .map(|_| {
            let u0 = haar_unitary(4, rng);
            let u1 = haar_unitary(4, rng);
            evaluate_candidate(cfg, part, [&u0, &u1])
        })
        .collect()
}

/// Summary of an adversarial sweep at one `(L, ξ₀)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub reliability: f64,
    pub xi0: f64,
    pub samples: u64,
    pub bound: f64,
    /// `r_candidate` of the optimal recovery unitaries.
    pub optimal_r: f64,
    pub max_r_candidate: f64,
    /// Candidates above the bound or with a witness outside its limits.
    pub violations: u64,
}

fn check_point(reliability: f64, xi0: f64, samples: usize, rng: &mut TrialRng) -> Result<BoundCheck> {
    let cfg = OracleConfig::new(reliability)?;
    let part = Partition::from_xi0(xi0)?;
    let evals = adversarial_bound_sweep(&cfg, &part, samples, rng)?;
    let violations = evals
        .iter()
        .filter(|e| e.violates() || e.witnesses.iter().any(|w| !w.satisfies_bounds(cfg.lambda_minus)))
        .count();
    Ok(BoundCheck {
        reliability,
        xi0,
        samples: samples as u64,
        bound: 1.0 - reliability,
        optimal_r: evaluate_optimal(&cfg, &part)?.r_candidate,
        max_r_candidate: evals.iter().map(|e| e.r_candidate).fold(0.0, f64::max),
        violations: violations as u64,
    })
}

/// Adversarial sweeps at the given `(L, ξ₀)` points. Point `k` draws its
/// unitaries from `trial_rng(seed, k)`.
pub fn check_bound_at(points: &[(f64, f64)], samples: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    points
        .par_iter()
        .enumerate()
        .map(|(k, &(l, xi0))| check_point(l, xi0, samples, &mut trial_rng(seed, k as u64)))
        .collect()
}

/// Like [`check_bound_at`] at `n_points` points with `L` and `ξ₀` drawn
/// uniformly from `[0, 1)` out of each point's stream.
pub fn check_bound_random(n_points: usize, samples: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    (0..n_points as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k);
            let l = rng.random::<f64>();
            let xi0 = rng.random::<f64>();
            check_point(l, xi0, samples, &mut rng)
        })
        .collect()
}
