//! The recycling learning loop and its Monte Carlo harness.
//!
//! A run prepares `|ψ₀⟩` once, then repeats oracle → `M_α` → `Û_{m_α}` → `M_β`
//! on fresh answer and ancilla qubits. A consistent cycle (`m_β = m_α`)
//! certifies the answer and ends the run; an inconsistent one hands back
//! `|ψ₀⟩` for the next cycle.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{partition, qram_init_register, ConceptDataset, DataRegister, Mode, Partition, QramCounter};
use crate::error::{Error, Result};
use crate::oracle::{apply_oracle, build_oracle, with_fresh_answer, OracleConfig, OracleCounter};
use crate::postproc::{
    alpha_probabilities, apply_recovery, consistency_probabilities, measure_alpha, measure_beta, BetaKind,
    RecoverySetup, ANCILLA_REGISTER,
};
use crate::statevec::{trial_rng, DenseOperator, StateVector};

pub const DEFAULT_MAX_CYCLES: u64 = 10_000;
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub reliability: f64,
    pub dataset: ConceptDataset,
    pub mode: Mode,
    pub max_cycles: u64,
    pub trials: u64,
    pub master_seed: u64,
}

impl ProtocolConfig {
    pub fn new(reliability: f64, dataset: ConceptDataset) -> Self {
        ProtocolConfig {
            reliability,
            dataset,
            mode: Mode::Reduced,
            max_cycles: DEFAULT_MAX_CYCLES,
            trials: 1,
            master_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        OracleConfig::new(self.reliability)?;
        if self.max_cycles == 0 {
            return Err(Error::Precondition("max_cycles must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Precondition("trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Operators and class data shared by every trial of one configuration.
#[derive(Debug, Clone)]
pub struct LearningSetup {
    pub oracle_cfg: OracleConfig,
    pub partition: Partition,
    pub register: DataRegister,
    pub oracle: DenseOperator,
    pub recovery: RecoverySetup,
}

impl LearningSetup {
    pub fn new(dataset: &ConceptDataset, reliability: f64, mode: Mode) -> Result<Self> {
        let oracle_cfg = OracleConfig::new(reliability)?;
        let register = DataRegister::new(dataset, mode);
        Ok(Self::assemble(oracle_cfg, partition(dataset), register))
    }

    /// Two-dimensional effective problem with class weight `xi0`.
    pub fn reduced(xi0: f64, reliability: f64) -> Result<Self> {
        let oracle_cfg = OracleConfig::new(reliability)?;
        let part = Partition::from_xi0(xi0)?;
        let register = DataRegister::reduced(&part);
        Ok(Self::assemble(oracle_cfg, part, register))
    }

    fn assemble(oracle_cfg: OracleConfig, partition: Partition, register: DataRegister) -> Self {
        if oracle_cfg.reliability == 0.0 {
            log::warn!("reliability 0: the oracle carries no information and runs never succeed");
        }
        let oracle = build_oracle(&oracle_cfg, &register);
        let recovery = RecoverySetup::optimal(&oracle_cfg, &register);
        LearningSetup { oracle_cfg, partition, register, oracle, recovery }
    }

    /// Replaces the recovery unitaries, e.g. to study a non-optimal angle.
    pub fn with_recovery(mut self, recovery: RecoverySetup) -> Self {
        self.recovery = recovery;
        self
    }

    pub fn reference_state(&self) -> StateVector {
        self.register.reference_state()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleOutcome {
    pub m_alpha: u8,
    pub m_beta: u8,
    pub consistent: bool,
}

impl CycleOutcome {
    pub fn kind(&self) -> BetaKind {
        if self.consistent {
            BetaKind::ExtractedAnswer(self.m_alpha)
        } else {
            BetaKind::RecoveredInput
        }
    }
}

/// One pass of oracle, `M_α`, `Û_{m_α}` and `M_β` on the data register `data`.
/// Returns the outcome and the data register afterwards: `|X_{m_α}⟩` when
/// consistent, the recovered input otherwise.
pub fn run_cycle<R: Rng + ?Sized>(
    setup: &LearningSetup,
    data: &StateVector,
    oracle_counter: &mut OracleCounter,
    rng: &mut R,
) -> Result<(CycleOutcome, StateVector)> {
    let answered = apply_oracle(&with_fresh_answer(data)?, &setup.oracle, oracle_counter)?;
    let alpha = measure_alpha(&answered, rng)?;
    let recovered = apply_recovery(&alpha.phi, &setup.recovery, alpha.m_alpha)?;
    let beta = measure_beta(&recovered, alpha.m_alpha, rng)?;
    let outcome = CycleOutcome { m_alpha: alpha.m_alpha, m_beta: beta.m_beta, consistent: beta.consistent };
    Ok((outcome, beta.post))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cycles: u64,
    pub qram_queries: u64,
    pub oracle_queries: u64,
    pub success: bool,
    pub answer: Option<u8>,
    pub outcome_trace: Vec<CycleOutcome>,
    /// Input index read out of the extracted class state, with its label.
    pub sampled_index: Option<(usize, u8)>,
}

impl LearningSetup {
    /// Cycles a single qRAM preparation until an answer is certified or
    /// `max_cycles` is reached. No re-initialization happens on failure.
    pub fn run_until_success<R: Rng + ?Sized>(&self, max_cycles: u64, rng: &mut R) -> Result<RunRecord> {
        if max_cycles == 0 {
            return Err(Error::Precondition("max_cycles must be at least 1".into()));
        }
        let mut qram = QramCounter::new();
        let mut oracle = OracleCounter::default();
        let mut data = qram_init_register(&self.register, &mut qram)?;
        let mut trace = Vec::new();
        while (trace.len() as u64) < max_cycles {
            let (outcome, post) = run_cycle(self, &data, &mut oracle, rng)?;
            trace.push(outcome);
            if outcome.consistent {
                let index = post.measure(0, rng)?.outcome;
                let label = self.register.labels()[index];
                return Ok(RunRecord {
                    cycles: trace.len() as u64,
                    qram_queries: qram.queries(),
                    oracle_queries: oracle.queries(),
                    success: true,
                    answer: Some(outcome.m_alpha),
                    outcome_trace: trace,
                    sampled_index: Some((index, label)),
                });
            }
            data = post;
        }
        Ok(RunRecord {
            cycles: trace.len() as u64,
            qram_queries: qram.queries(),
            oracle_queries: oracle.queries(),
            success: false,
            answer: None,
            outcome_trace: trace,
            sampled_index: None,
        })
    }
}

pub fn run_until_success<R: Rng + ?Sized>(cfg: &ProtocolConfig, rng: &mut R) -> Result<RunRecord> {
    cfg.validate()?;
    LearningSetup::new(&cfg.dataset, cfg.reliability, cfg.mode)?.run_until_success(cfg.max_cycles, rng)
}

/// A Monte Carlo estimate with its standard error. `se` is `None` when the
/// sample is too small to estimate one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: Option<f64>,
    pub samples: u64,
}

impl Estimate {
    fn proportion(hits: u64, n: u64) -> Option<Self> {
        if n == 0 {
            return None;
        }
        let p = hits as f64 / n as f64;
        let se = (n >= 2).then(|| (p * (1.0 - p) / n as f64).sqrt());
        Some(Estimate { value: p, se, samples: n })
    }

    fn mean(sum: u128, sum_sq: u128, n: u64) -> Option<Self> {
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = sum as f64 / nf;
        let se = (n >= 2).then(|| {
            let var = ((sum_sq as f64 - nf * mean * mean) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        });
        Some(Estimate { value: mean, se, samples: n })
    }

    /// `|value - target| <= max(floor, k·se)`; without a standard error only
    /// the floor applies.
    pub fn within(&self, target: f64, k: f64, floor: f64) -> bool {
        let radius = self.se.map_or(floor, |se| (k * se).max(floor));
        (self.value - target).abs() <= radius
    }
}

/// Integer tallies over trials; merging is exact and order independent.
#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    trials: u64,
    first_alpha: [u64; 2],
    first_consistent: [u64; 2],
    successes: u64,
    cycles_sum: u128,
    cycles_sq_sum: u128,
    qram_total: u64,
    qram_success_total: u64,
    qram_success_max: u64,
    misclassified: u64,
    oracle_mismatch: u64,
}

impl Tally {
    fn record(&mut self, run: &RunRecord) {
        self.trials += 1;
        if let Some(first) = run.outcome_trace.first() {
            let m = usize::from(first.m_alpha);
            self.first_alpha[m] += 1;
            self.first_consistent[m] += u64::from(first.consistent);
        }
        self.qram_total += run.qram_queries;
        if run.oracle_queries != run.cycles {
            self.oracle_mismatch += 1;
        }
        if run.success {
            self.successes += 1;
            let c = u128::from(run.cycles);
            self.cycles_sum += c;
            self.cycles_sq_sum += c * c;
            self.qram_success_total += run.qram_queries;
            self.qram_success_max = self.qram_success_max.max(run.qram_queries);
            if let (Some(answer), Some((_, label))) = (run.answer, run.sampled_index) {
                self.misclassified += u64::from(label != answer);
            }
        }
    }

    fn merge(mut self, other: &Tally) -> Tally {
        self.trials += other.trials;
        for m in 0..2 {
            self.first_alpha[m] += other.first_alpha[m];
            self.first_consistent[m] += other.first_consistent[m];
        }
        self.successes += other.successes;
        self.cycles_sum += other.cycles_sum;
        self.cycles_sq_sum += other.cycles_sq_sum;
        self.qram_total += other.qram_total;
        self.qram_success_total += other.qram_success_total;
        self.qram_success_max = self.qram_success_max.max(other.qram_success_max);
        self.misclassified += other.misclassified;
        self.oracle_mismatch += other.oracle_mismatch;
        self
    }
}

/// Aggregated Monte Carlo estimates with their closed-form counterparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub reliability: f64,
    pub xi0: f64,
    pub mode: Mode,
    pub trials: u64,
    pub max_cycles: u64,
    pub master_seed: u64,

    pub emp_p0: Estimate,
    pub analytic_p0: f64,
    /// First-cycle `Q_{β=α}` per answer outcome.
    pub emp_q_consistent: [Option<Estimate>; 2],
    /// First-cycle `Q_{β≠α}` per answer outcome.
    pub emp_q_inconsistent: [Option<Estimate>; 2],
    pub analytic_q_consistent: [Option<f64>; 2],
    pub analytic_q_inconsistent: [Option<f64>; 2],
    /// Stratified reusability `Σ_m P̂_m Q̂_{β≠α|m}` from first cycles.
    pub emp_r: Estimate,
    pub analytic_r: f64,
    /// Every answer stratum with nonzero analytic probability was observed.
    pub strata_populated: bool,

    pub emp_cycle_success: Estimate,
    pub emp_success_rate: Estimate,
    pub analytic_success_rate: f64,
    pub mean_cycles: Option<Estimate>,
    pub analytic_mean_cycles: Option<f64>,
    pub mean_reuses: Option<Estimate>,
    pub analytic_mean_reuses: Option<f64>,

    pub qram_queries_total: u64,
    pub qram_queries_per_success: Option<f64>,
    pub max_qram_queries_per_success: u64,
    pub misclassified: u64,
    pub oracle_count_mismatches: u64,
}

/// Mean of a geometric variable with success probability `p`, conditioned on
/// success within `max` trials.
fn truncated_geometric_mean(p: f64, max: u64) -> Option<f64> {
    if p <= 0.0 {
        return None;
    }
    if p >= 1.0 {
        return Some(1.0);
    }
    let q = 1.0 - p;
    let m = max as f64;
    let qm = q.powf(m);
    let within = 1.0 - qm;
    if within <= 0.0 {
        return None;
    }
    Some((1.0 - (m + 1.0) * qm + m * qm * q) / p / within)
}

/// Runs `cfg.trials` independent recycling runs. Trial `i` draws from
/// `trial_rng(master_seed, i)`, so results do not depend on scheduling.
pub fn monte_carlo(cfg: &ProtocolConfig) -> Result<SweepStats> {
    cfg.validate()?;
    let setup = LearningSetup::new(&cfg.dataset, cfg.reliability, cfg.mode)?;
    monte_carlo_with(&setup, cfg.trials, cfg.max_cycles, cfg.master_seed, cfg.mode)
}

pub fn monte_carlo_with(
    setup: &LearningSetup,
    trials: u64,
    max_cycles: u64,
    master_seed: u64,
    mode: Mode,
) -> Result<SweepStats> {
    if trials == 0 || max_cycles == 0 {
        return Err(Error::Precondition("trials and max_cycles must be at least 1".into()));
    }
    let chunks = trials.div_ceil(CHUNK);
    let partials: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut tally = Tally::default();
            for trial in chunk * CHUNK..((chunk + 1) * CHUNK).min(trials) {
                let mut rng = trial_rng(master_seed, trial);
                let run = setup.run_until_success(max_cycles, &mut rng)?;
                tally.record(&run);
            }
            Ok(tally)
        })
        .collect::<Result<_>>()?;
    let tally = partials.iter().fold(Tally::default(), |acc, t| acc.merge(t));
    Ok(summarize(setup, &tally, max_cycles, master_seed, mode))
}

fn summarize(setup: &LearningSetup, t: &Tally, max_cycles: u64, master_seed: u64, mode: Mode) -> SweepStats {
    let cfg = &setup.oracle_cfg;
    let part = &setup.partition;
    let (p0, p1) = alpha_probabilities(cfg, part);
    let n = t.trials;

    let emp_p0 = Estimate::proportion(t.first_alpha[0], n).expect("trials >= 1");
    let q_cons = |m: usize| Estimate::proportion(t.first_consistent[m], t.first_alpha[m]);
    let q_incons = |m: usize| Estimate::proportion(t.first_alpha[m] - t.first_consistent[m], t.first_alpha[m]);
    let analytic = |m: u8| consistency_probabilities(cfg, part, m);

    let inconsistent = n - t.first_consistent[0] - t.first_consistent[1];
    let emp_r = Estimate::proportion(inconsistent, n).expect("trials >= 1");
    let analytic_r = [p0, p1].iter().zip(0u8..).filter_map(|(&p, m)| analytic(m).map(|(_, qi)| p * qi)).sum();
    let strata_populated = [p0, p1].iter().zip(&t.first_alpha).all(|(&p, &seen)| p == 0.0 || seen > 0);

    let emp_cycle_success = Estimate::proportion(t.first_consistent[0] + t.first_consistent[1], n).expect("n >= 1");
    let l = cfg.reliability;
    let mean_cycles = Estimate::mean(t.cycles_sum, t.cycles_sq_sum, t.successes);
    let analytic_mean_cycles = truncated_geometric_mean(l, max_cycles);

    SweepStats {
        reliability: l,
        xi0: part.xi0,
        mode,
        trials: n,
        max_cycles,
        master_seed,
        emp_p0,
        analytic_p0: p0,
        emp_q_consistent: [q_cons(0), q_cons(1)],
        emp_q_inconsistent: [q_incons(0), q_incons(1)],
        analytic_q_consistent: [analytic(0).map(|q| q.0), analytic(1).map(|q| q.0)],
        analytic_q_inconsistent: [analytic(0).map(|q| q.1), analytic(1).map(|q| q.1)],
        emp_r,
        analytic_r,
        strata_populated,
        emp_cycle_success,
        emp_success_rate: Estimate::proportion(t.successes, n).expect("n >= 1"),
        analytic_success_rate: 1.0 - (1.0 - l).powf(max_cycles as f64),
        mean_cycles,
        analytic_mean_cycles,
        mean_reuses: mean_cycles.map(|e| Estimate { value: e.value - 1.0, ..e }),
        analytic_mean_reuses: analytic_mean_cycles.map(|m| m - 1.0),
        qram_queries_total: t.qram_total,
        qram_queries_per_success: (t.successes > 0).then(|| t.qram_success_total as f64 / t.successes as f64),
        max_qram_queries_per_success: t.qram_success_max,
        misclassified: t.misclassified,
        oracle_count_mismatches: t.oracle_mismatch,
    }
}

/// Empirical reusability `Σ_m P̂_m Q̂_{β≠α|m}` with its standard error.
pub fn estimate_reusability(cfg: &ProtocolConfig) -> Result<Estimate> {
    let stats = monte_carlo(cfg)?;
    let mut r = stats.emp_r;
    if !stats.strata_populated {
        r.se = None;
    }
    Ok(r)
}

/// Exact branch probabilities of one cycle, computed by postselection on the
/// simulated states instead of sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleProbabilities {
    pub p: [f64; 2],
    pub q_consistent: [Option<f64>; 2],
    pub q_inconsistent: [Option<f64>; 2],
    /// Joint probability of an inconsistent cycle.
    pub reusability: f64,
    /// Joint probability of a consistent cycle.
    pub success: f64,
    /// Fidelity of the recovered data register to `|ψ₀⟩` per answer outcome;
    /// `None` for a branch below [`NEGLIGIBLE_BRANCH`].
    pub recovered_fidelity: [Option<f64>; 2],
    /// Fidelity of the extracted data register to `|X_m⟩` per answer outcome.
    pub extracted_fidelity: [Option<f64>; 2],
}

/// Branches below this probability are round-off; their fidelities are not reported.
pub const NEGLIGIBLE_BRANCH: f64 = 1e-14;

pub fn analytic_cycle(setup: &LearningSetup) -> Result<CycleProbabilities> {
    let psi0 = setup.reference_state();
    let answered = apply_oracle(&with_fresh_answer(&psi0)?, &setup.oracle, &mut OracleCounter::default())?;
    let p_vec = answered.born_probabilities(0)?;
    let mut out = CycleProbabilities {
        p: [p_vec[0], p_vec[1]],
        q_consistent: [None; 2],
        q_inconsistent: [None; 2],
        reusability: 0.0,
        success: 0.0,
        recovered_fidelity: [None; 2],
        extracted_fidelity: [None; 2],
    };
    for m in 0..2u8 {
        let mi = usize::from(m);
        if p_vec[mi] == 0.0 {
            continue;
        }
        let phi = answered.postselect(0, mi)?.post_state.slice(&[(0, mi)])?;
        let recovered = apply_recovery(&phi, &setup.recovery, m)?;
        let q = recovered.born_probabilities(ANCILLA_REGISTER)?;
        let (qc, qi) = (q[mi], q[1 - mi]);
        out.q_consistent[mi] = Some(qc);
        out.q_inconsistent[mi] = Some(qi);
        out.reusability += p_vec[mi] * qi;
        out.success += p_vec[mi] * qc;
        if qi > NEGLIGIBLE_BRANCH {
            let post = recovered.slice(&[(ANCILLA_REGISTER, 1 - mi)])?;
            out.recovered_fidelity[mi] = Some(post.fidelity(&psi0)?);
        }
        // An empty class has no state; its consistent branch is round-off.
        if let (true, Ok(x)) = (qc > NEGLIGIBLE_BRANCH, setup.register.class_state_vector(m)) {
            let post = recovered.slice(&[(ANCILLA_REGISTER, mi)])?;
            out.extracted_fidelity[mi] = Some(post.fidelity(&x)?);
        }
    }
    Ok(out)
}
