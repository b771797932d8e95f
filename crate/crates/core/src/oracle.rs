//! The unreliable learning oracle.
//!
//! For each class `τ` the oracle answers `|c=τ⟩` with amplitude `√λ₊` and the
//! wrong label with amplitude `√λ₋`, where `λ± = (1 ± L)/2`:
//!
//! ```text
//! |X_τ⟩|0_α⟩ → |X_τ⟩ (√λ₊ |τ⟩ + √λ₋ |τ⊕1⟩)
//! ```
//!
//! The operator acts on `answer ⊗ data` and is block diagonal in the data
//! basis, so the same construction serves the full and reduced registers.

use serde::{Deserialize, Serialize};

use crate::dataset::DataRegister;
use crate::error::{Error, Result};
use crate::statevec::{DenseOperator, SimConfig, StateVector, C64};

/// Register layout of the state the oracle acts on.
pub const ANSWER_REGISTER: usize = 0;
pub const DATA_REGISTER: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub reliability: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

impl OracleConfig {
    pub fn new(reliability: f64) -> Result<Self> {
        let (lambda_plus, lambda_minus) = lambdas(reliability)?;
        Ok(OracleConfig { reliability, lambda_plus, lambda_minus })
    }
}

/// `((1+L)/2, (1-L)/2)`.
pub fn lambdas(reliability: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&reliability) {
        return Err(Error::Domain { name: "reliability", value: reliability, range: "[0, 1]" });
    }
    Ok(((1.0 + reliability) / 2.0, (1.0 - reliability) / 2.0))
}

/// Unitary on `answer ⊗ data` (dimension `2·dim`). The `|1_α⟩` input column
/// is the answer-flipped mirror `√λ₊|τ⊕1⟩ − √λ₋|τ⟩`.
pub fn build_oracle(cfg: &OracleConfig, register: &DataRegister) -> DenseOperator {
    let d = register.dim();
    let plus = cfg.lambda_plus.sqrt();
    let minus = cfg.lambda_minus.sqrt();
    let labels = register.labels();
    DenseOperator::from_fn(2 * d, 2 * d, |row, col| {
        let (a_out, x_out) = (row / d, row % d);
        let (a_in, x_in) = (col / d, col % d);
        if x_out != x_in {
            return C64::new(0.0, 0.0);
        }
        let correct = usize::from(labels[x_in]);
        let value = match (a_in, a_out == correct) {
            (0, true) => plus,
            (0, false) => minus,
            (_, true) => -minus,
            (_, false) => plus,
        };
        C64::new(value, 0.0)
    })
}

/// Oracle calls made during one run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OracleCounter {
    queries: u64,
}

impl OracleCounter {
    pub fn queries(&self) -> u64 {
        self.queries
    }
}

/// Queries the oracle on `|0_α⟩ ⊗ data`.
pub fn apply_oracle(state: &StateVector, oracle: &DenseOperator, counter: &mut OracleCounter) -> Result<StateVector> {
    if state.num_registers() != 2 || state.dims()[ANSWER_REGISTER] != 2 {
        return Err(Error::Precondition(format!("oracle expects [answer(2), data] registers, got {:?}", state.dims())));
    }
    let answer = state.born_probabilities(ANSWER_REGISTER)?;
    if answer[1] > SimConfig::global().tolerance {
        return Err(Error::Precondition("answer register is not |0⟩".into()));
    }
    let out = state.apply(oracle, &[ANSWER_REGISTER, DATA_REGISTER])?;
    counter.queries += 1;
    Ok(out)
}

/// `|0_α⟩ ⊗ data`, ready for [`apply_oracle`].
pub fn with_fresh_answer(data: &StateVector) -> Result<StateVector> {
    StateVector::basis(2, 0)?.tensor(data)
}
