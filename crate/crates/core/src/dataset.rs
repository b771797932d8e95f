//! Concepts, input distributions and qRAM initialization of the data register.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevec::{StateVector, C64};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;
/// Relative renormalization above which loading a dataset logs a warning.
pub const RENORMALIZATION_WARN: f64 = 1e-9;

/// How the data register is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One basis state per input string.
    Full,
    /// The two-dimensional span of the class states `|X₀⟩`, `|X₁⟩`.
    #[default]
    Reduced,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Reduced => "reduced",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Mode::Full),
            "reduced" => Ok(Mode::Reduced),
            other => Err(format!("unknown mode '{other}' (expected full or reduced)")),
        }
    }
}

/// A binary concept `c` over `N` inputs together with the distribution `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptDataset {
    labels: Vec<u8>,
    weights: Vec<f64>,
}

impl ConceptDataset {
    /// Weights must already sum to one (within 1e-12).
    pub fn new(labels: Vec<u8>, weights: Vec<f64>) -> Result<Self> {
        Self::validate(&labels, &weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidDataset(format!("weights sum to {sum}, not 1")));
        }
        Ok(ConceptDataset { labels, weights })
    }

    /// Rescales positive-sum weights to a distribution. Returns the dataset and
    /// the relative size of the correction `|sum - 1|`.
    pub fn normalized(labels: Vec<u8>, weights: Vec<f64>) -> Result<(Self, f64)> {
        Self::validate(&labels, &weights)?;
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::InvalidDataset(format!("weights sum to {sum}")));
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();
        Ok((ConceptDataset { labels, weights }, (sum - 1.0).abs()))
    }

    fn validate(labels: &[u8], weights: &[f64]) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::InvalidDataset("dataset has no inputs".into()));
        }
        if labels.len() != weights.len() {
            return Err(Error::InvalidDataset(format!("{} labels but {} weights", labels.len(), weights.len())));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::InvalidDataset(format!("label {} at index {i} is not 0 or 1", labels[i])));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDataset(format!("weight {} at index {i}", weights[i])));
        }
        Ok(())
    }

    /// `2^n_bits` inputs; the first half labelled 0 carries total weight `xi0`
    /// spread uniformly, the second half labelled 1 carries `1 - xi0`.
    pub fn from_class_weight(xi0: f64, n_bits: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi0) {
            return Err(Error::Domain { name: "xi0", value: xi0, range: "[0, 1]" });
        }
        if n_bits == 0 || n_bits > 24 {
            return Err(Error::InvalidDataset(format!("n_bits = {n_bits} outside 1..=24")));
        }
        let n = 1usize << n_bits;
        let half = n / 2;
        let labels = (0..n).map(|i| u8::from(i >= half)).collect();
        let weights =
            (0..n).map(|i| if i < half { xi0 / half as f64 } else { (1.0 - xi0) / half as f64 }).collect::<Vec<_>>();
        // Renormalize away the rounding of the per-item split.
        Ok(Self::normalized(labels, weights)?.0)
    }

    /// Parses `index,label,weight` rows after a header line. Every index in
    /// `0..N` must appear exactly once. Weights are rescaled to sum to one.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        if lines.next().is_none() {
            return Err(Error::InvalidDataset("empty dataset file".into()));
        }
        let mut rows: Vec<(usize, u8, f64)> = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |what: &str| Error::InvalidDataset(format!("line {}: {what}", lineno + 1));
            if fields.len() != 3 {
                return Err(bad("expected index,label,weight"));
            }
            let index = fields[0].parse::<usize>().map_err(|_| bad("bad index"))?;
            let label = fields[1].parse::<u8>().map_err(|_| bad("bad label"))?;
            let weight = fields[2].parse::<f64>().map_err(|_| bad("bad weight"))?;
            rows.push((index, label, weight));
        }
        if rows.is_empty() {
            return Err(Error::InvalidDataset("no data rows".into()));
        }
        let n = rows.len();
        let mut labels = vec![None; n];
        let mut weights = vec![0.0; n];
        for (index, label, weight) in rows {
            if index >= n {
                return Err(Error::InvalidDataset(format!("index {index} out of range 0..{n}")));
            }
            if labels[index].replace(label).is_some() {
                return Err(Error::InvalidDataset(format!("duplicate index {index}")));
            }
            weights[index] = weight;
        }
        let labels = labels.into_iter().map(|l| l.expect("all indices present")).collect();
        let (ds, correction) = Self::normalized(labels, weights)?;
        if correction > RENORMALIZATION_WARN {
            log::warn!("dataset weights renormalized (relative correction {correction:.3e})");
        }
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::InvalidDataset(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Bits needed to address every input (at least one).
    pub fn n_bits(&self) -> u32 {
        (usize::BITS - (self.len() - 1).leading_zeros()).max(1)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }
}

/// Class split `X₀ / X₁` with class weights `ξ₀, ξ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub xi0: f64,
    pub xi1: f64,
    pub members0: Vec<usize>,
    pub members1: Vec<usize>,
}

impl Partition {
    /// Partition of the two-dimensional effective problem with `ξ₀ = xi0`.
    pub fn from_xi0(xi0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi0) {
            return Err(Error::Domain { name: "xi0", value: xi0, range: "[0, 1]" });
        }
        Ok(Partition { xi0, xi1: 1.0 - xi0, members0: vec![0], members1: vec![1] })
    }

    pub fn xi(&self, class: u8) -> f64 {
        if class == 0 {
            self.xi0
        } else {
            self.xi1
        }
    }
}

pub fn partition(ds: &ConceptDataset) -> Partition {
    let mut part = Partition { xi0: 0.0, xi1: 0.0, members0: Vec::new(), members1: Vec::new() };
    for (i, (&label, &w)) in ds.labels.iter().zip(&ds.weights).enumerate() {
        if label == 0 {
            part.xi0 += w;
            part.members0.push(i);
        } else {
            part.xi1 += w;
            part.members1.push(i);
        }
    }
    part
}

/// Counts initializations of the input superposition.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct QramCounter {
    queries: u64,
}

impl QramCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    fn record(&mut self) {
        self.queries += 1;
    }
}

/// The data register as seen by the oracle and the recovery unitaries: its
/// dimension, the class label of each basis index and the class states.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRegister {
    mode: Mode,
    labels: Vec<u8>,
    amplitudes: Vec<f64>,
    class_states: [Vec<f64>; 2],
}

impl DataRegister {
    pub fn new(ds: &ConceptDataset, mode: Mode) -> Self {
        match mode {
            Mode::Reduced => Self::reduced(&partition(ds)),
            Mode::Full => {
                let part = partition(ds);
                let amplitudes: Vec<f64> = ds.weights.iter().map(|w| w.sqrt()).collect();
                let class_state = |class: u8| -> Vec<f64> {
                    let xi = part.xi(class);
                    ds.labels
                        .iter()
                        .zip(&ds.weights)
                        .map(|(&l, &w)| if l == class && xi > 0.0 { (w / xi).sqrt() } else { 0.0 })
                        .collect()
                };
                DataRegister {
                    mode,
                    labels: ds.labels.clone(),
                    amplitudes,
                    class_states: [class_state(0), class_state(1)],
                }
            }
        }
    }

    /// Two-dimensional register with `|X₀⟩ = |0⟩`, `|X₁⟩ = |1⟩`.
    pub fn reduced(part: &Partition) -> Self {
        DataRegister {
            mode: Mode::Reduced,
            labels: vec![0, 1],
            amplitudes: vec![part.xi0.sqrt(), part.xi1.sqrt()],
            class_states: [vec![1.0, 0.0], vec![0.0, 1.0]],
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// `|X_class⟩`; the zero vector when the class carries no weight.
    pub fn class_state(&self, class: u8) -> &[f64] {
        &self.class_states[usize::from(class)]
    }

    pub fn class_state_vector(&self, class: u8) -> Result<StateVector> {
        let amps = self.class_state(class).iter().map(|&a| C64::new(a, 0.0)).collect();
        StateVector::normalized(vec![self.dim()], amps)
    }

    /// Reference copy of `|ψ₀⟩` for verification. Does not count as a qRAM query.
    pub fn reference_state(&self) -> StateVector {
        let amps = self.amplitudes.iter().map(|&a| C64::new(a, 0.0)).collect();
        StateVector::normalized(vec![self.dim()], amps).expect("distribution has unit mass")
    }
}

/// Prepares `|ψ₀⟩` on a fresh data register and records one qRAM query.
pub fn qram_init(ds: &ConceptDataset, counter: &mut QramCounter, mode: Mode) -> Result<StateVector> {
    qram_init_register(&DataRegister::new(ds, mode), counter)
}

pub fn qram_init_register(register: &DataRegister, counter: &mut QramCounter) -> Result<StateVector> {
    if register.amplitudes.iter().all(|&a| a == 0.0) {
        return Err(Error::InvalidDataset("all weights are zero".into()));
    }
    let state = register.reference_state();
    counter.record();
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_symmetric_partition() {
        let ds = ConceptDataset::new(vec![0, 0, 1, 1], vec![0.25; 4]).unwrap();
        let p = partition(&ds);
        assert_abs_diff_eq!(p.xi0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.xi1, 0.5, epsilon = 1e-15);
        assert_eq!(p.members0, vec![0, 1]);
        assert_eq!(p.members1, vec![2, 3]);
    }

    #[test]
    fn weighted_partition() {
        let ds = ConceptDataset::new(vec![0, 0, 1, 1], vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let p = partition(&ds);
        assert_abs_diff_eq!(p.xi0, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(p.xi1, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_partition() {
        let ds = ConceptDataset::new(vec![0, 0, 0], vec![0.5, 0.25, 0.25]).unwrap();
        let p = partition(&ds);
        assert_eq!(p.xi0, 1.0);
        assert_eq!(p.xi1, 0.0);
        assert!(p.members1.is_empty());
    }

    #[test]
    fn reduced_init() {
        let ds = ConceptDataset::new(vec![0, 1], vec![0.7, 0.3]).unwrap();
        let mut counter = QramCounter::new();
        let s = qram_init(&ds, &mut counter, Mode::Reduced).unwrap();
        assert_abs_diff_eq!(s.amps()[0].re, 0.7f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps()[1].re, 0.3f64.sqrt(), epsilon = 1e-15);
        assert_eq!(counter.queries(), 1);
    }

    #[test]
    fn full_init_uniform() {
        let ds = ConceptDataset::new(vec![0, 1, 0, 1], vec![0.25; 4]).unwrap();
        let mut counter = QramCounter::new();
        let s = qram_init(&ds, &mut counter, Mode::Full).unwrap();
        assert_eq!(s.dims(), &[4]);
        for a in s.amps() {
            assert_abs_diff_eq!(a.re, 0.5, epsilon = 1e-15);
        }
        qram_init(&ds, &mut counter, Mode::Full).unwrap();
        assert_eq!(counter.queries(), 2);
    }

    #[test]
    fn psi0_decomposes_into_class_states() {
        let ds = ConceptDataset::new(vec![0, 1, 0, 1], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let reg = DataRegister::new(&ds, Mode::Full);
        let part = partition(&ds);
        let psi0 = reg.reference_state();
        for i in 0..4 {
            let recomposed = part.xi0.sqrt() * reg.class_state(0)[i] + part.xi1.sqrt() * reg.class_state(1)[i];
            assert_abs_diff_eq!(psi0.amps()[i].re, recomposed, epsilon = 1e-15);
        }
    }

    #[test]
    fn constructor_errors() {
        assert!(ConceptDataset::new(vec![], vec![]).is_err());
        assert!(ConceptDataset::new(vec![0, 2], vec![0.5, 0.5]).is_err());
        assert!(ConceptDataset::new(vec![0, 1], vec![0.5, 0.6]).is_err());
        assert!(ConceptDataset::new(vec![0, 1], vec![-0.5, 1.5]).is_err());
        assert!(ConceptDataset::normalized(vec![0, 1], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn parse_file_format() {
        let ds = ConceptDataset::parse("index,label,weight\n2,1,2\n0,0,4\n1,0,3\n3,1,1\n").unwrap();
        assert_eq!(ds.labels(), &[0, 0, 1, 1]);
        assert_abs_diff_eq!(ds.weights()[0], 0.4, epsilon = 1e-15);
        assert_eq!(ds.n_bits(), 2);
        assert!(ConceptDataset::parse("index,label,weight\n0,0,1\n0,1,1\n").is_err());
        assert!(ConceptDataset::parse("index,label,weight\n0,0,1\n5,1,1\n").is_err());
        assert!(ConceptDataset::parse("index,label,weight\n0,0,0\n1,1,0\n").is_err());
        assert!(ConceptDataset::parse("index,label,weight\n0,0\n").is_err());
        assert!(ConceptDataset::parse("").is_err());
    }

    #[test]
    fn class_weight_builder() {
        let ds = ConceptDataset::from_class_weight(0.7, 3).unwrap();
        assert_eq!(ds.len(), 8);
        let p = partition(&ds);
        assert_abs_diff_eq!(p.xi0, 0.7, epsilon = 1e-12);
        assert!(ConceptDataset::from_class_weight(1.2, 2).is_err());
    }

    #[test]
    fn n_bits_rounds_up() {
        let ds = ConceptDataset::new(vec![0; 5], vec![0.2; 5]).unwrap();
        assert_eq!(ds.n_bits(), 3);
        let ds = ConceptDataset::new(vec![0], vec![1.0]).unwrap();
        assert_eq!(ds.n_bits(), 1);
    }
}
