//! Decomposable stochastic error models.
//!
//! Errors live in `P_n × F_2^l`: a phase-free Pauli on the data qubits plus a
//! flip pattern on the measured syndrome bits. A decomposable model is a
//! list of disjoint error sets `N_1..N_m`; set `i` independently contributes
//! at most one of its elements, element `e` with probability `θ^i_e`.
//! Measurement flips are ordinary set elements with trivial data part.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{check_dim, Error, Result};
use crate::pauli::{LogicalClass, Pauli, PauliString, StabilizerCode, Syndrome};

/// Default cap on the number of enumerated assignments.
pub const DEFAULT_BUDGET: u128 = 1 << 24;

const RATE_SLACK: f64 = 1e-12;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub data: PauliString,
    #[serde(with = "bits_string")]
    pub flips: Bits,
}

mod bits_string {
    use super::Bits;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Bits, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Bits, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl ErrorEvent {
    pub fn new(data: PauliString, flips: Bits) -> Self {
        ErrorEvent { data, flips }
    }

    pub fn identity(n: usize, l: usize) -> Self {
        ErrorEvent { data: PauliString::identity(n), flips: Bits::zeros(l) }
    }

    pub fn data_only(data: PauliString, l: usize) -> Self {
        ErrorEvent { data, flips: Bits::zeros(l) }
    }

    pub fn flip_only(n: usize, flips: Bits) -> Self {
        ErrorEvent { data: PauliString::identity(n), flips }
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn l(&self) -> usize {
        self.flips.len()
    }

    pub fn is_identity(&self) -> bool {
        self.data.is_identity() && self.flips.is_zero()
    }

    pub fn mul_assign(&mut self, other: &ErrorEvent) {
        self.data.mul_assign(&other.data);
        self.flips.xor_assign(&other.flips);
    }

    pub fn mul(&self, other: &ErrorEvent) -> Result<ErrorEvent> {
        check_dim(self.n(), other.n())?;
        check_dim(self.l(), other.l())?;
        let mut out = self.clone();
        out.mul_assign(other);
        Ok(out)
    }

    /// `syndrome(data) XOR flips`.
    pub fn observed_syndrome(&self, code: &StabilizerCode) -> Result<Syndrome> {
        check_dim(code.l(), self.l())?;
        let mut s = code.syndrome(&self.data)?;
        s.bits_mut().xor_assign(&self.flips);
        Ok(s)
    }
}

impl fmt::Display for ErrorEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.data, self.flips)
    }
}

impl fmt::Debug for ErrorEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ErrorEvent({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSet {
    elements: Vec<ErrorEvent>,
}

impl ErrorSet {
    pub fn new(elements: Vec<ErrorEvent>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("error set must be non-empty"));
        }
        let mut seen = HashSet::new();
        for e in &elements {
            if e.is_identity() {
                return Err(Error::invalid("error set may not contain the identity"));
            }
            if !seen.insert(e) {
                return Err(Error::invalid(format!("duplicate element {e} in error set")));
            }
        }
        Ok(ErrorSet { elements })
    }

    pub fn elements(&self) -> &[ErrorEvent] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposableModel {
    n: usize,
    l: usize,
    sets: Vec<ErrorSet>,
    rates: Vec<Vec<f64>>,
}

/// Joint statistics of one syndrome from exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct SyndromeMarginals {
    pub probability: f64,
    /// `joint[i][c] = P[X_i = c, S]` with `c = 0` the identity and `c = j + 1`
    /// element `j` of set `i`.
    pub joint: Vec<Vec<f64>>,
}

impl SyndromeMarginals {
    /// `P[X_i = c | S]`, same indexing as `joint`.
    pub fn posterior(&self, set: usize, choice: usize) -> f64 {
        self.joint[set][choice] / self.probability
    }
}

impl DecomposableModel {
    pub fn new(n: usize, l: usize, sets: Vec<ErrorSet>, rates: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(sets.len(), rates.len())?;
        let mut seen: HashSet<&ErrorEvent> = HashSet::new();
        for (i, (set, r)) in sets.iter().zip(&rates).enumerate() {
            check_dim(set.len(), r.len())?;
            for e in set.elements() {
                check_dim(n, e.n())?;
                check_dim(l, e.l())?;
                if !seen.insert(e) {
                    return Err(Error::invalid(format!(
                        "error sets overlap: {e} appears in more than one set (set {i})"
                    )));
                }
            }
            validate_rates(r).map_err(|m| Error::invalid(format!("set {i}: {m}")))?;
        }
        Ok(DecomposableModel { n, l, sets, rates })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn sets(&self) -> &[ErrorSet] {
        &self.sets
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn identity_rate(&self, set: usize) -> f64 {
        1.0 - self.rates[set].iter().sum::<f64>()
    }

    /// `θ^i_c` with `c = 0` for the identity.
    pub fn choice_rate(&self, set: usize, choice: usize) -> f64 {
        if choice == 0 {
            self.identity_rate(set)
        } else {
            self.rates[set][choice - 1]
        }
    }

    pub fn n_params(&self) -> usize {
        self.rates.iter().map(Vec::len).sum()
    }

    /// Flattened `θ`, set-major.
    pub fn params(&self) -> Vec<f64> {
        self.rates.iter().flatten().copied().collect()
    }

    /// Same structure with a new flattened parameter vector.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        check_dim(self.n_params(), params.len())?;
        let mut rates = Vec::with_capacity(self.sets.len());
        let mut offset = 0;
        for set in &self.sets {
            rates.push(params[offset..offset + set.len()].to_vec());
            offset += set.len();
        }
        DecomposableModel::new(self.n, self.l, self.sets.clone(), rates)
    }

    /// `Π_i θ^i_{X_i}` for an assignment choosing `Some(j)` (element `j`) or
    /// `None` (identity) from every set.
    pub fn event_probability(&self, assignment: &[Option<usize>]) -> Result<f64> {
        check_dim(self.sets.len(), assignment.len())?;
        let mut p = 1.0;
        for (i, choice) in assignment.iter().enumerate() {
            p *= match *choice {
                None => self.identity_rate(i),
                Some(j) => *self.rates[i]
                    .get(j)
                    .ok_or_else(|| Error::invalid(format!("set {i} has no element {j}")))?,
            };
        }
        Ok(p)
    }

    pub fn product(&self, assignment: &[Option<usize>]) -> ErrorEvent {
        let mut e = ErrorEvent::identity(self.n, self.l);
        for (set, choice) in self.sets.iter().zip(assignment) {
            if let Some(j) = *choice {
                e.mul_assign(&set.elements[j]);
            }
        }
        e
    }

    pub fn sample_assignment<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Option<usize>> {
        self.rates
            .iter()
            .map(|r| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (j, &p) in r.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Some(j);
                    }
                }
                None
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ErrorEvent {
        let a = self.sample_assignment(rng);
        self.product(&a)
    }

    pub fn assignment_count(&self) -> u128 {
        self.sets.iter().map(|s| s.len() as u128 + 1).product()
    }

    fn check_budget(&self, budget: u128) -> Result<()> {
        let required = self.assignment_count();
        if required > budget {
            return Err(Error::Budget { required, limit: budget });
        }
        Ok(())
    }

    /// Visits every assignment with its probability and product event.
    /// Choices use `0` for the identity and `j + 1` for element `j`.
    pub fn for_each_assignment(
        &self,
        budget: u128,
        mut f: impl FnMut(&[usize], f64, &ErrorEvent),
    ) -> Result<()> {
        self.check_budget(budget)?;
        let m = self.sets.len();
        let mut choice = vec![0usize; m];
        loop {
            let mut p = 1.0;
            let mut e = ErrorEvent::identity(self.n, self.l);
            for (i, &c) in choice.iter().enumerate() {
                p *= self.choice_rate(i, c);
                if c > 0 {
                    e.mul_assign(&self.sets[i].elements[c - 1]);
                }
            }
            f(&choice, p, &e);
            // mixed-radix increment, last set fastest
            let mut i = m;
            loop {
                if i == 0 {
                    return Ok(());
                }
                i -= 1;
                choice[i] += 1;
                if choice[i] <= self.sets[i].len() {
                    break;
                }
                choice[i] = 0;
            }
        }
    }

    /// Exact distribution of the product error `E = Π_i X_i`.
    pub fn total_error_distribution(&self, budget: u128) -> Result<HashMap<ErrorEvent, f64>> {
        let mut out: HashMap<ErrorEvent, f64> = HashMap::new();
        self.for_each_assignment(budget, |_, p, e| {
            if p > 0.0 {
                *out.entry(e.clone()).or_insert(0.0) += p;
            }
        })?;
        Ok(out)
    }

    /// Exact distribution of the observed syndrome `S(data) XOR flips`.
    pub fn syndrome_distribution(
        &self,
        code: &StabilizerCode,
        budget: u128,
    ) -> Result<BTreeMap<Syndrome, f64>> {
        check_dim(self.n, code.n())?;
        check_dim(self.l, code.l())?;
        let mut out = BTreeMap::new();
        self.for_each_assignment(budget, |_, p, e| {
            if p == 0.0 {
                return;
            }
            let mut s = code.syndrome_unchecked(&e.data);
            s.bits_mut().xor_assign(&e.flips);
            *out.entry(s).or_insert(0.0) += p;
        })?;
        Ok(out)
    }

    /// `P[S]` and `P[X_i = c, S]` for every syndrome with non-zero mass.
    pub fn syndrome_marginals(
        &self,
        code: &StabilizerCode,
        budget: u128,
    ) -> Result<BTreeMap<Syndrome, SyndromeMarginals>> {
        check_dim(self.n, code.n())?;
        check_dim(self.l, code.l())?;
        let shape: Vec<usize> = self.sets.iter().map(|s| s.len() + 1).collect();
        let mut out: BTreeMap<Syndrome, SyndromeMarginals> = BTreeMap::new();
        self.for_each_assignment(budget, |choice, p, e| {
            if p == 0.0 {
                return;
            }
            let mut s = code.syndrome_unchecked(&e.data);
            s.bits_mut().xor_assign(&e.flips);
            let entry = out.entry(s).or_insert_with(|| SyndromeMarginals {
                probability: 0.0,
                joint: shape.iter().map(|&k| vec![0.0; k]).collect(),
            });
            entry.probability += p;
            for (i, &c) in choice.iter().enumerate() {
                entry.joint[i][c] += p;
            }
        })?;
        Ok(out)
    }
}

fn validate_rates(r: &[f64]) -> std::result::Result<(), String> {
    for &p in r {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(format!("rate {p} outside [0, 1]"));
        }
    }
    let total: f64 = r.iter().sum();
    if total > 1.0 + RATE_SLACK {
        return Err(format!("rates sum to {total} > 1"));
    }
    Ok(())
}

/// Independent single-qubit Pauli channel: `(θ_X, θ_Y, θ_Z)` per qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleQubitPauliRates {
    rates: Vec<[f64; 3]>,
}

impl SingleQubitPauliRates {
    pub fn new(rates: Vec<[f64; 3]>) -> Result<Self> {
        for (q, r) in rates.iter().enumerate() {
            validate_rates(r).map_err(|m| Error::invalid(format!("qubit {q}: {m}")))?;
        }
        Ok(SingleQubitPauliRates { rates })
    }

    /// `θ_X = θ_Y = θ_Z = p` on every qubit.
    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        SingleQubitPauliRates::new(vec![[p; 3]; n])
    }

    pub fn n(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[[f64; 3]] {
        &self.rates
    }

    /// Probabilities indexed by [`Pauli::index`].
    pub fn distribution(&self, qubit: usize) -> [f64; 4] {
        let [x, y, z] = self.rates[qubit];
        [1.0 - x - y - z, x, y, z]
    }

    pub fn rate(&self, qubit: usize, p: Pauli) -> f64 {
        self.distribution(qubit)[p.index()]
    }

    pub fn sample_qubit<R: Rng + ?Sized>(&self, qubit: usize, rng: &mut R) -> Pauli {
        let [x, y, z] = self.rates[qubit];
        let u: f64 = rng.random();
        if u < x {
            Pauli::X
        } else if u < x + y {
            Pauli::Y
        } else if u < x + y + z {
            Pauli::Z
        } else {
            Pauli::I
        }
    }

    /// Sets `N_i = {X^(i), Y^(i), Z^(i)}`, with no measurement errors.
    pub fn to_model(&self, l: usize) -> DecomposableModel {
        CodeRates { qubits: self.clone(), flips: None }.to_model(l).expect("validated rates")
    }
}

/// Data-qubit Pauli rates plus optional per-syndrome-bit flip rates (the
/// phenomenological model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRates {
    pub qubits: SingleQubitPauliRates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flips: Option<Vec<f64>>,
}

impl CodeRates {
    pub fn new(qubits: SingleQubitPauliRates, flips: Option<Vec<f64>>) -> Result<Self> {
        if let Some(f) = &flips {
            for &p in f {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!("flip rate {p} outside [0, 1]")));
                }
            }
        }
        Ok(CodeRates { qubits, flips })
    }

    pub fn depolarizing(n: usize, p: f64) -> Result<Self> {
        CodeRates::new(SingleQubitPauliRates::uniform(n, p)?, None)
    }

    pub fn phenomenological(n: usize, l: usize, p: f64, p_m: f64) -> Result<Self> {
        CodeRates::new(SingleQubitPauliRates::uniform(n, p)?, Some(vec![p_m; l]))
    }

    pub fn n(&self) -> usize {
        self.qubits.n()
    }

    pub fn n_params(&self) -> usize {
        3 * self.qubits.n() + self.flips.as_ref().map_or(0, Vec::len)
    }

    /// Qubit-major `(θ^1_X, θ^1_Y, θ^1_Z, θ^2_X, …)` followed by the flip rates.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.qubits.rates.iter().flatten().copied().collect();
        if let Some(f) = &self.flips {
            out.extend_from_slice(f);
        }
        out
    }

    pub fn from_params(&self, params: &[f64]) -> Result<Self> {
        check_dim(self.n_params(), params.len())?;
        let n = self.n();
        let qubits = (0..n).map(|q| [params[3 * q], params[3 * q + 1], params[3 * q + 2]]).collect();
        let flips = self.flips.as_ref().map(|_| params[3 * n..].to_vec());
        CodeRates::new(SingleQubitPauliRates::new(qubits)?, flips)
    }

    pub fn param_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_params());
        for q in 0..self.n() {
            for p in Pauli::NON_IDENTITY {
                out.push(format!("q{}:{}", q + 1, p));
            }
        }
        if let Some(f) = &self.flips {
            out.extend((0..f.len()).map(|b| format!("m{}", b + 1)));
        }
        out
    }

    /// Decomposable form: one set per qubit, then one per syndrome bit.
    pub fn to_model(&self, l: usize) -> Result<DecomposableModel> {
        let n = self.n();
        let mut sets = Vec::new();
        let mut rates = Vec::new();
        for q in 0..n {
            let elems = Pauli::NON_IDENTITY
                .iter()
                .map(|&p| ErrorEvent::data_only(PauliString::single(n, q, p), l))
                .collect();
            sets.push(ErrorSet::new(elems)?);
            rates.push(self.qubits.rates[q].to_vec());
        }
        if let Some(f) = &self.flips {
            check_dim(l, f.len())?;
            for (b, &p) in f.iter().enumerate() {
                let mut flips = Bits::zeros(l);
                flips.set(b, true);
                sets.push(ErrorSet::new(vec![ErrorEvent::flip_only(n, flips)])?);
                rates.push(vec![p]);
            }
        }
        DecomposableModel::new(n, l, sets, rates)
    }

    /// Draws a data error and flip pattern.
    pub fn sample_event<R: Rng + ?Sized>(&self, l: usize, rng: &mut R) -> ErrorEvent {
        let n = self.n();
        let mut data = PauliString::identity(n);
        for q in 0..n {
            let p = self.qubits.sample_qubit(q, rng);
            if p != Pauli::I {
                data.set(q, p);
            }
        }
        let mut flips = Bits::zeros(l);
        if let Some(f) = &self.flips {
            for (b, &p) in f.iter().enumerate() {
                if rng.random::<f64>() < p {
                    flips.set(b, true);
                }
            }
        }
        ErrorEvent { data, flips }
    }

    /// Every rate clamped into `[lo, hi]`, identity mass included.
    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        let clamp_simplex = |r: &[f64; 3]| {
            let mut out = r.map(|p| p.clamp(lo, hi));
            let total: f64 = out.iter().sum();
            if 1.0 - total < lo {
                let scale = (1.0 - lo) / total;
                out.iter_mut().for_each(|p| *p *= scale);
            }
            out
        };
        CodeRates {
            qubits: SingleQubitPauliRates { rates: self.qubits.rates.iter().map(clamp_simplex).collect() },
            flips: self.flips.as_ref().map(|f| f.iter().map(|p| p.clamp(lo, hi)).collect()),
        }
    }
}

/// One simulated round: the observed syndrome and the true logical class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shot {
    pub syndrome: Syndrome,
    pub class: LogicalClass,
}

/// Samples `(observed syndrome, logical class)` pairs from `rates` on `code`.
pub fn sample_shot<R: Rng + ?Sized>(code: &StabilizerCode, rates: &CodeRates, rng: &mut R) -> Shot {
    let e = rates.sample_event(code.l(), rng);
    let mut syndrome = code.syndrome_unchecked(&e.data);
    syndrome.bits_mut().xor_assign(&e.flips);
    Shot { syndrome, class: code.logical_class_unchecked(&e.data) }
}

/// Model file contents: a named preset or explicit error sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Depolarizing {
        depolarizing: f64,
    },
    Phenomenological {
        phenomenological: f64,
        p_m: f64,
    },
    Explicit {
        sets: Vec<ExplicitSet>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitSet {
    pub elements: Vec<ErrorEvent>,
    pub rates: Vec<f64>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_model(&self, code: &StabilizerCode) -> Result<DecomposableModel> {
        match self {
            ModelFile::Explicit { sets } => {
                let (s, r) = sets
                    .iter()
                    .map(|e| Ok((ErrorSet::new(e.elements.clone())?, e.rates.clone())))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .unzip();
                DecomposableModel::new(code.n(), code.l(), s, r)
            }
            _ => self.to_code_rates(code.n(), code.l())?.to_model(code.l()),
        }
    }

    /// Preset models as [`CodeRates`]; explicit sets are not convertible.
    pub fn to_code_rates(&self, n: usize, l: usize) -> Result<CodeRates> {
        match *self {
            ModelFile::Depolarizing { depolarizing } => CodeRates::depolarizing(n, depolarizing),
            ModelFile::Phenomenological { phenomenological, p_m } => {
                CodeRates::phenomenological(n, l, phenomenological, p_m)
            }
            ModelFile::Explicit { .. } => {
                Err(Error::Unsupported("explicit error sets have no per-qubit form".into()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{five_qubit_code, repetition_code};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(data: &str, flips: &str) -> ErrorEvent {
        ErrorEvent::new(data.parse().unwrap(), flips.parse().unwrap())
    }

    /// The repetition-code model with five channels, two of which share
    /// support on qubit 2.
    fn figure_model(r: [f64; 6]) -> DecomposableModel {
        let sets = vec![
            ErrorSet::new(vec![ev("XII", "00")]).unwrap(),
            ErrorSet::new(vec![ev("XXI", "00"), ev("IXI", "00")]).unwrap(),
            ErrorSet::new(vec![ev("IIX", "00")]).unwrap(),
            ErrorSet::new(vec![ev("III", "10")]).unwrap(),
            ErrorSet::new(vec![ev("III", "01")]).unwrap(),
        ];
        let rates = vec![vec![r[0]], vec![r[1], r[2]], vec![r[3]], vec![r[4]], vec![r[5]]];
        DecomposableModel::new(3, 2, sets, rates).unwrap()
    }

    #[test]
    fn event_probability_examples() {
        let p = 0.13;
        let model = SingleQubitPauliRates::uniform(5, p).unwrap().to_model(4);
        let none = vec![None; 5];
        assert!((model.event_probability(&none).unwrap() - (1.0 - 3.0 * p).powi(5)).abs() < 1e-15);
        let mut one = none.clone();
        one[0] = Some(0);
        let expect = 0.13 * (1.0f64 - 0.39).powi(4);
        assert!((model.event_probability(&one).unwrap() - expect).abs() < 1e-15);
        let zero = SingleQubitPauliRates::new(vec![[0.0, 0.1, 0.1]; 5]).unwrap().to_model(4);
        assert_eq!(zero.event_probability(&one).unwrap(), 0.0);
        assert!(model.event_probability(&[None]).is_err());
    }

    #[test]
    fn rejects_invalid_models() {
        let overlap = DecomposableModel::new(
            3,
            2,
            vec![
                ErrorSet::new(vec![ev("XII", "00")]).unwrap(),
                ErrorSet::new(vec![ev("XII", "00"), ev("IXI", "00")]).unwrap(),
            ],
            vec![vec![0.1], vec![0.1, 0.1]],
        );
        assert!(matches!(overlap, Err(Error::Invalid(_))));
        assert!(ErrorSet::new(vec![ev("III", "00")]).is_err());
        assert!(ErrorSet::new(vec![]).is_err());
        assert!(ErrorSet::new(vec![ev("XII", "00"), ev("XII", "00")]).is_err());
        assert!(SingleQubitPauliRates::new(vec![[0.5, 0.4, 0.2]]).is_err());
        assert!(SingleQubitPauliRates::new(vec![[-0.1, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn sampling_degenerate_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = SingleQubitPauliRates::uniform(5, 0.0).unwrap().to_model(4);
        for _ in 0..100 {
            assert!(zero.sample(&mut rng).is_identity());
        }
        let sure = DecomposableModel::new(
            3,
            2,
            vec![ErrorSet::new(vec![ev("XXI", "01")]).unwrap()],
            vec![vec![1.0]],
        )
        .unwrap();
        for _ in 0..100 {
            assert_eq!(sure.sample(&mut rng), ev("XXI", "01"));
        }
    }

    #[test]
    fn sampling_frequency_matches_rate() {
        let p = 0.13;
        let rates = CodeRates::depolarizing(5, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 100_000;
        let mut x_count = 0usize;
        for _ in 0..trials {
            let e = rates.sample_event(4, &mut rng);
            x_count += (e.data.get(0) == Pauli::X) as usize;
        }
        let freq = x_count as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * sigma, "freq {freq}");
    }

    #[test]
    fn sampling_is_seeded() {
        let model = figure_model([0.1, 0.2, 0.1, 0.3, 0.1, 0.05]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| model.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn total_distribution_single_set() {
        let model = DecomposableModel::new(
            3,
            2,
            vec![ErrorSet::new(vec![ev("XXI", "00"), ev("IXI", "00")]).unwrap()],
            vec![vec![0.2, 0.3]],
        )
        .unwrap();
        let d = model.total_error_distribution(DEFAULT_BUDGET).unwrap();
        assert_eq!(d.len(), 3);
        assert!((d[&ev("XXI", "00")] - 0.2).abs() < 1e-15);
        assert!((d[&ev("IXI", "00")] - 0.3).abs() < 1e-15);
        assert!((d[&ev("III", "00")] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn total_distribution_adds_coinciding_products() {
        let r = [0.1, 0.2, 0.15, 0.05, 0.02, 0.03];
        let model = figure_model(r);
        let d = model.total_error_distribution(DEFAULT_BUDGET).unwrap();
        // XXI with no flips: N2 picks XXI alone, or N1=XII with N2=IXI
        let others = (1.0 - r[3]) * (1.0 - r[4]) * (1.0 - r[5]);
        let expect = ((1.0 - r[0]) * r[1] + r[0] * r[2]) * others;
        assert!((d[&ev("XXI", "00")] - expect).abs() < 1e-15);
        let total: f64 = d.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn syndrome_distribution_examples() {
        let code = five_qubit_code();
        let zero = SingleQubitPauliRates::uniform(5, 0.0).unwrap().to_model(4);
        let d = zero.syndrome_distribution(&code, DEFAULT_BUDGET).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[&Syndrome::zeros(4)] - 1.0).abs() < 1e-15);

        let model = SingleQubitPauliRates::uniform(5, 0.07).unwrap().to_model(4);
        let d = model.syndrome_distribution(&code, DEFAULT_BUDGET).unwrap();
        let nonzero: Vec<f64> = d.iter().filter(|(s, _)| !s.is_zero()).map(|(_, &p)| p).collect();
        assert_eq!(nonzero.len(), 15);
        for p in &nonzero {
            assert!((p - nonzero[0]).abs() < 1e-15);
        }
        assert!((d.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phenomenological_zero_syndrome_two_ways() {
        let code = five_qubit_code();
        let rates = CodeRates::phenomenological(5, 4, 0.005, 0.005).unwrap();
        let model = rates.to_model(4).unwrap();
        let exact = model.syndrome_distribution(&code, DEFAULT_BUDGET).unwrap()[&Syndrome::zeros(4)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 1_000_000;
        let hits = (0..trials).filter(|_| sample_shot(&code, &rates, &mut rng).syndrome.is_zero()).count();
        let freq = hits as f64 / trials as f64;
        let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((freq - exact).abs() < 4.0 * sigma, "{freq} vs {exact}");
    }

    #[test]
    fn vanishing_rate_reproduces_smaller_model() {
        let code = repetition_code(3).unwrap();
        let full = figure_model([0.1, 0.2, 0.15, 0.05, 0.0, 0.03]);
        let smaller = DecomposableModel::new(
            3,
            2,
            vec![
                ErrorSet::new(vec![ev("XII", "00")]).unwrap(),
                ErrorSet::new(vec![ev("XXI", "00"), ev("IXI", "00")]).unwrap(),
                ErrorSet::new(vec![ev("IIX", "00")]).unwrap(),
                ErrorSet::new(vec![ev("III", "01")]).unwrap(),
            ],
            vec![vec![0.1], vec![0.2, 0.15], vec![0.05], vec![0.03]],
        )
        .unwrap();
        let a = full.syndrome_distribution(&code, DEFAULT_BUDGET).unwrap();
        let b = smaller.syndrome_distribution(&code, DEFAULT_BUDGET).unwrap();
        for (s, p) in &b {
            assert!((a[s] - p).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_matches_exact_distribution_chi_square() {
        let code = repetition_code(3).unwrap();
        let model = figure_model([0.1, 0.2, 0.15, 0.05, 0.08, 0.03]);
        let exact = model.syndrome_distribution(&code, DEFAULT_BUDGET).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 50_000;
        let mut counts: BTreeMap<Syndrome, f64> = BTreeMap::new();
        for _ in 0..trials {
            let s = model.sample(&mut rng).observed_syndrome(&code).unwrap();
            *counts.entry(s).or_insert(0.0) += 1.0;
        }
        let chi2: f64 = exact
            .iter()
            .map(|(s, &p)| {
                let expected = p * trials as f64;
                let observed = counts.get(s).copied().unwrap_or(0.0);
                (observed - expected).powi(2) / expected
            })
            .sum();
        // 3 degrees of freedom; 16.3 is the 0.999 quantile
        assert!(chi2 < 16.3, "chi2 = {chi2}");
    }

    #[test]
    fn budget_is_enforced() {
        let model = SingleQubitPauliRates::uniform(5, 0.1).unwrap().to_model(4);
        assert!(matches!(model.total_error_distribution(100), Err(Error::Budget { .. })));
    }

    #[test]
    fn model_files() {
        let code = five_qubit_code();
        let dep = ModelFile::from_json(r#"{"depolarizing": 0.1}"#).unwrap();
        assert_eq!(dep.to_model(&code).unwrap().n_params(), 15);
        let ph = ModelFile::from_json(r#"{"phenomenological": 0.01, "p_m": 0.02}"#).unwrap();
        let r = ph.to_code_rates(5, 4).unwrap();
        assert_eq!(r.flips, Some(vec![0.02; 4]));
        let explicit = ModelFile::from_json(
            r#"{"sets":[{"elements":[{"data":"XIIII","flips":"0000"}],"rates":[0.2]}]}"#,
        )
        .unwrap();
        assert_eq!(explicit.to_model(&code).unwrap().n_params(), 1);
        assert!(explicit.to_code_rates(5, 4).is_err());
    }

    #[test]
    fn params_roundtrip_and_clamp() {
        let r = CodeRates::phenomenological(2, 1, 0.1, 0.2).unwrap();
        let v = r.to_params();
        assert_eq!(v.len(), 7);
        assert_eq!(r.from_params(&v).unwrap(), r);
        assert_eq!(r.param_labels()[6], "m1");
        let zero = CodeRates::depolarizing(2, 0.0).unwrap().clamped(1e-12, 1.0 - 1e-12);
        assert!(zero.to_params().iter().all(|&p| p == 1e-12));
    }
}
