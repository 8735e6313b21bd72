//! Local identifiability of rates from syndrome statistics, and the
//! modified weight distributions of perfect codes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::noise::{DecomposableModel, SingleQubitPauliRates};
use crate::pauli::{check_enumeration_budget, Alphabet, Pauli, PauliString, StabilizerCode, Syndrome};

/// Numerical rank of a matrix with the singular values behind the decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub tolerance: f64,
    /// `σ_r / σ_{r+1}`, or `σ_r / tolerance` at full column rank.
    pub gap: f64,
}

pub fn numerical_rank(rows: usize, cols: usize, row_major: &[f64]) -> RankReport {
    let m = DMatrix::from_row_slice(rows, cols, row_major);
    let mut sv: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let tolerance = rows.max(cols) as f64 * smax * f64::EPSILON * 64.0;
    let rank = sv.iter().filter(|&&s| s > tolerance).count();
    let gap = match rank {
        0 => 0.0,
        r if r < sv.len() => sv[r - 1] / sv[r].max(f64::MIN_POSITIVE),
        r => sv[r - 1] / tolerance.max(f64::MIN_POSITIVE),
    };
    RankReport { singular_values: sv, rank, tolerance, gap }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobianReport {
    /// Row labels, all `2^l` syndromes in index order.
    pub syndromes: Vec<Syndrome>,
    /// Column labels `set:element` (1-based).
    pub params: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub rank: RankReport,
    pub identifiable: bool,
}

impl JacobianReport {
    fn new(syndromes: Vec<Syndrome>, params: Vec<String>, matrix: Vec<Vec<f64>>) -> Self {
        let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
        let rank = numerical_rank(matrix.len(), params.len(), &flat);
        let identifiable = rank.rank == params.len();
        JacobianReport { syndromes, params, matrix, rank, identifiable }
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row][col]
    }
}

fn all_syndromes(l: usize) -> Result<Vec<Syndrome>> {
    if l > 20 {
        return Err(Error::Budget { required: 1 << l, limit: 1 << 20 });
    }
    Ok((0..1u64 << l).map(|i| Syndrome::from_index(l, i)).collect())
}

fn param_labels(model: &DecomposableModel) -> Vec<String> {
    model
        .sets()
        .iter()
        .enumerate()
        .flat_map(|(i, set)| (0..set.len()).map(move |j| format!("{}:{}", i + 1, set.elements()[j])))
        .collect()
}

/// Jacobian of `θ ↦ P[S]` at `θ = 0`: each elementary error contributes `+1`
/// at its observed syndrome and `-1` at `S = 0`.
pub fn jacobian_at_zero(code: &StabilizerCode, model: &DecomposableModel) -> Result<JacobianReport> {
    check_dim(code.n(), model.n())?;
    check_dim(code.l(), model.l())?;
    let syndromes = all_syndromes(code.l())?;
    let cols = model.n_params();
    let mut matrix = vec![vec![0.0; cols]; syndromes.len()];
    let mut col = 0;
    for set in model.sets() {
        for e in set.elements() {
            let s = e.observed_syndrome(code)?.index().expect("l <= 20") as usize;
            matrix[s][col] += 1.0;
            matrix[0][col] -= 1.0;
            col += 1;
        }
    }
    Ok(JacobianReport::new(syndromes, param_labels(model), matrix))
}

/// `J̃[S, θ^i_e] = P[X_i = e | S] / θ^i_e - P[X_i = I | S] / θ^i_I` by exact
/// enumeration.
pub fn jtilde(code: &StabilizerCode, model: &DecomposableModel, budget: u128) -> Result<JacobianReport> {
    for (i, r) in model.rates().iter().enumerate() {
        for (j, &t) in r.iter().enumerate() {
            if !(t > 0.0) {
                return Err(Error::Precondition(format!(
                    "rate of element {} in set {} is zero",
                    model.sets()[i].elements()[j],
                    i + 1
                )));
            }
        }
        if !(model.identity_rate(i) > 0.0) {
            return Err(Error::Precondition(format!("identity rate of set {} is zero", i + 1)));
        }
    }
    let syndromes = all_syndromes(code.l())?;
    let marginals = model.syndrome_marginals(code, budget)?;
    let mut matrix = Vec::with_capacity(syndromes.len());
    for s in &syndromes {
        let m = marginals
            .get(s)
            .filter(|m| m.probability > 0.0)
            .ok_or_else(|| Error::Precondition(format!("P[S = {s}] is zero")))?;
        let mut row = Vec::with_capacity(model.n_params());
        for (i, r) in model.rates().iter().enumerate() {
            let identity = m.posterior(i, 0) / model.identity_rate(i);
            for (j, &t) in r.iter().enumerate() {
                row.push(m.posterior(i, j + 1) / t - identity);
            }
        }
        matrix.push(row);
    }
    Ok(JacobianReport::new(syndromes, param_labels(model), matrix))
}

/// `P[S | E_q = e]` for every syndrome and `e ∈ {I, X, Y, Z}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub qubit: usize,
    pub p: f64,
    pub rows: Vec<(Syndrome, [f64; 4])>,
    /// Largest `|P[S|E_q=e] - P[S|E_q=e']|` over qualifying triples.
    pub max_violation: f64,
    /// Largest difference at an excluded `S = S(e^(q))`.
    pub max_excluded_difference: f64,
    pub holds: bool,
}

/// Checks that conditional syndrome probabilities agree across `e` away from
/// `0`, `S(e^(q))` and `S(e'^(q))` on a perfect code. Every non-identity
/// Pauli on a qubit carries weight `p` and the identity `1 - p`; normalised,
/// `θ_e = p / (1 + 2p)`, so `p = 1/2` is the uniform distribution.
pub fn equal_conditional_probs_check(code: &StabilizerCode, p: f64, qubit: usize) -> Result<ConditionalTable> {
    if !code.is_perfect() {
        return Err(Error::Unsupported("code is not a perfect single-error-correcting code".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p must lie in (0, 1), got {p}")));
    }
    let n = code.n();
    if qubit >= n {
        return Err(Error::invalid(format!("qubit {qubit} out of range")));
    }
    let theta = p / (1.0 + 2.0 * p);
    let rates = SingleQubitPauliRates::uniform(n, theta)?;
    let model = rates.to_model(code.l());
    let marginals = model.syndrome_marginals(code, crate::noise::DEFAULT_BUDGET)?;
    let prior = rates.distribution(qubit);
    let single = |e: usize| code.syndrome_unchecked(&PauliString::single(n, qubit, Pauli::from_index(e)));
    let mut rows = Vec::new();
    let mut max_violation: f64 = 0.0;
    let mut max_excluded: f64 = 0.0;
    for s in all_syndromes(code.l())? {
        let cond: [f64; 4] = std::array::from_fn(|e| {
            marginals.get(&s).map_or(0.0, |m| m.joint[qubit][e]) / prior[e]
        });
        if !s.is_zero() {
            for e in 0..4 {
                for f in (e + 1)..4 {
                    let diff = (cond[e] - cond[f]).abs();
                    if s != single(e) && s != single(f) {
                        max_violation = max_violation.max(diff);
                    } else {
                        max_excluded = max_excluded.max(diff);
                    }
                }
            }
        }
        rows.push((s, cond));
    }
    Ok(ConditionalTable {
        qubit,
        p,
        rows,
        max_violation,
        max_excluded_difference: max_excluded,
        holds: max_violation <= 1e-12,
    })
}

/// Which initial conditions `(k_0, k_1)` a `(ê, q̂, S*)` triple has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KwCase {
    /// `S* = S(ê^(q̂))`: `(1, 0)`.
    Matching,
    /// The single error completing `ê^(q̂)` to `S*` sits on `q̂`: `(0, 0)`.
    OnQubit,
    /// It sits elsewhere: `(0, 1)`.
    OffQubit,
}

impl KwCase {
    pub fn initial(self) -> (u64, u64) {
        match self {
            KwCase::Matching => (1, 0),
            KwCase::OnQubit => (0, 0),
            KwCase::OffQubit => (0, 1),
        }
    }
}

/// `k_w(ê, q̂, S*)` for `w = 0..n-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightDistribution {
    pub n: usize,
    pub qubit: usize,
    pub pauli: Pauli,
    pub syndrome: Syndrome,
    pub case: KwCase,
    pub values: Vec<u64>,
}

fn check_kw_inputs(code: &StabilizerCode, alphabet: Alphabet, e: Pauli, qubit: usize, s: &Syndrome) -> Result<()> {
    check_dim(code.l(), s.len())?;
    if s.is_zero() {
        return Err(Error::invalid("S* must be non-zero"));
    }
    if qubit >= code.n() {
        return Err(Error::invalid(format!("qubit {qubit} out of range")));
    }
    if !alphabet.letters().contains(&e) {
        return Err(Error::invalid(format!("{e} is outside the {alphabet:?} alphabet")));
    }
    Ok(())
}

/// Classifies `(ê, q̂, S*)` using the perfect-code inverse.
pub fn kw_case(code: &StabilizerCode, alphabet: Alphabet, e: Pauli, qubit: usize, s: &Syndrome) -> Result<KwCase> {
    check_kw_inputs(code, alphabet, e, qubit, s)?;
    let own = code.syndrome_unchecked(&PauliString::single(code.n(), qubit, e));
    if &own == s {
        return Ok(KwCase::Matching);
    }
    let completion = code.syndrome_inverse_for(alphabet, &own.xor(s)?)?;
    if completion.get(qubit) != Pauli::I {
        Ok(KwCase::OnQubit)
    } else {
        Ok(KwCase::OffQubit)
    }
}

/// Counts errors over `alphabet` with `E_q̂ = ê`, syndrome `S*` and
/// `wt(E_{-q̂}) = w`, by enumeration.
pub fn kw_bruteforce(
    code: &StabilizerCode,
    alphabet: Alphabet,
    e: Pauli,
    qubit: usize,
    s: &Syndrome,
) -> Result<WeightDistribution> {
    check_kw_inputs(code, alphabet, e, qubit, s)?;
    check_enumeration_budget(code.n())?;
    let case = kw_case(code, alphabet, e, qubit, s)?;
    let n = code.n();
    let target = s.index().expect("small code");
    let mut values = vec![0u64; n];
    let z_range = match alphabet {
        Alphabet::Pauli => 1u64 << n,
        Alphabet::BitFlip => 1,
    };
    for x in 0..(1u64 << n) {
        for z in 0..z_range {
            let err = PauliString::from_packed(n, x, z);
            if err.get(qubit) != e || code.syndrome_packed(x, z) != target {
                continue;
            }
            let w = err.weight() - usize::from(e != Pauli::I);
            values[w] += 1;
        }
    }
    Ok(WeightDistribution { n, qubit, pauli: e, syndrome: s.clone(), case, values })
}

fn binomial(n: u64, k: u64) -> i128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1i128, |acc, i| acc * (n - i) as i128 / (i + 1) as i128)
}

/// Joint recursion for `k_w(e, q̂, S*)` over every `e` of the alphabet, given
/// the initial-condition case of each. `cases[j]` belongs to
/// `alphabet.letters()[j]`. Returns one sequence per letter.
pub fn kw_recursive(n: usize, alphabet: Alphabet, cases: &[KwCase]) -> Result<Vec<Vec<u64>>> {
    let letters = alphabet.letters();
    check_dim(letters.len(), cases.len())?;
    if n < 2 {
        return Err(Error::invalid("the recursion needs n >= 2"));
    }
    let a = alphabet.non_identity().len() as i128;
    let m = letters.len();
    let mut k: Vec<Vec<i128>> = cases
        .iter()
        .map(|c| {
            let (k0, k1) = c.initial();
            vec![k0 as i128, k1 as i128]
        })
        .collect();
    for w in 2..n {
        let prev: Vec<i128> = k.iter().map(|seq| seq[w - 1]).collect();
        let total_prev: i128 = prev.iter().sum();
        let wi = w as i128;
        let mut next = Vec::with_capacity(m);
        for (j, seq) in k.iter().enumerate() {
            let others = total_prev - prev[j];
            let l_w = a.pow(w as u32 - 1) * binomial(n as u64 - 1, w as u64 - 1)
                - seq[w - 1]
                - a * (n as i128 - wi + 1) * seq[w - 2]
                - (a - 1) * (wi - 1) * seq[w - 1]
                - others;
            if l_w < 0 || l_w % wi != 0 {
                return Err(Error::Internal(format!(
                    "l_{w} = {l_w} is not a non-negative multiple of {w} for {}",
                    letters[j]
                )));
            }
            next.push(l_w / wi);
        }
        for (seq, v) in k.iter_mut().zip(next) {
            seq.push(v);
        }
    }
    Ok(k.into_iter().map(|seq| seq.into_iter().map(|v| v as u64).collect()).collect())
}

/// Recursion results for one `(q̂, S*)`, packaged like [`kw_bruteforce`].
pub fn kw_recursive_for(
    code: &StabilizerCode,
    alphabet: Alphabet,
    qubit: usize,
    s: &Syndrome,
) -> Result<Vec<WeightDistribution>> {
    let letters = alphabet.letters();
    let cases = letters
        .iter()
        .map(|&e| kw_case(code, alphabet, e, qubit, s))
        .collect::<Result<Vec<_>>>()?;
    let seqs = kw_recursive(code.n(), alphabet, &cases)?;
    Ok(letters
        .iter()
        .zip(cases)
        .zip(seqs)
        .map(|((&pauli, case), values)| WeightDistribution {
            n: code.n(),
            qubit,
            pauli,
            syndrome: s.clone(),
            case,
            values,
        })
        .collect())
}
