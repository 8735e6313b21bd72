//! Score vectors, Fisher information and Cramér–Rao bounds for syndrome data.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{FactorGraph, PosteriorTable};
use crate::error::{check_dim, Error, Result};
use crate::estimate::SyndromeDataset;
use crate::exec::Exec;
use crate::noise::{CodeRates, SyndromeMarginals};
use crate::numeric::{CompensatedSum, CompensatedVec};
use crate::pauli::{Pauli, StabilizerCode, Syndrome};

const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherMode {
    Exact,
    MonteCarlo { samples: u64 },
    /// Complete-data information of directly observed errors.
    Direct,
}

/// Per-observation Fisher information in the `CodeRates::to_params` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub dim: usize,
    /// Row-major.
    pub values: Vec<f64>,
    pub mode: FisherMode,
    pub theta: Vec<f64>,
}

impl FisherMatrix {
    fn from_accumulated(dim: usize, acc: CompensatedVec, scale: f64, mode: FisherMode, theta: Vec<f64>) -> Self {
        let mut values: Vec<f64> = acc.values().iter().map(|v| v * scale).collect();
        // exact symmetry
        for i in 0..dim {
            for j in 0..i {
                let m = 0.5 * (values[i * dim + j] + values[j * dim + i]);
                values[i * dim + j] = m;
                values[j * dim + i] = m;
            }
        }
        FisherMatrix { dim, values, mode, theta }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.values)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_dmatrix()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn is_psd(&self) -> bool {
        let ev = self.eigenvalues();
        let scale = ev.last().copied().unwrap_or(0.0).abs().max(1.0);
        ev.first().is_none_or(|&min| min >= -PSD_TOL * scale)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self - other‖_F / ‖other‖_F`.
    pub fn relative_frobenius_error(&self, other: &FisherMatrix) -> Result<f64> {
        check_dim(other.dim, self.dim)?;
        let diff: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok(diff / other.frobenius_norm())
    }
}

/// Per-parameter variance lower bounds `diag(I⁻¹)/m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CRBReport {
    pub bounds: Vec<f64>,
    pub samples: u64,
    pub rank: usize,
    pub condition_number: f64,
    /// Set when `I` was singular and a pseudo-inverse was used.
    pub pseudo_inverse: bool,
    pub eigenvalues: Vec<f64>,
}

/// `∂ ln P[S] / ∂θ` from leaf and flip posteriors.
pub fn score_from_posteriors(rates: &CodeRates, post: &PosteriorTable) -> Result<Vec<f64>> {
    check_dim(rates.n(), post.leaves.len())?;
    let mut out = Vec::with_capacity(rates.n_params());
    for (q, row) in post.leaves.iter().enumerate() {
        let dist = rates.qubits.distribution(q);
        for p in Pauli::NON_IDENTITY {
            out.push(row[p.index()] / dist[p.index()] - row[0] / dist[0]);
        }
    }
    if let Some(f) = &rates.flips {
        let pf = post.flips.as_ref().ok_or_else(|| Error::invalid("posteriors carry no flip marginals"))?;
        check_dim(f.len(), pf.len())?;
        out.extend(f.iter().zip(pf).map(|(&p, &post1)| post1 / p - (1.0 - post1) / (1.0 - p)));
    }
    Ok(out)
}

fn check_interior(rates: &CodeRates) -> Result<()> {
    for q in 0..rates.n() {
        if rates.qubits.distribution(q).iter().any(|&v| v <= 0.0) {
            return Err(Error::Precondition(format!("rates of qubit {} are not interior", q + 1)));
        }
    }
    if let Some(f) = &rates.flips {
        if f.iter().any(|&p| p <= 0.0 || p >= 1.0) {
            return Err(Error::Precondition("flip rates are not interior".into()));
        }
    }
    Ok(())
}

/// Score at `obs` by belief propagation under the graph's rates.
pub fn score(graph: &FactorGraph, obs: &Syndrome) -> Result<Vec<f64>> {
    let rates = graph.rates();
    check_interior(&rates)?;
    score_from_posteriors(&rates, &graph.posteriors(obs)?)
}

/// Score at `obs` by enumerating every error of an unconcatenated code.
pub fn score_enumerated(code: &StabilizerCode, rates: &CodeRates, obs: &Syndrome, budget: u128) -> Result<Vec<f64>> {
    check_interior(rates)?;
    let marg = rates.to_model(code.l())?.syndrome_marginals(code, budget)?;
    let m = marg.get(obs).ok_or_else(|| Error::ZeroSupport { syndrome: obs.to_string() })?;
    Ok(score_enumerated_from(rates, m))
}

fn add_outer(acc: &mut CompensatedVec, v: &[f64], w: f64) {
    let d = v.len();
    for i in 0..d {
        let wi = w * v[i];
        for j in 0..d {
            acc.add_at(i * d + j, wi * v[j]);
        }
    }
}

/// `E_S[score scoreᵀ]` by enumerating all errors of an unconcatenated code.
pub fn fisher_exact(code: &StabilizerCode, rates: &CodeRates, budget: u128) -> Result<FisherMatrix> {
    check_interior(rates)?;
    let marg = rates.to_model(code.l())?.syndrome_marginals(code, budget)?;
    let dim = rates.n_params();
    let mut acc = CompensatedVec::zeros(dim * dim);
    for m in marg.values() {
        add_outer(&mut acc, &score_enumerated_from(rates, m), m.probability);
    }
    Ok(FisherMatrix::from_accumulated(dim, acc, 1.0, FisherMode::Exact, rates.to_params()))
}

fn score_enumerated_from(rates: &CodeRates, m: &SyndromeMarginals) -> Vec<f64> {
    let mut out = Vec::with_capacity(rates.n_params());
    for q in 0..rates.n() {
        let dist = rates.qubits.distribution(q);
        for c in 1..4 {
            out.push(m.posterior(q, c) / dist[c] - m.posterior(q, 0) / dist[0]);
        }
    }
    if let Some(f) = &rates.flips {
        for (b, &p) in f.iter().enumerate() {
            let set = rates.n() + b;
            out.push(m.posterior(set, 1) / p - m.posterior(set, 0) / (1.0 - p));
        }
    }
    out
}

/// Empirical mean of score outer products over grouped syndromes.
pub fn fisher_from_groups(graph: &FactorGraph, groups: &[(Syndrome, u64)], exec: Exec) -> Result<FisherMatrix> {
    let rates = graph.rates();
    check_interior(&rates)?;
    let dim = rates.n_params();
    let scores = exec.map(groups, |(s, _)| score_from_posteriors(&rates, &graph.posteriors(s)?));
    let mut acc = CompensatedVec::zeros(dim * dim);
    let mut total = 0u64;
    for ((_, count), v) in groups.iter().zip(scores) {
        add_outer(&mut acc, &v?, *count as f64);
        total += count;
    }
    if total == 0 {
        return Err(Error::invalid("no syndromes"));
    }
    Ok(FisherMatrix::from_accumulated(dim, acc, 1.0 / total as f64, FisherMode::MonteCarlo { samples: total }, rates.to_params()))
}

/// Monte-Carlo Fisher matrix from `n_samples` syndromes drawn under the
/// graph's rates.
pub fn fisher_mc<R: Rng + ?Sized>(graph: &FactorGraph, n_samples: usize, rng: &mut R, exec: Exec) -> Result<FisherMatrix> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be positive"));
    }
    let code = graph.tree().to_code()?;
    let data = SyndromeDataset::sample(&code, &graph.rates(), n_samples, rng)?;
    fisher_from_groups(graph, &data.grouped(), exec)
}

/// Complete-data information: `diag(1/θ_e) + 11ᵀ/θ_I` per qubit and
/// `1/(p(1-p))` per flip.
pub fn direct_observation_fisher(rates: &CodeRates) -> Result<FisherMatrix> {
    check_interior(rates)?;
    let dim = rates.n_params();
    let mut values = vec![0.0; dim * dim];
    for q in 0..rates.n() {
        let dist = rates.qubits.distribution(q);
        for a in 0..3 {
            for b in 0..3 {
                let mut v = 1.0 / dist[0];
                if a == b {
                    v += 1.0 / dist[a + 1];
                }
                values[(3 * q + a) * dim + 3 * q + b] = v;
            }
        }
    }
    if let Some(f) = &rates.flips {
        let off = 3 * rates.n();
        for (b, &p) in f.iter().enumerate() {
            values[(off + b) * dim + off + b] = 1.0 / (p * (1.0 - p));
        }
    }
    Ok(FisherMatrix { dim, values, mode: FisherMode::Direct, theta: rates.to_params() })
}

/// Smallest eigenvalue of `upper - lower`; nonnegative when `lower ⪯ upper`.
pub fn loewner_margin(lower: &FisherMatrix, upper: &FisherMatrix) -> Result<f64> {
    check_dim(upper.dim, lower.dim)?;
    let d = upper.to_dmatrix() - lower.to_dmatrix();
    Ok(SymmetricEigen::new(d).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Bounds from the eigendecomposition of `I`, falling back to the
/// pseudo-inverse when `I` is numerically singular.
pub fn crb(fisher: &FisherMatrix, m: u64) -> Result<CRBReport> {
    if m == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let eig = SymmetricEigen::new(fisher.to_dmatrix());
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = fisher.dim as f64 * max * f64::EPSILON * 64.0;
    let kept: Vec<usize> = (0..fisher.dim).filter(|&k| eig.eigenvalues[k] > tol).collect();
    let rank = kept.len();
    let min_kept = kept.iter().map(|&k| eig.eigenvalues[k]).fold(f64::INFINITY, f64::min);
    let condition_number = if rank == fisher.dim { max / min_kept } else { f64::INFINITY };
    let bounds = (0..fisher.dim)
        .map(|i| kept.iter().map(|&k| eig.eigenvectors[(i, k)].powi(2) / eig.eigenvalues[k]).sum::<f64>() / m as f64)
        .collect();
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(CRBReport { bounds, samples: m, rank, condition_number, pseudo_inverse: rank < fisher.dim, eigenvalues })
}

/// `Σ_S P[S] score(S)` over all syndromes; zero up to rounding.
pub fn mean_score_exact(code: &StabilizerCode, rates: &CodeRates, budget: u128) -> Result<Vec<f64>> {
    check_interior(rates)?;
    let marg = rates.to_model(code.l())?.syndrome_marginals(code, budget)?;
    let mut acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); rates.n_params()];
    for m in marg.values() {
        for (a, v) in acc.iter_mut().zip(score_enumerated_from(rates, m)) {
            a.add(m.probability * v);
        }
    }
    Ok(acc.iter().map(CompensatedSum::value).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{concatenate, five_qubit_code, repetition_code, ConcatSpec};
    use crate::noise::{SingleQubitPauliRates, DEFAULT_BUDGET};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_rates(n: usize, rng: &mut ChaCha8Rng) -> CodeRates {
        let q = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.01..0.2))).collect();
        CodeRates::new(SingleQubitPauliRates::new(q).unwrap(), None).unwrap()
    }

    #[test]
    fn bp_score_matches_enumeration() {
        let code = five_qubit_code();
        let tree = concatenate(&ConcatSpec::new(code.clone(), 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let rates = random_rates(5, &mut rng);
            let graph = FactorGraph::new(&tree, &rates).unwrap();
            for idx in 0..16 {
                let s = Syndrome::from_index(4, idx);
                let a = score(&graph, &s).unwrap();
                let b = score_enumerated(&code, &rates, &s, DEFAULT_BUDGET).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()), "{x} {y}");
                }
            }
        }
    }

    #[test]
    fn score_has_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rates = random_rates(5, &mut rng);
        let m = mean_score_exact(&five_qubit_code(), &rates, DEFAULT_BUDGET).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12), "{m:?}");
    }

    #[test]
    fn exact_fisher_psd_and_below_direct() {
        let rates = CodeRates::depolarizing(5, 0.13).unwrap();
        let f = fisher_exact(&five_qubit_code(), &rates, DEFAULT_BUDGET).unwrap();
        assert!(f.is_psd());
        let d = direct_observation_fisher(&rates).unwrap();
        assert!(loewner_margin(&f, &d).unwrap() >= -1e-9);
        let r = crb(&f, 1000).unwrap();
        assert!(!r.pseudo_inverse && r.bounds.iter().all(|&b| b > 0.0));
        let r2 = crb(&f, 2000).unwrap();
        for (a, b) in r.bounds.iter().zip(&r2.bounds) {
            assert!((a / b - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_code_gives_equivalent_blocks() {
        let rates = CodeRates::depolarizing(5, 0.13).unwrap();
        let f = fisher_exact(&five_qubit_code(), &rates, DEFAULT_BUDGET).unwrap();
        // the five-qubit code is invariant under cyclic shifts
        for q in 0..5 {
            let r = (q + 1) % 5;
            for a in 0..3 {
                for b in 0..3 {
                    assert!((f.get(3 * q + a, 3 * q + b) - f.get(3 * r + a, 3 * r + b)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn singular_fisher_flags_pseudo_inverse() {
        // X-only noise on two qubits sharing one check: both single errors
        // give the same syndrome
        let code = repetition_code(2).unwrap();
        let rates = CodeRates::new(SingleQubitPauliRates::new(vec![[0.1, 0.01, 0.01]; 2]).unwrap(), None).unwrap();
        let f = fisher_exact(&code, &rates, DEFAULT_BUDGET).unwrap();
        let r = crb(&f, 100).unwrap();
        assert!(r.pseudo_inverse && r.rank < f.dim);
    }

    #[test]
    fn mc_is_deterministic_per_seed() {
        let tree = concatenate(&ConcatSpec::new(five_qubit_code(), 1)).unwrap();
        let graph = FactorGraph::new(&tree, &CodeRates::depolarizing(5, 0.13).unwrap()).unwrap();
        let a = fisher_mc(&graph, 2000, &mut ChaCha8Rng::seed_from_u64(1), Exec::default()).unwrap();
        let b = fisher_mc(&graph, 2000, &mut ChaCha8Rng::seed_from_u64(1), Exec::Sequential).unwrap();
        assert_eq!(a.values, b.values);
    }
}
