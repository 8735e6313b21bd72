//! Rate estimation from syndrome data: EM (soft counts from BP posteriors),
//! HEM (hard counts from the MAP error), regularized EM and Dirichlet
//! initialization.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::decoder::FactorGraph;
use crate::error::{check_dim, Error, Result};
use crate::exec::Exec;
use crate::noise::{sample_shot, CodeRates, SingleQubitPauliRates};
use crate::numeric::{CompensatedSum, CompensatedVec};
use crate::pauli::{Pauli, StabilizerCode, Syndrome};

pub const RATE_FLOOR: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyndromeDataset {
    pub syndromes: Vec<Syndrome>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub truth: Option<CodeRates>,
}

impl SyndromeDataset {
    pub fn new(syndromes: Vec<Syndrome>) -> Result<Self> {
        if let Some(first) = syndromes.first() {
            for s in &syndromes {
                check_dim(first.len(), s.len())?;
            }
        }
        Ok(SyndromeDataset { syndromes, seed: None, truth: None })
    }

    /// `n` observed syndromes drawn from `truth`.
    pub fn sample<R: Rng + ?Sized>(code: &StabilizerCode, truth: &CodeRates, n: usize, rng: &mut R) -> Result<Self> {
        check_dim(code.n(), truth.n())?;
        let syndromes = (0..n).map(|_| sample_shot(code, truth, rng).syndrome).collect();
        Ok(SyndromeDataset { syndromes, seed: None, truth: Some(truth.clone()) })
    }

    pub fn len(&self) -> usize {
        self.syndromes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syndromes.is_empty()
    }

    /// Distinct syndromes with multiplicities, in syndrome order.
    pub fn grouped(&self) -> Vec<(Syndrome, u64)> {
        let mut counts: BTreeMap<&Syndrome, u64> = BTreeMap::new();
        for s in &self.syndromes {
            *counts.entry(s).or_insert(0) += 1;
        }
        counts.into_iter().map(|(s, c)| (s.clone(), c)).collect()
    }
}

/// Expected (EM) or hard (HEM) counts per qubit and Pauli, and per flip bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    /// `qubits[i][e]`, indexed by [`Pauli::index`].
    pub qubits: Vec<[f64; 4]>,
    /// `flips[k] = [count unflipped, count flipped]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flips: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EMState {
    pub iteration: usize,
    pub rates: CodeRates,
    pub stats: SufficientStats,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Em,
    Hem,
}

/// Dirichlet prior pseudocounts `β^i_e = (1 - θ0^i_e) β`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerConfig {
    pub beta: f64,
    pub reference: CodeRates,
}

impl RegularizerConfig {
    pub fn new(beta: f64, reference: CodeRates) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be finite and >= 0, got {beta}")));
        }
        Ok(RegularizerConfig { beta, reference })
    }

    fn qubit_pseudocounts(&self, q: usize) -> [f64; 4] {
        self.reference.qubits.distribution(q).map(|t| (1.0 - t) * self.beta)
    }

    fn flip_pseudocounts(&self, k: usize) -> [f64; 2] {
        let p = self.reference.flips.as_ref().map_or(0.0, |f| f[k]);
        [p * self.beta, (1.0 - p) * self.beta]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { method: Method::Em, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub params: Vec<f64>,
    pub log_likelihood: f64,
    /// `max |θ^(k) - θ^(k-1)|`; zero for the initial state.
    pub max_delta: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationRun {
    pub method: Method,
    pub trajectory: Vec<IterationRecord>,
    pub converged: bool,
    pub final_state: EMState,
}

impl EstimationRun {
    /// Number of update steps performed.
    pub fn steps(&self) -> usize {
        self.trajectory.len() - 1
    }

    pub fn final_rates(&self) -> &CodeRates {
        &self.final_state.rates
    }
}

/// A dataset bound to a factor graph.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    graph: FactorGraph,
    groups: Vec<(Syndrome, u64)>,
    total: u64,
    exec: Exec,
}

impl EstimationProblem {
    /// `graph` supplies the structure; its rates are replaced on every step.
    /// Flip rates are estimated exactly when `graph` models flips.
    pub fn new(graph: FactorGraph, data: &SyndromeDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("empty syndrome dataset"));
        }
        check_dim(graph.syndrome_bits(), data.syndromes[0].len())?;
        Ok(EstimationProblem { graph, groups: data.grouped(), total: data.len() as u64, exec: Exec::default() })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn n_samples(&self) -> u64 {
        self.total
    }

    pub fn unique_syndromes(&self) -> usize {
        self.groups.len()
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    fn check_rates(&self, rates: &CodeRates) -> Result<()> {
        check_dim(self.graph.n_leaves(), rates.n())?;
        if rates.flips.is_some() != self.graph.has_flips() {
            return Err(Error::invalid("flip rates must be given exactly when the graph models flips"));
        }
        Ok(())
    }

    fn empty_stats(&self) -> (Vec<CompensatedVec>, Option<Vec<CompensatedVec>>) {
        let q = (0..self.graph.n_leaves()).map(|_| CompensatedVec::zeros(4)).collect();
        let f = self.graph.has_flips().then(|| (0..self.graph.syndrome_bits()).map(|_| CompensatedVec::zeros(2)).collect());
        (q, f)
    }

    fn finish_stats(q: Vec<CompensatedVec>, f: Option<Vec<CompensatedVec>>) -> SufficientStats {
        let arr4 = |v: Vec<f64>| [v[0], v[1], v[2], v[3]];
        SufficientStats {
            qubits: q.iter().map(|c| arr4(c.values())).collect(),
            flips: f.map(|f| f.iter().map(|c| { let v = c.values(); [v[0], v[1]] }).collect()),
        }
    }

    /// Expected sufficient statistics and dataset log-likelihood under `rates`.
    pub fn e_step(&self, rates: &CodeRates) -> Result<(SufficientStats, f64)> {
        self.check_rates(rates)?;
        let graph = self.graph.with_rates(rates)?;
        let posts = self.exec.map(&self.groups, |(s, _)| graph.posteriors(s));
        let (mut q, mut f) = self.empty_stats();
        let mut ll = CompensatedSum::new();
        for ((_, count), post) in self.groups.iter().zip(posts) {
            let post = post?;
            let c = *count as f64;
            ll.add(c * post.log_likelihood);
            for (acc, row) in q.iter_mut().zip(&post.leaves) {
                acc.add_scaled(row, c);
            }
            if let (Some(f), Some(pf)) = (f.as_mut(), &post.flips) {
                for (acc, &p1) in f.iter_mut().zip(pf) {
                    acc.add_scaled(&[1.0 - p1, p1], c);
                }
            }
        }
        Ok((Self::finish_stats(q, f), ll.value()))
    }

    /// MAP-error counts and dataset log-likelihood under `rates`.
    pub fn hard_e_step(&self, rates: &CodeRates) -> Result<(SufficientStats, f64)> {
        self.check_rates(rates)?;
        let graph = self.graph.with_rates(rates)?;
        let results = self.exec.map(&self.groups, |(s, _)| -> Result<_> {
            Ok((graph.map_error(s)?, graph.log_likelihood(s)?))
        });
        let (mut q, mut f) = self.empty_stats();
        let mut ll = CompensatedSum::new();
        for ((_, count), r) in self.groups.iter().zip(results) {
            let (map, lls) = r?;
            let c = *count as f64;
            ll.add(c * lls);
            for (i, acc) in q.iter_mut().enumerate() {
                acc.add_at(map.event.data.get(i).index(), c);
            }
            if let Some(f) = f.as_mut() {
                for (k, acc) in f.iter_mut().enumerate() {
                    acc.add_at(usize::from(map.event.flips.get(k)), c);
                }
            }
        }
        Ok((Self::finish_stats(q, f), ll.value()))
    }

    /// State at iteration 0: the initial rates with their statistics.
    pub fn initial_state(&self, init: &CodeRates, method: Method) -> Result<EMState> {
        let rates = init.clamped(RATE_FLOOR, 1.0 - RATE_FLOOR);
        let (stats, log_likelihood) = self.stats_for(&rates, method)?;
        Ok(EMState { iteration: 0, rates, stats, log_likelihood })
    }

    fn stats_for(&self, rates: &CodeRates, method: Method) -> Result<(SufficientStats, f64)> {
        match method {
            Method::Em => self.e_step(rates),
            Method::Hem => self.hard_e_step(rates),
        }
    }

    fn step(&self, state: &EMState, method: Method, reg: Option<&RegularizerConfig>) -> Result<EMState> {
        let rates = m_step(&state.stats, &state.rates, reg)?;
        let (stats, log_likelihood) = self.stats_for(&rates, method)?;
        Ok(EMState { iteration: state.iteration + 1, rates, stats, log_likelihood })
    }

    /// M-step on the state's expected counts followed by a fresh E-step.
    pub fn em_step(&self, state: &EMState, reg: Option<&RegularizerConfig>) -> Result<EMState> {
        self.step(state, Method::Em, reg)
    }

    /// Rates set to the MAP-count frequencies, then fresh MAP counts.
    pub fn hem_step(&self, state: &EMState) -> Result<EMState> {
        self.step(state, Method::Hem, None)
    }

    pub fn run(&self, init: &CodeRates, config: RunConfig, reg: Option<&RegularizerConfig>) -> Result<EstimationRun> {
        if config.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if config.method == Method::Hem && reg.is_some() {
            return Err(Error::Unsupported("regularization applies to EM only".into()));
        }
        let start = Instant::now();
        let mut state = self.initial_state(init, config.method)?;
        let record = |s: &EMState, delta: f64| IterationRecord {
            iteration: s.iteration,
            params: s.rates.to_params(),
            log_likelihood: s.log_likelihood,
            max_delta: delta,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        let mut trajectory = vec![record(&state, 0.0)];
        let mut converged = false;
        for _ in 0..config.max_iter {
            let next = self.step(&state, config.method, reg)?;
            let delta = max_abs_diff(&state.rates.to_params(), &next.rates.to_params());
            trajectory.push(record(&next, delta));
            state = next;
            if delta < config.tol {
                converged = true;
                break;
            }
        }
        Ok(EstimationRun { method: config.method, trajectory, converged, final_state: state })
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Normalised counts plus pseudocounts, clamped to `[RATE_FLOOR, 1 - RATE_FLOOR]`.
/// `previous` only supplies the shape.
pub fn m_step(stats: &SufficientStats, previous: &CodeRates, reg: Option<&RegularizerConfig>) -> Result<CodeRates> {
    check_dim(previous.n(), stats.qubits.len())?;
    let mut qubits = Vec::with_capacity(stats.qubits.len());
    for (q, m) in stats.qubits.iter().enumerate() {
        let b = reg.map_or([0.0; 4], |r| r.qubit_pseudocounts(q));
        let w: [f64; 4] = std::array::from_fn(|e| m[e] + b[e]);
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Internal(format!("qubit {} has no counts", q + 1)));
        }
        qubits.push([w[1] / total, w[2] / total, w[3] / total]);
    }
    let flips = match (&stats.flips, &previous.flips) {
        (Some(f), Some(_)) => Some(
            f.iter()
                .enumerate()
                .map(|(k, m)| {
                    let b = reg.map_or([0.0; 2], |r| r.flip_pseudocounts(k));
                    (m[1] + b[1]) / (m[0] + b[0] + m[1] + b[1])
                })
                .collect(),
        ),
        (None, None) => None,
        _ => return Err(Error::invalid("flip statistics do not match the rate shape")),
    };
    let rates = CodeRates { qubits: SingleQubitPauliRates::new(qubits)?, flips };
    Ok(rates.clamped(RATE_FLOOR, 1.0 - RATE_FLOOR))
}

/// How the Dirichlet concentration relates to `α_e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirichletConvention {
    /// Density `∝ Π θ_e^{α_e}`: concentration `α_e + 1`.
    #[default]
    Literal,
    /// Density `∝ Π θ_e^{α_e - 1}`: concentration `α_e`.
    Standard,
}

/// Per-qubit Dirichlet draws centred on `(1 - 3p, p, p, p)` with scale `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletInit {
    pub alpha: f64,
    pub p: f64,
    pub convention: DirichletConvention,
}

impl DirichletInit {
    pub fn new(alpha: f64, p: f64, convention: DirichletConvention) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !(p > 0.0 && p < 1.0 / 3.0) {
            return Err(Error::invalid(format!("p must lie in (0, 1/3), got {p}")));
        }
        Ok(DirichletInit { alpha, p, convention })
    }

    fn shift(&self) -> f64 {
        match self.convention {
            DirichletConvention::Literal => 1.0,
            DirichletConvention::Standard => 0.0,
        }
    }

    /// Concentrations in `I, X, Y, Z` order.
    pub fn concentration(&self) -> [f64; 4] {
        let a = self.alpha;
        let s = self.shift();
        [(1.0 - 3.0 * self.p) * a + s, self.p * a + s, self.p * a + s, self.p * a + s]
    }

    pub fn sample_qubits<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SingleQubitPauliRates {
        let dist = Dirichlet::new(self.concentration()).expect("positive concentrations");
        let rates = (0..n)
            .map(|_| {
                let d: [f64; 4] = dist.sample(rng);
                [d[1], d[2], d[3]]
            })
            .collect();
        SingleQubitPauliRates::new(rates).expect("Dirichlet draws lie on the simplex")
    }

    /// Two-outcome draws with mean near `p_m`, same convention and scale.
    pub fn sample_flips<R: Rng + ?Sized>(&self, l: usize, p_m: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !(p_m > 0.0 && p_m < 1.0) {
            return Err(Error::invalid(format!("p_m must lie in (0, 1), got {p_m}")));
        }
        let s = self.shift();
        let dist = Dirichlet::new([(1.0 - p_m) * self.alpha + s, p_m * self.alpha + s])
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok((0..l).map(|_| dist.sample(rng)[1]).collect())
    }
}

/// Literal-convention draw of per-qubit rates.
pub fn sample_dirichlet_init<R: Rng + ?Sized>(alpha: f64, p: f64, n_qubits: usize, rng: &mut R) -> Result<SingleQubitPauliRates> {
    Ok(DirichletInit::new(alpha, p, DirichletConvention::Literal)?.sample_qubits(n_qubits, rng))
}

/// Flattened `(θ_X, θ_Y, θ_Z)` of qubit `q`.
pub fn qubit_rates(rates: &CodeRates, q: usize) -> [f64; 3] {
    let d = rates.qubits.distribution(q);
    [d[Pauli::X.index()], d[Pauli::Y.index()], d[Pauli::Z.index()]]
}
