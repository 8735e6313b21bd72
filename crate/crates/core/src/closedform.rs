//! Closed-form rate estimators from low-order syndrome moments under
//! independent binary noise.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{check_dim, Error, Result};
use crate::pauli::{Pauli, PauliString, StabilizerCode};

const DENOM_GUARD: f64 = 1e-9;
const PRODUCT_SLACK: f64 = 1e-9;
const EXACT_TOL: f64 = 1e-12;
const MAX_BINARY_ERRORS: usize = 24;

/// Independent binary errors `X_q` with rates `θ_q`, each flipping a fixed
/// set of syndrome bits.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCircuitModel {
    l: usize,
    incidence: Vec<Bits>,
    rates: Vec<f64>,
}

impl BinaryCircuitModel {
    pub fn new(l: usize, incidence: Vec<Bits>, rates: Vec<f64>) -> Result<Self> {
        check_dim(incidence.len(), rates.len())?;
        for b in &incidence {
            check_dim(l, b.len())?;
        }
        for &r in &rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("rate {r} outside [0, 1]")));
            }
        }
        Ok(BinaryCircuitModel { l, incidence, rates })
    }

    /// Elementary errors given as Paulis on `code`; incidence is their syndrome.
    pub fn from_code(code: &StabilizerCode, errors: &[PauliString], rates: Vec<f64>) -> Result<Self> {
        let incidence = errors
            .iter()
            .map(|e| Ok(code.syndrome(e)?.bits().clone()))
            .collect::<Result<Vec<_>>>()?;
        BinaryCircuitModel::new(code.l(), incidence, rates)
    }

    /// One `X` error per qubit.
    pub fn x_only(code: &StabilizerCode, rates: Vec<f64>) -> Result<Self> {
        let n = code.n();
        let errors: Vec<_> = (0..n).map(|q| PauliString::single(n, q, Pauli::X)).collect();
        BinaryCircuitModel::from_code(code, &errors, rates)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn incidence(&self) -> &[Bits] {
        &self.incidence
    }

    /// Indices of the errors flipping bit `i`.
    pub fn errors_on_bit(&self, i: usize) -> Vec<usize> {
        (0..self.m()).filter(|&q| self.incidence[q].get(i)).collect()
    }

    fn check_budget(&self) -> Result<()> {
        if self.m() > MAX_BINARY_ERRORS {
            return Err(Error::Budget { required: 1 << self.m(), limit: 1 << MAX_BINARY_ERRORS });
        }
        Ok(())
    }

    /// Visits every error pattern with its probability and syndrome.
    fn for_each_pattern(&self, mut f: impl FnMut(u64, f64, &Bits)) -> Result<()> {
        self.check_budget()?;
        for pattern in 0..(1u64 << self.m()) {
            let mut p = 1.0;
            let mut s = Bits::zeros(self.l);
            for (q, (&r, inc)) in self.rates.iter().zip(&self.incidence).enumerate() {
                if (pattern >> q) & 1 == 1 {
                    p *= r;
                    s.xor_assign(inc);
                } else {
                    p *= 1.0 - r;
                }
            }
            f(pattern, p, &s);
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Bits {
        let mut s = Bits::zeros(self.l);
        for (&r, inc) in self.rates.iter().zip(&self.incidence) {
            if rng.random::<f64>() < r {
                s.xor_assign(inc);
            }
        }
        s
    }
}

/// First and second syndrome moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyndromeMoments {
    pub mean: Vec<f64>,
    /// `pair[i][j] = E[S_i S_j]`.
    pub pair: Vec<Vec<f64>>,
    /// `None` for exact moments.
    pub samples: Option<u64>,
}

impl SyndromeMoments {
    pub fn exact(model: &BinaryCircuitModel) -> Result<Self> {
        let l = model.l();
        let mut mean = vec![0.0; l];
        let mut pair = vec![vec![0.0; l]; l];
        model.for_each_pattern(|_, p, s| {
            for i in 0..l {
                if s.get(i) {
                    mean[i] += p;
                    for j in 0..l {
                        if s.get(j) {
                            pair[i][j] += p;
                        }
                    }
                }
            }
        })?;
        Ok(SyndromeMoments { mean, pair, samples: None })
    }

    /// Plug-in estimates from observed syndromes.
    pub fn from_samples(samples: &[Bits]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::invalid("no samples"))?;
        let l = first.len();
        let mut mean = vec![0.0; l];
        let mut pair = vec![vec![0.0; l]; l];
        for s in samples {
            check_dim(l, s.len())?;
            for i in s.ones() {
                mean[i] += 1.0;
                for j in s.ones() {
                    pair[i][j] += 1.0;
                }
            }
        }
        let n = samples.len() as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        pair.iter_mut().flatten().for_each(|v| *v /= n);
        Ok(SyndromeMoments { mean, pair, samples: Some(samples.len() as u64) })
    }

    /// `E[S_i ⊕ S_j] = E[S_i] + E[S_j] - 2 E[S_i S_j]`.
    pub fn xor(&self, i: usize, j: usize) -> f64 {
        self.mean[i] + self.mean[j] - 2.0 * self.pair[i][j]
    }
}

/// `θ(1 - θ) = (E[S1 S2] - E[S1] E[S2]) / (1 - 2 E[S1 ⊕ S2])`, solved for the
/// root `θ <= 1/2`.
pub fn so1_estimate(e1: f64, e2: f64, e12: f64, exor: f64) -> Result<f64> {
    let denom = 1.0 - 2.0 * exor;
    if denom.abs() <= DENOM_GUARD {
        return Err(Error::IllConditioned(format!("1 - 2E[S1 xor S2] = {denom:e}")));
    }
    let product = (e12 - e1 * e2) / denom;
    if !(-PRODUCT_SLACK..=0.25 + PRODUCT_SLACK).contains(&product) {
        return Err(Error::InconsistentMoments(format!("θ(1-θ) = {product} outside [0, 1/4]")));
    }
    let product = product.clamp(0.0, 0.25);
    Ok((1.0 - (1.0 - 4.0 * product).sqrt()) / 2.0)
}

pub fn so1_from_moments(m: &SyndromeMoments, i: usize, j: usize) -> Result<f64> {
    so1_estimate(m.mean[i], m.mean[j], m.pair[i][j], m.xor(i, j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct So2Estimate {
    pub rate: f64,
    /// The unclamped solution left `[0, 1]`.
    pub out_of_range: bool,
}

/// Solves `1 - 2θ_1 = (1 - 2E[S]) / Π_{i>=2} (1 - 2θ_i)` for `θ_1`.
pub fn so2_estimate(mean_s: f64, known: &[f64]) -> Result<So2Estimate> {
    let mut prod = 1.0;
    for &t in known {
        let f = 1.0 - 2.0 * t;
        if f.abs() <= DENOM_GUARD {
            return Err(Error::IllConditioned(format!("known rate {t} is too close to 1/2")));
        }
        prod *= f;
    }
    let raw = (1.0 - (1.0 - 2.0 * mean_s) / prod) / 2.0;
    Ok(So2Estimate { rate: raw.clamp(0.0, 1.0), out_of_range: !(0.0..=1.0).contains(&raw) })
}

/// `Π_q (1 - 2θ_q)` over the errors flipping bit `i`, and `1 - 2E[S_i]`.
pub fn so2_identity_sides(model: &BinaryCircuitModel, moments: &SyndromeMoments, i: usize) -> (f64, f64) {
    let lhs = model.errors_on_bit(i).iter().map(|&q| 1.0 - 2.0 * model.rates()[q]).product();
    (lhs, 1.0 - 2.0 * moments.mean[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct So1Preconditions {
    pub bits: (usize, usize),
    pub error: usize,
    pub equal_parity_independent: bool,
    pub symmetric_flip: bool,
    pub conditionally_independent: bool,
}

impl So1Preconditions {
    pub fn all_hold(&self) -> bool {
        self.equal_parity_independent && self.symmetric_flip && self.conditionally_independent
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.equal_parity_independent {
            out.push("P[S1=S2|X] != P[S1=S2]");
        }
        if !self.symmetric_flip {
            out.push("P[Si=1|X] != P[Si=0|not X]");
        }
        if !self.conditionally_independent {
            out.push("S1 and S2 dependent given X");
        }
        out
    }
}

/// Exact check of the three pairwise conditions for bits `(i, j)` and error `q`.
pub fn check_so1_preconditions(model: &BinaryCircuitModel, i: usize, j: usize, q: usize) -> Result<So1Preconditions> {
    if i >= model.l() || j >= model.l() || i == j {
        return Err(Error::invalid(format!("bad syndrome bit pair ({i}, {j})")));
    }
    if q >= model.m() {
        return Err(Error::invalid(format!("error index {q} out of range")));
    }
    // joint[x][s_i][s_j]
    let mut joint = [[[0.0f64; 2]; 2]; 2];
    model.for_each_pattern(|pattern, p, s| {
        let x = ((pattern >> q) & 1) as usize;
        joint[x][usize::from(s.get(i))][usize::from(s.get(j))] += p;
    })?;
    let px: [f64; 2] = std::array::from_fn(|x| joint[x].iter().flatten().sum());
    let cond = |x: usize, a: usize, b: usize| if px[x] > 0.0 { joint[x][a][b] / px[x] } else { 0.0 };
    let equal_given = |x: usize| cond(x, 0, 0) + cond(x, 1, 1);
    let equal_total: f64 = (0..2).map(|x| joint[x][0][0] + joint[x][1][1]).sum();
    let live: Vec<usize> = (0..2).filter(|&x| px[x] > 0.0).collect();
    let equal_parity_independent = live.iter().all(|&x| (equal_given(x) - equal_total).abs() <= EXACT_TOL);
    let marg_i = |x: usize, v: usize| cond(x, v, 0) + cond(x, v, 1);
    let marg_j = |x: usize, v: usize| cond(x, 0, v) + cond(x, 1, v);
    let symmetric_flip = (marg_i(1, 1) - marg_i(0, 0)).abs() <= EXACT_TOL
        && (marg_j(1, 1) - marg_j(0, 0)).abs() <= EXACT_TOL;
    let conditionally_independent = live.iter().all(|&x| {
        (0..2).all(|a| (0..2).all(|b| (cond(x, a, b) - marg_i(x, a) * marg_j(x, b)).abs() <= EXACT_TOL))
    });
    Ok(So1Preconditions { bits: (i, j), error: q, equal_parity_independent, symmetric_flip, conditionally_independent })
}

/// Every `(i, j, q)` with `q` flipping both bits and all three conditions met.
pub fn so1_applicable_triples(model: &BinaryCircuitModel) -> Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    for i in 0..model.l() {
        for j in (i + 1)..model.l() {
            for q in 0..model.m() {
                if model.incidence[q].get(i) && model.incidence[q].get(j) && check_so1_preconditions(model, i, j, q)?.all_hold() {
                    out.push((i, j, q));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationCount {
    pub pair_equations: usize,
    pub single_equations: usize,
    pub parameters: usize,
}

impl EquationCount {
    pub fn total(&self) -> usize {
        self.pair_equations + self.single_equations
    }
}

/// Upper bound on equations from pairwise and single-bit moments of `l`
/// syndrome bits, against `parameters` unknowns.
pub fn equation_count(l: usize, parameters: usize) -> EquationCount {
    EquationCount { pair_equations: l * l.saturating_sub(1) / 2, single_equations: l, parameters }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: usize,
}

/// Multinomial resample of counts over four `(S_i, S_j)` cells.
fn resample4<R: Rng + ?Sized>(counts: [u64; 4], rng: &mut R) -> [u64; 4] {
    let mut n = counts.iter().sum::<u64>();
    let mut rest = n as f64;
    let mut out = [0u64; 4];
    for k in 0..3 {
        let p = if rest > 0.0 { (counts[k] as f64 / rest).min(1.0) } else { 0.0 };
        out[k] = if n == 0 || p == 0.0 { 0 } else { Binomial::new(n, p).expect("valid binomial").sample(rng) };
        n -= out[k];
        rest -= counts[k] as f64;
    }
    out[3] = n;
    out
}

fn so1_from_cells(c: [u64; 4]) -> Result<f64> {
    let n = c.iter().sum::<u64>() as f64;
    let e1 = (c[2] + c[3]) as f64 / n;
    let e2 = (c[1] + c[3]) as f64 / n;
    let e12 = c[3] as f64 / n;
    let exor = (c[1] + c[2]) as f64 / n;
    so1_estimate(e1, e2, e12, exor)
}

/// SO-1 from samples with a nonparametric bootstrap standard error.
pub fn bootstrap_so1<R: Rng + ?Sized>(samples: &[Bits], i: usize, j: usize, replicates: usize, rng: &mut R) -> Result<BootstrapEstimate> {
    if samples.is_empty() || replicates < 2 {
        return Err(Error::invalid("bootstrap needs samples and at least two replicates"));
    }
    // cells indexed by 2 S_i + S_j
    let mut cells = [0u64; 4];
    for s in samples {
        cells[2 * usize::from(s.get(i)) + usize::from(s.get(j))] += 1;
    }
    let estimate = so1_from_cells(cells)?;
    let reps: Vec<f64> = (0..replicates).filter_map(|_| so1_from_cells(resample4(cells, rng)).ok()).collect();
    if reps.len() < 2 {
        return Err(Error::IllConditioned("bootstrap replicates all failed".into()));
    }
    Ok(BootstrapEstimate { estimate, std_error: crate::numeric::variance(&reps).sqrt(), replicates: reps.len() })
}

/// SO-2 from samples of bit `i` with a bootstrap standard error.
pub fn bootstrap_so2<R: Rng + ?Sized>(samples: &[Bits], i: usize, known: &[f64], replicates: usize, rng: &mut R) -> Result<BootstrapEstimate> {
    if samples.is_empty() || replicates < 2 {
        return Err(Error::invalid("bootstrap needs samples and at least two replicates"));
    }
    let n = samples.len() as u64;
    let ones = samples.iter().filter(|s| s.get(i)).count() as u64;
    let estimate = so2_estimate(ones as f64 / n as f64, known)?.rate;
    let binom = Binomial::new(n, ones as f64 / n as f64).map_err(|e| Error::invalid(e.to_string()))?;
    let reps = (0..replicates)
        .map(|_| Ok(so2_estimate(binom.sample(rng) as f64 / n as f64, known)?.rate))
        .collect::<Result<Vec<f64>>>()?;
    Ok(BootstrapEstimate { estimate, std_error: crate::numeric::variance(&reps).sqrt(), replicates })
}
