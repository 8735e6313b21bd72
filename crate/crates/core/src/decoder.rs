//! Exact inference on the concatenation tree.
//!
//! Every block of the tree is a factor over its `n` child variables (physical
//! Paulis at level 1, logical classes above) and its own logical class. The
//! factor is non-zero only on assignments whose effective Pauli has the
//! block's syndrome. With measurement flips each syndrome bit additionally
//! carries a binary flip variable; summing it out weights every syndrome
//! group `s` by `Π_k (s_k == obs_k ? 1 - p_k : p_k)`.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::codes::{Child, ConcatTree};
use crate::error::{check_dim, Error, Result};
use crate::exec::Exec;
use crate::noise::{sample_shot, CodeRates, ErrorEvent, SingleQubitPauliRates};
use crate::numeric::clopper_pearson;
use crate::pauli::{Pauli, PauliString, StabilizerCode, Syndrome};

/// All `4^n` child assignments of one block, grouped by block syndrome and
/// sorted by `(class, assignment)` inside each group. Assignments are read
/// as base-4 numbers with child 0 most significant and `I < X < Y < Z`.
#[derive(Debug, Clone)]
pub struct BlockFactorTable {
    n: usize,
    l: usize,
    group_start: Vec<usize>,
    digits: Vec<u8>,
    classes: Vec<u8>,
}

impl BlockFactorTable {
    pub fn new(base: &StabilizerCode) -> Result<Self> {
        if base.k() != 1 || base.logicals().len() != 1 {
            return Err(Error::Unsupported("block tables need a k = 1 code with logicals".into()));
        }
        let n = base.n();
        let l = base.l();
        crate::pauli::check_enumeration_budget(n)?;
        let total = 1usize << (2 * n);
        let mut rows: Vec<(usize, u8, usize)> = Vec::with_capacity(total);
        let mut paulis = vec![Pauli::I; n];
        for a in 0..total {
            for (j, p) in paulis.iter_mut().enumerate() {
                *p = Pauli::from_index((a >> (2 * (n - 1 - j))) & 3);
            }
            let e = PauliString::from_paulis(&paulis);
            let s = base.syndrome_unchecked(&e).index().expect("base syndrome fits a word") as usize;
            let class = base.logical_class_unchecked(&e).as_single().expect("k = 1").index() as u8;
            rows.push((s, class, a));
        }
        rows.sort_unstable();
        let mut group_start = vec![0usize; (1 << l) + 1];
        for &(s, _, _) in &rows {
            group_start[s + 1] += 1;
        }
        for s in 0..(1 << l) {
            group_start[s + 1] += group_start[s];
        }
        let mut digits = Vec::with_capacity(total * n);
        let mut classes = Vec::with_capacity(total);
        for &(_, class, a) in &rows {
            digits.extend((0..n).map(|j| ((a >> (2 * (n - 1 - j))) & 3) as u8));
            classes.push(class);
        }
        Ok(BlockFactorTable { n, l, group_start, digits, classes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn n_syndromes(&self) -> usize {
        1 << self.l
    }

    /// Entry indices whose block syndrome is `s`.
    pub fn group(&self, s: usize) -> Range<usize> {
        self.group_start[s]..self.group_start[s + 1]
    }

    /// Child Paulis of an entry, as [`Pauli::index`] values.
    pub fn digits(&self, entry: usize) -> &[u8] {
        &self.digits[entry * self.n..(entry + 1) * self.n]
    }

    pub fn class(&self, entry: usize) -> Pauli {
        Pauli::from_index(self.classes[entry] as usize)
    }
}

/// The concatenated-code factor tree with its current rates.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    tree: Arc<ConcatTree>,
    table: Arc<BlockFactorTable>,
    priors: Vec<[f64; 4]>,
    flips: Option<Vec<f64>>,
}

/// Distribution over the root logical class together with `ln P[S]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootMarginal {
    pub probs: [f64; 4],
    pub log_likelihood: f64,
}

impl RootMarginal {
    /// Most likely class; the smallest index wins exact ties.
    pub fn argmax(&self) -> Pauli {
        let mut best = 0;
        for c in 1..4 {
            if self.probs[c] > self.probs[best] {
                best = c;
            }
        }
        Pauli::from_index(best)
    }

    pub fn is_tied(&self) -> bool {
        let best = self.probs[self.argmax().index()];
        self.probs.iter().filter(|&&p| p == best).count() > 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    /// `leaves[q][e] = P[E_q = e | S]`, indexed by [`Pauli::index`].
    pub leaves: Vec<[f64; 4]>,
    pub root: [f64; 4],
    /// `P[f_k = 1 | S]` for every syndrome bit when flips are modelled.
    pub flips: Option<Vec<f64>>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    pub event: ErrorEvent,
    pub class: Pauli,
    /// `ln P[E, f]` of the returned configuration.
    pub log_probability: f64,
}

pub fn build_factor_graph(
    tree: &ConcatTree,
    rates: &SingleQubitPauliRates,
    meas_rates: Option<&[f64]>,
) -> Result<FactorGraph> {
    let table = BlockFactorTable::new(tree.base())?;
    let rates = CodeRates::new(rates.clone(), meas_rates.map(<[f64]>::to_vec))?;
    FactorGraph::from_parts(Arc::new(tree.clone()), Arc::new(table), &rates)
}

fn block_syndrome(obs: &Bits, offset: usize, l: usize) -> usize {
    (0..l).fold(0, |acc, k| acc | (usize::from(obs.get(offset + k)) << k))
}

fn normalize(v: &mut [f64; 4]) -> f64 {
    let z: f64 = v.iter().sum();
    if z > 0.0 {
        v.iter_mut().for_each(|x| *x /= z);
    }
    z
}

impl FactorGraph {
    fn from_parts(tree: Arc<ConcatTree>, table: Arc<BlockFactorTable>, rates: &CodeRates) -> Result<Self> {
        check_dim(tree.n_leaves(), rates.n())?;
        if let Some(f) = &rates.flips {
            check_dim(tree.syndrome_bits(), f.len())?;
        }
        let priors = (0..rates.n()).map(|q| rates.qubits.distribution(q)).collect();
        Ok(FactorGraph { tree, table, priors, flips: rates.flips.clone() })
    }

    pub fn new(tree: &ConcatTree, rates: &CodeRates) -> Result<Self> {
        let table = BlockFactorTable::new(tree.base())?;
        FactorGraph::from_parts(Arc::new(tree.clone()), Arc::new(table), rates)
    }

    /// Same tree and tables with different rates.
    pub fn with_rates(&self, rates: &CodeRates) -> Result<Self> {
        FactorGraph::from_parts(self.tree.clone(), self.table.clone(), rates)
    }

    pub fn tree(&self) -> &ConcatTree {
        &self.tree
    }

    pub fn table(&self) -> &BlockFactorTable {
        &self.table
    }

    pub fn n_leaves(&self) -> usize {
        self.priors.len()
    }

    pub fn syndrome_bits(&self) -> usize {
        self.tree.syndrome_bits()
    }

    pub fn n_factors(&self) -> usize {
        self.tree.blocks().len()
    }

    /// Leaf qubits, internal class variables and flip variables.
    pub fn n_variables(&self) -> usize {
        let flips = self.flips.as_ref().map_or(0, Vec::len);
        self.n_leaves() + self.n_factors() - 1 + flips
    }

    pub fn has_flips(&self) -> bool {
        self.flips.is_some()
    }

    pub fn rates(&self) -> CodeRates {
        let qubits = self.priors.iter().map(|p| [p[1], p[2], p[3]]).collect();
        CodeRates {
            qubits: SingleQubitPauliRates::new(qubits).expect("rates validated at build"),
            flips: self.flips.clone(),
        }
    }

    fn check_obs(&self, obs: &Syndrome) -> Result<()> {
        check_dim(self.syndrome_bits(), obs.len())
    }

    fn zero_support(obs: &Syndrome) -> Error {
        Error::ZeroSupport { syndrome: obs.to_string() }
    }

    /// `w(s)` for every block syndrome `s`.
    fn flip_weights(&self, flips: &[f64], obs: usize, offset: usize, out: &mut Vec<f64>) {
        let l = self.table.l;
        out.clear();
        for s in 0..(1usize << l) {
            let mut w = 1.0;
            for k in 0..l {
                let p = flips[offset + k];
                w *= if (s >> k) & 1 == (obs >> k) & 1 { 1.0 - p } else { p };
            }
            out.push(w);
        }
    }

    fn child_message<'a>(&'a self, child: &Child, up: &'a [[f64; 4]]) -> &'a [f64; 4] {
        match *child {
            Child::Leaf(q) => &self.priors[q],
            Child::Block(b) => &up[b],
        }
    }

    /// Normalised upward sum-product messages and `ln P[S]`.
    fn upward(&self, obs: &Syndrome) -> Result<(Vec<[f64; 4]>, f64)> {
        let table = &*self.table;
        let blocks = self.tree.blocks();
        let mut up = vec![[0.0; 4]; blocks.len()];
        let mut log_z = 0.0;
        let mut weights = Vec::new();
        let mut msgs = vec![[0.0; 4]; table.n];
        for (b, block) in blocks.iter().enumerate() {
            for (m, child) in msgs.iter_mut().zip(&block.children) {
                *m = *self.child_message(child, &up);
            }
            let s_obs = block_syndrome(obs.bits(), block.syndrome_offset, table.l);
            let mut out = [0.0; 4];
            let accumulate = |s: usize, w: f64, out: &mut [f64; 4]| {
                for e in table.group(s) {
                    let mut prod = w;
                    for (m, &d) in msgs.iter().zip(table.digits(e)) {
                        prod *= m[d as usize];
                    }
                    out[table.classes[e] as usize] += prod;
                }
            };
            match &self.flips {
                None => accumulate(s_obs, 1.0, &mut out),
                Some(f) => {
                    self.flip_weights(f, s_obs, block.syndrome_offset, &mut weights);
                    for (s, &w) in weights.iter().enumerate() {
                        if w > 0.0 {
                            accumulate(s, w, &mut out);
                        }
                    }
                }
            }
            let z = normalize(&mut out);
            if !(z > 0.0) || !z.is_finite() {
                return Err(Self::zero_support(obs));
            }
            log_z += z.ln();
            up[b] = out;
        }
        Ok((up, log_z))
    }

    /// Marginal of the root logical class given the observed syndrome.
    pub fn root_marginal(&self, obs: &Syndrome) -> Result<RootMarginal> {
        self.check_obs(obs)?;
        let (up, log_likelihood) = self.upward(obs)?;
        Ok(RootMarginal { probs: up[self.tree.root()], log_likelihood })
    }

    /// `ln P[S]`.
    pub fn log_likelihood(&self, obs: &Syndrome) -> Result<f64> {
        Ok(self.root_marginal(obs)?.log_likelihood)
    }

    /// Upward and downward passes: per-qubit posteriors, the root marginal
    /// and flip posteriors.
    pub fn posteriors(&self, obs: &Syndrome) -> Result<PosteriorTable> {
        self.check_obs(obs)?;
        let (up, log_likelihood) = self.upward(obs)?;
        let table = &*self.table;
        let n = table.n;
        let blocks = self.tree.blocks();
        let mut down = vec![[0.0; 4]; blocks.len()];
        down[self.tree.root()] = [1.0; 4];
        let mut leaves = vec![[0.0; 4]; self.n_leaves()];
        let mut flip_post = self.flips.as_ref().map(|f| vec![0.0; f.len()]);
        let mut weights = Vec::new();
        let mut msgs = vec![[0.0; 4]; n];
        let mut child_down = vec![[0.0; 4]; n];
        let mut prefix = vec![0.0; n + 1];
        let mut suffix = vec![0.0; n + 1];
        let mut group_mass = vec![0.0; table.n_syndromes()];

        for (b, block) in blocks.iter().enumerate().rev() {
            for (m, child) in msgs.iter_mut().zip(&block.children) {
                *m = *self.child_message(child, &up);
            }
            child_down.iter_mut().for_each(|c| *c = [0.0; 4]);
            let d = down[b];
            let s_obs = block_syndrome(obs.bits(), block.syndrome_offset, table.l);
            let mut visit = |s: usize, w: f64| -> f64 {
                let mut mass = 0.0;
                for e in table.group(s) {
                    let digits = table.digits(e);
                    let base = w * d[table.classes[e] as usize];
                    if base == 0.0 {
                        continue;
                    }
                    prefix[0] = 1.0;
                    for j in 0..n {
                        prefix[j + 1] = prefix[j] * msgs[j][digits[j] as usize];
                    }
                    suffix[n] = 1.0;
                    for j in (0..n).rev() {
                        suffix[j] = suffix[j + 1] * msgs[j][digits[j] as usize];
                    }
                    for j in 0..n {
                        child_down[j][digits[j] as usize] += base * prefix[j] * suffix[j + 1];
                    }
                    mass += base * prefix[n];
                }
                mass
            };
            match &self.flips {
                None => {
                    visit(s_obs, 1.0);
                }
                Some(f) => {
                    self.flip_weights(f, s_obs, block.syndrome_offset, &mut weights);
                    for (s, &w) in weights.iter().enumerate() {
                        group_mass[s] = if w > 0.0 { visit(s, w) } else { 0.0 };
                    }
                    let total: f64 = group_mass.iter().sum();
                    let post = flip_post.as_mut().expect("flips present");
                    for k in 0..table.l {
                        let flipped: f64 = group_mass
                            .iter()
                            .enumerate()
                            .filter(|(s, _)| (s >> k) & 1 != (s_obs >> k) & 1)
                            .map(|(_, m)| m)
                            .sum();
                        post[block.syndrome_offset + k] = flipped / total;
                    }
                }
            }
            for (j, child) in block.children.iter().enumerate() {
                let mut msg = child_down[j];
                normalize(&mut msg);
                match *child {
                    Child::Leaf(q) => {
                        let prior = &self.priors[q];
                        let mut post = [0.0; 4];
                        for e in 0..4 {
                            post[e] = prior[e] * msg[e];
                        }
                        if !(normalize(&mut post) > 0.0) {
                            return Err(Self::zero_support(obs));
                        }
                        leaves[q] = post;
                    }
                    Child::Block(c) => down[c] = msg,
                }
            }
        }
        Ok(PosteriorTable { leaves, root: up[self.tree.root()], flips: flip_post, log_likelihood })
    }

    /// Most likely `(E, f)` given the syndrome, by max-product.
    ///
    /// Ties are resolved toward the first candidate in iteration order: flip
    /// patterns ascending, then table order `(class, assignment)`, and the
    /// smallest root class.
    pub fn map_error(&self, obs: &Syndrome) -> Result<MapEstimate> {
        self.check_obs(obs)?;
        let table = &*self.table;
        let blocks = self.tree.blocks();
        let mut up = vec![[0.0; 4]; blocks.len()];
        // per block and class: (entry, block syndrome)
        let mut choice = vec![[(usize::MAX, 0usize); 4]; blocks.len()];
        let mut log_scale = 0.0;
        let mut weights = Vec::new();
        let mut msgs = vec![[0.0; 4]; table.n];
        for (b, block) in blocks.iter().enumerate() {
            for (m, child) in msgs.iter_mut().zip(&block.children) {
                *m = *self.child_message(child, &up);
            }
            let s_obs = block_syndrome(obs.bits(), block.syndrome_offset, table.l);
            let mut best = [0.0f64; 4];
            let best_choice = &mut choice[b];
            let mut visit = |s: usize, w: f64| {
                for e in table.group(s) {
                    let mut prod = w;
                    for (m, &d) in msgs.iter().zip(table.digits(e)) {
                        prod *= m[d as usize];
                    }
                    let c = table.classes[e] as usize;
                    if prod > best[c] {
                        best[c] = prod;
                        best_choice[c] = (e, s);
                    }
                }
            };
            match &self.flips {
                None => visit(s_obs, 1.0),
                Some(f) => {
                    self.flip_weights(f, s_obs, block.syndrome_offset, &mut weights);
                    for (s, &w) in weights.iter().enumerate() {
                        if w > 0.0 {
                            visit(s, w);
                        }
                    }
                }
            }
            let max = best.iter().copied().fold(0.0, f64::max);
            if !(max > 0.0) || !max.is_finite() {
                return Err(Self::zero_support(obs));
            }
            best.iter_mut().for_each(|v| *v /= max);
            log_scale += max.ln();
            up[b] = best;
        }

        let root = self.tree.root();
        let mut root_class = 0;
        for c in 1..4 {
            if up[root][c] > up[root][root_class] {
                root_class = c;
            }
        }
        let log_probability = log_scale + up[root][root_class].ln();

        let mut data = PauliString::identity(self.n_leaves());
        let mut flips = Bits::zeros(self.syndrome_bits());
        let mut stack = vec![(root, root_class)];
        while let Some((b, c)) = stack.pop() {
            let (e, s) = choice[b][c];
            let block = &blocks[b];
            let s_obs = block_syndrome(obs.bits(), block.syndrome_offset, table.l);
            for k in 0..table.l {
                if (s ^ s_obs) >> k & 1 == 1 {
                    flips.set(block.syndrome_offset + k, true);
                }
            }
            for (child, &d) in block.children.iter().zip(table.digits(e)) {
                match *child {
                    Child::Leaf(q) => data.set(q, Pauli::from_index(d as usize)),
                    Child::Block(cb) => stack.push((cb, d as usize)),
                }
            }
        }
        Ok(MapEstimate {
            event: ErrorEvent::new(data, flips),
            class: Pauli::from_index(root_class),
            log_probability,
        })
    }
}

/// Shots from a fixed truth model, grouped by observed syndrome with counts
/// of the true logical class. Decoders compared on the same set share their
/// random numbers.
#[derive(Debug, Clone)]
pub struct DecodeTestSet {
    entries: Vec<(Syndrome, [u64; 4])>,
    trials: u64,
}

impl DecodeTestSet {
    pub fn sample<R: Rng + ?Sized>(
        code: &StabilizerCode,
        truth: &CodeRates,
        n_trials: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_trials == 0 {
            return Err(Error::invalid("n_trials must be positive"));
        }
        check_dim(code.n(), truth.n())?;
        if code.k() != 1 {
            return Err(Error::Unsupported("logical error rates need k = 1".into()));
        }
        let mut counts: HashMap<Syndrome, [u64; 4]> = HashMap::new();
        for _ in 0..n_trials {
            let shot = sample_shot(code, truth, rng);
            let class = shot.class.as_single().expect("k = 1").index();
            counts.entry(shot.syndrome).or_insert([0; 4])[class] += 1;
        }
        let mut entries: Vec<_> = counts.into_iter().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        Ok(DecodeTestSet { entries, trials: n_trials })
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn unique_syndromes(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(Syndrome, [u64; 4])] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogicalErrorRate {
    pub failures: u64,
    pub trials: u64,
    pub rate: f64,
    /// 95% Clopper-Pearson interval.
    pub ci: (f64, f64),
    /// Trials whose syndrome produced an exact tie between class masses.
    pub ties: u64,
}

/// Fraction of test shots whose most likely root class differs from the
/// true class.
pub fn logical_error_rate(graph: &FactorGraph, tests: &DecodeTestSet, exec: Exec) -> Result<LogicalErrorRate> {
    let per = exec.map(tests.entries(), |(s, counts)| -> Result<(u64, u64)> {
        let m = graph.root_marginal(s)?;
        let total: u64 = counts.iter().sum();
        let fail = total - counts[m.argmax().index()];
        Ok((fail, if m.is_tied() { total } else { 0 }))
    });
    let mut failures = 0;
    let mut ties = 0;
    for r in per {
        let (f, t) = r?;
        failures += f;
        ties += t;
    }
    let trials = tests.trials();
    Ok(LogicalErrorRate {
        failures,
        trials,
        rate: failures as f64 / trials as f64,
        ci: clopper_pearson(failures, trials, 0.95),
        ties,
    })
}

/// Samples a fresh test set from `truth` and decodes it with `graph`.
pub fn sampled_logical_error_rate<R: Rng + ?Sized>(
    graph: &FactorGraph,
    truth: &CodeRates,
    n_trials: u64,
    rng: &mut R,
) -> Result<LogicalErrorRate> {
    let code = graph.tree().to_code()?;
    let tests = DecodeTestSet::sample(&code, truth, n_trials, rng)?;
    logical_error_rate(graph, &tests, Exec::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{concatenate, five_qubit_code, repetition_code, ConcatSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn level(base: StabilizerCode, levels: usize) -> ConcatTree {
        concatenate(&ConcatSpec::new(base, levels)).unwrap()
    }

    #[test]
    fn table_partitions_assignments() {
        let table = BlockFactorTable::new(&five_qubit_code()).unwrap();
        assert_eq!(table.len(), 1024);
        for s in 0..16 {
            assert_eq!(table.group(s).len(), 64);
        }
        // each group: 16 entries per class
        for s in 0..16 {
            let mut per = [0; 4];
            for e in table.group(s) {
                per[table.class(e).index()] += 1;
            }
            assert_eq!(per, [16; 4]);
        }
    }

    #[test]
    fn graph_sizes() {
        let r1 = CodeRates::depolarizing(5, 0.1).unwrap();
        let g1 = FactorGraph::new(&level(five_qubit_code(), 1), &r1).unwrap();
        assert_eq!((g1.n_leaves(), g1.n_factors(), g1.n_variables()), (5, 1, 5));
        let r2 = CodeRates::phenomenological(25, 24, 0.1, 0.01).unwrap();
        let g2 = FactorGraph::new(&level(five_qubit_code(), 2), &r2).unwrap();
        assert_eq!((g2.n_leaves(), g2.n_factors(), g2.n_variables()), (25, 6, 25 + 5 + 24));
        assert!(matches!(
            FactorGraph::new(&level(five_qubit_code(), 2), &r1),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_syndrome_prefers_identity() {
        let g = FactorGraph::new(&level(five_qubit_code(), 1), &CodeRates::depolarizing(5, 0.01).unwrap())
            .unwrap();
        let m = g.root_marginal(&Syndrome::zeros(4)).unwrap();
        assert_eq!(m.argmax(), Pauli::I);
        let map = g.map_error(&Syndrome::zeros(4)).unwrap();
        assert!(map.event.is_identity());
    }

    #[test]
    fn map_single_error() {
        let code = five_qubit_code();
        let g = FactorGraph::new(&level(code.clone(), 1), &CodeRates::depolarizing(5, 0.13).unwrap()).unwrap();
        let x1 = PauliString::single(5, 0, Pauli::X);
        let s = code.syndrome(&x1).unwrap();
        let map = g.map_error(&s).unwrap();
        assert_eq!(map.event.data, x1);
        // brute-force argmax over the 64-element coset
        let p = 0.13f64;
        let best = code
            .enumerate_coset(&s)
            .unwrap()
            .into_iter()
            .max_by(|a, b| a.weight().cmp(&b.weight()).reverse())
            .unwrap();
        assert_eq!(best, x1);
        let expect = (p.ln()) + 4.0 * (1.0 - 3.0 * p).ln();
        assert!((map.log_probability - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_support_is_reported() {
        let g = FactorGraph::new(&level(five_qubit_code(), 1), &CodeRates::depolarizing(5, 0.0).unwrap())
            .unwrap();
        let s: Syndrome = "1000".parse().unwrap();
        assert!(matches!(g.root_marginal(&s), Err(Error::ZeroSupport { .. })));
        assert!(matches!(g.posteriors(&s), Err(Error::ZeroSupport { .. })));
        assert!(matches!(g.map_error(&s), Err(Error::ZeroSupport { .. })));
    }

    /// Full-enumeration oracle over the explicit concatenated code.
    fn enumerate_posteriors(code: &StabilizerCode, rates: &CodeRates, obs: &Syndrome) -> (f64, [f64; 4], Vec<[f64; 4]>) {
        let n = code.n();
        let mut ps = 0.0;
        let mut root = [0.0; 4];
        let mut leaves = vec![[0.0; 4]; n];
        crate::pauli::for_each_packed(n, |x, z| {
            let e = PauliString::from_packed(n, x, z);
            if &code.syndrome_unchecked(&e) != obs {
                return;
            }
            let p: f64 = (0..n).map(|q| rates.qubits.rate(q, e.get(q))).product();
            ps += p;
            root[code.logical_class_unchecked(&e).as_single().unwrap().index()] += p;
            for q in 0..n {
                leaves[q][e.get(q).index()] += p;
            }
        });
        root.iter_mut().for_each(|v| *v /= ps);
        leaves.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v /= ps));
        (ps, root, leaves)
    }

    #[test]
    fn two_level_repetition_matches_enumeration() {
        let tree = level(repetition_code(3).unwrap(), 2);
        let code = tree.to_code().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let qubits = (0..9)
            .map(|_| {
                let r: [f64; 3] = [rng.random::<f64>() * 0.2, rng.random::<f64>() * 0.1, rng.random::<f64>() * 0.2];
                r
            })
            .collect();
        let rates = CodeRates::new(SingleQubitPauliRates::new(qubits).unwrap(), None).unwrap();
        let g = FactorGraph::new(&tree, &rates).unwrap();
        let mut total = 0.0;
        for idx in 0..(1u64 << 8) {
            let s = Syndrome::from_index(8, idx);
            let (ps, root, leaves) = enumerate_posteriors(&code, &rates, &s);
            let post = g.posteriors(&s).unwrap();
            assert!((post.log_likelihood - ps.ln()).abs() < 1e-10);
            total += post.log_likelihood.exp();
            for c in 0..4 {
                assert!((post.root[c] - root[c]).abs() < 1e-10);
            }
            for q in 0..9 {
                for e in 0..4 {
                    assert!((post.leaves[q][e] - leaves[q][e]).abs() < 1e-10, "q{q} e{e} s{s}");
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn flip_posteriors_match_enumeration() {
        let code = five_qubit_code();
        let tree = level(code.clone(), 1);
        let rates = CodeRates::phenomenological(5, 4, 0.05, 0.03).unwrap();
        let model = rates.to_model(4).unwrap();
        let marg = model.syndrome_marginals(&code, crate::noise::DEFAULT_BUDGET).unwrap();
        let g = FactorGraph::new(&tree, &rates).unwrap();
        for (s, m) in &marg {
            let post = g.posteriors(s).unwrap();
            assert!((post.log_likelihood - m.probability.ln()).abs() < 1e-10);
            for q in 0..5 {
                for e in 0..4 {
                    assert!((post.leaves[q][e] - m.posterior(q, e)).abs() < 1e-10);
                }
            }
            let flips = post.flips.unwrap();
            for k in 0..4 {
                assert!((flips[k] - m.posterior(5 + k, 1)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn map_with_flips_explains_lone_bit() {
        // a single lit bit is cheaper as a flip than as a weight-2 data error
        let code = five_qubit_code();
        let g = FactorGraph::new(&level(code, 1), &CodeRates::phenomenological(5, 4, 0.01, 0.02).unwrap()).unwrap();
        let s: Syndrome = "0001".parse().unwrap();
        let map = g.map_error(&s).unwrap();
        let weight_one = map.event.data.weight() == 1 && map.event.flips.is_zero();
        let flip_only = map.event.data.is_identity() && map.event.flips.count_ones() == 1;
        assert!(weight_one || flip_only);
    }

    #[test]
    fn zero_noise_decoder_never_fails() {
        let tree = level(five_qubit_code(), 2);
        let code = tree.to_code().unwrap();
        let truth = CodeRates::depolarizing(25, 0.0).unwrap();
        let g = FactorGraph::new(&tree, &CodeRates::depolarizing(25, 0.05).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = DecodeTestSet::sample(&code, &truth, 1000, &mut rng).unwrap();
        let r = logical_error_rate(&g, &set, Exec::default()).unwrap();
        assert_eq!(r.failures, 0);
        assert_eq!(r.ci.0, 0.0);
    }
}
