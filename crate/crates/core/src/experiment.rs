//! Seeded estimation experiments: sample initializations and datasets, run
//! EM or HEM, and score the estimates against the truth.
//!
//! Randomness: trial `t` draws its initialization and dataset from the ChaCha8
//! stream `2t + 1` of the master seed, and its own decode test set (when the
//! truth varies per trial) from stream `2t + 2`. Stream 0 holds the shared
//! decode test set. Results therefore do not depend on trial scheduling.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codes::{concatenate, CodeSpec, ConcatSpec, ConcatTree};
use crate::decoder::{logical_error_rate, DecodeTestSet, FactorGraph, LogicalErrorRate};
use crate::error::{Error, Result};
use crate::estimate::{
    DirichletConvention, DirichletInit, EstimationProblem, IterationRecord, Method, RegularizerConfig, RunConfig,
    SyndromeDataset, DEFAULT_TOL,
};
use crate::exec::Exec;
use crate::fisher::{crb, fisher_exact, fisher_mc, CRBReport};
use crate::noise::{CodeRates, DEFAULT_BUDGET};
use crate::numeric::{mean, quantile_sorted};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Em,
    Hem,
    Both,
}

impl EstimatorChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            EstimatorChoice::Em => vec![Method::Em],
            EstimatorChoice::Hem => vec![Method::Hem],
            EstimatorChoice::Both => vec![Method::Em, Method::Hem],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Truth fixed at `p`; initialization drawn around it.
    #[default]
    Dirichlet,
    /// Initialization fixed at `p`; truth drawn around it.
    FixedInitRandomTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub code: CodeSpec,
    pub levels: usize,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_m: Option<f64>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub n_est: usize,
    pub n_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub estimator: EstimatorChoice,
    pub n_trials: usize,
    /// Zero skips logical error rates.
    #[serde(default)]
    pub n_decode_trials: u64,
    /// Iterations at which estimates are decoded; past convergence the final
    /// estimate is used.
    #[serde(default)]
    pub decode_iterations: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default)]
    pub convention: DirichletConvention,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl ExperimentConfig {
    /// Five-qubit code at `p = 0.13`, `α = 20`, `n_est = 1000`, both estimators.
    pub fn desk_default(seed: u64) -> Self {
        ExperimentConfig {
            code: CodeSpec::FiveQubit,
            levels: 2,
            p: 0.13,
            p_m: None,
            alpha: 20.0,
            beta: None,
            n_est: 1000,
            n_iter: 5,
            tol: DEFAULT_TOL,
            estimator: EstimatorChoice::Both,
            n_trials: 100,
            n_decode_trials: 0,
            decode_iterations: Vec::new(),
            seed,
            init: InitMode::Dirichlet,
            convention: DirichletConvention::Literal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("levels", self.levels),
            ("n_est", self.n_est),
            ("n_iter", self.n_iter),
            ("n_trials", self.n_trials),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        DirichletInit::new(self.alpha, self.p, self.convention)?;
        if let Some(pm) = self.p_m {
            if !(pm > 0.0 && pm < 0.5) {
                return Err(Error::invalid(format!("p_m must lie in (0, 1/2), got {pm}")));
            }
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::invalid(format!("beta must be nonnegative, got {b}")));
            }
            if self.estimator != EstimatorChoice::Em {
                return Err(Error::invalid("beta applies to the em estimator only"));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be nonnegative"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn tree(&self) -> Result<ConcatTree> {
        concatenate(&ConcatSpec::new(self.code.build()?, self.levels))
    }

    /// Rates at the centre of the Dirichlet draws.
    pub fn centre_rates(&self, tree: &ConcatTree) -> Result<CodeRates> {
        match self.p_m {
            Some(pm) => CodeRates::phenomenological(tree.n_leaves(), tree.syndrome_bits(), self.p, pm),
            None => CodeRates::depolarizing(tree.n_leaves(), self.p),
        }
    }

    fn draw_rates(&self, tree: &ConcatTree, rng: &mut ChaCha8Rng) -> Result<CodeRates> {
        let d = DirichletInit::new(self.alpha, self.p, self.convention)?;
        let qubits = d.sample_qubits(tree.n_leaves(), rng);
        let flips = self.p_m.map(|pm| d.sample_flips(tree.syndrome_bits(), pm, rng)).transpose()?;
        CodeRates::new(qubits, flips)
    }
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodePoint {
    pub iteration: usize,
    pub ler: LogicalErrorRate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodTrace {
    pub method: Method,
    pub trajectory: Vec<IterationRecord>,
    pub converged: bool,
    pub decoded: Vec<DecodePoint>,
}

impl MethodTrace {
    /// Parameters after `iteration` steps, or the final ones past convergence.
    pub fn params_at(&self, iteration: usize) -> &[f64] {
        let i = iteration.min(self.trajectory.len() - 1);
        &self.trajectory[i].params
    }

    pub fn final_params(&self) -> &[f64] {
        &self.trajectory.last().expect("nonempty trajectory").params
    }

    pub fn steps(&self) -> usize {
        self.trajectory.len() - 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub truth: Vec<f64>,
    pub init: Vec<f64>,
    pub init_ler: Option<LogicalErrorRate>,
    /// Per-trial only when the truth varies between trials.
    pub perfect_ler: Option<LogicalErrorRate>,
    pub runs: Vec<MethodTrace>,
    /// Numerical failure that aborted this trial.
    pub error: Option<String>,
}

impl TrialResult {
    pub fn run(&self, method: Method) -> Option<&MethodTrace> {
        self.runs.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub param_labels: Vec<String>,
    pub perfect_ler: Option<LogicalErrorRate>,
    pub trials: Vec<TrialResult>,
}

struct Shared {
    tree: ConcatTree,
    template: FactorGraph,
    centre: CodeRates,
    tests: Option<DecodeTestSet>,
}

fn run_trial(config: &ExperimentConfig, shared: &Shared, trial: usize, exec: Exec) -> TrialResult {
    let mut rng = stream(config.seed, 2 * trial as u64 + 1);
    let mut result = TrialResult {
        trial,
        truth: Vec::new(),
        init: Vec::new(),
        init_ler: None,
        perfect_ler: None,
        runs: Vec::new(),
        error: None,
    };
    if let Err(e) = fill_trial(config, shared, trial, exec, &mut rng, &mut result) {
        result.error = Some(e.to_string());
    }
    result
}

fn fill_trial(
    config: &ExperimentConfig,
    shared: &Shared,
    trial: usize,
    exec: Exec,
    rng: &mut ChaCha8Rng,
    out: &mut TrialResult,
) -> Result<()> {
    let (truth, init) = match config.init {
        InitMode::Dirichlet => (shared.centre.clone(), config.draw_rates(&shared.tree, rng)?),
        InitMode::FixedInitRandomTruth => (config.draw_rates(&shared.tree, rng)?, shared.centre.clone()),
    };
    out.truth = truth.to_params();
    out.init = init.to_params();
    let code = shared.tree.to_code()?;
    let data = SyndromeDataset::sample(&code, &truth, config.n_est, rng)?;

    let own_tests;
    let tests = match (&shared.tests, config.n_decode_trials) {
        (_, 0) => None,
        (Some(t), _) => Some(t),
        (None, n) => {
            own_tests = DecodeTestSet::sample(&code, &truth, n, &mut stream(config.seed, 2 * trial as u64 + 2))?;
            out.perfect_ler = Some(logical_error_rate(&shared.template.with_rates(&truth)?, &own_tests, exec)?);
            Some(&own_tests)
        }
    };
    if let Some(t) = tests {
        out.init_ler = Some(logical_error_rate(&shared.template.with_rates(&init)?, t, exec)?);
    }

    let problem = EstimationProblem::new(shared.template.clone(), &data)?.with_exec(exec);
    let reg = config.beta.map(|b| RegularizerConfig::new(b, init.clone())).transpose()?;
    for method in config.estimator.methods() {
        let run_cfg = RunConfig { method, max_iter: config.n_iter, tol: config.tol };
        let run = problem.run(&init, run_cfg, reg.as_ref().filter(|_| method == Method::Em))?;
        let mut trace = MethodTrace { method, trajectory: run.trajectory, converged: run.converged, decoded: Vec::new() };
        if let Some(t) = tests {
            for &k in &config.decode_iterations {
                let rates = truth.from_params(trace.params_at(k))?;
                let ler = logical_error_rate(&shared.template.with_rates(&rates)?, t, exec)?;
                trace.decoded.push(DecodePoint { iteration: k, ler });
            }
        }
        out.runs.push(trace);
    }
    Ok(())
}

/// Runs every trial. Per-trial numerical failures are recorded, not raised.
pub fn run_experiment(config: &ExperimentConfig, exec: Exec) -> Result<ExperimentResults> {
    config.validate()?;
    let tree = config.tree()?;
    let centre = config.centre_rates(&tree)?;
    let template = FactorGraph::new(&tree, &centre)?;
    let mut perfect_ler = None;
    let tests = if config.n_decode_trials > 0 && config.init == InitMode::Dirichlet {
        let t = DecodeTestSet::sample(&tree.to_code()?, &centre, config.n_decode_trials, &mut stream(config.seed, 0))?;
        perfect_ler = Some(logical_error_rate(&template, &t, exec)?);
        Some(t)
    } else {
        None
    };
    let shared = Shared { tree, template, centre, tests };
    let trials = exec.map_range(config.n_trials, |t| run_trial(config, &shared, t, exec));
    Ok(ExperimentResults {
        config: config.clone(),
        config_hash: config.hash(),
        param_labels: shared.centre.param_labels(),
        perfect_ler,
        trials,
    })
}

/// Box-plot statistics with linear-interpolation quartiles and whiskers at
/// the last points within 1.5 IQR of the box, never inside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("no values to summarize"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = || v.iter().copied().filter(|&x| x >= lo && x <= hi);
        Ok(BoxStats {
            n: v.len(),
            min: v[0],
            q1,
            median: quantile_sorted(&v, 0.5),
            q3,
            max: v[v.len() - 1],
            whisker_low: inside().fold(f64::INFINITY, f64::min).min(q1),
            whisker_high: inside().fold(f64::NEG_INFINITY, f64::max).max(q3),
            outliers: v.iter().copied().filter(|&x| x < lo || x > hi).collect(),
        })
    }
}

/// Mean squared error with its bias-variance split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub n: usize,
    pub mse: f64,
    pub bias2: f64,
    pub variance: f64,
    /// Standard error of `mse`.
    pub mse_std_error: f64,
}

impl ErrorDecomposition {
    pub fn new(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::invalid("no estimates"));
        }
        let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
        let mse = mean(&sq);
        let bias = mean(errors);
        let se = if sq.len() > 1 { (crate::numeric::variance(&sq) / sq.len() as f64).sqrt() } else { f64::NAN };
        Ok(ErrorDecomposition { n: errors.len(), mse, bias2: bias * bias, variance: mse - bias * bias, mse_std_error: se })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Per parameter, at the final iteration.
    pub mse: Vec<f64>,
    /// `θ^1_X` error by iteration.
    pub first_param_by_iteration: Vec<ErrorDecomposition>,
    pub ler: Vec<(usize, BoxStats)>,
    pub steps: BoxStats,
    pub converged: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSummary {
    pub config_hash: String,
    pub seed: u64,
    pub n_trials: usize,
    pub failed_trials: Vec<usize>,
    pub init_ler: Option<BoxStats>,
    pub perfect_ler: Option<BoxStats>,
    pub methods: Vec<MethodSummary>,
}

fn errors_at(results: &ExperimentResults, method: Method, param: usize, iteration: Option<usize>) -> Vec<f64> {
    results
        .trials
        .iter()
        .filter_map(|t| {
            let run = t.run(method)?;
            let est = match iteration {
                Some(k) => run.params_at(k),
                None => run.final_params(),
            };
            Some(est[param] - t.truth[param])
        })
        .collect()
}

pub fn summarize(results: &ExperimentResults) -> Result<TrialSummary> {
    let ok: Vec<&TrialResult> = results.trials.iter().filter(|t| t.error.is_none()).collect();
    let failed_trials = results.trials.iter().filter(|t| t.error.is_some()).map(|t| t.trial).collect();
    let box_of = |v: Vec<f64>| if v.is_empty() { Ok(None) } else { BoxStats::new(&v).map(Some) };
    let init_ler = box_of(ok.iter().filter_map(|t| t.init_ler.map(|l| l.rate)).collect())?;
    let perfect_ler = match results.perfect_ler {
        Some(l) => Some(BoxStats::new(&[l.rate])?),
        None => box_of(ok.iter().filter_map(|t| t.perfect_ler.map(|l| l.rate)).collect())?,
    };
    let mut methods = Vec::new();
    for method in results.config.estimator.methods() {
        let runs: Vec<&MethodTrace> = ok.iter().filter_map(|t| t.run(method)).collect();
        if runs.is_empty() {
            continue;
        }
        let n_params = results.param_labels.len();
        let mse = (0..n_params)
            .map(|p| Ok(ErrorDecomposition::new(&errors_at(results, method, p, None))?.mse))
            .collect::<Result<Vec<_>>>()?;
        let first_param_by_iteration = (0..=results.config.n_iter)
            .map(|k| ErrorDecomposition::new(&errors_at(results, method, 0, Some(k))))
            .collect::<Result<Vec<_>>>()?;
        let mut ler = Vec::new();
        for &k in &results.config.decode_iterations {
            let v: Vec<f64> = runs.iter().filter_map(|r| r.decoded.iter().find(|d| d.iteration == k)).map(|d| d.ler.rate).collect();
            if let Some(b) = box_of(v)? {
                ler.push((k, b));
            }
        }
        let steps = BoxStats::new(&runs.iter().map(|r| r.steps() as f64).collect::<Vec<_>>())?;
        let converged = runs.iter().filter(|r| r.converged).count();
        methods.push(MethodSummary { method, mse, first_param_by_iteration, ler, steps, converged });
    }
    Ok(TrialSummary {
        config_hash: results.config_hash.clone(),
        seed: results.config.seed,
        n_trials: results.trials.len(),
        failed_trials,
        init_ler,
        perfect_ler,
        methods,
    })
}

/// Cramér–Rao bound on `θ^1_X` for `n_est` syndromes at the centre rates.
/// Level 1 is exact; higher levels use `fisher_samples` Monte-Carlo draws.
pub fn crb_for(config: &ExperimentConfig, fisher_samples: usize, exec: Exec) -> Result<CRBReport> {
    let tree = config.tree()?;
    let centre = config.centre_rates(&tree)?;
    let fisher = if tree.levels() == 1 {
        fisher_exact(tree.base(), &centre, DEFAULT_BUDGET)?
    } else {
        let graph = FactorGraph::new(&tree, &centre)?;
        fisher_mc(&graph, fisher_samples, &mut stream(config.seed, u64::MAX), exec)?
    };
    crb(&fisher, config.n_est as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCrbRow {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub estimator: Method,
    pub level: usize,
    pub n_est: usize,
    pub iteration: usize,
    pub mse: f64,
    pub crb: f64,
    pub bias2: f64,
    pub variance: f64,
}

/// `θ^1_X` error per iteration for each estimator against `bound`.
pub fn mse_vs_crb(results: &ExperimentResults, bound: f64) -> Result<Vec<MseCrbRow>> {
    let mut rows = Vec::new();
    for method in results.config.estimator.methods() {
        for k in 0..=results.config.n_iter {
            let e = errors_at(results, method, 0, Some(k));
            if e.is_empty() {
                continue;
            }
            let d = ErrorDecomposition::new(&e)?;
            rows.push(MseCrbRow {
                schema: CSV_SCHEMA_VERSION,
                config_hash: results.config_hash.clone(),
                seed: results.config.seed,
                estimator: method,
                level: results.config.levels,
                n_est: results.config.n_est,
                iteration: k,
                mse: d.mse,
                crb: bound,
                bias2: d.bias2,
                variance: d.variance,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceRow<'a> {
    schema: u32,
    config_hash: &'a str,
    seed: u64,
    trial: usize,
    method: Method,
    iteration: usize,
    parameter: &'a str,
    estimate: f64,
    truth: f64,
    sq_error: f64,
    log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LerRow {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Trial index; empty for the shared perfect-knowledge row.
    pub trial: Option<usize>,
    /// `init`, `perfect`, `em` or `hem`.
    pub decoder: String,
    pub iteration: usize,
    pub failures: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ties: u64,
}

pub const TRACE_FILE: &str = "trace.csv";
pub const LER_FILE: &str = "ler.csv";
pub const RESULTS_FILE: &str = "results.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BOX_FILE: &str = "box.csv";

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Em => "em",
        Method::Hem => "hem",
    }
}

fn ler_rows(results: &ExperimentResults) -> Vec<LerRow> {
    let row = |trial, decoder: &str, iteration, l: &LogicalErrorRate| LerRow {
        schema: CSV_SCHEMA_VERSION,
        config_hash: results.config_hash.clone(),
        seed: results.config.seed,
        trial,
        decoder: decoder.to_string(),
        iteration,
        failures: l.failures,
        trials: l.trials,
        rate: l.rate,
        ci_low: l.ci.0,
        ci_high: l.ci.1,
        ties: l.ties,
    };
    let mut out = Vec::new();
    if let Some(l) = &results.perfect_ler {
        out.push(row(None, "perfect", 0, l));
    }
    for t in &results.trials {
        if let Some(l) = &t.perfect_ler {
            out.push(row(Some(t.trial), "perfect", 0, l));
        }
        if let Some(l) = &t.init_ler {
            out.push(row(Some(t.trial), "init", 0, l));
        }
        for r in &t.runs {
            for d in &r.decoded {
                out.push(row(Some(t.trial), method_name(r.method), d.iteration, &d.ler));
            }
        }
    }
    out
}

/// Writes the per-iteration trace, logical error rates, raw results and
/// summary into `dir`. Every file carries the config hash and seed.
pub fn write_results(results: &ExperimentResults, dir: &Path) -> Result<TrialSummary> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(TRACE_FILE))?;
    for t in &results.trials {
        for r in &t.runs {
            for rec in &r.trajectory {
                for (p, label) in results.param_labels.iter().enumerate() {
                    let est = rec.params[p];
                    w.serialize(TraceRow {
                        schema: CSV_SCHEMA_VERSION,
                        config_hash: &results.config_hash,
                        seed: results.config.seed,
                        trial: t.trial,
                        method: r.method,
                        iteration: rec.iteration,
                        parameter: label,
                        estimate: est,
                        truth: t.truth[p],
                        sq_error: (est - t.truth[p]).powi(2),
                        log_likelihood: rec.log_likelihood,
                    })?;
                }
            }
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(LER_FILE))?;
    for row in ler_rows(results) {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut stripped = results.clone();
    for t in &mut stripped.trials {
        for r in &mut t.runs {
            for rec in &mut r.trajectory {
                rec.wall_time_s = 0.0;
            }
        }
    }
    fs::write(dir.join(RESULTS_FILE), serde_json::to_string_pretty(&stripped)?)?;
    let summary = summarize(results)?;
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub decoder: String,
    pub iteration: usize,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Space-separated.
    pub outliers: String,
}

/// Reads the logical error rates in `dir` and writes per-(decoder,
/// iteration) box statistics to `box.csv`.
pub fn emit_summary(dir: &Path) -> Result<Vec<BoxRow>> {
    let mut reader = csv::Reader::from_path(dir.join(LER_FILE))?;
    let mut groups: std::collections::BTreeMap<(String, usize), (String, u64, Vec<f64>)> = Default::default();
    for row in reader.deserialize() {
        let row: LerRow = row?;
        groups
            .entry((row.decoder.clone(), row.iteration))
            .or_insert_with(|| (row.config_hash.clone(), row.seed, Vec::new()))
            .2
            .push(row.rate);
    }
    if groups.is_empty() {
        return Err(Error::invalid(format!("no logical error rates in {}", dir.display())));
    }
    let mut out = Vec::new();
    for ((decoder, iteration), (hash, seed, values)) in groups {
        let b = BoxStats::new(&values)?;
        out.push(BoxRow {
            schema: CSV_SCHEMA_VERSION,
            config_hash: hash,
            seed,
            decoder,
            iteration,
            n: b.n,
            min: b.min,
            q1: b.q1,
            median: b.median,
            q3: b.q3,
            max: b.max,
            whisker_low: b.whisker_low,
            whisker_high: b.whisker_high,
            outliers: b.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
        });
    }
    let mut w = csv::Writer::from_path(dir.join(BOX_FILE))?;
    for r in &out {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(out)
}
