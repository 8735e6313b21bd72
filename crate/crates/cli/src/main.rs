use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use syndromest::bits::Bits;
use syndromest::closedform::{
    bootstrap_so1, check_so1_preconditions, equation_count, so1_from_moments, so2_estimate, BinaryCircuitModel,
    SyndromeMoments,
};
use syndromest::codes::{concatenate, CodeSpec, ConcatSpec, ConcatTree};
use syndromest::decoder::FactorGraph;
use syndromest::estimate::{
    DirichletConvention, DirichletInit, EstimationProblem, Method, RegularizerConfig, RunConfig, SyndromeDataset,
};
use syndromest::exec::Exec;
use syndromest::experiment::{
    crb_for, emit_summary, mse_vs_crb, run_experiment, write_results, EstimatorChoice, ExperimentConfig, InitMode,
};
use syndromest::fisher::{crb, fisher_exact, fisher_mc};
use syndromest::identify::{jacobian_at_zero, jtilde, kw_bruteforce, kw_recursive_for};
use syndromest::noise::{CodeRates, ModelFile, DEFAULT_BUDGET};
use syndromest::pauli::{Alphabet, StabilizerCode, Syndrome};
use syndromest::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "syndromest", version, about = "Estimate physical error rates from syndrome statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample syndromes from a noise model.
    Simulate(SimulateArgs),
    /// Run EM or HEM on a syndrome dataset.
    Estimate(EstimateArgs),
    /// Run a seeded multi-trial experiment.
    Sweep(SweepArgs),
    /// Fisher information and Cramér-Rao bounds.
    Crb(CrbArgs),
    /// Rank tests for local identifiability.
    Identify(IdentifyArgs),
    /// Modified weight distributions of a perfect code.
    Weights(WeightsArgs),
    /// Closed-form estimates under independent binary noise.
    Closedform(ClosedformArgs),
    /// Box-plot statistics of a sweep's logical error rates.
    Summary(SummaryArgs),
}

#[derive(Args, Clone)]
struct CodeArgs {
    /// `five_qubit`, `steane`, `repetition:N`, or a JSON code file.
    #[arg(long, default_value = "five_qubit")]
    code: String,
    /// Concatenation levels.
    #[arg(long, default_value_t = 1)]
    levels: usize,
}

impl CodeArgs {
    fn base(&self) -> Result<StabilizerCode, Error> {
        if self.code.ends_with(".json") {
            StabilizerCode::from_json(&fs::read_to_string(&self.code)?)
        } else {
            self.code.parse::<CodeSpec>()?.build()
        }
    }

    fn tree(&self) -> Result<ConcatTree, Error> {
        concatenate(&ConcatSpec::new(self.base()?, self.levels))
    }
}

#[derive(Args, Clone)]
struct RatesArgs {
    /// Noise model JSON file.
    #[arg(long, conflicts_with = "p")]
    model: Option<PathBuf>,
    /// Depolarizing rate per Pauli.
    #[arg(long)]
    p: Option<f64>,
    /// Syndrome bit flip rate.
    #[arg(long)]
    p_m: Option<f64>,
}

impl RatesArgs {
    fn rates(&self, tree: &ConcatTree) -> Result<CodeRates, Error> {
        let (n, l) = (tree.n_leaves(), tree.syndrome_bits());
        if let Some(path) = &self.model {
            let text = fs::read_to_string(path)?;
            if let Ok(rates) = serde_json::from_str::<CodeRates>(&text) {
                return Ok(rates);
            }
            return ModelFile::from_json(&text)?.to_code_rates(n, l);
        }
        let p = self.p.ok_or_else(|| Error::Invalid("give --model or --p".into()))?;
        match self.p_m {
            Some(pm) => CodeRates::phenomenological(n, l, p, pm),
            None => CodeRates::depolarizing(n, p),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    code: CodeArgs,
    #[command(flatten)]
    rates: RatesArgs,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Em,
    Hem,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    code: CodeArgs,
    /// Dataset written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    /// Initial rates (or centre of the Dirichlet draw when --alpha is given).
    #[command(flatten)]
    init: RatesArgs,
    /// Draw the initialization from a Dirichlet with this scale.
    #[arg(long, requires = "seed")]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "em")]
    method: MethodArg,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Dirichlet regularization strength towards the initialization.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    code: Option<CodeSpec>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    p_m: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n_est: Option<usize>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    decode_trials: Option<u64>,
    /// Comma-separated iterations to decode at.
    #[arg(long, value_delimiter = ',')]
    decode_at: Option<Vec<usize>>,
    /// Fix the initialization at `p` and draw the truth instead.
    #[arg(long)]
    fixed_init: bool,
    /// Use the `α_e` (rather than `α_e + 1`) Dirichlet concentration.
    #[arg(long)]
    standard_dirichlet: bool,
    /// Also write `mse_crb.csv` using this many Fisher samples (level >= 2).
    #[arg(long)]
    crb_samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Em,
    Hem,
    Both,
}

#[derive(Args)]
struct CrbArgs {
    #[command(flatten)]
    code: CodeArgs,
    #[command(flatten)]
    rates: RatesArgs,
    /// Number of syndromes the bound is for.
    #[arg(long, default_value_t = 1000)]
    m: u64,
    /// Monte-Carlo samples at level >= 2.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `crb.json` and `crb.csv`; JSON to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long, default_value = "five_qubit")]
    code: String,
    #[command(flatten)]
    rates: RatesArgs,
    /// Use the Jacobian at zero noise instead of J~ at the given rates.
    #[arg(long)]
    at_zero: bool,
    /// Include the full matrix in the output.
    #[arg(long)]
    matrix: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphabetArg {
    Pauli,
    Bitflip,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long, default_value = "five_qubit")]
    code: String,
    #[arg(long, value_enum, default_value = "pauli")]
    alphabet: AlphabetArg,
    /// 1-based qubit; all qubits when absent.
    #[arg(long)]
    qubit: Option<usize>,
    /// Syndrome bit string; all non-zero syndromes when absent.
    #[arg(long)]
    syndrome: Option<String>,
    /// Also enumerate and compare.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct ClosedformArgs {
    #[arg(long, default_value = "repetition:3")]
    code: String,
    /// Comma-separated X rates, one per qubit.
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Estimate from this many samples instead of exact moments.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
}

#[derive(Args)]
struct SummaryArgs {
    /// Sweep output directory.
    dir: PathBuf,
}

fn code_from(name: &str) -> Result<StabilizerCode, Error> {
    CodeArgs { code: name.to_string(), levels: 1 }.base()
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            if let Err(e) = writeln!(out, "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let tree = a.code.tree()?;
    let rates = a.rates.rates(&tree)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut data = SyndromeDataset::sample(&tree.to_code()?, &rates, a.samples, &mut rng)?;
    data.seed = Some(a.seed);
    emit(&data, a.out.as_deref())
}

fn estimate(a: EstimateArgs) -> Result<(), Error> {
    let tree = a.code.tree()?;
    let data: SyndromeDataset = serde_json::from_str(&fs::read_to_string(&a.data)?)?;
    let mut init = a.init.rates(&tree)?;
    if let Some(alpha) = a.alpha {
        let p = a.init.p.ok_or_else(|| Error::Invalid("--alpha needs --p as the centre".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed.expect("clap requires seed"));
        let d = DirichletInit::new(alpha, p, DirichletConvention::Literal)?;
        let flips = a.init.p_m.map(|pm| d.sample_flips(tree.syndrome_bits(), pm, &mut rng)).transpose()?;
        init = CodeRates::new(d.sample_qubits(tree.n_leaves(), &mut rng), flips)?;
    }
    let method = match a.method {
        MethodArg::Em => Method::Em,
        MethodArg::Hem => Method::Hem,
    };
    let graph = FactorGraph::new(&tree, &init)?;
    let problem = EstimationProblem::new(graph, &data)?;
    let reg = a.beta.map(|b| RegularizerConfig::new(b, init.clone())).transpose()?;
    let run = problem.run(&init, RunConfig { method, max_iter: a.iters, tol: a.tol }, reg.as_ref())?;
    emit(&run, a.out.as_deref())
}

fn sweep_config(a: &SweepArgs) -> Result<ExperimentConfig, Error> {
    let mut c = match &a.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::desk_default(
            a.seed.ok_or_else(|| Error::Invalid("a seed is required (--seed or config file)".into()))?,
        ),
    };
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.code {
        c.code = v;
    }
    if let Some(v) = a.levels {
        c.levels = v;
    }
    if let Some(v) = a.p {
        c.p = v;
    }
    if a.p_m.is_some() {
        c.p_m = a.p_m;
    }
    if let Some(v) = a.alpha {
        c.alpha = v;
    }
    if a.beta.is_some() {
        c.beta = a.beta;
    }
    if let Some(v) = a.n_est {
        c.n_est = v;
    }
    if let Some(v) = a.n_iter {
        c.n_iter = v;
    }
    if let Some(v) = a.tol {
        c.tol = v;
    }
    if let Some(v) = a.estimator {
        c.estimator = match v {
            EstimatorArg::Em => EstimatorChoice::Em,
            EstimatorArg::Hem => EstimatorChoice::Hem,
            EstimatorArg::Both => EstimatorChoice::Both,
        };
    }
    if let Some(v) = a.trials {
        c.n_trials = v;
    }
    if let Some(v) = a.decode_trials {
        c.n_decode_trials = v;
    }
    if let Some(v) = &a.decode_at {
        c.decode_iterations = v.clone();
    }
    if a.fixed_init {
        c.init = InitMode::FixedInitRandomTruth;
    }
    if a.standard_dirichlet {
        c.convention = DirichletConvention::Standard;
    }
    c.validate()?;
    Ok(c)
}

fn sweep(a: SweepArgs) -> Result<(), Error> {
    let config = sweep_config(&a)?;
    let results = run_experiment(&config, Exec::default())?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
    let summary = write_results(&results, &a.out)?;
    if let Some(samples) = a.crb_samples {
        let bound = crb_for(&config, samples, Exec::default())?;
        let mut w = csv::Writer::from_path(a.out.join("mse_crb.csv")).map_err(Error::from)?;
        for row in mse_vs_crb(&results, bound.bounds[0])? {
            w.serialize(row).map_err(Error::from)?;
        }
        w.flush()?;
    }
    emit(&summary, None)
}

#[derive(Serialize)]
struct CrbOutput {
    labels: Vec<String>,
    fisher: Vec<Vec<f64>>,
    bounds: Vec<f64>,
    samples: u64,
    rank: usize,
    condition_number: f64,
    pseudo_inverse: bool,
}

#[derive(Serialize)]
struct CrbRow<'a> {
    parameter: &'a str,
    theta: f64,
    variance_bound: f64,
    std_bound: f64,
}

fn crb_cmd(a: CrbArgs) -> Result<(), Error> {
    let tree = a.code.tree()?;
    let rates = a.rates.rates(&tree)?;
    let fisher = if tree.levels() == 1 {
        fisher_exact(tree.base(), &rates, DEFAULT_BUDGET)?
    } else {
        let graph = FactorGraph::new(&tree, &rates)?;
        fisher_mc(&graph, a.samples, &mut ChaCha8Rng::seed_from_u64(a.seed), Exec::default())?
    };
    let report = crb(&fisher, a.m)?;
    let labels = rates.param_labels();
    let out = CrbOutput {
        labels: labels.clone(),
        fisher: fisher.values.chunks(fisher.dim).map(<[f64]>::to_vec).collect(),
        bounds: report.bounds.clone(),
        samples: report.samples,
        rank: report.rank,
        condition_number: report.condition_number,
        pseudo_inverse: report.pseudo_inverse,
    };
    match &a.out {
        None => emit(&out, None),
        Some(dir) => {
            fs::create_dir_all(dir)?;
            emit(&out, Some(&dir.join("crb.json")))?;
            let mut w = csv::Writer::from_path(dir.join("crb.csv")).map_err(Error::from)?;
            for ((label, &theta), &b) in labels.iter().zip(&rates.to_params()).zip(&report.bounds) {
                w.serialize(CrbRow { parameter: label, theta, variance_bound: b, std_bound: b.sqrt() })
                    .map_err(Error::from)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct IdentifyOutput {
    identifiable: bool,
    rank: usize,
    params: usize,
    gap: f64,
    singular_values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
}

fn identify(a: IdentifyArgs) -> Result<(), Error> {
    let code = code_from(&a.code)?;
    let tree = concatenate(&ConcatSpec::new(code.clone(), 1))?;
    let model = match &a.rates.model {
        Some(path) => ModelFile::from_json(&fs::read_to_string(path)?)?.to_model(&code)?,
        None if a.rates.p.is_none() && a.at_zero => CodeRates::depolarizing(code.n(), 0.01)?.to_model(code.l())?,
        None => a.rates.rates(&tree)?.to_model(code.l())?,
    };
    let j = if a.at_zero { jacobian_at_zero(&code, &model)? } else { jtilde(&code, &model, DEFAULT_BUDGET)? };
    emit(
        &IdentifyOutput {
            identifiable: j.identifiable,
            rank: j.rank.rank,
            params: j.params.len(),
            gap: j.rank.gap,
            singular_values: j.rank.singular_values.clone(),
            matrix: a.matrix.then(|| j.matrix.clone()),
        },
        None,
    )
}

#[derive(Serialize)]
struct WeightsRow {
    qubit: usize,
    syndrome: String,
    pauli: String,
    case: String,
    values: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matches_enumeration: Option<bool>,
}

fn weights(a: WeightsArgs) -> Result<(), Error> {
    let code = code_from(&a.code)?;
    let alphabet = match a.alphabet {
        AlphabetArg::Pauli => Alphabet::Pauli,
        AlphabetArg::Bitflip => Alphabet::BitFlip,
    };
    let qubits: Vec<usize> = match a.qubit {
        Some(0) => return Err(Error::Invalid("qubits are 1-based".into())),
        Some(q) => vec![q - 1],
        None => (0..code.n()).collect(),
    };
    let syndromes: Vec<Syndrome> = match &a.syndrome {
        Some(s) => vec![s.parse()?],
        None => (1..1u64 << code.l()).map(|i| Syndrome::from_index(code.l(), i)).collect(),
    };
    let mut rows = Vec::new();
    for &q in &qubits {
        for s in &syndromes {
            for w in kw_recursive_for(&code, alphabet, q, s)? {
                let matches_enumeration = if a.check {
                    Some(kw_bruteforce(&code, alphabet, w.pauli, q, s)?.values == w.values)
                } else {
                    None
                };
                rows.push(WeightsRow {
                    qubit: q + 1,
                    syndrome: s.to_string(),
                    pauli: w.pauli.to_string(),
                    case: format!("{:?}", w.case),
                    values: w.values,
                    matches_enumeration,
                });
            }
        }
    }
    emit(&rows, None)
}

#[derive(Serialize)]
struct PairEstimate {
    bits: (usize, usize),
    error: usize,
    preconditions_hold: bool,
    failures: Vec<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_message: Option<String>,
}

#[derive(Serialize)]
struct ClosedformOutput {
    moments: SyndromeMoments,
    pairs: Vec<PairEstimate>,
    single_bit: Vec<Option<f64>>,
    equations: usize,
    parameters: usize,
}

fn closedform(a: ClosedformArgs) -> Result<(), Error> {
    let code = code_from(&a.code)?;
    let model = BinaryCircuitModel::x_only(&code, a.rates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let samples: Option<Vec<Bits>> = a.samples.map(|n| (0..n).map(|_| model.sample(&mut rng)).collect());
    let moments = match &samples {
        Some(s) => SyndromeMoments::from_samples(s)?,
        None => SyndromeMoments::exact(&model)?,
    };
    let mut pairs = Vec::new();
    let mut first_error = None;
    for i in 0..model.l() {
        for j in (i + 1)..model.l() {
            for q in 0..model.m() {
                if !(model.incidence()[q].get(i) && model.incidence()[q].get(j)) {
                    continue;
                }
                let pre = check_so1_preconditions(&model, i, j, q)?;
                let mut row = PairEstimate {
                    bits: (i + 1, j + 1),
                    error: q + 1,
                    preconditions_hold: pre.all_hold(),
                    failures: pre.failures(),
                    estimate: None,
                    std_error: None,
                    error_message: None,
                };
                let est = match &samples {
                    Some(s) => bootstrap_so1(s, i, j, a.bootstrap, &mut rng).map(|b| (b.estimate, Some(b.std_error))),
                    None => so1_from_moments(&moments, i, j).map(|t| (t, None)),
                };
                match est {
                    Ok((t, se)) => {
                        row.estimate = Some(t);
                        row.std_error = se;
                    }
                    Err(e) => {
                        row.error_message = Some(e.to_string());
                        first_error.get_or_insert(e);
                    }
                }
                pairs.push(row);
            }
        }
    }
    if let Some(e) = first_error.filter(|_| pairs.iter().all(|p| p.estimate.is_none())) {
        return Err(e);
    }
    // single-bit identity with every other rate on that bit known
    let single_bit = (0..model.l())
        .map(|i| {
            let on = model.errors_on_bit(i);
            let (_, rest) = on.split_first()?;
            let known: Vec<f64> = rest.iter().map(|&q| model.rates()[q]).collect();
            so2_estimate(moments.mean[i], &known).ok().map(|e| e.rate)
        })
        .collect();
    let count = equation_count(model.l(), model.m());
    emit(
        &ClosedformOutput { moments, pairs, single_bit, equations: count.total(), parameters: count.parameters },
        None,
    )
}

fn summary(a: SummaryArgs) -> Result<(), Error> {
    emit(&emit_summary(&a.dir)?, None)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("SYNDROMEST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Invalid(format!("SYNDROMEST_THREADS must be a positive integer, got {v:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Internal(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Sweep(a) => sweep(a),
        Command::Crb(a) => crb_cmd(a),
        Command::Identify(a) => identify(a),
        Command::Weights(a) => weights(a),
        Command::Closedform(a) => closedform(a),
        Command::Summary(a) => summary(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG })
        }
    }
}
