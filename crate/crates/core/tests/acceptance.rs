//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failures are reported but do not fail the test binary unless
//! `ACCEPTANCE_STRICT=1` is set.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syndromest::bits::Bits;
use syndromest::closedform::{
    bootstrap_so1, so1_applicable_triples, so1_from_moments, so2_identity_sides, BinaryCircuitModel, SyndromeMoments,
};
use syndromest::codes::{concatenate, five_qubit_code, hamming_bit_flip_code, repetition_code, ConcatSpec, ConcatTree};
use syndromest::decoder::FactorGraph;
use syndromest::estimate::{Method, SyndromeDataset};
use syndromest::exec::Exec;
use syndromest::experiment::{crb_for, run_experiment, summarize, ErrorDecomposition, ExperimentConfig, ExperimentResults};
use syndromest::fisher::{fisher_exact, fisher_mc, score};
use syndromest::identify::{jacobian_at_zero, jtilde, kw_bruteforce, kw_recursive_for};
use syndromest::noise::{CodeRates, DecomposableModel, ErrorEvent, ErrorSet, SingleQubitPauliRates, DEFAULT_BUDGET};
use syndromest::pauli::{Alphabet, Pauli, PauliString, StabilizerCode, Syndrome};

type Check = std::result::Result<(bool, String), String>;

fn random_rates(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> CodeRates {
    let q = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(lo..hi))).collect();
    CodeRates::new(SingleQubitPauliRates::new(q).unwrap(), None).unwrap()
}

fn tree(code: StabilizerCode, levels: usize) -> ConcatTree {
    concatenate(&ConcatSpec::new(code, levels)).unwrap()
}

fn bp_vs_enumeration() -> Check {
    let code = five_qubit_code();
    let t = tree(code.clone(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rates = random_rates(5, 0.001, 0.3, &mut rng);
        let graph = FactorGraph::new(&t, &rates).unwrap();
        // per syndrome: leaf masses [qubit][pauli], class masses, total
        let mut leaves: HashMap<u64, Vec<[f64; 4]>> = HashMap::new();
        let mut roots: HashMap<u64, [f64; 4]> = HashMap::new();
        for x in 0..32u64 {
            for z in 0..32u64 {
                let e = PauliString::from_packed(5, x, z);
                let p: f64 = (0..5).map(|q| rates.qubits.distribution(q)[e.get(q).index()]).product();
                let s = code.syndrome_packed(x, z);
                let leaf = leaves.entry(s).or_insert_with(|| vec![[0.0; 4]; 5]);
                for (q, row) in leaf.iter_mut().enumerate() {
                    row[e.get(q).index()] += p;
                }
                roots.entry(s).or_insert([0.0; 4])[code.logical_class(&e).unwrap().as_single().unwrap().index()] += p;
            }
        }
        for s in 0..16u64 {
            let post = graph.posteriors(&Syndrome::from_index(4, s)).map_err(|e| e.to_string())?;
            let root = roots[&s];
            let total: f64 = root.iter().sum();
            for c in 0..4 {
                worst = worst.max((post.root[c] - root[c] / total).abs());
            }
            for (q, row) in leaves[&s].iter().enumerate() {
                for c in 0..4 {
                    worst = worst.max((post.leaves[q][c] - row[c] / total).abs());
                }
            }
            worst = worst.max((post.log_likelihood - total.ln()).abs());
        }
    }
    Ok((worst < 1e-10, format!("max abs deviation {worst:.2e} over 20 rate vectors x 16 syndromes")))
}

fn jtilde_rank() -> Check {
    let code = five_qubit_code();
    let mut notes = Vec::new();
    let mut ok = true;
    for p in [0.01, 0.13, 0.3] {
        let model = CodeRates::depolarizing(5, p).unwrap().to_model(4).unwrap();
        let j = jtilde(&code, &model, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
        let mut sparsity = 0.0f64;
        for col in 0..j.params.len() {
            let (q, pauli) = (col / 3, Pauli::NON_IDENTITY[col % 3]);
            let own = code.syndrome(&PauliString::single(5, q, pauli)).unwrap();
            for (row, s) in j.syndromes.iter().enumerate() {
                if !s.is_zero() && s != &own {
                    sparsity = sparsity.max(j.entry(row, col).abs());
                }
            }
        }
        let pass = j.rank.rank == 15 && j.rank.gap > 1e6 && sparsity <= 1e-12;
        ok &= pass;
        notes.push(format!("p={p}: rank {} gap {:.1e} off-pattern {:.1e}", j.rank.rank, j.rank.gap, sparsity));
    }
    Ok((ok, notes.join("; ")))
}

fn kw_recursion() -> Check {
    let code = five_qubit_code();
    let mut count = 0;
    for s in 1..16u64 {
        let s = Syndrome::from_index(4, s);
        for q in 0..5 {
            let rec = kw_recursive_for(&code, Alphabet::Pauli, q, &s).map_err(|e| e.to_string())?;
            for r in rec {
                let b = kw_bruteforce(&code, Alphabet::Pauli, r.pauli, q, &s).map_err(|e| e.to_string())?;
                if b.values != r.values {
                    return Ok((false, format!("mismatch at {} q{} S={s}: {:?} vs {:?}", r.pauli, q + 1, r.values, b.values)));
                }
                count += 1;
            }
        }
    }
    Ok((count == 300, format!("{count} instances equal")))
}

fn closed_form() -> Check {
    let rep = BinaryCircuitModel::x_only(&repetition_code(3).unwrap(), vec![0.05, 0.1, 0.05]).unwrap();
    let m = SyndromeMoments::exact(&rep).map_err(|e| e.to_string())?;
    let theta = so1_from_moments(&m, 0, 1).map_err(|e| e.to_string())?;
    let (lhs, rhs) = so2_identity_sides(&rep, &m, 0);
    let (lhs2, rhs2) = so2_identity_sides(&rep, &m, 1);
    let exact_ok = (theta - 0.1).abs() < 1e-12 && (lhs - rhs).abs() < 1e-12 && (lhs2 - rhs2).abs() < 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples: Vec<Bits> = (0..100_000).map(|_| rep.sample(&mut rng)).collect();
    let b = bootstrap_so1(&samples, 0, 1, 200, &mut rng).map_err(|e| e.to_string())?;
    let sampled_ok = (b.estimate - 0.1).abs() < 4.0 * b.std_error;
    let steane = BinaryCircuitModel::x_only(&hamming_bit_flip_code(), vec![0.05; 7]).unwrap();
    let steane_ok = so1_applicable_triples(&steane).map_err(|e| e.to_string())?.is_empty();
    Ok((
        exact_ok && sampled_ok && steane_ok,
        format!(
            "exact θ2={theta:.15} SO-2 sides {lhs:.15}/{rhs:.15}; sampled {:.5} ± {:.5}; Steane X-only inapplicable: {steane_ok}",
            b.estimate, b.std_error
        ),
    ))
}

fn finite_difference(graph: &FactorGraph, obs: &Syndrome) -> Vec<f64> {
    let rates = graph.rates();
    let base = rates.to_params();
    let h = 1e-6;
    (0..base.len())
        .map(|i| {
            let mut up = base.clone();
            let mut down = base.clone();
            up[i] += h;
            down[i] -= h;
            let lp = graph.with_rates(&rates.from_params(&up).unwrap()).unwrap().log_likelihood(obs).unwrap();
            let lm = graph.with_rates(&rates.from_params(&down).unwrap()).unwrap().log_likelihood(obs).unwrap();
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

fn score_and_fisher() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for point in 0..10 {
        let levels = 1 + point % 2;
        let t = tree(five_qubit_code(), levels);
        let n = t.n_leaves();
        let mut rates = random_rates(n, 0.01, 0.2, &mut rng);
        if point % 4 == 3 {
            rates.flips = Some((0..t.syndrome_bits()).map(|_| rng.random_range(0.01..0.1)).collect());
        }
        let graph = FactorGraph::new(&t, &rates).unwrap();
        let code = t.to_code().unwrap();
        let obs = SyndromeDataset::sample(&code, &rates, 1, &mut rng).unwrap().syndromes.remove(0);
        let a = score(&graph, &obs).map_err(|e| e.to_string())?;
        let fd = finite_difference(&graph, &obs);
        let num: f64 = a.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    let rates = random_rates(5, 0.02, 0.2, &mut rng);
    let exact = fisher_exact(&five_qubit_code(), &rates, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    let graph = FactorGraph::new(&tree(five_qubit_code(), 1), &rates).unwrap();
    let mc = fisher_mc(&graph, 1_000_000, &mut rng, Exec::default()).map_err(|e| e.to_string())?;
    let frob = mc.relative_frobenius_error(&exact).map_err(|e| e.to_string())?;
    let psd = exact.is_psd() && mc.is_psd();
    Ok((
        worst < 1e-5 && psd && frob < 0.01,
        format!("score vs finite differences max rel {worst:.2e}; PSD {psd}; MC(1e6) vs exact Frobenius {frob:.2e}"),
    ))
}

fn errors(results: &ExperimentResults, method: Method) -> Vec<f64> {
    results
        .trials
        .iter()
        .filter_map(|t| Some(t.run(method)?.final_params()[0] - t.truth[0]))
        .collect()
}

fn em_behaviour() -> Check {
    let cfg = ExperimentConfig {
        n_iter: 5,
        n_trials: 100,
        n_decode_trials: 100_000,
        decode_iterations: vec![1, 5],
        ..ExperimentConfig::desk_default(6)
    };
    let results = run_experiment(&cfg, Exec::default()).map_err(|e| e.to_string())?;
    let failed = results.trials.iter().filter(|t| t.error.is_some()).count();
    let summary = summarize(&results).map_err(|e| e.to_string())?;

    let mut worst_drop = 0.0f64;
    let mut hem_delta = 0.0f64;
    for t in &results.trials {
        if let Some(r) = t.run(Method::Em) {
            for w in r.trajectory.windows(2) {
                worst_drop = worst_drop.max(w[0].log_likelihood - w[1].log_likelihood);
            }
        }
        if let Some(r) = t.run(Method::Hem) {
            for rec in r.trajectory.iter().filter(|r| r.iteration >= 2) {
                hem_delta = hem_delta.max(rec.max_delta);
            }
        }
    }
    let a = worst_drop <= 1e-9;

    let perfect = summary.perfect_ler.as_ref().ok_or("no perfect-knowledge rate")?.median;
    let em = summary.methods.iter().find(|m| m.method == Method::Em).ok_or("no EM summary")?;
    let em5 = em.ler.iter().find(|(k, _)| *k == 5).ok_or("no EM rate at 5")?.1.median;
    let rel = (em5 - perfect).abs() / perfect;
    let b = rel <= 0.1;

    let bound = crb_for(&cfg, 100_000, Exec::default()).map_err(|e| e.to_string())?.bounds[0];
    let em_err = ErrorDecomposition::new(&errors(&results, Method::Em)).map_err(|e| e.to_string())?;
    let hem_err = ErrorDecomposition::new(&errors(&results, Method::Hem)).map_err(|e| e.to_string())?;
    let ratio = em_err.mse / bound;
    let c = (0.67..=1.5).contains(&ratio);

    let sigma = (em_err.mse_std_error.powi(2) + hem_err.mse_std_error.powi(2)).sqrt();
    let sep = (hem_err.mse - em_err.mse) / sigma;
    let d_mse = sep > 4.0;
    let d_plateau = hem_delta < 1e-6;

    let detail = format!(
        "(a) max LL drop {worst_drop:.1e} {}; (b) EM@5 {em5:.4} vs perfect {perfect:.4} rel {rel:.3} {}; \
         (c) MSE/CRB {ratio:.3} (MSE {:.3e}, CRB {bound:.3e}) {}; (d) HEM-EM MSE {sep:.1}σ {}, HEM max |Δθ| after it 1 {hem_delta:.1e} {}; failed trials {failed}",
        tag(a),
        tag(b),
        em_err.mse,
        tag(c),
        tag(d_mse),
        tag(d_plateau),
    );
    Ok((a && b && c && d_mse && d_plateau && failed == 0, detail))
}

fn measurement_noise() -> Check {
    let cfg = ExperimentConfig {
        p: 0.005,
        p_m: Some(0.005),
        n_est: 10_000,
        n_iter: 40,
        n_trials: 20,
        n_decode_trials: 100_000,
        decode_iterations: vec![40],
        ..ExperimentConfig::desk_default(7)
    };
    let results = run_experiment(&cfg, Exec::default()).map_err(|e| e.to_string())?;
    let summary = summarize(&results).map_err(|e| e.to_string())?;
    let init = summary.init_ler.as_ref().ok_or("no init rates")?.median;
    let at = |m: Method| -> std::result::Result<f64, String> {
        let s = summary.methods.iter().find(|s| s.method == m).ok_or("missing method")?;
        Ok(s.ler.iter().find(|(k, _)| *k == 40).ok_or("missing rate")?.1.median)
    };
    let (em, hem) = (at(Method::Em)?, at(Method::Hem)?);
    let em_summary = summary.methods.iter().find(|s| s.method == Method::Em).unwrap();
    let converged = em_summary.converged == results.trials.len();
    let improves = em < init;
    let hem_smaller = init - hem < init - em;
    Ok((
        improves && hem_smaller && converged && summary.failed_trials.is_empty(),
        format!(
            "median LER init {init:.5} EM {em:.5} HEM {hem:.5} perfect {:.5}; EM steps median {} max {}; converged {}/{}",
            summary.perfect_ler.as_ref().map_or(f64::NAN, |b| b.median),
            em_summary.steps.median,
            em_summary.steps.max,
            em_summary.converged,
            results.trials.len()
        ),
    ))
}

fn single_error_model(code: &StabilizerCode, errors: &[PauliString]) -> DecomposableModel {
    let sets = errors.iter().map(|e| ErrorSet::new(vec![ErrorEvent::data_only(e.clone(), code.l())]).unwrap()).collect();
    DecomposableModel::new(code.n(), code.l(), sets, vec![vec![0.01]; errors.len()]).unwrap()
}

fn identifiability_gate() -> Check {
    let five = five_qubit_code();
    let full = CodeRates::depolarizing(5, 0.01).unwrap().to_model(4).unwrap();
    let j5 = jacobian_at_zero(&five, &full).map_err(|e| e.to_string())?;
    let rep = repetition_code(3).unwrap();
    let flips: Vec<PauliString> = (0..3).map(|q| PauliString::single(3, q, Pauli::X)).collect();
    let jr = jacobian_at_zero(&rep, &single_error_model(&rep, &flips)).map_err(|e| e.to_string())?;
    // X1 and X2 share the only check of the two-qubit repetition code
    let toy = repetition_code(2).unwrap();
    let toy_errors: Vec<PauliString> = (0..2).map(|q| PauliString::single(2, q, Pauli::X)).collect();
    let jt = jacobian_at_zero(&toy, &single_error_model(&toy, &toy_errors)).map_err(|e| e.to_string())?;
    Ok((
        j5.identifiable && jr.identifiable && !jt.identifiable,
        format!(
            "five-qubit rank {}/15, repetition(3) rank {}/3, shared-syndrome toy rank {}/2",
            j5.rank.rank, jr.rank.rank, jt.rank.rank
        ),
    ))
}

fn tag(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(usize, &str, Duration, fn() -> Check); 8] = [
        (1, "BP vs enumeration", Duration::from_secs(10), bp_vs_enumeration),
        (2, "J~ rank and sparsity", Duration::from_secs(5), jtilde_rank),
        (3, "weight recursion", Duration::from_secs(30), kw_recursion),
        (4, "closed-form estimators", Duration::from_secs(20), closed_form),
        (5, "score and Fisher", Duration::from_secs(120), score_and_fisher),
        (6, "EM behaviour", Duration::from_secs(1800), em_behaviour),
        (7, "measurement noise", Duration::from_secs(1800), measurement_noise),
        (8, "identifiability gate", Duration::from_secs(1), identifiability_gate),
    ];
    let mut failures = 0;
    for (n, name, limit, f) in criteria {
        if filter.as_ref().is_some_and(|s| !name.contains(s.as_str()) && s != &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((p, d)) => (p && elapsed < limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {n} ({name}): {} [{:.1} s, limit {} s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {failures} criteria failed");
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
