//! Release gate for the laboratory: nine end-to-end criteria covering the
//! attack rates, the bound formulas, the entanglement certificates, and the
//! timing model. Each criterion prints exactly one result line
//!
//! ```text
//! ACCEPTANCE <k> <name>: PASS (<evidence>)
//! ```
//!
//! and the binary exits nonzero if any criterion fails. Runs as a plain
//! binary (`harness = false`) so the lines stream unfiltered through
//! `cargo test`.

use std::f64::consts::{E, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpvlab_core::adversaries::{intermediate_basis, ExtraRound, QuantumLeak};
use qpvlab_core::bounds::{
    binary_entropy, epsilon_threshold, eps_star, g, gamma, reference_rate,
};
use qpvlab_core::entropy::{
    certify_guessing_optimal, dmax, emax_pure, hmin_pure, schmidt, CqEnsemble,
};
use qpvlab_core::harness::{canonical_cheat_geometry, monte_carlo, wilson_interval};
use qpvlab_core::protocols::{run_qpv_adversarial, run_qpv_honest, ProtocolError};
use qpvlab_core::quantum::{bb84_basis, Subsystem};
use qpvlab_core::{
    ComplexMatrix, EntropyCertificate, ExperimentConfig, Geometry, Povm, PureState, ResourceSpec,
    RunSpec,
};

/// cos²(π/8): the per-qubit success probability of the intermediate-basis
/// measurement, equal to (2 + √2)/4.
const BREIDBART_RATE: f64 = (2.0 + SQRT_2) / 4.0;

/// −log₂ cos²(π/8), frozen from a 40-digit evaluation.
const RATE_PER_QUBIT: f64 = 0.228_446_696_836_388_03;

/// Thresholds at (n = 1000, ε = 2⁻²⁰), frozen from a 50-digit evaluation of
/// the two closed forms.
const THR_EXACT_1000: f64 = 712.141_485_339_641_8;
const THR_STRINGENT_1000: f64 = 710.911_979_841_748_4;

/// Fixed point of the rate function at zero input, frozen from a bisection
/// oracle for h(α) + α = 1.
const GAMMA_AT_ZERO: f64 = 0.227_092_195_219_348_19;

/// threshold_exact(n, 2⁻²⁰) / (RATE_PER_QUBIT·n) at the four grid sizes
/// below, frozen from a 40-digit evaluation.
const RATIO_GRID: [(u64, f64); 4] = [
    (256, 0.898_067_381_157_836_7),
    (1024, 3.140_731_238_012_164),
    (4096, 3.979_625_786_692_885_4),
    (1_000_000, 4.374_334_712_978_87),
];

fn main() {
    let criteria: Vec<(u32, &str, fn() -> String)> = vec![
        (1, "breidbart-rate", breidbart_rate),
        (2, "teleport-tightness", teleport_tightness),
        (3, "threshold-values", threshold_values),
        (4, "rate-function-machinery", rate_function_machinery),
        (5, "emax-sandwich", emax_sandwich_exactness),
        (6, "entanglement-vs-min-entropy", entanglement_vs_min_entropy),
        (7, "attack-vs-bound", attack_vs_bound),
        (8, "timing-and-structure", timing_and_structure),
        (9, "improvement-trend", improvement_trend),
    ];
    let mut failures = 0;
    for (k, name, run) in criteria {
        let start = Instant::now();
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(evidence) => {
                println!("ACCEPTANCE {k} {name}: PASS ({evidence}; {:.2?})", start.elapsed());
            }
            Err(panic) => {
                failures += 1;
                let msg = panic
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| panic.downcast_ref::<&str>().copied())
                    .unwrap_or("panic without message");
                println!("ACCEPTANCE {k} {name}: FAIL ({msg})");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criterion(s) failed");
        std::process::exit(1);
    }
}

fn assert_budget(elapsed: Duration, budget: Duration, what: &str) {
    assert!(
        elapsed <= budget,
        "{what} took {elapsed:.2?}, over the {budget:.2?} budget"
    );
}

fn basis_column(basis: &ComplexMatrix, col: usize) -> Vec<Complex64> {
    (0..basis.rows()).map(|r| basis[(r, col)]).collect()
}

/// Criterion 1: the optimal basis-oblivious guessing rate. Certified
/// analytically through the guessing-optimality conditions and reproduced by
/// a million-shot Monte Carlo of the actual measurement.
fn breidbart_rate() -> String {
    let start = Instant::now();
    let basis = intermediate_basis();

    // Per-encoding probabilities are exactly cos²(π/8) for all four inputs.
    for x in 0..2usize {
        for theta in 0..2u8 {
            let enc = basis_column(&bb84_basis(theta), x);
            let psi = PureState::new(enc, vec![Subsystem::qubit("q")]).unwrap();
            let probs = psi.basis_probabilities("q", &basis).unwrap();
            assert!(
                (probs[x] - BREIDBART_RATE).abs() < 1e-12,
                "encoding (x={x}, theta={theta}) guessed with {} != cos²(π/8)",
                probs[x]
            );
        }
    }

    // The measurement is certified optimal for the uniform cq ensemble, so
    // the analytic rate is the true optimum, not just this strategy's value.
    let tau = |x: usize| {
        let mut t = ComplexMatrix::zeros(2, 2);
        for theta in 0..2u8 {
            let enc = basis_column(&bb84_basis(theta), x);
            t = t.add(&ComplexMatrix::outer(&enc).scale(0.5));
        }
        t
    };
    let ensemble = CqEnsemble::new(vec![(0.5, tau(0)), (0.5, tau(1))]).unwrap();
    let povm = Povm::new(vec![
        ComplexMatrix::outer(&basis_column(&basis, 0)),
        ComplexMatrix::outer(&basis_column(&basis, 1)),
    ])
    .unwrap();
    let cert = certify_guessing_optimal(&ensemble, &povm).unwrap();
    let p_guess = match cert {
        EntropyCertificate::GuessingOptimality { p_guess, .. } => p_guess,
        other => panic!("unexpected certificate {other:?}"),
    };
    assert!((p_guess - BREIDBART_RATE).abs() < 1e-12, "certified optimum {p_guess}");

    // Monte Carlo over the real measurement: the Wilson interval of 10⁶
    // shots must cover the analytic value.
    let trials = 1_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(20_2600);
    let mut successes = 0u64;
    for _ in 0..trials {
        let x = rng.gen_range(0..2usize);
        let theta = rng.gen_range(0..2u8);
        let enc = basis_column(&bb84_basis(theta), x);
        let psi = PureState::new(enc, vec![Subsystem::qubit("q")]).unwrap();
        let (outcome, _) = psi.measure_in_basis("q", &basis, &mut rng).unwrap();
        successes += u64::from(outcome == x);
    }
    let (lo, hi) = wilson_interval(successes, trials);
    assert!(
        lo <= BREIDBART_RATE && BREIDBART_RATE <= hi,
        "cos²(π/8) outside the Monte-Carlo interval [{lo}, {hi}]"
    );

    // Per-qubit rate in bits, to five significant figures.
    let rate = -p_guess.log2();
    assert!((rate - RATE_PER_QUBIT).abs() < 1e-12, "rate {rate}");
    assert!(
        ((rate * 1e5).round() / 1e5 - 0.22845).abs() < 1e-12,
        "rate {rate} does not round to 0.22845"
    );

    assert_budget(start.elapsed(), Duration::from_secs(10), "criterion 1");
    format!(
        "certified optimum = cos²(π/8) = {BREIDBART_RATE:.12}, 10⁶-shot interval [{lo:.5}, {hi:.5}] covers it, rate {rate:.6} bits/qubit"
    )
}

/// Criterion 2: with one maximally entangled pair per position the
/// teleportation attack is perfect; 10⁴ trials at each n all pass.
fn teleport_tightness() -> String {
    let start = Instant::now();
    let trials = 10_000u64;
    for n in [1usize, 2, 4, 8] {
        let config = ExperimentConfig {
            run: RunSpec::Attack {
                strategy: "teleport".into(),
                ebits: n,
                resource: None,
            },
            n,
            geometry: canonical_cheat_geometry(),
            trials,
            seed: 7,
            output: None,
        };
        let estimate = monte_carlo(&config).unwrap();
        assert_eq!(
            estimate.successes, trials,
            "n = {n}: only {}/{trials} accepted",
            estimate.successes
        );
    }
    assert_budget(start.elapsed(), Duration::from_secs(30), "criterion 2");
    format!("{trials}/{trials} acceptances at every n in {{1, 2, 4, 8}}")
}

/// Criterion 3: both closed-form thresholds at (n = 1000, ε = 2⁻²⁰) match
/// the frozen 50-digit fixtures.
fn threshold_values() -> String {
    let report = epsilon_threshold(1000, 2f64.powi(-20)).unwrap();
    let exact = report.threshold_exact.unwrap();
    let stringent = report.threshold_stringent.unwrap();
    assert!((exact - THR_EXACT_1000).abs() < 1e-9, "exact {exact} vs fixture");
    assert!(
        (stringent - THR_STRINGENT_1000).abs() < 1e-9,
        "stringent {stringent} vs fixture"
    );
    assert!(stringent <= exact, "stringent must not exceed exact");
    assert!((report.params.s - 41.0).abs() < 1e-12, "s = {}", report.params.s);
    format!("threshold_exact = {exact:.6}, threshold_stringent = {stringent:.6}, both within 1e-9 of the fixtures")
}

/// Criterion 4: the rate function is the proper inverse on its curved
/// branch, the identity above 1/2, and the log-form entropy inequality
/// behind the stringent threshold holds across a 10⁴-point grid.
fn rate_function_machinery() -> String {
    // g(γ(x)) = x on 10³ points of [−1, 1/2].
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let x = -1.0 + 1.5 * i as f64 / 999.0;
        let roundtrip = g(gamma(x).unwrap()).unwrap();
        worst = worst.max((roundtrip - x).abs());
    }
    assert!(worst < 1e-10, "worst inversion error {worst:.3e}");

    // Identity branch and the two endpoint values.
    for i in 0..100 {
        let h = 0.5 + 2.5 * i as f64 / 99.0;
        assert_eq!(gamma(h).unwrap(), h, "identity branch at {h}");
    }
    let at_minus_one = gamma(-1.0).unwrap();
    assert!(at_minus_one.abs() < 1e-10, "γ(−1) = {at_minus_one}");
    let at_zero = gamma(0.0).unwrap();
    assert!((at_zero - GAMMA_AT_ZERO).abs() < 1e-10, "γ(0) = {at_zero}");

    // n·h(s/n) ≤ s·log₂ n − s·log₂(s/e) on a 100×100 grid.
    let mut checked = 0usize;
    for i in 0..100 {
        // n from 2 to 10⁶, geometric.
        let n = 2.0 * (500_000f64).powf(i as f64 / 99.0);
        for j in 0..100 {
            let s = (1.0 + (n - 1.0) * j as f64 / 99.0).min(n);
            let lhs = n * binary_entropy(s / n).unwrap();
            let rhs = s * n.log2() - s * (s / E).log2();
            assert!(lhs <= rhs + 1e-9, "entropy inequality fails at n={n}, s={s}: {lhs} > {rhs}");
            checked += 1;
        }
    }

    format!("inversion error ≤ {worst:.2e} on 10³ points, identity branch exact, {checked} grid points satisfy the entropy inequality")
}

fn kron_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut v = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        for &bj in b {
            v.push(ai * bj);
        }
    }
    v
}

/// Independent oracle for two-qubit pure states: minimise
/// log₂(w₀/t + w₁/(1−t)) over diagonal product witnesses by ternary search,
/// never consulting the closed form.
fn two_qubit_witness_oracle(weights: &[f64]) -> f64 {
    let w0 = weights[0];
    let w1 = if weights.len() > 1 { weights[1] } else { 0.0 };
    let f = |t: f64| (w0 / t + w1 / (1.0 - t)).log2();
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi))
}

fn max_entangled_pairs(k: usize) -> (PureState, Vec<String>) {
    let mut joint = PureState::bell_pair("a1", "b1").unwrap();
    for i in 2..=k {
        joint = joint.tensor(&PureState::bell_pair(format!("a{i}"), format!("b{i}")).unwrap()).unwrap();
    }
    (joint, (1..=k).map(|i| format!("a{i}")).collect())
}

fn random_bipartite(i: usize, rng: &mut ChaCha8Rng) -> PureState {
    const DIMS: [(usize, usize); 9] =
        [(2, 2), (2, 3), (2, 4), (3, 2), (3, 3), (3, 4), (4, 2), (4, 3), (4, 4)];
    let (da, db) = DIMS[i % DIMS.len()];
    PureState::haar_random(vec![Subsystem::new("a", da), Subsystem::new("b", db)], rng).unwrap()
}

/// Criterion 5: the entanglement sandwich collapses to an exact value on
/// pure states: k bits for k maximally entangled pairs, and the Schmidt
/// closed form on random states, cross-checked by a search oracle at qubit
/// scale.
fn emax_sandwich_exactness() -> String {
    let start = Instant::now();

    for k in 1..=4usize {
        let (joint, labels) = max_entangled_pairs(k);
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let res = emax_pure(&joint, &refs).unwrap();
        let kf = k as f64;
        assert!((res.bounds.lower - kf).abs() < 1e-8, "k={k} lower {}", res.bounds.lower);
        assert!((res.bounds.upper - kf).abs() < 1e-8, "k={k} upper {}", res.bounds.upper);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut max_gap = 0.0f64;
    let mut qubit_cases = 0usize;
    for i in 0..100 {
        let psi = random_bipartite(i, &mut rng);
        let res = emax_pure(&psi, &["a"]).unwrap();
        let dec = schmidt(&psi, &["a"]).unwrap();
        let closed = 2.0 * dec.sum_sqrt().log2();
        let gap = res.bounds.upper - res.bounds.lower;
        assert!(gap.abs() < 1e-8, "state {i}: sandwich gap {gap}");
        max_gap = max_gap.max(gap.abs());
        assert!((res.value - closed).abs() < 1e-8, "state {i}: {} vs closed {closed}", res.value);

        if psi.parts().iter().all(|p| p.dim == 2) {
            qubit_cases += 1;
            // Search oracle over the diagonal witness family.
            let oracle = two_qubit_witness_oracle(&dec.weights);
            assert!(
                (oracle - res.value).abs() < 1e-6,
                "state {i}: search oracle {oracle} vs certified {}",
                res.value
            );
            // The family's objective itself is validated against the dmax
            // primitive at an arbitrary interior point.
            if dec.rank() == 2 {
                let t = 0.37;
                let a0 = basis_column(&dec.a_vectors, 0);
                let a1 = basis_column(&dec.a_vectors, 1);
                let b0 = basis_column(&dec.b_vectors, 0);
                let b1 = basis_column(&dec.b_vectors, 1);
                let sigma = ComplexMatrix::outer(&kron_vec(&a0, &b0))
                    .scale(t)
                    .add(&ComplexMatrix::outer(&kron_vec(&a1, &b1)).scale(1.0 - t));
                let rho = ComplexMatrix::outer(psi.amplitudes());
                let direct = dmax(&rho, &sigma).unwrap();
                let formula = (dec.weights[0] / t + dec.weights[1] / (1.0 - t)).log2();
                assert!(
                    (direct - formula).abs() < 1e-8,
                    "state {i}: dmax {direct} vs witness formula {formula}"
                );
            }
        }
    }

    assert_budget(start.elapsed(), Duration::from_secs(60), "criterion 5");
    format!(
        "k = 1..4 pairs certify exactly k bits, 100 random states close the sandwich (max gap {max_gap:.2e}), {qubit_cases} qubit-scale cases agree with the search oracle"
    )
}

/// Criterion 6: on every instance certified in criterion 5 the entanglement
/// upper bound dominates the negated conditional min-entropy.
fn entanglement_vs_min_entropy() -> String {
    let mut instances = 0usize;
    let mut check = |psi: &PureState, labels: &[&str]| {
        let res = emax_pure(psi, labels).unwrap();
        let hm = hmin_pure(psi, labels).unwrap();
        assert!(
            -hm.value <= res.bounds.upper + 1e-9,
            "violation: −H_min = {} > E_max upper = {}",
            -hm.value,
            res.bounds.upper
        );
        instances += 1;
    };

    for k in 1..=4usize {
        let (joint, labels) = max_entangled_pairs(k);
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        check(&joint, &refs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..100 {
        let psi = random_bipartite(i, &mut rng);
        check(&psi, &["a"]);
    }

    format!("0 violations of −H_min ≤ E_max across {instances} certified instances")
}

/// Criterion 7: no implemented attack beats the certified bound anywhere on
/// the strategy × resource × n grid.
fn attack_vs_bound() -> String {
    let start = Instant::now();
    let mut cells: Vec<(String, usize, usize, ResourceSpec, u64)> = Vec::new();

    for strategy in ["breidbart", "basis-guess", "random-independent", "random-shared"] {
        for n in [4usize, 16, 64] {
            cells.push((strategy.into(), n, 0, ResourceSpec::None, 2000));
        }
    }
    for n in [4usize, 16, 64] {
        for k in [0, n / 2, n] {
            let trials = if n == 64 { 1000 } else { 2000 };
            cells.push((
                "teleport".into(),
                n,
                k,
                ResourceSpec::MaxEntangledPairs { pairs: k },
                trials,
            ));
        }
    }
    cells.push((
        "teleport".into(),
        8,
        8,
        ResourceSpec::Isotropic { pairs: 8, visibility: 0.7 },
        2000,
    ));

    let total = cells.len();
    for (idx, (strategy, n, k, resource, trials)) in cells.into_iter().enumerate() {
        let config = ExperimentConfig {
            run: RunSpec::Attack {
                strategy: strategy.clone(),
                ebits: k,
                resource: Some(resource.clone()),
            },
            n,
            geometry: canonical_cheat_geometry(),
            trials,
            seed: 1000 + idx as u64,
            output: None,
        };
        let estimate = monte_carlo(&config).unwrap();
        let row = qpvlab_core::EstimateRow::build(n, k, &strategy, &resource, &estimate).unwrap();
        row.check_against_bound().unwrap_or_else(|e| {
            panic!("bound violated at (strategy={strategy}, n={n}, k={k}): {e}")
        });
    }

    assert_budget(start.elapsed(), Duration::from_secs(300), "criterion 7");
    format!("0 bound violations across {total} grid cells (n up to 64, every built-in strategy)")
}

/// Criterion 8: the timing and message-structure rules are enforced without
/// exception: honest runs always pass, a displaced prover always fails, and
/// structural violations never reach a verdict.
fn timing_and_structure() -> String {
    let honest = Geometry::honest(0.0, 2.0, 1.0, 0.0).unwrap();
    for seed in 0..300u64 {
        let (t, _) = run_qpv_honest(2, &honest, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert!(t.verdict.accepted(), "honest run rejected at seed {seed}: {:?}", t.verdict);
    }

    let displaced = Geometry::honest(0.0, 2.0, 1.0, 0.0).unwrap().with_actual_prover(1.1).unwrap();
    for seed in 0..100u64 {
        let (t, _) = run_qpv_honest(2, &displaced, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert!(!t.verdict.accepted(), "displaced prover accepted at seed {seed}");
    }

    let cheat = canonical_cheat_geometry();
    let mut violations = 0usize;
    for seed in 0..100u64 {
        for strategy in [&ExtraRound as &dyn qpvlab_core::CheatStrategy, &QuantumLeak] {
            let run = run_qpv_adversarial(
                3,
                &cheat,
                strategy,
                &ResourceSpec::None,
                ChaCha8Rng::seed_from_u64(seed),
            );
            match run {
                Err(ProtocolError::Violation { .. }) => violations += 1,
                other => panic!("{} escaped enforcement at seed {seed}: {other:?}", strategy.name()),
            }
        }
    }
    assert_eq!(violations, 200);

    "300/300 honest accepts, 100/100 displaced rejects, 200/200 structural violations stopped".into()
}

/// Criterion 9: the ratio of the exact threshold to the benchmark rate at
/// ε = 2⁻²⁰ grows monotonically toward 1/RATE_PER_QUBIT.
fn improvement_trend() -> String {
    let mut prev = f64::NEG_INFINITY;
    let mut ratios = Vec::new();
    for (n, fixture) in RATIO_GRID {
        let report = epsilon_threshold(n, 2f64.powi(-20)).unwrap();
        let ratio = report.threshold_exact.unwrap() / reference_rate(n);
        assert!((ratio - fixture).abs() < 1e-9, "n={n}: ratio {ratio} vs fixture {fixture}");
        assert!(ratio > prev, "ratio not monotone at n={n}");
        prev = ratio;
        ratios.push((n, ratio));
    }
    let at_1024 = ratios[1].1;
    assert!(at_1024 > 3.0, "ratio at n=1024 is {at_1024}");

    let asymptote = 1.0 / RATE_PER_QUBIT;
    assert!(
        ((asymptote * 100.0).round() / 100.0 - 4.38).abs() < 1e-12,
        "asymptote {asymptote} does not round to 4.38"
    );
    let at_million = ratios[3].1;
    assert!(
        (at_million - asymptote).abs() / asymptote < 2e-3,
        "ratio at n=10⁶ ({at_million}) is not within 0.2% of {asymptote}"
    );

    // eps_star is the inverse query of the same threshold: spot-check the
    // round trip at one interior point.
    let eps = eps_star(1024, 100.0).unwrap();
    let back = epsilon_threshold(1024, eps).unwrap().threshold_exact.unwrap();
    assert!((back - 100.0).abs() < 1e-6, "ε* round trip gave {back}");

    format!(
        "ratio climbs {:.3} → {:.3} → {:.3} → {:.4}, asymptote 1/rate = {asymptote:.4} ≈ 4.38",
        ratios[0].1, ratios[1].1, ratios[2].1, ratios[3].1
    )
}
