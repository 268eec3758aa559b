//! Monte Carlo estimation and sweep campaigns.
//!
//! Every experiment is a seeded, embarrassingly parallel loop: trial t runs
//! on its own ChaCha substream (`seed_from_u64(seed)` then `set_stream`),
//! so results are byte-identical across thread counts and machines. Success
//! rates come with Wilson 95% intervals, and every attack estimate is
//! re-checked against the certified security bound before it is reported:
//! a row whose p̂ exceeds ε* beyond statistical slack is an error, never a
//! silently written line.

use crate::adversaries::{default_resource, strategy_by_name, AdversaryError, ResourceSpec};
use crate::bounds::{self, BoundError};
use crate::protocols::{
    run_qpv_adversarial, run_qpv_honest, run_wse_honest, ProtocolError, WseMode,
};
use crate::spacetime::Geometry;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// 97.5% standard-normal quantile: two-sided 95% coverage.
pub const WILSON_Z: f64 = 1.959963984540054;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(
        "estimate breaks the certified bound: strategy {strategy} at n={n}, k={k} \
         reached p_hat={p_hat} against eps_star={eps_star} (slack {slack})"
    )]
    BoundExceeded { strategy: String, n: usize, k: usize, p_hat: f64, eps_star: f64, slack: f64 },
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, HarnessError>;

/// Which protocol a config runs and against whom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum RunSpec {
    HonestQpv,
    Wse {
        mode: WseMode,
    },
    Attack {
        strategy: String,
        ebits: usize,
        /// Defaults to the strategy's conventional resource (max-entangled
        /// pairs for teleport, nothing otherwise).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resource: Option<ResourceSpec>,
    },
}

/// A complete, reproducible experiment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run: RunSpec,
    pub n: usize,
    pub geometry: Geometry,
    pub trials: u64,
    pub seed: u64,
    /// Output destination, consumed by the CLI; estimation ignores it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Wilson score interval for a binomial proportion at 95% coverage. Unlike
/// the normal approximation it stays inside [0, 1] and behaves at p̂ ∈ {0, 1}.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0, "interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At the boundary counts, centre - half is 0 (resp. centre + half is 1)
    // exactly; pin those so rounding residue cannot leak outside.
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Estimated success probability with its 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Estimate {
    fn from_counts(successes: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(successes, trials);
        Self { trials, successes, p_hat: successes as f64 / trials as f64, ci_lo, ci_hi }
    }
}

fn run_trial(config: &ExperimentConfig, stream: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    match &config.run {
        RunSpec::HonestQpv => {
            let (t, _) = run_qpv_honest(config.n, &config.geometry, rng)?;
            Ok(t.verdict.accepted())
        }
        RunSpec::Wse { mode } => {
            let t = run_wse_honest(config.n, *mode, rng)?;
            Ok(t.x_tilde.select(&t.matching) == t.x_matching)
        }
        RunSpec::Attack { strategy, ebits, resource } => {
            let strat = strategy_by_name(strategy, *ebits)?;
            let resource =
                resource.clone().unwrap_or_else(|| default_resource(strategy, *ebits));
            let (t, _) =
                run_qpv_adversarial(config.n, &config.geometry, strat.as_ref(), &resource, rng)?;
            Ok(t.verdict.accepted())
        }
    }
}

/// Estimate the success probability of the configured experiment, one
/// independent substream per trial, trials in parallel.
pub fn monte_carlo(config: &ExperimentConfig) -> Result<Estimate> {
    monte_carlo_streams(config, 0)
}

fn monte_carlo_streams(config: &ExperimentConfig, stream_base: u64) -> Result<Estimate> {
    if config.trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    let successes = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, stream_base + t).map(u64::from))
        .try_reduce(|| 0u64, |a, b| Ok(a + b))?;
    Ok(Estimate::from_counts(successes, config.trials))
}

/// One line of a sweep: the estimate plus every bound column the analysis
/// compares it against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub n: usize,
    pub k: usize,
    pub strategy: String,
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub emax_upper: f64,
    pub eps_star: f64,
    pub threshold_exact: f64,
    pub threshold_stringent: f64,
    pub tfkw_bound: f64,
}

pub const CSV_HEADER: &str = "n,k,strategy,trials,successes,p_hat,ci_lo,ci_hi,emax_upper,\
                              eps_star,threshold_exact,threshold_stringent,tfkw_bound";

impl EstimateRow {
    /// Assemble a row: attach the certified resource bound, the smallest ε
    /// it still secures, and both entanglement thresholds evaluated at that
    /// operating point (at ε* the exact threshold reproduces E_max; in the
    /// vacuous case ε* = 1 the thresholds are reported at the s = 1 edge of
    /// the parameter range, where they are smallest-ε limits).
    pub fn build(
        n: usize,
        k: usize,
        strategy: &str,
        resource: &ResourceSpec,
        estimate: &Estimate,
    ) -> Result<Self> {
        let emax_upper = resource.emax_bounds()?.upper;
        let eps_star = bounds::eps_star(n as u64, emax_upper)?;
        let s = if eps_star < 1.0 { 1.0 - 2.0 * eps_star.log2() } else { 1.0 };
        let (threshold_exact, threshold_stringent) = bounds::threshold_pair(n as f64, s);
        Ok(Self {
            n,
            k,
            strategy: strategy.to_string(),
            trials: estimate.trials,
            successes: estimate.successes,
            p_hat: estimate.p_hat,
            ci_lo: estimate.ci_lo,
            ci_hi: estimate.ci_hi,
            emax_upper,
            eps_star,
            threshold_exact,
            threshold_stringent,
            tfkw_bound: bounds::reference_rate(n as u64),
        })
    }

    /// The invariant every reported attack must satisfy: the estimate may
    /// not beat the certified bound by more than three interval half-widths.
    pub fn check_against_bound(&self) -> Result<()> {
        let slack = 3.0 * (self.ci_hi - self.ci_lo) / 2.0;
        if self.p_hat > self.eps_star + slack + 1e-12 {
            return Err(HarnessError::BoundExceeded {
                strategy: self.strategy.clone(),
                n: self.n,
                k: self.k,
                p_hat: self.p_hat,
                eps_star: self.eps_star,
                slack,
            });
        }
        Ok(())
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.k,
            self.strategy,
            self.trials,
            self.successes,
            self.p_hat,
            self.ci_lo,
            self.ci_hi,
            self.emax_upper,
            self.eps_star,
            self.threshold_exact,
            self.threshold_stringent,
            self.tfkw_bound
        )
    }

    pub fn from_csv_line(line: &str, line_no: usize) -> Result<Self> {
        let err = |reason: String| HarnessError::Csv { line: line_no, reason };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(err(format!("expected 13 fields, found {}", fields.len())));
        }
        fn parse<T: std::str::FromStr>(s: &str, what: &str, line_no: usize) -> Result<T> {
            s.parse().map_err(|_| HarnessError::Csv {
                line: line_no,
                reason: format!("bad {what}: '{s}'"),
            })
        }
        Ok(Self {
            n: parse(fields[0], "n", line_no)?,
            k: parse(fields[1], "k", line_no)?,
            strategy: fields[2].to_string(),
            trials: parse(fields[3], "trials", line_no)?,
            successes: parse(fields[4], "successes", line_no)?,
            p_hat: parse(fields[5], "p_hat", line_no)?,
            ci_lo: parse(fields[6], "ci_lo", line_no)?,
            ci_hi: parse(fields[7], "ci_hi", line_no)?,
            emax_upper: parse(fields[8], "emax_upper", line_no)?,
            eps_star: parse(fields[9], "eps_star", line_no)?,
            threshold_exact: parse(fields[10], "threshold_exact", line_no)?,
            threshold_stringent: parse(fields[11], "threshold_stringent", line_no)?,
            tfkw_bound: parse(fields[12], "tfkw_bound", line_no)?,
        })
    }
}

pub fn rows_to_csv(rows: &[EstimateRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    for row in rows {
        out.push('\n');
        out.push_str(&row.to_csv_line());
    }
    out.push('\n');
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<EstimateRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, other)) => {
            return Err(HarnessError::Csv { line: 1, reason: format!("bad header '{other}'") })
        }
        None => return Err(HarnessError::Csv { line: 1, reason: "empty input".into() }),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| EstimateRow::from_csv_line(l, i + 1))
        .collect()
}

/// One cell of a sweep grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub ebits: usize,
}

/// The symmetric colluder layout every sweep runs on: verifiers at 0 and 2,
/// claim at 1, colluders at 0.5 and 1.5, no timing tolerance.
pub fn canonical_cheat_geometry() -> Geometry {
    Geometry::cheating(0.0, 2.0, 1.0, 0.5, 1.5, 0.0).expect("static layout is valid")
}

/// Run a strategy across a grid of (n, ebits) cells, streaming CSV to `out`
/// (header first, one flushed line per finished cell) and returning the
/// rows. Every row is checked against the security bound before it is
/// written; a violation aborts the sweep with the offending estimate.
pub fn sweep(
    cells: &[SweepCell],
    strategy: &str,
    trials: u64,
    seed: u64,
    out: &mut impl Write,
) -> Result<Vec<EstimateRow>> {
    writeln!(out, "{CSV_HEADER}")?;
    out.flush()?;
    let geometry = canonical_cheat_geometry();
    let mut rows = Vec::with_capacity(cells.len());
    for (idx, cell) in cells.iter().enumerate() {
        let resource = default_resource(strategy, cell.ebits);
        let config = ExperimentConfig {
            run: RunSpec::Attack {
                strategy: strategy.to_string(),
                ebits: cell.ebits,
                resource: Some(resource.clone()),
            },
            n: cell.n,
            geometry: geometry.clone(),
            trials,
            seed,
            output: None,
        };
        let estimate = monte_carlo_streams(&config, idx as u64 * trials)?;
        let row = EstimateRow::build(cell.n, cell.ebits, strategy, &resource, &estimate)?;
        row.check_against_bound()?;
        writeln!(out, "{}", row.to_csv_line())?;
        out.flush()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn attack_config(strategy: &str, n: usize, ebits: usize, trials: u64, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            run: RunSpec::Attack { strategy: strategy.into(), ebits, resource: None },
            n,
            geometry: canonical_cheat_geometry(),
            trials,
            seed,
            output: None,
        }
    }

    #[test]
    fn wilson_interval_known_value() {
        // 80/100: classic textbook case.
        let (lo, hi) = wilson_interval(80, 100);
        assert!((lo - 0.711_170_834_406_841_1).abs() < 1e-12, "{lo}");
        assert!((hi - 0.866_633_066_668_967_5).abs() < 1e-12, "{hi}");
        // Degenerate counts stay inside the unit interval.
        let (lo, hi) = wilson_interval(0, 50);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
        let (lo, hi) = wilson_interval(50, 50);
        assert!(lo < 1.0);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn zero_trials_is_rejected() {
        let config = attack_config("breidbart", 2, 0, 0, 1);
        assert!(matches!(monte_carlo(&config), Err(HarnessError::NoTrials)));
    }

    #[test]
    fn monte_carlo_is_deterministic_across_runs() {
        let config = attack_config("basis-guess", 3, 0, 400, 11);
        let a = monte_carlo(&config).unwrap();
        let b = monte_carlo(&config).unwrap();
        assert_eq!(a, b);
        // And sensitive to the seed.
        let c = monte_carlo(&attack_config("basis-guess", 3, 0, 400, 12)).unwrap();
        assert_ne!(a.successes, c.successes);
    }

    #[test]
    fn honest_and_wse_runs_estimate_one() {
        let honest = ExperimentConfig {
            run: RunSpec::HonestQpv,
            n: 3,
            geometry: Geometry::honest(0.0, 2.0, 1.0, 0.0).unwrap(),
            trials: 50,
            seed: 5,
            output: None,
        };
        assert_eq!(monte_carlo(&honest).unwrap().p_hat, 1.0);
        let wse = ExperimentConfig {
            run: RunSpec::Wse { mode: WseMode::Entangled },
            n: 16,
            geometry: Geometry::honest(0.0, 2.0, 1.0, 0.0).unwrap(),
            trials: 50,
            seed: 5,
            output: None,
        };
        assert_eq!(monte_carlo(&wse).unwrap().p_hat, 1.0);
    }

    #[test]
    fn estimate_row_round_trips_through_csv() {
        let estimate = Estimate::from_counts(137, 400);
        let resource = ResourceSpec::MaxEntangledPairs { pairs: 2 };
        let row = EstimateRow::build(16, 2, "teleport", &resource, &estimate).unwrap();
        let text = rows_to_csv(&[row.clone()]);
        let back = rows_from_csv(&text).unwrap();
        assert_eq!(back, vec![row]);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(rows_from_csv("").is_err());
        assert!(rows_from_csv("nonsense header\n").is_err());
        let bad_field = format!("{CSV_HEADER}\n1,2,breidbart,10,5,x,0,1,0,1,1,1,1\n");
        assert!(rows_from_csv(&bad_field).is_err());
        let short = format!("{CSV_HEADER}\n1,2,breidbart\n");
        assert!(rows_from_csv(&short).is_err());
    }

    #[test]
    fn sweep_streams_header_and_rows() {
        let cells = [SweepCell { n: 16, ebits: 0 }, SweepCell { n: 16, ebits: 16 }];
        let mut buf = Vec::new();
        let rows = sweep(&cells, "teleport", 200, 31, &mut buf).unwrap();
        assert_eq!(rows.len(), 2);
        let text = String::from_utf8(buf).unwrap();
        let parsed = rows_from_csv(&text).unwrap();
        assert_eq!(parsed, rows);
        // Full teleportation succeeds every time; the k = 0 cell cannot.
        assert_eq!(rows[1].p_hat, 1.0);
        assert!(rows[0].p_hat < 1.0);
        // Bound columns: at k = n the guarantee is vacuous, at k = 0 it bites.
        assert_eq!(rows[1].eps_star, 1.0);
        assert!(rows[0].eps_star < 1.0);
    }

    #[test]
    fn empty_sweep_writes_only_the_header() {
        let mut buf = Vec::new();
        let rows = sweep(&[], "breidbart", 100, 1, &mut buf).unwrap();
        assert!(rows.is_empty());
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn sweep_is_byte_identical_across_runs() {
        let cells = [SweepCell { n: 3, ebits: 0 }];
        let mut a = Vec::new();
        let mut b = Vec::new();
        sweep(&cells, "breidbart", 300, 7, &mut a).unwrap();
        sweep(&cells, "breidbart", 300, 7, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn attack_estimates_respect_the_certified_bound() {
        // The strongest implemented attack stays under ε* at every budget.
        for (n, ebits, trials) in [(8usize, 0usize, 800u64), (8, 4, 800), (6, 6, 400)] {
            let config = attack_config("teleport", n, ebits, trials, 99);
            let estimate = monte_carlo(&config).unwrap();
            let resource = default_resource("teleport", ebits);
            let row = EstimateRow::build(n, ebits, "teleport", &resource, &estimate).unwrap();
            row.check_against_bound().unwrap();
        }
    }

    #[test]
    fn bound_violation_is_loud() {
        // A fabricated row that pretends to beat the bound must error.
        let estimate = Estimate::from_counts(999, 1000);
        let resource = ResourceSpec::None;
        let mut row = EstimateRow::build(64, 0, "breidbart", &resource, &estimate).unwrap();
        assert!(row.check_against_bound().is_err());
        // The same counts at a vacuous operating point pass.
        row.eps_star = 1.0;
        row.check_against_bound().unwrap();
    }

    #[test]
    fn teleport_success_grows_with_the_entanglement_budget() {
        let trials = 400u64;
        let rate = |ebits: usize| {
            monte_carlo(&attack_config("teleport", 4, ebits, trials, 3)).unwrap().p_hat
        };
        let p0 = rate(0);
        let p2 = rate(2);
        let p4 = rate(4);
        assert!(p0 < p2 && p2 < p4, "{p0} {p2} {p4}");
        assert_eq!(p4, 1.0);
    }

    #[test]
    fn experiment_config_round_trips_as_json() {
        let config = attack_config("teleport", 8, 3, 1000, 42);
        let json = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.trials, config.trials);
        assert_eq!(back.run, config.run);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    proptest! {
        #[test]
        fn wilson_interval_contains_the_point_estimate(
            successes in 0u64..500, extra in 0u64..500
        ) {
            let trials = successes + extra + 1;
            let (lo, hi) = wilson_interval(successes, trials);
            let p = successes as f64 / trials as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }

        #[test]
        fn wilson_interval_narrows_with_more_trials(
            successes in 1u64..100
        ) {
            let (lo1, hi1) = wilson_interval(successes, successes * 2);
            let (lo2, hi2) = wilson_interval(successes * 10, successes * 20);
            prop_assert!(hi2 - lo2 < hi1 - lo1);
        }

        #[test]
        fn csv_round_trip_is_lossless(
            n in 1usize..200,
            k in 0usize..50,
            successes in 0u64..1000,
            extra in 0u64..1000,
        ) {
            let trials = successes + extra + 1;
            let estimate = Estimate::from_counts(successes, trials);
            let resource = ResourceSpec::MaxEntangledPairs { pairs: k };
            let row = EstimateRow::build(n, k, "teleport", &resource, &estimate).unwrap();
            let text = rows_to_csv(&[row.clone()]);
            let back = rows_from_csv(&text).unwrap();
            prop_assert_eq!(back, vec![row]);
        }
    }
}
