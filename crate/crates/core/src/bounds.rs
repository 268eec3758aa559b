//! Security-bound calculator: the scalar formulas that turn an adversary's
//! certified entanglement budget into a cheating-probability guarantee.
//!
//! The chain runs: E_max per round → γ(−E_max/n) → security rate λ (bits per
//! qubit) → cheating bound ε = 2^{−nλ}. Inverted, a target ε fixes
//! s = 1 − 2·log₂ ε and the tolerable entanglement threshold
//! n − s − n·h(s/n), with a slightly more stringent closed form
//! n − s·log₂ n + s·log₂(s/(2e)) that avoids evaluating the binary entropy.
//!
//! All quantities are in bits. Functions return typed errors instead of
//! extrapolating outside the formulas' domains: a vacuous bound is reported
//! as such, never as a silently negative number.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("bound is vacuous: {0}")]
    Vacuous(String),
    #[error("bisection did not converge (residual {0:.3e})")]
    NoConvergence(f64),
    #[error("{0}")]
    Domain(String),
}

type Result<T> = std::result::Result<T, BoundError>;

/// Binary entropy h(α) = −α·log₂ α − (1−α)·log₂(1−α), with h(0) = h(1) = 0.
pub fn binary_entropy(alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(BoundError::OutOfRange { name: "alpha", value: alpha, lo: 0.0, hi: 1.0 });
    }
    if alpha == 0.0 || alpha == 1.0 {
        return Ok(0.0);
    }
    Ok(-alpha * alpha.log2() - (1.0 - alpha) * (1.0 - alpha).log2())
}

/// g(α) = h(α) + α − 1 on [0, 1/2]; strictly increasing from −1 to 1/2.
pub fn g(alpha: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&alpha) {
        return Err(BoundError::OutOfRange { name: "alpha", value: alpha, lo: 0.0, hi: 0.5 });
    }
    Ok(binary_entropy(alpha)? + alpha - 1.0)
}

/// Inverse of g on [−1, 1/2], by bisection (unconditionally convergent on the
/// closed interval; tolerance 1e−12 on the residual, 200-iteration cap).
pub fn g_inverse(y: f64) -> Result<f64> {
    if !(-1.0..=0.5).contains(&y) {
        return Err(BoundError::OutOfRange { name: "y", value: y, lo: -1.0, hi: 0.5 });
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    let mut mid = 0.25;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = g(mid).expect("midpoint stays inside [0, 1/2]");
        if (v - y).abs() <= 1e-12 {
            return Ok(mid);
        }
        if v < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The interval has collapsed to machine precision; accept if the residual
    // is still small (the function is steep near α = 0).
    let residual = (g(mid).unwrap() - y).abs();
    if residual <= 1e-9 {
        Ok(mid)
    } else {
        Err(BoundError::NoConvergence(residual))
    }
}

/// γ(h) = h for h ≥ 1/2, else g⁻¹(h). Defined for h ≥ −1; below that the
/// security statement is vacuous and a typed error is returned.
pub fn gamma(hmin: f64) -> Result<f64> {
    if hmin < -1.0 {
        return Err(BoundError::Vacuous(format!(
            "γ undefined for argument {hmin} < −1 (entanglement exceeds n)"
        )));
    }
    if hmin >= 0.5 {
        Ok(hmin)
    } else {
        g_inverse(hmin)
    }
}

/// Maximal certified security rate λ = ½·[γ(−E_max/n) − 1/n] in bits per
/// qubit. May be ≤ 0 for small n (the guarantee is then vacuous but well
/// defined); errors only when E_max > n, where γ has no value at all.
pub fn lambda_secure(n: u64, emax: f64) -> Result<f64> {
    if n == 0 {
        return Err(BoundError::Domain("n must be positive".into()));
    }
    if emax < 0.0 {
        return Err(BoundError::OutOfRange {
            name: "emax",
            value: emax,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let nf = n as f64;
    if emax > nf {
        return Err(BoundError::Vacuous(format!(
            "E_max = {emax} exceeds n = {n}; no security statement follows"
        )));
    }
    Ok(0.5 * (gamma(-emax / nf)? - 1.0 / nf))
}

/// ε = 2^{−nλ}.
pub fn epsilon_from_lambda(n: u64, lambda: f64) -> f64 {
    (-(n as f64) * lambda).exp2()
}

/// λ = −(1/n)·log₂ ε.
pub fn lambda_from_epsilon(n: u64, epsilon: f64) -> Result<f64> {
    if n == 0 {
        return Err(BoundError::Domain("n must be positive".into()));
    }
    if epsilon <= 0.0 {
        return Err(BoundError::OutOfRange {
            name: "epsilon",
            value: epsilon,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(-epsilon.log2() / n as f64)
}

/// Benchmark entanglement rate −log₂(cos²(π/8))·n ≈ 0.22845·n: the
/// min-entropy certified when each qubit is attacked independently with the
/// optimal single-copy measurement. Sweep output reports thresholds relative
/// to this line (the `tfkw_bound` column).
pub fn reference_rate(n: u64) -> f64 {
    -(std::f64::consts::FRAC_PI_8.cos().powi(2).log2()) * n as f64
}

/// How the report's thresholds compare to a supplied E_max, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// E_max is within the exact threshold: the ε guarantee holds.
    Secure,
    /// E_max exceeds the threshold; the bound certifies nothing here.
    BoundExceeded,
    /// No positive threshold exists at these parameters (s > n or ε ≥ 1).
    Vacuous,
    /// No E_max was supplied; thresholds are reported without comparison.
    NotCompared,
}

/// Parameter bundle common to every bound query. `s = 1 − 2·log₂ ε` and
/// `λ = −(1/n)·log₂ ε` are kept alongside ε so reports carry all three.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SecurityParams {
    pub n: u64,
    pub epsilon: f64,
    pub lambda: f64,
    pub s: f64,
}

impl SecurityParams {
    pub fn from_epsilon(n: u64, epsilon: f64) -> Result<Self> {
        if n == 0 {
            return Err(BoundError::Domain("n must be positive".into()));
        }
        if epsilon <= 0.0 || epsilon >= 1.0 {
            return Err(BoundError::OutOfRange {
                name: "epsilon",
                value: epsilon,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(Self {
            n,
            epsilon,
            lambda: lambda_from_epsilon(n, epsilon)?,
            s: 1.0 - 2.0 * epsilon.log2(),
        })
    }
}

/// Full evaluation of the ε-security thresholds, with an optional comparison
/// against a concrete adversarial E_max.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub params: SecurityParams,
    /// Tolerable entanglement n − s − n·h(s/n); `None` when the report is
    /// vacuous (s > n, or s ≤ 1 coming from an over-budget E_max).
    pub threshold_exact: Option<f64>,
    /// Closed-form sufficient condition n − s·log₂ n + s·log₂(s/(2e));
    /// `None` in the same vacuous cases as `threshold_exact`.
    pub threshold_stringent: Option<f64>,
    /// Benchmark rate 0.22845·n for the same n.
    pub reference_rate: f64,
    /// The adversary's certified E_max, when one was supplied.
    pub emax: Option<f64>,
    /// γ(−E_max/n), when an E_max within domain was supplied.
    pub gamma_rate: Option<f64>,
    /// Certified security rate λ for the supplied E_max, when in domain.
    pub lambda_secure: Option<f64>,
    pub verdict: Verdict,
}

pub(crate) fn threshold_pair(n: f64, s: f64) -> (f64, f64) {
    let h = binary_entropy(s / n).expect("caller ensures s ≤ n");
    let exact = n - s - n * h;
    let stringent = n - s * n.log2() + s * (s / (2.0 * std::f64::consts::E)).log2();
    (exact, stringent)
}

/// Evaluate both ε-security thresholds for (n, ε). The report is vacuous
/// (thresholds `None`) when s = 1 − 2·log₂ ε exceeds n.
pub fn epsilon_threshold(n: u64, epsilon: f64) -> Result<BoundReport> {
    let params = SecurityParams::from_epsilon(n, epsilon)?;
    let nf = n as f64;
    let (threshold_exact, threshold_stringent, verdict) = if params.s <= nf {
        let (e, s) = threshold_pair(nf, params.s);
        (Some(e), Some(s), Verdict::NotCompared)
    } else {
        (None, None, Verdict::Vacuous)
    };
    Ok(BoundReport {
        params,
        threshold_exact,
        threshold_stringent,
        reference_rate: reference_rate(n),
        emax: None,
        gamma_rate: None,
        lambda_secure: None,
        verdict,
    })
}

impl BoundReport {
    /// Attach an adversarial E_max: fills the comparison columns and settles
    /// the verdict.
    pub fn with_emax(mut self, emax: f64) -> Self {
        self.emax = Some(emax);
        let n = self.params.n;
        self.gamma_rate = gamma(-emax / n as f64).ok();
        self.lambda_secure = lambda_secure(n, emax).ok();
        self.verdict = match self.threshold_exact {
            None => Verdict::Vacuous,
            Some(t) => {
                if emax <= t + 1e-9 {
                    Verdict::Secure
                } else {
                    Verdict::BoundExceeded
                }
            }
        };
        self
    }
}

/// Report for an entanglement budget: the certified rate λ, the implied
/// ε = 2^{−nλ}, and the thresholds evaluated at that ε (on which E_max sits
/// exactly at the exact threshold). Vacuous when λ ≤ 0.
pub fn bound_from_emax(n: u64, emax: f64) -> Result<BoundReport> {
    let lambda = lambda_secure(n, emax)?;
    let epsilon = epsilon_from_lambda(n, lambda);
    if epsilon >= 1.0 {
        // λ ≤ 0: the guarantee is empty. Report it as such.
        return Ok(BoundReport {
            params: SecurityParams { n, epsilon, lambda, s: 1.0 - 2.0 * epsilon.log2() },
            threshold_exact: None,
            threshold_stringent: None,
            reference_rate: reference_rate(n),
            emax: Some(emax),
            gamma_rate: gamma(-emax / n as f64).ok(),
            lambda_secure: Some(lambda),
            verdict: Verdict::Vacuous,
        });
    }
    Ok(epsilon_threshold(n, epsilon)?.with_emax(emax))
}

/// ε*(n, k) = inf{ε : k ≤ n − s(ε) − n·h(s(ε)/n)}, by bisection on log₂ ε
/// over the branch s ≤ n/2 where the threshold is monotone in ε. Returns 1
/// when no ε < 1 tolerates k (the comparison is then vacuous).
pub fn eps_star(n: u64, k: f64) -> Result<f64> {
    if n == 0 {
        return Err(BoundError::Domain("n must be positive".into()));
    }
    if k < 0.0 {
        return Err(BoundError::OutOfRange { name: "k", value: k, lo: 0.0, hi: f64::INFINITY });
    }
    let nf = n as f64;
    let t_of = |l: f64| {
        // l = log₂ ε ⇒ s = 1 − 2l.
        let s = 1.0 - 2.0 * l;
        threshold_pair(nf, s).0
    };
    // Monotone branch: s ∈ [1, n/2], i.e. l ∈ [(1 − n/2)/2, 0).
    let l_lo = (1.0 - nf / 2.0) / 2.0;
    if l_lo >= 0.0 || t_of(-1e-12) < k {
        // n too small for any valid ε, or even ε → 1⁻ cannot tolerate k.
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (l_lo, -1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_of(mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp2())
}

/// Smallest n whose exact threshold at ε reaches `emax`. The threshold is
/// not monotone in n near n ≈ s (it dips negative just past the boundary
/// zero), so the search scans the dip linearly and only switches to doubling
/// plus bisection in the monotone tail n ≥ 2s.
pub fn min_n_for(epsilon: f64, emax: f64) -> Result<u64> {
    if epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(BoundError::OutOfRange {
            name: "epsilon",
            value: epsilon,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if emax < 0.0 {
        return Err(BoundError::OutOfRange {
            name: "emax",
            value: emax,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let s = 1.0 - 2.0 * epsilon.log2();
    let t = |n: u64| threshold_pair(n as f64, s).0;
    let start = s.ceil() as u64;
    let dip_end = (2.0 * s).ceil() as u64;
    for n in start..=dip_end {
        if t(n) >= emax {
            return Ok(n);
        }
    }
    // Monotone tail: double until feasible, then bisect for the boundary.
    let mut hi = dip_end.max(1);
    while t(hi) < emax {
        hi = hi.checked_mul(2).ok_or_else(|| {
            BoundError::Domain("search overflowed before reaching the threshold".into())
        })?;
    }
    let mut lo = hi / 2;
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if t(mid) >= emax {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
