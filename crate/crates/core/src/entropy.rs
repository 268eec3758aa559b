//! Entropic quantities with machine-checkable certificates.
//!
//! Everything here reduces to finitely many operator inequalities that the
//! Hermitian eigensolver can confirm, so each headline number ships with the
//! evidence for it:
//!
//! * `dmax(ρ‖σ)` is the max-relative entropy, the log of the smallest λ with
//!   ρ ≤ λσ. It is `+∞` when ρ has support outside σ's.
//! * Conditional min-entropy `H_min(A|B)` is certified from below by any
//!   feasible pair `(λ, τ)` with ρ_AB ≤ 2^λ·I_A⊗τ_B. For pure states the
//!   optimum has a closed form in the Schmidt weights, and the optimal τ is
//!   produced as a witness so the claim can be re-checked independently.
//! * For classical-quantum states, `H_min(X|B) = −log₂ p_guess`. A candidate
//!   measurement is certified optimal when the operator
//!   Γ = Σ_x p_x M_x τ_x is Hermitian and dominates every p_x τ_x; without
//!   that certificate the crate refuses to report the value as the entropy.
//! * Max-entanglement `E_max(A;B)` is the smallest `dmax(ρ‖σ)` over separable
//!   σ. Explicit product mixtures give upper bounds; `−H_min(A|B)` gives the
//!   matching lower bound, which is tight on pure states.

use crate::linalg::{c64, ComplexMatrix};
use crate::quantum::{DensityOperator, Povm, PureState, QuantumError, Subsystem};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues of σ below this are treated as outside its support.
pub const SUPPORT_CUTOFF: f64 = 1e-12;
/// ρ-mass tolerated outside σ's support before `dmax` is declared infinite.
pub const LEAKAGE_TOL: f64 = 1e-10;
/// Slack allowed when confirming operator inequalities numerically.
pub const CERT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("ensemble is empty or its weights do not form a distribution")]
    BadEnsemble(String),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error(
        "guessing measurement is not certified optimal \
         (Γ hermiticity error {hermiticity_error:.3e}, worst margin {worst_margin:.3e})"
    )]
    UncertifiedGuessing { hermiticity_error: f64, worst_margin: f64 },
    #[error("entanglement sandwich inverted: lower {lower} exceeds upper {upper}")]
    SandwichInverted { lower: f64, upper: f64 },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

type Result<T> = std::result::Result<T, EntropyError>;

/// Numeric evidence attached to an entropy claim. All fields are scalars so
/// certificates serialise compactly; re-deriving the underlying operators is
/// the job of the functions that issued them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyCertificate {
    /// ρ_AB ≤ 2^λ·I_A⊗τ_B held with the stated eigenvalue margin
    /// (min eig of the difference; nonnegative up to tolerance).
    MinEntropyFeasibility {
        lambda: f64,
        dim_a: usize,
        dim_b: usize,
        margin: f64,
    },
    /// Γ = Σ_x p_x M_x τ_x was Hermitian and dominated each p_x τ_x.
    GuessingOptimality {
        p_guess: f64,
        hermiticity_error: f64,
        domination_margins: Vec<f64>,
    },
    /// dmax(ρ‖σ) for an explicitly separable σ, bracketed from below.
    MaxEntanglementSandwich {
        lower: f64,
        upper: f64,
        mixture_terms: usize,
    },
}

/// log₂ of the smallest λ with ρ ≤ λσ, or `+∞` if no finite λ exists.
///
/// Computed on σ's support: with σ = Σ s_i|e_i⟩⟨e_i|, the answer is the top
/// eigenvalue of σ^{-1/2} ρ σ^{-1/2} restricted to {s_i > cutoff}, provided ρ
/// carries no mass outside that subspace.
pub fn dmax(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    if rho.rows() != sigma.rows() || rho.cols() != sigma.cols() {
        return Err(EntropyError::Mismatch(format!(
            "dmax between {}x{} and {}x{}",
            rho.rows(),
            rho.cols(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    let eig = sigma.hermitian_eigen(CERT_TOL)?;
    let d = sigma.rows();
    let support: Vec<usize> = (0..d).filter(|&i| eig.values[i] > SUPPORT_CUTOFF).collect();
    // ρ in σ's eigenbasis.
    let v = &eig.vectors;
    let r = v.dagger().mul(rho).mul(v);
    let leakage: f64 = (0..d)
        .filter(|i| !support.contains(i))
        .map(|i| r[(i, i)].re)
        .sum();
    if leakage > LEAKAGE_TOL {
        return Ok(f64::INFINITY);
    }
    if support.is_empty() {
        // σ = 0; ρ must be 0 too (leakage checked above), so any λ works.
        return Ok(f64::NEG_INFINITY);
    }
    let k = support.len();
    let m = ComplexMatrix::from_fn(k, k, |a, b| {
        let (i, j) = (support[a], support[b]);
        r[(i, j)] / (eig.values[i] * eig.values[j]).sqrt()
    });
    let top = m.hermitian_eigen(CERT_TOL)?.max_value();
    Ok(top.max(f64::MIN_POSITIVE).log2())
}

/// Schmidt decomposition of a pure state across the cut (`a_labels` | rest):
/// |ψ⟩ = Σ_i √w_i |a_i⟩|b_i⟩ with weights descending and both vector families
/// orthonormal. Only weights above [`SUPPORT_CUTOFF`] are kept.
#[derive(Clone, Debug)]
pub struct SchmidtDecomposition {
    /// Squared Schmidt coefficients, descending; they sum to 1.
    pub weights: Vec<f64>,
    /// Column i is the A-side vector for weight i.
    pub a_vectors: ComplexMatrix,
    /// Column i is the B-side vector for weight i.
    pub b_vectors: ComplexMatrix,
}

impl SchmidtDecomposition {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    /// Σ_i √w_i, the quantity that controls both `H_min` and `E_max` for
    /// pure states.
    pub fn sum_sqrt(&self) -> f64 {
        self.weights.iter().map(|w| w.sqrt()).sum()
    }
}

/// Compute the Schmidt decomposition across (`a_labels` | remaining labels).
pub fn schmidt(psi: &PureState, a_labels: &[&str]) -> Result<SchmidtDecomposition> {
    let (arranged, dim_a, dim_b) = split_front(psi, a_labels)?;
    let amps = arranged.amplitudes();
    // MM† on the A side; eigenvectors give the A vectors, weights the λ_i.
    let mm = ComplexMatrix::from_fn(dim_a, dim_a, |r, c| {
        let mut acc = c64(0.0, 0.0);
        for b in 0..dim_b {
            acc += amps[r * dim_b + b] * amps[c * dim_b + b].conj();
        }
        acc
    });
    let eig = mm.hermitian_eigen(CERT_TOL)?;
    let mut order: Vec<usize> = (0..dim_a).collect();
    order.sort_by(|&i, &j| eig.values[j].total_cmp(&eig.values[i]));
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.values[i] > SUPPORT_CUTOFF)
        .collect();
    let weights: Vec<f64> = kept.iter().map(|&i| eig.values[i]).collect();
    let a_vectors = ComplexMatrix::from_fn(dim_a, kept.len(), |r, c| eig.vectors[(r, kept[c])]);
    // b_i = Mᵀ conj(a_i) / √w_i.
    let b_vectors = ComplexMatrix::from_fn(dim_b, kept.len(), |r, c| {
        let mut acc = c64(0.0, 0.0);
        for a in 0..dim_a {
            acc += amps[a * dim_b + r] * a_vectors[(a, c)].conj();
        }
        acc / weights[c].sqrt()
    });
    Ok(SchmidtDecomposition { weights, a_vectors, b_vectors })
}

/// Permute `psi` so the listed labels form the leading factor; returns the
/// arranged state together with the two cut dimensions.
fn split_front(psi: &PureState, a_labels: &[&str]) -> Result<(PureState, usize, usize)> {
    let mut order: Vec<&str> = a_labels.to_vec();
    for p in psi.parts() {
        if !a_labels.contains(&p.label.as_str()) {
            order.push(p.label.as_str());
        }
    }
    let arranged = psi.permute(&order)?;
    let dim_a: usize = arranged.parts()[..a_labels.len()].iter().map(|p| p.dim).product();
    let dim_b = arranged.dim() / dim_a;
    if a_labels.is_empty() || dim_b == 0 || a_labels.len() == psi.parts().len() {
        return Err(EntropyError::Mismatch(
            "entropy cut needs at least one subsystem on each side".into(),
        ));
    }
    Ok((arranged, dim_a, dim_b))
}

/// Result of checking ρ_AB ≤ 2^λ·I_A⊗τ_B.
#[derive(Clone, Debug)]
pub struct FeasibilityCheck {
    pub feasible: bool,
    /// Min eigenvalue of 2^λ·I⊗τ − ρ; feasible iff ≥ −[`CERT_TOL`].
    pub margin: f64,
    pub certificate: EntropyCertificate,
}

/// Check the min-entropy feasibility inequality for a candidate pair
/// `(lambda, tau)`. Feasibility certifies `H_min(A|B)_ρ ≥ −lambda`.
pub fn hmin_feasibility(
    rho: &DensityOperator,
    a_labels: &[&str],
    lambda: f64,
    tau: &DensityOperator,
) -> Result<FeasibilityCheck> {
    let mut order: Vec<&str> = a_labels.to_vec();
    let mut b_dims = Vec::new();
    for p in rho.parts() {
        if !a_labels.contains(&p.label.as_str()) {
            order.push(p.label.as_str());
            b_dims.push(p.dim);
        }
    }
    let arranged = rho.permute(&order)?;
    let dim_b: usize = b_dims.iter().product();
    let dim_a = arranged.dim() / dim_b;
    if tau.dim() != dim_b {
        return Err(EntropyError::Mismatch(format!(
            "τ has dimension {}, B side has dimension {}",
            tau.dim(),
            dim_b
        )));
    }
    let bound = ComplexMatrix::identity(dim_a)
        .kron(tau.matrix())
        .scale(2f64.powf(lambda));
    let margin = bound
        .sub(arranged.matrix())
        .hermitian_eigen(CERT_TOL)?
        .min_value();
    let feasible = margin >= -CERT_TOL;
    Ok(FeasibilityCheck {
        feasible,
        margin,
        certificate: EntropyCertificate::MinEntropyFeasibility {
            lambda,
            dim_a,
            dim_b,
            margin,
        },
    })
}

/// `H_min(A|B)` for a pure state, with the optimising τ as a witness.
#[derive(Clone, Debug)]
pub struct MinEntropyPure {
    /// −2·log₂ Σ_i √w_i over the Schmidt weights; always ≤ 0.
    pub value: f64,
    /// The τ achieving the optimum: Schmidt-basis diagonal with weights
    /// √w_i / Σ_j √w_j on the B side.
    pub optimal_tau: DensityOperator,
    pub certificate: EntropyCertificate,
}

/// Closed-form conditional min-entropy of a pure state across the cut
/// (`a_labels` | rest), certified by re-checking feasibility at the optimum.
pub fn hmin_pure(psi: &PureState, a_labels: &[&str]) -> Result<MinEntropyPure> {
    let dec = schmidt(psi, a_labels)?;
    let s = dec.sum_sqrt();
    let value = -2.0 * s.log2();
    let dim_b = dec.b_vectors.rows();
    let mut tau = ComplexMatrix::zeros(dim_b, dim_b);
    for (i, w) in dec.weights.iter().enumerate() {
        let col: Vec<Complex64> = (0..dim_b).map(|r| dec.b_vectors[(r, i)]).collect();
        tau = tau.add(&ComplexMatrix::outer(&col).scale(w.sqrt() / s));
    }
    let b_parts: Vec<Subsystem> = psi
        .parts()
        .iter()
        .filter(|p| !a_labels.contains(&p.label.as_str()))
        .cloned()
        .collect();
    let optimal_tau = DensityOperator::new(tau, b_parts)?;
    let check = hmin_feasibility(&psi.to_density(), a_labels, -value, &optimal_tau)?;
    debug_assert!(check.feasible, "closed-form optimum must be feasible");
    Ok(MinEntropyPure { value, optimal_tau, certificate: check.certificate })
}

/// Classical-quantum ensemble: outcome x occurs with probability `probs[x]`
/// and hands the guesser the conditional state `states[x]`.
#[derive(Clone, Debug)]
pub struct CqEnsemble {
    probs: Vec<f64>,
    states: Vec<ComplexMatrix>,
}

impl CqEnsemble {
    pub fn new(terms: Vec<(f64, ComplexMatrix)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(EntropyError::BadEnsemble("no terms".into()));
        }
        let total: f64 = terms.iter().map(|(p, _)| p).sum();
        if terms.iter().any(|(p, _)| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(EntropyError::BadEnsemble(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let d = terms[0].1.rows();
        for (i, (_, m)) in terms.iter().enumerate() {
            if !m.is_square() || m.rows() != d {
                return Err(EntropyError::BadEnsemble(format!("state {i} has wrong shape")));
            }
            if m.hermiticity_error() > CERT_TOL || (m.trace().re - 1.0).abs() > 1e-9 {
                return Err(EntropyError::BadEnsemble(format!("state {i} is not a state")));
            }
        }
        let (probs, states) = terms.into_iter().unzip();
        Ok(Self { probs, states })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].rows()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn states(&self) -> &[ComplexMatrix] {
        &self.states
    }

    /// Average state Σ_x p_x τ_x seen by a guesser who ignores x.
    pub fn average_state(&self) -> ComplexMatrix {
        let d = self.dim();
        let mut acc = ComplexMatrix::zeros(d, d);
        for (p, t) in self.probs.iter().zip(&self.states) {
            acc = acc.add(&t.scale(*p));
        }
        acc
    }
}

/// Success probability Σ_x p_x tr(M_x τ_x) of guessing x with the given
/// measurement (element x is the guess "x").
pub fn pguess(ensemble: &CqEnsemble, povm: &Povm) -> Result<f64> {
    if povm.len() != ensemble.len() || povm.dim() != ensemble.dim() {
        return Err(EntropyError::Mismatch(format!(
            "{}-outcome POVM of dimension {} against {}-state ensemble of dimension {}",
            povm.len(),
            povm.dim(),
            ensemble.len(),
            ensemble.dim()
        )));
    }
    Ok(ensemble
        .probs
        .iter()
        .zip(&ensemble.states)
        .zip(povm.elements())
        .map(|((p, t), m)| p * m.mul(t).trace().re)
        .sum())
}

/// Certify that a guessing measurement is optimal for the ensemble: the
/// operator Γ = Σ_x p_x M_x τ_x must be Hermitian and dominate every p_x τ_x.
/// On success the returned certificate pins `p_guess` as the exact optimum,
/// so `H_min(X|B) = −log₂ p_guess`.
pub fn certify_guessing_optimal(
    ensemble: &CqEnsemble,
    povm: &Povm,
) -> Result<EntropyCertificate> {
    let p = pguess(ensemble, povm)?;
    let d = ensemble.dim();
    let mut gamma = ComplexMatrix::zeros(d, d);
    for ((px, t), m) in ensemble.probs.iter().zip(&ensemble.states).zip(povm.elements()) {
        gamma = gamma.add(&m.mul(t).scale(*px));
    }
    let herm = gamma.hermiticity_error();
    if herm > CERT_TOL {
        return Err(EntropyError::UncertifiedGuessing {
            hermiticity_error: herm,
            worst_margin: f64::NAN,
        });
    }
    // Symmetrise roundoff before the domination checks.
    let gamma = gamma.add(&gamma.dagger()).scale(0.5);
    let mut margins = Vec::with_capacity(ensemble.len());
    for (px, t) in ensemble.probs.iter().zip(&ensemble.states) {
        let diff = gamma.sub(&t.scale(*px));
        margins.push(diff.hermitian_eigen(CERT_TOL)?.min_value());
    }
    let worst = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    if worst < -CERT_TOL {
        return Err(EntropyError::UncertifiedGuessing {
            hermiticity_error: herm,
            worst_margin: worst,
        });
    }
    Ok(EntropyCertificate::GuessingOptimality {
        p_guess: p,
        hermiticity_error: herm,
        domination_margins: margins,
    })
}

/// `H_min(X|B)` of a cq ensemble, reported only when the supplied measurement
/// carries an optimality certificate; refuses to guess otherwise.
pub fn hmin_cq_certified(
    ensemble: &CqEnsemble,
    povm: &Povm,
) -> Result<(f64, EntropyCertificate)> {
    let cert = certify_guessing_optimal(ensemble, povm)?;
    let p = match &cert {
        EntropyCertificate::GuessingOptimality { p_guess, .. } => *p_guess,
        _ => unreachable!(),
    };
    Ok((-p.log2(), cert))
}

/// Convex mixture of product states Σ_i w_i·A_i⊗B_i: separable by
/// construction, so its `dmax` distance to any ρ upper-bounds `E_max(A;B)_ρ`.
#[derive(Clone, Debug)]
pub struct ProductMixture {
    weights: Vec<f64>,
    a_factors: Vec<ComplexMatrix>,
    b_factors: Vec<ComplexMatrix>,
    parts_a: Vec<Subsystem>,
    parts_b: Vec<Subsystem>,
}

impl ProductMixture {
    pub fn new(
        terms: Vec<(f64, ComplexMatrix, ComplexMatrix)>,
        parts_a: Vec<Subsystem>,
        parts_b: Vec<Subsystem>,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(EntropyError::BadEnsemble("empty mixture".into()));
        }
        let total: f64 = terms.iter().map(|(w, _, _)| w).sum();
        if terms.iter().any(|(w, _, _)| *w < -1e-12) || (total - 1.0).abs() > 1e-9 {
            return Err(EntropyError::BadEnsemble(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let da: usize = parts_a.iter().map(|p| p.dim).product();
        let db: usize = parts_b.iter().map(|p| p.dim).product();
        for (i, (_, a, b)) in terms.iter().enumerate() {
            let factor_ok = |m: &ComplexMatrix, d: usize| {
                m.is_square()
                    && m.rows() == d
                    && m.hermiticity_error() <= CERT_TOL
                    && (m.trace().re - 1.0).abs() <= 1e-9
                    && crate::quantum::is_psd_within(m, CERT_TOL)
            };
            if !factor_ok(a, da) || !factor_ok(b, db) {
                return Err(EntropyError::BadEnsemble(format!(
                    "term {i} is not a product of states on the declared factors"
                )));
            }
        }
        let mut weights = Vec::with_capacity(terms.len());
        let mut a_factors = Vec::with_capacity(terms.len());
        let mut b_factors = Vec::with_capacity(terms.len());
        for (w, a, b) in terms {
            weights.push(w.max(0.0));
            a_factors.push(a);
            b_factors.push(b);
        }
        Ok(Self { weights, a_factors, b_factors, parts_a, parts_b })
    }

    pub fn terms(&self) -> usize {
        self.weights.len()
    }

    /// The mixture as a density operator on A⊗B.
    pub fn density(&self) -> Result<DensityOperator> {
        let da: usize = self.parts_a.iter().map(|p| p.dim).product();
        let db: usize = self.parts_b.iter().map(|p| p.dim).product();
        let mut acc = ComplexMatrix::zeros(da * db, da * db);
        for ((w, a), b) in self.weights.iter().zip(&self.a_factors).zip(&self.b_factors) {
            acc = acc.add(&a.kron(b).scale(*w));
        }
        let mut parts = self.parts_a.clone();
        parts.extend(self.parts_b.iter().cloned());
        Ok(DensityOperator::new(acc, parts)?)
    }
}

/// Two-sided bracket on `E_max(A;B)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EmaxBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Upper-bound `E_max(A;B)_ρ` by the separable witness and cross-check it
/// against a known lower bound (pass `f64::NEG_INFINITY` when none is
/// available). Errors if the bracket is inverted beyond tolerance.
pub fn emax_sandwich(
    rho: &DensityOperator,
    lower: f64,
    mixture: &ProductMixture,
) -> Result<(EmaxBounds, EntropyCertificate)> {
    let sigma = mixture.density()?;
    if sigma.dim() != rho.dim() {
        return Err(EntropyError::Mismatch(format!(
            "mixture dimension {} vs state dimension {}",
            sigma.dim(),
            rho.dim()
        )));
    }
    let upper = dmax(rho.matrix(), sigma.matrix())?;
    if lower > upper + CERT_TOL {
        return Err(EntropyError::SandwichInverted { lower, upper });
    }
    let bounds = EmaxBounds { lower: lower.min(upper), upper };
    let cert = EntropyCertificate::MaxEntanglementSandwich {
        lower: bounds.lower,
        upper,
        mixture_terms: mixture.terms(),
    };
    Ok((bounds, cert))
}

/// Exact `E_max(A;B)` of a pure state: `2·log₂ Σ_i √w_i` over the Schmidt
/// weights, returned with the separable witness achieving it (the mixture of
/// doubled Schmidt-basis projectors with weights √w_i / Σ_j √w_j) so the
/// sandwich closes to numerical precision.
pub struct MaxEntanglementPure {
    pub value: f64,
    pub witness: ProductMixture,
    pub bounds: EmaxBounds,
    pub certificate: EntropyCertificate,
}

pub fn emax_pure(psi: &PureState, a_labels: &[&str]) -> Result<MaxEntanglementPure> {
    let dec = schmidt(psi, a_labels)?;
    let s = dec.sum_sqrt();
    let value = 2.0 * s.log2();
    let da = dec.a_vectors.rows();
    let db = dec.b_vectors.rows();
    let terms: Vec<(f64, ComplexMatrix, ComplexMatrix)> = (0..dec.rank())
        .map(|i| {
            let a_col: Vec<Complex64> = (0..da).map(|r| dec.a_vectors[(r, i)]).collect();
            let b_col: Vec<Complex64> = (0..db).map(|r| dec.b_vectors[(r, i)]).collect();
            (
                dec.weights[i].sqrt() / s,
                ComplexMatrix::outer(&a_col),
                ComplexMatrix::outer(&b_col),
            )
        })
        .collect();
    // The witness factors live in the cut's own ordering (A labels as given,
    // then the rest in state order), so arrange the state the same way.
    let mut order: Vec<&str> = a_labels.to_vec();
    for p in psi.parts() {
        if !a_labels.contains(&p.label.as_str()) {
            order.push(p.label.as_str());
        }
    }
    let rho = psi.permute(&order)?;
    let parts_a: Vec<Subsystem> = rho.parts()[..a_labels.len()].to_vec();
    let parts_b: Vec<Subsystem> = rho.parts()[a_labels.len()..].to_vec();
    let witness = ProductMixture::new(terms, parts_a, parts_b)?;
    // The lower bound −H_min(A|B) equals the closed form on pure states.
    let (bounds, certificate) = emax_sandwich(&rho.to_density(), value, &witness)?;
    Ok(MaxEntanglementPure { value, witness, bounds, certificate })
}
