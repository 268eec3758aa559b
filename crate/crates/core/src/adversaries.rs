//! Cheating strategies for the position-verification game.
//!
//! Two colluders bracket the claimed position: M1 intercepts the flying
//! qubits, M2 intercepts the basis string. Each acts locally on its half of
//! a pre-shared entangled resource, they exchange one classical message in
//! each direction, and each answers its own verifier. This module supplies
//! the pieces the protocol driver wires together:
//!
//! * [`CheatBoard`] holds the joint quantum state per position and hands
//!   each colluder a side-restricted view ([`M1View`], [`M2View`]), so a
//!   strategy cannot touch the other side's subsystems by construction.
//! * [`CheatStrategy`] is the four-phase interface: two local phases that
//!   may measure, then two deterministic answer phases computed from stored
//!   classical memory and the single received message.
//! * [`ResourceSpec`] describes the pre-shared state and reports certified
//!   two-sided bounds on its max-relative-entropy of entanglement, which is
//!   what the security bound consumes.
//!
//! Strategies announce their crossings as typed [`Transmission`]s; anything
//! other than exactly one classical message per direction is rejected by
//! the driver, and the deliberately violating strategies here exist to
//! exercise that enforcement.

use crate::bits::Bits;
use crate::entropy::{
    emax_pure, emax_sandwich, EmaxBounds, EntropyCertificate, EntropyError, ProductMixture,
};
use crate::linalg::{c64, ComplexMatrix};
use crate::quantum::{bell_vector, sample_index, PureState, QuantumError, Subsystem};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("invalid resource: {0}")]
    BadResource(String),
    #[error("position {position} has no subsystem {label}")]
    MissingSubsystem { position: usize, label: &'static str },
    #[error("strategy needs {needed} entangled pairs but the resource provides {available}")]
    NotEnoughPairs { needed: usize, available: usize },
    #[error("malformed strategy message: {0}")]
    Message(String),
    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

type Result<T> = std::result::Result<T, AdversaryError>;

/// The measurement basis halfway between computational and Hadamard
/// (columns at angle π/8), which maximises the probability of guessing a
/// uniformly chosen encoded bit from a single qubit.
pub fn intermediate_basis() -> ComplexMatrix {
    let (c, s) = ((std::f64::consts::PI / 8.0).cos(), (std::f64::consts::PI / 8.0).sin());
    ComplexMatrix::from_real_rows(&[&[c, -s], &[s, c]])
}

/// Description of the entanglement shared between M1 and M2 before the
/// round starts, one two-qubit state per pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResourceSpec {
    None,
    /// `pairs` copies of the maximally entangled two-qubit state.
    MaxEntangledPairs { pairs: usize },
    /// `pairs` copies of √w₀|00⟩ + √w₁|11⟩.
    PureSchmidt { weights: Vec<f64>, pairs: usize },
    /// `pairs` copies of v·Φ⁺ + (1−v)·I/4.
    Isotropic { pairs: usize, visibility: f64 },
}

impl ResourceSpec {
    pub fn pairs(&self) -> usize {
        match self {
            ResourceSpec::None => 0,
            ResourceSpec::MaxEntangledPairs { pairs }
            | ResourceSpec::PureSchmidt { pairs, .. }
            | ResourceSpec::Isotropic { pairs, .. } => *pairs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ResourceSpec::None | ResourceSpec::MaxEntangledPairs { .. } => Ok(()),
            ResourceSpec::PureSchmidt { weights, .. } => {
                if weights.len() != 2 {
                    return Err(AdversaryError::BadResource(
                        "pure Schmidt pairs are two-qubit states; give exactly two weights".into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(AdversaryError::BadResource("weights must be nonnegative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(AdversaryError::BadResource(format!(
                        "weights sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            ResourceSpec::Isotropic { visibility, .. } => {
                if !(0.0..=1.0).contains(visibility) || !visibility.is_finite() {
                    return Err(AdversaryError::BadResource(format!(
                        "visibility {visibility} must lie in [0, 1]"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Draw one pair, labelled `a` (M1 side) and `b` (M2 side). Mixed
    /// resources are sampled from their eigen-decomposition, so Monte Carlo
    /// over many rounds reproduces the mixed state exactly.
    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> Result<Option<PureState>> {
        let pair_parts = || vec![Subsystem::qubit("a"), Subsystem::qubit("b")];
        match self {
            ResourceSpec::None => Ok(None),
            ResourceSpec::MaxEntangledPairs { .. } => {
                Ok(Some(PureState::bell_pair("a", "b")?))
            }
            ResourceSpec::PureSchmidt { weights, .. } => {
                let amps = vec![
                    c64(weights[0].sqrt(), 0.0),
                    c64(0.0, 0.0),
                    c64(0.0, 0.0),
                    c64(weights[1].sqrt(), 0.0),
                ];
                Ok(Some(PureState::new(amps, pair_parts())?))
            }
            ResourceSpec::Isotropic { visibility, .. } => {
                let v = *visibility;
                let probs = [(1.0 + 3.0 * v) / 4.0, (1.0 - v) / 4.0, (1.0 - v) / 4.0, (1.0 - v) / 4.0];
                let idx = sample_index(&probs, rng);
                let amps = bell_vector((idx >> 1) as u8, (idx & 1) as u8);
                Ok(Some(PureState::new(amps, pair_parts())?))
            }
        }
    }

    /// Certified two-sided bounds on the max-relative-entropy of
    /// entanglement of the whole resource.
    ///
    /// Pure kinds are exact: the closed form is additive over independent
    /// pairs because the joint Schmidt weights are products, so Σ√w factors.
    /// For isotropic pairs the upper bound is the certified distance to an
    /// explicit separable mixture (per pair, scaled by the pair count; both
    /// the state and the witness factorise) and the lower bound is the
    /// trivial 0.
    pub fn emax_bounds(&self) -> Result<EmaxBounds> {
        self.validate()?;
        let k = self.pairs() as f64;
        match self {
            ResourceSpec::None => Ok(EmaxBounds { lower: 0.0, upper: 0.0 }),
            ResourceSpec::MaxEntangledPairs { .. } | ResourceSpec::PureSchmidt { .. } => {
                let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
                let pair = self
                    .sample_pair(&mut rng)?
                    .expect("pure resource kinds always produce a pair");
                let single = emax_pure(&pair, &["a"])?;
                Ok(EmaxBounds {
                    lower: k * single.bounds.lower,
                    upper: k * single.bounds.upper,
                })
            }
            ResourceSpec::Isotropic { visibility, .. } => {
                let per_pair = isotropic_emax_upper(*visibility)?;
                Ok(EmaxBounds { lower: 0.0, upper: k * per_pair })
            }
        }
    }

    /// Per-pair evidence behind [`ResourceSpec::emax_bounds`]: the witness
    /// certificate for one pair, or `None` when the resource is empty.
    pub fn emax_certificate(&self) -> Result<Option<EntropyCertificate>> {
        self.validate()?;
        match self {
            ResourceSpec::None => Ok(None),
            ResourceSpec::MaxEntangledPairs { .. } | ResourceSpec::PureSchmidt { .. } => {
                let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
                let pair = self
                    .sample_pair(&mut rng)?
                    .expect("pure resource kinds always produce a pair");
                Ok(Some(emax_pure(&pair, &["a"])?.certificate))
            }
            ResourceSpec::Isotropic { visibility, .. } => {
                let rho = isotropic_pair(*visibility)?;
                let witness = isotropic_witness(*visibility)?;
                let (_, cert) = emax_sandwich(&rho, 0.0, &witness)?;
                Ok(Some(cert))
            }
        }
    }
}

/// Density operator of one isotropic pair v·Φ⁺ + (1−v)·I/4 on labels (a, b).
pub fn isotropic_pair(visibility: f64) -> Result<crate::quantum::DensityOperator> {
    let phi = ComplexMatrix::outer(&bell_vector(0, 0));
    let mat = phi.scale(visibility).add(&ComplexMatrix::identity(4).scale((1.0 - visibility) / 4.0));
    Ok(crate::quantum::DensityOperator::new(
        mat,
        vec![Subsystem::qubit("a"), Subsystem::qubit("b")],
    )?)
}

/// Separable witness mixture for one isotropic pair. For v ≤ 1/3 the
/// mixture reproduces the state exactly (it is separable); above that it is
/// the closest state of the same form, built from the six conjugate-axis
/// product states plus, below threshold, the computational products.
fn isotropic_witness(visibility: f64) -> Result<ProductMixture> {
    let axes: [[Complex64; 2]; 6] = [
        [c64(1.0, 0.0), c64(0.0, 0.0)],
        [c64(0.0, 0.0), c64(1.0, 0.0)],
        [c64(std::f64::consts::FRAC_1_SQRT_2, 0.0), c64(std::f64::consts::FRAC_1_SQRT_2, 0.0)],
        [c64(std::f64::consts::FRAC_1_SQRT_2, 0.0), c64(-std::f64::consts::FRAC_1_SQRT_2, 0.0)],
        [c64(std::f64::consts::FRAC_1_SQRT_2, 0.0), c64(0.0, std::f64::consts::FRAC_1_SQRT_2)],
        [c64(std::f64::consts::FRAC_1_SQRT_2, 0.0), c64(0.0, -std::f64::consts::FRAC_1_SQRT_2)],
    ];
    let conj_weight = if visibility >= 1.0 / 3.0 { 1.0 / 6.0 } else { visibility / 2.0 };
    let mut terms = Vec::new();
    for v in &axes {
        let a = ComplexMatrix::outer(v);
        let b = ComplexMatrix::outer(&[v[0].conj(), v[1].conj()]);
        terms.push((conj_weight, a, b));
    }
    if visibility < 1.0 / 3.0 {
        // iso(v) = 3v·iso(1/3) + (1−3v)·I/4, and I/4 is the uniform
        // computational product mixture.
        let w = (1.0 - 3.0 * visibility) / 4.0;
        for i in 0..2 {
            for j in 0..2 {
                let mut ea = [c64(0.0, 0.0); 2];
                ea[i] = c64(1.0, 0.0);
                let mut eb = [c64(0.0, 0.0); 2];
                eb[j] = c64(1.0, 0.0);
                terms.push((w, ComplexMatrix::outer(&ea), ComplexMatrix::outer(&eb)));
            }
        }
    }
    Ok(ProductMixture::new(
        terms,
        vec![Subsystem::qubit("a")],
        vec![Subsystem::qubit("b")],
    )?)
}

fn isotropic_emax_upper(visibility: f64) -> Result<f64> {
    let rho = isotropic_pair(visibility)?;
    let witness = isotropic_witness(visibility)?;
    let (bounds, _) = emax_sandwich(&rho, 0.0, &witness)?;
    Ok(bounds.upper)
}

/// Per-position quantum state shared by the colluders: the captured flying
/// qubit `q`, M1's resource half `a`, and M2's resource half `b`, in one
/// small joint state per position (positions are independent).
pub struct CheatBoard {
    cells: Vec<Option<PureState>>,
    pairs: usize,
}

impl CheatBoard {
    /// Sample the resource for `n` positions. Pairs beyond the protocol
    /// length are never materialised (they could not affect the round).
    pub fn new(n: usize, resource: &ResourceSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        resource.validate()?;
        let pairs = resource.pairs().min(n);
        let mut cells = Vec::with_capacity(n);
        for i in 0..n {
            if i < pairs {
                cells.push(resource.sample_pair(rng)?);
            } else {
                cells.push(None);
            }
        }
        Ok(Self { cells, pairs })
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    /// Tensor an intercepted flying qubit into position `i` under label `q`.
    pub fn capture_qubit(&mut self, i: usize, qubit: &PureState) -> Result<()> {
        if qubit.parts().len() != 1 || qubit.dim() != 2 {
            return Err(AdversaryError::Message(format!(
                "position {i}: captured payload is not a single qubit"
            )));
        }
        let q = PureState::new(qubit.amplitudes().to_vec(), vec![Subsystem::qubit("q")])?;
        let cell = self
            .cells
            .get_mut(i)
            .ok_or(AdversaryError::MissingSubsystem { position: i, label: "q" })?;
        *cell = Some(match cell.take() {
            Some(pair) => q.tensor(&pair)?,
            None => q,
        });
        Ok(())
    }

    fn has_label(&self, i: usize, label: &str) -> bool {
        self.cells
            .get(i)
            .and_then(|c| c.as_ref())
            .map(|s| s.labels().contains(&label))
            .unwrap_or(false)
    }

    fn measure(
        &mut self,
        i: usize,
        label: &'static str,
        op: impl FnOnce(&PureState) -> std::result::Result<(u8, PureState), QuantumError>,
    ) -> Result<u8> {
        if !self.has_label(i, label) {
            return Err(AdversaryError::MissingSubsystem { position: i, label });
        }
        let state = self.cells[i].take().expect("checked above");
        let (outcome, post) = op(&state)?;
        self.cells[i] = Some(post);
        Ok(outcome)
    }
}

/// M1's side of the board: the flying qubits and the `a` halves.
pub struct M1View<'a> {
    pub(crate) board: &'a mut CheatBoard,
    pub(crate) rng: &'a mut ChaCha8Rng,
}

impl M1View<'_> {
    pub fn n(&self) -> usize {
        self.board.n()
    }

    pub fn has_pair(&self, i: usize) -> bool {
        self.board.has_label(i, "a")
    }

    pub fn random_bit(&mut self) -> u8 {
        self.rng.gen_range(0..2u8)
    }

    /// Bell-measure the flying qubit against M1's resource half; the far
    /// half then holds X^a Z^b times the encoded qubit.
    pub fn bell_measure_with_pair(&mut self, i: usize) -> Result<(u8, u8)> {
        if !self.board.has_label(i, "q") {
            return Err(AdversaryError::MissingSubsystem { position: i, label: "q" });
        }
        if !self.board.has_label(i, "a") {
            return Err(AdversaryError::MissingSubsystem { position: i, label: "a" });
        }
        let state = self.board.cells[i].take().expect("checked above");
        let (a, b, rest) = state.bell_measure("q", "a", self.rng)?;
        self.board.cells[i] = Some(rest);
        Ok((a, b))
    }

    /// Measure the flying qubit in the intermediate (π/8) basis and read
    /// the outcome as a guess of the encoded bit. Consumes the qubit.
    pub fn measure_qubit_intermediate(&mut self, i: usize) -> Result<u8> {
        let basis = intermediate_basis();
        let rng = &mut *self.rng;
        self.board.measure(i, "q", move |s| {
            s.measure_in_basis_removing("q", &basis, rng).map(|(k, post)| (k as u8, post))
        })
    }

    /// Measure the flying qubit in BB84 basis θ. Consumes the qubit.
    pub fn measure_qubit_basis(&mut self, i: usize, theta: u8) -> Result<u8> {
        let rng = &mut *self.rng;
        self.board.measure(i, "q", move |s| {
            s.measure_in_basis_removing("q", &crate::quantum::bb84_basis(theta), rng)
                .map(|(k, post)| (k as u8, post))
        })
    }
}

/// M2's side of the board: only the `b` halves.
pub struct M2View<'a> {
    pub(crate) board: &'a mut CheatBoard,
    pub(crate) rng: &'a mut ChaCha8Rng,
}

impl M2View<'_> {
    pub fn n(&self) -> usize {
        self.board.n()
    }

    pub fn has_pair(&self, i: usize) -> bool {
        self.board.has_label(i, "b")
    }

    pub fn random_bit(&mut self) -> u8 {
        self.rng.gen_range(0..2u8)
    }

    /// Measure M2's resource half in BB84 basis θ. Consumes the half.
    pub fn measure_half_basis(&mut self, i: usize, theta: u8) -> Result<u8> {
        let rng = &mut *self.rng;
        self.board.measure(i, "b", move |s| {
            s.measure_in_basis_removing("b", &crate::quantum::bb84_basis(theta), rng)
                .map(|(k, post)| (k as u8, post))
        })
    }
}

/// Split a board into its two side-restricted views. The views borrow the
/// same board, so this is called once per phase with a fresh reborrow.
pub fn m1_view<'a>(board: &'a mut CheatBoard, rng: &'a mut ChaCha8Rng) -> M1View<'a> {
    M1View { board, rng }
}

pub fn m2_view<'a>(board: &'a mut CheatBoard, rng: &'a mut ChaCha8Rng) -> M2View<'a> {
    M2View { board, rng }
}

/// Classical data a strategy stores or transmits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheatMessage {
    Empty,
    /// Guessed or broadcast answer bits.
    Outcomes { bits: Bits },
    /// Teleportation corrections for the first k positions and direct
    /// guesses for the rest.
    TeleportReport { corrections: Vec<(u8, u8)>, fallback: Bits },
    /// The basis string together with M2's measurement outcomes on its
    /// resource halves (one per teleported position).
    BasisOutcomes { theta: Bits, measured: Bits },
}

/// One attempted crossing between M1 and M2. The protocol driver admits
/// exactly one classical transmission per direction and nothing else.
#[derive(Clone, Debug, PartialEq)]
pub enum Transmission {
    Classical(CheatMessage),
    Quantum { qubits: usize },
}

/// What a phase-1 call produces: the crossings to attempt and the classical
/// memory carried into phase 2.
pub struct Phase1Output {
    pub transmissions: Vec<Transmission>,
    pub memory: CheatMessage,
}

impl Phase1Output {
    fn classical(msg: CheatMessage, memory: CheatMessage) -> Self {
        Self { transmissions: vec![Transmission::Classical(msg)], memory }
    }
}

/// A colluding attack. Phase 1 runs locally on each side when its challenge
/// arrives; phase 2 is a deterministic function of stored memory plus the
/// one message received from the partner, and yields the verifier answer.
/// Strategies are stateless descriptions, shareable across worker threads.
pub trait CheatStrategy: Send + Sync {
    fn name(&self) -> String;

    /// Entangled pairs phase 1 will consume; checked against the resource.
    fn pairs_needed(&self, n: usize) -> usize {
        let _ = n;
        0
    }

    fn phase1_m1(&self, m1: &mut M1View<'_>) -> Result<Phase1Output>;
    fn phase1_m2(&self, theta: &Bits, m2: &mut M2View<'_>) -> Result<Phase1Output>;
    fn phase2_m1(&self, memory: &CheatMessage, c2: &CheatMessage) -> Result<Bits>;
    fn phase2_m2(&self, memory: &CheatMessage, c1: &CheatMessage) -> Result<Bits>;
}

fn expect_outcomes(msg: &CheatMessage, who: &str) -> Result<Bits> {
    match msg {
        CheatMessage::Outcomes { bits } => Ok(bits.clone()),
        other => Err(AdversaryError::Message(format!("{who}: expected outcomes, got {other:?}"))),
    }
}

/// Measure every flying qubit in the intermediate basis and broadcast the
/// outcomes; both colluders answer the same string. Succeeds per position
/// with probability cos²(π/8) regardless of the basis bit.
pub struct Breidbart;

impl CheatStrategy for Breidbart {
    fn name(&self) -> String {
        "breidbart".into()
    }

    fn phase1_m1(&self, m1: &mut M1View<'_>) -> Result<Phase1Output> {
        let mut bits = Bits::zeros(0);
        for i in 0..m1.n() {
            bits.push(m1.measure_qubit_intermediate(i)?);
        }
        let msg = CheatMessage::Outcomes { bits };
        Ok(Phase1Output::classical(msg.clone(), msg))
    }

    fn phase1_m2(&self, _theta: &Bits, _m2: &mut M2View<'_>) -> Result<Phase1Output> {
        Ok(Phase1Output::classical(CheatMessage::Empty, CheatMessage::Empty))
    }

    fn phase2_m1(&self, memory: &CheatMessage, _c2: &CheatMessage) -> Result<Bits> {
        expect_outcomes(memory, "M1 memory")
    }

    fn phase2_m2(&self, _memory: &CheatMessage, c1: &CheatMessage) -> Result<Bits> {
        expect_outcomes(c1, "M2 received")
    }
}

/// Guess a basis per position, measure in it, broadcast the outcomes.
/// Succeeds per position with probability 3/4 (certain when the guess is
/// right, a coin flip otherwise).
pub struct BasisGuess;

impl CheatStrategy for BasisGuess {
    fn name(&self) -> String {
        "basis-guess".into()
    }

    fn phase1_m1(&self, m1: &mut M1View<'_>) -> Result<Phase1Output> {
        let mut bits = Bits::zeros(0);
        for i in 0..m1.n() {
            let guess = m1.random_bit();
            bits.push(m1.measure_qubit_basis(i, guess)?);
        }
        let msg = CheatMessage::Outcomes { bits };
        Ok(Phase1Output::classical(msg.clone(), msg))
    }

    fn phase1_m2(&self, _theta: &Bits, _m2: &mut M2View<'_>) -> Result<Phase1Output> {
        Ok(Phase1Output::classical(CheatMessage::Empty, CheatMessage::Empty))
    }

    fn phase2_m1(&self, memory: &CheatMessage, _c2: &CheatMessage) -> Result<Bits> {
        expect_outcomes(memory, "M1 memory")
    }

    fn phase2_m2(&self, _memory: &CheatMessage, c1: &CheatMessage) -> Result<Bits> {
        expect_outcomes(c1, "M2 received")
    }
}

/// Teleport the first `pairs` flying qubits through the shared resource:
/// M1 Bell-measures qubit i against half aᵢ and announces the corrections,
/// M2 measures half bᵢ in basis θᵢ and announces the outcomes along with θ.
/// Either side can then undo the teleportation byproduct classically:
/// x̂ᵢ = mᵢ ⊕ (aᵢ if θᵢ = 0, else bᵢ). Positions beyond the resource fall
/// back to the intermediate-basis guess.
pub struct Teleport {
    pub pairs: usize,
}

impl Teleport {
    fn combine(report: &CheatMessage, basis: &CheatMessage) -> Result<Bits> {
        let (corrections, fallback) = match report {
            CheatMessage::TeleportReport { corrections, fallback } => (corrections, fallback),
            other => {
                return Err(AdversaryError::Message(format!(
                    "expected teleport report, got {other:?}"
                )))
            }
        };
        let (theta, measured) = match basis {
            CheatMessage::BasisOutcomes { theta, measured } => (theta, measured),
            other => {
                return Err(AdversaryError::Message(format!(
                    "expected basis outcomes, got {other:?}"
                )))
            }
        };
        let k = corrections.len();
        if measured.len() != k || theta.len() != k + fallback.len() {
            return Err(AdversaryError::Message(format!(
                "inconsistent teleport lengths: {k} corrections, {} outcomes, {} basis bits, {} fallback",
                measured.len(),
                theta.len(),
                fallback.len()
            )));
        }
        let mut answer = Bits::zeros(0);
        for i in 0..theta.len() {
            if i < k {
                let (a, b) = corrections[i];
                let fix = if theta.get(i) == 0 { a } else { b };
                answer.push(measured.get(i) ^ fix);
            } else {
                answer.push(fallback.get(i - k));
            }
        }
        Ok(answer)
    }
}

impl CheatStrategy for Teleport {
    fn name(&self) -> String {
        format!("teleport({})", self.pairs)
    }

    fn pairs_needed(&self, n: usize) -> usize {
        self.pairs.min(n)
    }

    fn phase1_m1(&self, m1: &mut M1View<'_>) -> Result<Phase1Output> {
        let k = self.pairs.min(m1.n());
        let mut corrections = Vec::with_capacity(k);
        let mut fallback = Bits::zeros(0);
        for i in 0..m1.n() {
            if i < k {
                corrections.push(m1.bell_measure_with_pair(i)?);
            } else {
                fallback.push(m1.measure_qubit_intermediate(i)?);
            }
        }
        let msg = CheatMessage::TeleportReport { corrections, fallback };
        Ok(Phase1Output::classical(msg.clone(), msg))
    }

    fn phase1_m2(&self, theta: &Bits, m2: &mut M2View<'_>) -> Result<Phase1Output> {
        let k = self.pairs.min(m2.n());
        let mut measured = Bits::zeros(0);
        for i in 0..k {
            measured.push(m2.measure_half_basis(i, theta.get(i))?);
        }
        let msg = CheatMessage::BasisOutcomes { theta: theta.clone(), measured };
        Ok(Phase1Output::classical(msg.clone(), msg))
    }

    fn phase2_m1(&self, memory: &CheatMessage, c2: &CheatMessage) -> Result<Bits> {
        Self::combine(memory, c2)
    }

    fn phase2_m2(&self, memory: &CheatMessage, c1: &CheatMessage) -> Result<Bits> {
        Self::combine(c1, memory)
    }
}

/// Baseline: both sides answer independent uniform strings (no
/// communication content at all).
pub struct RandomIndependent;

impl CheatStrategy for RandomIndependent {
    fn name(&self) -> String {
        "random-independent".into()
    }

    fn phase1_m1(&self, m1: &mut M1View<'_>) -> Result<Phase1Output> {
        let mut bits = Bits::zeros(0);
        for _ in 0..m1.n() {
            bits.push(m1.random_bit());
        }
        Ok(Phase1Output::classical(CheatMessage::Empty, CheatMessage::Outcomes { bits }))
    }

    fn phase1_m2(&self, theta: &Bits, m2: &mut M2View<'_>) -> Result<Phase1Output> {
        let mut bits = Bits::zeros(0);
        for _ in 0..theta.len() {
            bits.push(m2.random_bit());
        }
        Ok(Phase1Output::classical(CheatMessage::Empty, CheatMessage::Outcomes { bits }))
    }

    fn phase2_m1(&self, memory: &CheatMessage, _c2: &CheatMessage) -> Result<Bits> {
        expect_outcomes(memory, "M1 memory")
    }

    fn phase2_m2(&self, memory: &CheatMessage, _c1: &CheatMessage) -> Result<Bits> {
        expect_outcomes(memory, "M2 memory")
    }
}

/// Baseline: M1 draws one uniform string and broadcasts it, so both sides
/// agree and the only failure mode is missing the encoded string itself.
pub struct RandomShared;

impl CheatStrategy for RandomShared {
    fn name(&self) -> String {
        "random-shared".into()
    }

    fn phase1_m1(&self, m1: &mut M1View<'_>) -> Result<Phase1Output> {
        let mut bits = Bits::zeros(0);
        for _ in 0..m1.n() {
            bits.push(m1.random_bit());
        }
        let msg = CheatMessage::Outcomes { bits };
        Ok(Phase1Output::classical(msg.clone(), msg))
    }

    fn phase1_m2(&self, _theta: &Bits, _m2: &mut M2View<'_>) -> Result<Phase1Output> {
        Ok(Phase1Output::classical(CheatMessage::Empty, CheatMessage::Empty))
    }

    fn phase2_m1(&self, memory: &CheatMessage, _c2: &CheatMessage) -> Result<Bits> {
        expect_outcomes(memory, "M1 memory")
    }

    fn phase2_m2(&self, _memory: &CheatMessage, c1: &CheatMessage) -> Result<Bits> {
        expect_outcomes(c1, "M2 received")
    }
}

/// Diagnostic strategy: attempts to ship a qubit across the M1→M2 link.
/// The driver must refuse it on every run.
pub struct QuantumLeak;

impl CheatStrategy for QuantumLeak {
    fn name(&self) -> String {
        "diagnostic-quantum-leak".into()
    }

    fn phase1_m1(&self, _m1: &mut M1View<'_>) -> Result<Phase1Output> {
        Ok(Phase1Output {
            transmissions: vec![Transmission::Quantum { qubits: 1 }],
            memory: CheatMessage::Empty,
        })
    }

    fn phase1_m2(&self, _theta: &Bits, _m2: &mut M2View<'_>) -> Result<Phase1Output> {
        Ok(Phase1Output::classical(CheatMessage::Empty, CheatMessage::Empty))
    }

    fn phase2_m1(&self, _memory: &CheatMessage, _c2: &CheatMessage) -> Result<Bits> {
        Ok(Bits::zeros(0))
    }

    fn phase2_m2(&self, _memory: &CheatMessage, _c1: &CheatMessage) -> Result<Bits> {
        Ok(Bits::zeros(0))
    }
}

/// Diagnostic strategy: attempts two crossings in the M1→M2 direction.
/// The driver must refuse it on every run.
pub struct ExtraRound;

impl CheatStrategy for ExtraRound {
    fn name(&self) -> String {
        "diagnostic-extra-round".into()
    }

    fn phase1_m1(&self, _m1: &mut M1View<'_>) -> Result<Phase1Output> {
        Ok(Phase1Output {
            transmissions: vec![
                Transmission::Classical(CheatMessage::Empty),
                Transmission::Classical(CheatMessage::Empty),
            ],
            memory: CheatMessage::Empty,
        })
    }

    fn phase1_m2(&self, _theta: &Bits, _m2: &mut M2View<'_>) -> Result<Phase1Output> {
        Ok(Phase1Output::classical(CheatMessage::Empty, CheatMessage::Empty))
    }

    fn phase2_m1(&self, _memory: &CheatMessage, _c2: &CheatMessage) -> Result<Bits> {
        Ok(Bits::zeros(0))
    }

    fn phase2_m2(&self, _memory: &CheatMessage, _c1: &CheatMessage) -> Result<Bits> {
        Ok(Bits::zeros(0))
    }
}

/// Diagnostic strategy: answers all-zeros at V1 and all-ones at V2, so for
/// n ≥ 1 the two verifier strings can never both match and every round must
/// be rejected.
pub struct Inconsistent;

impl CheatStrategy for Inconsistent {
    fn name(&self) -> String {
        "diagnostic-inconsistent".into()
    }

    fn phase1_m1(&self, m1: &mut M1View<'_>) -> Result<Phase1Output> {
        Ok(Phase1Output::classical(
            CheatMessage::Empty,
            CheatMessage::Outcomes { bits: Bits::zeros(m1.n()) },
        ))
    }

    fn phase1_m2(&self, theta: &Bits, _m2: &mut M2View<'_>) -> Result<Phase1Output> {
        let mut bits = Bits::zeros(0);
        for _ in 0..theta.len() {
            bits.push(1);
        }
        Ok(Phase1Output::classical(CheatMessage::Empty, CheatMessage::Outcomes { bits }))
    }

    fn phase2_m1(&self, memory: &CheatMessage, _c2: &CheatMessage) -> Result<Bits> {
        expect_outcomes(memory, "M1 memory")
    }

    fn phase2_m2(&self, memory: &CheatMessage, _c1: &CheatMessage) -> Result<Bits> {
        expect_outcomes(memory, "M2 memory")
    }
}

/// Look up a strategy by its public name; `ebits` only affects teleport.
pub fn strategy_by_name(name: &str, ebits: usize) -> Result<Box<dyn CheatStrategy>> {
    match name {
        "breidbart" => Ok(Box::new(Breidbart)),
        "basis-guess" => Ok(Box::new(BasisGuess)),
        "teleport" => Ok(Box::new(Teleport { pairs: ebits })),
        "random-independent" => Ok(Box::new(RandomIndependent)),
        "random-shared" => Ok(Box::new(RandomShared)),
        other => Err(AdversaryError::UnknownStrategy(other.to_string())),
    }
}

/// The resource a named strategy is conventionally paired with.
pub fn default_resource(name: &str, ebits: usize) -> ResourceSpec {
    match name {
        "teleport" => ResourceSpec::MaxEntangledPairs { pairs: ebits },
        _ => ResourceSpec::None,
    }
}
