//! Honest and adversarial rounds of the position-verification protocol,
//! plus the weak-string-erasure exchange it is built from.
//!
//! One round of position verification: verifier V1 prepares n qubits, each
//! encoding a uniform bit xᵢ in a uniform BB84 basis θᵢ, and sends them
//! toward the claimed position; V2 sends the basis string Θ as a single
//! classical message, timed so both challenges arrive there simultaneously.
//! Whoever sits at the claimed position must measure qubit i in basis θᵢ
//! and broadcast the outcome string to both verifiers. Each verifier
//! accepts only if its copy of the answer equals Xⁿ and arrives by the
//! light-speed round-trip deadline ([`verdict_deadlines`] plus tolerance).
//!
//! The adversarial driver replaces the prover with the colluders M1 and M2
//! from [`crate::adversaries`]. It enforces their communication model
//! structurally: per direction exactly one crossing, and it must be
//! classical. A strategy that tries to ship a qubit across or open a second
//! round is rejected with [`ProtocolError::Violation`] before anything is
//! sent. Timing is not enforced by fiat but by the engine: answers computed
//! after the crossing simply arrive when light allows, and the verifiers'
//! deadlines do the rest.
//!
//! The weak-string-erasure exchange is the same quantum traffic without the
//! timing layer: the sender keeps (Xⁿ, Θⁿ), the receiver measures in its
//! own uniform bases Θ̃ⁿ and keeps the outcomes, and the positions where the
//! bases happened to match carry the receiver's share of the string. Both
//! the prepare-and-send form and the entangled form (the sender measures
//! halves of maximally entangled pairs, which fixes Xⁿ as it goes) are
//! implemented; they produce identical statistics, which is what lets the
//! security analysis treat the sender's lab as entangled without loss.

use crate::adversaries::{
    m1_view, m2_view, AdversaryError, CheatBoard, CheatMessage, CheatStrategy, ResourceSpec,
    Transmission,
};
use crate::bits::Bits;
use crate::quantum::{bb84_basis, PureState, QuantumError};
use crate::spacetime::{
    schedule_simultaneous_arrival, verdict_deadlines, Ctx, Engine, Event, EventKind, EventLog,
    Geometry, Party, Payload, SpacetimeError, Trigger, TIME_SLACK,
};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("geometry lacks required party {0}")]
    MissingParty(Party),
    #[error("protocol violation by {party}: {reason}")]
    Violation { party: Party, reason: String },
    #[error("run failed at {party}: {reason}")]
    Failed { party: Party, reason: String },
    #[error(transparent)]
    Spacetime(#[from] SpacetimeError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LateV1,
    LateV2,
    WrongString,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundVerdict {
    Accept,
    Reject(RejectReason),
}

impl RoundVerdict {
    pub fn accepted(&self) -> bool {
        matches!(self, RoundVerdict::Accept)
    }
}

/// Everything the verifiers saw in one round, plus the verdict they reach.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpvTranscript {
    pub n: usize,
    pub x: Bits,
    pub theta: Bits,
    pub answer_v1: Bits,
    pub answer_v2: Bits,
    pub arrival_v1: f64,
    pub arrival_v2: f64,
    pub deadline_v1: f64,
    pub deadline_v2: f64,
    pub verdict: RoundVerdict,
    /// True when n = 0: the round carries no challenge and the accept is
    /// vacuous.
    pub degenerate: bool,
}

fn decide(
    x: &Bits,
    answers: [&Option<(f64, Bits)>; 2],
    deadlines: (f64, f64),
) -> (RoundVerdict, [(f64, Bits); 2]) {
    let materialise = |a: &Option<(f64, Bits)>| match a {
        Some((t, bits)) => (*t, bits.clone()),
        None => (f64::INFINITY, Bits::zeros(0)),
    };
    let v1 = materialise(answers[0]);
    let v2 = materialise(answers[1]);
    let verdict = if v1.0 > deadlines.0 + TIME_SLACK {
        RoundVerdict::Reject(RejectReason::LateV1)
    } else if v2.0 > deadlines.1 + TIME_SLACK {
        RoundVerdict::Reject(RejectReason::LateV2)
    } else if v1.1 != *x || v2.1 != *x {
        RoundVerdict::Reject(RejectReason::WrongString)
    } else {
        RoundVerdict::Accept
    };
    (verdict, [v1, v2])
}

const QUBIT_HANDLE: &str = "bb84";

fn encode_all(x: &Bits, theta: &Bits) -> Vec<PureState> {
    (0..x.len()).map(|i| PureState::bb84_encode("q", x.get(i), theta.get(i))).collect()
}

struct HonestWorld {
    rng: ChaCha8Rng,
    x: Bits,
    theta: Bits,
    qubits_in_flight: Option<Vec<PureState>>,
    prover_qubits: Option<Vec<PureState>>,
    prover_theta: Option<Bits>,
    answer_v1: Option<(f64, Bits)>,
    answer_v2: Option<(f64, Bits)>,
    failure: Option<(Party, String)>,
}

fn fail<W>(ctx: &mut Ctx<'_, W>, store: impl FnOnce(&mut W, (Party, String)), reason: String) {
    let party = ctx.party();
    store(ctx.world, (party, reason));
}

/// Run one honest round at the given geometry (which must place a prover).
/// The verifiers draw Xⁿ and Θⁿ, stagger their sends for simultaneous
/// arrival, and judge the echoed string against the deadlines.
pub fn run_qpv_honest(
    n: usize,
    geometry: &Geometry,
    mut rng: ChaCha8Rng,
) -> Result<(QpvTranscript, EventLog)> {
    geometry.position_of(Party::Prover).map_err(|_| ProtocolError::MissingParty(Party::Prover))?;
    let x = Bits::random(n, &mut rng);
    let theta = Bits::random(n, &mut rng);
    let (t_v1, t_v2) = schedule_simultaneous_arrival(geometry);
    let deadlines = verdict_deadlines(geometry);

    let world = HonestWorld {
        rng,
        x: x.clone(),
        theta: theta.clone(),
        qubits_in_flight: None,
        prover_qubits: None,
        prover_theta: None,
        answer_v1: None,
        answer_v2: None,
        failure: None,
    };
    let mut engine = Engine::new(geometry.clone(), world);

    engine.add_party(
        Party::V1,
        Box::new(move |ctx: &mut Ctx<'_, HonestWorld>, trig| match trig {
            Trigger::Start => {
                let states = encode_all(&ctx.world.x, &ctx.world.theta);
                let count = states.len();
                ctx.world.qubits_in_flight = Some(states);
                ctx.log(EventKind::Compute, format!("encoded {count} qubits"));
                if let Err(e) = ctx.send_at(
                    t_v1,
                    Party::Prover,
                    Payload::Quantum { handle: QUBIT_HANDLE.into(), qubits: count },
                ) {
                    fail(ctx, |w, f| w.failure = Some(f), e.to_string());
                }
            }
            Trigger::Deliver(msg) => {
                if let Payload::Classical(text) = &msg.payload {
                    match Bits::parse(text) {
                        Ok(bits) => ctx.world.answer_v1 = Some((ctx.now(), bits)),
                        Err(e) => fail(ctx, |w, f| w.failure = Some(f), e),
                    }
                }
            }
        }),
    )?;

    engine.add_party(
        Party::V2,
        Box::new(move |ctx: &mut Ctx<'_, HonestWorld>, trig| match trig {
            Trigger::Start => {
                let text = ctx.world.theta.to_string();
                if let Err(e) = ctx.send_at(t_v2, Party::Prover, Payload::Classical(text)) {
                    fail(ctx, |w, f| w.failure = Some(f), e.to_string());
                }
            }
            Trigger::Deliver(msg) => {
                if let Payload::Classical(text) = &msg.payload {
                    match Bits::parse(text) {
                        Ok(bits) => ctx.world.answer_v2 = Some((ctx.now(), bits)),
                        Err(e) => fail(ctx, |w, f| w.failure = Some(f), e),
                    }
                }
            }
        }),
    )?;

    engine.add_party(
        Party::Prover,
        Box::new(|ctx: &mut Ctx<'_, HonestWorld>, trig| {
            if let Trigger::Deliver(msg) = trig {
                match &msg.payload {
                    Payload::Quantum { .. } => {
                        ctx.world.prover_qubits = ctx.world.qubits_in_flight.take();
                    }
                    Payload::Classical(text) => match Bits::parse(text) {
                        Ok(bits) => ctx.world.prover_theta = Some(bits),
                        Err(e) => fail(ctx, |w, f| w.failure = Some(f), e),
                    },
                }
                let ready =
                    ctx.world.prover_qubits.is_some() && ctx.world.prover_theta.is_some();
                if ready {
                    let w = &mut *ctx.world;
                    let qubits = w.prover_qubits.take().expect("checked");
                    let theta = w.prover_theta.take().expect("checked");
                    let mut outcome = Bits::zeros(0);
                    for (i, q) in qubits.iter().enumerate() {
                        match q.measure_in_basis_removing("q", &bb84_basis(theta.get(i)), &mut w.rng)
                        {
                            Ok((m, _)) => outcome.push(m as u8),
                            Err(e) => {
                                w.failure = Some((Party::Prover, e.to_string()));
                                return;
                            }
                        }
                    }
                    ctx.log(EventKind::Measure, format!("measured {} qubits in Θ", theta.len()));
                    let text = outcome.to_string();
                    if let Err(e) = ctx
                        .send(Party::V1, Payload::Classical(text.clone()))
                        .and_then(|_| ctx.send(Party::V2, Payload::Classical(text)))
                    {
                        fail(ctx, |w, f| w.failure = Some(f), e.to_string());
                    }
                }
            }
        }),
    )?;

    let (world, log) = engine.run();
    if let Some((party, reason)) = world.failure {
        return Err(ProtocolError::Failed { party, reason });
    }
    let (verdict, [v1, v2]) = decide(&x, [&world.answer_v1, &world.answer_v2], deadlines);
    Ok((
        QpvTranscript {
            n,
            x,
            theta,
            answer_v1: v1.1,
            answer_v2: v2.1,
            arrival_v1: v1.0,
            arrival_v2: v2.0,
            deadline_v1: deadlines.0,
            deadline_v2: deadlines.1,
            verdict,
            degenerate: n == 0,
        },
        log,
    ))
}

struct CheatWorld<'s> {
    rng: ChaCha8Rng,
    x: Bits,
    theta: Bits,
    strategy: &'s dyn CheatStrategy,
    board: CheatBoard,
    qubits_in_flight: Option<Vec<PureState>>,
    m1_memory: Option<CheatMessage>,
    m2_memory: Option<CheatMessage>,
    answer_v1: Option<(f64, Bits)>,
    answer_v2: Option<(f64, Bits)>,
    violation: Option<(Party, String)>,
    failure: Option<(Party, String)>,
}

/// Admit exactly one classical crossing; everything else is a violation.
fn screen_transmissions(
    transmissions: &[Transmission],
) -> std::result::Result<CheatMessage, String> {
    match transmissions {
        [Transmission::Classical(msg)] => Ok(msg.clone()),
        [Transmission::Quantum { qubits }] => {
            Err(format!("attempted to transmit {qubits} qubit(s) across the classical link"))
        }
        [] => Err("no crossing produced; the interface requires exactly one".into()),
        many => Err(format!(
            "attempted {} crossings; the interface admits exactly one",
            many.len()
        )),
    }
}

fn cheat_phase1(
    ctx: &mut Ctx<'_, CheatWorld<'_>>,
    partner: Party,
    run: impl FnOnce(&mut CheatWorld<'_>) -> std::result::Result<crate::adversaries::Phase1Output, AdversaryError>,
    store: impl FnOnce(&mut CheatWorld<'_>, CheatMessage),
) {
    let out = match run(ctx.world) {
        Ok(out) => out,
        Err(e) => return fail(ctx, |w, f| w.failure = Some(f), e.to_string()),
    };
    let msg = match screen_transmissions(&out.transmissions) {
        Ok(msg) => msg,
        Err(reason) => return fail(ctx, |w, f| w.violation = Some(f), reason),
    };
    store(ctx.world, out.memory);
    let text = serde_json::to_string(&msg).expect("cheat messages serialise");
    if let Err(e) = ctx.send(partner, Payload::Classical(text)) {
        fail(ctx, |w, f| w.failure = Some(f), e.to_string());
    }
}

fn cheat_phase2(
    ctx: &mut Ctx<'_, CheatWorld<'_>>,
    verifier: Party,
    text: &str,
    run: impl FnOnce(&CheatWorld<'_>, &CheatMessage) -> std::result::Result<Bits, AdversaryError>,
) {
    let received: CheatMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return fail(ctx, |w, f| w.failure = Some(f), e.to_string()),
    };
    let answer = match run(ctx.world, &received) {
        Ok(a) => a,
        Err(e) => return fail(ctx, |w, f| w.failure = Some(f), e.to_string()),
    };
    if let Err(e) = ctx.send(verifier, Payload::Classical(answer.to_string())) {
        fail(ctx, |w, f| w.failure = Some(f), e.to_string());
    }
}

/// Run one round against colluders at the cheating geometry. V1's qubits
/// are intercepted by M1, V2's basis string by M2; the strategy's phases
/// run when its challenges arrive, and its answers fly back under the same
/// light-speed rules the honest prover faces.
pub fn run_qpv_adversarial(
    n: usize,
    geometry: &Geometry,
    strategy: &dyn CheatStrategy,
    resource: &ResourceSpec,
    mut rng: ChaCha8Rng,
) -> Result<(QpvTranscript, EventLog)> {
    for p in [Party::M1, Party::M2] {
        geometry.position_of(p).map_err(|_| ProtocolError::MissingParty(p))?;
    }
    let needed = strategy.pairs_needed(n);
    if needed > resource.pairs() {
        return Err(AdversaryError::NotEnoughPairs { needed, available: resource.pairs() }.into());
    }
    let x = Bits::random(n, &mut rng);
    let theta = Bits::random(n, &mut rng);
    let board = CheatBoard::new(n, resource, &mut rng)?;
    let (t_v1, t_v2) = schedule_simultaneous_arrival(geometry);
    let deadlines = verdict_deadlines(geometry);

    let world = CheatWorld {
        rng,
        x: x.clone(),
        theta: theta.clone(),
        strategy,
        board,
        qubits_in_flight: None,
        m1_memory: None,
        m2_memory: None,
        answer_v1: None,
        answer_v2: None,
        violation: None,
        failure: None,
    };
    let mut engine = Engine::new(geometry.clone(), world);

    engine.add_party(
        Party::V1,
        Box::new(move |ctx: &mut Ctx<'_, CheatWorld<'_>>, trig| match trig {
            Trigger::Start => {
                let states = encode_all(&ctx.world.x, &ctx.world.theta);
                let count = states.len();
                ctx.world.qubits_in_flight = Some(states);
                if let Err(e) = ctx.send_at(
                    t_v1,
                    Party::M1,
                    Payload::Quantum { handle: QUBIT_HANDLE.into(), qubits: count },
                ) {
                    fail(ctx, |w, f| w.failure = Some(f), e.to_string());
                }
            }
            Trigger::Deliver(msg) => {
                if let Payload::Classical(text) = &msg.payload {
                    match Bits::parse(text) {
                        Ok(bits) => ctx.world.answer_v1 = Some((ctx.now(), bits)),
                        Err(e) => fail(ctx, |w, f| w.failure = Some(f), e),
                    }
                }
            }
        }),
    )?;

    engine.add_party(
        Party::V2,
        Box::new(move |ctx: &mut Ctx<'_, CheatWorld<'_>>, trig| match trig {
            Trigger::Start => {
                let text = ctx.world.theta.to_string();
                if let Err(e) = ctx.send_at(t_v2, Party::M2, Payload::Classical(text)) {
                    fail(ctx, |w, f| w.failure = Some(f), e.to_string());
                }
            }
            Trigger::Deliver(msg) => {
                if let Payload::Classical(text) = &msg.payload {
                    match Bits::parse(text) {
                        Ok(bits) => ctx.world.answer_v2 = Some((ctx.now(), bits)),
                        Err(e) => fail(ctx, |w, f| w.failure = Some(f), e),
                    }
                }
            }
        }),
    )?;

    engine.add_party(
        Party::M1,
        Box::new(|ctx: &mut Ctx<'_, CheatWorld<'_>>, trig| {
            if let Trigger::Deliver(msg) = trig {
                match (&msg.payload, msg.sender) {
                    (Payload::Quantum { .. }, Party::V1) => {
                        let w = &mut *ctx.world;
                        let qubits = match w.qubits_in_flight.take() {
                            Some(q) => q,
                            None => {
                                w.failure =
                                    Some((Party::M1, "quantum payload without states".into()));
                                return;
                            }
                        };
                        for (i, q) in qubits.iter().enumerate() {
                            if let Err(e) = w.board.capture_qubit(i, q) {
                                w.failure = Some((Party::M1, e.to_string()));
                                return;
                            }
                        }
                        ctx.log(EventKind::Measure, "phase 1 local operations");
                        cheat_phase1(
                            ctx,
                            Party::M2,
                            |w| {
                                let mut view = m1_view(&mut w.board, &mut w.rng);
                                w.strategy.phase1_m1(&mut view)
                            },
                            |w, mem| w.m1_memory = Some(mem),
                        );
                    }
                    (Payload::Classical(text), Party::M2) => {
                        let text = text.clone();
                        cheat_phase2(ctx, Party::V1, &text, |w, c2| {
                            let memory = w.m1_memory.as_ref().cloned().unwrap_or(CheatMessage::Empty);
                            w.strategy.phase2_m1(&memory, c2)
                        });
                    }
                    _ => {}
                }
            }
        }),
    )?;

    engine.add_party(
        Party::M2,
        Box::new(|ctx: &mut Ctx<'_, CheatWorld<'_>>, trig| {
            if let Trigger::Deliver(msg) = trig {
                match (&msg.payload, msg.sender) {
                    (Payload::Classical(text), Party::V2) => {
                        let theta = match Bits::parse(text) {
                            Ok(bits) => bits,
                            Err(e) => return fail(ctx, |w, f| w.failure = Some(f), e),
                        };
                        ctx.log(EventKind::Measure, "phase 1 local operations");
                        cheat_phase1(
                            ctx,
                            Party::M1,
                            |w| {
                                let mut view = m2_view(&mut w.board, &mut w.rng);
                                w.strategy.phase1_m2(&theta, &mut view)
                            },
                            |w, mem| w.m2_memory = Some(mem),
                        );
                    }
                    (Payload::Classical(text), Party::M1) => {
                        let text = text.clone();
                        cheat_phase2(ctx, Party::V2, &text, |w, c1| {
                            let memory = w.m2_memory.as_ref().cloned().unwrap_or(CheatMessage::Empty);
                            w.strategy.phase2_m2(&memory, c1)
                        });
                    }
                    _ => {}
                }
            }
        }),
    )?;

    let (world, log) = engine.run();
    if let Some((party, reason)) = world.violation {
        return Err(ProtocolError::Violation { party, reason });
    }
    if let Some((party, reason)) = world.failure {
        return Err(ProtocolError::Failed { party, reason });
    }
    let (verdict, [v1, v2]) = decide(&x, [&world.answer_v1, &world.answer_v2], deadlines);
    Ok((
        QpvTranscript {
            n,
            x,
            theta,
            answer_v1: v1.1,
            answer_v2: v2.1,
            arrival_v1: v1.0,
            arrival_v2: v2.0,
            deadline_v1: deadlines.0,
            deadline_v2: deadlines.1,
            verdict,
            degenerate: n == 0,
        },
        log,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WseMode {
    /// Sender prepares H^θ|x⟩ and transmits it.
    Prepare,
    /// Sender keeps halves of maximally entangled pairs and measures them
    /// in its bases, fixing Xⁿ by the outcomes.
    Entangled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WseTranscript {
    pub n: usize,
    pub mode: WseMode,
    pub x: Bits,
    pub theta: Bits,
    pub theta_tilde: Bits,
    pub x_tilde: Bits,
    /// Positions where θ̃ᵢ = θᵢ; there the receiver's outcome is the
    /// sender's bit.
    pub matching: Vec<usize>,
    pub x_matching: Bits,
}

/// One honest weak-string-erasure exchange over n positions.
pub fn run_wse_honest(n: usize, mode: WseMode, mut rng: ChaCha8Rng) -> Result<WseTranscript> {
    let mut x = Bits::zeros(0);
    let theta;
    let theta_tilde;
    let mut x_tilde = Bits::zeros(0);
    match mode {
        WseMode::Prepare => {
            x = Bits::random(n, &mut rng);
            theta = Bits::random(n, &mut rng);
            theta_tilde = Bits::random(n, &mut rng);
            for i in 0..n {
                let qubit = PureState::bb84_encode("q", x.get(i), theta.get(i));
                let (m, _) =
                    qubit.measure_in_basis_removing("q", &bb84_basis(theta_tilde.get(i)), &mut rng)?;
                x_tilde.push(m as u8);
            }
        }
        WseMode::Entangled => {
            theta = Bits::random(n, &mut rng);
            theta_tilde = Bits::random(n, &mut rng);
            for i in 0..n {
                let pair = PureState::bell_pair("a", "b")?;
                let (xi, rest) =
                    pair.measure_in_basis_removing("a", &bb84_basis(theta.get(i)), &mut rng)?;
                x.push(xi as u8);
                let (m, _) =
                    rest.measure_in_basis_removing("b", &bb84_basis(theta_tilde.get(i)), &mut rng)?;
                x_tilde.push(m as u8);
            }
        }
    }
    let matching = theta.matching_positions(&theta_tilde);
    let x_matching = x.select(&matching);
    Ok(WseTranscript { n, mode, x, theta, theta_tilde, x_tilde, matching, x_matching })
}

/// Count of V2→(prover side) classical sends in a log; the basis string
/// must travel as exactly one message.
pub fn count_broadcasts(log: &EventLog, party: Party) -> usize {
    log.0
        .iter()
        .filter(|e: &&Event| e.party == party && e.kind == EventKind::Send)
        .count()
}
