//! One-dimensional relativistic discrete-event engine.
//!
//! Positions live on a line with c = 1, so a message sent at time t from
//! position p arrives at position q at exactly t + |p − q|. The engine
//! delivers messages in arrival order, attributes every send, receive,
//! measure, and compute event to a party, and refuses to construct or
//! deliver anything that would violate that arithmetic (within 1e−12 float
//! slack).
//!
//! Party programs are reaction rules: each gets a start trigger and then one
//! trigger per arriving message, and may schedule further sends through the
//! [`Ctx`] handle. Processing time defaults to zero (parties respond
//! immediately); a nonzero per-hop processing delay can be configured.
//!
//! Timing verdicts for position claims come from two small functions:
//! [`schedule_simultaneous_arrival`] staggers the verifiers' sends so both
//! challenges reach the claimed position at the same instant, and
//! [`verdict_deadlines`] gives the round-trip deadline each verifier
//! enforces on the response.

use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Float slack for timing comparisons; the geometry arithmetic itself is
/// exact up to rounding.
pub const TIME_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SpacetimeError {
    #[error("invalid geometry: {0}")]
    BadGeometry(String),
    #[error("causality violation: {0}")]
    Causality(String),
    #[error("party {0} has no position in this geometry")]
    UnknownParty(Party),
    #[error("cannot schedule a send at t = {t} from current time {now}")]
    PastSend { t: f64, now: f64 },
}

type Result<T> = std::result::Result<T, SpacetimeError>;

/// The fixed cast of the lab: two verifiers, the honest prover, and the two
/// colluding parties of the cheating model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    V1,
    V2,
    Prover,
    M1,
    M2,
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Party::V1 => "V1",
            Party::V2 => "V2",
            Party::Prover => "P",
            Party::M1 => "M1",
            Party::M2 => "M2",
        };
        f.write_str(s)
    }
}

/// Positions of everyone involved in a run, plus the claimed prover position
/// the verifiers test and the timing tolerance they grant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Geometry {
    pub v1_pos: f64,
    pub v2_pos: f64,
    pub claimed_pos: f64,
    /// Extra time allowed past the ideal round-trip deadline; ≥ 0.
    pub tolerance: f64,
    positions: Vec<(Party, f64)>,
}

impl Geometry {
    /// Honest setting: verifiers at the endpoints, the prover physically at
    /// the claimed position.
    pub fn honest(v1_pos: f64, v2_pos: f64, claimed_pos: f64, tolerance: f64) -> Result<Self> {
        Self::validate_core(v1_pos, v2_pos, claimed_pos, tolerance)?;
        Ok(Self {
            v1_pos,
            v2_pos,
            claimed_pos,
            tolerance,
            positions: vec![
                (Party::V1, v1_pos),
                (Party::V2, v2_pos),
                (Party::Prover, claimed_pos),
            ],
        })
    }

    /// Move the prover away from the claimed position (the claim is
    /// unchanged; the verifiers still test `claimed_pos`).
    pub fn with_actual_prover(mut self, actual: f64) -> Result<Self> {
        if !actual.is_finite() {
            return Err(SpacetimeError::BadGeometry("prover position must be finite".into()));
        }
        for slot in self.positions.iter_mut() {
            if slot.0 == Party::Prover {
                slot.1 = actual;
                return Ok(self);
            }
        }
        Err(SpacetimeError::UnknownParty(Party::Prover))
    }

    /// Cheating setting: no prover; M1 sits strictly between V1 and the
    /// claimed position, M2 strictly between it and V2.
    pub fn cheating(
        v1_pos: f64,
        v2_pos: f64,
        claimed_pos: f64,
        m1_pos: f64,
        m2_pos: f64,
        tolerance: f64,
    ) -> Result<Self> {
        Self::validate_core(v1_pos, v2_pos, claimed_pos, tolerance)?;
        if !(v1_pos <= m1_pos && m1_pos < claimed_pos) {
            return Err(SpacetimeError::BadGeometry(format!(
                "M1 at {m1_pos} must lie in [{v1_pos}, {claimed_pos})"
            )));
        }
        if !(claimed_pos < m2_pos && m2_pos <= v2_pos) {
            return Err(SpacetimeError::BadGeometry(format!(
                "M2 at {m2_pos} must lie in ({claimed_pos}, {v2_pos}]"
            )));
        }
        Ok(Self {
            v1_pos,
            v2_pos,
            claimed_pos,
            tolerance,
            positions: vec![
                (Party::V1, v1_pos),
                (Party::V2, v2_pos),
                (Party::M1, m1_pos),
                (Party::M2, m2_pos),
            ],
        })
    }

    fn validate_core(v1: f64, v2: f64, claimed: f64, tolerance: f64) -> Result<()> {
        if ![v1, v2, claimed, tolerance].iter().all(|x| x.is_finite()) {
            return Err(SpacetimeError::BadGeometry("coordinates must be finite".into()));
        }
        if !(v1 < claimed && claimed < v2) {
            return Err(SpacetimeError::BadGeometry(format!(
                "claimed position {claimed} must lie strictly between the verifiers ({v1}, {v2})"
            )));
        }
        if tolerance < 0.0 {
            return Err(SpacetimeError::BadGeometry("tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn position_of(&self, party: Party) -> Result<f64> {
        self.positions
            .iter()
            .find(|(p, _)| *p == party)
            .map(|(_, x)| *x)
            .ok_or(SpacetimeError::UnknownParty(party))
    }

    pub fn parties(&self) -> impl Iterator<Item = Party> + '_ {
        self.positions.iter().map(|(p, _)| *p)
    }

    pub fn distance(&self, a: Party, b: Party) -> Result<f64> {
        Ok((self.position_of(a)? - self.position_of(b)?).abs())
    }
}

/// Send times (t_v1, t_v2), normalised so the earlier sender starts at 0,
/// such that both challenges arrive at the claimed position simultaneously.
pub fn schedule_simultaneous_arrival(g: &Geometry) -> (f64, f64) {
    let d1 = (g.claimed_pos - g.v1_pos).abs();
    let d2 = (g.claimed_pos - g.v2_pos).abs();
    let arrival = d1.max(d2);
    (arrival - d1, arrival - d2)
}

/// The instant both challenges reach the claimed position.
pub fn challenge_arrival_time(g: &Geometry) -> f64 {
    let (t1, _) = schedule_simultaneous_arrival(g);
    t1 + (g.claimed_pos - g.v1_pos).abs()
}

/// Response deadlines (deadline_v1, deadline_v2): the challenge arrival
/// instant plus the return flight plus the tolerance.
pub fn verdict_deadlines(g: &Geometry) -> (f64, f64) {
    let arrival = challenge_arrival_time(g);
    (
        arrival + (g.claimed_pos - g.v1_pos).abs() + g.tolerance,
        arrival + (g.v2_pos - g.claimed_pos).abs() + g.tolerance,
    )
}

/// Message content. Classical payloads carry their text; quantum payloads
/// carry only a handle (the amplitudes live in the protocol's own state, and
/// the type makes classical-only links mechanically checkable).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Classical(String),
    Quantum { handle: String, qubits: usize },
}

impl Payload {
    pub fn is_quantum(&self) -> bool {
        matches!(self, Payload::Quantum { .. })
    }

    /// Short description for event logs.
    pub fn digest(&self) -> String {
        match self {
            Payload::Classical(s) => {
                if s.len() <= 48 {
                    format!("classical:{s}")
                } else {
                    format!("classical:{}…({} bytes)", &s[..45], s.len())
                }
            }
            Payload::Quantum { handle, qubits } => format!("quantum:{handle}[{qubits}]"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Message {
    pub id: u64,
    pub sender: Party,
    pub receiver: Party,
    pub send_time: f64,
    /// Always exactly send_time + |sender_pos − receiver_pos|.
    pub arrival_time: f64,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Send,
    Receive,
    Measure,
    Compute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub party: Party,
    pub kind: EventKind,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub msg_id: Option<u64>,
}

/// Time-ordered record of a run; serialises to JSON lines, one event each.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog(pub Vec<Event>);

impl EventLog {
    pub fn to_json_lines(&self) -> String {
        self.0
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialise"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn from_json_lines(text: &str) -> std::result::Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<Event>, _>>()?;
        Ok(Self(events))
    }

    pub fn is_time_ordered(&self) -> bool {
        self.0.windows(2).all(|w| w[0].time <= w[1].time + TIME_SLACK)
    }

    /// Check the log against the geometry: time-ordered, and every matched
    /// send/receive pair separated by exactly the light-travel distance.
    pub fn verify_causality(&self, g: &Geometry) -> Result<()> {
        if !self.is_time_ordered() {
            return Err(SpacetimeError::Causality("log is not time-ordered".into()));
        }
        for recv in self.0.iter().filter(|e| e.kind == EventKind::Receive) {
            let id = match recv.msg_id {
                Some(id) => id,
                None => continue,
            };
            let send = self
                .0
                .iter()
                .find(|e| e.kind == EventKind::Send && e.msg_id == Some(id))
                .ok_or_else(|| {
                    SpacetimeError::Causality(format!("receive of message {id} without a send"))
                })?;
            let dist = g.distance(send.party, recv.party)?;
            if (recv.time - send.time - dist).abs() > TIME_SLACK {
                return Err(SpacetimeError::Causality(format!(
                    "message {id} crossed distance {dist} in {} time units",
                    recv.time - send.time
                )));
            }
        }
        Ok(())
    }
}

struct Queued(Message);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.0.arrival_time == other.0.arrival_time && self.0.id == other.0.id
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .arrival_time
            .total_cmp(&other.0.arrival_time)
            .then(self.0.id.cmp(&other.0.id))
    }
}

struct EngineCore {
    geometry: Geometry,
    queue: BinaryHeap<Reverse<Queued>>,
    events: Vec<Event>,
    next_id: u64,
    now: f64,
    processing_delay: f64,
}

impl EngineCore {
    fn enqueue(&mut self, sender: Party, receiver: Party, send_time: f64, payload: Payload) -> Result<u64> {
        if send_time < self.now - TIME_SLACK {
            return Err(SpacetimeError::PastSend { t: send_time, now: self.now });
        }
        let dist = self.geometry.distance(sender, receiver)?;
        let msg = Message {
            id: self.next_id,
            sender,
            receiver,
            send_time,
            arrival_time: send_time + dist,
            payload,
        };
        self.next_id += 1;
        self.events.push(Event {
            time: msg.send_time,
            party: sender,
            kind: EventKind::Send,
            detail: format!("→{}: {}", receiver, msg.payload.digest()),
            msg_id: Some(msg.id),
        });
        let id = msg.id;
        self.queue.push(Reverse(Queued(msg)));
        Ok(id)
    }
}

/// What a program is reacting to.
pub enum Trigger<'a> {
    Start,
    Deliver(&'a Message),
}

/// Handle a program uses to act on the world: inspect the clock, mutate the
/// shared protocol state, emit log entries, and schedule sends.
pub struct Ctx<'a, W> {
    party: Party,
    core: &'a mut EngineCore,
    pub world: &'a mut W,
}

impl<W> Ctx<'_, W> {
    pub fn party(&self) -> Party {
        self.party
    }

    pub fn now(&self) -> f64 {
        self.core.now
    }

    pub fn geometry(&self) -> &Geometry {
        &self.core.geometry
    }

    /// Send immediately (after the configured processing delay).
    pub fn send(&mut self, to: Party, payload: Payload) -> Result<u64> {
        let t = self.core.now + self.core.processing_delay;
        self.core.enqueue(self.party, to, t, payload)
    }

    /// Send at an absolute time ≥ now.
    pub fn send_at(&mut self, t: f64, to: Party, payload: Payload) -> Result<u64> {
        self.core.enqueue(self.party, to, t, payload)
    }

    /// Record a measurement or computation step in the event log.
    pub fn log(&mut self, kind: EventKind, detail: impl Into<String>) {
        self.core.events.push(Event {
            time: self.core.now,
            party: self.party,
            kind,
            detail: detail.into(),
            msg_id: None,
        });
    }
}

pub type ProgramFn<W> = Box<dyn FnMut(&mut Ctx<'_, W>, Trigger<'_>)>;

/// Deterministic event loop over a fixed cast of parties. The world `W`
/// holds all protocol state (strings, quantum registers, verdict inputs);
/// programs receive it mutably through their [`Ctx`].
pub struct Engine<W> {
    core: EngineCore,
    programs: Vec<(Party, ProgramFn<W>)>,
    pub world: W,
}

impl<W> Engine<W> {
    pub fn new(geometry: Geometry, world: W) -> Self {
        Self {
            core: EngineCore {
                geometry,
                queue: BinaryHeap::new(),
                events: Vec::new(),
                next_id: 0,
                now: 0.0,
                processing_delay: 0.0,
            },
            programs: Vec::new(),
            world,
        }
    }

    /// Per-hop processing time added before every send; default 0.
    pub fn with_processing_delay(mut self, delay: f64) -> Self {
        self.core.processing_delay = delay.max(0.0);
        self
    }

    /// Register a party's program. The party must have a position.
    pub fn add_party(&mut self, party: Party, program: ProgramFn<W>) -> Result<()> {
        self.core.geometry.position_of(party)?;
        self.programs.push((party, program));
        Ok(())
    }

    /// Test-only style entry point for externally built messages; validates
    /// the light-speed arrival arithmetic and rejects tampered timestamps.
    pub fn inject(&mut self, msg: Message) -> Result<()> {
        let dist = self.core.geometry.distance(msg.sender, msg.receiver)?;
        if (msg.arrival_time - msg.send_time - dist).abs() > TIME_SLACK {
            return Err(SpacetimeError::Causality(format!(
                "message claims arrival {} but light needs until {}",
                msg.arrival_time,
                msg.send_time + dist
            )));
        }
        self.core.queue.push(Reverse(Queued(msg)));
        Ok(())
    }

    fn dispatch(&mut self, idx: usize, trigger: Trigger<'_>) {
        let (party, mut program) = {
            let slot = &mut self.programs[idx];
            (slot.0, std::mem::replace(&mut slot.1, Box::new(|_, _| {})))
        };
        let mut ctx = Ctx { party, core: &mut self.core, world: &mut self.world };
        program(&mut ctx, trigger);
        self.programs[idx].1 = program;
    }

    /// Run to quiescence: start every party (in registration order), then
    /// deliver queued messages in arrival order until none remain.
    pub fn run(mut self) -> (W, EventLog) {
        for idx in 0..self.programs.len() {
            self.dispatch(idx, Trigger::Start);
        }
        while let Some(Reverse(Queued(msg))) = self.core.queue.pop() {
            debug_assert!(msg.arrival_time >= self.core.now - TIME_SLACK);
            self.core.now = self.core.now.max(msg.arrival_time);
            self.core.events.push(Event {
                time: msg.arrival_time,
                party: msg.receiver,
                kind: EventKind::Receive,
                detail: format!("←{}: {}", msg.sender, msg.payload.digest()),
                msg_id: Some(msg.id),
            });
            if let Some(idx) = self.programs.iter().position(|(p, _)| *p == msg.receiver) {
                self.dispatch(idx, Trigger::Deliver(&msg));
            }
        }
        let mut events = self.core.events;
        // Sends scheduled out of order during start-up are reordered here;
        // the stable sort keeps insertion order among simultaneous events.
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        (self.world, EventLog(events))
    }
}
