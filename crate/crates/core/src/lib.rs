//! Simulation and verification toolkit for position verification built on
//! BB84 states, together with the weak string erasure primitive it rests on.
//!
//! The crate has three layers:
//!
//! * a small quantum toolbox ([`linalg`], [`quantum`]) with named-subsystem
//!   pure states, measurements, Bell primitives and a deterministic Hermitian
//!   eigensolver;
//! * the certificate layer ([`entropy`], [`bounds`]) computing min-entropy and
//!   max-relative-entropy quantities with machine-checkable witnesses, and the
//!   security thresholds derived from them;
//! * the experimental side ([`spacetime`], [`protocols`], [`adversaries`],
//!   [`harness`]) running honest and adversarial protocol executions under an
//!   explicit relativistic timing model and comparing attack statistics
//!   against the proven bounds.

pub mod adversaries;
pub mod bits;
pub mod bounds;
pub mod entropy;
pub mod harness;
pub mod linalg;
pub mod protocols;
pub mod quantum;
pub mod spacetime;

pub use bits::Bits;
pub use bounds::{BoundReport, SecurityParams, Verdict};
pub use entropy::{EmaxBounds, EntropyCertificate, SchmidtDecomposition};
pub use linalg::ComplexMatrix;
pub use adversaries::{CheatStrategy, ResourceSpec};
pub use harness::{Estimate, EstimateRow, ExperimentConfig, RunSpec};
pub use protocols::{QpvTranscript, RoundVerdict, WseMode, WseTranscript};
pub use quantum::{DensityOperator, Povm, PureState};
pub use spacetime::{Event, EventLog, Geometry, Message, Party, Payload};
