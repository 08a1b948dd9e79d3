//! Dense state-vector simulation and exhaustive verification of deterministic
//! joint remote state preparation (JRSP) of equatorial N-qubit states.
//!
//! The crate is split into four layers:
//!
//! * [`statevec`]: a small dense state-vector engine with labeled qubits.
//! * [`protocol`]: equatorial targets, phase shares, GHZ channels, sender
//!   measurement bases and receiver corrections.
//! * [`verify`]: orthonormality and decomposition oracles plus exhaustive
//!   branch enumeration.
//! * [`cli`]: the `jrsp` command-line front end and its report documents.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and the
//! verification tolerances are calibrated for.

pub mod cli;
pub mod error;
pub mod protocol;
pub mod scalar;
pub mod statevec;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision state vector.
pub type State = statevec::QuantumState<f64>;
/// Single-precision state vector.
pub type State32 = statevec::QuantumState<f32>;
/// Double-precision square operator.
pub type Operator = statevec::Operator<f64>;
/// Double-precision target phases.
pub type PhaseVector = protocol::PhaseVector<f64>;
/// Double-precision sender phase share.
pub type PhaseShare = protocol::PhaseShare<f64>;
/// Double-precision sender measurement basis.
pub type MeasurementBasis = protocol::MeasurementBasis<f64>;
/// Double-precision receiver correction.
pub type CorrectionOp = protocol::CorrectionOp<f64>;
/// Double-precision branch record.
pub type OutcomeRecord = verify::OutcomeRecord<f64>;
/// Double-precision verification report.
pub type VerificationReport = verify::VerificationReport<f64>;

pub use protocol::{DiagonalOutcome, Outcomes, ProtocolConfig};
