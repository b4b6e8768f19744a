//! Evaluation platform for input generators targeting PKCS#1 v1.5
//! signature padding.
//!
//! The crate is organized around one question: how good is a given generator
//! at producing semantically valid encoded messages? The pieces:
//!
//! * [`pkcs1`] — the encoded-message data model, the format oracle that
//!   decides validity and names each violated constraint, and a textbook RSA
//!   primitive for the signing round trip.
//! * [`generators`] — three reference input generators: constraint-aware
//!   (valid by construction), context-free (random field lengths), and
//!   mutation-based (deterministic and havoc stages over seed inputs).
//! * [`subjects`] — mock verifiers with strict, lenient, and crash-prone
//!   acceptance policies, used as test subjects for campaigns.
//! * [`validator`] — a TCP service that receives candidate inputs, runs the
//!   oracle, and appends verdicts to a JSONL log.
//! * [`controller`] — campaign orchestration: reads a TOML plan, wires a
//!   generator to a subject and a validator, enforces time and count budgets.
//! * [`analyzer`] — post-hoc metrics over campaign logs: validity rate,
//!   throughput, pairwise edit distance, and normalized longest common
//!   subsequence.

pub mod analyzer;
pub mod controller;
pub mod generators;
pub mod pkcs1;
pub mod subjects;
pub mod validator;

pub use pkcs1::{
    parse_em, validate, EncodedMessage, OracleParams, ParsedFields, ReasonCode, RsaKey, Verdict,
};
