//! Mock test subjects.
//!
//! A subject stands in for a signature-verifying library. Fed a candidate
//! encoded message, it performs the signing round trip a real harness would
//! (sign, then recover the message from the signature) and applies an
//! acceptance policy to the recovered bytes. Policies differ in strictness,
//! which is exactly the dimension campaigns compare generators across:
//!
//! * [`SubjectPolicy::Strict`] accepts precisely the oracle-valid messages.
//! * [`SubjectPolicy::LenientPs`] waives the eight-byte padding minimum and
//!   accepts any padding of length one or more.
//! * [`SubjectPolicy::Crashy`] is strict, but raises a crash flag when a
//!   trigger byte appears in the payload of an otherwise valid message. The
//!   bug hides behind input validation: only well-formed inputs reach it.

use crate::pkcs1::{parse_em, sign, validate, verify_raw, OracleParams, RsaKey};

/// Acceptance behavior of a mock subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubjectPolicy {
    /// Accept iff the oracle accepts.
    Strict,
    /// Accept any padding length >= 1; otherwise as strict.
    LenientPs,
    /// As strict, plus a simulated crash when `trigger` occurs in the
    /// payload of a valid message.
    Crashy { trigger: u8 },
}

impl SubjectPolicy {
    /// Default crash trigger byte for [`SubjectPolicy::Crashy`].
    pub const DEFAULT_TRIGGER: u8 = 0x42;

    /// Resolve a policy by its config name.
    pub fn from_name(name: &str, crash_trigger: u8) -> Option<SubjectPolicy> {
        match name {
            "strict" => Some(SubjectPolicy::Strict),
            "lenient_ps" => Some(SubjectPolicy::LenientPs),
            "crashy" => Some(SubjectPolicy::Crashy {
                trigger: crash_trigger,
            }),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SubjectPolicy::Strict => "strict",
            SubjectPolicy::LenientPs => "lenient_ps",
            SubjectPolicy::Crashy { .. } => "crashy",
        }
    }
}

/// What the subject did with one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubjectOutcome {
    pub accepted: bool,
    pub crashed: bool,
}

const REJECTED: SubjectOutcome = SubjectOutcome {
    accepted: false,
    crashed: false,
};

/// Feed one candidate to a subject.
///
/// Inputs shorter than the modulus are left-padded with `0x00` (a harness
/// hands the library an integer, and leading zeros are how short values
/// embed); longer inputs are rejected outright, since no modulus-sized
/// integer can represent them. The survivor is signed and recovered through
/// the key, and the policy judges the recovered bytes. Signing failures
/// (values at or above the modulus) reject; such values are never valid
/// anyway, because a valid message starts with `0x00`.
///
/// `params` must describe the same modulus length as `key`; the policy
/// reuses its `min_ps_len` so subject and oracle disagree only where the
/// policy says so.
pub fn run_subject(
    em: &[u8],
    policy: SubjectPolicy,
    key: &RsaKey,
    params: &OracleParams,
) -> SubjectOutcome {
    debug_assert_eq!(key.mod_len(), params.mod_len);
    if em.len() > key.mod_len() {
        return REJECTED;
    }
    let mut padded = vec![0u8; key.mod_len() - em.len()];
    padded.extend_from_slice(em);
    let sig = match sign(key, &padded) {
        Ok(s) => s,
        Err(_) => return REJECTED,
    };
    let recovered = match verify_raw(key, &sig) {
        Ok(r) => r,
        Err(_) => return REJECTED,
    };

    match policy {
        SubjectPolicy::Strict => SubjectOutcome {
            accepted: validate(&recovered, params).valid(),
            crashed: false,
        },
        SubjectPolicy::LenientPs => {
            let lenient = OracleParams::with_min_ps_len(params.mod_len, 1)
                .expect("mod_len admits min_ps_len 1 whenever params are well-formed");
            SubjectOutcome {
                accepted: validate(&recovered, &lenient).valid(),
                crashed: false,
            }
        }
        SubjectPolicy::Crashy { trigger } => {
            let accepted = validate(&recovered, params).valid();
            let crashed = accepted
                && parse_em(&recovered)
                    .parsed()
                    .is_some_and(|f| f.payload.contains(&trigger));
            SubjectOutcome { accepted, crashed }
        }
    }
}
