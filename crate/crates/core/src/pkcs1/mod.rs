//! PKCS#1 v1.5 encoded-message model and format oracle.
//!
//! An encoded message (EM) for the signature scheme is laid out as
//!
//! ```text
//! EM = 0x00 || BT || PS || 0x00 || PL
//! ```
//!
//! where `BT` is the block type (`0x01` for signatures), `PS` is a padding
//! string of `0xFF` bytes at least eight bytes long, and `PL` is the payload.
//! A structurally valid EM is exactly as long as the public modulus, which
//! couples `|PS|` and `|PL|`: `|PS| = mod_len - |PL| - 3`.
//!
//! [`parse_em`] splits any byte string into those fields when possible;
//! [`validate`] is the strict oracle that decides validity and reports every
//! violated constraint.

mod rsa;

pub use rsa::{sign, verify_raw, KeyError, RsaError, RsaKey};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Block type byte used by the signature padding scheme.
pub const BLOCK_TYPE_SIGNATURE: u8 = 0x01;

/// Padding byte required throughout `PS`.
pub const PADDING_BYTE: u8 = 0xFF;

/// Oracle configuration: the modulus length and the minimum padding length.
///
/// Deserialization runs the same invariant checks as the constructors and
/// defaults `min_ps_len` to eight when omitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawOracleParams")]
pub struct OracleParams {
    /// Byte length of the public modulus; valid EMs have exactly this length.
    pub mod_len: usize,
    /// Minimum number of padding bytes (eight in the standard).
    pub min_ps_len: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracleParams {
    mod_len: usize,
    #[serde(default = "RawOracleParams::default_min_ps_len")]
    min_ps_len: usize,
}

impl RawOracleParams {
    fn default_min_ps_len() -> usize {
        OracleParams::DEFAULT_MIN_PS_LEN
    }
}

impl TryFrom<RawOracleParams> for OracleParams {
    type Error = ParamsError;

    fn try_from(raw: RawOracleParams) -> Result<Self, ParamsError> {
        OracleParams::with_min_ps_len(raw.mod_len, raw.min_ps_len)
    }
}

/// Parameter validation error.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("mod_len must be positive")]
    ZeroModLen,
    #[error("min_ps_len must be positive")]
    ZeroMinPsLen,
    #[error("mod_len {mod_len} < min_ps_len {min_ps_len} + 3: no valid EM exists")]
    NoValidEm { mod_len: usize, min_ps_len: usize },
}

impl OracleParams {
    /// Standard minimum padding length.
    pub const DEFAULT_MIN_PS_LEN: usize = 8;

    /// Params with the standard eight-byte padding minimum.
    pub fn new(mod_len: usize) -> Result<Self, ParamsError> {
        Self::with_min_ps_len(mod_len, Self::DEFAULT_MIN_PS_LEN)
    }

    /// Params with an explicit padding minimum. Small minimums make exhaustive
    /// testing with tiny moduli possible.
    pub fn with_min_ps_len(mod_len: usize, min_ps_len: usize) -> Result<Self, ParamsError> {
        if mod_len == 0 {
            return Err(ParamsError::ZeroModLen);
        }
        if min_ps_len == 0 {
            return Err(ParamsError::ZeroMinPsLen);
        }
        if mod_len < min_ps_len + 3 {
            return Err(ParamsError::NoValidEm {
                mod_len,
                min_ps_len,
            });
        }
        Ok(OracleParams {
            mod_len,
            min_ps_len,
        })
    }

    /// Largest payload length a valid EM can carry.
    pub fn max_payload_len(&self) -> usize {
        self.mod_len - self.min_ps_len - 3
    }
}

/// One violated constraint.
///
/// The first six codes map one-to-one onto the structural constraints the
/// oracle checks. `WireDecodeError` is produced by the validator service when
/// a network payload cannot be decoded to bytes at all; [`validate`] itself
/// never returns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    LengthMismatch,
    BadLeadingByte,
    BadBlockType,
    PsNotFf,
    PsTooShort,
    MissingSeparator,
    WireDecodeError,
}

impl ReasonCode {
    /// Stable machine-readable name, as written into campaign logs.
    pub fn name(self) -> &'static str {
        match self {
            ReasonCode::LengthMismatch => "LENGTH_MISMATCH",
            ReasonCode::BadLeadingByte => "BAD_LEADING_BYTE",
            ReasonCode::BadBlockType => "BAD_BLOCK_TYPE",
            ReasonCode::PsNotFf => "PS_NOT_FF",
            ReasonCode::PsTooShort => "PS_TOO_SHORT",
            ReasonCode::MissingSeparator => "MISSING_SEPARATOR",
            ReasonCode::WireDecodeError => "WIRE_DECODE_ERROR",
        }
    }
}

impl std::fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Oracle decision. Valid if and only if no constraint was violated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    reasons: Vec<ReasonCode>,
}

impl Verdict {
    pub fn valid(&self) -> bool {
        self.reasons.is_empty()
    }

    /// Every violated constraint, in check order.
    pub fn reasons(&self) -> &[ReasonCode] {
        &self.reasons
    }

    /// Reason names as logged.
    pub fn reason_names(&self) -> Vec<String> {
        self.reasons.iter().map(|r| r.name().to_string()).collect()
    }
}

/// Fields of a structurally parseable EM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFields {
    /// Block type byte (`raw[1]`); any value parses, only `0x01` validates.
    pub block_type: u8,
    /// Bytes strictly between the block type and the separator.
    pub padding: Vec<u8>,
    /// Everything after the separator; opaque to the oracle.
    pub payload: Vec<u8>,
}

/// A candidate input plus its field split, when one exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMessage {
    raw: Vec<u8>,
    parsed: Option<ParsedFields>,
}

impl EncodedMessage {
    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    pub fn parsed(&self) -> Option<&ParsedFields> {
        self.parsed.as_ref()
    }

    /// Rebuild the raw bytes from the parsed fields.
    /// Equals `raw` whenever `parsed` is present.
    pub fn reassemble(&self) -> Option<Vec<u8>> {
        self.parsed.as_ref().map(|p| {
            let mut out = Vec::with_capacity(self.raw.len());
            out.push(0x00);
            out.push(p.block_type);
            out.extend_from_slice(&p.padding);
            out.push(0x00);
            out.extend_from_slice(&p.payload);
            out
        })
    }
}

/// Index of the first `0x00` at position >= 2, the end of the padding run.
fn separator_index(raw: &[u8]) -> Option<usize> {
    if raw.len() < 3 {
        return None;
    }
    raw[2..].iter().position(|&b| b == 0x00).map(|i| i + 2)
}

/// Split a byte string into EM fields.
///
/// Parsing is permissive: it only requires a leading `0x00`, at least three
/// bytes, and a `0x00` separator at index >= 2. The padding content and the
/// length coupling are the oracle's business, not the parser's. Unparseable
/// input yields an [`EncodedMessage`] without fields; there is no error.
pub fn parse_em(raw: &[u8]) -> EncodedMessage {
    let parsed = (|| {
        if raw.len() < 3 || raw[0] != 0x00 {
            return None;
        }
        let sep = separator_index(raw)?;
        Some(ParsedFields {
            block_type: raw[1],
            padding: raw[2..sep].to_vec(),
            payload: raw[sep + 1..].to_vec(),
        })
    })();
    EncodedMessage {
        raw: raw.to_vec(),
        parsed,
    }
}

/// The format oracle.
///
/// Checks every structural constraint and reports all violations rather than
/// stopping at the first:
///
/// * `|raw| = mod_len` — [`ReasonCode::LengthMismatch`]
/// * `raw[0] = 0x00` — [`ReasonCode::BadLeadingByte`]
/// * `raw[1] = 0x01` — [`ReasonCode::BadBlockType`]
/// * a `0x00` separator exists at index >= 2 — [`ReasonCode::MissingSeparator`]
/// * every byte before the separator (from index 2) is `0xFF` — [`ReasonCode::PsNotFf`]
/// * `|PS| >= min_ps_len` — [`ReasonCode::PsTooShort`]
///
/// The two padding checks need a separator to locate `PS` and are skipped when
/// it is missing. The payload is never inspected. When the input is exactly
/// `mod_len` long and all checks pass, `|PS| = mod_len - |PL| - 3` holds by
/// construction, so the length coupling needs no separate check.
pub fn validate(raw: &[u8], params: &OracleParams) -> Verdict {
    let mut reasons = Vec::new();
    if raw.len() != params.mod_len {
        reasons.push(ReasonCode::LengthMismatch);
    }
    if raw.first() != Some(&0x00) {
        reasons.push(ReasonCode::BadLeadingByte);
    }
    if raw.get(1) != Some(&BLOCK_TYPE_SIGNATURE) {
        reasons.push(ReasonCode::BadBlockType);
    }
    match separator_index(raw) {
        None => reasons.push(ReasonCode::MissingSeparator),
        Some(sep) => {
            let padding = &raw[2..sep];
            if padding.iter().any(|&b| b != PADDING_BYTE) {
                reasons.push(ReasonCode::PsNotFf);
            }
            if padding.len() < params.min_ps_len {
                reasons.push(ReasonCode::PsTooShort);
            }
        }
    }
    Verdict { reasons }
}

/// Build the unique valid EM with the given payload, or `None` when the
/// payload is too long for the modulus.
pub fn build_em(payload: &[u8], params: &OracleParams) -> Option<Vec<u8>> {
    if payload.len() > params.max_payload_len() {
        return None;
    }
    let ps_len = params.mod_len - payload.len() - 3;
    let mut em = Vec::with_capacity(params.mod_len);
    em.push(0x00);
    em.push(BLOCK_TYPE_SIGNATURE);
    em.extend(std::iter::repeat(PADDING_BYTE).take(ps_len));
    em.push(0x00);
    em.extend_from_slice(payload);
    Some(em)
}
