//! Textbook RSA over fixed-width big-endian byte strings.
//!
//! Signing is `S = EM^d mod n`, raw verification is `EM = S^e mod n`; both
//! sides are encoded to exactly the modulus length. No hashing, no padding
//! logic: that lives in the oracle. Keys for test subjects ship as fixtures,
//! one standard 2048-bit pair and one 12-byte pair small enough for
//! exhaustive round trips.

use num_bigint::BigUint;
use num_traits::Num;
use std::sync::OnceLock;
use thiserror::Error;

/// RSA key pair sized in whole bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaKey {
    n: BigUint,
    e: BigUint,
    d: BigUint,
    mod_len: usize,
}

/// Key construction failure.
#[derive(Debug, Error)]
pub enum KeyError {
    #[error("missing field {0:?} in key text")]
    MissingField(&'static str),
    #[error("field {field:?} is not hexadecimal: {text:?}")]
    BadHex { field: &'static str, text: String },
    #[error("modulus must be at least 2")]
    ModulusTooSmall,
}

/// Modular exponentiation failure.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RsaError {
    #[error("input is {got} bytes, key needs exactly {want}")]
    InputLength { got: usize, want: usize },
    #[error("input value is not below the modulus")]
    ValueTooLarge,
}

impl RsaKey {
    pub fn new(n: BigUint, e: BigUint, d: BigUint) -> Result<Self, KeyError> {
        if n < BigUint::from(2u32) {
            return Err(KeyError::ModulusTooSmall);
        }
        let mod_len = ((n.bits() as usize) + 7) / 8;
        Ok(RsaKey { n, e, d, mod_len })
    }

    /// Parse the `name = hex` line format used by the bundled fixtures.
    pub fn from_text(text: &str) -> Result<Self, KeyError> {
        let field = |name: &'static str| -> Result<BigUint, KeyError> {
            let line = text
                .lines()
                .find_map(|l| {
                    let (k, v) = l.split_once('=')?;
                    (k.trim() == name).then(|| v.trim())
                })
                .ok_or(KeyError::MissingField(name))?;
            BigUint::from_str_radix(line, 16).map_err(|_| KeyError::BadHex {
                field: name,
                text: line.to_string(),
            })
        };
        RsaKey::new(field("n")?, field("e")?, field("d")?)
    }

    /// Bundled 2048-bit key (`mod_len` 256, `e` = 3).
    pub fn default_2048() -> &'static RsaKey {
        static KEY: OnceLock<RsaKey> = OnceLock::new();
        KEY.get_or_init(|| {
            RsaKey::from_text(include_str!("key_2048.txt")).expect("bundled 2048-bit key parses")
        })
    }

    /// Bundled 12-byte key, small enough for cheap high-volume tests.
    pub fn demo_12() -> &'static RsaKey {
        static KEY: OnceLock<RsaKey> = OnceLock::new();
        KEY.get_or_init(|| {
            RsaKey::from_text(include_str!("key_12.txt")).expect("bundled 12-byte key parses")
        })
    }

    /// Modulus length in bytes; all inputs and outputs have this length.
    pub fn mod_len(&self) -> usize {
        self.mod_len
    }

    fn powmod(&self, input: &[u8], exp: &BigUint) -> Result<Vec<u8>, RsaError> {
        if input.len() != self.mod_len {
            return Err(RsaError::InputLength {
                got: input.len(),
                want: self.mod_len,
            });
        }
        let m = BigUint::from_bytes_be(input);
        if m >= self.n {
            return Err(RsaError::ValueTooLarge);
        }
        let out = m.modpow(exp, &self.n);
        let bytes = out.to_bytes_be();
        let mut fixed = vec![0u8; self.mod_len - bytes.len()];
        fixed.extend_from_slice(&bytes);
        Ok(fixed)
    }
}

/// `S = EM^d mod n`, both `mod_len` bytes.
pub fn sign(key: &RsaKey, em: &[u8]) -> Result<Vec<u8>, RsaError> {
    key.powmod(em, &key.d)
}

/// `EM = S^e mod n`, both `mod_len` bytes. Raw: no format checks.
pub fn verify_raw(key: &RsaKey, signature: &[u8]) -> Result<Vec<u8>, RsaError> {
    key.powmod(signature, &key.e)
}
