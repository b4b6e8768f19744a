//! Reference input generators.
//!
//! Three strategies spanning the quality spectrum a campaign is meant to
//! measure:
//!
//! * [`ConstraintAwareGen`] knows the format and emits only valid encoded
//!   messages, varying the payload length and content.
//! * [`ContextFreeGen`] knows the field grammar but not the length coupling:
//!   it draws the padding and payload lengths independently, so most outputs
//!   have the wrong total length.
//! * [`MutationGen`] is format-blind. It mutates seed inputs the way a
//!   coverage-guided fuzzer does: a deterministic sweep of bit flips, byte
//!   flips, arithmetic and interesting values, then endless stacked random
//!   ("havoc") mutations.
//!
//! All generators are infinite iterators over `Vec<u8>` and are fully
//! determined by their construction arguments plus a `u64` RNG seed.

use crate::pkcs1::{build_em, OracleParams, BLOCK_TYPE_SIGNATURE, PADDING_BYTE};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Values substituted byte-wise in the deterministic sweep.
const INTERESTING_BYTES: [u8; 4] = [0x00, 0xFF, 0x7F, 0x80];

/// Largest delta tried by the arithmetic sub-stage.
const ARITH_MAX: u8 = 35;

/// Largest block a havoc delete/insert/duplicate touches.
const HAVOC_BLOCK_MAX: usize = 16;

/// Generator selection, as named in campaign configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorStrategy {
    ConstraintAware,
    ContextFree,
    Mutation,
}

impl GeneratorStrategy {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorStrategy::ConstraintAware => "constraint_aware",
            GeneratorStrategy::ContextFree => "context_free",
            GeneratorStrategy::Mutation => "mutation",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("mutation generator needs at least one seed input")]
    NoSeeds,
    #[error("havoc_stacking_max must be at least 1")]
    ZeroHavocStacking,
}

/// Emits only valid encoded messages.
///
/// Each output draws a payload length uniformly from the representable range
/// `[0, mod_len - min_ps_len - 3]`, fills the payload with random bytes, and
/// assembles the unique valid framing around it.
pub struct ConstraintAwareGen {
    params: OracleParams,
    rng: ChaCha8Rng,
}

impl ConstraintAwareGen {
    pub fn new(params: OracleParams, rng_seed: u64) -> Self {
        ConstraintAwareGen {
            params,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }
}

impl Iterator for ConstraintAwareGen {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        let pl_len = self.rng.gen_range(0..=self.params.max_payload_len());
        let mut payload = vec![0u8; pl_len];
        self.rng.fill_bytes(&mut payload);
        Some(build_em(&payload, &self.params).expect("payload length sampled in range"))
    }
}

/// Emits the field skeleton with independently sampled field lengths.
///
/// Padding length `j` and payload length `k` are each drawn uniformly from
/// `[0, mod_len]`, ignoring the coupling `j + k + 3 = mod_len`. The output is
/// `00 01 FF^j 00 <k random bytes>`, so it always parses; it is valid exactly
/// when the lengths happen to land on the coupling line with `j >= min_ps_len`.
pub struct ContextFreeGen {
    params: OracleParams,
    rng: ChaCha8Rng,
}

impl ContextFreeGen {
    pub fn new(params: OracleParams, rng_seed: u64) -> Self {
        ContextFreeGen {
            params,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }
}

impl Iterator for ContextFreeGen {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        let ps_len = self.rng.gen_range(0..=self.params.mod_len);
        let pl_len = self.rng.gen_range(0..=self.params.mod_len);
        let mut out = Vec::with_capacity(ps_len + pl_len + 3);
        out.push(0x00);
        out.push(BLOCK_TYPE_SIGNATURE);
        out.extend(std::iter::repeat(PADDING_BYTE).take(ps_len));
        out.push(0x00);
        let start = out.len();
        out.resize(start + pl_len, 0);
        self.rng.fill_bytes(&mut out[start..]);
        Some(out)
    }
}

/// Probability that one [`ContextFreeGen`] output is valid.
///
/// Both lengths are uniform over `mod_len + 1` values. Validity needs
/// `j + k = mod_len - 3` with `j >= min_ps_len`, which leaves
/// `mod_len - 2 - min_ps_len` of the `(mod_len + 1)^2` equally likely pairs.
pub fn context_free_valid_probability(params: &OracleParams) -> f64 {
    let side = params.mod_len + 1;
    let favorable = params.mod_len - 2 - params.min_ps_len;
    favorable as f64 / (side * side) as f64
}

/// Tuning for [`MutationGen`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationConfig {
    /// Upper bound on stacked havoc operations per output (uniform `1..=max`).
    pub havoc_stacking_max: usize,
    /// Start directly in the havoc stage, skipping the deterministic sweep.
    pub skip_deterministic: bool,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            havoc_stacking_max: 16,
            skip_deterministic: false,
        }
    }
}

/// One deterministic sub-stage, or the terminal havoc stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    /// Flip `width` consecutive bits at every bit offset.
    BitFlip { width: usize },
    /// XOR `width` consecutive bytes with `0xFF` at every byte offset.
    ByteFlip { width: usize },
    /// Add and subtract `1..=ARITH_MAX` at every byte, wrapping.
    Arith,
    /// Overwrite every byte with each of [`INTERESTING_BYTES`].
    Interesting,
    /// Stacked random mutations, forever.
    Havoc,
}

impl Stage {
    const FIRST: Stage = Stage::BitFlip { width: 1 };

    fn next(self) -> Stage {
        match self {
            Stage::BitFlip { width: 1 } => Stage::BitFlip { width: 2 },
            Stage::BitFlip { width: 2 } => Stage::BitFlip { width: 4 },
            Stage::BitFlip { .. } => Stage::ByteFlip { width: 1 },
            Stage::ByteFlip { width: 1 } => Stage::ByteFlip { width: 2 },
            Stage::ByteFlip { width: 2 } => Stage::ByteFlip { width: 4 },
            Stage::ByteFlip { .. } => Stage::Arith,
            Stage::Arith => Stage::Interesting,
            Stage::Interesting | Stage::Havoc => Stage::Havoc,
        }
    }

    /// Number of mutants this stage yields for a seed of `len` bytes.
    fn mutant_count(self, len: usize) -> usize {
        match self {
            Stage::BitFlip { width } => (len * 8).saturating_sub(width - 1),
            Stage::ByteFlip { width } => len.saturating_sub(width - 1),
            Stage::Arith => len * (ARITH_MAX as usize) * 2,
            Stage::Interesting => len * INTERESTING_BYTES.len(),
            Stage::Havoc => usize::MAX,
        }
    }
}

/// Format-blind mutation generator modeled on a coverage-guided fuzzer's
/// mutation pipeline.
///
/// Each seed is swept through the deterministic stages in order (bit flips of
/// width 1, 2, 4; byte flips of width 1, 2, 4; byte arithmetic; interesting
/// values); havoc then runs indefinitely, picking a random seed and applying
/// a random stack of bit flips, byte overwrites, block deletes, inserts, and
/// duplications. Havoc outputs may differ in length from every seed.
#[derive(Debug)]
pub struct MutationGen {
    seeds: Vec<Vec<u8>>,
    config: MutationConfig,
    rng: ChaCha8Rng,
    seed_idx: usize,
    stage: Stage,
    cursor: usize,
}

impl MutationGen {
    pub fn new(
        seeds: Vec<Vec<u8>>,
        config: MutationConfig,
        rng_seed: u64,
    ) -> Result<Self, GeneratorError> {
        if seeds.is_empty() {
            return Err(GeneratorError::NoSeeds);
        }
        if config.havoc_stacking_max == 0 {
            return Err(GeneratorError::ZeroHavocStacking);
        }
        let stage = if config.skip_deterministic {
            Stage::Havoc
        } else {
            Stage::FIRST
        };
        Ok(MutationGen {
            seeds,
            config,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            seed_idx: 0,
            stage,
            cursor: 0,
        })
    }

    fn deterministic_mutant(&self, seed: &[u8]) -> Vec<u8> {
        let mut buf = seed.to_vec();
        let i = self.cursor;
        match self.stage {
            Stage::BitFlip { width } => {
                for bit in i..i + width {
                    buf[bit >> 3] ^= 0x80 >> (bit & 7);
                }
            }
            Stage::ByteFlip { width } => {
                for b in &mut buf[i..i + width] {
                    *b ^= 0xFF;
                }
            }
            Stage::Arith => {
                let pos = i / (ARITH_MAX as usize * 2);
                let sub = i % (ARITH_MAX as usize * 2);
                let delta = (sub / 2) as u8 + 1;
                buf[pos] = if sub % 2 == 0 {
                    buf[pos].wrapping_add(delta)
                } else {
                    buf[pos].wrapping_sub(delta)
                };
            }
            Stage::Interesting => {
                let pos = i / INTERESTING_BYTES.len();
                buf[pos] = INTERESTING_BYTES[i % INTERESTING_BYTES.len()];
            }
            Stage::Havoc => unreachable!("havoc handled separately"),
        }
        buf
    }

    fn havoc_mutant(&mut self) -> Vec<u8> {
        let base = self.rng.gen_range(0..self.seeds.len());
        let mut buf = self.seeds[base].clone();
        let ops = self.rng.gen_range(1..=self.config.havoc_stacking_max);
        for _ in 0..ops {
            match self.rng.gen_range(0..5u32) {
                0 => {
                    if buf.is_empty() {
                        continue;
                    }
                    let bit = self.rng.gen_range(0..buf.len() * 8);
                    buf[bit >> 3] ^= 0x80 >> (bit & 7);
                }
                1 => {
                    if buf.is_empty() {
                        continue;
                    }
                    let pos = self.rng.gen_range(0..buf.len());
                    buf[pos] = self.rng.gen();
                }
                2 => {
                    if buf.is_empty() {
                        continue;
                    }
                    let len = self.rng.gen_range(1..=buf.len().min(HAVOC_BLOCK_MAX));
                    let start = self.rng.gen_range(0..=buf.len() - len);
                    buf.drain(start..start + len);
                }
                3 => {
                    let len = self.rng.gen_range(1..=HAVOC_BLOCK_MAX);
                    let at = self.rng.gen_range(0..=buf.len());
                    let block: Vec<u8> = (0..len).map(|_| self.rng.gen()).collect();
                    buf.splice(at..at, block);
                }
                4 => {
                    if buf.is_empty() {
                        continue;
                    }
                    let len = self.rng.gen_range(1..=buf.len().min(HAVOC_BLOCK_MAX));
                    let src = self.rng.gen_range(0..=buf.len() - len);
                    let block = buf[src..src + len].to_vec();
                    let at = self.rng.gen_range(0..=buf.len());
                    buf.splice(at..at, block);
                }
                _ => unreachable!(),
            }
        }
        buf
    }
}

impl Iterator for MutationGen {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        loop {
            if self.stage == Stage::Havoc {
                return Some(self.havoc_mutant());
            }
            let len = self.seeds[self.seed_idx].len();
            if self.cursor < self.stage.mutant_count(len) {
                let out = self.deterministic_mutant(&self.seeds[self.seed_idx]);
                self.cursor += 1;
                return Some(out);
            }
            self.cursor = 0;
            if self.stage == Stage::Interesting && self.seed_idx + 1 < self.seeds.len() {
                self.seed_idx += 1;
                self.stage = Stage::FIRST;
            } else {
                self.stage = self.stage.next();
            }
        }
    }
}

/// Construct the named strategy as a boxed infinite iterator.
///
/// `seeds` is only consulted by [`GeneratorStrategy::Mutation`]; the other
/// strategies sample from scratch.
pub fn build_generator(
    strategy: GeneratorStrategy,
    params: OracleParams,
    seeds: Vec<Vec<u8>>,
    mutation: MutationConfig,
    rng_seed: u64,
) -> Result<Box<dyn Iterator<Item = Vec<u8>> + Send>, GeneratorError> {
    Ok(match strategy {
        GeneratorStrategy::ConstraintAware => Box::new(ConstraintAwareGen::new(params, rng_seed)),
        GeneratorStrategy::ContextFree => Box::new(ContextFreeGen::new(params, rng_seed)),
        GeneratorStrategy::Mutation => Box::new(MutationGen::new(seeds, mutation, rng_seed)?),
    })
}
