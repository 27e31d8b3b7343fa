//! Seed derivation and checkpointable RNG state.
//!
//! Every random decision in a run flows from one master seed through named
//! streams, so forks can re-derive or snapshot generator state exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CptError, Result};

/// Derive an independent generator from a master seed, a purpose label, and
/// numeric qualifiers (task id, branch id, ...).
///
/// FNV-1a over the inputs keeps the mapping stable across platforms and rustc
/// versions (std's `DefaultHasher` is not stable across releases).
pub fn derive_rng(master: u64, purpose: &str, ids: &[u64]) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    };
    for b in master.to_le_bytes() {
        eat(b);
    }
    for b in purpose.as_bytes() {
        eat(*b);
    }
    for id in ids {
        for b in id.to_le_bytes() {
            eat(b);
        }
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Complete, restorable ChaCha state: seed, stream, and position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    /// Snapshot a generator without perturbing it.
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    /// Rebuild a generator that continues exactly where the snapshot was taken.
    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    /// Hex encoding: 32-byte seed, 8-byte stream, 16-byte word position.
    pub fn to_hex(&self) -> String {
        let mut bytes = Vec::with_capacity(56);
        bytes.extend_from_slice(&self.seed);
        bytes.extend_from_slice(&self.stream.to_le_bytes());
        bytes.extend_from_slice(&self.word_pos.to_le_bytes());
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim())
            .map_err(|e| CptError::Parse(format!("bad rng state hex: {e}")))?;
        if bytes.len() != 56 {
            return Err(CptError::Parse(format!(
                "rng state must be 56 bytes, got {}",
                bytes.len()
            )));
        }
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&bytes[..32]);
        let stream = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
        let word_pos = u128::from_le_bytes(bytes[40..56].try_into().unwrap());
        Ok(RngState {
            seed,
            stream,
            word_pos,
        })
    }
}
