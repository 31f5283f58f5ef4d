//! Seed derivation.
//!
//! Every random decision in the harness draws from a ChaCha8 stream whose
//! seed is the first 32 bytes of SHA-256 over the master seed and a list of
//! labelled parts. Streams therefore depend only on *what* is being drawn,
//! never on execution order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derive an independent stream from `master` and a path of labels.
pub fn substream(master: u64, parts: &[&str]) -> StreamRng {
    StreamRng::from_seed(derive_bytes(master, parts))
}

/// Derive a 64-bit seed, for places that hand a plain integer onwards.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let bytes = derive_bytes(master, parts);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

fn derive_bytes(master: u64, parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for part in parts {
        // length prefix keeps ["ab","c"] and ["a","bc"] apart
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher.finalize().into()
}

/// Hex SHA-256 of a prompt; used as the stable prompt identifier in records.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
