//! Named, independent random substreams.
//!
//! Each stream is a ChaCha20 generator keyed by
//! `SHA-256("swarmsim.substream.v1" || seed as u64 BE || name)`, so a
//! stream's draws depend only on the run seed and its own name. Adding an
//! entity adds a name and leaves every other stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"swarmsim.substream.v1";

pub type StreamRng = ChaCha20Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> StreamRng {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(self.seed.to_be_bytes());
        h.update(name.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        ChaCha20Rng::from_seed(key)
    }
}
