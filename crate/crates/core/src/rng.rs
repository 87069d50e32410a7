//! Named random substreams.
//!
//! Every stream is a ChaCha8 generator keyed by SHA-256 over
//! (master seed, replication index, stream name). Streams never need to be
//! pre-allocated and two distinct identifiers never share a key.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamId {
    pub master_seed: u64,
    pub replication: u64,
    pub name: String,
}

impl StreamId {
    pub fn key(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"tetra-sds/stream/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.replication.to_le_bytes());
        hasher.update((self.name.len() as u64).to_le_bytes());
        hasher.update(self.name.as_bytes());
        hasher.finalize().into()
    }
}

/// Hands out substreams for one replication and remembers which names were taken.
#[derive(Debug)]
pub struct StreamFactory {
    master_seed: u64,
    replication: u64,
    issued: BTreeSet<String>,
}

impl StreamFactory {
    pub fn new(master_seed: u64, replication: u64) -> Self {
        StreamFactory {
            master_seed,
            replication,
            issued: BTreeSet::new(),
        }
    }

    /// Panics if `name` was already issued: reusing a stream would correlate two processes.
    pub fn stream(&mut self, name: &str) -> StreamRng {
        assert!(
            self.issued.insert(name.to_owned()),
            "random stream `{name}` requested twice"
        );
        let id = StreamId {
            master_seed: self.master_seed,
            replication: self.replication,
            name: name.to_owned(),
        };
        ChaCha8Rng::from_seed(id.key())
    }

    pub fn issued(&self) -> impl Iterator<Item = StreamId> + '_ {
        self.issued.iter().map(|name| StreamId {
            master_seed: self.master_seed,
            replication: self.replication,
            name: name.clone(),
        })
    }
}
