//! Counter-based random streams. A [`StreamFamily`] is a seed; stream `id`
//! is the ChaCha8 stream with that number, so replica `i` always sees the
//! same numbers no matter how replicas are spread over threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamFamily {
    pub seed: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl StreamFamily {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Independent sub-family, e.g. one per replica or per purpose.
    pub fn child(&self, tag: u64) -> StreamFamily {
        StreamFamily {
            seed: splitmix64(splitmix64(self.seed) ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    pub fn stream(&self, id: u64) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        RngStream {
            rng,
            record: SeedRecord {
                seed: self.seed,
                stream: id,
            },
        }
    }
}

/// One stream. Must not be shared between concurrent consumers.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    record: SeedRecord,
}

impl RngStream {
    pub fn record(&self) -> SeedRecord {
        self.record
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Runs `f(replica)` for every replica in `0..n`, in parallel, returning
/// results in replica order.
pub fn map_replicas<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}
