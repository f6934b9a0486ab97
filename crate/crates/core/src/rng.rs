//! Seeded random streams.
//!
//! Every chain or trajectory draws from its own ChaCha8 stream, derived from
//! the master seed plus a (purpose, index) pair, so results do not depend on
//! worker count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream families. Each owns a disjoint block of 2^48 stream ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    HeatedSeeds = 1,
    Recording = 2,
    Rejection = 3,
    Egp = 4,
    Test = 15,
}

pub fn stream(master: u64, purpose: Purpose, index: u64) -> SimRng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}
