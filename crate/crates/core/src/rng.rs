//! Counter-based random substreams.
//!
//! A substream is identified by `(master seed, run, round, purpose)`. The
//! four words are folded through the SplitMix64 finalizer into a 64-bit seed
//! for a ChaCha8 generator, so a stream never depends on how many draws any
//! other stream has made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Distinct purposes never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Learner,
    Adversary,
    Noise,
    InitialState,
    /// Noise of Monte Carlo particle `run` in counterfactual evaluation.
    Particle,
    /// Perturbation draws used to describe a randomized learner's mixture.
    Declared,
    Tree,
    Signs,
    Instance,
    Custom(u32),
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Learner => 1,
            Purpose::Adversary => 2,
            Purpose::Noise => 3,
            Purpose::InitialState => 4,
            Purpose::Particle => 5,
            Purpose::Declared => 6,
            Purpose::Tree => 7,
            Purpose::Signs => 8,
            Purpose::Instance => 9,
            Purpose::Custom(c) => 0x1_0000_0000 | u64::from(c),
        }
    }
}

/// Identifier of one substream, logged with every game round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub run: u64,
    pub round: u64,
    pub purpose: Purpose,
}

impl StreamId {
    pub fn new(run: u64, round: u64, purpose: Purpose) -> Self {
        StreamId { run, round, purpose }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `id` under `master`.
pub fn substream_seed(master: u64, id: StreamId) -> u64 {
    let mut h = mix64(master);
    h = mix64(h ^ id.run);
    h = mix64(h ^ id.round.rotate_left(21));
    mix64(h ^ id.purpose.code().rotate_left(42))
}

pub fn substream(master: u64, id: StreamId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(master, id))
}

/// Shorthand for `substream(master, StreamId::new(run, round, purpose))`.
pub fn stream(master: u64, run: u64, round: u64, purpose: Purpose) -> ChaCha8Rng {
    substream(master, StreamId::new(run, round, purpose))
}
