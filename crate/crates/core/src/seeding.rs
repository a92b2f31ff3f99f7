//! Every random draw in a run comes from a ChaCha stream keyed by the run seed
//! and a purpose, so runs are reproducible no matter how they are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Split,
    Init,
    LinearTask,
    Disk,
    /// Training-set shuffle for one epoch (0-based).
    Epoch(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Split => 1,
            Stream::Init => 2,
            Stream::LinearTask => 3,
            Stream::Disk => 4,
            Stream::Epoch(e) => 1_000 + e as u64,
        }
    }
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream.id());
    r
}
