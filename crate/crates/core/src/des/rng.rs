use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random substreams. Each has its own ChaCha stream derived from the
/// run seed, so draws on one never shift another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Substream {
    Arrivals,
    Services,
    Mobility,
    Decode,
}

impl Substream {
    const ALL: [Substream; 4] = [Substream::Arrivals, Substream::Services, Substream::Mobility, Substream::Decode];

    fn stream_id(self) -> u64 {
        match self {
            Substream::Arrivals => 1,
            Substream::Services => 2,
            Substream::Mobility => 3,
            Substream::Decode => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RngStreams {
    seed: u64,
    streams: [ChaCha8Rng; 4],
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let streams = Substream::ALL.map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s.stream_id());
            r
        });
        RngStreams { seed, streams }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&mut self, s: Substream) -> &mut ChaCha8Rng {
        let idx = Substream::ALL.iter().position(|x| *x == s).expect("listed substream");
        &mut self.streams[idx]
    }
}
