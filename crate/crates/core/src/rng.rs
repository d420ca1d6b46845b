//! Seed derivation. One master seed feeds several independent ChaCha streams
//! so that, e.g., changing the batch size never perturbs layout generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Disjoint derived streams. The discriminant is the ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Layout generation and demonstration planning.
    Layout = 0,
    /// Stage-1 window sampling and reparameterization noise.
    Stage1 = 1,
    /// Network initialization.
    Init = 2,
    /// Environment resets and rollout action noise.
    Rollout = 3,
    /// Replay mini-batch draws and update noise.
    Batch = 4,
    /// Evaluation episode starts.
    Eval = 5,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Serializable position of a stream: `(seed, stream, word_pos)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &SimRng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> SimRng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    pub fn encode(&self) -> String {
        format!("{}:{}:{}", hex::encode(self.seed), self.stream, self.word_pos)
    }

    pub fn decode(s: &str) -> Option<Self> {
        let mut it = s.split(':');
        let seed: [u8; 32] = hex::decode(it.next()?).ok()?.try_into().ok()?;
        let stream = it.next()?.parse().ok()?;
        let word_pos = it.next()?.parse().ok()?;
        Some(Self { seed, stream, word_pos })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_disjoint_and_reproducible() {
        let a: Vec<u64> = (0..4).map({
            let mut r = stream(7, Stream::Layout);
            move |_| r.next_u64()
        }).collect();
        let mut b = stream(7, Stream::Layout);
        let mut c = stream(7, Stream::Rollout);
        assert_eq!(a[0], b.next_u64());
        assert_ne!(a[0], c.next_u64());
    }

    #[test]
    fn state_round_trip_resumes_sequence() {
        let mut r = stream(3, Stream::Batch);
        for _ in 0..17 {
            r.next_u32();
        }
        let st = RngState::decode(&RngState::capture(&r).encode()).unwrap();
        let mut resumed = st.restore();
        assert_eq!(r.next_u64(), resumed.next_u64());
    }
}
