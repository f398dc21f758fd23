//! Memoryless binary erasure channel with counter-based randomness.
//!
//! Whether slot `n` of trial `t` is delivered is a pure function of
//! `(seed, t, n)`: the per-trial seed keys a ChaCha8 stream and the slot
//! number selects the position in that stream. Results therefore do not
//! depend on call order or on how trials are spread over threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// Independent random streams derived from one trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    Encoder = 2,
    Payload = 3,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trial seed = hash(master seed, trial id).
pub fn trial_seed(master: u64, trial_id: u64) -> u64 {
    mix64(mix64(master) ^ trial_id.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Seed of one named stream within a trial.
pub fn stream_seed(master: u64, trial_id: u64, stream: Stream) -> u64 {
    mix64(trial_seed(master, trial_id) ^ (stream as u64).wrapping_mul(0xa076_1d64_78bd_642f))
}

/// Deterministic generator for one stream of one trial.
pub fn stream_rng(master: u64, trial_id: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, trial_id, stream))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub epsilon: f64,
    pub seed: u64,
    pub trial_id: u64,
}

impl ChannelParams {
    pub fn new(epsilon: f64, seed: u64, trial_id: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return invalid(format!("erasure rate must be in [0, 1), got {epsilon}"));
        }
        Ok(Self { epsilon, seed, trial_id })
    }
}

/// Stateful view of the channel for one trial; [`Channel::deliver`] is still
/// a pure function of the slot number.
#[derive(Debug, Clone)]
pub struct Channel {
    params: ChannelParams,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn new(params: ChannelParams) -> Self {
        let rng = stream_rng(params.seed, params.trial_id, Stream::Channel);
        Self { params, rng }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn deliver(&mut self, slot: u64) -> bool {
        if self.params.epsilon == 0.0 {
            return true;
        }
        // each slot owns two 32-bit words of the stream
        let pos = slot as u128 * 2;
        if self.rng.get_word_pos() != pos {
            self.rng.set_word_pos(pos);
        }
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        u >= self.params.epsilon
    }
}

/// One-shot form of [`Channel::deliver`].
pub fn deliver(params: &ChannelParams, slot: u64) -> bool {
    Channel::new(*params).deliver(slot)
}
