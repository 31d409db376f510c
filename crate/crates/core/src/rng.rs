//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream id, index)`, so work can be
//! split across threads or replayed from any position without sharing state.
//! The mixing function is the SplitMix64 finalizer applied to a Weyl sequence.

use rand_core::{impls, RngCore};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Logical stream identifiers used by the simulator.
pub mod streams {
    pub const ARRIVALS: u64 = 1;
    pub const ROUTING: u64 = 2;
    /// Gaussian offsets of photons within a laser pulse.
    pub const PULSE_SHAPE: u64 = 3;
    /// Detector streams are `DETECTOR_BASE + 4·channel + k`.
    pub const DETECTOR_BASE: u64 = 16;
    pub const BINNED: u64 = 64;
    pub const SYNTHETIC: u64 = 128;
}

/// Stateless keyed generator: `draw(stream, index)` never depends on call order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ 0x6A09_E667_F3BC_C908),
        }
    }

    fn stream_key(&self, stream: u64) -> u64 {
        mix64(self.key ^ mix64(stream.wrapping_mul(GOLDEN) ^ 0xBB67_AE85_84CA_A73B))
    }

    /// Raw 64-bit draw at `(stream, index)`.
    pub fn draw(&self, stream: u64, index: u64) -> u64 {
        mix64(self.stream_key(stream) ^ index.wrapping_mul(GOLDEN))
    }

    /// Uniform draw in `[0, 1)` at `(stream, index)`.
    pub fn uniform(&self, stream: u64, index: u64) -> f64 {
        to_unit(self.draw(stream, index))
    }

    /// Sequential view of one stream starting at index 0.
    pub fn stream(&self, stream: u64) -> Stream {
        Stream {
            key: self.stream_key(stream),
            index: 0,
        }
    }
}

#[inline]
fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential cursor over a keyed stream; usable with `rand_distr` samplers.
#[derive(Clone, Debug)]
pub struct Stream {
    key: u64,
    index: u64,
}

impl Stream {
    pub fn position(&self) -> u64 {
        self.index
    }

    pub fn seek(&mut self, index: u64) {
        self.index = index;
    }

    pub fn next_f64(&mut self) -> f64 {
        to_unit(self.next_u64())
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key ^ self.index.wrapping_mul(GOLDEN));
        self.index = self.index.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
