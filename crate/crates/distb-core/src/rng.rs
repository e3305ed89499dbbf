//! Seedable, portable random-number streams.
//!
//! Every entity in a run owns an independent stream so that the values it
//! draws depend only on `(root_seed, stream_id)` and on how many draws the
//! entity itself has made — never on what other entities do in between.
//!
//! The generator is xoshiro256** (Blackman/Vigna). Stream states are derived
//! from the root seed with the SplitMix64 finalizer:
//!
//! ```text
//! stream_seed = root_seed ^ mix64(stream_id + 0x9E3779B97F4A7C15)
//! state[0..4] = four successive SplitMix64 outputs starting at stream_seed
//! ```
//!
//! Both algorithms have published reference implementations, so the golden
//! values asserted in the tests below are reproducible in any language.

use std::collections::HashMap;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; also used to spread stream ids.
#[inline]
pub fn mix64(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
struct SplitMix64 {
    x: u64,
}

impl SplitMix64 {
    fn new(seed: u64) -> Self {
        Self { x: seed }
    }

    fn next(&mut self) -> u64 {
        self.x = self.x.wrapping_add(GOLDEN_GAMMA);
        mix64(self.x)
    }
}

/// xoshiro256** generator state for one entity stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    s: [u64; 4],
}

impl RngStream {
    /// Derives the stream for `stream_id` under `root_seed`.
    pub fn new(root_seed: u64, stream_id: u64) -> Self {
        let seed = root_seed ^ mix64(stream_id.wrapping_add(GOLDEN_GAMMA));
        let mut sm = SplitMix64::new(seed);
        Self {
            s: [sm.next(), sm.next(), sm.next(), sm.next()],
        }
    }

    /// Next uniform 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform f64 in [0, 1) using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform f64 in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Plain modulo; the bias at n ≪ 2^64 is
    /// far below anything the simulation can resolve.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Bernoulli draw with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        self.next_f64() < p
    }

    /// Fills `buf` with pseudorandom bytes (big-endian u64 chunks).
    pub fn fill_bytes(&mut self, buf: &mut [u8]) {
        for chunk in buf.chunks_mut(8) {
            let v = self.next_u64().to_be_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

/// Per-entity stream registry owned by the kernel.
#[derive(Debug)]
pub struct RngRegistry {
    root_seed: u64,
    streams: HashMap<u64, RngStream>,
}

impl RngRegistry {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            streams: HashMap::new(),
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    /// Registers `stream_id`; idempotent (re-registering keeps the stream).
    pub fn register(&mut self, stream_id: u64) {
        let root = self.root_seed;
        self.streams
            .entry(stream_id)
            .or_insert_with(|| RngStream::new(root, stream_id));
    }

    /// Looks up a registered stream.
    pub fn stream(&mut self, stream_id: u64) -> Result<&mut RngStream, UnknownStream> {
        self.streams
            .get_mut(&stream_id)
            .ok_or(UnknownStream(stream_id))
    }
}

/// Requested stream id was never registered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownStream(pub u64);

impl std::fmt::Display for UnknownStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "unknown rng stream id {}", self.0)
    }
}

impl std::error::Error for UnknownStream {}
