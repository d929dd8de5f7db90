//! Deterministic, seedable randomness with the exact raw-integer-to-float
//! constructions the audited samplers consume.
//!
//! The generator is splitmix64 (Steele, Lea & Flood 2014): a 64-bit counter
//! advanced by a fixed odd constant, finalized by an avalanching mixer. It is
//! not cryptographically secure and does not need to be; audits only need
//! bit-for-bit replay from a recorded seed, on any platform.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer (variant 13 of the murmur-style mixers).
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A single-owner pseudorandom stream.
///
/// Streams must not be shared across concurrent contexts; parallel harnesses
/// derive one stream per mechanism run instead (see [`RngStream::derive`]).
#[derive(Debug, Clone)]
pub struct RngStream {
    state: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { state: seed, counter: 0 }
    }

    /// Child stream `i` of `master`, for per-run seeding.
    ///
    /// The index is folded in with the same mixing function the generator
    /// itself uses, so child states are spread over the whole 64-bit orbit
    /// and child sequences do not overlap at any practical draw count.
    /// `i + 1` (wrapping) keeps child 0 distinct from `RngStream::new(master)`.
    pub fn derive(master: u64, i: u64) -> Self {
        let folded = master.wrapping_add(i.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
        RngStream::new(mix64(folded))
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        self.counter += 1;
        mix64(self.state)
    }

    /// Uniform draw over [0, 2^32 - 1].
    pub fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    /// The audited samplers' uniform grid: next_u32 / (2^32 - 1), divided in
    /// binary64 under round-to-nearest-even. The support has exactly 2^32
    /// points including both endpoints 0.0 and 1.0.
    pub fn uniform_unit_double(&mut self) -> f64 {
        unit_double_from_raw(self.next_u32())
    }

    /// Uniform draw over the full signed range [-2^31, 2^31 - 1]: the 32 raw
    /// bits reinterpreted as two's complement (uniform and branch-free).
    pub fn signed_int31(&mut self) -> i32 {
        self.next_u32() as i32
    }

    /// Uniform draw over [0, m) by the multiply-shift reduction. Exact for
    /// power-of-two m; otherwise biased by at most m/2^32 per outcome, which
    /// is far below every statistical tolerance used here.
    pub fn uniform_below(&mut self, m: u32) -> u32 {
        debug_assert!(m > 0);
        ((u64::from(self.next_u32()) * u64::from(m)) >> 32) as u32
    }

    /// Draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.counter
    }
}

/// The grid map a raw 32-bit draw passes through: raw / (2^32 - 1) in
/// binary64. Exposed separately so attacks can enumerate grid neighbors.
pub fn unit_double_from_raw(raw: u32) -> f64 {
    f64::from(raw) / f64::from(u32::MAX)
}
