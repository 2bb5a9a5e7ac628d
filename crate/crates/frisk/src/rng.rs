//! Deterministic, splittable random streams.
//!
//! Every stream is a SplitMix64 counter: the state advances by a fixed
//! odd increment and each output is a bijective 64-bit mix of the state.
//! Streams are derived as pure functions of `(master_seed, stream_id)`,
//! so any draw is reproducible from its coordinates alone and parallel
//! workers can never perturb each other's sequences.

use serde::{Deserialize, Serialize};

/// Weyl-sequence increment for SplitMix64 (2^64 / golden ratio, odd).
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Finalizer from SplitMix64: a bijective avalanche mix of a 64-bit word.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Coordinates of one reproducible random stream.
///
/// The same `(master_seed, stream_id)` pair always yields the same stream,
/// and distinct ids yield statistically independent streams. Sub-streams
/// come from [`SeedSpec::child`], which is itself a pure function, so a
/// whole tree of streams is pinned down by the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_id,
        }
    }

    /// Derives the sub-stream spec for `index`. Pure in `(self, index)`:
    /// the same parent and index always name the same child, regardless of
    /// which thread asks or in what order.
    pub fn child(&self, index: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.master_seed,
            stream_id: mix64(self.stream_id ^ mix64(index.wrapping_add(1))),
        }
    }

    /// Instantiates the stream this spec names.
    pub fn stream(&self) -> Stream {
        Stream {
            state: mix64(self.master_seed ^ GOLDEN_GAMMA).wrapping_add(mix64(self.stream_id)),
        }
    }
}

/// A SplitMix64 generator positioned inside one logical stream.
#[derive(Clone, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in the open interval (0, 1): the top 53 bits of the
    /// next word, offset by half an ulp so 0 and 1 are unreachable.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via the inverse CDF applied to [`next_uniform`].
    ///
    /// [`next_uniform`]: Stream::next_uniform
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_uniform())
    }
}

/// Inverse CDF (quantile function) of the standard normal distribution.
///
/// Piecewise minimax rational approximation (Wichura's PPND16). Absolute
/// error is below 1e-9 everywhere in (0, 1); measured against a reference
/// implementation it stays under 3e-15. Panics if `p` is outside (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "inverse_normal_cdf: p must lie in (0, 1), got {p}"
    );

    const A: [f64; 8] = [
        3.3871328727963665,
        133.14166789178438,
        1971.5909503065513,
        13731.69376550946,
        45921.95393154987,
        67265.7709270087,
        33430.57558358813,
        2509.0809287301227,
    ];
    const B: [f64; 8] = [
        1.0,
        42.31333070160091,
        687.1870074920579,
        5394.196021424751,
        21213.794301586597,
        39307.89580009271,
        28729.085735721943,
        5226.495278852854,
    ];
    const C: [f64; 8] = [
        1.4234371107496835,
        4.630337846156546,
        5.769497221460691,
        3.6478483247632045,
        1.2704582524523684,
        0.2417807251774506,
        0.022723844989269184,
        0.0007745450142783414,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053191626637759,
        1.6763848301838038,
        0.6897673349851,
        0.14810397642748008,
        0.015198666563616457,
        0.0005475938084995345,
        1.0507500716444169e-9,
    ];
    const E: [f64; 8] = [
        6.657904643501103,
        5.463784911164114,
        1.7848265399172913,
        0.29656057182850487,
        0.026532189526576124,
        0.0012426609473880784,
        2.7115555687434876e-5,
        2.0103343992922881e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599832206555888,
        0.1369298809227358,
        0.014875361290850615,
        0.0007868691311456133,
        1.8463183175100548e-5,
        1.421511758316446e-7,
        2.0442631033899397e-15,
    ];

    #[inline]
    fn poly(coef: &[f64; 8], x: f64) -> f64 {
        coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}
