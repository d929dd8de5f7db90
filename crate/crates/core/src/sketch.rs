//! Discrete local-DP mechanisms: symmetric one-hot encoding, count-mean
//! sketch clients (plain and Hadamard), and the one-bit histogram, plus the
//! hashing, Hadamard, and AES kernels they share with the decoders.
//!
//! All keyed kernels are deterministic pure functions; every byte encoding
//! (j serialization, AES plaintext, ciphertext bit order) is fixed here so
//! the decoders in `attacks` recompute bit-identical values.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Privacy budget and sketch geometry: d output bits, k hash functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchConfig {
    pub epsilon: f64,
    pub d: u32,
    pub k: u32,
}

impl SketchConfig {
    pub fn new(epsilon: f64, d: u32, k: u32) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if epsilon <= 0.0 {
            return Err(Error::BadParam("epsilon must be positive"));
        }
        if d == 0 {
            return Err(Error::BadParam("bit count d must be at least 1"));
        }
        if k == 0 {
            return Err(Error::BadParam("hash count k must be at least 1"));
        }
        Ok(SketchConfig { epsilon, d, k })
    }
}

/// Output of one count-mean-sketch client submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmsRecord {
    pub bits: Vec<u8>,
    pub hash_index: u32,
}

/// Output of one Hadamard count-mean-sketch client submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HcmsRecord {
    pub y: i8,
    pub hash_index: u32,
    pub bit_index: u32,
}

/// Output of one one-bit-histogram client submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObhRecord {
    pub y: u8,
    pub bit_index: u32,
}

/// e^ε/(e^ε + 1), the probability of keeping a bit unflipped.
pub fn keep_prob(epsilon: f64) -> f64 {
    let e = epsilon.exp();
    if e.is_infinite() {
        return 1.0;
    }
    e / (e + 1.0)
}

/// Biased bit channel: keep `bit` with probability p, flip it otherwise.
/// The comparison is strict so p = 1.0 never flips.
fn randomize_bit(bit: u8, p: f64, stream: &mut RngStream) -> u8 {
    if stream.uniform_unit_double() < p {
        bit
    } else {
        1 - bit
    }
}

/// Symmetric one-hot encoder: one-hot at position x (1-based), then every
/// bit independently kept with probability keep_prob(ε).
pub fn sym_ohe(x: u32, config: &SketchConfig, stream: &mut RngStream) -> Result<Vec<u8>> {
    if x < 1 || x > config.d {
        return Err(Error::OutOfDomain("sym_ohe: x must lie in [1, d]"));
    }
    let p = keep_prob(config.epsilon);
    let mut out = Vec::with_capacity(config.d as usize);
    for b in 0..config.d {
        let one_hot = u8::from(b == x - 1);
        out.push(randomize_bit(one_hot, p, stream));
    }
    Ok(out)
}

/// Hamming distance between equal-length bit vectors.
pub fn hamming(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch("hamming: unequal lengths"));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// The sketch hash family: SHA-256 over j (8-byte big-endian) concatenated
/// with the raw bytes of x; first 8 digest bytes big-endian, reduced mod d.
/// Modulo bias is at most d/2^64, irrelevant at every d used here.
pub fn hash_bucket(j: u32, x: &[u8], d: u32) -> u32 {
    let mut hasher = Sha256::new();
    hasher.update(u64::from(j).to_be_bytes());
    hasher.update(x);
    let digest = hasher.finalize();
    let head = u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
    (head % u64::from(d)) as u32
}

/// Count-mean-sketch client: uniform hash index, one-hot at the hashed
/// bucket, then per-bit flips at keep_prob(ε/2). The halved exponent is the
/// deployed algorithm's own budget split, not an error.
pub fn cms_client(x: &[u8], config: &SketchConfig, stream: &mut RngStream) -> CmsRecord {
    let j = stream.uniform_below(config.k);
    let bucket = hash_bucket(j, x, config.d);
    let p = keep_prob(config.epsilon / 2.0);
    let mut bits = Vec::with_capacity(config.d as usize);
    for b in 0..config.d {
        let one_hot = u8::from(b == bucket);
        bits.push(randomize_bit(one_hot, p, stream));
    }
    CmsRecord { bits, hash_index: j }
}

/// Entry (l, h) of the d×d Sylvester Hadamard matrix: (-1)^popcount(l & h).
pub fn hadamard_entry(l: u32, h: u32, d: u32) -> Result<i8> {
    if !d.is_power_of_two() {
        return Err(Error::BadParam("hadamard_entry: d must be a power of two"));
    }
    if l >= d || h >= d {
        return Err(Error::OutOfDomain("hadamard_entry: indices must lie in [0, d)"));
    }
    Ok(if (l & h).count_ones() % 2 == 0 { 1 } else { -1 })
}

/// Hadamard count-mean-sketch client: uniform hash index j and coordinate l,
/// reports the (l, hash bucket) Hadamard entry kept with probability
/// keep_prob(ε), negated otherwise.
pub fn hcms_client(x: &[u8], config: &SketchConfig, stream: &mut RngStream) -> Result<HcmsRecord> {
    if !config.d.is_power_of_two() {
        return Err(Error::BadParam("hcms_client: d must be a power of two"));
    }
    let j = stream.uniform_below(config.k);
    let h = hash_bucket(j, x, config.d);
    let l = stream.uniform_below(config.d);
    let entry = hadamard_entry(l, h, config.d)?;
    let y = if stream.uniform_unit_double() < keep_prob(config.epsilon) {
        entry
    } else {
        -entry
    };
    Ok(HcmsRecord { y, hash_index: j, bit_index: l })
}

/// The one-bit-histogram keyed bit: key = first 16 bytes of SHA-256(x),
/// plaintext = l as a 16-byte big-endian block, V = one AES-128 block
/// encryption; the result is bit l of V, reading bit (7 - l mod 8) of byte
/// floor(l/8). Deterministic in (x, l).
pub fn obh_bit(x: &[u8], l: u32) -> Result<u8> {
    if l >= 128 {
        return Err(Error::OutOfDomain("obh_bit: l must lie in [0, 128)"));
    }
    let digest = Sha256::digest(x);
    let key = GenericArray::from_slice(&digest[..16]);
    let cipher = Aes128::new(key);
    let mut block = [0u8; 16];
    block[8..].copy_from_slice(&u64::from(l).to_be_bytes());
    let mut block = GenericArray::from(block);
    cipher.encrypt_block(&mut block);
    let byte = block[(l / 8) as usize];
    Ok((byte >> (7 - l % 8)) & 1)
}

/// One-bit-histogram client: uniform index l, keyed bit kept with
/// probability keep_prob(ε), flipped otherwise. d is capped at 128 because
/// the index addresses a single AES block.
pub fn one_bit_histogram(
    x: &[u8],
    config: &SketchConfig,
    stream: &mut RngStream,
) -> Result<ObhRecord> {
    if config.d > 128 {
        return Err(Error::OutOfDomain("one_bit_histogram: d must be at most 128"));
    }
    let l = stream.uniform_below(config.d);
    let bit = obh_bit(x, l)?;
    let y = randomize_bit(bit, keep_prob(config.epsilon), stream);
    Ok(ObhRecord { y, bit_index: l })
}
