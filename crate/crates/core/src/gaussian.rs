//! Integer-fed Marsaglia polar Gaussian sampling with a float32 output cast.
//!
//! The sampler draws signed 32-bit integers (V1, V2), maps them onto the unit
//! disc, and emits two Gaussians per accepted pair, castings the binary64
//! intermediates down to binary32 at the very end. Both the integer input
//! grid and the final cast are part of the audited behavior: the window-scan
//! attack (`attacks::phi_gauss`) re-evaluates exactly the kernel below, so
//! every subexpression here is shared with it rather than duplicated.

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest admissible V1^2 + V2^2 (squared radius of the acceptance disc).
pub const POLAR_RADIUS_SQ: u64 = (1u64 << 62) - 1;

/// 2^62 - 1 as a binary64 literal. It is not representable at 53 bits of
/// mantissa and rounds to exactly 2^62; the sampler and the attack divide by
/// the same rounded constant, which is what bit-level agreement requires.
const POLAR_RADIUS_SQ_F: f64 = 4_611_686_018_427_387_903.0;

/// 2^31 - 1 in binary64 (exact).
const INT31_MAX_F: f64 = 2_147_483_647.0;

/// Mean, standard deviation, and output dimension for vector sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussParams {
    pub mu: f64,
    pub sigma: f64,
    pub dim: usize,
}

impl GaussParams {
    pub fn new(mu: f64, sigma: f64, dim: usize) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if sigma <= 0.0 {
            return Err(Error::BadParam("sigma must be positive"));
        }
        if dim == 0 {
            return Err(Error::BadParam("dim must be at least 1"));
        }
        Ok(GaussParams { mu, sigma, dim })
    }
}

/// Two binary32 outputs of one polar-method evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Float32Pair {
    pub y1: f32,
    pub y2: f32,
}

/// U = V/(2^31 - 1) in binary64.
#[inline]
pub(crate) fn int31_unit(v: i32) -> f64 {
    f64::from(v) / INT31_MAX_F
}

/// Per-pair scale factors: 1/sqrt(R) is applied as a division, and
/// mag = sqrt(-2 ln R) with R = (V1^2+V2^2)/(2^62-1).
#[derive(Debug, Clone, Copy)]
pub(crate) struct PolarScale {
    pub root_r: f64,
    pub mag: f64,
}

#[inline]
pub(crate) fn polar_scale(s: u64) -> PolarScale {
    let r = s as f64 / POLAR_RADIUS_SQ_F;
    PolarScale { root_r: r.sqrt(), mag: (-2.0 * r.ln()).sqrt() }
}

/// One output coordinate: binary32 cast of mu + sigma * ((U/sqrt(R)) * mag).
#[inline]
pub(crate) fn polar_coord(u: f64, scale: PolarScale, mu: f64, sigma: f64) -> f32 {
    (mu + sigma * ((u / scale.root_r) * scale.mag)) as f32
}

/// Squared radius of an integer pair, exact in u64 (max 2^63 for the two
/// most negative inputs, which still fits).
#[inline]
pub(crate) fn radius_sq(v1: i32, v2: i32) -> u64 {
    let a = i64::from(v1) * i64::from(v1);
    let b = i64::from(v2) * i64::from(v2);
    a as u64 + b as u64
}

/// Polar-method evaluation of one admissible integer pair.
pub fn marsaglia_pair(v1: i32, v2: i32, mu: f64, sigma: f64) -> Result<Float32Pair> {
    if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::PreconditionViolation("marsaglia_pair: invalid mu/sigma"));
    }
    let s = radius_sq(v1, v2);
    if s == 0 || s > POLAR_RADIUS_SQ {
        return Err(Error::PreconditionViolation(
            "marsaglia_pair: need 0 < v1^2 + v2^2 <= 2^62 - 1",
        ));
    }
    let scale = polar_scale(s);
    Ok(Float32Pair {
        y1: polar_coord(int31_unit(v1), scale, mu, sigma),
        y2: polar_coord(int31_unit(v2), scale, mu, sigma),
    })
}

/// Draws integer pairs until one lands in the disc (acceptance rate π/4),
/// then emits both coordinates of each accepted pair strictly in order.
/// Odd dimensions discard the final pair's second coordinate.
pub fn sample_gaussian_vector(stream: &mut RngStream, params: GaussParams) -> Vec<f32> {
    let mut out = Vec::with_capacity(params.dim);
    while out.len() < params.dim {
        let v1 = stream.signed_int31();
        let v2 = stream.signed_int31();
        let s = radius_sq(v1, v2);
        if s == 0 || s > POLAR_RADIUS_SQ {
            continue;
        }
        let scale = polar_scale(s);
        out.push(polar_coord(int31_unit(v1), scale, params.mu, params.sigma));
        if out.len() < params.dim {
            out.push(polar_coord(int31_unit(v2), scale, params.mu, params.sigma));
        }
    }
    out
}

/// The vector mechanism: clip to the unit L2 ball, then add polar-method
/// noise. Each output coordinate is formed in binary64 as
/// clipped_i + widen(noise_i) and rounded once to binary32, matching the
/// sampler's own final cast.
pub fn gaussian_mechanism(x: &[f64], sigma: f64, stream: &mut RngStream) -> Result<Vec<f32>> {
    if x.is_empty() {
        return Err(Error::BadParam("gaussian_mechanism: empty input"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::BadParam("gaussian_mechanism: sigma must be positive"));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let denom = norm.max(1.0);
    let params = GaussParams::new(0.0, sigma, x.len())?;
    let noise = sample_gaussian_vector(stream, params);
    Ok(x.iter()
        .zip(noise)
        .map(|(&xi, ni)| (xi / denom + f64::from(ni)) as f32)
        .collect())
}
