//! Desk-scale simulator of the Prio-style client/leader/helper dataflow:
//! additive field sharing of randomized one-hot submissions, seeded Gaussian
//! secret sharing, per-role aggregation, and the DP-disabled configuration.
//!
//! Single process, role-labeled views instead of real networking: every
//! finding this feeds concerns what each role's view contains, not how the
//! bytes moved. Share validity proofs are out of scope and modeled by an
//! always-true flag on the bundle.

use crate::error::{Error, Result};
use crate::gaussian::{sample_gaussian_vector, GaussParams};
use crate::rng::RngStream;
use crate::sketch::{sym_ohe, SketchConfig};

/// Which secret-sharing pipeline the simulator runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecAggMode {
    /// Randomized one-hot submission, additively shared over a prime field.
    PrioSymOhe,
    /// Real-valued payload minus a seeded Gaussian mask (leader gets the
    /// difference, helper gets the seed).
    PrioPlusPlus,
    /// Raw one-hot submission, field-shared with no randomization.
    DpDisabled,
}

/// Which party's view (or their union) a query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareSide {
    Leader,
    Helper,
    /// Both shares at one endpoint: the colluding-servers view.
    Combined,
}

/// Simulation parameters shared by every client in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecAggConfig {
    pub mode: SecAggMode,
    /// Randomized-response level for PrioSymOhe; ignored in DpDisabled.
    pub epsilon: f64,
    /// Payload dimension (one-hot width or real vector length).
    pub d: u32,
    /// Additive-sharing field modulus.
    pub field_prime: u64,
    /// Mask standard deviation for PrioPlusPus Gaussian sharing.
    pub sigma_ss: f64,
    pub n_clients: u32,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut f = 3u64;
    while f * f <= n {
        if n % f == 0 {
            return false;
        }
        f += 2;
    }
    true
}

impl SecAggConfig {
    pub fn new(
        mode: SecAggMode,
        epsilon: f64,
        d: u32,
        field_prime: u64,
        sigma_ss: f64,
        n_clients: u32,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::BadParam("secagg: d must be at least 1"));
        }
        if n_clients == 0 {
            return Err(Error::BadParam("secagg: n_clients must be at least 1"));
        }
        if !is_prime(field_prime) {
            return Err(Error::BadParam("secagg: field_prime must be prime"));
        }
        // One-hot payload sums stay below p, so combined reconstruction
        // never wraps and equals the exact integer sum.
        if field_prime <= u64::from(n_clients) {
            return Err(Error::BadParam("secagg: field_prime must exceed n_clients"));
        }
        if mode == SecAggMode::PrioSymOhe && !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::BadParam("secagg: epsilon must be finite and nonnegative"));
        }
        if mode == SecAggMode::PrioPlusPlus && !(sigma_ss.is_finite() && sigma_ss > 0.0) {
            return Err(Error::BadParam("secagg: sigma_ss must be positive"));
        }
        Ok(SecAggConfig { mode, epsilon, d, field_prime, sigma_ss, n_clients })
    }

    /// Mersenne default: fits a 64-bit multiply with room to spare, and any
    /// prime above the payload range behaves identically here.
    pub const DEFAULT_FIELD_PRIME: u64 = 2_147_483_647;
}

/// Two additive shares of an integer vector over the field mod p.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldShareBundle {
    pub leader_share: Vec<u64>,
    pub helper_share: Vec<u64>,
    pub p: u64,
    /// Stand-in for the share validity proof the real protocol attaches.
    pub valid: bool,
}

impl FieldShareBundle {
    pub fn dim(&self) -> usize {
        self.leader_share.len()
    }
}

/// Leader's real-valued share plus the helper's mask seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussShareBundle {
    /// y - V in binary64, where V is the seeded float32 Gaussian mask.
    pub leader_share: Vec<f64>,
    /// Expanding this seed regenerates V exactly.
    pub helper_seed: u64,
    pub sigma_ss: f64,
}

/// Split an integer payload into (uniform, payload - uniform) mod p.
/// The leader share alone is exactly uniform over the field, so either
/// single view is independent of the payload.
pub fn field_share(payload: &[u64], p: u64, stream: &mut RngStream) -> Result<FieldShareBundle> {
    if !is_prime(p) || p > u64::from(u32::MAX) {
        return Err(Error::BadParam("field_share: p must be a prime below 2^32"));
    }
    if payload.iter().any(|&v| v >= p) {
        return Err(Error::PayloadOutOfField("field_share: entries must lie in [0, p)"));
    }
    let mut leader = Vec::with_capacity(payload.len());
    let mut helper = Vec::with_capacity(payload.len());
    for &v in payload {
        let r = u64::from(stream.uniform_below(p as u32));
        leader.push(r);
        helper.push((v + p - r) % p);
    }
    Ok(FieldShareBundle { leader_share: leader, helper_share: helper, p, valid: true })
}

/// Recombine both shares: (leader + helper) mod p, the exact payload.
pub fn field_reconstruct(bundle: &FieldShareBundle) -> Result<Vec<u64>> {
    if bundle.leader_share.len() != bundle.helper_share.len() {
        return Err(Error::ShapeMismatch("field_reconstruct: share lengths differ"));
    }
    Ok(bundle
        .leader_share
        .iter()
        .zip(&bundle.helper_share)
        .map(|(&a, &b)| (a + b) % bundle.p)
        .collect())
}

/// One client submission: encode x (1-based category), then field-share.
/// PrioSymOhe randomizes each bit at the configured ε; DpDisabled ships the
/// raw one-hot vector, which is the deployment posture this simulator
/// exists to interrogate.
pub fn prio_client_submit(
    x: u32,
    config: &SecAggConfig,
    stream: &mut RngStream,
) -> Result<FieldShareBundle> {
    if x < 1 || x > config.d {
        return Err(Error::OutOfDomain("prio_client_submit: x must lie in [1, d]"));
    }
    let bits: Vec<u8> = match config.mode {
        SecAggMode::PrioSymOhe => {
            let sketch = SketchConfig::new(config.epsilon, config.d, 1)?;
            sym_ohe(x, &sketch, stream)?
        }
        SecAggMode::DpDisabled => {
            (0..config.d).map(|b| u8::from(b == x - 1)).collect()
        }
        SecAggMode::PrioPlusPlus => {
            return Err(Error::BadParam(
                "prio_client_submit: PrioPlusPlus shares real vectors, use gauss_secret_share",
            ));
        }
    };
    let payload: Vec<u64> = bits.into_iter().map(u64::from).collect();
    field_share(&payload, config.field_prime, stream)
}

/// Split a real vector as (y - V, seed) where V is a fresh seeded run of
/// the float32 Gaussian sampler at scale sigma_ss. The mask is that exact
/// flawed sampler on purpose: the leader-share view inherits its grid.
pub fn gauss_secret_share(
    y: &[f64],
    sigma_ss: f64,
    stream: &mut RngStream,
) -> Result<GaussShareBundle> {
    if y.is_empty() {
        return Err(Error::BadParam("gauss_secret_share: empty payload"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let seed = (u64::from(stream.next_u32()) << 32) | u64::from(stream.next_u32());
    let mask = expand_mask(seed, sigma_ss, y.len())?;
    let leader: Vec<f64> = y.iter().zip(&mask).map(|(&v, &m)| v - f64::from(m)).collect();
    Ok(GaussShareBundle { leader_share: leader, helper_seed: seed, sigma_ss })
}

/// Deterministic mask expansion: the helper's entire share is this seed.
pub fn expand_mask(seed: u64, sigma_ss: f64, d: usize) -> Result<Vec<f32>> {
    let params = GaussParams::new(0.0, sigma_ss, d)?;
    let mut stream = RngStream::new(seed);
    Ok(sample_gaussian_vector(&mut stream, params))
}

/// Recombine (y - V) + V. Shares are reals, so recovery is exact only to
/// binary64 rounding of the subtraction, about an ulp per coordinate.
pub fn gauss_reconstruct(bundle: &GaussShareBundle) -> Result<Vec<f64>> {
    let mask = expand_mask(bundle.helper_seed, bundle.sigma_ss, bundle.leader_share.len())?;
    Ok(bundle
        .leader_share
        .iter()
        .zip(&mask)
        .map(|(&l, &m)| l + f64::from(m))
        .collect())
}

/// Per-side field aggregation: what each server publishes, or the exact
/// payload sum when the sides are combined.
pub fn aggregate_field(bundles: &[FieldShareBundle], side: ShareSide) -> Result<Vec<u64>> {
    let first = bundles.first().ok_or(Error::ShapeMismatch("aggregate_field: no bundles"))?;
    let d = first.dim();
    let p = first.p;
    if bundles.iter().any(|b| b.dim() != d || b.helper_share.len() != d || b.p != p) {
        return Err(Error::ShapeMismatch("aggregate_field: inhomogeneous bundles"));
    }
    let mut acc = vec![0u64; d];
    for b in bundles {
        for (slot, i) in acc.iter_mut().zip(0..d) {
            let add = match side {
                ShareSide::Leader => b.leader_share[i],
                ShareSide::Helper => b.helper_share[i],
                ShareSide::Combined => (b.leader_share[i] + b.helper_share[i]) % p,
            };
            *slot = (*slot + add) % p;
        }
    }
    Ok(acc)
}

/// Per-side aggregation of Gaussian bundles. Combined recovers the payload
/// sum up to accumulated binary64 rounding.
pub fn aggregate_gauss(bundles: &[GaussShareBundle], side: ShareSide) -> Result<Vec<f64>> {
    let first = bundles.first().ok_or(Error::ShapeMismatch("aggregate_gauss: no bundles"))?;
    let d = first.leader_share.len();
    if bundles.iter().any(|b| b.leader_share.len() != d) {
        return Err(Error::ShapeMismatch("aggregate_gauss: inhomogeneous bundles"));
    }
    let mut acc = vec![0f64; d];
    for b in bundles {
        match side {
            ShareSide::Leader => {
                for (slot, &l) in acc.iter_mut().zip(&b.leader_share) {
                    *slot += l;
                }
            }
            ShareSide::Helper => {
                let mask = expand_mask(b.helper_seed, b.sigma_ss, d)?;
                for (slot, &m) in acc.iter_mut().zip(&mask) {
                    *slot += f64::from(m);
                }
            }
            ShareSide::Combined => {
                let y = gauss_reconstruct(b)?;
                for (slot, &v) in acc.iter_mut().zip(&y) {
                    *slot += v;
                }
            }
        }
    }
    Ok(acc)
}
