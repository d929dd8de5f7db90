//! The attack suite: per-sample infeasibility tests for the two flawed
//! samplers, their boosted (OR-composed) forms, the reconstruction attack,
//! the sketch decoders, and the membership-test adapters the auditor plugs
//! into its confusion-matrix harness.
//!
//! Every test here recomputes the mechanism's own kernels (shared functions,
//! not re-derived formulas), because the entire attack surface is bitwise
//! equality of floating-point values and keyed bits.

use crate::error::{Error, Result};
use crate::gaussian::{int31_unit, polar_coord, polar_scale, POLAR_RADIUS_SQ};
use crate::laplace::laplace_inverse_cdf;
use crate::sketch::{hadamard_entry, hash_bucket, obh_bit, CmsRecord, HcmsRecord, ObhRecord};

/// One mechanism output, as consumed by membership tests.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// A scalar release (Laplace number randomizer).
    Scalar(f64),
    /// A binary32 vector release (Gaussian mechanism output).
    Vector32(Vec<f32>),
    /// A binary64 vector release (secret-share views).
    Vector64(Vec<f64>),
    /// A plain bit vector (symmetric one-hot output, reconstructed shares).
    Bits(Vec<u8>),
    Cms(CmsRecord),
    Hcms(HcmsRecord),
    Obh(ObhRecord),
}

/// A hard 0/1 decision rule over observations: 0 means "input was x0",
/// 1 means "input was x1". All randomness lives in the mechanism; the test
/// itself is a deterministic function of its observation.
pub struct MembershipTest {
    pub label: String,
    predict: Box<dyn Fn(&Observation) -> u8 + Send + Sync>,
}

impl MembershipTest {
    pub fn new(
        label: impl Into<String>,
        predict: impl Fn(&Observation) -> u8 + Send + Sync + 'static,
    ) -> Self {
        MembershipTest { label: label.into(), predict: Box::new(predict) }
    }

    pub fn predict(&self, obs: &Observation) -> u8 {
        (self.predict)(obs)
    }
}

impl std::fmt::Debug for MembershipTest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MembershipTest").field("label", &self.label).finish()
    }
}

/// An ordered, duplicate-free candidate list for the decoders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuessSet {
    candidates: Vec<String>,
}

impl GuessSet {
    pub fn new(candidates: Vec<String>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::BadParam("guess set must be non-empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &candidates {
            if !seen.insert(c.as_str()) {
                return Err(Error::BadParam("guess set contains duplicates"));
            }
        }
        Ok(GuessSet { candidates })
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Laplace CDF F(y) = 1/2 (1 + sign(y)(1 - e^{-|y|/λ})), binary64 verbatim.
fn laplace_cdf(y: f64, lambda: f64) -> f64 {
    0.5 * (1.0 + y.signum() * (1.0 - (-y.abs() / lambda).exp()))
}

/// Infeasibility test for the grid Laplace sampler: map the observation back
/// through the CDF and forward through the sampler's own inverse CDF; a
/// genuine sample reproduces itself bit-for-bit, anything off the grid image
/// does not. Returns true when μ is infeasible for y.
pub fn phi_lap(y: f64, mu: f64, lambda: f64) -> bool {
    let u = laplace_cdf(y - mu, lambda);
    match laplace_inverse_cdf(u, lambda) {
        Ok(q) => (mu + q).to_bits() != y.to_bits(),
        // The round trip hit a grid endpoint the sampler redraws; no sample
        // can sit there, so μ is infeasible for this observation.
        Err(_) => true,
    }
}

/// OR of `phi_lap` over repeated releases from the same input.
pub fn boosted_lap_test(samples: &[f64], mu: f64, lambda: f64) -> bool {
    assert!(!samples.is_empty(), "boosted_lap_test needs at least one sample");
    samples.iter().any(|&y| phi_lap(y, mu, lambda))
}

/// Feasible-candidate reconstruction: which domain values survive the
/// boosted test across all observed releases.
pub fn reconstruct_laplace_input(samples: &[f64], domain: &[i64], lambda: f64) -> Vec<i64> {
    assert!(!samples.is_empty(), "reconstruction needs at least one sample");
    domain
        .iter()
        .copied()
        .filter(|&mu| !boosted_lap_test(samples, mu as f64, lambda))
        .collect()
}

/// Binary64 image of (2^31 - 1)^2 / (2^62 - 1), the constant linking the
/// normalized radius R to Z1^2 + Z2^2 in the polar sampler.
const RADIUS_RATIO: f64 = 2_147_483_647.0 * 2_147_483_647.0 / 4_611_686_018_427_387_903.0;

/// Infeasibility test for the integer-fed polar Gaussian sampler.
///
/// Inverts the sampler's algebra to estimate the integer pair (V1, V2) that
/// would have produced (y1, y2) under the claimed (μ, σ²). The float32 cast
/// erases so much precision that a genuine observation is explained not by
/// one integer pair but by a whole region of them; the (2k+1)² window
/// around the estimate reliably intersects that region when μ is the mean
/// the sampler actually used. The observation is feasible if any admissible
/// candidate pushes through the sampler's exact kernel to (y1, y2)
/// bit-for-bit; true (infeasible) means no candidate does.
pub fn phi_gauss(y1: f32, y2: f32, mu: f64, sigma2: f64, k: u32) -> bool {
    assert!(sigma2 > 0.0 && sigma2.is_finite(), "phi_gauss needs sigma2 > 0");
    let sigma = sigma2.sqrt();
    // Residuals form at the observation's own precision. When μ is the
    // sampler's actual mean the binary32 subtraction is the exact inverse
    // of the sampler's final rounding; a wrong μ picks up an extra rounding
    // the window scan then has to absorb.
    let z1 = f64::from(y1 - mu as f32) / sigma;
    let z2 = f64::from(y2 - mu as f32) / sigma;
    if z1 == 0.0 && z2 == 0.0 {
        // A bitwise (μ, μ) pair needs both integers at the disc boundary,
        // a measure-zero event; infeasible is the conservative verdict.
        return true;
    }
    if z2 == 0.0 {
        // The ratio inversion divides by z2; the sampler's kernel is
        // symmetric under coordinate swap, so test the swapped pair.
        return phi_gauss(y2, y1, mu, sigma2, k);
    }
    // R from the exponential identity: Z1^2 + Z2^2 = -2 ln R * (2^62-1)/(2^31-1)^2.
    let r_hat = (-(z1 * z1 + z2 * z2) / 2.0 * RADIUS_RATIO).exp();
    let ratio = z1 / z2;
    // V2 from the radius split; V1 through the ratio with V1/V2 = Z1/Z2.
    // The magnitude uses |V2| so each coordinate carries its own Z's sign,
    // and V1 scales the untruncated magnitude: flooring V2 first would put
    // up to |ratio| cells of error into V1, overrunning the window whenever
    // the observation sits near the V2 axis.
    let v2_mag = (r_hat * 4_611_686_018_427_387_903.0 / (ratio * ratio + 1.0)).sqrt();
    let v2_est = (z2.signum() * v2_mag.trunc()) as i64;
    let v1_est = (z1.signum() * (v2_mag * ratio.abs()).trunc()) as i64;
    !window_reproduces(v1_est, v2_est, y1, y2, mu, sigma, k)
}

/// Scan the Chebyshev window around the estimate, nearest rings first, for
/// an admissible integer pair whose kernel output equals (y1, y2) bitwise.
/// Cells outside the sampler's acceptance region (or the 32-bit integer
/// range) cannot have produced anything and are skipped. Ring order makes
/// genuine observations (whose ambiguity region surrounds the estimate)
/// exit early; the order cannot change the verdict.
fn window_reproduces(c1: i64, c2: i64, y1: f32, y2: f32, mu: f64, sigma: f64, k: u32) -> bool {
    let k = i64::from(k);
    let t1 = y1.to_bits();
    let t2 = y2.to_bits();
    // Per-axis precomputation: the kernel's per-coordinate inputs depend
    // only on that coordinate, so hoisting them is the identical operation.
    let width = (2 * k + 1) as usize;
    let mut sq1 = vec![0u64; width];
    let mut u1 = vec![0f64; width];
    let mut ok1 = vec![false; width];
    let mut sq2 = vec![0u64; width];
    let mut u2 = vec![0f64; width];
    let mut ok2 = vec![false; width];
    for (idx, d) in (-k..=k).enumerate() {
        let w1 = c1 + d;
        if w1 >= i64::from(i32::MIN) && w1 <= i64::from(i32::MAX) {
            ok1[idx] = true;
            sq1[idx] = (w1 * w1) as u64;
            u1[idx] = int31_unit(w1 as i32);
        }
        let w2 = c2 + d;
        if w2 >= i64::from(i32::MIN) && w2 <= i64::from(i32::MAX) {
            ok2[idx] = true;
            sq2[idx] = (w2 * w2) as u64;
            u2[idx] = int31_unit(w2 as i32);
        }
    }
    let try_cell = |i: usize, j: usize| -> bool {
        if !ok1[i] || !ok2[j] {
            return false;
        }
        let s = sq1[i] + sq2[j];
        if s == 0 || s > POLAR_RADIUS_SQ {
            return false;
        }
        let scale = polar_scale(s);
        polar_coord(u1[i], scale, mu, sigma).to_bits() == t1
            && polar_coord(u2[j], scale, mu, sigma).to_bits() == t2
    };
    let center = k as usize;
    if try_cell(center, center) {
        return true;
    }
    for r in 1..=(k as usize) {
        let lo = center - r;
        let hi = center + r;
        for i in lo..=hi {
            if try_cell(i, lo) || try_cell(i, hi) {
                return true;
            }
        }
        for j in (lo + 1)..hi {
            if try_cell(lo, j) || try_cell(hi, j) {
                return true;
            }
        }
    }
    false
}

/// OR of `phi_gauss` over consecutive output pairs of one vector release,
/// exploiting that the sampler emits both coordinates of each accepted pair
/// strictly in order.
pub fn boosted_gauss_test(samples: &[f32], mu: f64, sigma2: f64, k: u32) -> bool {
    assert!(
        samples.len() >= 2 && samples.len() % 2 == 0,
        "boosted_gauss_test needs an even number of samples"
    );
    samples.chunks_exact(2).any(|p| phi_gauss(p[0], p[1], mu, sigma2, k))
}

/// CMS decoder: a guess is plausible if its hashed bucket's bit is set.
pub fn cms_decode(record: &CmsRecord, guesses: &GuessSet, d: u32) -> Result<Vec<usize>> {
    if record.bits.len() != d as usize {
        return Err(Error::ShapeMismatch("cms_decode: record width != d"));
    }
    Ok((0..guesses.len())
        .filter(|&i| {
            let bucket = hash_bucket(record.hash_index, guesses.candidates()[i].as_bytes(), d);
            record.bits[bucket as usize] == 1
        })
        .collect())
}

/// HCMS decoder: a guess is plausible if the reported Hadamard entry matches
/// the one its hashed bucket would produce at the reported coordinate.
pub fn hcms_decode(record: &HcmsRecord, guesses: &GuessSet, d: u32) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, g) in guesses.candidates().iter().enumerate() {
        let h = hash_bucket(record.hash_index, g.as_bytes(), d);
        if hadamard_entry(record.bit_index, h, d)? == record.y {
            out.push(i);
        }
    }
    Ok(out)
}

/// One-bit-histogram plausibility: the keyed bit of the guess at the
/// reported index matches the reported bit.
pub fn obh_plausible(record: &ObhRecord, guess: &[u8]) -> Result<bool> {
    Ok(obh_bit(guess, record.bit_index)? == record.y)
}

/// Decision rule for the two-category secret-share audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrioRule {
    /// Predict X=1 iff the first bit is set (the deployed dashboard's rule).
    FirstBit,
    /// Predict X=1 on (1,0) and X=2 on (0,1). Both ties collapse to X=1:
    /// resolving each tie by its first bit would make this rule identical to
    /// `FirstBit` and lose the two-sided likelihood ratio this rule exists
    /// to expose.
    BothBits,
}

/// Membership prediction from a reconstructed 2-bit vector: 0 means X=1,
/// 1 means X=2.
pub fn prio_membership_test(y: &[u8], rule: PrioRule) -> Result<u8> {
    if y.len() != 2 {
        return Err(Error::ShapeMismatch("prio_membership_test: need exactly 2 bits"));
    }
    Ok(match rule {
        PrioRule::FirstBit => u8::from(y[0] == 0),
        PrioRule::BothBits => match (y[0], y[1]) {
            (1, 0) => 0,
            (0, 1) => 1,
            _ => 0,
        },
    })
}

fn expect_scalar(obs: &Observation) -> f64 {
    match obs {
        Observation::Scalar(y) => *y,
        other => panic!("attack expected a scalar observation, got {other:?}"),
    }
}

fn expect_vector32(obs: &Observation) -> &[f32] {
    match obs {
        Observation::Vector32(y) => y,
        other => panic!("attack expected a binary32 vector observation, got {other:?}"),
    }
}

/// φ_Lap as a membership test: flag x1 whenever the claimed x0 is infeasible.
pub fn phi_lap_membership(mu0: f64, lambda: f64) -> MembershipTest {
    MembershipTest::new("phi_lap", move |obs| u8::from(phi_lap(expect_scalar(obs), mu0, lambda)))
}

/// Boosted polar-Gaussian infeasibility as a membership test against the
/// all-x0 per-coordinate mean.
pub fn boosted_gauss_membership(mu0: f64, sigma2: f64, k: u32) -> MembershipTest {
    MembershipTest::new("boosted_gauss", move |obs| {
        u8::from(boosted_gauss_test(expect_vector32(obs), mu0, sigma2, k))
    })
}

/// The leader's-view attack on Gaussian secret shares: a leader share is
/// payload - mask, with the mask drawn from the flawed polar sampler. Under
/// the zero-payload hypothesis the share widens from an exact float32, so
/// casting back and testing mask-feasibility at μ=0 distinguishes payloads.
pub fn dzk_leader_membership(sigma_ss: f64, k: u32) -> MembershipTest {
    MembershipTest::new("dzk_leader", move |obs| {
        let share = match obs {
            Observation::Vector64(v) => v,
            other => panic!("dzk_leader expects a binary64 vector share, got {other:?}"),
        };
        let as32: Vec<f32> = share.iter().map(|&v| v as f32).collect();
        u8::from(boosted_gauss_test(&as32, 0.0, sigma_ss * sigma_ss, k))
    })
}

/// Contrast decoding rule on CMS records: predict x1 exactly when x1 is
/// plausible and x0 is not.
pub fn cms_contrast_membership(x0: String, x1: String, d: u32) -> MembershipTest {
    MembershipTest::new("cms_contrast", move |obs| {
        let rec = match obs {
            Observation::Cms(r) => r,
            other => panic!("cms attack expects a CMS record, got {other:?}"),
        };
        let hit = |x: &str| rec.bits[hash_bucket(rec.hash_index, x.as_bytes(), d) as usize] == 1;
        u8::from(hit(&x1) && !hit(&x0))
    })
}

/// Exclusion decoding rule on CMS records: predict x1 whenever x0 fails to
/// decode, regardless of x1's own bit.
pub fn cms_exclusion_membership(x0: String, d: u32) -> MembershipTest {
    MembershipTest::new("cms_exclusion", move |obs| {
        let rec = match obs {
            Observation::Cms(r) => r,
            other => panic!("cms attack expects a CMS record, got {other:?}"),
        };
        u8::from(rec.bits[hash_bucket(rec.hash_index, x0.as_bytes(), d) as usize] == 0)
    })
}

/// Contrast decoding rule on HCMS records.
pub fn hcms_contrast_membership(x0: String, x1: String, d: u32) -> MembershipTest {
    MembershipTest::new("hcms_contrast", move |obs| {
        let rec = match obs {
            Observation::Hcms(r) => r,
            other => panic!("hcms attack expects an HCMS record, got {other:?}"),
        };
        let matches = |x: &str| {
            let h = hash_bucket(rec.hash_index, x.as_bytes(), d);
            hadamard_entry(rec.bit_index, h, d).expect("d validated at config load") == rec.y
        };
        u8::from(matches(&x1) && !matches(&x0))
    })
}

/// Contrast plausibility rule on one-bit-histogram records. The agreement
/// rate of the two guesses' keyed bits cancels from the likelihood ratio,
/// which keeps the audited bound at the mechanism's true per-bit budget
/// even when the two AES kernels frequently agree.
pub fn obh_contrast_membership(x0: String, x1: String) -> MembershipTest {
    MembershipTest::new("obh_contrast", move |obs| {
        let rec = match obs {
            Observation::Obh(r) => r,
            other => panic!("obh attack expects an OBH record, got {other:?}"),
        };
        let p1 = obh_plausible(rec, x1.as_bytes()).expect("record index validated");
        let p0 = obh_plausible(rec, x0.as_bytes()).expect("record index validated");
        u8::from(p1 && !p0)
    })
}

/// The two-category share-reconstruction rules as membership tests.
pub fn prio_rule_membership(rule: PrioRule) -> MembershipTest {
    let label = match rule {
        PrioRule::FirstBit => "first_bit",
        PrioRule::BothBits => "both_bits",
    };
    MembershipTest::new(label, move |obs| {
        let bits = match obs {
            Observation::Bits(b) => b,
            other => panic!("prio attack expects reconstructed bits, got {other:?}"),
        };
        prio_membership_test(bits, rule).expect("2-bit reconstruction validated")
    })
}
