//! Bayesian trade-off-curve auditing: turns an attack's confusion matrix
//! into a certified epsilon lower bound.
//!
//! The machinery has four layers. Trade-off curves β = f(α) describe how
//! private a mechanism is (higher curve = more private). `delta_of_f` and
//! `eps_of_f` convert between curves and (ε, δ) claims. `posterior_p_f`
//! scores how compatible an observed confusion matrix is with a curve, using
//! independent Jeffreys Beta posteriors for the attack's false-positive and
//! false-negative rates and the two-sided consistency band
//! f(α) ≤ β ≤ 1 − f(1−α). `theta_star` then finds the weakest curve in a
//! family that the data still rejects at level γ, and `audit_epsilon_lb`
//! drives the whole loop from seeded mechanism runs to a replayable report.

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::Beta;

use crate::attacks::{MembershipTest, Observation};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Monte-Carlo resolution for the band posterior. Documented floor: below
/// 10^4 the rejection decision at γ = 0.05 is too noisy to be replayable.
pub const MC_SAMPLES_DEFAULT: usize = 100_000;
const MC_SAMPLES_FLOOR: usize = 10_000;

/// Epsilon search ceiling for `eps_of_f`; reports saturate here rather than
/// chase unbounded curves.
pub const EPS_SEARCH_MAX: f64 = 64.0;

/// Standard normal CDF Φ(x) = erfc(−x/√2)/2, accurate to ~1 ulp down to the
/// subnormal range. The conversions below probe tail probabilities as small
/// as 1e-300, which rules out lower-precision erf approximations.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() * 0.398_942_280_401_432_7
}

/// Wichura's AS241 rational approximation to Φ^{-1} (the PPND16 variant,
/// coefficients verbatim from the published algorithm).
#[rustfmt::skip]
fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2509.0809287301227 * r + 33430.57558358813) * r
            + 67265.7709270087) * r + 45921.95393154987) * r
            + 13731.69376550946) * r + 1971.5909503065513) * r
            + 133.14166789178438) * r + 3.3871328727963665) * q;
        let den = ((((((5226.495278852854 * r + 28729.085735721943) * r
            + 39307.89580009271) * r + 21213.794301586597) * r
            + 5394.196021424751) * r + 687.1870074920579) * r
            + 42.31333070160091) * r + 1.0;
        return num / den;
    }
    let tail = if q <= 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((0.0007745450142783414 * r + 0.022723844989269184) * r
            + 0.2417807251774506) * r + 1.2704582524523684) * r
            + 3.6478483247632045) * r + 5.769497221460691) * r
            + 4.630337846156546) * r + 1.4234371107496835;
        let den = ((((((1.0507500716444169e-9 * r + 0.0005475938084995345) * r
            + 0.015198666563616457) * r + 0.14810397642748008) * r
            + 0.6897673349851) * r + 1.6763848301838038) * r
            + 2.053191626637759) * r + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.0103343992922881e-7 * r + 2.7115555687434876e-5) * r
            + 0.0012426609473880784) * r + 0.026532189526576124) * r
            + 0.29656057182850487) * r + 1.7848265399172913) * r
            + 5.463784911164114) * r + 6.657904643501103;
        let den = ((((((2.0442631033899397e-15 * r + 1.421511758316446e-7) * r
            + 1.8463183175100548e-5) * r + 0.0007868691311456133) * r
            + 0.014875361290850615) * r + 0.1369298809227358) * r
            + 0.599832206555888) * r + 1.0;
        num / den
    };
    if q < 0.0 { -x } else { x }
}

/// Standard normal quantile Φ^{-1}: AS241 start, then two Newton steps
/// against `norm_cdf` so quantile and CDF agree to full double precision.
pub fn norm_quantile(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "norm_quantile needs p in [0,1]");
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = as241(p);
    for _ in 0..2 {
        let density = norm_pdf(x);
        if density < f64::MIN_POSITIVE {
            break;
        }
        let err = norm_cdf(x) - p;
        if !err.is_finite() {
            break;
        }
        x -= err / density;
    }
    x
}

/// Φ^{-1}(1−α) without forming 1−α: the subtraction quantizes tail masses
/// below ~1e-16 to zero, and the conversions need those tails intact.
fn upper_quantile(alpha: f64) -> f64 {
    if alpha <= 0.5 {
        -norm_quantile(alpha)
    } else {
        norm_quantile(1.0 - alpha)
    }
}

/// β = max{0, 1 − δ − e^ε α, e^{−ε}(1 − δ − α)}: the trade-off curve of an
/// (ε, δ)-DP claim.
pub fn f_eps_delta(eps: f64, delta: f64, alpha: f64) -> f64 {
    assert!(eps >= 0.0 && eps.is_finite(), "f_eps_delta needs eps >= 0");
    assert!((0.0..=1.0).contains(&delta), "f_eps_delta needs delta in [0,1]");
    assert!((0.0..=1.0).contains(&alpha), "f_eps_delta needs alpha in [0,1]");
    let hi = 1.0 - delta - eps.exp() * alpha;
    let lo = (-eps).exp() * (1.0 - delta - alpha);
    hi.max(lo).max(0.0)
}

/// β = Φ(Φ^{-1}(1−α) − μ): optimal trade-off between N(0,1) and N(μ,1).
pub fn f_gauss(mu: f64, alpha: f64) -> f64 {
    assert!(mu >= 0.0 && mu.is_finite(), "f_gauss needs mu >= 0");
    assert!((0.0..=1.0).contains(&alpha), "f_gauss needs alpha in [0,1]");
    if alpha <= 0.0 {
        return 1.0;
    }
    if alpha >= 1.0 {
        return 0.0;
    }
    norm_cdf(upper_quantile(alpha) - mu)
}

/// Optimal trade-off between Lap(0,1) and Lap(μ,1). The likelihood ratio is
/// monotone and flat outside [0, μ], which yields three branches:
/// β = 1 − e^μ α below α = e^{−μ}/2, β = e^{−μ}/(4α) up to α = 1/2, and
/// β = e^{−μ}(1 − α) beyond. Validated against a Monte-Carlo
/// Neyman-Pearson oracle in the tests.
pub fn f_laplace(mu: f64, alpha: f64) -> f64 {
    assert!(mu >= 0.0 && mu.is_finite(), "f_laplace needs mu >= 0");
    assert!((0.0..=1.0).contains(&alpha), "f_laplace needs alpha in [0,1]");
    let neg = (-mu).exp();
    if alpha < 0.5 * neg {
        1.0 - mu.exp() * alpha
    } else if alpha <= 0.5 {
        neg / (4.0 * alpha)
    } else {
        neg * (1.0 - alpha)
    }
}

/// The three parametric families the auditor searches over. θ is ε for
/// `EpsDelta` (at a fixed δ) and the mean shift μ for the other two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    EpsDelta,
    Gaussian,
    Laplace,
}

impl CurveFamily {
    /// Search ceiling for θ. Beyond these the posterior can no longer
    /// distinguish curves at audit-scale n, so reports flag saturation
    /// instead of searching further.
    pub fn theta_max(self) -> f64 {
        match self {
            CurveFamily::EpsDelta => 64.0,
            CurveFamily::Gaussian | CurveFamily::Laplace => 32.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            CurveFamily::EpsDelta => "eps_delta",
            CurveFamily::Gaussian => "gaussian",
            CurveFamily::Laplace => "laplace",
        }
    }

    /// The family member at θ. δ shapes only `EpsDelta` curves; the shift
    /// families ignore it.
    pub fn curve(self, theta: f64, delta: f64) -> Result<TradeoffCurve> {
        TradeoffCurve::new(self, theta, delta)
    }
}

/// One trade-off curve β = f(α): convex, non-increasing, f(α) ≤ 1−α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffCurve {
    pub family: CurveFamily,
    pub theta: f64,
    pub delta: f64,
}

impl TradeoffCurve {
    pub fn new(family: CurveFamily, theta: f64, delta: f64) -> Result<Self> {
        if !theta.is_finite() || theta < 0.0 {
            return Err(Error::BadParam("curve parameter theta must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::BadParam("curve delta must lie in [0,1]"));
        }
        Ok(TradeoffCurve { family, theta, delta })
    }

    pub fn eps_delta(eps: f64, delta: f64) -> Result<Self> {
        Self::new(CurveFamily::EpsDelta, eps, delta)
    }

    pub fn gaussian(mu: f64) -> Result<Self> {
        Self::new(CurveFamily::Gaussian, mu, 0.0)
    }

    pub fn laplace(mu: f64) -> Result<Self> {
        Self::new(CurveFamily::Laplace, mu, 0.0)
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        match self.family {
            CurveFamily::EpsDelta => f_eps_delta(self.theta, self.delta, alpha),
            CurveFamily::Gaussian => f_gauss(self.theta, alpha),
            CurveFamily::Laplace => f_laplace(self.theta, alpha),
        }
    }
}

/// δ_f(ε) = sup_α 1 − αe^ε − f(α): the smallest δ at which the curve
/// satisfies (ε, δ)-DP. The objective is concave in α (f is convex), hence
/// unimodal, and unimodality survives the monotone substitution α = e^t. The
/// search runs over t because the maximizer can sit at Gaussian-tail scale
/// (α* ≈ e^{−q²/2} with q = (ε + θ²/2)/θ, e.g. ~1e-71 for θ = 32, ε = 64):
/// any fixed absolute grid in α misses it, while log-space keeps relative
/// resolution all the way down to α ≈ 1e-300.
///
/// A plain ternary search is not safe here: on the far-left foothills the
/// computed g quantizes (the α terms fall below one ulp of the constant
/// part), producing exact ties and slowly-decreasing plateaus that steer the
/// bracketing away from the peak. So the search first scans a fixed log
/// grid, whose argmax only compares values, and then ternary-refines inside
/// the two adjacent cells, where the objective is strictly unimodal. The
/// grid cannot skip a peak: in log-space the bump width is of the order of
/// its height scale, many grid cells wide. The one blind spot is a maximizer
/// buried where the curve itself rounds to 1.0; that needs
/// ε > θ²/2 + 8.3θ, where the true supremum is below Φ(−8.3) ≈ 5e-17,
/// negligible against any δ the auditor resolves. Endpoints α ∈ {0, 1} are
/// checked separately.
pub fn delta_of_f(curve: &TradeoffCurve, eps: f64) -> f64 {
    assert!(eps >= 0.0 && eps.is_finite(), "delta_of_f needs eps >= 0");
    let scale = eps.exp();
    let g = |alpha: f64| 1.0 - alpha * scale - curve.eval(alpha);
    // exp(-690) is just above the smallest double whose normal-CDF helpers
    // stay in the normal floating-point range.
    const T_LO: f64 = -690.0;
    const CELLS: usize = 4096;
    let t_at = |i: usize| T_LO * (1.0 - i as f64 / CELLS as f64);
    let mut best_i = 0;
    let mut best_g = f64::NEG_INFINITY;
    for i in 0..=CELLS {
        let v = g(t_at(i).exp());
        if v > best_g {
            best_g = v;
            best_i = i;
        }
    }
    let mut lo = t_at(best_i.saturating_sub(1));
    let mut hi = t_at((best_i + 1).min(CELLS));
    while hi - lo > 1e-12 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if g(m1.exp()) < g(m2.exp()) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let best = g((0.5 * (lo + hi)).exp()).max(best_g).max(g(0.0)).max(g(1.0));
    best.clamp(0.0, 1.0)
}

/// Right inverse of δ_f: the smallest ε in [0, 64] whose δ_f(ε) is at most
/// the requested δ, bisected to 1e-6. δ_f is non-increasing in ε, so the
/// bisection is well posed.
pub fn eps_of_f(curve: &TradeoffCurve, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::BadParam("eps_of_f needs delta in [0,1)"));
    }
    if delta_of_f(curve, 0.0) <= delta {
        return Ok(0.0);
    }
    if delta_of_f(curve, EPS_SEARCH_MAX) > delta {
        return Err(Error::Unbounded);
    }
    let (mut lo, mut hi) = (0.0_f64, EPS_SEARCH_MAX);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if delta_of_f(curve, mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // hi is the certified side: delta_of_f(hi) <= delta holds.
    Ok(hi)
}

/// Attack outcome counts over an audit's runs. `fn_` carries the reserved
/// word's JSON name via rename.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    /// Both posteriors need at least one observation on their side.
    pub fn validate(&self) -> Result<()> {
        if self.tn + self.fp == 0 || self.fn_ + self.tp == 0 {
            return Err(Error::PreconditionViolation(
                "confusion matrix needs at least one run in each secret class",
            ));
        }
        Ok(())
    }

    /// Jeffreys posteriors α ~ Beta(1/2 + FP, 1/2 + TN) and
    /// β ~ Beta(1/2 + FN, 1/2 + TP), drawn as one α block then one β block
    /// from a ChaCha stream seeded with `mc_seed`. The draw order is part of
    /// the replay contract.
    fn posterior_draws(&self, mc_samples: usize, mc_seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(mc_seed);
        let fpr = Beta::new(0.5 + self.fp as f64, 0.5 + self.tn as f64)
            .expect("shape parameters are positive");
        let fnr = Beta::new(0.5 + self.fn_ as f64, 0.5 + self.tp as f64)
            .expect("shape parameters are positive");
        let alphas: Vec<f64> = (0..mc_samples).map(|_| fpr.sample(&mut rng)).collect();
        let betas: Vec<f64> = (0..mc_samples).map(|_| fnr.sample(&mut rng)).collect();
        (alphas, betas)
    }
}

fn check_mc_samples(mc_samples: usize) -> Result<()> {
    if mc_samples < MC_SAMPLES_FLOOR {
        return Err(Error::BadParam("mc_samples below the documented 10^4 floor"));
    }
    Ok(())
}

/// Posterior probability that the attack's (α, β) pair is consistent with
/// the curve: the fraction of posterior draws inside the two-sided band
/// f(α) ≤ β ≤ 1 − f(1−α). The upper edge covers the label-swapped attack,
/// so a test that is too good in either direction leaves the band.
pub fn posterior_p_f(
    confusion: &ConfusionMatrix,
    curve: &TradeoffCurve,
    mc_samples: usize,
    mc_seed: u64,
) -> Result<f64> {
    confusion.validate()?;
    check_mc_samples(mc_samples)?;
    let (alphas, betas) = confusion.posterior_draws(mc_samples, mc_seed);
    let inside = alphas
        .iter()
        .zip(&betas)
        .filter(|&(&a, &b)| {
            let lo = curve.eval(a);
            let hi = 1.0 - curve.eval(1.0 - a);
            lo <= b && b <= hi
        })
        .count();
    Ok(inside as f64 / mc_samples as f64)
}

/// Largest θ in the family whose curve the data still rejects at level γ
/// (band posterior ≤ γ), i.e. the weakest rejected privacy claim. One fixed
/// posterior sample set is reused across every θ probe (common random
/// numbers): the bands nest as θ grows, so with shared samples p(θ) is a
/// monotone step function and bisection is exact up to the 1e-7 grid.
///
/// θ = 0 is rejected by construction whenever the posterior is continuous
/// (its band is the measure-zero line β = 1−α), so an uninformative attack
/// comes back with a small positive θ* — the γ-quantile of the band
/// widths — rather than exactly 0. The explicit 0 return covers the
/// remaining corner where even that fails.
pub fn theta_star(
    family: CurveFamily,
    confusion: &ConfusionMatrix,
    gamma: f64,
    mc_samples: usize,
    mc_seed: u64,
) -> Result<f64> {
    confusion.validate()?;
    check_mc_samples(mc_samples)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::BadParam("gamma must lie in (0,1)"));
    }
    let (alphas, betas) = confusion.posterior_draws(mc_samples, mc_seed);

    // For the Gaussian family the band test has a closed preimage:
    // Φ(q−θ) ≤ β ≤ Φ(q+θ) with q = Φ^{-1}(1−α), i.e. |q − Φ^{-1}(β)| ≤ θ.
    // Precomputing that per-sample threshold removes all special functions
    // from the bisection loop.
    let gauss_thresholds: Vec<f64> = if family == CurveFamily::Gaussian {
        alphas
            .iter()
            .zip(&betas)
            .map(|(&a, &b)| (upper_quantile(a) - norm_quantile(b)).abs())
            .collect()
    } else {
        Vec::new()
    };

    let p_at = |theta: f64| -> f64 {
        let inside = match family {
            CurveFamily::Gaussian => {
                gauss_thresholds.iter().filter(|&&t| t <= theta).count()
            }
            _ => {
                let curve = family.curve(theta, 0.0).expect("theta within search range");
                alphas
                    .iter()
                    .zip(&betas)
                    .filter(|&(&a, &b)| {
                        let lo = curve.eval(a);
                        let hi = 1.0 - curve.eval(1.0 - a);
                        lo <= b && b <= hi
                    })
                    .count()
            }
        };
        inside as f64 / mc_samples as f64
    };

    let theta_max = family.theta_max();
    if p_at(theta_max) <= gamma {
        // Even the weakest curve in range is rejected: saturate.
        return Ok(theta_max);
    }
    if p_at(0.0) > gamma {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, theta_max);
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if p_at(mid) <= gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // lo is the certified side: p(lo) <= gamma holds.
    Ok(lo)
}

/// Everything an audit needs beyond the mechanism, test, and input pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditParams {
    pub n: u32,
    pub family: CurveFamily,
    pub gamma: f64,
    pub delta: f64,
    pub claimed_epsilon: f64,
    pub master_seed: u64,
    pub mc_samples: usize,
}

/// Replayable audit outcome. Everything that went into the verdict is
/// recorded; rebuilding the report from the same parameters is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub eps_lb: f64,
    pub delta: f64,
    pub gamma: f64,
    pub family: CurveFamily,
    pub theta_star: f64,
    #[serde(flatten)]
    pub confusion: ConfusionMatrix,
    pub n_runs: u32,
    pub master_seed: u64,
    pub mc_samples: u64,
    pub claimed_epsilon: f64,
    pub verdict: String,
    pub saturated: bool,
}

pub const VERDICT_VIOLATION: &str = "VIOLATION";
pub const VERDICT_NO_VIOLATION: &str = "NO_VIOLATION";

impl AuditReport {
    pub fn is_violation(&self) -> bool {
        self.verdict == VERDICT_VIOLATION
    }
}

/// Secret bits come from the reserved stream index so they never collide
/// with any run stream. A constant vector is redrawn once from the same
/// stream; a second constant vector fails the audit.
fn draw_secret_bits(master_seed: u64, n: u32) -> Result<Vec<u8>> {
    let mut stream = RngStream::derive(master_seed, u64::MAX);
    for _ in 0..2 {
        let bits: Vec<u8> = (0..n).map(|_| stream.uniform_below(2) as u8).collect();
        if bits.iter().any(|&b| b == 0) && bits.iter().any(|&b| b == 1) {
            return Ok(bits);
        }
    }
    Err(Error::DegenerateSplit)
}

/// The Monte-Carlo seed lives on its own reserved stream index, distinct
/// from both the secret bits and every run stream.
fn derive_mc_seed(master_seed: u64) -> u64 {
    let mut stream = RngStream::derive(master_seed, u64::MAX - 1);
    (u64::from(stream.next_u32()) << 32) | u64::from(stream.next_u32())
}

/// One audit run's provenance, as emitted in plot CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AuditRun {
    pub run_index: u32,
    pub secret_bit: u8,
    pub prediction: u8,
}

/// End-to-end audit: run the mechanism n times on a secret choice of x0/x1
/// (run i uses the derived stream i, so any run replays in isolation), score
/// the attack's predictions, find the weakest rejected curve, and convert it
/// to an epsilon lower bound at the requested δ. VIOLATION means
/// eps_lb exceeds the claimed epsilon.
pub fn audit_epsilon_lb<I, M>(
    mechanism: M,
    test: &MembershipTest,
    x0: &I,
    x1: &I,
    params: &AuditParams,
) -> Result<AuditReport>
where
    I: PartialEq + ?Sized,
    M: FnMut(&I, &mut RngStream) -> Result<Observation>,
{
    audit_epsilon_lb_traced(mechanism, test, x0, x1, params).map(|(report, _)| report)
}

/// `audit_epsilon_lb` plus the per-run rows behind the confusion matrix.
pub fn audit_epsilon_lb_traced<I, M>(
    mut mechanism: M,
    test: &MembershipTest,
    x0: &I,
    x1: &I,
    params: &AuditParams,
) -> Result<(AuditReport, Vec<AuditRun>)>
where
    I: PartialEq + ?Sized,
    M: FnMut(&I, &mut RngStream) -> Result<Observation>,
{
    if params.n < 100 {
        return Err(Error::PreconditionViolation("audit needs n >= 100 runs"));
    }
    if x0 == x1 {
        return Err(Error::PreconditionViolation("audit inputs x0 and x1 must differ"));
    }
    if !(params.gamma > 0.0 && params.gamma < 1.0) {
        return Err(Error::BadParam("gamma must lie in (0,1)"));
    }
    if !(0.0..1.0).contains(&params.delta) {
        return Err(Error::BadParam("delta must lie in [0,1)"));
    }
    if !(params.claimed_epsilon >= 0.0 && params.claimed_epsilon.is_finite()) {
        return Err(Error::BadParam("claimed_epsilon must be finite and >= 0"));
    }
    check_mc_samples(params.mc_samples)?;

    let secret = draw_secret_bits(params.master_seed, params.n)?;
    let mut confusion = ConfusionMatrix { tn: 0, fp: 0, fn_: 0, tp: 0 };
    let mut runs = Vec::with_capacity(params.n as usize);
    for (i, &bit) in secret.iter().enumerate() {
        let mut stream = RngStream::derive(params.master_seed, i as u64);
        let input = if bit == 1 { x1 } else { x0 };
        let obs = mechanism(input, &mut stream)?;
        let pred = test.predict(&obs);
        match (bit == 1, pred == 1) {
            (false, false) => confusion.tn += 1,
            (false, true) => confusion.fp += 1,
            (true, false) => confusion.fn_ += 1,
            (true, true) => confusion.tp += 1,
        }
        runs.push(AuditRun { run_index: i as u32, secret_bit: bit, prediction: pred });
    }

    let mc_seed = derive_mc_seed(params.master_seed);
    let theta =
        theta_star(params.family, &confusion, params.gamma, params.mc_samples, mc_seed)?;
    let curve = params.family.curve(theta, 0.0)?;
    let (eps_lb, unbounded) = match eps_of_f(&curve, params.delta) {
        Ok(eps) => (eps, false),
        Err(Error::Unbounded) => (EPS_SEARCH_MAX, true),
        Err(e) => return Err(e),
    };
    let saturated = unbounded || theta >= params.family.theta_max() - 1e-6;
    let verdict = if eps_lb > params.claimed_epsilon {
        VERDICT_VIOLATION
    } else {
        VERDICT_NO_VIOLATION
    };

    let report = AuditReport {
        eps_lb,
        delta: params.delta,
        gamma: params.gamma,
        family: params.family,
        theta_star: theta,
        confusion,
        n_runs: params.n,
        master_seed: params.master_seed,
        mc_samples: params.mc_samples as u64,
        claimed_epsilon: params.claimed_epsilon,
        verdict: verdict.to_string(),
        saturated,
    };
    Ok((report, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{phi_lap_membership, prio_rule_membership, PrioRule};
    use crate::laplace::{sample_laplace, LaplaceParams};
    use crate::sketch::{sym_ohe, SketchConfig};
    use rand::Rng;

    #[test]
    fn normal_helpers_hit_tabulated_values() {
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((norm_cdf(2.0) - 0.977_249_868_051_820_8).abs() < 1e-12);
        assert!((norm_cdf(-1.96) - 0.024_997_895_148_220_43).abs() < 1e-12);
        assert!((norm_quantile(0.975) - 1.959_963_984_540_053_6).abs() < 1e-10);
        assert!((norm_quantile(0.999) - 3.090_232_306_167_813).abs() < 1e-10);
        assert!(norm_quantile(0.5).abs() < 1e-12);
        assert_eq!(norm_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(norm_quantile(1.0), f64::INFINITY);
        for &p in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.99, 1.0 - 1e-6] {
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-12, "roundtrip {p}");
        }
    }

    #[test]
    fn curve_spot_values() {
        for &a in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            assert!((f_eps_delta(0.0, 0.0, a) - (1.0 - a)).abs() < 1e-15);
            assert!((f_gauss(0.0, a) - (1.0 - a)).abs() < 1e-9);
            assert!((f_laplace(0.0, a) - (1.0 - a)).abs() < 1e-15);
        }
        assert!((f_eps_delta(1.0, 0.0, 0.2) - 0.456_343_634_308_190_9).abs() < 1e-15);
        assert!((f_eps_delta(2.0, 0.1, 0.0) - 0.9).abs() < 1e-15);
        assert!((f_gauss(1.0, 0.5) - 0.158_655_253_931_457_07).abs() < 1e-10);
        assert_eq!(f_gauss(3.0, 1.0), 0.0);
        assert_eq!(f_gauss(3.0, 0.0), 1.0);
        assert!((f_laplace(1.0, 0.5) - 0.183_939_720_585_721_17).abs() < 1e-15);
        assert!((f_laplace(1.0, 0.1) - 0.728_171_817_154_095_4).abs() < 1e-15);
        // Branch seams are continuous.
        for &mu in &[0.5, 1.0, 3.0] {
            let seam = 0.5 * (-mu as f64).exp();
            assert!((f_laplace(mu, seam - 1e-12) - f_laplace(mu, seam + 1e-12)).abs() < 1e-9);
            assert!((f_laplace(mu, 0.5 - 1e-12) - f_laplace(mu, 0.5 + 1e-12)).abs() < 1e-9);
        }
    }

    #[test]
    fn tradeoff_sanity_across_families() {
        let curves = [
            TradeoffCurve::eps_delta(0.5, 0.0).unwrap(),
            TradeoffCurve::eps_delta(2.0, 1e-2).unwrap(),
            TradeoffCurve::gaussian(0.5).unwrap(),
            TradeoffCurve::gaussian(3.0).unwrap(),
            TradeoffCurve::laplace(1.0).unwrap(),
            TradeoffCurve::laplace(4.0).unwrap(),
        ];
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        for curve in &curves {
            let vals: Vec<f64> = grid.iter().map(|&a| curve.eval(a)).collect();
            for (i, (&a, &v)) in grid.iter().zip(&vals).enumerate() {
                assert!(v <= 1.0 - a + 1e-12, "{curve:?} above 1-alpha at {a}");
                if i > 0 {
                    assert!(v <= vals[i - 1] + 1e-12, "{curve:?} increases at {a}");
                }
            }
            // Midpoint convexity on spread-out grid pairs.
            for i in (0..400).step_by(7) {
                let (a, b) = (grid[i], grid[i + 600]);
                let mid = curve.eval(0.5 * (a + b));
                assert!(
                    mid <= 0.5 * (curve.eval(a) + curve.eval(b)) + 1e-9,
                    "{curve:?} fails midpoint convexity at ({a},{b})"
                );
            }
        }
    }

    /// Draws one Lap(mu, 1) variate by inverse transform.
    fn lap_draw(rng: &mut ChaCha12Rng, mu: f64) -> f64 {
        loop {
            let u: f64 = rng.gen();
            let inner = 1.0 - 2.0 * (u - 0.5).abs();
            if inner > 0.0 {
                return mu + (0.5 - u).signum() * inner.ln();
            }
        }
    }

    /// Empirical Neyman-Pearson curve: threshold on the sorted null sample,
    /// count exceedances under the alternative. The likelihood ratio of both
    /// pairs tested here is monotone in the observation, so the threshold
    /// test is exactly the optimal test and the empirical curve estimates
    /// f(α) directly. The tolerance combines the binomial error of the β
    /// estimate with the threshold-estimation error scaled by the likelihood
    /// ratio at the threshold.
    fn np_oracle_check(
        null: &mut [f64],
        alt: &[f64],
        lr_at: impl Fn(f64) -> f64,
        f_closed: impl Fn(f64) -> f64,
        label: &str,
    ) {
        null.sort_unstable_by(f64::total_cmp);
        let n = null.len() as f64;
        for &alpha in &[0.02, 0.05, 0.1, 0.184, 0.3, 0.45, 0.5, 0.55, 0.7, 0.9] {
            let idx = ((1.0 - alpha) * n) as usize;
            let t = null[idx.min(null.len() - 1)];
            let beta_hat = alt.iter().filter(|&&x| x <= t).count() as f64 / alt.len() as f64;
            let expected = f_closed(alpha);
            let se = (beta_hat * (1.0 - beta_hat) / n).sqrt()
                + lr_at(t) * (alpha * (1.0 - alpha) / n).sqrt();
            assert!(
                (beta_hat - expected).abs() <= 3.0 * se + 1e-9,
                "{label} alpha={alpha}: beta_hat={beta_hat} expected={expected} se={se}"
            );
        }
    }

    #[test]
    fn laplace_curve_matches_neyman_pearson_oracle() {
        let n = 1_000_000;
        for &mu in &[0.5, 1.0, 2.0, 4.0] {
            let mut rng = ChaCha12Rng::seed_from_u64(500 + mu as u64);
            let mut null: Vec<f64> = (0..n).map(|_| lap_draw(&mut rng, 0.0)).collect();
            let alt: Vec<f64> = (0..n).map(|_| lap_draw(&mut rng, mu)).collect();
            np_oracle_check(
                &mut null,
                &alt,
                |t: f64| (t.abs() - (t - mu).abs()).exp(),
                |a| f_laplace(mu, a),
                "laplace",
            );
        }
    }

    #[test]
    fn gauss_curve_matches_neyman_pearson_oracle() {
        use statrs::distribution::Normal;
        let n = 1_000_000;
        let unit = Normal::new(0.0, 1.0).unwrap();
        for &mu in &[0.5, 1.0, 2.9] {
            let mut rng = ChaCha12Rng::seed_from_u64(900 + mu as u64);
            let mut null: Vec<f64> = (0..n).map(|_| rng.sample(unit)).collect();
            let alt: Vec<f64> = (0..n).map(|_| rng.sample(unit) + mu).collect();
            np_oracle_check(
                &mut null,
                &alt,
                |t: f64| (mu * t - 0.5 * mu * mu).exp(),
                |a| f_gauss(mu, a),
                "gauss",
            );
        }
    }

    #[test]
    fn conjugacy_round_trip_on_grid() {
        for i in 0..=16 {
            let eps = i as f64 * 0.5;
            for &delta in &[0.0, 1e-5, 1e-2] {
                let curve = TradeoffCurve::eps_delta(eps, delta).unwrap();
                let back = delta_of_f(&curve, eps);
                assert!(
                    (back - delta).abs() <= 1e-6,
                    "eps={eps} delta={delta} round-tripped to {back}"
                );
            }
        }
    }

    #[test]
    fn dominance_transfers_to_delta() {
        // Pointwise-higher curves have pointwise-lower delta profiles.
        let pairs = [
            (TradeoffCurve::gaussian(0.5).unwrap(), TradeoffCurve::gaussian(2.0).unwrap()),
            (TradeoffCurve::laplace(0.7).unwrap(), TradeoffCurve::laplace(3.0).unwrap()),
            (
                TradeoffCurve::eps_delta(1.0, 0.0).unwrap(),
                TradeoffCurve::eps_delta(4.0, 1e-3).unwrap(),
            ),
        ];
        for (hi_curve, lo_curve) in &pairs {
            for i in 0..=1000 {
                let a = i as f64 / 1000.0;
                assert!(hi_curve.eval(a) >= lo_curve.eval(a) - 1e-12, "premise fails at {a}");
            }
            for j in 0..=8 {
                let eps = j as f64 * 0.5;
                let d_hi = delta_of_f(hi_curve, eps);
                let d_lo = delta_of_f(lo_curve, eps);
                assert!(
                    d_hi <= d_lo + 1e-9,
                    "dominance broken at eps={eps}: {hi_curve:?} gives {d_hi}, \
                     {lo_curve:?} gives {d_lo}"
                );
            }
        }
    }

    #[test]
    fn tv_distance_matches_closed_form() {
        let expected = [(0.5, 0.197_412_651_365_847_4), (1.0, 0.382_924_922_548_026_24), (2.0, 0.682_689_492_137_085_9)];
        for &(mu, tv) in &expected {
            let curve = TradeoffCurve::gaussian(mu).unwrap();
            assert!((delta_of_f(&curve, 0.0) - tv).abs() < 1e-6, "mu={mu}");
        }
        let perfect = TradeoffCurve::eps_delta(0.0, 0.0).unwrap();
        for &eps in &[0.0, 1.0, 4.0] {
            assert!(delta_of_f(&perfect, eps) <= 1e-12);
        }
        // A pure-eps curve needs no delta at or beyond its own eps.
        let f20 = TradeoffCurve::eps_delta(2.0, 0.0).unwrap();
        assert!(delta_of_f(&f20, 3.0) <= 1e-9);
        assert!(delta_of_f(&f20, 1.0) > 1e-3);
    }

    #[test]
    fn eps_of_f_inverts_curves() {
        let f30 = TradeoffCurve::eps_delta(3.0, 0.0).unwrap();
        assert!((eps_of_f(&f30, 0.0).unwrap() - 3.0).abs() <= 1e-6);

        let perfect = TradeoffCurve::eps_delta(0.0, 0.0).unwrap();
        assert_eq!(eps_of_f(&perfect, 0.0).unwrap(), 0.0);
        assert_eq!(eps_of_f(&perfect, 1e-5).unwrap(), 0.0);

        // Laplace shift mu satisfies pure mu-DP exactly.
        let lap5 = TradeoffCurve::laplace(5.0).unwrap();
        assert!((eps_of_f(&lap5, 0.0).unwrap() - 5.0).abs() <= 1e-6);

        // Unit-variance shift 2.9 at delta 1e-5: cross-check the generic
        // inversion against the closed-form Gaussian conversion
        // delta(eps) = Phi(mu/2 - eps/mu) - e^eps Phi(-mu/2 - eps/mu).
        let g29 = TradeoffCurve::gaussian(2.9).unwrap();
        let eps = eps_of_f(&g29, 1e-5).unwrap();
        let gdp_delta = |mu: f64, e: f64| {
            norm_cdf(-e / mu + mu / 2.0) - e.exp() * norm_cdf(-e / mu - mu / 2.0)
        };
        let (mut lo, mut hi) = (0.0_f64, 64.0_f64);
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if gdp_delta(2.9, mid) > 1e-5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((eps - hi).abs() < 1e-3, "generic {eps} vs closed form {hi}");
        assert!((eps - 15.6).abs() <= 0.5, "shift-2.9 anchor drifted: {eps}");

        let g32 = TradeoffCurve::gaussian(32.0).unwrap();
        assert_eq!(eps_of_f(&g32, 1e-5), Err(Error::Unbounded));
    }

    #[test]
    fn posterior_band_examples() {
        let f10 = TradeoffCurve::eps_delta(1.0, 0.0).unwrap();

        // Uninformative attack, n = 1000 per class. In the large-n limit the
        // Jeffreys draws behave like alpha, 1-beta ~ chi^2_1 / (2n) i.i.d., so
        // P[band] -> P[e^{-1} <= X/Y <= e] = (2/pi)(atan sqrt(e) - atan
        // sqrt(1/e)) ~= 0.306 for the eps = 1 band. Well above any sane gamma,
        // which is all "no violation detected" requires.
        let constant0 = ConfusionMatrix { tn: 500, fp: 0, fn_: 500, tp: 0 };
        let p = posterior_p_f(&constant0, &f10, 20_000, 1).unwrap();
        assert!(p > 0.25 && p < 0.36, "uninformative attack vs eps=1 band: {p}");
        // The eps = 2 band is wide enough to hold most of that ratio mass.
        let f20 = TradeoffCurve::eps_delta(2.0, 0.0).unwrap();
        let p = posterior_p_f(&constant0, &f20, 20_000, 1).unwrap();
        assert!(p > 0.45, "uninformative attack vs eps=2 band: {p}");

        let perfect = ConfusionMatrix { tn: 500, fp: 0, fn_: 0, tp: 500 };
        let p = posterior_p_f(&perfect, &f10, 20_000, 2).unwrap();
        assert!(p < 1e-3, "perfect attack should leave the band: {p}");

        // Perfect-privacy curve: the band degenerates to the line beta = 1-alpha,
        // which continuous posteriors never hit.
        let line = TradeoffCurve::eps_delta(0.0, 0.0).unwrap();
        let p = posterior_p_f(&constant0, &line, 20_000, 3).unwrap();
        assert_eq!(p, 0.0);

        assert!(posterior_p_f(&constant0, &f10, 100, 1).is_err());
        let empty_class = ConfusionMatrix { tn: 0, fp: 0, fn_: 10, tp: 10 };
        assert!(posterior_p_f(&empty_class, &f10, 20_000, 1).is_err());
    }

    #[test]
    fn theta_star_separates_attack_strength() {
        // Laplace-family anchor: this confusion is what a ~22% FNR / ~0% FPR
        // attack at n=1000 produces, and the rejected-curve boundary lands
        // near 5.7.
        let strong = ConfusionMatrix { tn: 500, fp: 0, fn_: 112, tp: 388 };
        let theta = theta_star(CurveFamily::Laplace, &strong, 0.05, 100_000, 42).unwrap();
        assert!(theta > 5.0 && theta < 6.4, "strong-attack theta {theta}");
        // At delta 0 the Laplace-family bound converts to eps = theta.
        let eps = eps_of_f(&CurveFamily::Laplace.curve(theta, 0.0).unwrap(), 0.0).unwrap();
        assert!((eps - theta).abs() < 1e-4);

        // An uninformative attack rejects only curves indistinguishable from
        // perfect privacy. The two-sided band is measure-zero at theta = 0,
        // so the boundary is small but not exactly zero: it sits at the
        // gamma-quantile of the posterior's distance from the beta = 1-alpha
        // line (~0.15 at n=1000).
        let constant0 = ConfusionMatrix { tn: 500, fp: 0, fn_: 500, tp: 0 };
        for family in [CurveFamily::Laplace, CurveFamily::Gaussian, CurveFamily::EpsDelta] {
            let theta = theta_star(family, &constant0, 0.05, 100_000, 42).unwrap();
            assert!(theta < 0.3, "{family:?} uninformative theta {theta}");
        }
    }

    #[test]
    fn theta_star_monotone_in_tpr() {
        let mut last = 0.0;
        for tp in [100u64, 200, 300, 400, 450] {
            let confusion = ConfusionMatrix { tn: 450, fp: 50, fn_: 500 - tp, tp };
            let theta =
                theta_star(CurveFamily::Laplace, &confusion, 0.05, 50_000, 7).unwrap();
            assert!(theta >= last - 1e-9, "tp={tp}: {theta} < {last}");
            last = theta;
        }
    }

    #[test]
    fn theta_star_monotone_in_gamma() {
        // Larger gamma rejects more curves, so the bound can only grow.
        let confusion = ConfusionMatrix { tn: 500, fp: 0, fn_: 112, tp: 388 };
        let mut last = 0.0;
        for &gamma in &[0.01, 0.02, 0.05, 0.1, 0.2] {
            let theta =
                theta_star(CurveFamily::Laplace, &confusion, gamma, 50_000, 11).unwrap();
            assert!(theta >= last - 1e-9, "gamma={gamma}: {theta} < {last}");
            last = theta;
        }
    }

    #[test]
    fn audit_replay_is_bit_exact() {
        let params = AuditParams {
            n: 200,
            family: CurveFamily::Laplace,
            gamma: 0.05,
            delta: 0.0,
            claimed_epsilon: 1.0,
            master_seed: 2024,
            mc_samples: 10_000,
        };
        let lap = LaplaceParams::new(0.0, 1.0).unwrap();
        let mechanism = |x: &f64, stream: &mut RngStream| {
            Ok(Observation::Scalar(*x + sample_laplace(stream, lap)))
        };
        let test = phi_lap_membership(0.0, 1.0);
        let a = audit_epsilon_lb(mechanism, &test, &0.0, &1.0, &params).unwrap();
        let b = audit_epsilon_lb(mechanism, &test, &0.0, &1.0, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

        let total = a.confusion.tn + a.confusion.fp + a.confusion.fn_ + a.confusion.tp;
        assert_eq!(total, 200);
        assert!(a.is_violation(), "grid Laplace should fail its claim: {a:?}");
        assert!(a.eps_lb > 2.0, "eps_lb {}", a.eps_lb);

        // The JSON field contract: renamed fn, flattened confusion, tagged family.
        let json = serde_json::to_string(&a).unwrap();
        for key in ["\"eps_lb\"", "\"fn\"", "\"tp\"", "\"family\":\"laplace\"", "\"verdict\""] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back: AuditReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn audit_detects_laplace_grid_violation() {
        // The full number-randomizer audit: claimed eps 1 at sensitivity 1,
        // per-sample infeasibility test, n=1000. The lower bound comes out
        // far above the claim.
        let params = AuditParams {
            n: 1000,
            family: CurveFamily::Laplace,
            gamma: 0.05,
            delta: 0.0,
            claimed_epsilon: 1.0,
            master_seed: 1,
            mc_samples: 100_000,
        };
        let lap = LaplaceParams::from_range_eps(0.0, 1.0, 1.0).unwrap();
        let mechanism = |x: &f64, stream: &mut RngStream| {
            Ok(Observation::Scalar(*x + sample_laplace(stream, lap)))
        };
        let test = phi_lap_membership(0.0, 1.0);
        let report = audit_epsilon_lb(mechanism, &test, &0.0, &1.0, &params).unwrap();
        assert!(report.is_violation());
        assert!(report.eps_lb > 3.0, "eps_lb {}", report.eps_lb);
        assert!(!report.saturated);
        // The test fires on essentially no true-mean samples and most
        // shifted ones.
        let n0 = report.confusion.tn + report.confusion.fp;
        let n1 = report.confusion.fn_ + report.confusion.tp;
        let fpr = report.confusion.fp as f64 / n0 as f64;
        let fnr = report.confusion.fn_ as f64 / n1 as f64;
        assert!(fpr < 0.02, "fpr {fpr}");
        assert!(fnr > 0.13 && fnr < 0.33, "fnr {fnr}");
    }

    #[test]
    fn audit_soundness_on_honest_randomized_response() {
        // Calibration check on a correctly implemented mechanism: the 2-bit
        // symmetric one-hot encoder with per-bit budget eps=1 is exactly
        // 2eps-DP for replacement, so eps_lb must stay at or below 2 (up to
        // the gamma=0.05 false-rejection allowance across 20 audits).
        let config = SketchConfig::new(1.0, 2, 1).unwrap();
        let test = prio_rule_membership(PrioRule::BothBits);
        let mut excess = 0;
        for trial in 0..20u64 {
            let params = AuditParams {
                n: 1000,
                family: CurveFamily::EpsDelta,
                gamma: 0.05,
                delta: 0.0,
                claimed_epsilon: 1.0,
                master_seed: 9000 + trial,
                mc_samples: 10_000,
            };
            let mechanism = |x: &u32, stream: &mut RngStream| {
                Ok(Observation::Bits(sym_ohe(*x, &config, stream)?))
            };
            let report = audit_epsilon_lb(mechanism, &test, &1u32, &2u32, &params).unwrap();
            assert!(report.eps_lb > 0.8, "attack lost its signal: {}", report.eps_lb);
            if report.eps_lb > 2.0 {
                excess += 1;
            }
        }
        assert!(excess <= 1, "{excess} of 20 audits exceeded the true bound");
    }

    #[test]
    fn audit_rejects_bad_parameters() {
        let lap = LaplaceParams::new(0.0, 1.0).unwrap();
        let mechanism = |x: &f64, stream: &mut RngStream| {
            Ok(Observation::Scalar(*x + sample_laplace(stream, lap)))
        };
        let test = phi_lap_membership(0.0, 1.0);
        let good = AuditParams {
            n: 200,
            family: CurveFamily::Laplace,
            gamma: 0.05,
            delta: 0.0,
            claimed_epsilon: 1.0,
            master_seed: 5,
            mc_samples: 10_000,
        };

        let too_few = AuditParams { n: 99, ..good };
        assert!(matches!(
            audit_epsilon_lb(mechanism, &test, &0.0, &1.0, &too_few),
            Err(Error::PreconditionViolation(_))
        ));
        assert!(matches!(
            audit_epsilon_lb(mechanism, &test, &1.0, &1.0, &good),
            Err(Error::PreconditionViolation(_))
        ));
        let bad_gamma = AuditParams { gamma: 0.0, ..good };
        assert!(matches!(
            audit_epsilon_lb(mechanism, &test, &0.0, &1.0, &bad_gamma),
            Err(Error::BadParam(_))
        ));
        let small_mc = AuditParams { mc_samples: 5000, ..good };
        assert!(matches!(
            audit_epsilon_lb(mechanism, &test, &0.0, &1.0, &small_mc),
            Err(Error::BadParam(_))
        ));
    }
}
