//! Odd theta function in additive and multiplicative form.
//!
//! The additive form is the half-integer series
//!
//! ```text
//! [z] = -sum_{j in Z+1/2} exp(i pi j^2 tau + 2 pi i j (z + 1/2))
//!     = 2 sum_{m>=0} (-1)^m exp(i pi tau (m+1/2)^2) sin((2m+1) pi z),
//! ```
//!
//! an odd function with the quasi-periodicities `[z+1] = -[z]` and
//! `[z+tau] = -exp(-2 pi i z - pi i tau) [z]`. The multiplicative form is the
//! triple-product style
//!
//! ```text
//! theta(x) = (x^{1/2} - x^{-1/2}) phi(qx) phi(q/x),   phi(x) = prod_{s>=0} (1 - q^s x),
//! ```
//!
//! with nome `q = exp(2 pi i tau)`. The two agree up to a z-independent
//! constant `C(q)` under `x = exp(2 pi i z)`; [`ThetaContext::proportionality_constant`]
//! measures that constant instead of assuming it.

use num_complex::Complex64 as C64;
use thiserror::Error;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn i_pi() -> C64 {
    C64::new(0.0, std::f64::consts::PI)
}

#[derive(Debug, Clone, Error)]
pub enum ThetaError {
    #[error("invalid context: Im(tau) must be positive, got {0}")]
    InvalidTau(f64),
    #[error("cannot satisfy tail tolerance {tolerance} at |q| = {q_abs} within the truncation cap")]
    TruncationOverflow { q_abs: f64, tolerance: f64 },
    #[error("multiplicative theta is undefined at x = 0")]
    ZeroArgument,
    #[error("proportionality constant not z-independent: relative spread {0:.3e}")]
    InconsistentConstant(f64),
    #[error("degenerate probe: sample set violates the admissibility invariants")]
    DegenerateSample,
    #[error("division guard: |f(y)| = {0:.3e} is below the guard threshold")]
    DivisionGuard(f64),
}

/// Evaluation context: modulus, nome, truncation order and tolerance policy.
///
/// Immutable after construction; all evaluations are pure functions of the
/// context and their arguments.
#[derive(Debug, Clone)]
pub struct ThetaContext {
    tau: C64,
    q: C64,
    truncation: u32,
    tail_tolerance: f64,
    strip_height: f64,
    typical_magnitude: f64,
}

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-14;
const TRUNCATION_CAP: u32 = 96;

impl ThetaContext {
    /// Builds a context for modulus `tau`, sizing the series truncation so the
    /// omitted tail stays below `tail_tolerance` on the strip
    /// `|Im z| <= 2 Im(tau)` (arguments beyond half the strip are first
    /// reduced through the tau quasi-periodicity, so the sizing is conservative).
    pub fn new(tau: C64, tail_tolerance: f64) -> Result<Self, ThetaError> {
        if !(tau.im > 0.0) {
            return Err(ThetaError::InvalidTau(tau.im));
        }
        if !(tail_tolerance > 0.0) {
            return Err(ThetaError::TruncationOverflow {
                q_abs: (-TWO_PI * tau.im).exp(),
                tolerance: tail_tolerance,
            });
        }
        let q = (C64::new(0.0, TWO_PI) * tau).exp();
        let q_abs = q.norm();
        let strip_height = 2.0 * tau.im;
        // Post-reduction arguments satisfy |Im z| <= Im(tau)/2; size for
        // |Im z| <= Im(tau) to leave headroom.
        let sizing_height = tau.im;
        let truncation = size_truncation(q_abs, sizing_height, tail_tolerance).ok_or(
            ThetaError::TruncationOverflow {
                q_abs,
                tolerance: tail_tolerance,
            },
        )?;
        let mut ctx = Self {
            tau,
            q,
            truncation,
            tail_tolerance,
            strip_height,
            typical_magnitude: 1.0,
        };
        ctx.typical_magnitude = ctx.measure_typical_magnitude();
        Ok(ctx)
    }

    /// Default tolerance policy (1e-14 tail).
    pub fn with_default_tolerance(tau: C64) -> Result<Self, ThetaError> {
        Self::new(tau, DEFAULT_TAIL_TOLERANCE)
    }

    pub fn tau(&self) -> C64 {
        self.tau
    }

    pub fn nome(&self) -> C64 {
        self.q
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    pub fn strip_height(&self) -> f64 {
        self.strip_height
    }

    /// Median |[p]| over a fixed probe set; the scale reference for pole guards.
    pub fn typical_magnitude(&self) -> f64 {
        self.typical_magnitude
    }

    fn measure_typical_magnitude(&self) -> f64 {
        let probes = [
            C64::new(0.147, 0.0) + self.tau * 0.083,
            C64::new(0.311, 0.0) - self.tau * 0.057,
            C64::new(0.457, 0.0) + self.tau * 0.191,
            C64::new(0.289, 0.0),
            C64::new(0.401, 0.0) + self.tau * 0.113,
        ];
        let mut mags: Vec<f64> = probes.iter().map(|&p| self.additive(p).norm()).collect();
        mags.sort_by(|a, b| a.total_cmp(b));
        mags[mags.len() / 2].max(f64::MIN_POSITIVE)
    }

    /// The odd theta function `[z]`, truncated half-integer series.
    ///
    /// Arguments with |Im z| beyond half the strip are reduced through
    /// `[z + n tau] = (-1)^n exp(-2 pi i n z - pi i n^2 tau) [z]` before
    /// summation, so the truncation policy applies uniformly.
    pub fn additive(&self, z: C64) -> C64 {
        let shift = (z.im / self.tau.im).round();
        if shift == 0.0 {
            return self.additive_raw(z);
        }
        let n = shift;
        let reduced = z - self.tau * n;
        // [z' + n tau] = (-1)^n exp(-2 pi i n z' - pi i n^2 tau) [z']
        let phase = (-C64::new(0.0, TWO_PI) * n * reduced - i_pi() * n * n * self.tau).exp();
        let sign = if (n as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sign * phase * self.additive_raw(reduced)
    }

    fn additive_raw(&self, z: C64) -> C64 {
        let mut sum = C64::new(0.0, 0.0);
        // Pairing j and -j turns the series into a sine sum; the m-th term is
        // 2 (-1)^m exp(i pi tau (m+1/2)^2) sin((2m+1) pi z), which vanishes
        // identically at z = 0 and is exactly odd in z.
        for m in (0..=self.truncation).rev() {
            let j = m as f64 + 0.5;
            let gauss = (i_pi() * self.tau * j * j).exp();
            let sine = (C64::new(std::f64::consts::PI, 0.0) * (2.0 * m as f64 + 1.0) * z).sin();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sum += 2.0 * sign * gauss * sine;
        }
        sum
    }

    /// Whether `z` lies in the strip the truncation was sized for without
    /// needing reduction.
    pub fn in_strip(&self, z: C64) -> bool {
        z.im.abs() <= self.strip_height
    }

    /// The multiplicative theta `(x^{1/2} - x^{-1/2}) phi(qx) phi(q/x)`.
    ///
    /// `x^{1/2}` uses the principal branch (argument in (-pi, pi]). The
    /// q-products are truncated under the context tail policy.
    pub fn multiplicative(&self, x: C64) -> Result<C64, ThetaError> {
        let root = x.sqrt();
        Ok((root - 1.0 / root) * self.multiplicative_products(x)?)
    }

    /// The product part `phi(qx) phi(q/x)` of the multiplicative theta, for
    /// callers that resolve the half-power branch themselves.
    pub fn multiplicative_products(&self, x: C64) -> Result<C64, ThetaError> {
        if x == C64::new(0.0, 0.0) {
            return Err(ThetaError::ZeroArgument);
        }
        let q_abs = self.q.norm();
        let x_abs = x.norm();
        let reach = x_abs.max(1.0 / x_abs);
        // |q|^{s+2} * reach / (1 - |q|) bounds the omitted log-tail of either product.
        let mut terms = 0u32;
        let mut bound = q_abs * q_abs * reach / (1.0 - q_abs);
        while bound > self.tail_tolerance / 4.0 {
            terms += 1;
            bound *= q_abs;
            if terms > 200_000 {
                return Err(ThetaError::TruncationOverflow {
                    q_abs,
                    tolerance: self.tail_tolerance,
                });
            }
        }
        let mut product = C64::new(1.0, 0.0);
        let mut qs = self.q;
        for _ in 0..=terms {
            product *= (1.0 - qs * x) * (1.0 - qs / x);
            qs *= self.q;
        }
        Ok(product)
    }

    /// Measures `C(q) = theta_mult(exp(2 pi i z0)) / [z0]` at `z0 = 1/4` and
    /// asserts z-independence across a fixed probe set.
    pub fn proportionality_constant(&self) -> Result<C64, ThetaError> {
        let reference = self.ratio_at(C64::new(0.25, 0.0))?;
        let mut spread: f64 = 0.0;
        for &p in &[0.15, 0.25, 0.35, 0.45] {
            let c = self.ratio_at(C64::new(p, 0.0))?;
            spread = spread.max((c - reference).norm() / reference.norm());
        }
        if spread > 1e-8 {
            return Err(ThetaError::InconsistentConstant(spread));
        }
        Ok(reference)
    }

    fn ratio_at(&self, z: C64) -> Result<C64, ThetaError> {
        let x = (C64::new(0.0, TWO_PI) * z).exp();
        let num = self.multiplicative(x)?;
        let den = self.additive(z);
        if den.norm() < 1e-14 * self.typical_magnitude {
            return Err(ThetaError::DivisionGuard(den.norm()));
        }
        Ok(num / den)
    }

    /// Distance of `p` from the lattice Gamma = Z + tau Z.
    pub fn lattice_distance(&self, p: C64) -> f64 {
        let n0 = (p.im / self.tau.im).round();
        let mut best = f64::INFINITY;
        for dn in -1..=1 {
            let n = n0 + dn as f64;
            let rem = p - self.tau * n;
            let m0 = rem.re.round();
            for dm in -1..=1 {
                let m = m0 + dm as f64;
                best = best.min((rem - C64::new(m, 0.0)).norm());
            }
        }
        best
    }
}

fn size_truncation(q_abs: f64, strip_height: f64, tolerance: f64) -> Option<u32> {
    let growth = (TWO_PI * strip_height).exp();
    for n in 1..=TRUNCATION_CAP {
        let j0 = n as f64 + 1.5;
        // First omitted term (doubled for the j < 0 half) and geometric ratio.
        let term = 2.0 * q_abs.powf(j0 * j0 / 2.0) * growth.powf(j0);
        let ratio = q_abs.powf(j0 + 0.5) * growth;
        if ratio < 0.5 && term / (1.0 - ratio) < tolerance {
            // Also honor the plain tail bound the context advertises.
            let j_last = n as f64 + 0.5;
            if q_abs.powf(j_last * j_last / 2.0) / (1.0 - q_abs) < tolerance {
                return Some(n);
            }
        }
    }
    None
}

/// Probe data for the elliptic-polynomial space: a candidate degree `n`,
/// the character values, and sample points.
///
/// A function f lies in the space when `f(y+1) = chi_one f(y)` and
/// `f(y+tau) = chi_tau exp(-2 pi i n y - pi i n tau) f(y)` with
/// `chi_tau = (-1)^n exp(alpha)`; agreement of two members at `n` admissible
/// points forces identity.
#[derive(Debug, Clone)]
pub struct EllipticPolyProbe {
    pub degree: u32,
    pub chi_one: C64,
    pub alpha: C64,
    pub samples: Vec<C64>,
}

impl EllipticPolyProbe {
    pub fn chi_tau(&self) -> C64 {
        let sign = if self.degree % 2 == 0 { 1.0 } else { -1.0 };
        sign * self.alpha.exp()
    }

    /// Admissibility: pairwise sample differences, and the sample sum minus
    /// alpha/(2 pi i), stay at distance >= 1e-4 from the lattice.
    pub fn is_admissible(&self, ctx: &ThetaContext) -> bool {
        if self.samples.len() != self.degree as usize {
            return false;
        }
        for (i, &a) in self.samples.iter().enumerate() {
            for &b in &self.samples[i + 1..] {
                if ctx.lattice_distance(a - b) < 1e-4 {
                    return false;
                }
            }
        }
        let sum: C64 = self.samples.iter().sum();
        let alpha_point = self.alpha / C64::new(0.0, TWO_PI);
        ctx.lattice_distance(sum - alpha_point) >= 1e-4
    }
}

/// Quasi-periodicity deviations of a candidate elliptic polynomial over the
/// probe samples.
#[derive(Debug, Clone)]
pub struct QuasiPeriodReport {
    pub max_dev_one: f64,
    pub max_dev_tau: f64,
}

impl QuasiPeriodReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_dev_one < tolerance && self.max_dev_tau < tolerance
    }
}

/// Checks the two quasi-periodicity laws of the probe against `f` on every
/// sample point.
pub fn quasi_periodicity_report<F: Fn(C64) -> C64>(
    ctx: &ThetaContext,
    f: F,
    probe: &EllipticPolyProbe,
) -> Result<QuasiPeriodReport, ThetaError> {
    if !probe.is_admissible(ctx) {
        return Err(ThetaError::DegenerateSample);
    }
    let scale = probe
        .samples
        .iter()
        .map(|&y| f(y).norm())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let n = probe.degree as f64;
    let mut max_dev_one: f64 = 0.0;
    let mut max_dev_tau: f64 = 0.0;
    for &y in &probe.samples {
        let base = f(y);
        if base.norm() < 1e-14 * scale {
            return Err(ThetaError::DivisionGuard(base.norm()));
        }
        let dev_one = ((f(y + 1.0) / base) - probe.chi_one).norm() / probe.chi_one.norm();
        let expected_tau =
            probe.chi_tau() * (-C64::new(0.0, TWO_PI) * n * y - i_pi() * n * ctx.tau()).exp();
        let dev_tau = ((f(y + ctx.tau()) / base) - expected_tau).norm() / expected_tau.norm();
        max_dev_one = max_dev_one.max(dev_one);
        max_dev_tau = max_dev_tau.max(dev_tau);
    }
    Ok(QuasiPeriodReport {
        max_dev_one,
        max_dev_tau,
    })
}

/// Outcome of the two-polynomial agreement probe: if both candidates pass the
/// quasi-periodicity laws and match at the `n` sample points, they must match
/// everywhere; `extra_dev` reports the deviation actually observed at the
/// extra points.
#[derive(Debug, Clone)]
pub struct AgreementReport {
    pub p_report: QuasiPeriodReport,
    pub q_report: QuasiPeriodReport,
    pub sample_dev: f64,
    pub extra_dev: f64,
}

pub fn agreement_verdict<F, G>(
    ctx: &ThetaContext,
    p: F,
    q: G,
    probe: &EllipticPolyProbe,
    extra_points: &[C64],
) -> Result<AgreementReport, ThetaError>
where
    F: Fn(C64) -> C64,
    G: Fn(C64) -> C64,
{
    let p_report = quasi_periodicity_report(ctx, &p, probe)?;
    let q_report = quasi_periodicity_report(ctx, &q, probe)?;
    let rel = |a: C64, b: C64| (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE);
    let sample_dev = probe
        .samples
        .iter()
        .map(|&y| rel(p(y), q(y)))
        .fold(0.0_f64, f64::max);
    let extra_dev = extra_points
        .iter()
        .map(|&y| rel(p(y), q(y)))
        .fold(0.0_f64, f64::max);
    Ok(AgreementReport {
        p_report,
        q_report,
        sample_dev,
        extra_dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn ctx(tau: C64) -> ThetaContext {
        ThetaContext::with_default_tolerance(tau).unwrap()
    }

    fn random_z(rng: &mut ChaCha20Rng, im_scale: f64) -> C64 {
        C64::new(
            rng.gen_range(-0.45..0.45),
            rng.gen_range(-im_scale..im_scale),
        )
    }

    /// Reference sum at doubled truncation: the raw two-sided exponential
    /// series, summed in the opposite loop order from the production path.
    fn reference_theta(tau: C64, z: C64, truncation: u32) -> C64 {
        let mut total = C64::new(0.0, 0.0);
        for m in 0..=truncation as i64 {
            for &j in &[m as f64 + 0.5, -(m as f64) - 0.5] {
                total += (i_pi() * tau * j * j
                    + C64::new(0.0, TWO_PI) * j * (z + C64::new(0.5, 0.0)))
                .exp();
            }
        }
        -total
    }

    #[test]
    fn vanishes_exactly_at_zero() {
        let c = ctx(C64::new(0.0, 0.8));
        assert_eq!(c.additive(C64::new(0.0, 0.0)), C64::new(0.0, 0.0));
    }

    #[test]
    fn oddness_is_structural() {
        let c = ctx(C64::new(0.0, 0.8));
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..100 {
            let z = random_z(&mut rng, 0.3);
            let plus = c.additive(z);
            let minus = c.additive(-z);
            assert!((plus + minus).norm() <= 1e-12 * plus.norm().max(1.0));
        }
    }

    #[test]
    fn one_shift_flips_sign() {
        let c = ctx(C64::new(0.0, 0.8));
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..50 {
            let z = random_z(&mut rng, 0.3);
            let ratio = c.additive(z + 1.0) / c.additive(z);
            assert!((ratio + 1.0).norm() < 1e-10);
        }
    }

    #[test]
    fn tau_shift_matches_exponential_factor() {
        for tau in [C64::new(0.0, 0.8), C64::new(0.3, 0.8)] {
            let c = ctx(tau);
            let mut rng = ChaCha20Rng::seed_from_u64(17);
            for _ in 0..50 {
                let z = random_z(&mut rng, 0.3);
                let expected = -(-C64::new(0.0, TWO_PI) * z - i_pi() * tau).exp() * c.additive(z);
                let got = c.additive(z + tau);
                assert!(
                    (got - expected).norm() <= 1e-10 * expected.norm(),
                    "tau-shift law failed at z = {z}"
                );
            }
        }
    }

    #[test]
    fn agrees_with_doubled_truncation_reference() {
        let tau = C64::new(0.0, 1.0);
        let c = ctx(tau);
        let z = C64::new(0.3, 0.0);
        let reference = reference_theta(tau, z, 2 * c.truncation());
        let got = c.additive(z);
        assert!((got - reference).norm() <= 1e-12 * reference.norm());
    }

    #[test]
    fn strip_reduction_matches_direct_series() {
        let tau = C64::new(0.1, 0.7);
        let c = ctx(tau);
        // Large enough |Im z| to trigger reduction; reference uses a widened
        // truncation to stay accurate off-strip.
        let z = C64::new(0.21, 0.0) + tau * 2.0 + C64::new(0.0, 0.11);
        let reference = reference_theta(tau, z, 4 * c.truncation() + 24);
        let got = c.additive(z);
        assert!((got - reference).norm() <= 1e-9 * reference.norm());
    }

    #[test]
    fn doubling_truncation_is_stable() {
        let tau = C64::new(0.0, 0.6);
        let c = ctx(tau);
        let mut wide = c.clone();
        wide.truncation = c.truncation() + 4;
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        for _ in 0..20 {
            let z = random_z(&mut rng, 0.3);
            let a = c.additive(z);
            let b = wide.additive(z);
            assert!((a - b).norm() <= c.tail_tolerance());
        }
    }

    #[test]
    fn multiplicative_vanishes_at_one() {
        let c = ctx(C64::new(0.0, 0.8));
        let v = c.multiplicative(C64::new(1.0, 0.0)).unwrap();
        assert_eq!(v, C64::new(0.0, 0.0));
    }

    #[test]
    fn multiplicative_antisymmetry_on_unit_circle() {
        let c = ctx(C64::new(0.0, 0.8));
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for _ in 0..50 {
            let phi: f64 = rng.gen_range(-3.0..3.0);
            let x = C64::new(0.0, phi).exp();
            let direct = c.multiplicative(x).unwrap();
            let flipped = c.multiplicative(1.0 / x).unwrap();
            assert!((flipped + direct).norm() <= 1e-10 * direct.norm().max(1e-30));
        }
    }

    #[test]
    fn multiplicative_rejects_zero() {
        let c = ctx(C64::new(0.0, 0.8));
        assert!(matches!(
            c.multiplicative(C64::new(0.0, 0.0)),
            Err(ThetaError::ZeroArgument)
        ));
    }

    #[test]
    fn proportionality_constant_is_z_independent() {
        let c = ctx(C64::new(0.0, 0.9));
        let constant = c.proportionality_constant().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        for _ in 0..5 {
            let z = C64::new(rng.gen_range(0.05..0.45), 0.0);
            let x = (C64::new(0.0, TWO_PI) * z).exp();
            let ratio = c.multiplicative(x).unwrap() / c.additive(z);
            assert!((ratio - constant).norm() <= 1e-9 * constant.norm());
        }
    }

    #[test]
    fn proportionality_constant_small_nome_limit() {
        // q -> 0: C(q) q^{1/8} -> i.
        let tau_im = -(1e-6_f64.ln()) / TWO_PI;
        let c = ctx(C64::new(0.0, tau_im));
        let constant = c.proportionality_constant().unwrap();
        let q = c.nome();
        let limit = constant * q.powf(0.125);
        assert!((limit - C64::new(0.0, 1.0)).norm() < 1e-4);
    }

    #[test]
    fn proportionality_constant_truncation_invariant() {
        let c = ctx(C64::new(0.0, 0.7));
        let mut wide = c.clone();
        wide.truncation = c.truncation() + 4;
        let a = c.proportionality_constant().unwrap();
        let b = wide.proportionality_constant().unwrap();
        assert!((a - b).norm() <= c.tail_tolerance().max(1e-13 * a.norm()));
    }

    #[test]
    fn invalid_tau_is_rejected() {
        assert!(ThetaContext::with_default_tolerance(C64::new(0.5, -0.2)).is_err());
        assert!(ThetaContext::with_default_tolerance(C64::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn tail_bound_invariant_holds() {
        for tau_im in [0.5, 0.8, 1.2] {
            let c = ctx(C64::new(0.0, tau_im));
            let q_abs = c.nome().norm();
            let j = c.truncation() as f64 + 0.5;
            assert!(q_abs.powf(j * j / 2.0) / (1.0 - q_abs) < c.tail_tolerance());
        }
    }

    #[test]
    fn theta_itself_is_degree_one_elliptic() {
        let c = ctx(C64::new(0.0, 0.8));
        let probe = EllipticPolyProbe {
            degree: 1,
            chi_one: C64::new(-1.0, 0.0),
            alpha: C64::new(0.0, 0.0),
            samples: vec![C64::new(0.31, 0.04)],
        };
        let report = quasi_periodicity_report(&c, |y| c.additive(y), &probe).unwrap();
        assert!(report.passes(1e-9));
    }

    #[test]
    fn theta_product_is_degree_two_elliptic() {
        let c = ctx(C64::new(0.0, 0.8));
        let c1 = C64::new(0.12, 0.03);
        let c2 = C64::new(-0.27, -0.05);
        // chi(tau) for [y-c1][y-c2] follows from applying the tau-shift law
        // twice: chi(tau) = exp(2 pi i (c1 + c2)) = (-1)^2 exp(alpha).
        let probe = EllipticPolyProbe {
            degree: 2,
            chi_one: C64::new(1.0, 0.0),
            alpha: C64::new(0.0, TWO_PI) * (c1 + c2),
            samples: vec![C64::new(0.05, 0.02), C64::new(0.33, -0.06)],
        };
        let f = |y: C64| c.additive(y - c1) * c.additive(y - c2);
        let report = quasi_periodicity_report(&c, f, &probe).unwrap();
        assert!(
            report.passes(1e-9),
            "dev_one = {:.3e}, dev_tau = {:.3e}",
            report.max_dev_one,
            report.max_dev_tau
        );
    }

    #[test]
    fn identical_polynomials_agree_with_zero_deviation() {
        let c = ctx(C64::new(0.0, 0.8));
        let probe = EllipticPolyProbe {
            degree: 1,
            chi_one: C64::new(-1.0, 0.0),
            alpha: C64::new(0.0, 0.0),
            samples: vec![C64::new(0.29, 0.01)],
        };
        let extras = [C64::new(0.11, -0.03), C64::new(-0.38, 0.05)];
        let report = agreement_verdict(
            &c,
            |y| c.additive(y),
            |y| c.additive(y),
            &probe,
            &extras,
        )
        .unwrap();
        assert_eq!(report.sample_dev, 0.0);
        assert_eq!(report.extra_dev, 0.0);
    }

    #[test]
    fn degenerate_samples_are_rejected() {
        let c = ctx(C64::new(0.0, 0.8));
        let probe = EllipticPolyProbe {
            degree: 2,
            chi_one: C64::new(1.0, 0.0),
            alpha: C64::new(0.0, 0.0),
            samples: vec![C64::new(0.2, 0.0), C64::new(1.2, 0.0)],
        };
        let err = quasi_periodicity_report(&c, |y| c.additive(y), &probe);
        assert!(matches!(err, Err(ThetaError::DegenerateSample)));
    }
}
