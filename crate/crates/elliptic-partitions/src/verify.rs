//! Verification suites: seeded well-conditioned parameter sampling, expected
//! quasi-periodicity factors, and one suite per identity cluster, each
//! producing a keyed JSON report.
//!
//! Every case derives its random stream from the global seed and its own case
//! key, so reports are byte-identical across runs and independent of case
//! execution order (timing aside).

use crate::closed::{
    eval_e_bar_parts, eval_e_base, eval_e_fm, eval_e_fm_parts, rescaling_factor,
};
use crate::labels::{enumerate_base_labels, enumerate_labels, BaseLabel, FmLabel};
use crate::lattice::{
    base_column_closed_form, brute_force_base, brute_force_fm, fm_column_closed_form,
    frozen_column_factor_base, frozen_column_factor_fm, BaseLattice, FmLattice,
};
use crate::rmatrix::{DynParams, Perturbation, RContext};
use crate::theta::{ThetaContext, TWO_PI};
use crate::weights::{
    correspondence_map, count_constant_factors, counting_identities_hold, normalized_weight,
    normalized_weight_perturbed, PsiExponentBump, ThetaMode,
};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

pub const IDENTITY_TOLERANCE: f64 = 1e-8;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
pub const THETA_LAW_TOLERANCE: f64 = 1e-10;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;
pub const CONSTANT_SPREAD_TOLERANCE: f64 = 1e-9;
const REJECTION_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuiteName {
    Theta,
    Labels,
    Rmatrix,
    Thm42,
    Thm53,
    Qp,
    Recursion,
    Weights,
}

impl SuiteName {
    pub const ALL: [SuiteName; 8] = [
        SuiteName::Theta,
        SuiteName::Labels,
        SuiteName::Rmatrix,
        SuiteName::Thm42,
        SuiteName::Thm53,
        SuiteName::Qp,
        SuiteName::Recursion,
        SuiteName::Weights,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SuiteName::Theta => "theta",
            SuiteName::Labels => "labels",
            SuiteName::Rmatrix => "rmatrix",
            SuiteName::Thm42 => "thm42",
            SuiteName::Thm53 => "thm53",
            SuiteName::Qp => "qp",
            SuiteName::Recursion => "recursion",
            SuiteName::Weights => "weights",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theta" => Ok(SuiteName::Theta),
            "labels" => Ok(SuiteName::Labels),
            "rmatrix" => Ok(SuiteName::Rmatrix),
            "thm42" => Ok(SuiteName::Thm42),
            "thm53" => Ok(SuiteName::Thm53),
            "qp" => Ok(SuiteName::Qp),
            "recursion" => Ok(SuiteName::Recursion),
            "weights" => Ok(SuiteName::Weights),
            other => Err(format!(
                "unknown suite '{other}' (expected one of theta, labels, rmatrix, thm42, thm53, qp, recursion, weights)"
            )),
        }
    }
}

/// Envelope and tolerance policy of one suite run.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub suite: SuiteName,
    pub seed: u64,
    pub draws: usize,
    pub max_l: usize,
    pub max_k: usize,
    pub max_k1: usize,
    pub max_k2: usize,
    pub max_l1: usize,
    pub max_l2: usize,
    /// Overrides the per-check identity tolerances when set.
    pub tolerance: Option<f64>,
}

impl SuiteConfig {
    pub fn new(suite: SuiteName) -> Self {
        Self {
            suite,
            seed: 42,
            draws: 3,
            max_l: 4,
            max_k: 2,
            max_k1: 2,
            max_k2: 2,
            max_l1: 2,
            max_l2: 3,
            tolerance: None,
        }
    }

    fn tol(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }
}

/// Deliberate defect injections for mutation-sensitivity checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mutation {
    pub r_entry: Option<Perturbation>,
    pub psi_exponent: Option<PsiExponentBump>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub label: String,
    pub params_digest: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema: u32,
    pub suite: String,
    pub seed: u64,
    pub cases: Vec<CaseRecord>,
    pub aggregate_worst: f64,
    pub conditioning_failures: usize,
    pub passed: bool,
    pub wall_time_ms: u64,
}

impl SuiteReport {
    /// Flat CSV projection of the per-case records.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,case,label,params_digest,max_rel_err,pass\n");
        for case in &self.cases {
            out.push_str(&format!(
                "{},{},\"{}\",{},{:.17e},{}\n",
                self.suite, case.id, case.label, case.params_digest, case.max_rel_err, case.pass
            ));
        }
        out
    }

    /// The report with the timing field cleared, for byte-level comparisons.
    pub fn timeless(&self) -> SuiteReport {
        let mut clone = self.clone();
        clone.wall_time_ms = 0;
        clone
    }
}

struct Recorder {
    cases: Vec<CaseRecord>,
    conditioning_failures: usize,
}

impl Recorder {
    fn new() -> Self {
        Self {
            cases: Vec::new(),
            conditioning_failures: 0,
        }
    }

    fn record(&mut self, id: String, label: String, digest: String, err: f64, tol: f64) {
        self.cases.push(CaseRecord {
            id,
            label,
            params_digest: digest,
            max_rel_err: err,
            pass: err <= tol && err.is_finite(),
        });
    }

    fn record_bool(&mut self, id: String, label: String, digest: String, ok: bool) {
        self.cases.push(CaseRecord {
            id,
            label,
            params_digest: digest,
            max_rel_err: if ok { 0.0 } else { 1.0 },
            pass: ok,
        });
    }

    fn conditioning_failure(&mut self, id: String) {
        self.conditioning_failures += 1;
        self.cases.push(CaseRecord {
            id,
            label: String::new(),
            params_digest: String::new(),
            max_rel_err: f64::NAN,
            pass: false,
        });
    }
}

pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

/// The per-case generator: seeded from the global seed and the case key, so
/// cases are independent of execution order.
pub fn case_seed_rng(seed: u64, key: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    let mut seed_bytes = [0u8; 32];
    seed_bytes.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(seed_bytes)
}

fn case_rng(seed: u64, key: &str) -> ChaCha20Rng {
    case_seed_rng(seed, key)
}

/// One well-conditioned parameter draw: a theta context plus the dynamical and
/// spectral data sized for the case at hand.
#[derive(Debug, Clone)]
pub struct Draw {
    pub tau: C64,
    pub theta: ThetaContext,
    pub params: DynParams,
    pub z: Vec<C64>,
    pub w: Vec<C64>,
    pub z1: Vec<C64>,
    pub z2: Vec<C64>,
    pub w1: Vec<C64>,
    pub w2: Vec<C64>,
}

impl Draw {
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |v: C64| {
            hasher.update(v.re.to_le_bytes());
            hasher.update(v.im.to_le_bytes());
        };
        feed(self.tau);
        feed(self.params.gamma);
        for &l in &self.params.lambda {
            feed(l);
        }
        for family in [&self.z, &self.w, &self.z1, &self.z2, &self.w1, &self.w2] {
            for &v in family {
                feed(v);
            }
        }
        let digest = hasher.finalize();
        hex_prefix(&digest, 16)
    }
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut out = String::with_capacity(chars);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
        if out.len() >= chars {
            break;
        }
    }
    out.truncate(chars);
    out
}

/// Spectral-family sizes a draw must provide.
#[derive(Debug, Clone, Copy, Default)]
pub struct DrawSizes {
    pub k: usize,
    pub l: usize,
    pub k1: usize,
    pub k2: usize,
    pub l1: usize,
    pub l2: usize,
}

#[derive(Debug, Clone)]
pub struct ConditioningFailure {
    pub rejections: usize,
}

fn random_box(rng: &mut ChaCha20Rng, re: f64, im: f64) -> C64 {
    C64::new(rng.gen_range(-re..re), rng.gen_range(-im..im))
}

/// Draws tau, gamma, lambda and the spectral families, rejecting draws whose
/// guarded theta arguments come closer than 1e-4 of the median magnitude to a
/// zero. Deterministic for a given generator state.
pub fn sample_parameters(
    rng: &mut ChaCha20Rng,
    sizes: DrawSizes,
) -> Result<(Draw, usize), ConditioningFailure> {
    let mut rejections = 0usize;
    loop {
        let tau = C64::new(rng.gen_range(-0.3..0.3), rng.gen_range(0.5..1.2));
        let theta = match ThetaContext::with_default_tolerance(tau) {
            Ok(t) => t,
            Err(_) => {
                rejections += 1;
                continue;
            }
        };
        let gamma = C64::new(rng.gen_range(0.1..0.28), rng.gen_range(-0.02..0.02));
        let lambda: Vec<C64> = (0..3)
            .map(|_| random_box(rng, 0.45, 0.04))
            .collect();
        let params = DynParams::new(lambda, gamma);
        let spectral =
            |rng: &mut ChaCha20Rng, n: usize| (0..n).map(|_| random_box(rng, 0.35, 0.06)).collect();
        let draw = Draw {
            tau,
            theta,
            params,
            z: spectral(rng, sizes.k),
            w: spectral(rng, sizes.l),
            z1: spectral(rng, sizes.k1),
            z2: spectral(rng, sizes.k2),
            w1: spectral(rng, sizes.l1),
            w2: spectral(rng, sizes.l2),
        };
        if well_conditioned(&draw, sizes) {
            return Ok((draw, rejections));
        }
        rejections += 1;
        if rejections >= REJECTION_CAP {
            return Err(ConditioningFailure { rejections });
        }
    }
}

/// Guard arguments: the lambda ladders stepped by gamma, pairwise differences
/// inside each symmetric family (plain and gamma-shifted, to cover the
/// specialized recursion points), and the row-column differences that appear
/// as factors.
fn well_conditioned(draw: &Draw, sizes: DrawSizes) -> bool {
    let reach = (sizes.k + sizes.l + sizes.k1 + sizes.k2 + sizes.l1 + sizes.l2 + 2) as i32;
    let gamma = draw.params.gamma;
    let mut args: Vec<C64> = Vec::new();
    for a in 0..3 {
        for b in a + 1..3 {
            let base = draw.params.lambda[a] - draw.params.lambda[b];
            for m in -reach..=reach {
                args.push(base + gamma * m as f64);
            }
        }
    }
    let mut family_pairs = |family: &[C64]| {
        for i in 0..family.len() {
            for j in i + 1..family.len() {
                let d = family[i] - family[j];
                args.push(d);
                args.push(d + gamma);
                args.push(d - gamma);
            }
        }
    };
    family_pairs(&draw.z);
    family_pairs(&draw.z1);
    family_pairs(&draw.z2);
    let mut cross = |rows: &[C64], cols: &[C64]| {
        for &r in rows {
            for &c in cols {
                args.push(r - c);
                args.push(r - c - gamma);
                args.push(r - c + gamma);
            }
        }
    };
    cross(&draw.z, &draw.w);
    cross(&draw.z1, &draw.z2);
    cross(&draw.z1, &draw.w1);
    cross(&draw.z2, &draw.w2);
    cross(&draw.z1, &draw.w2);
    let magnitudes: Vec<f64> = args
        .iter()
        .map(|&arg| draw.theta.additive(arg).norm())
        .collect();
    if magnitudes.is_empty() {
        return true;
    }
    let mut sorted = magnitudes.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    magnitudes.iter().all(|&m| m >= 1e-4 * median)
}

/// Which quasi-periodicity factor to expect for a column shift by 1 or tau.
#[derive(Debug, Clone, Copy)]
pub enum QpShift {
    One,
    Tau,
}

/// Expected ratio of the base partition function under a shift of the last
/// column parameter, valid when the label ends at the last column.
pub fn expected_base_qp_factor(
    shift: QpShift,
    lat: &BaseLattice,
    tau: C64,
) -> Result<C64, String> {
    if !lat.label.last_is_one() {
        return Err("the base quasi-periodicity laws require the last position to equal L".into());
    }
    let k = lat.label.k;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    match shift {
        QpShift::One => Ok(C64::new(sign, 0.0)),
        QpShift::Tau => {
            let z_sum: C64 = lat.z.iter().sum();
            let w_last = lat.w[lat.label.l - 1];
            let exponent = -C64::new(0.0, TWO_PI)
                * (w_last * k as f64 - z_sum
                    + lat.params.diff(1, 2)
                    + lat.params.gamma * (lat.label.l as f64 - k as f64))
                - C64::new(0.0, std::f64::consts::PI) * k as f64 * tau;
            Ok(sign * exponent.exp())
        }
    }
}

/// Expected ratio of the nested partition function under a shift of the last
/// upper column parameter, valid when the last upper color is 1 or 2.
pub fn expected_fm_qp_factor(shift: QpShift, lat: &FmLattice, tau: C64) -> Result<C64, String> {
    let color = match lat.label.last_upper_color() {
        Some(c @ (1 | 2)) => c,
        _ => {
            return Err(
                "the nested quasi-periodicity laws require last upper color 1 or 2".into(),
            )
        }
    };
    let k2 = lat.label.k2;
    let sign = if k2 % 2 == 0 { 1.0 } else { -1.0 };
    match shift {
        QpShift::One => Ok(C64::new(sign, 0.0)),
        QpShift::Tau => {
            let count = lat
                .label
                .color_count(lat.label.l2, color)
                .map_err(|e| e.to_string())? as f64;
            let z_sum: C64 = lat.z2.iter().sum();
            let w_last = lat.w2[lat.label.l2 - 1];
            let exponent = -C64::new(0.0, TWO_PI)
                * (w_last * k2 as f64 - z_sum
                    + lat.params.diff(color, 3)
                    + lat.params.gamma * (lat.label.l2 as f64 - count))
                - C64::new(0.0, std::f64::consts::PI) * k2 as f64 * tau;
            Ok(sign * exponent.exp())
        }
    }
}

/// Runs the named suite with its default envelope.
pub fn run_suite(cfg: &SuiteConfig) -> SuiteReport {
    run_suite_with(cfg, &Mutation::default())
}

/// Runs the named suite with deliberate defects injected, for
/// mutation-sensitivity checks.
pub fn run_suite_with(cfg: &SuiteConfig, mutation: &Mutation) -> SuiteReport {
    let start = Instant::now();
    let mut recorder = Recorder::new();
    match cfg.suite {
        SuiteName::Theta => theta_suite(cfg, &mut recorder),
        SuiteName::Labels => labels_suite(cfg, &mut recorder),
        SuiteName::Rmatrix => rmatrix_suite(cfg, mutation, &mut recorder),
        SuiteName::Thm42 => thm42_suite(cfg, mutation, &mut recorder),
        SuiteName::Thm53 => thm53_suite(cfg, mutation, &mut recorder),
        SuiteName::Qp => qp_suite(cfg, mutation, &mut recorder),
        SuiteName::Recursion => recursion_suite(cfg, mutation, &mut recorder),
        SuiteName::Weights => weights_suite(cfg, mutation, &mut recorder),
    }
    let aggregate_worst = recorder
        .cases
        .iter()
        .map(|c| if c.max_rel_err.is_finite() { c.max_rel_err } else { 1.0 })
        .fold(0.0_f64, f64::max);
    let passed = recorder.cases.iter().all(|c| c.pass);
    SuiteReport {
        schema: 1,
        suite: cfg.suite.to_string(),
        seed: cfg.seed,
        cases: recorder.cases,
        aggregate_worst,
        conditioning_failures: recorder.conditioning_failures,
        passed,
        wall_time_ms: start.elapsed().as_millis() as u64,
    }
}

fn rcontext(rank: usize, theta: &ThetaContext, mutation: &Mutation) -> RContext {
    let ctx = RContext::new(rank, theta.clone()).expect("rank is 2 or 3");
    match mutation.r_entry {
        Some(p) => ctx.with_perturbation(p),
        None => ctx,
    }
}

fn theta_suite(cfg: &SuiteConfig, rec: &mut Recorder) {
    let law_tol = cfg.tol(THETA_LAW_TOLERANCE);
    let taus = [
        C64::new(0.0, 0.6),
        C64::new(0.0, 0.9),
        C64::new(0.3, 0.8),
    ];
    for tau in taus {
        let key = format!("tau={:.2}+{:.2}i", tau.re, tau.im);
        let theta = ThetaContext::with_default_tolerance(tau).unwrap();
        let mut rng = case_rng(cfg.seed, &key);
        let mut odd_dev: f64 = 0.0;
        let mut one_dev: f64 = 0.0;
        let mut tau_dev: f64 = 0.0;
        for _ in 0..100 {
            let z = random_box(&mut rng, 0.45, 0.3);
            let value = theta.additive(z);
            let scale = value.norm().max(1.0);
            odd_dev = odd_dev.max((theta.additive(-z) + value).norm() / scale);
            one_dev = one_dev.max(rel_err(theta.additive(z + 1.0), -value));
            let expected = -(-C64::new(0.0, TWO_PI) * z
                - C64::new(0.0, std::f64::consts::PI) * tau)
                .exp()
                * value;
            tau_dev = tau_dev.max(rel_err(theta.additive(z + tau), expected));
        }
        let digest = hex_prefix(Sha256::digest(key.as_bytes()).as_slice(), 16);
        rec.record(format!("theta/odd/{key}"), String::new(), digest.clone(), odd_dev, 1e-12);
        rec.record(format!("theta/one-shift/{key}"), String::new(), digest.clone(), one_dev, law_tol);
        rec.record(format!("theta/tau-shift/{key}"), String::new(), digest.clone(), tau_dev, law_tol);
        // additive versus multiplicative proportionality across a probe set
        let constant_tol = cfg.tol(CONSTANT_SPREAD_TOLERANCE);
        let spread = match theta.proportionality_constant() {
            Ok(reference) => {
                let mut worst: f64 = 0.0;
                for _ in 0..5 {
                    let z = C64::new(rng.gen_range(0.05..0.45), 0.0);
                    let x = (C64::new(0.0, TWO_PI) * z).exp();
                    let ratio = theta.multiplicative(x).unwrap() / theta.additive(z);
                    worst = worst.max(rel_err(ratio, reference));
                }
                worst
            }
            Err(_) => f64::INFINITY,
        };
        rec.record(format!("theta/mult-constant/{key}"), String::new(), digest, spread, constant_tol);
    }
}

fn labels_suite(cfg: &SuiteConfig, rec: &mut Recorder) {
    // round trip through color strings at every size in the envelope
    let mut round_trip = true;
    let mut transform_ok = true;
    let mut induced_ok = true;
    let mut count_ok = true;
    for k1 in 0..=cfg.max_k1 {
        for k2 in 0..=cfg.max_k2 {
            for l1 in 0..=cfg.max_l1 {
                for l2 in 0..=cfg.max_l2 {
                    let labels = enumerate_labels(k1, k2, l1, l2);
                    let expected = binomial(l2, k2) * binomial(k2 + l1, k1);
                    if k1 <= k2 + l1 && k2 <= l2 && labels.len() != expected {
                        count_ok = false;
                    }
                    for label in labels {
                        let upper = label.upper_colors();
                        let lower = label.lower_colors();
                        let i2: Vec<usize> = upper
                            .iter()
                            .enumerate()
                            .filter(|(_, &c)| c != 3)
                            .map(|(i, _)| i + 1)
                            .collect();
                        let mut i1: Vec<usize> = upper
                            .iter()
                            .enumerate()
                            .filter(|(_, &c)| c == 1)
                            .map(|(i, _)| i + 1)
                            .collect();
                        i1.extend(
                            lower
                                .iter()
                                .enumerate()
                                .filter(|(_, &c)| c == 1)
                                .map(|(i, _)| l2 + i + 1),
                        );
                        match FmLabel::new(k1, k2, l1, l2, i1, i2) {
                            Ok(rebuilt) if rebuilt == label => {}
                            _ => round_trip = false,
                        }
                        if label.color_count(l2, 3).unwrap() != l2 - k2 {
                            count_ok = false;
                        }
                        match label.last_upper_color() {
                            Some(3) => {
                                let t = label.k_transform().unwrap();
                                if t.validate().is_err() {
                                    transform_ok = false;
                                }
                                if t.induced_set().unwrap() != label.induced_set().unwrap() {
                                    induced_ok = false;
                                }
                            }
                            Some(_) => {
                                let t = label.j_transform().unwrap();
                                if t.validate().is_err() {
                                    transform_ok = false;
                                }
                                if t.induced_set().unwrap() != label.induced_set().unwrap() {
                                    induced_ok = false;
                                }
                            }
                            None => {}
                        }
                    }
                }
            }
        }
    }
    let digest = String::from("combinatorial");
    rec.record_bool("labels/round-trip".into(), String::new(), digest.clone(), round_trip);
    rec.record_bool("labels/transform-validity".into(), String::new(), digest.clone(), transform_ok);
    rec.record_bool("labels/induced-preservation".into(), String::new(), digest.clone(), induced_ok);
    rec.record_bool("labels/enumeration-counts".into(), String::new(), digest, count_ok);
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut num = 1usize;
    for i in 0..k {
        num = num * (n - i) / (i + 1);
    }
    num
}

fn rmatrix_suite(cfg: &SuiteConfig, mutation: &Mutation, rec: &mut Recorder) {
    let residual_tol = cfg.tol(RESIDUAL_TOLERANCE);
    let pin_tol = cfg.tol(EQUIVALENCE_TOLERANCE);
    // ice rule: forbidden entries are exactly zero
    for rank in [2usize, 3] {
        let key = format!("rmatrix/ice/rank{rank}");
        let mut rng = case_rng(cfg.seed, &key);
        let (draw, _) = sample_parameters(&mut rng, DrawSizes::default()).unwrap();
        let ctx = rcontext(rank, &draw.theta, mutation);
        let u = random_box(&mut rng, 0.3, 0.05);
        let mut worst: f64 = 0.0;
        for a_in in 1..=rank as u8 {
            for b_in in 1..=rank as u8 {
                for a_out in 1..=rank as u8 {
                    for b_out in 1..=rank as u8 {
                        let mut ins = [a_in, b_in];
                        let mut outs = [a_out, b_out];
                        ins.sort_unstable();
                        outs.sort_unstable();
                        if ins != outs {
                            let v = ctx
                                .r_entry(u, &draw.params, a_in, b_in, a_out, b_out)
                                .unwrap();
                            worst = worst.max(v.norm());
                        }
                    }
                }
            }
        }
        rec.record(key, String::new(), draw.digest(), worst, 0.0);
    }
    // dynamical Yang-Baxter residuals
    for rank in [2usize, 3] {
        let key = format!("rmatrix/dybe/rank{rank}");
        let mut rng = case_rng(cfg.seed, &key);
        let mut worst: f64 = 0.0;
        let mut digest = String::new();
        for _ in 0..20 {
            let (draw, _) = sample_parameters(&mut rng, DrawSizes::default()).unwrap();
            digest = draw.digest();
            let ctx = rcontext(rank, &draw.theta, mutation);
            let z12 = random_box(&mut rng, 0.3, 0.05);
            let z13 = random_box(&mut rng, 0.3, 0.05);
            match ctx.dybe_residual(z12, z13, z13 - z12, &draw.params) {
                Ok(residual) => worst = worst.max(residual),
                Err(_) => worst = f64::INFINITY,
            }
        }
        rec.record(key, String::new(), digest, worst, residual_tol);
    }
    // pin: the single-row closed evaluation
    for l in 1..=cfg.max_l {
        let key = format!("rmatrix/pin-single-row/L{l}");
        let mut rng = case_rng(cfg.seed, &key);
        match sample_parameters(&mut rng, DrawSizes { k: 1, l, ..DrawSizes::default() }) {
            Ok((draw, _)) => {
                let ctx = rcontext(2, &draw.theta, mutation);
                let label = BaseLabel::new(l, 1, vec![l]).unwrap();
                let lat = BaseLattice {
                    z: draw.z.clone(),
                    w: draw.w.clone(),
                    params: draw.params.rank2(),
                    label,
                };
                let brute = brute_force_base(&ctx, &lat).unwrap();
                let theta = &draw.theta;
                let mut expected = theta.additive(lat.params.gamma)
                    * theta.additive(
                        lat.z[0] - lat.w[l - 1]
                            + lat.params.diff(2, 1)
                            + lat.params.gamma * (1.0 - l as f64),
                    )
                    / theta.additive(lat.params.diff(1, 2));
                for wj in &lat.w[..l - 1] {
                    expected *= theta.additive(lat.z[0] - wj);
                }
                rec.record(key, format!("L={l},k=1,I=[{l}]"), draw.digest(), rel_err(brute, expected), pin_tol);
            }
            Err(_) => rec.conditioning_failure(key),
        }
    }
    // pin: frozen-column products against the closed column factors
    for (l, k) in [(2usize, 1usize), (3, 2), (4, 2)] {
        let key = format!("rmatrix/pin-column/L{l}k{k}");
        let mut rng = case_rng(cfg.seed, &key);
        match sample_parameters(&mut rng, DrawSizes { k, l, ..DrawSizes::default() }) {
            Ok((draw, _)) => {
                let mut positions: Vec<usize> = (1..k).collect();
                positions.push(l);
                let label = BaseLabel::new(l, k, positions).unwrap();
                let ctx = rcontext(2, &draw.theta, mutation);
                let mut worst: f64 = 0.0;
                for ell in 1..=k {
                    let lat = BaseLattice {
                        z: draw.z.clone(),
                        w: draw.w.clone(),
                        params: draw.params.rank2(),
                        label: label.clone(),
                    };
                    let mut shifted = lat.clone();
                    shifted.w[l - 1] += C64::new(0.21, 0.04);
                    let product_a = frozen_column_factor_base(&ctx, &lat, ell).unwrap();
                    let product_b = frozen_column_factor_base(&ctx, &shifted, ell).unwrap();
                    let closed_a = base_column_closed_form(&draw.theta, &lat, ell);
                    let closed_b = base_column_closed_form(&draw.theta, &shifted, ell);
                    worst = worst.max(rel_err(product_a * closed_b, product_b * closed_a));
                }
                rec.record(key, format!("L={l},k={k}"), draw.digest(), worst, pin_tol);
            }
            Err(_) => rec.conditioning_failure(key),
        }
    }
    for label in enumerate_labels(1, 2, 1, 3) {
        if label.last_upper_color() != Some(1) && label.last_upper_color() != Some(2) {
            continue;
        }
        let key = format!("rmatrix/pin-fm-column/{}", label_key(&label));
        let mut rng = case_rng(cfg.seed, &key);
        let sizes = DrawSizes { k1: 1, k2: 2, l1: 1, l2: 3, ..DrawSizes::default() };
        match sample_parameters(&mut rng, sizes) {
            Ok((draw, _)) => {
                let ctx = rcontext(3, &draw.theta, mutation);
                let lat = FmLattice {
                    z1: draw.z1.clone(),
                    z2: draw.z2.clone(),
                    w1: draw.w1.clone(),
                    w2: draw.w2.clone(),
                    params: draw.params.clone(),
                    label: label.clone(),
                };
                let mut worst: f64 = 0.0;
                for ell in 1..=label.k2 {
                    let mut shifted = lat.clone();
                    shifted.w2[2] += C64::new(0.19, -0.03);
                    let product_a = frozen_column_factor_fm(&ctx, &lat, ell).unwrap();
                    let product_b = frozen_column_factor_fm(&ctx, &shifted, ell).unwrap();
                    let closed_a = fm_column_closed_form(&draw.theta, &lat, ell).unwrap();
                    let closed_b = fm_column_closed_form(&draw.theta, &shifted, ell).unwrap();
                    worst = worst.max(rel_err(product_a * closed_b, product_b * closed_a));
                }
                rec.record(key, label_key(&label), draw.digest(), worst, pin_tol);
            }
            Err(_) => rec.conditioning_failure(key),
        }
    }
    // pin: the frozen-part factor of the specialization step, via contraction
    pin_specialization_factor(cfg, mutation, rec, pin_tol);
    // pin: the fully frozen upper region of the initial condition
    pin_initial_condition(cfg, mutation, rec, pin_tol, "rmatrix");
}

fn label_key(label: &FmLabel) -> String {
    format!(
        "{{{},{},{},{}|{:?};{:?}}}",
        label.k1, label.k2, label.l1, label.l2, label.set_i1, label.set_i2
    )
}

/// The frozen-part factor of the specialization step: contraction on both
/// sides of the recursion at the specialized column parameter.
fn pin_specialization_factor(cfg: &SuiteConfig, mutation: &Mutation, rec: &mut Recorder, tol: f64) {
    for label in enumerate_labels(1, 2, 0, 2)
        .into_iter()
        .chain(enumerate_labels(1, 2, 1, 2))
    {
        if label.set_i2.last() != Some(&label.l2) {
            continue;
        }
        let key = format!("rmatrix/pin-specialization/{}", label_key(&label));
        let mut rng = case_rng(cfg.seed, &key);
        let sizes = DrawSizes {
            k1: label.k1,
            k2: label.k2,
            l1: label.l1,
            l2: label.l2,
            ..DrawSizes::default()
        };
        match sample_parameters(&mut rng, sizes) {
            Ok((draw, _)) => {
                let ctx = rcontext(3, &draw.theta, mutation);
                match specialization_identity_error(&ctx, &draw, &label, true) {
                    Ok(err) => rec.record(key, label_key(&label), draw.digest(), err, tol),
                    Err(msg) => {
                        rec.record_bool(key, format!("{} ({msg})", label_key(&label)), draw.digest(), false)
                    }
                }
            }
            Err(_) => rec.conditioning_failure(key),
        }
    }
}

fn pin_initial_condition(
    cfg: &SuiteConfig,
    mutation: &Mutation,
    rec: &mut Recorder,
    tol: f64,
    prefix: &str,
) {
    for label in enumerate_labels(1, 1, 1, 2)
        .into_iter()
        .chain(enumerate_labels(2, 1, 1, 3))
    {
        if label.last_upper_color() != Some(1) && label.last_upper_color() != Some(2) {
            continue;
        }
        let key = format!("{prefix}/pin-initial/{}", label_key(&label));
        let mut rng = case_rng(cfg.seed, &key);
        let sizes = DrawSizes {
            k1: label.k1,
            k2: label.k2,
            l1: label.l1,
            l2: label.l2,
            ..DrawSizes::default()
        };
        match sample_parameters(&mut rng, sizes) {
            Ok((draw, _)) => {
                let ctx = rcontext(3, &draw.theta, mutation);
                match initial_condition_error(&ctx, &draw, &label, true) {
                    Ok(err) => rec.record(key, label_key(&label), draw.digest(), err, tol),
                    Err(msg) => {
                        rec.record_bool(key, format!("{} ({msg})", label_key(&label)), draw.digest(), false)
                    }
                }
            }
            Err(_) => rec.conditioning_failure(key),
        }
    }
}

fn base_sizes(cfg: &SuiteConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for l in 1..=cfg.max_l {
        for k in 0..=l.min(cfg.max_k) {
            out.push((l, k));
        }
    }
    out
}

fn fm_sizes(cfg: &SuiteConfig) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for k1 in 0..=cfg.max_k1 {
        for k2 in 0..=cfg.max_k2 {
            for l1 in 0..=cfg.max_l1 {
                for l2 in 0..=cfg.max_l2 {
                    if k1 <= k2 + l1 && k2 <= l2 {
                        out.push((k1, k2, l1, l2));
                    }
                }
            }
        }
    }
    out
}

fn thm42_suite(cfg: &SuiteConfig, mutation: &Mutation, rec: &mut Recorder) {
    let tol = cfg.tol(EQUIVALENCE_TOLERANCE);
    for (l, k) in base_sizes(cfg) {
        for label in enumerate_base_labels(l, k) {
            for draw_index in 0..cfg.draws {
                let key = format!("thm42/L{l}k{k}/I{:?}/draw{draw_index}", label.positions);
                let mut rng = case_rng(cfg.seed, &key);
                match sample_parameters(&mut rng, DrawSizes { k, l, ..DrawSizes::default() }) {
                    Ok((draw, _)) => {
                        let ctx = rcontext(2, &draw.theta, mutation);
                        let lat = BaseLattice {
                            z: draw.z.clone(),
                            w: draw.w.clone(),
                            params: draw.params.rank2(),
                            label: label.clone(),
                        };
                        let err = match (brute_force_base(&ctx, &lat), eval_e_base(&draw.theta, &lat)) {
                            (Ok(brute), Ok(closed)) => rel_err(brute, closed),
                            _ => f64::INFINITY,
                        };
                        rec.record(key, format!("L={l},k={k},I={:?}", label.positions), draw.digest(), err, tol);
                    }
                    Err(_) => rec.conditioning_failure(key),
                }
            }
        }
    }
}

fn thm53_suite(cfg: &SuiteConfig, mutation: &Mutation, rec: &mut Recorder) {
    let tol = cfg.tol(EQUIVALENCE_TOLERANCE);
    for (k1, k2, l1, l2) in fm_sizes(cfg) {
        for label in enumerate_labels(k1, k2, l1, l2) {
            for draw_index in 0..cfg.draws {
                let key = format!("thm53/{}/draw{draw_index}", label_key(&label));
                let mut rng = case_rng(cfg.seed, &key);
                let sizes = DrawSizes { k1, k2, l1, l2, ..DrawSizes::default() };
                match sample_parameters(&mut rng, sizes) {
                    Ok((draw, _)) => {
                        let ctx = rcontext(3, &draw.theta, mutation);
                        let lat = FmLattice {
                            z1: draw.z1.clone(),
                            z2: draw.z2.clone(),
                            w1: draw.w1.clone(),
                            w2: draw.w2.clone(),
                            params: draw.params.clone(),
                            label: label.clone(),
                        };
                        let err = match (brute_force_fm(&ctx, &lat), eval_e_fm(&draw.theta, &lat)) {
                            (Ok(brute), Ok(closed)) => rel_err(brute, closed),
                            _ => f64::INFINITY,
                        };
                        rec.record(key, label_key(&label), draw.digest(), err, tol);
                    }
                    Err(_) => rec.conditioning_failure(key),
                }
            }
        }
    }
}

fn qp_suite(cfg: &SuiteConfig, mutation: &Mutation, rec: &mut Recorder) {
    let tol = cfg.tol(IDENTITY_TOLERANCE);
    // base lattice: labels ending at the last column
    for (l, k) in base_sizes(cfg) {
        if k == 0 {
            continue;
        }
        for label in enumerate_base_labels(l, k) {
            if !label.last_is_one() {
                continue;
            }
            let key = format!("qp/base/L{l}k{k}/I{:?}", label.positions);
            let mut rng = case_rng(cfg.seed, &key);
            match sample_parameters(&mut rng, DrawSizes { k, l, ..DrawSizes::default() }) {
                Ok((draw, _)) => {
                    let ctx = rcontext(2, &draw.theta, mutation);
                    let lat = BaseLattice {
                        z: draw.z.clone(),
                        w: draw.w.clone(),
                        params: draw.params.rank2(),
                        label: label.clone(),
                    };
                    let mut worst: f64 = 0.0;
                    for (shift, delta) in [(QpShift::One, C64::new(1.0, 0.0)), (QpShift::Tau, draw.tau)] {
                        let expected = expected_base_qp_factor(shift, &lat, draw.tau).unwrap();
                        let mut shifted = lat.clone();
                        shifted.w[l - 1] += delta;
                        for eval in [evaluate_base_pair(&ctx, &draw.theta, &lat, &shifted)] {
                            match eval {
                                Ok((a, b)) => worst = worst.max(rel_err(b / a, expected)),
                                Err(()) => worst = f64::INFINITY,
                            }
                        }
                    }
                    rec.record(key, format!("L={l},k={k},I={:?}", label.positions), draw.digest(), worst, tol);
                }
                Err(_) => rec.conditioning_failure(key),
            }
        }
    }
    // nested lattice: last upper color 1 or 2
    for (k1, k2, l1, l2) in fm_sizes(cfg) {
        if k2 == 0 {
            continue;
        }
        for label in enumerate_labels(k1, k2, l1, l2) {
            if label.last_upper_color() != Some(1) && label.last_upper_color() != Some(2) {
                continue;
            }
            let key = format!("qp/fm/{}", label_key(&label));
            let mut rng = case_rng(cfg.seed, &key);
            let sizes = DrawSizes { k1, k2, l1, l2, ..DrawSizes::default() };
            match sample_parameters(&mut rng, sizes) {
                Ok((draw, _)) => {
                    let ctx = rcontext(3, &draw.theta, mutation);
                    let lat = FmLattice {
                        z1: draw.z1.clone(),
                        z2: draw.z2.clone(),
                        w1: draw.w1.clone(),
                        w2: draw.w2.clone(),
                        params: draw.params.clone(),
                        label: label.clone(),
                    };
                    let mut worst: f64 = 0.0;
                    for (shift, delta) in [(QpShift::One, C64::new(1.0, 0.0)), (QpShift::Tau, draw.tau)] {
                        let expected = expected_fm_qp_factor(shift, &lat, draw.tau).unwrap();
                        let mut shifted = lat.clone();
                        shifted.w2[l2 - 1] += delta;
                        match evaluate_fm_pair(&ctx, &draw.theta, &lat, &shifted) {
                            Ok((a, b)) => worst = worst.max(rel_err(b / a, expected)),
                            Err(()) => worst = f64::INFINITY,
                        }
                    }
                    rec.record(key, label_key(&label), draw.digest(), worst, tol);
                }
                Err(_) => rec.conditioning_failure(key),
            }
        }
    }
}

/// Evaluates both lattices on both routes and cross-checks them, reporting
/// the contraction values.
fn evaluate_base_pair(
    ctx: &RContext,
    theta: &ThetaContext,
    a: &BaseLattice,
    b: &BaseLattice,
) -> Result<(C64, C64), ()> {
    let brute_a = brute_force_base(ctx, a).map_err(|_| ())?;
    let brute_b = brute_force_base(ctx, b).map_err(|_| ())?;
    let closed_a = eval_e_base(theta, a).map_err(|_| ())?;
    let closed_b = eval_e_base(theta, b).map_err(|_| ())?;
    if rel_err(brute_a, closed_a) > 1e-7 || rel_err(brute_b, closed_b) > 1e-7 {
        return Err(());
    }
    Ok((brute_a, brute_b))
}

fn evaluate_fm_pair(
    ctx: &RContext,
    theta: &ThetaContext,
    a: &FmLattice,
    b: &FmLattice,
) -> Result<(C64, C64), ()> {
    let brute_a = brute_force_fm(ctx, a).map_err(|_| ())?;
    let brute_b = brute_force_fm(ctx, b).map_err(|_| ())?;
    let closed_a = eval_e_fm(theta, a).map_err(|_| ())?;
    let closed_b = eval_e_fm(theta, b).map_err(|_| ())?;
    if rel_err(brute_a, closed_a) > 1e-7 || rel_err(brute_b, closed_b) > 1e-7 {
        return Err(());
    }
    Ok((brute_a, brute_b))
}

/// Relative error of the base specialization step on one evaluation route.
fn base_specialization_error(
    ctx: &RContext,
    theta: &ThetaContext,
    lat: &BaseLattice,
    brute: bool,
) -> Result<f64, String> {
    let k = lat.label.k;
    let l = lat.label.l;
    let gamma = lat.params.gamma;
    let mut specialized = lat.clone();
    specialized.w[l - 1] = lat.z[k - 1] - gamma;
    let smaller = BaseLattice {
        z: lat.z[..k - 1].to_vec(),
        w: lat.w[..l - 1].to_vec(),
        params: lat.params.clone(),
        label: lat.label.strip_last().map_err(|e| e.to_string())?,
    };
    let mut factor = theta.additive(gamma)
        * theta.additive(lat.params.diff(2, 1) + gamma * (2.0 * k as f64 - l as f64))
        / theta.additive(lat.params.diff(1, 2) + gamma * (1.0 - k as f64));
    for j in 1..k {
        factor *= theta.additive(lat.z[j - 1] - lat.z[k - 1] + gamma);
    }
    for j in 1..l {
        factor *= theta.additive(lat.z[k - 1] - lat.w[j - 1]);
    }
    let (lhs, rhs) = if brute {
        (
            brute_force_base(ctx, &specialized).map_err(|e| e.to_string())?,
            brute_force_base(ctx, &smaller).map_err(|e| e.to_string())?,
        )
    } else {
        (
            eval_e_base(theta, &specialized).map_err(|e| e.to_string())?,
            eval_e_base(theta, &smaller).map_err(|e| e.to_string())?,
        )
    };
    Ok(rel_err(lhs, factor * rhs))
}

/// Relative error of the passive-column factorization on one route.
fn base_factorization_error(
    ctx: &RContext,
    theta: &ThetaContext,
    lat: &BaseLattice,
    brute: bool,
) -> Result<f64, String> {
    let l = lat.label.l;
    let gamma = lat.params.gamma;
    let smaller = BaseLattice {
        z: lat.z.clone(),
        w: lat.w[..l - 1].to_vec(),
        params: lat.params.clone(),
        label: lat.label.drop_last_column().map_err(|e| e.to_string())?,
    };
    let mut factor = C64::new(1.0, 0.0);
    for zj in &lat.z {
        factor *= theta.additive(zj - lat.w[l - 1] - gamma);
    }
    let (lhs, rhs) = if brute {
        (
            brute_force_base(ctx, lat).map_err(|e| e.to_string())?,
            brute_force_base(ctx, &smaller).map_err(|e| e.to_string())?,
        )
    } else {
        (
            eval_e_base(theta, lat).map_err(|e| e.to_string())?,
            eval_e_base(theta, &smaller).map_err(|e| e.to_string())?,
        )
    };
    Ok(rel_err(lhs, factor * rhs))
}

/// Relative error of the nested specialization step: the factor of the frozen
/// part times the smaller partition function at the transformed label.
fn specialization_identity_error(
    ctx: &RContext,
    draw: &Draw,
    label: &FmLabel,
    brute: bool,
) -> Result<f64, String> {
    let k2 = label.k2;
    let l2 = label.l2;
    let theta = &draw.theta;
    let gamma = draw.params.gamma;
    let color = label.last_upper_color().ok_or("empty upper region")?;
    if color == 3 {
        return Err("specialization step needs last upper color 1 or 2".into());
    }
    let count = label.color_count(l2, color).map_err(|e| e.to_string())? as f64;
    let lat = FmLattice {
        z1: draw.z1.clone(),
        z2: draw.z2.clone(),
        w1: draw.w1.clone(),
        w2: draw.w2.clone(),
        params: draw.params.clone(),
        label: label.clone(),
    };
    let mut specialized = lat.clone();
    specialized.w2[l2 - 1] = lat.z2[k2 - 1] - gamma;
    let mut factor = theta.additive(gamma)
        * theta.additive(
            lat.params.diff(3, color) + gamma * (k2 as f64 - l2 as f64 + count),
        )
        / theta.additive(lat.params.diff(color, 3) + gamma * (1.0 - count));
    for j in 1..k2 {
        factor *= theta.additive(lat.z2[j - 1] - lat.z2[k2 - 1] + gamma);
    }
    for j in 1..l2 {
        factor *= theta.additive(lat.z2[k2 - 1] - lat.w2[j - 1]);
    }
    let mut smaller_w1 = vec![lat.z2[k2 - 1]];
    smaller_w1.extend_from_slice(&lat.w1);
    let smaller = FmLattice {
        z1: lat.z1.clone(),
        z2: lat.z2[..k2 - 1].to_vec(),
        w1: smaller_w1,
        w2: lat.w2[..l2 - 1].to_vec(),
        params: lat.params.clone(),
        label: label.j_transform().map_err(|e| e.to_string())?,
    };
    let (lhs, rhs) = if brute {
        (
            brute_force_fm(ctx, &specialized).map_err(|e| e.to_string())?,
            brute_force_fm(ctx, &smaller).map_err(|e| e.to_string())?,
        )
    } else {
        (
            eval_e_fm(theta, &specialized).map_err(|e| e.to_string())?,
            eval_e_fm(theta, &smaller).map_err(|e| e.to_string())?,
        )
    };
    Ok(rel_err(lhs, factor * rhs))
}

/// Relative error of the passive upper-column factorization at last color 3.
fn fm_factorization_error(
    ctx: &RContext,
    draw: &Draw,
    label: &FmLabel,
    brute: bool,
) -> Result<f64, String> {
    let l2 = label.l2;
    let theta = &draw.theta;
    let gamma = draw.params.gamma;
    let lat = FmLattice {
        z1: draw.z1.clone(),
        z2: draw.z2.clone(),
        w1: draw.w1.clone(),
        w2: draw.w2.clone(),
        params: draw.params.clone(),
        label: label.clone(),
    };
    let smaller = FmLattice {
        z1: lat.z1.clone(),
        z2: lat.z2.clone(),
        w1: lat.w1.clone(),
        w2: lat.w2[..l2 - 1].to_vec(),
        params: lat.params.clone(),
        label: label.k_transform().map_err(|e| e.to_string())?,
    };
    let mut factor = C64::new(1.0, 0.0);
    for zj in &lat.z2 {
        factor *= theta.additive(zj - lat.w2[l2 - 1] - gamma);
    }
    let (lhs, rhs) = if brute {
        (
            brute_force_fm(ctx, &lat).map_err(|e| e.to_string())?,
            brute_force_fm(ctx, &smaller).map_err(|e| e.to_string())?,
        )
    } else {
        (
            eval_e_fm(theta, &lat).map_err(|e| e.to_string())?,
            eval_e_fm(theta, &smaller).map_err(|e| e.to_string())?,
        )
    };
    Ok(rel_err(lhs, factor * rhs))
}

/// Relative error of the initial condition: the frozen upper region times the
/// base partition function at shifted positions.
fn initial_condition_error(
    ctx: &RContext,
    draw: &Draw,
    label: &FmLabel,
    brute: bool,
) -> Result<f64, String> {
    if label.k2 != 1 {
        return Err("initial condition needs a single upper row".into());
    }
    let color = label.last_upper_color().ok_or("empty upper region")?;
    if color == 3 {
        return Err("initial condition needs last upper color 1 or 2".into());
    }
    let l2 = label.l2;
    let theta = &draw.theta;
    let gamma = draw.params.gamma;
    let lat = FmLattice {
        z1: draw.z1.clone(),
        z2: draw.z2.clone(),
        w1: draw.w1.clone(),
        w2: draw.w2.clone(),
        params: draw.params.clone(),
        label: label.clone(),
    };
    let mut factor = theta.additive(gamma)
        * theta.additive(
            lat.z2[0] - lat.w2[l2 - 1] + lat.params.diff(3, color) - gamma * (l2 as f64 - 1.0),
        )
        / theta.additive(lat.params.diff(color, 3));
    for j in 1..l2 {
        factor *= theta.additive(lat.z2[0] - lat.w2[j - 1]);
    }
    let shifted: Vec<usize> = label.set_i1.iter().map(|&p| p + 1 - l2).collect();
    let base_label =
        BaseLabel::new(label.l1 + 1, label.k1, shifted).map_err(|e| e.to_string())?;
    let mut base_w = vec![lat.z2[0]];
    base_w.extend_from_slice(&lat.w1);
    let base_lat = BaseLattice {
        z: lat.z1.clone(),
        w: base_w,
        params: lat.params.rank2(),
        label: base_label,
    };
    let (lhs, rhs) = if brute {
        let ctx2 = RContext::new(2, theta.clone()).expect("rank 2");
        let ctx2 = match ctx_perturbation(ctx) {
            Some(p) => ctx2.with_perturbation(p),
            None => ctx2,
        };
        (
            brute_force_fm(ctx, &lat).map_err(|e| e.to_string())?,
            brute_force_base(&ctx2, &base_lat).map_err(|e| e.to_string())?,
        )
    } else {
        (
            eval_e_fm(theta, &lat).map_err(|e| e.to_string())?,
            eval_e_base(theta, &base_lat).map_err(|e| e.to_string())?,
        )
    };
    Ok(rel_err(lhs, factor * rhs))
}

fn ctx_perturbation(ctx: &RContext) -> Option<Perturbation> {
    ctx.perturbation()
}

fn recursion_suite(cfg: &SuiteConfig, mutation: &Mutation, rec: &mut Recorder) {
    let tol = cfg.tol(IDENTITY_TOLERANCE);
    // base steps over the rank-2 envelope
    for (l, k) in base_sizes(cfg) {
        if l < 2 {
            continue;
        }
        for label in enumerate_base_labels(l, k) {
            let ends_at_last = label.last_is_one();
            if ends_at_last && (k == 0 || l < 1) {
                continue;
            }
            let step = if ends_at_last { "specialize" } else { "factorize" };
            let key = format!("recursion/base-{step}/L{l}k{k}/I{:?}", label.positions);
            let mut rng = case_rng(cfg.seed, &key);
            match sample_parameters(&mut rng, DrawSizes { k, l, ..DrawSizes::default() }) {
                Ok((draw, _)) => {
                    let ctx = rcontext(2, &draw.theta, mutation);
                    let lat = BaseLattice {
                        z: draw.z.clone(),
                        w: draw.w.clone(),
                        params: draw.params.rank2(),
                        label: label.clone(),
                    };
                    let outcome = if ends_at_last {
                        base_specialization_error(&ctx, &draw.theta, &lat, true).and_then(|a| {
                            base_specialization_error(&ctx, &draw.theta, &lat, false)
                                .map(|b| a.max(b))
                        })
                    } else {
                        base_factorization_error(&ctx, &draw.theta, &lat, true).and_then(|a| {
                            base_factorization_error(&ctx, &draw.theta, &lat, false)
                                .map(|b| a.max(b))
                        })
                    };
                    match outcome {
                        Ok(err) => rec.record(key, format!("L={l},k={k},I={:?}", label.positions), draw.digest(), err, tol),
                        Err(msg) => rec.record_bool(key, msg, draw.digest(), false),
                    }
                }
                Err(_) => rec.conditioning_failure(key),
            }
        }
    }
    // nested steps over the rank-3 envelope
    for (k1, k2, l1, l2) in fm_sizes(cfg) {
        if l2 == 0 {
            continue;
        }
        for label in enumerate_labels(k1, k2, l1, l2) {
            let last = label.last_upper_color();
            let step = match last {
                Some(3) => "factorize",
                Some(_) => "specialize",
                None => continue,
            };
            let key = format!("recursion/fm-{step}/{}", label_key(&label));
            let mut rng = case_rng(cfg.seed, &key);
            let sizes = DrawSizes { k1, k2, l1, l2, ..DrawSizes::default() };
            match sample_parameters(&mut rng, sizes) {
                Ok((draw, _)) => {
                    let ctx = rcontext(3, &draw.theta, mutation);
                    let outcome = if last == Some(3) {
                        fm_factorization_error(&ctx, &draw, &label, true).and_then(|a| {
                            fm_factorization_error(&ctx, &draw, &label, false).map(|b| a.max(b))
                        })
                    } else {
                        specialization_identity_error(&ctx, &draw, &label, true).and_then(|a| {
                            specialization_identity_error(&ctx, &draw, &label, false)
                                .map(|b| a.max(b))
                        })
                    };
                    match outcome {
                        Ok(err) => rec.record(key, label_key(&label), draw.digest(), err, tol),
                        Err(msg) => rec.record_bool(key, msg, draw.digest(), false),
                    }
                }
                Err(_) => rec.conditioning_failure(key),
            }
        }
    }
    // initial conditions over the envelope
    for (k1, k2, l1, l2) in fm_sizes(cfg) {
        if k2 != 1 || l2 == 0 {
            continue;
        }
        for label in enumerate_labels(k1, k2, l1, l2) {
            if label.last_upper_color() != Some(1) && label.last_upper_color() != Some(2) {
                continue;
            }
            let key = format!("recursion/fm-initial/{}", label_key(&label));
            let mut rng = case_rng(cfg.seed, &key);
            let sizes = DrawSizes { k1, k2, l1, l2, ..DrawSizes::default() };
            match sample_parameters(&mut rng, sizes) {
                Ok((draw, _)) => {
                    let ctx = rcontext(3, &draw.theta, mutation);
                    let outcome = initial_condition_error(&ctx, &draw, &label, true).and_then(|a| {
                        initial_condition_error(&ctx, &draw, &label, false).map(|b| a.max(b))
                    });
                    match outcome {
                        Ok(err) => rec.record(key, label_key(&label), draw.digest(), err, tol),
                        Err(msg) => rec.record_bool(key, msg, draw.digest(), false),
                    }
                }
                Err(_) => rec.conditioning_failure(key),
            }
        }
    }
}

fn weights_suite(cfg: &SuiteConfig, mutation: &Mutation, rec: &mut Recorder) {
    let correspondence_tol = cfg.tol(EQUIVALENCE_TOLERANCE);
    let backend_tol = cfg.tol(IDENTITY_TOLERANCE);
    for k1 in 0..=cfg.max_k1 {
        for k2 in k1..=cfg.max_k2 {
            for l2 in k2..=cfg.max_l2 {
                for label in enumerate_labels(k1, k2, 0, l2) {
                    let key = format!("weights/{}", label_key(&label));
                    let mut rng = case_rng(cfg.seed, &key);
                    let sizes = DrawSizes { k1, k2, l1: 0, l2, ..DrawSizes::default() };
                    match sample_parameters(&mut rng, sizes) {
                        Ok((draw, _)) => {
                            weight_case(cfg, mutation, rec, &key, &label, &draw, correspondence_tol, backend_tol)
                        }
                        Err(_) => rec.conditioning_failure(key),
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn weight_case(
    _cfg: &SuiteConfig,
    mutation: &Mutation,
    rec: &mut Recorder,
    key: &str,
    label: &FmLabel,
    draw: &Draw,
    correspondence_tol: f64,
    backend_tol: f64,
) {
    let theta = &draw.theta;
    let outcome = (|| -> Result<(bool, f64, f64, bool, f64), String> {
        let cfg_w = correspondence_map(label, &draw.z1, &draw.z2, &draw.w2, &draw.params)
            .map_err(|e| e.to_string())?;
        let counting = counting_identities_hold(label, &cfg_w).map_err(|e| e.to_string())?;
        let additive = match mutation.psi_exponent {
            Some(bump) => {
                normalized_weight_perturbed(theta, &cfg_w, ThetaMode::Additive, Some(bump))
                    .map_err(|e| e.to_string())?
            }
            None => normalized_weight(theta, &cfg_w, ThetaMode::Additive).map_err(|e| e.to_string())?,
        };
        let closed = eval_e_bar_parts(theta, &draw.z1, &draw.z2, &draw.w2, &draw.params, label)
            .map_err(|e| e.to_string())?;
        let correspondence_err = rel_err(additive, closed);
        // two-route consistency of the rescaled form
        let z1_shifted: Vec<C64> = draw.z1.iter().map(|&v| v + draw.params.gamma).collect();
        let w2_shifted: Vec<C64> = draw.w2.iter().map(|&v| v - draw.params.gamma).collect();
        let nested = eval_e_fm_parts(
            theta,
            &z1_shifted,
            &draw.z2,
            &[],
            &w2_shifted,
            &draw.params,
            label,
        )
        .map_err(|e| e.to_string())?;
        let factor = rescaling_factor(theta, label, &draw.params).map_err(|e| e.to_string())?;
        let route_err = rel_err(closed, factor * nested);
        // backend comparison through the measured constant
        let multiplicative = match mutation.psi_exponent {
            Some(bump) => normalized_weight_perturbed(
                theta,
                &cfg_w,
                ThetaMode::Multiplicative,
                Some(bump),
            )
            .map_err(|e| e.to_string())?,
            None => normalized_weight(theta, &cfg_w, ThetaMode::Multiplicative)
                .map_err(|e| e.to_string())?,
        };
        let count = count_constant_factors(&cfg_w);
        let count_ok = count == (label.k1 * label.k2 + label.k2 * label.l2) as i64;
        let constant = theta
            .proportionality_constant()
            .map_err(|e| e.to_string())?;
        let backend_err = rel_err(multiplicative, constant.powi(count as i32) * additive);
        Ok((counting, correspondence_err, route_err, count_ok, backend_err))
    })();
    match outcome {
        Ok((counting, correspondence_err, route_err, count_ok, backend_err)) => {
            rec.record_bool(
                format!("{key}/counting"),
                label_key(label),
                draw.digest(),
                counting,
            );
            rec.record(
                format!("{key}/correspondence"),
                label_key(label),
                draw.digest(),
                correspondence_err,
                correspondence_tol,
            );
            rec.record(
                format!("{key}/rescale-route"),
                label_key(label),
                draw.digest(),
                route_err,
                correspondence_tol,
            );
            rec.record_bool(
                format!("{key}/factor-count"),
                label_key(label),
                draw.digest(),
                count_ok,
            );
            rec.record(
                format!("{key}/backend"),
                label_key(label),
                draw.digest(),
                backend_err,
                backend_tol,
            );
        }
        Err(msg) => rec.record_bool(key.to_string(), msg, draw.digest(), false),
    }
}
