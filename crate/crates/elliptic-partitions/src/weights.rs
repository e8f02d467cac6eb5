//! Elliptic weight functions: symmetrized products of theta factors indexed
//! by an ordered partition, their denominator normalization, and the map from
//! rank-3 labels with no lower columns onto weight-function data.
//!
//! Every theta argument is carried in two coupled representations at once: the
//! multiplicative value (a monomial in t, h, mu) and its additive counterpart
//! under t = exp(-2 pi i z), h = exp(2 pi i gamma), mu = exp(2 pi i lambda).
//! One code path therefore serves both theta backends, and the backends can
//! only differ by the measured proportionality constant per non-ratio factor.

use crate::closed::ClosedFormError;
use crate::labels::{FmLabel, LabelError};
use crate::rmatrix::DynParams;
use crate::theta::{ThetaContext, ThetaError, TWO_PI};
use itertools::Itertools;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum WeightError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("pole guard: |[{arg}]| = {magnitude:.3e} below {threshold:.3e}")]
    PoleGuard {
        arg: C64,
        magnitude: f64,
        threshold: f64,
    },
    #[error("correspondence requires L1 = 0, got {0}")]
    LowerColumnsPresent(usize),
    #[error("index out of range: {0}")]
    IndexOutOfRange(usize),
    #[error(transparent)]
    Theta(#[from] ThetaError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Which theta backend evaluates the factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaMode {
    Additive,
    Multiplicative,
}

/// A theta argument carried simultaneously as a multiplicative monomial value
/// and its additive counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaArg {
    pub mult: C64,
    pub add: C64,
}

impl ThetaArg {
    pub const ONE: ThetaArg = ThetaArg {
        mult: C64::new(1.0, 0.0),
        add: C64::new(0.0, 0.0),
    };

    /// A spectral variable: t = exp(-2 pi i z).
    pub fn spectral(z: C64) -> Self {
        Self {
            mult: (-C64::new(0.0, TWO_PI) * z).exp(),
            add: -z,
        }
    }

    /// A parameter variable: x = exp(2 pi i value), as used for h and mu.
    pub fn parameter(value: C64) -> Self {
        Self {
            mult: (C64::new(0.0, TWO_PI) * value).exp(),
            add: value,
        }
    }

    pub fn mul(self, other: ThetaArg) -> Self {
        Self {
            mult: self.mult * other.mult,
            add: self.add + other.add,
        }
    }

    pub fn div(self, other: ThetaArg) -> Self {
        Self {
            mult: self.mult / other.mult,
            add: self.add - other.add,
        }
    }

    pub fn powi(self, exponent: i32) -> Self {
        Self {
            mult: self.mult.powi(exponent),
            add: self.add * exponent as f64,
        }
    }
}

/// Weight-function data: the block sizes, the ordered partition, the variable
/// families (the last family is z), and the h and mu parameters.
#[derive(Debug, Clone)]
pub struct WeightConfig {
    pub blocks: usize,
    pub vars: usize,
    pub lam: Vec<usize>,
    pub partition: Vec<Vec<usize>>,
    pub t: Vec<Vec<ThetaArg>>,
    pub h: ThetaArg,
    pub mu: Vec<ThetaArg>,
}

impl WeightConfig {
    pub fn new(
        partition: Vec<Vec<usize>>,
        t: Vec<Vec<ThetaArg>>,
        h: ThetaArg,
        mu: Vec<ThetaArg>,
    ) -> Result<Self, WeightError> {
        let blocks = partition.len();
        let lam: Vec<usize> = partition.iter().map(|b| b.len()).collect();
        let vars: usize = lam.iter().sum();
        let mut seen = vec![false; vars];
        for block in &partition {
            for &p in block {
                if p < 1 || p > vars {
                    return Err(WeightError::InvalidPartition(format!(
                        "member {p} outside 1..={vars}"
                    )));
                }
                if seen[p - 1] {
                    return Err(WeightError::InvalidPartition(format!(
                        "member {p} appears twice"
                    )));
                }
                seen[p - 1] = true;
            }
        }
        if t.len() != blocks {
            return Err(WeightError::InvalidPartition(format!(
                "expected {blocks} variable families, got {}",
                t.len()
            )));
        }
        let cfg = Self {
            blocks,
            vars,
            lam,
            partition,
            t,
            h,
            mu,
        };
        for k in 1..=blocks {
            if cfg.t[k - 1].len() != cfg.cumulative(k) {
                return Err(WeightError::InvalidPartition(format!(
                    "family {k} must hold {} variables, got {}",
                    cfg.cumulative(k),
                    cfg.t[k - 1].len()
                )));
            }
        }
        if cfg.mu.len() != blocks {
            return Err(WeightError::InvalidPartition(format!(
                "expected {blocks} mu parameters, got {}",
                cfg.mu.len()
            )));
        }
        Ok(cfg)
    }

    /// lambda^(k) = lambda_1 + ... + lambda_k.
    pub fn cumulative(&self, k: usize) -> usize {
        self.lam[..k].iter().sum()
    }

    /// lambda^{1} = lambda^(1) + ... + lambda^(N-1): the symmetrized variable
    /// count.
    pub fn symmetrized_count(&self) -> usize {
        (1..self.blocks).map(|k| self.cumulative(k)).sum()
    }

    /// The increasing enumeration i^(k) of the union of the first k blocks.
    pub fn positions(&self, k: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.partition[..k].iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    /// p_{I,j}(m) = |I_j intersect {1..m-1}|.
    pub fn p_count(&self, j: usize, m: usize) -> Result<usize, WeightError> {
        if j < 1 || j > self.blocks {
            return Err(WeightError::IndexOutOfRange(j));
        }
        if m < 1 || m > self.vars + 1 {
            return Err(WeightError::IndexOutOfRange(m));
        }
        Ok(self.partition[j - 1].iter().filter(|&&p| p < m).count())
    }

    /// The block containing i_a^(k).
    pub fn j_of(&self, k: usize, a: usize) -> Result<usize, WeightError> {
        let positions = self.positions(k);
        let member = *positions
            .get(a - 1)
            .ok_or(WeightError::IndexOutOfRange(a))?;
        self.partition
            .iter()
            .position(|block| block.contains(&member))
            .map(|idx| idx + 1)
            .ok_or(WeightError::IndexOutOfRange(member))
    }
}

/// A deliberate offset on one middle-case exponent, for mutation tests.
#[derive(Debug, Clone, Copy)]
pub struct PsiExponentBump {
    pub k: usize,
    pub a: usize,
    pub delta: i32,
}

fn theta_of(ctx: &ThetaContext, mode: ThetaMode, arg: ThetaArg) -> Result<C64, WeightError> {
    match mode {
        ThetaMode::Additive => Ok(ctx.additive(arg.add)),
        ThetaMode::Multiplicative => {
            // The half-power of a monomial follows the substitution that
            // built it, so the branch tracks the additive shadow instead of
            // jumping at the principal cut.
            let half = (C64::new(0.0, std::f64::consts::PI) * arg.add).exp();
            let head = half - 1.0 / half;
            Ok(head * ctx.multiplicative_products(arg.mult)?)
        }
    }
}

/// Pole guard evaluated on the additive shadow, which locates zeros
/// identically in both modes.
fn guarded_theta_of(
    ctx: &ThetaContext,
    mode: ThetaMode,
    arg: ThetaArg,
) -> Result<C64, WeightError> {
    let location = ctx.additive(arg.add);
    let threshold = 1e-12 * ctx.typical_magnitude();
    if location.norm() < threshold {
        return Err(WeightError::PoleGuard {
            arg: arg.add,
            magnitude: location.norm(),
            threshold,
        });
    }
    theta_of(ctx, mode, arg)
}

/// Middle-case exponent 1 + p_{I,j(I,k,a)}(i_a^(k)) - p_{I,k+1}(i_a^(k)),
/// always computed through the p-counts.
fn psi_exponent(
    cfg: &WeightConfig,
    k: usize,
    a: usize,
    bump: Option<PsiExponentBump>,
) -> Result<i32, WeightError> {
    let member = cfg.positions(k)[a - 1];
    let j = cfg.j_of(k, a)?;
    let mut exponent =
        1 + cfg.p_count(j, member)? as i32 - cfg.p_count(k + 1, member)? as i32;
    if let Some(b) = bump {
        if b.k == k && b.a == a {
            exponent += b.delta;
        }
    }
    Ok(exponent)
}

fn psi_denominator_arg(
    cfg: &WeightConfig,
    k: usize,
    a: usize,
    bump: Option<PsiExponentBump>,
) -> Result<ThetaArg, WeightError> {
    let j = cfg.j_of(k, a)?;
    let exponent = psi_exponent(cfg, k, a, bump)?;
    Ok(cfg
        .h
        .powi(exponent)
        .mul(cfg.mu[k].div(cfg.mu[j - 1])))
}

/// The elliptic weight function: theta(h)^{lambda^{1}} times the nested
/// symmetrization of the case-product over adjacent variable families.
pub fn weight_function(
    ctx: &ThetaContext,
    cfg: &WeightConfig,
    mode: ThetaMode,
) -> Result<C64, WeightError> {
    weight_function_perturbed(ctx, cfg, mode, None)
}

pub fn weight_function_perturbed(
    ctx: &ThetaContext,
    cfg: &WeightConfig,
    mode: ThetaMode,
    bump: Option<PsiExponentBump>,
) -> Result<C64, WeightError> {
    let n_blocks = cfg.blocks;
    let theta_h = theta_of(ctx, mode, cfg.h)?;
    let prefactor = theta_h.powi(cfg.symmetrized_count() as i32);
    // one permutation per symmetrized family, lexicographic, outermost first
    let perm_families: Vec<Vec<Vec<usize>>> = (1..n_blocks)
        .map(|k| {
            let m = cfg.cumulative(k);
            if m == 0 {
                vec![vec![]]
            } else {
                (0..m).permutations(m).collect()
            }
        })
        .collect();
    let mut total = C64::new(0.0, 0.0);
    let mut assignment: Vec<&Vec<usize>> = Vec::with_capacity(n_blocks - 1);
    sym_sum(
        ctx,
        cfg,
        mode,
        bump,
        &perm_families,
        &mut assignment,
        &mut total,
    )?;
    Ok(prefactor * total)
}

fn sym_sum<'a>(
    ctx: &ThetaContext,
    cfg: &WeightConfig,
    mode: ThetaMode,
    bump: Option<PsiExponentBump>,
    families: &'a [Vec<Vec<usize>>],
    assignment: &mut Vec<&'a Vec<usize>>,
    total: &mut C64,
) -> Result<(), WeightError> {
    if assignment.len() == families.len() {
        *total += summand(ctx, cfg, mode, bump, assignment)?;
        return Ok(());
    }
    let depth = assignment.len();
    for perm in &families[depth] {
        assignment.push(perm);
        sym_sum(ctx, cfg, mode, bump, families, assignment, total)?;
        assignment.pop();
    }
    Ok(())
}

fn summand(
    ctx: &ThetaContext,
    cfg: &WeightConfig,
    mode: ThetaMode,
    bump: Option<PsiExponentBump>,
    assignment: &[&Vec<usize>],
) -> Result<C64, WeightError> {
    let n_blocks = cfg.blocks;
    // slot -> permuted variable of family k (the last family is never permuted)
    let t_at = |k: usize, slot: usize| -> ThetaArg {
        if k < n_blocks {
            cfg.t[k - 1][assignment[k - 1][slot - 1]]
        } else {
            cfg.t[k - 1][slot - 1]
        }
    };
    let mut product = C64::new(1.0, 0.0);
    for k in 1..n_blocks {
        let upper = cfg.positions(k + 1);
        let lower = cfg.positions(k);
        for a in 1..=cfg.cumulative(k) {
            let t_a = t_at(k, a);
            for c in 1..=cfg.cumulative(k + 1) {
                let x = t_at(k + 1, c).div(t_a);
                let factor = match upper[c - 1].cmp(&lower[a - 1]) {
                    std::cmp::Ordering::Less => theta_of(ctx, mode, cfg.h.mul(x))?,
                    std::cmp::Ordering::Greater => theta_of(ctx, mode, x)?,
                    std::cmp::Ordering::Equal => {
                        let denom_arg = psi_denominator_arg(cfg, k, a, bump)?;
                        theta_of(ctx, mode, x.mul(denom_arg))?
                            / guarded_theta_of(ctx, mode, denom_arg)?
                    }
                };
                product *= factor;
            }
            for b in a + 1..=cfg.cumulative(k) {
                let ratio = t_at(k, b).div(t_a);
                product *= theta_of(ctx, mode, cfg.h.mul(ratio))?
                    / guarded_theta_of(ctx, mode, ratio)?;
            }
        }
    }
    Ok(product)
}

/// The product of middle-case denominators: a function of h and mu only.
pub fn psi_normalizer(
    ctx: &ThetaContext,
    cfg: &WeightConfig,
    mode: ThetaMode,
) -> Result<C64, WeightError> {
    let mut product = C64::new(1.0, 0.0);
    for k in 1..cfg.blocks {
        for a in 1..=cfg.cumulative(k) {
            product *= theta_of(ctx, mode, psi_denominator_arg(cfg, k, a, None)?)?;
        }
    }
    Ok(product)
}

/// Number of middle-case denominator factors, one per (family, slot) pair.
pub fn psi_factor_count(cfg: &WeightConfig) -> usize {
    (1..cfg.blocks).map(|k| cfg.cumulative(k)).sum()
}

/// The normalized weight function: theta(h)^{-lambda^{1}} psi_I W.
pub fn normalized_weight(
    ctx: &ThetaContext,
    cfg: &WeightConfig,
    mode: ThetaMode,
) -> Result<C64, WeightError> {
    normalized_weight_perturbed(ctx, cfg, mode, None)
}

pub fn normalized_weight_perturbed(
    ctx: &ThetaContext,
    cfg: &WeightConfig,
    mode: ThetaMode,
    bump: Option<PsiExponentBump>,
) -> Result<C64, WeightError> {
    let theta_h = theta_of(ctx, mode, cfg.h)?;
    let w = weight_function_perturbed(ctx, cfg, mode, bump)?;
    let mut psi = C64::new(1.0, 0.0);
    for k in 1..cfg.blocks {
        for a in 1..=cfg.cumulative(k) {
            psi *= theta_of(ctx, mode, psi_denominator_arg(cfg, k, a, bump)?)?;
        }
    }
    Ok(theta_h.powi(-(cfg.symmetrized_count() as i32)) * psi * w)
}

/// Walks the factor structure of the normalized weight and counts the
/// non-ratio theta factors per summand: the power of the additive-to-
/// multiplicative proportionality constant separating the two backends.
pub fn count_constant_factors(cfg: &WeightConfig) -> i64 {
    let mut count: i64 = 0;
    for k in 1..cfg.blocks {
        for _a in 1..=cfg.cumulative(k) {
            // the c-product: one theta per upper slot (the middle case's own
            // denominator is cancelled by the psi normalizer, +1 - 1 + 1)
            count += cfg.cumulative(k + 1) as i64;
            // cross factors are ratios: net zero
        }
    }
    // the theta(h) prefactor of W cancels against the normalization exactly
    count
}

/// Builds the weight-function data matching a rank-3 label with no lower
/// columns: blocks sized (k1, k2-k1, L2-k2), the partition read off the label
/// sets, and the variable map t = exp(-2 pi i z), h = exp(2 pi i gamma),
/// mu = exp(2 pi i lambda).
pub fn correspondence_map(
    label: &FmLabel,
    z1: &[C64],
    z2: &[C64],
    w2: &[C64],
    params: &DynParams,
) -> Result<WeightConfig, WeightError> {
    if label.l1 != 0 {
        return Err(WeightError::LowerColumnsPresent(label.l1));
    }
    label.validate()?;
    let block1 = label.set_i1.clone();
    let block2: Vec<usize> = label
        .set_i2
        .iter()
        .copied()
        .filter(|p| !label.set_i1.contains(p))
        .collect();
    let block3: Vec<usize> = (1..=label.l2)
        .filter(|p| !label.set_i2.contains(p))
        .collect();
    let t = vec![
        z1.iter().map(|&z| ThetaArg::spectral(z)).collect(),
        z2.iter().map(|&z| ThetaArg::spectral(z)).collect(),
        w2.iter().map(|&w| ThetaArg::spectral(w)).collect(),
    ];
    let h = ThetaArg::parameter(params.gamma);
    let mu = params
        .lambda
        .iter()
        .map(|&l| ThetaArg::parameter(l))
        .collect();
    WeightConfig::new(vec![block1, block2, block3], t, h, mu)
}

/// The counting identities tying the partition p-counts to the label
/// combinatorics; all four must hold exactly for every admissible label.
pub fn counting_identities_hold(label: &FmLabel, cfg: &WeightConfig) -> Result<bool, WeightError> {
    let induced = label.induced_set()?;
    let colors = label.upper_colors();
    // second family versus z
    for a in 1..=label.k2 {
        let position = label.set_i2[a - 1];
        let color = colors[position - 1];
        let count = label.color_count(position, color)? as i32;
        let member = cfg.positions(2)[a - 1];
        let lhs = cfg.p_count(cfg.j_of(2, a)?, member)? as i32 - cfg.p_count(3, member)? as i32;
        let rhs = count - 1 - position as i32 + a as i32;
        if lhs != rhs {
            return Ok(false);
        }
        // the position enumerations themselves must agree
        if member != position {
            return Ok(false);
        }
    }
    // first family versus the second
    for a in 1..=label.k1 {
        let member = cfg.positions(1)[a - 1];
        let lhs = cfg.p_count(cfg.j_of(1, a)?, member)? as i32 - cfg.p_count(2, member)? as i32;
        let rhs = 2 * a as i32 - 1 - induced[a - 1] as i32;
        if lhs != rhs {
            return Ok(false);
        }
        if cfg.j_of(1, a)? != 1 {
            return Ok(false);
        }
    }
    // case trichotomies: slot comparisons match position comparisons
    let first = cfg.positions(1);
    let second = cfg.positions(2);
    for a in 1..=label.k1 {
        for c in 1..=label.k2 {
            let by_positions = second[c - 1].cmp(&first[a - 1]);
            let by_slots = c.cmp(&induced[a - 1]);
            if by_positions != by_slots {
                return Ok(false);
            }
        }
    }
    let third = cfg.positions(3);
    for a in 1..=label.k2 {
        for c in 1..=label.l2 {
            let by_positions = third[c - 1].cmp(&second[a - 1]);
            let by_slots = c.cmp(&label.set_i2[a - 1]);
            if by_positions != by_slots {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Converts a closed-form error into a weight error for mixed test paths.
impl From<ClosedFormError> for WeightError {
    fn from(err: ClosedFormError) -> Self {
        match err {
            ClosedFormError::PoleGuard {
                arg,
                magnitude,
                threshold,
            } => WeightError::PoleGuard {
                arg,
                magnitude,
                threshold,
            },
            ClosedFormError::Precondition(msg) => WeightError::InvalidPartition(msg),
            ClosedFormError::Label(e) => WeightError::Label(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed::eval_e_bar_parts;
    use crate::labels::enumerate_labels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn theta() -> ThetaContext {
        ThetaContext::with_default_tolerance(C64::new(0.0, 0.8)).unwrap()
    }

    fn random_c(rng: &mut ChaCha20Rng) -> C64 {
        C64::new(rng.gen_range(-0.35..0.35), rng.gen_range(-0.05..0.05))
    }

    fn random_params(rng: &mut ChaCha20Rng) -> DynParams {
        DynParams::new(
            (0..3)
                .map(|i| {
                    C64::new(
                        rng.gen_range(-0.4..0.4) + i as f64 * 0.34,
                        rng.gen_range(-0.03..0.03),
                    )
                })
                .collect(),
            C64::new(rng.gen_range(0.12..0.26), rng.gen_range(-0.02..0.02)),
        )
    }

    fn rel_err(a: C64, b: C64) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn two_block_single_variable_closed_form() {
        // One variable in the first block: W is a single product, Sym trivial.
        let ctx = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(167);
        let z = random_c(&mut rng);
        let t1 = random_c(&mut rng);
        let gamma = C64::new(0.21, 0.01);
        let lam = [C64::new(0.11, 0.0), C64::new(0.52, 0.02)];
        let cfg = WeightConfig::new(
            vec![vec![1], vec![]],
            vec![
                vec![ThetaArg::spectral(t1)],
                vec![ThetaArg::spectral(z)],
            ],
            ThetaArg::parameter(gamma),
            vec![ThetaArg::parameter(lam[0]), ThetaArg::parameter(lam[1])],
        )
        .unwrap();
        let got = weight_function(&ctx, &cfg, ThetaMode::Additive).unwrap();
        // i_1^(2) = i_1^(1) = 1: the single middle case with exponent 1
        let expected = ctx.additive(gamma) * ctx.additive(t1 - z + gamma + lam[1] - lam[0])
            / ctx.additive(gamma + lam[1] - lam[0]);
        assert!(rel_err(got, expected) < 1e-12);
    }

    #[test]
    fn symmetrization_makes_inputs_order_free() {
        let mut rng = ChaCha20Rng::seed_from_u64(173);
        let ctx = theta();
        let params = random_params(&mut rng);
        let label = FmLabel::new(1, 2, 0, 3, vec![2], vec![2, 3]).unwrap();
        let z1 = vec![random_c(&mut rng)];
        let z2 = vec![random_c(&mut rng), random_c(&mut rng)];
        let w2: Vec<C64> = (0..3).map(|_| random_c(&mut rng)).collect();
        let cfg = correspondence_map(&label, &z1, &z2, &w2, &params).unwrap();
        let swapped = correspondence_map(
            &label,
            &z1,
            &[z2[1], z2[0]],
            &w2,
            &params,
        )
        .unwrap();
        let a = weight_function(&ctx, &cfg, ThetaMode::Additive).unwrap();
        let b = weight_function(&ctx, &swapped, ThetaMode::Additive).unwrap();
        assert!(rel_err(a, b) < 1e-10);
    }

    #[test]
    fn correspondence_block_sizes() {
        let label = FmLabel::new(1, 2, 0, 3, vec![3], vec![1, 3]).unwrap();
        let params = DynParams::new(
            vec![C64::new(0.1, 0.0), C64::new(0.5, 0.0), C64::new(0.9, 0.0)],
            C64::new(0.2, 0.0),
        );
        let cfg = correspondence_map(
            &label,
            &[C64::new(0.0, 0.0)],
            &[C64::new(0.1, 0.0), C64::new(0.2, 0.0)],
            &[C64::new(0.3, 0.0), C64::new(0.4, 0.0), C64::new(0.5, 0.0)],
            &params,
        )
        .unwrap();
        assert_eq!(cfg.cumulative(1), 1);
        assert_eq!(cfg.cumulative(2), 2);
        assert_eq!(cfg.cumulative(3), 3);
        assert_eq!(cfg.lam, vec![1, 1, 1]);
        assert_eq!(cfg.partition, vec![vec![3], vec![1], vec![2]]);
    }

    #[test]
    fn p_count_and_block_lookup() {
        // partition ({2}, {1}, {3})
        let cfg = WeightConfig::new(
            vec![vec![2], vec![1], vec![3]],
            vec![
                vec![ThetaArg::ONE],
                vec![ThetaArg::ONE, ThetaArg::ONE],
                vec![ThetaArg::ONE, ThetaArg::ONE, ThetaArg::ONE],
            ],
            ThetaArg::ONE,
            vec![ThetaArg::ONE, ThetaArg::ONE, ThetaArg::ONE],
        )
        .unwrap();
        assert_eq!(cfg.p_count(2, 3).unwrap(), 1);
        assert_eq!(cfg.j_of(1, 1).unwrap(), 1);
        for j in 1..=3 {
            assert_eq!(cfg.p_count(j, 1).unwrap(), 0);
        }
        // the full enumeration spans every block
        let blocks: Vec<usize> = (1..=3).map(|a| cfg.j_of(3, a).unwrap()).collect();
        let mut sorted = blocks.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3]);
    }

    #[test]
    fn counting_identities_hold_for_all_small_labels() {
        let params = DynParams::new(
            vec![C64::new(0.1, 0.0), C64::new(0.5, 0.0), C64::new(0.9, 0.0)],
            C64::new(0.2, 0.0),
        );
        for k1 in 0..=2 {
            for k2 in k1..=2 {
                for l2 in k2..=4 {
                    for label in enumerate_labels(k1, k2, 0, l2) {
                        let z1: Vec<C64> = (0..k1).map(|i| C64::new(0.1 * i as f64, 0.0)).collect();
                        let z2: Vec<C64> = (0..k2).map(|i| C64::new(0.2 * i as f64, 0.0)).collect();
                        let w2: Vec<C64> = (0..l2).map(|i| C64::new(0.3 * i as f64, 0.0)).collect();
                        let cfg =
                            correspondence_map(&label, &z1, &z2, &w2, &params).unwrap();
                        assert!(
                            counting_identities_hold(&label, &cfg).unwrap(),
                            "label {label:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn normalized_weight_matches_rescaled_closed_form() {
        let ctx = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(179);
        for k1 in 0..=2 {
            for k2 in k1..=2 {
                for l2 in k2..=3 {
                    for label in enumerate_labels(k1, k2, 0, l2) {
                        let params = random_params(&mut rng);
                        let z1: Vec<C64> = (0..k1).map(|_| random_c(&mut rng)).collect();
                        let z2: Vec<C64> = (0..k2).map(|_| random_c(&mut rng)).collect();
                        let w2: Vec<C64> = (0..l2).map(|_| random_c(&mut rng)).collect();
                        let cfg =
                            correspondence_map(&label, &z1, &z2, &w2, &params).unwrap();
                        let weight =
                            normalized_weight(&ctx, &cfg, ThetaMode::Additive).unwrap();
                        let closed =
                            eval_e_bar_parts(&ctx, &z1, &z2, &w2, &params, &label).unwrap();
                        assert!(
                            rel_err(weight, closed) < 1e-9,
                            "label {label:?}: {:.3e}",
                            rel_err(weight, closed)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn backends_differ_by_counted_constant_power() {
        let ctx = theta();
        let constant = ctx.proportionality_constant().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(181);
        for label in enumerate_labels(1, 2, 0, 3) {
            let params = random_params(&mut rng);
            let z1 = vec![random_c(&mut rng)];
            let z2 = vec![random_c(&mut rng), random_c(&mut rng)];
            let w2: Vec<C64> = (0..3).map(|_| random_c(&mut rng)).collect();
            let cfg = correspondence_map(&label, &z1, &z2, &w2, &params).unwrap();
            let additive = normalized_weight(&ctx, &cfg, ThetaMode::Additive).unwrap();
            let multiplicative =
                normalized_weight(&ctx, &cfg, ThetaMode::Multiplicative).unwrap();
            let count = count_constant_factors(&cfg);
            assert_eq!(
                count,
                (label.k1 * label.k2 + label.k2 * label.l2) as i64
            );
            let predicted = constant.powi(count as i32) * additive;
            assert!(
                rel_err(multiplicative, predicted) < 1e-8,
                "label {label:?}: {:.3e}",
                rel_err(multiplicative, predicted)
            );
        }
    }

    #[test]
    fn psi_normalizer_has_one_factor_per_symmetrized_slot() {
        let label = FmLabel::new(2, 2, 0, 3, vec![1, 3], vec![1, 3]).unwrap();
        let params = DynParams::new(
            vec![C64::new(0.1, 0.0), C64::new(0.5, 0.0), C64::new(0.9, 0.0)],
            C64::new(0.2, 0.0),
        );
        let cfg = correspondence_map(
            &label,
            &[C64::new(0.0, 0.0), C64::new(0.1, 0.0)],
            &[C64::new(0.2, 0.0), C64::new(0.3, 0.0)],
            &[C64::new(0.4, 0.0), C64::new(0.5, 0.0), C64::new(0.6, 0.0)],
            &params,
        )
        .unwrap();
        assert_eq!(psi_factor_count(&cfg), cfg.symmetrized_count());
        assert_eq!(psi_factor_count(&cfg), 2 + 2);
        let ctx = theta();
        let value = psi_normalizer(&ctx, &cfg, ThetaMode::Additive).unwrap();
        assert!(value.norm() > 0.0);
    }

    #[test]
    fn normalization_cancels_mu_denominators() {
        // Drive one middle-case denominator toward its zero: the raw weight
        // function blows up, the normalized one stays put.
        let ctx = theta();
        let label = FmLabel::new(1, 1, 0, 2, vec![2], vec![2]).unwrap();
        let z1 = [C64::new(0.13, 0.02)];
        let z2 = [C64::new(-0.21, 0.01)];
        let w2 = [C64::new(0.33, -0.02), C64::new(0.11, 0.04)];
        let gamma = C64::new(0.2, 0.01);
        let evaluate = |eps: f64| {
            // exponent of the (k=1, a=1) middle case is 2a - induced = 1, so
            // the denominator argument is gamma + lambda_2 - lambda_1;
            // park lambda_2 - lambda_1 at -gamma + eps
            let params = DynParams::new(
                vec![
                    C64::new(0.1, 0.0),
                    C64::new(0.1, 0.0) - gamma + C64::new(eps, 0.0),
                    C64::new(0.9, 0.0),
                ],
                gamma,
            );
            let cfg = correspondence_map(&label, &z1, &z2, &w2, &params).unwrap();
            (
                weight_function(&ctx, &cfg, ThetaMode::Additive).unwrap(),
                normalized_weight(&ctx, &cfg, ThetaMode::Additive).unwrap(),
            )
        };
        let (raw_a, norm_a) = evaluate(1e-4);
        let (raw_b, norm_b) = evaluate(5e-5);
        assert!(raw_b.norm() > 1.5 * raw_a.norm());
        assert!(rel_err(norm_a, norm_b) < 1e-3);
    }

    #[test]
    fn expanded_double_sum_agrees_with_machinery() {
        // Direct expansion of the rank-3 normalized weight with all exponents
        // substituted from the label combinatorics, written independently of
        // the p-count machinery.
        let ctx = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(191);
        let label = FmLabel::new(1, 2, 0, 3, vec![3], vec![1, 3]).unwrap();
        let params = random_params(&mut rng);
        let z1 = vec![random_c(&mut rng)];
        let z2 = vec![random_c(&mut rng), random_c(&mut rng)];
        let w2: Vec<C64> = (0..3).map(|_| random_c(&mut rng)).collect();
        let cfg = correspondence_map(&label, &z1, &z2, &w2, &params).unwrap();
        let machinery = normalized_weight(&ctx, &cfg, ThetaMode::Additive).unwrap();

        // additive reading of the expanded form: every theta argument written
        // out from the label combinatorics
        let th = |z: C64| ctx.additive(z);
        let gamma = params.gamma;
        let lam = &params.lambda;
        let induced = label.induced_set().unwrap();
        let colors = label.upper_colors();
        let mut expanded = C64::new(0.0, 0.0);
        for s1 in [vec![0usize]] {
            for s2 in [vec![0usize, 1], vec![1, 0]] {
                let mut term = C64::new(1.0, 0.0);
                for a in 1..=label.k1 {
                    let za = z1[s1[a - 1]];
                    let slot = induced[a - 1];
                    for c in 1..slot {
                        term *= th(gamma + za - z2[s2[c - 1]]);
                    }
                    term *= th(
                        za - z2[s2[slot - 1]]
                            + gamma * (2.0 * a as f64 - slot as f64)
                            + lam[1]
                            - lam[0],
                    );
                    for c in slot + 1..=label.k2 {
                        term *= th(za - z2[s2[c - 1]]);
                    }
                }
                for a in 1..=label.k2 {
                    let za = z2[s2[a - 1]];
                    let position = label.set_i2[a - 1];
                    let color = colors[position - 1] as usize;
                    let count = label.color_count(position, colors[position - 1]).unwrap();
                    for c in 1..position {
                        term *= th(gamma + za - w2[c - 1]);
                    }
                    term *= th(
                        za - w2[position - 1]
                            + gamma * (a as f64 - position as f64 + count as f64)
                            + lam[2]
                            - lam[color - 1],
                    );
                    for c in position + 1..=label.l2 {
                        term *= th(za - w2[c - 1]);
                    }
                    for b in a + 1..=label.k2 {
                        term *= th(gamma + za - z2[s2[b - 1]]) / th(za - z2[s2[b - 1]]);
                    }
                }
                expanded += term;
            }
        }
        assert!(
            rel_err(machinery, expanded) < 1e-10,
            "{:.3e}",
            rel_err(machinery, expanded)
        );
    }

    #[test]
    fn perturbed_exponent_breaks_the_correspondence() {
        let ctx = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(193);
        let label = FmLabel::new(1, 2, 0, 3, vec![2], vec![2, 3]).unwrap();
        let params = random_params(&mut rng);
        let z1 = vec![random_c(&mut rng)];
        let z2 = vec![random_c(&mut rng), random_c(&mut rng)];
        let w2: Vec<C64> = (0..3).map(|_| random_c(&mut rng)).collect();
        let cfg = correspondence_map(&label, &z1, &z2, &w2, &params).unwrap();
        let bumped = normalized_weight_perturbed(
            &ctx,
            &cfg,
            ThetaMode::Additive,
            Some(PsiExponentBump { k: 2, a: 1, delta: 1 }),
        )
        .unwrap();
        let closed = eval_e_bar_parts(&ctx, &z1, &z2, &w2, &params, &label).unwrap();
        assert!(rel_err(bumped, closed) > 1e-6);
    }

    #[test]
    fn rejects_malformed_partitions() {
        let t = vec![vec![ThetaArg::ONE], vec![ThetaArg::ONE, ThetaArg::ONE]];
        let mu = vec![ThetaArg::ONE, ThetaArg::ONE];
        assert!(WeightConfig::new(vec![vec![1], vec![1]], t.clone(), ThetaArg::ONE, mu.clone())
            .is_err());
        assert!(WeightConfig::new(vec![vec![1], vec![3]], t, ThetaArg::ONE, mu).is_err());
    }
}
