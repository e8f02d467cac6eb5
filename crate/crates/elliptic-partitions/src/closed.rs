//! Closed-form evaluation of the partition functions as symmetrized elliptic
//! multivariable functions.
//!
//! The base form is a k!-term sum over permutations of the row parameters;
//! position data (the label entries) are indexed by the slot a while spectral
//! parameters are indexed by sigma(a). The nested form is a double
//! symmetrization over the two row families; its first region reads the merged
//! spectral sequence with the second-region permutation applied to the z2
//! entries. The rescaled variant clears the slot-indexed denominators and
//! shifts the first-region rows by +gamma and the upper columns by -gamma.
//!
//! Permutations are enumerated lexicographically and terms accumulated in that
//! order, so evaluations are bitwise reproducible.

use crate::labels::{BaseLabel, FmLabel, LabelError};
use crate::lattice::{BaseLattice, FmLattice};
use crate::rmatrix::DynParams;
use crate::theta::ThetaContext;
use itertools::Itertools;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum ClosedFormError {
    #[error("pole guard: |[{arg}]| = {magnitude:.3e} below {threshold:.3e}")]
    PoleGuard {
        arg: C64,
        magnitude: f64,
        threshold: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Label(#[from] LabelError),
}

const POLE_GUARD_RATIO: f64 = 1e-12;

fn guarded(theta: &ThetaContext, arg: C64) -> Result<C64, ClosedFormError> {
    let value = theta.additive(arg);
    let threshold = POLE_GUARD_RATIO * theta.typical_magnitude();
    if value.norm() < threshold {
        return Err(ClosedFormError::PoleGuard {
            arg,
            magnitude: value.norm(),
            threshold,
        });
    }
    Ok(value)
}

fn cross_ratios(
    theta: &ThetaContext,
    z: &[C64],
    perm: &[usize],
    gamma: C64,
) -> Result<C64, ClosedFormError> {
    let mut product = C64::new(1.0, 0.0);
    for a in 0..perm.len() {
        for b in a + 1..perm.len() {
            let diff = z[perm[a]] - z[perm[b]];
            product *= theta.additive(diff + gamma) / guarded(theta, diff)?;
        }
    }
    Ok(product)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (0..k).permutations(k).collect()
}

/// The base closed form: k!-term symmetrized sum with the [gamma]^k prefactor
/// and slot-indexed denominators. Returns 1 for k = 0.
pub fn eval_e_base(theta: &ThetaContext, lat: &BaseLattice) -> Result<C64, ClosedFormError> {
    eval_e_base_parts(theta, &lat.z, &lat.w, &lat.params, &lat.label)
}

pub fn eval_e_base_parts(
    theta: &ThetaContext,
    z: &[C64],
    w: &[C64],
    params: &DynParams,
    label: &BaseLabel,
) -> Result<C64, ClosedFormError> {
    let k = label.k;
    let l = label.l;
    if z.len() != k || w.len() != l {
        return Err(ClosedFormError::Precondition(format!(
            "spectral lengths ({}, {}) do not match the label size ({k}, {l})",
            z.len(),
            w.len()
        )));
    }
    if k == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let gamma = params.gamma;
    let lam12 = params.diff(1, 2);
    let mut prefactor = theta.additive(gamma).powu(k as u32);
    for j in 1..=k {
        prefactor /= guarded(theta, lam12 + gamma * (1.0 - j as f64))?;
    }
    let mut total = C64::new(0.0, 0.0);
    for perm in permutations(k) {
        let mut term = C64::new(1.0, 0.0);
        for a in 1..=k {
            let zs = z[perm[a - 1]];
            let position = label.positions[a - 1];
            term *= theta.additive(
                zs - w[position - 1]
                    + params.diff(2, 1)
                    + gamma * (2.0 * a as f64 - 1.0 - position as f64),
            );
            for i in 1..position {
                term *= theta.additive(zs - w[i - 1]);
            }
            for i in position + 1..=l {
                term *= theta.additive(zs - w[i - 1] - gamma);
            }
        }
        term *= cross_ratios(theta, z, &perm, gamma)?;
        total += term;
    }
    Ok(prefactor * total)
}

/// Slot-indexed denominator data of the nested form: the first-region
/// denominators and the second-region ones read off the label colors.
fn fm_denominators(
    theta: &ThetaContext,
    label: &FmLabel,
    params: &DynParams,
) -> Result<C64, ClosedFormError> {
    let gamma = params.gamma;
    let mut product = C64::new(1.0, 0.0);
    for a in 1..=label.k1 {
        product *= guarded(theta, params.diff(1, 2) + gamma * (1.0 - a as f64))?;
    }
    let colors = label.upper_colors();
    for a in 1..=label.k2 {
        let position = label.set_i2[a - 1];
        let color = colors[position - 1];
        let count = label.color_count(position, color)? as f64;
        product *= guarded(theta, params.diff(color, 3) + gamma * (1.0 - count))?;
    }
    Ok(product)
}

/// The nested closed form: double symmetrized sum over the two row families.
pub fn eval_e_fm(theta: &ThetaContext, lat: &FmLattice) -> Result<C64, ClosedFormError> {
    eval_e_fm_parts(
        theta,
        &lat.z1,
        &lat.z2,
        &lat.w1,
        &lat.w2,
        &lat.params,
        &lat.label,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn eval_e_fm_parts(
    theta: &ThetaContext,
    z1: &[C64],
    z2: &[C64],
    w1: &[C64],
    w2: &[C64],
    params: &DynParams,
    label: &FmLabel,
) -> Result<C64, ClosedFormError> {
    label.validate()?;
    let (k1, k2, l1, l2) = (label.k1, label.k2, label.l1, label.l2);
    if z1.len() != k1 || z2.len() != k2 || w1.len() != l1 || w2.len() != l2 {
        return Err(ClosedFormError::Precondition(
            "spectral lengths do not match the label size".into(),
        ));
    }
    let gamma = params.gamma;
    let induced = label.induced_set()?;
    let colors = label.upper_colors();
    let prefactor = theta.additive(gamma).powu((k1 + k2) as u32)
        / fm_denominators(theta, label, params)?;
    let merged_len = k2 + l1;
    let mut total = C64::new(0.0, 0.0);
    for sigma1 in permutations(k1) {
        for sigma2 in permutations(k2) {
            // merged spectral sequence with the second permutation applied to
            // its z2 entries
            let merged = |i: usize| -> C64 {
                if i <= k2 {
                    z2[sigma2[i - 1]]
                } else {
                    w1[i - 1 - k2]
                }
            };
            let mut term = C64::new(1.0, 0.0);
            for a in 1..=k1 {
                let zs = z1[sigma1[a - 1]];
                let slot = induced[a - 1];
                term *= theta.additive(
                    zs - merged(slot)
                        + params.diff(2, 1)
                        + gamma * (2.0 * a as f64 - 1.0 - slot as f64),
                );
                for i in 1..slot {
                    term *= theta.additive(zs - merged(i));
                }
                for i in slot + 1..=merged_len {
                    term *= theta.additive(zs - merged(i) - gamma);
                }
            }
            term *= cross_ratios(theta, z1, &sigma1, gamma)?;
            for a in 1..=k2 {
                let zs = z2[sigma2[a - 1]];
                let position = label.set_i2[a - 1];
                let color = colors[position - 1];
                let count = label.color_count(position, color)? as f64;
                term *= theta.additive(
                    zs - w2[position - 1]
                        + params.diff(3, color)
                        + gamma * (a as f64 - position as f64 - 1.0 + count),
                );
                for i in 1..position {
                    term *= theta.additive(zs - w2[i - 1]);
                }
                for i in position + 1..=l2 {
                    term *= theta.additive(zs - w2[i - 1] - gamma);
                }
            }
            term *= cross_ratios(theta, z2, &sigma2, gamma)?;
            total += term;
        }
    }
    Ok(prefactor * total)
}

/// The spectral-independent rescaling factor that clears the prefactor of the
/// nested form ahead of the shifted representation.
pub fn rescaling_factor(
    theta: &ThetaContext,
    label: &FmLabel,
    params: &DynParams,
) -> Result<C64, ClosedFormError> {
    let inverse_gammas = theta
        .additive(params.gamma)
        .powu((label.k1 + label.k2) as u32);
    Ok(fm_denominators(theta, label, params)? / inverse_gammas)
}

/// The rescaled closed form for labels with no lower columns: the denominators
/// are cleared and the arguments absorb the +gamma / -gamma shifts.
pub fn eval_e_bar(theta: &ThetaContext, lat: &FmLattice) -> Result<C64, ClosedFormError> {
    eval_e_bar_parts(theta, &lat.z1, &lat.z2, &lat.w2, &lat.params, &lat.label)
}

pub fn eval_e_bar_parts(
    theta: &ThetaContext,
    z1: &[C64],
    z2: &[C64],
    w2: &[C64],
    params: &DynParams,
    label: &FmLabel,
) -> Result<C64, ClosedFormError> {
    label.validate()?;
    if label.l1 != 0 {
        return Err(ClosedFormError::Precondition(format!(
            "the rescaled form requires L1 = 0, got {}",
            label.l1
        )));
    }
    let (k1, k2, l2) = (label.k1, label.k2, label.l2);
    if z1.len() != k1 || z2.len() != k2 || w2.len() != l2 {
        return Err(ClosedFormError::Precondition(
            "spectral lengths do not match the label size".into(),
        ));
    }
    let gamma = params.gamma;
    let induced = label.induced_set()?;
    let colors = label.upper_colors();
    let mut total = C64::new(0.0, 0.0);
    for sigma1 in permutations(k1) {
        for sigma2 in permutations(k2) {
            let mut term = C64::new(1.0, 0.0);
            for a in 1..=k1 {
                let zs = z1[sigma1[a - 1]];
                let slot = induced[a - 1];
                for i in 1..slot {
                    term *= theta.additive(zs - z2[sigma2[i - 1]] + gamma);
                }
                term *= theta.additive(
                    zs - z2[sigma2[slot - 1]]
                        + params.diff(2, 1)
                        + gamma * (2.0 * a as f64 - slot as f64),
                );
                for i in slot + 1..=k2 {
                    term *= theta.additive(zs - z2[sigma2[i - 1]]);
                }
            }
            term *= cross_ratios(theta, z1, &sigma1, gamma)?;
            for a in 1..=k2 {
                let zs = z2[sigma2[a - 1]];
                let position = label.set_i2[a - 1];
                let color = colors[position - 1];
                let count = label.color_count(position, color)? as f64;
                for i in 1..position {
                    term *= theta.additive(zs - w2[i - 1] + gamma);
                }
                term *= theta.additive(
                    zs - w2[position - 1]
                        + params.diff(3, color)
                        + gamma * (a as f64 - position as f64 + count),
                );
                for i in position + 1..=l2 {
                    term *= theta.additive(zs - w2[i - 1]);
                }
            }
            term *= cross_ratios(theta, z2, &sigma2, gamma)?;
            total += term;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{enumerate_base_labels, enumerate_labels};
    use crate::lattice::{brute_force_base, brute_force_fm};
    use crate::rmatrix::RContext;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn theta() -> ThetaContext {
        ThetaContext::with_default_tolerance(C64::new(0.0, 0.8)).unwrap()
    }

    fn random_c(rng: &mut ChaCha20Rng) -> C64 {
        C64::new(rng.gen_range(-0.35..0.35), rng.gen_range(-0.06..0.06))
    }

    fn random_params(rng: &mut ChaCha20Rng, rank: usize) -> DynParams {
        DynParams::new(
            (0..rank)
                .map(|i| {
                    C64::new(
                        rng.gen_range(-0.4..0.4) + i as f64 * 0.33,
                        rng.gen_range(-0.04..0.04),
                    )
                })
                .collect(),
            C64::new(rng.gen_range(0.12..0.27), rng.gen_range(-0.02..0.02)),
        )
    }

    fn rel_err(a: C64, b: C64) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn single_vertex_closed_form() {
        let th = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(127);
        let params = random_params(&mut rng, 2);
        let z = random_c(&mut rng);
        let w = random_c(&mut rng);
        let label = BaseLabel::new(1, 1, vec![1]).unwrap();
        let got = eval_e_base_parts(&th, &[z], &[w], &params, &label).unwrap();
        let expected = th.additive(params.gamma) * th.additive(z - w + params.diff(2, 1))
            / th.additive(params.diff(1, 2));
        assert!(rel_err(got, expected) < 1e-12);
    }

    #[test]
    fn base_form_is_symmetric() {
        let th = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(131);
        let params = random_params(&mut rng, 2);
        let z = vec![random_c(&mut rng), random_c(&mut rng)];
        let w: Vec<C64> = (0..3).map(|_| random_c(&mut rng)).collect();
        let label = BaseLabel::new(3, 2, vec![2, 3]).unwrap();
        let a = eval_e_base_parts(&th, &z, &w, &params, &label).unwrap();
        let swapped = vec![z[1], z[0]];
        let b = eval_e_base_parts(&th, &swapped, &w, &params, &label).unwrap();
        assert!(rel_err(a, b) < 1e-10);
    }

    #[test]
    fn base_form_matches_contraction() {
        let th = theta();
        let ctx = RContext::new(2, th.clone()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(137);
        for l in 1..=4usize {
            for k in 0..=l.min(2) {
                for label in enumerate_base_labels(l, k) {
                    let params = random_params(&mut rng, 2);
                    let lat = BaseLattice {
                        z: (0..k).map(|_| random_c(&mut rng)).collect(),
                        w: (0..l).map(|_| random_c(&mut rng)).collect(),
                        params,
                        label,
                    };
                    let brute = brute_force_base(&ctx, &lat).unwrap();
                    let closed = eval_e_base(&th, &lat).unwrap();
                    assert!(
                        rel_err(brute, closed) < 1e-9,
                        "L={l} k={k} label {:?}: {:.3e}",
                        lat.label.positions,
                        rel_err(brute, closed)
                    );
                }
            }
        }
    }

    #[test]
    fn nested_form_matches_contraction_small() {
        let th = theta();
        let ctx = RContext::new(3, th.clone()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(139);
        for label in enumerate_labels(1, 1, 1, 2) {
            let params = random_params(&mut rng, 3);
            let lat = FmLattice {
                z1: vec![random_c(&mut rng)],
                z2: vec![random_c(&mut rng)],
                w1: vec![random_c(&mut rng)],
                w2: vec![random_c(&mut rng), random_c(&mut rng)],
                params,
                label,
            };
            let brute = brute_force_fm(&ctx, &lat).unwrap();
            let closed = eval_e_fm(&th, &lat).unwrap();
            assert!(
                rel_err(brute, closed) < 1e-9,
                "label {:?}: rel err {:.3e}",
                lat.label,
                rel_err(brute, closed)
            );
        }
    }

    #[test]
    fn nested_form_symmetric_in_second_family() {
        let th = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(149);
        let params = random_params(&mut rng, 3);
        let label = FmLabel::new(1, 2, 1, 3, vec![2], vec![2, 3]).unwrap();
        let z2 = vec![random_c(&mut rng), random_c(&mut rng)];
        let lat = FmLattice {
            z1: vec![random_c(&mut rng)],
            z2: z2.clone(),
            w1: vec![random_c(&mut rng)],
            w2: (0..3).map(|_| random_c(&mut rng)).collect(),
            params,
            label,
        };
        let mut swapped = lat.clone();
        swapped.z2 = vec![z2[1], z2[0]];
        let a = eval_e_fm(&th, &lat).unwrap();
        let b = eval_e_fm(&th, &swapped).unwrap();
        assert!(rel_err(a, b) < 1e-10);
    }

    #[test]
    fn nested_initial_condition_factorizes_into_base() {
        // k2 = 1 with last upper color 1 or 2: the nested form splits into the
        // frozen upper factor and a base form at shifted positions.
        let th = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(151);
        for label in enumerate_labels(1, 1, 1, 2) {
            if label.last_upper_color() != Some(1) && label.last_upper_color() != Some(2) {
                continue;
            }
            let params = random_params(&mut rng, 3);
            let lat = FmLattice {
                z1: vec![random_c(&mut rng)],
                z2: vec![random_c(&mut rng)],
                w1: vec![random_c(&mut rng)],
                w2: vec![random_c(&mut rng), random_c(&mut rng)],
                params: params.clone(),
                label: label.clone(),
            };
            let whole = eval_e_fm(&th, &lat).unwrap();
            let color = label.last_upper_color().unwrap();
            let l2 = label.l2;
            let gamma = params.gamma;
            let mut prefactor = th.additive(gamma)
                * th.additive(
                    lat.z2[0] - lat.w2[l2 - 1] + params.diff(3, color)
                        - gamma * (l2 as f64 - 1.0),
                )
                / th.additive(params.diff(color, 3));
            for j in 1..l2 {
                prefactor *= th.additive(lat.z2[0] - lat.w2[j - 1]);
            }
            let shifted: Vec<usize> = label
                .set_i1
                .iter()
                .map(|&p| p + 1 - l2)
                .collect();
            let base_label = BaseLabel::new(label.l1 + 1, label.k1, shifted).unwrap();
            let mut base_w = vec![lat.z2[0]];
            base_w.extend_from_slice(&lat.w1);
            let base =
                eval_e_base_parts(&th, &lat.z1, &base_w, &params, &base_label).unwrap();
            assert!(
                rel_err(whole, prefactor * base) < 1e-9,
                "label {:?}: {:.3e}",
                label,
                rel_err(whole, prefactor * base)
            );
        }
    }

    #[test]
    fn rescaled_form_agrees_with_rescaled_shifted_nested_form() {
        let th = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(157);
        for label in enumerate_labels(1, 2, 0, 3) {
            let params = random_params(&mut rng, 3);
            let gamma = params.gamma;
            let z1 = vec![random_c(&mut rng)];
            let z2 = vec![random_c(&mut rng), random_c(&mut rng)];
            let w2: Vec<C64> = (0..3).map(|_| random_c(&mut rng)).collect();
            let bar = eval_e_bar_parts(&th, &z1, &z2, &w2, &params, &label).unwrap();
            let z1_shifted: Vec<C64> = z1.iter().map(|&v| v + gamma).collect();
            let w2_shifted: Vec<C64> = w2.iter().map(|&v| v - gamma).collect();
            let nested = eval_e_fm_parts(
                &th,
                &z1_shifted,
                &z2,
                &[],
                &w2_shifted,
                &params,
                &label,
            )
            .unwrap();
            let factor = rescaling_factor(&th, &label, &params).unwrap();
            assert!(
                rel_err(bar, factor * nested) < 1e-10,
                "label {:?}: {:.3e}",
                label,
                rel_err(bar, factor * nested)
            );
        }
    }

    #[test]
    fn closed_forms_invariant_under_global_lambda_shift() {
        let th = theta();
        let mut rng = ChaCha20Rng::seed_from_u64(163);
        let params = random_params(&mut rng, 3);
        let offset = C64::new(0.21, 0.03);
        let shifted = DynParams::new(
            params.lambda.iter().map(|&l| l + offset).collect(),
            params.gamma,
        );
        let label = FmLabel::new(1, 1, 1, 2, vec![1], vec![1]).unwrap();
        let lat = FmLattice {
            z1: vec![random_c(&mut rng)],
            z2: vec![random_c(&mut rng)],
            w1: vec![random_c(&mut rng)],
            w2: vec![random_c(&mut rng), random_c(&mut rng)],
            params: params.clone(),
            label,
        };
        let mut moved = lat.clone();
        moved.params = shifted;
        let a = eval_e_fm(&th, &lat).unwrap();
        let b = eval_e_fm(&th, &moved).unwrap();
        assert!(rel_err(a, b) < 1e-10);
    }

    #[test]
    fn bar_requires_no_lower_columns() {
        let th = theta();
        let label = FmLabel::new(1, 1, 1, 2, vec![1], vec![1]).unwrap();
        let err = eval_e_bar_parts(
            &th,
            &[C64::new(0.1, 0.0)],
            &[C64::new(0.2, 0.0)],
            &[C64::new(0.3, 0.0), C64::new(0.4, 0.0)],
            &DynParams::new(
                vec![C64::new(0.1, 0.0), C64::new(0.5, 0.0), C64::new(0.9, 0.0)],
                C64::new(0.2, 0.0),
            ),
            &label,
        );
        assert!(matches!(err, Err(ClosedFormError::Precondition(_))));
    }
}
