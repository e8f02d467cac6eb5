//! Dynamical R-matrix vertex weights and the dynamical Yang-Baxter residual.
//!
//! The matrix element `<a_out| <b_out| R(u, lambda) |a_in> |b_in>` is nonzero
//! only when the color multisets agree (ice rule). Writing `mu_ab` for
//! `lambda_a - lambda_b`, the nonzero weights are
//!
//! ```text
//! (c,c) -> (c,c)   :  [u - gamma]
//! (a,b) -> (a,b)   :  [u] [mu_ab + gamma] / [mu_ab]      (a != b)
//! (a,b) -> (b,a)   :  [gamma] [u - mu_ab] / [mu_ab]      (a != b)
//! ```
//!
//! Only differences of lambda components enter, so shifting every component by
//! a common constant leaves every weight unchanged. The table is pinned by the
//! closed single-row evaluations and the frozen-column products of the lattice
//! module; the Yang-Baxter residual below checks the face-type equation
//!
//! ```text
//! R12(z12, l - g h3) R13(z13, l) R23(z23, l - g h1)
//!   = R23(z23, l) R13(z13, l - g h2) R12(z12, l)
//! ```
//!
//! where `h_i` reads the color of the bystander space.

use crate::theta::{ThetaContext, ThetaError};
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum RMatrixError {
    #[error("color {0} out of range for rank {1}")]
    ColorOutOfRange(u8, usize),
    #[error("pole guard: |[{arg}]| = {magnitude:.3e} below {threshold:.3e}")]
    PoleGuard {
        arg: C64,
        magnitude: f64,
        threshold: f64,
    },
    #[error("rank {0} unsupported (expected 2 or 3)")]
    UnsupportedRank(usize),
    #[error(transparent)]
    Theta(#[from] ThetaError),
}

/// Dynamical parameters: the lambda vector and the step gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct DynParams {
    pub lambda: Vec<C64>,
    pub gamma: C64,
}

impl DynParams {
    pub fn new(lambda: Vec<C64>, gamma: C64) -> Self {
        Self { lambda, gamma }
    }

    /// lambda with the component of `state` (1-based color) lowered by gamma.
    pub fn shift(&self, state: u8) -> Self {
        let mut lambda = self.lambda.clone();
        lambda[state as usize - 1] -= self.gamma;
        Self {
            lambda,
            gamma: self.gamma,
        }
    }

    /// lambda_a - lambda_b for 1-based colors.
    pub fn diff(&self, a: u8, b: u8) -> C64 {
        self.lambda[a as usize - 1] - self.lambda[b as usize - 1]
    }

    /// Rank-2 slice (lambda_1, lambda_2) with the same gamma.
    pub fn rank2(&self) -> Self {
        Self {
            lambda: self.lambda[..2].to_vec(),
            gamma: self.gamma,
        }
    }
}

/// A deliberate scaling of one directed vertex weight, for mutation tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub a_in: u8,
    pub b_in: u8,
    pub a_out: u8,
    pub b_out: u8,
    pub factor: f64,
}

#[derive(Debug, Clone)]
pub struct RContext {
    rank: usize,
    theta: ThetaContext,
    perturbation: Option<Perturbation>,
}

const POLE_GUARD_RATIO: f64 = 1e-12;

impl RContext {
    pub fn new(rank: usize, theta: ThetaContext) -> Result<Self, RMatrixError> {
        if !(2..=3).contains(&rank) {
            return Err(RMatrixError::UnsupportedRank(rank));
        }
        Ok(Self {
            rank,
            theta,
            perturbation: None,
        })
    }

    pub fn with_perturbation(mut self, perturbation: Perturbation) -> Self {
        self.perturbation = Some(perturbation);
        self
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn perturbation(&self) -> Option<Perturbation> {
        self.perturbation
    }

    pub fn theta(&self) -> &ThetaContext {
        self.theta_ref()
    }

    fn theta_ref(&self) -> &ThetaContext {
        &self.theta
    }

    fn guarded_theta(&self, arg: C64) -> Result<C64, RMatrixError> {
        let value = self.theta.additive(arg);
        let threshold = POLE_GUARD_RATIO * self.theta.typical_magnitude();
        if value.norm() < threshold {
            return Err(RMatrixError::PoleGuard {
                arg,
                magnitude: value.norm(),
                threshold,
            });
        }
        Ok(value)
    }

    /// The vertex weight `<a_out|<b_out| R(u, lambda) |a_in>|b_in>`.
    pub fn r_entry(
        &self,
        u: C64,
        params: &DynParams,
        a_in: u8,
        b_in: u8,
        a_out: u8,
        b_out: u8,
    ) -> Result<C64, RMatrixError> {
        for &c in &[a_in, b_in, a_out, b_out] {
            if c < 1 || c as usize > self.rank {
                return Err(RMatrixError::ColorOutOfRange(c, self.rank));
            }
        }
        let conserved = (a_in == a_out && b_in == b_out) || (a_in == b_out && b_in == a_out);
        if !conserved {
            return Ok(C64::new(0.0, 0.0));
        }
        let th = |z: C64| self.theta.additive(z);
        let gamma = params.gamma;
        let value = if a_in == b_in {
            // both strands carry the same color
            th(u - gamma)
        } else if a_out == a_in && b_out == b_in {
            let mu = params.diff(a_in, b_in);
            th(u) * th(mu + gamma) / self.guarded_theta(mu)?
        } else {
            let mu = params.diff(a_in, b_in);
            th(gamma) * th(u - mu) / self.guarded_theta(mu)?
        };
        Ok(self.apply_perturbation(value, a_in, b_in, a_out, b_out))
    }

    fn apply_perturbation(&self, value: C64, a_in: u8, b_in: u8, a_out: u8, b_out: u8) -> C64 {
        match self.perturbation {
            Some(p) if (p.a_in, p.b_in, p.a_out, p.b_out) == (a_in, b_in, a_out, b_out) => {
                value * p.factor
            }
            _ => value,
        }
    }

    /// Every nonzero matrix element of R(u, lambda), indexed by
    /// (a_in, b_in, a_out, b_out).
    pub fn weight_table(
        &self,
        u: C64,
        params: &DynParams,
    ) -> Result<Vec<((u8, u8, u8, u8), C64)>, RMatrixError> {
        let n = self.rank as u8;
        let mut table = Vec::new();
        for a_in in 1..=n {
            for b_in in 1..=n {
                for a_out in 1..=n {
                    for b_out in 1..=n {
                        let value = self.r_entry(u, params, a_in, b_in, a_out, b_out)?;
                        if value != C64::new(0.0, 0.0) {
                            table.push(((a_in, b_in, a_out, b_out), value));
                        }
                    }
                }
            }
        }
        Ok(table)
    }

    /// Maximum normalized entry of LHS - RHS of the dynamical Yang-Baxter
    /// equation on the triple tensor space.
    pub fn dybe_residual(
        &self,
        z12: C64,
        z13: C64,
        z23: C64,
        params: &DynParams,
    ) -> Result<f64, RMatrixError> {
        let lhs_factors = [
            self.factor_matrix(0, 1, z12, params, Some(2))?,
            self.factor_matrix(0, 2, z13, params, None)?,
            self.factor_matrix(1, 2, z23, params, Some(0))?,
        ];
        let rhs_factors = [
            self.factor_matrix(1, 2, z23, params, None)?,
            self.factor_matrix(0, 2, z13, params, Some(1))?,
            self.factor_matrix(0, 1, z12, params, None)?,
        ];
        let dim = self.rank.pow(3);
        let lhs = mat_mul(&mat_mul(&lhs_factors[0], &lhs_factors[1], dim), &lhs_factors[2], dim);
        let rhs = mat_mul(&mat_mul(&rhs_factors[0], &rhs_factors[1], dim), &rhs_factors[2], dim);
        let scale = lhs
            .iter()
            .chain(rhs.iter())
            .map(|v| v.norm())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let worst = lhs
            .iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        Ok(worst / scale)
    }

    /// Matrix of R acting on spaces (p, q) of the triple product, shifted by
    /// minus gamma times the weight of `bystander` when requested.
    fn factor_matrix(
        &self,
        p: usize,
        q: usize,
        u: C64,
        params: &DynParams,
        shift_by: Option<usize>,
    ) -> Result<Vec<C64>, RMatrixError> {
        let n = self.rank;
        let dim = n.pow(3);
        let mut matrix = vec![C64::new(0.0, 0.0); dim * dim];
        let bystander = (0..3).find(|s| *s != p && *s != q).unwrap();
        for input in 0..dim {
            let in_colors = decode(input, n);
            let effective = match shift_by {
                Some(s) => {
                    debug_assert_eq!(s, bystander);
                    params.shift(in_colors[s])
                }
                None => params.clone(),
            };
            for (ap, aq) in color_pairs(n) {
                let weight =
                    self.r_entry(u, &effective, in_colors[p], in_colors[q], ap, aq)?;
                if weight == C64::new(0.0, 0.0) {
                    continue;
                }
                let mut out_colors = in_colors;
                out_colors[p] = ap;
                out_colors[q] = aq;
                matrix[encode(&out_colors, n) * dim + input] += weight;
            }
        }
        Ok(matrix)
    }
}

fn color_pairs(n: usize) -> impl Iterator<Item = (u8, u8)> {
    (1..=n as u8).flat_map(move |a| (1..=n as u8).map(move |b| (a, b)))
}

fn decode(index: usize, n: usize) -> [u8; 3] {
    [
        (index / (n * n)) as u8 + 1,
        ((index / n) % n) as u8 + 1,
        (index % n) as u8 + 1,
    ]
}

fn encode(colors: &[u8; 3], n: usize) -> usize {
    (colors[0] as usize - 1) * n * n + (colors[1] as usize - 1) * n + (colors[2] as usize - 1)
}

fn mat_mul(a: &[C64], b: &[C64], dim: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn theta(tau: C64) -> ThetaContext {
        ThetaContext::with_default_tolerance(tau).unwrap()
    }

    fn random_params(rng: &mut ChaCha20Rng, rank: usize) -> DynParams {
        let lambda = (0..rank)
            .map(|_| C64::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.05..0.05)))
            .collect();
        let gamma = C64::new(rng.gen_range(0.1..0.3), rng.gen_range(-0.03..0.03));
        DynParams::new(lambda, gamma)
    }

    fn random_u(rng: &mut ChaCha20Rng) -> C64 {
        C64::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.08..0.08))
    }

    #[test]
    fn ice_rule_zeros_are_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for rank in [2usize, 3] {
            let ctx = RContext::new(rank, theta(C64::new(0.0, 0.8))).unwrap();
            let params = random_params(&mut rng, rank);
            let u = random_u(&mut rng);
            for a_in in 1..=rank as u8 {
                for b_in in 1..=rank as u8 {
                    for a_out in 1..=rank as u8 {
                        for b_out in 1..=rank as u8 {
                            let mut sorted_in = [a_in, b_in];
                            let mut sorted_out = [a_out, b_out];
                            sorted_in.sort_unstable();
                            sorted_out.sort_unstable();
                            if sorted_in != sorted_out {
                                let v = ctx
                                    .r_entry(u, &params, a_in, b_in, a_out, b_out)
                                    .unwrap();
                                assert_eq!(v, C64::new(0.0, 0.0));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn exchange_entry_matches_single_site_evaluation() {
        // <2|_a <1|_1 R(z-w, lambda) |1>_a |2>_1 = [g][z-w+l2-l1]/[l1-l2]
        let th = theta(C64::new(0.0, 0.8));
        let ctx = RContext::new(2, th.clone()).unwrap();
        let params = DynParams::new(
            vec![C64::new(0.23, 0.01), C64::new(-0.17, -0.02)],
            C64::new(0.19, 0.005),
        );
        let u = C64::new(0.31, 0.02);
        let got = ctx.r_entry(u, &params, 1, 2, 2, 1).unwrap();
        let expected = th.additive(params.gamma)
            * th.additive(u + params.lambda[1] - params.lambda[0])
            / th.additive(params.lambda[0] - params.lambda[1]);
        assert!((got - expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn weights_depend_only_on_lambda_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        let ctx = RContext::new(3, theta(C64::new(0.0, 0.8))).unwrap();
        let params = random_params(&mut rng, 3);
        let offset = C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.2..0.2));
        let shifted = DynParams::new(
            params.lambda.iter().map(|&l| l + offset).collect(),
            params.gamma,
        );
        let u = random_u(&mut rng);
        for (key, value) in ctx.weight_table(u, &params).unwrap() {
            let other = ctx
                .r_entry(u, &shifted, key.0, key.1, key.2, key.3)
                .unwrap();
            assert!((value - other).norm() <= 1e-12 * value.norm().max(1.0));
        }
    }

    #[test]
    fn rank_three_restricts_to_rank_two() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let th = theta(C64::new(0.0, 0.8));
        let ctx3 = RContext::new(3, th.clone()).unwrap();
        let ctx2 = RContext::new(2, th).unwrap();
        let params3 = random_params(&mut rng, 3);
        let params2 = params3.rank2();
        let u = random_u(&mut rng);
        for a_in in 1..=2u8 {
            for b_in in 1..=2u8 {
                for a_out in 1..=2u8 {
                    for b_out in 1..=2u8 {
                        let v3 = ctx3.r_entry(u, &params3, a_in, b_in, a_out, b_out).unwrap();
                        let v2 = ctx2.r_entry(u, &params2, a_in, b_in, a_out, b_out).unwrap();
                        assert!((v3 - v2).norm() <= 1e-13 * v3.norm().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn shift_lambda_is_componentwise() {
        let params = DynParams::new(
            vec![C64::new(0.1, 0.0), C64::new(0.2, 0.0), C64::new(0.3, 0.0)],
            C64::new(0.05, 0.0),
        );
        let shifted = params.shift(2);
        assert_eq!(shifted.lambda[0], params.lambda[0]);
        assert_eq!(shifted.lambda[1], params.lambda[1] - params.gamma);
        assert_eq!(shifted.lambda[2], params.lambda[2]);
        assert_eq!(shifted.gamma, params.gamma);

        // composing shifts for states (1,1,2) lowers lambda by gamma * (2,1,0)
        let composed = params.shift(1).shift(1).shift(2);
        assert_eq!(composed.lambda[0], params.lambda[0] - 2.0 * params.gamma);
        assert_eq!(composed.lambda[1], params.lambda[1] - params.gamma);
        assert_eq!(composed.lambda[2], params.lambda[2]);
    }

    #[test]
    fn dybe_residual_vanishes_for_both_ranks() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        for rank in [2usize, 3] {
            let ctx = RContext::new(rank, theta(C64::new(0.0, 0.8))).unwrap();
            for _ in 0..20 {
                let params = random_params(&mut rng, rank);
                let z12 = random_u(&mut rng);
                let z13 = random_u(&mut rng);
                let z23 = z13 - z12;
                let residual = ctx.dybe_residual(z12, z13, z23, &params).unwrap();
                assert!(
                    residual < 1e-10,
                    "rank {rank}: residual {residual:.3e} with params {params:?}"
                );
            }
        }
    }

    #[test]
    fn dybe_residual_survives_degenerate_spectral_point() {
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        let ctx = RContext::new(2, theta(C64::new(0.0, 0.8))).unwrap();
        let params = random_params(&mut rng, 2);
        let z13 = random_u(&mut rng);
        let residual = ctx
            .dybe_residual(C64::new(0.0, 0.0), z13, z13, &params)
            .unwrap();
        assert!(residual < 1e-10, "residual {residual:.3e}");
    }

    #[test]
    fn perturbed_entry_breaks_the_equation() {
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let ctx = RContext::new(3, theta(C64::new(0.0, 0.8)))
            .unwrap()
            .with_perturbation(Perturbation {
                a_in: 1,
                b_in: 2,
                a_out: 2,
                b_out: 1,
                factor: 1.0 + 1e-4,
            });
        let params = random_params(&mut rng, 3);
        let z12 = random_u(&mut rng);
        let z13 = random_u(&mut rng);
        let residual = ctx.dybe_residual(z12, z13, z13 - z12, &params).unwrap();
        assert!(residual > 1e-7, "residual {residual:.3e}");
    }

    #[test]
    fn color_out_of_range_is_reported() {
        let ctx = RContext::new(2, theta(C64::new(0.0, 0.8))).unwrap();
        let params = DynParams::new(vec![C64::new(0.1, 0.0), C64::new(0.4, 0.0)], C64::new(0.2, 0.0));
        assert!(matches!(
            ctx.r_entry(C64::new(0.1, 0.0), &params, 3, 1, 1, 3),
            Err(RMatrixError::ColorOutOfRange(3, 2))
        ));
    }

    #[test]
    fn pole_guard_triggers_near_coincident_lambdas() {
        let ctx = RContext::new(2, theta(C64::new(0.0, 0.8))).unwrap();
        let params = DynParams::new(
            vec![C64::new(0.1, 0.0), C64::new(0.1 + 1e-15, 0.0)],
            C64::new(0.2, 0.0),
        );
        let got = ctx.r_entry(C64::new(0.3, 0.0), &params, 1, 2, 2, 1);
        assert!(matches!(got, Err(RMatrixError::PoleGuard { .. })));
    }
}
