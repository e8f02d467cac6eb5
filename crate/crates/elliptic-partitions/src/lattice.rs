//! Exact state-sum contraction of the lattice partition functions.
//!
//! A monodromy row applies the ordered product `R_{aL} ... R_{a1}` to the aux
//! space and the site spaces, with the dynamical vector at column j lowered by
//! gamma times the weights of the already-processed site states 1..j-1. Rows
//! compose bottom-up; the dynamical vector of a later-acting row is lowered by
//! the weights of the aux states of the rows that act after it, which are
//! still in their boundary states at that point. Every dynamical shift is
//! therefore evaluated on definite color states and each term of the state sum
//! is an ordinary product of vertex weights.

use crate::labels::{BaseLabel, FmLabel, LabelError};
use crate::rmatrix::{DynParams, RContext, RMatrixError};
use crate::theta::ThetaContext;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum LatticeError {
    #[error("length mismatch: expected {expected} {what}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("contraction budget exceeded: about {estimate:.3e} weighted terms (budget {budget:.3e})")]
    SizeGuard { estimate: f64, budget: f64 },
    #[error("frozen-column precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    RMatrix(#[from] RMatrixError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Default cap on the weighted-term estimate of a contraction (3^14).
pub const DEFAULT_TERM_BUDGET: f64 = 4_782_969.0;

/// A base-lattice instance: row and column spectral parameters bound to a
/// label, with rank-2 dynamics.
#[derive(Debug, Clone)]
pub struct BaseLattice {
    pub z: Vec<C64>,
    pub w: Vec<C64>,
    pub params: DynParams,
    pub label: BaseLabel,
}

impl BaseLattice {
    pub fn validate(&self) -> Result<(), LatticeError> {
        if self.z.len() != self.label.k {
            return Err(LatticeError::LengthMismatch {
                what: "row parameters",
                expected: self.label.k,
                got: self.z.len(),
            });
        }
        if self.w.len() != self.label.l {
            return Err(LatticeError::LengthMismatch {
                what: "column parameters",
                expected: self.label.l,
                got: self.w.len(),
            });
        }
        Ok(())
    }
}

/// A nested-lattice instance: the four spectral families bound to a label,
/// with rank-3 dynamics.
#[derive(Debug, Clone)]
pub struct FmLattice {
    pub z1: Vec<C64>,
    pub z2: Vec<C64>,
    pub w1: Vec<C64>,
    pub w2: Vec<C64>,
    pub params: DynParams,
    pub label: FmLabel,
}

impl FmLattice {
    pub fn validate(&self) -> Result<(), LatticeError> {
        let checks = [
            ("z1", self.z1.len(), self.label.k1),
            ("z2", self.z2.len(), self.label.k2),
            ("w1", self.w1.len(), self.label.l1),
            ("w2", self.w2.len(), self.label.l2),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(LatticeError::LengthMismatch {
                    what: match what {
                        "z1" => "z1 parameters",
                        "z2" => "z2 parameters",
                        "w1" => "w1 parameters",
                        _ => "w2 parameters",
                    },
                    expected,
                    got,
                });
            }
        }
        self.label.validate()?;
        Ok(())
    }

    /// Columns of the lower region: the z2 positions first, then w1.
    pub fn merged_columns(&self) -> Vec<C64> {
        let mut cols = self.z2.clone();
        cols.extend_from_slice(&self.w1);
        cols
    }
}

/// One matrix element of the monodromy row
/// `<aux_out| <site_out| T_a(z | sites | lambda) |aux_in> |site_in>`,
/// summed over the internal aux chain.
pub fn monodromy_element(
    ctx: &RContext,
    z: C64,
    sites: &[C64],
    params: &DynParams,
    aux_in: u8,
    aux_out: u8,
    site_in: &[u8],
    site_out: &[u8],
) -> Result<C64, LatticeError> {
    let l = sites.len();
    if site_in.len() != l {
        return Err(LatticeError::LengthMismatch {
            what: "incoming site states",
            expected: l,
            got: site_in.len(),
        });
    }
    if site_out.len() != l {
        return Err(LatticeError::LengthMismatch {
            what: "outgoing site states",
            expected: l,
            got: site_out.len(),
        });
    }
    if l == 0 {
        return Ok(if aux_in == aux_out {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        });
    }
    // Column j sees lambda lowered by the outgoing states of columns 1..j-1.
    let mut column_params = Vec::with_capacity(l);
    let mut rolling = params.clone();
    for j in 0..l {
        column_params.push(rolling.clone());
        rolling = rolling.shift(site_out[j]);
    }
    chain_sum(
        ctx,
        z,
        sites,
        &column_params,
        site_in,
        site_out,
        0,
        aux_in,
        aux_out,
        C64::new(1.0, 0.0),
    )
}

#[allow(clippy::too_many_arguments)]
fn chain_sum(
    ctx: &RContext,
    z: C64,
    sites: &[C64],
    column_params: &[DynParams],
    site_in: &[u8],
    site_out: &[u8],
    j: usize,
    aux: u8,
    aux_out: u8,
    acc: C64,
) -> Result<C64, LatticeError> {
    if j == sites.len() {
        return Ok(if aux == aux_out {
            acc
        } else {
            C64::new(0.0, 0.0)
        });
    }
    // Ice rule: the outgoing aux color is either the incoming aux color
    // (pass-through) or the incoming site color (exchange).
    let mut candidates = [aux, site_in[j]];
    if candidates[0] == candidates[1] {
        candidates[1] = 0;
    }
    let mut total = C64::new(0.0, 0.0);
    for &next in candidates.iter().filter(|&&c| c != 0) {
        let weight = ctx.r_entry(
            z - sites[j],
            &column_params[j],
            aux,
            site_in[j],
            next,
            site_out[j],
        )?;
        if weight == C64::new(0.0, 0.0) {
            continue;
        }
        total += chain_sum(
            ctx,
            z,
            sites,
            column_params,
            site_in,
            site_out,
            j + 1,
            next,
            aux_out,
            acc * weight,
        )?;
    }
    Ok(total)
}

/// One row of a region contraction, in action order.
#[derive(Debug, Clone)]
struct RowSpec {
    z: C64,
    aux_in: u8,
    aux_out: u8,
    params: DynParams,
}

/// Contracts a rectangular region by propagating the amplitude vector over
/// site configurations through the rows, first-acting row first.
fn contract_region(
    ctx: &RContext,
    rows: &[RowSpec],
    columns: &[C64],
    bottom: &[u8],
    top: &[u8],
    budget: f64,
) -> Result<C64, LatticeError> {
    let c = columns.len();
    let rank = ctx.rank();
    let estimate = (rank as f64).powi((2 * c).saturating_sub(1) as i32) * rows.len().max(1) as f64;
    if estimate > budget {
        return Err(LatticeError::SizeGuard { estimate, budget });
    }
    if rows.is_empty() {
        return Ok(if bottom == top {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        });
    }
    let configs = rank.pow(c as u32);
    let mut amplitudes = vec![C64::new(0.0, 0.0); configs];
    amplitudes[encode_config(bottom, rank)] = C64::new(1.0, 0.0);
    let mut scratch_in = vec![0u8; c];
    let mut scratch_out = vec![0u8; c];
    for row in rows {
        let mut next = vec![C64::new(0.0, 0.0); configs];
        for (index, &amp) in amplitudes.iter().enumerate() {
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            decode_config(index, rank, &mut scratch_in);
            for out_index in 0..configs {
                decode_config(out_index, rank, &mut scratch_out);
                if !conserves(&scratch_in, &scratch_out, row.aux_in, row.aux_out, rank) {
                    continue;
                }
                let element = monodromy_element(
                    ctx,
                    row.z,
                    columns,
                    &row.params,
                    row.aux_in,
                    row.aux_out,
                    &scratch_in,
                    &scratch_out,
                )?;
                if element != C64::new(0.0, 0.0) {
                    next[out_index] += amp * element;
                }
            }
        }
        amplitudes = next;
    }
    Ok(amplitudes[encode_config(top, rank)])
}

fn conserves(site_in: &[u8], site_out: &[u8], aux_in: u8, aux_out: u8, rank: usize) -> bool {
    let mut counts = [0i32; 4];
    counts[aux_in as usize - 1] += 1;
    counts[aux_out as usize - 1] -= 1;
    for &s in site_in {
        counts[s as usize - 1] += 1;
    }
    for &s in site_out {
        counts[s as usize - 1] -= 1;
    }
    counts[..rank].iter().all(|&d| d == 0)
}

fn encode_config(states: &[u8], rank: usize) -> usize {
    states
        .iter()
        .fold(0usize, |acc, &s| acc * rank + (s as usize - 1))
}

fn decode_config(mut index: usize, rank: usize, out: &mut [u8]) {
    for slot in out.iter_mut().rev() {
        *slot = (index % rank) as u8 + 1;
        index /= rank;
    }
}

/// Base partition function by exact contraction. The empty lattice (k = 0)
/// contracts to 1, closing the recursion.
pub fn brute_force_base(ctx: &RContext, lat: &BaseLattice) -> Result<C64, LatticeError> {
    lat.validate()?;
    let rows = base_rows(&lat.z, &lat.params);
    contract_region(
        ctx,
        &rows,
        &lat.w,
        &vec![2u8; lat.label.l],
        &lat.label.colors(),
        DEFAULT_TERM_BUDGET,
    )
}

/// Rows of a rank-2-type region in action order: the last row acts first and
/// carries the deepest boundary shift, one step of color 1 per later row.
fn base_rows(z: &[C64], params: &DynParams) -> Vec<RowSpec> {
    let k = z.len();
    (1..=k)
        .rev()
        .map(|m| {
            let mut row_params = params.clone();
            for _ in 0..m - 1 {
                row_params = row_params.shift(1);
            }
            RowSpec {
                z: z[m - 1],
                aux_in: 1,
                aux_out: 2,
                params: row_params,
            }
        })
        .collect()
}

/// Nested partition function by exact contraction: the upper region couples to
/// the lower region through the summed intermediate colors, both regions
/// anchored at the same dynamical vector.
pub fn brute_force_fm(ctx: &RContext, lat: &FmLattice) -> Result<C64, LatticeError> {
    lat.validate()?;
    let k2 = lat.label.k2;
    let upper_top = lat.label.upper_colors();
    let lower_colors = lat.label.lower_colors();
    let merged = lat.merged_columns();
    let mut total = C64::new(0.0, 0.0);
    let mut intermediates = vec![1u8; k2];
    loop {
        let upper_rows: Vec<RowSpec> = (1..=k2)
            .rev()
            .map(|m| {
                let mut row_params = lat.params.clone();
                for m_prior in 0..m - 1 {
                    row_params = row_params.shift(intermediates[m_prior]);
                }
                RowSpec {
                    z: lat.z2[m - 1],
                    aux_in: intermediates[m - 1],
                    aux_out: 3,
                    params: row_params,
                }
            })
            .collect();
        let upper = contract_region(
            ctx,
            &upper_rows,
            &lat.w2,
            &vec![3u8; lat.label.l2],
            &upper_top,
            DEFAULT_TERM_BUDGET,
        )?;
        if upper != C64::new(0.0, 0.0) {
            let mut lower_top = intermediates.clone();
            lower_top.extend_from_slice(&lower_colors);
            let lower_rows = base_rows(&lat.z1, &lat.params);
            let lower = contract_region(
                ctx,
                &lower_rows,
                &merged,
                &vec![2u8; merged.len()],
                &lower_top,
                DEFAULT_TERM_BUDGET,
            )?;
            total += upper * lower;
        }
        // next intermediate color word over {1,2}^{k2}
        let mut pos = 0;
        loop {
            if pos == k2 {
                return Ok(total);
            }
            if intermediates[pos] == 1 {
                intermediates[pos] = 2;
                break;
            }
            intermediates[pos] = 1;
            pos += 1;
        }
    }
}

/// Product of the vertex weights along the rightmost column of a base lattice
/// whose label ends at the last column, for the summand whose color-1 line
/// turns up at row `ell`. Only column counts enter the dynamical shifts, so
/// the product is the same for every summand of the remaining lattice.
pub fn frozen_column_factor_base(
    ctx: &RContext,
    lat: &BaseLattice,
    ell: usize,
) -> Result<C64, LatticeError> {
    lat.validate()?;
    let k = lat.label.k;
    let l = lat.label.l;
    if !lat.label.last_is_one() {
        return Err(LatticeError::Precondition(
            "base frozen column requires the last position to equal L".into(),
        ));
    }
    if ell < 1 || ell > k {
        return Err(LatticeError::Precondition(format!(
            "turning row {ell} outside 1..={k}"
        )));
    }
    let w_last = lat.w[l - 1];
    let mut product = C64::new(1.0, 0.0);
    for m in 1..=k {
        // Row shift plus the column counts left of the last column; the
        // totals are m-independent in the color-1 component.
        let shifts_one = k - usize::from(m <= ell);
        let shifts_two =
            (l as i64 - k as i64 + m as i64 - 2 + i64::from(m <= ell)) as usize;
        let mut mu = lat.params.clone();
        for _ in 0..shifts_one {
            mu = mu.shift(1);
        }
        for _ in 0..shifts_two {
            mu = mu.shift(2);
        }
        let u = lat.z[m - 1] - w_last;
        let weight = match m.cmp(&ell) {
            std::cmp::Ordering::Less => ctx.r_entry(u, &mu, 2, 1, 2, 1)?,
            std::cmp::Ordering::Equal => ctx.r_entry(u, &mu, 1, 2, 2, 1)?,
            std::cmp::Ordering::Greater => ctx.r_entry(u, &mu, 2, 2, 2, 2)?,
        };
        product *= weight;
    }
    Ok(product)
}

/// The closed column factor g_ell(w_L) the product above must reproduce in its
/// w_L-dependence.
pub fn base_column_closed_form(theta: &ThetaContext, lat: &BaseLattice, ell: usize) -> C64 {
    let k = lat.label.k;
    let l = lat.label.l;
    let w_last = lat.w[l - 1];
    let gamma = lat.params.gamma;
    let head = theta.additive(
        lat.z[ell - 1] - w_last + lat.params.diff(2, 1)
            + gamma * ((2 * k) as f64 - l as f64 - ell as f64),
    );
    let mut product = head;
    for j in 1..ell {
        product *= theta.additive(lat.z[j - 1] - w_last);
    }
    for j in ell + 1..=k {
        product *= theta.additive(lat.z[j - 1] - w_last - gamma);
    }
    product
}

/// Product of the vertex weights along the rightmost upper column of a nested
/// lattice whose last upper color is 1 or 2, for the summand turning at row
/// `ell`. Only the difference of the turning color and color 3 enters, and it
/// is the same for every intermediate-color word.
pub fn frozen_column_factor_fm(
    ctx: &RContext,
    lat: &FmLattice,
    ell: usize,
) -> Result<C64, LatticeError> {
    lat.validate()?;
    let k2 = lat.label.k2;
    let l2 = lat.label.l2;
    let color = match lat.label.last_upper_color() {
        Some(c @ (1 | 2)) => c,
        _ => {
            return Err(LatticeError::Precondition(
                "nested frozen column requires last upper color 1 or 2".into(),
            ))
        }
    };
    if ell < 1 || ell > k2 {
        return Err(LatticeError::Precondition(format!(
            "turning row {ell} outside 1..={k2}"
        )));
    }
    let c_i = lat.label.color_count(l2, color)?;
    let c_3 = lat.label.color_count(l2, 3)?;
    let other = if color == 1 { 2u8 } else { 1u8 };
    let c_other = lat.label.color_count(l2, other)?;
    let w_last = lat.w2[l2 - 1];
    let mut product = C64::new(1.0, 0.0);
    for m in 1..=k2 {
        // Row shift plus column counts; only the (color, 3) difference enters
        // the weights, and it is the same for every intermediate-color word.
        let shifts_color = c_i - usize::from(m <= ell);
        let shifts_three = c_3 + m - 1 - usize::from(m > ell);
        let mut mu = lat.params.clone();
        for _ in 0..shifts_color {
            mu = mu.shift(color);
        }
        for _ in 0..shifts_three {
            mu = mu.shift(3);
        }
        for _ in 0..c_other {
            mu = mu.shift(other);
        }
        let u = lat.z2[m - 1] - w_last;
        let weight = match m.cmp(&ell) {
            std::cmp::Ordering::Less => ctx.r_entry(u, &mu, 3, color, 3, color)?,
            std::cmp::Ordering::Equal => ctx.r_entry(u, &mu, color, 3, 3, color)?,
            std::cmp::Ordering::Greater => ctx.r_entry(u, &mu, 3, 3, 3, 3)?,
        };
        product *= weight;
    }
    Ok(product)
}

/// The closed column factor h_ell(w2_{L2}) for the nested lattice.
pub fn fm_column_closed_form(
    theta: &ThetaContext,
    lat: &FmLattice,
    ell: usize,
) -> Result<C64, LatticeError> {
    let k2 = lat.label.k2;
    let l2 = lat.label.l2;
    let color = match lat.label.last_upper_color() {
        Some(c @ (1 | 2)) => c,
        _ => {
            return Err(LatticeError::Precondition(
                "nested frozen column requires last upper color 1 or 2".into(),
            ))
        }
    };
    let c_i = lat.label.color_count(l2, color)? as f64;
    let c_3 = lat.label.color_count(l2, 3)? as f64;
    let w_last = lat.w2[l2 - 1];
    let gamma = lat.params.gamma;
    let head = theta.additive(
        lat.z2[ell - 1] - w_last + lat.params.diff(3, color) + gamma * (c_i - c_3 - ell as f64),
    );
    let mut product = head;
    for j in 1..ell {
        product *= theta.additive(lat.z2[j - 1] - w_last);
    }
    for j in ell + 1..=k2 {
        product *= theta.additive(lat.z2[j - 1] - w_last - gamma);
    }
    Ok(product)
}
