//! Configuration labels for the nested partition functions.
//!
//! A base label is a size pair (L, k) plus k strictly increasing positions in
//! {1..L}; the derived color string has color 1 exactly at the positions and
//! color 2 elsewhere. The nested label carries the size quadruple
//! {k1, k2, L1, L2} and two index sets: `I2` inside {1..L2} and `I1` inside
//! the extended set `I2 ∪ {L2+1..L2+L1}`. Positions are 1-based throughout;
//! empty sets and zero sizes are legal and all products over empty ranges
//! are 1.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("positions must be strictly increasing, got {0:?}")]
    NotIncreasing(Vec<usize>),
    #[error("position {position} outside the admissible range 1..={limit}")]
    OutOfRange { position: usize, limit: usize },
    #[error("expected {expected} positions, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("inconsistent label: {0}")]
    Inconsistent(String),
    #[error("transform precondition violated: {0}")]
    Precondition(String),
    #[error("index {0} out of range")]
    IndexOutOfRange(usize),
}

fn check_increasing(v: &[usize]) -> Result<(), LabelError> {
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabelError::NotIncreasing(v.to_vec()));
    }
    Ok(())
}

/// Label of a base partition function: size (L, k) and the color-1 positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseLabel {
    #[serde(rename = "L")]
    pub l: usize,
    pub k: usize,
    #[serde(rename = "I")]
    pub positions: Vec<usize>,
}

impl BaseLabel {
    pub fn new(l: usize, k: usize, positions: Vec<usize>) -> Result<Self, LabelError> {
        if positions.len() != k {
            return Err(LabelError::WrongCount {
                expected: k,
                got: positions.len(),
            });
        }
        check_increasing(&positions)?;
        for &p in &positions {
            if p < 1 || p > l {
                return Err(LabelError::OutOfRange {
                    position: p,
                    limit: l,
                });
            }
        }
        Ok(Self { l, k, positions })
    }

    /// Color string i^(1) in {1,2}^L: 1 on the labelled positions, 2 elsewhere.
    pub fn colors(&self) -> Vec<u8> {
        let mut colors = vec![2u8; self.l];
        for &p in &self.positions {
            colors[p - 1] = 1;
        }
        colors
    }

    pub fn from_colors(colors: &[u8]) -> Result<Self, LabelError> {
        let positions: Vec<usize> = colors
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 1)
            .map(|(i, _)| i + 1)
            .collect();
        let k = positions.len();
        Self::new(colors.len(), k, positions)
    }

    /// Whether the last column carries color 1 (the recursion-step condition).
    pub fn last_is_one(&self) -> bool {
        self.positions.last() == Some(&self.l)
    }

    /// Label with the last row and column stripped (valid when `last_is_one`).
    pub fn strip_last(&self) -> Result<Self, LabelError> {
        if !self.last_is_one() {
            return Err(LabelError::Precondition(
                "strip_last requires the last position to equal L".into(),
            ));
        }
        Self::new(
            self.l - 1,
            self.k - 1,
            self.positions[..self.k - 1].to_vec(),
        )
    }

    /// Label with only the last column stripped (valid when the last column
    /// carries color 2).
    pub fn drop_last_column(&self) -> Result<Self, LabelError> {
        if self.last_is_one() {
            return Err(LabelError::Precondition(
                "drop_last_column requires color 2 in the last column".into(),
            ));
        }
        Self::new(self.l - 1, self.k, self.positions.clone())
    }
}

/// Enumerates all base labels of size (L, k) in lexicographic position order.
pub fn enumerate_base_labels(l: usize, k: usize) -> Vec<BaseLabel> {
    subsets(l, k)
        .into_iter()
        .map(|positions| BaseLabel { l, k, positions })
        .collect()
}

/// All k-subsets of {1..n}, lexicographically ordered.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn recurse(n: usize, k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        let remaining = k - current.len();
        for v in start..=n {
            if n - v + 1 < remaining {
                break;
            }
            current.push(v);
            recurse(n, k, v + 1, current, out);
            current.pop();
        }
    }
    if k <= n {
        recurse(n, k, 1, &mut current, &mut out);
    }
    out
}

/// Full label of a nested partition function: the size quadruple and the two
/// stored index sets. The extended sets are derived views.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FmLabel {
    pub k1: usize,
    pub k2: usize,
    #[serde(rename = "L1")]
    pub l1: usize,
    #[serde(rename = "L2")]
    pub l2: usize,
    #[serde(rename = "I1")]
    pub set_i1: Vec<usize>,
    #[serde(rename = "I2")]
    pub set_i2: Vec<usize>,
}

impl FmLabel {
    pub fn new(
        k1: usize,
        k2: usize,
        l1: usize,
        l2: usize,
        set_i1: Vec<usize>,
        set_i2: Vec<usize>,
    ) -> Result<Self, LabelError> {
        let label = Self {
            k1,
            k2,
            l1,
            l2,
            set_i1,
            set_i2,
        };
        label.validate()?;
        Ok(label)
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        if self.set_i2.len() != self.k2 {
            return Err(LabelError::WrongCount {
                expected: self.k2,
                got: self.set_i2.len(),
            });
        }
        if self.set_i1.len() != self.k1 {
            return Err(LabelError::WrongCount {
                expected: self.k1,
                got: self.set_i1.len(),
            });
        }
        check_increasing(&self.set_i2)?;
        check_increasing(&self.set_i1)?;
        for &p in &self.set_i2 {
            if p < 1 || p > self.l2 {
                return Err(LabelError::OutOfRange {
                    position: p,
                    limit: self.l2,
                });
            }
        }
        let extended = self.i2_hat();
        for &p in &self.set_i1 {
            if !extended.contains(&p) {
                return Err(LabelError::Inconsistent(format!(
                    "I1 member {p} is not in the extended set {extended:?}"
                )));
            }
        }
        Ok(())
    }

    /// The extended set I2 ∪ {L2+1..L2+L1}, increasing.
    pub fn i2_hat(&self) -> Vec<usize> {
        let mut v = self.set_i2.clone();
        v.extend(self.l2 + 1..=self.l2 + self.l1);
        v
    }

    /// The full third-level set {1..L2}.
    pub fn i3_hat(&self) -> Vec<usize> {
        (1..=self.l2).collect()
    }

    /// Position of each I1 member inside the increasing enumeration of the
    /// extended set: the induced set in {1..k2+L1}.
    pub fn induced_set(&self) -> Result<Vec<usize>, LabelError> {
        let extended = self.i2_hat();
        self.set_i1
            .iter()
            .map(|&p| {
                extended
                    .iter()
                    .position(|&q| q == p)
                    .map(|idx| idx + 1)
                    .ok_or_else(|| {
                        LabelError::Inconsistent(format!("I1 member {p} missing from extended set"))
                    })
            })
            .collect()
    }

    /// Upper-region color string i^(2) in {1,2,3}^{L2}: color 3 off I2; on I2,
    /// color 1 where the position also belongs to I1, color 2 otherwise.
    pub fn upper_colors(&self) -> Vec<u8> {
        let mut colors = vec![3u8; self.l2];
        for &p in &self.set_i2 {
            colors[p - 1] = if self.set_i1.contains(&p) { 1 } else { 2 };
        }
        colors
    }

    /// Lower-region color string i^(1) in {1,2}^{L1}, read off positions
    /// L2+1..L2+L1.
    pub fn lower_colors(&self) -> Vec<u8> {
        (self.l2 + 1..=self.l2 + self.l1)
            .map(|p| if self.set_i1.contains(&p) { 1 } else { 2 })
            .collect()
    }

    /// c(k, j): how many of the first k upper colors equal j.
    pub fn color_count(&self, k: usize, color: u8) -> Result<usize, LabelError> {
        if k > self.l2 {
            return Err(LabelError::IndexOutOfRange(k));
        }
        if !(1..=3).contains(&color) {
            return Err(LabelError::IndexOutOfRange(color as usize));
        }
        Ok(self
            .upper_colors()
            .iter()
            .take(k)
            .filter(|&&c| c == color)
            .count())
    }

    /// Color in the last upper column; None when L2 = 0.
    pub fn last_upper_color(&self) -> Option<u8> {
        self.upper_colors().last().copied()
    }

    /// The label reached by the recursion step for last color 1 or 2:
    /// size {k1, k2-1, L1+1, L2-1}, same I1, I2 minus its last element.
    pub fn j_transform(&self) -> Result<FmLabel, LabelError> {
        if self.set_i2.last() != Some(&self.l2) {
            return Err(LabelError::Precondition(
                "j_transform requires the last upper color to be 1 or 2".into(),
            ));
        }
        FmLabel::new(
            self.k1,
            self.k2 - 1,
            self.l1 + 1,
            self.l2 - 1,
            self.set_i1.clone(),
            self.set_i2[..self.k2 - 1].to_vec(),
        )
    }

    /// The label reached by the factorization step for last color 3:
    /// size {k1, k2, L1, L2-1}; I1 members above L2 shift down by one.
    pub fn k_transform(&self) -> Result<FmLabel, LabelError> {
        if self.set_i2.last() == Some(&self.l2) {
            return Err(LabelError::Precondition(
                "k_transform requires the last upper color to be 3".into(),
            ));
        }
        let relabelled = self
            .set_i1
            .iter()
            .map(|&p| if p > self.l2 { p - 1 } else { p })
            .collect();
        FmLabel::new(
            self.k1,
            self.k2,
            self.l1,
            self.l2 - 1,
            relabelled,
            self.set_i2.clone(),
        )
    }
}

/// The merged spectral sequence of the lower region: the first k2 entries come
/// from z2, the rest from w1 (1-based index).
pub fn merged_spectral(z2: &[C64], w1: &[C64], i: usize) -> Result<C64, LabelError> {
    if i < 1 || i > z2.len() + w1.len() {
        return Err(LabelError::IndexOutOfRange(i));
    }
    Ok(if i <= z2.len() {
        z2[i - 1]
    } else {
        w1[i - 1 - z2.len()]
    })
}

/// All valid labels of the given size, ordered lexicographically by (I2, I1).
/// The count is C(L2, k2) * C(k2+L1, k1).
pub fn enumerate_labels(k1: usize, k2: usize, l1: usize, l2: usize) -> Vec<FmLabel> {
    let mut out = Vec::new();
    if k2 > l2 || k1 > k2 + l1 {
        return out;
    }
    for i2 in subsets(l2, k2) {
        let mut extended = i2.clone();
        extended.extend(l2 + 1..=l2 + l1);
        for picks in subsets(extended.len(), k1) {
            let i1: Vec<usize> = picks.iter().map(|&idx| extended[idx - 1]).collect();
            out.push(FmLabel {
                k1,
                k2,
                l1,
                l2,
                set_i1: i1,
                set_i2: i2.clone(),
            });
        }
    }
    out
}
