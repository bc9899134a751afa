//! Binary-sequence indexing of the canonical dyadic partition of `[0,1)^p`.
//!
//! A cell at depth `l` is addressed by a [`BinaryPath`] `ε₁…ε_l`. Splits cycle
//! through the coordinates `x₁, x₂, …, x_p, x₁, …`, each split halving the
//! current cell along one axis, so digit `k` of a path is binary digit
//! `⌈k/p⌉` of coordinate `((k−1) mod p) + 1`. Every depth-`l` cell therefore
//! has Lebesgue measure `2^{-l}`.
//!
//! Cells are half-open: a point lying exactly on a dyadic boundary belongs to
//! the upper cell.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Longest path representable by the packed encoding.
pub const MAX_DEPTH: u32 = 64;

/// Binary digits of an `f64` coordinate that carry information.
pub const MAX_COORD_DIGITS: u32 = f64::MANTISSA_DIGITS;

/// A finite binary sequence `ε₁…ε_l` naming the cell `B_ε`.
///
/// Digits are packed most-significant first: `bits = Σ ε_k 2^{l−k}`.
/// Ordering is by length, then lexicographic, so a sorted collection of
/// paths is grouped level by level.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BinaryPath {
    len: u8,
    bits: u64,
}

impl BinaryPath {
    /// The empty path, i.e. the whole cube.
    pub const ROOT: BinaryPath = BinaryPath { len: 0, bits: 0 };

    /// Builds a path from its length and the integer formed by its digits.
    ///
    /// Panics if `len > MAX_DEPTH` or `bits` has digits above `len`.
    pub fn from_bits(len: u32, bits: u64) -> Self {
        assert!(len <= MAX_DEPTH, "path length {len} exceeds {MAX_DEPTH}");
        assert!(
            len == 64 || bits >> len == 0,
            "bits {bits:#b} do not fit in {len} digits"
        );
        BinaryPath {
            len: len as u8,
            bits,
        }
    }

    pub fn from_digits(digits: &[u8]) -> Self {
        digits.iter().fold(Self::ROOT, |path, &d| path.child(d))
    }

    pub fn len(&self) -> u32 {
        u32::from(self.len)
    }

    pub fn is_root(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Digit `k` (1-based).
    pub fn digit(&self, k: u32) -> u8 {
        assert!(k >= 1 && k <= self.len(), "digit {k} out of range");
        ((self.bits >> (self.len() - k)) & 1) as u8
    }

    pub fn last_digit(&self) -> Option<u8> {
        (self.len > 0).then_some((self.bits & 1) as u8)
    }

    pub fn digits(&self) -> impl Iterator<Item = u8> + '_ {
        (1..=self.len()).map(move |k| self.digit(k))
    }

    /// Appends one digit. Panics when the path is already [`MAX_DEPTH`] long.
    pub fn child(&self, digit: u8) -> Self {
        assert!(self.len() < MAX_DEPTH, "cannot extend a path of length {MAX_DEPTH}");
        debug_assert!(digit <= 1);
        BinaryPath {
            len: self.len + 1,
            bits: (self.bits << 1) | u64::from(digit & 1),
        }
    }

    /// `(ε0, ε1)`.
    pub fn children(&self) -> (Self, Self) {
        (self.child(0), self.child(1))
    }

    pub fn parent(&self) -> Option<Self> {
        (self.len > 0).then(|| BinaryPath {
            len: self.len - 1,
            bits: self.bits >> 1,
        })
    }

    pub fn sibling(&self) -> Option<Self> {
        (self.len > 0).then_some(BinaryPath {
            len: self.len,
            bits: self.bits ^ 1,
        })
    }

    /// The first `len` digits.
    pub fn prefix(&self, len: u32) -> Self {
        assert!(len <= self.len(), "prefix longer than path");
        let shift = self.len() - len;
        BinaryPath {
            len: len as u8,
            bits: if shift == 64 { 0 } else { self.bits >> shift },
        }
    }

    /// True when `self` is a prefix of `other` (including equality).
    pub fn is_prefix_of(&self, other: &BinaryPath) -> bool {
        self.len <= other.len && other.prefix(self.len()) == *self
    }

    /// True when `self` is a proper prefix of `other`.
    pub fn is_ancestor_of(&self, other: &BinaryPath) -> bool {
        self.len < other.len && self.is_prefix_of(other)
    }

    /// Lebesgue measure of the cell, exactly `2^{-l(ε)}`.
    pub fn measure(&self) -> f64 {
        cell_measure(self)
    }

    /// All `2^len` paths of the given length in lexicographic order.
    pub fn level(len: u32) -> impl Iterator<Item = BinaryPath> {
        assert!(len < 64, "cannot enumerate level {len}");
        (0..(1u64 << len)).map(move |bits| BinaryPath::from_bits(len, bits))
    }
}

impl Ord for BinaryPath {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.bits.cmp(&other.bits))
    }
}

impl PartialOrd for BinaryPath {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BinaryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            return f.write_str("∅");
        }
        for d in self.digits() {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BinaryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryPath({self})")
    }
}

impl FromStr for BinaryPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "∅" {
            return Ok(Self::ROOT);
        }
        if s.len() > MAX_DEPTH as usize {
            return Err(Error::InvalidParameter(format!(
                "path '{s}' longer than {MAX_DEPTH} digits"
            )));
        }
        s.chars().try_fold(Self::ROOT, |path, c| match c {
            '0' => Ok(path.child(0)),
            '1' => Ok(path.child(1)),
            _ => Err(Error::InvalidParameter(format!(
                "path '{s}' contains non-binary digit '{c}'"
            ))),
        })
    }
}

/// Exactly `2^{-l(ε)}`.
pub fn cell_measure(path: &BinaryPath) -> f64 {
    libm::ldexp(1.0, -(path.len() as i32))
}

/// Axis-aligned half-open box `[lower, upper)` realising a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CellBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| lo <= x && x < hi)
    }

    /// The interval string used by the CLI, e.g. `[0.5,0.625)` or
    /// `[0,0.5)x[0.5,1)`.
    pub fn to_interval_string(&self) -> String {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| format!("[{lo},{hi})"))
            .collect::<Vec<_>>()
            .join("x")
    }
}

/// The canonical interleaved partition of `[0,1)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartitionSpec {
    dim: usize,
}

impl PartitionSpec {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DEPTH as usize {
            return Err(Error::InvalidParameter(format!(
                "dimension must be in 1..={MAX_DEPTH}, got {dim}"
            )));
        }
        Ok(PartitionSpec { dim })
    }

    pub fn unit_interval() -> Self {
        PartitionSpec { dim: 1 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Deepest level at which [`PartitionSpec::encode`] is exact.
    pub fn max_depth(&self) -> u32 {
        (MAX_COORD_DIGITS * self.dim as u32).min(MAX_DEPTH)
    }

    /// Coordinate (0-based) split by path digit `k` (1-based).
    pub fn axis_of_digit(&self, k: u32) -> usize {
        (k as usize - 1) % self.dim
    }

    fn digits_per_axis(&self, depth: u32) -> Vec<u32> {
        (0..self.dim)
            .map(|axis| {
                let d = depth as usize;
                ((d / self.dim) + usize::from(axis < d % self.dim)) as u32
            })
            .collect()
    }

    pub fn check_point(&self, point: &[f64], index: usize) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                index,
                expected: self.dim,
                got: point.len(),
            });
        }
        if point.iter().any(|&x| !(0.0..1.0).contains(&x)) {
            return Err(Error::Domain {
                index,
                dim: self.dim,
                point: point.to_vec(),
            });
        }
        Ok(())
    }

    pub fn check_depth(&self, depth: u32) -> Result<()> {
        if depth > self.max_depth() {
            return Err(Error::Precision {
                depth,
                max: self.max_depth(),
                dim: self.dim,
            });
        }
        Ok(())
    }

    /// The unique depth-`depth` path whose cell contains `point`.
    pub fn encode(&self, point: &[f64], depth: u32) -> Result<BinaryPath> {
        self.check_point(point, 0)?;
        self.check_depth(depth)?;
        Ok(self.encode_unchecked(point, depth))
    }

    pub(crate) fn encode_unchecked(&self, point: &[f64], depth: u32) -> BinaryPath {
        let per_axis = self.digits_per_axis(depth);
        // floor(x · 2^m) is exact for x in [0,1) and m ≤ 53
        let scaled: Vec<u64> = point
            .iter()
            .zip(&per_axis)
            .map(|(&x, &m)| libm::ldexp(x, m as i32).floor() as u64)
            .collect();
        let mut bits = 0u64;
        for k in 1..=depth {
            let axis = self.axis_of_digit(k);
            let digit_index = (k - 1) / self.dim as u32 + 1;
            let digit = (scaled[axis] >> (per_axis[axis] - digit_index)) & 1;
            bits = (bits << 1) | digit;
        }
        BinaryPath::from_bits(depth, bits)
    }

    /// The box `B_ε`.
    pub fn cell_bounds(&self, path: &BinaryPath) -> CellBox {
        let per_axis = self.digits_per_axis(path.len());
        let mut index = vec![0u64; self.dim];
        for k in 1..=path.len() {
            let axis = self.axis_of_digit(k);
            index[axis] = (index[axis] << 1) | u64::from(path.digit(k));
        }
        let (lower, upper) = index
            .iter()
            .zip(&per_axis)
            .map(|(&i, &m)| {
                let lo = libm::ldexp(i as f64, -(m as i32));
                let hi = libm::ldexp((i + 1) as f64, -(m as i32));
                (lo, hi)
            })
            .unzip();
        CellBox { lower, upper }
    }
}
