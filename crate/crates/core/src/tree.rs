//! Polya tree priors on the canonical partition and their conjugate posteriors.
//!
//! The split variable of cell `ε` is `Y_{ε0} = P(B_{ε0} | B_ε)`. Under the
//! prior it is `Beta(a_l, a_l)` with `l = l(ε) + 1`; after observing a sample
//! with counts `N`, it is `Beta(a_l + N_{ε0}, a_l + N_{ε1})`.
//!
//! Count trees are sparse: only cells holding at least one observation are
//! stored, and every lookup of a missing cell reads zero.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::entropy::deterministic_truncation;
use crate::error::{Error, Result};
use crate::partition::{BinaryPath, PartitionSpec};
use crate::specfun::digamma_minus_ln;

/// Growth family of the level parameters `a_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum PriorSchedule {
    /// `a_l = c · l^ρ`
    Polynomial { c: f64, rho: f64 },
    /// `a_l = c · 2^{βl}`
    Exponential { c: f64, beta: f64 },
}

impl PriorSchedule {
    pub fn polynomial(c: f64, rho: f64) -> Result<Self> {
        Self::Polynomial { c, rho }.validated()
    }

    pub fn exponential(c: f64, beta: f64) -> Result<Self> {
        Self::Exponential { c, beta }.validated()
    }

    /// Rejects parameters that make some `a_l` non-positive or non-finite
    /// for `l ≤ 64`.
    pub fn validated(self) -> Result<Self> {
        let (c, exponent) = match self {
            Self::Polynomial { c, rho } => (c, rho),
            Self::Exponential { c, beta } => (c, beta),
        };
        if !(c > 0.0 && c.is_finite() && exponent.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prior schedule needs c > 0 and a finite exponent, got {self}"
            )));
        }
        if (1..=64).any(|l| !(self.a(l) > 0.0 && self.a(l).is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "prior schedule {self} leaves (0, inf) within the first 64 levels"
            )));
        }
        Ok(self)
    }

    /// `a_l` for `l ≥ 1`.
    pub fn a(&self, level: u32) -> f64 {
        debug_assert!(level >= 1, "a_l is indexed from level 1");
        let l = f64::from(level);
        match *self {
            Self::Polynomial { c, rho } => c * l.powf(rho),
            Self::Exponential { c, beta } => c * (beta * l).exp2(),
        }
    }

    /// `Σ 1/a_l < ∞`: draws are absolutely continuous.
    pub fn satisfies_abs_continuity(&self) -> bool {
        match *self {
            Self::Polynomial { rho, .. } => rho > 1.0,
            Self::Exponential { beta, .. } => beta > 0.0,
        }
    }

    /// `Σ l/a_l < ∞`: draws are bounded away from 0 and ∞.
    pub fn satisfies_regularity(&self) -> bool {
        match *self {
            Self::Polynomial { rho, .. } => rho > 2.0,
            Self::Exponential { beta, .. } => beta > 0.0,
        }
    }

    /// `a_l = c·2^{βl}` with `β > 2`, the growth under which the entropy
    /// estimator is consistent.
    pub fn satisfies_entropy_rate(&self) -> bool {
        matches!(*self, Self::Exponential { beta, .. } if beta > 2.0)
    }

    /// Upper bound on `Σ_{k > level} 1/a_k`; infinite when the series
    /// diverges.
    pub fn inverse_tail_bound(&self, level: u32) -> f64 {
        if !self.satisfies_abs_continuity() {
            return f64::INFINITY;
        }
        let l = f64::from(level);
        match *self {
            // 1/a_k is decreasing, so the sum is dominated by ∫_l^∞ dx/(c x^ρ)
            Self::Polynomial { c, rho } => {
                if level == 0 {
                    1.0 / c + l.max(1.0).powf(1.0 - rho) / (c * (rho - 1.0))
                } else {
                    l.powf(1.0 - rho) / (c * (rho - 1.0))
                }
            }
            Self::Exponential { c, beta } => {
                let ratio = (-beta).exp2();
                (-(beta * (l + 1.0))).exp2() / (c * (1.0 - ratio))
            }
        }
    }
}

impl fmt::Display for PriorSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Polynomial { c, rho } => write!(f, "poly:c={c},rho={rho}"),
            Self::Exponential { c, beta } => write!(f, "exp:c={c},beta={beta}"),
        }
    }
}

/// Parses `exp:c=1,beta=3` or `poly:c=1,rho=3`. `c` defaults to 1.
impl FromStr for PriorSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidParameter(format!("prior '{s}': {msg}"));
        let (family, params) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut c = 1.0;
        let mut exponent = None;
        for kv in params.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (key, value) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad("parameter is not a number"))?;
            match (family, key.trim()) {
                (_, "c") => c = value,
                ("exp" | "exponential", "beta") | ("poly" | "polynomial", "rho") => {
                    exponent = Some(value)
                }
                _ => return Err(bad(&format!("unknown parameter '{}'", key.trim()))),
            }
        }
        let exponent = exponent.ok_or_else(|| bad("missing growth exponent"))?;
        match family {
            "exp" | "exponential" => Self::exponential(c, exponent),
            "poly" | "polynomial" => Self::polynomial(c, exponent),
            _ => Err(bad("family must be 'exp' or 'poly'")),
        }
    }
}

/// Sparse counts `N_ε` of a sample along the partition tree.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTree {
    spec: PartitionSpec,
    n: u64,
    max_depth: u32,
    counts: BTreeMap<BinaryPath, u64>,
}

impl CountTree {
    pub fn empty(spec: PartitionSpec, max_depth: u32) -> Result<Self> {
        if max_depth == 0 {
            return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
        }
        spec.check_depth(max_depth)?;
        Ok(CountTree {
            spec,
            n: 0,
            max_depth,
            counts: BTreeMap::new(),
        })
    }

    /// Counts for `sample` down to `max_depth`.
    pub fn build<P: AsRef<[f64]>>(sample: &[P], spec: PartitionSpec, max_depth: u32) -> Result<Self> {
        let mut tree = Self::empty(spec, max_depth)?;
        tree.absorb(sample)?;
        Ok(tree)
    }

    /// Adds the observations of `sample`; the result equals building from
    /// the concatenated sample.
    pub fn absorb<P: AsRef<[f64]>>(&mut self, sample: &[P]) -> Result<()> {
        for (i, point) in sample.iter().enumerate() {
            self.spec.check_point(point.as_ref(), i)?;
        }
        if sample.is_empty() {
            return Ok(());
        }
        let mut leaves: Vec<u64> = sample
            .iter()
            .map(|p| self.spec.encode_unchecked(p.as_ref(), self.max_depth).bits())
            .collect();
        leaves.sort_unstable();

        let mut fresh: Vec<(BinaryPath, u64)> = Vec::new();
        for level in 0..=self.max_depth {
            let shift = self.max_depth - level;
            let mut run: Option<(u64, u64)> = None;
            for &leaf in &leaves {
                let prefix = if shift == 64 { 0 } else { leaf >> shift };
                run = match run {
                    Some((p, k)) if p == prefix => Some((p, k + 1)),
                    Some((p, k)) => {
                        fresh.push((BinaryPath::from_bits(level, p), k));
                        Some((prefix, 1))
                    }
                    None => Some((prefix, 1)),
                };
            }
            if let Some((p, k)) = run {
                fresh.push((BinaryPath::from_bits(level, p), k));
            }
        }
        if self.counts.is_empty() {
            self.counts = fresh.into_iter().collect();
        } else {
            for (path, k) in fresh {
                *self.counts.entry(path).or_insert(0) += k;
            }
        }
        self.n += sample.len() as u64;
        Ok(())
    }

    /// Adds the counts of another tree over the same partition.
    pub fn merge(&mut self, other: &CountTree) -> Result<()> {
        if other.spec != self.spec || other.max_depth != self.max_depth {
            return Err(Error::InvalidParameter(
                "count trees differ in partition or depth".into(),
            ));
        }
        for (path, k) in &other.counts {
            *self.counts.entry(*path).or_insert(0) += k;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn spec(&self) -> PartitionSpec {
        self.spec
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Number of stored (non-zero) cells.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `N_ε`, zero for cells that hold no observation. Cells deeper than
    /// `max_depth` are not resolved and also read zero; use
    /// [`CountTree::is_resolved`] to distinguish.
    pub fn count(&self, path: &BinaryPath) -> u64 {
        self.counts.get(path).copied().unwrap_or(0)
    }

    pub fn is_resolved(&self, path: &BinaryPath) -> bool {
        path.len() <= self.max_depth
    }

    /// Stored cells at one level, in lexicographic order.
    pub fn level(&self, level: u32) -> impl Iterator<Item = (BinaryPath, u64)> + '_ {
        let lo = BinaryPath::from_bits(level.min(64), 0);
        let hi = if level >= 64 {
            BinaryPath::from_bits(64, u64::MAX)
        } else {
            BinaryPath::from_bits(level, (1u64 << level) - 1)
        };
        self.counts
            .range(lo..=hi)
            .filter(move |(p, _)| p.len() == level)
            .map(|(p, k)| (*p, *k))
    }

    /// All stored cells, level by level.
    pub fn iter(&self) -> impl Iterator<Item = (BinaryPath, u64)> + '_ {
        self.counts.iter().map(|(p, k)| (*p, *k))
    }

    pub fn max_count_at(&self, level: u32) -> u64 {
        self.level(level).map(|(_, k)| k).max().unwrap_or(0)
    }

    /// Smallest level `j ≥ 1` at which every cell holds at most one
    /// observation, if reached within `max_depth`.
    pub fn first_singleton_level(&self) -> Option<u32> {
        (1..=self.max_depth).find(|&l| self.max_count_at(l) <= 1)
    }
}

/// Posterior mean of `log(2Y)` for a split variable whose cell holds
/// `n_child` of the parent's `n_parent` observations: `ln 2 + ψ(N_child + a)
/// − ψ(N_parent + 2a)`.
///
/// The logarithms cancel analytically, which keeps full relative precision
/// when `a` is astronomically large.
pub fn expected_log_double_split(n_child: f64, n_parent: f64, a: f64) -> f64 {
    let scale = n_parent + 2.0 * a;
    ((2.0 * n_child - n_parent) / scale).ln_1p() + digamma_minus_ln(n_child + a)
        - digamma_minus_ln(scale)
}

/// A Polya tree posterior: the prior schedule updated with a count tree.
#[derive(Debug, Clone)]
pub struct PosteriorTree {
    prior: PriorSchedule,
    counts: CountTree,
}

impl PosteriorTree {
    pub fn new(prior: PriorSchedule, counts: CountTree) -> Self {
        PosteriorTree { prior, counts }
    }

    /// The prior itself (no observations).
    pub fn prior_only(prior: PriorSchedule, spec: PartitionSpec, max_depth: u32) -> Result<Self> {
        Ok(Self::new(prior, CountTree::empty(spec, max_depth)?))
    }

    pub fn prior(&self) -> &PriorSchedule {
        &self.prior
    }

    pub fn counts(&self) -> &CountTree {
        &self.counts
    }

    pub fn spec(&self) -> PartitionSpec {
        self.counts.spec()
    }

    pub fn into_counts(self) -> CountTree {
        self.counts
    }

    /// `⌈3 log₂ n⌉` (at least 2), capped at the tree's resolved depth.
    pub fn default_depth(&self) -> u32 {
        deterministic_truncation(self.counts.n().max(1)).min(self.counts.max_depth())
    }

    /// Beta parameters `(a_{l+1} + N_{ε0}, a_{l+1} + N_{ε1})` of the split of
    /// `path`, where `l = l(path)`.
    pub fn split_params(&self, path: &BinaryPath) -> (f64, f64) {
        let a = self.prior.a(path.len() + 1);
        let (c0, c1) = path.children();
        (
            a + self.counts.count(&c0) as f64,
            a + self.counts.count(&c1) as f64,
        )
    }

    /// `E[2Y_ε | X]` for a non-root cell.
    pub fn mean_double_split(&self, path: &BinaryPath) -> f64 {
        let parent = path.parent().expect("the root has no split variable");
        let a = self.prior.a(path.len());
        let n_child = self.counts.count(path) as f64;
        let n_parent = self.counts.count(&parent) as f64;
        2.0 * (a + n_child) / (2.0 * a + n_parent)
    }

    /// `log θ̂(t)` with `θ̂ = E[θ | X]` truncated at `depth`.
    pub fn predictive_log_density(&self, point: &[f64], depth: u32) -> Result<f64> {
        self.spec().check_point(point, 0)?;
        if depth > self.counts.max_depth() {
            return Err(Error::DepthUnavailable {
                requested: depth,
                available: self.counts.max_depth(),
            });
        }
        let leaf = self.spec().encode_unchecked(point, depth);
        let mut total = 0.0;
        for l in 1..=depth {
            let cell = leaf.prefix(l);
            let n_parent = self.counts.count(&leaf.prefix(l - 1));
            if n_parent == 0 {
                // symmetric Beta from here on: every factor is exactly 1
                break;
            }
            let a = self.prior.a(l);
            let n_child = self.counts.count(&cell) as f64;
            total += (2.0 * (a + n_child)).ln() - (2.0 * a + n_parent as f64).ln();
        }
        Ok(total)
    }

    /// Predictive masses `E[Q(B_ε) | X]` of every depth-`depth` cell in
    /// lexicographic order.
    pub fn predictive_cell_masses(&self, depth: u32) -> Result<Vec<f64>> {
        if depth > self.counts.max_depth() {
            return Err(Error::DepthUnavailable {
                requested: depth,
                available: self.counts.max_depth(),
            });
        }
        check_dense_depth(depth)?;
        let mut masses = vec![1.0];
        for l in 1..=depth {
            let a = self.prior.a(l);
            let mut next = Vec::with_capacity(masses.len() * 2);
            for (i, &m) in masses.iter().enumerate() {
                let parent = BinaryPath::from_bits(l - 1, i as u64);
                let n_parent = self.counts.count(&parent);
                if n_parent == 0 {
                    next.push(0.5 * m);
                    next.push(0.5 * m);
                    continue;
                }
                let (c0, _) = parent.children();
                let n0 = self.counts.count(&c0) as f64;
                let y0 = (a + n0) / (2.0 * a + n_parent as f64);
                next.push(m * y0);
                next.push(m * (1.0 - y0));
            }
            masses = next;
        }
        Ok(masses)
    }

    /// Predictive mass of a single cell.
    pub fn predictive_cell_mass(&self, path: &BinaryPath) -> f64 {
        (1..=path.len())
            .map(|l| 0.5 * self.mean_double_split(&path.prefix(l)))
            .product()
    }
}

/// Largest depth materialised densely (one value per cell).
pub const MAX_DENSE_DEPTH: u32 = 24;

pub(crate) fn check_dense_depth(depth: u32) -> Result<()> {
    if depth > MAX_DENSE_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "depth {depth} needs 2^{depth} cells; dense tables stop at {MAX_DENSE_DEPTH}"
        )));
    }
    Ok(())
}

/// A density drawn from a (posterior) Polya tree truncated at `depth`.
///
/// `splits[l][i]` holds `y_{ε0}` for the `i`-th cell `ε` of level `l`; the
/// density is constant on depth-`depth` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDensity {
    spec: PartitionSpec,
    depth: u32,
    splits: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl SampledDensity {
    /// Builds a density from explicit split values; `splits[l]` must hold
    /// `2^l` values in `(0, 1)` for `l < depth`. Values 0 and 1 are allowed
    /// to represent degenerate draws.
    pub fn from_splits(spec: PartitionSpec, splits: Vec<Vec<f64>>) -> Result<Self> {
        let depth = splits.len() as u32;
        check_dense_depth(depth)?;
        for (l, level) in splits.iter().enumerate() {
            if level.len() != 1 << l {
                return Err(Error::InvalidParameter(format!(
                    "level {l} holds {} splits, expected {}",
                    level.len(),
                    1u64 << l
                )));
            }
            if level.iter().any(|y| !(0.0..=1.0).contains(y)) {
                return Err(Error::InvalidParameter(format!(
                    "level {l} has a split value outside [0, 1]"
                )));
            }
        }
        let mut masses = vec![1.0];
        for level in &splits {
            masses = masses
                .iter()
                .zip(level)
                .flat_map(|(&m, &y)| [m * y, m * (1.0 - y)])
                .collect();
        }
        Ok(SampledDensity {
            spec,
            depth,
            splits,
            masses,
        })
    }

    /// The uniform density (all splits `1/2`).
    pub fn uniform(spec: PartitionSpec, depth: u32) -> Result<Self> {
        Self::from_splits(spec, (0..depth).map(|l| vec![0.5; 1 << l]).collect())
    }

    pub fn spec(&self) -> PartitionSpec {
        self.spec
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `y_{ε0}` for the split of cell `ε` (`l(ε) < depth`).
    pub fn split(&self, path: &BinaryPath) -> f64 {
        self.splits[path.len() as usize][path.bits() as usize]
    }

    /// `y_ε` for a non-root cell: the share of its parent's mass it holds.
    pub fn y(&self, path: &BinaryPath) -> f64 {
        let parent = path.parent().expect("the root has no split variable");
        let y0 = self.split(&parent);
        if path.last_digit() == Some(0) {
            y0
        } else {
            1.0 - y0
        }
    }

    pub fn splits(&self) -> &[Vec<f64>] {
        &self.splits
    }

    /// Masses `Q(B_ε)` of the depth-`depth` cells, lexicographic order.
    pub fn cell_masses(&self) -> &[f64] {
        &self.masses
    }

    /// Masses of the cells at a shallower level.
    pub fn level_masses(&self, level: u32) -> Vec<f64> {
        assert!(level <= self.depth);
        let group = 1usize << (self.depth - level);
        self.masses.chunks(group).map(|c| c.iter().sum()).collect()
    }

    /// `θ(t) = 2^{depth} Q(B_ε(t))`.
    pub fn density(&self, point: &[f64]) -> Result<f64> {
        self.spec.check_point(point, 0)?;
        let cell = self.spec.encode_unchecked(point, self.depth);
        Ok(self.cell_density(cell.bits() as usize))
    }

    /// Density on the `index`-th depth-`depth` cell.
    pub fn cell_density(&self, index: usize) -> f64 {
        libm::ldexp(self.masses[index], self.depth as i32)
    }
}

/// Splittable seed for the split variable of `path`: independent of the
/// depth at which the density is drawn, so deeper draws extend shallower ones.
pub(crate) fn split_seed(seed: u64, path: &BinaryPath) -> u64 {
    let mut z = seed ^ splitmix64(u64::from(path.len()).wrapping_add(0x9e37_79b9_7f4a_7c15));
    z = splitmix64(z ^ path.bits());
    splitmix64(z)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One `Beta(alpha, beta)` variate as `G₁ / (G₁ + G₂)` with unit-scale Gamma
/// draws.
pub fn sample_beta<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let g1 = Gamma::new(alpha, 1.0).expect("positive shape");
    let g2 = Gamma::new(beta, 1.0).expect("positive shape");
    loop {
        let x = g1.sample(rng);
        let y = g2.sample(rng);
        let total = x + y;
        if total > 0.0 && total.is_finite() {
            return x / total;
        }
    }
}

/// Draws a density from the posterior, truncated at `depth`, deterministically
/// from `seed`.
pub fn sample_density(post: &PosteriorTree, depth: u32, seed: u64) -> Result<SampledDensity> {
    if depth == 0 {
        return Err(Error::InvalidParameter("sampling depth must be at least 1".into()));
    }
    check_dense_depth(depth)?;
    let splits = (0..depth)
        .map(|l| {
            BinaryPath::level(l)
                .map(|cell| {
                    let (alpha, beta) = post.split_params(&cell);
                    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, &cell));
                    sample_beta(alpha, beta, &mut rng)
                })
                .collect()
        })
        .collect();
    SampledDensity::from_splits(post.spec(), splits)
}

/// `(∏_j min_{ε∈E_j} 2y_ε, ∏_j max_{ε∈E_j} 2y_ε)` over the sampled levels.
pub fn density_envelope(dens: &SampledDensity) -> (f64, f64) {
    dens.splits()
        .iter()
        .fold((1.0, 1.0), |(lo, hi), level| {
            let (mn, mx) = level.iter().fold((f64::INFINITY, 0.0f64), |(mn, mx), &y| {
                let wide = y.max(1.0 - y);
                let narrow = y.min(1.0 - y);
                (mn.min(2.0 * narrow), mx.max(2.0 * wide))
            });
            (lo * mn, hi * mx)
        })
}
