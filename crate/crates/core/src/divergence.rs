//! Entropy, Kullback-Leibler and total-variation functionals between a known
//! density `f₀` and Polya tree densities, all evaluated at finite depth.
//!
//! The series forms rest on the split representation: for densities on the
//! canonical partition, `∫ f log θ = Σ_ε F(B_ε) log(2y_ε(θ))` over all cells,
//! where `y_ε(θ)` is the share of the parent's mass carried by `B_ε`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{BinaryPath, PartitionSpec};
use crate::quadrature::integrate_box;
use crate::tree::{check_dense_depth, expected_log_double_split, PosteriorTree, SampledDensity};

/// A known density on `[0,1)^p`.
pub trait DensityOracle: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn pdf(&self, point: &[f64]) -> f64;

    /// `F₀([lower, upper))` in closed form, if available.
    fn box_probability(&self, _lower: &[f64], _upper: &[f64]) -> Option<f64> {
        None
    }

    /// `H(f₀) = −∫ f₀ log f₀` in nats, if known analytically.
    fn entropy(&self) -> Option<f64> {
        None
    }
}

impl fmt::Debug for dyn DensityOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityOracle({}, p = {})", self.name(), self.dim())
    }
}

/// Per-cell absolute tolerance for the quadrature fallback.
pub const CELL_QUADRATURE_TOLERANCE: f64 = 1e-10;

/// Deepest dense table built from closed-form cell probabilities.
pub const MAX_ANALYTIC_TABLE_DEPTH: u32 = 22;

/// Deepest dense table built by quadrature.
pub const MAX_QUADRATURE_TABLE_DEPTH: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbabilitySource {
    AnalyticCdf,
    Quadrature,
}

/// `F₀(B_ε)` for every cell down to `depth`, with deeper cells computed on
/// demand from the oracle.
#[derive(Clone)]
pub struct CellProbabilityTable {
    spec: PartitionSpec,
    depth: u32,
    levels: Vec<Vec<f64>>,
    source: ProbabilitySource,
    oracle: Arc<dyn DensityOracle>,
}

impl fmt::Debug for CellProbabilityTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CellProbabilityTable")
            .field("oracle", &self.oracle.name())
            .field("dim", &self.spec.dim())
            .field("depth", &self.depth)
            .field("source", &self.source)
            .finish()
    }
}

fn box_probability_of(
    oracle: &dyn DensityOracle,
    spec: PartitionSpec,
    path: &BinaryPath,
) -> Result<(f64, ProbabilitySource)> {
    let cell = spec.cell_bounds(path);
    if let Some(p) = oracle.box_probability(&cell.lower, &cell.upper) {
        return Ok((p.max(0.0), ProbabilitySource::AnalyticCdf));
    }
    let pdf = |x: &[f64]| oracle.pdf(x);
    integrate_box(&pdf, &cell.lower, &cell.upper, CELL_QUADRATURE_TOLERANCE)
        .map(|p| (p.max(0.0), ProbabilitySource::Quadrature))
        .ok_or_else(|| Error::Quadrature {
            cell: format!("{path} = {}", cell.to_interval_string()),
        })
}

/// Builds the table: the deepest level cell by cell, each parent as the sum
/// of its children.
pub fn cell_probabilities(
    f0: Arc<dyn DensityOracle>,
    spec: PartitionSpec,
    depth: u32,
) -> Result<CellProbabilityTable> {
    if f0.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: spec.dim(),
            got: f0.dim(),
        });
    }
    spec.check_depth(depth)?;
    let analytic = f0.box_probability(&vec![0.0; spec.dim()], &vec![1.0; spec.dim()]).is_some();
    let limit = if analytic {
        MAX_ANALYTIC_TABLE_DEPTH
    } else {
        MAX_QUADRATURE_TABLE_DEPTH
    };
    if depth > limit {
        return Err(Error::InvalidParameter(format!(
            "cell-probability tables stop at depth {limit} for this oracle, requested {depth}"
        )));
    }
    let mut source = ProbabilitySource::AnalyticCdf;
    let mut deepest = Vec::with_capacity(1 << depth);
    for cell in BinaryPath::level(depth) {
        let (p, s) = box_probability_of(f0.as_ref(), spec, &cell)?;
        if s == ProbabilitySource::Quadrature {
            source = s;
        }
        deepest.push(p);
    }
    let mut levels = vec![deepest];
    while levels[0].len() > 1 {
        let parents = levels[0].chunks(2).map(|c| c[0] + c[1]).collect();
        levels.insert(0, parents);
    }
    Ok(CellProbabilityTable {
        spec,
        depth,
        levels,
        source,
        oracle: f0,
    })
}

impl CellProbabilityTable {
    pub fn spec(&self) -> PartitionSpec {
        self.spec
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn source(&self) -> ProbabilitySource {
        self.source
    }

    pub fn oracle(&self) -> &Arc<dyn DensityOracle> {
        &self.oracle
    }

    /// `F₀(B_ε)` for every cell of a tabulated level.
    pub fn level(&self, level: u32) -> &[f64] {
        &self.levels[level as usize]
    }

    /// `F₀(B_ε)`; cells deeper than the table are computed from the oracle.
    pub fn probability(&self, path: &BinaryPath) -> Result<f64> {
        if path.len() <= self.depth {
            Ok(self.levels[path.len() as usize][path.bits() as usize])
        } else {
            box_probability_of(self.oracle.as_ref(), self.spec, path).map(|(p, _)| p)
        }
    }

    /// `y_ε(f₀) = F₀(B_ε) / F₀(B_parent)`; `None` when the parent has no mass.
    pub fn split_ratio(&self, path: &BinaryPath) -> Result<Option<f64>> {
        let parent = path.parent().expect("the root has no split ratio");
        let fp = self.probability(&parent)?;
        if fp <= 0.0 {
            return Ok(None);
        }
        Ok(Some((self.probability(path)? / fp).clamp(0.0, 1.0)))
    }

    /// `H(f₀)` as reported by the oracle.
    pub fn entropy(&self) -> Option<f64> {
        self.oracle.entropy()
    }
}

/// Anything with exact cell masses on the canonical partition.
pub trait CellMassSource {
    /// Masses of the `2^depth` cells of one level, in lexicographic order.
    fn cell_masses(&self, depth: u32) -> Result<Vec<f64>>;
}

impl CellMassSource for PosteriorTree {
    fn cell_masses(&self, depth: u32) -> Result<Vec<f64>> {
        self.predictive_cell_masses(depth)
    }
}

impl CellMassSource for SampledDensity {
    fn cell_masses(&self, depth: u32) -> Result<Vec<f64>> {
        if depth > self.depth() {
            return Err(Error::DepthUnavailable {
                requested: depth,
                available: self.depth(),
            });
        }
        Ok(self.level_masses(depth))
    }
}

impl CellMassSource for CellProbabilityTable {
    fn cell_masses(&self, depth: u32) -> Result<Vec<f64>> {
        if depth > self.depth {
            return Err(Error::DepthUnavailable {
                requested: depth,
                available: self.depth,
            });
        }
        Ok(self.levels[depth as usize].clone())
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `K(f₀, θ) = ∫ f₀ log f₀ − Σ_{l(ε) ≤ j} F₀(B_ε) log 2y_ε(θ)` for a density
/// truncated at depth `j`. Returns `+∞` when `θ` puts no mass on a cell that
/// `f₀` charges.
pub fn kl_series(table: &CellProbabilityTable, dens: &SampledDensity, h_f0: f64) -> Result<f64> {
    if table.depth < dens.depth() {
        return Err(Error::DepthUnavailable {
            requested: dens.depth(),
            available: table.depth,
        });
    }
    let mut cross = 0.0;
    for (l, splits) in dens.splits().iter().enumerate() {
        let children = &table.levels[l + 1];
        for (i, &y0) in splits.iter().enumerate() {
            for (f, y) in [(children[2 * i], y0), (children[2 * i + 1], 1.0 - y0)] {
                if f <= 0.0 {
                    continue;
                }
                if y <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                cross += f * (2.0 * y).ln();
            }
        }
    }
    Ok(-h_f0 - cross)
}

/// `H(θ) = −Σ_{l(ε) ≤ j} Q(B_ε) log 2y_ε` for a density truncated at depth `j`.
pub fn entropy_series(dens: &SampledDensity) -> f64 {
    let mut total = 0.0;
    for (l, splits) in dens.splits().iter().enumerate() {
        let parents = dens.level_masses(l as u32);
        for (&q, &y0) in parents.iter().zip(splits) {
            total += xlogy(q * y0, 2.0 * y0) + xlogy(q * (1.0 - y0), 2.0 * (1.0 - y0));
        }
    }
    -total
}

/// `−Σ_cells m log(m 2^j)`: the entropy of a piecewise-constant density with
/// cell masses `m` on the depth-`j` grid.
pub fn cell_sum_entropy(masses: &[f64], depth: u32) -> f64 {
    let scale = f64::from(depth) * std::f64::consts::LN_2;
    -masses
        .iter()
        .map(|&m| if m > 0.0 { m * (m.ln() + scale) } else { 0.0 })
        .sum::<f64>()
}

/// `−Σ_{l(ε) ≤ depth} F₀(B_ε) log 2y_ε(f₀)`: the entropy of the depth-`depth`
/// discretization of `f₀` in split form.
pub fn discretized_entropy_series(table: &CellProbabilityTable, depth: u32) -> Result<f64> {
    if depth > table.depth {
        return Err(Error::DepthUnavailable {
            requested: depth,
            available: table.depth,
        });
    }
    let mut total = 0.0;
    for l in 1..=depth as usize {
        for (i, &f) in table.levels[l].iter().enumerate() {
            let fp = table.levels[l - 1][i / 2];
            if f > 0.0 {
                total += f * (2.0 * f / fp).ln();
            }
        }
    }
    Ok(-total)
}

/// `E_θ[K(f₀, θ^depth) | X] = ∫ f₀ log f₀ − Σ_{l(ε) ≤ depth} F₀(B_ε) E[log 2Y_ε | X]`
/// for the posterior truncated at `depth`.
///
/// Cells whose parent holds no observation all share the prior term
/// `ln 2 + ψ(a_l) − ψ(2a_l)`, so each level costs one pass over the occupied
/// cells; deep cell probabilities come from the oracle.
pub fn expected_posterior_kl(
    table: &CellProbabilityTable,
    post: &PosteriorTree,
    depth: u32,
    h_f0: f64,
) -> Result<f64> {
    let counts = post.counts();
    if depth > counts.max_depth() {
        return Err(Error::DepthUnavailable {
            requested: depth,
            available: counts.max_depth(),
        });
    }
    if table.spec != post.spec() {
        return Err(Error::InvalidParameter(
            "probability table and posterior use different partitions".into(),
        ));
    }
    let mut cross = 0.0;
    for l in 1..=depth {
        let a = post.prior().a(l);
        let prior_term = expected_log_double_split(0.0, 0.0, a);
        let mut occupied_mass = 0.0;
        let mut level_sum = 0.0;
        for (parent, n_parent) in counts.level(l - 1) {
            occupied_mass += table.probability(&parent)?;
            let (c0, c1) = parent.children();
            for child in [c0, c1] {
                let f = table.probability(&child)?;
                if f > 0.0 {
                    let n_child = counts.count(&child) as f64;
                    level_sum += f * expected_log_double_split(n_child, n_parent as f64, a);
                }
            }
        }
        cross += level_sum + (1.0 - occupied_mass).max(0.0) * prior_term;
    }
    Ok(-h_f0 - cross)
}

/// `½ Σ |P(B_ε) − Q(B_ε)|` over the depth-`grid_depth` cells.
pub fn total_variation<A, B>(a: &A, b: &B, grid_depth: u32) -> Result<f64>
where
    A: CellMassSource + ?Sized,
    B: CellMassSource + ?Sized,
{
    check_dense_depth(grid_depth)?;
    let pa = a.cell_masses(grid_depth)?;
    let pb = b.cell_masses(grid_depth)?;
    Ok(total_variation_masses(&pa, &pb))
}

/// `½ Σ |a_i − b_i|`.
pub fn total_variation_masses(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mass vectors differ in length");
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
