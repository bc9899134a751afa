//! The Polya tree estimator of differential entropy.
//!
//! For a sample `X` of size `n`,
//!
//! ```text
//! Ĥ(X) = −(1/n) Σ_ε N_ε (ln 2 + ψ(N_ε + a_l) − ψ(N_parent(ε) + 2a_l)),   l = l(ε),
//! ```
//!
//! the posterior mean of `−(1/n) Σ_i log θ(X_i)`. Past the maximum impact
//! level every occupied cell holds a single observation, so each level adds
//! the same closed-form term; those levels are summed analytically by
//! [`tail_correction`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{hurwitz_zeta, trigamma};
use crate::tree::{expected_log_double_split, CountTree, PriorSchedule};

/// Default stopping tolerance for the analytic tail sums.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Upper limit on explicitly summed tail levels when neither stopping rule
/// has fired; the remainder past it is added through its leading asymptotic
/// term and the sum is flagged approximate.
pub const MAX_TAIL_TERMS: u32 = 1 << 20;

/// Deepest level a truncation policy may resolve to.
pub const MAX_TRUNCATION_LEVEL: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "level")]
pub enum TruncationKind {
    /// The maximum impact level `L_X`.
    MaxImpact,
    /// `⌈3 log₂ n⌉`.
    Deterministic,
    Fixed(u32),
    /// `min(L_X, ⌈3 log₂ n⌉)`.
    Auto,
}

impl fmt::Display for TruncationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MaxImpact => f.write_str("max-impact"),
            Self::Deterministic => f.write_str("deterministic"),
            Self::Fixed(l) => write!(f, "fixed:{l}"),
            Self::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for TruncationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "max-impact" | "max_impact" => Ok(Self::MaxImpact),
            "deterministic" => Ok(Self::Deterministic),
            "auto" => Ok(Self::Auto),
            other => {
                let level = other
                    .strip_prefix("fixed:")
                    .and_then(|l| l.parse::<u32>().ok())
                    .filter(|&l| l >= 1)
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "unknown truncation policy '{other}' \
                             (expected max-impact, deterministic, auto or fixed:<level>)"
                        ))
                    })?;
                Ok(Self::Fixed(level))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub kind: TruncationKind,
    pub tail_tolerance: f64,
}

impl TruncationPolicy {
    pub fn new(kind: TruncationKind) -> Self {
        TruncationPolicy {
            kind,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tail_tolerance = tol;
        self
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self::new(TruncationKind::Auto)
    }
}

/// `L_X`, or `max_depth + 1` with `capped` set when some cell still holds
/// several observations at the deepest resolved level (ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactLevel {
    pub level: u32,
    pub capped: bool,
}

/// `L_X = min{j ≥ 1 : max_{ε ∈ E_j} N_ε = 1} + 1`.
pub fn max_impact_level(counts: &CountTree) -> Result<ImpactLevel> {
    if counts.n() == 0 {
        return Err(Error::EmptySample);
    }
    Ok(match counts.first_singleton_level() {
        Some(j) => ImpactLevel {
            level: j + 1,
            capped: false,
        },
        None => ImpactLevel {
            level: counts.max_depth() + 1,
            capped: true,
        },
    })
}

/// `⌊log₂ n⌋ + 1`, below which `L_X` cannot fall.
pub fn pigeonhole_lower_bound(n: u64) -> u32 {
    assert!(n >= 1);
    64 - n.leading_zeros()
}

/// `⌈−log₂ d⌉ + 1` for the minimum pairwise distance `d ∈ (0, 1)` of a
/// one-dimensional sample; `L_X` never exceeds it.
pub fn spacing_upper_bound(min_spacing: f64) -> Option<u32> {
    if !(min_spacing > 0.0 && min_spacing < 1.0) {
        return None;
    }
    // d = m·2^e with m ∈ [1/2, 1), so ⌈−log₂ d⌉ = 1 − e exactly
    let (_, e) = libm::frexp(min_spacing);
    Some((2 - e) as u32)
}

/// `⌈3 log₂ n⌉`, at least 2.
pub fn deterministic_truncation(n: u64) -> u32 {
    assert!(n >= 1);
    let cube = u128::from(n).pow(3);
    // smallest k with 2^k ≥ n³
    let k = 128 - (cube - 1).leading_zeros();
    k.max(2)
}

/// Resolves a policy to a level for the given sample.
pub fn resolve_truncation(kind: TruncationKind, counts: &CountTree) -> Result<u32> {
    let n = counts.n();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    Ok(match kind {
        TruncationKind::MaxImpact => max_impact_level(counts)?.level,
        TruncationKind::Deterministic => deterministic_truncation(n),
        TruncationKind::Fixed(0) => {
            return Err(Error::InvalidParameter("fixed truncation level must be at least 1".into()))
        }
        TruncationKind::Fixed(l) if l > MAX_TRUNCATION_LEVEL => {
            return Err(Error::InvalidParameter(format!(
                "fixed truncation level {l} exceeds {MAX_TRUNCATION_LEVEL}"
            )))
        }
        TruncationKind::Fixed(l) => l,
        TruncationKind::Auto => max_impact_level(counts)?
            .level
            .min(deterministic_truncation(n)),
    })
}

/// A tail series summed to tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSum {
    pub value: f64,
    pub terms_used: u32,
    /// Set when [`MAX_TAIL_TERMS`] was hit and the remainder was added
    /// through its asymptotic form.
    pub approximate: bool,
}

/// `ln 2 + ψ(a_l + 1) − ψ(2a_l + 1)`: the estimator term of a level where
/// a cell and its parent both hold one observation. Lies in `(0, 1/a_l)`.
pub fn singleton_term(prior: &PriorSchedule, level: u32) -> f64 {
    expected_log_double_split(1.0, 1.0, prior.a(level))
}

/// `ψ₁(a_l + 1) − ψ₁(2a_l + 1)`: the variance term of a singleton level.
pub fn singleton_variance_term(prior: &PriorSchedule, level: u32) -> f64 {
    let a = prior.a(level);
    trigamma(a + 1.0) - trigamma(2.0 * a + 1.0)
}

/// A tail term as a series in `1/a`: `term(a) = Σ d_m a^{−m} + R` with
/// `|R| ≤ C a^{−k}` for `(k, C) = omitted`.
struct Expansion {
    coeffs: &'static [(i32, f64)],
    omitted: (i32, f64),
}

// ln 2 + ψ(a+1) − ψ(2a+1) = 1/(4a) − Σ_k B_{2k}(1 − 4^{−k})/(2k) · a^{−2k}
const SINGLETON_EXPANSION: Expansion = Expansion {
    coeffs: &[
        (1, 0.25),
        (2, -1.0 / 16.0),
        (4, 1.0 / 128.0),
        (6, -1.0 / 256.0),
        (8, 17.0 / 4096.0),
    ],
    omitted: (10, (5.0 / 66.0) / 10.0 * (1.0 + 1.0 / 1024.0)),
};

// ψ₁(a+1) − ψ₁(2a+1) = 1/(2a) − 3/(8a²) + Σ_k B_{2k}(1 − 2^{−2k−1}) · a^{−2k−1}
const SINGLETON_VARIANCE_EXPANSION: Expansion = Expansion {
    coeffs: &[
        (1, 0.5),
        (2, -0.375),
        (3, 7.0 / 48.0),
        (5, -31.0 / 960.0),
        (7, 127.0 / 5376.0),
        (9, -511.0 / 15360.0),
    ],
    omitted: (11, (5.0 / 66.0) * (1.0 + 1.0 / 2048.0)),
};

/// `Σ_{k ≥ from} a_k^{−m}`.
fn power_tail(prior: &PriorSchedule, from: u32, m: i32) -> f64 {
    let l = f64::from(from);
    match *prior {
        PriorSchedule::Polynomial { c, rho } => c.powi(-m) * hurwitz_zeta(f64::from(m) * rho, l),
        PriorSchedule::Exponential { c, beta } => {
            let mb = f64::from(m) * beta;
            c.powi(-m) * (-(mb * l)).exp2() / (1.0 - (-mb).exp2())
        }
    }
}

fn tail_sum(
    prior: &PriorSchedule,
    from_level: u32,
    tol: f64,
    term: impl Fn(u32) -> f64,
    expansion: &Expansion,
) -> Result<TailSum> {
    if from_level == 0 {
        return Err(Error::InvalidParameter("tail starts at level 1 or deeper".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tail tolerance must be positive, got {tol}")));
    }
    if !prior.satisfies_abs_continuity() {
        return Err(Error::NonConvergentSchedule(prior.to_string()));
    }
    let mut value = 0.0;
    let mut terms_used = 0;
    let mut level = from_level;
    loop {
        value += term(level);
        terms_used += 1;
        // terms are bounded by 1/a_l, so the remainder is certified below tol
        if prior.inverse_tail_bound(level) < tol {
            return Ok(TailSum {
                value,
                terms_used,
                approximate: false,
            });
        }
        // once the 1/a series is accurate, the rest is a sum of power tails
        let (k, bound) = expansion.omitted;
        if bound * power_tail(prior, level + 1, k) < 0.5 * tol {
            let rest: f64 = expansion
                .coeffs
                .iter()
                .map(|&(m, d)| d * power_tail(prior, level + 1, m))
                .sum();
            return Ok(TailSum {
                value: value + rest,
                terms_used,
                approximate: false,
            });
        }
        if terms_used >= MAX_TAIL_TERMS || level == u32::MAX {
            return Ok(TailSum {
                value: value + expansion.coeffs[0].1 * asymptotic_inverse_tail(prior, level),
                terms_used,
                approximate: true,
            });
        }
        level += 1;
    }
}

// Σ_{k > l} 1/a_k to leading order.
fn asymptotic_inverse_tail(prior: &PriorSchedule, level: u32) -> f64 {
    let l = f64::from(level);
    match *prior {
        PriorSchedule::Polynomial { c, rho } => (l + 0.5).powf(1.0 - rho) / (c * (rho - 1.0)),
        PriorSchedule::Exponential { .. } => prior.inverse_tail_bound(level),
    }
}

/// `Σ_{l ≥ from_level} (ln 2 + ψ(a_l + 1) − ψ(2a_l + 1))`. Terms are summed
/// until the remaining levels are certified to add less than `tol`, or until
/// the remainder can be taken from the expansion in `1/a_l` to that accuracy.
pub fn tail_correction(prior: &PriorSchedule, from_level: u32, tol: f64) -> Result<TailSum> {
    tail_sum(prior, from_level, tol, |l| singleton_term(prior, l), &SINGLETON_EXPANSION)
}

/// `Σ_{l ≥ from_level} (ψ₁(a_l + 1) − ψ₁(2a_l + 1))`; divided by `n` it is
/// the posterior variance carried by the singleton levels.
pub fn variance_tail(prior: &PriorSchedule, from_level: u32, tol: f64) -> Result<TailSum> {
    tail_sum(
        prior,
        from_level,
        tol,
        |l| singleton_variance_term(prior, l),
        &SINGLETON_VARIANCE_EXPANSION,
    )
}

/// Per-level sums `Σ_{l(ε) = l} N_ε·E[log 2Y_ε | X]` and
/// `Σ_{l(ε) = l} N_ε²ψ₁(N_ε + a_l) − Σ_{l(ε) = l−1} N_ε²ψ₁(N_ε + 2a_l)` for
/// `l = 1..=level`.
///
/// Levels past the resolved depth continue every deepest cell as one branch;
/// `ties` reports whether any of those cells held more than one observation,
/// in which case the continuation is approximate.
struct LevelSums {
    entropy: Vec<f64>,
    variance: Vec<f64>,
    ties: bool,
}

fn level_sums(counts: &CountTree, prior: &PriorSchedule, level: u32) -> LevelSums {
    let resolved = counts.max_depth().min(level);
    let mut entropy = Vec::with_capacity(level as usize);
    let mut variance = Vec::with_capacity(level as usize);
    for l in 1..=resolved {
        let a = prior.a(l);
        let mut h = 0.0;
        let mut v = 0.0;
        for (cell, n_child) in counts.level(l) {
            let parent = cell.parent().expect("level ≥ 1");
            let n_parent = counts.count(&parent) as f64;
            let c = n_child as f64;
            h += c * expected_log_double_split(c, n_parent, a);
            v += c * c * trigamma(c + a);
        }
        for (_, n_parent) in counts.level(l - 1) {
            let p = n_parent as f64;
            v -= p * p * trigamma(p + 2.0 * a);
        }
        entropy.push(h);
        variance.push(v);
    }
    let mut ties = false;
    if level > resolved {
        let deepest: Vec<f64> = counts.level(resolved).map(|(_, k)| k as f64).collect();
        ties = deepest.iter().any(|&k| k > 1.0);
        for l in resolved + 1..=level {
            let a = prior.a(l);
            let (mut h, mut v) = (0.0, 0.0);
            for &k in &deepest {
                h += k * expected_log_double_split(k, k, a);
                v += k * k * (trigamma(k + a) - trigamma(k + 2.0 * a));
            }
            entropy.push(h);
            variance.push(v);
        }
    }
    LevelSums {
        entropy,
        variance,
        ties,
    }
}

/// `V_θ[−(1/n) Σ_i log θ^L(X_i) | X]` for the tree truncated at `level`:
/// `(1/n²) Σ_{l(ε) < level} (N_{ε0}²ψ₁(N_{ε0}+a) + N_{ε1}²ψ₁(N_{ε1}+a) − N_ε²ψ₁(N_ε+2a))`.
pub fn posterior_variance(counts: &CountTree, prior: &PriorSchedule, level: u32) -> Result<f64> {
    let n = counts.n();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let sums = level_sums(counts, prior, level);
    let n = n as f64;
    Ok((sums.variance.iter().sum::<f64>() / (n * n)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyWarning {
    /// Ties kept some cell above one observation at the deepest resolved
    /// level; `L_X` is capped and the levels past it are approximate.
    DepthCapReached,
    /// The schedule is not `c·2^{βl}` with `β > 2`; consistency is not
    /// guaranteed.
    EntropyRateUnmet,
    /// A tail series was cut at [`MAX_TAIL_TERMS`] and completed
    /// asymptotically.
    TailApproximate,
}

/// Entropy estimate in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub n: u64,
    /// `Ĥ`, including the analytic tail.
    pub value: f64,
    /// The sum over levels `1..=truncation_level` alone.
    pub truncated_value: f64,
    pub posterior_variance: f64,
    pub truncation_level: u32,
    pub impact_level: u32,
    pub tail_correction: f64,
    pub tail_terms_used: u32,
    pub warnings: Vec<EntropyWarning>,
}

impl EntropyEstimate {
    /// The same estimate expressed in bits.
    pub fn to_bits(&self) -> Self {
        let ln2 = std::f64::consts::LN_2;
        EntropyEstimate {
            value: self.value / ln2,
            truncated_value: self.truncated_value / ln2,
            posterior_variance: self.posterior_variance / (ln2 * ln2),
            tail_correction: self.tail_correction / ln2,
            warnings: self.warnings.clone(),
            ..*self
        }
    }

    pub fn posterior_sd(&self) -> f64 {
        self.posterior_variance.sqrt()
    }
}

/// Computes `Ĥ(X)` with levels `1..=L` summed from the counts and levels
/// past `L` from [`tail_correction`].
pub fn entropy_estimate(
    counts: &CountTree,
    prior: &PriorSchedule,
    policy: TruncationPolicy,
) -> Result<EntropyEstimate> {
    let n = counts.n();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let impact = max_impact_level(counts)?;
    let level = resolve_truncation(policy.kind, counts)?;

    let mut warnings = Vec::new();
    if !prior.satisfies_entropy_rate() {
        warnings.push(EntropyWarning::EntropyRateUnmet);
    }

    let sums = level_sums(counts, prior, level);
    if impact.capped || sums.ties {
        warnings.push(EntropyWarning::DepthCapReached);
    }
    let nf = n as f64;
    let truncated_value = -sums.entropy.iter().sum::<f64>() / nf;
    let truncated_variance = sums.variance.iter().sum::<f64>() / (nf * nf);

    let tail = tail_correction(prior, level + 1, policy.tail_tolerance)?;
    let var_tail = variance_tail(prior, level + 1, policy.tail_tolerance)?;
    if tail.approximate || var_tail.approximate {
        warnings.push(EntropyWarning::TailApproximate);
    }

    Ok(EntropyEstimate {
        n,
        value: truncated_value - tail.value,
        truncated_value,
        posterior_variance: (truncated_variance + var_tail.value / nf).max(0.0),
        truncation_level: level,
        impact_level: impact.level,
        tail_correction: tail.value,
        tail_terms_used: tail.terms_used,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::PartitionSpec;
    use crate::specfun::digamma;

    fn line() -> PartitionSpec {
        PartitionSpec::unit_interval()
    }

    fn exp3() -> PriorSchedule {
        PriorSchedule::exponential(1.0, 3.0).unwrap()
    }

    #[test]
    fn singleton_expansions_match_polygamma() {
        for a in [50.0, 1e3] {
            let eval = |e: &Expansion| e.coeffs.iter().map(|&(m, d)| d * f64::powi(a, -m)).sum::<f64>();
            let g = expected_log_double_split(1.0, 1.0, a);
            assert!((eval(&SINGLETON_EXPANSION) - g).abs() <= 1e-15 * g, "a = {a}");
            let v = trigamma(a + 1.0) - trigamma(2.0 * a + 1.0);
            assert!((eval(&SINGLETON_VARIANCE_EXPANSION) - v).abs() <= 1e-13 * v, "a = {a}");
        }
    }

    #[test]
    fn slowly_decaying_tail_is_fast_and_exact() {
        // ρ = 1.1: explicit summation alone would need ~10^{120} terms
        let p = PriorSchedule::polynomial(1.0, 1.1).unwrap();
        let t = tail_correction(&p, 5, 1e-12).unwrap();
        assert!(!t.approximate && t.terms_used < 100, "{t:?}");
        let explicit: f64 = (5..5000).map(|l| singleton_term(&p, l)).sum();
        let rest: f64 = SINGLETON_EXPANSION
            .coeffs
            .iter()
            .map(|&(m, d)| d * power_tail(&p, 5000, m))
            .sum();
        assert!((t.value - (explicit + rest)).abs() < 1e-10);
    }

    #[test]
    fn impact_level_examples() {
        let tree = CountTree::build(&[[0.1], [0.6]], line(), 53).unwrap();
        assert_eq!(max_impact_level(&tree).unwrap(), ImpactLevel { level: 2, capped: false });
        let single = CountTree::build(&[[0.77]], line(), 53).unwrap();
        assert_eq!(max_impact_level(&single).unwrap().level, 2);
        let tied = CountTree::build(&[[0.3], [0.3]], line(), 20).unwrap();
        assert_eq!(max_impact_level(&tied).unwrap(), ImpactLevel { level: 21, capped: true });
        let empty = CountTree::empty(line(), 4).unwrap();
        assert_eq!(max_impact_level(&empty), Err(Error::EmptySample));
    }

    #[test]
    fn bounds_on_impact_level() {
        assert_eq!(pigeonhole_lower_bound(1), 1);
        assert_eq!(pigeonhole_lower_bound(5), 3);
        assert_eq!(pigeonhole_lower_bound(1024), 11);
        assert_eq!(spacing_upper_bound(0.5), Some(2));
        assert_eq!(spacing_upper_bound(0.3), Some(3));
        assert_eq!(spacing_upper_bound(0.25), Some(3));
        assert_eq!(spacing_upper_bound(0.0), None);
        // {0.1, 0.6}: d = 0.5
        assert!(2 <= spacing_upper_bound(0.5).unwrap());
    }

    #[test]
    fn deterministic_truncation_examples() {
        assert_eq!(deterministic_truncation(1), 2);
        assert_eq!(deterministic_truncation(2), 3);
        assert_eq!(deterministic_truncation(1000), 30);
        assert_eq!(deterministic_truncation(1024), 30);
        assert_eq!(deterministic_truncation(1025), 31);
        for n in [3u64, 7, 100, 12345, 1 << 20, 999_999_999] {
            let exact = (3.0 * (n as f64).log2()).ceil() as u32;
            assert_eq!(deterministic_truncation(n), exact.max(2), "n = {n}");
        }
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("auto".parse::<TruncationKind>().unwrap(), TruncationKind::Auto);
        assert_eq!("max_impact".parse::<TruncationKind>().unwrap(), TruncationKind::MaxImpact);
        assert_eq!("fixed:7".parse::<TruncationKind>().unwrap(), TruncationKind::Fixed(7));
        assert!("fixed:0".parse::<TruncationKind>().is_err());
        assert!("greedy".parse::<TruncationKind>().is_err());
        for kind in [TruncationKind::Deterministic, TruncationKind::Fixed(3)] {
            assert_eq!(kind.to_string().parse::<TruncationKind>().unwrap(), kind);
        }
    }

    #[test]
    fn first_tail_term_by_hand() {
        let flat = PriorSchedule::polynomial(1.0, 0.0).unwrap();
        let t = singleton_term(&flat, 1);
        assert!((t - (std::f64::consts::LN_2 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn singleton_terms_sit_below_inverse_a() {
        for prior in [
            exp3(),
            PriorSchedule::exponential(0.3, 1.0).unwrap(),
            PriorSchedule::polynomial(1.0, 2.0).unwrap(),
            PriorSchedule::polynomial(0.01, 0.5).unwrap(),
        ] {
            for l in 1..=40 {
                let a = prior.a(l);
                let t = singleton_term(&prior, l);
                assert!(t > 0.0 && t * a < 1.0, "{prior} level {l}: term·a = {}", t * a);
                let v = singleton_variance_term(&prior, l);
                assert!(v > 0.0 && v * a < 1.0);
            }
        }
    }

    #[test]
    fn tail_from_level_ten() {
        let tail = tail_correction(&exp3(), 10, 1e-12).unwrap();
        assert!(tail.value > 0.0 && tail.value < 2f64.powi(-29));
        assert!(!tail.approximate);
    }

    #[test]
    fn tail_rejects_divergent_schedule() {
        let harmonic = PriorSchedule::polynomial(1.0, 1.0).unwrap();
        assert!(matches!(
            tail_correction(&harmonic, 3, 1e-12),
            Err(Error::NonConvergentSchedule(_))
        ));
        assert!(tail_correction(&exp3(), 0, 1e-12).is_err());
    }

    #[test]
    fn polynomial_tail_against_basel() {
        let squares = PriorSchedule::polynomial(1.0, 2.0).unwrap();
        let tail = tail_correction(&squares, 1, 1e-12).unwrap();
        assert!(!tail.approximate);
        assert!(tail.terms_used < 10);
        let flat = PriorSchedule::polynomial(1e-6, 1.01).unwrap();
        let cut = tail_correction(&flat, 1, 1e-12).unwrap();
        assert!(cut.approximate);
        assert_eq!(cut.terms_used, MAX_TAIL_TERMS);
        // first 200 terms from raw digamma, the rest as Σ 1/(4l²) − 1/(16l⁴)
        // with an O(Σ 1/l⁸) error
        let head: f64 = (1..=200u32)
            .map(|l| {
                let a = f64::from(l * l);
                std::f64::consts::LN_2 + digamma(a + 1.0) - digamma(2.0 * a + 1.0)
            })
            .sum();
        let pi = std::f64::consts::PI;
        let rest = pi.powi(2) / 24.0 - (1..=200u32).map(|l| 0.25 / f64::from(l).powi(2)).sum::<f64>()
            - (pi.powi(4) / 90.0 - (1..=200u32).map(|l| f64::from(l).powi(-4)).sum::<f64>()) / 16.0;
        assert!((tail.value - head - rest).abs() < 1e-11, "{}", tail.value - head - rest);
    }

    #[test]
    fn single_observation_estimate() {
        let tree = CountTree::build(&[[0.42]], line(), 53).unwrap();
        let est = entropy_estimate(&tree, &exp3(), TruncationPolicy::new(TruncationKind::MaxImpact))
            .unwrap();
        assert_eq!(est.truncation_level, 2);
        let a1 = 8.0;
        let first = std::f64::consts::LN_2 + digamma(1.0 + a1) - digamma(1.0 + 2.0 * a1);
        let second = singleton_term(&exp3(), 2);
        let tail = tail_correction(&exp3(), 3, 1e-12).unwrap().value;
        assert!((est.value + first + second + tail).abs() < 1e-14);
        // identical to summing the singleton term from level 1
        let all = tail_correction(&exp3(), 1, 1e-12).unwrap().value;
        assert!((est.value + all).abs() < 1e-14);
        assert!(est.warnings.is_empty());
    }

    #[test]
    fn estimate_does_not_depend_on_policy_past_impact_level() {
        let sample: Vec<[f64; 1]> = (0..40).map(|i| [((i * 37) % 101) as f64 / 101.0]).collect();
        let tree = CountTree::build(&sample, line(), 53).unwrap();
        let prior = exp3();
        let at = |kind| entropy_estimate(&tree, &prior, TruncationPolicy::new(kind)).unwrap();
        let impact = at(TruncationKind::MaxImpact);
        let det = at(TruncationKind::Deterministic);
        let deep = at(TruncationKind::Fixed(60));
        assert!(impact.truncation_level < det.truncation_level);
        assert!((impact.value - det.value).abs() < 1e-12);
        assert!((impact.value - deep.value).abs() < 1e-12);
        assert!((impact.posterior_variance - deep.posterior_variance).abs() < 1e-14);
    }

    #[test]
    fn estimate_errors_and_warnings() {
        let empty = CountTree::empty(line(), 10).unwrap();
        assert_eq!(
            entropy_estimate(&empty, &exp3(), TruncationPolicy::default()),
            Err(Error::EmptySample)
        );
        let tree = CountTree::build(&[[0.1], [0.1], [0.5]], line(), 12).unwrap();
        let flat = PriorSchedule::polynomial(1e-6, 1.01).unwrap();
        let est = entropy_estimate(&tree, &flat, TruncationPolicy::default()).unwrap();
        assert!(est.warnings.contains(&EntropyWarning::EntropyRateUnmet));
        assert!(est.warnings.contains(&EntropyWarning::DepthCapReached));
        assert!(est.warnings.contains(&EntropyWarning::TailApproximate));
        assert!(est.value.is_finite());
    }

    #[test]
    fn variance_single_level_by_hand() {
        let flat = PriorSchedule::polynomial(1.0, 0.0).unwrap();
        let tree = CountTree::build(&[[0.2]], line(), 5).unwrap();
        let v = posterior_variance(&tree, &flat, 1).unwrap();
        assert!((v - 0.25).abs() < 1e-14);
    }

    #[test]
    fn bits_conversion() {
        let tree = CountTree::build(&[[0.2], [0.7]], line(), 53).unwrap();
        let est = entropy_estimate(&tree, &exp3(), TruncationPolicy::default()).unwrap();
        let bits = est.to_bits();
        assert!((bits.value * std::f64::consts::LN_2 - est.value).abs() < 1e-15);
        assert_eq!(bits.truncation_level, est.truncation_level);
    }
}
