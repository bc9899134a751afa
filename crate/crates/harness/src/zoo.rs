//! Reference densities with known entropies.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use ptree_core::specfun::{digamma, ln_beta};
use ptree_core::DensityOracle;
use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution, Normal};
use serde::Serialize;

use crate::error::HarnessError;

/// Regularity assumptions a density does or does not meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionFlags {
    /// `|∫ f log f| < ∞`.
    pub finite_entropy: bool,
    /// A lower bound `m` on every split ratio `y_{ε0}(f)`, when one is known.
    pub split_ratio_bound: Option<f64>,
    /// `M₁ > f > M₂ > 0` on the whole cube.
    pub bounded_away: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Uniform { dim: usize },
    Beta22,
    Arcsine,
    TruncatedNormal { mu: f64, sigma: f64 },
    Beta22xUniform,
}

/// A named member of the zoo.
#[derive(Debug, Clone, PartialEq)]
pub struct ZooDensity {
    name: &'static str,
    kind: Kind,
}

/// Names accepted by [`ZooDensity::by_name`].
pub const ZOO_NAMES: &[&str] = &["uniform", "uniform2", "beta22", "arcsine", "truncnorm", "beta22-uniform"];

const TRUNCNORM_MU: f64 = 0.5;
const TRUNCNORM_SIGMA: f64 = 0.2;

impl ZooDensity {
    pub fn by_name(name: &str) -> Result<Self, HarnessError> {
        let (name, kind) = match name {
            "uniform" => ("uniform", Kind::Uniform { dim: 1 }),
            "uniform2" => ("uniform2", Kind::Uniform { dim: 2 }),
            "beta22" | "beta(2,2)" => ("beta22", Kind::Beta22),
            "arcsine" | "beta(0.5,0.5)" => ("arcsine", Kind::Arcsine),
            "truncnorm" => (
                "truncnorm",
                Kind::TruncatedNormal {
                    mu: TRUNCNORM_MU,
                    sigma: TRUNCNORM_SIGMA,
                },
            ),
            "beta22-uniform" => ("beta22-uniform", Kind::Beta22xUniform),
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown density '{other}', expected one of {}",
                    ZOO_NAMES.join(", ")
                )))
            }
        };
        Ok(ZooDensity { name, kind })
    }

    pub fn all() -> Vec<ZooDensity> {
        ZOO_NAMES.iter().map(|n| Self::by_name(n).expect("zoo name")).collect()
    }

    pub fn shared(&self) -> Arc<dyn DensityOracle> {
        Arc::new(self.clone())
    }

    /// `‖f‖₂² = ∫ f²`, infinite when `f` is not square integrable.
    pub fn l2_norm_sq(&self) -> f64 {
        match self.kind {
            Kind::Uniform { .. } => 1.0,
            Kind::Beta22 | Kind::Beta22xUniform => 1.2,
            Kind::Arcsine => f64::INFINITY,
            Kind::TruncatedNormal { mu, sigma } => {
                let z = normal_mass(mu, sigma);
                // ∫ φ(u)² du = (erf(hi) − erf(lo)) / (4√π) over the standardised support
                let lo = -mu / sigma;
                let hi = (1.0 - mu) / sigma;
                (libm::erf(hi) - libm::erf(lo)) / (4.0 * PI.sqrt() * sigma * z * z)
            }
        }
    }

    pub fn assumptions(&self) -> AssumptionFlags {
        let (m, bounded) = match self.kind {
            Kind::Uniform { .. } => (Some(0.5), true),
            Kind::Beta22 | Kind::Beta22xUniform => (Some(0.25), false),
            Kind::Arcsine => (Some(1.0 - FRAC_1_SQRT_2), false),
            Kind::TruncatedNormal { mu, sigma } => {
                let lo = normal_pdf(mu.max(1.0 - mu), mu, sigma);
                let hi = normal_pdf(mu, mu, sigma);
                (Some(lo / (lo + hi)), true)
            }
        };
        AssumptionFlags {
            finite_entropy: true,
            split_ratio_bound: m,
            bounded_away: bounded,
        }
    }

    /// One draw in `[0,1)^p`.
    pub fn sample_point<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            Kind::Uniform { dim } => (0..dim).map(|_| rng.gen::<f64>()).collect(),
            Kind::Beta22 => vec![below_one(rng, |r| Beta::new(2.0, 2.0).unwrap().sample(r))],
            Kind::Arcsine => vec![below_one(rng, |r| Beta::new(0.5, 0.5).unwrap().sample(r))],
            Kind::TruncatedNormal { mu, sigma } => {
                let normal = Normal::new(mu, sigma).unwrap();
                loop {
                    let x: f64 = normal.sample(rng);
                    if (0.0..1.0).contains(&x) {
                        return vec![x];
                    }
                }
            }
            Kind::Beta22xUniform => {
                let x = below_one(rng, |r| Beta::new(2.0, 2.0).unwrap().sample(r));
                vec![x, rng.gen::<f64>()]
            }
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_point(rng)).collect()
    }

    fn interval_probability(&self, a: f64, b: f64) -> f64 {
        match self.kind {
            Kind::Uniform { .. } => b - a,
            Kind::Beta22 | Kind::Beta22xUniform => {
                // F(x) = 3x² − 2x³, differenced in factored form
                (b - a) * (3.0 * (a + b) - 2.0 * (a * a + a * b + b * b))
            }
            Kind::Arcsine => {
                // (2/π)(asin √b − asin √a) through the angle-difference identity
                let s = (b * (1.0 - a)).sqrt() - (a * (1.0 - b)).sqrt();
                2.0 / PI * s.clamp(-1.0, 1.0).asin()
            }
            Kind::TruncatedNormal { mu, sigma } => {
                let z = normal_mass(mu, sigma);
                if b - a < 1e-3 {
                    gauss_legendre5(|x| normal_pdf(x, mu, sigma) / z, a, b)
                } else {
                    let s = sigma * std::f64::consts::SQRT_2;
                    0.5 * (libm::erf((b - mu) / s) - libm::erf((a - mu) / s)) / z
                }
            }
        }
    }
}

impl DensityOracle for ZooDensity {
    fn name(&self) -> &str {
        self.name
    }

    fn dim(&self) -> usize {
        match self.kind {
            Kind::Uniform { dim } => dim,
            Kind::Beta22xUniform => 2,
            _ => 1,
        }
    }

    fn pdf(&self, point: &[f64]) -> f64 {
        if point.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return 0.0;
        }
        let x = point[0];
        match self.kind {
            Kind::Uniform { .. } => 1.0,
            Kind::Beta22 | Kind::Beta22xUniform => 6.0 * x * (1.0 - x),
            Kind::Arcsine => 1.0 / (PI * (x * (1.0 - x)).sqrt()),
            Kind::TruncatedNormal { mu, sigma } => normal_pdf(x, mu, sigma) / normal_mass(mu, sigma),
        }
    }

    fn box_probability(&self, lower: &[f64], upper: &[f64]) -> Option<f64> {
        let first = self.interval_probability(lower[0], upper[0]);
        let rest: f64 = lower[1..].iter().zip(&upper[1..]).map(|(l, u)| u - l).product();
        Some(first * rest)
    }

    fn entropy(&self) -> Option<f64> {
        Some(match self.kind {
            Kind::Uniform { .. } => 0.0,
            Kind::Beta22 | Kind::Beta22xUniform => beta_entropy(2.0, 2.0),
            Kind::Arcsine => beta_entropy(0.5, 0.5),
            Kind::TruncatedNormal { mu, sigma } => {
                let z = normal_mass(mu, sigma);
                let (lo, hi) = (-mu / sigma, (1.0 - mu) / sigma);
                let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
                (2.0 * PI * std::f64::consts::E).sqrt().ln()
                    + (sigma * z).ln()
                    + (lo * phi(lo) - hi * phi(hi)) / (2.0 * z)
            }
        })
    }
}

/// `H(Beta(α, β)) = ln B(α,β) − (α−1)ψ(α) − (β−1)ψ(β) + (α+β−2)ψ(α+β)`.
pub fn beta_entropy(alpha: f64, beta: f64) -> f64 {
    ln_beta(alpha, beta) - (alpha - 1.0) * digamma(alpha) - (beta - 1.0) * digamma(beta)
        + (alpha + beta - 2.0) * digamma(alpha + beta)
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let u = (x - mu) / sigma;
    (-0.5 * u * u).exp() / (sigma * (2.0 * PI).sqrt())
}

// Φ((1−μ)/σ) − Φ(−μ/σ)
fn normal_mass(mu: f64, sigma: f64) -> f64 {
    let s = sigma * std::f64::consts::SQRT_2;
    0.5 * (libm::erf((1.0 - mu) / s) - libm::erf(-mu / s))
}

fn gauss_legendre5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * NODES
        .iter()
        .zip(WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
}

// Beta draws can round to exactly 1.0; redraw those.
fn below_one<R: RngCore + ?Sized>(rng: &mut R, mut draw: impl FnMut(&mut R) -> f64) -> f64 {
    loop {
        let x = draw(rng);
        if (0.0..1.0).contains(&x) {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ptree_core::quadrature::tanh_sinh;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const BETA22_ENTROPY: f64 = -0.12509280256138833415;
    const ARCSINE_ENTROPY: f64 = -0.24156447527049044469;

    /// The pdf along the first axis, other coordinates at 1/2.
    fn pdf_on_axis(f: &ZooDensity, x: f64) -> f64 {
        let mut p = vec![0.5; f.dim()];
        p[0] = x;
        f.pdf(&p)
    }

    /// `∫_a^b` of `g` along the first axis. Every zoo density is symmetric
    /// about 1/2 there, so cells in the upper half are mirrored into the
    /// lower half, where nodes next to an endpoint keep full relative
    /// precision.
    fn mirrored_integral(g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
        if b <= 0.5 {
            tanh_sinh(&g, a, b, tol)
        } else if a >= 0.5 {
            tanh_sinh(&g, 1.0 - b, 1.0 - a, tol)
        } else {
            Some(tanh_sinh(&g, a, 0.5, tol)? + tanh_sinh(&g, 1.0 - b, 0.5, tol)?)
        }
    }

    #[test]
    fn first_axis_is_symmetric() {
        for f in ZooDensity::all() {
            for i in 1..1000 {
                let x = i as f64 / 1000.0;
                let (p, q) = (pdf_on_axis(&f, x), pdf_on_axis(&f, 1.0 - x));
                assert!((p - q).abs() <= 1e-12 * p, "{} at {x}", f.name());
            }
        }
    }

    #[test]
    fn analytic_beta_entropies() {
        assert!((beta_entropy(2.0, 2.0) - BETA22_ENTROPY).abs() < 1e-14);
        assert!((beta_entropy(0.5, 0.5) - ARCSINE_ENTROPY).abs() < 1e-14);
        assert!((beta_entropy(1.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn pdfs_integrate_to_one_on_a_depth_14_grid() {
        for f in ZooDensity::all() {
            // tanh-sinh on each of 2^14 cells of the first axis (other axes uniform)
            let cells = 1 << 14;
            let total: f64 = (0..cells)
                .map(|i| {
                    let (a, b) = (i as f64 / cells as f64, (i + 1) as f64 / cells as f64);
                    mirrored_integral(&|x: f64| pdf_on_axis(&f, x), a, b, 1e-13)
                    .unwrap_or_else(|| panic!("{} cell {i}", f.name()))
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-8, "{}: {total}", f.name());
        }
    }

    #[test]
    fn entropies_match_quadrature() {
        for f in ZooDensity::all() {
            let integrand = |x: f64| {
                let v = pdf_on_axis(&f, x);
                if v > 0.0 {
                    -v * v.ln()
                } else {
                    0.0
                }
            };
            let h = mirrored_integral(&integrand, 0.0, 1.0, 1e-10).unwrap();
            assert!((h - f.entropy().unwrap()).abs() < 1e-6, "{}: {h}", f.name());
        }
    }

    #[test]
    fn box_probabilities_match_quadrature() {
        for f in ZooDensity::all() {
            for &(a, b) in &[(0.0, 0.25), (0.3, 0.3001), (0.5, 1.0), (0.999, 1.0), (0.123, 0.124)] {
                let q = mirrored_integral(&|x: f64| pdf_on_axis(&f, x), a, b, 1e-14).unwrap();
                let mut lo = vec![0.0; f.dim()];
                let mut hi = vec![1.0; f.dim()];
                lo[0] = a;
                hi[0] = b;
                let exact = f.box_probability(&lo, &hi).unwrap();
                assert!((exact - q).abs() <= 1e-12 * q.max(1e-3), "{} on [{a},{b}): {exact} vs {q}", f.name());
            }
        }
    }

    #[test]
    fn square_norms() {
        let tn = ZooDensity::by_name("truncnorm").unwrap();
        let q = tanh_sinh(
            &|x: f64| tn.pdf(&[x]).powi(2),
            0.0,
            1.0,
            1e-12,
        )
        .unwrap();
        assert!((tn.l2_norm_sq() - q).abs() < 1e-10);
        assert_eq!(ZooDensity::by_name("beta22").unwrap().l2_norm_sq(), 1.2);
        assert!(ZooDensity::by_name("arcsine").unwrap().l2_norm_sq().is_infinite());
    }

    #[test]
    fn samples_stay_in_the_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for f in ZooDensity::all() {
            for x in f.sample(2000, &mut rng) {
                assert_eq!(x.len(), f.dim());
                assert!(x.iter().all(|v| (0.0..1.0).contains(v)));
            }
        }
    }

    #[test]
    fn unknown_name() {
        assert!(ZooDensity::by_name("cauchy").is_err());
    }
}
