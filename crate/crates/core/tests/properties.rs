use std::sync::Arc;

use proptest::prelude::*;
use ptree_core::divergence::{cell_sum_entropy, discretized_entropy_series, total_variation_masses};
use ptree_core::entropy::{posterior_variance, TruncationKind, TruncationPolicy};
use ptree_core::specfun::{digamma, trigamma};
use ptree_core::*;

fn sample_strategy(dim: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, dim), 1..max_len)
}

/// Points on a coarse grid, so that ties and shared deep branches are common.
fn gridded_sample(max_len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec((0u32..64).prop_map(|k| vec![f64::from(k) / 64.0]), 1..max_len)
}

fn splits_strategy(max_depth: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_depth).prop_flat_map(|depth| {
        (0..depth)
            .map(|l| prop::collection::vec(0.001f64..0.999, 1usize << l))
            .collect::<Vec<_>>()
    })
}

fn prior_strategy() -> impl Strategy<Value = PriorSchedule> {
    prop_oneof![
        (0.2f64..5.0, 0.5f64..3.5).prop_map(|(c, b)| PriorSchedule::exponential(c, b).unwrap()),
        (0.2f64..5.0, 1.1f64..4.0).prop_map(|(c, r)| PriorSchedule::polynomial(c, r).unwrap()),
    ]
}

struct Uniform;

impl DensityOracle for Uniform {
    fn name(&self) -> &str {
        "uniform"
    }
    fn dim(&self) -> usize {
        1
    }
    fn pdf(&self, _: &[f64]) -> f64 {
        1.0
    }
    fn box_probability(&self, lower: &[f64], upper: &[f64]) -> Option<f64> {
        Some(upper[0] - lower[0])
    }
    fn entropy(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// A step density given by its own depth-`j` cell masses.
struct Step {
    depth: u32,
    masses: Vec<f64>,
}

impl DensityOracle for Step {
    fn name(&self) -> &str {
        "step"
    }
    fn dim(&self) -> usize {
        1
    }
    fn pdf(&self, x: &[f64]) -> f64 {
        let i = libm::ldexp(x[0], self.depth as i32) as usize;
        libm::ldexp(self.masses[i.min(self.masses.len() - 1)], self.depth as i32)
    }
    fn box_probability(&self, lower: &[f64], upper: &[f64]) -> Option<f64> {
        let cdf = |t: f64| {
            let scaled = libm::ldexp(t, self.depth as i32);
            let full = scaled.floor() as usize;
            let mut total: f64 = self.masses[..full.min(self.masses.len())].iter().sum();
            if full < self.masses.len() {
                total += self.masses[full] * (scaled - full as f64);
            }
            total
        };
        Some(cdf(upper[0]) - cdf(lower[0]))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn encoded_cell_contains_point(point in prop::collection::vec(0.0f64..1.0, 1..4), depth in 0u32..60) {
        let spec = PartitionSpec::new(point.len()).unwrap();
        let depth = depth.min(spec.max_depth());
        let path = spec.encode(&point, depth).unwrap();
        prop_assert_eq!(path.len(), depth);
        let cell = spec.cell_bounds(&path);
        prop_assert!(cell.contains(&point));
        prop_assert!((cell.volume() - path.measure()).abs() <= 1e-15 * path.measure());
        for l in 0..=depth {
            prop_assert_eq!(spec.encode(&point, l).unwrap(), path.prefix(l));
        }
    }

    #[test]
    fn children_tile_parent(bits in any::<u64>(), len in 0u32..40, dim in 1usize..4) {
        let spec = PartitionSpec::new(dim).unwrap();
        let len = len.min(spec.max_depth() - 1);
        let parent = BinaryPath::from_bits(len, if len == 0 { 0 } else { bits >> (64 - len) });
        let (c0, c1) = parent.children();
        let (b, b0, b1) = (spec.cell_bounds(&parent), spec.cell_bounds(&c0), spec.cell_bounds(&c1));
        prop_assert_eq!(b0.volume() + b1.volume(), b.volume());
        let axis = spec.axis_of_digit(len + 1);
        for i in 0..dim {
            if i == axis {
                prop_assert_eq!(b0.lower[i], b.lower[i]);
                prop_assert_eq!(b0.upper[i], b1.lower[i]);
                prop_assert_eq!(b1.upper[i], b.upper[i]);
            } else {
                prop_assert_eq!((b0.lower[i], b0.upper[i]), (b.lower[i], b.upper[i]));
                prop_assert_eq!((b1.lower[i], b1.upper[i]), (b.lower[i], b.upper[i]));
            }
        }
    }

    #[test]
    fn path_text_round_trip(bits in any::<u64>(), len in 0u32..=64) {
        let path = BinaryPath::from_bits(len, if len == 0 { 0 } else { bits >> (64 - len) });
        prop_assert_eq!(path.to_string().parse::<BinaryPath>().unwrap(), path);
    }

    #[test]
    fn count_tree_parent_sums(sample in sample_strategy(2, 200), depth in 1u32..30) {
        let tree = CountTree::build(&sample, PartitionSpec::new(2).unwrap(), depth).unwrap();
        for l in 0..=depth {
            prop_assert_eq!(tree.level(l).map(|(_, k)| k).sum::<u64>(), sample.len() as u64);
        }
        for (cell, k) in tree.iter() {
            prop_assert!(k >= 1);
            if cell.len() < depth {
                let (c0, c1) = cell.children();
                prop_assert_eq!(tree.count(&c0) + tree.count(&c1), k);
            }
        }
    }

    #[test]
    fn conjugacy_composition(a in gridded_sample(60), b in sample_strategy(1, 60)) {
        let spec = PartitionSpec::unit_interval();
        let mut updated = CountTree::build(&a, spec, 20).unwrap();
        updated.absorb(&b).unwrap();
        let union: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        prop_assert_eq!(updated, CountTree::build(&union, spec, 20).unwrap());
    }

    #[test]
    fn predictive_masses_normalise(sample in sample_strategy(1, 100), prior in prior_strategy(), depth in 0u32..=14) {
        let tree = CountTree::build(&sample, PartitionSpec::unit_interval(), 20).unwrap();
        let post = PosteriorTree::new(prior, tree);
        let masses = post.predictive_cell_masses(depth).unwrap();
        prop_assert_eq!(masses.len(), 1usize << depth);
        prop_assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(masses.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn entropy_series_equals_cell_sum(splits in splits_strategy(10)) {
        let depth = splits.len() as u32;
        let dens = SampledDensity::from_splits(PartitionSpec::unit_interval(), splits).unwrap();
        let direct = cell_sum_entropy(dens.cell_masses(), depth);
        prop_assert!((entropy_series(&dens) - direct).abs() < 1e-10);
    }

    #[test]
    fn estimator_forms_agree(sample in gridded_sample(80), extra in sample_strategy(1, 40), level in 1u32..12, beta in 0.5f64..3.0) {
        // ε-sum form (per child) against the regrouped per-parent form with raw ψ
        let prior = PriorSchedule::exponential(1.0, beta).unwrap();
        let mut tree = CountTree::build(&sample, PartitionSpec::unit_interval(), 30).unwrap();
        tree.absorb(&extra).unwrap();
        let est = entropy_estimate(&tree, &prior, TruncationPolicy::new(TruncationKind::Fixed(level))).unwrap();
        let mut parcels = 0.0;
        for l in 0..level {
            let a = prior.a(l + 1);
            for (parent, n) in tree.level(l) {
                let (c0, c1) = parent.children();
                let (n0, n1, n) = (tree.count(&c0) as f64, tree.count(&c1) as f64, n as f64);
                parcels += n * std::f64::consts::LN_2 + n0 * digamma(n0 + a) + n1 * digamma(n1 + a)
                    - n * digamma(n + 2.0 * a);
            }
        }
        let parcel_form = -parcels / tree.n() as f64;
        prop_assert!((est.truncated_value - parcel_form).abs() < 1e-10,
            "{} vs {}", est.truncated_value, parcel_form);
    }

    #[test]
    fn variance_matches_parent_form(sample in gridded_sample(80), level in 1u32..12) {
        let prior = PriorSchedule::polynomial(1.0, 2.5).unwrap();
        let tree = CountTree::build(&sample, PartitionSpec::unit_interval(), 30).unwrap();
        let mut total = 0.0;
        for l in 0..level {
            let a = prior.a(l + 1);
            for (parent, n) in tree.level(l) {
                let (c0, c1) = parent.children();
                let (n0, n1, n) = (tree.count(&c0) as f64, tree.count(&c1) as f64, n as f64);
                total += n0 * n0 * trigamma(n0 + a) + n1 * n1 * trigamma(n1 + a)
                    - n * n * trigamma(n + 2.0 * a);
            }
        }
        let n = tree.n() as f64;
        let v = posterior_variance(&tree, &prior, level).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!((v - total / (n * n)).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_and_pinsker(target in splits_strategy(8), model in splits_strategy(8)) {
        // f₀ a step density at its own depth, θ drawn at a depth no finer
        let spec = PartitionSpec::unit_interval();
        let f0 = SampledDensity::from_splits(spec, target).unwrap();
        let depth = f0.depth();
        // a coarser θ is the same density with uniform splits below its depth
        let mut model: Vec<Vec<f64>> = model.into_iter().take(depth as usize).collect();
        while model.len() < depth as usize {
            model.push(vec![0.5; 1 << model.len()]);
        }
        let theta = SampledDensity::from_splits(spec, model).unwrap();
        let oracle = Step { depth, masses: f0.cell_masses().to_vec() };
        let table = cell_probabilities(Arc::new(oracle), spec, depth).unwrap();
        let h = entropy_series(&f0);
        let k = kl_series(&table, &theta, h).unwrap();
        prop_assert!(k >= -1e-9, "K = {k}");
        let tv = total_variation_masses(f0.cell_masses(), theta.cell_masses());
        prop_assert!(tv <= (k.max(0.0) / 2.0).sqrt() + 1e-12, "TV = {tv}, K = {k}");
        // matched resolution: K is the cell-sum KL of the two step densities
        let direct: f64 = f0.cell_masses().iter().zip(theta.cell_masses())
            .map(|(&p, q)| if p > 0.0 { p * (p / q).ln() } else { 0.0 })
            .sum();
        prop_assert!((k - direct).abs() < 1e-10);
    }

    #[test]
    fn envelope_brackets_every_cell(splits in splits_strategy(10)) {
        let dens = SampledDensity::from_splits(PartitionSpec::unit_interval(), splits).unwrap();
        let (lo, hi) = density_envelope(&dens);
        for i in 0..dens.cell_masses().len() {
            let d = dens.cell_density(i);
            prop_assert!(lo <= d * (1.0 + 1e-12) && d <= hi * (1.0 + 1e-12));
        }
    }
}

#[test]
fn entropy_identity_at_matched_resolution() {
    let table = cell_probabilities(Arc::new(Uniform), PartitionSpec::unit_interval(), 12).unwrap();
    for depth in [1, 6, 12] {
        let series = discretized_entropy_series(&table, depth).unwrap();
        assert!((series - cell_sum_entropy(table.level(depth), depth)).abs() < 1e-9);
        assert!(series.abs() < 1e-12);
    }
}
