//! Seeded experiments over a grid of sample sizes and seeds.

use std::sync::Arc;
use std::time::Instant;

use ptree_core::divergence::{total_variation_masses, MAX_ANALYTIC_TABLE_DEPTH, MAX_QUADRATURE_TABLE_DEPTH};
use ptree_core::entropy::{pigeonhole_lower_bound, spacing_upper_bound};
use ptree_core::tree::sample_beta;
use ptree_core::{
    cell_probabilities, entropy_estimate, expected_posterior_kl, max_impact_level, CellProbabilityTable,
    CountTree, DensityOracle, PosteriorTree, PriorSchedule, TruncationKind, TruncationPolicy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::report::{sort_rows, summarize, ReportRow, Summary};
use crate::stats::min_spacing;
use crate::zoo::ZooDensity;

/// Additive slack in the check `L_X ≤ 2 log₂ n + slack`.
pub const IMPACT_SLACK: f64 = 10.0;

/// Extra levels between the two truncations compared by the gap check.
pub const GAP_LEVELS: u32 = 5;

/// Allowance in the Pinsker check `TV² ≤ K/2 + tol`.
pub const PINSKER_TOLERANCE: f64 = 1e-6;

/// Statistic holding `n² · min spacing`.
pub const SPACING_STATISTIC: &str = "scaled_min_spacing";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator owned by one task; `salt` separates tasks sharing `(seed, n)`.
pub fn task_rng(seed: u64, n: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(splitmix64(seed) ^ n) ^ salt))
}

/// Result of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
}

struct Task {
    density: String,
    n: u64,
    seed: u64,
    salt: u64,
}

/// Runs every task in parallel and merges the rows deterministically.
fn run_tasks<F, S>(kind: ExperimentKind, tasks: Vec<Task>, work: F) -> Result<Vec<ReportRow>>
where
    F: Fn(&Task, &mut ChaCha8Rng) -> Result<Vec<(S, f64)>> + Sync,
    S: Into<String>,
{
    let per_task: Vec<Vec<ReportRow>> = tasks
        .par_iter()
        .map(|task| {
            let start = Instant::now();
            let mut rng = task_rng(task.seed, task.n, task.salt);
            let values = work(task, &mut rng)?;
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            values
                .into_iter()
                .map(|(statistic, value)| {
                    let row = ReportRow {
                        kind,
                        density: task.density.clone(),
                        n: task.n,
                        seed: Some(task.seed),
                        statistic: statistic.into(),
                        value,
                        runtime_ms,
                    };
                    row.check().map(|_| row)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ReportRow> = per_task.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

fn grid_tasks(cfg: &ExperimentConfig, density: &str, salt: u64) -> Vec<Task> {
    let seeds = cfg.seeds.seeds();
    cfg.sample_sizes
        .iter()
        .flat_map(|&n| {
            seeds.iter().map(move |&seed| Task {
                density: density.to_string(),
                n,
                seed,
                salt,
            })
        })
        .collect()
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn sample_tree(density: &ZooDensity, n: u64, rng: &mut ChaCha8Rng) -> Result<(Vec<Vec<f64>>, CountTree)> {
    let sample = density.sample(n as usize, rng);
    let spec = ptree_core::PartitionSpec::new(density.dim())?;
    let tree = CountTree::build(&sample, spec, spec.max_depth())?;
    Ok((sample, tree))
}

struct TreeSetup {
    density: ZooDensity,
    prior: PriorSchedule,
    policy: TruncationPolicy,
}

fn tree_setup(cfg: &ExperimentConfig) -> Result<TreeSetup> {
    cfg.validate()?;
    Ok(TreeSetup {
        density: ZooDensity::by_name(cfg.density_name()?)?,
        prior: cfg.prior_schedule()?,
        policy: cfg.truncation_policy()?,
    })
}

/// Rows per `(n, seed)`: `entropy`, `posterior_variance`, `impact_level`,
/// `truncation_level`, `abs_error`.
pub fn run_entropy_convergence(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let setup = tree_setup(cfg)?;
    let h0 = setup.density.entropy().ok_or_else(|| {
        HarnessError::Config(format!("density '{}' has no analytic entropy", setup.density.name()))
    })?;
    run_tasks(cfg.kind, grid_tasks(cfg, setup.density.name(), 0), |task, rng| {
        let (_, tree) = sample_tree(&setup.density, task.n, rng)?;
        let est = entropy_estimate(&tree, &setup.prior, setup.policy)?;
        Ok(vec![
            ("entropy", est.value),
            ("posterior_variance", est.posterior_variance),
            ("impact_level", f64::from(est.impact_level)),
            ("truncation_level", f64::from(est.truncation_level)),
            ("abs_error", (est.value - h0).abs()),
        ])
    })
}

fn probability_table(density: &ZooDensity, depth: u32) -> Result<CellProbabilityTable> {
    let oracle: Arc<dyn DensityOracle> = Arc::new(density.clone());
    let spec = ptree_core::PartitionSpec::new(density.dim())?;
    let limit = if density.box_probability(&vec![0.0; density.dim()], &vec![1.0; density.dim()]).is_some() {
        MAX_ANALYTIC_TABLE_DEPTH
    } else {
        MAX_QUADRATURE_TABLE_DEPTH
    };
    Ok(cell_probabilities(oracle, spec, depth.min(limit))?)
}

/// Rows per `(n, seed)`: `truncation_level`, `grid_depth`, `tv`,
/// `expected_posterior_kl`, `pinsker_holds`. TV compares the predictive
/// density with `f₀` on the grid at the truncation level, capped at
/// `tv_grid_cap`; the expected KL is taken at the truncation level itself.
pub fn run_tv_convergence(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let setup = tree_setup(cfg)?;
    let h0 = setup.density.entropy().ok_or_else(|| {
        HarnessError::Config(format!("density '{}' has no analytic entropy", setup.density.name()))
    })?;
    let table = probability_table(&setup.density, cfg.tv_grid_cap)?;
    run_tasks(cfg.kind, grid_tasks(cfg, setup.density.name(), 0), |task, rng| {
        let (_, tree) = sample_tree(&setup.density, task.n, rng)?;
        let level = ptree_core::entropy::resolve_truncation(setup.policy.kind, &tree)?;
        let grid = level.min(table.depth());
        let post = PosteriorTree::new(setup.prior, tree);
        let masses = post.predictive_cell_masses(grid)?;
        let tv = total_variation_masses(&masses, table.level(grid));
        let kl = expected_posterior_kl(&table, &post, level.min(post.counts().max_depth()), h0)?;
        Ok(vec![
            ("truncation_level", f64::from(level)),
            ("grid_depth", f64::from(grid)),
            ("tv", tv),
            ("expected_posterior_kl", kl),
            ("pinsker_holds", indicator(tv * tv <= kl / 2.0 + PINSKER_TOLERANCE)),
        ])
    })
}

/// `Σ_{l > level} 1/a_l`: summed term by term until the terms no longer
/// move the total, then closed by the schedule's tail bound.
pub fn inverse_tail_sum(prior: &PriorSchedule, level: u32) -> f64 {
    if !prior.satisfies_abs_continuity() {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    let mut l = level;
    while l < level + 100_000 {
        l += 1;
        let term = 1.0 / prior.a(l);
        total += term;
        if term <= f64::EPSILON * total || term == 0.0 {
            return total;
        }
    }
    total + prior.inverse_tail_bound(l)
}

/// Rows per `(n, seed)`: `impact_level`, `impact_capped`,
/// `pigeonhole_bound`, `spacing_bound` (absent on ties), the indicators
/// `lower_bound_holds`, `upper_bound_holds` and `impact_bound_holds`
/// (`L_X ≤ 2 log₂ n + 10`), and the truncation gap
/// `|Ĥ_{L_X} − Ĥ_{L_X+5}|` of the truncated sums with its bound
/// `Σ_{l>L_X} 1/a_l`.
pub fn run_impact_level(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let setup = tree_setup(cfg)?;
    if setup.density.dim() != 1 {
        return Err(HarnessError::Config("impact-level needs a one-dimensional density".into()));
    }
    run_tasks(cfg.kind, grid_tasks(cfg, setup.density.name(), 0), |task, rng| {
        let (sample, tree) = sample_tree(&setup.density, task.n, rng)?;
        let impact = max_impact_level(&tree)?;
        let lower = pigeonhole_lower_bound(task.n);
        let flat: Vec<f64> = sample.iter().map(|p| p[0]).collect();
        let upper = spacing_upper_bound(min_spacing(&flat));

        let at = |l: u32| entropy_estimate(&tree, &setup.prior, TruncationPolicy::new(TruncationKind::Fixed(l)));
        let gap = (at(impact.level)?.truncated_value - at(impact.level + GAP_LEVELS)?.truncated_value).abs();
        let gap_bound = inverse_tail_sum(&setup.prior, impact.level);

        let mut rows = vec![
            ("impact_level", f64::from(impact.level)),
            ("impact_capped", indicator(impact.capped)),
            ("pigeonhole_bound", f64::from(lower)),
        ];
        if let Some(u) = upper {
            rows.push(("spacing_bound", f64::from(u)));
        }
        rows.extend([
            ("lower_bound_holds", indicator(impact.level >= lower)),
            ("upper_bound_holds", indicator(upper.is_none_or(|u| impact.level <= u))),
            (
                "impact_bound_holds",
                indicator(f64::from(impact.level) <= 2.0 * (task.n as f64).log2() + IMPACT_SLACK),
            ),
            ("truncation_gap", gap),
            ("truncation_gap_bound", gap_bound),
            ("truncation_gap_holds", indicator(gap <= gap_bound + 1e-9)),
        ]);
        Ok(rows)
    })
}

/// Rows per `(n, seed)`: `scaled_min_spacing = n² · min_{i≠j} |x_i − x_j|`.
pub fn run_spacing_law(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let density = ZooDensity::by_name(cfg.density_name()?)?;
    check_spacing_density(&density)?;
    run_tasks(cfg.kind, grid_tasks(cfg, density.name(), 0), |task, rng| {
        let sample: Vec<f64> = density.sample(task.n as usize, rng).into_iter().map(|p| p[0]).collect();
        let n = task.n as f64;
        Ok(vec![(SPACING_STATISTIC, n * n * min_spacing(&sample))])
    })
}

fn check_spacing_density(density: &ZooDensity) -> Result<()> {
    if density.dim() != 1 || !density.l2_norm_sq().is_finite() {
        return Err(HarnessError::Config(format!(
            "spacing-law needs a one-dimensional square-integrable density, got '{}'",
            density.name()
        )));
    }
    Ok(())
}

/// `E(Y − 1/2)^{2j}` for `Y ~ Beta(a, a)`:
/// `(2j)! (a)_j / (2^{2j} j! (2a)_{2j})`.
pub fn symmetric_beta_moment(a: f64, j: u32) -> f64 {
    let rising = |x: f64, k: u32| (0..k).map(|i| x + f64::from(i)).product::<f64>();
    let factorial = |k: u32| (1..=k).map(f64::from).product::<f64>();
    factorial(2 * j) * rising(a, j) / (4f64.powi(j as i32) * factorial(j) * rising(2.0 * a, 2 * j))
}

/// `2 j^{j+1} e^{−j} / (2a + 1)^j`, an upper bound on
/// [`symmetric_beta_moment`] for `a ≥ 1`.
pub fn symmetric_beta_moment_bound(a: f64, j: u32) -> f64 {
    let jf = f64::from(j);
    2.0 * jf.powf(jf + 1.0) * (-jf).exp() / (2.0 * a + 1.0).powf(jf)
}

/// For each parameter `a` (reported as density `beta(a,a)`) and each
/// `(n, seed)` with `n` the number of draws: per order `j`, the Monte Carlo
/// mean of `(Y − 1/2)^{2j}`, its standard error, the closed form, and the
/// indicators `|mean − exact| < 3 SE` and `mean ≤ bound`.
pub fn run_beta_moments(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let tasks: Vec<Task> = cfg
        .beta_params
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| grid_tasks(cfg, &format!("beta({a},{a})"), i as u64 + 1))
        .collect();
    run_tasks(cfg.kind, tasks, |task, rng| {
        let a = cfg.beta_params[task.salt as usize - 1];
        let draws: Vec<f64> = (0..task.n).map(|_| sample_beta(a, a, rng) - 0.5).collect();
        let m = draws.len() as f64;
        let mut rows = Vec::new();
        for &j in &cfg.moment_orders {
            let powers: Vec<f64> = draws.iter().map(|d| d.powi(2 * j as i32)).collect();
            let mean = powers.iter().sum::<f64>() / m;
            let var = if m > 1.0 {
                powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            let se = (var / m).sqrt();
            let exact = symmetric_beta_moment(a, j);
            rows.extend([
                (format!("moment_j{j}"), mean),
                (format!("moment_se_j{j}"), se),
                (format!("closed_form_j{j}"), exact),
                (format!("within_3se_j{j}"), indicator((mean - exact).abs() < 3.0 * se)),
                (format!("bound_holds_j{j}"), indicator(mean <= symmetric_beta_moment_bound(a, j))),
            ]);
        }
        Ok(rows)
    })
}

/// Runs the experiment named by `cfg.kind` and summarises it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let rows = match cfg.kind {
        ExperimentKind::EntropyConvergence => run_entropy_convergence(cfg)?,
        ExperimentKind::TvConvergence => run_tv_convergence(cfg)?,
        ExperimentKind::ImpactLevel => run_impact_level(cfg)?,
        ExperimentKind::SpacingLaw => run_spacing_law(cfg)?,
        ExperimentKind::BetaMoments => run_beta_moments(cfg)?,
    };
    let fits = if cfg.kind == ExperimentKind::SpacingLaw {
        let norm = ZooDensity::by_name(cfg.density_name()?)?.l2_norm_sq();
        vec![(SPACING_STATISTIC, norm / 2.0), (SPACING_STATISTIC, norm)]
    } else {
        Vec::new()
    };
    let summary = summarize(cfg, &rows, &fits);
    Ok(ExperimentOutput { rows, summary })
}
