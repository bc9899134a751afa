//! The `ptree` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ptree_core::{
    entropy_estimate, sample_density, CountTree, PartitionSpec, PosteriorTree, PriorSchedule, TruncationKind,
    TruncationPolicy,
};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::experiment::run_experiment;
use crate::report::write_report;

/// Deepest grid `fit` uses unless `--depth` is given.
pub const DEFAULT_FIT_DEPTH: u32 = 10;

#[derive(Debug, Parser)]
#[command(name = "ptree", version, about = "Polya tree density and entropy estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predictive density of a sample on a dyadic grid, as CSV.
    Fit {
        /// Headerless CSV, one observation per row.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "exp:c=1,beta=3")]
        prior: String,
        /// Grid depth; defaults to min(⌈3 log₂ n⌉, 10).
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Posterior entropy estimate of a sample, as JSON.
    Entropy {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "exp:c=1,beta=3")]
        prior: String,
        /// auto, max-impact, deterministic or fixed:N.
        #[arg(long, default_value = "auto")]
        policy: String,
        #[arg(long, default_value_t = ptree_core::entropy::DEFAULT_TAIL_TOLERANCE)]
        tail_tolerance: f64,
        /// Report in bits instead of nats.
        #[arg(long)]
        bits: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Random densities from the prior, or from the posterior given `--input`.
    Sample {
        #[arg(long, default_value = "exp:c=1,beta=3")]
        prior: String,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Dimension when drawing from the prior.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[arg(long, default_value_t = 1)]
        draws: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run an experiment configuration and write its report.
    Simulate {
        kind: String,
        #[arg(long)]
        config: PathBuf,
        /// Overrides both the config and the PTREE_OUTPUT_DIR environment variable.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Encode a point and print its cell.
    Partition {
        /// Comma-separated coordinates in [0,1).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        point: Vec<f64>,
        #[arg(long)]
        depth: u32,
    },
}

/// Reads a headerless CSV of points in `[0,1)^p`.
pub fn read_sample(path: &Path) -> Result<Vec<Vec<f64>>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => HarnessError::io(path, io),
            other => HarnessError::Config(format!("{display}: {other:?}")),
        })?;
    let mut sample: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let bad = |message: String| HarnessError::Input {
            path: display.clone(),
            line,
            message,
        };
        let record = record.map_err(|e| bad(e.to_string()))?;
        let point = record
            .iter()
            .map(|field| {
                let v: f64 = field.parse().map_err(|_| bad(format!("'{field}' is not a number")))?;
                if (0.0..1.0).contains(&v) {
                    Ok(v)
                } else {
                    Err(bad(format!("{v} lies outside [0,1)")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = sample.first() {
            if first.len() != point.len() {
                return Err(bad(format!("expected {} columns, found {}", first.len(), point.len())));
            }
        }
        sample.push(point);
    }
    if sample.is_empty() {
        return Err(HarnessError::Input {
            path: display,
            line: 0,
            message: "no observations".into(),
        });
    }
    Ok(sample)
}

fn parse_prior(text: &str) -> Result<PriorSchedule> {
    text.parse().map_err(|e| HarnessError::Usage(format!("{e}")))
}

fn build_tree(sample: &[Vec<f64>]) -> Result<CountTree> {
    let spec = PartitionSpec::new(sample[0].len())?;
    Ok(CountTree::build(sample, spec, spec.max_depth())?)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| HarnessError::io(p, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let mut out = open_output(path)?;
    let target = path.map_or("stdout".into(), |p| p.display().to_string());
    match out.write_all(bytes).and_then(|_| out.flush()) {
        // a closed downstream pipe (`| head`) is not a failure
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(|e| HarnessError::io(target, e)),
    }
}

/// Seed of draw `index` under the master seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    crate::experiment::task_rng(seed, index, 0x5a4d).next_u64()
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> std::result::Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w)?;
    w.into_inner().map_err(|e| HarnessError::io("csv buffer", e.into_error()))
}

fn grid_rows(
    w: &mut csv::Writer<Vec<u8>>,
    spec: PartitionSpec,
    depth: u32,
    masses: &[f64],
    prefix: Option<u64>,
) -> std::result::Result<(), csv::Error> {
    let scale = libm::ldexp(1.0, depth as i32);
    for (i, &m) in masses.iter().enumerate() {
        let cell = ptree_core::BinaryPath::from_bits(depth, i as u64);
        let mut record = Vec::with_capacity(4);
        if let Some(d) = prefix {
            record.push(d.to_string());
        }
        record.push(cell.to_string());
        record.push(spec.cell_bounds(&cell).to_interval_string());
        record.push(m.to_string());
        record.push((m * scale).to_string());
        w.write_record(&record)?;
    }
    Ok(())
}

fn fit(input: &Path, prior: &str, depth: Option<u32>, output: Option<&Path>) -> Result<()> {
    let sample = read_sample(input)?;
    let prior = parse_prior(prior)?;
    let tree = build_tree(&sample)?;
    let spec = tree.spec();
    let depth = depth.unwrap_or_else(|| ptree_core::deterministic_truncation(tree.n()).min(DEFAULT_FIT_DEPTH));
    let post = PosteriorTree::new(prior, tree);
    let masses = post.predictive_cell_masses(depth)?;
    let bytes = csv_bytes(|w| {
        w.write_record(["cell", "bounds", "mass", "density"])?;
        grid_rows(w, spec, depth, &masses, None)
    })?;
    write_bytes(output, &bytes)
}

fn entropy(
    input: &Path,
    prior: &str,
    policy: &str,
    tail_tolerance: f64,
    bits: bool,
    output: Option<&Path>,
) -> Result<()> {
    let sample = read_sample(input)?;
    let prior = parse_prior(prior)?;
    let kind: TruncationKind = policy.parse().map_err(|e| HarnessError::Usage(format!("{e}")))?;
    if !(tail_tolerance > 0.0) {
        return Err(HarnessError::Usage("--tail-tolerance must be positive".into()));
    }
    let tree = build_tree(&sample)?;
    let mut est = entropy_estimate(&tree, &prior, TruncationPolicy::new(kind).with_tolerance(tail_tolerance))?;
    if bits {
        est = est.to_bits();
    }
    let mut json = serde_json::to_vec_pretty(&serde_json::json!({
        "unit": if bits { "bits" } else { "nats" },
        "prior": prior.to_string(),
        "policy": kind.to_string(),
        "estimate": est,
    }))?;
    json.push(b'\n');
    write_bytes(output, &json)
}

#[allow(clippy::too_many_arguments)]
fn sample(
    prior: &str,
    input: Option<&Path>,
    dim: usize,
    depth: u32,
    draws: u64,
    seed: u64,
    output: Option<&Path>,
) -> Result<()> {
    let prior = parse_prior(prior)?;
    let post = match input {
        Some(path) => PosteriorTree::new(prior, build_tree(&read_sample(path)?)?),
        None => {
            let spec = PartitionSpec::new(dim)?;
            PosteriorTree::prior_only(prior, spec, spec.max_depth())?
        }
    };
    let spec = post.spec();
    let densities = (0..draws)
        .map(|d| sample_density(&post, depth, derive_seed(seed, d)))
        .collect::<ptree_core::Result<Vec<_>>>()?;
    let bytes = csv_bytes(|w| {
        w.write_record(["draw", "cell", "bounds", "mass", "density"])?;
        for (d, dens) in densities.iter().enumerate() {
            grid_rows(w, spec, depth, dens.cell_masses(), Some(d as u64))?;
        }
        Ok(())
    })?;
    write_bytes(output, &bytes)
}

fn simulate(kind: &str, config: &Path, output_dir: Option<PathBuf>) -> Result<()> {
    let kind: ExperimentKind = kind.parse()?;
    let cfg = ExperimentConfig::load(config)?;
    if cfg.kind != kind {
        return Err(HarnessError::Usage(format!(
            "{} describes a {} experiment, not {kind}",
            config.display(),
            cfg.kind
        )));
    }
    let dir = output_dir.unwrap_or_else(|| cfg.output_dir());
    let out = run_experiment(&cfg)?;
    let files = write_report(&dir, &out.rows, &out.summary)?;
    let mut stdout = std::io::stdout().lock();
    let mut lines = format!(
        "{kind}: {} rows in {:.0} ms of task time\nreport {}\ntiming {}\nsummary {}\n",
        out.rows.len(),
        out.summary.total_runtime_ms,
        files.report.display(),
        files.timing.display(),
        files.summary.display()
    );
    for fit in &out.summary.exponential_fits {
        lines.push_str(&format!("n = {}: KS to Exp({}) = {:.4}\n", fit.n, fit.rate, fit.ks));
    }
    stdout
        .write_all(lines.as_bytes())
        .map_err(|e| HarnessError::io("stdout", e))
}

fn partition(point: &[f64], depth: u32) -> Result<()> {
    if point.is_empty() {
        return Err(HarnessError::Usage("--point needs at least one coordinate".into()));
    }
    let spec = PartitionSpec::new(point.len())?;
    let path = spec.encode(point, depth)?;
    let text = format!("path {path}\nbounds {}\n", spec.cell_bounds(&path).to_interval_string());
    write_bytes(None, text.as_bytes())
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            input,
            prior,
            depth,
            output,
        } => fit(&input, &prior, depth, output.as_deref()),
        Command::Entropy {
            input,
            prior,
            policy,
            tail_tolerance,
            bits,
            output,
        } => entropy(&input, &prior, &policy, tail_tolerance, bits, output.as_deref()),
        Command::Sample {
            prior,
            input,
            dim,
            depth,
            draws,
            seed,
            output,
        } => sample(&prior, input.as_deref(), dim, depth, draws, seed, output.as_deref()),
        Command::Simulate {
            kind,
            config,
            output_dir,
        } => simulate(&kind, &config, output_dir),
        Command::Partition { point, depth } => partition(&point, depth),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 for usage and input errors, 2 for numerical failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_points_and_reports_lines() {
        let dir = std::env::temp_dir().join(format!("ptree-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let good = dir.join("good.csv");
        std::fs::write(&good, "0.1, 0.2\n0.5,0.75\n").unwrap();
        assert_eq!(read_sample(&good).unwrap(), vec![vec![0.1, 0.2], vec![0.5, 0.75]]);
        let bad = dir.join("bad.csv");
        std::fs::write(&bad, "0.1\n0.2\n1.5\n").unwrap();
        let err = read_sample(&bad).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        std::fs::write(&bad, "0.1,0.2\n0.3\n").unwrap();
        assert!(read_sample(&bad).unwrap_err().to_string().contains("line 2"));
        std::fs::write(&bad, "").unwrap();
        assert!(read_sample(&bad).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..100).map(|d| derive_seed(7, d)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(derive_seed(7, 3), seeds[3]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["ptree", "bogus"]), 1);
        assert_eq!(main_with_args(["ptree", "partition", "--point", "1.5", "--depth", "3"]), 1);
        assert_eq!(main_with_args(["ptree", "partition", "--point", "0.6", "--depth", "3"]), 0);
    }
}
