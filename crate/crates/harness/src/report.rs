//! Report rows and the files written from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::stats::{ks_exponential, ks_two_sample, median};

/// Statistics that may legitimately be infinite.
pub const INFINITE_STATISTICS: &[&str] = &["expected_posterior_kl"];

/// One measured statistic for one `(n, seed)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: ExperimentKind,
    pub density: String,
    pub n: u64,
    pub seed: Option<u64>,
    pub statistic: String,
    pub value: f64,
    pub runtime_ms: f64,
}

impl ReportRow {
    pub fn check(&self) -> Result<()> {
        let allowed = self.value.is_finite()
            || (self.value == f64::INFINITY && INFINITE_STATISTICS.contains(&self.statistic.as_str()));
        if allowed {
            Ok(())
        } else {
            Err(HarnessError::NonFinite(format!(
                "{} = {} for n = {}, seed {:?}",
                self.statistic, self.value, self.n, self.seed
            )))
        }
    }

    fn sort_key(&self) -> (ExperimentKind, &str, u64, Option<u64>) {
        (self.kind, &self.density, self.n, self.seed)
    }
}

/// Stable sort by `(kind, density, n, seed)`; rows of one pair keep their
/// emission order.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Serialize)]
struct CsvRow<'a> {
    kind: &'a str,
    density: &'a str,
    n: u64,
    seed: Option<u64>,
    statistic: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    kind: &'a str,
    density: &'a str,
    n: u64,
    seed: Option<u64>,
    runtime_ms: f64,
}

/// The report CSV. Runtimes go to [`timing_csv`] so that this file depends
/// only on the configuration.
pub fn report_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            kind: r.kind.as_str(),
            density: &r.density,
            n: r.n,
            seed: r.seed,
            statistic: &r.statistic,
            value: r.value,
        })?;
    }
    w.into_inner().map_err(|e| HarnessError::io("report.csv", e.into_error()))
}

/// One runtime per `(density, n, seed)` pair.
pub fn timing_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut last = None;
    for r in rows {
        let key = (r.density.as_str(), r.n, r.seed);
        if last == Some(key) {
            continue;
        }
        last = Some(key);
        w.serialize(TimingRow {
            kind: r.kind.as_str(),
            density: &r.density,
            n: r.n,
            seed: r.seed,
            runtime_ms: r.runtime_ms,
        })?;
    }
    w.into_inner().map_err(|e| HarnessError::io("timing.csv", e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSummary {
    pub density: String,
    pub n: u64,
    pub statistic: String,
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// KS distance of one batch of a statistic to an exponential law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub density: String,
    pub n: u64,
    pub statistic: String,
    pub rate: f64,
    pub ks: f64,
}

/// KS distance between the batches of two sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchComparison {
    pub density: String,
    pub statistic: String,
    pub n_a: u64,
    pub n_b: u64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub statistics: Vec<StatisticSummary>,
    #[serde(default)]
    pub exponential_fits: Vec<ExponentialFit>,
    #[serde(default)]
    pub batch_comparisons: Vec<BatchComparison>,
    pub total_runtime_ms: f64,
}

impl Summary {
    pub fn statistic(&self, density: &str, n: u64, statistic: &str) -> Option<&StatisticSummary> {
        self.statistics
            .iter()
            .find(|s| s.density == density && s.n == n && s.statistic == statistic)
    }

    /// Medians of a statistic in increasing `n`.
    pub fn medians(&self, density: &str, statistic: &str) -> Vec<(u64, f64)> {
        self.statistics
            .iter()
            .filter(|s| s.density == density && s.statistic == statistic)
            .map(|s| (s.n, s.median))
            .collect()
    }
}

/// Groups values by `(density, statistic, n)`.
fn grouped(rows: &[ReportRow]) -> BTreeMap<(&str, &str, u64), Vec<f64>> {
    let mut groups: BTreeMap<(&str, &str, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.density.as_str(), r.statistic.as_str(), r.n))
            .or_default()
            .push(r.value);
    }
    groups
}

/// Per-`(n, statistic)` summaries, plus for the spacing law the KS fits
/// named in `fits` as `(statistic, rate)` pairs.
pub fn summarize(cfg: &ExperimentConfig, rows: &[ReportRow], fits: &[(&str, f64)]) -> Summary {
    let groups = grouped(rows);
    let statistics = groups
        .iter()
        .map(|(&(density, statistic, n), v)| StatisticSummary {
            density: density.into(),
            n,
            statistic: statistic.into(),
            count: v.len(),
            median: median(v).unwrap_or(f64::NAN),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();

    let mut exponential_fits = Vec::new();
    let mut batch_comparisons = Vec::new();
    let batches = |stat: &str| -> Vec<(&str, u64, &Vec<f64>)> {
        groups
            .iter()
            .filter(|(&(_, s, _), _)| s == stat)
            .map(|(&(d, _, n), v)| (d, n, v))
            .collect()
    };
    for &(stat, rate) in fits {
        for (density, n, v) in batches(stat) {
            exponential_fits.push(ExponentialFit {
                density: density.into(),
                n,
                statistic: stat.into(),
                rate,
                ks: ks_exponential(v, rate),
            });
        }
    }
    let mut compared: Vec<&str> = fits.iter().map(|&(s, _)| s).collect();
    compared.dedup();
    for stat in compared {
        for w in batches(stat).windows(2) {
            let ((da, na, va), (db, nb, vb)) = (w[0], w[1]);
            if da == db {
                batch_comparisons.push(BatchComparison {
                    density: da.into(),
                    statistic: stat.into(),
                    n_a: na,
                    n_b: nb,
                    ks: ks_two_sample(va, vb),
                });
            }
        }
    }

    let mut total_runtime_ms = 0.0;
    let mut last = None;
    for r in rows {
        let key = (r.density.as_str(), r.n, r.seed);
        if last != Some(key) {
            total_runtime_ms += r.runtime_ms;
            last = Some(key);
        }
    }

    Summary {
        kind: cfg.kind,
        config: cfg.clone(),
        statistics,
        exponential_fits,
        batch_comparisons,
        total_runtime_ms,
    }
}

/// Median of a statistic against `n` on a log axis.
pub fn svg_chart(title: &str, points: &[(u64, f64)]) -> String {
    let (w, h, pad) = (480.0, 320.0, 48.0);
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).log10()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, v)| v).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = span(&xs);
    let (y0, y1) = span(&ys);
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    for &(n, _) in points {
        let x = px((n as f64).log10());
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{n}</text>"#, h - pad + 16.0);
    }
    for y in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.4}</text>"#, pad - 4.0, py(y) + 4.0);
    }
    let path: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
        .collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, path.join(" "));
    for (&x, &y) in xs.iter().zip(&ys) {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#, px(x), py(y));
    }
    s.push_str("</svg>\n");
    s
}

/// Paths of the files written by [`write_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub timing: PathBuf,
    pub summary: PathBuf,
    pub charts: Vec<PathBuf>,
}

/// Writes `report.csv`, `timing.csv`, `summary.json` and one chart per
/// statistic and density with more than one sample size.
pub fn write_report(dir: &Path, rows: &[ReportRow], summary: &Summary) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    };
    let report = write("report.csv", &report_csv(rows)?)?;
    let timing = write("timing.csv", &timing_csv(rows)?)?;
    let mut json = serde_json::to_vec_pretty(summary)?;
    json.push(b'\n');
    let summary_path = write("summary.json", &json)?;

    let mut series: BTreeMap<(&str, &str), Vec<(u64, f64)>> = BTreeMap::new();
    for s in &summary.statistics {
        if s.median.is_finite() {
            series.entry((&s.density, &s.statistic)).or_default().push((s.n, s.median));
        }
    }
    let mut charts = Vec::new();
    for ((density, statistic), points) in series {
        if points.len() < 2 {
            continue;
        }
        let title = format!("{} {density}: median {statistic}", summary.kind);
        let file = format!("{}_{statistic}.svg", density.replace(|c: char| !c.is_ascii_alphanumeric(), "-"));
        charts.push(write(&file, svg_chart(&title, &points).as_bytes())?);
    }
    Ok(ReportFiles {
        report,
        timing,
        summary: summary_path,
        charts,
    })
}
