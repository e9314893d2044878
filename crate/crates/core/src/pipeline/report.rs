use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunConfig, RunMetrics};
use crate::taxonomy::Label;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Mean and sample standard deviation over completed runs (0 for a single run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0 };
        }
        if values.iter().all(|&v| v == values[0]) {
            return Self { mean: values[0], std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

/// Result of one completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub num_paths: usize,
    #[serde(default)]
    pub path_fallback: bool,
    #[serde(default)]
    pub final_loss: Option<f64>,
    pub metrics: RunMetrics,
}

impl RunSummary {
    pub fn new(run: usize, seed: u64, num_paths: usize, metrics: RunMetrics) -> Self {
        Self {
            run,
            seed,
            num_paths,
            path_fallback: false,
            final_loss: None,
            metrics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub version: u32,
    pub config: RunConfig,
    pub runs_requested: usize,
    pub runs_completed: usize,
    /// Spread is measured across runs, not across classes.
    pub std_axis: String,
    /// Keyed by class name.
    pub per_class: BTreeMap<String, MetricSummary>,
    /// Unweighted mean over the three attack classes, per run, then aggregated.
    pub macro_attack: MetricSummary,
    pub runs: Vec<RunSummary>,
    #[serde(default)]
    pub failed_runs: BTreeMap<usize, String>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl DetectionReport {
    pub fn aggregate(
        config: RunConfig,
        requested: usize,
        runs: Vec<RunSummary>,
        failed_runs: BTreeMap<usize, String>,
    ) -> Self {
        let summarize = |pick: &dyn Fn(&RunSummary) -> (f64, f64, f64)| {
            let vals: Vec<(f64, f64, f64)> = runs.iter().map(pick).collect();
            let col = |f: fn(&(f64, f64, f64)) -> f64| MeanStd::of(&vals.iter().map(f).collect::<Vec<_>>());
            MetricSummary {
                precision: col(|v| v.0),
                recall: col(|v| v.1),
                f1: col(|v| v.2),
            }
        };
        let mut per_class = BTreeMap::new();
        for class in Label::ALL {
            per_class.insert(
                class.name().to_string(),
                summarize(&|r: &RunSummary| {
                    let m = r.metrics.class(class);
                    (m.precision, m.recall, m.f1)
                }),
            );
        }
        let macro_attack = summarize(&|r: &RunSummary| {
            let m = &r.metrics.macro_attack;
            (m.precision, m.recall, m.f1)
        });
        let mut flags = Vec::new();
        for r in &runs {
            if r.path_fallback {
                flags.push(format!("run {}: no meta-path passed theta, all paths used", r.run));
            }
            for (name, m) in &r.metrics.per_class {
                if m.undefined {
                    flags.push(format!("run {}: {name} has an undefined ratio reported as 0", r.run));
                }
            }
        }
        for (r, e) in &failed_runs {
            flags.push(format!("run {r} failed and is excluded: {e}"));
        }
        if runs.is_empty() {
            flags.push("no run completed; all metrics are 0".into());
        }
        Self {
            version: REPORT_FORMAT_VERSION,
            config,
            runs_requested: requested,
            runs_completed: runs.len(),
            std_axis: "runs".into(),
            per_class,
            macro_attack,
            runs,
            failed_runs,
            flags,
        }
    }

    pub fn class(&self, label: Label) -> &MetricSummary {
        &self.per_class[label.name()]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let r: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if r.version != REPORT_FORMAT_VERSION {
            return Err(format!("unsupported report version {}", r.version));
        }
        Ok(r)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}

fn cell(m: MeanStd) -> String {
    format!("{:6.2}% ± {:5.2}%", 100.0 * m.mean, 100.0 * m.std)
}

/// Text table with one section per report: per-class rows plus the attack-class
/// average, each cell `mean ± std` over runs.
pub fn render_table(sections: &[(String, &DetectionReport)]) -> String {
    let mut out = String::new();
    for (title, report) in sections {
        let _ = writeln!(
            out,
            "== {title} ({} of {} runs, ± is std over runs) ==",
            report.runs_completed, report.runs_requested
        );
        let _ = writeln!(out, "{:<10}  {:<17}  {:<17}  {:<17}", "Class", "Precision", "Recall", "F1");
        let mut row = |name: &str, s: &MetricSummary| {
            let _ = writeln!(
                out,
                "{name:<10}  {}  {}  {}",
                cell(s.precision),
                cell(s.recall),
                cell(s.f1)
            );
        };
        for class in Label::ALL {
            row(class.name(), report.class(class));
        }
        row("Average", &report.macro_attack);
        for f in &report.flags {
            let _ = writeln!(out, "note: {f}");
        }
        out.push('\n');
    }
    out
}
