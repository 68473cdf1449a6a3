//! Report assembly: Table-1-style rows, metric rankings, per-timestep curves
//! and best/worst traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricKind;
use crate::error::{Error, Result};
use crate::inference::{parity_of, ClipTrace, InferenceScore, Parity};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Frame-level comparison of one predictor's test clips with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualScore {
    /// Mean over test clips of each predicted frame's score.
    pub psnr_per_timestep: Vec<f64>,
    pub ssim_per_timestep: Vec<f64>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub fvd_lite: Option<f64>,
    pub episodes: Vec<EpisodePerceptual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodePerceptual {
    pub id: u64,
    pub psnr: f64,
    pub ssim: f64,
    /// Leading predicted frames during which no object has moved yet.
    pub static_span: usize,
    pub static_psnr: Option<f64>,
    pub static_ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub kind: String,
    pub fvd_lite: Option<f64>,
    pub aggregate_r2: Option<f64>,
    pub aggregate_mae: Option<f64>,
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub best_epoch: Option<usize>,
    pub inference: Option<InferenceScore>,
    pub psnr_per_timestep: Option<Vec<f64>>,
    pub ssim_per_timestep: Option<Vec<f64>>,
    /// Stored artifacts backing this row, relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

impl ReportRow {
    pub fn value(&self, metric: MetricKind) -> Option<f64> {
        match metric {
            MetricKind::FvdLite => self.fvd_lite,
            MetricKind::R2 => self.aggregate_r2,
            MetricKind::Mae => self.aggregate_mae,
            MetricKind::Psnr => self.mean_psnr,
            MetricKind::Ssim => self.mean_ssim,
        }
    }
}

/// Spread of the test targets, the source of the odd/even artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub std_dx_even: f64,
    pub std_dy_even: f64,
    /// Standard deviation of odd-step targets around the previous step's value.
    pub std_dx_odd_deviation: f64,
    pub std_dy_odd_deviation: f64,
}

/// A regressor that always outputs the training-target mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPredictor {
    pub mean: [f64; 2],
    pub aggregate_mae: f64,
    pub min_r2: f64,
    pub max_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRanking {
    pub metric: MetricKind,
    /// Best first.
    pub order: Vec<String>,
    /// Groups of predictors with equal scores, ordered by name within the ranking.
    pub ties: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanEntry {
    pub a: MetricKind,
    pub b: MetricKind,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rankings {
    pub metrics: Vec<MetricRanking>,
    pub spearman: Vec<SpearmanEntry>,
}

impl Rankings {
    pub fn rho(&self, a: MetricKind, b: MetricKind) -> Option<f64> {
        self.spearman
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.rho)
    }

    pub fn order(&self, metric: MetricKind) -> Option<&[String]> {
        self.metrics
            .iter()
            .find(|r| r.metric == metric)
            .map(|r| r.order.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub code_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub alignment: String,
    pub metrics: Vec<MetricKind>,
    pub rows: Vec<ReportRow>,
    /// Inference network trained and scored on ground-truth frames.
    pub baseline: ReportRow,
    pub rankings: Option<Rankings>,
    pub target_stats: TargetStats,
    pub mean_predictor: Option<MeanPredictor>,
    /// Whether even-step MAE ≥ odd-step MAE for the baseline (logged, not enforced).
    pub baseline_even_mae_ge_odd: Option<bool>,
    pub dataset_hashes: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    fn table_columns(&self) -> Vec<MetricKind> {
        MetricKind::ALL
            .into_iter()
            .filter(|m| self.metrics.contains(m))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let cols = self.table_columns();
        let mut s = String::from("name,kind");
        for m in &cols {
            write!(s, ",{m}").unwrap();
        }
        s.push_str(",r2_even,r2_odd,mae_even,mae_odd\n");
        for row in self.rows.iter().chain(std::iter::once(&self.baseline)) {
            write!(s, "{},{}", row.name, row.kind).unwrap();
            for m in &cols {
                write!(s, ",{}", fmt_opt(row.value(*m))).unwrap();
            }
            let inf = row.inference.as_ref();
            for v in [
                inf.map(|i| i.even.r2),
                inf.map(|i| i.odd.r2),
                inf.map(|i| i.even.mae),
                inf.map(|i| i.odd.mae),
            ] {
                write!(s, ",{}", fmt_opt(v)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Plain-text table; `*` marks the best predictor in each column.
    pub fn to_text(&self) -> String {
        let cols = self.table_columns();
        let best: BTreeMap<MetricKind, String> = cols
            .iter()
            .filter_map(|m| {
                let order = self.rankings.as_ref().and_then(|r| r.order(*m))?;
                order.first().map(|n| (*m, n.clone()))
            })
            .collect();
        let width = self
            .rows
            .iter()
            .chain(std::iter::once(&self.baseline))
            .map(|r| r.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = String::new();
        write!(s, "{:<width$}", "model").unwrap();
        for m in &cols {
            write!(s, " {:>11}", header(*m)).unwrap();
        }
        s.push('\n');
        let line = |s: &mut String, row: &ReportRow, mark: bool| {
            write!(s, "{:<width$}", row.name).unwrap();
            for m in &cols {
                let star = mark && best.get(m) == Some(&row.name);
                let cell = match row.value(*m) {
                    Some(v) => format!("{}{:.4}", if star { "*" } else { "" }, v),
                    None => "-".into(),
                };
                write!(s, " {cell:>11}").unwrap();
            }
            s.push('\n');
        };
        for row in &self.rows {
            line(&mut s, row, true);
        }
        s.push_str(&"-".repeat(width + 12 * cols.len()));
        s.push('\n');
        line(&mut s, &self.baseline, false);
        if let Some(r) = &self.rankings {
            s.push_str("\nSpearman rank correlation between metrics:\n");
            for e in &r.spearman {
                writeln!(
                    s,
                    "  {:>8} vs {:<8} {:+.4}",
                    e.a.as_str(),
                    e.b.as_str(),
                    e.rho
                )
                .unwrap();
            }
            for m in &r.metrics {
                for group in &m.ties {
                    writeln!(
                        s,
                        "  tie in {}: {} (ordered by name)",
                        m.metric,
                        group.join(", ")
                    )
                    .unwrap();
                }
            }
        }
        s
    }
}

fn header(m: MetricKind) -> &'static str {
    match m {
        MetricKind::FvdLite => "FVD-lite",
        MetricKind::R2 => "R2",
        MetricKind::Mae => "MAE",
        MetricKind::Psnr => "PSNR",
        MetricKind::Ssim => "SSIM",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Spearman ρ between two rank vectors without ties (`1 − 6Σd² / n(n²−1)`).
pub fn spearman(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::length("spearman rank vectors", a.len(), b.len()));
    }
    let n = a.len() as f64;
    if a.len() < 2 {
        return Err(Error::UndefinedScore(
            "Spearman needs at least two items".into(),
        ));
    }
    let d2: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// Ranks the predictor rows under every metric they all report, best first.
/// Ties are broken by name and listed; NaN scores rank last.
pub fn rank_models(rows: &[ReportRow], metrics: &[MetricKind]) -> Result<Rankings> {
    if rows.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "ranking needs at least 3 predictors, got {}",
            rows.len()
        )));
    }
    let mut rankings = Vec::new();
    for &m in MetricKind::ALL.iter().filter(|m| metrics.contains(m)) {
        let Some(values) = rows
            .iter()
            .map(|r| r.value(m))
            .collect::<Option<Vec<f64>>>()
        else {
            continue;
        };
        let key = |v: f64| {
            if v.is_nan() {
                f64::NEG_INFINITY
            } else if m.higher_is_better() {
                v
            } else {
                -v
            }
        };
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.sort_by(|&i, &j| {
            key(values[j])
                .total_cmp(&key(values[i]))
                .then_with(|| rows[i].name.cmp(&rows[j].name))
        });
        let mut ties: Vec<Vec<String>> = Vec::new();
        for w in idx.windows(2) {
            if key(values[w[0]]) == key(values[w[1]]) {
                match ties.last_mut() {
                    Some(g) if g.last() == Some(&rows[w[0]].name) => {
                        g.push(rows[w[1]].name.clone())
                    }
                    _ => ties.push(vec![rows[w[0]].name.clone(), rows[w[1]].name.clone()]),
                }
            }
        }
        rankings.push(MetricRanking {
            metric: m,
            order: idx.iter().map(|&i| rows[i].name.clone()).collect(),
            ties,
        });
    }
    let rank_vec = |r: &MetricRanking| -> Vec<usize> {
        rows.iter()
            .map(|row| r.order.iter().position(|n| *n == row.name).expect("ranked") + 1)
            .collect()
    };
    let mut spearman_entries = Vec::new();
    for (i, a) in rankings.iter().enumerate() {
        for b in &rankings[i + 1..] {
            spearman_entries.push(SpearmanEntry {
                a: a.metric,
                b: b.metric,
                rho: spearman(&rank_vec(a), &rank_vec(b))?,
            });
        }
    }
    Ok(Rankings {
        metrics: rankings,
        spearman: spearman_entries,
    })
}

/// One metric's per-timestep values for every predictor, with parity columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub metric: &'static str,
    pub header: Vec<String>,
    /// One row per timestep; `None` cells are written empty.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CurveTable {
    pub fn file_name(&self) -> String {
        format!("curves_{}.csv", self.metric)
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_opt(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Per-timestep curves (timesteps numbered from 1). Each predictor gets a
/// full column plus `_even`/`_odd` columns that split it by the parity of
/// the action behind that step.
pub fn emit_curves(report: &MetricReport) -> Vec<CurveTable> {
    type Pick = fn(&ReportRow) -> Option<Vec<Option<f64>>>;
    let series: [(&'static str, Pick, usize); 4] = [
        (
            "r2",
            |r| r.inference.as_ref().map(|i| i.r2_per_timestep.clone()),
            0,
        ),
        (
            "mae",
            |r| {
                r.inference
                    .as_ref()
                    .map(|i| i.mae_per_timestep.iter().map(|v| Some(*v)).collect())
            },
            0,
        ),
        // Predicted frame j came from action j + 1.
        (
            "psnr",
            |r| {
                r.psnr_per_timestep
                    .as_ref()
                    .map(|v| v.iter().map(|x| Some(*x)).collect())
            },
            1,
        ),
        (
            "ssim",
            |r| {
                r.ssim_per_timestep
                    .as_ref()
                    .map(|v| v.iter().map(|x| Some(*x)).collect())
            },
            1,
        ),
    ];
    let all: Vec<&ReportRow> = report
        .rows
        .iter()
        .chain(std::iter::once(&report.baseline))
        .collect();
    let mut tables = Vec::new();
    for (metric, pick, offset) in series {
        let columns: Vec<(&str, Vec<Option<f64>>)> = all
            .iter()
            .filter_map(|r| pick(r).map(|v| (r.name.as_str(), v)))
            .collect();
        let Some(len) = columns.first().map(|(_, v)| v.len()) else {
            continue;
        };
        let mut header = vec!["timestep".to_string()];
        for (name, _) in &columns {
            header.extend([
                name.to_string(),
                format!("{name}_even"),
                format!("{name}_odd"),
            ]);
        }
        let rows = (0..len)
            .map(|i| {
                let even = parity_of(i + offset) == Parity::Even;
                let mut row = vec![Some((i + 1) as f64)];
                for (_, v) in &columns {
                    let x = v.get(i).copied().flatten();
                    row.extend([x, if even { x } else { None }, if even { None } else { x }]);
                }
                row
            })
            .collect();
        tables.push(CurveTable {
            metric,
            header,
            rows,
        });
    }
    tables
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub predictor: String,
    pub which: String,
    pub rank: usize,
    pub trace: ClipTrace,
}

/// The `k` test clips with the highest and the lowest per-clip R² for each
/// predictor. Clips with undefined R² are skipped; ties go to the lower id.
pub fn best_worst_examples(traces: &[(String, Vec<ClipTrace>)], k: usize) -> Vec<Example> {
    let mut out = Vec::new();
    for (name, clips) in traces {
        let mut scored: Vec<&ClipTrace> = clips.iter().filter(|c| c.r2.is_some()).collect();
        scored.sort_by(|a, b| {
            b.r2.unwrap()
                .total_cmp(&a.r2.unwrap())
                .then(a.id.cmp(&b.id))
        });
        for (which, list) in [
            ("best", scored.iter().take(k).collect::<Vec<_>>()),
            ("worst", scored.iter().rev().take(k).collect::<Vec<_>>()),
        ] {
            for (rank, c) in list.into_iter().enumerate() {
                out.push(Example {
                    predictor: name.clone(),
                    which: which.into(),
                    rank: rank + 1,
                    trace: (*c).clone(),
                });
            }
        }
    }
    out
}

pub fn examples_csv(examples: &[Example]) -> String {
    let mut s = String::from("predictor,which,rank,episode,episode_r2,timestep,dx_inferred,dx_true,dy_inferred,dy_true\n");
    for e in examples {
        for (i, (p, t)) in e.trace.inferred.iter().zip(&e.trace.truth).enumerate() {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                e.predictor,
                e.which,
                e.rank,
                e.trace.id,
                fmt_opt(e.trace.r2),
                i + 1,
                p[0],
                t[0],
                p[1],
                t[1]
            )
            .unwrap();
        }
    }
    s
}
