use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, LevelMetrics, MetricsReport};

const COLUMNS: [&str; 10] = [
    "d_delta", "d_T", "r_e", "r_T", "r_delta", "o_m", "o_T", "o_delta", "acc", "n",
];

fn values(m: &LevelMetrics) -> [f64; 10] {
    [
        m.d_delta,
        m.d_t,
        m.r_e,
        m.r_t,
        m.r_delta,
        m.o_m,
        m.o_t,
        m.o_delta,
        m.acc,
        m.episodes as f64,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub levels: Vec<LevelMetrics>,
    /// Per level, each metric minus the first row's.
    pub deltas: Vec<Vec<f64>>,
}

/// Reports lined up by backtrack level, rows in the order given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub levels: Vec<usize>,
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_report(reports: &[(String, MetricsReport)]) -> Result<Comparison, EvalError> {
    let (_, first) = reports.first().ok_or(EvalError::Empty)?;
    let levels: Vec<usize> = first.levels.iter().map(|l| l.level).collect();
    for (name, r) in reports {
        let mine: Vec<usize> = r.levels.iter().map(|l| l.level).collect();
        if mine != levels || mine != r.config.levels {
            return Err(EvalError::Mismatch(format!("{name} has levels {mine:?}, expected {levels:?}")));
        }
        let (a, b) = (&r.config, &first.config);
        if (a.window, a.t_max, a.seed, a.max_episodes) != (b.window, b.t_max, b.seed, b.max_episodes) {
            return Err(EvalError::Mismatch(format!("{name} was evaluated with a different config")));
        }
    }
    let rows = reports
        .iter()
        .map(|(name, r)| ComparisonRow {
            model: name.clone(),
            deltas: r
                .levels
                .iter()
                .zip(&first.levels)
                .map(|(m, base)| values(m).iter().zip(values(base)).map(|(a, b)| a - b).collect())
                .collect(),
            levels: r.levels.clone(),
        })
        .collect();
    Ok(Comparison {
        levels,
        columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
    })
}

impl Comparison {
    /// Fixed-width table: one row per model, one column group per level.
    pub fn to_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .chain(["model".len()])
            .max()
            .unwrap_or(5);
        let cell = 8;
        let group_w = cell * COLUMNS.len();
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "");
        for l in &self.levels {
            let _ = write!(out, " |{:^group_w$}", format!("T_{l}"));
        }
        out.push('\n');
        let _ = write!(out, "{:<name_w$}", "model");
        for _ in &self.levels {
            out.push_str(" |");
            for c in COLUMNS {
                let _ = write!(out, "{c:>cell$}");
            }
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<name_w$}", row.model);
            for m in &row.levels {
                out.push_str(" |");
                for (i, v) in values(m).iter().enumerate() {
                    if i == COLUMNS.len() - 1 {
                        let _ = write!(out, "{:>cell$}", *v as usize);
                    } else {
                        let _ = write!(out, "{v:>cell$.3}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Write `report` as JSON to `path` and as a text table next to it
/// (same stem, `.txt`).
pub fn emit_report(report: &MetricsReport, path: &Path) -> Result<(), EvalError> {
    if report.levels.is_empty() {
        return Err(EvalError::Empty);
    }
    let json = serde_json::to_string_pretty(report)? + "\n";
    fs::write(path, json)?;
    let table = compare_report(&[(report.model.clone(), report.clone())])?;
    fs::write(path.with_extension("txt"), table.to_text())?;
    Ok(())
}
