//! Ranking metrics and the results table.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Area under the ROC curve via the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counted half. Computed
/// through average ranks in O(m log m).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined(
            "roc_auc needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average rank per tie group; sum ranks of positives.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the average
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * neg as f64))
}

/// Gini index of a ranking, from its AUC.
pub fn gini(auc: f64) -> f64 {
    2.0 * auc - 1.0
}

/// One experiment outcome row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: String,
    pub protocol: String,
    pub feature_mode: String,
    pub seed: u64,
    pub auc: f64,
    pub n_samples: usize,
}

fn sorted(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut rows: Vec<&RunRecord> = records.iter().collect();
    rows.sort_by(|a, b| {
        (&a.method, &a.protocol, &a.feature_mode, a.seed).cmp(&(
            &b.method,
            &b.protocol,
            &b.feature_mode,
            b.seed,
        ))
    });
    rows
}

/// results.csv: one row per (method, protocol, feature_mode, seed).
pub fn write_results_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let name = path.display().to_string();
    let mut out = Vec::new();
    writeln!(out, "method,protocol,feature_mode,seed,auc,gini,n_samples").unwrap();
    for r in sorted(records) {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{}",
            r.method,
            r.protocol,
            r.feature_mode,
            r.seed,
            r.auc,
            gini(r.auc),
            r.n_samples
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(&name, e))
}

/// Parse a `results.csv` (or a one-row shard of one) back into records.
/// The gini column is redundant with auc and is dropped on read.
pub fn read_results_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (idx == 0 && line.starts_with("method,")) {
            continue;
        }
        let bad = |msg: String| Error::MalformedRow { path: name.clone(), line: idx + 1, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 columns, got {}", fields.len())));
        }
        out.push(RunRecord {
            method: fields[0].to_string(),
            protocol: fields[1].to_string(),
            feature_mode: fields[2].to_string(),
            seed: fields[3].trim().parse().map_err(|_| bad("bad seed".into()))?,
            auc: fields[4].trim().parse().map_err(|_| bad("bad auc".into()))?,
            n_samples: fields[6].trim().parse().map_err(|_| bad("bad n_samples".into()))?,
        });
    }
    Ok(out)
}

/// Text table: method × protocol with per-seed AUCs and their mean.
pub fn render_table(records: &[RunRecord]) -> String {
    let rows = sorted(records);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:<14} {:<12} {:>8} {:>8} {:>6}\n",
        "method", "protocol", "features", "auc", "gini", "seeds"
    ));
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        let key = (&rows[i].method, &rows[i].protocol, &rows[i].feature_mode);
        let mut sum = 0.0;
        while j < rows.len()
            && (&rows[j].method, &rows[j].protocol, &rows[j].feature_mode) == key
        {
            sum += rows[j].auc;
            j += 1;
        }
        let mean = sum / (j - i) as f64;
        out.push_str(&format!(
            "{:<24} {:<14} {:<12} {:>8.4} {:>8.4} {:>6}\n",
            rows[i].method,
            rows[i].protocol,
            rows[i].feature_mode,
            mean,
            gini(mean),
            j - i
        ));
        i = j;
    }
    out
}

/// Write both the CSV and the rendered table next to each other.
pub fn write_report(records: &[RunRecord], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(&dir.display().to_string(), e))?;
    write_results_csv(records, &dir.join("results.csv"))?;
    let table_path = dir.join("results.txt");
    std::fs::write(&table_path, render_table(records))
        .map_err(|e| Error::io(&table_path.display().to_string(), e))
}
