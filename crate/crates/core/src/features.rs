//! Fixed-width binning of event series into per-period feature sequences.
//!
//! Each window is cut into equal bins (final partial bin included) and every
//! bin becomes a feature vector: [count, log1p(total), log1p(mean),
//! per-currency counts]. These sequences are the recurrent models' input.

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::graph::{GraphView, TransactionEvent, Window};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Number of bins a full observation window is cut into.
    pub period_steps: usize,
    /// Compress amount features with log1p (raw sums otherwise).
    pub log_amounts: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { period_steps: 12, log_amounts: true }
    }
}

impl FeatureConfig {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let period_steps = cfg.get_usize("feature.period_steps", d.period_steps)?;
        let log_amounts = cfg.get_bool("feature.log_amounts", d.log_amounts)?;
        if period_steps == 0 {
            return Err(Error::InvalidConfig("feature.period_steps must be positive".into()));
        }
        Ok(Self { period_steps, log_amounts })
    }

    /// Bin width that cuts `window` into (at most) `period_steps` bins.
    pub fn period_for(&self, window: Window) -> i64 {
        let len = window.len().max(1);
        let steps = self.period_steps as i64;
        (len + steps - 1) / steps
    }
}

/// Dense (batch, steps, feat_dim) sequence block, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub data: Vec<f64>,
    pub batch: usize,
    pub steps: usize,
    pub feat_dim: usize,
    /// Valid step count per row. Fixed-window batching fills every step, so
    /// these all equal `steps`; ragged inputs would shorten them.
    pub lengths: Vec<usize>,
    /// Bin width in seconds.
    pub period: i64,
}

impl SequenceBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        let stride = self.steps * self.feat_dim;
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn step(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.steps + t) * self.feat_dim;
        &self.data[start..start + self.feat_dim]
    }
}

pub fn steps_for(window: Window, period: i64) -> usize {
    ((window.len() + period - 1) / period) as usize
}

/// Bin one event series over `window`. feat_dim = 3 + C.
pub fn bin_series(
    events: &[TransactionEvent],
    window: Window,
    period: i64,
    currency_count: usize,
    log_amounts: bool,
) -> Result<Vec<f64>> {
    if period <= 0 {
        return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
    }
    let steps = steps_for(window, period);
    let feat_dim = 3 + currency_count;
    let mut out = vec![0.0; steps * feat_dim];
    let mut totals = vec![0i64; steps];
    let mut counts = vec![0u64; steps];
    for ev in events {
        if !window.contains(ev.timestamp) {
            continue;
        }
        let step = ((ev.timestamp - window.start) / period) as usize;
        counts[step] += 1;
        totals[step] += ev.amount;
        let cur = ev.currency as usize;
        if cur < currency_count {
            out[step * feat_dim + 3 + cur] += 1.0;
        }
    }
    for s in 0..steps {
        if counts[s] == 0 {
            continue;
        }
        let total = totals[s] as f64;
        let mean = total / counts[s] as f64;
        out[s * feat_dim] = counts[s] as f64;
        if log_amounts {
            out[s * feat_dim + 1] = total.ln_1p();
            out[s * feat_dim + 2] = mean.ln_1p();
        } else {
            out[s * feat_dim + 1] = total;
            out[s * feat_dim + 2] = mean;
        }
    }
    Ok(out)
}

fn assemble(
    rows: Vec<Vec<f64>>,
    steps: usize,
    feat_dim: usize,
    period: i64,
) -> SequenceBatch {
    let batch = rows.len();
    let mut data = Vec::with_capacity(batch * steps * feat_dim);
    for row in rows {
        debug_assert_eq!(row.len(), steps * feat_dim);
        data.extend_from_slice(&row);
    }
    SequenceBatch { data, batch, steps, feat_dim, lengths: vec![steps; batch], period }
}

/// Sequence features for each (u, v) pair's transfer series in the view's
/// window. Pairs without an active edge produce all-zero rows.
pub fn batch_edges(
    view: &GraphView<'_>,
    pairs: &[(u32, u32)],
    fc: &FeatureConfig,
) -> Result<SequenceBatch> {
    let window = view.window();
    let period = fc.period_for(window);
    let steps = steps_for(window, period);
    let c = view.base().currencies().len();
    let n = view.node_count();
    let mut rows = Vec::with_capacity(pairs.len());
    for &(u, v) in pairs {
        if u >= n || v >= n {
            return Err(Error::NodeOutOfRange(u.max(v), n));
        }
        let events = view.edge_events(u, v);
        rows.push(bin_series(events, window, period, c, fc.log_amounts)?);
    }
    Ok(assemble(rows, steps, 3 + c, period))
}

/// Sequence features for each node's purchase series.
pub fn batch_nodes(
    view: &GraphView<'_>,
    nodes: &[u32],
    fc: &FeatureConfig,
) -> Result<SequenceBatch> {
    let window = view.window();
    let period = fc.period_for(window);
    let steps = steps_for(window, period);
    let c = view.base().currencies().len();
    let n = view.node_count();
    let mut rows = Vec::with_capacity(nodes.len());
    for &node in nodes {
        if node >= n {
            return Err(Error::NodeOutOfRange(node, n));
        }
        let events = view.node_events(node);
        rows.push(bin_series(events, window, period, c, fc.log_amounts)?);
    }
    Ok(assemble(rows, steps, 3 + c, period))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TemporalGraph;
    use std::collections::BTreeMap;

    fn ev(timestamp: i64, amount: i64, currency: u16) -> TransactionEvent {
        TransactionEvent { timestamp, amount, currency }
    }

    #[test]
    fn empty_series_is_all_zero() {
        let w = Window::new(0, 100).unwrap();
        let row = bin_series(&[], w, 30, 2, true).unwrap();
        // ceil(100/30) = 4 steps, feat_dim = 5
        assert_eq!(row.len(), 4 * 5);
        assert!(row.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_event_lands_in_its_step() {
        let w = Window::new(0, 120).unwrap();
        let row = bin_series(&[ev(65, 9, 1)], w, 30, 3, true).unwrap();
        let feat_dim = 6;
        // timestamp 65 / period 30 → step 2
        let step = &row[2 * feat_dim..3 * feat_dim];
        assert_eq!(step[0], 1.0);
        assert_eq!(step[1], 9.0f64.ln_1p());
        // one event: mean equals total
        assert_eq!(step[2], step[1]);
        assert_eq!(&step[3..], &[0.0, 1.0, 0.0]);
        let others: f64 = row
            .iter()
            .enumerate()
            .filter(|(i, _)| !(2 * feat_dim..3 * feat_dim).contains(i))
            .map(|(_, &x)| x)
            .sum();
        assert_eq!(others, 0.0);
    }

    #[test]
    fn same_step_events_aggregate() {
        let w = Window::new(0, 60).unwrap();
        let row = bin_series(&[ev(3, 2, 0), ev(7, 4, 0)], w, 30, 1, true).unwrap();
        assert_eq!(row[0], 2.0);
        assert_eq!(row[1], 6.0f64.ln_1p());
        assert_eq!(row[2], 3.0f64.ln_1p());
        assert_eq!(row[3], 2.0);
    }

    #[test]
    fn raw_amount_mode_skips_log() {
        let w = Window::new(0, 30).unwrap();
        let row = bin_series(&[ev(1, 5, 0)], w, 30, 1, false).unwrap();
        assert_eq!(row[1], 5.0);
        assert_eq!(row[2], 5.0);
    }

    #[test]
    fn out_of_window_events_ignored_and_counts_conserve() {
        let w = Window::new(10, 40).unwrap();
        let events = [ev(5, 1, 0), ev(12, 1, 0), ev(25, 1, 0), ev(40, 1, 0)];
        let row = bin_series(&events, w, 10, 1, true).unwrap();
        let feat_dim = 4;
        let total: f64 = (0..3).map(|s| row[s * feat_dim]).sum();
        assert_eq!(total, 2.0);
    }

    #[test]
    fn rejects_nonpositive_period() {
        let w = Window::new(0, 10).unwrap();
        assert!(bin_series(&[], w, 0, 1, true).is_err());
        assert!(bin_series(&[], w, -3, 1, true).is_err());
    }

    #[test]
    fn translation_consistency() {
        let w = Window::new(0, 90).unwrap();
        let events = [ev(4, 7, 0), ev(31, 2, 0), ev(88, 11, 0)];
        let base = bin_series(&events, w, 30, 1, true).unwrap();
        let offset = 1_000_000;
        let shifted: Vec<_> = events
            .iter()
            .map(|e| ev(e.timestamp + offset, e.amount, e.currency))
            .collect();
        let ws = Window::new(offset, 90 + offset).unwrap();
        let moved = bin_series(&shifted, ws, 30, 1, true).unwrap();
        assert_eq!(base, moved);
    }

    fn two_edge_graph() -> TemporalGraph {
        let mut pairs = BTreeMap::new();
        pairs.insert((0u32, 1u32), vec![ev(5, 10, 0), ev(65, 20, 1)]);
        pairs.insert((1u32, 2u32), vec![ev(200, 5, 0)]);
        TemporalGraph::from_parts(
            4,
            pairs,
            vec![vec![ev(10, 3, 0)], vec![], vec![], vec![]],
            vec!["EUR".into(), "USD".into()],
            0,
            400,
        )
        .unwrap()
    }

    #[test]
    fn batch_rows_follow_input_order_and_inactive_edges_zero() {
        let g = two_edge_graph();
        let view = g.restrict(Window::new(0, 120).unwrap()).unwrap();
        let fc = FeatureConfig { period_steps: 12, log_amounts: true };
        // (1,2) only active at t=200, outside window; (3,0) never linked
        let batch = batch_edges(&view, &[(0, 1), (1, 2), (3, 0), (0, 1)], &fc).unwrap();
        assert_eq!(batch.batch, 4);
        assert_eq!(batch.steps, 12);
        assert_eq!(batch.feat_dim, 5);
        assert!(batch.row(1).iter().all(|&x| x == 0.0));
        assert!(batch.row(2).iter().all(|&x| x == 0.0));
        assert_eq!(batch.row(0), batch.row(3));
        let counts: f64 = (0..batch.steps).map(|t| batch.step(0, t)[0]).sum();
        assert_eq!(counts, 2.0);
        assert_eq!(batch.lengths, vec![12; 4]);
    }

    #[test]
    fn node_batches_and_id_validation() {
        let g = two_edge_graph();
        let view = g.restrict(Window::new(0, 120).unwrap()).unwrap();
        let fc = FeatureConfig::default();
        let batch = batch_nodes(&view, &[0, 1], &fc).unwrap();
        let c0: f64 = (0..batch.steps).map(|t| batch.step(0, t)[0]).sum();
        let c1: f64 = (0..batch.steps).map(|t| batch.step(1, t)[0]).sum();
        assert_eq!(c0, 1.0);
        assert_eq!(c1, 0.0);
        assert!(batch_nodes(&view, &[99], &fc).is_err());
        assert!(batch_edges(&view, &[(0, 99)], &fc).is_err());
    }

    #[test]
    fn twelve_step_window_example() {
        let w = Window::new(0, 360).unwrap();
        let fc = FeatureConfig::default();
        let period = fc.period_for(w);
        assert_eq!(period, 30);
        assert_eq!(steps_for(w, period), 12);
    }
}
