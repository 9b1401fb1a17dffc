//! Sequence model over pairwise transfer series: scores a pair's link
//! probability directly and supplies edge weights for the weighted
//! subgraph classifiers.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::features::{batch_edges, FeatureConfig, SequenceBatch};
use crate::graph::GraphView;
use crate::nn::{Activation, Dense, GruCell, ParamSet, TapeSession, VarId};
use crate::splits::SampleSet;
use crate::subgraph::EnclosingSubgraph;

#[derive(Debug, Clone)]
pub struct LinkRnn {
    pub cell: GruCell,
    pub head: Dense,
    pub feat_dim: usize,
}

impl LinkRnn {
    pub fn new(ps: &mut ParamSet, feat_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let cell = GruCell::new(ps, "link_rnn.gru", feat_dim, hidden, rng);
        let head = Dense::new(ps, "link_rnn.head", hidden, 1, Activation::Identity, rng);
        Self { cell, head, feat_dim }
    }

    pub fn logit(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        batch: &SequenceBatch,
        i: usize,
    ) -> Result<VarId> {
        if batch.feat_dim != self.feat_dim {
            return Err(Error::ShapeMismatch(format!(
                "link scorer expects {} features per step, batch has {}",
                self.feat_dim, batch.feat_dim
            )));
        }
        let seq = s.input(1, batch.steps * batch.feat_dim, batch.row(i).to_vec());
        let h = self.cell.run_sequence(s, ps, seq, batch.steps)?;
        self.head.forward(s, ps, h)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn batch_scores(rnn: &LinkRnn, ps: &ParamSet, batch: &SequenceBatch) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(batch.batch);
    for i in 0..batch.batch {
        let mut s = TapeSession::new(ps);
        let logit = rnn.logit(&mut s, ps, batch, i)?;
        out.push(sigmoid(s.tape.value(logit)[0]));
    }
    Ok(out)
}

/// Sequence batch for a sample set's pairs. When the protocol hides
/// positives' own edges, their series are blanked so the scored answer
/// never rides in through its own feature row.
fn sample_batch(view: &GraphView<'_>, set: &SampleSet, fc: &FeatureConfig) -> Result<SequenceBatch> {
    let pairs: Vec<(u32, u32)> = set.samples.iter().map(|&(u, v, _)| (u, v)).collect();
    let mut batch = batch_edges(view, &pairs, fc)?;
    if set.hide_positive_edges() {
        let stride = batch.steps * batch.feat_dim;
        for (i, &(_, _, label)) in set.samples.iter().enumerate() {
            if label == 1 {
                batch.data[i * stride..(i + 1) * stride].fill(0.0);
            }
        }
    }
    Ok(batch)
}

/// Train the pairwise sequence scorer on a sample set's labels.
pub fn train_link_rnn(
    view: &GraphView<'_>,
    train: &SampleSet,
    val: &SampleSet,
    mc: &ModelConfig,
    tc: &TrainConfig,
    fc: &FeatureConfig,
) -> Result<(ParamSet, LinkRnn, TrainLog)> {
    if train.samples.is_empty() || val.samples.is_empty() {
        return Err(Error::InvalidArgument(
            "link scorer training needs non-empty train and validation sets".into(),
        ));
    }
    let feat_dim = 3 + view.base().currencies().len();
    let mut ps = ParamSet::new();
    let mut init_rng = crate::rng::stream(mc.seed, crate::rng::domain::PARAM_INIT, 1, 0);
    let rnn = LinkRnn::new(&mut ps, feat_dim, mc.rnn_hidden, &mut init_rng);

    let train_batch = sample_batch(view, train, fc)?;
    let val_batch = sample_batch(view, val, fc)?;
    let val_labels: Vec<u8> = val.samples.iter().map(|&(_, _, y)| y).collect();

    let log = super::fit(
        &mut ps,
        mc.seed,
        tc,
        train.samples.len(),
        |ps, i| {
            let mut s = TapeSession::new(ps);
            let logit = rnn.logit(&mut s, ps, &train_batch, i)?;
            let loss = s.tape.bce_with_logits(logit, train.samples[i].2 as f64);
            Ok((s.tape.value(loss)[0], s.grads(loss, ps)))
        },
        |ps| batch_scores(&rnn, ps, &val_batch),
        &val_labels,
    )?;
    Ok((ps, rnn, log))
}

/// Probability for one pair's transfer series in the view's window.
pub fn score_edge(
    rnn: &LinkRnn,
    ps: &ParamSet,
    view: &GraphView<'_>,
    u: u32,
    v: u32,
    fc: &FeatureConfig,
) -> Result<f64> {
    let batch = batch_edges(view, &[(u, v)], fc)?;
    Ok(batch_scores(rnn, ps, &batch)?[0])
}

/// Score the pairs of a whole sample set (the RNN-only link baseline),
/// honoring the protocol's positive-edge hiding rule.
pub fn score_sample_set(
    rnn: &LinkRnn,
    ps: &ParamSet,
    view: &GraphView<'_>,
    set: &SampleSet,
    fc: &FeatureConfig,
) -> Result<Vec<f64>> {
    let batch = sample_batch(view, set, fc)?;
    batch_scores(rnn, ps, &batch)
}

/// Memoized per-edge link probabilities, keyed by the base graph's edge ids
/// so lookups never depend on iteration order.
pub struct EdgeScoreCache<'m> {
    rnn: &'m LinkRnn,
    ps: &'m ParamSet,
    fc: FeatureConfig,
    scores: Vec<Option<f64>>,
}

impl<'m> EdgeScoreCache<'m> {
    pub fn new(rnn: &'m LinkRnn, ps: &'m ParamSet, view: &GraphView<'_>, fc: FeatureConfig) -> Self {
        Self { rnn, ps, fc, scores: vec![None; view.base().edge_count()] }
    }

    /// Probability for the observed edge (u, v); errors when no such edge
    /// is active in the view (the cache only covers real edges).
    pub fn score(&mut self, view: &GraphView<'_>, u: u32, v: u32) -> Result<f64> {
        let edge = view.edge_between(u, v).ok_or_else(|| {
            Error::InvalidArgument(format!("no active edge between {u} and {v} to score"))
        })?;
        if let Some(score) = self.scores[edge as usize] {
            return Ok(score);
        }
        let score = score_edge(self.rnn, self.ps, view, u, v, &self.fc)?;
        self.scores[edge as usize] = Some(score);
        Ok(score)
    }

    /// Number of edges scored so far.
    pub fn filled(&self) -> usize {
        self.scores.iter().filter(|s| s.is_some()).count()
    }
}

/// Attach estimated link probabilities to every edge present in the
/// subgraph copy. Edges the extraction hid (a scored pair's own edge) are
/// absent from the copy, so they never receive a weight.
pub fn weight_subgraph(
    sub: &mut EnclosingSubgraph,
    cache: &mut EdgeScoreCache<'_>,
    view: &GraphView<'_>,
) -> Result<()> {
    let mut scored: HashMap<(u32, u32), f64> = HashMap::new();
    for (i, list) in sub.adj.iter().enumerate() {
        let gi = sub.nodes[i];
        for &j in list {
            let gj = sub.nodes[j as usize];
            let key = (gi.min(gj), gi.max(gj));
            if !scored.contains_key(&key) {
                let s = cache.score(view, key.0, key.1)?;
                scored.insert(key, s);
            }
        }
    }
    sub.set_weights(|a, b| scored[&(a.min(b), a.max(b))]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{TemporalGraph, TransactionEvent, Window};
    use crate::splits::{Protocol, Segment};
    use crate::subgraph::extract_enclosing;
    use std::collections::BTreeMap;

    fn ev(t: i64, amount: i64) -> TransactionEvent {
        TransactionEvent { timestamp: t, amount, currency: 0 }
    }

    /// Linked pairs transact every step; everything else is silent.
    fn toy_graph() -> TemporalGraph {
        let mut pairs = BTreeMap::new();
        for (u, v) in [(0u32, 1u32), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 2)] {
            let events: Vec<_> = (0..12).map(|k| ev(k * 4, 50 + u as i64)).collect();
            pairs.insert((u.min(v), u.max(v)), events);
        }
        TemporalGraph::from_parts(6, pairs, vec![], vec!["EUR".into()], 0, 47).unwrap()
    }

    fn sample_set(samples: Vec<(u32, u32, u8)>, protocol: Protocol) -> SampleSet {
        SampleSet {
            protocol,
            segment: Segment::Train,
            window: Window::new(0, 48).unwrap(),
            samples,
        }
    }

    fn mc(seed: u64) -> ModelConfig {
        let mut m = ModelConfig::new(
            super::super::Variant::RnnLink,
            super::super::FeatureMode::Et,
            seed,
        );
        m.rnn_hidden = 8;
        m
    }

    #[test]
    fn learns_to_separate_active_pairs_from_silent_ones() {
        let g = toy_graph();
        let view = g.restrict(Window::new(0, 48).unwrap()).unwrap();
        let train = sample_set(
            vec![(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 4, 1), (0, 3, 0), (1, 4, 0), (2, 5, 0), (1, 3, 0)],
            Protocol::OutOfTime,
        );
        let val = sample_set(vec![(4, 5, 1), (5, 0, 1), (2, 4, 0), (3, 5, 0)], Protocol::OutOfTime);
        let tc = TrainConfig { epochs: 30, batch_size: 4, lr: 0.05, ..TrainConfig::default() };
        let (ps, rnn, log) =
            train_link_rnn(&view, &train, &val, &mc(9), &tc, &FeatureConfig::default()).unwrap();
        let best = log.rows.iter().map(|r| r.val_auc).fold(f64::MIN, f64::max);
        assert!(best > 0.99, "validation AUC stayed at {best}");
        let active = score_edge(&rnn, &ps, &view, 4, 5, &FeatureConfig::default()).unwrap();
        let silent = score_edge(&rnn, &ps, &view, 2, 4, &FeatureConfig::default()).unwrap();
        assert!(active > silent);
        assert!((0.0..=1.0).contains(&active) && (0.0..=1.0).contains(&silent));
    }

    #[test]
    fn edge_sampling_blanks_positive_rows() {
        let g = toy_graph();
        let view = g.restrict(Window::new(0, 48).unwrap()).unwrap();
        let set = sample_set(vec![(0, 1, 1), (0, 3, 0)], Protocol::EdgeSampling);
        let batch = sample_batch(&view, &set, &FeatureConfig::default()).unwrap();
        assert!(batch.row(0).iter().all(|&v| v == 0.0));
        // Under out-of-time the same positive keeps its series.
        let oot = sample_set(vec![(0, 1, 1), (0, 3, 0)], Protocol::OutOfTime);
        let batch = sample_batch(&view, &oot, &FeatureConfig::default()).unwrap();
        assert!(batch.row(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn weight_subgraph_scores_every_copied_edge() {
        let g = toy_graph();
        let view = g.restrict(Window::new(0, 48).unwrap()).unwrap();
        let mut ps = ParamSet::new();
        let mut r = crate::rng::stream(1, crate::rng::domain::PARAM_INIT, 1, 0);
        let rnn = LinkRnn::new(&mut ps, 4, 6, &mut r);
        let mut cache = EdgeScoreCache::new(&rnn, &ps, &view, FeatureConfig::default());

        let mut sub = extract_enclosing(&view, 0, 3, 2, 10, false, 7).unwrap();
        weight_subgraph(&mut sub, &mut cache, &view).unwrap();
        let w = sub.weights.as_ref().unwrap();
        assert!(w.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(cache.filled() > 0 && cache.filled() <= g.edge_count());

        // Symmetric slots carry the same weight.
        for (i, list) in sub.adj.iter().enumerate() {
            for (slot, &j) in list.iter().enumerate() {
                let back = sub.adj[j as usize].binary_search(&(i as u32)).unwrap();
                assert_eq!(w[i][slot], w[j as usize][back]);
            }
        }

        // Equal series get equal scores: every edge here has period-4 events,
        // differing only in amount; compare two with the same endpoints' rows.
        let s01 = cache.score(&view, 0, 1).unwrap();
        assert!(s01 > 0.0 && s01 < 1.0);

        // Hidden target edge: the copy extracted with hide_xy carries no
        // (x, y) slot, so no weight for it exists.
        let mut hidden = extract_enclosing(&view, 0, 1, 1, 10, true, 7).unwrap();
        weight_subgraph(&mut hidden, &mut cache, &view).unwrap();
        assert!(!hidden.has_edge(0, 1));

        // Zero-edge subgraph passes through unchanged.
        let empty = EnclosingSubgraph {
            nodes: vec![0, 3],
            adj: vec![vec![], vec![]],
            weights: None,
            labels: Vec::new(),
            hop: 1,
            seed: 0,
        };
        let mut e = empty.clone();
        weight_subgraph(&mut e, &mut cache, &view).unwrap();
        assert_eq!(e.weights, Some(vec![vec![], vec![]]));
    }

    #[test]
    fn cache_errors_on_missing_edge() {
        let g = toy_graph();
        let view = g.restrict(Window::new(0, 48).unwrap()).unwrap();
        let mut ps = ParamSet::new();
        let mut r = crate::rng::stream(2, crate::rng::domain::PARAM_INIT, 1, 0);
        let rnn = LinkRnn::new(&mut ps, 4, 6, &mut r);
        let mut cache = EdgeScoreCache::new(&rnn, &ps, &view, FeatureConfig::default());
        assert!(cache.score(&view, 0, 4).is_err());
    }
}
