//! Node sequence encoder pretrained on credit labels; its penultimate layer
//! provides the per-node embedding rows used as subgraph features.

use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::features::{batch_nodes, FeatureConfig, SequenceBatch};
use crate::graph::GraphView;
use crate::nn::{Activation, Dense, GruCell, ParamSet, TapeSession, VarId};
use crate::rng;

#[derive(Debug, Clone)]
pub struct NodeEncoder {
    pub cell: GruCell,
    pub embed: Dense,
    pub head: Dense,
    pub feat_dim: usize,
    pub embed_dim: usize,
}

impl NodeEncoder {
    pub fn new(
        ps: &mut ParamSet,
        feat_dim: usize,
        hidden: usize,
        embed_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let cell = GruCell::new(ps, "encoder.gru", feat_dim, hidden, rng);
        let embed = Dense::new(ps, "encoder.embed", hidden, embed_dim, Activation::Relu, rng);
        let head = Dense::new(ps, "encoder.head", embed_dim, 1, Activation::Identity, rng);
        Self { cell, embed, head, feat_dim, embed_dim }
    }

    /// Run row `i` of the batch up to the embedding layer.
    pub fn embed_row(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        batch: &SequenceBatch,
        i: usize,
    ) -> Result<VarId> {
        if batch.feat_dim != self.feat_dim {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects {} features per step, batch has {}",
                self.feat_dim, batch.feat_dim
            )));
        }
        let seq = s.input(1, batch.steps * batch.feat_dim, batch.row(i).to_vec());
        let h = self.cell.run_sequence(s, ps, seq, batch.steps)?;
        self.embed.forward(s, ps, h)
    }

    /// Full pass to the scalar credit logit.
    pub fn logit(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        batch: &SequenceBatch,
        i: usize,
    ) -> Result<VarId> {
        let e = self.embed_row(s, ps, batch, i)?;
        self.head.forward(s, ps, e)
    }
}

fn batch_logit_values(
    enc: &NodeEncoder,
    ps: &ParamSet,
    batch: &SequenceBatch,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(batch.batch);
    for i in 0..batch.batch {
        let mut s = TapeSession::new(ps);
        let logit = enc.logit(&mut s, ps, batch, i)?;
        out.push(s.tape.value(logit)[0]);
    }
    Ok(out)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Fit the encoder on credit labels with per-node binary cross-entropy.
///
/// Returns trained parameters, the layer handles, and the per-epoch trace.
/// Early stopping and the checkpoint choice follow validation AUC.
pub fn pretrain_node_encoder(
    view: &GraphView<'_>,
    train: &[(u32, u8)],
    val: &[(u32, u8)],
    mc: &ModelConfig,
    tc: &TrainConfig,
    fc: &FeatureConfig,
) -> Result<(ParamSet, NodeEncoder, TrainLog)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "encoder pretraining needs non-empty train and validation label sets".into(),
        ));
    }
    let feat_dim = 3 + view.base().currencies().len();
    let mut ps = ParamSet::new();
    let mut init_rng = rng::stream(mc.seed, rng::domain::PARAM_INIT, 0, 0);
    let enc = NodeEncoder::new(&mut ps, feat_dim, mc.rnn_hidden, mc.embed_dim, &mut init_rng);

    let train_nodes: Vec<u32> = train.iter().map(|&(n, _)| n).collect();
    let val_nodes: Vec<u32> = val.iter().map(|&(n, _)| n).collect();
    let train_batch = batch_nodes(view, &train_nodes, fc)?;
    let val_batch = batch_nodes(view, &val_nodes, fc)?;
    let val_labels: Vec<u8> = val.iter().map(|&(_, y)| y).collect();

    let log = super::fit(
        &mut ps,
        mc.seed,
        tc,
        train.len(),
        |ps, i| {
            let mut s = TapeSession::new(ps);
            let logit = enc.logit(&mut s, ps, &train_batch, i)?;
            let loss = s.tape.bce_with_logits(logit, train[i].1 as f64);
            Ok((s.tape.value(loss)[0], s.grads(loss, ps)))
        },
        |ps| Ok(batch_logit_values(&enc, ps, &val_batch)?.into_iter().map(sigmoid).collect()),
        &val_labels,
    )?;
    Ok((ps, enc, log))
}

/// Embedding rows (one per requested node) from the trained encoder.
pub fn embed_nodes(
    enc: &NodeEncoder,
    ps: &ParamSet,
    view: &GraphView<'_>,
    nodes: &[u32],
    fc: &FeatureConfig,
) -> Result<Vec<Vec<f64>>> {
    let batch = batch_nodes(view, nodes, fc)?;
    let mut out = Vec::with_capacity(nodes.len());
    for i in 0..batch.batch {
        let mut s = TapeSession::new(ps);
        let e = enc.embed_row(&mut s, ps, &batch, i)?;
        out.push(s.tape.value(e).to_vec());
    }
    Ok(out)
}

/// Embedding rows keyed by global node id, for subgraph feature assembly.
#[derive(Debug, Clone)]
pub struct NodeEmbeddings {
    rows: Vec<Option<Vec<f64>>>,
    dim: usize,
}

impl NodeEmbeddings {
    pub fn new(n: u32, dim: usize) -> Self {
        Self { rows: vec![None; n as usize], dim }
    }

    /// Embed `nodes` and file the rows under their ids.
    pub fn from_nodes(
        enc: &NodeEncoder,
        ps: &ParamSet,
        view: &GraphView<'_>,
        nodes: &[u32],
        fc: &FeatureConfig,
    ) -> Result<Self> {
        let mut table = Self::new(view.node_count(), enc.embed_dim);
        for (node, row) in nodes.iter().zip(embed_nodes(enc, ps, view, nodes, fc)?) {
            table.rows[*node as usize] = Some(row);
        }
        Ok(table)
    }

    /// File a row directly (precomputed or synthetic features).
    pub fn set(&mut self, node: u32, row: Vec<f64>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding row for node {node} has width {}, table expects {}",
                row.len(),
                self.dim
            )));
        }
        let n = self.rows.len() as u32;
        if node >= n {
            return Err(Error::NodeOutOfRange(node, n));
        }
        self.rows[node as usize] = Some(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, node: u32) -> Result<&[f64]> {
        self.rows
            .get(node as usize)
            .and_then(|r| r.as_deref())
            .ok_or_else(|| Error::InvalidArgument(format!("node {node} has no embedding row")))
    }
}

/// Credit probabilities from the full pretrained head (the sequence-only
/// scoring baseline).
pub fn rnn_credit_scores(
    enc: &NodeEncoder,
    ps: &ParamSet,
    view: &GraphView<'_>,
    nodes: &[u32],
    fc: &FeatureConfig,
) -> Result<Vec<f64>> {
    let batch = batch_nodes(view, nodes, fc)?;
    Ok(batch_logit_values(enc, ps, &batch)?.into_iter().map(sigmoid).collect())
}
