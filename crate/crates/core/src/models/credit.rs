//! Node default scoring: a two-layer graph convolution over the whole
//! observed graph, with per-edge attention optionally supplied by a trained
//! link scorer. Two convolutions only mix information within two hops, so
//! one pass over the full adjacency equals running the net on every node's
//! hop-2 neighborhood while sharing all of the work.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::{EdgeScoreCache, ModelConfig, NodeEmbeddings, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::graph::GraphView;
use crate::nn::{
    sigmoid_scalar, Activation, Adjacency, Dense, GraphConv, ParamSet, TapeSession, VarId,
};
use crate::rng;

/// Full-graph adjacency plus per-node input rows, built once and shared by
/// training, validation, and scoring.
pub struct CreditGraph {
    pub adj: Rc<Adjacency>,
    pub x: Vec<f64>,
    pub in_dim: usize,
}

/// Assemble the active adjacency and input rows for every node. With
/// `attention`, each edge carries the link scorer's probability for its
/// endpoints; without it, aggregation falls back to the plain mean.
pub fn build_credit_graph(
    view: &GraphView<'_>,
    emb: &NodeEmbeddings,
    mut attention: Option<&mut EdgeScoreCache<'_>>,
) -> Result<CreditGraph> {
    let n = view.node_count();
    let mut lists = Vec::with_capacity(n as usize);
    let mut weights: Option<Vec<Vec<f64>>> =
        attention.is_some().then(|| Vec::with_capacity(n as usize));
    for u in 0..n {
        let nbrs = view.neighbors(u)?;
        if let Some(cache) = attention.as_deref_mut() {
            let mut w = Vec::with_capacity(nbrs.len());
            for &v in &nbrs {
                w.push(cache.score(view, u, v)?);
            }
            weights.as_mut().expect("weights allocated with attention").push(w);
        }
        lists.push(nbrs);
    }
    let adj = Rc::new(Adjacency::new(lists, weights)?);
    let in_dim = emb.dim();
    let mut x = Vec::with_capacity(n as usize * in_dim);
    for u in 0..n {
        x.extend_from_slice(emb.get(u)?);
    }
    Ok(CreditGraph { adj, x, in_dim })
}

/// Two stacked graph convolutions and a scalar head.
pub struct GcnCredit {
    conv1: GraphConv,
    conv2: GraphConv,
    head: Dense,
    in_dim: usize,
}

impl GcnCredit {
    pub fn new(
        ps: &mut ParamSet,
        in_dim: usize,
        mc: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        mc.validate()?;
        if in_dim == 0 {
            return Err(Error::InvalidArgument("credit net needs a non-empty input row".into()));
        }
        let d1 = mc.conv_dims[0];
        let d2 = *mc.conv_dims.last().expect("validate checked conv_dims");
        Ok(Self {
            conv1: GraphConv::new(ps, "credit.conv0", in_dim, d1, Activation::Tanh, rng),
            conv2: GraphConv::new(ps, "credit.conv1", d1, d2, Activation::Tanh, rng),
            head: Dense::new(ps, "credit.head", d2, 1, Activation::Identity, rng),
            in_dim,
        })
    }

    /// Per-node logits over the whole graph: an [n, 1] block.
    pub fn logits(&self, s: &mut TapeSession, ps: &ParamSet, cg: &CreditGraph) -> Result<VarId> {
        let n = cg.adj.n();
        if cg.in_dim != self.in_dim || cg.x.len() != n * self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "credit net expects {n} rows of {} values, got {} of {}",
                self.in_dim,
                cg.x.len() / cg.in_dim.max(1),
                cg.in_dim
            )));
        }
        let x = s.input(n, self.in_dim, cg.x.clone());
        let h1 = self.conv1.forward(s, ps, x, &cg.adj)?;
        let h2 = self.conv2.forward(s, ps, h1, &cg.adj)?;
        self.head.forward(s, ps, h2)
    }
}

/// Default probabilities for `nodes` under a trained net.
pub fn gcn_credit_score(
    model: &GcnCredit,
    ps: &ParamSet,
    cg: &CreditGraph,
    nodes: &[u32],
) -> Result<Vec<f64>> {
    let mut s = TapeSession::new(ps);
    let logits = model.logits(&mut s, ps, cg)?;
    let vals = s.tape.value(logits);
    let n = cg.adj.n() as u32;
    nodes
        .iter()
        .map(|&u| {
            if u >= n {
                return Err(Error::NodeOutOfRange(u, n));
            }
            Ok(sigmoid_scalar(vals[u as usize]))
        })
        .collect()
}

/// Train on labeled nodes. Each minibatch runs one full-graph pass and
/// averages the per-node losses inside that single tape.
pub fn train_gcn_credit(
    cg: &CreditGraph,
    train: &[(u32, u8)],
    val: &[(u32, u8)],
    mc: &ModelConfig,
    tc: &TrainConfig,
) -> Result<(ParamSet, GcnCredit, TrainLog)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "credit training needs non-empty train and validation label sets".into(),
        ));
    }
    tc.validate()?;
    let n = cg.adj.n() as u32;
    for &(node, _) in train.iter().chain(val) {
        if node >= n {
            return Err(Error::NodeOutOfRange(node, n));
        }
    }
    let mut ps = ParamSet::new();
    let mut init_rng = rng::stream(mc.seed, rng::domain::PARAM_INIT, 3, 0);
    let model = GcnCredit::new(&mut ps, cg.in_dim, mc, &mut init_rng)?;
    let val_nodes: Vec<u32> = val.iter().map(|&(node, _)| node).collect();
    let val_labels: Vec<u8> = val.iter().map(|&(_, label)| label).collect();

    let log = super::fit_batched(
        &mut ps,
        mc.seed,
        tc,
        train.len(),
        |ps, chunk| {
            let mut s = TapeSession::new(ps);
            let logits = model.logits(&mut s, ps, cg)?;
            let mut total: Option<VarId> = None;
            for &i in chunk {
                let (node, label) = train[i];
                let row = s.tape.gather_rows(logits, vec![node as usize]);
                let loss = s.tape.bce_with_logits(row, label as f64);
                total = Some(match total {
                    Some(t) => s.tape.add(t, loss),
                    None => loss,
                });
            }
            let total = total.expect("chunks are non-empty");
            let mean = s.tape.scale(total, 1.0 / chunk.len() as f64);
            let sum = s.tape.value(total)[0];
            Ok((sum, s.grads(mean, ps)))
        },
        |ps| gcn_credit_score(&model, ps, cg, &val_nodes),
        &val_labels,
    )?;
    Ok((ps, model, log))
}
