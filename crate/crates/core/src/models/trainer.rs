//! Sample preparation and the training/scoring entry points for the
//! subgraph classifiers. Subgraphs, features, and edge weights are built
//! once per sample and reused across every epoch.

use rayon::iter::{IntoParallelRefIterator, ParallelIterator};

use super::{
    build_features, weight_subgraph, EdgeScoreCache, ModelConfig, NodeEmbeddings, SealModel,
    TrainConfig, TrainLog,
};
use crate::error::{Error, Result};
use crate::graph::GraphView;
use crate::nn::{ParamSet, TapeSession};
use crate::rng;
use crate::splits::SampleSet;
use crate::subgraph::{extract_enclosing, EnclosingSubgraph};

/// One sample ready for any number of forward passes.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub pair: (u32, u32),
    pub label: u8,
    pub sub: EnclosingSubgraph,
    pub x: Vec<f64>,
}

/// Extract, weight, and featurize every sample of a set.
///
/// Positives' own edges are dropped from their subgraph copies when the
/// protocol samples positives from observed edges. Extraction and labeling
/// fan out across the thread pool; each subgraph is a pure function of the
/// view, the pair, and a pair-derived seed, so the output is identical for
/// any thread count. Edge scoring stays on one thread because it memoizes.
pub fn prepare_samples(
    view: &GraphView<'_>,
    set: &SampleSet,
    mc: &ModelConfig,
    emb: Option<&NodeEmbeddings>,
    mut scorer: Option<&mut EdgeScoreCache<'_>>,
) -> Result<Vec<PreparedSample>> {
    let hide_positives = set.hide_positive_edges();
    let mut subs: Vec<EnclosingSubgraph> = set
        .samples
        .par_iter()
        .map(|&(u, v, label)| {
            let hide_xy = hide_positives && label == 1;
            let seed = rng::stream_key(mc.seed, rng::domain::SAMPLE_SEED, u as u64, v as u64);
            extract_enclosing(view, u, v, mc.hop, mc.cap, hide_xy, seed)
        })
        .collect::<Result<_>>()?;
    if let Some(cache) = scorer.as_deref_mut() {
        for sub in &mut subs {
            weight_subgraph(sub, cache, view)?;
        }
    }
    let xs: Vec<Vec<f64>> = subs.par_iter().map(|sub| build_features(sub, mc, emb)).collect::<Result<_>>()?;
    Ok(set
        .samples
        .iter()
        .zip(subs.into_iter().zip(xs))
        .map(|(&(u, v, label), (sub, x))| PreparedSample { pair: (u, v), label, sub, x })
        .collect())
}

/// Train a subgraph classifier on prepared samples; early stopping follows
/// validation AUC and the best checkpoint is returned.
pub fn train_link_model(
    train: &[PreparedSample],
    val: &[PreparedSample],
    mc: &ModelConfig,
    tc: &TrainConfig,
) -> Result<(ParamSet, SealModel, TrainLog)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "link model training needs non-empty train and validation sets".into(),
        ));
    }
    let mut ps = ParamSet::new();
    let mut init_rng = rng::stream(mc.seed, rng::domain::PARAM_INIT, 2, 0);
    let model = SealModel::new(&mut ps, mc, &mut init_rng)?;
    let val_labels: Vec<u8> = val.iter().map(|s| s.label).collect();

    let log = super::fit(
        &mut ps,
        mc.seed,
        tc,
        train.len(),
        |ps, i| {
            let sample = &train[i];
            let mut s = TapeSession::new(ps);
            let pass = model.forward(&mut s, ps, &sample.sub, &sample.x)?;
            let loss = s.tape.bce_with_logits(pass.logit, sample.label as f64);
            Ok((s.tape.value(loss)[0], s.grads(loss, ps)))
        },
        |ps| score_samples(&model, ps, val),
        &val_labels,
    )?;
    Ok((ps, model, log))
}

/// Probabilities for prepared samples under a trained model.
pub fn score_samples(
    model: &SealModel,
    ps: &ParamSet,
    samples: &[PreparedSample],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let mut s = TapeSession::new(ps);
        let pass = model.forward(&mut s, ps, &sample.sub, &sample.x)?;
        out.push(pass.prob(&s));
    }
    Ok(out)
}
