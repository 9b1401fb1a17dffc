//! Enclosing-subgraph classifiers: stacked graph convolutions with a
//! variant-specific readout over the concatenated per-node outputs.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::{FeatureMode, ModelConfig, NodeEmbeddings, Variant};
use crate::error::{Error, Result};
use crate::nn::check::{run_fd_suite, Pass};
use crate::nn::{
    two_node_pool, Activation, Adjacency, Conv1dReadout, Dense, GraphConv, ParamSet, TapeSession,
    VarId,
};
use crate::rng;
use crate::subgraph::{drnl_labels, encode_labels, palette_wl_order, EnclosingSubgraph};

const READOUT_SPAN: usize = 2;
const READOUT_CHANNELS: usize = 16;

#[derive(Debug, Clone)]
enum Readout {
    /// sort_pool(K) → 1-D conv with max pooling → dense logit.
    SortConv { conv: Conv1dReadout, head: Dense },
    /// Target-pair rows only → dense logit.
    TwoNode { head: Dense },
    /// Color-ranked top-K rows flattened (zero-padded) → dense logit.
    Flatten { head: Dense },
}

#[derive(Debug, Clone)]
pub struct SealModel {
    pub variant: Variant,
    convs: Vec<GraphConv>,
    readout: Readout,
    in_dim: usize,
    k: usize,
}

/// One forward pass: the scalar logit still on the tape, plus the smallest
/// distance to a non-smooth decision flip (sorting order, pooling argmax)
/// encountered on the way — infinite for fully smooth readouts.
pub struct SealPass {
    pub logit: VarId,
    pub margin: f64,
}

impl SealPass {
    pub fn prob(&self, s: &TapeSession) -> f64 {
        crate::nn::sigmoid_scalar(s.tape.value(self.logit)[0])
    }
}

impl SealModel {
    pub fn new(ps: &mut ParamSet, mc: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        mc.validate()?;
        if !mc.variant.is_subgraph_model() {
            return Err(Error::InvalidArgument(format!(
                "{} is not a subgraph classifier",
                mc.variant.name()
            )));
        }
        let in_dim = mc.in_dim();
        let mut convs = Vec::with_capacity(mc.conv_dims.len());
        let mut prev = in_dim;
        for (i, &dim) in mc.conv_dims.iter().enumerate() {
            convs.push(GraphConv::new(
                ps,
                &format!("seal.conv{i}"),
                prev,
                dim,
                Activation::Tanh,
                rng,
            ));
            prev = dim;
        }
        let width = mc.stacked_width();
        let readout = match mc.variant {
            Variant::Seal | Variant::SealRnn => Readout::SortConv {
                conv: Conv1dReadout::new(
                    ps,
                    "seal.readout",
                    width,
                    READOUT_SPAN,
                    READOUT_CHANNELS,
                    Activation::Tanh,
                    rng,
                ),
                head: Dense::new(ps, "seal.head", READOUT_CHANNELS, 1, Activation::Identity, rng),
            },
            Variant::TwoSeal | Variant::TwoSealRnn => Readout::TwoNode {
                head: Dense::new(ps, "seal.head", 2 * width, 1, Activation::Identity, rng),
            },
            Variant::WlSeal => Readout::Flatten {
                head: Dense::new(ps, "seal.head", mc.k * width, 1, Activation::Identity, rng),
            },
            _ => unreachable!("subgraph variants covered above"),
        };
        Ok(Self { variant: mc.variant, convs, readout, in_dim, k: mc.k })
    }

    /// Classify one enclosing subgraph. `x` is the row-major feature block,
    /// one row of `in_dim` values per subgraph node.
    pub fn forward(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        sub: &EnclosingSubgraph,
        x: &[f64],
    ) -> Result<SealPass> {
        let n = sub.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "subgraph must contain both targets, got {n} nodes"
            )));
        }
        if x.len() != n * self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "feature block has {} values, subgraph needs {} x {}",
                x.len(),
                n,
                self.in_dim
            )));
        }
        if self.variant.needs_edge_weights() && sub.weights.is_none() {
            return Err(Error::InvalidArgument(format!(
                "{} requires estimated edge weights on the subgraph",
                self.variant.name()
            )));
        }

        // WL_SEAL trims to the color-ranked top-K nodes before convolving.
        let (lists, weights, x_data, rows) = if self.variant == Variant::WlSeal {
            let order = palette_wl_order(sub, self.k)?;
            let mut index = vec![u32::MAX; n];
            for (new, &old) in order.iter().enumerate() {
                index[old as usize] = new as u32;
            }
            let m = order.len();
            let mut lists = vec![Vec::new(); m];
            let mut weights = sub.weights.as_ref().map(|_| vec![Vec::new(); m]);
            for (new_i, &old_i) in order.iter().enumerate() {
                for (slot, &old_j) in sub.adj[old_i as usize].iter().enumerate() {
                    let new_j = index[old_j as usize];
                    if new_j == u32::MAX {
                        continue;
                    }
                    lists[new_i].push(new_j);
                    if let Some(w) = weights.as_mut() {
                        w[new_i].push(sub.weights.as_ref().expect("checked")[old_i as usize][slot]);
                    }
                }
            }
            let mut x_data = Vec::with_capacity(m * self.in_dim);
            for &old in &order {
                let start = old as usize * self.in_dim;
                x_data.extend_from_slice(&x[start..start + self.in_dim]);
            }
            (lists, weights, x_data, m)
        } else {
            (sub.adj.clone(), sub.weights.clone(), x.to_vec(), n)
        };

        let adj = Rc::new(Adjacency::new(lists, weights)?);
        let mut h = s.input(rows, self.in_dim, x_data);
        let mut outputs = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            h = conv.forward(s, ps, h, &adj)?;
            outputs.push(h);
        }
        let mut concat = outputs[0];
        for &o in &outputs[1..] {
            concat = s.tape.concat_cols(concat, o);
        }

        match &self.readout {
            Readout::SortConv { conv, head } => {
                let sort_margin = sort_margin(s, concat);
                let pooled = s.tape.sort_pool(concat, self.k);
                let (feat, max_margin) = conv.forward_with_margin(s, ps, pooled)?;
                let logit = head.forward(s, ps, feat)?;
                Ok(SealPass { logit, margin: sort_margin.min(max_margin) })
            }
            Readout::TwoNode { head } => {
                let pair = two_node_pool(s, concat)?;
                let logit = head.forward(s, ps, pair)?;
                Ok(SealPass { logit, margin: f64::INFINITY })
            }
            Readout::Flatten { head } => {
                let (r, w) = s.tape.shape(concat);
                let mut flat = s.tape.reshape(concat, 1, r * w);
                if r < self.k {
                    let pad = s.input(1, (self.k - r) * w, vec![0.0; (self.k - r) * w]);
                    flat = s.tape.concat_cols(flat, pad);
                }
                let logit = head.forward(s, ps, flat)?;
                Ok(SealPass { logit, margin: f64::INFINITY })
            }
        }
    }
}

/// Smallest adjacent gap in the sort_pool ordering of `h`'s rows. The
/// comparator reads columns right to left, so generically the last column
/// decides: the margin is the closest adjacent pair of last-column values,
/// zero when distinct rows tie there (a tie broken deeper is still one
/// perturbation away from reordering). Fully identical rows are
/// interchangeable and don't count.
fn sort_margin(s: &TapeSession, h: VarId) -> f64 {
    let (rows, cols) = s.tape.shape(h);
    let v = s.tape.value(h);
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| {
        for c in (0..cols).rev() {
            let cmp = v[b * cols + c].total_cmp(&v[a * cols + c]);
            if cmp != std::cmp::Ordering::Equal {
                return cmp;
            }
        }
        a.cmp(&b)
    });
    let mut margin = f64::INFINITY;
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let rows_equal = (0..cols).all(|c| v[a * cols + c].to_bits() == v[b * cols + c].to_bits());
        if rows_equal {
            continue;
        }
        margin = margin.min((v[a * cols + cols - 1] - v[b * cols + cols - 1]).abs());
    }
    margin
}

/// Assemble the per-node feature block for a subgraph under the configured
/// feature mode: encoder embeddings, one-hot structural labels, or their
/// concatenation (embeddings first).
pub fn build_features(
    sub: &EnclosingSubgraph,
    mc: &ModelConfig,
    emb: Option<&NodeEmbeddings>,
) -> Result<Vec<f64>> {
    let n = sub.len();
    let labels = if mc.feature_mode.uses_labels() {
        let raw = drnl_labels(sub, mc.feature_mode.hide_targets_for_labels());
        Some(encode_labels(&raw, mc.label_max))
    } else {
        None
    };
    let table = if mc.feature_mode.uses_embeddings() {
        let t = emb.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "feature mode {} needs node embeddings",
                mc.feature_mode.name()
            ))
        })?;
        if t.dim() != mc.embed_dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding rows are {}-dim, model expects {}",
                t.dim(),
                mc.embed_dim
            )));
        }
        Some(t)
    } else {
        None
    };
    let label_width = mc.label_max as usize + 1;
    let mut out = Vec::with_capacity(n * mc.in_dim());
    for i in 0..n {
        if let Some(t) = table {
            out.extend_from_slice(t.get(sub.nodes[i])?);
        }
        if let Some(l) = &labels {
            out.extend_from_slice(&l[i * label_width..(i + 1) * label_width]);
        }
    }
    Ok(out)
}

/// Random connected-ish subgraph for the gradient and invariance suites.
pub fn random_subgraph(r: &mut ChaCha8Rng, n: usize, weighted: bool) -> EnclosingSubgraph {
    use rand::Rng;
    let mut adj = vec![Vec::new(); n];
    let link = |a: usize, b: usize, adj: &mut Vec<Vec<u32>>| {
        if a != b && !adj[a].contains(&(b as u32)) {
            adj[a].push(b as u32);
            adj[b].push(a as u32);
        }
    };
    // Spine keeps everything reachable; extra edges add structure.
    for i in 1..n {
        let anchor = r.gen_range(0..i);
        link(i, anchor, &mut adj);
    }
    for _ in 0..n {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        link(a, b, &mut adj);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let mut sub = EnclosingSubgraph {
        nodes: (0..n as u32).collect(),
        adj,
        weights: None,
        labels: Vec::new(),
        hop: 1,
        seed: r.gen(),
    };
    if weighted {
        let assignments: Vec<Vec<f64>> = sub
            .adj
            .iter()
            .enumerate()
            .map(|(i, list)| {
                list.iter()
                    .map(|&j| {
                        let (a, b) = (i as u32, j);
                        let key = rng::stream_key(
                            sub.seed,
                            rng::domain::PAIR_EDGE,
                            a.min(b) as u64,
                            a.max(b) as u64,
                        );
                        0.05 + 0.9 * rng::unit_from_key(key)
                    })
                    .collect()
            })
            .collect();
        sub.weights = Some(assignments);
    }
    sub
}

/// Finite-difference check of the full subgraph classifier for one variant.
pub fn check_seal_forward(seed: u64, variant: Variant, weighted: bool) -> f64 {
    let mut mc = ModelConfig::new(variant, FeatureMode::Sl, seed);
    mc.conv_dims = vec![4, 3];
    mc.k = 5;
    mc.label_max = 6;
    run_fd_suite(
        seed,
        0x20 ^ variant.name().len() as u64,
        move |ps, r| {
            let model = SealModel::new(ps, &mc, r).unwrap();
            (model, mc.clone())
        },
        move |ps, (model, mc), salt| {
            let mut rx = rng::stream(salt, rng::domain::PARAM_INIT, 0x120, 0);
            let sub = random_subgraph(&mut rx, 7, weighted);
            let x = build_features(&sub, mc, None).unwrap();
            let mut s = TapeSession::new(ps);
            let pass = model.forward(&mut s, ps, &sub, &x).unwrap();
            let loss = s.tape.bce_with_logits(pass.logit, 1.0);
            Pass { loss: s.tape.value(loss)[0], grads: s.grads(loss, ps), margin: pass.margin }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check::FD_REL_TOL;

    fn model_config(variant: Variant, seed: u64) -> ModelConfig {
        let mut mc = ModelConfig::new(variant, FeatureMode::Sl, seed);
        mc.conv_dims = vec![4, 3];
        mc.k = 5;
        mc.label_max = 6;
        mc
    }

    fn forward_prob(variant: Variant, sub: &EnclosingSubgraph, seed: u64) -> f64 {
        let mc = model_config(variant, seed);
        let mut ps = ParamSet::new();
        let mut r = rng::stream(seed, rng::domain::PARAM_INIT, 9, 0);
        let model = SealModel::new(&mut ps, &mc, &mut r).unwrap();
        let x = build_features(sub, &mc, None).unwrap();
        let mut s = TapeSession::new(&ps);
        model.forward(&mut s, &ps, sub, &x).unwrap().prob(&s)
    }

    /// Relabel non-target nodes: position p of the old layout moves to
    /// perm[p], with 0 and 1 fixed. Feature rows travel with their nodes.
    fn permuted(sub: &EnclosingSubgraph, r: &mut ChaCha8Rng) -> EnclosingSubgraph {
        use rand::seq::SliceRandom;
        let n = sub.len();
        let mut rest: Vec<u32> = (2..n as u32).collect();
        rest.shuffle(r);
        let mut perm: Vec<u32> = vec![0, 1];
        perm.extend(rest);
        // perm[new] = old; invert to map old -> new.
        let mut to_new = vec![0u32; n];
        for (new, &old) in perm.iter().enumerate() {
            to_new[old as usize] = new as u32;
        }
        let mut adj = vec![Vec::new(); n];
        let mut weights = sub.weights.as_ref().map(|_| vec![Vec::new(); n]);
        for (old_i, list) in sub.adj.iter().enumerate() {
            let new_i = to_new[old_i] as usize;
            for (slot, &old_j) in list.iter().enumerate() {
                adj[new_i].push(to_new[old_j as usize]);
                if let Some(w) = weights.as_mut() {
                    w[new_i].push(sub.weights.as_ref().unwrap()[old_i][slot]);
                }
            }
        }
        // Keep neighbor lists sorted (the extraction invariant), carrying
        // the paired weights along.
        for i in 0..n {
            if let Some(w) = weights.as_mut() {
                let mut paired: Vec<(u32, f64)> =
                    adj[i].iter().copied().zip(w[i].iter().copied()).collect();
                paired.sort_by_key(|&(j, _)| j);
                adj[i] = paired.iter().map(|&(j, _)| j).collect();
                w[i] = paired.iter().map(|&(_, x)| x).collect();
            } else {
                adj[i].sort_unstable();
            }
        }
        let mut nodes = vec![0u32; n];
        for (old, &new) in to_new.iter().enumerate() {
            nodes[new as usize] = sub.nodes[old];
        }
        EnclosingSubgraph { nodes, adj, weights, labels: Vec::new(), hop: sub.hop, seed: sub.seed }
    }

    #[test]
    fn two_seal_bit_identical_under_relabeling() {
        let mut r = rng::stream(41, rng::domain::PARAM_INIT, 77, 0);
        let sub = random_subgraph(&mut r, 9, false);
        let base = forward_prob(Variant::TwoSeal, &sub, 3);
        for _ in 0..20 {
            let shuffled = permuted(&sub, &mut r);
            let prob = forward_prob(Variant::TwoSeal, &shuffled, 3);
            assert_eq!(prob.to_bits(), base.to_bits());
        }
    }

    #[test]
    fn seal_scores_match_under_relabeling() {
        let mut r = rng::stream(42, rng::domain::PARAM_INIT, 78, 0);
        let sub = random_subgraph(&mut r, 9, false);
        let base = forward_prob(Variant::Seal, &sub, 4);
        for _ in 0..20 {
            let shuffled = permuted(&sub, &mut r);
            let prob = forward_prob(Variant::Seal, &shuffled, 4);
            assert_eq!(prob.to_bits(), base.to_bits());
        }
    }

    #[test]
    fn constant_weights_match_unweighted_exactly() {
        let mut r = rng::stream(43, rng::domain::PARAM_INIT, 79, 0);
        for variant in [Variant::SealRnn, Variant::TwoSealRnn] {
            let plain = random_subgraph(&mut r, 8, false);
            let mut weighted = plain.clone();
            weighted.set_weights(|_, _| 1.0);
            let binary = match variant {
                Variant::SealRnn => Variant::Seal,
                _ => Variant::TwoSeal,
            };
            let a = forward_prob(variant, &weighted, 5);
            let b = forward_prob(binary, &plain, 5);
            assert!((a - b).abs() < 1e-12, "{}: {a} vs {b}", variant.name());
        }
    }

    #[test]
    fn rnn_variants_demand_weights() {
        let mut r = rng::stream(44, rng::domain::PARAM_INIT, 80, 0);
        let sub = random_subgraph(&mut r, 6, false);
        let mc = model_config(Variant::TwoSealRnn, 1);
        let mut ps = ParamSet::new();
        let mut pr = rng::stream(1, rng::domain::PARAM_INIT, 9, 0);
        let model = SealModel::new(&mut ps, &mc, &mut pr).unwrap();
        let x = build_features(&sub, &mc, None).unwrap();
        let mut s = TapeSession::new(&ps);
        assert!(model.forward(&mut s, &ps, &sub, &x).is_err());
    }

    #[test]
    fn misaligned_features_are_rejected() {
        let mut r = rng::stream(45, rng::domain::PARAM_INIT, 81, 0);
        let sub = random_subgraph(&mut r, 6, false);
        let mc = model_config(Variant::TwoSeal, 1);
        let mut ps = ParamSet::new();
        let mut pr = rng::stream(1, rng::domain::PARAM_INIT, 9, 0);
        let model = SealModel::new(&mut ps, &mc, &mut pr).unwrap();
        let mut x = build_features(&sub, &mc, None).unwrap();
        x.pop();
        let mut s = TapeSession::new(&ps);
        assert!(model.forward(&mut s, &ps, &sub, &x).is_err());
    }

    #[test]
    fn zero_features_zero_params_score_half() {
        let mut r = rng::stream(46, rng::domain::PARAM_INIT, 82, 0);
        let sub = random_subgraph(&mut r, 6, false);
        for variant in [Variant::Seal, Variant::TwoSeal, Variant::WlSeal] {
            let mc = model_config(variant, 2);
            let mut ps = ParamSet::new();
            let mut pr = rng::stream(2, rng::domain::PARAM_INIT, 9, 0);
            let model = SealModel::new(&mut ps, &mc, &mut pr).unwrap();
            for id in 0..ps.len() {
                ps.values_mut(id).fill(0.0);
            }
            let x = vec![0.0; sub.len() * mc.in_dim()];
            let mut s = TapeSession::new(&ps);
            let pass = model.forward(&mut s, &ps, &sub, &x).unwrap();
            assert_eq!(pass.prob(&s), 0.5, "{}", variant.name());
        }
    }

    #[test]
    fn seal_and_two_seal_disagree_generically() {
        let mut r = rng::stream(47, rng::domain::PARAM_INIT, 83, 0);
        let sub = random_subgraph(&mut r, 8, false);
        let a = forward_prob(Variant::Seal, &sub, 6);
        let b = forward_prob(Variant::TwoSeal, &sub, 6);
        assert_ne!(a, b);
    }

    #[test]
    fn wl_seal_handles_small_and_large_subgraphs() {
        let mut r = rng::stream(48, rng::domain::PARAM_INIT, 84, 0);
        // Fewer nodes than K exercises the zero padding; more than K the cut.
        let small = random_subgraph(&mut r, 3, false);
        let large = random_subgraph(&mut r, 12, false);
        let a = forward_prob(Variant::WlSeal, &small, 7);
        let b = forward_prob(Variant::WlSeal, &large, 7);
        assert!(a > 0.0 && a < 1.0);
        assert!(b > 0.0 && b < 1.0);
    }

    #[test]
    fn modified_labels_differ_from_hidden_labels() {
        // w hangs off y alone, so its distance to x runs through y: dropping
        // the targets from each other's search changes w's label, and the
        // two label modes produce different features.
        let sub = EnclosingSubgraph {
            nodes: vec![10, 11, 12],
            adj: vec![vec![1], vec![0, 2], vec![1]],
            weights: None,
            labels: Vec::new(),
            hop: 1,
            seed: 0,
        };
        let hidden = model_config(Variant::TwoSeal, 1);
        let mut modified = model_config(Variant::TwoSeal, 1);
        modified.feature_mode = FeatureMode::ModifiedSl;
        let a = build_features(&sub, &hidden, None).unwrap();
        let b = build_features(&sub, &modified, None).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn seal_forward_grads_match_finite_differences() {
        for seed in 0..5 {
            let err = check_seal_forward(seed, Variant::Seal, false);
            assert!(err < FD_REL_TOL, "seal seed {seed}: {err:.3e}");
        }
        for seed in 0..5 {
            let err = check_seal_forward(seed, Variant::TwoSealRnn, true);
            assert!(err < FD_REL_TOL, "2seal-rnn seed {seed}: {err:.3e}");
        }
        let err = check_seal_forward(0, Variant::WlSeal, false);
        assert!(err < FD_REL_TOL, "wl-seal: {err:.3e}");
    }
}
