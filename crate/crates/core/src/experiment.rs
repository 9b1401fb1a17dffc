//! One-command experiment pipeline: synthesize a market, split it, and score
//! every method on the same held-out pairs.
//!
//! Each seed regenerates its own graph, so the spread across seeds covers
//! data noise as well as initialization noise. All stage randomness keys off
//! the run seed; two runs with the same config produce identical records.

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::eval::{roc_auc, RunRecord};
use crate::features::FeatureConfig;
use crate::graph::GraphView;
use crate::heuristics::{heuristic_score, HeuristicKind};
use crate::models::{
    build_credit_graph, gcn_credit_score, prepare_samples, pretrain_node_encoder,
    rnn_credit_scores, score_sample_set, score_samples, train_gcn_credit, train_link_model,
    train_link_rnn, EdgeScoreCache, FeatureMode, ModelConfig, NodeEmbeddings, PreparedSample,
    TrainConfig, Variant,
};
use crate::rng;
use crate::splits::{split, Protocol, SampleSet, SplitConfig};
use crate::synthgen::{generate, GenConfig, Generated};
use std::collections::HashMap;
use std::time::Instant;

/// Scales and seed plan for a full experiment run (`exp.*` keys).
///
/// The sample caps bound training cost; splits at the default graph size
/// yield far more pairs than the models need to separate cleanly.
#[derive(Debug, Clone)]
pub struct ExpConfig {
    pub seeds: usize,
    pub seed_base: u64,
    /// Per-protocol caps applied to the split's train/val/test pair sets.
    pub max_train: usize,
    pub max_val: usize,
    pub max_test: usize,
    /// Labeled-node budgets for the scoring task.
    pub credit_train: usize,
    pub credit_val: usize,
    pub credit_test: usize,
    /// Also run the slower ablation rows (pooling and feature grids, plus a
    /// subgraph model under edge sampling).
    pub full_grid: bool,
}

impl Default for ExpConfig {
    fn default() -> Self {
        Self {
            seeds: 5,
            seed_base: 101,
            max_train: 6000,
            max_val: 1500,
            max_test: 4000,
            credit_train: 4000,
            credit_val: 1000,
            credit_test: 5000,
            full_grid: false,
        }
    }
}

impl ExpConfig {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            seeds: cfg.get_usize("exp.seeds", d.seeds)?,
            seed_base: cfg.get_u64("exp.seed_base", d.seed_base)?,
            max_train: cfg.get_usize("exp.max_train", d.max_train)?,
            max_val: cfg.get_usize("exp.max_val", d.max_val)?,
            max_test: cfg.get_usize("exp.max_test", d.max_test)?,
            credit_train: cfg.get_usize("exp.credit_train", d.credit_train)?,
            credit_val: cfg.get_usize("exp.credit_val", d.credit_val)?,
            credit_test: cfg.get_usize("exp.credit_test", d.credit_test)?,
            full_grid: cfg.get_bool("exp.full_grid", d.full_grid)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("exp.seeds", self.seeds),
            ("exp.max_train", self.max_train),
            ("exp.max_val", self.max_val),
            ("exp.max_test", self.max_test),
            ("exp.credit_train", self.credit_train),
            ("exp.credit_val", self.credit_val),
            ("exp.credit_test", self.credit_test),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{key} must be positive")));
            }
        }
        Ok(())
    }
}

/// All rows of an experiment: every method under its protocols, for every
/// seed in the plan. Row order is fixed by the seed loop and the grids, so
/// output files serialize identically across runs.
pub fn run_experiment(cfg: &KvConfig) -> Result<Vec<RunRecord>> {
    let ec = ExpConfig::from_config(cfg)?;
    let mut records = Vec::new();
    for i in 0..ec.seeds {
        let seed = ec.seed_base + i as u64;
        records.extend(run_seed(cfg, seed)?);
    }
    Ok(records)
}

/// One seed's full pipeline: generate, split, score heuristics and the
/// oracle, pretrain the node encoder, train the link scorer and the subgraph
/// models, then the node-scoring models.
pub fn run_seed(cfg: &KvConfig, seed: u64) -> Result<Vec<RunRecord>> {
    let t_seed = Instant::now();
    let ec = ExpConfig::from_config(cfg)?;
    let tc = TrainConfig::from_config(cfg)?;
    let fc = FeatureConfig::from_config(cfg)?;

    let mut gc = GenConfig::from_config(cfg)?;
    gc.seed = seed;
    let t = Instant::now();
    let generated = generate(&gc)?;
    let graph = generated.graph(&gc)?;
    log::info!(
        "seed {seed}: generated {} nodes, {} edge series, {} future pairs in {:.1?}",
        gc.n,
        generated.transfers.len(),
        generated.future_pairs.len(),
        t.elapsed()
    );

    let mut sc = SplitConfig::from_config(cfg)?;
    sc.seed = seed;
    let view = graph.restrict(sc.observation())?;

    let mut records = Vec::new();

    // Pair splits under both protocols; heuristics run on each, the neural
    // grid on the out-of-time one (its scores are the headline numbers).
    let mut oot_sets = None;
    for protocol in [Protocol::OutOfTime, Protocol::EdgeSampling] {
        let mut pc = sc.clone();
        pc.protocol = protocol;
        let t = Instant::now();
        let [train, val, test] = split(&graph, &pc)?;
        let sets = [
            subsample(&train, ec.max_train, seed, segment_salt(protocol, 0)),
            subsample(&val, ec.max_val, seed, segment_salt(protocol, 1)),
            subsample(&test, ec.max_test, seed, segment_salt(protocol, 2)),
        ];
        log::info!(
            "seed {seed}: {} split {}/{}/{} pairs (capped) in {:.1?}",
            protocol.name(),
            sets[0].samples.len(),
            sets[1].samples.len(),
            sets[2].samples.len(),
            t.elapsed()
        );
        records.extend(heuristic_records(&view, &sets[2], seed)?);
        if protocol == Protocol::OutOfTime {
            records.push(oracle_record(&generated, &sets[2], seed)?);
            oot_sets = Some(sets);
        } else if ec.full_grid {
            // Edge sampling inflates subgraph scores; one row documents it.
            let grid = [(Variant::Seal, FeatureMode::ModifiedSl)];
            records.extend(link_grid_records(
                cfg, &view, &sets, &grid, None, None, seed, &tc,
            )?);
        }
    }
    let oot_sets = oot_sets.expect("out-of-time split always runs");

    // Labeled-node subsets for the scoring task drive encoder pretraining.
    let credit_sets = credit_subsets(&generated.credit, &ec, seed)?;
    let mc_enc = ModelConfig::from_config(cfg, Variant::GcnScore, FeatureMode::Et, seed)?;
    let t = Instant::now();
    let (enc_ps, enc, _) =
        pretrain_node_encoder(&view, &credit_sets[0], &credit_sets[1], &mc_enc, &tc, &fc)?;
    log::info!("seed {seed}: encoder pretrained in {:.1?}", t.elapsed());

    let t = Instant::now();
    let all_nodes: Vec<u32> = (0..view.node_count()).collect();
    let emb = NodeEmbeddings::from_nodes(&enc, &enc_ps, &view, &all_nodes, &fc)?;
    log::info!("seed {seed}: embedded {} nodes in {:.1?}", all_nodes.len(), t.elapsed());

    // Sequence-only link scorer: a baseline row, and the edge-weight source
    // for the weighted subgraph models and attention below.
    let mc_rnn = ModelConfig::from_config(cfg, Variant::RnnLink, FeatureMode::Et, seed)?;
    let t = Instant::now();
    let (rnn_ps, rnn, _) = train_link_rnn(&view, &oot_sets[0], &oot_sets[1], &mc_rnn, &tc, &fc)?;
    let rnn_scores = score_sample_set(&rnn, &rnn_ps, &view, &oot_sets[2], &fc)?;
    records.push(record(
        Variant::RnnLink.name(),
        Protocol::OutOfTime.name(),
        "et",
        seed,
        auc_of(&rnn_scores, &oot_sets[2])?,
        oot_sets[2].samples.len(),
    ));
    log::info!("seed {seed}: link scorer trained in {:.1?}", t.elapsed());
    let mut edge_cache = EdgeScoreCache::new(&rnn, &rnn_ps, &view, fc);

    records.extend(link_grid_records(
        cfg,
        &view,
        &oot_sets,
        &link_grid(ec.full_grid),
        Some(&emb),
        Some(&mut edge_cache),
        seed,
        &tc,
    )?);

    // Node scoring: sequence-only baseline, plain graph model, and the same
    // graph model with link-probability edge weights.
    let t = Instant::now();
    let test_nodes: Vec<u32> = credit_sets[2].iter().map(|&(n, _)| n).collect();
    let test_labels: Vec<u8> = credit_sets[2].iter().map(|&(_, y)| y).collect();
    let base_scores = rnn_credit_scores(&enc, &enc_ps, &view, &test_nodes, &fc)?;
    records.push(record(
        "rnn-node",
        "node_scoring",
        "et",
        seed,
        roc_auc(&base_scores, &test_labels)?,
        test_nodes.len(),
    ));

    for variant in [Variant::GcnScore, Variant::GcnScoreLpatt] {
        let mc = ModelConfig::from_config(cfg, variant, FeatureMode::Et, seed)?;
        let attention = match variant {
            Variant::GcnScoreLpatt => Some(&mut edge_cache),
            _ => None,
        };
        let cg = build_credit_graph(&view, &emb, attention)?;
        let (ps, model, _) = train_gcn_credit(&cg, &credit_sets[0], &credit_sets[1], &mc, &tc)?;
        let scores = gcn_credit_score(&model, &ps, &cg, &test_nodes)?;
        records.push(record(
            variant.name(),
            "node_scoring",
            "et",
            seed,
            roc_auc(&scores, &test_labels)?,
            test_nodes.len(),
        ));
    }
    log::info!(
        "seed {seed}: node scoring done in {:.1?}; seed total {:.1?}",
        t.elapsed(),
        t_seed.elapsed()
    );

    Ok(records)
}

/// The out-of-time model rows. The default set carries the headline
/// comparison plus the structural-label ablation; the full grid adds the
/// pooling and feature variants.
fn link_grid(full: bool) -> Vec<(Variant, FeatureMode)> {
    let mut grid = vec![
        (Variant::Seal, FeatureMode::ModifiedSl),
        (Variant::TwoSeal, FeatureMode::ModifiedSl),
        (Variant::TwoSealRnn, FeatureMode::ModifiedSl),
        (Variant::TwoSealRnn, FeatureMode::Sl),
    ];
    if full {
        grid.extend([
            (Variant::WlSeal, FeatureMode::ModifiedSl),
            (Variant::SealRnn, FeatureMode::ModifiedSl),
            (Variant::Seal, FeatureMode::Sl),
            (Variant::TwoSealRnn, FeatureMode::Et),
            (Variant::TwoSealRnn, FeatureMode::EtSl),
        ]);
    }
    grid
}

/// Train and score each grid entry on shared prepared sample sets.
///
/// Preparation is memoized on (feature mode, weighted): variants that read
/// the same node features and weights reuse identical prepared inputs, so
/// e.g. the plain and two-node-pool models see byte-identical tensors.
#[allow(clippy::too_many_arguments)]
fn link_grid_records(
    cfg: &KvConfig,
    view: &GraphView<'_>,
    sets: &[SampleSet; 3],
    grid: &[(Variant, FeatureMode)],
    emb: Option<&NodeEmbeddings>,
    mut edge_cache: Option<&mut EdgeScoreCache<'_>>,
    seed: u64,
    tc: &TrainConfig,
) -> Result<Vec<RunRecord>> {
    let mut prepared: HashMap<(FeatureMode, bool), [Vec<PreparedSample>; 3]> = HashMap::new();
    let mut records = Vec::new();
    for &(variant, mode) in grid {
        let mc = ModelConfig::from_config(cfg, variant, mode, seed)?;
        let weighted = variant.needs_edge_weights();
        if weighted && edge_cache.is_none() {
            return Err(Error::InvalidArgument(format!(
                "{} needs a trained link scorer for edge weights",
                variant.name()
            )));
        }
        if !prepared.contains_key(&(mode, weighted)) {
            let t = Instant::now();
            let emb_opt = if mode.uses_embeddings() { emb } else { None };
            let mut trio = Vec::with_capacity(3);
            for set in sets {
                let scorer = if weighted { edge_cache.as_deref_mut() } else { None };
                trio.push(prepare_samples(view, set, &mc, emb_opt, scorer)?);
            }
            let trio: [Vec<PreparedSample>; 3] =
                trio.try_into().expect("three sample sets prepare into three");
            log::info!(
                "seed {seed}: prepared {} features (weighted={weighted}) in {:.1?}",
                mode.name(),
                t.elapsed()
            );
            prepared.insert((mode, weighted), trio);
        }
        let trio = &prepared[&(mode, weighted)];
        let t = Instant::now();
        let (ps, model, _) = train_link_model(&trio[0], &trio[1], &mc, tc)?;
        let scores = score_samples(&model, &ps, &trio[2])?;
        let labels: Vec<u8> = trio[2].iter().map(|p| p.label).collect();
        records.push(record(
            variant.name(),
            sets[2].protocol.name(),
            mode.name(),
            seed,
            roc_auc(&scores, &labels)?,
            trio[2].len(),
        ));
        log::info!(
            "seed {seed}: {} ({}) auc {:.4} in {:.1?}",
            variant.name(),
            mode.name(),
            records.last().map(|r| r.auc).unwrap_or(f64::NAN),
            t.elapsed()
        );
    }
    Ok(records)
}

fn heuristic_records(
    view: &GraphView<'_>,
    test: &SampleSet,
    seed: u64,
) -> Result<Vec<RunRecord>> {
    let mut out = Vec::with_capacity(HeuristicKind::ALL.len());
    for kind in HeuristicKind::ALL {
        let mut scores = Vec::with_capacity(test.samples.len());
        for &(u, v, _) in &test.samples {
            scores.push(heuristic_score(kind, view, u, v)?);
        }
        out.push(record(
            kind.name(),
            test.protocol.name(),
            "-",
            seed,
            auc_of(&scores, test)?,
            test.samples.len(),
        ));
    }
    Ok(out)
}

/// AUC of ranking `test` pairs by their exact generating probabilities,
/// looked up in the sorted oracle table. No learned model can beat this
/// except by luck; it calibrates the task's ceiling.
pub fn oracle_auc(oracle: &[(u32, u32, f64)], test: &SampleSet) -> Result<f64> {
    let mut scores = Vec::with_capacity(test.samples.len());
    for &(u, v, _) in &test.samples {
        let key = if u < v { (u, v) } else { (v, u) };
        let idx = oracle.binary_search_by(|row| (row.0, row.1).cmp(&key)).map_err(|_| {
            Error::InvalidArgument(format!(
                "no oracle probability recorded for pair ({}, {})",
                key.0, key.1
            ))
        })?;
        scores.push(oracle[idx].2);
    }
    auc_of(&scores, test)
}

fn oracle_record(generated: &Generated, test: &SampleSet, seed: u64) -> Result<RunRecord> {
    Ok(record(
        "oracle",
        test.protocol.name(),
        "-",
        seed,
        oracle_auc(&generated.oracle, test)?,
        test.samples.len(),
    ))
}

/// Deterministic class-balanced cap: shuffle positives and negatives
/// separately under the run seed, keep up to half the cap from each side
/// (topping up from the other when one side runs short), and restore
/// canonical pair order so downstream stages don't see shuffle order.
///
/// `salt` keeps the three segments of the two protocols on distinct streams;
/// [`segment_salt`] is the convention every pipeline stage shares.
pub fn subsample(set: &SampleSet, cap: usize, seed: u64, salt: u64) -> SampleSet {
    if set.samples.len() <= cap {
        return set.clone();
    }
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = set.samples.iter().partition(|s| s.2 == 1);
    rng::shuffle(&mut pos, seed, rng::domain::SUBSET, salt * 2);
    rng::shuffle(&mut neg, seed, rng::domain::SUBSET, salt * 2 + 1);
    let mut keep_pos = pos.len().min(cap.div_ceil(2));
    let keep_neg = neg.len().min(cap - keep_pos);
    keep_pos = pos.len().min(cap - keep_neg);
    let mut samples: Vec<(u32, u32, u8)> =
        pos[..keep_pos].iter().chain(neg[..keep_neg].iter()).copied().collect();
    samples.sort_unstable();
    SampleSet { samples, ..set.clone() }
}

/// Salt for [`subsample`]: protocol index (out-of-time 0, edge sampling 1)
/// and segment index (train 0, val 1, test 2).
pub fn segment_salt(protocol: Protocol, segment: usize) -> u64 {
    let pi = match protocol {
        Protocol::OutOfTime => 0,
        Protocol::EdgeSampling => 1,
    };
    (pi * 3 + segment) as u64
}

/// Disjoint labeled-node subsets (train/val/test) drawn by seeded shuffle
/// from the per-node label table.
pub fn credit_subsets(labels: &[u8], ec: &ExpConfig, seed: u64) -> Result<[Vec<(u32, u8)>; 3]> {
    let n = labels.len();
    let want = ec.credit_train + ec.credit_val + ec.credit_test;
    if n < want {
        return Err(Error::InvalidConfig(format!(
            "credit subsets need {want} nodes, graph has {n}"
        )));
    }
    let mut nodes: Vec<u32> = (0..n as u32).collect();
    rng::shuffle(&mut nodes, seed, rng::domain::SUBSET, 9);
    let mut out = Vec::with_capacity(3);
    let mut start = 0;
    for size in [ec.credit_train, ec.credit_val, ec.credit_test] {
        let mut part: Vec<(u32, u8)> =
            nodes[start..start + size].iter().map(|&u| (u, labels[u as usize])).collect();
        part.sort_unstable();
        let pos = part.iter().filter(|&&(_, y)| y == 1).count();
        if pos == 0 || pos == part.len() {
            return Err(Error::InvalidArgument(format!(
                "credit subset of {size} nodes drew a single class; grow the subset"
            )));
        }
        start += size;
        out.push(part);
    }
    Ok(out.try_into().expect("three subset sizes yield three parts"))
}

fn auc_of(scores: &[f64], set: &SampleSet) -> Result<f64> {
    let labels: Vec<u8> = set.samples.iter().map(|s| s.2).collect();
    roc_auc(scores, &labels)
}

fn record(
    method: &str,
    protocol: &str,
    feature_mode: &str,
    seed: u64,
    auc: f64,
    n_samples: usize,
) -> RunRecord {
    RunRecord {
        method: method.to_string(),
        protocol: protocol.to_string(),
        feature_mode: feature_mode.to_string(),
        seed,
        auc,
        n_samples,
    }
}

/// Per-seed AUC lookup into experiment records.
pub fn find_auc(
    records: &[RunRecord],
    method: &str,
    protocol: &str,
    feature_mode: &str,
    seed: u64,
) -> Option<f64> {
    records
        .iter()
        .find(|r| {
            r.method == method
                && r.protocol == protocol
                && r.feature_mode == feature_mode
                && r.seed == seed
        })
        .map(|r| r.auc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> KvConfig {
        let text = "
            gen.n = 900
            gen.communities = 12
            gen.intra_affinity = 0.08
            gen.event_rate = 2.9
            exp.seeds = 1
            exp.seed_base = 3
            exp.max_train = 300
            exp.max_val = 120
            exp.max_test = 200
            exp.credit_train = 300
            exp.credit_val = 120
            exp.credit_test = 200
            model.conv_dims = 8,8
            model.rnn_hidden = 12
            model.embed_dim = 6
            model.k = 10
            model.cap = 20
            train.epochs = 2
            train.batch_size = 32
            train.lr = 0.01
        ";
        KvConfig::parse(text, "tiny").unwrap()
    }

    #[test]
    fn tiny_experiment_emits_all_rows_deterministically() {
        let cfg = tiny_cfg();
        let records = run_experiment(&cfg).unwrap();

        let methods: Vec<(&str, &str, &str)> = records
            .iter()
            .map(|r| (r.method.as_str(), r.protocol.as_str(), r.feature_mode.as_str()))
            .collect();
        for want in [
            ("cn", "out_of_time", "-"),
            ("cn", "edge_sampling", "-"),
            ("pa", "edge_sampling", "-"),
            ("oracle", "out_of_time", "-"),
            ("rnn-link", "out_of_time", "et"),
            ("seal", "out_of_time", "modified-sl"),
            ("2seal", "out_of_time", "modified-sl"),
            ("2seal-rnn", "out_of_time", "modified-sl"),
            ("2seal-rnn", "out_of_time", "sl"),
            ("rnn-node", "node_scoring", "et"),
            ("gcn", "node_scoring", "et"),
            ("gcn-lpatt", "node_scoring", "et"),
        ] {
            assert!(methods.contains(&want), "missing row {want:?} in {methods:?}");
        }
        for r in &records {
            assert!(r.auc.is_finite() && (0.0..=1.0).contains(&r.auc), "bad auc in {r:?}");
            assert!(r.n_samples > 0);
        }

        let again = run_seed(&cfg, 3).unwrap();
        assert_eq!(records, again, "same seed must reproduce identical rows");
    }

    // Manual calibration probe: `cargo test -p templink-core --lib
    // experiment::tests::probe -- --ignored --nocapture`, optionally with
    // TEMPLINK_PROBE_CFG pointing at a config file. Prints the score table
    // for one seed so generator and training constants can be tuned.
    #[test]
    #[ignore = "manual calibration probe"]
    fn probe_single_seed() {
        let _ = env_logger::Builder::from_env(
            env_logger::Env::default().default_filter_or("templink_core=info"),
        )
        .is_test(false)
        .try_init();
        let cfg = match std::env::var("TEMPLINK_PROBE_CFG") {
            Ok(path) => KvConfig::load(std::path::Path::new(&path)).unwrap(),
            Err(_) => KvConfig::parse(
                "
                gen.n = 5000
                gen.communities = 10
                exp.seeds = 1
                exp.max_train = 3000
                exp.max_val = 800
                exp.max_test = 2000
                exp.credit_train = 1500
                exp.credit_val = 500
                exp.credit_test = 1500
                ",
                "probe",
            )
            .unwrap(),
        };
        let records = run_experiment(&cfg).unwrap();
        println!("{}", crate::eval::render_table(&records));
    }

    #[test]
    fn subsample_keeps_balance_and_order() {
        let set = SampleSet {
            protocol: Protocol::OutOfTime,
            segment: crate::splits::Segment::Test,
            window: crate::graph::Window { start: 0, end: 10 },
            samples: (0..40u32)
                .map(|i| (i, i + 100, u8::from(i % 4 == 0)))
                .collect(),
        };
        let capped = subsample(&set, 12, 7, 0);
        assert_eq!(capped.samples.len(), 12);
        let pos = capped.samples.iter().filter(|s| s.2 == 1).count();
        assert_eq!(pos, 6.min(set.samples.iter().filter(|s| s.2 == 1).count()));
        let mut sorted = capped.samples.clone();
        sorted.sort_unstable();
        assert_eq!(capped.samples, sorted);
        assert_eq!(capped.samples, subsample(&set, 12, 7, 0).samples);
        assert_ne!(capped.samples, subsample(&set, 12, 8, 0).samples);
    }

    #[test]
    fn oracle_lookup_rejects_unknown_pairs() {
        let generated = Generated {
            node_series: vec![Vec::new(); 4],
            transfers: Default::default(),
            future_pairs: Default::default(),
            oracle: vec![(0, 1, 0.5)],
            credit: vec![0, 1, 0, 1],
            community: vec![0; 4],
        };
        let set = SampleSet {
            protocol: Protocol::OutOfTime,
            segment: crate::splits::Segment::Test,
            window: crate::graph::Window { start: 0, end: 10 },
            samples: vec![(1, 0, 1), (2, 3, 0)],
        };
        let err = oracle_record(&generated, &set, 1).unwrap_err();
        assert!(err.to_string().contains("(2, 3)"), "unexpected error {err}");
    }
}
