//! Train/validation/test sample construction.
//!
//! Two protocols: `out_of_time` labels a pair positive when it transacts in
//! the target window `[t1, t2)` given context from `[t0, t1)`; `edge_sampling`
//! labels a pair positive when it is an edge of the observed view (the edge is
//! hidden again when such a pair is scored). Users are hashed into disjoint
//! train/val/test segments, and every sample keeps both endpoints inside one
//! segment. Negatives are drawn without replacement from pairs at most
//! `neg_candidate_hops` apart in the observed view — uniform pairs are almost
//! all trivially unrelated at scale and would inflate rankings.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::graph::{GraphView, TemporalGraph, Window};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    OutOfTime,
    EdgeSampling,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::OutOfTime => "out_of_time",
            Protocol::EdgeSampling => "edge_sampling",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "out_of_time" | "oot" => Ok(Protocol::OutOfTime),
            "edge_sampling" | "es" => Ok(Protocol::EdgeSampling),
            other => Err(Error::InvalidArgument(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Train,
    Val,
    Test,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Train, Segment::Val, Segment::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Segment::Train => "train",
            Segment::Val => "val",
            Segment::Test => "test",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Segment::Train => 0,
            Segment::Val => 1,
            Segment::Test => 2,
        }
    }
}

impl std::str::FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Segment::Train),
            "val" => Ok(Segment::Val),
            "test" => Ok(Segment::Test),
            other => Err(Error::InvalidArgument(format!("unknown segment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitConfig {
    pub protocol: Protocol,
    pub t0: i64,
    pub t1: i64,
    pub t2: i64,
    /// Negatives per positive.
    pub alpha: f64,
    pub train_share: f64,
    pub val_share: f64,
    /// Negative candidates live within this many hops in the observed view.
    pub neg_candidate_hops: u32,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::OutOfTime,
            t0: 0,
            t1: 48,
            t2: 60,
            alpha: 1.0,
            train_share: 0.6,
            val_share: 0.2,
            neg_candidate_hops: 2,
            seed: 7,
        }
    }
}

impl SplitConfig {
    /// Read `split.*` keys, falling back to the shipped defaults.
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            protocol: cfg.get_str("split.protocol", d.protocol.name()).parse()?,
            t0: cfg.get_i64("split.t0", d.t0)?,
            t1: cfg.get_i64("split.t1", d.t1)?,
            t2: cfg.get_i64("split.t2", d.t2)?,
            alpha: cfg.get_f64("split.alpha", d.alpha)?,
            train_share: cfg.get_f64("split.train_share", d.train_share)?,
            val_share: cfg.get_f64("split.val_share", d.val_share)?,
            neg_candidate_hops: cfg.get_u64("split.neg_hops", d.neg_candidate_hops as u64)?
                as u32,
            seed: cfg.get_u64("split.seed", d.seed)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 < self.t1 && self.t1 < self.t2) {
            return Err(Error::InvalidConfig(format!(
                "split windows must satisfy t0 < t1 < t2, got {} {} {}",
                self.t0, self.t1, self.t2
            )));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "split.alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.train_share <= 0.0
            || self.val_share <= 0.0
            || self.train_share + self.val_share >= 1.0
        {
            return Err(Error::InvalidConfig(format!(
                "segment shares must be positive and leave room for test, got {} + {}",
                self.train_share, self.val_share
            )));
        }
        if !(1..=2).contains(&self.neg_candidate_hops) {
            return Err(Error::InvalidConfig(format!(
                "split.neg_hops must be 1 or 2, got {}",
                self.neg_candidate_hops
            )));
        }
        Ok(())
    }

    pub fn observation(&self) -> Window {
        Window { start: self.t0, end: self.t1 }
    }

    pub fn target(&self) -> Window {
        Window { start: self.t1, end: self.t2 }
    }
}

/// One segment's labeled pairs: positives first, then negatives, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub protocol: Protocol,
    pub segment: Segment,
    /// Observation window giving each sample its context.
    pub window: Window,
    pub samples: Vec<(u32, u32, u8)>,
}

impl SampleSet {
    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.2 == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.samples.len() - self.positives()
    }

    /// Whether a positive pair's own edge must be hidden from its context.
    pub fn hide_positive_edges(&self) -> bool {
        self.protocol == Protocol::EdgeSampling
    }
}

/// Deterministic segment for one user.
pub fn segment_of(seed: u64, user: u32, train_share: f64, val_share: f64) -> Segment {
    let u = rng::unit_from_key(rng::stream_key(seed, domain::SEGMENT, user as u64, 0));
    if u < train_share {
        Segment::Train
    } else if u < train_share + val_share {
        Segment::Val
    } else {
        Segment::Test
    }
}

fn segments_for(n: u32, cfg: &SplitConfig) -> Vec<Segment> {
    (0..n)
        .map(|i| segment_of(cfg.seed, i, cfg.train_share, cfg.val_share))
        .collect()
}

/// All unordered pairs within `max_hops` in the view, sorted.
fn hop_pairs(view: &GraphView, max_hops: u32) -> Result<Vec<(u32, u32)>> {
    let n = view.node_count();
    let mut adj: Vec<Vec<u32>> = Vec::with_capacity(n as usize);
    for u in 0..n {
        adj.push(view.neighbors(u)?);
    }
    let mut packed = Vec::new();
    for u in 0..n {
        for &w in &adj[u as usize] {
            if w > u {
                packed.push(((u as u64) << 32) | w as u64);
            }
            if max_hops >= 2 {
                for &v in &adj[w as usize] {
                    if v > u {
                        packed.push(((u as u64) << 32) | v as u64);
                    }
                }
            }
        }
    }
    packed.sort_unstable();
    packed.dedup();
    Ok(packed.into_iter().map(|k| ((k >> 32) as u32, k as u32)).collect())
}

/// Pairs with at least one transfer in the window.
fn linked_pairs(graph: &TemporalGraph, window: Window) -> BTreeSet<(u32, u32)> {
    (0..graph.edge_count())
        .filter(|&e| graph.edge_events_in(e, window) > 0)
        .map(|e| graph.edge_endpoints(e))
        .collect()
}

/// Exactly `round(alpha * positives)` negatives drawn without replacement.
fn draw_negatives(
    mut candidates: Vec<(u32, u32)>,
    positives: usize,
    alpha: f64,
    seed: u64,
    segment: Segment,
) -> Result<Vec<(u32, u32)>> {
    let want = (alpha * positives as f64).round() as usize;
    if candidates.len() < want {
        return Err(Error::InvalidData(format!(
            "segment {} has {} negative candidates, needs {want}",
            segment.name(),
            candidates.len()
        )));
    }
    let mut r = rng::stream(seed, domain::NEG_SAMPLE, segment.index() as u64, 0);
    let (chosen, _) = candidates.partial_shuffle(&mut r, want);
    let mut out = chosen.to_vec();
    out.sort_unstable();
    Ok(out)
}

fn build_set(
    protocol: Protocol,
    segment: Segment,
    window: Window,
    positives: Vec<(u32, u32)>,
    negatives: Vec<(u32, u32)>,
) -> SampleSet {
    let mut samples = Vec::with_capacity(positives.len() + negatives.len());
    samples.extend(positives.into_iter().map(|(u, v)| (u, v, 1u8)));
    samples.extend(negatives.into_iter().map(|(u, v)| (u, v, 0u8)));
    SampleSet { protocol, segment, window, samples }
}

/// Build the three segment sample sets for the configured protocol.
pub fn split(graph: &TemporalGraph, cfg: &SplitConfig) -> Result<[SampleSet; 3]> {
    cfg.validate()?;
    graph.check_window(cfg.observation())?;
    let segs = segments_for(graph.node_count(), cfg);
    let view = graph.restrict(cfg.observation())?;
    let near = hop_pairs(&view, cfg.neg_candidate_hops)?;

    let make = |segment: Segment,
                positives: Vec<(u32, u32)>,
                excluded: &dyn Fn(&(u32, u32)) -> bool|
     -> Result<SampleSet> {
        if positives.is_empty() {
            return Err(Error::InvalidData(format!(
                "segment {} has no positive samples",
                segment.name()
            )));
        }
        let candidates: Vec<(u32, u32)> = near
            .iter()
            .filter(|p| {
                segs[p.0 as usize] == segment && segs[p.1 as usize] == segment && !excluded(p)
            })
            .copied()
            .collect();
        let negatives =
            draw_negatives(candidates, positives.len(), cfg.alpha, cfg.seed, segment)?;
        Ok(build_set(cfg.protocol, segment, cfg.observation(), positives, negatives))
    };

    let split_by_segment = |pairs: &BTreeSet<(u32, u32)>| -> [Vec<(u32, u32)>; 3] {
        let mut by = [Vec::new(), Vec::new(), Vec::new()];
        for &(u, v) in pairs {
            if segs[u as usize] == segs[v as usize] {
                by[segs[u as usize].index()].push((u, v));
            }
        }
        by
    };

    match cfg.protocol {
        Protocol::OutOfTime => {
            graph.check_window(cfg.target())?;
            let future = linked_pairs(graph, cfg.target());
            let by = split_by_segment(&future);
            let mut out = Vec::with_capacity(3);
            for (idx, positives) in by.into_iter().enumerate() {
                out.push(make(Segment::ALL[idx], positives, &|p| future.contains(p))?);
            }
            Ok(out.try_into().expect("three segments"))
        }
        Protocol::EdgeSampling => {
            let observed = linked_pairs(graph, cfg.observation());
            let by = split_by_segment(&observed);
            let mut out = Vec::with_capacity(3);
            for (idx, positives) in by.into_iter().enumerate() {
                out.push(make(Segment::ALL[idx], positives, &|p| observed.contains(p))?);
            }
            Ok(out.try_into().expect("three segments"))
        }
    }
}

/// Write `samples.csv` (`u,v,label,segment`) and `split.cfg` into `dir`.
pub fn save_split(sets: &[SampleSet; 3], cfg: &SplitConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(&dir.display().to_string(), e))?;
    let path = dir.join("samples.csv");
    let name = path.display().to_string();
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&name, e))?;
    let mut w = BufWriter::new(file);
    for set in sets {
        for &(u, v, label) in &set.samples {
            writeln!(w, "{u},{v},{label},{}", set.segment.name())
                .map_err(|e| Error::io(&name, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&name, e))?;

    let mut kv = KvConfig::new();
    kv.set("split.protocol", cfg.protocol.name());
    kv.set("split.t0", cfg.t0);
    kv.set("split.t1", cfg.t1);
    kv.set("split.t2", cfg.t2);
    kv.set("split.alpha", cfg.alpha);
    kv.set("split.train_share", cfg.train_share);
    kv.set("split.val_share", cfg.val_share);
    kv.set("split.neg_hops", cfg.neg_candidate_hops);
    kv.set("split.seed", cfg.seed);
    kv.save(&dir.join("split.cfg"))
}

/// Read back what `save_split` wrote.
pub fn load_split(dir: &Path) -> Result<([SampleSet; 3], SplitConfig)> {
    let cfg = SplitConfig::from_config(&KvConfig::load(&dir.join("split.cfg"))?)?;
    let path = dir.join("samples.csv");
    let name = path.display().to_string();
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&name, e))?;
    let mut sets: [Vec<(u32, u32, u8)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::MalformedRow {
            path: name.clone(),
            line: idx + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad("expected u,v,label,segment"));
        }
        let u: u32 = fields[0].parse().map_err(|_| bad("bad u"))?;
        let v: u32 = fields[1].parse().map_err(|_| bad("bad v"))?;
        let label: u8 = fields[2].parse().map_err(|_| bad("bad label"))?;
        if label > 1 {
            return Err(bad("label must be 0 or 1"));
        }
        let segment: Segment = fields[3].parse()?;
        sets[segment.index()].push((u, v, label));
    }
    let window = cfg.observation();
    let out = [
        SampleSet {
            protocol: cfg.protocol,
            segment: Segment::Train,
            window,
            samples: std::mem::take(&mut sets[0]),
        },
        SampleSet {
            protocol: cfg.protocol,
            segment: Segment::Val,
            window,
            samples: std::mem::take(&mut sets[1]),
        },
        SampleSet {
            protocol: cfg.protocol,
            segment: Segment::Test,
            window,
            samples: std::mem::take(&mut sets[2]),
        },
    ];
    Ok((out, cfg))
}
