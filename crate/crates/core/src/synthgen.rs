//! Synthetic transaction-graph generator with a planted link signal.
//!
//! Nodes get a latent community, a sociability level, and an activity level.
//! Observed transfers in `[t0, t1)` form edges whose probability grows with
//! pairwise sociability; each edge carries an event series whose intensity
//! and regularity grow with the same affinity. Future transfers in `[t1, t2)`
//! are drawn from a per-pair hazard that combines community affinity, edge
//! presence, and — scaled by `signal_strength` — the realized observed event
//! count, so the future-link signal is partly visible to topology-only
//! methods and fully visible only to series-aware ones. The exact conditional
//! probability of every reachable pair is written out as a score table, which
//! upper-bounds anything a trained model can achieve on the same samples.
//!
//! Every random draw comes from a counter-based stream keyed by the entity it
//! concerns, so output is byte-identical for a given config and seed no
//! matter how the work is scheduled.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::graph::{DatasetHeader, TemporalGraph, TransactionEvent};
use crate::rng::{self, domain};

/// Hazard for a same-community pair within two hops, per unit of pairwise
/// sociability. New links only form inside this candidate set, so every
/// eventual positive is reachable by the negative sampler's hop limit.
pub const FUTURE_BASE: f64 = 0.035;
/// Hazard added by the presence of an observed edge.
pub const FUTURE_EDGE_BOOST: f64 = 0.05;
/// Hazard per extra observed event beyond the first, per unit of
/// `signal_strength`.
pub const SERIES_COUPLING: f64 = 0.06;
/// Multiplier on the base hazard per common neighbor (triadic closure).
pub const CLOSURE_BOOST: f64 = 1.6;
/// Mean of the extra future events beyond the guaranteed one.
const FUTURE_EXTRA_EVENTS: f64 = 0.8;
/// E[s_u * s_v] for sociability ~ U(0.2, 1.0); normalizes rate scaling.
const MEAN_PAIR_SOCIABILITY: f64 = 0.36;
/// Share of an edge's (or node's) events in its dominant currency.
const DOMINANT_CURRENCY_SHARE: f64 = 0.8;
/// Credit-label logit weight on the node's own normalized log-activity.
const CREDIT_ACTIVITY_WEIGHT: f64 = 0.9;
/// Credit-label logit weight on the transfer-weighted mean of neighbor
/// log-activity; the graph carries label signal beyond the node's own
/// profile, and the weighting favors high-traffic relationships.
const CREDIT_NEIGHBOR_WEIGHT: f64 = 2.6;

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub n: u32,
    pub communities: u32,
    /// Edge probability scale for same-community pairs.
    pub intra_affinity: f64,
    /// Acceptance probability scale for sampled cross-community candidates.
    pub inter_affinity: f64,
    /// Cross-community candidate pairs drawn per node.
    pub inter_candidates: f64,
    /// Mean observed transfer count on an average-sociability edge.
    pub event_rate: f64,
    /// Purchases per node per time step at unit activity.
    pub node_event_rate: f64,
    /// Location of log minor-unit purchase/transfer amounts.
    pub amount_mu: f64,
    /// Spread of log amounts.
    pub amount_sigma: f64,
    pub currencies: u16,
    /// Coupling between realized observed series and future links (beta).
    pub signal_strength: f64,
    /// Target marginal rate of positive credit labels.
    pub default_rate: f64,
    pub t0: i64,
    pub t1: i64,
    pub t2: i64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 50_000,
            communities: 100,
            intra_affinity: 0.022,
            inter_affinity: 0.5,
            inter_candidates: 8.0,
            event_rate: 2.9,
            node_event_rate: 0.15,
            amount_mu: 3.9,
            amount_sigma: 0.8,
            currencies: 3,
            signal_strength: 2.0,
            default_rate: 0.15,
            t0: 0,
            t1: 48,
            t2: 60,
            seed: 7,
        }
    }
}

impl GenConfig {
    /// Read `gen.*` keys, falling back to the shipped defaults.
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            n: cfg.get_u64("gen.n", d.n as u64)? as u32,
            communities: cfg.get_u64("gen.communities", d.communities as u64)? as u32,
            intra_affinity: cfg.get_f64("gen.intra_affinity", d.intra_affinity)?,
            inter_affinity: cfg.get_f64("gen.inter_affinity", d.inter_affinity)?,
            inter_candidates: cfg.get_f64("gen.inter_candidates", d.inter_candidates)?,
            event_rate: cfg.get_f64("gen.event_rate", d.event_rate)?,
            node_event_rate: cfg.get_f64("gen.node_event_rate", d.node_event_rate)?,
            amount_mu: cfg.get_f64("gen.amount_mu", d.amount_mu)?,
            amount_sigma: cfg.get_f64("gen.amount_sigma", d.amount_sigma)?,
            currencies: cfg.get_u64("gen.currencies", d.currencies as u64)? as u16,
            signal_strength: cfg.get_f64("gen.signal_strength", d.signal_strength)?,
            default_rate: cfg.get_f64("gen.default_rate", d.default_rate)?,
            t0: cfg.get_i64("gen.t0", d.t0)?,
            t1: cfg.get_i64("gen.t1", d.t1)?,
            t2: cfg.get_i64("gen.t2", d.t2)?,
            seed: cfg.get_u64("gen.seed", d.seed)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig("gen.n must be at least 2".into()));
        }
        if self.communities == 0 {
            return Err(Error::InvalidConfig("gen.communities must be positive".into()));
        }
        if self.currencies == 0 {
            return Err(Error::InvalidConfig("gen.currencies must be positive".into()));
        }
        for (key, p) in [
            ("gen.intra_affinity", self.intra_affinity),
            ("gen.inter_affinity", self.inter_affinity),
            ("gen.default_rate", self.default_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{key} {p} outside [0, 1]")));
            }
        }
        for (key, v) in [
            ("gen.inter_candidates", self.inter_candidates),
            ("gen.event_rate", self.event_rate),
            ("gen.node_event_rate", self.node_event_rate),
            ("gen.amount_sigma", self.amount_sigma),
            ("gen.signal_strength", self.signal_strength),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{key} {v} must be finite and >= 0")));
            }
        }
        if !self.amount_mu.is_finite() {
            return Err(Error::InvalidConfig("gen.amount_mu must be finite".into()));
        }
        if !(self.t0 < self.t1 && self.t1 < self.t2) {
            return Err(Error::InvalidConfig(format!(
                "time horizon must satisfy t0 < t1 < t2, got {} {} {}",
                self.t0, self.t1, self.t2
            )));
        }
        Ok(())
    }
}

/// Everything one generation run produces, before serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// Purchases per node, observation window only.
    pub node_series: Vec<Vec<TransactionEvent>>,
    /// Transfer events per canonical pair, observed and future merged.
    pub transfers: BTreeMap<(u32, u32), Vec<TransactionEvent>>,
    /// Pairs with at least one transfer in `[t1, t2)`.
    pub future_pairs: BTreeSet<(u32, u32)>,
    /// Exact future-link probability for every hop-<=2 observed pair and
    /// every future pair, sorted.
    pub oracle: Vec<(u32, u32, f64)>,
    /// Binary credit label per node.
    pub credit: Vec<u8>,
    /// Latent community per node (diagnostics; not written to the dataset).
    pub community: Vec<u32>,
}

/// Currency codes for the dataset header, in index order.
pub fn currency_table(count: u16) -> Vec<String> {
    const CODES: [&str; 8] = ["EUR", "USD", "GBP", "CHF", "PLN", "SEK", "NOK", "CZK"];
    (0..count as usize)
        .map(|i| CODES.get(i).map(|c| c.to_string()).unwrap_or_else(|| format!("CUR{i}")))
        .collect()
}

impl Generated {
    /// Build the in-memory graph over the full `[t0, t2)` horizon.
    pub fn graph(&self, cfg: &GenConfig) -> Result<TemporalGraph> {
        TemporalGraph::from_parts(
            cfg.n,
            self.transfers.clone(),
            self.node_series.clone(),
            currency_table(cfg.currencies),
            cfg.t0,
            cfg.t2 - 1,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSummary {
    pub edges: usize,
    pub observed_events: usize,
    pub future_edges: usize,
    pub node_events: usize,
    pub oracle_rows: usize,
    pub credit_positive_rate: f64,
}

struct Latents {
    community: Vec<u32>,
    sociability: Vec<f64>,
    activity: Vec<f64>,
}

fn draw_latents(cfg: &GenConfig) -> Latents {
    let n = cfg.n as usize;
    let mut community = Vec::with_capacity(n);
    let mut sociability = Vec::with_capacity(n);
    let mut activity = Vec::with_capacity(n);
    for i in 0..cfg.n as u64 {
        let c = rng::mix64(rng::stream_key(cfg.seed, domain::COMMUNITY, i, 0))
            % cfg.communities as u64;
        community.push(c as u32);
        let su = rng::unit_from_key(rng::stream_key(cfg.seed, domain::SOCIABILITY, i, 0));
        sociability.push(0.2 + 0.8 * su);
        let au = rng::unit_from_key(rng::stream_key(cfg.seed, domain::ACTIVITY, i, 0));
        // log-uniform over [0.3, 3.0)
        activity.push((0.3f64.ln() + au * 10.0f64.ln()).exp());
    }
    Latents { community, sociability, activity }
}

fn poisson(r: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let limit = (-mean).exp();
    let mut k = 0u32;
    let mut p = 1.0f64;
    loop {
        p *= r.gen_range(0.0..1.0);
        if p <= limit || k >= 10_000 {
            return k;
        }
        k += 1;
    }
}

fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - r.gen_range(0.0..1.0);
    let u2: f64 = r.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn amount(r: &mut ChaCha8Rng, mu: f64, sigma: f64) -> i64 {
    let minor = (mu + sigma * gaussian(r)).exp() * 100.0;
    (minor.round() as i64).max(1)
}

fn currency(r: &mut ChaCha8Rng, dominant: u16, count: u16) -> u16 {
    if count == 1 || r.gen_range(0.0..1.0) < DOMINANT_CURRENCY_SHARE {
        dominant
    } else {
        r.gen_range(0..count)
    }
}

/// Hazard of a future link given the latent pair state, the realized
/// observed event count (0 when the pair has no observed edge), and the
/// common-neighbor count in the observed graph. Only pairs within two hops
/// carry the base term, so future links never form outside the population
/// the negative sampler can reach.
fn hazard(cfg: &GenConfig, lat: &Latents, u: u32, v: u32, observed_events: u32, cn: u32) -> f64 {
    let mut h = 0.0;
    let linked = observed_events > 0 || cn > 0;
    if linked && lat.community[u as usize] == lat.community[v as usize] {
        h += FUTURE_BASE
            * lat.sociability[u as usize]
            * lat.sociability[v as usize]
            * (1.0 + CLOSURE_BOOST * cn as f64);
    }
    if observed_events > 0 {
        h += FUTURE_EDGE_BOOST
            + cfg.signal_strength * SERIES_COUPLING * (observed_events - 1) as f64;
    }
    h
}

fn future_prob(
    cfg: &GenConfig,
    lat: &Latents,
    u: u32,
    v: u32,
    observed_events: u32,
    cn: u32,
) -> f64 {
    1.0 - (-hazard(cfg, lat, u, v, observed_events, cn)).exp()
}

fn draw_observed_edges(cfg: &GenConfig, lat: &Latents) -> BTreeSet<(u32, u32)> {
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); cfg.communities as usize];
    for i in 0..cfg.n {
        members[lat.community[i as usize] as usize].push(i);
    }
    let mut edges = BTreeSet::new();
    for group in &members {
        for (a, &u) in group.iter().enumerate() {
            for &v in &group[a + 1..] {
                let p = cfg.intra_affinity
                    * lat.sociability[u as usize]
                    * lat.sociability[v as usize];
                let key = rng::stream_key(cfg.seed, domain::PAIR_EDGE, u as u64, v as u64);
                if rng::unit_from_key(key) < p {
                    edges.insert((u, v));
                }
            }
        }
    }
    let candidates = (cfg.n as f64 * cfg.inter_candidates).round() as u64;
    for j in 0..candidates {
        let mut r = rng::stream(cfg.seed, domain::INTER_SAMPLE, j, 0);
        let u = r.gen_range(0..cfg.n);
        let v = r.gen_range(0..cfg.n);
        if u == v || lat.community[u as usize] == lat.community[v as usize] {
            continue;
        }
        let p = cfg.inter_affinity * lat.sociability[u as usize] * lat.sociability[v as usize];
        if r.gen_range(0.0..1.0) < p {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    edges
}

/// Observed transfer series for one edge. `signal_strength` gates how much
/// the series reveals about the latent pair state: at 0 the event count is
/// affinity-independent and timing is uniform; as it grows, the count scales
/// with a power of relative affinity and a rising share of events falls on a
/// regular grid.
fn draw_edge_series(cfg: &GenConfig, lat: &Latents, u: u32, v: u32) -> Vec<TransactionEvent> {
    let mut r = rng::stream(cfg.seed, domain::PAIR_SERIES, u as u64, v as u64);
    let affinity = lat.sociability[u as usize] * lat.sociability[v as usize];
    let extra = (cfg.event_rate - 1.0).max(0.0)
        * (affinity / MEAN_PAIR_SOCIABILITY).powf(cfg.signal_strength);
    let count = 1 + poisson(&mut r, extra);
    let regular_share = (0.5 * cfg.signal_strength * affinity).min(0.9);
    let span = (cfg.t1 - cfg.t0) as f64;
    let slot = span / count as f64;
    let dominant = r.gen_range(0..cfg.currencies);
    let mut events = Vec::with_capacity(count as usize);
    for i in 0..count {
        let pos = if r.gen_range(0.0..1.0) < regular_share {
            (i as f64 + 0.5) * slot + (r.gen_range(0.0..1.0) - 0.5) * slot * 0.5
        } else {
            r.gen_range(0.0..span)
        };
        let t = (cfg.t0 as f64 + pos).floor() as i64;
        events.push(TransactionEvent {
            timestamp: t.clamp(cfg.t0, cfg.t1 - 1),
            amount: amount(&mut r, cfg.amount_mu, cfg.amount_sigma),
            currency: currency(&mut r, dominant, cfg.currencies),
        });
    }
    events.sort_by_key(|e| (e.timestamp, e.amount, e.currency));
    events
}

fn draw_future_events(cfg: &GenConfig, u: u32, v: u32) -> Vec<TransactionEvent> {
    let mut r = rng::stream(cfg.seed, domain::FUTURE_EVENTS, u as u64, v as u64);
    let count = 1 + poisson(&mut r, FUTURE_EXTRA_EVENTS);
    let dominant = r.gen_range(0..cfg.currencies);
    let mut events = Vec::with_capacity(count as usize);
    for _ in 0..count {
        events.push(TransactionEvent {
            timestamp: r.gen_range(cfg.t1..cfg.t2),
            amount: amount(&mut r, cfg.amount_mu, cfg.amount_sigma),
            currency: currency(&mut r, dominant, cfg.currencies),
        });
    }
    events.sort_by_key(|e| (e.timestamp, e.amount, e.currency));
    events
}

fn draw_node_series(cfg: &GenConfig, lat: &Latents, i: u32) -> Vec<TransactionEvent> {
    let mut r = rng::stream(cfg.seed, domain::NODE_EVENTS, i as u64, 0);
    let act = lat.activity[i as usize];
    let mean = cfg.node_event_rate * act * (cfg.t1 - cfg.t0) as f64;
    let count = poisson(&mut r, mean);
    let mu = cfg.amount_mu + 0.3 * act.ln();
    let dominant = r.gen_range(0..cfg.currencies);
    let mut events = Vec::with_capacity(count as usize);
    for _ in 0..count {
        events.push(TransactionEvent {
            timestamp: r.gen_range(cfg.t0..cfg.t1),
            amount: amount(&mut r, mu, cfg.amount_sigma),
            currency: currency(&mut r, dominant, cfg.currencies),
        });
    }
    events.sort_by_key(|e| (e.timestamp, e.amount, e.currency));
    events
}

/// Normalized log-activity in roughly [-0.5, 0.5]; the risk score both
/// credit terms are built from.
fn risk_score(lat: &Latents, i: u32) -> f64 {
    lat.activity[i as usize].ln() / 10.0f64.ln()
}

/// Default labels: a node's own risk score plus the transfer-count-weighted
/// mean of its neighbors' scores. The neighbor term dominates, so structure-
/// aware scorers have headroom over per-node models, and the count weighting
/// means relationship strength (readable from the series) matters.
fn draw_credit(
    cfg: &GenConfig,
    lat: &Latents,
    edges: &BTreeSet<(u32, u32)>,
    observed_counts: &HashMap<(u32, u32), u32>,
) -> Vec<u8> {
    let n = cfg.n as usize;
    let mut weighted = vec![0.0f64; n];
    let mut weight = vec![0.0f64; n];
    for &(u, v) in edges {
        let w = observed_counts.get(&(u, v)).copied().unwrap_or(0) as f64;
        weighted[u as usize] += w * risk_score(lat, v);
        weighted[v as usize] += w * risk_score(lat, u);
        weight[u as usize] += w;
        weight[v as usize] += w;
    }
    let base = (cfg.default_rate / (1.0 - cfg.default_rate)).ln();
    (0..cfg.n)
        .map(|i| {
            let neighbor = if weight[i as usize] > 0.0 {
                weighted[i as usize] / weight[i as usize]
            } else {
                0.0
            };
            let logit = base
                + CREDIT_ACTIVITY_WEIGHT * risk_score(lat, i)
                + CREDIT_NEIGHBOR_WEIGHT * neighbor;
            let p = 1.0 / (1.0 + (-logit).exp());
            let key = rng::stream_key(cfg.seed, domain::CREDIT_LABEL, i as u64, 0);
            u8::from(rng::unit_from_key(key) < p)
        })
        .collect()
}

fn pack(u: u32, v: u32) -> u64 {
    ((u as u64) << 32) | v as u64
}

fn unpack(key: u64) -> (u32, u32) {
    ((key >> 32) as u32, key as u32)
}

/// All unordered pairs at hop distance one or two in the observed edge set,
/// each with its common-neighbor count. Wedge enumeration visits a pair once
/// per shared neighbor, so the run length of each key is exactly that count.
fn hop_two_pairs(n: u32, edges: &BTreeSet<(u32, u32)>) -> Vec<(u64, u32)> {
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n as usize];
    for &(u, v) in edges {
        adj[u as usize].push(v);
        adj[v as usize].push(u);
    }
    let mut wedges = Vec::new();
    for w in 0..n as usize {
        let around = &adj[w];
        for (a, &u) in around.iter().enumerate() {
            for &v in &around[a + 1..] {
                wedges.push(pack(u.min(v), u.max(v)));
            }
        }
    }
    wedges.sort_unstable();
    let mut pairs: Vec<(u64, u32)> = Vec::new();
    let mut i = 0;
    while i < wedges.len() {
        let mut j = i;
        while j < wedges.len() && wedges[j] == wedges[i] {
            j += 1;
        }
        pairs.push((wedges[i], (j - i) as u32));
        i = j;
    }
    // Direct edges with no shared neighbor are hop-1 pairs the wedge pass
    // misses; merge them in with a zero count.
    let wedge_count = pairs.len();
    for &(u, v) in edges {
        let key = pack(u, v);
        if pairs[..wedge_count].binary_search_by_key(&key, |&(k, _)| k).is_err() {
            pairs.push((key, 0));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Run the whole generative process for one config.
pub fn generate(cfg: &GenConfig) -> Result<Generated> {
    cfg.validate()?;
    let lat = draw_latents(cfg);
    let edges = draw_observed_edges(cfg, &lat);

    let mut transfers: BTreeMap<(u32, u32), Vec<TransactionEvent>> = BTreeMap::new();
    let mut observed_counts: HashMap<(u32, u32), u32> = HashMap::with_capacity(edges.len());
    for &(u, v) in &edges {
        let series = draw_edge_series(cfg, &lat, u, v);
        observed_counts.insert((u, v), series.len() as u32);
        transfers.insert((u, v), series);
    }

    let obs = |u: u32, v: u32| observed_counts.get(&(u, v)).copied().unwrap_or(0);

    // Future links form only inside the hop-two candidate population (new
    // relationships via shared counterparties, plus continuations of
    // observed edges). The same pass emits the exact probability table, so
    // the oracle covers every pair evaluation can possibly sample.
    let candidates = hop_two_pairs(cfg.n, &edges);
    let mut future_pairs = BTreeSet::new();
    let mut oracle = Vec::with_capacity(candidates.len());
    for &(key, cn) in &candidates {
        let (u, v) = unpack(key);
        let p = future_prob(cfg, &lat, u, v, obs(u, v), cn);
        oracle.push((u, v, p));
        if p > 0.0 {
            let draw = rng::stream_key(cfg.seed, domain::PAIR_FUTURE, u as u64, v as u64);
            if rng::unit_from_key(draw) < p {
                future_pairs.insert((u, v));
            }
        }
    }
    for &(u, v) in &future_pairs {
        let events = draw_future_events(cfg, u, v);
        transfers.entry((u, v)).or_default().extend(events);
    }

    let node_series = (0..cfg.n).map(|i| draw_node_series(cfg, &lat, i)).collect();
    let credit = draw_credit(cfg, &lat, &edges, &observed_counts);

    Ok(Generated {
        node_series,
        transfers,
        future_pairs,
        oracle,
        credit,
        community: lat.community,
    })
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    let name = path.display().to_string();
    Ok(BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(&name, e))?,
    ))
}

fn finish(path: &Path, mut w: BufWriter<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(&path.display().to_string(), e))
}

/// Serialize a generation run into the dataset directory layout:
/// `nodes.csv`, `transfers.csv`, `header.cfg`, `oracle.csv`,
/// `credit_labels.csv`.
pub fn write_dataset(g: &Generated, cfg: &GenConfig, dir: &Path) -> Result<GenSummary> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(&dir.display().to_string(), e))?;
    let io_err = |path: &Path| {
        let name = path.display().to_string();
        move |e: std::io::Error| Error::io(&name, e)
    };

    let codes = currency_table(cfg.currencies);

    let path = dir.join("nodes.csv");
    let mut w = create(&path)?;
    let mut node_events = 0usize;
    for (i, series) in g.node_series.iter().enumerate() {
        node_events += series.len();
        for ev in series {
            writeln!(w, "{i},{},{},{}", ev.timestamp, ev.amount, codes[ev.currency as usize])
                .map_err(io_err(&path))?;
        }
    }
    finish(&path, w)?;

    let path = dir.join("transfers.csv");
    let mut w = create(&path)?;
    let mut observed_events = 0usize;
    for (&(u, v), series) in &g.transfers {
        for ev in series {
            if ev.timestamp < cfg.t1 {
                observed_events += 1;
            }
            writeln!(
                w,
                "{u},{v},{},{},{}",
                ev.timestamp, ev.amount, codes[ev.currency as usize]
            )
            .map_err(io_err(&path))?;
        }
    }
    finish(&path, w)?;

    let header = DatasetHeader {
        n: cfg.n,
        currencies: codes,
        t_min: cfg.t0,
        t_max: cfg.t2 - 1,
    };
    header.save(&dir.join("header.cfg"))?;

    let path = dir.join("oracle.csv");
    let mut w = create(&path)?;
    for &(u, v, p) in &g.oracle {
        writeln!(w, "{u},{v},{p:.9}").map_err(io_err(&path))?;
    }
    finish(&path, w)?;

    let path = dir.join("credit_labels.csv");
    let mut w = create(&path)?;
    let mut positives = 0usize;
    for (i, &label) in g.credit.iter().enumerate() {
        positives += label as usize;
        writeln!(w, "{i},{label}").map_err(io_err(&path))?;
    }
    finish(&path, w)?;

    let edges = g
        .transfers
        .iter()
        .filter(|(_, s)| s.iter().any(|e| e.timestamp < cfg.t1))
        .count();
    Ok(GenSummary {
        edges,
        observed_events,
        future_edges: g.future_pairs.len(),
        node_events,
        oracle_rows: g.oracle.len(),
        credit_positive_rate: positives as f64 / g.credit.len().max(1) as f64,
    })
}

/// Read the score table back: sorted `(u, v, probability)` rows.
pub fn load_oracle(path: &Path) -> Result<Vec<(u32, u32, f64)>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let mut field = |what: &str| {
            it.next().ok_or_else(|| {
                Error::MalformedRow {
                    path: name.clone(),
                    line: idx + 1,
                    msg: format!("missing {what}"),
                }
            })
        };
        let u: u32 = field("u")?.trim().parse().map_err(|_| Error::MalformedRow {
            path: name.clone(),
            line: idx + 1,
            msg: "bad u".into(),
        })?;
        let v: u32 = field("v")?.trim().parse().map_err(|_| Error::MalformedRow {
            path: name.clone(),
            line: idx + 1,
            msg: "bad v".into(),
        })?;
        let p: f64 = field("probability")?.trim().parse().map_err(|_| {
            Error::MalformedRow { path: name.clone(), line: idx + 1, msg: "bad probability".into() }
        })?;
        out.push((u, v, p));
    }
    Ok(out)
}

/// Read `credit_labels.csv` back as one label per node id.
pub fn load_credit_labels(path: &Path) -> Result<Vec<u8>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::MalformedRow {
            path: name.clone(),
            line: idx + 1,
            msg: msg.into(),
        };
        let (node, label) = line.split_once(',').ok_or_else(|| bad("missing comma"))?;
        let node: usize = node.trim().parse().map_err(|_| bad("bad node id"))?;
        let label: u8 = label.trim().parse().map_err(|_| bad("bad label"))?;
        if label > 1 {
            return Err(bad(&format!("label must be 0 or 1, got {label}")));
        }
        if node != rows.len() {
            return Err(bad(&format!("expected node {}, got {node}", rows.len())));
        }
        rows.push(label);
    }
    Ok(rows)
}
