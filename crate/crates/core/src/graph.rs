//! Temporal transaction graph storage.
//!
//! The graph is immutable after load: an undirected CSR adjacency where each
//! edge carries a time series of transfer events and each node carries a time
//! series of purchase events. Window-restricted views mark edges active
//! without copying anything.

use crate::config::KvConfig;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// One purchase or transfer record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransactionEvent {
    /// Seconds since epoch.
    pub timestamp: i64,
    /// Minor currency units, strictly positive.
    pub amount: i64,
    /// Index into the dataset's currency table.
    pub currency: u16,
}

/// Half-open observation interval [start, end).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: i64,
    pub end: i64,
}

impl Window {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidWindow(start, end));
        }
        Ok(Self { start, end })
    }

    #[inline]
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Immutable temporal graph over `n` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraph {
    n: u32,
    /// Canonical (min, max) endpoint pairs, sorted ascending; index = edge id.
    edges: Vec<(u32, u32)>,
    csr_offsets: Vec<usize>,
    csr_targets: Vec<u32>,
    /// Edge id for each adjacency slot.
    csr_edge_ids: Vec<u32>,
    node_series: Vec<Vec<TransactionEvent>>,
    edge_series: Vec<Vec<TransactionEvent>>,
    currencies: Vec<String>,
    t_min: i64,
    t_max: i64,
}

impl TemporalGraph {
    /// Assemble a graph from per-pair event series. Series get sorted by
    /// timestamp; pairs must already be canonical (u < v) and unique.
    pub fn from_parts(
        n: u32,
        pair_series: BTreeMap<(u32, u32), Vec<TransactionEvent>>,
        mut node_series: Vec<Vec<TransactionEvent>>,
        currencies: Vec<String>,
        t_min: i64,
        t_max: i64,
    ) -> Result<Self> {
        if t_min > t_max {
            return Err(Error::InvalidData(format!("t_min {t_min} > t_max {t_max}")));
        }
        node_series.resize(n as usize, Vec::new());
        let mut edges = Vec::with_capacity(pair_series.len());
        let mut edge_series = Vec::with_capacity(pair_series.len());
        for ((u, v), mut series) in pair_series {
            if u == v {
                return Err(Error::InvalidData(format!("self-loop on node {u}")));
            }
            if v >= n {
                return Err(Error::NodeOutOfRange(v, n));
            }
            if series.is_empty() {
                return Err(Error::InvalidData(format!("edge ({u},{v}) has no events")));
            }
            series.sort_by_key(|e| e.timestamp);
            edges.push((u, v));
            edge_series.push(series);
        }
        for series in node_series.iter_mut() {
            series.sort_by_key(|e| e.timestamp);
        }

        // Degree counting pass, then fill, then per-node sort by target.
        let mut offsets = vec![0usize; n as usize + 1];
        for &(u, v) in &edges {
            offsets[u as usize + 1] += 1;
            offsets[v as usize + 1] += 1;
        }
        for i in 0..n as usize {
            offsets[i + 1] += offsets[i];
        }
        let total = offsets[n as usize];
        let mut targets = vec![0u32; total];
        let mut edge_ids = vec![0u32; total];
        let mut cursor = offsets.clone();
        for (eid, &(u, v)) in edges.iter().enumerate() {
            let cu = cursor[u as usize];
            targets[cu] = v;
            edge_ids[cu] = eid as u32;
            cursor[u as usize] += 1;
            let cv = cursor[v as usize];
            targets[cv] = u;
            edge_ids[cv] = eid as u32;
            cursor[v as usize] += 1;
        }
        for i in 0..n as usize {
            let lo = offsets[i];
            let hi = offsets[i + 1];
            let mut slice: Vec<(u32, u32)> = targets[lo..hi]
                .iter()
                .copied()
                .zip(edge_ids[lo..hi].iter().copied())
                .collect();
            slice.sort_unstable();
            for (k, (t, e)) in slice.into_iter().enumerate() {
                targets[lo + k] = t;
                edge_ids[lo + k] = e;
            }
        }

        Ok(Self {
            n,
            edges,
            csr_offsets: offsets,
            csr_targets: targets,
            csr_edge_ids: edge_ids,
            node_series,
            edge_series,
            currencies,
            t_min,
            t_max,
        })
    }

    pub fn node_count(&self) -> u32 {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn currencies(&self) -> &[String] {
        &self.currencies
    }

    pub fn time_span(&self) -> (i64, i64) {
        (self.t_min, self.t_max)
    }

    pub fn edge_endpoints(&self, edge: usize) -> (u32, u32) {
        self.edges[edge]
    }

    pub fn edge_series(&self, edge: usize) -> &[TransactionEvent] {
        &self.edge_series[edge]
    }

    pub fn node_series(&self, node: u32) -> &[TransactionEvent] {
        &self.node_series[node as usize]
    }

    /// All neighbors over the full time span, with edge ids.
    pub fn adjacency(&self, node: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        let lo = self.csr_offsets[node as usize];
        let hi = self.csr_offsets[node as usize + 1];
        self.csr_targets[lo..hi]
            .iter()
            .copied()
            .zip(self.csr_edge_ids[lo..hi].iter().copied())
    }

    /// Edge id between u and v, if one exists.
    pub fn edge_between(&self, u: u32, v: u32) -> Option<u32> {
        let lo = self.csr_offsets[u as usize];
        let hi = self.csr_offsets[u as usize + 1];
        let slice = &self.csr_targets[lo..hi];
        slice
            .binary_search(&v)
            .ok()
            .map(|pos| self.csr_edge_ids[lo + pos])
    }

    /// True if the edge has at least one event inside the window.
    pub fn edge_active_in(&self, edge: usize, window: Window) -> bool {
        let series = &self.edge_series[edge];
        let idx = series.partition_point(|e| e.timestamp < window.start);
        idx < series.len() && series[idx].timestamp < window.end
    }

    /// Number of the edge's events inside the window.
    pub fn edge_events_in(&self, edge: usize, window: Window) -> usize {
        let series = &self.edge_series[edge];
        let lo = series.partition_point(|e| e.timestamp < window.start);
        let hi = series.partition_point(|e| e.timestamp < window.end);
        hi - lo
    }

    pub fn check_window(&self, window: Window) -> Result<()> {
        if window.is_empty() {
            return Err(Error::InvalidWindow(window.start, window.end));
        }
        if window.start < self.t_min || window.end > self.t_max + 1 {
            return Err(Error::InvalidWindow(window.start, window.end));
        }
        Ok(())
    }

    /// Build a view restricted to the window.
    pub fn restrict(&self, window: Window) -> Result<GraphView<'_>> {
        self.check_window(window)?;
        let edge_active = (0..self.edges.len())
            .map(|e| self.edge_active_in(e, window))
            .collect();
        Ok(GraphView { base: self, window, edge_active })
    }
}

/// Window-restricted adjacency over a shared [`TemporalGraph`].
#[derive(Debug, Clone)]
pub struct GraphView<'g> {
    base: &'g TemporalGraph,
    window: Window,
    edge_active: Vec<bool>,
}

impl<'g> GraphView<'g> {
    pub fn base(&self) -> &'g TemporalGraph {
        self.base
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn node_count(&self) -> u32 {
        self.base.n
    }

    pub fn edge_is_active(&self, edge: u32) -> bool {
        self.edge_active[edge as usize]
    }

    pub fn active_edge_count(&self) -> usize {
        self.edge_active.iter().filter(|&&a| a).count()
    }

    fn check_node(&self, node: u32) -> Result<()> {
        if node >= self.base.n {
            return Err(Error::NodeOutOfRange(node, self.base.n));
        }
        Ok(())
    }

    /// Active neighbors in ascending id order, with edge ids.
    pub fn neighbors_with_edges(
        &self,
        node: u32,
    ) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.base
            .adjacency(node)
            .filter(move |&(_, e)| self.edge_active[e as usize])
    }

    /// Active neighbor ids, ascending.
    pub fn neighbors(&self, node: u32) -> Result<Vec<u32>> {
        self.check_node(node)?;
        Ok(self.neighbors_with_edges(node).map(|(v, _)| v).collect())
    }

    pub fn degree(&self, node: u32) -> Result<usize> {
        self.check_node(node)?;
        Ok(self.neighbors_with_edges(node).count())
    }

    /// Active edge id between u and v.
    pub fn edge_between(&self, u: u32, v: u32) -> Option<u32> {
        self.base
            .edge_between(u, v)
            .filter(|&e| self.edge_active[e as usize])
    }

    /// Events of the (u, v) edge series inside this view's window; empty when
    /// there is no active edge.
    pub fn edge_events(&self, u: u32, v: u32) -> &[TransactionEvent] {
        match self.edge_between(u, v) {
            None => &[],
            Some(e) => {
                let series = self.base.edge_series(e as usize);
                let lo = series.partition_point(|ev| ev.timestamp < self.window.start);
                let hi = series.partition_point(|ev| ev.timestamp < self.window.end);
                &series[lo..hi]
            }
        }
    }

    /// Node purchase events inside this view's window.
    pub fn node_events(&self, node: u32) -> &[TransactionEvent] {
        let series = self.base.node_series(node);
        let lo = series.partition_point(|ev| ev.timestamp < self.window.start);
        let hi = series.partition_point(|ev| ev.timestamp < self.window.end);
        &series[lo..hi]
    }
}

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

/// Dataset header: node count, currency table, declared time span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHeader {
    pub n: u32,
    pub currencies: Vec<String>,
    pub t_min: i64,
    pub t_max: i64,
}

impl DatasetHeader {
    pub fn load(path: &Path) -> Result<Self> {
        let kv = KvConfig::load(path)?;
        let n = kv.get_u64("n", 0)? as u32;
        let currencies: Vec<String> = kv
            .get("currencies")
            .ok_or_else(|| Error::InvalidData("header missing currencies=".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let t_min = kv.get_i64("t_min", 0)?;
        let t_max = kv.get_i64("t_max", 0)?;
        if n == 0 {
            return Err(Error::InvalidData("header n must be positive".into()));
        }
        if currencies.is_empty() {
            return Err(Error::InvalidData("header currency list empty".into()));
        }
        Ok(Self { n, currencies, t_min, t_max })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut kv = KvConfig::new();
        kv.set("n", self.n);
        kv.set("currencies", self.currencies.join(","));
        kv.set("t_min", self.t_min);
        kv.set("t_max", self.t_max);
        kv.save(path)
    }

    fn currency_index(&self, code: &str) -> Option<u16> {
        self.currencies.iter().position(|c| c == code).map(|i| i as u16)
    }
}

struct RowReader<'a> {
    path: &'a str,
    line: usize,
}

impl<'a> RowReader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::MalformedRow { path: self.path.to_string(), line: self.line, msg: msg.into() }
    }

    fn parse_fields<'b>(&self, line: &'b str, want: usize) -> Result<Vec<&'b str>> {
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != want {
            return Err(self.err(format!("expected {want} fields, got {}", fields.len())));
        }
        Ok(fields)
    }

    fn parse_num<T: std::str::FromStr>(&self, field: &str, name: &str) -> Result<T> {
        field
            .parse::<T>()
            .map_err(|_| self.err(format!("bad {name}: {field:?}")))
    }

    fn event(
        &self,
        header: &DatasetHeader,
        ts: &str,
        amount: &str,
        currency: &str,
    ) -> Result<TransactionEvent> {
        let timestamp: i64 = self.parse_num(ts, "timestamp")?;
        let amount: i64 = self.parse_num(amount, "amount")?;
        if amount <= 0 {
            return Err(self.err(format!("amount must be positive, got {amount}")));
        }
        if timestamp < header.t_min || timestamp > header.t_max {
            return Err(self.err(format!(
                "timestamp {timestamp} outside declared span [{}, {}]",
                header.t_min, header.t_max
            )));
        }
        let currency = header
            .currency_index(currency)
            .ok_or_else(|| self.err(format!("unknown currency {currency:?}")))?;
        Ok(TransactionEvent { timestamp, amount, currency })
    }
}

/// Load a dataset from its three files.
///
/// nodes CSV: `node_id,timestamp,amount,currency` (one purchase per row).
/// transfers CSV: `src_id,dst_id,timestamp,amount,currency`.
/// Duplicate and reversed (u,v) rows merge into one undirected edge series.
pub fn load_dataset(
    nodes_path: &Path,
    transfers_path: &Path,
    header_path: &Path,
) -> Result<TemporalGraph> {
    let header = DatasetHeader::load(header_path)?;

    let nodes_name = nodes_path.display().to_string();
    let file = std::fs::File::open(nodes_path).map_err(|e| Error::io(&nodes_name, e))?;
    let mut node_series: Vec<Vec<TransactionEvent>> = vec![Vec::new(); header.n as usize];
    let mut reader = RowReader { path: &nodes_name, line: 0 };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        reader.line = idx + 1;
        let line = line.map_err(|e| Error::io(&nodes_name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f = reader.parse_fields(&line, 4)?;
        let id: u32 = reader.parse_num(f[0], "node id")?;
        if id >= header.n {
            return Err(reader.err(format!("node id {id} >= n {}", header.n)));
        }
        let ev = reader.event(&header, f[1], f[2], f[3])?;
        node_series[id as usize].push(ev);
    }

    let transfers_name = transfers_path.display().to_string();
    let file =
        std::fs::File::open(transfers_path).map_err(|e| Error::io(&transfers_name, e))?;
    let mut pair_series: BTreeMap<(u32, u32), Vec<TransactionEvent>> = BTreeMap::new();
    let mut reader = RowReader { path: &transfers_name, line: 0 };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        reader.line = idx + 1;
        let line = line.map_err(|e| Error::io(&transfers_name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f = reader.parse_fields(&line, 5)?;
        let src: u32 = reader.parse_num(f[0], "src id")?;
        let dst: u32 = reader.parse_num(f[1], "dst id")?;
        if src >= header.n || dst >= header.n {
            return Err(reader.err(format!(
                "endpoint out of range: ({src},{dst}) with n {}",
                header.n
            )));
        }
        if src == dst {
            return Err(reader.err(format!("self transfer on node {src}")));
        }
        let ev = reader.event(&header, f[2], f[3], f[4])?;
        let key = (src.min(dst), src.max(dst));
        pair_series.entry(key).or_default().push(ev);
    }

    TemporalGraph::from_parts(
        header.n,
        pair_series,
        node_series,
        header.currencies,
        header.t_min,
        header.t_max,
    )
}

// ---------------------------------------------------------------------------
// Binary cache
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 8] = b"TLGR0001";

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_i64(w: &mut impl Write, v: i64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_i64(r: &mut impl Read) -> std::io::Result<i64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(i64::from_le_bytes(buf))
}

fn write_series(w: &mut impl Write, series: &[TransactionEvent]) -> std::io::Result<()> {
    write_u64(w, series.len() as u64)?;
    for ev in series {
        write_i64(w, ev.timestamp)?;
        write_i64(w, ev.amount)?;
        write_u64(w, ev.currency as u64)?;
    }
    Ok(())
}

fn read_series(r: &mut impl Read) -> std::io::Result<Vec<TransactionEvent>> {
    let len = read_u64(r)? as usize;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let timestamp = read_i64(r)?;
        let amount = read_i64(r)?;
        let currency = read_u64(r)? as u16;
        out.push(TransactionEvent { timestamp, amount, currency });
    }
    Ok(out)
}

impl TemporalGraph {
    /// Write the binary cache; `load_cache` restores an identical graph.
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let name = path.display().to_string();
        let file = std::fs::File::create(path).map_err(|e| Error::io(&name, e))?;
        let mut w = BufWriter::new(file);
        let mut go = || -> std::io::Result<()> {
            w.write_all(CACHE_MAGIC)?;
            write_u64(&mut w, self.n as u64)?;
            write_i64(&mut w, self.t_min)?;
            write_i64(&mut w, self.t_max)?;
            write_u64(&mut w, self.currencies.len() as u64)?;
            for c in &self.currencies {
                write_u64(&mut w, c.len() as u64)?;
                w.write_all(c.as_bytes())?;
            }
            write_u64(&mut w, self.edges.len() as u64)?;
            for (eid, &(u, v)) in self.edges.iter().enumerate() {
                write_u64(&mut w, u as u64)?;
                write_u64(&mut w, v as u64)?;
                write_series(&mut w, &self.edge_series[eid])?;
            }
            for series in &self.node_series {
                write_series(&mut w, series)?;
            }
            w.flush()
        };
        go().map_err(|e| Error::io(&name, e))
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(&name, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(&name, e))?;
        if &magic != CACHE_MAGIC {
            return Err(Error::InvalidData(format!(
                "{name}: not a graph cache (bad magic)"
            )));
        }
        let go = |r: &mut BufReader<std::fs::File>| -> std::io::Result<TemporalGraph> {
            let n = read_u64(r)? as u32;
            let t_min = read_i64(r)?;
            let t_max = read_i64(r)?;
            let ncur = read_u64(r)? as usize;
            let mut currencies = Vec::with_capacity(ncur);
            for _ in 0..ncur {
                let len = read_u64(r)? as usize;
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf)?;
                currencies.push(String::from_utf8_lossy(&buf).into_owned());
            }
            let ne = read_u64(r)? as usize;
            let mut pair_series = BTreeMap::new();
            for _ in 0..ne {
                let u = read_u64(r)? as u32;
                let v = read_u64(r)? as u32;
                pair_series.insert((u, v), read_series(r)?);
            }
            let mut node_series = Vec::with_capacity(n as usize);
            for _ in 0..n {
                node_series.push(read_series(r)?);
            }
            Ok(
                TemporalGraph::from_parts(n, pair_series, node_series, currencies, t_min, t_max)
                    .expect("cache invariants hold"),
            )
        };
        go(&mut r).map_err(|e| Error::io(&name, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(timestamp: i64, amount: i64) -> TransactionEvent {
        TransactionEvent { timestamp, amount, currency: 0 }
    }

    pub(crate) fn graph_from_edges(
        n: u32,
        edges: &[(u32, u32, &[i64])],
    ) -> TemporalGraph {
        let mut pairs = BTreeMap::new();
        let mut t_max = 0;
        for &(u, v, times) in edges {
            let series: Vec<_> = times.iter().map(|&t| ev(t, 100)).collect();
            t_max = t_max.max(times.iter().copied().max().unwrap_or(0));
            pairs.insert((u.min(v), u.max(v)), series);
        }
        TemporalGraph::from_parts(n, pairs, vec![], vec!["EUR".into()], 0, t_max.max(100))
            .unwrap()
    }

    fn write_dataset(dir: &Path, nodes: &str, transfers: &str, header: &str) {
        std::fs::write(dir.join("nodes.csv"), nodes).unwrap();
        std::fs::write(dir.join("transfers.csv"), transfers).unwrap();
        std::fs::write(dir.join("header.cfg"), header).unwrap();
    }

    fn load(dir: &Path) -> Result<TemporalGraph> {
        load_dataset(
            &dir.join("nodes.csv"),
            &dir.join("transfers.csv"),
            &dir.join("header.cfg"),
        )
    }

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("templink_graph_{tag}_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    const HEADER: &str = "n=3\ncurrencies=EUR,USD\nt_min=0\nt_max=100\n";

    #[test]
    fn reversed_rows_merge_into_one_edge() {
        let dir = tmpdir("merge");
        write_dataset(&dir, "", "0,1,10,5,EUR\n1,0,20,3,EUR\n", HEADER);
        let g = load(&dir).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge_series(0).len(), 2);
        assert_eq!(g.edge_series(0)[0].timestamp, 10);
    }

    #[test]
    fn empty_transfers_gives_edgeless_graph() {
        let dir = tmpdir("empty");
        write_dataset(&dir, "", "", HEADER);
        let g = load(&dir).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn duplicate_direction_rows_merge() {
        let dir = tmpdir("dup");
        write_dataset(&dir, "", "0,1,10,5,EUR\n0,1,30,7,USD\n", HEADER);
        let g = load(&dir).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge_series(0).len(), 2);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tmpdir("badrow");
        write_dataset(&dir, "", "0,1,10,5,EUR\n0,2,oops,5,EUR\n", HEADER);
        let err = load(&dir).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn rejects_zero_amount_and_out_of_span_and_self_loop() {
        let dir = tmpdir("invalid");
        write_dataset(&dir, "", "0,1,10,0,EUR\n", HEADER);
        assert!(load(&dir).is_err());
        write_dataset(&dir, "", "0,1,400,5,EUR\n", HEADER);
        assert!(load(&dir).is_err());
        write_dataset(&dir, "", "1,1,10,5,EUR\n", HEADER);
        assert!(load(&dir).is_err());
        write_dataset(&dir, "", "0,7,10,5,EUR\n", HEADER);
        assert!(load(&dir).is_err());
        write_dataset(&dir, "0,10,5,XXX\n", "", HEADER);
        assert!(load(&dir).is_err());
    }

    #[test]
    fn restrict_marks_edges_by_window() {
        let g = graph_from_edges(3, &[(0, 1, &[5]), (1, 2, &[5, 15])]);
        let view = g.restrict(Window::new(10, 20).unwrap()).unwrap();
        assert!(!view.edge_is_active(0));
        assert!(view.edge_is_active(1));
        let full = g.restrict(Window::new(0, 101).unwrap()).unwrap();
        assert_eq!(full.active_edge_count(), 2);
    }

    #[test]
    fn restrict_rejects_bad_windows() {
        let g = graph_from_edges(2, &[(0, 1, &[5])]);
        assert!(Window::new(20, 10).is_err());
        assert!(Window::new(10, 10).is_err());
        assert!(g.restrict(Window { start: -5, end: 10 }).is_err());
        assert!(g.restrict(Window { start: 0, end: 5000 }).is_err());
    }

    #[test]
    fn neighbors_and_degree() {
        // triangle 0-1-2 plus isolated 3; edge (0,1) only at t=5
        let g = graph_from_edges(4, &[(0, 1, &[5]), (1, 2, &[50]), (0, 2, &[50])]);
        let full = g.restrict(Window::new(0, 101).unwrap()).unwrap();
        assert_eq!(full.neighbors(0).unwrap(), vec![1, 2]);
        assert_eq!(full.degree(1).unwrap(), 2);
        assert_eq!(full.neighbors(3).unwrap(), Vec::<u32>::new());
        assert_eq!(full.degree(3).unwrap(), 0);
        assert!(full.neighbors(9).is_err());

        let late = g.restrict(Window::new(10, 101).unwrap()).unwrap();
        // node 0's edge to 1 is outside the window now
        assert_eq!(late.neighbors(0).unwrap(), vec![2]);
        assert_eq!(late.degree(0).unwrap(), 1);
    }

    #[test]
    fn neighbor_symmetry_and_window_monotonicity() {
        let g = graph_from_edges(
            5,
            &[(0, 1, &[5, 40]), (1, 2, &[50]), (2, 3, &[70]), (0, 4, &[90])],
        );
        let wide = g.restrict(Window::new(0, 101).unwrap()).unwrap();
        let narrow = g.restrict(Window::new(30, 60).unwrap()).unwrap();
        for u in 0..5u32 {
            for v in wide.neighbors(u).unwrap() {
                assert!(wide.neighbors(v).unwrap().contains(&u));
            }
            // narrowing never adds neighbors
            for v in narrow.neighbors(u).unwrap() {
                assert!(wide.neighbors(u).unwrap().contains(&v));
            }
        }
    }

    #[test]
    fn cache_roundtrip_is_exact() {
        let dir = tmpdir("cache");
        write_dataset(
            &dir,
            "0,10,5,EUR\n0,20,9,USD\n2,15,4,EUR\n",
            "0,1,10,5,EUR\n1,0,20,3,USD\n1,2,30,8,EUR\n",
            HEADER,
        );
        let g = load(&dir).unwrap();
        let cache = dir.join("graph.bin");
        g.save_cache(&cache).unwrap();
        let g2 = TemporalGraph::load_cache(&cache).unwrap();
        assert_eq!(g, g2);
        // serialize again: byte-identical files
        let cache2 = dir.join("graph2.bin");
        g2.save_cache(&cache2).unwrap();
        assert_eq!(std::fs::read(&cache).unwrap(), std::fs::read(&cache2).unwrap());
    }
}
