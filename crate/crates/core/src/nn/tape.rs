//! Reverse-mode autodiff over dense f64 matrices.
//!
//! A `Tape` is an append-only arena of nodes; creation order is topological
//! order, so backward is a single reverse sweep. Every op fixes its float
//! summation order by index, which keeps results bit-identical across runs
//! and thread counts.

use crate::error::{Error, Result};
use std::rc::Rc;

/// Local-subgraph adjacency in the form the aggregation op consumes:
/// per-node neighbor lists sorted by the neighbors' *global* ids, so the
/// summation order does not depend on how local indices were assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub lists: Vec<Vec<u32>>,
    /// Per-slot weights parallel to `lists`; `None` means unweighted.
    pub weights: Option<Vec<Vec<f64>>>,
}

impl Adjacency {
    pub fn new(lists: Vec<Vec<u32>>, weights: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let n = lists.len();
        for (i, list) in lists.iter().enumerate() {
            for &j in list {
                if j as usize >= n {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency references node {j} in a {n}-node subgraph"
                    )));
                }
                if !lists[j as usize].contains(&(i as u32)) {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if let Some(w) = &weights {
            if w.len() != n || w.iter().zip(&lists).any(|(wi, li)| wi.len() != li.len()) {
                return Err(Error::InvalidArgument(
                    "weight count does not match edge count".into(),
                ));
            }
            for wi in w {
                for &x in wi {
                    if !(0.0..=1.0).contains(&x) {
                        return Err(Error::InvalidArgument(format!(
                            "edge weight {x} outside [0,1]"
                        )));
                    }
                }
            }
        }
        Ok(Self { lists, weights })
    }

    pub fn unweighted(lists: Vec<Vec<u32>>) -> Result<Self> {
        Self::new(lists, None)
    }

    pub fn n(&self) -> usize {
        self.lists.len()
    }

    #[inline]
    fn weight(&self, i: usize, slot: usize) -> f64 {
        match &self.weights {
            None => 1.0,
            Some(w) => w[i][slot],
        }
    }
}

pub type VarId = usize;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(VarId, VarId),
    Add(VarId, VarId),
    Sub(VarId, VarId),
    MulElem(VarId, VarId),
    Scale(VarId, f64),
    AddBias(VarId, VarId),
    Sigmoid(VarId),
    Tanh(VarId),
    Relu(VarId),
    ConcatCols(VarId, VarId),
    SliceCols(VarId, usize),
    GatherRows(VarId, Vec<usize>),
    Reshape(VarId),
    NeighborMeanAgg(VarId, Rc<Adjacency>),
    /// Stores the full descending row order; only the first `out_rows` rows
    /// of the permutation were emitted.
    SortPool(VarId, Vec<usize>),
    Conv1d { x: VarId, kernel: VarId, bias: VarId, stride: usize },
    /// Per-row index of the (first) maximum column.
    MaxCols(VarId, Vec<usize>),
    SumAll(VarId),
    BceWithLogits(VarId, f64),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op) -> VarId {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value entering the tape"
        );
        self.nodes.push(Node { rows, cols, data, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> VarId {
        self.push(rows, cols, data, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> VarId {
        self.leaf(1, 1, vec![v])
    }

    pub fn value(&self, v: VarId) -> &[f64] {
        &self.nodes[v].data
    }

    pub fn shape(&self, v: VarId) -> (usize, usize) {
        (self.nodes[v].rows, self.nodes[v].cols)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        let (av, bv) = (&self.nodes[a].data, &self.nodes[b].data);
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += x * brow[j];
                }
            }
        }
        self.push(m, n, out, Op::MatMul(a, b))
    }

    fn zip_elem(&mut self, a: VarId, b: VarId, f: impl Fn(f64, f64) -> f64, op: Op) -> VarId {
        let (m, n) = self.shape(a);
        assert_eq!((m, n), self.shape(b), "elementwise shape mismatch");
        let data = self.nodes[a]
            .data
            .iter()
            .zip(&self.nodes[b].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(m, n, data, op)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        self.zip_elem(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> VarId {
        self.zip_elem(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul_elem(&mut self, a: VarId, b: VarId) -> VarId {
        self.zip_elem(a, b, |x, y| x * y, Op::MulElem(a, b))
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let (m, n) = self.shape(a);
        let data = self.nodes[a].data.iter().map(|&x| c * x).collect();
        self.push(m, n, data, Op::Scale(a, c))
    }

    /// Row-broadcast add: x[m,n] + b[1,n].
    pub fn add_bias(&mut self, x: VarId, b: VarId) -> VarId {
        let (m, n) = self.shape(x);
        let (br, bn) = self.shape(b);
        assert_eq!((br, bn), (1, n), "bias shape ({br},{bn}) vs cols {n}");
        let bv = self.nodes[b].data.clone();
        let data = self.nodes[x]
            .data
            .iter()
            .enumerate()
            .map(|(idx, &v)| v + bv[idx % n])
            .collect();
        self.push(m, n, data, Op::AddBias(x, b))
    }

    fn map_elem(&mut self, a: VarId, f: impl Fn(f64) -> f64, op: Op) -> VarId {
        let (m, n) = self.shape(a);
        let data = self.nodes[a].data.iter().map(|&x| f(x)).collect();
        self.push(m, n, data, op)
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        self.map_elem(a, sigmoid_scalar, Op::Sigmoid(a))
    }

    pub fn tanh_act(&mut self, a: VarId) -> VarId {
        self.map_elem(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        self.map_elem(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn concat_cols(&mut self, a: VarId, b: VarId) -> VarId {
        let (m, p) = self.shape(a);
        let (m2, q) = self.shape(b);
        assert_eq!(m, m2, "concat_cols row mismatch");
        let mut data = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            data.extend_from_slice(&self.nodes[a].data[i * p..(i + 1) * p]);
            data.extend_from_slice(&self.nodes[b].data[i * q..(i + 1) * q]);
        }
        self.push(m, p + q, data, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, x: VarId, start: usize, len: usize) -> VarId {
        let (m, n) = self.shape(x);
        assert!(start + len <= n, "slice {start}+{len} beyond {n} cols");
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&self.nodes[x].data[i * n + start..i * n + start + len]);
        }
        self.push(m, len, data, Op::SliceCols(x, start))
    }

    pub fn gather_rows(&mut self, x: VarId, idx: Vec<usize>) -> VarId {
        let (m, n) = self.shape(x);
        let mut data = Vec::with_capacity(idx.len() * n);
        for &r in &idx {
            assert!(r < m, "gather row {r} of {m}");
            data.extend_from_slice(&self.nodes[x].data[r * n..(r + 1) * n]);
        }
        self.push(idx.len(), n, data, Op::GatherRows(x, idx))
    }

    pub fn reshape(&mut self, x: VarId, rows: usize, cols: usize) -> VarId {
        let (m, n) = self.shape(x);
        assert_eq!(m * n, rows * cols, "reshape size mismatch");
        let data = self.nodes[x].data.clone();
        self.push(rows, cols, data, Op::Reshape(x))
    }

    /// Mean aggregation over neighbors with optional per-edge weights; an
    /// isolated node passes its own row through. Neighbor terms are summed
    /// in the order the adjacency lists them (ascending global id).
    /// Summands are accumulated in value order (not slot order), so the
    /// output does not depend on how the subgraph's nodes happen to be
    /// numbered — relabeling permutes the summand rows but not their sum.
    pub fn neighbor_mean_agg(&mut self, x: VarId, adj: Rc<Adjacency>) -> VarId {
        let (m, n) = self.shape(x);
        assert_eq!(m, adj.n(), "adjacency covers {} nodes, features {m}", adj.n());
        let xv = &self.nodes[x].data;
        let mut data = vec![0.0; m * n];
        let mut terms: Vec<Vec<f64>> = Vec::new();
        for i in 0..m {
            let list = &adj.lists[i];
            if list.is_empty() {
                data[i * n..(i + 1) * n].copy_from_slice(&xv[i * n..(i + 1) * n]);
                continue;
            }
            terms.clear();
            for (slot, &j) in list.iter().enumerate() {
                let w = adj.weight(i, slot);
                let row = &xv[j as usize * n..(j as usize + 1) * n];
                terms.push(row.iter().map(|&v| w * v).collect());
            }
            terms.sort_unstable_by(|a, b| {
                for c in 0..n {
                    let cmp = a[c].total_cmp(&b[c]);
                    if cmp != std::cmp::Ordering::Equal {
                        return cmp;
                    }
                }
                std::cmp::Ordering::Equal
            });
            let inv = 1.0 / list.len() as f64;
            let out = &mut data[i * n..(i + 1) * n];
            for term in &terms {
                for c in 0..n {
                    out[c] += term[c];
                }
            }
            for c in 0..n {
                out[c] *= inv;
            }
        }
        self.push(m, n, data, Op::NeighborMeanAgg(x, adj))
    }

    /// Rows sorted descending by last channel (ties: next channel leftward,
    /// then original order), truncated to `k`, zero-padded when n < k.
    pub fn sort_pool(&mut self, x: VarId, k: usize) -> VarId {
        let (m, n) = self.shape(x);
        assert!(k >= 1, "sort_pool needs k >= 1");
        let xv = &self.nodes[x].data;
        let mut perm: Vec<usize> = (0..m).collect();
        perm.sort_by(|&a, &b| {
            for c in (0..n).rev() {
                let cmp = xv[b * n + c].total_cmp(&xv[a * n + c]);
                if cmp != std::cmp::Ordering::Equal {
                    return cmp;
                }
            }
            a.cmp(&b)
        });
        let keep = m.min(k);
        let mut data = vec![0.0; k * n];
        for r in 0..keep {
            data[r * n..(r + 1) * n].copy_from_slice(&xv[perm[r] * n..(perm[r] + 1) * n]);
        }
        self.push(k, n, data, Op::SortPool(x, perm))
    }

    /// 1-D convolution over a flat [1, L] signal: out[ch][p] covers
    /// x[p·stride .. p·stride+w]. Output shape [channels, positions].
    pub fn conv1d(&mut self, x: VarId, kernel: VarId, bias: VarId, stride: usize) -> VarId {
        let (xr, l) = self.shape(x);
        let (channels, w) = self.shape(kernel);
        let (br, bc) = self.shape(bias);
        assert_eq!(xr, 1, "conv1d input must be a single row");
        assert!(stride >= 1 && w <= l, "kernel width {w} over length {l}");
        assert_eq!((br, bc), (1, channels), "conv1d bias shape");
        let positions = (l - w) / stride + 1;
        let xv = &self.nodes[x].data;
        let kv = &self.nodes[kernel].data;
        let bv = &self.nodes[bias].data;
        let mut data = vec![0.0; channels * positions];
        for ch in 0..channels {
            let krow = &kv[ch * w..(ch + 1) * w];
            for p in 0..positions {
                let mut acc = 0.0;
                let base = p * stride;
                for t in 0..w {
                    acc += krow[t] * xv[base + t];
                }
                data[ch * positions + p] = acc + bv[ch];
            }
        }
        self.push(channels, positions, data, Op::Conv1d { x, kernel, bias, stride })
    }

    /// Per-row maximum over columns (first index wins ties) → [m, 1].
    pub fn max_cols(&mut self, x: VarId) -> VarId {
        let (m, n) = self.shape(x);
        assert!(n >= 1);
        let xv = &self.nodes[x].data;
        let mut data = Vec::with_capacity(m);
        let mut argmax = Vec::with_capacity(m);
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            data.push(row[best]);
            argmax.push(best);
        }
        self.push(m, 1, data, Op::MaxCols(x, argmax))
    }

    pub fn sum_all(&mut self, x: VarId) -> VarId {
        let total: f64 = self.nodes[x].data.iter().sum();
        self.push(1, 1, vec![total], Op::SumAll(x))
    }

    /// Numerically stable binary cross-entropy on a logit against a fixed
    /// 0/1 target.
    pub fn bce_with_logits(&mut self, logit: VarId, target: f64) -> VarId {
        assert_eq!(self.shape(logit), (1, 1), "loss expects a scalar logit");
        let z = self.nodes[logit].data[0];
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        self.push(1, 1, vec![loss], Op::BceWithLogits(logit, target))
    }

    /// Gradients of a scalar loss with respect to every node, by one reverse
    /// sweep in creation order.
    pub fn backward(&self, loss: VarId) -> Vec<Vec<f64>> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|nd| vec![0.0; nd.rows * nd.cols])
            .collect();
        grads[loss][0] = 1.0;

        for id in (0..self.nodes.len()).rev() {
            if grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[id].clone();
            let node = &self.nodes[id];
            let n = node.cols;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let nn = self.shape(*b).1;
                    let av = &self.nodes[*a].data;
                    let bv = &self.nodes[*b].data;
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..nn {
                                acc += g[i * nn + j] * bv[p * nn + j];
                            }
                            grads[*a][i * k + p] += acc;
                        }
                    }
                    for p in 0..k {
                        for j in 0..nn {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += av[i * k + p] * g[i * nn + j];
                            }
                            grads[*b][p * nn + j] += acc;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (t, &gv) in grads[*a].iter_mut().zip(&g) {
                        *t += gv;
                    }
                    for (t, &gv) in grads[*b].iter_mut().zip(&g) {
                        *t += gv;
                    }
                }
                Op::Sub(a, b) => {
                    for (t, &gv) in grads[*a].iter_mut().zip(&g) {
                        *t += gv;
                    }
                    for (t, &gv) in grads[*b].iter_mut().zip(&g) {
                        *t -= gv;
                    }
                }
                Op::MulElem(a, b) => {
                    let bv = self.nodes[*b].data.clone();
                    for (idx, &gv) in g.iter().enumerate() {
                        grads[*a][idx] += gv * bv[idx];
                    }
                    let av = self.nodes[*a].data.clone();
                    for (idx, &gv) in g.iter().enumerate() {
                        grads[*b][idx] += gv * av[idx];
                    }
                }
                Op::Scale(a, c) => {
                    for (t, &gv) in grads[*a].iter_mut().zip(&g) {
                        *t += c * gv;
                    }
                }
                Op::AddBias(x, b) => {
                    for (t, &gv) in grads[*x].iter_mut().zip(&g) {
                        *t += gv;
                    }
                    for (idx, &gv) in g.iter().enumerate() {
                        grads[*b][idx % n] += gv;
                    }
                }
                Op::Sigmoid(a) => {
                    for (idx, &gv) in g.iter().enumerate() {
                        let y = node.data[idx];
                        grads[*a][idx] += gv * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    for (idx, &gv) in g.iter().enumerate() {
                        let y = node.data[idx];
                        grads[*a][idx] += gv * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    for (idx, &gv) in g.iter().enumerate() {
                        if node.data[idx] > 0.0 {
                            grads[*a][idx] += gv;
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let p = self.shape(*a).1;
                    let q = self.shape(*b).1;
                    for i in 0..node.rows {
                        for c in 0..p {
                            grads[*a][i * p + c] += g[i * (p + q) + c];
                        }
                        for c in 0..q {
                            grads[*b][i * q + c] += g[i * (p + q) + p + c];
                        }
                    }
                }
                Op::SliceCols(x, start) => {
                    let xcols = self.shape(*x).1;
                    for i in 0..node.rows {
                        for c in 0..n {
                            grads[*x][i * xcols + start + c] += g[i * n + c];
                        }
                    }
                }
                Op::GatherRows(x, idx) => {
                    for (r, &src) in idx.iter().enumerate() {
                        for c in 0..n {
                            grads[*x][src * n + c] += g[r * n + c];
                        }
                    }
                }
                Op::Reshape(x) => {
                    for (t, &gv) in grads[*x].iter_mut().zip(&g) {
                        *t += gv;
                    }
                }
                Op::NeighborMeanAgg(x, adj) => {
                    for i in 0..node.rows {
                        let list = &adj.lists[i];
                        if list.is_empty() {
                            for c in 0..n {
                                grads[*x][i * n + c] += g[i * n + c];
                            }
                            continue;
                        }
                        let inv = 1.0 / list.len() as f64;
                        for (slot, &j) in list.iter().enumerate() {
                            let w = adj.weight(i, slot) * inv;
                            for c in 0..n {
                                grads[*x][j as usize * n + c] += w * g[i * n + c];
                            }
                        }
                    }
                }
                Op::SortPool(x, perm) => {
                    let src_rows = self.shape(*x).0;
                    for r in 0..node.rows.min(src_rows) {
                        for c in 0..n {
                            grads[*x][perm[r] * n + c] += g[r * n + c];
                        }
                    }
                }
                Op::Conv1d { x, kernel, bias, stride } => {
                    let w = self.shape(*kernel).1;
                    let positions = n;
                    let xv = self.nodes[*x].data.clone();
                    let kv = self.nodes[*kernel].data.clone();
                    for ch in 0..node.rows {
                        for p in 0..positions {
                            let gv = g[ch * positions + p];
                            if gv == 0.0 {
                                continue;
                            }
                            let base = p * stride;
                            for t in 0..w {
                                grads[*kernel][ch * w + t] += gv * xv[base + t];
                                grads[*x][base + t] += gv * kv[ch * w + t];
                            }
                            grads[*bias][ch] += gv;
                        }
                    }
                }
                Op::MaxCols(x, argmax) => {
                    let xcols = self.shape(*x).1;
                    for i in 0..node.rows {
                        grads[*x][i * xcols + argmax[i]] += g[i];
                    }
                }
                Op::SumAll(x) => {
                    for t in grads[*x].iter_mut() {
                        *t += g[0];
                    }
                }
                Op::BceWithLogits(logit, target) => {
                    let z = self.nodes[*logit].data[0];
                    grads[*logit][0] += g[0] * (sigmoid_scalar(z) - target);
                }
            }
        }
        grads
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
