//! Layers composed from tape primitives. Each layer owns parameter ids in a
//! shared [`ParamSet`] and validates input shapes before touching the tape.

use crate::error::{Error, Result};
use crate::nn::params::{Init, ParamId, ParamSet, TapeSession};
use crate::nn::tape::{Adjacency, VarId};
use rand_chacha::ChaCha8Rng;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(&self, s: &mut TapeSession, x: VarId) -> VarId {
        match self {
            Activation::Identity => x,
            Activation::Relu => s.tape.relu(x),
            Activation::Sigmoid => s.tape.sigmoid(x),
            Activation::Tanh => s.tape.tanh_act(x),
        }
    }
}

/// Fully connected layer: act(xW + b).
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub act: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = ps.add(&format!("{name}.w"), in_dim, out_dim, Init::UniformFanIn, rng);
        let b = ps.add(&format!("{name}.b"), 1, out_dim, Init::Zeros, rng);
        Self { w, b, act, in_dim, out_dim }
    }

    pub fn forward(&self, s: &mut TapeSession, ps: &ParamSet, x: VarId) -> Result<VarId> {
        let (_, cols) = s.tape.shape(x);
        if cols != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "dense {} expects {} input columns, got {cols}",
                ps.name(self.w),
                self.in_dim
            )));
        }
        let w = s.param(ps, self.w);
        let b = s.param(ps, self.b);
        let xw = s.tape.matmul(x, w);
        let z = s.tape.add_bias(xw, b);
        Ok(self.act.apply(s, z))
    }
}

/// GRU cell over [batch, features] steps with hidden state [batch, hidden].
#[derive(Debug, Clone)]
pub struct GruCell {
    wz: ParamId,
    bz: ParamId,
    wr: ParamId,
    br: ParamId,
    wh: ParamId,
    bh: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let cat = input_dim + hidden;
        let wz = ps.add(&format!("{name}.wz"), cat, hidden, Init::UniformFanIn, rng);
        let bz = ps.add(&format!("{name}.bz"), 1, hidden, Init::Zeros, rng);
        let wr = ps.add(&format!("{name}.wr"), cat, hidden, Init::UniformFanIn, rng);
        let br = ps.add(&format!("{name}.br"), 1, hidden, Init::Zeros, rng);
        let wh = ps.add(&format!("{name}.wh"), cat, hidden, Init::UniformFanIn, rng);
        let bh = ps.add(&format!("{name}.bh"), 1, hidden, Init::Zeros, rng);
        Self { wz, bz, wr, br, wh, bh, input_dim, hidden }
    }

    fn gate(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        cat: VarId,
        w: ParamId,
        b: ParamId,
    ) -> VarId {
        let wv = s.param(ps, w);
        let bv = s.param(ps, b);
        let z = s.tape.matmul(cat, wv);
        s.tape.add_bias(z, bv)
    }

    /// One recurrence step: z and r gates, candidate state, convex blend.
    pub fn step(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        x_t: VarId,
        h: VarId,
    ) -> Result<VarId> {
        let (bx, fx) = s.tape.shape(x_t);
        let (bh, hx) = s.tape.shape(h);
        if fx != self.input_dim || hx != self.hidden || bx != bh {
            return Err(Error::ShapeMismatch(format!(
                "gru step got x[{bx},{fx}], h[{bh},{hx}], expects f={} H={}",
                self.input_dim, self.hidden
            )));
        }
        let cat = s.tape.concat_cols(x_t, h);
        let z_lin = self.gate(s, ps, cat, self.wz, self.bz);
        let z = s.tape.sigmoid(z_lin);
        let r_lin = self.gate(s, ps, cat, self.wr, self.br);
        let r = s.tape.sigmoid(r_lin);
        let rh = s.tape.mul_elem(r, h);
        let cat_rh = s.tape.concat_cols(x_t, rh);
        let cand_lin = self.gate(s, ps, cat_rh, self.wh, self.bh);
        let cand = s.tape.tanh_act(cand_lin);
        // h' = h + z ⊙ (h̃ − h)
        let delta = s.tape.sub(cand, h);
        let zd = s.tape.mul_elem(z, delta);
        Ok(s.tape.add(h, zd))
    }

    /// Run the cell over a [batch, steps·features] block, returning the final
    /// hidden state [batch, hidden].
    pub fn run_sequence(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        seq: VarId,
        steps: usize,
    ) -> Result<VarId> {
        let (batch, total) = s.tape.shape(seq);
        if steps == 0 || total != steps * self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "sequence block [{batch},{total}] does not cut into {steps} steps of {}",
                self.input_dim
            )));
        }
        let mut h = s.input(batch, self.hidden, vec![0.0; batch * self.hidden]);
        for t in 0..steps {
            let x_t = s.tape.slice_cols(seq, t * self.input_dim, self.input_dim);
            h = self.step(s, ps, x_t, h)?;
        }
        Ok(h)
    }
}

/// Graph convolution: act(mean over neighbors of (hW)), weighted when the
/// adjacency carries weights, with isolated-node self-passthrough.
#[derive(Debug, Clone)]
pub struct GraphConv {
    pub w: ParamId,
    pub act: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl GraphConv {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = ps.add(&format!("{name}.w"), in_dim, out_dim, Init::UniformFanIn, rng);
        Self { w, act, in_dim, out_dim }
    }

    pub fn forward(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        h: VarId,
        adj: &Rc<Adjacency>,
    ) -> Result<VarId> {
        let (rows, cols) = s.tape.shape(h);
        if cols != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "graph conv {} expects {} input columns, got {cols}",
                ps.name(self.w),
                self.in_dim
            )));
        }
        if rows != adj.n() {
            return Err(Error::ShapeMismatch(format!(
                "adjacency over {} nodes, features over {rows}",
                adj.n()
            )));
        }
        let w = s.param(ps, self.w);
        let hw = s.tape.matmul(h, w);
        let agg = s.tape.neighbor_mean_agg(hw, Rc::clone(adj));
        Ok(self.act.apply(s, agg))
    }
}

/// 1-D convolution over the flattened sorted node embeddings, one stride per
/// node slot, activation, then a global max per output channel.
#[derive(Debug, Clone)]
pub struct Conv1dReadout {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub act: Activation,
    /// Kernel span in node slots.
    pub span: usize,
    pub channels: usize,
    pub node_dim: usize,
}

impl Conv1dReadout {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        node_dim: usize,
        span: usize,
        channels: usize,
        act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let kernel = ps.add(
            &format!("{name}.kernel"),
            channels,
            span * node_dim,
            Init::UniformFanIn,
            rng,
        );
        let bias = ps.add(&format!("{name}.bias"), 1, channels, Init::Zeros, rng);
        Self { kernel, bias, act, span, channels, node_dim }
    }

    /// x is the [K, d] pooled block; output is [1, channels].
    pub fn forward(&self, s: &mut TapeSession, ps: &ParamSet, x: VarId) -> Result<VarId> {
        self.forward_with_margin(s, ps, x).map(|(v, _)| v)
    }

    /// Forward plus the smallest top-two gap across the activated rows —
    /// the distance to the nearest argmax flip inside the max pooling
    /// (infinite when each channel has a single position).
    pub fn forward_with_margin(
        &self,
        s: &mut TapeSession,
        ps: &ParamSet,
        x: VarId,
    ) -> Result<(VarId, f64)> {
        let (k, d) = s.tape.shape(x);
        if d != self.node_dim {
            return Err(Error::ShapeMismatch(format!(
                "readout expects node dim {}, got {d}",
                self.node_dim
            )));
        }
        if k < self.span {
            return Err(Error::ShapeMismatch(format!(
                "readout kernel spans {} node slots but input has {k}",
                self.span
            )));
        }
        let kernel = s.param(ps, self.kernel);
        let bias = s.param(ps, self.bias);
        let flat = s.tape.reshape(x, 1, k * d);
        let conv = s.tape.conv1d(flat, kernel, bias, d);
        let activated = self.act.apply(s, conv);
        let mut margin = f64::INFINITY;
        {
            let (rows, cols) = s.tape.shape(activated);
            let v = s.tape.value(activated);
            for i in 0..rows {
                let row = &v[i * cols..(i + 1) * cols];
                let mut top = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                for &x in row {
                    if x > top {
                        second = top;
                        top = x;
                    } else if x > second {
                        second = x;
                    }
                }
                if second.is_finite() {
                    margin = margin.min(top - second);
                }
            }
        }
        let maxed = s.tape.max_cols(activated);
        Ok((s.tape.reshape(maxed, 1, self.channels), margin))
    }
}

/// Concatenate the two target rows into [1, 2d].
pub fn two_node_pool(s: &mut TapeSession, h: VarId) -> Result<VarId> {
    let (rows, cols) = s.tape.shape(h);
    if rows < 2 {
        return Err(Error::ShapeMismatch(format!(
            "two-node readout needs at least 2 rows, got {rows}"
        )));
    }
    let pair = s.tape.gather_rows(h, vec![0, 1]);
    Ok(s.tape.reshape(pair, 1, 2 * cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn session_with(ps: &ParamSet) -> TapeSession {
        TapeSession::new(ps)
    }

    #[test]
    fn dense_identity_passthrough() {
        let mut r = rng::stream(0, rng::domain::PARAM_INIT, 0, 0);
        let mut ps = ParamSet::new();
        let layer = Dense::new(&mut ps, "fc", 2, 2, Activation::Identity, &mut r);
        // overwrite with identity weights
        ps.values_mut(layer.w).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let mut s = session_with(&ps);
        let x = s.input(2, 2, vec![0.5, -1.5, 2.0, 3.0]);
        let y = layer.forward(&mut s, &ps, x).unwrap();
        assert_eq!(s.tape.value(y), &[0.5, -1.5, 2.0, 3.0]);
    }

    #[test]
    fn dense_bias_and_scalar_case() {
        let mut r = rng::stream(0, rng::domain::PARAM_INIT, 1, 0);
        let mut ps = ParamSet::new();
        let layer = Dense::new(&mut ps, "fc", 1, 1, Activation::Identity, &mut r);
        ps.values_mut(layer.w)[0] = 3.0;
        ps.values_mut(layer.b)[0] = 1.0;
        let mut s = session_with(&ps);
        let x = s.input(1, 1, vec![2.0]);
        let y = layer.forward(&mut s, &ps, x).unwrap();
        assert_eq!(s.tape.value(y), &[7.0]);

        // x = 0 → activation(bias)
        let sig = Dense { act: Activation::Sigmoid, ..layer.clone() };
        let x0 = s.input(1, 1, vec![0.0]);
        let y0 = sig.forward(&mut s, &ps, x0).unwrap();
        assert!((s.tape.value(y0)[0] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);

        let bad = s.input(1, 3, vec![0.0; 3]);
        assert!(layer.forward(&mut s, &ps, bad).is_err());
    }

    #[test]
    fn gru_zero_params_halve_state() {
        let mut r = rng::stream(0, rng::domain::PARAM_INIT, 2, 0);
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "gru", 2, 3, &mut r);
        for id in 0..ps.len() {
            ps.values_mut(id).fill(0.0);
        }
        let mut s = session_with(&ps);
        let x = s.input(1, 2, vec![4.0, -2.0]);
        let h0 = s.input(1, 3, vec![0.0; 3]);
        let h1 = cell.step(&mut s, &ps, x, h0).unwrap();
        // z = 0.5, candidate = 0 → h' = 0
        assert_eq!(s.tape.value(h1), &[0.0, 0.0, 0.0]);

        let hc = s.input(1, 3, vec![2.0, -4.0, 6.0]);
        let h2 = cell.step(&mut s, &ps, x, hc).unwrap();
        assert_eq!(s.tape.value(h2), &[1.0, -2.0, 3.0]);

        // all-zero input sequence keeps h at zero
        let seq = s.input(1, 8, vec![0.0; 8]);
        let hf = cell.run_sequence(&mut s, &ps, seq, 4).unwrap();
        assert_eq!(s.tape.value(hf), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn graph_conv_examples() {
        let mut r = rng::stream(0, rng::domain::PARAM_INIT, 3, 0);
        let mut ps = ParamSet::new();
        let conv = GraphConv::new(&mut ps, "gc", 2, 2, Activation::Identity, &mut r);
        ps.values_mut(conv.w).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);

        // single node, no edges → self term
        let lone = Rc::new(Adjacency::unweighted(vec![vec![]]).unwrap());
        let mut s = session_with(&ps);
        let h = s.input(1, 2, vec![7.0, -3.0]);
        let out = conv.forward(&mut s, &ps, h, &lone).unwrap();
        assert_eq!(s.tape.value(out), &[7.0, -3.0]);

        // one neighbor each → swap rows
        let pair = Rc::new(Adjacency::unweighted(vec![vec![1], vec![0]]).unwrap());
        let h2 = s.input(2, 2, vec![1.0, 2.0, 10.0, 20.0]);
        let out2 = conv.forward(&mut s, &ps, h2, &pair).unwrap();
        assert_eq!(s.tape.value(out2), &[10.0, 20.0, 1.0, 2.0]);

        // zero weights kill a connected pair
        let zeroed = Rc::new(
            Adjacency::new(vec![vec![1], vec![0]], Some(vec![vec![0.0], vec![0.0]]))
                .unwrap(),
        );
        let h3 = s.input(2, 2, vec![1.0, 2.0, 10.0, 20.0]);
        let out3 = conv.forward(&mut s, &ps, h3, &zeroed).unwrap();
        assert_eq!(s.tape.value(out3), &[0.0; 4]);

        let mismatched = s.input(3, 2, vec![0.0; 6]);
        assert!(conv.forward(&mut s, &ps, mismatched, &pair).is_err());
    }

    #[test]
    fn readout_padding_only_gives_bias() {
        let mut r = rng::stream(0, rng::domain::PARAM_INIT, 4, 0);
        let mut ps = ParamSet::new();
        let ro = Conv1dReadout::new(&mut ps, "ro", 2, 1, 3, Activation::Tanh, &mut r);
        ps.values_mut(ro.bias).copy_from_slice(&[0.5, -0.25, 0.0]);
        let mut s = session_with(&ps);
        let x = s.input(4, 2, vec![0.0; 8]);
        let y = ro.forward(&mut s, &ps, x).unwrap();
        let v = s.tape.value(y);
        assert_eq!(v.len(), 3);
        assert!((v[0] - 0.5f64.tanh()).abs() < 1e-15);
        assert!((v[1] - (-0.25f64).tanh()).abs() < 1e-15);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn two_node_pool_reads_targets_only() {
        let ps = ParamSet::new();
        let mut s = session_with(&ps);
        let h = s.input(3, 2, vec![1.0, 2.0, 3.0, 4.0, 9.0, 9.0]);
        let pooled = two_node_pool(&mut s, h).unwrap();
        assert_eq!(s.tape.shape(pooled), (1, 4));
        assert_eq!(s.tape.value(pooled), &[1.0, 2.0, 3.0, 4.0]);

        let h2 = s.input(3, 2, vec![1.0, 2.0, 3.0, 4.0, -7.0, 0.0]);
        let pooled2 = two_node_pool(&mut s, h2).unwrap();
        assert_eq!(s.tape.value(pooled), s.tape.value(pooled2));

        let whole = s.input(2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        let flat = two_node_pool(&mut s, whole).unwrap();
        assert_eq!(s.tape.value(flat), &[5.0, 6.0, 7.0, 8.0]);

        let single = s.input(1, 2, vec![0.0, 0.0]);
        assert!(two_node_pool(&mut s, single).is_err());
        let _ = ps;
    }
}
