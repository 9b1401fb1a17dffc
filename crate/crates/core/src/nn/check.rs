//! Central finite-difference verification of analytic gradients.
//!
//! The per-layer suites build a small network around the layer under test,
//! compute analytic gradients, and compare against central differences over
//! every parameter coordinate. Piecewise paths (relu, sorting, max) are only
//! checked at inputs a safe margin away from their decision boundaries: each
//! forward reports its smallest margin and the suite reseeds until the margin
//! clears [`BOUNDARY_MARGIN`], which keeps the finite-difference stencil
//! inside one linear region without ever weakening the comparison.

use crate::nn::layers::{two_node_pool, Activation, Conv1dReadout, Dense, GraphConv, GruCell};
use crate::nn::params::{ParamId, ParamSet, TapeSession};
use crate::nn::tape::Adjacency;
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::rc::Rc;

pub const FD_EPSILON: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Differences below this are indistinguishable from f64 rounding noise for
/// losses of order 1; treated as matching regardless of relative error.
pub const FD_ABS_FLOOR: f64 = 1e-7;
/// Minimum distance from any piecewise boundary (relu zero, sort-key tie,
/// max runner-up) a test point must keep for the FD stencil to stay inside
/// one linear region.
pub const BOUNDARY_MARGIN: f64 = 1e-3;

const RESEED_ATTEMPTS: u64 = 60;

/// Worst relative error between analytic grads and central differences of
/// `loss_of` over the given parameters. `loss_of` must be a pure function of
/// the parameter values.
pub fn max_rel_error(
    params: &mut ParamSet,
    ids: &[ParamId],
    analytic: &[Vec<f64>],
    loss_of: &mut dyn FnMut(&ParamSet) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for &id in ids {
        for i in 0..params.values(id).len() {
            let orig = params.values(id)[i];
            params.values_mut(id)[i] = orig + FD_EPSILON;
            let up = loss_of(params);
            params.values_mut(id)[i] = orig - FD_EPSILON;
            let down = loss_of(params);
            params.values_mut(id)[i] = orig;
            let numeric = (up - down) / (2.0 * FD_EPSILON);
            let a = analytic[id][i];
            let diff = (a - numeric).abs();
            if diff <= FD_ABS_FLOOR {
                continue;
            }
            let rel = diff / a.abs().max(numeric.abs()).max(FD_ABS_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

/// One forward pass of a suite's network: scalar loss, parameter gradients,
/// and the smallest boundary margin encountered (infinity for smooth paths).
pub struct Pass {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    pub margin: f64,
}

/// Generic FD suite driver: `build` assembles layers into a context, and
/// `forward` runs the network for given parameter values. Returns the worst
/// relative error at the first seed whose margins are safe.
pub fn run_fd_suite<C>(
    seed: u64,
    tag: u64,
    build: impl Fn(&mut ParamSet, &mut ChaCha8Rng) -> C,
    forward: impl Fn(&ParamSet, &C, u64) -> Pass,
) -> f64 {
    for attempt in 0..RESEED_ATTEMPTS {
        let salt = seed.wrapping_add(attempt.wrapping_mul(7919));
        let mut r = rng::stream(salt, rng::domain::PARAM_INIT, tag, 0);
        let mut ps = ParamSet::new();
        let ctx = build(&mut ps, &mut r);
        let base = forward(&ps, &ctx, salt);
        if base.margin < BOUNDARY_MARGIN {
            continue;
        }
        let analytic = base.grads;
        let all_ids: Vec<ParamId> = (0..ps.len()).collect();
        let mut loss_of = |p: &ParamSet| forward(p, &ctx, salt).loss;
        return max_rel_error(&mut ps, &all_ids, &analytic, &mut loss_of);
    }
    panic!("no test point cleared the boundary margin after {RESEED_ATTEMPTS} reseeds");
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn finish(s: &TapeSession, loss: crate::nn::tape::VarId, ps: &ParamSet, margin: f64) -> Pass {
    Pass { loss: s.tape.value(loss)[0], grads: s.grads(loss, ps), margin }
}

/// Dense stack (tanh hidden) into a BCE loss; shapes vary with the seed.
pub fn check_dense(seed: u64) -> f64 {
    let b = 1 + (rng::mix64(seed) % 3) as usize;
    let din = 2 + (rng::mix64(seed ^ 1) % 4) as usize;
    let dh = 2 + (rng::mix64(seed ^ 2) % 4) as usize;
    run_fd_suite(
        seed,
        0x01,
        |ps, r| {
            let l1 = Dense::new(ps, "fc1", din, dh, Activation::Tanh, r);
            let l2 = Dense::new(ps, "fc2", dh, 1, Activation::Identity, r);
            (l1, l2)
        },
        |ps, (l1, l2), salt| {
            let mut rx = rng::stream(salt, rng::domain::PARAM_INIT, 0x101, 0);
            let mut s = TapeSession::new(ps);
            let x = s.input(b, din, random_matrix(&mut rx, b, din));
            let h = l1.forward(&mut s, ps, x).unwrap();
            let z = l2.forward(&mut s, ps, h).unwrap();
            let zsum = s.tape.sum_all(z);
            let loss = s.tape.bce_with_logits(zsum, 1.0);
            finish(&s, loss, ps, f64::INFINITY)
        },
    )
}

/// Raw relu between two dense maps; margin = closest pre-activation to zero.
pub fn check_relu_path(seed: u64) -> f64 {
    run_fd_suite(
        seed,
        0x02,
        |ps, r| {
            let l1 = Dense::new(ps, "pre", 3, 4, Activation::Identity, r);
            let l2 = Dense::new(ps, "post", 4, 1, Activation::Identity, r);
            (l1, l2)
        },
        |ps, (l1, l2), salt| {
            let mut rx = rng::stream(salt, rng::domain::PARAM_INIT, 0x102, 0);
            let mut s = TapeSession::new(ps);
            let x = s.input(2, 3, random_matrix(&mut rx, 2, 3));
            let z = l1.forward(&mut s, ps, x).unwrap();
            let margin = s
                .tape
                .value(z)
                .iter()
                .fold(f64::INFINITY, |m, &v| m.min(v.abs()));
            let y = s.tape.relu(z);
            let out = l2.forward(&mut s, ps, y).unwrap();
            let zsum = s.tape.sum_all(out);
            let loss = s.tape.bce_with_logits(zsum, 0.0);
            finish(&s, loss, ps, margin)
        },
    )
}

/// Three GRU steps then a dense head; f and H vary with the seed.
pub fn check_gru_step(seed: u64) -> f64 {
    let f = 2 + (rng::mix64(seed ^ 3) % 3) as usize;
    let h = 2 + (rng::mix64(seed ^ 4) % 4) as usize;
    run_fd_suite(
        seed,
        0x03,
        |ps, r| {
            let cell = GruCell::new(ps, "gru", f, h, r);
            let head = Dense::new(ps, "head", h, 1, Activation::Identity, r);
            (cell, head)
        },
        |ps, (cell, head), salt| {
            let mut rx = rng::stream(salt, rng::domain::PARAM_INIT, 0x103, 0);
            let mut s = TapeSession::new(ps);
            let seq = s.input(2, 3 * f, random_matrix(&mut rx, 2, 3 * f));
            let hidden = cell.run_sequence(&mut s, ps, seq, 3).unwrap();
            let z = head.forward(&mut s, ps, hidden).unwrap();
            let zsum = s.tape.sum_all(z);
            let loss = s.tape.bce_with_logits(zsum, 1.0);
            finish(&s, loss, ps, f64::INFINITY)
        },
    )
}

fn random_adjacency(r: &mut ChaCha8Rng, n: usize, weighted: bool) -> Adjacency {
    let mut lists = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if r.gen_range(0.0..1.0) < 0.5 {
                lists[i].push(j as u32);
                lists[j].push(i as u32);
            }
        }
    }
    let weights = weighted.then(|| {
        let mut w: Vec<Vec<f64>> = lists.iter().map(|l| vec![0.0; l.len()]).collect();
        for i in 0..n {
            for slot in 0..lists[i].len() {
                let j = lists[i][slot] as usize;
                if j > i {
                    let val = r.gen_range(0.1..0.9);
                    w[i][slot] = val;
                    let back = lists[j].iter().position(|&x| x == i as u32).unwrap();
                    w[j][back] = val;
                }
            }
        }
        w
    });
    Adjacency::new(lists, weights).unwrap()
}

/// Two graph convolutions into the two-target readout.
pub fn check_graph_conv(seed: u64, weighted: bool) -> f64 {
    let din = 2 + (rng::mix64(seed ^ 5) % 3) as usize;
    let dh = 2 + (rng::mix64(seed ^ 6) % 3) as usize;
    run_fd_suite(
        seed,
        if weighted { 0x05 } else { 0x04 },
        |ps, r| {
            let g1 = GraphConv::new(ps, "gc1", din, dh, Activation::Tanh, r);
            let g2 = GraphConv::new(ps, "gc2", dh, dh, Activation::Identity, r);
            let head = Dense::new(ps, "head", 2 * dh, 1, Activation::Identity, r);
            (g1, g2, head)
        },
        move |ps, (g1, g2, head), salt| {
            let mut rx = rng::stream(salt, rng::domain::PARAM_INIT, 0x104, 0);
            let n = 5 + (rng::mix64(salt) % 3) as usize;
            let adj = Rc::new(random_adjacency(&mut rx, n, weighted));
            let mut s = TapeSession::new(ps);
            let x = s.input(n, din, random_matrix(&mut rx, n, din));
            let h1 = g1.forward(&mut s, ps, x, &adj).unwrap();
            let h2 = g2.forward(&mut s, ps, h1, &adj).unwrap();
            let pooled = two_node_pool(&mut s, h2).unwrap();
            let z = head.forward(&mut s, ps, pooled).unwrap();
            let zsum = s.tape.sum_all(z);
            let loss = s.tape.bce_with_logits(zsum, 1.0);
            finish(&s, loss, ps, f64::INFINITY)
        },
    )
}

/// Dense embed → sort_pool → 1-D conv → max readout. Margins cover both the
/// sort keys and the per-channel max gaps.
pub fn check_sort_conv_path(seed: u64) -> f64 {
    const D: usize = 3;
    const N: usize = 6;
    const K: usize = 4;
    run_fd_suite(
        seed,
        0x06,
        |ps, r| {
            let embed = Dense::new(ps, "embed", 2, D, Activation::Tanh, r);
            let readout = Conv1dReadout::new(ps, "ro", D, 2, 2, Activation::Tanh, r);
            let head = Dense::new(ps, "head", 2, 1, Activation::Identity, r);
            (embed, readout, head)
        },
        |ps, (embed, readout, head), salt| {
            let mut rx = rng::stream(salt, rng::domain::PARAM_INIT, 0x106, 0);
            let mut s = TapeSession::new(ps);
            let x = s.input(N, 2, random_matrix(&mut rx, N, 2));
            let h = embed.forward(&mut s, ps, x).unwrap();

            // margin over the sort keys: closest pair of last-channel values
            let hv = s.tape.value(h);
            let mut keys: Vec<f64> = (0..N).map(|i| hv[i * D + D - 1]).collect();
            keys.sort_by(f64::total_cmp);
            let mut margin = f64::INFINITY;
            for w in keys.windows(2) {
                margin = margin.min(w[1] - w[0]);
            }

            let pooled = s.tape.sort_pool(h, K);
            let (feat, max_margin) = readout.forward_with_margin(&mut s, ps, pooled).unwrap();
            let z = head.forward(&mut s, ps, feat).unwrap();
            let zsum = s.tape.sum_all(z);
            let loss = s.tape.bce_with_logits(zsum, 1.0);
            finish(&s, loss, ps, margin.min(max_margin))
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_grads_match_finite_differences() {
        for seed in 0..5 {
            let err = check_dense(seed);
            assert!(err < FD_REL_TOL, "seed {seed}: {err:.3e}");
        }
    }

    #[test]
    fn relu_grads_match_finite_differences() {
        for seed in 0..5 {
            let err = check_relu_path(seed);
            assert!(err < FD_REL_TOL, "seed {seed}: {err:.3e}");
        }
    }

    #[test]
    fn gru_grads_match_finite_differences() {
        for seed in 0..5 {
            let err = check_gru_step(seed);
            assert!(err < FD_REL_TOL, "seed {seed}: {err:.3e}");
        }
    }

    #[test]
    fn graph_conv_grads_match_finite_differences() {
        for seed in 0..5 {
            let unweighted = check_graph_conv(seed, false);
            assert!(unweighted < FD_REL_TOL, "seed {seed}: {unweighted:.3e}");
            let weighted = check_graph_conv(seed, true);
            assert!(weighted < FD_REL_TOL, "seed {seed}: {weighted:.3e}");
        }
    }

    #[test]
    fn sort_conv_grads_match_finite_differences() {
        for seed in 0..5 {
            let err = check_sort_conv_path(seed);
            assert!(err < FD_REL_TOL, "seed {seed}: {err:.3e}");
        }
    }
}
