//! Adam optimizer over a whole parameter set.

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, params: &ParamSet) -> Self {
        let m = (0..params.len())
            .map(|id| vec![0.0; params.values(id).len()])
            .collect();
        let v = (0..params.len())
            .map(|id| vec![0.0; params.values(id).len()])
            .collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m, v }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update with bias correction. Gradients must align with the set.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != params.len()
            || grads
                .iter()
                .enumerate()
                .any(|(id, g)| g.len() != params.values(id).len())
        {
            return Err(Error::ShapeMismatch("gradients do not align with parameters".into()));
        }
        for g in grads {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged("non-finite gradient".into()));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in 0..params.len() {
            let m = &mut self.m[id];
            let v = &mut self.v[id];
            let g = &grads[id];
            let p = params.values_mut(id);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;
    use crate::rng;

    fn setup() -> ParamSet {
        let mut r = rng::stream(0, rng::domain::PARAM_INIT, 9, 0);
        let mut ps = ParamSet::new();
        ps.add("w", 2, 2, Init::UniformFanIn, &mut r);
        ps
    }

    #[test]
    fn zero_grad_keeps_params() {
        let mut ps = setup();
        let before = ps.values(0).to_vec();
        let mut opt = Adam::new(0.01, &ps);
        opt.step(&mut ps, &[vec![0.0; 4]]).unwrap();
        assert_eq!(ps.values(0), &before[..]);
    }

    #[test]
    fn first_step_is_signed_lr() {
        let mut ps = setup();
        let before = ps.values(0).to_vec();
        let mut opt = Adam::new(0.01, &ps);
        let g = vec![0.5, -2.0, 1e-3, 0.0];
        opt.step(&mut ps, &[g.clone()]).unwrap();
        for i in 0..4 {
            let delta = ps.values(0)[i] - before[i];
            if g[i] == 0.0 {
                assert_eq!(delta, 0.0);
            } else {
                // first Adam step ≈ −lr · sign(g)
                let expect = -0.01 * g[i].signum();
                assert!(
                    (delta - expect).abs() < 1e-4,
                    "delta {delta} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn runs_are_deterministic_and_reject_nan() {
        let run = || {
            let mut ps = setup();
            let mut opt = Adam::new(0.05, &ps);
            for step in 0..10 {
                let g: Vec<f64> = (0..4).map(|i| ((step + i) as f64).sin()).collect();
                opt.step(&mut ps, &[g]).unwrap();
            }
            ps.values(0).to_vec()
        };
        assert_eq!(run(), run());

        let mut ps = setup();
        let mut opt = Adam::new(0.05, &ps);
        assert!(opt.step(&mut ps, &[vec![f64::NAN; 4]]).is_err());
        assert!(opt.step(&mut ps, &[vec![0.0; 3]]).is_err());
    }
}
