//! Dense-layer primitives with hand-written gradients, plus the
//! adaptive-moment optimizer. Everything is deterministic given a seed.

use super::LearnError;
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer; weights are row-major `[n_out][n_in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct Linear<S: Real> {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<S>,
    pub b: Vec<S>,
}

impl<S: Real> Linear<S> {
    /// Uniform fan-in initialization: weights in ±1/sqrt(n_in), zero biases.
    pub fn init(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let w = (0..n_in * n_out)
            .map(|_| S::of(rng.gen_range(-bound..=bound)))
            .collect();
        Self {
            n_in,
            n_out,
            w,
            b: vec![S::zero(); n_out],
        }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![S::zero(); n_in * n_out],
            b: vec![S::zero(); n_out],
        }
    }

    pub fn forward(&self, x: &[S]) -> Result<Vec<S>, LearnError> {
        if x.len() != self.n_in {
            return Err(LearnError::ShapeMismatch {
                detail: format!("layer expects {} inputs, got {}", self.n_in, x.len()),
            });
        }
        let mut y = self.b.clone();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = S::zero();
            for (wi, xi) in row.iter().zip(x) {
                acc = acc + *wi * *xi;
            }
            y[o] = y[o] + acc;
        }
        Ok(y)
    }

    /// Accumulates dW/db into `grad` and returns dL/dx.
    pub fn backward(&self, x: &[S], dy: &[S], grad: &mut LinearGrad<S>) -> Vec<S> {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(dy.len(), self.n_out);
        let mut dx = vec![S::zero(); self.n_in];
        for o in 0..self.n_out {
            let d = dy[o];
            grad.db[o] = grad.db[o] + d;
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grad.dw[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grow[i] = grow[i] + d * x[i];
                dx[i] = dx[i] + d * row[i];
            }
        }
        dx
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Clone, Debug)]
pub struct LinearGrad<S: Real> {
    pub dw: Vec<S>,
    pub db: Vec<S>,
}

impl<S: Real> LinearGrad<S> {
    pub fn zeros_like(layer: &Linear<S>) -> Self {
        Self {
            dw: vec![S::zero(); layer.w.len()],
            db: vec![S::zero(); layer.b.len()],
        }
    }

    pub fn zero(&mut self) {
        self.dw.fill(S::zero());
        self.db.fill(S::zero());
    }
}

pub fn relu<S: Real>(pre: &[S]) -> Vec<S> {
    pre.iter().map(|&v| v.max(S::zero())).collect()
}

pub fn relu_backward<S: Real>(pre: &[S], dpost: &[S]) -> Vec<S> {
    pre.iter()
        .zip(dpost)
        .map(|(&p, &d)| if p > S::zero() { d } else { S::zero() })
        .collect()
}

/// Componentwise max over rows plus the winning row per component.
/// Empty input pools to zeros with no winners (usize::MAX sentinel).
pub fn max_pool<S: Real>(rows: &[Vec<S>], width: usize) -> (Vec<S>, Vec<usize>) {
    let mut pooled = vec![S::zero(); width];
    let mut winner = vec![usize::MAX; width];
    for (r, row) in rows.iter().enumerate() {
        for d in 0..width {
            if winner[d] == usize::MAX || row[d] > pooled[d] {
                pooled[d] = row[d];
                winner[d] = r;
            }
        }
    }
    (pooled, winner)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct AdamConfig<S: Real> {
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
}

impl<S: Real> Default for AdamConfig<S> {
    fn default() -> Self {
        Self {
            beta1: S::of(0.9),
            beta2: S::of(0.999),
            epsilon: S::of(1e-8),
        }
    }
}

/// First/second moment accumulators over the flattened parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S: Real> {
    pub t: u64,
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub cfg: AdamConfig<S>,
}

impl<S: Real> AdamState<S> {
    pub fn new(param_count: usize, cfg: AdamConfig<S>) -> Self {
        Self {
            t: 0,
            m: vec![S::zero(); param_count],
            v: vec![S::zero(); param_count],
            cfg,
        }
    }

    /// One update over parameters visited in a fixed order. `grads` must be
    /// the matching flattened gradient vector.
    pub fn step(
        &mut self,
        lr: S,
        grads: &[S],
        mut visit_params: impl FnMut(&mut dyn FnMut(&mut S)),
    ) -> Result<(), LearnError> {
        assert_eq!(grads.len(), self.m.len(), "optimizer/model size mismatch");
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let eps = self.cfg.epsilon;
        let one = S::one();
        let bc1 = one - b1.powi(self.t as i32);
        let bc2 = one - b2.powi(self.t as i32);
        let m = &mut self.m;
        let v = &mut self.v;
        let mut i = 0;
        visit_params(&mut |p: &mut S| {
            let g = grads[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            i += 1;
        });
        assert_eq!(i, grads.len(), "parameter visitor covered {i} of {}", grads.len());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    #[test]
    fn linear_forward_matches_hand_example() {
        let mut l = Linear::<f64>::zeros(2, 2);
        l.w = vec![1.0, 2.0, -3.0, 0.5];
        l.b = vec![0.25, -1.0];
        let y = l.forward(&[2.0, -1.0]).unwrap();
        assert_eq!(y, vec![2.0 - 2.0 + 0.25, -6.0 - 0.5 - 1.0]);
        assert!(l.forward(&[1.0]).is_err());
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let h = 1e-5;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_in = rng.gen_range(2..6);
            let n_out = rng.gen_range(1..5);
            let l = Linear::<f64>::init(n_in, n_out, &mut rng);
            let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |l: &Linear<f64>, x: &[f64]| -> f64 {
                l.forward(x)
                    .unwrap()
                    .iter()
                    .zip(&c)
                    .map(|(y, ci)| y * ci)
                    .sum()
            };
            let mut grad = LinearGrad::zeros_like(&l);
            let dx = l.backward(&x, &c, &mut grad);
            for i in 0..l.w.len() {
                let mut lp = l.clone();
                let mut lm = l.clone();
                lp.w[i] += h;
                lm.w[i] -= h;
                let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h);
                assert!(rel_err(grad.dw[i], fd) < 1e-4, "dw[{i}] {} vs {fd}", grad.dw[i]);
            }
            for o in 0..l.b.len() {
                let mut lp = l.clone();
                let mut lm = l.clone();
                lp.b[o] += h;
                lm.b[o] -= h;
                let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h);
                assert!(rel_err(grad.db[o], fd) < 1e-4);
            }
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (loss(&l, &xp) - loss(&l, &xm)) / (2.0 * h);
                assert!(rel_err(dx[i], fd) < 1e-4);
            }
        }
    }

    #[test]
    fn relu_masks_negative_lanes() {
        let pre = [0.5, -0.25, 0.0, 2.0];
        assert_eq!(relu(&pre), vec![0.5, 0.0, 0.0, 2.0]);
        let d = relu_backward(&pre, &[1.0, 1.0, 1.0, 3.0]);
        // Zero preactivation sits on the kink; the subgradient here is 0.
        assert_eq!(d, vec![1.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn max_pool_picks_componentwise_winners() {
        let rows = vec![vec![1.0, -5.0], vec![0.0, 7.0], vec![1.0, 7.0]];
        let (pooled, winner) = max_pool(&rows, 2);
        assert_eq!(pooled, vec![1.0, 7.0]);
        // Strict comparison keeps the first row on ties.
        assert_eq!(winner, vec![0, 1]);
        let (pooled, winner) = max_pool::<f64>(&[], 3);
        assert_eq!(pooled, vec![0.0; 3]);
        assert_eq!(winner, vec![usize::MAX; 3]);
    }

    #[test]
    fn adam_matches_reference_scalar_run() {
        // One parameter, constant gradient 1: values follow the textbook
        // update; first step moves by exactly -lr.
        let mut p = vec![0.5f64];
        let mut adam = AdamState::new(1, AdamConfig::default());
        let lr = 0.001;
        adam.step(lr, &[1.0], |f| f(&mut p[0])).unwrap();
        let expect = 0.5 - lr * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
        adam.step(lr, &[1.0], |f| f(&mut p[0])).unwrap();
        // Second step with the same gradient: bias-corrected moments stay 1.
        let expect2 = expect - lr * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expect2).abs() < 1e-12);
        assert_eq!(adam.t, 2);
    }
}
