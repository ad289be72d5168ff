//! AdamW with decoupled weight decay.

use crate::model::{OptimState, ParamSet};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: OptimState,
    /// Tensors that receive updates; frozen ones are left untouched.
    trainable: Vec<bool>,
}

impl AdamW {
    pub fn new(params: &ParamSet<f32>, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: OptimState {
                t: 0,
                m: params.zeros_like(),
                v: params.zeros_like(),
            },
            trainable: vec![true; params.len()],
        }
    }

    pub fn with_state(mut self, state: OptimState) -> Self {
        self.state = state;
        self
    }

    /// Freezes every tensor whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, params: &ParamSet<f32>, prefix: &str) {
        for (t, name) in self.trainable.iter_mut().zip(params.names()) {
            if name.starts_with(prefix) {
                *t = false;
            }
        }
    }

    fn decays(name: &str, shape: &[usize]) -> bool {
        shape.len() == 2 && name.ends_with(".weight")
    }

    pub fn step(&mut self, params: &mut ParamSet<f32>, grads: &ParamSet<f32>) {
        let s = &mut self.state;
        s.t += 1;
        let t = s.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let names = params.names().to_vec();
        let shapes = params.shapes().to_vec();
        for (i, values) in params.values_mut().iter_mut().enumerate() {
            if !self.trainable[i] {
                continue;
            }
            let decay = if Self::decays(&names[i], &shapes[i]) {
                (1.0 - self.lr * self.weight_decay) as f32
            } else {
                1.0
            };
            let g = &grads.values()[i];
            let m = &mut s.m.values_mut()[i];
            let v = &mut s.v.values_mut()[i];
            for j in 0..values.len() {
                let gj = g[j] as f64;
                let mj = b1 * m[j] as f64 + (1.0 - b1) * gj;
                let vj = b2 * v[j] as f64 + (1.0 - b2) * gj * gj;
                m[j] = mj as f32;
                v[j] = vj as f32;
                let update = self.lr * (mj / bc1) / ((vj / bc2).sqrt() + self.eps);
                values[j] = values[j] * decay - update as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CrossRefModel, ModelConfig};

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let m = CrossRefModel::<f32>::new(ModelConfig::tiny(), 0).unwrap();
        let mut p = m.params().clone();
        let before = p.clone();
        let mut g = p.zeros_like();
        for v in g.values_mut() {
            v.iter_mut().enumerate().for_each(|(i, x)| *x = if i % 2 == 0 { 0.5 } else { -2.0 });
        }
        let mut opt = AdamW::new(&p, 1e-3, 0.0);
        opt.step(&mut p, &g);
        for t in 0..p.len() {
            for (i, (a, b)) in p.values()[t].iter().zip(&before.values()[t]).enumerate() {
                let want = if i % 2 == 0 { -1e-3 } else { 1e-3 };
                assert!(((a - b) as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn decay_only_on_linear_weights_and_frozen_untouched() {
        let m = CrossRefModel::<f32>::new(ModelConfig::tiny(), 0).unwrap();
        let mut p = m.params().clone();
        for v in p.values_mut() {
            v.iter_mut().for_each(|x| *x = 1.0);
        }
        let g = p.zeros_like();
        let mut opt = AdamW::new(&p, 0.1, 0.5);
        opt.freeze_prefix(&p, "encoder.");
        opt.step(&mut p, &g);
        for t in 0..p.len() {
            let name = &p.names()[t];
            let want = if name.starts_with("encoder.") {
                1.0
            } else if p.shapes()[t].len() == 2 && name.ends_with(".weight") {
                0.95
            } else {
                1.0
            };
            assert!(p.values()[t].iter().all(|v| (*v - want).abs() < 1e-7), "{name}");
        }
    }
}
