//! First-order optimizers over flat parameter slices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// Writes the update to subtract from the parameters into `delta`.
    pub fn delta(&mut self, grads: &[f64], delta: &mut [f64]) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((m, v), &g), d) in self.m.iter_mut().zip(&mut self.v).zip(grads).zip(delta) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *d = self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr, n_params)),
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
        }
    }

    /// Apply one update in place. Returns false when every update was zero.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> bool {
        let mut delta = vec![0.0; params.len()];
        match self {
            Optimizer::Adam(adam) => adam.delta(grads, &mut delta),
            Optimizer::Sgd { lr } => {
                for (d, &g) in delta.iter_mut().zip(grads) {
                    *d = *lr * g;
                }
            }
        }
        let mut moved = false;
        for (p, d) in params.iter_mut().zip(&delta) {
            if *d != 0.0 {
                *p -= d;
                moved = true;
            }
        }
        moved
    }
}
