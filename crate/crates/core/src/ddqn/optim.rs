//! Adam optimizer and global-norm gradient clipping.

use std::path::Path;

use crate::qnet::tensor::Mat;
use crate::qnet::QNetworkParams;

use super::TrainError;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam state, one (m, v) pair per trainable tensor in `named_tensors`
/// order.
pub struct Adam {
    pub learning_rate: f64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: u64,
}

impl Adam {
    pub fn new(params: &QNetworkParams, learning_rate: f64) -> Adam {
        let zeros: Vec<Mat> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| Mat::zeros(t.rows(), t.cols()))
            .collect();
        Adam { learning_rate, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update; `grads` is a `zeros_like` container filled by backward.
    pub fn step(&mut self, params: &mut QNetworkParams, grads: &QNetworkParams) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let grad_tensors = grads.named_tensors();
        for (i, (_, p)) in params.named_tensors_mut().into_iter().enumerate() {
            let g = grad_tensors[i].1;
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pv, gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
                *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }

    /// Persist as a tensor container sidecar next to the checkpoint.
    pub fn save(&self, params: &QNetworkParams, path: &Path) -> Result<(), TrainError> {
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        let mut tensors: Vec<(String, &Mat)> = Vec::with_capacity(2 * names.len());
        for (name, m) in names.iter().zip(&self.m) {
            tensors.push((format!("m.{name}"), m));
        }
        for (name, v) in names.iter().zip(&self.v) {
            tensors.push((format!("v.{name}"), v));
        }
        crate::qnet::write_optimizer_container(path, self.t, &tensors)?;
        Ok(())
    }

    pub fn load(params: &QNetworkParams, learning_rate: f64, path: &Path) -> Result<Adam, TrainError> {
        let (t, mut by_name) = crate::qnet::read_optimizer_container(path)?;
        let mut adam = Adam::new(params, learning_rate);
        adam.t = t;
        for (i, (name, tensor)) in params.named_tensors().into_iter().enumerate() {
            let m = by_name
                .remove(&format!("m.{name}"))
                .ok_or_else(|| TrainError::BadState(format!("optimizer state missing m.{name}")))?;
            let v = by_name
                .remove(&format!("v.{name}"))
                .ok_or_else(|| TrainError::BadState(format!("optimizer state missing v.{name}")))?;
            if m.shape() != tensor.shape() || v.shape() != tensor.shape() {
                return Err(TrainError::BadState(format!("optimizer state shape mismatch at {name}")));
            }
            adam.m[i] = m;
            adam.v[i] = v;
        }
        Ok(adam)
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut QNetworkParams, max_norm: f64) -> f64 {
    let norm_sq: f64 = grads.named_tensors().iter().map(|(_, t)| t.frobenius_sq()).sum();
    let norm = norm_sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, t) in grads.named_tensors_mut() {
            t.scale_assign(scale);
        }
    }
    norm
}
