//! The BN-Linear-ReLU unit used for every feature embedding in the
//! kinematics-aware models.

use rand::Rng;

use crate::error::Result;
use crate::nn::params::ParamStore;
use crate::nn::tensor::{Tape, Tid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameter handles plus running batch-norm statistics for one FC unit.
#[derive(Debug, Clone)]
pub struct FcBlock {
    pub in_dim: usize,
    pub out_dim: usize,
    gamma: usize,
    beta: usize,
    weight: usize,
    bias: usize,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl FcBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> FcBlock {
        FcBlock {
            in_dim,
            out_dim,
            gamma: store.add_ones(&format!("{name}.bn.gamma"), &[in_dim]),
            beta: store.add_zeros(&format!("{name}.bn.beta"), &[in_dim]),
            weight: store.add_linear(&format!("{name}.weight"), in_dim, out_dim, rng),
            bias: store.add_zeros(&format!("{name}.bias"), &[out_dim]),
            running_mean: vec![0.0; in_dim],
            running_var: vec![1.0; in_dim],
            momentum: 0.9,
            eps: 1e-5,
        }
    }

    /// Batch norm over the row axis, affine map, ReLU. Train mode folds the
    /// batch statistics into the running estimates; eval mode is pure.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Tid,
        mode: Mode,
    ) -> Result<Tid> {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        let running = match mode {
            Mode::Train => None,
            Mode::Eval => Some((self.running_mean.as_slice(), self.running_var.as_slice())),
        };
        let (normed, batch_stats) = tape.batch_norm(x, gamma, beta, running, self.eps)?;
        if let Some((mu, var)) = batch_stats {
            for j in 0..self.in_dim {
                self.running_mean[j] = self.momentum * self.running_mean[j] + (1.0 - self.momentum) * mu[j];
                self.running_var[j] = self.momentum * self.running_var[j] + (1.0 - self.momentum) * var[j];
            }
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let lin = tape.matmul(normed, w)?;
        let biased = tape.add_bias(lin, b)?;
        Ok(tape.relu(biased))
    }
}

/// Plain Linear layer (no norm, no activation), for output heads and
/// projections.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    weight: usize,
    bias: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Linear {
        Linear {
            in_dim,
            out_dim,
            weight: store.add_linear(&format!("{name}.weight"), in_dim, out_dim, rng),
            bias: store.add_zeros(&format!("{name}.bias"), &[out_dim]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Tid) -> Result<Tid> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let lin = tape.matmul(x, w)?;
        tape.add_bias(lin, b)
    }
}

/// Per-feature affine norm parameters for a layer-norm site.
#[derive(Debug, Clone)]
pub struct NormParams {
    gamma: usize,
    beta: usize,
}

impl NormParams {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> NormParams {
        NormParams {
            gamma: store.add_ones(&format!("{name}.gamma"), &[dim]),
            beta: store.add_zeros(&format!("{name}.beta"), &[dim]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Tid) -> Result<Tid> {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        tape.layer_norm(x, gamma, beta, 1e-5)
    }
}
