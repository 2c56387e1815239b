//! The two lifting architectures, parameter counting, and checkpoint I/O.

mod checkpoint;
mod linear;
mod temporal;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, TrainingMeta};
pub use linear::LinearModel;
pub use temporal::TemporalModel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{Backprop, Mode, Param, Tensor};

/// Per-frame residual MLP description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelSpec {
    /// 2K input coordinates.
    pub in_width: usize,
    /// Hidden channel count C.
    pub hidden: usize,
    pub n_blocks: usize,
    /// K output coordinates.
    pub out_width: usize,
    pub dropout: f64,
}

impl LinearModelSpec {
    pub fn new(keypoints: usize, hidden: usize, dropout: f64) -> Self {
        LinearModelSpec {
            in_width: 2 * keypoints,
            hidden,
            n_blocks: 1,
            out_width: keypoints,
            dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden < 1 || self.n_blocks < 1 || self.in_width < 1 || self.out_width < 1 {
            return Err(Error::validation("linear spec: all sizes must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("linear spec: dropout must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Temporal convolutional residual network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalModelSpec {
    /// 2K input channels.
    pub in_features: usize,
    /// Hidden channel count C.
    pub channels: usize,
    /// First width is the input convolution, the rest one residual block
    /// each; the receptive field is the product.
    pub filter_widths: Vec<usize>,
    /// K output channels.
    pub out_features: usize,
    pub dropout: f64,
}

impl TemporalModelSpec {
    pub fn new(keypoints: usize, channels: usize, filter_widths: Vec<usize>, dropout: f64) -> Self {
        TemporalModelSpec {
            in_features: 2 * keypoints,
            channels,
            filter_widths,
            out_features: keypoints,
            dropout,
        }
    }

    pub fn receptive_field(&self) -> usize {
        self.filter_widths.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels < 1 || self.in_features < 1 || self.out_features < 1 {
            return Err(Error::validation("temporal spec: all sizes must be >= 1"));
        }
        if self.filter_widths.is_empty() {
            return Err(Error::validation("temporal spec: needs at least one filter width"));
        }
        if self.filter_widths.iter().any(|w| *w != 3 && *w != 5) {
            return Err(Error::validation(format!(
                "temporal spec: filter widths must be 3 or 5 (got {:?})",
                self.filter_widths
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("temporal spec: dropout must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Tagged architecture description stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Linear(LinearModelSpec),
    Temporal(TemporalModelSpec),
}

/// Decompose a temporal window into filter widths: all 3s first, then 5s.
/// Windows with any other prime factor are unsupported.
pub fn window_to_widths(window: usize) -> Result<Vec<usize>> {
    let supported = "3, 5, 9, 15, 25, 27, 45, 75, 81, 135, 225, 243";
    if window < 3 {
        return Err(Error::UnsupportedWindow {
            window,
            supported: supported.into(),
        });
    }
    let mut rest = window;
    let mut widths = Vec::new();
    while rest % 3 == 0 {
        widths.push(3);
        rest /= 3;
    }
    while rest % 5 == 0 {
        widths.push(5);
        rest /= 5;
    }
    if rest != 1 {
        return Err(Error::UnsupportedWindow {
            window,
            supported: supported.into(),
        });
    }
    Ok(widths)
}

/// A built model of either architecture.
#[derive(Debug, Clone)]
pub enum Model {
    Linear(LinearModel),
    Temporal(TemporalModel),
}

impl Model {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Model::Linear(m) => m.forward(x, mode),
            Model::Temporal(m) => m.forward(x, mode),
        }
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<()> {
        match self {
            Model::Linear(m) => m.backward(gy),
            Model::Temporal(m) => m.backward(gy),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Model::Linear(m) => m.params_mut(),
            Model::Temporal(m) => m.params_mut(),
        }
    }

    pub fn set_bn_momentum(&mut self, momentum: f64) {
        match self {
            Model::Linear(m) => m.set_bn_momentum(momentum),
            Model::Temporal(m) => m.set_bn_momentum(momentum),
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Linear(m) => ModelSpec::Linear(m.spec.clone()),
            Model::Temporal(m) => ModelSpec::Temporal(m.spec.clone()),
        }
    }

    /// Parameter and running-stat tensors in declaration order.
    pub fn tensor_entries(&self) -> Vec<(String, &Tensor)> {
        match self {
            Model::Linear(m) => m.tensor_entries(),
            Model::Temporal(m) => m.tensor_entries(),
        }
    }

    pub fn tensor_entries_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            Model::Linear(m) => m.tensor_entries_mut(),
            Model::Temporal(m) => m.tensor_entries_mut(),
        }
    }
}

/// Count every trainable real (weights, biases, gamma, beta); running
/// statistics are not trainable and are excluded.
pub fn param_count(model: &mut Model) -> usize {
    model.params_mut().iter().map(|p| p.value.len()).sum()
}

pub fn build_linear(spec: &LinearModelSpec, seed: u64) -> Result<Model> {
    Ok(Model::Linear(LinearModel::build(spec, seed)?))
}

pub fn build_temporal(spec: &TemporalModelSpec, seed: u64) -> Result<Model> {
    Ok(Model::Temporal(TemporalModel::build(spec, seed)?))
}

pub fn build_from_spec(spec: &ModelSpec, seed: u64) -> Result<Model> {
    match spec {
        ModelSpec::Linear(s) => build_linear(s, seed),
        ModelSpec::Temporal(s) => build_temporal(s, seed),
    }
}

impl Backprop for Model {
    fn forward_mode(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.forward(x, mode)
    }

    fn backward(&mut self, gy: &Tensor) -> Result<()> {
        Model::backward(self, gy)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Model::params_mut(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_factorizations() {
        assert_eq!(window_to_widths(243).unwrap(), vec![3, 3, 3, 3, 3]);
        assert_eq!(window_to_widths(135).unwrap(), vec![3, 3, 3, 5]);
        assert_eq!(window_to_widths(15).unwrap(), vec![3, 5]);
        assert_eq!(window_to_widths(3).unwrap(), vec![3]);
        assert_eq!(window_to_widths(25).unwrap(), vec![5, 5]);
    }

    #[test]
    fn unsupported_windows_list_supported_values() {
        for bad in [1, 2, 10, 21, 49] {
            let err = window_to_widths(bad).unwrap_err();
            assert!(err.to_string().contains("135"), "{err}");
        }
    }
}
