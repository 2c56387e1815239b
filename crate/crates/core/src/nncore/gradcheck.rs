//! Finite-difference verification of analytic gradients.

use crate::error::Result;

use super::layers::{Mode, Param};
use super::loss::{mpjpe, mpjpe_backward};
use super::tensor::Tensor;

/// Anything trainable by the harness: forward, loss-gradient backward, and
/// access to its parameters.
pub trait Backprop {
    fn forward_mode(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;
    fn backward(&mut self, gy: &Tensor) -> Result<()>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter holding the worst element.
    pub worst_param: String,
    /// Worst relative error per parameter, in declaration order.
    pub per_param: Vec<(String, f64)>,
}

/// Relative error with an absolute floor so near-zero gradients compare by
/// absolute difference instead of blowing up on finite-difference noise.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

fn as_nk1(y: Tensor) -> Result<Tensor> {
    match y.dims().len() {
        2 => {
            let dims = [y.dims()[0], y.dims()[1], 1];
            y.reshape(&dims)
        }
        3 => Ok(y),
        _ => Err(crate::error::Error::shape(format!(
            "model output rank {} unsupported by mpjpe",
            y.dims().len()
        ))),
    }
}

fn eval_loss(model: &mut impl Backprop, x: &Tensor, targets: &Tensor) -> Result<f64> {
    let pred = as_nk1(model.forward_mode(x, Mode::Eval)?)?;
    mpjpe(&pred, targets)
}

/// Compare the supplied per-parameter gradients against central finite
/// differences of the eval-mode MPJPE loss.
pub fn fd_compare(
    model: &mut impl Backprop,
    x: &Tensor,
    targets: &Tensor,
    eps: f64,
    analytic: &[(String, Tensor)],
) -> Result<GradCheckReport> {
    let mut per_param = Vec::with_capacity(analytic.len());
    let mut max_rel_err = 0.0f64;
    let mut worst_param = String::new();
    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for ei in 0..grad.len() {
            let orig = model.params_mut()[pi].value.data()[ei];
            model.params_mut()[pi].value.data_mut()[ei] = orig + eps;
            let lp = eval_loss(model, x, targets)?;
            model.params_mut()[pi].value.data_mut()[ei] = orig - eps;
            let lm = eval_loss(model, x, targets)?;
            model.params_mut()[pi].value.data_mut()[ei] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let e = rel_err(grad.data()[ei], fd);
            if e > worst {
                worst = e;
            }
        }
        if worst > max_rel_err {
            max_rel_err = worst;
            worst_param = name.clone();
        }
        per_param.push((name.clone(), worst));
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst_param,
        per_param,
    })
}

/// Run one eval-mode forward/backward, then check every parameter gradient
/// against central finite differences of the scalar loss.
pub fn grad_check(
    model: &mut impl Backprop,
    x: &Tensor,
    targets: &Tensor,
    eps: f64,
) -> Result<GradCheckReport> {
    model.zero_grads();
    let pred_raw = model.forward_mode(x, Mode::Eval)?;
    let out_dims = pred_raw.dims().to_vec();
    let pred = as_nk1(pred_raw)?;
    let grad = mpjpe_backward(&pred, targets)?.reshape(&out_dims)?;
    model.backward(&grad)?;
    let analytic: Vec<(String, Tensor)> = model
        .params_mut()
        .iter()
        .map(|p| (p.name.clone(), p.grad.clone()))
        .collect();
    model.zero_grads();
    fd_compare(model, x, targets, eps, &analytic)
}
