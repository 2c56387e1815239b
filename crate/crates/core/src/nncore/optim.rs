//! Adam optimizer.

use crate::error::{Error, Result};

use super::layers::Param;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam update applied in place; grads are zeroed afterward.
///
/// Aborts without mutating anything when any gradient is non-finite.
pub fn adam_step(params: &mut [&mut Param], lr: f64) -> Result<()> {
    adam_step_with(params, lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
}

pub fn adam_step_with(
    params: &mut [&mut Param],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    for p in params.iter() {
        if !p.grad.all_finite() {
            return Err(Error::NonFinite(format!(
                "gradient of parameter '{}' is not finite; step aborted",
                p.name
            )));
        }
    }
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let g = p.grad.data();
        let m = p.adam_m.data_mut();
        let v = p.adam_v.data_mut();
        let val = p.value.data_mut();
        for i in 0..g.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            val[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::tensor::Tensor;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Param::new("w", Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap());
        adam_step(&mut [&mut p], 0.01).unwrap();
        assert_eq!(p.value.data(), &[1.5, -0.5]);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn first_step_with_unit_gradient() {
        // m_hat = 1, v_hat = 1 -> update = -lr / (1 + eps)
        let mut p = Param::new("w", Tensor::zeros(&[1]));
        p.grad.data_mut()[0] = 1.0;
        let lr = 0.001;
        adam_step(&mut [&mut p], lr).unwrap();
        let expect = -lr / (1.0 + ADAM_EPS);
        assert!((p.value.data()[0] - expect).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0, "grads zeroed after step");
    }

    #[test]
    fn matches_scalar_reference_over_ten_steps() {
        // independent scalar Adam recurrence
        let (beta1, beta2, eps, lr) = (ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 0.01);
        let grads = [0.3, -1.2, 0.05, 2.0, -0.7, 0.0, 0.9, -0.9, 1.5, -0.2];
        let mut theta = 0.4f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut p = Param::new("w", Tensor::from_vec(&[1], vec![theta]).unwrap());
        for (t, g) in grads.iter().enumerate() {
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            let m_hat = m / (1.0 - beta1.powi(t as i32 + 1));
            let v_hat = v / (1.0 - beta2.powi(t as i32 + 1));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);

            p.grad.data_mut()[0] = *g;
            adam_step(&mut [&mut p], lr).unwrap();
            assert!((p.value.data()[0] - theta).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_aborts_naming_parameter() {
        let mut p = Param::new("blockX.w", Tensor::zeros(&[1]));
        p.grad.data_mut()[0] = f64::NAN;
        let err = adam_step(&mut [&mut p], 0.01).unwrap_err();
        assert!(err.to_string().contains("blockX.w"));
        assert_eq!(p.step_count, 0);
        assert_eq!(p.value.data()[0], 0.0);
    }
}
