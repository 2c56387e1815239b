//! Mean per-joint position error.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Norms below this are treated as coincident points with zero subgradient.
pub const MPJPE_NORM_FLOOR: f64 = 1e-12;

fn check_shapes(pred: &Tensor, target: &Tensor) -> Result<(usize, usize, usize)> {
    if pred.dims() != target.dims() || pred.dims().len() != 3 {
        return Err(Error::shape(format!(
            "mpjpe: pred {:?} vs target {:?} (want equal (N, K, D))",
            pred.dims(),
            target.dims()
        )));
    }
    let d = pred.dims();
    Ok((d[0], d[1], d[2]))
}

/// `(1/N)(1/K) sum_i sum_k || pred[i,k,:] - target[i,k,:] ||_2`
pub fn mpjpe(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let (n, k, _) = check_shapes(pred, target)?;
    Ok(mpjpe_sum(pred, target)? / (n as f64 * k as f64))
}

/// Unnormalized sum of per-joint norms; lets callers batch a dataset pass
/// and divide by the global sample count once (batch-size invariant).
pub fn mpjpe_sum(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let (n, k, d) = check_shapes(pred, target)?;
    let (ps, ts) = (pred.data(), target.data());
    let mut total = 0.0;
    for i in 0..n * k {
        let mut sq = 0.0;
        for j in 0..d {
            let diff = ps[i * d + j] - ts[i * d + j];
            sq += diff * diff;
        }
        total += sq.sqrt();
    }
    Ok(total)
}

/// Gradient of `mpjpe` w.r.t. pred: per-joint unit vector scaled by
/// `1/(N*K)`; zero where the per-joint norm is below the floor.
pub fn mpjpe_backward(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let (n, k, d) = check_shapes(pred, target)?;
    let scale = 1.0 / (n as f64 * k as f64);
    let mut grad = Tensor::zeros(pred.dims());
    let (ps, ts) = (pred.data(), target.data());
    let gs = grad.data_mut();
    for i in 0..n * k {
        let mut sq = 0.0;
        for j in 0..d {
            let diff = ps[i * d + j] - ts[i * d + j];
            sq += diff * diff;
        }
        let norm = sq.sqrt();
        if norm < MPJPE_NORM_FLOOR {
            continue;
        }
        for j in 0..d {
            gs[i * d + j] = scale * (ps[i * d + j] - ts[i * d + j]) / norm;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(dims, data.to_vec()).unwrap()
    }

    #[test]
    fn zero_when_prediction_matches_target() {
        let p = t(&[2, 3, 1], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(mpjpe(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluation_one_dim() {
        // N=1, K=2, D=1: |1-4| and |2-6| -> (3+4)/2 = 3.5
        let p = t(&[1, 2, 1], &[1.0, 2.0]);
        let y = t(&[1, 2, 1], &[4.0, 6.0]);
        assert_eq!(mpjpe(&p, &y).unwrap(), 3.5);
    }

    #[test]
    fn hand_evaluation_three_dim_norm() {
        let p = t(&[1, 1, 3], &[3.0, 4.0, 0.0]);
        let y = t(&[1, 1, 3], &[0.0, 0.0, 0.0]);
        assert_eq!(mpjpe(&p, &y).unwrap(), 5.0);
    }

    #[test]
    fn backward_is_scaled_unit_vector_and_zero_at_coincidence() {
        let p = t(&[1, 2, 2], &[3.0, 4.0, 1.0, 1.0]);
        let y = t(&[1, 2, 2], &[0.0, 0.0, 1.0, 1.0]);
        let g = mpjpe_backward(&p, &y).unwrap();
        // joint 0: (3,4)/5 scaled by 1/2
        assert!((g.data()[0] - 0.5 * 0.6).abs() < 1e-15);
        assert!((g.data()[1] - 0.5 * 0.8).abs() < 1e-15);
        // joint 1 coincident
        assert_eq!(&g.data()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = t(&[1, 2, 1], &[0.0, 0.0]);
        let y = t(&[2, 1, 1], &[0.0, 0.0]);
        assert!(mpjpe(&p, &y).is_err());
    }
}
