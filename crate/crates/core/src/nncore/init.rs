//! Weight initialization.

use rand::Rng;
use rand_distr::StandardNormal;

use super::rng::rng_from_seed;
use super::tensor::Tensor;

/// Zero-mean normal draws with variance 2/fan_in, deterministic per seed.
pub fn kaiming_init(dims: &[usize], fan_in: usize, seed: u64) -> Tensor {
    assert!(fan_in >= 1, "fan_in must be >= 1");
    let std = (2.0 / fan_in as f64).sqrt();
    let mut rng = rng_from_seed(seed);
    let len: usize = dims.iter().product();
    let data = (0..len)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * std
        })
        .collect();
    Tensor::from_vec(dims, data).expect("dims/product consistent by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_identical_tensor() {
        let a = kaiming_init(&[32, 16], 16, 99);
        let b = kaiming_init(&[32, 16], 16, 99);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn sample_statistics_match_fan_in_two() {
        // fan_in 2 -> variance 2/2 = 1.0
        let n = 1_000_000usize;
        let t = kaiming_init(&[n], 2, 1234);
        let mean = t.data().iter().sum::<f64>() / n as f64;
        let var = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.02, "sample variance {var}");
        // CLT bound: |mean| < 3 * sigma / sqrt(n)
        let bound = 3.0 / (n as f64).sqrt();
        assert!(mean.abs() < bound, "sample mean {mean} vs bound {bound}");
    }
}
