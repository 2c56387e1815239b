//! Layers with exact reverse-mode backward passes.
//!
//! Free functions hold the math; the structs own parameters and forward
//! caches and are what the models are wired from. Conventions:
//!
//! - linear: `y = x W + b`, `x` is `(batch, in)`, `W` is `(in, out)` row-major.
//! - conv1d: valid (no padding) cross-correlation,
//!   `y[b,o,t] = sum_{c,k} W[o,c,k] * x[b,c, t*stride + k*dilation] + bias[o]`.
//! - batchnorm: biased batch variance; running stats updated as
//!   `running <- (1 - momentum) * running + momentum * batch_stat`.
//! - dropout: inverted (survivors scaled by `1/(1-p)`), mask derived from
//!   `(seed, call index)` so training is replayable.

use rand::Rng;

use crate::error::{Error, Result};

use super::rng::{derive_seed, rng_from_seed};
use super::tensor::Tensor;

/// Forward-pass mode: training uses batch statistics and active dropout,
/// eval uses running statistics and identity dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Trainable tensor with gradient and Adam state.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step_count: u64,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let dims = value.dims().to_vec();
        Param {
            name: name.into(),
            value,
            grad: Tensor::zeros(&dims),
            adam_m: Tensor::zeros(&dims),
            adam_v: Tensor::zeros(&dims),
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

// ── linear ──────────────────────────────────────────────────────────────────

pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (xd, wd) = (x.dims(), w.dims());
    if xd.len() != 2 || wd.len() != 2 || xd[1] != wd[0] || b.dims() != [wd[1]] {
        return Err(Error::shape(format!(
            "linear_forward: x {:?} w {:?} b {:?}",
            xd,
            wd,
            b.dims()
        )));
    }
    let (batch, n_in, n_out) = (xd[0], xd[1], wd[1]);
    let mut y = Tensor::zeros(&[batch, n_out]);
    let (xs, ws, bs) = (x.data(), w.data(), b.data());
    let ys = y.data_mut();
    for bi in 0..batch {
        let yrow = &mut ys[bi * n_out..(bi + 1) * n_out];
        yrow.copy_from_slice(bs);
        for i in 0..n_in {
            let xv = xs[bi * n_in + i];
            if xv == 0.0 {
                continue;
            }
            let wrow = &ws[i * n_out..(i + 1) * n_out];
            for (yo, wo) in yrow.iter_mut().zip(wrow.iter()) {
                *yo += xv * wo;
            }
        }
    }
    Ok(y)
}

/// Gradients of `y = x W + b` given upstream `gy`: returns `(gx, gw, gb)`.
pub fn linear_backward(x: &Tensor, w: &Tensor, gy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (xd, wd, gd) = (x.dims(), w.dims(), gy.dims());
    if gd.len() != 2 || gd[0] != xd[0] || gd[1] != wd[1] {
        return Err(Error::shape(format!(
            "linear_backward: x {:?} w {:?} gy {:?}",
            xd, wd, gd
        )));
    }
    let (batch, n_in, n_out) = (xd[0], xd[1], wd[1]);
    let mut gx = Tensor::zeros(&[batch, n_in]);
    let mut gw = Tensor::zeros(&[n_in, n_out]);
    let mut gb = Tensor::zeros(&[n_out]);
    let (xs, ws, gys) = (x.data(), w.data(), gy.data());
    {
        let gbs = gb.data_mut();
        for bi in 0..batch {
            let grow = &gys[bi * n_out..(bi + 1) * n_out];
            for (o, g) in grow.iter().enumerate() {
                gbs[o] += g;
            }
        }
    }
    {
        let gws = gw.data_mut();
        for bi in 0..batch {
            let grow = &gys[bi * n_out..(bi + 1) * n_out];
            for i in 0..n_in {
                let xv = xs[bi * n_in + i];
                if xv == 0.0 {
                    continue;
                }
                let gwrow = &mut gws[i * n_out..(i + 1) * n_out];
                for (gw_o, g) in gwrow.iter_mut().zip(grow.iter()) {
                    *gw_o += xv * g;
                }
            }
        }
    }
    {
        let gxs = gx.data_mut();
        for bi in 0..batch {
            let grow = &gys[bi * n_out..(bi + 1) * n_out];
            for i in 0..n_in {
                let wrow = &ws[i * n_out..(i + 1) * n_out];
                let mut acc = 0.0;
                for (wo, g) in wrow.iter().zip(grow.iter()) {
                    acc += wo * g;
                }
                gxs[bi * n_in + i] = acc;
            }
        }
    }
    Ok((gx, gw, gb))
}

/// Fully connected layer with input cache.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    cache_x: Option<Tensor>,
}

impl Linear {
    pub fn new(w: Param, b: Param) -> Self {
        Linear {
            w,
            b,
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = linear_forward(x, &self.w.value, &self.b.value)?;
        self.cache_x = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::shape("linear backward before forward"))?;
        let (gx, gw, gb) = linear_backward(x, &self.w.value, gy)?;
        self.w.grad.add_assign(&gw)?;
        self.b.grad.add_assign(&gb)?;
        Ok(gx)
    }
}

// ── conv1d ──────────────────────────────────────────────────────────────────

/// Output length of a valid 1-d convolution, or None when the input is
/// shorter than the receptive footprint.
pub fn conv1d_out_len(time: usize, kernel: usize, stride: usize, dilation: usize) -> Option<usize> {
    let footprint = (kernel - 1) * dilation + 1;
    if time < footprint {
        None
    } else {
        Some((time - footprint) / stride + 1)
    }
}

pub fn conv1d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    dilation: usize,
) -> Result<Tensor> {
    let (xd, wd) = (x.dims(), w.dims());
    if xd.len() != 3 || wd.len() != 3 || xd[1] != wd[1] || b.dims() != [wd[0]] {
        return Err(Error::shape(format!(
            "conv1d_forward: x {:?} w {:?} b {:?}",
            xd,
            wd,
            b.dims()
        )));
    }
    let (batch, c_in, time) = (xd[0], xd[1], xd[2]);
    let (c_out, kernel) = (wd[0], wd[2]);
    let t_out = conv1d_out_len(time, kernel, stride, dilation).ok_or_else(|| {
        Error::shape(format!(
            "conv1d_forward: time {} shorter than receptive footprint {} (kernel {}, dilation {})",
            time,
            (kernel - 1) * dilation + 1,
            kernel,
            dilation
        ))
    })?;
    let mut y = Tensor::zeros(&[batch, c_out, t_out]);
    let (xs, ws, bs) = (x.data(), w.data(), b.data());
    let ys = y.data_mut();
    for bi in 0..batch {
        for o in 0..c_out {
            let yrow = &mut ys[(bi * c_out + o) * t_out..(bi * c_out + o + 1) * t_out];
            yrow.iter_mut().for_each(|v| *v = bs[o]);
            for c in 0..c_in {
                let xrow = &xs[(bi * c_in + c) * time..(bi * c_in + c + 1) * time];
                let wrow = &ws[(o * c_in + c) * kernel..(o * c_in + c + 1) * kernel];
                for (k, wv) in wrow.iter().enumerate() {
                    if *wv == 0.0 {
                        continue;
                    }
                    let base = k * dilation;
                    for (t, yo) in yrow.iter_mut().enumerate() {
                        *yo += wv * xrow[t * stride + base];
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradients of the valid cross-correlation: returns `(gx, gw, gb)`.
pub fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    dilation: usize,
    gy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (xd, wd, gd) = (x.dims(), w.dims(), gy.dims());
    let (batch, c_in, time) = (xd[0], xd[1], xd[2]);
    let (c_out, kernel) = (wd[0], wd[2]);
    let t_out = conv1d_out_len(time, kernel, stride, dilation)
        .ok_or_else(|| Error::shape("conv1d_backward: input shorter than footprint"))?;
    if gd != [batch, c_out, t_out] {
        return Err(Error::shape(format!(
            "conv1d_backward: gy {:?} expected {:?}",
            gd,
            [batch, c_out, t_out]
        )));
    }
    let mut gx = Tensor::zeros(&[batch, c_in, time]);
    let mut gw = Tensor::zeros(&[c_out, c_in, kernel]);
    let mut gb = Tensor::zeros(&[c_out]);
    let (xs, ws, gys) = (x.data(), w.data(), gy.data());
    {
        let gbs = gb.data_mut();
        for bi in 0..batch {
            for o in 0..c_out {
                let grow = &gys[(bi * c_out + o) * t_out..(bi * c_out + o + 1) * t_out];
                gbs[o] += grow.iter().sum::<f64>();
            }
        }
    }
    {
        let gws = gw.data_mut();
        let gxs = gx.data_mut();
        for bi in 0..batch {
            for o in 0..c_out {
                let grow = &gys[(bi * c_out + o) * t_out..(bi * c_out + o + 1) * t_out];
                for c in 0..c_in {
                    let xrow = &xs[(bi * c_in + c) * time..(bi * c_in + c + 1) * time];
                    let wrow = &ws[(o * c_in + c) * kernel..(o * c_in + c + 1) * kernel];
                    let gwrow = &mut gws[(o * c_in + c) * kernel..(o * c_in + c + 1) * kernel];
                    let gxrow = &mut gxs[(bi * c_in + c) * time..(bi * c_in + c + 1) * time];
                    for k in 0..kernel {
                        let base = k * dilation;
                        let wv = wrow[k];
                        let mut acc = 0.0;
                        for (t, g) in grow.iter().enumerate() {
                            let i = t * stride + base;
                            acc += g * xrow[i];
                            gxrow[i] += g * wv;
                        }
                        gwrow[k] += acc;
                    }
                }
            }
        }
    }
    Ok((gx, gw, gb))
}

/// 1-d convolution layer (strided training execution).
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: Param,
    pub b: Param,
    pub stride: usize,
    pub dilation: usize,
    cache_x: Option<Tensor>,
}

impl Conv1d {
    pub fn new(w: Param, b: Param, stride: usize, dilation: usize) -> Self {
        Conv1d {
            w,
            b,
            stride,
            dilation,
            cache_x: None,
        }
    }

    pub fn kernel(&self) -> usize {
        self.w.dims_kernel()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = conv1d_forward(x, &self.w.value, &self.b.value, self.stride, self.dilation)?;
        self.cache_x = Some(x.clone());
        Ok(y)
    }

    /// Same weights executed with explicit stride/dilation; no cache (eval only).
    pub fn forward_with(&self, x: &Tensor, stride: usize, dilation: usize) -> Result<Tensor> {
        conv1d_forward(x, &self.w.value, &self.b.value, stride, dilation)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::shape("conv1d backward before forward"))?;
        let (gx, gw, gb) = conv1d_backward(x, &self.w.value, self.stride, self.dilation, gy)?;
        self.w.grad.add_assign(&gw)?;
        self.b.grad.add_assign(&gb)?;
        Ok(gx)
    }
}

impl Param {
    fn dims_kernel(&self) -> usize {
        *self.value.dims().last().unwrap()
    }
}

// ── batch normalization ─────────────────────────────────────────────────────

/// Per-channel batch normalization over `(batch, channels)` or
/// `(batch, channels, time)` input.
#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNormState {
    pub fn new(name_prefix: &str, channels: usize) -> Self {
        BatchNormState {
            gamma: Param::new(format!("{name_prefix}.gamma"), Tensor::filled(&[channels], 1.0)),
            beta: Param::new(format!("{name_prefix}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            momentum: 0.1,
            epsilon: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn set_momentum(&mut self, momentum: f64) {
        self.momentum = momentum;
    }

    /// (rows per channel, channel stride layout) for 2-d/3-d inputs.
    fn layout(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let d = x.dims();
        let c = self.channels();
        match d.len() {
            2 if d[1] == c => Ok((d[0], 1, 1)),
            3 if d[1] == c => Ok((d[0], d[2], d[2])),
            _ => Err(Error::shape(format!(
                "batchnorm: input {:?} incompatible with {} channels",
                d, c
            ))),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (batch, time, _) = self.layout(x)?;
        let c = self.channels();
        let m = batch * time;
        if mode == Mode::Train && m < 2 {
            return Err(Error::validation(
                "batchnorm train mode requires batch*time >= 2 per channel (variance undefined)",
            ));
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut acc = 0.0;
                    self.for_channel(x, ch, |v| acc += v);
                    let mu = acc / m as f64;
                    let mut acc2 = 0.0;
                    self.for_channel(x, ch, |v| acc2 += (v - mu) * (v - mu));
                    mean[ch] = mu;
                    var[ch] = acc2 / m as f64; // biased
                }
                // running <- (1 - momentum) * running + momentum * batch_stat
                let mom = self.momentum;
                for ch in 0..c {
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = (1.0 - mom) * *rm + mom * mean[ch];
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = (1.0 - mom) * *rv + mom * var[ch];
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut x_hat = Tensor::zeros(x.dims());
        let mut y = Tensor::zeros(x.dims());
        {
            let xs = x.data();
            let xh = x_hat.data_mut();
            let ys = y.data_mut();
            let gs = self.gamma.value.data();
            let bs = self.beta.value.data();
            for bi in 0..batch {
                for ch in 0..c {
                    let off = (bi * c + ch) * time;
                    for t in 0..time {
                        let h = (xs[off + t] - mean[ch]) * inv_std[ch];
                        xh[off + t] = h;
                        ys[off + t] = gs[ch] * h + bs[ch];
                    }
                }
            }
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            mode,
        });
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::shape("batchnorm backward before forward"))?;
        let (batch, time, _) = self.layout(gy)?;
        let c = self.channels();
        let m = (batch * time) as f64;
        let mut gx = Tensor::zeros(gy.dims());
        let gys = gy.data();
        let xh = cache.x_hat.data();
        let gs = self.gamma.value.data();
        let mut ggamma = vec![0.0; c];
        let mut gbeta = vec![0.0; c];
        for ch in 0..c {
            let mut sum_gy = 0.0;
            let mut sum_gy_xh = 0.0;
            for bi in 0..batch {
                let off = (bi * c + ch) * time;
                for t in 0..time {
                    sum_gy += gys[off + t];
                    sum_gy_xh += gys[off + t] * xh[off + t];
                }
            }
            ggamma[ch] = sum_gy_xh;
            gbeta[ch] = sum_gy;
            let scale = gs[ch] * cache.inv_std[ch];
            let gxs = gx.data_mut();
            match cache.mode {
                Mode::Train => {
                    let mean_gy = sum_gy / m;
                    let mean_gy_xh = sum_gy_xh / m;
                    for bi in 0..batch {
                        let off = (bi * c + ch) * time;
                        for t in 0..time {
                            gxs[off + t] = scale
                                * (gys[off + t] - mean_gy - xh[off + t] * mean_gy_xh);
                        }
                    }
                }
                Mode::Eval => {
                    for bi in 0..batch {
                        let off = (bi * c + ch) * time;
                        for t in 0..time {
                            gxs[off + t] = scale * gys[off + t];
                        }
                    }
                }
            }
        }
        for (ch, g) in ggamma.iter().enumerate() {
            self.gamma.grad.data_mut()[ch] += g;
        }
        for (ch, g) in gbeta.iter().enumerate() {
            self.beta.grad.data_mut()[ch] += g;
        }
        Ok(gx)
    }

    fn for_channel(&self, x: &Tensor, ch: usize, mut f: impl FnMut(f64)) {
        let d = x.dims();
        let c = self.channels();
        let time = if d.len() == 3 { d[2] } else { 1 };
        let xs = x.data();
        for bi in 0..d[0] {
            let off = (bi * c + ch) * time;
            for t in 0..time {
                f(xs[off + t]);
            }
        }
    }
}

// ── relu ────────────────────────────────────────────────────────────────────

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0;
        }
    });
    y
}

/// Subgradient 0 at exactly 0.
pub fn relu_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let mut gx = gy.clone();
    for (g, v) in gx.data_mut().iter_mut().zip(x.data().iter()) {
        if *v <= 0.0 {
            *g = 0.0;
        }
    }
    gx
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    cache_x: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = relu_forward(x);
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::shape("relu backward before forward"))?;
        Ok(relu_backward(x, gy))
    }
}

// ── dropout ─────────────────────────────────────────────────────────────────

/// Inverted dropout; the mask for call `n` depends only on `(seed, n)`.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f64,
    seed: u64,
    call_index: u64,
    cache_mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0,1)");
        Dropout {
            p,
            seed,
            call_index: 0,
            cache_mask: None,
        }
    }

    /// Rewind the mask stream (used by replay-style tests).
    pub fn reset_calls(&mut self) {
        self.call_index = 0;
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        if mode == Mode::Eval || self.p == 0.0 {
            self.cache_mask = None;
            return x.clone();
        }
        let mut rng = rng_from_seed(derive_seed(self.seed, self.call_index));
        self.call_index += 1;
        let keep = 1.0 - self.p;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                let u: f64 = rng.gen();
                if u < self.p {
                    0.0
                } else {
                    scale
                }
            })
            .collect();
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(mask.iter()) {
            *v *= m;
        }
        self.cache_mask = Some(mask);
        y
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        match &self.cache_mask {
            None => gy.clone(),
            Some(mask) => {
                let mut gx = gy.clone();
                for (g, m) in gx.data_mut().iter_mut().zip(mask.iter()) {
                    *g *= m;
                }
                gx
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(&[rows, cols], data.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity_map() {
        let x = t2(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let w = t2(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::zeros(&[2]);
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn linear_hand_product() {
        // x = (1,2), W = ((1,0),(0,3)), b = (1,1) -> y = (2,7)
        let x = t2(1, 2, &[1.0, 2.0]);
        let w = t2(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let b = Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap();
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[2.0, 7.0]);
    }

    #[test]
    fn linear_shape_mismatch_names_shapes() {
        let x = t2(1, 3, &[0.0; 3]);
        let w = t2(2, 2, &[0.0; 4]);
        let b = Tensor::zeros(&[2]);
        let err = linear_forward(&x, &w, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn conv_kernel_one_identity() {
        let x = Tensor::from_vec(&[1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv1d_forward(&x, &w, &b, 1, 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_hand_cross_correlation() {
        let x = Tensor::from_vec(&[1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv1d_forward(&x, &w, &b, 1, 1).unwrap();
        assert_eq!(y.dims(), &[1, 1, 3]);
        assert_eq!(y.data(), &[-2.0, -2.0, -2.0]);
    }

    #[test]
    fn conv_hand_dilated() {
        let x = Tensor::from_vec(&[1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv1d_forward(&x, &w, &b, 1, 2).unwrap();
        assert_eq!(y.dims(), &[1, 1, 1]);
        assert_eq!(y.data(), &[-4.0]);
    }

    #[test]
    fn conv_rejects_short_input() {
        let x = Tensor::from_vec(&[1, 1, 4], vec![0.0; 4]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 3], vec![0.0; 3]).unwrap();
        let b = Tensor::zeros(&[1]);
        assert!(conv1d_forward(&x, &w, &b, 1, 2).is_err());
    }

    #[test]
    fn conv_stride_equals_decimated_stride_one() {
        // stride s output equals stride-1 output sampled every s
        let mut rng = rng_from_seed(5);
        let x = Tensor::from_vec(&[2, 3, 17], (0..2 * 3 * 17).map(|_| rng.gen::<f64>() - 0.5).collect()).unwrap();
        let w = Tensor::from_vec(&[4, 3, 3], (0..36).map(|_| rng.gen::<f64>() - 0.5).collect()).unwrap();
        let b = Tensor::from_vec(&[4], (0..4).map(|_| rng.gen::<f64>()).collect()).unwrap();
        for stride in [2usize, 3, 5] {
            let dense = conv1d_forward(&x, &w, &b, 1, 1).unwrap();
            let strided = conv1d_forward(&x, &w, &b, stride, 1).unwrap();
            let t_dense = dense.dims()[2];
            let t_str = strided.dims()[2];
            for bi in 0..2 {
                for o in 0..4 {
                    for t in 0..t_str {
                        let a = strided.data()[(bi * 4 + o) * t_str + t];
                        let d = dense.data()[(bi * 4 + o) * t_dense + t * stride];
                        assert_eq!(a, d);
                    }
                }
            }
        }
    }

    #[test]
    fn batchnorm_normalizes_pair() {
        // channel values [0, 2]: mean 1, biased var 1 -> [-1, 1] / sqrt(1 + 1e-5)
        let x = t2(2, 1, &[0.0, 2.0]);
        let mut bn = BatchNormState::new("bn", 1);
        let y = bn.forward(&x, Mode::Train).unwrap();
        let f = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] + f).abs() < 1e-12);
        assert!((y.data()[1] - f).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_zero_mean_unit_var_fixed_point() {
        let x = t2(2, 1, &[-1.0, 1.0]);
        let mut bn = BatchNormState::new("bn", 1);
        let y = bn.forward(&x, Mode::Train).unwrap();
        let f = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - (-1.0 * f)).abs() < 1e-12);
        assert!((y.data()[1] - (1.0 * f)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_momentum_one_copies_batch_stats() {
        let x = t2(4, 2, &[0.5, -1.0, 2.0, 3.0, -0.5, 0.25, 1.0, -2.0]);
        let mut bn = BatchNormState::new("bn", 2);
        bn.set_momentum(1.0);
        let y_train = bn.forward(&x, Mode::Train).unwrap();
        let y_eval = bn.forward(&x, Mode::Eval).unwrap();
        for (a, b) in y_train.data().iter().zip(y_eval.data().iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn batchnorm_rejects_batch_of_one_in_train() {
        let x = t2(1, 3, &[1.0, 2.0, 3.0]);
        let mut bn = BatchNormState::new("bn", 3);
        assert!(bn.forward(&x, Mode::Train).is_err());
    }

    #[test]
    fn dropout_p_zero_and_eval_are_identity() {
        let x = t2(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.0, -9.0]);
        let mut d0 = Dropout::new(0.0, 1);
        assert_eq!(d0.forward(&x, Mode::Train).data(), x.data());
        let mut d = Dropout::new(0.7, 1);
        assert_eq!(d.forward(&x, Mode::Eval).data(), x.data());
    }

    #[test]
    fn dropout_survivor_fraction_and_mean() {
        let n = 1_000_000usize;
        let x = Tensor::filled(&[n], 1.0);
        let mut d = Dropout::new(0.25, 42);
        let y = d.forward(&x, Mode::Train);
        let survivors = y.data().iter().filter(|v| **v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.0025, "survivor fraction {frac}");
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "output mean {mean}");
    }

    #[test]
    fn dropout_mask_replays_per_call_index() {
        let x = Tensor::filled(&[64], 1.0);
        let mut a = Dropout::new(0.5, 9);
        let ya1 = a.forward(&x, Mode::Train);
        let ya2 = a.forward(&x, Mode::Train);
        a.reset_calls();
        let yb1 = a.forward(&x, Mode::Train);
        assert_eq!(ya1.data(), yb1.data());
        assert_ne!(ya1.data(), ya2.data());
    }

    #[test]
    fn relu_subgradient_zero_at_zero() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let gy = Tensor::filled(&[3], 1.0);
        let gx = relu_backward(&x, &gy);
        assert_eq!(gx.data(), &[0.0, 0.0, 1.0]);
    }
}
