//! Temporal convolutional residual network with two weight-equivalent
//! executions: strided (one window in, one centre prediction out; used for
//! training) and dilated (slides over a full sequence, one prediction per
//! valid centre).

use crate::error::{Error, Result};
use crate::nncore::{
    derive_seed, kaiming_init, relu_forward, BatchNormState, Conv1d, Dropout, Mode, Param, Relu,
    Tensor,
};

use super::TemporalModelSpec;

/// conv -> batchnorm -> relu -> dropout
#[derive(Debug, Clone)]
struct ConvStage {
    conv: Conv1d,
    bn: BatchNormState,
    relu: Relu,
    dropout: Dropout,
}

impl ConvStage {
    fn build(
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        dropout: f64,
        seed: u64,
    ) -> ConvStage {
        let w = Param::new(
            format!("{prefix}.conv.w"),
            kaiming_init(&[c_out, c_in, kernel], c_in * kernel, derive_seed(seed, 0)),
        );
        let b = Param::new(format!("{prefix}.conv.b"), Tensor::zeros(&[c_out]));
        ConvStage {
            conv: Conv1d::new(w, b, stride, 1),
            bn: BatchNormState::new(&format!("{prefix}.bn"), c_out),
            relu: Relu::default(),
            dropout: Dropout::new(dropout, derive_seed(seed, 1)),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.conv.forward(x)?;
        let h = self.bn.forward(&h, mode)?;
        let h = self.relu.forward(&h);
        Ok(self.dropout.forward(&h, mode))
    }

    /// Cache-free execution with overridden stride/dilation (eval only).
    fn forward_dilated(&mut self, x: &Tensor, dilation: usize) -> Result<Tensor> {
        let h = self.conv.forward_with(x, 1, dilation)?;
        let h = self.bn.forward(&h, Mode::Eval)?;
        Ok(relu_forward(&h))
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let g = self.dropout.backward(gy);
        let g = self.relu.backward(&g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

/// Centre-aligned temporal decimation: keep indices `(w-1)/2 + j*w`.
fn decimate(x: &Tensor, w: usize) -> Tensor {
    let d = x.dims();
    let (batch, channels, time) = (d[0], d[1], d[2]);
    let t_out = (time - w) / w + 1;
    let offset = (w - 1) / 2;
    let mut out = Tensor::zeros(&[batch, channels, t_out]);
    let xs = x.data();
    let os = out.data_mut();
    for bc in 0..batch * channels {
        let xrow = &xs[bc * time..(bc + 1) * time];
        let orow = &mut os[bc * t_out..(bc + 1) * t_out];
        for (j, o) in orow.iter_mut().enumerate() {
            *o = xrow[offset + j * w];
        }
    }
    out
}

/// Scatter of `decimate`'s gradient back onto the input time axis.
fn decimate_backward(gy: &Tensor, w: usize, time: usize) -> Tensor {
    let d = gy.dims();
    let (batch, channels, t_out) = (d[0], d[1], d[2]);
    let offset = (w - 1) / 2;
    let mut gx = Tensor::zeros(&[batch, channels, time]);
    let gys = gy.data();
    let gxs = gx.data_mut();
    for bc in 0..batch * channels {
        let grow = &gys[bc * t_out..(bc + 1) * t_out];
        let xrow = &mut gxs[bc * time..(bc + 1) * time];
        for (j, g) in grow.iter().enumerate() {
            xrow[offset + j * w] = *g;
        }
    }
    gx
}

/// Symmetric crop of `margin` time steps on each side.
fn trim(x: &Tensor, margin: usize) -> Tensor {
    let d = x.dims();
    let (batch, channels, time) = (d[0], d[1], d[2]);
    let t_out = time - 2 * margin;
    let mut out = Tensor::zeros(&[batch, channels, t_out]);
    let xs = x.data();
    let os = out.data_mut();
    for bc in 0..batch * channels {
        os[bc * t_out..(bc + 1) * t_out]
            .copy_from_slice(&xs[bc * time + margin..bc * time + margin + t_out]);
    }
    out
}

/// Strided conv stage + 1x1 conv stage, with a skip that decimates the block
/// input in time to match the output length.
#[derive(Debug, Clone)]
struct ResBlock {
    s1: ConvStage,
    s2: ConvStage,
    width: usize,
    cache_in_time: usize,
}

impl ResBlock {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.cache_in_time = x.dims()[2];
        let skip = decimate(x, self.width);
        let h = self.s1.forward(x, mode)?;
        let mut h = self.s2.forward(&h, mode)?;
        h.add_assign(&skip)?;
        Ok(h)
    }

    fn forward_dilated(&mut self, x: &Tensor, dilation: usize) -> Result<Tensor> {
        let margin = (self.width - 1) / 2 * dilation;
        let skip = trim(x, margin);
        let h = self.s1.forward_dilated(x, dilation)?;
        let mut h = self.s2.forward_dilated(&h, 1)?;
        h.add_assign(&skip)?;
        Ok(h)
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let g = self.s2.backward(gy)?;
        let mut g = self.s1.backward(&g)?;
        g.add_assign(&decimate_backward(gy, self.width, self.cache_in_time))?;
        Ok(g)
    }
}

/// The temporal lifting model.
///
/// Strided forward consumes a window of exactly the receptive field:
/// `(batch, 2K, R) -> (batch, K, 1)`.
#[derive(Debug, Clone)]
pub struct TemporalModel {
    pub spec: TemporalModelSpec,
    input: ConvStage,
    blocks: Vec<ResBlock>,
    output: Conv1d,
}

impl TemporalModel {
    pub fn build(spec: &TemporalModelSpec, seed: u64) -> Result<TemporalModel> {
        spec.validate()?;
        let w0 = spec.filter_widths[0];
        let input = ConvStage::build(
            "input",
            spec.in_features,
            spec.channels,
            w0,
            w0,
            spec.dropout,
            derive_seed(seed, 1),
        );
        let blocks = spec.filter_widths[1..]
            .iter()
            .enumerate()
            .map(|(i, w)| ResBlock {
                s1: ConvStage::build(
                    &format!("block{i}.a"),
                    spec.channels,
                    spec.channels,
                    *w,
                    *w,
                    spec.dropout,
                    derive_seed(seed, 100 + 2 * i as u64),
                ),
                s2: ConvStage::build(
                    &format!("block{i}.b"),
                    spec.channels,
                    spec.channels,
                    1,
                    1,
                    spec.dropout,
                    derive_seed(seed, 101 + 2 * i as u64),
                ),
                width: *w,
                cache_in_time: 0,
            })
            .collect();
        let output = Conv1d::new(
            Param::new(
                "output.conv.w",
                kaiming_init(
                    &[spec.out_features, spec.channels, 1],
                    spec.channels,
                    derive_seed(seed, 2),
                ),
            ),
            Param::new("output.conv.b", Tensor::zeros(&[spec.out_features])),
            1,
            1,
        );
        Ok(TemporalModel {
            spec: spec.clone(),
            input,
            blocks,
            output,
        })
    }

    pub fn receptive_field(&self) -> usize {
        self.spec.receptive_field()
    }

    /// Strided execution on one window per sample.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let r = self.receptive_field();
        if x.dims().len() != 3 || x.dims()[2] != r {
            return Err(Error::shape(format!(
                "temporal strided forward expects (batch, {}, {}) windows, got {:?}",
                self.spec.in_features,
                r,
                x.dims()
            )));
        }
        let mut h = self.input.forward(x, mode)?;
        for block in &mut self.blocks {
            h = block.forward(&h, mode)?;
        }
        self.output.forward(&h)
    }

    /// Dilated execution over a full sequence `(batch, 2K, T)`, `T >= R`;
    /// emits one prediction per valid centre position. Eval mode only.
    pub fn forward_dilated(&mut self, x: &Tensor) -> Result<Tensor> {
        let r = self.receptive_field();
        if x.dims().len() != 3 || x.dims()[2] < r {
            return Err(Error::shape(format!(
                "temporal dilated forward needs time >= receptive field {} (got {:?})",
                r,
                x.dims()
            )));
        }
        let mut dilation = 1usize;
        let mut h = self.input.forward_dilated(x, dilation)?;
        dilation *= self.spec.filter_widths[0];
        for (i, block) in self.blocks.iter_mut().enumerate() {
            h = block.forward_dilated(&h, dilation)?;
            dilation *= self.spec.filter_widths[i + 1];
        }
        self.output.forward_with(&h, 1, 1)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<()> {
        let mut g = self.output.backward(gy)?;
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        self.input.backward(&g)?;
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        collect_stage(&mut self.input, &mut out);
        for block in &mut self.blocks {
            collect_stage(&mut block.s1, &mut out);
            collect_stage(&mut block.s2, &mut out);
        }
        out.push(&mut self.output.w);
        out.push(&mut self.output.b);
        out
    }

    pub fn set_bn_momentum(&mut self, momentum: f64) {
        self.input.bn.set_momentum(momentum);
        for block in &mut self.blocks {
            block.s1.bn.set_momentum(momentum);
            block.s2.bn.set_momentum(momentum);
        }
    }

    pub fn tensor_entries(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        stage_entries(&self.input, &mut out);
        for block in &self.blocks {
            stage_entries(&block.s1, &mut out);
            stage_entries(&block.s2, &mut out);
        }
        out.push((self.output.w.name.clone(), &self.output.w.value));
        out.push((self.output.b.name.clone(), &self.output.b.value));
        out
    }

    pub fn tensor_entries_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        stage_entries_mut(&mut self.input, &mut out);
        for block in &mut self.blocks {
            stage_entries_mut(&mut block.s1, &mut out);
            stage_entries_mut(&mut block.s2, &mut out);
        }
        out.push((self.output.w.name.clone(), &mut self.output.w.value));
        out.push((self.output.b.name.clone(), &mut self.output.b.value));
        out
    }
}

fn collect_stage<'a>(stage: &'a mut ConvStage, out: &mut Vec<&'a mut Param>) {
    out.push(&mut stage.conv.w);
    out.push(&mut stage.conv.b);
    out.push(&mut stage.bn.gamma);
    out.push(&mut stage.bn.beta);
}

fn stage_entries<'a>(stage: &'a ConvStage, out: &mut Vec<(String, &'a Tensor)>) {
    let bn_prefix = stage.bn.gamma.name.trim_end_matches(".gamma").to_string();
    out.push((stage.conv.w.name.clone(), &stage.conv.w.value));
    out.push((stage.conv.b.name.clone(), &stage.conv.b.value));
    out.push((stage.bn.gamma.name.clone(), &stage.bn.gamma.value));
    out.push((stage.bn.beta.name.clone(), &stage.bn.beta.value));
    out.push((format!("{bn_prefix}.running_mean"), &stage.bn.running_mean));
    out.push((format!("{bn_prefix}.running_var"), &stage.bn.running_var));
}

fn stage_entries_mut<'a>(stage: &'a mut ConvStage, out: &mut Vec<(String, &'a mut Tensor)>) {
    let bn_prefix = stage.bn.gamma.name.trim_end_matches(".gamma").to_string();
    out.push((stage.conv.w.name.clone(), &mut stage.conv.w.value));
    out.push((stage.conv.b.name.clone(), &mut stage.conv.b.value));
    out.push((stage.bn.gamma.name.clone(), &mut stage.bn.gamma.value));
    out.push((stage.bn.beta.name.clone(), &mut stage.bn.beta.value));
    out.push((format!("{bn_prefix}.running_mean"), &mut stage.bn.running_mean));
    out.push((format!("{bn_prefix}.running_var"), &mut stage.bn.running_var));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_temporal, param_count, TemporalModelSpec};
    use crate::nncore::rng_from_seed;
    use rand::Rng;

    fn random_sequence(c: usize, t: usize, seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        Tensor::from_vec(&[1, c, t], (0..c * t).map(|_| rng.gen::<f64>() - 0.5).collect()).unwrap()
    }

    #[test]
    fn paper_scale_parameter_counts() {
        let spec = TemporalModelSpec::new(8, 1024, vec![3, 3, 3, 3, 3], 0.25);
        let mut model = build_temporal(&spec, 0).unwrap();
        assert_eq!(param_count(&mut model), 16_862_216);

        let spec15 = TemporalModelSpec::new(8, 1024, vec![3, 5], 0.25);
        let mut model15 = build_temporal(&spec15, 0).unwrap();
        assert_eq!(param_count(&mut model15), 6_358_024);
    }

    #[test]
    fn window_of_receptive_field_gives_single_output() {
        let spec = TemporalModelSpec::new(2, 8, vec![3, 3], 0.0);
        let mut model = build_temporal(&spec, 4).unwrap();
        let x = random_sequence(4, 9, 1);
        let y = model.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.dims(), &[1, 2, 1]);
    }

    #[test]
    fn wrong_window_length_is_shape_error() {
        let spec = TemporalModelSpec::new(2, 8, vec![3, 3], 0.0);
        let mut model = build_temporal(&spec, 4).unwrap();
        let x = random_sequence(4, 12, 1);
        assert!(model.forward(&x, Mode::Eval).is_err());
    }

    #[test]
    fn dilated_matches_strided_at_every_centre() {
        for widths in [vec![3], vec![3, 3], vec![3, 5], vec![3, 3, 3]] {
            for seed in [1u64, 2, 3] {
                let spec = TemporalModelSpec::new(2, 6, widths.clone(), 0.0);
                let r = spec.receptive_field();
                let t = r + 7;
                let mut model = build_temporal(&spec, seed).unwrap();
                let x = random_sequence(4, t, seed + 10);
                let dilated = model.forward_dilated(&x).unwrap();
                assert_eq!(dilated.dims(), &[1, 2, t - r + 1]);
                for centre in 0..=(t - r) {
                    let mut window = Tensor::zeros(&[1, 4, r]);
                    for c in 0..4 {
                        let src = &x.data()[c * t + centre..c * t + centre + r];
                        window.data_mut()[c * r..(c + 1) * r].copy_from_slice(src);
                    }
                    let strided = model.forward(&window, Mode::Eval).unwrap();
                    for k in 0..2 {
                        let a = strided.data()[k];
                        let b = dilated.data()[k * (t - r + 1) + centre];
                        assert!(
                            (a - b).abs() < 1e-9,
                            "widths {widths:?} seed {seed} centre {centre}: {a} vs {b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn sequence_of_exactly_receptive_field_gives_one_dilated_prediction() {
        let spec = TemporalModelSpec::new(2, 8, vec![3, 3], 0.0);
        let r = spec.receptive_field();
        let mut model = build_temporal(&spec, 9).unwrap();
        let x = random_sequence(4, r, 2);
        let dilated = model.forward_dilated(&x).unwrap();
        let strided = model.forward(&x, Mode::Eval).unwrap();
        assert_eq!(dilated.dims(), &[1, 2, 1]);
        for (a, b) in dilated.data().iter().zip(strided.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn receptive_field_law_exact() {
        // changing an input frame outside the window of centre t leaves the
        // dilated prediction at t bit-unchanged
        let spec = TemporalModelSpec::new(1, 6, vec![3, 3], 0.0);
        let r = spec.receptive_field(); // 9
        let t = r + 6;
        let mut model = build_temporal(&spec, 3).unwrap();
        let x = random_sequence(2, t, 8);
        let base = model.forward_dilated(&x).unwrap();
        let centre = 4 + (r - 1) / 2; // output index 4
        let mut perturbed = x.clone();
        // frame beyond the window of that centre
        let outside = centre + (r - 1) / 2 + 1;
        for c in 0..2 {
            perturbed.data_mut()[c * t + outside] += 10.0;
        }
        let changed = model.forward_dilated(&perturbed).unwrap();
        let t_out = t - r + 1;
        assert_eq!(base.data()[4], changed.data()[4]);
        assert_eq!(base.data()[t_out + 4], changed.data()[t_out + 4]);
        // a position whose window covers `outside` must change
        assert_ne!(base.data()[t_out - 1], changed.data()[t_out - 1]);
    }

    #[test]
    fn zeroed_block_is_centre_decimation_identity() {
        let spec = TemporalModelSpec::new(1, 4, vec![3, 3], 0.0);
        let mut model = build_temporal(&spec, 5).unwrap();
        for (name, t) in model.tensor_entries_mut() {
            if name.starts_with("block0") && name.contains(".conv.") {
                t.fill(0.0);
            }
        }
        let x = random_sequence(4, 9, 3);
        let mut block = model.blocks[0].clone();
        let y = block.forward(&x, Mode::Eval).unwrap();
        let want = decimate(&x, 3);
        assert_eq!(y.data(), want.data());
    }

    #[test]
    fn param_count_matches_closed_form_small() {
        // widths (3,3), 2K=4, K=2, C=6:
        // input conv 6*4*3+6 = 78, bn 12
        // block: conv 6*6*3+6 = 114, bn 12, conv1x1 6*6+6 = 42, bn 12 -> 180
        // output conv 6*2*... (2,6,1): 12+2 = 14
        let spec = TemporalModelSpec::new(2, 6, vec![3, 3], 0.0);
        let mut model = build_temporal(&spec, 0).unwrap();
        assert_eq!(param_count(&mut model), 78 + 12 + 180 + 14);
    }
}
