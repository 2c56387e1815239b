//! Per-frame residual MLP: input stage, residual blocks with identity skips,
//! linear output head.

use crate::error::Result;
use crate::nncore::{
    derive_seed, kaiming_init, BatchNormState, Dropout, Linear, Mode, Param, Relu, Tensor,
};

use super::LinearModelSpec;

/// linear -> batchnorm -> relu -> dropout
#[derive(Debug, Clone)]
struct Stage {
    linear: Linear,
    bn: BatchNormState,
    relu: Relu,
    dropout: Dropout,
}

impl Stage {
    fn build(prefix: &str, n_in: usize, n_out: usize, dropout: f64, seed: u64) -> Stage {
        let w = Param::new(
            format!("{prefix}.linear.w"),
            kaiming_init(&[n_in, n_out], n_in, derive_seed(seed, 0)),
        );
        let b = Param::new(format!("{prefix}.linear.b"), Tensor::zeros(&[n_out]));
        Stage {
            linear: Linear::new(w, b),
            bn: BatchNormState::new(&format!("{prefix}.bn"), n_out),
            relu: Relu::default(),
            dropout: Dropout::new(dropout, derive_seed(seed, 1)),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.linear.forward(x)?;
        let h = self.bn.forward(&h, mode)?;
        let h = self.relu.forward(&h);
        Ok(self.dropout.forward(&h, mode))
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let g = self.dropout.backward(gy);
        let g = self.relu.backward(&g)?;
        let g = self.bn.backward(&g)?;
        self.linear.backward(&g)
    }
}

/// Two stages with an identity skip from block input to block output.
#[derive(Debug, Clone)]
struct ResBlock {
    s1: Stage,
    s2: Stage,
}

impl ResBlock {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.s1.forward(x, mode)?;
        let mut h = self.s2.forward(&h, mode)?;
        h.add_assign(x)?;
        Ok(h)
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let g = self.s2.backward(gy)?;
        let mut g = self.s1.backward(&g)?;
        g.add_assign(gy)?;
        Ok(g)
    }
}

/// The per-frame lifting model: `(batch, 2K) -> (batch, K)`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub spec: LinearModelSpec,
    input: Stage,
    blocks: Vec<ResBlock>,
    output: Linear,
}

impl LinearModel {
    pub fn build(spec: &LinearModelSpec, seed: u64) -> Result<LinearModel> {
        spec.validate()?;
        let input = Stage::build(
            "input",
            spec.in_width,
            spec.hidden,
            spec.dropout,
            derive_seed(seed, 1),
        );
        let blocks = (0..spec.n_blocks)
            .map(|i| ResBlock {
                s1: Stage::build(
                    &format!("block{i}.a"),
                    spec.hidden,
                    spec.hidden,
                    spec.dropout,
                    derive_seed(seed, 100 + 2 * i as u64),
                ),
                s2: Stage::build(
                    &format!("block{i}.b"),
                    spec.hidden,
                    spec.hidden,
                    spec.dropout,
                    derive_seed(seed, 101 + 2 * i as u64),
                ),
            })
            .collect();
        let output = Linear::new(
            Param::new(
                "output.linear.w",
                kaiming_init(&[spec.hidden, spec.out_width], spec.hidden, derive_seed(seed, 2)),
            ),
            Param::new("output.linear.b", Tensor::zeros(&[spec.out_width])),
        );
        Ok(LinearModel {
            spec: spec.clone(),
            input,
            blocks,
            output,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = self.input.forward(x, mode)?;
        for block in &mut self.blocks {
            h = block.forward(&h, mode)?;
        }
        self.output.forward(&h)
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

fn collect_stage<'a>(stage: &'a mut Stage, out: &mut Vec<&'a mut Param>) {
    out.push(&mut stage.linear.w);
    out.push(&mut stage.linear.b);
    out.push(&mut stage.bn.gamma);
    out.push(&mut stage.bn.beta);
}

fn stage_entries<'a>(stage: &'a Stage, out: &mut Vec<(String, &'a Tensor)>) {
    let bn_prefix = stage.bn.gamma.name.trim_end_matches(".gamma").to_string();
    out.push((stage.linear.w.name.clone(), &stage.linear.w.value));
    out.push((stage.linear.b.name.clone(), &stage.linear.b.value));
    out.push((stage.bn.gamma.name.clone(), &stage.bn.gamma.value));
    out.push((stage.bn.beta.name.clone(), &stage.bn.beta.value));
    out.push((format!("{bn_prefix}.running_mean"), &stage.bn.running_mean));
    out.push((format!("{bn_prefix}.running_var"), &stage.bn.running_var));
}

fn stage_entries_mut<'a>(stage: &'a mut Stage, out: &mut Vec<(String, &'a mut Tensor)>) {
    let bn_prefix = stage.bn.gamma.name.trim_end_matches(".gamma").to_string();
    out.push((stage.linear.w.name.clone(), &mut stage.linear.w.value));
    out.push((stage.linear.b.name.clone(), &mut stage.linear.b.value));
    out.push((stage.bn.gamma.name.clone(), &mut stage.bn.gamma.value));
    out.push((stage.bn.beta.name.clone(), &mut stage.bn.beta.value));
    out.push((format!("{bn_prefix}.running_mean"), &mut stage.bn.running_mean));
    out.push((format!("{bn_prefix}.running_var"), &mut stage.bn.running_var));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_linear, param_count, LinearModelSpec};

    #[test]
    fn paper_scale_parameter_count() {
        let spec = LinearModelSpec::new(8, 1024, 0.25);
        let mut model = build_linear(&spec, 0).unwrap();
        assert_eq!(param_count(&mut model), 2_130_952);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = LinearModelSpec::new(2, 8, 0.0);
        let mut model = build_linear(&spec, 3).unwrap();
        for p in model.params_mut() {
            p.value.fill(0.0);
        }
        let x = Tensor::zeros(&[2, 4]);
        let y = model.forward(&x, Mode::Eval).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn same_seed_same_parameters() {
        let spec = LinearModelSpec::new(3, 16, 0.25);
        let mut a = build_linear(&spec, 7).unwrap();
        let mut b = build_linear(&spec, 7).unwrap();
        for (pa, pb) in a.params_mut().iter().zip(b.params_mut().iter()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value.data(), pb.value.data());
        }
        let mut c = build_linear(&spec, 8).unwrap();
        assert_ne!(
            a.params_mut()[0].value.data(),
            c.params_mut()[0].value.data()
        );
    }

    #[test]
    fn param_count_independent_of_seed() {
        let spec = LinearModelSpec::new(5, 32, 0.1);
        let counts: Vec<usize> = [1u64, 9, 77]
            .iter()
            .map(|s| param_count(&mut build_linear(&spec, *s).unwrap()))
            .collect();
        assert!(counts.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn residual_block_with_zero_weights_is_identity_in_eval() {
        // zero conv weights + identity BN stats: block output == block input
        let spec = LinearModelSpec::new(2, 4, 0.0);
        let mut model = build_linear(&spec, 5).unwrap();
        for (name, t) in model.tensor_entries_mut() {
            if name.starts_with("block0") && (name.ends_with(".w") || name.ends_with(".b")) {
                t.fill(0.0);
            }
        }
        let x = Tensor::from_vec(&[1, 4], vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let mut block = model.blocks[0].clone();
        let y = block.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.data(), x.data());
    }
}
