use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::acquisition::{Tsmi, TsmiKind};
use crate::error::{domain, Result};
use crate::nn::{
    relu, relu_backward, DepthwiseConv, Dropout, DropoutMask, Mode, PointwiseConv, Tensor4,
};

/// Architecture and output scaling of the parameter-mapping network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_channels: usize,
    /// Output channels of each separable block.
    pub block_channels: Vec<usize>,
    /// Output channels of the two 1x1 head layers.
    pub head_channels: [usize; 2],
    pub dropout: f64,
    pub t1_max_ms: f64,
    pub t2_max_ms: f64,
    pub pd_max: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 10,
            block_channels: vec![256, 128, 64, 32],
            head_channels: [3, 3],
            dropout: 0.0,
            t1_max_ms: 4000.0,
            t2_max_ms: 600.0,
            pd_max: 2.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return domain("model input channel count must be positive");
        }
        if self.block_channels.is_empty() || self.block_channels.contains(&0) {
            return domain(format!(
                "invalid separable block channels {:?}",
                self.block_channels
            ));
        }
        if self.head_channels[0] == 0 || self.head_channels[1] != 3 {
            return domain(format!(
                "head channels {:?}: the final layer must emit exactly 3 maps",
                self.head_channels
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return domain(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.t1_max_ms > 0.0 && self.t2_max_ms > 0.0 && self.pd_max > 0.0) {
            return domain("normalization constants must be positive");
        }
        Ok(())
    }

    /// Channel count entering the network followed by every layer's output.
    pub fn channel_trace(&self) -> Vec<usize> {
        let mut t = vec![self.input_channels];
        t.extend(&self.block_channels);
        t.extend(self.head_channels);
        t
    }

    pub fn scales(&self) -> [f64; 3] {
        [self.t1_max_ms, self.t2_max_ms, self.pd_max]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparableBlock {
    pub depthwise: DepthwiseConv,
    pub pointwise: PointwiseConv,
}

/// Separable blocks (depthwise 3x3, pointwise, ReLU, dropout) followed by
/// pointwise, ReLU and a linear pointwise output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub blocks: Vec<SeparableBlock>,
    pub head: [PointwiseConv; 2],
}

/// A named parameter array with its logical shape.
pub struct ParamRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [f64],
}

struct BlockCache {
    input: Tensor4,
    depthwise_out: Tensor4,
    pre_activation: Tensor4,
    mask: DropoutMask,
}

/// Intermediate activations kept by a training forward pass.
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    head_input: Tensor4,
    head_pre_activation: Tensor4,
    head_hidden: Tensor4,
}

fn dropout_seed(seed: u64, block: usize) -> u64 {
    // splitmix64 step over (seed, block)
    let mut z = seed ^ (block as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Model {
    /// All-zero parameters with the configured shapes.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::new();
        let mut cin = config.input_channels;
        for &cout in &config.block_channels {
            blocks.push(SeparableBlock {
                depthwise: DepthwiseConv::zeros(cin),
                pointwise: PointwiseConv::zeros(cin, cout),
            });
            cin = cout;
        }
        let [h0, h1] = config.head_channels;
        Ok(Self {
            config: config.clone(),
            blocks,
            head: [PointwiseConv::zeros(cin, h0), PointwiseConv::zeros(h0, h1)],
        })
    }

    pub fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.depthwise.channels();
            out.push(ParamRef {
                name: format!("block{i}.depthwise.kernels"),
                shape: vec![c, 3, 3],
                values: &b.depthwise.kernels,
            });
            out.push(ParamRef {
                name: format!("block{i}.depthwise.bias"),
                shape: vec![c],
                values: &b.depthwise.bias,
            });
            out.push(ParamRef {
                name: format!("block{i}.pointwise.weights"),
                shape: vec![b.pointwise.out_channels(), b.pointwise.in_channels],
                values: &b.pointwise.weights,
            });
            out.push(ParamRef {
                name: format!("block{i}.pointwise.bias"),
                shape: vec![b.pointwise.out_channels()],
                values: &b.pointwise.bias,
            });
        }
        for (j, p) in self.head.iter().enumerate() {
            out.push(ParamRef {
                name: format!("head{j}.weights"),
                shape: vec![p.out_channels(), p.in_channels],
                values: &p.weights,
            });
            out.push(ParamRef {
                name: format!("head{j}.bias"),
                shape: vec![p.out_channels()],
                values: &p.bias,
            });
        }
        out
    }

    /// Mutable parameter arrays in the same order as [`Model::params`].
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.depthwise.kernels);
            out.push(&mut b.depthwise.bias);
            out.push(&mut b.pointwise.weights);
            out.push(&mut b.pointwise.bias);
        }
        for p in &mut self.head {
            out.push(&mut p.weights);
            out.push(&mut p.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.values.len()).sum()
    }

    /// Forward pass keeping the activations needed by [`Model::backward`].
    /// Returns normalized outputs.
    pub fn forward_train(
        &self,
        x: &Tensor4,
        mode: Mode,
        seed: u64,
    ) -> Result<(Tensor4, ForwardCache)> {
        if x.channels() != self.config.input_channels {
            return domain(format!(
                "model expects {} input channels, got {}",
                self.config.input_channels,
                x.channels()
            ));
        }
        let dropout = Dropout::new(self.config.dropout)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut cur = x.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            let dw = b.depthwise.forward(&cur)?;
            let pre = b.pointwise.forward(&dw)?;
            let (out, mask) = dropout.forward(&relu(&pre), mode, dropout_seed(seed, i));
            caches.push(BlockCache {
                input: cur,
                depthwise_out: dw,
                pre_activation: pre,
                mask,
            });
            cur = out;
        }
        let head_pre = self.head[0].forward(&cur)?;
        let hidden = relu(&head_pre);
        let out = self.head[1].forward(&hidden)?;
        Ok((
            out,
            ForwardCache {
                blocks: caches,
                head_input: cur,
                head_pre_activation: head_pre,
                head_hidden: hidden,
            },
        ))
    }

    /// Eval-mode normalized output without keeping activations.
    pub fn predict(&self, x: &Tensor4) -> Result<Tensor4> {
        if x.channels() != self.config.input_channels {
            return domain(format!(
                "model expects {} input channels, got {}",
                self.config.input_channels,
                x.channels()
            ));
        }
        let mut cur = x.clone();
        for b in &self.blocks {
            cur = relu(&b.pointwise.forward(&b.depthwise.forward(&cur)?)?);
        }
        let hidden = relu(&self.head[0].forward(&cur)?);
        self.head[1].forward(&hidden)
    }

    /// Parameter gradients (as a model of the same shape) and the input gradient.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor4) -> Result<(Model, Tensor4)> {
        let dropout = Dropout::new(self.config.dropout)?;
        let mut grads = Model::zeros(&self.config)?;
        let (g_hidden, g_head1) = self.head[1].backward(&cache.head_hidden, grad_out)?;
        let g_pre = relu_backward(&cache.head_pre_activation, &g_hidden)?;
        let (mut g, g_head0) = self.head[0].backward(&cache.head_input, &g_pre)?;
        grads.head = [g_head0, g_head1];
        for (i, (b, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let g_act = dropout.backward(&c.mask, &g)?;
            let g_pre = relu_backward(&c.pre_activation, &g_act)?;
            let (g_dw, g_pw) = b.pointwise.backward(&c.depthwise_out, &g_pre)?;
            let (g_in, g_dwp) = b.depthwise.backward(&c.input, &g_dw)?;
            grads.blocks[i] = SeparableBlock {
                depthwise: g_dwp,
                pointwise: g_pw,
            };
            g = g_in;
        }
        Ok((grads, g))
    }

    /// Runs the network on a compressed TSMI and returns denormalized
    /// H x W x 3 maps (T1 ms, T2 ms, PD).
    pub fn forward_image(&self, coeffs: &Tsmi) -> Result<Array3<f64>> {
        if coeffs.kind != TsmiKind::Compressed {
            return domain("the network consumes compressed TSMI");
        }
        let x = tsmi_to_tensor(coeffs);
        let y = self.predict(&x)?;
        let (h, w, _) = coeffs.dims();
        let scales = self.config.scales();
        Ok(Array3::from_shape_fn((h, w, 3), |(i, j, c)| {
            y.get(0, c, i, j) * scales[c]
        }))
    }
}

/// H x W x C TSMI as a single-sample tensor.
pub fn tsmi_to_tensor(tsmi: &Tsmi) -> Tensor4 {
    let (h, w, c) = tsmi.dims();
    Tensor4::from_fn((1, c, h, w), |_, ch, y, x| tsmi.data[(y, x, ch)])
}

/// Initial bias of the narrow ReLU layer ahead of the output.
pub const HEAD_BIAS_INIT: f64 = 0.1;

/// He-initialized model: weights ~ N(0, 2 / fan_in) and zero biases, except
/// for the head. The narrow ReLU layer starts with bias [`HEAD_BIAS_INIT`]
/// and the linear output layer starts at zero, so the first updates do not
/// switch off the three hidden units.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    let mut model = Model::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |values: &mut [f64], fan_in: usize| {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        values.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
    };
    for b in &mut model.blocks {
        fill(&mut b.depthwise.kernels, 9);
        let cin = b.pointwise.in_channels;
        fill(&mut b.pointwise.weights, cin);
    }
    let cin = model.head[0].in_channels;
    fill(&mut model.head[0].weights, cin);
    model.head[0].bias.fill(HEAD_BIAS_INIT);
    Ok(model)
}
