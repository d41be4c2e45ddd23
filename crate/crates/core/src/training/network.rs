//! The encoder-decoder segmentation network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NetworkConfig;
use crate::error::{Error, Result};
use crate::nn::{
    concat_backward, concat_channels, BatchNorm, Conv2d, MaxPool2x2, Mode, Param, Relu,
    TransposedConv2x2,
};
use crate::tensor::{Real, Tensor4};

/// Two rounds of 3×3 conv → batch norm → ReLU.
#[derive(Clone, Debug)]
pub struct ConvBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm<T>,
    relu1: Relu<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm<T>,
    relu2: Relu<T>,
}

impl<T: Real> ConvBlock<T> {
    pub fn new(c_in: usize, c_out: usize) -> Self {
        Self {
            conv1: Conv2d::new(c_in, c_out, 3),
            bn1: BatchNorm::new(c_out),
            relu1: Relu::new(),
            conv2: Conv2d::new(c_out, c_out, 3),
            bn2: BatchNorm::new(c_out),
            relu2: Relu::new(),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.params.c_out()
    }

    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let y = self.conv1.forward(x)?;
        let y = self.bn1.forward(&y, mode)?;
        let y = self.relu1.forward(&y);
        let y = self.conv2.forward(&y)?;
        let y = self.bn2.forward(&y, mode)?;
        Ok(self.relu2.forward(&y))
    }

    pub fn backward(&mut self, g: &Tensor4<T>) -> Result<Tensor4<T>> {
        let g = self.relu2.backward(g)?;
        let g = self.bn2.backward(&g)?;
        let g = self.conv2.backward(&g)?;
        let g = self.relu1.backward(&g)?;
        let g = self.bn1.backward(&g)?;
        self.conv1.backward(&g)
    }

    fn named_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((format!("{prefix}.conv1.weight"), &mut self.conv1.params.weight));
        out.push((format!("{prefix}.conv1.bias"), &mut self.conv1.params.bias));
        out.push((format!("{prefix}.bn1.gamma"), &mut self.bn1.params.gamma));
        out.push((format!("{prefix}.bn1.beta"), &mut self.bn1.params.beta));
        out.push((format!("{prefix}.conv2.weight"), &mut self.conv2.params.weight));
        out.push((format!("{prefix}.conv2.bias"), &mut self.conv2.params.bias));
        out.push((format!("{prefix}.bn2.gamma"), &mut self.bn2.params.gamma));
        out.push((format!("{prefix}.bn2.beta"), &mut self.bn2.params.beta));
    }

    fn named_buffers<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Vec<T>)>) {
        out.push((format!("{prefix}.bn1.running_mean"), &mut self.bn1.params.running_mean));
        out.push((format!("{prefix}.bn1.running_var"), &mut self.bn1.params.running_var));
        out.push((format!("{prefix}.bn2.running_mean"), &mut self.bn2.params.running_mean));
        out.push((format!("{prefix}.bn2.running_var"), &mut self.bn2.params.running_var));
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        self.conv1.params.xavier_init(rng);
        self.conv2.params.xavier_init(rng);
    }
}

/// Kind of a learnable layer as seen by a graph walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    TransposedConv,
    BatchNorm,
    Relu,
    MaxPool,
    Concat,
}

impl LayerKind {
    pub fn is_convolutional(self) -> bool {
        matches!(
            self,
            LayerKind::Conv3x3 | LayerKind::Conv1x1 | LayerKind::TransposedConv
        )
    }
}

/// One node of the forward graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
}

/// U-shaped network: `levels` × (conv block, max pool), a bottleneck conv
/// block, `levels` × (transposed conv, skip concatenation, conv block), and a
/// final 1×1 convolution to class logits.
#[derive(Clone, Debug)]
pub struct Network<T = f32> {
    config: NetworkConfig,
    pub encoders: Vec<ConvBlock<T>>,
    pools: Vec<MaxPool2x2>,
    pub bottleneck: ConvBlock<T>,
    /// Deepest first.
    pub upconvs: Vec<TransposedConv2x2<T>>,
    /// Deepest first, paired with `upconvs`.
    pub decoders: Vec<ConvBlock<T>>,
    pub head: Conv2d<T>,
}

pub fn build_network<T: Real>(cfg: &NetworkConfig) -> Result<Network<T>> {
    Network::new(cfg.clone())
}

impl<T: Real> Network<T> {
    /// Builds the graph with zeroed weights; see [`Network::init`].
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let f = &config.encoder_filters;
        let mut encoders = Vec::new();
        let mut c = config.input_channels;
        for &out in f {
            encoders.push(ConvBlock::new(c, out));
            c = out;
        }
        let bottleneck = ConvBlock::new(c, 2 * c);
        c *= 2;
        let mut upconvs = Vec::new();
        let mut decoders = Vec::new();
        for &skip in f.iter().rev() {
            upconvs.push(TransposedConv2x2::new(c, skip));
            decoders.push(ConvBlock::new(2 * skip, skip));
            c = skip;
        }
        let head = Conv2d::new(c, config.n_classes, 1);
        Ok(Self {
            pools: (0..config.levels).map(|_| MaxPool2x2::new()).collect(),
            config,
            encoders,
            bottleneck,
            upconvs,
            decoders,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Xavier-initializes every convolution in graph order.
    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &mut self.encoders {
            b.init(&mut rng);
        }
        self.bottleneck.init(&mut rng);
        for (u, d) in self.upconvs.iter_mut().zip(&mut self.decoders) {
            u.params.xavier_init(&mut rng);
            d.init(&mut rng);
        }
        self.head.params.xavier_init(&mut rng);
    }

    /// Forward graph in execution order.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        let mut push = |name: String, kind, i, o| {
            out.push(LayerInfo {
                name,
                kind,
                in_channels: i,
                out_channels: o,
            })
        };
        let block = |push: &mut dyn FnMut(String, LayerKind, usize, usize), name: &str, b: &ConvBlock<T>| {
            let (i, o) = (b.conv1.params.c_in(), b.out_channels());
            push(format!("{name}.conv1"), LayerKind::Conv3x3, i, o);
            push(format!("{name}.bn1"), LayerKind::BatchNorm, o, o);
            push(format!("{name}.relu1"), LayerKind::Relu, o, o);
            push(format!("{name}.conv2"), LayerKind::Conv3x3, o, o);
            push(format!("{name}.bn2"), LayerKind::BatchNorm, o, o);
            push(format!("{name}.relu2"), LayerKind::Relu, o, o);
        };
        for (l, b) in self.encoders.iter().enumerate() {
            block(&mut push, &format!("enc{l}"), b);
            let o = b.out_channels();
            push(format!("pool{l}"), LayerKind::MaxPool, o, o);
        }
        block(&mut push, "bottleneck", &self.bottleneck);
        for (k, (u, d)) in self.upconvs.iter().zip(&self.decoders).enumerate() {
            let l = self.config.levels - 1 - k;
            let (i, o) = (u.params.c_in(), u.params.c_out());
            push(format!("up{l}"), LayerKind::TransposedConv, i, o);
            push(format!("concat{l}"), LayerKind::Concat, o, 2 * o);
            block(&mut push, &format!("dec{l}"), d);
        }
        push(
            "head".into(),
            LayerKind::Conv1x1,
            self.head.params.c_in(),
            self.head.params.c_out(),
        );
        out
    }

    /// Number of conv and transposed-conv layers found by walking the graph.
    pub fn conv_layer_count(&self) -> usize {
        self.layers().iter().filter(|l| l.kind.is_convolutional()).count()
    }

    /// Logits `N × n_classes × H × W`. H and W must be multiples of `2^levels`.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let [_, c, h, w] = x.shape();
        let div = self.config.divisor();
        if c != self.config.input_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {c}",
                self.config.input_channels
            )));
        }
        if h % div != 0 || w % div != 0 {
            return Err(Error::Shape(format!(
                "{h}x{w} input is not divisible by {div} ({} pooling levels)",
                self.config.levels
            )));
        }
        let mut skips = Vec::with_capacity(self.config.levels);
        let mut y = x.clone();
        for (enc, pool) in self.encoders.iter_mut().zip(&mut self.pools) {
            let s = enc.forward(&y, mode)?;
            y = pool.forward(&s)?;
            skips.push(s);
        }
        y = self.bottleneck.forward(&y, mode)?;
        for (up, dec) in self.upconvs.iter_mut().zip(&mut self.decoders) {
            let u = up.forward(&y)?;
            let skip = skips.pop().expect("one skip per level");
            y = dec.forward(&concat_channels(&skip, &u)?, mode)?;
        }
        self.head.forward(&y)
    }

    /// Back-propagates `grad_logits` through the last forward pass,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor4<T>) -> Result<()> {
        let mut g = self.head.backward(grad_logits)?;
        let mut skip_grads = Vec::with_capacity(self.config.levels);
        for (up, dec) in self.upconvs.iter_mut().zip(&mut self.decoders).rev() {
            let gc = dec.backward(&g)?;
            let skip_ch = up.params.c_out();
            let (gs, gu) = concat_backward(&gc, skip_ch)?;
            skip_grads.push(gs);
            g = up.backward(&gu)?;
        }
        g = self.bottleneck.backward(&g)?;
        for (enc, pool) in self.encoders.iter_mut().zip(&mut self.pools).rev() {
            let mut gs = pool.backward(&g)?;
            let extra = skip_grads.pop().expect("one skip gradient per level");
            for (a, b) in gs.as_mut_slice().iter_mut().zip(extra.as_slice()) {
                *a += *b;
            }
            g = enc.backward(&gs)?;
        }
        Ok(())
    }

    /// Learnable parameters with stable names, in graph order.
    pub fn named_params(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        let levels = self.config.levels;
        for (l, b) in self.encoders.iter_mut().enumerate() {
            b.named_params(&format!("enc{l}"), &mut out);
        }
        self.bottleneck.named_params("bottleneck", &mut out);
        for (k, (u, d)) in self.upconvs.iter_mut().zip(&mut self.decoders).enumerate() {
            let l = levels - 1 - k;
            out.push((format!("up{l}.weight"), &mut u.params.weight));
            out.push((format!("up{l}.bias"), &mut u.params.bias));
            d.named_params(&format!("dec{l}"), &mut out);
        }
        out.push(("head.weight".into(), &mut self.head.params.weight));
        out.push(("head.bias".into(), &mut self.head.params.bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    /// Batch-norm running statistics with stable names.
    pub fn named_buffers(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out = Vec::new();
        let levels = self.config.levels;
        for (l, b) in self.encoders.iter_mut().enumerate() {
            b.named_buffers(&format!("enc{l}"), &mut out);
        }
        self.bottleneck.named_buffers("bottleneck", &mut out);
        for (k, d) in self.decoders.iter_mut().enumerate() {
            d.named_buffers(&format!("dec{}", levels - 1 - k), &mut out);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }
}
