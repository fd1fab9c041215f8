use rand::Rng;

use super::ModelError;
use crate::nn::{join, BatchNorm2d, Conv2d, LeakyRelu, Mode, Module, Param, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorSpec {
    pub in_channels: usize,
    /// Output width of each of the four blocks.
    pub widths: Vec<usize>,
    pub negative_slope: f64,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self { in_channels: 3, widths: vec![64, 128, 256, 512], negative_slope: 0.2 }
    }
}

impl DiscriminatorSpec {
    pub fn reduced(divisor: usize) -> Self {
        let d = divisor.max(1);
        let full = Self::default();
        Self { widths: full.widths.iter().map(|w| (w / d).max(1)).collect(), ..full }
    }

    /// Spatial size of the output map for a square input of side `n`.
    pub fn output_side(&self, n: usize) -> usize {
        self.widths.iter().fold(n, |n, _| (n + 2 - 3) / 2 + 1)
    }

    pub fn describe(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        format!("in={} widths={} slope={}", self.in_channels, widths.join(","), self.negative_slope)
    }
}

#[derive(Clone, Debug)]
struct DiscBlock<T> {
    conv1: Conv2d<T>,
    bn1: Option<BatchNorm2d<T>>,
    act1: LeakyRelu<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    act2: LeakyRelu<T>,
}

impl<T: Scalar> DiscBlock<T> {
    fn new<R: Rng>(in_c: usize, out_c: usize, first: bool, slope: f64, rng: &mut R) -> Self {
        Self {
            conv1: Conv2d::new(in_c, out_c, 3, 1, 1, rng),
            bn1: (!first).then(|| BatchNorm2d::new(out_c)),
            act1: LeakyRelu::new(slope),
            conv2: Conv2d::new(out_c, out_c, 3, 2, 1, rng),
            bn2: BatchNorm2d::new(out_c),
            act2: LeakyRelu::new(slope),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let mut h = self.conv1.forward(x, mode);
        if let Some(bn) = self.bn1.as_mut() {
            h = bn.forward(&h, mode);
        }
        let h = self.act1.forward(&h, mode);
        let h = self.conv2.forward(&h, mode);
        let h = self.bn2.forward(&h, mode);
        self.act2.forward(&h, mode)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let g = self.act2.backward(grad);
        let g = self.bn2.backward(&g);
        let g = self.conv2.backward(&g);
        let mut g = self.act1.backward(&g);
        if let Some(bn) = self.bn1.as_mut() {
            g = bn.backward(&g);
        }
        self.conv1.backward(&g)
    }
}

impl<T: Scalar> Module<T> for DiscBlock<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        if let Some(bn) = self.bn1.as_mut() {
            bn.visit_mut(&join(prefix, "bn1"), f);
        }
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.bn2.visit_mut(&join(prefix, "bn2"), f);
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        if let Some(bn) = self.bn1.as_ref() {
            bn.visit(&join(prefix, "bn1"), f);
        }
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
    }
}

/// Four conv blocks (each halving the spatial size) and a linear
/// single-channel conv head. The output is a patch map of raw scores.
#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    spec: DiscriminatorSpec,
    blocks: Vec<DiscBlock<T>>,
    head: Conv2d<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng>(spec: &DiscriminatorSpec, rng: &mut R) -> Self {
        let mut in_c = spec.in_channels;
        let mut blocks = Vec::with_capacity(spec.widths.len());
        for (i, &w) in spec.widths.iter().enumerate() {
            blocks.push(DiscBlock::new(in_c, w, i == 0, spec.negative_slope, rng));
            in_c = w;
        }
        let head = Conv2d::new(in_c, 1, 3, 1, 1, rng);
        Self { spec: spec.clone(), blocks, head }
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, ModelError> {
        if x.channels() != self.spec.in_channels || x.batch() == 0 {
            return Err(ModelError::ShapeMismatch {
                expected: format!("B×{}×H×W with B ≥ 1", self.spec.in_channels),
                found: format!("{:?}", x.shape()),
            });
        }
        let mut h = x.clone();
        for block in &mut self.blocks {
            h = block.forward(&h, mode);
        }
        Ok(self.head.forward(&h, mode))
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut g = self.head.backward(grad);
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
        g
    }

    /// Stops (or resumes) parameter-gradient accumulation. Input gradients
    /// still flow, which is what the generator step needs.
    pub fn set_learning(&mut self, on: bool) {
        use crate::nn::ParamKind;
        self.visit_mut("", &mut |_, p| match (p.kind, on) {
            (ParamKind::Trainable, false) => {
                p.kind = ParamKind::Frozen;
                p.grad = Vec::new();
            }
            (ParamKind::Frozen, true) => {
                p.kind = ParamKind::Trainable;
                p.grad = vec![T::zero(); p.value.len()];
            }
            _ => {}
        });
    }
}

impl<T: Scalar> Module<T> for Discriminator<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }
}
