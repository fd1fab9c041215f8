use rand::Rng;

use super::ModelError;
use crate::nn::{
    join, pixel_shuffle, pixel_unshuffle, BatchNorm2d, Conv2d, Mode, Module, PRelu, Param, Scalar, Sigmoid, Tensor,
};

/// Layer-by-layer description of the super-resolution generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    /// Filters in the head, residual trunk and post-trunk conv.
    pub width: usize,
    pub head_kernel: usize,
    pub residual_blocks: usize,
    pub upsample_blocks: usize,
    /// Pixel-shuffle factor of each upsample block.
    pub upsample_factor: usize,
    pub tail_kernel: usize,
    pub out_channels: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            in_channels: 3,
            width: 64,
            head_kernel: 9,
            residual_blocks: 16,
            upsample_blocks: 3,
            upsample_factor: 2,
            tail_kernel: 9,
            out_channels: 3,
        }
    }
}

impl GeneratorSpec {
    /// Shrinks width and residual depth by `divisor` (1 keeps the full model).
    pub fn reduced(divisor: usize) -> Self {
        let full = Self::default();
        let d = divisor.max(1);
        Self { width: (full.width / d).max(1), residual_blocks: (full.residual_blocks / d).max(1), ..full }
    }

    /// Overall spatial upscaling factor.
    pub fn scale(&self) -> usize {
        self.upsample_factor.pow(self.upsample_blocks as u32)
    }

    /// Filters of the conv inside each upsample block.
    pub fn upsample_filters(&self) -> usize {
        self.width * self.upsample_factor * self.upsample_factor
    }

    pub fn describe(&self) -> String {
        format!(
            "in={} width={} head_kernel={} blocks={} upsample={}x{} tail_kernel={} out={}",
            self.in_channels,
            self.width,
            self.head_kernel,
            self.residual_blocks,
            self.upsample_blocks,
            self.upsample_factor,
            self.tail_kernel,
            self.out_channels
        )
    }
}

/// conv → BN → PReLU → conv → BN, plus identity.
#[derive(Clone, Debug)]
pub struct ResidualBlock<T> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    act: PRelu<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new<R: Rng>(width: usize, rng: &mut R) -> Self {
        Self {
            conv1: Conv2d::new(width, width, 3, 1, 1, rng),
            bn1: BatchNorm2d::new(width),
            act: PRelu::new(),
            conv2: Conv2d::new(width, width, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(width),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let h = self.conv1.forward(x, mode);
        let h = self.bn1.forward(&h, mode);
        let h = self.act.forward(&h, mode);
        let h = self.conv2.forward(&h, mode);
        let mut h = self.bn2.forward(&h, mode);
        h.add_assign(x);
        h
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let g = self.bn2.backward(grad);
        let g = self.conv2.backward(&g);
        let g = self.act.backward(&g);
        let g = self.bn1.backward(&g);
        let mut g = self.conv1.backward(&g);
        g.add_assign(grad);
        g
    }
}

impl<T: Scalar> Module<T> for ResidualBlock<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.bn1.visit_mut(&join(prefix, "bn1"), f);
        self.act.visit_mut(&join(prefix, "act"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.bn2.visit_mut(&join(prefix, "bn2"), f);
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.act.visit(&join(prefix, "act"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
    }
}

/// conv → BN → pixel shuffle → PReLU.
#[derive(Clone, Debug)]
pub struct UpsampleBlock<T> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
    factor: usize,
    act: PRelu<T>,
}

impl<T: Scalar> UpsampleBlock<T> {
    pub fn new<R: Rng>(width: usize, factor: usize, rng: &mut R) -> Self {
        let filters = width * factor * factor;
        Self {
            conv: Conv2d::new(width, filters, 3, 1, 1, rng),
            bn: BatchNorm2d::new(filters),
            factor,
            act: PRelu::new(),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let h = self.conv.forward(x, mode);
        let h = self.bn.forward(&h, mode);
        let h = pixel_shuffle(&h, self.factor).expect("upsample filters are a multiple of factor^2");
        self.act.forward(&h, mode)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let g = self.act.backward(grad);
        let g = pixel_unshuffle(&g, self.factor);
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }
}

impl<T: Scalar> Module<T> for UpsampleBlock<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
        self.act.visit_mut(&join(prefix, "act"), f);
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
        self.act.visit(&join(prefix, "act"), f);
    }
}

/// ResNet generator: head conv + PReLU, residual trunk, post conv + BN with a
/// global skip from the head, pixel-shuffle upsampling, sigmoid tail.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    spec: GeneratorSpec,
    head: Conv2d<T>,
    head_act: PRelu<T>,
    blocks: Vec<ResidualBlock<T>>,
    post: Conv2d<T>,
    post_bn: BatchNorm2d<T>,
    upsample: Vec<UpsampleBlock<T>>,
    tail: Conv2d<T>,
    out: Sigmoid<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng>(spec: &GeneratorSpec, rng: &mut R) -> Self {
        let w = spec.width;
        let head = Conv2d::new(spec.in_channels, w, spec.head_kernel, 1, spec.head_kernel / 2, rng);
        let blocks = (0..spec.residual_blocks).map(|_| ResidualBlock::new(w, rng)).collect();
        let post = Conv2d::new(w, w, 3, 1, 1, rng);
        let upsample = (0..spec.upsample_blocks).map(|_| UpsampleBlock::new(w, spec.upsample_factor, rng)).collect();
        let tail = Conv2d::new(w, spec.out_channels, spec.tail_kernel, 1, spec.tail_kernel / 2, rng);
        Self {
            spec: spec.clone(),
            head,
            head_act: PRelu::new(),
            blocks,
            post,
            post_bn: BatchNorm2d::new(w),
            upsample,
            tail,
            out: Sigmoid::new(),
        }
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// `B×3×h×w → B×3×(s·h)×(s·w)` with `s` the configured scale (8 by default).
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, ModelError> {
        if x.channels() != self.spec.in_channels || x.batch() == 0 {
            return Err(ModelError::ShapeMismatch {
                expected: format!("B×{}×H×W with B ≥ 1", self.spec.in_channels),
                found: format!("{:?}", x.shape()),
            });
        }
        let head = self.head.forward(x, mode);
        let head = self.head_act.forward(&head, mode);
        let mut h = head.clone();
        for block in &mut self.blocks {
            h = block.forward(&h, mode);
        }
        let h = self.post.forward(&h, mode);
        let mut h = self.post_bn.forward(&h, mode);
        h.add_assign(&head);
        for up in &mut self.upsample {
            h = up.forward(&h, mode);
        }
        let h = self.tail.forward(&h, mode);
        Ok(self.out.forward(&h, mode))
    }

    /// Backpropagates `d loss / d output`; parameter gradients accumulate,
    /// and the input gradient is returned.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let g = self.out.backward(grad);
        let mut g = self.tail.backward(&g);
        for up in self.upsample.iter_mut().rev() {
            g = up.backward(&g);
        }
        let skip = g.clone();
        let g = self.post_bn.backward(&g);
        let mut g = self.post.backward(&g);
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
        g.add_assign(&skip);
        let g = self.head_act.backward(&g);
        self.head.backward(&g)
    }

    /// Runs a single residual block (exposed for shape checks).
    pub fn residual_block_forward(&mut self, index: usize, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        self.blocks[index].forward(x, mode)
    }
}

impl<T: Scalar> Module<T> for Generator<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.head.visit_mut(&join(prefix, "head.conv"), f);
        self.head_act.visit_mut(&join(prefix, "head.act"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.post.visit_mut(&join(prefix, "post.conv"), f);
        self.post_bn.visit_mut(&join(prefix, "post.bn"), f);
        for (i, u) in self.upsample.iter_mut().enumerate() {
            u.visit_mut(&join(prefix, &format!("upsample.{i}")), f);
        }
        self.tail.visit_mut(&join(prefix, "tail.conv"), f);
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.head.visit(&join(prefix, "head.conv"), f);
        self.head_act.visit(&join(prefix, "head.act"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.post.visit(&join(prefix, "post.conv"), f);
        self.post_bn.visit(&join(prefix, "post.bn"), f);
        for (i, u) in self.upsample.iter().enumerate() {
            u.visit(&join(prefix, &format!("upsample.{i}")), f);
        }
        self.tail.visit(&join(prefix, "tail.conv"), f);
    }
}
