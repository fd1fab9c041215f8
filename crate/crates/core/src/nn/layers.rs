//! Layers with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during a forward call in
//! [`Mode::Train`]; the cache lives until the next forward, so one forward
//! may be followed by several backward passes. Calling `backward` without a
//! preceding training-mode forward is a programming error and panics.

use rand::Rng;
use rand_distr::StandardNormal;

use super::scalar::{axpy, gemm, MatView, Scalar};
use super::tensor::Tensor;

/// Forward-pass mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch-norm, activations cached for backward.
    Train,
    /// Running statistics in batch-norm, nothing cached.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Learnable in principle but held fixed (feature extractor weights).
    Frozen,
    /// Non-learnable state such as batch-norm running statistics.
    Buffer,
}

/// A named tensor with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Vec<T>, shape: Vec<usize>, kind: ParamKind) -> Self {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        let grad = match kind {
            ParamKind::Trainable => vec![T::zero(); value.len()],
            _ => Vec::new(),
        };
        Self { value, grad, shape, kind }
    }

    pub fn trainable(&self) -> bool {
        self.kind == ParamKind::Trainable
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Anything holding named parameters.
pub trait Module<T: Scalar> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>));
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    /// Number of optimizer-updated scalars.
    fn trainable_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.trainable() {
                n += p.value.len();
            }
        });
        n
    }

    /// Order-sensitive FNV-1a hash of every parameter and buffer value.
    fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        self.visit("", &mut |name, p| {
            for b in name.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
            }
            for v in &p.value {
                h = (h ^ v.as_f64().to_bits()).wrapping_mul(0x0100_0000_01b3);
            }
        });
        h
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Stride-1 layers with at most this many output channels use direct
/// convolution; im2col + GEMM is slow when the output dimension is tiny.
const DIRECT_CHANNEL_LIMIT: usize = 4;

/// 2-D convolution over square kernels, lowered to im2col + GEMM.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out, in, k, k]`, same memory order as the usual framework layout.
    pub weight: Param<T>,
    pub bias: Param<T>,
    cached_input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// Kaiming fan-in normal weights, zero bias.
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let weight: Vec<T> =
            (0..out_channels * fan_in).map(|_| T::of(std * rng.sample::<f64, _>(StandardNormal))).collect();
        Self::from_weights(in_channels, out_channels, kernel, stride, padding, weight, vec![T::zero(); out_channels])
    }

    pub fn from_weights(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        weight: Vec<T>,
        bias: Vec<T>,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(weight, vec![out_channels, in_channels, kernel, kernel], ParamKind::Trainable),
            bias: Param::new(bias, vec![out_channels], ParamKind::Trainable),
            cached_input: None,
        }
    }

    pub fn freeze(&mut self) {
        for p in [&mut self.weight, &mut self.bias] {
            p.kind = ParamKind::Frozen;
            p.grad = Vec::new();
        }
    }

    pub fn output_size(&self, n: usize) -> usize {
        (n + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Output columns `[lo, hi)` whose input column `ox·stride + kj −
    /// padding` lies inside a row of width `w`.
    fn span(&self, kj: usize, w: usize, wo: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = p.saturating_sub(kj).div_ceil(s);
        let hi = if w + p > kj { ((w + p - kj - 1) / s + 1).min(wo) } else { 0 };
        (lo, hi.max(lo))
    }

    /// Valid input row for output row `oy` and kernel row `ki`.
    fn source_row(&self, oy: usize, ki: usize, h: usize) -> Option<usize> {
        let iy = (oy * self.stride + ki).checked_sub(self.padding)?;
        (iy < h).then_some(iy)
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, ho: usize, wo: usize, col: &mut [T]) {
        let (k, s) = (self.kernel, self.stride);
        let hw = ho * wo;
        for c in 0..self.in_channels {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &mut col[((c * k + ki) * k + kj) * hw..][..hw];
                    let (lo, hi) = self.span(kj, w, wo);
                    for oy in 0..ho {
                        let out = &mut row[oy * wo..(oy + 1) * wo];
                        let Some(iy) = self.source_row(oy, ki, h) else {
                            out.fill(T::zero());
                            continue;
                        };
                        let src = &plane[iy * w..(iy + 1) * w];
                        out[..lo].fill(T::zero());
                        out[hi..].fill(T::zero());
                        let first = lo * s + kj - self.padding;
                        if s == 1 {
                            out[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (v, &x) in out[lo..hi].iter_mut().zip(src[first..].iter().step_by(s)) {
                                *v = x;
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[T], h: usize, w: usize, ho: usize, wo: usize, dx: &mut [T]) {
        let (k, s) = (self.kernel, self.stride);
        let hw = ho * wo;
        for c in 0..self.in_channels {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &col[((c * k + ki) * k + kj) * hw..][..hw];
                    let (lo, hi) = self.span(kj, w, wo);
                    for oy in 0..ho {
                        let Some(iy) = self.source_row(oy, ki, h) else { continue };
                        let dst = &mut plane[iy * w..(iy + 1) * w];
                        let first = lo * s + kj - self.padding;
                        let g = &row[oy * wo + lo..oy * wo + hi];
                        if s == 1 {
                            axpy(&mut dst[first..first + hi - lo], T::one(), g);
                        } else {
                            for (d, &v) in dst[first..].iter_mut().step_by(s).zip(g) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }

    fn use_direct(&self) -> bool {
        self.stride == 1 && self.out_channels <= DIRECT_CHANNEL_LIMIT && self.padding < self.kernel
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let [b, c, h, w] = x.shape();
        assert_eq!(c, self.in_channels, "conv input channels");
        let (ho, wo) = (self.output_size(h), self.output_size(w));
        let hw = ho * wo;
        let kk = self.patch_len();
        let mut out = Tensor::zeros([b, self.out_channels, ho, wo]);
        let direct = self.use_direct();
        let mut col = if direct { Vec::new() } else { vec![T::zero(); kk * hw] };
        for bi in 0..b {
            let y = out.sample_mut(bi);
            for (oc, row) in y.chunks_mut(hw).enumerate() {
                row.iter_mut().for_each(|v| *v = self.bias.value[oc]);
            }
            if direct {
                let (cin, cout, k, p) = (self.in_channels, self.out_channels, self.kernel, self.padding);
                super::direct::forward(x.sample(bi), &self.weight.value, cin, cout, k, p, h, w, y);
                continue;
            }
            self.im2col(x.sample(bi), h, w, ho, wo, &mut col);
            gemm(
                T::one(),
                &self.weight.value,
                MatView::row_major(self.out_channels, kk),
                &col,
                MatView::row_major(kk, hw),
                T::one(),
                y,
                MatView::row_major(self.out_channels, hw),
            );
        }
        self.cached_input = match mode {
            Mode::Train => Some(x.clone()),
            Mode::Eval => None,
        };
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let x = self.cached_input.take().expect("conv backward without training forward");
        let dx = self.backward_from(&x, grad_out);
        self.cached_input = Some(x);
        dx
    }

    fn backward_from(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
        let [b, _, h, w] = x.shape();
        let [_, oc, ho, wo] = grad_out.shape();
        assert_eq!(oc, self.out_channels);
        let hw = ho * wo;
        let kk = self.patch_len();
        let mut dx = Tensor::zeros(x.shape());
        let learn = self.weight.trainable();
        if self.use_direct() {
            for bi in 0..b {
                let g = grad_out.sample(bi);
                let (cin, cout, k, p) = (self.in_channels, self.out_channels, self.kernel, self.padding);
                let dw = learn.then_some(&mut self.weight.grad[..]);
                super::direct::backward(
                    x.sample(bi),
                    g,
                    &self.weight.value,
                    cin,
                    cout,
                    k,
                    p,
                    h,
                    w,
                    dx.sample_mut(bi),
                    dw,
                );
                if learn {
                    for (o, row) in g.chunks(hw).enumerate() {
                        self.bias.grad[o] += row.iter().copied().sum::<T>();
                    }
                }
            }
            return dx;
        }
        let mut col = vec![T::zero(); kk * hw];
        let mut dcol = vec![T::zero(); kk * hw];
        for bi in 0..b {
            let g = grad_out.sample(bi);
            if learn {
                self.im2col(x.sample(bi), h, w, ho, wo, &mut col);
                gemm(
                    T::one(),
                    g,
                    MatView::row_major(oc, hw),
                    &col,
                    MatView::transposed(kk, hw),
                    T::one(),
                    &mut self.weight.grad,
                    MatView::row_major(oc, kk),
                );
                for (o, row) in g.chunks(hw).enumerate() {
                    self.bias.grad[o] += row.iter().copied().sum::<T>();
                }
            }
            gemm(
                T::one(),
                &self.weight.value,
                MatView::transposed(oc, kk),
                g,
                MatView::row_major(oc, hw),
                T::zero(),
                &mut dcol,
                MatView::row_major(kk, hw),
            );
            self.col2im(&dcol, h, w, ho, wo, dx.sample_mut(bi));
        }
        dx
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }
}

/// Per-channel batch normalization over `(B, H, W)`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Clone, Debug)]
struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma: Param::new(vec![T::one(); channels], vec![channels], ParamKind::Trainable),
            beta: Param::new(vec![T::zero(); channels], vec![channels], ParamKind::Trainable),
            running_mean: Param::new(vec![T::zero(); channels], vec![channels], ParamKind::Buffer),
            running_var: Param::new(vec![T::one(); channels], vec![channels], ParamKind::Buffer),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let [b, c, h, w] = x.shape();
        assert_eq!(c, self.channels, "batch-norm channels");
        let hw = h * w;
        let n = (b * hw) as f64;
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = match mode {
            Mode::Train => Some(Tensor::zeros(x.shape())),
            Mode::Eval => None,
        };
        let mut inv_stds = Vec::with_capacity(c);
        for ch in 0..c {
            let (mean, inv_std) = match mode {
                Mode::Train => {
                    let mut sum = 0.0;
                    for bi in 0..b {
                        sum += x.sample(bi)[ch * hw..(ch + 1) * hw].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    let mean = sum / n;
                    let mut sq = 0.0;
                    for bi in 0..b {
                        sq += x.sample(bi)[ch * hw..(ch + 1) * hw]
                            .iter()
                            .map(|v| (v.as_f64() - mean).powi(2))
                            .sum::<f64>();
                    }
                    let var = sq / n;
                    let unbiased = if n > 1.0 { sq / (n - 1.0) } else { var };
                    let m = self.momentum;
                    let rm = &mut self.running_mean.value[ch];
                    *rm = T::of((1.0 - m) * rm.as_f64() + m * mean);
                    let rv = &mut self.running_var.value[ch];
                    *rv = T::of((1.0 - m) * rv.as_f64() + m * unbiased);
                    (mean, 1.0 / (var + self.eps).sqrt())
                }
                Mode::Eval => {
                    let var = self.running_var.value[ch].as_f64();
                    (self.running_mean.value[ch].as_f64(), 1.0 / (var + self.eps).sqrt())
                }
            };
            inv_stds.push(inv_std);
            let g = self.gamma.value[ch].as_f64();
            let be = self.beta.value[ch].as_f64();
            for bi in 0..b {
                let off = ch * hw;
                let src = &x.sample(bi)[off..off + hw];
                let dst = &mut out.sample_mut(bi)[off..off + hw];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = T::of(g * (s.as_f64() - mean) * inv_std + be);
                }
                if let Some(xh) = xhat.as_mut() {
                    let dst = &mut xh.sample_mut(bi)[off..off + hw];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = T::of((s.as_f64() - mean) * inv_std);
                    }
                }
            }
        }
        self.cache = xhat.map(|xhat| BnCache { xhat, inv_std: inv_stds, batch_stats: mode == Mode::Train });
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.as_ref().expect("batch-norm backward without training forward");
        let [b, c, h, w] = grad_out.shape();
        let hw = h * w;
        let n = (b * hw) as f64;
        let mut dx = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let off = ch * hw;
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for bi in 0..b {
                let g = &grad_out.sample(bi)[off..off + hw];
                let xh = &cache.xhat.sample(bi)[off..off + hw];
                for (gv, xv) in g.iter().zip(xh) {
                    sum_g += gv.as_f64();
                    sum_gx += gv.as_f64() * xv.as_f64();
                }
            }
            if self.gamma.trainable() {
                self.gamma.grad[ch] += T::of(sum_gx);
                self.beta.grad[ch] += T::of(sum_g);
            }
            let gamma = self.gamma.value[ch].as_f64();
            let scale = gamma * cache.inv_std[ch];
            for bi in 0..b {
                let g = &grad_out.sample(bi)[off..off + hw];
                let xh = &cache.xhat.sample(bi)[off..off + hw];
                let d = &mut dx.sample_mut(bi)[off..off + hw];
                for ((dv, gv), xv) in d.iter_mut().zip(g).zip(xh) {
                    *dv = if cache.batch_stats {
                        T::of(scale * (gv.as_f64() - sum_g / n - xv.as_f64() * sum_gx / n))
                    } else {
                        T::of(scale * gv.as_f64())
                    };
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.gamma);
        f(&join(prefix, "bias"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.gamma);
        f(&join(prefix, "bias"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }
}

/// Parametric ReLU with one shared negative slope.
#[derive(Clone, Debug)]
pub struct PRelu<T> {
    pub slope: Param<T>,
    cached_input: Option<Tensor<T>>,
}

impl<T: Scalar> Default for PRelu<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> PRelu<T> {
    pub fn new() -> Self {
        Self { slope: Param::new(vec![T::of(0.25)], vec![1], ParamKind::Trainable), cached_input: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let a = self.slope.value[0];
        let out = x.map(|v| if v > T::zero() { v } else { a * v });
        self.cached_input = (mode == Mode::Train).then(|| x.clone());
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let x = self.cached_input.as_ref().expect("prelu backward without training forward");
        let a = self.slope.value[0];
        let mut dx = grad_out.clone();
        let mut da = 0.0;
        for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
            if xv <= T::zero() {
                da += d.as_f64() * xv.as_f64();
                *d *= a;
            }
        }
        if self.slope.trainable() {
            self.slope.grad[0] += T::of(da);
        }
        dx
    }
}

impl<T: Scalar> Module<T> for PRelu<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.slope);
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.slope);
    }
}

/// Fixed-slope leaky ReLU; slope 0 gives a plain ReLU.
#[derive(Clone, Debug)]
pub struct LeakyRelu<T> {
    pub negative_slope: f64,
    cached_input: Option<Tensor<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(negative_slope: f64) -> Self {
        Self { negative_slope, cached_input: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let a = T::of(self.negative_slope);
        let out = x.map(|v| if v > T::zero() { v } else { a * v });
        self.cached_input = (mode == Mode::Train).then(|| x.clone());
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let x = self.cached_input.as_ref().expect("leaky-relu backward without training forward");
        let a = T::of(self.negative_slope);
        let mut dx = grad_out.clone();
        for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
            if xv <= T::zero() {
                *d *= a;
            }
        }
        dx
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T> {
    cached_output: Option<Tensor<T>>,
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    // Branching keeps exp() from overflowing for large |v|.
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Self { cached_output: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let out = x.map(sigmoid);
        self.cached_output = (mode == Mode::Train).then(|| out.clone());
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let y = self.cached_output.as_ref().expect("sigmoid backward without training forward");
        let mut dx = grad_out.clone();
        for (d, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
            *d *= yv * (T::one() - yv);
        }
        dx
    }
}

/// 2×2 max pooling with stride 2.
#[derive(Clone, Debug, Default)]
pub struct MaxPool2d {
    cache: Option<([usize; 4], Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let [b, c, h, w] = x.shape();
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Tensor::zeros([b, c, ho, wo]);
        let mut argmax = Vec::with_capacity(out.len());
        let data = x.data();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.data_mut()[(plane * ho + oy) * wo + ox] = data[best];
                    argmax.push(best);
                }
            }
        }
        self.cache = (mode == Mode::Train).then_some((x.shape(), argmax));
        out
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let (shape, argmax) = self.cache.as_ref().expect("max-pool backward without training forward");
        let mut dx = Tensor::zeros(*shape);
        for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
            dx.data_mut()[idx] += g;
        }
        dx
    }
}

/// Depth-to-space: `B×(C·r²)×H×W → B×C×(rH)×(rW)` with
/// `out[b, c, r·h+i, r·w+j] = in[b, c·r² + i·r + j, h, w]`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>, super::NnError> {
    let [b, cr, h, w] = x.shape();
    if r == 0 || cr % (r * r) != 0 {
        return Err(super::NnError::ChannelNotDivisible { channels: cr, factor: r });
    }
    let c = cr / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = Tensor::zeros([b, c, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let ic = ci * r * r + i * r + j;
                    let in_plane = ((bi * cr) + ic) * h * w;
                    let out_plane = (bi * c + ci) * oh * ow;
                    for y in 0..h {
                        for xx in 0..w {
                            dst[out_plane + (r * y + i) * ow + r * xx + j] = src[in_plane + y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Tensor<T> {
    let [b, c, oh, ow] = x.shape();
    assert!(oh % r == 0 && ow % r == 0, "spatial size not divisible by factor");
    let (h, w) = (oh / r, ow / r);
    let cr = c * r * r;
    let mut out = Tensor::zeros([b, cr, h, w]);
    let src = x.data();
    let dst = out.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let ic = ci * r * r + i * r + j;
                    let in_plane = (bi * c + ci) * oh * ow;
                    let out_plane = ((bi * cr) + ic) * h * w;
                    for y in 0..h {
                        for xx in 0..w {
                            dst[out_plane + y * w + xx] = src[in_plane + (r * y + i) * ow + r * xx + j];
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Tensor<f64> {
        let [b, c, h, w] = x.shape();
        let (ho, wo) = (conv.output_size(h), conv.output_size(w));
        let k = conv.kernel;
        let mut out = Tensor::zeros([b, conv.out_channels, ho, wo]);
        for bi in 0..b {
            for o in 0..conv.out_channels {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = conv.bias.value[o];
                        for ci in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (oy * conv.stride + ki) as isize - conv.padding as isize;
                                    let ix = (ox * conv.stride + kj) as isize - conv.padding as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += conv.weight.value[((o * c + ci) * k + ki) * k + kj]
                                            * x.get(bi, ci, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        let idx = ((bi * conv.out_channels + o) * ho + oy) * wo + ox;
                        out.data_mut()[idx] = acc;
                    }
                }
            }
        }
        out
    }

    fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, s, p, cout) in
            [(3, 1, 1, 5), (3, 2, 1, 5), (9, 1, 4, 5), (1, 1, 0, 5), (3, 2, 0, 6), (3, 1, 1, 3), (9, 1, 4, 3)]
        {
            let mut conv = Conv2d::<f64>::new(2, cout, k, s, p, &mut rng);
            conv.bias.value.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
            let x = random_tensor([2, 2, 7, 6], &mut rng);
            let fast = conv.forward(&x, Mode::Eval);
            let slow = naive_conv(&x, &conv);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn direct_and_gemm_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (cin, cout, k, p) in [(2, 3, 3, 1), (6, 3, 9, 4), (6, 2, 1, 0), (4, 4, 3, 0)] {
            let mut direct = Conv2d::<f64>::new(cin, cout, k, 1, p, &mut rng);
            direct.bias.value.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
            assert!(direct.use_direct());
            let x = random_tensor([2, cin, 7, 6], &mut rng);
            let y = direct.forward(&x, Mode::Train);
            let slow = naive_conv(&x, &direct);
            for (a, b) in y.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
            let g = random_tensor(y.shape(), &mut rng);
            let dx_direct = direct.backward(&g);

            // same weights with enough channels padded in to force GEMM
            let mut wide = Conv2d::<f64>::new(cin + 5, cout + 5, k, 1, p, &mut rng);
            wide.weight.value.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..cout {
                for i in 0..cin {
                    for t in 0..k * k {
                        wide.weight.value[(o * (cin + 5) + i) * k * k + t] =
                            direct.weight.value[(o * cin + i) * k * k + t];
                    }
                }
            }
            assert!(!wide.use_direct());
            let mut xw = Tensor::zeros([2, cin + 5, 7, 6]);
            let mut gw = Tensor::zeros([2, cout + 5, y.height(), y.width()]);
            for b in 0..2 {
                xw.sample_mut(b)[..cin * 42].copy_from_slice(x.sample(b));
                gw.sample_mut(b)[..g.sample_len()].copy_from_slice(g.sample(b));
            }
            wide.forward(&xw, Mode::Train);
            let dx_wide = wide.backward(&gw);
            for b in 0..2 {
                for (a, c) in dx_direct.sample(b).iter().zip(&dx_wide.sample(b)[..cin * 42]) {
                    assert!((a - c).abs() < 1e-12);
                }
            }
            for o in 0..cout {
                for i in 0..cin {
                    for t in 0..k * k {
                        let a = direct.weight.grad[(o * cin + i) * k * k + t];
                        let c = wide.weight.grad[(o * (cin + 5) + i) * k * k + t];
                        assert!((a - c).abs() < 1e-10, "{a} vs {c}");
                    }
                }
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint_of_forward() {
        // <conv(x), g> is linear in x, so dx must satisfy <conv(x) - bias, g> == <x, dx>.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::<f64>::new(3, 4, 3, 2, 1, &mut rng);
        let x = random_tensor([2, 3, 9, 8], &mut rng);
        let y = conv.forward(&x, Mode::Train);
        let g = random_tensor(y.shape(), &mut rng);
        let dx = conv.backward(&g);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn discriminator_stride_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::<f32>::new(1, 1, 3, 2, 1, &mut rng);
        assert_eq!(conv.output_size(136), 68);
        assert_eq!(conv.output_size(68), 34);
        assert_eq!(conv.output_size(34), 17);
        assert_eq!(conv.output_size(17), 9);
    }

    #[test]
    fn pixel_shuffle_small_case() {
        let x = Tensor::from_vec([1, 4, 1, 1], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn pixel_shuffle_rejects_indivisible_channels() {
        let x = Tensor::<f32>::zeros([1, 6, 2, 2]);
        assert!(matches!(
            pixel_shuffle(&x, 2),
            Err(crate::nn::NnError::ChannelNotDivisible { channels: 6, factor: 2 })
        ));
    }

    #[test]
    fn unshuffle_inverts_shuffle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor([2, 8, 3, 4], &mut rng);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(pixel_unshuffle(&y, 2), x);
    }

    #[test]
    fn batch_norm_eval_uses_running_stats() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        bn.running_mean.value[0] = 2.0;
        bn.running_var.value[0] = 4.0 - 1e-5;
        let x = Tensor::from_vec([1, 1, 1, 2], vec![2.0, 4.0]).unwrap();
        let y = bn.forward(&x, Mode::Eval);
        assert!((y.data()[0]).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_train_normalizes_and_tracks() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        let x = Tensor::from_vec([2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = bn.forward(&x, Mode::Train);
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
        assert!((bn.running_mean.value[0] - 0.25).abs() < 1e-12);
        // unbiased variance of [1,2,3,4] is 5/3
        assert!((bn.running_var.value[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0f64, 5.0, 3.0, 2.0]).unwrap();
        let mut pool = MaxPool2d::new();
        let y = pool.forward(&x, Mode::Train);
        assert_eq!(y.data(), &[5.0]);
        let dx = pool.backward(&Tensor::from_vec([1, 1, 1, 1], vec![1.0]).unwrap());
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
