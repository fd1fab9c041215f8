//! Frozen convolutional feature extractors for the content loss.
//!
//! The default extractor is the prefix of the VGG-19 feature stack made of
//! its first 18 modules, counted the way the canonical `features` sequence
//! numbers them (each conv, each ReLU and each max-pool is one module):
//!
//! ```text
//!  0 conv3-64   1 relu   2 conv64-64   3 relu   4 maxpool
//!  5 conv64-128 6 relu   7 conv128-128 8 relu   9 maxpool
//! 10 conv128-256 11 relu 12 conv256-256 13 relu 14 conv256-256 15 relu
//! 16 conv256-256 17 relu
//! ```
//!
//! The cut therefore lands after the ReLU following the fourth conv of the
//! third stage, giving a 256-channel map at a quarter of the input size.
//! Weights are read from a safetensors file with keys
//! `features.<module index>.weight` / `.bias`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelError;
use crate::nn::{join, Conv2d, LeakyRelu, MaxPool2d, Mode, Module, Param, Scalar, Tensor};

/// A fixed network φ whose input gradient is available but whose weights
/// never change.
pub trait FeatureExtractor<T: Scalar> {
    fn extract(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T>;
    /// Gradient with respect to the input of the last training-mode
    /// [`extract`](Self::extract) call.
    fn backward_input(&mut self, grad: &Tensor<T>) -> Tensor<T>;
    /// Hash of the weights; constant for the extractor's lifetime.
    fn fingerprint(&self) -> u64;
}

/// Number of leading VGG-19 modules used as φ.
pub const VGG19_PREFIX_MODULES: usize = 18;

const VGG19_CFG: [Option<usize>; 21] = [
    Some(64),
    Some(64),
    None,
    Some(128),
    Some(128),
    None,
    Some(256),
    Some(256),
    Some(256),
    Some(256),
    None,
    Some(512),
    Some(512),
    Some(512),
    Some(512),
    None,
    Some(512),
    Some(512),
    Some(512),
    Some(512),
    None,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Conv { in_c: usize, out_c: usize },
    Relu,
    Pool,
}

/// Module list of the first `modules` entries of VGG-19 with channel widths
/// divided by `divisor`.
fn vgg19_plan(modules: usize, divisor: usize) -> Vec<Stage> {
    let mut plan = Vec::new();
    let mut in_c = 3;
    for item in VGG19_CFG {
        match item {
            Some(w) => {
                let out_c = (w / divisor.max(1)).max(1);
                plan.push(Stage::Conv { in_c, out_c });
                plan.push(Stage::Relu);
                in_c = out_c;
            }
            None => plan.push(Stage::Pool),
        }
    }
    plan.truncate(modules);
    plan
}

#[derive(Clone, Debug)]
enum Layer<T> {
    Conv(Conv2d<T>),
    Relu(LeakyRelu<T>),
    Pool(MaxPool2d),
}

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// VGG-style conv/ReLU/pool stack with frozen weights.
#[derive(Clone, Debug)]
pub struct VggFeatures<T> {
    layers: Vec<(usize, Layer<T>)>,
    /// Apply the photographic channel standardization before the first conv.
    pub vgg_input_norm: bool,
    fingerprint: u64,
}

impl<T: Scalar> VggFeatures<T> {
    /// Loads the 18-module VGG-19 prefix from a safetensors weights file.
    pub fn load_vgg19(path: &Path) -> Result<Self, ModelError> {
        let bytes =
            std::fs::read(path).map_err(|e| ModelError::WeightsUnavailable(format!("{}: {e}", path.display())))?;
        let tensors = safetensors::SafeTensors::deserialize(&bytes)
            .map_err(|e| ModelError::WeightsUnavailable(format!("{}: {e}", path.display())))?;
        let plan = vgg19_plan(VGG19_PREFIX_MODULES, 1);
        let mut layers = Vec::with_capacity(plan.len());
        for (idx, stage) in plan.into_iter().enumerate() {
            let layer = match stage {
                Stage::Conv { in_c, out_c } => {
                    let weight = read_tensor::<T>(&tensors, &format!("features.{idx}.weight"), &[out_c, in_c, 3, 3])?;
                    let bias = read_tensor::<T>(&tensors, &format!("features.{idx}.bias"), &[out_c])?;
                    let mut conv = Conv2d::from_weights(in_c, out_c, 3, 1, 1, weight, bias);
                    conv.freeze();
                    Layer::Conv(conv)
                }
                Stage::Relu => Layer::Relu(LeakyRelu::new(0.0)),
                Stage::Pool => Layer::Pool(MaxPool2d::new()),
            };
            layers.push((idx, layer));
        }
        Ok(Self::finish(layers))
    }

    /// Same topology as the VGG-19 prefix, channel widths divided by
    /// `divisor`, weights drawn once from a seeded Kaiming normal and frozen.
    /// Used where pretrained weights are not available (tests, desk runs).
    pub fn random(modules: usize, divisor: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = vgg19_plan(modules, divisor)
            .into_iter()
            .enumerate()
            .map(|(idx, stage)| {
                let layer = match stage {
                    Stage::Conv { in_c, out_c } => {
                        let mut conv = Conv2d::new(in_c, out_c, 3, 1, 1, &mut rng);
                        conv.freeze();
                        Layer::Conv(conv)
                    }
                    Stage::Relu => Layer::Relu(LeakyRelu::new(0.0)),
                    Stage::Pool => Layer::Pool(MaxPool2d::new()),
                };
                (idx, layer)
            })
            .collect();
        Self::finish(layers)
    }

    fn finish(layers: Vec<(usize, Layer<T>)>) -> Self {
        let mut me = Self { layers, vgg_input_norm: false, fingerprint: 0 };
        me.fingerprint = me.checksum();
        me
    }

    pub fn output_channels(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|(_, l)| match l {
                Layer::Conv(c) => Some(c.out_channels),
                _ => None,
            })
            .unwrap_or(3)
    }
}

fn read_tensor<T: Scalar>(
    tensors: &safetensors::SafeTensors<'_>,
    name: &str,
    shape: &[usize],
) -> Result<Vec<T>, ModelError> {
    let view = tensors.tensor(name).map_err(|_| ModelError::WeightsUnavailable(format!("missing tensor {name}")))?;
    if view.shape() != shape {
        return Err(ModelError::WeightsUnavailable(format!(
            "tensor {name} has shape {:?}, expected {shape:?}",
            view.shape()
        )));
    }
    super::checkpoint::decode_values(view.dtype(), view.data())
        .ok_or_else(|| ModelError::WeightsUnavailable(format!("tensor {name} has unsupported dtype")))
}

impl<T: Scalar> FeatureExtractor<T> for VggFeatures<T> {
    fn extract(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let mut h = if self.vgg_input_norm {
            let mut h = x.clone();
            let [b, c, hh, ww] = x.shape();
            for bi in 0..b {
                for ch in 0..c.min(3) {
                    let plane = &mut h.sample_mut(bi)[ch * hh * ww..(ch + 1) * hh * ww];
                    for v in plane {
                        *v = T::of((v.as_f64() - IMAGENET_MEAN[ch]) / IMAGENET_STD[ch]);
                    }
                }
            }
            h
        } else {
            x.clone()
        };
        for (_, layer) in &mut self.layers {
            h = match layer {
                Layer::Conv(c) => c.forward(&h, mode),
                Layer::Relu(r) => r.forward(&h, mode),
                Layer::Pool(p) => p.forward(&h, mode),
            };
        }
        h
    }

    fn backward_input(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut g = grad.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            g = match layer {
                Layer::Conv(c) => c.backward(&g),
                Layer::Relu(r) => r.backward(&g),
                Layer::Pool(p) => p.backward(&g),
            };
        }
        if self.vgg_input_norm {
            let [b, c, hh, ww] = g.shape();
            for bi in 0..b {
                for (ch, std) in IMAGENET_STD.iter().enumerate().take(c) {
                    let plane = &mut g.sample_mut(bi)[ch * hh * ww..(ch + 1) * hh * ww];
                    for v in plane {
                        *v = T::of(v.as_f64() / std);
                    }
                }
            }
        }
        g
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

impl<T: Scalar> Module<T> for VggFeatures<T> {
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (idx, layer) in &mut self.layers {
            if let Layer::Conv(c) = layer {
                c.visit_mut(&join(prefix, &format!("features.{idx}")), f);
            }
        }
    }
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (idx, layer) in &self.layers {
            if let Layer::Conv(c) = layer {
                c.visit(&join(prefix, &format!("features.{idx}")), f);
            }
        }
    }
}
