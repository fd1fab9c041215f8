//! Adversarial training loop, learning-rate schedule and loss history.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{CodecError, ImageTile, HR_SIDE, LR_SIDE};
use crate::losses::{self, AdversarialMode, LossError, LossWeights};
use crate::model::{
    save_checkpoint, Discriminator, DiscriminatorSpec, FeatureExtractor, Generator, GeneratorSpec, ModelError,
};
use crate::nn::{Adam, Mode, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("tile {index} has side {found}, expected {expected}")]
    BadTile { index: usize, expected: usize, found: usize },
    #[error("training diverged at epoch {epoch}: {cause}")]
    Diverged {
        epoch: usize,
        cause: Box<LossError>,
        /// Most recent checkpoint written before the failure, if any.
        last_checkpoint: Option<PathBuf>,
        history: LossHistory,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub decay_start_epoch: usize,
    pub total_epochs: usize,
    pub weights: LossWeights,
    pub adversarial_mode: AdversarialMode,
    pub seed: u64,
    /// Width/block divisor; 1 is the full-size network.
    pub model_divisor: usize,
    /// Save `epoch_NNNN` every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Where checkpoints go; `None` disables checkpointing entirely.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            beta1: 0.5,
            beta2: 0.999,
            decay_start_epoch: 250,
            total_epochs: 500,
            weights: LossWeights::default(),
            adversarial_mode: AdversarialMode::LeastSquares,
            seed: 0,
            model_divisor: 1,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.total_epochs == 0 {
            return bad("total_epochs must be at least 1");
        }
        if self.decay_start_epoch > self.total_epochs {
            return bad("decay_start_epoch must not exceed total_epochs");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.model_divisor == 0 {
            return bad("model_divisor must be at least 1");
        }
        LossWeights::new(self.weights.lambda_adv, self.weights.beta_pixel)?;
        Ok(())
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec::reduced(self.model_divisor)
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec::reduced(self.model_divisor)
    }
}

/// Base rate until `decay_start_epoch`, then linear decay reaching zero at
/// `total_epochs`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.decay_start_epoch || cfg.total_epochs == cfg.decay_start_epoch {
        return cfg.learning_rate;
    }
    let left = cfg.total_epochs.saturating_sub(epoch) as f64;
    cfg.learning_rate * left / (cfg.total_epochs - cfg.decay_start_epoch) as f64
}

/// Mean generator-loss components over a split or an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub total: f64,
    pub content: f64,
    pub adversarial: f64,
    pub pixel: f64,
}

impl LossComponents {
    fn accumulate(&mut self, other: &LossComponents, weight: f64) {
        self.total += other.total * weight;
        self.content += other.content * weight;
        self.adversarial += other.adversarial * weight;
        self.pixel += other.pixel * weight;
    }

    fn scaled(mut self, k: f64) -> Self {
        self.total *= k;
        self.content *= k;
        self.adversarial *= k;
        self.pixel *= k;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossComponents,
    pub test: LossComponents,
    pub discriminator: f64,
    pub lr: f64,
}

/// Per-epoch losses, epochs numbered contiguously from 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory {
    pub epochs: Vec<EpochRecord>,
}

impl LossHistory {
    /// `epoch,gen_train,gen_test,disc,lr`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,gen_train,gen_test,disc,lr\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:e},{:e},{:e},{:e}", e.epoch, e.train.total, e.test.total, e.discriminator, e.lr);
        }
        s
    }

    /// Every generator-loss component for both splits.
    pub fn components_csv(&self) -> String {
        let mut s = String::from(
            "epoch,train_content,train_adversarial,train_pixel,test_content,test_adversarial,test_pixel\n",
        );
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                e.epoch,
                e.train.content,
                e.train.adversarial,
                e.train.pixel,
                e.test.content,
                e.test.adversarial,
                e.test.pixel
            );
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// A training example: LR input and its HR target.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePair {
    pub lr: ImageTile,
    pub hr: ImageTile,
}

struct Batches {
    lr: Vec<Tensor<f32>>,
    hr: Vec<Tensor<f32>>,
}

impl Batches {
    fn new(pairs: &[TilePair]) -> Result<Self, TrainError> {
        for (index, p) in pairs.iter().enumerate() {
            if p.lr.side() != LR_SIDE {
                return Err(TrainError::BadTile { index, expected: LR_SIDE, found: p.lr.side() });
            }
            if p.hr.side() != HR_SIDE {
                return Err(TrainError::BadTile { index, expected: HR_SIDE, found: p.hr.side() });
            }
        }
        Ok(Self {
            lr: pairs.iter().map(|p| p.lr.to_tensor()).collect(),
            hr: pairs.iter().map(|p| p.hr.to_tensor()).collect(),
        })
    }

    fn gather(&self, idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let lr: Vec<_> = idx.iter().map(|&i| self.lr[i].clone()).collect();
        let hr: Vec<_> = idx.iter().map(|&i| self.hr[i].clone()).collect();
        (Tensor::stack(&lr).expect("tiles share a shape"), Tensor::stack(&hr).expect("tiles share a shape"))
    }
}

/// Generator-loss components on one batch, all networks in inference mode.
fn eval_batch(
    g: &mut Generator<f32>,
    d: &mut Discriminator<f32>,
    phi: &mut Option<&mut dyn FeatureExtractor<f32>>,
    lr: &Tensor<f32>,
    hr: &Tensor<f32>,
    cfg: &TrainConfig,
) -> Result<LossComponents, TrainError> {
    let gen = g.forward(lr, Mode::Eval)?;
    let pixel = losses::pixel_loss(hr, &gen)?.value;
    let content = match phi {
        Some(phi) => {
            let a = phi.extract(hr, Mode::Eval);
            let b = phi.extract(&gen, Mode::Eval);
            losses::pixel_loss(&a, &b)?.value
        }
        None => 0.0,
    };
    let adversarial = losses::adversarial_loss_generator(&d.forward(&gen, Mode::Eval)?, cfg.adversarial_mode).value;
    let total = losses::total_generator_loss(content, adversarial, pixel, &cfg.weights)?;
    Ok(LossComponents { total, content, adversarial, pixel })
}

/// Mean composite generator loss over a split (in batches of
/// `cfg.batch_size`), without touching any parameter or statistic.
pub fn evaluate_split(
    g: &mut Generator<f32>,
    d: &mut Discriminator<f32>,
    mut phi: Option<&mut dyn FeatureExtractor<f32>>,
    tiles: &[TilePair],
    cfg: &TrainConfig,
) -> Result<LossComponents, TrainError> {
    if tiles.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation split"));
    }
    let data = Batches::new(tiles)?;
    let idx: Vec<usize> = (0..tiles.len()).collect();
    let mut acc = LossComponents::default();
    for chunk in idx.chunks(cfg.batch_size.max(1)) {
        let (lr, hr) = data.gather(chunk);
        let c = eval_batch(g, d, &mut phi, &lr, &hr, cfg)?;
        acc.accumulate(&c, chunk.len() as f64);
    }
    Ok(acc.scaled(1.0 / tiles.len() as f64))
}

/// Runs the generator in inference mode over LR tiles, `batch` at a time.
pub fn generate_tiles(
    g: &mut Generator<f32>,
    lr_tiles: &[ImageTile],
    batch: usize,
) -> Result<Vec<ImageTile>, TrainError> {
    let mut out = Vec::with_capacity(lr_tiles.len());
    for chunk in lr_tiles.chunks(batch.max(1)) {
        for (index, t) in chunk.iter().enumerate() {
            if t.side() != LR_SIDE {
                return Err(TrainError::BadTile { index: out.len() + index, expected: LR_SIDE, found: t.side() });
            }
        }
        let x = Tensor::stack(&chunk.iter().map(|t| t.to_tensor()).collect::<Vec<_>>()).expect("tiles share a shape");
        let y = g.forward(&x, Mode::Eval)?;
        for b in 0..chunk.len() {
            out.push(ImageTile::from_tensor(&y, b)?);
        }
    }
    Ok(out)
}

pub struct TrainOutcome {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub history: LossHistory,
    pub best_epoch: usize,
    pub best_test_loss: f64,
    /// Every checkpoint directory written, in order.
    pub checkpoints: Vec<PathBuf>,
}

struct StepLosses {
    generator: LossComponents,
    discriminator: f64,
}

/// Generator update. Gradients flow through the discriminator, which does
/// not learn from them. Returns the loss components and the
/// discriminator's scores of the generated batch.
#[allow(clippy::too_many_arguments)]
fn generator_step(
    g: &mut Generator<f32>,
    d: &mut Discriminator<f32>,
    phi: &mut Option<&mut dyn FeatureExtractor<f32>>,
    opt_g: &mut Adam,
    lr_in: &Tensor<f32>,
    hr: &Tensor<f32>,
    cfg: &TrainConfig,
    rate: f64,
) -> Result<(LossComponents, Tensor<f32>), LossError> {
    let w = cfg.weights;
    let gen = g.forward(lr_in, Mode::Train).expect("validated tile shapes");
    let pixel = losses::pixel_loss(hr, &gen)?;
    let mut grad = pixel.grad.clone();
    grad.scale(w.beta_pixel as f32);
    let content = match phi {
        Some(phi) => {
            let c = losses::content_loss(hr, &gen, &mut **phi)?;
            grad.add_assign(&c.grad);
            c.value
        }
        None => 0.0,
    };
    let d_fake = d.forward(&gen, Mode::Train).expect("validated tile shapes");
    let adv = losses::adversarial_loss_generator(&d_fake, cfg.adversarial_mode);
    let total = losses::total_generator_loss(content, adv.value, pixel.value, &w)?;
    if w.lambda_adv != 0.0 {
        d.set_learning(false);
        let through_d = d.backward(&adv.grad);
        d.set_learning(true);
        grad.axpy(w.lambda_adv as f32, &through_d);
    }
    g.backward(&grad);
    opt_g.step(g, rate);
    Ok((LossComponents { total, content, adversarial: adv.value, pixel: pixel.value }, d_fake))
}

/// Discriminator update on the generator's pre-update output. `d_fake`
/// must come from the discriminator's latest forward pass, whose cache is
/// reused for the fake term.
fn discriminator_step(
    d: &mut Discriminator<f32>,
    opt_d: &mut Adam,
    d_fake: &Tensor<f32>,
    hr: &Tensor<f32>,
    cfg: &TrainConfig,
    rate: f64,
) -> Result<f64, LossError> {
    let mode = cfg.adversarial_mode;
    let fake = losses::discriminator_fake_term(d_fake, mode);
    d.backward(&fake.grad);
    let d_real = d.forward(hr, Mode::Train).expect("validated tile shapes");
    let real = losses::discriminator_real_term(&d_real, mode);
    d.backward(&real.grad);
    let disc = real.value + fake.value;
    if !disc.is_finite() {
        return Err(LossError::NonFiniteLoss { content: 0.0, adversarial: disc, pixel: 0.0 });
    }
    opt_d.step(d, rate);
    Ok(disc)
}

/// One generator update followed by one discriminator update.
#[allow(clippy::too_many_arguments)]
fn train_step(
    g: &mut Generator<f32>,
    d: &mut Discriminator<f32>,
    phi: &mut Option<&mut dyn FeatureExtractor<f32>>,
    opt_g: &mut Adam,
    opt_d: &mut Adam,
    lr_in: &Tensor<f32>,
    hr: &Tensor<f32>,
    cfg: &TrainConfig,
    rate: f64,
) -> Result<StepLosses, LossError> {
    let (generator, d_fake) = generator_step(g, d, phi, opt_g, lr_in, hr, cfg, rate)?;
    let discriminator = discriminator_step(d, opt_d, &d_fake, hr, cfg, rate)?;
    Ok(StepLosses { generator, discriminator })
}

fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Trains a fresh generator/discriminator pair. `phi` enables the content
/// term; without it the content component is zero.
pub fn train(
    cfg: &TrainConfig,
    train_tiles: &[TilePair],
    test_tiles: &[TilePair],
    mut phi: Option<&mut dyn FeatureExtractor<f32>>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_tiles.is_empty() {
        return Err(TrainError::EmptyDataset("training split"));
    }
    if test_tiles.is_empty() {
        return Err(TrainError::EmptyDataset("test split"));
    }
    let data = Batches::new(train_tiles)?;
    Batches::new(test_tiles)?;

    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = Generator::<f32>::new(&cfg.generator_spec(), &mut init);
    let mut d = Discriminator::<f32>::new(&cfg.discriminator_spec(), &mut init);
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle.set_stream(1);
    let mut opt_g = Adam::new(cfg.beta1, cfg.beta2);
    let mut opt_d = Adam::new(cfg.beta1, cfg.beta2);

    let mut history = LossHistory::default();
    let mut checkpoints = Vec::new();
    let mut best = (0usize, f64::INFINITY);
    let mut order: Vec<usize> = (0..train_tiles.len()).collect();

    for epoch in 1..=cfg.total_epochs {
        let rate = lr_schedule(epoch, cfg);
        order.shuffle(&mut shuffle);
        let mut train = LossComponents::default();
        let mut disc = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (lr_in, hr) = data.gather(chunk);
            let step = train_step(&mut g, &mut d, &mut phi, &mut opt_g, &mut opt_d, &lr_in, &hr, cfg, rate).map_err(
                |cause| TrainError::Diverged {
                    epoch,
                    cause: Box::new(cause),
                    last_checkpoint: checkpoints.last().cloned(),
                    history: history.clone(),
                },
            )?;
            train.accumulate(&step.generator, chunk.len() as f64);
            disc += step.discriminator * chunk.len() as f64;
        }
        let n = train_tiles.len() as f64;
        let test = match evaluate_split(
            &mut g,
            &mut d,
            phi.as_mut().map(|p| &mut **p as &mut dyn FeatureExtractor<f32>),
            test_tiles,
            cfg,
        ) {
            Ok(t) => t,
            Err(TrainError::Loss(cause)) => {
                return Err(TrainError::Diverged {
                    epoch,
                    cause: Box::new(cause),
                    last_checkpoint: checkpoints.last().cloned(),
                    history,
                })
            }
            Err(e) => return Err(e),
        };
        history.epochs.push(EpochRecord {
            epoch,
            train: train.scaled(1.0 / n),
            test,
            discriminator: disc / n,
            lr: rate,
        });
        log::debug!("epoch {epoch}: gen_train {:.6e} gen_test {:.6e}", train.total / n, test.total);

        if let Some(dir) = &cfg.checkpoint_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                let p = save_checkpoint(
                    &checkpoint_path(dir, &format!("epoch_{epoch:04}")),
                    &g,
                    &d,
                    epoch,
                    cfg.adversarial_mode,
                )?;
                checkpoints.push(p);
            }
            if test.total < best.1 {
                let p = save_checkpoint(&checkpoint_path(dir, "best"), &g, &d, epoch, cfg.adversarial_mode)?;
                checkpoints.push(p);
            }
        }
        if test.total < best.1 {
            best = (epoch, test.total);
        }
    }

    Ok(TrainOutcome {
        generator: g,
        discriminator: d,
        history,
        best_epoch: best.0,
        best_test_loss: best.1,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(100, &cfg), 1e-4);
        assert_eq!(lr_schedule(249, &cfg), 1e-4);
        assert_eq!(lr_schedule(250, &cfg), 1e-4);
        assert!((lr_schedule(375, &cfg) - 5e-5).abs() < 1e-18);
        assert_eq!(lr_schedule(500, &cfg), 0.0);
    }

    #[test]
    fn schedule_is_nonincreasing() {
        let cfg = TrainConfig { total_epochs: 40, decay_start_epoch: 10, ..TrainConfig::default() };
        let v: Vec<f64> = (1..=40).map(|e| lr_schedule(e, &cfg)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(TrainError::InvalidConfig(_))));
        let bad = TrainConfig { decay_start_epoch: 600, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    fn trainable_checksum<M: crate::nn::Module<f32>>(m: &M) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        m.visit("", &mut |_, p| {
            if p.trainable() {
                for v in &p.value {
                    h = (h ^ v.to_bits() as u64).wrapping_mul(0x0100_0000_01b3);
                }
            }
        });
        h
    }

    #[test]
    fn each_half_step_leaves_the_other_network_alone() {
        use crate::nn::Module;
        let cfg = TrainConfig { model_divisor: 8, ..TrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Generator::<f32>::new(&cfg.generator_spec(), &mut rng);
        let mut d = Discriminator::<f32>::new(&cfg.discriminator_spec(), &mut rng);
        let mut opt_g = Adam::new(cfg.beta1, cfg.beta2);
        let mut opt_d = Adam::new(cfg.beta1, cfg.beta2);
        let lr_in = Tensor::full([2, 3, LR_SIDE, LR_SIDE], 0.3f32);
        let hr = Tensor::full([2, 3, HR_SIDE, HR_SIDE], 0.6f32);
        let mut phi: Option<&mut dyn FeatureExtractor<f32>> = None;

        for _ in 0..2 {
            let (g0, d0) = (g.checksum(), trainable_checksum(&d));
            let (_, d_fake) = generator_step(&mut g, &mut d, &mut phi, &mut opt_g, &lr_in, &hr, &cfg, 1e-3).unwrap();
            assert_ne!(g.checksum(), g0);
            assert_eq!(trainable_checksum(&d), d0);

            let (g1, d1) = (g.checksum(), d.checksum());
            discriminator_step(&mut d, &mut opt_d, &d_fake, &hr, &cfg, 1e-3).unwrap();
            assert_eq!(g.checksum(), g1);
            assert_ne!(d.checksum(), d1);
        }
    }

    #[test]
    fn history_csv_layout() {
        let h = LossHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                train: LossComponents { total: 1.5, ..Default::default() },
                test: LossComponents { total: 2.0, ..Default::default() },
                discriminator: 0.5,
                lr: 1e-4,
            }],
        };
        assert_eq!(h.to_csv(), "epoch,gen_train,gen_test,disc,lr\n1,1.5e0,2e0,5e-1,1e-4\n");
        assert_eq!(h.components_csv().lines().count(), 2);
    }
}
