//! Checkpoint directories: `generator.safetensors`,
//! `discriminator.safetensors` and a `manifest.txt` of `key = value` lines.
//! Directories are written under a temporary name and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, ModelError};
use crate::losses::AdversarialMode;
use crate::nn::{Module, Scalar};

pub const GENERATOR_FILE: &str = "generator.safetensors";
pub const DISCRIMINATOR_FILE: &str = "discriminator.safetensors";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointManifest {
    pub epoch: usize,
    pub spec_hash: String,
    pub loss_mode: AdversarialMode,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
}

/// Short hex digest identifying a generator/discriminator architecture pair.
pub fn spec_hash(g: &GeneratorSpec, d: &DiscriminatorSpec) -> String {
    let mut h = Sha256::new();
    h.update(g.describe().as_bytes());
    h.update(b"\n");
    h.update(d.describe().as_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl CheckpointManifest {
    fn render(&self) -> String {
        let g = &self.generator;
        let widths: Vec<String> = self.discriminator.widths.iter().map(|w| w.to_string()).collect();
        format!(
            "epoch = {}\nspec_hash = {}\nloss_mode = {}\ngenerator_width = {}\ngenerator_residual_blocks = {}\n\
             generator_upsample_blocks = {}\ndiscriminator_widths = {}\n",
            self.epoch,
            self.spec_hash,
            self.loss_mode,
            g.width,
            g.residual_blocks,
            g.upsample_blocks,
            widths.join(","),
        )
    }

    fn parse(text: &str) -> Result<Self, ModelError> {
        let mut kv = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| ModelError::Checkpoint(format!("bad manifest line: {line}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| ModelError::Checkpoint(format!("manifest lacks {k}")));
        let num = |k: &str| -> Result<usize, ModelError> {
            get(k)?.parse().map_err(|_| ModelError::Checkpoint(format!("manifest {k} is not an integer")))
        };
        let generator = GeneratorSpec {
            width: num("generator_width")?,
            residual_blocks: num("generator_residual_blocks")?,
            upsample_blocks: num("generator_upsample_blocks")?,
            ..GeneratorSpec::default()
        };
        let widths = get("discriminator_widths")?
            .split(',')
            .map(|w| w.trim().parse())
            .collect::<Result<Vec<usize>, _>>()
            .map_err(|_| ModelError::Checkpoint("bad discriminator_widths".into()))?;
        let discriminator = DiscriminatorSpec { widths, ..DiscriminatorSpec::default() };
        let loss_mode = get("loss_mode")?.parse().map_err(ModelError::Checkpoint)?;
        Ok(Self { epoch: num("epoch")?, spec_hash: get("spec_hash")?, loss_mode, generator, discriminator })
    }
}

pub(crate) fn decode_values<T: Scalar>(dtype: safetensors::Dtype, bytes: &[u8]) -> Option<Vec<T>> {
    match dtype {
        safetensors::Dtype::F32 => Some(bytes.chunks_exact(4).map(|c| T::of(f32::read_le(c) as f64)).collect()),
        safetensors::Dtype::F64 => Some(bytes.chunks_exact(8).map(|c| T::of(f64::read_le(c))).collect()),
        _ => None,
    }
}

/// Serializes named tensors in declaration order.
pub fn write_safetensors<T: Scalar>(path: &Path, tensors: &[(String, Vec<usize>, Vec<T>)]) -> Result<(), ModelError> {
    let buffers: Vec<Vec<u8>> = tensors
        .iter()
        .map(|(_, _, values)| {
            let mut b = Vec::with_capacity(values.len() * T::BYTES);
            values.iter().for_each(|v| v.write_le(&mut b));
            b
        })
        .collect();
    let views = tensors
        .iter()
        .zip(&buffers)
        .map(|((name, shape, _), bytes)| {
            safetensors::tensor::TensorView::new(T::DTYPE, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| ModelError::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let bytes = safetensors::tensor::serialize(views, &None).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

fn collect<T: Scalar, M: Module<T>>(m: &M) -> Vec<(String, Vec<usize>, Vec<T>)> {
    let mut out = Vec::new();
    m.visit("", &mut |name, p| out.push((name.to_string(), p.shape.clone(), p.value.clone())));
    out
}

fn restore<T: Scalar, M: Module<T>>(m: &mut M, path: &Path) -> Result<(), ModelError> {
    let bytes = fs::read(path)?;
    let tensors = safetensors::SafeTensors::deserialize(&bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut failure = None;
    m.visit_mut("", &mut |name, p| {
        if failure.is_some() {
            return;
        }
        match tensors.tensor(name) {
            Ok(view) if view.shape() == p.shape.as_slice() => match decode_values::<T>(view.dtype(), view.data()) {
                Some(v) => p.value = v,
                None => failure = Some(format!("{name}: unsupported dtype")),
            },
            Ok(view) => failure = Some(format!("{name}: shape {:?} != {:?}", view.shape(), p.shape)),
            Err(_) => failure = Some(format!("{name}: missing")),
        }
    });
    match failure {
        Some(msg) => Err(ModelError::Checkpoint(format!("{}: {msg}", path.display()))),
        None => Ok(()),
    }
}

/// Writes a checkpoint directory atomically (replacing any previous one).
pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    generator: &Generator<T>,
    discriminator: &Discriminator<T>,
    epoch: usize,
    loss_mode: AdversarialMode,
) -> Result<PathBuf, ModelError> {
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = dir.file_name().ok_or_else(|| ModelError::Checkpoint("checkpoint path has no name".into()))?;
    let tmp = parent.join(format!(".{}.tmp", name.to_string_lossy()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    write_safetensors(&tmp.join(GENERATOR_FILE), &collect(generator))?;
    write_safetensors(&tmp.join(DISCRIMINATOR_FILE), &collect(discriminator))?;
    let manifest = CheckpointManifest {
        epoch,
        spec_hash: spec_hash(generator.spec(), discriminator.spec()),
        loss_mode,
        generator: generator.spec().clone(),
        discriminator: discriminator.spec().clone(),
    };
    fs::write(tmp.join(MANIFEST_FILE), manifest.render())?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(dir.to_path_buf())
}

pub struct LoadedCheckpoint<T> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub manifest: CheckpointManifest,
}

pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<LoadedCheckpoint<T>, ModelError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))?;
    let manifest = CheckpointManifest::parse(&text)?;
    let want = spec_hash(&manifest.generator, &manifest.discriminator);
    if want != manifest.spec_hash {
        return Err(ModelError::Checkpoint(format!(
            "spec hash {} does not match architecture ({want})",
            manifest.spec_hash
        )));
    }
    // Initial values are overwritten by the stored tensors.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut generator = Generator::new(&manifest.generator, &mut rng);
    let mut discriminator = Discriminator::new(&manifest.discriminator, &mut rng);
    restore(&mut generator, &dir.join(GENERATOR_FILE))?;
    restore(&mut discriminator, &dir.join(DISCRIMINATOR_FILE))?;
    Ok(LoadedCheckpoint { generator, discriminator, manifest })
}
