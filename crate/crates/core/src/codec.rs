//! Time-series ⇄ RGB tile codec.
//!
//! Acceleration, velocity and displacement go to the R, G and B planes.
//! Each channel is min/max normalized over the whole record, then samples
//! are packed row-major: pixel `(r, c)` of tile `k` holds sample
//! `18496·k + 136·r + c`. The last tile is zero-padded and its true
//! sample count is kept in [`TileMetadata`] so decoding can truncate.
//!
//! Low-resolution tiles are a stride-64 decimation in time: LR pixel with
//! row-major index `k` is HR sample `64·k` of the same tile.

use std::path::Path;

use crate::gm_io::{Channel, GroundMotionRecord};
use crate::nn::{Scalar, Tensor};

pub const HR_SIDE: usize = 136;
pub const LR_SIDE: usize = 17;
pub const HR_TILE_SAMPLES: usize = HR_SIDE * HR_SIDE;
pub const LR_TILE_SAMPLES: usize = LR_SIDE * LR_SIDE;
/// Time-domain decimation between HR and LR tiles.
pub const DECIMATION: usize = HR_TILE_SAMPLES / LR_TILE_SAMPLES;
pub const CHANNELS: usize = 3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CodecError {
    #[error("non-finite input sample at index {0}")]
    NonFiniteInput(usize),
    #[error("record has no samples")]
    EmptyRecord,
    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),
    #[error("pixel value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("tile side {0} is not {HR_SIDE} or {LR_SIDE}")]
    BadSide(usize),
    #[error("malformed sidecar: {0}")]
    BadSidecar(String),
    #[error("image error: {0}")]
    Image(String),
}

/// Affine map between a channel's physical range and `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelNorm {
    pub min: f64,
    pub max: f64,
}

impl ChannelNorm {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            x * (self.max - self.min) + self.min
        }
    }
}

/// Min/max normalization to `[0, 1]`; a constant channel maps to 0.5.
pub fn normalize_channel(values: &[f64]) -> Result<(Vec<f64>, ChannelNorm), CodecError> {
    if values.is_empty() {
        return Err(CodecError::EmptyRecord);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CodecError::NonFiniteInput(i));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm = ChannelNorm { min, max };
    Ok((values.iter().map(|&v| norm.normalize(v)).collect(), norm))
}

/// Square three-plane tile of floats in `[0, 1]`, stored plane by plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTile {
    side: usize,
    data: Vec<f64>,
}

impl ImageTile {
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self, CodecError> {
        if side != HR_SIDE && side != LR_SIDE {
            return Err(CodecError::BadSide(side));
        }
        if data.len() != CHANNELS * side * side {
            return Err(CodecError::MetadataMismatch(format!("{} values for a {side}x{side}x3 tile", data.len())));
        }
        if let Some(&v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CodecError::OutOfRange(v));
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn samples_per_channel(&self) -> usize {
        self.side * self.side
    }

    pub fn plane(&self, channel: Channel) -> &[f64] {
        let n = self.samples_per_channel();
        &self.data[channel.index() * n..(channel.index() + 1) * n]
    }

    pub fn pixel(&self, channel: Channel, row: usize, col: usize) -> f64 {
        self.plane(channel)[row * self.side + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `1 × 3 × side × side` network input.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec([1, CHANNELS, self.side, self.side], self.data.iter().map(|&v| T::of(v)).collect())
            .expect("tile length matches its shape")
    }

    /// Tile from sample `b` of a network output, clamped into `[0, 1]`.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, b: usize) -> Result<Self, CodecError> {
        let [_, c, h, w] = t.shape();
        if c != CHANNELS || h != w {
            return Err(CodecError::MetadataMismatch(format!("tensor shape {:?}", t.shape())));
        }
        Self::new(h, t.sample(b).iter().map(|v| v.as_f64().clamp(0.0, 1.0)).collect())
    }
}

/// 8-bit counterpart of [`ImageTile`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedTile {
    side: usize,
    data: Vec<u8>,
}

impl QuantizedTile {
    pub fn new(side: usize, data: Vec<u8>) -> Result<Self, CodecError> {
        if side != HR_SIDE && side != LR_SIDE {
            return Err(CodecError::BadSide(side));
        }
        if data.len() != CHANNELS * side * side {
            return Err(CodecError::MetadataMismatch(format!("{} bytes for side {side}", data.len())));
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Plane-ordered bytes (all R, then all G, then all B).
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Pixel-interleaved `RGBRGB…` bytes.
    pub fn interleaved(&self) -> Vec<u8> {
        let n = self.side * self.side;
        (0..n).flat_map(|i| (0..CHANNELS).map(move |c| (c, i))).map(|(c, i)| self.data[c * n + i]).collect()
    }

    pub fn from_interleaved(side: usize, rgb: &[u8]) -> Result<Self, CodecError> {
        let n = side * side;
        if rgb.len() != CHANNELS * n {
            return Err(CodecError::MetadataMismatch(format!("{} bytes for side {side}", rgb.len())));
        }
        let mut data = vec![0u8; CHANNELS * n];
        for i in 0..n {
            for c in 0..CHANNELS {
                data[c * n + i] = rgb[i * CHANNELS + c];
            }
        }
        Self::new(side, data)
    }
}

/// `q = round(255·x)` with halves rounded up.
pub fn quantize(tile: &ImageTile) -> Result<QuantizedTile, CodecError> {
    let data = tile
        .data
        .iter()
        .map(|&x| {
            if !(0.0..=1.0).contains(&x) {
                return Err(CodecError::OutOfRange(x));
            }
            Ok((255.0 * x + 0.5).floor() as u8)
        })
        .collect::<Result<_, _>>()?;
    QuantizedTile::new(tile.side, data)
}

pub fn quantize_value(x: f64) -> Result<u8, CodecError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(CodecError::OutOfRange(x));
    }
    Ok((255.0 * x + 0.5).floor() as u8)
}

pub fn dequantize(tile: &QuantizedTile) -> ImageTile {
    ImageTile { side: tile.side, data: tile.data.iter().map(|&q| q as f64 / 255.0).collect() }
}

/// Everything needed to invert one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct TileMetadata {
    pub record_id: String,
    pub tile_index: usize,
    pub dt: f64,
    /// Real (unpadded) samples held by this tile.
    pub true_sample_count: usize,
    pub norms: [ChannelNorm; 3],
}

impl TileMetadata {
    /// Metadata describing the LR tile derived from this HR tile.
    pub fn decimated(&self) -> TileMetadata {
        TileMetadata {
            dt: self.dt * DECIMATION as f64,
            true_sample_count: self.true_sample_count.div_ceil(DECIMATION),
            ..self.clone()
        }
    }
}

/// Number of HR tiles needed for `n` samples.
pub fn tile_count(n: usize) -> usize {
    n.div_ceil(HR_TILE_SAMPLES)
}

/// Encodes with freshly computed per-record normalization.
pub fn encode_record(record: &GroundMotionRecord) -> Result<(Vec<ImageTile>, Vec<TileMetadata>), CodecError> {
    if record.is_empty() {
        return Err(CodecError::EmptyRecord);
    }
    let mut norms = [ChannelNorm { min: 0.0, max: 0.0 }; 3];
    for c in Channel::ALL {
        norms[c.index()] = normalize_channel(record.channel(c))?.1;
    }
    encode_with_norms(record, &norms)
}

/// Encodes using the given normalization (e.g. that of a reference record).
/// Values falling outside the normalized range are clamped into `[0, 1]`.
pub fn encode_with_norms(
    record: &GroundMotionRecord,
    norms: &[ChannelNorm; 3],
) -> Result<(Vec<ImageTile>, Vec<TileMetadata>), CodecError> {
    let n = record.len();
    if n == 0 {
        return Err(CodecError::EmptyRecord);
    }
    for c in Channel::ALL {
        if let Some(i) = record.channel(c).iter().position(|v| !v.is_finite()) {
            return Err(CodecError::NonFiniteInput(i));
        }
    }
    let mut tiles = Vec::with_capacity(tile_count(n));
    let mut metas = Vec::with_capacity(tile_count(n));
    for k in 0..tile_count(n) {
        let start = k * HR_TILE_SAMPLES;
        let count = (n - start).min(HR_TILE_SAMPLES);
        let mut data = vec![0.0; CHANNELS * HR_TILE_SAMPLES];
        for c in Channel::ALL {
            let norm = norms[c.index()];
            let src = &record.channel(c)[start..start + count];
            let dst = &mut data[c.index() * HR_TILE_SAMPLES..][..count];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = norm.normalize(v).clamp(0.0, 1.0);
            }
        }
        tiles.push(ImageTile { side: HR_SIDE, data });
        metas.push(TileMetadata {
            record_id: record.record_id.clone(),
            tile_index: k,
            dt: record.dt,
            true_sample_count: count,
            norms: *norms,
        });
    }
    Ok((tiles, metas))
}

/// Stride-64 time decimation of an HR tile into a 17×17 tile.
pub fn decimate_tile(hr: &ImageTile) -> Result<ImageTile, CodecError> {
    if hr.side != HR_SIDE {
        return Err(CodecError::BadSide(hr.side));
    }
    let mut data = Vec::with_capacity(CHANNELS * LR_TILE_SAMPLES);
    for c in Channel::ALL {
        let plane = hr.plane(c);
        data.extend((0..LR_TILE_SAMPLES).map(|k| plane[DECIMATION * k]));
    }
    Ok(ImageTile { side: LR_SIDE, data })
}

/// Inverse of [`encode_record`] for HR tiles; also decodes LR tiles when
/// given their [`TileMetadata::decimated`] metadata.
pub fn decode_tiles(tiles: &[ImageTile], metas: &[TileMetadata]) -> Result<GroundMotionRecord, CodecError> {
    let mismatch = |s: String| Err(CodecError::MetadataMismatch(s));
    if tiles.is_empty() {
        return Err(CodecError::EmptyRecord);
    }
    if tiles.len() != metas.len() {
        return mismatch(format!("{} tiles but {} metadata entries", tiles.len(), metas.len()));
    }
    let first = &metas[0];
    for (k, (tile, meta)) in tiles.iter().zip(metas).enumerate() {
        if meta.tile_index != k {
            return mismatch(format!("tile {k} carries index {}", meta.tile_index));
        }
        if meta.record_id != first.record_id || meta.dt != first.dt || meta.norms != first.norms {
            return mismatch(format!("tile {k} belongs to a different record"));
        }
        if tile.side != tiles[0].side {
            return mismatch(format!("tile {k} has side {}", tile.side));
        }
        if meta.true_sample_count == 0 || meta.true_sample_count > tile.samples_per_channel() {
            return mismatch(format!("tile {k} true count {}", meta.true_sample_count));
        }
        if k + 1 < tiles.len() && meta.true_sample_count != tile.samples_per_channel() {
            return mismatch(format!("non-final tile {k} is partially filled"));
        }
    }
    let total: usize = metas.iter().map(|m| m.true_sample_count).sum();
    let mut channels: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(total));
    for (tile, meta) in tiles.iter().zip(metas) {
        for c in Channel::ALL {
            let norm = first.norms[c.index()];
            channels[c.index()].extend(tile.plane(c)[..meta.true_sample_count].iter().map(|&x| norm.denormalize(x)));
        }
    }
    let [acceleration, velocity, displacement] = channels;
    Ok(GroundMotionRecord {
        record_id: first.record_id.clone(),
        dt: first.dt,
        acceleration,
        velocity,
        displacement,
        units: Default::default(),
    })
}

/// Per-record sidecar: `key = value` lines in fixed order, reals at 17
/// significant digits.
#[derive(Clone, Debug, PartialEq)]
pub struct Sidecar {
    pub record_id: String,
    pub dt: f64,
    pub true_sample_counts: Vec<usize>,
    pub norms: [ChannelNorm; 3],
}

impl Sidecar {
    pub fn from_metadata(metas: &[TileMetadata]) -> Result<Self, CodecError> {
        let first = metas.first().ok_or(CodecError::EmptyRecord)?;
        Ok(Self {
            record_id: first.record_id.clone(),
            dt: first.dt,
            true_sample_counts: metas.iter().map(|m| m.true_sample_count).collect(),
            norms: first.norms,
        })
    }

    pub fn to_metadata(&self) -> Vec<TileMetadata> {
        self.true_sample_counts
            .iter()
            .enumerate()
            .map(|(k, &count)| TileMetadata {
                record_id: self.record_id.clone(),
                tile_index: k,
                dt: self.dt,
                true_sample_count: count,
                norms: self.norms,
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "record_id = {}\ndt = {:.16e}\nn_tiles = {}\n",
            self.record_id,
            self.dt,
            self.true_sample_counts.len()
        );
        for (k, n) in self.true_sample_counts.iter().enumerate() {
            out.push_str(&format!("true_sample_count[{k}] = {n}\n"));
        }
        for c in Channel::ALL {
            let n = self.norms[c.index()];
            out.push_str(&format!("{}_min = {:.16e}\n{}_max = {:.16e}\n", c.name(), n.min, c.name(), n.max));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CodecError> {
        let bad = |s: String| CodecError::BadSidecar(s);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| bad(format!("line without `=`: {l}")))
        });
        let mut expect = |key: &str| -> Result<String, CodecError> {
            match lines.next() {
                Some(Ok((k, v))) if k == key => Ok(v),
                Some(Ok((k, _))) => Err(bad(format!("expected key {key}, found {k}"))),
                Some(Err(e)) => Err(e),
                None => Err(bad(format!("missing key {key}"))),
            }
        };
        let real = |s: String, key: &str| s.parse::<f64>().map_err(|_| bad(format!("{key} is not a number")));
        let record_id = expect("record_id")?;
        let dt = real(expect("dt")?, "dt")?;
        let n_tiles: usize = expect("n_tiles")?.parse().map_err(|_| bad("n_tiles".into()))?;
        let mut true_sample_counts = Vec::with_capacity(n_tiles);
        for k in 0..n_tiles {
            let key = format!("true_sample_count[{k}]");
            true_sample_counts.push(expect(&key)?.parse().map_err(|_| bad(key.clone()))?);
        }
        let mut norms = [ChannelNorm { min: 0.0, max: 0.0 }; 3];
        for c in Channel::ALL {
            let kmin = format!("{}_min", c.name());
            let kmax = format!("{}_max", c.name());
            let min = real(expect(&kmin)?, &kmin)?;
            let max = real(expect(&kmax)?, &kmax)?;
            norms[c.index()] = ChannelNorm { min, max };
        }
        Ok(Self { record_id, dt, true_sample_counts, norms })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TileKind {
    Hr,
    Lr,
    /// Generator output.
    Gen,
}

impl TileKind {
    pub fn suffix(self) -> &'static str {
        match self {
            TileKind::Hr => "hr",
            TileKind::Lr => "lr",
            TileKind::Gen => "gen",
        }
    }
}

/// `<record_id>_t<k>_<hr|lr|gen>.png`
pub fn tile_file_name(record_id: &str, k: usize, kind: TileKind) -> String {
    format!("{record_id}_t{k}_{}.png", kind.suffix())
}

pub fn write_tile_png(path: &Path, tile: &QuantizedTile) -> Result<(), CodecError> {
    let side = tile.side as u32;
    let img = image::RgbImage::from_raw(side, side, tile.interleaved())
        .ok_or_else(|| CodecError::Image("buffer size".into()))?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| CodecError::Image(e.to_string()))
}

pub fn read_tile_png(path: &Path) -> Result<QuantizedTile, CodecError> {
    let img = image::open(path).map_err(|e| CodecError::Image(format!("{}: {e}", path.display())))?.to_rgb8();
    if img.width() != img.height() {
        return Err(CodecError::BadSide(img.width() as usize));
    }
    QuantizedTile::from_interleaved(img.width() as usize, img.as_raw())
}
