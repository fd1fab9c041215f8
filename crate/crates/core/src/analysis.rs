//! Reconstruction analysis: linear-interpolation baseline, time-domain
//! error, Fourier amplitude spectra, and the per-record comparison report.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::codec::{self, CodecError, DECIMATION};
use crate::gm_io::{Channel, GroundMotionRecord};
use crate::metrics::{self, ImageScores, MetricError, MetricImage, SsimParams};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Piecewise-linear upsampling: `out[factor·k] == lr[k]`, linear in the
/// index between anchors, held at the last value past the final anchor.
pub fn linear_interp_upsample(lr: &[f64], factor: usize, target_len: usize) -> Result<Vec<f64>, AnalysisError> {
    if lr.len() < 2 {
        return Err(AnalysisError::TooFewSamples(lr.len()));
    }
    let last = lr.len() - 1;
    Ok((0..target_len)
        .map(|i| {
            let k = i / factor;
            if k >= last {
                return lr[last];
            }
            let frac = (i % factor) as f64 / factor as f64;
            lr[k] + frac * (lr[k + 1] - lr[k])
        })
        .collect())
}

/// Mean squared difference of two equal-length sequences.
pub fn time_domain_mse(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AnalysisError::TooFewSamples(0));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// One-sided amplitude spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumResult {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

/// `dt·|DFT|` at `k/(n·dt)` Hz for `k = 0..=n/2`, no taper.
pub fn fourier_amplitude_spectrum(signal: &[f64], dt: f64) -> Result<SpectrumResult, AnalysisError> {
    let n = signal.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples(n));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(AnalysisError::InvalidTimeStep(dt));
    }
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    Ok(SpectrumResult {
        frequencies: (0..bins).map(|k| k as f64 / (n as f64 * dt)).collect(),
        amplitudes: buf[..bins].iter().map(|c| dt * c.norm()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelComparison {
    pub channel: Channel,
    pub mse_srgan: f64,
    pub mse_interp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileComparison {
    pub tile: usize,
    pub srgan: ImageScores,
    pub interp: ImageScores,
    /// SSIM with sliding 8×8 windows.
    pub srgan_ssim_sliding: f64,
    pub interp_ssim_sliding: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpectra {
    pub channel: Channel,
    pub real: SpectrumResult,
    pub generated: SpectrumResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub record_id: String,
    /// Displacement, velocity, acceleration.
    pub channels: Vec<ChannelComparison>,
    pub tiles: Vec<TileComparison>,
    pub spectra: Vec<ChannelSpectra>,
    /// The interpolation baseline on the HR time grid.
    pub interpolated: GroundMotionRecord,
}

impl ComparisonReport {
    pub fn channel(&self, c: Channel) -> &ChannelComparison {
        self.channels.iter().find(|x| x.channel == c).expect("all channels present")
    }

    pub fn spectrum(&self, c: Channel) -> &ChannelSpectra {
        self.spectra.iter().find(|x| x.channel == c).expect("all channels present")
    }
}

pub const REPORT_CHANNEL_ORDER: [Channel; 3] = [Channel::Displacement, Channel::Velocity, Channel::Acceleration];
pub const SLIDING_WINDOW: usize = 8;

/// Interpolation baseline of every channel of an LR record onto `target_len`
/// HR samples.
pub fn interpolate_record(
    lr: &GroundMotionRecord,
    target_len: usize,
    hr_dt: f64,
) -> Result<GroundMotionRecord, AnalysisError> {
    let up = |c| linear_interp_upsample(lr.channel(c), DECIMATION, target_len);
    Ok(GroundMotionRecord {
        record_id: lr.record_id.clone(),
        dt: hr_dt,
        acceleration: up(Channel::Acceleration)?,
        velocity: up(Channel::Velocity)?,
        displacement: up(Channel::Displacement)?,
        units: lr.units.clone(),
    })
}

/// Compares a generated HR record and the interpolation of `lr_record`
/// against the real record.
pub fn build_comparison_report(
    record: &GroundMotionRecord,
    generated: &GroundMotionRecord,
    lr_record: &GroundMotionRecord,
) -> Result<ComparisonReport, AnalysisError> {
    if generated.len() != record.len() {
        return Err(AnalysisError::LengthMismatch(record.len(), generated.len()));
    }
    let interpolated = interpolate_record(lr_record, record.len(), record.dt)?;

    let channels = REPORT_CHANNEL_ORDER
        .iter()
        .map(|&c| {
            Ok(ChannelComparison {
                channel: c,
                mse_srgan: time_domain_mse(record.channel(c), generated.channel(c))?,
                mse_interp: time_domain_mse(record.channel(c), interpolated.channel(c))?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    let (real_tiles, metas) = codec::encode_record(record)?;
    let norms = metas[0].norms;
    let (gen_tiles, _) = codec::encode_with_norms(generated, &norms)?;
    let (interp_tiles, _) = codec::encode_with_norms(&interpolated, &norms)?;
    let full = SsimParams::default();
    let sliding = SsimParams::sliding(SLIDING_WINDOW);
    let mut tiles = Vec::with_capacity(real_tiles.len());
    for (k, ((r, g), i)) in real_tiles.iter().zip(&gen_tiles).zip(&interp_tiles).enumerate() {
        let r = MetricImage::from(&codec::quantize(r)?);
        let g = MetricImage::from(&codec::quantize(g)?);
        let i = MetricImage::from(&codec::quantize(i)?);
        tiles.push(TileComparison {
            tile: k,
            srgan: metrics::score(&r, &g, &full)?,
            interp: metrics::score(&r, &i, &full)?,
            srgan_ssim_sliding: metrics::ssim(&r, &g, &sliding)?,
            interp_ssim_sliding: metrics::ssim(&r, &i, &sliding)?,
        });
    }

    let spectra = Channel::ALL
        .iter()
        .map(|&c| {
            Ok(ChannelSpectra {
                channel: c,
                real: fourier_amplitude_spectrum(record.channel(c), record.dt)?,
                generated: fourier_amplitude_spectrum(generated.channel(c), generated.dt)?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    Ok(ComparisonReport { record_id: record.record_id.clone(), channels, tiles, spectra, interpolated })
}
