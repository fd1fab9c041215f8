//! Full-reference image metrics on 8-bit images: MSE, PSNR and SSIM.

use crate::codec::QuantizedTile;

pub const MAX_VALUE: f64 = 255.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("window {window} does not fit a {height}x{width} image")]
    WindowTooLarge { window: usize, height: usize, width: usize },
    #[error("buffer of {found} bytes for a {height}x{width}x{channels} image")]
    BadBuffer { height: usize, width: usize, channels: usize, found: usize },
}

/// `M × N × O` image of 8-bit samples, pixel-interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl MetricImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self, MetricError> {
        if data.len() != height * width * channels {
            return Err(MetricError::BadBuffer { height, width, channels, found: data.len() });
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

impl From<&QuantizedTile> for MetricImage {
    fn from(t: &QuantizedTile) -> Self {
        Self { height: t.side(), width: t.side(), channels: 3, data: t.interleaved() }
    }
}

fn same_shape(a: &MetricImage, b: &MetricImage) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse_image(a: &MetricImage, b: &MetricImage) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let sum: u64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.data.len() as f64)
}

/// Peak signal-to-noise ratio in dB; identical images give `+∞`.
pub fn psnr(a: &MetricImage, b: &MetricImage) -> Result<f64, MetricError> {
    let mse = mse_image(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (MAX_VALUE * MAX_VALUE / mse).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsimWindow {
    /// One set of statistics per channel over the whole image.
    Full,
    /// Square windows of the given side at every position (stride 1).
    Sliding(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub window: SsimWindow,
}

impl Default for SsimParams {
    fn default() -> Self {
        let c1 = (0.01 * MAX_VALUE).powi(2);
        let c2 = (0.03 * MAX_VALUE).powi(2);
        Self { c1, c2, c3: c2 / 2.0, window: SsimWindow::Full }
    }
}

impl SsimParams {
    pub fn sliding(side: usize) -> Self {
        Self { window: SsimWindow::Sliding(side), ..Self::default() }
    }
}

/// Luminance × contrast × structure for one window of one channel, with
/// population statistics.
#[allow(clippy::too_many_arguments)]
fn ssim_window(
    a: &MetricImage,
    b: &MetricImage,
    c: usize,
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
    p: &SsimParams,
) -> f64 {
    let n = (h * w) as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            sa += a.get(y, x, c) as f64;
            sb += b.get(y, x, c) as f64;
        }
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let da = a.get(y, x, c) as f64 - ma;
            let db = b.get(y, x, c) as f64 - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
    }
    let (va, vb, cov) = (va / n, vb / n, cov / n);
    let (sda, sdb) = (va.sqrt(), vb.sqrt());
    let luminance = (2.0 * ma * mb + p.c1) / (ma * ma + mb * mb + p.c1);
    let contrast = (2.0 * sda * sdb + p.c2) / (va + vb + p.c2);
    let structure = (cov + p.c3) / (sda * sdb + p.c3);
    luminance * contrast * structure
}

/// Structural similarity averaged over windows, then over channels.
pub fn ssim(a: &MetricImage, b: &MetricImage, p: &SsimParams) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let (h, w, channels) = a.shape();
    let mut total = 0.0;
    for c in 0..channels {
        total += match p.window {
            SsimWindow::Full => ssim_window(a, b, c, 0, 0, h, w, p),
            SsimWindow::Sliding(k) => {
                if k == 0 || k > h || k > w {
                    return Err(MetricError::WindowTooLarge { window: k, height: h, width: w });
                }
                let mut acc = 0.0;
                let mut count = 0usize;
                for y in 0..=h - k {
                    for x in 0..=w - k {
                        acc += ssim_window(a, b, c, y, x, k, k, p);
                        count += 1;
                    }
                }
                acc / count as f64
            }
        };
    }
    Ok(total / channels as f64)
}

/// SSIM / PSNR / MSE of one image pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageScores {
    pub ssim: f64,
    pub psnr: f64,
    pub mse: f64,
}

pub fn score(a: &MetricImage, b: &MetricImage, p: &SsimParams) -> Result<ImageScores, MetricError> {
    Ok(ImageScores { ssim: ssim(a, b, p)?, psnr: psnr(a, b)?, mse: mse_image(a, b)? })
}

/// Renders a value for CSV output; `+∞` becomes `inf`.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}
