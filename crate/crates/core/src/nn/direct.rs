//! Register-blocked direct convolution (stride 1) for layers with only a
//! few output channels, where im2col + GEMM degenerates into a
//! memory-bound matrix-vector product.
//!
//! Outputs are produced in chunks of `LANES` columns for `GROUP` output
//! channels at once, accumulating over every input channel and kernel tap
//! in local arrays that the compiler keeps in vector registers.

use super::scalar::Scalar;

const LANES: usize = 8;
const GROUP: usize = 4;

/// Zero-padded planes with `LANES` spare columns so every chunk load stays
/// in bounds.
struct Padded<T> {
    data: Vec<T>,
    rows: usize,
    stride: usize,
}

impl<T: Scalar> Padded<T> {
    /// `planes` planes of `h × w`, padded by `p` on every side, plus
    /// `extra_planes` all-zero planes.
    fn new(x: &[T], planes: usize, extra_planes: usize, h: usize, w: usize, p: usize) -> Self {
        let rows = h + 2 * p;
        let stride = w + 2 * p + LANES;
        let mut data = vec![T::zero(); (planes + extra_planes) * rows * stride];
        for c in 0..planes {
            for y in 0..h {
                let dst = ((c * rows) + y + p) * stride + p;
                data[dst..dst + w].copy_from_slice(&x[(c * h + y) * w..][..w]);
            }
        }
        Self { data, rows, stride }
    }

    #[inline(always)]
    fn chunk(&self, plane: usize, row: usize, col: usize) -> &[T; LANES] {
        let at = (plane * self.rows + row) * self.stride + col;
        self.data[at..at + LANES].try_into().expect("chunk length")
    }
}

/// Weights regrouped as `[group][in][ki][kj][GROUP]`, zero-filled past the
/// last output channel. `weight(o, i, ki, kj)` supplies the values.
fn grouped<T: Scalar>(cout: usize, cin: usize, k: usize, weight: impl Fn(usize, usize, usize, usize) -> T) -> Vec<T> {
    let groups = cout.div_ceil(GROUP);
    let mut out = vec![T::zero(); groups * cin * k * k * GROUP];
    for o in 0..cout {
        for i in 0..cin {
            for ki in 0..k {
                for kj in 0..k {
                    out[((((o / GROUP) * cin + i) * k + ki) * k + kj) * GROUP + o % GROUP] = weight(o, i, ki, kj);
                }
            }
        }
    }
    out
}

type Block<T> = [[T; LANES]; GROUP];

/// One output block: `GROUP` channels × `LANES` columns starting at
/// (`oy`, `x0`), summed over every input channel and kernel tap.
#[inline(always)]
fn block_body<T: Scalar>(xp: &Padded<T>, wgroup: &[T], cin: usize, k: usize, oy: usize, x0: usize) -> Block<T> {
    let mut acc = [[T::zero(); LANES]; GROUP];
    for i in 0..cin {
        for ki in 0..k {
            for kj in 0..k {
                let v = xp.chunk(i, oy + ki, x0 + kj);
                let t = (i * k + ki) * k + kj;
                let wv: &[T; GROUP] = wgroup[t * GROUP..t * GROUP + GROUP].try_into().expect("group");
                for g in 0..GROUP {
                    for l in 0..LANES {
                        acc[g][l] += wv[g] * v[l];
                    }
                }
            }
        }
    }
    acc
}

// Kept out of line: inlined into the surrounding loops, the block is no
// longer vectorized.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[inline(never)]
unsafe fn block_avx2<T: Scalar>(xp: &Padded<T>, wgroup: &[T], cin: usize, k: usize, oy: usize, x0: usize) -> Block<T> {
    block_body(xp, wgroup, cin, k, oy, x0)
}

#[inline(never)]
fn block_portable<T: Scalar>(xp: &Padded<T>, wgroup: &[T], cin: usize, k: usize, oy: usize, x0: usize) -> Block<T> {
    block_body(xp, wgroup, cin, k, oy, x0)
}

/// `out[o][y][x] += Σ_{i,ki,kj} w[o,i,ki,kj] · xp[i][y+ki][x+kj]`.
#[allow(clippy::too_many_arguments)]
fn correlate<T: Scalar>(
    xp: &Padded<T>,
    cin: usize,
    wg: &[T],
    cout: usize,
    k: usize,
    ho: usize,
    wo: usize,
    out: &mut [T],
) {
    #[cfg(target_arch = "x86_64")]
    let avx2 = std::arch::is_x86_feature_detected!("avx2");
    #[cfg(not(target_arch = "x86_64"))]
    let avx2 = false;
    let chunks = wo.div_ceil(LANES);
    for og in 0..cout.div_ceil(GROUP) {
        let n = GROUP.min(cout - og * GROUP);
        let wgroup = &wg[og * cin * k * k * GROUP..][..cin * k * k * GROUP];
        for oy in 0..ho {
            for ch in 0..chunks {
                let x0 = ch * LANES;
                let acc = if avx2 {
                    #[cfg(target_arch = "x86_64")]
                    // SAFETY: the required CPU feature was detected at runtime.
                    unsafe {
                        block_avx2(xp, wgroup, cin, k, oy, x0)
                    }
                    #[cfg(not(target_arch = "x86_64"))]
                    unreachable!()
                } else {
                    block_portable(xp, wgroup, cin, k, oy, x0)
                };
                let width = LANES.min(wo - x0);
                for (g, a) in acc.iter().enumerate().take(n) {
                    let o = &mut out[((og * GROUP + g) * ho + oy) * wo + x0..][..width];
                    for (dst, &v) in o.iter_mut().zip(a) {
                        *dst += v;
                    }
                }
            }
        }
    }
}

/// `dw[o,i,ki,kj] += Σ_{y,x} g[o][y][x] · xp[i][y+ki][x+kj]`; `gp` holds the
/// output gradient padded to whole chunks and whole groups.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn weight_grad_body<T: Scalar>(
    xp: &Padded<T>,
    gp: &Padded<T>,
    cin: usize,
    cout: usize,
    k: usize,
    ho: usize,
    wo: usize,
    dw: &mut [T],
) {
    let chunks = wo.div_ceil(LANES);
    for og in 0..cout.div_ceil(GROUP) {
        let n = GROUP.min(cout - og * GROUP);
        for i in 0..cin {
            for ki in 0..k {
                for kj in 0..k {
                    let mut acc = [[T::zero(); LANES]; GROUP];
                    for oy in 0..ho {
                        for ch in 0..chunks {
                            let x0 = ch * LANES;
                            let v = xp.chunk(i, oy + ki, x0 + kj);
                            for (g, a) in acc.iter_mut().enumerate() {
                                let gv = gp.chunk(og * GROUP + g, oy, x0);
                                for l in 0..LANES {
                                    a[l] += gv[l] * v[l];
                                }
                            }
                        }
                    }
                    for (g, a) in acc.iter().enumerate().take(n) {
                        dw[(((og * GROUP + g) * cin + i) * k + ki) * k + kj] += a.iter().copied().sum::<T>();
                    }
                }
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn weight_grad_avx2<T: Scalar>(
    xp: &Padded<T>,
    gp: &Padded<T>,
    cin: usize,
    cout: usize,
    k: usize,
    ho: usize,
    wo: usize,
    dw: &mut [T],
) {
    weight_grad_body(xp, gp, cin, cout, k, ho, wo, dw)
}

/// Adds the convolution of one sample `x` (`cin × h × w`) to `y`
/// (`cout × h' × w'`, usually pre-filled with the bias).
#[allow(clippy::too_many_arguments)]
pub(super) fn forward<T: Scalar>(
    x: &[T],
    weight: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    p: usize,
    h: usize,
    w: usize,
    y: &mut [T],
) {
    let (ho, wo) = (h + 2 * p + 1 - k, w + 2 * p + 1 - k);
    let xp = Padded::new(x, cin, 0, h, w, p);
    let wg = grouped(cout, cin, k, |o, i, ki, kj| weight[((o * cin + i) * k + ki) * k + kj]);
    correlate(&xp, cin, &wg, cout, k, ho, wo, y);
}

/// Input gradient (added to `dx`) and, if `dw` is given, weight gradient
/// (added to `dw`) for one sample.
#[allow(clippy::too_many_arguments)]
pub(super) fn backward<T: Scalar>(
    x: &[T],
    g: &[T],
    weight: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    p: usize,
    h: usize,
    w: usize,
    dx: &mut [T],
    dw: Option<&mut [T]>,
) {
    let (ho, wo) = (h + 2 * p + 1 - k, w + 2 * p + 1 - k);
    // dx is the correlation of g with the flipped, transposed kernel
    let gp = Padded::new(g, cout, 0, ho, wo, k - 1 - p);
    let wt = grouped(cin, cout, k, |i, o, ki, kj| weight[((o * cin + i) * k + (k - 1 - ki)) * k + (k - 1 - kj)]);
    correlate(&gp, cout, &wt, cin, k, h, w, dx);

    if let Some(dw) = dw {
        let xp = Padded::new(x, cin, 0, h, w, p);
        let gpad = Padded::new(g, cout, cout.next_multiple_of(GROUP) - cout, ho, wo, 0);
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at runtime.
            unsafe { weight_grad_avx2(&xp, &gpad, cin, cout, k, ho, wo, dw) };
            return;
        }
        weight_grad_body(&xp, &gpad, cin, cout, k, ho, wo, dw);
    }
}
