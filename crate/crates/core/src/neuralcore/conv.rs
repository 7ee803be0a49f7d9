//! Direct 3x3, stride-1 convolution lowered to a matrix product (im2col).

use super::gemm::gemm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Padding policy of a 3x3 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvMode {
    /// No padding; each spatial extent shrinks by 2.
    Valid,
    /// One pixel of zero padding per side; spatial extent preserved.
    Same,
}

impl ConvMode {
    pub fn padding(self) -> usize {
        match self {
            ConvMode::Valid => 0,
            ConvMode::Same => 1,
        }
    }

    /// Output extent for an input extent, or `None` if the window does not fit.
    pub fn output_extent(self, extent: usize) -> Option<usize> {
        (extent + 2 * self.padding()).checked_sub(2).filter(|&e| e >= 1)
    }

    pub fn name(self) -> &'static str {
        match self {
            ConvMode::Valid => "valid",
            ConvMode::Same => "same",
        }
    }
}

impl std::str::FromStr for ConvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "valid" => Ok(ConvMode::Valid),
            "same" => Ok(ConvMode::Same),
            other => Err(Error::invalid(format!("unknown conv mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for ConvMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) const K: usize = 3;
pub(crate) const KK: usize = K * K;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub channels: usize,
    pub filters: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad: usize,
}

pub(crate) fn geometry(op: &'static str, input: &Tensor, kernels: &Tensor, mode: ConvMode) -> Result<Geometry> {
    let (batch, channels, h, w) = input.dims4(op)?;
    let (filters, kc, kh, kw) = kernels.dims4(op)?;
    if kh != K || kw != K {
        return Err(Error::shape(op, format!("kernels must be 3x3, got {kh}x{kw}")));
    }
    if kc != channels {
        return Err(Error::shape(
            op,
            format!("input has {channels} channels, kernels expect {kc}"),
        ));
    }
    let (oh, ow) = match (mode.output_extent(h), mode.output_extent(w)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                op,
                format!("{h}x{w} input too small for a {mode} 3x3 convolution"),
            ))
        }
    };
    Ok(Geometry {
        batch,
        channels,
        filters,
        h,
        w,
        oh,
        ow,
        pad: mode.padding(),
    })
}

/// Unfolds one `C x H x W` item into rows `(c, ki, kj)` of a column matrix.
/// Row `r` of this item's block starts at `r * stride + offset`, so items of a
/// batch can share one `(C*9) x (B*OH*OW)` matrix.
pub(crate) fn im2col<T: Copy + Default>(g: &Geometry, x: &[T], col: &mut [T], stride: usize, offset: usize) {
    let plane = g.oh * g.ow;
    for c in 0..g.channels {
        let xc = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..K {
            for kj in 0..K {
                let row = &mut col[((c * KK) + ki * K + kj) * stride + offset..][..plane];
                let (lo, hi) = valid_span(kj, g.pad, g.w, g.ow);
                for i in 0..g.oh {
                    let out = &mut row[i * g.ow..(i + 1) * g.ow];
                    let yi = (i + ki) as isize - g.pad as isize;
                    if yi < 0 || yi >= g.h as isize {
                        out.fill(T::default());
                        continue;
                    }
                    let src = &xc[yi as usize * g.w..(yi as usize + 1) * g.w];
                    out[..lo].fill(T::default());
                    out[hi..].fill(T::default());
                    let shift = lo + kj - g.pad;
                    out[lo..hi].copy_from_slice(&src[shift..shift + hi - lo]);
                }
            }
        }
    }
}

/// Output columns `lo..hi` whose tap at kernel column `kj` lands inside the input.
fn valid_span(kj: usize, pad: usize, w: usize, ow: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kj).min(ow);
    let hi = (w + pad).saturating_sub(kj).min(ow).max(lo);
    (lo, hi)
}

/// Folds one item's block of a column-matrix gradient back onto its
/// `C x H x W` input gradient, accumulating.
fn col2im(g: &Geometry, col: &[f64], stride: usize, offset: usize, dx: &mut [f64]) {
    let plane = g.oh * g.ow;
    for c in 0..g.channels {
        let dxc = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..K {
            for kj in 0..K {
                let row = &col[((c * KK) + ki * K + kj) * stride + offset..][..plane];
                let (lo, hi) = valid_span(kj, g.pad, g.w, g.ow);
                let shift = lo + kj - g.pad;
                for i in 0..g.oh {
                    let yi = (i + ki) as isize - g.pad as isize;
                    if yi < 0 || yi >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dxc[yi as usize * g.w + shift..][..hi - lo];
                    for (d, v) in dst.iter_mut().zip(&row[i * g.ow + lo..i * g.ow + hi]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Adds `k * shifted input` for one 3x3 tap of a single-channel plane.
#[inline]
pub(crate) fn accumulate_tap<T>(g: &Geometry, x: &[T], out: &mut [T], ki: usize, kj: usize, k: T)
where
    T: Copy + std::ops::Mul<Output = T> + std::ops::AddAssign,
{
    let (lo, hi) = valid_span(kj, g.pad, g.w, g.ow);
    let shift = lo + kj - g.pad;
    for i in 0..g.oh {
        let yi = (i + ki) as isize - g.pad as isize;
        if yi < 0 || yi >= g.h as isize {
            continue;
        }
        let src = &x[yi as usize * g.w + shift..][..hi - lo];
        let dst = &mut out[i * g.ow + lo..i * g.ow + hi];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += k * s;
        }
    }
}

/// `output[b,f,i,j] = bias[f] + sum over the 3x3xC window of input * kernel`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor, mode: ConvMode) -> Result<Tensor> {
    let g = geometry("conv2d", input, kernels, mode)?;
    if bias.len() != g.filters {
        return Err(Error::shape(
            "conv2d",
            format!("bias has {} entries for {} filters", bias.len(), g.filters),
        ));
    }
    let plane = g.oh * g.ow;
    let mut out = Tensor::zeros(&[g.batch, g.filters, g.oh, g.ow]);
    if g.channels == 1 {
        // A 9-deep inner product is too thin for a matrix product to pay off.
        for b in 0..g.batch {
            let x = input.item(b);
            let ob = out.item_mut(b);
            for f in 0..g.filters {
                let o = &mut ob[f * plane..(f + 1) * plane];
                o.fill(bias.data()[f]);
                let k = &kernels.data()[f * KK..(f + 1) * KK];
                for ki in 0..K {
                    for kj in 0..K {
                        accumulate_tap(&g, x, o, ki, kj, k[ki * K + kj]);
                    }
                }
            }
        }
        return Ok(out);
    }
    let ck = g.channels * KK;
    let mut col = vec![0.0; ck * plane];
    for b in 0..g.batch {
        im2col(&g, input.item(b), &mut col, plane, 0);
        let ob = out.item_mut(b);
        for (f, &bf) in bias.data().iter().enumerate() {
            ob[f * plane..(f + 1) * plane].fill(bf);
        }
        gemm(g.filters, ck, plane, 1.0, kernels.data(), false, &col, false, 1.0, ob);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// Analytic gradients of [`conv2d`] with respect to its input, kernels and bias.
pub fn conv2d_grad(input: &Tensor, kernels: &Tensor, upstream: &Tensor, mode: ConvMode) -> Result<ConvGrads> {
    conv2d_grad_impl(input, kernels, upstream, mode, true)
}

/// As [`conv2d_grad`]; the input gradient is left zero unless `with_input`.
pub(crate) fn conv2d_grad_impl(
    input: &Tensor,
    kernels: &Tensor,
    upstream: &Tensor,
    mode: ConvMode,
    with_input: bool,
) -> Result<ConvGrads> {
    let g = geometry("conv2d_grad", input, kernels, mode)?;
    if upstream.shape() != [g.batch, g.filters, g.oh, g.ow] {
        return Err(Error::shape(
            "conv2d_grad",
            format!(
                "upstream {:?} does not match output {:?}",
                upstream.shape(),
                [g.batch, g.filters, g.oh, g.ow]
            ),
        ));
    }
    let plane = g.oh * g.ow;
    let ck = g.channels * KK;
    let mut col = vec![0.0; ck * plane];
    let mut dcol = vec![0.0; if with_input { ck * plane } else { 0 }];
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_kernels = Tensor::zeros(kernels.shape());
    let mut d_bias = Tensor::zeros(&[g.filters]);
    for b in 0..g.batch {
        let up = upstream.item(b);
        for (f, db) in d_bias.data_mut().iter_mut().enumerate() {
            *db += up[f * plane..(f + 1) * plane].iter().sum::<f64>();
        }
        im2col(&g, input.item(b), &mut col, plane, 0);
        // dK += dY * col^T
        gemm(
            g.filters,
            plane,
            ck,
            1.0,
            up,
            false,
            &col,
            true,
            1.0,
            d_kernels.data_mut(),
        );
        if with_input {
            // dcol = K^T * dY
            gemm(
                ck,
                g.filters,
                plane,
                1.0,
                kernels.data(),
                true,
                up,
                false,
                0.0,
                &mut dcol,
            );
            col2im(&g, &dcol, plane, 0, d_input.item_mut(b));
        }
    }
    Ok(ConvGrads {
        input: d_input,
        kernels: d_kernels,
        bias: d_bias,
    })
}
