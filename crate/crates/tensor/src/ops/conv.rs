//! Grouped 2-D convolution.
//!
//! Two kernels compute the same function: a direct loop nest kept as the
//! reference, and an im2col + GEMM path run per (sample, group). Output
//! channel block `g` only ever reads input channel block `g`.

use crate::error::{Result, TensorError};
use crate::scalar::Float;
use crate::tensor::Tensor;
use crate::var::Var;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(stride: usize, padding: usize, groups: usize) -> Self {
        ConvSpec {
            stride,
            padding,
            groups,
        }
    }
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec::new(1, 0, 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConvAlgo {
    Naive,
    #[default]
    Im2col,
}

/// Resolved geometry of one convolution call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub n: usize,
    pub din: usize,
    pub h: usize,
    pub w: usize,
    pub dout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    pub fn resolve(input: &[usize], weight: &[usize], spec: ConvSpec) -> Result<ConvDims> {
        let [n, din, h, w] = *input else {
            return Err(TensorError::shape("conv2d input", input, weight));
        };
        let [dout, cin_g, kh, kw] = *weight else {
            return Err(TensorError::shape("conv2d weight", input, weight));
        };
        let g = spec.groups;
        if g == 0 || din % g != 0 || dout % g != 0 {
            return Err(TensorError::config(
                "conv2d",
                format!("channels in={din} out={dout} not divisible by groups={g}"),
            ));
        }
        if cin_g * g != din {
            return Err(TensorError::shape("conv2d", input, weight));
        }
        if spec.stride == 0 {
            return Err(TensorError::config("conv2d", "stride must be positive"));
        }
        if h + 2 * spec.padding < kh || w + 2 * spec.padding < kw || kh == 0 || kw == 0 {
            return Err(TensorError::config(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{w} (+2*{})", spec.padding),
            ));
        }
        Ok(ConvDims {
            n,
            din,
            h,
            w,
            dout,
            kh,
            kw,
            stride: spec.stride,
            pad: spec.padding,
            groups: g,
            oh: (h + 2 * spec.padding - kh) / spec.stride + 1,
            ow: (w + 2 * spec.padding - kw) / spec.stride + 1,
        })
    }

    fn cin_g(&self) -> usize {
        self.din / self.groups
    }

    fn cout_g(&self) -> usize {
        self.dout / self.groups
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        if pos >= 0 && (pos as usize) < limit {
            Some(pos as usize)
        } else {
            None
        }
    }
}

pub mod naive {
    use super::*;

    pub fn forward<T: Float>(x: &[T], w: &[T], b: Option<&[T]>, d: &ConvDims) -> Vec<T> {
        let (cin_g, cout_g) = (d.cin_g(), d.cout_g());
        let mut out = vec![T::zero(); d.n * d.dout * d.oh * d.ow];
        for n in 0..d.n {
            for co in 0..d.dout {
                let g = co / cout_g;
                for oy in 0..d.oh {
                    for ox in 0..d.ow {
                        let mut acc = b.map_or(T::zero(), |b| b[co]);
                        for ci in 0..cin_g {
                            let c = g * cin_g + ci;
                            for ky in 0..d.kh {
                                let Some(iy) = d.src(oy, ky, d.h) else { continue };
                                for kx in 0..d.kw {
                                    let Some(ix) = d.src(ox, kx, d.w) else { continue };
                                    acc += x[((n * d.din + c) * d.h + iy) * d.w + ix]
                                        * w[((co * cin_g + ci) * d.kh + ky) * d.kw + kx];
                                }
                            }
                        }
                        out[((n * d.dout + co) * d.oh + oy) * d.ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    /// Returns `(grad_input, grad_weight, grad_bias)`.
    pub fn backward<T: Float>(x: &[T], w: &[T], gy: &[T], d: &ConvDims) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (cin_g, cout_g) = (d.cin_g(), d.cout_g());
        let mut gx = vec![T::zero(); x.len()];
        let mut gw = vec![T::zero(); w.len()];
        let mut gb = vec![T::zero(); d.dout];
        for n in 0..d.n {
            for co in 0..d.dout {
                let g = co / cout_g;
                for oy in 0..d.oh {
                    for ox in 0..d.ow {
                        let go = gy[((n * d.dout + co) * d.oh + oy) * d.ow + ox];
                        gb[co] += go;
                        for ci in 0..cin_g {
                            let c = g * cin_g + ci;
                            for ky in 0..d.kh {
                                let Some(iy) = d.src(oy, ky, d.h) else { continue };
                                for kx in 0..d.kw {
                                    let Some(ix) = d.src(ox, kx, d.w) else { continue };
                                    let xi = ((n * d.din + c) * d.h + iy) * d.w + ix;
                                    let wi = ((co * cin_g + ci) * d.kh + ky) * d.kw + kx;
                                    gx[xi] += go * w[wi];
                                    gw[wi] += go * x[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
        (gx, gw, gb)
    }
}

pub mod im2col {
    use super::*;

    /// Unfold channel block `[c0, c0 + cin_g)` of sample `n` into `cols`
    /// laid out `[cin_g * kh * kw, oh * ow]`.
    fn unfold<T: Float>(x: &[T], d: &ConvDims, n: usize, c0: usize, cols: &mut [T]) {
        let p = d.oh * d.ow;
        let mut row = 0;
        for ci in 0..d.cin_g() {
            let plane = &x[(n * d.din + c0 + ci) * d.h * d.w..][..d.h * d.w];
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..d.oh {
                        let line = &mut dst[oy * d.ow..(oy + 1) * d.ow];
                        match d.src(oy, ky, d.h) {
                            None => line.iter_mut().for_each(|v| *v = T::zero()),
                            Some(iy) => {
                                let src = &plane[iy * d.w..(iy + 1) * d.w];
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match d.src(ox, kx, d.w) {
                                        Some(ix) => src[ix],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Scatter-add `cols` back into channel block `c0` of sample `n`.
    fn fold<T: Float>(cols: &[T], d: &ConvDims, n: usize, c0: usize, gx: &mut [T]) {
        let p = d.oh * d.ow;
        let mut row = 0;
        for ci in 0..d.cin_g() {
            let plane = &mut gx[(n * d.din + c0 + ci) * d.h * d.w..][..d.h * d.w];
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..d.oh {
                        let Some(iy) = d.src(oy, ky, d.h) else { continue };
                        let line = &src[oy * d.ow..(oy + 1) * d.ow];
                        let dst = &mut plane[iy * d.w..(iy + 1) * d.w];
                        for (ox, &v) in line.iter().enumerate() {
                            if let Some(ix) = d.src(ox, kx, d.w) {
                                dst[ix] += v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    pub fn forward<T: Float>(x: &[T], w: &[T], b: Option<&[T]>, d: &ConvDims) -> Vec<T> {
        let (cin_g, cout_g) = (d.cin_g(), d.cout_g());
        let k = cin_g * d.kh * d.kw;
        let p = d.oh * d.ow;
        let mut out = vec![T::zero(); d.n * d.dout * p];
        let mut cols = if d.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
        for n in 0..d.n {
            for g in 0..d.groups {
                let wg = &w[g * cout_g * k..(g + 1) * cout_g * k];
                let yg = &mut out[(n * d.dout + g * cout_g) * p..][..cout_g * p];
                if let Some(b) = b {
                    for (co, row) in yg.chunks_mut(p).enumerate() {
                        row.iter_mut().for_each(|v| *v = b[g * cout_g + co]);
                    }
                }
                let beta = if b.is_some() { T::one() } else { T::zero() };
                if d.is_pointwise() {
                    let xg = &x[(n * d.din + g * cin_g) * p..][..cin_g * p];
                    T::gemm(cout_g, k, p, T::one(), wg, k as isize, 1, xg, p as isize, 1, beta, yg, p as isize, 1);
                } else {
                    unfold(x, d, n, g * cin_g, &mut cols);
                    T::gemm(cout_g, k, p, T::one(), wg, k as isize, 1, &cols, p as isize, 1, beta, yg, p as isize, 1);
                }
            }
        }
        out
    }

    pub fn backward<T: Float>(
        x: &[T],
        w: &[T],
        gy: &[T],
        d: &ConvDims,
        need_input: bool,
        need_weight: bool,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (cin_g, cout_g) = (d.cin_g(), d.cout_g());
        let k = cin_g * d.kh * d.kw;
        let p = d.oh * d.ow;
        let mut gx = if need_input { vec![T::zero(); x.len()] } else { Vec::new() };
        let mut gw = if need_weight { vec![T::zero(); w.len()] } else { Vec::new() };
        let mut gb = vec![T::zero(); d.dout];
        for n in 0..d.n {
            for co in 0..d.dout {
                gb[co] += gy[(n * d.dout + co) * p..][..p].iter().copied().sum();
            }
        }
        let pointwise = d.is_pointwise();
        let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };
        for n in 0..d.n {
            for g in 0..d.groups {
                let wg = &w[g * cout_g * k..(g + 1) * cout_g * k];
                let gyg = &gy[(n * d.dout + g * cout_g) * p..][..cout_g * p];
                if need_weight {
                    let gwg = &mut gw[g * cout_g * k..(g + 1) * cout_g * k];
                    if pointwise {
                        let xg = &x[(n * d.din + g * cin_g) * p..][..cin_g * p];
                        T::gemm(cout_g, p, k, T::one(), gyg, p as isize, 1, xg, 1, p as isize, T::one(), gwg, k as isize, 1);
                    } else {
                        unfold(x, d, n, g * cin_g, &mut cols);
                        T::gemm(cout_g, p, k, T::one(), gyg, p as isize, 1, &cols, 1, p as isize, T::one(), gwg, k as isize, 1);
                    }
                }
                if need_input {
                    if pointwise {
                        let gxg = &mut gx[(n * d.din + g * cin_g) * p..][..cin_g * p];
                        T::gemm(k, cout_g, p, T::one(), wg, 1, k as isize, gyg, p as isize, 1, T::zero(), gxg, p as isize, 1);
                    } else {
                        T::gemm(k, cout_g, p, T::one(), wg, 1, k as isize, gyg, p as isize, 1, T::zero(), &mut cols, p as isize, 1);
                        fold(&cols, d, n, g * cin_g, &mut gx);
                    }
                }
            }
        }
        (gx, gw, gb)
    }
}

/// Grouped convolution with the default (im2col) kernel.
pub fn conv2d<T: Float>(input: &Var<T>, weight: &Var<T>, bias: Option<&Var<T>>, spec: ConvSpec) -> Result<Var<T>> {
    conv2d_with(input, weight, bias, spec, ConvAlgo::default())
}

pub fn conv2d_with<T: Float>(
    input: &Var<T>,
    weight: &Var<T>,
    bias: Option<&Var<T>>,
    spec: ConvSpec,
    algo: ConvAlgo,
) -> Result<Var<T>> {
    let d = ConvDims::resolve(&input.shape(), &weight.shape(), spec)?;
    if let Some(b) = bias {
        if b.shape() != [d.dout] {
            return Err(TensorError::shape("conv2d bias", &[d.dout], &b.shape()));
        }
    }
    let out = {
        let x = input.value();
        let w = weight.value();
        let b = bias.map(|b| b.value());
        let bd = b.as_ref().map(|b| b.data());
        match algo {
            ConvAlgo::Naive => naive::forward(x.data(), w.data(), bd, &d),
            ConvAlgo::Im2col => im2col::forward(x.data(), w.data(), bd, &d),
        }
    };
    let value = Tensor::new(&[d.n, d.dout, d.oh, d.ow], out)?;
    let mut inputs = vec![input, weight];
    if let Some(b) = bias {
        inputs.push(b);
    }
    let has_bias = bias.is_some();
    Ok(Var::from_op("conv2d", value, &inputs, move |ctx| {
        let x = ctx.inputs[0].value();
        let w = ctx.inputs[1].value();
        let need_x = ctx.inputs[0].requires_grad();
        let need_w = ctx.inputs[1].requires_grad();
        let (gx, gw, gb) = match algo {
            ConvAlgo::Naive => naive::backward(x.data(), w.data(), ctx.grad.data(), &d),
            ConvAlgo::Im2col => im2col::backward(x.data(), w.data(), ctx.grad.data(), &d, need_x, need_w),
        };
        let mut grads = vec![
            if need_x { Some(Tensor::new(x.shape(), gx)?) } else { None },
            if need_w { Some(Tensor::new(w.shape(), gw)?) } else { None },
        ];
        if has_bias {
            grads.push(Some(Tensor::new(&[d.dout], gb)?));
        }
        Ok(grads)
    }))
}
