use crate::error::{Result, TensorError};
use crate::scalar::Float;
use crate::tensor::Tensor;
use crate::var::Var;

/// Source row/column index of nearest-neighbour resizing `src -> dst`.
#[inline]
pub fn nearest_index(dst_pos: usize, src_len: usize, dst_len: usize) -> usize {
    (dst_pos * src_len / dst_len).min(src_len - 1)
}

/// Nearest-neighbour resize of the spatial axes to `(oh, ow)`.
pub fn resize_nearest<T: Float>(x: &Var<T>, oh: usize, ow: usize) -> Result<Var<T>> {
    let (n, d, h, w) = x.value().dims4()?;
    if oh == 0 || ow == 0 || h == 0 || w == 0 {
        return Err(TensorError::config("resize_nearest", format!("cannot resize {h}x{w} to {oh}x{ow}")));
    }
    let rows: Vec<usize> = (0..oh).map(|y| nearest_index(y, h, oh)).collect();
    let cols: Vec<usize> = (0..ow).map(|x| nearest_index(x, w, ow)).collect();
    let mut out = Vec::with_capacity(n * d * oh * ow);
    {
        let xv = x.value();
        for plane in xv.data().chunks(h * w) {
            for &r in &rows {
                let line = &plane[r * w..(r + 1) * w];
                out.extend(cols.iter().map(|&c| line[c]));
            }
        }
    }
    let value = Tensor::new(&[n, d, oh, ow], out)?;
    Ok(Var::from_op("resize_nearest", value, &[x], move |ctx| {
        let mut gx = vec![T::zero(); n * d * h * w];
        for (plane, gp) in gx.chunks_mut(h * w).zip(ctx.grad.data().chunks(oh * ow)) {
            for (y, &r) in rows.iter().enumerate() {
                for (xx, &c) in cols.iter().enumerate() {
                    plane[r * w + c] += gp[y * ow + xx];
                }
            }
        }
        Ok(vec![Some(Tensor::new(&[n, d, h, w], gx)?)])
    }))
}

pub fn upsample_nearest<T: Float>(x: &Var<T>, factor: usize) -> Result<Var<T>> {
    if factor == 0 {
        return Err(TensorError::config("upsample_nearest", "factor must be positive"));
    }
    let (_, _, h, w) = x.value().dims4()?;
    resize_nearest(x, h * factor, w * factor)
}

/// Average pooling with a `k x k` window and stride `k`.
pub fn avg_pool<T: Float>(x: &Var<T>, k: usize) -> Result<Var<T>> {
    let (n, d, h, w) = x.value().dims4()?;
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(TensorError::config(
            "avg_pool",
            format!("kernel {k} does not tile a {h}x{w} input"),
        ));
    }
    let (oh, ow) = (h / k, w / k);
    let inv = T::one() / T::from_usize(k * k).unwrap();
    let mut out = vec![T::zero(); n * d * oh * ow];
    {
        let xv = x.value();
        for (plane, op) in xv.data().chunks(h * w).zip(out.chunks_mut(oh * ow)) {
            for y in 0..h {
                for xx in 0..w {
                    op[(y / k) * ow + xx / k] += plane[y * w + xx];
                }
            }
            op.iter_mut().for_each(|v| *v *= inv);
        }
    }
    let value = Tensor::new(&[n, d, oh, ow], out)?;
    Ok(Var::from_op("avg_pool", value, &[x], move |ctx| {
        let mut gx = vec![T::zero(); n * d * h * w];
        for (plane, gp) in gx.chunks_mut(h * w).zip(ctx.grad.data().chunks(oh * ow)) {
            for y in 0..h {
                for xx in 0..w {
                    plane[y * w + xx] = gp[(y / k) * ow + xx / k] * inv;
                }
            }
        }
        Ok(vec![Some(Tensor::new(&[n, d, h, w], gx)?)])
    }))
}

/// Global average over the spatial axes, keeping them as `1 x 1`.
pub fn spatial_mean<T: Float>(x: &Var<T>) -> Result<Var<T>> {
    let (n, d, h, w) = x.value().dims4()?;
    let hw = h * w;
    if hw == 0 {
        return Err(TensorError::Usage("spatial_mean of an empty plane".into()));
    }
    let inv = T::one() / T::from_usize(hw).unwrap();
    let out: Vec<T> = x
        .value()
        .data()
        .chunks(hw)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    let value = Tensor::new(&[n, d, 1, 1], out)?;
    Ok(Var::from_op("spatial_mean", value, &[x], move |ctx| {
        let mut gx = Vec::with_capacity(n * d * hw);
        for &g in ctx.grad.data() {
            gx.extend(std::iter::repeat_n(g * inv, hw));
        }
        Ok(vec![Some(Tensor::new(&[n, d, h, w], gx)?)])
    }))
}

/// `x · Wᵀ + b` for `x: [N, in]`, `W: [out, in]`.
pub fn linear<T: Float>(x: &Var<T>, weight: &Var<T>, bias: Option<&Var<T>>) -> Result<Var<T>> {
    let xs = x.shape();
    let ws = weight.shape();
    let (&[n, fin], &[fout, win]) = (xs.as_slice(), ws.as_slice()) else {
        return Err(TensorError::shape("linear", &xs, &ws));
    };
    if fin != win {
        return Err(TensorError::shape("linear", &xs, &ws));
    }
    if let Some(b) = bias {
        if b.shape() != [fout] {
            return Err(TensorError::shape("linear bias", &[fout], &b.shape()));
        }
    }
    let mut out = vec![T::zero(); n * fout];
    if let Some(b) = bias {
        let bv = b.value();
        for row in out.chunks_mut(fout) {
            row.copy_from_slice(bv.data());
        }
    }
    T::gemm(
        n,
        fin,
        fout,
        T::one(),
        x.value().data(),
        fin as isize,
        1,
        weight.value().data(),
        1,
        fin as isize,
        T::one(),
        &mut out,
        fout as isize,
        1,
    );
    let value = Tensor::new(&[n, fout], out)?;
    let mut inputs = vec![x, weight];
    if let Some(b) = bias {
        inputs.push(b);
    }
    let has_bias = bias.is_some();
    Ok(Var::from_op("linear", value, &inputs, move |ctx| {
        let xv = ctx.inputs[0].value();
        let wv = ctx.inputs[1].value();
        let g = ctx.grad.data();
        let mut gx = vec![T::zero(); n * fin];
        T::gemm(n, fout, fin, T::one(), g, fout as isize, 1, wv.data(), fin as isize, 1, T::zero(), &mut gx, fin as isize, 1);
        let mut gw = vec![T::zero(); fout * fin];
        T::gemm(fout, n, fin, T::one(), g, 1, fout as isize, xv.data(), fin as isize, 1, T::zero(), &mut gw, fin as isize, 1);
        let mut grads = vec![Some(Tensor::new(&[n, fin], gx)?), Some(Tensor::new(&[fout, fin], gw)?)];
        if has_bias {
            let mut gb = vec![T::zero(); fout];
            for row in g.chunks(fout) {
                for (a, &b) in gb.iter_mut().zip(row) {
                    *a += b;
                }
            }
            grads.push(Some(Tensor::new(&[fout], gb)?));
        }
        Ok(grads)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_then_pool_roundtrip() {
        let x = Var::constant(Tensor::<f64>::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let up = upsample_nearest(&x, 2).unwrap();
        assert_eq!(
            up.value().data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        let back = avg_pool(&up, 2).unwrap();
        assert_eq!(*back.value(), *x.value());
    }

    #[test]
    fn invalid_factor_or_kernel() {
        let x = Var::constant(Tensor::<f64>::zeros(&[1, 1, 3, 3]));
        assert!(upsample_nearest(&x, 0).is_err());
        assert!(avg_pool(&x, 2).is_err());
        assert!(avg_pool(&x, 0).is_err());
    }

    #[test]
    fn linear_forward() {
        let x = Var::constant(Tensor::<f64>::new(&[1, 2], vec![1.0, 2.0]).unwrap());
        let w = Var::constant(Tensor::new(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap());
        let b = Var::constant(Tensor::new(&[3], vec![0.5, 0.5, 0.5]).unwrap());
        let y = linear(&x, &w, Some(&b)).unwrap();
        assert_eq!(y.value().data(), &[1.5, 2.5, 3.5]);
    }
}
