use crate::error::{Result, TensorError};
use crate::scalar::Float;
use crate::tensor::Tensor;
use crate::var::Var;

fn unary<T: Float>(
    x: &Var<T>,
    op: &'static str,
    f: impl Fn(T) -> T,
    // derivative from (input, output)
    df: impl Fn(T, T) -> T + 'static,
) -> Var<T> {
    let value = x.value().map(f);
    Var::from_op(op, value, &[x], move |ctx| {
        let input = ctx.inputs[0].value();
        let data: Vec<T> = ctx
            .grad
            .data()
            .iter()
            .zip(input.data())
            .zip(ctx.output.data())
            .map(|((&g, &i), &o)| g * df(i, o))
            .collect();
        Ok(vec![Some(Tensor::new(input.shape(), data)?)])
    })
}

impl<T: Float> Var<T> {
    pub fn add(&self, other: &Var<T>) -> Result<Var<T>> {
        let value = self.value().zip_map(&other.value(), |a, b| a + b)?;
        Ok(Var::from_op("add", value, &[self, other], |ctx| {
            Ok(vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())])
        }))
    }

    pub fn sub(&self, other: &Var<T>) -> Result<Var<T>> {
        let value = self.value().zip_map(&other.value(), |a, b| a - b)?;
        Ok(Var::from_op("sub", value, &[self, other], |ctx| {
            Ok(vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))])
        }))
    }

    pub fn mul(&self, other: &Var<T>) -> Result<Var<T>> {
        let value = self.value().zip_map(&other.value(), |a, b| a * b)?;
        Ok(Var::from_op("mul", value, &[self, other], |ctx| {
            let a = ctx.inputs[0].value();
            let b = ctx.inputs[1].value();
            let ga = if ctx.inputs[0].requires_grad() {
                Some(ctx.grad.zip_map(&b, |g, b| g * b)?)
            } else {
                None
            };
            let gb = if ctx.inputs[1].requires_grad() {
                Some(ctx.grad.zip_map(&a, |g, a| g * a)?)
            } else {
                None
            };
            Ok(vec![ga, gb])
        }))
    }

    /// Multiply by a scalar (rank-0 or single-element) variable.
    pub fn mul_scalar_var(&self, s: &Var<T>) -> Result<Var<T>> {
        if s.value().numel() != 1 {
            return Err(TensorError::shape("mul_scalar_var", &self.shape(), &s.shape()));
        }
        let k = s.item();
        let value = self.value().map(|v| v * k);
        Ok(Var::from_op("mul_scalar_var", value, &[self, s], |ctx| {
            let x = ctx.inputs[0].value();
            let k = ctx.inputs[1].item();
            let gx = ctx.grad.map(|g| g * k);
            let gk: T = ctx
                .grad
                .data()
                .iter()
                .zip(x.data())
                .map(|(&g, &x)| g * x)
                .sum();
            let gk = Tensor::new(&ctx.inputs[1].shape(), vec![gk])?;
            Ok(vec![Some(gx), Some(gk)])
        }))
    }

    pub fn scale(&self, k: f64) -> Var<T> {
        let k = T::from_f64c(k);
        unary(self, "scale", move |v| v * k, move |_, _| k)
    }

    pub fn add_scalar(&self, c: f64) -> Var<T> {
        let c = T::from_f64c(c);
        unary(self, "add_scalar", move |v| v + c, |_, _| T::one())
    }

    pub fn neg(&self) -> Var<T> {
        unary(self, "neg", |v| -v, |_, _| -T::one())
    }

    pub fn exp(&self) -> Var<T> {
        unary(self, "exp", |v| v.exp(), |_, o| o)
    }

    pub fn square(&self) -> Result<Var<T>> {
        let two = T::from_f64c(2.0);
        Ok(unary(self, "square", |v| v * v, move |i, _| two * i))
    }

    pub fn abs(&self) -> Var<T> {
        unary(
            self,
            "abs",
            |v| v.abs(),
            |i, _| {
                if i > T::zero() {
                    T::one()
                } else if i < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn relu(&self) -> Var<T> {
        unary(
            self,
            "relu",
            |v| if v > T::zero() { v } else { T::zero() },
            |i, _| if i > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<T> {
        let s = T::from_f64c(slope);
        unary(
            self,
            "leaky_relu",
            move |v| if v > T::zero() { v } else { v * s },
            move |i, _| if i > T::zero() { T::one() } else { s },
        )
    }

    pub fn tanh(&self) -> Var<T> {
        unary(self, "tanh", |v| v.tanh(), |_, o| T::one() - o * o)
    }

    /// Clamp into `[lo, hi]`; gradient is zero where clamping is active.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var<T> {
        let (lo, hi) = (T::from_f64c(lo), T::from_f64c(hi));
        unary(
            self,
            "clamp",
            move |v| v.max(lo).min(hi),
            move |i, _| {
                if i < lo || i > hi {
                    T::zero()
                } else {
                    T::one()
                }
            },
        )
    }

    pub fn sum(&self) -> Var<T> {
        let value = Tensor::scalar(self.value().sum());
        Var::from_op("sum", value, &[self], |ctx| {
            let g = ctx.grad.item();
            Ok(vec![Some(Tensor::full(&ctx.inputs[0].shape(), g))])
        })
    }

    pub fn mean(&self) -> Var<T> {
        let n = self.value().numel().max(1);
        let value = Tensor::scalar(self.value().mean());
        Var::from_op("mean", value, &[self], move |ctx| {
            let g = ctx.grad.item() / T::from_usize(n).unwrap();
            Ok(vec![Some(Tensor::full(&ctx.inputs[0].shape(), g))])
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<T>> {
        let value = self.value().clone().reshape(shape)?;
        Ok(Var::from_op("reshape", value, &[self], |ctx| {
            Ok(vec![Some(ctx.grad.clone().reshape(&ctx.inputs[0].shape())?)])
        }))
    }

    /// Channels `[start, start + len)` of a 4-D variable.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Var<T>> {
        let value = self.value().channel_slice(start, len)?;
        Ok(Var::from_op("slice_channels", value, &[self], move |ctx| {
            let shape = ctx.inputs[0].shape();
            let (n, d, h, w) = (shape[0], shape[1], shape[2], shape[3]);
            let hw = h * w;
            let mut out = vec![T::zero(); n * d * hw];
            for b in 0..n {
                let dst = (b * d + start) * hw;
                let src = b * len * hw;
                out[dst..dst + len * hw].copy_from_slice(&ctx.grad.data()[src..src + len * hw]);
            }
            Ok(vec![Some(Tensor::new(&shape, out)?)])
        }))
    }
}

/// Concatenate 4-D variables along the channel axis.
pub fn concat_channels<T: Float>(parts: &[Var<T>]) -> Result<Var<T>> {
    let first = parts
        .first()
        .ok_or_else(|| TensorError::Usage("concat of zero tensors".into()))?;
    let (n, _, h, w) = first.value().dims4()?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (pn, pd, ph, pw) = p.value().dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(TensorError::shape("concat_channels", &first.shape(), &p.shape()));
        }
        widths.push(pd);
    }
    let total: usize = widths.iter().sum();
    let hw = h * w;
    let mut out = vec![T::zero(); n * total * hw];
    let mut offset = 0;
    for (p, &d) in parts.iter().zip(&widths) {
        let v = p.value();
        for b in 0..n {
            let dst = (b * total + offset) * hw;
            out[dst..dst + d * hw].copy_from_slice(&v.data()[b * d * hw..(b + 1) * d * hw]);
        }
        offset += d;
    }
    let value = Tensor::new(&[n, total, h, w], out)?;
    let refs: Vec<&Var<T>> = parts.iter().collect();
    Ok(Var::from_op("concat_channels", value, &refs, move |ctx| {
        let mut grads = Vec::with_capacity(widths.len());
        let mut offset = 0;
        for (input, &d) in ctx.inputs.iter().zip(&widths) {
            if input.requires_grad() {
                let mut g = Vec::with_capacity(n * d * hw);
                for b in 0..n {
                    let src = (b * total + offset) * hw;
                    g.extend_from_slice(&ctx.grad.data()[src..src + d * hw]);
                }
                grads.push(Some(Tensor::new(&[n, d, h, w], g)?));
            } else {
                grads.push(None);
            }
            offset += d;
        }
        Ok(grads)
    }))
}

/// Concatenate along the leading (batch) axis.
pub fn concat_batch<T: Float>(parts: &[Var<T>]) -> Result<Var<T>> {
    let values: Vec<Tensor<T>> = parts.iter().map(|p| p.value().clone()).collect();
    let value = Tensor::stack(&values)?;
    let sizes: Vec<usize> = values.iter().map(|v| v.numel()).collect();
    let refs: Vec<&Var<T>> = parts.iter().collect();
    Ok(Var::from_op("concat_batch", value, &refs, move |ctx| {
        let mut offset = 0;
        let mut grads = Vec::with_capacity(sizes.len());
        for (input, &len) in ctx.inputs.iter().zip(&sizes) {
            grads.push(if input.requires_grad() {
                Some(Tensor::new(&input.shape(), ctx.grad.data()[offset..offset + len].to_vec())?)
            } else {
                None
            });
            offset += len;
        }
        Ok(grads)
    }))
}

impl<T: Float> Var<T> {
    /// Samples `[start, start + len)` along the leading axis.
    pub fn slice_batch(&self, start: usize, len: usize) -> Result<Var<T>> {
        let shape = self.shape();
        if shape.is_empty() || start + len > shape[0] {
            return Err(TensorError::Usage(format!(
                "slice_batch {start}..{} of shape {shape:?}",
                start + len
            )));
        }
        let per = shape[1..].iter().product::<usize>();
        let mut out_shape = shape.clone();
        out_shape[0] = len;
        let value = Tensor::new(&out_shape, self.value().data()[start * per..(start + len) * per].to_vec())?;
        Ok(Var::from_op("slice_batch", value, &[self], move |ctx| {
            let mut g = Tensor::zeros(&ctx.inputs[0].shape());
            g.data_mut()[start * per..(start + len) * per].copy_from_slice(ctx.grad.data());
            Ok(vec![Some(g)])
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_all_ones() {
        let x = Var::leaf(Tensor::<f64>::from_fn(&[2, 3], |i| i as f64 - 2.5));
        x.sum().backward().unwrap();
        assert!(x.grad().unwrap().data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn square_gradient_at_three_is_six() {
        let x = Var::leaf(Tensor::<f64>::scalar(3.0));
        x.square().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap().item(), 6.0);
    }

    #[test]
    fn leaky_relu_values() {
        let x = Var::constant(Tensor::<f64>::new(&[2], vec![-1.0, 2.0]).unwrap());
        let y = x.leaky_relu(0.2);
        assert_eq!(y.value().data(), &[-0.2, 2.0]);
    }

    #[test]
    fn concat_then_slice_roundtrip() {
        let a = Var::leaf(Tensor::<f64>::from_fn(&[2, 1, 2, 2], |i| i as f64));
        let b = Var::leaf(Tensor::<f64>::from_fn(&[2, 2, 2, 2], |i| 100.0 + i as f64));
        let c = concat_channels(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.shape(), vec![2, 3, 2, 2]);
        let back = c.slice_channels(1, 2).unwrap();
        assert_eq!(*back.value(), *b.value());
        back.sum().backward().unwrap();
        assert!(a.grad().unwrap().data().iter().all(|&g| g == 0.0));
        assert!(b.grad().unwrap().data().iter().all(|&g| g == 1.0));
    }
}
