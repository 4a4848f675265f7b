use crate::error::{Result, TensorError};
use crate::scalar::Float;
use crate::tensor::Tensor;
use crate::var::Var;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics owned by a batch-norm layer.
pub struct RunningStats<'a, T> {
    pub mean: &'a mut [T],
    pub var: &'a mut [T],
    pub momentum: f64,
}

fn check_affine<T: Float>(p: Option<&Var<T>>, channels: usize, what: &'static str) -> Result<()> {
    if let Some(p) = p {
        if p.shape() != [channels] {
            return Err(TensorError::shape(what, &[channels], &p.shape()));
        }
    }
    Ok(())
}

/// Shared backward of "normalize then per-channel affine" where normalization
/// statistics were computed over index sets described by `stat_of(n, c)`.
#[allow(clippy::too_many_arguments)]
fn normalized_affine_backward<T: Float>(
    x: &Tensor<T>,
    grad: &Tensor<T>,
    gamma: Option<&Tensor<T>>,
    mean: &[T],
    inv_std: &[T],
    stat_of: &dyn Fn(usize, usize) -> usize,
    stat_count: usize,
    batch_stats: bool,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let (n, d, h, w) = x.dims4().expect("checked on forward");
    let hw = h * w;
    let xs = x.data();
    let gs = grad.data();
    let mut ggamma = vec![T::zero(); d];
    let mut gbeta = vec![T::zero(); d];
    // per-stat sums of dxhat and dxhat * xhat
    let mut s1 = vec![T::zero(); stat_count];
    let mut s2 = vec![T::zero(); stat_count];
    let mut counts = vec![0usize; stat_count];
    for b in 0..n {
        for c in 0..d {
            let s = stat_of(b, c);
            let gm = gamma.map_or(T::one(), |g| g.data()[c]);
            let base = (b * d + c) * hw;
            for i in 0..hw {
                let xhat = (xs[base + i] - mean[s]) * inv_std[s];
                let g = gs[base + i];
                ggamma[c] += g * xhat;
                gbeta[c] += g;
                let dxhat = g * gm;
                s1[s] += dxhat;
                s2[s] += dxhat * xhat;
            }
            counts[s] += hw;
        }
    }
    let mut gx = vec![T::zero(); xs.len()];
    for b in 0..n {
        for c in 0..d {
            let s = stat_of(b, c);
            let gm = gamma.map_or(T::one(), |g| g.data()[c]);
            let base = (b * d + c) * hw;
            if batch_stats {
                let m = T::from_usize(counts[s]).unwrap();
                let (m1, m2) = (s1[s] / m, s2[s] / m);
                for i in 0..hw {
                    let xhat = (xs[base + i] - mean[s]) * inv_std[s];
                    gx[base + i] = inv_std[s] * (gs[base + i] * gm - m1 - xhat * m2);
                }
            } else {
                for i in 0..hw {
                    gx[base + i] = gs[base + i] * gm * inv_std[s];
                }
            }
        }
    }
    (Tensor::new(x.shape(), gx).unwrap(), ggamma, gbeta)
}

fn apply_affine<T: Float>(
    x: &Tensor<T>,
    gamma: Option<&Var<T>>,
    beta: Option<&Var<T>>,
    mean: &[T],
    inv_std: &[T],
    stat_of: &dyn Fn(usize, usize) -> usize,
) -> Tensor<T> {
    let (n, d, h, w) = x.dims4().unwrap();
    let hw = h * w;
    let gamma = gamma.map(|g| g.value().data().to_vec());
    let beta = beta.map(|b| b.value().data().to_vec());
    let mut out = vec![T::zero(); x.numel()];
    for b in 0..n {
        for c in 0..d {
            let s = stat_of(b, c);
            let gm = gamma.as_ref().map_or(T::one(), |g| g[c]);
            let bt = beta.as_ref().map_or(T::zero(), |v| v[c]);
            let base = (b * d + c) * hw;
            for i in 0..hw {
                out[base + i] = gm * (x.data()[base + i] - mean[s]) * inv_std[s] + bt;
            }
        }
    }
    Tensor::new(x.shape(), out).unwrap()
}

fn build_output<T: Float>(
    op: &'static str,
    x: &Var<T>,
    gamma: Option<&Var<T>>,
    beta: Option<&Var<T>>,
    value: Tensor<T>,
    mean: Vec<T>,
    inv_std: Vec<T>,
    stat_of: impl Fn(usize, usize) -> usize + 'static,
    batch_stats: bool,
) -> Var<T> {
    let mut inputs = vec![x];
    if let Some(g) = gamma {
        inputs.push(g);
    }
    if let Some(b) = beta {
        inputs.push(b);
    }
    let (has_gamma, has_beta) = (gamma.is_some(), beta.is_some());
    let stat_count = mean.len();
    Var::from_op(op, value, &inputs, move |ctx| {
        let x = ctx.inputs[0].value();
        let gamma_val = if has_gamma { Some(ctx.inputs[1].value()) } else { None };
        let (gx, ggamma, gbeta) = normalized_affine_backward(
            &x,
            ctx.grad,
            gamma_val.as_deref(),
            &mean,
            &inv_std,
            &stat_of,
            stat_count,
            batch_stats,
        );
        let d = ggamma.len();
        let mut grads = vec![Some(gx)];
        if has_gamma {
            grads.push(Some(Tensor::new(&[d], ggamma)?));
        }
        if has_beta {
            grads.push(Some(Tensor::new(&[d], gbeta)?));
        }
        Ok(grads)
    })
}

/// Per-channel normalization over batch and spatial axes followed by the
/// optional affine `gamma * xhat + beta`.
pub fn batch_norm<T: Float>(
    x: &Var<T>,
    gamma: Option<&Var<T>>,
    beta: Option<&Var<T>>,
    running: Option<RunningStats<'_, T>>,
    training: bool,
    eps: f64,
) -> Result<Var<T>> {
    let (n, d, h, w) = x.value().dims4()?;
    check_affine(gamma, d, "batch_norm gamma")?;
    check_affine(beta, d, "batch_norm beta")?;
    let m = n * h * w;
    if m == 0 {
        return Err(TensorError::Usage("batch_norm over an empty batch*spatial extent".into()));
    }
    let eps_t = T::from_f64c(eps);
    let (mean, var) = if training {
        let xv = x.value();
        let hw = h * w;
        let mut mean = vec![T::zero(); d];
        let mut var = vec![T::zero(); d];
        let mf = T::from_usize(m).unwrap();
        for c in 0..d {
            let mut s = T::zero();
            for b in 0..n {
                s += xv.data()[(b * d + c) * hw..][..hw].iter().copied().sum();
            }
            mean[c] = s / mf;
            let mut q = T::zero();
            for b in 0..n {
                for &v in &xv.data()[(b * d + c) * hw..][..hw] {
                    q += (v - mean[c]) * (v - mean[c]);
                }
            }
            var[c] = q / mf;
        }
        if let Some(rs) = running {
            let mom = T::from_f64c(rs.momentum);
            let unbias = if m > 1 {
                mf / T::from_usize(m - 1).unwrap()
            } else {
                T::one()
            };
            for c in 0..d {
                rs.mean[c] = (T::one() - mom) * rs.mean[c] + mom * mean[c];
                rs.var[c] = (T::one() - mom) * rs.var[c] + mom * var[c] * unbias;
            }
        }
        (mean, var)
    } else {
        let rs = running.ok_or_else(|| TensorError::Usage("batch_norm eval mode needs running statistics".into()))?;
        (rs.mean.to_vec(), rs.var.to_vec())
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps_t).sqrt()).collect();
    let stat_of = |_b: usize, c: usize| c;
    let value = apply_affine(&x.value(), gamma, beta, &mean, &inv_std, &stat_of);
    Ok(build_output("batch_norm", x, gamma, beta, value, mean, inv_std, stat_of, training))
}

/// Normalization over `(channels/groups, H, W)` per sample and group.
pub fn group_norm<T: Float>(
    x: &Var<T>,
    groups: usize,
    gamma: Option<&Var<T>>,
    beta: Option<&Var<T>>,
    eps: f64,
) -> Result<Var<T>> {
    let (n, d, h, w) = x.value().dims4()?;
    if groups == 0 || d % groups != 0 {
        return Err(TensorError::config(
            "group_norm",
            format!("{d} channels not divisible by {groups} groups"),
        ));
    }
    check_affine(gamma, d, "group_norm gamma")?;
    check_affine(beta, d, "group_norm beta")?;
    if h * w == 0 {
        return Err(TensorError::Usage("group_norm over an empty spatial extent".into()));
    }
    let cpg = d / groups;
    let m = T::from_usize(cpg * h * w).unwrap();
    let eps_t = T::from_f64c(eps);
    let mut mean = vec![T::zero(); n * groups];
    let mut inv_std = vec![T::zero(); n * groups];
    {
        let xv = x.value();
        for b in 0..n {
            for g in 0..groups {
                let block = &xv.data()[(b * d + g * cpg) * h * w..][..cpg * h * w];
                let mu = block.iter().copied().sum::<T>() / m;
                let var = block.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / m;
                mean[b * groups + g] = mu;
                inv_std[b * groups + g] = T::one() / (var + eps_t).sqrt();
            }
        }
    }
    let stat_of = move |b: usize, c: usize| b * groups + c / cpg;
    let value = apply_affine(&x.value(), gamma, beta, &mean, &inv_std, &stat_of);
    Ok(build_output("group_norm", x, gamma, beta, value, mean, inv_std, stat_of, true))
}

/// Per-sample, per-channel normalization without affine parameters.
pub fn instance_norm<T: Float>(x: &Var<T>, eps: f64) -> Result<Var<T>> {
    let d = x.value().dims4()?.1;
    group_norm(x, d, None, None, eps)
}
