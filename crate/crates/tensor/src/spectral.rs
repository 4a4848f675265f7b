//! Spectral normalization by power iteration.
//!
//! The weight is viewed as a `[rows, cols]` matrix (`rows` = leading axis).
//! A grouped convolution weight is block diagonal in its dense form, so each
//! group's row block is normalized by its own top singular value; with one
//! group this is the ordinary per-matrix normalization.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TensorError};
use crate::param::{Parameter, SpectralState};
use crate::scalar::Float;
use crate::tensor::Tensor;
use crate::var::Var;

pub const SN_EPS: f64 = 1e-12;
/// Power iterations applied when a layer is constructed.
pub const INIT_POWER_ITERS: usize = 15;

fn matrix_dims(shape: &[usize]) -> (usize, usize) {
    let rows = shape.first().copied().unwrap_or(1);
    let cols = shape.iter().skip(1).product::<usize>().max(1);
    (rows, cols)
}

fn normalize<T: Float>(v: &mut [T]) {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let denom = norm.max(T::from_f64c(SN_EPS));
    v.iter_mut().for_each(|x| *x /= denom);
}

impl<T: Float> SpectralState<T> {
    /// Random unit starting vectors for a weight of `shape` split into `groups` row blocks.
    pub fn init(shape: &[usize], groups: usize, rng: &mut impl Rng) -> Result<Self> {
        let (rows, cols) = matrix_dims(shape);
        if groups == 0 || rows % groups != 0 {
            return Err(TensorError::config(
                "spectral_norm",
                format!("{rows} rows not divisible by {groups} groups"),
            ));
        }
        let rpg = rows / groups;
        let mut u: Vec<T> = (0..rows)
            .map(|_| T::from_f64c(StandardNormal.sample(rng)))
            .collect();
        let mut v: Vec<T> = (0..groups * cols)
            .map(|_| T::from_f64c(StandardNormal.sample(rng)))
            .collect();
        for g in 0..groups {
            normalize(&mut u[g * rpg..(g + 1) * rpg]);
            normalize(&mut v[g * cols..(g + 1) * cols]);
        }
        Ok(SpectralState { groups, u, v })
    }

    /// Run `iters` power iterations against `weight` without producing an output.
    pub fn warm(&mut self, weight: &Tensor<T>, iters: usize) {
        let (rows, cols) = matrix_dims(weight.shape());
        let rpg = rows / self.groups;
        for g in 0..self.groups {
            block_sigma(
                &weight.data()[g * rpg * cols..(g + 1) * rpg * cols],
                rpg,
                cols,
                &mut self.u[g * rpg..(g + 1) * rpg],
                &mut self.v[g * cols..(g + 1) * cols],
                iters,
            );
        }
    }
}

/// One block's power iterations and `sigma = uᵀ W v`.
fn block_sigma<T: Float>(w: &[T], rows: usize, cols: usize, u: &mut [T], v: &mut [T], iters: usize) -> T {
    for _ in 0..iters {
        // v <- Wᵀu / |Wᵀu|
        T::gemm(cols, rows, 1, T::one(), w, 1, cols as isize, u, 1, 1, T::zero(), v, 1, 1);
        normalize(v);
        // u <- W v / |W v|
        T::gemm(rows, cols, 1, T::one(), w, cols as isize, 1, v, 1, 1, T::zero(), u, 1, 1);
        normalize(u);
    }
    let mut wv = vec![T::zero(); rows];
    T::gemm(rows, cols, 1, T::one(), w, cols as isize, 1, v, 1, 1, T::zero(), &mut wv, 1, 1);
    u.iter().zip(&wv).map(|(&a, &b)| a * b).sum()
}

/// Effective weight `W_g / sigma_g` per group. When `iters > 0` the stored
/// singular vectors are refined first; with `iters == 0` they are reused as-is.
pub fn spectral_normalize<T: Float>(param: &Parameter<T>, iters: usize) -> Result<Var<T>> {
    let state = param
        .spectral
        .as_ref()
        .ok_or_else(|| TensorError::Usage(format!("{} has no spectral state", param.name())))?;
    let shape = param.shape();
    let (rows, cols) = matrix_dims(&shape);
    let mut st = state.borrow_mut();
    let groups = st.groups;
    let rpg = rows / groups;
    let eps = T::from_f64c(SN_EPS);

    let weight = param.var();
    let wv = weight.value();
    let mut sigmas = Vec::with_capacity(groups);
    let SpectralState { u, v, .. } = &mut *st;
    for g in 0..groups {
        let wg = &wv.data()[g * rpg * cols..(g + 1) * rpg * cols];
        let s = block_sigma(
            wg,
            rpg,
            cols,
            &mut u[g * rpg..(g + 1) * rpg],
            &mut v[g * cols..(g + 1) * cols],
            iters,
        );
        sigmas.push(s.max(eps));
    }
    let out: Vec<T> = wv
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| x / sigmas[i / (rpg * cols)])
        .collect();
    let value = Tensor::new(&shape, out)?;
    drop(wv);
    let (u, v) = (u.clone(), v.clone());
    drop(st);

    Ok(Var::from_op("spectral_normalize", value, &[weight], move |ctx| {
        // dL/dW = (G - <G, W_sn> u vᵀ) / sigma, per block
        let g = ctx.grad.data();
        let wsn = ctx.output.data();
        let mut gw = vec![T::zero(); g.len()];
        for b in 0..groups {
            let span = b * rpg * cols..(b + 1) * rpg * cols;
            let inner: T = g[span.clone()]
                .iter()
                .zip(&wsn[span.clone()])
                .map(|(&a, &b)| a * b)
                .sum();
            let sigma = sigmas[b];
            for r in 0..rpg {
                for c in 0..cols {
                    let i = b * rpg * cols + r * cols + c;
                    gw[i] = (g[i] - inner * u[b * rpg + r] * v[b * cols + c]) / sigma;
                }
            }
        }
        Ok(vec![Some(Tensor::new(ctx.output.shape(), gw)?)])
    }))
}

/// Top singular value estimate of each group block after `iters` fresh power iterations.
pub fn estimate_sigma<T: Float>(w: &Tensor<T>, groups: usize, iters: usize, rng: &mut impl Rng) -> Result<Vec<T>> {
    let mut st = SpectralState::<T>::init(w.shape(), groups, rng)?;
    let (rows, cols) = matrix_dims(w.shape());
    let rpg = rows / groups;
    let SpectralState { u, v, .. } = &mut st;
    Ok((0..groups)
        .map(|g| {
            block_sigma(
                &w.data()[g * rpg * cols..(g + 1) * rpg * cols],
                rpg,
                cols,
                &mut u[g * rpg..(g + 1) * rpg],
                &mut v[g * cols..(g + 1) * cols],
                iters,
            )
        })
        .collect())
}
