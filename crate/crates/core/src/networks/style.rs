use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use smis_tensor::{Float, Tensor, Var};

use crate::error::{Result, SmisError};

pub const LOGVAR_CLAMP: f64 = 20.0;

/// Encoder output: mean and log-variance maps `[N, C * d_z, h_z, w_z]`.
#[derive(Clone)]
pub struct GaussianMap<T: Float> {
    pub mean: Var<T>,
    pub logvar: Var<T>,
}

/// Latent code viewed as `C` contiguous per-class channel blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCode<T> {
    classes: usize,
    data: Tensor<T>,
}

impl<T: Float> StyleCode<T> {
    pub fn new(classes: usize, data: Tensor<T>) -> Result<Self> {
        let (_, d, _, _) = data.dims4()?;
        if classes == 0 || d % classes != 0 {
            return Err(SmisError::invalid(format!("{d} latent channels for {classes} classes")));
        }
        Ok(StyleCode { classes, data })
    }

    /// Standard normal code of shape `[n, classes * z_dim, size, size]`.
    pub fn sample(n: usize, classes: usize, z_dim: usize, size: usize, rng: &mut impl Rng) -> Self {
        let data = Tensor::from_fn(&[n, classes * z_dim, size, size], |_| {
            T::from_f64c(StandardNormal.sample(rng))
        });
        StyleCode { classes, data }
    }

    pub fn from_blocks(blocks: &[Tensor<T>]) -> Result<Self> {
        let vars: Vec<Var<T>> = blocks.iter().cloned().map(Var::constant).collect();
        let z = smis_tensor::ops::concat_channels(&vars)?;
        let data = z.value().clone();
        Self::new(blocks.len(), data)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn z_dim(&self) -> usize {
        self.data.shape()[1] / self.classes
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.data
    }

    pub fn block(&self, c: usize) -> Result<Tensor<T>> {
        Ok(self.data.channel_slice(c * self.z_dim(), self.z_dim())?)
    }

    pub fn blocks(&self) -> Result<Vec<Tensor<T>>> {
        (0..self.classes).map(|c| self.block(c)).collect()
    }

    pub fn set_block(&mut self, c: usize, block: &Tensor<T>) -> Result<()> {
        let (n, d, h, w) = self.data.dims4()?;
        let zd = self.z_dim();
        if c >= self.classes || block.shape() != [n, zd, h, w] {
            return Err(SmisError::invalid(format!(
                "block {c} of shape {:?} does not fit code {:?}",
                block.shape(),
                self.data.shape()
            )));
        }
        let hw = h * w;
        for b in 0..n {
            let dst = (b * d + c * zd) * hw;
            self.data.data_mut()[dst..dst + zd * hw].copy_from_slice(&block.data()[b * zd * hw..(b + 1) * zd * hw]);
        }
        Ok(())
    }

    /// `(1 - t) a + t b`.
    pub fn lerp(a: &Self, b: &Self, t: f64) -> Result<Self> {
        let t = T::from_f64c(t);
        let data = a.data.zip_map(&b.data, |x, y| (T::one() - t) * x + t * y)?;
        Self::new(a.classes, data)
    }

    /// Sample `index` of a batched code as a batch of one.
    pub fn sample_at(&self, index: usize) -> Result<Self> {
        let t = self.data.sample(index)?;
        let mut shape = vec![1];
        shape.extend_from_slice(t.shape());
        Self::new(self.classes, t.reshape(&shape)?)
    }
}

/// `z = mean + exp(logvar / 2) * eps` with `eps ~ N(0, 1)` elementwise.
pub fn reparameterize<T: Float>(g: &GaussianMap<T>, rng: &mut impl Rng) -> Result<Var<T>> {
    let shape = g.mean.shape();
    let eps = Tensor::from_fn(&shape, |_| T::from_f64c(StandardNormal.sample(rng)));
    reparameterize_with(g, &eps)
}

pub fn reparameterize_with<T: Float>(g: &GaussianMap<T>, eps: &Tensor<T>) -> Result<Var<T>> {
    let std = g.logvar.scale(0.5).exp();
    Ok(g.mean.add(&std.mul(&Var::constant(eps.clone()))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clamped_variance_gives_the_mean() {
        let mean = Var::constant(Tensor::<f64>::from_fn(&[1, 4, 2, 2], |i| i as f64));
        let logvar = Var::constant(Tensor::full(&[1, 4, 2, 2], -LOGVAR_CLAMP));
        let z = reparameterize(&GaussianMap { mean: mean.clone(), logvar }, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let diff = z.value().zip_map(&mean.value(), |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(diff < 1e-3);
    }

    #[test]
    fn standard_normal_statistics() {
        let g = GaussianMap {
            mean: Var::constant(Tensor::<f64>::zeros(&[1, 10_000, 1, 1])),
            logvar: Var::constant(Tensor::zeros(&[1, 10_000, 1, 1])),
        };
        let z = reparameterize(&g, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let v = z.value();
        let mean = v.mean();
        let var = v.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.numel() as f64;
        assert!(mean.abs() < 0.05 && (0.9..=1.1).contains(&var), "{mean} {var}");
    }

    #[test]
    fn seeded_reparameterization_repeats() {
        let g = GaussianMap {
            mean: Var::constant(Tensor::<f32>::zeros(&[2, 4, 2, 2])),
            logvar: Var::constant(Tensor::zeros(&[2, 4, 2, 2])),
        };
        let a = reparameterize(&g, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().value().clone();
        let b = reparameterize(&g, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().value().clone();
        assert_eq!(a, b);
    }

    #[test]
    fn blocks_concatenate_back_to_the_code() {
        let code = StyleCode::<f64>::sample(2, 3, 2, 2, &mut ChaCha8Rng::seed_from_u64(4));
        let blocks = code.blocks().unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(StyleCode::from_blocks(&blocks).unwrap(), code);
        let mut other = code.clone();
        other.set_block(1, &Tensor::zeros(&[2, 2, 2, 2])).unwrap();
        assert_eq!(other.block(0).unwrap(), code.block(0).unwrap());
        assert!(other.block(1).unwrap().data().iter().all(|&v| v == 0.0));
        let mid = StyleCode::lerp(&code, &other, 0.5).unwrap();
        let expect = code.tensor().zip_map(other.tensor(), |a, b| (a + b) / 2.0).unwrap();
        assert_eq!(mid.tensor(), &expect);
    }
}
