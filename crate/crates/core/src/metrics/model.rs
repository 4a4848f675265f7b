use smis_tensor::{Float, Mode, NoGradGuard, Tensor, Var};

use crate::error::Result;
use crate::networks::Networks;
use crate::toydata::LabelMap;

/// Anything that maps per-class style codes and masks to images.
pub trait SynthesisModel {
    fn classes(&self) -> usize;

    /// `(z_dim, z_size)` of one class block.
    fn latent_shape(&self) -> (usize, usize);

    /// Images `[N, 3, H, W]` in `[-1, 1]` for codes `[N, C * z_dim, s, s]`.
    fn generate(&self, codes: &Tensor<f64>, masks: &[LabelMap]) -> Result<Tensor<f64>>;

    /// Mean and log-variance maps for images `[N, 3, H, W]`.
    fn encode(&self, images: &Tensor<f64>, masks: &[LabelMap]) -> Result<(Tensor<f64>, Tensor<f64>)>;

    /// Deterministic code: the encoder's mean map.
    fn encode_mean(&self, images: &Tensor<f64>, masks: &[LabelMap]) -> Result<Tensor<f64>> {
        Ok(self.encode(images, masks)?.0)
    }
}

/// Reorder class blocks: `out[k] = code[order[k]]`, or the inverse.
fn permute_blocks(code: &Tensor<f64>, order: &[usize], inverse: bool) -> Result<Tensor<f64>> {
    let (n, d, h, w) = code.dims4()?;
    let per = d / order.len() * h * w;
    let mut out = code.clone();
    for b in 0..n {
        for (k, &c) in order.iter().enumerate() {
            let (dst, src) = if inverse { (c, k) } else { (k, c) };
            let base = b * d * h * w;
            out.data_mut()[base + dst * per..base + (dst + 1) * per]
                .copy_from_slice(&code.data()[base + src * per..base + (src + 1) * per]);
        }
    }
    Ok(out)
}

/// Codes are exchanged in class-id block order regardless of the configured channel order.
impl<T: Float> SynthesisModel for Networks<T> {
    fn classes(&self) -> usize {
        self.config.classes
    }

    fn latent_shape(&self) -> (usize, usize) {
        (self.config.z_dim, self.config.z_size)
    }

    fn generate(&self, codes: &Tensor<f64>, masks: &[LabelMap]) -> Result<Tensor<f64>> {
        let _guard = NoGradGuard::new();
        let onehot = self.label_tensor(masks)?;
        let codes = match &self.config.class_order {
            Some(order) => permute_blocks(codes, order, false)?,
            None => codes.clone(),
        };
        let out = self.generator.decode(&Var::constant(codes.cast()), &onehot, Mode::EVAL)?;
        let images = out.value().cast();
        Ok(images)
    }

    fn encode(&self, images: &Tensor<f64>, masks: &[LabelMap]) -> Result<(Tensor<f64>, Tensor<f64>)> {
        let _guard = NoGradGuard::new();
        let onehot = self.label_tensor(masks)?;
        let g = self.generator.encode(&Var::constant(images.cast()), &onehot, Mode::EVAL)?;
        let mean: Tensor<f64> = g.mean.value().cast();
        let logvar: Tensor<f64> = g.logvar.value().cast();
        match &self.config.class_order {
            Some(order) => Ok((permute_blocks(&mean, order, true)?, permute_blocks(&logvar, order, true)?)),
            None => Ok((mean, logvar)),
        }
    }
}
