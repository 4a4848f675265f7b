use smis_tensor::Tensor;

use crate::error::{Result, SmisError};
use crate::metrics::model::SynthesisModel;
use crate::networks::LOGVAR_CLAMP;
use crate::toydata::{paint, ClassStyle, LabelMap};

/// Scene renderer driven by style codes: class `c` is painted from the
/// first three entries of `Z_c` and nothing else.
#[derive(Clone, Debug)]
pub struct RenderGenerator {
    pub classes: usize,
}

fn squash(z: f64) -> f64 {
    1.0 / (1.0 + (-1.702 * z).exp())
}

fn unsquash(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln() / 1.702
}

impl RenderGenerator {
    pub const Z_DIM: usize = 3;

    pub fn new(classes: usize) -> Self {
        RenderGenerator { classes }
    }

    pub fn style_of(block: &[f64]) -> ClassStyle {
        ClassStyle {
            hue: squash(block[0]),
            brightness: 0.35 + 0.65 * squash(block[1]),
            phase: std::f64::consts::TAU * squash(block[2]),
        }
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, max)
}

impl SynthesisModel for RenderGenerator {
    fn classes(&self) -> usize {
        self.classes
    }

    fn latent_shape(&self) -> (usize, usize) {
        (Self::Z_DIM, 1)
    }

    fn generate(&self, codes: &Tensor<f64>, masks: &[LabelMap]) -> Result<Tensor<f64>> {
        let (n, d, h, w) = codes.dims4()?;
        if n != masks.len() || d != self.classes * Self::Z_DIM {
            return Err(SmisError::invalid(format!("{n} codes of {d} channels for {} masks", masks.len())));
        }
        let per = d * h * w;
        let mut out = Vec::new();
        for (i, mask) in masks.iter().enumerate() {
            let styles: Vec<ClassStyle> = (0..self.classes)
                .map(|c| {
                    let base = i * per + c * Self::Z_DIM * h * w;
                    let block: Vec<f64> = (0..Self::Z_DIM).map(|k| codes.data()[base + k * h * w]).collect();
                    Self::style_of(&block)
                })
                .collect();
            out.extend(paint(mask, &styles));
        }
        let (mh, mw) = masks.first().map(|m| (m.height(), m.width())).unwrap_or((0, 0));
        Ok(Tensor::new(&[n, 3, mh, mw], out)?)
    }

    /// Hue and brightness recovered from each region's mean colour; phase is
    /// not recovered. The variance is zero.
    fn encode(&self, images: &Tensor<f64>, masks: &[LabelMap]) -> Result<(Tensor<f64>, Tensor<f64>)> {
        let (n, _, h, w) = images.dims4()?;
        let px = h * w;
        let mut out = vec![0.0; n * self.classes * Self::Z_DIM];
        for (i, mask) in masks.iter().enumerate().take(n) {
            for c in mask.present_classes() {
                let mut sum = [0.0; 3];
                let mut count = 0.0;
                for (p, &id) in mask.ids().iter().enumerate() {
                    if id as usize == c {
                        for (k, s) in sum.iter_mut().enumerate() {
                            *s += (images.data()[(i * 3 + k) * px + p] + 1.0) / 2.0;
                        }
                        count += 1.0;
                    }
                }
                let (hue, v) = rgb_to_hsv(sum[0] / count, sum[1] / count, sum[2] / count);
                let base = (i * self.classes + c) * Self::Z_DIM;
                out[base] = unsquash(hue);
                out[base + 1] = unsquash((v / 0.8 - 0.35) / 0.65);
            }
        }
        let shape = [n, self.classes * Self::Z_DIM, 1, 1];
        Ok((Tensor::new(&shape, out)?, Tensor::full(&shape, -LOGVAR_CLAMP)))
    }
}
