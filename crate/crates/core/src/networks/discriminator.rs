use rand::Rng;
use smis_tensor::nn::{Conv2d, ConvOptions};
use smis_tensor::ops::{avg_pool, concat_channels, instance_norm};
use smis_tensor::{Float, Mode, Scope, Tensor, Var};

use crate::error::Result;

const LAYERS: usize = 4;

/// Intermediate activations and patch logits of one scale.
pub struct ScaleOutput<T: Float> {
    pub features: Vec<Var<T>>,
    pub logits: Var<T>,
}

struct Scale<T: Float> {
    convs: Vec<Conv2d<T>>,
    logits: Conv2d<T>,
}

/// Multi-scale patch discriminator on `concat(image, one-hot)`. Each scale has
/// four k4/s2/p2 convs (instance norm after all but the first, leaky ReLU)
/// and a k4/s1/p2 logit conv; scale `s+1` sees the 2x average-pooled input.
pub struct Discriminator<T: Float> {
    scales: Vec<Scale<T>>,
}

impl<T: Float> Discriminator<T> {
    pub fn new(
        scope: &Scope<'_, T>,
        classes: usize,
        width: usize,
        scales: usize,
        spectral: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let opts = |stride| ConvOptions {
            stride,
            padding: 2,
            spectral,
            ..Default::default()
        };
        let scales = (0..scales)
            .map(|s| {
                let sc = scope.sub(format!("scale{s}"));
                let mut din = 3 + classes;
                let mut convs = Vec::with_capacity(LAYERS);
                for i in 0..LAYERS {
                    let dout = width << i;
                    convs.push(Conv2d::new(&sc.sub(format!("conv{i}")), din, dout, 4, opts(2), rng)?);
                    din = dout;
                }
                let logits = Conv2d::new(&sc.sub("logits"), din, 1, 4, opts(1), rng)?;
                Ok(Scale { convs, logits })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Discriminator { scales })
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    /// The conditioned input of every scale.
    pub fn scale_inputs(&self, image: &Var<T>, onehot: &Tensor<T>) -> Result<Vec<Var<T>>> {
        let mut x = concat_channels(&[image.clone(), Var::constant(onehot.clone())])?;
        let mut out = Vec::with_capacity(self.scales.len());
        for s in 0..self.scales.len() {
            if s > 0 {
                x = avg_pool(&x, 2)?;
            }
            out.push(x.clone());
        }
        Ok(out)
    }

    pub fn forward(&self, image: &Var<T>, onehot: &Tensor<T>, mode: Mode) -> Result<Vec<ScaleOutput<T>>> {
        let inputs = self.scale_inputs(image, onehot)?;
        self.scales
            .iter()
            .zip(inputs)
            .map(|(scale, mut x)| {
                let mut features = Vec::with_capacity(LAYERS);
                for (i, conv) in scale.convs.iter().enumerate() {
                    x = conv.forward(&x, mode)?;
                    if i > 0 {
                        x = instance_norm(&x, 1e-5)?;
                    }
                    x = x.leaky_relu(0.2);
                    features.push(x.clone());
                }
                let logits = scale.logits.forward(&x, mode)?;
                Ok(ScaleOutput { features, logits })
            })
            .collect()
    }
}
