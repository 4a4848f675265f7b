use rand::Rng;
use smis_tensor::nn::{Conv2d, ConvOptions};
use smis_tensor::ops::{instance_norm, resize_nearest, spatial_mean};
use smis_tensor::{Float, Mode, Scope, Tensor, Var};

use crate::error::{Result, SmisError};
use crate::networks::config::EncoderInput;
use crate::networks::style::{GaussianMap, LOGVAR_CLAMP};
use crate::toydata::{repeat_for_classes, split_by_class};

const IN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct EncoderSpec {
    pub classes: usize,
    pub channels: Vec<usize>,
    pub groups: usize,
    pub z_dim: usize,
    pub input: EncoderInput,
    pub spatial_map: bool,
    pub spectral: bool,
}

/// Stride-2 grouped convs with instance norm and leaky ReLU, then two parallel
/// grouped convs for the mean and log-variance maps.
pub struct Encoder<T: Float> {
    spec: EncoderSpec,
    convs: Vec<Conv2d<T>>,
    mean: Conv2d<T>,
    logvar: Conv2d<T>,
}

impl<T: Float> Encoder<T> {
    pub fn new(scope: &Scope<'_, T>, spec: EncoderSpec, rng: &mut impl Rng) -> Result<Self> {
        let g = spec.groups;
        let mut din = match spec.input {
            EncoderInput::Image => 3,
            EncoderInput::Split | EncoderInput::Repeat => 3 * spec.classes,
        };
        let mut convs = Vec::with_capacity(spec.channels.len());
        for (i, &dout) in spec.channels.iter().enumerate() {
            let opts = ConvOptions {
                stride: 2,
                padding: 1,
                groups: g,
                spectral: spec.spectral,
                ..Default::default()
            };
            convs.push(Conv2d::new(&scope.sub(format!("conv{i}")), din, dout, 3, opts, rng)?);
            din = dout;
        }
        let head = ConvOptions {
            padding: 1,
            groups: g,
            ..Default::default()
        };
        let zc = spec.classes * spec.z_dim;
        let mean = Conv2d::new(&scope.sub("mean"), din, zc, 3, head, rng)?;
        let logvar = Conv2d::new(&scope.sub("logvar"), din, zc, 3, head, rng)?;
        Ok(Encoder {
            spec,
            convs,
            mean,
            logvar,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    /// `image` is `[N, 3, H, W]`, `onehot` is `[N, C, H, W]`.
    pub fn forward(&self, image: &Var<T>, onehot: &Tensor<T>, mode: Mode) -> Result<GaussianMap<T>> {
        let (_, c, _, _) = onehot.dims4()?;
        if c != self.spec.classes {
            return Err(SmisError::invalid(format!(
                "encoder built for {} classes got a {c}-class mask",
                self.spec.classes
            )));
        }
        let mut x = match self.spec.input {
            EncoderInput::Image => image.clone(),
            EncoderInput::Split => split_by_class(image, onehot)?,
            EncoderInput::Repeat => repeat_for_classes(image, c)?,
        };
        for conv in &self.convs {
            x = instance_norm(&conv.forward(&x, mode)?, IN_EPS)?.leaky_relu(0.2);
        }
        let mut mean = self.mean.forward(&x, mode)?;
        let mut logvar = self.logvar.forward(&x, mode)?.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP);
        if !self.spec.spatial_map {
            let (_, _, h, w) = mean.value().dims4()?;
            mean = resize_nearest(&spatial_mean(&mean)?, h, w)?;
            logvar = resize_nearest(&spatial_mean(&logvar)?, h, w)?;
        }
        Ok(GaussianMap { mean, logvar })
    }
}
