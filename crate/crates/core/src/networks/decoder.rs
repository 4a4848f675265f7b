use rand::Rng;
use smis_tensor::nn::{Conv2d, ConvOptions};
use smis_tensor::ops::upsample_nearest;
use smis_tensor::{Float, Mode, Scope, Var};

use crate::blocks::{CgBlock, CgNormOptions, GroupSchedule};
use crate::error::{Result, SmisError};

/// Head conv on the latent map followed by CG-Blocks; the last
/// `upsamplings` blocks are each preceded by a x2 nearest upsampling.
pub struct DecoderTrunk<T: Float> {
    schedule: GroupSchedule,
    latent_channels: usize,
    upsamplings: usize,
    pub head: Conv2d<T>,
    pub blocks: Vec<CgBlock<T>>,
}

impl<T: Float> DecoderTrunk<T> {
    pub fn new(
        scope: &Scope<'_, T>,
        schedule: GroupSchedule,
        latent_channels: usize,
        upsamplings: usize,
        opts: CgNormOptions,
        spectral: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let layers = &schedule.layers;
        if layers.is_empty() || upsamplings > layers.len() - 1 {
            return Err(SmisError::config(format!(
                "{} decoder layers cannot hold {upsamplings} upsamplings",
                layers.len()
            )));
        }
        let head = Conv2d::new(
            &scope.sub("head"),
            latent_channels,
            layers[0].channels,
            3,
            ConvOptions {
                padding: 1,
                groups: layers[0].groups,
                spectral,
                ..Default::default()
            },
            rng,
        )?;
        let blocks = layers
            .windows(2)
            .enumerate()
            .map(|(i, w)| CgBlock::new(&scope.sub(format!("block{i}")), w[0], w[1], schedule.classes, opts, spectral, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecoderTrunk {
            schedule,
            latent_channels,
            upsamplings,
            head,
            blocks,
        })
    }

    pub fn schedule(&self) -> &GroupSchedule {
        &self.schedule
    }

    pub fn out_channels(&self) -> usize {
        self.schedule.layers.last().map(|l| l.channels).unwrap_or(0)
    }

    /// Features after the last CG-Block; `label` is the `[N, C, H, W]` one-hot.
    pub fn forward(&self, z: &Var<T>, label: &Var<T>, mode: Mode) -> Result<Var<T>> {
        let zc = z.value().dims4()?.1;
        if zc != self.latent_channels {
            return Err(SmisError::config(format!(
                "decoder expects {} latent channels, got {zc}",
                self.latent_channels
            )));
        }
        let mut x = self.head.forward(z, mode)?;
        let first_up = self.blocks.len() - self.upsamplings;
        for (i, block) in self.blocks.iter().enumerate() {
            if i >= first_up {
                x = upsample_nearest(&x, 2)?;
            }
            x = block.forward(&x, label, mode)?;
        }
        Ok(x)
    }
}

/// Maps decoder features to RGB: `lrelu -> [conv3x3 -> lrelu] -> conv3x3 -> tanh`,
/// where the bracketed fusing conv is present when the features are grouped.
pub struct OutputHead<T: Float> {
    pub fusion: Option<Conv2d<T>>,
    pub out: Conv2d<T>,
}

impl<T: Float> OutputHead<T> {
    pub fn new(
        scope: &Scope<'_, T>,
        channels: usize,
        fusion_channels: Option<usize>,
        spectral: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let opts = ConvOptions {
            padding: 1,
            spectral,
            ..Default::default()
        };
        let (fusion, din) = match fusion_channels {
            Some(f) => (Some(Conv2d::new(&scope.sub("fusion"), channels, f, 3, opts, rng)?), f),
            None => (None, channels),
        };
        let out = Conv2d::new(&scope.sub("rgb"), din, 3, 3, opts, rng)?;
        Ok(OutputHead { fusion, out })
    }

    pub fn forward(&self, features: &Var<T>, mode: Mode) -> Result<Var<T>> {
        let mut x = features.leaky_relu(0.2);
        if let Some(f) = &self.fusion {
            x = f.forward(&x, mode)?.leaky_relu(0.2);
        }
        Ok(self.out.forward(&x, mode)?.tanh())
    }
}
