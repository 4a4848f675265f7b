use rand::Rng;
use smis_tensor::ops::concat_channels;
use smis_tensor::{Float, Mode, Scope, Tensor, Var};

use crate::blocks::{CgNormOptions, GroupSchedule, LayerSpec};
use crate::error::{Result, SmisError};
use crate::networks::config::{EncoderInput, ModelConfig, VariantKind};
use crate::networks::decoder::{DecoderTrunk, OutputHead};
use crate::networks::encoder::{Encoder, EncoderSpec};
use crate::networks::style::GaussianMap;
use crate::toydata::split_by_class;

enum Body<T: Float> {
    Shared {
        encoder: Encoder<T>,
        trunk: DecoderTrunk<T>,
    },
    /// One encoder/decoder pair per class, fused at the output.
    PerClass {
        encoders: Vec<Encoder<T>>,
        trunks: Vec<DecoderTrunk<T>>,
    },
}

/// Encoder plus decoder of any variant.
pub struct Generator<T: Float> {
    classes: usize,
    z_dim: usize,
    body: Body<T>,
    pub head: OutputHead<T>,
}

impl<T: Float> Generator<T> {
    pub fn new(cfg: &ModelConfig, scope: &Scope<'_, T>, rng: &mut impl Rng) -> Result<Self> {
        let c = cfg.classes;
        let ups = cfg.upsamplings()?;
        let schedule = cfg.schedule()?;
        let fused = schedule.layers.last().map(|l| l.groups > 1).unwrap_or(false);
        let enc_scope = scope.sub("encoder");
        let dec_scope = scope.sub("decoder");
        let norm_opts = CgNormOptions {
            norm: cfg.norm,
            label_hidden: cfg.label_hidden,
        };
        let body = if cfg.variant == VariantKind::MulNet {
            let sub_sched = GroupSchedule {
                layers: schedule
                    .layers
                    .iter()
                    .map(|l| LayerSpec {
                        channels: l.channels / c,
                        groups: 1,
                    })
                    .collect(),
                classes: 1,
            };
            let sub_opts = CgNormOptions {
                label_hidden: cfg.label_hidden / c,
                ..norm_opts
            };
            let mut encoders = Vec::with_capacity(c);
            let mut trunks = Vec::with_capacity(c);
            for k in 0..c {
                let spec = EncoderSpec {
                    classes: 1,
                    channels: cfg.encoder_channels.iter().map(|w| w / c).collect(),
                    groups: 1,
                    z_dim: cfg.z_dim,
                    input: EncoderInput::Image,
                    spatial_map: cfg.spatial_map,
                    spectral: cfg.spectral,
                };
                encoders.push(Encoder::new(&enc_scope.sub(format!("sub{k}")), spec, rng)?);
            }
            for k in 0..c {
                trunks.push(DecoderTrunk::new(
                    &dec_scope.sub(format!("sub{k}")),
                    sub_sched.clone(),
                    cfg.z_dim,
                    ups,
                    sub_opts,
                    cfg.spectral,
                    rng,
                )?);
            }
            Body::PerClass { encoders, trunks }
        } else {
            let spec = EncoderSpec {
                classes: c,
                channels: cfg.encoder_channels.clone(),
                groups: cfg.encoder_groups,
                z_dim: cfg.z_dim,
                input: cfg.encoder_input(),
                spatial_map: cfg.spatial_map,
                spectral: cfg.spectral,
            };
            let encoder = Encoder::new(&enc_scope, spec, rng)?;
            let trunk = DecoderTrunk::new(&dec_scope, schedule.clone(), c * cfg.z_dim, ups, norm_opts, cfg.spectral, rng)?;
            Body::Shared { encoder, trunk }
        };
        let last = schedule.layers.last().map(|l| l.channels).unwrap_or(0);
        let head = OutputHead::new(
            &dec_scope.sub("out"),
            last,
            fused.then_some(cfg.fusion_channels),
            cfg.spectral,
            rng,
        )?;
        Ok(Generator {
            classes: c,
            z_dim: cfg.z_dim,
            body,
            head,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn encode(&self, image: &Var<T>, onehot: &Tensor<T>, mode: Mode) -> Result<GaussianMap<T>> {
        match &self.body {
            Body::Shared { encoder, .. } => encoder.forward(image, onehot, mode),
            Body::PerClass { encoders, .. } => {
                let split = split_by_class(image, onehot)?;
                let mut means = Vec::with_capacity(self.classes);
                let mut logvars = Vec::with_capacity(self.classes);
                for (k, enc) in encoders.iter().enumerate() {
                    let xk = split.slice_channels(3 * k, 3)?;
                    let g = enc.forward(&xk, &onehot.channel_slice(k, 1)?, mode)?;
                    means.push(g.mean);
                    logvars.push(g.logvar);
                }
                Ok(GaussianMap {
                    mean: concat_channels(&means)?,
                    logvar: concat_channels(&logvars)?,
                })
            }
        }
    }

    /// Decoder features before the output head (and before any fusing conv).
    pub fn features(&self, z: &Var<T>, onehot: &Tensor<T>, mode: Mode) -> Result<Var<T>> {
        let (_, zc, _, _) = z.value().dims4()?;
        if zc != self.classes * self.z_dim {
            return Err(SmisError::config(format!(
                "latent has {zc} channels, expected {} x {}",
                self.classes, self.z_dim
            )));
        }
        match &self.body {
            Body::Shared { trunk, .. } => trunk.forward(z, &Var::constant(onehot.clone()), mode),
            Body::PerClass { trunks, .. } => {
                let parts = trunks
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let zk = z.slice_channels(k * self.z_dim, self.z_dim)?;
                        t.forward(&zk, &Var::constant(onehot.channel_slice(k, 1)?), mode)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(concat_channels(&parts)?)
            }
        }
    }

    /// Image `[N, 3, H, W]` in `[-1, 1]`.
    pub fn decode(&self, z: &Var<T>, onehot: &Tensor<T>, mode: Mode) -> Result<Var<T>> {
        self.head.forward(&self.features(z, onehot, mode)?, mode)
    }
}
