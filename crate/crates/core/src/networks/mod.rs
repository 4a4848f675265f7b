//! Encoder, decoder and discriminator, and the architecture variants built
//! from them.

mod config;
mod decoder;
mod discriminator;
mod encoder;
mod generator;
mod style;
mod transport;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smis_tensor::{Float, ParamStore, Tensor};

pub use config::{EncoderInput, ModelConfig, VariantKind};
pub use decoder::{DecoderTrunk, OutputHead};
pub use discriminator::{Discriminator, ScaleOutput};
pub use encoder::{Encoder, EncoderSpec};
pub use generator::Generator;
pub use transport::{grouped_source, leading_chunk, transport_groupnet_to_mulnet};
pub use style::{reparameterize, reparameterize_with, GaussianMap, StyleCode, LOGVAR_CLAMP};

use crate::error::{Result, SmisError};
use crate::toydata::{one_hot, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub encoder: usize,
    pub decoder: usize,
    pub discriminator: usize,
}

impl ParamCounts {
    pub fn generator(&self) -> usize {
        self.encoder + self.decoder
    }
}

/// Generator and discriminator with their parameter registries.
pub struct Networks<T: Float> {
    pub config: ModelConfig,
    pub gen_store: ParamStore<T>,
    pub disc_store: ParamStore<T>,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
}

/// Construct the variant described by `cfg`.
pub fn build_variant<T: Float>(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Networks<T>> {
    cfg.validate()?;
    let gen_store = ParamStore::new();
    let disc_store = ParamStore::new();
    let generator = Generator::new(cfg, &gen_store.root(), rng)?;
    let discriminator = Discriminator::new(
        &disc_store.root().sub("disc"),
        cfg.classes,
        cfg.disc_channels,
        cfg.disc_scales,
        cfg.spectral,
        rng,
    )?;
    Ok(Networks {
        config: cfg.clone(),
        gen_store,
        disc_store,
        generator,
        discriminator,
    })
}

impl<T: Float> Networks<T> {
    pub fn param_counts(&self) -> ParamCounts {
        let count = |prefix: &str| {
            self.gen_store
                .params()
                .iter()
                .filter(|p| p.name().starts_with(prefix))
                .map(|p| p.numel())
                .sum()
        };
        ParamCounts {
            encoder: count("encoder."),
            decoder: count("decoder."),
            discriminator: self.disc_store.param_count(),
        }
    }

    /// One-hot `[N, C, H, W]` with channels in the configured class order.
    pub fn label_tensor(&self, masks: &[LabelMap]) -> Result<Tensor<T>> {
        let raw = one_hot::<T>(masks, self.config.classes)?;
        match &self.config.class_order {
            None => Ok(raw),
            Some(order) => {
                let (n, c, h, w) = raw.dims4()?;
                let hw = h * w;
                Ok(Tensor::from_fn(&[n, c, h, w], |i| {
                    let (b, k, p) = (i / (c * hw), (i / hw) % c, i % hw);
                    raw.data()[(b * c + order[k]) * hw + p]
                }))
            }
        }
    }

    /// Latent block index that controls `class`.
    pub fn block_of_class(&self, class: usize) -> Result<usize> {
        self.config
            .class_order()
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| SmisError::invalid(format!("class {class} out of range")))
    }
}
