use serde::{Deserialize, Serialize};

use crate::blocks::{validate_schedule, GroupSchedule, NormKind, ViolationKind};
use crate::error::{Result, SmisError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    GroupDNet,
    GroupNet,
    MulNet,
    GroupEnc,
    GroupDec,
    #[serde(rename = "vspade")]
    VSpade,
}

impl VariantKind {
    pub const ALL: [VariantKind; 6] = [
        VariantKind::GroupDNet,
        VariantKind::GroupNet,
        VariantKind::MulNet,
        VariantKind::GroupEnc,
        VariantKind::GroupDec,
        VariantKind::VSpade,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::GroupDNet => "groupdnet",
            VariantKind::GroupNet => "groupnet",
            VariantKind::MulNet => "mulnet",
            VariantKind::GroupEnc => "groupenc",
            VariantKind::GroupDec => "groupdec",
            VariantKind::VSpade => "vspade",
        }
    }
}

/// What the encoder sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderInput {
    /// Per-class masked copies of the image, `3C` channels.
    Split,
    /// The unmasked image repeated `C` times (no-split ablation).
    Repeat,
    /// The plain 3-channel image.
    Image,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: VariantKind,
    pub classes: usize,
    pub image_size: usize,
    /// Latent channels per class.
    pub z_dim: usize,
    /// Spatial side of the latent map.
    pub z_size: usize,
    /// Widths of the stride-2 encoder convolutions.
    pub encoder_channels: Vec<usize>,
    pub encoder_groups: usize,
    /// Defaults to `split` when `encoder_groups > 1`, `image` otherwise.
    #[serde(default)]
    pub encoder_input: Option<EncoderInput>,
    /// `false` collapses the mean/variance maps to per-channel vectors.
    #[serde(default = "yes")]
    pub spatial_map: bool,
    /// One entry per decoder layer, or a shorter list whose last entry repeats.
    pub decoder_channels: Vec<usize>,
    pub decoder_groups: Vec<usize>,
    /// Width of the fusing convolution used when the last decoder layer is grouped.
    #[serde(default = "default_fusion")]
    pub fusion_channels: usize,
    #[serde(default = "default_label_hidden")]
    pub label_hidden: usize,
    #[serde(default)]
    pub norm: NormKind,
    #[serde(default = "yes")]
    pub spectral: bool,
    #[serde(default = "default_disc_channels")]
    pub disc_channels: usize,
    #[serde(default = "default_disc_scales")]
    pub disc_scales: usize,
    /// Channel order of the classes; identity when absent.
    #[serde(default)]
    pub class_order: Option<Vec<usize>>,
}

fn yes() -> bool {
    true
}
fn default_fusion() -> usize {
    16
}
fn default_label_hidden() -> usize {
    32
}
fn default_disc_channels() -> usize {
    32
}
fn default_disc_scales() -> usize {
    2
}

impl ModelConfig {
    /// Small GroupDNet at 64x64 with 8 classes.
    pub fn toy() -> Self {
        ModelConfig {
            variant: VariantKind::GroupDNet,
            classes: 8,
            image_size: 64,
            z_dim: 8,
            z_size: 4,
            encoder_channels: vec![64; 4],
            encoder_groups: 8,
            encoder_input: None,
            spatial_map: true,
            decoder_channels: vec![160],
            decoder_groups: vec![8, 8, 4, 4, 2, 2, 1],
            fusion_channels: 16,
            label_hidden: 32,
            norm: NormKind::Batch,
            spectral: true,
            disc_channels: 32,
            disc_scales: 2,
            class_order: None,
        }
    }

    /// A tiny network for exact structural tests.
    pub fn micro(variant: VariantKind, classes: usize) -> Self {
        let c = classes;
        let (eg, dg) = match variant {
            VariantKind::GroupDNet => (c, decreasing(c, 3)),
            VariantKind::GroupNet | VariantKind::MulNet => (c, vec![c; 3]),
            VariantKind::GroupEnc => (c, vec![1; 3]),
            VariantKind::GroupDec => (1, vec![c; 3]),
            VariantKind::VSpade => (1, vec![1; 3]),
        };
        ModelConfig {
            variant,
            classes: c,
            image_size: 8,
            z_dim: 2,
            z_size: 2,
            encoder_channels: vec![2 * c, 2 * c],
            encoder_groups: eg,
            encoder_input: None,
            spatial_map: true,
            decoder_channels: vec![2 * c],
            decoder_groups: dg,
            fusion_channels: 4,
            label_hidden: c,
            norm: NormKind::Batch,
            spectral: true,
            disc_channels: 4,
            disc_scales: 2,
            class_order: None,
        }
    }

    pub fn schedule(&self) -> Result<GroupSchedule> {
        GroupSchedule::from_lists(&self.decoder_channels, &self.decoder_groups, self.classes)
    }

    pub fn encoder_input(&self) -> EncoderInput {
        self.encoder_input.unwrap_or(if self.encoder_groups > 1 {
            EncoderInput::Split
        } else {
            EncoderInput::Image
        })
    }

    /// Number of x2 upsamplings between the latent map and the image.
    pub fn upsamplings(&self) -> Result<usize> {
        if self.z_size == 0 || self.image_size % self.z_size != 0 || !(self.image_size / self.z_size).is_power_of_two() {
            return Err(SmisError::config(format!(
                "image_size {} is not z_size {} times a power of two",
                self.image_size, self.z_size
            )));
        }
        Ok((self.image_size / self.z_size).trailing_zeros() as usize)
    }

    pub fn class_order(&self) -> Vec<usize> {
        self.class_order.clone().unwrap_or_else(|| (0..self.classes).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.classes;
        if c == 0 || c > 255 {
            return Err(SmisError::config(format!("class count {c} out of range")));
        }
        let l = self.upsamplings()?;
        if self.encoder_channels.len() != l {
            return Err(SmisError::config(format!(
                "encoder needs {l} stride-2 layers to reach {}x{}, got {}",
                self.z_size,
                self.z_size,
                self.encoder_channels.len()
            )));
        }
        if self.decoder_groups.len() < l + 1 {
            return Err(SmisError::config(format!(
                "decoder needs at least {} layers for {l} upsamplings",
                l + 1
            )));
        }
        if let Some(order) = &self.class_order {
            let mut seen = order.clone();
            seen.sort_unstable();
            if seen != (0..c).collect::<Vec<_>>() {
                return Err(SmisError::config("class_order must be a permutation of 0..classes"));
            }
        }
        let sched = self.schedule()?;
        let rep = validate_schedule(&sched);
        for v in &rep.violations {
            if v.kind != ViolationKind::FinalGroupNotOne {
                return Err(SmisError::config(format!("decoder schedule: {}", v.message)));
            }
        }
        let eg = self.encoder_groups;
        let dg = &self.decoder_groups;
        let all = |g: usize| dg.iter().all(|&x| x == g);
        let ok = match self.variant {
            VariantKind::GroupDNet => rep.is_ok(),
            VariantKind::GroupNet | VariantKind::MulNet => eg == c && all(c),
            VariantKind::GroupEnc => all(1),
            VariantKind::GroupDec => eg == 1,
            VariantKind::VSpade => eg == 1 && all(1),
        };
        if !ok {
            return Err(SmisError::config(format!(
                "{} variant does not allow encoder groups {eg} with decoder groups {dg:?}",
                self.variant.name()
            )));
        }
        if self.variant == VariantKind::MulNet {
            let widths = self.encoder_channels.iter().chain(&self.decoder_channels);
            if widths.clone().any(|w| w % c != 0) || self.label_hidden % c != 0 {
                return Err(SmisError::config("mulnet widths must be divisible by the class count"));
            }
        }
        if self.encoder_input() == EncoderInput::Image && eg != 1 {
            return Err(SmisError::config("a 3-channel encoder input needs encoder_groups = 1"));
        }
        for (i, &w) in self.encoder_channels.iter().enumerate() {
            if w % eg != 0 {
                return Err(SmisError::config(format!("encoder layer {i}: {w} channels not divisible by {eg} groups")));
            }
        }
        if (c * self.z_dim) % eg != 0 || (c * self.z_dim) % dg[0] != 0 {
            return Err(SmisError::config("latent channels must be divisible by encoder and head groups"));
        }
        Ok(())
    }
}

fn decreasing(c: usize, len: usize) -> Vec<usize> {
    let mut g = vec![c; len];
    for (i, x) in g.iter_mut().enumerate().skip(1) {
        *x = (c >> i).max(1);
    }
    g[len - 1] = 1;
    g
}
