use rand::Rng;
use serde::{Deserialize, Serialize};
use smis_tensor::nn::{BatchNorm2d, Conv2d, ConvOptions, GroupNorm2d};
use smis_tensor::ops::resize_nearest;
use smis_tensor::{Float, Mode, Scope, Tensor, Var};

use crate::error::{Result, SmisError};

/// Normalization applied to the feature map before modulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Batch,
    /// Group normalization with the block's group count.
    Group,
    /// No normalization; modulation only.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CgNormOptions {
    pub norm: NormKind,
    /// Hidden width of the label pathway before rounding to the group count.
    pub label_hidden: usize,
}

impl Default for CgNormOptions {
    fn default() -> Self {
        CgNormOptions {
            norm: NormKind::Batch,
            label_hidden: 32,
        }
    }
}

enum Norm<T: Float> {
    Batch(BatchNorm2d<T>),
    Group(GroupNorm2d<T>),
    None,
}

pub fn label_hidden_width(requested: usize, groups: usize) -> usize {
    requested.max(groups).div_ceil(groups) * groups
}

/// Conditional group normalization: `gamma(M) * norm(F) + beta(M)` where the
/// pixel-wise `gamma`, `beta` come from the resized one-hot label through a
/// shared `G`-group conv and two parallel `G`-group convs.
pub struct CgNorm<T: Float> {
    groups: usize,
    norm: Norm<T>,
    pub shared: Conv2d<T>,
    pub gamma: Conv2d<T>,
    pub beta: Conv2d<T>,
}

impl<T: Float> CgNorm<T> {
    pub fn new(
        scope: &Scope<'_, T>,
        channels: usize,
        classes: usize,
        groups: usize,
        opts: CgNormOptions,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if groups == 0 || channels % groups != 0 || classes % groups != 0 {
            return Err(SmisError::config(format!(
                "{}: group mismatch between feature pathway ({channels} channels) and label pathway ({classes} classes) for {groups} groups",
                scope.prefix()
            )));
        }
        let hidden = label_hidden_width(opts.label_hidden, groups);
        let norm = match opts.norm {
            NormKind::Batch => Norm::Batch(BatchNorm2d::new(&scope.sub("norm"), channels)?),
            NormKind::Group => Norm::Group(GroupNorm2d::new(&scope.sub("norm"), channels, groups)?),
            NormKind::None => Norm::None,
        };
        let conv = ConvOptions {
            padding: 1,
            groups,
            ..Default::default()
        };
        let shared = Conv2d::new(&scope.sub("shared"), classes, hidden, 3, conv, rng)?;
        let gamma = Conv2d::new(&scope.sub("gamma"), hidden, channels, 3, conv, rng)?;
        let beta = Conv2d::new(&scope.sub("beta"), hidden, channels, 3, conv, rng)?;
        if let Some(b) = &gamma.bias {
            b.var().set_value(Tensor::ones(&[channels]))?;
        }
        Ok(CgNorm {
            groups,
            norm,
            shared,
            gamma,
            beta,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// `label` is `[N, C, H0, W0]`; it is nearest-resized to the feature size.
    pub fn forward(&self, x: &Var<T>, label: &Var<T>, mode: Mode) -> Result<Var<T>> {
        let (_, _, h, w) = x.value().dims4()?;
        let (_, _, lh, lw) = label.value().dims4()?;
        let label = if (lh, lw) == (h, w) {
            label.clone()
        } else {
            resize_nearest(label, h, w)?
        };
        let normalized = match &self.norm {
            Norm::Batch(bn) => bn.forward(x, mode)?,
            Norm::Group(gn) => gn.forward(x)?,
            Norm::None => x.clone(),
        };
        let hidden = self.shared.forward(&label, mode)?.relu();
        let gamma = self.gamma.forward(&hidden, mode)?;
        let beta = self.beta.forward(&hidden, mode)?;
        Ok(normalized.mul(&gamma)?.add(&beta)?)
    }
}
