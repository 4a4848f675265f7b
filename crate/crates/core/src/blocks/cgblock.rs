use rand::Rng;
use smis_tensor::nn::{Conv2d, ConvOptions};
use smis_tensor::{Float, Mode, Scope, Tensor, Var};

use crate::blocks::{CgNorm, CgNormOptions, LayerSpec};
use crate::error::{Result, SmisError};

/// Residual block of CG-Norms and group convolutions.
///
/// Main path: `cgnorm(G) -> relu -> conv3x3(G) -> cgnorm(G) -> relu -> conv3x3(G')`
/// with a middle width of `min(D, D')`. The skip path is the identity when the
/// specs match and `cgnorm(G) -> conv1x1(G')` otherwise.
pub struct CgBlock<T: Float> {
    pub in_spec: LayerSpec,
    pub out_spec: LayerSpec,
    pub norm0: CgNorm<T>,
    pub conv0: Conv2d<T>,
    pub norm1: CgNorm<T>,
    pub conv1: Conv2d<T>,
    pub skip: Option<(CgNorm<T>, Conv2d<T>)>,
}

impl<T: Float> CgBlock<T> {
    pub fn new(
        scope: &Scope<'_, T>,
        in_spec: LayerSpec,
        out_spec: LayerSpec,
        classes: usize,
        opts: CgNormOptions,
        spectral: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (d, g) = (in_spec.channels, in_spec.groups);
        let (d2, g2) = (out_spec.channels, out_spec.groups);
        let mid = d.min(d2);
        let bad = g == 0 || g2 == 0 || g2 > g || d % g != 0 || d2 % g2 != 0 || mid % g != 0 || mid % g2 != 0;
        if bad {
            return Err(SmisError::config(format!(
                "{}: incompatible group transition {in_spec} -> {out_spec}",
                scope.prefix()
            )));
        }
        let conv = |groups: usize, padding: usize, bias: bool| ConvOptions {
            padding,
            groups,
            bias,
            spectral,
            ..Default::default()
        };
        let norm0 = CgNorm::new(&scope.sub("norm0"), d, classes, g, opts, rng)?;
        let conv0 = Conv2d::new(&scope.sub("conv0"), d, mid, 3, conv(g, 1, true), rng)?;
        let norm1 = CgNorm::new(&scope.sub("norm1"), mid, classes, g, opts, rng)?;
        let conv1 = Conv2d::new(&scope.sub("conv1"), mid, d2, 3, conv(g2, 1, true), rng)?;
        let skip = if in_spec == out_spec {
            None
        } else {
            Some((
                CgNorm::new(&scope.sub("norm_skip"), d, classes, g, opts, rng)?,
                Conv2d::new(&scope.sub("conv_skip"), d, d2, 1, conv(g2, 0, false), rng)?,
            ))
        };
        Ok(CgBlock {
            in_spec,
            out_spec,
            norm0,
            conv0,
            norm1,
            conv1,
            skip,
        })
    }

    pub fn forward(&self, x: &Var<T>, label: &Var<T>, mode: Mode) -> Result<Var<T>> {
        let h = self.norm0.forward(x, label, mode)?.relu();
        let h = self.conv0.forward(&h, mode)?;
        let h = self.norm1.forward(&h, label, mode)?.relu();
        let h = self.conv1.forward(&h, mode)?;
        let s = match &self.skip {
            None => x.clone(),
            Some((norm, conv)) => conv.forward(&norm.forward(x, label, mode)?, mode)?,
        };
        Ok(h.add(&s)?)
    }

    /// Zero the last main-path convolution so the block starts as its skip path.
    pub fn zero_main_output(&self) -> Result<()> {
        let w = &self.conv1.weight;
        w.var().set_value(Tensor::zeros(&w.shape()))?;
        if let Some(b) = &self.conv1.bias {
            b.var().set_value(Tensor::zeros(&b.shape()))?;
        }
        Ok(())
    }
}
