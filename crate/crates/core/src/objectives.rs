//! Adversarial, feature-matching, perceptual and KL terms and their weighted sum.

use rand::Rng;
use serde::{Deserialize, Serialize};
use smis_tensor::ops::concat_batch;
use smis_tensor::{Float, Mode, NoGradGuard, Tensor, Var};

use crate::error::{Result, SmisError};
use crate::metrics::FeatureExtractor;
use crate::networks::{reparameterize, GaussianMap, Networks, ScaleOutput};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub feature_matching: f64,
    pub perceptual: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            feature_matching: 10.0,
            perceptual: 10.0,
            kl: 0.05,
        }
    }
}

/// Scalar values of every term of one step. Terms not computed by the
/// step that produced the report are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub gan_g: f64,
    pub gan_d: f64,
    pub fm: f64,
    pub perceptual: f64,
    pub kl: f64,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.gan_g, self.gan_d, self.fm, self.perceptual, self.kl, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn mean_of<T: Float>(terms: &[Var<T>]) -> Result<Var<T>> {
    let mut it = terms.iter();
    let first = it.next().ok_or_else(|| SmisError::invalid("mean of zero loss terms"))?;
    let mut acc = first.clone();
    for t in it {
        acc = acc.add(t)?;
    }
    Ok(acc.scale(1.0 / terms.len() as f64))
}

/// `mean_s [ mean(max(0, 1 - real_s)) + mean(max(0, 1 + fake_s)) ]`.
pub fn hinge_d_loss<T: Float>(real: &[Var<T>], fake: &[Var<T>]) -> Result<Var<T>> {
    if real.len() != fake.len() {
        return Err(SmisError::invalid(format!("{} real vs {} fake scales", real.len(), fake.len())));
    }
    let terms = real
        .iter()
        .zip(fake)
        .map(|(r, f)| {
            let lr = r.neg().add_scalar(1.0).relu().mean();
            let lf = f.add_scalar(1.0).relu().mean();
            lr.add(&lf)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    mean_of(&terms)
}

/// `-mean_s mean(fake_s)`.
pub fn hinge_g_loss<T: Float>(fake: &[Var<T>]) -> Result<Var<T>> {
    let terms: Vec<Var<T>> = fake.iter().map(|f| f.mean().neg()).collect();
    mean_of(&terms)
}

/// Uniform mean over scales and layers of the mean absolute difference.
/// Real features are detached.
pub fn feature_matching_loss<T: Float>(real: &[Vec<Var<T>>], fake: &[Vec<Var<T>>]) -> Result<Var<T>> {
    if real.len() != fake.len() {
        return Err(SmisError::invalid(format!("{} real vs {} fake scales", real.len(), fake.len())));
    }
    let mut terms = Vec::new();
    for (rs, fs) in real.iter().zip(fake) {
        if rs.len() != fs.len() {
            return Err(SmisError::invalid(format!("{} real vs {} fake layers", rs.len(), fs.len())));
        }
        for (r, f) in rs.iter().zip(fs) {
            if r.shape() != f.shape() {
                return Err(SmisError::invalid(format!("feature shapes {:?} vs {:?}", r.shape(), f.shape())));
            }
            terms.push(f.sub(&r.detach())?.abs().mean());
        }
    }
    mean_of(&terms)
}

/// Mean over extractor levels of the mean absolute feature difference.
pub fn perceptual_loss<T: Float>(real: &Var<T>, fake: &Var<T>, ex: &FeatureExtractor<T>) -> Result<Var<T>> {
    let fr = ex.forward(real)?;
    let ff = ex.forward(fake)?;
    let terms = fr
        .iter()
        .zip(&ff)
        .map(|(r, f)| Ok(f.sub(r)?.abs().mean()))
        .collect::<Result<Vec<_>>>()?;
    mean_of(&terms)
}

/// `0.5 * mean(mu^2 + exp(logvar) - logvar - 1)`.
pub fn kl_loss<T: Float>(g: &GaussianMap<T>) -> Result<Var<T>> {
    let inner = g.mean.square()?.add(&g.logvar.exp())?.sub(&g.logvar)?.add_scalar(-1.0);
    Ok(inner.mean().scale(0.5))
}

/// A batch of real images `[N, 3, H, W]` with their one-hot masks `[N, C, H, W]`.
pub struct Batch<T: Float> {
    pub images: Tensor<T>,
    pub onehot: Tensor<T>,
}

fn split_logits<T: Float>(outs: &[ScaleOutput<T>], n: usize) -> Result<(Vec<Var<T>>, Vec<Var<T>>)> {
    let mut fake = Vec::with_capacity(outs.len());
    let mut real = Vec::with_capacity(outs.len());
    for o in outs {
        fake.push(o.logits.slice_batch(0, n)?);
        real.push(o.logits.slice_batch(n, n)?);
    }
    Ok((fake, real))
}

fn doubled<T: Float>(onehot: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(Tensor::stack(&[onehot.clone(), onehot.clone()])?)
}

/// Discriminator hinge loss on `[fake; real]`; the fake is produced without a tape.
pub fn discriminator_objective<T: Float>(
    batch: &Batch<T>,
    nets: &Networks<T>,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Var<T>, LossReport)> {
    let n = batch.images.shape()[0];
    let real = Var::constant(batch.images.clone());
    let fake = {
        let _guard = NoGradGuard::new();
        let g = nets.generator.encode(&real, &batch.onehot, mode)?;
        let z = reparameterize(&g, rng)?;
        nets.generator.decode(&z, &batch.onehot, mode)?.detach()
    };
    let both = concat_batch(&[fake, real])?;
    let outs = nets.discriminator.forward(&both, &doubled(&batch.onehot)?, mode)?;
    let (fake_logits, real_logits) = split_logits(&outs, n)?;
    let loss = hinge_d_loss(&real_logits, &fake_logits)?;
    let v = loss.item().to_f64c();
    Ok((loss, LossReport { gan_d: v, total: v, ..Default::default() }))
}

/// Generator objective. The caller freezes the discriminator parameters.
pub fn generator_objective<T: Float>(
    batch: &Batch<T>,
    nets: &Networks<T>,
    weights: &LossWeights,
    ex: &FeatureExtractor<T>,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Var<T>, LossReport)> {
    let n = batch.images.shape()[0];
    let real = Var::constant(batch.images.clone());
    let g = nets.generator.encode(&real, &batch.onehot, mode)?;
    let z = reparameterize(&g, rng)?;
    let fake = nets.generator.decode(&z, &batch.onehot, mode)?;
    let both = concat_batch(&[fake.clone(), real.clone()])?;
    let outs = nets.discriminator.forward(&both, &doubled(&batch.onehot)?, mode)?;
    let (fake_logits, _) = split_logits(&outs, n)?;
    let mut fake_feats = Vec::with_capacity(outs.len());
    let mut real_feats = Vec::with_capacity(outs.len());
    for o in &outs {
        let f = o.features.iter().map(|v| v.slice_batch(0, n)).collect::<std::result::Result<Vec<_>, _>>()?;
        let r = o.features.iter().map(|v| v.slice_batch(n, n)).collect::<std::result::Result<Vec<_>, _>>()?;
        fake_feats.push(f);
        real_feats.push(r);
    }
    let gan_g = hinge_g_loss(&fake_logits)?;
    let fm = feature_matching_loss(&real_feats, &fake_feats)?;
    let perceptual = perceptual_loss(&real, &fake, ex)?;
    let kl = kl_loss(&g)?;
    let total = gan_g
        .add(&fm.scale(weights.feature_matching))?
        .add(&perceptual.scale(weights.perceptual))?
        .add(&kl.scale(weights.kl))?;
    let val = |v: &Var<T>| v.item().to_f64c();
    let report = LossReport {
        gan_g: val(&gan_g),
        gan_d: 0.0,
        fm: val(&fm),
        perceptual: val(&perceptual),
        kl: val(&kl),
        total: val(&total),
    };
    Ok((total, report))
}
