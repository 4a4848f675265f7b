//! Latent-code applications: class sweeps, appearance mixture, style
//! morphing and mask editing.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use smis_tensor::Tensor;

use crate::error::{Result, SmisError};
use crate::metrics::{normal_tensor, SynthesisModel};
use crate::toydata::{scene_seed, LabelMap};

const SWEEP_BASE: u64 = 0;
const SWEEP_CLASS: u64 = 1;
const SWEEP_FULL: u64 = 2;

/// Stack equally shaped tensors along a new leading axis.
pub fn batch(items: &[Tensor<f64>]) -> Result<Tensor<f64>> {
    let with_axis: Vec<Tensor<f64>> = items
        .iter()
        .map(|t| {
            let mut shape = vec![1];
            shape.extend_from_slice(t.shape());
            t.clone().reshape(&shape)
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(Tensor::stack(&with_axis)?)
}

fn check_class(mask: &LabelMap, class: usize) -> Result<()> {
    let present = mask.present_classes();
    if present.contains(&class) {
        Ok(())
    } else {
        Err(SmisError::invalid(format!(
            "class {class} is absent from the mask; available classes: {present:?}"
        )))
    }
}

/// Two rows of `k` images on one mask: the first resamples only `Z_class`,
/// the second resamples every block.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub class_row: Tensor<f64>,
    pub full_row: Tensor<f64>,
}

pub fn sweep(model: &dyn SynthesisModel, mask: &LabelMap, class: usize, k: usize, seed: u64) -> Result<Sweep> {
    if k == 0 {
        return Err(SmisError::invalid("sweep needs k >= 1"));
    }
    check_class(mask, class)?;
    let (zd, zs) = model.latent_shape();
    let shape = [model.classes() * zd, zs, zs];
    let block = zd * zs * zs;
    let base = normal_tensor(&shape, scene_seed(seed, SWEEP_BASE));
    let class_codes: Vec<Tensor<f64>> = (0..k)
        .map(|i| {
            let mut z = base.clone();
            let fresh = normal_tensor(&[block], scene_seed(scene_seed(seed, SWEEP_CLASS), i as u64));
            z.data_mut()[class * block..(class + 1) * block].copy_from_slice(fresh.data());
            z
        })
        .collect();
    let full_codes: Vec<Tensor<f64>> = (0..k)
        .map(|i| normal_tensor(&shape, scene_seed(scene_seed(seed, SWEEP_FULL), i as u64)))
        .collect();
    let masks = vec![mask.clone(); k];
    Ok(Sweep {
        class_row: model.generate(&batch(&class_codes)?, &masks)?,
        full_row: model.generate(&batch(&full_codes)?, &masks)?,
    })
}

/// A source scene: `[3, H, W]` image and its mask.
#[derive(Clone, Debug)]
pub struct Source {
    pub image: Tensor<f64>,
    pub mask: LabelMap,
}

/// Encode every source with mean maps and decode against `target`, taking
/// block `c` from source `assignment[c]`.
pub fn mix(model: &dyn SynthesisModel, sources: &[Source], assignment: &[usize], target: &LabelMap) -> Result<Tensor<f64>> {
    let classes = model.classes();
    if assignment.len() != classes {
        return Err(SmisError::invalid(format!(
            "assignment covers {} classes, model has {classes}",
            assignment.len()
        )));
    }
    for c in target.present_classes() {
        let s = assignment[c];
        let src = sources
            .get(s)
            .ok_or_else(|| SmisError::invalid(format!("class {c} assigned to missing source {s}")))?;
        if !src.mask.present_classes().contains(&c) {
            return Err(SmisError::invalid(format!("class {c} is absent from source {s}")));
        }
    }
    let images: Vec<Tensor<f64>> = sources.iter().map(|s| s.image.clone()).collect();
    let masks: Vec<LabelMap> = sources.iter().map(|s| s.mask.clone()).collect();
    let codes = model.encode_mean(&batch(&images)?, &masks)?;
    let (_, d, h, w) = codes.dims4()?;
    let per = d / classes * h * w;
    let mut z = Tensor::zeros(&[1, d, h, w]);
    for (c, &s) in assignment.iter().enumerate() {
        if s < sources.len() {
            let from = s * d * h * w + c * per;
            z.data_mut()[c * per..(c + 1) * per].copy_from_slice(&codes.data()[from..from + per]);
        }
    }
    model.generate(&z, std::slice::from_ref(target))
}

/// `steps` decodes on `target` along `(1 - t) Z_a + t Z_b`. Codes are mean
/// maps unless `sample_seed` is given, in which case they are drawn from the
/// encoder's Gaussians.
pub fn morph(
    model: &dyn SynthesisModel,
    a: &Source,
    b: &Source,
    target: &LabelMap,
    steps: usize,
    sample_seed: Option<u64>,
) -> Result<Tensor<f64>> {
    if steps < 2 {
        return Err(SmisError::invalid("morph needs at least 2 steps"));
    }
    let images = batch(&[a.image.clone(), b.image.clone()])?;
    let (mean, logvar) = model.encode(&images, &[a.mask.clone(), b.mask.clone()])?;
    let codes = match sample_seed {
        None => mean,
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut z = mean.clone();
            for (x, lv) in z.data_mut().iter_mut().zip(logvar.data()) {
                let eps: f64 = StandardNormal.sample(&mut rng);
                *x += (0.5 * lv).exp() * eps;
            }
            z
        }
    };
    let (za, zb) = (codes.sample(0)?, codes.sample(1)?);
    let path: Vec<Tensor<f64>> = (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            za.zip_map(&zb, |x, y| (1.0 - t) * x + t * y)
        })
        .collect::<std::result::Result<_, _>>()?;
    model.generate(&Tensor::stack(&path)?, &vec![target.clone(); steps])
}

/// Pixels to relabel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionSpec {
    /// Half-open rectangle `[x, x + width) x [y, y + height)`.
    Rect { x: usize, y: usize, width: usize, height: usize },
    Class(usize),
    All,
}

impl FromStr for RegionSpec {
    type Err = SmisError;

    /// `all`, `class:K` or `rect:X,Y,W,H`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || SmisError::invalid(format!("region `{s}`: expected all, class:K or rect:X,Y,W,H"));
        if s == "all" {
            return Ok(RegionSpec::All);
        }
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<usize> = args
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match (kind, nums.as_slice()) {
            ("class", [k]) => Ok(RegionSpec::Class(*k)),
            ("rect", [x, y, w, h]) => Ok(RegionSpec::Rect { x: *x, y: *y, width: *w, height: *h }),
            _ => Err(bad()),
        }
    }
}

pub fn edit_mask(mask: &LabelMap, region: &RegionSpec, new_class: usize) -> Result<LabelMap> {
    if new_class >= mask.classes() {
        return Err(SmisError::invalid(format!(
            "class {new_class} out of range for {} classes",
            mask.classes()
        )));
    }
    let (h, w) = (mask.height(), mask.width());
    let mut ids = mask.ids().to_vec();
    match *region {
        RegionSpec::All => ids.fill(new_class as u8),
        RegionSpec::Class(k) => {
            if k >= mask.classes() {
                return Err(SmisError::invalid(format!("class {k} out of range for {} classes", mask.classes())));
            }
            for id in ids.iter_mut().filter(|id| **id as usize == k) {
                *id = new_class as u8;
            }
        }
        RegionSpec::Rect { x, y, width, height } => {
            if x + width > w || y + height > h {
                return Err(SmisError::invalid(format!(
                    "rectangle {width}x{height} at ({x}, {y}) exceeds the {w}x{h} mask"
                )));
            }
            for row in y..y + height {
                ids[row * w + x..row * w + x + width].fill(new_class as u8);
            }
        }
    }
    LabelMap::new(h, w, mask.classes(), ids)
}
