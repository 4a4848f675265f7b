use smis_tensor::ops::concat_channels;
use smis_tensor::{Float, Tensor, Var};

use crate::error::{Result, SmisError};
use crate::toydata::LabelMap;

/// `[N, C, H, W]` binary encoding of a batch of label maps.
pub fn one_hot<T: Float>(masks: &[LabelMap], classes: usize) -> Result<Tensor<T>> {
    let first = masks.first().ok_or_else(|| SmisError::invalid("one_hot of an empty batch"))?;
    let (h, w) = (first.height(), first.width());
    let hw = h * w;
    let mut out = vec![T::zero(); masks.len() * classes * hw];
    for (n, m) in masks.iter().enumerate() {
        if (m.height(), m.width()) != (h, w) {
            return Err(SmisError::invalid("masks in a batch differ in size"));
        }
        for (i, &id) in m.ids().iter().enumerate() {
            let id = id as usize;
            if id >= classes {
                return Err(SmisError::invalid(format!("class id {id} >= class count {classes}")));
            }
            out[(n * classes + id) * hw + i] = T::one();
        }
    }
    Ok(Tensor::new(&[masks.len(), classes, h, w], out)?)
}

/// Per-pixel argmax over the class axis of a `[N, C, H, W]` tensor.
pub fn argmax_masks<T: Float>(t: &Tensor<T>) -> Result<Vec<LabelMap>> {
    let (n, c, h, w) = t.dims4()?;
    let hw = h * w;
    (0..n)
        .map(|b| {
            let ids = (0..hw)
                .map(|i| {
                    (0..c)
                        .max_by(|&x, &y| {
                            let (vx, vy) = (t.data()[(b * c + x) * hw + i], t.data()[(b * c + y) * hw + i]);
                            vx.partial_cmp(&vy).unwrap_or(std::cmp::Ordering::Equal)
                        })
                        .unwrap_or(0) as u8
                })
                .collect();
            LabelMap::new(h, w, c, ids)
        })
        .collect()
}

/// `[N, 3C, H, W]`: channel block `c` is the image multiplied by the class-`c`
/// indicator, so the blocks partition the image.
pub fn split_by_class<T: Float>(image: &Var<T>, onehot: &Tensor<T>) -> Result<Var<T>> {
    let (n, d, h, w) = image.value().dims4()?;
    let (mn, classes, mh, mw) = onehot.dims4()?;
    if (n, h, w) != (mn, mh, mw) {
        return Err(SmisError::invalid(format!(
            "image {:?} and mask {:?} disagree",
            image.shape(),
            onehot.shape()
        )));
    }
    let hw = h * w;
    let parts = (0..classes)
        .map(|c| {
            let m = Tensor::from_fn(&[n, d, h, w], |i| {
                let b = i / (d * hw);
                onehot.data()[(b * classes + c) * hw + i % hw]
            });
            image.mul(&Var::constant(m))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(concat_channels(&parts)?)
}

/// Ablation input: the full image repeated once per class.
pub fn repeat_for_classes<T: Float>(image: &Var<T>, classes: usize) -> Result<Var<T>> {
    let parts = vec![image.clone(); classes];
    Ok(concat_channels(&parts)?)
}
