//! Weight transport from an all-grouped network to its per-class twin.

use smis_tensor::{Float, Tensor};

use crate::error::{Result, SmisError};
use crate::networks::{Networks, VariantKind};

/// For a per-class parameter name such as `decoder.sub3.block0.conv1.weight`,
/// the grouped counterpart `decoder.block0.conv1.weight` and the class `3`.
pub fn grouped_source(name: &str) -> Option<(String, usize)> {
    let parts: Vec<&str> = name.split('.').collect();
    let pos = parts.iter().position(|p| p.starts_with("sub") && p[3..].parse::<usize>().is_ok())?;
    let k = parts[pos][3..].parse().ok()?;
    let mut rest = parts.clone();
    rest.remove(pos);
    Some((rest.join("."), k))
}

/// Chunk `k` of `parts` equal pieces along the leading axis.
pub fn leading_chunk<T: Float>(t: &Tensor<T>, parts: usize, k: usize) -> Result<Tensor<T>> {
    let lead = *t.shape().first().unwrap_or(&1);
    if parts == 0 || lead % parts != 0 {
        return Err(SmisError::invalid(format!("cannot split {:?} into {parts} pieces", t.shape())));
    }
    let mut shape = t.shape().to_vec();
    shape[0] = lead / parts;
    let per = t.numel() / parts;
    Ok(Tensor::new(&shape, t.data()[k * per..(k + 1) * per].to_vec())?)
}

fn chunk<T: Copy>(v: &[T], parts: usize, k: usize) -> Vec<T> {
    let per = v.len() / parts;
    v[k * per..(k + 1) * per].to_vec()
}

/// Copy a GroupNet generator into a MulNet generator of matching widths:
/// weights, biases, normalization statistics and power-iteration vectors.
pub fn transport_groupnet_to_mulnet<T: Float>(src: &Networks<T>, dst: &Networks<T>) -> Result<()> {
    if src.config.variant != VariantKind::GroupNet || dst.config.variant != VariantKind::MulNet {
        return Err(SmisError::config("weight transport runs from groupnet to mulnet"));
    }
    let c = src.config.classes;
    for p in dst.gen_store.params() {
        let (name, k) = grouped_source(p.name()).unwrap_or((p.name().to_string(), usize::MAX));
        let s = src
            .gen_store
            .find(&name)
            .ok_or_else(|| SmisError::config(format!("no grouped counterpart for {}", p.name())))?;
        let value = if k == usize::MAX {
            s.var().value().clone()
        } else {
            leading_chunk(&s.var().value(), c, k)?
        };
        p.var().set_value(value)?;
        if let (Some(ds), Some(ss)) = (&p.spectral, &s.spectral) {
            let ss = ss.borrow();
            let mut ds = ds.borrow_mut();
            if k == usize::MAX {
                *ds = ss.clone();
            } else {
                ds.u = chunk(&ss.u, c, k);
                ds.v = chunk(&ss.v, c, k);
            }
        }
    }
    let src_buffers = src.gen_store.buffers();
    for b in dst.gen_store.buffers() {
        let (name, k) = grouped_source(b.name()).unwrap_or((b.name().to_string(), usize::MAX));
        let s = src_buffers
            .iter()
            .find(|x| x.name() == name)
            .ok_or_else(|| SmisError::config(format!("no grouped counterpart for {}", b.name())))?;
        let value = if k == usize::MAX {
            s.value.borrow().clone()
        } else {
            leading_chunk(&s.value.borrow(), c, k)?
        };
        *b.value.borrow_mut() = value;
    }
    Ok(())
}
