//! Central finite-difference gradient checking.

use crate::error::TensorError;
use crate::var::Var;

/// Gradients smaller than this are compared on an absolute scale.
pub const SCALE_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct LeafReport {
    pub leaf: usize,
    pub checked: usize,
    /// `max |analytic - numeric| / max(max |analytic|, max |numeric|, SCALE_FLOOR)`
    pub rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub leaves: Vec<LeafReport>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.leaves.iter().map(|l| l.rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() <= tol
    }
}

/// Compare `backward()` of the scalar produced by `f` against central
/// differences with step `h` for every element of every leaf in `leaves`
/// (every `stride`-th element when `stride > 1`).
pub fn check_gradients<E: From<TensorError>>(
    f: impl Fn() -> std::result::Result<Var<f64>, E>,
    leaves: &[Var<f64>],
    h: f64,
    stride: usize,
) -> std::result::Result<GradReport, E> {
    for l in leaves {
        l.zero_grad();
    }
    f()?.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| {
            l.grad()
                .map(|g| g.data().to_vec())
                .unwrap_or_else(|| vec![0.0; l.value().numel()])
        })
        .collect();

    let stride = stride.max(1);
    let mut reports = Vec::with_capacity(leaves.len());
    for (li, leaf) in leaves.iter().enumerate() {
        let n = leaf.value().numel();
        let mut numeric = Vec::new();
        let mut idx = Vec::new();
        for i in (0..n).step_by(stride) {
            let orig = leaf.value().data()[i];
            leaf.update_value(|t| t.data_mut()[i] = orig + h);
            let plus = f()?.item();
            leaf.update_value(|t| t.data_mut()[i] = orig - h);
            let minus = f()?.item();
            leaf.update_value(|t| t.data_mut()[i] = orig);
            numeric.push((plus - minus) / (2.0 * h));
            idx.push(i);
        }
        let scale = idx
            .iter()
            .zip(&numeric)
            .map(|(&i, &nm)| analytic[li][i].abs().max(nm.abs()))
            .fold(SCALE_FLOOR, f64::max);
        let mut rep = LeafReport {
            leaf: li,
            checked: idx.len(),
            rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (&i, &nm) in idx.iter().zip(&numeric) {
            let e = (analytic[li][i] - nm).abs() / scale;
            if e >= rep.rel_err {
                rep.rel_err = e;
                rep.worst_index = i;
                rep.analytic = analytic[li][i];
                rep.numeric = nm;
            }
        }
        reports.push(rep);
    }
    for l in leaves {
        l.zero_grad();
    }
    Ok(GradReport { leaves: reports })
}
