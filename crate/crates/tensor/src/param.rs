use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::scalar::Float;
use crate::tensor::Tensor;
use crate::var::Var;

/// Persistent power-iteration vectors, one `(u, v)` pair per weight group.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState<T> {
    pub groups: usize,
    /// `groups * rows_per_group` left vector entries.
    pub u: Vec<T>,
    /// `groups * cols` right vector entries.
    pub v: Vec<T>,
}

/// A trainable tensor with a unique dotted name.
pub struct Parameter<T: Float> {
    name: String,
    var: Var<T>,
    pub spectral: Option<RefCell<SpectralState<T>>>,
}

impl<T: Float> Parameter<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn var(&self) -> &Var<T> {
        &self.var
    }

    pub fn shape(&self) -> Vec<usize> {
        self.var.shape()
    }

    pub fn numel(&self) -> usize {
        self.var.value().numel()
    }
}

/// Non-trainable named state (running statistics and the like).
pub struct Buffer<T: Float> {
    name: String,
    pub value: RefCell<Tensor<T>>,
}

impl<T: Float> Buffer<T> {
    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Default)]
struct StoreInner<T: Float> {
    params: Vec<Rc<Parameter<T>>>,
    buffers: Vec<Rc<Buffer<T>>>,
    names: HashSet<String>,
}

/// Registry of every parameter and buffer of a network, in creation order.
pub struct ParamStore<T: Float> {
    inner: RefCell<StoreInner<T>>,
}

impl<T: Float> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            inner: RefCell::new(StoreInner {
                params: Vec::new(),
                buffers: Vec::new(),
                names: HashSet::new(),
            }),
        }
    }
}

const SN_U: &str = "#sn_u";
const SN_V: &str = "#sn_v";

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn root(&self) -> Scope<'_, T> {
        Scope {
            store: self,
            prefix: String::new(),
        }
    }

    fn claim(&self, name: &str) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if !inner.names.insert(name.to_string()) {
            return Err(TensorError::config(name, "duplicate parameter name"));
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<Rc<Parameter<T>>> {
        self.inner.borrow().params.clone()
    }

    pub fn buffers(&self) -> Vec<Rc<Buffer<T>>> {
        self.inner.borrow().buffers.clone()
    }

    pub fn param_count(&self) -> usize {
        self.inner.borrow().params.iter().map(|p| p.numel()).sum()
    }

    pub fn find(&self, name: &str) -> Option<Rc<Parameter<T>>> {
        self.inner.borrow().params.iter().find(|p| p.name == name).cloned()
    }

    pub fn zero_grad(&self) {
        for p in &self.inner.borrow().params {
            p.var.zero_grad();
        }
    }

    pub fn set_requires_grad(&self, flag: bool) {
        for p in &self.inner.borrow().params {
            p.var.set_requires_grad(flag);
        }
    }

    /// Every persistent tensor: parameters, spectral vectors, buffers.
    pub fn state(&self) -> Vec<(String, Tensor<T>)> {
        let inner = self.inner.borrow();
        let mut out = Vec::new();
        for p in &inner.params {
            out.push((p.name.clone(), p.var.value().clone()));
            if let Some(sn) = &p.spectral {
                let sn = sn.borrow();
                out.push((format!("{}{SN_U}", p.name), Tensor::new(&[sn.u.len()], sn.u.clone()).unwrap()));
                out.push((format!("{}{SN_V}", p.name), Tensor::new(&[sn.v.len()], sn.v.clone()).unwrap()));
            }
        }
        for b in &inner.buffers {
            out.push((b.name.clone(), b.value.borrow().clone()));
        }
        out
    }

    /// Restore from `state()` output. Every persistent tensor must be present
    /// with its exact shape; extra entries are ignored.
    pub fn load_state(&self, entries: &[(String, Tensor<T>)]) -> Result<()> {
        let lookup = |name: &str| -> Result<&Tensor<T>> {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| TensorError::Checkpoint(format!("missing tensor {name}")))
        };
        let inner = self.inner.borrow();
        for p in &inner.params {
            p.var.set_value(lookup(&p.name)?.clone())?;
            if let Some(sn) = &p.spectral {
                let mut sn = sn.borrow_mut();
                let u = lookup(&format!("{}{SN_U}", p.name))?;
                let v = lookup(&format!("{}{SN_V}", p.name))?;
                if u.numel() != sn.u.len() || v.numel() != sn.v.len() {
                    return Err(TensorError::Checkpoint(format!("spectral state shape of {}", p.name)));
                }
                sn.u = u.data().to_vec();
                sn.v = v.data().to_vec();
            }
        }
        for b in &inner.buffers {
            let t = lookup(&b.name)?;
            let mut slot = b.value.borrow_mut();
            if slot.shape() != t.shape() {
                return Err(TensorError::shape("load_state", slot.shape(), t.shape()));
            }
            *slot = t.clone();
        }
        Ok(())
    }
}

/// Name prefix under construction, e.g. `decoder.block3.conv1`.
#[derive(Clone)]
pub struct Scope<'a, T: Float> {
    store: &'a ParamStore<T>,
    prefix: String,
}

impl<'a, T: Float> Scope<'a, T> {
    pub fn sub(&self, name: impl AsRef<str>) -> Scope<'a, T> {
        Scope {
            store: self.store,
            prefix: self.path(name.as_ref()),
        }
    }

    pub fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn param(&self, name: &str, init: Tensor<T>) -> Result<Rc<Parameter<T>>> {
        self.param_with(name, init, None)
    }

    pub fn param_with(
        &self,
        name: &str,
        init: Tensor<T>,
        spectral: Option<SpectralState<T>>,
    ) -> Result<Rc<Parameter<T>>> {
        let full = self.path(name);
        self.store.claim(&full)?;
        let p = Rc::new(Parameter {
            name: full,
            var: Var::leaf(init),
            spectral: spectral.map(RefCell::new),
        });
        self.store.inner.borrow_mut().params.push(Rc::clone(&p));
        Ok(p)
    }

    pub fn buffer(&self, name: &str, init: Tensor<T>) -> Result<Rc<Buffer<T>>> {
        let full = self.path(name);
        self.store.claim(&full)?;
        let b = Rc::new(Buffer {
            name: full,
            value: RefCell::new(init),
        });
        self.store.inner.borrow_mut().buffers.push(Rc::clone(&b));
        Ok(b)
    }
}
