//! Reverse-mode differentiation over whole-tensor primitives.
//!
//! Every differentiable op produces a [`Var`] that records its inputs and a
//! backward closure. Node ids grow monotonically, so a node's inputs always
//! carry smaller ids than the node itself; sorting the reachable set by
//! descending id is a valid reverse topological order.

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::scalar::Float;
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Disables graph recording on the current thread while alive.
pub struct NoGradGuard {
    previous: bool,
}

impl NoGradGuard {
    pub fn new() -> Self {
        let previous = GRAD_ENABLED.with(|g| g.replace(false));
        NoGradGuard { previous }
    }
}

impl Default for NoGradGuard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.previous));
    }
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Inputs handed to a backward closure.
pub struct BackwardCtx<'a, T: Float> {
    pub grad: &'a Tensor<T>,
    pub output: &'a Tensor<T>,
    pub inputs: &'a [Var<T>],
}

pub type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>>>;

struct Node<T: Float> {
    id: u64,
    op: &'static str,
    value: RefCell<Tensor<T>>,
    grad: RefCell<Option<Tensor<T>>>,
    requires_grad: Cell<bool>,
    inputs: Vec<Var<T>>,
    backward: Option<BackwardFn<T>>,
}

/// A tensor that may participate in differentiation.
pub struct Var<T: Float>(Rc<Node<T>>);

impl<T: Float> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<T: Float> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Var(id={}, op={}, shape={:?}, requires_grad={})",
            self.0.id,
            self.0.op,
            self.0.value.borrow().shape(),
            self.0.requires_grad.get()
        )
    }
}

impl<T: Float> Var<T> {
    fn make(
        op: &'static str,
        value: Tensor<T>,
        requires_grad: bool,
        inputs: Vec<Var<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            op,
            value: RefCell::new(value),
            grad: RefCell::new(None),
            requires_grad: Cell::new(requires_grad),
            inputs,
            backward,
        }))
    }

    /// A constant leaf.
    pub fn constant(value: Tensor<T>) -> Self {
        Self::make("leaf", value, false, Vec::new(), None)
    }

    /// A leaf that accumulates gradients.
    pub fn leaf(value: Tensor<T>) -> Self {
        Self::make("leaf", value, true, Vec::new(), None)
    }

    /// Result of a primitive. The graph edge is only recorded when recording
    /// is enabled and at least one input participates in differentiation.
    pub fn from_op(
        op: &'static str,
        value: Tensor<T>,
        inputs: &[&Var<T>],
        backward: impl Fn(&BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> + 'static,
    ) -> Self {
        let track = grad_enabled() && inputs.iter().any(|v| v.requires_grad());
        if track {
            Self::make(
                op,
                value,
                true,
                inputs.iter().map(|v| (*v).clone()).collect(),
                Some(Box::new(backward)),
            )
        } else {
            Self::make(op, value, false, Vec::new(), None)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn op_name(&self) -> &'static str {
        self.0.op
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    pub fn value(&self) -> Ref<'_, Tensor<T>> {
        self.0.value.borrow()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn item(&self) -> T {
        self.0.value.borrow().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad.get()
    }

    /// Only leaves may toggle participation.
    pub fn set_requires_grad(&self, flag: bool) {
        if self.is_leaf() {
            self.0.requires_grad.set(flag);
        }
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Replace the value of a leaf. Must not be called while a graph that
    /// reads this leaf is still going to be differentiated.
    pub fn set_value(&self, value: Tensor<T>) -> Result<()> {
        let mut slot = self.0.value.borrow_mut();
        if slot.shape() != value.shape() {
            return Err(TensorError::shape("set_value", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    pub fn update_value(&self, f: impl FnOnce(&mut Tensor<T>)) {
        f(&mut self.0.value.borrow_mut());
    }

    pub fn detach(&self) -> Var<T> {
        Var::constant(self.value().clone())
    }

    fn accumulate(&self, g: Tensor<T>) -> Result<()> {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(existing) => existing.add_assign(&g)?,
            None => {
                let shape = self.0.value.borrow().shape().to_vec();
                if g.shape() != shape.as_slice() {
                    return Err(TensorError::shape(self.0.op, &shape, g.shape()));
                }
                *slot = Some(g);
            }
        }
        Ok(())
    }

    /// Differentiate a scalar loss, accumulating into every participating leaf.
    pub fn backward(&self) -> Result<()> {
        if self.value().numel() != 1 {
            return Err(TensorError::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let mut order: Vec<Var<T>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if !seen.insert(v.id()) {
                continue;
            }
            for p in &v.0.inputs {
                if p.requires_grad() && !seen.contains(&p.id()) {
                    stack.push(p.clone());
                }
            }
            order.push(v);
        }
        order.sort_by_key(|v| std::cmp::Reverse(v.id()));

        let shape = self.shape();
        self.accumulate(Tensor::ones(&shape))?;
        for node in &order {
            let Some(backward) = node.0.backward.as_ref() else {
                continue;
            };
            let Some(grad) = node.0.grad.borrow_mut().take() else {
                continue;
            };
            let output = node.0.value.borrow();
            let ctx = BackwardCtx {
                grad: &grad,
                output: &output,
                inputs: &node.0.inputs,
            };
            let grads = backward(&ctx)?;
            drop(output);
            for (input, g) in node.0.inputs.iter().zip(grads) {
                if let Some(g) = g {
                    if input.requires_grad() {
                        input.accumulate(g)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_grad_guard_suppresses_recording() {
        let x = Var::leaf(Tensor::<f64>::ones(&[2]));
        {
            let _g = NoGradGuard::new();
            let y = x.square().unwrap();
            assert!(!y.requires_grad());
        }
        assert!(x.square().unwrap().requires_grad());
    }

    #[test]
    fn non_scalar_backward_is_usage_error() {
        let x = Var::leaf(Tensor::<f64>::ones(&[2]));
        let y = x.square().unwrap();
        assert!(matches!(y.backward(), Err(TensorError::Usage(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        // y = x*x + x at x = 3 -> dy/dx = 7
        let x = Var::leaf(Tensor::<f64>::scalar(3.0));
        let y = x.mul(&x).unwrap().add(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap().item(), 7.0);
    }
}
