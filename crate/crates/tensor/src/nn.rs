//! Parameterized layers over the raw ops.

use std::rc::Rc;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::init::glorot_uniform;
use crate::ops::conv::{conv2d, ConvSpec};
use crate::ops::norm::{batch_norm, group_norm, RunningStats, BN_EPS, BN_MOMENTUM};
use crate::ops::spatial::linear;
use crate::param::{Buffer, Parameter, Scope, SpectralState};
use crate::scalar::Float;
use crate::spectral::{spectral_normalize, INIT_POWER_ITERS};
use crate::tensor::Tensor;
use crate::var::Var;

/// Forward-pass mode.
///
/// `training` selects batch statistics; `update_state` lets the pass refresh
/// running statistics and spectral-norm vectors. Gradient checks use
/// training statistics with frozen state so repeated evaluations agree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    pub training: bool,
    pub update_state: bool,
}

impl Mode {
    pub const TRAIN: Mode = Mode { training: true, update_state: true };
    pub const EVAL: Mode = Mode { training: false, update_state: false };
    pub const FROZEN_TRAIN: Mode = Mode { training: true, update_state: false };

    fn power_iters(self) -> usize {
        if self.training && self.update_state {
            1
        } else {
            0
        }
    }
}

fn rename(err: TensorError, layer: &str) -> TensorError {
    match err {
        TensorError::Config { reason, .. } => TensorError::Config {
            layer: layer.to_string(),
            reason,
        },
        other => other,
    }
}

pub struct Conv2d<T: Float> {
    name: String,
    pub weight: Rc<Parameter<T>>,
    pub bias: Option<Rc<Parameter<T>>>,
    pub spec: ConvSpec,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvOptions {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub bias: bool,
    pub spectral: bool,
}

impl Default for ConvOptions {
    fn default() -> Self {
        ConvOptions {
            stride: 1,
            padding: 0,
            groups: 1,
            bias: true,
            spectral: false,
        }
    }
}

impl<T: Float> Conv2d<T> {
    pub fn new(
        scope: &Scope<'_, T>,
        din: usize,
        dout: usize,
        kernel: usize,
        opts: ConvOptions,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let name = scope.prefix().to_string();
        let g = opts.groups;
        if g == 0 || din % g != 0 || dout % g != 0 {
            return Err(TensorError::config(
                name,
                format!("channels in={din} out={dout} not divisible by groups={g}"),
            ));
        }
        let shape = [dout, din / g, kernel, kernel];
        let w = glorot_uniform(&shape, g, rng);
        let spectral = if opts.spectral {
            let mut st = SpectralState::init(&shape, g, rng)?;
            st.warm(&w, INIT_POWER_ITERS);
            Some(st)
        } else {
            None
        };
        let weight = scope.param_with("weight", w, spectral)?;
        let bias = if opts.bias {
            Some(scope.param("bias", Tensor::zeros(&[dout]))?)
        } else {
            None
        };
        Ok(Conv2d {
            name,
            weight,
            bias,
            spec: ConvSpec::new(opts.stride, opts.padding, g),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn effective_weight(&self, mode: Mode) -> Result<Var<T>> {
        if self.weight.spectral.is_some() {
            spectral_normalize(&self.weight, mode.power_iters())
        } else {
            Ok(self.weight.var().clone())
        }
    }

    pub fn forward(&self, x: &Var<T>, mode: Mode) -> Result<Var<T>> {
        let w = self.effective_weight(mode)?;
        conv2d(x, &w, self.bias.as_ref().map(|b| b.var()), self.spec).map_err(|e| rename(e, &self.name))
    }
}

pub struct BatchNorm2d<T: Float> {
    pub gamma: Rc<Parameter<T>>,
    pub beta: Rc<Parameter<T>>,
    pub running_mean: Rc<Buffer<T>>,
    pub running_var: Rc<Buffer<T>>,
}

impl<T: Float> BatchNorm2d<T> {
    pub fn new(scope: &Scope<'_, T>, channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: scope.param("gamma", Tensor::ones(&[channels]))?,
            beta: scope.param("beta", Tensor::zeros(&[channels]))?,
            running_mean: scope.buffer("running_mean", Tensor::zeros(&[channels]))?,
            running_var: scope.buffer("running_var", Tensor::ones(&[channels]))?,
        })
    }

    pub fn forward(&self, x: &Var<T>, mode: Mode) -> Result<Var<T>> {
        let mut mean = self.running_mean.value.borrow_mut();
        let mut var = self.running_var.value.borrow_mut();
        let running = if mode.training && !mode.update_state {
            None
        } else {
            Some(RunningStats {
                mean: mean.data_mut(),
                var: var.data_mut(),
                momentum: BN_MOMENTUM,
            })
        };
        batch_norm(
            x,
            Some(self.gamma.var()),
            Some(self.beta.var()),
            running,
            mode.training,
            BN_EPS,
        )
    }
}

pub struct GroupNorm2d<T: Float> {
    pub groups: usize,
    pub gamma: Rc<Parameter<T>>,
    pub beta: Rc<Parameter<T>>,
}

impl<T: Float> GroupNorm2d<T> {
    pub fn new(scope: &Scope<'_, T>, channels: usize, groups: usize) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(TensorError::config(
                scope.prefix(),
                format!("{channels} channels not divisible by {groups} groups"),
            ));
        }
        Ok(GroupNorm2d {
            groups,
            gamma: scope.param("gamma", Tensor::ones(&[channels]))?,
            beta: scope.param("beta", Tensor::zeros(&[channels]))?,
        })
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        group_norm(x, self.groups, Some(self.gamma.var()), Some(self.beta.var()), BN_EPS)
    }
}

pub struct Linear<T: Float> {
    pub weight: Rc<Parameter<T>>,
    pub bias: Option<Rc<Parameter<T>>>,
}

impl<T: Float> Linear<T> {
    pub fn new(scope: &Scope<'_, T>, fin: usize, fout: usize, spectral: bool, rng: &mut impl Rng) -> Result<Self> {
        let shape = [fout, fin];
        let w = glorot_uniform(&shape, 1, rng);
        let sn = if spectral {
            let mut st = SpectralState::init(&shape, 1, rng)?;
            st.warm(&w, INIT_POWER_ITERS);
            Some(st)
        } else {
            None
        };
        Ok(Linear {
            weight: scope.param_with("weight", w, sn)?,
            bias: Some(scope.param("bias", Tensor::zeros(&[fout]))?),
        })
    }

    pub fn forward(&self, x: &Var<T>, mode: Mode) -> Result<Var<T>> {
        let w = if self.weight.spectral.is_some() {
            spectral_normalize(&self.weight, mode.power_iters())?
        } else {
            self.weight.var().clone()
        };
        linear(x, &w, self.bias.as_ref().map(|b| b.var()))
    }
}
