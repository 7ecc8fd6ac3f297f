//! Layers, parameter registry and optimizer built on the candle tensor
//! substrate.

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Named trainable tensors of one network, in construction order.
#[derive(Clone)]
pub struct ParamStore {
    device: Device,
    dtype: DType,
    vars: Vec<(String, Var)>,
}

impl ParamStore {
    pub fn new(device: Device, dtype: DType) -> Self {
        Self {
            device,
            dtype,
            vars: Vec::new(),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn vars(&self) -> &[(String, Var)] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    fn register(&mut self, name: String, data: Vec<f64>, shape: &[usize]) -> Result<Var> {
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.vars.push((name, var.clone()));
        Ok(var)
    }

    /// Copies values from `other` (same names and shapes) into this store.
    pub fn load_from(&self, tensors: &std::collections::HashMap<String, Tensor>) -> Result<()> {
        for (name, var) in &self.vars {
            let src = tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if src.dims() != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, network expects {:?}",
                    src.dims(),
                    var.dims()
                )));
            }
            var.set(&src.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        Ok(())
    }

    /// Snapshot of every parameter's current value.
    pub fn snapshot(&self) -> Vec<(String, Tensor)> {
        self.vars
            .iter()
            .map(|(n, v)| (n.clone(), v.as_detached_tensor().copy().expect("cpu copy")))
            .collect()
    }
}

/// Draws initial weights; separate from [`ParamStore`] so that the seed only
/// matters while a network is being built.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Zero-mean normal draws with variance `1 / fan_in`.
    fn normal(&mut self, n: usize, fan_in: usize) -> Vec<f64> {
        let std = (1.0 / fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("valid std");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }
}

#[derive(Clone)]
pub struct Conv2d {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let shape = [out_channels, in_channels, kernel, kernel];
        let weight = store.register(
            format!("{name}.weight"),
            init.normal(shape.iter().product(), in_channels * kernel * kernel),
            &shape,
        )?;
        let bias = store.register(format!("{name}.bias"), vec![0.0; out_channels], &[out_channels])?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.weight.as_tensor(), self.padding, self.stride, 1, 1)?;
        let b = self.bias.as_tensor().reshape((1, self.out_channels(), 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

#[derive(Clone)]
pub struct ConvTranspose2d {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let shape = [in_channels, out_channels, kernel, kernel];
        let weight = store.register(
            format!("{name}.weight"),
            init.normal(shape.iter().product(), in_channels * kernel * kernel),
            &shape,
        )?;
        let bias = store.register(format!("{name}.bias"), vec![0.0; out_channels], &[out_channels])?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(self.weight.as_tensor(), self.padding, 0, self.stride, 1)?;
        let b = self.bias.as_tensor().reshape((1, self.out_channels(), 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

#[derive(Clone)]
pub struct Linear {
    weight: Var,
    bias: Var,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        in_features: usize,
        out_features: usize,
    ) -> Result<Self> {
        let weight = store.register(
            format!("{name}.weight"),
            init.normal(in_features * out_features, in_features),
            &[out_features, in_features],
        )?;
        let bias = store.register(format!("{name}.bias"), vec![0.0; out_features], &[out_features])?;
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight.as_tensor().t()?)?;
        Ok(y.broadcast_add(self.bias.as_tensor())?)
    }
}

/// Per-sample, per-channel normalization over the spatial dimensions, with no
/// learned affine parameters.
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let flat = x.reshape((b, c, h * w))?;
    let mean = flat.mean_keepdim(2)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(2)?;
    let normed = centered.broadcast_div(&(var + INSTANCE_NORM_EPS)?.sqrt()?)?;
    Ok(normed.reshape((b, c, h, w))?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    // max(x, slope * x) for 0 < slope < 1
    Ok(x.maximum(&(x * slope)?)?)
}

/// Adaptive-moment optimizer with bias correction.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    slots: Vec<AdamSlot>,
}

struct AdamSlot {
    name: String,
    var: Var,
    m: Tensor,
    v: Tensor,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let slots = store
            .vars()
            .iter()
            .map(|(name, var)| {
                Ok(AdamSlot {
                    name: name.clone(),
                    var: var.clone(),
                    m: var.zeros_like()?,
                    v: var.zeros_like()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            slots,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update to every parameter of this optimizer that received
    /// a gradient. Parameters outside the optimizer are never touched.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else {
                continue;
            };
            // Gradients can carry op history; keeping it in the moments
            // would chain every step's graph together.
            let g = g.detach();
            slot.m = ((&slot.m * self.beta1)? + (&g * (1.0 - self.beta1))?)?.detach();
            slot.v = ((&slot.v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?.detach();
            let m_hat = (&slot.m / c1)?;
            let v_hat = (&slot.v / c2)?;
            let update = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            let next = (slot.var.as_detached_tensor() - (update * self.lr)?)?;
            slot.var.set(&next)?;
        }
        Ok(())
    }

    /// Moment tensors keyed `m.<param>` / `v.<param>`.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        self.slots
            .iter()
            .flat_map(|s| {
                [
                    (format!("m.{}", s.name), s.m.clone()),
                    (format!("v.{}", s.name), s.v.clone()),
                ]
            })
            .collect()
    }

    pub fn load_state(
        &mut self,
        t: u64,
        tensors: &std::collections::HashMap<String, Tensor>,
    ) -> Result<()> {
        for slot in &mut self.slots {
            for (prefix, dst) in [("m", &mut slot.m), ("v", &mut slot.v)] {
                let key = format!("{prefix}.{}", slot.name);
                let src = tensors
                    .get(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor {key}")))?;
                if src.dims() != dst.dims() {
                    return Err(Error::Checkpoint(format!("optimizer tensor {key} has wrong shape")));
                }
                *dst = src.to_dtype(dst.dtype())?;
            }
        }
        self.t = t;
        Ok(())
    }
}
