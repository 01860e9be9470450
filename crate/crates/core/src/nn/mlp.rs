use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "elu" => Some(Activation::Elu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Offsets of one dense layer inside the flat parameter vector. Weights are
/// stored row-major as `[out, in]`, followed by the `out` biases.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerSlot {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl LayerSlot {
    fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    fn len(&self) -> usize {
        self.weight_len() + self.outputs
    }
}

/// Fully connected network with one flat parameter vector and a gradient
/// buffer of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    slots: Vec<LayerSlot>,
    params: Vec<f64>,
    grads: Vec<f64>,
}

/// Intermediate values of a batched forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Mlp {
    /// Zero-initialized network. `activations` has one entry per layer.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidModel(format!("bad layer sizes {sizes:?}")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Dimension {
                context: "mlp activations",
                expected: sizes.len() - 1,
                actual: activations.len(),
            });
        }
        let mut slots = Vec::with_capacity(activations.len());
        let mut offset = 0;
        for w in sizes.windows(2) {
            let slot = LayerSlot {
                inputs: w[0],
                outputs: w[1],
                offset,
            };
            offset += slot.len();
            slots.push(slot);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            slots,
            params: vec![0.0; offset],
            grads: vec![0.0; offset],
        })
    }

    /// Hidden layers use `hidden`, the output layer uses `output`. Weights are
    /// drawn from `U(±√(6 / (fan_in + fan_out)))`, biases start at zero, and
    /// the output layer is scaled by `output_gain`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, output_gain: f64, rng: &mut R) -> Result<Self> {
        let n = sizes.len().saturating_sub(1);
        let mut acts = vec![hidden; n];
        if let Some(last) = acts.last_mut() {
            *last = output;
        }
        let mut net = Self::zeros(sizes, &acts)?;
        let last = net.slots.len() - 1;
        for (l, slot) in net.slots.clone().iter().enumerate() {
            let bound = (6.0 / (slot.inputs + slot.outputs) as f64).sqrt();
            let gain = if l == last { output_gain } else { 1.0 };
            for w in &mut net.params[slot.offset..slot.offset + slot.weight_len()] {
                *w = gain * bound * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    /// Parameters and gradients together, for optimizers.
    pub fn params_and_grads(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.params, &self.grads)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "mlp parameters",
                expected: self.params.len(),
                actual: values.len(),
            });
        }
        self.params.copy_from_slice(values);
        Ok(())
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let s = self.slots[l];
        ArrayView2::from_shape((s.outputs, s.inputs), &self.params[s.offset..s.offset + s.weight_len()]).unwrap()
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let s = self.slots[l];
        ArrayView1::from(&self.params[s.offset + s.weight_len()..s.offset + s.len()])
    }

    fn grad_views(&mut self, l: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        let s = self.slots[l];
        let (w, b) = self.grads[s.offset..s.offset + s.len()].split_at_mut(s.weight_len());
        (
            ArrayViewMut2::from_shape((s.outputs, s.inputs), w).unwrap(),
            ArrayViewMut1::from(b),
        )
    }

    /// Sets layer `l` weights to the identity and biases to zero. Requires a
    /// square layer.
    pub fn set_identity_layer(&mut self, l: usize) -> Result<()> {
        let s = self.slots[l];
        if s.inputs != s.outputs {
            return Err(Error::Dimension {
                context: "identity layer",
                expected: s.inputs,
                actual: s.outputs,
            });
        }
        let block = &mut self.params[s.offset..s.offset + s.len()];
        block.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..s.inputs {
            block[i * s.inputs + i] = 1.0;
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<MlpCache> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.slots.len());
        let mut pre = Vec::with_capacity(self.slots.len());
        let mut h = x.to_owned();
        for (l, act) in self.activations.iter().enumerate() {
            let z = h.dot(&self.weight(l).t()) + &self.bias(l);
            let y = z.mapv(|v| act.apply(v));
            inputs.push(h);
            pre.push(z);
            h = y;
        }
        Ok(MlpCache { inputs, pre, output: h })
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for (l, act) in self.activations.iter().enumerate() {
            h = (h.dot(&self.weight(l).t()) + &self.bias(l)).mapv(|v| act.apply(v));
        }
        Ok(h)
    }

    /// Single-sample convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::Dimension {
            context: "mlp input",
            expected: self.input_dim(),
            actual: x.len(),
        })?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Accumulates parameter gradients for `upstream = ∂L/∂output` and
    /// returns `∂L/∂input`.
    pub fn backward(&mut self, cache: &MlpCache, upstream: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if upstream.dim() != cache.output.dim() {
            return Err(Error::Dimension {
                context: "mlp upstream gradient",
                expected: cache.output.len(),
                actual: upstream.len(),
            });
        }
        let mut grad = upstream.to_owned();
        for l in (0..self.slots.len()).rev() {
            let act = self.activations[l];
            let z = &cache.pre[l];
            let y = if l + 1 < self.slots.len() {
                &cache.inputs[l + 1]
            } else {
                &cache.output
            };
            ndarray::Zip::from(&mut grad).and(z).and(y).for_each(|g, &z, &y| *g *= act.derivative(z, y));
            let input = &cache.inputs[l];
            let down = grad.dot(&self.weight(l));
            let (mut gw, mut gb) = self.grad_views(l);
            gw += &grad.t().dot(input);
            gb += &grad.sum_axis(Axis(0));
            grad = down;
        }
        Ok(grad)
    }
}

/// Copies rows of `data` (flat, `width` per row) selected by `idx` into a matrix.
pub fn gather_rows(data: &[f64], width: usize, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), width));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&ArrayView1::from(&data[i * width..(i + 1) * width]));
    }
    out
}

/// Flat vector of an owned row-major matrix.
pub fn into_flat(a: Array2<f64>) -> Vec<f64> {
    if a.is_standard_layout() {
        a.into_raw_vec_and_offset().0
    } else {
        a.iter().copied().collect()
    }
}
