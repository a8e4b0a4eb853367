//! Layer stacks, the fixed recognition architecture, and forward/backward
//! passes with a recorded trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Input sizes the architecture is defined for.
pub const INPUT_SIZES: [usize; 3] = [150, 200, 300];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// 3×3 valid convolution with bias.
    Conv { filters: usize },
    MaxPool { window: usize, stride: usize },
    Relu,
    Dropout,
    Flatten,
    Dense { units: usize, bias: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub num_classes: usize,
    /// Whether the first fully-connected layer carries a bias vector.
    pub fc1_bias: bool,
    pub dropout_rate: f64,
}

impl NetworkSpec {
    pub fn new(input_size: usize, num_classes: usize) -> Self {
        NetworkSpec {
            input_size,
            num_classes,
            fc1_bias: true,
            dropout_rate: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !INPUT_SIZES.contains(&self.input_size) {
            return Err(Error::Config(format!(
                "input size must be one of {INPUT_SIZES:?}, got {}",
                self.input_size
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        check_dropout(self.dropout_rate)
    }

    /// Four conv/pool stages, then 256 → 64 → `num_classes` dense layers.
    pub fn layers(&self) -> Vec<LayerSpec> {
        use LayerSpec::*;
        vec![
            Conv { filters: 32 },
            Relu,
            MaxPool { window: 4, stride: 4 },
            Conv { filters: 64 },
            Relu,
            MaxPool { window: 2, stride: 2 },
            Dropout,
            Conv { filters: 128 },
            Relu,
            MaxPool { window: 2, stride: 2 },
            Conv { filters: 256 },
            Relu,
            MaxPool { window: 2, stride: 2 },
            Dropout,
            Flatten,
            Dense { units: 256, bias: self.fc1_bias },
            Relu,
            Dense { units: 64, bias: true },
            Relu,
            Dense { units: self.num_classes, bias: true },
        ]
    }
}

fn check_dropout(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")))
    }
}

/// Output shape of every layer for a given input shape.
pub fn shape_chain(input: [usize; 3], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shape = input.to_vec();
    let mut out = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let bad = |msg: String| Error::Config(format!("layer {i} ({layer:?}): {msg}"));
        shape = match (*layer, shape.as_slice()) {
            (LayerSpec::Conv { filters }, &[h, w, _]) => {
                if h < 3 || w < 3 {
                    return Err(bad(format!("input {h}×{w} is smaller than 3×3")));
                }
                if filters == 0 {
                    return Err(bad("zero filters".into()));
                }
                vec![h - 2, w - 2, filters]
            }
            (LayerSpec::MaxPool { window, stride }, &[h, w, c]) => {
                if window == 0 || stride == 0 || window > h || window > w {
                    return Err(bad(format!("window {window}/stride {stride} on {h}×{w}")));
                }
                vec![
                    layers::pooled_extent(h, window, stride),
                    layers::pooled_extent(w, window, stride),
                    c,
                ]
            }
            (LayerSpec::Flatten, s) => vec![s.iter().product()],
            (LayerSpec::Dense { units, .. }, &[_]) => {
                if units == 0 {
                    return Err(bad("zero units".into()));
                }
                vec![units]
            }
            (LayerSpec::Relu | LayerSpec::Dropout, s) => s.to_vec(),
            (_, s) => return Err(bad(format!("cannot follow shape {s:?}"))),
        };
        out.push(shape.clone());
    }
    match out.last() {
        Some(s) if s.len() == 1 => Ok(out),
        _ => Err(Error::Config("network must end in a vector of logits".into())),
    }
}

/// Dropout behaviour for one forward pass.
pub enum DropoutMode<'a> {
    Off,
    /// Draw fresh masks from the generator.
    Sample(&'a mut ChaCha8Rng),
    /// Reuse masks from an earlier trace, one per dropout layer in order.
    Fixed(&'a [Vec<bool>]),
}

/// Everything a backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Tensor<T>>,
    argmax: Vec<Vec<u32>>,
    /// Keep masks of the dropout layers, in layer order.
    pub masks: Vec<Vec<bool>>,
}

impl<T: Scalar> Trace<T> {
    pub fn logits(&self) -> &[T] {
        self.acts.last().expect("trace has an input").data()
    }
}

/// A layer stack with its parameters. Parameters are kept in one list in
/// layer order (weights, then bias where present).
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    dropout_rate: f64,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Network<T> {
    /// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn new(input_shape: [usize; 3], layers: Vec<LayerSpec>, dropout_rate: f64, seed: u64) -> Result<Self> {
        check_dropout(dropout_rate)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = param_shapes(input_shape, &layers)?;
        let params = shapes
            .into_iter()
            .map(|(shape, fan_in)| match fan_in {
                Some(fan_in) => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| T::from_f64(rng.gen_range(-limit..limit))).collect();
                    Tensor::from_vec(&shape, data)
                }
                None => Tensor::zeros(&shape),
            })
            .collect();
        Ok(Network {
            input_shape,
            layers,
            dropout_rate,
            params,
        })
    }

    /// Wraps existing parameters, checking their shapes.
    pub fn from_params(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        dropout_rate: f64,
        params: Vec<Tensor<T>>,
    ) -> Result<Self> {
        check_dropout(dropout_rate)?;
        let shapes = param_shapes(input_shape, &layers)?;
        if shapes.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        for (i, ((shape, _), p)) in shapes.iter().zip(&params).enumerate() {
            if p.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "parameter {i} has shape {:?}, expected {shape:?}",
                    p.shape()
                )));
            }
        }
        Ok(Network {
            input_shape,
            layers,
            dropout_rate,
            params,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn num_outputs(&self) -> usize {
        self.params.last().map_or(0, |b| b.len())
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        shape_chain(self.input_shape, &self.layers).expect("validated at construction")
    }

    /// Zeroed gradient buffers aligned with [`Network::params`].
    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape,
            layers: self.layers.clone(),
            dropout_rate: self.dropout_rate,
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn forward(&self, input: &Tensor<T>, mut dropout: DropoutMode<'_>) -> Trace<T> {
        assert_eq!(input.shape(), &self.input_shape, "network input shape mismatch");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        let mut argmax = Vec::new();
        let mut masks = Vec::new();
        let mut pi = 0;
        for layer in &self.layers {
            let x = acts.last().expect("non-empty");
            let y = match *layer {
                LayerSpec::Conv { .. } => {
                    let y = layers::conv2d(x, &self.params[pi], &self.params[pi + 1]);
                    pi += 2;
                    y
                }
                LayerSpec::MaxPool { window, stride } => {
                    let (y, arg) = layers::maxpool2d(x, window, stride);
                    argmax.push(arg);
                    y
                }
                LayerSpec::Relu => {
                    let mut y = x.clone();
                    layers::relu(y.data_mut());
                    y
                }
                LayerSpec::Dropout => {
                    let mask = match &mut dropout {
                        DropoutMode::Off => None,
                        DropoutMode::Sample(rng) => Some(layers::dropout_mask(x.len(), self.dropout_rate, *rng)),
                        DropoutMode::Fixed(all) => Some(all[masks.len()].clone()),
                    };
                    let mut y = x.clone();
                    if let Some(mask) = mask {
                        assert_eq!(mask.len(), y.len(), "dropout mask length mismatch");
                        layers::apply_dropout(y.data_mut(), &mask, self.dropout_rate);
                        masks.push(mask);
                    }
                    y
                }
                LayerSpec::Flatten => x.clone().reshaped(&[x.len()]),
                LayerSpec::Dense { units, bias } => {
                    let b = bias.then(|| &self.params[pi + 1]);
                    let y = layers::dense(x.data(), &self.params[pi], b);
                    pi += 1 + bias as usize;
                    Tensor::from_vec(&[units], y)
                }
            };
            acts.push(y);
        }
        Trace { acts, argmax, masks }
    }

    /// Logits with dropout disabled. Unlike [`Network::forward`] nothing is
    /// kept for back-propagation, and activations are updated in place.
    pub fn logits(&self, input: &Tensor<T>) -> Vec<T> {
        assert_eq!(input.shape(), &self.input_shape, "network input shape mismatch");
        let mut x = input.clone();
        let mut pi = 0;
        // ReLU commutes with max pooling, so a ReLU directly before a pool
        // is applied to the smaller pooled tensor instead.
        let mut deferred_relu = false;
        for (i, layer) in self.layers.iter().enumerate() {
            if *layer == LayerSpec::Relu && matches!(self.layers.get(i + 1), Some(LayerSpec::MaxPool { .. })) {
                deferred_relu = true;
                continue;
            }
            match *layer {
                LayerSpec::Conv { .. } => {
                    x = layers::conv2d(&x, &self.params[pi], &self.params[pi + 1]);
                    pi += 2;
                }
                LayerSpec::MaxPool { window, stride } => {
                    x = layers::maxpool2d_values(&x, window, stride);
                    if std::mem::take(&mut deferred_relu) {
                        layers::relu(x.data_mut());
                    }
                }
                LayerSpec::Relu => layers::relu(x.data_mut()),
                LayerSpec::Dropout => {}
                LayerSpec::Flatten => {
                    let n = x.len();
                    x = x.reshaped(&[n]);
                }
                LayerSpec::Dense { units, bias } => {
                    let b = bias.then(|| &self.params[pi + 1]);
                    x = Tensor::from_vec(&[units], layers::dense(x.data(), &self.params[pi], b));
                    pi += 1 + bias as usize;
                }
            }
        }
        x.into_data()
    }

    /// Back-propagates `grad_logits` through the recorded trace, adding
    /// parameter gradients into `grads`.
    pub fn backward(&self, trace: &Trace<T>, grad_logits: &[T], grads: &mut [Vec<T>]) {
        assert_eq!(grads.len(), self.params.len());
        let mut g = grad_logits.to_vec();
        let mut pi = self.params.len();
        let mut pool_i = trace.argmax.len();
        let mut mask_i = trace.masks.len();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[li];
            let need_input_grad = li > 0;
            match *layer {
                LayerSpec::Conv { .. } => {
                    pi -= 2;
                    let grad_out = Tensor::from_vec(trace.acts[li + 1].shape(), g);
                    let mut gin = vec![T::zero(); if need_input_grad { input.len() } else { 0 }];
                    let (gw, rest) = grads[pi..].split_at_mut(1);
                    layers::conv2d_backward(
                        input,
                        &self.params[pi],
                        &grad_out,
                        &mut gw[0],
                        &mut rest[0],
                        need_input_grad.then_some(gin.as_mut_slice()),
                    );
                    g = gin;
                }
                LayerSpec::MaxPool { .. } => {
                    pool_i -= 1;
                    let grad_out = Tensor::from_vec(trace.acts[li + 1].shape(), g);
                    let mut gin = vec![T::zero(); input.len()];
                    layers::maxpool2d_backward(&grad_out, &trace.argmax[pool_i], &mut gin);
                    g = gin;
                }
                LayerSpec::Relu => layers::relu_backward(trace.acts[li + 1].data(), &mut g),
                LayerSpec::Dropout => {
                    // Traces recorded with dropout off carry no masks.
                    if !trace.masks.is_empty() {
                        mask_i -= 1;
                        layers::apply_dropout(&mut g, &trace.masks[mask_i], self.dropout_rate);
                    }
                }
                LayerSpec::Flatten => {}
                LayerSpec::Dense { bias, .. } => {
                    pi -= 1 + bias as usize;
                    let mut gin = vec![T::zero(); if need_input_grad { input.len() } else { 0 }];
                    let (gw, rest) = grads[pi..].split_at_mut(1);
                    layers::dense_backward(
                        input.data(),
                        &self.params[pi],
                        &g,
                        &mut gw[0],
                        if bias { Some(rest[0].as_mut_slice()) } else { None },
                        need_input_grad.then_some(gin.as_mut_slice()),
                    );
                    g = gin;
                }
            }
        }
    }

    /// Loss for one labelled sample and its parameter gradients added into
    /// `grads`.
    pub fn loss_and_grad(&self, input: &Tensor<T>, label: usize, dropout: DropoutMode<'_>, grads: &mut [Vec<T>]) -> (T, Vec<T>) {
        let trace = self.forward(input, dropout);
        let (loss, mut probs) = layers::softmax_cross_entropy(trace.logits(), label);
        let out = probs.clone();
        probs[label] -= T::one();
        self.backward(&trace, &probs, grads);
        (loss, out)
    }
}

/// Parameter shapes in storage order, with the fan-in for weights and
/// `None` for biases.
fn param_shapes(input: [usize; 3], layers: &[LayerSpec]) -> Result<Vec<(Vec<usize>, Option<usize>)>> {
    let chain = shape_chain(input, layers)?;
    let mut prev = input.to_vec();
    let mut out = Vec::new();
    for (layer, shape) in layers.iter().zip(chain) {
        match *layer {
            LayerSpec::Conv { filters } => {
                let c = prev[2];
                out.push((vec![filters, 3, 3, c], Some(9 * c)));
                out.push((vec![filters], None));
            }
            LayerSpec::Dense { units, bias } => {
                out.push((vec![units, prev[0]], Some(prev[0])));
                if bias {
                    out.push((vec![units], None));
                }
            }
            _ => {}
        }
        prev = shape;
    }
    Ok(out)
}

/// The recognition network for `spec`, deterministically initialized.
pub fn build_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>> {
    spec.validate()?;
    Network::new([spec.input_size, spec.input_size, 3], spec.layers(), spec.dropout_rate, seed)
}
