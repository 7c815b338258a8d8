//! Declarative layer specs and a sequential network container.
//!
//! A network is described by its per-sample input shape plus an ordered list
//! of [`LayerSpec`]s; [`Sequential`] materializes the parameters (seeded,
//! deterministic) and replays the chain onto a [`Graph`] for each forward
//! pass. Shapes are validated once at construction, so a successful build
//! guarantees shape-correct forwards for any batch size.

use crate::error::{NumError, Result};
use crate::graph::{Activation, Graph, TensorId};
use crate::ops::{conv_out_dim, transpose_out_hw, Padding};
use crate::rng::{normal_init, Rng};
use crate::tensor::{Real, Tensor};

/// One layer of a sequential network. Spatial layers expect channels-last
/// inputs; `Dense` expects a rank-1 per-sample input (use `Flatten` first).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense {
        output_dim: usize,
    },
    Conv2d {
        filters: usize,
        filter_size: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    },
    Conv2dTranspose {
        filters: usize,
        filter_size: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    },
    MaxPool2d {
        window: (usize, usize),
        stride: (usize, usize),
    },
    Activation(Activation),
    /// Per-sample reshape; the product must match the incoming shape.
    Reshape(Vec<usize>),
    Flatten,
}

/// Weight initialization scheme. Biases are always zero-initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// iid N(0, stddev^2) — the DCGAN convention (stddev 0.02).
    Normal { stddev: f64 },
    /// iid N(0, 2 / fan_in) — keeps activations scaled through deep ReLU
    /// stacks; used by the classifier so small learning rates bite.
    HeNormal,
}

/// A named trainable tensor.
#[derive(Debug, Clone)]
pub struct Param<E: Real> {
    pub name: String,
    pub value: Tensor<E>,
}

/// Sequential network: specs + materialized parameters.
#[derive(Debug, Clone)]
pub struct Sequential<E: Real> {
    prefix: String,
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    /// Per-sample input shape of each layer (index-aligned with `specs`).
    layer_inputs: Vec<Vec<usize>>,
    output_shape: Vec<usize>,
    params: Vec<Param<E>>,
    /// Parameter indices owned by each layer.
    layer_params: Vec<Vec<usize>>,
}

impl<E: Real> Sequential<E> {
    /// Build the network, materializing seeded parameters. `prefix` namespaces
    /// parameter names (e.g. `"disc"` gives `disc.layer0.weights`).
    pub fn new(
        prefix: &str,
        input_shape: &[usize],
        specs: Vec<LayerSpec>,
        init: WeightInit,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut params = Vec::new();
        let mut layer_params = Vec::new();
        let mut layer_inputs = Vec::new();

        for (idx, spec) in specs.iter().enumerate() {
            layer_inputs.push(shape.clone());
            let mut own = Vec::new();
            match spec {
                LayerSpec::Dense { output_dim } => {
                    if *output_dim == 0 {
                        return Err(NumError::NonPositive {
                            context: "LayerSpec::Dense",
                            what: "output_dim",
                        });
                    }
                    let din = match shape.as_slice() {
                        [d] => *d,
                        _ => {
                            return Err(NumError::BadRank {
                                context: "LayerSpec::Dense input",
                                rank: shape.len(),
                                expected: "1 (use Flatten before Dense)",
                            })
                        }
                    };
                    let fan_in = din;
                    own.push(params.len());
                    params.push(Param {
                        name: format!("{prefix}.layer{idx}.weights"),
                        value: init_tensor(init, &[din, *output_dim], fan_in, rng),
                    });
                    own.push(params.len());
                    params.push(Param {
                        name: format!("{prefix}.layer{idx}.bias"),
                        value: Tensor::zeros(&[*output_dim]),
                    });
                    shape = vec![*output_dim];
                }
                LayerSpec::Conv2d {
                    filters,
                    filter_size,
                    stride,
                    padding,
                } => {
                    let (h, w, c) = expect_image(&shape, "LayerSpec::Conv2d input")?;
                    let (kh, kw) = *filter_size;
                    let fan_in = kh * kw * c;
                    own.push(params.len());
                    params.push(Param {
                        name: format!("{prefix}.layer{idx}.filters"),
                        value: init_tensor(init, &[kh, kw, c, *filters], fan_in, rng),
                    });
                    own.push(params.len());
                    params.push(Param {
                        name: format!("{prefix}.layer{idx}.bias"),
                        value: Tensor::zeros(&[*filters]),
                    });
                    shape = vec![
                        conv_out_dim(h, kh, stride.0, *padding)?,
                        conv_out_dim(w, kw, stride.1, *padding)?,
                        *filters,
                    ];
                }
                LayerSpec::Conv2dTranspose {
                    filters,
                    filter_size,
                    stride,
                    padding,
                } => {
                    let (h, w, c) = expect_image(&shape, "LayerSpec::Conv2dTranspose input")?;
                    let (kh, kw) = *filter_size;
                    let fan_in = kh * kw * c;
                    own.push(params.len());
                    params.push(Param {
                        name: format!("{prefix}.layer{idx}.filters"),
                        value: init_tensor(init, &[kh, kw, *filters, c], fan_in, rng),
                    });
                    own.push(params.len());
                    params.push(Param {
                        name: format!("{prefix}.layer{idx}.bias"),
                        value: Tensor::zeros(&[*filters]),
                    });
                    let (oh, ow) = transpose_out_hw((h, w), (kh, kw), *stride, *padding)?;
                    shape = vec![oh, ow, *filters];
                }
                LayerSpec::MaxPool2d { window, stride } => {
                    let (h, w, c) = expect_image(&shape, "LayerSpec::MaxPool2d input")?;
                    if window.0 > h || window.1 > w {
                        return Err(NumError::WindowTooLarge {
                            window: window.0,
                            window2: window.1,
                            extent: h.min(w),
                        });
                    }
                    shape = vec![
                        (h - window.0) / stride.0 + 1,
                        (w - window.1) / stride.1 + 1,
                        c,
                    ];
                }
                LayerSpec::Activation(_) => {}
                LayerSpec::Reshape(target) => {
                    let want: usize = target.iter().product();
                    let have: usize = shape.iter().product();
                    if want != have {
                        return Err(NumError::LengthMismatch {
                            context: "LayerSpec::Reshape",
                            shape: target.clone(),
                            len: have,
                            want,
                        });
                    }
                    shape = target.clone();
                }
                LayerSpec::Flatten => {
                    shape = vec![shape.iter().product()];
                }
            }
            layer_params.push(own);
        }

        Ok(Sequential {
            prefix: prefix.to_string(),
            input_shape: input_shape.to_vec(),
            specs,
            layer_inputs,
            output_shape: shape,
            params,
            layer_params,
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn params(&self) -> &[Param<E>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<E>] {
        &mut self.params
    }

    /// Total trainable element count.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Parameter indices owned by layers `0..depth` — the "frozen prefix"
    /// used by fine-tuning.
    pub fn prefix_param_indices(&self, depth: usize) -> Vec<usize> {
        self.layer_params
            .iter()
            .take(depth)
            .flatten()
            .copied()
            .collect()
    }

    /// Insert every parameter as a leaf on `graph`; `trainable` controls
    /// whether gradients accumulate. Returns ids in parameter order.
    pub fn insert_params(&self, graph: &mut Graph<E>, trainable: bool) -> Vec<TensorId> {
        self.params
            .iter()
            .map(|p| graph.leaf(p.value.clone(), trainable))
            .collect()
    }

    /// Replay the layer chain on `graph` starting from `input`, using
    /// previously inserted parameter ids (see [`Sequential::insert_params`]).
    /// The input may be a single sample or a batch with one leading axis.
    pub fn forward_with(
        &self,
        graph: &mut Graph<E>,
        input: TensorId,
        param_ids: &[TensorId],
    ) -> Result<TensorId> {
        if param_ids.len() != self.params.len() {
            return Err(NumError::OptimizerArity {
                state: self.params.len(),
                given: param_ids.len(),
            });
        }
        let mut cur = input;
        for (idx, spec) in self.specs.iter().enumerate() {
            let own = &self.layer_params[idx];
            let batched = graph.value(cur).rank() == self.layer_inputs[idx].len() + 1;
            cur = match spec {
                LayerSpec::Dense { .. } => {
                    graph.dense(cur, param_ids[own[0]], param_ids[own[1]])?
                }
                LayerSpec::Conv2d {
                    stride, padding, ..
                } => {
                    let conv = graph.conv2d(cur, param_ids[own[0]], *stride, *padding)?;
                    graph.bias_add(conv, param_ids[own[1]])?
                }
                LayerSpec::Conv2dTranspose {
                    stride, padding, ..
                } => {
                    let conv = graph.conv2d_transpose(cur, param_ids[own[0]], *stride, *padding)?;
                    graph.bias_add(conv, param_ids[own[1]])?
                }
                LayerSpec::MaxPool2d { window, stride } => {
                    graph.maxpool2d(cur, *window, *stride)?
                }
                LayerSpec::Activation(kind) => graph.activation(cur, *kind),
                LayerSpec::Reshape(target) => {
                    let shape = if batched {
                        let n = graph.value(cur).shape()[0];
                        let mut s = vec![n];
                        s.extend_from_slice(target);
                        s
                    } else {
                        target.clone()
                    };
                    graph.reshape(cur, &shape)?
                }
                LayerSpec::Flatten => graph.flatten(cur)?,
            };
        }
        Ok(cur)
    }

    /// Convenience: insert parameters (non-trainable) and run one forward
    /// pass, returning the output value.
    pub fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        let mut graph = Graph::new();
        let ids = self.insert_params(&mut graph, false);
        let x = graph.constant(input.clone());
        let out = self.forward_with(&mut graph, x, &ids)?;
        Ok(graph.value(out).clone())
    }

    /// Gather gradients for every parameter after a backward pass. Errors
    /// with the parameter's name if one is missing.
    pub fn collect_grads(&self, graph: &Graph<E>, param_ids: &[TensorId]) -> Result<Vec<Tensor<E>>> {
        self.params
            .iter()
            .zip(param_ids)
            .map(|(p, &id)| {
                graph
                    .grad(id)
                    .cloned()
                    .ok_or_else(|| NumError::MissingGrad(p.name.clone()))
            })
            .collect()
    }
}

fn expect_image(shape: &[usize], context: &'static str) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok((h, w, c)),
        _ => Err(NumError::BadRank {
            context,
            rank: shape.len(),
            expected: "3 ([H,W,C], all positive)",
        }),
    }
}

fn init_tensor<E: Real>(init: WeightInit, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<E> {
    let stddev = match init {
        WeightInit::Normal { stddev } => stddev,
        WeightInit::HeNormal => (2.0 / fan_in as f64).sqrt(),
    };
    normal_init(rng, shape, stddev)
}
