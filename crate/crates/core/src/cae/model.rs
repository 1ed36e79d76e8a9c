use rand_distr::{Distribution, Normal};

use super::{CaeArchitecture, CaeError};
use crate::image::{Image, RawFrame};
use crate::nn::{
    conv2d_backward, conv2d_backward_params, conv2d_same, maxpool_2x2_ceil, maxpool_backward, relu, relu_backward, sigmoid,
    sigmoid_backward, upsample_nearest_backward, upsample_nearest_to, ConvCache, ConvLayer,
    PoolIndices,
};
use crate::rng::stream_rng;
use crate::tensor::{Real, Tensor};

/// Trained or initial parameters of one network: convolutions in
/// declaration order (encoder, decoder, final).
#[derive(Clone, Debug, PartialEq)]
pub struct CaeWeights<T> {
    arch: CaeArchitecture,
    layers: Vec<ConvLayer<T>>,
}

/// He-normal kernels (std `sqrt(2 / fan_in)`; `sqrt(1 / fan_in)` for the
/// final layer, which feeds the sigmoid), zero biases.
pub fn init_weights<T: Real>(arch: &CaeArchitecture, seed: u64) -> CaeWeights<T> {
    let mut rng = stream_rng(seed);
    let channels = arch.conv_channels();
    let last = channels.len() - 1;
    let layers = channels
        .into_iter()
        .enumerate()
        .map(|(i, (ci, co))| {
            let gain = if i == last { 1.0 } else { 2.0 };
            let std = (gain / (ci * 9) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let data = (0..co * ci * 9).map(|_| T::lit(normal.sample(&mut rng))).collect();
            ConvLayer {
                kernels: Tensor::from_vec(&[co, ci, 3, 3], data).expect("consistent shape"),
                bias: Tensor::zeros(&[co]),
            }
        })
        .collect();
    CaeWeights {
        arch: arch.clone(),
        layers,
    }
}

impl<T: Real> CaeWeights<T> {
    pub fn from_layers(arch: CaeArchitecture, layers: Vec<ConvLayer<T>>) -> Result<Self, CaeError> {
        let expected = arch.conv_channels();
        if expected.len() != layers.len() {
            return Err(CaeError::LayerCount {
                expected: expected.len(),
                got: layers.len(),
            });
        }
        for (i, ((ci, co), layer)) in expected.iter().zip(&layers).enumerate() {
            if layer.kernels.shape() != [*co, *ci, 3, 3] || layer.bias.shape() != [*co] {
                return Err(CaeError::LayerShape {
                    layer: i,
                    expected: vec![*co, *ci, 3, 3],
                    got: layer.kernels.shape().to_vec(),
                });
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn architecture(&self) -> &CaeArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    /// Labels and shapes of the flat parameter list (kernels then bias per layer).
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let ne = self.arch.encoder.len();
        let nd = self.arch.decoder.len();
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let name = if i < ne {
                    format!("encoder.{i}")
                } else if i < ne + nd {
                    format!("decoder.{}", i - ne)
                } else {
                    "final".to_string()
                };
                [
                    (format!("{name}.kernels"), l.kernels.shape().to_vec()),
                    (format!("{name}.bias"), l.bias.shape().to_vec()),
                ]
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.kernels, &mut l.bias])
            .collect()
    }

    pub fn cast<U: Real>(&self) -> CaeWeights<U> {
        CaeWeights {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    kernels: l.kernels.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(), CaeError> {
        let [_, c, h, w] = input.dims4()?;
        let s = self.arch.input_size;
        if c != 1 || h != s || w != s {
            return Err(CaeError::InputShape {
                expected: vec![1, s, s],
                got: vec![c, h, w],
            });
        }
        Ok(())
    }

    /// Runs the network on `[b, 1, s, s]` input; output has the same shape with values in (0, 1).
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, CaeError> {
        self.check_input(input)?;
        let ne = self.arch.encoder.len();
        let mut x = input.clone();
        for (stage, layer) in self.arch.encoder.iter().zip(&self.layers) {
            x = relu(&conv2d_same(&x, layer)?);
            if stage.pool {
                x = maxpool_2x2_ceil(&x)?.0;
            }
        }
        for (stage, layer) in self.arch.decoder.iter().zip(&self.layers[ne..]) {
            if x.shape()[2] != stage.target_size {
                x = upsample_nearest_to(&x, stage.target_size, stage.target_size)?;
            }
            x = relu(&conv2d_same(&x, layer)?);
        }
        Ok(sigmoid(&conv2d_same(&x, self.layers.last().expect("final layer"))?))
    }

    /// Forward pass that records everything the backward pass needs.
    pub fn forward_trace(&self, input: &Tensor<T>) -> Result<ForwardTrace<T>, CaeError> {
        self.check_input(input)?;
        let ne = self.arch.encoder.len();
        let mut trace = ForwardTrace {
            conv_inputs: Vec::with_capacity(self.layers.len()),
            relu_outputs: Vec::with_capacity(self.layers.len() - 1),
            pools: Vec::new(),
            upsampled_from: Vec::new(),
            output: Tensor::zeros(&[0]),
        };
        let mut x = input.clone();
        for (stage, layer) in self.arch.encoder.iter().zip(&self.layers) {
            let y = relu(&conv2d_same(&x, layer)?);
            trace.conv_inputs.push(ConvCache::from_input(x));
            x = if stage.pool {
                let (p, idx) = maxpool_2x2_ceil(&y)?;
                trace.pools.push(Some(idx));
                trace.relu_outputs.push(y);
                p
            } else {
                trace.pools.push(None);
                trace.relu_outputs.push(y.clone());
                y
            };
        }
        for (stage, layer) in self.arch.decoder.iter().zip(&self.layers[ne..]) {
            let (h, w) = (x.shape()[2], x.shape()[3]);
            if h != stage.target_size {
                x = upsample_nearest_to(&x, stage.target_size, stage.target_size)?;
                trace.upsampled_from.push(Some((h, w)));
            } else {
                trace.upsampled_from.push(None);
            }
            let y = relu(&conv2d_same(&x, layer)?);
            trace.conv_inputs.push(ConvCache::from_input(x));
            trace.relu_outputs.push(y.clone());
            x = y;
        }
        let out = sigmoid(&conv2d_same(&x, self.layers.last().expect("final layer"))?);
        trace.conv_inputs.push(ConvCache::from_input(x));
        trace.output = out;
        Ok(trace)
    }

    /// Gradients of a scalar loss with respect to every layer, given the
    /// loss gradient at the network output. Returned in layer order as
    /// `(kernels, bias)`.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        grad_output: &Tensor<T>,
    ) -> Result<Vec<(Tensor<T>, Tensor<T>)>, CaeError> {
        let nl = self.layers.len();
        if trace.conv_inputs.len() != nl || trace.relu_outputs.len() != nl - 1 {
            return Err(crate::nn::NnError::MissingCache.into());
        }
        let ne = self.arch.encoder.len();
        let mut grads: Vec<(Tensor<T>, Tensor<T>)> = Vec::with_capacity(nl);

        let g = sigmoid_backward(grad_output, &trace.output)?;
        let cg = conv2d_backward(&g, &trace.conv_inputs[nl - 1], &self.layers[nl - 1])?;
        grads.push((cg.kernels, cg.bias));
        let mut g = cg.input;

        for i in (ne..nl - 1).rev() {
            let d = i - ne;
            let gr = relu_backward(&g, &trace.relu_outputs[i])?;
            let cg = conv2d_backward(&gr, &trace.conv_inputs[i], &self.layers[i])?;
            grads.push((cg.kernels, cg.bias));
            g = match trace.upsampled_from[d] {
                Some((h, w)) => upsample_nearest_backward(&cg.input, h, w)?,
                None => cg.input,
            };
        }
        for i in (0..ne).rev() {
            if let Some(idx) = &trace.pools[i] {
                g = maxpool_backward(&g, idx)?;
            }
            let gr = relu_backward(&g, &trace.relu_outputs[i])?;
            if i == 0 {
                grads.push(conv2d_backward_params(&gr, &trace.conv_inputs[0], &self.layers[0])?);
                break;
            }
            let cg = conv2d_backward(&gr, &trace.conv_inputs[i], &self.layers[i])?;
            grads.push((cg.kernels, cg.bias));
            g = cg.input;
        }
        grads.reverse();
        Ok(grads)
    }

    /// Single-frame reconstruction.
    pub fn reconstruct(&self, frame: &RawFrame) -> Result<Image, CaeError> {
        let out = self.forward(&frame.to_tensor::<T>())?;
        let data = out.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        Ok(Image::new(frame.height(), frame.width(), data)?)
    }
}

/// Per-layer state saved by [`CaeWeights::forward_trace`].
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    conv_inputs: Vec<ConvCache<T>>,
    relu_outputs: Vec<Tensor<T>>,
    pools: Vec<Option<PoolIndices>>,
    upsampled_from: Vec<Option<(usize, usize)>>,
    output: Tensor<T>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    /// True when both passes took the same ReLU and max-pool branches everywhere,
    /// i.e. they lie on one smooth piece of the network function.
    pub fn same_branches(&self, other: &Self) -> bool {
        let active = |t: &Tensor<T>| t.data().iter().map(|v| *v > T::zero()).collect::<Vec<_>>();
        self.relu_outputs.len() == other.relu_outputs.len()
            && self
                .relu_outputs
                .iter()
                .zip(&other.relu_outputs)
                .all(|(a, b)| active(a) == active(b))
            && self.pools == other.pools
    }
}
