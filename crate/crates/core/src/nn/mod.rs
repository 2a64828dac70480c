//! Minimal differentiable neural core: fixed-topology dense networks with a
//! leaky-rectifier hidden activation, exact reverse-mode gradients, a
//! hypernetwork wrapper, optimizers, and a binary checkpoint format.
//!
//! Parameters live in one flat vector (per layer: weights row-major, then
//! biases), so flatten/unflatten round trips are exact by construction.

mod checkpoint;
mod optim;

pub use checkpoint::{load_hypernet, load_mlp, save_hypernet, save_mlp};
pub use optim::{scheduled_learning_rate, sgd_step, Optimizer, OptimizerKind, TrainConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::LossWeights;
use crate::{Error, Result};

/// Negative-side slope of the hidden leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Layer sizes of a dense network, input first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpTopology(Vec<usize>);

impl MlpTopology {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput(
                "topology needs >= 2 layer sizes, all nonzero".into(),
            ));
        }
        Ok(Self(sizes))
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn input_dim(&self) -> usize {
        self.0[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.0.last().expect("topology is nonempty")
    }

    pub fn num_layers(&self) -> usize {
        self.0.len() - 1
    }

    /// Total parameter count: per layer `out * (in + 1)`.
    pub fn param_count(&self) -> usize {
        self.0.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Flat offset of layer `l`'s weights; biases follow the weight block.
    fn layer_offset(&self, l: usize) -> usize {
        self.0[..l + 1].windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }
}

/// A dense network with leaky-rectifier hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    topology: MlpTopology,
    params: Vec<f64>,
}

/// Post-activation values saved by [`Mlp::forward_trace`]; index 0 holds the
/// input, the last entry the network output.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    activations: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has at least the input")
    }
}

impl Mlp {
    /// A network with all parameters zero.
    pub fn zeros(topology: MlpTopology) -> Self {
        let params = vec![0.0; topology.param_count()];
        Self { topology, params }
    }

    /// He-style initialization (weights scaled by `sqrt(2 / fan_in)`,
    /// biases zero), deterministic per seed.
    pub fn init_he(topology: MlpTopology, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::zeros(topology);
        for l in 0..net.topology.num_layers() {
            let (in_dim, out_dim) = net.layer_dims(l);
            let std = (2.0 / in_dim as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let off = net.topology.layer_offset(l);
            for w in &mut net.params[off..off + out_dim * in_dim] {
                *w = normal.sample(&mut rng);
            }
        }
        net
    }

    pub fn from_params(topology: MlpTopology, params: Vec<f64>) -> Result<Self> {
        if params.len() != topology.param_count() {
            return Err(Error::ShapeMismatch {
                expected: topology.param_count(),
                found: params.len(),
            });
        }
        Ok(Self { topology, params })
    }

    pub fn topology(&self) -> &MlpTopology {
        &self.topology
    }

    /// The flat parameter vector (per layer: weights row-major, then biases).
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.topology.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.topology.output_dim()
    }

    /// Multiply the last layer's parameters by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let l = self.topology.num_layers() - 1;
        let off = self.topology.layer_offset(l);
        for v in &mut self.params[off..] {
            *v *= factor;
        }
    }

    fn layer_dims(&self, l: usize) -> (usize, usize) {
        (self.topology.0[l], self.topology.0[l + 1])
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.activations.pop_last())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<MlpTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let layers = self.topology.num_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.to_vec());
        for l in 0..layers {
            let (in_dim, out_dim) = self.layer_dims(l);
            let off = self.topology.layer_offset(l);
            let weights = &self.params[off..off + out_dim * in_dim];
            let biases = &self.params[off + out_dim * in_dim..off + out_dim * (in_dim + 1)];
            let input = &activations[l];
            let hidden = l + 1 < layers;
            let mut out = Vec::with_capacity(out_dim);
            for i in 0..out_dim {
                let row = &weights[i * in_dim..(i + 1) * in_dim];
                let mut z = biases[i];
                for (w, a) in row.iter().zip(input) {
                    z += w * a;
                }
                out.push(if hidden && z < 0.0 { z * LEAKY_SLOPE } else { z });
            }
            activations.push(out);
        }
        Ok(MlpTrace { activations })
    }

    /// Exact reverse-mode gradients of `upstream · forward(x)` with respect
    /// to the flat parameters and the input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        let mut param_grad = vec![0.0; self.params.len()];
        let input_grad = self.backward_with_trace(&trace, upstream, &mut param_grad)?;
        Ok((param_grad, input_grad))
    }

    /// Backward pass reusing a saved forward trace; parameter gradients are
    /// accumulated into `param_grad` (callers zero it between samples as
    /// needed). Returns the input gradient.
    pub fn backward_with_trace(
        &self,
        trace: &MlpTrace,
        upstream: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.output_dim(),
                found: upstream.len(),
            });
        }
        if param_grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                found: param_grad.len(),
            });
        }
        let layers = self.topology.num_layers();
        let mut d_out = upstream.to_vec();
        for l in (0..layers).rev() {
            let (in_dim, out_dim) = self.layer_dims(l);
            let off = self.topology.layer_offset(l);
            let weights = &self.params[off..off + out_dim * in_dim];
            let input = &trace.activations[l];
            let output = &trace.activations[l + 1];
            let hidden = l + 1 < layers;

            // The leaky rectifier preserves sign, so the local slope is
            // recoverable from the post-activation value.
            let mut dz = d_out;
            if hidden {
                for (g, &o) in dz.iter_mut().zip(output) {
                    if o <= 0.0 {
                        *g *= LEAKY_SLOPE;
                    }
                }
            }

            let mut d_in = vec![0.0; in_dim];
            for i in 0..out_dim {
                let gi = dz[i];
                let row_off = off + i * in_dim;
                for j in 0..in_dim {
                    param_grad[row_off + j] += gi * input[j];
                    d_in[j] += gi * weights[i * in_dim + j];
                }
                param_grad[off + out_dim * in_dim + i] += gi;
            }
            d_out = d_in;
        }
        Ok(d_out)
    }
}

trait PopLast {
    fn pop_last(self) -> Vec<f64>;
}

impl PopLast for Vec<Vec<f64>> {
    fn pop_last(mut self) -> Vec<f64> {
        self.pop().expect("trace has at least the input")
    }
}

/// A network whose output vector is the flat parameter vector of a target
/// network template.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperNet {
    mlp: Mlp,
    template: MlpTopology,
}

impl HyperNet {
    pub fn new(mlp: Mlp, template: MlpTopology) -> Result<Self> {
        if mlp.output_dim() != template.param_count() {
            return Err(Error::ShapeMismatch {
                expected: template.param_count(),
                found: mlp.output_dim(),
            });
        }
        Ok(Self { mlp, template })
    }

    /// He-initialized hypernetwork with the output layer scaled down so the
    /// emitted target networks start near zero.
    pub fn init(hyper_topology: MlpTopology, template: MlpTopology, seed: u64) -> Result<Self> {
        let mut mlp = Mlp::init_he(hyper_topology, seed);
        mlp.scale_output_layer(1e-2);
        HyperNet::new(mlp, template)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn template(&self) -> &MlpTopology {
        &self.template
    }

    /// Instantiate the target network for an observation encoding.
    pub fn emit(&self, obs: &[f64]) -> Result<Mlp> {
        let theta = self.mlp.forward(obs)?;
        Mlp::from_params(self.template.clone(), theta)
    }

    /// `forward(unflatten(forward(mlp, obs)), x)`.
    pub fn forward(&self, obs: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.emit(obs)?.forward(x)
    }
}

/// `hyper_forward(h, obs, x)` as a free function mirroring the module ops.
pub fn hyper_forward(h: &HyperNet, obs: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    h.forward(obs, x)
}

/// Combined grasp-regression loss over a batch of 12-vector predictions, and
/// its gradient with respect to each prediction.
pub fn grasp_loss_batch(
    predictions: &[[f64; 12]],
    targets: &[[f64; 12]],
    w: &LossWeights,
) -> (f64, Vec<[f64; 12]>) {
    use crate::geometry::{combined_loss, combined_loss_grad, GraspVector};
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(predictions.len());
    let inv = 1.0 / predictions.len().max(1) as f64;
    for (p, t) in predictions.iter().zip(targets) {
        let hat = GraspVector::new(*p);
        let star = GraspVector::new(*t);
        total += combined_loss(&hat, &star, w) * inv;
        let mut g = combined_loss_grad(&hat, &star, w);
        for v in &mut g {
            *v *= inv;
        }
        grads.push(g);
    }
    (total, grads)
}
