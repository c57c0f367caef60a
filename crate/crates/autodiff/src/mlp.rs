use rand::Rng;

use crate::adam::Adam;
use crate::error::AutodiffError;
use crate::graph::{Gradients, Graph, Var};
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

/// Fully connected layer, `y = x·W + b` with `W: [fan_in, fan_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Nodes recorded by one forward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub output: Var,
    /// `W1, b1, W2, b2, ...` in construction order.
    pub params: Vec<Var>,
    /// Pre-activation `z_l` of every layer.
    pub pre_activations: Vec<Var>,
}

impl MlpTrace {
    /// Parameter gradients in construction order; unreachable ones are zero.
    pub fn param_grads(&self, grads: &Gradients, mlp: &Mlp) -> Vec<Tensor> {
        self.params
            .iter()
            .zip(mlp.params())
            .map(|(v, p)| grads.get_or_zeros(*v, p))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    activations: Vec<Activation>,
    frozen: bool,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last
    /// layer uses `output`. Weights and biases are drawn uniformly from
    /// `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let n = sizes.len() - 1;
        let activations = (0..n).map(|i| if i + 1 == n { output } else { hidden }).collect();
        Self::with_activations(sizes, activations, rng)
    }

    pub fn with_activations<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: Vec<Activation>,
        rng: &mut R,
    ) -> Self {
        assert_eq!(activations.len() + 1, sizes.len());
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> {
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                };
                Linear {
                    weight: Tensor::new(vec![fan_in, fan_out], draw(fan_in * fan_out)).unwrap(),
                    bias: Tensor::new(vec![fan_out], draw(fan_out)).unwrap(),
                }
            })
            .collect();
        Self { layers, activations, frozen: false }
    }

    pub fn from_layers(layers: Vec<Linear>, activations: Vec<Activation>) -> Result<Self, AutodiffError> {
        if layers.len() != activations.len() || layers.is_empty() {
            return Err(AutodiffError::Shape("layer/activation count mismatch".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.rank() != 2 || l.bias.len() != l.weight.cols() {
                return Err(AutodiffError::Shape(format!("layer {i} has inconsistent bias")));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(AutodiffError::Shape(format!("layer {i} width mismatch")));
            }
        }
        Ok(Self { layers, activations, frozen: false })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// FNV-1a over every parameter's bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for &d in p.shape() {
                h = fnv_step(h, d as u64);
            }
            for v in p.data() {
                h = fnv_step(h, v.to_bits());
            }
        }
        h
    }

    fn check_input(&self, x: &Tensor) -> Result<(), AutodiffError> {
        if x.rank() != 2 || x.cols() != self.input_width() {
            return Err(AutodiffError::Shape(format!(
                "input {:?} does not match MLP input width {}",
                x.shape(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Records a forward pass with the parameters as differentiable leaves.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<MlpTrace, AutodiffError> {
        self.check_input(g.value(x))?;
        let params: Vec<Var> = self.params().into_iter().map(|p| g.variable(p.clone())).collect();
        self.forward_with(g, x, params)
    }

    /// Forward pass with the parameters recorded as constants, so gradients
    /// flow only to `x`.
    pub fn forward_const(&self, g: &mut Graph, x: Var) -> Result<MlpTrace, AutodiffError> {
        self.check_input(g.value(x))?;
        let params: Vec<Var> = self.params().into_iter().map(|p| g.constant(p.clone())).collect();
        self.forward_with(g, x, params)
    }

    /// Forward pass over the parameter leaves of an earlier trace, so both
    /// passes accumulate into the same gradients.
    pub fn forward_shared(&self, g: &mut Graph, x: Var, trace: &MlpTrace) -> Result<MlpTrace, AutodiffError> {
        self.check_input(g.value(x))?;
        if trace.params.len() != 2 * self.layers.len() {
            return Err(AutodiffError::Shape("trace belongs to a different architecture".into()));
        }
        self.forward_with(g, x, trace.params.clone())
    }

    /// Forward pass reading parameters out of one flat leaf (layout of
    /// [`Mlp::params`]). Used to finite-difference parameter gradients.
    pub fn forward_flat(&self, g: &mut Graph, x: Var, flat: Var) -> Result<MlpTrace, AutodiffError> {
        self.check_input(g.value(x))?;
        if g.value(flat).len() != self.param_count() {
            return Err(AutodiffError::Shape("flat parameter length".into()));
        }
        let mut params = Vec::new();
        let mut offset = 0;
        for p in self.params() {
            params.push(g.slice(flat, offset, p.shape())?);
            offset += p.len();
        }
        self.forward_with(g, x, params)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().into_iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    fn forward_with(&self, g: &mut Graph, x: Var, params: Vec<Var>) -> Result<MlpTrace, AutodiffError> {
        let mut h = x;
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, act) in self.activations.iter().enumerate() {
            let z = g.matmul(h, params[2 * i])?;
            let z = g.add_bias(z, params[2 * i + 1])?;
            pre.push(z);
            h = match act {
                Activation::Identity => z,
                Activation::Tanh => g.tanh(z),
                Activation::Relu => g.relu(z),
            };
        }
        Ok(MlpTrace { output: h, params, pre_activations: pre })
    }

    /// Graph-free evaluation.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, AutodiffError> {
        self.check_input(x)?;
        let n = x.rows();
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let (k, m) = (layer.weight.rows(), layer.weight.cols());
            let mut out = Tensor::zeros(&[n, m]);
            for row in out.data_mut().chunks_mut(m) {
                row.copy_from_slice(layer.bias.data());
            }
            gemm(n, k, m, h.data(), (k, 1), layer.weight.data(), (m, 1), out.data_mut(), 1.0);
            if *act != Activation::Identity {
                out.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            h = out;
        }
        Ok(h)
    }

    /// Builds the forward pass and a node whose value is `∇ₓ f(x)` for each
    /// row of `x`. The node is assembled from weight transposes and
    /// activation-derivative masks, so it is itself differentiable in the
    /// parameters. Requires a scalar-output network.
    pub fn input_gradient_node(&self, g: &mut Graph, x: Var) -> Result<(MlpTrace, Var), AutodiffError> {
        if self.output_width() != 1 {
            return Err(AutodiffError::Unsupported(
                "input gradient needs a scalar-output network".into(),
            ));
        }
        let trace = self.forward(g, x)?;
        let grad = self.input_gradient_from_trace(g, &trace)?;
        Ok((trace, grad))
    }

    pub fn input_gradient_from_trace(&self, g: &mut Graph, trace: &MlpTrace) -> Result<Var, AutodiffError> {
        let n = g.value(trace.output).rows();
        let last = self.layers.len() - 1;
        let mut delta = match self.activation_derivative(g, self.activations[last], trace.pre_activations[last]) {
            Some(d) => d,
            None => g.constant(Tensor::filled(&[n, 1], 1.0)),
        };
        for l in (0..=last).rev() {
            let back = g.matmul_bt(delta, trace.params[2 * l])?;
            if l == 0 {
                return Ok(back);
            }
            delta = match self.activation_derivative(g, self.activations[l - 1], trace.pre_activations[l - 1]) {
                Some(d) => g.mul(back, d)?,
                None => back,
            };
        }
        unreachable!("loop returns at layer 0")
    }

    fn activation_derivative(&self, g: &mut Graph, act: Activation, z: Var) -> Option<Var> {
        match act {
            Activation::Identity => None,
            Activation::Tanh => Some(g.tanh_deriv(z)),
            Activation::Relu => Some(g.relu_mask(z)),
        }
    }

    /// One Adam step on this network's parameters.
    pub fn apply_adam(&mut self, adam: &mut Adam, grads: &[Tensor]) -> Result<(), AutodiffError> {
        if self.frozen {
            return Err(AutodiffError::Frozen);
        }
        adam.step(&mut self.params_mut(), grads)
    }

    /// `self ← tau·live + (1 − tau)·self`.
    pub fn soft_update_from(&mut self, live: &Mlp, tau: f64) {
        for (t, l) in self.params_mut().into_iter().zip(live.params()) {
            for (a, b) in t.data_mut().iter_mut().zip(l.data()) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
    }

    pub fn copy_params_from(&mut self, other: &Mlp) {
        for (t, l) in self.params_mut().into_iter().zip(other.params()) {
            t.data_mut().copy_from_slice(l.data());
        }
    }

    /// Squared L2 distance between the parameter vectors of two networks
    /// with identical architecture.
    pub fn param_distance_sq(&self, other: &Mlp) -> f64 {
        self.params()
            .iter()
            .zip(other.params())
            .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .sum()
    }
}

fn fnv_step(h: u64, v: u64) -> u64 {
    let mut h = h;
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(w: f64, b: f64, act: Activation) -> Mlp {
        Mlp::from_layers(
            vec![Linear {
                weight: Tensor::new(vec![1, 1], vec![w]).unwrap(),
                bias: Tensor::new(vec![1], vec![b]).unwrap(),
            }],
            vec![act],
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::from_layers(
            vec![Linear {
                weight: Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                bias: Tensor::zeros(&[2]),
            }],
            vec![Activation::Identity],
        )
        .unwrap();
        let out = mlp.predict(&Tensor::row_vector(&[1.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_single_unit() {
        let mlp = single(2.0, 1.0, Activation::Identity);
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(&[3.0]));
        let tr = mlp.forward(&mut g, x).unwrap();
        assert_eq!(g.value(tr.output).item(), 7.0);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&[3, 4, 1], Activation::Tanh, Activation::Identity, &mut rng);
        assert!(mlp.predict(&Tensor::row_vector(&[1.0, 2.0])).is_err());
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(&[1.0, 2.0]));
        assert!(matches!(mlp.forward(&mut g, x), Err(AutodiffError::Shape(_))));
    }

    #[test]
    fn input_gradient_of_linear_is_weight() {
        let mlp = Mlp::from_layers(
            vec![Linear {
                weight: Tensor::new(vec![3, 1], vec![0.5, -2.0, 1.5]).unwrap(),
                bias: Tensor::new(vec![1], vec![0.3]).unwrap(),
            }],
            vec![Activation::Identity],
        )
        .unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]]).unwrap());
        let (_, grad) = mlp.input_gradient_node(&mut g, x).unwrap();
        assert_eq!(g.value(grad).data(), &[0.5, -2.0, 1.5, 0.5, -2.0, 1.5]);
    }

    #[test]
    fn input_gradient_of_tanh_at_zero_is_one() {
        let mlp = single(1.0, 0.0, Activation::Tanh);
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(&[0.0]));
        let (_, grad) = mlp.input_gradient_node(&mut g, x).unwrap();
        assert_eq!(g.value(grad).item(), 1.0);
    }

    #[test]
    fn input_gradient_requires_scalar_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[2, 3, 2], Activation::Relu, Activation::Identity, &mut rng);
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(&[0.1, 0.2]));
        assert!(matches!(mlp.input_gradient_node(&mut g, x), Err(AutodiffError::Unsupported(_))));
    }

    #[test]
    fn predict_matches_recorded_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::new(&[4, 8, 8, 3], Activation::Relu, Activation::Tanh, &mut rng);
        let x = Tensor::from_rows(&[[0.1, -0.2, 0.3, 0.9], [1.0, 2.0, -1.0, 0.0]]).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let tr = mlp.forward(&mut g, xv).unwrap();
        assert!(g.value(tr.output).max_abs_diff(&mlp.predict(&x).unwrap()) < 1e-14);
    }

    #[test]
    fn init_is_bounded_by_inverse_sqrt_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&[16, 4], Activation::Relu, Activation::Identity, &mut rng);
        assert!(mlp.flat_params().iter().all(|v| v.abs() < 0.25));
        assert_eq!(mlp.param_count(), 16 * 4 + 4);
    }

    #[test]
    fn frozen_network_rejects_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mlp = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng);
        let mut adam = Adam::for_params(&mlp.params(), 1e-3);
        mlp.freeze();
        let before = mlp.checksum();
        let grads: Vec<Tensor> = mlp.params().iter().map(|p| Tensor::filled(p.shape(), 1.0)).collect();
        assert!(matches!(mlp.apply_adam(&mut adam, &grads), Err(AutodiffError::Frozen)));
        assert_eq!(before, mlp.checksum());
    }

    #[test]
    fn soft_update_with_unit_rate_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let live = Mlp::new(&[3, 5, 1], Activation::Relu, Activation::Identity, &mut rng);
        let mut target = Mlp::new(&[3, 5, 1], Activation::Relu, Activation::Identity, &mut rng);
        target.soft_update_from(&live, 1.0);
        assert_eq!(target.flat_params(), live.flat_params());
    }
}
