use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Gradients, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Layer widths and activation of a fully connected network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Rows of the output are scaled to unit norm (encoders).
    pub normalize_output: bool,
}

impl MlpSpec {
    pub fn encoder(layer_dims: Vec<usize>) -> Self {
        Self {
            layer_dims,
            activation: Activation::Relu,
            normalize_output: true,
        }
    }

    pub fn decoder(layer_dims: Vec<usize>) -> Self {
        Self {
            layer_dims,
            activation: Activation::Relu,
            normalize_output: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::config(format!(
                "an MLP needs at least two layer dims, got {:?}",
                self.layer_dims
            )));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::config(format!(
                "layer dims must be positive, got {:?}",
                self.layer_dims
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }
}

pub fn weight_name(layer: usize) -> String {
    format!("layer_{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("layer_{layer}.bias")
}

/// Parameters of an [`Mlp`] registered as leaves on one tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    layers: Vec<(Var, Var)>,
}

impl BoundParams {
    /// Collects the gradient of every parameter under its name.
    pub fn gradients(&self, grads: &Gradients) -> Result<ParamSet> {
        let mut out = ParamSet::new();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            out.insert(weight_name(i), grads.wrt(*w))?;
            out.insert(bias_name(i), grads.wrt(*b))?;
        }
        Ok(out)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|(w, b)| [*w, *b])
    }
}

/// Fully connected network: `x·W + b` per layer, activation between layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamSet,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamSet::new();
        for (i, pair) in spec.layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| rng.uniform_range(-limit, limit))
                .collect();
            params.insert(weight_name(i), Tensor::matrix(fan_in, fan_out, w)?)?;
            params.insert(bias_name(i), Tensor::zeros(&[fan_out])?)?;
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        if params.len() != 2 * spec.num_layers() {
            return Err(Error::contract(format!(
                "expected {} parameter tensors, got {}",
                2 * spec.num_layers(),
                params.len()
            )));
        }
        for (i, pair) in spec.layer_dims.windows(2).enumerate() {
            let w = params
                .get(&weight_name(i))
                .ok_or_else(|| Error::contract(format!("missing {}", weight_name(i))))?;
            let b = params
                .get(&bias_name(i))
                .ok_or_else(|| Error::contract(format!("missing {}", bias_name(i))))?;
            if w.shape() != [pair[0], pair[1]] || b.shape() != [pair[1]] {
                return Err(Error::contract(format!(
                    "layer {i} parameter shapes {:?}/{:?} do not match dims {:?}",
                    w.shape(),
                    b.shape(),
                    pair
                )));
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.register(tape, true)
    }

    /// Registers every parameter as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundParams {
        self.register(tape, false)
    }

    /// Binds every parameter as a constant except `name`, which is taken from
    /// the existing node `var` (used to differentiate with respect to one tensor).
    pub fn bind_with_override(&self, tape: &mut Tape, name: &str, var: Var) -> Result<BoundParams> {
        let target = self
            .params
            .get(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))?;
        if tape.value(var).shape() != target.shape() {
            return Err(Error::shape(format!(
                "override for {name} has shape {:?}, expected {:?}",
                tape.value(var).shape(),
                target.shape()
            )));
        }
        let mut bound = self.bind_frozen(tape);
        for (i, (w, b)) in bound.layers.iter_mut().enumerate() {
            if weight_name(i) == name {
                *w = var;
            } else if bias_name(i) == name {
                *b = var;
            }
        }
        Ok(bound)
    }

    fn register(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let layers = (0..self.spec.num_layers())
            .map(|i| {
                let w = self.params.get(&weight_name(i)).expect("validated").clone();
                let b = self.params.get(&bias_name(i)).expect("validated").clone();
                if trainable {
                    (tape.leaf(w), tape.leaf(b))
                } else {
                    (tape.constant(w), tape.constant(b))
                }
            })
            .collect();
        BoundParams { layers }
    }

    /// Forward pass on a tape using previously bound parameters.
    pub fn forward_on(&self, tape: &mut Tape, bound: &BoundParams, x: Var) -> Result<Var> {
        let xs = tape.value(x).shape().to_vec();
        if xs.len() != 2 || xs[1] != self.spec.input_dim() {
            return Err(Error::shape(format!(
                "network expects [B×{}] input, got {:?}",
                self.spec.input_dim(),
                xs
            )));
        }
        let mut h = x;
        let last = bound.layers.len() - 1;
        for (i, (w, b)) in bound.layers.iter().enumerate() {
            let z = tape.matmul(h, *w)?;
            h = tape.add_row(z, *b)?;
            if i < last {
                h = match self.spec.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        if self.spec.normalize_output {
            h = tape.l2_normalize(h)?;
        }
        Ok(h)
    }

    /// Gradient-free forward pass.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward_on(&mut tape, &bound, xv)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn identity_layer(d: usize, normalize: bool) -> Mlp {
        let spec = MlpSpec {
            layer_dims: vec![d, d],
            activation: Activation::Relu,
            normalize_output: normalize,
        };
        let mut p = ParamSet::new();
        p.insert(weight_name(0), Tensor::identity(d).unwrap()).unwrap();
        p.insert(bias_name(0), Tensor::zeros(&[d]).unwrap()).unwrap();
        Mlp::from_params(spec, p).unwrap()
    }

    #[test]
    fn encoder_rows_are_unit_norm() {
        let mut rng = Rng::new(2);
        let enc = Mlp::new(MlpSpec::encoder(vec![5, 16, 16, 3]), &mut rng).unwrap();
        let x = rng.gaussian_tensor(&[10, 5]).unwrap();
        let z = enc.forward(&x).unwrap();
        for i in 0..10 {
            let n: f64 = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_network_is_degenerate() {
        let mut rng = Rng::new(2);
        let mut enc = Mlp::new(MlpSpec::encoder(vec![4, 8, 3]), &mut rng).unwrap();
        for (_, t) in enc.params_mut().iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = rng.gaussian_tensor(&[2, 4]).unwrap();
        assert!(matches!(enc.forward(&x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn identity_encoder_normalizes() {
        let enc = identity_layer(2, true);
        let z = enc.forward(&Tensor::from_rows(&[[3.0, 4.0]]).unwrap()).unwrap();
        assert!((z.data()[0] - 0.6).abs() < 1e-15);
        assert!((z.data()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn identity_decoder_passes_through() {
        let dec = identity_layer(2, false);
        let x = dec.forward(&Tensor::from_rows(&[[1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(x.data(), &[1.0, 0.0]);
    }

    #[test]
    fn decoder_output_is_finite() {
        let mut rng = Rng::new(8);
        let dec = Mlp::new(MlpSpec::decoder(vec![3, 32, 32, 7]), &mut rng).unwrap();
        let z = rng.gaussian_tensor(&[6, 3]).unwrap().map(|v| v * 100.0);
        assert!(dec.forward(&z).unwrap().is_finite());
    }

    #[test]
    fn input_width_checked() {
        let mut rng = Rng::new(1);
        let dec = Mlp::new(MlpSpec::decoder(vec![3, 4]), &mut rng).unwrap();
        assert!(matches!(
            dec.forward(&Tensor::zeros(&[2, 4]).unwrap()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = MlpSpec::encoder(vec![10, 20, 4]);
        let a = Mlp::new(spec.clone(), &mut Rng::new(77)).unwrap();
        let b = Mlp::new(spec, &mut Rng::new(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn glorot_limits_respected() {
        let spec = MlpSpec::decoder(vec![30, 10]);
        let m = Mlp::new(spec, &mut Rng::new(3)).unwrap();
        let limit = (6.0f64 / 40.0).sqrt();
        let w = m.params().get("layer_0.weight").unwrap();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
        assert!(m.params().get("layer_0.bias").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decoder_mse_gradient_matches_finite_differences() {
        let mut rng = Rng::new(12);
        let dec = Mlp::new(
            MlpSpec {
                layer_dims: vec![3, 5, 4],
                activation: Activation::Tanh,
                normalize_output: false,
            },
            &mut rng,
        )
        .unwrap();
        let z = rng.gaussian_tensor(&[4, 3]).unwrap();
        let target = rng.gaussian_tensor(&[4, 4]).unwrap();
        for layer_param in ["layer_0.weight", "layer_1.weight", "layer_1.bias"] {
            let point = dec.params().get(layer_param).unwrap().clone();
            let err = grad_check(
                |t, p| {
                    let bound = dec.bind_with_override(t, layer_param, p)?;
                    let zv = t.constant(z.clone());
                    let out = dec.forward_on(t, &bound, zv)?;
                    let tv = t.constant(target.clone());
                    crate::losses::mse_reconstruction(t, tv, out)
                },
                &point,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{layer_param}: {err}");
        }
    }
}
