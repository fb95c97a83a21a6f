use rand::Rng;

use crate::autodiff::{leaky_relu, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Slope of the leaky-ReLU applied after every hidden layer.
pub const HIDDEN_SLOPE: f64 = 0.01;
/// The output layer is linear.
pub const OUTPUT_SLOPE: f64 = 1.0;

/// Layer widths of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = MlpSpec {
            input_dim,
            output_dim,
            hidden,
        };
        if spec.widths().contains(&0) {
            return Err(Error::config(format!(
                "layer widths must be positive: {:?}",
                spec.widths()
            )));
        }
        Ok(spec)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Multilayer perceptron with leaky-ReLU hidden activations and a linear
/// output. Parameters are stored as `[W_0, b_0, W_1, b_1, ...]` with `W_i` of
/// shape `in x out` and `b_i` of shape `1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<Matrix>,
}

impl Mlp {
    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut params = Vec::new();
        for w in spec.widths().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            params.push(Matrix::from_vec(fan_in, fan_out, data).expect("sized above"));
            params.push(Matrix::zeros(1, fan_out));
        }
        Mlp { spec, params }
    }

    pub fn from_params(spec: MlpSpec, params: Vec<Matrix>) -> Result<Self> {
        let widths = spec.widths();
        let expected: Vec<(usize, usize)> = widths
            .windows(2)
            .flat_map(|w| [(w[0], w[1]), (1, w[1])])
            .collect();
        if params.len() != expected.len() {
            return Err(Error::config(format!(
                "expected {} parameter blocks, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (p, &shape) in params.iter().zip(&expected) {
            if p.shape() != shape {
                return Err(Error::Shape {
                    op: "mlp_params",
                    lhs: shape,
                    rhs: p.shape(),
                });
            }
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.params.len() / 2
    }

    fn check_input(&self, x: (usize, usize)) -> Result<()> {
        if x.1 != self.spec.input_dim {
            return Err(Error::Shape {
                op: "mlp_forward",
                lhs: x,
                rhs: (self.spec.input_dim, self.spec.output_dim),
            });
        }
        Ok(())
    }

    /// Forward pass outside of any tape.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x.shape())?;
        let layers = self.num_layers();
        let mut h = x.clone();
        for l in 0..layers {
            let (w, b) = (&self.params[2 * l], &self.params[2 * l + 1]);
            h = h.matmul(w)?;
            for i in 0..h.rows() {
                for (v, bias) in h.row_mut(i).iter_mut().zip(b.as_slice()) {
                    *v += bias;
                }
            }
            if l + 1 < layers {
                h = h.map(|v| leaky_relu(v, HIDDEN_SLOPE));
            }
        }
        Ok(h)
    }

    /// Records the parameters on a tape, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.clone(), trainable))
            .collect();
        BoundMlp {
            input_dim: self.spec.input_dim,
            vars,
        }
    }
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    input_dim: usize,
    vars: Vec<Var>,
}

impl BoundMlp {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape();
        if shape.1 != self.input_dim {
            return Err(Error::Shape {
                op: "mlp_forward",
                lhs: shape,
                rhs: (self.input_dim, 0),
            });
        }
        let layers = self.vars.len() / 2;
        let mut h = x;
        for l in 0..layers {
            let z = tape.matmul(h, self.vars[2 * l])?;
            h = tape.add_bias(z, self.vars[2 * l + 1])?;
            if l + 1 < layers {
                h = tape.leaky_relu(h, HIDDEN_SLOPE);
            }
        }
        Ok(h)
    }

    /// Gradient values for every parameter, zeros where no path exists.
    pub fn grad_values(&self, tape: &Tape, grads: &crate::autodiff::Gradients) -> Vec<Matrix> {
        self.vars
            .iter()
            .map(|&v| match grads.get(v) {
                Some(g) => tape.value(g).clone(),
                None => {
                    let (r, c) = tape.value(v).shape();
                    Matrix::zeros(r, c)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_is_deterministic() {
        let spec = MlpSpec::new(3, vec![8, 4], 2).unwrap();
        let a = Mlp::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(5));
        let b = Mlp::init(spec, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn param_count_and_bounds() {
        let spec = MlpSpec::new(3, vec![8, 4], 2).unwrap();
        assert_eq!(spec.param_count(), 3 * 8 + 8 + 8 * 4 + 4 + 4 * 2 + 2);
        let m = Mlp::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(1));
        let total: usize = m.params().iter().map(Matrix::len).sum();
        assert_eq!(total, spec.param_count());
        let bound = (6.0f64 / 11.0).sqrt();
        assert!(m.params()[0].as_slice().iter().all(|w| w.abs() <= bound));
        assert!(m.params()[1].as_slice().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn no_hidden_layers_is_affine() {
        let spec = MlpSpec::new(3, vec![], 1).unwrap();
        let m = Mlp::init(spec, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(m.num_layers(), 1);
        assert_eq!(m.params()[0].shape(), (3, 1));
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let w = m.params()[0].as_slice();
        let expected = w[0] - 2.0 * w[1] + 0.5 * w[2];
        assert!((m.forward(&x).unwrap()[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let spec = MlpSpec::new(4, vec![6, 5], 3).unwrap();
        let m = Mlp::init(spec, &mut ChaCha8Rng::seed_from_u64(3));
        let x = Matrix::from_rows(&[[0.1, -0.4, 2.0, 1.0], [-1.0, 0.3, 0.0, 0.7]]).unwrap();
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let y = bound.forward(&mut tape, xv).unwrap();
        assert_eq!(tape.value(y), &m.forward(&x).unwrap());
        assert!(m.forward(&Matrix::zeros(1, 2)).is_err());
        assert!(MlpSpec::new(0, vec![], 1).is_err());
    }
}
