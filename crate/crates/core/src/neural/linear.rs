use ndarray::{Array2, ArrayView2, Axis, Ix1, Ix2};
use rand::Rng;

use super::{join, uniform_init, Float, Param, Parameterized, TensorMut};
use crate::error::{Error, Result};

/// `y = x W^T + b` applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<A> {
    /// out_dim x in_dim
    pub weight: Param<A, Ix2>,
    pub bias: Param<A, Ix1>,
}

impl<A: Float> Linear<A> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Param::new(uniform_init((out_dim, in_dim), in_dim, rng)),
            bias: Param::new(uniform_init(out_dim, in_dim, rng)),
        }
    }

    pub fn from_parts(weight: Array2<A>, bias: ndarray::Array1<A>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "linear weight has {} rows, bias has {}",
                weight.nrows(),
                bias.len()
            )));
        }
        Ok(Linear {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: ArrayView2<'_, A>) -> Result<Array2<A>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "linear expects {} features, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight.value.t()) + &self.bias.value)
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(
        &mut self,
        x: ArrayView2<'_, A>,
        grad_out: ArrayView2<'_, A>,
        need_input_grad: bool,
    ) -> Option<Array2<A>> {
        self.weight.grad += &grad_out.t().dot(&x);
        self.bias.grad += &grad_out.sum_axis(Axis(0));
        need_input_grad.then(|| grad_out.dot(&self.weight.value))
    }
}

impl<A: Float> Parameterized<A> for Linear<A> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>)) {
        self.weight.visit(&join(prefix, "weight"), f);
        self.bias.visit(&join(prefix, "bias"), f);
    }
}
