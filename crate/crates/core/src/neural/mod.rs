//! Minimal layer set with explicit forward/backward passes.
//!
//! Layers are generic over [`Float`] so training runs in `f32` while gradient
//! checks drive the very same code in `f64`. Parameter gradients accumulate
//! (`+=`) into [`Param::grad`] during backward; callers zero them between
//! optimizer steps.

mod adam;
mod adapter;
mod batchnorm;
mod conv;
mod gradcheck;
mod gru;
mod linear;
mod ops;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array, Array2, ArrayView2, Dimension, LinalgScalar, ScalarOperand};
use num_traits::FromPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, Adam, AdamConfig};
pub use adapter::{AdapterBlock, AdapterCache};
pub use batchnorm::{BatchNorm, BnCache, BN_EPS, BN_MOMENTUM};
pub use conv::Conv1d;
pub use gradcheck::{gradient_check, gradient_check_module, relative_error};
pub use gru::{bigru_encode, gru_sequence, BiGru, BiGruCache, Direction, Gru, GruCache};
pub use linear::Linear;
pub use ops::{
    cosine_similarity, l2_normalize_backward, l2_normalize_rows, mean_pool, mean_pool_backward,
    relu, relu_backward,
};

/// Scalar type the layers are generic over (`f32` or `f64`).
pub trait Float:
    LinalgScalar
    + num_traits::Float
    + ScalarOperand
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
}

impl Float for f32 {}
impl Float for f64 {}

#[inline]
pub fn cst<A: Float>(v: f64) -> A {
    A::from_f64(v).expect("representable constant")
}

/// Train mode uses batch statistics in batch normalization; eval uses running ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<A, D: Dimension> {
    pub value: Array<A, D>,
    pub grad: Array<A, D>,
}

impl<A: Float, D: Dimension> Param<A, D> {
    pub fn new(value: Array<A, D>) -> Self {
        let value = if value.is_standard_layout() {
            value
        } else {
            value.as_standard_layout().into_owned()
        };
        let grad = Array::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn visit(&mut self, name: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>)) {
        let shape = self.value.shape().to_vec();
        f(
            name,
            TensorMut {
                shape: &shape,
                value: self.value.as_slice_mut().expect("standard layout"),
                grad: Some(self.grad.as_slice_mut().expect("standard layout")),
            },
        );
    }
}

/// Mutable view of one named tensor. `grad` is `None` for non-learnable
/// buffers such as batch-norm running statistics.
pub struct TensorMut<'a, A> {
    pub shape: &'a [usize],
    pub value: &'a mut [A],
    pub grad: Option<&'a mut [A]>,
}

/// Anything holding named parameters and buffers, visited in a fixed order.
pub trait Parameterized<A> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>));

    fn zero_grad(&mut self)
    where
        A: Float,
    {
        self.visit("", &mut |_, t| {
            if let Some(g) = t.grad {
                g.fill(A::zero());
            }
        });
    }

    /// Number of learnable scalars.
    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| {
            if t.grad.is_some() {
                n += t.value.len();
            }
        });
        n
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Variable-length sequences stacked row-wise: sequence `i` occupies the
/// `lens[i]` rows following the previous sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch<A> {
    pub data: Array2<A>,
    pub lens: Vec<usize>,
}

impl<A: Float> SeqBatch<A> {
    pub fn new(data: Array2<A>, lens: Vec<usize>) -> crate::Result<Self> {
        if lens.iter().sum::<usize>() != data.nrows() {
            return Err(crate::Error::Shape(format!(
                "sequence lengths sum to {}, data has {} rows",
                lens.iter().sum::<usize>(),
                data.nrows()
            )));
        }
        if lens.iter().any(|&l| l == 0) {
            return Err(crate::Error::EmptyInput("empty sequence in batch".into()));
        }
        Ok(SeqBatch { data, lens })
    }

    pub fn single(x: ArrayView2<'_, A>) -> crate::Result<Self> {
        Self::new(x.to_owned(), vec![x.nrows()])
    }

    /// Stacks independent sequences.
    pub fn stack(seqs: &[ArrayView2<'_, A>]) -> crate::Result<Self> {
        let lens = seqs.iter().map(|s| s.nrows()).collect();
        let data = ndarray::concatenate(ndarray::Axis(0), seqs)
            .map_err(|e| crate::Error::Shape(format!("cannot stack sequences: {e}")))?;
        Self::new(data, lens)
    }

    pub fn batch_size(&self) -> usize {
        self.lens.len()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.lens
            .iter()
            .map(|l| {
                let o = acc;
                acc += l;
                o
            })
            .collect()
    }
}

/// PyTorch-style default init: uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init<A: Float, D: Dimension, Sh: ndarray::ShapeBuilder<Dim = D>>(
    shape: Sh,
    fan_in: usize,
    rng: &mut impl Rng,
) -> Array<A, D> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array::from_shape_simple_fn(shape, || cst(rng.gen_range(-bound..bound)))
}
