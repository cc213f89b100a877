use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Ix1, Ix3};
use rand::Rng;

use super::{join, uniform_init, Float, Param, Parameterized, SeqBatch, TensorMut};
use crate::error::{Error, Result};

/// Temporal convolution, stride 1, zero "same" padding of `(k - 1) / 2` on
/// each side of every sequence in a batch.
///
/// Implemented as im2col: each output position sees a row
/// `[x[t - pad], ..., x[t + pad]]` (channels contiguous per tap), so the whole
/// ragged batch is one matrix product.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<A> {
    /// out_ch x in_ch x k
    pub kernel: Param<A, Ix3>,
    pub bias: Param<A, Ix1>,
}

impl<A: Float> Conv1d<A> {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, rng: &mut impl Rng) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv kernel size {k} must be odd")));
        }
        let fan_in = in_ch * k;
        Ok(Conv1d {
            kernel: Param::new(uniform_init((out_ch, in_ch, k), fan_in, rng)),
            bias: Param::new(uniform_init(out_ch, fan_in, rng)),
        })
    }

    pub fn from_parts(kernel: Array3<A>, bias: Array1<A>) -> Result<Self> {
        if kernel.dim().2 % 2 == 0 || kernel.dim().0 != bias.len() {
            return Err(Error::Shape(format!(
                "bad conv parts: kernel {:?}, bias {}",
                kernel.dim(),
                bias.len()
            )));
        }
        Ok(Conv1d {
            kernel: Param::new(kernel),
            bias: Param::new(bias),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.value.dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.value.dim().0
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.value.dim().2
    }

    /// Kernel flattened to out_ch x (k * in_ch) in im2col column order.
    fn kernel_matrix(&self) -> Array2<A> {
        let (o, i, k) = self.kernel.value.dim();
        self.kernel
            .value
            .view()
            .permuted_axes([0, 2, 1])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((o, k * i))
            .expect("contiguous")
    }

    fn unfold(&self, x: &SeqBatch<A>) -> Array2<A> {
        let (cin, k) = (self.in_channels(), self.kernel_size());
        let pad = (k - 1) / 2;
        let mut cols = Array2::zeros((x.data.nrows(), k * cin));
        let mut start = 0;
        for &len in &x.lens {
            for t in 0..len {
                let mut row = cols.row_mut(start + t);
                for j in 0..k {
                    let src = t + j;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    row.slice_mut(s![j * cin..(j + 1) * cin])
                        .assign(&x.data.row(start + src - pad));
                }
            }
            start += len;
        }
        cols
    }

    /// Returns the output (N x out_ch) and the unfolded input needed by backward.
    pub fn forward(&self, x: &SeqBatch<A>) -> Result<(Array2<A>, Array2<A>)> {
        if x.data.ncols() != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv1d expects {} input channels, got {}",
                self.in_channels(),
                x.data.ncols()
            )));
        }
        let cols = self.unfold(x);
        let out = cols.dot(&self.kernel_matrix().t()) + &self.bias.value;
        Ok((out, cols))
    }

    pub fn backward(
        &mut self,
        cols: &Array2<A>,
        grad_out: ArrayView2<'_, A>,
        lens: &[usize],
        need_input_grad: bool,
    ) -> Option<Array2<A>> {
        let (o, cin, k) = self.kernel.value.dim();
        let dw = grad_out
            .t()
            .dot(cols)
            .into_shape_with_order((o, k, cin))
            .expect("contiguous");
        self.kernel.grad += &dw.view().permuted_axes([0, 2, 1]);
        self.bias.grad += &grad_out.sum_axis(Axis(0));
        if !need_input_grad {
            return None;
        }
        let dcols = grad_out.dot(&self.kernel_matrix());
        let pad = (k - 1) / 2;
        let mut dx = Array2::zeros((cols.nrows(), cin));
        let mut start = 0;
        for &len in lens {
            for t in 0..len {
                for j in 0..k {
                    let src = t + j;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    let mut dst = dx.row_mut(start + src - pad);
                    dst += &dcols.slice(s![start + t, j * cin..(j + 1) * cin]);
                }
            }
            start += len;
        }
        Some(dx)
    }
}

impl<A: Float> Parameterized<A> for Conv1d<A> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>)) {
        self.kernel.visit(&join(prefix, "kernel"), f);
        self.bias.visit(&join(prefix, "bias"), f);
    }
}
