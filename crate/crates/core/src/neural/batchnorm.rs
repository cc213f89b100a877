use ndarray::{Array1, Array2, ArrayView2, Axis, Ix1, Zip};

use super::{cst, join, Float, Mode, Param, Parameterized, TensorMut};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over all rows (valid positions) of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<A> {
    pub gamma: Param<A, Ix1>,
    pub beta: Param<A, Ix1>,
    pub running_mean: Array1<A>,
    pub running_var: Array1<A>,
    pub eps: A,
    pub momentum: A,
}

/// Saved normalized input and inverse standard deviation.
#[derive(Debug, Clone)]
pub struct BnCache<A> {
    xhat: Array2<A>,
    inv_std: Array1<A>,
    mode: Mode,
}

impl<A: Float> BatchNorm<A> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(Array1::ones(channels)),
            beta: Param::new(Array1::zeros(channels)),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: cst(BN_EPS),
            momentum: cst(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    /// Train mode normalizes by batch statistics (biased variance) and moves the
    /// running estimates toward them, using the unbiased variance for the
    /// running update. Eval mode uses the running estimates.
    pub fn forward(&mut self, x: ArrayView2<'_, A>, mode: Mode) -> Result<(Array2<A>, BnCache<A>)> {
        if x.ncols() != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm expects {} channels, got {}",
                self.channels(),
                x.ncols()
            )));
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let n = x.nrows();
                if n < 2 {
                    return Err(Error::DegenerateBatch(format!(
                        "train-mode batchnorm needs at least 2 positions, got {n}"
                    )));
                }
                let mean = x.mean_axis(Axis(0)).expect("rows");
                let mut var = Array1::<A>::zeros(x.ncols());
                for row in x.rows() {
                    Zip::from(&mut var).and(row).and(&mean).for_each(|v, &xv, &m| {
                        let d = xv - m;
                        *v += d * d;
                    });
                }
                var /= A::from_usize(n).unwrap();
                let m = self.momentum;
                let unbias = A::from_usize(n).unwrap() / A::from_usize(n - 1).unwrap();
                Zip::from(&mut self.running_mean).and(&mean).for_each(|r, &b| *r = (A::one() - m) * *r + m * b);
                Zip::from(&mut self.running_var)
                    .and(&var)
                    .for_each(|r, &b| *r = (A::one() - m) * *r + m * b * unbias);
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std = var.mapv(|v| A::one() / (v + self.eps).sqrt());
        let mut xhat = x.to_owned();
        for mut row in xhat.rows_mut() {
            Zip::from(&mut row).and(&mean).and(&inv_std).for_each(|v, &m, &s| *v = (*v - m) * s);
        }
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            Zip::from(&mut row)
                .and(&self.gamma.value)
                .and(&self.beta.value)
                .for_each(|v, &g, &b| *v = *v * g + b);
        }
        Ok((y, BnCache { xhat, inv_std, mode }))
    }

    /// Eval-mode forward; never touches the running statistics.
    pub fn eval(&self, x: ArrayView2<'_, A>) -> Result<Array2<A>> {
        if x.ncols() != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm expects {} channels, got {}",
                self.channels(),
                x.ncols()
            )));
        }
        let scale = Zip::from(&self.running_var)
            .and(&self.gamma.value)
            .map_collect(|&v, &g| g / (v + self.eps).sqrt());
        let mut y = x.to_owned();
        for mut row in y.rows_mut() {
            Zip::from(&mut row)
                .and(&self.running_mean)
                .and(&scale)
                .and(&self.beta.value)
                .for_each(|v, &m, &s, &b| *v = (*v - m) * s + b);
        }
        Ok(y)
    }

    pub fn backward(&mut self, cache: &BnCache<A>, grad_out: ArrayView2<'_, A>) -> Array2<A> {
        let BnCache { xhat, inv_std, mode } = cache;
        self.beta.grad += &grad_out.sum_axis(Axis(0));
        self.gamma.grad += &(&grad_out * xhat).sum_axis(Axis(0));
        let mut dxhat = grad_out.to_owned();
        for mut row in dxhat.rows_mut() {
            row *= &self.gamma.value;
        }
        match mode {
            Mode::Eval => {
                for mut row in dxhat.rows_mut() {
                    row *= inv_std;
                }
                dxhat
            }
            Mode::Train => {
                let n = A::from_usize(xhat.nrows()).unwrap();
                let sum_d = dxhat.sum_axis(Axis(0));
                let sum_dx = (&dxhat * xhat).sum_axis(Axis(0));
                let mut dx = dxhat;
                for (mut row, xr) in dx.rows_mut().into_iter().zip(xhat.rows()) {
                    Zip::from(&mut row)
                        .and(xr)
                        .and(&sum_d)
                        .and(&sum_dx)
                        .and(inv_std)
                        .for_each(|d, &xh, &sd, &sdx, &is| *d = is / n * (n * *d - sd - xh * sdx));
                }
                dx
            }
        }
    }
}

impl<A: Float> Parameterized<A> for BatchNorm<A> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>)) {
        self.gamma.visit(&join(prefix, "gamma"), f);
        self.beta.visit(&join(prefix, "beta"), f);
        let shape = [self.running_mean.len()];
        f(
            &join(prefix, "running_mean"),
            TensorMut { shape: &shape, value: self.running_mean.as_slice_mut().unwrap(), grad: None },
        );
        f(
            &join(prefix, "running_var"),
            TensorMut { shape: &shape, value: self.running_var.as_slice_mut().unwrap(), grad: None },
        );
    }
}
