use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{
    join, mean_pool, mean_pool_backward, relu, relu_backward, BatchNorm, BnCache, Conv1d, Float,
    Linear, Mode, Parameterized, SeqBatch, TensorMut,
};
use crate::error::Result;

/// Conv1D -> BatchNorm -> ReLU -> temporal mean-pool -> Linear.
///
/// Maps a batch of variable-length sequences (`in_dim` features per step) to
/// one `out_dim` vector per sequence. The same block serves as in-domain
/// adapter (frames -> video), room encoder (videos -> room) and museum
/// encoder (rooms -> museum).
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterBlock<A> {
    pub conv: Conv1d<A>,
    pub bn: BatchNorm<A>,
    pub linear: Linear<A>,
}

#[derive(Debug, Clone)]
pub struct AdapterCache<A> {
    lens: Vec<usize>,
    cols: Array2<A>,
    bn: BnCache<A>,
    activated: Array2<A>,
    pooled: Array2<A>,
    margin: A,
}

impl<A: Float> AdapterCache<A> {
    /// Smallest |pre-activation| seen by the ReLU: how far the forward pass
    /// sits from a kink.
    pub fn relu_margin(&self) -> A {
        self.margin
    }
}

impl<A: Float> AdapterBlock<A> {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, kernel: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(AdapterBlock {
            conv: Conv1d::new(in_dim, hidden, kernel, rng)?,
            bn: BatchNorm::new(hidden),
            linear: Linear::new(hidden, out_dim, rng),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.conv.in_channels()
    }

    pub fn out_dim(&self) -> usize {
        self.linear.out_dim()
    }

    pub fn forward(&mut self, x: &SeqBatch<A>, mode: Mode) -> Result<(Array2<A>, AdapterCache<A>)> {
        let (conv_out, cols) = self.conv.forward(x)?;
        let (normed, bn) = self.bn.forward(conv_out.view(), mode)?;
        drop(conv_out);
        let margin = normed.iter().fold(A::infinity(), |m, v| m.min(v.abs()));
        let activated = relu(normed.view());
        drop(normed);
        let pooled = mean_pool(activated.view(), &x.lens);
        let out = self.linear.forward(pooled.view())?;
        Ok((
            out,
            AdapterCache {
                lens: x.lens.clone(),
                cols,
                bn,
                activated,
                pooled,
                margin,
            },
        ))
    }

    /// Forward without keeping anything for backward.
    pub fn infer(&mut self, x: &SeqBatch<A>, mode: Mode) -> Result<Array2<A>> {
        match mode {
            Mode::Train => self.forward(x, mode).map(|(out, _)| out),
            Mode::Eval => self.eval(x),
        }
    }

    /// Eval-mode forward through shared parameters.
    pub fn eval(&self, x: &SeqBatch<A>) -> Result<Array2<A>> {
        let (conv_out, _) = self.conv.forward(x)?;
        let normed = self.bn.eval(conv_out.view())?;
        let pooled = mean_pool(relu(normed.view()).view(), &x.lens);
        self.linear.forward(pooled.view())
    }

    /// Backpropagates `grad_out` (batch x out_dim). The input gradient is
    /// only computed when requested, since frozen inputs never need it.
    pub fn backward(
        &mut self,
        cache: AdapterCache<A>,
        grad_out: ArrayView2<'_, A>,
        need_input_grad: bool,
    ) -> Option<Array2<A>> {
        let AdapterCache { lens, cols, bn, activated, pooled, .. } = cache;
        let d_pooled = self
            .linear
            .backward(pooled.view(), grad_out, true)
            .expect("requested");
        let d_act = mean_pool_backward(d_pooled.view(), &lens);
        let d_norm = relu_backward(activated.view(), d_act.view());
        drop(activated);
        let d_conv = self.bn.backward(&bn, d_norm.view());
        self.conv.backward(&cols, d_conv.view(), &lens, need_input_grad)
    }
}

impl<A: Float> Parameterized<A> for AdapterBlock<A> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
        self.linear.visit(&join(prefix, "linear"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{gradient_check, gradient_check_module, uniform_init};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20u64 {
            for mode in [Mode::Train, Mode::Eval] {
                let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
                let (din, h, dout) = (rng.gen_range(1..5), rng.gen_range(2..6), rng.gen_range(1..4));
                let lens: Vec<usize> = (0..rng.gen_range(2..4)).map(|_| rng.gen_range(3..7)).collect();
                let n: usize = lens.iter().sum();
                let mut block = AdapterBlock::<f64>::new(din, h, dout, 3, &mut rng).unwrap();
                // Batch norm makes the loss invariant to the kernel's scale, so its
                // curvature in the kernel grows like 1/|kernel|^2; a unit-order kernel
                // and >= 6 positions keep a 1e-3 step in the linear regime. Points
                // within reach of a ReLU kink are redrawn.
                block.conv.kernel.value *= 10.0;
                let x = loop {
                    let x = SeqBatch::new(uniform_init((n, din), 1, &mut rng), lens.clone()).unwrap();
                    let (c, _) = block.conv.forward(&x).unwrap();
                    let (pre, _) = block.bn.clone().forward(c.view(), mode).unwrap();
                    if pre.iter().all(|v| v.abs() > 0.05) {
                        break x;
                    }
                };
                let w: Array2<f64> = uniform_init((lens.len(), dout), 1, &mut rng);
                let base = block.clone();

                let (_, cache) = block.forward(&x, mode).unwrap();
                let dx = block.backward(cache, w.view(), true).unwrap();
                let err = gradient_check_module(&mut block, |b| (b.infer(&x, mode).unwrap() * &w).sum(), 1e-3);
                assert!(err < 1e-4, "{mode:?} params seed {seed}: {err}");

                let f = |p: &[f64]| {
                    let xb = SeqBatch::new(Array2::from_shape_vec((n, din), p.to_vec()).unwrap(), lens.clone()).unwrap();
                    (base.clone().infer(&xb, mode).unwrap() * &w).sum()
                };
                let err = gradient_check(f, x.data.as_slice().unwrap(), dx.as_slice().unwrap(), 1e-3);
                assert!(err < 1e-4, "{mode:?} input seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn single_position_eval_is_pointwise_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = AdapterBlock::<f64>::new(3, 4, 2, 3, &mut rng).unwrap();
        let x: Array2<f64> = uniform_init((1, 3), 1, &mut rng);
        let out = block.infer(&SeqBatch::single(x.view()).unwrap(), Mode::Eval).unwrap();
        let (c, _) = block.conv.forward(&SeqBatch::single(x.view()).unwrap()).unwrap();
        let (b, _) = block.bn.forward(c.view(), Mode::Eval).unwrap();
        let expect = block.linear.forward(relu(b.view()).view()).unwrap();
        assert_eq!(out, expect);
    }
}
