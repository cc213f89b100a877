//! Gated recurrent unit and its bidirectional wrapper.
//!
//! Step convention (h_0 = 0):
//!
//! ```text
//! r  = sigmoid(W_r x + U_r h + b_r)
//! z  = sigmoid(W_z x + U_z h + b_z)
//! h~ = tanh(W_h x + U_h (r * h) + b_h)
//! h' = (1 - z) * h + z * h~
//! ```
//!
//! Batches of different-length sequences are run in lock-step, aligned at
//! their last step; a sequence stays at h = 0 until its first step arrives.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Ix1, Ix2, Zip};
use rand::Rng;

use super::{cst, join, uniform_init, Float, Linear, Param, Parameterized, SeqBatch, TensorMut};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gru<A> {
    pub w_r: Param<A, Ix2>,
    pub w_z: Param<A, Ix2>,
    pub w_h: Param<A, Ix2>,
    pub u_r: Param<A, Ix2>,
    pub u_z: Param<A, Ix2>,
    pub u_h: Param<A, Ix2>,
    pub b_r: Param<A, Ix1>,
    pub b_z: Param<A, Ix1>,
    pub b_h: Param<A, Ix1>,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruCache<A> {
    direction: Direction,
    /// `rows[t][b]`: data row consumed by sequence `b` at step `t`, if active.
    rows: Vec<Vec<Option<usize>>>,
    h_prev: Vec<Array2<A>>,
    r: Vec<Array2<A>>,
    z: Vec<Array2<A>>,
    cand: Vec<Array2<A>>,
}

fn sigmoid<A: Float>(v: A) -> A {
    A::one() / (A::one() + (-v).exp())
}

fn gather<A: Float>(src: &Array2<A>, rows: &[Option<usize>]) -> Array2<A> {
    let mut out = Array2::zeros((rows.len(), src.ncols()));
    for (b, r) in rows.iter().enumerate() {
        if let Some(r) = r {
            out.row_mut(b).assign(&src.row(*r));
        }
    }
    out
}

fn scatter_masked<A: Float>(dst: &mut Array2<A>, src: &mut Array2<A>, rows: &[Option<usize>]) {
    for (b, r) in rows.iter().enumerate() {
        match r {
            Some(r) => dst.row_mut(*r).assign(&src.row(b)),
            None => src.row_mut(b).fill(A::zero()),
        }
    }
}

impl<A: Float> Gru<A> {
    /// Inputs are taken to be unit-norm rows (components of size
    /// `1/sqrt(input)`), so input weights get `sqrt(input)` times the usual
    /// `1/sqrt(hidden)` bound; otherwise the biases drown out the input.
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let scale: A = cst((input.max(1) as f64).sqrt());
        let mut w = || Param::new(uniform_init::<A, _, _>((hidden, input), hidden, rng) * scale);
        let (w_r, w_z, w_h) = (w(), w(), w());
        let mut u = || Param::new(uniform_init((hidden, hidden), hidden, rng));
        let (u_r, u_z, u_h) = (u(), u(), u());
        let mut b = || Param::new(uniform_init(hidden, hidden, rng));
        let (b_r, b_z, b_h) = (b(), b(), b());
        Gru { w_r, w_z, w_h, u_r, u_z, u_h, b_r, b_z, b_h }
    }

    /// All-zero parameters.
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Param::new(Array2::zeros((hidden, input)));
        let u = || Param::new(Array2::zeros((hidden, hidden)));
        let b = || Param::new(Array1::zeros(hidden));
        Gru { w_r: w(), w_z: w(), w_h: w(), u_r: u(), u_z: u(), u_h: u(), b_r: b(), b_z: b(), b_h: b() }
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.value.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_r.value.nrows()
    }

    fn schedule(x: &SeqBatch<A>, direction: Direction) -> Vec<Vec<Option<usize>>> {
        let steps = x.lens.iter().copied().max().unwrap_or(0);
        let offsets = x.offsets();
        (0..steps)
            .map(|t| {
                x.lens
                    .iter()
                    .zip(&offsets)
                    .map(|(&len, &off)| {
                        let start = steps - len;
                        (t >= start).then(|| {
                            let local = t - start;
                            match direction {
                                Direction::Forward => off + local,
                                Direction::Backward => off + len - 1 - local,
                            }
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Final hidden state of every sequence (batch x hidden).
    pub fn forward(&self, x: &SeqBatch<A>, direction: Direction) -> Result<(Array2<A>, GruCache<A>)> {
        if x.data.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "GRU expects {} input features, got {}",
                self.input_dim(),
                x.data.ncols()
            )));
        }
        if x.lens.is_empty() {
            return Err(Error::EmptyInput("GRU batch has no sequences".into()));
        }
        let rows = Self::schedule(x, direction);
        let xr = x.data.dot(&self.w_r.value.t()) + &self.b_r.value;
        let xz = x.data.dot(&self.w_z.value.t()) + &self.b_z.value;
        let xh = x.data.dot(&self.w_h.value.t()) + &self.b_h.value;

        let (batch, hidden) = (x.batch_size(), self.hidden_dim());
        let mut h = Array2::<A>::zeros((batch, hidden));
        let mut cache = GruCache {
            direction,
            rows: Vec::with_capacity(rows.len()),
            h_prev: Vec::with_capacity(rows.len()),
            r: Vec::with_capacity(rows.len()),
            z: Vec::with_capacity(rows.len()),
            cand: Vec::with_capacity(rows.len()),
        };
        for step in rows {
            let r = (gather(&xr, &step) + h.dot(&self.u_r.value.t())).mapv(sigmoid);
            let z = (gather(&xz, &step) + h.dot(&self.u_z.value.t())).mapv(sigmoid);
            let cand = (gather(&xh, &step) + (&r * &h).dot(&self.u_h.value.t())).mapv(|v| v.tanh());
            let mut next = h.clone();
            for (b, active) in step.iter().enumerate() {
                if active.is_some() {
                    Zip::from(next.row_mut(b))
                        .and(z.row(b))
                        .and(cand.row(b))
                        .for_each(|hn, &zv, &cv| *hn = (A::one() - zv) * *hn + zv * cv);
                }
            }
            cache.h_prev.push(std::mem::replace(&mut h, next));
            cache.r.push(r);
            cache.z.push(z);
            cache.cand.push(cand);
            cache.rows.push(step);
        }
        Ok((h, cache))
    }

    /// Backpropagation through time from the gradient of the final states.
    pub fn backward(
        &mut self,
        x: &SeqBatch<A>,
        cache: &GruCache<A>,
        grad_final: ArrayView2<'_, A>,
        need_input_grad: bool,
    ) -> Option<Array2<A>> {
        let (n, hidden) = (x.data.nrows(), self.hidden_dim());
        let mut dxr = Array2::<A>::zeros((n, hidden));
        let mut dxz = Array2::<A>::zeros((n, hidden));
        let mut dxh = Array2::<A>::zeros((n, hidden));
        let mut dh = grad_final.to_owned();

        for t in (0..cache.rows.len()).rev() {
            let (h, r, z, cand) = (&cache.h_prev[t], &cache.r[t], &cache.z[t], &cache.cand[t]);
            let rows = &cache.rows[t];

            let mut da_h = &dh * z;
            Zip::from(&mut da_h).and(cand).for_each(|d, &c| *d = *d * (A::one() - c * c));
            let mut dz = &dh * &(cand - h);
            let mut dh_prev = &dh * &z.mapv(|v| A::one() - v);
            // inactive rows keep their state: their gate gradients vanish
            for (b, row) in rows.iter().enumerate() {
                if row.is_none() {
                    da_h.row_mut(b).fill(A::zero());
                    dz.row_mut(b).fill(A::zero());
                    dh_prev.row_mut(b).assign(&dh.row(b));
                }
            }

            let rh = r * h;
            self.u_h.grad += &da_h.t().dot(&rh);
            let d_rh = da_h.dot(&self.u_h.value);
            let mut da_r = &d_rh * h;
            dh_prev += &(&d_rh * r);

            let mut da_z = dz;
            Zip::from(&mut da_z).and(z).for_each(|d, &zv| *d = *d * zv * (A::one() - zv));
            Zip::from(&mut da_r).and(r).for_each(|d, &rv| *d = *d * rv * (A::one() - rv));

            self.u_z.grad += &da_z.t().dot(h);
            self.u_r.grad += &da_r.t().dot(h);
            dh_prev += &da_z.dot(&self.u_z.value);
            dh_prev += &da_r.dot(&self.u_r.value);

            scatter_masked(&mut dxh, &mut da_h, rows);
            scatter_masked(&mut dxz, &mut da_z, rows);
            scatter_masked(&mut dxr, &mut da_r, rows);
            dh = dh_prev;
        }
        let _ = cache.direction;

        self.w_r.grad += &dxr.t().dot(&x.data);
        self.w_z.grad += &dxz.t().dot(&x.data);
        self.w_h.grad += &dxh.t().dot(&x.data);
        self.b_r.grad += &dxr.sum_axis(Axis(0));
        self.b_z.grad += &dxz.sum_axis(Axis(0));
        self.b_h.grad += &dxh.sum_axis(Axis(0));
        need_input_grad.then(|| {
            dxr.dot(&self.w_r.value) + dxz.dot(&self.w_z.value) + dxh.dot(&self.w_h.value)
        })
    }
}

impl<A: Float> Parameterized<A> for Gru<A> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>)) {
        self.w_r.visit(&join(prefix, "w_r"), f);
        self.w_z.visit(&join(prefix, "w_z"), f);
        self.w_h.visit(&join(prefix, "w_h"), f);
        self.u_r.visit(&join(prefix, "u_r"), f);
        self.u_z.visit(&join(prefix, "u_z"), f);
        self.u_h.visit(&join(prefix, "u_h"), f);
        self.b_r.visit(&join(prefix, "b_r"), f);
        self.b_z.visit(&join(prefix, "b_z"), f);
        self.b_h.visit(&join(prefix, "b_h"), f);
    }
}

/// Final hidden state of a single sequence (T x in_dim).
pub fn gru_sequence<A: Float>(inputs: ArrayView2<'_, A>, params: &Gru<A>, direction: Direction) -> Result<Array1<A>> {
    if inputs.nrows() == 0 {
        return Err(Error::EmptyInput("GRU sequence has no steps".into()));
    }
    let (h, _) = params.forward(&SeqBatch::single(inputs)?, direction)?;
    Ok(h.row(0).to_owned())
}

/// Forward GRU over the sequence, backward GRU over its reversal,
/// concatenated final states, then a linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru<A> {
    pub forward: Gru<A>,
    pub backward: Gru<A>,
    /// joint_dim x 2*hidden
    pub projection: Linear<A>,
}

#[derive(Debug, Clone)]
pub struct BiGruCache<A> {
    fwd: GruCache<A>,
    bwd: GruCache<A>,
    concat: Array2<A>,
}

impl<A: Float> BiGru<A> {
    pub fn new(input: usize, hidden: usize, joint: usize, rng: &mut impl Rng) -> Self {
        BiGru {
            forward: Gru::new(input, hidden, rng),
            backward: Gru::new(input, hidden, rng),
            projection: Linear::new(2 * hidden, joint, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn joint_dim(&self) -> usize {
        self.projection.out_dim()
    }

    /// Concatenated final states (batch x 2*hidden), before projection.
    pub fn states(&self, x: &SeqBatch<A>) -> Result<(Array2<A>, GruCache<A>, GruCache<A>)> {
        let (hf, fwd) = self.forward.forward(x, Direction::Forward)?;
        let (hb, bwd) = self.backward.forward(x, Direction::Backward)?;
        let concat = ndarray::concatenate(Axis(1), &[hf.view(), hb.view()]).expect("same rows");
        Ok((concat, fwd, bwd))
    }

    pub fn encode(&self, x: &SeqBatch<A>) -> Result<(Array2<A>, BiGruCache<A>)> {
        let (concat, fwd, bwd) = self.states(x)?;
        let out = self.projection.forward(concat.view())?;
        Ok((out, BiGruCache { fwd, bwd, concat }))
    }

    pub fn backward(
        &mut self,
        x: &SeqBatch<A>,
        cache: BiGruCache<A>,
        grad_out: ArrayView2<'_, A>,
        need_input_grad: bool,
    ) -> Option<Array2<A>> {
        let hidden = self.forward.hidden_dim();
        let d_concat = self
            .projection
            .backward(cache.concat.view(), grad_out, true)
            .expect("requested");
        let dx_f = self.forward.backward(x, &cache.fwd, d_concat.slice(s![.., ..hidden]), need_input_grad);
        let dx_b = self.backward.backward(x, &cache.bwd, d_concat.slice(s![.., hidden..]), need_input_grad);
        match (dx_f, dx_b) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        }
    }
}

impl<A: Float> Parameterized<A> for BiGru<A> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorMut<'_, A>)) {
        self.forward.visit(&join(prefix, "forward"), f);
        self.backward.visit(&join(prefix, "backward"), f);
        self.projection.visit(&join(prefix, "projection"), f);
    }
}

/// Encodes one sequence (T x in_dim) into a joint-space vector.
pub fn bigru_encode<A: Float>(inputs: ArrayView2<'_, A>, params: &BiGru<A>) -> Result<Array1<A>> {
    if inputs.nrows() == 0 {
        return Err(Error::EmptyInput("sequence has no steps".into()));
    }
    let (out, _) = params.encode(&SeqBatch::single(inputs)?)?;
    Ok(out.row(0).to_owned())
}
