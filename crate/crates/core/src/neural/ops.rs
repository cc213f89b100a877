use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::Float;

pub fn relu<A: Float>(x: ArrayView2<'_, A>) -> Array2<A> {
    x.mapv(|v| if v > A::zero() { v } else { A::zero() })
}

/// Gradient of ReLU given its output (the derivative at 0 is taken as 0).
pub fn relu_backward<A: Float>(out: ArrayView2<'_, A>, grad_out: ArrayView2<'_, A>) -> Array2<A> {
    let mut g = grad_out.to_owned();
    Zip::from(&mut g).and(out).for_each(|g, &y| {
        if y <= A::zero() {
            *g = A::zero();
        }
    });
    g
}

/// Per-sequence mean over rows.
pub fn mean_pool<A: Float>(x: ArrayView2<'_, A>, lens: &[usize]) -> Array2<A> {
    let mut out = Array2::zeros((lens.len(), x.ncols()));
    let mut start = 0;
    for (i, &len) in lens.iter().enumerate() {
        let block = x.slice(ndarray::s![start..start + len, ..]);
        out.row_mut(i)
            .assign(&block.mean_axis(Axis(0)).expect("non-empty sequence"));
        start += len;
    }
    out
}

pub fn mean_pool_backward<A: Float>(grad_out: ArrayView2<'_, A>, lens: &[usize]) -> Array2<A> {
    let n: usize = lens.iter().sum();
    let mut g = Array2::zeros((n, grad_out.ncols()));
    let mut start = 0;
    for (i, &len) in lens.iter().enumerate() {
        let scaled = &grad_out.row(i) / A::from_usize(len).unwrap();
        for r in start..start + len {
            g.row_mut(r).assign(&scaled);
        }
        start += len;
    }
    g
}

/// Row-wise L2 normalization; also returns the row norms for the backward pass.
pub fn l2_normalize_rows<A: Float>(x: ArrayView2<'_, A>) -> (Array2<A>, Array1<A>) {
    let norms: Array1<A> = x
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt().max(A::min_positive_value()))
        .collect();
    let y = &x / &norms.view().insert_axis(Axis(1));
    (y, norms)
}

/// `dx = (dy - y (y . dy)) / |x|` per row.
pub fn l2_normalize_backward<A: Float>(
    y: ArrayView2<'_, A>,
    norms: ArrayView1<'_, A>,
    grad_out: ArrayView2<'_, A>,
) -> Array2<A> {
    let mut dx = grad_out.to_owned();
    for ((mut d, yr), &n) in dx.rows_mut().into_iter().zip(y.rows()).zip(norms) {
        let proj = yr.dot(&d);
        Zip::from(&mut d).and(yr).for_each(|d, &yv| *d = (*d - yv * proj) / n);
    }
    dx
}

/// Cosine of the angle between `a` and `b`; 0 when either is the zero vector.
pub fn cosine_similarity<A: Float>(a: ArrayView1<'_, A>, b: ArrayView1<'_, A>) -> A {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == A::zero() || nb == A::zero() {
        return A::zero();
    }
    let c = a.dot(&b) / (na * nb);
    c.max(-A::one()).min(A::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradient_check;
    use ndarray::{arr1, arr2, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_values() {
        let y = relu(arr2(&[[-1.0, 0.0, 2.5]]).view());
        assert_eq!(y, arr2(&[[0.0, 0.0, 2.5]]));
    }

    #[test]
    fn cosine_cases() {
        let a = arr1(&[1.0, 2.0, -3.0]);
        assert!((cosine_similarity(a.view(), a.view()) - 1.0f64).abs() < 1e-12);
        assert!((cosine_similarity(a.view(), (-&a).view()) + 1.0f64).abs() < 1e-12);
        let e1 = arr1(&[1.0, 0.0]);
        let e2 = arr1(&[0.0, 1.0]);
        assert_eq!(cosine_similarity(e1.view(), e2.view()), 0.0f64);
        assert_eq!(cosine_similarity(e1.view(), arr1(&[0.0, 0.0]).view()), 0.0f64);
    }

    #[test]
    fn mean_pool_per_sequence() {
        let x = arr2(&[[1.0, 2.0], [3.0, 4.0], [10.0, 10.0]]);
        let p = mean_pool(x.view(), &[2, 1]);
        assert_eq!(p, arr2(&[[2.0, 3.0], [10.0, 10.0]]));
    }

    #[test]
    fn relu_gradient_matches_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // keep inputs away from the kink at 0
            let x: Vec<f64> = (0..12)
                .map(|_| {
                    let m = rng.gen_range(0.05..1.0);
                    if rng.gen_bool(0.5) { m } else { -m }
                })
                .collect();
            let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |p: &[f64]| -> f64 {
                let xa = Array::from_shape_vec((3, 4), p.to_vec()).unwrap();
                relu(xa.view()).iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let xa = Array::from_shape_vec((3, 4), x.clone()).unwrap();
            let y = relu(xa.view());
            let dy = Array::from_shape_vec((3, 4), w.clone()).unwrap();
            let g = relu_backward(y.view(), dy.view());
            let err = gradient_check(f, &x, g.as_slice().unwrap(), 1e-3);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn normalize_gradient_matches_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |p: &[f64]| -> f64 {
                let xa = Array::from_shape_vec((2, 5), p.to_vec()).unwrap();
                l2_normalize_rows(xa.view()).0.iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let xa = Array::from_shape_vec((2, 5), x.clone()).unwrap();
            let (y, n) = l2_normalize_rows(xa.view());
            let dy = Array::from_shape_vec((2, 5), w.clone()).unwrap();
            let g = l2_normalize_backward(y.view(), n.view(), dy.view());
            assert!(gradient_check(f, &x, g.as_slice().unwrap(), 1e-3) < 1e-4);
        }
    }
}
