use super::{cst, Float, Parameterized};

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error between `analytic` and central differences of `f`
/// around `params`, one coordinate at a time.
pub fn gradient_check<A: Float>(
    mut f: impl FnMut(&[A]) -> A,
    params: &[A],
    analytic: &[A],
    eps: f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "one analytic value per parameter");
    let mut theta = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + cst(eps);
        let plus = f(&theta).to_f64().unwrap();
        theta[i] = orig - cst(eps);
        let minus = f(&theta).to_f64().unwrap();
        theta[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i].to_f64().unwrap(), numeric));
    }
    worst
}

fn with_coordinate<A: Float, M: Parameterized<A> + ?Sized>(
    model: &mut M,
    mut index: usize,
    op: impl FnOnce(&mut A),
) {
    let mut op = Some(op);
    model.visit("", &mut |_, t| {
        if t.grad.is_none() || op.is_none() {
            return;
        }
        if index < t.value.len() {
            (op.take().unwrap())(&mut t.value[index]);
        } else {
            index -= t.value.len();
        }
    });
}

/// Checks the gradients currently accumulated in `model` against central
/// differences of `loss`, which must evaluate the same scalar without
/// touching the gradients.
pub fn gradient_check_module<A: Float, M: Parameterized<A>>(
    model: &mut M,
    mut loss: impl FnMut(&mut M) -> A,
    eps: f64,
) -> f64 {
    let mut analytic = Vec::new();
    model.visit("", &mut |_, t| {
        if let Some(g) = t.grad {
            analytic.extend(g.iter().map(|v| v.to_f64().unwrap()));
        }
    });
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut orig = A::zero();
        with_coordinate(model, i, |v| {
            orig = *v;
            *v = orig + cst(eps);
        });
        let plus = loss(model).to_f64().unwrap();
        with_coordinate(model, i, |v| *v = orig - cst(eps));
        let minus = loss(model).to_f64().unwrap();
        with_coordinate(model, i, |v| *v = orig);
        worst = worst.max(relative_error(a, (plus - minus) / (2.0 * eps)));
    }
    worst
}
