//! Central finite differences, used as an independent oracle for gradients.

use crate::tensor::Tensor;

/// Central-difference gradient of `f` with respect to each tensor in `at`.
pub fn central_difference<F>(f: F, at: &[Tensor], eps: f64) -> Vec<Tensor>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut grads = Vec::with_capacity(at.len());
    for k in 0..at.len() {
        let mut g = vec![0.0; at[k].len()];
        for (i, slot) in g.iter_mut().enumerate() {
            let probe = |delta: f64| {
                let mut args = at.to_vec();
                let mut d = args[k].to_vec();
                d[i] += delta;
                args[k] = Tensor::new(at[k].shape(), d).unwrap();
                f(&args)
            };
            *slot = (probe(eps) - probe(-eps)) / (2.0 * eps);
        }
        grads.push(Tensor::new(at[k].shape(), g).unwrap());
    }
    grads
}

/// `max|a − b| / max(max|b|, floor)`: relative error over a whole tensor.
pub fn relative_error(analytic: &Tensor, reference: &Tensor, floor: f64) -> f64 {
    let scale = reference
        .data()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(floor);
    analytic.max_abs_diff(reference) / scale
}
