//! Finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it is
//! independent of the backward rules in [`crate::autodiff`].

use crate::autodiff::Tape;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::models::{Model, ModelParams};

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / (||a|| + ||b||)`, or 0 when both are (numerically) zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a) + norm(b);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Masked mean cross-entropy evaluated directly from logits.
pub fn cross_entropy_value(logits: &Matrix, labels: &[usize], mask: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for r in (0..logits.rows()).filter(|&r| mask[r]) {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[labels[r]];
        count += 1;
    }
    total / count as f64
}

fn flatten(params: &ModelParams) -> Vec<f64> {
    params
        .tensors()
        .iter()
        .flat_map(|m| m.data().iter().copied())
        .collect()
}

fn unflatten(template: &ModelParams, flat: &[f64]) -> ModelParams {
    let mut out = template.clone();
    let mut offset = 0;
    for m in out.tensors_mut() {
        let len = m.len();
        m.data_mut().copy_from_slice(&flat[offset..offset + len]);
        offset += len;
    }
    out
}

/// Analytic and numeric gradients of the masked cross-entropy with
/// respect to every parameter, flattened in [`ModelParams::tensors`] order.
/// Dropout is disabled on both sides.
pub fn model_gradients(
    model: &Model,
    params: &ModelParams,
    labels: &[usize],
    mask: &[bool],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let mut rng = crate::training::seeded_rng(0, 0);
    let pass = model.forward(&mut tape, params, false, &mut rng)?;
    let loss = tape.softmax_cross_entropy(pass.logits, labels, mask)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<f64> = pass
        .params
        .iter()
        .flat_map(|&v| grads.wrt(v).into_vec())
        .collect();

    let x = flatten(params);
    let numeric = central_difference(
        |flat| {
            let p = unflatten(params, flat);
            let logits = model.logits(&p).expect("forward succeeded once already");
            cross_entropy_value(&logits, labels, mask)
        },
        &x,
        h,
    );
    Ok((analytic, numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = central_difference(|v| v[0] * v[0] + 3.0 * v[0] * v[1], &[1.0, 2.0], 1e-6);
        assert!((g[0] - 8.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0], &[-1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_uniform() {
        let z = Matrix::zeros(2, 4);
        let v = cross_entropy_value(&z, &[0, 3], &[true, true]);
        assert!((v - 4f64.ln()).abs() < 1e-15);
    }
}
