//! Tile-vs-sliding-window self-similarity.

use ndarray::{Array2, ArrayView2};

use crate::error::{dim_err, Result};

fn check_lambda(t_len: usize, lambda: usize) -> Result<usize> {
    if lambda == 0 || !t_len.is_multiple_of(lambda) {
        return dim_err(format!("window width {lambda} does not divide T={t_len}"));
    }
    Ok(t_len / lambda)
}

/// `s[i, j] = sum_{l < lambda, p} z[j*lambda + l, p] * z[i + l, p]`, with `z`
/// zero beyond its last row. Shape `T x (T / lambda)`.
pub fn self_similarity(z: ArrayView2<'_, f64>, lambda: usize) -> Result<Array2<f64>> {
    let (t_len, p_len) = z.dim();
    let j_len = check_lambda(t_len, lambda)?;
    let z = z.as_standard_layout();
    let flat = z.as_slice().unwrap();
    let mut s = Array2::zeros((t_len, j_len));
    for i in 0..t_len {
        let n = lambda.min(t_len - i) * p_len;
        let slide = &flat[i * p_len..i * p_len + n];
        for j in 0..j_len {
            let tile = &flat[j * lambda * p_len..j * lambda * p_len + n];
            s[[i, j]] = tile.iter().zip(slide).map(|(a, b)| a * b).sum();
        }
    }
    Ok(s)
}

/// Elementwise square, the input to the similarity map.
pub(crate) fn squared(z: ArrayView2<'_, f64>) -> Array2<f64> {
    z.mapv(|x| x * x)
}

/// Mean squared error between `target` and `s(v^2)`, and its gradient with
/// respect to `v`.
pub(crate) fn cost_grad_against(
    target: &Array2<f64>,
    v: ArrayView2<'_, f64>,
    lambda: usize,
) -> Result<(f64, Array2<f64>)> {
    let (t_len, p_len) = v.dim();
    let j_len = check_lambda(t_len, lambda)?;
    if target.dim() != (t_len, j_len) {
        return dim_err(format!(
            "self-similarity target is {:?}, roll implies {:?}",
            target.dim(),
            (t_len, j_len)
        ));
    }
    let y = squared(v);
    let s = self_similarity(y.view(), lambda)?;
    let scale = (t_len * j_len) as f64;
    let diff = target - &s;
    let cost = diff.iter().map(|d| d * d).sum::<f64>() / scale;
    // dcost/ds
    let g = diff.mapv(|d| -2.0 * d / scale);

    let yf = y.as_slice().unwrap();
    let mut gy = Array2::<f64>::zeros((t_len, p_len));
    {
        let out = gy.as_slice_mut().unwrap();
        for t in 0..t_len {
            let row = &mut out[t * p_len..(t + 1) * p_len];
            // t as part of tile j at offset l
            let (j, l) = (t / lambda, t % lambda);
            for i in 0..t_len - l {
                let gij = g[[i, j]];
                if gij == 0.0 {
                    continue;
                }
                let src = &yf[(i + l) * p_len..(i + l + 1) * p_len];
                for (o, &x) in row.iter_mut().zip(src) {
                    *o += gij * x;
                }
            }
            // t as part of the sliding window starting at i = t - l
            for l in 0..lambda.min(t + 1) {
                let i = t - l;
                for j in 0..j_len {
                    let gij = g[[i, j]];
                    if gij == 0.0 {
                        continue;
                    }
                    let src = &yf[(j * lambda + l) * p_len..(j * lambda + l + 1) * p_len];
                    for (o, &x) in row.iter_mut().zip(src) {
                        *o += gij * x;
                    }
                }
            }
        }
    }
    let grad = &gy * &v.mapv(|x| 2.0 * x);
    Ok((cost, grad))
}

/// Self-similarity cost between template `x` and candidate `v`.
pub fn selfsim_cost_grad(
    x: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    lambda: usize,
) -> Result<(f64, Array2<f64>)> {
    if x.dim() != v.dim() {
        return dim_err(format!("template {:?} vs roll {:?}", x.dim(), v.dim()));
    }
    let target = self_similarity(squared(x).view(), lambda)?;
    cost_grad_against(&target, v, lambda)
}
