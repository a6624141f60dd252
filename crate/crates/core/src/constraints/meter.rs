//! Onset distribution over bar positions.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{dim_err, Result};

const DEGENERATE_STD: f64 = 1e-12;

/// `w(t) = sum_p max(0, z[t, p] - z[t-1, p])` with `z[-1, .] = 0`.
pub fn onset_function(z: ArrayView2<'_, f64>) -> Array1<f64> {
    let (t_len, p_len) = z.dim();
    Array1::from_shape_fn(t_len, |t| {
        (0..p_len)
            .map(|p| {
                let prev = if t == 0 { 0.0 } else { z[[t - 1, p]] };
                (z[[t, p]] - prev).max(0.0)
            })
            .sum()
    })
}

fn check_bar(t_len: usize, bar_len: usize) -> Result<()> {
    if bar_len == 0 || !t_len.is_multiple_of(bar_len) {
        return dim_err(format!("bar length {bar_len} does not divide T={t_len}"));
    }
    Ok(())
}

/// Onsets summed per bar position, before standardization.
pub fn raw_onset_profile(z: ArrayView2<'_, f64>, bar_len: usize) -> Result<Array1<f64>> {
    check_bar(z.nrows(), bar_len)?;
    let omega = onset_function(z);
    let mut rho = Array1::zeros(bar_len);
    for (t, w) in omega.iter().enumerate() {
        rho[t % bar_len] += w;
    }
    Ok(rho)
}

/// Zero mean, unit (population) variance; zeros if the std is below 1e-12.
fn standardize(rho: &Array1<f64>) -> (Array1<f64>, Option<f64>) {
    let n = rho.len() as f64;
    let mean = rho.sum() / n;
    let std = (rho.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    // negated so NaN also counts as degenerate
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(std >= DEGENERATE_STD) {
        return (Array1::zeros(rho.len()), None);
    }
    (rho.mapv(|x| (x - mean) / std), Some(std))
}

/// Standardized onset profile over the `bar_len` positions of a bar.
pub fn onset_profile(z: ArrayView2<'_, f64>, bar_len: usize) -> Result<Array1<f64>> {
    Ok(standardize(&raw_onset_profile(z, bar_len)?).0)
}

pub(crate) fn cost_grad_against(
    target: &Array1<f64>,
    v: ArrayView2<'_, f64>,
    bar_len: usize,
) -> Result<(f64, Array2<f64>)> {
    if target.len() != bar_len {
        return dim_err(format!(
            "onset target has {} positions, bar length is {bar_len}",
            target.len()
        ));
    }
    let rho = raw_onset_profile(v, bar_len)?;
    let (y, std) = standardize(&rho);
    let diff = target - &y;
    let cost = diff.iter().map(|d| d * d).sum::<f64>() / bar_len as f64;
    let mut grad = Array2::zeros(v.dim());
    let Some(std) = std else {
        return Ok((cost, grad));
    };

    // back through the standardization
    let gy = diff.mapv(|d| -2.0 * d / bar_len as f64);
    let n = bar_len as f64;
    let g_mean = gy.sum() / n;
    let gy_y = gy.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
    let g_rho: Array1<f64> = Array1::from_shape_fn(bar_len, |i| (gy[i] - g_mean - y[i] * gy_y) / std);

    // back through the bar folding and the rectified difference
    let (t_len, p_len) = v.dim();
    for t in 0..t_len {
        let g = g_rho[t % bar_len];
        for p in 0..p_len {
            let prev = if t == 0 { 0.0 } else { v[[t - 1, p]] };
            if v[[t, p]] - prev > 0.0 {
                grad[[t, p]] += g;
                if t > 0 {
                    grad[[t - 1, p]] -= g;
                }
            }
        }
    }
    Ok((cost, grad))
}

/// Meter cost between template `x` and candidate `v`.
pub fn meter_cost_grad(
    x: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    bar_len: usize,
) -> Result<(f64, Array2<f64>)> {
    if x.dim() != v.dim() {
        return dim_err(format!("template {:?} vs roll {:?}", x.dim(), v.dim()));
    }
    let target = onset_profile(x, bar_len)?;
    cost_grad_against(&target, v, bar_len)
}
