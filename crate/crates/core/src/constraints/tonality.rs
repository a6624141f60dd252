//! Windowed key estimation with mode profiles used as convolution filters.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{dim_err, Result};

pub const KEYS: usize = 12;
/// Length of a concatenated major/minor estimation vector.
pub const KEY_VECTOR_LEN: usize = 2 * KEYS;

/// Temperley's pitch-class profiles, tonic first.
pub const TEMPERLEY_MAJOR: [f64; 12] = [5.0, 2.0, 3.5, 2.0, 4.5, 4.0, 2.0, 4.5, 2.0, 3.5, 1.5, 4.0];
pub const TEMPERLEY_MINOR: [f64; 12] = [5.0, 2.0, 3.5, 4.5, 2.0, 4.0, 2.0, 4.5, 3.5, 2.0, 1.5, 4.0];

const DEGENERATE_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyProfiles {
    pub major: [f64; 12],
    pub minor: [f64; 12],
}

impl Default for KeyProfiles {
    fn default() -> Self {
        Self {
            major: TEMPERLEY_MAJOR,
            minor: TEMPERLEY_MINOR,
        }
    }
}

impl KeyProfiles {
    /// Weight of pitch-class row `i` under shift `kappa` for vector entry
    /// `idx` (major entries first).
    #[inline]
    fn weight(&self, idx: usize, i: usize) -> f64 {
        let (profile, kappa) = if idx < KEYS {
            (&self.major, idx)
        } else {
            (&self.minor, idx - KEYS)
        };
        profile[(i + kappa) % 12]
    }
}

/// Number of octaves needed to cover `pitch_count` rows.
pub fn default_octaves(pitch_count: usize) -> usize {
    pitch_count.div_ceil(12)
}

/// Shift index whose profile places its tonic on row pitch class
/// `tonic_row_pc` (row pitch classes count from row 0).
pub fn shift_for_tonic(tonic_row_pc: usize) -> usize {
    (12 - tonic_row_pc % 12) % 12
}

fn check(z: ArrayView2<'_, f64>, window: usize) -> Result<usize> {
    let t_len = z.nrows();
    if window == 0 || window > t_len {
        return dim_err(format!("key window {window} must lie in 1..={t_len}"));
    }
    Ok(t_len - window + 1)
}

/// Pitch-class mass `c[i] = sum_{o < octaves} z[t, i + 12 o]`; rows past
/// the roll read as zero, rows past `12 * octaves` are ignored.
fn fold_row(z: ArrayView1<'_, f64>, octaves: usize) -> [f64; 12] {
    let mut c = [0.0; 12];
    for (row, &x) in z.iter().enumerate().take(12 * octaves) {
        c[row % 12] += x;
    }
    c
}

/// Raw key estimation vectors `k(z)_t` for every valid window start
/// `t in 0..=T-window`, shape `(T-window+1) x 24`.
pub fn key_estimation(
    z: ArrayView2<'_, f64>,
    profiles: &KeyProfiles,
    window: usize,
    octaves: usize,
) -> Result<Array2<f64>> {
    let n = check(z, window)?;
    let folded: Vec<[f64; 12]> = z.rows().into_iter().map(|r| fold_row(r, octaves)).collect();
    let mut out = Array2::zeros((n, KEY_VECTOR_LEN));
    for t in 0..n {
        let mut c = [0.0; 12];
        for row in &folded[t..t + window] {
            for (acc, x) in c.iter_mut().zip(row) {
                *acc += x;
            }
        }
        for idx in 0..KEY_VECTOR_LEN {
            out[[t, idx]] = (0..12).map(|i| profiles.weight(idx, i) * c[i]).sum();
        }
    }
    Ok(out)
}

/// Min-max normalization with the extremes located, for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Normalized {
    pub values: Array1<f64>,
    /// `(argmin, argmax, max - min)`, or `None` under the degenerate guard.
    pub extremes: Option<(usize, usize, f64)>,
}

pub(crate) fn normalize_with_extremes(k: ArrayView1<'_, f64>) -> Normalized {
    let (mut lo, mut hi) = (0, 0);
    for (i, &x) in k.iter().enumerate() {
        if x < k[lo] {
            lo = i;
        }
        if x > k[hi] {
            hi = i;
        }
    }
    let range = k[hi] - k[lo];
    // negated so NaN also counts as degenerate
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(range >= DEGENERATE_RANGE) {
        return Normalized {
            values: Array1::zeros(k.len()),
            extremes: None,
        };
    }
    let min = k[lo];
    Normalized {
        values: k.mapv(|x| (x - min) / range),
        extremes: Some((lo, hi, range)),
    }
}

/// `(k - min) / (max - min)`; all zeros when the range is below 1e-12.
pub fn normalize_key(k: ArrayView1<'_, f64>) -> Array1<f64> {
    normalize_with_extremes(k).values
}

/// Normalized estimation vectors, the stored tonality target.
pub fn normalized_key_estimation(
    z: ArrayView2<'_, f64>,
    profiles: &KeyProfiles,
    window: usize,
    octaves: usize,
) -> Result<Array2<f64>> {
    let mut k = key_estimation(z, profiles, window, octaves)?;
    for mut row in k.rows_mut() {
        let n = normalize_key(row.view());
        row.assign(&n);
    }
    Ok(k)
}

pub(crate) fn cost_grad_against(
    target: &Array2<f64>,
    v: ArrayView2<'_, f64>,
    profiles: &KeyProfiles,
    window: usize,
    octaves: usize,
) -> Result<(f64, Array2<f64>)> {
    let raw = key_estimation(v, profiles, window, octaves)?;
    if target.dim() != raw.dim() {
        return dim_err(format!(
            "key target is {:?}, roll implies {:?}",
            target.dim(),
            raw.dim()
        ));
    }
    let n = raw.nrows();
    let scale = (KEY_VECTOR_LEN * n) as f64;
    let p_len = v.ncols();
    let mut cost = 0.0;
    // gradient with respect to the folded pitch-class mass of each window
    let mut grad_c = vec![[0.0f64; 12]; n];
    for t in 0..n {
        let norm = normalize_with_extremes(raw.row(t));
        let mut g = Array1::zeros(KEY_VECTOR_LEN);
        for idx in 0..KEY_VECTOR_LEN {
            let d = target[[t, idx]] - norm.values[idx];
            cost += d * d;
            g[idx] = -2.0 * d / scale;
        }
        let Some((lo, hi, range)) = norm.extremes else {
            continue;
        };
        let mut gk = g.mapv(|x| x / range);
        let to_min: f64 = g
            .iter()
            .zip(norm.values.iter())
            .map(|(gi, ki)| gi * (1.0 - ki))
            .sum();
        let to_max: f64 = g.iter().zip(norm.values.iter()).map(|(gi, ki)| gi * ki).sum();
        gk[lo] -= to_min / range;
        gk[hi] -= to_max / range;
        for (i, slot) in grad_c[t].iter_mut().enumerate() {
            *slot = (0..KEY_VECTOR_LEN).map(|idx| profiles.weight(idx, i) * gk[idx]).sum();
        }
    }
    cost /= scale;

    // each row s belongs to windows t in [s - window + 1, s]
    let mut grad = Array2::zeros(v.dim());
    let rows = p_len.min(12 * octaves);
    for s in 0..v.nrows() {
        let lo = (s + 1).saturating_sub(window);
        let hi = s.min(n - 1);
        if lo > hi {
            continue;
        }
        let mut acc = [0.0; 12];
        for gc in &grad_c[lo..=hi] {
            for (a, x) in acc.iter_mut().zip(gc) {
                *a += x;
            }
        }
        for row in 0..rows {
            grad[[s, row]] = acc[row % 12];
        }
    }
    Ok((cost, grad))
}

/// Tonality cost between template `x` and candidate `v`.
pub fn tonality_cost_grad(
    x: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    profiles: &KeyProfiles,
    window: usize,
    octaves: usize,
) -> Result<(f64, Array2<f64>)> {
    if x.dim() != v.dim() {
        return dim_err(format!("template {:?} vs roll {:?}", x.dim(), v.dim()));
    }
    let target = normalized_key_estimation(x, profiles, window, octaves)?;
    cost_grad_against(&target, v, profiles, window, octaves)
}
