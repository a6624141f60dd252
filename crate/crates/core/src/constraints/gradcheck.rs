//! Central finite differences for checking analytic gradients.

use ndarray::{s, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{key_estimation, meter_cost_grad, selfsim_cost_grad, tonality_cost_grad, KeyProfiles};

/// Denominator floor for relative errors.
pub const REL_FLOOR: f64 = 1e-6;

/// Central-difference gradient of `f` at `v`. Coordinates are perturbed
/// without clamping.
pub fn central_differences<F>(f: F, v: &Array2<f64>, eps: f64) -> Array2<f64>
where
    F: Fn(&Array2<f64>) -> f64,
{
    let mut probe = v.clone();
    Array2::from_shape_fn(v.dim(), |idx| {
        let orig = probe[idx];
        probe[idx] = orig + eps;
        let hi = f(&probe);
        probe[idx] = orig - eps;
        let lo = f(&probe);
        probe[idx] = orig;
        (hi - lo) / (2.0 * eps)
    })
}

/// `|a - n| / max(|a|, |n|, floor)` maximized over coordinates where
/// `include` holds.
pub fn max_relative_error(
    analytic: &Array2<f64>,
    numeric: &Array2<f64>,
    floor: f64,
    include: impl Fn((usize, usize)) -> bool,
) -> f64 {
    analytic
        .indexed_iter()
        .filter(|(idx, _)| include(*idx))
        .map(|(idx, &a)| {
            let n = numeric[idx];
            (a - n).abs() / a.abs().max(n.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

/// Onset rectifier kinks touched by perturbing `(t, p)` by up to `eps`.
pub fn near_onset_kink(v: &Array2<f64>, (t, p): (usize, usize), eps: f64) -> bool {
    let prev = if t == 0 { 0.0 } else { v[[t - 1, p]] };
    let mut near = (v[[t, p]] - prev).abs() <= 2.0 * eps;
    if t + 1 < v.nrows() {
        near |= (v[[t + 1, p]] - v[[t, p]]).abs() <= 2.0 * eps;
    }
    near
}

fn extremes(row: ArrayView1<'_, f64>) -> (usize, usize) {
    let (mut lo, mut hi) = (0, 0);
    for (i, &x) in row.iter().enumerate() {
        if x < row[lo] {
            lo = i;
        }
        if x > row[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// True if perturbing `(t, p)` by `±eps` moves the min or max of any key
/// window that contains row `t`.
pub fn near_key_tie(
    v: &Array2<f64>,
    (t, p): (usize, usize),
    eps: f64,
    window: usize,
    octaves: usize,
) -> bool {
    let profiles = KeyProfiles::default();
    let lo_t = (t + 1).saturating_sub(window);
    let hi_t = t.min(v.nrows() - window);
    let base = key_estimation(v.view(), &profiles, window, octaves).unwrap();
    for sign in [-1.0, 1.0] {
        let mut w = v.clone();
        w[[t, p]] += sign * eps;
        let moved = key_estimation(w.view(), &profiles, window, octaves).unwrap();
        for tt in lo_t..=hi_t {
            if extremes(base.slice(s![tt, ..])) != extremes(moved.slice(s![tt, ..])) {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    pub selfsim: f64,
    pub tonal: f64,
    pub meter: f64,
    pub excluded_tonal: usize,
    pub excluded_meter: usize,
}

/// Max relative error of each analytic gradient against central differences
/// over `instances` random `t x p` rolls and templates. Coordinates whose
/// `±eps` stencil crosses a kink or key tie are skipped and counted.
pub fn gradient_errors(
    seed: u64,
    instances: usize,
    (t, p): (usize, usize),
    lambda: usize,
    window: usize,
    bar_len: usize,
    eps: f64,
) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles = KeyProfiles::default();
    let octaves = p.div_ceil(12);
    let mut rep = GradReport::default();
    for _ in 0..instances {
        let x = Array2::from_shape_simple_fn((t, p), || rng.random::<f64>());
        let v = Array2::from_shape_simple_fn((t, p), || rng.random::<f64>());

        let (_, g) = selfsim_cost_grad(x.view(), v.view(), lambda).unwrap();
        let n = central_differences(
            |w| selfsim_cost_grad(x.view(), w.view(), lambda).unwrap().0,
            &v,
            eps,
        );
        rep.selfsim = rep.selfsim.max(max_relative_error(&g, &n, REL_FLOOR, |_| true));

        let (_, g) = tonality_cost_grad(x.view(), v.view(), &profiles, window, octaves).unwrap();
        let n = central_differences(
            |w| {
                tonality_cost_grad(x.view(), w.view(), &profiles, window, octaves)
                    .unwrap()
                    .0
            },
            &v,
            eps,
        );
        let keep = |idx| !near_key_tie(&v, idx, eps, window, octaves);
        rep.excluded_tonal += g.indexed_iter().filter(|(i, _)| !keep(*i)).count();
        rep.tonal = rep.tonal.max(max_relative_error(&g, &n, REL_FLOOR, keep));

        let (_, g) = meter_cost_grad(x.view(), v.view(), bar_len).unwrap();
        let n = central_differences(
            |w| meter_cost_grad(x.view(), w.view(), bar_len).unwrap().0,
            &v,
            eps,
        );
        let keep = |idx| !near_onset_kink(&v, idx, eps);
        rep.excluded_meter += g.indexed_iter().filter(|(i, _)| !keep(*i)).count();
        rep.meter = rep.meter.max(max_relative_error(&g, &n, REL_FLOOR, keep));
    }
    rep
}
