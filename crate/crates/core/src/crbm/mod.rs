//! Convolutional Restricted Boltzmann Machine over piano rolls.
//!
//! Each of the `K` filters spans `R` time steps and the full pitch range, and
//! is slid over time with stride `d`. The input is zero-padded by
//! `ceil(R/2)` steps on the left, so hidden unit `(k, j)` sees roll rows
//! `j*d - ceil(R/2) .. j*d - ceil(R/2) + R`. The top-down map is the exact
//! adjoint of that convolution.

mod train;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::binio::{to_u32, Reader, Writer};
use crate::error::{dim_err, Error, Result};
use crate::math::{sigmoid, softplus};
use crate::pianoroll::PianoRoll;

pub use train::{
    dead_unit_reset, max_norm_rescale, mean_activation, pcd_update, phase_statistics, sparsity_penalty_grad, train, PcdState,
    PhaseStats, TrainConfig, TrainLogRow,
};

/// Standard deviation of the Gaussian used for filter initialization.
pub const INIT_STD: f64 = 0.01;

const MODEL_MAGIC: &[u8; 5] = b"CRBM1";

// Work (in multiply-adds) above which the convolutions fan out over rayon.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CrbmParams {
    /// `K x R x P`
    pub filters: Array3<f64>,
    /// Length `P`.
    pub visible_bias: Array1<f64>,
    /// Length `K`.
    pub hidden_bias: Array1<f64>,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    /// `K x (T/d)`
    pub values: Array2<f64>,
    pub is_binary: bool,
}

impl CrbmParams {
    pub fn zeros(n_filters: usize, filter_width: usize, pitch_count: usize, stride: usize) -> Self {
        Self {
            filters: Array3::zeros((n_filters, filter_width, pitch_count)),
            visible_bias: Array1::zeros(pitch_count),
            hidden_bias: Array1::zeros(n_filters),
            stride,
        }
    }

    /// Gaussian filters with std [`INIT_STD`], zero biases.
    pub fn random<R: Rng + ?Sized>(
        n_filters: usize,
        filter_width: usize,
        pitch_count: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(n_filters, filter_width, pitch_count, stride);
        params.validate()?;
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        params.filters.mapv_inplace(|_| normal.sample(rng));
        Ok(params)
    }

    pub fn n_filters(&self) -> usize {
        self.filters.dim().0
    }

    pub fn filter_width(&self) -> usize {
        self.filters.dim().1
    }

    pub fn pitch_count(&self) -> usize {
        self.filters.dim().2
    }

    /// Zero rows prepended before the first window (`ceil(R/2)`).
    pub fn left_pad(&self) -> usize {
        self.filter_width().div_ceil(2)
    }

    pub fn validate(&self) -> Result<()> {
        let (k, r, p) = self.filters.dim();
        if k == 0 || r == 0 || p == 0 {
            return dim_err(format!("filters must be non-empty, got {k}x{r}x{p}"));
        }
        if self.stride == 0 {
            return dim_err("stride must be positive");
        }
        if self.visible_bias.len() != p || self.hidden_bias.len() != k {
            return dim_err(format!(
                "bias lengths ({}, {}) do not match P={p}, K={k}",
                self.visible_bias.len(),
                self.hidden_bias.len()
            ));
        }
        let finite = self
            .filters
            .iter()
            .chain(self.visible_bias.iter())
            .chain(self.hidden_bias.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        Ok(())
    }

    /// Number of hidden positions for a roll of `t_steps`.
    pub fn hidden_len(&self, t_steps: usize) -> Result<usize> {
        if t_steps == 0 || !t_steps.is_multiple_of(self.stride) {
            return dim_err(format!(
                "stride {} does not divide T={t_steps}",
                self.stride
            ));
        }
        Ok(t_steps / self.stride)
    }

    fn check_roll(&self, v: &PianoRoll) -> Result<usize> {
        if v.pitch_count() != self.pitch_count() {
            return dim_err(format!(
                "roll has P={} but model expects P={}",
                v.pitch_count(),
                self.pitch_count()
            ));
        }
        self.hidden_len(v.t_steps())
    }

    /// Bottom-up pre-activations `b_k + sum_{r,p} W^k[r,p] v[j*d + r - pad, p]`.
    pub fn hidden_pre(&self, v: &PianoRoll) -> Result<Array2<f64>> {
        let j_len = self.check_roll(v)?;
        Ok(self.hidden_pre_view(v.view(), j_len))
    }

    pub(crate) fn hidden_pre_view(&self, v: ArrayView2<'_, f64>, j_len: usize) -> Array2<f64> {
        let (k_len, r_len, p_len) = self.filters.dim();
        let t_len = v.nrows();
        let pad = self.left_pad() as isize;
        let d = self.stride as isize;
        let v = v.as_standard_layout();
        let v = v.as_slice().unwrap();
        let w = self.filters.as_slice().unwrap();

        let mut out = Array2::zeros((k_len, j_len));
        let fill = |k: usize, row: &mut [f64]| {
            let wk = &w[k * r_len * p_len..(k + 1) * r_len * p_len];
            for (j, slot) in row.iter_mut().enumerate() {
                let mut acc = self.hidden_bias[k];
                for r in 0..r_len {
                    let t = j as isize * d + r as isize - pad;
                    if t < 0 || t >= t_len as isize {
                        continue;
                    }
                    let t = t as usize;
                    acc += dot(&wk[r * p_len..(r + 1) * p_len], &v[t * p_len..(t + 1) * p_len]);
                }
                *slot = acc;
            }
        };
        let slice = out.as_slice_mut().unwrap();
        if k_len * j_len * r_len * p_len >= PAR_THRESHOLD {
            slice
                .par_chunks_mut(j_len)
                .enumerate()
                .for_each(|(k, row)| fill(k, row));
        } else {
            slice
                .chunks_mut(j_len)
                .enumerate()
                .for_each(|(k, row)| fill(k, row));
        }
        out
    }

    pub fn hidden_probs(&self, v: &PianoRoll) -> Result<HiddenState> {
        let mut pre = self.hidden_pre(v)?;
        pre.mapv_inplace(sigmoid);
        Ok(HiddenState {
            values: pre,
            is_binary: false,
        })
    }

    /// Top-down pre-activations: the adjoint of `v -> hidden_pre(v) - b`,
    /// plus the visible bias on every time step.
    pub fn visible_pre(&self, h: &HiddenState) -> Result<Array2<f64>> {
        let (k_len, r_len, p_len) = self.filters.dim();
        let (hk, j_len) = h.values.dim();
        if hk != k_len {
            return dim_err(format!("hidden state has K={hk}, model has K={k_len}"));
        }
        let t_len = j_len * self.stride;
        if t_len == 0 {
            return dim_err("hidden state is empty");
        }
        let pad = self.left_pad();
        let d = self.stride;
        let w = self.filters.as_slice().unwrap();
        let h = h.values.as_standard_layout();
        let h = h.as_slice().unwrap();
        let bias = self.visible_bias.as_slice().unwrap();

        let mut out = Array2::zeros((t_len, p_len));
        let fill = |t: usize, row: &mut [f64]| {
            row.copy_from_slice(bias);
            // r = t + pad - j*d must lie in [0, R)
            let hi = (t + pad) / d;
            let lo = (t + pad + 1).saturating_sub(r_len).div_ceil(d);
            for j in lo..=hi.min(j_len - 1) {
                let r = t + pad - j * d;
                for k in 0..k_len {
                    let hv = h[k * j_len + j];
                    if hv == 0.0 {
                        continue;
                    }
                    let wr = &w[(k * r_len + r) * p_len..(k * r_len + r + 1) * p_len];
                    for (o, &x) in row.iter_mut().zip(wr) {
                        *o += hv * x;
                    }
                }
            }
        };
        let slice = out.as_slice_mut().unwrap();
        if k_len * j_len * r_len * p_len >= PAR_THRESHOLD {
            slice
                .par_chunks_mut(p_len)
                .enumerate()
                .for_each(|(t, row)| fill(t, row));
        } else {
            slice
                .chunks_mut(p_len)
                .enumerate()
                .for_each(|(t, row)| fill(t, row));
        }
        Ok(out)
    }

    pub fn visible_probs(&self, h: &HiddenState, pitch_base: i32) -> Result<PianoRoll> {
        let mut pre = self.visible_pre(h)?;
        pre.mapv_inplace(sigmoid);
        Ok(PianoRoll::from_array_unchecked(pre, pitch_base))
    }

    /// `F(v) = -sum_t a.v_t - sum_{k,j} softplus(hidden_pre(v)_{kj})`.
    pub fn free_energy(&self, v: &PianoRoll) -> Result<f64> {
        let pre = self.hidden_pre(v)?;
        Ok(self.free_energy_from_pre(v, &pre))
    }

    fn free_energy_from_pre(&self, v: &PianoRoll, pre: &Array2<f64>) -> f64 {
        let visible: f64 = v.view().sum_axis(Axis(0)).dot(&self.visible_bias);
        -visible - pre.iter().map(|&x| softplus(x)).sum::<f64>()
    }

    /// Gradient of the free energy with respect to the visible units.
    pub fn free_energy_grad(&self, v: &PianoRoll) -> Result<Array2<f64>> {
        let mut probs = self.hidden_probs(v)?;
        probs.values.mapv_inplace(|x| -x);
        let mut g = self.visible_pre(&probs)?;
        // visible_pre added +a; the gradient needs -a
        for mut row in g.rows_mut() {
            row.zip_mut_with(&self.visible_bias, |x, &a| *x -= 2.0 * a);
        }
        Ok(g)
    }

    /// One block Gibbs sweep: binary hidden sample, then visible
    /// probabilities (not a binary visible sample).
    pub fn gibbs_step<R: Rng + ?Sized>(&self, v: &PianoRoll, rng: &mut R) -> Result<PianoRoll> {
        let mut h = self.hidden_probs(v)?;
        sample_bernoulli(&mut h.values, rng);
        h.is_binary = true;
        self.visible_probs(&h, v.pitch_base())
    }

    /// Runs `steps` Gibbs sweeps from `v0`. The returned trace holds the free
    /// energy of the initial state followed by one entry per sweep.
    pub fn gibbs_chain<R: Rng + ?Sized>(
        &self,
        v0: &PianoRoll,
        steps: usize,
        rng: &mut R,
    ) -> Result<(PianoRoll, Vec<f64>)> {
        let mut v = v0.clone();
        let mut trace = Vec::with_capacity(steps + 1);
        trace.push(self.free_energy(&v)?);
        for _ in 0..steps {
            v = self.gibbs_step(&v, rng)?;
            trace.push(self.free_energy(&v)?);
        }
        Ok((v, trace))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let (k, r, p) = self.filters.dim();
        let mut w = Writer::default();
        w.bytes(MODEL_MAGIC);
        w.u32(to_u32(k, "K")?);
        w.u32(to_u32(r, "R")?);
        w.u32(to_u32(p, "P")?);
        w.u32(to_u32(self.stride, "stride")?);
        w.f32_iter(self.filters.iter());
        w.f32_iter(self.visible_bias.iter());
        w.f32_iter(self.hidden_bias.iter());
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes, "CRBM1");
        rd.expect_magic(MODEL_MAGIC)?;
        let k = rd.u32()? as usize;
        let r = rd.u32()? as usize;
        let p = rd.u32()? as usize;
        let stride = rd.u32()? as usize;
        if k == 0 || r == 0 || p == 0 || stride == 0 {
            return dim_err(format!("CRBM1 header K={k} R={r} P={p} d={stride}"));
        }
        let filters = Array3::from_shape_vec((k, r, p), rd.f32_vec(k * r * p)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        let visible_bias = Array1::from(rd.f32_vec(p)?);
        let hidden_bias = Array1::from(rd.f32_vec(k)?);
        rd.finish()?;
        let params = Self {
            filters,
            visible_bias,
            hidden_bias,
            stride,
        };
        params.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sample_bernoulli<R: Rng + ?Sized>(probs: &mut Array2<f64>, rng: &mut R) {
    for x in probs.iter_mut() {
        *x = if rng.random::<f64>() < *x { 1.0 } else { 0.0 };
    }
}
