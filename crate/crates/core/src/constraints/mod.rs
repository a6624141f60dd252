//! Differentiable structure constraints extracted from a template piece.
//!
//! Three terms compare a candidate roll `v` with a template `x`:
//!
//! * self-similarity of the squared rolls (repetition structure),
//! * normalized key-estimation vectors per time window (tonal progression),
//! * the standardized onset distribution over bar positions (meter).
//!
//! Each term returns its cost and the analytic gradient with respect to `v`.
//! The weighted sum drives [`gd_step`], which descends on `v` and clamps the
//! result back into `[0, 1]`.

pub mod gradcheck;
pub mod meter;
pub mod selfsim;
pub mod tonality;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::binio::{to_u32, Reader, Writer};
use crate::error::{dim_err, Error, Result};
use crate::pianoroll::{clamp01, PianoRoll};

pub use meter::{meter_cost_grad, onset_function, onset_profile, raw_onset_profile};
pub use selfsim::{self_similarity, selfsim_cost_grad};
pub use tonality::{
    default_octaves, key_estimation, normalize_key, normalized_key_estimation, shift_for_tonic,
    tonality_cost_grad, KeyProfiles, KEY_VECTOR_LEN, TEMPERLEY_MAJOR, TEMPERLEY_MINOR,
};

const TEMPLATE_MAGIC: &[u8; 5] = b"TMPL1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintWeights {
    pub selfsim: f64,
    pub tonal: f64,
    pub meter: f64,
}

impl Default for ConstraintWeights {
    fn default() -> Self {
        Self {
            selfsim: 1.5,
            tonal: 5.0,
            meter: 0.5,
        }
    }
}

impl ConstraintWeights {
    pub fn zero() -> Self {
        Self {
            selfsim: 0.0,
            tonal: 0.0,
            meter: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.selfsim == 0.0 && self.tonal == 0.0 && self.meter == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateConfig {
    /// Tile width of the self-similarity map.
    pub lambda: usize,
    /// Key-estimation window length.
    pub key_window: usize,
    /// Steps per bar.
    pub bar_len: usize,
    /// Octaves folded by key estimation; `None` covers the whole pitch range.
    pub octaves: Option<usize>,
    pub weights: ConstraintWeights,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            lambda: 8,
            key_window: 4,
            bar_len: 16,
            octaves: None,
            weights: ConstraintWeights::default(),
        }
    }
}

/// Targets extracted from a template piece, plus the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTemplate {
    pub t_steps: usize,
    pub pitch_count: usize,
    /// `s(x^2)`, `T x (T / lambda)`.
    pub selfsim_target: Array2<f64>,
    /// Normalized key vectors, `(T - key_window + 1) x 24`.
    pub key_target: Array2<f64>,
    /// Standardized onset profile, length `bar_len`.
    pub onset_target: Array1<f64>,
    pub lambda: usize,
    pub key_window: usize,
    pub bar_len: usize,
    pub octaves: usize,
    pub weights: ConstraintWeights,
    pub profiles: KeyProfiles,
}

/// Per-term costs before weighting, and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    pub selfsim: f64,
    pub tonal: f64,
    pub meter: f64,
}

impl CostBreakdown {
    pub fn from_terms(selfsim: f64, tonal: f64, meter: f64, w: &ConstraintWeights) -> Self {
        Self {
            total: selfsim * w.selfsim + tonal * w.tonal + meter * w.meter,
            selfsim,
            tonal,
            meter,
        }
    }
}

pub fn extract_template(x: &PianoRoll, cfg: &TemplateConfig) -> Result<StructureTemplate> {
    let xv = x.view();
    let octaves = cfg.octaves.unwrap_or_else(|| default_octaves(x.pitch_count()));
    if octaves == 0 {
        return Err(Error::InvalidArgument("octaves must be positive".into()));
    }
    let profiles = KeyProfiles::default();
    let selfsim_target = self_similarity(selfsim::squared(xv).view(), cfg.lambda)?;
    let key_target = normalized_key_estimation(xv, &profiles, cfg.key_window, octaves)?;
    let onset_target = onset_profile(xv, cfg.bar_len)?;
    Ok(StructureTemplate {
        t_steps: x.t_steps(),
        pitch_count: x.pitch_count(),
        selfsim_target,
        key_target,
        onset_target,
        lambda: cfg.lambda,
        key_window: cfg.key_window,
        bar_len: cfg.bar_len,
        octaves,
        weights: cfg.weights,
        profiles,
    })
}

impl StructureTemplate {
    pub fn check_roll(&self, v: &PianoRoll) -> Result<()> {
        if v.t_steps() != self.t_steps || v.pitch_count() != self.pitch_count {
            return dim_err(format!(
                "roll is {}x{}, template is {}x{}",
                v.t_steps(),
                v.pitch_count(),
                self.t_steps,
                self.pitch_count
            ));
        }
        Ok(())
    }

    /// Weighted cost and its gradient. Terms with zero weight are still
    /// evaluated so the breakdown is always complete.
    pub fn cost_grad(&self, v: &PianoRoll) -> Result<(CostBreakdown, Array2<f64>)> {
        self.check_roll(v)?;
        let vv = v.view();
        let (ss, g_ss) = selfsim::cost_grad_against(&self.selfsim_target, vv, self.lambda)?;
        let (tn, g_tn) = tonality::cost_grad_against(
            &self.key_target,
            vv,
            &self.profiles,
            self.key_window,
            self.octaves,
        )?;
        let (mt, g_mt) = meter::cost_grad_against(&self.onset_target, vv, self.bar_len)?;
        let w = &self.weights;
        let mut grad = g_ss * w.selfsim;
        grad.scaled_add(w.tonal, &g_tn);
        grad.scaled_add(w.meter, &g_mt);
        Ok((CostBreakdown::from_terms(ss, tn, mt, w), grad))
    }

    pub fn cost(&self, v: &PianoRoll) -> Result<CostBreakdown> {
        Ok(self.cost_grad(v)?.0)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(TEMPLATE_MAGIC);
        w.u32(to_u32(self.t_steps, "T")?);
        w.u32(to_u32(self.pitch_count, "P")?);
        w.u32(to_u32(self.selfsim_target.ncols(), "J")?);
        w.u32(to_u32(self.key_target.nrows(), "key windows")?);
        w.u32(to_u32(self.onset_target.len(), "bar length")?);
        w.f32_iter(self.selfsim_target.iter());
        w.f32_iter(self.key_target.iter());
        w.f32_iter(self.onset_target.iter());
        for v in [
            self.lambda as f64,
            self.key_window as f64,
            self.bar_len as f64,
            self.octaves as f64,
            self.weights.selfsim,
            self.weights.tonal,
            self.weights.meter,
        ] {
            w.f32(v);
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "TMPL1");
        r.expect_magic(TEMPLATE_MAGIC)?;
        let t = r.u32()? as usize;
        let p = r.u32()? as usize;
        let j = r.u32()? as usize;
        let n_key = r.u32()? as usize;
        let bar = r.u32()? as usize;
        if t == 0 || p == 0 || j == 0 || n_key == 0 || bar == 0 {
            return dim_err(format!("TMPL1 header T={t} P={p} J={j} windows={n_key} bar={bar}"));
        }
        let shape_err = |e: ndarray::ShapeError| Error::Format(e.to_string());
        let selfsim_target = Array2::from_shape_vec((t, j), r.f32_vec(t * j)?).map_err(shape_err)?;
        let key_target =
            Array2::from_shape_vec((n_key, KEY_VECTOR_LEN), r.f32_vec(n_key * KEY_VECTOR_LEN)?)
                .map_err(shape_err)?;
        let onset_target = Array1::from(r.f32_vec(bar)?);
        let mut tail = [0.0f64; 7];
        for slot in tail.iter_mut() {
            *slot = r.f32()? as f64;
        }
        r.finish()?;
        let as_count = |x: f64, what: &str| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::Format(format!("TMPL1: {what}={x} is not a positive integer")))
            }
        };
        let lambda = as_count(tail[0], "lambda")?;
        let key_window = as_count(tail[1], "key_window")?;
        let bar_len = as_count(tail[2], "bar_len")?;
        let octaves = as_count(tail[3], "octaves")?;
        if lambda * j != t || bar_len != bar || key_window + n_key != t + 1 {
            return dim_err("TMPL1 window sizes are inconsistent with the stored arrays");
        }
        Ok(Self {
            t_steps: t,
            pitch_count: p,
            selfsim_target,
            key_target,
            onset_target,
            lambda,
            key_window,
            bar_len,
            octaves,
            weights: ConstraintWeights {
                selfsim: tail[4],
                tonal: tail[5],
                meter: tail[6],
            },
            profiles: KeyProfiles::default(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Cost breakdown and gradient of the weighted objective.
pub fn total_cost_grad(
    template: &StructureTemplate,
    v: &PianoRoll,
) -> Result<(CostBreakdown, Array2<f64>)> {
    template.cost_grad(v)
}

/// `clamp(v - gamma * dphi/dv, 0, 1)`.
pub fn gd_step(v: &PianoRoll, template: &StructureTemplate, gamma: f64) -> Result<PianoRoll> {
    if gamma == 0.0 {
        template.check_roll(v)?;
        return Ok(v.clone());
    }
    let (_, grad) = template.cost_grad(v)?;
    Ok(descend(v, &grad, gamma))
}

/// Clamped gradient step with a precomputed gradient.
pub fn descend(v: &PianoRoll, grad: &Array2<f64>, gamma: f64) -> PianoRoll {
    let mut data = v.as_array().clone();
    data.zip_mut_with(grad, |x, g| *x = clamp01(*x - gamma * g));
    PianoRoll::from_array_unchecked(data, v.pitch_base())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_roll(rng: &mut ChaCha8Rng, t: usize, p: usize) -> PianoRoll {
        PianoRoll::new(Array2::from_shape_simple_fn((t, p), || rng.random()), 0).unwrap()
    }

    fn small_cfg() -> TemplateConfig {
        TemplateConfig {
            lambda: 4,
            key_window: 4,
            bar_len: 8,
            octaves: None,
            weights: ConstraintWeights::default(),
        }
    }

    #[test]
    fn breakdown_is_weighted_sum() {
        let b = CostBreakdown::from_terms(1.0, 2.0, 4.0, &ConstraintWeights::default());
        assert_eq!(b.total, 13.5);
        let doubled = ConstraintWeights {
            tonal: 10.0,
            ..ConstraintWeights::default()
        };
        let b2 = CostBreakdown::from_terms(1.0, 2.0, 4.0, &doubled);
        assert_eq!(b2.total - b.total, 10.0);
        assert_eq!(CostBreakdown::from_terms(0.0, 0.0, 0.0, &doubled).total, 0.0);
    }

    #[test]
    fn template_cost_is_zero_on_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_roll(&mut rng, 32, 12);
        let tpl = extract_template(&x, &small_cfg()).unwrap();
        let (b, g) = tpl.cost_grad(&x).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        assert_eq!(extract_template(&x, &small_cfg()).unwrap(), tpl);
    }

    #[test]
    fn gd_step_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_roll(&mut rng, 32, 12);
        let v = random_roll(&mut rng, 32, 12);
        let tpl = extract_template(&x, &small_cfg()).unwrap();
        assert_eq!(gd_step(&v, &tpl, 0.0).unwrap(), v);
        let big = gd_step(&v, &tpl, 1e4).unwrap();
        assert!(big.view().iter().all(|&e| (0.0..=1.0).contains(&e)));

        let mut grad = Array2::zeros((1, 2));
        grad[[0, 0]] = -0.2;
        grad[[0, 1]] = 0.3;
        let one = PianoRoll::new(Array2::from_elem((1, 2), 1.0), 0).unwrap();
        let zero = PianoRoll::zeros(1, 2, 0);
        assert_eq!(descend(&one, &grad, 1.0).get(0, 0), 1.0);
        assert_eq!(descend(&zero, &grad, 1.0).get(0, 1), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_roll(&mut rng, 32, 12);
        let tpl = extract_template(&x, &small_cfg()).unwrap();
        let v = random_roll(&mut rng, 16, 12);
        assert!(matches!(tpl.cost(&v), Err(Error::Dimension(_))));
    }

    #[test]
    fn template_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_roll(&mut rng, 32, 12);
        let tpl = extract_template(&x, &small_cfg()).unwrap();
        let bytes = tpl.to_bytes().unwrap();
        let back = StructureTemplate::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.lambda, 4);
        assert_eq!(back.weights, ConstraintWeights::default());
        assert_eq!(
            back.selfsim_target[[3, 2]],
            tpl.selfsim_target[[3, 2]] as f32 as f64
        );

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(StructureTemplate::from_bytes(&bad).is_err());
        assert!(StructureTemplate::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }
}
