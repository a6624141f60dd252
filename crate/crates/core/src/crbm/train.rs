//! Persistent Contrastive Divergence training.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{CrbmParams, HiddenState, INIT_STD};
use crate::error::{dim_err, Error, Result};
use crate::pianoroll::PianoRoll;

/// Training hyperparameters. Defaults follow the published recipe where one
/// exists; `max_norm`, the sparsity pair and `epochs` are our own choices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_filters: usize,
    pub filter_width: usize,
    pub stride: usize,
    /// Length of a training instance in time steps.
    pub instance_len: usize,
    pub learning_rate: f64,
    pub particles: usize,
    pub l1: f64,
    pub l2: f64,
    pub max_norm: f64,
    pub sparsity_target: f64,
    pub sparsity_strength: f64,
    pub reset_threshold: f64,
    /// Upper bound on the fixed subsample used for the dead-unit check.
    pub reset_sample: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_filters: 2048,
            filter_width: 17,
            stride: 4,
            instance_len: 512,
            learning_rate: 15e-4,
            particles: 10,
            l1: 8e-4,
            l2: 1e-2,
            max_norm: 3.0,
            sparsity_target: 0.05,
            sparsity_strength: 0.1,
            reset_threshold: 0.85,
            reset_sample: 64,
            epochs: 100,
            batch_size: 1,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let strengths = [
            ("learning_rate", self.learning_rate),
            ("l1", self.l1),
            ("l2", self.l2),
            ("max_norm", self.max_norm),
            ("sparsity_target", self.sparsity_target),
            ("sparsity_strength", self.sparsity_strength),
        ];
        for (name, v) in strengths {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name}={v} must be >= 0")));
            }
        }
        if !(self.reset_threshold > 0.0 && self.reset_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "reset_threshold={} must lie in (0, 1)",
                self.reset_threshold
            )));
        }
        if self.n_filters == 0 || self.filter_width == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("architecture sizes must be positive".into()));
        }
        if self.particles == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("particles and batch_size must be positive".into()));
        }
        if self.instance_len == 0 || !self.instance_len.is_multiple_of(self.stride) {
            return dim_err(format!(
                "stride {} does not divide instance_len {}",
                self.stride, self.instance_len
            ));
        }
        Ok(())
    }
}

/// Persistent fantasy particles and the generator that advances them.
#[derive(Debug, Clone)]
pub struct PcdState {
    pub particles: Vec<PianoRoll>,
    pub rng: ChaCha8Rng,
}

impl PcdState {
    /// Particles start as uniform noise.
    pub fn new(
        n_particles: usize,
        t_steps: usize,
        pitch_count: usize,
        pitch_base: i32,
        mut rng: ChaCha8Rng,
    ) -> Self {
        let particles = (0..n_particles)
            .map(|_| {
                let data = Array2::from_shape_simple_fn((t_steps, pitch_count), || rng.random());
                PianoRoll::from_array_unchecked(data, pitch_base)
            })
            .collect();
        Self { particles, rng }
    }
}

/// Averaged sufficient statistics of one phase (data or model).
#[derive(Debug, Clone)]
pub struct PhaseStats {
    /// `<sum_j h_kj v[j*d + r - pad, p]>`, shape `K x R x P`.
    pub filters: Array3<f64>,
    /// `<sum_t v_t>`, length `P`.
    pub visible: Array1<f64>,
    /// `<sum_j h_kj>`, length `K`.
    pub hidden: Array1<f64>,
    pub hidden_probs: Vec<HiddenState>,
}

pub fn phase_statistics(params: &CrbmParams, rolls: &[PianoRoll]) -> Result<PhaseStats> {
    if rolls.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let (k_len, r_len, p_len) = params.filters.dim();
    let pad = params.left_pad() as isize;
    let d = params.stride as isize;
    let mut filters = Array3::zeros((k_len, r_len, p_len));
    let mut visible = Array1::zeros(p_len);
    let mut hidden = Array1::zeros(k_len);
    let mut hidden_probs = Vec::with_capacity(rolls.len());

    for v in rolls {
        let h = params.hidden_probs(v)?;
        let vd = v.view();
        let t_len = v.t_steps() as isize;
        for k in 0..k_len {
            for (j, &hv) in h.values.row(k).iter().enumerate() {
                for r in 0..r_len {
                    let t = j as isize * d + r as isize - pad;
                    if t < 0 || t >= t_len {
                        continue;
                    }
                    let mut acc = filters.slice_mut(ndarray::s![k, r, ..]);
                    acc.scaled_add(hv, &vd.row(t as usize));
                }
            }
        }
        visible += &vd.sum_axis(Axis(0));
        hidden += &h.values.sum_axis(Axis(1));
        hidden_probs.push(h);
    }
    let n = rolls.len() as f64;
    filters /= n;
    visible /= n;
    hidden /= n;
    Ok(PhaseStats {
        filters,
        visible,
        hidden,
        hidden_probs,
    })
}

/// Mean activation of each hidden feature map over a batch.
pub fn mean_activation(hidden_probs: &[HiddenState]) -> Array1<f64> {
    let k_len = hidden_probs.first().map_or(0, |h| h.values.nrows());
    let mut q = Array1::zeros(k_len);
    let mut count = 0usize;
    for h in hidden_probs {
        q += &h.values.sum_axis(Axis(1));
        count += h.values.ncols();
    }
    if count > 0 {
        q /= count as f64;
    }
    q
}

/// `strength * (q_k - target)`, to be subtracted from the hidden-bias update.
pub fn sparsity_penalty_grad(hidden_probs: &[HiddenState], target: f64, strength: f64) -> Array1<f64> {
    mean_activation(hidden_probs).mapv(|q| strength * (q - target))
}

/// Scales any filter whose Euclidean norm exceeds `max_norm` down to it.
pub fn max_norm_rescale(params: &mut CrbmParams, max_norm: f64) {
    for mut filter in params.filters.outer_iter_mut() {
        let norm = filter.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > max_norm && norm > 0.0 {
            filter *= max_norm / norm;
        }
    }
}

/// Re-draws the filter and zeroes the bias of every hidden map whose mean
/// activation over `data_sample` exceeds `threshold`. Returns the reset maps.
pub fn dead_unit_reset<R: Rng + ?Sized>(
    params: &mut CrbmParams,
    data_sample: &[PianoRoll],
    threshold: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if data_sample.is_empty() {
        return Ok(Vec::new());
    }
    let probs = data_sample
        .iter()
        .map(|v| params.hidden_probs(v))
        .collect::<Result<Vec<_>>>()?;
    let q = mean_activation(&probs);
    let normal = Normal::new(0.0, INIT_STD).unwrap();
    let mut reset = Vec::new();
    for (k, &qk) in q.iter().enumerate() {
        if qk > threshold {
            params
                .filters
                .index_axis_mut(Axis(0), k)
                .mapv_inplace(|_| normal.sample(rng));
            params.hidden_bias[k] = 0.0;
            reset.push(k);
        }
    }
    Ok(reset)
}

/// Gradient step from data and model statistics, followed by L2 decay, L1
/// shrinkage and max-norm rescaling, in that order.
pub(crate) fn apply_update(
    params: &mut CrbmParams,
    positive: &PhaseStats,
    negative: &PhaseStats,
    cfg: &TrainConfig,
) {
    let lr = cfg.learning_rate;
    params.filters.scaled_add(lr, &positive.filters);
    params.filters.scaled_add(-lr, &negative.filters);
    params.visible_bias.scaled_add(lr, &positive.visible);
    params.visible_bias.scaled_add(-lr, &negative.visible);
    params.hidden_bias.scaled_add(lr, &positive.hidden);
    params.hidden_bias.scaled_add(-lr, &negative.hidden);
    let sparsity = sparsity_penalty_grad(
        &positive.hidden_probs,
        cfg.sparsity_target,
        cfg.sparsity_strength,
    );
    params.hidden_bias.scaled_add(-lr, &sparsity);

    let decay = 1.0 - lr * cfg.l2;
    params.filters *= decay;
    let shrink = lr * cfg.l1;
    if shrink > 0.0 {
        params
            .filters
            .mapv_inplace(|w| w.signum() * (w.abs() - shrink).max(0.0));
    }
    max_norm_rescale(params, cfg.max_norm);
}

/// One PCD update: data statistics from `batch`, model statistics from the
/// fantasy particles after advancing each by one Gibbs step.
pub fn pcd_update(
    params: &mut CrbmParams,
    batch: &[PianoRoll],
    state: &mut PcdState,
    cfg: &TrainConfig,
) -> Result<PhaseStats> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if state.particles.is_empty() {
        return Err(Error::InvalidArgument("no fantasy particles".into()));
    }
    for v in batch.iter().chain(&state.particles) {
        if v.pitch_count() != params.pitch_count() {
            return dim_err(format!(
                "roll has P={} but model expects P={}",
                v.pitch_count(),
                params.pitch_count()
            ));
        }
    }
    let positive = phase_statistics(params, batch)?;
    for particle in state.particles.iter_mut() {
        *particle = params.gibbs_step(particle, &mut state.rng)?;
    }
    let negative = phase_statistics(params, &state.particles)?;
    apply_update(params, &positive, &negative, cfg);
    Ok(positive)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub mean_free_energy: f64,
    pub mean_hidden_activation: f64,
    pub units_reset: usize,
}

/// Cuts every piece into consecutive windows of `len` steps, zero-padding
/// the last one.
fn training_instances(corpus: &[PianoRoll], len: usize) -> Vec<PianoRoll> {
    let mut out = Vec::new();
    for piece in corpus {
        let mut start = 0;
        while start < piece.t_steps() {
            let end = (start + len).min(piece.t_steps());
            let window = piece
                .slice_time(start, end)
                .expect("window within bounds")
                .with_length(len);
            out.push(window);
            start += len;
        }
    }
    out
}

/// Trains a C-RBM from scratch. Fully determined by `cfg.rng_seed`.
pub fn train(corpus: &[PianoRoll], cfg: &TrainConfig) -> Result<(CrbmParams, Vec<TrainLogRow>)> {
    cfg.validate()?;
    let first = corpus
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training corpus".into()))?;
    let (pitch_count, pitch_base) = (first.pitch_count(), first.pitch_base());
    if corpus.iter().any(|r| r.pitch_count() != pitch_count) {
        return dim_err("corpus pieces differ in pitch count");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut params = CrbmParams::random(
        cfg.n_filters,
        cfg.filter_width,
        pitch_count,
        cfg.stride,
        &mut rng,
    )?;
    let instances = training_instances(corpus, cfg.instance_len);
    let reset_sample: Vec<PianoRoll> = instances.iter().take(cfg.reset_sample).cloned().collect();
    let particle_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut state = PcdState::new(
        cfg.particles,
        cfg.instance_len,
        pitch_count,
        pitch_base,
        particle_rng,
    );

    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PianoRoll> = chunk.iter().map(|&i| instances[i].clone()).collect();
            pcd_update(&mut params, &batch, &mut state, cfg)?;
        }
        let reset = dead_unit_reset(&mut params, &reset_sample, cfg.reset_threshold, &mut rng)?;
        let mut fe = 0.0;
        let mut probs = Vec::with_capacity(reset_sample.len());
        for v in &reset_sample {
            fe += params.free_energy(v)?;
            probs.push(params.hidden_probs(v)?);
        }
        let q = mean_activation(&probs);
        let row = TrainLogRow {
            epoch,
            mean_free_energy: fe / reset_sample.len().max(1) as f64,
            mean_hidden_activation: q.mean().unwrap_or(0.0),
            units_reset: reset.len(),
        };
        log::debug!("epoch {epoch}: F={:.4} q={:.4}", row.mean_free_energy, row.mean_hidden_activation);
        log.push(row);
    }
    Ok((params, log))
}
