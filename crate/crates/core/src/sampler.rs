//! Constrained sampling: Gibbs phases from the model alternate with gradient
//! descent on the structure cost, and a simulated annealing test decides
//! whether each outer iteration's result is kept.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::constraints::{descend, StructureTemplate};
use crate::crbm::CrbmParams;
use crate::error::{dim_err, Error, Result};
use crate::math::{mean, pop_std};
use crate::pianoroll::{PianoRoll, DEFAULT_PITCH_BASE};

pub const TEMPERATURE_FLOOR: f64 = 1e-6;
pub const STD_FLOOR: f64 = 1e-9;
/// Generator stream used for standardizer warm-up, separate from chain draws.
const CALIBRATION_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub gd_phase_steps: usize,
    pub gd_phase_lr: f64,
    pub gs_block_steps: usize,
    pub interleaved_gd_lr: f64,
    /// Outer iterations run without annealing to calibrate the standardizer.
    pub warmup_iters: usize,
    /// Pitch base given to sampled rolls.
    pub pitch_base: i32,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            outer_iters: 250,
            inner_iters: 15,
            gd_phase_steps: 20,
            gd_phase_lr: 10.0,
            gs_block_steps: 100,
            interleaved_gd_lr: 5.0,
            warmup_iters: 30,
            pitch_base: DEFAULT_PITCH_BASE,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(Error::InvalidArgument("outer_iters must be at least 1".into()));
        }
        for (name, lr) in [
            ("gd_phase_lr", self.gd_phase_lr),
            ("interleaved_gd_lr", self.interleaved_gd_lr),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Affine maps bringing free energy and cost to roughly zero mean and unit
/// variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    stats: Option<[f64; 4]>,
}

impl Default for Standardizer {
    /// An uncalibrated standardizer; sampling with it fails.
    fn default() -> Self {
        Self { stats: None }
    }
}

impl Standardizer {
    /// Standard deviations are floored at 1e-9.
    pub fn new(fe_mean: f64, fe_std: f64, cost_mean: f64, cost_std: f64) -> Self {
        Self {
            stats: Some([fe_mean, fe_std.max(STD_FLOOR), cost_mean, cost_std.max(STD_FLOOR)]),
        }
    }

    /// Population mean and std of each observation series.
    pub fn from_observations(free_energy: &[f64], cost: &[f64]) -> Result<Self> {
        if free_energy.is_empty() || cost.is_empty() {
            return Err(Error::InvalidArgument("no calibration observations".into()));
        }
        Ok(Self::new(
            mean(free_energy),
            pop_std(free_energy),
            mean(cost),
            pop_std(cost),
        ))
    }

    pub fn is_calibrated(&self) -> bool {
        self.stats.is_some()
    }

    /// `(fe_mean, fe_std, cost_mean, cost_std)`.
    pub fn parts(&self) -> Result<(f64, f64, f64, f64)> {
        let [a, b, c, d] = self.stats.ok_or(Error::NotCalibrated)?;
        Ok((a, b, c, d))
    }

    pub fn free_energy(&self, f: f64) -> Result<f64> {
        let (m, s, _, _) = self.parts()?;
        Ok((f - m) / s)
    }

    pub fn cost(&self, c: f64) -> Result<f64> {
        let (_, _, m, s) = self.parts()?;
        Ok((c - m) / s)
    }
}

/// `max(1 - i / n, 1e-6)`.
pub fn temperature(i: usize, n: usize) -> f64 {
    (1.0 - i as f64 / n as f64).max(TEMPERATURE_FLOOR)
}

/// `min(1, exp(-(f_new - f_old) / temp))`.
pub fn sa_keep_probability(f_new: f64, f_old: f64, temp: f64) -> f64 {
    (-(f_new - f_old) / temp).exp().min(1.0)
}

/// Keeps the candidate iff both uniform draws fall below their keep
/// probabilities. Two numbers are drawn on every call.
pub fn sa_accept<R: Rng + ?Sized>(
    fe_new: f64,
    fe_old: f64,
    cost_new: f64,
    cost_old: f64,
    temp: f64,
    rng: &mut R,
) -> bool {
    let r_e: f64 = rng.random();
    let r_c: f64 = rng.random();
    r_e < sa_keep_probability(fe_new, fe_old, temp) && r_c < sa_keep_probability(cost_new, cost_old, temp)
}

/// One row per outer iteration, describing the state retained after the
/// annealing decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub free_energy: f64,
    pub cost: f64,
    pub std_free_energy: f64,
    pub std_cost: f64,
    pub accepted: bool,
    pub best_score: f64,
}

pub const TRACE_HEADER: &str = "iter,free_energy,cost,std_free_energy,std_cost,accepted,best_score";

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter,
            r.free_energy,
            r.cost,
            r.std_free_energy,
            r.std_cost,
            u8::from(r.accepted),
            r.best_score
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SampleResult {
    /// State with the lowest mean standardized score seen.
    pub best: PianoRoll,
    pub best_score: f64,
    /// State retained after the last outer iteration.
    pub last: PianoRoll,
    pub trace: Vec<TraceRow>,
    pub seed: u64,
}

fn check_dims(model: &CrbmParams, template: &StructureTemplate) -> Result<()> {
    model.validate()?;
    if model.pitch_count() != template.pitch_count {
        return dim_err(format!(
            "model has {} pitch rows, template has {}",
            model.pitch_count(),
            template.pitch_count
        ));
    }
    model.hidden_len(template.t_steps)?;
    Ok(())
}

fn gd_steps(v: &mut PianoRoll, template: &StructureTemplate, steps: usize, lr: f64) -> Result<()> {
    if lr == 0.0 || template.weights.is_zero() {
        return Ok(());
    }
    for _ in 0..steps {
        let (_, grad) = template.cost_grad(v)?;
        *v = descend(v, &grad, lr);
    }
    Ok(())
}

/// The body of one outer iteration: a GD phase, then `inner_iters` blocks of
/// Gibbs sweeps each followed by one interleaved GD step.
pub fn outer_iteration<R: Rng + ?Sized>(
    model: &CrbmParams,
    template: &StructureTemplate,
    cfg: &SamplerConfig,
    v: &PianoRoll,
    rng: &mut R,
) -> Result<PianoRoll> {
    let mut v = v.clone();
    gd_steps(&mut v, template, cfg.gd_phase_steps, cfg.gd_phase_lr)?;
    for _ in 0..cfg.inner_iters {
        for _ in 0..cfg.gs_block_steps {
            v = model.gibbs_step(&v, rng)?;
        }
        gd_steps(&mut v, template, 1, cfg.interleaved_gd_lr)?;
    }
    Ok(v)
}

fn scores(model: &CrbmParams, template: &StructureTemplate, v: &PianoRoll) -> Result<(f64, f64)> {
    Ok((model.free_energy(v)?, template.cost(v)?.total))
}

/// Runs `warmup_iters` outer iterations from uniform noise, keeping every
/// result, and standardizes with the observed free energies and costs.
pub fn calibrate_standardizer<R: Rng + ?Sized>(
    model: &CrbmParams,
    template: &StructureTemplate,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Standardizer> {
    cfg.validate()?;
    check_dims(model, template)?;
    if cfg.warmup_iters == 0 {
        return Err(Error::InvalidArgument("warmup_iters must be at least 1".into()));
    }
    let mut v = PianoRoll::uniform_noise(template.t_steps, template.pitch_count, cfg.pitch_base, rng);
    let mut fe = Vec::with_capacity(cfg.warmup_iters);
    let mut cost = Vec::with_capacity(cfg.warmup_iters);
    for _ in 0..cfg.warmup_iters {
        v = outer_iteration(model, template, cfg, &v, rng)?;
        let (f, c) = scores(model, template, &v)?;
        fe.push(f);
        cost.push(c);
    }
    Standardizer::from_observations(&fe, &cost)
}

/// Calibration generator derived from the configured seed.
pub fn calibration_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CALIBRATION_STREAM);
    rng
}

/// One annealed chain seeded with `cfg.rng_seed`.
pub fn constrained_sample(
    model: &CrbmParams,
    template: &StructureTemplate,
    cfg: &SamplerConfig,
    standardizer: &Standardizer,
) -> Result<SampleResult> {
    cfg.validate()?;
    check_dims(model, template)?;
    if !standardizer.is_calibrated() {
        return Err(Error::NotCalibrated);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut v = PianoRoll::uniform_noise(template.t_steps, template.pitch_count, cfg.pitch_base, &mut rng);

    // the first iteration's result is kept unconditionally: the noise it
    // started from is not a solution candidate
    let mut prev: Option<(f64, f64)> = None;
    let mut best = v.clone();
    let mut best_score = f64::INFINITY;
    let mut trace = Vec::with_capacity(cfg.outer_iters);

    for i in 1..=cfg.outer_iters {
        let candidate = outer_iteration(model, template, cfg, &v, &mut rng)?;
        let (fe, cost) = scores(model, template, &candidate)?;
        let std_fe = standardizer.free_energy(fe)?;
        let std_cost = standardizer.cost(cost)?;
        let accepted = match prev {
            None => true,
            Some((old_fe, old_cost)) => {
                let temp = temperature(i, cfg.outer_iters);
                sa_accept(std_fe, old_fe, std_cost, old_cost, temp, &mut rng)
            }
        };
        if accepted {
            v = candidate;
            prev = Some((std_fe, std_cost));
            let score = (std_fe + std_cost) / 2.0;
            if score < best_score {
                best_score = score;
                best = v.clone();
            }
            trace.push(TraceRow {
                iter: i,
                free_energy: fe,
                cost,
                std_free_energy: std_fe,
                std_cost,
                accepted,
                best_score,
            });
        } else {
            let last = *trace.last().expect("first iteration is always kept");
            trace.push(TraceRow {
                iter: i,
                accepted,
                best_score,
                ..last
            });
        }
    }
    Ok(SampleResult {
        best,
        best_score,
        last: v,
        trace,
        seed: cfg.rng_seed,
    })
}

/// Calibrates once, then runs `n_solutions` chains with seeds
/// `rng_seed + i` in parallel. Every chain is returned, sorted by ascending
/// best score; ties keep seed order.
pub fn batch_sample_all(
    model: &CrbmParams,
    template: &StructureTemplate,
    cfg: &SamplerConfig,
    n_solutions: usize,
) -> Result<(Vec<SampleResult>, Standardizer)> {
    if n_solutions == 0 {
        return Err(Error::InvalidArgument("n_solutions must be at least 1".into()));
    }
    let standardizer = calibrate_standardizer(model, template, cfg, &mut calibration_rng(cfg.rng_seed))?;
    let mut results = (0..n_solutions)
        .into_par_iter()
        .map(|i| {
            let chain_cfg = SamplerConfig {
                rng_seed: cfg.rng_seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            constrained_sample(model, template, &chain_cfg, &standardizer)
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.best_score.total_cmp(&b.best_score));
    Ok((results, standardizer))
}

/// The `select_k` best of [`batch_sample_all`].
pub fn batch_sample(
    model: &CrbmParams,
    template: &StructureTemplate,
    cfg: &SamplerConfig,
    n_solutions: usize,
    select_k: usize,
) -> Result<(Vec<SampleResult>, Standardizer)> {
    if select_k == 0 || select_k > n_solutions {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= select_k ({select_k}) <= n_solutions ({n_solutions})"
        )));
    }
    let (mut results, standardizer) = batch_sample_all(model, template, cfg, n_solutions)?;
    results.truncate(select_k);
    Ok((results, standardizer))
}
