//! Flat `key = value` run configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Every key has a
//! default except `seed`, which randomized commands require explicitly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crbm_core::constraints::{ConstraintWeights, TemplateConfig};
use crbm_core::crbm::TrainConfig;
use crbm_core::pianoroll::IngestConfig;
use crbm_core::sampler::SamplerConfig;

use crate::CliError;

pub struct KeySpec {
    pub name: &'static str,
    /// `None` means the key must be given.
    pub default: Option<&'static str>,
    pub doc: &'static str,
}

const fn key(name: &'static str, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec {
        name,
        default: Some(default),
        doc,
    }
}

pub const KEYS: &[KeySpec] = &[
    KeySpec {
        name: "seed",
        default: None,
        doc: "RNG seed for train and sample",
    },
    // ingestion
    key("pitch_base", "28", "MIDI pitch of roll row 0"),
    key("pitch_count", "64", "number of pitch rows"),
    key("t_steps", "0", "fixed roll length in sixteenths; 0 sizes each roll to its piece"),
    key("length_multiple", "16", "round piece-sized rolls up to a multiple of this"),
    key("augment", "true", "transpose the training corpus into all 12 keys"),
    // training
    key("n_filters", "2048", "hidden filters K"),
    key("filter_width", "17", "filter width R in time steps"),
    key("stride", "4", "hidden stride d"),
    key("instance_len", "512", "training window length"),
    key("learning_rate", "0.0015", "PCD learning rate"),
    key("particles", "10", "persistent fantasy particles"),
    key("l1", "0.0008", "L1 weight shrinkage"),
    key("l2", "0.01", "L2 weight decay"),
    key("max_norm", "3.0", "per-filter Frobenius norm bound"),
    key("sparsity_target", "0.05", "target mean hidden activation"),
    key("sparsity_strength", "0.1", "sparsity penalty strength"),
    key("reset_threshold", "0.85", "mean activation above which a unit is reset"),
    key("reset_sample", "64", "instances used to estimate activations for resets"),
    key("epochs", "100", "training epochs"),
    key("batch_size", "1", "instances per PCD update"),
    // template
    key("lambda", "8", "self-similarity lag window"),
    key("key_window", "4", "key estimation window in steps"),
    key("bar_len", "16", "bar length in steps for the onset profile"),
    key("octaves", "0", "octaves folded in key estimation; 0 derives them from pitch_count"),
    key("w_selfsim", "1.5", "self-similarity weight"),
    key("w_tonal", "5.0", "tonality weight"),
    key("w_meter", "0.5", "meter weight"),
    // sampling
    key("outer_iters", "250", "annealed outer iterations N"),
    key("inner_iters", "15", "Gibbs blocks per outer iteration"),
    key("gd_phase_steps", "20", "gradient steps opening each outer iteration"),
    key("gd_phase_lr", "10.0", "learning rate of the opening gradient phase"),
    key("gs_block_steps", "100", "Gibbs sweeps per block"),
    key("interleaved_gd_lr", "5.0", "learning rate of the step after each Gibbs block"),
    key("warmup_iters", "30", "outer iterations used to calibrate standardization"),
    key("n_solutions", "20", "chains run by sample"),
    key("select_k", "4", "best chains whose rolls are written"),
    // evaluation
    key("threshold", "0.5", "binarization threshold for IR and MIDI export"),
    key("keyscape_levels", "5", "keyscape depth, capped by roll length"),
];

fn spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .filter_map(|k| k.default.map(|d| (k.name, d.to_string())))
            .collect();
        Self { values }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let spec = spec(key).ok_or_else(|| CliError::Config(format!("unknown key '{key}'")))?;
        self.values.insert(spec.name, value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self
            .values
            .get(key)
            .ok_or_else(|| CliError::Config(format!("key '{key}' must be set")))?;
        raw.parse()
            .map_err(|_| CliError::Config(format!("bad value '{raw}' for key '{key}'")))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("seed")
    }

    /// All keys in table order, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            if let Some(v) = self.values.get(k.name) {
                let _ = writeln!(out, "{} = {v}", k.name);
            }
        }
        out
    }

    pub fn ingest_config(&self) -> Result<IngestConfig, CliError> {
        let t: usize = self.get("t_steps")?;
        Ok(IngestConfig {
            pitch_base: self.get("pitch_base")?,
            pitch_count: self.get("pitch_count")?,
            t_steps: (t > 0).then_some(t),
            length_multiple: self.get("length_multiple")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            n_filters: self.get("n_filters")?,
            filter_width: self.get("filter_width")?,
            stride: self.get("stride")?,
            instance_len: self.get("instance_len")?,
            learning_rate: self.get("learning_rate")?,
            particles: self.get("particles")?,
            l1: self.get("l1")?,
            l2: self.get("l2")?,
            max_norm: self.get("max_norm")?,
            sparsity_target: self.get("sparsity_target")?,
            sparsity_strength: self.get("sparsity_strength")?,
            reset_threshold: self.get("reset_threshold")?,
            reset_sample: self.get("reset_sample")?,
            epochs: self.get("epochs")?,
            batch_size: self.get("batch_size")?,
            rng_seed: self.seed()?,
        })
    }

    pub fn template_config(&self) -> Result<TemplateConfig, CliError> {
        let octaves: usize = self.get("octaves")?;
        Ok(TemplateConfig {
            lambda: self.get("lambda")?,
            key_window: self.get("key_window")?,
            bar_len: self.get("bar_len")?,
            octaves: (octaves > 0).then_some(octaves),
            weights: ConstraintWeights {
                selfsim: self.get("w_selfsim")?,
                tonal: self.get("w_tonal")?,
                meter: self.get("w_meter")?,
            },
        })
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig, CliError> {
        Ok(SamplerConfig {
            outer_iters: self.get("outer_iters")?,
            inner_iters: self.get("inner_iters")?,
            gd_phase_steps: self.get("gd_phase_steps")?,
            gd_phase_lr: self.get("gd_phase_lr")?,
            gs_block_steps: self.get("gs_block_steps")?,
            interleaved_gd_lr: self.get("interleaved_gd_lr")?,
            warmup_iters: self.get("warmup_iters")?,
            pitch_base: self.get("pitch_base")?,
            rng_seed: self.seed()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded() -> RunConfig {
        RunConfig::parse("seed = 0").unwrap()
    }

    #[test]
    fn defaults_match_library_defaults() {
        let cfg = seeded();
        assert_eq!(cfg.train_config().unwrap(), TrainConfig::default());
        assert_eq!(cfg.sampler_config().unwrap(), SamplerConfig::default());
        let tpl = cfg.template_config().unwrap();
        let lib = TemplateConfig::default();
        assert_eq!((tpl.lambda, tpl.key_window, tpl.bar_len), (lib.lambda, lib.key_window, lib.bar_len));
        assert_eq!(tpl.weights, ConstraintWeights::default());
        assert_eq!(tpl.octaves, lib.octaves);
        let ing = cfg.ingest_config().unwrap();
        let lib = IngestConfig::default();
        assert_eq!(
            (ing.pitch_base, ing.pitch_count, ing.t_steps, ing.length_multiple),
            (lib.pitch_base, lib.pitch_count, lib.t_steps, lib.length_multiple)
        );
    }

    #[test]
    fn parse_comments_and_overrides() {
        let mut cfg = RunConfig::parse("# run\nseed = 7  # fixed\n\nepochs=3\n").unwrap();
        assert_eq!(cfg.seed().unwrap(), 7);
        assert_eq!(cfg.get::<usize>("epochs").unwrap(), 3);
        cfg.apply_override("epochs = 9").unwrap();
        assert_eq!(cfg.get::<usize>("epochs").unwrap(), 9);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("epochs"), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_override("epochs").is_err());
        assert!(cfg.seed().is_err());
        cfg.set("epochs", "many").unwrap();
        assert!(cfg.get::<usize>("epochs").is_err());
    }
}
