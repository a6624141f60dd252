//! The four pipeline commands. Each reads its inputs, never modifies them,
//! and writes only under the given output paths.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crbm_core::constraints::{extract_template, onset_profile, self_similarity, StructureTemplate};
use crbm_core::crbm::{train, CrbmParams, TrainLogRow};
use crbm_core::eval::{compare_ir, keyscape, render_bars, render_heatmap, render_keyscape};
use crbm_core::pianoroll::{
    augment_all_keys, load_roll, midi_to_pianoroll, pianoroll_to_midi, save_roll, Corpus, IngestConfig,
    PianoRoll,
};
use crbm_core::sampler::{batch_sample_all, write_trace_csv};
use log::{info, warn};

use crate::config::RunConfig;
use crate::CliError;

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| data_err(path, e))
}

fn is_midi(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("mid" | "midi")
    )
}

fn is_roll(path: &Path) -> bool {
    is_midi(path) || path.extension().and_then(|e| e.to_str()) == Some("prl")
}

/// Reads a `.prl` roll as stored, or ingests a MIDI file with `ingest`.
pub fn load_input(path: &Path, ingest: &IngestConfig) -> Result<PianoRoll, CliError> {
    if is_midi(path) {
        let bytes = fs::read(path).map_err(|e| data_err(path, e))?;
        let (roll, report) = midi_to_pianoroll(&bytes, ingest).map_err(|e| data_err(path, e))?;
        if report.dropped_out_of_range > 0 {
            warn!("{}: {} notes outside the pitch window", path.display(), report.dropped_out_of_range);
        }
        Ok(roll)
    } else {
        load_roll(path).map_err(|e| data_err(path, e))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

/// Training log path written next to the model: `m.crbm` gives `m.train.csv`.
pub fn train_log_path(out_model: &Path) -> PathBuf {
    out_model.with_extension("train.csv")
}

pub fn write_train_log<W: Write>(rows: &[TrainLogRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch,mean_free_energy,mean_hidden_activation,units_reset")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.epoch, r.mean_free_energy, r.mean_hidden_activation, r.units_reset
        )?;
    }
    out.flush()
}

/// Trains on every roll listed in `manifest`, one path per line relative to
/// the manifest's directory.
pub fn cmd_train(manifest: &Path, config: &RunConfig, out_model: &Path) -> Result<(), CliError> {
    let train_cfg = config.train_config()?;
    let ingest = config.ingest_config()?;
    let augment: bool = config.get("augment")?;
    let text = fs::read_to_string(manifest).map_err(|e| data_err(manifest, e))?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut pieces = Vec::new();
    let mut names = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let path = dir.join(line);
        pieces.push(load_input(&path, &ingest)?);
        names.push(line.to_string());
    }
    if pieces.is_empty() {
        return Err(data_err(manifest, "manifest lists no pieces"));
    }
    let mut corpus = Corpus::new(pieces, names).map_err(|e| data_err(manifest, e))?;
    if augment {
        let (augmented, dropped) = augment_all_keys(&corpus)?;
        info!("augmented to {} pieces, {dropped} cells dropped", augmented.len());
        corpus = augmented;
    }
    let (model, log) = train(&corpus.pieces, &train_cfg)?;
    model.save(out_model).map_err(|e| data_err(out_model, e))?;
    let log_path = train_log_path(out_model);
    write_train_log(&log, create(&log_path)?).map_err(|e| data_err(&log_path, e))?;
    info!("wrote {} and {}", out_model.display(), log_path.display());
    Ok(())
}

pub fn cmd_extract(input: &Path, config: &RunConfig, out_template: &Path) -> Result<(), CliError> {
    let tpl_cfg = config.template_config()?;
    let roll = load_input(input, &config.ingest_config()?)?;
    // the piece loaded fine, so a failure here is a parameter mismatch
    let template = extract_template(&roll, &tpl_cfg)
        .map_err(|e| CliError::Config(format!("template parameters do not fit {}: {e}", input.display())))?;
    template.save(out_template).map_err(|e| data_err(out_template, e))?;
    Ok(())
}

/// Runs `n_solutions` chains and writes a trace per chain plus the best
/// `select_k` rolls as `sample_NN.prl` and `sample_NN.mid`, best first.
pub fn cmd_sample(model: &Path, template: &Path, config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let sampler_cfg = config.sampler_config()?;
    let n_solutions: usize = config.get("n_solutions")?;
    let select_k: usize = config.get("select_k")?;
    let threshold: f64 = config.get("threshold")?;
    if select_k == 0 || select_k > n_solutions {
        return Err(CliError::Config(format!(
            "need 1 <= select_k ({select_k}) <= n_solutions ({n_solutions})"
        )));
    }
    let params = CrbmParams::load(model).map_err(|e| data_err(model, e))?;
    let tpl = StructureTemplate::load(template).map_err(|e| data_err(template, e))?;
    if params.pitch_count() != tpl.pitch_count {
        return Err(CliError::Config(format!(
            "model has {} pitch rows but template has {}",
            params.pitch_count(),
            tpl.pitch_count
        )));
    }
    params
        .hidden_len(tpl.t_steps)
        .map_err(|e| CliError::Config(format!("template length does not fit the model: {e}")))?;

    let (results, _) = batch_sample_all(&params, &tpl, &sampler_cfg, n_solutions)?;
    fs::create_dir_all(out_dir).map_err(|e| data_err(out_dir, e))?;
    let summary_path = out_dir.join("samples.csv");
    let mut summary = create(&summary_path)?;
    let io = |e| data_err(&summary_path, e);
    writeln!(summary, "rank,seed,best_score,written").map_err(io)?;
    for (rank, r) in results.iter().enumerate() {
        let trace_path = out_dir.join(format!("trace_seed{}.csv", r.seed));
        write_trace_csv(&r.trace, create(&trace_path)?)?;
        let written = rank < select_k;
        if written {
            let roll_path = out_dir.join(format!("sample_{rank:02}.prl"));
            save_roll(&r.best, &roll_path).map_err(|e| data_err(&roll_path, e))?;
            let midi_path = roll_path.with_extension("mid");
            fs::write(&midi_path, pianoroll_to_midi(&r.best, threshold)?).map_err(|e| data_err(&midi_path, e))?;
        }
        writeln!(summary, "{rank},{},{},{written}", r.seed, r.best_score).map_err(io)?;
    }
    summary.flush().map_err(io)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Ir,
    Render,
}

impl std::str::FromStr for EvalMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "ir" => Ok(Self::Ir),
            "render" => Ok(Self::Render),
            _ => Err(CliError::Config(format!("unknown eval mode '{s}' (expected ir or render)"))),
        }
    }
}

/// A directory argument becomes a group of the `.prl` rolls inside it, or of
/// its MIDI files when it holds no `.prl`, sorted by name. A file argument is
/// a group of one.
fn collect_group(path: &Path, ingest: &IngestConfig) -> Result<(String, Vec<(String, PianoRoll)>), CliError> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| data_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_roll(p))
            .collect();
        // sample directories hold each roll twice
        if files.iter().any(|p| !is_midi(p)) {
            files.retain(|p| !is_midi(p));
        }
        files.sort();
        if files.is_empty() {
            return Err(data_err(path, "no .prl or .mid files"));
        }
        files
    } else {
        vec![path.to_path_buf()]
    };
    let rolls = files
        .iter()
        .map(|f| Ok((stem(f), load_input(f, ingest)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((stem(path), rolls))
}

/// `ir` writes `ir_summary.csv` (each group against the first) and
/// `ir_pieces.csv`; `render` writes a self-similarity heatmap, an onset
/// profile and a keyscape per roll.
pub fn cmd_eval(paths: &[PathBuf], mode: &str, config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let mode: EvalMode = mode.parse()?;
    if paths.is_empty() {
        return Err(CliError::Config("eval needs at least one input".into()));
    }
    let ingest = config.ingest_config()?;
    let groups = paths
        .iter()
        .map(|p| collect_group(p, &ingest))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out_dir).map_err(|e| data_err(out_dir, e))?;
    match mode {
        EvalMode::Ir => eval_ir(&groups, config.get("threshold")?, out_dir),
        EvalMode::Render => {
            let tpl_cfg = config.template_config()?;
            let levels: usize = config.get("keyscape_levels")?;
            for (_, rolls) in &groups {
                for (name, roll) in rolls {
                    render_roll(name, roll, tpl_cfg.lambda, tpl_cfg.bar_len, levels, out_dir)?;
                }
            }
            Ok(())
        }
    }
}

fn eval_ir(groups: &[(String, Vec<(String, PianoRoll)>)], threshold: f64, out_dir: &Path) -> Result<(), CliError> {
    let named: Vec<(String, Vec<PianoRoll>)> = groups
        .iter()
        .map(|(g, rolls)| (g.clone(), rolls.iter().map(|(_, r)| r.clone()).collect()))
        .collect();
    let pairs: Vec<(usize, usize)> = (1..named.len()).map(|i| (0, i)).collect();
    let cmp = compare_ir(&named, &pairs, threshold)?;
    let path = out_dir.join("ir_summary.csv");
    cmp.write_csv(create(&path)?)?;

    let path = out_dir.join("ir_pieces.csv");
    let mut out = create(&path)?;
    let io = |e| data_err(&path, e);
    writeln!(out, "group,piece,ir").map_err(io)?;
    for ((g, rolls), summary) in groups.iter().zip(&cmp.groups) {
        for ((name, _), ir) in rolls.iter().zip(&summary.irs) {
            writeln!(out, "{g},{name},{ir}").map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

fn render_roll(
    name: &str,
    roll: &PianoRoll,
    lambda: usize,
    bar_len: usize,
    levels: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    let sq = roll.view().mapv(|x| x * x);
    let heat = render_heatmap(&self_similarity(sq.view(), lambda)?)?;
    let onsets = onset_profile(roll.view(), bar_len)?;
    let bars = render_bars(onsets.as_slice().expect("contiguous profile"))?;
    // window count doubles per level and may not exceed the roll length
    let max_levels = (usize::BITS - roll.t_steps().leading_zeros()) as usize;
    let scape = render_keyscape(&keyscape(roll, levels.clamp(1, max_levels))?)?;
    for (suffix, bytes) in [("selfsim", heat), ("onsets", bars), ("keyscape", scape)] {
        let path = out_dir.join(format!("{name}_{suffix}.svg"));
        fs::write(&path, bytes).map_err(|e| data_err(&path, e))?;
    }
    Ok(())
}
