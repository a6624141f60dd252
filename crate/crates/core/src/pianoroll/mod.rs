//! Binary piano-roll representation of symbolic music.
//!
//! A roll is a `T x P` matrix indexed by time (sixteenth-note steps) and pitch
//! row. Row `p` corresponds to MIDI pitch `pitch_base + p`. Entries are kept in
//! `[0, 1]`: ingestion produces `{0, 1}`, while sampling and gradient descent
//! produce intermediate probabilities.

mod midi;

use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};

use crate::binio::{to_u32, Reader, Writer};
use crate::error::{dim_err, Error, Result};

pub use midi::{
    midi_to_notes, midi_to_pianoroll, notes_to_pianoroll, pianoroll_to_midi, pianoroll_to_notes,
    IngestConfig, IngestReport, NoteEvent, EXPORT_PPQ, TICKS_PER_STEP,
};

pub const DEFAULT_T_STEPS: usize = 512;
pub const DEFAULT_PITCH_COUNT: usize = 64;
pub const DEFAULT_PITCH_BASE: i32 = 28;

const PRL_MAGIC: &[u8; 4] = b"PRL1";

#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    data: Array2<f64>,
    pitch_base: i32,
}

impl PianoRoll {
    /// Wraps a `T x P` matrix. Fails if any entry is outside `[0, 1]` or NaN,
    /// or if either dimension is zero.
    pub fn new(data: Array2<f64>, pitch_base: i32) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return dim_err(format!("roll must be non-empty, got {:?}", data.dim()));
        }
        if let Some(bad) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidArgument(format!(
                "roll entry {bad} outside [0, 1]"
            )));
        }
        Ok(Self { data, pitch_base })
    }

    pub fn zeros(t_steps: usize, pitch_count: usize, pitch_base: i32) -> Self {
        Self {
            data: Array2::zeros((t_steps, pitch_count)),
            pitch_base,
        }
    }

    /// Builds a roll by clamping every entry into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(mut data: Array2<f64>, pitch_base: i32) -> Self {
        data.mapv_inplace(clamp01);
        Self { data, pitch_base }
    }

    /// Entries drawn independently from `U[0, 1)`.
    pub fn uniform_noise<R: rand::Rng + ?Sized>(
        t_steps: usize,
        pitch_count: usize,
        pitch_base: i32,
        rng: &mut R,
    ) -> Self {
        let data = Array2::from_shape_simple_fn((t_steps, pitch_count), || rng.random::<f64>());
        Self { data, pitch_base }
    }

    pub(crate) fn from_array_unchecked(data: Array2<f64>, pitch_base: i32) -> Self {
        debug_assert!(data.iter().all(|x| (0.0..=1.0).contains(x)));
        Self { data, pitch_base }
    }

    pub fn t_steps(&self) -> usize {
        self.data.nrows()
    }

    pub fn pitch_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn pitch_base(&self) -> i32 {
        self.pitch_base
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn get(&self, t: usize, p: usize) -> f64 {
        self.data[[t, p]]
    }

    /// Sets a single cell, clamping into `[0, 1]`.
    pub fn set(&mut self, t: usize, p: usize, value: f64) {
        self.data[[t, p]] = clamp01(value);
    }

    pub fn same_shape(&self, other: &PianoRoll) -> bool {
        self.data.dim() == other.data.dim()
    }

    /// Thresholded copy with entries in `{0, 1}`.
    pub fn binarize(&self, threshold: f64) -> PianoRoll {
        Self {
            data: self.data.mapv(|x| if x >= threshold { 1.0 } else { 0.0 }),
            pitch_base: self.pitch_base,
        }
    }

    /// Number of entries that are exactly 1.
    pub fn active_cells(&self) -> usize {
        self.data.iter().filter(|&&x| x >= 1.0).count()
    }

    /// Time window `[start, end)` as a new roll.
    pub fn slice_time(&self, start: usize, end: usize) -> Result<PianoRoll> {
        if start >= end || end > self.t_steps() {
            return dim_err(format!(
                "time window {start}..{end} invalid for T={}",
                self.t_steps()
            ));
        }
        Ok(Self {
            data: self.data.slice(s![start..end, ..]).to_owned(),
            pitch_base: self.pitch_base,
        })
    }

    /// Copy zero-padded (or truncated) to exactly `t_steps` rows.
    pub fn with_length(&self, t_steps: usize) -> PianoRoll {
        let mut data = Array2::zeros((t_steps, self.pitch_count()));
        let n = t_steps.min(self.t_steps());
        data.slice_mut(s![..n, ..])
            .assign(&self.data.slice(s![..n, ..]));
        Self {
            data,
            pitch_base: self.pitch_base,
        }
    }

    pub fn to_prl_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(PRL_MAGIC);
        w.u32(to_u32(self.t_steps(), "T")?);
        w.u32(to_u32(self.pitch_count(), "P")?);
        w.i32(self.pitch_base);
        w.f32_iter(self.data.iter());
        Ok(w.buf)
    }

    pub fn from_prl_bytes(bytes: &[u8]) -> Result<PianoRoll> {
        let mut r = Reader::new(bytes, "PRL1");
        r.expect_magic(PRL_MAGIC)?;
        let t = r.u32()? as usize;
        let p = r.u32()? as usize;
        let pitch_base = r.i32()?;
        if t == 0 || p == 0 {
            return dim_err(format!("PRL1 header has T={t}, P={p}"));
        }
        let values = r.f32_vec(t * p)?;
        r.finish()?;
        let data = Array2::from_shape_vec((t, p), values)
            .map_err(|e| Error::Format(e.to_string()))?;
        PianoRoll::new(data, pitch_base).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Format(m),
            other => other,
        })
    }
}

#[inline]
pub(crate) fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

pub fn save_roll(roll: &PianoRoll, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, roll.to_prl_bytes()?)?;
    Ok(())
}

pub fn load_roll(path: impl AsRef<Path>) -> Result<PianoRoll> {
    PianoRoll::from_prl_bytes(&fs::read(path)?)
}

/// Shifts every cell by `semitones` pitch rows (`+k` is higher). Returns the
/// shifted roll and the number of non-zero cells pushed outside `[0, P)`.
pub fn transpose(roll: &PianoRoll, semitones: i32) -> Result<(PianoRoll, usize)> {
    let p = roll.pitch_count() as i64;
    if (semitones as i64).abs() >= p {
        return Err(Error::InvalidArgument(format!(
            "|semitones|={} must be < pitch_count={p}",
            semitones.abs()
        )));
    }
    let mut out = Array2::zeros(roll.data.dim());
    let mut dropped = 0;
    for ((t, row), &x) in roll.data.indexed_iter() {
        if x == 0.0 {
            continue;
        }
        let target = row as i64 + semitones as i64;
        if (0..p).contains(&target) {
            out[[t, target as usize]] = x;
        } else {
            dropped += 1;
        }
    }
    Ok((PianoRoll::from_array_unchecked(out, roll.pitch_base), dropped))
}

/// Ordered collection of rolls sharing pitch geometry.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub pieces: Vec<PianoRoll>,
    pub names: Vec<String>,
    /// Transposition convention when the corpus was produced by
    /// [`augment_all_keys`].
    pub augmentation: Option<String>,
}

pub const AUGMENT_CONVENTION: &str = "+0..+11 semitones upward";

impl Corpus {
    pub fn new(pieces: Vec<PianoRoll>, names: Vec<String>) -> Result<Self> {
        if pieces.len() != names.len() {
            return Err(Error::InvalidArgument(format!(
                "{} pieces but {} names",
                pieces.len(),
                names.len()
            )));
        }
        if let Some(first) = pieces.first() {
            for (piece, name) in pieces.iter().zip(&names) {
                if piece.pitch_count() != first.pitch_count()
                    || piece.pitch_base() != first.pitch_base()
                {
                    return dim_err(format!(
                        "piece {name} has pitch geometry ({}, {}) but corpus uses ({}, {})",
                        piece.pitch_count(),
                        piece.pitch_base(),
                        first.pitch_count(),
                        first.pitch_base()
                    ));
                }
            }
        }
        Ok(Self {
            pieces,
            names,
            augmentation: None,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.pieces.iter().map(PianoRoll::t_steps).sum()
    }
}

/// Transposes every piece by `0..=11` semitones upward. Output order is
/// piece-major: the twelve versions of piece 0 first, shift 0 leading each
/// group. Also returns the total number of dropped cells.
pub fn augment_all_keys(corpus: &Corpus) -> Result<(Corpus, usize)> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot augment an empty corpus".into()));
    }
    let mut pieces = Vec::with_capacity(corpus.len() * 12);
    let mut names = Vec::with_capacity(corpus.len() * 12);
    let mut dropped = 0;
    for (piece, name) in corpus.pieces.iter().zip(&corpus.names) {
        for k in 0..12 {
            let (shifted, d) = transpose(piece, k)?;
            dropped += d;
            pieces.push(shifted);
            names.push(format!("{name}+{k}"));
        }
    }
    let mut out = Corpus::new(pieces, names)?;
    out.augmentation = Some(AUGMENT_CONVENTION.to_string());
    Ok((out, dropped))
}
