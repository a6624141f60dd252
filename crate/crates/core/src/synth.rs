//! Seeded toy pieces with known repetition structure, for experiments and
//! tests at small scale.

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pianoroll::PianoRoll;

/// Rows of a C-major scale inside one octave starting at C.
const MAJOR_ROWS: [usize; 7] = [0, 2, 4, 5, 7, 9, 11];
const DURATIONS: [usize; 3] = [2, 4, 4];

/// Shape and vocabulary of generated pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub t_steps: usize,
    pub pitch_count: usize,
    /// MIDI pitch of row 0; a multiple of 12 puts C on row 0.
    pub pitch_base: i32,
    pub bar_len: usize,
    /// Adds a two-note accompaniment under the melody.
    pub accompaniment: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            t_steps: 64,
            pitch_count: 12,
            pitch_base: 60,
            bar_len: 16,
            accompaniment: false,
        }
    }
}

/// Triads on I, ii, IV, V and vi as row offsets from C.
const TRIADS: [[usize; 3]; 5] = [[0, 4, 7], [2, 5, 9], [5, 9, 0], [7, 11, 2], [9, 0, 4]];
const CHORD_LEN: usize = 8;

/// A scale-tone melody, optionally over a two-note accompaniment that
/// changes every half bar. Melody notes start on even steps.
fn phrase(rng: &mut ChaCha8Rng, len: usize, cfg: &SynthConfig) -> Array2<f64> {
    let pitch_count = cfg.pitch_count;
    let rows: Vec<usize> = MAJOR_ROWS.iter().copied().filter(|&r| r < pitch_count).collect();
    let mut a = Array2::zeros((len, pitch_count));
    let mut start = 0;
    while cfg.accompaniment && start < len {
        let triad = TRIADS.choose(rng).unwrap();
        let end = (start + CHORD_LEN).min(len);
        for &row in &triad[..2] {
            if row < pitch_count {
                for t in start..end {
                    a[[t, row]] = 1.0;
                }
            }
        }
        start = end;
    }
    let mut t = 0;
    while t < len {
        let dur = (*DURATIONS.choose(rng).unwrap()).min(len - t);
        let row = *rows.choose(rng).unwrap();
        // leave one silent step so repeated pitches still show an onset
        let sounding = if dur > 1 { dur - 1 } else { dur };
        for s in t..t + sounding {
            a[[s, row]] = 1.0;
        }
        t += dur;
    }
    a
}

fn check(cfg: &SynthConfig, unit: usize) -> Result<()> {
    if cfg.pitch_count == 0 || unit == 0 || !cfg.t_steps.is_multiple_of(unit) {
        return Err(Error::InvalidArgument(format!(
            "T={} must be a positive multiple of {unit}",
            cfg.t_steps
        )));
    }
    Ok(())
}

/// A two-bar phrase repeated to fill the piece.
pub fn repeating_piece(cfg: &SynthConfig, seed: u64) -> Result<PianoRoll> {
    let unit = 2 * cfg.bar_len;
    check(cfg, unit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = phrase(&mut rng, unit, cfg);
    let data = Array2::from_shape_fn((cfg.t_steps, cfg.pitch_count), |(t, p)| a[[t % unit, p]]);
    PianoRoll::new(data, cfg.pitch_base)
}

/// Four sections laid out A A B A.
pub fn aaba_piece(cfg: &SynthConfig, seed: u64) -> Result<PianoRoll> {
    check(cfg, 4)?;
    let sec = cfg.t_steps / 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = phrase(&mut rng, sec, cfg);
    let b = phrase(&mut rng, sec, cfg);
    let data = Array2::from_shape_fn((cfg.t_steps, cfg.pitch_count), |(t, p)| {
        let src = if t / sec == 2 { &b } else { &a };
        src[[t % sec, p]]
    });
    PianoRoll::new(data, cfg.pitch_base)
}

/// `n` pieces from consecutive seeds starting at `seed`.
pub fn corpus<F>(n: usize, seed: u64, make: F) -> Result<Vec<PianoRoll>>
where
    F: Fn(u64) -> Result<PianoRoll>,
{
    (0..n as u64).map(|i| make(seed.wrapping_add(i))).collect()
}

/// Random onsets, for a structure-free baseline.
pub fn scattered_piece(cfg: &SynthConfig, density: f64, seed: u64) -> Result<PianoRoll> {
    check(cfg, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array2::from_shape_simple_fn((cfg.t_steps, cfg.pitch_count), || {
        if rng.random::<f64>() < density {
            1.0
        } else {
            0.0
        }
    });
    PianoRoll::new(data, cfg.pitch_base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    #[test]
    fn repeating_piece_repeats() {
        let cfg = SynthConfig::default();
        let r = repeating_piece(&cfg, 3).unwrap();
        let v = r.view();
        assert_eq!(v.slice(s![..32, ..]), v.slice(s![32.., ..]));
        assert!(r.active_cells() > 0);
        assert_eq!(r, repeating_piece(&cfg, 3).unwrap());
        // a note starts every bar
        assert!(v.row(0).sum() == 1.0 && v.row(16).sum() == 1.0);
        for row in v.rows() {
            assert!(row.sum() <= 1.0);
            for (p, &x) in row.iter().enumerate() {
                assert!(x == 0.0 || MAJOR_ROWS.contains(&p));
            }
        }
        let poly = repeating_piece(&SynthConfig { accompaniment: true, ..cfg }, 3).unwrap();
        for row in poly.view().rows() {
            assert!(row.sum() >= 2.0 && row.sum() <= 3.0);
        }
    }

    #[test]
    fn aaba_layout() {
        let cfg = SynthConfig::default();
        let r = aaba_piece(&cfg, 5).unwrap();
        let v = r.view();
        assert_eq!(v.slice(s![..16, ..]), v.slice(s![16..32, ..]));
        assert_eq!(v.slice(s![..16, ..]), v.slice(s![48.., ..]));
        assert!(aaba_piece(&SynthConfig { t_steps: 10, ..cfg }, 0).is_err());
    }
}
