//! Correlation key finding and multi-resolution keyscapes.

use std::fmt;

use crate::error::{Error, Result};
use crate::pianoroll::PianoRoll;

/// Krumhansl–Kessler probe-tone ratings, tonic first.
pub const KK_MAJOR: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
pub const KK_MINOR: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

const PC_NAMES: [&str; 12] = ["C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"];

/// One of 24 keys: index `0..12` major on C..B, `12..24` minor on C..B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key(u8);

impl Key {
    pub fn new(tonic: usize, minor: bool) -> Self {
        Key((tonic % 12) as u8 + if minor { 12 } else { 0 })
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < 24).then_some(Key(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn tonic(self) -> usize {
        self.index() % 12
    }

    pub fn is_minor(self) -> bool {
        self.0 >= 12
    }

    pub fn transposed(self, semitones: i32) -> Self {
        Key::new((self.tonic() as i32 + semitones).rem_euclid(12) as usize, self.is_minor())
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = if self.is_minor() { "minor" } else { "major" };
        write!(f, "{} {mode}", PC_NAMES[self.tonic()])
    }
}

/// A window's key, or `None` for a window without pitch-class variation.
pub type KeyLabel = Option<Key>;

pub fn label_name(label: KeyLabel) -> String {
    label.map_or_else(|| "none".to_string(), |k| k.to_string())
}

/// Summed activation per absolute pitch class.
pub fn pitch_class_histogram(roll: &PianoRoll) -> [f64; 12] {
    let mut h = [0.0; 12];
    for row in roll.view().rows() {
        for (p, &x) in row.iter().enumerate() {
            h[(roll.pitch_base() + p as i32).rem_euclid(12) as usize] += x;
        }
    }
    h
}

fn pearson(a: &[f64; 12], b: &[f64; 12]) -> Option<f64> {
    let ma = a.iter().sum::<f64>() / 12.0;
    let mb = b.iter().sum::<f64>() / 12.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Correlation with each of the 24 rotated profiles, or `None` when the
/// histogram is flat.
pub fn key_correlations(hist: &[f64; 12]) -> Option<[f64; 24]> {
    let mut out = [0.0; 24];
    for (idx, slot) in out.iter_mut().enumerate() {
        let key = Key(idx as u8);
        let base = if key.is_minor() { &KK_MINOR } else { &KK_MAJOR };
        let rotated: [f64; 12] = std::array::from_fn(|pc| base[(pc + 12 - key.tonic()) % 12]);
        *slot = pearson(hist, &rotated)?;
    }
    Some(out)
}

/// Best-correlated key; ties go to the lowest key index.
pub fn ks_key_from_histogram(hist: &[f64; 12]) -> KeyLabel {
    let corr = key_correlations(hist)?;
    let mut best = 0;
    for (i, &c) in corr.iter().enumerate() {
        if c > corr[best] {
            best = i;
        }
    }
    Some(Key(best as u8))
}

pub fn ks_key_estimate(window: &PianoRoll) -> KeyLabel {
    ks_key_from_histogram(&pitch_class_histogram(window))
}

/// Level `l` holds `2^l` window labels; level 0 covers the whole piece.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyscape {
    pub levels: Vec<Vec<KeyLabel>>,
}

pub fn keyscape(roll: &PianoRoll, levels: usize) -> Result<Keyscape> {
    if levels == 0 {
        return Err(Error::InvalidArgument("keyscape needs at least one level".into()));
    }
    let t_len = roll.t_steps();
    if levels > usize::BITS as usize || (1usize << (levels - 1)) > t_len {
        return Err(Error::InvalidArgument(format!(
            "{levels} levels need at least 2^{} steps, roll has {t_len}",
            levels - 1
        )));
    }
    let rows = (0..levels)
        .map(|l| {
            let n = 1usize << l;
            (0..n)
                .map(|i| {
                    let window = roll.slice_time(i * t_len / n, (i + 1) * t_len / n)?;
                    Ok(ks_key_estimate(&window))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Keyscape { levels: rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_values() {
        assert_eq!(KK_MAJOR[0], 6.35);
        assert_eq!(KK_MINOR[3], 5.38);
        assert!((KK_MAJOR.iter().sum::<f64>() - 41.79).abs() < 1e-9);
        assert!((KK_MINOR.iter().sum::<f64>() - 44.51).abs() < 1e-9);
    }

    #[test]
    fn labels() {
        assert_eq!(Key::new(0, false).to_string(), "C major");
        assert_eq!(Key::new(9, true).to_string(), "A minor");
        assert_eq!(Key::new(11, false).transposed(2), Key::new(1, false));
        assert_eq!(label_name(None), "none");
        assert!(Key::from_index(24).is_none());
    }

    #[test]
    fn flat_histograms_have_no_key() {
        assert_eq!(ks_key_from_histogram(&[0.0; 12]), None);
        assert_eq!(ks_key_from_histogram(&[2.0; 12]), None);
    }
}
