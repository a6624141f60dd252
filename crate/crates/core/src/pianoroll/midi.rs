use std::collections::{HashMap, VecDeque};

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use ndarray::Array2;

use super::{PianoRoll, DEFAULT_PITCH_BASE, DEFAULT_PITCH_COUNT};
use crate::error::{Error, Result};

/// Output resolution: 480 ticks per quarter, so one sixteenth is 120 ticks.
pub const EXPORT_PPQ: u16 = 480;
pub const TICKS_PER_STEP: u32 = EXPORT_PPQ as u32 / 4;
const EXPORT_TEMPO_US: u32 = 500_000;
const EXPORT_VELOCITY: u8 = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoteEvent {
    pub onset_step: usize,
    pub duration_steps: usize,
    pub midi_pitch: u8,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub pitch_base: i32,
    pub pitch_count: usize,
    /// Fixed output length. `None` sizes the roll to the piece.
    pub t_steps: Option<usize>,
    /// When sizing to the piece, round the length up to a multiple of this.
    pub length_multiple: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            pitch_base: DEFAULT_PITCH_BASE,
            pitch_count: DEFAULT_PITCH_COUNT,
            t_steps: None,
            length_multiple: 16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub notes: usize,
    pub dropped_out_of_range: usize,
    pub merged: usize,
}

/// Nearest grid step, ties going to the later step.
fn quantize(tick: u64, ticks_per_step: f64) -> usize {
    (tick as f64 / ticks_per_step + 0.5).floor() as usize
}

/// Parses a Standard MIDI File into quantized note events plus the piece
/// length in steps (last note offset or end of track, whichever is later).
pub fn midi_to_notes(midi_bytes: &[u8]) -> Result<(Vec<NoteEvent>, usize)> {
    let smf = Smf::parse(midi_bytes).map_err(|e| Error::Midi(e.to_string()))?;
    let ppq = match smf.header.timing {
        Timing::Metrical(t) => t.as_int(),
        Timing::Timecode(..) => {
            return Err(Error::Midi("SMPTE timecode timing is not supported".into()))
        }
    };
    if ppq == 0 {
        return Err(Error::Midi("zero ticks per quarter".into()));
    }
    let ticks_per_step = ppq as f64 / 4.0;

    let mut spans: Vec<(u64, u64, u8)> = Vec::new();
    let mut end_tick = 0u64;
    for track in &smf.tracks {
        let mut now = 0u64;
        let mut open: HashMap<(u8, u8), VecDeque<u64>> = HashMap::new();
        for ev in track {
            now += ev.delta.as_int() as u64;
            if let TrackEventKind::Midi { channel, message } = ev.kind {
                let (key, on) = match message {
                    MidiMessage::NoteOn { key, vel } => (key.as_int(), vel.as_int() > 0),
                    MidiMessage::NoteOff { key, .. } => (key.as_int(), false),
                    _ => continue,
                };
                let slot = open.entry((channel.as_int(), key)).or_default();
                if on {
                    slot.push_back(now);
                } else if let Some(start) = slot.pop_front() {
                    spans.push((start, now, key));
                }
            }
        }
        end_tick = end_tick.max(now);
        // unterminated notes run to the end of their track
        for ((_, key), starts) in open {
            spans.extend(starts.into_iter().map(|s| (s, now, key)));
        }
    }

    let mut notes: Vec<NoteEvent> = spans
        .into_iter()
        .map(|(start, stop, key)| {
            let onset = quantize(start, ticks_per_step);
            let offset = quantize(stop, ticks_per_step);
            NoteEvent {
                onset_step: onset,
                duration_steps: offset.saturating_sub(onset).max(1),
                midi_pitch: key,
            }
        })
        .collect();
    notes.sort();
    let last_offset = notes
        .iter()
        .map(|n| n.onset_step + n.duration_steps)
        .max()
        .unwrap_or(0);
    let length = last_offset.max(quantize(end_tick, ticks_per_step));
    if notes.is_empty() {
        return Err(Error::EmptyPiece);
    }
    Ok((notes, length))
}

/// Renders note events into a binary roll of `t_steps` rows.
///
/// Same-pitch notes that touch or overlap would be indistinguishable, so the
/// earlier one ends where the later one starts and is then shortened by one
/// step if it is still longer than one step; otherwise the two merge.
pub fn notes_to_pianoroll(
    notes: &[NoteEvent],
    t_steps: usize,
    pitch_base: i32,
    pitch_count: usize,
) -> Result<(PianoRoll, IngestReport)> {
    if t_steps == 0 || pitch_count == 0 {
        return Err(Error::EmptyPiece);
    }
    let mut report = IngestReport::default();
    let mut by_pitch: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for n in notes {
        let row = n.midi_pitch as i64 - pitch_base as i64;
        if row < 0 || row >= pitch_count as i64 {
            report.dropped_out_of_range += 1;
            continue;
        }
        report.notes += 1;
        by_pitch
            .entry(row as usize)
            .or_default()
            .push((n.onset_step, n.onset_step + n.duration_steps.max(1)));
    }

    let mut data = Array2::zeros((t_steps, pitch_count));
    for (row, mut spans) in by_pitch {
        spans.sort();
        for i in 0..spans.len() {
            let (start, mut end) = spans[i];
            if let Some(&(next_start, _)) = spans.get(i + 1) {
                if next_start <= end {
                    end = end.min(next_start);
                    if end - start > 1 {
                        end -= 1;
                    } else {
                        report.merged += 1;
                    }
                }
            }
            for t in start..end.min(t_steps) {
                data[[t, row]] = 1.0;
            }
        }
    }
    Ok((PianoRoll::from_array_unchecked(data, pitch_base), report))
}

pub fn midi_to_pianoroll(midi_bytes: &[u8], cfg: &IngestConfig) -> Result<(PianoRoll, IngestReport)> {
    let (notes, length) = midi_to_notes(midi_bytes)?;
    let t_steps = match cfg.t_steps {
        Some(t) => t,
        None => {
            let m = cfg.length_multiple.max(1);
            length.div_ceil(m) * m
        }
    };
    let (roll, report) = notes_to_pianoroll(&notes, t_steps, cfg.pitch_base, cfg.pitch_count)?;
    if report.dropped_out_of_range > 0 {
        log::warn!(
            "dropped {} notes outside MIDI pitches {}..{}",
            report.dropped_out_of_range,
            cfg.pitch_base,
            cfg.pitch_base + cfg.pitch_count as i32
        );
    }
    Ok((roll, report))
}

/// Maximal runs of entries `>= threshold` per pitch, as notes.
pub fn pianoroll_to_notes(roll: &PianoRoll, threshold: f64) -> Vec<NoteEvent> {
    let mut notes = Vec::new();
    let data = roll.view();
    for p in 0..roll.pitch_count() {
        let pitch = roll.pitch_base() as i64 + p as i64;
        if !(0..=127).contains(&pitch) {
            continue;
        }
        let mut run_start: Option<usize> = None;
        for t in 0..=roll.t_steps() {
            let on = t < roll.t_steps() && data[[t, p]] >= threshold;
            match (on, run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(s)) => {
                    notes.push(NoteEvent {
                        onset_step: s,
                        duration_steps: t - s,
                        midi_pitch: pitch as u8,
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    notes.sort();
    notes
}

/// Writes a format-0 file at 120 BPM, 480 PPQ. End of track is placed at the
/// roll length so trailing rests survive a round trip.
pub fn pianoroll_to_midi(roll: &PianoRoll, threshold: f64) -> Result<Vec<u8>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must lie in (0, 1)"
        )));
    }
    let notes = pianoroll_to_notes(roll, threshold);
    // (tick, is_on, pitch); offs sort before ons at the same tick
    let mut events: Vec<(u64, bool, u8)> = Vec::with_capacity(notes.len() * 2);
    for n in &notes {
        let on = n.onset_step as u64 * TICKS_PER_STEP as u64;
        let off = (n.onset_step + n.duration_steps) as u64 * TICKS_PER_STEP as u64;
        events.push((on, true, n.midi_pitch));
        events.push((off, false, n.midi_pitch));
    }
    events.sort();

    let mut track: Vec<TrackEvent<'static>> = Vec::with_capacity(events.len() + 2);
    track.push(TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Meta(MetaMessage::Tempo(u24::new(EXPORT_TEMPO_US))),
    });
    let mut now = 0u64;
    for (tick, is_on, pitch) in events {
        let delta = delta_ticks(tick - now)?;
        now = tick;
        let message = if is_on {
            MidiMessage::NoteOn {
                key: u7::new(pitch),
                vel: u7::new(EXPORT_VELOCITY),
            }
        } else {
            MidiMessage::NoteOff {
                key: u7::new(pitch),
                vel: u7::new(0),
            }
        };
        track.push(TrackEvent {
            delta,
            kind: TrackEventKind::Midi {
                channel: u4::new(0),
                message,
            },
        });
    }
    let end = roll.t_steps() as u64 * TICKS_PER_STEP as u64;
    track.push(TrackEvent {
        delta: delta_ticks(end.saturating_sub(now))?,
        kind: TrackEventKind::Meta(MetaMessage::EndOfTrack),
    });

    let mut smf = Smf::new(Header::new(
        Format::SingleTrack,
        Timing::Metrical(u15::new(EXPORT_PPQ)),
    ));
    smf.tracks.push(track);
    let mut out = Vec::new();
    smf.write_std(&mut out)?;
    Ok(out)
}

fn delta_ticks(d: u64) -> Result<u28> {
    u32::try_from(d)
        .ok()
        .and_then(u28::try_from)
        .ok_or_else(|| Error::InvalidArgument(format!("delta of {d} ticks is too long for MIDI")))
}
