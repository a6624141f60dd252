//! Evaluation: Information Rate, key finding, group comparisons and SVG
//! figures.

pub mod compare;
pub mod ir;
pub mod keys;
pub mod svg;

pub use compare::{compare_ir, welch_t, Comparison, GroupSummary, IrComparison, WelchResult};
pub use ir::{information_rate, information_rate_symbols, slice_symbols, IrReport};
pub use keys::{
    key_correlations, keyscape, ks_key_estimate, ks_key_from_histogram, label_name,
    pitch_class_histogram, Key, KeyLabel, Keyscape, KK_MAJOR, KK_MINOR,
};
pub use svg::{key_color, render_bars, render_heatmap, render_keyscape};

/// Binarization threshold used when evaluating sampled rolls.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
