//! Group-level Information Rate summaries and Welch comparisons.

use std::io::Write;

use rayon::prelude::*;

use super::ir::information_rate;
use crate::error::{Error, Result};
use crate::math::mean;
use crate::pianoroll::PianoRoll;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub name: String,
    pub irs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single piece.
    pub std: f64,
}

impl GroupSummary {
    pub fn from_values(name: impl Into<String>, irs: Vec<f64>) -> Result<Self> {
        if irs.is_empty() {
            return Err(Error::InvalidArgument("empty group".into()));
        }
        let m = mean(&irs);
        let std = sample_std(&irs, m);
        Ok(Self {
            name: name.into(),
            irs,
            mean: m,
            std,
        })
    }

    pub fn n(&self) -> usize {
        self.irs.len()
    }
}

fn sample_std(xs: &[f64], m: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One-sided Welch statistic for "mean of `a` exceeds mean of `b`".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
}

pub fn welch_t(a: &GroupSummary, b: &GroupSummary) -> WelchResult {
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let (va, vb) = (a.std * a.std / na, b.std * b.std / nb);
    let diff = a.mean - b.mean;
    let se2 = va + vb;
    if se2 == 0.0 {
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return WelchResult { t, df: na + nb - 2.0 };
    }
    let mut denom = 0.0;
    if na > 1.0 {
        denom += va * va / (na - 1.0);
    }
    if nb > 1.0 {
        denom += vb * vb / (nb - 1.0);
    }
    WelchResult {
        t: diff / se2.sqrt(),
        df: se2 * se2 / denom,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: usize,
    pub b: usize,
    pub welch: WelchResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrComparison {
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<Comparison>,
}

/// Per-piece IR for every group, then Welch statistics for each `(a, b)`
/// index pair.
pub fn compare_ir(
    groups: &[(String, Vec<PianoRoll>)],
    pairs: &[(usize, usize)],
    threshold: f64,
) -> Result<IrComparison> {
    let summaries = groups
        .iter()
        .map(|(name, rolls)| {
            let irs = rolls
                .par_iter()
                .map(|r| information_rate(r, threshold).map(|rep| rep.average_ir))
                .collect::<Result<Vec<_>>>()?;
            GroupSummary::from_values(name.clone(), irs)
        })
        .collect::<Result<Vec<_>>>()?;
    let comparisons = pairs
        .iter()
        .map(|&(a, b)| {
            if a >= summaries.len() || b >= summaries.len() {
                return Err(Error::InvalidArgument(format!("no group pair ({a}, {b})")));
            }
            Ok(Comparison {
                a,
                b,
                welch: welch_t(&summaries[a], &summaries[b]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IrComparison {
        groups: summaries,
        comparisons,
    })
}

impl IrComparison {
    /// `group,n,mean_ir,std_ir` rows, then `compare,a,b,t,df` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "group,n,mean_ir,std_ir")?;
        for g in &self.groups {
            writeln!(out, "{},{},{},{}", g.name, g.n(), g.mean, g.std)?;
        }
        if !self.comparisons.is_empty() {
            writeln!(out, "compare,a,b,welch_t,df")?;
            for c in &self.comparisons {
                writeln!(
                    out,
                    "compare,{},{},{},{}",
                    self.groups[c.a].name, self.groups[c.b].name, c.welch.t, c.welch.df
                )?;
            }
        }
        Ok(())
    }
}
