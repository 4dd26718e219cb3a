//! Event-by-event scoring, cohort summaries, and severity/screening metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use crate::detector::Severity;
use crate::error::{Error, Result};
use crate::features::{median, sorted_copy};
use crate::recording::{check_sorted_disjoint, TimeSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ppv: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EventScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let ppv = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if ppv + recall > 0.0 {
            2.0 * ppv * recall / (ppv + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            ppv,
            recall,
            f1,
        }
    }
}

/// Scores detections against expert annotations: a detection is a true
/// positive if it overlaps any annotation by more than `min_overlap_s`; an
/// annotation no detection overlaps is a false negative.
pub fn match_events<D: TimeSpan, A: TimeSpan>(detected: &[D], annotated: &[A]) -> Result<EventScore> {
    match_events_with_overlap(detected, annotated, 0.0)
}

pub fn match_events_with_overlap<D: TimeSpan, A: TimeSpan>(
    detected: &[D],
    annotated: &[A],
    min_overlap_s: f64,
) -> Result<EventScore> {
    check_sorted_disjoint(detected).map_err(|e| Error::UnsortedInput(format!("detected: {e}")))?;
    check_sorted_disjoint(annotated)
        .map_err(|e| Error::UnsortedInput(format!("annotated: {e}")))?;

    let mut hit = vec![false; annotated.len()];
    let mut tp = 0;
    let mut first = 0;
    for d in detected {
        while first < annotated.len() && annotated[first].end_s() <= d.start_s() {
            first += 1;
        }
        let mut matched = false;
        for (k, a) in annotated
            .iter()
            .enumerate()
            .skip(first)
            .take_while(|(_, a)| a.start_s() < d.end_s())
        {
            let overlap = a.end_s().min(d.end_s()) - a.start_s().max(d.start_s());
            if overlap > min_overlap_s {
                matched = true;
                hit[k] = true;
            }
        }
        tp += usize::from(matched);
    }
    let fp = detected.len() - tp;
    let fn_ = hit.iter().filter(|h| !**h).count();
    Ok(EventScore::from_counts(tp, fp, fn_))
}

/// Median and unscaled median absolute deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianMad {
    pub median: f64,
    pub mad: f64,
}

impl MedianMad {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let m = median(values);
        let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
        Some(Self {
            median: m,
            mad: median(&sorted_copy(&dev)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub subjects: usize,
    pub ppv: MedianMad,
    pub recall: MedianMad,
    pub f1: MedianMad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stratum {
    Normal,
    Mild,
    Moderate,
    Severe,
    All,
    #[serde(rename = "AHI<15")]
    Below15,
    #[serde(rename = "AHI>=15")]
    AtLeast15,
}

impl Stratum {
    fn of(severity: Severity) -> [Stratum; 3] {
        let group = match severity {
            Severity::Normal => Stratum::Normal,
            Severity::Mild => Stratum::Mild,
            Severity::Moderate => Stratum::Moderate,
            Severity::Severe => Stratum::Severe,
        };
        let binary = if severity >= Severity::Moderate {
            Stratum::AtLeast15
        } else {
            Stratum::Below15
        };
        [group, Stratum::All, binary]
    }

    pub fn label(self) -> &'static str {
        match self {
            Stratum::Normal => "Normal",
            Stratum::Mild => "Mild",
            Stratum::Moderate => "Moderate",
            Stratum::Severe => "Severe",
            Stratum::All => "All",
            Stratum::Below15 => "AHI<15",
            Stratum::AtLeast15 => "AHI>=15",
        }
    }
}

/// Median ± MAD of PPV, recall and F1 per expert-severity stratum. Strata
/// without subjects are omitted.
pub fn summarize_cohort(scores: &[(Severity, EventScore)]) -> Result<BTreeMap<Stratum, StratumSummary>> {
    if scores.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut groups: BTreeMap<Stratum, Vec<&EventScore>> = BTreeMap::new();
    for (sev, s) in scores {
        for st in Stratum::of(*sev) {
            groups.entry(st).or_default().push(s);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(st, v)| {
            let stat = |f: fn(&EventScore) -> f64| {
                MedianMad::of(&v.iter().map(|s| f(s)).collect::<Vec<_>>()).expect("non-empty")
            };
            (
                st,
                StratumSummary {
                    subjects: v.len(),
                    ppv: stat(|s| s.ppv),
                    recall: stat(|s| s.recall),
                    f1: stat(|s| s.f1),
                },
            )
        })
        .collect())
}

/// Rows are predicted severity, columns expert severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix4 {
    pub m: [[u64; 4]; 4],
}

impl ConfusionMatrix4 {
    pub fn new(m: [[u64; 4]; 4]) -> Self {
        Self { m }
    }

    pub fn record(&mut self, predicted: Severity, expert: Severity) {
        self.m[predicted.index()][expert.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.m.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.m[i][i]).sum()
    }

    pub fn row_sum(&self, r: usize) -> u64 {
        self.m[r].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.m.iter().map(|row| row[c]).sum()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityMetrics {
    pub accuracy: f64,
    /// Per expert class; `None` when the class is absent.
    pub sensitivity: [Option<f64>; 4],
    /// Per predicted class; `None` when nothing was predicted into it.
    pub ppv: [Option<f64>; 4],
}

pub fn severity_metrics(matrix: &ConfusionMatrix4) -> Result<SeverityMetrics> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut sensitivity = [None; 4];
    let mut ppv = [None; 4];
    for k in 0..4 {
        sensitivity[k] = ratio(matrix.m[k][k], matrix.col_sum(k));
        ppv[k] = ratio(matrix.m[k][k], matrix.row_sum(k));
    }
    Ok(SeverityMetrics {
        accuracy: matrix.trace() as f64 / total as f64,
        sensitivity,
        ppv,
    })
}

/// Likelihood ratio that may be infinite or undefined.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "Option<f64>")]
pub enum Ratio {
    Finite(f64),
    Infinite,
    Undefined,
}

impl From<Option<f64>> for Ratio {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Ratio::Undefined, Ratio::Finite)
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Finite(v) => s.serialize_f64(*v),
            Ratio::Infinite => s.serialize_str("inf"),
            Ratio::Undefined => s.serialize_none(),
        }
    }
}

impl Ratio {
    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(*v),
            Ratio::Infinite => Some(f64::INFINITY),
            Ratio::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryScreeningStats {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: f64,
    pub lr_plus: Ratio,
    pub lr_minus: Ratio,
    /// An expert-side group is empty, so some statistics are undefined.
    pub degenerate: bool,
}

/// Collapses the 4×4 matrix at AHI ≥ 15 (Moderate + Severe positive).
pub fn binary_screening(matrix: &ConfusionMatrix4) -> Result<BinaryScreeningStats> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let positive = |k: usize| k >= Severity::Moderate.index();
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for p in 0..4 {
        for e in 0..4 {
            let v = matrix.m[p][e];
            match (positive(p), positive(e)) {
                (true, true) => tp += v,
                (true, false) => fp += v,
                (false, false) => tn += v,
                (false, true) => fn_ += v,
            }
        }
    }
    let sensitivity = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);
    let lr_plus = match (sensitivity, specificity) {
        (Some(se), Some(sp)) if sp < 1.0 => Ratio::Finite(se / (1.0 - sp)),
        (Some(_), Some(_)) => Ratio::Infinite,
        _ => Ratio::Undefined,
    };
    let lr_minus = match (sensitivity, specificity) {
        (Some(se), Some(sp)) if sp > 0.0 => Ratio::Finite((1.0 - se) / sp),
        _ => Ratio::Undefined,
    };
    Ok(BinaryScreeningStats {
        tp,
        fp,
        tn,
        fn_,
        sensitivity,
        specificity,
        accuracy: (tp + tn) as f64 / total as f64,
        lr_plus,
        lr_minus,
        degenerate: sensitivity.is_none() || specificity.is_none(),
    })
}
