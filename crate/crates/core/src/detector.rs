//! Turns per-epoch classifier output into timed apnea events.
//!
//! The time axis is cut into 0.5 s frames (one epoch stride). Each frame
//! collects votes from every epoch window covering it: one vote per epoch
//! predicted APN and `paradox_vote_bonus` per epoch with paradoxical
//! effort. A frame is apneic when its normalised score reaches
//! `vote_threshold`. Apneic runs are then scanned by a two-state machine,
//! bridged across short gaps, and clipped to the 10–120 s event range.
//!
//! Epochs left outside every event but showing an SpO2 desaturation are
//! promoted afterwards; each epoch is represented on the frame axis by the
//! frame at its centre.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EpochFeatures, EpochGrid};
use crate::recording::{check_sorted_disjoint, EpochLabel, TimeSpan, MAX_EVENT_S, MIN_EVENT_S};
use crate::svm::Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Svm,
    DesatCorrection,
}

impl EventSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventSource::Svm => "svm",
            EventSource::DesatCorrection => "desat_correction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    pub start_s: f64,
    pub duration_s: f64,
    pub source: EventSource,
}

impl TimeSpan for DetectedEvent {
    fn start_s(&self) -> f64 {
        self.start_s
    }
    fn duration_s(&self) -> f64 {
        self.duration_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub frame_s: f64,
    pub merge_gap_s: f64,
    pub paradox_vote_bonus: f64,
    pub vote_threshold: f64,
    /// Minimum SpO2 median-minus-minimum depth, in percent.
    pub desat_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            frame_s: 0.5,
            merge_gap_s: 5.0,
            paradox_vote_bonus: 1.0,
            vote_threshold: 0.5,
            desat_threshold: 3.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frame_s", self.frame_s),
            ("merge_gap_s", self.merge_gap_s),
            ("paradox_vote_bonus", self.paradox_vote_bonus),
            ("vote_threshold", self.vote_threshold),
            ("desat_threshold", self.desat_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.vote_threshold > 1.0 {
            return Err(Error::InvalidConfig("vote_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Frames covered by a grid: one per stride plus the tail of the last window.
pub fn frame_count(grid: &EpochGrid) -> usize {
    if grid.is_empty() {
        0
    } else {
        grid.len() + grid.strides_per_window() - 1
    }
}

/// Frame at the centre of epoch `i`.
pub fn epoch_center_frame(grid: &EpochGrid, i: usize) -> usize {
    i + grid.strides_per_window() / 2
}

/// Per-frame apnea score in [0, 1].
pub fn frame_votes(
    predictions: &[EpochLabel],
    paradox_flags: &[bool],
    grid: &EpochGrid,
    cfg: &DetectorConfig,
) -> Result<Vec<f64>> {
    if predictions.len() != grid.len() || paradox_flags.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} predictions and {} paradox flags for {} epochs",
            predictions.len(),
            paradox_flags.len(),
            grid.len()
        )));
    }
    let span = grid.strides_per_window();
    let n_frames = frame_count(grid);
    // prefix sums over epochs
    let mut apn = vec![0u32; grid.len() + 1];
    let mut par = vec![0u32; grid.len() + 1];
    for e in 0..grid.len() {
        apn[e + 1] = apn[e] + u32::from(predictions[e] == EpochLabel::Apnea);
        par[e + 1] = par[e] + u32::from(paradox_flags[e]);
    }
    let bonus = cfg.paradox_vote_bonus;
    Ok((0..n_frames)
        .map(|f| {
            let lo = f.saturating_sub(span - 1);
            let hi = f.min(grid.len() - 1) + 1;
            let covering = (hi - lo) as f64;
            let a = f64::from(apn[hi] - apn[lo]);
            let p = f64::from(par[hi] - par[lo]);
            (a + bonus * p) / (covering * (1.0 + bonus))
        })
        .collect())
}

pub fn apneic_frames(scores: &[f64], cfg: &DetectorConfig) -> Vec<bool> {
    scores.iter().map(|s| *s >= cfg.vote_threshold).collect()
}

/// Apneic runs as `[start, end)` seconds, with gaps shorter than
/// `merge_gap_s` bridged. No duration rule applied yet.
pub fn merged_runs(frame_flags: &[bool], cfg: &DetectorConfig) -> Vec<(f64, f64)> {
    #[derive(Clone, Copy)]
    enum State {
        Idle,
        InRun(usize),
    }
    let mut raw = Vec::new();
    let mut state = State::Idle;
    for (f, &on) in frame_flags.iter().enumerate() {
        state = match (state, on) {
            (State::Idle, true) => State::InRun(f),
            (State::InRun(s), false) => {
                raw.push((s, f));
                State::Idle
            }
            (s, _) => s,
        };
    }
    if let State::InRun(s) = state {
        raw.push((s, frame_flags.len()));
    }

    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in raw {
        let (start, end) = (s as f64 * cfg.frame_s, e as f64 * cfg.frame_s);
        match merged.last_mut() {
            Some(last) if start - last.1 < cfg.merge_gap_s => last.1 = end,
            _ => merged.push((start, end)),
        }
    }
    merged
}

/// Runs shorter than 10 s are dropped; longer than 120 s are cut into
/// consecutive 120 s events, dropping a final piece under 10 s.
pub fn extract_events(frame_flags: &[bool], cfg: &DetectorConfig) -> Vec<DetectedEvent> {
    let mut out = Vec::new();
    for (start, end) in merged_runs(frame_flags, cfg) {
        let mut s = start;
        while end - s >= MIN_EVENT_S {
            let d = (end - s).min(MAX_EVENT_S);
            out.push(DetectedEvent {
                start_s: s,
                duration_s: d,
                source: EventSource::Svm,
            });
            s += d;
        }
    }
    out
}

fn frame_of(t: f64, cfg: &DetectorConfig) -> usize {
    (t / cfg.frame_s).round() as usize
}

/// Promotes desaturating epochs that sit outside every event and re-runs
/// extraction on the union of apneic frames, existing event spans and the
/// promoted epoch centres.
pub fn desaturation_correction(
    events: &[DetectedEvent],
    frame_flags: &[bool],
    epoch_features: &[EpochFeatures],
    grid: &EpochGrid,
    cfg: &DetectorConfig,
) -> Result<Vec<DetectedEvent>> {
    if epoch_features.len() != grid.len() || frame_flags.len() != frame_count(grid) {
        return Err(Error::GridMismatch(format!(
            "{} feature rows / {} frames for {} epochs",
            epoch_features.len(),
            frame_flags.len(),
            grid.len()
        )));
    }
    let mut covered = vec![false; frame_flags.len()];
    for ev in events {
        let lo = frame_of(ev.start_s, cfg).min(covered.len());
        let hi = frame_of(ev.end_s(), cfg).min(covered.len());
        covered[lo..hi].fill(true);
    }

    let mut union: Vec<bool> = frame_flags
        .iter()
        .zip(&covered)
        .map(|(a, b)| *a || *b)
        .collect();
    for (e, feat) in epoch_features.iter().enumerate() {
        let c = epoch_center_frame(grid, e);
        if !covered[c] && feat.spo2_desat_depth >= cfg.desat_threshold {
            union[c] = true;
        }
    }

    let mut out = extract_events(&union, cfg);
    for ev in &mut out {
        let from_classifier = events.iter().any(|o| {
            o.source == EventSource::Svm && o.start_s < ev.end_s() && ev.start_s < o.end_s()
        });
        if !from_classifier {
            ev.source = EventSource::DesatCorrection;
        }
    }
    debug_assert!(check_sorted_disjoint(&out).is_ok());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Normal,
    Mild,
    Moderate,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 4] = [
        Severity::Normal,
        Severity::Mild,
        Severity::Moderate,
        Severity::Severe,
    ];

    /// Left-closed bands: [0, 5), [5, 15), [15, 30), [30, inf).
    pub fn from_rei(rei: f64) -> Self {
        if rei >= 30.0 {
            Severity::Severe
        } else if rei >= 15.0 {
            Severity::Moderate
        } else if rei >= 5.0 {
            Severity::Mild
        } else {
            Severity::Normal
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Normal => "Normal",
            Severity::Mild => "Mild",
            Severity::Moderate => "Moderate",
            Severity::Severe => "Severe",
        }
    }
}

/// Events per hour of recording.
pub fn rei(event_count: usize, recording_hours: f64) -> f64 {
    if recording_hours > 0.0 {
        event_count as f64 / recording_hours
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub events: Vec<DetectedEvent>,
    pub rei: f64,
    pub severity: Severity,
}

/// Runs the detector on classified epochs of one recording.
pub fn detect_events(
    predictions: &[Prediction],
    features: &[EpochFeatures],
    grid: &EpochGrid,
    cfg: &DetectorConfig,
) -> Result<Vec<DetectedEvent>> {
    let labels: Vec<EpochLabel> = predictions.iter().map(|p| p.label).collect();
    let paradox: Vec<bool> = features.iter().map(|f| f.paradox_flag).collect();
    let scores = frame_votes(&labels, &paradox, grid, cfg)?;
    let flags = apneic_frames(&scores, cfg);
    let events = extract_events(&flags, cfg);
    desaturation_correction(&events, &flags, features, grid, cfg)
}

pub fn screening_report(events: Vec<DetectedEvent>, recording_hours: f64) -> ScreeningReport {
    let rei = rei(events.len(), recording_hours);
    ScreeningReport {
        events,
        rei,
        severity: Severity::from_rei(rei),
    }
}

/// `predicted_events.csv` content.
pub fn predicted_events_csv_bytes(events: &[DetectedEvent]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(["start_s", "duration_s", "source"]).expect("csv");
    for e in events {
        w.write_record([
            e.start_s.to_string(),
            e.duration_s.to_string(),
            e.source.as_str().to_string(),
        ])
        .expect("csv");
    }
    w.into_inner().expect("csv flush")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags_from_runs(n: usize, runs: &[(usize, usize)]) -> Vec<bool> {
        let mut v = vec![false; n];
        for &(a, b) in runs {
            v[a..b].fill(true);
        }
        v
    }

    #[test]
    fn votes_all_normal_and_all_apnea() {
        let grid = EpochGrid::new(60.0).unwrap();
        let cfg = DetectorConfig::default();
        let n = grid.len();
        let s = frame_votes(&vec![EpochLabel::Normal; n], &vec![false; n], &grid, &cfg).unwrap();
        assert_eq!(s.len(), n + 19);
        assert!(s.iter().all(|v| *v == 0.0));

        let s = frame_votes(&vec![EpochLabel::Apnea; n], &vec![true; n], &grid, &cfg).unwrap();
        assert!(s.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn interior_frame_half_apnea_scores_quarter() {
        let grid = EpochGrid::new(60.0).unwrap();
        let cfg = DetectorConfig::default();
        let n = grid.len();
        // frame 40 is covered by epochs 21..=40; make 10 of them APN
        let mut labels = vec![EpochLabel::Normal; n];
        for l in &mut labels[21..31] {
            *l = EpochLabel::Apnea;
        }
        let s = frame_votes(&labels, &vec![false; n], &grid, &cfg).unwrap();
        assert_eq!(s[40], 0.25);
        assert!(!apneic_frames(&s, &cfg)[40]);
    }

    #[test]
    fn grid_mismatch() {
        let grid = EpochGrid::new(60.0).unwrap();
        let r = frame_votes(&[EpochLabel::Normal], &[false], &grid, &DetectorConfig::default());
        assert!(matches!(r, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn run_extraction_examples() {
        let cfg = DetectorConfig::default();
        assert!(extract_events(&[false; 100], &cfg).is_empty());

        let ev = extract_events(&flags_from_runs(200, &[(20, 80)]), &cfg);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].start_s, ev[0].duration_s), (10.0, 30.0));

        let ev = extract_events(&flags_from_runs(600, &[(0, 500)]), &cfg);
        let d: Vec<f64> = ev.iter().map(|e| e.duration_s).collect();
        assert_eq!(d, vec![120.0, 120.0, 10.0]);
    }

    #[test]
    fn short_gaps_are_bridged() {
        let cfg = DetectorConfig::default();
        // 8 s + 4 s gap + 8 s -> one 20 s event
        let ev = extract_events(&flags_from_runs(100, &[(0, 16), (24, 40)]), &cfg);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].duration_s, 20.0);
        // a 5 s gap is not bridged and each piece is too short
        assert!(extract_events(&flags_from_runs(100, &[(0, 16), (26, 42)]), &cfg).is_empty());
    }

    #[test]
    fn severity_bands() {
        assert_eq!(Severity::from_rei(0.0), Severity::Normal);
        assert_eq!(Severity::from_rei(4.999), Severity::Normal);
        assert_eq!(Severity::from_rei(5.0), Severity::Mild);
        assert_eq!(Severity::from_rei(15.0), Severity::Moderate);
        assert_eq!(Severity::from_rei(24.9), Severity::Moderate);
        assert_eq!(Severity::from_rei(30.0), Severity::Severe);
        assert_eq!(rei(62, 6.2), 10.0);
        assert_eq!(Severity::from_rei(rei(62, 6.2)), Severity::Mild);
        assert_eq!(rei(0, 6.0), 0.0);
    }
}
