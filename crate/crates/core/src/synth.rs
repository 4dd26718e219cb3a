//! Deterministic synthetic cohorts with planted apnea events.
//!
//! Each subject gets its own ChaCha stream derived from the cohort seed and
//! the subject index, so subjects can be generated in parallel and the
//! output does not depend on scheduling.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::Severity;
use crate::error::{Error, Result};
use crate::recording::{
    write_database, Comorbidities, EventAnnotation, EventKind, Gender, PhenotypeProfile, SignalChannel,
    SignalUnit, Subject,
};

/// Reference cohort of 62 subjects: 10 normal, 11 mild, 4 moderate, 37 severe.
pub const DEFAULT_SEVERITY_MIX: [f64; 4] = [10.0 / 62.0, 11.0 / 62.0, 4.0 / 62.0, 37.0 / 62.0];
pub const COHORT_SPEC_FILE: &str = "cohort_spec.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub seed: u64,
    pub duration_min: f64,
    /// Normal, mild, moderate, severe.
    pub severity_mix: [f64; 4],
    pub effort_fs_hz: f64,
    /// Effort noise SD relative to the breathing amplitude.
    pub noise_level: f64,
    /// Fraction of events with anti-phase effort.
    pub paradox_fraction: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 24,
            seed: 42,
            duration_min: 30.0,
            severity_mix: DEFAULT_SEVERITY_MIX,
            effort_fs_hz: 8.0,
            noise_level: 0.05,
            paradox_fraction: 0.6,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive".into());
        }
        if !(self.duration_min.is_finite() && self.duration_min >= 1.0) {
            return bad(format!("duration_min {} must be at least 1", self.duration_min));
        }
        if self.severity_mix.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return bad("severity_mix entries must be non-negative".into());
        }
        let sum: f64 = self.severity_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("severity_mix sums to {sum}, expected 1"));
        }
        if !(self.effort_fs_hz.is_finite() && self.effort_fs_hz >= 4.0) {
            return bad(format!("effort_fs_hz {} must be at least 4", self.effort_fs_hz));
        }
        if !(self.noise_level.is_finite() && (0.0..1.0).contains(&self.noise_level)) {
            return bad(format!("noise_level {} outside [0, 1)", self.noise_level));
        }
        if !(0.0..=1.0).contains(&self.paradox_fraction) {
            return bad(format!("paradox_fraction {} outside [0, 1]", self.paradox_fraction));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> usize {
        (self.duration_min * 60.0).round() as usize
    }
}

struct GroupParams {
    rate: (f64, f64),
    /// Rates are kept inside this band so the expert severity is unambiguous.
    rate_band: (f64, f64),
    age: (f64, f64),
    bmi: (f64, f64),
    female: f64,
    /// Hypertension, diabetes, hypothyroidism.
    comorbidity: [f64; 3],
    /// CSA, MSA, OSA, HYP counts used as kind weights.
    kinds: [f64; 4],
}

fn group(sev: Severity) -> GroupParams {
    match sev {
        Severity::Normal => GroupParams {
            rate: (2.2, 1.4),
            rate_band: (0.0, 4.5),
            age: (34.8, 16.3),
            bmi: (22.4, 2.8),
            female: 6.0 / 10.0,
            comorbidity: [0.10, 0.05, 0.03],
            kinds: [2.1, 0.5, 1.0, 8.5],
        },
        Severity::Mild => GroupParams {
            rate: (9.9, 2.7),
            rate_band: (6.0, 14.0),
            age: (38.6, 15.5),
            bmi: (25.0, 4.5),
            female: 4.0 / 11.0,
            comorbidity: [0.20, 0.08, 0.05],
            kinds: [3.1, 1.8, 14.9, 34.4],
        },
        Severity::Moderate => GroupParams {
            rate: (24.9, 5.3),
            rate_band: (16.5, 28.5),
            age: (49.8, 13.1),
            bmi: (27.0, 1.6),
            female: 0.0,
            comorbidity: [0.35, 0.15, 0.05],
            kinds: [5.0, 3.3, 18.3, 96.0],
        },
        Severity::Severe => GroupParams {
            rate: (63.8, 23.4),
            rate_band: (32.0, 75.0),
            age: (52.3, 13.8),
            bmi: (27.8, 3.7),
            female: 3.0 / 37.0,
            comorbidity: [0.50, 0.20, 0.08],
            kinds: [9.1, 22.3, 179.6, 103.5],
        },
    }
}

/// Per-subject provenance written to `cohort_spec.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPlan {
    pub id: String,
    pub severity: Severity,
    pub target_rate: f64,
    pub planted_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub spec: CohortSpec,
    pub subjects: Vec<SubjectPlan>,
}

pub struct Cohort {
    pub subjects: Vec<Subject>,
    pub plans: Vec<SubjectPlan>,
}

const MARGIN_S: f64 = 30.0;
const MIN_EVENT_GAP_S: f64 = 20.0;
const EVENT_MIN_S: f64 = 20.0;
const EVENT_MAX_S: f64 = 45.0;
const RAMP_S: f64 = 2.0;
const DESAT_SLOPE_S: f64 = 8.0;

fn subject_id(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(3);
    format!("S{i:0width$}")
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let d = Normal::new(mean, sd).expect("finite sd");
    for _ in 0..64 {
        let v = d.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
    mean.clamp(lo, hi)
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// Rounds to `dp` decimals so the value prints back exactly as written.
fn round_dp(v: f64, dp: i32) -> f64 {
    let p = 10f64.powi(dp);
    (v * p).round() / p
}

struct Planted {
    start: f64,
    end: f64,
    paradox: bool,
    residual: f64,
    desat_depth: f64,
    desat_lag: f64,
}

/// Slot-based placement: one event per equal slot of the usable span, with a
/// fixed quiet gap at the end of each slot.
fn place_events(rng: &mut ChaCha8Rng, count: usize, duration_s: f64) -> Vec<(f64, f64)> {
    if count == 0 {
        return Vec::new();
    }
    let usable = duration_s - 2.0 * MARGIN_S;
    let slot = usable / count as f64;
    (0..count)
        .map(|j| {
            let a = MARGIN_S + j as f64 * slot;
            let max_len = (slot - MIN_EVENT_GAP_S).min(EVENT_MAX_S);
            let len = round_to(rng.random_range(EVENT_MIN_S..=max_len), 0.5).min(max_len.floor());
            let free = (slot - MIN_EVENT_GAP_S - len).max(0.0);
            let start = (round_to(a + rng.random::<f64>() * free, 0.5)).max(a.ceil());
            (start, len)
        })
        .collect()
}

fn max_events(duration_s: f64) -> usize {
    let usable = duration_s - 2.0 * MARGIN_S;
    if usable <= 0.0 {
        0
    } else {
        (usable / (EVENT_MIN_S + MIN_EVENT_GAP_S + 1.0)).floor() as usize
    }
}

fn generate_subject(spec: &CohortSpec, i: usize) -> (Subject, SubjectPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64);
    let id = subject_id(i, spec.n_subjects);
    let severity = Severity::ALL[pick_weighted(&mut rng, &spec.severity_mix)];
    let g = group(severity);

    let gender = if rng.random::<f64>() < g.female {
        Gender::Female
    } else {
        Gender::Male
    };
    let age = round_to(truncated_normal(&mut rng, g.age.0, g.age.1, 18.0, 90.0), 1.0);
    let bmi = round_dp(truncated_normal(&mut rng, g.bmi.0, g.bmi.1, 16.0, 45.0), 1);
    let flags: Vec<bool> = g.comorbidity.iter().map(|p| rng.random::<f64>() < *p).collect();
    let profile = PhenotypeProfile {
        gender,
        age,
        bmi,
        comorbidities: Comorbidities {
            hypertension: flags[0],
            diabetes: flags[1],
            hypothyroidism: flags[2],
        },
    };

    let duration_s = spec.duration_s() as f64;
    let hours = duration_s / 3600.0;
    let target_rate = truncated_normal(&mut rng, g.rate.0, g.rate.1, g.rate_band.0, g.rate_band.1);
    let lo = (g.rate_band.0 * hours).ceil() as usize;
    let hi = (g.rate_band.1 * hours).floor() as usize;
    let count = ((target_rate * hours).round() as usize)
        .clamp(lo.min(hi), hi)
        .min(max_events(duration_s));

    let planted: Vec<Planted> = place_events(&mut rng, count, duration_s)
        .into_iter()
        .map(|(start, len)| Planted {
            start,
            end: start + len,
            paradox: rng.random::<f64>() < spec.paradox_fraction,
            residual: rng.random_range(0.03..0.08),
            desat_depth: rng.random_range(4.0..7.0),
            desat_lag: rng.random_range(5.0..15.0),
        })
        .collect();

    let annotations: Vec<EventAnnotation> = planted
        .iter()
        .map(|p| {
            // CSA, MSA, OSA, HYP; paradox only fits the obstructive kinds
            let w = if p.paradox {
                [0.0, g.kinds[1], g.kinds[2], 0.0]
            } else {
                [g.kinds[0], 0.0, 0.0, g.kinds[3]]
            };
            let kind = [
                EventKind::Central,
                EventKind::Mixed,
                EventKind::Obstructive,
                EventKind::Hypopnea,
            ][pick_weighted(&mut rng, &w)];
            EventAnnotation {
                kind,
                start_s: p.start,
                duration_s: p.end - p.start,
            }
        })
        .collect();

    let (thoracic, abdominal) = effort_signals(&mut rng, spec, duration_s, &planted);
    let spo2 = spo2_signal(&mut rng, duration_s, &planted);

    let subject = Subject {
        id: id.clone(),
        profile,
        spo2: SignalChannel::new(1.0, spo2, SignalUnit::Percent),
        thoracic: SignalChannel::new(spec.effort_fs_hz, thoracic, SignalUnit::Acceleration),
        abdominal: SignalChannel::new(spec.effort_fs_hz, abdominal, SignalUnit::Acceleration),
        annotations: Some(annotations),
    };
    let plan = SubjectPlan {
        id,
        severity,
        target_rate,
        planted_events: count,
    };
    (subject, plan)
}

/// Envelope factor at time `t`: 1 outside events, `residual` inside, with
/// short cosine ramps that stay inside the event.
fn envelope(t: f64, p: &Planted) -> f64 {
    if t < p.start || t >= p.end {
        return 1.0;
    }
    let edge = (t - p.start).min(p.end - t);
    let r = if edge >= RAMP_S {
        0.0
    } else {
        0.5 * (1.0 + (PI * edge / RAMP_S).cos())
    };
    p.residual + (1.0 - p.residual) * r
}

fn effort_signals(
    rng: &mut ChaCha8Rng,
    spec: &CohortSpec,
    duration_s: f64,
    planted: &[Planted],
) -> (Vec<f64>, Vec<f64>) {
    let fs = spec.effort_fs_hz;
    let n = (duration_s * fs).round() as usize;
    let freq = rng.random_range(0.2..0.3);
    let amp_t = rng.random_range(0.8..1.2);
    let amp_a = amp_t * rng.random_range(0.7..1.0);
    let lag = rng.random_range(0.0..0.3);
    let dc_t = rng.random_range(-0.5..0.5);
    let dc_a = rng.random_range(-0.5..0.5);
    let noise = Normal::new(0.0, spec.noise_level.max(0.0)).expect("finite sd");

    let mut thor = Vec::with_capacity(n);
    let mut abd = Vec::with_capacity(n);
    let mut k = 0;
    for s in 0..n {
        let t = s as f64 / fs;
        while k < planted.len() && planted[k].end <= t {
            k += 1;
        }
        let (env, flip) = match planted.get(k) {
            Some(p) if t >= p.start => (envelope(t, p), p.paradox),
            _ => (1.0, false),
        };
        let phase = 2.0 * PI * freq * t;
        let anti = if flip { PI } else { 0.0 };
        let th = dc_t + amp_t * (env * phase.sin() + noise.sample(rng));
        let ab = dc_a + amp_a * (env * (phase + lag + anti).sin() + noise.sample(rng));
        thor.push(round_dp(th, 4));
        abd.push(round_dp(ab, 4));
    }
    (thor, abd)
}

fn spo2_signal(rng: &mut ChaCha8Rng, duration_s: f64, planted: &[Planted]) -> Vec<f64> {
    let n = duration_s as usize;
    let baseline = rng.random_range(95.0..98.0);
    let noise = Normal::new(0.0, 0.2).expect("finite sd");
    (0..n)
        .map(|s| {
            let t = s as f64;
            let dip = planted
                .iter()
                .map(|p| {
                    let a = p.start + p.desat_lag;
                    let b = p.end + p.desat_lag;
                    let f = if t < a || t >= b + DESAT_SLOPE_S {
                        0.0
                    } else if t < a + DESAT_SLOPE_S {
                        (t - a) / DESAT_SLOPE_S
                    } else if t < b {
                        1.0
                    } else {
                        1.0 - (t - b) / DESAT_SLOPE_S
                    };
                    f * p.desat_depth
                })
                .fold(0.0, f64::max);
            round_dp((baseline - dip + noise.sample(rng)).clamp(50.0, 100.0), 1)
        })
        .collect()
}

/// Generates the cohort in memory.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Cohort> {
    spec.validate()?;
    let (subjects, plans) = (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| generate_subject(spec, i))
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    Ok(Cohort { subjects, plans })
}

/// Generates the cohort and writes it, plus `cohort_spec.json`, under `root`.
pub fn generate(spec: &CohortSpec, root: impl AsRef<Path>) -> Result<Cohort> {
    let root = root.as_ref();
    let cohort = generate_cohort(spec)?;
    write_database(root, &cohort.subjects)?;
    let record = CohortRecord {
        spec: spec.clone(),
        subjects: cohort.plans.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&record).expect("spec serialises");
    json.push(b'\n');
    let path = root.join(COHORT_SPEC_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::TimeSpan;

    fn spec(n: usize) -> CohortSpec {
        CohortSpec {
            n_subjects: n,
            duration_min: 10.0,
            ..CohortSpec::default()
        }
    }

    #[test]
    fn mix_must_sum_to_one() {
        let s = CohortSpec {
            severity_mix: [0.5, 0.5, 0.5, 0.0],
            ..spec(1)
        };
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        assert!(matches!(spec(0).validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn forced_normal_subject_has_few_events() {
        let s = CohortSpec {
            duration_min: 30.0,
            severity_mix: [1.0, 0.0, 0.0, 0.0],
            ..spec(1)
        };
        let c = generate_cohort(&s).unwrap();
        assert!(c.subjects[0].annotations.as_ref().unwrap().len() <= 2);
        assert_eq!(c.plans[0].severity, Severity::Normal);
    }

    #[test]
    fn severe_subject_rate() {
        for seed in 0..5 {
            let s = CohortSpec {
                seed,
                duration_min: 30.0,
                severity_mix: [0.0, 0.0, 0.0, 1.0],
                ..spec(1)
            };
            let c = generate_cohort(&s).unwrap();
            let n = c.subjects[0].annotations.as_ref().unwrap().len();
            assert!((16..=37).contains(&n), "{n}");
            let expected = c.plans[0].target_rate * 0.5;
            assert!((n as f64 - expected).abs() <= 1.0, "{n} vs {expected}");
        }
    }

    #[test]
    fn subjects_validate_and_events_are_disjoint() {
        let c = generate_cohort(&spec(6)).unwrap();
        for s in &c.subjects {
            s.validate().unwrap();
            let ev = s.annotations.as_ref().unwrap();
            for w in ev.windows(2) {
                assert!(w[1].start_s() - w[0].start_s() >= 30.0);
            }
        }
    }

    #[test]
    fn deterministic_and_independent_of_cohort_size() {
        let a = generate_cohort(&spec(4)).unwrap();
        let b = generate_cohort(&spec(4)).unwrap();
        assert_eq!(a.subjects, b.subjects);
        let c = generate_cohort(&spec(2)).unwrap();
        assert_eq!(a.subjects[..2], c.subjects[..]);
    }

    #[test]
    fn amplitude_drops_inside_events() {
        let c = generate_cohort(&CohortSpec {
            noise_level: 0.0,
            severity_mix: [0.0, 0.0, 0.0, 1.0],
            ..spec(1)
        })
        .unwrap();
        let s = &c.subjects[0];
        let fs = s.thoracic.sample_rate_hz;
        let peak = |a: f64, b: f64| {
            let x = &s.thoracic.samples[(a * fs) as usize..(b * fs) as usize];
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
        };
        let base = peak(0.0, 25.0);
        for e in s.annotations.as_ref().unwrap() {
            let inner = peak(e.start_s + RAMP_S, e.end_s() - RAMP_S);
            assert!(inner <= 0.1 * base + 1e-3, "{inner} vs {base}");
        }
    }

    #[test]
    fn every_event_desaturates() {
        let c = generate_cohort(&CohortSpec {
            severity_mix: [0.0, 0.0, 0.0, 1.0],
            ..spec(2)
        })
        .unwrap();
        for s in &c.subjects {
            let x = &s.spo2.samples;
            for e in s.annotations.as_ref().unwrap() {
                let lo = (e.start_s as usize).saturating_sub(10);
                let hi = ((e.end_s() + 25.0) as usize).min(x.len());
                let w = &x[lo..hi];
                let max = w.iter().cloned().fold(f64::MIN, f64::max);
                let min = w.iter().cloned().fold(f64::MAX, f64::min);
                assert!(max - min >= 3.0);
            }
        }
    }

    #[test]
    fn ids_are_zero_padded() {
        assert_eq!(subject_id(0, 24), "S000");
        assert_eq!(subject_id(12, 2000), "S0012");
    }
}
