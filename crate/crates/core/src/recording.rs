//! On-disk subject database: phenotype manifests, SpO2 and effort signals,
//! and expert event annotations.
//!
//! Layout of a database root:
//!
//! ```text
//! <root>/<subject>/manifest.json
//! <root>/<subject>/spo2.csv      spo2_percent
//! <root>/<subject>/effort.csv    thoracic,abdominal
//! <root>/<subject>/events.csv    kind,start_s,duration_s   (optional)
//! ```
//!
//! Anything at the root that is not a directory is ignored, so provenance
//! files such as `cohort_spec.json` can live next to the subjects.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::EpochGrid;

/// Longest sensor dropout that is repaired by interpolation on load.
pub const MAX_GAP_S: f64 = 5.0;
/// Lowest accepted effort sample rate.
pub const MIN_EFFORT_FS_HZ: f64 = 4.0;
pub const MIN_EVENT_S: f64 = 10.0;
pub const MAX_EVENT_S: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comorbidities {
    pub hypertension: bool,
    pub diabetes: bool,
    pub hypothyroidism: bool,
}

impl Comorbidities {
    pub fn flags(&self) -> [bool; 3] {
        [self.hypertension, self.diabetes, self.hypothyroidism]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhenotypeProfile {
    pub gender: Gender,
    /// Years.
    pub age: f64,
    /// kg/m².
    pub bmi: f64,
    pub comorbidities: Comorbidities,
}

impl PhenotypeProfile {
    pub fn validate(&self, subject: &str) -> Result<()> {
        if !(self.age > 0.0 && self.age <= 130.0) {
            return Err(Error::invariant(
                subject,
                format!("age {} outside (0, 130]", self.age),
            ));
        }
        if !(self.bmi > 5.0 && self.bmi <= 100.0) {
            return Err(Error::invariant(
                subject,
                format!("bmi {} outside (5, 100]", self.bmi),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalUnit {
    Percent,
    /// Arbitrary acceleration units from the effort sensors.
    Acceleration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalChannel {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub unit: SignalUnit,
}

impl SignalChannel {
    pub fn new(sample_rate_hz: f64, samples: Vec<f64>, unit: SignalUnit) -> Self {
        Self {
            sample_rate_hz,
            samples,
            unit,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "OSA")]
    Obstructive,
    #[serde(rename = "CSA")]
    Central,
    #[serde(rename = "MSA")]
    Mixed,
    #[serde(rename = "HYP")]
    Hypopnea,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Obstructive => "OSA",
            EventKind::Central => "CSA",
            EventKind::Mixed => "MSA",
            EventKind::Hypopnea => "HYP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "OSA" => Some(EventKind::Obstructive),
            "CSA" => Some(EventKind::Central),
            "MSA" => Some(EventKind::Mixed),
            "HYP" => Some(EventKind::Hypopnea),
            _ => None,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Anything that occupies a half-open time span `[start, end)` in seconds.
pub trait TimeSpan {
    fn start_s(&self) -> f64;
    fn duration_s(&self) -> f64;
    fn end_s(&self) -> f64 {
        self.start_s() + self.duration_s()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventAnnotation {
    pub kind: EventKind,
    pub start_s: f64,
    pub duration_s: f64,
}

impl TimeSpan for EventAnnotation {
    fn start_s(&self) -> f64 {
        self.start_s
    }
    fn duration_s(&self) -> f64 {
        self.duration_s
    }
}

/// Checks that spans are sorted by start and pairwise disjoint (touching is allowed).
pub fn check_sorted_disjoint<T: TimeSpan>(spans: &[T]) -> std::result::Result<(), String> {
    for (i, w) in spans.windows(2).enumerate() {
        if w[1].start_s() < w[0].start_s() {
            return Err(format!("span {} starts before span {}", i + 1, i));
        }
        if w[1].start_s() < w[0].end_s() {
            return Err(format!("span {} overlaps span {}", i + 1, i));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub profile: PhenotypeProfile,
    pub spo2: SignalChannel,
    pub thoracic: SignalChannel,
    pub abdominal: SignalChannel,
    pub annotations: Option<Vec<EventAnnotation>>,
}

impl Subject {
    /// Recording length on the 1 Hz SpO2 reference clock.
    pub fn duration_s(&self) -> f64 {
        self.spo2.len() as f64
    }

    pub fn recording_hours(&self) -> f64 {
        self.spo2.len() as f64 / 3600.0
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.id.as_str();
        if id.is_empty() {
            return Err(Error::invariant("<empty>", "subject id is empty"));
        }
        self.profile.validate(id)?;

        if self.spo2.sample_rate_hz != 1.0 {
            return Err(Error::invariant(
                id,
                format!("SpO2 sample rate {} Hz, expected 1 Hz", self.spo2.sample_rate_hz),
            ));
        }
        for (name, ch) in [
            ("spo2", &self.spo2),
            ("thoracic", &self.thoracic),
            ("abdominal", &self.abdominal),
        ] {
            if ch.is_empty() {
                return Err(Error::invariant(id, format!("{name} channel is empty")));
            }
            if let Some(i) = ch.samples.iter().position(|v| !v.is_finite()) {
                return Err(Error::invariant(
                    id,
                    format!("{name} sample {i} is not finite"),
                ));
            }
        }
        if let Some(i) = self
            .spo2
            .samples
            .iter()
            .position(|v| !(0.0..=100.0).contains(v))
        {
            return Err(Error::invariant(
                id,
                format!("SpO2 sample {i} = {} outside [0, 100]", self.spo2.samples[i]),
            ));
        }
        if self.thoracic.sample_rate_hz != self.abdominal.sample_rate_hz
            || self.thoracic.len() != self.abdominal.len()
        {
            return Err(Error::invariant(
                id,
                "thoracic and abdominal channels differ in rate or length",
            ));
        }
        if !(self.thoracic.sample_rate_hz >= MIN_EFFORT_FS_HZ) {
            return Err(Error::invariant(
                id,
                format!(
                    "effort sample rate {} Hz below {MIN_EFFORT_FS_HZ} Hz",
                    self.thoracic.sample_rate_hz
                ),
            ));
        }
        let effort_s = self.thoracic.duration_s();
        if (effort_s - self.duration_s()).abs() > 1.0 {
            return Err(Error::invariant(
                id,
                format!(
                    "effort spans {effort_s} s but SpO2 spans {} s",
                    self.duration_s()
                ),
            ));
        }

        if let Some(events) = &self.annotations {
            for (i, ev) in events.iter().enumerate() {
                if !(MIN_EVENT_S..=MAX_EVENT_S).contains(&ev.duration_s) {
                    return Err(Error::invariant(
                        id,
                        format!(
                            "annotation {i} duration {} s outside [10, 120]",
                            ev.duration_s
                        ),
                    ));
                }
                if ev.start_s < 0.0 || ev.end_s() > self.duration_s() {
                    return Err(Error::invariant(
                        id,
                        format!("annotation {i} lies outside the recording"),
                    ));
                }
            }
            check_sorted_disjoint(events)
                .map_err(|e| Error::invariant(id, format!("annotations: {e}")))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// manifest

fn ser_number<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        s.serialize_i64(*v as i64)
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelRef {
    file: String,
    #[serde(serialize_with = "ser_number")]
    fs_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Channels {
    spo2: ChannelRef,
    effort: ChannelRef,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    id: String,
    gender: Gender,
    #[serde(serialize_with = "ser_number")]
    age: f64,
    #[serde(serialize_with = "ser_number")]
    bmi: f64,
    comorbidities: Comorbidities,
    channels: Channels,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPO2_FILE: &str = "spo2.csv";
pub const EFFORT_FILE: &str = "effort.csv";
pub const EVENTS_FILE: &str = "events.csv";

// ---------------------------------------------------------------------------
// loading

/// Loads every subject directory under `root`, sorted by id.
pub fn load_database(root: impl AsRef<Path>) -> Result<Vec<Subject>> {
    let root = root.as_ref();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();

    let mut subjects = dirs
        .par_iter()
        .map(load_subject)
        .collect::<Result<Vec<_>>>()?;
    subjects.sort_by(|a, b| a.id.cmp(&b.id));

    let mut seen = BTreeSet::new();
    for s in &subjects {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::invariant(&s.id, "duplicate subject id"));
        }
    }
    Ok(subjects)
}

/// Loads and validates one subject directory.
pub fn load_subject(dir: impl AsRef<Path>) -> Result<Subject> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::MissingFile(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
    let id = manifest.id.clone();

    let profile = PhenotypeProfile {
        gender: manifest.gender,
        age: manifest.age,
        bmi: manifest.bmi,
        comorbidities: manifest.comorbidities,
    };

    let spo2_fs = manifest.channels.spo2.fs_hz;
    let effort_fs = manifest.channels.effort.fs_hz;
    for (name, fs_hz) in [("spo2", spo2_fs), ("effort", effort_fs)] {
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::MalformedManifest {
                path: manifest_path.clone(),
                reason: format!("{name} fs_hz must be positive"),
            });
        }
    }

    let spo2_path = dir.join(&manifest.channels.spo2.file);
    let mut cols = read_numeric_csv(&spo2_path, &["spo2_percent"])?;
    let mut spo2 = cols.pop().unwrap_or_default();
    fill_gaps(&mut spo2, spo2_fs, MAX_GAP_S)
        .map_err(|g| Error::invariant(&id, format!("spo2: {g}")))?;

    let effort_path = dir.join(&manifest.channels.effort.file);
    let mut cols = read_numeric_csv(&effort_path, &["thoracic", "abdominal"])?;
    let mut abdominal = cols.pop().unwrap_or_default();
    let mut thoracic = cols.pop().unwrap_or_default();
    fill_gaps(&mut thoracic, effort_fs, MAX_GAP_S)
        .map_err(|g| Error::invariant(&id, format!("thoracic: {g}")))?;
    fill_gaps(&mut abdominal, effort_fs, MAX_GAP_S)
        .map_err(|g| Error::invariant(&id, format!("abdominal: {g}")))?;

    let events_path = dir.join(EVENTS_FILE);
    let annotations = if events_path.is_file() {
        Some(read_events_csv(&events_path)?)
    } else {
        None
    };

    let subject = Subject {
        id,
        profile,
        spo2: SignalChannel::new(spo2_fs, spo2, SignalUnit::Percent),
        thoracic: SignalChannel::new(effort_fs, thoracic, SignalUnit::Acceleration),
        abdominal: SignalChannel::new(effort_fs, abdominal, SignalUnit::Acceleration),
        annotations,
    };
    subject.validate()?;
    Ok(subject)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedCsv {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let headers = rdr
        .headers()
        .map_err(|e| malformed(path, e.to_string()))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(malformed(
            path,
            format!("header {got:?}, expected {expected:?}"),
        ));
    }
    Ok(())
}

/// Reads numeric columns; empty or non-finite cells become NaN gaps.
fn read_numeric_csv(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv_reader(path)?;
    check_header(path, &mut rdr, expected)?;
    let mut cols = vec![Vec::new(); expected.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(path, e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(malformed(path, format!("row {} has {} fields", row + 1, rec.len())));
        }
        for (col, field) in rec.iter().enumerate() {
            let v = if field.is_empty() {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|_| {
                    malformed(path, format!("row {} column {}: {field:?}", row + 1, col + 1))
                })?
            };
            cols[col].push(if v.is_finite() { v } else { f64::NAN });
        }
    }
    Ok(cols)
}

/// Reads an `events.csv` file (`kind,start_s,duration_s`).
pub fn read_events_csv(path: &Path) -> Result<Vec<EventAnnotation>> {
    let mut rdr = csv_reader(path)?;
    check_header(path, &mut rdr, &["kind", "start_s", "duration_s"])?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(path, e.to_string()))?;
        if rec.len() != 3 {
            return Err(malformed(path, format!("row {} has {} fields", row + 1, rec.len())));
        }
        let kind = EventKind::parse(&rec[0])
            .ok_or_else(|| malformed(path, format!("row {}: unknown kind {:?}", row + 1, &rec[0])))?;
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(path, format!("row {}: bad number {s:?}", row + 1)))
        };
        out.push(EventAnnotation {
            kind,
            start_s: num(&rec[1])?,
            duration_s: num(&rec[2])?,
        });
    }
    Ok(out)
}

/// A bare time span read from any CSV with `start_s` and `duration_s` columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start_s: f64,
    pub duration_s: f64,
}

impl TimeSpan for Span {
    fn start_s(&self) -> f64 {
        self.start_s
    }
    fn duration_s(&self) -> f64 {
        self.duration_s
    }
}

/// Reads spans from `events.csv` or `predicted_events.csv`; other columns are ignored.
pub fn read_spans_csv(path: &Path) -> Result<Vec<Span>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| malformed(path, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| malformed(path, format!("missing column {name:?}")))
    };
    let (si, di) = (col("start_s")?, col("duration_s")?);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(path, e.to_string()))?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(path, format!("row {}: bad number in column {}", row + 1, i + 1)))
        };
        out.push(Span {
            start_s: num(si)?,
            duration_s: num(di)?,
        });
    }
    Ok(out)
}

/// Linearly interpolates NaN runs no longer than `max_gap_s`; runs touching
/// either end are filled with the nearest valid sample.
pub fn fill_gaps(samples: &mut [f64], fs_hz: f64, max_gap_s: f64) -> std::result::Result<(), String> {
    let n = samples.len();
    if n == 0 {
        return Ok(());
    }
    if samples.iter().all(|v| v.is_nan()) {
        return Err("channel contains no valid samples".into());
    }
    let mut i = 0;
    while i < n {
        if !samples[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && samples[i].is_nan() {
            i += 1;
        }
        let len = i - start;
        let gap_s = len as f64 / fs_hz;
        if gap_s > max_gap_s {
            return Err(format!(
                "gap of {gap_s} s at sample {start} exceeds {max_gap_s} s"
            ));
        }
        let left = start.checked_sub(1).map(|j| samples[j]);
        let right = (i < n).then(|| samples[i]);
        for (k, slot) in samples[start..i].iter_mut().enumerate() {
            *slot = match (left, right) {
                (Some(a), Some(b)) => a + (b - a) * (k + 1) as f64 / (len + 1) as f64,
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!(),
            };
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// writing

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    w.write_record(header).expect("csv header");
    for r in rows {
        w.write_record(&r).expect("csv row");
    }
    w.into_inner().expect("csv flush")
}

/// Serialises `events.csv` content.
pub fn events_csv_bytes(events: &[EventAnnotation]) -> Vec<u8> {
    csv_bytes(
        &["kind", "start_s", "duration_s"],
        events.iter().map(|e| {
            vec![
                e.kind.as_str().to_string(),
                e.start_s.to_string(),
                e.duration_s.to_string(),
            ]
        }),
    )
}

/// Writes `subject` into `<root>/<id>/` using the canonical file names.
pub fn write_subject(root: impl AsRef<Path>, subject: &Subject) -> Result<PathBuf> {
    let dir = root.as_ref().join(&subject.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let manifest = Manifest {
        id: subject.id.clone(),
        gender: subject.profile.gender,
        age: subject.profile.age,
        bmi: subject.profile.bmi,
        comorbidities: subject.profile.comorbidities,
        channels: Channels {
            spo2: ChannelRef {
                file: SPO2_FILE.into(),
                fs_hz: subject.spo2.sample_rate_hz,
            },
            effort: ChannelRef {
                file: EFFORT_FILE.into(),
                fs_hz: subject.thoracic.sample_rate_hz,
            },
        },
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    json.push(b'\n');
    write_file(&dir.join(MANIFEST_FILE), &json)?;

    let spo2 = csv_bytes(
        &["spo2_percent"],
        subject.spo2.samples.iter().map(|v| vec![v.to_string()]),
    );
    write_file(&dir.join(SPO2_FILE), &spo2)?;

    let effort = csv_bytes(
        &["thoracic", "abdominal"],
        subject
            .thoracic
            .samples
            .iter()
            .zip(&subject.abdominal.samples)
            .map(|(t, a)| vec![t.to_string(), a.to_string()]),
    );
    write_file(&dir.join(EFFORT_FILE), &effort)?;

    if let Some(events) = &subject.annotations {
        write_file(&dir.join(EVENTS_FILE), &events_csv_bytes(events))?;
    }
    Ok(dir)
}

pub fn write_database(root: impl AsRef<Path>, subjects: &[Subject]) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for s in subjects {
        write_subject(root, s)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// epoch labels

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpochLabel {
    #[serde(rename = "NOR")]
    Normal,
    #[serde(rename = "APN")]
    Apnea,
}

impl EpochLabel {
    pub fn sign(self) -> f64 {
        match self {
            EpochLabel::Normal => -1.0,
            EpochLabel::Apnea => 1.0,
        }
    }
}

/// Fraction of an epoch that must overlap annotated events for an APN label.
pub const DEFAULT_LABEL_OVERLAP: f64 = 0.5;

/// Labels each grid epoch APN when at least half of it overlaps annotated events.
pub fn label_epochs(subject: &Subject, grid: &EpochGrid) -> Result<Vec<EpochLabel>> {
    let events = subject
        .annotations
        .as_ref()
        .ok_or_else(|| Error::NoAnnotations(subject.id.clone()))?;
    Ok(label_spans(events, grid, DEFAULT_LABEL_OVERLAP))
}

/// Labels grid epochs against sorted, disjoint spans with a configurable
/// overlap fraction.
pub fn label_spans<T: TimeSpan>(spans: &[T], grid: &EpochGrid, min_fraction: f64) -> Vec<EpochLabel> {
    let need = min_fraction * grid.window_s;
    let mut first = 0;
    grid.starts()
        .map(|start| {
            let end = start + grid.window_s;
            while first < spans.len() && spans[first].end_s() <= start {
                first += 1;
            }
            let mut overlap = 0.0;
            for s in spans[first..].iter().take_while(|s| s.start_s() < end) {
                overlap += s.end_s().min(end) - s.start_s().max(start);
            }
            if overlap >= need {
                EpochLabel::Apnea
            } else {
                EpochLabel::Normal
            }
        })
        .collect()
}
