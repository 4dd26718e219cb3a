//! Epoch segmentation and per-epoch features.
//!
//! Epochs are 10 s windows advanced by 0.5 s. Each epoch carries three
//! respiratory-effort features (amplitude, breathing frequency, thoraco-
//! abdominal paradox) and six SpO2 desaturation statistics.
//!
//! Effort channels are first averaged down to a common 4 Hz analysis rate so
//! that the features do not depend on the sensor sample rate. Band limiting
//! is an FFT-domain brick-wall mask applied to the detrended window.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recording::Subject;

pub const EPOCH_WINDOW_S: f64 = 10.0;
pub const EPOCH_STRIDE_S: f64 = 0.5;
pub const MIN_RECORDING_S: f64 = 20.0;
pub const ANALYSIS_FS_HZ: f64 = 4.0;
pub const DESAT_WINDOW_S: usize = 20;

/// Epoch starts `0, 0.5, 1.0, ...` such that every epoch fits in the recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochGrid {
    pub window_s: f64,
    pub stride_s: f64,
    count: usize,
}

impl EpochGrid {
    pub fn new(duration_s: f64) -> Result<Self> {
        if !(duration_s >= MIN_RECORDING_S) {
            return Err(Error::RecordingTooShort {
                duration_s,
                minimum_s: MIN_RECORDING_S,
            });
        }
        let count = ((duration_s - EPOCH_WINDOW_S) / EPOCH_STRIDE_S).floor() as usize + 1;
        Ok(Self {
            window_s: EPOCH_WINDOW_S,
            stride_s: EPOCH_STRIDE_S,
            count,
        })
    }

    /// Grid over the span covered by both the SpO2 and the effort channels.
    pub fn for_subject(subject: &Subject) -> Result<Self> {
        Self::new(analysis_duration_s(subject))
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn start(&self, i: usize) -> f64 {
        i as f64 * self.stride_s
    }

    pub fn starts(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.start(i))
    }

    /// Number of strides spanned by one window (20).
    pub fn strides_per_window(&self) -> usize {
        (self.window_s / self.stride_s).round() as usize
    }
}

pub fn build_epoch_grid(recording_duration_s: f64) -> Result<EpochGrid> {
    EpochGrid::new(recording_duration_s)
}

/// Seconds of signal available on both clocks.
pub fn analysis_duration_s(subject: &Subject) -> f64 {
    let effort = resampled_len(subject.thoracic.len(), subject.thoracic.sample_rate_hz) as f64
        / ANALYSIS_FS_HZ;
    subject.duration_s().min(effort)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub paradox_threshold: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            band_low_hz: 0.1,
            band_high_hz: 0.7,
            paradox_threshold: -0.3,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_low_hz > 0.0 && self.band_high_hz > self.band_low_hz) {
            return Err(Error::InvalidConfig(
                "feature band must satisfy 0 < low < high".into(),
            ));
        }
        if self.band_high_hz >= ANALYSIS_FS_HZ / 2.0 {
            return Err(Error::InvalidConfig(format!(
                "band_high_hz must be below {} Hz",
                ANALYSIS_FS_HZ / 2.0
            )));
        }
        if !(-1.0..=1.0).contains(&self.paradox_threshold) {
            return Err(Error::InvalidConfig(
                "paradox_threshold must lie in [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RespiratoryFeatures {
    pub amplitude_thoracic: f64,
    pub amplitude_abdominal: f64,
    /// 0 when `degenerate`.
    pub frequency_hz: f64,
    pub paradox_score: f64,
    pub paradox_flag: bool,
    /// No in-band energy on either channel.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spo2Features {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub mean: f64,
    pub deriv_var: f64,
    pub desat_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochFeatures {
    pub start_s: f64,
    pub resp_amplitude_thoracic: f64,
    pub resp_amplitude_abdominal: f64,
    pub resp_frequency: f64,
    pub resp_degenerate: bool,
    pub paradox_score: f64,
    pub paradox_flag: bool,
    pub spo2_min: f64,
    pub spo2_max: f64,
    pub spo2_median: f64,
    pub spo2_mean: f64,
    pub spo2_deriv_var: f64,
    pub spo2_desat_depth: f64,
}

/// Names of the classifier inputs, in [`EpochFeatures::to_vector`] order.
pub const FEATURE_NAMES: [&str; 10] = [
    "resp_amplitude_thoracic",
    "resp_amplitude_abdominal",
    "resp_frequency",
    "paradox_score",
    "spo2_min",
    "spo2_max",
    "spo2_median",
    "spo2_mean",
    "spo2_deriv_var",
    "spo2_desat_depth",
];

impl EpochFeatures {
    pub fn to_vector(&self) -> Vec<f64> {
        vec![
            self.resp_amplitude_thoracic,
            self.resp_amplitude_abdominal,
            self.resp_frequency,
            self.paradox_score,
            self.spo2_min,
            self.spo2_max,
            self.spo2_median,
            self.spo2_mean,
            self.spo2_deriv_var,
            self.spo2_desat_depth,
        ]
    }
}

// ---------------------------------------------------------------------------
// small statistics helpers

/// Linear-interpolated quantile of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub(crate) fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub(crate) fn median(x: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(x), 0.5)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn interquartile_range(x: &[f64]) -> f64 {
    let s = sorted_copy(x);
    quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= f64::MIN_POSITIVE || sbb <= f64::MIN_POSITIVE {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

fn detrend(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = mean(x);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - tm;
        num += dt * (v - xm);
        den += dt * dt;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    x.iter()
        .enumerate()
        .map(|(i, v)| v - xm - slope * (i as f64 - tm))
        .collect()
}

// ---------------------------------------------------------------------------
// respiratory features

const ENERGY_FLOOR: f64 = 1e-12;

/// Reusable FFT plans for one window length.
pub struct RespiratoryAnalyzer {
    fs_hz: f64,
    n: usize,
    n_pad: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fwd_pad: Arc<dyn Fft<f64>>,
    cfg: FeatureConfig,
}

impl RespiratoryAnalyzer {
    /// Zero padding gives a frequency bin of `fs / n_pad`, about 0.03 Hz for
    /// a 10 s window.
    pub fn new(window_len: usize, fs_hz: f64, cfg: FeatureConfig) -> Self {
        let n_pad = ((window_len as f64 * 3.2).ceil() as usize).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            fs_hz,
            n: window_len,
            n_pad,
            fwd: planner.plan_fft_forward(window_len),
            inv: planner.plan_fft_inverse(window_len),
            fwd_pad: planner.plan_fft_forward(n_pad),
            cfg,
        }
    }

    /// Width of one bin of the frequency estimator.
    pub fn frequency_bin_hz(&self) -> f64 {
        self.fs_hz / self.n_pad as f64
    }

    fn in_band(&self, f: f64) -> bool {
        f >= self.cfg.band_low_hz - 1e-9 && f <= self.cfg.band_high_hz + 1e-9
    }

    /// Detrended, band-limited copy of `x` (circular mask over the window).
    fn band_limit(&self, detrended: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut buf: Vec<Complex<f64>> = detrended.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let kk = k.min(n - k);
            let f = kk as f64 * self.fs_hz / n as f64;
            if kk == 0 || !self.in_band(f) {
                *c = Complex::new(0.0, 0.0);
            }
        }
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }

    fn padded_magnitude(&self, detrended: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_pad];
        for (slot, &v) in buf.iter_mut().zip(detrended) {
            slot.re = v;
        }
        self.fwd_pad.process(&mut buf);
        buf[..self.n_pad / 2 + 1].iter().map(|c| c.norm()).collect()
    }

    pub fn analyze(&self, thoracic: &[f64], abdominal: &[f64]) -> RespiratoryFeatures {
        assert_eq!(thoracic.len(), self.n, "thoracic window length");
        assert_eq!(abdominal.len(), self.n, "abdominal window length");
        let dt = detrend(thoracic);
        let da = detrend(abdominal);
        let bt = self.band_limit(&dt);
        let ba = self.band_limit(&da);

        let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let live_t = energy(&bt) > ENERGY_FLOOR;
        let live_a = energy(&ba) > ENERGY_FLOOR;
        let amplitude_thoracic = if live_t { interquartile_range(&bt) } else { 0.0 };
        let amplitude_abdominal = if live_a { interquartile_range(&ba) } else { 0.0 };
        let paradox_score = if live_t && live_a { pearson(&bt, &ba) } else { 0.0 };
        let degenerate = !live_t && !live_a;

        let frequency_hz = if degenerate {
            0.0
        } else {
            let mt = self.padded_magnitude(&dt);
            let ma = self.padded_magnitude(&da);
            let spec: Vec<f64> = mt.iter().zip(&ma).map(|(a, b)| a + b).collect();
            self.peak_frequency(&spec)
        };

        RespiratoryFeatures {
            amplitude_thoracic,
            amplitude_abdominal,
            frequency_hz,
            paradox_score,
            paradox_flag: paradox_score < self.cfg.paradox_threshold,
            degenerate,
        }
    }

    /// Peak of the in-band magnitude spectrum, refined by a parabola through
    /// the peak bin and its neighbours.
    fn peak_frequency(&self, spec: &[f64]) -> f64 {
        let bin = self.frequency_bin_hz();
        let mut best: Option<usize> = None;
        for (k, &m) in spec.iter().enumerate() {
            if !self.in_band(k as f64 * bin) {
                continue;
            }
            if best.is_none_or(|b| m > spec[b]) {
                best = Some(k);
            }
        }
        let Some(k) = best else { return 0.0 };
        let mut pos = k as f64;
        if k > 0 && k + 1 < spec.len() {
            let (a, b, c) = (spec[k - 1], spec[k], spec[k + 1]);
            let den = a - 2.0 * b + c;
            if den < 0.0 {
                pos += (0.5 * (a - c) / den).clamp(-0.5, 0.5);
            }
        }
        pos * bin
    }
}

/// One-shot respiratory feature computation for a window at `fs_hz`.
pub fn respiratory_features(
    thoracic: &[f64],
    abdominal: &[f64],
    fs_hz: f64,
    cfg: &FeatureConfig,
) -> RespiratoryFeatures {
    RespiratoryAnalyzer::new(thoracic.len(), fs_hz, *cfg).analyze(thoracic, abdominal)
}

// ---------------------------------------------------------------------------
// SpO2 features

/// Statistics of the 10 s epoch plus the median-minus-minimum depth of the
/// surrounding 20 s window.
pub fn spo2_features(window_10s: &[f64], window_20s: &[f64]) -> Spo2Features {
    let s = sorted_copy(window_10s);
    let diffs: Vec<f64> = window_10s.windows(2).map(|w| w[1] - w[0]).collect();
    let deriv_var = if diffs.is_empty() { 0.0 } else { variance(&diffs) };
    let s20 = sorted_copy(window_20s);
    let desat_depth = (quantile_sorted(&s20, 0.5) - s20[0]).max(0.0);
    Spo2Features {
        min: s[0],
        max: s[s.len() - 1],
        median: quantile_sorted(&s, 0.5),
        mean: mean(window_10s),
        deriv_var,
        desat_depth,
    }
}

// ---------------------------------------------------------------------------
// resampling and full extraction

fn resampled_len(n: usize, fs_hz: f64) -> usize {
    (n as f64 * ANALYSIS_FS_HZ / fs_hz + 1e-9).floor() as usize
}

/// Averages samples into consecutive `1 / ANALYSIS_FS_HZ` bins; only complete
/// bins are emitted.
pub fn resample_to_analysis_rate(samples: &[f64], fs_hz: f64) -> Vec<f64> {
    if (fs_hz - ANALYSIS_FS_HZ).abs() < 1e-12 {
        return samples.to_vec();
    }
    let out_len = resampled_len(samples.len(), fs_hz);
    let ratio = fs_hz / ANALYSIS_FS_HZ;
    let edge = |k: usize| ((k as f64 * ratio) - 1e-9).ceil().max(0.0) as usize;
    (0..out_len)
        .map(|k| {
            let lo = edge(k);
            let hi = edge(k + 1).min(samples.len()).max(lo + 1);
            mean(&samples[lo..hi])
        })
        .collect()
}

/// Computes one feature row per grid epoch, in grid order.
pub fn extract_features(subject: &Subject, cfg: &FeatureConfig) -> Result<Vec<EpochFeatures>> {
    let grid = EpochGrid::for_subject(subject)?;
    let thor = resample_to_analysis_rate(&subject.thoracic.samples, subject.thoracic.sample_rate_hz);
    let abd = resample_to_analysis_rate(&subject.abdominal.samples, subject.abdominal.sample_rate_hz);
    let spo2 = &subject.spo2.samples;

    let per_stride = (EPOCH_STRIDE_S * ANALYSIS_FS_HZ).round() as usize;
    let win = (EPOCH_WINDOW_S * ANALYSIS_FS_HZ).round() as usize;
    let analyzer = RespiratoryAnalyzer::new(win, ANALYSIS_FS_HZ, *cfg);

    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let start_s = grid.start(i);
        let e0 = i * per_stride;
        let resp = analyzer.analyze(&thor[e0..e0 + win], &abd[e0..e0 + win]);

        // SpO2 samples sit on whole seconds: the epoch covers [ceil(t), ceil(t) + 10).
        let s0 = start_s.ceil() as usize;
        let w10 = &spo2[s0..s0 + EPOCH_WINDOW_S as usize];
        // 20 s window centred on the epoch timestamp, clamped at the start.
        let d0 = (start_s - DESAT_WINDOW_S as f64 / 2.0).ceil().max(0.0) as usize;
        let d0 = d0.min(spo2.len().saturating_sub(DESAT_WINDOW_S));
        let w20 = &spo2[d0..(d0 + DESAT_WINDOW_S).min(spo2.len())];
        let sp = spo2_features(w10, w20);

        out.push(EpochFeatures {
            start_s,
            resp_amplitude_thoracic: resp.amplitude_thoracic,
            resp_amplitude_abdominal: resp.amplitude_abdominal,
            resp_frequency: resp.frequency_hz,
            resp_degenerate: resp.degenerate,
            paradox_score: resp.paradox_score,
            paradox_flag: resp.paradox_flag,
            spo2_min: sp.min,
            spo2_max: sp.max,
            spo2_median: sp.median,
            spo2_mean: sp.mean,
            spo2_deriv_var: sp.deriv_var,
            spo2_desat_depth: sp.desat_depth,
        });
    }
    Ok(out)
}

/// `features.csv` rendering, one row per epoch.
pub fn features_csv_bytes(rows: &[EpochFeatures]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("feature row serialises");
    }
    w.into_inner().expect("csv flush")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(f: f64, fs: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * f * i as f64 / fs + phase).sin())
            .collect()
    }

    #[test]
    fn grid_counts() {
        assert!(matches!(
            EpochGrid::new(10.0),
            Err(Error::RecordingTooShort { .. })
        ));
        let g = EpochGrid::new(20.0).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g.start(20), 10.0);
        assert_eq!(EpochGrid::new(22680.0).unwrap().len(), 45341);
        assert_eq!(EpochGrid::new(20.4).unwrap().len(), 21);
        assert_eq!(g.strides_per_window(), 20);
    }

    #[test]
    fn in_phase_sinusoid() {
        let x = sine(0.25, 4.0, 40, 0.0);
        let r = respiratory_features(&x, &x, 4.0, &FeatureConfig::default());
        let bin = RespiratoryAnalyzer::new(40, 4.0, FeatureConfig::default()).frequency_bin_hz();
        assert!((r.frequency_hz - 0.25).abs() <= bin, "{}", r.frequency_hz);
        assert!(r.paradox_score > 0.99);
        assert!(!r.paradox_flag);
    }

    #[test]
    fn anti_phase_sinusoid_is_paradoxical() {
        let t = sine(0.3, 4.0, 40, 0.0);
        let a: Vec<f64> = t.iter().map(|v| -v).collect();
        let r = respiratory_features(&t, &a, 4.0, &FeatureConfig::default());
        assert!(r.paradox_score < -0.99);
        assert!(r.paradox_flag);
        // magnitude spectra are summed, so cancellation does not hide the rate
        assert!((r.frequency_hz - 0.3).abs() < 0.04);
    }

    #[test]
    fn constant_window_is_degenerate() {
        let z = vec![0.0; 40];
        let r = respiratory_features(&z, &z, 4.0, &FeatureConfig::default());
        assert!(r.degenerate);
        assert_eq!(r.amplitude_thoracic, 0.0);
        assert_eq!(r.amplitude_abdominal, 0.0);
        assert_eq!(r.paradox_score, 0.0);
        assert_eq!(r.frequency_hz, 0.0);

        let c = vec![3.5; 40];
        assert!(respiratory_features(&c, &c, 4.0, &FeatureConfig::default()).degenerate);
    }

    #[test]
    fn spo2_constant_and_ramp() {
        let c = vec![97.0; 20];
        let f = spo2_features(&c[..10], &c);
        assert_eq!((f.min, f.max, f.median, f.mean), (97.0, 97.0, 97.0, 97.0));
        assert_eq!(f.deriv_var, 0.0);
        assert_eq!(f.desat_depth, 0.0);

        let ramp: Vec<f64> = (0..10).map(|i| 98.0 - i as f64).collect();
        assert_eq!(spo2_features(&ramp, &c).deriv_var, 0.0);
    }

    #[test]
    fn spo2_desat_depth_from_median_minus_min() {
        let mut w20 = vec![96.0; 15];
        w20.extend([92.0; 5]);
        let f = spo2_features(&w20[..10], &w20);
        assert_eq!(f.desat_depth, 4.0);
    }

    #[test]
    fn resampling_averages_bins() {
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        assert_eq!(
            resample_to_analysis_rate(&x, 8.0),
            vec![0.5, 2.5, 4.5, 6.5, 8.5, 10.5, 12.5, 14.5]
        );
        assert_eq!(resample_to_analysis_rate(&x, 4.0), x);
        // 226 Hz: 56.5 samples per output bin
        let y = vec![1.0; 226 * 3];
        let r = resample_to_analysis_rate(&y, 226.0);
        assert_eq!(r.len(), 12);
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn quantiles_interpolate() {
        assert_eq!(median(&[3.0, 1.0, 2.0, 4.0]), 2.5);
        assert_eq!(interquartile_range(&[1.0, 2.0, 3.0, 4.0, 5.0]), 2.0);
    }
}
