//! Soft-margin SVM with an RBF kernel, trained by sequential minimal
//! optimisation.
//!
//! The solver works on the dual
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a    s.t.  y^T a = 0,  0 <= a_i <= C
//! Q_ij = y_i y_j exp(-gamma |x_i - x_j|^2)
//! ```
//!
//! and at every step updates the maximal violating pair, ties going to the
//! lowest index so that a given row order always yields the same model.

use std::fs;
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recording::EpochLabel;

pub const MODEL_FORMAT: &str = "apnea-screen/rbf-svm/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    /// `1 / d` on standardised features.
    Auto,
    #[serde(untagged)]
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    #[serde(rename = "C", alias = "c")]
    pub c: f64,
    pub gamma: Gamma,
    /// Stop when the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_pair_updates: u64,
    /// Keep every n-th epoch of each neighbour when pooling training rows.
    pub train_stride: usize,
    pub kernel_cache_mb: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: Gamma::Auto,
            tol: 1e-3,
            max_pair_updates: 1_000_000,
            train_stride: 1,
            kernel_cache_mb: 256,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidConfig("C must be positive".into()));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidConfig("gamma must be positive".into()));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_pair_updates == 0 || self.train_stride == 0 {
            return Err(Error::InvalidConfig(
                "max_pair_updates and train_stride must be positive".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// class balancing and standardisation

/// Duplicates the whole minority class until the class counts differ by less
/// than one minority-class size. The majority class is left untouched.
pub fn balance_classes<T: Clone>(rows: &[T], labels: &[EpochLabel]) -> Result<(Vec<T>, Vec<EpochLabel>)> {
    assert_eq!(rows.len(), labels.len(), "rows and labels must align");
    let n_apn = labels.iter().filter(|l| **l == EpochLabel::Apnea).count();
    let n_nor = labels.len() - n_apn;
    if n_apn == 0 || n_nor == 0 {
        return Err(Error::SingleClassInput);
    }
    let (minority, n_min, n_maj) = if n_apn < n_nor {
        (EpochLabel::Apnea, n_apn, n_nor)
    } else {
        (EpochLabel::Normal, n_nor, n_apn)
    };
    let copies = n_maj / n_min - 1;

    let mut out_rows = rows.to_vec();
    let mut out_labels = labels.to_vec();
    for _ in 0..copies {
        for (r, l) in rows.iter().zip(labels) {
            if *l == minority {
                out_rows.push(r.clone());
                out_labels.push(*l);
            }
        }
    }
    Ok((out_rows, out_labels))
}

/// Per-feature centring and scaling; zero-variance features are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input_dim: usize,
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut stds = Vec::new();
        for f in 0..d {
            let m = rows.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[f] - m) * (r[f] - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 1e-12 * m.abs().max(1.0) {
                kept.push(f);
                means.push(m);
                stds.push(sd);
            }
        }
        if kept.is_empty() {
            return Err(Error::NoUsableFeatures);
        }
        Ok(Self {
            input_dim: d,
            kept,
            mean: means,
            std: stds,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(self
            .kept
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&f, (m, s))| (x[f] - m) / s)
            .collect())
    }

    pub fn dim(&self) -> usize {
        self.kept.len()
    }
}

/// Balanced and standardised training rows.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Standardised rows, minority duplicates included.
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<EpochLabel>,
    pub standardization: Standardization,
}

impl TrainingSet {
    /// Validates raw rows, balances the classes and fits the standardisation.
    pub fn prepare(rows: &[Vec<f64>], labels: &[EpochLabel]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        let d = rows.first().map_or(0, Vec::len);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("training row contains a non-finite value".into()));
            }
        }
        let (rows, labels) = balance_classes(rows, labels)?;
        let standardization = Standardization::fit(&rows)?;
        let rows = rows
            .iter()
            .map(|r| standardization.apply(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            labels,
            standardization,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

// ---------------------------------------------------------------------------
// kernel

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

/// Least-recently-used cache of kernel rows.
struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    gamma: f64,
    rows: Vec<Option<Rc<[f64]>>>,
    last_use: Vec<u64>,
    cached: Vec<usize>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64, cache_bytes: usize) -> Self {
        let n = x.len();
        let capacity = (cache_bytes / (8 * n.max(1))).clamp(2, n.max(2));
        Self {
            x,
            gamma,
            rows: vec![None; n],
            last_use: vec![0; n],
            cached: Vec::new(),
            capacity,
            clock: 0,
        }
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        self.clock += 1;
        self.last_use[i] = self.clock;
        if let Some(r) = &self.rows[i] {
            return Rc::clone(r);
        }
        if self.cached.len() >= self.capacity {
            let (pos, _) = self
                .cached
                .iter()
                .enumerate()
                .min_by_key(|(_, &k)| self.last_use[k])
                .expect("cache is non-empty");
            let evict = self.cached.swap_remove(pos);
            self.rows[evict] = None;
        }
        let xi = &self.x[i];
        let row: Rc<[f64]> = self.x.iter().map(|xt| rbf(xi, xt, self.gamma)).collect();
        self.rows[i] = Some(Rc::clone(&row));
        self.cached.push(i);
        row
    }
}

// ---------------------------------------------------------------------------
// solver

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    /// Update cap hit with the violation between `tol` and 1e-2.
    CapReached,
    /// Update cap hit with the violation above 1e-2.
    NoConvergence,
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function offset: `f(x) = sum a_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    pub iterations: u64,
    pub max_violation: f64,
    pub status: SolverStatus,
    /// `sum a - 1/2 a^T Q a` (the maximised form).
    pub objective: f64,
}

/// Solves the dual for standardised rows `x` with labels `y` in {-1, +1}.
pub fn solve_dual(
    x: &[Vec<f64>],
    y: &[f64],
    c: f64,
    gamma: f64,
    tol: f64,
    max_pair_updates: u64,
    cache_bytes: usize,
) -> DualSolution {
    let n = x.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = KernelCache::new(x, gamma, cache_bytes);
    let mut iterations = 0u64;
    #[cfg(debug_assertions)]
    let mut objective = 0.0;

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let max_violation = loop {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        let gap = g_max - g_min;
        if i == usize::MAX || j == usize::MAX || gap < tol || iterations >= max_pair_updates {
            break gap.max(0.0);
        }

        let ki = cache.row(i);
        let kj = cache.row(j);
        let eta = (ki[i] + kj[j] - 2.0 * ki[j]).max(1e-12);
        let bound_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let bound_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let step = (gap / eta).min(bound_i).min(bound_j);

        alpha[i] = if step == bound_i {
            if y[i] > 0.0 { c } else { 0.0 }
        } else {
            alpha[i] + y[i] * step
        };
        alpha[j] = if step == bound_j {
            if y[j] > 0.0 { 0.0 } else { c }
        } else {
            alpha[j] - y[j] * step
        };
        for t in 0..n {
            grad[t] += y[t] * step * (ki[t] - kj[t]);
        }
        #[cfg(debug_assertions)]
        {
            // Closed-form change of the maximised dual along the pair direction.
            let delta = gap * step - 0.5 * eta * step * step;
            debug_assert!(delta >= -1e-12, "dual objective decreased by {delta}");
            objective += delta;
        }
        iterations += 1;
    };
    #[cfg(debug_assertions)]
    let _ = objective;

    let rho = offset(&alpha, &grad, y, c);
    let status = if max_violation < tol {
        SolverStatus::Converged
    } else if max_violation <= 1e-2 {
        SolverStatus::CapReached
    } else {
        SolverStatus::NoConvergence
    };
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>();
    DualSolution {
        alpha,
        bias: -rho,
        iterations,
        max_violation,
        status,
        objective,
    }
}

fn offset(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut sum = 0.0;
    let mut free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            free += 1;
        } else if (alpha[t] >= c) == (y[t] < 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb.max(0.0)
    }
}

// ---------------------------------------------------------------------------
// model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub bias: f64,
    pub standardization: Standardization,
    /// Standardised rows with a non-zero multiplier.
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// +1 for APN, -1 for NOR.
    pub labels: Vec<f64>,
    pub status: SolverStatus,
    pub iterations: u64,
    pub max_violation: f64,
    pub dual_objective: f64,
    pub training_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: EpochLabel,
    pub margin: f64,
}

pub fn resolve_gamma(gamma: Gamma, dim: usize) -> f64 {
    match gamma {
        Gamma::Auto => 1.0 / dim.max(1) as f64,
        Gamma::Value(g) => g,
    }
}

pub fn train(tset: &TrainingSet, cfg: &SvmConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if tset.len() < 2 {
        return Err(Error::SingleClassInput);
    }
    let y: Vec<f64> = tset.labels.iter().map(|l| l.sign()).collect();
    if y.iter().all(|v| *v > 0.0) || y.iter().all(|v| *v < 0.0) {
        return Err(Error::SingleClassInput);
    }
    let gamma = resolve_gamma(cfg.gamma, tset.standardization.dim());
    let sol = solve_dual(
        &tset.rows,
        &y,
        cfg.c,
        gamma,
        cfg.tol,
        cfg.max_pair_updates,
        cfg.kernel_cache_mb << 20,
    );
    if sol.status == SolverStatus::NoConvergence {
        log::warn!(
            "SMO stopped after {} updates with violation {:.3e}",
            sol.iterations,
            sol.max_violation
        );
    }

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    let mut labels = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(tset.rows[t].clone());
            alphas.push(a);
            labels.push(y[t]);
        }
    }
    Ok(TrainedModel {
        format: MODEL_FORMAT.to_string(),
        gamma,
        c: cfg.c,
        bias: sol.bias,
        standardization: tset.standardization.clone(),
        support_vectors,
        alphas,
        labels,
        status: sol.status,
        iterations: sol.iterations,
        max_violation: sol.max_violation,
        dual_objective: sol.objective,
        training_rows: tset.len(),
    })
}

impl TrainedModel {
    /// Decision value for an already standardised row.
    pub fn decision_standardized(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(sv, (a, y))| a * y * rbf(sv, z, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn input_dim(&self) -> usize {
        self.standardization.input_dim
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Model(format!("unsupported format {:?}", model.format)));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Classifies one raw feature row; APN iff the margin is positive.
pub fn predict(model: &TrainedModel, features: &[f64]) -> Result<Prediction> {
    let z = model.standardization.apply(features)?;
    let margin = model.decision_standardized(&z);
    let label = if margin > 0.0 {
        EpochLabel::Apnea
    } else {
        EpochLabel::Normal
    };
    Ok(Prediction { label, margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use EpochLabel::{Apnea as A, Normal as N};

    #[test]
    fn balance_examples() {
        let rows: Vec<usize> = (0..200).collect();
        let labels: Vec<_> = (0..200).map(|i| if i < 100 { A } else { N }).collect();
        let (r, l) = balance_classes(&rows, &labels).unwrap();
        assert_eq!((r.len(), l.len()), (200, 200));

        let rows: Vec<usize> = (0..40).collect();
        let labels: Vec<_> = (0..40).map(|i| if i < 10 { A } else { N }).collect();
        let (r, l) = balance_classes(&rows, &labels).unwrap();
        assert_eq!(l.iter().filter(|x| **x == A).count(), 30);
        for i in 0..10 {
            assert_eq!(r.iter().filter(|x| **x == i).count(), 3);
        }

        let labels = vec![N; 5];
        assert!(matches!(
            balance_classes(&[0; 5], &labels),
            Err(Error::SingleClassInput)
        ));
    }

    #[test]
    fn balance_leaves_gap_below_one_minority_block() {
        let rows: Vec<usize> = (0..45).collect();
        let labels: Vec<_> = (0..45).map(|i| if i < 10 { A } else { N }).collect();
        let (_, l) = balance_classes(&rows, &labels).unwrap();
        let apn = l.iter().filter(|x| **x == A).count();
        assert_eq!(apn, 30);
        assert!(35 - apn < 10);
    }

    #[test]
    fn two_point_problem() {
        let rows = vec![vec![1.0], vec![-1.0]];
        let tset = TrainingSet::prepare(&rows, &[A, N]).unwrap();
        let model = train(&tset, &SvmConfig::default()).unwrap();
        assert_eq!(model.support_vectors.len(), 2);
        assert!((model.alphas[0] - model.alphas[1]).abs() < 1e-12);
        assert!(model.bias.abs() < 1e-12);
        assert_eq!(predict(&model, &[2.0]).unwrap().label, A);
        assert_eq!(predict(&model, &[-2.0]).unwrap().label, N);
        assert!(predict(&model, &[0.0]).unwrap().margin.abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let rows = vec![vec![1.0, 0.0], vec![-1.0, 1.0]];
        let tset = TrainingSet::prepare(&rows, &[A, N]).unwrap();
        let model = train(&tset, &SvmConfig::default()).unwrap();
        assert!(matches!(
            predict(&model, &[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn zero_variance_features_are_dropped() {
        let rows = vec![vec![1.0, 5.0], vec![-1.0, 5.0], vec![0.5, 5.0]];
        let tset = TrainingSet::prepare(&rows, &[A, N, A]).unwrap();
        assert_eq!(tset.standardization.kept, vec![0]);
        let rows = vec![vec![5.0], vec![5.0]];
        assert!(matches!(
            TrainingSet::prepare(&rows, &[A, N]),
            Err(Error::NoUsableFeatures)
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let tset = TrainingSet::prepare(&rows, &[N, N, A, A]).unwrap();
        let cfg = SvmConfig {
            c: 10.0,
            ..SvmConfig::default()
        };
        let model = train(&tset, &cfg).unwrap();
        let back = TrainedModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert!(TrainedModel::from_json(&model.to_json().replace(MODEL_FORMAT, "other/0")).is_err());
    }

    #[test]
    fn gamma_config_parses_auto_and_number() {
        let a: SvmConfig = serde_json::from_str(r#"{"gamma": "auto"}"#).unwrap();
        assert_eq!(a.gamma, Gamma::Auto);
        let b: SvmConfig = serde_json::from_str(r#"{"C": 2.0, "gamma": 0.25}"#).unwrap();
        assert_eq!((b.c, b.gamma), (2.0, Gamma::Value(0.25)));
        assert!(serde_json::from_str::<SvmConfig>(r#"{"gama": 1}"#).is_err());
    }
}
