//! Subject-adaptive training, single-subject screening and leave-one-out
//! evaluation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::{detect_events, screening_report, DetectedEvent, DetectorConfig, ScreeningReport, Severity};
use crate::error::{Error, Result};
use crate::evaluation::{
    binary_screening, match_events, severity_metrics, summarize_cohort, BinaryScreeningStats,
    ConfusionMatrix4, EventScore, SeverityMetrics, Stratum, StratumSummary,
};
use crate::features::{extract_features, EpochFeatures, EpochGrid, FeatureConfig};
use crate::phenotype::{select_neighbors, Candidate, KnnConfig, MetricScales};
use crate::recording::{label_epochs, EpochLabel, PhenotypeProfile, Subject};
use crate::svm::{predict, train, SolverStatus, SvmConfig, TrainedModel, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub knn: KnnConfig,
    pub svm: SvmConfig,
    pub detector: DetectorConfig,
    pub feature: FeatureConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.knn.validate()?;
        self.svm.validate()?;
        self.detector.validate()?;
        self.feature.validate()
    }
}

/// Features, and labels when annotated, computed once per subject.
#[derive(Debug, Clone)]
pub struct PreparedSubject<'a> {
    pub subject: &'a Subject,
    pub grid: EpochGrid,
    pub features: Vec<EpochFeatures>,
    pub vectors: Vec<Vec<f64>>,
    pub labels: Option<Vec<EpochLabel>>,
}

impl<'a> PreparedSubject<'a> {
    pub fn new(subject: &'a Subject, cfg: &FeatureConfig) -> Result<Self> {
        let grid = EpochGrid::for_subject(subject)?;
        let features = extract_features(subject, cfg)?;
        let vectors = features.iter().map(EpochFeatures::to_vector).collect();
        let labels = match subject.annotations {
            Some(_) => Some(label_epochs(subject, &grid)?),
            None => None,
        };
        Ok(Self {
            subject,
            grid,
            features,
            vectors,
            labels,
        })
    }

    pub fn id(&self) -> &str {
        &self.subject.id
    }

    /// Expert event rate from the annotations.
    pub fn expert_rate(&self) -> Option<f64> {
        let n = self.subject.annotations.as_ref()?.len();
        Some(crate::detector::rei(n, self.subject.recording_hours()))
    }
}

pub fn prepare_all<'a>(subjects: &'a [Subject], cfg: &FeatureConfig) -> Result<Vec<PreparedSubject<'a>>> {
    subjects
        .par_iter()
        .map(|s| PreparedSubject::new(s, cfg))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub neighbors: Vec<String>,
    pub scales: MetricScales,
    pub model: TrainedModel,
}

impl FoldModel {
    /// Hex SHA-256 of the serialised model.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.model.to_json().as_bytes()))
    }
}

/// Trains the model for a query subject from an annotated reference set.
/// Nothing about the query except its phenotype profile is consulted.
pub fn fit_fold_model(
    query: &PhenotypeProfile,
    reference: &[&PreparedSubject<'_>],
    cfg: &PipelineConfig,
) -> Result<FoldModel> {
    let scales = MetricScales::from_profiles(reference.iter().map(|p| &p.subject.profile));
    let candidates: Vec<Candidate> = reference
        .iter()
        .map(|p| Candidate {
            id: p.id(),
            profile: &p.subject.profile,
        })
        .collect();
    let neighbors = select_neighbors(query, &candidates, &cfg.knn, &scales)?;

    let by_id: BTreeMap<&str, &PreparedSubject> = reference.iter().map(|p| (p.id(), *p)).collect();
    let stride = cfg.svm.train_stride.max(1);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for id in &neighbors {
        let p = by_id[id];
        let l = p
            .labels
            .as_ref()
            .ok_or_else(|| Error::MissingAnnotations(vec![id.to_string()]))?;
        for i in (0..p.vectors.len()).step_by(stride) {
            rows.push(p.vectors[i].clone());
            labels.push(l[i]);
        }
    }
    let tset = TrainingSet::prepare(&rows, &labels)?;
    let model = train(&tset, &cfg.svm)?;
    Ok(FoldModel {
        neighbors: neighbors.into_iter().map(str::to_string).collect(),
        scales,
        model,
    })
}

/// Classifies every epoch of a prepared subject and runs the detector.
pub fn screen_prepared(
    model: &TrainedModel,
    subject: &PreparedSubject<'_>,
    cfg: &DetectorConfig,
) -> Result<ScreeningReport> {
    let predictions = subject
        .vectors
        .iter()
        .map(|v| predict(model, v))
        .collect::<Result<Vec<_>>>()?;
    let events = detect_events(&predictions, &subject.features, &subject.grid, cfg)?;
    Ok(screening_report(events, subject.subject.recording_hours()))
}

#[derive(Debug, Clone)]
pub struct Screening {
    pub fold: FoldModel,
    pub report: ScreeningReport,
}

/// Screens subject `id` against every other annotated subject in `database`.
pub fn screen_subject(database: &[Subject], id: &str, cfg: &PipelineConfig) -> Result<Screening> {
    cfg.validate()?;
    let query = database
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::UnknownSubject(id.to_string()))?;
    let reference: Vec<&Subject> = database
        .iter()
        .filter(|s| s.id != id)
        .filter(|s| {
            let ok = s.annotations.is_some();
            if !ok {
                log::warn!("{}: no annotations, left out of the reference set", s.id);
            }
            ok
        })
        .collect();
    let needed = cfg.knn.pool_size();
    if reference.len() < needed {
        return Err(Error::DatabaseTooSmall {
            needed,
            available: reference.len(),
        });
    }
    let prepared = reference
        .par_iter()
        .map(|s| PreparedSubject::new(s, &cfg.feature))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PreparedSubject> = prepared.iter().collect();
    let fold = fit_fold_model(&query.profile, &refs, cfg)?;
    let target = PreparedSubject::new(query, &cfg.feature)?;
    let report = screen_prepared(&fold.model, &target, &cfg.detector)?;
    Ok(Screening { fold, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub id: String,
    pub expert_severity: Severity,
    pub predicted_severity: Severity,
    pub expert_rate: f64,
    pub rei: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ppv: f64,
    pub recall: f64,
    pub f1: f64,
    pub neighbors: Vec<String>,
    pub solver_status: SolverStatus,
    pub model_sha256: String,
    #[serde(skip)]
    pub events: Vec<DetectedEvent>,
}

impl SubjectResult {
    pub fn score(&self) -> EventScore {
        EventScore::from_counts(self.tp, self.fp, self.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub subjects: Vec<SubjectResult>,
    pub strata: BTreeMap<Stratum, StratumSummary>,
    pub confusion: ConfusionMatrix4,
    pub severity: SeverityMetrics,
    pub binary: BinaryScreeningStats,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }
}

/// One LOOCV fold: trains on everyone but `held_out` and scores it.
pub fn run_fold(prepared: &[PreparedSubject<'_>], held_out: usize, cfg: &PipelineConfig) -> Result<SubjectResult> {
    let target = &prepared[held_out];
    let reference: Vec<&PreparedSubject> = prepared
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != held_out)
        .map(|(_, p)| p)
        .collect();
    let fold = fit_fold_model(&target.subject.profile, &reference, cfg)?;
    let report = screen_prepared(&fold.model, target, &cfg.detector)?;
    let annotations = target
        .subject
        .annotations
        .as_deref()
        .ok_or_else(|| Error::MissingAnnotations(vec![target.id().to_string()]))?;
    let score = match_events(&report.events, annotations)?;
    let expert_rate = target.expert_rate().unwrap_or(0.0);
    log::info!(
        "{}: rei {:.1} ({}), expert {:.1}, f1 {:.2}",
        target.id(),
        report.rei,
        report.severity.as_str(),
        expert_rate,
        score.f1
    );
    Ok(SubjectResult {
        id: target.id().to_string(),
        expert_severity: Severity::from_rei(expert_rate),
        predicted_severity: report.severity,
        expert_rate,
        rei: report.rei,
        tp: score.tp,
        fp: score.fp,
        fn_: score.fn_,
        ppv: score.ppv,
        recall: score.recall,
        f1: score.f1,
        neighbors: fold.neighbors.clone(),
        solver_status: fold.model.status,
        model_sha256: fold.sha256(),
        events: report.events,
    })
}

/// Aggregates per-subject results, which must already be in id order.
pub fn assemble_report(cfg: &PipelineConfig, subjects: Vec<SubjectResult>) -> Result<EvalReport> {
    let scores: Vec<(Severity, EventScore)> =
        subjects.iter().map(|s| (s.expert_severity, s.score())).collect();
    let strata = summarize_cohort(&scores)?;
    let mut confusion = ConfusionMatrix4::default();
    for s in &subjects {
        confusion.record(s.predicted_severity, s.expert_severity);
    }
    Ok(EvalReport {
        config: *cfg,
        severity: severity_metrics(&confusion)?,
        binary: binary_screening(&confusion)?,
        strata,
        confusion,
        subjects,
    })
}

fn check_loocv_input(subjects: &[Subject], cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let needed = cfg.knn.pool_size() + 1;
    if subjects.len() < needed {
        return Err(Error::DatabaseTooSmall {
            needed,
            available: subjects.len(),
        });
    }
    let missing: Vec<String> = subjects
        .iter()
        .filter(|s| s.annotations.is_none())
        .map(|s| s.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAnnotations(missing));
    }
    Ok(())
}

/// Leave-one-out evaluation. `jobs` bounds the number of concurrent folds
/// (`None` uses all cores); the report does not depend on it.
pub fn run_loocv(subjects: &[Subject], cfg: &PipelineConfig, jobs: Option<usize>) -> Result<EvalReport> {
    check_loocv_input(subjects, cfg)?;
    let mut sorted: Vec<&Subject> = subjects.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let owned: Vec<Subject> = sorted.into_iter().cloned().collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    pool.install(|| {
        let prepared = prepare_all(&owned, &cfg.feature)?;
        let results = (0..prepared.len())
            .into_par_iter()
            .map(|i| run_fold(&prepared, i, cfg))
            .collect::<Result<Vec<_>>>()?;
        assemble_report(cfg, results)
    })
}

/// Trains only the fold in which `held_out` is left out.
pub fn fold_model_for(subjects: &[Subject], held_out: &str, cfg: &PipelineConfig) -> Result<FoldModel> {
    check_loocv_input(subjects, cfg)?;
    let query = subjects
        .iter()
        .find(|s| s.id == held_out)
        .ok_or_else(|| Error::UnknownSubject(held_out.to_string()))?;
    let rest: Vec<&Subject> = subjects.iter().filter(|s| s.id != held_out).collect();
    let prepared = rest
        .par_iter()
        .map(|s| PreparedSubject::new(s, &cfg.feature))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PreparedSubject> = prepared.iter().collect();
    fit_fold_model(&query.profile, &refs, cfg)
}
