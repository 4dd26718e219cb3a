//! Subject similarity from phenotypes and the modified nearest-neighbour
//! selection used to pick a query subject's training cohort.
//!
//! The phenotype distance is a weighted L1 over age and BMI, each divided by
//! a robust scale of the reference population, plus a fixed penalty when the
//! genders differ. The correction distance counts comorbidity mismatches.
//!
//! Selection takes the `k + k'` phenotype-nearest subjects and prunes `k'` of
//! them: first those with the largest correction distance, then, if fewer
//! than `k'` candidates have any comorbidity mismatch, those with the largest
//! phenotype distance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{median, sorted_copy};
use crate::recording::PhenotypeProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnConfig {
    pub k: usize,
    pub k_prime: usize,
    pub gender_weight: f64,
    pub age_weight: f64,
    pub bmi_weight: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 15,
            k_prime: 5,
            gender_weight: 1.0,
            age_weight: 1.0,
            bmi_weight: 1.0,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        for (name, w) in [
            ("gender_weight", self.gender_weight),
            ("age_weight", self.age_weight),
            ("bmi_weight", self.bmi_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Candidates considered before pruning.
    pub fn pool_size(&self) -> usize {
        self.k + self.k_prime
    }
}

/// Robust spreads of age and BMI used to normalise the phenotype distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScales {
    pub age_scale: f64,
    pub bmi_scale: f64,
}

impl Default for MetricScales {
    fn default() -> Self {
        Self {
            age_scale: 1.0,
            bmi_scale: 1.0,
        }
    }
}

/// Consistency constant that turns a MAD into a normal-equivalent SD.
const MAD_TO_SD: f64 = 1.4826;

fn robust_scale(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    let mad = median(&sorted_copy(&dev));
    if mad > 0.0 {
        MAD_TO_SD * mad
    } else {
        1.0
    }
}

impl MetricScales {
    /// Scales from a reference population (the training fold, never the query).
    pub fn from_profiles<'a>(profiles: impl IntoIterator<Item = &'a PhenotypeProfile>) -> Self {
        let (ages, bmis): (Vec<f64>, Vec<f64>) =
            profiles.into_iter().map(|p| (p.age, p.bmi)).unzip();
        Self {
            age_scale: robust_scale(&ages),
            bmi_scale: robust_scale(&bmis),
        }
    }
}

pub fn phenotype_distance(
    a: &PhenotypeProfile,
    b: &PhenotypeProfile,
    scales: &MetricScales,
    cfg: &KnnConfig,
) -> f64 {
    let gender = if a.gender != b.gender { 1.0 } else { 0.0 };
    cfg.age_weight * (a.age - b.age).abs() / scales.age_scale
        + cfg.bmi_weight * (a.bmi - b.bmi).abs() / scales.bmi_scale
        + cfg.gender_weight * gender
}

/// Number of differing comorbidity flags.
pub fn correction_distance(a: &PhenotypeProfile, b: &PhenotypeProfile) -> u32 {
    a.comorbidities
        .flags()
        .iter()
        .zip(b.comorbidities.flags())
        .filter(|(x, y)| **x != *y)
        .count() as u32
}

/// A reference subject as seen by the selector.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub id: &'a str,
    pub profile: &'a PhenotypeProfile,
}

#[derive(Debug, Clone)]
struct Scored<'a> {
    id: &'a str,
    phenotype: f64,
    correction: u32,
}

/// Returns the ids of the `k` selected neighbours, nearest first.
pub fn select_neighbors<'a>(
    query: &PhenotypeProfile,
    database: &[Candidate<'a>],
    cfg: &KnnConfig,
    scales: &MetricScales,
) -> Result<Vec<&'a str>> {
    let pool = cfg.pool_size();
    if database.len() < pool {
        return Err(Error::DatabaseTooSmall {
            needed: pool,
            available: database.len(),
        });
    }

    let mut ranked: Vec<Scored<'a>> = database
        .iter()
        .map(|c| Scored {
            id: c.id,
            phenotype: phenotype_distance(query, c.profile, scales, cfg),
            correction: correction_distance(query, c.profile),
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.phenotype
            .total_cmp(&b.phenotype)
            .then_with(|| a.id.cmp(b.id))
    });
    ranked.truncate(pool);

    // Pruning order: larger correction distance first, then larger phenotype
    // distance, then larger id. Candidates with a comorbidity mismatch always
    // sort ahead of exact matches, so this one order covers both the
    // "enough mismatches" and the "fall back to phenotype distance" cases.
    let mut prune_order: Vec<usize> = (0..ranked.len()).collect();
    prune_order.sort_by(|&i, &j| prune_cmp(&ranked[j], &ranked[i]));
    let mut removed = vec![false; ranked.len()];
    for &i in prune_order.iter().take(cfg.k_prime) {
        removed[i] = true;
    }

    Ok(ranked
        .iter()
        .zip(&removed)
        .filter(|(_, r)| !**r)
        .map(|(s, _)| s.id)
        .collect())
}

fn prune_cmp(a: &Scored<'_>, b: &Scored<'_>) -> Ordering {
    a.correction
        .cmp(&b.correction)
        .then_with(|| a.phenotype.total_cmp(&b.phenotype))
        .then_with(|| a.id.cmp(b.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::{Comorbidities, Gender};

    fn profile(gender: Gender, age: f64, bmi: f64, c: [bool; 3]) -> PhenotypeProfile {
        PhenotypeProfile {
            gender,
            age,
            bmi,
            comorbidities: Comorbidities {
                hypertension: c[0],
                diabetes: c[1],
                hypothyroidism: c[2],
            },
        }
    }

    #[test]
    fn distance_examples() {
        let cfg = KnnConfig::default();
        let scales = MetricScales {
            age_scale: 12.0,
            bmi_scale: 3.0,
        };
        let a = profile(Gender::Male, 50.0, 27.0, [false; 3]);
        assert_eq!(phenotype_distance(&a, &a, &scales, &cfg), 0.0);

        let older = profile(Gender::Male, 62.0, 27.0, [false; 3]);
        assert_eq!(phenotype_distance(&a, &older, &scales, &cfg), 1.0);

        let female = profile(Gender::Female, 50.0, 27.0, [false; 3]);
        assert_eq!(phenotype_distance(&a, &female, &scales, &cfg), 1.0);
        assert_eq!(phenotype_distance(&female, &a, &scales, &cfg), 1.0);
    }

    #[test]
    fn correction_distance_examples() {
        let none = profile(Gender::Male, 40.0, 25.0, [false; 3]);
        let htn = profile(Gender::Male, 40.0, 25.0, [true, false, false]);
        let dm = profile(Gender::Male, 40.0, 25.0, [false, true, false]);
        let all = profile(Gender::Male, 40.0, 25.0, [true; 3]);
        assert_eq!(correction_distance(&htn, &htn), 0);
        assert_eq!(correction_distance(&htn, &dm), 2);
        assert_eq!(correction_distance(&all, &none), 3);
    }

    #[test]
    fn scales_fall_back_to_one_without_spread() {
        let p = profile(Gender::Male, 40.0, 25.0, [false; 3]);
        let s = MetricScales::from_profiles([&p, &p, &p]);
        assert_eq!(s, MetricScales::default());

        let ps: Vec<_> = [30.0, 40.0, 50.0]
            .iter()
            .map(|&age| profile(Gender::Male, age, 25.0, [false; 3]))
            .collect();
        let s = MetricScales::from_profiles(&ps);
        assert!((s.age_scale - 1.4826 * 10.0).abs() < 1e-12);
        assert_eq!(s.bmi_scale, 1.0);
    }

    #[test]
    fn prunes_largest_correction_distance() {
        // phenotype distances 1..4 via age, correction distances {0, 3, 0, 1}
        let query = profile(Gender::Male, 0.5, 25.0, [false; 3]);
        let ps = [
            profile(Gender::Male, 1.5, 25.0, [false; 3]),
            profile(Gender::Male, 2.5, 25.0, [true; 3]),
            profile(Gender::Male, 3.5, 25.0, [false; 3]),
            profile(Gender::Male, 4.5, 25.0, [true, false, false]),
        ];
        let ids = ["c1", "c2", "c3", "c4"];
        let db: Vec<Candidate> = ids
            .iter()
            .zip(&ps)
            .map(|(id, profile)| Candidate { id, profile })
            .collect();
        let cfg = KnnConfig {
            k: 2,
            k_prime: 2,
            ..KnnConfig::default()
        };
        let got = select_neighbors(&query, &db, &cfg, &MetricScales::default()).unwrap();
        assert_eq!(got, vec!["c1", "c3"]);
    }

    #[test]
    fn falls_back_to_phenotype_distance() {
        let query = profile(Gender::Male, 0.0, 25.0, [false; 3]);
        let ps: Vec<_> = (1..=5)
            .map(|i| profile(Gender::Male, i as f64, 25.0, [i == 1, false, false]))
            .collect();
        let ids = ["a", "b", "c", "d", "e"];
        let db: Vec<Candidate> = ids
            .iter()
            .zip(&ps)
            .map(|(id, profile)| Candidate { id, profile })
            .collect();
        let cfg = KnnConfig {
            k: 2,
            k_prime: 3,
            ..KnnConfig::default()
        };
        // "a" is the only mismatch, then the two farthest go
        let got = select_neighbors(&query, &db, &cfg, &MetricScales::default()).unwrap();
        assert_eq!(got, vec!["b", "c"]);
    }

    #[test]
    fn no_pruning_returns_distance_order() {
        let query = profile(Gender::Female, 30.0, 22.0, [false; 3]);
        let ps = [
            profile(Gender::Male, 30.0, 22.0, [false; 3]),
            profile(Gender::Female, 31.0, 22.0, [true; 3]),
            profile(Gender::Female, 30.0, 22.0, [false; 3]),
        ];
        let ids = ["x", "y", "z"];
        let db: Vec<Candidate> = ids
            .iter()
            .zip(&ps)
            .map(|(id, profile)| Candidate { id, profile })
            .collect();
        let cfg = KnnConfig {
            k: 3,
            k_prime: 0,
            gender_weight: 2.0,
            ..KnnConfig::default()
        };
        let got = select_neighbors(&query, &db, &cfg, &MetricScales::default()).unwrap();
        assert_eq!(got, vec!["z", "y", "x"]);
    }

    #[test]
    fn too_small_database() {
        let p = profile(Gender::Male, 30.0, 22.0, [false; 3]);
        let db = [Candidate { id: "a", profile: &p }];
        let err = select_neighbors(&p, &db, &KnnConfig::default(), &MetricScales::default());
        assert!(matches!(
            err,
            Err(Error::DatabaseTooSmall {
                needed: 20,
                available: 1
            })
        ));
    }
}
