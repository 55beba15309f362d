//! Concept-map performance scoring and cross-cluster comparison.
//!
//! Raters supply three counts per session (meaningful propositions,
//! effective hierarchical structures, valid examples); the tool enforces
//! the rubric weights (1, 5, 1), audits totals, and compares cluster
//! score distributions with a one-way ANOVA.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::clustering::Partition;
use crate::stats::{one_way_anova, AnovaOutput};
use crate::{Error, Result};

/// Rubric weights: proposition 1, hierarchy 5, example 1.
pub const PROPOSITION_POINTS: u32 = 1;
pub const HIERARCHY_POINTS: u32 = 5;
pub const EXAMPLE_POINTS: u32 = 1;

/// Audited concept-map score for one session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMapTally {
    pub propositions: u32,
    pub hierarchies: u32,
    pub examples: u32,
    pub total: u32,
}

/// Applies the rubric weights to the three rater-supplied counts.
pub fn score_concept_map(propositions: u32, hierarchies: u32, examples: u32) -> ConceptMapTally {
    ConceptMapTally {
        propositions,
        hierarchies,
        examples,
        total: propositions * PROPOSITION_POINTS
            + hierarchies * HIERARCHY_POINTS
            + examples * EXAMPLE_POINTS,
    }
}

/// Per-cluster score summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterScore {
    pub cluster: usize,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Cross-cluster performance comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub per_cluster: Vec<ClusterScore>,
    /// ANOVA over clusters with >= 2 members; absent when fewer than two
    /// such clusters exist.
    pub anova: Option<AnovaOutput>,
    /// Clusters excluded from the ANOVA for having fewer than 2 members.
    pub excluded_clusters: Vec<usize>,
    /// True when the ANOVA ran and found no significant difference at .05.
    pub no_significant_difference: Option<bool>,
}

/// Compares total scores across the partition's clusters.
///
/// Every sequence must be scored and assigned. Clusters with fewer than two
/// members are reported but excluded from the ANOVA with a warning entry.
pub fn cluster_performance(
    scores: &BTreeMap<String, f64>,
    partition: &Partition,
) -> Result<PerformanceReport> {
    for label in partition.labels() {
        if !scores.contains_key(label) {
            return Err(Error::Validation(format!("sequence '{label}' has no score")));
        }
    }

    let mut per_cluster = Vec::new();
    let mut groups = Vec::new();
    let mut excluded = Vec::new();
    for cluster in 1..=partition.k {
        let values: Vec<f64> = partition
            .members(cluster)
            .iter()
            .map(|label| scores[*label])
            .collect();
        per_cluster.push(ClusterScore {
            cluster,
            n: values.len(),
            mean: crate::stats::mean(&values),
            sd: crate::stats::sample_sd(&values),
        });
        if values.len() >= 2 {
            groups.push(values);
        } else {
            excluded.push(cluster);
        }
    }

    let anova = if groups.len() >= 2 {
        Some(one_way_anova(&groups)?)
    } else {
        None
    };
    let no_significant_difference = anova.as_ref().map(|a| a.result.p_value >= 0.05);
    Ok(PerformanceReport {
        per_cluster,
        anova,
        excluded_clusters: excluded,
        no_significant_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::anova_from_summary;
    use approx::assert_relative_eq;

    #[test]
    fn rubric_arithmetic() {
        assert_eq!(score_concept_map(10, 3, 5).total, 30);
        assert_eq!(score_concept_map(0, 0, 0).total, 0);
        assert_eq!(score_concept_map(1, 1, 1).total, 7);
    }

    #[test]
    fn total_is_linear_in_each_count() {
        let base = score_concept_map(4, 2, 3).total;
        assert_eq!(score_concept_map(5, 2, 3).total, base + 1);
        assert_eq!(score_concept_map(4, 3, 3).total, base + 5);
        assert_eq!(score_concept_map(4, 2, 4).total, base + 1);
    }

    fn partition_of(sizes: &[usize]) -> Partition {
        let mut labels = Vec::new();
        let mut assignment = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            for i in 0..s {
                labels.push(format!("c{c}s{i}"));
                assignment.push(c + 1);
            }
        }
        Partition::new(labels, assignment).unwrap()
    }

    #[test]
    fn planted_cluster_scores() {
        let p = partition_of(&[2, 2]);
        let scores: BTreeMap<String, f64> = p
            .labels()
            .iter()
            .zip([100.0, 100.0, 50.0, 50.0])
            .map(|(l, s)| (l.clone(), s))
            .collect();
        let report = cluster_performance(&scores, &p).unwrap();
        assert_eq!(report.per_cluster[0].mean, 100.0);
        assert_eq!(report.per_cluster[1].mean, 50.0);
        assert_eq!(report.per_cluster[0].sd, 0.0);
        assert_eq!(report.per_cluster[1].sd, 0.0);
    }

    #[test]
    fn matches_summary_anova_on_published_rows() {
        // cluster summaries: 92.60/23.67 n=5; 105.29/33.64 n=14; 77.60/28.18 n=5
        let p = partition_of(&[5, 14, 5]);
        let targets = [(92.60, 23.67, 5usize), (105.29, 33.64, 14), (77.60, 28.18, 5)];
        let mut scores = BTreeMap::new();
        let mut iter = p.labels().iter();
        for &(m, sd, n) in &targets {
            let vals = crate::stats::testutil::sample_with(m, sd, n);
            for v in vals {
                scores.insert(iter.next().unwrap().clone(), v);
            }
        }
        let report = cluster_performance(&scores, &p).unwrap();
        let direct = anova_from_summary(
            &[92.60, 105.29, 77.60],
            &[23.67, 33.64, 28.18],
            &[5, 14, 5],
        )
        .unwrap();
        let got = report.anova.unwrap();
        assert_relative_eq!(got.result.statistic, direct.result.statistic, max_relative = 1e-6);
        assert_eq!(report.no_significant_difference, Some(true));
        assert!(got.result.p_value > 0.05);
    }

    #[test]
    fn equal_scores_give_zero_f() {
        let p = partition_of(&[3, 3]);
        let scores: BTreeMap<String, f64> =
            p.labels().iter().map(|l| (l.clone(), 42.0)).collect();
        let report = cluster_performance(&scores, &p).unwrap();
        assert_eq!(report.anova.unwrap().result.statistic, 0.0);
    }

    #[test]
    fn tiny_clusters_excluded_with_warning() {
        let p = partition_of(&[1, 3, 2]);
        let scores: BTreeMap<String, f64> = p
            .labels()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as f64))
            .collect();
        let report = cluster_performance(&scores, &p).unwrap();
        assert_eq!(report.excluded_clusters, vec![1]);
        assert!(report.anova.is_some());
    }

    #[test]
    fn missing_score_is_an_error() {
        let p = partition_of(&[2, 2]);
        let scores = BTreeMap::new();
        assert!(cluster_performance(&scores, &p).is_err());
    }
}
