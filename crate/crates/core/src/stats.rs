//! Per-cluster code-frequency tables and the inferential battery run over
//! them: one-way ANOVA with Bonferroni-corrected post-hoc comparisons,
//! Levene's homogeneity test, and the Kruskal-Wallis cross-check.
//!
//! ANOVA is also computable straight from published summary rows
//! (mean / SD / n per group); with the sample-SD convention (n-1
//! denominator) the two routes agree exactly on matching data.

use serde::{Deserialize, Serialize};

use crate::clustering::Partition;
use crate::scheme::{CodingScheme, MultichannelSequence};
use crate::special::{tail_probability, TailDistribution};
use crate::{Error, Result};

/// Which test produced a [`TestResult`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Anova,
    Levene,
    KruskalWallis,
    TPosthoc,
}

/// Multiple-comparison correction applied to a p value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    Bonferroni,
}

/// Outcome of one hypothesis test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df1: f64,
    pub df2: Option<f64>,
    pub p_value: f64,
    pub method: Method,
    pub correction: Correction,
    /// Set when the statistic is undefined on the input (e.g. zero
    /// within-group variance everywhere) and a convention value is returned.
    pub degenerate: bool,
}

/// One pairwise post-hoc comparison (pooled-variance two-sample t).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosthocComparison {
    /// Zero-based indices of the compared groups.
    pub group_a: usize,
    pub group_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub statistic: f64,
    pub p_raw: f64,
    /// Bonferroni: min(1, m * p_raw) with m = k(k-1)/2 pairwise tests.
    pub p_corrected: f64,
}

impl PosthocComparison {
    /// True when the corrected p value clears the conventional .05 level.
    pub fn significant(&self) -> bool {
        self.p_corrected < 0.05
    }

    /// "a > b" / "b > a" by group means, for report output.
    pub fn direction(&self) -> std::cmp::Ordering {
        self.mean_a.partial_cmp(&self.mean_b).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// ANOVA outcome plus its post-hoc list.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnovaOutput {
    pub result: TestResult,
    pub posthoc: Vec<PosthocComparison>,
}

/// Group summaries sufficient for the ANOVA algebra.
#[derive(Clone, Debug)]
struct GroupSummary {
    n: f64,
    mean: f64,
    /// Sample variance, n-1 denominator.
    var: f64,
}

fn summarize(groups: &[Vec<f64>]) -> Result<Vec<GroupSummary>> {
    if groups.len() < 2 {
        return Err(Error::Validation(format!("need at least 2 groups, got {}", groups.len())));
    }
    groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.len() < 2 {
                return Err(Error::Validation(format!(
                    "group {i} has {} observations, need at least 2",
                    g.len()
                )));
            }
            Ok(GroupSummary {
                n: g.len() as f64,
                mean: mean(g),
                var: sample_var(g),
            })
        })
        .collect()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n-1 denominator; 0 for fewer than 2 values.
pub(crate) fn sample_var(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    sample_var(xs).sqrt()
}

fn anova_from_parts(parts: &[GroupSummary]) -> Result<AnovaOutput> {
    let k = parts.len() as f64;
    let n_total: f64 = parts.iter().map(|p| p.n).sum();
    let grand = parts.iter().map(|p| p.n * p.mean).sum::<f64>() / n_total;
    let ssb: f64 = parts.iter().map(|p| p.n * (p.mean - grand) * (p.mean - grand)).sum();
    let ssw: f64 = parts.iter().map(|p| (p.n - 1.0) * p.var).sum();
    let df1 = k - 1.0;
    let df2 = n_total - k;
    let msb = ssb / df1;
    let msw = ssw / df2;

    let (statistic, p_value, degenerate) = if msw > 0.0 {
        let f = msb / msw;
        (f, tail_probability(f, TailDistribution::F { d1: df1, d2: df2 })?, false)
    } else if msb > 0.0 {
        (f64::INFINITY, 0.0, true)
    } else {
        (0.0, 1.0, true) // no variance anywhere: F undefined, 0 by convention
    };

    // post-hoc: pooled-variance two-sample t on every pair, Bonferroni over
    // m = k(k-1)/2 comparisons
    let m_tests = (parts.len() * (parts.len() - 1) / 2) as f64;
    let mut posthoc = Vec::new();
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            let (a, b) = (&parts[i], &parts[j]);
            let df = a.n + b.n - 2.0;
            let pooled = ((a.n - 1.0) * a.var + (b.n - 1.0) * b.var) / df;
            let se2 = pooled * (1.0 / a.n + 1.0 / b.n);
            let diff = a.mean - b.mean;
            let (t, p_raw) = if se2 > 0.0 {
                let t = diff / se2.sqrt();
                // two-sided via t^2 ~ F(1, df)
                (t, tail_probability(t * t, TailDistribution::F { d1: 1.0, d2: df })?)
            } else if diff == 0.0 {
                (0.0, 1.0)
            } else {
                (diff.signum() * f64::INFINITY, 0.0)
            };
            posthoc.push(PosthocComparison {
                group_a: i,
                group_b: j,
                mean_a: a.mean,
                mean_b: b.mean,
                statistic: t,
                p_raw,
                p_corrected: (m_tests * p_raw).min(1.0),
            });
        }
    }

    Ok(AnovaOutput {
        result: TestResult {
            statistic,
            df1,
            df2: Some(df2),
            p_value,
            method: Method::Anova,
            correction: Correction::None,
            degenerate,
        },
        posthoc,
    })
}

/// One-way ANOVA over raw samples, F = MSB / MSW with df (k-1, N-k).
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaOutput> {
    anova_from_parts(&summarize(groups)?)
}

/// One-way ANOVA from per-group mean / sample SD / n. Identical F, df, and
/// p to [`one_way_anova`] on any raw data matching those summaries.
pub fn anova_from_summary(means: &[f64], sds: &[f64], ns: &[usize]) -> Result<AnovaOutput> {
    if means.len() != sds.len() || means.len() != ns.len() {
        return Err(Error::Validation("summary arrays have unequal lengths".into()));
    }
    if means.len() < 2 {
        return Err(Error::Validation("need at least 2 groups".into()));
    }
    let parts: Vec<GroupSummary> = means
        .iter()
        .zip(sds)
        .zip(ns)
        .map(|((&mean, &sd), &n)| {
            if n < 2 {
                return Err(Error::Validation(format!("group size {n} below 2")));
            }
            Ok(GroupSummary { n: n as f64, mean, var: sd * sd })
        })
        .collect::<Result<_>>()?;
    anova_from_parts(&parts)
}

/// Levene's test: W is the one-way ANOVA F computed on absolute deviations
/// from group means.
pub fn levene_test(groups: &[Vec<f64>]) -> Result<TestResult> {
    let deviations: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).abs()).collect()
        })
        .collect();
    let out = one_way_anova(&deviations)?;
    Ok(TestResult { method: Method::Levene, ..out.result })
}

/// Kruskal-Wallis H with midrank ties and the tie correction, p from
/// chi-square with k-1 df.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::Validation("need at least 2 groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::Validation("empty group".into()));
    }
    let mut pooled: Vec<(f64, usize)> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for &x in g {
            if !x.is_finite() {
                return Err(Error::Validation("non-finite observation".into()));
            }
            pooled.push((x, gi));
        }
    }
    let n = pooled.len() as f64;
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // midranks and tie counts
    let mut rank_sums = vec![0.0; groups.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        let midrank = (i + j + 1) as f64 / 2.0; // average of ranks i+1..=j
        for &(_, gi) in &pooled[i..j] {
            rank_sums[gi] += midrank;
        }
        tie_term += t * t * t - t;
        i = j;
    }

    let correction = 1.0 - tie_term / (n * n * n - n);
    let df = (groups.len() - 1) as f64;
    if correction <= 0.0 {
        // every pooled value identical
        return Ok(TestResult {
            statistic: 0.0,
            df1: df,
            df2: None,
            p_value: 1.0,
            method: Method::KruskalWallis,
            correction: Correction::None,
            degenerate: true,
        });
    }
    let h_raw = 12.0 / (n * (n + 1.0))
        * groups
            .iter()
            .enumerate()
            .map(|(gi, g)| rank_sums[gi] * rank_sums[gi] / g.len() as f64)
            .sum::<f64>()
        - 3.0 * (n + 1.0);
    let h = h_raw / correction;
    Ok(TestResult {
        statistic: h,
        df1: df,
        df2: None,
        p_value: tail_probability(h, TailDistribution::ChiSquare { d: df })?,
        method: Method::KruskalWallis,
        correction: Correction::None,
        degenerate: false,
    })
}

/// Per-sequence occurrence counts of one code within one cluster.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub code: String,
    pub cluster: usize,
    /// One count per member sequence, in cluster member (leaf) order.
    pub counts: Vec<u64>,
    pub mean: f64,
    pub sd: f64,
}

/// Code-by-cluster frequency table with per-row summaries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub rows: Vec<FrequencyRow>,
    pub n_clusters: usize,
}

impl FrequencyTable {
    /// The per-cluster samples for one code, ordered by cluster id. Feeds
    /// the cross-cluster tests.
    pub fn groups_for(&self, code: &str) -> Vec<Vec<f64>> {
        let mut by_cluster: Vec<Vec<f64>> = vec![Vec::new(); self.n_clusters];
        for row in self.rows.iter().filter(|r| r.code == code) {
            by_cluster[row.cluster - 1] = row.counts.iter().map(|&c| c as f64).collect();
        }
        by_cluster
    }
}

/// Counts each code's occurrences per sequence (one non-missing position
/// carrying the code = one occurrence), grouped by cluster.
pub fn code_frequencies(
    seqs: &[MultichannelSequence],
    partition: &Partition,
    scheme: &CodingScheme,
) -> Result<FrequencyTable> {
    // per-sequence counts in global code order
    let n_codes = scheme.n_codes();
    let mut code_offset = vec![0usize; scheme.n_channels()];
    let mut off = 0;
    for (ci, ch) in scheme.channels().iter().enumerate() {
        code_offset[ci] = off;
        off += ch.codes.len();
    }
    let mut per_seq = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let cluster = partition.cluster_of(&seq.session_id).ok_or_else(|| {
            Error::Validation(format!("sequence '{}' has no cluster assignment", seq.session_id))
        })?;
        let mut counts = vec![0u64; n_codes];
        for (ci, ch) in seq.states().iter().enumerate() {
            for state in ch.iter().flatten() {
                counts[code_offset[ci] + *state as usize] += 1;
            }
        }
        per_seq.push((seq.session_id.as_str(), cluster, counts));
    }

    let codes = scheme.all_codes();
    let mut rows = Vec::with_capacity(n_codes * partition.k);
    for (code_i, code) in codes.iter().enumerate() {
        for cluster in 1..=partition.k {
            // member order = partition leaf order
            let counts: Vec<u64> = partition
                .labels()
                .iter()
                .zip(partition.assignment())
                .filter(|(_, &c)| c == cluster)
                .filter_map(|(label, _)| {
                    per_seq
                        .iter()
                        .find(|(sid, _, _)| sid == label)
                        .map(|(_, _, counts)| counts[code_i])
                })
                .collect();
            let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            rows.push(FrequencyRow {
                code: code.to_string(),
                cluster,
                mean: if as_f64.is_empty() { 0.0 } else { mean(&as_f64) },
                sd: sample_sd(&as_f64),
                counts,
            });
        }
    }
    Ok(FrequencyTable { rows, n_clusters: partition.k })
}


#[cfg(test)]
mod tests {
    use super::testutil::{sample_with, NS, ROWS};
    use super::*;
    use crate::clustering::Partition;
    use crate::scheme::{build_sequences, CodedEvent, CodingScheme, ConflictPolicy, Modality};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constructed_samples_hit_their_summaries() {
        let xs = sample_with(105.43, 42.95, 14);
        assert_relative_eq!(mean(&xs), 105.43, max_relative = 1e-12);
        assert_relative_eq!(sample_sd(&xs), 42.95, max_relative = 1e-12);
    }

    #[test]
    fn summary_anova_reproduces_published_f_values() {
        for &(code, means, sds, f_expected) in ROWS {
            let out = anova_from_summary(&means, &sds, &NS).unwrap();
            assert!(
                (out.result.statistic - f_expected).abs() <= 0.05,
                "{code}: F = {} expected {f_expected}",
                out.result.statistic
            );
            assert_eq!(out.result.df1, 2.0);
            assert_eq!(out.result.df2, Some(21.0));
        }
    }

    #[test]
    fn raw_and_summary_paths_agree() {
        for &(_, means, sds, _) in ROWS {
            let groups: Vec<Vec<f64>> = means
                .iter()
                .zip(&sds)
                .zip(&NS)
                .map(|((&m, &s), &n)| sample_with(m, s, n))
                .collect();
            let raw = one_way_anova(&groups).unwrap();
            let summary = anova_from_summary(&means, &sds, &NS).unwrap();
            assert_relative_eq!(raw.result.statistic, summary.result.statistic, max_relative = 1e-9);
            assert_relative_eq!(raw.result.p_value, summary.result.p_value, max_relative = 1e-9);
        }
    }

    #[test]
    fn identical_groups_give_zero_f() {
        let g = sample_with(10.0, 2.0, 6);
        let out = one_way_anova(&[g.clone(), g.clone(), g]).unwrap();
        assert_relative_eq!(out.result.statistic, 0.0, epsilon = 1e-12);
        assert!(!out.result.degenerate);
    }

    #[test]
    fn constant_equal_groups_are_degenerate_zero() {
        let out = one_way_anova(&[vec![5.0, 5.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(out.result.statistic, 0.0);
        assert!(out.result.degenerate);
    }

    #[test]
    fn two_identical_summary_groups() {
        let out = anova_from_summary(&[3.0, 3.0], &[1.0, 1.0], &[5, 5]).unwrap();
        assert_eq!(out.result.statistic, 0.0);
    }

    #[test]
    fn small_groups_rejected() {
        assert!(one_way_anova(&[vec![1.0], vec![2.0, 3.0]]).is_err());
        assert!(anova_from_summary(&[1.0, 2.0], &[0.5, 0.5], &[1, 5]).is_err());
    }

    #[test]
    fn anova_shift_and_scale_invariance() {
        let groups = vec![
            sample_with(4.0, 1.0, 5),
            sample_with(6.0, 2.0, 7),
            sample_with(5.0, 1.5, 6),
        ];
        let base = one_way_anova(&groups).unwrap().result.statistic;
        let shifted: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|x| x + 100.0).collect())
            .collect();
        let scaled: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|x| x * 3.5).collect())
            .collect();
        assert_relative_eq!(one_way_anova(&shifted).unwrap().result.statistic, base, max_relative = 1e-9);
        assert_relative_eq!(one_way_anova(&scaled).unwrap().result.statistic, base, max_relative = 1e-9);
    }

    #[test]
    fn bonferroni_count_and_cap() {
        let groups = vec![
            sample_with(0.0, 1.0, 5),
            sample_with(0.1, 1.0, 5),
            sample_with(50.0, 1.0, 5),
            sample_with(0.2, 1.0, 5),
        ];
        let out = one_way_anova(&groups).unwrap();
        assert_eq!(out.posthoc.len(), 6); // k(k-1)/2 with k=4
        for c in &out.posthoc {
            assert_relative_eq!(c.p_corrected, (6.0 * c.p_raw).min(1.0), max_relative = 1e-12);
            assert!(c.p_corrected <= 1.0);
        }
        // the far-off group is significant against every other
        let hits: Vec<_> = out.posthoc.iter().filter(|c| c.significant()).collect();
        assert_eq!(hits.len(), 3);
        assert!(hits.iter().all(|c| c.group_a == 2 || c.group_b == 2));
    }

    #[test]
    fn levene_shifted_copy_is_zero() {
        let g = sample_with(5.0, 2.0, 8);
        let shifted: Vec<f64> = g.iter().map(|x| x + 42.0).collect();
        let w = levene_test(&[g, shifted]).unwrap();
        assert_relative_eq!(w.statistic, 0.0, epsilon = 1e-18);
        assert_eq!(w.method, Method::Levene);
    }

    #[test]
    fn levene_hand_example() {
        let a = vec![0.0, 0.0, 10.0, 10.0];
        let b = vec![4.0, 5.0, 5.0, 6.0];
        // |deviations|: a -> {5,5,5,5}, b -> {1,0,0,1}
        let w = levene_test(&[a, b]).unwrap();
        let check = one_way_anova(&[vec![5.0; 4], vec![1.0, 0.0, 0.0, 1.0]]).unwrap();
        assert_relative_eq!(w.statistic, check.result.statistic, max_relative = 1e-12);
        // deviation means 5 and 0.5, grand 2.75:
        // SSB = 4*(2.25)^2 + 4*(2.25)^2 = 40.5, SSW = 1, MSW = 1/6
        assert_relative_eq!(w.statistic, 40.5 / (1.0 / 6.0), max_relative = 1e-12);
    }

    #[test]
    fn levene_null_p_is_roughly_uniform() {
        let mut ps = Vec::new();
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pooled: Vec<f64> = (0..120).map(|_| rng.random::<f64>() * 10.0).collect();
            let groups = vec![
                pooled[0..40].to_vec(),
                pooled[40..80].to_vec(),
                pooled[80..120].to_vec(),
            ];
            ps.push(levene_test(&groups).unwrap().p_value);
        }
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = (ps[99] + ps[100]) / 2.0;
        assert!((0.2..=0.8).contains(&median), "median null p = {median}");
    }

    #[test]
    fn kruskal_wallis_no_ties_hand_value() {
        let h = kruskal_wallis(&[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ])
        .unwrap();
        assert_relative_eq!(h.statistic, 7.2, max_relative = 1e-12);
        assert_eq!(h.df1, 2.0);
    }

    #[test]
    fn kruskal_wallis_identical_groups() {
        let g = vec![3.0, 1.0, 4.0];
        let h = kruskal_wallis(&[g.clone(), g]).unwrap();
        assert_relative_eq!(h.statistic, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kruskal_wallis_all_equal_is_degenerate() {
        let h = kruskal_wallis(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        assert!(h.degenerate);
        assert_eq!(h.p_value, 1.0);
    }

    #[test]
    fn kruskal_wallis_rank_invariance() {
        let groups = vec![
            vec![1.0, 5.0, 5.0, 2.0],
            vec![3.0, 8.0, 2.5],
            vec![9.0, 0.5, 7.0, 7.0],
        ];
        let h1 = kruskal_wallis(&groups).unwrap().statistic;
        // strictly increasing transform x -> exp(x) + x^3
        let transformed: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|&x| x.exp() + x * x * x).collect())
            .collect();
        let h2 = kruskal_wallis(&transformed).unwrap().statistic;
        assert_relative_eq!(h1, h2, max_relative = 1e-12);
    }

    fn table2_scheme_events() -> (CodingScheme, Vec<CodedEvent>) {
        let scheme = CodingScheme::default_scheme();
        let ev = |sid: &str, unit: u64, codes: &[&str]| CodedEvent {
            session_id: sid.into(),
            unit_index: unit,
            actor_id: "a".into(),
            modality: Modality::Verbal,
            codes: codes.iter().map(|c| c.to_string()).collect(),
        };
        let events = vec![
            ev("s1", 0, &["Int-C"]),
            ev("s1", 1, &[]),
            ev("s1", 2, &["Int-C"]),
            ev("s2", 0, &["CM", "Int-C"]),
            ev("s3", 0, &["KS"]),
        ];
        (scheme, events)
    }

    #[test]
    fn code_frequencies_counts() {
        let (scheme, events) = table2_scheme_events();
        let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();
        let partition = Partition::new(
            vec!["s1".into(), "s2".into(), "s3".into()],
            vec![1, 1, 2],
        )
        .unwrap();
        let table = code_frequencies(&seqs, &partition, &scheme).unwrap();
        let row = |code: &str, cluster: usize| {
            table
                .rows
                .iter()
                .find(|r| r.code == code && r.cluster == cluster)
                .unwrap()
        };
        assert_eq!(row("Int-C", 1).counts, vec![2, 1]);
        assert_eq!(row("CM", 1).counts, vec![0, 1]);
        assert_eq!(row("KS", 2).counts, vec![1]);
        assert_eq!(row("KS", 1).counts, vec![0, 0]);
        assert_relative_eq!(row("Int-C", 1).mean, 1.5);
    }

    #[test]
    fn unassigned_sequence_is_an_error() {
        let (scheme, events) = table2_scheme_events();
        let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();
        let partition =
            Partition::new(vec!["s1".into(), "s2".into()], vec![1, 2]).unwrap();
        assert!(code_frequencies(&seqs, &partition, &scheme).is_err());
    }

    #[test]
    fn empty_sequence_counts_zero() {
        let scheme = CodingScheme::default_scheme();
        let seqs = build_sequences(&[], &scheme, ConflictPolicy::Error).unwrap();
        assert!(seqs.is_empty());
    }
}
