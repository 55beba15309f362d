//! Optimal-matching edit distance between multichannel sequences.
//!
//! The unit of comparison is the cross-channel state tuple at one position.
//! Substituting two tuples costs the per-channel substitution cost summed
//! over channels where both sides are observed and differ; a missing entry
//! on either side is free. Inserting or deleting a tuple charges the
//! per-channel indel cost for each observed entry (missing stays free), or
//! for every channel when the scheme's flat-indel alternative is selected.
//! [`om_distance`] minimizes total edit cost by dynamic programming over the
//! `(|A|+1) x (|B|+1)` lattice, which equals the minimum over all monotone
//! alignments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scheme::{CodeIdx, CodingScheme, MultichannelSequence};
use crate::{Error, Result};

/// Cross-channel state tuple at one sequence position, entries in scheme
/// channel order.
pub type PositionState = Vec<Option<CodeIdx>>;

/// Cost of substituting tuple `a` by tuple `b`.
///
/// Zero for equal or missing entries; identical tuples cost 0 and a tuple
/// that is missing everywhere substitutes for anything at no cost.
pub fn substitution_cost(a: &[Option<CodeIdx>], b: &[Option<CodeIdx>], scheme: &CodingScheme) -> f64 {
    let mut cost = 0.0;
    for (x, y) in a.iter().zip(b) {
        if let (Some(x), Some(y)) = (x, y) {
            if x != y {
                cost += scheme.substitution_cost_per_channel();
            }
        }
    }
    cost
}

/// Cost of inserting or deleting tuple `a`.
pub fn indel_cost(a: &[Option<CodeIdx>], scheme: &CodingScheme) -> f64 {
    if scheme.flat_indel() {
        return scheme.full_indel_cost();
    }
    a.iter().filter(|e| e.is_some()).count() as f64 * scheme.indel_cost_per_channel()
}

/// Length normalization of the pairwise distances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    /// Raw distances (sequence lengths are meaningful and kept).
    #[default]
    None,
    /// Divide by `max(|A|,|B|)` times the full per-position indel cost,
    /// mapping distances into [0, 1].
    MaxLen,
}

impl std::str::FromStr for Normalize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Normalize> {
        match s {
            "none" => Ok(Normalize::None),
            "maxlen" => Ok(Normalize::MaxLen),
            other => Err(Error::Validation(format!("unknown normalization '{other}'"))),
        }
    }
}

/// Minimum edit cost transforming `a` into `b`.
pub fn om_distance(
    a: &MultichannelSequence,
    b: &MultichannelSequence,
    scheme: &CodingScheme,
) -> f64 {
    let cols_a = columns(a);
    let cols_b = columns(b);
    om_distance_columns(&cols_a, &cols_b, scheme)
}

/// Column-major copy of a sequence: one tuple per position.
fn columns(seq: &MultichannelSequence) -> Vec<PositionState> {
    (0..seq.len()).map(|t| seq.position(t)).collect()
}

fn om_distance_columns(a: &[PositionState], b: &[PositionState], scheme: &CodingScheme) -> f64 {
    let m = a.len();
    let n = b.len();
    let indel_a: Vec<f64> = a.iter().map(|p| indel_cost(p, scheme)).collect();
    let indel_b: Vec<f64> = b.iter().map(|p| indel_cost(p, scheme)).collect();

    // prev[j] = cost of aligning a[..i] with b[..j]; two-row DP.
    let mut prev: Vec<f64> = Vec::with_capacity(n + 1);
    prev.push(0.0);
    for j in 0..n {
        prev.push(prev[j] + indel_b[j]);
    }
    let mut cur = vec![0.0; n + 1];

    for i in 0..m {
        cur[0] = prev[0] + indel_a[i];
        for j in 0..n {
            let sub = prev[j] + substitution_cost(&a[i], &b[j], scheme);
            let del = prev[j + 1] + indel_a[i];
            let ins = cur[j] + indel_b[j];
            cur[j + 1] = sub.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// Pairwise optimal-matching distances over a set of sequences.
///
/// Symmetric with a zero diagonal. On fully observed sequences the
/// distance is a metric; once missing states appear the zero-cost missing
/// substitution makes them behave as free wildcards, and the triangle
/// inequality can fail between partially observed sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    /// Row-major `n x n` values; symmetric with zero diagonal.
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major values, checking symmetry, the zero
    /// diagonal, and nonnegativity.
    pub fn from_values(labels: Vec<String>, values: Vec<f64>) -> Result<DistanceMatrix> {
        let n = labels.len();
        if values.len() != n * n {
            return Err(Error::Validation(format!(
                "distance matrix: {} values for {n} labels",
                values.len()
            )));
        }
        let m = DistanceMatrix { labels, values };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::Validation(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let d = self.get(i, j);
                if !(d >= 0.0) {
                    return Err(Error::Validation(format!("negative distance at ({i},{j})")));
                }
                if d != self.get(j, i) {
                    return Err(Error::Validation(format!("asymmetry at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Full pairwise distance matrix.
///
/// The upper triangle is computed in parallel into fixed slots, so the
/// result is identical for any worker count.
pub fn distance_matrix(
    seqs: &[MultichannelSequence],
    scheme: &CodingScheme,
    normalize: Normalize,
) -> Result<DistanceMatrix> {
    if seqs.len() < 2 {
        return Err(Error::Validation(format!(
            "distance matrix needs at least 2 sequences, got {}",
            seqs.len()
        )));
    }
    let n = seqs.len();
    let cols: Vec<Vec<PositionState>> = seqs.iter().map(columns).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let d = om_distance_columns(&cols[i], &cols[j], scheme);
            match normalize {
                Normalize::None => d,
                Normalize::MaxLen => {
                    let denom = cols[i].len().max(cols[j].len()) as f64 * scheme.full_indel_cost();
                    if denom > 0.0 {
                        d / denom
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();

    let mut values = vec![0.0; n * n];
    for (&(i, j), &d) in pairs.iter().zip(&dists) {
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    Ok(DistanceMatrix {
        labels: seqs.iter().map(|s| s.session_id.clone()).collect(),
        values,
    })
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn substitution_cost_cases() {
        let s = small_scheme(5, 3);
        let a = vec![Some(0), Some(1), Some(2), Some(0), Some(1)];
        assert_eq!(substitution_cost(&a, &a, &s), 0.0);

        let b = vec![Some(1), Some(1), Some(2), Some(1), Some(1)]; // differs in 2 channels
        assert_eq!(substitution_cost(&a, &b, &s), 2.0);

        let missing = vec![None; 5];
        assert_eq!(substitution_cost(&a, &missing, &s), 0.0);
        assert_eq!(substitution_cost(&missing, &b, &s), 0.0);
    }

    #[test]
    fn indel_cost_cases() {
        let s = small_scheme(5, 3);
        assert_eq!(indel_cost(&vec![None; 5], &s), 0.0);
        assert_eq!(indel_cost(&vec![Some(0), None, Some(1), None, Some(2)], &s), 3.0);
        assert_eq!(indel_cost(&vec![Some(0); 5], &s), 5.0);
    }

    #[test]
    fn flat_indel_charges_every_channel() {
        let channels = small_scheme(5, 3).channels().to_vec();
        let s = CodingScheme::new(channels, 1.0, 1.0, true).unwrap();
        assert_eq!(indel_cost(&vec![None; 5], &s), 5.0);
        assert_eq!(indel_cost(&vec![Some(0), None, None, None, None], &s), 5.0);
    }

    #[test]
    fn om_identical_is_zero() {
        let s = small_scheme(2, 3);
        let a = seq("a", vec![vec![Some(0), Some(1), None], vec![Some(2), None, Some(0)]], &s);
        assert_eq!(om_distance(&a, &a, &s), 0.0);
    }

    #[test]
    fn om_empty_vs_full_is_all_insertions() {
        let s = small_scheme(5, 3);
        let empty = seq("e", vec![vec![]; 5], &s);
        let full = seq("f", vec![vec![Some(0); 4]; 5], &s);
        assert_eq!(om_distance(&empty, &full, &s), 20.0);
        assert_eq!(om_distance(&full, &empty, &s), 20.0);
    }

    #[test]
    fn om_matches_brute_force() {
        let scheme = small_scheme(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..80 {
            let la = (trial % 7) as usize;
            let lb = (trial % 5 + 1) as usize;
            let a = random_seq("a", la, &scheme, 0.2, &mut rng);
            let b = random_seq("b", lb, &scheme, 0.2, &mut rng);
            let fast = om_distance(&a, &b, &scheme);
            let cols_a: Vec<_> = (0..a.len()).map(|t| a.position(t)).collect();
            let cols_b: Vec<_> = (0..b.len()).map(|t| b.position(t)).collect();
            let slow = brute_force_om(&cols_a, &cols_b, &scheme);
            assert_eq!(fast, slow, "trial {trial}");
        }
    }

    /// Classical Levenshtein, written against strings only, as a cross-check.
    fn levenshtein(a: &[CodeIdx], b: &[CodeIdx]) -> usize {
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        let mut cur = vec![0usize; b.len() + 1];
        for (i, &x) in a.iter().enumerate() {
            cur[0] = i + 1;
            for (j, &y) in b.iter().enumerate() {
                let cost = usize::from(x != y);
                cur[j + 1] = (cur[j] + 1).min(prev[j + 1] + 1).min(prev[j] + cost);
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        prev[b.len()]
    }

    #[test]
    fn om_degenerates_to_levenshtein() {
        let scheme = small_scheme(1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let a = random_seq("a", rng.random_range(0..9), &scheme, 0.0, &mut rng);
            let b = random_seq("b", rng.random_range(0..9), &scheme, 0.0, &mut rng);
            let xs: Vec<CodeIdx> = a.states()[0].iter().map(|s| s.unwrap()).collect();
            let ys: Vec<CodeIdx> = b.states()[0].iter().map(|s| s.unwrap()).collect();
            assert_eq!(om_distance(&a, &b, &scheme), levenshtein(&xs, &ys) as f64);
        }
    }

    #[test]
    fn matrix_of_identical_pair_is_zero() {
        let s = small_scheme(2, 2);
        let a = seq("a", vec![vec![Some(0), Some(1)], vec![None, Some(0)]], &s);
        let b = MultichannelSequence::new("b".into(), a.states().to_vec(), &s).unwrap();
        let m = distance_matrix(&[a, b], &s, Normalize::None).unwrap();
        assert_eq!(m.values(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn matrix_matches_pairwise_calls() {
        let s = small_scheme(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seqs: Vec<_> = (0..3)
            .map(|i| random_seq(&format!("s{i}"), 4 + i, &s, 0.2, &mut rng))
            .collect();
        let m = distance_matrix(&seqs, &s, Normalize::None).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), om_distance(&seqs[i], &seqs[j], &s));
            }
        }
        m.validate().unwrap();
    }

    #[test]
    fn matrix_deterministic_across_worker_counts() {
        let s = small_scheme(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seqs: Vec<_> = (0..24)
            .map(|i| random_seq(&format!("s{i:02}"), 6 + i % 5, &s, 0.2, &mut rng))
            .collect();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let m1 = single.install(|| distance_matrix(&seqs, &s, Normalize::None)).unwrap();
        let m8 = many.install(|| distance_matrix(&seqs, &s, Normalize::None)).unwrap();
        assert_eq!(m1, m8);
    }

    #[test]
    fn maxlen_normalization_bounds() {
        let s = small_scheme(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seqs: Vec<_> = (0..6)
            .map(|i| random_seq(&format!("s{i}"), 3 + i, &s, 0.3, &mut rng))
            .collect();
        let m = distance_matrix(&seqs, &s, Normalize::MaxLen).unwrap();
        assert!(m.values().iter().all(|&d| (0.0..=1.0).contains(&d)));
    }

    #[test]
    fn too_few_sequences_rejected() {
        let s = small_scheme(2, 2);
        let a = seq("a", vec![vec![Some(0)], vec![Some(1)]], &s);
        assert!(distance_matrix(std::slice::from_ref(&a), &s, Normalize::None).is_err());
    }
}
